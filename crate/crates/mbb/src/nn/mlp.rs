use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MbbError;

/// Fully-connected network: `tanh` on hidden layers, identity on the output.
///
/// Parameters are stored flat, layer by layer, weights (row-major,
/// `out x in`) followed by biases. `widths` holds every layer width
/// including input and output, so a `(64, 64)` net over an 11-dim state with
/// scalar output has `widths = [11, 64, 64, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values per layer from a single forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    /// One entry per layer, already passed through that layer's activation.
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("mlp has at least one layer")
    }
}

/// Batched analogue of [`Trace`]: row `i` of every matrix belongs to sample `i`.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    input: Array2<f64>,
    activations: Vec<Array2<f64>>,
}

impl BatchTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("mlp has at least one layer")
    }
}

impl Mlp {
    /// Builds a network with fan-in scaled uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        assert!(widths.iter().all(|&w| w > 0), "layer widths must be positive");
        let mut params = vec![0.0; Self::count_for(widths)];
        let mut net = Mlp { widths: widths.to_vec(), params: Vec::new() };
        let mut offset = 0;
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            for w in params[offset..offset + fan_in * fan_out].iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net.params = params;
        net
    }

    /// All-zero parameters; mostly useful in tests.
    pub fn zeros(widths: &[usize]) -> Self {
        Mlp { widths: widths.to_vec(), params: vec![0.0; Self::count_for(widths)] }
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self, MbbError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(MbbError::Config("invalid layer widths".into()));
        }
        if params.len() != Self::count_for(&widths) {
            return Err(MbbError::Config(format!(
                "parameter count {} does not match widths {:?} (expected {})",
                params.len(),
                widths,
                Self::count_for(&widths)
            )));
        }
        Ok(Mlp { widths, params })
    }

    fn count_for(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (weight_offset, bias_offset, in, out) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut offset = 0;
        for k in 0..l {
            offset += self.widths[k] * self.widths[k + 1] + self.widths[k + 1];
        }
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        (offset, offset + fan_in * fan_out, fan_in, fan_out)
    }

    fn check_input(&self, len: usize) -> Result<(), MbbError> {
        if len != self.in_dim() {
            return Err(MbbError::Config(format!(
                "input length {} does not match first layer width {}",
                len,
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Deterministic forward pass; errors on input dimension mismatch.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, MbbError> {
        self.check_input(input.len())?;
        Ok(self.forward_trace(input).activations.pop().unwrap())
    }

    /// Forward pass keeping per-layer activations for [`Mlp::backward`].
    ///
    /// Panics on dimension mismatch; callers on hot paths validate once.
    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        assert_eq!(input.len(), self.in_dim(), "mlp input dimension mismatch");
        let n_layers = self.num_layers();
        let mut activations = Vec::with_capacity(n_layers);
        let mut current: &[f64] = input;
        for l in 0..n_layers {
            let (wo, bo, fan_in, fan_out) = self.layer_offsets(l);
            let mut out = vec![0.0; fan_out];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &self.params[wo + j * fan_in..wo + (j + 1) * fan_in];
                let mut acc = self.params[bo + j];
                for (w, x) in row.iter().zip(current) {
                    acc += w * x;
                }
                *o = if l + 1 < n_layers { acc.tanh() } else { acc };
            }
            activations.push(out);
            current = activations.last().unwrap();
        }
        Trace { input: input.to_vec(), activations }
    }

    /// Accumulates `d(output_grad . output)/d(params)` into `grads` and
    /// returns the gradient with respect to the input.
    ///
    /// `grads` must have `param_count()` entries; contributions add onto
    /// whatever is already there so batches can accumulate sample by sample.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(output_grad.len(), self.out_dim(), "output grad dimension mismatch");
        assert_eq!(grads.len(), self.param_count(), "grad buffer size mismatch");
        let n_layers = self.num_layers();
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (wo, bo, fan_in, fan_out) = self.layer_offsets(l);
            let prev: &[f64] =
                if l == 0 { &trace.input } else { &trace.activations[l - 1] };
            // Hidden layers produced tanh(z); fold the activation derivative
            // into delta before touching the weights.
            if l + 1 < n_layers {
                let act = &trace.activations[l];
                for (d, a) in delta.iter_mut().zip(act) {
                    *d *= 1.0 - a * a;
                }
            }
            let mut prev_delta = vec![0.0; fan_in];
            for j in 0..fan_out {
                let dj = delta[j];
                grads[bo + j] += dj;
                let row = &self.params[wo + j * fan_in..wo + (j + 1) * fan_in];
                let grow = &mut grads[wo + j * fan_in..wo + (j + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += dj * prev[i];
                    prev_delta[i] += dj * row[i];
                }
            }
            delta = prev_delta;
        }
        delta
    }

    /// Batched forward pass over rows of `input` (`batch x in_dim`).
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> BatchTrace {
        assert_eq!(input.ncols(), self.in_dim(), "mlp batch input dimension mismatch");
        let n_layers = self.num_layers();
        let mut activations = Vec::with_capacity(n_layers);
        let mut current = input.to_owned();
        for l in 0..n_layers {
            let (wo, bo, fan_in, fan_out) = self.layer_offsets(l);
            let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[wo..wo + fan_in * fan_out])
                .expect("weight block shape");
            let b = &self.params[bo..bo + fan_out];
            let mut z = current.dot(&w.t());
            let bias = Array1::from_vec(b.to_vec());
            z += &bias;
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z.clone());
            current = z;
        }
        BatchTrace { input: input.to_owned(), activations }
    }

    /// Batched backward pass.
    ///
    /// Row `i` of `output_grads` weights sample `i`'s output; parameter
    /// gradients are summed over the batch into `grads` and the per-sample
    /// input gradients are returned (`batch x in_dim`).
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        output_grads: ArrayView2<f64>,
        grads: &mut [f64],
    ) -> Array2<f64> {
        assert_eq!(output_grads.ncols(), self.out_dim(), "batch output grad dimension mismatch");
        assert_eq!(output_grads.nrows(), trace.input.nrows(), "batch size mismatch");
        assert_eq!(grads.len(), self.param_count(), "grad buffer size mismatch");
        let n_layers = self.num_layers();
        let mut delta = output_grads.to_owned();
        for l in (0..n_layers).rev() {
            let (wo, bo, fan_in, fan_out) = self.layer_offsets(l);
            let prev = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
            if l + 1 < n_layers {
                let act = &trace.activations[l];
                delta.zip_mut_with(act, |d, a| *d *= 1.0 - a * a);
            }
            // dW = delta^T . prev, db = column sums of delta.
            let dw = delta.t().dot(prev);
            let gw = &mut grads[wo..wo + fan_in * fan_out];
            for (g, d) in gw.iter_mut().zip(dw.iter()) {
                *g += d;
            }
            let db = delta.sum_axis(ndarray::Axis(0));
            let gb = &mut grads[bo..bo + fan_out];
            for (g, d) in gb.iter_mut().zip(db.iter()) {
                *g += d;
            }
            let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[wo..wo + fan_in * fan_out])
                .expect("weight block shape");
            delta = delta.dot(&w);
        }
        delta
    }

    /// Convenience scalar forward for value/critic heads (`out_dim == 1`).
    pub fn forward_scalar(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(self.out_dim(), 1);
        let trace = self.forward_trace(input);
        trace.output()[0]
    }
}
