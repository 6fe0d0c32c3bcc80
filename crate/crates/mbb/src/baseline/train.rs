use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::ValueDataset;
use crate::error::{MbbError, Result};
use crate::nn::{Adam, Mlp};

/// Guard below which a feature or label spread counts as constant and the
/// scale divisor is pinned to one.
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    Fixed,
    Updated,
}

/// Value-function baseline: an MLP over the full observed state, trained on
/// model values and queried during policy-gradient estimation. Inputs are
/// whitened and labels standardized with statistics frozen at training time
/// and stored in the checkpoint, so queries are self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub net: Mlp,
    pub variant: BaselineVariant,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
    /// Iteration indices at which an update pass ran (Updated variant).
    pub updates: Vec<usize>,
}

impl Baseline {
    pub fn new(net: Mlp, variant: BaselineVariant) -> Baseline {
        let d = net.in_dim();
        Baseline {
            net,
            variant,
            input_mean: vec![0.0; d],
            input_std: vec![1.0; d],
            label_mean: 0.0,
            label_std: 1.0,
            updates: Vec::new(),
        }
    }

    pub fn whiten(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    /// Baseline value b(s) in raw reward units.
    pub fn value(&self, obs: &[f64]) -> f64 {
        self.label_mean + self.label_std * self.net.forward_scalar(&self.whiten(obs))
    }

    /// Hash of the exact parameter bits; detects any drift across iterations.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for &p in self.net.params() {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Baseline> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Training summary in raw label units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_train_mse: f64,
    pub holdout_mse: f64,
    pub label_variance: f64,
    pub wall_seconds: f64,
    /// Environment interactions consumed building the dataset; zero here
    /// because supervised regression never steps the environment.
    pub env_samples: usize,
    pub epochs: usize,
}

fn column_stats(rows: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let mut std = vec![0.0; dim];
    for r in rows {
        for (s, (&x, &m)) in std.iter_mut().zip(r.iter().zip(&mean)) {
            *s += (x - m) * (x - m) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt();
        if *s < STD_FLOOR {
            *s = 1.0;
        }
    }
    (mean, std)
}

fn scalar_stats(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut std = var.sqrt();
    if std < STD_FLOOR {
        std = 1.0;
    }
    (mean, std)
}

/// Mean squared error of the baseline over index set `idx`, raw units.
fn raw_mse(b: &Baseline, ds: &ValueDataset, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter()
        .map(|&i| {
            let e = b.value(&ds.states[i]) - ds.values[i];
            e * e
        })
        .sum::<f64>()
        / idx.len() as f64
}

/// Supervised regression of the baseline net onto the dataset labels:
/// minibatch Adam on the MSE in standardized space, with a deterministic
/// 90/10 train/holdout split. Divergence (non-finite loss) aborts with a
/// diagnostic pointing at the learning rate.
pub fn train_baseline(
    dataset: &ValueDataset,
    baseline: &mut Baseline,
    epochs: usize,
    lr: f64,
    batch: usize,
    rng: &mut ChaCha12Rng,
) -> Result<TrainReport> {
    let start = Instant::now();
    if dataset.is_empty() {
        return Err(MbbError::Config("cannot train on an empty dataset".into()));
    }
    let dim = dataset.states[0].len();
    if dim != baseline.net.in_dim() {
        return Err(MbbError::Config(format!(
            "net expects {} inputs, dataset has {dim}",
            baseline.net.in_dim()
        )));
    }
    let n = dataset.len();

    let (im, is) = column_stats(&dataset.states, dim);
    let (lm, ls) = scalar_stats(&dataset.values);
    baseline.input_mean = im;
    baseline.input_std = is;
    baseline.label_mean = lm;
    baseline.label_std = ls;
    let (_, label_variance_raw) = {
        let (m, _) = scalar_stats(&dataset.values);
        let var = dataset.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        (m, var)
    };

    // Standardized copies, row-major.
    let mut xs = Array2::zeros((n, dim));
    let mut ys = vec![0.0; n];
    for i in 0..n {
        let w = baseline.whiten(&dataset.states[i]);
        for (j, x) in w.into_iter().enumerate() {
            xs[[i, j]] = x;
        }
        ys[i] = (dataset.values[i] - lm) / ls;
    }

    // Deterministic split: shuffle indices once, last 10% (at least one
    // sample when n > 1) held out.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let holdout_n = if n > 1 { (n / 10).max(1) } else { 0 };
    let holdout: Vec<usize> = order[n - holdout_n..].to_vec();
    let mut train: Vec<usize> = order[..n - holdout_n].to_vec();

    let mut adam = Adam::new(baseline.net.param_count(), lr);
    let mut grads = vec![0.0; baseline.net.param_count()];
    let batch = batch.max(1);
    for _ in 0..epochs {
        train.shuffle(rng);
        let mut epoch_sse = 0.0;
        for chunk in train.chunks(batch) {
            let m = chunk.len();
            let mut xb = Array2::zeros((m, dim));
            for (r, &i) in chunk.iter().enumerate() {
                for j in 0..dim {
                    xb[[r, j]] = xs[[i, j]];
                }
            }
            let trace = baseline.net.forward_batch(xb.view());
            let mut og = Array2::zeros((m, 1));
            for (r, &i) in chunk.iter().enumerate() {
                let e = trace.output()[[r, 0]] - ys[i];
                epoch_sse += e * e;
                og[[r, 0]] = 2.0 * e / m as f64;
            }
            grads.fill(0.0);
            baseline.net.backward_batch(&trace, og.view(), &mut grads);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(MbbError::Numerical(format!(
                    "training diverged (non-finite gradient); lower the learning rate from {lr}"
                )));
            }
            adam.apply(baseline.net.params_mut(), &grads);
        }
        let epoch_mse = epoch_sse / train.len().max(1) as f64;
        if !epoch_mse.is_finite() {
            return Err(MbbError::Numerical(format!(
                "training diverged (non-finite loss); lower the learning rate from {lr}"
            )));
        }
    }

    // Raw-unit errors through the public query path; a size-1 dataset has no
    // holdout, so report the training error there.
    let final_train_mse = raw_mse(baseline, dataset, &train);
    let holdout_mse =
        if holdout.is_empty() { final_train_mse } else { raw_mse(baseline, dataset, &holdout) };
    Ok(TrainReport {
        final_train_mse,
        holdout_mse,
        label_variance: label_variance_raw,
        wall_seconds: start.elapsed().as_secs_f64(),
        env_samples: 0,
        epochs,
    })
}

/// Regression onto caller-supplied raw targets with the baseline's frozen
/// normalization and a caller-owned optimizer, so repeated refits against a
/// drifting target (the on-policy value function) keep Adam's moments warm.
/// Returns the raw-unit MSE before and after.
pub fn fit_baseline_to_targets(
    baseline: &mut Baseline,
    states: &[Vec<f64>],
    targets: &[f64],
    epochs: usize,
    batch: usize,
    adam: &mut Adam,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, f64)> {
    if states.is_empty() || states.len() != targets.len() {
        return Err(MbbError::Config(format!(
            "state/target mismatch: {} vs {}",
            states.len(),
            targets.len()
        )));
    }
    let n = states.len();
    let dim = baseline.net.in_dim();
    let mut xs = Array2::zeros((n, dim));
    let mut ys = vec![0.0; n];
    for i in 0..n {
        let w = baseline.whiten(&states[i]);
        for (j, x) in w.into_iter().enumerate() {
            xs[[i, j]] = x;
        }
        ys[i] = (targets[i] - baseline.label_mean) / baseline.label_std;
    }
    let mse_raw = |b: &Baseline| -> f64 {
        states
            .iter()
            .zip(targets)
            .map(|(s, &t)| {
                let e = b.value(s) - t;
                e * e
            })
            .sum::<f64>()
            / n as f64
    };
    let before = mse_raw(baseline);
    let mut grads = vec![0.0; baseline.net.param_count()];
    let mut order: Vec<usize> = (0..n).collect();
    let batch = batch.max(1);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let m = chunk.len();
            let mut xb = Array2::zeros((m, dim));
            for (r, &i) in chunk.iter().enumerate() {
                for j in 0..dim {
                    xb[[r, j]] = xs[[i, j]];
                }
            }
            let trace = baseline.net.forward_batch(xb.view());
            let mut og = Array2::zeros((m, 1));
            for (r, &i) in chunk.iter().enumerate() {
                og[[r, 0]] = 2.0 * (trace.output()[[r, 0]] - ys[i]) / m as f64;
            }
            grads.fill(0.0);
            baseline.net.backward_batch(&trace, og.view(), &mut grads);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(MbbError::Numerical(format!(
                    "value regression diverged; lower the learning rate from {}",
                    adam.lr()
                )));
            }
            adam.apply(baseline.net.params_mut(), &grads);
        }
    }
    Ok((before, mse_raw(baseline)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::dataset::DatasetSource;
    use rand::{Rng, SeedableRng};

    fn constant_dataset(n: usize, dim: usize, c: f64, rng: &mut ChaCha12Rng) -> ValueDataset {
        let states =
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        ValueDataset {
            states,
            values: vec![c; n],
            source: DatasetSource::Vi,
            wall_seconds: 0.0,
            traj_lens: Vec::new(),
        }
    }

    #[test]
    fn constant_labels_learned_within_one_percent() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let c = 250.0;
        let ds = constant_dataset(200, 4, c, &mut rng);
        let net = Mlp::new(&[4, 16, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        train_baseline(&ds, &mut b, 60, 1e-2, 32, &mut rng).unwrap();
        for s in ds.states.iter().take(20) {
            let rel = (b.value(s) - c).abs() / c.abs();
            assert!(rel < 0.01, "relative error {rel}");
        }
    }

    #[test]
    fn single_pair_is_fit_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let ds = ValueDataset {
            states: vec![vec![0.3, -1.2, 0.8]],
            values: vec![-42.0],
            source: DatasetSource::Mpc,
            wall_seconds: 0.0,
            traj_lens: vec![1],
        };
        let net = Mlp::new(&[3, 8, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        let rep = train_baseline(&ds, &mut b, 400, 3e-2, 1, &mut rng).unwrap();
        // Constant-label standardization pins the scale to one, so the net
        // only has to drive its output to zero.
        assert!((b.value(&ds.states[0]) + 42.0).abs() < 1e-3);
        assert!(rep.holdout_mse < 1e-6);
    }

    #[test]
    fn linear_labels_generalize_to_holdout() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 600;
        let states: Vec<Vec<f64>> =
            (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let values: Vec<f64> =
            states.iter().map(|s| 100.0 * s[0] - 40.0 * s[1] + 10.0 * s[2] + 5.0).collect();
        let ds = ValueDataset {
            states,
            values,
            source: DatasetSource::Mpc,
            wall_seconds: 0.0,
            traj_lens: Vec::new(),
        };
        let net = Mlp::new(&[3, 32, 32, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        let rep = train_baseline(&ds, &mut b, 150, 5e-3, 64, &mut rng).unwrap();
        assert!(
            rep.holdout_mse < 0.05 * rep.label_variance,
            "holdout {} vs variance {}",
            rep.holdout_mse,
            rep.label_variance
        );
    }

    #[test]
    fn divergent_learning_rate_aborts_with_diagnostic() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let ds = constant_dataset(64, 3, 7.0, &mut rng);
        let net = Mlp::new(&[3, 16, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        let err = train_baseline(&ds, &mut b, 200, 1e200, 16, &mut rng).unwrap_err();
        assert!(err.to_string().contains("learning rate"), "got: {err}");
    }

    #[test]
    fn checkpoint_round_trips_with_stats() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let ds = constant_dataset(50, 2, 3.0, &mut rng);
        let net = Mlp::new(&[2, 8, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Updated);
        train_baseline(&ds, &mut b, 10, 1e-2, 16, &mut rng).unwrap();
        b.updates.push(17);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.json");
        b.save_json(&path).unwrap();
        let back = Baseline::load_json(&path).unwrap();
        assert_eq!(b, back);
        assert_eq!(b.param_hash(), back.param_hash());
        assert_eq!(b.value(&ds.states[0]), back.value(&ds.states[0]));
    }

    #[test]
    fn refit_to_targets_reduces_error_and_respects_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let net = Mlp::new(&[2, 16, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        b.label_mean = 100.0;
        b.label_std = 50.0;
        let states: Vec<Vec<f64>> =
            (0..200).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<f64> = states.iter().map(|s| 120.0 + 30.0 * s[0]).collect();
        let mut adam = Adam::new(b.net.param_count(), 1e-2);
        let (before, after) =
            fit_baseline_to_targets(&mut b, &states, &targets, 80, 32, &mut adam, &mut rng)
                .unwrap();
        assert!(after < before, "{after} !< {before}");
        assert!(after < 1.0, "raw MSE {after}");
        // Frozen label stats survive the refit.
        assert_eq!(b.label_mean, 100.0);
        assert_eq!(b.label_std, 50.0);
    }

    #[test]
    fn refit_rejects_mismatched_lengths() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let net = Mlp::new(&[2, 4, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        let mut adam = Adam::new(b.net.param_count(), 1e-3);
        let err = fit_baseline_to_targets(
            &mut b,
            &[vec![0.0, 0.0]],
            &[1.0, 2.0],
            1,
            8,
            &mut adam,
            &mut rng,
        )
        .unwrap_err();
        assert!(err.to_string().contains("mismatch"));
    }

    #[test]
    fn param_hash_tracks_exact_bits() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let net = Mlp::new(&[2, 4, 1], &mut rng);
        let mut b = Baseline::new(net, BaselineVariant::Fixed);
        let h0 = b.param_hash();
        assert_eq!(h0, b.param_hash());
        // Flip the lowest mantissa bit: invisible to any tolerance-based
        // comparison, but the hash must move.
        let p = &mut b.net.params_mut()[0];
        *p = f64::from_bits(p.to_bits() ^ 1);
        assert_ne!(h0, b.param_hash());
    }
}
