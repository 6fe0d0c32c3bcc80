use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::problem::MpcProblem;
use crate::error::{MbbError, Result};

/// Sampled starts must clear every obstacle by this much beyond `d_min`,
/// so the fixed initial state never sits on the feasibility boundary.
const START_MARGIN: f64 = 1e-3;

/// Draws `n` start states uniformly from the problem's sampling box,
/// rejecting states within `d_min + 1e-3` of an obstacle.
pub fn sample_initial_states(
    problem: &MpcProblem,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec<f64>>> {
    problem.validate()?;
    let d = problem.state_dim();
    let rects = problem
        .obstacles
        .iter()
        .map(|o| o.rect())
        .collect::<Result<Vec<_>>>()?;
    let (ix, iy) = problem.model.position_indices();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = 1000 * n.max(1);
    while out.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(MbbError::Config(
                "sampling box is almost entirely covered by obstacles".into(),
            ));
        }
        let mut x = vec![0.0; d];
        for i in 0..d {
            let (lo, hi) = (problem.sample_lo[i], problem.sample_hi[i]);
            x[i] = if lo == hi { lo } else { rng.random_range(lo..hi) };
        }
        let p = (x[ix], x[iy]);
        if rects.iter().all(|r| r.clearance(p) > problem.d_min + START_MARGIN) {
            out.push(x);
        }
    }
    Ok(out)
}
