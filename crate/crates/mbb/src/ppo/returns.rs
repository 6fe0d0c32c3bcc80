use crate::env::Trajectory;

/// TD(λ) returns G_t^λ for every action step of a trajectory.
///
/// Rewards are state-indexed: step t carries r(s_t) and the final state's
/// reward r(s_T) arrives at index T. The recursion is seeded at the episode
/// boundary with the exact value-to-go of s_T: its terminal reward when the
/// episode ended in a terminal region, or `value_fn(s_T)` for a timeout cut
/// when λ < 1 (truncated return when λ = 1). Interior bootstraps query
/// `value_fn`; terminal states are never bootstrapped through the network.
pub fn td_lambda_returns<F: Fn(&[f64]) -> f64>(
    traj: &Trajectory,
    value_fn: F,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let t_len = traj.len();
    let tail = if traj.is_timeout() && lambda < 1.0 {
        value_fn(&traj.final_obs)
    } else {
        traj.final_reward
    };
    let mut out = vec![0.0; t_len];
    let mut g_next = tail;
    for t in (0..t_len).rev() {
        let mixed = if lambda < 1.0 {
            let next_v =
                if t + 1 == t_len { tail } else { value_fn(&traj.steps[t + 1].obs) };
            (1.0 - lambda) * next_v + lambda * g_next
        } else {
            g_next
        };
        out[t] = traj.steps[t].reward + gamma * mixed;
        g_next = out[t];
    }
    out
}

/// Independent oracle: the λ-weighted n-step mixture computed by direct
/// summation, G_t^λ = (1-λ) Σ_{n=1}^{T-t-1} λ^{n-1} G_t^{(n)} +
/// λ^{T-t-1} G_t^{(T-t)}, where the n-step return bootstraps `value_fn` at
/// s_{t+n} and the longest term runs to the episode boundary value.
pub fn lambda_mixture_oracle<F: Fn(&[f64]) -> f64>(
    traj: &Trajectory,
    value_fn: F,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let t_len = traj.len();
    let tail = if traj.is_timeout() && lambda < 1.0 {
        value_fn(&traj.final_obs)
    } else {
        traj.final_reward
    };
    let mut out = vec![0.0; t_len];
    for t in 0..t_len {
        let span = t_len - t;
        let mut g = 0.0;
        for n in 1..=span {
            // n-step return from t by direct summation.
            let mut gn = 0.0;
            for u in 0..n {
                gn += gamma.powi(u as i32) * traj.steps[t + u].reward;
            }
            let boot =
                if n == span { tail } else { value_fn(&traj.steps[t + n].obs) };
            gn += gamma.powi(n as i32) * boot;
            let weight = if n == span {
                lambda.powi((span - 1) as i32)
            } else {
                (1.0 - lambda) * lambda.powi((n - 1) as i32)
            };
            g += weight * gn;
        }
        out[t] = g;
    }
    out
}
