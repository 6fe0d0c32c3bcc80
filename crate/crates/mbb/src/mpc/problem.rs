use serde::{Deserialize, Serialize};

use crate::env::{car_deriv, quad_deriv, CarState, EnvConfig, EnvKind, GoalSpec, Obstacle, QuadParams, QuadState};
use crate::error::{MbbError, Result};

/// Maximum model state dimension across supported chassis.
pub const MPC_MAX_DIM: usize = 6;

/// Continuous-time model f̃ the trajectory optimizer integrates with forward
/// Euler. Controls are 2-dimensional for both chassis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chassis", rename_all = "snake_case")]
pub enum MpcModel {
    /// Unicycle (x, y, θ) with controls (v, ω).
    Car { v_max: f64, w_max: f64 },
    /// Planar quadrotor (x, v_x, z, v_z, ψ, ω) with per-rotor thrusts.
    Quad { params: QuadParams, f_min: f64, f_max: f64 },
}

impl MpcModel {
    pub fn state_dim(&self) -> usize {
        match self {
            MpcModel::Car { .. } => 3,
            MpcModel::Quad { .. } => 6,
        }
    }

    pub fn control_low(&self) -> [f64; 2] {
        match self {
            MpcModel::Car { v_max, w_max } => [-v_max, -w_max],
            MpcModel::Quad { f_min, .. } => [*f_min, *f_min],
        }
    }

    pub fn control_high(&self) -> [f64; 2] {
        match self {
            MpcModel::Car { v_max, w_max } => [*v_max, *w_max],
            MpcModel::Quad { f_max, .. } => [*f_max, *f_max],
        }
    }

    /// Indices of the planar position inside the state vector.
    pub fn position_indices(&self) -> (usize, usize) {
        match self {
            MpcModel::Car { .. } => (0, 1),
            MpcModel::Quad { .. } => (0, 2),
        }
    }

    pub fn position(&self, x: &[f64]) -> (f64, f64) {
        let (i, j) = self.position_indices();
        (x[i], x[j])
    }

    /// Continuous-time derivative, written into `out[..state_dim]`.
    pub fn deriv(&self, x: &[f64], u: [f64; 2], out: &mut [f64]) {
        match self {
            MpcModel::Car { .. } => {
                let d = car_deriv(&CarState { x: x[0], y: x[1], theta: x[2] }, u[0], u[1]);
                out[..3].copy_from_slice(&d);
            }
            MpcModel::Quad { params, .. } => {
                let s = QuadState {
                    x: x[0],
                    v_x: x[1],
                    z: x[2],
                    v_z: x[3],
                    psi: x[4],
                    omega: x[5],
                };
                let d = quad_deriv(&s, u[0], u[1], params);
                out[..6].copy_from_slice(&d);
            }
        }
    }

    /// Jacobians of the continuous derivative: `jx[i][j] = ∂f_i/∂x_j`,
    /// `ju[i][c] = ∂f_i/∂u_c`. Only the written entries are meaningful; the
    /// caller zeroes the buffers.
    pub fn jacobians(
        &self,
        x: &[f64],
        u: [f64; 2],
        jx: &mut [[f64; MPC_MAX_DIM]; MPC_MAX_DIM],
        ju: &mut [[f64; 2]; MPC_MAX_DIM],
    ) {
        match self {
            MpcModel::Car { .. } => {
                let (s, c) = x[2].sin_cos();
                jx[0][2] = -u[0] * s;
                jx[1][2] = u[0] * c;
                ju[0][0] = c;
                ju[1][0] = s;
                ju[2][1] = 1.0;
            }
            MpcModel::Quad { params: p, .. } => {
                let (s, c) = x[4].sin_cos();
                let thrust = u[0] + u[1];
                let cv = p.drag_v / p.mass;
                jx[0][1] = 1.0;
                jx[1][1] = -cv;
                jx[1][4] = thrust / p.mass * c;
                jx[2][3] = 1.0;
                jx[3][3] = -cv;
                jx[3][4] = -thrust / p.mass * s;
                jx[4][5] = 1.0;
                jx[5][5] = -p.drag_psi / p.inertia;
                ju[1][0] = s / p.mass;
                ju[1][1] = s / p.mass;
                ju[3][0] = c / p.mass;
                ju[3][1] = c / p.mass;
                ju[5][0] = p.arm / p.inertia;
                ju[5][1] = -p.arm / p.inertia;
            }
        }
    }
}

/// Penalty-method schedule and inner-iteration caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub outer_iters: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub inner_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { outer_iters: 8, penalty_init: 10.0, penalty_growth: 10.0, inner_iters: 500 }
    }
}

/// Finite-horizon obstacle-avoidance trajectory problem.
///
/// The objective is Σ_{k=1}^{H} γ^k (p_k − p_ref)ᵀQ(p_k − p_ref) +
/// Σ_{k=0}^{H-1} u_kᵀRu_k, subject to Euler dynamics, the control box, the
/// state box S̃ (`state_lo`/`state_hi`), per-step obstacle clearance beyond
/// `d_min`, and terminal membership x_H ∈ Γ₃ (`goal`). `sample_lo`/`sample_hi`
/// is the start-state box dataset generation draws from; for the car it is
/// the sub-box from which the goal is reachable within the horizon, since
/// H·T_s·v_max bounds the drivable path length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcProblem {
    pub horizon: usize,
    pub dt: f64,
    pub model: MpcModel,
    /// Diagonal of the position weight Q.
    pub q: [f64; 2],
    /// Diagonal of the control weight R.
    pub r: [f64; 2],
    /// Stage scaling; values above 1 emphasize late stages.
    pub gamma_mpc: f64,
    pub p_ref: [f64; 2],
    pub goal: GoalSpec,
    pub obstacles: Vec<Obstacle>,
    pub d_min: f64,
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub sample_lo: Vec<f64>,
    pub sample_hi: Vec<f64>,
    pub solver: SolverConfig,
}

/// Stand-in bound for state coordinates that are physically unconstrained;
/// finite so configurations stay plain JSON.
pub const UNBOUNDED: f64 = 1e6;

impl MpcProblem {
    /// Car instance: H=80, γ=1.1, Q=diag(10,10), R=diag(1,1) with the
    /// environment's geometry.
    pub fn car(env: &EnvConfig) -> Result<Self> {
        if env.kind != EnvKind::Car {
            return Err(MbbError::Config("MpcProblem::car needs a car env".into()));
        }
        env.validate()?;
        let b = env.bounds;
        let p_ref = match env.goal {
            GoalSpec::Disk { center, .. } => center,
            GoalSpec::Box { rect, .. } => {
                let c = rect.center();
                [c.0, c.1]
            }
        };
        let problem = MpcProblem {
            horizon: 80,
            dt: env.dt,
            model: MpcModel::Car { v_max: env.control_high[0], w_max: env.control_high[1] },
            q: [10.0, 10.0],
            r: [1.0, 1.0],
            gamma_mpc: 1.1,
            p_ref,
            goal: env.goal,
            obstacles: env.obstacles.clone(),
            d_min: env.d_min,
            state_lo: vec![b.x_min, b.y_min, -UNBOUNDED],
            state_hi: vec![b.x_max, b.y_max, UNBOUNDED],
            sample_lo: vec![-1.5, -1.5, -std::f64::consts::PI],
            sample_hi: vec![b.x_max, b.y_max, std::f64::consts::PI],
            solver: SolverConfig::default(),
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Quadrotor instance: H=140 with start states drawn from the whole 6-D
    /// state box, so the dataset contains both feasible and infeasible
    /// solves.
    pub fn quad(env: &EnvConfig) -> Result<Self> {
        let params = match (&env.kind, &env.quad) {
            (EnvKind::Car, _) | (_, None) => {
                return Err(MbbError::Config("MpcProblem::quad needs a quadrotor env".into()))
            }
            (_, Some(p)) => *p,
        };
        env.validate()?;
        let b = env.bounds;
        let psi = env.psi_bound.unwrap_or(std::f64::consts::FRAC_PI_2);
        let p_ref = match env.goal {
            GoalSpec::Disk { center, .. } => center,
            GoalSpec::Box { rect, .. } => {
                // Keep the reference inside the flyable box when the goal
                // region sticks out of it.
                let c = rect.center();
                [c.0.clamp(b.x_min, b.x_max), c.1.clamp(b.y_min, b.y_max)]
            }
        };
        let problem = MpcProblem {
            horizon: 140,
            dt: env.dt,
            model: MpcModel::Quad {
                params,
                f_min: env.control_low[0],
                f_max: env.control_high[0],
            },
            q: [10.0, 10.0],
            r: [0.05, 0.05],
            gamma_mpc: 1.05,
            p_ref,
            goal: env.goal,
            obstacles: env.obstacles.clone(),
            d_min: env.d_min,
            state_lo: vec![b.x_min, -UNBOUNDED, b.y_min, -UNBOUNDED, -psi, -UNBOUNDED],
            state_hi: vec![b.x_max, UNBOUNDED, b.y_max, UNBOUNDED, psi, UNBOUNDED],
            sample_lo: vec![b.x_min, -4.0, b.y_min, -4.0, -psi, -3.0],
            sample_hi: vec![b.x_max, 4.0, b.y_max, 4.0, psi, 3.0],
            solver: SolverConfig::default(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn for_env(env: &EnvConfig) -> Result<Self> {
        if env.kind == EnvKind::Car {
            MpcProblem::car(env)
        } else {
            MpcProblem::quad(env)
        }
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim();
        if self.horizon == 0 {
            return Err(MbbError::Config("horizon must be at least 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(MbbError::Config("sampling period must be positive".into()));
        }
        if self.d_min < 0.0 {
            return Err(MbbError::Config("d_min must be non-negative".into()));
        }
        if self.q.iter().chain(&self.r).any(|&w| w < 0.0) {
            return Err(MbbError::Config("Q and R diagonals must be non-negative".into()));
        }
        if self.gamma_mpc <= 0.0 {
            return Err(MbbError::Config("gamma_mpc must be positive".into()));
        }
        for (lo, hi) in [(&self.state_lo, &self.state_hi), (&self.sample_lo, &self.sample_hi)] {
            if lo.len() != d || hi.len() != d {
                return Err(MbbError::Config(format!(
                    "state boxes must match the {d}-dimensional model"
                )));
            }
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(MbbError::Config("state box is empty".into()));
            }
        }
        for o in &self.obstacles {
            o.rect()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_problems_validate() {
        MpcProblem::car(&EnvConfig::car_default()).unwrap();
        MpcProblem::quad(&EnvConfig::quad_default()).unwrap();
        MpcProblem::quad(&EnvConfig::trap_goal_default()).unwrap();
        assert!(MpcProblem::car(&EnvConfig::quad_default()).is_err());
        assert!(MpcProblem::quad(&EnvConfig::car_default()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = MpcProblem::quad(&EnvConfig::quad_default()).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: MpcProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn car_jacobians_match_finite_differences() {
        jacobian_check(&MpcModel::Car { v_max: 2.0, w_max: 2.0 }, &[0.3, -1.2, 0.9], [1.4, -0.6]);
    }

    #[test]
    fn quad_jacobians_match_finite_differences() {
        jacobian_check(
            &MpcModel::Quad { params: QuadParams::default(), f_min: 5.0, f_max: 11.0 },
            &[0.5, -0.8, 3.0, 0.4, 0.3, -0.7],
            [7.0, 6.2],
        );
    }

    fn jacobian_check(model: &MpcModel, x: &[f64], u: [f64; 2]) {
        let d = model.state_dim();
        let mut jx = [[0.0; MPC_MAX_DIM]; MPC_MAX_DIM];
        let mut ju = [[0.0; 2]; MPC_MAX_DIM];
        model.jacobians(x, u, &mut jx, &mut ju);
        let h = 1e-6;
        let mut fp = [0.0; MPC_MAX_DIM];
        let mut fm = [0.0; MPC_MAX_DIM];
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            model.deriv(&xp, u, &mut fp);
            model.deriv(&xm, u, &mut fm);
            for i in 0..d {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (jx[i][j] - fd).abs() < 1e-6,
                    "jx[{i}][{j}] = {} vs fd {fd}",
                    jx[i][j]
                );
            }
        }
        for c in 0..2 {
            let mut up = u;
            let mut um = u;
            up[c] += h;
            um[c] -= h;
            model.deriv(x, up, &mut fp);
            model.deriv(x, um, &mut fm);
            for i in 0..d {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (ju[i][c] - fd).abs() < 1e-6,
                    "ju[{i}][{c}] = {} vs fd {fd}",
                    ju[i][c]
                );
            }
        }
    }
}
