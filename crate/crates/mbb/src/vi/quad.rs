use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridDim};
use super::sweep::{solve_vi, DiscreteActionSet, ViModel, ViResult};
use crate::env::{step_quad, EnvConfig, QuadState, Rect};
use crate::error::{MbbError, Result};

/// Low-dimensional quadrotor model for value iteration: forward-Euler planar
/// dynamics over the full 6-D state (x, v_x, z, v_z, ψ, ω), with the
/// environment's own goal/collision/trap sets.
///
/// Positions and pitch are left free so that transitions past the in-bounds
/// box land in the grid's padding cells, which classify as collision;
/// velocities are clamped into the grid's velocity box, a deliberate model
/// coarsening at speeds the solver does not resolve anyway.
pub struct QuadViModel {
    cfg: EnvConfig,
    rects: Vec<Rect>,
    velocity_limits: [f64; 3],
}

impl QuadViModel {
    pub fn new(cfg: EnvConfig, velocity_limits: [f64; 3]) -> Result<Self> {
        cfg.validate()?;
        if !cfg.kind.is_quad() {
            return Err(MbbError::Config("quadrotor value iteration needs a quadrotor env".into()));
        }
        if velocity_limits.iter().any(|&v| v <= 0.0) {
            return Err(MbbError::Config("velocity limits must be positive".into()));
        }
        let rects = cfg.obstacle_rects()?;
        Ok(QuadViModel { cfg, rects, velocity_limits })
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    fn state(x: &[f64]) -> QuadState {
        QuadState { x: x[0], v_x: x[1], z: x[2], v_z: x[3], psi: x[4], omega: x[5] }
    }
}

impl ViModel for QuadViModel {
    fn next_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        let params = self.cfg.quad.as_ref().expect("validated quad env");
        let next = step_quad(
            &Self::state(x),
            a[0],
            a[1],
            self.cfg.dt,
            self.cfg.control_low[0],
            self.cfg.control_high[0],
            params,
        );
        let [v, _, w] = self.velocity_limits;
        out[0] = next.x;
        out[1] = next.v_x.clamp(-v, v);
        out[2] = next.z;
        out[3] = next.v_z.clamp(-self.velocity_limits[1], self.velocity_limits[1]);
        out[4] = next.psi;
        out[5] = next.omega.clamp(-w, w);
    }

    fn reward(&self, _x: &[f64], _a: &[f64]) -> f64 {
        0.0
    }

    fn terminal_value_at(&self, x: &[f64]) -> Option<f64> {
        // Padded-grid node coordinates carry float error of a few ulp, which
        // would flip nodes sitting exactly on the in-bounds edge between
        // in-bounds and out-of-bounds. Snap onto the physical limits first;
        // the env itself treats the edge as in-bounds.
        let b = self.cfg.bounds;
        let psi_bound = self.cfg.psi_bound.unwrap_or(f64::INFINITY);
        let mut s = Self::state(x);
        s.x = snap(s.x, b.x_min, b.x_max);
        s.z = snap(s.z, b.y_min, b.y_max);
        s.psi = snap(s.psi, -psi_bound, psi_bound);
        let region = self.cfg.classify_quad(&s, &self.rects);
        region.is_terminal().then(|| self.cfg.region_reward(region))
    }
}

/// Solver settings for the 6-D quadrotor grid. This path exists for
/// completeness at coarse resolutions only and must be switched on
/// explicitly; the quadrotor's production warm start comes from MPC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadViConfig {
    pub enabled: bool,
    /// Node counts over (x, v_x, z, v_z, ψ, ω) covering the in-bounds box;
    /// the x, z, and ψ axes get one padding cell per side on top of these.
    pub grid_counts: [usize; 6],
    /// Half-widths of the (v_x, v_z, ω) boxes the grid covers.
    pub velocity_limits: [f64; 3],
    pub action_counts: [usize; 2],
    pub gamma: f64,
    pub temperature: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for QuadViConfig {
    fn default() -> Self {
        QuadViConfig {
            enabled: false,
            grid_counts: [11, 5, 11, 5, 7, 5],
            velocity_limits: [4.0, 4.0, 3.0],
            action_counts: [3, 3],
            gamma: 0.998,
            temperature: 1.0,
            tol: 1e-3,
            max_sweeps: 1000,
        }
    }
}

fn snap(v: f64, lo: f64, hi: f64) -> f64 {
    let eps = 1e-9;
    if (v - lo).abs() <= eps {
        lo
    } else if (v - hi).abs() <= eps {
        hi
    } else {
        v
    }
}

/// One padding cell past each end, so out-of-bounds nodes exist and carry the
/// collision value into interpolation at the boundary.
fn padded_dim(lo: f64, hi: f64, count: usize) -> GridDim {
    let spacing = (hi - lo) / (count.max(2) - 1) as f64;
    GridDim { lo: lo - spacing, hi: hi + spacing, count: count.max(2) + 2, periodic: false }
}

impl QuadViConfig {
    pub fn grid(&self, env: &EnvConfig) -> Result<Grid> {
        let b = env.bounds;
        let psi = env
            .psi_bound
            .ok_or_else(|| MbbError::Config("quadrotor env must set psi_bound".into()))?;
        let [v_x, v_z, w] = self.velocity_limits;
        let c = self.grid_counts;
        Grid::new(vec![
            padded_dim(b.x_min, b.x_max, c[0]),
            GridDim { lo: -v_x, hi: v_x, count: c[1], periodic: false },
            padded_dim(b.y_min, b.y_max, c[2]),
            GridDim { lo: -v_z, hi: v_z, count: c[3], periodic: false },
            padded_dim(-psi, psi, c[4]),
            GridDim { lo: -w, hi: w, count: c[5], periodic: false },
        ])
    }

    pub fn actions(&self, env: &EnvConfig) -> DiscreteActionSet {
        DiscreteActionSet::linspace_product(
            &env.control_low,
            &env.control_high,
            &self.action_counts,
        )
    }
}

/// Coarse 6-D quadrotor solve through the generic sweep. Refuses to run
/// unless explicitly enabled.
pub fn solve_vi_quad(env: &EnvConfig, vi: &QuadViConfig) -> Result<ViResult> {
    if !vi.enabled {
        return Err(MbbError::Config(
            "quadrotor value iteration is disabled by default (coarse fallback); \
             set enabled=true or use the MPC warm start"
                .into(),
        ));
    }
    let model = QuadViModel::new(env.clone(), vi.velocity_limits)?;
    let grid = vi.grid(env)?;
    let actions = vi.actions(env);
    solve_vi(&grid, &actions, &model, vi.gamma, vi.temperature, vi.tol, vi.max_sweeps)
}
