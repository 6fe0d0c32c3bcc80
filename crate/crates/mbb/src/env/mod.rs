//! Simulated navigation environments with ray-cast lidar and sparse rewards.
//!
//! Three tasks share one chassis: a differential-drive car in a square yard,
//! a planar quadrotor in a vertical corridor, and the quadrotor's Trap-Goal
//! variant with a tempting low-reward region. The full observed state is the
//! low-dimensional pose/velocity vector concatenated with 8 lidar ranges;
//! rewards are +1000 on the goal set, -400 on collision, +100 on the trap,
//! and 0 elsewhere, with the first three terminal.

mod car;
mod config;
mod geometry;
mod lidar;
mod quad;
mod rollout;

pub use car::{car_deriv, step_car, wrap_angle, CarState};
pub use config::{
    EnvConfig, EnvKind, GoalSpec, LidarConfig, Region, RewardConstants, StartSpec, TrapSpec,
};
pub use geometry::{Obstacle, Rect};
pub use lidar::lidar_scan;
pub use quad::{quad_deriv, step_quad, QuadParams, QuadState};
pub use rollout::{rollout, Agent, StepRecord, Terminal, Trajectory};

use rand::Rng;

use crate::error::Result;

/// Internal (low-dimensional) state of whichever chassis is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InternalState {
    Car(CarState),
    Quad(QuadState),
}

impl InternalState {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            InternalState::Car(s) => s.as_array().to_vec(),
            InternalState::Quad(s) => s.as_array().to_vec(),
        }
    }

    /// Planar pose (position, heading) used for lidar and collision queries;
    /// the quadrotor maps (x, z, ψ).
    pub fn pose(&self) -> (f64, f64, f64) {
        match self {
            InternalState::Car(s) => (s.x, s.y, s.theta),
            InternalState::Quad(s) => (s.x, s.z, s.psi),
        }
    }
}

/// Result of one environment transition. `reward` is the reward of the state
/// arrived in, matching the state-indexed return convention Σ γ^t r(s_t).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub region: Region,
}

/// A navigation environment instance. Owns its episode state; independent
/// instances share nothing.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    rects: Vec<Rect>,
    state: InternalState,
    region: Region,
    steps: usize,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let rects = cfg.obstacle_rects()?;
        let (cx, cy) = cfg.start.rect.center();
        let state = if cfg.kind.is_quad() {
            InternalState::Quad(QuadState { x: cx, v_x: 0.0, z: cy, v_z: 0.0, psi: 0.0, omega: 0.0 })
        } else {
            InternalState::Car(CarState { x: cx, y: cy, theta: 0.0 })
        };
        let mut env = Env { cfg, rects, state, region: Region::Interior, steps: 0 };
        env.region = env.classify(&env.state);
        Ok(env)
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn obstacle_rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim()
    }

    pub fn state(&self) -> &InternalState {
        &self.state
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Episode is over: terminal region reached or step budget exhausted.
    pub fn done(&self) -> bool {
        self.region.is_terminal() || self.steps >= self.cfg.max_steps
    }

    pub fn classify(&self, state: &InternalState) -> Region {
        match state {
            InternalState::Car(s) => self.cfg.classify_car(s, &self.rects),
            InternalState::Quad(s) => self.cfg.classify_quad(s, &self.rects),
        }
    }

    /// Samples a start state: position uniform in the start box; car heading
    /// uniform in a cone aimed at the workspace center; quadrotor at rest.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let r = self.cfg.start.rect;
        let x = rng.random_range(r.x_min..=r.x_max);
        let y = rng.random_range(r.y_min..=r.y_max);
        self.state = if self.cfg.kind.is_quad() {
            InternalState::Quad(QuadState { x, v_x: 0.0, z: y, v_z: 0.0, psi: 0.0, omega: 0.0 })
        } else {
            let aim = (-y).atan2(-x);
            let cone = self.cfg.start.heading_cone;
            let theta = if cone > 0.0 { aim + rng.random_range(-cone..=cone) } else { aim };
            InternalState::Car(CarState { x, y, theta: wrap_angle(theta) })
        };
        self.region = self.classify(&self.state);
        self.steps = 0;
        self.observe()
    }

    /// Places the environment in a given internal state (MPC labeling, VI
    /// dataset generation, analysis replays).
    pub fn reset_to(&mut self, internal: InternalState) -> Vec<f64> {
        self.state = internal;
        self.region = self.classify(&self.state);
        self.steps = 0;
        self.observe()
    }

    /// Full observed state: internal state followed by the lidar scan.
    pub fn observe(&self) -> Vec<f64> {
        let mut obs = self.state.to_vec();
        obs.extend(self.scan());
        obs
    }

    pub fn scan(&self) -> Vec<f64> {
        lidar_scan(
            self.state.pose(),
            &self.cfg.walls,
            &self.rects,
            self.cfg.lidar.beams,
            self.cfg.lidar.max_range,
        )
    }

    /// Applies one control. Must not be called on a finished episode.
    pub fn step(&mut self, action: &[f64]) -> StepOutcome {
        assert!(!self.done(), "step on a finished episode");
        assert_eq!(action.len(), 2);
        let b = self.cfg.bounds;
        self.state = match self.state {
            InternalState::Car(s) => {
                let next = step_car(
                    &s,
                    action[0],
                    action[1],
                    self.cfg.dt,
                    self.cfg.control_high[0],
                    self.cfg.control_high[1],
                );
                // Position clamped to the workspace box; classify() reads the
                // resulting boundary contact as collision.
                InternalState::Car(CarState {
                    x: next.x.clamp(b.x_min, b.x_max),
                    y: next.y.clamp(b.y_min, b.y_max),
                    theta: next.theta,
                })
            }
            InternalState::Quad(s) => {
                let p = self.cfg.quad.as_ref().expect("quad params");
                InternalState::Quad(step_quad(
                    &s,
                    action[0],
                    action[1],
                    self.cfg.dt,
                    self.cfg.control_low[0],
                    self.cfg.control_high[0],
                    p,
                ))
            }
        };
        self.steps += 1;
        self.region = self.classify(&self.state);
        StepOutcome {
            obs: self.observe(),
            reward: self.cfg.region_reward(self.region),
            done: self.done(),
            region: self.region,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn reset_starts_interior_in_start_box() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for cfg in [EnvConfig::car_default(), EnvConfig::quad_default(), EnvConfig::trap_goal_default()] {
            let mut env = Env::new(cfg).unwrap();
            for _ in 0..50 {
                let obs = env.reset(&mut rng);
                assert_eq!(obs.len(), env.obs_dim());
                assert_eq!(env.region(), Region::Interior);
                let (px, py, _) = env.state().pose();
                assert!(env.cfg().start.rect.contains((px, py)));
            }
        }
    }

    #[test]
    fn car_heading_cone_aims_at_center() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut env = Env::new(EnvConfig::car_default()).unwrap();
        for _ in 0..100 {
            env.reset(&mut rng);
            if let InternalState::Car(s) = env.state() {
                let aim = (-s.y).atan2(-s.x);
                let diff = wrap_angle(s.theta - aim).abs();
                assert!(diff <= std::f64::consts::PI / 6.0 + 1e-12);
            }
        }
    }

    #[test]
    fn unsupported_thrust_quad_falls_to_collision() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut env = Env::new(EnvConfig::quad_default()).unwrap();
        env.reset(&mut rng);
        let mut last = None;
        while !env.done() {
            // Requests zero thrust; the control box clamps to 5 N per rotor,
            // still short of hover.
            last = Some(env.step(&[0.0, 0.0]));
        }
        let out = last.unwrap();
        assert_eq!(out.region, Region::Collision);
        assert_eq!(out.reward, -400.0);
        if let InternalState::Quad(s) = env.state() {
            assert!(s.z < 0.25);
        }
    }

    #[test]
    fn car_cannot_leave_workspace() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut env = Env::new(EnvConfig::car_default()).unwrap();
        env.reset(&mut rng);
        while !env.done() {
            env.step(&[2.0, 0.0]);
        }
        let (px, py, _) = env.state().pose();
        assert!(px.abs() <= 4.723 + 1e-12 && py.abs() <= 4.723 + 1e-12);
        assert_eq!(env.region(), Region::Collision);
    }

    #[test]
    fn observation_layout_is_state_then_lidar() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut env = Env::new(EnvConfig::car_default()).unwrap();
        let obs = env.reset(&mut rng);
        assert_eq!(obs.len(), 11);
        assert_eq!(&obs[..3], env.state().to_vec().as_slice());
        for &d in &obs[3..] {
            assert!(d > 0.0 && d <= 5.0);
        }
    }
}
