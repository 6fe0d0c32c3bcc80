use serde::{Deserialize, Serialize};

use super::car::CarState;
use super::geometry::{Obstacle, Rect};
use super::quad::{QuadParams, QuadState};
use crate::error::{MbbError, Result};

/// Which reward set a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Goal,
    Collision,
    Trap,
}

impl Region {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Region::Interior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Car,
    Quadrotor,
    TrapGoal,
}

impl EnvKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "car" => Ok(EnvKind::Car),
            "quadrotor" => Ok(EnvKind::Quadrotor),
            "trap-goal" => Ok(EnvKind::TrapGoal),
            other => Err(MbbError::Config(format!(
                "unknown env {other:?}; expected car, quadrotor, or trap-goal"
            ))),
        }
    }

    pub fn is_quad(&self) -> bool {
        !matches!(self, EnvKind::Car)
    }
}

/// Goal set Γ₃: position region plus an attitude window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GoalSpec {
    /// Car goal: disk with the heading window `cos(θ - heading_ref) <= cos_max`.
    Disk { center: [f64; 2], radius: f64, heading_ref: f64, cos_max: f64 },
    /// Quadrotor goal: box in (x, z) with `|ψ| <= psi_max`.
    Box { rect: Rect, psi_max: f64 },
}

/// Trap set Tr (Trap-Goal variant): box in (x, z) with a pitch window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub rect: Rect,
    pub psi_max: f64,
}

/// Start-state distribution: positions uniform in a box; car headings uniform
/// in a cone of half-width `heading_cone` aimed at the workspace center;
/// quadrotors start at rest with zero pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub rect: Rect,
    pub heading_cone: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    pub goal: f64,
    pub collision: f64,
    pub trap: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        RewardConstants { goal: 1000.0, collision: -400.0, trap: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub beams: usize,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig { beams: 8, max_range: 5.0 }
    }
}

/// Full environment description, loadable from JSON.
///
/// `walls` is the physical boundary the lidar sees; `bounds` is the in-bounds
/// region S̃ whose complement counts as collision. The two are distinct
/// rectangles: for the car they differ by a safety margin, for the quadrotor
/// the flyable box sits strictly inside the walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub obstacles: Vec<Obstacle>,
    pub walls: Rect,
    pub bounds: Rect,
    /// Pitch bound of the in-bounds region (quadrotor only).
    pub psi_bound: Option<f64>,
    pub goal: GoalSpec,
    pub trap: Option<TrapSpec>,
    pub start: StartSpec,
    pub dt: f64,
    pub max_steps: usize,
    pub control_low: Vec<f64>,
    pub control_high: Vec<f64>,
    #[serde(default)]
    pub rewards: RewardConstants,
    pub d_min: f64,
    #[serde(default)]
    pub lidar: LidarConfig,
    pub quad: Option<QuadParams>,
}

impl EnvConfig {
    pub fn car_default() -> Self {
        EnvConfig {
            kind: EnvKind::Car,
            obstacles: vec![
                Obstacle::from_rect(Rect::new(-0.35, 0.35, -0.35, 0.35)),
                Obstacle::from_rect(Rect::new(1.85, 2.55, 0.65, 1.35)),
                Obstacle::from_rect(Rect::new(-1.35, -0.65, -2.55, -1.85)),
            ],
            walls: Rect::new(-5.0, 5.0, -5.0, 5.0),
            bounds: Rect::new(-4.723, 4.723, -4.723, 4.723),
            psi_bound: None,
            goal: GoalSpec::Disk {
                center: [3.5, 3.5],
                radius: 1.0,
                heading_ref: 0.75,
                cos_max: 0.3,
            },
            trap: None,
            start: StartSpec {
                rect: Rect::new(-4.0, -2.5, -4.0, -2.5),
                heading_cone: std::f64::consts::PI / 6.0,
            },
            dt: 0.05,
            max_steps: 200,
            control_low: vec![-2.0, -2.0],
            control_high: vec![2.0, 2.0],
            rewards: RewardConstants::default(),
            d_min: 0.277,
            lidar: LidarConfig::default(),
            quad: None,
        }
    }

    pub fn quad_default() -> Self {
        EnvConfig {
            kind: EnvKind::Quadrotor,
            obstacles: vec![
                Obstacle::from_rect(Rect::new(0.8, 1.8, 4.0, 6.0)),
                Obstacle::from_rect(Rect::new(-2.8, -1.8, 6.0, 7.5)),
            ],
            walls: Rect::new(-5.0, 5.0, 0.0, 10.0),
            bounds: Rect::new(-4.75, 4.75, 0.25, 9.75),
            psi_bound: Some(std::f64::consts::FRAC_PI_2),
            goal: GoalSpec::Box {
                rect: Rect::new(3.0, 5.0, 8.0, 10.0),
                psi_max: std::f64::consts::FRAC_PI_3,
            },
            trap: None,
            start: StartSpec {
                rect: Rect::new(-1.0, 1.0, 0.5, 1.5),
                heading_cone: 0.0,
            },
            dt: 0.05,
            max_steps: 300,
            control_low: vec![5.0, 5.0],
            control_high: vec![11.0, 11.0],
            rewards: RewardConstants::default(),
            d_min: 0.1,
            lidar: LidarConfig::default(),
            quad: Some(QuadParams::default()),
        }
    }

    /// Trap-Goal: same quadrotor, start mid-workspace, goal up-and-right,
    /// an equally sized trap below-and-left, strictly closer to the start.
    pub fn trap_goal_default() -> Self {
        let mut cfg = EnvConfig::quad_default();
        cfg.kind = EnvKind::TrapGoal;
        cfg.start = StartSpec { rect: Rect::new(-0.5, 0.5, 4.5, 5.5), heading_cone: 0.0 };
        cfg.trap = Some(TrapSpec {
            rect: Rect::new(-3.5, -1.5, 1.0, 3.0),
            psi_max: std::f64::consts::FRAC_PI_3,
        });
        cfg.obstacles = vec![Obstacle::from_rect(Rect::new(0.8, 1.8, 6.0, 7.5))];
        cfg
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Car => EnvConfig::car_default(),
            EnvKind::Quadrotor => EnvConfig::quad_default(),
            EnvKind::TrapGoal => EnvConfig::trap_goal_default(),
        }
    }

    /// Internal (low-dimensional) state dimension.
    pub fn state_dim(&self) -> usize {
        if self.kind.is_quad() {
            6
        } else {
            3
        }
    }

    /// Full observed state dimension: internal state plus lidar ranges.
    pub fn obs_dim(&self) -> usize {
        self.state_dim() + self.lidar.beams
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn obstacle_rects(&self) -> Result<Vec<Rect>> {
        self.obstacles.iter().map(|o| o.rect()).collect()
    }

    /// Minimum signed clearance from a point to any obstacle
    /// (infinite when there are none).
    pub fn clearance(&self, p: (f64, f64), rects: &[Rect]) -> f64 {
        let _ = self;
        rects.iter().map(|r| r.clearance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn classify_car(&self, s: &CarState, rects: &[Rect]) -> Region {
        let p = (s.x, s.y);
        let eps = 1e-9;
        let out = s.x <= self.bounds.x_min + eps
            || s.x >= self.bounds.x_max - eps
            || s.y <= self.bounds.y_min + eps
            || s.y >= self.bounds.y_max - eps;
        if out || self.clearance(p, rects) <= self.d_min {
            return Region::Collision;
        }
        if let GoalSpec::Disk { center, radius, heading_ref, cos_max } = self.goal {
            let dx = s.x - center[0];
            let dy = s.y - center[1];
            if dx * dx + dy * dy <= radius * radius && (s.theta - heading_ref).cos() <= cos_max {
                return Region::Goal;
            }
        }
        Region::Interior
    }

    pub fn classify_quad(&self, s: &QuadState, rects: &[Rect]) -> Region {
        let p = (s.x, s.z);
        let psi_bound = self.psi_bound.unwrap_or(f64::INFINITY);
        if !self.bounds.contains(p)
            || s.psi.abs() > psi_bound
            || self.clearance(p, rects) <= self.d_min
        {
            return Region::Collision;
        }
        if let GoalSpec::Box { rect, psi_max } = self.goal {
            if rect.contains(p) && s.psi.abs() <= psi_max {
                return Region::Goal;
            }
        }
        if let Some(trap) = &self.trap {
            if trap.rect.contains(p) && s.psi.abs() <= trap.psi_max {
                return Region::Trap;
            }
        }
        Region::Interior
    }

    pub fn region_reward(&self, region: Region) -> f64 {
        match region {
            Region::Interior => 0.0,
            Region::Goal => self.rewards.goal,
            Region::Collision => self.rewards.collision,
            Region::Trap => self.rewards.trap,
        }
    }

    /// Structural checks: obstacles well-formed, goal clear of inflated
    /// obstacles, trap only on the Trap-Goal variant, control box ordered.
    pub fn validate(&self) -> Result<()> {
        let rects = self.obstacle_rects()?;
        if self.dt <= 0.0 || self.max_steps == 0 {
            return Err(MbbError::Config("dt and max_steps must be positive".into()));
        }
        if self.control_low.len() != 2 || self.control_high.len() != 2 {
            return Err(MbbError::Config("control box must be 2-dimensional".into()));
        }
        if self.control_low.iter().zip(&self.control_high).any(|(l, h)| l >= h) {
            return Err(MbbError::Config("control box is empty".into()));
        }
        if self.kind.is_quad() != self.quad.is_some() {
            return Err(MbbError::Config("quad params must match env kind".into()));
        }
        if matches!(self.kind, EnvKind::TrapGoal) != self.trap.is_some() {
            return Err(MbbError::Config("trap region must match env kind".into()));
        }
        let goal_rect = match self.goal {
            GoalSpec::Disk { center, radius, .. } => {
                Rect::new(center[0] - radius, center[0] + radius, center[1] - radius, center[1] + radius)
            }
            GoalSpec::Box { rect, .. } => rect,
        };
        for r in &rects {
            let gap = rect_gap(&goal_rect, r);
            if gap <= self.d_min {
                return Err(MbbError::Config(format!(
                    "goal region within d_min of obstacle {r:?}"
                )));
            }
            if rect_gap(&self.start.rect, r) <= self.d_min {
                return Err(MbbError::Config(format!(
                    "start region within d_min of obstacle {r:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Separation between two rectangles (0 when they overlap).
fn rect_gap(a: &Rect, b: &Rect) -> f64 {
    let dx = (b.x_min - a.x_max).max(a.x_min - b.x_max).max(0.0);
    let dy = (b.y_min - a.y_max).max(a.y_min - b.y_max).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_validate() {
        EnvConfig::car_default().validate().unwrap();
        EnvConfig::quad_default().validate().unwrap();
        EnvConfig::trap_goal_default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = EnvConfig::trap_goal_default();
        let s = serde_json::to_string_pretty(&cfg).unwrap();
        let back: EnvConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn car_goal_requires_heading_window() {
        let cfg = EnvConfig::car_default();
        let rects = cfg.obstacle_rects().unwrap();
        // In the disk, heading in the admitted window (cos <= 0.3).
        let s = CarState { x: 3.5, y: 3.5, theta: 0.75 + std::f64::consts::PI };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Goal);
        // In the disk but heading at the excluded reference angle.
        let s = CarState { x: 3.5, y: 3.5, theta: 0.75 };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Interior);
        // Outside the disk.
        let s = CarState { x: 1.0, y: 1.0, theta: 0.75 + std::f64::consts::PI };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Interior);
    }

    #[test]
    fn car_collision_margin_and_bounds() {
        let cfg = EnvConfig::car_default();
        let rects = cfg.obstacle_rects().unwrap();
        // Within d_min of the origin square.
        let s = CarState { x: 0.6, y: 0.0, theta: 0.0 };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Collision);
        // Just beyond the margin.
        let s = CarState { x: 0.63, y: 0.0, theta: 0.0 };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Interior);
        // Clamped to the workspace edge.
        let s = CarState { x: 4.723, y: 0.0, theta: 0.0 };
        assert_eq!(cfg.classify_car(&s, &rects), Region::Collision);
    }

    #[test]
    fn quad_regions() {
        let cfg = EnvConfig::trap_goal_default();
        let rects = cfg.obstacle_rects().unwrap();
        let mk = |x: f64, z: f64, psi: f64| QuadState { x, v_x: 0.0, z, v_z: 0.0, psi, omega: 0.0 };
        assert_eq!(cfg.classify_quad(&mk(4.0, 9.0, 0.0), &rects), Region::Goal);
        assert_eq!(cfg.classify_quad(&mk(4.0, 9.0, 1.6), &rects), Region::Collision); // |ψ|>π/2 wins
        assert_eq!(cfg.classify_quad(&mk(4.0, 9.0, 1.2), &rects), Region::Interior); // pitch outside goal window
        assert_eq!(cfg.classify_quad(&mk(-2.5, 2.0, 0.0), &rects), Region::Trap);
        assert_eq!(cfg.classify_quad(&mk(0.0, 0.1, 0.0), &rects), Region::Collision);
        assert_eq!(cfg.classify_quad(&mk(0.0, 5.0, 0.0), &rects), Region::Interior);
    }

    #[test]
    fn goal_overlapping_obstacle_rejected() {
        let mut cfg = EnvConfig::car_default();
        cfg.obstacles.push(Obstacle::from_rect(Rect::new(3.0, 4.0, 3.0, 4.0)));
        assert!(cfg.validate().is_err());
    }
}
