use serde::{Deserialize, Serialize};

use crate::error::MbbError;

/// Axis-aligned rectangle in the planar workspace.
///
/// For the quadrotor the second coordinate is altitude `z`; all planar
/// geometry below is agnostic to that relabeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "degenerate rect");
        Rect { x_min, x_max, y_min, y_max }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x_min && p.0 <= self.x_max && p.1 >= self.y_min && p.1 <= self.y_max
    }

    /// Signed clearance: Euclidean distance to the rectangle when outside,
    /// negative depth of penetration when inside.
    pub fn clearance(&self, p: (f64, f64)) -> f64 {
        let qx = (self.x_min - p.0).max(p.0 - self.x_max);
        let qy = (self.y_min - p.1).max(p.1 - self.y_max);
        if qx > 0.0 || qy > 0.0 {
            (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt()
        } else {
            qx.max(qy)
        }
    }

    /// Entry distance of the ray `origin + t*dir` into the rectangle
    /// (slab test); `None` when the ray misses. An origin already inside
    /// reports distance 0.
    pub fn ray_entry(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<f64> {
        self.ray_interval(origin, dir).map(|(t0, _)| t0.max(0.0))
    }

    /// Exit distance of a ray cast from inside the rectangle; `None` when the
    /// origin is outside or the ray never overlaps the rectangle.
    pub fn ray_exit(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<f64> {
        match self.ray_interval(origin, dir) {
            Some((t0, t1)) if t0 <= 0.0 => Some(t1),
            _ => None,
        }
    }

    fn ray_interval(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.0, dir.0, self.x_min, self.x_max),
            (origin.1, dir.1, self.y_min, self.y_max),
        ] {
            if d.abs() < 1e-12 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (ta, tb) = ((lo - o) / d, (hi - o) / d);
                let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
        }
        if t1 < 0.0 {
            None
        } else {
            Some((t0, t1))
        }
    }

    /// Reflection across the horizontal axis `y = 0`.
    pub fn mirror_y(&self) -> Rect {
        Rect::new(self.x_min, self.x_max, -self.y_max, -self.y_min)
    }
}

/// Obstacle in halfspace form, `O = {p : A·p <= b}` with `A` a 4x2 matrix
/// whose rows are signed unit axis vectors. This is the representation the
/// MPC duality constraints operate on; geometric queries go through the
/// equivalent [`Rect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub a: [[f64; 2]; 4],
    pub b: [f64; 4],
}

impl Obstacle {
    /// Canonical halfspace form of an axis-aligned rectangle: rows
    /// (+x, -x, +y, -y), so `b = [x_max, -x_min, y_max, -y_min]`.
    pub fn from_rect(r: Rect) -> Self {
        Obstacle {
            a: [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            b: [r.x_max, -r.x_min, r.y_max, -r.y_min],
        }
    }

    /// Recovers the rectangle, validating that rows cover all four axis
    /// directions and the set is non-empty.
    pub fn rect(&self) -> Result<Rect, MbbError> {
        let mut x_max = f64::INFINITY;
        let mut x_min = f64::NEG_INFINITY;
        let mut y_max = f64::INFINITY;
        let mut y_min = f64::NEG_INFINITY;
        for (row, &bi) in self.a.iter().zip(&self.b) {
            match (row[0], row[1]) {
                (x, y) if (x - 1.0).abs() < 1e-9 && y.abs() < 1e-9 => x_max = x_max.min(bi),
                (x, y) if (x + 1.0).abs() < 1e-9 && y.abs() < 1e-9 => x_min = x_min.max(-bi),
                (x, y) if x.abs() < 1e-9 && (y - 1.0).abs() < 1e-9 => y_max = y_max.min(bi),
                (x, y) if x.abs() < 1e-9 && (y + 1.0).abs() < 1e-9 => y_min = y_min.max(-bi),
                _ => {
                    return Err(MbbError::Config(format!(
                        "obstacle row {row:?} is not a signed unit axis vector"
                    )))
                }
            }
        }
        if !(x_min.is_finite() && x_max.is_finite() && y_min.is_finite() && y_max.is_finite()) {
            return Err(MbbError::Config("obstacle is unbounded".into()));
        }
        if x_min > x_max || y_min > y_max {
            return Err(MbbError::Config("obstacle is empty".into()));
        }
        Ok(Rect::new(x_min, x_max, y_min, y_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clearance_signs_and_values() {
        let r = Rect::new(-1.0, 1.0, -1.0, 1.0);
        assert_eq!(r.clearance((3.0, 0.0)), 2.0);
        assert_eq!(r.clearance((0.0, -4.0)), 3.0);
        // Corner region: Euclidean distance to the corner.
        let d = r.clearance((2.0, 2.0));
        assert!((d - 2.0_f64.sqrt()).abs() < 1e-12);
        // Inside: negative distance to the nearest edge.
        assert_eq!(r.clearance((0.5, 0.0)), -0.5);
        assert_eq!(r.clearance((0.0, 0.0)), -1.0);
        // On the boundary.
        assert_eq!(r.clearance((1.0, 0.0)), 0.0);
    }

    #[test]
    fn ray_entry_hits_and_misses() {
        let r = Rect::new(1.0, 2.0, -0.5, 0.5);
        assert_eq!(r.ray_entry((0.0, 0.0), (1.0, 0.0)), Some(1.0));
        assert_eq!(r.ray_entry((0.0, 0.0), (-1.0, 0.0)), None);
        assert_eq!(r.ray_entry((0.0, 2.0), (1.0, 0.0)), None);
        // Diagonal hit on the corner region.
        let t = r.ray_entry((0.0, -1.5), (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2));
        assert!((t.unwrap() - 2.0_f64.sqrt()).abs() < 1e-12);
        // Origin inside reports zero.
        assert_eq!(r.ray_entry((1.5, 0.0), (0.0, 1.0)), Some(0.0));
    }

    #[test]
    fn ray_exit_from_inside() {
        let r = Rect::new(-5.0, 5.0, -5.0, 5.0);
        assert_eq!(r.ray_exit((0.0, 0.0), (1.0, 0.0)), Some(5.0));
        assert_eq!(r.ray_exit((3.0, 0.0), (0.0, -1.0)), Some(5.0));
        assert_eq!(r.ray_exit((6.0, 0.0), (1.0, 0.0)), None);
    }

    #[test]
    fn obstacle_round_trip_and_validation() {
        let r = Rect::new(-0.35, 0.35, -0.35, 0.35);
        let o = Obstacle::from_rect(r);
        assert_eq!(o.b, [0.35, 0.35, 0.35, 0.35]);
        assert_eq!(o.rect().unwrap(), r);

        let bad = Obstacle { a: [[1.0, 0.0]; 4], b: [1.0; 4] };
        assert!(bad.rect().is_err());

        let empty = Obstacle {
            a: [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            b: [-2.0, 1.0, 1.0, 1.0],
        };
        assert!(empty.rect().is_err());
    }
}
