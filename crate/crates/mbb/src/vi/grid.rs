use serde::{Deserialize, Serialize};

use crate::error::{MbbError, Result};

/// Upper bound on grid dimensionality (car is 3-D, quadrotor 6-D).
pub const MAX_DIM: usize = 8;

/// One axis of a rectangular grid. Non-periodic axes place `count` nodes
/// inclusively from `lo` to `hi`; periodic axes tile `[lo, hi)` with `count`
/// nodes and wrap (used for the car heading θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDim {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub periodic: bool,
}

impl GridDim {
    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.count as f64
        } else {
            (self.hi - self.lo) / (self.count - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    /// Bracketing node indices and interpolation fraction for a coordinate.
    /// Non-periodic axes clamp; periodic axes wrap. Fractions within 1e-12 of
    /// a node are snapped so node queries reproduce node values exactly.
    pub fn locate(&self, x: f64) -> (usize, usize, f64) {
        let h = self.spacing();
        if self.periodic {
            let span = self.hi - self.lo;
            let u = (x - self.lo).rem_euclid(span) / h;
            let mut i0 = u.floor() as usize;
            if i0 >= self.count {
                i0 = 0;
            }
            let frac = snap(u - i0 as f64);
            (i0, (i0 + 1) % self.count, frac)
        } else {
            let u = ((x - self.lo) / h).clamp(0.0, (self.count - 1) as f64);
            let i0 = (u.floor() as usize).min(self.count - 2);
            let frac = snap(u - i0 as f64);
            (i0, i0 + 1, frac)
        }
    }
}

fn snap(frac: f64) -> f64 {
    if frac < 1e-12 {
        0.0
    } else if frac > 1.0 - 1e-12 {
        1.0
    } else {
        frac
    }
}

/// Rectangular grid over the low-dimensional state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<GridDim>,
}

impl Grid {
    pub fn new(dims: Vec<GridDim>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_DIM {
            return Err(MbbError::Config(format!(
                "grid must have 1..={MAX_DIM} dimensions, got {}",
                dims.len()
            )));
        }
        for d in &dims {
            if d.count < 2 {
                return Err(MbbError::Config("grid needs >= 2 cells per dimension".into()));
            }
            if !(d.lo < d.hi) {
                return Err(MbbError::Config("grid dimension bounds must be ordered".into()));
            }
        }
        Ok(Grid { dims })
    }

    pub fn dims(&self) -> &[GridDim] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.dims.iter().map(|d| d.count).product()
    }

    /// Row-major flat index of a multi-index.
    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in self.dims.iter().zip(idx) {
            debug_assert!(i < d.count);
            flat = flat * d.count + i;
        }
        flat
    }

    /// Inverse of [`Grid::flatten`].
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for (k, d) in self.dims.iter().enumerate().rev() {
            out[k] = flat % d.count;
            flat /= d.count;
        }
    }

    /// Coordinates of a node given its flat index.
    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.unflatten(flat, &mut idx[..self.ndim()]);
        for (k, d) in self.dims.iter().enumerate() {
            out[k] = d.node(idx[k]);
        }
    }

    /// Multilinear interpolation of a node-value array at an arbitrary point.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.num_nodes());
        debug_assert_eq!(x.len(), self.ndim());
        let d = self.ndim();
        let mut lo_hi = [(0usize, 0usize); MAX_DIM];
        let mut frac = [0f64; MAX_DIM];
        for k in 0..d {
            let (i0, i1, f) = self.dims[k].locate(x[k]);
            lo_hi[k] = (i0, i1);
            frac[k] = f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let hi = (corner >> k) & 1 == 1;
                w *= if hi { frac[k] } else { 1.0 - frac[k] };
                if w == 0.0 {
                    break;
                }
                let i = if hi { lo_hi[k].1 } else { lo_hi[k].0 };
                flat = flat * self.dims[k].count + i;
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    fn grid_2d() -> Grid {
        Grid::new(vec![
            GridDim { lo: 0.0, hi: 1.0, count: 5, periodic: false },
            GridDim { lo: -2.0, hi: 2.0, count: 9, periodic: false },
        ])
        .unwrap()
    }

    #[test]
    fn flat_round_trip() {
        let g = grid_2d();
        let mut idx = [0usize; 2];
        for flat in 0..g.num_nodes() {
            g.unflatten(flat, &mut idx);
            assert_eq!(g.flatten(&idx), flat);
        }
    }

    #[test]
    fn node_query_returns_node_value() {
        let g = grid_2d();
        let values: Vec<f64> = (0..g.num_nodes()).map(|i| (i * i) as f64).collect();
        let mut coords = [0.0; 2];
        for flat in 0..g.num_nodes() {
            g.node_coords(flat, &mut coords);
            assert_eq!(g.interpolate(&values, &coords[..2]), values[flat]);
        }
    }

    #[test]
    fn midpoint_is_arithmetic_mean() {
        let g = Grid::new(vec![GridDim { lo: 0.0, hi: 4.0, count: 5, periodic: false }]).unwrap();
        let values = vec![1.0, 3.0, -2.0, 7.0, 0.0];
        assert_eq!(g.interpolate(&values, &[0.5]), 2.0);
        assert_eq!(g.interpolate(&values, &[2.5]), 2.5);
    }

    #[test]
    fn linear_field_reproduced_exactly() {
        let g = Grid::new(vec![
            GridDim { lo: -1.0, hi: 2.0, count: 7, periodic: false },
            GridDim { lo: 0.0, hi: 5.0, count: 4, periodic: false },
            GridDim { lo: -3.0, hi: -1.0, count: 3, periodic: false },
        ])
        .unwrap();
        let f = |x: &[f64]| 2.0 * x[0] - 0.7 * x[1] + 0.3 * x[2] + 1.5;
        let mut values = vec![0.0; g.num_nodes()];
        let mut coords = [0.0; 3];
        for flat in 0..g.num_nodes() {
            g.node_coords(flat, &mut coords);
            values[flat] = f(&coords[..3]);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..200 {
            let x = [
                rng.random_range(-1.0..2.0),
                rng.random_range(0.0..5.0),
                rng.random_range(-3.0..-1.0),
            ];
            assert!((g.interpolate(&values, &x) - f(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_bounded_by_enclosing_nodes() {
        let g = grid_2d();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..g.num_nodes()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        for _ in 0..500 {
            let x = [rng.random_range(0.0..1.0), rng.random_range(-2.0..2.0)];
            let v = g.interpolate(&values, &x);
            assert!(v >= min - 1e-12 && v <= max + 1e-12);
        }
    }

    #[test]
    fn periodic_dimension_wraps() {
        let g = Grid::new(vec![GridDim { lo: -PI, hi: PI, count: 8, periodic: true }]).unwrap();
        let values: Vec<f64> = (0..8).map(|i| i as f64).collect();
        // Nodes at -π + k·(π/4); query just past the last node wraps to node 0.
        let last = -PI + 7.0 * (2.0 * PI / 8.0);
        let v = g.interpolate(&values, &[last + 2.0 * PI / 8.0 * 0.5]);
        assert!((v - (7.0 + 0.0) / 2.0).abs() < 1e-12);
        // Queries 2π apart agree.
        let a = g.interpolate(&values, &[0.3]);
        let b = g.interpolate(&values, &[0.3 + 2.0 * PI]);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_clamps() {
        let g = Grid::new(vec![GridDim { lo: 0.0, hi: 1.0, count: 3, periodic: false }]).unwrap();
        let values = vec![4.0, 5.0, 6.0];
        assert_eq!(g.interpolate(&values, &[-10.0]), 4.0);
        assert_eq!(g.interpolate(&values, &[10.0]), 6.0);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![GridDim { lo: 0.0, hi: 1.0, count: 1, periodic: false }]).is_err());
        assert!(Grid::new(vec![GridDim { lo: 1.0, hi: 0.0, count: 4, periodic: false }]).is_err());
    }
}
