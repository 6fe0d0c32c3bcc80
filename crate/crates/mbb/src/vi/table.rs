use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{MbbError, Result};

/// Tabular value function Ṽ^M: node values over a [`Grid`] plus the discount
/// the solve used. Serialized as JSON (grid spec and flat value array).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularValue {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub gamma: f64,
}

impl TabularValue {
    pub fn zeros(grid: Grid, gamma: f64) -> Self {
        let n = grid.num_nodes();
        TabularValue { grid, values: vec![0.0; n], gamma }
    }

    /// Multilinear interpolation at a low-dimensional state (periodic axes
    /// wrapped, others clamped).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let tv: TabularValue = serde_json::from_reader(std::io::BufReader::new(file))?;
        if tv.values.len() != tv.grid.num_nodes() {
            return Err(MbbError::Config(format!(
                "value array length {} does not match grid ({} nodes)",
                tv.values.len(),
                tv.grid.num_nodes()
            )));
        }
        if tv.values.iter().any(|v| !v.is_finite()) {
            return Err(MbbError::Numerical("value table contains non-finite entries".into()));
        }
        Ok(tv)
    }

    /// CSV of a 2-D slice for plotting: axes `dim_a` (rows) and `dim_b`
    /// (columns) sweep their nodes while the remaining coordinates are held
    /// at `fixed` (full-state coordinate vector; its dim_a/dim_b entries are
    /// ignored).
    pub fn write_slice_csv<W: Write>(
        &self,
        dim_a: usize,
        dim_b: usize,
        fixed: &[f64],
        mut w: W,
    ) -> Result<()> {
        let dims = self.grid.dims();
        if dim_a == dim_b || dim_a >= dims.len() || dim_b >= dims.len() {
            return Err(MbbError::Config("slice axes must be distinct grid dimensions".into()));
        }
        if fixed.len() != dims.len() {
            return Err(MbbError::Config("fixed coordinates must cover every grid dimension".into()));
        }
        writeln!(w, "dim{dim_a},dim{dim_b},value")?;
        let mut x = fixed.to_vec();
        for i in 0..dims[dim_a].count {
            x[dim_a] = dims[dim_a].node(i);
            for j in 0..dims[dim_b].count {
                x[dim_b] = dims[dim_b].node(j);
                writeln!(w, "{},{},{}", x[dim_a], x[dim_b], self.interpolate(&x))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::grid::GridDim;

    fn small_table() -> TabularValue {
        let grid = Grid::new(vec![
            GridDim { lo: 0.0, hi: 1.0, count: 3, periodic: false },
            GridDim { lo: 0.0, hi: 1.0, count: 2, periodic: false },
        ])
        .unwrap();
        let mut t = TabularValue::zeros(grid, 0.99);
        for (i, v) in t.values.iter_mut().enumerate() {
            *v = i as f64;
        }
        t
    }

    #[test]
    fn json_round_trip_preserves_values() {
        let t = small_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        t.save_json(&path).unwrap();
        let back = TabularValue::load_json(&path).unwrap();
        assert_eq!(t.values, back.values);
        assert_eq!(t.gamma, back.gamma);
        assert_eq!(t.interpolate(&[0.3, 0.7]), back.interpolate(&[0.3, 0.7]));
    }

    #[test]
    fn corrupt_length_rejected() {
        let t = small_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let mut bad = t.clone();
        bad.values.pop();
        let file = std::fs::File::create(&path).unwrap();
        serde_json::to_writer(file, &bad).unwrap();
        assert!(TabularValue::load_json(&path).is_err());
    }

    #[test]
    fn slice_csv_shape() {
        let t = small_table();
        let mut buf = Vec::new();
        t.write_slice_csv(0, 1, &[0.0, 0.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.starts_with("dim0,dim1,value\n"));
        assert!(t.write_slice_csv(0, 0, &[0.0, 0.0], &mut Vec::new()).is_err());
    }
}
