use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::problem::MpcProblem;
use super::solve::MpcSolution;
use crate::error::Result;

/// One row of the manifest's solve index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub index: usize,
    pub x_init: Vec<f64>,
    pub feasible: bool,
    pub objective: f64,
    pub min_clearance: f64,
    pub terminal_in_goal: bool,
    /// Trajectory CSV filename, relative to the manifest.
    pub csv: String,
}

/// Problem constants plus the index of every exported solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcManifest {
    pub problem: MpcProblem,
    pub solves: Vec<SolveSummary>,
}

/// Writes one `traj_NNN.csv` per solution plus `manifest.json` into `dir`.
/// Output depends only on the inputs, so a rerun reproduces every byte.
pub fn export_solutions(
    dir: &Path,
    problem: &MpcProblem,
    solutions: &[MpcSolution],
) -> Result<MpcManifest> {
    fs::create_dir_all(dir)?;
    let d = problem.state_dim();
    let rects = problem
        .obstacles
        .iter()
        .map(|o| o.rect())
        .collect::<Result<Vec<_>>>()?;
    let (ix, iy) = problem.model.position_indices();
    let mut solves = Vec::with_capacity(solutions.len());
    for (index, sol) in solutions.iter().enumerate() {
        let csv = format!("traj_{index:03}.csv");
        let mut out = String::new();
        out.push('k');
        for i in 0..d {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",u0,u1,clearance\n");
        for (k, row) in sol.states.iter().enumerate() {
            out.push_str(&k.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            match sol.controls.get(k) {
                Some(u) => out.push_str(&format!(",{},{}", u[0], u[1])),
                None => out.push_str(",,"),
            }
            let p = (row[ix], row[iy]);
            let clear = rects
                .iter()
                .map(|r| r.clearance(p))
                .fold(f64::INFINITY, f64::min)
                .min(1e30);
            out.push_str(&format!(",{clear}\n"));
        }
        fs::write(dir.join(&csv), out)?;
        solves.push(SolveSummary {
            index,
            x_init: sol.states[0].clone(),
            feasible: sol.feasible,
            objective: sol.objective,
            min_clearance: sol.min_clearance,
            terminal_in_goal: sol.terminal_in_goal,
            csv,
        });
    }
    let manifest = MpcManifest { problem: problem.clone(), solves };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::mpc::solve::solve_mpc;

    #[test]
    fn export_writes_csvs_and_reproducible_manifest() {
        let mut p = MpcProblem::car(&EnvConfig::car_default()).unwrap();
        p.horizon = 12;
        p.solver.inner_iters = 20;
        let sols = vec![
            solve_mpc(&p, &[3.2, 3.2, 4.0]).unwrap(),
            solve_mpc(&p, &[-1.0, 0.0, 0.0]).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_solutions(dir.path(), &p, &sols).unwrap();
        assert_eq!(manifest.solves.len(), 2);

        let csv = std::fs::read_to_string(dir.path().join("traj_000.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), p.horizon + 2);
        assert_eq!(lines[0], "k,x0,x1,x2,u0,u1,clearance");
        // The final row has no controls.
        assert!(lines[p.horizon + 1].contains(",,"));

        let parsed: MpcManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(parsed, manifest);

        // Re-export and compare bytes.
        let before = std::fs::read(dir.path().join("manifest.json")).unwrap();
        export_solutions(dir.path(), &p, &sols).unwrap();
        let after = std::fs::read(dir.path().join("manifest.json")).unwrap();
        assert_eq!(before, after);
    }
}
