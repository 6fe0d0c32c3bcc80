//! Feasibility-rate and runtime calibration for the car trajectory solves.

use mbb::env::EnvConfig;
use mbb::mpc::{sample_initial_states, solve_mpc, MpcProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let env = EnvConfig::car_default();
    let problem = MpcProblem::car(&env).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let starts = sample_initial_states(&problem, 50, &mut rng).unwrap();
    let rects = env.obstacle_rects().unwrap();

    let t0 = std::time::Instant::now();
    let mut feasible = 0usize;
    let mut oracle_fail = 0usize;
    for (i, x0) in starts.iter().enumerate() {
        let sol = solve_mpc(&problem, x0).unwrap();
        let oracle = sol
            .states
            .iter()
            .all(|row| rects.iter().all(|r| r.clearance((row[0], row[1])) > problem.d_min));
        if sol.feasible {
            feasible += 1;
            if !oracle {
                oracle_fail += 1;
            }
        }
        if !sol.feasible {
            let last = sol.outer_history.last().unwrap();
            println!(
                "  infeasible #{i}: x0=({:.2},{:.2},{:.2}) viol={:.2e} goal={} clear={:.4}",
                x0[0], x0[1], x0[2], last.max_violation, sol.terminal_in_goal, sol.min_clearance
            );
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    println!(
        "car: feasible {feasible}/50 ({:.0}%), oracle failures among flagged: {oracle_fail}, wall {wall:.1} s ({:.2} s/solve)",
        feasible as f64 * 2.0,
        wall / 50.0
    );

    for env in [EnvConfig::quad_default(), EnvConfig::trap_goal_default()] {
        let problem = MpcProblem::quad(&env).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let starts = sample_initial_states(&problem, 10, &mut rng).unwrap();
        let t0 = std::time::Instant::now();
        let mut feasible = 0usize;
        let mut lens = Vec::new();
        for x0 in &starts {
            let sol = solve_mpc(&problem, x0).unwrap();
            if sol.feasible {
                feasible += 1;
            }
            let lab = mbb::mpc::label_trajectory(&env, &sol.states, 0.998).unwrap();
            lens.push((lab.states.len(), lab.terminal));
        }
        let wall = t0.elapsed().as_secs_f64();
        println!(
            "{:?}: feasible {feasible}/10, wall {wall:.1} s ({:.2} s/solve), labels: {lens:?}",
            env.kind,
            wall / 10.0
        );
    }
}
