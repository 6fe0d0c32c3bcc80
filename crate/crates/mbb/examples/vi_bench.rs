use mbb::env::EnvConfig;
use mbb::vi::{solve_vi_car, CarViConfig};

fn main() {
    let env = EnvConfig::car_default();
    let vi = CarViConfig::default();
    let r = solve_vi_car(&env, &vi).unwrap();
    let vmax = r.table.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = r.table.values.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "sweeps={} converged={} max_delta={:.3e} wall={:.2}s vrange=[{:.1},{:.1}]",
        r.sweeps, r.converged, r.max_delta, r.wall_seconds, vmin, vmax
    );
    let probes = [
        ("start center", [-3.25, -3.25, std::f64::consts::FRAC_PI_4]),
        ("mid workspace", [0.0, 1.0, 0.75]),
        ("near goal, good heading", [2.9, 2.9, 0.75 + std::f64::consts::PI]),
        ("near goal, wrong heading", [2.9, 2.9, 0.75]),
        ("near wall", [-4.6, 0.0, std::f64::consts::PI]),
    ];
    for (name, x) in probes {
        println!("{name:26} V = {:8.2}", r.table.interpolate(&x));
    }
}
