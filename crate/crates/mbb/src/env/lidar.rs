use super::geometry::Rect;

/// Casts the 8 body-frame lidar beams from a planar pose.
///
/// Beam k points along `heading + k·(2π/beams)`; its range is the distance to
/// the first obstacle edge or the workspace wall, capped at `max_range`.
/// The pose is (x, y, θ) for the car and (x, z, ψ) for the quadrotor.
pub fn lidar_scan(
    pose: (f64, f64, f64),
    walls: &Rect,
    obstacles: &[Rect],
    beams: usize,
    max_range: f64,
) -> Vec<f64> {
    let (px, py, heading) = pose;
    let origin = (px, py);
    let step = std::f64::consts::TAU / beams as f64;
    (0..beams)
        .map(|k| {
            let angle = heading + k as f64 * step;
            let dir = (angle.cos(), angle.sin());
            // An origin outside the walls (terminal out-of-bounds state) has
            // no exit distance; report zero range rather than a phantom hit.
            let mut range = walls.ray_exit(origin, dir).unwrap_or(0.0);
            for r in obstacles {
                if let Some(t) = r.ray_entry(origin, dir) {
                    range = range.min(t);
                }
            }
            range.min(max_range)
        })
        .collect()
}
