//! Closed-form obstacle-avoidance duals.
//!
//! For a rectangle `O = {y : Ay <= b}` the signed distance from a point `p`
//! outside `O` equals `max {(Ap - b)ᵀλ : λ >= 0, ‖Aᵀλ‖ <= 1}`. With the
//! canonical axis-aligned rows the maximizer is available in closed form:
//! each face with positive excess gets `λ_i = excess_i / dist`, every other
//! entry is zero. That choice makes `(Ap - b)ᵀλ` reproduce the Euclidean
//! clearance and puts `Aᵀλ` on the unit sphere, so the certificate is exact
//! rather than the output of an inner optimization.

use crate::env::Obstacle;

/// Optimal dual for one obstacle at position `p`. Points inside or on the
/// boundary get the zero vector, which certifies no positive clearance.
pub fn rectangle_dual(ob: &Obstacle, p: (f64, f64)) -> [f64; 4] {
    let u = excesses(ob, p);
    let qx = u[0].max(u[1]).max(0.0);
    let qy = u[2].max(u[3]).max(0.0);
    let d = (qx.powi(2) + qy.powi(2)).sqrt();
    if d <= 0.0 {
        return [0.0; 4];
    }
    [
        u[0].max(0.0) / d,
        u[1].max(0.0) / d,
        u[2].max(0.0) / d,
        u[3].max(0.0) / d,
    ]
}

/// `(Ap - b)ᵀλ`, the clearance certified by a dual vector.
pub fn certificate_value(ob: &Obstacle, lambda: &[f64; 4], p: (f64, f64)) -> f64 {
    let u = excesses(ob, p);
    u.iter().zip(lambda).map(|(ui, li)| ui * li).sum()
}

/// `‖Aᵀλ‖`, which must not exceed 1 for a valid distance certificate.
pub fn dual_norm(ob: &Obstacle, lambda: &[f64; 4]) -> f64 {
    let mut v = [0.0; 2];
    for (row, li) in ob.a.iter().zip(lambda) {
        v[0] += row[0] * li;
        v[1] += row[1] * li;
    }
    v[0].hypot(v[1])
}

fn excesses(ob: &Obstacle, p: (f64, f64)) -> [f64; 4] {
    let mut u = [0.0; 4];
    for i in 0..4 {
        u[i] = ob.a[i][0] * p.0 + ob.a[i][1] * p.1 - ob.b[i];
    }
    u
}

/// Per-constraint-family worst cases of a dual certificate over a whole
/// trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualReport {
    /// Largest negative dual entry, reported as a positive magnitude.
    pub max_negativity: f64,
    /// Largest amount by which some `‖Aᵀλ‖` exceeds 1.
    pub max_norm_excess: f64,
    /// Smallest certified clearance `(Ap - b)ᵀλ` over all steps and
    /// obstacles; `+inf` when there are no obstacles.
    pub min_certified: f64,
    /// True when every dual is non-negative and norm-feasible within `tol`
    /// and every certified clearance reaches `d_min`.
    pub ok: bool,
}

/// Verifies `λ >= 0`, `‖Aᵀλ‖ <= 1`, and `(Ap - b)ᵀλ >= d_min` at every step
/// for every obstacle. `duals[k][m]` is the dual for obstacle `m` at step
/// `k`; `positions` must have the same length as `duals`.
pub fn dual_feasibility_check(
    obstacles: &[Obstacle],
    positions: &[(f64, f64)],
    duals: &[Vec<[f64; 4]>],
    d_min: f64,
    tol: f64,
) -> DualReport {
    assert_eq!(positions.len(), duals.len(), "one dual set per trajectory step");
    let mut report = DualReport {
        max_negativity: 0.0,
        max_norm_excess: 0.0,
        min_certified: f64::INFINITY,
        ok: true,
    };
    for (&p, step_duals) in positions.iter().zip(duals) {
        assert_eq!(step_duals.len(), obstacles.len(), "one dual per obstacle");
        for (ob, lambda) in obstacles.iter().zip(step_duals) {
            for &li in lambda {
                report.max_negativity = report.max_negativity.max(-li);
            }
            report.max_norm_excess =
                report.max_norm_excess.max(dual_norm(ob, lambda) - 1.0);
            report.min_certified =
                report.min_certified.min(certificate_value(ob, lambda, p));
        }
    }
    report.ok = report.max_negativity <= tol
        && report.max_norm_excess <= tol
        && (obstacles.is_empty() || report.min_certified >= d_min - tol);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Rect;
    use proptest::prelude::*;

    fn unit_square() -> Obstacle {
        Obstacle::from_rect(Rect::new(-1.0, 1.0, -1.0, 1.0))
    }

    #[test]
    fn face_point_certificate_is_exact() {
        let ob = unit_square();
        let p = (3.0, 0.0);
        let l = rectangle_dual(&ob, p);
        assert_eq!(l, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(certificate_value(&ob, &l, p), 2.0);
        assert_eq!(dual_norm(&ob, &l), 1.0);
    }

    #[test]
    fn corner_point_certificate_matches_distance() {
        let ob = unit_square();
        let p = (2.0, -3.0);
        let d = Rect::new(-1.0, 1.0, -1.0, 1.0).clearance(p);
        let l = rectangle_dual(&ob, p);
        assert!((certificate_value(&ob, &l, p) - d).abs() < 1e-12);
        assert!((dual_norm(&ob, &l) - 1.0).abs() < 1e-12);
        assert!(l.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn interior_point_gets_zero_dual() {
        let ob = unit_square();
        assert_eq!(rectangle_dual(&ob, (0.3, -0.9)), [0.0; 4]);
        assert_eq!(rectangle_dual(&ob, (1.0, 0.0)), [0.0; 4]);
    }

    #[test]
    fn report_flags_shallow_and_invalid_duals() {
        let ob = unit_square();
        let far = (4.0, 0.0);
        let near = (1.1, 0.0);
        let duals = vec![
            vec![rectangle_dual(&ob, far)],
            vec![rectangle_dual(&ob, near)],
        ];
        let obs = [ob.clone()];
        let ok = dual_feasibility_check(&obs, &[far, near], &duals, 0.05, 1e-9);
        assert!(ok.ok);
        assert!((ok.min_certified - 0.1).abs() < 1e-12);

        // Clearance 0.1 fails a d_min of 0.277.
        let deep = dual_feasibility_check(&obs, &[far, near], &duals, 0.277, 1e-9);
        assert!(!deep.ok);

        // A negative entry and an over-norm dual are both caught.
        let bad = vec![vec![[2.0, -0.5, 0.0, 0.0]]];
        let rep = dual_feasibility_check(&obs, &[far], &bad, 0.0, 1e-9);
        assert!(!rep.ok);
        assert!((rep.max_negativity - 0.5).abs() < 1e-12);
        assert!(rep.max_norm_excess > 1.0);
    }

    proptest! {
        /// The closed form reproduces the geometric clearance for any point
        /// strictly outside any rectangle, with a norm-feasible dual.
        #[test]
        fn certificate_equals_clearance(
            cx in -3.0..3.0f64,
            cy in -3.0..3.0f64,
            wx in 0.1..2.0f64,
            wy in 0.1..2.0f64,
            px in -8.0..8.0f64,
            py in -8.0..8.0f64,
        ) {
            let r = Rect::new(cx - wx, cx + wx, cy - wy, cy + wy);
            let ob = Obstacle::from_rect(r);
            let l = rectangle_dual(&ob, (px, py));
            let d = r.clearance((px, py));
            prop_assert!(l.iter().all(|&x| x >= 0.0));
            if d > 0.0 {
                prop_assert!((certificate_value(&ob, &l, (px, py)) - d).abs() < 1e-12);
                prop_assert!((dual_norm(&ob, &l) - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(l, [0.0; 4]);
            }
        }
    }
}
