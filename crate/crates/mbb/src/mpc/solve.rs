use serde::{Deserialize, Serialize};

use super::duals::rectangle_dual;
use super::problem::{MpcModel, MpcProblem, MPC_MAX_DIM};
use crate::env::{wrap_angle, GoalSpec, Rect};
use crate::error::{MbbError, Result};

/// Hinge targets sit this far inside the true constraint sets, so the
/// penalty equilibrium still lands strictly feasible.
const INSET: f64 = 5e-3;
/// Slack on the exact-geometry feasibility flag; clearance must beat
/// `d_min` by at least this much.
const FEAS_EPS: f64 = 1e-6;
const T_INIT: f64 = 1e-3;
const T_MIN: f64 = 1e-16;
const T_MAX: f64 = 10.0;
const STEP_TOL: f64 = 1e-10;

/// Progress of one penalty-weight stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub weight: f64,
    pub merit_start: f64,
    pub merit_end: f64,
    /// Smooth objective (tracking + control cost) at the end of the stage.
    pub objective: f64,
    /// Worst true-constraint violation at the end of the stage.
    pub max_violation: f64,
    pub inner_iters: usize,
    /// Accepted merit values, one per inner iteration; non-increasing.
    pub merit_trace: Vec<f64>,
}

/// Solved trajectory with its dual certificate and exact-geometry
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    /// `horizon + 1` states, row-major.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<[f64; 2]>,
    /// `duals[k][m]` certifies the clearance of step `k` from obstacle `m`.
    pub duals: Vec<Vec<[f64; 4]>>,
    pub feasible: bool,
    /// Smooth objective (tracking + control cost) of the final trajectory.
    pub objective: f64,
    /// Smallest obstacle clearance over all steps (capped at 1e30 when
    /// there are no obstacles).
    pub min_clearance: f64,
    /// Largest state-box excess over all steps.
    pub max_box_excess: f64,
    pub terminal_in_goal: bool,
    pub outer_history: Vec<OuterRecord>,
    /// Set when the solve was abandoned (non-finite trajectory).
    pub diagnostic: Option<String>,
}

enum TermSpec {
    Disk { center: [f64; 2], radius: f64, r_in: f64, heading_ref: f64, cos_max: f64, cos_in: f64 },
    Box { rect: Rect, t_lo: [f64; 2], t_hi: [f64; 2], psi_max: f64, psi_in: f64 },
}

struct Ws {
    d: usize,
    h: usize,
    pos: (usize, usize),
    rects: Vec<Rect>,
    /// `gamma_mpc^k` for `k = 0..=h`.
    gammas: Vec<f64>,
    /// `1 / gamma_mpc^{k+1}`, the diagonal preconditioner that undoes the
    /// stage scaling a control inherits from the stages it influences.
    precond: Vec<f64>,
    u_lo: [f64; 2],
    u_hi: [f64; 2],
    d_safe: f64,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    terminal: TermSpec,
}

impl Ws {
    fn new(p: &MpcProblem) -> Result<Self> {
        let d = p.state_dim();
        let h = p.horizon;
        let rects = p.obstacles.iter().map(|o| o.rect()).collect::<Result<Vec<_>>>()?;
        let mut gammas = Vec::with_capacity(h + 1);
        let mut g = 1.0;
        for _ in 0..=h {
            gammas.push(g);
            g *= p.gamma_mpc;
        }
        let precond = (0..h).map(|k| 1.0 / (gammas[k] * p.gamma_mpc)).collect();
        let mut box_lo = p.state_lo.clone();
        let mut box_hi = p.state_hi.clone();
        for i in 0..d {
            if box_lo[i] + 2.0 * INSET < box_hi[i] {
                box_lo[i] += INSET;
                box_hi[i] -= INSET;
            }
        }
        let terminal = match p.goal {
            GoalSpec::Disk { center, radius, heading_ref, cos_max } => TermSpec::Disk {
                center,
                radius,
                r_in: (radius - INSET).max(0.5 * radius),
                heading_ref,
                cos_max,
                cos_in: cos_max - INSET,
            },
            GoalSpec::Box { rect, psi_max } => {
                let mut t_lo = [rect.x_min, rect.y_min];
                let mut t_hi = [rect.x_max, rect.y_max];
                for i in 0..2 {
                    if t_lo[i] + 2.0 * INSET < t_hi[i] {
                        t_lo[i] += INSET;
                        t_hi[i] -= INSET;
                    }
                }
                TermSpec::Box { rect, t_lo, t_hi, psi_max, psi_in: (psi_max - INSET).max(0.0) }
            }
        };
        Ok(Ws {
            d,
            h,
            pos: p.model.position_indices(),
            rects,
            gammas,
            precond,
            u_lo: p.model.control_low(),
            u_hi: p.model.control_high(),
            d_safe: p.d_min + INSET,
            box_lo,
            box_hi,
            terminal,
        })
    }
}

/// Signed clearance to a rectangle and its gradient with respect to the
/// position; matches [`Rect::clearance`] exactly on values.
fn clearance_grad(r: &Rect, p: (f64, f64)) -> (f64, f64, f64) {
    let ax = r.x_min - p.0;
    let bx = p.0 - r.x_max;
    let qx = ax.max(bx);
    let sx = if bx >= ax { 1.0 } else { -1.0 };
    let ay = r.y_min - p.1;
    let by = p.1 - r.y_max;
    let qy = ay.max(by);
    let sy = if by >= ay { 1.0 } else { -1.0 };
    if qx > 0.0 || qy > 0.0 {
        let cx = qx.max(0.0);
        let cy = qy.max(0.0);
        let dist = (cx.powi(2) + cy.powi(2)).sqrt();
        (dist, cx / dist * sx, cy / dist * sy)
    } else if qx >= qy {
        (qx, sx, 0.0)
    } else {
        (qy, 0.0, sy)
    }
}

fn rollout(p: &MpcProblem, ws: &Ws, x0: &[f64], controls: &[[f64; 2]], states: &mut [f64]) -> bool {
    let d = ws.d;
    states[..d].copy_from_slice(x0);
    let mut f = [0.0; MPC_MAX_DIM];
    for k in 0..ws.h {
        let (cur, next) = states.split_at_mut((k + 1) * d);
        let xk = &cur[k * d..];
        p.model.deriv(xk, controls[k], &mut f);
        for i in 0..d {
            next[i] = xk[i] + p.dt * f[i];
        }
    }
    states.iter().all(|v| v.is_finite())
}

/// Cost carried by state `x_k` plus its worst true-constraint violation.
/// With `grad` present the gradient is accumulated into `grad[..d]`.
fn state_cost(
    p: &MpcProblem,
    ws: &Ws,
    w: f64,
    k: usize,
    x: &[f64],
    mut grad: Option<&mut [f64; MPC_MAX_DIM]>,
) -> (f64, f64) {
    let (ix, iy) = ws.pos;
    let (px, py) = (x[ix], x[iy]);
    let g = ws.gammas[k];
    let dx = px - p.p_ref[0];
    let dy = py - p.p_ref[1];
    let mut cost = g * (p.q[0] * dx * dx + p.q[1] * dy * dy);
    let mut viol = 0.0f64;
    if let Some(gr) = grad.as_deref_mut() {
        gr[ix] += 2.0 * g * p.q[0] * dx;
        gr[iy] += 2.0 * g * p.q[1] * dy;
    }
    for r in &ws.rects {
        let (c, cgx, cgy) = clearance_grad(r, (px, py));
        viol = viol.max(p.d_min - c);
        let hinge = ws.d_safe - c;
        if hinge > 0.0 {
            cost += w * hinge * hinge;
            if let Some(gr) = grad.as_deref_mut() {
                gr[ix] -= 2.0 * w * hinge * cgx;
                gr[iy] -= 2.0 * w * hinge * cgy;
            }
        }
    }
    for i in 0..ws.d {
        viol = viol.max(x[i] - p.state_hi[i]).max(p.state_lo[i] - x[i]);
        let e_hi = x[i] - ws.box_hi[i];
        if e_hi > 0.0 {
            cost += w * e_hi * e_hi;
            if let Some(gr) = grad.as_deref_mut() {
                gr[i] += 2.0 * w * e_hi;
            }
        }
        let e_lo = ws.box_lo[i] - x[i];
        if e_lo > 0.0 {
            cost += w * e_lo * e_lo;
            if let Some(gr) = grad.as_deref_mut() {
                gr[i] -= 2.0 * w * e_lo;
            }
        }
    }
    if k == ws.h {
        match &ws.terminal {
            TermSpec::Disk { center, radius, r_in, heading_ref, cos_max, cos_in } => {
                let ddx = px - center[0];
                let ddy = py - center[1];
                let dist = (ddx * ddx + ddy * ddy).sqrt();
                viol = viol.max(dist - radius);
                let e = dist - r_in;
                if e > 0.0 {
                    cost += w * e * e;
                    if dist > 1e-12 {
                        if let Some(gr) = grad.as_deref_mut() {
                            gr[ix] += 2.0 * w * e * ddx / dist;
                            gr[iy] += 2.0 * w * e * ddy / dist;
                        }
                    }
                }
                let ang = x[2] - heading_ref;
                let ch = ang.cos();
                viol = viol.max(ch - cos_max);
                let e = ch - cos_in;
                if e > 0.0 {
                    cost += w * e * e;
                    if let Some(gr) = grad.as_deref_mut() {
                        gr[2] -= 2.0 * w * e * ang.sin();
                    }
                }
            }
            TermSpec::Box { rect, t_lo, t_hi, psi_max, psi_in } => {
                for (v, idx, lo, hi, t_l, t_h) in [
                    (px, ix, rect.x_min, rect.x_max, t_lo[0], t_hi[0]),
                    (py, iy, rect.y_min, rect.y_max, t_lo[1], t_hi[1]),
                ] {
                    viol = viol.max(v - hi).max(lo - v);
                    let e = v - t_h;
                    if e > 0.0 {
                        cost += w * e * e;
                        if let Some(gr) = grad.as_deref_mut() {
                            gr[idx] += 2.0 * w * e;
                        }
                    }
                    let e = t_l - v;
                    if e > 0.0 {
                        cost += w * e * e;
                        if let Some(gr) = grad.as_deref_mut() {
                            gr[idx] -= 2.0 * w * e;
                        }
                    }
                }
                let a = x[4].abs();
                viol = viol.max(a - psi_max);
                let e = a - psi_in;
                if e > 0.0 {
                    cost += w * e * e;
                    if let Some(gr) = grad.as_deref_mut() {
                        gr[4] += 2.0 * w * e * x[4].signum();
                    }
                }
            }
        }
    }
    (cost, viol)
}

fn control_cost(p: &MpcProblem, u: [f64; 2]) -> f64 {
    p.r[0] * u[0] * u[0] + p.r[1] * u[1] * u[1]
}

/// Penalized merit and worst true-constraint violation of a rolled-out
/// trajectory.
fn merit(p: &MpcProblem, ws: &Ws, w: f64, states: &[f64], controls: &[[f64; 2]]) -> (f64, f64) {
    let mut cost = 0.0;
    let mut viol = 0.0f64;
    for k in 1..=ws.h {
        let (c, v) = state_cost(p, ws, w, k, &states[k * ws.d..(k + 1) * ws.d], None);
        cost += c;
        viol = viol.max(v);
    }
    for &u in controls {
        cost += control_cost(p, u);
    }
    (cost, viol)
}

/// Merit gradient with respect to the controls via one adjoint sweep.
fn merit_grad(
    p: &MpcProblem,
    ws: &Ws,
    w: f64,
    states: &[f64],
    controls: &[[f64; 2]],
    grad: &mut [[f64; 2]],
) -> f64 {
    let d = ws.d;
    let h = ws.h;
    let mut adj = [0.0; MPC_MAX_DIM];
    let (mut total, _) = state_cost(p, ws, w, h, &states[h * d..(h + 1) * d], Some(&mut adj));
    for k in (0..h).rev() {
        let xk = &states[k * d..(k + 1) * d];
        let u = controls[k];
        let mut jx = [[0.0; MPC_MAX_DIM]; MPC_MAX_DIM];
        let mut ju = [[0.0; 2]; MPC_MAX_DIM];
        p.model.jacobians(xk, u, &mut jx, &mut ju);
        let mut gu = [2.0 * p.r[0] * u[0], 2.0 * p.r[1] * u[1]];
        for i in 0..d {
            gu[0] += p.dt * ju[i][0] * adj[i];
            gu[1] += p.dt * ju[i][1] * adj[i];
        }
        grad[k] = gu;
        total += control_cost(p, u);
        let mut next = [0.0; MPC_MAX_DIM];
        if k >= 1 {
            let (c, _) = state_cost(p, ws, w, k, xk, Some(&mut next));
            total += c;
        }
        for i in 0..d {
            next[i] += adj[i];
        }
        for i in 0..d {
            for j in 0..d {
                next[j] += p.dt * jx[i][j] * adj[i];
            }
        }
        adj = next;
    }
    total
}

fn smooth_objective(p: &MpcProblem, ws: &Ws, states: &[f64], controls: &[[f64; 2]]) -> f64 {
    let (ix, iy) = ws.pos;
    let mut cost = 0.0;
    for k in 1..=ws.h {
        let x = &states[k * ws.d..(k + 1) * ws.d];
        let dx = x[ix] - p.p_ref[0];
        let dy = x[iy] - p.p_ref[1];
        cost += ws.gammas[k] * (p.q[0] * dx * dx + p.q[1] * dy * dy);
    }
    for &u in controls {
        cost += control_cost(p, u);
    }
    cost
}

fn inflate(r: &Rect, m: f64) -> Rect {
    Rect::new(r.x_min - m, r.x_max + m, r.y_min - m, r.y_max + m)
}

/// Waypoint polyline from `start` to `goal` around blocking rectangles.
/// Blocking is tested against a thin inflation of each obstacle; waypoints
/// sit on a fatter inflation, so the tracked path keeps real clearance.
fn plan_route(start: (f64, f64), goal: (f64, f64), rects: &[Rect], d_min: f64) -> Vec<(f64, f64)> {
    let thin: Vec<Rect> = rects.iter().map(|r| inflate(r, d_min + 0.05)).collect();
    let fat: Vec<Rect> = rects.iter().map(|r| inflate(r, d_min + 0.35)).collect();
    let mut route = Vec::new();
    let mut pos = start;
    for _ in 0..4 {
        let dir = (goal.0 - pos.0, goal.1 - pos.1);
        let blocking = thin
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                r.ray_entry(pos, dir)
                    .filter(|&t| t > 1e-9 && t < 1.0 - 1e-9)
                    .map(|t| (t, i))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((_, i)) = blocking else {
            break;
        };
        let f = &fat[i];
        let corners =
            [(f.x_min, f.y_min), (f.x_min, f.y_max), (f.x_max, f.y_min), (f.x_max, f.y_max)];
        let mut best: Option<((f64, f64), f64)> = None;
        for c in corners {
            // A usable corner is visible from the current position and
            // resolves the blockage, meaning the onward leg to the goal
            // clears this rectangle too.
            let seg = (c.0 - pos.0, c.1 - pos.1);
            if thin[i].ray_entry(pos, seg).is_some_and(|t| t < 1.0 - 1e-6) {
                continue;
            }
            let onward = (goal.0 - c.0, goal.1 - c.1);
            if thin[i]
                .ray_entry(c, onward)
                .is_some_and(|t| t > 1e-9 && t < 1.0 - 1e-9)
            {
                continue;
            }
            let cost = seg.0.hypot(seg.1) + onward.0.hypot(onward.1);
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        let Some((c, _)) = best else {
            break;
        };
        route.push(c);
        pos = c;
    }
    route.push(goal);
    route
}

/// Initial control sequence from a tracking controller, so the optimizer
/// starts near a goal-reaching trajectory and only has to polish
/// constraints. The car drives a straight-line tracker toward the goal, in
/// reverse when that needs less turning, then spins in place into the
/// admissible heading window; the quadrotor flies a cascaded
/// position-attitude-thrust loop toward the goal reference, detouring
/// around obstacles.
fn warm_start(p: &MpcProblem, ws: &Ws, x0: &[f64]) -> Vec<[f64; 2]> {
    match p.model {
        MpcModel::Quad { params, f_min, f_max } => {
            let m = params.mass;
            let cv = params.drag_v;
            let route =
                plan_route((x0[0], x0[2]), (p.p_ref[0], p.p_ref[1]), &ws.rects, p.d_min);
            let mut leg = 0usize;
            let mut x = [0.0; MPC_MAX_DIM];
            x.copy_from_slice(x0);
            let mut f = [0.0; MPC_MAX_DIM];
            let mut controls = Vec::with_capacity(p.horizon);
            for _ in 0..p.horizon {
                while leg + 1 < route.len()
                    && (route[leg].0 - x[0]).hypot(route[leg].1 - x[2]) < 0.45
                {
                    leg += 1;
                }
                let target = route[leg];
                // Position loop: desired accelerations toward the
                // reference, braking limited by how little the rotors can
                // push (minimum thrust barely undercuts gravity).
                let ax = (2.0 * (target.0 - x[0]) - 2.8 * x[1]).clamp(-6.0, 6.0);
                let az = (2.0 * (target.1 - x[2]) - 2.8 * x[3]).clamp(-1.5, 6.0);
                // Specific force with gravity and drag feedforward.
                let fx = ax + cv / m * x[1];
                let fz = az + params.gravity + cv / m * x[3];
                let thrust = m * fx.hypot(fz);
                let psi_des = fx.atan2(fz).clamp(-1.2, 1.2);
                // Attitude loop down to a rotor differential.
                let omega_des = (4.0 * (psi_des - x[4])).clamp(-3.0, 3.0);
                let alpha = 10.0 * (omega_des - x[5]);
                let diff = (params.inertia * alpha + params.drag_psi * x[5]) / params.arm;
                let u = [
                    (0.5 * (thrust + diff)).clamp(f_min, f_max),
                    (0.5 * (thrust - diff)).clamp(f_min, f_max),
                ];
                p.model.deriv(&x, u, &mut f);
                for i in 0..6 {
                    x[i] += p.dt * f[i];
                }
                controls.push(u);
            }
            controls
        }
        MpcModel::Car { v_max, w_max } => {
            let (href, beta) = match p.goal {
                GoalSpec::Disk { heading_ref, cos_max, .. } => {
                    (heading_ref, cos_max.clamp(-1.0, 1.0).acos())
                }
                GoalSpec::Box { .. } => (0.0, 0.0),
            };
            let phi0 = (p.p_ref[1] - x0[1]).atan2(p.p_ref[0] - x0[0]);
            // Estimated turning effort of driving forward vs in reverse:
            // initial alignment plus the spin needed to leave the goal
            // heading window afterwards.
            let effort = |sign: f64| {
                let desired = if sign > 0.0 { phi0 } else { wrap_angle(phi0 + std::f64::consts::PI) };
                let turn = wrap_angle(desired - x0[2]).abs();
                let dev = wrap_angle(desired - href).abs();
                turn + (beta + 0.15 - dev).max(0.0)
            };
            let sign = if effort(1.0) <= effort(-1.0) { 1.0 } else { -1.0 };
            let mut x = [x0[0], x0[1], x0[2]];
            let mut f = [0.0; MPC_MAX_DIM];
            let mut controls = Vec::with_capacity(p.horizon);
            for _ in 0..p.horizon {
                let dx = p.p_ref[0] - x[0];
                let dy = p.p_ref[1] - x[1];
                let dist = dx.hypot(dy);
                let u = if dist > 0.25 {
                    let phi = dy.atan2(dx);
                    let desired = if sign > 0.0 { phi } else { wrap_angle(phi + std::f64::consts::PI) };
                    let err = wrap_angle(desired - x[2]);
                    let omega = (err / p.dt).clamp(-w_max, w_max);
                    let v = sign * v_max * (dist / 1.2).min(1.0) * err.cos().max(0.0);
                    [v, omega]
                } else {
                    // Spin toward the nearer edge of the admissible window.
                    let dev = wrap_angle(x[2] - href);
                    let want = beta + 0.15 - dev.abs();
                    let omega = if want > 0.0 {
                        (dev.signum() * want / p.dt).clamp(-w_max, w_max)
                    } else {
                        0.0
                    };
                    [0.0, omega]
                };
                p.model.deriv(&x, u, &mut f);
                for i in 0..3 {
                    x[i] += p.dt * f[i];
                }
                controls.push(u);
            }
            controls
        }
    }
}

fn terminal_in_goal(p: &MpcProblem, ws: &Ws, x: &[f64]) -> bool {
    let (ix, iy) = ws.pos;
    match p.goal {
        GoalSpec::Disk { center, radius, heading_ref, cos_max } => {
            let dx = x[ix] - center[0];
            let dy = x[iy] - center[1];
            dx * dx + dy * dy <= radius * radius && (x[2] - heading_ref).cos() <= cos_max
        }
        GoalSpec::Box { rect, psi_max } => {
            rect.contains((x[ix], x[iy])) && x[4].abs() <= psi_max
        }
    }
}

fn build_solution(
    p: &MpcProblem,
    ws: &Ws,
    states: &[f64],
    controls: Vec<[f64; 2]>,
    outer_history: Vec<OuterRecord>,
    diagnostic: Option<String>,
) -> MpcSolution {
    let d = ws.d;
    let (ix, iy) = ws.pos;
    let rows: Vec<Vec<f64>> = (0..=ws.h).map(|k| states[k * d..(k + 1) * d].to_vec()).collect();
    let mut min_clearance = f64::INFINITY;
    let mut max_box_excess = 0.0f64;
    let mut duals = Vec::with_capacity(ws.h + 1);
    for row in &rows {
        let pos = (row[ix], row[iy]);
        for r in &ws.rects {
            min_clearance = min_clearance.min(r.clearance(pos));
        }
        for i in 0..d {
            max_box_excess =
                max_box_excess.max(row[i] - p.state_hi[i]).max(p.state_lo[i] - row[i]);
        }
        duals.push(p.obstacles.iter().map(|o| rectangle_dual(o, pos)).collect());
    }
    let goal_ok = terminal_in_goal(p, ws, &rows[ws.h]);
    let finite = states.iter().all(|v| v.is_finite());
    let feasible = diagnostic.is_none()
        && finite
        && (ws.rects.is_empty() || min_clearance >= p.d_min + FEAS_EPS)
        && max_box_excess <= FEAS_EPS
        && goal_ok;
    MpcSolution {
        objective: smooth_objective(p, ws, states, &controls),
        states: rows,
        controls,
        duals,
        feasible,
        min_clearance: min_clearance.min(1e30),
        max_box_excess,
        terminal_in_goal: goal_ok,
        outer_history,
        diagnostic,
    }
}

/// Solves the trajectory problem from `x_init` with a penalty method:
/// preconditioned projected gradient descent on the merit inside, penalty
/// weight growth outside. A non-finite rollout marks the solution
/// infeasible with a diagnostic instead of erroring.
pub fn solve_mpc(p: &MpcProblem, x_init: &[f64]) -> Result<MpcSolution> {
    p.validate()?;
    let ws = Ws::new(p)?;
    if x_init.len() != ws.d {
        return Err(MbbError::Config(format!(
            "x_init has {} entries, model needs {}",
            x_init.len(),
            ws.d
        )));
    }
    if x_init.iter().any(|v| !v.is_finite()) {
        return Err(MbbError::Config("x_init must be finite".into()));
    }
    for i in 0..ws.d {
        if x_init[i] < p.state_lo[i] - 1e-9 || x_init[i] > p.state_hi[i] + 1e-9 {
            return Err(MbbError::Config(format!(
                "x_init[{i}] = {} outside the state box",
                x_init[i]
            )));
        }
    }

    let d = ws.d;
    let h = ws.h;
    let mut controls = warm_start(p, &ws, x_init);
    let mut states = vec![0.0; (h + 1) * d];
    let mut trial_states = vec![0.0; (h + 1) * d];
    let mut trial_controls = vec![[0.0; 2]; h];
    let mut grad = vec![[0.0; 2]; h];

    if !rollout(p, &ws, x_init, &controls, &mut states) {
        let diag = Some("non-finite rollout from the warm start".to_string());
        return Ok(build_solution(p, &ws, &states, controls, Vec::new(), diag));
    }

    let mut history = Vec::with_capacity(p.solver.outer_iters);
    let mut w = p.solver.penalty_init;
    for _ in 0..p.solver.outer_iters {
        let (mut m_cur, mut viol) = merit(p, &ws, w, &states, &controls);
        let mut record = OuterRecord {
            weight: w,
            merit_start: m_cur,
            merit_end: m_cur,
            objective: 0.0,
            max_violation: viol,
            inner_iters: 0,
            merit_trace: vec![m_cur],
        };
        let mut t = T_INIT;
        for _ in 0..p.solver.inner_iters {
            merit_grad(p, &ws, w, &states, &controls, &mut grad);
            let mut accepted = false;
            let mut step_inf = 0.0f64;
            while t >= T_MIN {
                step_inf = 0.0;
                for k in 0..h {
                    for c in 0..2 {
                        let u = (controls[k][c] - t * ws.precond[k] * grad[k][c])
                            .clamp(ws.u_lo[c], ws.u_hi[c]);
                        step_inf = step_inf.max((u - controls[k][c]).abs());
                        trial_controls[k][c] = u;
                    }
                }
                if step_inf > 0.0 && rollout(p, &ws, x_init, &trial_controls, &mut trial_states) {
                    let (m_new, v_new) = merit(p, &ws, w, &trial_states, &trial_controls);
                    if m_new < m_cur {
                        std::mem::swap(&mut controls, &mut trial_controls);
                        std::mem::swap(&mut states, &mut trial_states);
                        m_cur = m_new;
                        viol = v_new;
                        accepted = true;
                        t = (t * 1.5).min(T_MAX);
                        break;
                    }
                }
                t *= 0.5;
            }
            record.inner_iters += 1;
            if !accepted {
                break;
            }
            record.merit_trace.push(m_cur);
            if step_inf < STEP_TOL {
                break;
            }
        }
        record.merit_end = m_cur;
        record.max_violation = viol;
        record.objective = smooth_objective(p, &ws, &states, &controls);
        history.push(record);
        w *= p.solver.penalty_growth;
    }

    Ok(build_solution(p, &ws, &states, controls, history, None))
}
