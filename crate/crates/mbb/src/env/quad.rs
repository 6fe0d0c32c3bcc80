use serde::{Deserialize, Serialize};

/// Planar quadrotor state in the vertical x-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub x: f64,
    pub v_x: f64,
    pub z: f64,
    pub v_z: f64,
    pub psi: f64,
    pub omega: f64,
}

impl QuadState {
    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.v_x, self.z, self.v_z, self.psi, self.omega]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        QuadState { x: a[0], v_x: a[1], z: a[2], v_z: a[3], psi: a[4], omega: a[5] }
    }
}

/// Physical constants of the quadrotor model. The defaults put the hover
/// thrust (mg/2 ≈ 6.13 N per rotor) comfortably inside the control box
/// [5, 11].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: f64,
    pub arm: f64,
    pub drag_v: f64,
    pub drag_psi: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            mass: 1.25,
            gravity: 9.81,
            inertia: 0.03,
            arm: 0.5,
            drag_v: 0.25,
            drag_psi: 0.02255,
        }
    }
}

impl QuadParams {
    /// Per-rotor thrust that balances gravity at zero pitch.
    pub fn hover_thrust(&self) -> f64 {
        0.5 * self.mass * self.gravity
    }
}

/// Continuous-time vector field of the 6-D quadrotor ODE.
pub fn quad_deriv(s: &QuadState, f1: f64, f2: f64, p: &QuadParams) -> [f64; 6] {
    let thrust = f1 + f2;
    [
        s.v_x,
        -p.drag_v / p.mass * s.v_x + thrust / p.mass * s.psi.sin(),
        s.v_z,
        -p.gravity - p.drag_v / p.mass * s.v_z + thrust / p.mass * s.psi.cos(),
        s.omega,
        -p.drag_psi / p.inertia * s.omega + p.arm / p.inertia * (f1 - f2),
    ]
}

/// One forward-Euler step; thrusts are clamped to `[f_min, f_max]` each.
/// Pitch is not wrapped: `|ψ| > π/2` is terminal before wrapping matters.
pub fn step_quad(
    s: &QuadState,
    f1: f64,
    f2: f64,
    dt: f64,
    f_min: f64,
    f_max: f64,
    p: &QuadParams,
) -> QuadState {
    let f1 = f1.clamp(f_min, f_max);
    let f2 = f2.clamp(f_min, f_max);
    let d = quad_deriv(s, f1, f2, p);
    let a = s.as_array();
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = a[i] + dt * d[i];
    }
    QuadState::from_array(out)
}
