//! Rigid box-shaped hand on an ideal spherical joint, with fixed-step RK4 and
//! adaptive Dormand–Prince 4(5) integration of the closed loop.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::rotations::Quat;
use crate::{Error, Result};

/// Smallest step the adaptive integrator may take before giving up.
const MIN_ADAPTIVE_STEP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub mass: f64,
    /// Box extent along body x (the pointer).
    pub h: f64,
    /// Box extent along body y.
    pub l: f64,
    /// Box extent along body z.
    pub t: f64,
    /// Centre of mass relative to the joint, body frame.
    pub com_offset: Vector3<f64>,
    /// Inertia about the joint, body frame.
    pub inertia_joint: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    /// World-frame gravitational acceleration.
    pub gravity: Vector3<f64>,
}

pub const STANDARD_GRAVITY: f64 = 9.81;

impl BodyModel {
    pub fn new(
        mass: f64,
        (h, l, t): (f64, f64, f64),
        com_offset: Vector3<f64>,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        let inertia_joint = inertia_box(mass, h, l, t, &com_offset)?;
        let inertia_inv = inertia_joint
            .try_inverse()
            .ok_or_else(|| Error::invalid("inertia", "singular"))?;
        Ok(BodyModel {
            mass,
            h,
            l,
            t,
            com_offset,
            inertia_joint,
            inertia_inv,
            gravity,
        })
    }

    /// 1 kg hand of 0.10 × 0.08 × 0.02 m, attached to the joint at one end of
    /// its pointer dimension.
    pub fn wrist_default(gravity_on: bool) -> Self {
        let g = if gravity_on {
            Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
        } else {
            Vector3::zeros()
        };
        BodyModel::new(1.0, (0.1, 0.08, 0.02), Vector3::new(0.05, 0.0, 0.0), g)
            .expect("default body is valid")
    }

    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Self {
        BodyModel {
            gravity,
            ..self.clone()
        }
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    pub fn kinetic_energy(&self, state: &WristState) -> f64 {
        0.5 * state.omega.dot(&(self.inertia_joint * state.omega))
    }

    pub fn potential_energy(&self, q: &Quat) -> f64 {
        -self.mass * self.gravity.dot(&q.rotate(&self.com_offset))
    }

    /// World-frame angular momentum about the joint.
    pub fn angular_momentum(&self, state: &WristState) -> Vector3<f64> {
        state.q.rotate(&(self.inertia_joint * state.omega))
    }
}

/// Box inertia about the joint: central box tensor plus the parallel-axis term.
pub fn inertia_box(mass: f64, h: f64, l: f64, t: f64, com: &Vector3<f64>) -> Result<Matrix3<f64>> {
    for (name, v) in [("mass", mass), ("H", h), ("L", l), ("T", t)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    let c = mass / 12.0;
    let central = Matrix3::from_diagonal(&Vector3::new(
        c * (l * l + t * t),
        c * (h * h + t * t),
        c * (h * h + l * l),
    ));
    let shift = mass * (Matrix3::identity() * com.norm_squared() - com * com.transpose());
    Ok(central + shift)
}

/// Gravity torque about the joint, body frame.
pub fn gravity_torque(q: &Quat, body: &BodyModel) -> Vector3<f64> {
    if body.gravity == Vector3::zeros() {
        return Vector3::zeros();
    }
    let g_body = q.conjugate().rotate(&body.gravity);
    body.com_offset.cross(&(body.mass * g_body))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WristState {
    /// Body to world.
    pub q: Quat,
    /// Body-frame angular velocity.
    pub omega: Vector3<f64>,
    pub t: f64,
}

impl WristState {
    pub fn at_rest(q: Quat) -> Self {
        WristState {
            q,
            omega: Vector3::zeros(),
            t: 0.0,
        }
    }

    fn to_vector(self) -> SVector<f64, 7> {
        SVector::<f64, 7>::from_column_slice(&[
            self.q.s,
            self.q.v.x,
            self.q.v.y,
            self.q.v.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
        ])
    }

    fn from_vector(y: &SVector<f64, 7>, t: f64) -> Self {
        WristState {
            q: Quat::new(y[0], y[1], y[2], y[3]),
            omega: Vector3::new(y[4], y[5], y[6]),
            t,
        }
    }
}

/// Time derivative of a [`WristState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub q_dot: Quat,
    pub omega_dot: Vector3<f64>,
}

/// Euler's rotational equations plus quaternion kinematics.
pub fn dynamics_rhs(state: &WristState, torque_body: &Vector3<f64>, body: &BodyModel) -> StateRate {
    let w = state.omega;
    let tau = torque_body + gravity_torque(&state.q, body) - w.cross(&(body.inertia_joint * w));
    let omega_dot = body.inertia_inv * tau;
    let q_dot = state.q * Quat { s: 0.0, v: w };
    StateRate {
        q_dot: Quat {
            s: 0.5 * q_dot.s,
            v: 0.5 * q_dot.v,
        },
        omega_dot,
    }
}

/// Closed-loop torque source evaluated by the integrators.
pub trait Controller {
    /// Body-frame applied torque at time `t` for `state`; must not mutate
    /// controller memory (called at every integrator stage).
    fn torque(&self, t: f64, state: &WristState) -> Vector3<f64>;

    /// Called once per accepted step of length `dt` ending at `state`.
    fn after_step(&mut self, _state: &WristState, _dt: f64) {}
}

/// No applied torque.
pub struct Passive;

impl Controller for Passive {
    fn torque(&self, _t: f64, _state: &WristState) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Open-loop body torque as a function of time.
pub struct OpenLoop<F>(pub F);

impl<F: Fn(f64) -> Vector3<f64>> Controller for OpenLoop<F> {
    fn torque(&self, t: f64, _state: &WristState) -> Vector3<f64> {
        (self.0)(t)
    }
}

fn rate_vector<C: Controller + ?Sized>(
    t: f64,
    y: &SVector<f64, 7>,
    ctrl: &C,
    body: &BodyModel,
) -> SVector<f64, 7> {
    let state = WristState::from_vector(y, t);
    let r = dynamics_rhs(&state, &ctrl.torque(t, &state), body);
    SVector::<f64, 7>::from_column_slice(&[
        r.q_dot.s,
        r.q_dot.v.x,
        r.q_dot.v.y,
        r.q_dot.v.z,
        r.omega_dot.x,
        r.omega_dot.y,
        r.omega_dot.z,
    ])
}

/// One classic RK4 step without renormalization or controller update.
pub fn rk4_step_raw<C: Controller + ?Sized>(
    state: &WristState,
    ctrl: &C,
    body: &BodyModel,
    dt: f64,
) -> WristState {
    let t = state.t;
    let y = state.to_vector();
    let k1 = rate_vector(t, &y, ctrl, body);
    let k2 = rate_vector(t + 0.5 * dt, &(y + 0.5 * dt * k1), ctrl, body);
    let k3 = rate_vector(t + 0.5 * dt, &(y + 0.5 * dt * k2), ctrl, body);
    let k4 = rate_vector(t + dt, &(y + dt * k3), ctrl, body);
    let y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    WristState::from_vector(&y_new, t + dt)
}

/// Fixed-step RK4: advances plant and controller by `dt` and renormalizes q.
pub fn integrate_step<C: Controller + ?Sized>(
    state: &WristState,
    ctrl: &mut C,
    body: &BodyModel,
    dt: f64,
) -> WristState {
    let mut next = rk4_step_raw(state, ctrl, body, dt);
    next.q = next.q.normalize();
    ctrl.after_step(&next, dt);
    next
}

// Dormand–Prince 5(4) tableau
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive embedded 4(5) integration from `state.t` to `t_end`.
///
/// `h` carries the step-size guess in and the last proposal out. The
/// controller's `after_step` runs on every accepted step.
pub fn integrate_adaptive<C: Controller + ?Sized>(
    state: &WristState,
    ctrl: &mut C,
    body: &BodyModel,
    t_end: f64,
    rel_tol: f64,
    h: &mut f64,
) -> Result<WristState> {
    if !(1e-12..=1e-3).contains(&rel_tol) {
        return Err(Error::invalid("rel_tol", "must lie in [1e-12, 1e-3]"));
    }
    let mut t = state.t;
    let mut y = state.to_vector();
    if *h <= 0.0 {
        *h = 1e-4;
    }
    while t < t_end {
        let last = t + *h >= t_end;
        let step = if last { t_end - t } else { *h };
        let mut k = [SVector::<f64, 7>::zeros(); 7];
        for i in 0..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                yi += step * DP_A[i][j] * kj;
            }
            k[i] = rate_vector(t + DP_C[i] * step, &yi, ctrl, body);
        }
        let mut y5 = y;
        let mut y4 = y;
        for i in 0..7 {
            y5 += step * DP_B5[i] * k[i];
            y4 += step * DP_B4[i] * k[i];
        }
        let err = (0..7)
            .map(|i| {
                let scale = rel_tol * y[i].abs().max(y5[i].abs()).max(1.0);
                ((y5[i] - y4[i]) / scale).powi(2)
            })
            .sum::<f64>()
            .sqrt()
            / 7f64.sqrt();
        if err <= 1.0 {
            t = if last { t_end } else { t + step };
            let mut next = WristState::from_vector(&y5, t);
            next.q = next.q.normalize();
            y = next.to_vector();
            ctrl.after_step(&next, step);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
            if !last {
                *h = step * grow;
            }
        } else {
            *h = step * (0.9 * err.powf(-0.2)).max(0.2);
            if *h < MIN_ADAPTIVE_STEP {
                return Err(Error::IntegrationFailed { t, step: *h });
            }
        }
    }
    Ok(WristState::from_vector(&y, t_end))
}
