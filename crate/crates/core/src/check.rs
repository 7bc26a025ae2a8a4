//! Self-check suite behind `wrist-fic --check`.
//!
//! Each check draws its own seeded samples, so results are reproducible for a
//! given seed.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{integrate_step, rk4_step_raw, BodyModel, Passive, WristState};
use crate::rotations::{
    euler_xyz_from_quat, project_to_sphere, torsion_about_pointer, Quat, POINTER_AXIS,
};

pub const ROUND_TRIP_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        phi_equivariance(seed, 10_000),
        pointing_consistency(seed.wrapping_add(1), 10_000),
        euler_round_trip(seed.wrapping_add(2), ROUND_TRIP_SAMPLES),
        integrator_order(),
        norm_drift(seed.wrapping_add(3), 2_000),
    ]
}

/// Uniform random rotation (Shoemake).
pub fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quat::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    )
}

/// Random point in front of the wrist: x > 0 with a bounded lateral spread.
fn random_target<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(0.05..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

/// Same rotation up to the double cover.
fn rotation_gap(a: &Quat, b: &Quat) -> f64 {
    let d = a.as_array();
    let e = b.as_array();
    let minus: f64 = d.iter().zip(&e).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let plus: f64 = d.iter().zip(&e).map(|(p, q)| (p + q).abs()).fold(0.0, f64::max);
    minus.min(plus)
}

/// Changing φ only right-composes a twist about the pointer.
pub fn phi_equivariance(seed: u64, n: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Vector3::zeros();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let x = random_target(&mut rng);
        let phi = rng.gen_range(-3.0..3.0);
        let q0 = project_to_sphere(&x, &base, 0.0).expect("target away from base");
        let q = project_to_sphere(&x, &base, phi).expect("target away from base");
        let twisted = q0 * Quat::from_axis_angle(&POINTER_AXIS, phi);
        worst = worst.max(rotation_gap(&q, &twisted));
        let dphi = (torsion_about_pointer(&q) - phi).abs();
        worst = worst.max(dphi);
    }
    CheckOutcome::new(
        "phi-equivariance",
        worst <= 1e-10,
        format!("{n} samples, worst deviation {worst:.3e}"),
    )
}

/// The projected orientation points the body x axis at the target.
pub fn pointing_consistency(seed: u64, n: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let base = Vector3::new(
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        );
        let x = base + random_target(&mut rng);
        let phi = rng.gen_range(-3.0..3.0);
        let q = project_to_sphere(&x, &base, phi).expect("target away from base");
        let r = q.rotate(&POINTER_AXIS);
        worst = worst.max((r - (x - base).normalize()).norm());
        worst = worst.max((q.norm() - 1.0).abs());
    }
    CheckOutcome::new(
        "pointing-consistency",
        worst <= 1e-10,
        format!("{n} samples, worst deviation {worst:.3e}"),
    )
}

/// quat -> XYZ Euler -> quat reproduces the rotation away from gimbal lock.
pub fn euler_round_trip(seed: u64, n: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut skipped = 0usize;
    for _ in 0..n {
        let q = random_quat(&mut rng);
        match euler_xyz_from_quat(&q) {
            Ok(e) => worst = worst.max(rotation_gap(&q, &e.to_quat())),
            Err(_) => skipped += 1,
        }
    }
    CheckOutcome::new(
        "euler-round-trip",
        worst <= 1e-9 && skipped < n / 100,
        format!("{n} samples ({skipped} gimbal-degenerate), worst deviation {worst:.3e}"),
    )
}

fn tumbling_start() -> (BodyModel, WristState) {
    let body = BodyModel::wrist_default(true);
    let mut s = WristState::at_rest(Quat::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7));
    s.omega = Vector3::new(3.0, -2.0, 5.0);
    (body, s)
}

fn propagate(dt: f64, steps: usize) -> WristState {
    let (body, mut s) = tumbling_start();
    for _ in 0..steps {
        s = rk4_step_raw(&s, &Passive, &body, dt);
    }
    s
}

fn state_gap(a: &WristState, b: &WristState) -> f64 {
    rotation_gap(&a.q, &b.q).max((a.omega - b.omega).norm())
}

/// Observed convergence order of the fixed-step integrator on a tumbling,
/// gravity-loaded hand, against a fine-step reference.
pub fn observed_order() -> f64 {
    let t_end = 0.2;
    let reference = propagate(t_end / 6400.0, 6400);
    let coarse = state_gap(&propagate(t_end / 50.0, 50), &reference);
    let fine = state_gap(&propagate(t_end / 100.0, 100), &reference);
    (coarse / fine).log2()
}

pub fn integrator_order() -> CheckOutcome {
    let p = observed_order();
    CheckOutcome::new(
        "integrator-order",
        (3.5..=4.5).contains(&p),
        format!("observed order {p:.3}"),
    )
}

/// Norm error a single un-normalized step introduces, from random states at
/// the simulation sub-step.
pub fn max_norm_drift(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = BodyModel::wrist_default(true);
    let dt = 1e-3 / 20.0;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let mut s = WristState::at_rest(random_quat(&mut rng));
        s.omega = Vector3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let next = rk4_step_raw(&s, &Passive, &body, dt);
        worst = worst.max((next.q.norm() - s.q.norm()).abs());
    }
    // and along a long normalized run
    let (body, mut s) = tumbling_start();
    for _ in 0..20_000 {
        let raw = rk4_step_raw(&s, &Passive, &body, dt);
        worst = worst.max((raw.q.norm() - 1.0).abs());
        s = integrate_step(&s, &mut Passive, &body, dt);
    }
    worst
}

pub fn norm_drift(seed: u64, n: usize) -> CheckOutcome {
    let worst = max_norm_drift(seed, n);
    CheckOutcome::new(
        "norm-drift",
        worst <= 1e-9,
        format!("worst per-step norm change {worst:.3e}"),
    )
}
