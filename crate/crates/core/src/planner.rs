//! Elastic-band reference generator.
//!
//! The desired end-effector point is a unit-mass particle pulled toward the
//! target by the convergence branch of the impedance attractor. Released at
//! rest, it follows a harmonic half-cycle that arrives with zero velocity,
//! giving the bell-shaped speed profile of human reaches.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::fic::{self, FicPhase, LinearProfile, Mode, DEADBAND};
use crate::{Error, Result};

/// Stiffness giving peak acceleration `a_max` on a reach of length `d0`.
pub fn compute_kd(a_max: f64, d0: f64, m_d: f64) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::AlreadyAtTarget);
    }
    if !(a_max >= 0.0) {
        return Err(Error::invalid("a_max", "must be non-negative"));
    }
    if !(m_d > 0.0) {
        return Err(Error::invalid("m_d", "must be positive"));
    }
    Ok(m_d * a_max / d0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// Convergence half-cycle of the impedance attractor.
    #[default]
    Fic,
    /// Plain spring toward the target, stopped at the first arrival.
    Spring,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub k_d: f64,
    pub m_d: f64,
    pub a_max: f64,
    pub mode: BandMode,
}

impl BandParams {
    pub fn new(k_d: f64, m_d: f64, a_max: f64) -> Result<Self> {
        for (name, v) in [("k_d", k_d), ("m_d", m_d), ("a_max", a_max)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(BandParams {
            k_d,
            m_d,
            a_max,
            mode: BandMode::Fic,
        })
    }

    /// Stiffness chosen so that a reach of `d0` peaks at `a_max`.
    pub fn for_reach(a_max: f64, m_d: f64, d0: f64) -> Result<Self> {
        BandParams::new(compute_kd(a_max, d0, m_d)?, m_d, a_max)
    }

    pub fn with_mode(self, mode: BandMode) -> Self {
        BandParams { mode, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSample {
    pub t: f64,
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl PlanSample {
    pub fn at_rest(t: f64, x: Vector3<f64>) -> Self {
        PlanSample {
            t,
            x,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
        }
    }
}

/// One reach from rest, evaluated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reach {
    pub start: Vector3<f64>,
    pub target: Vector3<f64>,
    pub t0: f64,
    omega: f64,
    duration: f64,
    mode: BandMode,
}

impl Reach {
    pub fn new(start: Vector3<f64>, target: Vector3<f64>, t0: f64, params: &BandParams) -> Self {
        let (omega, duration) = match params.mode {
            BandMode::Fic => {
                let w = (2.0 * params.k_d / params.m_d).sqrt();
                (w, PI / w)
            }
            BandMode::Spring => {
                let w = (params.k_d / params.m_d).sqrt();
                (w, 0.5 * PI / w)
            }
        };
        let duration = if start == target { 0.0 } else { duration };
        Reach {
            start,
            target,
            t0,
            omega,
            duration,
            mode: params.mode,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.duration
    }

    pub fn sample(&self, t: f64) -> PlanSample {
        let tau = t - self.t0;
        if tau <= 0.0 {
            return PlanSample::at_rest(t, self.start);
        }
        if tau >= self.duration {
            return PlanSample::at_rest(t, self.target);
        }
        let d = self.start - self.target;
        let w = self.omega;
        let (sin, cos) = (w * tau).sin_cos();
        // fraction of the initial offset still to cover, and its derivatives
        let (s, sd, sdd) = match self.mode {
            BandMode::Fic => (0.5 * (1.0 + cos), -0.5 * w * sin, -0.5 * w * w * cos),
            BandMode::Spring => (cos, -w * sin, -w * w * cos),
        };
        PlanSample {
            t,
            x: self.target + d * s,
            v: d * sd,
            a: d * sdd,
        }
    }
}

/// Samples a reach from `start` to `x_t` at step `dt`, from rest until the
/// band is clamped at the target.
pub fn plan_reach(
    start: &Vector3<f64>,
    x_t: &Vector3<f64>,
    params: &BandParams,
    dt: f64,
) -> Result<Vec<PlanSample>> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let reach = Reach::new(*start, *x_t, 0.0, params);
    let n = (reach.duration() / dt).ceil() as usize;
    Ok((0..=n).map(|i| reach.sample(i as f64 * dt)).collect())
}

/// Stateful band that can be retargeted mid-motion; position and velocity
/// carry over and only the acceleration jumps.
///
/// Each Cartesian axis runs its own attractor and phase machine, so a band
/// retargeted while moving sideways still settles on the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticBand {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub target: Vector3<f64>,
    pub t: f64,
    params: BandParams,
    phases: [FicPhase; 3],
}

impl ElasticBand {
    pub fn new(x: Vector3<f64>, target: Vector3<f64>, params: BandParams) -> Self {
        let mut band = ElasticBand {
            x,
            v: Vector3::zeros(),
            target,
            t: 0.0,
            params,
            phases: [FicPhase::at_goal(); 3],
        };
        band.retarget(target);
        band
    }

    pub fn retarget(&mut self, target: Vector3<f64>) {
        self.target = target;
        for i in 0..3 {
            let (disp, rate) = self.axis_error(i);
            self.phases[i] = fic::update_phase(FicPhase::at_goal(), disp, rate);
        }
    }

    pub fn phases(&self) -> [FicPhase; 3] {
        self.phases
    }

    fn axis_error(&self, i: usize) -> (f64, f64) {
        let e = self.x[i] - self.target[i];
        (e.abs(), e.signum() * self.v[i])
    }

    fn accel(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let profile = LinearProfile {
            stiffness: self.params.k_d,
        };
        Vector3::from_fn(|i, _| {
            let e = x[i] - self.target[i];
            -e.signum() * fic::fic_force_linear(e.abs(), &profile, &self.phases[i]) / self.params.m_d
        })
    }

    pub fn sample(&self) -> PlanSample {
        PlanSample {
            t: self.t,
            x: self.x,
            v: self.v,
            a: self.accel(&self.x),
        }
    }

    /// RK4 step of the particle, then the phase updates.
    pub fn step(&mut self, dt: f64) -> PlanSample {
        let (x, v) = (self.x, self.v);
        let k1 = (v, self.accel(&x));
        let k2 = (v + 0.5 * dt * k1.1, self.accel(&(x + 0.5 * dt * k1.0)));
        let k3 = (v + 0.5 * dt * k2.1, self.accel(&(x + 0.5 * dt * k2.0)));
        let k4 = (v + dt * k3.1, self.accel(&(x + dt * k3.0)));
        self.x = x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        self.v = v + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        self.t += dt;
        for i in 0..3 {
            let (disp, rate) = self.axis_error(i);
            self.phases[i] = fic::update_phase(self.phases[i], disp, rate);
            if self.phases[i].mode == Mode::Divergence && self.phases[i].disp_max <= DEADBAND {
                self.x[i] = self.target[i];
                self.v[i] = 0.0;
            }
        }
        self.sample()
    }
}
