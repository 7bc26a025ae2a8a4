//! Clock pointing task: closed-loop trials, tracking metrics and
//! Listing's-surface analysis.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    gravity_torque, integrate_adaptive, integrate_step, BodyModel, Controller, WristState,
    STANDARD_GRAVITY,
};
use crate::fic::{QuatFic, TorqueAxis};
use crate::planner::{BandMode, BandParams, PlanSample, Reach};
use crate::rotations::{
    euler_xyz_from_quat, project_to_sphere_with, EulerXyz, Quat, TorsionOrder, POINTER_AXIS,
};
use crate::{Error, Result};

/// Targets on a circle in the plane `x = plane_x`, seen from the wrist at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockTask {
    pub plane_x: f64,
    pub radius: f64,
    pub n_targets: usize,
    pub base: Vector3<f64>,
}

impl Default for ClockTask {
    fn default() -> Self {
        ClockTask {
            plane_x: 0.30,
            radius: 0.10,
            n_targets: 8,
            base: Vector3::zeros(),
        }
    }
}

impl ClockTask {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.plane_x, 0.0, 0.0)
    }

    /// Target `k` sits at angle π/2 + 2πk/n in the (y, z) plane: index 0 is
    /// the top target, increasing indices run counter-clockwise.
    pub fn target(&self, k: usize) -> Vector3<f64> {
        let a = std::f64::consts::FRAC_PI_2
            + 2.0 * std::f64::consts::PI * k as f64 / self.n_targets as f64;
        Vector3::new(self.plane_x, self.radius * a.cos(), self.radius * a.sin())
    }

    pub fn targets(&self) -> Vec<Vector3<f64>> {
        (0..self.n_targets).map(|k| self.target(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.plane_x > self.base.x) {
            return Err(Error::invalid("task.plane_x", "plane must lie in front of the base"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid("task.radius", "must be positive"));
        }
        if self.n_targets == 0 {
            return Err(Error::invalid("task.n_targets", "must be at least 1"));
        }
        Ok(())
    }
}

/// Piecewise-constant signal: `(start_time, value)` breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    pub steps: Vec<(f64, f64)>,
}

impl Piecewise {
    pub fn constant(value: f64) -> Self {
        Piecewise {
            steps: vec![(0.0, value)],
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.steps.partition_point(|&(t0, _)| t0 <= t);
        self.steps[i.saturating_sub(1)].1
    }

    pub fn max(&self) -> f64 {
        self.steps.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self, field: &str, positive: bool) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid(field, "schedule is empty"));
        }
        if self.steps[0].0 != 0.0 {
            return Err(Error::invalid(field, "first breakpoint must be at t = 0"));
        }
        if self.steps.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid(field, "breakpoints must be strictly increasing"));
        }
        for &(_, v) in &self.steps {
            if !v.is_finite() || (positive && !(v > 0.0)) {
                return Err(Error::invalid(
                    field,
                    if positive {
                        "values must be positive and finite"
                    } else {
                        "values must be finite"
                    },
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    /// Controller stiffness, N·m/rad.
    pub stiffness: Piecewise,
    /// Torsion about the pointer, rad.
    pub phi: Piecewise,
    /// Clock targets visited in order, center-out and back.
    pub targets: Vec<usize>,
    pub gravity: bool,
}

impl ParamSchedule {
    pub fn constant(stiffness: f64, phi: f64, gravity: bool, targets: Vec<usize>) -> Self {
        ParamSchedule {
            stiffness: Piecewise::constant(stiffness),
            phi: Piecewise::constant(phi),
            targets,
            gravity,
        }
    }

    pub fn validate(&self, task: &ClockTask) -> Result<()> {
        self.stiffness.validate("stiffness", true)?;
        self.phi.validate("phi", false)?;
        if let Some(&k) = self.targets.iter().find(|&&k| k >= task.n_targets) {
            return Err(Error::invalid(
                "targets",
                format!("index {k} outside 0..{}", task.n_targets),
            ));
        }
        Ok(())
    }
}

/// Dwell times of the center-out protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub initial_dwell: f64,
    pub dwell: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            initial_dwell: 0.5,
            dwell: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub a_max: f64,
    pub m_d: f64,
    pub mode: BandMode,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            a_max: 3.2,
            m_d: 1.0,
            mode: BandMode::Fic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// RK4 with `substeps` equal steps per output sample.
    Fixed { substeps: usize },
    /// Dormand–Prince 4(5) between output samples.
    Adaptive { rel_tol: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Fixed { substeps: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub sample_rate: f64,
    pub integrator: Integrator,
    pub torque_axis: TorqueAxis,
    pub torsion_order: TorsionOrder,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            sample_rate: 1000.0,
            integrator: Integrator::default(),
            torque_axis: TorqueAxis::default(),
            torsion_order: TorsionOrder::default(),
        }
    }
}

/// Center-out-and-back reference for a whole trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub start: Vector3<f64>,
    pub reaches: Vec<Reach>,
    pub end: f64,
}

impl Timeline {
    pub fn build(
        task: &ClockTask,
        targets: &[usize],
        band: &BandConfig,
        protocol: &Protocol,
    ) -> Result<Self> {
        let center = task.center();
        let mut t = protocol.initial_dwell;
        let mut reaches = Vec::with_capacity(2 * targets.len());
        for &k in targets {
            let goal = task.target(k);
            for (from, to) in [(center, goal), (goal, center)] {
                let d0 = (to - from).norm();
                let params = BandParams::for_reach(band.a_max, band.m_d, d0)?.with_mode(band.mode);
                let reach = Reach::new(from, to, t, &params);
                t = reach.end_time() + protocol.dwell;
                reaches.push(reach);
            }
        }
        Ok(Timeline {
            start: center,
            reaches,
            end: t,
        })
    }

    /// Index of the reach governing time `t`, if any has started.
    pub fn reach_index(&self, t: f64) -> Option<usize> {
        self.reaches.partition_point(|r| r.t0 <= t).checked_sub(1)
    }

    pub fn sample(&self, t: f64) -> PlanSample {
        match self.reach_index(t) {
            Some(i) => self.reaches[i].sample(t),
            None => PlanSample::at_rest(t, self.start),
        }
    }

    /// Commanded goal of the current reach.
    pub fn goal(&self, t: f64) -> Vector3<f64> {
        match self.reach_index(t) {
            Some(i) => self.reaches[i].target,
            None => self.start,
        }
    }
}

/// Ray from `base` along the pointer, intersected with the plane `x = plane_x`.
pub fn pointer_intersection(q: &Quat, base: &Vector3<f64>, plane_x: f64) -> Result<Vector3<f64>> {
    let r = q.rotate(&POINTER_AXIS);
    if r.x.abs() <= 1e-6 {
        return Err(Error::NoPlaneIntersection);
    }
    let lambda = (plane_x - base.x) / r.x;
    Ok(base + lambda * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x_d: Vector3<f64>,
    /// Planned velocity.
    pub v_d: Vector3<f64>,
    pub q_d: Quat,
    pub q: Quat,
    pub omega: Vector3<f64>,
    /// Commanded controller torque, base frame.
    pub tau_c: Vector3<f64>,
    /// Gravity torque, body frame.
    pub tau_g: Vector3<f64>,
    /// Pointer intersection with the target plane.
    pub x: Vector3<f64>,
    /// Goal of the current reach.
    pub x_t: Vector3<f64>,
    pub stiffness: f64,
    pub phi: f64,
    pub theta: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Start and end time of every reach.
    pub reaches: Vec<(f64, f64)>,
}

struct TrialController<'a> {
    timeline: &'a Timeline,
    schedule: &'a ParamSchedule,
    base: Vector3<f64>,
    order: TorsionOrder,
    fic: QuatFic,
    reach: Option<usize>,
}

impl TrialController<'_> {
    fn desired(&self, t: f64) -> (PlanSample, Quat) {
        let plan = self.timeline.sample(t);
        let q_d = project_to_sphere_with(&plan.x, &self.base, self.schedule.phi.value_at(t), self.order)
            .expect("reference stays in front of the wrist");
        (plan, q_d)
    }
}

impl Controller for TrialController<'_> {
    fn torque(&self, t: f64, state: &WristState) -> Vector3<f64> {
        let (_, q_d) = self.desired(t);
        let k = self.schedule.stiffness.value_at(t);
        let world = self.fic.torque(&state.q, &q_d, k).torque;
        state.q.conjugate().rotate(&world)
    }

    fn after_step(&mut self, state: &WristState, dt: f64) {
        let reach = self.timeline.reach_index(state.t);
        if reach != self.reach {
            self.reach = reach;
            self.fic.reset();
        }
        let (_, q_d) = self.desired(state.t);
        self.fic.advance(&state.q, &q_d, dt);
    }
}

/// Closed-loop simulation of one condition, recorded at `sim.sample_rate`.
pub fn run_trial(
    schedule: &ParamSchedule,
    task: &ClockTask,
    body: &BodyModel,
    band: &BandConfig,
    protocol: &Protocol,
    sim: &SimSettings,
) -> Result<Trajectory> {
    task.validate()?;
    schedule.validate(task)?;
    if !(sim.sample_rate > 0.0) {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    let gravity = if schedule.gravity {
        if body.gravity == Vector3::zeros() {
            Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
        } else {
            body.gravity
        }
    } else {
        Vector3::zeros()
    };
    let body = body.with_gravity(gravity);
    let timeline = Timeline::build(task, &schedule.targets, band, protocol)?;
    let mut ctrl = TrialController {
        timeline: &timeline,
        schedule,
        base: task.base,
        order: sim.torsion_order,
        fic: QuatFic::new(sim.torque_axis),
        reach: None,
    };

    let dt = 1.0 / sim.sample_rate;
    let n = (timeline.end / dt).round() as usize;
    let (_, q0) = ctrl.desired(0.0);
    let mut state = WristState::at_rest(q0);
    let mut h_adaptive = 0.0;
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * dt;
        state.t = t;
        let (plan, q_d) = ctrl.desired(t);
        let k = schedule.stiffness.value_at(t);
        let out = ctrl.fic.torque(&state.q, &q_d, k);
        samples.push(Sample {
            t,
            x_d: plan.x,
            v_d: plan.v,
            q_d,
            q: state.q,
            omega: state.omega,
            tau_c: out.torque,
            tau_g: gravity_torque(&state.q, &body),
            x: pointer_intersection(&state.q, &task.base, task.plane_x)?,
            x_t: timeline.goal(t),
            stiffness: k,
            phi: schedule.phi.value_at(t),
            theta: out.theta,
            theta_max: out.phase.disp_max,
        });
        if i == n {
            break;
        }
        let t_next = (i + 1) as f64 * dt;
        match sim.integrator {
            Integrator::Fixed { substeps } => {
                let substeps = substeps.max(1);
                let h = dt / substeps as f64;
                for j in 0..substeps {
                    state.t = t + j as f64 * h;
                    state = integrate_step(&state, &mut ctrl, &body, h);
                }
            }
            Integrator::Adaptive { rel_tol } => {
                state = integrate_adaptive(&state, &mut ctrl, &body, t_next, rel_tol, &mut h_adaptive)?;
            }
        }
        if !state.q.s.is_finite() || !state.omega.iter().all(|w| w.is_finite()) {
            return Err(Error::IntegrationFailed { t: t_next, step: dt });
        }
    }
    Ok(Trajectory {
        samples,
        reaches: timeline
            .reaches
            .iter()
            .map(|r| (r.t0, r.end_time()))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// RMS pointer error against the planned point.
    pub rmse_y: f64,
    pub rmse_z: f64,
    /// Mean and standard deviation of the commanded torque norm.
    pub effort_mean: f64,
    pub effort_std: f64,
    /// RMS pointer error against the commanded goal of each reach.
    pub rmse_target_y: f64,
    pub rmse_target_z: f64,
}

pub fn compute_metrics(traj: &Trajectory) -> Result<TrialMetrics> {
    let s = &traj.samples;
    if s.is_empty() {
        return Err(Error::NoSamples("empty trajectory".into()));
    }
    let n = s.len() as f64;
    let rms = |f: &dyn Fn(&Sample) -> f64| (s.iter().map(|x| f(x).powi(2)).sum::<f64>() / n).sqrt();
    let effort_mean = s.iter().map(|x| x.tau_c.norm()).sum::<f64>() / n;
    let effort_var = s
        .iter()
        .map(|x| (x.tau_c.norm() - effort_mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(TrialMetrics {
        rmse_y: rms(&|x| x.x.y - x.x_d.y),
        rmse_z: rms(&|x| x.x.z - x.x_d.z),
        effort_mean,
        effort_std: effort_var.sqrt(),
        rmse_target_y: rms(&|x| x.x.y - x.x_t.y),
        rmse_target_z: rms(&|x| x.x.z - x.x_t.z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Measured,
    Desired,
}

/// Euler-XYZ samples of the orientations visited during a condition.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ListingSurface {
    pub points: Vec<EulerXyz>,
}

pub fn extract_listing<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    source: PoseSource,
) -> Result<ListingSurface> {
    let quats = trajs.into_iter().flat_map(|t| {
        t.samples.iter().map(move |s| match source {
            PoseSource::Measured => s.q,
            PoseSource::Desired => s.q_d,
        })
    });
    listing_from_quats(quats)
}

/// Decomposes every orientation, dropping gimbal-degenerate ones.
pub fn listing_from_quats(quats: impl IntoIterator<Item = Quat>) -> Result<ListingSurface> {
    let mut seen = 0usize;
    let points: Vec<EulerXyz> = quats
        .into_iter()
        .inspect(|_| seen += 1)
        .filter_map(|q| euler_xyz_from_quat(&q).ok())
        .collect();
    if points.is_empty() {
        return Err(Error::NoSamples(format!(
            "all {seen} orientations are gimbal-degenerate or missing"
        )));
    }
    Ok(ListingSurface { points })
}

/// Least-squares plane `θx = a θy + b θz + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rms_residual: f64,
}

pub fn fit_plane(surface: &ListingSurface) -> Result<PlaneFit> {
    let p = &surface.points;
    if p.len() < 3 {
        return Err(Error::RankDeficientFit);
    }
    let n = p.len() as f64;
    let (my, mz, mx) = p.iter().fold((0.0, 0.0, 0.0), |acc, e| {
        (acc.0 + e.y / n, acc.1 + e.z / n, acc.2 + e.x / n)
    });
    let mut cov = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for e in p {
        let d = Vector2::new(e.y - my, e.z - mz);
        cov += d * d.transpose();
        rhs += d * (e.x - mx);
    }
    let scale = cov.trace();
    if !(scale > 0.0) || cov.determinant() <= 1e-12 * scale * scale {
        return Err(Error::RankDeficientFit);
    }
    let ab = cov.try_inverse().ok_or(Error::RankDeficientFit)? * rhs;
    let (a, b) = (ab.x, ab.y);
    let c = mx - a * my - b * mz;
    let ss: f64 = p.iter().map(|e| (e.x - (a * e.y + b * e.z + c)).powi(2)).sum();
    Ok(PlaneFit {
        a,
        b,
        c,
        rms_residual: (ss / n).sqrt(),
    })
}

/// Speed of the pointer intersection, by central differences.
pub fn pointer_speeds(traj: &Trajectory) -> Vec<f64> {
    speeds(&traj.samples, |s| s.x)
}

/// Speed of the planned point, exact from the planner.
pub fn planned_speeds(traj: &Trajectory) -> Vec<f64> {
    traj.samples.iter().map(|s| s.v_d.norm()).collect()
}

fn speeds(samples: &[Sample], pos: impl Fn(&Sample) -> Vector3<f64>) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if a == b {
                return 0.0;
            }
            (pos(&samples[b]) - pos(&samples[a])).norm() / (samples[b].t - samples[a].t)
        })
        .collect()
}
