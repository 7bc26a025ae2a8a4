//! Experiment configuration, orchestration and result files.
//!
//! A config is a TOML document. Every table is optional and unknown keys are
//! rejected:
//!
//! ```toml
//! seed = 42                 # randomized self-check data only
//! out_dir = "results"
//!
//! [body]                    # kg, m, m/s²
//! mass = 1.0
//! h = 0.1
//! l = 0.08
//! t = 0.02
//! com_offset = [0.05, 0.0, 0.0]
//! gravity = 9.81
//!
//! [band]
//! a_max = 3.2               # m/s²
//! m_d = 1.0
//! mode = "fic"              # or "spring"
//!
//! [task]
//! plane_x = 0.3
//! radius = 0.1
//! n_targets = 8
//!
//! [protocol]
//! initial_dwell = 0.5       # s
//! dwell = 0.5
//!
//! [sim]
//! sample_rate = 1000.0      # Hz
//! integrator = { kind = "fixed", substeps = 20 }   # or { kind = "adaptive", rel_tol = 1e-8 }
//! torque_axis = "quat_vector"                      # or "unit"
//! torsion_order = "pointer_axis"                   # or "global_axis"
//!
//! [sweep]                   # cartesian product, one condition per combination
//! stiffness = [10000.0, 8000.0, 1000.0]            # N·m/rad
//! phi = [0.0]                                      # rad
//! gravity = [true]
//!
//! [[conditions]]
//! name = "custom"
//! gravity = true
//! stiffness = [[0.0, 10000.0], [1.2, 1000.0]]      # constant or [start_time, value] steps
//! phi = -0.2
//! targets = [0, 4]
//! ```
//!
//! Without `[sweep]` or `[[conditions]]` the eight standard conditions run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::BodyModel;
use crate::experiments::{
    compute_metrics, extract_listing, fit_plane, run_trial, BandConfig, ClockTask, Integrator,
    ParamSchedule, PlaneFit, PoseSource, Protocol, SimSettings, Trajectory, TrialMetrics,
};
use crate::rotations::euler_xyz_from_quat;
use crate::{Error, Result};

/// Column names of the per-sample trajectory log, units in brackets.
pub const TRAJECTORY_COLUMNS: [&str; 24] = [
    "t[s]",
    "x_d_x[m]",
    "x_d_y[m]",
    "x_d_z[m]",
    "q_d_w",
    "q_d_x",
    "q_d_y",
    "q_d_z",
    "q_w",
    "q_x",
    "q_y",
    "q_z",
    "omega_x[rad/s]",
    "omega_y[rad/s]",
    "omega_z[rad/s]",
    "tau_c_x[N*m]",
    "tau_c_y[N*m]",
    "tau_c_z[N*m]",
    "tau_g_x[N*m]",
    "tau_g_y[N*m]",
    "tau_g_z[N*m]",
    "x_x[m]",
    "x_y[m]",
    "x_z[m]",
];

pub const LISTING_COLUMNS: [&str; 7] = [
    "t[s]",
    "theta_y[deg]",
    "theta_z[deg]",
    "theta_x[deg]",
    "theta_y_d[deg]",
    "theta_z_d[deg]",
    "theta_x_d[deg]",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyConfig {
    pub mass: f64,
    pub h: f64,
    pub l: f64,
    pub t: f64,
    /// Centre of mass relative to the joint, body frame.
    pub com_offset: [f64; 3],
    /// Magnitude of gravity along −z when a condition enables it.
    pub gravity: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig {
            mass: 1.0,
            h: 0.1,
            l: 0.08,
            t: 0.02,
            com_offset: [0.05, 0.0, 0.0],
            gravity: crate::dynamics::STANDARD_GRAVITY,
        }
    }
}

impl BodyConfig {
    pub fn build(&self) -> Result<BodyModel> {
        for (field, v) in [
            ("body.mass", self.mass),
            ("body.h", self.h),
            ("body.l", self.l),
            ("body.t", self.t),
            ("body.gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !self.com_offset.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("body.com_offset", "must be finite"));
        }
        BodyModel::new(
            self.mass,
            (self.h, self.l, self.t),
            Vector3::from(self.com_offset),
            Vector3::new(0.0, 0.0, -self.gravity),
        )
    }
}

/// Scalar or `[start_time, value]` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleValue {
    Constant(f64),
    Steps(Vec<(f64, f64)>),
}

impl Default for ScheduleValue {
    fn default() -> Self {
        ScheduleValue::Constant(0.0)
    }
}

impl ScheduleValue {
    fn piecewise(&self) -> crate::experiments::Piecewise {
        crate::experiments::Piecewise {
            steps: match self {
                ScheduleValue::Constant(v) => vec![(0.0, *v)],
                ScheduleValue::Steps(s) => s.clone(),
            },
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub name: String,
    #[serde(default = "yes")]
    pub gravity: bool,
    pub stiffness: ScheduleValue,
    #[serde(default)]
    pub phi: ScheduleValue,
    /// Clock targets in visiting order; all of them when omitted.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub stiffness: Vec<f64>,
    pub phi: Vec<f64>,
    pub gravity: Vec<bool>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            stiffness: vec![10_000.0],
            phi: vec![0.0],
            gravity: vec![true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub body: BodyConfig,
    pub band: BandConfig,
    pub task: ClockTask,
    pub protocol: Protocol,
    pub sim: SimSettings,
    pub sweep: Option<Sweep>,
    pub conditions: Vec<ConditionConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("results"),
            body: BodyConfig::default(),
            band: BandConfig::default(),
            task: ClockTask::default(),
            protocol: Protocol::default(),
            sim: SimSettings::default(),
            sweep: None,
            conditions: Vec::new(),
        }
    }
}

/// One fully resolved trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub schedule: ParamSchedule,
}

/// Short condition label such as `g_k10_phim25`.
pub fn condition_name(gravity: bool, stiffness: f64, phi: f64) -> String {
    let deg = phi.to_degrees();
    let num = |v: f64| {
        let s = format!("{}", (v * 1000.0).round() / 1000.0);
        s.replace('-', "m").replace('.', "p")
    };
    format!(
        "{}_k{}_phi{}",
        if gravity { "g" } else { "nog" },
        num(stiffness / 1000.0),
        num(deg)
    )
}

/// Top-target trial with stiffness and torsion stepped during the reaches.
pub fn online_condition() -> ConditionConfig {
    ConditionConfig {
        name: "online_switch".into(),
        gravity: false,
        stiffness: ScheduleValue::Steps(vec![(0.0, 10_000.0), (0.7, 8_000.0), (1.6, 1_000.0)]),
        phi: ScheduleValue::Steps(vec![(0.0, 0.0), (0.65, (-25.0f64).to_radians())]),
        targets: Some(vec![0]),
    }
}

pub fn default_conditions() -> Vec<ConditionConfig> {
    let phi25 = (-25.0f64).to_radians();
    let mut out: Vec<ConditionConfig> = [
        (false, 10_000.0, 0.0),
        (true, 10_000.0, 0.0),
        (true, 8_000.0, 0.0),
        (true, 1_000.0, 0.0),
        (true, 10_000.0, phi25),
        (true, 8_000.0, phi25),
        (true, 1_000.0, phi25),
    ]
    .into_iter()
    .map(|(g, k, phi)| ConditionConfig {
        name: condition_name(g, k, phi),
        gravity: g,
        stiffness: ScheduleValue::Constant(k),
        phi: ScheduleValue::Constant(phi),
        targets: None,
    })
    .collect();
    out.push(online_condition());
    out
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.body.build()?;
        self.task.validate()?;
        if !(self.band.a_max > 0.0) {
            return Err(Error::invalid("band.a_max", "must be positive"));
        }
        if !(self.band.m_d > 0.0) {
            return Err(Error::invalid("band.m_d", "must be positive"));
        }
        if !(self.protocol.initial_dwell >= 0.0) {
            return Err(Error::invalid("protocol.initial_dwell", "must be non-negative"));
        }
        if !(self.protocol.dwell >= 0.0) {
            return Err(Error::invalid("protocol.dwell", "must be non-negative"));
        }
        if !(self.sim.sample_rate > 0.0) {
            return Err(Error::invalid("sim.sample_rate", "must be positive"));
        }
        match self.sim.integrator {
            Integrator::Fixed { substeps } if substeps == 0 => {
                return Err(Error::invalid("sim.integrator.substeps", "must be at least 1"))
            }
            Integrator::Adaptive { rel_tol } if !(1e-12..=1e-3).contains(&rel_tol) => {
                return Err(Error::invalid("sim.integrator.rel_tol", "must lie in [1e-12, 1e-3]"))
            }
            _ => {}
        }
        if let Some(sw) = &self.sweep {
            if sw.stiffness.is_empty() || sw.phi.is_empty() || sw.gravity.is_empty() {
                return Err(Error::invalid("sweep", "every sweep list needs at least one entry"));
            }
        }
        let conditions = self.conditions()?;
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::invalid("conditions.name", format!("duplicate `{}`", c.name)));
            }
        }
        Ok(())
    }

    /// Conditions to run: explicit ones, then the sweep, or the defaults.
    pub fn conditions(&self) -> Result<Vec<Condition>> {
        let mut specs = self.conditions.clone();
        if let Some(sw) = &self.sweep {
            for &g in &sw.gravity {
                for &k in &sw.stiffness {
                    for &phi in &sw.phi {
                        specs.push(ConditionConfig {
                            name: condition_name(g, k, phi),
                            gravity: g,
                            stiffness: ScheduleValue::Constant(k),
                            phi: ScheduleValue::Constant(phi),
                            targets: None,
                        });
                    }
                }
            }
        }
        if specs.is_empty() {
            specs = default_conditions();
        }
        specs
            .into_iter()
            .map(|c| {
                if c.name.is_empty()
                    || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "_-.".contains(ch))
                {
                    return Err(Error::invalid(
                        "conditions.name",
                        format!("`{}` is not a plain file name", c.name),
                    ));
                }
                let schedule = ParamSchedule {
                    stiffness: c.stiffness.piecewise(),
                    phi: c.phi.piecewise(),
                    targets: c.targets.unwrap_or_else(|| (0..self.task.n_targets).collect()),
                    gravity: c.gravity,
                };
                schedule.validate(&self.task).map_err(|e| match e {
                    Error::Invalid { field, reason } => Error::Invalid {
                        field: format!("conditions.{}.{field}", c.name),
                        reason,
                    },
                    other => other,
                })?;
                Ok(Condition {
                    name: c.name,
                    schedule,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub gravity: bool,
    pub samples: usize,
    pub rmse_y: f64,
    pub rmse_z: f64,
    pub effort_mean: f64,
    pub effort_std: f64,
    pub rmse_target_y: f64,
    pub rmse_target_z: f64,
    /// Plane fitted to the measured orientations.
    pub plane: Option<PlaneFit>,
    /// Plane fitted to the planned orientations.
    pub plane_desired: Option<PlaneFit>,
}

impl ConditionSummary {
    fn new(name: &str, schedule: &ParamSchedule, traj: &Trajectory, m: &TrialMetrics) -> Self {
        let plane = |src| extract_listing([traj], src).and_then(|s| fit_plane(&s)).ok();
        ConditionSummary {
            condition: name.to_string(),
            gravity: schedule.gravity,
            samples: traj.samples.len(),
            rmse_y: m.rmse_y,
            rmse_z: m.rmse_z,
            effort_mean: m.effort_mean,
            effort_std: m.effort_std,
            rmse_target_y: m.rmse_target_y,
            rmse_target_z: m.rmse_target_z,
            plane: plane(PoseSource::Measured),
            plane_desired: plane(PoseSource::Desired),
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig, cond: &Condition) -> Result<Trajectory> {
    let body = cfg.body.build()?;
    run_trial(&cond.schedule, &cfg.task, &body, &cfg.band, &cfg.protocol, &cfg.sim)
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.samples.len() * 400);
    out.push_str(&TRAJECTORY_COLUMNS.join(","));
    out.push('\n');
    for s in &traj.samples {
        let v = |v: &Vector3<f64>| [v.x, v.y, v.z];
        let row = std::iter::once(s.t)
            .chain(v(&s.x_d))
            .chain(s.q_d.as_array())
            .chain(s.q.as_array())
            .chain(v(&s.omega))
            .chain(v(&s.tau_c))
            .chain(v(&s.tau_g))
            .chain(v(&s.x));
        for (i, x) in row.enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn listing_csv(traj: &Trajectory) -> String {
    let mut out = LISTING_COLUMNS.join(",");
    out.push('\n');
    for s in &traj.samples {
        let (Ok(m), Ok(d)) = (euler_xyz_from_quat(&s.q), euler_xyz_from_quat(&s.q_d)) else {
            continue;
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t,
            m.y.to_degrees(),
            m.z.to_degrees(),
            m.x.to_degrees(),
            d.y.to_degrees(),
            d.z.to_degrees(),
            d.x.to_degrees()
        )
        .unwrap();
    }
    out
}

/// Runs every selected condition (in parallel) and writes
/// `<out>/<condition>/{trajectory.csv, metrics.json, listing.csv}`.
pub fn run_and_emit(
    cfg: &ExperimentConfig,
    only: Option<&str>,
    out_dir: &Path,
) -> Result<Vec<ConditionSummary>> {
    let mut conditions = cfg.conditions()?;
    if let Some(name) = only {
        conditions.retain(|c| c.name == name);
        if conditions.is_empty() {
            return Err(Error::invalid("condition", format!("no condition named `{name}`")));
        }
    }
    conditions
        .par_iter()
        .map(|cond| {
            let traj = simulate(cfg, cond)?;
            let metrics = compute_metrics(&traj)?;
            let summary = ConditionSummary::new(&cond.name, &cond.schedule, &traj, &metrics);
            let dir = out_dir.join(&cond.name);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("trajectory.csv"), trajectory_csv(&traj))?;
            fs::write(dir.join("listing.csv"), listing_csv(&traj))?;
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            fs::write(dir.join("metrics.json"), json + "\n")?;
            Ok(summary)
        })
        .collect()
}
