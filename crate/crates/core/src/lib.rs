//! Human-like wrist pointing with a spherical joint driven by a fractal
//! impedance controller.
//!
//! Planar clock-task targets are projected onto the sphere around the wrist
//! as unit quaternions with a configurable torsion about the pointer axis.
//! An elastic-band planner produces bell-shaped reference trajectories, and
//! a quaternion fractal impedance controller tracks them on a rigid-body
//! hand model. The `experiments` module reproduces the clock-task trials and
//! the Listing's-plane analysis; `cli` wires everything to config files and
//! output directories.

pub mod check;
pub mod cli;
pub mod dynamics;
pub mod experiments;
pub mod fic;
pub mod planner;
pub mod rotations;

pub use rotations::{EulerXyz, Quat};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("undefined pointing direction: target coincides with the base")]
    UndefinedPointingDirection,
    #[error("gimbal lock in XYZ decomposition of q = {0:?}")]
    GimbalLock([f64; 4]),
    #[error("degenerate Liénard damping integral ({0:e})")]
    DegenerateDampingIntegral(f64),
    #[error("stiff dynamics, integration failed at t = {t} s (step {step:e} s)")]
    IntegrationFailed { t: f64, step: f64 },
    #[error("already at target")]
    AlreadyAtTarget,
    #[error("pointer does not intersect target plane")]
    NoPlaneIntersection,
    #[error("plane fit is rank deficient")]
    RankDeficientFit,
    #[error("no usable samples: {0}")]
    NoSamples(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config parse error in {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
