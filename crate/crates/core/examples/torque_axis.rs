//! Compares the two torque-axis conventions on the standard conditions.
//!
//! cargo run --release --example torque_axis

use std::time::Instant;

use wrist_fic::dynamics::BodyModel;
use wrist_fic::experiments::*;
use wrist_fic::fic::TorqueAxis;

fn main() {
    let task = ClockTask::default();
    let targets: Vec<usize> = (0..task.n_targets).collect();
    let phi = -25f64.to_radians();
    let cases = [
        (false, 10000.0, 0.0),
        (true, 10000.0, 0.0),
        (true, 8000.0, 0.0),
        (true, 1000.0, 0.0),
        (true, 8000.0, phi),
        (true, 1000.0, phi),
    ];
    for axis in [TorqueAxis::QuatVector, TorqueAxis::Unit] {
        let sim = SimSettings { torque_axis: axis, ..Default::default() };
        for (g, k, phi) in cases {
            let body = BodyModel::wrist_default(g);
            let sch = ParamSchedule::constant(k, phi, g, targets.clone());
            let t0 = Instant::now();
            let tr = run_trial(&sch, &task, &body, &BandConfig::default(), &Protocol::default(), &sim)
                .expect("trial");
            let m = compute_metrics(&tr).expect("metrics");
            let res = fit_plane(&extract_listing([&tr], PoseSource::Measured).expect("listing"))
                .expect("plane")
                .rms_residual;
            println!(
                "{axis:?} g={g} K={k} phi={phi:.3}: rmse_y {:.3} mm, rmse_z {:.3} mm, effort {:.4} ± {:.4} N*m, residual {res:.3e} ({:.1} s)",
                m.rmse_y * 1e3,
                m.rmse_z * 1e3,
                m.effort_mean,
                m.effort_std,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
