//! Nearest-neighbour Kalman baseline against the GM-PHD filter on the same
//! synthetic detections (canonical room, clutter and missed detections on).

use dmimo::apselect::ActivationVector;
use dmimo::scenario::{run_tracking_episode, synthesize_measurements, Scenario, ScenarioConfig};
use dmimo::tracking::{cluster_proxies, kalman_baseline_step, instantaneous_rmse, Track};
use nalgebra::{DMatrix, DVector, Vector3};

fn main() -> dmimo::Result<()> {
    let mut cfg = ScenarioConfig::canonical();
    cfg.tracking.clutter_intensity = 0.5;
    let s = Scenario::build(&cfg, None)?;
    let motion = s.motion_model();
    let truth = s.truth();
    let active = vec![ActivationVector::all(s.aps.len()); truth.len()];
    let scans = synthesize_measurements(&s, &truth, &active);

    let p0 = s.ues[0].initial.position;
    let mut tracks = vec![Track { mean: DVector::from_column_slice(p0.as_slice()), covariance: DMatrix::identity(3, 3) }];
    let mut errors = Vec::new();
    for (t, scan) in scans.iter().enumerate() {
        let proxies = cluster_proxies(scan, cfg.tracking.gate_distance);
        tracks = kalman_baseline_step(&tracks, &proxies, &motion, 9.0)?;
        let est = Vector3::new(tracks[0].mean[0], tracks[0].mean[1], tracks[0].mean[2]);
        errors.push(instantaneous_rmse(&est, &truth[t][0].position));
    }
    let kf = errors.iter().sum::<f64>() / errors.len() as f64;
    let phd = run_tracking_episode(&s)?.mean_rmse();
    println!("clutter intensity {} per m^3 per step", cfg.tracking.clutter_intensity);
    println!("Kalman nearest-neighbour mean RMSE: {kf:.5} m");
    println!("GM-PHD mean RMSE:                   {phd:.5} m");
    Ok(())
}
