//! Measurement synthesis and full tracking episodes.

use itertools::Itertools;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::config::SelectionMethod;
use super::trajectory::{simulate_trajectory, waypoint_path};
use super::{psd_sqrt, Scenario};
use crate::apselect::{activation_csv, brute_force_select, greedy_local_select, ActivationVector, SelectionProblem};
use crate::error::Result;
use crate::tracking::{
    cluster_proxies, estimated_cardinality, extract_states, measurements_from_angles, GaussianComponent,
    MeasurementSource, MotionModel, PhdConfig, PhdFilter, PositionMeasurement, UeState,
};
use crate::SPEED_OF_LIGHT;

const STREAM_TRUTH: u64 = 1;
const STREAM_DETECTION: u64 = 2;
const STREAM_CLUTTER: u64 = 3;

impl Scenario {
    pub fn motion_model(&self) -> MotionModel {
        let t = &self.config.tracking;
        match t.motion {
            super::MotionConfig::RandomWalk => MotionModel::random_walk(t.process_noise_std),
            super::MotionConfig::ConstantVelocity => MotionModel::constant_velocity(t.process_noise_std, t.dt),
        }
    }

    /// Filter settings; one birth component sits on every UE's starting
    /// point.
    pub fn phd_config(&self) -> PhdConfig {
        let t = &self.config.tracking;
        let dim = self.motion_model().state_dim();
        let birth = self
            .ues
            .iter()
            .map(|u| GaussianComponent {
                weight: t.birth_weight,
                mean: u.initial.to_vector(dim),
                covariance: DMatrix::identity(dim, dim) * (t.birth_std * t.birth_std),
            })
            .collect();
        PhdConfig {
            p_detect: t.p_detect,
            clutter_intensity: t.clutter_intensity,
            prune_threshold: t.prune_threshold,
            merge_threshold: t.merge_threshold,
            max_components: t.max_components,
            birth,
        }
    }

    /// Ground truth indexed `[t][ue]`: waypoint walks where configured,
    /// otherwise motion-model samples reflected at the surveillance box.
    pub fn truth(&self) -> Vec<Vec<UeState>> {
        let t = &self.config.tracking;
        let motion = self.motion_model();
        let paths: Vec<Vec<UeState>> = self
            .ues
            .iter()
            .enumerate()
            .map(|(m, u)| match &u.waypoints {
                Some(w) => waypoint_path(w, t.step_length, t.steps),
                None => simulate_trajectory(
                    &u.initial,
                    &motion,
                    t.steps,
                    self.master_stream(STREAM_TRUTH).derive(&[m as u64]),
                    Some(&self.bounds),
                ),
            })
            .collect();
        (0..t.steps).map(|k| paths.iter().map(|p| p[k]).collect()).collect()
    }

    /// Detection of UE `m` at `pos` by AP `k`: (θ, φ, τ) drawn around the
    /// truth with the link's CRLB covariance, converted to a position by the
    /// unscented transform. `None` when the link cannot be measured.
    pub fn detect(&self, k: usize, m: usize, pos: &Vector3<f64>, rng: &mut impl Rng) -> Option<PositionMeasurement> {
        let (params, cov) = self.detection_covariance(k, m, pos).ok()?;
        let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let noisy = Vector3::new(params.theta, params.phi, params.tau * SPEED_OF_LIGHT) + psd_sqrt(&cov) * z;
        let unscale = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0 / SPEED_OF_LIGHT));
        let cov_xi = unscale * cov * unscale;
        measurements_from_angles(
            &self.aps[k].geometry,
            noisy[0],
            noisy[1],
            noisy[2] / SPEED_OF_LIGHT,
            &cov_xi,
            MeasurementSource::Ap(k),
        )
        .ok()
    }

    /// All measurements of step `t`: per UE and active AP (ascending) a
    /// detection with probability p_D, then Poisson clutter uniform over the
    /// surveillance box.
    pub fn synthesize_step(&self, t: usize, truth: &[UeState], active: &[usize]) -> Vec<PositionMeasurement> {
        let cfg = &self.config.tracking;
        let mut out = Vec::new();
        for (m, s) in truth.iter().enumerate() {
            for &k in active {
                let mut rng = self.master_stream(STREAM_DETECTION).derive(&[t as u64, m as u64, k as u64]).rng();
                if rng.random::<f64>() < cfg.p_detect {
                    if let Some(z) = self.detect(k, m, &s.position, &mut rng) {
                        out.push(z);
                    }
                }
            }
        }
        let mean = cfg.clutter_intensity * self.bounds.volume();
        if mean > 0.0 {
            let mut rng = self.master_stream(STREAM_CLUTTER).derive(&[t as u64]).rng();
            let count = Poisson::new(mean).map_or(0.0, |p| p.sample(&mut rng)) as usize;
            let var = cfg.clutter_std * cfg.clutter_std;
            for _ in 0..count {
                let u = Vector3::from_fn(|_, _| rng.random::<f64>());
                out.push(PositionMeasurement {
                    value: self.bounds.min + (self.bounds.max - self.bounds.min).component_mul(&u),
                    covariance: Matrix3::identity() * var,
                    source: MeasurementSource::Clutter,
                });
            }
        }
        out
    }

    /// Active APs for one step. Greedy and brute-force selection minimize the
    /// total PEB over `predicted` UE positions.
    pub fn select_aps(&self, predicted: &[Vector3<f64>]) -> Result<ActivationVector> {
        let k = self.aps.len();
        let sc = &self.config.schedule;
        match sc.method {
            SelectionMethod::All => Ok(ActivationVector::all(k)),
            SelectionMethod::Fixed => ActivationVector::from_indices(k, &sc.fixed),
            SelectionMethod::Greedy | SelectionMethod::Brute => {
                let kp = sc.k_prime.unwrap_or(k);
                let problem = self.selection_problem(predicted)?;
                if sc.method == SelectionMethod::Greedy {
                    Ok(greedy_local_select(&problem, kp)?.selection)
                } else {
                    brute_force_select(&problem, kp)
                }
            }
        }
    }

    /// Per-position, per-AP global FIMs. Position `i` uses the antenna of UE
    /// `min(i, M − 1)`.
    pub fn selection_problem(&self, predicted: &[Vector3<f64>]) -> Result<SelectionProblem> {
        let last = self.ues.len() - 1;
        let fims = predicted
            .iter()
            .enumerate()
            .map(|(i, p)| (0..self.aps.len()).map(|k| self.position_fim(k, i.min(last), p)).collect())
            .collect();
        SelectionProblem::new(fims)
    }
}

/// Measurements for a whole truth sequence under the given activations.
pub fn synthesize_measurements(
    scenario: &Scenario,
    truth: &[Vec<UeState>],
    activations: &[ActivationVector],
) -> Vec<Vec<PositionMeasurement>> {
    truth
        .iter()
        .zip(activations)
        .enumerate()
        .map(|(t, (states, a))| scenario.synthesize_step(t, states, &a.active()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub truth: Vec<Vector3<f64>>,
    /// Estimate assigned to each UE; `None` when the mixture had too few
    /// components.
    pub estimates: Vec<Option<Vector3<f64>>>,
    /// Per-UE error, NaN without an estimate.
    pub rmse: Vec<f64>,
    pub active: ActivationVector,
    pub measurements: Vec<PositionMeasurement>,
    pub proxy_count: usize,
    pub n_components: usize,
    pub total_weight: f64,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub ue_count: usize,
    pub ap_count: usize,
    pub steps: Vec<StepRecord>,
}

/// Estimate-to-UE assignment minimizing the summed distance (exhaustive up
/// to six UEs, greedy nearest pairs beyond).
fn assign(estimates: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Vec<Option<Vector3<f64>>> {
    let m = truth.len();
    let e = estimates.len().min(m);
    let mut out = vec![None; m];
    if e == 0 {
        return out;
    }
    if m <= 6 {
        let best = (0..m)
            .permutations(e)
            .min_by(|a, b| {
                let cost = |p: &Vec<usize>| -> f64 { p.iter().enumerate().map(|(j, &u)| (estimates[j] - truth[u]).norm()).sum() };
                cost(a).total_cmp(&cost(b))
            })
            .expect("at least one permutation");
        for (j, u) in best.into_iter().enumerate() {
            out[u] = Some(estimates[j]);
        }
    } else {
        let mut pairs: Vec<(f64, usize, usize)> = (0..e)
            .flat_map(|j| (0..m).map(move |u| (j, u)))
            .map(|(j, u)| ((estimates[j] - truth[u]).norm(), j, u))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = vec![false; e];
        for (_, j, u) in pairs {
            if !used[j] && out[u].is_none() {
                used[j] = true;
                out[u] = Some(estimates[j]);
            }
        }
    }
    out
}

/// Runs the full pipeline per step: AP selection from the predicted
/// positions, measurement synthesis, proxy clustering, PHD
/// predict/update/prune, extraction of one estimate per UE and logging.
pub fn run_tracking_episode(scenario: &Scenario) -> Result<EpisodeLog> {
    let truth = scenario.truth();
    let ue_count = scenario.ues.len();
    let gate = scenario.config.tracking.gate_distance;
    let mut filter = PhdFilter::new(scenario.phd_config(), scenario.motion_model())?;
    let mut steps = Vec::with_capacity(truth.len());
    for (t, states) in truth.iter().enumerate() {
        let predicted: Vec<Vector3<f64>> = filter.predicted_states(ue_count).iter().map(|s| s.position).collect();
        let active = scenario.select_aps(&predicted)?;
        let measurements = scenario.synthesize_step(t, states, &active.active());
        let proxies = cluster_proxies(&measurements, gate);
        filter.step(&proxies)?;
        let extraction = extract_states(&filter.mixture, ue_count);
        let estimates: Vec<Vector3<f64>> = extraction.states.iter().map(|s| s.position).collect();
        let true_pos: Vec<Vector3<f64>> = states.iter().map(|s| s.position).collect();
        let assigned = assign(&estimates, &true_pos);
        let rmse = assigned
            .iter()
            .zip(&true_pos)
            .map(|(e, p)| e.map_or(f64::NAN, |e| (e - p).norm()))
            .collect();
        steps.push(StepRecord {
            t,
            truth: true_pos,
            estimates: assigned,
            rmse,
            active,
            measurements,
            proxy_count: proxies.len(),
            n_components: filter.mixture.len(),
            total_weight: filter.mixture.total_weight(),
            cardinality: estimated_cardinality(&filter.mixture),
        });
    }
    Ok(EpisodeLog {
        ue_count,
        ap_count: scenario.aps.len(),
        steps,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EpisodeLog {
    /// Mean of the finite per-UE errors over all steps.
    pub fn mean_rmse(&self) -> f64 {
        mean(self.steps.iter().flat_map(|s| s.rmse.iter().copied()).filter(|v| v.is_finite()))
    }

    pub fn max_rmse(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.rmse.iter().copied())
            .filter(|v| v.is_finite())
            .fold(f64::NAN, f64::max)
    }

    /// Mean |round(Σw) − M|.
    pub fn mean_cardinality_error(&self) -> f64 {
        mean(self.steps.iter().map(|s| (s.cardinality as f64 - self.ue_count as f64).abs()))
    }

    /// Mean error over the UE-steps whose true position lies at or beyond the
    /// median distance from `anchor`.
    pub fn far_half_rmse(&self, anchor: &Vector3<f64>) -> f64 {
        let mut samples: Vec<(f64, f64)> = self
            .steps
            .iter()
            .flat_map(|s| s.truth.iter().zip(&s.rmse).map(|(p, e)| ((p - anchor).norm(), *e)))
            .collect();
        if samples.is_empty() {
            return f64::NAN;
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = samples.len() / 2;
        mean(samples[half..].iter().map(|s| s.1).filter(|v| v.is_finite()))
    }

    /// Error series of one UE.
    pub fn rmse_series(&self, ue: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.rmse[ue]).collect()
    }

    /// `t,ue_id,est_x,est_y,est_z,true_x,true_y,true_z,rmse,n_components`.
    pub fn track_csv(&self) -> String {
        let mut out = String::from("t,ue_id,est_x,est_y,est_z,true_x,true_y,true_z,rmse,n_components\n");
        for s in &self.steps {
            for (m, p) in s.truth.iter().enumerate() {
                let e = s.estimates[m].unwrap_or_else(|| Vector3::repeat(f64::NAN));
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    s.t, m, e.x, e.y, e.z, p.x, p.y, p.z, s.rmse[m], s.n_components
                ));
            }
        }
        out
    }

    /// `t,ap_id,active`.
    pub fn activation_csv(&self) -> String {
        let timeline: Vec<ActivationVector> = self.steps.iter().map(|s| s.active.clone()).collect();
        activation_csv(&timeline)
    }

    pub fn summary(&self) -> String {
        let counts: Vec<String> = self.steps.iter().map(|s| s.active.budget.to_string()).collect();
        let detections = mean(self.steps.iter().map(|s| s.measurements.len() as f64));
        format!(
            "steps: {}\nues: {}\naps: {}\nmean_rmse: {}\nmax_rmse: {}\nmean_cardinality_error: {}\nmean_measurements: {}\nactive_ap_counts: {}\n",
            self.steps.len(),
            self.ue_count,
            self.ap_count,
            self.mean_rmse(),
            self.max_rmse(),
            self.mean_cardinality_error(),
            detections,
            counts.join(",")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_csv, ScenarioConfig};
    use super::*;

    fn short(steps: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::canonical();
        c.tracking.steps = steps;
        c
    }

    #[test]
    fn noiseless_detection_recovers_truth() {
        let mut c = short(1);
        c.signal.snr_db = 200.0;
        let s = Scenario::build(&c, None).unwrap();
        let pos = Vector3::new(3.0, 2.0, 1.0);
        let mut rng = s.master_stream(99).rng();
        for k in 0..8 {
            let z = s.detect(k, 0, &pos, &mut rng).unwrap();
            assert!((z.value - pos).norm() < 1e-6, "{k}: {}", (z.value - pos).norm());
        }
    }

    #[test]
    fn detection_and_clutter_statistics() {
        let mut c = short(1);
        c.tracking.p_detect = 0.7;
        c.tracking.clutter_intensity = 0.01;
        let s = Scenario::build(&c, None).unwrap();
        let truth = [UeState::at(Vector3::new(5.0, 3.5, 1.0))];
        let (mut det, mut clut) = (0usize, 0usize);
        let n = 10_000;
        for t in 0..n {
            let z = s.synthesize_step(t, &truth, &[0]);
            det += z.iter().filter(|m| m.source == MeasurementSource::Ap(0)).count();
            clut += z.iter().filter(|m| m.source == MeasurementSource::Clutter).count();
        }
        let rate = det as f64 / n as f64;
        assert!((rate - 0.7).abs() < 0.01, "{rate}");
        let lam = 0.01 * 210.0;
        assert!((clut as f64 / n as f64 / lam - 1.0).abs() < 0.02);

        c.tracking.p_detect = 0.0;
        let s = Scenario::build(&c, None).unwrap();
        let z = s.synthesize_step(0, &truth, &[0, 1, 2]);
        assert!(z.iter().all(|m| m.source == MeasurementSource::Clutter));
    }

    #[test]
    fn assignment_oracle() {
        let truth = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(5.0, 0.0, 0.0)];
        let est = [Vector3::new(4.9, 0.0, 0.0), Vector3::new(0.2, 0.0, 0.0)];
        let a = assign(&est, &truth);
        assert_eq!(a[0], Some(est[1]));
        assert_eq!(a[1], Some(est[0]));
        let a = assign(&est[..1], &truth);
        assert_eq!(a, vec![None, Some(est[0])]);
    }

    #[test]
    fn episode_logs_and_exports() {
        let s = Scenario::build(&short(20), None).unwrap();
        let log = run_tracking_episode(&s).unwrap();
        assert_eq!(log.steps.len(), 20);
        assert!(log.steps.iter().enumerate().all(|(i, r)| r.t == i));
        let csv = log.track_csv();
        let table = parse_csv(&csv).unwrap();
        assert_eq!(table.header.join(","), "t,ue_id,est_x,est_y,est_z,true_x,true_y,true_z,rmse,n_components");
        assert_eq!(table.rows.len(), 20);
        for (row, step) in table.rows.iter().zip(&log.steps) {
            assert_eq!(row[8], step.rmse[0]);
            assert_eq!(row[5], step.truth[0].x);
        }
        assert!(log.summary().contains("mean_rmse: "));
        assert_eq!(log.activation_csv().lines().count(), 1 + 20 * 8);
        let empty = EpisodeLog { ue_count: 1, ap_count: 8, steps: vec![] };
        assert_eq!(empty.track_csv().lines().count(), 1);
    }

    #[test]
    fn greedy_schedule_respects_budget() {
        let mut c = short(5);
        c.schedule.method = SelectionMethod::Greedy;
        c.schedule.k_prime = Some(3);
        let s = Scenario::build(&c, None).unwrap();
        let log = run_tracking_episode(&s).unwrap();
        assert!(log.steps.iter().all(|r| r.active.budget == 3));
    }
}
