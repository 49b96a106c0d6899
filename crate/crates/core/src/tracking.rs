//! Gaussian-mixture PHD tracking of several UEs from position-domain
//! measurements, with the angle/delay to position conversion, cross-AP proxy
//! clustering and a nearest-neighbour Kalman baseline.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::fim::{direction, ApGeometry};
use crate::mathcore::{psd_inverse, tol};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl UeState {
    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }

    /// State vector: position only for 3-dimensional models, position then
    /// velocity for 6-dimensional ones.
    pub fn to_vector(&self, dim: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v.rows_mut(0, 3).copy_from(&self.position);
        if dim >= 6 {
            v.rows_mut(3, 3).copy_from(&self.velocity);
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let position = Vector3::new(v[0], v[1], v[2]);
        let velocity = if v.len() >= 6 {
            Vector3::new(v[3], v[4], v[5])
        } else {
            Vector3::zeros()
        };
        Self { position, velocity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Expected number of targets, Σ w.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    /// State is position; x' = x + w.
    RandomWalk,
    /// State is (position, velocity); p' = p + v dt.
    ConstantVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub kind: MotionKind,
    pub process_noise: DMatrix<f64>,
    pub dt: f64,
}

impl MotionModel {
    /// Random walk with isotropic per-axis standard deviation `std`.
    pub fn random_walk(std: f64) -> Self {
        Self {
            kind: MotionKind::RandomWalk,
            process_noise: DMatrix::identity(3, 3) * (std * std),
            dt: 1.0,
        }
    }

    /// Constant velocity driven by white acceleration of spectral density
    /// `accel_std²`.
    pub fn constant_velocity(accel_std: f64, dt: f64) -> Self {
        let q = accel_std * accel_std;
        let mut m = DMatrix::zeros(6, 6);
        for i in 0..3 {
            m[(i, i)] = q * dt.powi(3) / 3.0;
            m[(i, i + 3)] = q * dt.powi(2) / 2.0;
            m[(i + 3, i)] = q * dt.powi(2) / 2.0;
            m[(i + 3, i + 3)] = q * dt;
        }
        Self {
            kind: MotionKind::ConstantVelocity,
            process_noise: m,
            dt,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            MotionKind::RandomWalk => 3,
            MotionKind::ConstantVelocity => 6,
        }
    }

    pub fn transition(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut f = DMatrix::identity(n, n);
        if self.kind == MotionKind::ConstantVelocity {
            for i in 0..3 {
                f[(i, i + 3)] = self.dt;
            }
        }
        f
    }

    /// Selects the position block of the state.
    pub fn measurement_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        DMatrix::from_fn(3, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementSource {
    Ap(usize),
    Proxy,
    Clutter,
}

/// Position-domain measurement z = p + n, n ~ N(0, W).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMeasurement {
    pub value: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub source: MeasurementSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhdConfig {
    pub p_detect: f64,
    /// Clutter intensity per unit volume; the expected clutter count is this
    /// times the surveillance volume.
    pub clutter_intensity: f64,
    pub prune_threshold: f64,
    /// Squared Mahalanobis distance below which components merge.
    pub merge_threshold: f64,
    pub max_components: usize,
    /// Birth components added at every prediction.
    pub birth: Vec<GaussianComponent>,
}

impl Default for PhdConfig {
    fn default() -> Self {
        Self {
            p_detect: 0.95,
            clutter_intensity: 0.0,
            prune_threshold: 1e-4,
            merge_threshold: 4.0,
            max_components: 500,
            birth: Vec::new(),
        }
    }
}

impl PhdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_detect) {
            return Err(Error::InvalidInput("p_detect must lie in [0, 1]".into()));
        }
        if !(self.clutter_intensity >= 0.0) {
            return Err(Error::InvalidInput("clutter intensity must be non-negative".into()));
        }
        if !(self.prune_threshold > 0.0) || !(self.merge_threshold > 0.0) || self.max_components == 0 {
            return Err(Error::InvalidInput("pruning/merging thresholds must be positive".into()));
        }
        Ok(())
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Propagates every component through the motion model (no births).
pub fn predict(mixture: &GaussianMixture, motion: &MotionModel) -> GaussianMixture {
    let f = motion.transition();
    GaussianMixture {
        components: mixture
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight,
                mean: &f * &c.mean,
                covariance: symmetrize(&(&f * &c.covariance * f.transpose() + &motion.process_noise)),
            })
            .collect(),
    }
}

/// log N(x; 0, S) via a Cholesky factor; `None` when S is not positive definite.
fn log_gaussian(residual: &DVector<f64>, s: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = s.clone().cholesky()?;
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sol = chol.solve(residual);
    let maha = residual.dot(&sol);
    let d = residual.len() as f64;
    Some((-0.5 * (d * TAU.ln() + log_det + maha), chol.inverse()))
}

/// GM-PHD measurement update.
///
/// Output order: the (1 − p_D) missed-detection copies of the prior, then for
/// each measurement in order one updated component per prior component.
pub fn update(mixture: &GaussianMixture, measurements: &[PositionMeasurement], cfg: &PhdConfig) -> Result<GaussianMixture> {
    let mut out: Vec<GaussianComponent> = mixture
        .components
        .iter()
        .map(|c| GaussianComponent {
            weight: (1.0 - cfg.p_detect) * c.weight,
            mean: c.mean.clone(),
            covariance: c.covariance.clone(),
        })
        .collect();
    if cfg.p_detect == 0.0 {
        return Ok(GaussianMixture::new(out));
    }
    let Some(first) = mixture.components.first() else {
        return Ok(GaussianMixture::new(out));
    };
    let n = first.mean.len();
    let h = DMatrix::from_fn(3, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let eye = DMatrix::<f64>::identity(n, n);
    for (mi, z) in measurements.iter().enumerate() {
        let zv = DVector::from_column_slice(z.value.as_slice());
        let w = DMatrix::from_column_slice(3, 3, z.covariance.as_slice());
        let mut block = Vec::with_capacity(mixture.len());
        for (ci, c) in mixture.components.iter().enumerate() {
            let s = symmetrize(&(&h * &c.covariance * h.transpose() + &w));
            let resid = &zv - &h * &c.mean;
            let (logq, s_inv) = log_gaussian(&resid, &s).ok_or(Error::SingularInnovation {
                component: ci,
                measurement: mi,
            })?;
            let k = &c.covariance * h.transpose() * s_inv;
            block.push((
                cfg.p_detect * c.weight * logq.exp(),
                &c.mean + &k * resid,
                symmetrize(&((&eye - &k * &h) * &c.covariance)),
            ));
        }
        let denom = cfg.clutter_intensity + block.iter().map(|b| b.0).sum::<f64>();
        for (num, mean, covariance) in block {
            out.push(GaussianComponent {
                weight: if denom > 0.0 { num / denom } else { 0.0 },
                mean,
                covariance,
            });
        }
    }
    Ok(GaussianMixture::new(out))
}

/// Removes light components, merges close ones around the heaviest
/// remaining component, and keeps at most `max_components`.
pub fn prune_merge(mixture: &GaussianMixture, cfg: &PhdConfig) -> GaussianMixture {
    let mut pool: Vec<&GaussianComponent> = mixture
        .components
        .iter()
        .filter(|c| c.weight >= cfg.prune_threshold)
        .collect();
    let mut merged = Vec::new();
    while !pool.is_empty() {
        let mut j = 0;
        for (i, c) in pool.iter().enumerate() {
            if c.weight > pool[j].weight {
                j = i;
            }
        }
        let lead = pool[j];
        let inv = psd_inverse(&lead.covariance, 1e15).ok();
        let (group, rest): (Vec<_>, Vec<_>) = pool.into_iter().enumerate().partition(|(i, c)| {
            if *i == j {
                return true;
            }
            let d = &c.mean - &lead.mean;
            match &inv {
                Some(inv) => d.dot(&(inv * &d)) <= cfg.merge_threshold,
                None => d.norm() == 0.0,
            }
        });
        pool = rest.into_iter().map(|(_, c)| c).collect();
        if group.len() == 1 {
            merged.push(group[0].1.clone());
            continue;
        }
        let w: f64 = group.iter().map(|(_, c)| c.weight).sum();
        let mut mean = DVector::zeros(lead.mean.len());
        for (_, c) in &group {
            mean += &c.mean * c.weight;
        }
        mean /= w;
        let mut cov = DMatrix::zeros(lead.mean.len(), lead.mean.len());
        for (_, c) in &group {
            let d = &c.mean - &mean;
            cov += (&c.covariance + &d * d.transpose()) * c.weight;
        }
        cov /= w;
        merged.push(GaussianComponent {
            weight: w,
            mean,
            covariance: symmetrize(&cov),
        });
    }
    if merged.len() > cfg.max_components {
        let mut idx: Vec<usize> = (0..merged.len()).collect();
        idx.sort_by(|&a, &b| merged[b].weight.total_cmp(&merged[a].weight).then(a.cmp(&b)));
        idx.truncate(cfg.max_components);
        idx.sort_unstable();
        merged = idx.into_iter().map(|i| merged[i].clone()).collect();
    }
    GaussianMixture::new(merged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub states: Vec<UeState>,
    /// True when fewer than the requested number of components existed.
    pub shortfall: bool,
}

/// Means of the `count` heaviest components; equal weights keep insertion
/// order.
pub fn extract_states(mixture: &GaussianMixture, count: usize) -> Extraction {
    let mut idx: Vec<usize> = (0..mixture.len()).collect();
    idx.sort_by(|&a, &b| {
        mixture.components[b]
            .weight
            .total_cmp(&mixture.components[a].weight)
            .then(a.cmp(&b))
    });
    let shortfall = count > idx.len();
    Extraction {
        states: idx
            .into_iter()
            .take(count)
            .map(|i| UeState::from_vector(&mixture.components[i].mean))
            .collect(),
        shortfall,
    }
}

/// Cardinality estimate round(Σ w).
pub fn estimated_cardinality(mixture: &GaussianMixture) -> usize {
    mixture.total_weight().round().max(0.0) as usize
}

/// GM-PHD filter owning its mixture.
#[derive(Debug, Clone)]
pub struct PhdFilter {
    pub config: PhdConfig,
    pub motion: MotionModel,
    pub mixture: GaussianMixture,
}

impl PhdFilter {
    pub fn new(config: PhdConfig, motion: MotionModel) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            motion,
            mixture: GaussianMixture::default(),
        })
    }

    /// Prediction followed by appending the birth components.
    pub fn predict(&mut self) {
        self.mixture = predict(&self.mixture, &self.motion);
        self.mixture.components.extend(self.config.birth.iter().cloned());
    }

    /// Predicted means of the `count` heaviest components.
    pub fn predicted_states(&self, count: usize) -> Vec<UeState> {
        let mut m = predict(&self.mixture, &self.motion);
        m.components.extend(self.config.birth.iter().cloned());
        extract_states(&m, count).states
    }

    pub fn update(&mut self, measurements: &[PositionMeasurement]) -> Result<()> {
        let updated = update(&self.mixture, measurements, &self.config)?;
        self.mixture = prune_merge(&updated, &self.config);
        Ok(())
    }

    pub fn step(&mut self, measurements: &[PositionMeasurement]) -> Result<()> {
        self.predict();
        self.update(measurements)
    }
}

/// Maps (θ, φ, r) in an AP's local frame to a global position.
fn spherical_to_global(ap: &ApGeometry, theta: f64, phi: f64, range: f64) -> Vector3<f64> {
    ap.position + ap.rotation() * (direction(theta, phi) * range)
}

/// Position measurement from an angle/delay estimate by the unscented
/// transform with 2n+1 = 7 symmetric sigma points (κ = 0, so the central
/// point has weight 0 and the others 1/6). `covariance` is over (θ, φ, τ).
pub fn measurements_from_angles(
    ap: &ApGeometry,
    theta: f64,
    phi: f64,
    tau: f64,
    covariance: &Matrix3<f64>,
    source: MeasurementSource,
) -> Result<PositionMeasurement> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("delay must be positive".into()));
    }
    // work in (θ, φ, r) so the covariance is well scaled
    let scale = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, SPEED_OF_LIGHT));
    let cov = scale * covariance * scale;
    let cov = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let trace = cov.trace().abs();
    if eig.eigenvalues.iter().any(|&l| !l.is_finite() || l < -1e-9 * trace.max(f64::MIN_POSITIVE)) {
        return Err(Error::SigmaPoints);
    }
    let n = 3.0;
    let sqrt = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| (n * l.max(0.0)).sqrt())) * eig.eigenvectors.transpose();
    let centre = Vector3::new(theta, phi, SPEED_OF_LIGHT * tau);
    let mut points = Vec::with_capacity(6);
    for i in 0..3 {
        for sign in [1.0, -1.0] {
            let s = centre + sqrt.column(i) * sign;
            points.push(spherical_to_global(ap, s[0], s[1], s[2]));
        }
    }
    let w = 1.0 / 6.0;
    let origin = spherical_to_global(ap, centre[0], centre[1], centre[2]);
    let mean: Vector3<f64> = origin + points.iter().fold(Vector3::zeros(), |acc, p| acc + (p - origin) * w);
    let mut out_cov = Matrix3::zeros();
    for p in &points {
        let d = p - mean;
        out_cov += d * d.transpose() * w;
    }
    Ok(PositionMeasurement {
        value: mean,
        covariance: (out_cov + out_cov.transpose()) * 0.5,
        source,
    })
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Single-linkage grouping at `gate_distance` (Euclidean) and information
/// fusion of each group into one proxy measurement. Singletons pass through;
/// groups are emitted in order of their first member.
pub fn cluster_proxies(measurements: &[PositionMeasurement], gate_distance: f64) -> Vec<PositionMeasurement> {
    let n = measurements.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (measurements[i].value - measurements[j].value).norm() <= gate_distance {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_group[r] == usize::MAX {
            root_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_group[r]].push(i);
    }
    groups.into_iter().map(|g| fuse(measurements, &g)).collect()
}

fn fuse(measurements: &[PositionMeasurement], group: &[usize]) -> PositionMeasurement {
    if group.len() == 1 {
        return measurements[group[0]].clone();
    }
    let infos: Option<Vec<Matrix3<f64>>> = group
        .iter()
        .map(|&i| {
            let w = DMatrix::from_column_slice(3, 3, measurements[i].covariance.as_slice());
            psd_inverse(&w, tol::CONDITION_LIMIT)
                .ok()
                .map(|inv| Matrix3::from_column_slice(inv.as_slice()))
        })
        .collect();
    if let Some(infos) = infos {
        let info: Matrix3<f64> = infos.iter().sum();
        let weighted: Vector3<f64> = group.iter().zip(&infos).map(|(&i, l)| l * measurements[i].value).sum();
        let dinfo = DMatrix::from_column_slice(3, 3, info.as_slice());
        if let Ok(cov) = psd_inverse(&dinfo, tol::CONDITION_LIMIT) {
            let cov = Matrix3::from_column_slice(cov.as_slice());
            return PositionMeasurement {
                value: cov * weighted,
                covariance: cov,
                source: MeasurementSource::Proxy,
            };
        }
    }
    // some member has a singular covariance: fall back to the plain average
    let k = group.len() as f64;
    let value = group.iter().map(|&i| measurements[i].value).sum::<Vector3<f64>>() / k;
    let covariance = group.iter().map(|&i| measurements[i].covariance).sum::<Matrix3<f64>>() / (k * k);
    PositionMeasurement {
        value,
        covariance,
        source: MeasurementSource::Proxy,
    }
}

/// Track of the nearest-neighbour Kalman baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Standard Kalman update of one track with one position measurement.
pub fn kalman_update(track: &Track, z: &PositionMeasurement) -> Result<Track> {
    let n = track.mean.len();
    let h = DMatrix::from_fn(3, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let w = DMatrix::from_column_slice(3, 3, z.covariance.as_slice());
    let s = symmetrize(&(&h * &track.covariance * h.transpose() + w));
    let s_inv = s.cholesky().ok_or(Error::SingularInnovation { component: 0, measurement: 0 })?.inverse();
    let k = &track.covariance * h.transpose() * s_inv;
    let resid = DVector::from_column_slice(z.value.as_slice()) - &h * &track.mean;
    Ok(Track {
        mean: &track.mean + &k * resid,
        covariance: symmetrize(&((DMatrix::identity(n, n) - &k * &h) * &track.covariance)),
    })
}

fn mahalanobis_sq(track: &Track, z: &PositionMeasurement) -> Option<f64> {
    let n = track.mean.len();
    let h = DMatrix::from_fn(3, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let w = DMatrix::from_column_slice(3, 3, z.covariance.as_slice());
    let s = symmetrize(&(&h * &track.covariance * h.transpose() + w));
    let resid = DVector::from_column_slice(z.value.as_slice()) - &h * &track.mean;
    let chol = s.cholesky()?;
    Some(resid.dot(&chol.solve(&resid)))
}

/// Predict every track, associate measurements by greedy global nearest
/// neighbour on the squared Mahalanobis distance within `gate`, update the
/// associated tracks and let the others coast.
pub fn kalman_baseline_step(
    tracks: &[Track],
    measurements: &[PositionMeasurement],
    motion: &MotionModel,
    gate: f64,
) -> Result<Vec<Track>> {
    let f = motion.transition();
    let predicted: Vec<Track> = tracks
        .iter()
        .map(|t| Track {
            mean: &f * &t.mean,
            covariance: symmetrize(&(&f * &t.covariance * f.transpose() + &motion.process_noise)),
        })
        .collect();
    let mut pairs = Vec::new();
    for (ti, t) in predicted.iter().enumerate() {
        for (mi, z) in measurements.iter().enumerate() {
            if let Some(d) = mahalanobis_sq(t, z) {
                if d <= gate {
                    pairs.push((d, ti, mi));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; predicted.len()];
    let mut meas_used = vec![false; measurements.len()];
    let mut out = predicted.clone();
    for (_, ti, mi) in pairs {
        if track_used[ti] || meas_used[mi] {
            continue;
        }
        track_used[ti] = true;
        meas_used[mi] = true;
        out[ti] = kalman_update(&predicted[ti], &measurements[mi])?;
    }
    Ok(out)
}

/// ‖p̂ − p‖.
pub fn instantaneous_rmse(estimate: &Vector3<f64>, truth: &Vector3<f64>) -> f64 {
    (estimate - truth).norm()
}
