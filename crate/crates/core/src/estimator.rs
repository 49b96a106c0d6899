//! Maximum-likelihood direct positioning from multi-AP snapshots and the
//! Monte Carlo harness comparing its RMSE with the PEB.

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eadf::EadfModel;
use crate::error::{Error, Result};
use crate::fim::{efim_xi, fim_theta, jacobian_xi_to_p, peb, ApGeometry, PositionFim, Frame};
use crate::mathcore::{tol, SeededStream};
use crate::signal::{free_space_gain, synthesize_received, tilt_rotate, SignalSpec, UeAntenna};

/// Search settings of [`ml_estimate`]: a coarse grid of spacing `coarse_step`
/// over `center ± grid_extent / 2`, followed by `refine_iterations` pattern
/// search rounds whose step shrinks by `refine_shrink`, then a Newton polish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlConfig {
    pub center: Vector3<f64>,
    pub grid_extent: Vector3<f64>,
    pub coarse_step: f64,
    pub refine_iterations: usize,
    pub refine_shrink: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            center: Vector3::zeros(),
            grid_extent: Vector3::new(1.0, 1.0, 1.0),
            coarse_step: 0.25,
            refine_iterations: 6,
            refine_shrink: 0.5,
        }
    }
}

impl MlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_step > 0.0) {
            return Err(Error::InvalidInput("coarse_step must be positive".into()));
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return Err(Error::InvalidInput("refine_shrink must lie in (0, 1)".into()));
        }
        if self.grid_extent.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidInput("grid_extent must be non-negative".into()));
        }
        Ok(())
    }
}

/// Received snapshot of one AP together with the AP's array model and pose.
#[derive(Debug, Clone)]
pub struct ApObservation<'a> {
    pub model: &'a EadfModel,
    pub geometry: ApGeometry,
    pub signal: DVector<Complex64>,
}

/// Concentrated log-likelihood (up to constants and the 1/σ² factor):
/// Σ_k ‖P_k y_k‖², with P_k the projector onto the gain columns of AP k at
/// candidate position `pos`.
pub fn concentrated_log_likelihood(
    observations: &[ApObservation<'_>],
    ue: &UeAntenna,
    spec: &SignalSpec,
    pos: &Vector3<f64>,
) -> f64 {
    let (ctv, cth) = tilt_rotate(ue);
    let use_v = ctv.norm() > 0.0;
    let use_h = cth.norm() > 0.0;
    let nf = spec.len();
    observations
        .iter()
        .map(|obs| {
            let Ok((theta, phi, tau)) = obs.geometry.local_angles(pos) else {
                return 0.0;
            };
            let b = spec.delay_vector(tau);
            let bb = b.norm_squared();
            let n = obs.model.element_count();
            // u_n = Σ_f conj(b_f) y_{n,f}
            let u: Vec<Complex64> = (0..n)
                .map(|e| (0..nf).map(|f| b[f].conj() * obs.signal[e * nf + f]).sum())
                .collect();
            let resp = obs.model.response_with_derivatives(theta, phi);
            let cv = &resp.value[0];
            let ch = &resp.value[1];
            let zv: Complex64 = (0..n).map(|e| cv[e].conj() * u[e]).sum();
            let zh: Complex64 = (0..n).map(|e| ch[e].conj() * u[e]).sum();
            let gvv = cv.norm_squared() * bb;
            let ghh = ch.norm_squared() * bb;
            let gvh = cv.dotc(ch) * bb;
            let floor = 1e-12 * gvv.max(ghh);
            let keep_v = use_v && gvv > floor;
            let keep_h = use_h && ghh > floor;
            match (keep_v, keep_h) {
                (true, true) => {
                    let det = gvv * ghh - gvh.norm_sqr();
                    if det > 1e-12 * gvv * ghh {
                        // zᴴ G⁻¹ z with G = [[gvv, gvh], [conj(gvh), ghh]]
                        let q = zv.norm_sqr() * ghh + zh.norm_sqr() * gvv
                            - 2.0 * (zv.conj() * gvh * zh).re;
                        q / det
                    } else if gvv >= ghh {
                        zv.norm_sqr() / gvv
                    } else {
                        zh.norm_sqr() / ghh
                    }
                }
                (true, false) => zv.norm_sqr() / gvv,
                (false, true) => zh.norm_sqr() / ghh,
                (false, false) => 0.0,
            }
        })
        .sum()
}

fn grid_axis(center: f64, extent: f64, step: f64) -> Vec<f64> {
    let half = (extent / 2.0 / step).floor() as i64;
    (-half..=half).map(|i| center + i as f64 * step).collect()
}

/// Grid-refined maximizer of the concentrated log-likelihood.
pub fn ml_estimate(
    observations: &[ApObservation<'_>],
    ue: &UeAntenna,
    spec: &SignalSpec,
    config: &MlConfig,
) -> Result<Vector3<f64>> {
    if observations.is_empty() {
        return Err(Error::EmptyApSet);
    }
    config.validate()?;
    spec.validate()?;
    for obs in observations {
        let expected = obs.model.element_count() * spec.len();
        if obs.signal.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: obs.signal.len(),
                context: "AP signal length",
            });
        }
    }
    let ll = |p: &Vector3<f64>| concentrated_log_likelihood(observations, ue, spec, p);

    let c = config.center;
    let e = config.grid_extent;
    let mut best = c;
    let mut best_val = f64::NEG_INFINITY;
    for &x in &grid_axis(c.x, e.x, config.coarse_step) {
        for &y in &grid_axis(c.y, e.y, config.coarse_step) {
            for &z in &grid_axis(c.z, e.z, config.coarse_step) {
                let p = Vector3::new(x, y, z);
                let v = ll(&p);
                if v > best_val {
                    best_val = v;
                    best = p;
                }
            }
        }
    }

    let mut step = config.coarse_step * config.refine_shrink;
    for _ in 0..config.refine_iterations {
        // move on the 3x3x3 stencil until the centre is best, then shrink
        for _ in 0..64 {
            let mut moved = false;
            let centre = best;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let p = centre + Vector3::new(dx as f64, dy as f64, dz as f64) * step;
                        let v = ll(&p);
                        if v > best_val {
                            best_val = v;
                            best = p;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
        }
        step *= config.refine_shrink;
    }

    // Newton polish with a finite-difference Hessian
    let h = (step * 0.25).max(1e-6);
    for _ in 0..8 {
        let (g, hess) = gradient_hessian(&ll, &best, h);
        let neg = -hess;
        let eig = neg.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            break;
        }
        let Some(inv) = neg.try_inverse() else { break };
        let delta = inv * g;
        if delta.norm() > 4.0 * step.max(h) {
            break;
        }
        let cand = best + delta;
        let v = ll(&cand);
        if v > best_val {
            best_val = v;
            best = cand;
            if delta.norm() < 1e-9 {
                break;
            }
        } else {
            break;
        }
    }

    let (_, hess) = gradient_hessian(&ll, &best, h);
    let eig = hess.symmetric_eigenvalues().map(f64::abs);
    let condition = if eig.min() > 0.0 { eig.max() / eig.min() } else { f64::INFINITY };
    if condition > tol::AMBIGUITY_CONDITION {
        return Err(Error::AmbiguousEstimate { condition });
    }
    Ok(best)
}

fn gradient_hessian(f: &impl Fn(&Vector3<f64>) -> f64, p: &Vector3<f64>, h: f64) -> (Vector3<f64>, Matrix3<f64>) {
    let f0 = f(p);
    let e = |i: usize| {
        let mut v = Vector3::zeros();
        v[i] = h;
        v
    };
    let mut g = Vector3::zeros();
    let mut hess = Matrix3::zeros();
    for i in 0..3 {
        let fp = f(&(p + e(i)));
        let fm = f(&(p - e(i)));
        g[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (f(&(p + e(i) + e(j))) - f(&(p + e(i) - e(j))) - f(&(p - e(i) + e(j))) + f(&(p - e(i) - e(j))))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

/// One AP of a Monte Carlo scenario.
#[derive(Debug, Clone)]
pub struct McAp {
    pub model: Arc<EadfModel>,
    pub geometry: ApGeometry,
}

/// Static single-UE positioning scenario.
#[derive(Debug, Clone)]
pub struct MonteCarloScenario {
    pub aps: Vec<McAp>,
    pub ue_position: Vector3<f64>,
    pub ue: UeAntenna,
    pub wavelength: f64,
    /// Spectrum; its noise variance is replaced per SNR point.
    pub spectrum: SignalSpec,
    pub ml: MlConfig,
}

impl MonteCarloScenario {
    /// Free-space gain of every AP toward the UE (same for both polarizations).
    pub fn gains(&self) -> Result<Vec<Complex64>> {
        self.aps
            .iter()
            .map(|ap| free_space_gain(self.wavelength, &ap.geometry.position, &self.ue_position))
            .collect()
    }

    /// Noise variance for a receive SNR of `snr_db`, defined as
    /// E_s · mean_k |α_k|² / σ².
    pub fn noise_variance(&self, snr_db: f64) -> Result<f64> {
        let g = self.gains()?;
        let mean_power = g.iter().map(|a| a.norm_sqr()).sum::<f64>() / g.len() as f64;
        Ok(self.spectrum.energy() * mean_power / 10f64.powf(snr_db / 10.0))
    }

    pub fn spec_at(&self, snr_db: f64) -> Result<SignalSpec> {
        Ok(self.spectrum.with_noise_variance(self.noise_variance(snr_db)?))
    }

    /// PEB of the scenario at the given SNR.
    pub fn peb(&self, snr_db: f64) -> Result<f64> {
        let spec = self.spec_at(snr_db)?;
        let gains = self.gains()?;
        let mut total = Matrix3::zeros();
        for (ap, &g) in self.aps.iter().zip(&gains) {
            let params = ap.geometry.los_params(&self.ue_position, g, g)?;
            let f = fim_theta(&ap.model, &params, &self.ue, &spec)?;
            let j = jacobian_xi_to_p(&params)?;
            let r = ap.geometry.rotation();
            total += r * j * efim_xi(&f)? * j.transpose() * r.transpose();
        }
        peb(&PositionFim {
            matrix: total,
            frame: Frame::Global,
        })
    }

    /// One ML trial with its own random stream; returns the position error.
    pub fn trial(&self, snr_db: f64, seed: SeededStream) -> Result<Vector3<f64>> {
        let spec = self.spec_at(snr_db)?;
        let gains = self.gains()?;
        let observations = self
            .aps
            .iter()
            .zip(&gains)
            .enumerate()
            .map(|(k, (ap, &g))| {
                let params = ap.geometry.los_params(&self.ue_position, g, g)?;
                let signal = synthesize_received(&ap.model, &params, &self.ue, &spec, seed.derive(&[k as u64]))?;
                Ok(ApObservation {
                    model: &ap.model,
                    geometry: ap.geometry,
                    signal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let est = ml_estimate(&observations, &self.ue, &spec, &self.ml)?;
        Ok(est - self.ue_position)
    }
}

/// RMSE of the ML estimator at one SNR next to the PEB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseReport {
    pub snr_db: f64,
    /// sqrt(mean ‖p̂ − p‖²).
    pub rmse: f64,
    /// mean ‖p̂ − p‖.
    pub mean_error: f64,
    /// Standard error of the mean squared error, propagated to the RMSE.
    pub rmse_std_error: f64,
    pub peb: f64,
    pub trials: usize,
}

/// Runs `trials` independent ML trials at each SNR. Trial `t` at SNR index
/// `i` uses the stream `seed.derive([i, t])`, so results do not depend on the
/// number of worker threads.
pub fn run_monte_carlo(
    scenario: &MonteCarloScenario,
    snr_grid: &[f64],
    trials: usize,
    seed: SeededStream,
) -> Result<Vec<RmseReport>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    snr_grid
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let errors = (0..trials)
                .into_par_iter()
                .map(|t| scenario.trial(snr, seed.derive(&[i as u64, t as u64])))
                .collect::<Result<Vec<_>>>()?;
            let sq: Vec<f64> = errors.iter().map(|e| e.norm_squared()).collect();
            let n = sq.len() as f64;
            let mse = sq.iter().sum::<f64>() / n;
            let var = if sq.len() > 1 {
                sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let rmse = mse.sqrt();
            let rmse_std_error = if rmse > 0.0 { (var / n).sqrt() / (2.0 * rmse) } else { 0.0 };
            Ok(RmseReport {
                snr_db: snr,
                rmse,
                mean_error: errors.iter().map(|e| e.norm()).sum::<f64>() / n,
                rmse_std_error,
                peb: scenario.peb(snr)?,
                trials,
            })
        })
        .collect()
}
