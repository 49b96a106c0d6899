//! Polarimetric line-of-sight signal model.
//!
//! The received snapshot of one AP is `D = B(Θ) γ + n` with
//! `γ = (α_VV, α_VH, α_HV, α_HH)` and the cross-polar gains fixed to zero.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use crate::eadf::{EadfModel, Polarization};
use crate::error::{Error, Result};
use crate::mathcore::{complex_normal, SeededStream};

/// Channel parameters of one AP–UE line-of-sight path in the AP's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosParams {
    /// Elevation of arrival, radians.
    pub theta: f64,
    /// Azimuth of arrival, radians.
    pub phi: f64,
    /// Propagation delay, seconds.
    pub tau: f64,
    pub alpha_vv: Complex64,
    pub alpha_hh: Complex64,
}

impl LosParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta, self.phi, self.tau, self.alpha_vv.re, self.alpha_vv.im, self.alpha_hh.re, self.alpha_hh.im]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("LoS parameters"));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidInput("delay must be positive".into()));
        }
        Ok(())
    }

    /// Gains as the real vector (Re α_VV, Im α_VV, Re α_HH, Im α_HH).
    pub fn gain_vector(&self) -> [f64; 4] {
        [self.alpha_vv.re, self.alpha_vv.im, self.alpha_hh.re, self.alpha_hh.im]
    }
}

/// Transmit antenna of a UE: co/cross gains plus the tilt angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeAntenna {
    pub c_tv: Complex64,
    pub c_th: Complex64,
    pub beta: f64,
}

impl UeAntenna {
    /// Single vertically polarized antenna with tilt `beta`.
    pub fn vertical(beta: f64) -> Self {
        Self {
            c_tv: Complex64::new(1.0, 0.0),
            c_th: Complex64::new(0.0, 0.0),
            beta,
        }
    }

    /// Antenna whose rotated gains are exactly `(c_tv, c_th)` (no tilt).
    pub fn fixed(c_tv: Complex64, c_th: Complex64) -> Self {
        Self { c_tv, c_th, beta: 0.0 }
    }
}

/// Gains after rotating the UE antenna by its tilt angle.
pub fn tilt_rotate(ue: &UeAntenna) -> (Complex64, Complex64) {
    let (s, c) = ue.beta.sin_cos();
    (ue.c_tv * c - ue.c_th * s, ue.c_tv * s + ue.c_th * c)
}

/// Baseband transmit spectrum and receiver noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub noise_variance: f64,
}

impl SignalSpec {
    pub fn new(frequencies: Vec<f64>, amplitudes: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let spec = Self {
            frequencies,
            amplitudes,
            noise_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `count` equally spaced tones covering `bandwidth` around DC, with
    /// equal amplitudes summing to `energy`.
    pub fn flat(bandwidth: f64, count: usize, energy: f64, noise_variance: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("frequency_count must be positive".into()));
        }
        let df = bandwidth / count as f64;
        let freqs = (0..count)
            .map(|i| (i as f64 - (count as f64 - 1.0) / 2.0) * df)
            .collect();
        let amp = (energy / count as f64).sqrt();
        Self::new(freqs, vec![amp; count], noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::InvalidInput("at least one frequency is required".into()));
        }
        if self.frequencies.len() != self.amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.frequencies.len(),
                actual: self.amplitudes.len(),
                context: "signal amplitudes",
            });
        }
        if self
            .frequencies
            .iter()
            .chain(&self.amplitudes)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("signal spectrum"));
        }
        if self.amplitudes.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidInput("amplitudes must be non-negative".into()));
        }
        if !(self.energy() > 0.0) {
            return Err(Error::InvalidInput("signal energy must be positive".into()));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::InvalidInput("noise variance must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Total energy E_s = Σ |s(f)|².
    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// E_s / σ² in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.energy() / self.noise_variance).log10()
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Self {
        Self {
            noise_variance,
            ..self.clone()
        }
    }

    /// Delay vector b_f = s(f) e^{-j 2π f τ}.
    pub fn delay_vector(&self, tau: f64) -> DVector<Complex64> {
        DVector::from_iterator(
            self.len(),
            self.frequencies
                .iter()
                .zip(&self.amplitudes)
                .map(|(&f, &a)| Complex64::from_polar(a, -TAU * f * tau)),
        )
    }

    /// Derivative of [`Self::delay_vector`] with respect to τ.
    pub fn delay_vector_derivative(&self, tau: f64) -> DVector<Complex64> {
        let b = self.delay_vector(tau);
        DVector::from_iterator(
            self.len(),
            b.iter()
                .zip(&self.frequencies)
                .map(|(v, &f)| v * Complex64::new(0.0, -TAU * f)),
        )
    }
}

/// Root-mean-square bandwidth: B_e² = Σ f² |s(f)|² / E_s.
pub fn effective_bandwidth(spec: &SignalSpec) -> f64 {
    let m2: f64 = spec
        .frequencies
        .iter()
        .zip(&spec.amplitudes)
        .map(|(f, a)| f * f * a * a)
        .sum();
    (m2 / spec.energy()).sqrt()
}

/// Free-space amplitude λ / (4π d).
pub fn free_space_gain(wavelength: f64, ap_pos: &Vector3<f64>, ue_pos: &Vector3<f64>) -> Result<Complex64> {
    let d = (ap_pos - ue_pos).norm();
    if !(d > 0.0) {
        return Err(Error::InvalidInput("AP and UE positions coincide".into()));
    }
    Ok(Complex64::new(wavelength / (4.0 * PI * d), 0.0))
}

fn kron(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(a.len() * b.len(), |i, _| a[i / b.len()] * b[i % b.len()])
}

/// B(Θ) with columns (VV, VH, HV, HH); row `n * N_f + f` is element `n`,
/// frequency `f`.
pub fn build_b_matrix(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    spec.validate()?;
    let (ctv, cth) = tilt_rotate(ue);
    let b = spec.delay_vector(params.tau);
    let cv = kron(&model.evaluate_response(params.theta, params.phi, Polarization::V)?, &b);
    let ch = kron(&model.evaluate_response(params.theta, params.phi, Polarization::H)?, &b);
    let mut out = DMatrix::zeros(cv.len(), 4);
    out.set_column(0, &(&cv * ctv));
    out.set_column(1, &(&cv * cth));
    out.set_column(2, &(&ch * ctv));
    out.set_column(3, &(&ch * cth));
    Ok(out)
}

/// Noise-free observation B(Θ) γ with γ = (α_VV, 0, 0, α_HH).
pub fn noiseless_observation(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
) -> Result<DVector<Complex64>> {
    let b = build_b_matrix(model, params, ue, spec)?;
    Ok(b.column(0) * params.alpha_vv + b.column(3) * params.alpha_hh)
}

/// Noisy observation with circularly symmetric Gaussian noise of variance
/// `spec.noise_variance` per sample.
pub fn synthesize_received(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
    seed: SeededStream,
) -> Result<DVector<Complex64>> {
    let clean = noiseless_observation(model, params, ue, spec)?;
    let mut rng = seed.rng();
    let sigma = spec.noise_variance.sqrt();
    Ok(clean.map(|v| v + complex_normal(&mut rng) * sigma))
}
