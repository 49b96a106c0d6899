//! Effective aperture distribution functions.
//!
//! A [`PatternGrid`] holds polarimetric pattern samples on a full-period
//! (theta, phi) grid; [`EadfModel`] stores its 2D DFT and reconstructs the
//! array response (and its angle derivatives) at any direction as a short
//! Fourier series.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mathcore::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    V,
    H,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::V, Polarization::H];

    pub fn index(self) -> usize {
        match self {
            Polarization::V => 0,
            Polarization::H => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleAxis {
    Theta,
    Phi,
}

/// Pattern samples indexed `[element][polarization][m_theta][m_phi]`.
///
/// Row `m_theta` sits at elevation `2 pi m_theta / M_theta` and column `m_phi`
/// at azimuth `2 pi m_phi / M_phi`; both axes cover a full period.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGrid {
    element_count: usize,
    m_theta: usize,
    m_phi: usize,
    samples: Vec<Complex64>,
}

impl PatternGrid {
    pub fn new(
        element_count: usize,
        m_theta: usize,
        m_phi: usize,
        samples: Vec<Complex64>,
    ) -> Result<Self> {
        check_dims(element_count, m_theta, m_phi)?;
        let expected = element_count * 2 * m_theta * m_phi;
        if samples.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: samples.len(),
                context: "pattern sample count",
            });
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::NonFinite("pattern samples"));
        }
        Ok(Self {
            element_count,
            m_theta,
            m_phi,
            samples,
        })
    }

    /// Builds a grid by sampling `f(element, polarization, theta, phi)`.
    pub fn from_fn(
        element_count: usize,
        m_theta: usize,
        m_phi: usize,
        mut f: impl FnMut(usize, Polarization, f64, f64) -> Complex64,
    ) -> Result<Self> {
        check_dims(element_count, m_theta, m_phi)?;
        let mut samples = Vec::with_capacity(element_count * 2 * m_theta * m_phi);
        for n in 0..element_count {
            for p in Polarization::BOTH {
                for it in 0..m_theta {
                    let theta = TAU * it as f64 / m_theta as f64;
                    for ip in 0..m_phi {
                        let phi = TAU * ip as f64 / m_phi as f64;
                        samples.push(f(n, p, theta, phi));
                    }
                }
            }
        }
        Self::new(element_count, m_theta, m_phi, samples)
    }

    /// Extends a pattern measured only on elevations [0, pi] to the full
    /// period using the identity c(2 pi - theta, phi + pi) = s * c(theta, phi).
    ///
    /// `upper` must hold rows `0..=M_theta/2` for each element and
    /// polarization, laid out like the full grid. Pass `flip_sign = true` when
    /// the V/H components are field components along the spherical unit
    /// vectors, which both change sign under the reparametrization.
    pub fn from_upper_hemisphere(
        element_count: usize,
        m_theta: usize,
        m_phi: usize,
        upper: &[Complex64],
        flip_sign: bool,
    ) -> Result<Self> {
        check_dims(element_count, m_theta, m_phi)?;
        let half_rows = m_theta / 2 + 1;
        let expected = element_count * 2 * half_rows * m_phi;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: upper.len(),
                context: "upper-hemisphere sample count",
            });
        }
        let sign = if flip_sign { -1.0 } else { 1.0 };
        let mut samples = vec![Complex64::new(0.0, 0.0); element_count * 2 * m_theta * m_phi];
        for block in 0..element_count * 2 {
            for it in 0..m_theta {
                for ip in 0..m_phi {
                    let value = if it < half_rows {
                        upper[(block * half_rows + it) * m_phi + ip]
                    } else {
                        let src_row = m_theta - it;
                        let src_col = (ip + m_phi / 2) % m_phi;
                        upper[(block * half_rows + src_row) * m_phi + src_col] * sign
                    };
                    samples[(block * m_theta + it) * m_phi + ip] = value;
                }
            }
        }
        Self::new(element_count, m_theta, m_phi, samples)
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn m_theta(&self) -> usize {
        self.m_theta
    }

    pub fn m_phi(&self) -> usize {
        self.m_phi
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn theta_at(&self, m_theta: usize) -> f64 {
        TAU * m_theta as f64 / self.m_theta as f64
    }

    pub fn phi_at(&self, m_phi: usize) -> f64 {
        TAU * m_phi as f64 / self.m_phi as f64
    }

    fn offset(&self, n: usize, p: Polarization, it: usize, ip: usize) -> usize {
        ((n * 2 + p.index()) * self.m_theta + it) * self.m_phi + ip
    }

    pub fn get(&self, n: usize, p: Polarization, m_theta: usize, m_phi: usize) -> Complex64 {
        self.samples[self.offset(n, p, m_theta, m_phi)]
    }

    pub fn set(&mut self, n: usize, p: Polarization, m_theta: usize, m_phi: usize, v: Complex64) {
        let o = self.offset(n, p, m_theta, m_phi);
        self.samples[o] = v;
    }

    /// Serializes to the `eadf-pattern v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "eadf-pattern v1 {} {} {}\n",
            self.element_count, self.m_theta, self.m_phi
        );
        for s in &self.samples {
            writeln!(out, "{:?} {:?}", s.re, s.im).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::PatternFormat {
            line: 1,
            message: "empty file".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "eadf-pattern" || parts[1] != "v1" {
            return Err(Error::PatternFormat {
                line: 1,
                message: "expected header `eadf-pattern v1 N M_theta M_phi`".into(),
            });
        }
        let dim = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::PatternFormat {
                line: 1,
                message: format!("bad dimension `{s}`: {e}"),
            })
        };
        let (n, mt, mp) = (dim(parts[2])?, dim(parts[3])?, dim(parts[4])?);
        let mut samples = Vec::with_capacity(n * 2 * mt * mp);
        for (i, line) in lines {
            let mut it = line.split_whitespace();
            let mut num = || -> Result<f64> {
                let tok = it.next().ok_or(Error::PatternFormat {
                    line: i + 1,
                    message: "expected `re im`".into(),
                })?;
                tok.parse::<f64>().map_err(|e| Error::PatternFormat {
                    line: i + 1,
                    message: format!("bad number `{tok}`: {e}"),
                })
            };
            let re = num()?;
            let im = num()?;
            samples.push(Complex64::new(re, im));
        }
        Self::new(n, mt, mp, samples)
    }
}

fn check_dims(element_count: usize, m_theta: usize, m_phi: usize) -> Result<()> {
    if element_count == 0 || m_theta == 0 || m_phi == 0 {
        return Err(Error::InvalidInput("pattern dimensions must be positive".into()));
    }
    if m_theta % 2 != 0 || m_phi % 2 != 0 {
        return Err(Error::OddGrid { m_theta, m_phi });
    }
    Ok(())
}

/// 2D Fourier coefficients of a [`PatternGrid`].
///
/// Row `2n + p` holds element `n`, polarization `p`; column
/// `a * M_phi + b` holds the mode pair (`theta_index[a]`, `phi_index[b]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EadfModel {
    element_count: usize,
    m_theta: usize,
    m_phi: usize,
    coefficients: DMatrix<Complex64>,
    theta_index: Vec<i64>,
    phi_index: Vec<i64>,
    normalized: bool,
}

/// Array response and its angle derivatives at one direction, for both
/// polarizations.
#[derive(Debug, Clone)]
pub struct ArrayResponse {
    pub value: [DVector<Complex64>; 2],
    pub d_theta: [DVector<Complex64>; 2],
    pub d_phi: [DVector<Complex64>; 2],
}

impl ArrayResponse {
    pub fn value(&self, p: Polarization) -> &DVector<Complex64> {
        &self.value[p.index()]
    }
}

fn index_vector(m: usize) -> Vec<i64> {
    let h = (m / 2) as i64;
    (-h..h).collect()
}

fn phasors(angle: f64, index: &[i64]) -> Vec<Complex64> {
    index
        .iter()
        .map(|&k| Complex64::cis(angle * k as f64))
        .collect()
}

pub fn build_eadf(pattern: &PatternGrid) -> Result<EadfModel> {
    let (n_el, mt, mp) = (pattern.element_count, pattern.m_theta, pattern.m_phi);
    check_dims(n_el, mt, mp)?;
    if pattern
        .samples
        .iter()
        .any(|s| !s.re.is_finite() || !s.im.is_finite())
    {
        return Err(Error::NonFinite("pattern samples"));
    }
    let theta_index = index_vector(mt);
    let phi_index = index_vector(mp);
    // twiddle[a][k] = exp(-j 2 pi a k / M)
    let twiddle = |idx: &[i64], m: usize| -> Vec<Vec<Complex64>> {
        idx.iter()
            .map(|&a| {
                (0..m)
                    .map(|k| Complex64::cis(-TAU * ((a * k as i64).rem_euclid(m as i64)) as f64 / m as f64))
                    .collect()
            })
            .collect()
    };
    let tw_t = twiddle(&theta_index, mt);
    let tw_p = twiddle(&phi_index, mp);
    let mut coefficients = DMatrix::<Complex64>::zeros(n_el * 2, mt * mp);
    let mut partial = vec![Complex64::new(0.0, 0.0); mt * mp];
    for row in 0..n_el * 2 {
        let block = &pattern.samples[row * mt * mp..(row + 1) * mt * mp];
        // partial[k][b] = sum_l C[k][l] tw_p[b][l]
        for k in 0..mt {
            for (b, twb) in tw_p.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..mp {
                    acc += block[k * mp + l] * twb[l];
                }
                partial[k * mp + b] = acc;
            }
        }
        for (a, twa) in tw_t.iter().enumerate() {
            for b in 0..mp {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..mt {
                    acc += partial[k * mp + b] * twa[k];
                }
                coefficients[(row, a * mp + b)] = acc;
            }
        }
    }
    Ok(EadfModel {
        element_count: n_el,
        m_theta: mt,
        m_phi: mp,
        coefficients,
        theta_index,
        phi_index,
        normalized: false,
    })
}

impl EadfModel {
    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn m_theta(&self) -> usize {
        self.m_theta
    }

    pub fn m_phi(&self) -> usize {
        self.m_phi
    }

    pub fn coefficients(&self) -> &DMatrix<Complex64> {
        &self.coefficients
    }

    pub fn theta_index(&self) -> &[i64] {
        &self.theta_index
    }

    pub fn phi_index(&self) -> &[i64] {
        &self.phi_index
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Factor applied to `Q (w_theta ⊗ w_phi)`. Raw models carry the inverse
    /// DFT factor 1/(M_theta M_phi) so that they reproduce the pattern samples;
    /// normalized models are evaluated without it, their coefficients already
    /// carrying unit energy per element.
    pub fn evaluation_scale(&self) -> f64 {
        if self.normalized {
            1.0
        } else {
            1.0 / (self.m_theta * self.m_phi) as f64
        }
    }

    /// Sum of |q|^2 over polarizations and modes for element `n`.
    pub fn element_energy(&self, n: usize) -> f64 {
        let rows = self.coefficients.rows(2 * n, 2);
        rows.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn evaluate_response(&self, theta: f64, phi: f64, p: Polarization) -> Result<DVector<Complex64>> {
        check_angles(theta, phi)?;
        Ok(self.series(theta, phi, p, None))
    }

    pub fn evaluate_response_derivative(
        &self,
        theta: f64,
        phi: f64,
        p: Polarization,
        wrt: AngleAxis,
    ) -> Result<DVector<Complex64>> {
        check_angles(theta, phi)?;
        Ok(self.series(theta, phi, p, Some(wrt)))
    }

    fn series(&self, theta: f64, phi: f64, p: Polarization, wrt: Option<AngleAxis>) -> DVector<Complex64> {
        let mut wt = phasors(theta, &self.theta_index);
        let mut wp = phasors(phi, &self.phi_index);
        match wrt {
            Some(AngleAxis::Theta) => {
                for (w, &k) in wt.iter_mut().zip(&self.theta_index) {
                    *w *= Complex64::new(0.0, k as f64);
                }
            }
            Some(AngleAxis::Phi) => {
                for (w, &k) in wp.iter_mut().zip(&self.phi_index) {
                    *w *= Complex64::new(0.0, k as f64);
                }
            }
            None => {}
        }
        let scale = self.evaluation_scale();
        DVector::from_fn(self.element_count, |n, _| {
            let row = self.coefficients.row(2 * n + p.index());
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, wa) in wt.iter().enumerate() {
                let mut inner = Complex64::new(0.0, 0.0);
                for (b, wb) in wp.iter().enumerate() {
                    inner += row[a * self.m_phi + b] * wb;
                }
                acc += inner * wa;
            }
            acc * scale
        })
    }

    /// Response and both angle derivatives for V and H in a single pass.
    /// Angles are assumed finite.
    pub fn response_with_derivatives(&self, theta: f64, phi: f64) -> ArrayResponse {
        let wt = phasors(theta, &self.theta_index);
        let wp = phasors(phi, &self.phi_index);
        let scale = self.evaluation_scale();
        let n_el = self.element_count;
        let zero = || DVector::<Complex64>::zeros(n_el);
        let mut out = ArrayResponse {
            value: [zero(), zero()],
            d_theta: [zero(), zero()],
            d_phi: [zero(), zero()],
        };
        for n in 0..n_el {
            for p in 0..2 {
                let row = self.coefficients.row(2 * n + p);
                let mut v = Complex64::new(0.0, 0.0);
                let mut dt = Complex64::new(0.0, 0.0);
                let mut dp = Complex64::new(0.0, 0.0);
                for (a, wa) in wt.iter().enumerate() {
                    let mut inner = Complex64::new(0.0, 0.0);
                    let mut inner_d = Complex64::new(0.0, 0.0);
                    for (b, wb) in wp.iter().enumerate() {
                        let t = row[a * self.m_phi + b] * wb;
                        inner += t;
                        inner_d += t * self.phi_index[b] as f64;
                    }
                    v += inner * wa;
                    dt += inner * wa * self.theta_index[a] as f64;
                    dp += inner_d * wa;
                }
                let j = Complex64::new(0.0, 1.0);
                out.value[p][n] = v * scale;
                out.d_theta[p][n] = j * dt * scale;
                out.d_phi[p][n] = j * dp * scale;
            }
        }
        out
    }
}

fn check_angles(theta: f64, phi: f64) -> Result<()> {
    if theta.is_finite() && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("direction angles"))
    }
}

/// Scales each element so that its energy summed over `frequency_count`
/// frequencies, both polarizations and all modes is one. Normalizing an
/// already normalized model returns it unchanged.
pub fn normalize_eadf(model: &EadfModel, frequency_count: usize) -> Result<EadfModel> {
    if frequency_count == 0 {
        return Err(Error::InvalidInput("frequency_count must be positive".into()));
    }
    let mut out = model.clone();
    if model.normalized {
        return Ok(out);
    }
    for n in 0..model.element_count {
        let energy = frequency_count as f64 * model.element_energy(n);
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::ZeroEnergyElement { element: n });
        }
        let s = 1.0 / energy.sqrt();
        for r in [2 * n, 2 * n + 1] {
            for c in out.coefficients.row_mut(r).iter_mut() {
                *c *= s;
            }
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Element layout of a synthetic planar array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarizationLayout {
    /// Every element is V-polarized; H is zero.
    #[default]
    AllVertical,
    /// Even elements V-polarized, odd elements H-polarized.
    Alternating,
}

/// Imbalances applied to an ideal array to mimic a measured one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// Standard deviation of the per-element gain in dB (log-normal magnitude).
    pub gain_sigma_db: f64,
    /// Half-width of the uniform per-element phase error, degrees.
    pub phase_spread_deg: f64,
    /// Cross-polar leakage level, dB relative to the co-polar response.
    pub cross_polar_db: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            gain_sigma_db: 0.5,
            phase_spread_deg: 5.0,
            cross_polar_db: -20.0,
        }
    }
}

/// Planar array in the local y-z plane, boresight along +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
}

impl UpaGeometry {
    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Element position (y, z) in wavelengths; element `n` is row `n / cols`,
    /// column `n % cols`, centred on the origin.
    pub fn element_position(&self, n: usize) -> (f64, f64) {
        let r = (n / self.cols) as f64;
        let c = (n % self.cols) as f64;
        let y = (c - (self.cols as f64 - 1.0) / 2.0) * self.spacing_wavelengths;
        let z = (r - (self.rows as f64 - 1.0) / 2.0) * self.spacing_wavelengths;
        (y, z)
    }

    /// Plane-wave phase factor of element `n` for a wave from (theta, phi).
    pub fn steering(&self, n: usize, theta: f64, phi: f64) -> Complex64 {
        let (y, z) = self.element_position(n);
        Complex64::cis(TAU * (y * theta.sin() * phi.sin() + z * theta.cos()))
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidInput("array needs at least one element".into()));
        }
        if !(self.spacing_wavelengths > 0.0) || !self.spacing_wavelengths.is_finite() {
            return Err(Error::InvalidInput("element spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Ideal uniform planar array: unit V response with geometric phases, H
/// identically zero.
pub fn synthesize_ideal_upa(
    rows: usize,
    cols: usize,
    spacing_wavelengths: f64,
    m_theta: usize,
    m_phi: usize,
) -> Result<PatternGrid> {
    synthesize_upa(
        UpaGeometry {
            rows,
            cols,
            spacing_wavelengths,
        },
        PolarizationLayout::AllVertical,
        m_theta,
        m_phi,
    )
}

pub fn synthesize_upa(
    geometry: UpaGeometry,
    layout: PolarizationLayout,
    m_theta: usize,
    m_phi: usize,
) -> Result<PatternGrid> {
    geometry.validate()?;
    PatternGrid::from_fn(geometry.element_count(), m_theta, m_phi, |n, p, t, f| {
        if co_polarization(layout, n) == p {
            geometry.steering(n, t, f)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn co_polarization(layout: PolarizationLayout, n: usize) -> Polarization {
    match layout {
        PolarizationLayout::AllVertical => Polarization::V,
        PolarizationLayout::Alternating if n % 2 == 0 => Polarization::V,
        PolarizationLayout::Alternating => Polarization::H,
    }
}

/// Ideal array with per-element complex gain errors and cross-polar leakage.
/// The same seed always yields the same array.
pub fn synthesize_perturbed_upa(
    geometry: UpaGeometry,
    layout: PolarizationLayout,
    m_theta: usize,
    m_phi: usize,
    perturbation: &Perturbation,
    seed: SeededStream,
) -> Result<PatternGrid> {
    geometry.validate()?;
    let mut rng = seed.rng();
    let gain_db = Normal::new(0.0, perturbation.gain_sigma_db.max(0.0))
        .map_err(|e| Error::InvalidInput(format!("gain sigma: {e}")))?;
    let spread = perturbation.phase_spread_deg.to_radians();
    let leak = 10f64.powf(perturbation.cross_polar_db / 20.0);
    let per_element: Vec<(Complex64, Complex64)> = (0..geometry.element_count())
        .map(|_| {
            let mag = 10f64.powf(gain_db.sample(&mut rng) / 20.0);
            let phase = (rng.random::<f64>() * 2.0 - 1.0) * spread;
            let cross = rng.random::<f64>() * TAU;
            (Complex64::from_polar(mag, phase), Complex64::from_polar(leak, cross))
        })
        .collect();
    PatternGrid::from_fn(geometry.element_count(), m_theta, m_phi, |n, p, t, f| {
        let (co, cross) = per_element[n];
        let s = geometry.steering(n, t, f);
        if co_polarization(layout, n) == p {
            co * s
        } else {
            cross * s
        }
    })
}

/// Broadside direction of the synthetic arrays: theta = pi/2, phi = 0.
pub const BORESIGHT: (f64, f64) = (PI / 2.0, 0.0);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_grid(n: usize, mt: usize, mp: usize, seed: u64) -> PatternGrid {
        let mut rng = SeededStream::new(seed, 0).rng();
        let samples = (0..n * 2 * mt * mp)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        PatternGrid::new(n, mt, mp, samples).unwrap()
    }

    /// Direct inverse DFT of the coefficients, written from the definition.
    fn naive_eval(model: &EadfModel, theta: f64, phi: f64, n: usize, p: Polarization) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, &ka) in model.theta_index().iter().enumerate() {
            for (b, &kb) in model.phi_index().iter().enumerate() {
                acc += model.coefficients()[(2 * n + p.index(), a * model.m_phi() + b)]
                    * Complex64::cis(ka as f64 * theta + kb as f64 * phi);
            }
        }
        acc * model.evaluation_scale()
    }

    #[test]
    fn constant_pattern_has_single_dc_coefficient() {
        let g = PatternGrid::from_fn(1, 8, 6, |_, p, _, _| {
            if p == Polarization::V { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        })
        .unwrap();
        let m = build_eadf(&g).unwrap();
        let dc = 4 * 6 + 3;
        assert!((m.coefficients()[(0, dc)] - Complex64::new(48.0, 0.0)).norm() < 1e-12);
        for c in 0..48 {
            if c != dc {
                assert!(m.coefficients()[(0, c)].norm() < 1e-12);
            }
        }
        let r = m.evaluate_response(0.37, 2.1, Polarization::V).unwrap();
        assert!((r[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let d = m
            .evaluate_response_derivative(0.37, 2.1, Polarization::V, AngleAxis::Theta)
            .unwrap();
        assert!(d[0].norm() < 1e-12);
    }

    #[test]
    fn single_theta_mode() {
        let g = PatternGrid::from_fn(1, 8, 8, |_, _, t, _| Complex64::cis(t)).unwrap();
        let m = build_eadf(&g).unwrap();
        let col = (1 + 4) * 8 + 4;
        for c in 0..64 {
            let v = m.coefficients()[(0, c)].norm();
            if c == col {
                assert!((v - 64.0).abs() < 1e-10);
            } else {
                assert!(v < 1e-10);
            }
        }
        let th = 0.81;
        let d = m
            .evaluate_response_derivative(th, 1.0, Polarization::V, AngleAxis::Theta)
            .unwrap();
        assert!((d[0] - Complex64::new(0.0, 1.0) * Complex64::cis(th)).norm() < 1e-12);
    }

    #[test]
    fn round_trip_on_grid() {
        let g = random_grid(2, 8, 8, 3);
        let m = build_eadf(&g).unwrap();
        let mut worst: f64 = 0.0;
        for n in 0..2 {
            for p in Polarization::BOTH {
                for it in 0..8 {
                    for ip in 0..8 {
                        let r = m.evaluate_response(g.theta_at(it), g.phi_at(ip), p).unwrap();
                        let want = g.get(n, p, it, ip);
                        worst = worst.max((r[n] - want).norm() / want.norm());
                    }
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn fused_response_matches_separate_calls() {
        let m = build_eadf(&random_grid(3, 6, 10, 4)).unwrap();
        let (t, f) = (1.1, -0.4);
        let all = m.response_with_derivatives(t, f);
        for p in Polarization::BOTH {
            let v = m.evaluate_response(t, f, p).unwrap();
            let dt = m.evaluate_response_derivative(t, f, p, AngleAxis::Theta).unwrap();
            let dp = m.evaluate_response_derivative(t, f, p, AngleAxis::Phi).unwrap();
            assert!((&all.value[p.index()] - v).norm() < 1e-12);
            assert!((&all.d_theta[p.index()] - dt).norm() < 1e-12);
            assert!((&all.d_phi[p.index()] - dp).norm() < 1e-12);
            for n in 0..3 {
                assert!((all.value[p.index()][n] - naive_eval(&m, t, f, n, p)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = build_eadf(&random_grid(2, 8, 8, 5)).unwrap();
        let mut rng = SeededStream::new(6, 0).rng();
        let h = 1e-6;
        for _ in 0..100 {
            let t = rng.random::<f64>() * TAU;
            let f = rng.random::<f64>() * TAU;
            for p in Polarization::BOTH {
                for wrt in [AngleAxis::Theta, AngleAxis::Phi] {
                    let (dt, df) = if wrt == AngleAxis::Theta { (h, 0.0) } else { (0.0, h) };
                    let fd = (m.evaluate_response(t + dt, f + df, p).unwrap()
                        - m.evaluate_response(t - dt, f - df, p).unwrap())
                        / Complex64::new(2.0 * h, 0.0);
                    let an = m.evaluate_response_derivative(t, f, p, wrt).unwrap();
                    let rel = (&fd - &an).norm() / an.norm();
                    assert!(rel < 1e-6, "rel {rel}");
                }
            }
        }
    }

    #[test]
    fn normalization() {
        let g = PatternGrid::from_fn(1, 4, 4, |_, _, _, _| Complex64::new(0.0, 0.0)).unwrap();
        let mut m = build_eadf(&g).unwrap();
        m.coefficients.iter_mut().for_each(|c| *c = Complex64::cis(0.3));
        let nm = normalize_eadf(&m, 1).unwrap();
        let want = 1.0 / (2.0f64 * 16.0).sqrt();
        assert!(nm.coefficients().iter().all(|c| (c.norm() - want).abs() < 1e-15));
        assert!((nm.element_energy(0) - 1.0).abs() < 1e-12);
        assert_eq!(normalize_eadf(&nm, 1).unwrap(), nm);

        let mut two = build_eadf(&random_grid(2, 4, 4, 8)).unwrap();
        let e0 = two.element_energy(0);
        let e1 = two.element_energy(1);
        for r in 0..2 {
            two.coefficients.row_mut(r).iter_mut().for_each(|c| *c *= (4.0 / e0).sqrt());
        }
        for r in 2..4 {
            two.coefficients.row_mut(r).iter_mut().for_each(|c| *c *= (1.0 / e1).sqrt());
        }
        let before = two.coefficients().clone();
        let nt = normalize_eadf(&two, 1).unwrap();
        for c in 0..16 {
            assert!((nt.coefficients()[(0, c)] - before[(0, c)] * 0.5).norm() < 1e-12);
            assert!((nt.coefficients()[(2, c)] - before[(2, c)]).norm() < 1e-12);
        }
        let nf = normalize_eadf(&two, 8).unwrap();
        assert!((8.0 * nf.element_energy(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_element_named() {
        let g = PatternGrid::from_fn(3, 4, 4, |n, _, _, _| {
            Complex64::new(if n == 1 { 0.0 } else { 1.0 }, 0.0)
        })
        .unwrap();
        match normalize_eadf(&build_eadf(&g).unwrap(), 1) {
            Err(Error::ZeroEnergyElement { element: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            PatternGrid::from_fn(1, 5, 4, |_, _, _, _| Complex64::new(1.0, 0.0)),
            Err(Error::OddGrid { .. })
        ));
        let mut s = vec![Complex64::new(1.0, 0.0); 2 * 16];
        s[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(PatternGrid::new(1, 4, 4, s), Err(Error::NonFinite(_))));
        assert!(synthesize_ideal_upa(2, 2, 0.0, 8, 8).is_err());
    }

    #[test]
    fn ideal_upa_patterns() {
        let single = synthesize_ideal_upa(1, 1, 0.5, 6, 6).unwrap();
        for it in 0..6 {
            for ip in 0..6 {
                assert_eq!(single.get(0, Polarization::V, it, ip), Complex64::new(1.0, 0.0));
                assert_eq!(single.get(0, Polarization::H, it, ip), Complex64::new(0.0, 0.0));
            }
        }
        let pair = build_eadf(&synthesize_ideal_upa(1, 2, 0.5, 12, 12).unwrap()).unwrap();
        let r = pair.evaluate_response(BORESIGHT.0, BORESIGHT.1, Polarization::V).unwrap();
        assert!((r[0] - r[1]).norm() < 1e-10);

        // 60 and 30 degrees lie on a 12-point grid.
        let g = synthesize_ideal_upa(2, 4, 0.5, 12, 12).unwrap();
        let (th, ph) = (60f64.to_radians(), 30f64.to_radians());
        for r in 0..2 {
            for c in 0..4 {
                let y = (c as f64 - 1.5) * 0.5;
                let z = (r as f64 - 0.5) * 0.5;
                let phase = TAU * (y * th.sin() * ph.sin() + z * th.cos());
                let got = g.get(r * 4 + c, Polarization::V, 2, 1);
                assert!((got - Complex64::cis(phase)).norm() < 1e-12);
            }
        }
        let m = build_eadf(&g).unwrap();
        let b = m.evaluate_response(BORESIGHT.0, BORESIGHT.1, Polarization::V).unwrap();
        for n in 0..8 {
            assert!((b[n] - b[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn perturbed_upa_is_seed_stable() {
        let geo = UpaGeometry { rows: 2, cols: 2, spacing_wavelengths: 0.5 };
        let p = Perturbation::default();
        let a = synthesize_perturbed_upa(geo, PolarizationLayout::AllVertical, 8, 8, &p, SeededStream::new(1, 0)).unwrap();
        let b = synthesize_perturbed_upa(geo, PolarizationLayout::AllVertical, 8, 8, &p, SeededStream::new(1, 0)).unwrap();
        let c = synthesize_perturbed_upa(geo, PolarizationLayout::AllVertical, 8, 8, &p, SeededStream::new(2, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let ratio = a.get(0, Polarization::H, 1, 1).norm() / a.get(0, Polarization::V, 1, 1).norm();
        assert!(ratio > 0.05 && ratio < 0.2);
    }

    #[test]
    fn upper_hemisphere_extension() {
        let (mt, mp) = (8, 6);
        let full = PatternGrid::from_fn(1, mt, mp, |_, _, t, f| {
            // a smooth function invariant under (theta, phi) -> (2pi - theta, phi + pi)
            Complex64::new(t.cos(), t.sin() * f.sin())
        })
        .unwrap();
        let half_rows = mt / 2 + 1;
        let mut upper = Vec::new();
        for p in 0..2 {
            for it in 0..half_rows {
                for ip in 0..mp {
                    upper.push(full.samples()[(p * mt + it) * mp + ip]);
                }
            }
        }
        let ext = PatternGrid::from_upper_hemisphere(1, mt, mp, &upper, false).unwrap();
        for (a, b) in ext.samples().iter().zip(full.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        let g = random_grid(2, 4, 6, 9);
        let back = PatternGrid::from_text(&g.to_text()).unwrap();
        assert_eq!(g, back);
        assert!(PatternGrid::from_text("eadf-pattern v2 1 2 2\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_random_sizes(n in 1usize..=4, ht in 1usize..=8, hp in 1usize..=8, seed in 0u64..1000) {
            let g = random_grid(n, 2 * ht, 2 * hp, seed);
            let m = build_eadf(&g).unwrap();
            for it in 0..g.m_theta() {
                for ip in 0..g.m_phi() {
                    for p in Polarization::BOTH {
                        let r = m.evaluate_response(g.theta_at(it), g.phi_at(ip), p).unwrap();
                        for e in 0..n {
                            let want = g.get(e, p, it, ip);
                            prop_assert!((r[e] - want).norm() <= 1e-10 * want.norm().max(1e-3));
                        }
                    }
                }
            }
        }

        #[test]
        fn periodic_in_both_angles(t in 0.0f64..TAU, f in 0.0f64..TAU, seed in 0u64..100) {
            let m = build_eadf(&random_grid(2, 6, 8, seed)).unwrap();
            for p in Polarization::BOTH {
                let a = m.evaluate_response(t, f, p).unwrap();
                let b = m.evaluate_response(t + TAU, f, p).unwrap();
                let c = m.evaluate_response(t, f + TAU, p).unwrap();
                prop_assert!((&a - b).norm() <= 1e-12 * a.norm().max(1.0));
                prop_assert!((&a - c).norm() <= 1e-12 * a.norm().max(1.0));
            }
        }
    }
}
