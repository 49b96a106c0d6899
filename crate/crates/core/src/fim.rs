//! Fisher information and position error bounds.
//!
//! Parameter order of the per-AP FIM is
//! `(θ, φ, τ, Re α_VV, Im α_VV, Re α_HH, Im α_HH)`. The first three form ξ,
//! the channel geometry; the gains are nuisance parameters removed through a
//! Schur complement.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix, Vector2, Vector3};
use num_complex::Complex64;

use crate::eadf::EadfModel;
use crate::error::{Error, Result};
use crate::mathcore::{bessel_i_ratio, psd_inverse, psd_inverse_fixed, tol};
use crate::signal::{tilt_rotate, LosParams, SignalSpec, UeAntenna};
use crate::SPEED_OF_LIGHT;

pub type Matrix7 = SMatrix<f64, 7, 7>;

/// FIM of the seven channel parameters of one AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimTheta {
    pub matrix: Matrix7,
}

/// Diagonal entries of a [`FimTheta`] used by the decomposed position FIM.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApDiagonals {
    pub theta_theta: f64,
    pub phi_phi: f64,
    pub tau_tau: f64,
}

impl FimTheta {
    pub fn diagonals(&self) -> ApDiagonals {
        ApDiagonals {
            theta_theta: self.matrix[(0, 0)],
            phi_phi: self.matrix[(1, 1)],
            tau_tau: self.matrix[(2, 2)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionFim {
    pub matrix: Matrix3<f64>,
    pub frame: Frame,
}

/// Position of an AP and the rotation of its local x-axis about global z
/// (counter-clockwise, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApGeometry {
    pub position: Vector3<f64>,
    pub omega: f64,
}

impl ApGeometry {
    pub fn new(position: Vector3<f64>, omega: f64) -> Self {
        Self { position, omega }
    }

    /// Local-to-global rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        rz(self.omega)
    }

    /// (θ, φ, τ) of a UE at `ue_pos` seen in the AP's local frame.
    pub fn local_angles(&self, ue_pos: &Vector3<f64>) -> Result<(f64, f64, f64)> {
        let v = self.rotation().transpose() * (ue_pos - self.position);
        let r = v.norm();
        if !(r > 0.0) {
            return Err(Error::InvalidInput("UE coincides with AP".into()));
        }
        let theta = (v.z / r).clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x);
        Ok((theta, phi, r / SPEED_OF_LIGHT))
    }

    /// LoS parameters toward `ue_pos` with the given gains.
    pub fn los_params(&self, ue_pos: &Vector3<f64>, alpha_vv: Complex64, alpha_hh: Complex64) -> Result<LosParams> {
        let (theta, phi, tau) = self.local_angles(ue_pos)?;
        Ok(LosParams {
            theta,
            phi,
            tau,
            alpha_vv,
            alpha_hh,
        })
    }
}

/// Von Mises prior of the UE tilt angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltPrior {
    pub mu: f64,
    pub kappa: f64,
}

impl TiltPrior {
    /// ρ = I2(κ)/I0(κ) cos 2μ, so that E[cos² β] = (1 + ρ)/2.
    pub fn rho(&self) -> f64 {
        bessel_i_ratio(self.kappa) * (2.0 * self.mu).cos()
    }
}

/// Rotation about the z-axis by `omega` (counter-clockwise).
pub fn rz(omega: f64) -> Matrix3<f64> {
    let (s, c) = omega.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Unit vector of the direction (θ, φ).
pub fn direction(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Ranging direction matrix: outer product of the unit direction (θ, φ).
pub fn rdm(theta: f64, phi: f64) -> Matrix3<f64> {
    let u = direction(theta, phi);
    u * u.transpose()
}

/// Noise-free observation D = B(Θ)γ and its derivatives with respect to the
/// seven channel parameters.
pub fn observation_derivatives(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
) -> Result<(DVector<Complex64>, [DVector<Complex64>; 7])> {
    params.validate()?;
    spec.validate()?;
    let (ctv, cth) = tilt_rotate(ue);
    let resp = model.response_with_derivatives(params.theta, params.phi);
    let b = spec.delay_vector(params.tau);
    let db = spec.delay_vector_derivative(params.tau);
    let nf = b.len();
    let n = model.element_count();
    let gv = params.alpha_vv * ctv;
    let gh = params.alpha_hh * cth;
    let kron = |a: &DVector<Complex64>, c: &DVector<Complex64>| {
        DVector::from_fn(n * nf, |i, _| a[i / nf] * c[i % nf])
    };
    let (cv, ch) = (&resp.value[0], &resp.value[1]);
    let cv_b = kron(cv, &b);
    let ch_b = kron(ch, &b);
    let j = Complex64::new(0.0, 1.0);
    let d = &cv_b * gv + &ch_b * gh;
    let d_theta = kron(&resp.d_theta[0], &b) * gv + kron(&resp.d_theta[1], &b) * gh;
    let d_phi = kron(&resp.d_phi[0], &b) * gv + kron(&resp.d_phi[1], &b) * gh;
    let d_tau = kron(cv, &db) * gv + kron(ch, &db) * gh;
    let d_re_vv = &cv_b * ctv;
    let d_im_vv = &cv_b * (ctv * j);
    let d_re_hh = &ch_b * cth;
    let d_im_hh = &ch_b * (cth * j);
    Ok((d, [d_theta, d_phi, d_tau, d_re_vv, d_im_vv, d_re_hh, d_im_hh]))
}

/// F = (2/σ²) Re{Gᴴ G} with G the analytic Jacobian of the observation.
pub fn fim_theta(model: &EadfModel, params: &LosParams, ue: &UeAntenna, spec: &SignalSpec) -> Result<FimTheta> {
    let (_, cols) = observation_derivatives(model, params, ue, spec)?;
    Ok(fim_from_columns(&cols, spec.noise_variance))
}

fn fim_from_columns(cols: &[DVector<Complex64>; 7], noise_variance: f64) -> FimTheta {
    let mut m = Matrix7::zeros();
    for i in 0..7 {
        for k in i..7 {
            let v = 2.0 / noise_variance * cols[i].dotc(&cols[k]).re;
            m[(i, k)] = v;
            m[(k, i)] = v;
        }
    }
    FimTheta { matrix: m }
}

/// [F]_θθ summed element by element:
/// (2E_s/σ²) Re Σ_n Σ_p Σ_p' conj(g_p ∂c_{p,n}) g_p' ∂c_{p',n}.
pub fn fim_theta_theta_elementwise(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
) -> Result<f64> {
    params.validate()?;
    let (ctv, cth) = tilt_rotate(ue);
    let g = [params.alpha_vv * ctv, params.alpha_hh * cth];
    let resp = model.response_with_derivatives(params.theta, params.phi);
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..model.element_count() {
        for p in 0..2 {
            for q in 0..2 {
                acc += (g[p] * resp.d_theta[p][n]).conj() * (g[q] * resp.d_theta[q][n]);
            }
        }
    }
    Ok(2.0 * spec.energy() / spec.noise_variance * acc.re)
}

/// Expected FIM over a Von Mises tilt for a single vertically polarized UE
/// antenna: (1+ρ)/2 of the V-only FIM plus (1−ρ)/2 of the H-only FIM.
/// Cross-polar terms are neglected; see [`cross_polar_ratio`].
pub fn averaged_fim_theta(
    model: &EadfModel,
    params: &LosParams,
    spec: &SignalSpec,
    tilt: &TiltPrior,
) -> Result<FimTheta> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let fv = fim_theta(model, params, &UeAntenna::fixed(one, zero), spec)?;
    let fh = fim_theta(model, params, &UeAntenna::fixed(zero, one), spec)?;
    let rho = tilt.rho();
    Ok(FimTheta {
        matrix: fv.matrix * (0.5 * (1.0 + rho)) + fh.matrix * (0.5 * (1.0 - rho)),
    })
}

/// |c_Vᴴc_H + c_Hᴴc_V| / (c_Vᴴc_V + c_Hᴴc_H) at one direction. Small values
/// mean the cross-polar terms neglected by [`averaged_fim_theta`] are small.
pub fn cross_polar_ratio(model: &EadfModel, theta: f64, phi: f64) -> f64 {
    let r = model.response_with_derivatives(theta, phi);
    let (cv, ch) = (&r.value[0], &r.value[1]);
    let cross = cv.dotc(ch) + ch.dotc(cv);
    let co = cv.norm_squared() + ch.norm_squared();
    if co > 0.0 {
        cross.norm() / co
    } else {
        0.0
    }
}

/// Equivalent FIM of ξ = (θ, φ, τ): F_ξξ − F_ξα F_αα⁻¹ F_ξαᵀ.
///
/// Gain components whose diagonal entry is negligible relative to the
/// largest gain entry carry no information (e.g. H gains seen by a V-only
/// array) and are left out of the nuisance block.
pub fn efim_xi(fim: &FimTheta) -> Result<Matrix3<f64>> {
    let m = &fim.matrix;
    let f_xx: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let max_diag = (3..7).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let keep: Vec<usize> = (3..7)
        .filter(|&i| max_diag > 0.0 && m[(i, i)] > tol::NUISANCE_RELATIVE_FLOOR * max_diag)
        .collect();
    if keep.is_empty() {
        return Ok(f_xx);
    }
    let k = keep.len();
    let f_aa = DMatrix::from_fn(k, k, |r, c| m[(keep[r], keep[c])]);
    let f_xa = DMatrix::from_fn(3, k, |r, c| m[(r, keep[c])]);
    let inv = psd_inverse(&f_aa, tol::CONDITION_LIMIT)?;
    let corr = &f_xa * inv * f_xa.transpose();
    Ok(f_xx - Matrix3::from_fn(|r, c| corr[(r, c)]))
}

fn check_pole(theta: f64) -> Result<()> {
    if theta.sin().abs() < tol::POLE_GUARD {
        Err(Error::SingularAzimuth { theta })
    } else {
        Ok(())
    }
}

/// J with J[i][j] = ∂ξ_j/∂p_i, rows x, y, z and columns θ, φ, τ.
pub fn jacobian_xi_to_p(params: &LosParams) -> Result<Matrix3<f64>> {
    check_pole(params.theta)?;
    if !(params.tau > 0.0) {
        return Err(Error::InvalidInput("delay must be positive".into()));
    }
    let r = SPEED_OF_LIGHT * params.tau;
    let (st, ct) = params.theta.sin_cos();
    let (sp, cp) = params.phi.sin_cos();
    let u_theta = Vector3::new(ct * cp, ct * sp, -st) / r;
    let u_phi = Vector3::new(-sp, cp, 0.0) / (r * st);
    let u_r = Vector3::new(st * cp, st * sp, ct) / SPEED_OF_LIGHT;
    Ok(Matrix3::from_columns(&[u_theta, u_phi, u_r]))
}

/// Analytic inverse of [`jacobian_xi_to_p`]: row j is ∂p/∂ξ_j.
pub fn jacobian_inverse(params: &LosParams) -> Result<Matrix3<f64>> {
    check_pole(params.theta)?;
    let r = SPEED_OF_LIGHT * params.tau;
    let (st, ct) = params.theta.sin_cos();
    let (sp, cp) = params.phi.sin_cos();
    Ok(Matrix3::new(
        r * ct * cp,
        r * ct * sp,
        -r * st,
        -r * st * sp,
        r * st * cp,
        0.0,
        SPEED_OF_LIGHT * st * cp,
        SPEED_OF_LIGHT * st * sp,
        SPEED_OF_LIGHT * ct,
    ))
}

/// Local position FIM J F_ξ Jᵀ.
pub fn local_fim_exact(fim: &FimTheta, params: &LosParams) -> Result<PositionFim> {
    let efim = efim_xi(fim)?;
    let j = jacobian_xi_to_p(params)?;
    Ok(PositionFim {
        matrix: j * efim * j.transpose(),
        frame: Frame::Local,
    })
}

/// Local position FIM from the three diagonal entries only, as a weighted sum
/// of ranging direction matrices along the elevation, azimuth and radial unit
/// vectors.
pub fn local_fim_decomposed(f_tt: f64, f_pp: f64, f_tautau: f64, params: &LosParams) -> Result<PositionFim> {
    if f_tt < 0.0 || f_pp < 0.0 || f_tautau < 0.0 {
        return Err(Error::InvalidInput("FIM diagonal entries must be non-negative".into()));
    }
    check_pole(params.theta)?;
    let (theta, phi, tau) = (params.theta, params.phi, params.tau);
    Ok(PositionFim {
        matrix: decomposed(f_tt, f_pp, f_tautau, theta, phi, tau),
        frame: Frame::Local,
    })
}

fn decomposed(f_tt: f64, f_pp: f64, f_tautau: f64, theta: f64, phi: f64, tau: f64) -> Matrix3<f64> {
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let st = theta.sin();
    rdm(theta + FRAC_PI_2, phi) * (f_tt / (c2 * tau * tau))
        + rdm(FRAC_PI_2, phi + FRAC_PI_2) * (f_pp / (c2 * tau * tau * st * st))
        + rdm(theta, phi) * (f_tautau / c2)
}

/// Sum of local position FIMs rotated into the global frame.
pub fn global_fim(per_ap: &[(PositionFim, ApGeometry)]) -> Result<PositionFim> {
    if per_ap.is_empty() {
        return Err(Error::EmptyApSet);
    }
    let mut m = Matrix3::zeros();
    for (f, g) in per_ap {
        let r = g.rotation();
        m += match f.frame {
            Frame::Local => r * f.matrix * r.transpose(),
            Frame::Global => f.matrix,
        };
    }
    Ok(PositionFim {
        matrix: m,
        frame: Frame::Global,
    })
}

/// Global position FIM evaluated directly from per-AP FIM diagonals, with
/// each AP's azimuth shifted by its orientation.
pub fn global_fim_from_diagonals(per_ap: &[(ApDiagonals, ApGeometry)], ue_pos: &Vector3<f64>) -> Result<PositionFim> {
    if per_ap.is_empty() {
        return Err(Error::EmptyApSet);
    }
    let mut m = Matrix3::zeros();
    for (d, g) in per_ap {
        let (theta, phi, tau) = g.local_angles(ue_pos)?;
        check_pole(theta)?;
        m += decomposed(d.theta_theta, d.phi_phi, d.tau_tau, theta, phi + g.omega, tau);
    }
    Ok(PositionFim {
        matrix: m,
        frame: Frame::Global,
    })
}

/// Global position FIM from full per-AP channel FIMs: Σ R J F_ξ Jᵀ Rᵀ.
pub fn global_fim_exact(per_ap: &[(FimTheta, LosParams, ApGeometry)]) -> Result<PositionFim> {
    let locals = per_ap
        .iter()
        .map(|(f, p, g)| Ok((local_fim_exact(f, p)?, *g)))
        .collect::<Result<Vec<_>>>()?;
    global_fim(&locals)
}

/// √tr(F⁻¹).
pub fn peb(fim: &PositionFim) -> Result<f64> {
    peb_matrix(&fim.matrix)
}

pub fn peb_matrix(matrix: &Matrix3<f64>) -> Result<f64> {
    match psd_inverse_fixed(matrix, tol::CONDITION_LIMIT) {
        Ok(inv) => Ok(inv.trace().sqrt()),
        Err(Error::Conditioning { null_direction, .. }) => Err(Error::Unlocalizable { null_direction }),
        Err(e) => Err(e),
    }
}

/// PEB of a 2×2 FIM.
pub fn peb_2d(matrix: &Matrix2<f64>) -> Result<f64> {
    match psd_inverse_fixed(matrix, tol::CONDITION_LIMIT) {
        Ok(inv) => Ok(inv.trace().sqrt()),
        Err(Error::Conditioning { null_direction, .. }) => Err(Error::Unlocalizable { null_direction }),
        Err(e) => Err(e),
    }
}

/// Planar ranging direction matrix.
pub fn rdm_2d(phi: f64) -> Matrix2<f64> {
    let u = Vector2::new(phi.cos(), phi.sin());
    u * u.transpose()
}

fn planar_geometry(g: &ApGeometry, ue_xy: &Vector2<f64>) -> Result<(f64, f64)> {
    let v = ue_xy - g.position.xy();
    let d = v.norm();
    if !(d > 0.0) {
        return Err(Error::InvalidInput("UE coincides with AP in the plane".into()));
    }
    Ok((v.y.atan2(v.x), d / SPEED_OF_LIGHT))
}

/// Planar position FIM: elevation information dropped, every AP in the UE's
/// horizontal plane.
pub fn fim_2d(per_ap: &[(ApDiagonals, ApGeometry)], ue_xy: &Vector2<f64>) -> Result<Matrix2<f64>> {
    if per_ap.is_empty() {
        return Err(Error::EmptyApSet);
    }
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let mut m = Matrix2::zeros();
    for (d, g) in per_ap {
        let (phi, tau) = planar_geometry(g, ue_xy)?;
        m += rdm_2d(phi + FRAC_PI_2) * (d.phi_phi / (c2 * tau * tau)) + rdm_2d(phi) * (d.tau_tau / c2);
    }
    Ok(m)
}

/// AP geometry factor Σ (F_φφ/(τ²c²) − F_ττ/c²) e^{j2φ'} with φ' the global
/// azimuth from AP to UE.
pub fn geometry_factor(per_ap: &[(ApDiagonals, ApGeometry)], ue_xy: &Vector2<f64>) -> Result<Complex64> {
    if per_ap.is_empty() {
        return Err(Error::EmptyApSet);
    }
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let mut acc = Complex64::new(0.0, 0.0);
    for (d, g) in per_ap {
        let (phi, tau) = planar_geometry(g, ue_xy)?;
        let w = d.phi_phi / (tau * tau * c2) - d.tau_tau / c2;
        acc += Complex64::cis(2.0 * phi) * w;
    }
    Ok(acc)
}

/// Smallest planar PEB attainable by rotating the APs around the UE at fixed
/// distances. Each entry is (FIM diagonals, delay τ).
pub fn optimal_peb_closed_form(per_ap: &[(ApDiagonals, f64)]) -> Result<f64> {
    if per_ap.is_empty() {
        return Err(Error::EmptyApSet);
    }
    let a: Vec<f64> = per_ap.iter().map(|(d, tau)| d.phi_phi / (tau * tau)).collect();
    let b: Vec<f64> = per_ap.iter().map(|(d, _)| d.tau_tau).collect();
    let sum_plus: f64 = a.iter().zip(&b).map(|(x, y)| x + y).sum();
    let sum_minus: f64 = a.iter().zip(&b).map(|(x, y)| x - y).sum();
    let mut cross = 0.0;
    for k in 0..a.len() {
        for l in 0..a.len() {
            cross += a[k] * b[l] + a[l] * b[k];
        }
    }
    let denom = sum_minus * sum_minus + 2.0 * cross;
    if !(sum_plus > 0.0) || !(denom > 0.0) {
        return Err(Error::InvalidInput("APs carry no positioning information".into()));
    }
    Ok((4.0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT * sum_plus / denom).sqrt())
}

/// PEB from tilt-averaged channel FIMs.
pub fn averaged_peb(per_ap: &[(FimTheta, LosParams, ApGeometry)]) -> Result<f64> {
    peb(&global_fim_exact(per_ap)?)
}

/// Every quantity on the path from channel parameters to PEB for one AP.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBundle {
    pub theta: FimTheta,
    pub efim: Matrix3<f64>,
    pub jacobian: Matrix3<f64>,
    pub local: PositionFim,
    pub global: PositionFim,
    /// PEB from this AP alone; infinite when it cannot localize by itself.
    pub peb: f64,
}

pub fn fim_bundle(
    model: &EadfModel,
    params: &LosParams,
    ue: &UeAntenna,
    spec: &SignalSpec,
    geometry: &ApGeometry,
) -> Result<FimBundle> {
    let theta = fim_theta(model, params, ue, spec)?;
    let efim = efim_xi(&theta)?;
    let jacobian = jacobian_xi_to_p(params)?;
    let local = PositionFim {
        matrix: jacobian * efim * jacobian.transpose(),
        frame: Frame::Local,
    };
    let global = global_fim(&[(local, *geometry)])?;
    let peb = peb(&global).unwrap_or(f64::INFINITY);
    Ok(FimBundle {
        theta,
        efim,
        jacobian,
        local,
        global,
        peb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eadf::{build_eadf, synthesize_upa, PatternGrid, PolarizationLayout, UpaGeometry};
    use crate::mathcore::SeededStream;
    use crate::signal::noiseless_observation;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn random_model(seed: u64, n: usize) -> EadfModel {
        let mut rng = SeededStream::new(seed, 0).rng();
        let g = PatternGrid::from_fn(n, 8, 8, |_, _, _, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
        .unwrap();
        build_eadf(&g).unwrap()
    }

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn spec() -> SignalSpec {
        SignalSpec::flat(100e6, 4, 1.0, 0.01).unwrap()
    }

    fn params() -> LosParams {
        LosParams {
            theta: 1.1,
            phi: 0.4,
            tau: 2e-8,
            alpha_vv: Complex64::new(0.8, 0.3),
            alpha_hh: Complex64::new(-0.2, 0.5),
        }
    }

    #[test]
    fn zero_gains_give_no_geometric_information() {
        let m = random_model(1, 3);
        let p = LosParams { alpha_vv: Complex64::new(0.0, 0.0), alpha_hh: Complex64::new(0.0, 0.0), ..params() };
        let f = fim_theta(&m, &p, &UeAntenna::fixed(Complex64::new(0.7, 0.0), Complex64::new(0.7, 0.0)), &spec()).unwrap();
        for i in 0..3 {
            for k in 0..7 {
                assert_eq!(f.matrix[(i, k)], 0.0);
            }
        }
    }

    #[test]
    fn fim_scales_with_noise() {
        let m = random_model(2, 3);
        let ue = UeAntenna::fixed(Complex64::new(0.9, 0.1), Complex64::new(0.2, 0.0));
        let f1 = fim_theta(&m, &params(), &ue, &spec()).unwrap();
        let f4 = fim_theta(&m, &params(), &ue, &spec().with_noise_variance(0.04)).unwrap();
        assert!((f1.matrix * 0.25 - f4.matrix).norm() <= 1e-12 * f1.matrix.norm());
    }

    #[test]
    fn elementwise_theta_entry_matches_matrix_form() {
        let m = random_model(3, 4);
        let ue = UeAntenna { c_tv: Complex64::new(0.9, 0.1), c_th: Complex64::new(0.3, -0.2), beta: 0.3 };
        let s = spec();
        let f = fim_theta(&m, &params(), &ue, &s).unwrap();
        let e = fim_theta_theta_elementwise(&m, &params(), &ue, &s).unwrap();
        assert!((f.matrix[(0, 0)] - e).abs() <= 1e-10 * e.abs());
    }

    #[test]
    fn efim_examples() {
        let id = FimTheta { matrix: Matrix7::identity() };
        assert!((efim_xi(&id).unwrap() - Matrix3::identity()).norm() < 1e-15);
        let mut rng = SeededStream::new(4, 0).rng();
        for _ in 0..20 {
            let a = random_spd(&mut rng, 7);
            let mut m = Matrix7::from_fn(|r, c| a[(r, c)]);
            for r in 0..3 {
                for c in 3..7 {
                    m[(r, c)] = 0.0;
                    m[(c, r)] = 0.0;
                }
            }
            let f = FimTheta { matrix: m };
            let want: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
            assert!((efim_xi(&f).unwrap() - want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn singular_nuisance_block_reports_condition() {
        let mut m = Matrix7::identity();
        m[(3, 3)] = 1.0;
        m[(4, 4)] = 1.0;
        m[(3, 4)] = 1.0 - 1e-14;
        m[(4, 3)] = 1.0 - 1e-14;
        assert!(matches!(efim_xi(&FimTheta { matrix: m }), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn jacobian_examples() {
        let p = LosParams { theta: FRAC_PI_2, phi: 0.0, tau: 1e-8, ..params() };
        let j = jacobian_xi_to_p(&p).unwrap();
        let tau_col = j.column(2);
        assert!((tau_col - Vector3::new(1.0, 0.0, 0.0) / SPEED_OF_LIGHT).norm() < 1e-20);
        assert!(matches!(
            jacobian_xi_to_p(&LosParams { theta: 0.0, ..p }),
            Err(Error::SingularAzimuth { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = SeededStream::new(5, 0).rng();
        let xi = |p: &Vector3<f64>| {
            let r = p.norm();
            Vector3::new((p.z / r).acos(), p.y.atan2(p.x), r / SPEED_OF_LIGHT)
        };
        for _ in 0..50 {
            let theta = 0.2 + rng.random::<f64>() * 2.7;
            let phi = -3.0 + rng.random::<f64>() * 6.0;
            let tau = (1.0 + rng.random::<f64>() * 20.0) / SPEED_OF_LIGHT;
            let p = LosParams { theta, phi, tau, ..params() };
            let pos = direction(theta, phi) * SPEED_OF_LIGHT * tau;
            let j = jacobian_xi_to_p(&p).unwrap();
            let h = 1e-6;
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = h;
                let d = (xi(&(pos + e)) - xi(&(pos - e))) / (2.0 * h);
                for k in 0..3 {
                    let scale = j.column(k).norm();
                    assert!((d[k] - j[(i, k)]).abs() < 1e-6 * scale);
                }
            }
            assert!((j * jacobian_inverse(&p).unwrap() - Matrix3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn rdm_properties() {
        assert!((rdm(0.0, 1.3) - Vector3::z() * Vector3::z().transpose()).norm() < 1e-15);
        assert!((rdm(FRAC_PI_2, 0.0) - Vector3::x() * Vector3::x().transpose()).norm() < 1e-15);
        let mut rng = SeededStream::new(6, 0).rng();
        for _ in 0..100 {
            let u = rdm(rng.random::<f64>() * 7.0, rng.random::<f64>() * 7.0);
            assert!((u.trace() - 1.0).abs() < 1e-12);
            assert!((u * u - u).norm() < 1e-12);
        }
    }

    #[test]
    fn decomposition_examples() {
        let p = LosParams { theta: 1.0, phi: 0.5, tau: 1e-8, ..params() };
        let f = local_fim_decomposed(0.0, 0.0, 3.0, &p).unwrap();
        let u = direction(1.0, 0.5);
        assert!((f.matrix - u * u.transpose() * (3.0 / SPEED_OF_LIGHT.powi(2))).norm() < 1e-30);

        let p = LosParams { theta: FRAC_PI_2, ..p };
        let c2 = SPEED_OF_LIGHT.powi(2);
        let t2 = p.tau * p.tau;
        let f = local_fim_decomposed(2.0 * c2 * t2, 5.0 * c2 * t2, 7.0 * c2, &p).unwrap();
        let mut got: Vec<f64> = f.matrix.symmetric_eigenvalues().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let want = [2.0, 5.0, 7.0];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * w);
        }
    }

    #[test]
    fn decomposition_matches_exact_path_on_diagonal_fim() {
        let mut rng = SeededStream::new(7, 0).rng();
        for _ in 0..50 {
            let p = LosParams {
                theta: 0.3 + rng.random::<f64>() * 2.5,
                phi: rng.random::<f64>() * 6.0,
                tau: (1.0 + rng.random::<f64>() * 10.0) / SPEED_OF_LIGHT,
                ..params()
            };
            let d: Vec<f64> = (0..7).map(|_| 0.1 + rng.random::<f64>()).collect();
            let f = FimTheta { matrix: Matrix7::from_diagonal(&SMatrix::<f64, 7, 1>::from_column_slice(&d)) };
            let exact = local_fim_exact(&f, &p).unwrap();
            let dec = local_fim_decomposed(d[0], d[1], d[2], &p).unwrap();
            assert!((exact.matrix - dec.matrix).norm() <= 1e-8 * exact.matrix.norm());
        }
    }

    #[test]
    fn global_fim_examples() {
        let local = PositionFim { matrix: Matrix3::new(3.0, 1.0, 0.5, 1.0, 2.0, 0.2, 0.5, 0.2, 1.0), frame: Frame::Local };
        let g0 = ApGeometry::new(Vector3::zeros(), 0.0);
        assert_eq!(global_fim(&[(local, g0)]).unwrap().matrix, local.matrix);
        let g1 = ApGeometry::new(Vector3::zeros(), 0.7);
        let one = global_fim(&[(local, g1)]).unwrap();
        let two = global_fim(&[(local, g1), (local, g1)]).unwrap();
        assert!((one.matrix * 2.0 - two.matrix).norm() < 1e-12);
        assert!(global_fim(&[]).is_err());
    }

    #[test]
    fn rotation_path_matches_azimuth_shift_path() {
        let mut rng = SeededStream::new(8, 0).rng();
        for _ in 0..100 {
            let ue = Vector3::new(rng.random::<f64>() * 10.0, rng.random::<f64>() * 7.0, 1.0);
            let aps: Vec<(ApDiagonals, ApGeometry)> = (0..2)
                .map(|_| {
                    (
                        ApDiagonals { theta_theta: rng.random::<f64>() * 1e3, phi_phi: rng.random::<f64>() * 1e3, tau_tau: rng.random::<f64>() * 1e18 },
                        ApGeometry::new(Vector3::new(rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() * 7.0 - 9.0, 2.5), rng.random::<f64>() * 6.0),
                    )
                })
                .collect();
            let direct = global_fim_from_diagonals(&aps, &ue).unwrap();
            let locals: Vec<(PositionFim, ApGeometry)> = aps
                .iter()
                .map(|(d, g)| {
                    let (t, p, tau) = g.local_angles(&ue).unwrap();
                    let lp = LosParams { theta: t, phi: p, tau, ..params() };
                    (local_fim_decomposed(d.theta_theta, d.phi_phi, d.tau_tau, &lp).unwrap(), *g)
                })
                .collect();
            let rotated = global_fim(&locals).unwrap();
            assert!((direct.matrix - rotated.matrix).norm() <= 1e-10 * direct.matrix.norm());
        }
    }

    #[test]
    fn peb_examples() {
        let f = PositionFim { matrix: Matrix3::identity() * 4.0, frame: Frame::Global };
        assert!((peb(&f).unwrap() - (3.0f64 / 4.0).sqrt()).abs() < 1e-15);
        let f = PositionFim { matrix: Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)), frame: Frame::Global };
        assert!((peb(&f).unwrap() - 7.0 / 6.0).abs() < 1e-15);
        let f = PositionFim { matrix: Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)), frame: Frame::Global };
        match peb(&f) {
            Err(Error::Unlocalizable { null_direction }) => assert!((null_direction[2].abs() - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn planar_examples() {
        let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
        let ue = Vector2::new(0.0, 0.0);
        let tau = 5.0 / SPEED_OF_LIGHT;
        let a = 2.0;
        let diag = ApDiagonals { theta_theta: 0.0, phi_phi: a * tau * tau, tau_tau: a };
        let g = ApGeometry::new(Vector3::new(5.0, 0.0, 0.0), 0.0);
        let f = fim_2d(&[(diag, g)], &ue).unwrap();
        assert!((f - Matrix2::identity() * (a / c2)).norm() < 1e-12 * a / c2);
        assert!(geometry_factor(&[(diag, g)], &ue).unwrap().norm() < 1e-12 * a / c2);

        let single = optimal_peb_closed_form(&[(diag, tau)]).unwrap();
        assert!((single - (2.0 * c2 / a).sqrt()).abs() < 1e-8 * single);
        assert!((single - peb_2d(&f).unwrap()).abs() < 1e-8 * single);
        let double = optimal_peb_closed_form(&[(diag, tau), (diag, tau)]).unwrap();
        assert!((double - single / 2f64.sqrt()).abs() < 1e-12 * single);

        for phi in [0.0, 0.3, 2.0] {
            assert!((rdm_2d(phi) + rdm_2d(phi + FRAC_PI_2) - Matrix2::identity()).norm() < 1e-15);
        }
    }

    #[test]
    fn antipodal_phasors_cancel() {
        let ue = Vector2::new(0.0, 0.0);
        let tau = 3.0 / SPEED_OF_LIGHT;
        let d = ApDiagonals { theta_theta: 0.0, phi_phi: 5.0 * tau * tau, tau_tau: 1.0 };
        let aps = [
            (d, ApGeometry::new(Vector3::new(-3.0, 0.0, 0.0), 0.0)),
            (d, ApGeometry::new(Vector3::new(0.0, -3.0, 0.0), 0.0)),
        ];
        assert!(geometry_factor(&aps, &ue).unwrap().norm() < 1e-12);
    }

    #[test]
    fn closed_form_matches_balanced_layout() {
        let ue = Vector2::new(1.0, 2.0);
        let dist = 4.0;
        let tau = dist / SPEED_OF_LIGHT;
        let d = ApDiagonals { theta_theta: 0.0, phi_phi: 9.0 * tau * tau, tau_tau: 2.0 };
        let aps: Vec<_> = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]
            .iter()
            .map(|&a| (d, ApGeometry::new(Vector3::new(ue.x - dist * f64::cos(a), ue.y - dist * f64::sin(a), 0.0), 0.0)))
            .collect();
        assert!(geometry_factor(&aps, &ue).unwrap().norm() < 1e-10 * 9.0 / SPEED_OF_LIGHT.powi(2));
        let closed = optimal_peb_closed_form(&aps.iter().map(|(d, _)| (*d, tau)).collect::<Vec<_>>()).unwrap();
        let direct = peb_2d(&fim_2d(&aps, &ue).unwrap()).unwrap();
        assert!((closed - direct).abs() < 1e-8 * direct);
    }

    #[test]
    fn planar_matches_restricted_3d() {
        let mut rng = SeededStream::new(9, 0).rng();
        for _ in 0..20 {
            let ue = Vector3::new(rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0, 1.0);
            let aps: Vec<(ApDiagonals, ApGeometry)> = (0..3)
                .map(|_| {
                    (
                        ApDiagonals { theta_theta: 0.0, phi_phi: rng.random::<f64>(), tau_tau: rng.random::<f64>() * 1e17 },
                        ApGeometry::new(Vector3::new(rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() * 10.0 - 5.0, 1.0), rng.random::<f64>()),
                    )
                })
                .collect();
            let f3 = global_fim_from_diagonals(&aps, &ue).unwrap();
            let f2 = fim_2d(&aps, &ue.xy()).unwrap();
            let block: Matrix2<f64> = f3.matrix.fixed_view::<2, 2>(0, 0).into_owned();
            assert!((block - f2).norm() <= 1e-10 * f2.norm());
        }
    }

    #[test]
    fn averaged_fim_weights() {
        let geo = UpaGeometry { rows: 1, cols: 2, spacing_wavelengths: 0.5 };
        let m = build_eadf(&synthesize_upa(geo, PolarizationLayout::Alternating, 8, 8).unwrap()).unwrap();
        let s = spec();
        let p = params();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let fv = fim_theta(&m, &p, &UeAntenna::fixed(one, zero), &s).unwrap();
        let fh = fim_theta(&m, &p, &UeAntenna::fixed(zero, one), &s).unwrap();
        let uniform = averaged_fim_theta(&m, &p, &s, &TiltPrior { mu: 0.3, kappa: 0.0 }).unwrap();
        assert!((uniform.matrix - (fv.matrix + fh.matrix) * 0.5).norm() <= 1e-12 * fv.matrix.norm());
        let sharp = averaged_fim_theta(&m, &p, &s, &TiltPrior { mu: 0.0, kappa: 50.0 }).unwrap();
        let rho = bessel_i_ratio(50.0);
        assert!(rho > 0.95);
        assert!((sharp.matrix - (fv.matrix * (1.0 + rho) + fh.matrix * (1.0 - rho)) * 0.5).norm() <= 1e-12 * fv.matrix.norm());
        let inf = averaged_fim_theta(&m, &p, &s, &TiltPrior { mu: 0.0, kappa: f64::INFINITY }).unwrap();
        assert!((inf.matrix - fv.matrix).norm() <= 1e-12 * fv.matrix.norm());
        assert_eq!(cross_polar_ratio(&m, p.theta, p.phi), 0.0);
    }

    #[test]
    fn fim_matches_finite_difference_jacobian() {
        let m = random_model(10, 3);
        let s = spec();
        let ue = UeAntenna { c_tv: Complex64::new(0.8, 0.2), c_th: Complex64::new(0.3, 0.1), beta: 0.2 };
        let p = params();
        let f = fim_theta(&m, &p, &ue, &s).unwrap();
        let steps = [1e-6, 1e-6, 1e-14, 1e-6, 1e-6, 1e-6, 1e-6];
        let perturb = |k: usize, h: f64| {
            let mut q = p;
            match k {
                0 => q.theta += h,
                1 => q.phi += h,
                2 => q.tau += h,
                3 => q.alpha_vv.re += h,
                4 => q.alpha_vv.im += h,
                5 => q.alpha_hh.re += h,
                _ => q.alpha_hh.im += h,
            }
            noiseless_observation(&m, &q, &ue, &s).unwrap()
        };
        let cols: Vec<DVector<Complex64>> = (0..7)
            .map(|k| (perturb(k, steps[k]) - perturb(k, -steps[k])) / Complex64::new(2.0 * steps[k], 0.0))
            .collect();
        for i in 0..7 {
            for k in 0..7 {
                let fd = 2.0 / s.noise_variance * cols[i].dotc(&cols[k]).re;
                let scale = (f.matrix[(i, i)] * f.matrix[(k, k)]).sqrt();
                assert!((fd - f.matrix[(i, k)]).abs() < 1e-5 * scale, "({i},{k}) {fd} vs {}", f.matrix[(i, k)]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn adding_information_never_increases_peb(seed in 0u64..10_000) {
            let mut rng = SeededStream::new(seed, 1).rng();
            let a = random_spd(&mut rng, 3);
            let b = DMatrix::<f64>::from_fn(3, 2, |_, _| StandardNormal.sample(&mut rng));
            let inc = &b * b.transpose();
            let f = Matrix3::from_fn(|r, c| a[(r, c)]);
            let g = f + Matrix3::from_fn(|r, c| inc[(r, c)]);
            prop_assert!(peb_matrix(&g).unwrap() <= peb_matrix(&f).unwrap() * (1.0 + 1e-12));
        }

        #[test]
        fn schur_complement_matches_block_of_inverse(seed in 0u64..10_000) {
            let mut rng = SeededStream::new(seed, 2).rng();
            let a = random_spd(&mut rng, 7);
            let f = FimTheta { matrix: Matrix7::from_fn(|r, c| a[(r, c)]) };
            let e = efim_xi(&f).unwrap();
            let inv = psd_inverse(&a, 1e14).unwrap();
            let block = Matrix3::from_fn(|r, c| inv[(r, c)]);
            let want = psd_inverse_fixed(&block, 1e14).unwrap();
            prop_assert!((e - want).norm() <= 1e-8 * want.norm());
        }

        #[test]
        fn congruence_preserves_psd(seed in 0u64..10_000) {
            let mut rng = SeededStream::new(seed, 3).rng();
            let a = random_spd(&mut rng, 7);
            let f = FimTheta { matrix: Matrix7::from_fn(|r, c| a[(r, c)]) };
            let p = LosParams { theta: 0.2 + rng.random::<f64>() * 2.7, phi: rng.random::<f64>() * 6.0, tau: 1e-8, ..params() };
            let l = local_fim_exact(&f, &p).unwrap();
            let ev = l.matrix.symmetric_eigenvalues();
            prop_assert!(ev.min() >= -1e-8 * l.matrix.trace().abs());
        }
    }
}
