//! Shared numerical kernels: PSD inversion with a conditioning policy, the
//! modified Bessel ratio I2/I0, Von Mises sampling and seeded random streams.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default numerical tolerances. Tests may use tighter or looser values; the
/// library itself only reads these.
pub mod tol {
    /// Largest condition number accepted by [`super::psd_inverse`] by default.
    pub const CONDITION_LIMIT: f64 = 1e12;
    /// Relative threshold below which a gain in the nuisance block is treated
    /// as carrying no information.
    pub const NUISANCE_RELATIVE_FLOOR: f64 = 1e-14;
    /// Elevation distance from a pole below which azimuth is unobservable.
    pub const POLE_GUARD: f64 = 1e-6;
    /// Hessian condition number above which an ML optimum is called ambiguous.
    pub const AMBIGUITY_CONDITION: f64 = 1e12;
}

/// Deterministic, splittable random stream.
///
/// The generator is ChaCha8 keyed by `master_seed` with the 64-bit stream
/// selector set to `stream_id`, so each (seed, stream) pair is an independent
/// counter-mode sequence and the result never depends on thread scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Stream for a labelled sub-task, e.g. `[snr_index, trial, ap]`. The
    /// path is folded into the stream id with splitmix64, so the result only
    /// depends on the labels, never on evaluation order.
    pub fn derive(&self, path: &[u64]) -> Self {
        let mut id = splitmix64(self.stream_id);
        for &p in path {
            id = splitmix64(id ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d)));
        }
        Self::new(self.master_seed, id)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a standard complex normal CN(0, 1) sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    num_complex::Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ratio I2(kappa) / I0(kappa) of modified Bessel functions of the first kind.
///
/// Uses the power series up to kappa = 30 and the large-argument asymptotic
/// expansion (with the common exponential factor cancelled) above it.
pub fn bessel_i_ratio(kappa: f64) -> f64 {
    assert!(kappa >= 0.0, "kappa must be non-negative");
    if kappa == 0.0 {
        return 0.0;
    }
    if kappa.is_infinite() {
        return 1.0;
    }
    if kappa <= 30.0 {
        let q = 0.25 * kappa * kappa;
        // I0 = sum q^k/(k!)^2, I2 = q * sum q^k/(k!(k+2)!)
        let mut t0 = 1.0;
        let mut t2 = 0.5;
        let mut s0 = t0;
        let mut s2 = t2;
        for k in 1..500 {
            let kf = k as f64;
            t0 *= q / (kf * kf);
            t2 *= q / (kf * (kf + 2.0));
            s0 += t0;
            s2 += t2;
            if t0 < 1e-18 * s0 && t2 < 1e-18 * s2 {
                break;
            }
        }
        q * s2 / s0
    } else {
        scaled_bessel_asymptotic(2, kappa) / scaled_bessel_asymptotic(0, kappa)
    }
}

/// sqrt(2 pi x) e^{-x} I_nu(x) via the Hankel asymptotic series.
fn scaled_bessel_asymptotic(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu as f64) * (nu as f64);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * kf * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Wraps an angle to [0, 2 pi).
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Samples the Von Mises distribution with mean `mu` and concentration `kappa`
/// using the Best–Fisher rejection scheme. Returns an angle in [0, 2 pi).
pub fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    assert!(kappa >= 0.0, "kappa must be non-negative");
    if kappa < 1e-8 {
        return rng.random::<f64>() * TAU;
    }
    if kappa > 1e7 {
        let z: f64 = StandardNormal.sample(rng);
        return wrap_angle(mu + z / kappa.sqrt());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let dev = f.clamp(-1.0, 1.0).acos();
            let theta = if u3 > 0.5 { mu + dev } else { mu - dev };
            return wrap_angle(theta);
        }
    }
}

/// Inverse of a symmetric positive-definite matrix via its eigendecomposition.
///
/// The input is symmetrized first. Fails with [`Error::Conditioning`] when the
/// smallest eigenvalue is not above `lambda_max / condition_limit`; the error
/// carries the condition number and the eigenvector of the smallest eigenvalue.
pub fn psd_inverse(matrix: &DMatrix<f64>, condition_limit: f64) -> Result<DMatrix<f64>> {
    if !matrix.is_square() {
        return Err(Error::InvalidInput("psd_inverse needs a square matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to invert"));
    }
    let n = matrix.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 || lmin <= lmax / condition_limit {
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        return Err(Error::Conditioning {
            condition,
            null_direction: eig.eigenvectors.column(imin).iter().copied().collect(),
        });
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv_vals) * v.transpose())
}

/// Fixed-size convenience wrapper around [`psd_inverse`].
pub fn psd_inverse_fixed<const N: usize>(
    matrix: &SMatrix<f64, N, N>,
    condition_limit: f64,
) -> Result<SMatrix<f64, N, N>> {
    let d = DMatrix::from_column_slice(N, N, matrix.as_slice());
    let inv = psd_inverse(&d, condition_limit)?;
    Ok(SMatrix::<f64, N, N>::from_column_slice(inv.as_slice()))
}

/// Spearman rank correlation of two equally long samples (average ranks for
/// ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;

    fn bessel_quadrature(n: i32, kappa: f64) -> f64 {
        // (1/pi) int_0^pi e^{kappa cos t} cos(n t) dt, trapezoid on a periodic
        // integrand converges geometrically.
        let m = 4096;
        let h = PI / m as f64;
        let mut s = 0.0;
        for i in 0..=m {
            let t = i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            s += w * (kappa * t.cos()).exp() * (n as f64 * t).cos();
        }
        s * h / PI
    }

    #[test]
    fn bessel_ratio_limits() {
        assert_eq!(bessel_i_ratio(0.0), 0.0);
        assert!(bessel_i_ratio(200.0) > 0.99);
        assert_eq!(bessel_i_ratio(f64::INFINITY), 1.0);
    }

    #[test]
    fn bessel_ratio_matches_quadrature() {
        for &k in &[0.1, 0.5, 2.0, 8.0, 20.0, 29.9, 30.1, 45.0, 80.0] {
            let want = bessel_quadrature(2, k) / bessel_quadrature(0, k);
            let got = bessel_i_ratio(k);
            assert!((got - want).abs() < 1e-10, "kappa {k}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_ratio_monotone() {
        let mut prev = -1.0;
        for i in 0..1000 {
            let k = i as f64 * 0.25;
            let r = bessel_i_ratio(k);
            assert!(r > prev || (i == 0 && r == 0.0), "not increasing at {k}");
            assert!(r < 1.0);
            prev = r;
        }
    }

    #[test]
    fn von_mises_concentrated() {
        let mut rng = SeededStream::new(7, 1).rng();
        let xs: Vec<f64> = (0..20000)
            .map(|_| sample_von_mises(0.5, 1000.0, &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - 0.5).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(var.sqrt() < 0.05);
    }

    #[test]
    fn von_mises_uniform_ks() {
        let mut rng = SeededStream::new(11, 2).rng();
        let n = 20000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_von_mises(1.0, 0.0, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = x / TAU;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn von_mises_cos2_moment() {
        for (i, &kappa) in [0.5, 2.0, 8.0].iter().enumerate() {
            let mu = 0.3;
            let mut rng = SeededStream::new(99, i as u64).rng();
            let n = 200_000;
            let vals: Vec<f64> = (0..n)
                .map(|_| (2.0 * sample_von_mises(mu, kappa, &mut rng)).cos())
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let want = bessel_i_ratio(kappa) * (2.0 * mu).cos();
            assert!((mean - want).abs() < 3.0 * se, "kappa {kappa}: {mean} vs {want}");
        }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: Vec<u64> = {
            let mut r = SeededStream::new(5, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededStream::new(5, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let c: Vec<u64> = {
            let mut r = SeededStream::new(5, 4).rng();
            (0..8).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s = SeededStream::new(5, 0);
        assert_eq!(s.derive(&[1, 2]), s.derive(&[1, 2]));
        assert_ne!(s.derive(&[1, 2]), s.derive(&[2, 1]));
    }

    #[test]
    fn psd_inverse_policy() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((psd_inverse(&id, tol::CONDITION_LIMIT).unwrap() - &id).norm() < 1e-15);

        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-15]));
        match psd_inverse(&bad, 1e12) {
            Err(Error::Conditioning { condition, null_direction }) => {
                assert!(condition > 1e12);
                assert!((null_direction[1].abs() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected conditioning error, got {other:?}"),
        }

        let m = Matrix2::new(2.0, 0.5, 0.5, 1.0);
        let inv = psd_inverse_fixed(&m, 1e12).unwrap();
        assert!((inv * m - Matrix2::identity()).norm() < 1e-12);
    }

    #[test]
    fn psd_inverse_random_spd_residual() {
        let mut rng = SeededStream::new(1, 1).rng();
        for _ in 0..50 {
            let a = DMatrix::<f64>::from_fn(7, 7, |_, _| StandardNormal.sample(&mut rng));
            let spd = &a * a.transpose() + DMatrix::identity(7, 7) * 0.1;
            let inv = psd_inverse(&spd, tol::CONDITION_LIMIT).unwrap();
            assert!((&spd * inv - DMatrix::identity(7, 7)).norm() < 1e-8);
        }
    }

    #[test]
    fn spearman_basic() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }
}
