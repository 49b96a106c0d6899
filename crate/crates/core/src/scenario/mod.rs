//! Scenario configuration and the experiment drivers built on it: PEB maps,
//! Monte Carlo positioning runs and full tracking episodes with CSV export.

mod config;
mod episode;
mod export;
mod pebmap;
mod report;
mod trajectory;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

pub use config::{
    load_config, ApConfig, ArrayConfig, ArraySource, BoxConfig, EstimatorConfig, LayoutConfig, MotionConfig,
    PebMapConfig, ScenarioConfig, ScheduleConfig, SelectionMethod, SignalConfig, TiltPriorConfig, TrackingConfig,
    UeConfig,
};
pub use episode::{run_tracking_episode, synthesize_measurements, EpisodeLog, StepRecord};
pub use export::{parse_csv, write_text, CsvTable};
pub use pebmap::{run_peb_map, PebMap};
pub use report::{monte_carlo_csv, run_scenario_monte_carlo, select_at_start, selection_csv, STREAM_MONTE_CARLO};
pub use trajectory::{simulate_trajectory, waypoint_path, BoundingBox};

use crate::eadf::{
    build_eadf, normalize_eadf, synthesize_perturbed_upa, synthesize_upa, EadfModel, PatternGrid, Perturbation,
    PolarizationLayout, UpaGeometry,
};
use crate::error::{Error, Result};
use crate::estimator::{McAp, MlConfig, MonteCarloScenario};
use crate::fim::{averaged_fim_theta, efim_xi, fim_theta, jacobian_xi_to_p, peb_matrix, ApGeometry, FimTheta, TiltPrior};
use crate::mathcore::{psd_inverse_fixed, tol, SeededStream};
use crate::signal::{free_space_gain, LosParams, SignalSpec, UeAntenna};
use crate::tracking::UeState;
use crate::SPEED_OF_LIGHT;

/// Environment variable that replaces the config's master seed (CLI only).
pub const SEED_ENV: &str = "DMIMO_SEED";

/// Stream id of synthetic array perturbations.
const STREAM_ARRAY: u64 = 0xA;

/// One AP with its resolved array model.
#[derive(Debug, Clone)]
pub struct ScenarioAp {
    pub geometry: ApGeometry,
    pub model: Arc<EadfModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioUe {
    pub antenna: UeAntenna,
    /// When set, FIMs are averaged over this tilt prior instead of using the
    /// fixed tilt of `antenna`.
    pub tilt: Option<TiltPrior>,
    pub initial: UeState,
    pub waypoints: Option<Vec<Vector3<f64>>>,
}

/// A validated config with every array model built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub aps: Vec<ScenarioAp>,
    pub ues: Vec<ScenarioUe>,
    pub spec: SignalSpec,
    pub wavelength: f64,
    pub bounds: BoundingBox,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn build_model(array: &ArrayConfig, base_dir: Option<&Path>, frequency_count: usize, path: &str) -> Result<EadfModel> {
    let geometry = UpaGeometry {
        rows: array.rows,
        cols: array.cols,
        spacing_wavelengths: array.spacing,
    };
    let layout = match array.layout {
        LayoutConfig::Vertical => PolarizationLayout::AllVertical,
        LayoutConfig::Alternating => PolarizationLayout::Alternating,
    };
    let grid = match array.source {
        ArraySource::Ideal => synthesize_upa(geometry, layout, array.m_theta, array.m_phi)?,
        ArraySource::Perturbed => synthesize_perturbed_upa(
            geometry,
            layout,
            array.m_theta,
            array.m_phi,
            &Perturbation {
                gain_sigma_db: array.gain_sigma_db,
                phase_spread_deg: array.phase_spread_deg,
                cross_polar_db: array.cross_polar_db,
            },
            SeededStream::new(array.perturbation_seed, STREAM_ARRAY),
        )?,
        ArraySource::File => {
            let rel = array
                .path
                .as_ref()
                .ok_or_else(|| Error::config(format!("{path}.path"), "required when source = \"file\""))?;
            let full: PathBuf = base_dir.map_or_else(|| PathBuf::from(rel), |b| b.join(rel));
            let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
            PatternGrid::from_text(&text)?
        }
    };
    normalize_eadf(&build_eadf(&grid)?, frequency_count)
}

impl Scenario {
    /// Builds the array models; relative pattern paths resolve against
    /// `base_dir`.
    pub fn build(config: &ScenarioConfig, base_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let s = &config.signal;
        let wavelength = SPEED_OF_LIGHT / s.carrier_hz;
        let reference_gain = wavelength / (4.0 * std::f64::consts::PI);
        let noise_variance = reference_gain * reference_gain / 10f64.powf(s.snr_db / 10.0);
        let spec = SignalSpec::flat(s.bandwidth_hz, s.frequency_count, 1.0, noise_variance)?;

        let mut cache: Vec<(ArrayConfig, Arc<EadfModel>)> = Vec::new();
        let mut aps = Vec::with_capacity(config.aps.len());
        for (k, ap) in config.aps.iter().enumerate() {
            let (array, path) = match &ap.array {
                Some(a) => (a, format!("aps[{k}].array")),
                None => (&config.array, "array".to_string()),
            };
            let model = match cache.iter().find(|(c, _)| c == array) {
                Some((_, m)) => m.clone(),
                None => {
                    let m = Arc::new(build_model(array, base_dir, s.frequency_count, &path)?);
                    cache.push((array.clone(), m.clone()));
                    m
                }
            };
            aps.push(ScenarioAp {
                geometry: ApGeometry::new(v3(ap.position), ap.omega_deg.to_radians()),
                model,
            });
        }

        let ues = config
            .ues
            .iter()
            .map(|u| ScenarioUe {
                antenna: UeAntenna {
                    c_tv: Complex64::new(u.c_tv[0], u.c_tv[1]),
                    c_th: Complex64::new(u.c_th[0], u.c_th[1]),
                    beta: u.tilt_deg.to_radians(),
                },
                tilt: u.tilt_prior.as_ref().map(|p| TiltPrior {
                    mu: p.mu_deg.to_radians(),
                    kappa: p.kappa,
                }),
                initial: UeState {
                    position: v3(u.position),
                    velocity: v3(u.velocity),
                },
                waypoints: u.waypoints.as_ref().map(|w| w.iter().map(|p| v3(*p)).collect()),
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            aps,
            ues,
            spec,
            wavelength,
            bounds: BoundingBox::new(v3(config.surveillance_box.min), v3(config.surveillance_box.max)),
        })
    }

    /// Reads and builds a config file, applying the `DMIMO_SEED` override.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = load_config(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            config.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {seed:?}")))?;
        }
        Self::build(&config, path.parent())
    }

    pub fn master_stream(&self, stream: u64) -> SeededStream {
        SeededStream::new(self.config.seed, stream)
    }

    /// LoS parameters and channel FIM of AP `k` toward UE `m` placed at `pos`.
    pub fn link_fim(&self, k: usize, m: usize, pos: &Vector3<f64>) -> Result<(LosParams, FimTheta)> {
        let ap = &self.aps[k];
        let gain = free_space_gain(self.wavelength, &ap.geometry.position, pos)?;
        let params = ap.geometry.los_params(pos, gain, gain)?;
        let ue = &self.ues[m];
        let f = match &ue.tilt {
            Some(t) => averaged_fim_theta(&ap.model, &params, &self.spec, t)?,
            None => fim_theta(&ap.model, &params, &ue.antenna, &self.spec)?,
        };
        Ok((params, f))
    }

    /// Global-frame position FIM of one link; zero when the link carries no
    /// usable information (e.g. a UE on the array axis).
    pub fn position_fim(&self, k: usize, m: usize, pos: &Vector3<f64>) -> Matrix3<f64> {
        let go = || -> Result<Matrix3<f64>> {
            let (params, f) = self.link_fim(k, m, pos)?;
            let j = jacobian_xi_to_p(&params)?;
            let r = self.aps[k].geometry.rotation();
            Ok(r * j * efim_xi(&f)? * j.transpose() * r.transpose())
        };
        go().unwrap_or_else(|_| Matrix3::zeros())
    }

    /// PEB of UE `m` at `pos` served by the APs in `active`; +∞ when the
    /// joint FIM is singular.
    pub fn peb_at(&self, m: usize, pos: &Vector3<f64>, active: &[usize]) -> f64 {
        let f: Matrix3<f64> = active.iter().map(|&k| self.position_fim(k, m, pos)).sum();
        peb_matrix(&f).unwrap_or(f64::INFINITY)
    }

    /// LoS parameters and the covariance over (θ, φ, r = cτ) of a synthesized
    /// detection: the CRLB times the configured inflation.
    pub fn detection_covariance(&self, k: usize, m: usize, pos: &Vector3<f64>) -> Result<(LosParams, Matrix3<f64>)> {
        let (params, f) = self.link_fim(k, m, pos)?;
        let efim = efim_xi(&f)?;
        let scale = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0 / SPEED_OF_LIGHT));
        let info = scale * efim * scale;
        let cov = psd_inverse_fixed(&info, tol::CONDITION_LIMIT)?;
        Ok((params, cov * self.config.signal.noise_inflation))
    }

    /// Static positioning scenario for the first UE, for Monte Carlo runs.
    /// The SNR grid of such runs is the mean receive SNR over the APs.
    pub fn monte_carlo(&self) -> MonteCarloScenario {
        let e = &self.config.estimator;
        let ue = &self.ues[0];
        MonteCarloScenario {
            aps: self
                .aps
                .iter()
                .map(|a| McAp {
                    model: a.model.clone(),
                    geometry: a.geometry,
                })
                .collect(),
            ue_position: ue.initial.position,
            ue: ue.antenna,
            wavelength: self.wavelength,
            spectrum: self.spec.clone(),
            ml: MlConfig {
                center: ue.initial.position,
                grid_extent: v3(e.grid_extent),
                coarse_step: e.coarse_step,
                refine_iterations: e.refine_iterations,
                ..MlConfig::default()
            },
        }
    }
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
pub(crate) fn psd_sqrt(m: &Matrix3<f64>) -> Matrix3<f64> {
    let d = DMatrix::from_column_slice(3, 3, m.as_slice());
    let eig = nalgebra::SymmetricEigen::new((&d + d.transpose()) * 0.5);
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt())) * eig.eigenvectors.transpose();
    Matrix3::from_column_slice(s.as_slice())
}
