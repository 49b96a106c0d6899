//! TOML scenario configuration.
//!
//! Every section except `aps`, `ues` and `surveillance_box` may be omitted;
//! missing keys take the defaults documented on each field. Unknown keys are
//! rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed of every random stream in the scenario.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub signal: SignalConfig,
    /// Array used by every AP without its own `array` table.
    #[serde(default)]
    pub array: ArrayConfig,
    pub aps: Vec<ApConfig>,
    pub ues: Vec<UeConfig>,
    pub surveillance_box: BoxConfig,
    #[serde(default)]
    pub tracking: TrackingConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub peb_map: PebMapConfig,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub frequency_count: usize,
    /// Receive SNR of a link at 1 m distance, dB. Links lose 20 log10(d) dB
    /// with free-space distance d.
    pub snr_db: f64,
    /// Factor applied to the CRLB covariance of synthesized detections.
    pub noise_inflation: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 5.6e9,
            bandwidth_hz: 400e6,
            frequency_count: 32,
            snr_db: 45.0,
            noise_inflation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArraySource {
    #[default]
    Ideal,
    Perturbed,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayoutConfig {
    #[default]
    Vertical,
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub source: ArraySource,
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub m_theta: usize,
    pub m_phi: usize,
    pub layout: LayoutConfig,
    pub perturbation_seed: u64,
    pub gain_sigma_db: f64,
    pub phase_spread_deg: f64,
    pub cross_polar_db: f64,
    /// Pattern file for `source = "file"`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            source: ArraySource::Ideal,
            rows: 2,
            cols: 4,
            spacing: 0.5,
            m_theta: 36,
            m_phi: 36,
            layout: LayoutConfig::Vertical,
            perturbation_seed: 1,
            gain_sigma_db: 0.5,
            phase_spread_deg: 5.0,
            cross_polar_db: -20.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub position: [f64; 3],
    /// Rotation of the local x-axis (array boresight) about global z.
    #[serde(default)]
    pub omega_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArrayConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltPriorConfig {
    pub mu_deg: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Fixed tilt, ignored when `tilt_prior` is given.
    #[serde(default)]
    pub tilt_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt_prior: Option<TiltPriorConfig>,
    /// Antenna gains toward V and H as `[re, im]`.
    #[serde(default = "default_c_tv")]
    pub c_tv: [f64; 2],
    #[serde(default)]
    pub c_th: [f64; 2],
    /// Ground-truth path: walk these points at `tracking.step_length`. Without
    /// waypoints the truth is sampled from the motion model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 3]>>,
}

fn default_c_tv() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MotionConfig {
    #[default]
    RandomWalk,
    ConstantVelocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub steps: usize,
    pub motion: MotionConfig,
    /// Per-axis standard deviation of the random-walk step (m) or of the
    /// white acceleration (m/s²) for constant velocity.
    pub process_noise_std: f64,
    pub dt: f64,
    pub p_detect: f64,
    /// Clutter points per cubic metre per step.
    pub clutter_intensity: f64,
    /// Isotropic standard deviation attached to clutter points, m.
    pub clutter_std: f64,
    pub prune_threshold: f64,
    pub merge_threshold: f64,
    pub max_components: usize,
    /// Euclidean distance under which detections from different APs are
    /// fused into one proxy measurement, m.
    pub gate_distance: f64,
    pub birth_weight: f64,
    pub birth_std: f64,
    /// Distance walked per step along waypoint paths, m.
    pub step_length: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            steps: 780,
            motion: MotionConfig::RandomWalk,
            process_noise_std: 0.1,
            dt: 1.0,
            p_detect: 0.95,
            clutter_intensity: 0.005,
            clutter_std: 0.1,
            prune_threshold: 1e-4,
            merge_threshold: 4.0,
            max_components: 500,
            gate_distance: 1.0,
            birth_weight: 1e-2,
            birth_std: 1.0,
            step_length: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    #[default]
    All,
    Greedy,
    Brute,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub method: SelectionMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Full width of the coarse search box per axis, centred on the first
    /// UE, m.
    pub grid_extent: [f64; 3],
    pub coarse_step: f64,
    pub refine_iterations: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![10.0, 20.0, 30.0],
            trials: 500,
            grid_extent: [1.0, 1.0, 1.0],
            coarse_step: 0.25,
            refine_iterations: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PebMapConfig {
    pub nx: usize,
    pub ny: usize,
    /// Height of the map plane; defaults to the first UE's height.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

impl Default for PebMapConfig {
    fn default() -> Self {
        Self { nx: 50, ny: 35, z: None }
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a scenario.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite(path: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(path, "must be finite"))
    }
}

impl ArrayConfig {
    fn validate(&self, path: &str) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(format!("{path}.rows"), "array needs at least one element"));
        }
        positive(&format!("{path}.spacing"), self.spacing)?;
        for (name, m) in [("m_theta", self.m_theta), ("m_phi", self.m_phi)] {
            if m < 2 || m % 2 != 0 {
                return Err(Error::config(format!("{path}.{name}"), format!("must be even and at least 2, got {m}")));
            }
        }
        finite(&format!("{path}.gain_sigma_db"), &[self.gain_sigma_db, self.phase_spread_deg, self.cross_polar_db])?;
        if self.source == ArraySource::File && self.path.is_none() {
            return Err(Error::config(format!("{path}.path"), "required when source = \"file\""));
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// Invariant checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let s = &self.signal;
        positive("signal.carrier_hz", s.carrier_hz)?;
        positive("signal.bandwidth_hz", s.bandwidth_hz)?;
        if s.frequency_count == 0 {
            return Err(Error::config("signal.frequency_count", "must be at least 1"));
        }
        finite("signal.snr_db", &[s.snr_db])?;
        positive("signal.noise_inflation", s.noise_inflation)?;
        self.array.validate("array")?;

        if self.aps.is_empty() {
            return Err(Error::config("aps", "at least one AP is required"));
        }
        for (k, ap) in self.aps.iter().enumerate() {
            finite(&format!("aps[{k}].position"), &ap.position)?;
            finite(&format!("aps[{k}].omega_deg"), &[ap.omega_deg])?;
            if let Some(a) = &ap.array {
                a.validate(&format!("aps[{k}].array"))?;
            }
        }

        let b = &self.surveillance_box;
        finite("surveillance_box.min", &b.min)?;
        finite("surveillance_box.max", &b.max)?;
        if (0..3).any(|i| b.max[i] <= b.min[i]) {
            return Err(Error::config("surveillance_box", "max must exceed min on every axis"));
        }

        if self.ues.is_empty() {
            return Err(Error::config("ues", "at least one UE is required"));
        }
        for (m, ue) in self.ues.iter().enumerate() {
            finite(&format!("ues[{m}].position"), &ue.position)?;
            finite(&format!("ues[{m}].velocity"), &ue.velocity)?;
            finite(&format!("ues[{m}].tilt_deg"), &[ue.tilt_deg])?;
            finite(&format!("ues[{m}].c_tv"), &[ue.c_tv[0], ue.c_tv[1], ue.c_th[0], ue.c_th[1]])?;
            if let Some(p) = &ue.tilt_prior {
                finite(&format!("ues[{m}].tilt_prior.mu_deg"), &[p.mu_deg])?;
                if !(p.kappa >= 0.0) {
                    return Err(Error::config(format!("ues[{m}].tilt_prior.kappa"), "must be non-negative"));
                }
            }
            if let Some(w) = &ue.waypoints {
                if w.is_empty() {
                    return Err(Error::config(format!("ues[{m}].waypoints"), "must not be empty"));
                }
                for p in w {
                    finite(&format!("ues[{m}].waypoints"), p)?;
                }
            }
            for ap in &self.aps {
                if ap.position == ue.position {
                    return Err(Error::config(format!("ues[{m}].position"), "coincides with an AP"));
                }
            }
        }

        let t = &self.tracking;
        if t.steps == 0 {
            return Err(Error::config("tracking.steps", "must be at least 1"));
        }
        if !(t.process_noise_std >= 0.0) {
            return Err(Error::config("tracking.process_noise_std", "must be non-negative"));
        }
        positive("tracking.dt", t.dt)?;
        if !(0.0..=1.0).contains(&t.p_detect) {
            return Err(Error::config("tracking.p_detect", "must lie in [0, 1]"));
        }
        if !(t.clutter_intensity >= 0.0) || !t.clutter_intensity.is_finite() {
            return Err(Error::config("tracking.clutter_intensity", "must be non-negative"));
        }
        positive("tracking.clutter_std", t.clutter_std)?;
        positive("tracking.prune_threshold", t.prune_threshold)?;
        positive("tracking.merge_threshold", t.merge_threshold)?;
        if t.max_components == 0 {
            return Err(Error::config("tracking.max_components", "must be at least 1"));
        }
        if !(t.gate_distance >= 0.0) {
            return Err(Error::config("tracking.gate_distance", "must be non-negative"));
        }
        positive("tracking.birth_weight", t.birth_weight)?;
        positive("tracking.birth_std", t.birth_std)?;
        positive("tracking.step_length", t.step_length)?;

        let k = self.aps.len();
        let sc = &self.schedule;
        match sc.method {
            SelectionMethod::Greedy | SelectionMethod::Brute => match sc.k_prime {
                None => return Err(Error::config("schedule.k_prime", "required for greedy and brute selection")),
                Some(kp) if kp == 0 || kp > k => {
                    return Err(Error::config("schedule.k_prime", format!("must lie in 1..={k}, got {kp}")))
                }
                _ => {}
            },
            SelectionMethod::Fixed => {
                if sc.fixed.is_empty() {
                    return Err(Error::config("schedule.fixed", "must list at least one AP"));
                }
                if let Some(bad) = sc.fixed.iter().find(|&&i| i >= k) {
                    return Err(Error::config("schedule.fixed", format!("AP index {bad} out of range")));
                }
            }
            SelectionMethod::All => {}
        }
        if let Some(kp) = sc.k_prime {
            if kp == 0 || kp > k {
                return Err(Error::config("schedule.k_prime", format!("must lie in 1..={k}, got {kp}")));
            }
        }

        let e = &self.estimator;
        if e.trials == 0 {
            return Err(Error::config("estimator.trials", "must be at least 1"));
        }
        finite("estimator.snr_db", &e.snr_db)?;
        for v in e.grid_extent {
            if !(v >= 0.0) {
                return Err(Error::config("estimator.grid_extent", "must be non-negative"));
            }
        }
        positive("estimator.coarse_step", e.coarse_step)?;

        if self.peb_map.nx == 0 || self.peb_map.ny == 0 {
            return Err(Error::config("peb_map.nx", "grid needs at least one cell per axis"));
        }
        Ok(())
    }

    /// TOML text that loads back to the same config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
    }

    /// Eight APs on the walls of a 10 m × 7 m × 3 m room (four corners and four
    /// wall centres, 2.5 m high, facing the room centre) and one UE walking a
    /// 7 m × 4 m loop at 1 m height.
    pub fn canonical() -> Self {
        let centre = [5.0, 3.5];
        let spots = [
            [0.0, 0.0],
            [5.0, 0.0],
            [10.0, 0.0],
            [10.0, 3.5],
            [10.0, 7.0],
            [5.0, 7.0],
            [0.0, 7.0],
            [0.0, 3.5],
        ];
        let aps = spots
            .iter()
            .map(|[x, y]| ApConfig {
                position: [*x, *y, 2.5],
                omega_deg: (centre[1] - y).atan2(centre[0] - x).to_degrees(),
                array: None,
            })
            .collect();
        Self {
            seed: default_seed(),
            signal: SignalConfig::default(),
            array: ArrayConfig::default(),
            aps,
            ues: vec![UeConfig {
                position: [1.5, 1.5, 1.0],
                velocity: [0.0; 3],
                tilt_deg: 0.0,
                tilt_prior: None,
                c_tv: default_c_tv(),
                c_th: [0.0, 0.0],
                waypoints: Some(vec![
                    [1.5, 1.5, 1.0],
                    [8.5, 1.5, 1.0],
                    [8.5, 5.5, 1.0],
                    [1.5, 5.5, 1.0],
                    [1.5, 1.5, 1.0],
                ]),
            }],
            surveillance_box: BoxConfig {
                min: [0.0, 0.0, 0.0],
                max: [10.0, 7.0, 3.0],
            },
            tracking: TrackingConfig::default(),
            schedule: ScheduleConfig::default(),
            estimator: EstimatorConfig::default(),
            peb_map: PebMapConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[aps]]
position = [0.0, 0.0, 2.5]

[[ues]]
position = [3.0, 2.0, 1.0]

[surveillance_box]
min = [0.0, 0.0, 0.0]
max = [10.0, 7.0, 3.0]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = load_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.signal, SignalConfig::default());
        assert_eq!(c.tracking.steps, 780);
        assert_eq!(c.ues[0].c_tv, [1.0, 0.0]);
        assert_eq!(c.schedule.method, SelectionMethod::All);
    }

    #[test]
    fn k_prime_above_ap_count_names_field() {
        let text = format!("{MINIMAL}\n[schedule]\nmethod = \"greedy\"\nk_prime = 3\n");
        match load_config(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "schedule.k_prime"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = "seed = 3\n[signal]\nsnr_db = \"loud\"\n";
        match load_config(text) {
            Err(Error::ConfigParse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 10);
            }
            other => panic!("{other:?}"),
        }
        let unknown = format!("{MINIMAL}\n[tracking]\nstepz = 4\n");
        assert!(matches!(load_config(&unknown), Err(Error::ConfigParse { .. })));
    }

    #[test]
    fn semantic_errors() {
        let mut c = ScenarioConfig::canonical();
        c.surveillance_box.max[2] = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "surveillance_box"));
        let mut c = ScenarioConfig::canonical();
        c.aps[3].array = Some(ArrayConfig { m_phi: 7, ..ArrayConfig::default() });
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "aps[3].array.m_phi"));
        let mut c = ScenarioConfig::canonical();
        c.tracking.p_detect = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "tracking.p_detect"));
        let mut c = ScenarioConfig::canonical();
        c.aps.clear();
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "aps"));
    }

    #[test]
    fn round_trip() {
        let mut c = ScenarioConfig::canonical();
        c.schedule = ScheduleConfig { method: SelectionMethod::Greedy, k_prime: Some(4), fixed: vec![] };
        c.ues[0].tilt_prior = Some(TiltPriorConfig { mu_deg: 10.0, kappa: 2.0 });
        c.aps[1].array = Some(ArrayConfig { source: ArraySource::Perturbed, ..ArrayConfig::default() });
        let text = c.to_toml().unwrap();
        assert_eq!(load_config(&text).unwrap(), c);
        let m = load_config(MINIMAL).unwrap();
        assert_eq!(load_config(&m.to_toml().unwrap()).unwrap(), m);
    }
}
