//! Golden-output fixtures: a scenario config plus one command whose output is
//! compared against a stored artifact under a tolerance class.
//!
//! A fixture is a `*.fixture.toml` file next to its config:
//!
//! ```toml
//! name = "canonical-peb-map"
//! config = "canonical.toml"
//! command = "peb-map"          # track | peb-map | monte-carlo | select-aps
//! tolerance = "numeric-1e-8"   # bit-exact | numeric-1e-8 | statistical
//! expected = "canonical_peb.csv"
//! sha256 = "…"
//!
//! [args]
//! nx = 50
//! ny = 35
//!
//! [[bands]]                    # statistical fixtures only
//! statistic = "max_peb"
//! mean = 0.05
//! band = 0.01
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{
    monte_carlo_csv, parse_csv, run_peb_map, run_scenario_monte_carlo, run_tracking_episode, select_at_start,
    selection_csv, write_text, Scenario, ScenarioConfig, SelectionMethod,
};

/// Per-cell absolute tolerance of the `numeric-1e-8` class.
pub const NUMERIC_TOLERANCE: f64 = 1e-8;

/// File-name suffix of fixture descriptors.
pub const FIXTURE_SUFFIX: &str = ".fixture.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureCommand {
    Track,
    PebMap,
    MonteCarlo,
    SelectAps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tolerance {
    #[serde(rename = "bit-exact")]
    BitExact,
    #[serde(rename = "numeric-1e-8")]
    Numeric,
    #[serde(rename = "statistical")]
    Statistical,
}

/// Which output of `track` a fixture compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrackArtifact {
    #[default]
    Track,
    Activation,
    Summary,
}

/// Command arguments; unset values fall back to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FixtureArgs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<SelectionMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<TrackArtifact>,
    /// AP whose position anchors the `far_half_rmse` statistic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_ap: Option<usize>,
}

/// Accepted interval `mean ± band` of one named statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub statistic: String,
    pub mean: f64,
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenFixture {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Config path relative to the descriptor.
    pub config: String,
    pub command: FixtureCommand,
    pub tolerance: Tolerance,
    /// Golden artifact relative to the descriptor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    /// Hex SHA-256 of the golden artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default)]
    pub args: FixtureArgs,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<Band>,
}

/// A fixture descriptor with the directory it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFixture {
    pub path: PathBuf,
    pub fixture: GoldenFixture,
}

impl LoadedFixture {
    fn dir(&self) -> &Path {
        self.path.parent().unwrap_or_else(|| Path::new("."))
    }

    pub fn config_path(&self) -> PathBuf {
        self.dir().join(&self.fixture.config)
    }

    pub fn expected_path(&self) -> Option<PathBuf> {
        self.fixture.expected.as_ref().map(|e| self.dir().join(e))
    }
}

pub fn load_fixture(path: &Path) -> Result<LoadedFixture> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fixture: GoldenFixture = toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.message()))?;
    if fixture.tolerance != Tolerance::Statistical && fixture.expected.is_none() {
        return Err(Error::config(format!("{}.expected", path.display()), "required for deterministic fixtures"));
    }
    if fixture.tolerance == Tolerance::Statistical && fixture.bands.is_empty() {
        return Err(Error::config(format!("{}.bands", path.display()), "statistical fixtures need at least one band"));
    }
    Ok(LoadedFixture {
        path: path.to_path_buf(),
        fixture,
    })
}

/// All descriptors in `dir`, sorted by file name.
pub fn load_fixtures(dir: &Path) -> Result<Vec<LoadedFixture>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(FIXTURE_SUFFIX)))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_fixture(p)).collect()
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Output of one fixture command.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub text: String,
    pub statistics: BTreeMap<String, f64>,
}

/// Runs the fixture's command on an already built scenario.
pub fn generate_with(scenario: &Scenario, fixture: &GoldenFixture) -> Result<Generated> {
    let args = &fixture.args;
    let mut statistics = BTreeMap::new();
    let text = match fixture.command {
        FixtureCommand::Track => {
            let log = run_tracking_episode(scenario)?;
            let anchor = args.anchor_ap.unwrap_or(0);
            let ap = scenario
                .aps
                .get(anchor)
                .ok_or_else(|| Error::config("args.anchor_ap", format!("no AP {anchor}")))?;
            statistics.insert("mean_rmse".into(), log.mean_rmse());
            statistics.insert("max_rmse".into(), log.max_rmse());
            statistics.insert("mean_cardinality_error".into(), log.mean_cardinality_error());
            statistics.insert("far_half_rmse".into(), log.far_half_rmse(&ap.geometry.position));
            match args.artifact.unwrap_or_default() {
                TrackArtifact::Track => log.track_csv(),
                TrackArtifact::Activation => log.activation_csv(),
                TrackArtifact::Summary => log.summary(),
            }
        }
        FixtureCommand::PebMap => {
            let pm = &scenario.config.peb_map;
            let map = run_peb_map(scenario, args.nx.unwrap_or(pm.nx), args.ny.unwrap_or(pm.ny), args.z.or(pm.z));
            let finite: Vec<f64> = map.values.iter().copied().filter(|v| v.is_finite()).collect();
            statistics.insert("max_peb".into(), map.max_finite());
            statistics.insert("mean_peb".into(), finite.iter().sum::<f64>() / finite.len() as f64);
            map.to_csv()
        }
        FixtureCommand::MonteCarlo => {
            let est = &scenario.config.estimator;
            let snr = args.snr.clone().unwrap_or_else(|| est.snr_db.clone());
            let reports = run_scenario_monte_carlo(scenario, &snr, args.trials.unwrap_or(est.trials))?;
            for r in &reports {
                statistics.insert(format!("rmse@{}", r.snr_db), r.rmse);
                statistics.insert(format!("ratio@{}", r.snr_db), r.rmse / r.peb);
                statistics.insert(format!("peb@{}", r.snr_db), r.peb);
            }
            monte_carlo_csv(&reports)
        }
        FixtureCommand::SelectAps => {
            let method = args.method.unwrap_or(SelectionMethod::Greedy);
            let k = args
                .k
                .or(scenario.config.schedule.k_prime)
                .ok_or_else(|| Error::config("args.k", "required for select-aps"))?;
            let (selection, objective) = select_at_start(scenario, k, method)?;
            statistics.insert("objective".into(), objective);
            selection_csv(method, &selection, objective)
        }
    };
    Ok(Generated { text, statistics })
}

/// Builds the fixture's scenario (without the seed override) and runs it.
pub fn generate(fixture: &LoadedFixture) -> Result<Generated> {
    let path = fixture.config_path();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let config = crate::scenario::load_config(&text)?;
    generate_with(&Scenario::build(&config, path.parent())?, &fixture.fixture)
}

/// First place where two CSV texts disagree. `row` counts data rows from 1;
/// row 0 is the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub row: usize,
    pub column: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {}, column `{}`: expected {}, got {}",
            self.row, self.column, self.expected, self.actual
        )
    }
}

fn cells(line: Option<&str>) -> Vec<&str> {
    line.map(|l| l.split(',').collect()).unwrap_or_default()
}

/// First differing cell by exact text comparison.
pub fn first_text_divergence(expected: &str, actual: &str) -> Option<Divergence> {
    let header: Vec<&str> = cells(expected.lines().next());
    let mut e = expected.lines();
    let mut a = actual.lines();
    for row in 0.. {
        let (el, al) = (e.next(), a.next());
        if el.is_none() && al.is_none() {
            return None;
        }
        if el == al {
            continue;
        }
        let (ec, ac) = (cells(el), cells(al));
        let col = (0..ec.len().max(ac.len())).find(|&i| ec.get(i) != ac.get(i)).unwrap_or(0);
        return Some(Divergence {
            row,
            column: header.get(col).map_or_else(|| format!("#{col}"), |h| h.to_string()),
            expected: ec.get(col).map_or("<missing>".into(), |s| s.to_string()),
            actual: ac.get(col).map_or("<missing>".into(), |s| s.to_string()),
        });
    }
    unreachable!()
}

/// First cell with |Δ| > `tol` (non-finite cells must match exactly).
pub fn first_numeric_divergence(expected: &str, actual: &str, tol: f64) -> Result<Option<Divergence>> {
    let (e, a) = (parse_csv(expected)?, parse_csv(actual)?);
    if e.header != a.header {
        return Ok(first_text_divergence(
            expected.lines().next().unwrap_or(""),
            actual.lines().next().unwrap_or(""),
        ));
    }
    for row in 0..e.rows.len().max(a.rows.len()) {
        let (er, ar) = match (e.rows.get(row), a.rows.get(row)) {
            (Some(er), Some(ar)) => (er, ar),
            (er, ar) => {
                let show = |r: Option<&Vec<f64>>| r.map_or("<missing row>".to_string(), |_| "<row>".to_string());
                return Ok(Some(Divergence {
                    row: row + 1,
                    column: e.header[0].clone(),
                    expected: show(er),
                    actual: show(ar),
                }));
            }
        };
        for (col, (x, y)) in er.iter().zip(ar).enumerate() {
            let same = if x.is_finite() && y.is_finite() {
                (x - y).abs() <= tol
            } else {
                x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())
            };
            if !same {
                return Ok(Some(Divergence {
                    row: row + 1,
                    column: e.header[col].clone(),
                    expected: x.to_string(),
                    actual: y.to_string(),
                }));
            }
        }
    }
    Ok(None)
}

/// Result of verifying one fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub name: String,
    pub tolerance: Tolerance,
    pub passed: bool,
    pub message: String,
    pub divergence: Option<Divergence>,
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.message)?;
        if let Some(d) = &self.divergence {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

/// Compares freshly generated output with the fixture's golden data.
pub fn check(fixture: &LoadedFixture, generated: &Generated) -> Result<FixtureReport> {
    let f = &fixture.fixture;
    let golden = match fixture.expected_path() {
        Some(p) => Some(std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?),
        None => None,
    };
    let report = |passed: bool, message: String, divergence: Option<Divergence>| FixtureReport {
        name: f.name.clone(),
        tolerance: f.tolerance,
        passed,
        message,
        divergence,
    };
    match f.tolerance {
        Tolerance::BitExact => {
            let golden = golden.unwrap_or_default();
            let stored = f.sha256.clone().unwrap_or_default();
            let actual = sha256_hex(&generated.text);
            if sha256_hex(&golden) != stored {
                return Ok(report(
                    false,
                    "golden file does not match its stored digest".into(),
                    first_text_divergence(&golden, &generated.text),
                ));
            }
            if actual != stored {
                return Ok(report(
                    false,
                    format!("digest mismatch: expected {stored}, got {actual}"),
                    first_text_divergence(&golden, &generated.text),
                ));
            }
            Ok(report(true, format!("sha256 {actual}"), None))
        }
        Tolerance::Numeric => {
            let golden = golden.unwrap_or_default();
            match first_numeric_divergence(&golden, &generated.text, NUMERIC_TOLERANCE)? {
                Some(d) => Ok(report(false, format!("cell differs by more than {NUMERIC_TOLERANCE:e}"), Some(d))),
                None => Ok(report(true, format!("all cells within {NUMERIC_TOLERANCE:e}"), None)),
            }
        }
        Tolerance::Statistical => {
            let mut parts = Vec::new();
            let mut passed = true;
            for b in &f.bands {
                let value = generated
                    .statistics
                    .get(&b.statistic)
                    .copied()
                    .ok_or_else(|| Error::config(format!("bands.{}", b.statistic), "unknown statistic for this command"))?;
                let ok = (value - b.mean).abs() <= b.band;
                passed &= ok;
                parts.push(format!(
                    "{} = {value} {} {} ± {}",
                    b.statistic,
                    if ok { "in" } else { "OUTSIDE" },
                    b.mean,
                    b.band
                ));
            }
            Ok(report(passed, parts.join("; "), None))
        }
    }
}

/// Regenerates and checks one fixture; errors become failed reports.
pub fn verify_fixture(fixture: &LoadedFixture) -> FixtureReport {
    match generate(fixture).and_then(|g| check(fixture, &g)) {
        Ok(r) => r,
        Err(e) => FixtureReport {
            name: fixture.fixture.name.clone(),
            tolerance: fixture.fixture.tolerance,
            passed: false,
            message: e.to_string(),
            divergence: None,
        },
    }
}

/// Verifies fixtures in parallel; reports keep the input order.
pub fn verify_all(fixtures: &[LoadedFixture]) -> Vec<FixtureReport> {
    fixtures.par_iter().map(verify_fixture).collect()
}

/// Regenerates the golden artifact and digest of a deterministic fixture.
/// Statistical fixtures are left untouched; their current statistics are
/// returned so bands can be reviewed.
pub fn bless(fixture: &mut LoadedFixture) -> Result<Generated> {
    let generated = generate(fixture)?;
    if fixture.fixture.tolerance == Tolerance::Statistical {
        return Ok(generated);
    }
    if let Some(p) = fixture.expected_path() {
        write_text(&p, &generated.text)?;
    }
    fixture.fixture.sha256 = Some(sha256_hex(&generated.text));
    let text = toml::to_string(&fixture.fixture).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_text(&fixture.path, &text)?;
    Ok(generated)
}

/// Writes a fixture descriptor for `config` into `dir` (helper for tests and
/// for seeding new fixtures).
pub fn write_fixture(dir: &Path, file_stem: &str, config: &ScenarioConfig, fixture: &GoldenFixture) -> Result<LoadedFixture> {
    write_text(&dir.join(&fixture.config), &config.to_toml()?)?;
    let path = dir.join(format!("{file_stem}{FIXTURE_SUFFIX}"));
    let text = toml::to_string(fixture).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_text(&path, &text)?;
    load_fixture(&path)
}
