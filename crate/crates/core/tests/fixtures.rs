//! Golden fixtures shipped in `fixtures/`.

use std::collections::BTreeSet;
use std::path::Path;

use dmimo::fixtures::{load_fixtures, verify_all, verify_fixture, FixtureCommand, Tolerance};

fn dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

#[test]
fn every_shipped_fixture_verifies() {
    let fixtures = load_fixtures(dir()).unwrap();
    let failed: Vec<String> = verify_all(&fixtures).iter().filter(|r| !r.passed).map(|r| r.to_string()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn every_command_and_tolerance_class_is_covered() {
    let fixtures = load_fixtures(dir()).unwrap();
    let kinds: BTreeSet<String> = fixtures.iter().map(|f| format!("{:?}", f.fixture.command)).collect();
    for c in [FixtureCommand::Track, FixtureCommand::PebMap, FixtureCommand::MonteCarlo, FixtureCommand::SelectAps] {
        assert!(kinds.contains(&format!("{c:?}")), "{c:?}");
    }
    for t in [Tolerance::BitExact, Tolerance::Numeric, Tolerance::Statistical] {
        assert!(fixtures.iter().any(|f| f.fixture.tolerance == t), "{t:?}");
    }
    for f in &fixtures {
        let d = f.fixture.description.as_deref().unwrap_or("");
        assert!(d.contains("Regenerate: dmimo "), "{} lacks a regeneration command", f.fixture.name);
    }
}

#[test]
fn corrupted_numeric_golden_names_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["one_sided.toml", "one_sided_peb.csv", "one_sided_peb_map.fixture.toml"] {
        std::fs::copy(dir().join(name), tmp.path().join(name)).unwrap();
    }
    let golden = tmp.path().join("one_sided_peb.csv");
    let text = std::fs::read_to_string(&golden).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[7].split(',').map(String::from).collect();
    let v: f64 = cells[2].parse().unwrap();
    cells[2] = (v + 1e-6).to_string();
    lines[7] = cells.join(",");
    std::fs::write(&golden, lines.join("\n") + "\n").unwrap();

    let fixtures = load_fixtures(tmp.path()).unwrap();
    let report = verify_fixture(&fixtures[0]);
    assert!(!report.passed);
    let d = report.divergence.unwrap();
    assert_eq!((d.row, d.column.as_str()), (7, "peb"));
}
