//! Maximum-likelihood positioning RMSE against the PEB for the four-AP
//! fixture scenario (fewer trials than the acceptance run).

use std::path::Path;

use dmimo::scenario::{monte_carlo_csv, run_scenario_monte_carlo, Scenario};

fn main() -> dmimo::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/four_ap.toml");
    let s = Scenario::from_path(&path)?;
    let reports = run_scenario_monte_carlo(&s, &[10.0, 20.0, 30.0, 40.0], 40)?;
    print!("{}", monte_carlo_csv(&reports));
    for r in &reports {
        println!("{:>4} dB: RMSE/PEB = {:.2}", r.snr_db, r.rmse / r.peb);
    }
    Ok(())
}
