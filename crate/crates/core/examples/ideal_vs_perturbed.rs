//! PEB with ideal arrays against synthetic arrays carrying element gain and
//! phase errors plus cross-polar leakage, for several perturbation seeds.

use std::path::Path;

use dmimo::scenario::{load_config, ArraySource, Scenario};

fn main() -> dmimo::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/four_ap.toml");
    let text = std::fs::read_to_string(&path).map_err(|e| dmimo::Error::InvalidInput(e.to_string()))?;
    let ideal_cfg = load_config(&text)?;
    let ideal = Scenario::build(&ideal_cfg, None)?.monte_carlo().peb(30.0)?;
    println!("ideal arrays: PEB {ideal:.5} m at 30 dB");
    for seed in 1..=6 {
        let mut cfg = ideal_cfg.clone();
        cfg.array.source = ArraySource::Perturbed;
        cfg.array.perturbation_seed = seed;
        let p = Scenario::build(&cfg, None)?.monte_carlo().peb(30.0)?;
        println!("perturbed seed {seed}: PEB {p:.5} m ({:+.2}%)", 100.0 * (p - ideal) / ideal);
    }
    Ok(())
}
