//! PEB averaged over a Von Mises UE tilt, for single- and dual-polarized
//! arrays, as the mean tilt turns from upright to horizontal.

use std::f64::consts::FRAC_PI_2;

use dmimo::fim::{averaged_fim_theta, averaged_peb, TiltPrior};
use dmimo::scenario::{LayoutConfig, Scenario, ScenarioConfig};
use nalgebra::Vector3;

fn tilt_peb(s: &Scenario, ue: &Vector3<f64>, prior: &TiltPrior) -> dmimo::Result<f64> {
    let per_ap = s
        .aps
        .iter()
        .enumerate()
        .map(|(k, ap)| {
            let (params, _) = s.link_fim(k, 0, ue)?;
            Ok((averaged_fim_theta(&ap.model, &params, &s.spec, prior)?, params, ap.geometry))
        })
        .collect::<dmimo::Result<Vec<_>>>()?;
    averaged_peb(&per_ap)
}

fn main() -> dmimo::Result<()> {
    let ue = Vector3::new(4.0, 3.0, 1.0);
    let mut single = ScenarioConfig::canonical();
    single.aps.truncate(4);
    let mut dual = single.clone();
    dual.array.layout = LayoutConfig::Alternating;
    let (single, dual) = (Scenario::build(&single, None)?, Scenario::build(&dual, None)?);
    println!("{:>6} {:>6} {:>14} {:>14}", "mu", "kappa", "single-pol (m)", "dual-pol (m)");
    for kappa in [0.5, 4.0] {
        for step in 0..=4 {
            let prior = TiltPrior { mu: FRAC_PI_2 * step as f64 / 4.0, kappa };
            println!(
                "{:>6.3} {kappa:>6} {:>14.5} {:>14.5}",
                prior.mu,
                tilt_peb(&single, &ue, &prior)?,
                tilt_peb(&dual, &ue, &prior)?
            );
        }
    }
    Ok(())
}
