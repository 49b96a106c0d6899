//! Per-link Fisher information, its equivalent FIM after removing the gains,
//! and the PEB as APs are added around a UE in the canonical room.

use dmimo::fim::{fim_bundle, global_fim, peb};
use dmimo::scenario::{Scenario, ScenarioConfig};
use nalgebra::Vector3;

fn main() -> dmimo::Result<()> {
    let s = Scenario::build(&ScenarioConfig::canonical(), None)?;
    let ue = Vector3::new(4.0, 3.0, 1.0);
    let antenna = s.ues[0].antenna;

    let mut locals = Vec::new();
    for (k, ap) in s.aps.iter().enumerate() {
        let (params, _) = s.link_fim(k, 0, &ue)?;
        let b = fim_bundle(&ap.model, &params, &antenna, &s.spec, &ap.geometry)?;
        if k == 0 {
            println!("AP 0 link: theta {:.3} rad, phi {:.3} rad, distance {:.3} m", params.theta, params.phi, params.tau * dmimo::SPEED_OF_LIGHT);
            println!("EFIM diagonal (theta, phi, tau): {:.3e} {:.3e} {:.3e}", b.efim[(0, 0)], b.efim[(1, 1)], b.efim[(2, 2)]);
            println!("single-AP PEB: {:.4} m", b.peb);
        }
        locals.push((b.local, ap.geometry));
        let total = global_fim(&locals)?;
        println!("APs 0..={k}: PEB {:.5} m", peb(&total)?);
    }
    println!("scenario helper agrees: {:.5} m", s.peb_at(0, &ue, &(0..8).collect::<Vec<_>>()));
    Ok(())
}
