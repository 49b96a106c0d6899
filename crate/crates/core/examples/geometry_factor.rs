//! The AP geometry factor in the horizontal plane: balanced layouts (factor
//! zero) reach the closed-form optimum, and PEB grows with the factor.

use std::f64::consts::PI;

use dmimo::fim::{fim_2d, geometry_factor, optimal_peb_closed_form, peb_2d, ApDiagonals, ApGeometry};
use dmimo::SPEED_OF_LIGHT;
use nalgebra::{Vector2, Vector3};

fn main() -> dmimo::Result<()> {
    let ue = Vector2::new(0.0, 0.0);
    let dist = 4.0;
    let tau = dist / SPEED_OF_LIGHT;
    let d = ApDiagonals { theta_theta: 0.0, phi_phi: 4e3 * tau * tau * SPEED_OF_LIGHT.powi(2) / 16.0, tau_tau: 1e18 };
    let optimum = optimal_peb_closed_form(&[(d, tau); 4])?;
    println!("closed-form optimum for 4 APs at {dist} m: {optimum:.5} m");
    println!("{:>8} {:>12} {:>10}", "spread", "|D|/sum|w|", "PEB (m)");
    for spread_deg in [90.0f64, 70.0, 50.0, 30.0, 10.0] {
        let half = spread_deg.to_radians();
        let aps: Vec<(ApDiagonals, ApGeometry)> = (0..4)
            .map(|k| {
                let a = (k as f64 - 1.5) * half + PI;
                (d, ApGeometry::new(Vector3::new(dist * a.cos(), dist * a.sin(), 0.0), 0.0))
            })
            .collect();
        let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
        let weight: f64 = aps.iter().map(|(d, _)| (d.phi_phi / (tau * tau * c2) - d.tau_tau / c2).abs()).sum();
        let g = geometry_factor(&aps, &ue)?.norm() / weight;
        println!("{spread_deg:>7}° {g:>12.2e} {:>10.5}", peb_2d(&fim_2d(&aps, &ue)?)?);
    }
    Ok(())
}
