//! Builds an EADF from a synthetic 2x4 array pattern, checks that it
//! reproduces the sampled pattern, and round-trips the pattern text format.

use dmimo::eadf::{build_eadf, normalize_eadf, synthesize_ideal_upa, PatternGrid, Polarization};

fn main() -> dmimo::Result<()> {
    let grid = synthesize_ideal_upa(2, 4, 0.5, 36, 36)?;
    let model = build_eadf(&grid)?;

    let mut worst = 0.0f64;
    for mt in (0..grid.m_theta()).step_by(5) {
        for mp in (0..grid.m_phi()).step_by(7) {
            let c = model.evaluate_response(grid.theta_at(mt), grid.phi_at(mp), Polarization::V)?;
            for n in 0..grid.element_count() {
                worst = worst.max((c[n] - grid.get(n, Polarization::V, mt, mp)).norm());
            }
        }
    }
    println!("elements: {}, grid {}x{}", model.element_count(), model.m_theta(), model.m_phi());
    println!("max |EADF - sampled pattern| on grid points: {worst:.2e}");

    let text = grid.to_text();
    let back = PatternGrid::from_text(&text)?;
    println!("text format: {} lines, round trip exact: {}", text.lines().count(), back == grid);

    let normalized = normalize_eadf(&model, 1)?;
    println!("element energies after normalization: {:?}", (0..2).map(|n| normalized.element_energy(n)).collect::<Vec<_>>());
    let (theta, phi) = (1.2, 0.4);
    let off_grid = normalized.evaluate_response(theta, phi, Polarization::V)?;
    println!("response at theta={theta}, phi={phi}: |c_0| = {:.4}", off_grid[0].norm());
    Ok(())
}
