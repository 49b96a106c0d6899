//! PEB maps of the canonical room for the full eight-AP ring, four corners
//! and three APs along one wall, printed as coarse ASCII shading.

use dmimo::scenario::{run_peb_map, Scenario, ScenarioConfig};

fn main() -> dmimo::Result<()> {
    let base = ScenarioConfig::canonical();
    let mut corners = base.clone();
    corners.aps = [0, 2, 4, 6].iter().map(|&i| base.aps[i].clone()).collect();
    let mut wall = base.clone();
    wall.aps = [0, 1, 2].iter().map(|&i| base.aps[i].clone()).collect();

    for (name, cfg) in [("eight-AP ring", base), ("four corners", corners), ("three on y=0", wall)] {
        let map = run_peb_map(&Scenario::build(&cfg, None)?, 20, 14, None);
        let max = map.max_finite();
        println!("{name}: max PEB {max:.4} m");
        let shades = [' ', '.', ':', '+', '#'];
        for iy in (0..map.ys.len()).rev() {
            let row: String = (0..map.xs.len())
                .map(|ix| shades[((map.get(ix, iy) / max * 4.999) as usize).min(4)])
                .collect();
            println!("  |{row}|");
        }
    }
    Ok(())
}
