//! PEB over a horizontal grid of the surveillance box.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::Scenario;

/// PEB at cell centres of an `nx × ny` grid; `values[iy * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PebMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub z: f64,
    pub values: Vec<f64>,
}

impl PebMap {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    /// Largest finite cell value.
    pub fn max_finite(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max)
    }

    /// `x,y,peb`, x varying fastest.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,peb\n");
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                out.push_str(&format!("{x},{y},{}\n", self.get(ix, iy)));
            }
        }
        out
    }
}

fn centres(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    (0..n).map(|i| lo + w * (i as f64 + 0.5)).collect()
}

/// PEB of the first UE's antenna at every cell centre with all configured
/// APs active; singular cells are +∞. The plane sits at `z`, or at the first
/// UE's height.
pub fn run_peb_map(scenario: &Scenario, nx: usize, ny: usize, z: Option<f64>) -> PebMap {
    let b = &scenario.bounds;
    let xs = centres(b.min.x, b.max.x, nx);
    let ys = centres(b.min.y, b.max.y, ny);
    let z = z.unwrap_or(scenario.ues[0].initial.position.z);
    let active: Vec<usize> = (0..scenario.aps.len()).collect();
    let values = (0..nx * ny)
        .into_par_iter()
        .map(|i| scenario.peb_at(0, &Vector3::new(xs[i % nx], ys[i / nx], z), &active))
        .collect();
    PebMap { xs, ys, z, values }
}
