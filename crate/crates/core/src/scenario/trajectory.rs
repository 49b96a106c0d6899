//! Ground-truth UE paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand_distr::{Distribution, StandardNormal};

use crate::mathcore::SeededStream;
use crate::tracking::{MotionModel, UeState};

/// Axis-aligned surveillance region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl BoundingBox {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn volume(&self) -> f64 {
        (self.max - self.min).product()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Mirrors a state back inside the box, flipping the velocity component
    /// of every axis it bounced on.
    pub fn reflect(&self, state: &mut UeState) {
        for i in 0..3 {
            let (lo, hi) = (self.min[i], self.max[i]);
            let mut p = state.position[i];
            for _ in 0..64 {
                if p < lo {
                    p = 2.0 * lo - p;
                } else if p > hi {
                    p = 2.0 * hi - p;
                } else {
                    break;
                }
                state.velocity[i] = -state.velocity[i];
            }
            state.position[i] = p.clamp(lo, hi);
        }
    }
}

/// Samples `steps` states from the motion model, starting at `initial`
/// (the first returned state). Increments are Gaussian with the model's
/// process noise; with `bounds`, each state is reflected into the box.
pub fn simulate_trajectory(
    initial: &UeState,
    motion: &MotionModel,
    steps: usize,
    seed: SeededStream,
    bounds: Option<&BoundingBox>,
) -> Vec<UeState> {
    let dim = motion.state_dim();
    let f = motion.transition();
    let eig = SymmetricEigen::new(motion.process_noise.clone());
    let sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(steps);
    let mut x = initial.to_vector(dim);
    for t in 0..steps {
        if t > 0 {
            let z = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            x = &f * &x + &sqrt * z;
        }
        let mut s = UeState::from_vector(&x);
        if dim < 6 {
            s.velocity = initial.velocity;
        }
        if let Some(b) = bounds {
            b.reflect(&mut s);
            x = s.to_vector(dim);
        }
        out.push(s);
    }
    out
}

/// Walks the polyline through `waypoints` at `step_length` per step, turning
/// back at either end. Velocities are per-step displacements.
pub fn waypoint_path(waypoints: &[Vector3<f64>], step_length: f64, steps: usize) -> Vec<UeState> {
    let segments: Vec<(Vector3<f64>, Vector3<f64>, f64)> = waypoints
        .windows(2)
        .map(|w| (w[0], w[1], (w[1] - w[0]).norm()))
        .filter(|s| s.2 > 0.0)
        .collect();
    let total: f64 = segments.iter().map(|s| s.2).sum();
    if segments.is_empty() || total == 0.0 {
        let p = waypoints.first().copied().unwrap_or_else(Vector3::zeros);
        return vec![UeState::at(p); steps];
    }
    (0..steps)
        .map(|t| {
            let mut s = (t as f64 * step_length) % (2.0 * total);
            let forward = s <= total;
            if !forward {
                s = 2.0 * total - s;
            }
            let mut acc = 0.0;
            for (i, (a, b, len)) in segments.iter().enumerate() {
                if s <= acc + len || i + 1 == segments.len() {
                    let u = ((s - acc) / len).clamp(0.0, 1.0);
                    let dir = (b - a) / *len;
                    return UeState {
                        position: a + (b - a) * u,
                        velocity: dir * if forward { step_length } else { -step_length },
                    };
                }
                acc += len;
            }
            unreachable!("segments is non-empty")
        })
        .collect()
}
