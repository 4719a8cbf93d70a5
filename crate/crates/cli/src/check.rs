//! Seeded finite-difference check of the energy gradient.

use std::f64::consts::PI;
use std::sync::Arc;

use dcone::curve::BoundaryCurve;
use dcone::energy::{upper_bound_profile, EnergyAssembler};
use dcone::mesh::PolarMesh;
use dcone::scalar::{dot, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub field: usize,
    pub direction: usize,
    pub analytic: f64,
    /// Richardson combination of central differences at `step` and `step/2`; exact for quartics.
    pub central: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub h: f64,
    pub step: f64,
    pub max_relative_error: f64,
    pub checks: Vec<DirectionCheck>,
}

/// Smooth random nodal field vanishing at the apex and on the boundary.
fn random_smooth(mesh: &PolarMesh<f64>, rng: &mut ChaCha8Rng, modes: usize) -> Vec<Vec3<f64>> {
    let mut coef = vec![[[0.0; 4]; 3]; modes + 1];
    for m in coef.iter_mut() {
        for c in m.iter_mut() {
            for x in c.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
    }
    (0..mesh.num_nodes())
        .map(|n| {
            if mesh.is_constrained(n) {
                return [0.0; 3];
            }
            let (r, t) = mesh.position(n);
            let bump = 4.0 * r * (1.0 - r);
            let mut v = [0.0; 3];
            for (m, cm) in coef.iter().enumerate() {
                let (s, c) = (m as f64 * t).sin_cos();
                for k in 0..3 {
                    let radial = cm[k][2] + cm[k][3] * (PI * r).cos();
                    v[k] += bump * radial * (cm[k][0] * c + cm[k][1] * s);
                }
            }
            v
        })
        .collect()
}

pub fn gradient_check(
    curve: &BoundaryCurve<f64>,
    mesh: Arc<PolarMesh<f64>>,
    h: f64,
    n_fields: usize,
    n_directions: usize,
    seed: u64,
) -> dcone::Result<GradientCheck> {
    let asm = EnergyAssembler::new(mesh.clone(), h)?;
    let profile = upper_bound_profile(curve, h, mesh.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-3;
    let mut checks = Vec::with_capacity(n_fields * n_directions);
    for field in 0..n_fields {
        let bump = random_smooth(&mesh, &mut rng, 4);
        let y: Vec<Vec3<f64>> =
            profile.values.iter().zip(&bump).map(|(a, b)| [a[0] + 0.1 * b[0], a[1] + 0.1 * b[1], a[2] + 0.1 * b[2]]).collect();
        let (_, g) = asm.value_and_gradient(&y, 1.0);
        for direction in 0..n_directions {
            let v = random_smooth(&mesh, &mut rng, 8);
            let at = |s: f64| {
                let shifted: Vec<Vec3<f64>> =
                    y.iter().zip(&v).map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]).collect();
                asm.value_and_gradient(&shifted, 1.0).0
            };
            let d = |t: f64| (at(t) - at(-t)) / (2.0 * t);
            let central = (4.0 * d(0.5 * step) - d(step)) / 3.0;
            let analytic: f64 = g.iter().zip(&v).map(|(a, b)| dot(a, b)).sum();
            let relative_error = (central - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE);
            checks.push(DirectionCheck { field, direction, analytic, central, relative_error });
        }
    }
    let max_relative_error = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck { h, step, max_relative_error, checks })
}
