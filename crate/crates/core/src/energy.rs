//! Discrete thin-sheet energy `E_h(y) = ∫ |∇yᵀ∇y − Id|² + h² |∇²y|²` and its gradient.
//!
//! Densities are collocated at the nodes of rings `1..=n_r` and integrated with
//! the mesh's node weights (the center node carries zero weight). In the
//! orthonormal polar frame, with `a = y_r`, `b = y_θ / r`,
//!
//! ```text
//! membrane = (a·a − 1)² + 2 (a·b)² + (b·b − 1)²
//! H_rr = y_rr,  H_rθ = y_rθ / r − y_θ / r²,  H_θθ = y_θθ / r² + y_r / r
//! bending  = |H_rr|² + 2 |H_rθ|² + |H_θθ|²
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::BoundaryCurve;
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, MeshSpec, PolarMesh, Region};
use crate::polar::{PolarOperators, RingDerivs};
use crate::scalar::{dot, Real, Vec3};

/// Nodal values of a map from the disk to R³.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    pub mesh: Arc<PolarMesh<T>>,
    pub values: Vec<Vec3<T>>,
    pub curve_hash: String,
}

fn curve_stride<T: Real>(mesh: &PolarMesh<T>, curve: &BoundaryCurve<T>) -> Result<usize> {
    let n = mesh.n_theta();
    if curve.len() % n != 0 {
        return Err(Error::Mismatch(format!(
            "mesh n_theta = {n} does not divide curve resolution {}",
            curve.len()
        )));
    }
    Ok(curve.len() / n)
}

impl<T: Real> Field<T> {
    /// Field with interior values `f(r, θ, curve sample)`; boundary and center are set by the admissible class.
    pub fn from_fn(
        mesh: Arc<PolarMesh<T>>,
        curve: &BoundaryCurve<T>,
        f: impl Fn(T, T, &Vec3<T>) -> Vec3<T>,
    ) -> Result<Self> {
        let stride = curve_stride(&mesh, curve)?;
        let n_r = mesh.n_r();
        let mut values = vec![[T::zero(); 3]; mesh.num_nodes()];
        for ring in 1..=n_r {
            for k in 0..mesh.n_theta() {
                let g = &curve.gamma[k * stride];
                values[mesh.node(ring, k)] =
                    if ring == n_r { *g } else { f(mesh.radii[ring], mesh.angles[k], g) };
            }
        }
        Ok(Self { mesh, values, curve_hash: curve.hash() })
    }

    /// Samples of the cone `r γ(θ)`.
    pub fn cone(mesh: Arc<PolarMesh<T>>, curve: &BoundaryCurve<T>) -> Result<Self> {
        Self::from_fn(mesh, curve, |r, _, g| [r * g[0], r * g[1], r * g[2]])
    }

    pub fn zeros_like(&self) -> Self {
        Self { mesh: self.mesh.clone(), values: vec![[T::zero(); 3]; self.values.len()], curve_hash: self.curve_hash.clone() }
    }

    /// Verifies `y = γ` on the boundary ring and `y(0) = 0`.
    pub fn check_constraints(&self, curve: &BoundaryCurve<T>) -> Result<()> {
        let stride = curve_stride(&self.mesh, curve)?;
        if self.values[0] != [T::zero(); 3] {
            return Err(Error::Constraint("center node is not at the origin".into()));
        }
        let n_r = self.mesh.n_r();
        for k in 0..self.mesh.n_theta() {
            if self.values[self.mesh.node(n_r, k)] != curve.gamma[k * stride] {
                return Err(Error::Constraint(format!("boundary node {k} differs from the curve")));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            n_r: self.mesh.n_r(),
            n_theta: self.mesh.n_theta(),
            grading: self.mesh.spec.grading,
            mesh_h: self.mesh.h.to_f64_lossy(),
            curve_hash: self.curve_hash.clone(),
            values: self.values.iter().flat_map(|v| v.iter().map(|c| c.to_f64_lossy())).collect(),
        }
    }

    pub fn from_snapshot(s: &FieldSnapshot) -> Result<Self> {
        if s.format != SNAPSHOT_FORMAT {
            return Err(Error::InvalidParameter(format!("unknown snapshot format {}", s.format)));
        }
        let spec = MeshSpec { n_r: s.n_r, n_theta: s.n_theta, grading: s.grading };
        let mesh = Arc::new(build_mesh::<T>(spec, s.mesh_h)?);
        if s.values.len() != 3 * mesh.num_nodes() {
            return Err(Error::Mismatch(format!(
                "snapshot holds {} values, mesh needs {}",
                s.values.len(),
                3 * mesh.num_nodes()
            )));
        }
        let values = s.values.chunks(3).map(|c| [T::lit(c[0]), T::lit(c[1]), T::lit(c[2])]).collect();
        Ok(Self { mesh, values, curve_hash: s.curve_hash.clone() })
    }
}

pub const SNAPSHOT_FORMAT: &str = "dcone-field-v1";

/// Field snapshot: small header plus the flat `3 × nodes` value array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub format: String,
    pub n_r: usize,
    pub n_theta: usize,
    pub grading: crate::mesh::Grading,
    pub mesh_h: f64,
    pub curve_hash: String,
    pub values: Vec<f64>,
}

/// `C²` blend with `φ(t) = 0` for `t <= 1/2` and `φ(t) = t` for `t >= 1`.
pub fn blend(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        t
    } else {
        let s = 2.0 * (t - 0.5);
        s * s * s * (8.0 - 11.5 * s + 4.5 * s * s)
    }
}

/// The competitor `y_h(x) = h φ(|x|/h) γ(x/|x|)`, equal to the cone outside `B_h`.
pub fn upper_bound_profile<T: Real>(curve: &BoundaryCurve<T>, h: f64, mesh: Arc<PolarMesh<T>>) -> Result<Field<T>> {
    if !(h > 0.0 && h < 0.25) {
        return Err(Error::InvalidParameter(format!("profile needs 0 < h < 1/4, got {h}")));
    }
    if mesh.radii_f64()[1] > 0.5 * h * (1.0 + 1e-12) {
        return Err(Error::InfeasibleMesh(format!(
            "innermost ring {} does not resolve B_(h/2) for h = {h}",
            mesh.radii_f64()[1]
        )));
    }
    Field::from_fn(mesh, curve, |r, _, g| {
        let rf = r.to_f64_lossy();
        let scale = if rf >= h { r } else { T::lit(h * blend(rf / h)) };
        [scale * g[0], scale * g[1], scale * g[2]]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusEnergy {
    pub j: u32,
    pub outer_radius: f64,
    pub membrane: f64,
    pub bending: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreEnergy {
    pub radius: f64,
    pub membrane: f64,
    pub bending: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub h: f64,
    /// `∫ |∇yᵀ∇y − Id|²`
    pub membrane: f64,
    /// `∫ |∇²y|²`
    pub bending: f64,
    /// `membrane + h² bending`
    pub total: f64,
    pub per_annulus: Vec<AnnulusEnergy>,
    pub core: CoreEnergy,
}

/// Dyadic cutoff `M = ⌈log₂(1/h) − log₂ ln(1/h)⌉`.
pub fn dyadic_cutoff(h: f64) -> u32 {
    let l = (1.0 / h).ln();
    ((1.0 / h).log2() - l.log2()).ceil().max(1.0) as u32
}

/// Angular sums of the two densities on each ring (index `ring - 1`).
#[derive(Debug, Clone)]
pub struct RingSums {
    pub membrane: Vec<f64>,
    pub bending: Vec<f64>,
}

struct Densities<T: Real> {
    membrane: T,
    bending: T,
}

#[inline]
fn node_density<T: Real>(d: &RingDerivs<T, 3>, k: usize, r: T) -> Densities<T> {
    let inv_r = T::one() / r;
    let a = d.r[k];
    let b = [d.t[k][0] * inv_r, d.t[k][1] * inv_r, d.t[k][2] * inv_r];
    let aa = dot(&a, &a) - T::one();
    let ab = dot(&a, &b);
    let bb = dot(&b, &b) - T::one();
    let membrane = aa * aa + T::lit(2.0) * ab * ab + bb * bb;
    let mut bending = T::zero();
    for c in 0..3 {
        let hrr = d.rr[k][c];
        let hrt = d.rt[k][c] * inv_r - d.t[k][c] * inv_r * inv_r;
        let htt = d.tt[k][c] * inv_r * inv_r + d.r[k][c] * inv_r;
        bending += hrr * hrr + T::lit(2.0) * hrt * hrt + htt * htt;
    }
    Densities { membrane, bending }
}

/// Energy evaluator for one mesh and one thickness.
#[derive(Debug, Clone)]
pub struct EnergyAssembler<T: Real> {
    pub mesh: Arc<PolarMesh<T>>,
    pub h: f64,
    ops: PolarOperators<T>,
    big_m: u32,
    annulus_weights: Vec<(u32, f64, Vec<f64>)>,
    core_weights: (f64, Vec<f64>),
}

impl<T: Real> EnergyAssembler<T> {
    pub fn new(mesh: Arc<PolarMesh<T>>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.25) {
            return Err(Error::InvalidParameter(format!("energy needs 0 < h < 1/4, got {h}")));
        }
        let mesh_h = mesh.h.to_f64_lossy();
        if mesh_h > h * (1.0 + 1e-12) && mesh.spec.grading == crate::mesh::Grading::Geometric {
            return Err(Error::Mismatch(format!("mesh was graded for h = {mesh_h}, coarser than {h}")));
        }
        let r_min = mesh.radii_f64()[1];
        let mut big_m = dyadic_cutoff(h);
        while big_m > 0 && 2f64.powi(-(big_m as i32)) < r_min * (1.0 - 1e-12) {
            big_m -= 1;
        }
        let mut annulus_weights = Vec::new();
        for j in 0..big_m {
            let outer = 2f64.powi(-(j as i32));
            let w = mesh.region_radial_weights(&Region::dyadic(outer))?;
            annulus_weights.push((j, outer, w.iter().map(|x| x.to_f64_lossy()).collect()));
        }
        let core_radius = 2f64.powi(-(big_m as i32));
        let core = mesh
            .region_radial_weights(&Region::Disk { radius: core_radius })?
            .iter()
            .map(|x| x.to_f64_lossy())
            .collect();
        Ok(Self {
            ops: PolarOperators::new(&mesh),
            mesh,
            h,
            big_m,
            annulus_weights,
            core_weights: (core_radius, core),
        })
    }

    pub fn big_m(&self) -> u32 {
        self.big_m
    }

    pub fn operators(&self) -> &PolarOperators<T> {
        &self.ops
    }

    fn check_field(&self, y: &Field<T>) -> Result<()> {
        if !Arc::ptr_eq(&y.mesh, &self.mesh) && *y.mesh != *self.mesh {
            return Err(Error::Mismatch("field lives on a different mesh".into()));
        }
        Ok(())
    }

    /// Angular sums of the densities per ring.
    pub fn ring_sums(&self, values: &[Vec3<T>]) -> RingSums {
        let derivs = self.ops.derivatives(values);
        let sums: Vec<(f64, f64)> = derivs
            .par_iter()
            .enumerate()
            .map(|(idx, d)| {
                let r = self.mesh.radii[idx + 1];
                let mut m = T::zero();
                let mut b = T::zero();
                for k in 0..self.mesh.n_theta() {
                    let dens = node_density(d, k, r);
                    m += dens.membrane;
                    b += dens.bending;
                }
                (m.to_f64_lossy(), b.to_f64_lossy())
            })
            .collect();
        RingSums { membrane: sums.iter().map(|s| s.0).collect(), bending: sums.iter().map(|s| s.1).collect() }
    }

    fn integrate_sums(&self, sums: &RingSums, radial: &[f64]) -> (f64, f64) {
        let dtheta = self.mesh.dtheta.to_f64_lossy();
        let radii = self.mesh.radii_f64();
        let mut m = 0.0;
        let mut b = 0.0;
        for ring in 1..radial.len() {
            let w = radial[ring] * radii[ring] * dtheta;
            m += w * sums.membrane[ring - 1];
            b += w * sums.bending[ring - 1];
        }
        (m, b)
    }

    pub fn breakdown_from_sums(&self, sums: &RingSums) -> EnergyBreakdown {
        let full: Vec<f64> = self.mesh.radial_weights.iter().map(|w| w.to_f64_lossy()).collect();
        let (membrane, bending) = self.integrate_sums(sums, &full);
        let per_annulus = self
            .annulus_weights
            .iter()
            .map(|(j, outer, w)| {
                let (m, b) = self.integrate_sums(sums, w);
                AnnulusEnergy { j: *j, outer_radius: *outer, membrane: m, bending: b }
            })
            .collect();
        let (cm, cb) = self.integrate_sums(sums, &self.core_weights.1);
        EnergyBreakdown {
            h: self.h,
            membrane,
            bending,
            total: membrane + self.h * self.h * bending,
            per_annulus,
            core: CoreEnergy { radius: self.core_weights.0, membrane: cm, bending: cb },
        }
    }

    pub fn assemble(&self, y: &Field<T>) -> Result<EnergyBreakdown> {
        self.check_field(y)?;
        Ok(self.breakdown_from_sums(&self.ring_sums(&y.values)))
    }

    /// `(membrane, bending)` integrated over an arbitrary region.
    pub fn region_energy(&self, y: &Field<T>, region: &Region) -> Result<(f64, f64)> {
        self.check_field(y)?;
        let w: Vec<f64> = self.mesh.region_radial_weights(region)?.iter().map(|x| x.to_f64_lossy()).collect();
        Ok(self.integrate_sums(&self.ring_sums(&y.values), &w))
    }

    /// `(membrane, bending)` of the field restricted to `inner <= r <= outer`, where both radii are rings
    /// (or `inner = 0`). Radial stencils and interpolants read only rings inside the range, so the
    /// result depends on the nodal values there alone.
    pub fn restricted_energy(&self, y: &Field<T>, inner: f64, outer: f64) -> Result<(f64, f64)> {
        self.check_field(y)?;
        let lo = if inner == 0.0 { Some(0) } else { self.mesh.ring_at(inner) };
        let hi = self.mesh.ring_at(outer);
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return Err(Error::UnresolvableRegion(format!("({inner}, {outer}) does not end on rings")));
        };
        if hi < lo + 3 {
            return Err(Error::UnresolvableRegion(format!("({inner}, {outer}) spans fewer than four rings")));
        }
        let ops = PolarOperators::confined(&self.mesh, lo, hi);
        let radii = self.mesh.radii_f64();
        let w = crate::mesh::interpolant_weights(radii, inner, outer, lo, hi);
        let dtheta = self.mesh.dtheta.to_f64_lossy();
        let parts: Vec<(f64, f64)> = (lo.max(1)..=hi)
            .into_par_iter()
            .map(|ring| {
                let d = ops.ring_derivatives(&y.values, ring);
                let r = self.mesh.radii[ring];
                let (mut m, mut b) = (T::zero(), T::zero());
                for k in 0..self.mesh.n_theta() {
                    let dens = node_density(&d, k, r);
                    m += dens.membrane;
                    b += dens.bending;
                }
                let wr = w[ring] * radii[ring] * dtheta;
                (wr * m.to_f64_lossy(), wr * b.to_f64_lossy())
            })
            .collect();
        Ok(parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1)))
    }

    /// Total energy `E_h` scaled by `scale` and its exact gradient with respect to all nodal values.
    /// Constrained (boundary and center) entries of the gradient are zero.
    pub fn value_and_gradient(&self, values: &[Vec3<T>], scale: T) -> (T, Vec<Vec3<T>>) {
        let h2 = T::lit(self.h * self.h);
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let n = self.mesh.n_theta();
        let derivs = self.ops.derivatives(values);
        let results: Vec<(T, RingDerivs<T, 3>)> = derivs
            .par_iter()
            .enumerate()
            .map(|(idx, d)| {
                let ring = idx + 1;
                let r = self.mesh.radii[ring];
                let w = self.mesh.ring_weight(ring) * scale;
                let inv_r = T::one() / r;
                let mut cot = RingDerivs::zeros(n);
                let mut acc = T::zero();
                for k in 0..n {
                    let dens = node_density(d, k, r);
                    acc += dens.membrane + h2 * dens.bending;
                    let a = d.r[k];
                    let b = [d.t[k][0] * inv_r, d.t[k][1] * inv_r, d.t[k][2] * inv_r];
                    let aa = dot(&a, &a) - T::one();
                    let ab = dot(&a, &b);
                    let bb = dot(&b, &b) - T::one();
                    let wb = w * h2;
                    for c in 0..3 {
                        let dm_da = four * (aa * a[c] + ab * b[c]);
                        let dm_db = four * (bb * b[c] + ab * a[c]);
                        let hrr = d.rr[k][c];
                        let hrt = d.rt[k][c] * inv_r - d.t[k][c] * inv_r * inv_r;
                        let htt = d.tt[k][c] * inv_r * inv_r + d.r[k][c] * inv_r;
                        cot.r[k][c] = w * dm_da + wb * two * htt * inv_r;
                        cot.t[k][c] = w * dm_db * inv_r - wb * four * hrt * inv_r * inv_r;
                        cot.rr[k][c] = wb * two * hrr;
                        cot.rt[k][c] = wb * four * hrt * inv_r;
                        cot.tt[k][c] = wb * two * htt * inv_r * inv_r;
                    }
                }
                (acc * self.mesh.ring_weight(ring) * scale, cot)
            })
            .collect();
        let total = results.iter().fold(T::zero(), |s, (e, _)| s + *e);
        let cot: Vec<RingDerivs<T, 3>> = results.into_iter().map(|(_, c)| c).collect();
        let mut grad = self.ops.adjoint(&cot);
        grad[0] = [T::zero(); 3];
        let n_r = self.mesh.n_r();
        for k in 0..n {
            grad[self.mesh.node(n_r, k)] = [T::zero(); 3];
        }
        (total, grad)
    }
}

pub fn assemble_energy<T: Real>(y: &Field<T>, h: f64) -> Result<EnergyBreakdown> {
    EnergyAssembler::new(y.mesh.clone(), h)?.assemble(y)
}

/// Gradient of the discrete `E_h` with respect to the nodal values (zero on constrained nodes).
pub fn energy_gradient<T: Real>(y: &Field<T>, h: f64) -> Result<Field<T>> {
    let asm = EnergyAssembler::new(y.mesh.clone(), h)?;
    let (_, g) = asm.value_and_gradient(&y.values, T::one());
    Ok(Field { mesh: y.mesh.clone(), values: g, curve_hash: y.curve_hash.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::c1_constant;
    use crate::curve::{make_equator, CurveSpec};
    use crate::mesh::MeshSpec;

    fn setup(n_r: usize, n_theta: usize, h: f64) -> (Arc<PolarMesh<f64>>, BoundaryCurve<f64>) {
        let mesh = Arc::new(build_mesh::<f64>(MeshSpec::geometric(n_r, n_theta), h).unwrap());
        let curve = CurveSpec::latitude_wave(0.2, 3, n_theta).build().unwrap();
        (mesh, curve)
    }

    #[test]
    fn blend_plateaus_and_smoothness() {
        assert_eq!(blend(0.3), 0.0);
        assert_eq!(blend(0.5), 0.0);
        assert_eq!(blend(1.0), 1.0);
        assert_eq!(blend(1.7), 1.7);
        let d = 1e-5;
        let d1 = (blend(1.0) - blend(1.0 - d)) / d;
        assert!((d1 - 1.0).abs() < 1e-4);
        let d2 = (blend(1.0) - 2.0 * blend(1.0 - d) + blend(1.0 - 2.0 * d)) / (d * d);
        assert!(d2.abs() < 1e-2);
    }

    #[test]
    fn flat_field_has_zero_energy() {
        let h = 2f64.powi(-6);
        let mesh = Arc::new(build_mesh::<f64>(MeshSpec::geometric(64, 128), h).unwrap());
        let eq = make_equator::<f64>(128).unwrap();
        let flat = Field::cone(mesh, &eq).unwrap();
        let e = assemble_energy(&flat, h).unwrap();
        assert!(e.membrane < 1e-24 && e.bending < 1e-20, "{e:?}");
        let g = energy_gradient(&flat, h).unwrap();
        let gmax = g.values.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(gmax < 1e-9, "{gmax}");
    }

    #[test]
    fn perturbed_flat_field_stretches() {
        let h = 2f64.powi(-6);
        let mesh = Arc::new(build_mesh::<f64>(MeshSpec::geometric(64, 128), h).unwrap());
        let eq = make_equator::<f64>(128).unwrap();
        let mut y = Field::cone(mesh.clone(), &eq).unwrap();
        for n in 0..y.values.len() {
            if !mesh.is_constrained(n) {
                y.values[n][0] += 1e-3 * ((n * 37 % 11) as f64 - 5.0) / 5.0;
            }
        }
        assert!(assemble_energy(&y, h).unwrap().membrane > 0.0);
    }

    #[test]
    fn cone_samples_reproduce_c1() {
        let h = 2f64.powi(-6);
        let (mesh, curve) = setup(96, 192, h);
        let c1 = c1_constant(&curve).unwrap().c1;
        let cone = Field::cone(mesh, &curve).unwrap();
        let asm = EnergyAssembler::new(cone.mesh.clone(), h).unwrap();
        let (m, b) = asm.region_energy(&cone, &Region::dyadic(1.0)).unwrap();
        assert!(((b - c1 * 2f64.ln()) / (c1 * 2f64.ln())).abs() < 1e-2, "{b} vs {}", c1 * 2f64.ln());
        assert!(m < 1e-8 * b, "{m}");
    }

    #[test]
    fn breakdown_is_additive() {
        let h = 2f64.powi(-5);
        let (mesh, curve) = setup(64, 128, h);
        let y = upper_bound_profile(&curve, h, mesh).unwrap();
        let e = assemble_energy(&y, h).unwrap();
        let m: f64 = e.per_annulus.iter().map(|a| a.membrane).sum::<f64>() + e.core.membrane;
        let b: f64 = e.per_annulus.iter().map(|a| a.bending).sum::<f64>() + e.core.bending;
        assert!(((m - e.membrane) / e.membrane).abs() < 1e-12);
        assert!(((b - e.bending) / e.bending).abs() < 1e-12);
    }

    #[test]
    fn profile_plateaus() {
        let h = 2f64.powi(-5);
        let (mesh, curve) = setup(64, 128, h);
        let y = upper_bound_profile(&curve, h, mesh.clone()).unwrap();
        y.check_constraints(&curve).unwrap();
        for n in 1..mesh.num_nodes() {
            let (r, _) = mesh.position(n);
            let k = mesh.angle_index(n);
            if r >= h {
                for c in 0..3 {
                    assert_eq!(y.values[n][c], r * curve.gamma[k][c]);
                }
            } else if r <= h / 2.0 {
                assert_eq!(y.values[n], [0.0; 3]);
            }
        }
    }

    #[test]
    fn profile_rejects_coarse_mesh() {
        let mesh = Arc::new(build_mesh::<f64>(MeshSpec::uniform(64, 128), 0.1).unwrap());
        let curve = CurveSpec::latitude_wave(0.2, 3, 128).build().unwrap();
        assert!(upper_bound_profile(&curve, 2f64.powi(-6), mesh).is_err());
    }

    #[test]
    fn mismatched_curve_rejected() {
        let (mesh, _) = setup(64, 128, 0.05);
        let curve = CurveSpec::latitude_wave(0.2, 3, 96).build().unwrap();
        assert!(matches!(Field::cone(mesh, &curve), Err(Error::Mismatch(_))));
    }

    #[test]
    fn directional_derivative_matches_central_difference() {
        let h = 2f64.powi(-4);
        let (mesh, curve) = setup(40, 64, h);
        let mut y = upper_bound_profile(&curve, h, mesh.clone()).unwrap();
        for n in 0..y.values.len() {
            if !mesh.is_constrained(n) {
                for c in 0..3 {
                    y.values[n][c] += 0.01 * ((n * 13 + c * 7) as f64).sin();
                }
            }
        }
        let asm = EnergyAssembler::new(mesh.clone(), h).unwrap();
        let (_, g) = asm.value_and_gradient(&y.values, 1.0);
        let v: Vec<Vec3<f64>> = (0..y.values.len())
            .map(|n| if mesh.is_constrained(n) { [0.0; 3] } else { [((n * 3) as f64).cos(), ((n * 5) as f64).sin(), 0.5] })
            .collect();
        let t = 1e-5;
        let shifted = |s: f64| -> f64 {
            let vals: Vec<Vec3<f64>> =
                y.values.iter().zip(&v).map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]).collect();
            asm.value_and_gradient(&vals, 1.0).0
        };
        let fd = (shifted(t) - shifted(-t)) / (2.0 * t);
        let an: f64 = g.iter().zip(&v).map(|(a, b)| dot(a, b)).sum();
        assert!(((fd - an) / an).abs() < 1e-6, "{fd} vs {an}");
    }

    #[test]
    fn restricted_energy_of_profile_is_the_cone() {
        let h = 2f64.powi(-6);
        let (mesh, curve) = setup(96, 192, h);
        let c1 = c1_constant(&curve).unwrap().c1;
        let y = upper_bound_profile(&curve, h, mesh.clone()).unwrap();
        let asm = EnergyAssembler::new(mesh, h).unwrap();
        let (m, b) = asm.restricted_energy(&y, h, 1.0).unwrap();
        assert!(m < 1e-20, "{m}");
        let want = c1 * (1.0 / h).ln();
        assert!(((b - want) / want).abs() < 1e-2, "{b} vs {want}");
        let (mf, _) = asm.restricted_energy(&y, 0.0, 1.0).unwrap();
        let e = asm.assemble(&y).unwrap();
        assert!(((mf - e.membrane) / e.membrane).abs() < 1e-12);
        assert!(asm.restricted_energy(&y, 0.3, 1.0).is_err());
    }

    #[test]
    fn frame_invariance() {
        let h = 2f64.powi(-5);
        let (mesh, curve) = setup(48, 128, h);
        let y = upper_bound_profile(&curve, h, mesh.clone()).unwrap();
        let (a, b) = (0.7f64, -1.3f64);
        let q = [
            [a.cos(), -a.sin() * b.cos(), a.sin() * b.sin()],
            [a.sin(), a.cos() * b.cos(), -a.cos() * b.sin()],
            [0.0, b.sin(), b.cos()],
        ];
        let mut z = y.clone();
        for v in z.values.iter_mut() {
            *v = crate::scalar::mat_vec(&q, v);
        }
        let e0 = assemble_energy(&y, h).unwrap();
        let e1 = assemble_energy(&z, h).unwrap();
        assert!(((e0.membrane - e1.membrane) / e0.membrane).abs() < 1e-12);
        assert!(((e0.bending - e1.bending) / e0.bending).abs() < 1e-12);
    }

    #[test]
    fn single_precision_assembly() {
        let h = 2f64.powi(-4);
        let mesh = Arc::new(build_mesh::<f32>(MeshSpec::geometric(40, 64), h).unwrap());
        let curve = CurveSpec::latitude_wave(0.2, 3, 64).build::<f32>().unwrap();
        let y = upper_bound_profile(&curve, h, mesh).unwrap();
        let e32 = assemble_energy(&y, h).unwrap();
        let (mesh64, curve64) = setup(40, 64, h);
        let e64 = assemble_energy(&upper_bound_profile(&curve64, h, mesh64).unwrap(), h).unwrap();
        assert!(((e32.total - e64.total) / e64.total).abs() < 1e-3, "{} vs {}", e32.total, e64.total);
    }

    #[test]
    fn snapshot_round_trip() {
        let h = 2f64.powi(-5);
        let (mesh, curve) = setup(48, 64, h);
        let y = upper_bound_profile(&curve, h, mesh).unwrap();
        let json = serde_json::to_string(&y.snapshot()).unwrap();
        let back: Field<f64> = Field::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.values, y.values);
        assert_eq!(back.curve_hash, y.curve_hash);
    }
}
