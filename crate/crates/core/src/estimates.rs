//! L² norms, seminorms and traces of nodal fields over disks, annuli and the unit circle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::Field;
use crate::error::{Error, Result};
use crate::mesh::{interpolant_weights, PolarMesh, Region};
use crate::polar::PolarOperators;
use crate::scalar::Real;

/// One value per mesh node, indexed like [`Field`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T: Real> {
    pub mesh: Arc<PolarMesh<T>>,
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    /// Samples `f(r, θ)` at every node (the center sees `r = 0, θ = 0`).
    pub fn from_fn(mesh: Arc<PolarMesh<T>>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let values: Vec<T> = (0..mesh.num_nodes())
            .map(|n| {
                let (r, t) = mesh.position(n);
                f(r, t)
            })
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field sample".into()));
        }
        Ok(Self { mesh, values })
    }

    /// Component `c` of a vector field.
    pub fn component(field: &Field<T>, c: usize) -> Self {
        Self { mesh: field.mesh.clone(), values: field.values.iter().map(|v| v[c]).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub grad_l2: f64,
    pub hess_l2: f64,
    /// L² norm over the boundary circles of the region (arc-length measure).
    pub trace_l2: f64,
}

impl Norms {
    pub fn w12(&self) -> f64 {
        (self.l2 * self.l2 + self.grad_l2 * self.grad_l2).sqrt()
    }
}

fn ring_or_err<T: Real>(mesh: &PolarMesh<T>, r: f64) -> Result<usize> {
    mesh.ring_at(r).ok_or_else(|| Error::UnresolvableRegion(format!("no ring at r = {r}")))
}

/// Squared norms of a `D`-component nodal field over `region`.
fn squared_norms<T: Real, const D: usize>(mesh: &PolarMesh<T>, values: &[[T; D]], region: &Region) -> Result<[f64; 4]> {
    let n = mesh.n_theta();
    let dtheta = mesh.dtheta.to_f64_lossy();
    let radii = mesh.radii_f64();
    let circle = |ring: usize| -> f64 {
        let r = radii[ring];
        let mut s = 0.0;
        for k in 0..n {
            for c in 0..D {
                let v = values[mesh.node(ring, k)][c].to_f64_lossy();
                s += v * v;
            }
        }
        s * r * dtheta
    };
    if let Region::Boundary = region {
        let ring = mesh.n_r();
        let ops = PolarOperators::new(mesh);
        let d = ops.ring_derivatives(values, ring);
        let (mut g, mut hh) = (0.0, 0.0);
        for k in 0..n {
            for c in 0..D {
                g += d.t[k][c].to_f64_lossy().powi(2);
                hh += d.tt[k][c].to_f64_lossy().powi(2);
            }
        }
        let t = circle(ring);
        return Ok([t, g * dtheta, hh * dtheta, t]);
    }
    let weights = mesh.region_radial_weights(region)?;
    let (a, b) = region.radial_range();
    let lo = if a == 0.0 { Some(0) } else { mesh.ring_at(a) };
    let hi = mesh.ring_at(b.min(1.0));
    // Regions bounded by rings use stencils that stay inside the region.
    let (ops, weights): (PolarOperators<T>, Vec<f64>) = match (lo, hi) {
        (Some(lo), Some(hi)) if hi >= lo + 3 => {
            (PolarOperators::confined(mesh, lo, hi), interpolant_weights(radii, a, b.min(1.0), lo, hi))
        }
        _ => (PolarOperators::new(mesh), weights.iter().map(|w| w.to_f64_lossy()).collect()),
    };
    let mut acc = [0.0; 4];
    for ring in 1..=mesh.n_r() {
        if weights[ring] == 0.0 {
            continue;
        }
        let d = ops.ring_derivatives(values, ring);
        let r = mesh.radii[ring];
        let inv_r = T::one() / r;
        let (mut l, mut g, mut hh) = (0.0, 0.0, 0.0);
        for k in 0..n {
            for c in 0..D {
                let v = d.value[k][c];
                let yr = d.r[k][c];
                let yt = d.t[k][c] * inv_r;
                let hrr = d.rr[k][c];
                let hrt = d.rt[k][c] * inv_r - d.t[k][c] * inv_r * inv_r;
                let htt = d.tt[k][c] * inv_r * inv_r + d.r[k][c] * inv_r;
                l += (v * v).to_f64_lossy();
                g += (yr * yr + yt * yt).to_f64_lossy();
                hh += (hrr * hrr + T::lit(2.0) * hrt * hrt + htt * htt).to_f64_lossy();
            }
        }
        let w = weights[ring] * radii[ring] * dtheta;
        acc[0] += w * l;
        acc[1] += w * g;
        acc[2] += w * hh;
    }
    let mut trace = 0.0;
    if b > 0.0 {
        trace += circle(ring_or_err(mesh, b.min(1.0))?);
    }
    if a > 0.0 {
        trace += circle(ring_or_err(mesh, a)?);
    }
    acc[3] = trace;
    Ok(acc)
}

fn to_norms(sq: [f64; 4]) -> Norms {
    Norms { l2: sq[0].max(0.0).sqrt(), grad_l2: sq[1].max(0.0).sqrt(), hess_l2: sq[2].max(0.0).sqrt(), trace_l2: sq[3].max(0.0).sqrt() }
}

pub fn norms<T: Real>(f: &ScalarField<T>, region: &Region) -> Result<Norms> {
    let values: Vec<[T; 1]> = f.values.iter().map(|&v| [v]).collect();
    squared_norms(&f.mesh, &values, region).map(to_norms)
}

/// Norms of a vector field (Euclidean in the components).
pub fn field_norms<T: Real>(f: &Field<T>, region: &Region) -> Result<Norms> {
    squared_norms(&f.mesh, &f.values, region).map(to_norms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRatios {
    /// `‖v‖²_{L²(∂Ω)} / (‖v‖_{L²} ‖v‖_{W^{1,2}})`
    pub trace_ratio: f64,
    /// `‖∇v‖² / (‖v‖² + ‖v‖ ‖∇²v‖)`
    pub grad_ratio: f64,
}

pub fn interpolation_ratio<T: Real>(f: &ScalarField<T>, region: &Region) -> Result<InterpolationRatios> {
    let n = norms(f, region)?;
    if !(n.l2 > 0.0) {
        return Err(Error::Degenerate("field vanishes on the region".into()));
    }
    Ok(InterpolationRatios {
        trace_ratio: n.trace_l2 * n.trace_l2 / (n.l2 * n.w12()),
        grad_ratio: n.grad_l2 * n.grad_l2 / (n.l2 * n.l2 + n.l2 * n.hess_l2),
    })
}

fn lagrange4(xs: [f64; 4], x: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                w[a] *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
    }
    w
}

/// Bicubic (radial and angular cubic Lagrange) interpolation of nodal values at `(r, θ)`.
pub fn sample_bicubic<T: Real, const D: usize>(mesh: &PolarMesh<T>, values: &[[T; D]], r: f64, theta: f64) -> Result<[f64; D]> {
    if !(0.0..=1.0 + 1e-12).contains(&r) {
        return Err(Error::UnresolvableRegion(format!("r = {r} is outside the disk")));
    }
    let radii = mesh.radii_f64();
    let n = mesh.n_theta();
    let dt = std::f64::consts::TAU / n as f64;
    let t0 = mesh.angles[0].to_f64_lossy();
    let j = radii.partition_point(|&x| x < r).clamp(2, radii.len() - 2);
    let rings = [j - 2, j - 1, j, j + 1];
    let wr = lagrange4(rings.map(|i| radii[i]), r);
    let u = (theta - t0).rem_euclid(std::f64::consts::TAU) / dt;
    let k1 = u.floor() as isize;
    let wt = lagrange4([-1.0, 0.0, 1.0, 2.0], u - k1 as f64);
    let mut out = [0.0; D];
    for (a, &ring) in rings.iter().enumerate() {
        for (b, off) in (-1isize..=2).enumerate() {
            let k = (k1 + off).rem_euclid(n as isize) as usize;
            let v = &values[mesh.node(ring, k)];
            let w = wr[a] * wt[b];
            for c in 0..D {
                out[c] += w * v[c].to_f64_lossy();
            }
        }
    }
    Ok(out)
}

/// `ê(x) = e(r₀ x) / r₀` sampled on the nodes of `target` with `|x| ≤ 1` (only nodes with
/// `r₀|x|` inside the source disk are meaningful; the rest are filled from the boundary ring).
pub fn rescale<T: Real>(e: &Field<T>, r0: f64, target: Arc<PolarMesh<T>>) -> Result<Field<T>> {
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("rescaling radius {r0} outside (0, 1]")));
    }
    let mut values = Vec::with_capacity(target.num_nodes());
    for n in 0..target.num_nodes() {
        let (r, t) = target.position(n);
        let s = sample_bicubic(&e.mesh, &e.values, r0 * r.to_f64_lossy(), t.to_f64_lossy())?;
        values.push(s.map(|x| T::lit(x / r0)));
    }
    Ok(Field { mesh: target, values, curve_hash: e.curve_hash.clone() })
}
