//! Scaling fits over h-sweeps and diagnostics evaluated on computed minimizers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::BoundaryCurve;
use crate::energy::{dyadic_cutoff, Field};
use crate::error::{Error, Result};
use crate::estimates::{field_norms, interpolation_ratio, norms, ScalarField};
use crate::mesh::{PolarMesh, Region};
use crate::polar::PolarOperators;
use crate::scalar::{norm_sq, Real};
use crate::solve::{SolveResult, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Least-squares slope of `E/h²` against `ln(1/h)`.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub n_points: usize,
    pub c1_reference: f64,
    /// `|slope − C₁| / C₁`
    pub relative_slope_gap: f64,
}

/// OLS fit of `e_over_h2` against `ln(1/h)` for `(h, E/h²)` pairs.
pub fn fit_points(points: &[(f64, f64)], c1: f64) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!("{} points, need at least 4", points.len())));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0 && h < 1.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter("points need 0 < h < 1 and finite energies".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (1.0 / p.0).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all h values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let hs = points.iter().map(|p| p.0);
    Ok(ScalingFit {
        slope,
        intercept,
        residual_rms: (rss / n).sqrt(),
        h_min: hs.clone().fold(f64::INFINITY, f64::min),
        h_max: hs.fold(0.0, f64::max),
        n_points: points.len(),
        c1_reference: c1,
        relative_slope_gap: if c1 != 0.0 { (slope - c1).abs() / c1.abs() } else { slope.abs() },
    })
}

/// Fit over gradient-converged results; solves that hit the iteration cap are left out.
pub fn fit_log_scaling<T: Real>(results: &[SolveResult<T>], c1: f64) -> Result<ScalingFit> {
    let points: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.termination == Termination::Converged)
        .map(|r| (r.h, r.energy() / (r.h * r.h)))
        .collect();
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} converged results out of {}, need at least 4",
            points.len(),
            results.len()
        )));
    }
    fit_points(&points, c1)
}

/// `e = y − ỹ` at the nodes of `y`'s mesh.
pub fn deviation_field<T: Real>(y: &Field<T>, curve: &BoundaryCurve<T>) -> Result<Field<T>> {
    let cone = Field::cone(y.mesh.clone(), curve)?;
    if y.curve_hash != cone.curve_hash {
        return Err(Error::Mismatch("field was built for a different curve".into()));
    }
    let values = y
        .values
        .iter()
        .zip(&cone.values)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
        .collect();
    Ok(Field { mesh: y.mesh.clone(), values, curve_hash: y.curve_hash.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusDeviation {
    pub j: u32,
    pub r0: f64,
    /// `∫_{A_{r₀}} |y − ỹ|²`
    pub l2_sq: f64,
    /// `r₀³ h ln(1/h) + r₀² h² ln²(1/h)`
    pub bound: f64,
    pub ratio: f64,
    /// `l2_sq / (r₀³ h ln(1/h))`
    pub leading_ratio: f64,
    /// `r₀ ≥ h ln(1/h)`
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaDiagnostics {
    pub h: f64,
    pub sup_core: f64,
    /// `(sup_{B_h}|y| − h) / (h (ln 1/h)^{1/2} ‖∇²y‖_{L²(B₁)})`
    pub sup_ratio: f64,
    pub hess_l2: f64,
    pub annulus_l2: Vec<AnnulusDeviation>,
    /// `E/h² − C₁ ln(1/h)`
    pub upper_excess: f64,
    /// `E/h² − C₁ ln(1/h) + C₁ ln ln(1/h)`
    pub excess: f64,
    pub membrane: f64,
    pub big_m: u32,
}

pub fn lemma_diagnostics<T: Real>(result: &SolveResult<T>, curve: &BoundaryCurve<T>, c1: f64) -> Result<LemmaDiagnostics> {
    let h = result.h;
    let y = &result.field;
    let mesh = &y.mesh;
    let l = (1.0 / h).ln();
    let core = mesh.ball_nodes(h);
    if core.len() <= 1 {
        return Err(Error::UnresolvableRegion(format!("B_h holds no ring for h = {h}")));
    }
    let sup_core = core
        .iter()
        .map(|&n| norm_sq(&y.values[n]).to_f64_lossy().sqrt())
        .fold(0.0f64, f64::max);
    let hess_l2 = field_norms(y, &Region::unit_disk())?.hess_l2;
    let num = sup_core - h;
    let sup_ratio = if hess_l2 > 0.0 { num / (h * l.sqrt() * hess_l2) } else { 0.0 };
    let e = deviation_field(y, curve)?;
    let r_min = mesh.radii_f64()[1];
    let mut annulus_l2 = Vec::new();
    let mut j = 0u32;
    loop {
        let r0 = 2f64.powi(-(j as i32));
        if 0.5 * r0 < r_min * (1.0 - 1e-12) {
            break;
        }
        let l2 = field_norms(&e, &Region::dyadic(r0))?.l2;
        let l2_sq = l2 * l2;
        let bound = r0.powi(3) * h * l + r0 * r0 * h * h * l * l;
        annulus_l2.push(AnnulusDeviation {
            j,
            r0,
            l2_sq,
            bound,
            ratio: l2_sq / bound,
            leading_ratio: l2_sq / (r0.powi(3) * h * l),
            in_range: r0 >= h * l,
        });
        j += 1;
    }
    let e_h2 = result.energy() / (h * h);
    Ok(LemmaDiagnostics {
        h,
        sup_core,
        sup_ratio,
        hess_l2,
        annulus_l2,
        upper_excess: e_h2 - c1 * l,
        excess: e_h2 - c1 * l + c1 * l.ln(),
        membrane: result.breakdown.membrane,
        big_m: dyadic_cutoff(h),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftFamily {
    /// `ln(1 / max(|x|, δ))`
    SaturatedLog,
    Constant,
    X1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub family: DriftFamily,
    pub eps: f64,
    pub drift: f64,
    pub grad_l2: f64,
    /// `|avg_{B_ε} w − avg_{B₁} w| / ((ln 1/ε)^{1/2} ‖∇w‖)`
    pub ratio: f64,
    /// Closed-form value of `ratio` (saturated log only).
    pub exact_ratio: Option<f64>,
}

fn disk_average<T: Real>(f: &ScalarField<T>, radius: f64) -> Result<f64> {
    let mesh = &f.mesh;
    let w = mesh.region_radial_weights(&Region::Disk { radius })?;
    let dtheta = mesh.dtheta.to_f64_lossy();
    let radii = mesh.radii_f64();
    let (mut s, mut area) = (0.0, 0.0);
    for ring in 1..=mesh.n_r() {
        let wr = w[ring].to_f64_lossy() * radii[ring] * dtheta;
        if wr == 0.0 {
            continue;
        }
        let mut ring_sum = 0.0;
        for k in 0..mesh.n_theta() {
            ring_sum += f.values[mesh.node(ring, k)].to_f64_lossy();
        }
        s += wr * ring_sum;
        area += wr * mesh.n_theta() as f64;
    }
    Ok(s / area)
}

/// Mean-drift ratios for the saturated logarithm (cutoff `delta`) and two controls.
pub fn probe_mean_drift<T: Real>(eps_list: &[f64], delta: f64, mesh: Arc<PolarMesh<T>>) -> Result<Vec<DriftRow>> {
    let r_min = mesh.radii_f64()[1];
    if let Some(&e) = eps_list.iter().find(|&&e| !(e > 0.0 && e < 1.0) || e < r_min) {
        return Err(Error::UnresolvableRegion(format!("ε = {e} is outside (r_min = {r_min}, 1)")));
    }
    let families = [DriftFamily::SaturatedLog, DriftFamily::Constant, DriftFamily::X1];
    let mut rows = Vec::new();
    for family in families {
        let f = ScalarField::from_fn(mesh.clone(), |r, t| match family {
            DriftFamily::SaturatedLog => (T::one() / r.max(T::lit(delta))).ln(),
            DriftFamily::Constant => T::one(),
            DriftFamily::X1 => r * t.cos(),
        })?;
        let grad_l2 = norms(&f, &Region::unit_disk())?.grad_l2;
        let whole = disk_average(&f, 1.0)?;
        for &eps in eps_list {
            let drift = (disk_average(&f, eps)? - whole).abs();
            let le = (1.0 / eps).ln();
            let ratio = if grad_l2 > 0.0 { drift / (le.sqrt() * grad_l2) } else { 0.0 };
            let exact_ratio = (family == DriftFamily::SaturatedLog && eps > delta).then(|| {
                let d2 = delta * delta;
                let drift = le - d2 / (2.0 * eps * eps) + d2 / 2.0;
                drift / (le.sqrt() * (std::f64::consts::TAU * (1.0 / delta).ln()).sqrt())
            });
            rows.push(DriftRow { family, eps, drift, grad_l2, ratio, exact_ratio });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreFamily {
    /// `|x|²`
    Quadratic,
    /// `2x₁ − x₂ + 1`
    Linear,
    /// `sin(10x₁) sin(10x₂)`
    Oscillatory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreSupRow {
    pub family: CoreFamily,
    pub h: f64,
    /// `sup_{B_h} |v(x) − v(0) − (avg_{B_h} ∇v)·x|`
    pub lhs: f64,
    /// `h ‖∇²v‖_{L²(B_h)}`
    pub rhs: f64,
    pub ratio: f64,
}

/// Left and right sides of the core sup estimate on `mesh`; every `h` must be a ring radius.
pub fn probe_core_sup<T: Real>(h_list: &[f64], mesh: Arc<PolarMesh<T>>) -> Result<Vec<CoreSupRow>> {
    for &h in h_list {
        if mesh.ring_at(h).is_none() {
            return Err(Error::UnresolvableRegion(format!("h = {h} is not a ring of the reference mesh")));
        }
    }
    let ops = PolarOperators::new(&mesh);
    let mut rows = Vec::new();
    for family in [CoreFamily::Quadratic, CoreFamily::Linear, CoreFamily::Oscillatory] {
        let v = |x: f64, y: f64| match family {
            CoreFamily::Quadratic => x * x + y * y,
            CoreFamily::Linear => 2.0 * x - y + 1.0,
            CoreFamily::Oscillatory => (10.0 * x).sin() * (10.0 * y).sin(),
        };
        let f = ScalarField::from_fn(mesh.clone(), |r, t| {
            let (r, t) = (r.to_f64_lossy(), t.to_f64_lossy());
            T::lit(v(r * t.cos(), r * t.sin()))
        })?;
        let vals: Vec<[T; 1]> = f.values.iter().map(|&x| [x]).collect();
        let derivs = ops.derivatives(&vals);
        for &h in h_list {
            let w = mesh.region_radial_weights(&Region::Disk { radius: h })?;
            let dtheta = mesh.dtheta.to_f64_lossy();
            let (mut gx, mut gy, mut area) = (0.0, 0.0, 0.0);
            for ring in 1..=mesh.n_r() {
                let wr = w[ring].to_f64_lossy() * mesh.radii_f64()[ring] * dtheta;
                if wr == 0.0 {
                    continue;
                }
                let d = &derivs[ring - 1];
                let r = mesh.radii_f64()[ring];
                for k in 0..mesh.n_theta() {
                    let t = mesh.angles[k].to_f64_lossy();
                    let vr = d.r[k][0].to_f64_lossy();
                    let vt = d.t[k][0].to_f64_lossy() / r;
                    gx += wr * (vr * t.cos() - vt * t.sin());
                    gy += wr * (vr * t.sin() + vt * t.cos());
                    area += wr;
                }
            }
            let (gx, gy) = (gx / area, gy / area);
            let v0 = f.values[0].to_f64_lossy();
            let lhs = mesh
                .ball_nodes(h)
                .iter()
                .map(|&n| {
                    let (r, t) = mesh.position(n);
                    let (r, t) = (r.to_f64_lossy(), t.to_f64_lossy());
                    (f.values[n].to_f64_lossy() - v0 - gx * r * t.cos() - gy * r * t.sin()).abs()
                })
                .fold(0.0f64, f64::max);
            let rhs = h * norms(&f, &Region::Disk { radius: h })?.hess_l2;
            let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            rows.push(CoreSupRow { family, h, lhs, rhs, ratio });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: f64,
    pub trace_ratio: f64,
    pub grad_ratio: f64,
}

/// Interpolation ratios of `sin(k x₁)` over `region`.
pub fn probe_trace<T: Real>(k_list: &[f64], region: &Region, mesh: Arc<PolarMesh<T>>) -> Result<Vec<TraceRow>> {
    k_list
        .iter()
        .map(|&k| {
            let f = ScalarField::from_fn(mesh.clone(), |r, t| (T::lit(k) * r * t.cos()).sin())?;
            let ratios = interpolation_ratio(&f, region)?;
            Ok(TraceRow { k, trace_ratio: ratios.trace_ratio, grad_ratio: ratios.grad_ratio })
        })
        .collect()
}
