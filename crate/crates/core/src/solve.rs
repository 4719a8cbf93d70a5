//! Preconditioned L-BFGS for the discrete energy over the admissible class
//! (boundary ring pinned to the curve, center pinned to the origin).

use std::collections::VecDeque;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::curve::BoundaryCurve;
use crate::energy::{upper_bound_profile, EnergyAssembler, EnergyBreakdown, Field};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, MeshSpec, PolarMesh};
use crate::scalar::{Real, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    FromProfile,
    FromPreviousH,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Max-norm bound on the free-node gradient of `E_h`.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub sufficient_decrease: f64,
    pub curvature: f64,
    pub memory: usize,
    pub continuation: Continuation,
    pub max_nan_retries: usize,
    pub mesh: MeshSpec,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-9,
            max_iterations: 20_000,
            sufficient_decrease: 1e-4,
            curvature: 0.9,
            memory: 20,
            continuation: Continuation::FromProfile,
            max_nan_retries: 30,
            mesh: MeshSpec::geometric(96, 192),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.gradient_tolerance > 0.0) {
            return bad("gradient_tolerance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(0.0 < self.sufficient_decrease && self.sufficient_decrease < self.curvature && self.curvature < 1.0) {
            return bad("need 0 < sufficient_decrease < curvature < 1");
        }
        if self.memory == 0 {
            return bad("memory must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Real> {
    pub h: f64,
    pub field: Field<T>,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    /// Free-node gradient max-norm of `E_h` per iterate, starting with `y0`.
    pub gradient_norms: Vec<f64>,
    /// `E_h` per accepted iterate, starting with `y0`.
    pub energies: Vec<f64>,
    pub termination: Termination,
}

/// Everything in a [`SolveResult`] except the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub h: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub gradient_norms: Vec<f64>,
    pub energies: Vec<f64>,
    pub breakdown: EnergyBreakdown,
}

impl<T: Real> SolveResult<T> {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            h: self.h,
            iterations: self.iterations,
            evaluations: self.evaluations,
            termination: self.termination,
            gradient_norms: self.gradient_norms.clone(),
            energies: self.energies.clone(),
            breakdown: self.breakdown.clone(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.breakdown.total
    }
}

/// A failed solve together with its last accepted iterate (absent when the failure precedes iteration).
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SolveFailure<T: Real> {
    pub error: Error,
    pub last: Option<Box<SolveResult<T>>>,
}

impl<T: Real> From<Error> for SolveFailure<T> {
    fn from(error: Error) -> Self {
        Self { error, last: None }
    }
}

type Vector<T> = Vec<Vec3<T>>;

fn dot<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    }
    s
}

fn axpy<T: Real>(alpha: T, x: &[Vec3<T>], y: &mut [Vec3<T>]) {
    for (a, b) in x.iter().zip(y.iter_mut()) {
        for c in 0..3 {
            b[c] += alpha * a[c];
        }
    }
}

fn max_norm<T: Real>(x: &[Vec3<T>]) -> f64 {
    x.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, c| m.max(c.to_f64_lossy().abs()))
}

/// Per angular mode and Cartesian component, a band matrix in the ring index
/// approximating the energy Hessian near the cone spanned by the boundary ring
/// (Gauss-Newton membrane with ring-averaged frame weights plus exact bending).
struct SpectralPreconditioner {
    /// `blocks[|m| * 3 + c]`, factored; rows are the free rings `1..n_r`.
    blocks: Vec<BandMatrix>,
}

impl SpectralPreconditioner {
    fn new<T: Real>(asm: &EnergyAssembler<T>, values: &[Vec3<T>], scale: f64) -> Self {
        let mesh = &asm.mesh;
        let ops = asm.operators();
        let n_r = mesh.n_r();
        let n = mesh.n_theta();
        let half = n / 2;
        let h2 = asm.h * asm.h;
        let radii = mesh.radii_f64();
        let cone: Vec<Vec3<T>> = (0..mesh.num_nodes())
            .map(|node| {
                if node == 0 {
                    return [T::zero(); 3];
                }
                let g = values[mesh.node(n_r, mesh.angle_index(node))];
                let r = mesh.radii[mesh.ring_of(node)];
                [r * g[0], r * g[1], r * g[2]]
            })
            .collect();
        let frame: Vec<([f64; 3], [f64; 3])> = ops
            .derivatives(&cone)
            .iter()
            .enumerate()
            .map(|(idx, d)| {
                let r = radii[idx + 1];
                let mut a2 = [0.0; 3];
                let mut b2 = [0.0; 3];
                for k in 0..n {
                    for c in 0..3 {
                        let a = d.r[k][c].to_f64_lossy();
                        let b = d.t[k][c].to_f64_lossy() / r;
                        a2[c] += a * a / n as f64;
                        b2[c] += b * b / n as f64;
                    }
                }
                (a2, b2)
            })
            .collect();
        let free = n_r - 1;
        let bandwidth = (1..=n_r)
            .map(|i| {
                let st = &ops.radial[i];
                let rings = &st.rings[..st.len];
                rings.iter().chain(std::iter::once(&i)).filter(|&&j| j >= 1 && j < n_r).fold((usize::MAX, 0), |(lo, hi), &j| (lo.min(j), hi.max(j)))
            })
            .filter(|&(lo, hi)| lo <= hi)
            .map(|(lo, hi)| hi - lo)
            .max()
            .unwrap_or(0);
        let mut blocks = vec![BandMatrix::zeros(free, bandwidth); (half + 1) * 3];
        for i in 1..=n_r {
            let st = &ops.radial[i];
            let w = mesh.ring_weight(i).to_f64_lossy() * scale;
            let r = radii[i];
            let (a2, b2) = frame[i - 1];
            let keep = |j: usize| j >= 1 && j < n_r;
            let l1: Vec<(usize, f64)> =
                (0..st.len).filter(|&s| keep(st.rings[s])).map(|s| (st.rings[s] - 1, st.d1[s].to_f64_lossy())).collect();
            let l2: Vec<(usize, f64)> =
                (0..st.len).filter(|&s| keep(st.rings[s])).map(|s| (st.rings[s] - 1, st.d2[s].to_f64_lossy())).collect();
            let own = keep(i).then_some(i - 1);
            let combine = |s1: f64, s0: f64| -> Vec<(usize, f64)> {
                let mut v: Vec<(usize, f64)> = l1.iter().map(|&(j, x)| (j, s1 * x)).collect();
                if let Some(o) = own {
                    match v.iter_mut().find(|e| e.0 == o) {
                        Some(e) => e.1 += s0,
                        None => v.push((o, s0)),
                    }
                }
                v
            };
            let unit: Vec<(usize, f64)> = own.map(|o| vec![(o, 1.0)]).unwrap_or_default();
            for m in 0..=half {
                let mf = m as f64;
                let twist = combine(1.0 / r, -1.0 / (r * r));
                let hoop = combine(1.0 / r, -mf * mf / (r * r));
                for c in 0..3 {
                    let blk = &mut blocks[m * 3 + c];
                    blk.add_outer(w * 2.0 * (4.0 * a2[c] + 2.0 * b2[c]), &l1);
                    blk.add_outer(w * 2.0 * (2.0 * a2[c] + 4.0 * b2[c]) * mf * mf / (r * r), &unit);
                    blk.add_outer(w * h2 * 2.0, &l2);
                    blk.add_outer(w * h2 * 4.0 * mf * mf, &twist);
                    blk.add_outer(w * h2 * 2.0, &hoop);
                }
            }
        }
        for blk in blocks.iter_mut() {
            let mut shift = 1e-12 * blk.max_diagonal().max(f64::MIN_POSITIVE);
            let original = blk.clone();
            blk.shift_diagonal(shift);
            while !blk.factor() {
                shift *= 100.0;
                *blk = original.clone();
                blk.shift_diagonal(shift);
            }
        }
        Self { blocks }
    }

    fn apply<T: Real>(&self, asm: &EnergyAssembler<T>, x: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let mesh = &asm.mesh;
        let spectral = asm.operators().angular();
        let n = mesh.n_theta();
        let free = mesh.n_r() - 1;
        let mut out = vec![[T::zero(); 3]; x.len()];
        let mut spectra = vec![vec![Complex::new(0.0f64, 0.0); n]; free];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut re = vec![0.0; free];
        let mut im = vec![0.0; free];
        for c in 0..3 {
            for (j, spec) in spectra.iter_mut().enumerate() {
                let base = mesh.node(j + 1, 0);
                for k in 0..n {
                    buf[k] = Complex::new(x[base + k][c], T::zero());
                }
                spectral.forward_in_place(&mut buf);
                for k in 0..n {
                    spec[k] = Complex::new(buf[k].re.to_f64_lossy(), buf[k].im.to_f64_lossy());
                }
            }
            for m in 0..n {
                let blk = &self.blocks[m.min(n - m) * 3 + c];
                for j in 0..free {
                    re[j] = spectra[j][m].re;
                    im[j] = spectra[j][m].im;
                }
                blk.solve_in_place(&mut re);
                blk.solve_in_place(&mut im);
                for j in 0..free {
                    spectra[j][m] = Complex::new(re[j], im[j]);
                }
            }
            let inv_n = 1.0 / n as f64;
            for (j, spec) in spectra.iter().enumerate() {
                for k in 0..n {
                    buf[k] = Complex::new(T::lit(spec[k].re), T::lit(spec[k].im));
                }
                spectral.inverse_in_place(&mut buf);
                let base = mesh.node(j + 1, 0);
                for k in 0..n {
                    out[base + k][c] = buf[k].re * T::lit(inv_n);
                }
            }
        }
        out
    }
}

struct Problem<'a, T: Real> {
    asm: &'a EnergyAssembler<T>,
    scale: T,
    evaluations: usize,
}

impl<T: Real> Problem<'_, T> {
    fn eval(&mut self, x: &[Vec3<T>]) -> (T, Vector<T>) {
        self.evaluations += 1;
        self.asm.value_and_gradient(x, self.scale)
    }
}

struct LineSearchOutcome<T: Real> {
    alpha: T,
    x: Vector<T>,
    f: T,
    g: Vector<T>,
}

fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> Option<f64> {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe search (bracketing plus cubic zoom). Falls back to the best
/// non-increasing point satisfying sufficient decrease or approximate Wolfe.
fn line_search<T: Real>(
    prob: &mut Problem<'_, T>,
    cfg: &SolveConfig,
    x0: &[Vec3<T>],
    f0: T,
    g0: &[Vec3<T>],
    p: &[Vec3<T>],
    alpha_init: f64,
) -> Result<LineSearchOutcome<T>> {
    let c1 = cfg.sufficient_decrease;
    let c2 = cfg.curvature;
    let f0f = f0.to_f64_lossy();
    let d0 = dot(g0, p).to_f64_lossy();
    if !(d0 < 0.0) {
        return Err(Error::LineSearch { iterations: 0, reason: "not a descent direction".into() });
    }
    let eps_f = 1e-12 * f0f.abs().max(1e-300);
    let mut nan_retries = 0;
    let mut trial = |alpha: f64, prob: &mut Problem<'_, T>| -> Result<Option<(T, Vector<T>, Vector<T>, f64)>> {
        let mut x = x0.to_vec();
        axpy(T::lit(alpha), p, &mut x);
        let (f, g) = prob.eval(&x);
        if !f.is_finite() || g.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            nan_retries += 1;
            if nan_retries > cfg.max_nan_retries {
                return Err(Error::NonFinite(format!("energy stayed non-finite after {} step reductions", nan_retries - 1)));
            }
            return Ok(None);
        }
        let d = dot(&g, p).to_f64_lossy();
        Ok(Some((f, x, g, d)))
    };

    let armijo = |alpha: f64, f: f64| f <= f0f + c1 * alpha * d0;
    let approx_wolfe = |f: f64, d: f64| f <= f0f && f <= f0f + eps_f && (2.0 * c1 - 1.0) * d0 >= d && d >= c2 * d0;
    let mut best: Option<LineSearchOutcome<T>> = None;
    let consider = |alpha: f64, f: T, x: &Vector<T>, g: &Vector<T>, best: &mut Option<LineSearchOutcome<T>>| {
        let ff = f.to_f64_lossy();
        if ff <= f0f && best.as_ref().map_or(true, |b| ff < b.f.to_f64_lossy()) {
            *best = Some(LineSearchOutcome { alpha: T::lit(alpha), x: x.clone(), f, g: g.clone() });
        }
    };

    let mut evals = 0usize;
    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0f, d0);
    let mut alpha = alpha_init;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
    while evals < 40 {
        evals += 1;
        let Some((f, x, g, d)) = trial(alpha, prob)? else {
            alpha = a_prev + 0.5 * (alpha - a_prev);
            continue;
        };
        let ff = f.to_f64_lossy();
        consider(alpha, f, &x, &g, &mut best);
        if !armijo(alpha, ff) || (evals > 1 && ff >= f_prev) {
            if approx_wolfe(ff, d) {
                return Ok(LineSearchOutcome { alpha: T::lit(alpha), x, f, g });
            }
            bracket = Some((a_prev, f_prev, d_prev, alpha, ff, d));
            break;
        }
        if d.abs() <= -c2 * d0 {
            return Ok(LineSearchOutcome { alpha: T::lit(alpha), x, f, g });
        }
        if d >= 0.0 {
            bracket = Some((alpha, ff, d, a_prev, f_prev, d_prev));
            break;
        }
        a_prev = alpha;
        f_prev = ff;
        d_prev = d;
        alpha *= 4.0;
    }

    if let Some((mut lo, mut flo, mut dlo, mut hi, mut fhi, mut dhi)) = bracket {
        for _ in 0..40 {
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let width = b - a;
            if width <= 1e-16 * b.abs().max(1e-300) {
                break;
            }
            let mut t = cubic_min(lo, flo, dlo, hi, fhi, dhi).unwrap_or(0.5 * (a + b));
            if !(t > a + 0.1 * width && t < b - 0.1 * width) {
                t = 0.5 * (a + b);
            }
            let Some((f, x, g, d)) = trial(t, prob)? else {
                hi = t;
                fhi = f64::INFINITY;
                dhi = 0.0;
                continue;
            };
            let ff = f.to_f64_lossy();
            consider(t, f, &x, &g, &mut best);
            if !armijo(t, ff) || ff >= flo {
                if approx_wolfe(ff, d) {
                    return Ok(LineSearchOutcome { alpha: T::lit(t), x, f, g });
                }
                hi = t;
                fhi = ff;
                dhi = d;
            } else {
                if d.abs() <= -c2 * d0 || approx_wolfe(ff, d) {
                    return Ok(LineSearchOutcome { alpha: T::lit(t), x, f, g });
                }
                if d * (hi - lo) >= 0.0 {
                    hi = lo;
                    fhi = flo;
                    dhi = dlo;
                }
                lo = t;
                flo = ff;
                dlo = d;
            }
        }
    }
    match best {
        Some(b) if b.f.to_f64_lossy() < f0f => Ok(b),
        _ => Err(Error::LineSearch { iterations: evals, reason: "no decrease along the search direction".into() }),
    }
}

/// Minimizes `E_h` over fields sharing `y0`'s boundary and center values.
pub fn minimize<T: Real>(y0: &Field<T>, h: f64, cfg: &SolveConfig) -> std::result::Result<SolveResult<T>, SolveFailure<T>> {
    cfg.validate()?;
    let asm = EnergyAssembler::new(y0.mesh.clone(), h)?;
    minimize_with(&asm, y0, cfg)
}

fn minimize_with<T: Real>(
    asm: &EnergyAssembler<T>,
    y0: &Field<T>,
    cfg: &SolveConfig,
) -> std::result::Result<SolveResult<T>, SolveFailure<T>> {
    let h = asm.h;
    let scale = 1.0 / (h * h);
    let mut prob = Problem { asm, scale: T::lit(scale), evaluations: 0 };
    let mut x = y0.values.clone();
    let (mut f, mut g) = prob.eval(&x);
    let h2 = h * h;
    let mut energies = vec![f.to_f64_lossy() * h2];
    let mut gradient_norms = vec![max_norm(&g) * h2];
    let precond = SpectralPreconditioner::new(asm, &x, scale);
    let mut memory: VecDeque<(Vector<T>, Vector<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;

    let finish = |x: Vector<T>, iterations: usize, evaluations: usize, g_hist: Vec<f64>, e_hist: Vec<f64>, term: Termination| {
        let field = Field { mesh: y0.mesh.clone(), values: x, curve_hash: y0.curve_hash.clone() };
        let breakdown = asm.assemble(&field).expect("field built on the assembler mesh");
        SolveResult {
            h,
            field,
            breakdown,
            iterations,
            evaluations,
            gradient_norms: g_hist,
            energies: e_hist,
            termination: term,
        }
    };

    if !f.is_finite() {
        let n = prob.evaluations;
        return Err(SolveFailure {
            error: Error::NonFinite("initial energy".into()),
            last: Some(Box::new(finish(x, 0, n, gradient_norms, energies, Termination::MaxIterations))),
        });
    }

    let mut just_reset = true;
    loop {
        if *gradient_norms.last().unwrap() <= cfg.gradient_tolerance {
            let n = prob.evaluations;
            return Ok(finish(x, iterations, n, gradient_norms, energies, Termination::Converged));
        }
        if iterations >= cfg.max_iterations {
            let n = prob.evaluations;
            return Ok(finish(x, iterations, n, gradient_norms, energies, Termination::MaxIterations));
        }

        // Two-loop recursion with H0 = γ P⁻¹.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = *rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        let mut r = precond.apply(asm, &q);
        if let Some((s, y, _)) = memory.back() {
            let py = precond.apply(asm, y);
            let gamma = dot(s, y) / dot(y, &py);
            for v in r.iter_mut() {
                for c in v.iter_mut() {
                    *c *= gamma;
                }
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &r);
            axpy(*a - b, s, &mut r);
        }
        let p: Vector<T> = r.iter().map(|v| [-v[0], -v[1], -v[2]]).collect();

        match line_search(&mut prob, cfg, &x, f, &g, &p, 1.0) {
            Ok(step) => {
                let s: Vector<T> = p.iter().map(|v| v.map(|c| c * step.alpha)).collect();
                let y: Vector<T> =
                    step.g.iter().zip(&g).map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect();
                let sy = dot(&s, &y);
                if sy > T::zero() && sy.is_finite() {
                    if memory.len() == cfg.memory {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, T::one() / sy));
                }
                x = step.x;
                f = step.f;
                g = step.g;
                iterations += 1;
                energies.push(f.to_f64_lossy() * h2);
                gradient_norms.push(max_norm(&g) * h2);
                just_reset = false;
            }
            Err(e) => {
                if just_reset {
                    let n = prob.evaluations;
                    return Err(SolveFailure {
                        error: e,
                        last: Some(Box::new(finish(x, iterations, n, gradient_norms, energies, Termination::MaxIterations))),
                    });
                }
                memory.clear();
                just_reset = true;
            }
        }
    }
}

/// Self-similar warm start: `ỹ(x) + ½ e(2x)` inside `B_{1/2}` and `ỹ` outside, where `e = y_prev − ỹ`.
pub fn warm_start<T: Real>(prev: &Field<T>, curve: &BoundaryCurve<T>, mesh: Arc<PolarMesh<T>>) -> Result<Field<T>> {
    let pm = &prev.mesh;
    if pm.n_theta() != mesh.n_theta() {
        return Err(Error::Mismatch(format!("angular resolution {} vs {}", pm.n_theta(), mesh.n_theta())));
    }
    let stride = curve.len() / pm.n_theta();
    let pr = pm.radii_f64();
    let deviation = |ring: usize, k: usize| -> Vec3<T> {
        if ring == 0 {
            return [T::zero(); 3];
        }
        let g = &curve.gamma[k * stride];
        let v = &prev.values[pm.node(ring, k)];
        let r = pm.radii[ring];
        [v[0] - r * g[0], v[1] - r * g[1], v[2] - r * g[2]]
    };
    let angles = mesh.angles.clone();
    let dtheta = mesh.dtheta;
    Field::from_fn(mesh, curve, |r, theta, g| {
        let rf = r.to_f64_lossy();
        let base = [r * g[0], r * g[1], r * g[2]];
        if rf > 0.5 {
            return base;
        }
        let k = ((theta - angles[0]) / dtheta).round().to_usize().unwrap_or(0);
        let target = 2.0 * rf;
        let j = pr.partition_point(|&x| x < target).clamp(2, pr.len() - 2);
        let idx = [j - 2, j - 1, j, j + 1];
        let mut e = [T::zero(); 3];
        for (a, &ia) in idx.iter().enumerate() {
            let mut l = 1.0;
            for (b, &ib) in idx.iter().enumerate() {
                if a != b {
                    l *= (target - pr[ib]) / (pr[ia] - pr[ib]);
                }
            }
            let d = deviation(ia, k);
            for c in 0..3 {
                e[c] += T::lit(l) * d[c];
            }
        }
        let half = T::lit(0.5);
        [base[0] + half * e[0], base[1] + half * e[1], base[2] + half * e[2]]
    })
}

/// Solves for each `h` (strictly decreasing, all below 1/4) on a fresh mesh.
pub fn continuation_sweep<T: Real>(
    curve: &BoundaryCurve<T>,
    h_list: &[f64],
    cfg: &SolveConfig,
) -> std::result::Result<Vec<SolveResult<T>>, SolveFailure<T>> {
    let check = || -> Result<()> {
        cfg.validate()?;
        if h_list.is_empty() {
            return Err(Error::InvalidParameter("empty h list".into()));
        }
        if h_list.iter().any(|&h| !(h > 0.0 && h < 0.25)) {
            return Err(Error::InvalidParameter("every h must lie in (0, 1/4)".into()));
        }
        if h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("h list must be strictly decreasing".into()));
        }
        Ok(())
    };
    let wrap = |h: f64, f: SolveFailure<T>| SolveFailure { error: Error::AtStep { h, source: Box::new(f.error) }, last: f.last };
    let setup = |h: f64| -> Result<(Arc<PolarMesh<T>>, Field<T>)> {
        let mesh = Arc::new(build_mesh::<T>(cfg.mesh, h)?);
        let y0 = upper_bound_profile(curve, h, mesh.clone())?;
        Ok((mesh, y0))
    };
    let early = |h: f64, e: Error| wrap(h, SolveFailure::from(e));
    if let Err(e) = check() {
        return Err(early(h_list.first().copied().unwrap_or(f64::NAN), e));
    }
    match cfg.continuation {
        Continuation::FromProfile => {
            use rayon::prelude::*;
            let results: Vec<_> = h_list
                .par_iter()
                .map(|&h| {
                    let (_, y0) = setup(h).map_err(|e| early(h, e))?;
                    minimize(&y0, h, cfg).map_err(|f| wrap(h, f))
                })
                .collect();
            results.into_iter().collect()
        }
        Continuation::FromPreviousH => {
            let mut out: Vec<SolveResult<T>> = Vec::with_capacity(h_list.len());
            for &h in h_list {
                let (mesh, profile) = setup(h).map_err(|e| early(h, e))?;
                let y0 = match out.last() {
                    None => profile,
                    Some(prev) => warm_start(&prev.field, curve, mesh).map_err(|e| early(h, e))?,
                };
                out.push(minimize(&y0, h, cfg).map_err(|f| wrap(h, f))?);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_equator, CurveSpec};

    fn small_cfg() -> SolveConfig {
        SolveConfig { mesh: MeshSpec::geometric(56, 64), ..SolveConfig::default() }
    }

    fn profile(curve: &BoundaryCurve<f64>, h: f64, cfg: &SolveConfig) -> Field<f64> {
        let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, h).unwrap());
        upper_bound_profile(curve, h, mesh).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::default().validate().is_ok());
        let bad = SolveConfig { sufficient_decrease: 0.9, curvature: 0.5, ..SolveConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolveConfig { gradient_tolerance: 0.0, ..SolveConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolveConfig { memory: 0, ..SolveConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equator_relaxes_to_the_flat_disk() {
        let cfg = small_cfg();
        let h = 2f64.powi(-5);
        let curve = make_equator::<f64>(64).unwrap();
        let y0 = profile(&curve, h, &cfg);
        let res = minimize(&y0, h, &cfg).unwrap();
        assert!(res.energy() < 1e-10, "{}", res.energy());
        assert!(res.iterations < 500);
    }

    #[test]
    fn descent_and_constraints() {
        let cfg = small_cfg();
        let h = 2f64.powi(-5);
        let curve = CurveSpec::latitude_wave(0.2, 3, 64).build::<f64>().unwrap();
        let y0 = profile(&curve, h, &cfg);
        let res = minimize(&y0, h, &cfg).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        assert!(res.energies.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.energy() <= res.energies[0]);
        let mesh = &y0.mesh;
        for n in 0..mesh.num_nodes() {
            if mesh.is_constrained(n) {
                assert_eq!(res.field.values[n], y0.values[n]);
            }
        }
        res.field.check_constraints(&curve).unwrap();
        assert!(*res.gradient_norms.last().unwrap() <= cfg.gradient_tolerance);
    }

    #[test]
    fn max_iterations_is_flagged() {
        let cfg = SolveConfig { max_iterations: 3, ..small_cfg() };
        let h = 2f64.powi(-5);
        let curve = CurveSpec::latitude_wave(0.2, 3, 64).build::<f64>().unwrap();
        let res = minimize(&profile(&curve, h, &cfg), h, &cfg).unwrap();
        assert_eq!(res.termination, Termination::MaxIterations);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn singleton_sweep_matches_minimize() {
        let cfg = small_cfg();
        let h = 2f64.powi(-5);
        let curve = CurveSpec::latitude_wave(0.2, 3, 64).build::<f64>().unwrap();
        let direct = minimize(&profile(&curve, h, &cfg), h, &cfg).unwrap();
        for continuation in [Continuation::FromProfile, Continuation::FromPreviousH] {
            let sweep = continuation_sweep(&curve, &[h], &SolveConfig { continuation, ..cfg }).unwrap();
            assert_eq!(sweep.len(), 1);
            assert_eq!(sweep[0].field.values, direct.field.values);
        }
    }

    #[test]
    fn sweep_rejects_bad_h_lists() {
        let cfg = small_cfg();
        let curve = make_equator::<f64>(64).unwrap();
        assert!(continuation_sweep(&curve, &[0.05, 0.1], &cfg).is_err());
        assert!(continuation_sweep(&curve, &[0.3], &cfg).is_err());
        assert!(continuation_sweep(&curve, &[], &cfg).is_err());
        let err = continuation_sweep(&curve, &[0.05, 0.1], &cfg).unwrap_err();
        assert!(matches!(err.error, Error::AtStep { .. }));
    }

    #[test]
    fn warm_start_is_admissible_and_self_similar() {
        let cfg = small_cfg();
        let curve = CurveSpec::latitude_wave(0.2, 3, 64).build::<f64>().unwrap();
        let h = 2f64.powi(-4);
        let y = profile(&curve, h, &cfg);
        let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, h / 2.0).unwrap());
        let w = warm_start(&y, &curve, mesh.clone()).unwrap();
        w.check_constraints(&curve).unwrap();
        // The profile is self-similar, so its warm start is the profile at h/2 up to interpolation.
        let target = upper_bound_profile(&curve, h / 2.0, mesh.clone()).unwrap();
        let err = w.values.iter().zip(&target.values).map(|(a, b)| crate::scalar::norm_sq(&crate::scalar::sub(a, b)).sqrt()).fold(0.0, f64::max);
        assert!(err < 5e-3 * h, "{err}");
    }
}
