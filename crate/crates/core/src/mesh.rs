//! Radially graded polar tensor mesh on the unit disk.
//!
//! Node 0 is the center; ring `i >= 1` holds nodes `1 + (i-1) n_θ .. 1 + i n_θ`.
//! Radial integrals use node weights obtained by integrating the average of the
//! two neighbouring quadratic interpolants of `g(r) = f(r) r` on each interval,
//! so the rule is exact for quadratic `g` and any radial sub-range can be
//! integrated with weights that add up exactly across a partition.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum number of radial intervals per octave outside the core.
pub const MIN_INTERVALS_PER_OCTAVE: f64 = 8.0;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grading {
    Geometric,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub grading: Grading,
}

impl MeshSpec {
    pub fn geometric(n_r: usize, n_theta: usize) -> Self {
        Self { n_r, n_theta, grading: Grading::Geometric }
    }

    pub fn uniform(n_r: usize, n_theta: usize) -> Self {
        Self { n_r, n_theta, grading: Grading::Uniform }
    }

    pub fn refined(&self) -> Self {
        Self { n_r: 2 * self.n_r, n_theta: 2 * self.n_theta, grading: self.grading }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarMesh<T: Real> {
    pub spec: MeshSpec,
    pub h: T,
    /// `radii[0] = 0` is the center, `radii[n_r] = 1` the boundary ring.
    pub radii: Vec<T>,
    pub angles: Vec<T>,
    pub dtheta: T,
    /// Weights of the radial rule for `∫_0^1 g(r) dr`, one per ring (center included).
    pub radial_weights: Vec<T>,
    /// Dyadic annulus index `j` of each ring (`2^{-j-1} < r <= 2^{-j}`); `None` for the center.
    pub ring_annulus: Vec<Option<u32>>,
    radii_f64: Vec<f64>,
}

fn dyadic_index(r: f64) -> u32 {
    let mut j = (-r.log2()).floor().max(0.0) as i64;
    if r > 2f64.powi(-j as i32) * (1.0 + REL_TOL) {
        j -= 1;
    }
    if r <= 2f64.powi(-(j as i32) - 1) * (1.0 + REL_TOL) {
        j += 1;
    }
    j.max(0) as u32
}

/// Radii of the geometric grading: breakpoints at every dyadic radius above `h/4`
/// and at `h, h/2, h/4`, geometric spacing inside each segment.
fn geometric_radii(n_r: usize, h: f64) -> Result<Vec<f64>> {
    let r_min = h / 4.0;
    let mut breaks = vec![r_min, h / 2.0, h];
    let mut d = 1.0;
    while d > r_min * (1.0 + REL_TOL) {
        breaks.push(d);
        d *= 0.5;
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() <= REL_TOL * b.abs());
    let segments: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();
    let lengths: Vec<f64> = segments.iter().map(|(a, b)| (b / a).log2()).collect();
    let mut counts: Vec<usize> = segments
        .iter()
        .zip(&lengths)
        .map(|(&(a, _), &len)| {
            if a >= h * (1.0 - REL_TOL) {
                (MIN_INTERVALS_PER_OCTAVE * len - 1e-9).ceil().max(1.0) as usize
            } else {
                1
            }
        })
        .collect();
    let total = n_r - 1;
    let required: usize = counts.iter().sum();
    if required > total {
        return Err(Error::InfeasibleMesh(format!(
            "n_r = {n_r} leaves {total} radial intervals but h = {h} needs at least {required}"
        )));
    }
    for _ in 0..(total - required) {
        let (idx, _) = counts
            .iter()
            .zip(&lengths)
            .enumerate()
            .map(|(i, (&c, &len))| (i, c as f64 / len))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        counts[idx] += 1;
    }
    let mut radii = vec![0.0, r_min];
    for (&(a, b), &count) in segments.iter().zip(&counts) {
        for t in 1..=count {
            radii.push(if t == count { b } else { a * (b / a).powf(t as f64 / count as f64) });
        }
    }
    debug_assert_eq!(radii.len(), n_r + 1);
    Ok(radii)
}

/// Lagrange basis of the quadratic through `nodes`, integrated over `[lo, hi]`.
fn quadratic_basis_integrals(nodes: [f64; 3], lo: f64, hi: f64) -> [f64; 3] {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let off = half / 3f64.sqrt();
    let mut out = [0.0; 3];
    for x in [mid - off, mid + off] {
        for (a, o) in out.iter_mut().enumerate() {
            let mut l = 1.0;
            for b in 0..3 {
                if a != b {
                    l *= (x - nodes[b]) / (nodes[a] - nodes[b]);
                }
            }
            *o += half * l;
        }
    }
    out
}

fn linear_basis_integrals(r0: f64, r1: f64, lo: f64, hi: f64) -> [f64; 2] {
    let len = hi - lo;
    let t = (0.5 * (lo + hi) - r0) / (r1 - r0);
    [len * (1.0 - t), len * t]
}

/// Weights `w` with `∫_a^b g dr ≈ Σ w_i g(r_i)`.
pub(crate) fn radial_range_weights(radii: &[f64], a: f64, b: f64) -> Vec<f64> {
    interpolant_weights(radii, a, b, 0, radii.len() - 1)
}

/// Like [`radial_range_weights`], but only interpolants through rings `lo..=hi` are used.
pub(crate) fn interpolant_weights(radii: &[f64], a: f64, b: f64, first: usize, last: usize) -> Vec<f64> {
    let n = radii.len() - 1;
    let mut w = vec![0.0; n + 1];
    for i in 0..n {
        let (r0, r1) = (radii[i], radii[i + 1]);
        let lo = a.max(r0);
        let hi = b.min(r1);
        if hi <= lo {
            continue;
        }
        if i == 0 && radii[1] > 2.0 * (radii[2] - radii[1]) {
            // Center cell much wider than its neighbour: the quadratic through the
            // apex would put a negative weight on ring 2, so take f constant instead.
            w[1] += (hi * hi - lo * lo) / (2.0 * radii[1]);
            continue;
        }
        let smooth = |s: usize| {
            let (d1, d2) = (radii[s + 1] - radii[s], radii[s + 2] - radii[s + 1]);
            d1.max(d2) <= 2.0 * d1.min(d2)
        };
        let mut stencils = Vec::with_capacity(2);
        if i > first && smooth(i - 1) {
            stencils.push(i - 1);
        }
        if i + 2 <= last && smooth(i) {
            stencils.push(i);
        }
        if stencils.is_empty() {
            let ints = linear_basis_integrals(r0, r1, lo, hi);
            w[i] += ints[0];
            w[i + 1] += ints[1];
            continue;
        }
        let share = 1.0 / stencils.len() as f64;
        for s in stencils {
            let ints = quadratic_basis_integrals([radii[s], radii[s + 1], radii[s + 2]], lo, hi);
            for (k, v) in ints.iter().enumerate() {
                w[s + k] += share * v;
            }
        }
    }
    w
}

/// Closed disk, annulus `inner < r <= outer`, or the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Region {
    Disk { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Boundary,
}

impl Region {
    pub fn unit_disk() -> Self {
        Region::Disk { radius: 1.0 }
    }

    /// `A_r = B_r \ B_{r/2}`.
    pub fn dyadic(r: f64) -> Self {
        Region::Annulus { inner: 0.5 * r, outer: r }
    }

    pub fn radial_range(&self) -> (f64, f64) {
        match *self {
            Region::Disk { radius } => (0.0, radius),
            Region::Annulus { inner, outer } => (inner, outer),
            Region::Boundary => (1.0, 1.0),
        }
    }

    pub fn outer_radius(&self) -> f64 {
        self.radial_range().1
    }
}

impl<T: Real> PolarMesh<T> {
    pub fn n_r(&self) -> usize {
        self.spec.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.spec.n_theta
    }

    pub fn num_nodes(&self) -> usize {
        1 + self.spec.n_r * self.spec.n_theta
    }

    pub fn r_min(&self) -> T {
        self.radii[1]
    }

    pub fn radii_f64(&self) -> &[f64] {
        &self.radii_f64
    }

    #[inline]
    pub fn node(&self, ring: usize, k: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.spec.n_theta + k
        }
    }

    #[inline]
    pub fn ring_of(&self, node: usize) -> usize {
        if node == 0 {
            0
        } else {
            1 + (node - 1) / self.spec.n_theta
        }
    }

    #[inline]
    pub fn angle_index(&self, node: usize) -> usize {
        if node == 0 {
            0
        } else {
            (node - 1) % self.spec.n_theta
        }
    }

    pub fn position(&self, node: usize) -> (T, T) {
        (self.radii[self.ring_of(node)], self.angles[self.angle_index(node)])
    }

    /// Boundary ring or center: values fixed by the admissible class.
    #[inline]
    pub fn is_constrained(&self, node: usize) -> bool {
        let ring = self.ring_of(node);
        ring == 0 || ring == self.spec.n_r
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.ring_of(node) == self.spec.n_r
    }

    /// Area weight of a node on ring `ring`.
    #[inline]
    pub fn ring_weight(&self, ring: usize) -> T {
        self.radial_weights[ring] * self.radii[ring] * self.dtheta
    }

    pub fn node_weights(&self) -> Vec<T> {
        (0..self.num_nodes()).map(|n| self.ring_weight(self.ring_of(n))).collect()
    }

    /// Per-ring radial weights for the sub-range of `region` (area weight = w_i r_i dθ).
    pub fn region_radial_weights(&self, region: &Region) -> Result<Vec<T>> {
        let (a, b) = region.radial_range();
        if let Region::Boundary = region {
            return Err(Error::UnresolvableRegion("the boundary circle has no area weights".into()));
        }
        if !(a >= 0.0 && b > a && b <= 1.0 + REL_TOL) {
            return Err(Error::UnresolvableRegion(format!("radial range ({a}, {b})")));
        }
        if b < self.radii_f64[1] * (1.0 - REL_TOL) || (a > 0.0 && a < self.radii_f64[1] * (1.0 - REL_TOL)) {
            return Err(Error::UnresolvableRegion(format!(
                "range ({a}, {b}) is finer than r_min = {}",
                self.radii_f64[1]
            )));
        }
        Ok(radial_range_weights(&self.radii_f64, a, b.min(1.0)).into_iter().map(T::lit).collect())
    }

    /// Ring whose radius equals `r` to relative precision.
    pub fn ring_at(&self, r: f64) -> Option<usize> {
        self.radii_f64.iter().position(|&x| (x - r).abs() <= REL_TOL * r.max(1e-300))
    }

    /// Nodes with `2^{-j-1} < r <= 2^{-j}`.
    pub fn annulus_mask(&self, j: u32) -> Result<Vec<usize>> {
        let outer = 2f64.powi(-(j as i32));
        if outer < 2.0 * self.radii_f64[1] * (1.0 - REL_TOL) {
            return Err(Error::AnnulusBelowResolution { j, r_min: self.radii_f64[1] });
        }
        let mut nodes = Vec::new();
        for ring in 1..=self.spec.n_r {
            if self.ring_annulus[ring] == Some(j) {
                nodes.extend((0..self.spec.n_theta).map(|k| self.node(ring, k)));
            }
        }
        Ok(nodes)
    }

    /// Nodes inside the closed ball of the given radius (center included).
    pub fn ball_nodes(&self, radius: f64) -> Vec<usize> {
        let mut nodes = vec![0];
        for ring in 1..=self.spec.n_r {
            if self.radii_f64[ring] <= radius * (1.0 + REL_TOL) {
                nodes.extend((0..self.spec.n_theta).map(|k| self.node(ring, k)));
            }
        }
        nodes
    }

    pub fn summary(&self) -> MeshSummary {
        let weights = self.node_weights();
        let weight_sum: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
        let mut hasher = Sha256::new();
        for w in &weights {
            hasher.update(w.to_f64_lossy().to_le_bytes());
        }
        let digest = hasher.finalize();
        MeshSummary {
            spec: self.spec,
            h: self.h.to_f64_lossy(),
            node_count: self.num_nodes(),
            r_min: self.radii_f64[1],
            radii: self.radii_f64.clone(),
            weight_sum,
            weights_checksum: digest.iter().take(8).map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub spec: MeshSpec,
    pub h: f64,
    pub node_count: usize,
    pub r_min: f64,
    pub radii: Vec<f64>,
    pub weight_sum: f64,
    pub weights_checksum: String,
}

pub fn build_mesh<T: Real>(spec: MeshSpec, h: f64) -> Result<PolarMesh<T>> {
    if !(h > 0.0 && h < 0.25) {
        return Err(Error::InvalidParameter(format!("mesh needs 0 < h < 1/4, got {h}")));
    }
    if spec.n_r < 16 {
        return Err(Error::InfeasibleMesh(format!("n_r = {} < 16", spec.n_r)));
    }
    if spec.n_theta < 64 || spec.n_theta % 2 != 0 {
        return Err(Error::InfeasibleMesh(format!("n_theta = {} must be even and >= 64", spec.n_theta)));
    }
    let radii_f64 = match spec.grading {
        Grading::Geometric => geometric_radii(spec.n_r, h)?,
        Grading::Uniform => (0..=spec.n_r).map(|i| i as f64 / spec.n_r as f64).collect(),
    };
    let dtheta = 2.0 * PI / spec.n_theta as f64;
    let radial_weights = radial_range_weights(&radii_f64, 0.0, 1.0);
    let ring_annulus = radii_f64
        .iter()
        .enumerate()
        .map(|(i, &r)| if i == 0 { None } else { Some(dyadic_index(r)) })
        .collect();
    Ok(PolarMesh {
        spec,
        h: T::lit(h),
        radii: radii_f64.iter().map(|&r| T::lit(r)).collect(),
        angles: (0..spec.n_theta).map(|k| T::lit(k as f64 * dtheta)).collect(),
        dtheta: T::lit(dtheta),
        radial_weights: radial_weights.into_iter().map(T::lit).collect(),
        ring_annulus,
        radii_f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(mesh: &PolarMesh<f64>, f: impl Fn(f64, f64) -> f64) -> f64 {
        (0..mesh.num_nodes())
            .map(|n| {
                let (r, t) = mesh.position(n);
                mesh.ring_weight(mesh.ring_of(n)) * f(r, t)
            })
            .sum()
    }

    #[test]
    fn weights_sum_to_disk_area() {
        let m = build_mesh::<f64>(MeshSpec::geometric(64, 128), 2f64.powi(-6)).unwrap();
        let s: f64 = m.node_weights().iter().sum();
        assert!((s - PI).abs() < 1e-10);
        let u = build_mesh::<f64>(MeshSpec::uniform(64, 128), 0.1).unwrap();
        let s: f64 = u.node_weights().iter().sum();
        assert!((s - PI).abs() < 1e-10);
    }

    #[test]
    fn quadrature_exact_for_quadratic_radial_moment() {
        let m = build_mesh::<f64>(MeshSpec::geometric(64, 128), 2f64.powi(-7)).unwrap();
        let v = integrate(&m, |r, t| r * t.cos() * t.cos());
        assert!((v - PI / 3.0).abs() < 1e-8, "{v}");
        let u = build_mesh::<f64>(MeshSpec::uniform(64, 128), 0.1).unwrap();
        let v = integrate(&u, |r, t| r * t.cos() * t.cos());
        assert!((v - PI / 3.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn weights_are_positive() {
        for p in 4..=10 {
            let m = build_mesh::<f64>(MeshSpec::geometric(96, 192), 2f64.powi(-p)).unwrap();
            assert!(m.radial_weights.iter().skip(1).all(|&w| w > 0.0), "h = 2^-{p}");
        }
        let u = build_mesh::<f64>(MeshSpec::uniform(32, 64), 0.1).unwrap();
        assert!(u.radial_weights.iter().skip(1).all(|&w| w > 0.0));
    }

    #[test]
    fn geometric_core_and_octave_resolution() {
        let h = 2f64.powi(-6);
        let m = build_mesh::<f64>(MeshSpec::geometric(64, 128), h).unwrap();
        assert_eq!(m.radii.len(), 65);
        assert!((m.r_min() - h / 4.0).abs() < 1e-18);
        let inside_half = m.radii[1..].iter().filter(|&&r| r <= h / 2.0 * (1.0 + 1e-12)).count();
        assert!(inside_half >= 2);
        let inside_h = m.radii[1..].iter().filter(|&&r| r <= h * (1.0 + 1e-12)).count();
        assert!(inside_h >= 2);
        for j in 0..6u32 {
            let rings = m.ring_annulus.iter().filter(|a| **a == Some(j)).count();
            assert!(rings >= 8, "octave {j} has {rings} rings");
        }
        for w in m.radii.windows(2) {
            assert!(w[1] > w[0]);
        }
        for j in 0..=8 {
            assert!(m.ring_at(2f64.powi(-j)).is_some(), "dyadic radius 2^-{j} missing");
        }
    }

    #[test]
    fn uniform_radii() {
        let m = build_mesh::<f64>(MeshSpec::uniform(64, 128), 0.1).unwrap();
        for (i, r) in m.radii.iter().enumerate() {
            assert_eq!(*r, i as f64 / 64.0);
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(matches!(
            build_mesh::<f64>(MeshSpec::geometric(16, 64), 2f64.powi(-9)),
            Err(Error::InfeasibleMesh(_))
        ));
        assert!(build_mesh::<f64>(MeshSpec::geometric(64, 63), 0.1).is_err());
        assert!(build_mesh::<f64>(MeshSpec::geometric(64, 64), 0.3).is_err());
        assert!(build_mesh::<f64>(MeshSpec::geometric(8, 64), 0.1).is_err());
    }

    #[test]
    fn annulus_masks_partition_non_center_nodes() {
        let h = 2f64.powi(-6);
        let m = build_mesh::<f64>(MeshSpec::geometric(64, 128), h).unwrap();
        let mask0 = m.annulus_mask(0).unwrap();
        for &n in &mask0 {
            let r = m.position(n).0;
            assert!(r > 0.5 && r <= 1.0);
        }
        let big_m = 5u32;
        let mut seen = vec![false; m.num_nodes()];
        for j in 0..big_m {
            for n in m.annulus_mask(j).unwrap() {
                assert!(!seen[n]);
                seen[n] = true;
            }
        }
        for n in m.ball_nodes(2f64.powi(-(big_m as i32))) {
            if n != 0 {
                assert!(!seen[n]);
                seen[n] = true;
            }
        }
        assert!(seen.iter().skip(1).all(|&s| s));
        assert!(matches!(m.annulus_mask(8), Err(Error::AnnulusBelowResolution { .. })));
    }

    #[test]
    fn region_weights_are_additive() {
        let m = build_mesh::<f64>(MeshSpec::geometric(64, 128), 2f64.powi(-6)).unwrap();
        let full = m.region_radial_weights(&Region::unit_disk()).unwrap();
        let mut acc = vec![0.0; full.len()];
        let cuts = [0.0, 0.013, 0.2, 0.5, 0.77, 1.0];
        for w in cuts.windows(2) {
            let part = m.region_radial_weights(&Region::Annulus { inner: w[0], outer: w[1] }).unwrap();
            for (a, p) in acc.iter_mut().zip(&part) {
                *a += p;
            }
        }
        for (a, f) in acc.iter().zip(&full) {
            assert!((a - f).abs() < 1e-15);
        }
    }
}
