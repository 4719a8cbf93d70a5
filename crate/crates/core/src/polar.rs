//! Derivative operators on the polar mesh.
//!
//! Radial derivatives use nonuniform three-point stencils (four-point one-sided
//! on the boundary ring, through the shared center node on the first ring);
//! angular derivatives are spectral on each ring. Both are linear, so the
//! adjoint used for gradients is the exact transpose.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::mesh::PolarMesh;
use crate::scalar::Real;
use crate::spectral::PeriodicSpectral;

/// Finite-difference weights for derivatives of order 0..=2 at `x0` (Fornberg's recursion).
pub fn fornberg(x0: f64, xs: &[f64]) -> Vec<[f64; 3]> {
    let n = xs.len();
    let m = 2usize;
    let mut c = vec![[0.0f64; 3]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone, Copy)]
pub struct RadialStencil<T: Real> {
    pub rings: [usize; 4],
    pub d1: [T; 4],
    pub d2: [T; 4],
    pub len: usize,
}

/// Per-ring arrays (one entry per angle) of the polar derivatives of a `D`-component field.
#[derive(Debug, Clone)]
pub struct RingDerivs<T: Real, const D: usize> {
    pub value: Vec<[T; D]>,
    pub r: Vec<[T; D]>,
    pub t: Vec<[T; D]>,
    pub rr: Vec<[T; D]>,
    pub tt: Vec<[T; D]>,
    pub rt: Vec<[T; D]>,
}

impl<T: Real, const D: usize> RingDerivs<T, D> {
    pub fn zeros(n: usize) -> Self {
        let z = vec![[T::zero(); D]; n];
        Self { value: z.clone(), r: z.clone(), t: z.clone(), rr: z.clone(), tt: z.clone(), rt: z }
    }
}

#[derive(Debug, Clone)]
pub struct PolarOperators<T: Real> {
    n_r: usize,
    n_theta: usize,
    pub radii: Vec<T>,
    /// Indexed by ring; entry 0 unused.
    pub radial: Vec<RadialStencil<T>>,
    angular: PeriodicSpectral<T>,
    /// For each ring `j`, the `(source ring, stencil slot)` pairs that read it.
    readers: Vec<Vec<(usize, usize)>>,
}

impl<T: Real> PolarOperators<T> {
    pub fn new(mesh: &PolarMesh<T>) -> Self {
        Self::confined(mesh, 0, mesh.n_r())
    }

    /// Operators whose radial stencils on rings `lo..=hi` read only rings in `lo..=hi`
    /// (one-sided at both ends). Rings outside the range keep centered stencils.
    pub fn confined(mesh: &PolarMesh<T>, lo: usize, hi: usize) -> Self {
        let n_r = mesh.n_r();
        assert!(hi <= n_r && hi >= lo + 3, "confined ring range {lo}..={hi} is too short");
        let radii = mesh.radii_f64();
        let mut radial = vec![
            RadialStencil { rings: [0; 4], d1: [T::zero(); 4], d2: [T::zero(); 4], len: 0 };
            n_r + 1
        ];
        let mut readers = vec![Vec::new(); n_r + 1];
        for (i, stencil) in radial.iter_mut().enumerate().skip(1) {
            let rings: Vec<usize> = if i == hi {
                vec![hi - 3, hi - 2, hi - 1, hi]
            } else if i == lo {
                vec![lo, lo + 1, lo + 2, lo + 3]
            } else if i < n_r {
                vec![i - 1, i, i + 1]
            } else {
                vec![n_r - 3, n_r - 2, n_r - 1, n_r]
            };
            let xs: Vec<f64> = rings.iter().map(|&j| radii[j]).collect();
            let w = fornberg(radii[i], &xs);
            for (s, &ring) in rings.iter().enumerate() {
                stencil.rings[s] = ring;
                stencil.d1[s] = T::lit(w[s][1]);
                stencil.d2[s] = T::lit(w[s][2]);
                readers[ring].push((i, s));
            }
            stencil.len = rings.len();
        }
        Self {
            n_r,
            n_theta: mesh.n_theta(),
            radii: mesh.radii.clone(),
            radial,
            angular: PeriodicSpectral::new(mesh.n_theta()),
            readers,
        }
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn angular(&self) -> &PeriodicSpectral<T> {
        &self.angular
    }

    #[inline]
    fn node(&self, ring: usize, k: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.n_theta + k
        }
    }

    /// Derivatives on ring `i` (1-based) of the nodal field `values`.
    pub fn ring_derivatives<const D: usize>(&self, values: &[[T; D]], i: usize) -> RingDerivs<T, D> {
        let n = self.n_theta;
        let st = &self.radial[i];
        let mut out = RingDerivs::zeros(n);
        for k in 0..n {
            out.value[k] = values[self.node(i, k)];
            let mut yr = [T::zero(); D];
            let mut yrr = [T::zero(); D];
            for s in 0..st.len {
                let v = &values[self.node(st.rings[s], k)];
                for c in 0..D {
                    yr[c] += st.d1[s] * v[c];
                    yrr[c] += st.d2[s] * v[c];
                }
            }
            out.r[k] = yr;
            out.rr[k] = yrr;
        }
        let mut x = vec![T::zero(); n];
        let mut d1 = vec![T::zero(); n];
        let mut d2 = vec![T::zero(); n];
        for c in 0..D {
            for k in 0..n {
                x[k] = out.value[k][c];
            }
            self.angular.first_and_second(&x, &mut d1, &mut d2);
            for k in 0..n {
                out.t[k][c] = d1[k];
                out.tt[k][c] = d2[k];
                x[k] = out.r[k][c];
            }
            let drt = self.angular.derivative(&x, 1);
            for k in 0..n {
                out.rt[k][c] = drt[k];
            }
        }
        out
    }

    /// Derivatives on every ring `1..=n_r` (vector index `ring - 1`).
    pub fn derivatives<const D: usize>(&self, values: &[[T; D]]) -> Vec<RingDerivs<T, D>> {
        (1..=self.n_r).into_par_iter().map(|i| self.ring_derivatives(values, i)).collect()
    }

    /// `-D1 a1 + D2 a2` (the transpose of the angular first/second derivative pair).
    fn angular_adjoint(&self, a1: &[T], a2: &[T], out: &mut [T]) {
        let n = self.n_theta;
        let s = &self.angular;
        let mut buf: Vec<Complex<T>> = (0..n).map(|k| Complex::new(a1[k], a2[k])).collect();
        s.forward_in_place(&mut buf);
        let half = T::lit(0.5);
        let mut w = vec![Complex::new(T::zero(), T::zero()); n];
        for m in 0..n {
            let z = buf[m];
            let zc = buf[(n - m) % n].conj();
            let spec1 = (z + zc) * half;
            let spec2 = (z - zc) * Complex::new(T::zero(), -half);
            w[m] = -(spec1 * s.multiplier(m, 1)) + spec2 * s.multiplier(m, 2);
        }
        s.inverse_in_place(&mut w);
        let inv_n = T::one() / T::lit(n as f64);
        for k in 0..n {
            out[k] = w[k].re * inv_n;
        }
    }

    /// Transpose of [`derivatives`]: maps per-ring cotangents of `(value, r, t, rr, tt, rt)`
    /// back to a nodal covector. `value` cotangents act on the ring's own nodes.
    pub fn adjoint<const D: usize>(&self, cot: &[RingDerivs<T, D>]) -> Vec<[T; D]> {
        let n = self.n_theta;
        // Per ring: cotangent on own nodes (from value/t/tt) and on the radial derivative (r + rt).
        let per_ring: Vec<(Vec<[T; D]>, Vec<[T; D]>)> = cot
            .par_iter()
            .map(|c| {
                let mut own = c.value.clone();
                let mut radial = c.r.clone();
                let mut a1 = vec![T::zero(); n];
                let mut a2 = vec![T::zero(); n];
                let mut tmp = vec![T::zero(); n];
                let zero = vec![T::zero(); n];
                for comp in 0..D {
                    for k in 0..n {
                        a1[k] = c.t[k][comp];
                        a2[k] = c.tt[k][comp];
                    }
                    self.angular_adjoint(&a1, &a2, &mut tmp);
                    for k in 0..n {
                        own[k][comp] += tmp[k];
                        a1[k] = c.rt[k][comp];
                    }
                    self.angular_adjoint(&a1, &zero, &mut tmp);
                    for k in 0..n {
                        radial[k][comp] += tmp[k];
                    }
                }
                (own, radial)
            })
            .collect();
        let gather = |j: usize, k: usize| -> [T; D] {
            let mut g = if j == 0 { [T::zero(); D] } else { per_ring[j - 1].0[k] };
            for &(i, s) in &self.readers[j] {
                let st = &self.radial[i];
                let (d1, d2) = (st.d1[s], st.d2[s]);
                let rad = &per_ring[i - 1].1[k];
                let rr = &cot[i - 1].rr[k];
                for comp in 0..D {
                    g[comp] += d1 * rad[comp] + d2 * rr[comp];
                }
            }
            g
        };
        let mut out = vec![[T::zero(); D]; 1 + self.n_r * n];
        let center = (0..n).fold([T::zero(); D], |mut acc, k| {
            let g = gather(0, k);
            for comp in 0..D {
                acc[comp] += g[comp];
            }
            acc
        });
        out[0] = center;
        out[1..]
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(idx, chunk)| {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = gather(idx + 1, k);
                }
            });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshSpec};

    #[test]
    fn fornberg_three_point() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0]);
        assert!((w[0][1] + 0.5).abs() < 1e-15 && (w[2][1] - 0.5).abs() < 1e-15);
        assert!((w[0][2] - 1.0).abs() < 1e-15 && (w[1][2] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_exact_for_low_order_fields() {
        let mesh = build_mesh::<f64>(MeshSpec::geometric(40, 64), 0.05).unwrap();
        let ops = PolarOperators::new(&mesh);
        // f = x1^2 + 3 x2 = r^2 cos^2 θ + 3 r sin θ
        let vals: Vec<[f64; 1]> = (0..mesh.num_nodes())
            .map(|n| {
                let (r, t) = mesh.position(n);
                [r * r * t.cos() * t.cos() + 3.0 * r * t.sin()]
            })
            .collect();
        let d = ops.derivatives(&vals);
        for i in [1usize, 7, 40] {
            let r = mesh.radii[i];
            for k in [0usize, 5, 33] {
                let t = mesh.angles[k];
                let dd = &d[i - 1];
                assert!((dd.r[k][0] - (2.0 * r * t.cos().powi(2) + 3.0 * t.sin())).abs() < 1e-9);
                assert!((dd.rr[k][0] - 2.0 * t.cos().powi(2)).abs() < 1e-8);
                assert!((dd.t[k][0] - (-2.0 * r * r * t.cos() * t.sin() + 3.0 * r * t.cos())).abs() < 1e-11);
                assert!((dd.rt[k][0] - (-4.0 * r * t.cos() * t.sin() + 3.0 * t.cos())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let mesh = build_mesh::<f64>(MeshSpec::uniform(24, 64), 0.1).unwrap();
        let ops = PolarOperators::new(&mesh);
        let nn = mesh.num_nodes();
        let x: Vec<[f64; 2]> = (0..nn).map(|i| [((i * 7) % 13) as f64 - 6.0, ((i * 3) % 5) as f64]).collect();
        let d = ops.derivatives(&x);
        let mut cot: Vec<RingDerivs<f64, 2>> = Vec::new();
        let mut lhs = 0.0;
        for (ring, dd) in d.iter().enumerate() {
            let mut c = RingDerivs::zeros(64);
            for k in 0..64 {
                for comp in 0..2 {
                    let s = (ring * 64 + k + comp) as f64;
                    let vals = [(s * 0.37).sin(), (s * 0.11).cos(), (s * 0.7).sin(), (s * 0.23).cos(), (s * 1.3).sin(), (s * 0.05).cos()];
                    c.value[k][comp] = vals[0];
                    c.r[k][comp] = vals[1];
                    c.t[k][comp] = vals[2];
                    c.rr[k][comp] = vals[3];
                    c.tt[k][comp] = vals[4];
                    c.rt[k][comp] = vals[5];
                    lhs += vals[0] * dd.value[k][comp]
                        + vals[1] * dd.r[k][comp]
                        + vals[2] * dd.t[k][comp]
                        + vals[3] * dd.rr[k][comp]
                        + vals[4] * dd.tt[k][comp]
                        + vals[5] * dd.rt[k][comp];
                }
            }
            cot.push(c);
        }
        let g = ops.adjoint(&cot);
        let rhs: f64 = g.iter().zip(&x).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
