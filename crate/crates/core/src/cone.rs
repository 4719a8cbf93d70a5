//! The 1-homogeneous cone `ỹ(x) = |x| γ(x/|x|)` and its bending constant.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::curve::BoundaryCurve;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::scalar::{add, norm_sq, Real, Vec3};
use crate::spectral::PeriodicSpectral;

/// Agreement demanded between the angular and the 2-D quadrature value of C1.
pub const C1_ROUTE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeEvaluation<T: Real> {
    pub r: T,
    pub theta: T,
    pub value: Vec3<T>,
    /// Columns are the derivatives along the radial and angular unit vectors.
    pub gradient: [[T; 2]; 3],
    pub hessian_norm_sq: T,
}

/// Trigonometric interpolants of the stored curve arrays.
#[derive(Debug, Clone)]
pub struct Cone<T: Real> {
    spectral: PeriodicSpectral<T>,
    gamma: [Vec<Complex<T>>; 3],
    dgamma: [Vec<Complex<T>>; 3],
    d2gamma: [Vec<Complex<T>>; 3],
}

fn component_spectra<T: Real>(s: &PeriodicSpectral<T>, v: &[Vec3<T>]) -> [Vec<Complex<T>>; 3] {
    let comp = |c: usize| s.spectrum(&v.iter().map(|p| p[c]).collect::<Vec<_>>());
    [comp(0), comp(1), comp(2)]
}

impl<T: Real> Cone<T> {
    pub fn new(curve: &BoundaryCurve<T>) -> Self {
        let spectral = PeriodicSpectral::new(curve.len());
        Self {
            gamma: component_spectra(&spectral, &curve.gamma),
            dgamma: component_spectra(&spectral, &curve.dgamma),
            d2gamma: component_spectra(&spectral, &curve.d2gamma),
            spectral,
        }
    }

    fn sample(&self, spectra: &[Vec<Complex<T>>; 3], theta: T) -> Vec3<T> {
        [
            self.spectral.interpolate(&spectra[0], theta, 0),
            self.spectral.interpolate(&spectra[1], theta, 0),
            self.spectral.interpolate(&spectra[2], theta, 0),
        ]
    }

    pub fn evaluate(&self, r: T, theta: T) -> Result<ConeEvaluation<T>> {
        if !(r > T::zero()) {
            return Err(Error::ConeApex);
        }
        let g = self.sample(&self.gamma, theta);
        let dg = self.sample(&self.dgamma, theta);
        let d2g = self.sample(&self.d2gamma, theta);
        let bend = add(&g, &d2g);
        Ok(ConeEvaluation {
            r,
            theta,
            value: [r * g[0], r * g[1], r * g[2]],
            gradient: [[g[0], dg[0]], [g[1], dg[1]], [g[2], dg[2]]],
            hessian_norm_sq: norm_sq(&bend) / (r * r),
        })
    }
}

pub fn evaluate_cone<T: Real>(c: &BoundaryCurve<T>, r: T, theta: T) -> Result<ConeEvaluation<T>> {
    Cone::new(c).evaluate(r, theta)
}

/// `∫_0^{2π} |γ + γ''|² dθ` by the trapezoid rule on the stored samples.
pub fn c1_angular<T: Real>(c: &BoundaryCurve<T>) -> f64 {
    let n = c.len();
    let sum: f64 = c
        .gamma
        .iter()
        .zip(&c.d2gamma)
        .map(|(g, d2)| norm_sq(&add(g, d2)).to_f64_lossy())
        .sum();
    sum * 2.0 * PI / n as f64
}

/// Curve position and first two derivatives re-derived from the position samples only.
struct PositionInterpolant {
    spectral: PeriodicSpectral<f64>,
    spectra: [Vec<Complex<f64>>; 3],
}

impl PositionInterpolant {
    fn new<T: Real>(c: &BoundaryCurve<T>) -> Self {
        let spectral = PeriodicSpectral::<f64>::new(c.len());
        let comp = |k: usize| spectral.spectrum(&c.gamma.iter().map(|p| p[k].to_f64_lossy()).collect::<Vec<_>>());
        let spectra = [comp(0), comp(1), comp(2)];
        Self { spectral, spectra }
    }

    fn at(&self, theta: f64, order: u32) -> [f64; 3] {
        [
            self.spectral.interpolate(&self.spectra[0], theta, order),
            self.spectral.interpolate(&self.spectra[1], theta, order),
            self.spectral.interpolate(&self.spectra[2], theta, order),
        ]
    }
}

/// Cartesian Hessian `∂_a ∂_b ỹ_i` assembled term by term from the chain rule.
fn cartesian_hessian(r: f64, theta: f64, g: &[f64; 3], dg: &[f64; 3], d2g: &[f64; 3]) -> [[[f64; 2]; 2]; 3] {
    let x = [r * theta.cos(), r * theta.sin()];
    let xhat = [x[0] / r, x[1] / r];
    let t = [-xhat[1], xhat[0]];
    let mut h = [[[0.0; 2]; 2]; 3];
    for i in 0..3 {
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { 1.0 } else { 0.0 };
                h[i][a][b] = (dg[i] * t[b] * xhat[a]
                    + g[i] * (delta - xhat[a] * xhat[b])
                    + d2g[i] * t[a] * t[b]
                    - dg[i] * xhat[a] * t[b])
                    / r;
            }
        }
    }
    h
}

/// `(1/ln(b/a)) ∫_{B_b \ B_a} |∇²ỹ|² dx` by Gauss–Legendre in r and a shifted trapezoid in θ.
///
/// The curve derivatives are recomputed from the position samples, so this route
/// does not read the stored derivative arrays.
pub fn annulus_bending_2d<T: Real>(c: &BoundaryCurve<T>, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidParameter(format!("annulus needs 0 < a < b, got ({a}, {b})")));
    }
    let interp = PositionInterpolant::new(c);
    let m = 2 * c.len();
    let dtheta = 2.0 * PI / m as f64;
    let (rs, ws) = gauss_legendre_on(16, a, b);
    let mut total = 0.0;
    for j in 0..m {
        let theta = (j as f64 + 0.5) * dtheta;
        let g = interp.at(theta, 0);
        let dg = interp.at(theta, 1);
        let d2g = interp.at(theta, 2);
        let mut col = 0.0;
        for (&r, &w) in rs.iter().zip(&ws) {
            let h = cartesian_hessian(r, theta, &g, &dg, &d2g);
            let sq: f64 = h.iter().flat_map(|m| m.iter().flat_map(|row| row.iter())).map(|v| v * v).sum();
            col += w * sq * r;
        }
        total += col * dtheta;
    }
    Ok(total / (b / a).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Report {
    pub c1: f64,
    pub c1_2d_quadrature: f64,
    pub relative_gap: f64,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-14 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// C1 by the angular reduction, cross-checked against the 2-D annulus quadrature.
pub fn c1_constant<T: Real>(c: &BoundaryCurve<T>) -> Result<C1Report> {
    let angular = c1_angular(c);
    let quadrature = annulus_bending_2d(c, 0.5, 1.0)?;
    let gap = relative_gap(angular, quadrature);
    if gap > C1_ROUTE_TOLERANCE {
        return Err(Error::C1Mismatch { angular, quadrature, gap });
    }
    Ok(C1Report { c1: angular, c1_2d_quadrature: quadrature, relative_gap: gap })
}

/// Frobenius norm of `∇ỹᵀ∇ỹ − Id` at `(r, θ)` from the Cartesian gradient.
pub fn metric_defect<T: Real>(cone: &Cone<T>, r: T, theta: T) -> Result<f64> {
    let ev = cone.evaluate(r, theta)?;
    let th = theta.to_f64_lossy();
    let xhat = [th.cos(), th.sin()];
    let t = [-xhat[1], xhat[0]];
    let mut grad = [[0.0f64; 2]; 3];
    for i in 0..3 {
        let g = ev.gradient[i][0].to_f64_lossy();
        let dg = ev.gradient[i][1].to_f64_lossy();
        for a in 0..2 {
            grad[i][a] = g * xhat[a] + dg * t[a];
        }
    }
    let mut defect = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let gab: f64 = (0..3).map(|i| grad[i][a] * grad[i][b]).sum();
            let d = gab - if a == b { 1.0 } else { 0.0 };
            defect += d * d;
        }
    }
    Ok(defect.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_equator, CurveSpec};

    fn wave(n: usize) -> BoundaryCurve<f64> {
        CurveSpec::latitude_wave(0.2, 3, n).build().unwrap()
    }

    #[test]
    fn equator_cone_is_flat() {
        let e = make_equator::<f64>(256).unwrap();
        let ev = evaluate_cone(&e, 0.7, 1.3).unwrap();
        assert!(ev.hessian_norm_sq.abs() < 1e-24);
        let rep = c1_constant(&e).unwrap();
        assert!(rep.c1.abs() < 1e-24 && rep.c1_2d_quadrature.abs() < 1e-20, "{rep:?}");
    }

    #[test]
    fn apex_rejected() {
        let e = make_equator::<f64>(64).unwrap();
        assert!(matches!(evaluate_cone(&e, 0.0, 0.0), Err(Error::ConeApex)));
    }

    #[test]
    fn hessian_scales_inverse_square() {
        let w = wave(256);
        let cone = Cone::new(&w);
        for &th in &[0.0, 0.4, 2.9] {
            let a = cone.evaluate(0.3, th).unwrap().hessian_norm_sq;
            let b = cone.evaluate(0.6, th).unwrap().hessian_norm_sq;
            assert!((a / b - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn value_is_r_gamma() {
        let w = wave(256);
        let ev = evaluate_cone(&w, 1.0, 0.0).unwrap();
        for c in 0..3 {
            assert!((ev.value[c] - w.gamma[0][c]).abs() < 1e-13);
        }
        let ev = evaluate_cone(&w, 0.25, w.theta[17]).unwrap();
        for c in 0..3 {
            assert!((ev.value[c] - 0.25 * w.gamma[17][c]).abs() < 1e-13);
        }
    }

    #[test]
    fn c1_routes_agree_and_are_annulus_independent() {
        let w = wave(256);
        let rep = c1_constant(&w).unwrap();
        assert!(rep.c1 > 0.0);
        assert!(rep.relative_gap < 1e-8, "{rep:?}");
        let inner = annulus_bending_2d(&w, 0.25, 0.5).unwrap();
        assert!(relative_gap(inner, rep.c1) < 1e-8);
        let odd = annulus_bending_2d(&w, 0.1, 0.73).unwrap();
        assert!(relative_gap(odd, rep.c1) < 1e-8);
    }

    /// Richardson extrapolation over n ∈ {256, 512, 1024} as the converged reference.
    #[test]
    fn c1_converges_under_refinement() {
        let v: Vec<f64> = [256, 512, 1024].iter().map(|&n| c1_angular(&wave(n))).collect();
        let richardson = v[2] + (v[2] - v[1]) / 3.0;
        assert!(((v[0] - richardson) / richardson).abs() < 1e-6, "{v:?}");
        assert!(((v[1] - richardson) / richardson).abs() < 1e-6);
    }

    #[test]
    fn corrupted_derivatives_are_detected() {
        let mut w = wave(256);
        for d in w.d2gamma.iter_mut() {
            d[2] *= 1.001;
        }
        assert!(matches!(c1_constant(&w), Err(Error::C1Mismatch { .. })));
    }

    #[test]
    fn cone_is_isometric_off_apex() {
        let w = wave(256);
        let cone = Cone::new(&w);
        for j in (0..256).step_by(7) {
            for &r in &[0.01, 0.3, 1.0] {
                assert!(metric_defect(&cone, r, w.theta[j]).unwrap() < 1e-10);
            }
        }
    }
}
