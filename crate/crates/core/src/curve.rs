//! Unit-speed closed spherical boundary curves.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm_sq, Real, Vec3};
use crate::spectral::PeriodicSpectral;

/// Curves whose sample-matrix defect falls below this are reported as planar.
pub const PLANARITY_THRESHOLD: f64 = 1e-6;
pub const MIN_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    Equator,
    LatitudeWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub family: CurveFamily,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: u32,
    pub resolution: usize,
}

fn default_wavenumber() -> u32 {
    3
}

impl CurveSpec {
    pub fn equator(resolution: usize) -> Self {
        Self { family: CurveFamily::Equator, amplitude: 0.0, wavenumber: 3, resolution }
    }

    pub fn latitude_wave(amplitude: f64, wavenumber: u32, resolution: usize) -> Self {
        Self { family: CurveFamily::LatitudeWave, amplitude, wavenumber, resolution }
    }

    pub fn build<T: Real>(&self) -> Result<BoundaryCurve<T>> {
        match self.family {
            CurveFamily::Equator => make_equator(self.resolution),
            CurveFamily::LatitudeWave => make_latitude_wave(self),
        }
    }
}

/// Sampled closed curve `γ` on the unit sphere with derivative samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve<T: Real> {
    pub theta: Vec<T>,
    pub gamma: Vec<Vec3<T>>,
    pub dgamma: Vec<Vec3<T>>,
    pub d2gamma: Vec<Vec3<T>>,
    pub d3gamma: Vec<Vec3<T>>,
    /// Smallest singular value of the 3 x n sample matrix, divided by sqrt(n).
    pub planarity_defect: f64,
    /// |φ(2π) − φ(0) − 2π| of the longitude construction (zero for the equator).
    pub closure_residual: f64,
    pub spec: Option<CurveSpec>,
}

impl<T: Real> BoundaryCurve<T> {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_planar(&self) -> bool {
        self.planarity_defect < PLANARITY_THRESHOLD
    }

    /// Keeps every `len / n`-th sample.
    pub fn subsample(&self, n: usize) -> Result<BoundaryCurve<T>> {
        if n == 0 || self.len() % n != 0 {
            return Err(Error::Mismatch(format!(
                "curve resolution {} is not a multiple of {}",
                self.len(),
                n
            )));
        }
        let stride = self.len() / n;
        let pick = |v: &Vec<Vec3<T>>| (0..n).map(|k| v[k * stride]).collect::<Vec<_>>();
        Ok(BoundaryCurve {
            theta: (0..n).map(|k| self.theta[k * stride]).collect(),
            gamma: pick(&self.gamma),
            dgamma: pick(&self.dgamma),
            d2gamma: pick(&self.d2gamma),
            d3gamma: pick(&self.d3gamma),
            planarity_defect: self.planarity_defect,
            closure_residual: self.closure_residual,
            spec: self.spec,
        })
    }

    /// Stable short identifier of the sampled positions.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        for g in &self.gamma {
            for c in g {
                hasher.update(c.to_f64_lossy().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Real>(&self) -> BoundaryCurve<U> {
        let cv = |v: &Vec<Vec3<T>>| {
            v.iter()
                .map(|p| [U::lit(p[0].to_f64_lossy()), U::lit(p[1].to_f64_lossy()), U::lit(p[2].to_f64_lossy())])
                .collect::<Vec<_>>()
        };
        BoundaryCurve {
            theta: self.theta.iter().map(|t| U::lit(t.to_f64_lossy())).collect(),
            gamma: cv(&self.gamma),
            dgamma: cv(&self.dgamma),
            d2gamma: cv(&self.d2gamma),
            d3gamma: cv(&self.d3gamma),
            planarity_defect: self.planarity_defect,
            closure_residual: self.closure_residual,
            spec: self.spec,
        }
    }

    pub fn to_document(&self) -> CurveDocument {
        let cv = |v: &Vec<Vec3<T>>| {
            v.iter()
                .map(|p| [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()])
                .collect::<Vec<_>>()
        };
        CurveDocument {
            theta: self.theta.iter().map(|t| t.to_f64_lossy()).collect(),
            gamma: cv(&self.gamma),
            dgamma: cv(&self.dgamma),
            d2gamma: cv(&self.d2gamma),
            d3gamma: Some(cv(&self.d3gamma)),
            spec: self.spec,
            closure_residual: Some(self.closure_residual),
        }
    }

    pub fn from_document(doc: &CurveDocument) -> Result<Self> {
        let n = doc.theta.len();
        check_resolution(n)?;
        if doc.gamma.len() != n || doc.dgamma.len() != n || doc.d2gamma.len() != n {
            return Err(Error::CurveSpec("curve arrays have inconsistent lengths".into()));
        }
        let gamma: Vec<[f64; 3]> = doc.gamma.clone();
        let d3 = match &doc.d3gamma {
            Some(d3) if d3.len() == n => d3.clone(),
            _ => spectral_derivatives(&gamma, 3),
        };
        let curve = BoundaryCurve::<f64> {
            theta: doc.theta.clone(),
            planarity_defect: planarity_defect(&gamma),
            gamma,
            dgamma: doc.dgamma.clone(),
            d2gamma: doc.d2gamma.clone(),
            d3gamma: d3,
            closure_residual: doc.closure_residual.unwrap_or(0.0),
            spec: doc.spec,
        };
        Ok(curve.cast())
    }
}

/// JSON layout of a sampled curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveDocument {
    pub theta: Vec<f64>,
    pub gamma: Vec<[f64; 3]>,
    pub dgamma: Vec<[f64; 3]>,
    pub d2gamma: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d3gamma: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CurveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure_residual: Option<f64>,
}

fn check_resolution(n: usize) -> Result<()> {
    if n < MIN_RESOLUTION || n % 2 != 0 {
        Err(Error::CurveResolution(n))
    } else {
        Ok(())
    }
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

fn spectral_derivatives(samples: &[[f64; 3]], order: u32) -> Vec<[f64; 3]> {
    let spec = PeriodicSpectral::<f64>::new(samples.len());
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let x: Vec<f64> = samples.iter().map(|p| p[c]).collect();
            spec.derivative(&x, order)
        })
        .collect();
    (0..samples.len()).map(|j| [comps[0][j], comps[1][j], comps[2][j]]).collect()
}

/// Smallest singular value of the 3 x n matrix of samples, normalized by sqrt(n).
pub fn planarity_defect(samples: &[[f64; 3]]) -> f64 {
    let mut gram = Matrix3::<f64>::zeros();
    for p in samples {
        for a in 0..3 {
            for b in 0..3 {
                gram[(a, b)] += p[a] * p[b];
            }
        }
    }
    gram /= samples.len() as f64;
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    min.max(0.0).sqrt()
}

/// The great circle `(cos θ, sin θ, 0)`.
pub fn make_equator<T: Real>(n: usize) -> Result<BoundaryCurve<T>> {
    check_resolution(n)?;
    let theta = grid(n);
    let gamma: Vec<[f64; 3]> = theta.iter().map(|t| [t.cos(), t.sin(), 0.0]).collect();
    let dgamma: Vec<[f64; 3]> = theta.iter().map(|t| [-t.sin(), t.cos(), 0.0]).collect();
    let d2gamma: Vec<[f64; 3]> = gamma.iter().map(|g| [-g[0], -g[1], 0.0]).collect();
    let d3gamma: Vec<[f64; 3]> = dgamma.iter().map(|g| [-g[0], -g[1], 0.0]).collect();
    let curve = BoundaryCurve::<f64> {
        planarity_defect: planarity_defect(&gamma),
        theta,
        gamma,
        dgamma,
        d2gamma,
        d3gamma,
        closure_residual: 0.0,
        spec: Some(CurveSpec::equator(n)),
    };
    Ok(curve.cast())
}

/// Colatitude `ψ(θ) = π/2 − offset + ε cos(kθ)` and its derivative.
fn colatitude(theta: f64, offset: f64, amplitude: f64, k: f64) -> (f64, f64) {
    (
        0.5 * PI - offset + amplitude * (k * theta).cos(),
        -amplitude * k * (k * theta).sin(),
    )
}

/// Longitude rate `φ' = sqrt(1 − ψ'^2) / sin ψ` on the grid.
fn longitude_rate(theta: &[f64], offset: f64, amplitude: f64, k: f64) -> Vec<f64> {
    theta
        .iter()
        .map(|&t| {
            let (psi, dpsi) = colatitude(t, offset, amplitude, k);
            (1.0 - dpsi * dpsi).max(0.0).sqrt() / psi.sin()
        })
        .collect()
}

/// Mean longitude rate minus one; zero exactly when the curve closes after one turn.
fn closure_defect(theta: &[f64], offset: f64, amplitude: f64, k: f64) -> f64 {
    let rate = longitude_rate(theta, offset, amplitude, k);
    rate.iter().sum::<f64>() / rate.len() as f64 - 1.0
}

fn closure_slope(theta: &[f64], offset: f64, amplitude: f64, k: f64) -> f64 {
    let s: f64 = theta
        .iter()
        .map(|&t| {
            let (psi, dpsi) = colatitude(t, offset, amplitude, k);
            (1.0 - dpsi * dpsi).max(0.0).sqrt() * psi.cos() / (psi.sin() * psi.sin())
        })
        .sum();
    s / theta.len() as f64
}

/// Finds the latitude offset that closes the curve, by safeguarded Newton on the closure defect.
pub(crate) fn shoot_offset(theta: &[f64], amplitude: f64, k: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 0.5 * PI - amplitude - 1e-6;
    if hi <= lo {
        return Err(Error::ShootingFailed(format!("amplitude {amplitude} leaves no room for an offset")));
    }
    let f_lo = closure_defect(theta, lo, amplitude, k);
    if f_lo >= 0.0 {
        return Ok(0.0);
    }
    let f_hi = closure_defect(theta, hi, amplitude, k);
    if !(f_hi > 0.0) {
        return Err(Error::ShootingFailed("closure defect does not change sign".into()));
    }
    let mut c = (amplitude * ((k * k - 1.0) / 2.0).sqrt()).clamp(lo, hi);
    for _ in 0..200 {
        let f = closure_defect(theta, c, amplitude, k);
        if f.abs() <= 1e-15 {
            return Ok(c);
        }
        if f < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let slope = closure_slope(theta, c, amplitude, k);
        let newton = c - f / slope;
        c = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 {
            return Ok(c);
        }
    }
    Err(Error::ShootingFailed("no convergence in 200 iterations".into()))
}

/// Builds the latitude-wave curve `γ = (sin ψ cos φ, sin ψ sin φ, cos ψ)`.
///
/// The wave `ε cos(kθ)` rides on a latitude offset found by shooting so that the
/// unit-speed longitude `φ` advances by exactly 2π over one turn.
pub fn make_latitude_wave<T: Real>(spec: &CurveSpec) -> Result<BoundaryCurve<T>> {
    let n = spec.resolution;
    check_resolution(n)?;
    if spec.wavenumber < 2 {
        return Err(Error::CurveSpec(format!("wavenumber must be >= 2, got {}", spec.wavenumber)));
    }
    if !(spec.amplitude >= 0.0) || !spec.amplitude.is_finite() {
        return Err(Error::CurveSpec(format!("amplitude must be >= 0, got {}", spec.amplitude)));
    }
    if spec.amplitude == 0.0 {
        let mut eq = make_equator::<T>(n)?;
        eq.spec = Some(*spec);
        return Ok(eq);
    }
    let k = spec.wavenumber as f64;
    let eps = spec.amplitude;
    if eps * k > 1.0 {
        return Err(Error::NonRealSpeed(eps * k));
    }
    let theta = grid(n);
    let offset = shoot_offset(&theta, eps, k)?;
    let rate = longitude_rate(&theta, offset, eps, k);
    let mean = rate.iter().sum::<f64>() / n as f64;
    let spectral = PeriodicSpectral::<f64>::new(n);
    let periodic = spectral.periodic_antiderivative(&rate);
    let phi: Vec<f64> = theta.iter().zip(&periodic).map(|(t, p)| mean * t + p - periodic[0]).collect();
    let gamma: Vec<[f64; 3]> = theta
        .iter()
        .zip(&phi)
        .map(|(&t, &ph)| {
            let (psi, _) = colatitude(t, offset, eps, k);
            [psi.sin() * ph.cos(), psi.sin() * ph.sin(), psi.cos()]
        })
        .collect();
    let curve = BoundaryCurve::<f64> {
        planarity_defect: planarity_defect(&gamma),
        dgamma: spectral_derivatives(&gamma, 1),
        d2gamma: spectral_derivatives(&gamma, 2),
        d3gamma: spectral_derivatives(&gamma, 3),
        theta,
        gamma,
        closure_residual: (2.0 * PI * (mean - 1.0)).abs(),
        spec: Some(*spec),
    };
    Ok(curve.cast())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub unit_length: f64,
    pub unit_speed: f64,
    pub orthogonality: f64,
    /// Fraction of spectral energy above n/4; small for smooth closed curves.
    pub periodicity: f64,
    pub planarity_defect: f64,
    pub planar: bool,
}

pub fn validate_curve<T: Real>(c: &BoundaryCurve<T>) -> CurveReport {
    let mut unit_length = 0.0f64;
    let mut unit_speed = 0.0f64;
    let mut orthogonality = 0.0f64;
    for (g, dg) in c.gamma.iter().zip(&c.dgamma) {
        unit_length = unit_length.max((norm_sq(g).sqrt() - T::one()).abs().to_f64_lossy());
        unit_speed = unit_speed.max((norm_sq(dg).sqrt() - T::one()).abs().to_f64_lossy());
        orthogonality = orthogonality.max(dot(g, dg).abs().to_f64_lossy());
    }
    let samples: Vec<[f64; 3]> = c
        .gamma
        .iter()
        .map(|p| [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()])
        .collect();
    let spectral = PeriodicSpectral::<f64>::new(c.len());
    let periodicity = (0..3)
        .map(|comp| {
            let x: Vec<f64> = samples.iter().map(|p| p[comp]).collect();
            spectral.tail_fraction(&x)
        })
        .fold(0.0, f64::max);
    let defect = planarity_defect(&samples);
    CurveReport {
        unit_length,
        unit_speed,
        orthogonality,
        periodicity,
        planarity_defect: defect,
        planar: defect < PLANARITY_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equator_closed_form() {
        let c = make_equator::<f64>(256).unwrap();
        assert_eq!(c.gamma[0], [1.0, 0.0, 0.0]);
        assert_eq!(c.dgamma[0], [-0.0, 1.0, 0.0]);
        assert_eq!(c.planarity_defect, 0.0);
        assert!(c.is_planar());
    }

    #[test]
    fn small_resolution_rejected() {
        assert!(matches!(make_equator::<f64>(32), Err(Error::CurveResolution(32))));
        assert!(matches!(make_equator::<f64>(65), Err(Error::CurveResolution(65))));
    }

    #[test]
    fn zero_amplitude_reproduces_equator() {
        let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.0, 3, 256)).unwrap();
        let e = make_equator::<f64>(256).unwrap();
        assert_eq!(w.gamma, e.gamma);
        assert_eq!(w.dgamma, e.dgamma);
        assert_eq!(w.d2gamma, e.d2gamma);
    }

    #[test]
    fn latitude_wave_closes() {
        let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.2, 3, 256)).unwrap();
        assert!(w.closure_residual < 1e-10, "{}", w.closure_residual);
        assert!(w.planarity_defect > 0.01);
        assert!(!w.is_planar());
    }

    /// Bisection on the closure defect, independent of the Newton path.
    #[test]
    fn shooting_matches_bisection_oracle() {
        let theta = grid(256);
        let (eps, k) = (0.2, 3.0);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if closure_defect(&theta, mid, eps, k) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = shoot_offset(&theta, eps, k).unwrap();
        assert!((c - 0.5 * (lo + hi)).abs() < 1e-12, "{c} vs {lo}");
    }

    #[test]
    fn too_large_amplitude_rejected() {
        let err = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.4, 3, 256)).unwrap_err();
        assert!(matches!(err, Error::NonRealSpeed(_)));
        assert!(make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.1, 1, 256)).is_err());
    }

    #[test]
    fn validation_reports() {
        let e = validate_curve(&make_equator::<f64>(256).unwrap());
        assert!(e.unit_length < 1e-10 && e.unit_speed < 1e-10 && e.orthogonality < 1e-10);
        assert!(e.periodicity < 1e-10);
        assert!(e.planar);

        let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.2, 3, 256)).unwrap();
        let r = validate_curve(&w);
        assert!(r.unit_length < 1e-10, "{r:?}");
        assert!(r.unit_speed < 1e-8 && r.orthogonality < 1e-8, "{r:?}");
        assert!(r.periodicity < 1e-10, "{r:?}");
        assert!(!r.planar);

        let mut bad = w.clone();
        for g in bad.gamma.iter_mut() {
            for c in g.iter_mut() {
                *c *= 1.01;
            }
        }
        let rb = validate_curve(&bad);
        assert!((rb.unit_length - 0.01).abs() < 1e-9, "{rb:?}");
    }

    #[test]
    fn spectral_interpolant_is_periodic() {
        let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.2, 3, 256)).unwrap();
        let s = PeriodicSpectral::<f64>::new(256);
        for c in 0..3 {
            let x: Vec<f64> = w.gamma.iter().map(|p| p[c]).collect();
            let spec = s.spectrum(&x);
            let a = s.interpolate(&spec, 0.0, 0);
            let b = s.interpolate(&spec, 2.0 * PI, 0);
            assert!((a - b).abs() < 1e-10);
            assert!((a - x[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_difference_consistency() {
        // Max-norm error of the central difference should fall ~4x per doubling.
        let mut errs = Vec::new();
        for n in [128usize, 256, 512] {
            let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.2, 3, n)).unwrap();
            let dt = 2.0 * PI / n as f64;
            let mut err = 0.0f64;
            for j in 0..n {
                let p = w.gamma[(j + 1) % n];
                let m = w.gamma[(j + n - 1) % n];
                for c in 0..3 {
                    err = err.max(((p[c] - m[c]) / (2.0 * dt) - w.dgamma[j][c]).abs());
                }
            }
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn vanishing_amplitude_approaches_equator() {
        let e = make_equator::<f64>(256).unwrap();
        let dist: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(eps, 3, 256)).unwrap();
                w.gamma
                    .iter()
                    .zip(&e.gamma)
                    .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max))
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn document_roundtrip() {
        let w = make_latitude_wave::<f64>(&CurveSpec::latitude_wave(0.2, 3, 128)).unwrap();
        let text = serde_json::to_string(&w.to_document()).unwrap();
        let back: CurveDocument = serde_json::from_str(&text).unwrap();
        let c = BoundaryCurve::<f64>::from_document(&back).unwrap();
        assert_eq!(c, w);
        assert_eq!(c.hash(), w.hash());
    }
}
