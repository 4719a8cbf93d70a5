//! Fourier tools for periodic samples on an equispaced angular grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Forward/inverse FFT plans plus wavenumbers for `n` equispaced samples on [0, 2π).
#[derive(Clone)]
pub struct PeriodicSpectral<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    wavenumbers: Vec<T>,
}

impl<T: Real> std::fmt::Debug for PeriodicSpectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicSpectral").field("n", &self.n).finish()
    }
}

impl<T: Real> PeriodicSpectral<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "spectral grid needs an even size");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let half = n / 2;
        let wavenumbers = (0..n)
            .map(|m| {
                if m <= half {
                    T::lit(m as f64)
                } else {
                    T::lit(m as f64 - n as f64)
                }
            })
            .collect();
        Self { n, forward, inverse, wavenumbers }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Signed wavenumber of FFT bin `m` (the Nyquist bin reports +n/2).
    #[inline]
    pub fn wavenumber(&self, m: usize) -> T {
        self.wavenumbers[m]
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform; callers divide by `n`.
    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
    }

    pub fn spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        debug_assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Multiplier `(ik)^order` for bin `m`; odd orders vanish on the Nyquist bin.
    #[inline]
    pub fn multiplier(&self, m: usize, order: u32) -> Complex<T> {
        if order == 0 {
            return Complex::new(T::one(), T::zero());
        }
        if m == self.nyquist() && order % 2 == 1 {
            return Complex::new(T::zero(), T::zero());
        }
        let k = self.wavenumbers[m];
        let kp = k.powi(order as i32);
        match order % 4 {
            0 => Complex::new(kp, T::zero()),
            1 => Complex::new(T::zero(), kp),
            2 => Complex::new(-kp, T::zero()),
            _ => Complex::new(T::zero(), -kp),
        }
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, x: &[T], order: u32) -> Vec<T> {
        let mut buf = self.spectrum(x);
        for (m, c) in buf.iter_mut().enumerate() {
            *c = *c * self.multiplier(m, order);
        }
        self.inverse.process(&mut buf);
        let inv_n = T::one() / T::lit(self.n as f64);
        buf.iter().map(|c| c.re * inv_n).collect()
    }

    /// First and second derivatives computed with one forward and one inverse transform.
    pub fn first_and_second(&self, x: &[T], d1: &mut [T], d2: &mut [T]) {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        let i = Complex::new(T::zero(), T::one());
        for (m, c) in buf.iter_mut().enumerate() {
            let a = *c * self.multiplier(m, 1);
            let b = *c * self.multiplier(m, 2);
            *c = a + i * b;
        }
        self.inverse.process(&mut buf);
        let inv_n = T::one() / T::lit(self.n as f64);
        for (k, c) in buf.iter().enumerate() {
            d1[k] = c.re * inv_n;
            d2[k] = c.im * inv_n;
        }
    }

    /// Zero-mean periodic antiderivative `F` with `F' = x - mean(x)` and `mean(F) = 0`.
    pub fn periodic_antiderivative(&self, x: &[T]) -> Vec<T> {
        let mut buf = self.spectrum(x);
        buf[0] = Complex::new(T::zero(), T::zero());
        buf[self.nyquist()] = Complex::new(T::zero(), T::zero());
        for (m, c) in buf.iter_mut().enumerate().skip(1) {
            if m == self.nyquist() {
                continue;
            }
            let k = self.wavenumbers[m];
            // divide by ik
            *c = Complex::new(c.im / k, -c.re / k);
        }
        self.inverse.process(&mut buf);
        let inv_n = T::one() / T::lit(self.n as f64);
        buf.iter().map(|c| c.re * inv_n).collect()
    }

    /// Evaluates the `order`-th derivative of the trigonometric interpolant at `theta`.
    pub fn interpolate(&self, spectrum: &[Complex<T>], theta: T, order: u32) -> T {
        let n = self.n;
        let half = self.nyquist();
        let mut acc = if order == 0 { spectrum[0].re } else { T::zero() };
        let two = T::lit(2.0);
        for m in 1..half {
            let k = self.wavenumbers[m];
            let phase = k * theta;
            let e = Complex::new(phase.cos(), phase.sin());
            let term = spectrum[m] * self.multiplier(m, order) * e;
            acc += two * term.re;
        }
        let kn = T::lit(half as f64);
        let angle = kn * theta + T::lit(order as f64) * T::FRAC_PI_2();
        acc += spectrum[half].re * kn.powi(order as i32) * angle.cos();
        acc / T::lit(n as f64)
    }

    /// Fraction of spectral energy carried by wavenumbers above n/4.
    pub fn tail_fraction(&self, x: &[T]) -> T {
        let spec = self.spectrum(x);
        let quarter = T::lit(self.n as f64 / 4.0);
        let mut total = T::zero();
        let mut tail = T::zero();
        for (m, c) in spec.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if self.wavenumbers[m].abs() > quarter {
                tail += e;
            }
        }
        if total == T::zero() {
            T::zero()
        } else {
            tail / total
        }
    }
}
