//! Discrete Fourier tools for uniformly sampled periodic functions.
//!
//! Grids here are at most a few thousand points, so a direct DFT with a
//! precomputed twiddle table is used instead of an FFT.

use alloc::vec::Vec;

use crate::math::{sin_cos, TAU};

/// Real trigonometric series `c0 + sum_k (a_k cos(k w x) + b_k sin(k w x))`
/// with `w = 2π / period`, fitted to uniform samples on `[0, period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    period: f64,
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let (sin, cos) = (0..n).map(|m| sin_cos(TAU * m as f64 / n as f64)).unzip();
        Self { cos, sin }
    }
}

impl TrigSeries {
    /// Exact interpolant through `samples` (length >= 1). For even lengths
    /// the Nyquist term is kept as a cosine with half weight.
    pub fn from_samples(samples: &[f64], period: f64) -> Self {
        let n = samples.len();
        assert!(n > 0, "need at least one sample");
        let tw = Twiddles::new(n);
        let mean = samples.iter().sum::<f64>() / n as f64;
        let kmax = n / 2;
        let mut cos = Vec::with_capacity(kmax);
        let mut sin = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let (mut ck, mut sk) = (0.0, 0.0);
            for (i, &x) in samples.iter().enumerate() {
                let m = (k * i) % n;
                ck += x * tw.cos[m];
                sk += x * tw.sin[m];
            }
            let nyquist = n.is_multiple_of(2) && k == kmax;
            let scale = if nyquist { 1.0 } else { 2.0 } / n as f64;
            cos.push(ck * scale);
            sin.push(if nyquist { 0.0 } else { sk * scale });
        }
        Self { period, mean, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `(a_k, b_k)` of harmonic `k >= 1` (multiples of `2π / period`).
    pub fn harmonic(&self, k: usize) -> (f64, f64) {
        if k == 0 || k > self.cos.len() {
            (0.0, 0.0)
        } else {
            (self.cos[k - 1], self.sin[k - 1])
        }
    }

    /// Sum of squared amplitudes of every harmonic except `keep`.
    pub fn off_mode_energy(&self, keep: usize) -> f64 {
        (1..=self.cos.len())
            .filter(|&k| k != keep)
            .map(|k| {
                let (a, b) = self.harmonic(k);
                a * a + b * b
            })
            .sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = TAU / self.period;
        let (s1, c1) = sin_cos(w * x);
        // angle-addition recurrence
        let (mut s, mut c) = (s1, c1);
        let mut acc = self.mean;
        for (ak, bk) in self.cos.iter().zip(&self.sin) {
            acc += ak * c + bk * s;
            let (sn, cn) = (s * c1 + c * s1, c * c1 - s * s1);
            s = sn;
            c = cn;
        }
        acc
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let w = TAU / self.period;
        let (s1, c1) = sin_cos(w * x);
        let (mut s, mut c) = (s1, c1);
        let mut acc = 0.0;
        for (k, (ak, bk)) in self.cos.iter().zip(&self.sin).enumerate() {
            let kw = (k + 1) as f64 * w;
            acc += kw * (bk * c - ak * s);
            let (sn, cn) = (s * c1 + c * s1, c * c1 - s * s1);
            s = sn;
            c = cn;
        }
        acc
    }
}

/// Spectral derivative of uniform periodic samples on `[0, period)`.
/// The Nyquist mode is dropped, as usual for odd-order derivatives.
pub fn spectral_derivative(samples: &[f64], period: f64) -> Vec<f64> {
    let n = samples.len();
    let series = TrigSeries::from_samples(samples, period);
    let tw = Twiddles::new(n);
    let w = TAU / period;
    let kmax = if n.is_multiple_of(2) { n / 2 - 1 } else { n / 2 };
    (0..n)
        .map(|i| {
            (1..=kmax)
                .map(|k| {
                    let (ak, bk) = series.harmonic(k);
                    let m = (k * i) % n;
                    k as f64 * w * (bk * tw.cos[m] - ak * tw.sin[m])
                })
                .sum()
        })
        .collect()
}

/// Least-squares projection of uniform samples on `[0, period)` onto
/// `cos(k w x)` and `sin(k w x)`.
pub fn project(samples: &[f64], period: f64, k: usize) -> (f64, f64) {
    let n = samples.len();
    let w = TAU / period;
    let (mut c, mut s) = (0.0, 0.0);
    for (i, &x) in samples.iter().enumerate() {
        let t = period * i as f64 / n as f64;
        let (sk, ck) = sin_cos(k as f64 * w * t);
        c += x * ck;
        s += x * sk;
    }
    let scale = if k == 0 { 1.0 } else { 2.0 } / n as f64;
    (c * scale, s * scale)
}
