//! Periodic viscous Burgers `s_t + s s_x = ν s_xx` on `[0, 1)`, or the
//! linear advection–diffusion `s_t + s_x = ν s_xx`.
//!
//! Fourier pseudo-spectral in space with 2/3-rule dealiasing. Diffusion is
//! integrated exactly by an integrating factor and advection by Heun's
//! method.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use super::SolverOutput;
use crate::error::{Result, RinoError};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersConfig {
    pub nu: f64,
    /// Output times `k/(n_times − 1)`, `k = 0..n_times`.
    pub n_times: usize,
    /// Upper bound on the internal step.
    pub dt: f64,
    /// Internal grid is this many times finer than the input grid.
    pub refine: usize,
    /// Solve the linear advection–diffusion form instead.
    pub linear: bool,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self { nu: 0.01, n_times: 100, dt: 1e-3, refine: 2, linear: false }
    }
}

struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `2π m` for the stored mode order.
    wave: Vec<f64>,
    keep: Vec<bool>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let wave: Vec<f64> = (0..n).map(|j| if j <= n / 2 { j as f64 } else { j as f64 - n as f64 }).map(|m| 2.0 * PI * m).collect();
        // Nyquist mode of an even grid carries no derivative information.
        let cut = n as f64 / 3.0;
        let keep = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { n as f64 - j as f64 };
                m < cut && !(n % 2 == 0 && j == n / 2)
            })
            .collect();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), wave, keep }
    }

    fn to_physical(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut buf = hat.to_vec();
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / self.n as f64).collect()
    }

    fn to_spectral(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Advection term in Fourier space.
    fn advection(&self, hat: &[Complex64], linear: bool) -> Vec<Complex64> {
        let flux = if linear {
            hat.to_vec()
        } else {
            let s = self.to_physical(hat);
            let half: Vec<f64> = s.iter().map(|v| 0.5 * v * v).collect();
            self.to_spectral(&half)
        };
        flux.iter()
            .enumerate()
            .map(|(j, f)| if self.keep[j] { -Complex64::new(0.0, self.wave[j]) * f } else { Complex64::new(0.0, 0.0) })
            .collect()
    }
}

/// Spectral resampling of one period of samples onto `m` points.
fn resample(values: &[f64], m: usize) -> Vec<f64> {
    let n = values.len();
    let src = Spectral::new(n);
    let dst = Spectral::new(m);
    let hat = src.to_spectral(values);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = n.min(m) / 2;
    for k in 0..=half {
        let mut c = hat[k];
        // Split the Nyquist coefficient of an even source between ±k.
        if n % 2 == 0 && k == n / 2 {
            c *= 0.5;
        }
        out[k] += c;
        if k > 0 {
            let mut c = hat[n - k];
            if n % 2 == 0 && k == n / 2 {
                c *= 0.5;
            }
            out[m - k] += c;
        }
    }
    let scale = m as f64 / n as f64;
    dst.to_physical(&out.iter().map(|c| c * scale).collect::<Vec<_>>())
}

/// Solution on the input grid (periodic endpoint included) at
/// `n_times` equally spaced times in `[0, 1]`.
///
/// Points are ordered space-major: index `i·n_times + k` is `(x_i, t_k)`.
pub fn solve_burgers(u0: &[f64], cfg: &BurgersConfig) -> Result<SolverOutput> {
    let npts = u0.len();
    if npts < 4 || cfg.n_times < 2 || cfg.refine == 0 || !(cfg.nu >= 0.0) || !(cfg.dt > 0.0) {
        return Err(RinoError::InvalidArgument("Burgers needs ≥ 4 points, ≥ 2 times and positive steps".into()));
    }
    if (u0[0] - u0[npts - 1]).abs() > 1e-10 {
        return Err(RinoError::InvalidArgument("initial condition is not periodic".into()));
    }
    let n = npts - 1;
    let fine = n * cfg.refine;
    let spec = Spectral::new(fine);
    let start = if cfg.refine == 1 { u0[..n].to_vec() } else { resample(&u0[..n], fine) };
    let h = 1.0 / fine as f64;
    let interval = 1.0 / (cfg.n_times - 1) as f64;
    let substeps = (interval / cfg.dt).ceil() as usize;
    let dt = interval / substeps as f64;
    let speed = if cfg.linear { 1.0 } else { start.iter().fold(0.0_f64, |m, v| m.max(v.abs())) };
    let courant = speed * dt / h;
    if courant > 1.0 {
        return Err(RinoError::CflViolation { courant });
    }
    let decay: Vec<f64> = spec.wave.iter().map(|k| (-cfg.nu * k * k * dt).exp()).collect();
    let mut hat = spec.to_spectral(&start);
    let mut frames = Vec::with_capacity(cfg.n_times);
    frames.push(start);
    for _ in 1..cfg.n_times {
        for _ in 0..substeps {
            let a = spec.advection(&hat, cfg.linear);
            let pred: Vec<Complex64> = hat.iter().zip(&a).zip(&decay).map(|((s, a), e)| (s + a * dt) * e).collect();
            let b = spec.advection(&pred, cfg.linear);
            hat = hat.iter().zip(&a).zip(&b).zip(&decay).map(|(((s, a), b), e)| s * e + (a * e + b) * (0.5 * dt)).collect();
        }
        let frame = spec.to_physical(&hat);
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(RinoError::CflViolation { courant: f64::INFINITY });
        }
        frames.push(frame);
    }
    let mut pts = Vec::with_capacity(2 * npts * cfg.n_times);
    let mut values = Vec::with_capacity(npts * cfg.n_times);
    for i in 0..npts {
        let x = i as f64 / n as f64;
        let src = (i % n) * cfg.refine;
        for (k, f) in frames.iter().enumerate() {
            pts.push(x);
            pts.push(k as f64 * interval);
            values.push(f[src]);
        }
    }
    Ok(SolverOutput { points: DenseMatrix::new(npts * cfg.n_times, 2, pts)?, values, iterations: substeps * (cfg.n_times - 1), residuals: Vec::new() })
}
