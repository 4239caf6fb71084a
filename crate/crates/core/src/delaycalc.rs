//! Delayed exponentials, the scalar linear delay equation
//! `z' + k1 z = k2 z(t - r)`, and the Fourier-side solution of the linear
//! comparison problem built on them.
//!
//! The delayed exponential with unit history is
//!
//! ```text
//! e_r^{k t} = sum_{j=0}^{m} k^j (t - (j - 1) r)^j / j!,   m = floor(t / r) + 1,
//! ```
//!
//! and with `kbar = k2 e^{k1 r}` the solution of the delay equation with
//! history `z0` on `[-r, 0]` is
//!
//! ```text
//! z(t) = e^{-k1 (t + r)} e_r^{kbar t} z0(-r)
//!      + int_{-r}^{0} e^{-k1 (t - s)} e_r^{kbar (t - r - s)} (z0'(s) + k1 z0(s)) ds.
//! ```

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_decay, l2_norm, FitMode, FitOptions, RateFit};
use crate::convolution::Field;
use crate::error::{require, Error, Result};
use crate::model::ModelParams;

/// More series terms than this is treated as a horizon error.
pub const MAX_TERMS: usize = 10_000;

/// Term magnitudes past `e^700` are formed from logarithms.
const LOG_SPACE_LIMIT: f64 = 700.0;

/// Higher-order terms always go through logarithms to avoid overflow in `j!`.
const DIRECT_TERMS: usize = 30;

/// Neumaier-compensated complex accumulator.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

fn neumaier(sum: f64, carry: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        carry + ((sum - t) + x)
    } else {
        carry + ((x - t) + sum)
    };
    (t, c)
}

impl CompensatedSum {
    fn add(&mut self, x: Complex64) {
        let (re, cre) = neumaier(self.sum.re, self.carry.re, x.re);
        let (im, cim) = neumaier(self.sum.im, self.carry.im, x.im);
        self.sum = Complex64::new(re, im);
        self.carry = Complex64::new(cre, cim);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

/// Delayed exponential for a complex rate.
pub fn delayed_exp_complex(k_bar: Complex64, r: f64, t: f64) -> Result<Complex64> {
    require(r > 0.0 && r.is_finite(), "r", "must be positive")?;
    if t < -r {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let m_real = (t / r).floor() + 1.0;
    if m_real > MAX_TERMS as f64 {
        return Err(Error::HorizonTooLong {
            terms: m_real as usize,
        });
    }
    let m = m_real.max(0.0) as usize;
    let log_space = k_bar.norm() * t.abs() > LOG_SPACE_LIMIT;
    let ln_k = k_bar.ln();
    let mut acc = CompensatedSum::default();
    let mut factorial = 1.0f64;
    let mut ln_fact = 0.0f64;
    acc.add(Complex64::new(1.0, 0.0));
    for j in 1..=m {
        factorial *= j as f64;
        ln_fact += (j as f64).ln();
        let base = t - (j as f64 - 1.0) * r;
        if base <= 0.0 || k_bar == Complex64::new(0.0, 0.0) {
            break;
        }
        let term = if log_space || j > DIRECT_TERMS {
            (ln_k * j as f64 + (j as f64) * base.ln() - ln_fact).exp()
        } else {
            k_bar.powu(j as u32) * base.powi(j as i32) / factorial
        };
        acc.add(term);
    }
    let v = acc.value();
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("delayed exponential"))
    }
}

/// Delayed exponential for a real rate.
pub fn delayed_exp(k_bar: f64, r: f64, t: f64) -> Result<f64> {
    Ok(delayed_exp_complex(Complex64::new(k_bar, 0.0), r, t)?.re)
}

/// History of a delay problem: value and derivative on `[-r, 0]`.
pub type HistoryFn<'a> = Box<dyn Fn(f64) -> (Complex64, Complex64) + Send + Sync + 'a>;

/// `z' + k1 z = k2 z(t - r)` with history `z0` on `[-r, 0]`.
pub struct DelayOdeProblem<'a> {
    pub k1: Complex64,
    pub k2: Complex64,
    pub r: f64,
    pub history: HistoryFn<'a>,
}

impl<'a> DelayOdeProblem<'a> {
    /// Real coefficients with a real history and its derivative.
    pub fn real(
        k1: f64,
        k2: f64,
        r: f64,
        z0: impl Fn(f64) -> f64 + Send + Sync + 'a,
        z0_prime: impl Fn(f64) -> f64 + Send + Sync + 'a,
    ) -> Self {
        Self {
            k1: Complex64::new(k1, 0.0),
            k2: Complex64::new(k2, 0.0),
            r,
            history: Box::new(move |s| {
                (Complex64::new(z0(s), 0.0), Complex64::new(z0_prime(s), 0.0))
            }),
        }
    }

    /// Constant history `z0`.
    pub fn constant(k1: Complex64, k2: Complex64, r: f64, z0: Complex64) -> Self {
        Self {
            k1,
            k2,
            r,
            history: Box::new(move |_| (z0, Complex64::new(0.0, 0.0))),
        }
    }

    pub fn k_bar(&self) -> Complex64 {
        self.k2 * (self.k1 * self.r).exp()
    }
}

/// Default Simpson node count for the history integral.
pub const HISTORY_NODES: usize = 201;

/// Composite Simpson on `[a, b]` with an even number of panels near `panels`.
fn simpson(a: f64, b: f64, panels: usize, f: &impl Fn(f64) -> Complex64) -> Complex64 {
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    let n = panels.max(2).div_ceil(2) * 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// Evaluates the closed-form solution at `t >= 0`, splitting the history
/// integral at the kinks of the delayed exponential.
pub fn solve_delay_ode_with(problem: &DelayOdeProblem<'_>, t: f64, nodes: usize) -> Result<Complex64> {
    require(t >= 0.0, "t", "must be nonnegative")?;
    require(nodes >= 3, "nodes", "need at least 3 quadrature nodes")?;
    let r = problem.r;
    let k1 = problem.k1;
    let kb = problem.k_bar();
    let (z_start, _) = (problem.history)(-r);
    let head = (-k1 * (t + r)).exp() * delayed_exp_complex(kb, r, t)? * z_start;

    // breakpoints s = t - r - j r inside (-r, 0)
    let mut cuts = vec![-r];
    let mut j = 0usize;
    loop {
        let s = t - r - j as f64 * r;
        if s <= -r {
            break;
        }
        if s < 0.0 {
            cuts.push(s);
        }
        j += 1;
    }
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * r);

    let integrand = |s: f64| -> Complex64 {
        let (z, dz) = (problem.history)(s);
        match delayed_exp_complex(kb, r, t - r - s) {
            Ok(e) => (-k1 * (t - s)).exp() * e * (dz + k1 * z),
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        }
    };
    let panels_total = nodes - 1;
    let mut integral = Complex64::new(0.0, 0.0);
    for w in cuts.windows(2) {
        let share = ((w[1] - w[0]) / r * panels_total as f64).ceil() as usize;
        integral += simpson(w[0], w[1], share.max(2), &integrand);
    }
    let z = head + integral;
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonFinite("delay solution quadrature"))
    }
}

pub fn solve_delay_ode(problem: &DelayOdeProblem<'_>, t: f64) -> Result<Complex64> {
    solve_delay_ode_with(problem, t, HISTORY_NODES)
}

/// Applies the solution formula one delay interval at a time, each window
/// taking the previous one as its history, on `panels` subintervals per
/// window. Inside a window the delayed exponentials have at most two terms,
/// so arbitrarily long horizons stay well conditioned.
#[derive(Debug, Clone)]
pub struct WindowMarch {
    k1: Complex64,
    k2: Complex64,
    r: f64,
    panels: usize,
    /// Kernel `e^{-k1 (r + d h)} e_r^{kbar d h}` for `d = -panels..=panels`.
    kernel: Vec<Complex64>,
    head: Vec<Complex64>,
}

/// Panels per delay window in [`WindowMarch`].
pub const WINDOW_PANELS: usize = 128;

impl WindowMarch {
    pub fn new(k1: Complex64, k2: Complex64, r: f64, panels: usize) -> Result<Self> {
        require(r > 0.0, "r", "must be positive")?;
        require(panels >= 2 && panels.is_multiple_of(2), "panels", "must be even and at least 2")?;
        let h = r / panels as f64;
        let kb = k2 * (k1 * r).exp();
        let one = Complex64::new(1.0, 0.0);
        let kernel = (-(panels as isize)..=panels as isize)
            .map(|d| {
                let tau = d as f64 * h;
                let e = if d >= 0 { one + kb * tau } else { one };
                (-k1 * (r + tau)).exp() * e
            })
            .collect();
        let head = (0..=panels)
            .map(|j| {
                let t = j as f64 * h;
                (-k1 * (t + r)).exp() * (one + kb * t)
            })
            .collect();
        Ok(Self {
            k1,
            k2,
            r,
            panels,
            kernel,
            head,
        })
    }

    pub fn step(&self) -> f64 {
        self.r / self.panels as f64
    }

    fn kernel_at(&self, d: isize) -> Complex64 {
        self.kernel[(d + self.panels as isize) as usize]
    }

    /// Next window from the current one (`z` at the window nodes) and the
    /// forcing `g = z' + k1 z` on it.
    pub fn next_window(&self, z: &[Complex64], g: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.panels;
        let h = self.step();
        let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
        for j in (0..=n).step_by(2) {
            let mut acc = self.head[j] * z[0];
            // [s_0, s_j]: kernel with d = j - i >= 0
            if j > 0 {
                let mut part = self.kernel_at(j as isize) * g[0] + self.kernel_at(0) * g[j];
                for i in 1..j {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    part += self.kernel_at((j - i) as isize) * g[i] * w;
                }
                acc += part * (h / 3.0);
            }
            if j < n {
                let mut part = self.kernel_at(0) * g[j] + self.kernel_at(j as isize - n as isize) * g[n];
                for i in j + 1..n {
                    let w = if (i - j) % 2 == 1 { 4.0 } else { 2.0 };
                    part += self.kernel_at(j as isize - i as isize) * g[i] * w;
                }
                acc += part * (h / 3.0);
            }
            out[j] = acc;
        }
        // z' on the new window from the equation itself
        let mut slope = vec![Complex64::new(0.0, 0.0); n + 1];
        for j in (0..=n).step_by(2) {
            slope[j] = -self.k1 * out[j] + self.k2 * z[j];
        }
        for j in (1..n).step_by(2) {
            out[j] = hermite_mid(out[j - 1], slope[j - 1], out[j + 1], slope[j + 1], 2.0 * h);
        }
        let g_next: Vec<Complex64> = z.iter().map(|zj| self.k2 * zj).collect();
        (out, g_next)
    }

    /// Values at `times` (sorted or not) for a constant history `z0`.
    pub fn solve_constant_history(&self, z0: Complex64, times: &[f64]) -> Vec<Complex64> {
        let n = self.panels;
        let h = self.step();
        let t_max = times.iter().copied().fold(0.0, f64::max);
        let windows = (t_max / self.r).floor() as usize + 1;
        let mut out = vec![Complex64::new(0.0, 0.0); times.len()];
        let mut z = vec![z0; n + 1];
        let mut g = vec![self.k1 * z0; n + 1];
        for w in 0..windows {
            let (next, g_next) = self.next_window(&z, &g);
            let start = w as f64 * self.r;
            for (slot, &t) in out.iter_mut().zip(times) {
                if t < 0.0 {
                    *slot = z0;
                } else if t >= start - 1e-12 * self.r && t <= start + self.r + 1e-12 * self.r {
                    let pos = ((t - start) / h).clamp(0.0, n as f64);
                    let lo = (pos.floor() as usize).min(n - 1);
                    let theta = pos - lo as f64;
                    if theta < 1e-12 {
                        *slot = next[lo];
                    } else if theta > 1.0 - 1e-12 {
                        *slot = next[lo + 1];
                    } else {
                        let d0 = -self.k1 * next[lo] + self.k2 * z[lo];
                        let d1 = -self.k1 * next[lo + 1] + self.k2 * z[lo + 1];
                        *slot = hermite(next[lo], d0, next[lo + 1], d1, h, theta);
                    }
                }
            }
            z = next;
            g = g_next;
        }
        out
    }
}

fn hermite(z0: Complex64, d0: Complex64, z1: Complex64, d1: Complex64, h: f64, theta: f64) -> Complex64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    z0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + d0 * (h * (t3 - 2.0 * t2 + theta))
        + z1 * (-2.0 * t3 + 3.0 * t2)
        + d1 * (h * (t3 - t2))
}

fn hermite_mid(z0: Complex64, d0: Complex64, z1: Complex64, d1: Complex64, span: f64) -> Complex64 {
    (z0 + z1) * 0.5 + (d0 - d1) * (span / 8.0)
}

/// Least-squares slope of `log|z|` over `[horizon/2, horizon]` for
/// `z' + k1 z = k2 z(t - r)` with unit history.
pub fn decay_rate_check(k1: f64, k2: f64, r: f64, horizon: f64) -> Result<RateFit> {
    require(k1 >= k2 && k2 >= 0.0, "k1, k2", "need k1 >= k2 >= 0")?;
    require(horizon > 0.0, "horizon", "must be positive")?;
    let march = WindowMarch::new(Complex64::new(k1, 0.0), Complex64::new(k2, 0.0), r, WINDOW_PANELS)?;
    let n = 400;
    let times: Vec<f64> = (0..=n).map(|i| 0.5 * horizon * (1.0 + i as f64 / n as f64)).collect();
    let values: Vec<f64> = march
        .solve_constant_history(Complex64::new(1.0, 0.0), &times)
        .iter()
        .map(|z| z.re)
        .collect();
    let mut fit = fit_decay(
        &times,
        &values,
        FitOptions::new(FitMode::Exponential).window(0.5 * horizon, horizon),
    )?;
    // report the slope of log|z| (negative when decaying)
    fit.exp_rate = -fit.exp_rate;
    Ok(fit)
}

/// Fourier symbols of the weighted linear comparison problem
/// `u_t = -A(D_xi) u + B(D_xi) u(t - r)`, with `F[g](eta) = int g e^{-i y eta} dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayKernelSymbols {
    pub lambda: f64,
    pub c: f64,
    pub params: ModelParams,
}

impl DelayKernelSymbols {
    /// `A(eta) = -D e^{alpha (lambda + i eta)^2} + delta + c lambda + D + i c eta`.
    pub fn a(&self, eta: f64) -> Complex64 {
        let p = &self.params;
        let z = Complex64::new(self.lambda, eta);
        -(z * z * p.alpha).exp() * p.diffusion
            + Complex64::new(p.delta + self.c * self.lambda + p.diffusion, self.c * eta)
    }

    /// `B(eta) = p e^{-i c r eta} e^{-lambda c r} e^{beta (lambda + i eta)^2}`.
    pub fn b(&self, eta: f64) -> Complex64 {
        let p = &self.params;
        let z = Complex64::new(self.lambda, eta);
        let cr = self.c * p.delay;
        (z * z * p.beta + Complex64::new(-self.lambda * cr, -cr * eta)).exp() * p.birth_slope(0.0)
    }

    /// `B(eta) e^{A(eta) r}`.
    pub fn b_bar(&self, eta: f64) -> Complex64 {
        self.b(eta) * (self.a(eta) * self.params.delay).exp()
    }
}

pub fn spectral_symbols(c: f64, lambda: f64, params: &ModelParams) -> Result<DelayKernelSymbols> {
    params.validate()?;
    require(lambda > 0.0, "lambda", "must be positive")?;
    Ok(DelayKernelSymbols {
        lambda,
        c,
        params: *params,
    })
}

/// Periodic frequency grid `eta_m = -eta_max + m d_eta`, `m = 0..points`,
/// with `eta_max = pi / dxi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: usize,
    pub eta_max: f64,
}

impl FrequencyGrid {
    pub fn for_spacing(dxi: f64, points: usize) -> Self {
        Self {
            points,
            eta_max: std::f64::consts::PI / dxi,
        }
    }

    pub fn d_eta(&self) -> f64 {
        2.0 * self.eta_max / self.points as f64
    }

    pub fn eta(&self, m: usize) -> f64 {
        -self.eta_max + m as f64 * self.d_eta()
    }
}

/// Default number of frequencies.
pub const FREQUENCY_POINTS: usize = 4096;

/// Modes below this fraction of the largest initial amplitude are dropped.
const PRUNE_RATIO: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSnapshot {
    pub t: f64,
    pub field: Field,
    /// Largest imaginary part of the inverse transform.
    pub imag_sup: f64,
    /// `L^2` norm from Parseval's identity over the full frequency grid.
    pub l2_parseval: f64,
}

/// Fourier-side solver for the weighted linear comparison problem with
/// history constant in `s`.
pub struct SpectralSolver {
    symbols: DelayKernelSymbols,
    freq: FrequencyGrid,
    template: Field,
    modes: Vec<(usize, Complex64)>,
    panels: usize,
}

impl SpectralSolver {
    pub fn new(symbols: DelayKernelSymbols, u0: &Field, freq: FrequencyGrid) -> Result<Self> {
        require(u0.len() <= freq.points, "frequency_grid", "needs at least as many points as the spatial grid")?;
        if (symbols.lambda * symbols.lambda * symbols.params.alpha).exp() > 1e6 {
            log::warn!("large kernel tilt; frequency grid may alias");
        }
        let grid = u0.grid;
        let h = grid.dxi;
        // forward transform by direct summation, one rotation per node
        let transform: Vec<Complex64> = (0..freq.points)
            .into_par_iter()
            .map(|m| {
                let eta = freq.eta(m);
                let rot = Complex64::from_polar(1.0, -eta * h);
                let mut phase = Complex64::from_polar(1.0, -eta * grid.xi(0));
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &u) in u0.values.iter().enumerate() {
                    if k % 256 == 0 {
                        phase = Complex64::from_polar(1.0, -eta * grid.xi(k));
                    }
                    acc += phase * u;
                    phase *= rot;
                }
                acc * h
            })
            .collect();
        let peak = transform.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let modes = transform
            .into_iter()
            .enumerate()
            .filter(|(_, z)| peak > 0.0 && z.norm() >= PRUNE_RATIO * peak)
            .collect();
        Ok(Self {
            symbols,
            freq,
            template: u0.with_values(vec![0.0; u0.len()]),
            modes,
            panels: WINDOW_PANELS,
        })
    }

    pub fn symbols(&self) -> &DelayKernelSymbols {
        &self.symbols
    }

    pub fn active_modes(&self) -> usize {
        self.modes.len()
    }

    /// Transformed solution of every active mode at each requested time.
    fn mode_values(&self, times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let r = self.symbols.params.delay;
        self.modes
            .par_iter()
            .map(|&(m, u_hat)| {
                let eta = self.freq.eta(m);
                let march = WindowMarch::new(self.symbols.a(eta), self.symbols.b(eta), r, self.panels)?;
                Ok(march.solve_constant_history(u_hat, times))
            })
            .collect()
    }

    /// Inverse transform onto the spatial grid at each time.
    pub fn solve(&self, times: &[f64]) -> Result<Vec<SpectralSnapshot>> {
        for &t in times {
            require(t >= 0.0, "t", "must be nonnegative")?;
        }
        let values = self.mode_values(times)?;
        let grid = self.template.grid;
        let d_eta = self.freq.d_eta();
        let scale = d_eta / (2.0 * std::f64::consts::PI);
        let snapshots = times
            .iter()
            .enumerate()
            .map(|(ti, &t)| {
                let real_imag: Vec<(f64, f64)> = (0..grid.n)
                    .into_par_iter()
                    .map(|k| {
                        let xi = grid.xi(k);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (mi, &(m, _)) in self.modes.iter().enumerate() {
                            acc += values[mi][ti] * Complex64::from_polar(1.0, self.freq.eta(m) * xi);
                        }
                        let z = acc * scale;
                        (z.re, z.im)
                    })
                    .collect();
                let l2_sq: f64 = (0..self.modes.len()).map(|mi| values[mi][ti].norm_sqr()).sum::<f64>() * scale;
                let field = self.template.with_values(real_imag.iter().map(|p| p.0).collect());
                SpectralSnapshot {
                    t,
                    imag_sup: real_imag.iter().fold(0.0f64, |a, p| a.max(p.1.abs())),
                    l2_parseval: l2_sq.sqrt(),
                    field,
                }
            })
            .collect();
        Ok(snapshots)
    }

    /// `L^2` norms at the requested times from Parseval's identity.
    pub fn l2_series(&self, times: &[f64]) -> Result<Vec<f64>> {
        let values = self.mode_values(times)?;
        let scale = self.freq.d_eta() / (2.0 * std::f64::consts::PI);
        Ok((0..times.len())
            .map(|ti| {
                ((0..self.modes.len()).map(|mi| values[mi][ti].norm_sqr()).sum::<f64>() * scale).sqrt()
            })
            .collect())
    }
}

/// One-shot spectral solution at a single time.
pub fn spectral_solution(
    symbols: DelayKernelSymbols,
    u0: &Field,
    t: f64,
    freq: FrequencyGrid,
) -> Result<SpectralSnapshot> {
    let solver = SpectralSolver::new(symbols, u0, freq)?;
    Ok(solver.solve(&[t])?.remove(0))
}

/// Joint fit `log ||u|| = log C - eps t - q log t` of an `L^2` series.
pub fn l2_decay_fit(times: &[f64], norms: &[f64], window: Option<(f64, f64)>) -> Result<RateFit> {
    let mut options = FitOptions::new(FitMode::Joint);
    options.window = window;
    fit_decay(times, norms, options)
}

/// Relative `L^2` distance between a time-stepped linear solution and the
/// spectral one. Both must use the same weight exponent.
pub fn relative_l2_gap(
    stepped: &Field,
    stepped_lambda: f64,
    spectral: &SpectralSnapshot,
    symbols: &DelayKernelSymbols,
) -> Result<f64> {
    if (stepped_lambda - symbols.lambda).abs() > 1e-12 * symbols.lambda.abs().max(1.0) {
        return Err(Error::LambdaMismatch {
            first: stepped_lambda,
            second: symbols.lambda,
        });
    }
    if !stepped.grid.same_as(&spectral.field.grid) {
        return Err(Error::GridMismatch("stepped and spectral grids differ".into()));
    }
    let diff = stepped.with_values(
        stepped
            .values
            .iter()
            .zip(&spectral.field.values)
            .map(|(a, b)| a - b)
            .collect(),
    );
    let scale = l2_norm(&spectral.field);
    let gap = l2_norm(&diff);
    Ok(if scale > 0.0 { gap / scale } else { gap })
}

/// `L^2` norms of a sequence of fields.
pub fn l2_of(fields: &[Field]) -> Vec<f64> {
    fields.iter().map(l2_norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delayed_exp_pieces() {
        for t in [-1.0, -0.5, -0.01] {
            assert_eq!(delayed_exp(0.7, 1.0, t).unwrap(), 1.0);
        }
        assert_eq!(delayed_exp(0.7, 1.0, -1.5).unwrap(), 0.0);
        for t in [0.0, 0.3, 0.99] {
            assert_abs_diff_eq!(delayed_exp(0.7, 1.0, t).unwrap(), 1.0 + 0.7 * t, epsilon = 1e-15);
        }
        assert_eq!(delayed_exp(0.0, 0.5, 17.0 * 0.5).unwrap(), 1.0);
        // second piece: 1 + k t + k^2 (t - r)^2 / 2
        let (k, r, t) = (1.3, 0.5, 0.8);
        assert_abs_diff_eq!(
            delayed_exp(k, r, t).unwrap(),
            1.0 + k * t + k * k * (t - r).powi(2) / 2.0,
            epsilon = 1e-14
        );
        assert!(matches!(delayed_exp(1.0, 1e-4, 2.0), Err(Error::HorizonTooLong { .. })));
    }

    #[test]
    fn delayed_exp_satisfies_its_equation() {
        let (k, r) = (0.8, 0.7);
        for i in 0..200 {
            let t = 0.013 + i as f64 * 0.0371;
            // stay clear of the breakpoints t = j r where the derivative kinks
            let frac = (t / r).fract();
            if frac < 1e-3 || frac > 1.0 - 1e-3 {
                continue;
            }
            let h = 1e-6;
            let d = (delayed_exp(k, r, t + h).unwrap() - delayed_exp(k, r, t - h).unwrap()) / (2.0 * h);
            let rhs = k * delayed_exp(k, r, t - r).unwrap();
            assert!((d - rhs).abs() < 1e-5 * rhs.abs().max(1.0), "t = {t}: {d} vs {rhs}");
        }
    }

    #[test]
    fn delayed_exp_continuous_at_breakpoints() {
        let k = Complex64::new(0.4, -1.1);
        for j in 1..8 {
            let t = j as f64 * 0.3;
            let a = delayed_exp_complex(k, 0.3, t - 1e-12).unwrap();
            let b = delayed_exp_complex(k, 0.3, t + 1e-12).unwrap();
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn log_space_terms_agree() {
        // large |k t| switches to logarithms; compare against direct powers just below the switch
        let k = 140.0f64;
        let r = 1.0;
        let t = 4.99;
        let direct: f64 = (0..=5)
            .map(|j| {
                let base: f64 = t - (j as f64 - 1.0) * r;
                if j == 0 {
                    1.0
                } else if base <= 0.0 {
                    0.0
                } else {
                    k.powi(j) * base.powi(j) / (1..=j).map(|x| x as f64).product::<f64>()
                }
            })
            .sum();
        let v = delayed_exp(k, r, t).unwrap();
        assert!((v - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn many_terms_stay_finite() {
        // 400 pieces with a decaying partner: e^{-k1 t} e_r^{kbar t} stays bounded
        let (k1, k2, r) = (1.0f64, 0.5f64, 0.05f64);
        let kb = k2 * (k1 * r).exp();
        let t = 20.0;
        let v = delayed_exp(kb, r, t).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let z = (-k1 * (t + r)).exp() * v;
        assert!(z > 0.0 && z < 1.0);
    }

    #[test]
    fn solution_formula_reductions() {
        // k1 = 0, z0 = 1: the delayed exponential itself
        let p = DelayOdeProblem::real(0.0, 0.9, 0.4, |_| 1.0, |_| 0.0);
        for t in [0.1, 0.5, 1.3, 2.0] {
            let z = solve_delay_ode(&p, t).unwrap();
            assert!((z.re - delayed_exp(0.9, 0.4, t).unwrap()).abs() < 1e-12);
        }
        // k2 = 0: pure decay
        let p = DelayOdeProblem::real(1.7, 0.0, 0.4, |_| 1.0, |_| 0.0);
        for t in [0.1, 0.5, 1.3, 2.0] {
            let z = solve_delay_ode(&p, t).unwrap();
            assert_abs_diff_eq!(z.re, (-1.7 * t).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn march_matches_direct_formula() {
        let k1 = Complex64::new(1.2, 0.4);
        let k2 = Complex64::new(0.7, -0.3);
        let r = 0.6;
        let march = WindowMarch::new(k1, k2, r, WINDOW_PANELS).unwrap();
        let times = [0.0, 0.17, 0.6, 1.01, 2.5, 3.3];
        let marched = march.solve_constant_history(Complex64::new(1.0, 0.0), &times);
        let direct = DelayOdeProblem::constant(k1, k2, r, Complex64::new(1.0, 0.0));
        for (t, z) in times.iter().zip(marched) {
            let d = solve_delay_ode_with(&direct, *t, 801).unwrap();
            assert!((z - d).norm() < 1e-8, "t = {t}: {z} vs {d}");
        }
    }

    #[test]
    fn decay_checks() {
        let fit = decay_rate_check(1.0, 0.0, 1.0, 10.0).unwrap();
        assert_abs_diff_eq!(fit.exp_rate, -1.0, epsilon = 1e-3);
        let fit = decay_rate_check(1.0, 1.0, 1.0, 20.0).unwrap();
        assert!(fit.exp_rate >= -1e-3);
        let fit = decay_rate_check(2.0, 1.0, 1.0, 20.0).unwrap();
        assert!(fit.exp_rate < -1e-3 * (2.0 - 1.0));
    }

    #[test]
    fn equal_rates_settle_to_a_constant() {
        let march = WindowMarch::new(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), 1.0, WINDOW_PANELS).unwrap();
        let z = march.solve_constant_history(Complex64::new(1.0, 0.0), &[5.0, 10.0, 20.0]);
        for v in z {
            assert!((v.re - 1.0).abs() < 1e-9 && v.im.abs() < 1e-12);
        }
    }

    fn case2() -> (ModelParams, f64, f64) {
        (ModelParams::normalized(5.0, 2.0), 1.3108958, 0.7548876)
    }

    #[test]
    fn symbols_at_zero_frequency() {
        let (params, c, lambda) = case2();
        let s = spectral_symbols(c, lambda, &params).unwrap();
        let g = crate::characteristic::dispersal(c, lambda, &params);
        let h = crate::characteristic::reproduction(c, lambda, &params);
        assert!((s.a(0.0) - Complex64::new(g, 0.0)).norm() < 1e-12);
        assert!((s.b(0.0).norm() - h).abs() < 1e-12);
        let s0 = DelayKernelSymbols { lambda: 0.0, ..s };
        assert!((s0.a(0.0) - Complex64::new(params.delta, 0.0)).norm() < 1e-15);
        for eta in [0.3, 1.0, 4.0] {
            assert!((s.a(-eta) - s.a(eta).conj()).norm() < 1e-12);
            assert!((s.b(-eta) - s.b(eta).conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn symbol_gap_bounds_the_spectral_gap() {
        let (params, c, lambda) = case2();
        for c in [c, 1.5] {
            let s = spectral_symbols(c, lambda, &params).unwrap();
            let mu0 = crate::characteristic::gap(c, lambda, &params);
            for i in 0..10_000 {
                let eta = -50.0 + 100.0 * i as f64 / 9_999.0;
                let lhs = s.a(eta).re - s.b(eta).norm();
                let bound = mu0 + params.diffusion * (1.0 - (-params.alpha * eta * eta).exp());
                assert!(lhs >= mu0 - 1e-9, "eta {eta}");
                assert!(lhs >= bound - 1e-9 * bound.abs().max(1.0) - 1e-9 || lhs >= mu0);
            }
        }
    }
}
