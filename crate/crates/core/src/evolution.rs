//! Time stepping in the moving frame `xi = x + c t`.
//!
//! The nonlinear problem is
//!
//! ```text
//! v_t + c v_xi - D (f_alpha * v - v) + delta v = f_beta * b(v(t - r, xi - c r))
//! ```
//!
//! discretized by backward Euler with viscosity `-mu v_xixi` added on the
//! implicit side and subtracted on the lagged side; each step refines the
//! lagged iterate `inner_iters` times.
//!
//! The linear comparison problem for `u+ = e^{-lambda xi} u` uses the
//! conjugate of that scheme under the same weight, so the two discretizations
//! agree node by node when the nonlinearity is replaced by its slope at zero.

use std::collections::VecDeque;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::analysis::{l2_norm, sup_error, weighted_sup_error};
use crate::characteristic::weight_exponent;
use crate::convolution::{
    convolve_extended, discretize_kernel, second_difference, shifted_extended_weighted, Field,
    GridSpec, KernelStencil,
};
use crate::error::{require, Error, Result};
use crate::model::{equilibria, ModelParams};
use crate::tridiag::{advection_diffusion_bands, Tridiagonal};
use crate::waveprofile::{NonlocalTerms, WaveProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    /// Requested time step; lowered so that `r / dt` is an integer.
    pub dt: f64,
    pub t_end: f64,
    /// Viscosity of the time-stepping scheme.
    pub mu: f64,
    /// Tridiagonal solves per step.
    pub inner_iters: usize,
    /// Steps between stored snapshots.
    pub snapshot_every: usize,
    /// Error series sampled every this many steps.
    pub record_every: usize,
    /// A level with sup above `blow_up_factor * v+` aborts the run.
    pub blow_up_factor: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 4.0,
            mu: 1.0,
            inner_iters: 2,
            snapshot_every: 100,
            record_every: 1,
            blow_up_factor: 1e3,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.dt.is_finite() && self.dt > 0.0, "dt", "must be positive")?;
        require(self.t_end.is_finite() && self.t_end > 0.0, "t_end", "must be positive")?;
        require(self.mu.is_finite() && self.mu >= 0.0, "mu", "must be nonnegative")?;
        require(self.inner_iters >= 1, "inner_iters", "need at least one solve per step")?;
        require(self.snapshot_every >= 1, "snapshot_every", "must be at least 1")?;
        require(self.record_every >= 1, "record_every", "must be at least 1")?;
        Ok(())
    }

    /// Steps per delay interval and the matching time step.
    pub fn delay_steps(&self, delay: f64) -> (usize, f64) {
        let m = (delay / self.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (m, delay / m as f64)
    }
}

/// The levels `v(t - r), ..., v(t)` at spacing `dt`.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    levels: VecDeque<Field>,
    /// Time of the oldest stored level.
    pub base_time: f64,
    pub dt: f64,
    steps_per_delay: usize,
}

impl HistoryBuffer {
    /// Fills the buffer from `v0(s)` at `s = -r, -r + dt, ..., 0`, checking
    /// that every level carries the expected far-field constants.
    pub fn from_fn(
        v0: impl Fn(f64) -> Field,
        delay: f64,
        config: &EvolveConfig,
        far_field: (f64, f64),
    ) -> Result<Self> {
        let (m, dt) = config.delay_steps(delay);
        let mut levels = VecDeque::with_capacity(m + 2);
        for j in 0..=m {
            let s = -delay + j as f64 * dt;
            let level = v0(s);
            check_far_field(&level, far_field)?;
            levels.push_back(level);
        }
        Ok(Self {
            levels,
            base_time: -delay,
            dt,
            steps_per_delay: m,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn steps_per_delay(&self) -> usize {
        self.steps_per_delay
    }

    pub fn current(&self) -> &Field {
        self.levels.back().expect("history is never empty")
    }

    /// Level `k` steps after the oldest one.
    pub fn level(&self, k: usize) -> &Field {
        &self.levels[k]
    }

    /// Level stored at time `t`, which must be a multiple of `dt` from the base.
    pub fn lookup(&self, t: f64) -> Option<&Field> {
        let k = (t - self.base_time) / self.dt;
        let kr = k.round();
        if (k - kr).abs() > 1e-6 || kr < 0.0 {
            return None;
        }
        self.levels.get(kr as usize)
    }

    /// The level that plays the role of `v(t + dt - r)` in the next step.
    pub fn delayed_for_next(&self) -> &Field {
        &self.levels[1]
    }

    pub fn push(&mut self, level: Field) {
        self.levels.push_back(level);
        self.levels.pop_front();
        self.base_time += self.dt;
    }

    pub fn time(&self) -> f64 {
        self.base_time + self.steps_per_delay as f64 * self.dt
    }
}

fn check_far_field(level: &Field, (left, right): (f64, f64)) -> Result<()> {
    let tol = 1e-12 * (1.0 + right.abs());
    if (level.left_value - left).abs() > tol || (level.right_value - right).abs() > tol {
        return Err(Error::FarFieldMismatch(format!(
            "level has far field ({}, {}), boundary data is ({left}, {right})",
            level.left_value, level.right_value
        )));
    }
    Ok(())
}

/// History built from the wave profile plus `eps f_gamma`, constant in `s`.
pub fn init_history(
    profile: &WaveProfile,
    eps: f64,
    gamma: f64,
    params: &ModelParams,
    config: &EvolveConfig,
) -> Result<HistoryBuffer> {
    let phi = &profile.field;
    let level = phi.with_values(
        (0..phi.len())
            .map(|i| phi.values[i] + eps * crate::model::heat_kernel(gamma, phi.grid.xi(i)))
            .collect(),
    );
    HistoryBuffer::from_fn(|_| level.clone(), params.delay, config, (0.0, equilibria(params)?.v_plus))
}

/// Advances the nonlinear moving-frame problem one step at a time.
pub struct NonlinearStepper {
    params: ModelParams,
    c: f64,
    mu: f64,
    dt: f64,
    inner_iters: usize,
    v_plus: f64,
    blow_up: f64,
    terms: NonlocalTerms,
    system: Tridiagonal,
    pub history: HistoryBuffer,
}

impl NonlinearStepper {
    pub fn new(
        params: &ModelParams,
        c: f64,
        config: &EvolveConfig,
        radius_sigmas: f64,
        history: HistoryBuffer,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let grid = history.current().grid;
        let dt = history.dt;
        let terms = NonlocalTerms::new(params, &grid, radius_sigmas)?;
        let k = params.diffusion + params.delta + 1.0 / dt;
        let [lower, diag, upper] = advection_diffusion_bands(grid.n, grid.dxi, c, config.mu, k);
        let v_plus = equilibria(params)?.v_plus;
        Ok(Self {
            params: *params,
            c,
            mu: config.mu,
            dt,
            inner_iters: config.inner_iters,
            v_plus,
            blow_up: config.blow_up_factor * v_plus,
            terms,
            system: Tridiagonal::factor(&lower, &diag, &upper)?,
            history,
        })
    }

    pub fn time(&self) -> f64 {
        self.history.time()
    }

    pub fn current(&self) -> &Field {
        self.history.current()
    }

    /// Level after one step, without committing it.
    pub fn advance(&self) -> Result<Field> {
        let p = &self.params;
        let current = self.history.current();
        let delayed = self.history.delayed_for_next();
        let n = current.len();
        let birth = self.terms.birth_term(delayed, self.c * p.delay, p);
        let inv_dt = 1.0 / self.dt;
        let mut guess = current.clone();
        for _ in 0..self.inner_iters {
            let j = self.terms.dispersal_term(&guess);
            let curvature = second_difference(&guess.values, guess.grid.dxi);
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    p.diffusion * j[i] + birth[i] - self.mu * curvature[i] + inv_dt * current.values[i]
                })
                .collect();
            rhs[0] = match guess.left_tail {
                None => guess.left_value,
                Some(rate) => {
                    let q = (-rate * guess.grid.dxi).exp();
                    (2.0 * guess.values[1] * q - guess.values[2] * q * q).max(0.0)
                }
            };
            rhs[n - 1] = self.v_plus;
            self.system.solve_in_place(&mut rhs)?;
            guess.values = rhs;
        }
        let t = self.time() + self.dt;
        let sup = guess.sup();
        if !sup.is_finite() || sup > self.blow_up {
            return Err(Error::BlowUp { time: t, sup });
        }
        Ok(guess)
    }

    pub fn step(&mut self) -> Result<&Field> {
        let next = self.advance()?;
        self.history.push(next);
        Ok(self.history.current())
    }
}

/// Advances the linear comparison problem for the weighted variable.
pub struct LinearStepper {
    p: f64,
    c: f64,
    lambda: f64,
    delay: f64,
    diffusion: f64,
    mu: f64,
    dt: f64,
    inner_iters: usize,
    dispersal: KernelStencil,
    birth: KernelStencil,
    system: Tridiagonal,
    pub history: HistoryBuffer,
}

impl LinearStepper {
    pub fn new(
        params: &ModelParams,
        c: f64,
        lambda: f64,
        config: &EvolveConfig,
        radius_sigmas: f64,
        history: HistoryBuffer,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        require(lambda.is_finite() && lambda >= 0.0, "lambda", "must be nonnegative")?;
        let grid = history.current().grid;
        let dt = history.dt;
        let h = grid.dxi;
        let dispersal = discretize_kernel(params.alpha, &grid, radius_sigmas)?.tilted(lambda, h);
        let birth = discretize_kernel(params.beta, &grid, radius_sigmas)?.tilted(lambda, h);
        let (ep, em) = ((lambda * h).exp(), (-lambda * h).exp());
        let h2 = h * h;
        let n = grid.n;
        let mut lower = vec![em * (-c / (2.0 * h) - config.mu / h2); n];
        let mut diag = vec![2.0 * config.mu / h2 + params.diffusion + params.delta + 1.0 / dt; n];
        let mut upper = vec![ep * (c / (2.0 * h) - config.mu / h2); n];
        for i in [0, n - 1] {
            lower[i] = 0.0;
            upper[i] = 0.0;
            diag[i] = 1.0;
        }
        Ok(Self {
            p: params.birth_slope(0.0),
            c,
            lambda,
            delay: params.delay,
            diffusion: params.diffusion,
            mu: config.mu,
            dt,
            inner_iters: config.inner_iters,
            dispersal,
            birth,
            system: Tridiagonal::factor(&lower, &diag, &upper)?,
            history,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn time(&self) -> f64 {
        self.history.time()
    }

    pub fn current(&self) -> &Field {
        self.history.current()
    }

    fn weighted_curvature(&self, u: &[f64], h: f64) -> Vec<f64> {
        let (ep, em) = ((self.lambda * h).exp(), (-self.lambda * h).exp());
        let n = u.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (ep * u[i + 1] - 2.0 * u[i] + em * u[i - 1]) / (h * h);
        }
        out
    }

    pub fn advance(&self) -> Result<Field> {
        let current = self.history.current();
        let delayed = self.history.delayed_for_next();
        let n = current.len();
        let h = current.grid.dxi;
        let shifted =
            shifted_extended_weighted(delayed, self.c * self.delay, self.lambda, self.birth.radius_points);
        let mut birth = vec![0.0; n];
        convolve_extended(&shifted, &self.birth, &mut birth);
        let inv_dt = 1.0 / self.dt;
        let mut guess = current.clone();
        for _ in 0..self.inner_iters {
            let ext = guess.extended(self.dispersal.radius_points);
            let mut j = vec![0.0; n];
            convolve_extended(&ext, &self.dispersal, &mut j);
            let curvature = self.weighted_curvature(&guess.values, h);
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    self.diffusion * j[i] + self.p * birth[i] - self.mu * curvature[i]
                        + inv_dt * current.values[i]
                })
                .collect();
            rhs[0] = 0.0;
            rhs[n - 1] = 0.0;
            self.system.solve_in_place(&mut rhs)?;
            guess.values = rhs;
        }
        Ok(guess)
    }

    pub fn step(&mut self) -> Result<&Field> {
        let next = self.advance()?;
        self.history.push(next);
        Ok(self.history.current())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
}

impl Snapshot {
    fn of(t: f64, field: &Field) -> Self {
        Self {
            t,
            xi: field.grid.points(),
            values: field.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub sup_error: Vec<f64>,
    pub weighted_sup_error: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Smallest value seen at any recorded level.
    pub min_value: f64,
    pub lambda: f64,
    pub collar: f64,
    pub dt: f64,
}

impl EvolutionRecord {
    /// Error pair at the recorded time nearest to `t`.
    pub fn at(&self, t: f64) -> Option<(f64, f64)> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some((self.sup_error[k], self.weighted_sup_error[k]))
    }
}

/// Runs the nonlinear problem from `history` and records its distance to
/// the reference profile.
pub fn evolve(
    history: HistoryBuffer,
    c: f64,
    reference: &WaveProfile,
    params: &ModelParams,
    config: &EvolveConfig,
) -> Result<EvolutionRecord> {
    let lambda = weight_exponent(c, params)?;
    evolve_with(history, c, reference, params, config, lambda, |_, _| {})
}

/// [`evolve`] with an explicit weight exponent and a per-level observer.
pub fn evolve_with(
    history: HistoryBuffer,
    c: f64,
    reference: &WaveProfile,
    params: &ModelParams,
    config: &EvolveConfig,
    lambda: f64,
    mut observe: impl FnMut(f64, &Field),
) -> Result<EvolutionRecord> {
    let phi = &reference.field;
    if !history.current().grid.same_as(&phi.grid) {
        return Err(Error::GridMismatch("history and reference profile grids differ".into()));
    }
    let mut stepper = NonlinearStepper::new(params, c, config, reference.radius_sigmas, history)?;
    let collar = reference.collar;
    let steps = (config.t_end / stepper.dt).round() as usize;
    let mut record = EvolutionRecord {
        lambda,
        collar,
        dt: stepper.dt,
        min_value: f64::INFINITY,
        ..Default::default()
    };
    let log_level = |record: &mut EvolutionRecord, t: f64, v: &Field, snapshot: bool| -> Result<()> {
        record.times.push(t);
        record.sup_error.push(sup_error(v, phi, collar)?);
        record.weighted_sup_error.push(weighted_sup_error(v, phi, lambda, collar)?);
        record.min_value = record.min_value.min(v.min());
        if snapshot {
            record.snapshots.push(Snapshot::of(t, v));
        }
        Ok(())
    };
    log_level(&mut record, 0.0, stepper.current(), true)?;
    observe(0.0, stepper.current());
    for k in 1..=steps {
        let t = k as f64 * stepper.dt;
        stepper.step().map_err(|e| match e {
            Error::BlowUp { sup, .. } => Error::BlowUp { time: t, sup },
            other => other,
        })?;
        let v = stepper.current();
        observe(t, v);
        let snapshot = k % config.snapshot_every == 0;
        if k % config.record_every == 0 || snapshot || k == steps {
            log_level(&mut record, t, v, snapshot)?;
        }
        if k % 500 == 0 {
            debug!("t = {t:.2}: sup error {:.3e}", record.sup_error.last().unwrap());
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearRecord {
    pub times: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub min_value: f64,
    pub snapshots: Vec<Snapshot>,
    pub lambda: f64,
    pub dt: f64,
}

impl LinearRecord {
    /// Any level dipped below `-1e-6`: the scheme lost positivity.
    pub fn positivity_violated(&self) -> bool {
        self.min_value < -1e-6
    }
}

/// Runs the linear comparison problem for the weighted variable `u+`.
pub fn evolve_linear(
    history: HistoryBuffer,
    c: f64,
    lambda: f64,
    params: &ModelParams,
    config: &EvolveConfig,
    radius_sigmas: f64,
) -> Result<LinearRecord> {
    evolve_linear_with(history, c, lambda, params, config, radius_sigmas, |_, _| {})
}

pub fn evolve_linear_with(
    history: HistoryBuffer,
    c: f64,
    lambda: f64,
    params: &ModelParams,
    config: &EvolveConfig,
    radius_sigmas: f64,
    mut observe: impl FnMut(f64, &Field),
) -> Result<LinearRecord> {
    let min0 = (0..history.len())
        .map(|k| history.level(k).min())
        .fold(f64::INFINITY, f64::min);
    if min0 < 0.0 {
        return Err(Error::InvalidParameter {
            name: "u0_plus",
            reason: format!("initial data must be nonnegative, found {min0}"),
        });
    }
    let mut stepper = LinearStepper::new(params, c, lambda, config, radius_sigmas, history)?;
    let steps = (config.t_end / stepper.dt).round() as usize;
    let mut record = LinearRecord {
        lambda,
        dt: stepper.dt,
        min_value: f64::INFINITY,
        ..Default::default()
    };
    let log_level = |record: &mut LinearRecord, t: f64, u: &Field, snapshot: bool| {
        record.times.push(t);
        record.l2_norm.push(l2_norm(u));
        record.sup_norm.push(u.sup());
        record.min_value = record.min_value.min(u.min());
        if snapshot {
            record.snapshots.push(Snapshot::of(t, u));
        }
    };
    log_level(&mut record, 0.0, stepper.current(), true);
    observe(0.0, stepper.current());
    for k in 1..=steps {
        let t = k as f64 * stepper.dt;
        stepper.step()?;
        let u = stepper.current();
        if !u.values.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { time: t, sup: f64::INFINITY });
        }
        observe(t, u);
        let snapshot = k % config.snapshot_every == 0;
        if k % config.record_every == 0 || snapshot || k == steps {
            log_level(&mut record, t, u, snapshot);
        }
    }
    if record.positivity_violated() {
        log::warn!("linear scheme lost positivity: min {:.3e}", record.min_value);
    }
    Ok(record)
}

/// History of zero-far-field levels built from one field, constant in `s`.
pub fn constant_history(level: &Field, delay: f64, config: &EvolveConfig) -> Result<HistoryBuffer> {
    HistoryBuffer::from_fn(|_| level.clone(), delay, config, (level.left_value, level.right_value))
}

/// Grid used by a record; convenience for callers holding only a profile.
pub fn grid_of(profile: &WaveProfile) -> GridSpec {
    profile.field.grid
}
