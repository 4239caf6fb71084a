//! Traveling-wave profiles by a viscosity-regularized fixed-point iteration.
//!
//! A profile `phi` of speed `c` solves
//!
//! ```text
//! c phi' - D (f_alpha * phi - phi) + delta phi = f_beta * b(phi(. - c r))
//! ```
//!
//! Given a guess `phi~`, one step solves the linear boundary-value problem
//!
//! ```text
//! c phi' - mu phi'' + (D + delta) phi = D f_alpha * phi~ + f_beta * b(phi~(. - c r)) - mu phi~''
//! ```
//!
//! whose fixed points are exactly the profiles.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::characteristic::{critical_point, is_critical, lambda_pair_with};
use crate::convolution::{
    convolve_extended, discretize_kernel, second_difference, shifted_extended, Field, GridSpec,
    KernelStencil, DEFAULT_RADIUS_SIGMAS,
};
use crate::error::{Error, Result};
use crate::model::{equilibria, ModelParams};
use crate::tridiag::{advection_diffusion_bands, Tridiagonal};

/// How the profile continues beyond the left end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LeftClosure {
    /// `phi = 0` at `-M` and beyond.
    Dirichlet,
    /// `e^{-lambda xi} phi` continued linearly past `-M`, with `lambda` the
    /// tail exponent of the front. Keeps a pulled front from drifting on a
    /// truncated domain.
    #[default]
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    /// Stop once the sup change per iteration drops below `tol * dxi`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight of the new iterate.
    pub damping: f64,
    pub left_closure: LeftClosure,
    pub radius_sigmas: f64,
    /// Shift the converged profile so that `phi(0)` is closest to `v+/2`.
    pub pin: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50_000,
            damping: 0.5,
            left_closure: LeftClosure::Tail,
            radius_sigmas: DEFAULT_RADIUS_SIGMAS,
            pin: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub c: f64,
    /// Exponent of the logistic seed and of the left tail closure.
    pub lambda_seed: f64,
    pub field: Field,
    pub residual_sup: f64,
    pub iterations: usize,
    /// Width trimmed from both ends when measuring residuals.
    pub collar: f64,
    pub radius_sigmas: f64,
}

impl WaveProfile {
    pub fn grid(&self) -> &GridSpec {
        &self.field.grid
    }
}

/// The two convolution terms shared by the profile and evolution schemes.
#[derive(Debug, Clone)]
pub struct NonlocalTerms {
    pub dispersal: KernelStencil,
    pub birth: KernelStencil,
}

impl NonlocalTerms {
    pub fn new(params: &ModelParams, grid: &GridSpec, radius_sigmas: f64) -> Result<Self> {
        Ok(Self {
            dispersal: discretize_kernel(params.alpha, grid, radius_sigmas)?,
            birth: discretize_kernel(params.beta, grid, radius_sigmas)?,
        })
    }

    /// Half-width of the wider stencil, in length units.
    pub fn reach(&self, dxi: f64) -> f64 {
        self.dispersal.radius_points.max(self.birth.radius_points) as f64 * dxi
    }

    /// `f_alpha * phi` on the grid.
    pub fn dispersal_term(&self, field: &Field) -> Vec<f64> {
        let ext = field.extended(self.dispersal.radius_points);
        let mut out = vec![0.0; field.len()];
        convolve_extended(&ext, &self.dispersal, &mut out);
        out
    }

    /// `f_beta * b(v(. - offset))` on the grid.
    pub fn birth_term(&self, field: &Field, offset: f64, params: &ModelParams) -> Vec<f64> {
        let mut ext = shifted_extended(field, offset, self.birth.radius_points);
        for v in &mut ext {
            *v = params.birth_value(*v);
        }
        let mut out = vec![0.0; field.len()];
        convolve_extended(&ext, &self.birth, &mut out);
        out
    }
}

/// Residual of the unregularized profile equation at every grid point
/// (centered first differences; the two end points are left at zero).
pub(crate) fn wave_equation_residual(
    field: &Field,
    c: f64,
    params: &ModelParams,
    terms: &NonlocalTerms,
) -> Vec<f64> {
    let n = field.len();
    let h = field.grid.dxi;
    let j = terms.dispersal_term(field);
    let k = terms.birth_term(field, c * params.delay, params);
    let phi = &field.values;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let d1 = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
        out[i] = c * d1 - params.diffusion * (j[i] - phi[i]) + params.delta * phi[i] - k[i];
    }
    out
}

/// One application of the fixed-point map, with its factorized operator.
pub struct ProfileOperator {
    params: ModelParams,
    c: f64,
    v_plus: f64,
    closure: LeftClosure,
    lambda_tail: f64,
    terms: NonlocalTerms,
    system: Tridiagonal,
}

impl ProfileOperator {
    pub fn new(
        params: &ModelParams,
        c: f64,
        grid: &GridSpec,
        closure: LeftClosure,
        lambda_tail: f64,
        radius_sigmas: f64,
    ) -> Result<Self> {
        params.validate()?;
        if params.mu <= 0.0 {
            warn!("profile scheme without viscosity; the tridiagonal system may be indefinite");
        }
        let terms = NonlocalTerms::new(params, grid, radius_sigmas)?;
        let [lower, diag, upper] =
            advection_diffusion_bands(grid.n, grid.dxi, c, params.mu, params.diffusion + params.delta);
        Ok(Self {
            params: *params,
            c,
            v_plus: equilibria(params)?.v_plus,
            closure,
            lambda_tail,
            terms,
            system: Tridiagonal::factor(&lower, &diag, &upper)?,
        })
    }

    pub fn terms(&self) -> &NonlocalTerms {
        &self.terms
    }

    pub fn step(&self, guess: &Field) -> Result<Field> {
        let p = &self.params;
        let n = guess.len();
        let j = self.terms.dispersal_term(guess);
        let k = self.terms.birth_term(guess, self.c * p.delay, p);
        let curvature = second_difference(&guess.values, guess.grid.dxi);
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| p.diffusion * j[i] + k[i] - p.mu * curvature[i])
            .collect();
        rhs[0] = match self.closure {
            LeftClosure::Dirichlet => 0.0,
            LeftClosure::Tail => {
                let q = (-self.lambda_tail * guess.grid.dxi).exp();
                (2.0 * guess.values[1] * q - guess.values[2] * q * q).max(0.0)
            }
        };
        rhs[n - 1] = self.v_plus;
        self.system.solve_in_place(&mut rhs)?;
        Ok(guess.with_values(rhs))
    }

    pub fn residual(&self, field: &Field) -> Vec<f64> {
        wave_equation_residual(field, self.c, &self.params, &self.terms)
    }
}

/// Logistic seed `v+ e^{lambda xi} / (1 + e^{lambda xi})`.
pub fn seed_profile(params: &ModelParams, lambda_seed: f64, grid: &GridSpec) -> Result<Field> {
    if !(lambda_seed > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda_seed",
            reason: format!("must be positive, got {lambda_seed}"),
        });
    }
    let v_plus = equilibria(params)?.v_plus;
    // 1/(1+e^{-x}) stays finite for both signs of x
    Ok(Field::from_fn(
        *grid,
        |x| v_plus / (1.0 + (-lambda_seed * x).exp()),
        0.0,
        v_plus,
    ))
}

/// One fixed-point step with default stencils and the Dirichlet closure.
pub fn solve_profile_step(guess: &Field, c: f64, params: &ModelParams) -> Result<Field> {
    let op = ProfileOperator::new(
        params,
        c,
        &guess.grid,
        LeftClosure::Dirichlet,
        0.0,
        DEFAULT_RADIUS_SIGMAS,
    )?;
    op.step(guess)
}

/// Width trimmed from each end of the grid when measuring residuals.
pub fn residual_collar(params: &ModelParams, c: f64, terms: &NonlocalTerms, dxi: f64) -> f64 {
    terms.reach(dxi).max(c * params.delay)
}

fn shift_cells(field: &Field, cells: isize) -> Field {
    let n = field.len() as isize;
    let values = (0..n).map(|i| field.padded(i + cells)).collect();
    field.with_values(values)
}

struct IterationOutcome {
    iterations: usize,
    last_change: f64,
}

fn iterate(
    op: &ProfileOperator,
    phi: &mut Field,
    config: &ProfileConfig,
    budget: usize,
    blow_up: f64,
) -> Result<IterationOutcome> {
    let threshold = config.tol * phi.grid.dxi;
    let theta = config.damping;
    let mut last_change = f64::INFINITY;
    for it in 0..budget {
        let next = op.step(phi)?;
        let mut change = 0.0f64;
        for (old, new) in phi.values.iter_mut().zip(&next.values) {
            change = change.max((new - *old).abs());
            *old = (1.0 - theta) * *old + theta * new;
        }
        last_change = change;
        let sup = phi.sup();
        if !sup.is_finite() || sup > blow_up {
            return Err(Error::ProfileDiverged { iteration: it, sup });
        }
        if it % 1000 == 0 {
            debug!("profile iteration {it}: change {change:.3e}");
        }
        if change < threshold {
            return Ok(IterationOutcome {
                iterations: it + 1,
                last_change,
            });
        }
    }
    Ok(IterationOutcome {
        iterations: budget,
        last_change,
    })
}

/// Iterates the fixed-point map from the logistic seed until it settles.
pub fn solve_profile(
    params: &ModelParams,
    c: f64,
    grid: &GridSpec,
    config: &ProfileConfig,
) -> Result<WaveProfile> {
    params.validate()?;
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            reason: "must lie in (0, 1]".into(),
        });
    }
    let critical = critical_point(params)?;
    let lambda_seed = if is_critical(c, &critical) || c < critical.c {
        if c < critical.c * (1.0 - 1e-9) {
            warn!("speed {c} is below the critical speed {}", critical.c);
        }
        critical.lambda
    } else {
        // a supercritical front decays like the slower root
        lambda_pair_with(c, &critical, params)?.lambda1
    };
    let v_plus = equilibria(params)?.v_plus;
    let tail = match config.left_closure {
        LeftClosure::Dirichlet => None,
        LeftClosure::Tail => Some(lambda_seed),
    };
    let op = ProfileOperator::new(params, c, grid, config.left_closure, lambda_seed, config.radius_sigmas)?;
    let mut phi = seed_profile(params, lambda_seed, grid)?.with_left_tail(tail);
    let blow_up = 10.0 * v_plus * params.p / params.delta;

    let mut outcome = iterate(&op, &mut phi, config, config.max_iter, blow_up)?;
    let mut total = outcome.iterations;
    if config.pin {
        let centre = grid.nearest(0.0) as isize;
        for _ in 0..3 {
            let Some(front) = phi.values.iter().position(|&v| v >= 0.5 * v_plus) else {
                break;
            };
            let cells = front as isize - centre;
            if cells == 0 {
                break;
            }
            debug!("pinning profile: shift by {cells} cells");
            phi = shift_cells(&phi, cells);
            outcome = iterate(&op, &mut phi, config, config.max_iter.saturating_sub(total).max(1), blow_up)?;
            total += outcome.iterations;
        }
    }

    let collar = residual_collar(params, c, op.terms(), grid.dxi);
    let residual = op.residual(&phi);
    let residual_sup = grid
        .interior(collar)
        .map(|i| residual[i].abs())
        .fold(0.0, f64::max);
    if outcome.last_change >= config.tol * grid.dxi || residual_sup >= config.tol {
        return Err(Error::ProfileNotConverged {
            iterations: total,
            last_change: outcome.last_change,
            residual: residual_sup,
        });
    }
    info!("profile c = {c}: {total} iterations, residual {residual_sup:.3e}");
    Ok(WaveProfile {
        c,
        lambda_seed,
        field: phi,
        residual_sup,
        iterations: total,
        collar,
        radius_sigmas: config.radius_sigmas,
    })
}

/// Sup of the unregularized residual over the collar-trimmed interior.
pub fn profile_residual(profile: &WaveProfile, params: &ModelParams) -> Result<f64> {
    let grid = profile.field.grid;
    let terms = NonlocalTerms::new(params, &grid, profile.radius_sigmas)?;
    let residual = wave_equation_residual(&profile.field, profile.c, params, &terms);
    Ok(grid
        .interior(profile.collar)
        .map(|i| residual[i].abs())
        .fold(0.0, f64::max))
}
