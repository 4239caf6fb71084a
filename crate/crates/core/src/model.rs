//! Nicholson birth/death rates, Gaussian dispersal kernels and the
//! delay thresholds that separate monotone from oscillatory fronts.
//!
//! The model is
//!
//! ```text
//! v_t - D (J * v - v) + delta v = K * b(v(t - r, .)),   b(v) = p v exp(-a v)
//! ```
//!
//! with heat kernels `J = f_alpha`, `K = f_beta`, where
//! `f_s(x) = exp(-x^2 / (4 s)) / sqrt(4 pi s)`.

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Scalar coefficients of the delayed nonlocal Nicholson equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Dispersal rate `D`.
    pub diffusion: f64,
    /// Death coefficient `delta` in `d(v) = delta v`.
    pub delta: f64,
    /// Birth coefficient `p`.
    pub p: f64,
    /// Crowding coefficient `a`.
    pub a: f64,
    /// Maturation delay `r`.
    pub delay: f64,
    /// Variance parameter of the dispersal kernel `J`.
    pub alpha: f64,
    /// Variance parameter of the birth kernel `K`.
    pub beta: f64,
    /// Artificial viscosity used by the discrete schemes.
    pub mu: f64,
}

impl ModelParams {
    /// The normalization used throughout the numerical experiments:
    /// `D = delta = v+ = mu = 1`, `alpha = beta = 1`, hence `a = ln p`.
    pub fn normalized(p: f64, delay: f64) -> Self {
        Self {
            diffusion: 1.0,
            delta: 1.0,
            p,
            a: p.ln(),
            delay,
            alpha: 1.0,
            beta: 1.0,
            mu: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.diffusion,
            self.delta,
            self.p,
            self.a,
            self.delay,
            self.alpha,
            self.beta,
            self.mu,
        ]
        .iter()
        .all(|x| x.is_finite());
        require(finite, "params", "all coefficients must be finite")?;
        require(self.diffusion > 0.0, "diffusion", "must be positive")?;
        require(self.delta > 0.0, "delta", "must be positive")?;
        require(self.a > 0.0, "a", "must be positive")?;
        require(self.delay > 0.0, "delay", "must be positive")?;
        require(self.alpha > 0.0, "alpha", "must be positive")?;
        require(self.beta > 0.0, "beta", "must be positive")?;
        require(self.mu >= 0.0, "mu", "must be nonnegative")?;
        if self.p <= self.delta {
            return Err(Error::NoPositiveEquilibrium {
                p: self.p,
                delta: self.delta,
            });
        }
        Ok(())
    }

    /// `b(v) = p v e^{-a v}` without the domain check; used in the inner loops.
    #[inline]
    pub fn birth_value(&self, v: f64) -> f64 {
        self.p * v * (-self.a * v).exp()
    }

    #[inline]
    pub fn birth_slope(&self, v: f64) -> f64 {
        self.p * (-self.a * v).exp() * (1.0 - self.a * v)
    }

    /// `d'(0)`; the death rate is linear so this is `delta` everywhere.
    #[inline]
    pub fn death_slope(&self) -> f64 {
        self.delta
    }
}

/// The two constant states `v- = 0` and `v+ = ln(p/delta)/a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    pub v_minus: f64,
    pub v_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    MonotoneWave,
    OscillatoryWave,
    NoWaveExpected,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::MonotoneWave => "monotone",
            Regime::OscillatoryWave => "oscillatory",
            Regime::NoWaveExpected => "no-wave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Delay below which fronts are monotone; `+inf` when `b'(v+) >= 0`.
    pub r_lower: f64,
    /// Hopf threshold; `None` when `|b'(v+)| <= d'(v+)`.
    pub r_upper: Option<f64>,
    pub regime: Regime,
    pub b_prime_at_vplus: f64,
    pub d_prime_at_vplus: f64,
}

pub fn birth(v: f64, params: &ModelParams) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::NegativeDensity(v));
    }
    Ok(params.birth_value(v))
}

pub fn birth_prime(v: f64, params: &ModelParams) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::NegativeDensity(v));
    }
    Ok(params.birth_slope(v))
}

pub fn death(v: f64, params: &ModelParams) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::NegativeDensity(v));
    }
    Ok(params.delta * v)
}

pub fn equilibria(params: &ModelParams) -> Result<Equilibria> {
    if params.p <= params.delta {
        return Err(Error::NoPositiveEquilibrium {
            p: params.p,
            delta: params.delta,
        });
    }
    require(params.a > 0.0, "a", "must be positive")?;
    Ok(Equilibria {
        v_minus: 0.0,
        v_plus: (params.p / params.delta).ln() / params.a,
    })
}

fn slope_at_vplus(params: &ModelParams) -> Result<f64> {
    let eq = equilibria(params)?;
    Ok(params.birth_slope(eq.v_plus))
}

/// Positive root of `|b'(v+)| r e^{delta r + 1} = 1`.
pub fn r_lower(params: &ModelParams) -> Result<f64> {
    let slope = slope_at_vplus(params)?;
    if slope >= 0.0 {
        return Err(Error::AlwaysMonotone { slope });
    }
    r_lower_from_slopes(slope.abs(), params.death_slope())
}

/// Same threshold expressed through `|b'(v+)|` and `d'(v+)` directly.
pub fn r_lower_from_slopes(birth_slope_abs: f64, death_slope: f64) -> Result<f64> {
    require(birth_slope_abs > 0.0, "birth_slope_abs", "must be positive")?;
    require(death_slope >= 0.0, "death_slope", "must be nonnegative")?;
    let f = |r: f64| birth_slope_abs * r * (death_slope * r + 1.0).exp() - 1.0;
    let mut lo = 1e-6;
    let mut hi = 50.0;
    if f(lo) > 0.0 {
        // threshold below 1e-6: shrink the bracket towards zero
        while f(lo) > 0.0 && lo > 1e-300 {
            lo *= 0.5;
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonFinite("r_lower bracket"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Hopf threshold; `None` when `|b'(v+)| <= d'(v+)` (waves exist for every delay).
pub fn r_upper(params: &ModelParams) -> Result<Option<f64>> {
    let slope = slope_at_vplus(params)?;
    Ok(r_upper_from_slopes(slope.abs(), params.death_slope()))
}

pub fn r_upper_from_slopes(birth_slope_abs: f64, death_slope: f64) -> Option<f64> {
    if birth_slope_abs <= death_slope {
        return None;
    }
    let omega = (birth_slope_abs * birth_slope_abs - death_slope * death_slope).sqrt();
    Some((std::f64::consts::PI - (omega / death_slope).atan()) / omega)
}

pub fn regime(params: &ModelParams) -> Result<RegimeReport> {
    params.validate()?;
    let slope = slope_at_vplus(params)?;
    let lower = match r_lower(params) {
        Ok(r) => r,
        Err(Error::AlwaysMonotone { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let upper = r_upper(params)?;
    let r = params.delay;
    let regime = match upper {
        Some(ru) if r >= ru => Regime::NoWaveExpected,
        _ if r < lower => Regime::MonotoneWave,
        _ => Regime::OscillatoryWave,
    };
    Ok(RegimeReport {
        r_lower: lower,
        r_upper: upper,
        regime,
        b_prime_at_vplus: slope,
        d_prime_at_vplus: params.death_slope(),
    })
}

/// `\int f_s(y) e^{-lambda y} dy = e^{s lambda^2}` for the heat kernel `f_s`.
#[inline]
pub fn kernel_mgf(variance: f64, lambda: f64) -> f64 {
    (variance * lambda * lambda).exp()
}

/// Heat kernel `f_s(x)`.
#[inline]
pub fn heat_kernel(variance: f64, x: f64) -> f64 {
    (-x * x / (4.0 * variance)).exp() / (4.0 * std::f64::consts::PI * variance).sqrt()
}
