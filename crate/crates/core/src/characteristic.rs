//! Dispersion relation of the linearization at `v = 0`.
//!
//! For a speed `c` and tail exponent `lambda` the two sides are
//!
//! ```text
//! G_c(l) = c l - D e^{alpha l^2} + D + delta      (dispersal)
//! H_c(l) = p e^{-l c r} e^{beta l^2}              (reproduction)
//! ```
//!
//! The critical pair `(c*, l*)` is the point where the curves touch;
//! for `c > c*` they cross twice, at `l1 < l2`.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kernel_mgf, ModelParams};

const NEWTON_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 100;
const BISECT_TOL: f64 = 1e-10;
const SCAN_LO: f64 = 0.05;
const SCAN_HI: f64 = 3.0;
const SCAN_POINTS: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicPoint {
    pub c: f64,
    pub lambda: f64,
    /// `|G - H|` at the point.
    pub residual_value: f64,
    /// `|dG/dl - dH/dl|`; only meaningful for the critical pair.
    pub residual_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
    /// Set when `c` equals `c*` to tolerance and both roots coincide.
    pub degenerate: bool,
}

/// `G_c(lambda)`.
pub fn dispersal(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    c * lambda - params.diffusion * kernel_mgf(params.alpha, lambda) + params.diffusion + params.delta
}

/// `dG_c/dlambda`.
pub fn dispersal_slope(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    c - 2.0 * params.diffusion * params.alpha * lambda * kernel_mgf(params.alpha, lambda)
}

fn dispersal_curvature(lambda: f64, params: &ModelParams) -> f64 {
    let a = params.alpha;
    -2.0 * params.diffusion * a * kernel_mgf(a, lambda) * (1.0 + 2.0 * a * lambda * lambda)
}

/// `H_c(lambda)`.
pub fn reproduction(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    params.p * (-lambda * c * params.delay).exp() * kernel_mgf(params.beta, lambda)
}

/// `dH_c/dlambda`.
pub fn reproduction_slope(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    reproduction(c, lambda, params) * (2.0 * params.beta * lambda - c * params.delay)
}

fn reproduction_curvature(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    let s = 2.0 * params.beta * lambda - c * params.delay;
    reproduction(c, lambda, params) * (s * s + 2.0 * params.beta)
}

/// `G_c(lambda) - H_c(lambda)` without any window check.
pub fn gap(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    dispersal(c, lambda, params) - reproduction(c, lambda, params)
}

fn gap_slope(c: f64, lambda: f64, params: &ModelParams) -> f64 {
    dispersal_slope(c, lambda, params) - reproduction_slope(c, lambda, params)
}

/// Partial derivatives of `(gap, gap_slope)` with respect to `(c, lambda)`.
fn tangency_jacobian(c: f64, lambda: f64, params: &ModelParams) -> [[f64; 2]; 2] {
    let r = params.delay;
    let h = reproduction(c, lambda, params);
    let s = 2.0 * params.beta * lambda - c * r;
    let dh_dc = -lambda * r * h;
    let dhl_dc = dh_dc * s - r * h;
    [
        [lambda - dh_dc, gap_slope(c, lambda, params)],
        [
            1.0 - dhl_dc,
            dispersal_curvature(lambda, params) - reproduction_curvature(c, lambda, params),
        ],
    ]
}

/// The speed `c` with `G_c(lambda) = H_c(lambda)` for a fixed `lambda > 0`.
///
/// The gap is strictly increasing in `c` and negative at `c = 0`, so the
/// root is unique and found by bisection.
pub fn speed_for_exponent(lambda: f64, params: &ModelParams) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    let f = |c: f64| gap(c, lambda, params);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NonFinite("speed bracket"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECT_TOL * hi.max(1.0) * 1e-3 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves the tangency system for `(c*, lambda*)`.
pub fn critical_point(params: &ModelParams) -> Result<CharacteristicPoint> {
    params.validate()?;

    // coarse scan: c* = min over lambda of the crossing speed
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..SCAN_POINTS {
        let lambda = SCAN_LO + (SCAN_HI - SCAN_LO) * i as f64 / (SCAN_POINTS - 1) as f64;
        let c = speed_for_exponent(lambda, params)?;
        if c < best.0 {
            best = (c, lambda);
        }
    }
    let (mut c, mut lambda) = best;
    debug!("critical scan start c = {c}, lambda = {lambda}");

    let residual = |c: f64, l: f64| {
        let f = [gap(c, l, params), gap_slope(c, l, params)];
        (f, f[0].hypot(f[1]))
    };
    let (mut f, mut norm) = residual(c, lambda);
    for iteration in 0..NEWTON_MAX_ITER {
        if f[0].abs() < NEWTON_TOL * 1e-2 && f[1].abs() < NEWTON_TOL * 1e-2 {
            break;
        }
        let j = tangency_jacobian(c, lambda, params);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: iteration,
                c,
                lambda,
                residual: norm,
            });
        }
        let dc = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let dl = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        let mut step = 1.0;
        loop {
            let (c_new, l_new) = (c - step * dc, lambda - step * dl);
            if l_new > 0.0 && c_new > 0.0 {
                let (f_new, n_new) = residual(c_new, l_new);
                if n_new < norm || step < 1e-10 {
                    c = c_new;
                    lambda = l_new;
                    f = f_new;
                    norm = n_new;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NewtonDiverged {
                    iterations: iteration,
                    c,
                    lambda,
                    residual: norm,
                });
            }
        }
    }
    if !(f[0].abs() < NEWTON_TOL && f[1].abs() < NEWTON_TOL) {
        return Err(Error::NewtonDiverged {
            iterations: NEWTON_MAX_ITER,
            c,
            lambda,
            residual: norm,
        });
    }
    Ok(CharacteristicPoint {
        c,
        lambda,
        residual_value: f[0].abs(),
        residual_slope: f[1].abs(),
    })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() < BISECT_TOL {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Relative distance from `c*` under which `c` is treated as critical.
pub const CRITICAL_SPEED_TOL: f64 = 1e-9;

pub fn is_critical(c: f64, critical: &CharacteristicPoint) -> bool {
    (c - critical.c).abs() <= CRITICAL_SPEED_TOL * critical.c
}

/// The two tail exponents for a supercritical speed.
pub fn lambda_pair(c: f64, params: &ModelParams) -> Result<LambdaPair> {
    let critical = critical_point(params)?;
    lambda_pair_with(c, &critical, params)
}

/// [`lambda_pair`] with a precomputed critical point.
pub fn lambda_pair_with(
    c: f64,
    critical: &CharacteristicPoint,
    params: &ModelParams,
) -> Result<LambdaPair> {
    if is_critical(c, critical) {
        return Ok(LambdaPair {
            lambda1: critical.lambda,
            lambda2: critical.lambda,
            c,
            degenerate: true,
        });
    }
    if c < critical.c {
        return Err(Error::NoRootPair {
            c,
            c_star: critical.c,
        });
    }
    let f = |l: f64| gap(c, l, params);
    let mid = critical.lambda;
    debug_assert!(f(mid) > 0.0);
    let lambda1 = bisect(0.0, mid, f);
    let mut hi = mid + 1.0;
    while f(hi) > 0.0 {
        hi += 1.0;
        if hi > 1e6 {
            return Err(Error::NonFinite("lambda2 bracket"));
        }
    }
    let lambda2 = bisect(mid, hi, f);
    Ok(LambdaPair {
        lambda1,
        lambda2,
        c,
        degenerate: false,
    })
}

/// Spectral gap `mu0(c) = G_c(lambda) - H_c(lambda)`, checked against the
/// admissible window `[lambda1, lambda2]` (or `lambda*` at `c = c*`).
pub fn mu0(c: f64, lambda: f64, params: &ModelParams) -> Result<f64> {
    let pair = lambda_pair(c, params)?;
    let slack = if pair.degenerate { 1e-6 } else { 1e-12 };
    if lambda < pair.lambda1 - slack || lambda > pair.lambda2 + slack {
        return Err(Error::LambdaOutsideWindow {
            lambda,
            lower: pair.lambda1,
            upper: pair.lambda2,
        });
    }
    Ok(gap(c, lambda, params))
}

/// Exponent used to weight the perturbation for a wave of speed `c`:
/// `lambda*` at the critical speed, otherwise the maximizer of the gap
/// on `(lambda1, lambda2)`.
pub fn weight_exponent(c: f64, params: &ModelParams) -> Result<f64> {
    let critical = critical_point(params)?;
    let pair = lambda_pair_with(c, &critical, params)?;
    if pair.degenerate {
        return Ok(critical.lambda);
    }
    // golden section; the gap is concave on the window
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (pair.lambda1, pair.lambda2);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (gap(c, x1, params), gap(c, x2, params));
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = gap(c, x2, params);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = gap(c, x1, params);
        }
    }
    Ok(0.5 * (a + b))
}
