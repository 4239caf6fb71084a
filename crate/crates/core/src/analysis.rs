//! Error norms and decay-law fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convolution::Field;
use crate::error::{Error, Result};

/// Exponents above this are evaluated through logarithms.
const EXP_LIMIT: f64 = 700.0;

fn check_grids(v: &Field, phi: &Field) -> Result<()> {
    if v.grid.same_as(&phi.grid) && v.len() == phi.len() {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "fields on {} and {} points",
            v.len(),
            phi.len()
        )))
    }
}

/// `max |v - phi|` over `[-M + collar, M - collar]`.
pub fn sup_error(v: &Field, phi: &Field, collar: f64) -> Result<f64> {
    check_grids(v, phi)?;
    Ok(v.grid
        .interior(collar)
        .map(|i| (v.values[i] - phi.values[i]).abs())
        .fold(0.0, f64::max))
}

/// `max e^{-lambda xi} |v - phi|` over the collar-trimmed grid.
pub fn weighted_sup_error(v: &Field, phi: &Field, lambda: f64, collar: f64) -> Result<f64> {
    check_grids(v, phi)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be nonnegative, got {lambda}"),
        });
    }
    let log_space = lambda * v.grid.half_width > EXP_LIMIT;
    Ok(v.grid
        .interior(collar)
        .map(|i| {
            let d = (v.values[i] - phi.values[i]).abs();
            let xi = v.grid.xi(i);
            if d == 0.0 {
                0.0
            } else if log_space {
                (d.ln() - lambda * xi).exp()
            } else {
                (-lambda * xi).exp() * d
            }
        })
        .fold(0.0, f64::max))
}

/// The weighted perturbation `e^{-lambda xi} |v - phi|` at every node.
pub fn weighted_difference(v: &Field, phi: &Field, lambda: f64) -> Result<Vec<f64>> {
    check_grids(v, phi)?;
    Ok((0..v.len())
        .map(|i| {
            let d = (v.values[i] - phi.values[i]).abs();
            if d == 0.0 {
                0.0
            } else {
                (d.ln() - lambda * v.grid.xi(i)).exp()
            }
        })
        .collect())
}

/// Trapezoid `L^2` norm on the grid.
pub fn l2_norm(field: &Field) -> f64 {
    let v = &field.values;
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().map(|x| x * x).sum();
    ((inner + 0.5 * (v[0] * v[0] + v[n - 1] * v[n - 1])) * field.grid.dxi).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `log e = log C - eps t`
    Exponential,
    /// `log e = log C - q log t`
    Algebraic,
    /// both regressors
    #[default]
    Joint,
}

/// When to fit the envelope of local maxima rather than the raw series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// Only if some value in the window is not positive.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub mode: FitMode,
    /// Explicit time window; the default drops the first 20% of the span.
    pub window: Option<(f64, f64)>,
    pub envelope: Envelope,
}

impl FitOptions {
    pub fn new(mode: FitMode) -> Self {
        Self {
            mode,
            window: None,
            envelope: Envelope::Auto,
        }
    }

    pub fn window(mut self, start: f64, end: f64) -> Self {
        self.window = Some((start, end));
        self
    }

    pub fn envelope(mut self, rule: Envelope) -> Self {
        self.envelope = rule;
        self
    }
}

/// Fitted decay law `e(t) ~ C t^{-q} e^{-eps t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `log C`.
    pub amplitude: f64,
    pub exp_rate: f64,
    pub alg_exponent: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    pub mode: FitMode,
    pub points: usize,
    pub used_envelope: bool,
}

const MIN_POINTS: usize = 10;

/// Indices of local maxima of `values` (plateaus count once).
fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (1..n.saturating_sub(1))
        .filter(|&i| values[i] >= values[i - 1] && values[i] > values[i + 1])
        .collect()
}

pub fn fit_decay(times: &[f64], values: &[f64], options: FitOptions) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::DegenerateFit(format!(
            "{} times for {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < MIN_POINTS {
        return Err(Error::DegenerateFit(format!(
            "need at least {MIN_POINTS} points, got {}",
            times.len()
        )));
    }
    let (t0, t1) = options.window.unwrap_or_else(|| {
        let first = times[0];
        let last = times[times.len() - 1];
        (first + 0.2 * (last - first), last)
    });
    let in_window: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= t0 - 1e-12 && times[i] <= t1 + 1e-12)
        .collect();
    let any_nonpositive = in_window.iter().any(|&i| !(values[i] > 0.0));
    let use_envelope = match options.envelope {
        Envelope::Always => true,
        Envelope::Never => false,
        Envelope::Auto => any_nonpositive,
    };
    let selected: Vec<usize> = if use_envelope {
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        local_maxima(&abs)
            .into_iter()
            .filter(|&i| times[i] >= t0 - 1e-12 && times[i] <= t1 + 1e-12 && abs[i] > 0.0)
            .collect()
    } else {
        if any_nonpositive {
            return Err(Error::DegenerateFit("nonpositive value in the fit window".into()));
        }
        in_window
    };
    let columns = match options.mode {
        FitMode::Exponential | FitMode::Algebraic => 2,
        FitMode::Joint => 3,
    };
    if selected.len() < columns + 1 {
        return Err(Error::DegenerateFit(format!(
            "{} usable points in [{t0}, {t1}]",
            selected.len()
        )));
    }
    let needs_log_t = !matches!(options.mode, FitMode::Exponential);
    if needs_log_t && selected.iter().any(|&i| times[i] <= 0.0) {
        return Err(Error::DegenerateFit("algebraic fit needs t > 0".into()));
    }
    let rows = selected.len();
    let mut a = DMatrix::<f64>::zeros(rows, columns);
    let mut b = DVector::<f64>::zeros(rows);
    for (row, &i) in selected.iter().enumerate() {
        let t = times[i];
        a[(row, 0)] = 1.0;
        match options.mode {
            FitMode::Exponential => a[(row, 1)] = -t,
            FitMode::Algebraic => a[(row, 1)] = -t.ln(),
            FitMode::Joint => {
                a[(row, 1)] = -t;
                a[(row, 2)] = -t.ln();
            }
        }
        b[row] = values[i].abs().ln();
    }
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 1e-10 * s_max) {
        return Err(Error::DegenerateFit(format!(
            "regressors are collinear (singular values {s_min:e} .. {s_max:e})"
        )));
    }
    let x = svd
        .solve(&b, 1e-14 * s_max)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let fitted = &a * &x;
    let rms = ((&fitted - &b).norm_squared() / rows as f64).sqrt();
    let (exp_rate, alg_exponent) = match options.mode {
        FitMode::Exponential => (x[1], 0.0),
        FitMode::Algebraic => (0.0, x[1]),
        FitMode::Joint => (x[1], x[2]),
    };
    Ok(RateFit {
        amplitude: x[0],
        exp_rate,
        alg_exponent,
        window: (t0, t1),
        residual: rms,
        mode: options.mode,
        points: rows,
        used_envelope: use_envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::GridSpec;
    use crate::model::heat_kernel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(30.0, 0.05).unwrap()
    }

    fn profile_like() -> Field {
        Field::from_fn(grid(), |x| 1.0 / (1.0 + (-x).exp()), 0.0, 1.0)
    }

    #[test]
    fn sup_error_cases() {
        let phi = profile_like();
        assert_eq!(sup_error(&phi, &phi, 5.0).unwrap(), 0.0);
        let shifted = phi.with_values(phi.values.iter().map(|v| v + 0.3).collect());
        assert_abs_diff_eq!(sup_error(&shifted, &phi, 5.0).unwrap(), 0.3, epsilon = 1e-12);
        let bumped = phi.with_values(
            (0..phi.len())
                .map(|i| phi.values[i] + heat_kernel(1.0, phi.grid.xi(i)))
                .collect(),
        );
        let e = sup_error(&bumped, &phi, 5.0).unwrap();
        assert_abs_diff_eq!(e, 1.0 / (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        let other = Field::constant(GridSpec::new(10.0, 0.05).unwrap(), 0.0);
        assert!(matches!(sup_error(&other, &phi, 0.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn weighted_error_cancels_weight() {
        let phi = profile_like();
        let lambda = 0.75;
        assert_eq!(weighted_sup_error(&phi, &phi, lambda, 5.0).unwrap(), 0.0);
        let eps = 1e-3;
        let v = phi.with_values(
            (0..phi.len())
                .map(|i| phi.values[i] + eps * (lambda * phi.grid.xi(i)).exp())
                .collect(),
        );
        let e = weighted_sup_error(&v, &phi, lambda, 5.0).unwrap();
        assert!((e - eps).abs() < 1e-9 * eps + 1e-12);
    }

    #[test]
    fn weighted_error_of_gaussian_bump() {
        // max of e^{-l x} e^{-x^2/4} / sqrt(4 pi) is at x = -2 l with value e^{l^2} / sqrt(4 pi)
        let phi = profile_like();
        let lambda = 0.7548876;
        let v = phi.with_values(
            (0..phi.len())
                .map(|i| phi.values[i] + heat_kernel(1.0, phi.grid.xi(i)))
                .collect(),
        );
        let e = weighted_sup_error(&v, &phi, lambda, 5.0).unwrap();
        let closed = (lambda * lambda).exp() / (4.0 * std::f64::consts::PI).sqrt();
        let scan = (0..phi.len())
            .filter(|&i| phi.grid.xi(i).abs() <= 25.0)
            .map(|i| (-lambda * phi.grid.xi(i)).exp() * heat_kernel(1.0, phi.grid.xi(i)))
            .fold(0.0, f64::max);
        assert!((e - scan).abs() < 1e-12);
        assert!((e - closed).abs() < 1e-3 * closed);
    }

    #[test]
    fn zero_weight_is_sup_error() {
        let phi = profile_like();
        let v = phi.with_values(phi.values.iter().enumerate().map(|(i, x)| x + (0.01 * i as f64).sin()).collect());
        assert_eq!(
            weighted_sup_error(&v, &phi, 0.0, 3.0).unwrap(),
            sup_error(&v, &phi, 3.0).unwrap()
        );
    }

    #[test]
    fn weighted_error_survives_large_exponents() {
        let g = GridSpec::new(1000.0, 1.0).unwrap();
        let phi = Field::constant(g, 0.0);
        let v = Field::from_fn(g, |x| 1e-300 * (x.max(-700.0) + 1000.0), 0.0, 0.0);
        let e = weighted_sup_error(&v, &phi, 0.5, 300.0).unwrap();
        assert!(e.is_finite() && e > 0.0);
    }

    fn series(f: impl Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let ts: Vec<f64> = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
        let vs = ts.iter().map(|&t| f(t)).collect();
        (ts, vs)
    }

    #[test]
    fn fit_recovers_exponential() {
        let (t, e) = series(|t| 5.0 * (-2.0 * t).exp(), 0.0, 5.0, 100);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Exponential)).unwrap();
        assert_abs_diff_eq!(fit.exp_rate, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.amplitude, 5f64.ln(), epsilon = 1e-6);
        let (t, e) = series(|t| (-0.3 * t).exp(), 1.0, 40.0, 200);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Joint)).unwrap();
        assert_abs_diff_eq!(fit.exp_rate, 0.3, epsilon = 1e-2);
    }

    #[test]
    fn fit_recovers_algebraic() {
        let (t, e) = series(|t| 3.0 / t.sqrt(), 1.0, 20.0, 100);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Algebraic)).unwrap();
        assert_abs_diff_eq!(fit.alg_exponent, 0.5, epsilon = 1e-6);
        let (t, e) = series(|t| 2.0 * t.powf(-0.25), 1.0, 50.0, 200);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Joint)).unwrap();
        assert_abs_diff_eq!(fit.alg_exponent, 0.25, epsilon = 1e-2);
        assert_abs_diff_eq!(fit.exp_rate, 0.0, epsilon = 1e-3);
    }

    #[test]
    fn default_window_drops_transient() {
        let (t, e) = series(|t| (-t).exp(), 0.0, 10.0, 101);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Exponential)).unwrap();
        assert_abs_diff_eq!(fit.window.0, 2.0, epsilon = 1e-12);
        assert_eq!(fit.points, 81);
    }

    #[test]
    fn envelope_fit_of_oscillation() {
        let (t, e) = series(|t| (5.0 * t).sin().abs() * (-t).exp(), 0.0, 12.0, 2400);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Exponential).envelope(Envelope::Always)).unwrap();
        assert!(fit.used_envelope);
        assert!((fit.exp_rate - 1.0).abs() < 0.05, "{}", fit.exp_rate);
        let (t, e) = series(|t| (5.0 * t).sin() * (-t).exp(), 0.0, 12.0, 2400);
        let fit = fit_decay(&t, &e, FitOptions::new(FitMode::Exponential)).unwrap();
        assert!(fit.used_envelope);
        assert!((fit.exp_rate - 1.0).abs() < 0.05);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let (t, e) = series(|t| (-t).exp(), 0.0, 1.0, 5);
        assert!(matches!(fit_decay(&t, &e, FitOptions::new(FitMode::Joint)), Err(Error::DegenerateFit(_))));
        let (t, e) = series(|_| 1.0, 1.0, 1.0, 20);
        assert!(matches!(fit_decay(&t, &e, FitOptions::new(FitMode::Joint)), Err(Error::DegenerateFit(_))));
    }

    proptest! {
        #[test]
        fn fit_is_scale_equivariant(rate in 0.01f64..2.0, q in 0.0f64..1.0, scale in 0.1f64..100.0) {
            let (t, e) = series(|t| (-rate * t).exp() * t.powf(-q), 1.0, 20.0, 60);
            let scaled: Vec<f64> = e.iter().map(|v| 10.0 * scale * v).collect();
            let base: Vec<f64> = e.iter().map(|v| scale * v).collect();
            let a = fit_decay(&t, &base, FitOptions::new(FitMode::Joint)).unwrap();
            let b = fit_decay(&t, &scaled, FitOptions::new(FitMode::Joint)).unwrap();
            prop_assert!((b.amplitude - a.amplitude - 10f64.ln()).abs() < 1e-10);
            prop_assert!((b.exp_rate - a.exp_rate).abs() < 1e-12);
            prop_assert!((b.alg_exponent - a.alg_exponent).abs() < 1e-12);
        }
    }
}
