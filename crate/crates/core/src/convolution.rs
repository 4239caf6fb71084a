//! Uniform grids, padded fields and discrete Gaussian convolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::model::heat_kernel;

/// Grids at least this large spread stencil application over threads.
const PARALLEL_MIN_POINTS: usize = 2048;

/// Uniform grid on `[-half_width, half_width]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridShape", into = "GridShape")]
pub struct GridSpec {
    pub half_width: f64,
    pub n: usize,
    pub dxi: f64,
}

/// Serialized form of a grid; the point count is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridShape {
    half_width: f64,
    dxi: f64,
}

impl TryFrom<GridShape> for GridSpec {
    type Error = Error;

    fn try_from(shape: GridShape) -> Result<Self> {
        GridSpec::new(shape.half_width, shape.dxi)
    }
}

impl From<GridSpec> for GridShape {
    fn from(grid: GridSpec) -> Self {
        GridShape {
            half_width: grid.half_width,
            dxi: grid.dxi,
        }
    }
}

impl GridSpec {
    /// Grid with spacing as close to `dxi` as an integer point count allows.
    pub fn new(half_width: f64, dxi: f64) -> Result<Self> {
        require(half_width.is_finite() && half_width > 0.0, "half_width", "must be positive")?;
        require(dxi.is_finite() && dxi > 0.0, "dxi", "must be positive")?;
        let intervals = (2.0 * half_width / dxi).round().max(2.0) as usize;
        Self::with_points(half_width, intervals + 1)
    }

    pub fn with_points(half_width: f64, n: usize) -> Result<Self> {
        require(half_width.is_finite() && half_width > 0.0, "half_width", "must be positive")?;
        require(n >= 3, "n", "need at least 3 grid points")?;
        Ok(Self {
            half_width,
            n,
            dxi: 2.0 * half_width / (n - 1) as f64,
        })
    }

    #[inline]
    pub fn xi(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dxi
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.xi(i)).collect()
    }

    /// Index of the grid point nearest to `xi`, clamped to the grid.
    pub fn nearest(&self, xi: f64) -> usize {
        let k = ((xi + self.half_width) / self.dxi).round();
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Range of indices at distance at least `collar` from both ends.
    pub fn interior(&self, collar: f64) -> std::ops::Range<usize> {
        let skip = (collar / self.dxi).ceil().max(0.0) as usize;
        if 2 * skip >= self.n {
            return 0..0;
        }
        skip..self.n - skip
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && (self.half_width - other.half_width).abs() <= 1e-12 * self.half_width
    }
}

/// Samples of a function on a grid together with how it continues past the
/// ends: the constant `right_value` beyond `+M`, and beyond `-M` either the
/// constant `left_value` or, when `left_tail` is set to `lambda`, the
/// continuation that keeps `e^{-lambda xi} phi` linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub left_value: f64,
    pub right_value: f64,
    pub left_tail: Option<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>, left_value: f64, right_value: f64) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        if !values.iter().all(|v| v.is_finite()) || !left_value.is_finite() || !right_value.is_finite() {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self {
            grid,
            values,
            left_value,
            right_value,
            left_tail: None,
        })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n],
            left_value: value,
            right_value: value,
            left_tail: None,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64, left_value: f64, right_value: f64) -> Self {
        Self {
            grid,
            values: (0..grid.n).map(|i| f(grid.xi(i))).collect(),
            left_value,
            right_value,
            left_tail: None,
        }
    }

    pub fn with_left_tail(mut self, rate: Option<f64>) -> Self {
        self.left_tail = rate;
        self
    }

    /// Same grid and far field, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.grid.n);
        Self {
            grid: self.grid,
            values,
            left_value: self.left_value,
            right_value: self.right_value,
            left_tail: self.left_tail,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value at a possibly out-of-range index, using the far-field rule.
    pub fn padded(&self, index: isize) -> f64 {
        let n = self.values.len() as isize;
        if index >= n {
            self.right_value
        } else if index >= 0 {
            self.values[index as usize]
        } else {
            let k = (-index) as f64;
            match self.left_tail {
                None => self.left_value,
                Some(rate) => {
                    let h = self.grid.dxi;
                    let v0 = self.values[0];
                    let v1 = self.values[1];
                    let ext = (-rate * k * h).exp() * ((1.0 + k) * v0 - k * v1 * (-rate * h).exp());
                    ext.max(0.0)
                }
            }
        }
    }

    /// Values on indices `-pad..n+pad`.
    pub fn extended(&self, pad: usize) -> Vec<f64> {
        let n = self.values.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((0..pad).map(|j| self.padded(j as isize - pad as isize)));
        ext.extend_from_slice(&self.values);
        ext.extend(std::iter::repeat_n(self.right_value, pad));
        ext
    }

    /// Linear interpolation at an arbitrary abscissa, far-field rule outside.
    pub fn sample(&self, xi: f64) -> f64 {
        let pos = (xi + self.grid.half_width) / self.grid.dxi;
        let lo = pos.floor();
        let theta = pos - lo;
        let lo = lo as isize;
        (1.0 - theta) * self.padded(lo) + theta * self.padded(lo + 1)
    }
}

/// Quadrature weights of a kernel on the grid spacing, indexed `-R..=R`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStencil {
    pub weights: Vec<f64>,
    pub radius_points: usize,
    pub variance: f64,
}

impl KernelStencil {
    /// Weight at offset `k` (in grid cells).
    pub fn weight(&self, k: isize) -> f64 {
        self.weights[(k + self.radius_points as isize) as usize]
    }

    /// Stencil of `f(y) e^{-lambda y}`, without renormalization.
    pub fn tilted(&self, lambda: f64, dxi: f64) -> KernelStencil {
        let r = self.radius_points as isize;
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * (-lambda * (j as isize - r) as f64 * dxi).exp())
            .collect();
        KernelStencil {
            weights,
            radius_points: self.radius_points,
            variance: self.variance,
        }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Default truncation radius in standard deviations.
pub const DEFAULT_RADIUS_SIGMAS: f64 = 8.0;

/// Samples the heat kernel of the given variance parameter on `+-radius_sigmas`
/// standard deviations (`sigma = sqrt(2 variance)`) with trapezoid weights,
/// then rescales to unit mass.
pub fn discretize_kernel(variance: f64, grid: &GridSpec, radius_sigmas: f64) -> Result<KernelStencil> {
    require(variance.is_finite() && variance > 0.0, "variance", "must be positive")?;
    require(radius_sigmas >= 6.0, "radius_sigmas", "must be at least 6")?;
    let sigma = (2.0 * variance).sqrt();
    let radius = (radius_sigmas * sigma / grid.dxi).ceil() as usize;
    if 2 * radius + 1 > grid.n {
        return Err(Error::DomainTooSmall {
            needed: 2 * radius + 1,
            available: grid.n,
        });
    }
    let r = radius as isize;
    let mut weights: Vec<f64> = (-r..=r)
        .map(|k| {
            let end = if k.abs() == r { 0.5 } else { 1.0 };
            end * heat_kernel(variance, k as f64 * grid.dxi) * grid.dxi
        })
        .collect();
    // symmetrize against rounding, then normalize
    for k in 0..radius {
        let avg = 0.5 * (weights[k] + weights[2 * radius - k]);
        weights[k] = avg;
        weights[2 * radius - k] = avg;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(KernelStencil {
        weights,
        radius_points: radius,
        variance,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[8 * c..8 * c + 8], &b[8 * c..8 * c + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for j in 8 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    acc.iter().sum::<f64>() + tail
}

/// Applies a stencil to an already padded array (`pad = stencil radius`).
pub fn convolve_extended(ext: &[f64], stencil: &KernelStencil, out: &mut [f64]) {
    let rev: Vec<f64> = stencil.weights.iter().rev().copied().collect();
    let width = rev.len();
    debug_assert_eq!(ext.len(), out.len() + width - 1);
    let apply = |(i, o): (usize, &mut f64)| *o = dot(&rev, &ext[i..i + width]);
    if out.len() >= PARALLEL_MIN_POINTS {
        out.par_iter_mut().enumerate().for_each(apply);
    } else {
        out.iter_mut().enumerate().for_each(apply);
    }
}

/// `(f * phi)(xi_i) = sum_k w_k phi(xi_i - k dxi)`, with `phi` continued past
/// the ends by its far-field rule. The result keeps the input's far field
/// scaled by the stencil mass.
pub fn convolve(field: &Field, stencil: &KernelStencil) -> Field {
    let ext = field.extended(stencil.radius_points);
    let mut out = vec![0.0; field.len()];
    convolve_extended(&ext, stencil, &mut out);
    let mass = stencil.mass();
    Field {
        grid: field.grid,
        values: out,
        left_value: field.left_value * mass,
        right_value: field.right_value * mass,
        left_tail: field.left_tail,
    }
}

/// Splits a shift by `offset` into a whole-cell part and a fraction.
/// The sample for point `i` is `(1 - theta) f[i - whole - 1] + theta f[i - whole]`
/// when the fraction is nonzero.
fn split_offset(offset: f64, dxi: f64) -> (isize, f64) {
    let cells = offset / dxi;
    let whole = cells.floor();
    let frac = cells - whole;
    // snap near-integers so exact multiples shift without blending
    if frac < 1e-12 {
        (whole as isize, 0.0)
    } else if frac > 1.0 - 1e-12 {
        (whole as isize + 1, 0.0)
    } else {
        (whole as isize, frac)
    }
}

/// `g(xi) = f(xi - offset)` by linear interpolation.
pub fn shift_interpolate(field: &Field, offset: f64) -> Field {
    field.with_values(shifted_extended(field, offset, 0))
}

/// Shift of a weighted field `u = e^{-lambda xi} w`: interpolates `w` linearly
/// and reapplies the weight, so the result equals
/// `e^{-lambda xi} (shift of w)` node by node.
pub fn shift_interpolate_weighted(field: &Field, offset: f64, lambda: f64) -> Field {
    field.with_values(shifted_extended_weighted(field, offset, lambda, 0))
}

/// Shifted field `f(xi - offset)` on indices `-pad..n+pad`, matching
/// [`shift_interpolate`] on the grid itself.
pub fn shifted_extended(field: &Field, offset: f64, pad: usize) -> Vec<f64> {
    let (whole, frac) = split_offset(offset, field.grid.dxi);
    let n = field.len() as isize;
    let pad = pad as isize;
    (-pad..n + pad)
        .map(|i| {
            let base = i - whole;
            if frac == 0.0 {
                field.padded(base)
            } else {
                frac * field.padded(base - 1) + (1.0 - frac) * field.padded(base)
            }
        })
        .collect()
}

/// Weighted counterpart of [`shifted_extended`], matching
/// [`shift_interpolate_weighted`].
pub fn shifted_extended_weighted(field: &Field, offset: f64, lambda: f64, pad: usize) -> Vec<f64> {
    let h = field.grid.dxi;
    let (whole, frac) = split_offset(offset, h);
    let w_base = (-lambda * whole as f64 * h).exp();
    let w_prev = (-lambda * (whole + 1) as f64 * h).exp();
    let n = field.len() as isize;
    let pad = pad as isize;
    (-pad..n + pad)
        .map(|i| {
            let base = i - whole;
            if frac == 0.0 {
                w_base * field.padded(base)
            } else {
                frac * w_prev * field.padded(base - 1) + (1.0 - frac) * w_base * field.padded(base)
            }
        })
        .collect()
}

/// Centered second difference, with one-sided second-order stencils at the
/// two end points.
pub fn second_difference(values: &[f64], dxi: f64) -> Vec<f64> {
    let n = values.len();
    let h2 = dxi * dxi;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h2;
    }
    if n >= 4 {
        out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
        let m = n - 1;
        out[m] = (2.0 * values[m] - 5.0 * values[m - 1] + 4.0 * values[m - 2] - values[m - 3]) / h2;
    } else {
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}
