//! Method-of-steps reference integrator for `z' = -k1 z + k2 z(t - r)`.
//!
//! Each delay interval is split into `n` RK4 steps aligned with the
//! breakpoints `t = j r`, so no step straddles a kink. Delayed values at
//! half steps come from cubic Hermite interpolation of the stored nodes,
//! whose slopes are known exactly from the equation.

#![allow(dead_code)]

use num_complex::Complex64;

pub struct Reference {
    pub h: f64,
    pub r: f64,
    /// Nodes `t_i = -r + i h`.
    pub z: Vec<Complex64>,
    /// Right-sided slopes; at `t = 0` the equation's slope.
    pub dz: Vec<Complex64>,
    /// Left-sided slope at `t = 0`, from the history.
    pub dz_history_end: Complex64,
    n: usize,
}

impl Reference {
    pub fn integrate(
        k1: Complex64,
        k2: Complex64,
        r: f64,
        history: impl Fn(f64) -> (Complex64, Complex64),
        t_end: f64,
        n: usize,
    ) -> Self {
        let h = r / n as f64;
        let mut z = Vec::new();
        let mut dz = Vec::new();
        for i in 0..=n {
            let (v, d) = history(-r + i as f64 * h);
            z.push(v);
            dz.push(d);
        }
        let dz_history_end = dz[n];
        dz[n] = -k1 * z[n] + k2 * z[0];
        let mut this = Self { h, r, z, dz, dz_history_end, n };
        let steps = (t_end / h).ceil() as usize;
        for k in 0..steps {
            // current node index n + k at time t = k h; delayed node index k
            let zi = this.z[n + k];
            let lag0 = this.z[k];
            let lag1 = this.z[k + 1];
            let lag_mid = hermite_mid(lag0, this.dz[k], lag1, this.left_slope(k + 1), h);
            let f = |y: Complex64, lag: Complex64| -k1 * y + k2 * lag;
            let a = f(zi, lag0);
            let b = f(zi + a * (h / 2.0), lag_mid);
            let c = f(zi + b * (h / 2.0), lag_mid);
            let d = f(zi + c * h, lag1);
            let next = zi + (a + b * 2.0 + c * 2.0 + d) * (h / 6.0);
            this.z.push(next);
            this.dz.push(f(next, lag1));
        }
        this
    }

    fn left_slope(&self, i: usize) -> Complex64 {
        if i == self.n {
            self.dz_history_end
        } else {
            self.dz[i]
        }
    }

    /// Hermite interpolation between stored nodes.
    pub fn at(&self, t: f64) -> Complex64 {
        let pos = (t + self.r) / self.h;
        let i = (pos.floor() as usize).min(self.z.len() - 2);
        let theta = pos - i as f64;
        if theta.abs() < 1e-12 {
            return self.z[i];
        }
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let d0 = self.dz[i];
        let d1 = self.left_slope(i + 1);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        z0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (self.h * (t3 - 2.0 * t2 + theta))
            + z1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (self.h * (t3 - t2))
    }
}

fn hermite_mid(z0: Complex64, d0: Complex64, z1: Complex64, d1: Complex64, h: f64) -> Complex64 {
    (z0 + z1) * 0.5 + (d0 - d1) * (h / 8.0)
}
