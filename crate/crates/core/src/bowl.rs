//! The rotationally symmetric translating bowl soliton.
//!
//! `B` solves `B''/(1+B'^2) + (n-1) B'/z = 1` with `B(0) = B'(0) = 0`.
//! The tabulated solution feeds the peanut tip patch and the tip-region
//! barriers, both directly and through its inverse profile `W(ξ)`
//! (`ξ = B(W)`).


use crate::error::{Error, Result};
use crate::grid::interp_uniform;

#[derive(Debug, Clone)]
pub struct BowlProfile {
    /// Values B(i·h) for i = 0..len.
    pub values: Vec<f64>,
    /// Derivatives B'(i·h).
    pub derivs: Vec<f64>,
    pub dimension: usize,
    pub step: f64,
}

fn ode_rhs(n: f64, z: f64, p: f64) -> f64 {
    (1.0 + p * p) * (1.0 - (n - 1.0) * p / z)
}

/// Series coefficient c4 in B = z²/(2n) + c4·z⁴ near the origin, fitted by
/// matching the ODE at `z0` (secant; the residual is affine in c4 to
/// leading order).
fn fit_series_c4(n: f64, z0: f64) -> f64 {
    let residual = |c4: f64| {
        let p = z0 / n + 4.0 * c4 * z0.powi(3);
        let pp = 1.0 / n + 12.0 * c4 * z0 * z0;
        pp - ode_rhs(n, z0, p)
    };
    let mut a = 0.0;
    let mut b = 1.0 / (4.0 * n * n * n);
    let (mut fa, mut fb) = (residual(a), residual(b));
    for _ in 0..60 {
        let c = b - fb * (b - a) / (fb - fa);
        let fc = residual(c);
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        if fc.abs() < 1e-16 {
            break;
        }
    }
    b
}

/// Integrate the bowl ODE with a 4th-order Runge–Kutta march, seeded by
/// the series `B = z²/(2n) + c4 z⁴` on `[0, 10h]` to step over the
/// removable singularity at the tip.
pub fn solve_bowl(dimension: usize, z_max: f64, h: f64) -> Result<BowlProfile> {
    if dimension < 2 {
        return Err(Error::domain("bowl soliton needs dimension n >= 2"));
    }
    if !(z_max >= 10.0) {
        return Err(Error::domain("z_max must be at least 10"));
    }
    if !(h > 0.0 && h <= 1e-3 * z_max) {
        return Err(Error::domain("step must satisfy 0 < h <= 1e-3 * z_max"));
    }
    let n = dimension as f64;
    let len = (z_max / h).round() as usize + 1;
    let mut values = vec![0.0; len];
    let mut derivs = vec![0.0; len];

    let seed_end = 10usize;
    let c4 = fit_series_c4(n, seed_end as f64 * h);
    for i in 0..=seed_end {
        let z = i as f64 * h;
        values[i] = z * z / (2.0 * n) + c4 * z.powi(4);
        derivs[i] = z / n + 4.0 * c4 * z.powi(3);
    }

    let mut b = values[seed_end];
    let mut p = derivs[seed_end];
    for i in seed_end..len - 1 {
        let z = i as f64 * h;
        let (k1b, k1p) = (p, ode_rhs(n, z, p));
        let (k2b, k2p) = (p + 0.5 * h * k1p, ode_rhs(n, z + 0.5 * h, p + 0.5 * h * k1p));
        let (k3b, k3p) = (p + 0.5 * h * k2p, ode_rhs(n, z + 0.5 * h, p + 0.5 * h * k2p));
        let (k4b, k4p) = (p + h * k3p, ode_rhs(n, z + h, p + h * k3p));
        b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if !b.is_finite() || !p.is_finite() {
            return Err(Error::NumericalBlowup(format!(
                "bowl integration lost stability near z = {z}"
            )));
        }
        values[i + 1] = b;
        derivs[i + 1] = p;
    }
    Ok(BowlProfile {
        values,
        derivs,
        dimension,
        step: h,
    })
}

/// Inversion result; `extended` marks values obtained from the asymptotic
/// law beyond the tabulated range.
#[derive(Debug, Clone, Copy)]
pub struct InverseValue {
    pub w: f64,
    pub extended: bool,
}

impl BowlProfile {
    pub fn z_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn b(&self, z: f64) -> f64 {
        interp_uniform(0.0, self.step, &self.values, z)
    }

    pub fn b_prime(&self, z: f64) -> f64 {
        interp_uniform(0.0, self.step, &self.derivs, z)
    }

    /// W(ξ): the inverse profile, `ξ = B(W)`. Monotone bisection on the
    /// table with a Newton polish; asymptotic extension past the table.
    pub fn inverse(&self, xi: f64) -> Result<InverseValue> {
        if xi < 0.0 {
            return Err(Error::domain("inverse profile needs ξ >= 0"));
        }
        if xi == 0.0 {
            return Ok(InverseValue {
                w: 0.0,
                extended: false,
            });
        }
        let b_end = *self.values.last().unwrap();
        if xi > b_end {
            // w² ≈ 2(n-1)(ξ + c·ln w) from the fitted far-field law
            let (c_log, c_const) = self.fit_log_coefficient();
            let nm1 = (self.dimension - 1) as f64;
            let mut w = (2.0 * nm1 * xi).sqrt();
            for _ in 0..4 {
                w = (2.0 * nm1 * (xi + c_log * w.ln() - c_const)).sqrt();
            }
            return Ok(InverseValue { w, extended: true });
        }
        // bisection on table indices
        let (mut lo, mut hi) = (0usize, self.values.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.values[mid] < xi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut w = self.step * (lo as f64 + 0.5);
        for _ in 0..40 {
            let f = self.b(w) - xi;
            let d = self.b_prime(w).max(1e-300);
            let dw = f / d;
            w -= dw;
            w = w.clamp(0.0, self.z_max());
            if dw.abs() < 1e-14 * (1.0 + w) {
                break;
            }
        }
        Ok(InverseValue { w, extended: false })
    }

    /// min over the table of z·B'(z) - B(z). The solution satisfies
    /// z·B'(z) > B(z) for all z > 0 (the convexity of B forces this
    /// orientation), so the margin is positive for a valid profile.
    pub fn star_shape_margin(&self, z_from: f64) -> f64 {
        let mut worst = f64::INFINITY;
        let i0 = ((z_from / self.step).ceil() as usize).max(1);
        for i in i0..self.values.len() {
            let z = self.step * i as f64;
            let m = z * self.derivs[i] - self.values[i];
            if m < worst {
                worst = m;
            }
        }
        worst
    }

    /// B'(z)(n-1)/z, which tends to 1 as z grows.
    pub fn slope_ratio(&self, z: f64) -> f64 {
        self.b_prime(z) * (self.dimension - 1) as f64 / z
    }

    /// Least-squares fit of B(z) - z²/(2(n-1)) = -c·ln z + d over the outer
    /// quarter of the table; returns (c, d).
    pub fn fit_log_coefficient(&self) -> (f64, f64) {
        let nm1 = (self.dimension - 1) as f64;
        let i0 = 3 * (self.values.len() - 1) / 4;
        let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let stride = ((self.values.len() - i0) / 512).max(1);
        let mut i = i0;
        while i < self.values.len() {
            let z = self.step * i as f64;
            let x = z.ln();
            let y = self.values[i] - z * z / (2.0 * nm1);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            m += 1.0;
            i += stride;
        }
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let intercept = (sy - slope * sx) / m;
        (-slope, intercept)
    }

    /// Finite-difference residual of the ODE computed from the tabulated
    /// B' alone; an independent consistency check of the table.
    pub fn ode_residual_max(&self) -> f64 {
        let n = self.dimension as f64;
        let mut worst: f64 = 0.0;
        for i in 20..self.derivs.len() - 2 {
            let z = self.step * i as f64;
            let bpp = (self.derivs[i - 2] - 8.0 * self.derivs[i - 1] + 8.0 * self.derivs[i + 1]
                - self.derivs[i + 2])
                / (12.0 * self.step);
            let p = self.derivs[i];
            let r = bpp / (1.0 + p * p) + (n - 1.0) * p / z - 1.0;
            worst = worst.max(r.abs());
        }
        worst
    }

    /// CSV export: `z,B,Bprime` with a fixed sampling stride.
    pub fn write_csv(&self, mut out: impl std::io::Write, max_rows: usize) -> Result<()> {
        writeln!(out, "z,B,Bprime")?;
        let stride = ((self.values.len() - 1) / max_rows.max(1)).max(1);
        let mut i = 0;
        while i < self.values.len() {
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e}",
                self.step * i as f64,
                self.values[i],
                self.derivs[i]
            )?;
            i += stride;
        }
        Ok(())
    }
}
