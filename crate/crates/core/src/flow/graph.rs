//! Explicit RK2 (Heun) steppers for the rescaled graph equation and its
//! difference forms.
//!
//! Three fields are evolved, all in exactly cancelled variables:
//!
//! * `v = u - √(2(n-1))`, the deviation of a single profile from the
//!   cylinder: `v_τ = v_yy/(1+v_y²) - (y/2) v_y + v (2c+v)/(2(c+v))`;
//! * `w = u - ū`, the deviation of a perturbed profile from a reference
//!   trajectory `v̄`, evolved in lockstep with it;
//! * `q = u² - 2(n-1)`, used for the post-exit continuation:
//!   `q_τ = q_yy - (y/2) q_y + q - (q_yy+2) q_y² / (8(n-1) + 4q + q_y²)`.
//!
//! Boundary data is Dirichlet and supplied by the caller as a function of
//! rescaled time; the `y/2` drift makes both ends outflow, so distant
//! boundary errors do not propagate inward.

use crate::error::{Error, Result};
use crate::grid::{deriv1, deriv2, Grid1};
use crate::flow::profile::{cylinder_radius, RadialProfile};

const MAX_HALVINGS: usize = 20;

/// Dirichlet data at the two ends as a function of rescaled time.
pub type Boundary<'a> = &'a dyn Fn(f64) -> (f64, f64);

pub struct GraphStepper {
    pub dimension: usize,
    pub grid: Grid1,
    pub cfl: f64,
    d1a: Vec<f64>,
    d2a: Vec<f64>,
    d1b: Vec<f64>,
    d2b: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k1b: Vec<f64>,
    k2b: Vec<f64>,
    pred: Vec<f64>,
    predb: Vec<f64>,
}

impl GraphStepper {
    pub fn new(dimension: usize, grid: Grid1) -> Self {
        GraphStepper {
            dimension,
            grid,
            cfl: 0.2,
            d1a: Vec::new(),
            d2a: Vec::new(),
            d1b: Vec::new(),
            d2b: Vec::new(),
            k1: Vec::new(),
            k2: Vec::new(),
            k1b: Vec::new(),
            k2b: Vec::new(),
            pred: Vec::new(),
            predb: Vec::new(),
        }
    }

    fn max_slope_sq(&mut self, values: &[f64]) -> f64 {
        deriv1(values, self.grid.h, &mut self.d1a);
        self.d1a.iter().fold(0.0f64, |m, &d| m.max(d * d))
    }

    /// dτ = cfl · h² / (1 + max slope²).
    pub fn suggest_dt(&mut self, values: &[f64]) -> f64 {
        let s = self.max_slope_sq(values);
        self.cfl * self.grid.h * self.grid.h / (1.0 + s)
    }

    fn rhs_v(&mut self, v: &[f64], out: &mut Vec<f64>) {
        let n = v.len();
        let c = cylinder_radius(self.dimension);
        deriv1(v, self.grid.h, &mut self.d1a);
        deriv2(v, self.grid.h, &mut self.d2a);
        out.clear();
        out.resize(n, 0.0);
        for i in 1..n - 1 {
            let y = self.grid.y(i);
            let vy = self.d1a[i];
            let vyy = self.d2a[i];
            let vi = v[i];
            out[i] = vyy / (1.0 + vy * vy) - 0.5 * y * vy
                + vi * (2.0 * c + vi) / (2.0 * (c + vi));
        }
    }

    fn rhs_w(&mut self, vbar: &[f64], w: &[f64], out: &mut Vec<f64>) {
        let n = w.len();
        let c = cylinder_radius(self.dimension);
        let nm1 = self.dimension as f64 - 1.0;
        deriv1(vbar, self.grid.h, &mut self.d1a);
        deriv2(vbar, self.grid.h, &mut self.d2a);
        deriv1(w, self.grid.h, &mut self.d1b);
        deriv2(w, self.grid.h, &mut self.d2b);
        out.clear();
        out.resize(n, 0.0);
        for i in 1..n - 1 {
            let y = self.grid.y(i);
            let uby = self.d1a[i];
            let ubyy = self.d2a[i];
            let wy = self.d1b[i];
            let wyy = self.d2b[i];
            let ub = c + vbar[i];
            let u = ub + w[i];
            let uy = uby + wy;
            let a = 1.0 + uy * uy;
            let ab = 1.0 + uby * uby;
            out[i] = wyy / a - 0.5 * y * wy + (0.5 + nm1 / (u * ub)) * w[i]
                - ubyy * (uy + uby) / (a * ab) * wy;
        }
    }

    fn rhs_q(&mut self, q: &[f64], out: &mut Vec<f64>) {
        let n = q.len();
        let m8 = 8.0 * (self.dimension as f64 - 1.0);
        deriv1(q, self.grid.h, &mut self.d1a);
        deriv2(q, self.grid.h, &mut self.d2a);
        out.clear();
        out.resize(n, 0.0);
        for i in 1..n - 1 {
            let y = self.grid.y(i);
            let qy = self.d1a[i];
            let qyy = self.d2a[i];
            let denom = (m8 + 4.0 * q[i] + qy * qy).max(1e-12);
            out[i] = qyy - 0.5 * y * qy + q[i] - (qyy + 2.0) * qy * qy / denom;
        }
    }

    fn finite(values: &[f64]) -> bool {
        values.iter().all(|x| x.is_finite())
    }

    /// One Heun step of the single-field deviation equation; `bc` supplies
    /// the Dirichlet deviation values at the two ends. Halves the step on
    /// instability, up to 20 times.
    pub fn step_v(&mut self, v: &mut Vec<f64>, tau: f64, dtau: f64, bc: Boundary) -> Result<f64> {
        let n = v.len();
        let c = cylinder_radius(self.dimension);
        let mut dt = dtau;
        for _ in 0..=MAX_HALVINGS {
            let mut k1 = std::mem::take(&mut self.k1);
            self.rhs_v(v, &mut k1);
            let mut pred = std::mem::take(&mut self.pred);
            pred.clear();
            pred.extend(v.iter().zip(k1.iter()).map(|(&x, &k)| x + dt * k));
            let (bl, br) = bc(tau + dt);
            pred[0] = bl;
            pred[n - 1] = br;
            let mut k2 = std::mem::take(&mut self.k2);
            let ok = Self::finite(&pred) && pred.iter().all(|&x| c + x > 0.0);
            if ok {
                self.rhs_v(&pred, &mut k2);
                let mut candidate: Vec<f64> = v
                    .iter()
                    .zip(k1.iter().zip(k2.iter()))
                    .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                    .collect();
                candidate[0] = bl;
                candidate[n - 1] = br;
                let ok2 = Self::finite(&candidate) && candidate.iter().all(|&x| c + x > 0.0);
                self.k1 = k1;
                self.k2 = k2;
                self.pred = pred;
                if ok2 {
                    *v = candidate;
                    return Ok(dt);
                }
            } else {
                self.k1 = k1;
                self.k2 = k2;
                self.pred = pred;
            }
            dt *= 0.5;
            if dt < 1e-300 {
                break;
            }
        }
        Err(Error::NumericalBlowup(format!(
            "graph step failed after {MAX_HALVINGS} halvings at tau = {tau}"
        )))
    }

    /// One Heun step of the coupled (reference, difference) system.
    pub fn step_pair(
        &mut self,
        vbar: &mut Vec<f64>,
        w: &mut Vec<f64>,
        tau: f64,
        dtau: f64,
        bc_vbar: Boundary,
        bc_w: Boundary,
    ) -> Result<f64> {
        let n = vbar.len();
        let c = cylinder_radius(self.dimension);
        let mut dt = dtau;
        for _ in 0..=MAX_HALVINGS {
            let mut k1v = std::mem::take(&mut self.k1);
            let mut k1w = std::mem::take(&mut self.k1b);
            self.rhs_v(vbar, &mut k1v);
            self.rhs_w(vbar, w, &mut k1w);

            let mut pv = std::mem::take(&mut self.pred);
            let mut pw = std::mem::take(&mut self.predb);
            pv.clear();
            pv.extend(vbar.iter().zip(k1v.iter()).map(|(&x, &k)| x + dt * k));
            pw.clear();
            pw.extend(w.iter().zip(k1w.iter()).map(|(&x, &k)| x + dt * k));
            let (vl, vr) = bc_vbar(tau + dt);
            let (wl, wr) = bc_w(tau + dt);
            pv[0] = vl;
            pv[n - 1] = vr;
            pw[0] = wl;
            pw[n - 1] = wr;

            let ok = Self::finite(&pv)
                && Self::finite(&pw)
                && pv.iter().all(|&x| c + x > 0.0)
                && pv.iter().zip(pw.iter()).all(|(&a, &b)| c + a + b > 0.0);
            if ok {
                let mut k2v = std::mem::take(&mut self.k2);
                let mut k2w = std::mem::take(&mut self.k2b);
                self.rhs_v(&pv, &mut k2v);
                self.rhs_w(&pv, &pw, &mut k2w);
                let mut nv: Vec<f64> = vbar
                    .iter()
                    .zip(k1v.iter().zip(k2v.iter()))
                    .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                    .collect();
                let mut nw: Vec<f64> = w
                    .iter()
                    .zip(k1w.iter().zip(k2w.iter()))
                    .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                    .collect();
                nv[0] = vl;
                nv[n - 1] = vr;
                nw[0] = wl;
                nw[n - 1] = wr;
                let ok2 = Self::finite(&nv)
                    && Self::finite(&nw)
                    && nv.iter().all(|&x| c + x > 0.0)
                    && nv.iter().zip(nw.iter()).all(|(&a, &b)| c + a + b > 0.0);
                self.k1 = k1v;
                self.k1b = k1w;
                self.k2 = k2v;
                self.k2b = k2w;
                self.pred = pv;
                self.predb = pw;
                if ok2 {
                    *vbar = nv;
                    *w = nw;
                    return Ok(dt);
                }
            } else {
                self.k1 = k1v;
                self.k1b = k1w;
                self.pred = pv;
                self.predb = pw;
            }
            dt *= 0.5;
            if dt < 1e-300 {
                break;
            }
        }
        Err(Error::NumericalBlowup(format!(
            "pair step failed after {MAX_HALVINGS} halvings at tau = {tau}"
        )))
    }

    /// One Heun step of the q-equation (no positivity constraint on q
    /// itself; 2(n-1)+q may approach zero as the neck closes).
    pub fn step_q(&mut self, q: &mut Vec<f64>, tau: f64, dtau: f64, bc: Boundary) -> Result<f64> {
        let n = q.len();
        let mut dt = dtau;
        for _ in 0..=MAX_HALVINGS {
            let mut k1 = std::mem::take(&mut self.k1);
            self.rhs_q(q, &mut k1);
            let mut pred = std::mem::take(&mut self.pred);
            pred.clear();
            pred.extend(q.iter().zip(k1.iter()).map(|(&x, &k)| x + dt * k));
            let (bl, br) = bc(tau + dt);
            pred[0] = bl;
            pred[n - 1] = br;
            if Self::finite(&pred) {
                let mut k2 = std::mem::take(&mut self.k2);
                self.rhs_q(&pred, &mut k2);
                let mut candidate: Vec<f64> = q
                    .iter()
                    .zip(k1.iter().zip(k2.iter()))
                    .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                    .collect();
                candidate[0] = bl;
                candidate[n - 1] = br;
                self.k1 = k1;
                self.k2 = k2;
                self.pred = pred;
                if Self::finite(&candidate) {
                    *q = candidate;
                    return Ok(dt);
                }
            } else {
                self.k1 = k1;
                self.pred = pred;
            }
            dt *= 0.5;
            if dt < 1e-300 {
                break;
            }
        }
        Err(Error::NumericalBlowup(format!(
            "q step failed after {MAX_HALVINGS} halvings at tau = {tau}"
        )))
    }

    /// q-step with linear-extrapolation (outflow) ends instead of
    /// Dirichlet data: the y/2 drift carries interior information outward,
    /// so the ends follow the interior; used when the far field grows in a
    /// way no closed-form law tracks (the unstable uniform mode).
    pub fn step_q_extrap(&mut self, q: &mut Vec<f64>, tau: f64, dtau: f64) -> Result<f64> {
        let n = q.len();
        let extrap = |v: &mut [f64]| {
            v[0] = 2.0 * v[1] - v[2];
            v[n - 1] = 2.0 * v[n - 2] - v[n - 3];
        };
        let mut dt = dtau;
        for _ in 0..=MAX_HALVINGS {
            let mut k1 = std::mem::take(&mut self.k1);
            self.rhs_q(q, &mut k1);
            let mut pred = std::mem::take(&mut self.pred);
            pred.clear();
            pred.extend(q.iter().zip(k1.iter()).map(|(&x, &k)| x + dt * k));
            extrap(&mut pred);
            if Self::finite(&pred) {
                let mut k2 = std::mem::take(&mut self.k2);
                self.rhs_q(&pred, &mut k2);
                let mut candidate: Vec<f64> = q
                    .iter()
                    .zip(k1.iter().zip(k2.iter()))
                    .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                    .collect();
                extrap(&mut candidate);
                self.k1 = k1;
                self.k2 = k2;
                self.pred = pred;
                if Self::finite(&candidate) {
                    *q = candidate;
                    return Ok(dt);
                }
            } else {
                self.k1 = k1;
                self.pred = pred;
            }
            dt *= 0.5;
            if dt < 1e-300 {
                break;
            }
        }
        Err(Error::NumericalBlowup(format!(
            "q step failed after {MAX_HALVINGS} halvings at tau = {tau}"
        )))
    }
}

/// One explicit RK2 step of the rescaled graph equation for a profile,
/// with caller-supplied Dirichlet data (deviation values at the ends).
pub fn step_graph(
    profile: &mut RadialProfile,
    dtau: f64,
    bc: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    let mut stepper = GraphStepper::new(profile.dimension, profile.grid.clone());
    let taken = stepper.step_v(&mut profile.v, profile.tau, dtau, &bc)?;
    profile.tau += taken;
    Ok(taken)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1;

    #[test]
    fn cylinder_is_a_fixed_point_to_machine_precision() {
        // the difference form is identically zero on the cylinder
        let grid = Grid1::symmetric(10.0, 0.05).unwrap();
        let mut p = RadialProfile::cylinder(grid, 0.0, 3);
        for _ in 0..200 {
            let dt = 1e-4;
            step_graph(&mut p, dt, |_| (0.0, 0.0)).unwrap();
        }
        let sup = p.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(sup < 1e-14, "cylinder drifted by {sup}");
    }

    #[test]
    fn rescaled_sphere_is_stationary() {
        // u = √(2n - y²) zeroes the right-hand side exactly
        let n_dim = 3usize;
        let r2 = 2.0 * n_dim as f64;
        let half = r2.sqrt() - 0.1;
        let grid = Grid1::symmetric(half, 0.005).unwrap();
        let exact = move |y: f64| (r2 - y * y).sqrt();
        let mut p = RadialProfile::from_radius(grid.clone(), 0.0, n_dim, exact).unwrap();
        let c = p.cylinder_radius();
        let bc = move |_tau: f64| {
            let v = (r2 - half * half).sqrt() - c;
            (v, v)
        };
        let mut stepper = GraphStepper::new(n_dim, grid.clone());
        let mut tau = 0.0;
        while tau < 0.5 {
            let dt = stepper.suggest_dt(&p.v).min(0.5 - tau);
            let taken = stepper.step_v(&mut p.v, tau, dt, &bc).unwrap();
            tau += taken;
        }
        let mut sup: f64 = 0.0;
        for i in 0..grid.n_nodes {
            let y = grid.y(i);
            if y.abs() <= r2.sqrt() - 0.2 {
                sup = sup.max((p.u(i) - exact(y)).abs());
            }
        }
        assert!(sup < 1e-5, "sphere profile drifted by {sup}");
    }

    #[test]
    fn neutral_mode_projection_is_conserved_short_time() {
        // u = cylinder + ε H₂: the H₂ component moves only at O(ε²)
        use crate::hermite::GaussianSpace;
        let space = GaussianSpace::standard();
        let grid = Grid1::symmetric(30.0, 0.05).unwrap();
        let eps = 0.01;
        let mut p = RadialProfile::from_deviation(
            grid.clone(),
            grid.sample(|y| eps * (y * y - 2.0)),
            0.0,
            3,
        )
        .unwrap();
        let coeff = |p: &RadialProfile| {
            let (d, _) = space.decompose_grid(&p.grid, &p.v);
            d.coeff(2)
        };
        let c0 = coeff(&p);
        let bedge = grid.half_width;
        let bc = move |_tau: f64| {
            let v = eps * (bedge * bedge - 2.0);
            (v, v)
        };
        let mut stepper = GraphStepper::new(3, grid.clone());
        let mut tau = 0.0;
        while tau < 0.25 {
            let dt = stepper.suggest_dt(&p.v).min(0.25 - tau);
            tau += stepper.step_v(&mut p.v, tau, dt, &bc).unwrap();
        }
        let c1 = coeff(&p);
        // drift bounded by O(ε²)·O(1) over τ-span 0.25
        assert!(
            (c1 - c0).abs() < 30.0 * eps * eps,
            "H₂ coefficient moved from {c0} to {c1}"
        );
    }

    #[test]
    fn pair_step_tracks_difference_of_two_profiles() {
        // evolving (v̄, w) must equal evolving v̄ and v̄+w separately
        let grid = Grid1::symmetric(8.0, 0.02).unwrap();
        let mut vbar: Vec<f64> = grid.sample(|y| 0.05 * (-(y * y) / 8.0).exp());
        let mut w: Vec<f64> = grid.sample(|y| 1e-6 * (-(y * y) / 4.0).exp());
        let mut vsum: Vec<f64> = vbar.iter().zip(w.iter()).map(|(a, b)| a + b).collect();
        let zero = |_: f64| (0.0, 0.0);
        let mut s1 = GraphStepper::new(3, grid.clone());
        let mut s2 = GraphStepper::new(3, grid.clone());
        let mut tau = 0.0;
        for _ in 0..2000 {
            let dt = 2e-5;
            s1.step_pair(&mut vbar, &mut w, tau, dt, &zero, &zero).unwrap();
            s2.step_v(&mut vsum, tau, dt, &zero).unwrap();
            tau += dt;
        }
        let mut worst: f64 = 0.0;
        for i in 0..grid.n_nodes {
            worst = worst.max(((vbar[i] + w[i]) - vsum[i]).abs());
        }
        // agreement far below w's own size
        assert!(worst < 1e-12, "pair/function-of-sum mismatch {worst}");
    }

    #[test]
    fn q_equation_matches_v_equation_on_smooth_data() {
        // q = u² - 2(n-1) evolved by the q-equation must match u evolved
        // by the u-equation, cross-validating the two forms.
        let grid = Grid1::symmetric(6.0, 0.02).unwrap();
        let dim = 3usize;
        let c = cylinder_radius(dim);
        let f = |y: f64| 0.1 * (-(y * y) / 6.0).exp();
        let mut v: Vec<f64> = grid.sample(f);
        let mut q: Vec<f64> = grid.sample(|y| {
            let u = c + f(y);
            u * u - 2.0 * (dim as f64 - 1.0)
        });
        let bv = f(grid.half_width);
        let bq = (c + bv) * (c + bv) - 2.0 * (dim as f64 - 1.0);
        let bc_v = move |_: f64| (bv, bv);
        let bc_q = move |_: f64| (bq, bq);
        let mut s1 = GraphStepper::new(dim, grid.clone());
        let mut s2 = GraphStepper::new(dim, grid.clone());
        let mut tau = 0.0;
        for _ in 0..5000 {
            let dt = 2e-5;
            s1.step_v(&mut v, tau, dt, &bc_v).unwrap();
            s2.step_q(&mut q, tau, dt, &bc_q).unwrap();
            tau += dt;
        }
        let mut worst: f64 = 0.0;
        for i in 1..grid.n_nodes - 1 {
            let u = c + v[i];
            worst = worst.max((u * u - 2.0 * (dim as f64 - 1.0) - q[i]).abs());
        }
        assert!(worst < 5e-6, "q/u cross-validation mismatch {worst}");
    }
}
