//! The Gaussian-weighted Hilbert space L²(ℝ, e^{-y²/4}dy).
//!
//! Hermite polynomials normalized to leading coefficient 1 are the
//! eigenfunctions of the drift Laplacian `𝓛v = v_yy - (y/2) v_y + v`
//! with eigenvalues `1 - k/2`. Everything spectral in this crate (funnel
//! projections, barrier coefficients, peanut shooting) goes through this
//! module.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{self, Grid1};

pub const SQRT_PI: f64 = 1.772453850905516;

/// Polynomial in monomial basis, coefficients ascending in degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.0.iter().rev() {
            acc = acc * y + c;
        }
        acc
    }

    pub fn deriv(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (i + 1) as f64)
                .collect(),
        )
    }

    fn mul_y(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend_from_slice(&self.0);
        Poly(c)
    }

    fn axpy(&mut self, a: f64, other: &Poly) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), 0.0);
        }
        for (i, &c) in other.0.iter().enumerate() {
            self.0[i] += a * c;
        }
    }

    pub fn scaled(&self, a: f64) -> Poly {
        Poly(self.0.iter().map(|&c| a * c).collect())
    }
}

/// Hermite polynomials H_k with leading coefficient 1 for the weight
/// e^{-y²/4}; recurrence H_{k+1} = y H_k - 2k H_{k-1}.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    pub max_index: usize,
    table: Vec<Poly>,
}

impl HermiteBasis {
    pub fn new(max_index: usize) -> Result<Self> {
        if max_index % 2 != 0 {
            return Err(Error::domain("max Hermite index must be even"));
        }
        let mut table = Vec::with_capacity(max_index + 1);
        table.push(Poly(vec![1.0]));
        if max_index >= 1 {
            table.push(Poly(vec![0.0, 1.0]));
        }
        for k in 1..max_index {
            let mut next = table[k].mul_y();
            next.axpy(-2.0 * k as f64, &table[k - 1]);
            table.push(next);
        }
        Ok(HermiteBasis { max_index, table })
    }

    pub fn poly(&self, k: usize) -> &Poly {
        &self.table[k]
    }

    /// H_k(y) for even k; odd or out-of-range k is a domain error.
    pub fn eval(&self, k: usize, y: f64) -> Result<f64> {
        if k % 2 != 0 {
            return Err(Error::domain(format!("Hermite index {k} is odd")));
        }
        if k > self.max_index {
            return Err(Error::domain(format!(
                "Hermite index {k} exceeds max {}",
                self.max_index
            )));
        }
        Ok(self.table[k].eval(y))
    }

    /// ‖H_k‖² = 2√π · 2^k · k! in this weight.
    pub fn norm_sq(k: usize) -> f64 {
        let mut v = 2.0 * SQRT_PI;
        for j in 1..=k {
            v *= 2.0 * j as f64;
        }
        v
    }

    /// Exact drift Laplacian of a polynomial: p'' - (y/2) p' + p.
    pub fn drift_laplacian_poly(p: &Poly) -> Poly {
        let dp = p.deriv();
        let ddp = dp.deriv();
        let mut out = ddp;
        out.axpy(-0.5, &dp.mul_y());
        out.axpy(1.0, p);
        out
    }
}

/// Gauss–Hermite rule for ∫ f(y) e^{-y²/4} dy, built from the standard
/// e^{-x²} rule by the substitution y = 2x. Exact for polynomials of
/// degree ≤ 2·order - 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn gauss_hermite(order: usize) -> Self {
        let (x, w) = gauss_hermite_physicists(order);
        QuadratureRule {
            nodes: x.iter().map(|&xi| 2.0 * xi).collect(),
            weights: w.iter().map(|&wi| 2.0 * wi).collect(),
            order,
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&y, &w)| w * f(y))
            .sum()
    }

    /// Largest |node|; grid functions must cover this range to be
    /// projected without extrapolation.
    pub fn reach(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0).abs()
    }
}

/// Nodes and weights for weight e^{-x²} (Newton iteration on the
/// orthonormal recurrence; the classic approach, stable for the orders
/// used here).
fn gauss_hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // orthonormal Hermite functions w.r.t. e^{-x²}
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

/// Spectral content of a function over the even Hermite modes up to
/// `k_max`, plus the weighted-L² size of whatever is left.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    pub coeffs: BTreeMap<usize, f64>,
    pub residual_norm: f64,
}

impl Serialize for SpectralDecomp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.coeffs.len() + 1))?;
        for (k, c) in &self.coeffs {
            map.serialize_entry(&k.to_string(), c)?;
        }
        map.serialize_entry("residual", &self.residual_norm)?;
        map.end()
    }
}

impl SpectralDecomp {
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(&k).copied().unwrap_or(0.0)
    }

    /// ‖π^u f‖ over 𝓗^u = span{H_0, H_2}.
    pub fn unstable_norm(&self) -> f64 {
        (self.coeff(0).powi(2) * HermiteBasis::norm_sq(0)
            + self.coeff(2).powi(2) * HermiteBasis::norm_sq(2))
        .sqrt()
    }

    /// ‖π^s f‖: resolved stable modes plus the unresolved tail.
    pub fn stable_norm(&self) -> f64 {
        let resolved: f64 = self
            .coeffs
            .iter()
            .filter(|(k, _)| **k >= 4)
            .map(|(k, c)| c * c * HermiteBasis::norm_sq(*k))
            .sum();
        (resolved + self.residual_norm * self.residual_norm).sqrt()
    }

    pub fn total_norm(&self) -> f64 {
        let resolved: f64 = self
            .coeffs
            .iter()
            .map(|(k, c)| c * c * HermiteBasis::norm_sq(*k))
            .sum();
        (resolved + self.residual_norm * self.residual_norm).sqrt()
    }

    pub fn eval_resolved(&self, basis: &HermiteBasis, y: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| c * basis.poly(*k).eval(y))
            .sum()
    }
}

/// Which spectral component to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Unstable,
    Stable,
}

/// The weighted space with its quadrature and Hermite basis. Pure and
/// immutable; freely shared across threads.
#[derive(Debug, Clone)]
pub struct GaussianSpace {
    pub basis: HermiteBasis,
    pub rule: QuadratureRule,
}

pub const DEFAULT_KMAX: usize = 16;
pub const DEFAULT_QUADRATURE_ORDER: usize = 128;

impl GaussianSpace {
    pub fn new(k_max: usize, quadrature_order: usize) -> Result<Self> {
        Ok(GaussianSpace {
            basis: HermiteBasis::new(k_max)?,
            rule: QuadratureRule::gauss_hermite(quadrature_order),
        })
    }

    pub fn standard() -> Self {
        Self::new(DEFAULT_KMAX, DEFAULT_QUADRATURE_ORDER).expect("defaults are valid")
    }

    /// ⟨f, g⟩ = ∫ f g e^{-y²/4} dy.
    pub fn inner(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        self.rule.integrate(|y| f(y) * g(y))
    }

    pub fn norm_h(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.inner(&f, &f).max(0.0).sqrt()
    }

    /// Restricted ‖f‖_{𝓗[a,b]} via composite Gauss–Legendre panels with the
    /// weight kept inside the integrand (Gauss–Hermite nodes ignore
    /// interval endpoints).
    pub fn norm_h_interval(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if a >= b {
            return Err(Error::domain("interval requires a < b"));
        }
        let v = grid::integrate_panels(
            |y| {
                let fy = f(y);
                fy * fy * (-y * y / 4.0).exp()
            },
            a,
            b,
            0.5,
            16,
        );
        Ok(v.max(0.0).sqrt())
    }

    /// ‖f‖_𝓓 with f' supplied by the caller.
    pub fn norm_d(&self, f: impl Fn(f64) -> f64, fy: impl Fn(f64) -> f64) -> f64 {
        self.rule
            .integrate(|y| {
                let a = f(y);
                let b = fy(y);
                a * a + b * b
            })
            .max(0.0)
            .sqrt()
    }

    pub fn norm_d_interval(
        &self,
        f: impl Fn(f64) -> f64,
        fy: impl Fn(f64) -> f64,
        a: f64,
        b: f64,
    ) -> Result<f64> {
        if a >= b {
            return Err(Error::domain("interval requires a < b"));
        }
        let v = grid::integrate_panels(
            |y| {
                let p = f(y);
                let q = fy(y);
                (p * p + q * q) * (-y * y / 4.0).exp()
            },
            a,
            b,
            0.5,
            16,
        );
        Ok(v.max(0.0).sqrt())
    }

    /// Drift Laplacian of sampled data: centered 4th-order stencils in the
    /// interior, one-sided at the boundary.
    pub fn drift_laplacian_grid(&self, grid: &Grid1, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() < 5 {
            return Err(Error::domain("drift Laplacian needs at least 5 grid points"));
        }
        let d1 = grid::deriv1_alloc(values, grid.h);
        let d2 = grid::deriv2_alloc(values, grid.h);
        Ok((0..values.len())
            .map(|i| d2[i] - 0.5 * grid.y(i) * d1[i] + values[i])
            .collect())
    }

    /// Full even-mode decomposition of a closure.
    pub fn decompose(&self, f: impl Fn(f64) -> f64) -> SpectralDecomp {
        let mut coeffs = BTreeMap::new();
        let mut resolved_sq = 0.0;
        for k in (0..=self.basis.max_index).step_by(2) {
            let p = self.basis.poly(k);
            let c = self.inner(&f, |y| p.eval(y)) / HermiteBasis::norm_sq(k);
            resolved_sq += c * c * HermiteBasis::norm_sq(k);
            coeffs.insert(k, c);
        }
        let total_sq = self.inner(&f, &f);
        let residual_norm = (total_sq - resolved_sq).max(0.0).sqrt();
        SpectralDecomp {
            coeffs,
            residual_norm,
        }
    }

    /// Decompose grid data (cubic interpolation onto the quadrature nodes).
    /// The boolean is an accuracy warning: true when the grid is coarse
    /// relative to the quadrature's node spacing.
    pub fn decompose_grid(&self, grid: &Grid1, values: &[f64]) -> (SpectralDecomp, bool) {
        let coarse = self.grid_too_coarse(grid);
        let d = self.decompose(|y| grid::interp_cubic(grid, values, y));
        (d, coarse)
    }

    pub fn grid_too_coarse(&self, grid: &Grid1) -> bool {
        // node spacing of the rule near the origin
        let mid = self.rule.nodes.len() / 2;
        let gap = (self.rule.nodes[mid] - self.rule.nodes[mid - 1]).abs();
        grid.h > 0.75 * gap
    }

    /// The requested component of `f` as a decomposition. The unstable
    /// part keeps only k ∈ {0, 2}; the stable part keeps k ≥ 4 plus the
    /// tail residual.
    pub fn project(&self, f: impl Fn(f64) -> f64, which: Component) -> SpectralDecomp {
        let full = self.decompose(f);
        self.split(&full, which)
    }

    pub fn split(&self, full: &SpectralDecomp, which: Component) -> SpectralDecomp {
        match which {
            Component::Unstable => SpectralDecomp {
                coeffs: full
                    .coeffs
                    .iter()
                    .filter(|(k, _)| **k < 4)
                    .map(|(k, c)| (*k, *c))
                    .collect(),
                residual_norm: 0.0,
            },
            Component::Stable => SpectralDecomp {
                coeffs: full
                    .coeffs
                    .iter()
                    .filter(|(k, _)| **k >= 4)
                    .map(|(k, c)| (*k, *c))
                    .collect(),
                residual_norm: full.residual_norm,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Moment oracle: ∫ y^{2k} e^{-y²/4} dy = (2k-1)!! · 2^k · 2√π.
    fn gaussian_moment(two_k: usize) -> f64 {
        assert!(two_k % 2 == 0);
        let k = two_k / 2;
        let mut v = 2.0 * SQRT_PI;
        for j in 1..=k {
            v *= (2 * j - 1) as f64 * 2.0;
        }
        v
    }

    /// Oracle inner product of two polynomials from moments alone,
    /// independent of any quadrature.
    fn poly_inner_oracle(p: &Poly, q: &Poly) -> f64 {
        let mut acc = 0.0;
        for (i, &a) in p.0.iter().enumerate() {
            for (j, &b) in q.0.iter().enumerate() {
                if (i + j) % 2 == 0 {
                    acc += a * b * gaussian_moment(i + j);
                }
            }
        }
        acc
    }

    #[test]
    fn explicit_hermite_values() {
        let basis = HermiteBasis::new(16).unwrap();
        // H_2(y) = y² - 2, H_4(y) = y⁴ - 12y² + 12
        assert_abs_diff_eq!(basis.eval(2, 2.0).unwrap(), 2.0);
        assert_abs_diff_eq!(basis.eval(4, 0.0).unwrap(), 12.0);
        assert_abs_diff_eq!(basis.eval(0, 7.3).unwrap(), 1.0);
        assert!(basis.eval(3, 1.0).is_err());
        assert!(basis.eval(18, 1.0).is_err());
    }

    #[test]
    fn leading_coefficient_is_one_and_even_parity() {
        let basis = HermiteBasis::new(16).unwrap();
        for k in (0..=16).step_by(2) {
            let p = basis.poly(k);
            assert_abs_diff_eq!(*p.0.last().unwrap(), 1.0);
            for (i, &c) in p.0.iter().enumerate() {
                if i % 2 == 1 {
                    assert_abs_diff_eq!(c, 0.0);
                }
            }
            let y = 1.37;
            assert_relative_eq!(p.eval(-y), p.eval(y), max_relative = 1e-14);
        }
    }

    #[test]
    fn quadrature_matches_moment_oracle() {
        let space = GaussianSpace::standard();
        // ⟨H_0,H_0⟩ = 2√π, ⟨H_2,H_2⟩ = 16√π (frozen from the moment oracle)
        let h0 = |_: f64| 1.0;
        let h2 = |y: f64| y * y - 2.0;
        let h4 = |y: f64| y.powi(4) - 12.0 * y * y + 12.0;
        assert_relative_eq!(space.inner(h0, h0), 2.0 * SQRT_PI, max_relative = 1e-13);
        assert_relative_eq!(space.inner(h2, h2), 16.0 * SQRT_PI, max_relative = 1e-13);
        assert_abs_diff_eq!(space.inner(h2, h4), 0.0, epsilon = 1e-10);
        // analytic norm table agrees with the oracle
        let basis = &space.basis;
        for k in (0..=12).step_by(2) {
            let oracle = poly_inner_oracle(basis.poly(k), basis.poly(k));
            assert_relative_eq!(HermiteBasis::norm_sq(k), oracle, max_relative = 1e-11);
        }
    }

    #[test]
    fn orthogonality_across_even_indices() {
        let space = GaussianSpace::standard();
        for j in (0..=12).step_by(2) {
            for k in (0..=12).step_by(2) {
                if j == k {
                    continue;
                }
                let pj = space.basis.poly(j).clone();
                let pk = space.basis.poly(k).clone();
                let ip = space.inner(|y| pj.eval(y), |y| pk.eval(y));
                let bound = 1e-10 * HermiteBasis::norm_sq(j).sqrt() * HermiteBasis::norm_sq(k).sqrt();
                assert!(ip.abs() < bound, "⟨H_{j}, H_{k}⟩ = {ip}");
            }
        }
    }

    #[test]
    fn drift_laplacian_eigenrelation_exact_polynomials() {
        let space = GaussianSpace::standard();
        for k in (0..=12).step_by(2) {
            let p = space.basis.poly(k);
            let lp = HermiteBasis::drift_laplacian_poly(p);
            let lambda = 1.0 - k as f64 / 2.0;
            let diff = {
                let mut d = lp.clone();
                d.axpy(-lambda, p);
                d
            };
            let err = space.norm_h(|y| diff.eval(y));
            let nrm = HermiteBasis::norm_sq(k).sqrt();
            assert!(err < 1e-10 * nrm, "k={k}: ‖𝓛H_k-(1-k/2)H_k‖={err}");
        }
    }

    #[test]
    fn drift_laplacian_stencil_accuracy() {
        // λ_0 = 1, λ_2 = 0, λ_4 = -1 with the finite-difference stencil
        let space = GaussianSpace::standard();
        let grid = Grid1::symmetric(30.0, 1e-2).unwrap();
        for (k, lambda) in [(0usize, 1.0), (2, 0.0), (4, -1.0), (8, -3.0)] {
            let p = space.basis.poly(k).clone();
            let vals = grid.sample(|y| p.eval(y));
            let l = space.drift_laplacian_grid(&grid, &vals).unwrap();
            let diff = |y: f64| {
                grid::interp_cubic(&grid, &l, y) - lambda * p.eval(y)
            };
            let err = space.norm_h(diff);
            let nrm = HermiteBasis::norm_sq(k).sqrt();
            assert!(err < 1e-4 * nrm, "k={k}: stencil eigen error {err}");
        }
        let tiny = Grid1::symmetric(1.0, 0.5).unwrap();
        assert!(space
            .drift_laplacian_grid(&tiny, &[1.0, 1.0, 1.0])
            .is_err());
    }

    #[test]
    fn projections_are_linear_and_idempotent() {
        let space = GaussianSpace::standard();
        let h4 = space.basis.poly(4).clone();
        let pu = space.project(|y| h4.eval(y), Component::Unstable);
        assert!(pu.unstable_norm() < 1e-10);

        // π^u[3H_0 + H_4] = 3H_0
        let f = {
            let h4 = h4.clone();
            move |y: f64| 3.0 + h4.eval(y)
        };
        let pu = space.project(f, Component::Unstable);
        assert_relative_eq!(pu.coeff(0), 3.0, max_relative = 1e-12);
        assert_abs_diff_eq!(pu.coeff(2), 0.0, epsilon = 1e-13);

        // idempotence: projecting the reconstructed unstable part changes nothing
        let basis = space.basis.clone();
        let again = space.project(move |y| pu.eval_resolved(&basis, y), Component::Unstable);
        assert_relative_eq!(again.coeff(0), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn parseval_on_resolved_part() {
        let space = GaussianSpace::standard();
        let f = |y: f64| (0.3 * y).cos() * (-0.01 * y * y).exp();
        let d = space.decompose(f);
        let total = space.inner(f, f);
        let resolved: f64 = d
            .coeffs
            .iter()
            .map(|(k, c)| c * c * HermiteBasis::norm_sq(*k))
            .sum();
        assert!(d.residual_norm >= 0.0);
        assert_relative_eq!(
            total,
            resolved + d.residual_norm * d.residual_norm,
            max_relative = 1e-10
        );
    }

    #[test]
    fn restricted_norms_match_half_line_oracle() {
        let space = GaussianSpace::standard();
        // ‖H_0‖_𝓗 over ℝ = √(2√π)
        assert_relative_eq!(
            space.norm_h(|_| 1.0),
            (2.0 * SQRT_PI).sqrt(),
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(space.norm_d(|_| 0.0, |_| 0.0), 0.0);
        // ‖y‖²_𝓓[0,∞) = ∫_0^∞ (y²+1) e^{-y²/4} dy = 3√π (half-line moments)
        let v = space
            .norm_d_interval(|y| y, |_| 1.0, 0.0, 60.0)
            .unwrap();
        assert_relative_eq!(v * v, 3.0 * SQRT_PI, max_relative = 1e-10);
        assert!(space.norm_h_interval(|_| 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn grid_decomposition_flags_coarse_grids() {
        let space = GaussianSpace::standard();
        let fine = Grid1::symmetric(30.0, 0.05).unwrap();
        let vals = fine.sample(|y| y * y - 2.0);
        let (d, warn) = space.decompose_grid(&fine, &vals);
        assert!(!warn);
        assert_relative_eq!(d.coeff(2), 1.0, max_relative = 1e-6);
        let coarse = Grid1::symmetric(30.0, 2.0).unwrap();
        let vals = coarse.sample(|y| y * y - 2.0);
        let (_, warn) = space.decompose_grid(&coarse, &vals);
        assert!(warn);
    }
}
