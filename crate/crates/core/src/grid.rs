//! Symmetric uniform 1-D grids and the finite-difference / quadrature
//! helpers shared by the graph solvers and the spectral diagnostics.

use crate::error::{Error, Result};

/// Uniform grid on `[-half_width, half_width]` with an odd number of nodes,
/// so that `y = 0` is a node and every stencil has a mirror image.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1 {
    pub half_width: f64,
    pub h: f64,
    pub n_nodes: usize,
}

impl Grid1 {
    pub fn symmetric(half_width: f64, h_target: f64) -> Result<Self> {
        if !(half_width > 0.0) || !(h_target > 0.0) {
            return Err(Error::domain("grid needs positive extent and spacing"));
        }
        let half_count = (half_width / h_target).round().max(2.0) as usize;
        let h = half_width / half_count as f64;
        Ok(Grid1 {
            half_width,
            h,
            n_nodes: 2 * half_count + 1,
        })
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        -self.half_width + self.h * i as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(|i| self.y(i))
    }

    pub fn center_index(&self) -> usize {
        self.n_nodes / 2
    }

    /// Index of the node closest to `y`.
    pub fn nearest(&self, y: f64) -> usize {
        let i = ((y + self.half_width) / self.h).round();
        (i.max(0.0) as usize).min(self.n_nodes - 1)
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }
}

/// Centered first derivative, 4th order in the interior, one-sided 2nd
/// order at the two nodes nearest each boundary.
pub fn deriv1(values: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = values.len();
    assert!(n >= 5, "need at least 5 nodes for the stencil");
    out.clear();
    out.resize(n, 0.0);
    let v = values;
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    out[1] = (v[2] - v[0]) / (2.0 * h);
    for i in 2..n - 2 {
        out[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    out[n - 2] = (v[n - 1] - v[n - 3]) / (2.0 * h);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
}

/// Centered second derivative, 4th order in the interior, 2nd order at the
/// nodes nearest each boundary.
pub fn deriv2(values: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = values.len();
    assert!(n >= 5, "need at least 5 nodes for the stencil");
    out.clear();
    out.resize(n, 0.0);
    let v = values;
    let h2 = h * h;
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    out[1] = (v[0] - 2.0 * v[1] + v[2]) / h2;
    for i in 2..n - 2 {
        out[i] =
            (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2]) / (12.0 * h2);
    }
    out[n - 2] = (v[n - 3] - 2.0 * v[n - 2] + v[n - 1]) / h2;
    out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
}

pub fn deriv1_alloc(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    deriv1(values, h, &mut out);
    out
}

pub fn deriv2_alloc(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    deriv2(values, h, &mut out);
    out
}

/// Composite Simpson rule over the whole grid. `n_nodes` is odd by
/// construction, so the rule applies cleanly.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1);
    let mut s = values[0] + values[n - 1];
    let mut i = 1;
    while i < n - 1 {
        s += 4.0 * values[i];
        if i + 1 < n - 1 {
            s += 2.0 * values[i + 1];
        }
        i += 2;
    }
    s * h / 3.0
}

/// 4-point (cubic) Lagrange interpolation of grid data at `y`.
/// Falls back to the boundary value outside the grid.
pub fn interp_cubic(grid: &Grid1, values: &[f64], y: f64) -> f64 {
    let n = values.len();
    if y <= -grid.half_width {
        return values[0];
    }
    if y >= grid.half_width {
        return values[n - 1];
    }
    let t = (y + grid.half_width) / grid.h;
    let i1 = (t.floor() as usize).min(n - 2);
    // stencil i0..i0+3 containing [i1, i1+1]
    let i0 = i1.saturating_sub(1).min(n - 4);
    let x = t - i0 as f64;
    let mut acc = 0.0;
    for (k, &vk) in values[i0..i0 + 4].iter().enumerate() {
        let mut l = 1.0;
        for j in 0..4 {
            if j != k {
                l *= (x - j as f64) / (k as f64 - j as f64);
            }
        }
        acc += vk * l;
    }
    acc
}

/// 4-point Lagrange interpolation on a uniform table starting at `x0`
/// with spacing `h`. Clamps to the end values outside the table.
pub fn interp_uniform(x0: f64, h: f64, values: &[f64], x: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 4);
    let t = (x - x0) / h;
    if t <= 0.0 {
        return values[0];
    }
    if t >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i1 = (t.floor() as usize).min(n - 2);
    let i0 = i1.saturating_sub(1).min(n - 4);
    let s = t - i0 as f64;
    let mut acc = 0.0;
    for (k, &vk) in values[i0..i0 + 4].iter().enumerate() {
        let mut l = 1.0;
        for j in 0..4 {
            if j != k {
                l *= (s - j as f64) / (k as f64 - j as f64);
            }
        }
        acc += vk * l;
    }
    acc
}

/// Gauss–Legendre nodes/weights on [-1, 1].
///
/// Computed by Newton iteration on the Legendre recurrence; accurate to
/// machine precision for the modest orders used here.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 2);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Initial guess (Abramowitz & Stegun 25.4.30 style).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre value and derivative by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// ∫_a^b f(x) dx by composite Gauss–Legendre panels of width `panel`.
pub fn integrate_panels(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64, order: usize) -> f64 {
    assert!(b > a);
    let (xs, ws) = gauss_legendre(order);
    let n_panels = ((b - a) / panel).ceil().max(1.0) as usize;
    let dp = (b - a) / n_panels as f64;
    let mut total = 0.0;
    for p in 0..n_panels {
        let lo = a + dp * p as f64;
        let mid = lo + 0.5 * dp;
        let half = 0.5 * dp;
        let mut s = 0.0;
        for (x, w) in xs.iter().zip(ws.iter()) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivatives_are_high_order_on_smooth_data() {
        let grid = Grid1::symmetric(2.0, 0.01).unwrap();
        let v: Vec<f64> = grid.sample(|y| (0.7 * y).sin());
        let d1 = deriv1_alloc(&v, grid.h);
        let d2 = deriv2_alloc(&v, grid.h);
        let i = grid.nearest(0.63);
        let y = grid.y(i);
        assert_relative_eq!(d1[i], 0.7 * (0.7 * y).cos(), epsilon = 1e-9);
        assert_relative_eq!(d2[i], -0.49 * (0.7 * y).sin(), epsilon = 1e-7);
    }

    #[test]
    fn simpson_integrates_quartics_well() {
        let grid = Grid1::symmetric(1.0, 0.005).unwrap();
        let v: Vec<f64> = grid.sample(|y| y * y * y * y);
        assert_relative_eq!(simpson(&v, grid.h), 0.4, epsilon = 1e-8);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (xs, ws) = gauss_legendre(8);
        // degree 15 exactness: integrate x^14 over [-1,1] = 2/15
        let s: f64 = xs
            .iter()
            .zip(ws.iter())
            .map(|(x, w)| w * x.powi(14))
            .sum();
        assert_relative_eq!(s, 2.0 / 15.0, epsilon = 1e-13);
    }

    #[test]
    fn panel_integration_handles_gaussian_weight() {
        // ∫_0^∞ e^{-y²/4} dy = √π ; truncate at 40.
        let v = integrate_panels(|y| (-y * y / 4.0).exp(), 0.0, 40.0, 0.5, 16);
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cubic_interpolation_reproduces_cubics() {
        let grid = Grid1::symmetric(3.0, 0.25).unwrap();
        let v: Vec<f64> = grid.sample(|y| 1.0 + y - 2.0 * y * y + 0.5 * y * y * y);
        for &y in &[-2.9, -1.03, 0.0, 0.617, 2.44] {
            let exact = 1.0 + y - 2.0 * y * y + 0.5 * y * y * y;
            assert_relative_eq!(interp_cubic(&grid, &v, y), exact, epsilon = 1e-12);
        }
    }
}
