//! Radial profiles.
//!
//! The rescaled profile is stored as the deviation `v = u - √(2(n-1))`
//! from the cylinder. All the interesting dynamics near the cylinder
//! happens many orders of magnitude below the radius itself, so the
//! deviation is the only representation that keeps those digits.

use crate::error::{Error, Result};
use crate::grid::Grid1;

/// Rescaled radial profile u(y, τ) on a symmetric grid, stored as
/// `v = u - √(2(n-1))`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub grid: Grid1,
    /// deviation from the cylinder radius
    pub v: Vec<f64>,
    pub tau: f64,
    pub dimension: usize,
}

pub fn cylinder_radius(dimension: usize) -> f64 {
    (2.0 * (dimension as f64 - 1.0)).sqrt()
}

impl RadialProfile {
    pub fn from_deviation(
        grid: Grid1,
        v: Vec<f64>,
        tau: f64,
        dimension: usize,
    ) -> Result<Self> {
        if v.len() != grid.n_nodes {
            return Err(Error::domain("profile data does not match grid"));
        }
        let p = RadialProfile {
            grid,
            v,
            tau,
            dimension,
        };
        p.check_positive()?;
        Ok(p)
    }

    pub fn from_radius(grid: Grid1, tau: f64, dimension: usize, u: impl Fn(f64) -> f64) -> Result<Self> {
        let c = cylinder_radius(dimension);
        let v = grid.sample(|y| u(y) - c);
        Self::from_deviation(grid, v, tau, dimension)
    }

    pub fn cylinder(grid: Grid1, tau: f64, dimension: usize) -> Self {
        let v = vec![0.0; grid.n_nodes];
        RadialProfile {
            grid,
            v,
            tau,
            dimension,
        }
    }

    pub fn cylinder_radius(&self) -> f64 {
        cylinder_radius(self.dimension)
    }

    pub fn u(&self, i: usize) -> f64 {
        self.cylinder_radius() + self.v[i]
    }

    pub fn u_values(&self) -> Vec<f64> {
        let c = self.cylinder_radius();
        self.v.iter().map(|&v| c + v).collect()
    }

    pub fn min_u(&self) -> f64 {
        let c = self.cylinder_radius();
        self.v.iter().fold(f64::INFINITY, |m, &v| m.min(c + v))
    }

    fn check_positive(&self) -> Result<()> {
        if self.min_u() <= 0.0 {
            return Err(Error::domain("profile radius must stay positive"));
        }
        Ok(())
    }

    /// Even-symmetry defect, sup over mirrored node pairs.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.v.len();
        let mut worst: f64 = 0.0;
        for i in 0..n / 2 {
            worst = worst.max((self.v[i] - self.v[n - 1 - i]).abs());
        }
        worst
    }
}

/// Unrescaled radial graph r = U(x) at physical time t.
#[derive(Debug, Clone)]
pub struct PhysicalGraph {
    pub grid: Grid1,
    pub radius: Vec<f64>,
    pub t: f64,
    pub dimension: usize,
}
