//! Exact change of variables between the physical and rescaled frames:
//! τ = -log(T-t), y = x/√(T-t), u = U/√(T-t).

use crate::error::{Error, Result};
use crate::flow::curve::{CurveMode, GeneratingCurve};
use crate::flow::profile::{PhysicalGraph, RadialProfile};
use crate::grid::Grid1;

pub fn tau_of_t(t: f64, t_sing: f64) -> Result<f64> {
    if t >= t_sing {
        return Err(Error::domain("rescaling requires t < T"));
    }
    Ok(-(t_sing - t).ln())
}

pub fn t_of_tau(tau: f64, t_sing: f64) -> f64 {
    t_sing - (-tau).exp()
}

/// Intermediate-scale coordinate z = e^{-τ/4} y = x/(T-t)^{1/4}.
pub fn z_coordinate(y: f64, tau: f64) -> f64 {
    (-tau / 4.0).exp() * y
}

/// Physical graph to rescaled profile.
pub fn to_rescaled_profile(p: &PhysicalGraph, t_sing: f64) -> Result<RadialProfile> {
    let tau = tau_of_t(p.t, t_sing)?;
    let s = (t_sing - p.t).sqrt();
    let grid = Grid1 {
        half_width: p.grid.half_width / s,
        h: p.grid.h / s,
        n_nodes: p.grid.n_nodes,
    };
    RadialProfile::from_radius(grid, tau, p.dimension, |y| {
        // node-exact: y maps back onto the stored nodes
        let i = p.grid.nearest(y * s);
        p.radius[i] / s
    })
}

/// Rescaled profile to physical graph.
pub fn from_rescaled_profile(p: &RadialProfile, t_sing: f64) -> PhysicalGraph {
    let s = (-p.tau / 2.0).exp(); // √(T-t)
    let grid = Grid1 {
        half_width: p.grid.half_width * s,
        h: p.grid.h * s,
        n_nodes: p.grid.n_nodes,
    };
    PhysicalGraph {
        grid,
        radius: p.u_values().iter().map(|&u| u * s).collect(),
        t: t_of_tau(p.tau, t_sing),
        dimension: p.dimension,
    }
}

/// Rescale a physical curve into the self-similar frame at its own time.
pub fn to_rescaled_curve(c: &GeneratingCurve, t_sing: f64) -> Result<GeneratingCurve> {
    if c.mode != CurveMode::Unrescaled {
        return Err(Error::domain("curve is already rescaled"));
    }
    let tau = tau_of_t(c.time, t_sing)?;
    let s = (t_sing - c.time).sqrt();
    Ok(GeneratingCurve {
        x: c.x.iter().map(|&x| x / s).collect(),
        r: c.r.iter().map(|&r| r / s).collect(),
        time: tau,
        dimension: c.dimension,
        mode: CurveMode::Rescaled,
        enforce_symmetry: c.enforce_symmetry,
    })
}

pub fn from_rescaled_curve(c: &GeneratingCurve, t_sing: f64) -> Result<GeneratingCurve> {
    if c.mode != CurveMode::Rescaled {
        return Err(Error::domain("curve is not in the rescaled frame"));
    }
    let s = (-c.time / 2.0).exp();
    Ok(GeneratingCurve {
        x: c.x.iter().map(|&x| x * s).collect(),
        r: c.r.iter().map(|&r| r * s).collect(),
        time: t_of_tau(c.time, t_sing),
        dimension: c.dimension,
        mode: CurveMode::Unrescaled,
        enforce_symmetry: c.enforce_symmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn round_trip_is_identity() {
        let c = GeneratingCurve::sphere(0.5, 101, 3, CurveMode::Unrescaled);
        let t_sing = 1.0;
        let resc = to_rescaled_curve(&c, t_sing).unwrap();
        let back = from_rescaled_curve(&resc, t_sing).unwrap();
        for i in 0..c.n_nodes() {
            assert_abs_diff_eq!(back.x[i], c.x[i], epsilon = 1e-14);
            assert_abs_diff_eq!(back.r[i], c.r[i], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(back.time, c.time, epsilon = 1e-14);
        assert!(to_rescaled_curve(&back, back.time - 1.0).is_err());
    }

    #[test]
    fn shrinking_sphere_maps_to_stationary_profile() {
        // U(x,t) with R(t) = √(2n(T-t)) becomes u = √(2n - y²)
        let n_dim = 3usize;
        let t_sing = 0.25;
        let t = 0.1;
        let r_t = (2.0 * n_dim as f64 * (t_sing - t)).sqrt();
        let c = {
            let mut c = GeneratingCurve::sphere(r_t, 201, n_dim, CurveMode::Unrescaled);
            c.time = t;
            c
        };
        let resc = to_rescaled_curve(&c, t_sing).unwrap();
        let expect = (2.0 * n_dim as f64).sqrt();
        assert_relative_eq!(resc.max_radius(), expect, max_relative = 1e-12);
        for i in 0..resc.n_nodes() {
            let y = resc.x[i];
            if y.abs() < expect - 0.3 {
                assert_relative_eq!(
                    resc.r[i],
                    (2.0 * n_dim as f64 - y * y).sqrt(),
                    max_relative = 1e-3
                );
            }
        }
    }

    #[test]
    fn z_coordinate_consistency() {
        // z = e^{-τ/4} y = x/(T-t)^{1/4}
        let t_sing = 2.0;
        let t = 1.5;
        let tau = tau_of_t(t, t_sing).unwrap();
        let x = 0.73;
        let y = x / (t_sing - t).sqrt();
        assert_relative_eq!(
            z_coordinate(y, tau),
            x / (t_sing - t).powf(0.25),
            max_relative = 1e-13
        );
    }
}
