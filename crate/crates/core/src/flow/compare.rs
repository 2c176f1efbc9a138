//! Pointwise ordering of profiles, the discrete face of the comparison
//! principle.

use crate::flow::profile::RadialProfile;

#[derive(Debug, Clone)]
pub struct OrderingReport {
    /// p1 ≤ p2 everywhere on the region (up to `slack`)
    pub ordered: bool,
    /// min over the region of p2 - p1
    pub min_gap: f64,
    /// location and size of the first violation, if any
    pub first_violation: Option<(f64, f64)>,
}

/// Compare two profiles on the intersection of their grids with |y| ≤
/// `region`; `slack` absorbs discretization noise.
pub fn compare_profiles(
    p1: &RadialProfile,
    p2: &RadialProfile,
    region: f64,
    slack: f64,
) -> OrderingReport {
    let mut min_gap = f64::INFINITY;
    let mut first_violation = None;
    let half = region.min(p1.grid.half_width).min(p2.grid.half_width);
    for i in 0..p1.grid.n_nodes {
        let y = p1.grid.y(i);
        if y.abs() > half {
            continue;
        }
        let a = p1.v[i];
        let b = if p2.grid == p1.grid {
            p2.v[i]
        } else {
            crate::grid::interp_cubic(&p2.grid, &p2.v, y)
        };
        let gap = b - a;
        if gap < min_gap {
            min_gap = gap;
        }
        if gap < -slack && first_violation.is_none() {
            first_violation = Some((y, gap));
        }
    }
    OrderingReport {
        ordered: first_violation.is_none(),
        min_gap,
        first_violation,
    }
}
