//! Time stepping for the axisymmetric flow in both representations:
//! radial graphs (rescaled variables, difference form) and parametric
//! generating curves (tips included).

pub mod compare;
pub mod curve;
pub mod evolve;
pub mod graph;
pub mod profile;
pub mod transform;

pub use compare::{compare_profiles, OrderingReport};
pub use curve::{step_curve, CurveMode, GeneratingCurve, SingularityKind, SingularityReport};
pub use evolve::{evolve_until, StopRule, Trajectory};
pub use graph::{step_graph, GraphStepper};
pub use profile::{PhysicalGraph, RadialProfile};
pub use transform::{from_rescaled_curve, to_rescaled_curve, z_coordinate};
