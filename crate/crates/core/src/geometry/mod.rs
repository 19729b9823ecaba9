//! Finitely generated cones, their polars, tangent and normal cones, and the
//! distance-based bounds built from them.

mod bounds;
mod cone;
mod tangent;

pub use bounds::{
    distance_comparison, tangent_statistic, u_n_bound, ConvexTarget, ProcessProbe, DistanceComparison, UnBound,
};
pub use cone::{distance_dual, distance_primal, project_cone, FinitelyGeneratedCone, PolarCone, MAX_GENERATORS};
pub use tangent::{tangent_normal_cones, TangentNormal};
