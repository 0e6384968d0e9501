//! Exact or quadrature-grade ground truth at desk scale.

mod cube;
mod discrete;
pub mod geometry;
mod rearrangement;

pub use cube::{cube_section_density, rogozin_envelope};
pub use discrete::{
    candidate_centers, exact_small_ball_1d, exact_small_ball_multi, DiscreteProductLaw, SmallBallOptimum,
    MULTI_BUDGET, SUM_BUDGET,
};
pub use rearrangement::{rearrangement_profile, RearrangementProfile};
