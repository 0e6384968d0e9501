//! Reproducible Monte Carlo estimators.

mod fit;
mod interval;
mod mc;
mod stream;

pub use fit::{fit_constant, required_constant, CaseFit, Evaluator, ExponentRule, FitCase, FitResult};
pub use interval::{clopper_pearson, BinomialInterval};
pub use mc::{
    concentration_on_batch, mc_concentration, mc_density_at, mc_small_ball, mode_image, ConcentrationEstimate,
    DensityEstimate, DensityRow, EstimateLabel, SampleBatch, ALPHA, MIN_SAMPLES, SHARD_SIZE,
};
pub use stream::RandomStream;
