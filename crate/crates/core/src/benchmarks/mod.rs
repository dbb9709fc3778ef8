//! Reference shading strategies the surplus maximiser is measured against.

mod censored;
mod factor_lr;
mod maintainer;
mod point_estimator;
mod segment;

pub use censored::{
    fit_censored_distribution, log_spaced_edges, BucketedPriceDistribution, DEFAULT_BUCKETS,
};
pub use factor_lr::{FactorLrConfig, ShadingFactorModel};
pub use maintainer::{winrate_inverse, winrate_maintainer_bid, DEFAULT_TARGET_WIN_RATE};
pub use point_estimator::{PointEstimatorModel, MIN_PRICE};
pub use segment::{
    segment_nonlinear_apply, segment_rls_update, Applied, Branch, SegmentConfig, SegmentParams,
    SegmentShader,
};

use crate::error::{Error, Result};

pub fn fixed_factor_bid(factor: f64, value: f64) -> Result<f64> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::config("factor", "must be in (0, 1]"));
    }
    Ok(factor * value)
}
