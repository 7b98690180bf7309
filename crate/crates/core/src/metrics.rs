use thiserror::Error;

use crate::image::Image;

/// Value returned when the estimate matches the reference exactly.
pub const PSNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("estimate is {estimate}x{estimate}, reference is {reference}x{reference}")]
    ShapeMismatch { estimate: usize, reference: usize },
    #[error("reference image has no positive peak")]
    ZeroReference,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityScore {
    pub psnr: f64,
    pub mse: f64,
    pub peak: f64,
}

/// PSNR with `peak = max(reference)`; capped at [`PSNR_CAP_DB`].
pub fn psnr(estimate: &Image, reference: &Image) -> Result<QualityScore, MetricError> {
    if estimate.size() != reference.size() {
        return Err(MetricError::ShapeMismatch {
            estimate: estimate.size(),
            reference: reference.size(),
        });
    }
    let peak = reference.max();
    if !(peak > 0.0) {
        return Err(MetricError::ZeroReference);
    }
    let n = reference.data().len() as f64;
    let mse = estimate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let psnr = if mse > 0.0 {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    } else {
        PSNR_CAP_DB
    };
    Ok(QualityScore { psnr, mse, peak })
}
