//! Data needed to reach a target error, and data-efficiency ratios between
//! two learning curves.

use crate::error::{Error, Result};
use crate::eval::PerformanceCurve;
use serde::{Deserialize, Serialize};

/// Extrapolation never reports more than this multiple of the largest size.
pub const EXTRAPOLATION_CAP: f64 = 10.0;
pub const REF_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredData {
    pub samples: f64,
    pub extrapolated: bool,
}

/// Smallest size at which the piecewise-linear curve through
/// `(train_size, mse_mean)` reaches `target_error`. A curve that never gets
/// there is continued along its last segment, clipped at
/// [`EXTRAPOLATION_CAP`] times the largest size, and flagged.
pub fn required_data(curve: &PerformanceCurve, target_error: f64) -> Result<RequiredData> {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.train_size as f64, p.mse_mean)).collect();
    required_data_xy(&pts, target_error)
}

pub(crate) fn required_data_xy(pts: &[(f64, f64)], target: f64) -> Result<RequiredData> {
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("curve needs at least two points".into()));
    }
    if pts.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidArgument("curve sizes must be strictly increasing".into()));
    }
    if pts[0].1 <= target {
        return Ok(RequiredData { samples: pts[0].0, extrapolated: false });
    }
    for w in pts.windows(2) {
        let ((s0, e0), (s1, e1)) = (w[0], w[1]);
        if e1 <= target {
            // e0 > target >= e1, so e0 != e1.
            let d = s0 + (target - e0) * (s1 - s0) / (e1 - e0);
            return Ok(RequiredData { samples: d, extrapolated: false });
        }
    }
    let (s0, e0) = pts[pts.len() - 2];
    let (s1, e1) = pts[pts.len() - 1];
    let cap = EXTRAPOLATION_CAP * s1;
    let slope = (e1 - e0) / (s1 - s0);
    let d = if slope < 0.0 { (s1 + (target - e1) / slope).min(cap) } else { cap };
    Ok(RequiredData { samples: d, extrapolated: true })
}

/// `E_add = D_ref - D_new` and `E_mult = D_ref / D_new` hold exactly for the
/// stored fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    pub d_ref: f64,
    pub d_new: f64,
    pub e_add: f64,
    pub e_mult: f64,
    pub extrapolated: bool,
    /// True when the comparison was anchored on the new model's error at the
    /// reference size because the new curve never reached the reference
    /// error. `d_new` is then the reference size and `d_ref` the data the
    /// reference model needs to match the new model there.
    pub anchor_swapped: bool,
    pub target_error: f64,
}

impl EfficiencyResult {
    fn new(d_ref: f64, d_new: f64, extrapolated: bool, anchor_swapped: bool, target_error: f64) -> Self {
        EfficiencyResult {
            d_ref,
            d_new,
            e_add: d_ref - d_new,
            e_mult: d_ref / d_new,
            extrapolated,
            anchor_swapped,
            target_error,
        }
    }
}

/// Data efficiency of `new` relative to `reference` at the reference curve's
/// `ref_fraction` point. `E_mult > 1` means the new model needs less data.
pub fn data_efficiency(
    reference: &PerformanceCurve,
    new: &PerformanceCurve,
    ref_fraction: f64,
) -> Result<EfficiencyResult> {
    let missing = |who: &str| Error::InvalidArgument(format!("{who} curve has no point at fraction {ref_fraction}"));
    let anchor = reference.point_at(ref_fraction).ok_or_else(|| missing("reference"))?;
    let d_ref = anchor.train_size as f64;
    if d_ref <= 0.0 {
        return Err(Error::InvalidArgument("reference size must be positive".into()));
    }
    let target = anchor.mse_mean;
    let direct = required_data(new, target)?;
    if !direct.extrapolated {
        return Ok(EfficiencyResult::new(d_ref, direct.samples, false, false, target));
    }
    let new_err = new.point_at(ref_fraction).ok_or_else(|| missing("new"))?.mse_mean;
    let swapped = required_data(reference, new_err)?;
    Ok(EfficiencyResult::new(swapped.samples, d_ref, swapped.extrapolated, true, new_err))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummary {
    pub count: usize,
    pub mean_e_mult: f64,
    pub median_e_mult: f64,
    pub mean_e_add: f64,
}

pub fn summarize(results: &[EfficiencyResult]) -> Option<EfficiencySummary> {
    if results.is_empty() {
        return None;
    }
    let n = results.len() as f64;
    let mut m: Vec<f64> = results.iter().map(|r| r.e_mult).collect();
    m.sort_by(f64::total_cmp);
    let median = if m.len() % 2 == 1 { m[m.len() / 2] } else { 0.5 * (m[m.len() / 2 - 1] + m[m.len() / 2]) };
    Some(EfficiencySummary {
        count: results.len(),
        mean_e_mult: m.iter().sum::<f64>() / n,
        median_e_mult: median,
        mean_e_add: results.iter().map(|r| r.e_add).sum::<f64>() / n,
    })
}
