use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whisker reach in interquartile ranges.
pub const WHISKER_IQR: f64 = 4.0;

/// Quantile of sorted data by linear interpolation between order statistics:
/// position `p (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Box-plot summary with whiskers at the most extreme data within
/// `4 IQR` of the quartiles; everything beyond is an outlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("box statistics need at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("box statistics need finite values"));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q25 = quantile(&s, 0.25);
        let median = quantile(&s, 0.5);
        let q75 = quantile(&s, 0.75);
        let iqr = q75 - q25;
        let lo_fence = q25 - WHISKER_IQR * iqr;
        let hi_fence = q75 + WHISKER_IQR * iqr;
        let inside = || s.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
        Ok(BoxStats {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            q25,
            median,
            q75,
            max: s[s.len() - 1],
            iqr,
            whisker_low: inside().fold(f64::INFINITY, f64::min),
            whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
            outliers: s.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect(),
        })
    }
}
