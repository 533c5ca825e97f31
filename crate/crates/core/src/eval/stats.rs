use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deviations within this band of the budget count as zero.
pub const RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub count: usize,
    pub mean_raw: f64,
    pub mean_tolerated: f64,
    /// Share of episodes outside the band.
    pub violation_rate: f64,
}

/// Mean absolute deviation, raw and with in-band deviations zeroed.
pub fn rate_deviation_stats<I>(deviations: I, tolerance: f64) -> Result<DeviationStats>
where
    I: IntoIterator<Item = f64>,
{
    let (mut count, mut raw, mut tolerated, mut violations) = (0usize, 0.0, 0.0, 0usize);
    for d in deviations {
        let d = d.abs();
        if !d.is_finite() {
            return Err(Error::NonFinite("rate deviation".into()));
        }
        count += 1;
        raw += d;
        if d > tolerance {
            tolerated += d;
            violations += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoData("rate deviation statistics need at least one episode"));
    }
    let n = count as f64;
    Ok(DeviationStats {
        count,
        mean_raw: raw / n,
        mean_tolerated: tolerated / n,
        violation_rate: violations as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(d: &[f64]) -> DeviationStats {
        rate_deviation_stats(d.iter().copied(), RATE_TOLERANCE).unwrap()
    }

    #[test]
    fn in_band_deviations_vanish() {
        assert_eq!(stats(&[0.04, 0.03]).mean_tolerated, 0.0);
        assert_eq!(stats(&[0.10]).mean_tolerated, 0.10);
        let s = stats(&[0.04, 0.08]);
        assert!((s.mean_tolerated - 0.04).abs() < 1e-15);
        assert!((s.mean_raw - 0.06).abs() < 1e-15);
        assert_eq!(s.violation_rate, 0.5);
    }

    #[test]
    fn boundary_is_inside_the_band() {
        assert_eq!(stats(&[0.05]).mean_tolerated, 0.0);
    }

    #[test]
    fn order_does_not_matter() {
        let a = stats(&[0.01, 0.2, 0.07, 0.5]);
        let b = stats(&[0.5, 0.07, 0.01, 0.2]);
        assert!((a.mean_raw - b.mean_raw).abs() < 1e-15);
        assert!((a.mean_tolerated - b.mean_tolerated).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(rate_deviation_stats(std::iter::empty(), RATE_TOLERANCE).is_err());
    }
}
