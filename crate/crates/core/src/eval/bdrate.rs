//! Bjøntegaard delta rate over monotone piecewise-cubic (Fritsch-Carlson)
//! interpolation of log-rate against quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bitrate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(bitrate: f64, quality: f64) -> Self {
        Self { bitrate, quality }
    }
}

/// Shape-preserving cubic Hermite interpolant through strictly increasing
/// knots. Derivatives follow the usual three-point edge rule and the
/// weighted harmonic mean inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidCurve(format!(
                "need at least two knots with matching values, got {} and {}",
                n,
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interpolation knots".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCurve("knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = y.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / h).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(m[0]);
            return Ok(Self { x, y, d });
        }
        for k in 1..n - 1 {
            let (m0, m1) = (m[k - 1], m[k]);
            if m0 == 0.0 || m1 == 0.0 || m0.signum() != m1.signum() {
                continue;
            }
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / m0 + w2 / m1);
        }
        d[0] = edge_slope(h[0], h[1], m[0], m[1]);
        d[n - 1] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        Ok(Self { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= t);
        k.clamp(1, self.x.len() - 1) - 1
    }

    /// Evaluates the interpolant; outside the knots the end cubics extend.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
            + (s3 - 2.0 * s2 + s) * h * self.d[k]
            + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
            + (s3 - s2) * h * self.d[k + 1]
    }

    /// Exact integral over `[a, b]` inside the knot range. Simpson's rule is
    /// exact for each cubic piece.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = (a.min(b), a.max(b));
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let u = lo.max(self.x[k]);
            let v = hi.min(self.x[k + 1]);
            if v <= u {
                continue;
            }
            let mid = 0.5 * (u + v);
            total += (v - u) / 6.0 * (self.eval(u) + 4.0 * self.eval(mid) + self.eval(v));
        }
        if a <= b {
            total
        } else {
            -total
        }
    }
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Log-rate interpolant over quality for one curve.
fn log_rate_curve(points: &[RdPoint], which: &str) -> Result<Pchip> {
    if points.len() < 4 {
        return Err(Error::InvalidCurve(format!(
            "{which}: need at least 4 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.bitrate > 0.0 && p.bitrate.is_finite() && p.quality.is_finite()))
    {
        return Err(Error::InvalidCurve(format!(
            "{which}: point ({}, {}) needs a positive finite bitrate and finite quality",
            p.bitrate, p.quality
        )));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.quality.total_cmp(&b.quality));
    for w in sorted.windows(2) {
        if w[1].quality <= w[0].quality || w[1].bitrate <= w[0].bitrate {
            return Err(Error::InvalidCurve(format!(
                "{which}: rate and quality must increase together"
            )));
        }
    }
    Pchip::new(
        sorted.iter().map(|p| p.quality).collect(),
        sorted.iter().map(|p| p.bitrate.ln()).collect(),
    )
}

/// Average bitrate difference of `test` against `anchor` at equal quality, in
/// percent. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let a = log_rate_curve(anchor, "anchor")?;
    let t = log_rate_curve(test, "test")?;
    let (a_lo, a_hi) = a.domain();
    let (t_lo, t_hi) = t.domain();
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if hi <= lo {
        return Err(Error::NoQualityOverlap);
    }
    let diff = (t.integrate(lo, hi) - a.integrate(lo, hi)) / (hi - lo);
    Ok(diff.exp_m1() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor() -> Vec<RdPoint> {
        vec![
            RdPoint::new(1000.0, 70.0),
            RdPoint::new(1800.0, 78.0),
            RdPoint::new(3100.0, 84.5),
            RdPoint::new(5600.0, 89.0),
        ]
    }

    #[test]
    fn interpolant_hits_the_knots() {
        let p = Pchip::new(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 2.0, 2.5, 5.0]).unwrap();
        for (x, y) in [(0.0, 0.0), (1.0, 2.0), (3.0, 2.5), (4.0, 5.0)] {
            assert!((p.eval(x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 5.0], vec![0.0, 0.1, 3.0, 3.1]).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=500 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn integral_of_linear_data_is_exact() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((p.integrate(0.5, 2.5) - 8.0).abs() < 1e-12);
        assert!((p.integrate(2.5, 0.5) + 8.0).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_differ_by_zero() {
        assert_eq!(bd_rate(&anchor(), &anchor()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_scaling_is_recovered() {
        let test: Vec<_> = anchor()
            .iter()
            .map(|p| RdPoint::new(p.bitrate * 1.10, p.quality))
            .collect();
        assert!((bd_rate(&anchor(), &test).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn swapping_curves_inverts_the_ratio() {
        let test = vec![
            RdPoint::new(900.0, 70.5),
            RdPoint::new(1700.0, 79.0),
            RdPoint::new(2800.0, 85.0),
            RdPoint::new(5200.0, 89.5),
        ];
        let ab = bd_rate(&anchor(), &test).unwrap() / 100.0;
        let ba = bd_rate(&test, &anchor()).unwrap() / 100.0;
        assert!((ab + ba / (1.0 + ba)).abs() < 1e-3);
    }

    #[test]
    fn disjoint_quality_ranges_are_rejected() {
        let test: Vec<_> = anchor()
            .iter()
            .map(|p| RdPoint::new(p.bitrate, p.quality - 30.0))
            .collect();
        assert!(matches!(bd_rate(&anchor(), &test), Err(Error::NoQualityOverlap)));
    }

    #[test]
    fn short_or_non_monotone_curves_are_rejected() {
        assert!(bd_rate(&anchor()[..3], &anchor()).is_err());
        let mut bent = anchor();
        bent[2].bitrate = 1500.0;
        assert!(bd_rate(&anchor(), &bent).is_err());
    }
}
