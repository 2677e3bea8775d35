//! Shape-preserving cubic interpolation.
//!
//! Node slopes follow Fritsch and Carlson: weighted harmonic means of the
//! neighboring secants in the interior (zero across a local extremum),
//! three-point one-sided estimates clamped at the ends. Monotone data yields
//! a monotone interpolant, which is what lets a derivative of an
//! entropy-energy curve be read as a temperature without spurious wiggles.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} abscissae vs {} ordinates",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 nodes".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite node".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }

        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();

        let mut slopes = vec![0.0; n];
        for k in 1..n - 1 {
            if d[k - 1] * d[k] <= 0.0 {
                slopes[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
            }
        }
        slopes[0] = endpoint_slope(h[0], h.get(1).copied(), d[0], d.get(1).copied());
        slopes[n - 1] = endpoint_slope(
            h[n - 2],
            (n >= 3).then(|| h[n - 3]),
            d[n - 2],
            (n >= 3).then(|| d[n - 3]),
        );
        Ok(MonotoneCubic { x, y, slopes })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn locate(&self, q: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(q >= lo && q <= hi) {
            return Err(Error::QueryOutOfRange { q, lo, hi });
        }
        // last interval owns the right endpoint
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&q).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok(k.min(self.x.len() - 2))
    }

    pub fn value(&self, q: f64) -> Result<f64> {
        let k = self.locate(q)?;
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.y[k]
            + h10 * h * self.slopes[k]
            + h01 * self.y[k + 1]
            + h11 * h * self.slopes[k + 1])
    }

    pub fn derivative(&self, q: f64) -> Result<f64> {
        let k = self.locate(q)?;
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let t2 = t * t;
        Ok((6.0 * t2 - 6.0 * t) * (self.y[k] - self.y[k + 1]) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[k]
            + (3.0 * t2 - 2.0 * t) * self.slopes[k + 1])
    }
}

fn endpoint_slope(h0: f64, h1: Option<f64>, d0: f64, d1: Option<f64>) -> f64 {
    let (Some(h1), Some(d1)) = (h1, d1) else {
        // two nodes: the secant is all there is
        return d0;
    };
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reproduces_linear_data_exactly() {
        let x: Vec<f64> = vec![0.0, 1.0, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = MonotoneCubic::new(x, y).unwrap();
        for q in [0.0, 0.3, 1.7, 2.5, 3.9, 4.0] {
            assert_abs_diff_eq!(f.value(q).unwrap(), 3.0 * q - 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.derivative(q).unwrap(), 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolates_through_the_nodes() {
        let x = vec![0.0, 0.5, 1.2, 2.0, 3.3];
        let y = vec![1.0, 0.2, 0.9, -0.4, 2.2];
        let f = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_abs_diff_eq!(f.value(*xi).unwrap(), *yi, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let x = vec![0.0, 0.1, 0.4, 1.0, 1.5, 3.0, 3.2];
        let y = vec![0.0, 0.05, 0.3, 0.32, 1.4, 1.45, 2.0];
        let f = MonotoneCubic::new(x, y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=2000 {
            let q = 3.2 * k as f64 / 2000.0;
            let v = f.value(q).unwrap();
            assert!(v >= prev - 1e-12, "dip at {q}: {v} < {prev}");
            assert!(f.derivative(q).unwrap() >= -1e-12);
            prev = v;
        }
    }

    #[test]
    fn flat_section_keeps_zero_slope() {
        let f = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 2.0, 2.5]).unwrap();
        assert_abs_diff_eq!(f.value(1.5).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.derivative(1.5).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_out_of_range_queries() {
        let f = MonotoneCubic::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(f.value(-0.1), Err(Error::QueryOutOfRange { .. })));
        assert!(matches!(f.derivative(1.1), Err(Error::QueryOutOfRange { .. })));
    }

    #[test]
    fn rejects_unsorted_or_short_input() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneCubic::new(vec![1.0], vec![2.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 0.5], vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn quadratic_derivative_is_captured_well_inside_the_grid() {
        let x: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let f = MonotoneCubic::new(x, y).unwrap();
        for q in [0.35, 0.8, 1.23, 1.7] {
            assert!((f.derivative(q).unwrap() - 2.0 * q).abs() < 0.02);
        }
    }
}
