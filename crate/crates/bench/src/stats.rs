use statrs::distribution::{ContinuousCDF, StudentsT};

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty sample");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

pub fn median_u64(xs: &[u64]) -> u64 {
    let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    median(&v).round() as u64
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope; infinite with two points.
    pub slope_stderr: f64,
    pub points: usize,
}

impl LinearFit {
    /// `None` with fewer than two points or constant `x`.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Option<Self> {
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
        let slope_stderr = if n > 2 {
            (sse / (nf - 2.0) / sxx).sqrt()
        } else {
            f64::INFINITY
        };
        Some(Self {
            slope,
            intercept,
            r_squared,
            slope_stderr,
            points: n,
        })
    }

    pub fn t_statistic(&self) -> f64 {
        if self.slope_stderr == 0.0 {
            if self.slope == 0.0 {
                0.0
            } else {
                self.slope.signum() * f64::INFINITY
            }
        } else {
            self.slope / self.slope_stderr
        }
    }

    /// One-sided p-value for `slope > 0`.
    pub fn p_value_positive(&self) -> f64 {
        if self.points <= 2 {
            return 1.0;
        }
        let t = self.t_statistic();
        if t.is_infinite() {
            return if t > 0.0 { 0.0 } else { 1.0 };
        }
        let dist = StudentsT::new(0.0, 1.0, (self.points - 2) as f64).expect("positive degrees of freedom");
        1.0 - dist.cdf(t)
    }

    /// Whether the slope is above zero at significance `alpha`.
    pub fn slope_significantly_positive(&self, alpha: f64) -> bool {
        self.p_value_positive() < alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median_u64(&[10, 30, 20]), 20);
    }

    #[test]
    fn exact_line() {
        let f = LinearFit::fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_significantly_positive(0.05));
    }

    #[test]
    fn flat_noise_is_not_significant() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [2.0, 2.1, 1.9, 2.05, 1.95, 2.0];
        let f = LinearFit::fit(&xs, &ys).unwrap();
        assert!(!f.slope_significantly_positive(0.05));
    }

    #[test]
    fn p_value_against_table() {
        // t = 2.015 is the one-sided 5% point with five degrees of freedom.
        let f = LinearFit {
            slope: 2.015,
            intercept: 0.0,
            r_squared: 0.0,
            slope_stderr: 1.0,
            points: 7,
        };
        assert!((f.p_value_positive() - 0.05).abs() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(LinearFit::fit(&[1.0], &[1.0]).is_none());
        assert!(LinearFit::fit(&[1.0, 1.0], &[1.0, 2.0]).is_none());
        assert_eq!(LinearFit::fit(&[1.0, 2.0], &[1.0, 2.0]).unwrap().p_value_positive(), 1.0);
    }
}
