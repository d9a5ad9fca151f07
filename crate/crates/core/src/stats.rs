use serde::Serialize;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

impl Summary {
    /// Two-pass statistics over the values in the given order.
    pub fn from_slice(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, std_dev: f64::NAN, std_error: f64::NAN };
        }
        let mean = pairwise_sum(values) / count as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if count > 1 { pairwise_sum(&sq) / (count - 1) as f64 } else { 0.0 };
        let std_dev = var.sqrt();
        Self { count, mean, std_dev, std_error: std_dev / (count as f64).sqrt() }
    }
}

/// Recursive pairwise summation; the result depends only on the order of `values`.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Ordinary least-squares fit `y ≈ intercept + slope·x`, returned as `(slope, intercept)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_sample() {
        let s = Summary::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std_error - s.std_dev / 2.0).abs() < 1e-15);
        assert_eq!(Summary::from_slice(&[7.0]).std_error, 0.0);
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (m, b) = least_squares_slope(&xs, &ys).unwrap();
        assert!((m + 0.5).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
        assert!(least_squares_slope(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
