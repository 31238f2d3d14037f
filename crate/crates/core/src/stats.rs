//! Small statistical helpers: normal quantiles and least-squares lines.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::Scalar;

/// Two-sided normal quantile `z` with `P(|Z| ≤ z) = level`.
pub fn two_sided_z(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Default confidence level for half-widths (≈ 3σ).
pub const DEFAULT_CONFIDENCE: f64 = 0.997;

/// Ordinary least-squares fit `y = intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit<S> {
    pub slope: S,
    pub intercept: S,
    /// Standard error of the slope from the residual variance.
    pub slope_stderr: S,
    pub r_squared: S,
    pub points: usize,
}

pub fn fit_line<S: Scalar>(xs: &[S], ys: &[S]) -> Result<LineFit<S>> {
    if xs.len() != ys.len() {
        return Err(Error::Shape { expected: xs.len(), got: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs 2 points, got {n}")));
    }
    let nf = S::from_count(n);
    let mx = xs.iter().copied().sum::<S>() / nf;
    let my = ys.iter().copied().sum::<S>() / nf;
    let sxx: S = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: S = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let syy: S = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if sxx <= S::zero() {
        return Err(Error::InsufficientData("line fit needs two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: S = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let slope_stderr = if n > 2 { (sse / S::from_count(n - 2) / sxx).sqrt() } else { S::zero() };
    let r_squared = if syy > S::zero() { S::one() - sse / syy } else { S::one() };
    Ok(LineFit { slope, intercept, slope_stderr, r_squared, points: n })
}

/// Standard error of the mean of independent batch estimates.
pub fn batch_standard_error<S: Scalar>(estimates: &[S]) -> Result<S> {
    if estimates.len() < 2 {
        return Err(Error::InsufficientData(format!("need ≥ 2 batches, got {}", estimates.len())));
    }
    let b = S::from_count(estimates.len());
    let mean = estimates.iter().copied().sum::<S>() / b;
    let ss = estimates.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>();
    Ok((ss / (b - S::one())).sqrt() / b.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_for_three_sigma_level() {
        assert!((two_sided_z(0.997) - 2.9677).abs() < 1e-3);
        assert!((two_sided_z(0.95) - 1.95996).abs() < 1e-4);
    }

    #[test]
    fn exact_line_recovered() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_error() {
        let se = batch_standard_error(&[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!(batch_standard_error(&[1.0f64]).is_err());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0f64], &[2.0]).is_err());
        assert!(fit_line(&[1.0f64, 1.0], &[2.0, 3.0]).is_err());
    }
}
