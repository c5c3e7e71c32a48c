use super::distance::{pessimistic_distance, PointSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean, `√(variance / count)`.
    pub stderr: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyRuns);
    }
    if values.len() < 2 {
        return Err(Error::VarianceUndefined);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Summary {
        count: values.len(),
        mean,
        variance,
        stderr: (variance / n).sqrt(),
    })
}

/// Per-run `Δ(outcome, X*_ε)` summarized across macro-replications.
pub fn empirical_delta_stats(outcomes: &[PointSet], target: &PointSet) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(Error::EmptyRuns);
    }
    let deltas: Vec<f64> = outcomes.iter().map(|a| pessimistic_distance(a, target)).collect::<Result<_>>()?;
    summarize(&deltas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `log y = intercept + slope · log x`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidInput("rate fit needs at least three (x, y) pairs".into()));
    }
    if ys.iter().any(|&y| !(y > 0.0)) || xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::CannotFitRate);
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("rate fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2 })
}

/// `mean + ϑ · variance`.
pub fn mean_variance_objective(mean: f64, variance: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidInput("ϑ must be positive".into()));
    }
    Ok(mean + theta * variance)
}

/// Marks `(mean, variance)` pairs not dominated componentwise by another pair
/// (with at least one strict inequality).
pub fn non_dominated(pairs: &[(f64, f64)]) -> Vec<bool> {
    pairs
        .iter()
        .map(|&(a, b)| {
            !pairs
                .iter()
                .any(|&(c, d)| c <= a && d <= b && (c < a || d < b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;

    #[test]
    fn two_runs_hand_arithmetic() {
        let s = summarize(&[0.1, 0.3]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert!((s.variance - 0.02).abs() < 1e-15);
        assert!((s.stderr - (0.02f64 / 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_runs_have_zero_delta() {
        let x = Vector::from_column_slice(&[0.5, 0.5]);
        let target = PointSet::grid_sublevel(vec![x.clone()]);
        let runs = vec![PointSet::singleton(x.clone()), PointSet::singleton(x)];
        let s = empirical_delta_stats(&runs, &target).unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 0.0));
        assert_eq!(empirical_delta_stats(&[], &target).unwrap_err(), Error::EmptyRuns);
    }

    #[test]
    fn exact_power_laws() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let inv: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        let f = fit_rate(&xs, &inv).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let root: Vec<f64> = xs.iter().map(|x| 1.0 / x.sqrt()).collect();
        assert!((fit_rate(&xs, &root).unwrap().slope + 0.5).abs() < 1e-12);
        assert_eq!(fit_rate(&xs, &[1.0, 0.0, 1.0, 1.0]).unwrap_err(), Error::CannotFitRate);
    }

    #[test]
    fn mean_variance_values() {
        assert_eq!(mean_variance_objective(0.4, 0.0, 3.0).unwrap(), 0.4);
        assert!((mean_variance_objective(0.2, 0.02, 5.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(non_dominated(&[(0.1, 0.2), (0.2, 0.3), (0.05, 0.5)]), vec![true, false, true]);
    }
}
