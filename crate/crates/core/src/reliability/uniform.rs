use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{SampleSet, StochasticProgram};

/// Uniform deviations of sample averages from their expectations, with every
/// supremum taken over a grid (so each is a lower bound on the true sup).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationProfile {
    /// `sup_x |f_n(x) − f(x)|`.
    pub delta_f: f64,
    /// `sup_{x, y} |(1/n) Σ (F(x,ξ_i) − y)² − E (F(x,ξ) − y)²|`, y on a grid of `[−M_F, M_F]`.
    pub delta_hat: f64,
    /// `sup_x |s²_n(x) − σ²(x)|`.
    pub variance_gap: f64,
}

pub fn deviation_profile(
    prob: &StochasticProgram,
    samples: &SampleSet,
    grid: &[Vector],
    y_points: usize,
) -> Result<DeviationProfile> {
    let fin = prob.scenarios.as_finite().ok_or(Error::ExactExpectationUnavailable)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::VarianceUndefined);
    }
    if y_points < 2 {
        return Err(Error::InvalidInput("need at least two y grid points".into()));
    }
    let mf = prob.constants.bound;
    let ys: Vec<f64> = (0..y_points)
        .map(|k| -mf + 2.0 * mf * k as f64 / (y_points - 1) as f64)
        .collect();
    let nf = n as f64;
    let mut delta_f = 0.0f64;
    let mut delta_hat = 0.0f64;
    let mut variance_gap = 0.0f64;
    for x in grid {
        let sample_vals: Vec<f64> =
            samples.realizations.iter().map(|xi| prob.cost_unchecked(x, xi)).collect::<Result<_>>()?;
        let atom_vals: Vec<f64> = fin.atoms().iter().map(|a| prob.cost_unchecked(x, a)).collect::<Result<_>>()?;
        let probs = fin.probabilities();
        let fn_x = sample_vals.iter().sum::<f64>() / nf;
        let f_x: f64 = atom_vals.iter().zip(probs).map(|(v, p)| v * p).sum();
        delta_f = delta_f.max((fn_x - f_x).abs());
        let s2 = sample_vals.iter().map(|v| (v - fn_x).powi(2)).sum::<f64>() / (nf - 1.0);
        let sigma2: f64 = atom_vals.iter().zip(probs).map(|(v, p)| p * (v - f_x).powi(2)).sum();
        variance_gap = variance_gap.max((s2 - sigma2).abs());
        for &y in &ys {
            let emp = sample_vals.iter().map(|v| (v - y).powi(2)).sum::<f64>() / nf;
            let exp: f64 = atom_vals.iter().zip(probs).map(|(v, p)| p * (v - y).powi(2)).sum();
            delta_hat = delta_hat.max((emp - exp).abs());
        }
    }
    Ok(DeviationProfile {
        delta_f,
        delta_hat,
        variance_gap,
    })
}
