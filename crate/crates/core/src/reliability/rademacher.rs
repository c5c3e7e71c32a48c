use rand::Rng;

use super::bounds::{constant_nf, BoundConstants};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{SampleSet, StochasticProgram};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RademacherMode {
    /// All 2ⁿ sign vectors (n ≤ 20).
    Exact,
    /// `draws` seeded sign vectors.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherEstimate {
    pub value: f64,
    /// Standard error (Monte Carlo only).
    pub stderr: Option<f64>,
    /// `max_j ‖a_j‖ √(2 ln 2N) / n`.
    pub massart_bound: f64,
}

pub fn massart_bound(set: &[Vec<f64>]) -> f64 {
    let n = set.first().map_or(0, |a| a.len());
    if n == 0 {
        return 0.0;
    }
    let max_norm = set
        .iter()
        .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    max_norm * (2.0 * (2.0 * set.len() as f64).ln()).sqrt() / n as f64
}

fn sup_abs(set: &[Vec<f64>], signs: &[f64]) -> f64 {
    set.iter()
        .map(|a| a.iter().zip(signs).map(|(v, s)| v * s).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// `R_n(A) = E_σ sup_{a∈A} (1/n) |Σ σ_i a_i|` for a finite set of vectors.
pub fn rademacher_finite(set: &[Vec<f64>], mode: RademacherMode) -> Result<RademacherEstimate> {
    let n = set.first().map_or(0, |a| a.len());
    if set.is_empty() || n == 0 || set.iter().any(|a| a.len() != n) {
        return Err(Error::InvalidInput("vectors must be nonempty with a common length".into()));
    }
    let nf = n as f64;
    let bound = massart_bound(set);
    match mode {
        RademacherMode::Exact => {
            if n > 20 {
                return Err(Error::EnumerationTooLarge);
            }
            let mut signs = vec![0.0; n];
            let mut total = 0.0;
            for mask in 0u32..(1u32 << n) {
                for (i, s) in signs.iter_mut().enumerate() {
                    *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                }
                total += sup_abs(set, &signs);
            }
            Ok(RademacherEstimate {
                value: total / (1u64 << n) as f64 / nf,
                stderr: None,
                massart_bound: bound,
            })
        }
        RademacherMode::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::InvalidInput("need at least two Monte Carlo draws".into()));
            }
            let mut r = rng::stream(seed, 0x5A);
            let mut signs = vec![0.0; n];
            let mut vals = Vec::with_capacity(draws);
            for _ in 0..draws {
                for s in signs.iter_mut() {
                    *s = if r.random::<bool>() { 1.0 } else { -1.0 };
                }
                vals.push(sup_abs(set, &signs) / nf);
            }
            let mean = vals.iter().sum::<f64>() / draws as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            Ok(RademacherEstimate {
                value: mean,
                stderr: Some((var / draws as f64).sqrt()),
                massart_bound: bound,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionClassEstimate {
    /// Grid lower bound on `R_n(F, ξⁿ)` (the supremum runs over grid points only).
    pub grid_lower_bound: RademacherEstimate,
    /// `N_F / n^λ`, when constants are supplied.
    pub complexity_bound: Option<f64>,
}

/// Rademacher average of `{F(x, ·) : x ∈ X}` on a sample, with the sup over X
/// restricted to a grid.
pub fn rademacher_function_class(
    prob: &StochasticProgram,
    samples: &SampleSet,
    grid_step: f64,
    mode: RademacherMode,
    constants: Option<&BoundConstants>,
) -> Result<FunctionClassEstimate> {
    let grid = prob.region.grid(grid_step)?;
    let set: Vec<Vec<f64>> = grid
        .iter()
        .map(|x| samples.realizations.iter().map(|xi| prob.cost_unchecked(x, xi)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let est = rademacher_finite(&set, mode)?;
    let complexity_bound = match constants {
        Some(bc) => Some(constant_nf(bc)? / (samples.len() as f64).powf(bc.lambda)),
        None => None,
    };
    Ok(FunctionClassEstimate {
        grid_lower_bound: est,
        complexity_bound,
    })
}

#[allow(dead_code)]
fn as_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_scalar() {
        let r = rademacher_finite(&[vec![3.0]], RademacherMode::Exact).unwrap();
        assert_eq!(r.value, 3.0);
    }

    #[test]
    fn pair_of_ones() {
        let r = rademacher_finite(&[vec![1.0, 1.0]], RademacherMode::Exact).unwrap();
        assert_eq!(r.value, 0.5);
        assert!(r.value <= r.massart_bound);
    }

    #[test]
    fn too_large_for_enumeration() {
        let r = rademacher_finite(&[vec![1.0; 21]], RademacherMode::Exact);
        assert_eq!(r.unwrap_err(), Error::EnumerationTooLarge);
    }

    #[test]
    fn monte_carlo_close_to_exact() {
        let set = vec![vec![1.0, -2.0, 0.5, 0.3, 1.1, -0.7], vec![0.2, 0.2, -1.0, 2.0, 0.0, 0.4]];
        let exact = rademacher_finite(&set, RademacherMode::Exact).unwrap();
        let mc = rademacher_finite(&set, RademacherMode::MonteCarlo { draws: 4000, seed: 9 }).unwrap();
        assert!((exact.value - mc.value).abs() <= 3.0 * mc.stderr.unwrap());
    }
}
