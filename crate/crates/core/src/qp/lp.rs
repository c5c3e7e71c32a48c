use super::CutGroup;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::FeasibleRegion;
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Exact minimizer of `Σ_g w_g max_{ℓ∈g}(α_ℓ + ⟨β_ℓ, x⟩)` over `X`, through the
/// epigraph LP. Returns a vertex minimizer and the optimal value.
pub fn minimize_polyhedral(groups: &[CutGroup], region: &FeasibleRegion) -> Result<(Vector, f64)> {
    if groups.is_empty() || groups.iter().any(|g| g.cuts.is_empty()) {
        return Err(Error::InvalidInput("polyhedral model needs cuts in every group".into()));
    }
    let p = region.dim();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let (lower, upper) = match region.box_bounds() {
        Some((l, u)) => (l.clone(), u.clone()),
        None => (Vector::repeat(p, f64::NEG_INFINITY), Vector::repeat(p, f64::INFINITY)),
    };
    let xs: Vec<_> = (0..p).map(|j| lp.add_var(0.0, (lower[j], upper[j]))).collect();
    if region.box_bounds().is_none() {
        let (a, b) = region.inequality_rows();
        for i in 0..a.nrows() {
            let terms: Vec<_> = (0..p).map(|j| (xs[j], a[(i, j)])).collect();
            lp.add_constraint(&terms[..], ComparisonOp::Le, b[i]);
        }
    }
    for g in groups {
        let t = lp.add_var(g.weight, (f64::NEG_INFINITY, f64::INFINITY));
        for cut in &g.cuts {
            let mut terms: Vec<_> = (0..p).map(|j| (xs[j], cut.beta[j])).collect();
            terms.push((t, -1.0));
            lp.add_constraint(&terms[..], ComparisonOp::Le, -cut.alpha);
        }
    }
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Err(Error::InfeasibleMaster),
        Err(minilp::Error::Unbounded) => {
            return Err(Error::InvalidInput("polyhedral model unbounded below".into()))
        }
    };
    let mut x = Vector::from_iterator(p, xs.iter().map(|&v| sol[v]));
    if let Some((l, u)) = region.box_bounds() {
        for j in 0..p {
            x[j] = x[j].clamp(l[j], u[j]);
        }
    }
    let value = groups.iter().map(|g| g.weight * super::max_of_cuts(&g.cuts, &x)).sum();
    Ok((x, value))
}
