//! Dense convex QP engine: nonnegativity-constrained QP maximization (the
//! reduced recourse dual), prox-regularized piecewise-linear minimization over
//! a box or polyhedron (every master problem), Euclidean projection, a general
//! strictly convex QP used as an independent oracle, and a small LP wrapper for
//! pure cutting-plane masters.

mod active_set;
mod lp;

pub use lp::minimize_polyhedral;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::FeasibleRegion;
use active_set::{Failure, Group, Problem};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-8;

/// An affine function `α + ⟨β, x⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Cut {
    pub fn new(alpha: f64, beta: &Vector) -> Self {
        Cut {
            alpha,
            beta: beta.iter().copied().collect(),
        }
    }

    /// Linearization `f(x0) + ⟨g, x − x0⟩`.
    pub fn at(value: f64, gradient: &Vector, x0: &Vector) -> Self {
        Cut::new(value - gradient.dot(x0), gradient)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.alpha + self.beta.iter().zip(x.iter()).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn slope(&self) -> Vector {
        Vector::from_column_slice(&self.beta)
    }

    pub fn scaled(&self, s: f64) -> Cut {
        Cut {
            alpha: self.alpha * s,
            beta: self.beta.iter().map(|b| b * s).collect(),
        }
    }

    pub fn lowered(&self, by: f64) -> Cut {
        Cut {
            alpha: self.alpha - by,
            beta: self.beta.clone(),
        }
    }

    pub fn near(&self, other: &Cut, tol: f64) -> bool {
        (self.alpha - other.alpha).abs() <= tol
            && self.beta.len() == other.beta.len()
            && self.beta.iter().zip(&other.beta).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Value of `max_ℓ cut_ℓ(x)`; `-∞` for an empty list.
pub fn max_of_cuts(cuts: &[Cut], x: &Vector) -> f64 {
    cuts.iter().map(|c| c.eval(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// `max_{γ≥0} −½ γᵀHγ + qᵀγ + c0`.
#[derive(Debug, Clone)]
pub struct NonnegQp {
    pub h: Matrix,
    pub q: Vector,
    pub c0: f64,
}

impl NonnegQp {
    pub fn new(h: Matrix, q: Vector, c0: f64) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() != q.len() {
            return Err(Error::InvalidInput("NonnegQp dimensions disagree".into()));
        }
        if linalg::max_asymmetry(&h) > 1e-10 {
            return Err(Error::InvalidInput("H is not symmetric".into()));
        }
        if linalg::min_eigenvalue(&h) < -1e-10 {
            return Err(Error::InvalidInput("H is not positive semidefinite".into()));
        }
        Ok(NonnegQp { h, q, c0 })
    }

    pub fn objective(&self, gamma: &Vector) -> f64 {
        -0.5 * gamma.dot(&(&self.h * gamma)) + self.q.dot(gamma) + self.c0
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub point: Vector,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Reduced costs for [`solve_nonneg_qp`]; cut multipliers (in input order,
    /// group by group) for [`solve_prox_master`].
    pub multipliers: Vector,
}

fn iteration_cap(n: usize) -> usize {
    200 + 40 * n
}

pub fn solve_nonneg_qp(qp: &NonnegQp, tol: f64) -> Result<QpSolution> {
    let n = qp.q.len();
    let unrestricted = vec![false; n];
    let problem = Problem {
        w: &qp.h,
        lin: &qp.q,
        unrestricted: &unrestricted,
        groups: &[],
    };
    let solved = match active_set::minimize(&problem, Vector::zeros(n), iteration_cap(n)) {
        Ok(s) => s,
        Err(Failure::Unbounded) => return Err(Error::DualUnbounded),
        Err(Failure::IterationLimit) => return Err(Error::NotConverged("nonnegative QP iteration cap".into())),
    };
    if solved.kkt > tol {
        return Err(Error::NotConverged(format!("nonnegative QP KKT residual {:.3e}", solved.kkt)));
    }
    Ok(QpSolution {
        value: qp.objective(&solved.z),
        point: solved.z,
        kkt_residual: solved.kkt,
        iterations: solved.iterations,
        multipliers: solved.reduced_costs,
    })
}

/// A weighted block of cuts: contributes `weight · max_ℓ cut_ℓ(x)`.
#[derive(Debug, Clone)]
pub struct CutGroup {
    pub weight: f64,
    pub cuts: Vec<Cut>,
}

/// `min_X Σ_g w_g max_{ℓ∈g}(α_ℓ + ⟨β_ℓ, x⟩) + ½xᵀQx + cᵀx + (ρ/2)‖x − x̄‖²`.
#[derive(Debug, Clone)]
pub struct ProxMaster {
    pub groups: Vec<CutGroup>,
    pub region: FeasibleRegion,
    pub rho: f64,
    pub anchor: Vector,
    pub quadratic: Option<(Matrix, Vector)>,
}

impl ProxMaster {
    /// The plain form: one max-of-cuts term.
    pub fn new(cuts: Vec<Cut>, region: FeasibleRegion, rho: f64, anchor: Vector) -> Self {
        let groups = if cuts.is_empty() {
            Vec::new()
        } else {
            vec![CutGroup { weight: 1.0, cuts }]
        };
        ProxMaster {
            groups,
            region,
            rho,
            anchor,
            quadratic: None,
        }
    }

    pub fn with_quadratic(mut self, q: Matrix, c: Vector) -> Self {
        self.quadratic = Some((q, c));
        self
    }

    /// Objective without the prox term.
    pub fn model_value(&self, x: &Vector) -> f64 {
        let mut v: f64 = self.groups.iter().map(|g| g.weight * max_of_cuts(&g.cuts, x)).sum();
        if let Some((q, c)) = &self.quadratic {
            v += 0.5 * x.dot(&(q * x)) + c.dot(x);
        }
        v
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        self.model_value(x) + 0.5 * self.rho * (x - &self.anchor).norm_squared()
    }
}

pub fn solve_prox_master(m: &ProxMaster, tol: f64) -> Result<QpSolution> {
    if !(m.rho > 0.0) {
        return Err(Error::InvalidInput("prox weight must be positive".into()));
    }
    if m.anchor.len() != m.region.dim() {
        return Err(Error::InvalidInput("anchor dimension".into()));
    }
    solve_master_unchecked(m, tol)
}

/// Master solve without the `ρ > 0` and anchor checks; requires `ρI + Q` to be
/// positive definite.
pub(crate) fn solve_master_unchecked(m: &ProxMaster, tol: f64) -> Result<QpSolution> {
    let p = m.region.dim();
    if m.groups.iter().any(|g| g.cuts.is_empty()) {
        return Err(Error::InvalidInput("empty cut group".into()));
    }
    if m.groups.is_empty() && m.quadratic.is_none() {
        return Err(Error::InvalidInput("master needs a cut or a quadratic term".into()));
    }
    let mut hess = Matrix::identity(p, p) * m.rho;
    let mut lin = -&m.anchor * m.rho;
    if let Some((q, c)) = &m.quadratic {
        hess += q;
        lin += c;
    }
    let chol = linalg::symmetrize(&hess)
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("master Hessian is not positive definite".into()))?;

    let (region_a, region_b) = m.region.inequality_rows();
    let ncuts: usize = m.groups.iter().map(|g| g.cuts.len()).sum();
    let nrows = ncuts + region_a.nrows();
    let mut rows = Matrix::zeros(nrows, p);
    let mut offsets = Vector::zeros(nrows);
    let mut groups = Vec::with_capacity(m.groups.len());
    let mut r = 0;
    for g in &m.groups {
        let start = r;
        for cut in &g.cuts {
            for j in 0..p {
                rows[(r, j)] = cut.beta[j];
            }
            offsets[r] = cut.alpha;
            r += 1;
        }
        groups.push(Group {
            members: (start..r).collect(),
            total: g.weight,
        });
    }
    for i in 0..region_a.nrows() {
        rows.set_row(r, &region_a.row(i));
        offsets[r] = -region_b[i];
        r += 1;
    }

    // Dual: minimize ½ zᵀ(R G⁻¹ Rᵀ)z − (o − R G⁻¹ h)ᵀ z over z ≥ 0 with group totals.
    let y = chol.l().solve_lower_triangular(&rows.transpose()).expect("triangular solve");
    let w = y.transpose() * &y;
    let ginv_h = chol.solve(&lin);
    let dual_lin = &offsets - &rows * &ginv_h;
    let unrestricted = vec![false; nrows];

    // Warm start: the cut of each group that is largest at the anchor.
    let mut start = Vector::zeros(nrows);
    for (g, grp) in m.groups.iter().zip(&groups) {
        let best = grp
            .members
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let va = g.cuts[a - grp.members[0]].eval(&m.anchor);
                let vb = g.cuts[b - grp.members[0]].eval(&m.anchor);
                va.total_cmp(&vb)
            })
            .unwrap();
        start[best] = g.weight;
    }
    let problem = Problem {
        w: &w,
        lin: &dual_lin,
        unrestricted: &unrestricted,
        groups: &groups,
    };
    let solved = match active_set::minimize(&problem, start, iteration_cap(nrows)) {
        Ok(s) => s,
        Err(Failure::Unbounded) => return Err(Error::InfeasibleMaster),
        Err(Failure::IterationLimit) => return Err(Error::NotConverged("master iteration cap".into())),
    };
    let x = -chol.solve(&(&lin + rows.transpose() * &solved.z));
    let region_violation = m.region.violation(&x);
    let kkt = solved.kkt.max(region_violation);
    if kkt > tol {
        return Err(Error::NotConverged(format!("master KKT residual {kkt:.3e}")));
    }
    let multipliers = Vector::from_iterator(ncuts, solved.z.iter().take(ncuts).copied());
    Ok(QpSolution {
        value: m.objective(&x),
        point: x,
        kkt_residual: kkt,
        iterations: solved.iterations,
        multipliers,
    })
}

pub fn project_onto_region(x: &Vector, region: &FeasibleRegion) -> Result<Vector> {
    if x.len() != region.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    if let Some((lower, upper)) = region.box_bounds() {
        return Ok(Vector::from_iterator(
            x.len(),
            x.iter().zip(lower.iter().zip(upper.iter())).map(|(v, (l, u))| v.clamp(*l, *u)),
        ));
    }
    // ½‖y‖² − xᵀy with no cuts: a master with ρ = 1 anchored at x.
    let m = ProxMaster {
        groups: Vec::new(),
        region: region.clone(),
        rho: 1.0,
        anchor: x.clone(),
        quadratic: Some((Matrix::zeros(x.len(), x.len()), Vector::zeros(x.len()))),
    };
    match solve_master_unchecked(&m, DEFAULT_TOL) {
        Ok(s) => Ok(s.point),
        Err(Error::InfeasibleMaster) => Err(Error::InfeasibleRegion),
        Err(e) => Err(e),
    }
}

/// `min ½ vᵀGv + hᵀv  s.t.  E v = f,  C v ≤ u` with `G` positive definite,
/// solved through its dual. Returns the primal minimizer and value.
pub struct DenseQp {
    pub g: Matrix,
    pub h: Vector,
    pub eq_mat: Matrix,
    pub eq_rhs: Vector,
    pub ineq_mat: Matrix,
    pub ineq_rhs: Vector,
}

pub fn solve_dense_qp(qp: &DenseQp, tol: f64) -> Result<(Vector, f64)> {
    let n = qp.h.len();
    let ne = qp.eq_mat.nrows();
    let ni = qp.ineq_mat.nrows();
    let chol = linalg::symmetrize(&qp.g)
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("QP Hessian is not positive definite".into()))?;
    let mut rows = Matrix::zeros(ne + ni, n);
    let mut rhs = Vector::zeros(ne + ni);
    for i in 0..ne {
        rows.set_row(i, &qp.eq_mat.row(i));
        rhs[i] = qp.eq_rhs[i];
    }
    for i in 0..ni {
        rows.set_row(ne + i, &qp.ineq_mat.row(i));
        rhs[ne + i] = qp.ineq_rhs[i];
    }
    let y = chol.l().solve_lower_triangular(&rows.transpose()).expect("triangular solve");
    let w = y.transpose() * &y;
    let dual_lin = -(&rows * chol.solve(&qp.h) + &rhs);
    let unrestricted: Vec<bool> = (0..ne + ni).map(|i| i < ne).collect();
    let problem = Problem {
        w: &w,
        lin: &dual_lin,
        unrestricted: &unrestricted,
        groups: &[],
    };
    let solved = match active_set::minimize(&problem, Vector::zeros(ne + ni), iteration_cap(ne + ni)) {
        Ok(s) => s,
        Err(Failure::Unbounded) => return Err(Error::DualUnbounded),
        Err(Failure::IterationLimit) => return Err(Error::NotConverged("dense QP iteration cap".into())),
    };
    let v = -chol.solve(&(&qp.h + rows.transpose() * &solved.z));
    let eq_res = if ne > 0 { linalg::norm_inf(&(&qp.eq_mat * &v - &qp.eq_rhs)) } else { 0.0 };
    let ineq_res = if ni > 0 {
        (&qp.ineq_mat * &v - &qp.ineq_rhs).iter().fold(0.0f64, |a, &b| a.max(b))
    } else {
        0.0
    };
    let scale = 1.0 + linalg::norm_inf(&qp.eq_rhs).max(linalg::norm_inf(&qp.ineq_rhs));
    if solved.kkt.max(eq_res).max(ineq_res) > tol * scale {
        return Err(Error::NotConverged(format!(
            "dense QP residual {:.3e}",
            solved.kkt.max(eq_res).max(ineq_res)
        )));
    }
    let value = 0.5 * v.dot(&(&qp.g * &v)) + qp.h.dot(&v);
    Ok((v, value))
}
