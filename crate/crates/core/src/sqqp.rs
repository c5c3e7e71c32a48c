//! Two-stage stochastic quadratic programs with quadratic recourse
//!
//! ```text
//! min ½xᵀQx + cᵀx + E h(x, ξ)   over x ∈ X
//! h(x, ξ) = min ½yᵀPy + dᵀy  s.t.  D y = e(ξ) − C(ξ) x,  y ≥ 0
//! ```
//!
//! The recourse value is computed through a reduced dual in the multipliers of
//! `y ≥ 0` only: with `M = D P^{-1/2}`, `Φ = I − Mᵀ(MMᵀ)⁻¹M`,
//! `H = P^{-1/2} Φ² P^{-1/2}`, `L = P^{-1/2} Mᵀ (MMᵀ)⁻¹` and `g = e − C x`,
//!
//! ```text
//! h = ½ gᵀ(MMᵀ)⁻¹g − ½ dᵀHd + dᵀL g + max_{γ≥0} { −½ γᵀHγ + (Hd − L g)ᵀγ }.
//! ```
//!
//! The `dᵀL g` term comes from eliminating the equality multiplier and
//! vanishes when `d = 0`.
//!
//! A scenario vector stores `e(ξ)` (m2 entries) followed by `C(ξ)` in
//! row-major order (m2·n1 entries).

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{StochasticProgram, Structure};
use crate::qp::{self, DenseQp, NonnegQp};

#[derive(Debug, Clone)]
pub struct SqqpProblem {
    pub q: Matrix,
    pub c: Vector,
    pub p: Matrix,
    pub d: Vector,
    /// Recourse matrix D (m2 × n2).
    pub recourse: Matrix,
    reduction: DualReduction,
}

impl SqqpProblem {
    pub fn new(q: Matrix, c: Vector, p: Matrix, d: Vector, recourse: Matrix) -> Result<Self> {
        let n1 = q.nrows();
        let n2 = p.nrows();
        if q.ncols() != n1 || c.len() != n1 || p.ncols() != n2 || d.len() != n2 || recourse.ncols() != n2 {
            return Err(Error::InvalidInput("SQQP dimensions disagree".into()));
        }
        if linalg::max_asymmetry(&q) > 1e-10 || linalg::min_eigenvalue(&q) <= 0.0 {
            return Err(Error::InvalidInput("Q must be symmetric positive definite".into()));
        }
        let mut prob = SqqpProblem {
            q,
            c,
            p,
            d,
            recourse,
            reduction: DualReduction::empty(),
        };
        prob.reduction = reduce_dual(&prob)?;
        Ok(prob)
    }

    pub fn n1(&self) -> usize {
        self.q.nrows()
    }

    pub fn n2(&self) -> usize {
        self.p.nrows()
    }

    pub fn m2(&self) -> usize {
        self.recourse.nrows()
    }

    pub fn scenario_dim(&self) -> usize {
        self.m2() * (1 + self.n1())
    }

    pub fn reduction(&self) -> &DualReduction {
        &self.reduction
    }

    /// Split a scenario vector into `(e(ξ), C(ξ))`.
    pub fn split_scenario(&self, xi: &Vector) -> (Vector, Matrix) {
        let (m2, n1) = (self.m2(), self.n1());
        let e = Vector::from_iterator(m2, xi.iter().take(m2).copied());
        let c = Matrix::from_row_iterator(m2, n1, xi.iter().skip(m2).take(m2 * n1).copied());
        (e, c)
    }

    pub fn encode_scenario(e: &Vector, c: &Matrix) -> Vector {
        let mut v: Vec<f64> = e.iter().copied().collect();
        for i in 0..c.nrows() {
            v.extend(c.row(i).iter());
        }
        Vector::from_vec(v)
    }

    pub fn first_stage(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    pub fn cost(&self, x: &Vector, xi: &Vector) -> Result<f64> {
        Ok(self.first_stage(x) + solve_recourse_dual(&self.reduction, x, xi, qp::DEFAULT_TOL)?.value)
    }

    pub fn cost_subgradient(&self, x: &Vector, xi: &Vector) -> Result<Vector> {
        let r = solve_recourse_dual(&self.reduction, x, xi, qp::DEFAULT_TOL)?;
        Ok(&self.q * x + &self.c + r.gradient)
    }
}

/// Matrices of the reduced recourse dual.
#[derive(Debug, Clone)]
pub struct DualReduction {
    pub p_inv: Matrix,
    pub p_inv_sqrt: Matrix,
    pub m: Matrix,
    /// `(MMᵀ)⁻¹ = (D P⁻¹ Dᵀ)⁻¹`.
    pub mmt_inv: Matrix,
    pub phi: Matrix,
    pub h: Matrix,
    /// `L = P^{-1/2} Mᵀ (MMᵀ)⁻¹`.
    pub lift: Matrix,
    pub d: Vector,
    pub recourse: Matrix,
    /// `−½ dᵀHd`.
    pub constant: f64,
    /// `Hd`.
    pub hd: Vector,
}

impl DualReduction {
    fn empty() -> Self {
        DualReduction {
            p_inv: Matrix::zeros(0, 0),
            p_inv_sqrt: Matrix::zeros(0, 0),
            m: Matrix::zeros(0, 0),
            mmt_inv: Matrix::zeros(0, 0),
            phi: Matrix::zeros(0, 0),
            h: Matrix::zeros(0, 0),
            lift: Matrix::zeros(0, 0),
            d: Vector::zeros(0),
            recourse: Matrix::zeros(0, 0),
            constant: 0.0,
            hd: Vector::zeros(0),
        }
    }

    pub fn n2(&self) -> usize {
        self.h.nrows()
    }

    pub fn m2(&self) -> usize {
        self.recourse.nrows()
    }

    fn split(&self, xi: &Vector, n1: usize) -> (Vector, Matrix) {
        let m2 = self.m2();
        let e = Vector::from_iterator(m2, xi.iter().take(m2).copied());
        let c = Matrix::from_row_iterator(m2, n1, xi.iter().skip(m2).take(m2 * n1).copied());
        (e, c)
    }

    /// `g(x, ξ) = e(ξ) − C(ξ) x` and `C(ξ)`.
    pub fn rhs(&self, x: &Vector, xi: &Vector) -> (Vector, Matrix) {
        let (e, c) = self.split(xi, x.len());
        (&e - &c * x, c)
    }

    /// Linear term of the reduced dual, `q = Hd − L g`.
    pub fn dual_linear(&self, g: &Vector) -> Vector {
        &self.hd - &self.lift * g
    }

    /// Terms of `h` that do not involve γ: `½ gᵀ(MMᵀ)⁻¹g − ½dᵀHd + dᵀLg`.
    pub fn dual_offset(&self, g: &Vector) -> f64 {
        0.5 * g.dot(&(&self.mmt_inv * g)) + self.constant + self.d.dot(&(&self.lift * g))
    }

    /// Maximizer over λ of the Lagrangian dual for fixed γ.
    pub fn equality_multiplier(&self, gamma: &Vector, g: &Vector) -> Vector {
        let u = gamma - &self.d;
        &self.mmt_inv * (g - &self.recourse * (&self.p_inv * u))
    }
}

pub fn reduce_dual(prob: &SqqpProblem) -> Result<DualReduction> {
    let n2 = prob.n2();
    let m2 = prob.m2();
    if linalg::max_asymmetry(&prob.p) > 1e-10 || linalg::min_eigenvalue(&prob.p) <= 0.0 {
        return Err(Error::InvalidInput("P must be symmetric positive definite".into()));
    }
    if linalg::matrix_rank(&prob.recourse, 1e-10) < m2 {
        return Err(Error::RankDeficient);
    }
    let p_inv_sqrt = linalg::sym_function(&prob.p, |l| 1.0 / l.sqrt());
    let p_inv = linalg::sym_function(&prob.p, |l| 1.0 / l);
    let m = &prob.recourse * &p_inv_sqrt;
    let mmt_inv = (&m * m.transpose()).try_inverse().ok_or(Error::RankDeficient)?;
    let mmt_inv = linalg::symmetrize(&mmt_inv);
    let phi = Matrix::identity(n2, n2) - m.transpose() * &mmt_inv * &m;
    let h = linalg::symmetrize(&(&p_inv_sqrt * &phi * &phi * &p_inv_sqrt));
    let lift = &p_inv_sqrt * m.transpose() * &mmt_inv;
    let hd = &h * &prob.d;
    Ok(DualReduction {
        constant: -0.5 * prob.d.dot(&hd),
        hd,
        p_inv,
        p_inv_sqrt,
        m,
        mmt_inv,
        phi,
        h,
        lift,
        d: prob.d.clone(),
        recourse: prob.recourse.clone(),
    })
}

/// Recourse value with its dual certificate.
#[derive(Debug, Clone)]
pub struct RecourseSolution {
    pub value: f64,
    pub gamma: Vector,
    pub lambda: Vector,
    /// `∇_x h = −C(ξ)ᵀ λ*`.
    pub gradient: Vector,
}

pub fn solve_recourse_dual(red: &DualReduction, x: &Vector, xi: &Vector, tol: f64) -> Result<RecourseSolution> {
    let (g, c) = red.rhs(x, xi);
    let qp = NonnegQp {
        h: red.h.clone(),
        q: red.dual_linear(&g),
        c0: red.dual_offset(&g),
    };
    let sol = match qp::solve_nonneg_qp(&qp, tol) {
        Ok(s) => s,
        Err(Error::DualUnbounded) => return Err(Error::RecourseInfeasible(usize::MAX)),
        Err(e) => return Err(e),
    };
    let lambda = red.equality_multiplier(&sol.point, &g);
    Ok(RecourseSolution {
        value: sol.value,
        gradient: -(c.transpose() * &lambda),
        gamma: sol.point,
        lambda,
    })
}

/// An affine lower bound `intercept + ⟨slope, x⟩ ≤ h(x, ξ)`, valid for all x.
#[derive(Debug, Clone)]
pub struct AffinePiece {
    pub intercept: f64,
    pub slope: Vector,
}

impl AffinePiece {
    pub fn eval(&self, x: &Vector) -> f64 {
        self.intercept + self.slope.dot(x)
    }
}

/// Lagrangian dual function `ψ(γ, λ; ·, ξ)` as an affine function of x.
pub fn dual_piece(red: &DualReduction, gamma: &Vector, lambda: &Vector, xi: &Vector, n1: usize) -> AffinePiece {
    let (e, c) = red.split(xi, n1);
    let s = &red.recourse.transpose() * lambda + gamma - &red.d;
    AffinePiece {
        intercept: -0.5 * s.dot(&(&red.p_inv * &s)) + e.dot(lambda),
        slope: -(c.transpose() * lambda),
    }
}

/// Best dual piece at `x` among those whose γ is supported on `support`:
/// the reduced dual is re-maximized with γ_i = 0 off the support.
pub fn restricted_piece(red: &DualReduction, x: &Vector, xi: &Vector, support: &[bool]) -> Result<AffinePiece> {
    let (g, _) = red.rhs(x, xi);
    let idx: Vec<usize> = (0..support.len()).filter(|&i| support[i]).collect();
    let q = red.dual_linear(&g);
    let mut gamma = Vector::zeros(red.n2());
    if !idx.is_empty() {
        let k = idx.len();
        let sub = NonnegQp {
            h: Matrix::from_fn(k, k, |a, b| red.h[(idx[a], idx[b])]),
            q: Vector::from_iterator(k, idx.iter().map(|&i| q[i])),
            c0: 0.0,
        };
        match qp::solve_nonneg_qp(&sub, qp::DEFAULT_TOL) {
            Ok(s) => {
                for (a, &i) in idx.iter().enumerate() {
                    gamma[i] = s.point[a];
                }
            }
            Err(Error::DualUnbounded) => return Err(Error::RecourseInfeasible(usize::MAX)),
            Err(e) => return Err(e),
        }
    }
    let lambda = red.equality_multiplier(&gamma, &g);
    Ok(dual_piece(red, &gamma, &lambda, xi, x.len()))
}

/// Primal recourse QP solved directly (independent of the reduction).
pub fn solve_recourse_primal(prob: &SqqpProblem, x: &Vector, xi: &Vector) -> Result<(f64, Vector)> {
    let (e, c) = prob.split_scenario(xi);
    let n2 = prob.n2();
    let qp = DenseQp {
        g: prob.p.clone(),
        h: prob.d.clone(),
        eq_mat: prob.recourse.clone(),
        eq_rhs: &e - &c * x,
        ineq_mat: -Matrix::identity(n2, n2),
        ineq_rhs: Vector::zeros(n2),
    };
    match qp::solve_dense_qp(&qp, 1e-9) {
        Ok((y, v)) => Ok((v, y)),
        Err(Error::DualUnbounded) => Err(Error::RecourseInfeasible(usize::MAX)),
        Err(e) => Err(e),
    }
}

/// Deterministic equivalent over all atoms with positive probability.
/// Returns the first-stage minimizer and the optimal value.
pub fn solve_extensive_form(prog: &StochasticProgram) -> Result<(Vector, f64)> {
    let prob = prog
        .sqqp()
        .ok_or_else(|| Error::InvalidInput("extensive form needs a two-stage problem".into()))?;
    let fin = prog.scenarios.as_finite().ok_or(Error::BoundRequiresFiniteSpace)?;
    let (n1, n2, m2) = (prob.n1(), prob.n2(), prob.m2());
    let atoms: Vec<(usize, f64)> =
        fin.probabilities().iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect();
    let k = atoms.len();
    let nv = n1 + k * n2;
    let mut g = Matrix::zeros(nv, nv);
    let mut h = Vector::zeros(nv);
    g.view_mut((0, 0), (n1, n1)).copy_from(&prob.q);
    h.rows_mut(0, n1).copy_from(&prob.c);
    let mut eq_mat = Matrix::zeros(k * m2, nv);
    let mut eq_rhs = Vector::zeros(k * m2);
    let (ra, rb) = prog.region.inequality_rows();
    let mut ineq_mat = Matrix::zeros(ra.nrows() + k * n2, nv);
    let mut ineq_rhs = Vector::zeros(ra.nrows() + k * n2);
    ineq_mat.view_mut((0, 0), (ra.nrows(), n1)).copy_from(&ra);
    ineq_rhs.rows_mut(0, ra.nrows()).copy_from(&rb);
    for (slot, &(atom, pr)) in atoms.iter().enumerate() {
        let off = n1 + slot * n2;
        g.view_mut((off, off), (n2, n2)).copy_from(&(&prob.p * pr));
        h.rows_mut(off, n2).copy_from(&(&prob.d * pr));
        let (e, c) = prob.split_scenario(&fin.atoms()[atom]);
        eq_mat.view_mut((slot * m2, 0), (m2, n1)).copy_from(&c);
        eq_mat.view_mut((slot * m2, off), (m2, n2)).copy_from(&prob.recourse);
        eq_rhs.rows_mut(slot * m2, m2).copy_from(&e);
        for j in 0..n2 {
            ineq_mat[(ra.nrows() + slot * n2 + j, off + j)] = -1.0;
        }
    }
    let qp = DenseQp {
        g,
        h,
        eq_mat,
        eq_rhs,
        ineq_mat,
        ineq_rhs,
    };
    let (v, value) = match qp::solve_dense_qp(&qp, 1e-9) {
        Ok(r) => r,
        Err(Error::DualUnbounded) => return Err(Error::InfeasibleMaster),
        Err(e) => return Err(e),
    };
    Ok((Vector::from_iterator(n1, v.iter().take(n1).copied()), value))
}

/// Curvature bound `‖Q‖ + max_ξ ‖T(ξ)‖` with
/// `T = Cᵀ(MMᵀ)⁻¹C + ΛᵀH⁺Λ`, `Λ = P^{-1/2}Mᵀ(MMᵀ)⁻¹C` (spectral norms).
pub fn hessian_bound_m1(prog: &StochasticProgram) -> Result<f64> {
    if prog.structure() != Structure::TwoStageSqqp {
        return Err(Error::InvalidInput("curvature bound needs a two-stage problem".into()));
    }
    let prob = prog.sqqp().expect("checked");
    let fin = prog.scenarios.as_finite().ok_or(Error::BoundRequiresFiniteSpace)?;
    let red = prob.reduction();
    let h_pinv = linalg::sym_pinv(&red.h, 1e-10);
    let mut worst = 0.0f64;
    for atom in fin.atoms() {
        let (_, c) = prob.split_scenario(atom);
        let lam = &red.lift * &c;
        let t = c.transpose() * &red.mmt_inv * &c + lam.transpose() * &h_pinv * &lam;
        worst = worst.max(linalg::spectral_norm(&t));
    }
    Ok(linalg::spectral_norm(&prob.q) + worst)
}

/// Smallest recourse value found and the count of infeasible recourse solves
/// at `samples` random `(x, ξ)`; relatively complete recourse means zero failures.
pub fn recourse_probe(prog: &StochasticProgram, samples: usize, seed: u64) -> Result<(usize, f64)> {
    let prob = prog
        .sqqp()
        .ok_or_else(|| Error::InvalidInput("recourse probe needs a two-stage problem".into()))?;
    let fin = prog.scenarios.as_finite().ok_or(Error::BoundRequiresFiniteSpace)?;
    let mut r = crate::rng::stream(seed, 0xAC);
    let mut failures = 0;
    let mut lowest = f64::INFINITY;
    for _ in 0..samples {
        let x = prog.region.random_point(&mut r);
        let k = rand::Rng::random_range(&mut r, 0..fin.atoms().len());
        match solve_recourse_dual(prob.reduction(), &x, &fin.atoms()[k], qp::DEFAULT_TOL) {
            Ok(s) => lowest = lowest.min(s.value),
            Err(Error::RecourseInfeasible(_)) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((failures, lowest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn identity_problem(n: usize) -> SqqpProblem {
        SqqpProblem::new(
            Matrix::identity(n, n),
            Vector::zeros(n),
            Matrix::identity(n, n),
            Vector::zeros(n),
            Matrix::identity(n, n),
        )
        .unwrap()
    }

    #[test]
    fn identity_reduction_is_trivial() {
        let prob = identity_problem(2);
        let red = prob.reduction();
        assert!((&red.m - Matrix::identity(2, 2)).norm() < 1e-12);
        assert!(red.phi.norm() < 1e-12);
        assert!(red.h.norm() < 1e-12);
        assert_eq!(red.constant, 0.0);
        let g = v(&[0.7, -0.2]);
        assert!((red.dual_linear(&g) + &g).norm() < 1e-12);
    }

    #[test]
    fn scalar_forced_recourse() {
        // min ½y² s.t. y = 2, y ≥ 0
        let prob = SqqpProblem::new(
            Matrix::identity(1, 1),
            v(&[0.0]),
            Matrix::identity(1, 1),
            v(&[0.0]),
            Matrix::identity(1, 1),
        )
        .unwrap();
        let xi = v(&[2.0, 0.0]);
        let r = solve_recourse_dual(prob.reduction(), &v(&[0.0]), &xi, 1e-10).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonnegative_rhs_gives_half_squared_norm() {
        let prob = identity_problem(2);
        let xi = SqqpProblem::encode_scenario(&v(&[1.0, 2.0]), &Matrix::zeros(2, 2));
        let r = solve_recourse_dual(prob.reduction(), &v(&[0.0, 0.0]), &xi, 1e-10).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!(r.gamma, v(&[0.0, 0.0]));
    }

    #[test]
    fn negative_rhs_is_infeasible() {
        let prob = identity_problem(2);
        let xi = SqqpProblem::encode_scenario(&v(&[-1.0, 2.0]), &Matrix::zeros(2, 2));
        let r = solve_recourse_dual(prob.reduction(), &v(&[0.0, 0.0]), &xi, 1e-10);
        assert!(matches!(r, Err(Error::RecourseInfeasible(_))));
    }

    #[test]
    fn rank_deficient_recourse_matrix_rejected() {
        let r = SqqpProblem::new(
            Matrix::identity(1, 1),
            v(&[0.0]),
            Matrix::identity(2, 2),
            v(&[0.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
        );
        assert_eq!(r.unwrap_err(), Error::RankDeficient);
    }

    #[test]
    fn nonzero_linear_cost_matches_primal() {
        let prob = SqqpProblem::new(
            Matrix::identity(2, 2),
            v(&[0.0, 0.0]),
            Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]),
            v(&[0.4, -0.3, 0.8]),
            Matrix::from_row_slice(1, 3, &[1.0, 2.0, 1.0]),
        )
        .unwrap();
        let xi = SqqpProblem::encode_scenario(&v(&[1.3]), &Matrix::from_row_slice(1, 2, &[0.2, -0.5]));
        let x = v(&[0.3, 0.6]);
        let dual = solve_recourse_dual(prob.reduction(), &x, &xi, 1e-10).unwrap();
        let (primal, _) = solve_recourse_primal(&prob, &x, &xi).unwrap();
        assert!((dual.value - primal).abs() < 1e-9, "{} vs {}", dual.value, primal);
    }
}
