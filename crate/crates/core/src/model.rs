//! Stochastic programs: feasible regions, scenario spaces, seeded sampling,
//! cost and subgradient oracles, and brute-force ground truth on a grid.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::qp::{self, ProxMaster};
use crate::reliability::PointSet;
use crate::rng;
use crate::sqqp::SqqpProblem;

pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum RegionKind {
    Box { lower: Vector, upper: Vector },
    Polyhedron { a: Matrix, b: Vector },
}

/// A nonempty compact convex set: a box, or a bounded polyhedron `A x ≤ b`.
#[derive(Debug, Clone)]
pub struct FeasibleRegion {
    kind: RegionKind,
    dim: usize,
    /// Upper bound on pairwise distances (D_X).
    diameter: f64,
    /// Edge length of an enclosing cube (D).
    edge: f64,
    bbox_lower: Vector,
    bbox_upper: Vector,
}

impl FeasibleRegion {
    pub fn cube(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput("box bounds must have equal positive length".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InfeasibleRegion);
        }
        let width = &upper - &lower;
        Ok(FeasibleRegion {
            dim: lower.len(),
            diameter: width.norm(),
            edge: width.iter().fold(0.0f64, |a, &b| a.max(b)),
            bbox_lower: lower.clone(),
            bbox_upper: upper.clone(),
            kind: RegionKind::Box { lower, upper },
        })
    }

    pub fn unit_box(p: usize) -> Self {
        FeasibleRegion::cube(Vector::zeros(p), Vector::repeat(p, 1.0)).expect("unit box")
    }

    /// `{x : A x ≤ b}`; nonemptiness and boundedness are checked with one LP per
    /// coordinate direction, which also yields the bounding box used for D and D_X.
    pub fn polyhedron(a: Matrix, b: Vector) -> Result<Self> {
        let p = a.ncols();
        if a.nrows() != b.len() || p == 0 {
            return Err(Error::InvalidInput("polyhedron dimensions disagree".into()));
        }
        let mut lower = Vector::zeros(p);
        let mut upper = Vector::zeros(p);
        for j in 0..p {
            for (sign, out) in [(1.0, &mut lower), (-1.0, &mut upper)] {
                let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
                let xs: Vec<_> = (0..p)
                    .map(|k| lp.add_var(if k == j { sign } else { 0.0 }, (f64::NEG_INFINITY, f64::INFINITY)))
                    .collect();
                for i in 0..a.nrows() {
                    let terms: Vec<_> = (0..p).map(|k| (xs[k], a[(i, k)])).collect();
                    lp.add_constraint(&terms[..], minilp::ComparisonOp::Le, b[i]);
                }
                match lp.solve() {
                    Ok(sol) => out[j] = sol[xs[j]],
                    Err(minilp::Error::Infeasible) => return Err(Error::InfeasibleRegion),
                    Err(minilp::Error::Unbounded) => {
                        return Err(Error::InvalidInput("polyhedron is unbounded".into()))
                    }
                }
            }
        }
        let width = &upper - &lower;
        Ok(FeasibleRegion {
            dim: p,
            diameter: width.norm(),
            edge: width.iter().fold(0.0f64, |a, &b| a.max(b)),
            bbox_lower: lower,
            bbox_upper: upper,
            kind: RegionKind::Polyhedron { a, b },
        })
    }

    /// Replace the computed diameter by a supplied (smaller, still valid) one.
    pub fn with_diameter(mut self, diameter: f64) -> Self {
        self.diameter = diameter;
        self
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn box_bounds(&self) -> Option<(&Vector, &Vector)> {
        match &self.kind {
            RegionKind::Box { lower, upper } => Some((lower, upper)),
            RegionKind::Polyhedron { .. } => None,
        }
    }

    pub fn bounding_box(&self) -> (&Vector, &Vector) {
        (&self.bbox_lower, &self.bbox_upper)
    }

    /// Largest constraint violation (0 when feasible).
    pub fn violation(&self, x: &Vector) -> f64 {
        match &self.kind {
            RegionKind::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            RegionKind::Polyhedron { a, b } => (a * x - b).iter().fold(0.0f64, |m, &r| m.max(r)),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim && self.violation(x) <= tol
    }

    /// `(A, b)` with `X = {x : A x ≤ b}`; a box contributes `x ≤ u` and `−x ≤ −l`.
    pub fn inequality_rows(&self) -> (Matrix, Vector) {
        match &self.kind {
            RegionKind::Box { lower, upper } => {
                let p = self.dim;
                let mut a = Matrix::zeros(2 * p, p);
                let mut b = Vector::zeros(2 * p);
                for j in 0..p {
                    a[(j, j)] = 1.0;
                    b[j] = upper[j];
                    a[(p + j, j)] = -1.0;
                    b[p + j] = -lower[j];
                }
                (a, b)
            }
            RegionKind::Polyhedron { a, b } => (a.clone(), b.clone()),
        }
    }

    pub fn center(&self) -> Vector {
        let mid = (&self.bbox_lower + &self.bbox_upper) * 0.5;
        match &self.kind {
            RegionKind::Box { .. } => mid,
            RegionKind::Polyhedron { .. } => qp::project_onto_region(&mid, self).unwrap_or(mid),
        }
    }

    /// Uniform point in the bounding box, projected onto the region.
    pub fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        let x = Vector::from_iterator(
            self.dim,
            (0..self.dim).map(|j| {
                let (l, u) = (self.bbox_lower[j], self.bbox_upper[j]);
                if u > l {
                    rng.random_range(l..=u)
                } else {
                    l
                }
            }),
        );
        match &self.kind {
            RegionKind::Box { .. } => x,
            RegionKind::Polyhedron { .. } => qp::project_onto_region(&x, self).unwrap_or(x),
        }
    }

    /// Regular grid with spacing at most `step` covering the bounding box,
    /// restricted to feasible points. Limited to p ≤ 3.
    pub fn grid(&self, step: f64) -> Result<Vec<Vector>> {
        if self.dim > 3 {
            return Err(Error::GridEnumerationInfeasible);
        }
        if !(step > 0.0) {
            return Err(Error::InvalidInput("grid step must be positive".into()));
        }
        let axes: Vec<Vec<f64>> = (0..self.dim)
            .map(|j| {
                let (l, u) = (self.bbox_lower[j], self.bbox_upper[j]);
                let k = ((u - l) / step).ceil().max(0.0) as usize;
                if k == 0 {
                    vec![l]
                } else {
                    (0..=k).map(|i| if i == k { u } else { l + (u - l) * i as f64 / k as f64 }).collect()
                }
            })
            .collect();
        let total: usize = axes.iter().map(|a| a.len()).product();
        if total > 20_000_000 {
            return Err(Error::GridEnumerationInfeasible);
        }
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim];
        loop {
            let x = Vector::from_iterator(self.dim, (0..self.dim).map(|j| axes[j][idx[j]]));
            if self.contains(&x, FEAS_TOL) {
                out.push(x);
            }
            let mut j = 0;
            loop {
                if j == self.dim {
                    return Ok(out);
                }
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }
}

/// Generator protocol for scenario spaces without a finite atom list.
pub trait ScenarioSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut dyn RngCore) -> Vector;
}

/// Independent uniform coordinates on a box.
#[derive(Debug, Clone)]
pub struct UniformBoxSampler {
    pub lower: Vector,
    pub upper: Vector,
}

impl ScenarioSampler for UniformBoxSampler {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_iterator(
            self.lower.len(),
            self.lower.iter().zip(self.upper.iter()).map(|(&l, &u)| l + (u - l) * rng.random::<f64>()),
        )
    }
}

#[derive(Debug, Clone)]
pub struct FiniteScenarios {
    atoms: Vec<Vector>,
    probs: Vec<f64>,
}

impl FiniteScenarios {
    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Clone)]
pub enum ScenarioSpace {
    Finite(FiniteScenarios),
    Sampler(Arc<dyn ScenarioSampler>),
}

impl fmt::Debug for ScenarioSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioSpace::Finite(s) => f.debug_tuple("Finite").field(&s.atoms.len()).finish(),
            ScenarioSpace::Sampler(s) => f.debug_tuple("Sampler").field(&s.dim()).finish(),
        }
    }
}

impl ScenarioSpace {
    /// Finite space; an empty atom list is accepted here and rejected by
    /// [`sample_scenarios`] as degenerate.
    pub fn finite(atoms: Vec<Vector>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() != probs.len() {
            return Err(Error::InvalidInput("one probability per atom".into()));
        }
        if let Some(first) = atoms.first() {
            if atoms.iter().any(|a| a.len() != first.len()) {
                return Err(Error::InvalidInput("atoms must share one dimension".into()));
            }
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput("probabilities must be nonnegative and sum to 1".into()));
            }
        }
        Ok(ScenarioSpace::Finite(FiniteScenarios { atoms, probs }))
    }

    pub fn equiprobable(atoms: Vec<Vector>) -> Result<Self> {
        let k = atoms.len();
        ScenarioSpace::finite(atoms, vec![1.0 / k.max(1) as f64; k])
    }

    pub fn dim(&self) -> usize {
        match self {
            ScenarioSpace::Finite(s) => s.atoms.first().map_or(0, |a| a.len()),
            ScenarioSpace::Sampler(s) => s.dim(),
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteScenarios> {
        match self {
            ScenarioSpace::Finite(s) => Some(s),
            ScenarioSpace::Sampler(_) => None,
        }
    }
}

/// `n` realizations drawn from the stream `(seed, replication)`; for finite
/// spaces the atom indices are kept alongside.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub realizations: Vec<Vector>,
    pub atoms: Option<Vec<usize>>,
    pub seed: u64,
    pub replication: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }
}

pub fn sample_scenarios(space: &ScenarioSpace, n: usize, master_seed: u64, replication_index: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let mut stream = rng::stream(master_seed, replication_index);
    match space {
        ScenarioSpace::Finite(s) => {
            if s.atoms.is_empty() {
                return Err(Error::DegenerateScenarioSpace);
            }
            let table = WeightedIndex::new(&s.probs).map_err(|_| Error::DegenerateScenarioSpace)?;
            let idx: Vec<usize> = (0..n).map(|_| table.sample(&mut stream)).collect();
            Ok(SampleSet {
                realizations: idx.iter().map(|&i| s.atoms[i].clone()).collect(),
                atoms: Some(idx),
                seed: master_seed,
                replication: replication_index,
            })
        }
        ScenarioSpace::Sampler(s) => Ok(SampleSet {
            realizations: (0..n).map(|_| s.draw(&mut stream)).collect(),
            atoms: None,
            seed: master_seed,
            replication: replication_index,
        }),
    }
}

/// `F(x, ξ) = ½ xᵀ H x + ⟨l, x⟩ + k` for a fixed scenario.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub hessian: Matrix,
    pub linear: Vector,
    pub constant: f64,
}

/// User-supplied convex cost.
pub trait CostOracle: Send + Sync {
    fn value(&self, x: &Vector, xi: &Vector) -> Result<f64>;
    fn subgradient(&self, x: &Vector, xi: &Vector) -> Result<Vector>;
    /// Exact quadratic form in `x` for scenario `ξ`, when the cost has one.
    fn quadratic_form(&self, _xi: &Vector) -> Option<QuadraticCost> {
        None
    }
}

#[derive(Clone)]
pub enum CostModel {
    /// `½‖x − ξ‖²`.
    SquaredDistance,
    /// `⟨ξ, x⟩`.
    Linear,
    /// First-stage quadratic plus quadratic recourse.
    Sqqp(Arc<SqqpProblem>),
    Custom(Arc<dyn CostOracle>),
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostModel::SquaredDistance => write!(f, "SquaredDistance"),
            CostModel::Linear => write!(f, "Linear"),
            CostModel::Sqqp(_) => write!(f, "Sqqp"),
            CostModel::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    OracleConvex,
    TwoStageSqqp,
}

/// Declared regularity constants of `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    /// Hölder constant L_F.
    pub lipschitz: f64,
    /// Hölder exponent γ ∈ (0, 1].
    pub holder: f64,
    /// Uniform bound M_F on |F|.
    pub bound: f64,
    /// Lipschitz constant L_h of the recourse function, when declared.
    pub recourse_lipschitz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StochasticProgram {
    pub name: String,
    pub region: FeasibleRegion,
    pub scenarios: ScenarioSpace,
    pub cost: CostModel,
    pub constants: DeclaredConstants,
}

impl StochasticProgram {
    pub fn structure(&self) -> Structure {
        match self.cost {
            CostModel::Sqqp(_) => Structure::TwoStageSqqp,
            _ => Structure::OracleConvex,
        }
    }

    pub fn sqqp(&self) -> Option<&Arc<SqqpProblem>> {
        match &self.cost {
            CostModel::Sqqp(s) => Some(s),
            _ => None,
        }
    }

    fn check(&self, x: &Vector, xi: &Vector) -> Result<()> {
        if x.len() != self.region.dim() || xi.len() != self.scenarios.dim() {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        if !self.region.contains(x, FEAS_TOL) {
            return Err(Error::OutsideRegion);
        }
        Ok(())
    }

    /// Cost without the feasibility check (used on audit points that are
    /// feasible by construction and inside tight loops).
    pub(crate) fn cost_unchecked(&self, x: &Vector, xi: &Vector) -> Result<f64> {
        match &self.cost {
            CostModel::SquaredDistance => Ok(0.5 * (x - xi).norm_squared()),
            CostModel::Linear => Ok(xi.dot(x)),
            CostModel::Sqqp(s) => s.cost(x, xi),
            CostModel::Custom(o) => o.value(x, xi),
        }
    }

    pub(crate) fn subgradient_unchecked(&self, x: &Vector, xi: &Vector) -> Result<Vector> {
        match &self.cost {
            CostModel::SquaredDistance => Ok(x - xi),
            CostModel::Linear => Ok(xi.clone()),
            CostModel::Sqqp(s) => s.cost_subgradient(x, xi),
            CostModel::Custom(o) => o.subgradient(x, xi),
        }
    }

    /// Value and subgradient together (one recourse solve for two-stage costs).
    pub(crate) fn cost_and_subgradient_unchecked(&self, x: &Vector, xi: &Vector) -> Result<(f64, Vector)> {
        match &self.cost {
            CostModel::Sqqp(s) => {
                let r = crate::sqqp::solve_recourse_dual(s.reduction(), x, xi, qp::DEFAULT_TOL)?;
                Ok((s.first_stage(x) + r.value, &s.q * x + &s.c + r.gradient))
            }
            _ => Ok((self.cost_unchecked(x, xi)?, self.subgradient_unchecked(x, xi)?)),
        }
    }

    pub fn quadratic_form(&self, xi: &Vector) -> Option<QuadraticCost> {
        let p = self.region.dim();
        match &self.cost {
            CostModel::SquaredDistance => Some(QuadraticCost {
                hessian: Matrix::identity(p, p),
                linear: -xi,
                constant: 0.5 * xi.norm_squared(),
            }),
            CostModel::Linear => Some(QuadraticCost {
                hessian: Matrix::zeros(p, p),
                linear: xi.clone(),
                constant: 0.0,
            }),
            CostModel::Sqqp(_) => None,
            CostModel::Custom(o) => o.quadratic_form(xi),
        }
    }
}

pub fn evaluate_cost(prob: &StochasticProgram, x: &Vector, xi: &Vector) -> Result<f64> {
    prob.check(x, xi)?;
    prob.cost_unchecked(x, xi)
}

pub fn subgradient(prob: &StochasticProgram, x: &Vector, xi: &Vector) -> Result<Vector> {
    prob.check(x, xi)?;
    prob.subgradient_unchecked(x, xi)
}

pub fn true_objective(prob: &StochasticProgram, x: &Vector) -> Result<f64> {
    let s = prob.scenarios.as_finite().ok_or(Error::ExactExpectationUnavailable)?;
    if !prob.region.contains(x, FEAS_TOL) {
        return Err(Error::OutsideRegion);
    }
    let mut total = 0.0;
    for (a, &p) in s.atoms.iter().zip(&s.probs) {
        if p > 0.0 {
            total += p * prob.cost_unchecked(x, a)?;
        }
    }
    Ok(total)
}

pub(crate) fn true_subgradient(prob: &StochasticProgram, x: &Vector) -> Result<Vector> {
    let s = prob.scenarios.as_finite().ok_or(Error::ExactExpectationUnavailable)?;
    let mut g = Vector::zeros(x.len());
    for (a, &p) in s.atoms.iter().zip(&s.probs) {
        if p > 0.0 {
            g += prob.subgradient_unchecked(x, a)? * p;
        }
    }
    Ok(g)
}

/// Ground truth on a grid: `θ*`, a minimizer, and `X*_ε`.
#[derive(Debug, Clone)]
pub struct TrueOptimum {
    pub theta: f64,
    pub minimizer: Vector,
    /// Smallest objective value among grid points.
    pub grid_min: f64,
    /// Grid points with `f ≤ θ* + ε`; when none qualifies (ε = 0 and an
    /// off-grid minimizer) the grid minimizers themselves.
    pub set: PointSet,
    /// Optimal value from the extensive-form QP (two-stage problems only).
    pub extensive_form: Option<f64>,
}

pub fn true_optimum(prob: &StochasticProgram, grid_step: f64, eps: f64) -> Result<TrueOptimum> {
    if prob.region.dim() > 3 {
        return Err(Error::GridOracleTooLarge);
    }
    if prob.scenarios.as_finite().is_none() {
        return Err(Error::ExactExpectationUnavailable);
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidTolerance);
    }
    let grid = prob.region.grid(grid_step)?;
    let values: Vec<f64> = grid.iter().map(|x| true_objective(prob, x)).collect::<Result<_>>()?;
    let (best_idx, &grid_min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::InfeasibleRegion)?;

    let mut extensive_form = None;
    let (minimizer, polished) = match prob.structure() {
        Structure::TwoStageSqqp => {
            let (x, v) = crate::sqqp::solve_extensive_form(prob)?;
            extensive_form = Some(v);
            (x, v)
        }
        Structure::OracleConvex => polish(prob, &grid[best_idx])?,
    };
    let (theta, minimizer) = if polished <= grid_min {
        (polished, minimizer)
    } else {
        (grid_min, grid[best_idx].clone())
    };
    let mut members: Vec<Vector> = grid
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= theta + eps)
        .map(|(x, _)| x.clone())
        .collect();
    if members.is_empty() {
        members = grid
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v <= grid_min)
            .map(|(x, _)| x.clone())
            .collect();
    }
    Ok(TrueOptimum {
        theta,
        minimizer,
        grid_min,
        set: PointSet::grid_sublevel(members),
        extensive_form,
    })
}

/// Exact minimization of the true objective: folded quadratic when every atom
/// has a quadratic form with positive definite average Hessian, otherwise a
/// cutting-plane run to 1e-10.
fn polish(prob: &StochasticProgram, start: &Vector) -> Result<(Vector, f64)> {
    let s = prob.scenarios.as_finite().expect("finite checked");
    let p = prob.region.dim();
    let mut folded = Some((Matrix::zeros(p, p), Vector::zeros(p), 0.0));
    for (a, &w) in s.atoms.iter().zip(&s.probs) {
        match (prob.quadratic_form(a), folded.as_mut()) {
            (Some(qf), Some((h, l, k))) => {
                *h += qf.hessian * w;
                *l += qf.linear * w;
                *k += qf.constant * w;
            }
            _ => folded = None,
        }
    }
    if let Some((h, l, k)) = folded {
        if linalg::min_eigenvalue(&h) > 1e-10 {
            let m = ProxMaster {
                groups: Vec::new(),
                region: prob.region.clone(),
                rho: 0.0,
                anchor: start.clone(),
                quadratic: Some((h, l)),
            };
            let sol = qp::solve_master_unchecked(&m, qp::DEFAULT_TOL)?;
            return Ok((sol.point, sol.value + k));
        }
    }
    let f = |x: &Vector| -> Result<(f64, Vector)> { Ok((true_objective(prob, x)?, true_subgradient(prob, x)?)) };
    let run = crate::cutplane::kelley(&[&f], &[1.0], &prob.region, start, 1e-9, 5000)?;
    Ok((run.x, run.value))
}

/// Largest midpoint-convexity violation `F(mid) − ½(F(x) + F(y))` over random
/// triples `(x, y, ξ)`.
pub fn convexity_probe(prob: &StochasticProgram, triples: usize, seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, 0xC0);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..triples {
        let x = prob.region.random_point(&mut r);
        let y = prob.region.random_point(&mut r);
        let xi = draw_one(&prob.scenarios, &mut r, seed, t as u64)?;
        let mid = (&x + &y) * 0.5;
        let gap = prob.cost_unchecked(&mid, &xi)? - 0.5 * (prob.cost_unchecked(&x, &xi)? + prob.cost_unchecked(&y, &xi)?);
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Largest `|F(x,ξ) − F(y,ξ)| − L_F ‖x − y‖^γ` over random pairs.
pub fn holder_probe(prob: &StochasticProgram, pairs: usize, seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, 0xC1);
    let c = prob.constants;
    let mut worst = f64::NEG_INFINITY;
    for t in 0..pairs {
        let x = prob.region.random_point(&mut r);
        let y = prob.region.random_point(&mut r);
        let xi = draw_one(&prob.scenarios, &mut r, seed, t as u64)?;
        let diff = (prob.cost_unchecked(&x, &xi)? - prob.cost_unchecked(&y, &xi)?).abs();
        worst = worst.max(diff - c.lipschitz * (&x - &y).norm().powf(c.holder));
    }
    Ok(worst)
}

/// Largest `|F(x,ξ)| − M_F` over random pairs.
pub fn bound_probe(prob: &StochasticProgram, pairs: usize, seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, 0xC2);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..pairs {
        let x = prob.region.random_point(&mut r);
        let xi = draw_one(&prob.scenarios, &mut r, seed, t as u64)?;
        worst = worst.max(prob.cost_unchecked(&x, &xi)?.abs() - prob.constants.bound);
    }
    Ok(worst)
}

fn draw_one(space: &ScenarioSpace, r: &mut rng::StreamRng, seed: u64, t: u64) -> Result<Vector> {
    match space {
        ScenarioSpace::Finite(s) => {
            if s.atoms.is_empty() {
                return Err(Error::DegenerateScenarioSpace);
            }
            let table = WeightedIndex::new(&s.probs).map_err(|_| Error::DegenerateScenarioSpace)?;
            Ok(s.atoms[table.sample(r)].clone())
        }
        ScenarioSpace::Sampler(_) => Ok(sample_scenarios(space, 1, seed, 0xD000 + t)?.realizations.remove(0)),
    }
}
