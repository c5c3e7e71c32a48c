//! Sample average approximation per replication, and the compromise problems
//! that aggregate several replications.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::cutplane::{self, CutPlaneConfig, PiecewiseLinearModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{CostModel, FeasibleRegion, QuadraticCost, SampleSet, StochasticProgram, FEAS_TOL};
use crate::qp::{self, Cut, CutGroup, ProxMaster};

/// `f_n(x) = (1/n) Σ F(x, ξ_j)` for one sample set.
#[derive(Debug, Clone)]
pub struct SaaInstance<'a> {
    pub prob: &'a StochasticProgram,
    pub samples: SampleSet,
    /// Distinct realizations with weight `count / n`; repeated atoms are
    /// evaluated once.
    terms: Vec<(usize, f64)>,
}

pub fn build_saa<'a>(prob: &'a StochasticProgram, samples: SampleSet) -> Result<SaaInstance<'a>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("sample set is empty".into()));
    }
    if samples.realizations.iter().any(|xi| xi.len() != prob.scenarios.dim()) {
        return Err(Error::InvalidInput("scenario dimension mismatch".into()));
    }
    let n = samples.len() as f64;
    let terms = match &samples.atoms {
        Some(idx) => {
            let mut first: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
            for (pos, &a) in idx.iter().enumerate() {
                first.entry(a).or_insert((pos, 0)).1 += 1;
            }
            first.values().map(|&(pos, count)| (pos, count as f64 / n)).collect()
        }
        None => (0..samples.len()).map(|j| (j, 1.0 / n)).collect(),
    };
    Ok(SaaInstance { prob, samples, terms })
}

impl<'a> SaaInstance<'a> {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.prob.region
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.prob.region.dim() {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        if !self.prob.region.contains(x, FEAS_TOL) {
            return Err(Error::OutsideRegion);
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        let mut v = 0.0;
        for &(j, w) in &self.terms {
            v += w * self.prob.cost_unchecked(x, &self.samples.realizations[j])?;
        }
        Ok(v)
    }

    /// Average of per-scenario subgradients.
    pub fn subgradient(&self, x: &Vector) -> Result<Vector> {
        Ok(self.value_and_subgradient(x)?.1)
    }

    pub fn value_and_subgradient(&self, x: &Vector) -> Result<(f64, Vector)> {
        self.check(x)?;
        let mut v = 0.0;
        let mut g = Vector::zeros(x.len());
        for &(j, w) in &self.terms {
            let (fv, fg) = self.prob.cost_and_subgradient_unchecked(x, &self.samples.realizations[j])?;
            v += w * fv;
            g.axpy(w, &fg, 1.0);
        }
        Ok((v, g))
    }

    /// `F(x, ξ_j)` for every sample, in sample order.
    pub fn scenario_values(&self, x: &Vector) -> Result<Vec<f64>> {
        self.check(x)?;
        self.samples.realizations.iter().map(|xi| self.prob.cost_unchecked(x, xi)).collect()
    }

    /// The exactly representable quadratic part of `f_n` and whether an oracle
    /// remainder is left over: fully quadratic costs fold completely, two-stage
    /// costs keep the first stage and leave the averaged recourse.
    pub(crate) fn quadratic_part(&self) -> (Option<QuadraticCost>, bool) {
        let p = self.prob.region.dim();
        if let CostModel::Sqqp(s) = &self.prob.cost {
            return (
                Some(QuadraticCost {
                    hessian: s.q.clone(),
                    linear: s.c.clone(),
                    constant: 0.0,
                }),
                true,
            );
        }
        let mut acc = QuadraticCost {
            hessian: Matrix::zeros(p, p),
            linear: Vector::zeros(p),
            constant: 0.0,
        };
        for &(j, w) in &self.terms {
            match self.prob.quadratic_form(&self.samples.realizations[j]) {
                Some(qf) => {
                    acc.hessian += qf.hessian * w;
                    acc.linear += qf.linear * w;
                    acc.constant += qf.constant * w;
                }
                None => return (None, true),
            }
        }
        (Some(acc), false)
    }

    /// `f_n` minus its quadratic part, with a subgradient.
    pub(crate) fn remainder(&self, x: &Vector) -> Result<(f64, Vector)> {
        self.check(x)?;
        match &self.prob.cost {
            CostModel::Sqqp(s) => {
                let red = s.reduction();
                let mut v = 0.0;
                let mut g = Vector::zeros(x.len());
                for &(j, w) in &self.terms {
                    let r = crate::sqqp::solve_recourse_dual(red, x, &self.samples.realizations[j], qp::DEFAULT_TOL)
                        .map_err(|e| match e {
                            Error::RecourseInfeasible(_) => Error::RecourseInfeasible(j),
                            other => other,
                        })?;
                    v += w * r.value;
                    g.axpy(w, &r.gradient, 1.0);
                }
                Ok((v, g))
            }
            _ => self.value_and_subgradient(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Quadratic `f_n` minimized exactly by one master solve.
    Folded,
    CuttingPlane,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub x: Vector,
    /// `f_n(x)`.
    pub value: f64,
    /// Certified lower bound on `θ_n`; equals `value` for exact solves.
    pub theta: f64,
    /// `value − theta`.
    pub eps_used: f64,
    pub method: SolveMethod,
    pub model: Option<PiecewiseLinearModel>,
    /// `(f_n(x_k), model minimum)` per cutting-plane iteration.
    pub trace: Vec<(f64, f64)>,
}

pub fn solve_saa(inst: &SaaInstance, eps: f64) -> Result<ReplicationResult> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidTolerance);
    }
    let region = inst.region();
    if let (Some(qf), false) = inst.quadratic_part() {
        if linalg::min_eigenvalue(&qf.hessian) > 1e-10 {
            let master = ProxMaster {
                groups: Vec::new(),
                region: region.clone(),
                rho: 0.0,
                anchor: region.center(),
                quadratic: Some((qf.hessian.clone(), qf.linear.clone())),
            };
            let sol = qp::solve_master_unchecked(&master, qp::DEFAULT_TOL)
                .map_err(|e| Error::ReplicationSolveFailed(e.to_string()))?;
            let value = inst.value(&sol.point)?;
            return Ok(ReplicationResult {
                x: sol.point,
                value,
                theta: value,
                eps_used: 0.0,
                method: SolveMethod::Folded,
                model: None,
                trace: Vec::new(),
            });
        }
    }
    let cfg = CutPlaneConfig {
        eps1: eps.max(1e-9),
        max_iters: 5000,
        eps2: 0.0,
    };
    let run = cutplane::run_cutting_plane(inst, &cfg).map_err(|e| match e {
        Error::TerminationUnmet => Error::ReplicationSolveFailed("cutting-plane iteration cap".into()),
        other => other,
    })?;
    Ok(ReplicationResult {
        eps_used: run.value - run.lower,
        x: run.x,
        value: run.value,
        theta: run.lower,
        method: SolveMethod::CuttingPlane,
        model: Some(run.model),
        trace: run.trace,
    })
}

/// Unbiased `s²_n(x) = (1/(n−1)) Σ (F(x, ξ_j) − f_n(x))²`.
pub fn sample_variance(inst: &SaaInstance, x: &Vector) -> Result<f64> {
    if inst.n() < 2 {
        return Err(Error::VarianceUndefined);
    }
    let vals = inst.scenario_values(x)?;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64)
}

/// The same estimate through the compound function `H(x, y, ξ) = (F(x, ξ) − y)²`
/// evaluated at `y = f_n(x)`.
pub fn sample_variance_compound(inst: &SaaInstance, x: &Vector) -> Result<f64> {
    if inst.n() < 2 {
        return Err(Error::VarianceUndefined);
    }
    let y = inst.value(x)?;
    let h = |xi: &Vector| -> Result<f64> { Ok((inst.prob.cost_unchecked(x, xi)? - y).powi(2)) };
    let mut total = 0.0;
    for xi in &inst.samples.realizations {
        total += h(xi)?;
    }
    Ok(total / (inst.n() - 1) as f64)
}

/// `(1/m) √(Σ s²_i / n) · z_{1−α/2}`.
pub fn margin_of_error(s2: &[f64], n: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfidenceLevel);
    }
    if s2.is_empty() {
        return Err(Error::NoReplications);
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0).max(0.0);
    let m = s2.len() as f64;
    Ok((s2.iter().sum::<f64>() / n as f64).sqrt() * z / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompromiseFlavor {
    Exact,
    Inexact,
    AlgorithmAugmented,
    SdAugmented,
}

#[derive(Debug, Clone)]
pub struct CompromiseResult {
    pub x_c: Vector,
    /// Average replication decision `x̄`.
    pub anchor: Vector,
    /// Master objective at `x_c`, prox term included.
    pub value: f64,
    /// Aggregate objective at `x_c` without the prox term.
    pub aggregate_value: f64,
    pub flavor: CompromiseFlavor,
    pub rho: f64,
    pub stopping_gap: f64,
    pub kkt_residual: f64,
    /// ε attached to the anchors (0 for exact compromise).
    pub eps: f64,
    pub master_iterations: usize,
}

/// One replication's contribution to an aggregate objective: an exact
/// quadratic part plus an optional convex oracle refined by cuts on demand.
pub(crate) struct AggregateTerm<'a> {
    pub quadratic: Option<QuadraticCost>,
    pub oracle: Option<Box<dyn Fn(&Vector) -> Result<(f64, Vector)> + 'a>>,
    pub seed_points: Vec<Vector>,
}

impl AggregateTerm<'_> {
    fn value(&self, x: &Vector) -> Result<f64> {
        let mut v = 0.0;
        if let Some(q) = &self.quadratic {
            v += 0.5 * x.dot(&(&q.hessian * x)) + q.linear.dot(x) + q.constant;
        }
        if let Some(o) = &self.oracle {
            v += o(x)?.0;
        }
        Ok(v)
    }
}

pub(crate) fn saa_term<'a>(inst: &'a SaaInstance<'a>, seeds: Vec<Vector>) -> AggregateTerm<'a> {
    let (quadratic, rest) = inst.quadratic_part();
    let oracle: Option<Box<dyn Fn(&Vector) -> Result<(f64, Vector)> + 'a>> = if rest {
        if quadratic.is_some() {
            Some(Box::new(move |x: &Vector| inst.remainder(x)))
        } else {
            Some(Box::new(move |x: &Vector| inst.value_and_subgradient(x)))
        }
    } else {
        None
    };
    AggregateTerm {
        quadratic,
        oracle,
        seed_points: seeds,
    }
}

pub(crate) struct AggregateSolution {
    pub x: Vector,
    pub value: f64,
    pub aggregate_value: f64,
    pub kkt: f64,
    pub iterations: usize,
}

const AGGREGATE_GAP: f64 = 1e-9;
const AGGREGATE_MAX_ITERS: usize = 2000;

/// `min_X (1/m) Σ_i term_i(x) + (ρ/2)‖x − x̄‖²`; oracle parts enter as cut
/// groups refined at every master iterate until the master's own gap closes.
pub(crate) fn minimize_aggregate(
    terms: &[AggregateTerm],
    region: &FeasibleRegion,
    rho: f64,
    anchor: &Vector,
) -> Result<AggregateSolution> {
    let m = terms.len();
    if m == 0 {
        return Err(Error::NoReplications);
    }
    let w = 1.0 / m as f64;
    let p = region.dim();
    let mut hess = Matrix::zeros(p, p);
    let mut lin = Vector::zeros(p);
    let mut constant = 0.0;
    for t in terms {
        if let Some(q) = &t.quadratic {
            hess += &q.hessian * w;
            lin += &q.linear * w;
            constant += q.constant * w;
        }
    }
    let mut groups: Vec<(usize, CutGroup)> = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        if let Some(o) = &t.oracle {
            let mut cuts: Vec<Cut> = Vec::new();
            for s in t.seed_points.iter().chain(std::iter::once(anchor)) {
                let x0 = qp::project_onto_region(s, region)?;
                let (v, g) = o(&x0)?;
                let c = Cut::at(v, &g, &x0);
                if !cuts.iter().any(|k| k.near(&c, 1e-12)) {
                    cuts.push(c);
                }
            }
            groups.push((i, CutGroup { weight: w, cuts }));
        }
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let master = ProxMaster {
            groups: groups.iter().map(|(_, g)| g.clone()).collect(),
            region: region.clone(),
            rho,
            anchor: anchor.clone(),
            quadratic: Some((hess.clone(), lin.clone())),
        };
        let sol = qp::solve_master_unchecked(&master, qp::DEFAULT_TOL)?;
        let x = sol.point;
        let mut aggregate = constant + 0.5 * x.dot(&(&hess * &x)) + lin.dot(&x);
        let mut gap = 0.0;
        let mut new_cuts = Vec::new();
        for (slot, (i, g)) in groups.iter().enumerate() {
            let (v, sg) = terms[*i].oracle.as_ref().expect("oracle group")(&x)?;
            aggregate += w * v;
            let short = v - qp::max_of_cuts(&g.cuts, &x);
            gap += w * short.max(0.0);
            if short > 1e-13 * v.abs().max(1.0) {
                new_cuts.push((slot, Cut::at(v, &sg, &x)));
            }
        }
        if gap <= AGGREGATE_GAP || new_cuts.is_empty() {
            return Ok(AggregateSolution {
                value: aggregate + 0.5 * rho * (&x - anchor).norm_squared(),
                aggregate_value: aggregate,
                x,
                kkt: sol.kkt_residual,
                iterations,
            });
        }
        if iterations >= AGGREGATE_MAX_ITERS {
            return Err(Error::NotConverged(format!("aggregate master gap {gap:.3e}")));
        }
        for (slot, c) in new_cuts {
            let cuts = &mut groups[slot].1.cuts;
            if !cuts.iter().any(|k| k.near(&c, 1e-12)) {
                cuts.push(c);
            }
        }
    }
}

/// Minimum of `(1/m) Σ_i term_i` over X without a prox term: one master solve
/// when everything is quadratic with a positive definite Hessian, otherwise a
/// cutting-plane run.
pub(crate) fn aggregate_minimum(terms: &[AggregateTerm], region: &FeasibleRegion) -> Result<(Vector, f64)> {
    let m = terms.len() as f64;
    if terms.iter().all(|t| t.oracle.is_none()) {
        let p = region.dim();
        let mut hess = Matrix::zeros(p, p);
        let mut lin = Vector::zeros(p);
        for t in terms {
            if let Some(q) = &t.quadratic {
                hess += &q.hessian / m;
                lin += &q.linear / m;
            }
        }
        if linalg::min_eigenvalue(&hess) > 1e-10 {
            let master = ProxMaster {
                groups: Vec::new(),
                region: region.clone(),
                rho: 0.0,
                anchor: region.center(),
                quadratic: Some((hess, lin)),
            };
            let sol = qp::solve_master_unchecked(&master, qp::DEFAULT_TOL)?;
            let mut v = 0.0;
            for t in terms {
                v += t.value(&sol.point)? / m;
            }
            return Ok((sol.point, v));
        }
    }
    let f = |x: &Vector| -> Result<(f64, Vector)> {
        let mut v = 0.0;
        let mut g = Vector::zeros(x.len());
        for t in terms {
            if let Some(q) = &t.quadratic {
                v += (0.5 * x.dot(&(&q.hessian * x)) + q.linear.dot(x) + q.constant) / m;
                g += (&q.hessian * x + &q.linear) / m;
            }
            if let Some(o) = &t.oracle {
                let (ov, og) = o(x)?;
                v += ov / m;
                g += og / m;
            }
        }
        Ok((v, g))
    };
    let start = region.center();
    let run = cutplane::kelley(&[&f], &[1.0], region, &start, 1e-9, 5000)?;
    Ok((run.x, run.value))
}

fn mean_point(points: &[&Vector]) -> Vector {
    let mut s = Vector::zeros(points[0].len());
    for p in points {
        s += *p;
    }
    s / points.len() as f64
}

fn compromise_from_terms(
    terms: &[AggregateTerm],
    region: &FeasibleRegion,
    anchor: Vector,
    rho: f64,
    flavor: CompromiseFlavor,
    eps: f64,
) -> Result<CompromiseResult> {
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("prox weight must be positive".into()));
    }
    let sol = minimize_aggregate(terms, region, rho, &anchor)?;
    Ok(CompromiseResult {
        stopping_gap: (&anchor - &sol.x).norm(),
        x_c: sol.x,
        anchor,
        value: sol.value,
        aggregate_value: sol.aggregate_value,
        flavor,
        rho,
        kkt_residual: sol.kkt,
        eps,
        master_iterations: sol.iterations,
    })
}

/// Compromise anchored at the average of exact replication solutions.
pub fn exact_compromise(results: &[ReplicationResult], insts: &[SaaInstance], rho: f64) -> Result<CompromiseResult> {
    if results.is_empty() || insts.is_empty() {
        return Err(Error::NoReplications);
    }
    if results.len() != insts.len() {
        return Err(Error::InvalidInput("one result per replication".into()));
    }
    if let Some(r) = results.iter().find(|r| r.eps_used > 1e-6) {
        return Err(Error::InvalidInput(format!(
            "exact compromise needs exact solves (ε used {:.3e})",
            r.eps_used
        )));
    }
    let anchor = mean_point(&results.iter().map(|r| &r.x).collect::<Vec<_>>());
    let terms: Vec<AggregateTerm> =
        insts.iter().zip(results).map(|(inst, r)| saa_term(inst, vec![r.x.clone()])).collect();
    compromise_from_terms(&terms, insts[0].region(), anchor, rho, CompromiseFlavor::Exact, 0.0)
}

/// Slack `θ_n + ε − f_n(x)` of the ε-optimality membership test (negative
/// when `x` is not ε-optimal), with `θ_n` from an exact solve.
pub fn membership_slack(inst: &SaaInstance, x: &Vector, eps: f64) -> Result<f64> {
    let exact = solve_saa(inst, 0.0)?;
    Ok(exact.theta + eps - inst.value(x)?)
}

/// Compromise anchored at the average of supplied ε-optimal points.
pub fn inexact_compromise(points: &[Vector], insts: &[SaaInstance], rho: f64, eps: f64) -> Result<CompromiseResult> {
    if points.is_empty() || insts.is_empty() {
        return Err(Error::NoReplications);
    }
    if points.len() != insts.len() {
        return Err(Error::InvalidInput("one point per replication".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidTolerance);
    }
    for (x, inst) in points.iter().zip(insts) {
        if membership_slack(inst, x, eps)? < -1e-9 {
            return Err(Error::NotEpsilonOptimal);
        }
    }
    let anchor = mean_point(&points.iter().collect::<Vec<_>>());
    let terms: Vec<AggregateTerm> = insts.iter().zip(points).map(|(inst, x)| saa_term(inst, vec![x.clone()])).collect();
    compromise_from_terms(&terms, insts[0].region(), anchor, rho, CompromiseFlavor::Inexact, eps)
}

pub fn stopping_gap(res: &CompromiseResult) -> f64 {
    (&res.anchor - &res.x_c).norm()
}

/// Direct re-solve of the aggregate without the prox term.
#[derive(Debug, Clone)]
pub struct StoppingCheck {
    pub gap: f64,
    pub aggregate_min: f64,
    /// `aggregate(x̄) − min aggregate`.
    pub anchor_excess: f64,
    /// `aggregate(x_c) − min aggregate`.
    pub compromise_excess: f64,
    /// Both excesses within `tol` (only meaningful when `gap ≤ tol`).
    pub confirmed: bool,
}

pub fn verify_stopping(res: &CompromiseResult, insts: &[SaaInstance], tol: f64) -> Result<StoppingCheck> {
    if insts.is_empty() {
        return Err(Error::NoReplications);
    }
    let terms: Vec<AggregateTerm> = insts.iter().map(|inst| saa_term(inst, Vec::new())).collect();
    let region = insts[0].region();
    let (_, min) = aggregate_minimum(&terms, region)?;
    let m = terms.len() as f64;
    let agg = |x: &Vector| -> Result<f64> {
        let mut v = 0.0;
        for t in &terms {
            v += t.value(x)? / m;
        }
        Ok(v)
    };
    let anchor_in = qp::project_onto_region(&res.anchor, region)?;
    let anchor_excess = agg(&anchor_in)? - min;
    let compromise_excess = agg(&res.x_c)? - min;
    let gap = stopping_gap(res);
    Ok(StoppingCheck {
        gap,
        aggregate_min: min,
        anchor_excess,
        compromise_excess,
        confirmed: gap <= tol && anchor_excess <= tol && compromise_excess <= tol,
    })
}
