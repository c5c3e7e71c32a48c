//! Stochastic decomposition for two-stage quadratic programs: one sample per
//! iteration, minorants of the running sample-average recourse built from
//! stored dual faces, rescaling of older minorants, an incumbent test, and the
//! compromise over several runs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{sample_scenarios, FeasibleRegion, RegionKind, StochasticProgram};
use crate::qp::{self, Cut, ProxMaster};
use crate::saa::{minimize_aggregate, AggregateTerm, CompromiseFlavor, CompromiseResult};
use crate::sqqp::{self, dual_piece, DualReduction, SqqpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SdConfig {
    pub iterations: usize,
    /// Initial step τ; `None` uses `2 / θ_min(Q)`.
    pub tau: Option<f64>,
    /// Incumbent acceptance ratio.
    pub eta: f64,
}

impl Default for SdConfig {
    fn default() -> Self {
        SdConfig {
            iterations: 100,
            tau: None,
            eta: 0.2,
        }
    }
}

pub fn default_tau(prob: &SqqpProblem) -> f64 {
    2.0 / linalg::min_eigenvalue(&prob.q)
}

/// `max_X ‖Qx‖ + ‖c‖ + L_h` with the maximum over the vertices of the
/// (bounding) box and `L_h` from the declared constants.
pub fn lipschitz_constant(prog: &StochasticProgram) -> Result<f64> {
    let prob = prog
        .sqqp()
        .ok_or_else(|| Error::InvalidInput("two-stage problem required".into()))?;
    let lh = prog
        .constants
        .recourse_lipschitz
        .ok_or_else(|| Error::InsufficientConstants("recourse Lipschitz constant".into()))?;
    let (lo, hi) = match prog.region.kind() {
        RegionKind::Box { lower, upper } => (lower.clone(), upper.clone()),
        RegionKind::Polyhedron { .. } => {
            let (l, u) = prog.region.bounding_box();
            (l.clone(), u.clone())
        }
    };
    let p = lo.len();
    let mut worst = 0.0f64;
    for mask in 0u64..(1u64 << p) {
        let x = Vector::from_iterator(p, (0..p).map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] }));
        worst = worst.max((&prob.q * x).norm());
    }
    Ok(worst + prob.c.norm() + lh)
}

/// A minorant of `(1/created) Σ_{i ≤ created} h(·, ξ_i)`; at iteration k it
/// enters the model scaled by `created / k`.
#[derive(Debug, Clone)]
pub struct SdMinorant {
    pub created: usize,
    pub cut: Cut,
    /// Anchored at the incumbent (otherwise at the candidate).
    pub at_incumbent: bool,
}

impl SdMinorant {
    pub fn scaled_to(&self, k: usize) -> Cut {
        self.cut.scaled(self.created as f64 / k as f64)
    }
}

/// `f̂(x) = ½xᵀQx + cᵀx + max_j cut_j(x)` with the cuts already rescaled.
#[derive(Debug, Clone)]
pub struct SdModel {
    pub q: Matrix,
    pub c: Vector,
    pub cuts: Vec<Cut>,
    pub k: usize,
}

impl SdModel {
    fn active_cut(&self, x: &Vector) -> (f64, Option<usize>) {
        let mut best = 0.0;
        let mut idx = None;
        for (j, c) in self.cuts.iter().enumerate() {
            let v = c.eval(x);
            if idx.is_none() || v > best {
                best = v;
                idx = Some(j);
            }
        }
        (best, idx)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x) + self.active_cut(x).0
    }

    pub fn subgradient(&self, x: &Vector) -> Vector {
        let mut g = &self.q * x + &self.c;
        if let (_, Some(j)) = self.active_cut(x) {
            g += self.cuts[j].slope();
        }
        g
    }

    /// `min_X f̂` by one master solve.
    pub fn minimum(&self, region: &FeasibleRegion) -> Result<(Vector, f64)> {
        let master = ProxMaster::new(self.cuts.clone(), region.clone(), 0.0, region.center())
            .with_quadratic(self.q.clone(), self.c.clone());
        let sol = qp::solve_master_unchecked(&master, qp::DEFAULT_TOL)?;
        let v = self.eval(&sol.point);
        Ok((sol.point, v))
    }
}

#[derive(Debug, Clone)]
pub struct SdIteration {
    pub k: usize,
    pub candidate: Vector,
    pub incumbent: Vector,
    pub accepted: bool,
    pub minorants: usize,
    /// Minorants created this iteration, at the candidate and at the previous
    /// incumbent (in units of the running average).
    pub new_at_candidate: Cut,
    pub new_at_incumbent: Cut,
}

#[derive(Debug, Clone)]
pub struct SdRun {
    pub incumbent: Vector,
    pub model: SdModel,
    pub minorants: Vec<SdMinorant>,
    pub trace: Vec<SdIteration>,
    /// Observed scenarios in sampling order.
    pub samples: Vec<Vector>,
    pub tau: f64,
}

impl SdRun {
    /// Incumbent after `k` iterations (`1 ≤ k ≤` run length).
    pub fn incumbent_at(&self, k: usize) -> Option<&Vector> {
        self.trace.get(k.checked_sub(1)?).map(|t| &t.incumbent)
    }
}

/// Dual faces seen so far: for each γ-support the pseudo-inverse of `H` on it.
struct FaceStore {
    faces: Vec<(Vec<usize>, Matrix)>,
}

impl FaceStore {
    fn new() -> Self {
        FaceStore {
            faces: vec![(Vec::new(), Matrix::zeros(0, 0))],
        }
    }

    fn remember(&mut self, red: &DualReduction, gamma: &Vector) {
        let support: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] > 1e-12).collect();
        if self.faces.iter().any(|(s, _)| *s == support) {
            return;
        }
        let k = support.len();
        let sub = Matrix::from_fn(k, k, |a, b| red.h[(support[a], support[b])]);
        self.faces.push((support, linalg::sym_pinv(&sub, 1e-10)));
    }

    /// Best dual piece at `x` over stored faces: on each face the reduced dual
    /// is maximized with the other γ fixed at 0 and the result clipped to γ ≥ 0,
    /// then λ is set to its maximizer for that γ. Every candidate is dual
    /// feasible, so each piece lies below `h(·, ξ)` everywhere.
    fn best_piece(&self, red: &DualReduction, x: &Vector, xi: &Vector) -> sqqp::AffinePiece {
        let (g, _) = red.rhs(x, xi);
        let q = red.dual_linear(&g);
        let mut best: Option<(f64, sqqp::AffinePiece)> = None;
        for (support, pinv) in &self.faces {
            let mut gamma = Vector::zeros(red.n2());
            if !support.is_empty() {
                let qs = Vector::from_iterator(support.len(), support.iter().map(|&i| q[i]));
                let gs = pinv * qs;
                for (a, &i) in support.iter().enumerate() {
                    gamma[i] = gs[a].max(0.0);
                }
            }
            let lambda = red.equality_multiplier(&gamma, &g);
            let piece = dual_piece(red, &gamma, &lambda, xi, x.len());
            let v = piece.eval(x);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, piece));
            }
        }
        best.expect("the empty face is always stored").1
    }
}

/// Running sample: distinct scenarios with their counts.
struct Observed {
    keys: BTreeMap<usize, usize>,
    scenarios: Vec<(Vector, usize)>,
}

impl Observed {
    fn add(&mut self, key: usize, xi: &Vector) {
        match self.keys.get(&key) {
            Some(&slot) => self.scenarios[slot].1 += 1,
            None => {
                self.keys.insert(key, self.scenarios.len());
                self.scenarios.push((xi.clone(), 1));
            }
        }
    }
}

fn minorant_at(red: &DualReduction, faces: &FaceStore, obs: &Observed, k: usize, x: &Vector) -> Cut {
    let mut alpha = 0.0;
    let mut beta = Vector::zeros(x.len());
    for (xi, count) in &obs.scenarios {
        let w = *count as f64 / k as f64;
        let piece = faces.best_piece(red, x, xi);
        alpha += w * piece.intercept;
        beta.axpy(w, &piece.slope, 1.0);
    }
    Cut::new(alpha, &beta)
}

fn model_value(prob: &SqqpProblem, minorants: &[SdMinorant], k: usize, x: &Vector) -> f64 {
    let cuts = minorants.iter().map(|m| m.scaled_to(k).eval(x)).fold(0.0f64, f64::max);
    prob.first_stage(x) + cuts
}

pub fn run_sd(prog: &StochasticProgram, cfg: &SdConfig, master_seed: u64, replication: u64) -> Result<SdRun> {
    let prob = prog
        .sqqp()
        .ok_or_else(|| Error::InvalidInput("stochastic decomposition needs a two-stage problem".into()))?
        .clone();
    if cfg.iterations < 2 {
        return Err(Error::InvalidInput("at least two iterations".into()));
    }
    let tau = cfg.tau.unwrap_or_else(|| default_tau(&prob));
    if !(tau * linalg::min_eigenvalue(&prob.q) > 1.0) {
        return Err(Error::StepSizeTooSmall);
    }
    let red = prob.reduction();
    let draws = sample_scenarios(&prog.scenarios, cfg.iterations, master_seed, replication)?;
    let region = &prog.region;

    let mut incumbent = region.center();
    let mut minorants: Vec<SdMinorant> = Vec::new();
    let mut faces = FaceStore::new();
    let mut obs = Observed {
        keys: BTreeMap::new(),
        scenarios: Vec::new(),
    };
    let mut incumbent_minorant: Option<usize> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);

    for k in 1..=cfg.iterations {
        // Candidate: prox step on f̂_{k−1} with weight (k+1)/τ (the zero
        // function stands in for the recourse before any sample).
        let prev_cuts: Vec<Cut> = std::iter::once(Cut::new(0.0, &Vector::zeros(prob.n1())))
            .chain(minorants.iter().map(|m| m.scaled_to((k - 1).max(1))))
            .collect();
        let master = ProxMaster::new(prev_cuts, region.clone(), (k + 1) as f64 / tau, incumbent.clone())
            .with_quadratic(prob.q.clone(), prob.c.clone());
        let sol = qp::solve_prox_master(&master, qp::DEFAULT_TOL)?;
        let candidate = sol.point;

        // Keep minorants active at the candidate and the incumbent's own.
        let mut keep: Vec<SdMinorant> = Vec::new();
        for (j, m) in minorants.iter().enumerate() {
            if sol.multipliers[j + 1] > 1e-10 || incumbent_minorant == Some(j) {
                keep.push(m.clone());
            }
        }

        let xi = &draws.realizations[k - 1];
        let key = draws.atoms.as_ref().map_or(k - 1, |a| a[k - 1]);
        let exact = sqqp::solve_recourse_dual(red, &candidate, xi, qp::DEFAULT_TOL).map_err(|e| match e {
            Error::RecourseInfeasible(_) => Error::RecourseInfeasible(key),
            other => other,
        })?;
        faces.remember(red, &exact.gamma);
        obs.add(key, xi);

        let at_candidate = minorant_at(red, &faces, &obs, k, &candidate);
        let at_incumbent = minorant_at(red, &faces, &obs, k, &incumbent);

        let old_view: Vec<SdMinorant> = minorants.clone();
        let prev_k = k - 1;
        keep.push(SdMinorant {
            created: k,
            cut: at_candidate.clone(),
            at_incumbent: false,
        });
        keep.push(SdMinorant {
            created: k,
            cut: at_incumbent.clone(),
            at_incumbent: true,
        });
        let candidate_slot = keep.len() - 2;
        let incumbent_slot = keep.len() - 1;

        // Incumbent test on the models before and after this iteration.
        let before = |x: &Vector| {
            if prev_k == 0 {
                prob.first_stage(x)
            } else {
                model_value(&prob, &old_view, prev_k, x)
            }
        };
        let predicted = before(&candidate) - before(&incumbent);
        let observed = model_value(&prob, &keep, k, &candidate) - model_value(&prob, &keep, k, &incumbent);
        let accepted = observed <= cfg.eta * predicted;
        if accepted {
            incumbent = candidate.clone();
            incumbent_minorant = Some(candidate_slot);
        } else {
            incumbent_minorant = Some(incumbent_slot);
        }
        minorants = keep;
        trace.push(SdIteration {
            k,
            candidate,
            incumbent: incumbent.clone(),
            accepted,
            minorants: minorants.len(),
            new_at_candidate: at_candidate,
            new_at_incumbent: at_incumbent,
        });
    }

    let k = cfg.iterations;
    let model = SdModel {
        q: prob.q.clone(),
        c: prob.c.clone(),
        cuts: std::iter::once(Cut::new(0.0, &Vector::zeros(prob.n1())))
            .chain(minorants.iter().map(|m| m.scaled_to(k)))
            .collect(),
        k,
    };
    Ok(SdRun {
        incumbent,
        model,
        minorants,
        trace,
        samples: draws.realizations,
        tau,
    })
}

/// Smallest `(1/k) Σ_{i≤k} h(x, ξ_i) − (created/k)·minorant(x)` over stored
/// minorants and audit points (nonnegative when every rescaled minorant is
/// valid).
pub fn audit_minorants(prog: &StochasticProgram, run: &SdRun, points: &[Vector]) -> Result<f64> {
    let prob = prog
        .sqqp()
        .ok_or_else(|| Error::InvalidInput("two-stage problem required".into()))?;
    let k = run.samples.len();
    let mut worst = f64::INFINITY;
    for x in points {
        let mut mean = 0.0;
        for xi in &run.samples {
            mean += sqqp::solve_recourse_dual(prob.reduction(), x, xi, qp::DEFAULT_TOL)?.value;
        }
        mean /= k as f64;
        for m in &run.minorants {
            worst = worst.min(mean - m.scaled_to(k).eval(x));
        }
    }
    Ok(worst)
}

/// `f̌(x) = max{f̂(x), f̂(x̂) − ε′}`.
#[derive(Debug, Clone)]
pub struct AugmentedSdModel {
    pub model: SdModel,
    pub incumbent: Vector,
    pub floor: f64,
    pub eps_prime: f64,
}

impl AugmentedSdModel {
    pub fn eval(&self, x: &Vector) -> f64 {
        self.model.eval(x).max(self.floor)
    }

    pub fn value_and_subgradient(&self, x: &Vector) -> (f64, Vector) {
        let v = self.model.eval(x);
        if v >= self.floor {
            (v, self.model.subgradient(x))
        } else {
            (self.floor, Vector::zeros(x.len()))
        }
    }

    /// `f̌(x̂) − min_X f̌` (at most ε′).
    pub fn certificate(&self, region: &FeasibleRegion) -> Result<f64> {
        let (_, min_model) = self.model.minimum(region)?;
        Ok(self.eval(&self.incumbent) - min_model.max(self.floor))
    }
}

pub fn augment_sd_model(model: &SdModel, incumbent: &Vector, eps_prime: f64) -> Result<AugmentedSdModel> {
    if !(eps_prime > 0.0) {
        return Err(Error::InvalidTolerance);
    }
    Ok(AugmentedSdModel {
        floor: model.eval(incumbent) - eps_prime,
        model: model.clone(),
        incumbent: incumbent.clone(),
        eps_prime,
    })
}

/// `min_X (1/m) Σ f̌_i(x) + (ρ/2)‖(1/m) Σ x̂_i − x‖²`. Each `f̌_i` is a max of a
/// quadratic and a constant, so it enters the master through cuts generated
/// at the master iterates.
pub fn sd_compromise(models: &[AugmentedSdModel], region: &FeasibleRegion, rho: f64) -> Result<CompromiseResult> {
    if models.is_empty() {
        return Err(Error::NoReplications);
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("prox weight must be positive".into()));
    }
    let m = models.len() as f64;
    let mut anchor = Vector::zeros(region.dim());
    for md in models {
        anchor += &md.incumbent;
    }
    anchor /= m;
    let terms: Vec<AggregateTerm> = models
        .iter()
        .map(|md| AggregateTerm {
            quadratic: None,
            oracle: Some(Box::new(move |x: &Vector| Ok(md.value_and_subgradient(x)))),
            seed_points: vec![md.incumbent.clone()],
        })
        .collect();
    let sol = minimize_aggregate(&terms, region, rho, &anchor)?;
    Ok(CompromiseResult {
        stopping_gap: (&anchor - &sol.x).norm(),
        x_c: sol.x,
        anchor,
        value: sol.value,
        aggregate_value: sol.aggregate_value,
        flavor: CompromiseFlavor::SdAugmented,
        rho,
        kkt_residual: sol.kkt,
        eps: models[0].eps_prime,
        master_iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desk::sqqp2;
    use crate::model::ScenarioSpace;
    use crate::rng;
    use crate::sqqp::solve_extensive_form;

    fn single_scenario(i: usize) -> StochasticProgram {
        let mut p = sqqp2().unwrap();
        let atom = p.scenarios.as_finite().unwrap().atoms()[i].clone();
        p.scenarios = ScenarioSpace::equiprobable(vec![atom]).unwrap();
        p
    }

    fn cfg(iterations: usize) -> SdConfig {
        SdConfig {
            iterations,
            ..SdConfig::default()
        }
    }

    #[test]
    fn deterministic_run_reaches_the_qp_solution() {
        for i in [0, 3, 7] {
            let p = single_scenario(i);
            let (xstar, _) = solve_extensive_form(&p).unwrap();
            let run = run_sd(&p, &cfg(200), 11, 0).unwrap();
            let first = (1..=200).find(|&k| (run.incumbent_at(k).unwrap() - &xstar).norm() <= 1e-3);
            assert!(first.is_some(), "scenario {i}: final error {}", (&run.incumbent - &xstar).norm());
        }
    }

    #[test]
    fn rescaled_minorants_stay_below_the_sample_mean() {
        let p = sqqp2().unwrap();
        let mut r = rng::stream(5, 1);
        let points: Vec<Vector> = (0..50).map(|_| p.region.random_point(&mut r)).collect();
        for rep in 0..3 {
            let run = run_sd(&p, &cfg(60), 21, rep).unwrap();
            let slack = audit_minorants(&p, &run, &points).unwrap();
            assert!(slack >= -1e-8, "rep {rep}: slack {slack}");
        }
    }

    #[test]
    fn step_size_precondition() {
        let p = sqqp2().unwrap();
        let bad = SdConfig {
            tau: Some(0.9),
            ..cfg(10)
        };
        assert!(matches!(run_sd(&p, &bad, 1, 0), Err(Error::StepSizeTooSmall)));
        assert!(run_sd(&p, &cfg(1), 1, 0).is_err());
    }

    #[test]
    fn runs_are_nested_in_the_iteration_count() {
        let p = sqqp2().unwrap();
        let short = run_sd(&p, &cfg(30), 9, 4).unwrap();
        let long = run_sd(&p, &cfg(60), 9, 4).unwrap();
        assert_eq!(short.samples[..], long.samples[..30]);
        assert_eq!(short.incumbent, *long.incumbent_at(30).unwrap());
    }

    #[test]
    fn flat_model_is_unchanged_by_augmentation() {
        let model = SdModel {
            q: Matrix::zeros(2, 2),
            c: Vector::zeros(2),
            cuts: vec![Cut::new(1.5, &Vector::zeros(2))],
            k: 1,
        };
        let aug = augment_sd_model(&model, &Vector::from_element(2, 0.3), 1e-3).unwrap();
        let mut r = rng::stream(2, 2);
        for _ in 0..20 {
            let x = FeasibleRegion::unit_box(2).random_point(&mut r);
            assert_eq!(aug.eval(&x), model.eval(&x));
        }
        assert!(augment_sd_model(&model, &Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn incumbent_certificate_after_augmentation() {
        let p = sqqp2().unwrap();
        for rep in 0..4 {
            let run = run_sd(&p, &cfg(80), 3, rep).unwrap();
            let aug = augment_sd_model(&run.model, &run.incumbent, 1e-3).unwrap();
            assert_eq!(aug.eval(&run.incumbent), run.model.eval(&run.incumbent));
            let gap = aug.certificate(&p.region).unwrap();
            assert!(gap <= 1e-3 + 1e-9 && gap >= 0.0, "rep {rep}: gap {gap}");
        }
    }

    #[test]
    fn single_run_compromise_matches_its_own_prox_master() {
        let p = sqqp2().unwrap();
        let run = run_sd(&p, &cfg(100), 8, 2).unwrap();
        let aug = augment_sd_model(&run.model, &run.incumbent, 1e-3).unwrap();
        let rho = 50.0;
        let res = sd_compromise(std::slice::from_ref(&aug), &p.region, rho).unwrap();
        // Without the floor: prox step on f̂ at its own incumbent. If that point
        // sits above the floor it also minimizes the floored problem.
        let master = ProxMaster::new(run.model.cuts.clone(), p.region.clone(), rho, run.incumbent.clone())
            .with_quadratic(run.model.q.clone(), run.model.c.clone());
        let direct = qp::solve_prox_master(&master, qp::DEFAULT_TOL).unwrap().point;
        assert!(run.model.eval(&direct) >= aug.floor);
        assert!((&res.x_c - &direct).norm() <= 1e-6, "{} vs {}", res.x_c, direct);
    }

    #[test]
    fn identical_runs_compromise_at_the_incumbent() {
        let p = single_scenario(5);
        let models: Vec<AugmentedSdModel> = (0..3)
            .map(|rep| {
                let run = run_sd(&p, &cfg(120), 4, rep).unwrap();
                augment_sd_model(&run.model, &run.incumbent, 1e-3).unwrap()
            })
            .collect();
        for md in &models[1..] {
            assert_eq!(md.incumbent, models[0].incumbent);
        }
        let res = sd_compromise(&models, &p.region, 120.0 * 120.0).unwrap();
        assert!((&res.x_c - &models[0].incumbent).norm() <= 1e-6);
        assert!(res.stopping_gap <= 1e-6);
    }

    #[test]
    fn lipschitz_constant_covers_the_box() {
        let p = sqqp2().unwrap();
        let lf = lipschitz_constant(&p).unwrap();
        let prob = p.sqqp().unwrap();
        let expected = (&prob.q * Vector::from_element(2, 1.0)).norm() + prob.c.norm() + p.constants.recourse_lipschitz.unwrap();
        assert!((lf - expected).abs() < 1e-12);
    }
}
