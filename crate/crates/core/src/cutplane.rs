//! Kelley cutting planes for replication models, ε₂-augmentation of the
//! models at every replication's candidate, and the compromise over the
//! augmented models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{FeasibleRegion, FEAS_TOL};
use crate::qp::{self, Cut, CutGroup, ProxMaster};
use crate::saa::{CompromiseFlavor, CompromiseResult, SaaInstance};

pub type Oracle<'a> = &'a dyn Fn(&Vector) -> Result<(f64, Vector)>;

const DEDUP_TOL: f64 = 1e-12;

fn push_unique(cuts: &mut Vec<Cut>, c: Cut) -> bool {
    if cuts.iter().any(|k| k.near(&c, DEDUP_TOL)) {
        false
    } else {
        cuts.push(c);
        true
    }
}

#[derive(Debug, Clone)]
pub struct KelleyRun {
    /// Last iterate, a minimizer of the final model.
    pub x: Vector,
    /// Weighted objective at `x`.
    pub value: f64,
    /// Minimum of the final model (lower bound on the optimum).
    pub lower: f64,
    pub iterations: usize,
    /// Final cut lists, one per function.
    pub cuts: Vec<Vec<Cut>>,
    /// `(value, lower)` per iteration.
    pub trace: Vec<(f64, f64)>,
}

/// Kelley's method for `Σ_g w_g f_g` over X: each iteration minimizes the
/// current polyhedral model by LP and adds the linearization of every `f_g`
/// at the minimizer; stops once `f(x_k) − model(x_k) ≤ tol` at the model
/// minimizer `x_k`.
pub fn kelley(
    funcs: &[Oracle],
    weights: &[f64],
    region: &FeasibleRegion,
    start: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<KelleyRun> {
    if funcs.is_empty() || funcs.len() != weights.len() {
        return Err(Error::InvalidInput("one weight per function".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidTolerance);
    }
    let x0 = qp::project_onto_region(start, region)?;
    let mut groups: Vec<CutGroup> = Vec::with_capacity(funcs.len());
    for (f, &w) in funcs.iter().zip(weights) {
        let (v, g) = f(&x0)?;
        groups.push(CutGroup {
            weight: w,
            cuts: vec![Cut::at(v, &g, &x0)],
        });
    }
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let (x, lower) = qp::minimize_polyhedral(&groups, region)?;
        let evals: Vec<(f64, Vector)> = funcs.iter().map(|f| f(&x)).collect::<Result<_>>()?;
        let value: f64 = evals.iter().zip(weights).map(|((v, _), w)| w * v).sum();
        trace.push((value, lower));
        let mut added = false;
        if value - lower > tol {
            for (grp, (v, g)) in groups.iter_mut().zip(&evals) {
                if *v - qp::max_of_cuts(&grp.cuts, &x) > 0.0 {
                    added |= push_unique(&mut grp.cuts, Cut::at(*v, g, &x));
                }
            }
        }
        if value - lower <= tol || !added {
            return Ok(KelleyRun {
                x,
                value,
                lower,
                iterations: it,
                cuts: groups.into_iter().map(|g| g.cuts).collect(),
                trace,
            });
        }
    }
    Err(Error::TerminationUnmet)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPlaneConfig {
    /// Termination gap ε₁ > 0.
    pub eps1: f64,
    pub max_iters: usize,
    /// Augmentation slack ε₂ ≥ 0.
    pub eps2: f64,
}

impl CutPlaneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) || !(self.eps2 >= 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidTolerance);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// Replication whose candidate anchors the added cut.
    pub source: usize,
    pub anchor: Vec<f64>,
    pub eps2: f64,
}

/// Termination certificate `f_n(x̂) − model(x̂) ≤ ε₁` at a model minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub point: Vec<f64>,
    pub value: f64,
    pub model_value: f64,
    pub eps1: f64,
}

/// Max of affine minorants of one replication's `f_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearModel {
    pub cuts: Vec<Cut>,
    pub sample_seed: u64,
    pub sample_replication: u64,
    pub augmentations: Vec<Augmentation>,
    pub certificate: Option<Certificate>,
}

impl PiecewiseLinearModel {
    pub fn eval(&self, x: &Vector) -> f64 {
        qp::max_of_cuts(&self.cuts, x)
    }

    /// Adds a cut unless one within 1e-12 is already present.
    pub fn insert(&mut self, c: Cut) -> bool {
        push_unique(&mut self.cuts, c)
    }

    /// Re-checks the stored certificate against the stored cuts.
    pub fn certificate_holds(&self) -> bool {
        match &self.certificate {
            None => false,
            Some(c) => {
                let x = Vector::from_column_slice(&c.point);
                let mv = self.eval(&x);
                (mv - c.model_value).abs() <= 1e-9 * c.model_value.abs().max(1.0) && c.value - mv <= c.eps1 + 1e-12
            }
        }
    }
}

/// Smallest `f_n(x) − model(x)` over the given points (nonnegative when the
/// model is an outer approximation there).
pub fn audit_model(model: &PiecewiseLinearModel, inst: &SaaInstance, points: &[Vector]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for x in points {
        worst = worst.min(inst.value(x)? - model.eval(x));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct CutPlaneRun {
    pub x: Vector,
    pub model: PiecewiseLinearModel,
    /// `f_n(x̂)`.
    pub value: f64,
    /// `min_X model`, attained at `x̂`.
    pub lower: f64,
    pub iterations: usize,
    pub trace: Vec<(f64, f64)>,
    /// Every point where `f_n` was evaluated.
    pub visited: Vec<Vector>,
}

pub fn run_cutting_plane(inst: &SaaInstance, cfg: &CutPlaneConfig) -> Result<CutPlaneRun> {
    cfg.validate()?;
    let visited = std::cell::RefCell::new(Vec::new());
    let f = |x: &Vector| -> Result<(f64, Vector)> {
        visited.borrow_mut().push(x.clone());
        inst.value_and_subgradient(x)
    };
    let start = inst.region().center();
    let run = kelley(&[&f], &[1.0], inst.region(), &start, cfg.eps1, cfg.max_iters)?;
    let cuts = run.cuts.into_iter().next().expect("one group");
    let model = PiecewiseLinearModel {
        certificate: Some(Certificate {
            point: run.x.iter().copied().collect(),
            value: run.value,
            model_value: qp::max_of_cuts(&cuts, &run.x),
            eps1: cfg.eps1,
        }),
        cuts,
        sample_seed: inst.samples.seed,
        sample_replication: inst.samples.replication,
        augmentations: Vec::new(),
    };
    Ok(CutPlaneRun {
        x: run.x,
        model,
        value: run.value,
        lower: run.lower,
        iterations: run.iterations,
        trace: run.trace,
        visited: visited.into_inner(),
    })
}

/// Adds to replication i's model the cuts `f_n(x̂_j; ξ_i) + ⟨υ, x − x̂_j⟩ − ε₂`
/// at every replication's candidate `x̂_j`, with `υ` an exact subgradient.
pub fn augment_model(
    models: &[PiecewiseLinearModel],
    anchors: &[Vector],
    insts: &[SaaInstance],
    eps2: f64,
) -> Result<Vec<PiecewiseLinearModel>> {
    if models.len() != insts.len() || anchors.len() != insts.len() {
        return Err(Error::InvalidInput("models, anchors and instances must align".into()));
    }
    if !(eps2 >= 0.0) {
        return Err(Error::InvalidTolerance);
    }
    if let Some(inst) = insts.first() {
        if anchors.iter().any(|a| !inst.region().contains(a, FEAS_TOL)) {
            return Err(Error::AnchorOutsideRegion);
        }
    }
    models
        .iter()
        .zip(insts)
        .map(|(model, inst)| {
            let mut out = model.clone();
            for (j, a) in anchors.iter().enumerate() {
                let (v, g) = inst.value_and_subgradient(a)?;
                out.insert(Cut::at(v, &g, a).lowered(eps2));
                out.augmentations.push(Augmentation {
                    source: j,
                    anchor: a.iter().copied().collect(),
                    eps2,
                });
            }
            Ok(out)
        })
        .collect()
}

/// `min_X (1/m) Σ f̌_i(x) + (ρ/2)‖x − (1/m) Σ x̂_j‖²` as one prox master over
/// all cuts, each replication's block weighted 1/m.
pub fn algorithm_augmented_compromise(
    models: &[PiecewiseLinearModel],
    anchors: &[Vector],
    region: &FeasibleRegion,
    rho: f64,
) -> Result<CompromiseResult> {
    if models.is_empty() || anchors.is_empty() {
        return Err(Error::NoReplications);
    }
    if models.len() != anchors.len() {
        return Err(Error::InvalidInput("one anchor per model".into()));
    }
    let m = models.len() as f64;
    let mut anchor = Vector::zeros(region.dim());
    for a in anchors {
        anchor += a;
    }
    anchor /= m;
    let master = ProxMaster {
        groups: models
            .iter()
            .map(|md| CutGroup {
                weight: 1.0 / m,
                cuts: md.cuts.clone(),
            })
            .collect(),
        region: region.clone(),
        rho,
        anchor: anchor.clone(),
        quadratic: None,
    };
    let sol = qp::solve_prox_master(&master, qp::DEFAULT_TOL)?;
    Ok(CompromiseResult {
        stopping_gap: (&anchor - &sol.point).norm(),
        aggregate_value: master.model_value(&sol.point),
        x_c: sol.point,
        anchor,
        value: sol.value,
        flavor: CompromiseFlavor::AlgorithmAugmented,
        rho,
        kkt_residual: sol.kkt_residual,
        eps: 0.0,
        master_iterations: sol.iterations,
    })
}
