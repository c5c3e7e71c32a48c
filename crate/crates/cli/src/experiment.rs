use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use compromise_core::cutplane::{
    algorithm_augmented_compromise, audit_model, augment_model, run_cutting_plane, CutPlaneConfig,
};
use compromise_core::model::{sample_scenarios, true_objective, true_optimum, StochasticProgram};
use compromise_core::qp::project_onto_region;
use compromise_core::reliability::PointSet;
use compromise_core::rng::{derive_seed, stream};
use compromise_core::saa::{
    build_saa, exact_compromise, inexact_compromise, margin_of_error, sample_variance, solve_saa, CompromiseResult,
    ReplicationResult, SaaInstance, SolveMethod,
};
use compromise_core::sd::{audit_minorants, augment_sd_model, run_sd, sd_compromise, SdConfig, SdModel};
use compromise_core::Vector;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Flavor, ProblemSource, RhoRule};
use crate::record::{
    cell_file, read_cell, read_config, write_cell, write_config, AuditRecord, CellOutcome, CellRecord,
    ReplicationRecord, SdModelRecord, Timing,
};
use crate::report::{build_report, Report};

const AUDIT_STREAM: u64 = 0xA0D1;
const EXACT_EPS: f64 = 1e-6;

/// Ground truth shared by every cell.
#[derive(Debug, Clone)]
pub struct Truth {
    pub theta: f64,
    pub minimizer: Vector,
    /// Grid points of `X*_ε`.
    pub set: PointSet,
    pub eps: f64,
}

pub fn compute_truth(cfg: &ExperimentConfig, prob: &StochasticProgram) -> Result<Truth> {
    let t = true_optimum(prob, cfg.grid_step, cfg.eps)?;
    Ok(Truth {
        theta: t.theta,
        minimizer: t.minimizer,
        set: t.set,
        eps: cfg.eps,
    })
}

impl Truth {
    /// `Δ({x}, X*_ε)`: zero when `x` itself is ε-optimal, otherwise the
    /// distance to the nearest grid member or to `x*`.
    pub fn delta(&self, prob: &StochasticProgram, x: &Vector) -> Result<f64> {
        if true_objective(prob, x)? <= self.theta + self.eps {
            return Ok(0.0);
        }
        Ok(self.set.distance_to(x).min((x - &self.minimizer).norm()))
    }
}

pub struct Harness<'a> {
    pub cfg: &'a ExperimentConfig,
    pub prob: &'a StochasticProgram,
    pub truth: &'a Truth,
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn audit_points(prob: &StochasticProgram, cell_seed: u64, index: u64, count: usize) -> Vec<Vector> {
    let mut r = stream(derive_seed(cell_seed, &[index, AUDIT_STREAM]), 0);
    (0..count).map(|_| prob.region.random_point(&mut r)).collect()
}

impl Harness<'_> {
    fn instance(&self, n: usize, cell_seed: u64, index: u64) -> Result<SaaInstance<'_>> {
        Ok(build_saa(self.prob, sample_scenarios(&self.prob.scenarios, n, cell_seed, index)?)?)
    }

    pub fn replicate(&self, n: usize, cell_seed: u64, index: u64) -> Result<ReplicationRecord> {
        let cfg = self.cfg;
        match cfg.flavor {
            Flavor::Saa => {
                let inst = self.instance(n, cell_seed, index)?;
                let r = solve_saa(&inst, 0.0)?;
                Ok(ReplicationRecord {
                    index,
                    x: to_vec(&r.x),
                    value: r.value,
                    theta: r.theta,
                    eps_used: r.eps_used,
                    iterations: r.trace.len(),
                    model: None,
                    sd: None,
                    audit: None,
                })
            }
            Flavor::Cutplane => {
                let inst = self.instance(n, cell_seed, index)?;
                let run = run_cutting_plane(
                    &inst,
                    &CutPlaneConfig {
                        eps1: cfg.eps1(),
                        max_iters: cfg.max_iters,
                        eps2: cfg.eps2(),
                    },
                )?;
                let audit = if cfg.audit_points > 0 {
                    let pts = audit_points(self.prob, cell_seed, index, cfg.audit_points);
                    Some(AuditRecord {
                        slack: audit_model(&run.model, &inst, &pts)?,
                        certificate: run.model.certificate_holds(),
                    })
                } else {
                    None
                };
                Ok(ReplicationRecord {
                    index,
                    x: to_vec(&run.x),
                    value: run.value,
                    theta: run.lower,
                    eps_used: run.value - run.lower,
                    iterations: run.iterations,
                    model: Some(run.model),
                    sd: None,
                    audit,
                })
            }
            Flavor::Sd => {
                let sd_cfg = SdConfig {
                    iterations: n,
                    tau: cfg.sd.tau,
                    eta: cfg.sd.eta,
                };
                let run = run_sd(self.prob, &sd_cfg, cell_seed, index)?;
                let audit = if cfg.audit_points > 0 {
                    let pts = audit_points(self.prob, cell_seed, index, cfg.audit_points);
                    let aug = augment_sd_model(&run.model, &run.incumbent, cfg.eps_prime())?;
                    Some(AuditRecord {
                        slack: audit_minorants(self.prob, &run, &pts)?,
                        certificate: aug.certificate(&self.prob.region)? <= cfg.eps_prime() + 1e-9,
                    })
                } else {
                    None
                };
                let (_, lower) = run.model.minimum(&self.prob.region)?;
                let value = run.model.eval(&run.incumbent);
                Ok(ReplicationRecord {
                    index,
                    x: to_vec(&run.incumbent),
                    value,
                    theta: lower,
                    eps_used: value - lower,
                    iterations: run.trace.len(),
                    model: None,
                    sd: Some(SdModelRecord {
                        cuts: run.model.cuts.clone(),
                        k: run.model.k,
                        accepted: run.trace.iter().filter(|t| t.accepted).count(),
                    }),
                    audit,
                })
            }
        }
    }

    fn compromise(&self, insts: &[SaaInstance], reps: &[ReplicationRecord], rho: f64) -> Result<CompromiseResult> {
        let points: Vec<Vector> = reps.iter().map(|r| Vector::from_column_slice(&r.x)).collect();
        let region = &self.prob.region;
        Ok(match self.cfg.flavor {
            Flavor::Saa => {
                let worst = reps.iter().map(|r| r.eps_used).fold(0.0f64, f64::max);
                if worst <= EXACT_EPS {
                    let results: Vec<ReplicationResult> = reps
                        .iter()
                        .zip(&points)
                        .map(|(r, x)| ReplicationResult {
                            x: x.clone(),
                            value: r.value,
                            theta: r.theta,
                            eps_used: r.eps_used,
                            method: SolveMethod::Folded,
                            model: None,
                            trace: Vec::new(),
                        })
                        .collect();
                    exact_compromise(&results, insts, rho)?
                } else {
                    inexact_compromise(&points, insts, rho, worst)?
                }
            }
            Flavor::Cutplane => {
                let models = reps
                    .iter()
                    .map(|r| r.model.clone().ok_or_else(|| anyhow!("record incomplete: cut model missing")))
                    .collect::<Result<Vec<_>>>()?;
                let augmented = augment_model(&models, &points, insts, self.cfg.eps2())?;
                algorithm_augmented_compromise(&augmented, &points, region, rho)?
            }
            Flavor::Sd => {
                let sq = self.prob.sqqp().ok_or_else(|| anyhow!("SD needs a two-stage problem"))?;
                let models = reps
                    .iter()
                    .zip(&points)
                    .map(|(r, x)| {
                        let sd = r.sd.as_ref().ok_or_else(|| anyhow!("record incomplete: SD model missing"))?;
                        let model = SdModel {
                            q: sq.q.clone(),
                            c: sq.c.clone(),
                            cuts: sd.cuts.clone(),
                            k: sd.k,
                        };
                        Ok(augment_sd_model(&model, x, self.cfg.eps_prime())?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                sd_compromise(&models, region, rho)?
            }
        })
    }

    /// Aggregation step of one cell from its stored replications.
    pub fn aggregate(&self, n: usize, cell_seed: u64, reps: &[ReplicationRecord], rho: f64) -> Result<CellOutcome> {
        let insts = reps
            .iter()
            .map(|r| self.instance(n, cell_seed, r.index))
            .collect::<Result<Vec<_>>>()?;
        let res = self.compromise(&insts, reps, rho)?;
        let x = project_onto_region(&res.x_c, &self.prob.region)?;
        let delta = self.truth.delta(self.prob, &x)?;
        let sample_variances = if n >= 2 {
            insts.iter().map(|inst| sample_variance(inst, &x)).collect::<compromise_core::Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let margin = if sample_variances.is_empty() {
            None
        } else {
            Some(margin_of_error(&sample_variances, n, self.cfg.alpha)?)
        };
        Ok(CellOutcome {
            rho,
            x_c: to_vec(&res.x_c),
            anchor: to_vec(&res.anchor),
            value: res.value,
            aggregate_value: res.aggregate_value,
            stopping_gap: res.stopping_gap,
            kkt_residual: res.kkt_residual,
            delta,
            cost_error: (res.value - self.truth.theta).abs(),
            compromise_error: (&x - &self.truth.minimizer).norm(),
            replication_errors: reps
                .iter()
                .map(|r| (Vector::from_column_slice(&r.x) - &self.truth.minimizer).norm())
                .collect(),
            sample_variances,
            margin,
        })
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Report,
    /// `(n, m, rep, message)` of every failed cell.
    pub failures: Vec<(usize, usize, usize, String)>,
}

/// Master seed of macro-replication `rep`; shared across `n` and `m`, so the
/// cells of one macro-replication use common random numbers.
pub fn cell_seed(cfg: &ExperimentConfig, rep: usize) -> u64 {
    derive_seed(cfg.seed, &[rep as u64])
}

fn experiment_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out")).join(cfg.hash())
}

fn existing_cell(dir: &Path, hash: &str, n: usize, m: usize, rep: usize) -> Option<CellRecord> {
    let cell = read_cell(&cell_file(dir, n, m, rep)).ok()?;
    (cell.config_hash == hash && cell.error.is_none()).then_some(cell)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

/// Replication step over every `(n, rep)` (the largest m, reused by the
/// smaller m), aggregation per cell, then the report. Completed cells are
/// written as they finish and skipped on a rerun into the same directory.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    // The record carries the problem document, not a path to it.
    let mut resolved = cfg.clone();
    resolved.problem = ProblemSource::Doc(cfg.problem.document(base)?);
    let cfg = &resolved;
    let prob = cfg.problem.build(base)?;
    if cfg.flavor == Flavor::Sd && prob.sqqp().is_none() {
        bail!("the sd flavor needs a two-stage SQQP problem");
    }
    let hash = cfg.hash();
    let dir = experiment_dir(cfg);
    fs::create_dir_all(dir.join("cells")).with_context(|| format!("creating {}", dir.display()))?;
    write_config(&dir, cfg)?;
    let truth = compute_truth(cfg, &prob)?;
    let h = Harness {
        cfg,
        prob: &prob,
        truth: &truth,
    };
    let max_m = cfg.max_m();
    let rule = cfg.rho_rule();
    let tasks: Vec<(usize, usize)> = (0..cfg.macro_reps).flat_map(|rep| cfg.n.iter().map(move |&n| (n, rep))).collect();

    let run_task = |&(n, rep): &(usize, usize)| -> Result<()> {
        if cfg.m.iter().all(|&m| existing_cell(&dir, &hash, n, m, rep).is_some()) {
            return Ok(());
        }
        let seed = cell_seed(cfg, rep);
        let start = Instant::now();
        let reps: std::result::Result<Vec<ReplicationRecord>, String> = (0..max_m as u64)
            .map(|i| h.replicate(n, seed, i).map_err(|e| format!("replication {i}: {e:#}")))
            .collect();
        let replication_seconds = start.elapsed().as_secs_f64();
        for &m in &cfg.m {
            let t0 = Instant::now();
            let (replications, outcome, error) = match &reps {
                Ok(all) => {
                    let mine = all[..m].to_vec();
                    match h.aggregate(n, seed, &mine, rule.rho(n)) {
                        Ok(o) => (mine, Some(o), None),
                        Err(e) => (mine, None, Some(format!("aggregation: {e:#}"))),
                    }
                }
                Err(e) => (Vec::new(), None, Some(e.clone())),
            };
            let cell = CellRecord {
                config_hash: hash.clone(),
                n,
                m,
                rep,
                cell_seed: seed,
                replications,
                outcome,
                error,
                timing: Timing {
                    replication_seconds,
                    aggregation_seconds: t0.elapsed().as_secs_f64(),
                },
            };
            write_cell(&dir, &cell)?;
        }
        Ok(())
    };
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| tasks.par_iter().map(run_task).collect::<Result<Vec<()>>>())?;

    let cells = load_cells(&dir, cfg)?;
    finish(cfg, &prob, dir, cells)
}

fn finish(
    cfg: &ExperimentConfig,
    prob: &StochasticProgram,
    dir: PathBuf,
    cells: Vec<CellRecord>,
) -> Result<RunOutcome> {
    let failures = cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| (c.n, c.m, c.rep, e.clone())))
        .collect();
    let report = build_report(cfg, prob, &cells)?;
    Ok(RunOutcome { dir, report, failures })
}

/// Every cell of the grid, in `(n, m, rep)` order.
pub fn load_cells(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut cells = Vec::new();
    let hash = cfg.hash();
    for &n in &cfg.n {
        for &m in &cfg.m {
            for rep in 0..cfg.macro_reps {
                let cell = read_cell(&cell_file(dir, n, m, rep))?;
                if cell.config_hash != hash || cell.n != n || cell.m != m || cell.rep != rep {
                    bail!("record incomplete: cell {n}_{m}_{rep} belongs to another run");
                }
                if cell.error.is_none() && (cell.outcome.is_none() || cell.replications.len() != m) {
                    bail!("record incomplete: cell {n}_{m}_{rep} lacks its outputs");
                }
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

/// Recomputes every compromise and statistic from the stored replications,
/// optionally under another ρ rule. Nothing is written to the record.
pub fn resume_aggregation(dir: &Path, rho: Option<RhoRule>) -> Result<RunOutcome> {
    let mut cfg = read_config(dir)?;
    let prob = cfg.problem.build(dir)?;
    let truth = compute_truth(&cfg, &prob)?;
    let cells = load_cells(dir, &cfg)?;
    if let Some(r) = rho {
        cfg.rho = Some(r);
    }
    let rule = cfg.rho_rule();
    let h = Harness {
        cfg: &cfg,
        prob: &prob,
        truth: &truth,
    };
    let cells = cells
        .into_iter()
        .map(|mut c| {
            if c.error.is_none() {
                c.outcome = Some(h.aggregate(c.n, c.cell_seed, &c.replications, rule.rho(c.n))?);
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    finish(&cfg, &prob, dir.to_path_buf(), cells)
}

/// Report from the stored outcomes without recomputation.
pub fn load_report(dir: &Path) -> Result<RunOutcome> {
    let cfg = read_config(dir)?;
    let prob = cfg.problem.build(dir)?;
    let cells = load_cells(dir, &cfg)?;
    finish(&cfg, &prob, dir.to_path_buf(), cells)
}
