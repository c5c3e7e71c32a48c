use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use compromise_core::document::ProblemDoc;
use compromise_core::model::StochasticProgram;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Exact SAA replications, exact compromise.
    Saa,
    /// Kelley replications, algorithm-augmented compromise.
    Cutplane,
    /// Stochastic decomposition replications, SD-augmented compromise.
    Sd,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Saa => "saa",
            Flavor::Cutplane => "cutplane",
            Flavor::Sd => "sd",
        })
    }
}

/// Prox weight as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoRule {
    Fixed { value: f64 },
    /// `K·n`
    Linear { k: f64 },
    /// `K·n²`
    Quadratic { k: f64 },
}

impl RhoRule {
    pub fn rho(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            RhoRule::Fixed { value } => value,
            RhoRule::Linear { k } => k * n,
            RhoRule::Quadratic { k } => k * n * n,
        }
    }

    pub fn default_for(flavor: Flavor) -> Self {
        match flavor {
            Flavor::Saa | Flavor::Cutplane => RhoRule::Linear { k: 1.0 },
            Flavor::Sd => RhoRule::Quadratic { k: 1.0 },
        }
    }
}

/// `fixed:V`, `n:K` or `n2:K`.
impl FromStr for RhoRule {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, v) = s.split_once(':').context("expected fixed:V, n:K or n2:K")?;
        let v: f64 = v.parse().with_context(|| format!("bad number in {s}"))?;
        Ok(match kind {
            "fixed" => RhoRule::Fixed { value: v },
            "n" => RhoRule::Linear { k: v },
            "n2" => RhoRule::Quadratic { k: v },
            _ => bail!("unknown ρ rule {kind}"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    File { file: PathBuf },
    Doc(ProblemDoc),
}

impl ProblemSource {
    /// The document itself, reading a referenced file relative to `base`.
    pub fn document(&self, base: &Path) -> Result<ProblemDoc> {
        Ok(match self {
            ProblemSource::File { file } => {
                let path = if file.is_absolute() { file.clone() } else { base.join(file) };
                ProblemDoc::load(&path).with_context(|| format!("loading problem {}", path.display()))?
            }
            ProblemSource::Doc(d) => d.clone(),
        })
    }

    pub fn build(&self, base: &Path) -> Result<StochasticProgram> {
        Ok(self.document(base)?.build()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdSettings {
    /// Initial step τ; default `2/θ_min(Q)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

impl Default for SdSettings {
    fn default() -> Self {
        SdSettings {
            tau: None,
            eta: default_eta(),
        }
    }
}

fn default_eta() -> f64 {
    0.2
}
fn default_eps() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    0.25
}
fn default_theta() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_grid_step() -> f64 {
    0.01
}
fn default_max_iters() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub flavor: Flavor,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub macro_reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoRule>,
    /// Tolerance of the target set `X*_ε`.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Cutting-plane termination gap; default ε.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    /// Augmentation slack; default 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    /// SD model floor offset; default ε.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prime: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Weight of the variance in the mean–variance objective.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Confidence level parameter of the margin of error.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Step of the verification grid.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Rate constant K of the SD bounds; calibrated from the runs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rate: Option<f64>,
    /// Radius parameter t of the SD event probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_t: Option<f64>,
    /// Random points per replication at which models are audited (0 = off).
    #[serde(default)]
    pub audit_points: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub sd: SdSettings,
    /// Worker threads; 0 picks the number of CPUs. Not part of the hash.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        // Problem files are resolved against the config's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.problem = ProblemSource::Doc(cfg.problem.document(base)?);
        Ok(cfg)
    }

    pub fn rho_rule(&self) -> RhoRule {
        self.rho.unwrap_or_else(|| RhoRule::default_for(self.flavor))
    }

    pub fn eps1(&self) -> f64 {
        self.eps1.unwrap_or(self.eps)
    }

    pub fn eps2(&self) -> f64 {
        self.eps2.unwrap_or(0.0)
    }

    pub fn eps_prime(&self) -> f64 {
        self.eps_prime.unwrap_or(self.eps)
    }

    pub fn max_m(&self) -> usize {
        self.m.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.m.is_empty() {
            bail!("n and m grids must be nonempty");
        }
        if self.n.iter().chain(&self.m).any(|&v| v == 0) {
            bail!("grid values must be at least 1");
        }
        if self.macro_reps < 2 {
            bail!("at least two macro-replications are needed for variance statistics");
        }
        if !(self.eps > 0.0) || !(self.eps1() > 0.0) || !(self.eps2() >= 0.0) {
            bail!("tolerances must be positive (ε₂ nonnegative)");
        }
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            bail!("λ must lie in (0, 1/2)");
        }
        if !(self.theta > 0.0) || !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.grid_step > 0.0) {
            bail!("ϑ and the grid step must be positive and α in (0, 1)");
        }
        let rule = self.rho_rule();
        if self.n.iter().any(|&n| !(rule.rho(n) > 0.0)) {
            bail!("ρ must be positive");
        }
        if self.flavor == Flavor::Sd {
            if self.n.iter().any(|&n| n < 2) {
                bail!("stochastic decomposition needs n ≥ 2");
            }
            if self.eps_prime() < self.eps {
                bail!("ε′ must be at least ε");
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the results (not workers or output).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.workers = 0;
        canon.out = None;
        let text = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
flavor = "saa"
n = [25, 100]
m = [1, 5]
macro_reps = 10
[problem]
desk = "QUAD2"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.eps, 0.1);
        assert_eq!(cfg.rho_rule().rho(100), 100.0);
        assert_eq!(cfg.eps1(), 0.1);
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.workers = 7;
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rho_rules_parse() {
        assert_eq!("n2:0.5".parse::<RhoRule>().unwrap().rho(10), 50.0);
        assert_eq!("fixed:3".parse::<RhoRule>().unwrap().rho(10), 3.0);
        assert!("cubic:1".parse::<RhoRule>().is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.macro_reps = 1;
        assert!(cfg.validate().is_err());
        cfg.macro_reps = 2;
        cfg.m = vec![0];
        assert!(cfg.validate().is_err());
    }
}
