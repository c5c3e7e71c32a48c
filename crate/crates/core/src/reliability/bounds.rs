use crate::error::{Error, Result};
use crate::model::StochasticProgram;

/// Constants entering the error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub lf: f64,
    pub gamma: f64,
    pub mf: f64,
    /// Edge length of a cube containing X.
    pub d: f64,
    /// Diameter of X.
    pub dx: f64,
    pub p: usize,
    pub lambda: f64,
}

impl BoundConstants {
    pub fn from_program(prob: &StochasticProgram, lambda: f64) -> Self {
        BoundConstants {
            lf: prob.constants.lipschitz,
            gamma: prob.constants.holder,
            mf: prob.constants.bound,
            d: prob.region.edge(),
            dx: prob.region.diameter(),
            p: prob.region.dim(),
            lambda,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            return Err(Error::ExponentOutOfRange);
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput("Hölder exponent must lie in (0, 1]".into()));
        }
        if self.lf < 0.0 || self.mf < 0.0 || self.d < 0.0 || self.dx < 0.0 {
            return Err(Error::InvalidInput("constants must be nonnegative".into()));
        }
        Ok(())
    }

    /// Hölder constant of the squared deviation `(F − y)²`.
    pub fn lh(&self) -> f64 {
        4.0 * self.mf * (self.lf * self.lf + 1.0).sqrt()
    }

    /// Uniform bound of the squared deviation.
    pub fn mh(&self) -> f64 {
        4.0 * self.mf * self.mf
    }
}

fn sqrt_two_ln_two() -> f64 {
    (2.0 * std::f64::consts::LN_2).sqrt()
}

/// `N_F = L_F D^γ p^{γ/2} + M_F √(2 ln 2) + M_F √p / √(γ(1−2λ)e)`.
pub fn constant_nf(bc: &BoundConstants) -> Result<f64> {
    bc.check()?;
    let p = bc.p as f64;
    let e = std::f64::consts::E;
    Ok(bc.lf * bc.d.powf(bc.gamma) * p.powf(bc.gamma / 2.0)
        + bc.mf * sqrt_two_ln_two()
        + bc.mf * p.sqrt() / (bc.gamma * (1.0 - 2.0 * bc.lambda) * e).sqrt())
}

/// `N_H = L_H D √(p+1) + M_H √(2 ln 2) + M_F √(p+1) / √((1−2λ)e)`.
pub fn constant_nh(bc: &BoundConstants) -> Result<f64> {
    bc.check()?;
    let p1 = (bc.p + 1) as f64;
    let e = std::f64::consts::E;
    Ok(bc.lh() * bc.d * p1.sqrt()
        + bc.mh() * sqrt_two_ln_two()
        + bc.mf * p1.sqrt() / ((1.0 - 2.0 * bc.lambda) * e).sqrt())
}

/// `Δ(X_ε′, X_ε) ≤ ((ε′ − ε)/ε) D_X` for `ε′ ≥ ε > 0`.
pub fn sublevel_gap_bound(eps_prime: f64, eps: f64, dx: f64) -> Result<f64> {
    if !(eps > 0.0) || eps_prime < eps {
        return Err(Error::InvalidTolerance);
    }
    Ok((eps_prime - eps) / eps * dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundFlavor {
    /// Optimal-value error of the exact compromise problem.
    SaaCost,
    /// Decision error of the exact or inexact compromise problem.
    SaaSolution,
    /// Decision error of the algorithm-augmented compromise problem.
    CutPlane,
    /// Decision error of the SD-augmented compromise problem.
    Sd,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub rho: f64,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub eps_prime: Option<f64>,
    /// Radius parameter of the SD probability bound.
    pub t: Option<f64>,
    /// Rate constant K of the SD convergence rate.
    pub k_rate: Option<f64>,
    /// Lipschitz constant L_f of the SD objective.
    pub lf_objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundRecord {
    pub nf: f64,
    pub cost_mean: Option<f64>,
    pub cost_variance: Option<f64>,
    pub delta_mean_exact: Option<f64>,
    pub tail_threshold: Option<f64>,
    pub delta_variance_exact: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau3: Option<f64>,
    pub delta_mean_cutplane: Option<f64>,
    pub delta_variance_cutplane: Option<f64>,
    pub sd_event_radius: Option<f64>,
    pub sd_event_probability: Option<f64>,
    pub delta_mean_sd: Option<f64>,
    pub delta_variance_sd: Option<f64>,
}

impl BoundRecord {
    /// Bound on E[Δ] matching the flavor.
    pub fn delta_mean(&self) -> Option<f64> {
        self.delta_mean_sd.or(self.delta_mean_cutplane).or(self.delta_mean_exact)
    }

    /// Bound on Var[Δ] matching the flavor.
    pub fn delta_variance(&self) -> Option<f64> {
        self.delta_variance_sd.or(self.delta_variance_cutplane).or(self.delta_variance_exact)
    }
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InsufficientConstants(name.to_string()))
}

pub fn theoretical_bounds(bc: &BoundConstants, inp: &BoundInputs, flavor: BoundFlavor) -> Result<BoundRecord> {
    let nf = constant_nf(bc)?;
    if inp.n == 0 || inp.m == 0 {
        return Err(Error::InvalidInput("n and m must be positive".into()));
    }
    let n = inp.n as f64;
    let m = inp.m as f64;
    let nl = n.powf(bc.lambda);
    let mut rec = BoundRecord {
        nf,
        ..Default::default()
    };

    rec.cost_mean = Some((6.0 * m - 4.0) / (m * nl) * nf);
    rec.cost_variance = Some(36.0 * bc.mf * nf / (m * nl) + 36.0 * nf * nf / n.powf(2.0 * bc.lambda));
    if flavor == BoundFlavor::SaaCost {
        return Ok(rec);
    }

    if !(inp.eps > 0.0) || !(inp.rho > 0.0) {
        return Err(Error::InsufficientConstants("ε and ρ".into()));
    }
    let eps = inp.eps;
    let prox = 2.0 * (eps / inp.rho).sqrt();
    let exact_mean = bc.dx * nf / eps * (8.0 * m - 4.0) / (m * nl) + prox;
    rec.delta_mean_exact = Some(exact_mean);
    rec.tail_threshold = Some(eps.powf(1.5) / bc.dx + (4.0 * m - 2.0) * nf / m);
    let var_first = 64.0 * bc.dx * bc.dx * bc.mf * nf / (m * eps * eps * nl);
    let exact_bias = 8.0 * bc.dx * nf / (eps * nl) + prox;
    rec.delta_variance_exact = Some(var_first + exact_bias * exact_bias);

    match flavor {
        BoundFlavor::SaaCost | BoundFlavor::SaaSolution => {}
        BoundFlavor::CutPlane => {
            let eps1 = need(inp.eps1, "ε1")?;
            let eps2 = need(inp.eps2, "ε2")?;
            let tau1 = eps1 - eps;
            let tau2 = eps1 + (m - 1.0) / m * eps2 - eps;
            rec.tau1 = Some(tau1);
            rec.tau2 = Some(tau2);
            let slack = (tau1 + tau2) * bc.dx / eps;
            rec.delta_mean_cutplane = Some(exact_mean + slack);
            let bias = 8.0 * bc.dx * nf / (eps * nl) + slack + prox;
            rec.delta_variance_cutplane = Some(var_first + bias * bias);
        }
        BoundFlavor::Sd => {
            let eps_prime = need(inp.eps_prime, "ε′")?;
            let k = need(inp.k_rate, "K")?;
            let lf = need(inp.lf_objective, "L_f")?;
            let tau3 = (eps_prime - eps) / eps * bc.dx + prox;
            rec.tau3 = Some(tau3);
            let amp = 1.0 + 2.0 * lf * bc.dx / eps;
            let mean = amp * k / n + tau3;
            rec.delta_mean_sd = Some(mean);
            rec.delta_variance_sd = Some(amp * amp * k * bc.dx / (m * n) + mean * mean);
            if let Some(t) = inp.t {
                rec.sd_event_radius = Some((2.0 * lf * t + eps_prime - eps) / eps * bc.dx + t + prox);
                let r = k / (t * n);
                rec.sd_event_probability = Some(if r < 1.0 { (-(m * r) / (1.0 - r)).exp() } else { 0.0 });
            }
        }
    }
    Ok(rec)
}

/// Tail bound for the exact compromise decision: returns the threshold `C`
/// and the bound on `Pr{(ε n^λ / (2 D_X)) Δ ≥ C + t}` (ρ = n).
pub fn exact_compromise_tail(bc: &BoundConstants, n: usize, m: usize, eps: f64, t: f64) -> Result<(f64, f64)> {
    let nf = constant_nf(bc)?;
    if !(eps > 0.0) || m == 0 || n == 0 {
        return Err(Error::InvalidTolerance);
    }
    let mf = m as f64;
    let c = eps.powf(1.5) / bc.dx + (4.0 * mf - 2.0) * nf / mf;
    let denom = 2.0 * bc.mf * bc.mf * (2.0 * mf - 1.0).powi(2);
    let prob = if denom > 0.0 {
        (mf * (-(mf * mf * t * t) / denom).exp()).min(1.0)
    } else {
        0.0
    };
    Ok((c, prob))
}
