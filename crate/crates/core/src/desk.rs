//! Two small problems with exact ground truth, used by the tests and the
//! experiment harness.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::model::{CostModel, DeclaredConstants, FeasibleRegion, ScenarioSpace, StochasticProgram};
use crate::sqqp::SqqpProblem;

/// Atoms of QUAD2: five pairs placed symmetrically about (0.5, 0.5).
pub const QUAD2_ATOMS: [[f64; 2]; 10] = [
    [0.1, 0.2],
    [0.9, 0.8],
    [0.3, 0.9],
    [0.7, 0.1],
    [0.0, 0.5],
    [1.0, 0.5],
    [0.45, 0.0],
    [0.55, 1.0],
    [0.2, 0.65],
    [0.8, 0.35],
];

/// `F(x, ξ) = ½‖x − ξ‖²` on `[0,1]²` with ten equiprobable atoms; the true
/// minimizer is the atom mean (0.5, 0.5).
pub fn quad2() -> StochasticProgram {
    let atoms = QUAD2_ATOMS.iter().map(|a| Vector::from_column_slice(a)).collect();
    StochasticProgram {
        name: "QUAD2".into(),
        region: FeasibleRegion::unit_box(2),
        scenarios: ScenarioSpace::equiprobable(atoms).expect("equiprobable atoms"),
        cost: CostModel::SquaredDistance,
        constants: DeclaredConstants {
            lipschitz: 2f64.sqrt(),
            holder: 1.0,
            bound: 1.0,
            recourse_lipschitz: None,
        },
    }
}

/// Point around which the SQQP2 scenarios are centred.
pub const SQQP2_CENTER: [f64; 2] = [0.4, 0.6];

/// Number of SQQP2 scenarios.
pub const SQQP2_SCENARIOS: usize = 20;

const SQQP2_SHIFT: f64 = 0.25;

/// Technology row `C(ξ_i)` of SQQP2 scenario `i`: directions spread over the
/// circle with lengths cycling through 0.5, 1.0, 1.5, 2.0.
pub fn sqqp2_row(i: usize) -> [f64; 2] {
    let angle = 2.0 * PI * i as f64 / SQQP2_SCENARIOS as f64 + 0.3;
    let r = 0.5 * (1 + i % 4) as f64;
    [r * angle.cos(), r * angle.sin()]
}

/// Right-hand side offset `δ_i` of scenario `i`, `|δ_i| ≤ 0.25`.
pub fn sqqp2_shift(i: usize) -> f64 {
    SQQP2_SHIFT * (2.1 * i as f64 + 0.5).sin()
}

/// Two-stage quadratic program on `[0,1]²`:
/// first stage `½‖x‖² − x₀ᵀx` with `x₀ = (0.4, 0.6)`, recourse
/// `min ½‖y‖² s.t. y₁ − y₂ = e(ξ) − C(ξ)x, y ≥ 0` with `e(ξ) = C(ξ)x₀ + δ(ξ)`,
/// so `h(x, ξ) = ½(δ(ξ) − C(ξ)(x − x₀))²`. Any right-hand side is reachable
/// (relatively complete recourse) and `h ≥ 0`. The minimizer is close to `x₀`
/// and is computed from the extensive form.
pub fn sqqp2() -> Result<StochasticProgram> {
    let x0 = Vector::from_column_slice(&SQQP2_CENTER);
    let prob = SqqpProblem::new(
        Matrix::identity(2, 2),
        -&x0,
        Matrix::identity(2, 2),
        Vector::zeros(2),
        Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
    )?;
    let atoms: Vec<Vector> = (0..SQQP2_SCENARIOS)
        .map(|i| {
            let c = Matrix::from_row_slice(1, 2, &sqqp2_row(i));
            let e = &c * &x0 + Vector::from_element(1, sqqp2_shift(i));
            SqqpProblem::encode_scenario(&e, &c)
        })
        .collect();
    // |C(ξ)| ≤ 2, |δ| ≤ 0.25 and ‖x − x₀‖ ≤ √2 on the box.
    let rmax = 2.0f64;
    let dx = 2f64.sqrt();
    let gmax = rmax * dx + SQQP2_SHIFT;
    let recourse_bound = 0.5 * gmax * gmax;
    let first_bound = 0.5 * 2.0 + x0.norm() * dx;
    let recourse_lipschitz = rmax * gmax;
    Ok(StochasticProgram {
        name: "SQQP2".into(),
        region: FeasibleRegion::unit_box(2),
        scenarios: ScenarioSpace::equiprobable(atoms)?,
        cost: CostModel::Sqqp(Arc::new(prob)),
        constants: DeclaredConstants {
            lipschitz: dx + x0.norm() + recourse_lipschitz,
            holder: 1.0,
            bound: first_bound + recourse_bound,
            recourse_lipschitz: Some(recourse_lipschitz),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bound_probe, convexity_probe, holder_probe, true_optimum};
    use crate::sqqp::recourse_probe;

    #[test]
    fn quad2_truth() {
        let p = quad2();
        let t = true_optimum(&p, 0.05, 0.0).unwrap();
        assert!((&t.minimizer - Vector::from_column_slice(&[0.5, 0.5])).norm() < 1e-9);
        assert!(bound_probe(&p, 500, 1).unwrap() <= 0.0);
        assert!(holder_probe(&p, 500, 2).unwrap() <= 1e-12);
        assert!(convexity_probe(&p, 500, 3).unwrap() <= 1e-12);
    }

    #[test]
    fn sqqp2_truth() {
        let p = sqqp2().unwrap();
        let t = true_optimum(&p, 0.01, 0.0).unwrap();
        let x = &t.minimizer;
        assert!(x.iter().all(|&v| v > 0.05 && v < 0.95), "interior minimizer {x:?}");
        assert!((t.extensive_form.unwrap() - t.theta).abs() < 1e-9);
        assert!(t.grid_min - t.theta < 1e-3);
        let (failures, lowest) = recourse_probe(&p, 1000, 4).unwrap();
        assert_eq!(failures, 0);
        assert!(lowest >= -1e-12);
        assert!(bound_probe(&p, 500, 5).unwrap() <= 0.0);
        assert!(holder_probe(&p, 500, 6).unwrap() <= 1e-9);
        assert!(convexity_probe(&p, 500, 7).unwrap() <= 1e-9);
    }
}
