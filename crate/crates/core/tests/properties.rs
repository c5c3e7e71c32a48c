use compromise_core::desk::{quad2, sqqp2};
use compromise_core::model::{evaluate_cost, sample_scenarios, subgradient, FeasibleRegion};
use compromise_core::qp::{self, project_onto_region, solve_nonneg_qp, Cut, NonnegQp, ProxMaster};
use compromise_core::reliability::{epsilon_sublevel_set, fit_rate, pessimistic_distance, PointSet};
use compromise_core::saa::{build_saa, sample_variance, sample_variance_compound};
use compromise_core::sqqp::{solve_recourse_dual, solve_recourse_primal};
use compromise_core::{Matrix, Vector};
use proptest::prelude::*;

fn vec_in(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(lo..hi, dim).prop_map(Vector::from_vec)
}

fn unit_point() -> impl Strategy<Value = Vector> {
    vec_in(2, 0.0, 1.0)
}

/// Random positive definite `H` and linear term, dimension 1..=6.
fn nonneg_qp() -> impl Strategy<Value = NonnegQp> {
    (1usize..=6).prop_flat_map(|n| {
        (prop::collection::vec(-1.0f64..1.0, n * n), vec_in(n, -2.0, 2.0), -1.0f64..1.0).prop_map(move |(a, q, c0)| {
            let a = Matrix::from_vec(n, n, a);
            let h = a.transpose() * &a + Matrix::identity(n, n) * 0.1;
            NonnegQp::new(h, q, c0).unwrap()
        })
    })
}

/// Maximizer by enumerating supports: the unique KKT point of the strictly
/// concave problem.
fn enumerate(qp: &NonnegQp) -> f64 {
    let n = qp.q.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let mut gamma = Vector::zeros(n);
        if !s.is_empty() {
            let hs = Matrix::from_fn(s.len(), s.len(), |a, b| qp.h[(s[a], s[b])]);
            let qs = Vector::from_iterator(s.len(), s.iter().map(|&i| qp.q[i]));
            let sol = hs.lu().solve(&qs).unwrap();
            if sol.iter().any(|&v| v < 0.0) {
                continue;
            }
            for (a, &i) in s.iter().enumerate() {
                gamma[i] = sol[a];
            }
        }
        let grad = &qp.q - &qp.h * &gamma;
        if (0..n).filter(|i| !s.contains(i)).all(|i| grad[i] <= 1e-12) {
            best = best.max(qp.objective(&gamma));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn active_set_agrees_with_enumeration(qp in nonneg_qp()) {
        let sol = solve_nonneg_qp(&qp, 1e-8).unwrap();
        prop_assert!(sol.kkt_residual <= 1e-8);
        prop_assert!(sol.point.iter().all(|&g| g >= 0.0));
        let oracle = enumerate(&qp);
        prop_assert!((sol.value - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{} vs {}", sol.value, oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn box_projection_is_nonexpansive(x in vec_in(2, -2.0, 3.0), y in vec_in(2, -2.0, 3.0)) {
        let r = FeasibleRegion::unit_box(2);
        let (px, py) = (project_onto_region(&x, &r).unwrap(), project_onto_region(&y, &r).unwrap());
        prop_assert!(r.contains(&px, 1e-12));
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn polyhedral_projection_is_nonexpansive(x in vec_in(2, -2.0, 3.0), y in vec_in(2, -2.0, 3.0)) {
        // Triangle x ≥ 0, y ≥ 0, x + y ≤ 1.
        let a = Matrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let r = FeasibleRegion::polyhedron(a, Vector::from_column_slice(&[0.0, 0.0, 1.0])).unwrap();
        let (px, py) = (project_onto_region(&x, &r).unwrap(), project_onto_region(&y, &r).unwrap());
        prop_assert!(r.contains(&px, 1e-9));
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-8);
    }

    #[test]
    fn prox_step_is_nonexpansive_in_the_anchor(
        cuts in prop::collection::vec((-1.0f64..1.0, vec_in(2, -2.0, 2.0)), 1..6),
        a in unit_point(),
        b in unit_point(),
        rho in 0.5f64..20.0,
    ) {
        let cuts: Vec<Cut> = cuts.iter().map(|(al, be)| Cut::new(*al, be)).collect();
        let r = FeasibleRegion::unit_box(2);
        let solve = |anchor: &Vector| {
            qp::solve_prox_master(&ProxMaster::new(cuts.clone(), r.clone(), rho, anchor.clone()), 1e-8).unwrap().point
        };
        prop_assert!((solve(&a) - solve(&b)).norm() <= (&a - &b).norm() + 1e-7);
    }

    #[test]
    fn quad2_subgradient_inequality(x in unit_point(), y in unit_point(), i in 0usize..10) {
        let p = quad2();
        let xi = p.scenarios.as_finite().unwrap().atoms()[i].clone();
        let g = subgradient(&p, &x, &xi).unwrap();
        let lhs = evaluate_cost(&p, &y, &xi).unwrap();
        prop_assert!(lhs >= evaluate_cost(&p, &x, &xi).unwrap() + g.dot(&(&y - &x)) - 1e-9);
    }

    #[test]
    fn sqqp2_subgradient_inequality(x in unit_point(), y in unit_point(), i in 0usize..20) {
        let p = sqqp2().unwrap();
        let xi = p.scenarios.as_finite().unwrap().atoms()[i].clone();
        let g = subgradient(&p, &x, &xi).unwrap();
        let lhs = evaluate_cost(&p, &y, &xi).unwrap();
        prop_assert!(lhs >= evaluate_cost(&p, &x, &xi).unwrap() + g.dot(&(&y - &x)) - 1e-9);
    }

    #[test]
    fn sqqp2_gradient_matches_finite_differences(x in vec_in(2, 0.01, 0.99), i in 0usize..20) {
        let p = sqqp2().unwrap();
        let xi = p.scenarios.as_finite().unwrap().atoms()[i].clone();
        let g = subgradient(&p, &x, &xi).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (evaluate_cost(&p, &up, &xi).unwrap() - evaluate_cost(&p, &dn, &xi).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-3, "coordinate {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn sqqp2_dual_matches_primal(x in unit_point(), i in 0usize..20) {
        let p = sqqp2().unwrap();
        let prob = p.sqqp().unwrap();
        let xi = p.scenarios.as_finite().unwrap().atoms()[i].clone();
        let dual = solve_recourse_dual(prob.reduction(), &x, &xi, 1e-10).unwrap().value;
        let (primal, _) = solve_recourse_primal(prob, &x, &xi).unwrap();
        prop_assert!((dual - primal).abs() <= 1e-6);
    }

    #[test]
    fn pessimistic_distance_properties(
        a in prop::collection::vec(vec_in(2, -1.0, 1.0), 1..6),
        b in prop::collection::vec(vec_in(2, -1.0, 1.0), 1..6),
        c in prop::collection::vec(vec_in(2, -1.0, 1.0), 1..6),
    ) {
        let (pa, pb, pc) = (PointSet::sampled(a.clone()), PointSet::sampled(b.clone()), PointSet::sampled(c));
        prop_assert_eq!(pessimistic_distance(&pa, &pa).unwrap(), 0.0);
        let ab = pessimistic_distance(&pa, &pb).unwrap();
        prop_assert!(ab >= 0.0);
        let mut union = a.clone();
        union.extend(b);
        prop_assert_eq!(pessimistic_distance(&pa, &PointSet::sampled(union)).unwrap(), 0.0);
        let ac = pessimistic_distance(&pa, &pc).unwrap();
        let bc = pessimistic_distance(&pb, &pc).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn compound_variance_equals_direct(n in 2usize..40, seed in 0u64..1000) {
        let p = quad2();
        let inst = build_saa(&p, sample_scenarios(&p.scenarios, n, seed, 0).unwrap()).unwrap();
        let x = Vector::from_column_slice(&[0.3, 0.7]);
        let direct = sample_variance(&inst, &x).unwrap();
        let compound = sample_variance_compound(&inst, &x).unwrap();
        prop_assert!((direct - compound).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable(n in 1usize..50, seed: u64, rep in 0u64..100) {
        let p = quad2();
        let short = sample_scenarios(&p.scenarios, n, seed, rep).unwrap();
        let long = sample_scenarios(&p.scenarios, n + 10, seed, rep).unwrap();
        prop_assert_eq!(&short.realizations[..], &long.realizations[..n]);
        prop_assert_eq!(short.realizations, sample_scenarios(&p.scenarios, n, seed, rep).unwrap().realizations);
    }

    #[test]
    fn power_law_slopes_recovered(a in 0.1f64..2.0, c in 0.1f64..10.0) {
        let xs = [10.0, 40.0, 160.0, 640.0];
        let ys: Vec<f64> = xs.iter().map(|n: &f64| c * n.powf(-a)).collect();
        let fit = fit_rate(&xs, &ys).unwrap();
        prop_assert!((fit.slope + a).abs() < 1e-10);
        prop_assert!(fit.r2 > 1.0 - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn sublevel_sets_are_nested(e1 in 0.0f64..0.05, extra in 0.0f64..0.05) {
        let p = quad2();
        let f = |x: &Vector| compromise_core::model::true_objective(&p, x);
        let small = epsilon_sublevel_set(&f, &p.region, e1, 0.05).unwrap();
        let large = epsilon_sublevel_set(&f, &p.region, e1 + extra, 0.05).unwrap();
        prop_assert_eq!(pessimistic_distance(&small, &large).unwrap(), 0.0);
        prop_assert!(small.len() <= large.len());
    }
}
