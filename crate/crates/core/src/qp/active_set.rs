//! Primal active-set method for
//!
//! ```text
//! minimize ½ zᵀ W z − wᵀ z
//! subject to z_i ≥ 0            (sign-restricted coordinates)
//!            Σ_{i∈G} z_i = s_G  (disjoint groups of sign-restricted coordinates)
//! ```
//!
//! with `W` symmetric positive semidefinite, possibly singular. Equality
//! subproblems are solved in an orthonormal basis of the free subspace and
//! the reduced Hessian is handled through its eigendecomposition, so singular
//! directions are either resolved in the minimum-norm sense (zero gradient
//! component) or followed as descent rays (nonzero gradient component).

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub members: Vec<usize>,
    pub total: f64,
}

pub(crate) struct Problem<'a> {
    pub w: &'a Matrix,
    pub lin: &'a Vector,
    /// `true` marks a coordinate without sign restriction.
    pub unrestricted: &'a [bool],
    pub groups: &'a [Group],
}

#[derive(Debug, Clone)]
pub(crate) struct Solved {
    pub z: Vector,
    /// Reduced costs `∇_i − ν_G(i)` of sign-restricted coordinates (zero elsewhere).
    pub reduced_costs: Vector,
    pub kkt: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Failure {
    Unbounded,
    IterationLimit,
}

/// Feasible starting point: each group's total on its first member, zero elsewhere.
#[cfg(test)]
pub(crate) fn default_start(n: usize, groups: &[Group]) -> Vector {
    let mut z = Vector::zeros(n);
    for g in groups {
        if let Some(&first) = g.members.first() {
            z[first] = g.total;
        }
    }
    z
}

pub(crate) fn minimize(p: &Problem, start: Vector, max_iter: usize) -> Result<Solved, Failure> {
    let n = p.lin.len();
    let mut group_of = vec![usize::MAX; n];
    for (g, grp) in p.groups.iter().enumerate() {
        for &i in &grp.members {
            group_of[i] = g;
        }
    }
    let mut z = start;
    let mut fixed: Vec<bool> = (0..n).map(|i| !p.unrestricted[i] && z[i] <= 0.0).collect();
    for grp in p.groups {
        if grp.members.iter().all(|&i| fixed[i]) {
            if let Some(&first) = grp.members.first() {
                fixed[first] = false;
            }
        }
    }
    for i in 0..n {
        if fixed[i] {
            z[i] = 0.0;
        }
    }

    let scale = 1.0 + p.lin.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mult_tol = 1e-12 * scale;
    let mut iterations = 0;
    let mut bland = false;

    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Failure::IterationLimit);
        }
        if iterations > max_iter / 2 {
            bland = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let grad = gradient(p, &z, &free);
        let basis = free_basis(&free, &group_of, p.groups.len());
        let r = basis.ncols();

        if r > 0 {
            let nf = free.len();
            let wff = Matrix::from_fn(nf, nf, |a, b| p.w[(free[a], free[b])]);
            let gf = Vector::from_iterator(nf, free.iter().map(|&i| grad[i]));
            let hr = basis.transpose() * &wff * &basis;
            let rg = basis.transpose() * &gf;
            let eig = crate::linalg::symmetrize(&hr).symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let flat = 1e-11 * top.max(1e-300);
            let coords = eig.eigenvectors.transpose() * &rg;
            let gscale = scale + gf.iter().fold(0.0f64, |a, b| a.max(b.abs()));

            let mut ray = Vector::zeros(r);
            let mut ray_norm2 = 0.0;
            for j in 0..r {
                if eig.eigenvalues[j] <= flat {
                    ray -= eig.eigenvectors.column(j) * coords[j];
                    ray_norm2 += coords[j] * coords[j];
                }
            }
            let (dir_red, cap) = if ray_norm2.sqrt() > 1e-11 * gscale {
                (ray, f64::INFINITY)
            } else {
                let mut u = Vector::zeros(r);
                for j in 0..r {
                    if eig.eigenvalues[j] > flat {
                        u -= eig.eigenvectors.column(j) * (coords[j] / eig.eigenvalues[j]);
                    }
                }
                (u, 1.0)
            };
            let step = &basis * dir_red;

            let mut alpha = cap;
            let mut block: Option<usize> = None;
            for (k, &i) in free.iter().enumerate() {
                if p.unrestricted[i] || step[k] >= -1e-15 * (1.0 + z[i].abs()) {
                    continue;
                }
                let ratio = (z[i].max(0.0)) / (-step[k]);
                let better = match block {
                    None => ratio < alpha,
                    Some(b) => ratio < alpha || (ratio == alpha && bland && i < b),
                };
                if better {
                    alpha = ratio;
                    block = Some(i);
                }
            }
            if alpha.is_infinite() {
                return Err(Failure::Unbounded);
            }
            for (k, &i) in free.iter().enumerate() {
                z[i] += alpha * step[k];
                if !p.unrestricted[i] && z[i] < 0.0 {
                    z[i] = 0.0;
                }
            }
            if let Some(b) = block {
                z[b] = 0.0;
                fixed[b] = true;
                restore_group_totals(p, &mut z, &fixed);
                continue;
            }
            if cap.is_infinite() {
                continue;
            }
        }

        // At the minimizer over the current face: price the fixed bounds.
        let all: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
        let grad = gradient(p, &z, &all);
        let nu = group_prices(p, &z, &grad, &fixed);
        let mut release: Option<(usize, f64)> = None;
        for i in 0..n {
            if !fixed[i] {
                continue;
            }
            let g = group_of[i];
            let mu = grad[i] - if g == usize::MAX { 0.0 } else { nu[g] };
            if mu < -mult_tol {
                let take = match release {
                    None => true,
                    Some((_, best)) => !bland && mu < best,
                };
                if take {
                    release = Some((i, mu));
                }
            }
        }
        match release {
            Some((i, _)) => fixed[i] = false,
            None => {
                let (reduced_costs, kkt) = kkt_residual(p, &z, &grad, &nu, &group_of);
                return Ok(Solved {
                    z,
                    reduced_costs,
                    kkt,
                    iterations,
                });
            }
        }
    }
}

/// `W z − w`, using only the listed coordinates of `z` (the others are zero).
fn gradient(p: &Problem, z: &Vector, support: &[usize]) -> Vector {
    let mut g = -p.lin.clone();
    for &j in support {
        if z[j] != 0.0 {
            g.axpy(z[j], &p.w.column(j), 1.0);
        }
    }
    g
}

/// Orthonormal basis of `{d on the free set : Σ_{G∩free} d = 0 for every group}`.
fn free_basis(free: &[usize], group_of: &[usize], ngroups: usize) -> Matrix {
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); ngroups];
    let mut singles = Vec::new();
    for (k, &i) in free.iter().enumerate() {
        if group_of[i] == usize::MAX {
            singles.push(k);
        } else {
            by_group[group_of[i]].push(k);
        }
    }
    let r = singles.len() + by_group.iter().map(|g| g.len().saturating_sub(1)).sum::<usize>();
    let mut basis = Matrix::zeros(free.len(), r);
    let mut col = 0;
    for &k in &singles {
        basis[(k, col)] = 1.0;
        col += 1;
    }
    // Helmert contrasts within each group.
    for members in &by_group {
        for j in 1..members.len() {
            let jf = j as f64;
            let norm = (jf * (jf + 1.0)).sqrt();
            for &k in &members[..j] {
                basis[(k, col)] = 1.0 / norm;
            }
            basis[(members[j], col)] = -jf / norm;
            col += 1;
        }
    }
    basis
}

/// Re-impose the group totals after a ratio-test clamp (guards roundoff drift).
fn restore_group_totals(p: &Problem, z: &mut Vector, fixed: &[bool]) {
    for grp in p.groups {
        let free: Vec<usize> = grp.members.iter().copied().filter(|&i| !fixed[i]).collect();
        if free.is_empty() {
            continue;
        }
        let sum: f64 = free.iter().map(|&i| z[i]).sum();
        let drift = grp.total - sum;
        if drift != 0.0 {
            let &heaviest = free.iter().max_by(|&&a, &&b| z[a].total_cmp(&z[b])).unwrap();
            z[heaviest] = (z[heaviest] + drift).max(0.0);
        }
    }
}

/// Multiplier of each group constraint: the gradient at its heaviest member.
fn group_prices(p: &Problem, z: &Vector, grad: &Vector, fixed: &[bool]) -> Vec<f64> {
    p.groups
        .iter()
        .map(|grp| {
            let pick = grp
                .members
                .iter()
                .copied()
                .filter(|&i| !fixed[i])
                .max_by(|&a, &b| z[a].total_cmp(&z[b]));
            match pick {
                Some(i) => grad[i],
                None => grp.members.iter().map(|&i| grad[i]).fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Natural-residual KKT measure: max over sign-restricted coordinates of
/// |min(z_i, μ_i)|, over unrestricted coordinates of |∇_i|, and of the group
/// total violations.
fn kkt_residual(p: &Problem, z: &Vector, grad: &Vector, nu: &[f64], group_of: &[usize]) -> (Vector, f64) {
    let n = z.len();
    let mut reduced = Vector::zeros(n);
    let mut worst = 0.0f64;
    for i in 0..n {
        if p.unrestricted[i] {
            worst = worst.max(grad[i].abs());
            continue;
        }
        let g = group_of[i];
        let mu = grad[i] - if g == usize::MAX { 0.0 } else { nu[g] };
        reduced[i] = mu;
        worst = worst.max(z[i].min(mu).abs());
    }
    for grp in p.groups {
        let sum: f64 = grp.members.iter().map(|&i| z[i]).sum();
        worst = worst.max((sum - grp.total).abs());
    }
    (reduced, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(w: Matrix, lin: Vector, unrestricted: Vec<bool>, groups: Vec<Group>) -> Result<Solved, Failure> {
        let start = default_start(lin.len(), &groups);
        let p = Problem {
            w: &w,
            lin: &lin,
            unrestricted: &unrestricted,
            groups: &groups,
        };
        minimize(&p, start, 1000)
    }

    #[test]
    fn simplex_constrained_linear_picks_best_vertex() {
        // min −(1, 3, 2)·z over the unit simplex
        let w = Matrix::zeros(3, 3);
        let lin = Vector::from_vec(vec![1.0, 3.0, 2.0]);
        let groups = vec![Group {
            members: vec![0, 1, 2],
            total: 1.0,
        }];
        let s = solve(w, lin, vec![false; 3], groups).unwrap();
        assert!((s.z[1] - 1.0).abs() < 1e-12);
        assert!(s.kkt < 1e-12);
    }

    #[test]
    fn unbounded_ray_detected() {
        let w = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let lin = Vector::from_vec(vec![0.0, 1.0]);
        let r = solve(w, lin, vec![false; 2], vec![]);
        assert_eq!(r.unwrap_err(), Failure::Unbounded);
    }

    #[test]
    fn unrestricted_coordinates_reach_stationarity() {
        let w = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let lin = Vector::from_vec(vec![-4.0, 1.0]);
        let s = solve(w, lin, vec![true, false], vec![]).unwrap();
        assert!((s.z[0] + 2.0).abs() < 1e-12);
        assert!((s.z[1] - 1.0).abs() < 1e-12);
    }
}
