//! Reference implementations written straight from the definitions, kept
//! independent of the library's evaluators so they can serve as oracles.
#![allow(dead_code)]

use efx_core::generate::{random_instance, ValueDistribution};
use efx_core::lp::LpModel;
use efx_core::{Allocation, Instance};
use rand::Rng;

pub fn i0() -> Instance {
    Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
        .unwrap()
        .normalize()
        .unwrap()
}

pub fn uniform(agents: usize, items: usize, seed: u64) -> Instance {
    random_instance(agents, items, ValueDistribution::Uniform01, seed).unwrap()
}

/// Every owner vector of `items` items over `agents` agents.
pub fn owner_vectors(items: usize, agents: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..items {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..agents).map(move |a| {
                    let mut w = v.clone();
                    w.push(a);
                    w
                })
            })
            .collect();
    }
    out
}

pub fn allocations(items: usize, agents: usize) -> Vec<Allocation> {
    owner_vectors(items, agents)
        .into_iter()
        .map(|o| Allocation::new(o, agents).unwrap())
        .collect()
}

fn bundle_sum(inst: &Instance, agent: usize, items: &[usize]) -> f64 {
    items.iter().map(|&k| inst.value(k, agent)).sum()
}

/// EFX by its literal definition: no agent envies another bundle after any
/// single item of that bundle is removed.
pub fn efx_by_definition(inst: &Instance, owner: &[usize], tol: f64) -> bool {
    let n = inst.agents();
    let bundles: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..owner.len()).filter(|&k| owner[k] == a).collect())
        .collect();
    for i in 0..n {
        let own = bundle_sum(inst, i, &bundles[i]);
        for j in (0..n).filter(|&j| j != i) {
            for &drop in &bundles[j] {
                let rest: Vec<usize> = bundles[j].iter().copied().filter(|&k| k != drop).collect();
                if bundle_sum(inst, i, &rest) > own + tol {
                    return false;
                }
            }
        }
    }
    true
}

/// `f_i(S)` computed over an explicit item list.
pub fn reduced(inst: &Instance, agent: usize, items: &[usize]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let min = items.iter().map(|&k| inst.value(k, agent)).fold(f64::INFINITY, f64::min);
    bundle_sum(inst, agent, items) - min
}

/// `u_ij` on a subset of the `m * n` ground set given as a mask indexed by
/// `k * n + a`.
pub fn envy_on_ground_set(inst: &Instance, i: usize, j: usize, mask: &[bool]) -> f64 {
    let (m, n) = (inst.items(), inst.agents());
    let xj: Vec<usize> = (0..m).filter(|&k| mask[k * n + j]).collect();
    let xi: Vec<usize> = (0..m).filter(|&k| mask[k * n + i]).collect();
    reduced(inst, i, &xj) - bundle_sum(inst, i, &xi)
}

/// Lovász extension as a sum of marginal gains along a stable descending
/// sort, the textbook form.
pub fn lovasz_marginals<F: FnMut(&[bool]) -> f64>(mut f: F, x: &[f64]) -> f64 {
    let d = x.len();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap());
    let mut mask = vec![false; d];
    let mut prev = 0.0;
    let mut total = 0.0;
    for &e in &idx {
        mask[e] = true;
        let cur = f(&mask);
        total += (cur - prev) * x[e];
        prev = cur;
    }
    total
}

/// Random point of the partition polytope, with some exact zeros.
pub fn random_point<R: Rng>(items: usize, agents: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..items)
        .map(|_| {
            let mut row: Vec<f64> = (0..agents)
                .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
                .collect();
            if row.iter().all(|&v| v == 0.0) {
                row[rng.gen_range(0..agents)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

/// `g(x, lambda)` by direct products, valid only while `exp(lambda v)` is
/// representable.
pub fn g_direct(inst: &Instance, x: &[Vec<f64>], lam: f64) -> f64 {
    let (m, n) = (inst.items(), inst.agents());
    let mut total = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for k in 0..m {
                let mut prod = x[k][j];
                for l in (0..m).filter(|&l| l != k) {
                    let v = inst.value(l, i);
                    prod *= 1.0 - x[l][i] - x[l][j] + x[l][i] * (-lam * v).exp() + x[l][j] * (lam * v).exp();
                }
                total += prod;
            }
        }
    }
    total.ln() / lam
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `A_kj(y)` straight from the definition with explicit shifted rows.
pub fn a_by_definition(inst: &Instance, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, n) = (inst.items(), inst.agents());
    let mut a = vec![vec![f64::NEG_INFINITY; n]; m];
    for k in 0..m {
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                let mut s = 0.0;
                for l in (0..m).filter(|&l| l != k) {
                    let mut shifted = y[l].clone();
                    shifted[j] += inst.value(l, i);
                    shifted[i] -= inst.value(l, i);
                    s += row_max(&shifted) - row_max(&y[l]);
                }
                a[k][j] = a[k][j].max(s);
            }
        }
    }
    a
}

/// `f(y)` straight from its max-minus-sum form.
pub fn dc_by_definition(inst: &Instance, y: &[Vec<f64>]) -> f64 {
    let (m, n) = (inst.items(), inst.agents());
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for k in 0..m {
                let mut s = y[k][j];
                for l in (0..m).filter(|&l| l != k) {
                    let v = inst.value(l, i);
                    let mut t = (y[l][i] - v).max(y[l][j] + v);
                    for r in (0..n).filter(|&r| r != i && r != j) {
                        t = t.max(y[l][r]);
                    }
                    s += t;
                }
                best = best.max(s);
            }
        }
    }
    best - y.iter().map(|r| row_max(r)).sum::<f64>()
}

/// Solves a square system by Gaussian elimination with partial pivoting;
/// `None` when (numerically) singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for c in 0..d {
        let p = (c..d).max_by(|&r, &s| a[r][c].abs().partial_cmp(&a[s][c].abs()).unwrap())?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..d {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for q in c..d {
                        a[r][q] -= f * a[c][q];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..d).map(|r| b[r] / a[r][r]).collect())
}

/// Minimum of a bounded LP by enumerating every basic solution: each choice
/// of `d` linearly independent tight constraints (rows or bounds), kept if
/// feasible. Returns `None` for an infeasible model.
pub fn lp_by_vertex_enumeration(model: &LpModel) -> Option<f64> {
    let d = model.num_vars();
    // Constraints as (coefficients, rhs, bound variable for pruning).
    let mut cons: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::new();
    for row in &model.rows {
        let mut a = vec![0.0; d];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        cons.push((a, row.rhs, None));
    }
    for j in 0..d {
        let mut a = vec![0.0; d];
        a[j] = 1.0;
        cons.push((a.clone(), model.lower[j], Some(j)));
        cons.push((a, model.upper[j], Some(j)));
    }
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(d);
    let mut used_bound = vec![false; d];
    enumerate(&cons, 0, d, &mut chosen, &mut used_bound, &mut |set: &[usize]| {
        let a = set.iter().map(|&c| cons[c].0.clone()).collect();
        let b = set.iter().map(|&c| cons[c].1).collect();
        if let Some(x) = solve_square(a, b) {
            if model.max_violation(&x) <= 1e-9 {
                let v = model.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    best
}

fn enumerate(
    cons: &[(Vec<f64>, f64, Option<usize>)],
    start: usize,
    need: usize,
    chosen: &mut Vec<usize>,
    used_bound: &mut Vec<bool>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    let left = need - chosen.len();
    for c in start..cons.len() {
        if cons.len() - c < left {
            break;
        }
        // Both bounds of one variable cannot be tight together here.
        if let Some(j) = cons[c].2 {
            if used_bound[j] {
                continue;
            }
            used_bound[j] = true;
        }
        chosen.push(c);
        enumerate(cons, c + 1, need, chosen, used_bound, visit);
        chosen.pop();
        if let Some(j) = cons[c].2 {
            used_bound[j] = false;
        }
    }
}
