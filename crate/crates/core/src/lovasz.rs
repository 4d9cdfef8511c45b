//! Convex relaxation of the EFX problem through Lovász extensions.
//!
//! The relaxation minimizes `f(x) = max_{i != j} u^L_ij(x)` over the
//! partition polytope `P` (rows of `x` on the probability simplex), where
//! `u_ij` is the monotone envy of a normalized instance. Every allocation `X`
//! satisfies `f(1_X) = F(X)`, so the minimum lower-bounds the best integral
//! value; the uniform point always achieves `1 - min_{k,i} v_{ki} / n`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};

/// Row sums of a fractional point equal 1 within this tolerance.
pub const POLYTOPE_TOL: f64 = 1e-10;

/// A point of the partition polytope `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalPoint {
    x: Array2<f64>,
}

impl FractionalPoint {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        let (m, n) = x.dim();
        if m < 1 || n < 2 {
            return Err(Error::TooSmall { items: m, agents: n });
        }
        for ((k, i), &v) in x.indexed_iter() {
            if !v.is_finite() || !(-POLYTOPE_TOL..=1.0 + POLYTOPE_TOL).contains(&v) {
                return Err(Error::NonFinite { row: k + 1, col: i + 1 });
            }
        }
        for (k, row) in x.rows().into_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > POLYTOPE_TOL {
                return Err(Error::NotInPolytope { row: k + 1, sum });
            }
        }
        Ok(FractionalPoint { x })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(k) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Dimension {
                context: format!("x row {}", k + 1),
                expected: n,
                found: rows[k].len(),
            });
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((m, n), flat).map_err(|e| Error::Document(e.to_string()))?)
    }

    pub(crate) fn new_unchecked(x: Array2<f64>) -> Self {
        FractionalPoint { x }
    }

    /// The point `x^` with every entry `1/n`.
    pub fn uniform(items: usize, agents: usize) -> Self {
        FractionalPoint {
            x: Array2::from_elem((items, agents), 1.0 / agents as f64),
        }
    }

    /// Indicator matrix of an allocation.
    pub fn from_allocation(alloc: &Allocation) -> Self {
        let mut x = Array2::zeros((alloc.items(), alloc.agents()));
        for (k, &a) in alloc.owners().iter().enumerate() {
            x[[k, a]] = 1.0;
        }
        FractionalPoint { x }
    }

    pub fn items(&self) -> usize {
        self.x.nrows()
    }

    pub fn agents(&self) -> usize {
        self.x.ncols()
    }

    pub fn get(&self, item: usize, agent: usize) -> f64 {
        self.x[[item, agent]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, item: usize) -> ArrayView1<'_, f64> {
        self.x.row(item)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.x
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.x.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Items sorted by one column of `x`, non-increasing; ties go to the lower
/// item index first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortedColumn {
    pub perm: Vec<usize>,
}

impl SortedColumn {
    pub fn new(x: &FractionalPoint, agent: usize) -> Self {
        SortedColumn {
            perm: sorted_desc(x.x.column(agent).iter().copied()),
        }
    }

    /// The prefix set `S^len` of the permutation.
    pub fn prefix(&self, len: usize) -> &[usize] {
        &self.perm[..len]
    }
}

fn sorted_desc(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let values: Vec<f64> = values.collect();
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    perm
}

/// Lovász extension of `set_fn` at `x`, where `set_fn` receives a
/// membership mask over the `x.len()` ground elements and the empty set is
/// taken to have value 0.
///
/// With prefix sets `S^p` along the non-increasing order of `x`, the value
/// `sum_p (F(S^p) - F(S^{p-1})) x_(p)` is accumulated in the equivalent
/// level-set form `sum_p F(S^p) (x_(p) - x_(p+1))`, which reproduces `F(S)`
/// exactly at the indicator of `S`.
pub fn lovasz_extension<F>(mut set_fn: F, x: &[f64]) -> f64
where
    F: FnMut(&[bool]) -> f64,
{
    let perm = sorted_desc(x.iter().copied());
    let mut members = vec![false; x.len()];
    let mut total = 0.0;
    for (p, &e) in perm.iter().enumerate() {
        members[e] = true;
        let next = perm.get(p + 1).map_or(0.0, |&q| x[q]);
        let gap = x[e] - next;
        if gap != 0.0 {
            total += set_fn(&members) * gap;
        }
    }
    total
}

/// Marginal coefficients of `f_i` along the order `perm`: 0 for the first
/// item, then `v_ki + (min of earlier values - v_ki)^+`.
fn reduced_value_marginals(inst: &Instance, agent: usize, perm: &[usize]) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(perm.len());
    let mut running_min = f64::INFINITY;
    for (pos, &k) in perm.iter().enumerate() {
        let v = inst.value(k, agent);
        if pos == 0 {
            coeffs.push(0.0);
        } else {
            coeffs.push(v + (running_min - v).max(0.0));
        }
        running_min = running_min.min(v);
    }
    coeffs
}

fn check_pair(inst: &Instance, i: usize, j: usize, x: &FractionalPoint) -> Result<()> {
    for a in [i, j] {
        if a >= inst.agents() {
            return Err(Error::AgentOutOfRange {
                agent: a + 1,
                agents: inst.agents(),
            });
        }
    }
    if i == j {
        return Err(Error::SameAgent(i + 1));
    }
    if x.x.dim() != inst.values().dim() {
        return Err(Error::Dimension {
            context: "fractional point".into(),
            expected: inst.items() * inst.agents(),
            found: x.x.len(),
        });
    }
    Ok(())
}

/// Closed form of the Lovász extension of the raw envy `u_ij` over the
/// `m * n` ground set:
/// `sum_{p >= 2} (v_{(p)i} + (min_{q < p} v_{(q)i} - v_{(p)i})^+) x_{(p)j} - sum_k v_ki x_ki`
/// with items `(p)` sorted by column `j`.
pub fn closed_form_extension(
    inst: &Instance,
    i: usize,
    j: usize,
    x: &FractionalPoint,
) -> Result<f64> {
    check_pair(inst, i, j, x)?;
    let order = SortedColumn::new(x, j);
    let coeffs = reduced_value_marginals(inst, i, &order.perm);
    let envied: f64 = order
        .perm
        .iter()
        .zip(&coeffs)
        .map(|(&k, c)| c * x.get(k, j))
        .sum();
    let own: f64 = (0..inst.items()).map(|k| inst.value(k, i) * x.get(k, i)).sum();
    Ok(envied - own)
}

/// Value and a subgradient of the relaxation objective.
struct Evaluation {
    value: f64,
    pair: (usize, usize),
    subgradient: Array2<f64>,
}

fn evaluate(inst: &Instance, x: &FractionalPoint, with_subgradient: bool) -> Evaluation {
    let (m, n) = (inst.items(), inst.agents());
    let mut best = (f64::NEG_INFINITY, (0, 1), Vec::new(), Vec::new());
    for i in 0..n {
        // sum_{l != i} v_i^L(x_l)
        let others: f64 = (0..m)
            .map(|k| {
                let v = inst.value(k, i);
                (0..n).filter(|&l| l != i).map(|l| v * x.get(k, l)).sum::<f64>()
            })
            .sum();
        for j in (0..n).filter(|&j| j != i) {
            let perm = SortedColumn::new(x, j).perm;
            let coeffs = reduced_value_marginals(inst, i, &perm);
            let envied: f64 = perm.iter().zip(&coeffs).map(|(&k, c)| c * x.get(k, j)).sum();
            let value = envied + others;
            if value > best.0 {
                best = (value, (i, j), perm, coeffs);
            }
        }
    }
    let (value, (i, j), perm, coeffs) = best;
    let mut subgradient = Array2::zeros((m, n));
    if with_subgradient {
        for (&k, c) in perm.iter().zip(&coeffs) {
            subgradient[[k, j]] += c;
        }
        for k in 0..m {
            let v = inst.value(k, i);
            for l in (0..n).filter(|&l| l != i) {
                subgradient[[k, l]] += v;
            }
        }
    }
    Evaluation {
        value,
        pair: (i, j),
        subgradient,
    }
}

fn require_normalized(inst: &Instance) -> Result<()> {
    if inst.is_normalized() {
        Ok(())
    } else {
        Err(Error::NotNormalized)
    }
}

/// `f(x) = max_{i != j} u^L_ij(x)` for the monotone envy of a normalized
/// instance. EFX allocations have `f(1_X) <= 1`.
pub fn relaxation_objective(inst: &Instance, x: &FractionalPoint) -> Result<f64> {
    require_normalized(inst)?;
    check_pair(inst, 0, 1, x)?;
    Ok(evaluate(inst, x, false).value)
}

/// The maximizing pair `(i, j)` of [`relaxation_objective`] (first in
/// lexicographic order on ties).
pub fn relaxation_argmax(inst: &Instance, x: &FractionalPoint) -> Result<(usize, usize)> {
    require_normalized(inst)?;
    check_pair(inst, 0, 1, x)?;
    Ok(evaluate(inst, x, false).pair)
}

/// Euclidean projection onto the probability simplex (sort and shift).
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (idx, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (idx + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&vi| (vi - theta).max(0.0)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubgradientOptions {
    pub iterations: usize,
    /// Step at iteration `t` is `step0 / sqrt(t)`.
    pub step0: f64,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        SubgradientOptions {
            iterations: 2000,
            step0: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationResult {
    pub point: FractionalPoint,
    pub value: f64,
    pub initial_value: f64,
    pub best_iteration: usize,
    pub iterations: usize,
}

/// Projected subgradient descent on [`relaxation_objective`], started at the
/// uniform point. Returns the best iterate seen.
pub fn minimize_relaxation(
    inst: &Instance,
    opts: &SubgradientOptions,
) -> Result<RelaxationResult> {
    require_normalized(inst)?;
    if !(opts.step0 > 0.0 && opts.step0.is_finite()) {
        return Err(Error::parameter("step0", "must be positive and finite"));
    }
    let (m, n) = (inst.items(), inst.agents());
    let mut x = FractionalPoint::uniform(m, n);
    let mut eval = evaluate(inst, &x, true);
    let initial_value = eval.value;
    let mut best = (x.clone(), eval.value, 0);
    for t in 1..=opts.iterations {
        let step = opts.step0 / (t as f64).sqrt();
        let mut next = Array2::zeros((m, n));
        for k in 0..m {
            let moved: Vec<f64> = (0..n)
                .map(|i| x.get(k, i) - step * eval.subgradient[[k, i]])
                .collect();
            for (i, p) in project_onto_simplex(&moved).into_iter().enumerate() {
                next[[k, i]] = p;
            }
        }
        x = FractionalPoint::new_unchecked(next);
        eval = evaluate(inst, &x, true);
        if eval.value < best.1 {
            best = (x.clone(), eval.value, t);
        }
    }
    Ok(RelaxationResult {
        point: best.0,
        value: best.1,
        initial_value,
        best_iteration: best.2,
        iterations: opts.iterations,
    })
}

/// Outcome of column-threshold rounding. Items may be claimed by several
/// agents or by none; no contention resolution is attempted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRounding {
    pub thresholds: Vec<f64>,
    /// Items claimed by each agent.
    pub bundles: Vec<Vec<usize>>,
    pub multiply_assigned: Vec<usize>,
    pub unassigned: Vec<usize>,
}

impl ThresholdRounding {
    pub fn is_partition(&self) -> bool {
        self.multiply_assigned.is_empty() && self.unassigned.is_empty()
    }

    pub fn to_allocation(&self) -> Option<Allocation> {
        if !self.is_partition() {
            return None;
        }
        let items = self.bundles.iter().map(Vec::len).sum();
        Allocation::from_bundles(&self.bundles, items).ok()
    }
}

/// Draws `theta_i ~ Uniform(0, 1]` per agent and gives agent `i` every item
/// with `x_ki >= theta_i`.
pub fn threshold_round<R: Rng + ?Sized>(x: &FractionalPoint, rng: &mut R) -> ThresholdRounding {
    let (m, n) = x.x.dim();
    let thresholds: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let mut bundles = vec![Vec::new(); n];
    let mut claims = vec![0usize; m];
    for (i, theta) in thresholds.iter().enumerate() {
        for k in 0..m {
            if x.get(k, i) >= *theta {
                bundles[i].push(k);
                claims[k] += 1;
            }
        }
    }
    ThresholdRounding {
        thresholds,
        bundles,
        multiply_assigned: (0..m).filter(|&k| claims[k] > 1).collect(),
        unassigned: (0..m).filter(|&k| claims[k] == 0).collect(),
    }
}
