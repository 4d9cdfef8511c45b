//! The DC decomposition `f = hbar - h` and the DC algorithm.
//!
//! `hbar` is the convex max term of `f` and `h(y) = sum_l max_r y_lr` is
//! convex as well. Each DCA step linearizes `h` at the current point through
//! the row argmax indices `r_l` and minimizes `w - sum_l y_{l r_l}` over the
//! epigraph of `hbar`, written as a linear program with auxiliary variables
//! `z_lij` for the inner maxima:
//!
//! ```text
//! y_kj + sum_{l != k} z_lij - w <= 0      for all k, i != j
//! y_li - z_lij <=  v_li                   for all l, i != j
//! y_lj - z_lij <= -v_li                   for all l, i != j
//! y_lr - z_lij <=  0                      for all l, i != j, r not in {i, j}
//! ```
//!
//! so that at the optimum `z_lij = max{y_li - v_li, y_lj + v_li, max_{r != i,j} y_lr}`
//! and `w = hbar(y)`.
//!
//! The program is solved inside the box `y in [-M, 0]`, which contains an
//! optimum because `f` is invariant under shifting a row of `y`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::extension::{
    convex_part_argmax, dc_objective, encode_allocation, extract_allocation, row_max_sum, DualPoint,
    EncodingConstant,
};
use crate::generate::{rng_from_seed, start_seed};
use crate::instance::{efx_slack, is_efx, Allocation, Instance};
use crate::lp::{LpModel, LpSolution, Simplex, SimplexOptions};

/// Values of both convex parts at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DcDecomposition {
    pub hbar: f64,
    pub h: f64,
}

impl DcDecomposition {
    pub fn at(inst: &Instance, y: &DualPoint) -> Self {
        DcDecomposition {
            hbar: hbar(inst, y),
            h: row_max_sum(y),
        }
    }

    pub fn value(&self) -> f64 {
        self.hbar - self.h
    }
}

/// The convex max term of the DC objective.
pub fn hbar(inst: &Instance, y: &DualPoint) -> f64 {
    convex_part_argmax(inst, y).0
}

/// `h(y) = sum_l max_r y_lr`.
pub fn h_value(y: &DualPoint) -> f64 {
    row_max_sum(y)
}

/// Index map from `(y, z, w)` to LP columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EpigraphLayout {
    pub items: usize,
    pub agents: usize,
}

impl EpigraphLayout {
    pub fn y(&self, item: usize, agent: usize) -> usize {
        item * self.agents + agent
    }

    /// Column of `z_lij`, `i != j`.
    pub fn z(&self, item: usize, i: usize, j: usize) -> usize {
        debug_assert_ne!(i, j);
        let jj = if j < i { j } else { j - 1 };
        let n = self.agents;
        n * self.items + (item * n + i) * (n - 1) + jj
    }

    pub fn w(&self) -> usize {
        let (m, n) = (self.items, self.agents);
        m * n + m * n * (n - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.w() + 1
    }

    pub fn y_count(&self) -> usize {
        self.items * self.agents
    }

    pub fn z_count(&self) -> usize {
        self.items * self.agents * (self.agents - 1)
    }

    /// Rows in each of the four constraint families.
    pub fn family_sizes(&self) -> [usize; 4] {
        let (m, n) = (self.items, self.agents);
        let pairs = m * n * (n - 1);
        [pairs, pairs, pairs, pairs * (n - 2)]
    }

    pub fn extract_y(&self, x: &[f64]) -> DualPoint {
        let y = ndarray::Array2::from_shape_fn((self.items, self.agents), |(k, i)| x[self.y(k, i)]);
        DualPoint::new_unchecked(y)
    }
}

/// The epigraph LP together with its column layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpigraphLp {
    pub model: LpModel,
    pub layout: EpigraphLayout,
}

/// Objective `w - sum_l y_{l r_l}`.
pub fn linearized_objective(layout: &EpigraphLayout, rows: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; layout.num_vars()];
    c[layout.w()] = 1.0;
    for (l, &r) in rows.iter().enumerate() {
        c[layout.y(l, r)] -= 1.0;
    }
    c
}

/// Builds the LP of one DCA step for the argmax rows `rows`.
pub fn build_epigraph_lp(inst: &Instance, rows: &[usize], m_const: EncodingConstant) -> Result<EpigraphLp> {
    let (m, n) = (inst.items(), inst.agents());
    if rows.len() != m {
        return Err(Error::Dimension {
            context: "argmax rows".into(),
            expected: m,
            found: rows.len(),
        });
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::AgentOutOfRange { agent: r + 1, agents: n });
    }
    let layout = EpigraphLayout { items: m, agents: n };
    let big_m = m_const.get();
    let total = inst.total_mass().total;
    let vmax = inst.max_value();
    let w_bound = (m as f64 + 1.0) * big_m + total;

    let mut lower = vec![-big_m; layout.y_count()];
    let mut upper = vec![0.0; layout.y_count()];
    lower.extend(std::iter::repeat_n(-big_m - vmax, layout.z_count()));
    upper.extend(std::iter::repeat_n(big_m + vmax, layout.z_count()));
    lower.push(-w_bound);
    upper.push(w_bound);

    let mut model = LpModel::new(lower, upper);
    model.objective = linearized_objective(&layout, rows);
    for k in 0..m {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let mut coeffs = vec![(layout.y(k, j), 1.0)];
                coeffs.extend((0..m).filter(|&l| l != k).map(|l| (layout.z(l, i, j), 1.0)));
                coeffs.push((layout.w(), -1.0));
                model.add_row(coeffs, 0.0);
            }
        }
    }
    for l in 0..m {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                model.add_row(vec![(layout.y(l, i), 1.0), (layout.z(l, i, j), -1.0)], inst.value(l, i));
            }
        }
    }
    for l in 0..m {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                model.add_row(vec![(layout.y(l, j), 1.0), (layout.z(l, i, j), -1.0)], -inst.value(l, i));
            }
        }
    }
    for l in 0..m {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for r in (0..n).filter(|&r| r != i && r != j) {
                    model.add_row(vec![(layout.y(l, r), 1.0), (layout.z(l, i, j), -1.0)], 0.0);
                }
            }
        }
    }
    Ok(EpigraphLp { model, layout })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DcaOptions {
    /// Stop once `||y_{t+1} - y_t||_inf <= delta`.
    pub delta: f64,
    pub max_iters: usize,
    /// Box size; `None` uses `2V + 1`.
    pub m_const: Option<f64>,
    pub simplex: SimplexOptions,
}

impl Default for DcaOptions {
    fn default() -> Self {
        DcaOptions {
            delta: 1e-8,
            max_iters: 200,
            m_const: None,
            simplex: SimplexOptions::default(),
        }
    }
}

impl DcaOptions {
    pub fn encoding_constant(&self, inst: &Instance) -> Result<EncodingConstant> {
        match self.m_const {
            Some(v) => EncodingConstant::new(v, inst),
            None => Ok(EncodingConstant::for_instance(inst)),
        }
    }
}

/// One entry of the DCA trace. Entry 0 describes the start point, whose
/// objective is `f(y0)`; later entries carry the LP optimum of the step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcaStep {
    pub t: usize,
    pub objective: f64,
    /// `f` at the iterate produced by this step.
    pub dc_value: f64,
    /// `||y_t - y_{t-1}||_inf`; 0 for the start point.
    pub step_norm: f64,
    /// Argmax row indices used to linearize `h` at this step.
    pub rows: Vec<usize>,
    pub pivots: usize,
    /// Largest LP constraint violation of the returned vertex.
    pub lp_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcaOutcome {
    #[serde(serialize_with = "serialize_point")]
    pub y: DualPoint,
    pub objective: f64,
    /// `f(y)` at the final iterate, never above `objective` beyond rounding.
    pub dc_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the trace objectives never increase by more than `1e-9`.
    pub monotone: bool,
    pub trace: Vec<DcaStep>,
    pub allocation: Allocation,
    pub efx: bool,
    pub efx_slack: f64,
    pub m_const: f64,
}

pub(crate) fn serialize_point<S: serde::Serializer>(y: &DualPoint, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&y.to_rows(), s)
}

/// A DCA run that stopped on an error, with the iterations completed so far.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{error} (after {} DCA steps)", trace.len().saturating_sub(1))]
pub struct DcaFailure {
    pub error: Error,
    pub trace: Vec<DcaStep>,
}

impl From<Error> for DcaFailure {
    fn from(error: Error) -> Self {
        DcaFailure { error, trace: Vec::new() }
    }
}

pub const DESCENT_SLACK: f64 = 1e-9;

/// Gives each item to the agent valuing it most, ties to the lowest index.
pub fn greedy_allocation(inst: &Instance) -> Allocation {
    let owner = (0..inst.items())
        .map(|k| {
            let mut best = 0;
            for i in 1..inst.agents() {
                if inst.value(k, i) > inst.value(k, best) {
                    best = i;
                }
            }
            best
        })
        .collect();
    Allocation::new(owner, inst.agents()).expect("agents in range")
}

/// Encoding of [`greedy_allocation`], the default start point.
pub fn greedy_start(inst: &Instance, m_const: EncodingConstant) -> DualPoint {
    encode_allocation(&greedy_allocation(inst), m_const)
}

/// Uniform point of the box `[-M, 0]^{mn}`.
pub fn random_start<R: Rng + ?Sized>(inst: &Instance, m_const: EncodingConstant, rng: &mut R) -> DualPoint {
    let big_m = m_const.get();
    let y = ndarray::Array2::from_shape_fn((inst.items(), inst.agents()), |_| -big_m * rng.gen::<f64>());
    DualPoint::new_unchecked(y)
}

fn argmax_rows(y: &DualPoint) -> Vec<usize> {
    (0..y.items()).map(|k| y.row_argmax(k)).collect()
}

/// Runs the DC algorithm from `y0`.
pub fn dca_solve(inst: &Instance, y0: &DualPoint, opts: &DcaOptions) -> std::result::Result<DcaOutcome, DcaFailure> {
    if y0.view().dim() != inst.values().dim() {
        return Err(Error::Dimension {
            context: "start point".into(),
            expected: inst.items() * inst.agents(),
            found: y0.items() * y0.agents(),
        }
        .into());
    }
    if !(opts.delta >= 0.0) {
        return Err(Error::parameter("delta", "must be nonnegative").into());
    }
    let m_const = opts.encoding_constant(inst)?;
    if !y0.in_box(m_const.get()) {
        return Err(Error::parameter("y0", format!("start point must lie in [-{}, 0]", m_const.get())).into());
    }

    let mut y = y0.clone();
    let mut rows = argmax_rows(&y);
    let start_value = dc_objective(inst, &y);
    let mut trace = vec![DcaStep {
        t: 0,
        objective: start_value,
        dc_value: start_value,
        step_norm: 0.0,
        rows: rows.clone(),
        pivots: 0,
        lp_violation: 0.0,
    }];

    let lp = build_epigraph_lp(inst, &rows, m_const)?;
    let layout = lp.layout;
    let fail = |e: Error, trace: &Vec<DcaStep>| DcaFailure {
        error: e,
        trace: trace.clone(),
    };
    let mut simplex = Simplex::new(lp.model, opts.simplex).map_err(|e| fail(e.into(), &trace))?;
    let mut converged = false;

    for t in 1..=opts.max_iters {
        if t > 1 {
            simplex
                .set_objective(linearized_objective(&layout, &rows))
                .map_err(|e| fail(e.into(), &trace))?;
        }
        let LpSolution {
            x,
            objective,
            pivots,
            max_violation,
        } = simplex.solve().map_err(|e| fail(e.into(), &trace))?;
        let next = layout.extract_y(&x);
        let step_norm = next.distance_inf(&y);
        y = next;
        trace.push(DcaStep {
            t,
            objective,
            dc_value: dc_objective(inst, &y),
            step_norm,
            rows: rows.clone(),
            pivots,
            lp_violation: max_violation,
        });
        if step_norm <= opts.delta {
            converged = true;
            break;
        }
        rows = argmax_rows(&y);
    }

    let monotone = trace
        .windows(2)
        .all(|w| w[1].objective <= w[0].objective + DESCENT_SLACK);
    let allocation = extract_allocation(&y);
    let last = trace.last().expect("trace starts with the start point");
    Ok(DcaOutcome {
        objective: last.objective,
        dc_value: last.dc_value,
        iterations: trace.len() - 1,
        converged,
        monotone,
        efx: is_efx(inst, &allocation),
        efx_slack: efx_slack(inst, &allocation),
        allocation,
        trace,
        m_const: m_const.get(),
        y,
    })
}

/// Runs `starts` DCA instances in parallel: start 0 is the greedy encoding,
/// the others are uniform box points drawn from per-start generators.
pub fn dca_multistart(
    inst: &Instance,
    starts: usize,
    seed: u64,
    opts: &DcaOptions,
) -> Result<Vec<std::result::Result<DcaOutcome, DcaFailure>>> {
    let m_const = opts.encoding_constant(inst)?;
    Ok((0..starts)
        .into_par_iter()
        .map(|s| {
            let y0 = if s == 0 {
                greedy_start(inst, m_const)
            } else {
                random_start(inst, m_const, &mut rng_from_seed(start_seed(seed, s)))
            };
            dca_solve(inst, &y0, opts)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_instance, ValueDistribution};

    fn i0() -> Instance {
        Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let inst = i0();
        let x = Allocation::new(vec![0, 1, 1], 2).unwrap();
        let y = encode_allocation(&x, EncodingConstant::for_instance(&inst));
        let d = DcDecomposition::at(&inst, &y);
        assert_eq!(d.h, 0.0);
        assert!((d.hbar + 0.25).abs() < 1e-15);

        let flat = Instance::from_rows(&vec![vec![0.3; 2]; 3]).unwrap();
        let d = DcDecomposition::at(&flat, &DualPoint::zeros(3, 2));
        assert!((d.hbar - 0.6).abs() < 1e-15);
        assert_eq!(d.h, 0.0);

        let ones = DualPoint::new(ndarray::Array2::from_elem((3, 2), -1.0)).unwrap();
        assert_eq!(h_value(&ones), -3.0);
    }

    #[test]
    fn layout_and_row_counts() {
        let inst = random_instance(2, 3, ValueDistribution::Uniform01, 1).unwrap();
        let lp = build_epigraph_lp(&inst, &[0, 0, 1], EncodingConstant::for_instance(&inst)).unwrap();
        assert_eq!(lp.layout.y_count(), 6);
        assert_eq!(lp.layout.z_count(), 6);
        assert_eq!(lp.model.num_vars(), 13);
        assert_eq!(lp.layout.family_sizes(), [6, 6, 6, 0]);
        assert_eq!(lp.model.rows.len(), 18);

        let inst = random_instance(3, 2, ValueDistribution::Uniform01, 1).unwrap();
        let lp = build_epigraph_lp(&inst, &[0, 2], EncodingConstant::for_instance(&inst)).unwrap();
        assert_eq!((lp.layout.y_count(), lp.layout.z_count()), (6, 12));
        assert_eq!(lp.model.rows.len(), 48);
        for row in &lp.model.rows {
            // Two items, so the epigraph rows touch y, one z and w.
            assert!(row.coeffs.len() == 2 || row.coeffs.len() == 3);
        }

        // Every z column is distinct.
        let l = lp.layout;
        let mut seen = std::collections::HashSet::new();
        for k in 0..2 {
            for i in 0..3 {
                for j in (0..3).filter(|&j| j != i) {
                    assert!(seen.insert(l.z(k, i, j)));
                }
            }
        }
        assert_eq!(seen.len(), 12);
        assert!(seen.iter().all(|&c| (6..18).contains(&c)));
    }

    #[test]
    fn efx_start_is_already_nonpositive() {
        let inst = i0();
        let x = Allocation::new(vec![0, 1, 1], 2).unwrap();
        let y0 = encode_allocation(&x, EncodingConstant::for_instance(&inst));
        let out = dca_solve(&inst, &y0, &DcaOptions::default()).unwrap();
        assert!(out.trace[0].objective <= 0.0);
        assert!(out.monotone);
        assert!(out.objective <= 0.0);
        assert!(out.efx);
    }

    #[test]
    fn greedy_start_runs_to_a_stationary_point() {
        for seed in 0..5 {
            let inst = random_instance(3, 5, ValueDistribution::Uniform01, seed).unwrap();
            let out = dca_solve(
                &inst,
                &greedy_start(&inst, EncodingConstant::for_instance(&inst)),
                &DcaOptions::default(),
            )
            .unwrap();
            assert!(out.monotone, "{:?}", out.trace);
            assert!(out.dc_value <= out.objective + 1e-9);
            if out.objective <= 0.0 {
                assert!(out.efx);
            }
            assert!(out.trace.iter().all(|s| s.lp_violation <= 1e-8));
        }
    }

    #[test]
    fn rejects_start_outside_box() {
        let inst = i0();
        let y0 = DualPoint::new(ndarray::Array2::from_elem((3, 2), 1.0)).unwrap();
        assert!(dca_solve(&inst, &y0, &DcaOptions::default()).is_err());
    }

    #[test]
    fn multistart_is_deterministic() {
        let inst = random_instance(2, 4, ValueDistribution::Uniform01, 3).unwrap();
        let a = dca_multistart(&inst, 4, 9, &DcaOptions::default()).unwrap();
        let b = dca_multistart(&inst, 4, 9, &DcaOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
