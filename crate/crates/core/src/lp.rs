//! A small dense two-phase simplex solver for bounded linear programs.
//!
//! Models are `min c.x` subject to `a_r.x <= b_r` and `l <= x <= u` with
//! finite lower bounds. Variables are shifted to `x - l >= 0`, finite upper
//! bounds become explicit rows, and rows whose shifted right-hand side is
//! negative start from an artificial variable. Pivoting follows Dantzig's
//! rule for a bounded number of pivots and then falls back to Bland's rule,
//! which cannot cycle.
//!
//! [`Simplex`] keeps its tableau between solves, so a sequence of programs
//! that differ only in the objective restarts Phase 2 from the previous
//! optimal basis.

use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex failed numerically after {pivots} pivots")]
    NumericFailure { pivots: usize },
    #[error("invalid linear program: {0}")]
    InvalidModel(String),
}

/// One inequality `sum coeffs <= rhs`, stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LpRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpModel {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpModel {
    /// A model with zero objective and the given bounds.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound vectors differ in length");
        LpModel {
            objective: vec![0.0; lower.len()],
            rows: Vec::new(),
            lower,
            upper,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(LpRow { coeffs, rhs });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`; 0 when feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .map(|r| r.activity(x) - r.rhs)
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::InvalidModel(format!(
                "objective has {} coefficients for {n} variables",
                self.objective.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::InvalidModel("non-finite objective coefficient".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || u.is_nan() || u == f64::NEG_INFINITY {
                return Err(LpError::InvalidModel(format!("variable {j} needs a finite lower bound")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(LpError::InvalidModel(format!("row {r} is malformed")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimplexOptions {
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Phase-1 residual and reduced-cost tolerance.
    pub feasibility_tol: f64,
    /// Largest violation accepted when the solution is substituted back.
    pub check_tol: f64,
    /// Dantzig pivots per solve before switching to Bland's rule;
    /// `None` means ten times the tableau height plus width.
    pub dantzig_pivots: Option<usize>,
    /// Pivot cap per solve; `None` means 200 times the height plus width.
    pub max_pivots: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tol: 1e-10,
            feasibility_tol: 1e-9,
            check_tol: 1e-8,
            dantzig_pivots: None,
            max_pivots: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Pivots spent in this solve.
    pub pivots: usize,
    /// Largest row or bound violation of `x`.
    pub max_violation: f64,
}

/// Solves `model` from scratch.
pub fn solve(model: &LpModel, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    Simplex::new(model.clone(), *opts)?.solve()
}

/// Simplex state with a primal feasible basis, reusable across objectives.
#[derive(Clone, Debug)]
pub struct Simplex {
    model: LpModel,
    opts: SimplexOptions,
    tableau: Tableau,
    /// Pivots spent in Phase 1.
    phase_one_pivots: usize,
}

#[derive(Clone, Debug)]
struct Tableau {
    /// Row-major, `width + 1` entries per row; the last is the right-hand side.
    cells: Vec<f64>,
    height: usize,
    width: usize,
    basis: Vec<usize>,
    /// Columns that may never enter the basis.
    banned: Vec<bool>,
    /// Reduced costs, with the negated objective value in the last slot.
    costs: Vec<f64>,
    structural: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn stride(&self) -> usize {
        self.width + 1
    }

    fn row(&self, r: usize) -> &[f64] {
        let s = self.stride();
        &self.cells[r * s..(r + 1) * s]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.cells[r * self.stride() + self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let s = self.stride();
        let p = self.cells[pr * s + pc];
        let pivot_row: Vec<f64> = self.cells[pr * s..(pr + 1) * s].iter().map(|v| v / p).collect();
        for r in 0..self.height {
            let target = &mut self.cells[r * s..(r + 1) * s];
            if r == pr {
                target.copy_from_slice(&pivot_row);
                continue;
            }
            let factor = target[pc];
            if factor != 0.0 {
                for (t, &q) in target.iter_mut().zip(&pivot_row) {
                    *t -= factor * q;
                }
                target[pc] = 0.0;
            }
        }
        let factor = self.costs[pc];
        if factor != 0.0 {
            for (t, &q) in self.costs.iter_mut().zip(&pivot_row) {
                *t -= factor * q;
            }
            self.costs[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Sets the reduced costs for the column costs `c` (length `width`).
    fn price(&mut self, c: &[f64]) {
        let s = self.stride();
        self.costs = c.to_vec();
        self.costs.push(0.0);
        for r in 0..self.height {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let row = &self.cells[r * s..(r + 1) * s];
                for (t, &q) in self.costs.iter_mut().zip(row) {
                    *t -= cb * q;
                }
            }
        }
        for &b in &self.basis {
            self.costs[b] = 0.0;
        }
    }

    fn entering(&self, tol: f64, bland: bool) -> Option<usize> {
        let mut is_basic = vec![false; self.width];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        let candidates = (0..self.width).filter(|&j| !is_basic[j] && !self.banned[j] && self.costs[j] < -tol);
        if bland {
            candidates.into_iter().next()
        } else {
            candidates.min_by(|&a, &b| self.costs[a].total_cmp(&self.costs[b]))
        }
    }

    fn leaving(&self, col: usize, pivot_tol: f64, bland: bool) -> Option<usize> {
        let s = self.stride();
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.height {
            let a = self.cells[r * s + col];
            if a <= pivot_tol {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > self.cells[br * s + col]
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        Some((r, ratio))
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn run(&mut self, opts: &SimplexOptions, pivots: &mut usize) -> Result<Outcome, LpError> {
        let size = self.height + self.width;
        let dantzig = opts.dantzig_pivots.unwrap_or(10 * size);
        let cap = opts.max_pivots.unwrap_or(200 * size);
        let mut local = 0usize;
        loop {
            let bland = local >= dantzig;
            let Some(col) = self.entering(opts.feasibility_tol, bland) else {
                return Ok(Outcome::Optimal);
            };
            let Some(row) = self.leaving(col, opts.pivot_tol, bland) else {
                return Ok(Outcome::Unbounded);
            };
            if local >= cap {
                return Err(LpError::NumericFailure { pivots: *pivots });
            }
            self.pivot(row, col);
            local += 1;
            *pivots += 1;
        }
    }

    fn objective(&self) -> f64 {
        -self.costs[self.width]
    }
}

impl Simplex {
    /// Builds the tableau and runs Phase 1.
    pub fn new(model: LpModel, opts: SimplexOptions) -> Result<Self, LpError> {
        model.validate()?;
        let n = model.num_vars();
        let mut dense_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &model.rows {
            let mut a = vec![0.0; n];
            for &(j, v) in &row.coeffs {
                a[j] += v;
            }
            let shift: f64 = a.iter().zip(&model.lower).map(|(a, l)| a * l).sum();
            dense_rows.push((a, row.rhs - shift));
        }
        for j in 0..n {
            let range = model.upper[j] - model.lower[j];
            if range < 0.0 {
                return Err(LpError::Infeasible);
            }
            if range.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                dense_rows.push((a, range));
            }
        }
        let height = dense_rows.len();
        let artificials = dense_rows.iter().filter(|(_, b)| *b < 0.0).count();
        let width = n + height + artificials;
        let stride = width + 1;
        let mut cells = vec![0.0; height * stride];
        let mut basis = vec![0; height];
        let mut next_art = n + height;
        for (r, (a, b)) in dense_rows.into_iter().enumerate() {
            let row = &mut cells[r * stride..(r + 1) * stride];
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                row[j] = sign * a[j];
            }
            row[n + r] = sign;
            row[width] = sign * b;
            if b < 0.0 {
                row[next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            } else {
                basis[r] = n + r;
            }
        }
        let mut tableau = Tableau {
            cells,
            height,
            width,
            basis,
            banned: vec![false; width],
            costs: vec![0.0; stride],
            structural: n,
        };

        let mut pivots = 0;
        if artificials > 0 {
            let mut c = vec![0.0; width];
            for v in &mut c[n + height..] {
                *v = 1.0;
            }
            tableau.price(&c);
            match tableau.run(&opts, &mut pivots)? {
                Outcome::Optimal => {}
                Outcome::Unbounded => return Err(LpError::NumericFailure { pivots }),
            }
            if tableau.objective() > opts.feasibility_tol * (1.0 + height as f64) {
                return Err(LpError::Infeasible);
            }
            for v in &mut tableau.banned[n + height..] {
                *v = true;
            }
            // Drive remaining zero-level artificials out where possible; rows
            // where that fails are redundant and keep the artificial at zero.
            for r in 0..height {
                if tableau.basis[r] >= n + height {
                    let row = tableau.row(r);
                    let col = (0..n + height)
                        .filter(|&j| row[j].abs() > opts.pivot_tol)
                        .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                    if let Some(col) = col {
                        tableau.pivot(r, col);
                        pivots += 1;
                    }
                }
            }
        }
        Ok(Simplex {
            model,
            opts,
            tableau,
            phase_one_pivots: pivots,
        })
    }

    pub fn model(&self) -> &LpModel {
        &self.model
    }

    pub fn phase_one_pivots(&self) -> usize {
        self.phase_one_pivots
    }

    /// Replaces the objective; the basis stays primal feasible.
    pub fn set_objective(&mut self, objective: Vec<f64>) -> Result<(), LpError> {
        if objective.len() != self.model.num_vars() || objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::InvalidModel("objective does not match the model".into()));
        }
        self.model.objective = objective;
        Ok(())
    }

    /// Runs Phase 2 from the current basis. If the substituted solution fails
    /// the feasibility check, the tableau is rebuilt once from the model.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        match self.phase_two() {
            Ok(sol) if sol.max_violation <= self.opts.check_tol => Ok(sol),
            Err(LpError::Unbounded) => Err(LpError::Unbounded),
            _ => {
                *self = Simplex::new(self.model.clone(), self.opts)?;
                let sol = self.phase_two()?;
                if sol.max_violation <= self.opts.check_tol {
                    Ok(sol)
                } else {
                    Err(LpError::NumericFailure { pivots: sol.pivots })
                }
            }
        }
    }

    fn phase_two(&mut self) -> Result<LpSolution, LpError> {
        let n = self.model.num_vars();
        let mut c = vec![0.0; self.tableau.width];
        c[..n].copy_from_slice(&self.model.objective);
        self.tableau.price(&c);
        let mut pivots = 0;
        match self.tableau.run(&self.opts, &mut pivots)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Err(LpError::Unbounded),
        }
        let mut x = self.model.lower.clone();
        for r in 0..self.tableau.height {
            let b = self.tableau.basis[r];
            if b < self.tableau.structural {
                x[b] += self.tableau.rhs(r).max(0.0);
            }
        }
        for (v, &u) in x.iter_mut().zip(&self.model.upper) {
            *v = v.min(u);
        }
        Ok(LpSolution {
            objective: self.model.objective_value(&x),
            max_violation: self.model.max_violation(&x),
            x,
            pivots,
        })
    }
}
