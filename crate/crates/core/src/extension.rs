//! Continuous extension of the EFX constraints through row-wise rounding.
//!
//! Rounding each item's row of a fractional point independently gives
//! `E[max_{i != j} u_ij(X)] <= g(x, lambda)` for every `lambda > 0`. Under the
//! softmax change of variables `x = softmax(lambda * y)` the bound tends to
//! the difference-of-convex function
//!
//! ```text
//! f(y) = max_{i != j, k} ( y_kj + sum_{l != k} max{ y_li - v_li, y_lj + v_li, max_{r != i,j} y_lr } )
//!        - sum_l max_r y_lr
//! ```
//!
//! and an EFX allocation exists iff `inf f <= 0`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::lovasz::FractionalPoint;

/// Unconstrained point `y` of the DC program and the fixed-point maps.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoint {
    y: Array2<f64>,
}

impl DualPoint {
    pub fn new(y: Array2<f64>) -> Result<Self> {
        for ((k, i), v) in y.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: k + 1, col: i + 1 });
            }
        }
        Ok(DualPoint { y })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(k) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Dimension {
                context: format!("y row {}", k + 1),
                expected: n,
                found: rows[k].len(),
            });
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((m, n), flat).map_err(|e| Error::Document(e.to_string()))?)
    }

    pub(crate) fn new_unchecked(y: Array2<f64>) -> Self {
        DualPoint { y }
    }

    pub fn zeros(items: usize, agents: usize) -> Self {
        DualPoint {
            y: Array2::zeros((items, agents)),
        }
    }

    pub fn items(&self) -> usize {
        self.y.nrows()
    }

    pub fn agents(&self) -> usize {
        self.y.ncols()
    }

    #[inline]
    pub fn get(&self, item: usize, agent: usize) -> f64 {
        self.y[[item, agent]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn row(&self, item: usize) -> ArrayView1<'_, f64> {
        self.y.row(item)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.y
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.y.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// `h(y_k) = max_r y_kr`.
    pub fn row_max(&self, item: usize) -> f64 {
        self.y.row(item).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First agent attaining the row maximum.
    pub fn row_argmax(&self, item: usize) -> usize {
        let row = self.y.row(item);
        let mut best = 0;
        for (r, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = r;
            }
        }
        best
    }

    /// `||self - other||_inf`.
    pub fn distance_inf(&self, other: &DualPoint) -> f64 {
        self.y
            .iter()
            .zip(other.y.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Whether every entry lies in `[-bound, 0]`.
    pub fn in_box(&self, bound: f64) -> bool {
        self.y.iter().all(|&v| (-bound..=0.0).contains(&v))
    }
}

/// Temperature parameter `lambda > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct Lambda(f64);

impl Lambda {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Lambda(value))
        } else {
            Err(Error::parameter("lambda", format!("{value} is not positive and finite")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Box size `M` for encodings and the fixed-point domain `[-M, 0]^{mn}`.
/// Must exceed `2V`, where `V` is the sum of all values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EncodingConstant(f64);

impl EncodingConstant {
    /// The default `M = 2V + 1`.
    pub fn for_instance(inst: &Instance) -> Self {
        EncodingConstant(2.0 * inst.total_mass().total + 1.0)
    }

    pub fn new(value: f64, inst: &Instance) -> Result<Self> {
        let bound = 2.0 * inst.total_mass().total;
        if value.is_finite() && value > bound {
            Ok(EncodingConstant(value))
        } else {
            Err(Error::EncodingConstant { value, bound })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Samples each item's owner independently from its row of `x`.
pub fn rowwise_round<R: Rng + ?Sized>(x: &FractionalPoint, rng: &mut R) -> Allocation {
    let (m, n) = (x.items(), x.agents());
    let owner = (0..m)
        .map(|k| {
            let row = x.row(k);
            let u: f64 = rng.gen();
            let mut cumulative = 0.0;
            let mut last_positive = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    last_positive = i;
                    cumulative += p;
                    if u < cumulative {
                        return i;
                    }
                }
            }
            // Row sums a hair below 1 in floating point.
            last_positive
        })
        .collect();
    Allocation::new(owner, n).expect("owners drawn from row indices")
}

/// Stable `ln(sum exp(terms))`; `-inf` for no terms.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(1 - x_li - x_lj + x_li e^{-lambda v_li} + x_lj e^{lambda v_li})`
/// from `ln x`, with `1 - x_li - x_lj` taken as the mass on the other agents.
fn log_factor(inst: &Instance, logx: &Array2<f64>, lambda: f64, l: usize, i: usize, j: usize) -> f64 {
    let v = inst.value(l, i);
    let mut terms: Vec<f64> = (0..logx.ncols())
        .filter(|&r| r != i && r != j)
        .map(|r| logx[[l, r]])
        .collect();
    terms.push(logx[[l, i]] - lambda * v);
    terms.push(logx[[l, j]] + lambda * v);
    let out = log_sum_exp(&terms);
    assert!(out.is_finite(), "factor of row {l} is not positive");
    out
}

fn g_from_logs(inst: &Instance, logx: &Array2<f64>, lam: f64) -> f64 {
    let (m, n) = (inst.items(), inst.agents());
    let mut terms = Vec::with_capacity(m * n * (n - 1));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let logs: Vec<f64> = (0..m).map(|l| log_factor(inst, logx, lam, l, i, j)).collect();
            for k in 0..m {
                if logx[[k, j]] > f64::NEG_INFINITY {
                    let rest: f64 = (0..m).filter(|&l| l != k).map(|l| logs[l]).sum();
                    terms.push(logx[[k, j]] + rest);
                }
            }
        }
    }
    log_sum_exp(&terms) / lam
}

/// The upper bound `g(x, lambda)` on the expected maximum envy under
/// row-wise rounding, evaluated entirely in log space.
pub fn g_value(inst: &Instance, x: &FractionalPoint, lambda: Lambda) -> f64 {
    assert_eq!(x.view().dim(), inst.values().dim(), "point shape");
    g_from_logs(inst, &x.view().mapv(f64::ln), lambda.get())
}

/// `g(softmax(y, lambda), lambda)` without forming the softmax, so entries
/// that would underflow to 0 keep their exact logarithm.
pub fn g_value_at_dual(inst: &Instance, y: &DualPoint, lambda: Lambda) -> f64 {
    assert_eq!(y.view().dim(), inst.values().dim(), "point shape");
    let lam = lambda.get();
    let mut logx = y.view().mapv(|v| lam * v);
    for mut row in logx.rows_mut() {
        let norm = log_sum_exp(row.as_slice().expect("standard layout"));
        row.mapv_inplace(|v| v - norm);
    }
    g_from_logs(inst, &logx, lam)
}

/// Row-wise softmax `x_li = e^{lambda y_li} / sum_r e^{lambda y_lr}`.
pub fn softmax_map(y: &DualPoint, lambda: Lambda) -> FractionalPoint {
    let lam = lambda.get();
    let (m, n) = (y.items(), y.agents());
    let mut x = Array2::zeros((m, n));
    for k in 0..m {
        let h = y.row_max(k);
        let mut total = 0.0;
        for i in 0..n {
            let e = (lam * (y.get(k, i) - h)).exp();
            x[[k, i]] = e;
            total += e;
        }
        for i in 0..n {
            x[[k, i]] /= total;
        }
    }
    FractionalPoint::new_unchecked(x)
}

/// `max{y_li - v_li, y_lj + v_li, max_{r != i,j} y_lr}`, the largest entry
/// of row `l` after moving `v_li` from agent `i` to agent `j`.
#[inline]
pub(crate) fn shifted_row_max(inst: &Instance, y: &DualPoint, l: usize, i: usize, j: usize) -> f64 {
    let v = inst.value(l, i);
    let mut best = (y.get(l, i) - v).max(y.get(l, j) + v);
    for r in 0..y.agents() {
        if r != i && r != j {
            best = best.max(y.get(l, r));
        }
    }
    best
}

/// Value of the convex part together with the first maximizing `(k, i, j)`
/// in lexicographic order.
pub fn convex_part_argmax(inst: &Instance, y: &DualPoint) -> (f64, (usize, usize, usize)) {
    assert_eq!(y.view().dim(), inst.values().dim(), "point shape");
    let (m, n) = (inst.items(), inst.agents());
    let mut best = (f64::NEG_INFINITY, (0, 0, 1));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let shifted: Vec<f64> = (0..m).map(|l| shifted_row_max(inst, y, l, i, j)).collect();
            for k in 0..m {
                let rest: f64 = (0..m).filter(|&l| l != k).map(|l| shifted[l]).sum();
                let value = y.get(k, j) + rest;
                let key = (k, i, j);
                if value > best.0 || (value == best.0 && key < best.1) {
                    best = (value, key);
                }
            }
        }
    }
    best
}

/// `sum_l max_r y_lr`.
pub fn row_max_sum(y: &DualPoint) -> f64 {
    (0..y.items()).map(|k| y.row_max(k)).sum()
}

/// The DC objective `f(y)`.
pub fn dc_objective(inst: &Instance, y: &DualPoint) -> f64 {
    convex_part_argmax(inst, y).0 - row_max_sum(y)
}

/// `y` with 0 at each item's owner and `-M` elsewhere.
pub fn encode_allocation(alloc: &Allocation, m_const: EncodingConstant) -> DualPoint {
    let mut y = Array2::from_elem((alloc.items(), alloc.agents()), -m_const.get());
    for (k, &a) in alloc.owners().iter().enumerate() {
        y[[k, a]] = 0.0;
    }
    DualPoint { y }
}

/// Gives each item to its row's argmax agent (ties to the lowest index).
/// When `f(y) <= 0` the result is EFX, since `f(y)` bounds its EFX slack
/// from above.
pub fn extract_allocation(y: &DualPoint) -> Allocation {
    let owner = (0..y.items()).map(|k| y.row_argmax(k)).collect();
    Allocation::new(owner, y.agents()).expect("argmax is a valid agent")
}

/// `|g(softmax(y, lambda), lambda) - f(y)|` for each lambda.
pub fn g_limit_gaps(inst: &Instance, y: &DualPoint, lambdas: &[Lambda]) -> Vec<f64> {
    let f = dc_objective(inst, y);
    lambdas
        .iter()
        .map(|&lam| (g_value_at_dual(inst, y, lam) - f).abs())
        .collect()
}

/// Default diagnostic schedule `1, 10, 100, 1000`.
pub fn default_lambdas() -> Vec<Lambda> {
    [1.0, 10.0, 100.0, 1000.0].into_iter().map(Lambda).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_instance, rng_from_seed, ValueDistribution};
    use crate::instance::efx_slack;
    use ndarray::array;

    fn i0() -> Instance {
        Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    /// Direct product-form evaluation, usable for small lambda only.
    fn g_direct(inst: &Instance, x: &FractionalPoint, lam: f64) -> f64 {
        let (m, n) = (inst.items(), inst.agents());
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in 0..m {
                    let mut prod = x.get(k, j);
                    for l in (0..m).filter(|&l| l != k) {
                        let v = inst.value(l, i);
                        prod *= 1.0 - x.get(l, i) - x.get(l, j)
                            + x.get(l, i) * (-lam * v).exp()
                            + x.get(l, j) * (lam * v).exp();
                    }
                    total += prod;
                }
            }
        }
        total.ln() / lam
    }

    #[test]
    fn lambda_and_constant_validation() {
        assert!(Lambda::new(0.0).is_err());
        assert!(Lambda::new(f64::INFINITY).is_err());
        let inst = i0();
        assert_eq!(EncodingConstant::for_instance(&inst).get(), 5.0);
        assert!(EncodingConstant::new(4.0, &inst).is_err());
        assert!(EncodingConstant::new(4.5, &inst).is_ok());
    }

    #[test]
    fn rounding_integral_point_is_deterministic() {
        let alloc = Allocation::new(vec![2, 0, 1, 2], 3).unwrap();
        let x = FractionalPoint::from_allocation(&alloc);
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(rowwise_round(&x, &mut rng), alloc);
        }
    }

    #[test]
    fn rounding_uniform_marginals_and_independence() {
        let x = FractionalPoint::uniform(3, 2);
        let mut rng = rng_from_seed(99);
        let trials = 10_000;
        let mut count = [0.0; 3];
        let mut joint01 = 0.0;
        for _ in 0..trials {
            let a = rowwise_round(&x, &mut rng);
            for k in 0..3 {
                if a.owner_of(k) == 0 {
                    count[k] += 1.0;
                }
            }
            if a.owner_of(0) == 0 && a.owner_of(1) == 0 {
                joint01 += 1.0;
            }
        }
        let t = trials as f64;
        for c in count {
            assert!((c / t - 0.5).abs() < 0.02);
        }
        let cov = joint01 / t - (count[0] / t) * (count[1] / t);
        // Each indicator product has variance <= 1/4; 3 standard errors.
        assert!(cov.abs() < 3.0 * 0.5 / t.sqrt(), "{cov}");
    }

    #[test]
    fn softmax_examples() {
        let y = DualPoint::from_rows(&[vec![0.0, -5.0], vec![2.0, 2.0]]).unwrap();
        let x = softmax_map(&y, Lambda::new(1.0).unwrap());
        let e = (-5.0f64).exp();
        assert!((x.get(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((x.get(0, 1) - e / (1.0 + e)).abs() < 1e-15);
        assert!((x.get(0, 0) - 0.99331).abs() < 1e-5);
        assert_eq!(x.get(1, 0), 0.5);
        for k in 0..2 {
            assert!((x.row(k).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn g_log_space_matches_direct_product() {
        let inst = i0();
        let alloc = Allocation::new(vec![0, 1, 1], 2).unwrap();
        let x = FractionalPoint::from_allocation(&alloc);
        let lam = Lambda::new(10.0).unwrap();
        let g = g_value(&inst, &x, lam);
        assert!((g - g_direct(&inst, &x, 10.0)).abs() < 1e-12);
        assert!(g <= (6.0f64).ln() / 10.0);

        let inst = random_instance(3, 4, ValueDistribution::Uniform01, 8).unwrap();
        let x = FractionalPoint::new(array![
            [0.2, 0.3, 0.5],
            [0.6, 0.1, 0.3],
            [0.0, 0.5, 0.5],
            [0.25, 0.25, 0.5]
        ])
        .unwrap();
        for lam in [0.5, 1.0, 5.0] {
            let g = g_value(&inst, &x, Lambda::new(lam).unwrap());
            assert!((g - g_direct(&inst, &x, lam)).abs() < 1e-12);
        }
    }

    #[test]
    fn g_survives_large_lambda() {
        let inst = i0();
        let x = FractionalPoint::uniform(3, 2);
        let g = g_value(&inst, &x, Lambda::new(1e4).unwrap());
        assert!(g.is_finite());
    }

    #[test]
    fn dc_objective_examples() {
        let inst = i0();
        let alloc = Allocation::new(vec![0, 1, 1], 2).unwrap();
        let y = encode_allocation(&alloc, EncodingConstant::for_instance(&inst));
        assert_eq!(y.to_rows(), vec![vec![0.0, -5.0], vec![-5.0, 0.0], vec![-5.0, 0.0]]);
        assert!((dc_objective(&inst, &y) + 0.25).abs() < 1e-15);
        assert_eq!(extract_allocation(&y), alloc);

        let c = 0.7;
        let flat = Instance::from_rows(&vec![vec![c; 3]; 4]).unwrap();
        let f = dc_objective(&flat, &DualPoint::zeros(4, 3));
        assert!((f - 3.0 * c).abs() < 1e-15);
    }

    #[test]
    fn dc_objective_is_row_shift_invariant() {
        let inst = random_instance(3, 4, ValueDistribution::Uniform01, 2).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let y = DualPoint::new(Array2::from_shape_fn((4, 3), |_| rng.gen_range(-3.0..0.0)))
                .unwrap();
            let mut shifted = y.clone().into_inner();
            for k in 0..4 {
                let c = rng.gen_range(-2.0..2.0);
                shifted.row_mut(k).mapv_inplace(|v| v + c);
            }
            let a = dc_objective(&inst, &y);
            let b = dc_objective(&inst, &DualPoint::new(shifted).unwrap());
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_reduces_to_efx_slack() {
        let inst = random_instance(3, 4, ValueDistribution::Uniform01, 21).unwrap();
        let m_const = EncodingConstant::for_instance(&inst);
        for code in 0..81usize {
            let owner: Vec<usize> = (0..4).map(|k| code / 3usize.pow(k) % 3).collect();
            let alloc = Allocation::new(owner, 3).unwrap();
            let y = encode_allocation(&alloc, m_const);
            assert!((dc_objective(&inst, &y) - efx_slack(&inst, &alloc)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_of_encoding_is_near_integral() {
        let inst = i0();
        let alloc = Allocation::new(vec![0, 1, 1], 2).unwrap();
        let m_const = EncodingConstant::for_instance(&inst);
        let y = encode_allocation(&alloc, m_const);
        for lam in [0.5, 1.0, 3.0] {
            let x = softmax_map(&y, Lambda::new(lam).unwrap());
            let ind = FractionalPoint::from_allocation(&alloc);
            let bound = 2.0 * (-lam * m_const.get()).exp();
            for (a, b) in x.view().iter().zip(ind.view()) {
                assert!((a - b).abs() < bound);
            }
        }
    }

    #[test]
    fn gaps_shrink_with_lambda() {
        let inst = random_instance(2, 3, ValueDistribution::Uniform01, 5).unwrap();
        let y = DualPoint::from_rows(&[vec![-0.1, -0.9], vec![-0.7, -0.2], vec![-0.4, -0.5]])
            .unwrap();
        let lams: Vec<Lambda> = [1.0, 10.0, 100.0].iter().map(|&l| Lambda::new(l).unwrap()).collect();
        let gaps = g_limit_gaps(&inst, &y, &lams);
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");

        let constant = DualPoint::zeros(3, 2);
        let gaps = g_limit_gaps(&inst, &constant, &default_lambdas());
        assert!(gaps[3] < gaps[0]);
        assert!(gaps[3] < 1e-2, "{gaps:?}");
    }
}
