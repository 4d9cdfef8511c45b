//! Vector maps whose fixed points encode EFX allocations.
//!
//! With `h_k = max_r y_kr` and
//!
//! ```text
//! A_kj(y) = max_{i != j} sum_{l != k} [ h(y_l + v_li (e_j - e_i)) - h(y_l) ]
//! ```
//!
//! the maps are
//!
//! * `T_kj  = min{ y_kj, h_k - A_kj }`
//! * `T'_kj = min{ y_kj - h_k, -A_kj * [h_k == 0] }`
//! * `T~_kj = min{ y_kj - h_k, -A_kj * exp(h_k) }`
//!
//! `T` is fixed exactly at solutions of `y_kj - h_k + A_kj <= 0`, and the
//! maximum of those left-hand sides is the DC objective `f(y)`. `T~` is
//! continuous and maps the box `[-M, 0]^{mn}` into itself whenever `V <= M`.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dc::serialize_point;
use crate::error::{Error, Result};
use crate::extension::{extract_allocation, shifted_row_max, DualPoint, EncodingConstant};
use crate::generate::{rng_from_seed, start_seed};
use crate::instance::{efx_slack, is_efx, Allocation, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedPointMap {
    T,
    Tprime,
    Ttilde,
}

impl std::str::FromStr for FixedPointMap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "T" => Ok(FixedPointMap::T),
            "Tprime" => Ok(FixedPointMap::Tprime),
            "Ttilde" => Ok(FixedPointMap::Ttilde),
            other => Err(format!("unknown map {other:?}; expected T, Tprime or Ttilde")),
        }
    }
}

/// Row maxima, the `A` matrix and the image of one map at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MapEval {
    pub h_row: Vec<f64>,
    pub a: Array2<f64>,
    pub image: DualPoint,
}

/// `h(y_k)` for every row.
pub fn row_maxima(y: &DualPoint) -> Vec<f64> {
    (0..y.items()).map(|k| y.row_max(k)).collect()
}

/// The matrix `A(y)`.
///
/// Increments `h(y_l + v_li (e_j - e_i)) - h(y_l)` are computed once per
/// `(l, i, j)`; the sum over `l != k` joins a prefix and a suffix sum so no
/// term is ever subtracted back out.
pub fn a_matrix(inst: &Instance, y: &DualPoint) -> Array2<f64> {
    assert_eq!(y.view().dim(), inst.values().dim(), "point shape");
    let (m, n) = (inst.items(), inst.agents());
    let h = row_maxima(y);
    let mut a = Array2::from_elem((m, n), f64::NEG_INFINITY);
    let mut prefix = vec![0.0; m + 1];
    let mut suffix = vec![0.0; m + 1];
    for j in 0..n {
        for i in (0..n).filter(|&i| i != j) {
            let inc: Vec<f64> = (0..m).map(|l| shifted_row_max(inst, y, l, i, j) - h[l]).collect();
            for l in 0..m {
                prefix[l + 1] = prefix[l] + inc[l];
            }
            for l in (0..m).rev() {
                suffix[l] = suffix[l + 1] + inc[l];
            }
            for k in 0..m {
                let s = prefix[k] + suffix[k + 1];
                if s > a[[k, j]] {
                    a[[k, j]] = s;
                }
            }
        }
    }
    a
}

/// Evaluates `map` at `y`. For `T~` the image is checked against the box
/// `[-M, 0]`; leaving it is reported as [`Error::SelfMap`].
pub fn evaluate_map(
    inst: &Instance,
    map: FixedPointMap,
    y: &DualPoint,
    m_const: EncodingConstant,
) -> Result<MapEval> {
    let h_row = row_maxima(y);
    let a = a_matrix(inst, y);
    let image = Array2::from_shape_fn(a.dim(), |(k, j)| {
        let (ykj, hk, akj) = (y.get(k, j), h_row[k], a[[k, j]]);
        match map {
            FixedPointMap::T => ykj.min(hk - akj),
            FixedPointMap::Tprime => {
                let gate = if hk == 0.0 { -akj } else { 0.0 };
                (ykj - hk).min(gate)
            }
            FixedPointMap::Ttilde => (ykj - hk).min(-akj * hk.exp()),
        }
    });
    if map == FixedPointMap::Ttilde {
        let bound = m_const.get();
        if let Some(((k, j), &value)) = image.indexed_iter().find(|(_, &v)| !(-bound..=0.0).contains(&v)) {
            return Err(Error::SelfMap {
                row: k + 1,
                col: j + 1,
                value,
                bound,
            });
        }
    }
    Ok(MapEval {
        h_row,
        a,
        image: DualPoint::new_unchecked(image),
    })
}

pub fn map_t(inst: &Instance, y: &DualPoint) -> DualPoint {
    evaluate_map(inst, FixedPointMap::T, y, EncodingConstant::for_instance(inst))
        .expect("T has no box check")
        .image
}

pub fn map_t_prime(inst: &Instance, y: &DualPoint) -> DualPoint {
    evaluate_map(inst, FixedPointMap::Tprime, y, EncodingConstant::for_instance(inst))
        .expect("T' has no box check")
        .image
}

/// `T~(y)` with the self-map check against `[-M, 0]` for the default `M`.
pub fn map_t_tilde(inst: &Instance, y: &DualPoint) -> Result<DualPoint> {
    Ok(evaluate_map(inst, FixedPointMap::Ttilde, y, EncodingConstant::for_instance(inst))?.image)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub item: usize,
    pub agent: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    /// `max_{k,j} (y_kj - h_k + A_kj)`, equal to the DC objective at `y`.
    pub slack: f64,
    pub violations: Vec<ConstraintViolation>,
}

/// Checks `y_kj - h_k + A_kj <= tol` for every entry.
pub fn verify_constraints(inst: &Instance, y: &DualPoint, tol: f64) -> ConstraintCheck {
    let h = row_maxima(y);
    let a = a_matrix(inst, y);
    let mut slack = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for ((k, j), &akj) in a.indexed_iter() {
        let value = y.get(k, j) - h[k] + akj;
        slack = slack.max(value);
        if value > tol {
            violations.push(ConstraintViolation { item: k, agent: j, value });
        }
    }
    ConstraintCheck { slack, violations }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NegativeRowEntry {
    pub agent: usize,
    pub y: f64,
    pub a: f64,
    /// `|exp(-h_k) + A_kj / y_kj|`; `None` when `y_kj` is within `tol` of 0.
    pub residual: Option<f64>,
}

/// Diagnostics for a row whose maximum is strictly negative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegativeRow {
    pub item: usize,
    pub h: f64,
    pub entries: Vec<NegativeRowEntry>,
    /// `ln(1 + V)`, the scale against which `|h_k|` is compared.
    pub log_scale: f64,
    pub within_log_scale: bool,
}

/// Reports every row with `h_k < -tol`. At a fixed point of `T~` such rows
/// must satisfy `exp(-h_k) = -A_kj / y_kj` for every agent.
pub fn negative_row_diagnostics(inst: &Instance, y: &DualPoint, tol: f64) -> Vec<NegativeRow> {
    let h = row_maxima(y);
    let a = a_matrix(inst, y);
    let log_scale = (1.0 + inst.total_mass().total).ln();
    (0..y.items())
        .filter(|&k| h[k] < -tol)
        .map(|k| NegativeRow {
            item: k,
            h: h[k],
            entries: (0..y.agents())
                .map(|j| {
                    let ykj = y.get(k, j);
                    NegativeRowEntry {
                        agent: j,
                        y: ykj,
                        a: a[[k, j]],
                        residual: (ykj < -tol).then(|| ((-h[k]).exp() + a[[k, j]] / ykj).abs()),
                    }
                })
                .collect(),
            log_scale,
            within_log_scale: h[k].abs() <= log_scale,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PicardOptions {
    /// Damping in `(0, 1]`.
    pub alpha: f64,
    /// Fixed-point residual tolerance.
    pub tol: f64,
    /// Constraint slack accepted for an EFX claim.
    pub slack_tol: f64,
    pub max_iters: usize,
    /// Box size; `None` uses `2V + 1`.
    pub m_const: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            alpha: 0.5,
            tol: 1e-8,
            slack_tol: 1e-6,
            max_iters: 5000,
            m_const: None,
        }
    }
}

impl PicardOptions {
    fn validate(&self, inst: &Instance) -> Result<EncodingConstant> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::parameter("alpha", format!("{} is outside (0, 1]", self.alpha)));
        }
        if !(self.tol >= 0.0) || !(self.slack_tol >= 0.0) {
            return Err(Error::parameter("tol", "tolerances must be nonnegative"));
        }
        match self.m_const {
            Some(v) => EncodingConstant::new(v, inst),
            None => Ok(EncodingConstant::for_instance(inst)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub map: FixedPointMap,
    /// Whether the residual reached the tolerance. When it did not, every
    /// field below describes the iterate with the smallest residual.
    pub converged: bool,
    pub iterations: usize,
    pub best_iteration: usize,
    pub residual: f64,
    pub constraint_slack: f64,
    pub constraints_hold: bool,
    pub negative_rows: Vec<NegativeRow>,
    pub allocation: Allocation,
    pub efx: bool,
    pub efx_slack: f64,
    #[serde(serialize_with = "serialize_point")]
    pub y: DualPoint,
    pub m_const: f64,
}

fn residual(a: &DualPoint, b: &DualPoint) -> f64 {
    a.distance_inf(b)
}

/// Damped Picard iteration `y <- (1 - alpha) y + alpha map(y)`.
pub fn picard_iterate(
    inst: &Instance,
    map: FixedPointMap,
    y0: &DualPoint,
    opts: &PicardOptions,
) -> Result<FixedPointReport> {
    let m_const = opts.validate(inst)?;
    if y0.view().dim() != inst.values().dim() {
        return Err(Error::Dimension {
            context: "start point".into(),
            expected: inst.items() * inst.agents(),
            found: y0.items() * y0.agents(),
        });
    }
    if !y0.in_box(m_const.get()) {
        return Err(Error::parameter("y0", format!("start point must lie in [-{}, 0]", m_const.get())));
    }
    let bound = m_const.get();
    let alpha = opts.alpha;
    let mut y = y0.clone();
    let mut best = (f64::INFINITY, 0usize, y.clone());
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..=opts.max_iters {
        iterations = t;
        let image = evaluate_map(inst, map, &y, m_const)?.image;
        let r = residual(&image, &y);
        if r < best.0 {
            best = (r, t, y.clone());
        }
        if r <= opts.tol {
            converged = true;
            break;
        }
        if t == opts.max_iters {
            break;
        }
        let mut next = y.view().to_owned();
        next.zip_mut_with(&image.view(), |v, &im| {
            *v = (1.0 - alpha) * *v + alpha * im;
        });
        if map == FixedPointMap::Ttilde {
            // A convex combination of box points, up to rounding.
            next.mapv_inplace(|v| v.clamp(-bound, 0.0));
        }
        y = DualPoint::new_unchecked(next);
    }
    let (res, best_iteration, point) = if converged {
        (best.0, iterations, y)
    } else {
        best
    };
    Ok(report(inst, map, point, res, iterations, best_iteration, converged, opts, m_const))
}

#[allow(clippy::too_many_arguments)]
fn report(
    inst: &Instance,
    map: FixedPointMap,
    y: DualPoint,
    residual: f64,
    iterations: usize,
    best_iteration: usize,
    converged: bool,
    opts: &PicardOptions,
    m_const: EncodingConstant,
) -> FixedPointReport {
    let check = verify_constraints(inst, &y, opts.slack_tol);
    let allocation = extract_allocation(&y);
    FixedPointReport {
        map,
        converged,
        iterations,
        best_iteration,
        residual,
        constraint_slack: check.slack,
        constraints_hold: check.slack <= opts.slack_tol,
        negative_rows: negative_row_diagnostics(inst, &y, opts.tol),
        efx: is_efx(inst, &allocation),
        efx_slack: efx_slack(inst, &allocation),
        allocation,
        y,
        m_const: m_const.get(),
    }
}

/// Uniform point of `[-M, 0]^{mn}`.
pub fn random_box_point<R: Rng + ?Sized>(items: usize, agents: usize, bound: f64, rng: &mut R) -> DualPoint {
    DualPoint::new_unchecked(Array2::from_shape_fn((items, agents), |_| -bound * rng.gen::<f64>()))
}

/// Parallel Picard runs from `starts` seeded uniform box points.
pub fn picard_multistart(
    inst: &Instance,
    map: FixedPointMap,
    starts: usize,
    seed: u64,
    opts: &PicardOptions,
) -> Result<Vec<Result<FixedPointReport>>> {
    let bound = opts.validate(inst)?.get();
    Ok((0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_from_seed(start_seed(seed, s));
            let y0 = random_box_point(inst.items(), inst.agents(), bound, &mut rng);
            picard_iterate(inst, map, &y0, opts)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::{dc_objective, encode_allocation};
    use crate::generate::{random_instance, ValueDistribution};

    fn i0() -> Instance {
        Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    fn efx_point(inst: &Instance) -> DualPoint {
        let x = Allocation::new(vec![0, 1, 1], 2).unwrap();
        encode_allocation(&x, EncodingConstant::for_instance(inst))
    }

    #[test]
    fn a_matrix_examples() {
        let inst = i0();
        let a = a_matrix(&inst, &efx_point(&inst));
        assert!((a[[0, 1]] - 0.5).abs() < 1e-15);
        assert!((a[[1, 1]] + 0.25).abs() < 1e-15);

        let zero = Instance::from_rows(&vec![vec![0.0; 3]; 2]).unwrap();
        let mut rng = rng_from_seed(0);
        let y = random_box_point(2, 3, 5.0, &mut rng);
        assert!(a_matrix(&zero, &y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maps_fix_an_efx_encoding() {
        let inst = i0();
        let y = efx_point(&inst);
        assert_eq!(map_t(&inst, &y), y);
        assert_eq!(map_t_prime(&inst, &y), y);
        assert_eq!(map_t_tilde(&inst, &y).unwrap(), y);
    }

    #[test]
    fn t_moves_a_non_efx_encoding() {
        let inst = i0();
        let x = Allocation::new(vec![1, 1, 1], 2).unwrap();
        let y = encode_allocation(&x, EncodingConstant::for_instance(&inst));
        let ty = map_t(&inst, &y);
        assert!(ty.view().iter().zip(y.view()).any(|(a, b)| a < b));
    }

    #[test]
    fn t_prime_on_negative_rows() {
        let inst = i0();
        let y = DualPoint::from_rows(&[vec![-1.0, -2.0], vec![0.0, -3.0], vec![-4.0, 0.0]]).unwrap();
        let tp = map_t_prime(&inst, &y);
        assert_eq!(tp.get(0, 0), 0.0);
        assert_eq!(tp.get(0, 1), -1.0);
    }

    #[test]
    fn t_tilde_at_the_box_corner() {
        let inst = random_instance(3, 4, ValueDistribution::Uniform01, 2).unwrap();
        let big_m = EncodingConstant::for_instance(&inst).get();
        let v = inst.total_mass().total;
        let y = DualPoint::new(Array2::from_elem((4, 3), -big_m)).unwrap();
        let img = map_t_tilde(&inst, &y).unwrap();
        let floor = -v * (-big_m).exp();
        assert!(img.view().iter().all(|&t| t <= 0.0 && t >= floor));
    }

    #[test]
    fn zero_values_reach_a_maximal_point_in_one_step() {
        let inst = Instance::from_rows(&vec![vec![0.0; 3]; 4]).unwrap();
        let mut rng = rng_from_seed(5);
        let y0 = random_box_point(4, 3, 1.0, &mut rng);
        let opts = PicardOptions {
            alpha: 1.0,
            ..Default::default()
        };
        let rep = picard_iterate(&inst, FixedPointMap::Ttilde, &y0, &opts).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn slack_equals_dc_objective() {
        let inst = random_instance(3, 5, ValueDistribution::Uniform01, 4).unwrap();
        let mut rng = rng_from_seed(8);
        for _ in 0..50 {
            let y = random_box_point(5, 3, 3.0, &mut rng);
            let check = verify_constraints(&inst, &y, 0.0);
            assert!((check.slack - dc_objective(&inst, &y)).abs() < 1e-12);
        }
        let check = verify_constraints(&i0(), &efx_point(&i0()), 0.0);
        assert!((check.slack + 0.25).abs() < 1e-15);
        assert!(check.violations.is_empty());
    }

    #[test]
    fn negative_row_reports() {
        let inst = i0();
        assert!(negative_row_diagnostics(&inst, &efx_point(&inst), 1e-8).is_empty());
        let y = DualPoint::from_rows(&[vec![-1.0, -2.0], vec![0.0, -3.0], vec![-4.0, 0.0]]).unwrap();
        let rows = negative_row_diagnostics(&inst, &y, 1e-8);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].item, 0);
        assert!(rows[0].entries.iter().all(|e| e.residual.unwrap() > 0.0));
    }

    #[test]
    fn picard_at_a_fixed_point_stops_immediately() {
        let inst = i0();
        let rep = picard_iterate(&inst, FixedPointMap::Ttilde, &efx_point(&inst), &PicardOptions::default())
            .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.residual, 0.0);
        assert!(rep.efx && rep.constraints_hold);
    }

    #[test]
    fn rejects_bad_damping() {
        let inst = i0();
        let opts = PicardOptions {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(picard_iterate(&inst, FixedPointMap::T, &efx_point(&inst), &opts).is_err());
    }

    #[test]
    fn map_names_parse() {
        assert_eq!("Ttilde".parse::<FixedPointMap>().unwrap(), FixedPointMap::Ttilde);
        assert!("S".parse::<FixedPointMap>().is_err());
    }
}
