//! Exhaustive search over all `n^m` allocations.
//!
//! Owner vectors are visited in mixed-radix order with item 0 as the most
//! significant digit, so the scan order (and hence witness order) does not
//! depend on how the work is split across threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{check_efx, Allocation, Instance, EFX_TOL};
use crate::setfun::{max_envy, EnvyForm};

/// Largest number of allocations the oracle will scan.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Default number of witnesses kept.
pub const DEFAULT_WITNESS_CAP: usize = 64;

const CHUNK: u64 = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub exists: bool,
    /// EFX allocations in scan order, at most `cap` of them.
    pub witnesses: Vec<Allocation>,
    /// Total number of EFX allocations, counted exactly.
    pub witness_count: u64,
    pub allocations_scanned: u64,
}

/// Number of allocations of `inst`, or an error past the enumeration limit.
pub fn allocation_count(inst: &Instance) -> Result<u64> {
    let count = (inst.agents() as f64).powi(inst.items() as i32);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok((inst.agents() as u64).pow(inst.items() as u32))
}

/// The allocation with scan position `code`.
pub fn allocation_at(code: u64, items: usize, agents: usize) -> Allocation {
    let mut owner = vec![0; items];
    let mut rest = code;
    for k in (0..items).rev() {
        owner[k] = (rest % agents as u64) as usize;
        rest /= agents as u64;
    }
    Allocation::new(owner, agents).expect("digits are agent indices")
}

/// All allocations of `items` items among `agents` agents, in scan order.
pub fn all_allocations(items: usize, agents: usize) -> impl Iterator<Item = Allocation> {
    let total = (agents as u64).pow(items as u32);
    (0..total).map(move |c| allocation_at(c, items, agents))
}

fn chunks(total: u64) -> Vec<(u64, u64)> {
    (0..total.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(total)))
        .collect()
}

/// Scans every allocation with `is_efx` at the default tolerance.
pub fn enumerate_efx(inst: &Instance, cap: Option<usize>) -> Result<OracleResult> {
    enumerate_efx_with_tol(inst, cap, EFX_TOL)
}

pub fn enumerate_efx_with_tol(inst: &Instance, cap: Option<usize>, tol: f64) -> Result<OracleResult> {
    let total = allocation_count(inst)?;
    let (m, n) = (inst.items(), inst.agents());
    let cap = cap.unwrap_or(usize::MAX);
    let parts: Vec<(Vec<Allocation>, u64)> = chunks(total)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut kept = Vec::new();
            let mut count = 0;
            for code in lo..hi {
                let alloc = allocation_at(code, m, n);
                if check_efx(inst, &alloc, tol).efx {
                    count += 1;
                    if kept.len() < cap {
                        kept.push(alloc);
                    }
                }
            }
            (kept, count)
        })
        .collect();
    let mut witnesses = Vec::new();
    let mut witness_count = 0;
    for (kept, count) in parts {
        witness_count += count;
        witnesses.extend(kept.into_iter().take(cap - witnesses.len().min(cap)));
    }
    Ok(OracleResult {
        exists: witness_count > 0,
        witnesses,
        witness_count,
        allocations_scanned: total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinEnvy {
    pub value: f64,
    /// First minimizer in scan order.
    pub allocation: Allocation,
}

/// Exact minimum of the monotone max-envy over all partitions of a
/// normalized instance; at most 1 iff an EFX allocation exists.
pub fn min_max_envy(inst: &Instance) -> Result<MinEnvy> {
    if !inst.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let total = allocation_count(inst)?;
    let (m, n) = (inst.items(), inst.agents());
    let best = chunks(total)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut best = (f64::INFINITY, lo);
            for code in lo..hi {
                let v = max_envy(inst, &allocation_at(code, m, n), EnvyForm::Monotone)
                    .expect("normalized instance");
                if v < best.0 {
                    best = (v, code);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    Ok(MinEnvy {
        value: best.0,
        allocation: allocation_at(best.1, m, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_instance, ValueDistribution};
    use crate::instance::is_efx;

    fn i0() -> Instance {
        Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn scan_order_is_mixed_radix() {
        let all: Vec<Vec<usize>> = all_allocations(2, 3).map(|a| a.owners().to_vec()).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        assert_eq!(all[8], vec![2, 2]);
    }

    #[test]
    fn i0_has_the_expected_witness() {
        let inst = i0();
        let res = enumerate_efx(&inst, None).unwrap();
        assert!(res.exists);
        assert_eq!(res.allocations_scanned, 8);
        let x = Allocation::from_bundles(&[vec![0], vec![1, 2]], 3).unwrap();
        assert!(res.witnesses.contains(&x));
        let brute = all_allocations(3, 2).filter(|a| is_efx(&inst, a)).count() as u64;
        assert_eq!(res.witness_count, brute);

        // ({1,2},{3}) ties with ({1},{2,3}) and comes first in scan order.
        let min = min_max_envy(&inst).unwrap();
        assert!((min.value - 0.75).abs() < 1e-15);
        assert_eq!(min.allocation.owners(), &[0, 0, 1]);
        assert!((max_envy(&inst, &x, EnvyForm::Monotone).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cap_keeps_count_exact() {
        let inst = random_instance(3, 4, ValueDistribution::Uniform01, 1).unwrap();
        let full = enumerate_efx(&inst, None).unwrap();
        let capped = enumerate_efx(&inst, Some(2)).unwrap();
        assert_eq!(capped.witness_count, full.witness_count);
        assert_eq!(capped.witnesses.len(), full.witnesses.len().min(2));
        assert_eq!(capped.witnesses[..], full.witnesses[..capped.witnesses.len()]);
    }

    #[test]
    fn chunked_scan_keeps_order() {
        // More than one chunk: 4^8 = 65536 allocations.
        let inst = random_instance(4, 8, ValueDistribution::IdenticalAgents, 2).unwrap();
        let res = enumerate_efx(&inst, Some(usize::MAX)).unwrap();
        let codes: Vec<Vec<usize>> = res.witnesses.iter().map(|a| a.owners().to_vec()).collect();
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
        assert_eq!(res.witness_count as usize, res.witnesses.len());
    }

    #[test]
    fn single_item_always_has_efx() {
        for n in 2..5 {
            let inst = random_instance(n, 1, ValueDistribution::Uniform01, n as u64).unwrap();
            assert!(enumerate_efx(&inst, None).unwrap().exists);
        }
    }

    #[test]
    fn guard_rejects_large_instances() {
        let inst = random_instance(3, 15, ValueDistribution::Uniform01, 0).unwrap();
        assert!(matches!(enumerate_efx(&inst, None), Err(Error::TooLarge { .. })));
    }
}
