//! Set functions behind the EFX constraints.
//!
//! For agent `i` and bundle `S`:
//! * `additive_value`: `v_i(S) = sum_{k in S} v_{ki}`
//! * `reduced_value`: `f_i(S) = v_i(S) - min_{k in S} v_{ki}`, and `f_i(empty) = 0`
//!
//! A *profile* assigns one bundle per agent without requiring a partition;
//! the envy functions are defined on profiles so that they can be extended
//! to the `m * n` ground set.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};

pub const MAX_ITEMS: usize = 64;

/// A set of items as a 64-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bundle(u64);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub fn from_bits(bits: u64) -> Self {
        Bundle(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Every item of an `items`-element ground set.
    pub fn full(items: usize) -> Self {
        assert!(items <= MAX_ITEMS);
        if items == MAX_ITEMS {
            Bundle(u64::MAX)
        } else {
            Bundle((1u64 << items) - 1)
        }
    }

    pub fn contains(self, item: usize) -> bool {
        item < MAX_ITEMS && self.0 >> item & 1 == 1
    }

    #[must_use]
    pub fn with(self, item: usize) -> Self {
        Bundle(self.0 | 1 << item)
    }

    pub fn insert(&mut self, item: usize) {
        self.0 |= 1 << item;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let k = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(k)
        })
    }
}

impl FromIterator<usize> for Bundle {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut b = Bundle::EMPTY;
        for k in iter {
            b.insert(k);
        }
        b
    }
}

/// Bundles of an allocation, one per agent.
pub fn profile_of(alloc: &Allocation) -> Vec<Bundle> {
    let mut out = vec![Bundle::EMPTY; alloc.agents()];
    for (k, &a) in alloc.owners().iter().enumerate() {
        out[a].insert(k);
    }
    out
}

/// Sum and least item of a bundle under one agent's values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BundleValue {
    pub sum: f64,
    /// `None` for the empty bundle.
    pub min_item: Option<f64>,
}

fn check_agent(inst: &Instance, agent: usize) -> Result<()> {
    if agent >= inst.agents() {
        return Err(Error::AgentOutOfRange {
            agent: agent + 1,
            agents: inst.agents(),
        });
    }
    Ok(())
}

fn check_bundle(inst: &Instance, bundle: Bundle) -> Result<()> {
    let m = inst.items();
    if m > MAX_ITEMS {
        return Err(Error::TooManyItems {
            items: m,
            max: MAX_ITEMS,
        });
    }
    if !bundle.is_subset(Bundle::full(m)) {
        let item = bundle.iter().find(|&k| k >= m).unwrap_or(m);
        return Err(Error::ItemOutOfRange {
            item: item + 1,
            items: m,
        });
    }
    Ok(())
}

pub fn bundle_value(inst: &Instance, agent: usize, bundle: Bundle) -> Result<BundleValue> {
    check_agent(inst, agent)?;
    check_bundle(inst, bundle)?;
    Ok(bundle_value_unchecked(inst, agent, bundle))
}

fn bundle_value_unchecked(inst: &Instance, agent: usize, bundle: Bundle) -> BundleValue {
    let mut sum = 0.0;
    let mut min_item: Option<f64> = None;
    for k in bundle.iter() {
        let v = inst.value(k, agent);
        sum += v;
        min_item = Some(min_item.map_or(v, |m| m.min(v)));
    }
    BundleValue { sum, min_item }
}

/// `v_i(S)`.
pub fn additive_value(inst: &Instance, agent: usize, bundle: Bundle) -> Result<f64> {
    Ok(bundle_value(inst, agent, bundle)?.sum)
}

/// `f_i(S)`: the bundle's value to `agent` after dropping its least
/// valuable item.
pub fn reduced_value(inst: &Instance, agent: usize, bundle: Bundle) -> Result<f64> {
    let bv = bundle_value(inst, agent, bundle)?;
    Ok(bv.min_item.map_or(0.0, |min| bv.sum - min))
}

fn check_profile(inst: &Instance, i: usize, j: usize, profile: &[Bundle]) -> Result<()> {
    check_agent(inst, i)?;
    check_agent(inst, j)?;
    if i == j {
        return Err(Error::SameAgent(i + 1));
    }
    if profile.len() != inst.agents() {
        return Err(Error::Dimension {
            context: "profile".into(),
            expected: inst.agents(),
            found: profile.len(),
        });
    }
    profile.iter().try_for_each(|&b| check_bundle(inst, b))
}

/// `u_ij(X) = f_i(X_j) - v_i(X_i)` on an arbitrary profile.
pub fn envy(inst: &Instance, i: usize, j: usize, profile: &[Bundle]) -> Result<f64> {
    check_profile(inst, i, j, profile)?;
    Ok(reduced_value(inst, i, profile[j])? - additive_value(inst, i, profile[i])?)
}

/// `f_i(X_j) + sum_{l != i} v_i(X_l)`, the nonnegative monotone envy of a
/// normalized instance. On partitions it equals `envy + 1`.
pub fn monotone_envy(inst: &Instance, i: usize, j: usize, profile: &[Bundle]) -> Result<f64> {
    if !inst.is_normalized() {
        return Err(Error::NotNormalized);
    }
    check_profile(inst, i, j, profile)?;
    let others: f64 = (0..inst.agents())
        .filter(|&l| l != i)
        .map(|l| bundle_value_unchecked(inst, i, profile[l]).sum)
        .sum();
    Ok(reduced_value(inst, i, profile[j])? + others)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvyForm {
    /// Raw envy; EFX iff the maximum is `<= 0`.
    Raw,
    /// Shifted envy of a normalized instance; EFX iff the maximum is `<= 1`.
    Monotone,
}

impl EnvyForm {
    pub fn threshold(self) -> f64 {
        match self {
            EnvyForm::Raw => 0.0,
            EnvyForm::Monotone => 1.0,
        }
    }
}

/// `F(X) = max_{i != j} u_ij(X)` in the chosen form.
pub fn max_envy(inst: &Instance, alloc: &Allocation, form: EnvyForm) -> Result<f64> {
    let profile = profile_of(alloc);
    let n = inst.agents();
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let u = match form {
                EnvyForm::Raw => envy(inst, i, j, &profile)?,
                EnvyForm::Monotone => monotone_envy(inst, i, j, &profile)?,
            };
            best = best.max(u);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::efx_slack;

    fn i0() -> Instance {
        Instance::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    fn b(items: &[usize]) -> Bundle {
        items.iter().copied().collect()
    }

    #[test]
    fn bundle_bits() {
        let s = b(&[0, 3, 5]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 5]);
        assert!(s.contains(3) && !s.contains(2));
        assert!(b(&[3]).is_subset(s));
        assert_eq!(Bundle::full(3).bits(), 0b111);
    }

    #[test]
    fn reduced_value_examples() {
        let inst = i0();
        assert_eq!(reduced_value(&inst, 0, b(&[0, 1])).unwrap(), 0.5);
        assert_eq!(reduced_value(&inst, 1, Bundle::EMPTY).unwrap(), 0.0);
        assert_eq!(reduced_value(&inst, 0, b(&[2])).unwrap(), 0.0);
        assert!(matches!(
            reduced_value(&inst, 2, b(&[0])),
            Err(Error::AgentOutOfRange { agent: 3, .. })
        ));
        assert!(matches!(
            reduced_value(&inst, 0, b(&[4])),
            Err(Error::ItemOutOfRange { item: 5, .. })
        ));
    }

    #[test]
    fn envy_examples() {
        let inst = i0();
        let x = [b(&[0]), b(&[1, 2])];
        assert_eq!(envy(&inst, 0, 1, &x).unwrap(), -0.25);
        assert_eq!(envy(&inst, 1, 0, &x).unwrap(), -0.75);
        assert_eq!(envy(&inst, 0, 1, &[Bundle::EMPTY, Bundle::EMPTY]).unwrap(), 0.0);
        assert_eq!(envy(&inst, 1, 1, &x).unwrap_err(), Error::SameAgent(2));
    }

    #[test]
    fn monotone_envy_examples() {
        let inst = i0();
        let x = [b(&[0]), b(&[1, 2])];
        assert_eq!(monotone_envy(&inst, 0, 1, &x).unwrap(), 0.75);
        assert_eq!(monotone_envy(&inst, 1, 0, &x).unwrap(), 0.25);
        let all_to_first = [b(&[0, 1, 2]), Bundle::EMPTY];
        assert!(monotone_envy(&inst, 0, 1, &all_to_first).unwrap().abs() < 1e-15);

        let raw = Instance::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(
            monotone_envy(&raw, 0, 1, &[Bundle::EMPTY, Bundle::EMPTY]).unwrap_err(),
            Error::NotNormalized
        );
    }

    #[test]
    fn max_envy_examples() {
        let inst = i0();
        let x = Allocation::from_bundles(&[vec![0], vec![1, 2]], 3).unwrap();
        assert_eq!(max_envy(&inst, &x, EnvyForm::Monotone).unwrap(), 0.75);
        assert_eq!(max_envy(&inst, &x, EnvyForm::Raw).unwrap(), efx_slack(&inst, &x));

        let single = Instance::from_rows(&[vec![2.0, 5.0]]).unwrap().normalize().unwrap();
        let x = Allocation::new(vec![0], 2).unwrap();
        // The second agent's term is f_2({1}) + v_2({1}) = 0 + 1.
        assert_eq!(max_envy(&single, &x, EnvyForm::Monotone).unwrap(), 1.0);
        assert_eq!(max_envy(&single, &x, EnvyForm::Raw).unwrap(), 0.0);
    }
}
