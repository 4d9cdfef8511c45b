//! Instances with linear valuations, integral allocations, and the direct
//! EFX test.
//!
//! Values are stored item-major: entry `(k, i)` is the value of item `k` to
//! agent `i`. Indices are 0-based in the API and 1-based in documents.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column sums of a normalized instance equal 1 within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default slack below which an EFX constraint counts as satisfied.
pub const EFX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    values: Array2<f64>,
    normalized: bool,
}

/// On-disk form of an instance: `{"m": .., "n": .., "values": [[..; n]; m]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InstanceDoc {
    pub m: usize,
    pub n: usize,
    pub values: Vec<Vec<f64>>,
}

/// Per-agent totals `V_i` and the grand total `V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TotalMass {
    pub per_agent: Vec<f64>,
    pub total: f64,
}

impl Instance {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (m, n) = values.dim();
        if m < 1 || n < 2 {
            return Err(Error::TooSmall { items: m, agents: n });
        }
        for ((k, i), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: k + 1, col: i + 1 });
            }
            if v < 0.0 {
                return Err(Error::NegativeValue {
                    item: k + 1,
                    agent: i + 1,
                    value: v,
                });
            }
        }
        Ok(Instance {
            values,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        Self::from_doc(&InstanceDoc {
            m,
            n,
            values: rows.to_vec(),
        })
    }

    pub fn from_doc(doc: &InstanceDoc) -> Result<Self> {
        if doc.values.len() != doc.m {
            return Err(Error::Dimension {
                context: "values (number of item rows)".into(),
                expected: doc.m,
                found: doc.values.len(),
            });
        }
        for (k, row) in doc.values.iter().enumerate() {
            if row.len() != doc.n {
                return Err(Error::Dimension {
                    context: format!("values row {}", k + 1),
                    expected: doc.n,
                    found: row.len(),
                });
            }
        }
        let flat: Vec<f64> = doc.values.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((doc.m, doc.n), flat)
            .map_err(|e| Error::Document(e.to_string()))?;
        Self::new(values)
    }

    /// Parses an instance document. The result is never marked normalized.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        Self::from_doc(&doc)
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc {
            m: self.items(),
            n: self.agents(),
            values: self.values.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn items(&self) -> usize {
        self.values.nrows()
    }

    pub fn agents(&self) -> usize {
        self.values.ncols()
    }

    #[inline]
    pub fn value(&self, item: usize, agent: usize) -> f64 {
        self.values[[item, agent]]
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Values of every item to `agent`.
    pub fn column(&self, agent: usize) -> ArrayView1<'_, f64> {
        self.values.column(agent)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_mass(&self) -> TotalMass {
        let per_agent: Vec<f64> = self.values.columns().into_iter().map(|c| c.sum()).collect();
        let total = per_agent.iter().sum();
        TotalMass { per_agent, total }
    }

    /// Largest single value `max_{k,i} v_{ki}`.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest single value `min_{k,i} v_{ki}`.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Divides every column by its sum so that each agent values the whole
    /// item set at 1.
    pub fn normalize(&self) -> Result<Instance> {
        let mass = self.total_mass();
        if let Some(agent) = mass.per_agent.iter().position(|&v| v <= 0.0) {
            return Err(Error::ZeroColumn { agent: agent + 1 });
        }
        let mut values = self.values.clone();
        for (mut col, total) in values.columns_mut().into_iter().zip(&mass.per_agent) {
            col.mapv_inplace(|v| v / total);
        }
        Ok(Instance {
            values,
            normalized: true,
        })
    }

    /// Drops agents that value every item at zero. Such agents never envy
    /// anyone, and giving them nothing keeps every other agent's EFX
    /// constraints unchanged.
    pub fn without_zero_agents(&self) -> AgentReduction {
        let mass = self.total_mass();
        let (kept, removed): (Vec<usize>, Vec<usize>) =
            (0..self.agents()).partition(|&i| mass.per_agent[i] > 0.0);
        let reduced = if kept.len() >= 2 && !removed.is_empty() {
            let values = self.values.select(ndarray::Axis(1), &kept);
            Some(Instance {
                values,
                normalized: false,
            })
        } else if removed.is_empty() {
            Some(self.clone())
        } else {
            None
        };
        AgentReduction {
            agents: self.agents(),
            items: self.items(),
            kept,
            removed,
            reduced,
        }
    }
}

/// Result of removing zero-valuation agents.
#[derive(Clone, Debug)]
pub struct AgentReduction {
    agents: usize,
    items: usize,
    /// Original indices of the agents kept, in order.
    pub kept: Vec<usize>,
    /// Original indices of the agents removed.
    pub removed: Vec<usize>,
    /// `None` when fewer than two agents value anything.
    pub reduced: Option<Instance>,
}

impl AgentReduction {
    /// Maps an allocation of the reduced instance back to the original agents.
    pub fn lift(&self, alloc: &Allocation) -> Allocation {
        let owner = alloc.owners().iter().map(|&a| self.kept[a]).collect();
        Allocation {
            owner,
            agents: self.agents,
        }
    }

    /// An EFX allocation when at most one agent values anything: everything
    /// goes to that agent (or to agent 0).
    pub fn trivial_allocation(&self) -> Allocation {
        let to = self.kept.first().copied().unwrap_or(0);
        Allocation {
            owner: vec![to; self.items],
            agents: self.agents,
        }
    }
}

/// An integral allocation: each item has exactly one owner.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Allocation {
    owner: Vec<usize>,
    agents: usize,
}

/// On-disk form of an allocation: `{"owner": [..; m]}` with 1-based agents.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AllocationDoc {
    pub owner: Vec<usize>,
}

impl Allocation {
    pub fn new(owner: Vec<usize>, agents: usize) -> Result<Self> {
        if let Some(k) = owner.iter().position(|&a| a >= agents) {
            return Err(Error::AgentOutOfRange {
                agent: owner[k] + 1,
                agents,
            });
        }
        Ok(Allocation { owner, agents })
    }

    /// Builds an allocation from per-agent bundles; every item must appear
    /// in exactly one bundle.
    pub fn from_bundles(bundles: &[Vec<usize>], items: usize) -> Result<Self> {
        let mut owner = vec![usize::MAX; items];
        for (agent, bundle) in bundles.iter().enumerate() {
            for &k in bundle {
                if k >= items {
                    return Err(Error::ItemOutOfRange { item: k + 1, items });
                }
                if owner[k] != usize::MAX {
                    return Err(Error::Document(format!("item {} assigned twice", k + 1)));
                }
                owner[k] = agent;
            }
        }
        if let Some(k) = owner.iter().position(|&a| a == usize::MAX) {
            return Err(Error::Document(format!("item {} is unassigned", k + 1)));
        }
        Self::new(owner, bundles.len())
    }

    pub fn from_doc(doc: &AllocationDoc, inst: &Instance) -> Result<Self> {
        if doc.owner.len() != inst.items() {
            return Err(Error::Dimension {
                context: "owner".into(),
                expected: inst.items(),
                found: doc.owner.len(),
            });
        }
        let mut owner = Vec::with_capacity(doc.owner.len());
        for &a in &doc.owner {
            if a == 0 || a > inst.agents() {
                return Err(Error::AgentOutOfRange {
                    agent: a,
                    agents: inst.agents(),
                });
            }
            owner.push(a - 1);
        }
        Self::new(owner, inst.agents())
    }

    pub fn from_json(text: &str, inst: &Instance) -> Result<Self> {
        let doc: AllocationDoc =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        Self::from_doc(&doc, inst)
    }

    pub fn to_doc(&self) -> AllocationDoc {
        AllocationDoc {
            owner: self.owner.iter().map(|a| a + 1).collect(),
        }
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn owner_of(&self, item: usize) -> usize {
        self.owner[item]
    }

    pub fn items(&self) -> usize {
        self.owner.len()
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// Items held by `agent`, ascending.
    pub fn bundle(&self, agent: usize) -> Vec<usize> {
        (0..self.owner.len())
            .filter(|&k| self.owner[k] == agent)
            .collect()
    }

    pub fn bundles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.agents];
        for (k, &a) in self.owner.iter().enumerate() {
            out[a].push(k);
        }
        out
    }
}

/// Serialized as the allocation document, with 1-based owners.
impl Serialize for Allocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

/// One violated EFX constraint: `envious` still envies `envied` after
/// removing the least valuable item of the envied bundle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvyViolation {
    pub envious: usize,
    pub envied: usize,
    /// `f_i(X_j) - v_i(X_i)`, positive for a violation.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvyReport {
    pub efx: bool,
    pub max_slack: f64,
    pub violations: Vec<EnvyViolation>,
}

/// `pair_slack[i][j] = v_i(X_j) - min_{k in X_j} v_{ki} - v_i(X_i)`, with the
/// first two terms 0 when `X_j` is empty. Diagonal entries are NaN.
fn pair_slacks(inst: &Instance, alloc: &Allocation) -> Vec<Vec<f64>> {
    assert_eq!(alloc.items(), inst.items(), "allocation item count");
    assert_eq!(alloc.agents(), inst.agents(), "allocation agent count");
    let n = inst.agents();
    let mut sums = vec![vec![0.0; n]; n];
    let mut mins = vec![vec![f64::INFINITY; n]; n];
    for (k, &owner) in alloc.owners().iter().enumerate() {
        for i in 0..n {
            let v = inst.value(k, i);
            sums[i][owner] += v;
            mins[i][owner] = mins[i][owner].min(v);
        }
    }
    let mut out = vec![vec![f64::NAN; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let reduced = if mins[i][j].is_finite() {
                sums[i][j] - mins[i][j]
            } else {
                0.0
            };
            out[i][j] = reduced - sums[i][i];
        }
    }
    out
}

/// Checks every ordered pair, treating slack `<= tol` as satisfied.
pub fn check_efx(inst: &Instance, alloc: &Allocation, tol: f64) -> EnvyReport {
    let slacks = pair_slacks(inst, alloc);
    let mut violations = Vec::new();
    let mut max_slack = f64::NEG_INFINITY;
    for (i, row) in slacks.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            if i == j {
                continue;
            }
            max_slack = max_slack.max(s);
            if s > tol {
                violations.push(EnvyViolation {
                    envious: i,
                    envied: j,
                    slack: s,
                });
            }
        }
    }
    EnvyReport {
        efx: violations.is_empty(),
        max_slack,
        violations,
    }
}

/// EFX test at the default tolerance [`EFX_TOL`].
pub fn is_efx(inst: &Instance, alloc: &Allocation) -> bool {
    check_efx(inst, alloc, EFX_TOL).efx
}

/// `max_{i != j} [f_i(X_j) - v_i(X_i)]`; nonpositive exactly when the
/// allocation is EFX.
pub fn efx_slack(inst: &Instance, alloc: &Allocation) -> f64 {
    check_efx(inst, alloc, f64::INFINITY).max_slack
}
