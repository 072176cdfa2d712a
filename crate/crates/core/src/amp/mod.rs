//! Augmented motion primitives: a k-means codebook over frame features,
//! soft assignment of frames to their nearest primitives, and trace
//! compression.

mod assign;
mod kmeans;
mod library;

pub use assign::{assign_distribution, decode_amp, merge_consecutive, DISTANCE_FLOOR};
pub use kmeans::{kmeans, kmeans_fit, KmeansConfig, KmeansReport};
pub use library::AmpLibrary;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A probability distribution over a few primitive indices.
///
/// Entries keep their assignment order (nearest first); indices are
/// distinct, probabilities strictly positive and summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct AmpDistribution {
    entries: Vec<(usize, f64)>,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl AmpDistribution {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("empty primitive distribution"));
        }
        for (k, &(idx, p)) in entries.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(invalid(format!("probability {p} for index {idx} is not positive")));
            }
            if entries[..k].iter().any(|&(other, _)| other == idx) {
                return Err(invalid(format!("index {idx} repeated in distribution")));
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("distribution sums to {total}")));
        }
        Ok(Self { entries })
    }

    /// All mass on a single index.
    pub fn point(index: usize) -> Self {
        Self {
            entries: vec![(index, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted index set, used to decide whether two distributions merge.
    pub fn index_set(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.iter().map(|e| e.0).collect();
        s.sort_unstable();
        s
    }

    /// Most probable index, lowest index on ties.
    pub fn top(&self) -> usize {
        self.entries
            .iter()
            .min_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)))
            .map(|e| e.0)
            .expect("non-empty")
    }

    pub fn max_index(&self) -> usize {
        self.entries.iter().map(|e| e.0).max().expect("non-empty")
    }
}

impl TryFrom<Vec<(usize, f64)>> for AmpDistribution {
    type Error = crate::Error;

    fn try_from(entries: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<AmpDistribution> for Vec<(usize, f64)> {
    fn from(d: AmpDistribution) -> Self {
        d.entries
    }
}

/// A non-empty sequence of primitive distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AmpDistribution>", into = "Vec<AmpDistribution>")]
pub struct PlanTrace {
    steps: Vec<AmpDistribution>,
}

impl PlanTrace {
    pub fn new(steps: Vec<AmpDistribution>) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid("empty plan trace"));
        }
        Ok(Self { steps })
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| AmpDistribution::point(i)).collect())
    }

    pub fn steps(&self) -> &[AmpDistribution] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, d: AmpDistribution) {
        self.steps.push(d);
    }

    pub fn max_index(&self) -> usize {
        self.steps.iter().map(|d| d.max_index()).max().expect("non-empty")
    }
}

impl TryFrom<Vec<AmpDistribution>> for PlanTrace {
    type Error = crate::Error;

    fn try_from(steps: Vec<AmpDistribution>) -> Result<Self> {
        Self::new(steps)
    }
}

impl From<PlanTrace> for Vec<AmpDistribution> {
    fn from(t: PlanTrace) -> Self {
        t.steps
    }
}

/// The `m`-th recognized plan: `K` future primitive indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizedPlan {
    pub plan: usize,
    pub steps: Vec<usize>,
}

impl RecognizedPlan {
    pub fn new(plan: usize, steps: Vec<usize>) -> Result<Self> {
        if plan == 0 {
            return Err(invalid("plan indices start at 1; 0 marks unplanned pixels"));
        }
        if steps.is_empty() {
            return Err(invalid("a recognized plan needs at least one step"));
        }
        Ok(Self { plan, steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Checks the plan against a library of `clusters` primitives and an
    /// expected horizon.
    pub fn validate(&self, clusters: usize, horizon: usize) -> Result<()> {
        if self.steps.len() != horizon {
            return Err(invalid(format!(
                "plan {} has {} steps, expected {horizon}",
                self.plan,
                self.steps.len()
            )));
        }
        if let Some(&bad) = self.steps.iter().find(|&&s| s >= clusters) {
            return Err(invalid(format!(
                "primitive index {bad} out of range for {clusters} clusters"
            )));
        }
        Ok(())
    }
}
