// Copyright 2026 The wfriend Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Outcome-label → probability tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SUM_TOL;

/// Which rule produced a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Born,
    StandardUpdate,
    PairOfStates,
    ModifiedBorn,
    Empirical,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Born => "born",
            Provenance::StandardUpdate => "standard_update",
            Provenance::PairOfStates => "pair_of_states",
            Provenance::ModifiedBorn => "modified_born",
            Provenance::Empirical => "empirical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub label: String,
    pub probability: f64,
}

/// Ordered probability table. Probabilities lie in `[0, 1]` and sum to one
/// within [`SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct PredictionTable {
    entries: Vec<Entry>,
    provenance: Provenance,
}

#[derive(Deserialize)]
struct RawTable {
    entries: Vec<Entry>,
    provenance: Provenance,
}

impl TryFrom<RawTable> for PredictionTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        PredictionTable::new(
            raw.entries.into_iter().map(|e| (e.label, e.probability)).collect(),
            raw.provenance,
        )
    }
}

impl PredictionTable {
    pub fn new(entries: Vec<(String, f64)>, provenance: Provenance) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::MalformedTable("empty table".into()));
        }
        for (i, (label, p)) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidProbability {
                    label: label.clone(),
                    value: *p,
                });
            }
            if entries[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::MalformedTable(format!("duplicate label `{label}`")));
            }
        }
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::MalformedTable(format!("probabilities sum to {total}")));
        }
        let entries = entries
            .into_iter()
            .map(|(label, probability)| Entry { label, probability })
            .collect();
        Ok(Self { entries, provenance })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.probability)
    }

    pub fn probability(&self, label: &str) -> Result<f64> {
        self.get(label).ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    /// Total variation distance `½ Σ_i |p_i − q_i|` over the union of labels;
    /// a label missing from one table counts as probability zero there.
    pub fn tvd(&self, other: &PredictionTable) -> f64 {
        let mut sum: f64 = self
            .entries
            .iter()
            .map(|e| (e.probability - other.get(&e.label).unwrap_or(0.0)).abs())
            .sum();
        sum += other
            .entries
            .iter()
            .filter(|e| self.get(&e.label).is_none())
            .map(|e| e.probability)
            .sum::<f64>();
        0.5 * sum
    }

    /// Same labels, same order, probabilities equal within `tol`.
    pub fn approx_eq(&self, other: &PredictionTable, tol: f64) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.label == b.label && (a.probability - b.probability).abs() <= tol)
    }
}

impl fmt::Display for PredictionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}: {}", e.label, e.probability)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, f64)]) -> PredictionTable {
        PredictionTable::new(
            entries.iter().map(|&(l, p)| (l.to_string(), p)).collect(),
            Provenance::Born,
        )
        .unwrap()
    }

    #[test]
    fn rejects_malformed_tables() {
        let mk = |e: &[(&str, f64)]| {
            PredictionTable::new(e.iter().map(|&(l, p)| (l.to_string(), p)).collect(), Provenance::Born)
        };
        assert!(mk(&[]).is_err());
        assert!(mk(&[("+", 0.6), ("-", 0.6)]).is_err());
        assert!(mk(&[("+", 1.2), ("-", -0.2)]).is_err());
        assert!(mk(&[("+", 0.5), ("+", 0.5)]).is_err());
    }

    #[test]
    fn tvd_handles_disjoint_labels() {
        let a = table(&[("+", 0.5), ("-", 0.5)]);
        let b = table(&[("+", 1.0), ("-", 0.0)]);
        assert_eq!(a.tvd(&b), 0.5);
        assert_eq!(a.tvd(&a), 0.0);
        let c = table(&[("x", 1.0)]);
        assert_eq!(a.tvd(&c), 1.0);
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let a = table(&[("+", 0.25), ("-", 0.75)]);
        let json = serde_json::to_string(&a).unwrap();
        let back: PredictionTable = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        let bad = json.replace("0.75", "0.8");
        assert!(serde_json::from_str::<PredictionTable>(&bad).is_err());
    }
}
