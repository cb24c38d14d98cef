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

//! Goodness of fit of observed counts against a predicted table.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::table::PredictionTable;

/// Predicted probabilities below this are treated as structural zeros.
pub const ZERO_PREDICTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    /// Pearson statistic; `f64::INFINITY` when a structural-zero cell was observed.
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

/// Pearson test of `counts` (label, count) against `predicted` over `trials` draws.
///
/// Cells predicted with probability below [`ZERO_PREDICTION`] and observed
/// zero times are dropped; if such a cell was observed, the statistic is
/// infinite and the p-value 0. Degrees of freedom are the retained cells
/// minus one.
pub fn chi_square_report(predicted: &PredictionTable, counts: &[(String, u64)], trials: u64) -> Result<ChiSquare> {
    if trials == 0 {
        return Err(Error::InvalidConfig("chi-square needs at least one trial".into()));
    }
    for (label, _) in counts {
        predicted.probability(label)?;
    }
    let total: u64 = counts.iter().map(|(_, c)| c).sum();
    if total != trials {
        return Err(Error::InvalidConfig(format!(
            "counts sum to {total}, expected {trials}"
        )));
    }
    let n = trials as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for entry in predicted.entries() {
        let observed = counts.iter().find(|(l, _)| *l == entry.label).map_or(0, |(_, c)| *c) as f64;
        if entry.probability < ZERO_PREDICTION {
            if observed > 0.0 {
                return Ok(ChiSquare {
                    statistic: f64::INFINITY,
                    p_value: 0.0,
                    degrees_of_freedom: predicted.entries().len() - 1,
                });
            }
            continue;
        }
        let expected = n * entry.probability;
        statistic += (observed - expected).powi(2) / expected;
        cells += 1;
    }
    let degrees_of_freedom = cells.saturating_sub(1);
    let p_value = if degrees_of_freedom == 0 {
        1.0
    } else {
        ChiSquared::new(degrees_of_freedom as f64)
            .expect("positive dof")
            .sf(statistic)
    };
    Ok(ChiSquare {
        statistic,
        p_value,
        degrees_of_freedom,
    })
}

/// Probability of at least one draw landing outside a cell of mass
/// `p_inside` in `trials` independent draws: `1 − p_inside^trials`.
pub fn prob_any_outside(p_inside: f64, trials: u64) -> f64 {
    let outside = 1.0 - p_inside.clamp(0.0, 1.0);
    -(trials as f64 * (-outside).ln_1p()).exp_m1()
}
