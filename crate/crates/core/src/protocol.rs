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

//! The repeated three-step experiment.
//!
//! Each round: (a) the friend measures the system and registers `j`; (b) she
//! writes down a prediction table for the superobserver's measurement under
//! the configured rule; (c) the superobserver measures the whole lab. The lab
//! state is an eigenstate of that measurement, so rounds can be repeated on
//! the same lab. After the last round the lab is opened with a product-basis
//! measurement, and the friend compares her predictions (list A) with the
//! observed frequencies (list B).
//!
//! Round outcomes are drawn from the joint distribution the modified Born
//! rule assigns to the two memory records: the friend's record has marginal
//! `|⟨j|φ_d⟩|²` and the superobserver's record is drawn from its conditional
//! given `j`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dilation::{self, DilationSpec, MINUS, PLUS};
use crate::error::{Error, Result};
use crate::hilbert::{born_probabilities, collapse, sample_outcome, ProjectiveMeasurement, StateVector};
use crate::rng::{self, OPEN_LAB_STREAM};
use crate::rules::{self, JointDistribution, PairOfStates, SequentialScenario, Target};
use crate::stats::{self, ChiSquare};
use crate::table::{PredictionTable, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Standard,
    Pair,
    Modified,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Standard, Rule::Pair, Rule::Modified];

    pub fn provenance(self) -> Provenance {
        match self {
            Rule::Standard => Provenance::StandardUpdate,
            Rule::Pair => Provenance::PairOfStates,
            Rule::Modified => Provenance::ModifiedBorn,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Standard => "standard",
            Rule::Pair => "pair",
            Rule::Modified => "modified",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Rule::Standard),
            "pair" => Ok(Rule::Pair),
            "modified" => Ok(Rule::Modified),
            _ => Err(Error::InvalidConfig(format!("unknown rule `{s}`"))),
        }
    }
}

/// How list B reaches the friend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Predictions leave the lab each round; the lists are compared after
    /// the lab is opened.
    MessagesOut,
    /// The friend stays inside and receives each superobserver outcome after
    /// its round.
    WignerReports,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::MessagesOut => "messages-out",
            Variant::WignerReports => "wigner-reports",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "messages-out" | "messages_out" => Ok(Variant::MessagesOut),
            "wigner-reports" | "wigner_reports" => Ok(Variant::WignerReports),
            _ => Err(Error::InvalidConfig(format!("unknown variant `{s}`"))),
        }
    }
}

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub dimension: usize,
    pub trials: u64,
    pub seed: u64,
    pub rule: Rule,
    pub variant: Variant,
    pub phases: Option<Vec<f64>>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            rule: Rule::Standard,
            variant: Variant::MessagesOut,
            phases: None,
        }
    }
}

impl ProtocolConfig {
    pub fn new(dimension: usize, trials: u64, seed: u64, rule: Rule) -> Self {
        Self {
            dimension,
            trials,
            seed,
            rule,
            ..Self::default()
        }
    }

    pub fn dilation_spec(&self) -> Result<DilationSpec> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        let spec = DilationSpec::new(self.dimension)?;
        match &self.phases {
            Some(p) => spec.with_phases(p.clone()),
            None => Ok(spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dilation_spec().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub round: u64,
    pub friend_outcome: String,
    pub prediction: PredictionTable,
    pub wigner_outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub records: Vec<TrialRecord>,
    /// The friend's copy of list B, in the order she received it.
    pub friend_copy_of_b: Vec<String>,
}

impl TrialLog {
    /// List A: the friend's prediction for every round.
    pub fn list_a(&self) -> impl Iterator<Item = &PredictionTable> {
        self.records.iter().map(|r| &r.prediction)
    }

    /// List B: the superobserver's outcome for every round.
    pub fn list_b(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.wigner_outcome.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trials: u64,
    /// List A averaged over all rounds.
    pub list_a_summary: PredictionTable,
    /// Observed relative frequencies of list B.
    pub list_b_summary: PredictionTable,
    pub counts_b: Vec<(String, u64)>,
    pub tvd: f64,
    #[serde(with = "float_or_inf")]
    pub chi2_statistic: f64,
    pub chi2_dof: usize,
    pub p_value: f64,
    /// Probability of any `-` in list B given the superobserver's analytic `p(+)`.
    pub prob_any_minus: f64,
    pub open_lab_outcome: String,
    /// Whether the opened lab shows a system state and a memory record that agree.
    pub open_lab_aligned: bool,
}

mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "nan" => Ok(f64::NAN),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("unexpected float `{s}`"))),
        }
    }
}

/// Everything a run needs that does not depend on the random draws.
struct Setup {
    spec: DilationSpec,
    lab: StateVector,
    wigner: ProjectiveMeasurement,
    friend_marginal: PredictionTable,
    wigner_given_friend: Vec<PredictionTable>,
    predictions: Vec<PredictionTable>,
}

impl Setup {
    fn new(config: &ProtocolConfig) -> Result<Self> {
        let spec = config.dilation_spec()?;
        let lab = dilation::build_dilation(&spec).apply(&spec.ready_state())?;
        let wigner = dilation::build_wigner_measurement(&spec);
        let joint = JointDistribution::from_scenario(&SequentialScenario::wigners_friend(&spec)?)?;
        let friend_marginal = joint.first_table()?;
        let labels: Vec<String> = (0..spec.system_dim()).map(|j| spec.system_outcome_label(j)).collect();
        let wigner_given_friend = labels
            .iter()
            .map(|j| {
                // An unpopulated friend record is never sampled; keep a placeholder row.
                match joint.conditional_table(j) {
                    Err(Error::ImpossibleOutcome(_)) => born_probabilities(&lab, &wigner),
                    other => other,
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let predictions = (0..spec.system_dim())
            .map(|j| predict(config.rule, &spec, &lab, &wigner, &joint, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            lab,
            wigner,
            friend_marginal,
            wigner_given_friend,
            predictions,
        })
    }
}

/// The friend's prediction table for the superobserver's measurement after
/// registering outcome `j`.
pub fn predict(
    rule: Rule,
    spec: &DilationSpec,
    lab: &StateVector,
    wigner: &ProjectiveMeasurement,
    joint: &JointDistribution,
    j: usize,
) -> Result<PredictionTable> {
    match rule {
        Rule::Standard => {
            let post = rules::friend_updated_state(spec, lab, j)?;
            rules::standard_update_prediction(&post, wigner)
        }
        Rule::Pair => {
            let system = StateVector::uniform_superposition(spec.system_layout(), spec.system_label())?;
            let pair = PairOfStates::new(system, lab.clone());
            let friend = dilation::build_friend_measurement(spec);
            let updated =
                rules::pair_update_on_system_outcome(&pair, friend.projector(&spec.system_outcome_label(j))?)?;
            rules::pair_predict(&updated, Target::Lab, wigner)
        }
        Rule::Modified => joint.conditional_table(&spec.system_outcome_label(j)),
    }
}

/// Samples the product-basis measurement on `S ⊗ F` and returns the outcome
/// label with the collapsed state.
pub fn open_lab<R: Rng + ?Sized>(
    state: &StateVector,
    spec: &DilationSpec,
    rng: &mut R,
) -> Result<(String, StateVector)> {
    let m = dilation::build_open_lab_measurement(spec);
    let label = sample_outcome(&born_probabilities(state, &m)?, rng)?;
    let collapsed = collapse(state, m.projector(&label)?)?;
    Ok((label, collapsed))
}

fn average_tables(tables: &[&PredictionTable], labels: &[&str], provenance: Provenance) -> Result<PredictionTable> {
    let n = tables.len() as f64;
    let entries = labels
        .iter()
        .map(|l| {
            let sum = tables.iter().map(|t| t.probability(l)).sum::<Result<f64>>()?;
            Ok((l.to_string(), (sum / n).clamp(0.0, 1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionTable::new(entries, provenance)
}

/// Compares list A with the friend's copy of list B.
#[allow(clippy::too_many_arguments)]
fn compare(
    list_a: &[&PredictionTable],
    list_b: &[String],
    labels: &[&str],
    provenance: Provenance,
    analytic_plus: f64,
    open_lab_outcome: String,
    open_lab_aligned: bool,
) -> Result<ComparisonReport> {
    let trials = list_b.len() as u64;
    let list_a_summary = average_tables(list_a, labels, provenance)?;
    let counts_b: Vec<(String, u64)> = labels
        .iter()
        .map(|l| (l.to_string(), list_b.iter().filter(|b| b == l).count() as u64))
        .collect();
    let list_b_summary = PredictionTable::new(
        counts_b
            .iter()
            .map(|(l, c)| (l.clone(), *c as f64 / trials as f64))
            .collect(),
        Provenance::Empirical,
    )?;
    let ChiSquare {
        statistic,
        p_value,
        degrees_of_freedom,
    } = stats::chi_square_report(&list_a_summary, &counts_b, trials)?;
    Ok(ComparisonReport {
        trials,
        tvd: list_a_summary.tvd(&list_b_summary),
        list_a_summary,
        list_b_summary,
        counts_b,
        chi2_statistic: statistic,
        chi2_dof: degrees_of_freedom,
        p_value,
        prob_any_minus: stats::prob_any_outside(analytic_plus, trials),
        open_lab_outcome,
        open_lab_aligned,
    })
}

pub fn run_protocol(config: &ProtocolConfig) -> Result<(TrialLog, ComparisonReport)> {
    let setup = Setup::new(config)?;
    let spec = &setup.spec;

    let records = (0..config.trials)
        .into_par_iter()
        .map(|round| {
            let mut rng = rng::stream(config.seed, round);
            // (a) the friend registers an outcome.
            let friend_outcome = sample_outcome(&setup.friend_marginal, &mut rng)?;
            let j = spec.system_outcome_index(&friend_outcome)?;
            // (b) her prediction depends on the rule and on j only.
            let prediction = setup.predictions[j].clone();
            // (c) the superobserver measures the lab.
            let wigner_outcome = sample_outcome(&setup.wigner_given_friend[j], &mut rng)?;
            Ok(TrialRecord {
                round,
                friend_outcome,
                prediction,
                wigner_outcome,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let wigner_labels: [&str; 2] = [PLUS, MINUS];
    let mut lab_after = setup.lab.clone();
    let mut friend_copy_of_b = Vec::with_capacity(records.len());
    if config.variant == Variant::WignerReports {
        for r in &records {
            friend_copy_of_b.push(r.wigner_outcome.clone());
        }
    }
    if let Some(last) = records.last() {
        lab_after = collapse(&lab_after, setup.wigner.projector(&last.wigner_outcome)?)?;
    }

    let mut open_rng = rng::stream(config.seed, OPEN_LAB_STREAM);
    let (open_label, opened) = open_lab(&lab_after, spec, &mut open_rng)?;
    let open_lab_aligned = (0..spec.system_dim()).any(|j| {
        spec.aligned_state(j)
            .and_then(|s| s.fidelity(&opened))
            .is_ok_and(|f| (f - 1.0).abs() < crate::TOL)
    });

    if config.variant == Variant::MessagesOut {
        // List A left the lab round by round; list B is read once the lab is open.
        friend_copy_of_b.extend(records.iter().map(|r| r.wigner_outcome.clone()));
    }

    let mut analytic_plus = born_probabilities(&setup.lab, &setup.wigner)?.probability(PLUS)?;
    if (1.0 - analytic_plus).abs() <= crate::TOL {
        // Rounding in the Born evaluation, not a physical leak into `-`.
        analytic_plus = 1.0;
    }
    let list_a: Vec<&PredictionTable> = records.iter().map(|r| &r.prediction).collect();
    let report = compare(
        &list_a,
        &friend_copy_of_b,
        &wigner_labels,
        config.rule.provenance(),
        analytic_plus,
        open_label,
        open_lab_aligned,
    )?;
    Ok((
        TrialLog {
            records,
            friend_copy_of_b,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TOL;

    #[test]
    fn qubit_standard_run() {
        let (log, report) = run_protocol(&ProtocolConfig::new(2, 2_000, 7, Rule::Standard)).unwrap();
        assert_eq!(log.records.len(), 2_000);
        assert!(log
            .list_a()
            .all(|t| (t.probability(PLUS).unwrap() - 0.5).abs() < TOL
                && (t.probability(MINUS).unwrap() - 0.5).abs() < TOL));
        assert!(log.list_b().all(|b| b == PLUS));
        assert_eq!(report.counts_b, vec![("+".to_string(), 2_000), ("-".to_string(), 0)]);
        assert!((report.tvd - 0.5).abs() < TOL);
        assert!((report.chi2_statistic - 2_000.0).abs() < 1e-9);
        assert_eq!(report.prob_any_minus, 0.0);
        assert!(report.open_lab_aligned);
    }

    #[test]
    fn friend_outcomes_follow_uniform_marginal() {
        let (log, _) = run_protocol(&ProtocolConfig::new(4, 8_000, 11, Rule::Standard)).unwrap();
        for label in ["1", "2", "3", "4"] {
            let n = log.records.iter().filter(|r| r.friend_outcome == label).count() as f64;
            // 6 sigma of Binomial(8000, 1/4).
            assert!(
                (n - 2_000.0).abs() < 6.0 * (8_000.0f64 * 0.25 * 0.75).sqrt(),
                "{label}: {n}"
            );
        }
    }

    #[test]
    fn pair_and_modified_rules_agree_with_observation() {
        for rule in [Rule::Pair, Rule::Modified] {
            let (log, report) = run_protocol(&ProtocolConfig::new(5, 500, 3, rule)).unwrap();
            assert!(log.list_a().all(|t| t.provenance() == rule.provenance()));
            assert!(report.tvd.abs() < TOL, "{rule}: {}", report.tvd);
            assert!(report.chi2_statistic < 1e-20);
            assert!((report.p_value - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn generative_model_matches_born_views() {
        let spec = DilationSpec::new(3).unwrap().with_phases(vec![0.2, 0.9, -2.0]).unwrap();
        let config = ProtocolConfig {
            dimension: 3,
            phases: Some(spec.phases().to_vec()),
            ..Default::default()
        };
        let setup = Setup::new(&config).unwrap();
        let phi = StateVector::uniform_superposition(spec.system_layout(), "S").unwrap();
        let friend = born_probabilities(&phi, &dilation::build_friend_measurement(&spec)).unwrap();
        assert!(setup.friend_marginal.approx_eq(&friend, 1e-12));
        let wigner = born_probabilities(&spec.phi_plus(), &setup.wigner).unwrap();
        for t in &setup.wigner_given_friend {
            assert!(t.approx_eq(&wigner, 1e-12));
        }
    }

    #[test]
    fn open_lab_on_aligned_state() {
        let spec = DilationSpec::new(2).unwrap();
        let mut rng = rng::stream(1, 1);
        let (label, state) = open_lab(&spec.aligned_state(0).unwrap(), &spec, &mut rng).unwrap();
        assert_eq!(label, "(up,U)");
        assert!((state.fidelity(&spec.aligned_state(0).unwrap()).unwrap() - 1.0).abs() < TOL);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(run_protocol(&ProtocolConfig::new(2, 0, 1, Rule::Standard)).is_err());
        assert!(run_protocol(&ProtocolConfig::new(0, 10, 1, Rule::Standard)).is_err());
        let bad_phases = ProtocolConfig {
            phases: Some(vec![0.0]),
            ..Default::default()
        };
        assert!(run_protocol(&bad_phases).is_err());
    }

    #[test]
    fn report_json_round_trip_with_infinite_statistic() {
        let (_, mut report) = run_protocol(&ProtocolConfig::new(2, 10, 1, Rule::Modified)).unwrap();
        report.chi2_statistic = f64::INFINITY;
        let json = serde_json::to_string(&report).unwrap();
        let back: ComparisonReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
