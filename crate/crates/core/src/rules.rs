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

//! Prediction rules for the superobserver's measurement.
//!
//! * Standard update: collapse on the friend's outcome, then apply the Born
//!   rule to the collapsed lab state.
//! * Pair of states: a collapsed system state for measurements on the system
//!   and the superobserver's entangled lab state for measurements on the
//!   whole lab.
//! * Modified Born rule: both measurements stay unitary, each recording into
//!   its own memory register, and joint probabilities are read off the
//!   registers of the final state.

use crate::dilation::{self, DilationSpec, MINUS, PLUS};
use crate::error::{Error, Result};
use crate::hilbert::{
    born_probabilities, collapse, projection_weight, Operator, ProjectiveMeasurement, SpaceLayout, StateVector,
};
use crate::table::{PredictionTable, Provenance};
use crate::{MIN_PROB, SUM_TOL, TOL};

/// Label of the first memory register in sequential scenarios.
pub const REGISTER_1: &str = "1";
/// Label of the second memory register in sequential scenarios.
pub const REGISTER_2: &str = "2";

/// Born probabilities of `m` on the friend's collapsed state `|j⟩|α_j⟩`.
pub fn standard_update_prediction(
    post_outcome_state: &StateVector,
    m: &ProjectiveMeasurement,
) -> Result<PredictionTable> {
    Ok(born_probabilities(post_outcome_state, m)?.with_provenance(Provenance::StandardUpdate))
}

/// The lab state after the friend applies the update rule for outcome `j`
/// of `|j⟩⟨j|_S` to `lab_state`.
pub fn friend_updated_state(spec: &DilationSpec, lab_state: &StateVector, j: usize) -> Result<StateVector> {
    let friend = dilation::build_friend_measurement(spec);
    let label = spec.system_outcome_label(j);
    let projector = friend.projector(&label)?.embed(lab_state.layout())?;
    collapse(lab_state, &projector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    System,
    Lab,
}

/// The friend's two-component bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOfStates {
    pub system_state: StateVector,
    pub lab_state: StateVector,
}

impl PairOfStates {
    pub fn new(system_state: StateVector, lab_state: StateVector) -> Self {
        Self {
            system_state,
            lab_state,
        }
    }

    /// `{|φ_d⟩_S, |Φ⁺_d⟩_SF}` before the friend registers anything.
    pub fn for_spec(spec: &DilationSpec) -> Self {
        let system = StateVector::uniform_superposition(spec.system_layout(), spec.system_label()).expect("own label");
        Self::new(system, spec.phi_plus())
    }
}

pub fn pair_predict(pair: &PairOfStates, target: Target, m: &ProjectiveMeasurement) -> Result<PredictionTable> {
    let state = match target {
        Target::System => &pair.system_state,
        Target::Lab => &pair.lab_state,
    };
    Ok(born_probabilities(state, m)?.with_provenance(Provenance::PairOfStates))
}

/// Collapses the system component; the lab component is carried over untouched.
pub fn pair_update_on_system_outcome(pair: &PairOfStates, projector: &Operator) -> Result<PairOfStates> {
    Ok(PairOfStates {
        system_state: collapse(&pair.system_state, projector)?,
        lab_state: pair.lab_state.clone(),
    })
}

/// Two measurements realized as unitaries `first` then `second`, each
/// recording its outcome in a memory register.
#[derive(Debug, Clone)]
pub struct SequentialScenario {
    layout: SpaceLayout,
    initial: StateVector,
    first: Operator,
    second: Operator,
    register1: Vec<(String, StateVector)>,
    register2: Vec<(String, StateVector)>,
}

fn check_register(layout: &SpaceLayout, basis: &[(String, StateVector)], which: &str) -> Result<()> {
    let Some((_, first)) = basis.first() else {
        return Err(Error::InvalidMeasurement(format!("{which} basis is empty")));
    };
    let register = first.layout();
    if register.factors().len() != 1 {
        return Err(Error::InvalidLayout(format!(
            "{which} basis must live on a single factor"
        )));
    }
    let (label, dim) = &register.factors()[0];
    if layout.factor_dim(label)? != *dim {
        return Err(Error::LayoutMismatch {
            expected: layout.to_string(),
            found: register.to_string(),
        });
    }
    for (i, (name, a)) in basis.iter().enumerate() {
        if basis[..i].iter().any(|(l, _)| l == name) {
            return Err(Error::InvalidMeasurement(format!("duplicate {which} label `{name}`")));
        }
        for (k, (_, b)) in basis[..=i].iter().enumerate() {
            let target = if k == i { 1.0 } else { 0.0 };
            let overlap = b.inner(a)?;
            if (overlap - target).norm() > TOL {
                return Err(Error::InvalidMeasurement(format!("{which} basis is not orthonormal")));
            }
        }
    }
    Ok(())
}

impl SequentialScenario {
    pub fn new(
        initial: StateVector,
        first: Operator,
        second: Operator,
        register1: Vec<(String, StateVector)>,
        register2: Vec<(String, StateVector)>,
    ) -> Result<Self> {
        let layout = initial.layout().clone();
        for op in [&first, &second] {
            if op.layout() != &layout {
                return Err(Error::LayoutMismatch {
                    expected: layout.to_string(),
                    found: op.layout().to_string(),
                });
            }
            let defect = op.unitarity_defect();
            if defect > TOL {
                return Err(Error::NotUnitary(defect));
            }
        }
        check_register(&layout, &register1, "register-1")?;
        check_register(&layout, &register2, "register-2")?;
        if register1[0].1.layout() == register2[0].1.layout() {
            return Err(Error::InvalidLayout(
                "the two registers must be distinct factors".into(),
            ));
        }
        Ok(Self {
            layout,
            initial,
            first,
            second,
            register1,
            register2,
        })
    }

    /// Friend measures `{|j⟩⟨j|_S}` into register 1 with the dilation of
    /// `spec`; the superobserver then measures `{|Φ⁺_d⟩⟨Φ⁺_d|, 𝟙 − …}` on
    /// `S ⊗ 1`, recording `+`/`-` as levels 1/2 of a three-level register 2.
    pub fn wigners_friend(spec: &DilationSpec) -> Result<Self> {
        let spec = spec.clone().with_labels("S", REGISTER_1)?;
        let register2 = SpaceLayout::single(REGISTER_2, 3)?;
        let layout = spec.lab_layout().tensor(&register2)?;
        let initial = spec
            .ready_state()
            .tensor(&StateVector::basis(register2.clone(), &[0])?)?;
        let first = dilation::build_dilation(&spec).embed(&layout)?;
        let second = dilation::measurement_dilation(&dilation::build_wigner_measurement(&spec), register2.clone())?;
        let register1 = (0..spec.system_dim())
            .map(|j| {
                Ok((
                    spec.system_outcome_label(j),
                    StateVector::basis(spec.memory_layout(), &[spec.alpha_index(j)])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let register2 = vec![
            (PLUS.to_string(), StateVector::basis(register2.clone(), &[1])?),
            (MINUS.to_string(), StateVector::basis(register2, &[2])?),
        ];
        Self::new(initial, first, second, register1, register2)
    }

    /// Two measurements on the same system: first in `first_basis`, then in
    /// `second_basis`, each recorded into its own `(d + 1)`-level register.
    /// Outcome labels are `1..=d` in basis order.
    pub fn same_system(
        initial: &StateVector,
        first_basis: &[StateVector],
        second_basis: &[StateVector],
    ) -> Result<Self> {
        let system = initial.layout().clone();
        if system.factors().len() != 1 {
            return Err(Error::InvalidLayout(
                "same-system scenarios take a single-factor initial state".into(),
            ));
        }
        let d = system.dim();
        let reg1 = SpaceLayout::single(REGISTER_1, d + 1)?;
        let reg2 = SpaceLayout::single(REGISTER_2, d + 1)?;
        let layout = system.tensor(&reg1)?.tensor(&reg2)?;
        let measurement = |basis: &[StateVector]| -> Result<ProjectiveMeasurement> {
            if basis.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: basis.len(),
                });
            }
            let outcomes = basis
                .iter()
                .enumerate()
                .map(|(i, b)| ((i + 1).to_string(), Operator::projector_onto(b)))
                .collect();
            ProjectiveMeasurement::new(system.clone(), outcomes)
        };
        let first = dilation::measurement_dilation(&measurement(first_basis)?, reg1.clone())?.embed(&layout)?;
        let second = dilation::measurement_dilation(&measurement(second_basis)?, reg2.clone())?.embed(&layout)?;
        let records = |reg: &SpaceLayout| -> Result<Vec<(String, StateVector)>> {
            (0..d)
                .map(|i| Ok(((i + 1).to_string(), StateVector::basis(reg.clone(), &[i + 1])?)))
                .collect()
        };
        let start = initial
            .tensor(&StateVector::basis(reg1.clone(), &[0])?)?
            .tensor(&StateVector::basis(reg2.clone(), &[0])?)?;
        Self::new(start, first, second, records(&reg1)?, records(&reg2)?)
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn first_unitary(&self) -> &Operator {
        &self.first
    }

    pub fn second_unitary(&self) -> &Operator {
        &self.second
    }

    pub fn register1_basis(&self) -> &[(String, StateVector)] {
        &self.register1
    }

    pub fn register2_basis(&self) -> &[(String, StateVector)] {
        &self.register2
    }

    fn register1_state(&self, label: &str) -> Result<&StateVector> {
        find_record(&self.register1, label)
    }

    fn register2_state(&self, label: &str) -> Result<&StateVector> {
        find_record(&self.register2, label)
    }
}

fn find_record<'a>(basis: &'a [(String, StateVector)], label: &str) -> Result<&'a StateVector> {
    basis
        .iter()
        .find(|(l, _)| l == label)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
}

/// `|Φ_tot⟩ = V U |initial⟩`.
pub fn total_state(scenario: &SequentialScenario) -> Result<StateVector> {
    scenario.second.apply(&scenario.first.apply(&scenario.initial)?)
}

/// Every joint probability `p(j, k)` of a scenario, computed from one
/// evaluation of the total state.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    first_labels: Vec<String>,
    second_labels: Vec<String>,
    /// `joint[j][k]`
    joint: Vec<Vec<f64>>,
}

impl JointDistribution {
    pub fn from_scenario(scenario: &SequentialScenario) -> Result<Self> {
        let total = total_state(scenario)?;
        let mut joint = Vec::with_capacity(scenario.register1.len());
        for (_, alpha) in &scenario.register1 {
            let row = scenario
                .register2
                .iter()
                .map(|(_, beta)| Ok(projection_weight(&total, &[alpha, beta])?.min(1.0)))
                .collect::<Result<Vec<f64>>>()?;
            joint.push(row);
        }
        let sum: f64 = joint.iter().flatten().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::MalformedTable(format!(
                "register records cover total weight {sum}"
            )));
        }
        Ok(Self {
            first_labels: scenario.register1.iter().map(|(l, _)| l.clone()).collect(),
            second_labels: scenario.register2.iter().map(|(l, _)| l.clone()).collect(),
            joint,
        })
    }

    fn first_index(&self, label: &str) -> Result<usize> {
        self.first_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    fn second_index(&self, label: &str) -> Result<usize> {
        self.second_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    pub fn first_labels(&self) -> &[String] {
        &self.first_labels
    }

    pub fn second_labels(&self) -> &[String] {
        &self.second_labels
    }

    pub fn joint(&self, j: &str, k: &str) -> Result<f64> {
        Ok(self.joint[self.first_index(j)?][self.second_index(k)?])
    }

    /// `Σ_k p(j, k)`.
    pub fn first_marginal(&self, j: &str) -> Result<f64> {
        Ok(self.joint[self.first_index(j)?].iter().sum())
    }

    /// `p(k | j) = p(j, k) / Σ_k p(j, k)`.
    pub fn conditional(&self, k: &str, given_j: &str) -> Result<f64> {
        let row = &self.joint[self.first_index(given_j)?];
        let ki = self.second_index(k)?;
        let marginal: f64 = row.iter().sum();
        if marginal.is_nan() || marginal <= MIN_PROB {
            return Err(Error::ImpossibleOutcome(given_j.to_string()));
        }
        Ok((row[ki] / marginal).clamp(0.0, 1.0))
    }

    /// The conditional distribution over the second register given `j`.
    pub fn conditional_table(&self, given_j: &str) -> Result<PredictionTable> {
        let entries = self
            .second_labels
            .iter()
            .map(|k| Ok((k.clone(), self.conditional(k, given_j)?)))
            .collect::<Result<Vec<_>>>()?;
        PredictionTable::new(entries, Provenance::ModifiedBorn)
    }

    /// Marginal distribution of the first record.
    pub fn first_table(&self) -> Result<PredictionTable> {
        let entries = self
            .first_labels
            .iter()
            .zip(&self.joint)
            .map(|(l, row)| (l.clone(), row.iter().sum::<f64>().clamp(0.0, 1.0)))
            .collect();
        PredictionTable::new(entries, Provenance::ModifiedBorn)
    }
}

/// `p(j, k) = tr[(𝟙_S ⊗ |α_j⟩⟨α_j|₁ ⊗ |β_k⟩⟨β_k|₂) |Φ_tot⟩⟨Φ_tot|]`.
pub fn modified_born_joint(scenario: &SequentialScenario, j_label: &str, k_label: &str) -> Result<f64> {
    let total = total_state(scenario)?;
    let alpha = scenario.register1_state(j_label)?;
    let beta = scenario.register2_state(k_label)?;
    Ok(projection_weight(&total, &[alpha, beta])?.min(1.0))
}

/// `p(k | j)` under the modified Born rule.
pub fn modified_born_conditional(scenario: &SequentialScenario, k_label: &str, given_j_label: &str) -> Result<f64> {
    JointDistribution::from_scenario(scenario)?.conditional(k_label, given_j_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn spec(d: usize) -> DilationSpec {
        DilationSpec::new(d).unwrap()
    }

    #[test]
    fn standard_update_predictions() {
        for (d, expected) in [(2, 0.5), (16, 1.0 / 16.0), (1, 1.0)] {
            let s = spec(d);
            let m = dilation::build_wigner_measurement(&s);
            for j in 0..d {
                let post = friend_updated_state(&s, &s.phi_plus(), j).unwrap();
                assert!((post.fidelity(&s.aligned_state(j).unwrap()).unwrap() - 1.0).abs() < TOL);
                let t = standard_update_prediction(&post, &m).unwrap();
                assert_eq!(t.provenance(), Provenance::StandardUpdate);
                assert!((t.probability(PLUS).unwrap() - expected).abs() < TOL);
                assert!((t.probability(MINUS).unwrap() - (1.0 - expected)).abs() < TOL);
            }
        }
    }

    #[test]
    fn pair_of_states_predictions() {
        let s = spec(2);
        let mw = dilation::build_wigner_measurement(&s);
        let mf = dilation::build_friend_measurement(&s);
        let pair = PairOfStates::for_spec(&s);
        let t = pair_predict(&pair, Target::System, &mf).unwrap();
        assert!((t.probability("up").unwrap() - 0.5).abs() < TOL);

        let updated = pair_update_on_system_outcome(&pair, mf.projector("up").unwrap()).unwrap();
        assert_eq!(updated.lab_state.amplitudes(), pair.lab_state.amplitudes());
        let t = pair_predict(&updated, Target::Lab, &mw).unwrap();
        assert!((t.probability(PLUS).unwrap() - 1.0).abs() < TOL);
        assert!(t.probability(MINUS).unwrap().abs() < TOL);
        let t = pair_predict(&updated, Target::System, &mf).unwrap();
        assert!((t.probability("up").unwrap() - 1.0).abs() < TOL);

        let twice = pair_update_on_system_outcome(&updated, mf.projector("up").unwrap()).unwrap();
        assert!((twice.system_state.fidelity(&updated.system_state).unwrap() - 1.0).abs() < TOL);
        assert!(pair_update_on_system_outcome(&updated, mf.projector("down").unwrap()).is_err());
        assert!(matches!(
            pair_predict(&pair, Target::System, &mw),
            Err(Error::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn wigner_scenario_total_state_matches_record_expansion() {
        for d in [1, 2, 3, 6] {
            let s = spec(d);
            let scenario = SequentialScenario::wigners_friend(&s).unwrap();
            let total = total_state(&scenario).unwrap();
            // Σ_j ⟨j|φ⟩ |j⟩|α_j⟩|+⟩₂ with ⟨j|φ⟩ = 1/√d, |+⟩₂ = level 1.
            let layout = scenario.layout();
            let mut expected = vec![C64::new(0.0, 0.0); layout.dim()];
            for j in 0..d {
                expected[layout.flat_index(&[j, j + 1, 1]).unwrap()] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
            }
            for (a, b) in total.amplitudes().iter().zip(&expected) {
                assert!((a - b).norm() < TOL);
            }
        }
    }

    #[test]
    fn identity_scenario_leaves_initial_state() {
        let s = spec(2).with_labels("S", REGISTER_1).unwrap();
        let reg2 = SpaceLayout::single(REGISTER_2, 3).unwrap();
        let layout = s.lab_layout().tensor(&reg2).unwrap();
        let initial = StateVector::uniform_superposition(layout.clone(), "S").unwrap();
        let scenario = SequentialScenario::new(
            initial.clone(),
            Operator::identity(layout.clone()),
            Operator::identity(layout),
            vec![("ready".into(), StateVector::basis(s.memory_layout(), &[0]).unwrap())],
            vec![("ready".into(), StateVector::basis(reg2, &[0]).unwrap())],
        )
        .unwrap();
        assert_eq!(total_state(&scenario).unwrap(), initial);
        assert!((modified_born_joint(&scenario, "ready", "ready").unwrap() - 1.0).abs() < TOL);
    }

    #[test]
    fn wigner_scenario_joint_and_conditional() {
        let scenario = SequentialScenario::wigners_friend(&spec(2)).unwrap();
        assert!((modified_born_joint(&scenario, "up", PLUS).unwrap() - 0.5).abs() < TOL);
        assert!(modified_born_joint(&scenario, "up", MINUS).unwrap().abs() < TOL);
        assert!((modified_born_conditional(&scenario, PLUS, "down").unwrap() - 1.0).abs() < TOL);
        assert!(matches!(
            modified_born_joint(&scenario, "sideways", PLUS),
            Err(Error::UnknownOutcome(_))
        ));
    }

    #[test]
    fn conditioning_on_unpopulated_record_fails() {
        // Initial system state |0⟩: outcome 2 of the first measurement never occurs.
        let sys = SpaceLayout::single("S", 2).unwrap();
        let basis: Vec<StateVector> = (0..2).map(|i| StateVector::basis(sys.clone(), &[i]).unwrap()).collect();
        let scenario = SequentialScenario::same_system(&basis[0], &basis, &basis).unwrap();
        assert!(modified_born_joint(&scenario, "2", "2").unwrap().abs() < TOL);
        assert!(matches!(
            modified_born_conditional(&scenario, "1", "2"),
            Err(Error::ImpossibleOutcome(_))
        ));
        assert!((modified_born_conditional(&scenario, "1", "1").unwrap() - 1.0).abs() < TOL);
    }

    #[test]
    fn joint_uses_embedded_projector_route() {
        // Cross-check the register contraction against an explicit embedded
        // projector 𝟙_S ⊗ |α⟩⟨α| ⊗ |β⟩⟨β| on a small scenario.
        let s = spec(3).with_phases(vec![0.4, 1.1, -0.7]).unwrap();
        let scenario = SequentialScenario::wigners_friend(&s).unwrap();
        let total = total_state(&scenario).unwrap();
        for (jl, alpha) in scenario.register1_basis() {
            for (kl, beta) in scenario.register2_basis() {
                let record = alpha.tensor(beta).unwrap();
                let projector = Operator::projector_onto(&record).embed(scenario.layout()).unwrap();
                let direct = projector.expectation(&total).unwrap().re;
                assert!((modified_born_joint(&scenario, jl, kl).unwrap() - direct).abs() < 1e-14);
            }
        }
    }
}
