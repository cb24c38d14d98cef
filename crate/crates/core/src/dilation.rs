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

//! Measurement as unitary evolution of system and memory.
//!
//! The friend's memory register has `d + 1` levels: index 0 is the ready
//! state `|0⟩` and index `j + 1` is `|α_j⟩`, the record of outcome `j`. The
//! dilation is the controlled cyclic shift
//!
//! ```text
//! U = Σ_j |j⟩⟨j| ⊗ C_j,   C_j |m⟩ = |m + j + 1 mod d + 1⟩
//! ```
//!
//! with the phase `e^{iθ_j}` attached to the `|0⟩ → |α_j⟩` transition only.
//! Only the action on `|j⟩|0⟩` carries meaning; the rest of the shift is a
//! unitary completion and nothing downstream depends on it.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{Operator, ProjectiveMeasurement, SpaceLayout, StateVector};

pub const PLUS: &str = "+";
pub const MINUS: &str = "-";

/// System dimension, per-outcome phases and factor labels of one dilation.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationSpec {
    system_dim: usize,
    phases: Vec<f64>,
    system_label: String,
    memory_label: String,
}

impl DilationSpec {
    pub fn new(system_dim: usize) -> Result<Self> {
        if system_dim == 0 {
            return Err(Error::InvalidConfig("system dimension must be at least 1".into()));
        }
        Ok(Self {
            system_dim,
            phases: vec![0.0; system_dim],
            system_label: "S".into(),
            memory_label: "F".into(),
        })
    }

    pub fn with_phases(mut self, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != self.system_dim {
            return Err(Error::InvalidConfig(format!(
                "expected {} phases, got {}",
                self.system_dim,
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("phases must be finite".into()));
        }
        self.phases = phases;
        Ok(self)
    }

    pub fn with_labels(mut self, system: &str, memory: &str) -> Result<Self> {
        if system == memory {
            return Err(Error::InvalidLayout(format!("duplicate label `{system}`")));
        }
        self.system_label = system.into();
        self.memory_label = memory.into();
        Ok(self)
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn memory_dim(&self) -> usize {
        self.system_dim + 1
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn system_label(&self) -> &str {
        &self.system_label
    }

    pub fn memory_label(&self) -> &str {
        &self.memory_label
    }

    pub fn system_layout(&self) -> SpaceLayout {
        SpaceLayout::single(self.system_label.clone(), self.system_dim).expect("valid spec")
    }

    pub fn memory_layout(&self) -> SpaceLayout {
        SpaceLayout::single(self.memory_label.clone(), self.memory_dim()).expect("valid spec")
    }

    pub fn lab_layout(&self) -> SpaceLayout {
        self.system_layout()
            .tensor(&self.memory_layout())
            .expect("distinct labels")
    }

    /// Memory index holding the record of outcome `j`.
    pub fn alpha_index(&self, j: usize) -> usize {
        j + 1
    }

    /// Outcome label of `|j⟩⟨j|_S`: `up`/`down` for a qubit, else `1..=d`.
    pub fn system_outcome_label(&self, j: usize) -> String {
        match (self.system_dim, j) {
            (2, 0) => "up".into(),
            (2, 1) => "down".into(),
            _ => (j + 1).to_string(),
        }
    }

    pub fn system_outcome_index(&self, label: &str) -> Result<usize> {
        (0..self.system_dim)
            .find(|&j| self.system_outcome_label(j) == label)
            .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    /// `0` for the ready state, `U`/`D` for a qubit's records, else `a1..=ad`.
    pub fn memory_state_label(&self, m: usize) -> String {
        match (self.system_dim, m) {
            (_, 0) => "0".into(),
            (2, 1) => "U".into(),
            (2, 2) => "D".into(),
            _ => format!("a{m}"),
        }
    }

    pub fn open_lab_label(&self, j: usize, m: usize) -> String {
        format!("({},{})", self.system_outcome_label(j), self.memory_state_label(m))
    }

    fn phase(&self, j: usize) -> C64 {
        C64::from_polar(1.0, self.phases[j])
    }

    /// `|φ_d⟩_S |0⟩_F`.
    pub fn ready_state(&self) -> StateVector {
        let system = StateVector::uniform_superposition(self.system_layout(), &self.system_label).expect("own label");
        let memory = StateVector::basis(self.memory_layout(), &[0]).expect("index 0");
        system.tensor(&memory).expect("distinct labels")
    }

    /// `|j⟩_S |α_j⟩_F`.
    pub fn aligned_state(&self, j: usize) -> Result<StateVector> {
        StateVector::basis(self.lab_layout(), &[j, self.alpha_index(j)])
    }

    /// `|Φ⁺_d⟩ = d^{-1/2} Σ_j e^{iθ_j} |j⟩|α_j⟩`.
    pub fn phi_plus(&self) -> StateVector {
        let layout = self.lab_layout();
        let weight = 1.0 / (self.system_dim as f64).sqrt();
        let mut amplitudes = vec![C64::new(0.0, 0.0); layout.dim()];
        for j in 0..self.system_dim {
            amplitudes[layout.flat_index(&[j, self.alpha_index(j)]).expect("in range")] = self.phase(j) * weight;
        }
        StateVector::new(layout, amplitudes).expect("unit norm by construction")
    }
}

/// Cyclic shift `|m⟩ → |m + shift mod n⟩` on a single register, with
/// `ready_phase` on the column of `|0⟩`.
pub fn cyclic_shift(register: SpaceLayout, shift: usize, ready_phase: C64) -> Operator {
    let n = register.dim();
    let targets = (0..n).map(|m| (m + shift) % n).collect();
    let mut phases = vec![C64::new(1.0, 0.0); n];
    phases[0] = ready_phase;
    Operator::phased_permutation(register, targets, phases).expect("shift is a permutation")
}

/// The friend's measurement as a unitary on `S ⊗ F`.
pub fn build_dilation(spec: &DilationSpec) -> Operator {
    let (d, n) = (spec.system_dim, spec.memory_dim());
    let mut targets = Vec::with_capacity(d * n);
    let mut phases = Vec::with_capacity(d * n);
    for j in 0..d {
        for m in 0..n {
            targets.push(j * n + (m + j + 1) % n);
            phases.push(if m == 0 { spec.phase(j) } else { C64::new(1.0, 0.0) });
        }
    }
    Operator::phased_permutation(spec.lab_layout(), targets, phases).expect("shift is a permutation")
}

/// `Σ_i P_i ⊗ C_i` recording outcome `i` of `m` into `register` as level
/// `i + 1`. The register must have room for a ready level plus one level per
/// outcome.
pub fn measurement_dilation(m: &ProjectiveMeasurement, register: SpaceLayout) -> Result<Operator> {
    let levels = m.outcomes().len();
    if register.factors().len() != 1 || register.dim() < levels + 1 {
        return Err(Error::InvalidLayout(format!(
            "register {register} cannot record {levels} outcomes"
        )));
    }
    let shifts = (0..levels)
        .map(|i| cyclic_shift(register.clone(), i + 1, C64::new(1.0, 0.0)))
        .collect();
    Operator::controlled(m.clone(), shifts)
}

/// The superobserver's `{|Φ⁺_d⟩⟨Φ⁺_d|, 𝟙 − |Φ⁺_d⟩⟨Φ⁺_d|}` on `S ⊗ F`.
pub fn build_wigner_measurement(spec: &DilationSpec) -> ProjectiveMeasurement {
    let plus = Operator::projector_onto(&spec.phi_plus());
    let minus = plus.complement();
    ProjectiveMeasurement::new(spec.lab_layout(), vec![(PLUS.into(), plus), (MINUS.into(), minus)])
        .expect("rank-one projector and its complement")
}

/// Product-basis measurement on `S ⊗ F`, one outcome per `|j⟩|m⟩`.
pub fn build_open_lab_measurement(spec: &DilationSpec) -> ProjectiveMeasurement {
    let layout = spec.lab_layout();
    let n = spec.memory_dim();
    let outcomes = (0..spec.system_dim)
        .flat_map(|j| (0..n).map(move |m| (j, m)))
        .map(|(j, m)| {
            let p = Operator::basis_projector(layout.clone(), [j * n + m]).expect("in range");
            (spec.open_lab_label(j, m), p)
        })
        .collect();
    ProjectiveMeasurement::new(layout, outcomes).expect("product basis")
}

/// The friend's `{|j⟩⟨j|_S}` on the system alone.
pub fn build_friend_measurement(spec: &DilationSpec) -> ProjectiveMeasurement {
    let layout = spec.system_layout();
    let outcomes = (0..spec.system_dim)
        .map(|j| {
            (
                spec.system_outcome_label(j),
                Operator::basis_projector(layout.clone(), [j]).expect("in range"),
            )
        })
        .collect();
    ProjectiveMeasurement::new(layout, outcomes).expect("computational basis")
}
