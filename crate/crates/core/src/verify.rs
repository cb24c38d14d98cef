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

//! Property self-test run by `wfriend verify`.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dilation::{self, DilationSpec, PLUS};
use crate::error::Result;
use crate::hilbert::{born_probabilities, collapse, SpaceLayout, StateVector};
use crate::protocol::{run_protocol, ComparisonReport, ProtocolConfig, Rule, TrialLog, Variant};
use crate::rng;
use crate::rules::{self, JointDistribution, SequentialScenario};
use crate::TOL;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Extra phase on the first outcome of the superobserver's measurement
    /// only, leaving the dilation untouched.
    pub phase_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    /// Largest observed deviation; compare with `tolerance`.
    pub max_deviation: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Haar-ish random state: normalized complex Gaussian vector.
pub fn random_state<R: Rng + ?Sized>(layout: SpaceLayout, rng: &mut R) -> StateVector {
    let amps = (0..layout.dim())
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    StateVector::normalized(layout, amps).expect("nonzero with probability one")
}

/// Random orthonormal basis by Gram-Schmidt on complex Gaussian vectors.
pub fn random_basis<R: Rng + ?Sized>(layout: &SpaceLayout, rng: &mut R) -> Vec<StateVector> {
    let d = layout.dim();
    let mut basis: Vec<StateVector> = Vec::with_capacity(d);
    while basis.len() < d {
        let v = random_state(layout.clone(), rng);
        let mut w: Vec<C64> = v.amplitudes().to_vec();
        // Two passes keep the result orthogonal to ~1e-16.
        for _ in 0..2 {
            for b in &basis {
                let c: C64 = b.amplitudes().iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.iter_mut().zip(b.amplitudes()).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        if let Ok(s) = StateVector::normalized(layout.clone(), w) {
            basis.push(s);
        }
    }
    basis
}

/// Largest `|p_mod(j, k) − |⟨j|φ⟩|² |⟨k|j⟩|²|` over `count` random
/// same-system scenarios with system dimension in `2..=max_dim`.
pub fn same_system_equivalence(count: usize, max_dim: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::stream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let d = rng.random_range(2..=max_dim);
        let system = SpaceLayout::single("S", d)?;
        let phi = random_state(system.clone(), &mut rng);
        let first: Vec<StateVector> = if rng.random_bool(0.5) {
            (0..d)
                .map(|j| StateVector::basis(system.clone(), &[j]))
                .collect::<Result<_>>()?
        } else {
            random_basis(&system, &mut rng)
        };
        let second = random_basis(&system, &mut rng);
        let scenario = SequentialScenario::same_system(&phi, &first, &second)?;
        let joint = JointDistribution::from_scenario(&scenario)?;
        for (j, bj) in first.iter().enumerate() {
            for (k, bk) in second.iter().enumerate() {
                let oracle = bj.fidelity(&phi)? * bk.fidelity(bj)?;
                let got = joint.joint(&(j + 1).to_string(), &(k + 1).to_string())?;
                worst = worst.max((got - oracle).abs());
            }
        }
    }
    Ok(worst)
}

fn check(name: &'static str, tolerance: f64, max_deviation: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        tolerance,
        max_deviation,
        detail: detail.into(),
    }
}

fn dilation_unitarity() -> Result<CheckResult> {
    let mut rng = rng::stream(1, 1);
    let mut worst = 0.0f64;
    for d in 1..=32 {
        let phases = (0..d)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        for spec in [DilationSpec::new(d)?, DilationSpec::new(d)?.with_phases(phases)?] {
            let u = dilation::build_dilation(&spec);
            worst = worst.max(u.unitarity_defect());
            for j in 0..d {
                let out = u.apply(&StateVector::basis(spec.lab_layout(), &[j, 0])?)?;
                let amp = out.amplitude(&[j, spec.alpha_index(j)])?;
                worst = worst.max((amp - C64::from_polar(1.0, spec.phases()[j])).norm());
            }
        }
        let v = dilation::measurement_dilation(
            &dilation::build_wigner_measurement(&DilationSpec::new(d)?),
            SpaceLayout::single("2", 3)?,
        )?;
        worst = worst.max(v.unitarity_defect());
    }
    Ok(check(
        "dilation_unitarity",
        TOL,
        worst,
        "U†U = 1 and U|j,0⟩ = e^{iθ_j}|j,α_j⟩, d = 1..=32",
    ))
}

fn measurement_completeness() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for d in 1..=8 {
        let spec = DilationSpec::new(d)?;
        for m in [
            dilation::build_friend_measurement(&spec),
            dilation::build_wigner_measurement(&spec),
            dilation::build_open_lab_measurement(&spec),
        ] {
            worst = worst.max(m.completeness_defect()).max(m.orthogonality_defect());
            for (_, p) in m.outcomes() {
                worst = worst.max(p.projector_defect());
            }
        }
        // The same checks on the fully expanded matrices.
        let mw = dilation::build_wigner_measurement(&spec);
        let n = spec.lab_layout().dim();
        let plus = mw.projector(PLUS)?.matrix();
        let minus = mw.projector(dilation::MINUS)?.matrix();
        for r in 0..n {
            for c in 0..n {
                let id = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((plus[r * n + c] + minus[r * n + c] - id).norm());
                let pm: C64 = (0..n).map(|i| plus[r * n + i] * minus[i * n + c]).sum();
                worst = worst.max(pm.norm());
            }
        }
    }
    Ok(check(
        "measurement_completeness",
        TOL,
        worst,
        "Σ P_i = 1 and P_i P_j = 0 for M_F, M_W, open-lab, d = 1..=8",
    ))
}

fn wigner_eigenstate(options: &VerifyOptions) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for d in 1..=128 {
        let spec = DilationSpec::new(d)?;
        let lab = dilation::build_dilation(&spec).apply(&spec.ready_state())?;
        let measured_spec = match options.phase_mismatch {
            Some(delta) => {
                let mut phases = vec![0.0; d];
                phases[0] = delta;
                spec.clone().with_phases(phases)?
            }
            None => spec.clone(),
        };
        let mw = dilation::build_wigner_measurement(&measured_spec);
        let t = born_probabilities(&lab, &mw)?;
        worst = worst.max((t.probability(PLUS)? - 1.0).abs());
        match collapse(&lab, mw.projector(PLUS)?) {
            Ok(post) => worst = worst.max((post.fidelity(&lab)? - 1.0).abs()),
            Err(_) => worst = worst.max(1.0),
        }
    }
    Ok(check(
        "wigner_eigenstate",
        TOL,
        worst,
        "p(+) = 1 on |Φ⁺_d⟩ and collapse leaves it unchanged, d = 1..=128",
    ))
}

fn conditional_prediction_law() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for d in [1, 2, 3, 4, 8, 16, 64] {
        let spec = DilationSpec::new(d)?;
        let mw = dilation::build_wigner_measurement(&spec);
        for j in 0..d {
            let post = rules::friend_updated_state(&spec, &spec.phi_plus(), j)?;
            let t = rules::standard_update_prediction(&post, &mw)?;
            worst = worst.max((t.probability(PLUS)? - 1.0 / d as f64).abs());
        }
    }
    Ok(check(
        "conditional_prediction_law",
        TOL,
        worst,
        "standard update gives p(+|j) = 1/d",
    ))
}

fn same_system() -> Result<CheckResult> {
    let worst = same_system_equivalence(200, 8, 2024)?;
    Ok(check(
        "same_system_equivalence",
        1e-10,
        worst,
        "200 random sequential scenarios on one system, d = 2..=8",
    ))
}

fn wigner_correction() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for d in 1..=64 {
        let spec = DilationSpec::new(d)?;
        let joint = JointDistribution::from_scenario(&SequentialScenario::wigners_friend(&spec)?)?;
        for j in 0..d {
            worst = worst.max((joint.conditional(PLUS, &spec.system_outcome_label(j))? - 1.0).abs());
        }
    }
    Ok(check(
        "wigner_scenario_correction",
        TOL,
        worst,
        "modified rule gives p(+|j) = 1, d = 1..=64",
    ))
}

fn non_disclosure() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for rule in Rule::ALL {
        for d in [2, 5] {
            let (log, _) = run_protocol(&ProtocolConfig::new(d, 400, 17, rule))?;
            let first = &log.records[0].prediction;
            for r in &log.records {
                let same = r.prediction == *first;
                worst = worst.max(if same { 0.0 } else { 1.0 });
            }
        }
    }
    Ok(check(
        "prediction_non_disclosure",
        0.0,
        worst,
        "every list-A entry in a run is identical",
    ))
}

fn variant_equivalence() -> Result<CheckResult> {
    let mut mismatches = 0usize;
    for rule in Rule::ALL {
        let base = ProtocolConfig::new(3, 500, 99, rule);
        let (_, out) = run_protocol(&ProtocolConfig {
            variant: Variant::MessagesOut,
            ..base.clone()
        })?;
        let (_, inside) = run_protocol(&ProtocolConfig {
            variant: Variant::WignerReports,
            ..base
        })?;
        if out != inside {
            mismatches += 1;
        }
    }
    Ok(check(
        "variant_equivalence",
        0.0,
        mismatches as f64,
        "messages-out and wigner-reports reports are identical",
    ))
}

fn reproducibility() -> Result<CheckResult> {
    let mut mismatches = 0usize;
    let configs = [
        ProtocolConfig::new(2, 1_000, 5, Rule::Standard),
        ProtocolConfig {
            phases: Some(vec![0.1, 0.7, -0.3, 2.2]),
            ..ProtocolConfig::new(4, 300, 6, Rule::Modified)
        },
    ];
    for config in configs {
        let a = run_protocol(&config)?;
        let b = run_protocol(&config)?;
        let text = serde_json::to_string(&a.1).expect("report serializes");
        let parsed: ComparisonReport = serde_json::from_str(&text).expect("report parses");
        let log_text = serde_json::to_string(&a.0).expect("log serializes");
        let parsed_log: TrialLog = serde_json::from_str(&log_text).expect("log parses");
        if a != b || parsed != a.1 || parsed_log != a.0 {
            mismatches += 1;
        }
    }
    Ok(check(
        "reproducibility",
        0.0,
        mismatches as f64,
        "identical configs give bit-identical logs and reports",
    ))
}

/// Runs every check, in order.
pub fn run_checks(options: &VerifyOptions) -> Result<Vec<CheckResult>> {
    Ok(vec![
        dilation_unitarity()?,
        measurement_completeness()?,
        wigner_eigenstate(options)?,
        conditional_prediction_law()?,
        same_system()?,
        wigner_correction()?,
        non_disclosure()?,
        variant_equivalence()?,
        reproducibility()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_bases_are_orthonormal() {
        let mut rng = rng::stream(3, 0);
        let l = SpaceLayout::single("S", 6).unwrap();
        let b = random_basis(&l, &mut rng);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((x.inner(y).unwrap() - target).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn phase_mismatch_breaks_eigenstate() {
        // d = 2, phase π on |0⟩|α_0⟩ of the measured state: |⟨Φ'|Φ⟩|² = |1 + e^{iπ}|²/4 = 0.
        let r = wigner_eigenstate(&VerifyOptions {
            phase_mismatch: Some(std::f64::consts::PI),
        })
        .unwrap();
        assert!(!r.passed());
        assert!((r.max_deviation - 1.0).abs() < 1e-12);
    }
}
