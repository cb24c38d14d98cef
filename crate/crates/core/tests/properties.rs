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

use approx::abs_diff_eq;
use proptest::prelude::*;

use wfriend::dilation::{self, DilationSpec, MINUS, PLUS};
use wfriend::hilbert::{born_probabilities, collapse, sample_outcome};
use wfriend::protocol::{run_protocol, ProtocolConfig, Rule, Variant};
use wfriend::rules::{self, JointDistribution, PairOfStates, SequentialScenario};
use wfriend::verify::{random_basis, random_state};
use wfriend::{rng, PredictionTable, Provenance, SpaceLayout};

fn phases(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-std::f64::consts::PI..std::f64::consts::PI, d)
}

fn spec_with_phases() -> impl Strategy<Value = DilationSpec> {
    (1usize..=8).prop_flat_map(|d| phases(d).prop_map(move |p| DilationSpec::new(d).unwrap().with_phases(p).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dilation_preserves_norm(spec in spec_with_phases(), seed in any::<u64>()) {
        let psi = random_state(spec.lab_layout(), &mut rng::stream(seed, 0));
        let out = dilation::build_dilation(&spec).apply(&psi).unwrap();
        prop_assert!(abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12));
        prop_assert!(abs_diff_eq!(psi.inner(&psi).unwrap().re, out.inner(&out).unwrap().re, epsilon = 1e-12));
    }

    #[test]
    fn collapse_is_idempotent(spec in spec_with_phases(), seed in any::<u64>()) {
        let psi = random_state(spec.lab_layout(), &mut rng::stream(seed, 0));
        let m = dilation::build_wigner_measurement(&spec);
        for label in [PLUS, MINUS] {
            let p = m.projector(label).unwrap();
            let once = collapse(&psi, p).unwrap();
            let twice = collapse(&once, p).unwrap();
            prop_assert!(abs_diff_eq!(once.fidelity(&twice).unwrap(), 1.0, epsilon = 1e-12));
            let born = born_probabilities(&once, &m).unwrap();
            prop_assert!(abs_diff_eq!(born.probability(label).unwrap(), 1.0, epsilon = 1e-12));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream(seed in any::<u64>(), round in any::<u64>(), p in 0.0f64..=1.0) {
        let t = PredictionTable::new(vec![(PLUS.into(), p), (MINUS.into(), 1.0 - p)], Provenance::Born).unwrap();
        let a: Vec<String> = {
            let mut r = rng::stream(seed, round);
            (0..16).map(|_| sample_outcome(&t, &mut r).unwrap()).collect()
        };
        let mut r = rng::stream(seed, round);
        let b: Vec<String> = (0..16).map(|_| sample_outcome(&t, &mut r).unwrap()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pair_update_leaves_lab_state_alone(d in 1usize..=8, j in 0usize..8) {
        let j = j % d;
        let spec = DilationSpec::new(d).unwrap();
        let pair = PairOfStates::for_spec(&spec);
        let friend = dilation::build_friend_measurement(&spec);
        let updated = rules::pair_update_on_system_outcome(&pair, friend.projector(&spec.system_outcome_label(j)).unwrap()).unwrap();
        prop_assert_eq!(&updated.lab_state, &pair.lab_state);
        prop_assert!(abs_diff_eq!(updated.system_state.amplitudes()[j].norm(), 1.0, epsilon = 1e-12));
    }

    #[test]
    fn joint_marginals_match_first_measurement(d in 2usize..=6, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let layout = SpaceLayout::single("S", d).unwrap();
        let phi = random_state(layout.clone(), &mut r);
        let first = random_basis(&layout, &mut r);
        let second = random_basis(&layout, &mut r);
        let joint = JointDistribution::from_scenario(&SequentialScenario::same_system(&phi, &first, &second).unwrap()).unwrap();
        let mut total = 0.0;
        for (j, bj) in first.iter().enumerate() {
            let jl = (j + 1).to_string();
            let sum: f64 = (1..=d).map(|k| joint.joint(&jl, &k.to_string()).unwrap()).sum();
            prop_assert!(abs_diff_eq!(sum, joint.first_marginal(&jl).unwrap(), epsilon = 1e-12));
            prop_assert!(abs_diff_eq!(sum, bj.fidelity(&phi).unwrap(), epsilon = 1e-12));
            total += sum;
        }
        prop_assert!(abs_diff_eq!(total, 1.0, epsilon = 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_reproduce_at_fixed_seed(d in 1usize..=6, seed in any::<u64>(), rule in prop::sample::select(Rule::ALL.to_vec()), wr in any::<bool>()) {
        let mut config = ProtocolConfig::new(d, 300, seed, rule);
        config.variant = if wr { Variant::WignerReports } else { Variant::MessagesOut };
        prop_assert_eq!(run_protocol(&config).unwrap(), run_protocol(&config).unwrap());
    }
}

#[test]
fn fair_coin_frequency() {
    let t = PredictionTable::new(vec![(PLUS.into(), 0.5), (MINUS.into(), 0.5)], Provenance::Born).unwrap();
    let n = 100_000u64;
    let plus = (0..n)
        .filter(|&i| sample_outcome(&t, &mut rng::stream(99, i)).unwrap() == PLUS)
        .count();
    let freq = plus as f64 / n as f64;
    assert!((freq - 0.5).abs() < 0.01, "{freq}");
}
