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

//! Wigner's-friend protocol simulation.
//!
//! A dense state-vector core ([`hilbert`]) carries the composite space of the
//! measured system, the friend's memory and, for sequential scenarios, a
//! second memory register. [`dilation`] realizes the friend's measurement as
//! an entangling unitary and builds the superobserver's degenerate
//! measurement. [`rules`] implements the three competing prediction rules and
//! [`protocol`] runs the repeated three-step experiment, accumulating the
//! friend's predictions and the superobserver's observed counts.

pub mod cli;
pub mod dilation;
pub mod error;
pub mod hilbert;
pub mod protocol;
pub mod rng;
pub mod rules;
pub mod stats;
pub mod table;
pub mod verify;

pub use error::{Error, Result};
pub use hilbert::{Operator, ProjectiveMeasurement, SpaceLayout, StateVector};
pub use table::{PredictionTable, Provenance};

/// Absolute tolerance for normalization, unitarity and projector checks.
pub const TOL: f64 = 1e-12;
/// Tolerance on the sum of a probability table.
pub const SUM_TOL: f64 = 1e-10;
/// Smallest probability that may be conditioned or collapsed on.
pub const MIN_PROB: f64 = 1e-14;
