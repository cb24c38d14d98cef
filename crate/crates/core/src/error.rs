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

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("index {index} out of range for factor `{label}` of dimension {dim}")]
    IndexOutOfRange { label: String, index: usize, dim: usize },
    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("operator is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("operator is not a projector (defect {0:e})")]
    NotProjector(f64),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("outcome `{0}` has zero probability")]
    ImpossibleOutcome(String),
    #[error("probability {value} for `{label}` is outside [0, 1]")]
    InvalidProbability { label: String, value: f64 },
    #[error("malformed prediction table: {0}")]
    MalformedTable(String),
    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
