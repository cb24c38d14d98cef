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

//! Complex linear algebra over labeled tensor-product spaces.
//!
//! Amplitudes are stored row-major over the ordered factor list of a
//! [`SpaceLayout`]: the last factor varies fastest. Every [`Operator`] carries
//! the layout it acts on, and [`Operator::embed`] lifts an operator on a subset
//! of factors to a larger layout, handling the index permutation when the
//! factors are not adjacent or not in the same order.
//!
//! Operators keep a structured representation where one is available
//! (phased permutations, basis projectors, low-rank spans, controlled sums).
//! All of them agree with [`Operator::matrix`], which expands to the dense
//! matrix, but the structured forms keep the degenerate measurements on
//! `d * (d + 1)`-dimensional lab spaces tractable for large `d`.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::table::{PredictionTable, Provenance};
use crate::{MIN_PROB, SUM_TOL, TOL};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Ordered list of labeled tensor factors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    factors: Vec<(String, usize)>,
}

impl SpaceLayout {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let factors: Vec<(String, usize)> = factors.into_iter().map(|(l, d)| (l.into(), d)).collect();
        if factors.is_empty() {
            return Err(Error::InvalidLayout("no factors".into()));
        }
        for (i, (label, dim)) in factors.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::InvalidLayout(format!("factor `{label}` has dimension 0")));
            }
            if factors[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::InvalidLayout(format!("duplicate label `{label}`")));
            }
        }
        factors
            .iter()
            .try_fold(1usize, |acc, (_, d)| acc.checked_mul(*d))
            .ok_or_else(|| Error::InvalidLayout("total dimension overflows".into()))?;
        Ok(Self { factors })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new([(label.into(), dim)])
    }

    pub fn factors(&self) -> &[(String, usize)] {
        &self.factors
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|(l, _)| l.as_str())
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| d).product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|(l, _)| l == label)
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        self.position(label)
            .map(|p| self.factors[p].1)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Row-major strides, one per factor.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for i in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.factors[i + 1].1;
        }
        strides
    }

    pub fn flat_index(&self, indices: &[usize]) -> Result<usize> {
        if indices.len() != self.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.factors.len(),
                found: indices.len(),
            });
        }
        let mut flat = 0;
        for ((label, dim), &idx) in self.factors.iter().zip(indices) {
            if idx >= *dim {
                return Err(Error::IndexOutOfRange {
                    label: label.clone(),
                    index: idx,
                    dim: *dim,
                });
            }
            flat = flat * dim + idx;
        }
        Ok(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (slot, (_, dim)) in out.iter_mut().zip(&self.factors).rev() {
            *slot = flat % dim;
            flat /= dim;
        }
        out
    }

    /// Concatenation `self ⊗ other`.
    pub fn tensor(&self, other: &SpaceLayout) -> Result<SpaceLayout> {
        SpaceLayout::new(self.factors.iter().chain(&other.factors).cloned())
    }

    /// The factors of `self` not named in `labels`, in order.
    pub fn without(&self, labels: &[&str]) -> Result<SpaceLayout> {
        for l in labels {
            self.factor_dim(l)?;
        }
        SpaceLayout::new(
            self.factors
                .iter()
                .filter(|(l, _)| !labels.contains(&l.as_str()))
                .cloned(),
        )
    }
}

impl fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (l, d)) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}:{d}")?;
        }
        write!(f, "]")
    }
}

fn check_layout(expected: &SpaceLayout, found: &SpaceLayout) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LayoutMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Offsets used to address a sub-layout inside a larger one: the full index
/// of (rest r, sub s) is `rest[r] + sub[s]`, with `s` row-major in the
/// sub-layout's own factor order.
struct LocalIndex {
    sub: Vec<usize>,
    rest: Vec<usize>,
}

impl LocalIndex {
    fn new(full: &SpaceLayout, sub: &SpaceLayout) -> Result<Self> {
        let strides = full.strides();
        let mut sub_pos = Vec::with_capacity(sub.factors.len());
        for (label, dim) in &sub.factors {
            let pos = full.position(label).ok_or_else(|| Error::UnknownLabel(label.clone()))?;
            if full.factors[pos].1 != *dim {
                return Err(Error::LayoutMismatch {
                    expected: full.to_string(),
                    found: sub.to_string(),
                });
            }
            sub_pos.push(pos);
        }
        let offsets = |positions: &[usize]| -> Vec<usize> {
            let mut out = vec![0usize];
            for &p in positions {
                let (dim, stride) = (full.factors[p].1, strides[p]);
                out = out
                    .iter()
                    .flat_map(|&o| (0..dim).map(move |i| o + i * stride))
                    .collect();
            }
            out
        };
        let rest_pos: Vec<usize> = (0..full.factors.len()).filter(|p| !sub_pos.contains(p)).collect();
        Ok(Self {
            sub: offsets(&sub_pos),
            rest: offsets(&rest_pos),
        })
    }
}

fn apply_local(full: &SpaceLayout, op: &Operator, v: &[C64], act: impl Fn(&Operator, &[C64]) -> Vec<C64>) -> Vec<C64> {
    if &op.layout == full {
        return act(op, v);
    }
    // Layout compatibility is validated when the wrapping operator is built.
    let idx = LocalIndex::new(full, &op.layout).expect("validated sub-layout");
    let mut out = vec![ZERO; v.len()];
    let mut buf = vec![ZERO; idx.sub.len()];
    for &r in &idx.rest {
        for (b, &s) in buf.iter_mut().zip(&idx.sub) {
            *b = v[r + s];
        }
        let local = act(op, &buf);
        for (x, &s) in local.into_iter().zip(&idx.sub) {
            out[r + s] = x;
        }
    }
    out
}

fn max_abs_over_columns(dim: usize, mut column_defect: impl FnMut(usize, &[C64]) -> f64) -> f64 {
    let mut e = vec![ZERO; dim];
    let mut worst = 0.0f64;
    for c in 0..dim {
        e[c] = ONE;
        worst = worst.max(column_defect(c, &e));
        e[c] = ZERO;
    }
    worst
}

fn max_abs_minus_unit(col: &[C64], c: usize) -> f64 {
    col.iter()
        .enumerate()
        .map(|(r, x)| if r == c { (x - ONE).norm() } else { x.norm() })
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Normalized complex amplitude vector over a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: SpaceLayout,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes that must already have unit norm (within [`TOL`]).
    pub fn new(layout: SpaceLayout, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amplitudes.len(),
            });
        }
        let norm = norm_sqr(&amplitudes).sqrt();
        if norm.is_nan() || (norm - 1.0).abs() > TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { layout, amplitudes })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(layout: SpaceLayout, mut amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amplitudes.len(),
            });
        }
        let norm = norm_sqr(&amplitudes).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NotNormalized(norm));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { layout, amplitudes })
    }

    /// Computational basis vector addressed by one index per factor.
    pub fn basis(layout: SpaceLayout, indices: &[usize]) -> Result<Self> {
        let flat = layout.flat_index(indices)?;
        let mut amplitudes = vec![ZERO; layout.dim()];
        amplitudes[flat] = ONE;
        Ok(Self { layout, amplitudes })
    }

    /// Equal-weight superposition on `label`, every other factor in index 0.
    pub fn uniform_superposition(layout: SpaceLayout, label: &str) -> Result<Self> {
        let pos = layout
            .position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let d = layout.factors[pos].1;
        let stride = layout.strides()[pos];
        let weight = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        let mut amplitudes = vec![ZERO; layout.dim()];
        for j in 0..d {
            amplitudes[j * stride] = weight;
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, indices: &[usize]) -> Result<C64> {
        Ok(self.amplitudes[self.layout.flat_index(indices)?])
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_layout(&self.layout, &other.layout)?;
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }

    /// `|⟨self|other⟩|²`; insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let layout = self.layout.tensor(&other.layout)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(StateVector { layout, amplitudes })
    }

    /// Contracts the factor of `bra` (a single-factor state) with `⟨bra|`,
    /// returning the unnormalized amplitudes over the remaining factors.
    pub fn partial_overlap(&self, bra: &StateVector) -> Result<(SpaceLayout, Vec<C64>)> {
        contract_factor(&self.layout, &self.amplitudes, bra)
    }
}

fn contract_factor(layout: &SpaceLayout, amplitudes: &[C64], bra: &StateVector) -> Result<(SpaceLayout, Vec<C64>)> {
    if bra.layout.factors.len() != 1 {
        return Err(Error::InvalidLayout("partial overlap needs a single-factor bra".into()));
    }
    let label = bra.layout.factors[0].0.as_str();
    let rest = layout.without(&[label])?;
    let idx = LocalIndex::new(layout, &bra.layout)?;
    let out = idx
        .rest
        .iter()
        .map(|&r| {
            idx.sub
                .iter()
                .zip(&bra.amplitudes)
                .map(|(&s, b)| b.conj() * amplitudes[r + s])
                .sum()
        })
        .collect();
    Ok((rest, out))
}

/// `tr[(𝟙 ⊗ |b₁⟩⟨b₁| ⊗ |b₂⟩⟨b₂| ⊗ …) |ψ⟩⟨ψ|]` for single-factor states `b_i`
/// on distinct factors of `state`, with identity on every other factor.
/// At least one factor of `state` must remain uncontracted.
pub fn projection_weight(state: &StateVector, bras: &[&StateVector]) -> Result<f64> {
    let mut layout = state.layout.clone();
    let mut amplitudes = state.amplitudes.clone();
    for bra in bras {
        (layout, amplitudes) = contract_factor(&layout, &amplitudes, bra)?;
    }
    Ok(norm_sqr(&amplitudes))
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(Vec<C64>),
    /// Column `c` maps to `phases[c] * e_{targets[c]}`.
    PhasedPermutation {
        targets: Vec<usize>,
        phases: Vec<C64>,
    },
    /// Projector onto a set of computational basis vectors.
    BasisProjector {
        indices: Vec<usize>,
    },
    /// `Σ_b |b⟩⟨b|` over an orthonormal set, or its complement `𝟙 − Σ_b |b⟩⟨b|`.
    Span {
        basis: Vec<Vec<C64>>,
        complement: bool,
    },
    /// `Σ_i P_i ⊗ W_i` with `P_i` the outcomes of `control`.
    Controlled {
        control: ProjectiveMeasurement,
        targets: Vec<Operator>,
    },
    /// An operator on a sub-layout, identity elsewhere.
    Embedded(Box<Operator>),
}

/// Linear operator on the space of a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: SpaceLayout,
    repr: Repr,
}

impl Operator {
    pub fn identity(layout: SpaceLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            repr: Repr::PhasedPermutation {
                targets: (0..n).collect(),
                phases: vec![ONE; n],
            },
        }
    }

    /// Row-major `dim × dim` matrix.
    pub fn from_dense(layout: SpaceLayout, matrix: Vec<C64>) -> Result<Self> {
        let n = layout.dim();
        if matrix.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: matrix.len(),
            });
        }
        Ok(Self {
            layout,
            repr: Repr::Dense(matrix),
        })
    }

    pub fn from_real(layout: SpaceLayout, matrix: &[f64]) -> Result<Self> {
        Self::from_dense(layout, matrix.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Operator sending basis vector `c` to `phases[c] · e_{targets[c]}`;
    /// `targets` must be a permutation.
    pub fn phased_permutation(layout: SpaceLayout, targets: Vec<usize>, phases: Vec<C64>) -> Result<Self> {
        let n = layout.dim();
        if targets.len() != n || phases.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: targets.len().min(phases.len()),
            });
        }
        let mut seen = vec![false; n];
        for &t in &targets {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidMeasurement(format!(
                    "targets are not a permutation of 0..{n}"
                )));
            }
        }
        Ok(Self {
            layout,
            repr: Repr::PhasedPermutation { targets, phases },
        })
    }

    /// Projector onto the computational basis vectors with the given flat indices.
    pub fn basis_projector(layout: SpaceLayout, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = layout.dim();
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                label: layout.to_string(),
                index: bad,
                dim: n,
            });
        }
        Ok(Self {
            layout,
            repr: Repr::BasisProjector { indices },
        })
    }

    /// Rank-one projector `|ψ⟩⟨ψ|`.
    pub fn projector_onto(state: &StateVector) -> Self {
        Self {
            layout: state.layout.clone(),
            repr: Repr::Span {
                basis: vec![state.amplitudes.clone()],
                complement: false,
            },
        }
    }

    /// Projector onto the span of orthonormal states.
    pub fn span_projector(layout: SpaceLayout, basis: &[StateVector]) -> Result<Self> {
        for b in basis {
            check_layout(&layout, &b.layout)?;
        }
        let basis: Vec<Vec<C64>> = basis.iter().map(|b| b.amplitudes.clone()).collect();
        let op = Self {
            layout,
            repr: Repr::Span {
                basis,
                complement: false,
            },
        };
        let defect = op.projector_defect();
        if defect > TOL {
            return Err(Error::NotProjector(defect));
        }
        Ok(op)
    }

    /// `Σ_i P_i ⊗ W_i`: applies `targets[i]` on its own factors wherever the
    /// control factors are in the range of the i-th outcome of `control`.
    pub fn controlled(control: ProjectiveMeasurement, targets: Vec<Operator>) -> Result<Self> {
        if targets.len() != control.outcomes.len() || targets.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: control.outcomes.len(),
                found: targets.len(),
            });
        }
        let target_layout = targets[0].layout.clone();
        for t in &targets {
            check_layout(&target_layout, &t.layout)?;
        }
        let layout = control.layout.tensor(&target_layout)?;
        Ok(Self {
            layout,
            repr: Repr::Controlled { control, targets },
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// `𝟙 − self`.
    pub fn complement(&self) -> Operator {
        let repr = match &self.repr {
            Repr::Span { basis, complement } => Repr::Span {
                basis: basis.clone(),
                complement: !complement,
            },
            Repr::BasisProjector { indices } => {
                let mut rest = Vec::with_capacity(self.dim() - indices.len());
                let mut it = indices.iter().peekable();
                for i in 0..self.dim() {
                    if it.peek() == Some(&&i) {
                        it.next();
                    } else {
                        rest.push(i);
                    }
                }
                Repr::BasisProjector { indices: rest }
            }
            _ => {
                let n = self.dim();
                let mut m = self.matrix();
                m.iter_mut().for_each(|x| *x = -*x);
                for i in 0..n {
                    m[i * n + i] += ONE;
                }
                Repr::Dense(m)
            }
        };
        Operator {
            layout: self.layout.clone(),
            repr,
        }
    }

    /// Acts as `self` on the factors of its own layout and as identity on the
    /// remaining factors of `full`.
    pub fn embed(&self, full: &SpaceLayout) -> Result<Operator> {
        if &self.layout == full {
            return Ok(self.clone());
        }
        LocalIndex::new(full, &self.layout)?;
        let inner = match &self.repr {
            Repr::Embedded(inner) => inner.clone(),
            _ => Box::new(self.clone()),
        };
        Ok(Operator {
            layout: full.clone(),
            repr: Repr::Embedded(inner),
        })
    }

    pub fn adjoint(&self) -> Operator {
        let repr = match &self.repr {
            Repr::Dense(m) => {
                let n = self.dim();
                let mut out = vec![ZERO; n * n];
                for r in 0..n {
                    for c in 0..n {
                        out[c * n + r] = m[r * n + c].conj();
                    }
                }
                Repr::Dense(out)
            }
            Repr::PhasedPermutation { targets, phases } => {
                let n = targets.len();
                let mut inv = vec![0; n];
                let mut inv_phases = vec![ZERO; n];
                for (c, (&t, p)) in targets.iter().zip(phases).enumerate() {
                    inv[t] = c;
                    inv_phases[t] = p.conj();
                }
                Repr::PhasedPermutation {
                    targets: inv,
                    phases: inv_phases,
                }
            }
            Repr::BasisProjector { .. } | Repr::Span { .. } => self.repr.clone(),
            Repr::Controlled { control, targets } => Repr::Controlled {
                control: control.clone(),
                targets: targets.iter().map(Operator::adjoint).collect(),
            },
            Repr::Embedded(inner) => Repr::Embedded(Box::new(inner.adjoint())),
        };
        Operator {
            layout: self.layout.clone(),
            repr,
        }
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.dim());
        match &self.repr {
            Repr::Dense(m) => m
                .chunks_exact(v.len())
                .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect(),
            Repr::PhasedPermutation { targets, phases } => {
                let mut out = vec![ZERO; v.len()];
                for ((&t, p), x) in targets.iter().zip(phases).zip(v) {
                    out[t] = p * x;
                }
                out
            }
            Repr::BasisProjector { indices } => {
                let mut out = vec![ZERO; v.len()];
                for &i in indices {
                    out[i] = v[i];
                }
                out
            }
            Repr::Span { basis, complement } => {
                let mut out = if *complement { v.to_vec() } else { vec![ZERO; v.len()] };
                let sign = if *complement { -1.0 } else { 1.0 };
                for b in basis {
                    let c = inner(b, v) * sign;
                    out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
                }
                out
            }
            Repr::Controlled { control, targets } => {
                let mut out = vec![ZERO; v.len()];
                for ((_, p), w) in control.outcomes.iter().zip(targets) {
                    let moved = apply_local(&self.layout, w, v, Operator::apply_vec);
                    let branch = apply_local(&self.layout, p, &moved, Operator::apply_vec);
                    out.iter_mut().zip(branch).for_each(|(o, x)| *o += x);
                }
                out
            }
            Repr::Embedded(inner) => apply_local(&self.layout, inner, v, Operator::apply_vec),
        }
    }

    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64> {
        match &self.repr {
            Repr::Dense(m) => {
                let n = v.len();
                let mut out = vec![ZERO; n];
                for (r, row) in m.chunks_exact(n).enumerate() {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a.conj() * v[r];
                    }
                }
                out
            }
            Repr::PhasedPermutation { targets, phases } => {
                targets.iter().zip(phases).map(|(&t, p)| p.conj() * v[t]).collect()
            }
            Repr::BasisProjector { .. } | Repr::Span { .. } => self.apply_vec(v),
            Repr::Controlled { control, targets } => {
                let mut out = vec![ZERO; v.len()];
                for ((_, p), w) in control.outcomes.iter().zip(targets) {
                    let projected = apply_local(&self.layout, p, v, Operator::apply_vec);
                    let branch = apply_local(&self.layout, w, &projected, Operator::apply_adjoint_vec);
                    out.iter_mut().zip(branch).for_each(|(o, x)| *o += x);
                }
                out
            }
            Repr::Embedded(inner) => apply_local(&self.layout, inner, v, Operator::apply_adjoint_vec),
        }
    }

    /// `⟨v|self|v⟩`.
    fn expectation_vec(&self, v: &[C64]) -> C64 {
        match &self.repr {
            Repr::BasisProjector { indices } => C64::new(indices.iter().map(|&i| v[i].norm_sqr()).sum(), 0.0),
            Repr::Span { basis, complement } => {
                let inside: f64 = basis.iter().map(|b| inner(b, v).norm_sqr()).sum();
                C64::new(if *complement { norm_sqr(v) - inside } else { inside }, 0.0)
            }
            _ => inner(v, &self.apply_vec(v)),
        }
    }

    /// Raw matrix-vector product, without renormalization.
    pub fn act(&self, state: &StateVector) -> Result<Vec<C64>> {
        check_layout(&self.layout, &state.layout)?;
        Ok(self.apply_vec(&state.amplitudes))
    }

    /// Applies a norm-preserving operator. A result whose norm drifts from 1
    /// by more than [`TOL`] is rejected.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let amplitudes = self.act(state)?;
        StateVector::new(self.layout.clone(), amplitudes)
    }

    /// `⟨ψ|self|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<C64> {
        check_layout(&self.layout, &state.layout)?;
        Ok(self.expectation_vec(&state.amplitudes))
    }

    /// Dense row-major matrix.
    pub fn matrix(&self) -> Vec<C64> {
        if let Repr::Dense(m) = &self.repr {
            return m.clone();
        }
        let n = self.dim();
        let mut m = vec![ZERO; n * n];
        let mut e = vec![ZERO; n];
        for c in 0..n {
            e[c] = ONE;
            for (r, x) in self.apply_vec(&e).into_iter().enumerate() {
                m[r * n + c] = x;
            }
            e[c] = ZERO;
        }
        m
    }

    /// Max-abs entry of `self† self − 𝟙`.
    pub fn unitarity_defect(&self) -> f64 {
        match &self.repr {
            Repr::PhasedPermutation { phases, .. } => {
                phases.iter().map(|p| (p.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
            }
            Repr::Controlled { control, targets } => targets.iter().map(Operator::unitarity_defect).fold(
                control.completeness_defect().max(control.orthogonality_defect()),
                f64::max,
            ),
            Repr::Embedded(inner) => inner.unitarity_defect(),
            _ => max_abs_over_columns(self.dim(), |c, e| {
                max_abs_minus_unit(&self.apply_adjoint_vec(&self.apply_vec(e)), c)
            }),
        }
    }

    /// Max-abs entry of `P − P†` and `P² − P`. Spans report the max-abs entry
    /// of the Gram matrix minus identity, which vanishes exactly when the span
    /// operator is a projector.
    pub fn projector_defect(&self) -> f64 {
        match &self.repr {
            Repr::BasisProjector { .. } => 0.0,
            Repr::Span { basis, .. } => {
                let mut worst = 0.0f64;
                for (i, a) in basis.iter().enumerate() {
                    for (j, b) in basis.iter().enumerate() {
                        let target = if i == j { ONE } else { ZERO };
                        worst = worst.max((inner(a, b) - target).norm());
                    }
                }
                worst
            }
            Repr::Embedded(inner) => inner.projector_defect(),
            _ => max_abs_over_columns(self.dim(), |_, e| {
                let pe = self.apply_vec(e);
                let hermiticity = max_abs_diff(&pe, &self.apply_adjoint_vec(e));
                let idempotence = max_abs_diff(&self.apply_vec(&pe), &pe);
                hermiticity.max(idempotence)
            }),
        }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.projector_defect() <= tol
    }

    /// The orthonormal basis of a span projector and whether it is complemented.
    fn span_parts(&self) -> Option<(&[Vec<C64>], bool)> {
        match &self.repr {
            Repr::Span { basis, complement } => Some((basis, *complement)),
            _ => None,
        }
    }

    fn basis_indices(&self) -> Option<&[usize]> {
        match &self.repr {
            Repr::BasisProjector { indices } => Some(indices),
            _ => None,
        }
    }
}

/// Labeled complete set of mutually orthogonal projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveMeasurement {
    layout: SpaceLayout,
    outcomes: Vec<(String, Operator)>,
}

impl ProjectiveMeasurement {
    /// Validates projector, orthogonality and completeness conditions within [`TOL`].
    pub fn new(layout: SpaceLayout, outcomes: Vec<(String, Operator)>) -> Result<Self> {
        let m = Self::new_unchecked(layout, outcomes)?;
        for (label, p) in &m.outcomes {
            let defect = p.projector_defect();
            if defect > TOL {
                return Err(Error::InvalidMeasurement(format!(
                    "`{label}` is not a projector (defect {defect:e})"
                )));
            }
        }
        let defect = m.orthogonality_defect();
        if defect > TOL {
            return Err(Error::InvalidMeasurement(format!(
                "projectors not orthogonal (defect {defect:e})"
            )));
        }
        let defect = m.completeness_defect();
        if defect > TOL {
            return Err(Error::InvalidMeasurement(format!(
                "projectors do not sum to identity (defect {defect:e})"
            )));
        }
        Ok(m)
    }

    /// Structural checks only: labels distinct and layouts consistent.
    pub fn new_unchecked(layout: SpaceLayout, outcomes: Vec<(String, Operator)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidMeasurement("no outcomes".into()));
        }
        for (i, (label, p)) in outcomes.iter().enumerate() {
            check_layout(&layout, &p.layout)?;
            if outcomes[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::InvalidMeasurement(format!("duplicate outcome label `{label}`")));
            }
        }
        Ok(Self { layout, outcomes })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn outcomes(&self) -> &[(String, Operator)] {
        &self.outcomes
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.outcomes.iter().map(|(l, _)| l.as_str())
    }

    pub fn projector(&self, label: &str) -> Result<&Operator> {
        self.outcomes
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::UnknownOutcome(label.to_string()))
    }

    /// The same measurement acting on a larger layout.
    pub fn embed(&self, full: &SpaceLayout) -> Result<ProjectiveMeasurement> {
        let outcomes = self
            .outcomes
            .iter()
            .map(|(l, p)| Ok((l.clone(), p.embed(full)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProjectiveMeasurement {
            layout: full.clone(),
            outcomes,
        })
    }

    /// `{P, 𝟙 − P}` over the same span.
    fn span_pair(&self) -> Option<f64> {
        if let [(_, a), (_, b)] = self.outcomes.as_slice() {
            let (ba, ca) = a.span_parts()?;
            let (bb, cb) = b.span_parts()?;
            if ca != cb && ba == bb {
                return Some(a.projector_defect());
            }
        }
        None
    }

    fn basis_cover(&self) -> Option<Vec<usize>> {
        let mut cover = vec![0usize; self.layout.dim()];
        for (_, p) in &self.outcomes {
            for &i in p.basis_indices()? {
                cover[i] += 1;
            }
        }
        Some(cover)
    }

    /// Max-abs entry of `Σ_i P_i − 𝟙`.
    pub fn completeness_defect(&self) -> f64 {
        if let Some(cover) = self.basis_cover() {
            return cover.iter().map(|&c| (c as f64 - 1.0).abs()).fold(0.0, f64::max);
        }
        if self.span_pair().is_some() {
            return 0.0;
        }
        max_abs_over_columns(self.layout.dim(), |c, e| {
            let mut sum = vec![ZERO; e.len()];
            for (_, p) in &self.outcomes {
                sum.iter_mut().zip(p.apply_vec(e)).for_each(|(s, x)| *s += x);
            }
            max_abs_minus_unit(&sum, c)
        })
    }

    /// Max-abs entry of `P_i P_j` over distinct pairs.
    pub fn orthogonality_defect(&self) -> f64 {
        if let Some(cover) = self.basis_cover() {
            return if cover.iter().any(|&c| c > 1) { 1.0 } else { 0.0 };
        }
        if let Some(gram_defect) = self.span_pair() {
            return gram_defect;
        }
        max_abs_over_columns(self.layout.dim(), |_, e| {
            let columns: Vec<Vec<C64>> = self.outcomes.iter().map(|(_, p)| p.apply_vec(e)).collect();
            let mut worst = 0.0f64;
            for (i, (_, p)) in self.outcomes.iter().enumerate() {
                for (j, col) in columns.iter().enumerate() {
                    if i != j {
                        worst = worst.max(p.apply_vec(col).iter().map(|x| x.norm()).fold(0.0, f64::max));
                    }
                }
            }
            worst
        })
    }
}

/// Computational basis vector; see [`StateVector::basis`].
pub fn make_basis_state(layout: SpaceLayout, indices: &[usize]) -> Result<StateVector> {
    StateVector::basis(layout, indices)
}

pub fn uniform_superposition(layout: SpaceLayout, label: &str) -> Result<StateVector> {
    StateVector::uniform_superposition(layout, label)
}

pub fn apply(op: &Operator, state: &StateVector) -> Result<StateVector> {
    op.apply(state)
}

pub fn embed(op: &Operator, full: &SpaceLayout) -> Result<Operator> {
    op.embed(full)
}

/// Born-rule table `p_i = ⟨ψ|P_i|ψ⟩`.
///
/// Values within [`TOL`] outside `[0, 1]` are clamped; anything further out,
/// or a non-negligible imaginary part, is an error.
pub fn born_probabilities(state: &StateVector, m: &ProjectiveMeasurement) -> Result<PredictionTable> {
    check_layout(&m.layout, &state.layout)?;
    let mut entries = Vec::with_capacity(m.outcomes.len());
    for (label, p) in &m.outcomes {
        let value = p.expectation_vec(&state.amplitudes);
        if value.im.abs() > TOL || value.re < -TOL || value.re > 1.0 + TOL || value.re.is_nan() {
            return Err(Error::InvalidProbability {
                label: label.clone(),
                value: value.re,
            });
        }
        entries.push((label.clone(), value.re.clamp(0.0, 1.0)));
    }
    PredictionTable::new(entries, Provenance::Born)
}

/// Inverse-CDF draw of one label from `table`.
pub fn sample_outcome<R: Rng + ?Sized>(table: &PredictionTable, rng: &mut R) -> Result<String> {
    let entries = table.entries();
    let total: f64 = entries.iter().map(|e| e.probability).sum();
    if entries.is_empty() || (total - 1.0).abs() > SUM_TOL {
        return Err(Error::MalformedTable(format!("probabilities sum to {total}")));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_supported = None;
    for e in entries {
        if e.probability > 0.0 {
            acc += e.probability;
            last_supported = Some(&e.label);
            if u < acc {
                return Ok(e.label.clone());
            }
        }
    }
    // u landed in the rounding gap between the cumulative sum and 1.
    last_supported
        .cloned()
        .ok_or_else(|| Error::MalformedTable("no outcome has positive probability".into()))
}

/// Measurement-update rule: `Pψ / ‖Pψ‖`.
pub fn collapse(state: &StateVector, projector: &Operator) -> Result<StateVector> {
    let projected = projector.act(state)?;
    let prob = norm_sqr(&projected);
    if prob.is_nan() || prob <= MIN_PROB {
        return Err(Error::ImpossibleOutcome(format!("projection weight {prob:e}")));
    }
    StateVector::normalized(state.layout.clone(), projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(f: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(f.iter().map(|&(l, d)| (l, d))).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn layout_rejects_bad_factors() {
        assert!(SpaceLayout::new([("S", 2), ("S", 3)]).is_err());
        assert!(SpaceLayout::new([("S", 0)]).is_err());
        assert!(SpaceLayout::new(Vec::<(String, usize)>::new()).is_err());
        let l = layout(&[("S", 2), ("F", 3), ("2", 4)]);
        assert_eq!(l.dim(), 24);
        assert_eq!(l.strides(), vec![12, 4, 1]);
        assert_eq!(l.multi_index(l.flat_index(&[1, 2, 3]).unwrap()), vec![1, 2, 3]);
    }

    #[test]
    fn basis_states_are_row_major() {
        let s = make_basis_state(layout(&[("S", 2)]), &[0]).unwrap();
        assert_eq!(s.amplitudes(), &[ONE, ZERO]);
        let s = make_basis_state(layout(&[("S", 2), ("F", 3)]), &[1, 0]).unwrap();
        assert_eq!(s.amplitudes().iter().position(|a| *a == ONE), Some(3));
        let s = make_basis_state(layout(&[("S", 4)]), &[3]).unwrap();
        assert_eq!(s.amplitudes()[3], ONE);
        assert!(matches!(
            make_basis_state(layout(&[("S", 2)]), &[2]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn uniform_superposition_amplitudes() {
        let s = uniform_superposition(layout(&[("S", 2)]), "S").unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(s.amplitudes().iter().all(|a| (a - c(h)).norm() < 1e-15));
        let s = uniform_superposition(layout(&[("S", 1)]), "S").unwrap();
        assert_eq!(s.amplitudes(), &[ONE]);
        let s = uniform_superposition(layout(&[("S", 4)]), "S").unwrap();
        assert!(s.amplitudes().iter().all(|a| (a - c(0.5)).norm() < 1e-15));
        let s = uniform_superposition(layout(&[("S", 3), ("F", 4)]), "S").unwrap();
        assert!((s.norm() - 1.0).abs() < TOL);
        assert_eq!(s.amplitude(&[2, 0]).unwrap(), c(1.0 / 3f64.sqrt()));
        assert!(matches!(
            uniform_superposition(layout(&[("S", 2)]), "X"),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn embed_matches_kronecker_expansion() {
        let full = layout(&[("S", 2), ("F", 2)]);
        let id = Operator::identity(layout(&[("S", 2)])).embed(&full).unwrap();
        assert_eq!(id.matrix(), Operator::identity(full.clone()).matrix());

        let ready = Operator::basis_projector(layout(&[("F", 2)]), [0]).unwrap();
        let m = ready.embed(&full).unwrap().matrix();
        let diag: Vec<C64> = (0..4).map(|i| m[i * 4 + i]).collect();
        assert_eq!(diag, vec![ONE, ZERO, ONE, ZERO]);
        assert_eq!(m.iter().filter(|x| **x != ZERO).count(), 2);

        let x = Operator::from_real(layout(&[("S", 2)]), &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let xs = x.embed(&full).unwrap().matrix();
        #[rustfmt::skip]
        let expected = [
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        ];
        assert_eq!(xs, expected.iter().map(|&v| c(v)).collect::<Vec<_>>());
        assert!(matches!(x.embed(&layout(&[("F", 2)])), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn embed_permutes_non_adjacent_factors() {
        // Operator on (B, A) embedded into (A, X, B).
        let full = layout(&[("A", 2), ("X", 3), ("B", 2)]);
        let sub = layout(&[("B", 2), ("A", 2)]);
        let vals: Vec<C64> = (0..16).map(|i| C64::new(i as f64, (i * i) as f64)).collect();
        let op = Operator::from_dense(sub, vals.clone()).unwrap();
        let m = op.embed(&full).unwrap().matrix();
        let n = full.dim();
        for r in 0..n {
            for col in 0..n {
                let (ri, ci) = (full.multi_index(r), full.multi_index(col));
                let expected = if ri[1] == ci[1] {
                    vals[(ri[2] * 2 + ri[0]) * 4 + ci[2] * 2 + ci[0]]
                } else {
                    ZERO
                };
                assert_eq!(m[r * n + col], expected, "entry ({r}, {col})");
            }
        }
    }

    #[test]
    fn apply_checks_layout_and_norm() {
        let l = layout(&[("S", 2)]);
        let psi = uniform_superposition(l.clone(), "S").unwrap();
        assert_eq!(apply(&Operator::identity(l.clone()), &psi).unwrap(), psi);
        let other = make_basis_state(layout(&[("F", 2)]), &[0]).unwrap();
        assert!(matches!(
            apply(&Operator::identity(l.clone()), &other),
            Err(Error::LayoutMismatch { .. })
        ));
        let half = Operator::basis_projector(l, [0]).unwrap();
        assert!(matches!(apply(&half, &psi), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn born_probabilities_of_computational_measurement() {
        let l = layout(&[("S", 2)]);
        let m = ProjectiveMeasurement::new(
            l.clone(),
            vec![
                ("up".into(), Operator::basis_projector(l.clone(), [0]).unwrap()),
                ("down".into(), Operator::basis_projector(l.clone(), [1]).unwrap()),
            ],
        )
        .unwrap();
        let t = born_probabilities(&uniform_superposition(l.clone(), "S").unwrap(), &m).unwrap();
        assert!((t.probability("up").unwrap() - 0.5).abs() < TOL);
        let t = born_probabilities(&make_basis_state(l, &[1]).unwrap(), &m).unwrap();
        assert_eq!(t.probability("down").unwrap(), 1.0);
        assert_eq!(t.probability("up").unwrap(), 0.0);
    }

    #[test]
    fn measurement_validation_rejects_overlaps_and_gaps() {
        let l = layout(&[("S", 3)]);
        let p = |idx: &[usize]| Operator::basis_projector(l.clone(), idx.iter().copied()).unwrap();
        assert!(
            ProjectiveMeasurement::new(l.clone(), vec![("a".into(), p(&[0, 1])), ("b".into(), p(&[1, 2]))]).is_err()
        );
        assert!(ProjectiveMeasurement::new(l.clone(), vec![("a".into(), p(&[0])), ("b".into(), p(&[1]))]).is_err());
        assert!(ProjectiveMeasurement::new(l.clone(), vec![("a".into(), p(&[0])), ("a".into(), p(&[1, 2]))]).is_err());
        let dense = Operator::from_real(l.clone(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(ProjectiveMeasurement::new(
            l.clone(),
            vec![("a".into(), dense.clone()), ("b".into(), dense.complement())]
        )
        .is_err());
    }

    #[test]
    fn collapse_rules() {
        let l = layout(&[("S", 2), ("F", 2)]);
        let bell = StateVector::normalized(l.clone(), vec![ONE, ZERO, ZERO, ONE]).unwrap();
        let up = Operator::basis_projector(layout(&[("S", 2)]), [0])
            .unwrap()
            .embed(&l)
            .unwrap();
        let post = collapse(&bell, &up).unwrap();
        let expected = make_basis_state(l.clone(), &[0, 0]).unwrap();
        assert!((post.fidelity(&expected).unwrap() - 1.0).abs() < TOL);
        let again = collapse(&post, &up).unwrap();
        assert!((again.fidelity(&post).unwrap() - 1.0).abs() < TOL);

        let eigen = collapse(&bell, &Operator::projector_onto(&bell)).unwrap();
        assert!((eigen.fidelity(&bell).unwrap() - 1.0).abs() < TOL);

        let orthogonal = Operator::projector_onto(&bell).complement();
        assert!(matches!(collapse(&bell, &orthogonal), Err(Error::ImpossibleOutcome(_))));
    }

    #[test]
    fn sampling_degenerate_and_single_outcome() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = PredictionTable::new(vec![("+".into(), 1.0), ("-".into(), 0.0)], Provenance::Born).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_outcome(&t, &mut rng).unwrap(), "+");
        }
        let single = PredictionTable::new(vec![("only".into(), 1.0)], Provenance::Born).unwrap();
        assert_eq!(sample_outcome(&single, &mut rng).unwrap(), "only");
    }

    #[test]
    fn structured_forms_agree_with_dense() {
        let l = layout(&[("S", 2), ("F", 3)]);
        let psi = StateVector::normalized(
            l.clone(),
            (0..6).map(|i| C64::new(i as f64 - 2.0, 0.5 * i as f64)).collect(),
        )
        .unwrap();
        let span = Operator::projector_onto(&psi);
        let dense = Operator::from_dense(l.clone(), span.matrix()).unwrap();
        assert!(max_abs_diff(&span.complement().matrix(), &dense.complement().matrix()) < 1e-15);
        assert!(dense.projector_defect() < 1e-15);
        let perm = Operator::phased_permutation(
            l.clone(),
            vec![1, 2, 0, 4, 5, 3],
            (0..6).map(|i| C64::from_polar(1.0, i as f64)).collect(),
        )
        .unwrap();
        let pd = Operator::from_dense(l.clone(), perm.matrix()).unwrap();
        assert!(max_abs_diff(&perm.adjoint().matrix(), &pd.adjoint().matrix()) == 0.0);
        assert!(perm.unitarity_defect() < 1e-15 && pd.unitarity_defect() < 1e-15);
        assert!(Operator::phased_permutation(l, vec![0, 0, 1, 2, 3, 4], vec![ONE; 6]).is_err());
    }

    #[test]
    fn partial_overlap_contracts_one_factor() {
        let l = layout(&[("S", 2), ("F", 3)]);
        let psi = StateVector::normalized(l, (0..6).map(|i| c(i as f64 + 1.0)).collect()).unwrap();
        let bra = make_basis_state(layout(&[("F", 3)]), &[2]).unwrap();
        let (rest, amps) = psi.partial_overlap(&bra).unwrap();
        assert_eq!(rest, layout(&[("S", 2)]));
        assert_eq!(amps, vec![psi.amplitudes()[2], psi.amplitudes()[5]]);
    }
}
