//! Weak values, two-state vectors and per-segment trace maps.
//!
//! The weak value of `O` between preselection `|ψ_i⟩` and postselection
//! `⟨ψ_f|` is `⟨ψ_f|O|ψ_i⟩ / ⟨ψ_f|ψ_i⟩`. Inside a circuit both states are
//! carried to the same cut: the input forward, the detector's final state
//! backward through the adjoint layers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::circuit::Scenario;
use crate::error::{Error, Result};
use crate::hilbert::{ModeLabel, Operator, StateVector, C64};

/// Below this `|⟨ψ_f|ψ_i⟩|` the weak value is reported as undefined rather
/// than as an (arbitrarily) large number.
pub const ORTHOGONALITY_EPS: f64 = 1e-10;

/// Tolerance for the internal-operator check of compound weak values.
const INTERNAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValueResult {
    #[serde(with = "crate::serde_complex")]
    pub value: C64,
    /// `⟨ψ_f|O|ψ_i⟩`
    #[serde(with = "crate::serde_complex")]
    pub numerator: C64,
    /// `⟨ψ_f|ψ_i⟩`
    #[serde(with = "crate::serde_complex")]
    pub denominator: C64,
    pub postselection_probability: f64,
}

impl WeakValueResult {
    fn from_parts(numerator: C64, denominator: C64, eps: f64) -> Result<Self> {
        let overlap = denominator.norm();
        if !(overlap > eps) {
            return Err(Error::OrthogonalPostselection { overlap });
        }
        Ok(Self {
            value: numerator / denominator,
            numerator,
            denominator,
            postselection_probability: denominator.norm_sqr().min(1.0),
        })
    }
}

pub fn weak_value(op: &Operator, pre: &StateVector, post: &StateVector) -> Result<WeakValueResult> {
    weak_value_with_eps(op, pre, post, ORTHOGONALITY_EPS)
}

pub fn weak_value_with_eps(
    op: &Operator,
    pre: &StateVector,
    post: &StateVector,
    eps: f64,
) -> Result<WeakValueResult> {
    let numerator = op.matrix_element(post, pre)?;
    let denominator = post.inner(pre)?;
    WeakValueResult::from_parts(numerator, denominator, eps)
}

/// Forward and backward states at one cut of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateVector {
    pub cut: usize,
    pub forward: StateVector,
    pub backward: StateVector,
}

impl TwoStateVector {
    pub fn weak_value(&self, op: &Operator) -> Result<WeakValueResult> {
        weak_value(op, &self.forward, &self.backward)
    }

    /// `⟨backward|Π_modes|forward⟩`, the conditional amplitude on `modes`.
    pub fn conditional_amplitude(&self, modes: &[ModeLabel]) -> Result<C64> {
        modes.iter().try_fold(C64::new(0.0, 0.0), |acc, m| {
            Ok(acc + self.backward.amplitude(m)?.conj() * self.forward.amplitude(m)?)
        })
    }
}

pub fn two_state_at_cut(sc: &Scenario, detector: &str, cut: usize) -> Result<TwoStateVector> {
    let post = sc.postselection(detector)?;
    Ok(TwoStateVector {
        cut,
        forward: sc.circuit.propagate_forward(&sc.input, cut)?,
        backward: sc.circuit.propagate_backward(post, cut)?,
    })
}

/// Weak value of `op` evaluated at `cut`.
pub fn weak_value_at(sc: &Scenario, detector: &str, cut: usize, op: &Operator) -> Result<WeakValueResult> {
    two_state_at_cut(sc, detector, cut)?.weak_value(op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    fn of(value: C64) -> Self {
        const ZERO_TOL: f64 = 1e-12;
        if value.re > ZERO_TOL {
            Sign::Positive
        } else if value.re < -ZERO_TOL {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub name: String,
    pub cut: usize,
    pub modes: Vec<String>,
    #[serde(with = "crate::serde_complex::vec")]
    pub forward: Vec<C64>,
    #[serde(with = "crate::serde_complex::vec")]
    pub backward: Vec<C64>,
    /// `Σ conj(backward) · forward` over the segment's modes.
    #[serde(with = "crate::serde_complex")]
    pub conditional: C64,
    #[serde(with = "crate::serde_complex")]
    pub weak_value: C64,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTraceMap {
    pub detector: String,
    #[serde(with = "crate::serde_complex")]
    pub denominator: C64,
    pub segments: Vec<SegmentTrace>,
}

impl SegmentTraceMap {
    pub fn get(&self, name: &str) -> Option<&SegmentTrace> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Sum of the weak values of every segment at `cut`.
    pub fn cut_sum(&self, cut: usize) -> C64 {
        self.segments
            .iter()
            .filter(|s| s.cut == cut)
            .map(|s| s.weak_value)
            .sum()
    }
}

pub fn segment_trace_map(sc: &Scenario, detector: &str) -> Result<SegmentTraceMap> {
    let post = sc.postselection(detector)?;
    let denominator = post.inner(&sc.circuit.propagate_forward(&sc.input, sc.circuit.num_layers())?)?;
    if !(denominator.norm() > ORTHOGONALITY_EPS) {
        return Err(Error::OrthogonalPostselection {
            overlap: denominator.norm(),
        });
    }
    let mut segments = Vec::with_capacity(sc.circuit.segments().len());
    for seg in sc.circuit.segments() {
        let tsv = two_state_at_cut(sc, detector, seg.cut)?;
        let modes = seg.port.require_modes(sc.circuit.basis())?;
        let forward = modes
            .iter()
            .map(|m| tsv.forward.amplitude(m))
            .collect::<Result<Vec<_>>>()?;
        let backward = modes
            .iter()
            .map(|m| tsv.backward.amplitude(m))
            .collect::<Result<Vec<_>>>()?;
        let conditional = tsv.conditional_amplitude(&modes)?;
        let weak_value = conditional / denominator;
        segments.push(SegmentTrace {
            name: seg.name.clone(),
            cut: seg.cut,
            modes: modes.iter().map(ToString::to_string).collect(),
            forward,
            backward,
            conditional,
            weak_value,
            sign: Sign::of(weak_value),
        });
    }
    Ok(SegmentTraceMap {
        detector: detector.to_owned(),
        denominator,
        segments,
    })
}

/// Weak value of the projector onto the union of `segments`.
///
/// Segments at different cuts are evaluated at their own cut; the
/// denominator `⟨ψ_f|ψ_i⟩` is the same at every cut, so numerators add.
pub fn coarse_grained_weak_value<S: AsRef<str>>(
    segments: &[S],
    sc: &Scenario,
    detector: &str,
) -> Result<WeakValueResult> {
    compound_weak_value(&Operator::identity(sc.circuit.basis().clone()), segments, sc, detector)
}

/// Weak value of `property_op · Π_region`, where the region is the union of
/// the named segments and `property_op` acts on polarization/tags only.
pub fn compound_weak_value<S: AsRef<str>>(
    property_op: &Operator,
    region: &[S],
    sc: &Scenario,
    detector: &str,
) -> Result<WeakValueResult> {
    if property_op.basis() != sc.circuit.basis() {
        return Err(Error::BasisMismatch(
            "property operator is not on the scenario basis".into(),
        ));
    }
    if !property_op.is_internal(INTERNAL_TOL) {
        return Err(Error::NotInternal);
    }
    let names: BTreeSet<&str> = region.iter().map(AsRef::as_ref).collect();
    let mut by_cut: std::collections::BTreeMap<usize, Vec<ModeLabel>> = Default::default();
    for name in names {
        let seg = sc.circuit.segment(name)?;
        let modes = seg.port.require_modes(sc.circuit.basis())?;
        let entry = by_cut.entry(seg.cut).or_default();
        for m in modes {
            if !entry.contains(&m) {
                entry.push(m);
            }
        }
    }
    let post = sc.postselection(detector)?;
    let mut numerator = C64::new(0.0, 0.0);
    let mut denominator = None;
    for (cut, modes) in &by_cut {
        let tsv = two_state_at_cut(sc, detector, *cut)?;
        let projector = Operator::projector(sc.circuit.basis().clone(), modes)?;
        let op = property_op.compose(&projector)?;
        numerator += op.matrix_element(&tsv.backward, &tsv.forward)?;
        denominator.get_or_insert(tsv.backward.inner(&tsv.forward)?);
    }
    let denominator = match denominator {
        Some(d) => d,
        None => post.inner(&sc.circuit.propagate_forward(&sc.input, sc.circuit.num_layers())?)?,
    };
    WeakValueResult::from_parts(numerator, denominator, ORTHOGONALITY_EPS)
}
