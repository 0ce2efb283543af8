//! Which-path tags on the inner arms of a nested interferometer.
//!
//! Tagging arm B with angle θ_B and arm C with θ_C attaches tag states
//! `cos(θ/2)|t0⟩ + sin(θ/2)|t1⟩` to the two arms. Any difference between
//! the tags spoils the destructive interference that keeps light out of E.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Element, Port, Scenario, Segment, TAG_CLEAR, TAG_MARKED};
use crate::error::{Error, Result};
use crate::hilbert::{Basis, ModeLabel, Operator, StateVector, C64};

/// Segment names a nested-shaped scenario must provide.
pub const NESTED_SEGMENTS: [&str; 4] = ["D", "B", "C", "E"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeReport {
    pub theta_b: f64,
    pub theta_c: f64,
    pub distinguishability: f64,
    pub visibility: f64,
    /// Probability of reaching E for a photon injected at D.
    pub leak_probability: f64,
}

impl FringeReport {
    pub fn dv_sum(&self) -> f64 {
        self.distinguishability.powi(2) + self.visibility.powi(2)
    }
}

fn tag_basis() -> Result<Basis> {
    Basis::new([
        ModeLabel::internal(None, Some(TAG_CLEAR)),
        ModeLabel::internal(None, Some(TAG_MARKED)),
    ])
}

fn segment(sc: &Scenario, name: &str) -> Result<Segment> {
    sc.circuit.segment(name).cloned().map_err(|_| Error::NotNested)
}

/// Tensors a nested-shaped scenario with a tag qubit (every state starts in
/// `t0`) and inserts tag elements on arms B and C right after the cut of
/// segment B. Segments later in the circuit move with their layers.
pub fn tag_inner_arms(sc: &Scenario, theta_b: f64, theta_c: f64) -> Result<Scenario> {
    let [_, b, c, _] = NESTED_SEGMENTS.map(|n| segment(sc, n));
    let (b, c) = (b?, c?);
    for n in ["D", "E"] {
        segment(sc, n)?;
    }
    if b.cut != c.cut {
        return Err(Error::NotNested);
    }
    if sc.circuit.basis().labels().iter().any(|l| l.tag.is_some()) {
        return Err(Error::InvalidParameter("scenario already carries tags".into()));
    }
    let clear = StateVector::basis_state(tag_basis()?, &ModeLabel::internal(None, Some(TAG_CLEAR)))?;
    let tagged = |s: &StateVector| s.tensor(&clear);
    let input = tagged(&sc.input)?;
    let basis = input.basis().clone();

    let at = b.cut;
    let mut layers = sc.circuit.layers().to_vec();
    layers.splice(
        at..at,
        [
            Element::Tag { port: b.port.clone(), theta: theta_b },
            Element::Tag { port: c.port.clone(), theta: theta_c },
        ],
    );
    let segments = sc
        .circuit
        .segments()
        .iter()
        .map(|s| Segment {
            cut: if s.cut > at { s.cut + 2 } else { s.cut },
            ..s.clone()
        })
        .collect();
    let circuit = Circuit::new(basis, layers, segments, sc.circuit.detectors().clone())?;
    let postselections = sc
        .postselections
        .iter()
        .map(|(d, s)| Ok((d.clone(), tagged(s)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Scenario::new(
        format!("{}_tagged", sc.name),
        circuit,
        input,
        postselections,
        format!("{} Inner arms tagged with theta_B = {theta_b}, theta_C = {theta_c}.", sc.description),
    )
}

/// Internal (non-path) part of the amplitudes on the modes of `port`.
fn internal_state(s: &StateVector, port: &Port) -> BTreeMap<ModeLabel, C64> {
    s.basis()
        .labels()
        .iter()
        .zip(s.amplitudes().iter())
        .filter(|(l, _)| port.matches(l))
        .map(|(l, a)| (ModeLabel::internal(l.polarization, l.tag.as_deref()), *a))
        .collect()
}

/// Trace norm of `wB ρ_B − wC ρ_C` (general distinguishability) and
/// `2|⟨ψ_B|ψ_C⟩|` (visibility) for unnormalized arm states whose squared
/// norms sum to one.
fn distinguishability_visibility(
    arm_b: &BTreeMap<ModeLabel, C64>,
    arm_c: &BTreeMap<ModeLabel, C64>,
) -> Result<(f64, f64)> {
    let labels: Vec<ModeLabel> = arm_b.keys().chain(arm_c.keys()).cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let basis = Basis::new(labels.clone())?;
    let vec_of = |m: &BTreeMap<ModeLabel, C64>| -> Vec<C64> {
        labels.iter().map(|l| m.get(l).copied().unwrap_or_default()).collect()
    };
    let (vb, vc) = (vec_of(arm_b), vec_of(arm_c));
    let wb: f64 = vb.iter().map(|a| a.norm_sqr()).sum();
    let wc: f64 = vc.iter().map(|a| a.norm_sqr()).sum();
    let total = wb + wc;
    if !(total > 0.0) {
        return Err(Error::NoClick);
    }
    let n = labels.len();
    let diff = DMatrix::from_fn(n, n, |i, j| (vb[i] * vb[j].conj() - vc[i] * vc[j].conj()) / total);
    let eig = Operator::new(basis, diff)?.eigh()?;
    let distinguishability = eig.eigenvalues.iter().map(|e| e.abs()).sum::<f64>().min(1.0);
    let overlap: C64 = vb.iter().zip(&vc).map(|(b, c)| b.conj() * c).sum();
    let visibility = (2.0 * overlap.norm() / total).min(1.0);
    Ok((distinguishability, visibility))
}

/// Tags the inner arms and reports distinguishability, visibility and the
/// leak into E for light injected at D.
pub fn analyze_tagged_inner(sc: &Scenario, theta_b: f64, theta_c: f64) -> Result<FringeReport> {
    let tagged = tag_inner_arms(sc, theta_b, theta_c)?;
    let circuit = &tagged.circuit;
    let d = circuit.segment("D")?;
    let b = circuit.segment("B")?;
    let e = circuit.segment("E")?;
    let entry = d
        .port
        .require_modes(circuit.basis())?
        .into_iter()
        .find(|l| l.tag.as_deref() == Some(TAG_CLEAR))
        .ok_or(Error::NotNested)?;
    let injected = StateVector::basis_state(circuit.basis().clone(), &entry)?;
    // The tag layers sit right after the cut of B.
    let after_tags = circuit.evolve(&injected, d.cut, b.cut + 2)?;
    let (dist, vis) = distinguishability_visibility(
        &internal_state(&after_tags, &b.port),
        &internal_state(&after_tags, &circuit.segment("C")?.port),
    )?;
    let at_e = circuit.evolve(&after_tags, b.cut + 2, e.cut)?;
    let leak = at_e.probability_on(&circuit.segment_modes("E")?)?;
    Ok(FringeReport {
        theta_b,
        theta_c,
        distinguishability: dist,
        visibility: vis,
        leak_probability: leak.clamp(0.0, 1.0),
    })
}

/// Sweeps θ_B over `grid` with arm C untagged.
pub fn dv_inequality_sweep(sc: &Scenario, grid: &[f64]) -> Result<Vec<FringeReport>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("tag-angle grid is empty".into()));
    }
    grid.par_iter().map(|t| analyze_tagged_inner(sc, *t, 0.0)).collect()
}
