//! Layered unitary interferometer model.
//!
//! A [`Circuit`] is a fixed set of mode "rails" plus an ordered list of
//! optical elements. The state at cut `k` is the state after the first `k`
//! layers; cut `0` is the input and cut `layers.len()` the output. Named
//! [`Segment`]s pin a path label (A, B, ...) to a rail at a given cut.

mod scenarios;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{Basis, ModeLabel, Operator, Polarization, StateVector, C64, ONE, ZERO};

pub use scenarios::{build_scenario, ScenarioKind, TAG_CLEAR, TAG_MARKED};
pub(crate) use scenarios::mode_postselections;
pub use scenarios::{NESTED_MID_CUT, SALIH_LAYERS_PER_CYCLE};

/// Per-element unitarity tolerance.
pub const ELEMENT_UNITARY_TOL: f64 = 1e-12;
/// Whole-circuit unitarity tolerance.
pub const CIRCUIT_UNITARY_TOL: f64 = 1e-10;

/// Selects basis modes. Unset fields match anything, so `B` selects `B.H`,
/// `B.V#t0`, ... while `B.V` selects only vertically polarized modes on `B`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Port {
    pub path: String,
    pub polarization: Option<Polarization>,
    pub tag: Option<String>,
}

impl Port {
    pub fn path(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            polarization: None,
            tag: None,
        }
    }

    pub fn polarized(path: impl Into<String>, polarization: Polarization) -> Self {
        Self {
            path: path.into(),
            polarization: Some(polarization),
            tag: None,
        }
    }

    pub fn matches(&self, label: &ModeLabel) -> bool {
        label.path == self.path
            && self.polarization.is_none_or(|p| label.polarization == Some(p))
            && self.tag.as_ref().is_none_or(|t| label.tag.as_ref() == Some(t))
    }

    pub fn modes(&self, basis: &Basis) -> Vec<ModeLabel> {
        basis
            .labels()
            .iter()
            .filter(|l| self.matches(l))
            .cloned()
            .collect()
    }

    /// Like [`Port::modes`] but an empty match is an error.
    pub fn require_modes(&self, basis: &Basis) -> Result<Vec<ModeLabel>> {
        let modes = self.modes(basis);
        if modes.is_empty() {
            Err(Error::BasisMismatch(format!("port `{self}` matches no mode")))
        } else {
            Ok(modes)
        }
    }

    /// The mode paired with `label` when moving from port `self` to `other`:
    /// the fields set on `other` replace the corresponding fields of `label`.
    fn partner(&self, other: &Port, label: &ModeLabel) -> ModeLabel {
        ModeLabel {
            path: other.path.clone(),
            polarization: other.polarization.or(label.polarization),
            tag: other.tag.clone().or_else(|| label.tag.clone()),
        }
    }

    fn same_shape(&self, other: &Port) -> bool {
        self.polarization.is_some() == other.polarization.is_some()
            && self.tag.is_some() == other.tag.is_some()
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path)?;
        if let Some(p) = self.polarization {
            write!(f, ".{p}")?;
        }
        if let Some(t) = &self.tag {
            write!(f, "#{t}")?;
        }
        Ok(())
    }
}

impl FromStr for Port {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l: ModeLabel = s.parse()?;
        Ok(Port {
            path: l.path,
            polarization: l.polarization,
            tag: l.tag,
        })
    }
}

impl From<&ModeLabel> for Port {
    fn from(l: &ModeLabel) -> Self {
        Port {
            path: l.path.clone(),
            polarization: l.polarization,
            tag: l.tag.clone(),
        }
    }
}

/// Phase convention of a two-port beamsplitter with reflectivity `R`,
/// `t = √(1−R)`, `r = √R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsConvention {
    /// `[[t, i r], [i r, t]]`
    Symmetric,
    /// Real rotation `[[t, −r], [r, t]]`; a wave plate when the two ports are
    /// polarizations of one path.
    Rotation,
}

impl fmt::Display for BsConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BsConvention::Symmetric => "symmetric",
            BsConvention::Rotation => "rotation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    BeamSplitter {
        a: Port,
        b: Port,
        reflectivity: f64,
        convention: BsConvention,
    },
    PhaseShift {
        port: Port,
        angle: f64,
    },
    /// Reflection phase of π.
    Mirror {
        port: Port,
    },
    /// H transmits (stays on its rail), V reflects (swaps rails).
    PolarizingBs {
        a: Port,
        b: Port,
    },
    /// When on, the beam on `port` is reflected into `into` (and vice versa);
    /// when off it passes unchanged.
    SwitchableMirror {
        port: Port,
        into: Port,
        on: bool,
    },
    /// Rotates the ancilla tag of `port` from `t0` toward `t1` so that the
    /// marked tag state has overlap `cos(θ/2)` with the unmarked one.
    Tag {
        port: Port,
        theta: f64,
    },
    Identity {
        port: Port,
    },
}

impl Element {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Element::BeamSplitter { .. } => "bs",
            Element::PhaseShift { .. } => "phase",
            Element::Mirror { .. } => "mirror",
            Element::PolarizingBs { .. } => "pbs",
            Element::SwitchableMirror { .. } => "swmirror",
            Element::Tag { .. } => "tag",
            Element::Identity { .. } => "identity",
        }
    }

    /// Full matrix of the element on `basis`; identity off its support.
    pub fn unitary(&self, basis: &Basis) -> Result<Operator> {
        let n = basis.dim();
        let mut m = DMatrix::<C64>::identity(n, n);
        match self {
            Element::BeamSplitter {
                a,
                b,
                reflectivity,
                convention,
            } => {
                if !(0.0..=1.0).contains(reflectivity) {
                    return Err(Error::InvalidParameter(format!(
                        "beamsplitter reflectivity {reflectivity} outside [0, 1]"
                    )));
                }
                let t = C64::new((1.0 - reflectivity).sqrt(), 0.0);
                let r = reflectivity.sqrt();
                let block = match convention {
                    BsConvention::Symmetric => [[t, C64::new(0.0, r)], [C64::new(0.0, r), t]],
                    BsConvention::Rotation => [[t, C64::new(-r, 0.0)], [C64::new(r, 0.0), t]],
                };
                for (i, j) in pairs(basis, a, b, true)? {
                    set_block(&mut m, i, j, block);
                }
            }
            Element::PhaseShift { port, angle } => {
                let phase = C64::from_polar(1.0, *angle);
                for l in port.require_modes(basis)? {
                    let i = basis.require(&l)?;
                    m[(i, i)] = phase;
                }
            }
            Element::Mirror { port } => {
                for l in port.require_modes(basis)? {
                    let i = basis.require(&l)?;
                    m[(i, i)] = -ONE;
                }
            }
            Element::PolarizingBs { a, b } => {
                if a.polarization.is_some() || b.polarization.is_some() {
                    return Err(Error::InvalidParameter(
                        "pbs ports must not fix a polarization".into(),
                    ));
                }
                let va = Port {
                    polarization: Some(Polarization::V),
                    ..a.clone()
                };
                let vb = Port {
                    polarization: Some(Polarization::V),
                    ..b.clone()
                };
                if a.modes(basis).is_empty() || b.modes(basis).is_empty() {
                    return Err(Error::BasisMismatch(format!(
                        "pbs ports `{a}` and `{b}` must both match modes"
                    )));
                }
                for (i, j) in pairs(basis, &va, &vb, false)? {
                    set_block(&mut m, i, j, [[ZERO, ONE], [ONE, ZERO]]);
                }
            }
            Element::SwitchableMirror { port, into, on } => {
                let swaps = pairs(basis, port, into, true)?;
                if *on {
                    for (i, j) in swaps {
                        set_block(&mut m, i, j, [[ZERO, ONE], [ONE, ZERO]]);
                    }
                }
            }
            Element::Tag { port, theta } => {
                if port.tag.is_some() {
                    return Err(Error::InvalidParameter(
                        "tag port must not fix a tag".into(),
                    ));
                }
                let from = Port {
                    tag: Some(TAG_CLEAR.into()),
                    ..port.clone()
                };
                let to = Port {
                    tag: Some(TAG_MARKED.into()),
                    ..port.clone()
                };
                let (s, c) = (theta / 2.0).sin_cos();
                let block = [
                    [C64::new(c, 0.0), C64::new(-s, 0.0)],
                    [C64::new(s, 0.0), C64::new(c, 0.0)],
                ];
                for (i, j) in pairs(basis, &from, &to, true)? {
                    set_block(&mut m, i, j, block);
                }
            }
            Element::Identity { port } => {
                port.require_modes(basis)?;
            }
        }
        let op = Operator::new(basis.clone(), m)?;
        let dev = op.unitarity_deviation();
        if dev > ELEMENT_UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(op)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::BeamSplitter {
                a,
                b,
                reflectivity,
                convention,
            } => write!(f, "bs {a} {b} r={reflectivity} convention={convention}"),
            Element::PhaseShift { port, angle } => write!(f, "phase {port} {angle}"),
            Element::Mirror { port } => write!(f, "mirror {port}"),
            Element::PolarizingBs { a, b } => write!(f, "pbs {a} {b}"),
            Element::SwitchableMirror { port, into, on } => {
                write!(f, "swmirror {port} {} into={into}", if *on { "on" } else { "off" })
            }
            Element::Tag { port, theta } => write!(f, "tag {port} theta={theta}"),
            Element::Identity { port } => write!(f, "identity {port}"),
        }
    }
}

/// Index pairs `(i, j)` coupling each mode of port `a` to its partner on `b`.
fn pairs(basis: &Basis, a: &Port, b: &Port, require_all: bool) -> Result<Vec<(usize, usize)>> {
    if !a.same_shape(b) {
        return Err(Error::BasisMismatch(format!(
            "ports `{a}` and `{b}` select different kinds of modes"
        )));
    }
    let a_modes = a.modes(basis);
    if a_modes.is_empty() && require_all {
        return Err(Error::BasisMismatch(format!("port `{a}` matches no mode")));
    }
    let mut out = Vec::with_capacity(a_modes.len());
    let mut used = vec![false; basis.dim()];
    for l in &a_modes {
        let partner = a.partner(b, l);
        let Some(j) = basis.index_of(&partner) else {
            if require_all {
                return Err(Error::BasisMismatch(format!(
                    "mode `{l}` has no partner `{partner}`"
                )));
            }
            continue;
        };
        let i = basis.require(l)?;
        if i == j || used[i] || used[j] {
            return Err(Error::BasisMismatch(format!(
                "ports `{a}` and `{b}` overlap"
            )));
        }
        used[i] = true;
        used[j] = true;
        out.push((i, j));
    }
    if require_all && b.modes(basis).len() != out.len() {
        return Err(Error::BasisMismatch(format!(
            "ports `{a}` and `{b}` select different numbers of modes"
        )));
    }
    Ok(out)
}

fn set_block(m: &mut DMatrix<C64>, i: usize, j: usize, block: [[C64; 2]; 2]) {
    m[(i, i)] = block[0][0];
    m[(i, j)] = block[0][1];
    m[(j, i)] = block[1][0];
    m[(j, j)] = block[1][1];
}

/// A named location: the modes selected by `port` at cut `cut`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub cut: usize,
    pub port: Port,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    basis: Basis,
    layers: Vec<Element>,
    unitaries: Vec<Operator>,
    segments: Vec<Segment>,
    detectors: BTreeMap<String, Port>,
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
            && self.layers == other.layers
            && self.segments == other.segments
            && self.detectors == other.detectors
    }
}

impl Circuit {
    pub fn new(
        basis: Basis,
        layers: Vec<Element>,
        segments: Vec<Segment>,
        detectors: BTreeMap<String, Port>,
    ) -> Result<Self> {
        let unitaries = layers
            .iter()
            .map(|e| e.unitary(&basis))
            .collect::<Result<Vec<_>>>()?;
        let circuit = Self {
            basis,
            layers,
            unitaries,
            segments,
            detectors,
        };
        for (i, s) in circuit.segments.iter().enumerate() {
            if circuit.segments[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate segment `{}`",
                    s.name
                )));
            }
            circuit.check_cut(s.cut)?;
            s.port.require_modes(&circuit.basis)?;
        }
        for port in circuit.detectors.values() {
            port.require_modes(&circuit.basis)?;
        }
        let dev = circuit.total_unitary().unitarity_deviation();
        if dev > CIRCUIT_UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(circuit)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn layers(&self) -> &[Element] {
        &self.layers
    }

    pub fn layer_unitaries(&self) -> &[Operator] {
        &self.unitaries
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSegment(name.to_owned()))
    }

    pub fn segment_modes(&self, name: &str) -> Result<Vec<ModeLabel>> {
        self.segment(name)?.port.require_modes(&self.basis)
    }

    pub fn detectors(&self) -> &BTreeMap<String, Port> {
        &self.detectors
    }

    pub fn detector_modes(&self, name: &str) -> Result<Vec<ModeLabel>> {
        self.detectors
            .get(name)
            .ok_or_else(|| Error::UnknownDetector(name.to_owned()))?
            .require_modes(&self.basis)
    }

    fn check_cut(&self, cut: usize) -> Result<()> {
        if cut > self.layers.len() {
            Err(Error::LayerOutOfRange {
                index: cut,
                layers: self.layers.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Product of all layer unitaries.
    pub fn total_unitary(&self) -> Operator {
        self.unitaries
            .iter()
            .fold(Operator::identity(self.basis.clone()), |acc, u| {
                u.compose(&acc).expect("layers share the circuit basis")
            })
    }

    /// Evolves a state known at cut `from` to cut `to`, forward or backward.
    pub fn evolve(&self, s: &StateVector, from: usize, to: usize) -> Result<StateVector> {
        self.check_cut(from)?;
        self.check_cut(to)?;
        if s.basis() != &self.basis {
            return Err(Error::BasisMismatch(
                "state is not defined on the circuit basis".into(),
            ));
        }
        let mut out = s.clone();
        if to >= from {
            for u in &self.unitaries[from..to] {
                out = u.apply(&out)?;
            }
        } else {
            for u in self.unitaries[to..from].iter().rev() {
                out = u.adjoint().apply(&out)?;
            }
        }
        Ok(out)
    }

    /// State at cut `upto` for input `s` at cut 0.
    pub fn propagate_forward(&self, s: &StateVector, upto: usize) -> Result<StateVector> {
        self.evolve(s, 0, upto)
    }

    /// Backward-evolving state at cut `downto` for a final state `f` at the
    /// output, as a ket: `U_{downto..end}† |f⟩`.
    pub fn propagate_backward(&self, f: &StateVector, downto: usize) -> Result<StateVector> {
        self.evolve(f, self.layers.len(), downto)
    }
}

/// A circuit together with its pre-selected input and the post-selected
/// (final) state for each detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub circuit: Circuit,
    pub input: StateVector,
    pub postselections: BTreeMap<String, StateVector>,
    pub description: String,
}

pub const STATE_NORM_TOL: f64 = 1e-12;

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        circuit: Circuit,
        input: StateVector,
        postselections: BTreeMap<String, StateVector>,
        description: impl Into<String>,
    ) -> Result<Self> {
        check_normalized("input", &input, circuit.basis())?;
        for (det, state) in &postselections {
            if !circuit.detectors().contains_key(det) {
                return Err(Error::UnknownDetector(det.clone()));
            }
            check_normalized(&format!("postselection for {det}"), state, circuit.basis())?;
        }
        Ok(Self {
            name: name.into(),
            circuit,
            input,
            postselections,
            description: description.into(),
        })
    }

    /// The final state associated with a detector.
    pub fn postselection(&self, detector: &str) -> Result<&StateVector> {
        self.postselections
            .get(detector)
            .ok_or_else(|| Error::UnknownDetector(detector.to_owned()))
    }

    /// Born-rule probability of each detector for the scenario's input.
    pub fn detector_probabilities(&self) -> Result<BTreeMap<String, f64>> {
        let out = self
            .circuit
            .propagate_forward(&self.input, self.circuit.num_layers())?;
        self.circuit
            .detectors()
            .keys()
            .map(|name| {
                let modes = self.circuit.detector_modes(name)?;
                Ok((name.clone(), out.probability_on(&modes)?))
            })
            .collect()
    }
}

fn check_normalized(what: &str, s: &StateVector, basis: &Basis) -> Result<()> {
    if s.basis() != basis {
        return Err(Error::BasisMismatch(format!(
            "{what} is not defined on the circuit basis"
        )));
    }
    let n = s.norm();
    if (n - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::InvalidParameter(format!(
            "{what} has norm {n}, expected 1"
        )));
    }
    Ok(())
}
