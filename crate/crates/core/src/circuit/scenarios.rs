//! Builders for the canonical scenarios.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use super::{BsConvention, Circuit, Element, Port, Scenario, Segment};
use crate::error::{Error, Result};
use crate::hilbert::{Basis, ModeLabel, Polarization, StateVector, C64};

/// Tag value carried by untouched modes.
pub const TAG_CLEAR: &str = "t0";
/// Tag value a [`Element::Tag`] rotates toward.
pub const TAG_MARKED: &str = "t1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioKind {
    /// Two 50:50 beamsplitters with a phase `phase` on arm B.
    MachZehnder { phase: f64 },
    /// Balanced Mach-Zehnder whose `dark` detector receives no light.
    DarkPortMz,
    /// Nested interferometer: arm A outside, arms B and C forming an inner
    /// interferometer fed by D and leaking to E.
    Nested,
    CheshireCat,
    /// Single outer cycle of the polarization-based counterfactual protocol,
    /// with `inner_cycles` passes past Bob's switchable mirrors.
    SalihSingleOuter { inner_cycles: usize, mirrors_on: bool },
}

impl ScenarioKind {
    pub const NAMES: [&'static str; 5] = [
        "mach_zehnder",
        "dark_port_mz",
        "nested",
        "cheshire_cat",
        "salih_single_outer",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::MachZehnder { .. } => "mach_zehnder",
            ScenarioKind::DarkPortMz => "dark_port_mz",
            ScenarioKind::Nested => "nested",
            ScenarioKind::CheshireCat => "cheshire_cat",
            ScenarioKind::SalihSingleOuter { .. } => "salih_single_outer",
        }
    }

    /// Default parameters for a scenario name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mach_zehnder" => Ok(ScenarioKind::MachZehnder { phase: 0.0 }),
            "dark_port_mz" => Ok(ScenarioKind::DarkPortMz),
            "nested" => Ok(ScenarioKind::Nested),
            "cheshire_cat" => Ok(ScenarioKind::CheshireCat),
            "salih_single_outer" => Ok(ScenarioKind::SalihSingleOuter {
                inner_cycles: 3,
                mirrors_on: true,
            }),
            other => Err(Error::UnknownScenario(other.to_owned())),
        }
    }
}

/// Parses `name` or `name:key=value,key=value`, e.g.
/// `salih_single_outer:cycles=5,bob=off` or `mach_zehnder:phase=0.3`.
impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kind = Self::from_name(name)?;
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
            let bad = || Error::InvalidParameter(format!("bad value `{value}` for `{key}`"));
            match (&mut kind, key) {
                (ScenarioKind::MachZehnder { phase }, "phase") => {
                    *phase = value.parse().map_err(|_| bad())?
                }
                (ScenarioKind::SalihSingleOuter { inner_cycles, .. }, "cycles") => {
                    *inner_cycles = value.parse().map_err(|_| bad())?
                }
                (ScenarioKind::SalihSingleOuter { mirrors_on, .. }, "bob") => {
                    *mirrors_on = match value {
                        "on" => true,
                        "off" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "scenario `{name}` has no parameter `{key}`"
                    )))
                }
            }
        }
        Ok(kind)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::MachZehnder { phase } => write!(f, "mach_zehnder:phase={phase}"),
            ScenarioKind::SalihSingleOuter {
                inner_cycles,
                mirrors_on,
            } => write!(
                f,
                "salih_single_outer:cycles={inner_cycles},bob={}",
                if *mirrors_on { "on" } else { "off" }
            ),
            other => f.write_str(other.name()),
        }
    }
}

pub fn build_scenario(kind: ScenarioKind) -> Result<Scenario> {
    match kind {
        ScenarioKind::MachZehnder { phase } => mach_zehnder("mach_zehnder", phase, ("D1", "D2")),
        ScenarioKind::DarkPortMz => mach_zehnder("dark_port_mz", 0.0, ("dark", "bright")),
        ScenarioKind::Nested => nested(),
        ScenarioKind::CheshireCat => cheshire_cat(),
        ScenarioKind::SalihSingleOuter {
            inner_cycles,
            mirrors_on,
        } => salih_single_outer(inner_cycles, mirrors_on),
    }
}

fn bs(a: &str, b: &str, reflectivity: f64) -> Element {
    Element::BeamSplitter {
        a: Port::path(a),
        b: Port::path(b),
        reflectivity,
        convention: BsConvention::Symmetric,
    }
}

fn phase(port: &str, angle: f64) -> Element {
    Element::PhaseShift {
        port: Port::path(port),
        angle,
    }
}

fn segment(name: &str, cut: usize, port: Port) -> Segment {
    Segment {
        name: name.to_owned(),
        cut,
        port,
    }
}

pub(crate) fn mode_postselections(
    basis: &Basis,
    detectors: &BTreeMap<String, Port>,
) -> Result<BTreeMap<String, StateVector>> {
    detectors
        .iter()
        .map(|(name, port)| {
            let modes = port.require_modes(basis)?;
            let [mode] = modes.as_slice() else {
                return Err(Error::InvalidParameter(format!(
                    "detector `{name}` spans several modes; give its postselection explicitly"
                )));
            };
            Ok((name.clone(), StateVector::basis_state(basis.clone(), mode)?))
        })
        .collect()
}

fn mach_zehnder(name: &str, arm_phase: f64, (out_a, out_b): (&str, &str)) -> Result<Scenario> {
    let basis = Basis::paths(&["A", "B"])?;
    let layers = vec![bs("A", "B", 0.5), phase("B", arm_phase), bs("A", "B", 0.5)];
    let segments = vec![
        segment("A", 1, Port::path("A")),
        segment("B", 1, Port::path("B")),
    ];
    let detectors = BTreeMap::from([
        (out_a.to_owned(), Port::path("A")),
        (out_b.to_owned(), Port::path("B")),
    ]);
    let circuit = Circuit::new(basis.clone(), layers, segments, detectors)?;
    let input = StateVector::basis_state(basis.clone(), &ModeLabel::path("A"))?;
    let post = mode_postselections(&basis, circuit.detectors())?;
    let description = format!(
        "Mach-Zehnder interferometer, input on A, phase {arm_phase} rad on arm B. \
         At zero phase all light exits on rail B ({out_b}) and rail A ({out_a}) is dark."
    );
    Scenario::new(name, circuit, input, post, description)
}

/// Layer index after which arms A, B, C hold the two-state pair
/// `(√2|A⟩ + |B⟩ ± |C⟩)/2`.
pub const NESTED_MID_CUT: usize = 4;

fn nested() -> Result<Scenario> {
    let basis = Basis::paths(&["A", "B", "C"])?;
    // Rail B carries D before the inner split and feeds D3 afterwards; rail C
    // becomes E after the inner recombination. The phase plates fix the signs
    // of the mid-circuit amplitudes and balance the inner interferometer so
    // that light entering from D leaves toward D3.
    let layers = vec![
        bs("A", "B", 0.5),
        bs("B", "C", 0.5),
        phase("B", -FRAC_PI_2),
        phase("C", PI),
        phase("C", -FRAC_PI_2),
        bs("B", "C", 0.5),
        bs("A", "C", 0.5),
        phase("C", -FRAC_PI_2),
    ];
    let segments = vec![
        segment("D", 1, Port::path("B")),
        segment("A", NESTED_MID_CUT, Port::path("A")),
        segment("B", NESTED_MID_CUT, Port::path("B")),
        segment("C", NESTED_MID_CUT, Port::path("C")),
        segment("E", 6, Port::path("C")),
    ];
    let detectors = BTreeMap::from([
        ("D1".to_owned(), Port::path("A")),
        ("D2".to_owned(), Port::path("C")),
        ("D3".to_owned(), Port::path("B")),
    ]);
    let circuit = Circuit::new(basis.clone(), layers, segments, detectors)?;
    let input = StateVector::basis_state(basis.clone(), &ModeLabel::path("A"))?;
    let post = mode_postselections(&basis, circuit.detectors())?;
    Scenario::new(
        "nested",
        circuit,
        input,
        post,
        "Nested interferometer. The source splits into arm A and arm D; D feeds an inner \
         interferometer (arms B, C) balanced so that light from D exits to D3 and never to E. \
         A and E recombine toward D1 and D2. At the mid cut the forward state is \
         (sqrt2 A + B + C)/2 and the backward state from D2 is (sqrt2 A + B - C)/2.",
    )
}

fn cheshire_cat() -> Result<Scenario> {
    let (h, v) = (Polarization::H, Polarization::V);
    let labels = [
        ModeLabel::polarized("L", h),
        ModeLabel::polarized("L", v),
        ModeLabel::polarized("R", h),
        ModeLabel::polarized("R", v),
    ];
    let basis = Basis::new(labels.clone())?;
    let half = C64::new(0.5, 0.0);
    let i_half = C64::new(0.0, 0.5);
    // (|L⟩ + i|R⟩)|D⟩/√2 with |D⟩ = (|H⟩ + |V⟩)/√2.
    let input = StateVector::new(basis.clone(), vec![half, half, i_half, i_half])?.normalized()?;
    // (|L⟩|D⟩ + |R⟩|A⟩)/√2 with |A⟩ = (|H⟩ − |V⟩)/√2.
    let post = StateVector::new(basis.clone(), vec![half, half, half, -half])?.normalized()?;
    let circuit = Circuit::new(
        basis,
        vec![],
        vec![
            segment("L", 0, Port::path("L")),
            segment("R", 0, Port::path("R")),
        ],
        BTreeMap::from([("F".to_owned(), Port::path("L"))]),
    )?;
    Scenario::new(
        "cheshire_cat",
        circuit,
        input,
        BTreeMap::from([("F".to_owned(), post)]),
        "Quantum Cheshire cat. Preselection (|L> + i|R>)|D>/sqrt2, postselection \
         (|L>|D> + |R>|A>)/sqrt2 with D = (H+V)/sqrt2 and A = (H-V)/sqrt2. The path projector \
         on R has weak value 0 while sigma_z on polarization times that projector has weak \
         value i.",
    )
}

/// Layers per inner cycle of the counterfactual protocol.
pub const SALIH_LAYERS_PER_CYCLE: usize = 4;

fn salih_single_outer(inner_cycles: usize, mirrors_on: bool) -> Result<Scenario> {
    if inner_cycles == 0 {
        return Err(Error::InvalidParameter(
            "salih_single_outer needs at least one inner cycle".into(),
        ));
    }
    let (h, v) = (Polarization::H, Polarization::V);
    let mut labels = vec![ModeLabel::polarized("A", h), ModeLabel::polarized("A", v)];
    for k in 1..=inner_cycles {
        labels.push(ModeLabel::polarized(format!("B{k}"), v));
        labels.push(ModeLabel::polarized(format!("L{k}"), v));
    }
    let basis = Basis::new(labels)?;
    let reflectivity = (PI / (2 * inner_cycles) as f64).sin().powi(2);
    let mut layers = Vec::with_capacity(SALIH_LAYERS_PER_CYCLE * inner_cycles);
    let mut segments = Vec::new();
    let mut detectors = BTreeMap::from([
        ("D0".to_owned(), Port::polarized("A", h)),
        ("D1".to_owned(), Port::polarized("A", v)),
    ]);
    for k in 1..=inner_cycles {
        let base = SALIH_LAYERS_PER_CYCLE * (k - 1);
        let bob = format!("B{k}");
        let loss = format!("L{k}");
        layers.push(Element::BeamSplitter {
            a: Port::polarized("A", h),
            b: Port::polarized("A", v),
            reflectivity,
            convention: BsConvention::Rotation,
        });
        layers.push(Element::PolarizingBs {
            a: Port::path("A"),
            b: Port::path(&bob),
        });
        layers.push(Element::SwitchableMirror {
            port: Port::path(&bob),
            into: Port::path(&loss),
            on: mirrors_on,
        });
        layers.push(Element::PolarizingBs {
            a: Port::path("A"),
            b: Port::path(&bob),
        });
        segments.push(segment(&format!("alice_{k}"), base + 1, Port::path("A")));
        segments.push(segment(&format!("bob_{k}_out"), base + 2, Port::path(&bob)));
        segments.push(segment(&format!("bob_{k}_back"), base + 3, Port::path(&bob)));
        segments.push(segment(&format!("bob_{k}_loss"), base + 3, Port::path(&loss)));
        detectors.insert(format!("DB{k}"), Port::path(&loss));
    }
    let circuit = Circuit::new(basis.clone(), layers, segments, detectors)?;
    let input = StateVector::basis_state(basis.clone(), &ModeLabel::polarized("A", h))?;
    let post = mode_postselections(&basis, circuit.detectors())?;
    let description = format!(
        "Single outer cycle of the polarization-based counterfactual communication protocol \
         with {inner_cycles} inner cycles. Each cycle rotates Alice's polarization by \
         pi/{n}; the PBS routes V toward Bob (B_k). Bob's switchable mirrors are {state}: \
         when on they reflect the photon into his loss detector (DB_k) and the photon is held \
         at H by the Zeno effect, exiting to D0; when off the V light returns and the \
         rotation completes, exiting to D1.",
        n = 2 * inner_cycles,
        state = if mirrors_on { "ON" } else { "OFF" },
    );
    Scenario::new("salih_single_outer", circuit, input, post, description)
}
