#![allow(dead_code)]
//! Random scenarios, operators and documents for property tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use weaktrace::circuit::{BsConvention, Circuit, Element, Port, Scenario, Segment};
use weaktrace::hilbert::{Basis, ModeLabel, Operator, StateVector, C64};
use weaktrace::interface::dsl::{
    AnalysisStmt, BinOp, DetectorStmt, Expr, Func, LayerStmt, ParamValue, PostselectStmt, ScenarioDocument,
    SegmentStmt, Span, Spanned, ANALYSIS_KINDS,
};

pub fn path_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("P{k}")).collect()
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

/// Normalized state with no vanishing overall norm.
pub fn arb_state(basis: Basis) -> impl Strategy<Value = StateVector> {
    complex_vec(basis.dim())
        .prop_filter("norm too small", |v| v.iter().map(|c| c.norm_sqr()).sum::<f64>() > 0.05)
        .prop_map(move |v| StateVector::new(basis.clone(), v).unwrap().normalized().unwrap())
}

pub fn arb_hermitian(basis: Basis) -> impl Strategy<Value = Operator> {
    let n = basis.dim();
    complex_vec(n * n).prop_map(move |v| {
        let m = DMatrix::from_vec(n, n, v);
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Operator::new(basis.clone(), h).unwrap()
    })
}

fn arb_element(n: usize) -> impl Strategy<Value = Element> {
    let port = move || (0..n).prop_map(|k| Port::path(format!("P{k}")));
    prop_oneof![
        (0..n, 1..n, 0.0f64..=1.0, any::<bool>()).prop_map(move |(a, d, r, rot)| Element::BeamSplitter {
            a: Port::path(format!("P{a}")),
            b: Port::path(format!("P{}", (a + d) % n)),
            reflectivity: r,
            convention: if rot { BsConvention::Rotation } else { BsConvention::Symmetric },
        }),
        (port(), -PI..PI).prop_map(|(port, angle)| Element::PhaseShift { port, angle }),
        port().prop_map(|port| Element::Mirror { port }),
    ]
}

/// Random path circuit with 2–4 rails, 1–10 layers, a random input and a
/// random final state for detector `F`. Segments `S0..` cover every rail at
/// one random cut.
pub fn arb_scenario() -> impl Strategy<Value = (Scenario, usize)> {
    (2usize..=4)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(arb_element(n), 1..=10)))
        .prop_flat_map(|(n, layers)| {
            let basis = Basis::paths(&path_names(n)).unwrap();
            let cuts = layers.len();
            (
                Just(basis.clone()),
                Just(layers),
                arb_state(basis.clone()),
                arb_state(basis),
                0..=cuts,
            )
        })
        .prop_map(|(basis, layers, input, post, cut)| {
            let n = basis.dim();
            let segments = (0..n)
                .map(|k| Segment {
                    name: format!("S{k}"),
                    cut,
                    port: Port::path(format!("P{k}")),
                })
                .collect();
            let detectors = BTreeMap::from([("F".to_owned(), Port::path("P0"))]);
            let circuit = Circuit::new(basis, layers, segments, detectors).unwrap();
            let sc = Scenario::new("random", circuit, input, BTreeMap::from([("F".to_owned(), post)]), "").unwrap();
            (sc, cut)
        })
}

// ------------------------------------------------------------ documents

const PATHS: [&str; 5] = ["A", "B", "C", "L1", "bob"];
const TAGS: [&str; 2] = ["t0", "t1"];

fn arb_label() -> impl Strategy<Value = ModeLabel> {
    (0..PATHS.len(), 0..3usize, 0..3usize).prop_map(|(p, pol, tag)| {
        let mut l = ModeLabel::path(PATHS[p]);
        if pol > 0 {
            l = l.with_polarization(if pol == 1 {
                weaktrace::hilbert::Polarization::H
            } else {
                weaktrace::hilbert::Polarization::V
            });
        }
        if tag > 0 {
            l = l.with_tag(TAGS[tag - 1]);
        }
        l
    })
}

fn arb_port() -> impl Strategy<Value = Port> {
    arb_label().prop_map(|l| Port::from(&l))
}

fn arb_name() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,6}".prop_filter("reserved", |s| !weaktrace::interface::dsl::RESERVED.contains(&s.as_str()))
}

pub fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..1e6).prop_map(Expr::Number),
        prop::sample::select(vec![0.0, 0.5, 1.0, 1e-9, 12345.6789, 7e20]).prop_map(Expr::Number),
        Just(Expr::Pi),
        Just(Expr::I),
        arb_label().prop_map(Expr::Mode),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (prop::sample::select(vec![Func::Sqrt, Func::Sin, Func::Cos, Func::Exp]), inner)
                .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

fn arb_layer() -> impl Strategy<Value = LayerStmt> {
    prop_oneof![
        (arb_port(), arb_port(), arb_expr(), prop::option::of(any::<bool>())).prop_map(|(a, b, r, c)| LayerStmt::Bs {
            a,
            b,
            r,
            convention: c.map(|rot| if rot { BsConvention::Rotation } else { BsConvention::Symmetric }),
        }),
        (arb_port(), arb_expr()).prop_map(|(port, angle)| LayerStmt::Phase { port, angle }),
        arb_port().prop_map(|port| LayerStmt::Mirror { port }),
        (arb_port(), arb_port()).prop_map(|(a, b)| LayerStmt::Pbs { a, b }),
        (arb_port(), any::<bool>(), arb_port()).prop_map(|(port, on, into)| LayerStmt::Swmirror { port, on, into }),
        (arb_port(), arb_expr()).prop_map(|(port, theta)| LayerStmt::Tag { port, theta }),
        arb_port().prop_map(|port| LayerStmt::Identity { port }),
    ]
}

fn arb_analysis() -> impl Strategy<Value = AnalysisStmt> {
    (
        prop::sample::select(ANALYSIS_KINDS.to_vec()),
        arb_name(),
        prop::collection::vec(arb_name(), 1..4),
        prop::option::of(arb_expr()),
        prop::option::of(arb_expr()),
    )
        .prop_map(|(kind, det, segs, lambda, seed)| {
            let mut params = vec![("detector".to_owned(), ParamValue::Word(det))];
            params.push(("segments".to_owned(), ParamValue::Words(segs)));
            if let Some(l) = lambda {
                params.push(("lambda".to_owned(), ParamValue::Expr(l)));
            }
            if let Some(s) = seed {
                params.push(("seed".to_owned(), ParamValue::Expr(s)));
            }
            AnalysisStmt { kind: kind.to_owned(), params }
        })
}

fn spanned<T>(v: Vec<T>) -> Vec<Spanned<T>> {
    v.into_iter().map(|n| Spanned::new(n, Span::default())).collect()
}

/// Syntactically valid documents; they need not build into circuits.
pub fn arb_document() -> impl Strategy<Value = ScenarioDocument> {
    (
        prop::option::of(arb_name()),
        prop::option::of("[ -~\n\t]{0,40}"),
        prop::collection::vec(arb_label(), 1..6),
        prop::collection::vec(arb_layer(), 0..6),
        prop::collection::vec((arb_name(), arb_port(), 0usize..20), 0..4),
        prop::collection::vec((arb_name(), arb_port()), 0..4),
        prop::option::of(arb_expr()),
        prop::collection::vec((arb_name(), arb_expr()), 0..3),
        prop::collection::vec(arb_analysis(), 0..3),
    )
        .prop_map(|(name, description, modes, layers, segs, dets, input, posts, analyses)| ScenarioDocument {
            version: 1,
            name,
            description,
            modes: spanned(modes),
            layers: spanned(layers),
            segments: spanned(segs.into_iter().map(|(name, port, cut)| SegmentStmt { name, port, cut }).collect()),
            detectors: spanned(dets.into_iter().map(|(name, port)| DetectorStmt { name, port }).collect()),
            input: input.map(|e| Spanned::new(e, Span::default())),
            postselections: spanned(
                posts
                    .into_iter()
                    .map(|(detector, state)| PostselectStmt { detector, state })
                    .collect(),
            ),
            analyses: spanned(analyses),
        })
}

// ------------------------------------------------------------ checks

/// Relative closeness for weak values that may be large.
pub fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

/// Postselections with small overlap make weak values (and their rounding
/// errors) large; properties are checked where `|⟨f|i⟩| ≥ 0.05`.
pub const MIN_OVERLAP: f64 = 0.05;

// ------------------------------------------------------------ properties
//
// Each check is shared by the proptest suite and the acceptance binary.

use proptest::test_runner::TestCaseError;
use weaktrace::circuit::CIRCUIT_UNITARY_TOL;
use weaktrace::interface::dsl::{parse_scenario, print_scenario};
use weaktrace::weakvalue::{coarse_grained_weak_value, segment_trace_map, two_state_at_cut, weak_value};

pub type LinearityCase = (Scenario, usize, Operator, Operator, f64, f64);

pub fn arb_linearity_case() -> impl Strategy<Value = LinearityCase> {
    arb_scenario().prop_flat_map(|(sc, cut)| {
        let b = sc.circuit.basis().clone();
        (Just(sc), Just(cut), arb_hermitian(b.clone()), arb_hermitian(b), -2.0f64..2.0, -2.0f64..2.0)
    })
}

/// Segment weak values over a complete cut sum to one; weak values are
/// linear in the operator.
pub fn check_sum_rule_linearity(case: &LinearityCase) -> Result<(), TestCaseError> {
    let (sc, cut, a_op, b_op, a, b) = case;
    let tsv = two_state_at_cut(sc, "F", *cut).unwrap();
    prop_assume!(tsv.backward.inner(&tsv.forward).unwrap().norm() >= MIN_OVERLAP);
    let map = segment_trace_map(sc, "F").unwrap();
    let one = C64::new(1.0, 0.0);
    prop_assert!(close(map.cut_sum(*cut), one, 1e-10), "cut sum {}", map.cut_sum(*cut));
    let names: Vec<String> = sc.circuit.segments().iter().map(|s| s.name.clone()).collect();
    let coarse = coarse_grained_weak_value(&names, sc, "F").unwrap().value;
    prop_assert!(close(coarse, one, 1e-10), "coarse {coarse}");

    let combo = a_op.scale(C64::new(*a, 0.0)).add(&b_op.scale(C64::new(*b, 0.0))).unwrap();
    let wa = tsv.weak_value(a_op).unwrap().value;
    let wb = tsv.weak_value(b_op).unwrap().value;
    let wc = tsv.weak_value(&combo).unwrap().value;
    prop_assert!(close(wc, wa * *a + wb * *b, 1e-10), "{wc} vs {}", wa * *a + wb * *b);
    Ok(())
}

pub fn arb_operator_case() -> impl Strategy<Value = (Operator, StateVector, StateVector)> {
    (1usize..=6).prop_flat_map(|n| {
        let b = Basis::paths(&path_names(n)).unwrap();
        (arb_hermitian(b.clone()), arb_state(b.clone()), arb_state(b))
    })
}

/// Spectral projectors of a Hermitian operator sum to the identity, and the
/// identity has weak value one.
pub fn check_identity_resolution(case: &(Operator, StateVector, StateVector)) -> Result<(), TestCaseError> {
    let (op, pre, post) = case;
    let basis = op.basis().clone();
    let eig = op.eigh().unwrap();
    prop_assert!(eig.reconstruct().distance(op).unwrap() <= 1e-10);
    let mut sum = Operator::zero(basis.clone());
    for (_, p) in eig.spectral_projectors(1e-9) {
        prop_assert!(p.projector_deviation() <= 1e-10);
        sum = sum.add(&p).unwrap();
    }
    prop_assert!(sum.distance(&Operator::identity(basis.clone())).unwrap() <= 1e-10);
    prop_assume!(post.inner(pre).unwrap().norm() >= MIN_OVERLAP);
    let w = weak_value(&Operator::identity(basis), pre, post).unwrap().value;
    prop_assert!(close(w, C64::new(1.0, 0.0), 1e-12), "{w}");
    Ok(())
}

/// A preselected eigenstate gives its eigenvalue as weak value for any
/// non-orthogonal postselection.
pub fn check_eigenstate(case: &(Operator, StateVector, StateVector), k: usize) -> Result<(), TestCaseError> {
    let (op, _, post) = case;
    let eig = op.eigh().unwrap();
    let k = k % eig.eigenvalues.len();
    let pre = &eig.eigenvectors[k];
    prop_assume!(post.inner(pre).unwrap().norm() >= MIN_OVERLAP);
    let w = weak_value(op, pre, post).unwrap().value;
    prop_assert!(close(w, C64::new(eig.eigenvalues[k], 0.0), 1e-9), "{w} vs {}", eig.eigenvalues[k]);
    Ok(())
}

pub fn check_unitarity(sc: &Scenario) -> Result<(), TestCaseError> {
    for u in sc.circuit.layer_unitaries() {
        prop_assert!(u.unitarity_deviation() <= 1e-12);
    }
    let dev = sc.circuit.total_unitary().unitarity_deviation();
    prop_assert!(dev <= CIRCUIT_UNITARY_TOL, "{dev:e}");
    Ok(())
}

/// Forward then backward propagation returns the starting state.
pub fn check_round_trip(sc: &Scenario, cut: usize) -> Result<(), TestCaseError> {
    let c = &sc.circuit;
    let l = c.num_layers();
    let s = &sc.input;
    let back = c.propagate_backward(&c.propagate_forward(s, l).unwrap(), 0).unwrap();
    prop_assert!(back.distance_max(s).unwrap() <= 1e-12);
    let there = c.evolve(s, 0, cut).unwrap();
    let again = c.evolve(&c.evolve(&there, cut, l).unwrap(), l, cut).unwrap();
    prop_assert!(again.distance_max(&there).unwrap() <= 1e-12);
    prop_assert!((c.propagate_forward(s, l).unwrap().norm() - 1.0).abs() <= 1e-12);
    Ok(())
}

pub fn check_parse_print(doc: &ScenarioDocument) -> Result<(), TestCaseError> {
    let text = print_scenario(doc);
    let parsed = parse_scenario(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&parsed, doc, "{}", text);
    prop_assert_eq!(print_scenario(&parsed), text);
    Ok(())
}
