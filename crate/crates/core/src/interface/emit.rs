//! Result envelopes and their JSON/CSV encodings.
//!
//! JSON is pretty-printed with fields in declaration order, so identical
//! results give identical bytes. Complex numbers appear as
//! `{"re": x, "im": y}` in JSON and as paired `<name>_re,<name>_im` columns
//! in CSV.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSummary, HistogramBin, PrecisionPoint};
use crate::error::{Error, Result};
use crate::fringe::FringeReport;
use crate::pointer::SweepRow;
use crate::weakvalue::{SegmentTraceMap, WeakValueResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
}

/// Scenario text plus a summary of the built circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioListing {
    pub name: String,
    pub dimension: usize,
    pub layers: usize,
    pub detectors: Vec<String>,
    pub segments: Vec<String>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", content = "payload", rename_all = "kebab-case")]
pub enum Payload {
    Weakvalue(WeakValueResult),
    TraceMap(SegmentTraceMap),
    PointerSweep(Vec<SweepRow>),
    Ensemble(EnsembleSummary),
    PrecisionCurve(Vec<PrecisionPoint>),
    Histogram(Vec<HistogramBin>),
    FringeSweep(Vec<FringeReport>),
    ScenarioList(Vec<ScenarioInfo>),
    ScenarioShow(ScenarioListing),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Weakvalue(_) => "weakvalue",
            Payload::TraceMap(_) => "trace-map",
            Payload::PointerSweep(_) => "pointer-sweep",
            Payload::Ensemble(_) => "ensemble",
            Payload::PrecisionCurve(_) => "precision-curve",
            Payload::Histogram(_) => "histogram",
            Payload::FringeSweep(_) => "fringe-sweep",
            Payload::ScenarioList(_) => "scenario-list",
            Payload::ScenarioShow(_) => "scenario-show",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEnvelope {
    pub tool_version: String,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub payload: Payload,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ResultEnvelope {
    pub fn new(scenario: impl Into<String>, payload: Payload) -> Self {
        Self {
            tool_version: crate::TOOL_VERSION.to_owned(),
            scenario: scenario.into(),
            seed: None,
            payload,
            notes: vec![],
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(header).map_err(ser)?;
    for r in rows {
        w.write_record(&r).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

fn csv_payload(p: &Payload) -> Result<Vec<u8>> {
    match p {
        Payload::Weakvalue(w) => csv_table(
            &[
                "value_re",
                "value_im",
                "numerator_re",
                "numerator_im",
                "denominator_re",
                "denominator_im",
                "postselection_probability",
            ],
            [vec![
                w.value.re.to_string(),
                w.value.im.to_string(),
                w.numerator.re.to_string(),
                w.numerator.im.to_string(),
                w.denominator.re.to_string(),
                w.denominator.im.to_string(),
                w.postselection_probability.to_string(),
            ]],
        ),
        Payload::TraceMap(m) => csv_table(
            &[
                "segment",
                "cut",
                "modes",
                "conditional_re",
                "conditional_im",
                "weak_value_re",
                "weak_value_im",
                "sign",
            ],
            m.segments.iter().map(|s| {
                vec![
                    s.name.clone(),
                    s.cut.to_string(),
                    s.modes.join(" "),
                    s.conditional.re.to_string(),
                    s.conditional.im.to_string(),
                    s.weak_value.re.to_string(),
                    s.weak_value.im.to_string(),
                    serde_json::to_value(s.sign)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                ]
            }),
        ),
        Payload::PointerSweep(rows) => csv_table(
            &["lambda", "mean_shift", "first_order_mean_shift", "residual_norm", "success_probability"],
            rows.iter().map(|r| {
                vec![
                    r.lambda.to_string(),
                    r.mean_shift.to_string(),
                    r.first_order_mean_shift.to_string(),
                    r.residual_norm.to_string(),
                    r.success_probability.to_string(),
                ]
            }),
        ),
        Payload::Ensemble(s) => csv_table(
            &[
                "n_particles",
                "n_postselected",
                "estimate",
                "stderr",
                "target",
                "success_probability",
                "readout_std",
                "empty",
            ],
            [vec![
                s.n_particles.to_string(),
                s.n_postselected.to_string(),
                opt(s.estimate),
                opt(s.stderr),
                opt(s.target),
                s.success_probability.to_string(),
                opt(s.readout_std),
                s.empty.to_string(),
            ]],
        ),
        Payload::PrecisionCurve(pts) => csv_table(
            &["n", "n_postselected", "estimate", "stderr"],
            pts.iter().map(|p| {
                vec![p.n.to_string(), p.n_postselected.to_string(), opt(p.estimate), opt(p.stderr)]
            }),
        ),
        Payload::Histogram(bins) => csv_table(
            &["lo", "hi", "count"],
            bins.iter().map(|b| vec![b.lo.to_string(), b.hi.to_string(), b.count.to_string()]),
        ),
        Payload::FringeSweep(rs) => csv_table(
            &["theta_b", "theta_c", "D", "V", "leak", "dv_sum"],
            rs.iter().map(|r| {
                vec![
                    r.theta_b.to_string(),
                    r.theta_c.to_string(),
                    r.distinguishability.to_string(),
                    r.visibility.to_string(),
                    r.leak_probability.to_string(),
                    r.dv_sum().to_string(),
                ]
            }),
        ),
        Payload::ScenarioList(items) => csv_table(
            &["name", "description"],
            items.iter().map(|i| vec![i.name.clone(), i.description.clone()]),
        ),
        Payload::ScenarioShow(_) => Err(Error::UnsupportedFormat {
            payload: p.kind().into(),
            format: Format::Csv.to_string(),
        }),
    }
}

/// Encodes an envelope. CSV carries only the payload table.
pub fn emit(result: &ResultEnvelope, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(result).map_err(|e| Error::Serialization(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => csv_payload(&result.payload),
    }
}
