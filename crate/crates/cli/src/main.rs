//! `weaktrace` command-line driver.
//!
//! Every subcommand loads a scenario (a `.wv` file or a built-in name),
//! runs one analysis and writes a result envelope as JSON or CSV. Flags not
//! given on the command line fall back to the matching `analysis` line of the
//! scenario file.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weaktrace::circuit::{build_scenario, Scenario, ScenarioKind};
use weaktrace::ensemble::{self, EnsembleConfig};
use weaktrace::fringe::dv_inequality_sweep;
use weaktrace::hilbert::{Operator, Pauli};
use weaktrace::interface::dsl::AnalysisStmt;
use weaktrace::interface::emit::{emit, Format, Payload, ResultEnvelope, ScenarioInfo, ScenarioListing};
use weaktrace::interface::{self, LoadedScenario};
use weaktrace::pointer::{lambda_sweep, log_space, GaussianPointer};
use weaktrace::weakvalue::{compound_weak_value, segment_trace_map, two_state_at_cut};

#[derive(Parser)]
#[command(name = "weaktrace", version, about = "Weak values and pointer statistics for pre- and post-selected interferometers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weak value of a (property ×) path projector over named segments.
    Weakvalue {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
        /// Polarization operator multiplying the projector: x, y or z.
        #[arg(long)]
        property: Option<String>,
    },
    /// Forward/backward amplitudes and weak value of every segment.
    TraceMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detector: Option<String>,
    },
    /// Exact postselected pointer statistics over a range of couplings.
    PointerSweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
        /// Single coupling; overrides the range.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Monte Carlo ensemble of weak measurements.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Emit the standard error at every decade of N up to `--n`.
        #[arg(long, conflicts_with = "histogram")]
        precision_curve: bool,
        /// Emit a histogram of the readouts with this many bins.
        #[arg(long)]
        histogram: Option<usize>,
    },
    /// Distinguishability, visibility and leak while tagging inner arm B.
    FringeSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    List {
        #[arg(long, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Show {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file or built-in name, e.g. `nested` or `salih_single_outer:cycles=5,bob=off`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "json")]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    detector: Option<String>,
    /// Comma-separated segment names.
    #[arg(long, value_delimiter = ',')]
    segments: Option<Vec<String>>,
}

enum Failure {
    Input(String),
    Orthogonal(String),
    Io(String),
}

impl From<weaktrace::Error> for Failure {
    fn from(e: weaktrace::Error) -> Self {
        match e {
            weaktrace::Error::OrthogonalPostselection { .. } | weaktrace::Error::NoClick => {
                Failure::Orthogonal(e.to_string())
            }
            weaktrace::Error::Serialization(_) => Failure::Io(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Command-line values with fallbacks from the scenario's `analysis` line.
struct Params<'a> {
    stmt: Option<&'a AnalysisStmt>,
}

impl<'a> Params<'a> {
    fn new(loaded: &'a LoadedScenario, kind: &str) -> Self {
        Self {
            stmt: loaded.document.as_ref().and_then(|d| d.analysis(kind)),
        }
    }

    fn word(&self, cli: Option<String>, key: &str) -> Option<String> {
        cli.or_else(|| self.stmt.and_then(|s| s.word(key)).map(str::to_owned))
    }

    fn words(&self, cli: Option<Vec<String>>, key: &str) -> Option<Vec<String>> {
        cli.or_else(|| self.stmt.and_then(|s| s.words(key)).map(<[String]>::to_vec))
    }

    fn real(&self, cli: Option<f64>, key: &str) -> Outcome<Option<f64>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.stmt {
            Some(s) => s.real(key).map_err(|e| Failure::Input(e.to_string())),
            None => Ok(None),
        }
    }

    fn count(&self, cli: Option<usize>, key: &str) -> Outcome<Option<usize>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.real(None, key)? {
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => Ok(Some(x as usize)),
            Some(x) => Err(Failure::Input(format!("`{key}` must be a non-negative integer, got {x}"))),
            None => Ok(None),
        }
    }

    fn detector(&self, cli: Option<String>) -> Outcome<String> {
        self.word(cli, "detector")
            .ok_or_else(|| Failure::Input("no detector given (use --detector)".into()))
    }

    fn segments(&self, cli: Option<Vec<String>>) -> Outcome<Vec<String>> {
        self.words(cli, "segments")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Failure::Input("no segments given (use --segments)".into()))
    }
}

/// Projector on the union of `segments`, which must share one cut.
fn region_projector(sc: &Scenario, segments: &[String]) -> Outcome<(usize, Operator)> {
    let mut cut = None;
    let mut modes = Vec::new();
    for name in segments {
        let seg = sc.circuit.segment(name)?;
        if cut.is_some_and(|c| c != seg.cut) {
            return Err(Failure::Input(format!(
                "segments {segments:?} lie at different cuts; a single coupling needs one cut"
            )));
        }
        cut = Some(seg.cut);
        modes.extend(sc.circuit.segment_modes(name)?);
    }
    let cut = cut.ok_or_else(|| Failure::Input("no segments given".into()))?;
    Ok((cut, Operator::projector(sc.circuit.basis().clone(), &modes)?))
}

fn property_operator(sc: &Scenario, name: Option<&str>) -> Outcome<Operator> {
    let basis = sc.circuit.basis().clone();
    Ok(match name {
        None => Operator::identity(basis),
        Some("x") => Operator::pauli(basis, Pauli::X),
        Some("y") => Operator::pauli(basis, Pauli::Y),
        Some("z") => Operator::pauli(basis, Pauli::Z),
        Some(other) => return Err(Failure::Input(format!("unknown property `{other}` (expected x, y or z)"))),
    })
}

fn load(spec: &str) -> Outcome<LoadedScenario> {
    Ok(interface::load(spec)?)
}

fn write_output(env: &ResultEnvelope, format: Format, out: Option<&PathBuf>) -> Outcome<()> {
    let bytes = emit(env, format)?;
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(&bytes)
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn pointer(sigma: Option<f64>) -> Outcome<GaussianPointer> {
    Ok(GaussianPointer::new(0.0, sigma.unwrap_or(1.0))?)
}

fn execute(command: Command) -> Outcome<()> {
    match command {
        Command::Weakvalue { common, target, property } => {
            let loaded = load(&common.scenario)?;
            let p = Params::new(&loaded, "weakvalue");
            let sc = &loaded.scenario;
            let detector = p.detector(target.detector)?;
            let segments = p.segments(target.segments)?;
            let property = p.word(property, "property");
            let op = property_operator(sc, property.as_deref())?;
            let w = compound_weak_value(&op, &segments, sc, &detector)?;
            let env = ResultEnvelope::new(&sc.name, Payload::Weakvalue(w))
                .with_note(format!("detector {detector}, segments {}", segments.join(",")))
                .with_note(format!("property {}", property.as_deref().unwrap_or("identity")));
            write_output(&env, common.format, common.out.as_ref())
        }
        Command::TraceMap { common, detector } => {
            let loaded = load(&common.scenario)?;
            let p = Params::new(&loaded, "trace_map");
            let detector = p.detector(detector)?;
            let map = segment_trace_map(&loaded.scenario, &detector)?;
            let env = ResultEnvelope::new(&loaded.scenario.name, Payload::TraceMap(map));
            write_output(&env, common.format, common.out.as_ref())
        }
        Command::PointerSweep {
            common,
            target,
            lambda,
            lambda_min,
            lambda_max,
            points,
            sigma,
        } => {
            let loaded = load(&common.scenario)?;
            let p = Params::new(&loaded, "pointer_sweep");
            let sc = &loaded.scenario;
            let detector = p.detector(target.detector)?;
            let segments = p.segments(target.segments)?;
            let (cut, op) = region_projector(sc, &segments)?;
            let lambdas = match lambda {
                Some(l) => vec![l],
                None => {
                    let lo = p.real(lambda_min, "lambda_min")?.unwrap_or(1e-4);
                    let hi = p.real(lambda_max, "lambda_max")?.unwrap_or(1e-1);
                    let n = p.count(points, "points")?.unwrap_or(20);
                    if !(lo > 0.0 && hi >= lo && n > 0) {
                        return Err(Failure::Input(format!(
                            "need 0 < lambda_min <= lambda_max and points > 0 (got {lo}, {hi}, {n})"
                        )));
                    }
                    log_space(lo, hi, n)
                }
            };
            let ptr = pointer(p.real(sigma, "sigma")?)?;
            let tsv = two_state_at_cut(sc, &detector, cut)?;
            let rows = lambda_sweep(&tsv.forward, &op, &tsv.backward, &ptr, &lambdas)?;
            let env = ResultEnvelope::new(&sc.name, Payload::PointerSweep(rows))
                .with_note(format!("detector {detector}, segments {}, sigma {}", segments.join(","), ptr.sigma));
            write_output(&env, common.format, common.out.as_ref())
        }
        Command::Ensemble {
            common,
            target,
            lambda,
            sigma,
            n,
            seed,
            precision_curve,
            histogram,
        } => {
            let loaded = load(&common.scenario)?;
            let p = Params::new(&loaded, "ensemble");
            let sc = &loaded.scenario;
            let detector = p.detector(target.detector)?;
            let segments = p.segments(target.segments)?;
            let (cut, op) = region_projector(sc, &segments)?;
            let seed = match seed {
                Some(s) => s,
                None => p.count(None, "seed")?.unwrap_or(1) as u64,
            };
            let cfg = EnsembleConfig {
                scenario: sc.clone(),
                detector: detector.clone(),
                cut,
                operator: op,
                pointer: pointer(p.real(sigma, "sigma")?)?,
                lambda: p
                    .real(lambda, "lambda")?
                    .ok_or_else(|| Failure::Input("no coupling given (use --lambda)".into()))?,
                n_particles: p.count(n, "n")?.unwrap_or(100_000),
                seed,
            };
            let payload = if precision_curve {
                let mut grid = vec![];
                let mut k = 1000usize;
                while k < cfg.n_particles {
                    grid.push(k);
                    k = k.saturating_mul(10);
                }
                grid.push(cfg.n_particles);
                Payload::PrecisionCurve(ensemble::precision_curve(&cfg, &grid)?)
            } else {
                let r = ensemble::run(&cfg)?;
                match histogram {
                    Some(bins) => {
                        let half = 5.0 * cfg.pointer.sigma;
                        let lo = cfg.pointer.mean - half + r.target.unwrap_or(0.0).min(0.0) * cfg.lambda.abs();
                        let hi = cfg.pointer.mean + half + r.target.unwrap_or(0.0).max(0.0) * cfg.lambda.abs();
                        Payload::Histogram(r.histogram(lo, hi, bins.max(1)))
                    }
                    None => Payload::Ensemble(r.summary()),
                }
            };
            let env = ResultEnvelope::new(&sc.name, payload)
                .with_seed(seed)
                .with_note(format!(
                    "detector {detector}, segments {}, lambda {}, sigma {}, rng ChaCha8",
                    segments.join(","),
                    cfg.lambda,
                    cfg.pointer.sigma
                ));
            write_output(&env, common.format, common.out.as_ref())
        }
        Command::FringeSweep { common, points } => {
            let loaded = load(&common.scenario)?;
            let p = Params::new(&loaded, "fringe_sweep");
            let n = p.count(points, "points")?.unwrap_or(50);
            let grid: Vec<f64> = match n {
                0 => vec![],
                1 => vec![0.0],
                _ => (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect(),
            };
            let reports = dv_inequality_sweep(&loaded.scenario, &grid)?;
            let env = ResultEnvelope::new(&loaded.scenario.name, Payload::FringeSweep(reports))
                .with_note("theta_B on [0, pi], arm C untagged");
            write_output(&env, common.format, common.out.as_ref())
        }
        Command::Scenario { action } => match action {
            ScenarioAction::List { format, out } => {
                let infos = ScenarioKind::NAMES
                    .iter()
                    .map(|name| {
                        let sc = build_scenario(ScenarioKind::from_name(name)?)?;
                        Ok(ScenarioInfo {
                            name: sc.name,
                            description: sc.description,
                        })
                    })
                    .collect::<weaktrace::Result<Vec<_>>>()?;
                let env = ResultEnvelope::new("builtin", Payload::ScenarioList(infos));
                write_output(&env, format, out.as_ref())
            }
            ScenarioAction::Show { common } => {
                let loaded = load(&common.scenario)?;
                let c = &loaded.scenario.circuit;
                let listing = ScenarioListing {
                    name: loaded.scenario.name.clone(),
                    dimension: c.basis().dim(),
                    layers: c.num_layers(),
                    detectors: c.detectors().keys().cloned().collect(),
                    segments: c.segments().iter().map(|s| s.name.clone()).collect(),
                    source: loaded.source.clone(),
                };
                let env = ResultEnvelope::new(&loaded.scenario.name, Payload::ScenarioShow(listing));
                write_output(&env, common.format, common.out.as_ref())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Orthogonal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
