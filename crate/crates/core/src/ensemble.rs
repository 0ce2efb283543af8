//! Monte Carlo over repeated weak-measure-then-postselect runs.
//!
//! Each particle is coupled to a fresh Gaussian pointer, postselected with
//! the exact success probability, and on success contributes one pointer
//! reading drawn from the exact postselected density.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`). Particles are
//! processed in chunks of [`CHUNK`]; chunk `c` uses the generator seeded with
//! `seed_from_u64(seed)` on stream `c`. Every particle draws one uniform for
//! the postselection and, on success, one more for its reading, so the
//! readout list is the same whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Scenario;
use crate::error::{Error, Result};
use crate::hilbert::Operator;
use crate::pointer::{couple_exact, GaussianPointer, PostselectedPointer};
use crate::weakvalue::two_state_at_cut;

/// Particles per random stream.
pub const CHUNK: usize = 1 << 16;
/// Nodes of the inverse-CDF table.
pub const SAMPLER_POINTS: usize = 8192;
/// Half-width of the sampling window in units of sigma (beyond the largest
/// branch shift).
pub const SAMPLER_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub scenario: Scenario,
    pub detector: String,
    /// Cut at which the pointer couples.
    pub cut: usize,
    pub operator: Operator,
    pub pointer: GaussianPointer,
    pub lambda: f64,
    pub n_particles: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("n_particles must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ensemble coupling must be finite and nonzero (got {})",
                self.lambda
            )));
        }
        if !self.operator.is_hermitian(crate::hilbert::HERMITIAN_TOL) {
            return Err(Error::NotHermitian(self.operator.hermitian_deviation()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub n_particles: usize,
    pub n_postselected: usize,
    /// Pointer positions of the postselected particles, in particle order.
    pub readouts: Vec<f64>,
    /// `(mean readout − pointer mean) / λ`; `None` for an empty run.
    pub estimate: Option<f64>,
    /// Sample std / √n_postselected / λ; needs two or more readouts.
    pub stderr: Option<f64>,
    /// `Re O_w`, or `None` when the weak value is undefined.
    pub target: Option<f64>,
    pub success_probability: f64,
}

impl EnsembleRun {
    pub fn is_empty(&self) -> bool {
        self.n_postselected == 0
    }

    /// Sample standard deviation of the raw readouts.
    pub fn readout_std(&self) -> Option<f64> {
        sample_mean_std(&self.readouts).map(|(_, s)| s)
    }

    pub fn summary(&self) -> EnsembleSummary {
        EnsembleSummary {
            n_particles: self.n_particles,
            n_postselected: self.n_postselected,
            estimate: self.estimate,
            stderr: self.stderr,
            target: self.target,
            success_probability: self.success_probability,
            readout_std: self.readout_std(),
            empty: self.is_empty(),
        }
    }

    /// Counts of readouts in `bins` equal bins over `[lo, hi)`.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &self.readouts {
            let b = ((x - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            }
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lo: lo + i as f64 * width,
                hi: lo + (i + 1) as f64 * width,
                count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_particles: usize,
    pub n_postselected: usize,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    pub success_probability: f64,
    pub readout_std: Option<f64>,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn sample_mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Inverse-CDF sampler over a tabulated density.
#[derive(Debug, Clone)]
pub struct GridSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridSampler {
    pub fn new(pp: &PostselectedPointer) -> Self {
        let sigma = pp.pointer.sigma;
        let reach = pp.shifts.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let lo = pp.pointer.mean - SAMPLER_HALF_WIDTH * sigma - reach;
        let hi = pp.pointer.mean + SAMPLER_HALF_WIDTH * sigma + reach;
        let dx = (hi - lo) / (SAMPLER_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..SAMPLER_POINTS).map(|i| lo + i as f64 * dx).collect();
        let density: Vec<f64> = xs.iter().map(|x| pp.density(*x)).collect();
        let mut cdf = Vec::with_capacity(SAMPLER_POINTS);
        cdf.push(0.0);
        for w in density.windows(2) {
            let last = *cdf.last().expect("nonempty");
            cdf.push(last + 0.5 * (w[0] + w[1]) * dx);
        }
        let total = *cdf.last().expect("nonempty");
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    /// Maps a uniform `u ∈ [0, 1)` to a position.
    pub fn sample(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|c| *c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[j - 1] + t * (self.xs[j] - self.xs[j - 1])
    }
}

pub fn run(cfg: &EnsembleConfig) -> Result<EnsembleRun> {
    cfg.validate()?;
    let tsv = two_state_at_cut(&cfg.scenario, &cfg.detector, cfg.cut)?;
    let target = tsv.weak_value(&cfg.operator).ok().map(|w| w.value.re);
    let branched = couple_exact(&tsv.forward, &cfg.operator, &cfg.pointer, cfg.lambda)?;
    let pp = match PostselectedPointer::new(&branched, &tsv.backward) {
        Ok(pp) => pp,
        Err(Error::NoClick) => {
            return Ok(EnsembleRun {
                n_particles: cfg.n_particles,
                n_postselected: 0,
                readouts: vec![],
                estimate: None,
                stderr: None,
                target,
                success_probability: 0.0,
            })
        }
        Err(e) => return Err(e),
    };
    let p = pp.success_probability.min(1.0);
    let sampler = GridSampler::new(&pp);

    let chunks = cfg.n_particles.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(cfg.n_particles - c * CHUNK);
            let mut out = Vec::with_capacity((len as f64 * p * 1.1) as usize + 16);
            for _ in 0..len {
                if rng.random::<f64>() < p {
                    out.push(sampler.sample(rng.random::<f64>()));
                }
            }
            out
        })
        .collect();
    let readouts: Vec<f64> = per_chunk.concat();

    let n_post = readouts.len();
    let mu = cfg.pointer.mean;
    let estimate = (n_post > 0)
        .then(|| (readouts.iter().sum::<f64>() / n_post as f64 - mu) / cfg.lambda);
    let stderr = sample_mean_std(&readouts).map(|(_, s)| s / (n_post as f64).sqrt() / cfg.lambda.abs());
    Ok(EnsembleRun {
        n_particles: cfg.n_particles,
        n_postselected: n_post,
        readouts,
        estimate,
        stderr,
        target,
        success_probability: pp.success_probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub n: usize,
    pub n_postselected: usize,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
}

/// One run per ensemble size, all with the configured seed (so smaller runs
/// are prefixes of larger ones).
pub fn precision_curve(cfg: &EnsembleConfig, n_grid: &[usize]) -> Result<Vec<PrecisionPoint>> {
    n_grid
        .iter()
        .map(|&n| {
            let r = run(&EnsembleConfig {
                n_particles: n,
                ..cfg.clone()
            })?;
            Ok(PrecisionPoint {
                n,
                n_postselected: r.n_postselected,
                estimate: r.estimate,
                stderr: r.stderr,
            })
        })
        .collect()
}

/// Ensemble size needed to resolve a shift of `λ` against pointer noise
/// `sigma` at `k` standard errors: `⌈(kσ/λ)²⌉`.
pub fn required_n(sigma: f64, lambda: f64, k: f64) -> Result<u64> {
    if !(sigma > 0.0 && lambda > 0.0 && k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "required_n needs positive inputs (got sigma {sigma}, lambda {lambda}, k {k})"
        )));
    }
    let x = (k * sigma / lambda).powi(2);
    if !x.is_finite() || x > u64::MAX as f64 {
        return Err(Error::InvalidParameter(format!("required_n overflows ({x:e})")));
    }
    // (3·1/0.01)² evaluates to 90000.00000000001 in floating point.
    let nearest = x.round();
    let n = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok(n.max(1.0) as u64)
}
