//! Von Neumann pointer coupling with a Gaussian pointer.
//!
//! The interaction `exp(−iλ O ⊗ P_d)` translates the pointer by `λ o_k` in
//! each eigen-branch `Π_k|ψ_i⟩` of `O`. After postselecting `⟨ψ_f|` the
//! pointer wavefunction is `χ(x) = Σ_k c_k φ(x − λ o_k)` with
//! `c_k = ⟨ψ_f|Π_k|ψ_i⟩`. Every statistic below is a closed-form sum of
//! Gaussian overlap integrals; no sampling is involved.
//!
//! Units: `ħ = 1`, the interaction time is absorbed into `λ`, and the pointer
//! moves toward `+λ o_k` (so the weak-limit shift is `+λ Re O_w`).
//!
//! For finite `λ` the postselected pointer density is a mixture of
//! interfering Gaussians, not a Gaussian centred on `λ Re O_w`; the latter
//! only holds in the weak limit.

pub mod numeric;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Scenario;
use crate::error::{Error, Result};
use crate::hilbert::{Operator, StateVector, C64};
use crate::weakvalue::ORTHOGONALITY_EPS;

/// Eigenvalues closer than this are treated as one branch.
const DEGENERACY_TOL: f64 = 1e-9;

/// Planck constant, J·s (exact SI).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light, m/s (exact SI).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.spacing();
        (0..self.points).map(move |i| self.lo + i as f64 * dx)
    }
}

/// Gaussian pointer with position spread `sigma` (the standard deviation of
/// `|φ(x)|²`) centred on `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPointer {
    pub mean: f64,
    pub sigma: f64,
    pub grid: Option<Grid>,
}

impl GaussianPointer {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pointer needs finite mean and sigma > 0 (got mean {mean}, sigma {sigma})"
            )));
        }
        Ok(Self {
            mean,
            sigma,
            grid: None,
        })
    }

    /// Attaches an evaluation grid; it must span at least 8σ with ≥ 256 points.
    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        if grid.points < 256 || !(grid.hi - grid.lo >= 8.0 * self.sigma) {
            return Err(Error::InvalidParameter(format!(
                "pointer grid must cover 8 sigma with at least 256 points (got {grid:?})"
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    /// Grid of `points` nodes spanning `mean ± half_width·σ`.
    pub fn centred_grid(&self, half_width: f64, points: usize) -> Grid {
        Grid {
            lo: self.mean - half_width * self.sigma,
            hi: self.mean + half_width * self.sigma,
            points,
        }
    }

    /// Wavefunction `φ(x − shift)`, real and normalized.
    pub fn amplitude(&self, x: f64, shift: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let d = x - self.mean - shift;
        (2.0 * std::f64::consts::PI * s2).powf(-0.25) * (-d * d / (4.0 * s2)).exp()
    }

    /// `⟨φ(· − a)|φ(· − b)⟩`.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        (-d * d / (8.0 * self.sigma * self.sigma)).exp()
    }

    /// `⟨φ(· − a)|φ(· − b)⟩ − 1`, accurate for nearby shifts.
    fn overlap_m1(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        (-d * d / (8.0 * self.sigma * self.sigma)).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub eigenvalue: f64,
    /// `λ · eigenvalue`
    pub shift: f64,
    /// Unnormalized `Π_k|ψ_i⟩`.
    pub state: StateVector,
}

/// System ⊗ pointer state after exact coupling, kept in branch form.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchedState {
    pub lambda: f64,
    pub pointer: GaussianPointer,
    pub branches: Vec<Branch>,
}

impl BranchedState {
    /// `Σ ‖Π_k ψ_i‖²`, one for a normalized preselection.
    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|b| b.state.norm().powi(2)).sum()
    }

    /// Carries every branch from cut `from` to cut `to` of a circuit.
    pub fn evolve(&self, sc: &Scenario, from: usize, to: usize) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    state: sc.circuit.evolve(&b.state, from, to)?,
                    ..b.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            branches,
            ..self.clone()
        })
    }
}

/// Exact action of `exp(−iλ O ⊗ P_d)` on `|ψ_i⟩ ⊗ |φ⟩`.
pub fn couple_exact(
    pre: &StateVector,
    op: &Operator,
    pointer: &GaussianPointer,
    lambda: f64,
) -> Result<BranchedState> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("coupling {lambda} is not finite")));
    }
    let eig = op.eigh()?;
    let branches = eig
        .spectral_projectors(DEGENERACY_TOL)
        .into_iter()
        .map(|(eigenvalue, projector)| {
            Ok(Branch {
                eigenvalue,
                shift: lambda * eigenvalue,
                state: projector.apply(pre)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchedState {
        lambda,
        pointer: *pointer,
        branches,
    })
}

/// Pointer wavefunction `Σ c_k φ(x − s_k)` left after a successful
/// postselection (unnormalized; its squared norm is the success probability).
#[derive(Debug, Clone, PartialEq)]
pub struct PostselectedPointer {
    pub pointer: GaussianPointer,
    pub lambda: f64,
    pub coefficients: Vec<C64>,
    pub eigenvalues: Vec<f64>,
    pub shifts: Vec<f64>,
    pub success_probability: f64,
}

impl PostselectedPointer {
    pub fn new(b: &BranchedState, post: &StateVector) -> Result<Self> {
        let coefficients = b
            .branches
            .iter()
            .map(|br| post.inner(&br.state))
            .collect::<Result<Vec<_>>>()?;
        if coefficients.iter().all(|c| c.norm() <= 1e-14) {
            return Err(Error::NoClick);
        }
        let shifts: Vec<f64> = b.branches.iter().map(|br| br.shift).collect();
        let mut out = Self {
            pointer: b.pointer,
            lambda: b.lambda,
            coefficients,
            eigenvalues: b.branches.iter().map(|br| br.eigenvalue).collect(),
            shifts,
            success_probability: 0.0,
        };
        out.success_probability = out.gram_sum(|_, _| 1.0).max(0.0);
        if out.success_probability <= 0.0 {
            return Err(Error::NoClick);
        }
        Ok(out)
    }

    /// `Σ_kl Re(c_k* c_l) ⟨φ_k|φ_l⟩ f(s_k, s_l)`.
    fn gram_sum(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (k, (ck, sk)) in self.coefficients.iter().zip(&self.shifts).enumerate() {
            for (l, (cl, sl)) in self.coefficients.iter().zip(&self.shifts).enumerate() {
                let w = (ck.conj() * cl).re;
                let g = if k == l { 1.0 } else { self.pointer.overlap(*sk, *sl) };
                acc += w * g * f(*sk, *sl);
            }
        }
        acc
    }

    /// Exact mean displacement of the postselected pointer.
    pub fn mean_shift(&self) -> f64 {
        self.gram_sum(|a, b| 0.5 * (a + b)) / self.success_probability
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.pointer.sigma.powi(2);
        let second = self.gram_sum(|a, b| s2 + (0.5 * (a + b)).powi(2)) / self.success_probability;
        second - self.mean_shift().powi(2)
    }

    /// Normalized density of the pointer position at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let amp: C64 = self
            .coefficients
            .iter()
            .zip(&self.shifts)
            .map(|(c, s)| c * self.pointer.amplitude(x, *s))
            .sum();
        amp.norm_sqr() / self.success_probability
    }

    /// `Σ c_k o_k / Σ c_k`, or `None` when `⟨ψ_f|ψ_i⟩` vanishes.
    pub fn weak_value(&self) -> Option<C64> {
        let den: C64 = self.coefficients.iter().sum();
        if den.norm() <= ORTHOGONALITY_EPS {
            return None;
        }
        let num: C64 = self
            .coefficients
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, o)| c * o)
            .sum();
        Some(num / den)
    }

    /// Distance (up to global phase) between the exact postselected pointer
    /// state and the first-order state `φ(x − λ O_w)`, both normalized.
    /// The first-order state is the Gaussian translated by the complex amount
    /// `λ O_w`.
    pub fn first_order_residual(&self) -> Option<f64> {
        let w = self.weak_value()?;
        let z = w * self.lambda;
        let s2 = self.pointer.sigma.powi(2);
        let overlap: C64 = self
            .coefficients
            .iter()
            .zip(&self.shifts)
            .map(|(c, s)| {
                let d = C64::new(*s, 0.0) - z;
                c.conj() * (-(d * d) / (8.0 * s2)).exp()
            })
            .sum();
        let first_order_norm = (z.im * z.im / (4.0 * s2)).exp();
        let fidelity = overlap.norm() / (self.success_probability.sqrt() * first_order_norm);
        Some((2.0 - 2.0 * fidelity).max(0.0).sqrt())
    }

    pub fn outcome(&self) -> PointerOutcome {
        let weak_value = self.weak_value();
        PointerOutcome {
            success_probability: self.success_probability,
            mean_shift: self.mean_shift(),
            variance: self.variance(),
            pointer_density: self
                .pointer
                .grid
                .map(|g| g.xs().map(|x| [x, self.density(x)]).collect()),
            first_order_mean_shift: weak_value.map(|w| self.lambda * w.re),
            residual_norm: self.first_order_residual(),
            weak_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerOutcome {
    pub success_probability: f64,
    pub mean_shift: f64,
    pub variance: f64,
    /// `[x, density]` samples on the pointer grid, when one is attached.
    pub pointer_density: Option<Vec<[f64; 2]>>,
    /// `λ Re O_w`; `None` when the weak value is undefined.
    pub first_order_mean_shift: Option<f64>,
    pub residual_norm: Option<f64>,
    #[serde(with = "opt_complex")]
    pub weak_value: Option<C64>,
}

mod opt_complex {
    use crate::hilbert::C64;
    use crate::serde_complex::Cplx;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
        c.map(Cplx::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<C64>, D::Error> {
        Ok(Option::<Cplx>::deserialize(d)?.map(Into::into))
    }
}

pub fn postselect_pointer(b: &BranchedState, post: &StateVector) -> Result<PointerOutcome> {
    Ok(PostselectedPointer::new(b, post)?.outcome())
}

/// `‖exact − first-order‖` of the normalized postselected pointer states.
pub fn first_order_residual(b: &BranchedState, post: &StateVector) -> Result<f64> {
    let p = PostselectedPointer::new(b, post)?;
    p.first_order_residual().ok_or(Error::OrthogonalPostselection {
        overlap: p.coefficients.iter().sum::<C64>().norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_shift: f64,
    pub first_order_mean_shift: f64,
    pub residual_norm: f64,
    pub success_probability: f64,
}

/// Postselected pointer statistics for each coupling in `lambdas`.
pub fn lambda_sweep(
    pre: &StateVector,
    op: &Operator,
    post: &StateVector,
    pointer: &GaussianPointer,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let b = couple_exact(pre, op, pointer, lambda)?;
            let p = PostselectedPointer::new(&b, post)?;
            let w = p.weak_value().ok_or(Error::OrthogonalPostselection {
                overlap: post.inner(pre)?.norm(),
            })?;
            Ok(SweepRow {
                lambda,
                mean_shift: p.mean_shift(),
                first_order_mean_shift: lambda * w.re,
                residual_norm: p.first_order_residual().unwrap_or(f64::NAN),
                success_probability: p.success_probability,
            })
        })
        .collect()
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Probability of a click at `dark_detector` when the pointer is coupled to
/// the projector on `arm_segment` with strength `lambda`.
///
/// The scenario must be calibrated so that the dark detector receives no
/// light without coupling; the returned value is the coupling-induced
/// probability, exactly zero at `lambda = 0`.
pub fn dark_port_leak(
    sc: &Scenario,
    dark_detector: &str,
    arm_segment: &str,
    pointer: &GaussianPointer,
    lambda: f64,
) -> Result<f64> {
    let circuit = &sc.circuit;
    let dark_modes = circuit.detector_modes(dark_detector)?;
    let output = circuit.propagate_forward(&sc.input, circuit.num_layers())?;
    let dark_amplitude = output.probability_on(&dark_modes)?.sqrt();
    if dark_amplitude > 1e-12 {
        return Err(Error::NotDarkPort {
            amplitude: dark_amplitude,
        });
    }
    let seg = circuit.segment(arm_segment)?;
    let arm = Operator::projector(circuit.basis().clone(), &circuit.segment_modes(arm_segment)?)?;
    let at_arm = circuit.propagate_forward(&sc.input, seg.cut)?;
    let coupled = couple_exact(&at_arm, &arm, pointer, lambda)?.evolve(sc, seg.cut, circuit.num_layers())?;

    let dark = Operator::projector(circuit.basis().clone(), &dark_modes)?;
    let projected = coupled
        .branches
        .iter()
        .map(|b| dark.apply(&b.state))
        .collect::<Result<Vec<_>>>()?;
    // P(λ) = Σ_kl ⟨s_k|Π|s_l⟩ G_kl and Σ_kl ⟨s_k|Π|s_l⟩ = P(0) = 0.
    let mut leak = 0.0;
    for (k, (sk, bk)) in projected.iter().zip(&coupled.branches).enumerate() {
        for (sl, bl) in projected.iter().zip(&coupled.branches).skip(k + 1) {
            let m = sk.inner(sl)?.re;
            leak += 2.0 * m * pointer.overlap_m1(bk.shift, bl.shift);
        }
    }
    Ok(leak.max(0.0))
}

/// Fraction of a photon's energy transferred to a free mirror on normal
/// reflection, `2h / (m c λ)` (non-relativistic recoil).
pub fn mirror_recoil_fraction(wavelength: f64, mirror_mass: f64) -> Result<f64> {
    if !(wavelength > 0.0 && mirror_mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavelength and mass must be positive (got {wavelength}, {mirror_mass})"
        )));
    }
    if mirror_mass.is_infinite() {
        return Ok(0.0);
    }
    Ok(2.0 * PLANCK / (mirror_mass * SPEED_OF_LIGHT * wavelength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_scenario, ScenarioKind};
    use crate::hilbert::{Basis, ModeLabel};
    use crate::weakvalue::two_state_at_cut;

    fn pointer() -> GaussianPointer {
        GaussianPointer::new(0.0, 1.0).unwrap()
    }

    fn nested_projector(path: &[&str]) -> (StateVector, Operator, StateVector) {
        let sc = build_scenario(ScenarioKind::Nested).unwrap();
        let tsv = two_state_at_cut(&sc, "D2", 4).unwrap();
        let b = sc.circuit.basis().clone();
        let labels: Vec<ModeLabel> = path.iter().map(|p| ModeLabel::path(*p)).collect();
        let op = Operator::projector(b, &labels).unwrap();
        (tsv.forward, op, tsv.backward)
    }

    fn outcome(path: &[&str], lambda: f64) -> PointerOutcome {
        let (pre, op, post) = nested_projector(path);
        let b = couple_exact(&pre, &op, &pointer(), lambda).unwrap();
        postselect_pointer(&b, &post).unwrap()
    }

    #[test]
    fn pointer_validation() {
        assert!(GaussianPointer::new(0.0, 0.0).is_err());
        assert!(GaussianPointer::new(0.0, -1.0).is_err());
        let p = pointer();
        assert!(p.with_grid(Grid { lo: -2.0, hi: 2.0, points: 512 }).is_err());
        assert!(p.with_grid(Grid { lo: -5.0, hi: 5.0, points: 100 }).is_err());
        assert!(p.with_grid(p.centred_grid(5.0, 256)).is_ok());
    }

    #[test]
    fn identity_coupling_is_a_global_translation() {
        let b = Basis::paths(&["a", "b"]).unwrap();
        let s = StateVector::new(b.clone(), vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let br = couple_exact(&s, &Operator::identity(b), &pointer(), 0.3).unwrap();
        assert_eq!(br.branches.len(), 1);
        assert!((br.branches[0].shift - 0.3).abs() < 1e-12);
        let out = postselect_pointer(&br, &s).unwrap();
        assert!((out.mean_shift - 0.3).abs() < 1e-12);
        assert!(out.residual_norm.unwrap() < 1e-7);
        assert!(first_order_residual(&br, &s).unwrap() < 1e-7);
    }

    #[test]
    fn two_branch_coupling() {
        let b = Basis::paths(&["0", "1"]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = StateVector::new(b.clone(), vec![C64::new(h, 0.0), C64::new(h, 0.0)]).unwrap();
        let p1 = Operator::projector(b, [&ModeLabel::path("0")]).unwrap();
        let br = couple_exact(&s, &p1, &pointer(), 0.5).unwrap();
        assert_eq!(br.branches.len(), 2);
        assert!((br.total_weight() - 1.0).abs() < 1e-10);
        let mut shifts: Vec<f64> = br.branches.iter().map(|b| b.shift).collect();
        shifts.sort_by(f64::total_cmp);
        assert_eq!(shifts, [0.0, 0.5]);
        for b in &br.branches {
            assert!((b.state.norm().powi(2) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_leaves_a_product_state() {
        let (pre, op, post) = nested_projector(&["B"]);
        let br = couple_exact(&pre, &op, &pointer(), 0.0).unwrap();
        assert!(br.branches.iter().all(|b| b.shift == 0.0));
        let out = postselect_pointer(&br, &post).unwrap();
        assert_eq!(out.residual_norm, Some(0.0));
        assert!(out.mean_shift.abs() < 1e-15);
        assert!((out.success_probability - 0.25).abs() < 1e-12);
        assert_eq!(first_order_residual(&br, &post).unwrap(), 0.0);
    }

    #[test]
    fn weak_limit_shifts_follow_weak_values() {
        let lambda = 1e-3;
        for (path, wv) in [(&["A"][..], 1.0), (&["B", "C"][..], 0.0), (&["C"][..], -0.5), (&["B"][..], 0.5)] {
            let out = outcome(path, lambda);
            assert!((out.mean_shift / lambda - wv).abs() < 1e-5, "{path:?}: {}", out.mean_shift);
            assert!((out.first_order_mean_shift.unwrap() - lambda * wv).abs() < 1e-15);
        }
    }

    #[test]
    fn eigenstate_pre_and_post_shift_exactly() {
        let b = Basis::paths(&["0", "1"]).unwrap();
        let s = StateVector::basis_state(b.clone(), &ModeLabel::path("1")).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-3.0, 0.0)]);
        let op = Operator::new(b, m).unwrap();
        for lambda in [1e-3, 0.5, 4.0] {
            let out = postselect_pointer(&couple_exact(&s, &op, &pointer(), lambda).unwrap(), &s).unwrap();
            assert!((out.mean_shift + 3.0 * lambda).abs() < 1e-12);
            assert!((out.variance - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_shift_is_odd_in_lambda() {
        // χ_{−λ}(x) = χ_λ(−x) for a real, centred Gaussian, so the deviation
        // from the linear law is cubic.
        for lambda in [1e-2, 3e-2, 0.1] {
            let plus = outcome(&["C"], lambda).mean_shift;
            let minus = outcome(&["C"], -lambda).mean_shift;
            assert!((plus + minus).abs() < 1e-15);
        }
        let dev = |l: f64| (outcome(&["C"], l).mean_shift - l * -0.5).abs();
        let ratio = dev(2e-2) / dev(1e-2);
        assert!((ratio - 8.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn residual_scales_quadratically() {
        let (pre, op, post) = nested_projector(&["B"]);
        let r = |l: f64| first_order_residual(&couple_exact(&pre, &op, &pointer(), l).unwrap(), &post).unwrap();
        let ratio = r(0.04) / r(0.02);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn success_probability_tends_to_overlap() {
        for lambda in [1e-3, 1e-2] {
            let p = outcome(&["C"], lambda).success_probability;
            assert!((p - 0.25).abs() < lambda * lambda);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let (pre, op, post) = nested_projector(&["C"]);
        let ptr = pointer().with_grid(pointer().centred_grid(12.0, 4001)).unwrap();
        let out = postselect_pointer(&couple_exact(&pre, &op, &ptr, 2.0).unwrap(), &post).unwrap();
        let density = out.pointer_density.unwrap();
        let dx = density[1][0] - density[0][0];
        let integral: f64 = density.iter().map(|p| p[1]).sum::<f64>() * dx;
        assert!((integral - 1.0).abs() < 1e-6);
        assert!(density.iter().all(|p| p[1] >= 0.0));
        let mean: f64 = density.iter().map(|p| p[0] * p[1]).sum::<f64>() * dx;
        assert!((mean - out.mean_shift).abs() < 1e-6);
    }

    #[test]
    fn no_click_is_reported() {
        let b = Basis::paths(&["0", "1"]).unwrap();
        let s0 = StateVector::basis_state(b.clone(), &ModeLabel::path("0")).unwrap();
        let s1 = StateVector::basis_state(b.clone(), &ModeLabel::path("1")).unwrap();
        let br = couple_exact(&s0, &Operator::identity(b), &pointer(), 0.2).unwrap();
        assert!(matches!(postselect_pointer(&br, &s1), Err(Error::NoClick)));
    }

    #[test]
    fn sweep_is_order_independent() {
        let (pre, op, post) = nested_projector(&["B"]);
        let lambdas = log_space(1e-3, 1e-1, 7);
        let rows = lambda_sweep(&pre, &op, &post, &pointer(), &lambdas).unwrap();
        let mut rev = lambdas.clone();
        rev.reverse();
        let mut back = lambda_sweep(&pre, &op, &post, &pointer(), &rev).unwrap();
        back.reverse();
        assert_eq!(rows, back);
        assert_eq!(rows.len(), 7);
        assert!((rows[0].lambda - 1e-3).abs() < 1e-18 && (rows[6].lambda - 1e-1).abs() < 1e-16);
    }

    fn dark() -> Scenario {
        build_scenario(ScenarioKind::DarkPortMz).unwrap()
    }

    #[test]
    fn dark_port_leak_examples() {
        let sc = dark();
        let p = pointer();
        assert_eq!(dark_port_leak(&sc, "dark", "A", &p, 0.0).unwrap(), 0.0);
        let small = dark_port_leak(&sc, "dark", "A", &p, 1e-3).unwrap();
        let double = dark_port_leak(&sc, "dark", "A", &p, 2e-3).unwrap();
        assert!(small > 0.0);
        assert!((double / small - 4.0).abs() < 0.4);
        // Closed form for a balanced MZ: (1 − e^{−λ²/8σ²}) / 2.
        let strong = dark_port_leak(&sc, "dark", "A", &p, std::f64::consts::PI).unwrap();
        let expected = 0.5 * (1.0 - (-std::f64::consts::PI.powi(2) / 8.0).exp());
        assert!((strong - expected).abs() < 1e-12);
        assert!(strong > 0.1);
    }

    #[test]
    fn dark_port_requires_calibration() {
        let sc = build_scenario(ScenarioKind::MachZehnder { phase: 0.4 }).unwrap();
        let err = dark_port_leak(&sc, "D1", "A", &pointer(), 0.1).unwrap_err();
        assert!(matches!(err, Error::NotDarkPort { .. }));
    }

    #[test]
    fn mirror_recoil_examples() {
        let f = mirror_recoil_fraction(1500e-9, 1e-3).unwrap();
        assert!((f / 2.947e-33 - 1.0).abs() < 1e-3, "{f:e}");
        let half = mirror_recoil_fraction(750e-9, 1e-3).unwrap();
        assert!((half / f - 2.0).abs() < 1e-12);
        assert_eq!(mirror_recoil_fraction(1500e-9, f64::INFINITY).unwrap(), 0.0);
        assert!(mirror_recoil_fraction(0.0, 1.0).is_err());
        assert!(mirror_recoil_fraction(1e-6, -1.0).is_err());
    }
}
