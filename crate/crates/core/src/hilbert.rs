//! Finite-dimensional complex linear algebra over labeled mode bases.
//!
//! Every state and operator carries the [`Basis`] it lives on. Bases are
//! sorted lexicographically on `(path, polarization, tag)` so that two
//! scenarios declaring the same modes in a different order produce identical
//! vectors and matrices.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest total dimension accepted by tensor products and basis construction.
pub const MAX_DIMENSION: usize = 1 << 20;

/// Tolerance used when deciding that an operator is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn flipped(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => f.write_str("H"),
            Polarization::V => f.write_str("V"),
        }
    }
}

/// One basis element: a spatial path, optionally refined by polarization and
/// an ancilla tag. Written `path[.H|.V][#tag]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub path: String,
    pub polarization: Option<Polarization>,
    pub tag: Option<String>,
}

impl ModeLabel {
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

    /// An internal-only label (no path), used for polarization or tag factors.
    pub fn internal(polarization: Option<Polarization>, tag: Option<&str>) -> Self {
        Self {
            path: String::new(),
            polarization,
            tag: tag.map(str::to_owned),
        }
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = Some(polarization);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    /// Label of the product basis element `self ⊗ other`.
    ///
    /// Paths and tags of both factors are joined with `&`; polarization may be
    /// carried by at most one factor.
    pub fn combine(&self, other: &ModeLabel) -> Result<ModeLabel> {
        let polarization = match (self.polarization, other.polarization) {
            (Some(_), Some(_)) => {
                return Err(Error::BasisMismatch(format!(
                    "both `{self}` and `{other}` carry a polarization"
                )))
            }
            (a, b) => a.or(b),
        };
        let join = |a: &str, b: &str| match (a.is_empty(), b.is_empty()) {
            (true, _) => b.to_owned(),
            (_, true) => a.to_owned(),
            _ => format!("{a}&{b}"),
        };
        let tag = match (&self.tag, &other.tag) {
            (Some(a), Some(b)) => Some(join(a, b)),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Ok(ModeLabel {
            path: join(&self.path, &other.path),
            polarization,
            tag,
        })
    }
}

impl fmt::Display for ModeLabel {
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

impl FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (rest, tag) = match s.split_once('#') {
            Some((r, t)) if !t.is_empty() => (r, Some(t.to_owned())),
            Some(_) => return Err(Error::InvalidParameter(format!("empty tag in `{s}`"))),
            None => (s, None),
        };
        let (path, polarization) = match rest.split_once('.') {
            Some((p, "H")) => (p, Some(Polarization::H)),
            Some((p, "V")) => (p, Some(Polarization::V)),
            Some(_) => {
                return Err(Error::InvalidParameter(format!(
                    "polarization in `{s}` must be H or V"
                )))
            }
            None => (rest, None),
        };
        Ok(ModeLabel {
            path: path.to_owned(),
            polarization,
            tag,
        })
    }
}

/// Ordered, duplicate-free list of mode labels. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis(Arc<Vec<ModeLabel>>);

impl Basis {
    /// Builds a basis, sorting the labels. Duplicates are rejected.
    pub fn new(labels: impl IntoIterator<Item = ModeLabel>) -> Result<Self> {
        let mut labels: Vec<ModeLabel> = labels.into_iter().collect();
        if labels.len() > MAX_DIMENSION {
            return Err(Error::DimensionOverflow(labels.len()));
        }
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::BasisMismatch(format!("duplicate mode `{}`", w[0])));
        }
        Ok(Basis(Arc::new(labels)))
    }

    pub fn paths<S: AsRef<str>>(paths: &[S]) -> Result<Self> {
        Self::new(paths.iter().map(|p| ModeLabel::path(p.as_ref())))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.0
    }

    pub fn index_of(&self, label: &ModeLabel) -> Option<usize> {
        self.0.binary_search(label).ok()
    }

    pub fn require(&self, label: &ModeLabel) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::BasisMismatch(format!("mode `{label}` is not in the basis")))
    }

    pub fn contains(&self, label: &ModeLabel) -> bool {
        self.index_of(label).is_some()
    }

    /// Product basis and, for each `(i, j)` pair in row-major Kronecker order,
    /// the index of the combined label in the sorted product basis.
    fn product(&self, other: &Basis) -> Result<(Basis, Vec<usize>)> {
        let dim = self
            .dim()
            .checked_mul(other.dim())
            .filter(|d| *d <= MAX_DIMENSION)
            .ok_or(Error::DimensionOverflow(self.dim().saturating_mul(other.dim())))?;
        let mut combined = Vec::with_capacity(dim);
        for a in self.labels() {
            for b in other.labels() {
                combined.push(a.combine(b)?);
            }
        }
        let basis = Basis::new(combined.clone())?;
        let positions = combined
            .iter()
            .map(|l| basis.index_of(l).expect("label just inserted"))
            .collect();
        Ok((basis, positions))
    }

    fn check_same(&self, other: &Basis) -> Result<()> {
        if Arc::ptr_eq(&self.0, &other.0) || self == other {
            Ok(())
        } else {
            Err(Error::BasisMismatch(
                "operands are defined on different bases".into(),
            ))
        }
    }
}

/// Complex amplitude vector over a [`Basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: Basis,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(basis: Basis, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(Self {
            basis,
            amplitudes: DVector::from_vec(amplitudes),
        })
    }

    pub(crate) fn from_dvector(basis: Basis, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(basis.dim(), amplitudes.len());
        Self { basis, amplitudes }
    }

    pub fn zeros(basis: Basis) -> Self {
        let n = basis.dim();
        Self::from_dvector(basis, DVector::zeros(n))
    }

    /// The basis ket `|label⟩`.
    pub fn basis_state(basis: Basis, label: &ModeLabel) -> Result<Self> {
        let idx = basis.require(label)?;
        let mut s = Self::zeros(basis);
        s.amplitudes[idx] = ONE;
        Ok(s)
    }

    /// Builds a state from `(label, amplitude)` pairs; unlisted modes are zero.
    pub fn from_pairs<'a>(
        basis: Basis,
        pairs: impl IntoIterator<Item = (&'a ModeLabel, C64)>,
    ) -> Result<Self> {
        let mut s = Self::zeros(basis);
        for (label, amp) in pairs {
            let idx = s.basis.require(label)?;
            s.amplitudes[idx] += amp;
        }
        Ok(s)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: &ModeLabel) -> Result<C64> {
        Ok(self.amplitudes[self.basis.require(label)?])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize a state of norm {n}"
            )));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_dvector(self.basis.clone(), &self.amplitudes * factor)
    }

    /// `⟨self|ket⟩`, conjugate-linear in `self`.
    pub fn inner(&self, ket: &StateVector) -> Result<C64> {
        self.basis.check_same(&ket.basis)?;
        Ok(self.amplitudes.dotc(&ket.amplitudes))
    }

    /// Total probability carried by the given modes.
    pub fn probability_on(&self, labels: &[ModeLabel]) -> Result<f64> {
        labels.iter().try_fold(0.0, |acc, l| {
            Ok(acc + self.amplitudes[self.basis.require(l)?].norm_sqr())
        })
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        self.basis.check_same(&other.basis)?;
        Ok(Self::from_dvector(
            self.basis.clone(),
            &self.amplitudes + &other.amplitudes,
        ))
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let (basis, positions) = self.basis.product(&other.basis)?;
        let mut out = DVector::zeros(basis.dim());
        let mut k = 0;
        for a in self.amplitudes.iter() {
            for b in other.amplitudes.iter() {
                out[positions[k]] = a * b;
                k += 1;
            }
        }
        Ok(Self::from_dvector(basis, out))
    }

    /// Largest absolute amplitude difference; bases must agree.
    pub fn distance_max(&self, other: &StateVector) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Dense complex square matrix over a [`Basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    basis: Basis,
    matrix: DMatrix<C64>,
    projector: bool,
}

impl Operator {
    pub fn new(basis: Basis, matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{}x{} matrix for a basis of dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        Ok(Self {
            basis,
            matrix,
            projector: false,
        })
    }

    pub fn identity(basis: Basis) -> Self {
        let n = basis.dim();
        Self {
            basis,
            matrix: DMatrix::identity(n, n),
            projector: true,
        }
    }

    pub fn zero(basis: Basis) -> Self {
        let n = basis.dim();
        Self {
            basis,
            matrix: DMatrix::zeros(n, n),
            projector: true,
        }
    }

    /// Diagonal 0/1 projector selecting `modes`.
    pub fn projector<'a>(
        basis: Basis,
        modes: impl IntoIterator<Item = &'a ModeLabel>,
    ) -> Result<Self> {
        let mut p = Self::zero(basis);
        for m in modes {
            let idx = p.basis.require(m)?;
            p.matrix[(idx, idx)] = ONE;
        }
        Ok(p)
    }

    /// Embeds a 2×2 matrix acting on polarization (H, V order) for every mode
    /// pair sharing path and tag. Modes with no polarization partner keep only
    /// the matching diagonal entry; modes without polarization are left alone.
    pub fn polarization(basis: Basis, m: [[C64; 2]; 2]) -> Self {
        let n = basis.dim();
        let mut matrix = DMatrix::identity(n, n);
        let pol_index = |p: Polarization| match p {
            Polarization::H => 0,
            Polarization::V => 1,
        };
        for (i, label) in basis.labels().iter().enumerate() {
            let Some(p) = label.polarization else { continue };
            let a = pol_index(p);
            matrix[(i, i)] = m[a][a];
            let partner = ModeLabel {
                polarization: Some(p.flipped()),
                ..label.clone()
            };
            if let Some(j) = basis.index_of(&partner) {
                matrix[(i, j)] = m[a][1 - a];
            }
        }
        Self {
            basis,
            matrix,
            projector: false,
        }
    }

    /// Pauli operator on polarization; `Z` is `diag(+1, -1)` in (H, V).
    pub fn pauli(basis: Basis, pauli: Pauli) -> Self {
        Self::polarization(basis, pauli.matrix())
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_flagged_projector(&self) -> bool {
        self.projector
    }

    pub fn apply(&self, s: &StateVector) -> Result<StateVector> {
        self.basis.check_same(&s.basis)?;
        Ok(StateVector::from_dvector(
            self.basis.clone(),
            &self.matrix * &s.amplitudes,
        ))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            basis: self.basis.clone(),
            matrix: self.matrix.adjoint(),
            projector: self.projector,
        }
    }

    /// Operator product `self · rhs`.
    pub fn compose(&self, rhs: &Operator) -> Result<Self> {
        self.basis.check_same(&rhs.basis)?;
        Ok(Self {
            basis: self.basis.clone(),
            matrix: &self.matrix * &rhs.matrix,
            projector: false,
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Self> {
        self.basis.check_same(&rhs.basis)?;
        let matrix = &self.matrix + &rhs.matrix;
        let mut out = Self::new(self.basis.clone(), matrix)?;
        // Sums of diagonal 0/1 projectors stay projectors when their supports
        // are disjoint.
        out.projector = self.projector
            && rhs.projector
            && out.projector_deviation() <= 1e-12;
        Ok(out)
    }

    pub fn sub(&self, rhs: &Operator) -> Result<Self> {
        self.basis.check_same(&rhs.basis)?;
        Self::new(self.basis.clone(), &self.matrix - &rhs.matrix)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            basis: self.basis.clone(),
            matrix: &self.matrix * factor,
            projector: false,
        }
    }

    /// `⟨bra|self|ket⟩`.
    pub fn matrix_element(&self, bra: &StateVector, ket: &StateVector) -> Result<C64> {
        bra.inner(&self.apply(ket)?)
    }

    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let (basis, positions) = self.basis.product(&other.basis)?;
        let kron = self.matrix.kronecker(&other.matrix);
        let n = basis.dim();
        let mut matrix = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                matrix[(positions[r], positions[c])] = kron[(r, c)];
            }
        }
        Ok(Operator {
            basis,
            matrix,
            projector: self.projector && other.projector,
        })
    }

    /// Frobenius norm of `self − other`.
    pub fn distance(&self, other: &Operator) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok((&self.matrix - &other.matrix).norm())
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    /// `max(‖Π² − Π‖, ‖Π† − Π‖)`.
    pub fn projector_deviation(&self) -> f64 {
        let sq = &self.matrix * &self.matrix - &self.matrix;
        sq.norm().max(self.hermitian_deviation())
    }

    /// `‖U†U − I‖`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim();
        (self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n)).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `true` when the operator has no matrix elements between different
    /// paths, i.e. it acts on polarization and tags only.
    pub fn is_internal(&self, tol: f64) -> bool {
        let labels = self.basis.labels();
        self.matrix.iter().enumerate().all(|(k, v)| {
            // column-major storage
            let (r, c) = (k % self.dim(), k / self.dim());
            labels[r].path == labels[c].path || v.norm() <= tol
        })
    }

    /// Eigendecomposition of a Hermitian operator.
    pub fn eigh(&self) -> Result<EigenDecomposition> {
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        // Symmetrize so rounding noise does not leak into the solver.
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut pairs: Vec<(f64, DVector<C64>)> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(v, col)| (*v, col.into_owned()))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let (eigenvalues, vectors): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Ok(EigenDecomposition {
            basis: self.basis.clone(),
            eigenvalues,
            eigenvectors: vectors
                .into_iter()
                .map(|v| StateVector::from_dvector(self.basis.clone(), v))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> [[C64; 2]; 2] {
        match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" | "I" | "id" => Ok(Pauli::I),
            "x" | "X" => Ok(Pauli::X),
            "y" | "Y" => Ok(Pauli::Y),
            "z" | "Z" => Ok(Pauli::Z),
            other => Err(Error::InvalidParameter(format!(
                "unknown Pauli operator `{other}` (expected i, x, y or z)"
            ))),
        }
    }
}

/// Eigenvalues in descending order with their orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    basis: Basis,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
}

impl EigenDecomposition {
    /// `Σ o_k |v_k⟩⟨v_k|`.
    pub fn reconstruct(&self) -> Operator {
        let n = self.basis.dim();
        let mut m = DMatrix::zeros(n, n);
        for (val, vec) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let v = vec.amplitudes();
            m += v * v.adjoint() * C64::new(*val, 0.0);
        }
        Operator {
            basis: self.basis.clone(),
            matrix: m,
            projector: false,
        }
    }

    /// Largest `|⟨v_j|v_k⟩ − δ_jk|`.
    pub fn orthonormality_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.eigenvectors.iter().enumerate() {
            for (k, b) in self.eigenvectors.iter().enumerate() {
                let expected = if j == k { ONE } else { ZERO };
                let ip = a.amplitudes().dotc(b.amplitudes());
                worst = worst.max((ip - expected).norm());
            }
        }
        worst
    }

    /// Spectral projectors, merging eigenvalues closer than `tol`.
    pub fn spectral_projectors(&self, tol: f64) -> Vec<(f64, Operator)> {
        let n = self.basis.dim();
        let mut out: Vec<(f64, usize, DMatrix<C64>)> = Vec::new();
        for (val, vec) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let v = vec.amplitudes();
            let outer = v * v.adjoint();
            match out.last_mut() {
                Some((sum, count, m)) if (*sum / *count as f64 - val).abs() <= tol => {
                    *sum += val;
                    *count += 1;
                    *m += outer;
                }
                _ => out.push((*val, 1, outer)),
            }
        }
        out.into_iter()
            .map(|(sum, count, m)| {
                debug_assert_eq!(m.nrows(), n);
                (
                    sum / count as f64,
                    Operator {
                        basis: self.basis.clone(),
                        matrix: m,
                        projector: true,
                    },
                )
            })
            .collect()
    }
}
