//! Finite-dimensional Hilbert-space primitives.
//!
//! States and operators are dense complex arrays over a fixed basis. Units
//! have ħ = 1; masses are folded into hopping coefficients. Tensor products
//! put the left factor on the most significant index.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Max-entry tolerance for hermiticity, idempotence, unitarity and
/// decomposition checks.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Largest dimension the dense builders accept.
pub const MAX_DENSE_DIM: usize = 4096;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Complex amplitudes over a finite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("state vector must have dim >= 1"));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("state vector has non-finite amplitudes"));
        }
        Ok(Self { amps })
    }

    /// Builds a unit vector proportional to `amps`.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let mut v = Self::new(amps)?;
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::invalid("cannot normalize the zero vector"));
        }
        v.amps.iter_mut().for_each(|a| *a /= n);
        Ok(v)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(amps)
    }

    pub(crate) fn from_vec_unchecked(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sqr())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// ⟨self|other⟩, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(inner_slices(&self.amps, &other.amps))
    }

    /// |self⟩ ⊗ |other⟩ with `self` on the slow index.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        StateVector { amps }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

pub(crate) fn inner_slices(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Dense complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::invalid(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    /// Rows are given outermost: `rows[i][j]` is ⟨i|A|j⟩.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("operator rows must form a square matrix"));
        }
        Ok(Self {
            m: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            m: DMatrix::from_fn(dim, dim, f),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            m: self.m.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Operator {
        Operator { m: &self.m * s }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(StateVector {
            amps: self.apply_slice(&psi.amps),
        })
    }

    pub(crate) fn apply_slice(&self, v: &[C64]) -> Vec<C64> {
        let v = DVector::from_column_slice(v);
        (&self.m * v).as_slice().to_vec()
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "operator dimension mismatch");
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// ‖A − A†‖ in max-entry norm.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// ‖A†A − I‖ in max-entry norm.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.m.adjoint() * &self.m;
        Operator { m: p }.max_abs_diff(&Operator::identity(self.dim()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Operator {
        Operator {
            m: self.m.kronecker(&other.m),
        }
    }

    /// Commutator [self, other].
    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Magnitude of the determinant.
    pub fn det_abs(&self) -> f64 {
        self.m.clone().lu().determinant().norm()
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator { m: &self.m * &rhs.m }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator { m: &self.m + &rhs.m }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator { m: &self.m - &rhs.m }
    }
}

/// Kronecker product with the left factor on the slow index.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    a.kron(b)
}

fn hermitian_tolerance(h: &Operator) -> f64 {
    STRUCTURE_TOL * h.max_abs().max(1.0)
}

fn require_hermitian(h: &Operator) -> Result<()> {
    let defect = h.hermiticity_defect();
    if defect > hermitian_tolerance(h) {
        return Err(Error::invalid(format!(
            "operator is not hermitian (max |H - H†| = {defect:e})"
        )));
    }
    Ok(())
}

/// Eigen-decomposition H = V diag(E) V† of a hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn of(h: &Operator) -> Result<Self> {
        require_hermitian(h)?;
        let eig = h.m.clone().symmetric_eigen();
        let energies: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::numerical("eigen-decomposition produced non-finite energies"));
        }
        Ok(Self {
            energies,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Eigenvalues in the solver's order (not sorted).
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn sorted_energies(&self) -> Vec<f64> {
        let mut e = self.energies.clone();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Normalized eigenvector for `energies()[k]`.
    pub fn eigenvector(&self, k: usize) -> StateVector {
        StateVector::from_vec_unchecked(self.vectors.column(k).iter().copied().collect())
    }

    /// Eigenvector of the lowest eigenvalue.
    pub fn ground_state(&self) -> StateVector {
        let k = (0..self.dim())
            .min_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]))
            .unwrap_or(0);
        self.eigenvector(k)
    }

    fn phases(&self, t: f64) -> Vec<C64> {
        self.energies
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * t))
            .collect()
    }

    /// exp(−iHt).
    pub fn unitary(&self, t: f64) -> Operator {
        let phases = self.phases(t);
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator {
            m: scaled * self.vectors.adjoint(),
        }
    }

    /// exp(−iHt)|ψ⟩ without forming the full propagator.
    pub fn propagate(&self, psi: &[C64], t: f64) -> Vec<C64> {
        if t == 0.0 {
            return psi.to_vec();
        }
        let phases = self.phases(t);
        let v = DVector::from_column_slice(psi);
        let mut coeffs = self.vectors.ad_mul(&v);
        for (c, p) in coeffs.iter_mut().zip(&phases) {
            *c *= p;
        }
        (&self.vectors * coeffs).as_slice().to_vec()
    }
}

/// U(t) = exp(−iHt) for hermitian H.
pub fn evolve_unitary(h: &Operator, t: f64) -> Result<Operator> {
    if !t.is_finite() {
        return Err(Error::invalid("evolution time must be finite"));
    }
    let u = Spectrum::of(h)?.unitary(t);
    let defect = u.unitarity_defect();
    if defect > STRUCTURE_TOL {
        return Err(Error::numerical(format!(
            "propagator unitarity defect {defect:e} exceeds {STRUCTURE_TOL:e}"
        )));
    }
    Ok(u)
}

/// Orthogonal projector. Diagonal projectors keep their 0/1 support so they
/// can be applied in O(dim).
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    op: Operator,
    support: Option<Vec<bool>>,
}

impl Projector {
    pub fn new(op: Operator) -> Result<Self> {
        let herm = op.hermiticity_defect();
        if herm > STRUCTURE_TOL {
            return Err(Error::invalid(format!(
                "projector is not hermitian (defect {herm:e})"
            )));
        }
        let idem = (&op * &op).max_abs_diff(&op);
        if idem > STRUCTURE_TOL {
            return Err(Error::invalid(format!(
                "projector is not idempotent (defect {idem:e})"
            )));
        }
        Ok(Self { op, support: None })
    }

    /// Diagonal 0/1 projector onto the basis states where `support` is true.
    pub fn diagonal(support: Vec<bool>) -> Self {
        let n = support.len();
        let op = Operator::from_fn(n, |i, j| if i == j && support[i] { ONE } else { ZERO });
        Self {
            op,
            support: Some(support),
        }
    }

    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        Self { op, support: None }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![true; dim])
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn support(&self) -> Option<&[bool]> {
        self.support.as_deref()
    }

    /// Trace, which equals the rank for a projector.
    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn rank(&self) -> usize {
        libm::round(self.trace()) as usize
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(StateVector::from_vec_unchecked(self.apply_slice(psi.amplitudes())))
    }

    pub(crate) fn apply_slice(&self, v: &[C64]) -> Vec<C64> {
        match &self.support {
            Some(mask) => v
                .iter()
                .zip(mask)
                .map(|(&a, &keep)| if keep { a } else { ZERO })
                .collect(),
            None => self.op.apply_slice(v),
        }
    }

    /// U† P U.
    pub(crate) fn conjugate_by(&self, u: &Operator) -> Projector {
        Projector {
            op: &(&u.adjoint() * &self.op) * u,
            support: None,
        }
    }

    /// P ⊗ I or I ⊗ P style embedding.
    pub fn embed(&self, left_dim: usize, right_dim: usize) -> Projector {
        let op = Operator::identity(left_dim)
            .kron(&self.op)
            .kron(&Operator::identity(right_dim));
        let support = self.support.as_ref().map(|mask| {
            let mut out = Vec::with_capacity(left_dim * mask.len() * right_dim);
            for _ in 0..left_dim {
                for &m in mask {
                    out.extend(core::iter::repeat(m).take(right_dim));
                }
            }
            out
        });
        Projector { op, support }
    }
}

/// An exhaustive set of mutually orthogonal projectors with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    projectors: Vec<Projector>,
    labels: Vec<String>,
}

impl Decomposition {
    pub fn new(projectors: Vec<Projector>, labels: Vec<String>) -> Result<Self> {
        if projectors.is_empty() {
            return Err(Error::invalid("decomposition needs at least one projector"));
        }
        if labels.len() != projectors.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} projectors",
                labels.len(),
                projectors.len()
            )));
        }
        let dim = projectors[0].dim();
        if let Some(p) = projectors.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        let mut sum = Operator::zeros(dim);
        for p in &projectors {
            sum = &sum + p.op();
        }
        let gap = sum.max_abs_diff(&Operator::identity(dim));
        if gap > STRUCTURE_TOL {
            return Err(Error::invalid(format!(
                "projectors are not exhaustive (max |ΣP - I| = {gap:e})"
            )));
        }
        for a in 0..projectors.len() {
            for b in a + 1..projectors.len() {
                let overlap = match (projectors[a].support(), projectors[b].support()) {
                    (Some(x), Some(y)) => {
                        if x.iter().zip(y).any(|(&p, &q)| p && q) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => (projectors[a].op() * projectors[b].op()).max_abs(),
                };
                if overlap > STRUCTURE_TOL {
                    return Err(Error::invalid(format!(
                        "projectors {a} and {b} are not orthogonal"
                    )));
                }
            }
        }
        Ok(Self { projectors, labels })
    }

    pub(crate) fn new_unchecked(projectors: Vec<Projector>, labels: Vec<String>) -> Self {
        Self { projectors, labels }
    }

    /// The one-element decomposition {I}.
    pub fn trivial(dim: usize) -> Self {
        Self {
            projectors: vec![Projector::identity(dim)],
            labels: vec![String::from("all")],
        }
    }

    /// Replaces the labels, keeping the projectors.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.projectors.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} projectors",
                labels.len(),
                self.projectors.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn projector(&self, i: usize) -> &Projector {
        &self.projectors[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Largest entry of ΣP − I.
    pub fn exhaustiveness_defect(&self) -> f64 {
        let dim = self.dim();
        let mut sum = Operator::zeros(dim);
        for p in &self.projectors {
            sum = &sum + p.op();
        }
        sum.max_abs_diff(&Operator::identity(dim))
    }

    /// Embeds every projector as I_left ⊗ P ⊗ I_right.
    pub fn embed(&self, left_dim: usize, right_dim: usize) -> Decomposition {
        Decomposition {
            projectors: self
                .projectors
                .iter()
                .map(|p| p.embed(left_dim, right_dim))
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Diagonal projectors onto disjoint groups of basis indices that cover
/// `0..dim`. Labels are the region positions.
pub fn position_decomposition(dim: usize, regions: &[Vec<usize>]) -> Result<Decomposition> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if regions.is_empty() {
        return Err(Error::invalid("at least one region is required"));
    }
    let mut owner: Vec<Option<usize>> = vec![None; dim];
    for (r, region) in regions.iter().enumerate() {
        if region.is_empty() {
            return Err(Error::invalid(format!("region {r} is empty")));
        }
        for &i in region {
            if i >= dim {
                return Err(Error::invalid(format!(
                    "region {r} contains index {i} outside 0..{dim}"
                )));
            }
            if let Some(prev) = owner[i] {
                return Err(Error::invalid(format!(
                    "regions {prev} and {r} overlap at index {i}"
                )));
            }
            owner[i] = Some(r);
        }
    }
    if let Some(gap) = owner.iter().position(Option::is_none) {
        return Err(Error::invalid(format!("index {gap} is not covered by any region")));
    }
    let projectors = (0..regions.len())
        .map(|r| Projector::diagonal(owner.iter().map(|o| *o == Some(r)).collect()))
        .collect();
    let labels = (0..regions.len()).map(|r| format!("{r}")).collect();
    Ok(Decomposition::new_unchecked(projectors, labels))
}

/// U(t)† P U(t) with U(t) = exp(−iHt).
pub fn heisenberg_projector(p: &Projector, h: &Operator, t: f64) -> Result<Projector> {
    if p.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: p.dim(),
        });
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    let u = evolve_unitary(h, t)?;
    Ok(p.conjugate_by(&u))
}

/// Open chain (`periodic = false`) or ring of `sites` with hopping −`hopping`
/// between neighbours and `potential` on the diagonal.
pub(crate) fn lattice_hamiltonian(
    sites: usize,
    hopping: f64,
    potential: &[f64],
    periodic: bool,
) -> Operator {
    let mut m = DMatrix::<C64>::zeros(sites, sites);
    for (i, &v) in potential.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    let links = if periodic && sites > 2 { sites } else { sites - 1 };
    for i in 0..links {
        let j = (i + 1) % sites;
        m[(i, j)] -= C64::new(hopping, 0.0);
        m[(j, i)] -= C64::new(hopping, 0.0);
    }
    Operator { m }
}

/// Tight-binding ring: −`hopping` on nearest-neighbour links (one link for
/// two sites) and `potential` on the diagonal.
pub fn build_ring_hamiltonian(sites: usize, hopping: f64, potential: &[f64]) -> Result<Operator> {
    if sites < 2 {
        return Err(Error::invalid(format!("ring needs at least 2 sites, got {sites}")));
    }
    if sites > MAX_DENSE_DIM {
        return Err(Error::CapExceeded {
            what: "ring size",
            count: sites as u128,
            cap: MAX_DENSE_DIM as u128,
        });
    }
    if potential.len() != sites {
        return Err(Error::invalid(format!(
            "potential has {} entries for {sites} sites",
            potential.len()
        )));
    }
    if !hopping.is_finite() || potential.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("hopping and potential must be finite"));
    }
    Ok(lattice_hamiltonian(sites, hopping, potential, true))
}

pub mod pauli {
    use super::{Operator, C64};

    pub fn x() -> Operator {
        Operator::from_fn(2, |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0))
    }

    pub fn y() -> Operator {
        Operator::from_fn(2, |i, j| match (i, j) {
            (0, 1) => C64::new(0.0, -1.0),
            (1, 0) => C64::new(0.0, 1.0),
            _ => C64::new(0.0, 0.0),
        })
    }

    pub fn z() -> Operator {
        Operator::diagonal(&[1.0, -1.0])
    }
}

/// Uniform couplings of a qubit chain:
/// H = Σ_j (field_x X_j + field_z Z_j) + coupling_zz Σ_j Z_j Z_{j+1}.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QubitCouplings {
    pub field_x: f64,
    pub field_z: f64,
    pub coupling_zz: f64,
}

/// Model systems with a known Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    RingLattice {
        sites: usize,
        hopping: f64,
        potential: Vec<f64>,
    },
    QubitRegister {
        qubits: usize,
        couplings: QubitCouplings,
    },
    /// `system` ⊗ I on an environment of the given dimension.
    Composite {
        system: Box<ModelSpec>,
        environment_dim: usize,
    },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::RingLattice { sites, .. } => *sites,
            ModelSpec::QubitRegister { qubits, .. } => 1usize << qubits,
            ModelSpec::Composite {
                system,
                environment_dim,
            } => system.dim() * environment_dim,
        }
    }

    pub fn hamiltonian(&self) -> Result<Operator> {
        match self {
            ModelSpec::RingLattice {
                sites,
                hopping,
                potential,
            } => build_ring_hamiltonian(*sites, *hopping, potential),
            ModelSpec::QubitRegister { qubits, couplings } => {
                qubit_chain_hamiltonian(*qubits, couplings)
            }
            ModelSpec::Composite {
                system,
                environment_dim,
            } => {
                if *environment_dim == 0 {
                    return Err(Error::invalid("environment dimension must be positive"));
                }
                let dim = system.dim().saturating_mul(*environment_dim);
                if dim > MAX_DENSE_DIM {
                    return Err(Error::CapExceeded {
                        what: "composite dimension",
                        count: dim as u128,
                        cap: MAX_DENSE_DIM as u128,
                    });
                }
                Ok(system.hamiltonian()?.kron(&Operator::identity(*environment_dim)))
            }
        }
    }
}

fn single_site(qubits: usize, site: usize, op: &Operator) -> Operator {
    let left = Operator::identity(1 << site);
    let right = Operator::identity(1 << (qubits - site - 1));
    left.kron(op).kron(&right)
}

fn qubit_chain_hamiltonian(qubits: usize, c: &QubitCouplings) -> Result<Operator> {
    if qubits == 0 {
        return Err(Error::invalid("qubit register needs at least one qubit"));
    }
    if qubits > 12 {
        return Err(Error::CapExceeded {
            what: "qubit count",
            count: qubits as u128,
            cap: 12,
        });
    }
    if !(c.field_x.is_finite() && c.field_z.is_finite() && c.coupling_zz.is_finite()) {
        return Err(Error::invalid("couplings must be finite"));
    }
    let dim = 1usize << qubits;
    let mut h = Operator::zeros(dim);
    let (x, z) = (pauli::x(), pauli::z());
    for q in 0..qubits {
        if c.field_x != 0.0 {
            h = &h + &single_site(qubits, q, &x).scale(C64::new(c.field_x, 0.0));
        }
        if c.field_z != 0.0 {
            h = &h + &single_site(qubits, q, &z).scale(C64::new(c.field_z, 0.0));
        }
    }
    if c.coupling_zz != 0.0 {
        for q in 0..qubits.saturating_sub(1) {
            let zz = &single_site(qubits, q, &z) * &single_site(qubits, q + 1, &z);
            h = &h + &zz.scale(C64::new(c.coupling_zz, 0.0));
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn two_site_ring_has_single_link() {
        let h = build_ring_hamiltonian(2, 1.0, &[0.0, 0.0]).unwrap();
        let expected = Operator::from_real_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(h, expected);
    }

    #[test]
    fn zero_hopping_is_diagonal_potential() {
        let h = build_ring_hamiltonian(3, 0.0, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h, Operator::diagonal(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn four_site_ring_spectrum() {
        // Ring eigenvalues −2 cos(2πk/4): {−2, 0, 0, 2}.
        let h = build_ring_hamiltonian(4, 1.0, &[0.0; 4]).unwrap();
        let e = Spectrum::of(&h).unwrap().sorted_energies();
        for (got, want) in e.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn ring_rejects_bad_input() {
        assert!(build_ring_hamiltonian(1, 1.0, &[0.0]).is_err());
        assert!(build_ring_hamiltonian(3, 1.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_hamiltonian_evolves_to_identity() {
        let u = evolve_unitary(&Operator::zeros(3), 2.5).unwrap();
        assert!(u.max_abs_diff(&Operator::identity(3)) < 1e-15);
    }

    #[test]
    fn full_transfer_at_quarter_period() {
        let h = build_ring_hamiltonian(2, 1.0, &[0.0, 0.0]).unwrap();
        let u = evolve_unitary(&h, PI / 2.0).unwrap();
        assert!((u.entry(1, 0).norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolution_rejects_non_hermitian() {
        let a = Operator::from_rows(&[vec![c(0.0), c(1.0)], vec![c(0.0), c(0.0)]]).unwrap();
        assert!(matches!(evolve_unitary(&a, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn heisenberg_half_transfer() {
        let h = build_ring_hamiltonian(2, 1.0, &[0.0, 0.0]).unwrap();
        let p = Projector::diagonal(vec![true, false]);
        let q = heisenberg_projector(&p, &h, PI / 4.0).unwrap();
        assert!((q.op().entry(0, 0).re - 0.5).abs() < 1e-12);
        assert!((q.op().entry(1, 1).re - 0.5).abs() < 1e-12);
        assert_eq!(heisenberg_projector(&p, &h, 0.0).unwrap(), p);
    }

    #[test]
    fn commuting_projector_is_conserved() {
        let h = Operator::diagonal(&[0.3, -1.2, 2.0]);
        let p = Projector::diagonal(vec![false, true, true]);
        for t in [0.1, 1.0, 7.3] {
            let q = heisenberg_projector(&p, &h, t).unwrap();
            assert!(q.op().max_abs_diff(p.op()) < 1e-12);
        }
    }

    #[test]
    fn position_decomposition_cases() {
        let d = position_decomposition(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.projector(0).rank(), 2);
        assert_eq!(d.projector(1).rank(), 2);

        let d = position_decomposition(3, &[vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(d.exhaustiveness_defect(), 0.0);

        assert!(position_decomposition(4, &[vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(position_decomposition(4, &[vec![0, 1], vec![2]]).is_err());
    }

    #[test]
    fn decomposition_new_rejects_non_exhaustive() {
        let p = Projector::diagonal(vec![true, false]);
        assert!(Decomposition::new(vec![p], vec!["a".into()]).is_err());
    }

    #[test]
    fn projector_new_rejects_non_idempotent() {
        let a = Operator::diagonal(&[0.5, 1.0]);
        assert!(Projector::new(a).is_err());
    }

    #[test]
    fn tensor_identities_and_blocks() {
        let i6 = tensor(&Operator::identity(2), &Operator::identity(3));
        assert_eq!(i6, Operator::identity(6));

        let p = Projector::diagonal(vec![true, false]);
        let big = Projector::new(tensor(p.op(), &Operator::identity(3))).unwrap();
        assert_eq!(big.rank(), 3);

        // Index arithmetic: (A⊗B)[2i+k][2j+l] = A[i][j] B[k][l].
        let (x, z) = (pauli::x(), pauli::z());
        let xz = tensor(&x, &z);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert_eq!(xz.entry(2 * i + k, 2 * j + l), x.entry(i, j) * z.entry(k, l));
                    }
                }
            }
        }
        assert_eq!(xz.entry(0, 2), c(1.0));
        assert_eq!(xz.entry(1, 3), c(-1.0));
    }

    #[test]
    fn qubit_register_dimensions() {
        let spec = ModelSpec::QubitRegister {
            qubits: 3,
            couplings: QubitCouplings {
                field_x: 0.5,
                field_z: 0.2,
                coupling_zz: 1.0,
            },
        };
        let h = spec.hamiltonian().unwrap();
        assert_eq!(h.dim(), 8);
        assert!(h.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn composite_embeds_system() {
        let spec = ModelSpec::Composite {
            system: Box::new(ModelSpec::RingLattice {
                sites: 3,
                hopping: 1.0,
                potential: vec![0.0; 3],
            }),
            environment_dim: 2,
        };
        assert_eq!(spec.dim(), 6);
        assert_eq!(spec.hamiltonian().unwrap().dim(), 6);
    }

    #[test]
    fn state_helpers() {
        let s = StateVector::normalized(vec![c(1.0), c(1.0)]).unwrap();
        assert!(s.is_normalized(1e-15));
        let z = StateVector::basis(2, 0).unwrap();
        assert!((s.inner(&z).unwrap().re - libm::sqrt(0.5)).abs() < 1e-15);
        assert!(StateVector::normalized(vec![c(0.0)]).is_err());
        assert_eq!(s.tensor(&z).dim(), 4);
    }
}
