//! Class operators, branch vectors and the decoherence functional.
//!
//! A history is a choice of alternative at each time of a [`HistoryGrid`].
//! Its class operator is the time-ordered chain of Heisenberg projectors with
//! the latest time leftmost; the branch vector is that chain applied to the
//! initial state. Histories are always enumerated lexicographically in
//! (α_1, …, α_n).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{
    Decomposition, Operator, Projector, Spectrum, StateVector, C64, STRUCTURE_TOL,
};

/// Default bound on the number of histories K in a Gram matrix.
pub const DEFAULT_HISTORY_CAP: usize = 4096;

/// Decoherence tolerance for models whose records are exactly orthogonal.
pub const EPSILON_EXACT: f64 = 1e-8;

/// Decoherence tolerance for generic scenarios.
pub const EPSILON_GENERIC: f64 = 1e-3;

/// Histories with probability at or below this are treated as zero by the
/// normalized decoherence measure. Branch amplitudes this small carry
/// relative rounding errors of order one.
pub const PROBABILITY_FLOOR: f64 = 1e-20;

/// Times, one decomposition per time, and the dynamics between them.
#[derive(Clone, Debug)]
pub struct HistoryGrid {
    times: Vec<f64>,
    decompositions: Vec<Decomposition>,
    hamiltonian: Operator,
    kicks: Vec<Option<Operator>>,
    spectrum: Spectrum,
}

impl HistoryGrid {
    pub fn new(
        times: Vec<f64>,
        decompositions: Vec<Decomposition>,
        hamiltonian: Operator,
    ) -> Result<Self> {
        let n = times.len();
        Self::with_kicks(times, decompositions, hamiltonian, vec![None; n])
    }

    /// Grid whose evolution is interrupted by an impulsive unitary applied
    /// immediately after the alternatives at each time (`None` = no kick).
    pub fn with_kicks(
        times: Vec<f64>,
        decompositions: Vec<Decomposition>,
        hamiltonian: Operator,
        kicks: Vec<Option<Operator>>,
    ) -> Result<Self> {
        let spectrum = Spectrum::of(&hamiltonian)?;
        Self::from_parts(times, decompositions, hamiltonian, kicks, spectrum)
    }

    fn from_parts(
        times: Vec<f64>,
        decompositions: Vec<Decomposition>,
        hamiltonian: Operator,
        kicks: Vec<Option<Operator>>,
        spectrum: Spectrum,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("a history grid needs at least one time"));
        }
        if decompositions.len() != times.len() || kicks.len() != times.len() {
            return Err(Error::invalid(format!(
                "{} times but {} decompositions and {} kicks",
                times.len(),
                decompositions.len(),
                kicks.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("history times must be finite"));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "history times must be strictly increasing (t[{}] = {} >= t[{}] = {})",
                k,
                times[k],
                k + 1,
                times[k + 1]
            )));
        }
        let dim = hamiltonian.dim();
        for d in &decompositions {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.dim(),
                });
            }
        }
        for k in kicks.iter().flatten() {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.dim(),
                });
            }
            let defect = k.unitarity_defect();
            if defect > STRUCTURE_TOL {
                return Err(Error::invalid(format!("kick is not unitary (defect {defect:e})")));
            }
        }
        Ok(Self {
            times,
            decompositions,
            hamiltonian,
            kicks,
            spectrum,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn decompositions(&self) -> &[Decomposition] {
        &self.decompositions
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn kicks(&self) -> &[Option<Operator>] {
        &self.kicks
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// K = Π_k |decomposition_k|.
    pub fn history_count(&self) -> u128 {
        self.decompositions
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(d.len() as u128))
    }

    /// All histories in lexicographic order.
    pub fn histories(&self) -> Vec<HistoryIndex> {
        let sizes: Vec<usize> = self.decompositions.iter().map(Decomposition::len).collect();
        enumerate_indices(&sizes)
    }

    pub fn validate_index(&self, index: &HistoryIndex) -> Result<()> {
        if index.0.len() != self.len() {
            return Err(Error::invalid(format!(
                "history index has {} entries for {} times",
                index.0.len(),
                self.len()
            )));
        }
        for (k, (&a, d)) in index.0.iter().zip(&self.decompositions).enumerate() {
            if a >= d.len() {
                return Err(Error::invalid(format!(
                    "alternative {a} at time {k} is out of range (0..{})",
                    d.len()
                )));
            }
        }
        Ok(())
    }

    /// Human-readable label such as `L-R`.
    pub fn label(&self, index: &HistoryIndex) -> String {
        let parts: Vec<&str> = index
            .0
            .iter()
            .zip(&self.decompositions)
            .map(|(&a, d)| d.labels()[a].as_str())
            .collect();
        parts.join("-")
    }

    /// Schrödinger-picture evolution from time 0 up to each t_k, taken just
    /// before the kick at t_k.
    pub fn evolution_operators(&self) -> Vec<Operator> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.len());
        let mut w = Operator::identity(dim);
        let mut previous = 0.0;
        for (k, &t) in self.times.iter().enumerate() {
            w = &self.spectrum.unitary(t - previous) * &w;
            out.push(w.clone());
            if let Some(kick) = &self.kicks[k] {
                w = kick * &w;
            }
            previous = t;
        }
        out
    }

    /// Heisenberg projectors P^k_a(t_k) for every time and alternative.
    pub fn heisenberg_projectors(&self) -> Vec<Vec<Projector>> {
        self.evolution_operators()
            .iter()
            .zip(&self.decompositions)
            .map(|(w, d)| {
                d.projectors()
                    .iter()
                    .map(|p| conjugate(p, w))
                    .collect()
            })
            .collect()
    }

    /// Schrödinger-picture branch vectors U_n P_n K_{n-1} … P_1 U_1 |ψ⟩ for
    /// every history, lexicographic. They differ from C_α|ψ⟩ by one common
    /// unitary, so their Gram matrix is the decoherence functional.
    fn schrodinger_branches(&self, psi: &[C64]) -> Vec<Vec<C64>> {
        let mut out = Vec::new();
        let start = self.spectrum.propagate(psi, self.times[0]);
        self.descend(0, start, &mut out);
        out
    }

    fn descend(&self, level: usize, state: Vec<C64>, out: &mut Vec<Vec<C64>>) {
        let last = level + 1 == self.len();
        for p in self.decompositions[level].projectors() {
            let mut v = p.apply_slice(&state);
            if last {
                out.push(v);
                continue;
            }
            if let Some(kick) = &self.kicks[level] {
                v = kick.apply_slice(&v);
            }
            let dt = self.times[level + 1] - self.times[level];
            let v = self.spectrum.propagate(&v, dt);
            self.descend(level + 1, v, out);
        }
    }

    /// Branch vectors C_α|ψ⟩ (Heisenberg picture) for every history.
    pub fn branch_vectors(&self, psi: &StateVector) -> Result<Vec<StateVector>> {
        self.check_state(psi)?;
        let back = self
            .evolution_operators()
            .pop()
            .expect("grid has at least one time")
            .adjoint();
        Ok(self
            .schrodinger_branches(psi.amplitudes())
            .into_iter()
            .map(|b| StateVector::from_vec_unchecked(back.apply_slice(&b)))
            .collect())
    }

    fn check_state(&self, psi: &StateVector) -> Result<()> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        if !psi.is_normalized(STRUCTURE_TOL) {
            return Err(Error::invalid(format!(
                "initial state must be normalized (norm = {})",
                psi.norm()
            )));
        }
        Ok(())
    }
}

fn conjugate(p: &Projector, w: &Operator) -> Projector {
    Projector::from_operator_unchecked(&(&w.adjoint() * p.op()) * w)
}

pub(crate) fn enumerate_indices(sizes: &[usize]) -> Vec<HistoryIndex> {
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut current = vec![0usize; sizes.len()];
    loop {
        out.push(HistoryIndex(current.clone()));
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            current[k] += 1;
            if current[k] < sizes[k] {
                break;
            }
            current[k] = 0;
        }
    }
}

/// One alternative per time, (α_1, …, α_n).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryIndex(pub Vec<usize>);

impl HistoryIndex {
    pub fn alternatives(&self) -> &[usize] {
        &self.0
    }
}

/// C_α = P^n_{α_n}(t_n) ⋯ P^1_{α_1}(t_1).
#[derive(Clone, Debug)]
pub struct ClassOperator {
    pub op: Operator,
    pub index: HistoryIndex,
}

pub fn class_operator(grid: &HistoryGrid, index: &HistoryIndex) -> Result<ClassOperator> {
    grid.validate_index(index)?;
    let evolutions = grid.evolution_operators();
    let mut c = Operator::identity(grid.dim());
    for ((w, d), &a) in evolutions.iter().zip(grid.decompositions()).zip(&index.0) {
        let p = conjugate(d.projector(a), w);
        c = p.op() * &c;
    }
    Ok(ClassOperator {
        op: c,
        index: index.clone(),
    })
}

/// |Ψ_α⟩ = C_α|Ψ⟩.
pub fn branch_vector(c: &ClassOperator, psi: &StateVector) -> Result<StateVector> {
    c.op.apply(psi)
}

/// Gram matrix D_{αα′} = ⟨Ψ_α|Ψ_α′⟩ over an ordered list of histories.
#[derive(Clone, Debug)]
pub struct DecoherenceMatrix {
    pub histories: Vec<HistoryIndex>,
    pub matrix: DMatrix<C64>,
}

impl DecoherenceMatrix {
    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }
}

/// Gram matrix of arbitrary branch vectors.
pub fn decoherence_from_branches(
    histories: Vec<HistoryIndex>,
    branches: &[Vec<C64>],
) -> Result<DecoherenceMatrix> {
    if histories.len() != branches.len() {
        return Err(Error::invalid(format!(
            "{} histories for {} branch vectors",
            histories.len(),
            branches.len()
        )));
    }
    if branches.is_empty() {
        return Err(Error::invalid("no branch vectors"));
    }
    let dim = branches[0].len();
    if let Some(b) = branches.iter().find(|b| b.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: b.len(),
        });
    }
    let columns = DMatrix::from_fn(dim, branches.len(), |i, j| branches[j][i]);
    let matrix = columns.ad_mul(&columns);
    Ok(DecoherenceMatrix { histories, matrix })
}

fn check_cap(grid: &HistoryGrid, cap: usize) -> Result<()> {
    let k = grid.history_count();
    if k > cap as u128 {
        return Err(Error::CapExceeded {
            what: "history count",
            count: k,
            cap: cap as u128,
        });
    }
    Ok(())
}

/// Full K×K decoherence functional for `psi` on `grid`.
pub fn decoherence_matrix(
    grid: &HistoryGrid,
    psi: &StateVector,
    cap: usize,
) -> Result<DecoherenceMatrix> {
    check_cap(grid, cap)?;
    grid.check_state(psi)?;
    let branches = grid.schrodinger_branches(psi.amplitudes());
    decoherence_from_branches(grid.histories(), &branches)
}

/// p_α = ‖C_α|Ψ⟩‖² without forming the Gram matrix.
pub fn history_probabilities(grid: &HistoryGrid, psi: &StateVector, cap: usize) -> Result<Vec<f64>> {
    check_cap(grid, cap)?;
    grid.check_state(psi)?;
    Ok(grid
        .schrodinger_branches(psi.amplitudes())
        .iter()
        .map(|b| b.iter().map(|a| a.norm_sqr()).sum())
        .collect())
}

/// Which part of the off-diagonal functional must vanish.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecoherenceCondition {
    /// |D_{αα′}| ≈ 0.
    #[default]
    Medium,
    /// Re D_{αα′} ≈ 0.
    Weak,
}

/// Decoherence functional with its diagnostics.
#[derive(Clone, Debug)]
pub struct DecoherenceReport {
    pub histories: Vec<HistoryIndex>,
    pub matrix: DMatrix<C64>,
    pub probabilities: Vec<f64>,
    pub epsilon: f64,
    pub condition: DecoherenceCondition,
    pub decoherent: bool,
    pub max_normalized_offdiag: f64,
    /// Set when the set fails to decohere, so the probabilities need not
    /// obey the sum rules under coarse graining.
    pub additivity_warning: bool,
}

impl DecoherenceReport {
    pub fn probability_sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let k = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the (hermitized) Gram matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Re Σ_{α′} D_{αα′} = Re⟨Ψ|C_α|Ψ⟩. These always sum to one and agree
    /// with the diagonal when the set decoheres.
    pub fn additive_probabilities(&self) -> Vec<f64> {
        self.matrix
            .row_iter()
            .map(|row| row.iter().map(|z| z.re).sum())
            .collect()
    }

    pub fn position_of(&self, index: &HistoryIndex) -> Option<usize> {
        self.histories.iter().position(|h| h == index)
    }
}

/// Medium decoherence test at tolerance `epsilon`.
pub fn check_decoherence(matrix: &DecoherenceMatrix, epsilon: f64) -> DecoherenceReport {
    check_decoherence_with(matrix, epsilon, DecoherenceCondition::Medium)
}

/// Decoherent iff |D_{αα′}| / √(p_α p_α′) ≤ ε for every pair α ≠ α′ of
/// histories with non-negligible probability.
pub fn check_decoherence_with(
    matrix: &DecoherenceMatrix,
    epsilon: f64,
    condition: DecoherenceCondition,
) -> DecoherenceReport {
    let k = matrix.len();
    let probabilities: Vec<f64> = (0..k).map(|i| matrix.matrix[(i, i)].re).collect();
    let mut worst = 0.0f64;
    for a in 0..k {
        if probabilities[a] <= PROBABILITY_FLOOR {
            continue;
        }
        for b in a + 1..k {
            if probabilities[b] <= PROBABILITY_FLOOR {
                continue;
            }
            let d = matrix.matrix[(a, b)];
            let size = match condition {
                DecoherenceCondition::Medium => d.norm(),
                DecoherenceCondition::Weak => d.re.abs(),
            };
            worst = worst.max(size / libm::sqrt(probabilities[a] * probabilities[b]));
        }
    }
    let decoherent = worst <= epsilon;
    DecoherenceReport {
        histories: matrix.histories.clone(),
        matrix: matrix.matrix.clone(),
        probabilities,
        epsilon,
        condition,
        decoherent,
        max_normalized_offdiag: worst,
        additivity_warning: !decoherent,
    }
}

/// The diagonal of the decoherence functional.
pub fn probabilities(report: &DecoherenceReport) -> Vec<f64> {
    report.probabilities.clone()
}

/// Per-time groups of alternative indices; each time's groups must
/// partition that decomposition's alternatives.
pub type MergeMap = Vec<Vec<Vec<usize>>>;

fn validate_merge(grid: &HistoryGrid, merge: &MergeMap) -> Result<()> {
    if merge.len() != grid.len() {
        return Err(Error::invalid(format!(
            "merge map has {} entries for {} times",
            merge.len(),
            grid.len()
        )));
    }
    for (k, (groups, d)) in merge.iter().zip(grid.decompositions()).enumerate() {
        let mut seen = vec![false; d.len()];
        for g in groups {
            if g.is_empty() {
                return Err(Error::invalid(format!("empty merge group at time {k}")));
            }
            for &a in g {
                if a >= d.len() {
                    return Err(Error::invalid(format!(
                        "merge group at time {k} names alternative {a} (only {})",
                        d.len()
                    )));
                }
                if seen[a] {
                    return Err(Error::invalid(format!(
                        "alternative {a} at time {k} appears in two merge groups"
                    )));
                }
                seen[a] = true;
            }
        }
        if let Some(a) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "alternative {a} at time {k} is missing from the merge map"
            )));
        }
    }
    Ok(())
}

/// The identity merge map for `grid` (every alternative on its own).
pub fn identity_merge(grid: &HistoryGrid) -> MergeMap {
    grid.decompositions()
        .iter()
        .map(|d| (0..d.len()).map(|a| vec![a]).collect())
        .collect()
}

/// Coarser grid whose projectors are sums of merged projectors.
pub fn coarse_grain(grid: &HistoryGrid, merge: &MergeMap) -> Result<HistoryGrid> {
    validate_merge(grid, merge)?;
    let dim = grid.dim();
    let decompositions = merge
        .iter()
        .zip(grid.decompositions())
        .map(|(groups, d)| {
            let projectors = groups
                .iter()
                .map(|g| {
                    let parts: Vec<&Projector> = g.iter().map(|&a| d.projector(a)).collect();
                    if parts.iter().all(|p| p.support().is_some()) {
                        let mut mask = vec![false; dim];
                        for p in &parts {
                            for (m, &s) in mask.iter_mut().zip(p.support().unwrap_or(&[])) {
                                *m |= s;
                            }
                        }
                        Projector::diagonal(mask)
                    } else {
                        let mut sum = Operator::zeros(dim);
                        for p in &parts {
                            sum = &sum + p.op();
                        }
                        Projector::from_operator_unchecked(sum)
                    }
                })
                .collect();
            let labels = groups
                .iter()
                .map(|g| {
                    let names: Vec<&str> = g.iter().map(|&a| d.labels()[a].as_str()).collect();
                    names.join("+")
                })
                .collect();
            Decomposition::new_unchecked(projectors, labels)
        })
        .collect();
    HistoryGrid::from_parts(
        grid.times.clone(),
        decompositions,
        grid.hamiltonian.clone(),
        grid.kicks.clone(),
        grid.spectrum.clone(),
    )
}

/// Maps a fine history onto its coarse class under `merge`.
pub fn coarse_index(merge: &MergeMap, fine: &HistoryIndex) -> HistoryIndex {
    HistoryIndex(
        fine.0
            .iter()
            .zip(merge)
            .map(|(&a, groups)| {
                groups
                    .iter()
                    .position(|g| g.contains(&a))
                    .expect("merge map validated as a partition")
            })
            .collect(),
    )
}

/// Sum-rule diagnostics for one coarse-grained class.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditivityEntry {
    pub coarse: HistoryIndex,
    pub coarse_probability: f64,
    pub summed_fine: f64,
    /// |p_ᾱ − Σ_{α∈ᾱ} p_α|.
    pub defect: f64,
    /// Σ_{α≠α′∈ᾱ} |D_{αα′}|.
    pub interference: f64,
}

impl AdditivityEntry {
    /// defect ≤ 2 Σ_{α≠α′∈ᾱ} |D_{αα′}|, with rounding slack.
    pub fn within_bound(&self) -> bool {
        self.defect <= 2.0 * self.interference + 1e-12
    }
}

/// Compares coarse-grained probabilities with sums of fine ones.
pub fn additivity_check(
    fine: &DecoherenceReport,
    coarse: &DecoherenceReport,
    merge: &MergeMap,
) -> Result<Vec<AdditivityEntry>> {
    let members: Vec<HistoryIndex> = fine.histories.iter().map(|h| coarse_index(merge, h)).collect();
    coarse
        .histories
        .iter()
        .zip(&coarse.probabilities)
        .map(|(c, &pc)| {
            let inside: Vec<usize> = (0..members.len()).filter(|&i| &members[i] == c).collect();
            if inside.is_empty() {
                return Err(Error::invalid("coarse history has no fine members"));
            }
            let summed: f64 = inside.iter().map(|&i| fine.probabilities[i]).sum();
            let mut interference = 0.0;
            for &a in &inside {
                for &b in &inside {
                    if a != b {
                        interference += fine.matrix[(a, b)].norm();
                    }
                }
            }
            Ok(AdditivityEntry {
                coarse: c.clone(),
                coarse_probability: pc,
                summed_fine: summed,
                defect: (pc - summed).abs(),
                interference,
            })
        })
        .collect()
}
