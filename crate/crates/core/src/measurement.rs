//! Ideal measurement models: a subsystem coupled impulsively to pointer
//! registers, compared against subsystem-only (Copenhagen) probabilities.
//!
//! The closed system lives on ℋ_s ⊗ R_1 ⊗ … ⊗ R_m with the subsystem on the
//! slow index. Each register starts in its ready state |0⟩. A measurement
//! event at t_k applies Σ_a s_a ⊗ V_a at that instant, where V_a writes the
//! pointer state |π_a⟩ into the event's register. Between events only the
//! subsystem Hamiltonian acts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hilbert::{
    position_decomposition, Decomposition, Operator, Projector, Spectrum, StateVector, C64,
    MAX_DENSE_DIM, STRUCTURE_TOL,
};
use crate::histories::{
    check_decoherence, decoherence_matrix, history_probabilities, DecoherenceReport, HistoryGrid,
    HistoryIndex, DEFAULT_HISTORY_CAP,
};

/// Which register records an event and how distinguishable its pointer
/// states are: ⟨π_a|π_b⟩ = `overlap_delta` for a ≠ b.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointerSpec {
    pub register: usize,
    pub overlap_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementEvent {
    pub time: f64,
    pub decomposition: Decomposition,
    pub pointer: PointerSpec,
}

/// Subsystem ⊗ pointer registers with a product initial state.
#[derive(Clone, Debug)]
pub struct CompositeModel {
    psi_s: StateVector,
    h_s: Operator,
    register_dims: Vec<usize>,
    events: Vec<MeasurementEvent>,
}

impl CompositeModel {
    pub fn new(
        psi_s: StateVector,
        h_s: Operator,
        register_dims: Vec<usize>,
        events: Vec<MeasurementEvent>,
    ) -> Result<Self> {
        let dim_s = psi_s.dim();
        if h_s.dim() != dim_s {
            return Err(Error::DimensionMismatch {
                expected: dim_s,
                found: h_s.dim(),
            });
        }
        if !psi_s.is_normalized(STRUCTURE_TOL) {
            return Err(Error::invalid(format!(
                "subsystem state must be normalized (norm = {})",
                psi_s.norm()
            )));
        }
        if register_dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid("pointer registers need dimension >= 2"));
        }
        let dim_r: usize = register_dims.iter().product();
        let total = dim_s.saturating_mul(dim_r);
        if total > MAX_DENSE_DIM {
            return Err(Error::CapExceeded {
                what: "closed-system dimension",
                count: total as u128,
                cap: MAX_DENSE_DIM as u128,
            });
        }
        for (k, e) in events.iter().enumerate() {
            if !e.time.is_finite() {
                return Err(Error::invalid(format!("event {k} has a non-finite time")));
            }
            if e.decomposition.dim() != dim_s {
                return Err(Error::DimensionMismatch {
                    expected: dim_s,
                    found: e.decomposition.dim(),
                });
            }
            let reg = e.pointer.register;
            if reg >= register_dims.len() {
                return Err(Error::invalid(format!(
                    "event {k} records into register {reg}, but only {} exist",
                    register_dims.len()
                )));
            }
            if register_dims[reg] < e.decomposition.len() {
                return Err(Error::invalid(format!(
                    "register {reg} has dimension {} but event {k} has {} alternatives",
                    register_dims[reg],
                    e.decomposition.len()
                )));
            }
            let d = e.pointer.overlap_delta;
            if !(0.0..1.0).contains(&d) {
                return Err(Error::invalid(format!(
                    "pointer overlap must lie in [0, 1), got {d}"
                )));
            }
        }
        if let Some(k) = events.windows(2).position(|w| w[1].time <= w[0].time) {
            return Err(Error::invalid(format!(
                "event times must be strictly increasing (event {} at {} follows {})",
                k + 1,
                events[k + 1].time,
                events[k].time
            )));
        }
        Ok(Self {
            psi_s,
            h_s,
            register_dims,
            events,
        })
    }

    pub fn dim_s(&self) -> usize {
        self.psi_s.dim()
    }

    pub fn dim_r(&self) -> usize {
        self.register_dims.iter().product()
    }

    pub fn psi_s(&self) -> &StateVector {
        &self.psi_s
    }

    pub fn h_s(&self) -> &Operator {
        &self.h_s
    }

    pub fn register_dims(&self) -> &[usize] {
        &self.register_dims
    }

    pub fn events(&self) -> &[MeasurementEvent] {
        &self.events
    }

    /// |Φ_r⟩: every register in its ready state.
    pub fn phi_r(&self) -> StateVector {
        StateVector::basis(self.dim_r(), 0).expect("dim_r >= 1")
    }

    /// |Ψ⟩ = |ψ⟩ ⊗ |Φ_r⟩.
    pub fn initial_state(&self) -> StateVector {
        self.psi_s.tensor(&self.phi_r())
    }

    /// Same model with every pointer overlap replaced by `delta`.
    pub fn with_overlap(&self, delta: f64) -> Result<Self> {
        let mut events = self.events.clone();
        for e in &mut events {
            e.pointer.overlap_delta = delta;
        }
        Self::new(
            self.psi_s.clone(),
            self.h_s.clone(),
            self.register_dims.clone(),
            events,
        )
    }

    fn schedule(&self) -> Vec<(f64, Decomposition)> {
        self.events
            .iter()
            .map(|e| (e.time, e.decomposition.clone()))
            .collect()
    }

    fn closed_hamiltonian(&self) -> Operator {
        self.h_s.kron(&Operator::identity(self.dim_r()))
    }

    fn measurement_unitaries(&self) -> Result<Vec<Operator>> {
        self.events
            .iter()
            .map(|e| build_measurement_unitary(&e.decomposition, &e.pointer, &self.register_dims))
            .collect()
    }
}

/// n unit vectors in ℝ^dim with pairwise overlap `delta`, built as the
/// columns of G^{1/2} for G = (1−δ)I + δJ, padded with zeros. At δ = 0
/// they are the first n basis vectors.
pub fn pointer_states(n: usize, dim: usize, delta: f64) -> Vec<Vec<f64>> {
    let nf = n as f64;
    let a = libm::sqrt(1.0 - delta);
    let b = (libm::sqrt(1.0 + (nf - 1.0) * delta) - a) / nf;
    (0..n)
        .map(|k| {
            let mut v = vec![0.0; dim];
            for (i, x) in v.iter_mut().enumerate().take(n) {
                *x = b + if i == k { a } else { 0.0 };
            }
            v
        })
        .collect()
}

/// Real orthogonal map sending |0⟩ to `target` (a Householder reflection,
/// or the identity when `target` is already |0⟩).
fn ready_to(target: &[f64]) -> Operator {
    let dim = target.len();
    let mut w: Vec<f64> = target.iter().map(|x| -x).collect();
    w[0] += 1.0;
    let w2: f64 = w.iter().map(|x| x * x).sum();
    if w2 < 1e-30 {
        return Operator::identity(dim);
    }
    Operator::from_fn(dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id - 2.0 * w[i] * w[j] / w2, 0.0)
    })
}

/// Σ_a s_a ⊗ V_a on ℋ_s ⊗ R_1 ⊗ … ⊗ R_m, with V_a acting on the pointer's
/// register only and mapping its ready state to |π_a⟩.
pub fn build_measurement_unitary(
    decomp: &Decomposition,
    pointer: &PointerSpec,
    register_dims: &[usize],
) -> Result<Operator> {
    let reg = pointer.register;
    if reg >= register_dims.len() {
        return Err(Error::invalid(format!("register {reg} does not exist")));
    }
    let reg_dim = register_dims[reg];
    if reg_dim < decomp.len() || reg_dim < 2 {
        return Err(Error::invalid(format!(
            "register of dimension {reg_dim} cannot hold {} pointer states",
            decomp.len()
        )));
    }
    if !(0.0..1.0).contains(&pointer.overlap_delta) {
        return Err(Error::invalid(format!(
            "pointer overlap must lie in [0, 1), got {}",
            pointer.overlap_delta
        )));
    }
    let before: usize = register_dims[..reg].iter().product();
    let after: usize = register_dims[reg + 1..].iter().product();
    let states = pointer_states(decomp.len(), reg_dim, pointer.overlap_delta);
    let dim_s = decomp.dim();
    let dim_r: usize = register_dims.iter().product();
    let mut total = Operator::zeros(dim_s * dim_r);
    for (p, target) in decomp.projectors().iter().zip(&states) {
        let v = Operator::identity(before)
            .kron(&ready_to(target))
            .kron(&Operator::identity(after));
        total = &total + &p.op().kron(&v);
    }
    let defect = total.unitarity_defect();
    if defect > STRUCTURE_TOL {
        return Err(Error::numerical(format!(
            "measurement unitary defect {defect:e}"
        )));
    }
    Ok(total)
}

/// p_α = ‖s^n_{α_n}(t_n) ⋯ s^1_{α_1}(t_1)|ψ⟩‖² computed in ℋ_s alone.
pub fn copenhagen_probability(
    psi_s: &StateVector,
    h_s: &Operator,
    schedule: &[(f64, Decomposition)],
) -> Result<Vec<f64>> {
    if schedule.is_empty() {
        return Ok(vec![1.0]);
    }
    let grid = HistoryGrid::new(
        schedule.iter().map(|(t, _)| *t).collect(),
        schedule.iter().map(|(_, d)| d.clone()).collect(),
        h_s.clone(),
    )?;
    history_probabilities(&grid, psi_s, DEFAULT_HISTORY_CAP)
}

/// History grid of the measured alternatives S^k = s^k ⊗ I_r in the closed
/// system, with the measurement interactions as impulsive kicks.
pub fn closed_system_grid(model: &CompositeModel) -> Result<HistoryGrid> {
    let dim_r = model.dim_r();
    let dim = model.dim_s() * dim_r;
    if model.events.is_empty() {
        return HistoryGrid::new(
            vec![0.0],
            vec![Decomposition::trivial(dim)],
            model.closed_hamiltonian(),
        );
    }
    let kicks = model.measurement_unitaries()?.into_iter().map(Some).collect();
    HistoryGrid::with_kicks(
        model.events.iter().map(|e| e.time).collect(),
        model
            .events
            .iter()
            .map(|e| e.decomposition.embed(1, dim_r))
            .collect(),
        model.closed_hamiltonian(),
        kicks,
    )
}

/// Decoherence report for the measured-outcome histories of the closed
/// system.
pub fn closed_system_probability(model: &CompositeModel, epsilon: f64) -> Result<DecoherenceReport> {
    let grid = closed_system_grid(model)?;
    let d = decoherence_matrix(&grid, &model.initial_state(), DEFAULT_HISTORY_CAP)?;
    Ok(check_decoherence(&d, epsilon))
}

/// Closed-system versus subsystem-only probabilities, history by history.
#[derive(Clone, Debug)]
pub struct CopenhagenComparison {
    pub histories: Vec<HistoryIndex>,
    pub p_copenhagen: Vec<f64>,
    /// Re⟨Ψ|C_α|Ψ⟩: the closed-system assignment that obeys every sum rule.
    /// It coincides with ‖C_α|Ψ⟩‖² exactly when the set decoheres.
    pub p_closed: Vec<f64>,
    /// ‖C_α|Ψ⟩‖², the diagonal of the decoherence functional.
    pub p_diagonal: Vec<f64>,
    /// p_closed − p_copenhagen.
    pub diffs: Vec<f64>,
    pub max_abs_diff: f64,
    /// max |p_diagonal − p_copenhagen|.
    pub max_abs_diagonal_diff: f64,
    pub decoherent: bool,
    pub max_normalized_offdiag: f64,
}

pub fn compare_copenhagen(model: &CompositeModel, epsilon: f64) -> Result<CopenhagenComparison> {
    let report = closed_system_probability(model, epsilon)?;
    let p_copenhagen = copenhagen_probability(model.psi_s(), model.h_s(), &model.schedule())?;
    if p_copenhagen.len() != report.probabilities.len() {
        return Err(Error::numerical("history counts differ between the two routes"));
    }
    let p_closed = report.additive_probabilities();
    let diffs: Vec<f64> = p_closed.iter().zip(&p_copenhagen).map(|(a, b)| a - b).collect();
    let max_abs_diff = diffs.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let max_abs_diagonal_diff = report
        .probabilities
        .iter()
        .zip(&p_copenhagen)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CopenhagenComparison {
        histories: report.histories.clone(),
        p_copenhagen,
        p_closed,
        p_diagonal: report.probabilities.clone(),
        diffs,
        max_abs_diff,
        max_abs_diagonal_diff,
        decoherent: report.decoherent,
        max_normalized_offdiag: report.max_normalized_offdiag,
    })
}

/// Alternatives {R_α} on the register space, embedded as I_s ⊗ R_α.
#[derive(Clone, Debug)]
pub struct RecordSet {
    pub projectors: Decomposition,
}

impl RecordSet {
    pub fn new(projectors: Decomposition, model: &CompositeModel) -> Result<Self> {
        if projectors.dim() != model.dim_r() {
            return Err(Error::DimensionMismatch {
                expected: model.dim_r(),
                found: projectors.dim(),
            });
        }
        Ok(Self { projectors })
    }

    /// The single record {I}.
    pub fn trivial(model: &CompositeModel) -> Self {
        Self {
            projectors: Decomposition::trivial(model.dim_r()),
        }
    }

    /// Every basis state of the registers as its own record.
    pub fn register_basis(model: &CompositeModel) -> Self {
        let dim_r = model.dim_r();
        let regions: Vec<Vec<usize>> = (0..dim_r).map(|i| vec![i]).collect();
        Self {
            projectors: position_decomposition(dim_r, &regions).expect("basis partition"),
        }
    }

    /// Records of measured histories, in the same lexicographic order as the
    /// histories: event k's outcome a is read from register k as basis state
    /// |a⟩, with higher register states folded into the last outcome. Needs
    /// exactly one register per event, in event order.
    pub fn history_records(model: &CompositeModel) -> Result<Self> {
        let dims = model.register_dims();
        if dims.len() != model.events().len()
            || model
                .events()
                .iter()
                .enumerate()
                .any(|(k, e)| e.pointer.register != k)
        {
            return Err(Error::invalid(
                "history records need one register per event, in event order",
            ));
        }
        let outcomes: Vec<usize> = model.events().iter().map(|e| e.decomposition.len()).collect();
        let dim_r = model.dim_r();
        let mut regions: Vec<Vec<usize>> = vec![Vec::new(); outcomes.iter().product()];
        for state in 0..dim_r {
            // Decode register digits, most significant first.
            let mut rest = state;
            let mut digits = vec![0usize; dims.len()];
            for k in (0..dims.len()).rev() {
                digits[k] = rest % dims[k];
                rest /= dims[k];
            }
            let mut class = 0usize;
            for (k, &d) in digits.iter().enumerate() {
                class = class * outcomes[k] + d.min(outcomes[k] - 1);
            }
            regions[class].push(state);
        }
        if model.events().is_empty() {
            return Ok(Self::trivial(model));
        }
        Ok(Self {
            projectors: position_decomposition(dim_r, &regions)?,
        })
    }
}

/// Closed-system state after every event with t ≤ `time`, evolved to `time`.
pub fn evolved_state(model: &CompositeModel, time: f64) -> Result<StateVector> {
    let spectrum = Spectrum::of(&model.closed_hamiltonian())?;
    let kicks = model.measurement_unitaries()?;
    let mut state = model.initial_state().into_amplitudes();
    let mut now = 0.0;
    for (e, kick) in model.events.iter().zip(&kicks) {
        if e.time > time {
            break;
        }
        state = spectrum.propagate(&state, e.time - now);
        state = kick.apply_slice(&state);
        now = e.time;
    }
    state = spectrum.propagate(&state, time - now);
    StateVector::new(state)
}

/// Probabilities of I_s ⊗ R_α at `read_time`, which must not precede the
/// last measurement.
pub fn record_probabilities(
    model: &CompositeModel,
    records: &RecordSet,
    read_time: f64,
) -> Result<Vec<f64>> {
    if !read_time.is_finite() {
        return Err(Error::invalid("read time must be finite"));
    }
    if let Some(last) = model.events.last() {
        if read_time < last.time {
            return Err(Error::invalid(format!(
                "records are read at {read_time}, before the last measurement at {}",
                last.time
            )));
        }
    }
    if records.projectors.dim() != model.dim_r() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_r(),
            found: records.projectors.dim(),
        });
    }
    let state = evolved_state(model, read_time)?;
    let dim_s = model.dim_s();
    Ok(records
        .projectors
        .projectors()
        .iter()
        .map(|r| {
            let embedded: Projector = r.embed(dim_s, 1);
            embedded.apply_slice(state.amplitudes()).iter().map(|a| a.norm_sqr()).sum()
        })
        .collect())
}

/// Qubit measured twice in the z basis, drifting under ω σ_x, with one
/// qubit register per event (2 ⊗ 4).
pub fn reference_two_event_model(delta: f64) -> Result<CompositeModel> {
    let z = position_decomposition(2, &[vec![0], vec![1]])?;
    let omega = 1.0;
    let h_s = crate::hilbert::pauli::x().scale(C64::new(omega, 0.0));
    let events = vec![
        MeasurementEvent {
            time: 0.4,
            decomposition: z.clone(),
            pointer: PointerSpec {
                register: 0,
                overlap_delta: delta,
            },
        },
        MeasurementEvent {
            time: 1.1,
            decomposition: z,
            pointer: PointerSpec {
                register: 1,
                overlap_delta: delta,
            },
        },
    ];
    CompositeModel::new(StateVector::basis(2, 0)?, h_s, vec![2, 2], events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::pauli;
    use crate::histories::EPSILON_EXACT;

    fn z_basis() -> Decomposition {
        position_decomposition(2, &[vec![0], vec![1]]).unwrap()
    }

    fn plus() -> StateVector {
        StateVector::normalized(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn cnot_type_unitary_for_orthogonal_pointer() {
        let p = PointerSpec {
            register: 0,
            overlap_delta: 0.0,
        };
        let u = build_measurement_unitary(&z_basis(), &p, &[2]).unwrap();
        assert!(u.unitarity_defect() < 1e-12);
        // |a⟩|ready⟩ → |a⟩|a⟩.
        for a in 0..2 {
            let input = StateVector::basis(4, 2 * a).unwrap();
            let out = u.apply(&input).unwrap();
            let want = StateVector::basis(4, 3 * a).unwrap();
            assert!((out.inner(&want).unwrap().norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pointer_gram_matches_gram_schmidt() {
        // Independent construction: Gram-Schmidt-free closed form on two
        // vectors, e_0 and δ e_0 + √(1−δ²) e_1, has overlap δ.
        let delta = 0.2;
        let p = PointerSpec {
            register: 0,
            overlap_delta: delta,
        };
        let u = build_measurement_unitary(&z_basis(), &p, &[3]).unwrap();
        assert!(u.unitarity_defect() < 1e-12);
        let pointer = |a: usize| -> Vec<C64> {
            let out = u.apply(&StateVector::basis(6, 3 * a).unwrap()).unwrap();
            out.amplitudes()[3 * a..3 * a + 3].to_vec()
        };
        let (p0, p1) = (pointer(0), pointer(1));
        let g01: C64 = p0.iter().zip(&p1).map(|(x, y)| x.conj() * y).sum();
        let n0: f64 = p0.iter().map(|x| x.norm_sqr()).sum();
        assert!((g01.re - delta).abs() < 1e-12 && g01.im.abs() < 1e-15);
        assert!((n0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_register() {
        let three = position_decomposition(3, &[vec![0], vec![1], vec![2]]).unwrap();
        let p = PointerSpec {
            register: 0,
            overlap_delta: 0.0,
        };
        assert!(build_measurement_unitary(&three, &p, &[2]).is_err());
    }

    #[test]
    fn unitary_for_delta_range() {
        for delta in [0.0, 0.1, 0.5, 0.9] {
            let p = PointerSpec {
                register: 1,
                overlap_delta: delta,
            };
            let u = build_measurement_unitary(&z_basis(), &p, &[2, 3]).unwrap();
            assert!(u.unitarity_defect() < 1e-10, "delta {delta}");
        }
    }

    #[test]
    fn copenhagen_cases() {
        let p = copenhagen_probability(&plus(), &Operator::zeros(2), &[(0.0, z_basis())]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let p = copenhagen_probability(
            &plus(),
            &Operator::zeros(2),
            &[(0.0, z_basis()), (1.0, z_basis())],
        )
        .unwrap();
        assert!(p[1].abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn copenhagen_rotation_matches_explicit_products() {
        // h = σ_x, rotation angle θ = ω τ per interval.
        let (t1, t2) = (0.3, 0.3 + core::f64::consts::FRAC_PI_4);
        let p = copenhagen_probability(
            &StateVector::basis(2, 0).unwrap(),
            &pauli::x(),
            &[(t1, z_basis()), (t2, z_basis())],
        )
        .unwrap();
        let (c1, s1) = (libm::cos(t1), libm::sin(t1));
        let (c2, s2) = (libm::cos(t2 - t1), libm::sin(t2 - t1));
        let want = [c1 * c1 * c2 * c2, c1 * c1 * s2 * s2, s1 * s1 * s2 * s2, s1 * s1 * c2 * c2];
        for (g, w) in p.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_records_decohere_exactly() {
        let model = reference_two_event_model(0.0).unwrap();
        let r = closed_system_probability(&model, EPSILON_EXACT).unwrap();
        assert!(r.decoherent, "max offdiag {}", r.max_normalized_offdiag);
        assert!((r.probability_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_events_is_trivial() {
        let model =
            CompositeModel::new(plus(), pauli::x(), vec![2], Vec::new()).unwrap();
        let r = closed_system_probability(&model, EPSILON_EXACT).unwrap();
        assert_eq!(r.probabilities.len(), 1);
        assert!((r.probabilities[0] - 1.0).abs() < 1e-12);
        let rec = record_probabilities(&model, &RecordSet::register_basis(&model), 1.0).unwrap();
        assert!((rec[0] - 1.0).abs() < 1e-12 && rec[1].abs() < 1e-15);
        let triv = record_probabilities(&model, &RecordSet::trivial(&model), 0.0).unwrap();
        assert_eq!(triv.len(), 1);
        assert!((triv[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_records_break_decoherence() {
        // Interference between first outcomes survives when records overlap.
        let model = CompositeModel::new(
            plus(),
            pauli::x().scale(C64::new(0.7, 0.0)),
            vec![2, 2],
            vec![
                MeasurementEvent {
                    time: 0.0,
                    decomposition: z_basis(),
                    pointer: PointerSpec {
                        register: 0,
                        overlap_delta: 0.5,
                    },
                },
                MeasurementEvent {
                    time: 1.0,
                    decomposition: z_basis(),
                    pointer: PointerSpec {
                        register: 1,
                        overlap_delta: 0.5,
                    },
                },
            ],
        )
        .unwrap();
        let r = closed_system_probability(&model, 1e-3).unwrap();
        assert!(!r.decoherent);
        assert!(r.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn comparison_exact_for_ideal_records_and_single_events() {
        let model = reference_two_event_model(0.0).unwrap();
        assert!(compare_copenhagen(&model, EPSILON_EXACT).unwrap().max_abs_diff <= 1e-10);

        for delta in [0.0, 0.3, 0.8] {
            let single = CompositeModel::new(
                plus(),
                pauli::x(),
                vec![2],
                vec![MeasurementEvent {
                    time: 0.5,
                    decomposition: z_basis(),
                    pointer: PointerSpec {
                        register: 0,
                        overlap_delta: delta,
                    },
                }],
            )
            .unwrap();
            let cmp = compare_copenhagen(&single, EPSILON_EXACT).unwrap();
            assert!(cmp.max_abs_diff <= 1e-10, "delta {delta}: {}", cmp.max_abs_diff);
        }
    }

    #[test]
    fn comparison_error_grows_with_overlap() {
        let mut last = 0.0;
        for delta in [0.1, 0.2, 0.3, 0.4] {
            let cmp = compare_copenhagen(&reference_two_event_model(delta).unwrap(), 1e-3).unwrap();
            assert!(cmp.max_abs_diff > last, "delta {delta}");
            // The diagonal itself is untouched by ideal records.
            assert!(cmp.max_abs_diagonal_diff < 1e-12);
            last = cmp.max_abs_diff;
        }
    }

    #[test]
    fn records_reproduce_history_probabilities() {
        let model = reference_two_event_model(0.0).unwrap();
        let records = RecordSet::history_records(&model).unwrap();
        let rec = record_probabilities(&model, &records, 2.0).unwrap();
        let r = closed_system_probability(&model, EPSILON_EXACT).unwrap();
        for (a, b) in rec.iter().zip(&r.probabilities) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(record_probabilities(&model, &records, 0.5).is_err());
    }

    #[test]
    fn model_validation() {
        let bad_time = CompositeModel::new(
            plus(),
            pauli::x(),
            vec![2, 2],
            vec![
                MeasurementEvent {
                    time: 1.0,
                    decomposition: z_basis(),
                    pointer: PointerSpec {
                        register: 0,
                        overlap_delta: 0.0,
                    },
                },
                MeasurementEvent {
                    time: 0.5,
                    decomposition: z_basis(),
                    pointer: PointerSpec {
                        register: 1,
                        overlap_delta: 0.0,
                    },
                },
            ],
        );
        assert!(bad_time.is_err());
        let bad_delta = reference_two_event_model(1.0);
        assert!(bad_delta.is_err());
    }
}
