//! Scenario sections turned into validated core objects.

use histories_lab_core::bohm::{
    harmonic_potential, Axis, ConfigGrid, GaussianPacket, GridPropagator, GridWavefunction,
    RegionSchedule, SlabPartition,
};
use histories_lab_core::hilbert::MAX_DENSE_DIM;
use histories_lab_core::histories::{DecoherenceCondition, HistoryGrid, MergeMap};
use histories_lab_core::measurement::{CompositeModel, MeasurementEvent, PointerSpec};
use histories_lab_core::pathsum::{LatticePathModel, ProjectionStep};
use histories_lab_core::{
    build_ring_hamiltonian, position_decomposition, Decomposition, Operator, Projector,
    StateVector, C64,
};

use crate::error::{Context, LabError};
use crate::scenario::*;

/// Relative tolerance for matching times onto the dt lattice.
const LATTICE_TOL: f64 = 1e-9;

fn finite(key: &str, v: f64) -> Result<f64, LabError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::invalid(key, format!("must be finite, got {v}")))
    }
}

fn positive(key: &str, v: f64) -> Result<f64, LabError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(LabError::invalid(key, format!("must be positive ({key} > 0), got {v}")))
    }
}

pub fn epsilon(key: &str, v: f64) -> Result<f64, LabError> {
    positive(key, v)
}

fn nonzero(key: &str, v: usize) -> Result<usize, LabError> {
    if v == 0 {
        Err(LabError::invalid(key, "must be at least 1"))
    } else {
        Ok(v)
    }
}

pub fn hamiltonian(cfg: &ModelConfig, key: &str) -> Result<Operator, LabError> {
    match cfg {
        ModelConfig::RingLattice {
            sites,
            hopping,
            potential,
        } => {
            finite(&format!("{key}.hopping"), *hopping)?;
            let potential = potential.clone().unwrap_or_else(|| vec![0.0; *sites]);
            if potential.len() != *sites {
                return Err(LabError::invalid(
                    format!("{key}.potential"),
                    format!("has {} entries for {sites} sites", potential.len()),
                ));
            }
            build_ring_hamiltonian(*sites, *hopping, &potential).at(key)
        }
        ModelConfig::QubitRegister {
            qubits,
            field_x,
            field_z,
            coupling_zz,
        } => {
            finite(&format!("{key}.field_x"), *field_x)?;
            finite(&format!("{key}.field_z"), *field_z)?;
            finite(&format!("{key}.coupling_zz"), *coupling_zz)?;
            histories_lab_core::ModelSpec::QubitRegister {
                qubits: *qubits,
                couplings: histories_lab_core::QubitCouplings {
                    field_x: *field_x,
                    field_z: *field_z,
                    coupling_zz: *coupling_zz,
                },
            }
            .hamiltonian()
            .at(key)
        }
        ModelConfig::Matrix { real, imag } => {
            let n = real.len();
            if n == 0 || n > MAX_DENSE_DIM {
                return Err(LabError::invalid(
                    format!("{key}.real"),
                    format!("dimension must lie in 1..={MAX_DENSE_DIM}, got {n}"),
                ));
            }
            let zero_rows = vec![vec![0.0; n]; n];
            let imag = imag.as_ref().unwrap_or(&zero_rows);
            if imag.len() != n || real.iter().chain(imag).any(|r| r.len() != n) {
                return Err(LabError::invalid(key, format!("rows must form {n}x{n} matrices")));
            }
            if real.iter().chain(imag).flatten().any(|v| !v.is_finite()) {
                return Err(LabError::invalid(key, "entries must be finite"));
            }
            let rows: Vec<Vec<C64>> = real
                .iter()
                .zip(imag)
                .map(|(r, i)| r.iter().zip(i).map(|(&a, &b)| C64::new(a, b)).collect())
                .collect();
            let h = Operator::from_rows(&rows).at(key)?;
            if !h.is_hermitian(1e-12) {
                return Err(LabError::invalid(key, "matrix must be hermitian"));
            }
            Ok(h)
        }
    }
}

fn qubit_count(cfg: &ModelConfig) -> Option<usize> {
    match cfg {
        ModelConfig::QubitRegister { qubits, .. } => Some(*qubits),
        _ => None,
    }
}

pub fn state(cfg: &StateConfig, dim: usize, key: &str) -> Result<StateVector, LabError> {
    match (cfg.basis, &cfg.amplitudes) {
        (Some(b), None) => {
            if b >= dim {
                return Err(LabError::invalid(
                    format!("{key}.basis"),
                    format!("must lie in 0..{dim}, got {b}"),
                ));
            }
            StateVector::basis(dim, b).at(key)
        }
        (None, Some(amps)) => {
            if amps.len() != dim {
                return Err(LabError::invalid(
                    format!("{key}.amplitudes"),
                    format!("has {} entries for dimension {dim}", amps.len()),
                ));
            }
            if amps.iter().flatten().any(|v| !v.is_finite()) {
                return Err(LabError::invalid(format!("{key}.amplitudes"), "must be finite"));
            }
            let amps: Vec<C64> = amps.iter().map(|a| C64::new(a[0], a[1])).collect();
            let psi = if cfg.normalize {
                StateVector::normalized(amps)
            } else {
                StateVector::new(amps)
            };
            psi.at(&format!("{key}.amplitudes"))
        }
        _ => Err(LabError::invalid(
            key,
            "give exactly one of `basis` or `amplitudes`",
        )),
    }
}

fn qubit_projector(qubits: usize, q: usize, sign: f64) -> Operator {
    let half = Operator::from_fn(2, |i, j| {
        let v = if i == j { 1.0 } else { sign };
        C64::new(0.5 * v, 0.0)
    });
    Operator::identity(1 << q)
        .kron(&half)
        .kron(&Operator::identity(1 << (qubits - q - 1)))
}

pub fn decomposition(
    cfg: &ProjectorConfig,
    dim: usize,
    qubits: Option<usize>,
    key: &str,
) -> Result<Decomposition, LabError> {
    match cfg {
        ProjectorConfig::Trivial => Ok(Decomposition::trivial(dim)),
        ProjectorConfig::Groups { groups, labels } => {
            let d = position_decomposition(dim, groups).at(&format!("{key}.groups"))?;
            match labels {
                Some(l) => d.with_labels(l.clone()).at(&format!("{key}.labels")),
                None => Ok(d),
            }
        }
        ProjectorConfig::Qubit { qubit, basis } => {
            let n = qubits.ok_or_else(|| {
                LabError::invalid(key, "qubit alternatives need a qubit-register model")
            })?;
            if *qubit >= n {
                return Err(LabError::invalid(
                    format!("{key}.qubit"),
                    format!("must lie in 0..{n}, got {qubit}"),
                ));
            }
            match basis {
                QubitBasis::Z => {
                    let shift = n - 1 - qubit;
                    let groups: Vec<Vec<usize>> = (0..2)
                        .map(|b| (0..dim).filter(|i| (i >> shift) & 1 == b).collect())
                        .collect();
                    position_decomposition(dim, &groups).at(key)
                }
                QubitBasis::X => {
                    let projectors = [1.0, -1.0]
                        .iter()
                        .map(|&s| Projector::new(qubit_projector(n, *qubit, s)))
                        .collect::<Result<Vec<_>, _>>()
                        .at(key)?;
                    Decomposition::new(projectors, vec!["+".into(), "-".into()]).at(key)
                }
            }
        }
    }
}

pub struct HistoriesPlan {
    pub grid: HistoryGrid,
    pub state: StateVector,
    pub epsilon: f64,
    pub condition: DecoherenceCondition,
    pub cap: usize,
    pub merge: Option<MergeMap>,
}

pub fn histories(s: &HistoriesScenario) -> Result<HistoriesPlan, LabError> {
    let h = hamiltonian(&s.model, "model")?;
    let dim = h.dim();
    let state = state(&s.state, dim, "state")?;
    if s.alternatives.is_empty() {
        return Err(LabError::invalid("alternatives", "at least one time is required"));
    }
    let mut times = Vec::new();
    let mut decompositions = Vec::new();
    for (k, a) in s.alternatives.iter().enumerate() {
        let key = format!("alternatives[{k}]");
        times.push(finite(&format!("{key}.time"), a.time)?);
        decompositions.push(decomposition(
            &a.projectors,
            dim,
            qubit_count(&s.model),
            &format!("{key}.projectors"),
        )?);
    }
    let cap = nonzero("history_cap", s.history_cap)?;
    let grid = HistoryGrid::new(times, decompositions, h).at("alternatives")?;
    if grid.history_count() > cap as u128 {
        return Err(LabError::invalid(
            "history_cap",
            format!("{} histories exceed the cap of {cap}", grid.history_count()),
        ));
    }
    if let Some(m) = &s.merge {
        histories_lab_core::histories::coarse_grain(&grid, m).at("merge")?;
    }
    Ok(HistoriesPlan {
        grid,
        state,
        epsilon: epsilon("epsilon", s.epsilon)?,
        condition: match s.condition {
            Condition::Medium => DecoherenceCondition::Medium,
            Condition::Weak => DecoherenceCondition::Weak,
        },
        cap,
        merge: s.merge.clone(),
    })
}

pub struct MeasurementPlan {
    pub model: CompositeModel,
    pub epsilon: f64,
    pub read_time: Option<f64>,
}

pub fn measurement(s: &MeasurementScenario) -> Result<MeasurementPlan, LabError> {
    let h_s = hamiltonian(&s.system, "system")?;
    let dim = h_s.dim();
    let psi_s = state(&s.state, dim, "state")?;
    let mut events = Vec::new();
    for (k, e) in s.events.iter().enumerate() {
        let key = format!("events[{k}]");
        let delta = e.overlap_delta;
        if !(0.0..1.0).contains(&delta) {
            return Err(LabError::invalid(
                format!("{key}.overlap_delta"),
                format!("must lie in [0, 1), got {delta}"),
            ));
        }
        events.push(MeasurementEvent {
            time: finite(&format!("{key}.time"), e.time)?,
            decomposition: decomposition(
                &e.projectors,
                dim,
                qubit_count(&s.system),
                &format!("{key}.projectors"),
            )?,
            pointer: PointerSpec {
                register: e.register,
                overlap_delta: delta,
            },
        });
    }
    let model = CompositeModel::new(psi_s, h_s, s.registers.clone(), events).at("events")?;
    let read_time = match s.read_time {
        Some(t) => {
            finite("read_time", t)?;
            if let Some(last) = s.events.last() {
                if t < last.time {
                    return Err(LabError::invalid(
                        "read_time",
                        format!("must not precede the last event at {}, got {t}", last.time),
                    ));
                }
            }
            histories_lab_core::measurement::RecordSet::history_records(&model).at("registers")?;
            Some(t)
        }
        None => None,
    };
    Ok(MeasurementPlan {
        model,
        epsilon: epsilon("epsilon", s.epsilon)?,
        read_time,
    })
}

pub struct PathsumPlan {
    pub model: Option<LatticePathModel>,
    pub state: Option<StateVector>,
    pub epsilon: f64,
    pub random: Option<RandomModelsConfig>,
}

pub fn pathsum(s: &PathsumScenario, need_state: bool) -> Result<PathsumPlan, LabError> {
    let model = match &s.lattice {
        Some(l) => {
            let potential = l.potential.clone().unwrap_or_else(|| vec![0.0; l.sites]);
            if potential.len() != l.sites {
                return Err(LabError::invalid(
                    "lattice.potential",
                    format!("has {} entries for {} sites", potential.len(), l.sites),
                ));
            }
            finite("lattice.hopping", l.hopping)?;
            let dt = positive("lattice.dt", l.dt)?;
            nonzero("lattice.n_steps", l.n_steps)?;
            let h = build_ring_hamiltonian(l.sites, l.hopping, &potential).at("lattice")?;
            let projections = l
                .projections
                .iter()
                .map(|p| ProjectionStep {
                    step: p.step,
                    regions: p.regions.clone(),
                })
                .collect();
            Some(
                LatticePathModel::from_hamiltonian(&h, dt, l.n_steps, projections)
                    .at("lattice.projections")?,
            )
        }
        None => None,
    };
    let state = match (&s.state, &model) {
        (Some(cfg), Some(m)) => Some(state(cfg, m.sites(), "state")?),
        (Some(_), None) => return Err(LabError::invalid("state", "needs a `lattice` section")),
        (None, _) if need_state => return Err(LabError::invalid("state", "missing required section")),
        (None, _) => None,
    };
    if need_state && model.is_none() {
        return Err(LabError::invalid("lattice", "missing required section"));
    }
    if let Some(m) = &model {
        let count = m.class_count();
        let cap = histories_lab_core::histories::DEFAULT_HISTORY_CAP as u128;
        if count > cap {
            return Err(LabError::invalid(
                "lattice.projections",
                format!("{count} classes exceed the cap of {cap}"),
            ));
        }
    }
    if let Some(r) = &s.random {
        nonzero("random.count", r.count)?;
        if r.max_sites < 2 {
            return Err(LabError::invalid("random.max_sites", "must be at least 2"));
        }
        nonzero("random.max_steps", r.max_steps)?;
    }
    if !need_state && model.is_none() && s.random.is_none() {
        return Err(LabError::invalid("lattice", "give a `lattice` or a `random` section"));
    }
    Ok(PathsumPlan {
        model,
        state,
        epsilon: epsilon("epsilon", s.epsilon)?,
        random: s.random.clone(),
    })
}

pub struct WavePlan {
    pub psi0: GridWavefunction,
    pub potential: Vec<f64>,
}

fn axis_vec(key: &str, v: &[f64], dims: usize) -> Result<[f64; 2], LabError> {
    if v.len() != dims {
        return Err(LabError::invalid(
            key,
            format!("needs {dims} entries, got {}", v.len()),
        ));
    }
    let mut out = [0.0; 2];
    for (d, &x) in v.iter().enumerate() {
        out[d] = finite(key, x)?;
    }
    Ok(out)
}

pub fn wave(
    grid: &GridConfig,
    packets: &[PacketConfig],
    potential: &PotentialConfig,
) -> Result<WavePlan, LabError> {
    if grid.axes.is_empty() || grid.axes.len() > 2 {
        return Err(LabError::invalid(
            "grid.axes",
            format!("needs 1 or 2 axes, got {}", grid.axes.len()),
        ));
    }
    let mut axes = Vec::new();
    for (d, a) in grid.axes.iter().enumerate() {
        let key = format!("grid.axes[{d}]");
        if a.points < 4 {
            return Err(LabError::invalid(
                format!("{key}.points"),
                format!("must be at least 4, got {}", a.points),
            ));
        }
        let spacing = positive(&format!("{key}.spacing"), a.spacing)?;
        let lower = finite(&format!("{key}.lower"), a.lower)?;
        axes.push(Axis {
            points: a.points,
            spacing,
            origin: lower + 0.5 * spacing,
            periodic: a.periodic,
            mass: positive(&format!("{key}.mass"), a.mass)?,
        });
    }
    let g = ConfigGrid::new(axes).at("grid")?;
    let dims = g.dims();
    if packets.is_empty() {
        return Err(LabError::invalid("packets", "at least one packet is required"));
    }
    let mut built = Vec::new();
    for (k, p) in packets.iter().enumerate() {
        let key = format!("packets[{k}]");
        let width = axis_vec(&format!("{key}.width"), &p.width, dims)?;
        for w in &width[..dims] {
            positive(&format!("{key}.width"), *w)?;
        }
        let momentum = match &p.momentum {
            Some(m) => axis_vec(&format!("{key}.momentum"), m, dims)?,
            None => [0.0; 2],
        };
        finite(&format!("{key}.amplitude"), p.amplitude[0])?;
        finite(&format!("{key}.amplitude"), p.amplitude[1])?;
        built.push(GaussianPacket {
            center: axis_vec(&format!("{key}.center"), &p.center, dims)?,
            width,
            momentum,
            amplitude: C64::new(p.amplitude[0], p.amplitude[1]),
        });
    }
    let psi0 = GridWavefunction::gaussian_packets(g.clone(), &built, 0.0).at("packets")?;
    let potential = match potential {
        PotentialConfig::Zero => vec![0.0; g.len()],
        PotentialConfig::Harmonic { omega, center } => {
            let omega = axis_vec("potential.omega", omega, dims)?;
            let center = match center {
                Some(c) => axis_vec("potential.center", c, dims)?,
                None => [0.0; 2],
            };
            harmonic_potential(&g, omega, center)
        }
        PotentialConfig::Values { values } => {
            if values.len() != g.len() {
                return Err(LabError::invalid(
                    "potential.values",
                    format!("has {} entries for {} grid points", values.len(), g.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(LabError::invalid("potential.values", "must be finite"));
            }
            values.clone()
        }
    };
    Ok(WavePlan { psi0, potential })
}

/// Checks dt against the propagator's stability guard, using the half step
/// the co-evolution actually takes.
fn check_dt(wave: &WavePlan, dt: f64) -> Result<f64, LabError> {
    let dt = positive("dt", dt)?;
    GridPropagator::new(wave.psi0.grid(), &wave.potential, 0.5 * dt).at("dt")?;
    Ok(dt)
}

fn on_lattice(key: &str, t: f64, dt: f64) -> Result<(), LabError> {
    let k = (t / dt).round();
    if k < 0.0 || (k * dt - t).abs() > LATTICE_TOL * t.abs().max(1.0) {
        return Err(LabError::invalid(
            key,
            format!("{t} is not a whole number of steps of dt = {dt}"),
        ));
    }
    Ok(())
}

pub fn schedule(cfg: &ScheduleConfig, grid: &ConfigGrid) -> Result<RegionSchedule, LabError> {
    let partitions = cfg
        .partitions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let key = format!("schedule.partitions[{k}]");
            match &p.labels {
                Some(l) => SlabPartition::with_labels(p.axis, p.cuts.clone(), l.clone()),
                None => SlabPartition::new(p.axis, p.cuts.clone()),
            }
            .at(&key)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let s = RegionSchedule::new(cfg.times.clone(), partitions).at("schedule")?;
    s.validate_for(grid).at("schedule.partitions")?;
    Ok(s)
}

pub struct BohmPlan {
    pub wave: WavePlan,
    pub count: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Sorted record times, including the schedule's.
    pub record_times: Vec<f64>,
    pub schedule: Option<RegionSchedule>,
}

pub fn bohm(s: &BohmScenario) -> Result<BohmPlan, LabError> {
    let wave = wave(&s.grid, &s.packets, &s.potential)?;
    let count = nonzero("count", s.count)?;
    let dt = check_dt(&wave, s.dt)?;
    let t_final = positive("t_final", s.t_final)?;
    on_lattice("t_final", t_final, dt)?;
    let mut record_times = Vec::new();
    for (k, &t) in s.record_times.iter().enumerate() {
        let key = format!("record_times[{k}]");
        if !(t.is_finite() && t >= 0.0 && t <= t_final) {
            return Err(LabError::invalid(key, format!("must lie in [0, t_final], got {t}")));
        }
        on_lattice(&key, t, dt)?;
        record_times.push(t);
    }
    let schedule = match &s.schedule {
        Some(cfg) => {
            let sch = schedule(cfg, wave.psi0.grid())?;
            for (k, &t) in sch.times().iter().enumerate() {
                let key = format!("schedule.times[{k}]");
                if !(t >= 0.0 && t <= t_final) {
                    return Err(LabError::invalid(key, format!("must lie in [0, t_final], got {t}")));
                }
                on_lattice(&key, t, dt)?;
                record_times.push(t);
            }
            Some(sch)
        }
        None => None,
    };
    record_times.sort_by(f64::total_cmp);
    record_times.dedup_by(|a, b| (*a - *b).abs() <= LATTICE_TOL * b.abs().max(1.0));
    Ok(BohmPlan {
        wave,
        count,
        dt,
        t_final,
        record_times,
        schedule,
    })
}

pub struct ComparePlan {
    pub wave: WavePlan,
    pub count: usize,
    pub dt: f64,
    pub epsilon: f64,
    pub schedule: RegionSchedule,
}

pub fn compare_bohm_dh(s: &CompareBohmDhScenario) -> Result<ComparePlan, LabError> {
    let wave = wave(&s.grid, &s.packets, &s.potential)?;
    let cap = histories_lab_core::bohm::DH_GRID_CAP;
    if wave.psi0.grid().len() > cap {
        return Err(LabError::invalid(
            "grid.axes",
            format!("{} grid points exceed the comparison cap of {cap}", wave.psi0.grid().len()),
        ));
    }
    let count = nonzero("count", s.count)?;
    let dt = check_dt(&wave, s.dt)?;
    let schedule = schedule(&s.schedule, wave.psi0.grid())?;
    for (k, &t) in schedule.times().iter().enumerate() {
        let key = format!("schedule.times[{k}]");
        if t < 0.0 {
            return Err(LabError::invalid(key, format!("must not be negative, got {t}")));
        }
        on_lattice(&key, t, dt)?;
    }
    Ok(ComparePlan {
        wave,
        count,
        dt,
        epsilon: epsilon("epsilon", s.epsilon)?,
        schedule,
    })
}
