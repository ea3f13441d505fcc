use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::evolve::GridPropagator;
use super::grid::{ConfigGrid, GridWavefunction};
use super::guidance::{velocity_field, VelocityField};
use crate::error::{Error, Result};
use crate::hilbert::{position_decomposition, Decomposition};
use crate::histories::{enumerate_indices, HistoryIndex};

/// Relative tolerance when matching times onto the dt lattice.
const TIME_TOL: f64 = 1e-9;

/// A single particle configuration being integrated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Walker {
    /// Position inside the grid domain.
    pub pos: [f64; 2],
    /// Whole periods crossed on each periodic axis.
    pub winding: [i64; 2],
    pub exited: bool,
}

/// One recorded path. `positions[k]` is the configuration at `Ensemble::times()[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<[f64; 2]>,
    pub windings: Vec<[i64; 2]>,
    /// Left a non-periodic domain; the last in-domain position is held.
    pub exited: bool,
}

impl Trajectory {
    /// Position at record `k` with periodic windings undone.
    pub fn unwrapped(&self, grid: &ConfigGrid, k: usize) -> [f64; 2] {
        let mut p = self.positions[k];
        for (d, a) in grid.axes().iter().enumerate() {
            p[d] += self.windings[k][d] as f64 * a.length();
        }
        p
    }
}

/// Trajectories sharing one time array.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    grid: ConfigGrid,
    times: Vec<f64>,
    trajectories: Vec<Trajectory>,
    seed: u64,
}

impl Ensemble {
    pub fn grid(&self) -> &ConfigGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn excluded(&self) -> usize {
        self.trajectories.iter().filter(|t| t.exited).count()
    }

    /// Index of `t` in the time array.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| libm::fabs(s - t) <= TIME_TOL * 1f64.max(libm::fabs(t)))
    }
}

/// Draws `count` configurations i.i.d. from the cell probabilities |Ψ|²·ΔV,
/// each spread uniformly over its cell.
pub fn sample_initial(psi0: &GridWavefunction, count: usize, seed: u64) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::invalid("ensemble count must be at least 1"));
    }
    let grid = psi0.grid();
    let mut cumulative = psi0.cell_probabilities();
    let mut total = 0.0;
    for c in cumulative.iter_mut() {
        total += *c;
        *c = total;
    }
    if !(total > 0.0) {
        return Err(Error::invalid("cannot sample from a vanishing wavefunction"));
    }
    let last = cumulative.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectories = (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let node = cumulative.partition_point(|&c| c <= u).min(last);
            let mut pos = grid.node_position(node);
            for (d, a) in grid.axes().iter().enumerate() {
                pos[d] += (rng.gen::<f64>() - 0.5) * a.spacing;
            }
            Trajectory {
                positions: vec![pos],
                windings: vec![[0; 2]],
                exited: false,
            }
        })
        .collect();
    Ok(Ensemble {
        grid: grid.clone(),
        times: vec![psi0.time()],
        trajectories,
        seed,
    })
}

/// Runs a per-walker update across a batch. Implementations may reorder or
/// parallelize; each walker is touched exactly once.
pub trait Executor {
    fn for_each(&self, walkers: &mut [Walker], update: &(dyn Fn(&mut Walker) + Sync));
}

/// In-order, single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each(&self, walkers: &mut [Walker], update: &(dyn Fn(&mut Walker) + Sync)) {
        walkers.iter_mut().for_each(update);
    }
}

/// Result of a co-evolution run.
#[derive(Clone, Debug)]
pub struct IntegrationOutput {
    pub ensemble: Ensemble,
    pub final_state: GridWavefunction,
    /// Ψ at each ensemble time.
    pub snapshots: Vec<GridWavefunction>,
}

fn lattice_steps(t: f64, t0: f64, dt: f64, what: &str) -> Result<usize> {
    let k = libm::round((t - t0) / dt);
    if k < 0.0 || libm::fabs(k * dt - (t - t0)) > TIME_TOL * 1f64.max(libm::fabs(t)) {
        return Err(Error::invalid(format!(
            "{what} {t} is not t0 + k·dt for t0 = {t0}, dt = {dt}"
        )));
    }
    Ok(k as usize)
}

fn rk4_step(grid: &ConfigGrid, w: &mut Walker, h: f64, fields: [&VelocityField; 3]) {
    if w.exited {
        return;
    }
    let dims = grid.dims();
    let shift = |p: [f64; 2], k: [f64; 2], s: f64| [p[0] + s * k[0], p[1] + s * k[1]];
    let x = w.pos;
    let k1 = fields[0].at(x);
    let k2 = fields[1].at(shift(x, k1, 0.5 * h));
    let k3 = fields[1].at(shift(x, k2, 0.5 * h));
    let k4 = fields[2].at(shift(x, k3, h));
    let mut next = x;
    for d in 0..dims {
        next[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    }
    let mut winding = w.winding;
    for (d, a) in grid.axes().iter().enumerate() {
        if !next[d].is_finite() {
            w.exited = true;
            return;
        }
        if a.periodic {
            let turns = libm::floor((next[d] - a.lower()) / a.length());
            next[d] -= turns * a.length();
            winding[d] += turns as i64;
        } else if !a.contains(next[d]) {
            w.exited = true;
            return;
        }
    }
    w.pos = next;
    w.winding = winding;
}

/// Co-evolves Ψ and every trajectory from `psi0.time()` to `t_final`,
/// recording at the start, at `record_times`, and at the end.
///
/// Each RK4 step of size dt uses guidance fields at t, t + dt/2 and t + dt,
/// so Ψ advances in half steps.
pub fn integrate_ensemble_with(
    ensemble: &Ensemble,
    psi0: &GridWavefunction,
    potential: &[f64],
    dt: f64,
    t_final: f64,
    record_times: &[f64],
    executor: &dyn Executor,
) -> Result<IntegrationOutput> {
    let grid = psi0.grid();
    if ensemble.grid() != grid {
        return Err(Error::invalid("ensemble and wavefunction grids differ"));
    }
    if ensemble.count() == 0 {
        return Err(Error::invalid("ensemble is empty"));
    }
    let t0 = psi0.time();
    if ensemble.times().len() != 1 || ensemble.times()[0] != t0 {
        return Err(Error::invalid(
            "ensemble must hold only initial positions at the wavefunction time",
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
    }
    if !t_final.is_finite() || t_final < t0 {
        return Err(Error::invalid(format!(
            "t_final {t_final} must be finite and not before t0 = {t0}"
        )));
    }
    let n_steps = lattice_steps(t_final, t0, dt, "t_final")?;
    let mut record_steps = vec![0, n_steps];
    for &t in record_times {
        if !(t >= t0 && t <= t_final + TIME_TOL * 1f64.max(libm::fabs(t_final))) {
            return Err(Error::invalid(format!(
                "record time {t} is outside [{t0}, {t_final}]"
            )));
        }
        record_steps.push(lattice_steps(t, t0, dt, "record time")?);
    }
    record_steps.sort_unstable();
    record_steps.dedup();

    let half = GridPropagator::new(grid, potential, 0.5 * dt)?;
    let mut walkers: Vec<Walker> = ensemble
        .trajectories()
        .iter()
        .map(|t| Walker {
            pos: t.positions[0],
            winding: t.windings[0],
            exited: t.exited,
        })
        .collect();
    let mut trajectories: Vec<Trajectory> = walkers
        .iter()
        .map(|w| Trajectory {
            positions: Vec::with_capacity(record_steps.len()),
            windings: Vec::with_capacity(record_steps.len()),
            exited: w.exited,
        })
        .collect();
    let mut times = Vec::with_capacity(record_steps.len());
    let mut snapshots = Vec::with_capacity(record_steps.len());
    let mut next_record = 0;

    let mut psi = psi0.clone();
    let mut field_now = velocity_field(&psi);
    for step in 0..=n_steps {
        if next_record < record_steps.len() && record_steps[next_record] == step {
            times.push(t0 + step as f64 * dt);
            snapshots.push(psi.clone());
            for (traj, w) in trajectories.iter_mut().zip(&walkers) {
                traj.positions.push(w.pos);
                traj.windings.push(w.winding);
            }
            next_record += 1;
        }
        if step == n_steps {
            break;
        }
        half.step(&mut psi)?;
        let field_mid = velocity_field(&psi);
        half.step(&mut psi)?;
        let field_next = velocity_field(&psi);
        {
            let fields = [&field_now, &field_mid, &field_next];
            let update = |w: &mut Walker| rk4_step(grid, w, dt, fields);
            executor.for_each(&mut walkers, &update);
        }
        field_now = field_next;
    }
    for (traj, w) in trajectories.iter_mut().zip(&walkers) {
        traj.exited = w.exited;
    }
    Ok(IntegrationOutput {
        ensemble: Ensemble {
            grid: grid.clone(),
            times,
            trajectories,
            seed: ensemble.seed(),
        },
        final_state: psi,
        snapshots,
    })
}

/// Sequential co-evolution recording only the start and `t_final`.
pub fn integrate_ensemble(
    ensemble: &Ensemble,
    psi0: &GridWavefunction,
    potential: &[f64],
    dt: f64,
    t_final: f64,
) -> Result<Ensemble> {
    integrate_ensemble_with(ensemble, psi0, potential, dt, t_final, &[], &Sequential)
        .map(|o| o.ensemble)
}

/// Splits the domain along one axis at increasing cut coordinates. A node
/// belongs to range r when exactly r cuts lie at or below its coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabPartition {
    axis: usize,
    cuts: Vec<f64>,
    labels: Vec<String>,
}

impl SlabPartition {
    pub fn new(axis: usize, cuts: Vec<f64>) -> Result<Self> {
        let labels = (0..=cuts.len()).map(|r| format!("{r}")).collect();
        Self::with_labels(axis, cuts, labels)
    }

    pub fn with_labels(axis: usize, cuts: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if axis > 1 {
            return Err(Error::invalid(format!("partition axis {axis} must be 0 or 1")));
        }
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("partition cuts must be finite"));
        }
        if cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("partition cuts must be strictly increasing"));
        }
        if labels.len() != cuts.len() + 1 {
            return Err(Error::invalid(format!(
                "{} labels for {} ranges",
                labels.len(),
                cuts.len() + 1
            )));
        }
        Ok(Self { axis, cuts, labels })
    }

    /// The whole domain as one range.
    pub fn trivial() -> Self {
        Self {
            axis: 0,
            cuts: Vec::new(),
            labels: vec![String::from("all")],
        }
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range_of(&self, coordinate: f64) -> usize {
        self.cuts.partition_point(|&c| c <= coordinate)
    }

    pub fn range_of_node(&self, grid: &ConfigGrid, node: usize) -> usize {
        self.range_of(grid.node_position(node)[self.axis])
    }

    /// Node groups per range.
    pub fn groups(&self, grid: &ConfigGrid) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.len()];
        for node in 0..grid.len() {
            groups[self.range_of_node(grid, node)].push(node);
        }
        groups
    }

    /// Diagonal projectors on the node basis.
    pub fn decomposition(&self, grid: &ConfigGrid) -> Result<Decomposition> {
        position_decomposition(grid.len(), &self.groups(grid))?.with_labels(self.labels.clone())
    }

    fn validate_for(&self, grid: &ConfigGrid) -> Result<()> {
        if self.axis >= grid.dims() {
            return Err(Error::invalid(format!(
                "partition axis {} exceeds grid dimension {}",
                self.axis,
                grid.dims()
            )));
        }
        if let Some(r) = self.groups(grid).iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!(
                "range '{}' contains no grid nodes",
                self.labels[r]
            )));
        }
        Ok(())
    }
}

/// Increasing times with one partition each.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSchedule {
    times: Vec<f64>,
    partitions: Vec<SlabPartition>,
}

impl RegionSchedule {
    pub fn new(times: Vec<f64>, partitions: Vec<SlabPartition>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("a schedule needs at least one time"));
        }
        if times.len() != partitions.len() {
            return Err(Error::invalid(format!(
                "{} times but {} partitions",
                times.len(),
                partitions.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("schedule times must be finite"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("schedule times must be strictly increasing"));
        }
        Ok(Self { times, partitions })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn partitions(&self) -> &[SlabPartition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Every range must own at least one node of `grid`.
    pub fn validate_for(&self, grid: &ConfigGrid) -> Result<()> {
        self.partitions.iter().try_for_each(|p| p.validate_for(grid))
    }

    pub fn history_labels(&self, index: &HistoryIndex) -> String {
        let parts: Vec<&str> = index
            .alternatives()
            .iter()
            .zip(&self.partitions)
            .map(|(&a, p)| p.labels[a].as_str())
            .collect();
        parts.join("-")
    }
}

/// Monte Carlo Bohm history probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct BohmHistoryTable {
    pub histories: Vec<HistoryIndex>,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub used: usize,
    pub excluded: usize,
}

/// Fraction of non-excluded trajectories whose recorded positions fall in
/// each scheduled sequence of ranges.
pub fn bohm_history_probability(
    ensemble: &Ensemble,
    schedule: &RegionSchedule,
) -> Result<BohmHistoryTable> {
    if ensemble.count() == 0 {
        return Err(Error::invalid("ensemble is empty"));
    }
    let grid = ensemble.grid();
    schedule.validate_for(grid)?;
    let slots = schedule
        .times()
        .iter()
        .map(|&t| {
            ensemble.time_index(t).ok_or_else(|| {
                Error::invalid(format!("schedule time {t} is not an ensemble time"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = schedule.partitions().iter().map(SlabPartition::len).collect();
    let histories = enumerate_indices(&sizes);
    let mut counts = vec![0u64; histories.len()];
    let mut used = 0usize;
    for traj in ensemble.trajectories().iter().filter(|t| !t.exited) {
        let mut flat = 0usize;
        for ((p, &slot), &size) in schedule.partitions().iter().zip(&slots).zip(&sizes) {
            let node = grid.nearest_node(traj.positions[slot]);
            flat = flat * size + p.range_of_node(grid, node);
        }
        counts[flat] += 1;
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("every trajectory left the domain"));
    }
    let k = used as f64;
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / k).collect();
    let standard_errors = probabilities
        .iter()
        .map(|p| libm::sqrt(p * (1.0 - p) / k))
        .collect();
    let labels = histories.iter().map(|h| schedule.history_labels(h)).collect();
    Ok(BohmHistoryTable {
        histories,
        labels,
        counts,
        probabilities,
        standard_errors,
        used,
        excluded: ensemble.count() - used,
    })
}

/// Pearson statistic of recorded cell occupancies against |Ψ|²·ΔV, with
/// consecutive cells pooled until each bin expects at least five counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chi2 {
    pub statistic: f64,
    pub dof: usize,
    pub bins: usize,
}

pub fn equivariance_chi2(ensemble: &Ensemble, slot: usize, psi: &GridWavefunction) -> Result<Chi2> {
    let grid = ensemble.grid();
    if psi.grid() != grid {
        return Err(Error::invalid("wavefunction grid differs from ensemble grid"));
    }
    if slot >= ensemble.times().len() {
        return Err(Error::invalid(format!("record index {slot} out of range")));
    }
    let mut observed = vec![0u64; grid.len()];
    let mut used = 0u64;
    for t in ensemble.trajectories().iter().filter(|t| !t.exited) {
        observed[grid.nearest_node(t.positions[slot])] += 1;
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("no trajectories to test"));
    }
    let cells = psi.cell_probabilities();
    let total: f64 = cells.iter().sum();
    let scale = used as f64 / total;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut e_acc, mut o_acc) = (0.0, 0.0);
    for (p, &o) in cells.iter().zip(&observed) {
        e_acc += p * scale;
        o_acc += o as f64;
        if e_acc >= 5.0 {
            bins.push((e_acc, o_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += e_acc;
                last.1 += o_acc;
            }
            None => bins.push((e_acc, o_acc)),
        }
    }
    let statistic = bins.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    Ok(Chi2 {
        statistic,
        dof: bins.len().saturating_sub(1),
        bins: bins.len(),
    })
}

/// Inversions of trajectory order in 1D.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderingCheck {
    pub violations: u64,
    pub pairs: u64,
}

/// Counts pairs whose unwrapped order at record `slot` differs from their
/// initial order.
pub fn ordering_violations(ensemble: &Ensemble, slot: usize) -> Result<OrderingCheck> {
    let grid = ensemble.grid();
    if grid.dims() != 1 {
        return Err(Error::invalid("ordering is defined for 1D grids only"));
    }
    if slot >= ensemble.times().len() {
        return Err(Error::invalid(format!("record index {slot} out of range")));
    }
    let mut pairs: Vec<(f64, f64)> = ensemble
        .trajectories()
        .iter()
        .filter(|t| !t.exited)
        .map(|t| (t.unwrapped(grid, 0)[0], t.unwrapped(grid, slot)[0]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut later: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = later.len() as u64;
    let violations = count_inversions(&mut later);
    Ok(OrderingCheck {
        violations,
        pairs: n * n.saturating_sub(1) / 2,
    })
}

fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}
