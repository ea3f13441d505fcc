use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ensemble::{
    bohm_history_probability, integrate_ensemble_with, sample_initial, BohmHistoryTable, Executor,
    RegionSchedule,
};
use super::grid::{grid_hamiltonian, GridWavefunction};
use crate::error::{Error, Result};
use crate::histories::{
    check_decoherence, decoherence_matrix, DecoherenceReport, HistoryGrid, HistoryIndex,
};

/// Largest grid the dense decoherent-histories side accepts.
pub const DH_GRID_CAP: usize = 1024;

/// |z| at or below this counts as agreement.
pub const AGREEMENT_Z: f64 = 3.0;

/// |z| above this counts as a significant disagreement.
pub const DISAGREEMENT_Z: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct BohmDhScenario {
    pub psi0: GridWavefunction,
    pub potential: Vec<f64>,
    pub schedule: RegionSchedule,
    pub count: usize,
    pub seed: u64,
    pub dt: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub history: HistoryIndex,
    pub label: String,
    pub p_bm: f64,
    pub p_dh: f64,
    pub standard_error: f64,
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct BohmDhComparison {
    pub rows: Vec<ComparisonRow>,
    pub bohm: BohmHistoryTable,
    pub report: DecoherenceReport,
    pub max_abs_z: f64,
    /// Every class within 3 standard errors.
    pub agreement: bool,
    /// Some class beyond 5 standard errors.
    pub significant_disagreement: bool,
}

/// Monte Carlo Bohm frequencies against dense decoherent-histories
/// probabilities for the same ranges on the node basis.
///
/// The standard error of a class is √(max(p_bm(1−p_bm), p_dh(1−p_dh))/K),
/// floored at 1/K, so that classes the ensemble never visits still get a
/// finite z-score.
pub fn compare_bohm_dh(
    scenario: &BohmDhScenario,
    executor: &dyn Executor,
) -> Result<BohmDhComparison> {
    let psi0 = &scenario.psi0;
    let grid = psi0.grid();
    if grid.len() > DH_GRID_CAP {
        return Err(Error::CapExceeded {
            what: "grid points for the dense comparison",
            count: grid.len() as u128,
            cap: DH_GRID_CAP as u128,
        });
    }
    if !(scenario.epsilon.is_finite() && scenario.epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let schedule = &scenario.schedule;
    schedule.validate_for(grid)?;
    let t0 = psi0.time();
    if let Some(&t) = schedule.times().iter().find(|&&t| t < t0) {
        return Err(Error::invalid(format!(
            "schedule time {t} precedes the initial time {t0}"
        )));
    }
    let t_final = *schedule.times().last().unwrap_or(&t0);

    let ensemble = sample_initial(psi0, scenario.count, scenario.seed)?;
    let run = integrate_ensemble_with(
        &ensemble,
        psi0,
        &scenario.potential,
        scenario.dt,
        t_final,
        schedule.times(),
        executor,
    )?;
    let bohm = bohm_history_probability(&run.ensemble, schedule)?;

    let h = grid_hamiltonian(grid, &scenario.potential)?;
    let decompositions = schedule
        .partitions()
        .iter()
        .map(|p| p.decomposition(grid))
        .collect::<Result<Vec<_>>>()?;
    let times = schedule.times().iter().map(|t| t - t0).collect();
    let dh_grid = HistoryGrid::new(times, decompositions, h)?;
    let state = psi0.to_state_vector();
    let matrix = decoherence_matrix(&dh_grid, &state, usize::MAX)?;
    let report = check_decoherence(&matrix, scenario.epsilon);

    let k = bohm.used as f64;
    let rows: Vec<ComparisonRow> = bohm
        .histories
        .iter()
        .zip(&bohm.labels)
        .zip(&bohm.probabilities)
        .zip(&report.probabilities)
        .map(|(((history, label), &p_bm), &p_dh)| {
            let var = (p_bm * (1.0 - p_bm)).max(p_dh * (1.0 - p_dh)).max(0.0);
            let standard_error = libm::sqrt(var / k).max(1.0 / k);
            ComparisonRow {
                history: history.clone(),
                label: label.clone(),
                p_bm,
                p_dh,
                standard_error,
                z: (p_bm - p_dh) / standard_error,
            }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| libm::fabs(r.z)).fold(0.0, f64::max);
    Ok(BohmDhComparison {
        agreement: max_abs_z <= AGREEMENT_Z,
        significant_disagreement: max_abs_z > DISAGREEMENT_Z,
        max_abs_z,
        rows,
        bohm,
        report,
    })
}
