//! Dispatch from a validated scenario to the core, and result assembly.

use std::path::{Path, PathBuf};

use histories_lab_core::bohm::{
    self, equivariance_chi2, integrate_ensemble_with, ordering_violations, sample_initial,
    BohmDhScenario,
};
use histories_lab_core::histories::{
    additivity_check, check_decoherence_with, coarse_grain, decoherence_matrix, DecoherenceReport,
};
use histories_lab_core::measurement::{
    closed_system_grid, closed_system_probability, compare_copenhagen, record_probabilities,
    RecordSet,
};
use histories_lab_core::pathsum::{
    completeness_defect, pathsum_probabilities, random_model, verify_identity, LatticePathModel,
    IDENTITY_TOL,
};
use serde_json::{json, Value};

use crate::build;
use crate::error::{Context, LabError};
use crate::exec::{thread_pool, RayonExecutor};
use crate::output::{json_bytes, Artifacts, Cell, Table, SCHEMA_VERSION};
use crate::scenario::*;
use crate::stats::chi2_p_value;

/// Probability rows must sum to one within this.
pub const SUM_TOL: f64 = 1e-9;

/// What a run computed, before anything is written.
#[derive(Clone, Debug)]
pub struct Outcome {
    /// Main table, written to `<name>.csv`.
    pub table: Table,
    /// Further tables, written to `<name>_<suffix>.csv`.
    pub extra: Vec<(String, Table)>,
    pub diagnostics: Value,
}

/// Files written by a run plus the JSON summary.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Validates every section of the scenario without running it.
pub fn validate(scenario: &Scenario) -> Result<(), LabError> {
    match scenario {
        Scenario::Histories(s) => build::histories(s).map(drop),
        Scenario::Measurement(s) | Scenario::CompareCopenhagen(s) => {
            build::measurement(s).map(drop)
        }
        Scenario::Bohm(s) => build::bohm(s).map(drop),
        Scenario::Pathsum(s) => build::pathsum(s, true).map(drop),
        Scenario::VerifyPathsum(s) => build::pathsum(s, false).map(drop),
        Scenario::CompareBohmDh(s) => build::compare_bohm_dh(s).map(drop),
    }
}

/// Runs the scenario on a rayon pool sized from the environment.
pub fn compute(scenario: &Scenario) -> Result<Outcome, LabError> {
    let pool = thread_pool()?;
    pool.install(|| match scenario {
        Scenario::Histories(s) => histories(s),
        Scenario::Measurement(s) => measurement(s),
        Scenario::CompareCopenhagen(s) => copenhagen(s),
        Scenario::Bohm(s) => bohm_run(s),
        Scenario::Pathsum(s) => pathsum(s),
        Scenario::VerifyPathsum(s) => verify_pathsum(s),
        Scenario::CompareBohmDh(s) => compare(s),
    })
}

/// The JSON summary of an outcome.
pub fn summary(scenario: &Scenario, outcome: &Outcome, files: &[String]) -> Value {
    let tables: serde_json::Map<String, Value> = outcome
        .extra
        .iter()
        .map(|(k, t)| (k.clone(), t.to_json()))
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": scenario.kind().as_str(),
        "scenario": serde_json::to_value(scenario).expect("scenarios always serialize"),
        "diagnostics": outcome.diagnostics,
        "rows": outcome.table.to_json(),
        "tables": tables,
        "files": files,
    })
}

/// Computes, then writes `<name>.csv`, any extra tables and `<name>.json`
/// into `out_dir`. Nothing is left behind on failure.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport, LabError> {
    validate(scenario)?;
    let outcome = compute(scenario)?;
    let name = scenario.name();
    let mut artifacts = Artifacts::default();
    artifacts.add(format!("{name}.csv"), outcome.table.to_csv()?);
    for (suffix, table) in &outcome.extra {
        artifacts.add(format!("{name}_{suffix}.csv"), table.to_csv()?);
    }
    let summary = summary(scenario, &outcome, &artifacts.names());
    artifacts.add(format!("{name}.json"), json_bytes(&summary));
    let files = artifacts.write_all(out_dir)?;
    Ok(RunReport { files, summary })
}

fn check_sum(what: &str, probabilities: impl IntoIterator<Item = f64>) -> Result<f64, LabError> {
    let total: f64 = probabilities.into_iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(LabError::Numerical(format!(
            "{what} sum to {total:.17e}, not 1 within {SUM_TOL:e}"
        )));
    }
    Ok(total)
}

fn report_diagnostics(r: &DecoherenceReport) -> Value {
    json!({
        "decoherent": r.decoherent,
        "epsilon": r.epsilon,
        "max_normalized_offdiag": r.max_normalized_offdiag,
        "additivity_warning": r.additivity_warning,
        "probability_sum": r.probability_sum(),
        "hermiticity_defect": r.hermiticity_defect(),
        "min_eigenvalue": r.min_eigenvalue(),
    })
}

fn histories(s: &HistoriesScenario) -> Result<Outcome, LabError> {
    let plan = build::histories(s)?;
    let matrix = decoherence_matrix(&plan.grid, &plan.state, plan.cap).at("alternatives")?;
    let report = check_decoherence_with(&matrix, plan.epsilon, plan.condition);
    check_sum("history probabilities", report.probabilities.iter().copied())?;
    let mut table = Table::new(vec!["history", "label", "probability"]);
    for (h, &p) in report.histories.iter().zip(&report.probabilities) {
        table.push(vec![
            index_text(h.alternatives()).into(),
            plan.grid.label(h).into(),
            p.into(),
        ]);
    }
    let mut diagnostics = report_diagnostics(&report);
    diagnostics["condition"] = json!(match plan.condition {
        histories_lab_core::histories::DecoherenceCondition::Medium => "medium",
        histories_lab_core::histories::DecoherenceCondition::Weak => "weak",
    });
    let mut extra = Vec::new();
    if let Some(merge) = &plan.merge {
        let coarse_grid = coarse_grain(&plan.grid, merge).at("merge")?;
        let coarse_matrix = decoherence_matrix(&coarse_grid, &plan.state, plan.cap).at("merge")?;
        let coarse = check_decoherence_with(&coarse_matrix, plan.epsilon, plan.condition);
        let entries = additivity_check(&report, &coarse, merge).at("merge")?;
        let mut t = Table::new(vec![
            "history",
            "label",
            "probability",
            "summed_fine",
            "defect",
            "interference",
        ]);
        for e in &entries {
            t.push(vec![
                index_text(e.coarse.alternatives()).into(),
                coarse_grid.label(&e.coarse).into(),
                e.coarse_probability.into(),
                e.summed_fine.into(),
                e.defect.into(),
                e.interference.into(),
            ]);
        }
        diagnostics["coarse"] = json!({
            "decoherent": coarse.decoherent,
            "max_normalized_offdiag": coarse.max_normalized_offdiag,
            "max_defect": entries.iter().map(|e| e.defect).fold(0.0, f64::max),
            "within_bound": entries.iter().all(|e| e.within_bound()),
        });
        extra.push(("coarse".to_string(), t));
    }
    Ok(Outcome {
        table,
        extra,
        diagnostics,
    })
}

fn index_text(alternatives: &[usize]) -> String {
    alternatives
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn measurement(s: &MeasurementScenario) -> Result<Outcome, LabError> {
    let plan = build::measurement(s)?;
    let grid = closed_system_grid(&plan.model).at("events")?;
    let report = closed_system_probability(&plan.model, plan.epsilon).at("events")?;
    check_sum("history probabilities", report.probabilities.iter().copied())?;
    let additive = report.additive_probabilities();
    let records = match plan.read_time {
        Some(t) => {
            let set = RecordSet::history_records(&plan.model).at("registers")?;
            Some(record_probabilities(&plan.model, &set, t).at("read_time")?)
        }
        None => None,
    };
    let mut columns = vec!["history", "label", "probability", "p_closed"];
    if records.is_some() {
        columns.push("p_record");
    }
    let mut table = Table::new(columns);
    for (k, h) in report.histories.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            index_text(h.alternatives()).into(),
            grid.label(h).into(),
            report.probabilities[k].into(),
            additive[k].into(),
        ];
        if let Some(r) = &records {
            row.push(r[k].into());
        }
        table.push(row);
    }
    let mut diagnostics = report_diagnostics(&report);
    if let Some(r) = &records {
        let gap = r
            .iter()
            .zip(&report.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        diagnostics["max_record_history_diff"] = json!(gap);
    }
    Ok(Outcome {
        table,
        extra: Vec::new(),
        diagnostics,
    })
}

fn copenhagen(s: &MeasurementScenario) -> Result<Outcome, LabError> {
    let plan = build::measurement(s)?;
    let grid = closed_system_grid(&plan.model).at("events")?;
    let c = compare_copenhagen(&plan.model, plan.epsilon).at("events")?;
    check_sum("closed-system probabilities", c.p_closed.iter().copied())?;
    check_sum("Copenhagen probabilities", c.p_copenhagen.iter().copied())?;
    let mut table = Table::new(vec![
        "history",
        "label",
        "p_copenhagen",
        "p_closed",
        "p_diagonal",
        "diff",
    ]);
    for (k, h) in c.histories.iter().enumerate() {
        table.push(vec![
            index_text(h.alternatives()).into(),
            grid.label(h).into(),
            c.p_copenhagen[k].into(),
            c.p_closed[k].into(),
            c.p_diagonal[k].into(),
            c.diffs[k].into(),
        ]);
    }
    Ok(Outcome {
        table,
        extra: Vec::new(),
        diagnostics: json!({
            "max_abs_diff": c.max_abs_diff,
            "max_abs_diagonal_diff": c.max_abs_diagonal_diff,
            "decoherent": c.decoherent,
            "max_normalized_offdiag": c.max_normalized_offdiag,
            "epsilon": plan.epsilon,
        }),
    })
}

fn class_text(labels: &[usize]) -> String {
    if labels.is_empty() {
        return "all".to_string();
    }
    labels
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

fn pathsum(s: &PathsumScenario) -> Result<Outcome, LabError> {
    let plan = build::pathsum(s, true)?;
    let (model, psi0) = match (&plan.model, &plan.state) {
        (Some(m), Some(p)) => (m, p),
        _ => return Err(LabError::invalid("lattice", "missing required section")),
    };
    let report = pathsum_probabilities(model, psi0, plan.epsilon).at("lattice")?;
    check_sum("class probabilities", report.probabilities.iter().copied())?;
    let additive = report.additive_probabilities();
    let mut table = Table::new(vec!["class", "label", "probability", "p_additive"]);
    for (k, h) in report.histories.iter().enumerate() {
        table.push(vec![
            index_text(h.alternatives()).into(),
            class_text(h.alternatives()).into(),
            report.probabilities[k].into(),
            additive[k].into(),
        ]);
    }
    let mut diagnostics = report_diagnostics(&report);
    diagnostics["completeness_defect"] = json!(completeness_defect(model).at("lattice")?);
    Ok(Outcome {
        table,
        extra: Vec::new(),
        diagnostics,
    })
}

/// Seed of the `i`-th random model drawn from the scenario seed.
pub fn model_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

fn verify_model(
    table: &mut Table,
    source: String,
    model: &LatticePathModel,
) -> Result<(f64, f64), LabError> {
    let mut worst = 0.0f64;
    for cls in model.classes() {
        worst = worst.max(verify_identity(model, &cls).at(&source)?.max_abs_diff);
    }
    let completeness = completeness_defect(model).at(&source)?;
    table.push(vec![
        source.into(),
        model.sites().into(),
        model.n_steps().into(),
        (model.class_count() as u64).into(),
        worst.into(),
        completeness.into(),
    ]);
    Ok((worst, completeness))
}

fn verify_pathsum(s: &PathsumScenario) -> Result<Outcome, LabError> {
    let plan = build::pathsum(s, false)?;
    let mut table = Table::new(vec![
        "model",
        "sites",
        "n_steps",
        "classes",
        "max_abs_diff",
        "completeness_defect",
    ]);
    let mut worst = (0.0f64, 0.0f64);
    let mut track = |(a, b): (f64, f64)| {
        worst.0 = worst.0.max(a);
        worst.1 = worst.1.max(b);
    };
    if let Some(m) = &plan.model {
        track(verify_model(&mut table, "lattice".into(), m)?);
    }
    if let Some(r) = &plan.random {
        for i in 0..r.count {
            let seed = model_seed(s.seed, i);
            let m = random_model(seed, r.max_sites, r.max_steps).at("random")?;
            track(verify_model(&mut table, format!("random-{seed}"), &m)?);
        }
    }
    if worst.0 > IDENTITY_TOL || worst.1 > IDENTITY_TOL {
        return Err(LabError::Numerical(format!(
            "path-sum identity off by {:.3e}, completeness off by {:.3e} (tolerance {IDENTITY_TOL:e})",
            worst.0, worst.1
        )));
    }
    Ok(Outcome {
        table,
        extra: Vec::new(),
        diagnostics: json!({
            "max_abs_diff": worst.0,
            "max_completeness_defect": worst.1,
            "tolerance": IDENTITY_TOL,
            "pass": true,
        }),
    })
}

fn bohm_run(s: &BohmScenario) -> Result<Outcome, LabError> {
    let plan = build::bohm(s)?;
    let psi0 = &plan.wave.psi0;
    let ensemble = sample_initial(psi0, plan.count, s.seed).at("count")?;
    let run = integrate_ensemble_with(
        &ensemble,
        psi0,
        &plan.wave.potential,
        plan.dt,
        plan.t_final,
        &plan.record_times,
        &RayonExecutor,
    )
    .at("dt")?;
    let ens = &run.ensemble;
    let grid = ens.grid();
    let dims = grid.dims();

    let mut table = Table::new(vec![
        "time",
        "chi2",
        "dof",
        "p_value",
        "inversions",
        "pairs",
        "norm",
    ]);
    for (slot, (t, psi)) in ens.times().iter().zip(&run.snapshots).enumerate() {
        let chi2 = equivariance_chi2(ens, slot, psi).at("count")?;
        let (inv, pairs) = if dims == 1 {
            let o = ordering_violations(ens, slot).at("count")?;
            (Cell::from(o.violations), Cell::from(o.pairs))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        table.push(vec![
            (*t).into(),
            chi2.statistic.into(),
            chi2.dof.into(),
            chi2_p_value(chi2.statistic, chi2.dof).into(),
            inv,
            pairs,
            psi.norm_sqr().into(),
        ]);
    }

    let mut extra = Vec::new();
    let mut columns = vec!["trajectory_id", "time", "x"];
    if dims == 2 {
        columns.push("y");
    }
    columns.push("exited");
    let mut traj = Table::new(columns);
    for (id, tr) in ens.trajectories().iter().take(s.dump_trajectories).enumerate() {
        for (k, &t) in ens.times().iter().enumerate() {
            let p = tr.unwrapped(grid, k);
            let mut row: Vec<Cell> = vec![id.into(), t.into(), p[0].into()];
            if dims == 2 {
                row.push(p[1].into());
            }
            row.push((tr.exited as u64).into());
            traj.push(row);
        }
    }
    extra.push(("trajectories".to_string(), traj));

    let mut diagnostics = json!({
        "count": ens.count(),
        "excluded": ens.excluded(),
        "seed": ens.seed(),
        "times": ens.times(),
    });
    if let Some(schedule) = &plan.schedule {
        let table = bohm::bohm_history_probability(ens, schedule).at("schedule")?;
        check_sum("Bohm history frequencies", table.probabilities.iter().copied())?;
        let mut t = Table::new(vec![
            "history",
            "label",
            "count",
            "probability",
            "standard_error",
        ]);
        for k in 0..table.histories.len() {
            t.push(vec![
                index_text(table.histories[k].alternatives()).into(),
                table.labels[k].clone().into(),
                table.counts[k].into(),
                table.probabilities[k].into(),
                table.standard_errors[k].into(),
            ]);
        }
        diagnostics["histories_used"] = json!(table.used);
        extra.push(("histories".to_string(), t));
    }
    if s.snapshots {
        for (k, psi) in run.snapshots.iter().enumerate() {
            let mut t = Table::new(vec!["node", "re", "im"]);
            for (node, v) in psi.values().iter().enumerate() {
                t.push(vec![node.into(), v.re.into(), v.im.into()]);
            }
            extra.push((format!("psi_{k}"), t));
        }
    }
    Ok(Outcome {
        table,
        extra,
        diagnostics,
    })
}

fn compare(s: &CompareBohmDhScenario) -> Result<Outcome, LabError> {
    let plan = build::compare_bohm_dh(s)?;
    let scenario = BohmDhScenario {
        psi0: plan.wave.psi0,
        potential: plan.wave.potential,
        schedule: plan.schedule,
        count: plan.count,
        seed: s.seed,
        dt: plan.dt,
        epsilon: plan.epsilon,
    };
    let c = bohm::compare_bohm_dh(&scenario, &RayonExecutor).at("schedule")?;
    check_sum("Bohm history frequencies", c.rows.iter().map(|r| r.p_bm))?;
    check_sum("decoherent-histories probabilities", c.rows.iter().map(|r| r.p_dh))?;
    let mut table = Table::new(vec![
        "history",
        "label",
        "p_bm",
        "p_dh",
        "standard_error",
        "z",
    ]);
    for r in &c.rows {
        table.push(vec![
            index_text(r.history.alternatives()).into(),
            r.label.clone().into(),
            r.p_bm.into(),
            r.p_dh.into(),
            r.standard_error.into(),
            r.z.into(),
        ]);
    }
    let mut diagnostics = report_diagnostics(&c.report);
    diagnostics["agreement"] = json!(c.agreement);
    diagnostics["significant_disagreement"] = json!(c.significant_disagreement);
    diagnostics["max_abs_z"] = json!(c.max_abs_z);
    diagnostics["agreement_z"] = json!(bohm::AGREEMENT_Z);
    diagnostics["disagreement_z"] = json!(bohm::DISAGREEMENT_Z);
    diagnostics["trajectories_used"] = json!(c.bohm.used);
    diagnostics["excluded"] = json!(c.bohm.excluded);
    Ok(Outcome {
        table,
        extra: Vec::new(),
        diagnostics,
    })
}
