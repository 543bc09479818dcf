//! Figure data: loss against budget per encoder, global against sorting
//! objective, and the per-threshold fidelity series (Good-Turing estimates,
//! degrees and color budgets, uniform-coloring collision curves).
//!
//! The loss grid runs the encode and train stages for every (encoder,
//! budget) cell, so test labels are only ever read inside the train stage.

use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::json;

use chromatic::encoders::{
    collect_color_stats, sorting_heuristic_compress, submodular_compress, EncodeError, EncoderKind,
};
use chromatic::experiment::{ExperimentError, Prepared};
use chromatic::fidelity::{required_colors, BudgetInputs, FidelityReport};

use crate::artifact::Stage;
use crate::pipeline::{Outcome, Pipeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub encoder: EncoderKind,
    pub label: String,
    pub budget: usize,
    pub double_dip: bool,
    /// `ok`, or `infeasible` when the budget is below the color count.
    pub status: String,
    pub output_dim: Option<usize>,
    pub train_examples: Option<usize>,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub budget: usize,
    pub colors: u32,
    /// Mutual information in nats; empty when the budget is below the color count.
    pub global_objective: Option<f64>,
    pub sorting_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodTuringRow {
    pub k: u32,
    pub edges: usize,
    pub good_turing: f64,
    pub new_edges: f64,
    pub good_turing_filtered: f64,
    pub new_edges_filtered: f64,
    pub unseen_feature_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub k: u32,
    pub delta_k: usize,
    pub held_out: usize,
    pub delta_f: usize,
    /// Color budget without filtering.
    pub m: f64,
    pub m_f: f64,
    pub greedy_colors: u32,
    pub greedy_cc: f64,
    pub uniform_colors: Option<u32>,
    pub uniform_cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub k: u32,
    pub held_out: usize,
    pub colors: u32,
    pub avg_cc: f64,
    pub greedy_colors: u32,
    pub greedy_cc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub loss: Vec<LossRow>,
    pub objective: Vec<ObjectiveRow>,
    pub good_turing: Vec<GoodTuringRow>,
    pub color_budgets: Vec<BudgetRow>,
    pub uniform_cc: Vec<CurveRow>,
}

pub const SERIES: [&str; 5] = [
    "loss_vs_budget.csv",
    "objective_vs_budget.csv",
    "good_turing.csv",
    "color_budgets.csv",
    "uniform_cc.csv",
];

pub fn run(pl: &Pipeline, force: bool) -> Result<Outcome> {
    // fail on missing upstream artifacts before loading data
    let fidelity = pl.load_fidelity()?;
    let p = pl.prepared(true)?;
    run_with(pl, &p, &fidelity, force)
}

pub fn run_prepared(pl: &Pipeline, p: &Prepared, force: bool) -> Result<Outcome> {
    let fidelity = pl.load_fidelity()?;
    run_with(pl, p, &fidelity, force)
}

fn run_with(pl: &Pipeline, p: &Prepared, fidelity: &FidelityReport, force: bool) -> Result<Outcome> {
    let digest = pl.report_digest()?;
    let outcome = pl.produce(Stage::Report, &pl.cfg, digest.clone(), pl.report_inputs()?, force, || {
        let report = Report {
            loss: loss_rows(pl, p)?,
            objective: objective_rows(pl, p)?,
            good_turing: good_turing_rows(fidelity),
            color_budgets: budget_rows(fidelity)?,
            uniform_cc: curve_rows(fidelity),
        };
        let info = json!({"series": SERIES, "loss_rows": report.loss.len()});
        Ok((info, serde_json::to_vec_pretty(&report)?))
    })?;
    let (_, payload) = pl.store.read(Stage::Report, &digest)?;
    let report: Report = serde_json::from_slice(&payload)?;
    write_series(&pl.store.dir(Stage::Report, &digest), &report)?;
    Ok(outcome)
}

fn budget_too_small(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<ExperimentError>(),
        Some(ExperimentError::Encode(EncodeError::BudgetTooSmall { .. }))
    )
}

fn loss_rows(pl: &Pipeline, p: &Prepared) -> Result<Vec<LossRow>> {
    let r = &pl.cfg.report;
    let mut cells: Vec<(EncoderKind, usize, bool)> = r
        .encoders
        .iter()
        .flat_map(|&kind| r.budgets.iter().map(move |&b| (kind, b, false)))
        .collect();
    if r.double_dip {
        cells.extend(r.budgets.iter().map(|&b| (EncoderKind::Clsm, b, true)));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (kind, budget, double_dip) in cells {
        let mut cfg = pl.cfg.clone();
        cfg.encoder.kind = kind;
        cfg.encoder.budget = budget;
        cfg.encoder.double_dip = double_dip;
        let mut row = LossRow {
            encoder: kind,
            label: kind.label().into(),
            budget,
            double_dip,
            status: "ok".into(),
            output_dim: None,
            train_examples: None,
            train_loss: None,
            test_loss: None,
            test_accuracy: None,
        };
        match pl.encode_with(p, &cfg, false) {
            Err(e) if budget_too_small(&e) => {
                log::info!("report: {} at budget {budget} is infeasible: {e}", kind.label());
                row.status = "infeasible".into();
            }
            Err(e) => return Err(e),
            Ok(_) => {
                pl.train_with(p, &cfg, false)?;
                let m = pl.load_model(&cfg)?.metrics;
                row.output_dim = Some(m.output_dim);
                row.train_examples = Some(m.train_examples);
                row.train_loss = Some(m.train_loss);
                row.test_loss = Some(m.test_loss);
                row.test_accuracy = Some(m.test_accuracy);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn objective_rows(pl: &Pipeline, p: &Prepared) -> Result<Vec<ObjectiveRow>> {
    let stats = collect_color_stats(&p.coloring, &p.estimate, pl.cfg.encoder.policy);
    let colors = p.coloring.num_colors();
    pl.cfg
        .report
        .budgets
        .iter()
        .map(|&budget| {
            let (global, sorting) = if budget < colors as usize {
                (None, None)
            } else {
                (
                    Some(submodular_compress(&stats, budget)?.objective),
                    Some(sorting_heuristic_compress(&stats, budget)?.objective),
                )
            };
            Ok(ObjectiveRow {
                budget,
                colors,
                global_objective: global,
                sorting_objective: sorting,
            })
        })
        .collect()
}

fn good_turing_rows(f: &FidelityReport) -> Vec<GoodTuringRow> {
    f.rows
        .iter()
        .map(|r| GoodTuringRow {
            k: r.k,
            edges: r.edges,
            good_turing: r.good_turing,
            new_edges: r.new_edges,
            good_turing_filtered: r.good_turing_filtered,
            new_edges_filtered: r.new_edges_filtered,
            unseen_feature_rate: r.unseen_feature_rate,
        })
        .collect()
}

fn budget_rows(f: &FidelityReport) -> Result<Vec<BudgetRow>> {
    f.rows
        .iter()
        .map(|r| {
            let unfiltered = required_colors(
                &BudgetInputs {
                    held_out: 0,
                    delta_f: r.delta_k,
                    n_f: (r.good_turing * f.n as f64).round() as u64,
                    n: f.n,
                    k: r.k,
                    eta: f.eta,
                },
                f.delta,
            )?;
            Ok(BudgetRow {
                k: r.k,
                delta_k: r.delta_k,
                held_out: r.held_out,
                delta_f: r.delta_f,
                m: unfiltered.raw,
                m_f: r.m_f.raw,
                greedy_colors: r.greedy_colors,
                greedy_cc: r.greedy_cc,
                uniform_colors: r.uniform_colors,
                uniform_cc: r.uniform_cc,
            })
        })
        .collect()
}

fn curve_rows(f: &FidelityReport) -> Vec<CurveRow> {
    f.rows
        .iter()
        .flat_map(|r| {
            r.uniform_curve.iter().map(move |&(colors, avg_cc)| CurveRow {
                k: r.k,
                held_out: r.held_out,
                colors,
                avg_cc,
                greedy_colors: r.greedy_colors,
                greedy_cc: r.greedy_cc,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per series, named as in [`SERIES`].
pub fn write_series(dir: &Path, r: &Report) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join(SERIES[0]), &r.loss)?;
    write_csv(&dir.join(SERIES[1]), &r.objective)?;
    write_csv(&dir.join(SERIES[2]), &r.good_turing)?;
    write_csv(&dir.join(SERIES[3]), &r.color_budgets)?;
    write_csv(&dir.join(SERIES[4]), &r.uniform_cc)?;
    Ok(())
}
