//! The subcommands, as functions from a configuration to printable output
//! and an exit code.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use aoi_core::{general_bounds_daley, mean_aoi, nbue_bounds, replicate, simulate_traced, AoiReport, SimConfig, TruncationPolicy};

use crate::config::RunConfig;
use crate::eval::{self, closed_form_optimum, PointResult, TableRow};
use crate::output::{num, Record, Table};
use crate::presets;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_GATE: u8 = 2;

/// What a command prints, what it may write as CSV, and its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub table: Table,
    pub code: u8,
}

impl Outcome {
    fn record(rec: Record, comment: &str, code: u8) -> Self {
        Outcome { text: rec.text(), table: rec.table(comment), code }
    }
}

fn gate_code(passed: bool) -> u8 {
    if passed {
        EXIT_OK
    } else {
        EXIT_GATE
    }
}

fn push_report(rec: &mut Record, r: &AoiReport) {
    rec.num("mean_aoi", r.mean_aoi);
    rec.num("mean_delay", r.mean_delay);
    rec.num("lower_bound", r.lower_bound);
    rec.push("upper_bound", r.upper_bound.map(num).unwrap_or_default());
    rec.num("daley_upper_bound", r.daley_upper_bound);
    rec.num("q_residual", r.q_residual);
    rec.num("q_limit", r.q_limit);
    rec.num("d_tail", r.d_tail);
    rec.push("series_length_used", r.series_length_used.to_string());
    rec.push("nbue_applicable", r.nbue_applicable.to_string());
    rec.push("gate_passed", r.gate_passed.to_string());
}

pub fn mean_aoi_cmd(cfg: &RunConfig, policy: &TruncationPolicy) -> Result<Outcome, String> {
    let model = cfg.model.build()?;
    let r = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
    let mut rec = Record::default();
    rec.num("lambda", model.lambda().map_err(|e| e.to_string())?);
    push_report(&mut rec, &r);
    let code = gate_code(r.gate_passed);
    if !r.gate_passed {
        rec.push("warning", "precision gate failed; raise policy.k_cap");
    }
    Ok(Outcome::record(rec, "mean-aoi: exact mean AoI, delay, bounds and precision diagnostics", code))
}

pub fn bounds_cmd(cfg: &RunConfig) -> Result<Outcome, String> {
    let model = cfg.model.build()?;
    let m = model.moment_set().map_err(|e| e.to_string())?;
    let (lower, upper) = nbue_bounds(&m).map_err(|e| e.to_string())?;
    let var_g = (m.eg2 - m.eg * m.eg).max(0.0);
    let (_, daley) = general_bounds_daley(&m, model.h.variance(), var_g).map_err(|e| e.to_string())?;
    let (lambda_star, e_plus) = closed_form_optimum(&model.queue_moments(), cfg.model.cv_g()?)?;
    let mut rec = Record::default();
    rec.num("lambda", m.lambda);
    rec.num("lower_bound", lower);
    rec.push("upper_bound", if model.g.is_nbue() { num(upper) } else { String::new() });
    rec.num("daley_upper_bound", daley);
    rec.push("nbue_applicable", model.g.is_nbue().to_string());
    rec.num("lambda_star", lambda_star);
    rec.num("e_plus", e_plus);
    Ok(Outcome::record(rec, "bounds: closed-form bounds and the bound-optimal rate", EXIT_OK))
}

pub fn optimize_cmd(cfg: &RunConfig, policy: &TruncationPolicy) -> Result<Outcome, String> {
    let queue = cfg.model.queue_moments()?;
    let (lo, hi) = eval::default_bracket(&queue);
    let bracket = (cfg.optimize.lo.unwrap_or(lo), cfg.optimize.hi.unwrap_or(hi));
    let (opt, at_opt) = eval::optimize(&cfg.model, policy, bracket, cfg.optimize.tol)?;
    let (lambda_star, e_plus) = closed_form_optimum(&queue, cfg.model.cv_g()?)?;
    let star = cfg.model.with_point(&crate::config::Point { lambda: Some(lambda_star), ..Default::default() })?.build()?;
    let at_star = mean_aoi(&star, policy).map_err(|e| e.to_string())?;
    let mut rec = Record::default();
    rec.num("lambda_opt", opt.lambda);
    rec.num("mean_aoi_opt", at_opt.mean_aoi);
    rec.num("lambda_star", lambda_star);
    rec.num("mean_aoi_star", at_star.mean_aoi);
    rec.num("difference", at_star.mean_aoi - at_opt.mean_aoi);
    rec.num("e_plus", e_plus);
    rec.push("evaluations", opt.evaluations.to_string());
    rec.num("q_residual_opt", at_opt.q_residual);
    rec.num("q_residual_star", at_star.q_residual);
    let passed = at_opt.gate_passed && at_star.gate_passed;
    rec.push("gate_passed", passed.to_string());
    Ok(Outcome::record(rec, "optimize: exact and bound-optimal generation rates", gate_code(passed)))
}

pub fn simulate_cmd(cfg: &RunConfig, policy: &TruncationPolicy, trace: Option<&Path>) -> Result<Outcome, String> {
    let model = cfg.model.build()?;
    let s = &cfg.sim;
    let sim_cfg = SimConfig { horizon: s.horizon, warmup: s.warmup, batches: s.batches, ..SimConfig::new(s.horizon) };
    let est = replicate(&model, &sim_cfg, s.reps, s.seed).map_err(|e| e.to_string())?;
    if let Some(path) = trace {
        let file = File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        simulate_traced(&model, &sim_cfg, s.seed, &mut BufWriter::new(file)).map_err(|e| e.to_string())?;
    }
    let r = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
    let mut rec = Record::default();
    rec.num("sim_mean_aoi", est.mean_aoi);
    rec.num("sim_stderr_aoi", est.stderr_aoi);
    rec.num("sim_mean_delay", est.mean_delay);
    rec.num("sim_stderr_delay", est.stderr_delay);
    rec.num("sim_mean_peak", est.mean_peak);
    rec.num("sim_stderr_peak", est.stderr_peak);
    rec.num("mean_aoi", r.mean_aoi);
    rec.num("mean_delay", r.mean_delay);
    rec.num("z_aoi", (est.mean_aoi - r.mean_aoi) / est.stderr_aoi);
    rec.num("z_delay", (est.mean_delay - r.mean_delay) / est.stderr_delay);
    rec.push("replications", est.replications.to_string());
    rec.num("horizon", est.horizon);
    rec.push("seed", est.seed.to_string());
    rec.push("n_tagged", est.n_tagged.to_string());
    rec.num("peak_identity_error", est.peak_identity_error);
    rec.push("gate_passed", r.gate_passed.to_string());
    Ok(Outcome::record(rec, "simulate: pooled replications beside the exact values", gate_code(r.gate_passed)))
}

pub const SWEEP_COLUMNS: [&str; 19] = [
    "lambda",
    "lambda_bg",
    "mu",
    "s_g",
    "s_h",
    "rho",
    "rho_bg",
    "occupancy",
    "mean_aoi",
    "mean_delay",
    "lower",
    "upper",
    "daley_upper",
    "lambda_star",
    "e_plus",
    "q_residual",
    "series_length",
    "gate_passed",
    "error",
];

pub const TABLE_COLUMNS: [&str; 14] = [
    "s_h",
    "lambda_bg",
    "lambda_opt",
    "lambda_star",
    "mean_aoi_opt",
    "mean_aoi_star",
    "difference",
    "e_plus",
    "mean_delay_opt",
    "q_residual_opt",
    "q_residual_star",
    "evaluations",
    "gate_passed",
    "error",
];

fn sweep_row(r: &PointResult) -> Vec<String> {
    let mut row: Vec<String> = match &r.inputs {
        Some(i) => [i.lambda, i.lambda_bg, i.mu, i.s_g, i.s_h].iter().map(|&v| num(v)).collect(),
        None => vec![String::new(); 5],
    };
    match &r.outcome {
        Ok(o) => {
            let rep = &o.report;
            row.extend([o.rho, o.rho_bg, o.occupancy(), rep.mean_aoi, rep.mean_delay, rep.lower_bound].map(num));
            row.push(rep.upper_bound.map(num).unwrap_or_default());
            row.extend([rep.daley_upper_bound, o.lambda_star, o.e_plus, rep.q_residual].map(num));
            row.push(rep.series_length_used.to_string());
            row.push(rep.gate_passed.to_string());
            row.push(String::new());
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), SWEEP_COLUMNS.len() - 6));
            row.push(e.clone());
        }
    }
    row
}

fn table_row(r: &TableRow) -> Vec<String> {
    let mut row = vec![num(r.s_h), num(r.lambda_bg)];
    match &r.outcome {
        Ok(o) => {
            row.push(num(o.lambda_opt));
            row.push(num(r.lambda_star));
            row.push(num(o.at_opt.mean_aoi));
            row.push(num(o.at_star.mean_aoi));
            row.push(num(o.at_star.mean_aoi - o.at_opt.mean_aoi));
            row.push(num(r.e_plus));
            row.push(num(o.at_opt.mean_delay));
            row.push(num(o.at_opt.q_residual));
            row.push(num(o.at_star.q_residual));
            row.push(o.evaluations.to_string());
            row.push((o.at_opt.gate_passed && o.at_star.gate_passed).to_string());
            row.push(String::new());
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), TABLE_COLUMNS.len() - 3));
            row.push(e.clone());
        }
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Fig5,
    Fig7,
    Fig8,
    Table1,
    Grid,
}

pub fn sweep_cmd(cfg: &RunConfig, policy: &TruncationPolicy, kind: SweepKind) -> Result<Outcome, String> {
    if kind == SweepKind::Table1 {
        let rows = eval::table_rows(&cfg.model, &presets::table1(), policy, cfg.optimize.tol);
        let errors = rows.iter().filter(|r| r.outcome.is_err()).count();
        let gate_ok = rows.iter().all(|r| r.outcome.as_ref().is_ok_and(|o| o.at_opt.gate_passed && o.at_star.gate_passed));
        let table = Table {
            comment: format!("columns: {}", TABLE_COLUMNS.join(", ")),
            header: TABLE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(table_row).collect(),
        };
        let code = if errors > 0 { EXIT_INPUT } else { gate_code(gate_ok) };
        return Ok(Outcome { text: format!("{} rows, {errors} failed\n", rows.len()), table, code });
    }
    let points = match kind {
        SweepKind::Fig5 => presets::fig5(),
        SweepKind::Fig7 => presets::fig7(),
        SweepKind::Fig8 => presets::fig8(),
        SweepKind::Grid => cfg.sweep.points()?,
        SweepKind::Table1 => unreachable!(),
    };
    let results = eval::evaluate_all(&cfg.model, &points, policy);
    let errors = results.iter().filter(|r| r.outcome.is_err()).count();
    let gate_ok = results.iter().all(|r| r.outcome.as_ref().is_ok_and(|o| o.report.gate_passed));
    let table = Table {
        comment: format!("columns: {}", SWEEP_COLUMNS.join(", ")),
        header: SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: results.iter().map(sweep_row).collect(),
    };
    let code = if errors > 0 { EXIT_INPUT } else { gate_code(gate_ok) };
    Ok(Outcome { text: format!("{} rows, {errors} failed\n", results.len()), table, code })
}
