//! Evaluation of single points and table rows, shared by the commands and
//! the acceptance run.

use aoi_core::{
    mean_aoi, minimize_mean_aoi, optimal_bound_value, optimal_rate, AoiReport, ModelSpec, Optimum, QueueMoments,
    TruncationPolicy,
};
use rayon::prelude::*;

use crate::config::{ModelConfig, Point};

/// The coordinates of an evaluated point, as configured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inputs {
    pub lambda: f64,
    pub lambda_bg: f64,
    pub mu: f64,
    pub s_g: f64,
    pub s_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutputs {
    pub report: AoiReport,
    pub rho: f64,
    pub rho_bg: f64,
    pub lambda_star: f64,
    pub e_plus: f64,
}

impl PointOutputs {
    /// Background share of the total load.
    pub fn occupancy(&self) -> f64 {
        self.rho_bg / (self.rho + self.rho_bg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub inputs: Option<Inputs>,
    pub outcome: Result<PointOutputs, String>,
}

fn inputs(cfg: &ModelConfig, model: &ModelSpec) -> Result<Inputs, String> {
    let s_g = if cfg.g.is_some() { model.g.cv().map_err(|e| e.to_string())? } else { cfg.cv_g };
    let s_h = match (&cfg.h.kind, cfg.h.cv) {
        (None, Some(cv)) => cv,
        _ => model.h.cv(),
    };
    let lambda = match (cfg.lambda, cfg.mean_g) {
        (Some(l), _) => l,
        _ => model.lambda().map_err(|e| e.to_string())?,
    };
    Ok(Inputs { lambda, lambda_bg: model.lambda_bg, mu: model.mu, s_g, s_h })
}

/// Closed-form optimal rate and its bound value for a queue and `s_g`.
pub fn closed_form_optimum(q: &QueueMoments, s_g: f64) -> Result<(f64, f64), String> {
    let l = optimal_rate(q, s_g).map_err(|e| e.to_string())?;
    let e = optimal_bound_value(q, s_g).map_err(|e| e.to_string())?;
    Ok((l, e))
}

pub fn evaluate(base: &ModelConfig, point: &Point, policy: &TruncationPolicy) -> PointResult {
    let built = base.with_point(point).and_then(|cfg| {
        let model = cfg.build()?;
        let inp = inputs(&cfg, &model)?;
        Ok((model, inp))
    });
    let (model, inp) = match built {
        Ok(v) => v,
        Err(e) => return PointResult { inputs: None, outcome: Err(e) },
    };
    let outcome = (|| {
        let report = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
        let (lambda_star, e_plus) = closed_form_optimum(&model.queue_moments(), inp.s_g)?;
        Ok(PointOutputs {
            report,
            rho: model.rho().map_err(|e| e.to_string())?,
            rho_bg: model.rho_bg(),
            lambda_star,
            e_plus,
        })
    })();
    PointResult { inputs: Some(inp), outcome }
}

/// Evaluates every point in parallel; results keep the input order.
pub fn evaluate_all(base: &ModelConfig, points: &[Point], policy: &TruncationPolicy) -> Vec<PointResult> {
    points.par_iter().map(|p| evaluate(base, p, policy)).collect()
}

/// Default search bracket: from `1e-3` to `0.98` of the largest stable tagged rate.
pub fn default_bracket(q: &QueueMoments) -> (f64, f64) {
    let c = q.capacity();
    (1e-3 * c, 0.98 * c)
}

/// Exact optimum over the generation rate, with the model family obtained by
/// varying `lambda` in `base`.
pub fn optimize(
    base: &ModelConfig,
    policy: &TruncationPolicy,
    bracket: (f64, f64),
    tol: f64,
) -> Result<(Optimum, AoiReport), String> {
    let family = |l: f64| {
        base.with_point(&Point { lambda: Some(l), ..Default::default() })
            .and_then(|c| c.build())
            .map_err(aoi_core::AoiError::InvalidParameter)
    };
    let opt = minimize_mean_aoi(family, policy, bracket, tol).map_err(|e| e.to_string())?;
    let model = family(opt.lambda).map_err(|e| e.to_string())?;
    let report = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
    Ok((opt, report))
}

/// One row of the optimal-rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub s_h: f64,
    pub lambda_bg: f64,
    pub lambda_star: f64,
    pub e_plus: f64,
    pub outcome: Result<TableOutputs, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOutputs {
    pub lambda_opt: f64,
    pub at_opt: AoiReport,
    pub at_star: AoiReport,
    pub evaluations: usize,
}

/// Searches `[lambda*/2, 2 lambda*]`, clipped to the default bracket.
pub fn table_row(base: &ModelConfig, s_h: f64, lambda_bg: f64, policy: &TruncationPolicy, tol: f64) -> TableRow {
    let cfg = base.with_point(&Point { s_h: Some(s_h), lambda_bg: Some(lambda_bg), ..Default::default() });
    let prepared = cfg.and_then(|cfg| {
        let q = cfg.queue_moments()?;
        let (l, e) = closed_form_optimum(&q, cfg.cv_g()?)?;
        Ok((cfg, q, l, e))
    });
    let (cfg, queue, lambda_star, e_plus) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return TableRow { s_h, lambda_bg, lambda_star: f64::NAN, e_plus: f64::NAN, outcome: Err(e) };
        }
    };
    let outcome = (|| {
        let (lo, hi) = default_bracket(&queue);
        let bracket = ((0.5 * lambda_star).max(lo), (2.0 * lambda_star).min(hi));
        let (opt, at_opt) = optimize(&cfg, policy, bracket, tol)?;
        let star_model = cfg.with_point(&Point { lambda: Some(lambda_star), ..Default::default() })?.build()?;
        let at_star = mean_aoi(&star_model, policy).map_err(|e| e.to_string())?;
        Ok(TableOutputs { lambda_opt: opt.lambda, at_opt, at_star, evaluations: opt.evaluations })
    })();
    TableRow { s_h, lambda_bg, lambda_star, e_plus, outcome }
}

pub fn table_rows(base: &ModelConfig, rows: &[(f64, f64)], policy: &TruncationPolicy, tol: f64) -> Vec<TableRow> {
    rows.par_iter().map(|&(s, b)| table_row(base, s, b, policy, tol)).collect()
}
