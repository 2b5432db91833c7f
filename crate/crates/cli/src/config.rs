//! Run configuration read from a TOML file. Every table is optional and
//! unknown keys are rejected.
//!
//! ```toml
//! [model]
//! lambda = 0.102            # or mean_g = 9.8, or an explicit g table
//! cv_g = 0.3
//! lambda_bg = 0.8
//! mu = 1.0
//! h = { mean = 1.0, cv = 0.0 }
//! h_bg = { kind = "exp", rate = 1.0 }   # defaults to h
//!
//! [policy]
//! k_cap = 65536
//!
//! [sweep]
//! lambda = [0.05, 0.1]
//! lambda_bg = [0.8, 0.9]
//!
//! [sim]
//! horizon = 1e6
//! reps = 20
//! seed = 1
//!
//! [optimize]
//! tol = 5e-4
//! ```

use std::path::Path;

use aoi_core::{Distribution, Mat, ModelSpec, PhaseType, QueueMoments, TruncationPolicy};
use serde::Deserialize;

/// Name of the environment variable holding default policy overrides, as
/// comma-separated `key = value` pairs.
pub const POLICY_ENV: &str = "AOI_POLICY";

/// Generation rate used when the model table names none.
pub const DEFAULT_LAMBDA: f64 = 0.102;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub policy: PolicyOverrides,
    pub sweep: SweepAxes,
    pub sim: SimSection,
    pub optimize: OptimizeSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Default policy, then the environment overrides, then the file's `policy` table.
    pub fn policy(&self, env: Option<&str>) -> Result<TruncationPolicy, String> {
        let mut p = TruncationPolicy::default();
        if let Some(text) = env {
            PolicyOverrides::from_env_text(text)?.apply(&mut p);
        }
        self.policy.apply(&mut p);
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

/// A work or time law: `{ mean, cv }` for the two-moment fit, or `kind`
/// with the parameters of that family.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub kind: Option<String>,
    pub mean: Option<f64>,
    pub cv: Option<f64>,
    pub d: Option<f64>,
    pub rate: Option<f64>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub rates: Option<Vec<f64>>,
}

impl DistSpec {
    pub fn fit(mean: f64, cv: f64) -> Self {
        DistSpec { mean: Some(mean), cv: Some(cv), ..Default::default() }
    }

    pub fn build(&self, field: &str) -> Result<Distribution, String> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| format!("model.{field}: missing `{key}`"));
        let used: Vec<&str> = [
            ("d", self.d.is_some()),
            ("rate", self.rate.is_some()),
            ("k", self.k.is_some()),
            ("p", self.p.is_some()),
            ("weights", self.weights.is_some()),
            ("rates", self.rates.is_some()),
        ]
        .iter()
        .filter(|(_, set)| *set)
        .map(|(k, _)| *k)
        .collect();
        let allow = |keys: &[&str]| -> Result<(), String> {
            match used.iter().find(|k| !keys.contains(k)) {
                Some(k) => Err(format!("model.{field}: `{k}` does not apply here")),
                None => Ok(()),
            }
        };
        let dist = match self.kind.as_deref() {
            None => {
                allow(&[])?;
                Distribution::from_mean_cv(need(self.mean, "mean")?, need(self.cv, "cv")?)
            }
            Some(kind) => {
                if self.mean.is_some() || self.cv.is_some() {
                    return Err(format!("model.{field}: give either `kind` or `mean`/`cv`, not both"));
                }
                match kind {
                    "det" => {
                        allow(&["d"])?;
                        Ok(Distribution::Deterministic { d: need(self.d, "d")? })
                    }
                    "exp" => {
                        allow(&["rate"])?;
                        Ok(Distribution::Exponential { rate: need(self.rate, "rate")? })
                    }
                    "erlang" => {
                        allow(&["k", "rate"])?;
                        let k = self.k.ok_or_else(|| format!("model.{field}: missing `k`"))?;
                        Ok(Distribution::Erlang { k, rate: need(self.rate, "rate")? })
                    }
                    "mixederlang" => {
                        allow(&["p", "k", "rate"])?;
                        let k = self.k.ok_or_else(|| format!("model.{field}: missing `k`"))?;
                        Ok(Distribution::MixedErlang { p: need(self.p, "p")?, k, rate: need(self.rate, "rate")? })
                    }
                    "hyperexp" => {
                        allow(&["weights", "rates"])?;
                        let weights = self.weights.clone().ok_or_else(|| format!("model.{field}: missing `weights`"))?;
                        let rates = self.rates.clone().ok_or_else(|| format!("model.{field}: missing `rates`"))?;
                        Ok(Distribution::Hyperexponential { weights, rates })
                    }
                    other => {
                        return Err(format!(
                            "model.{field}: unknown kind `{other}` (expected det, exp, erlang, mixederlang or hyperexp)"
                        ))
                    }
                }
            }
        }
        .map_err(|e| format!("model.{field}: {e}"))?;
        dist.validate().map_err(|e| format!("model.{field}: {e}"))?;
        Ok(dist)
    }
}

/// Explicit phase-type law for `G`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhSpec {
    pub gamma: Vec<f64>,
    #[serde(rename = "Gamma", alias = "generator")]
    pub generator: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub lambda: Option<f64>,
    pub mean_g: Option<f64>,
    pub cv_g: f64,
    /// Erlang order standing in for deterministic `G`.
    pub k0: usize,
    pub g: Option<PhSpec>,
    pub lambda_bg: f64,
    pub mu: f64,
    pub h: DistSpec,
    pub h_bg: Option<DistSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lambda: None,
            mean_g: None,
            cv_g: 0.3,
            k0: 100,
            g: None,
            lambda_bg: 0.8,
            mu: 1.0,
            h: DistSpec::fit(1.0, 0.0),
            h_bg: None,
        }
    }
}

impl ModelConfig {
    fn phase_type(&self) -> Result<PhaseType, String> {
        if let Some(ph) = &self.g {
            if self.lambda.is_some() || self.mean_g.is_some() {
                return Err("model: give either `g` or `lambda`/`mean_g`, not both".into());
            }
            let mat = Mat::from_rows(&ph.generator).map_err(|e| format!("model.g: {e}"))?;
            return PhaseType::new(ph.gamma.clone(), mat).map_err(|e| format!("model.g: {e}"));
        }
        let mean = match (self.lambda, self.mean_g) {
            (Some(_), Some(_)) => return Err("model: give either `lambda` or `mean_g`, not both".into()),
            (Some(l), None) if l > 0.0 => 1.0 / l,
            (Some(l), None) => return Err(format!("model.lambda: must be > 0, got {l}")),
            (None, Some(m)) => m,
            (None, None) => 1.0 / DEFAULT_LAMBDA,
        };
        PhaseType::from_mean_cv(mean, self.cv_g, self.k0).map_err(|e| format!("model: {e}"))
    }

    pub fn build(&self) -> Result<ModelSpec, String> {
        let g = self.phase_type()?;
        let h = self.h.build("h")?;
        let h_bg = match &self.h_bg {
            Some(spec) => spec.build("h_bg")?,
            None => h.clone(),
        };
        ModelSpec::new(g, h, self.lambda_bg, h_bg, self.mu).map_err(|e| e.to_string())
    }

    /// Moments of the work laws and server, which do not involve `G`.
    pub fn queue_moments(&self) -> Result<QueueMoments, String> {
        let h = self.h.build("h")?;
        let h_bg = match &self.h_bg {
            Some(spec) => spec.build("h_bg")?,
            None => h.clone(),
        };
        let (eh, eh2) = h.moments();
        let (ehbg, ehbg2) = h_bg.moments();
        Ok(QueueMoments { mu: self.mu, eh, eh2, lambda_bg: self.lambda_bg, ehbg, ehbg2 })
    }

    /// CV of `G` as used by the bound-optimal rate.
    pub fn cv_g(&self) -> Result<f64, String> {
        if self.g.is_none() {
            return Ok(self.cv_g);
        }
        self.phase_type()?.cv().map_err(|e| e.to_string())
    }

    /// Applies one sweep point. `s_h` refits both work laws at their current means.
    pub fn with_point(&self, p: &Point) -> Result<ModelConfig, String> {
        let mut m = self.clone();
        if (p.lambda.is_some() || p.s_g.is_some()) && m.g.is_some() {
            return Err("sweeps over lambda or s_g need a fitted G, not an explicit `g`".into());
        }
        if let Some(l) = p.lambda {
            m.lambda = Some(l);
            m.mean_g = None;
        }
        if let Some(s) = p.s_g {
            m.cv_g = s;
        }
        if let Some(s) = p.s_h {
            let h_mean = self.h.build("h")?.mean();
            let bg_mean = match &self.h_bg {
                Some(spec) => spec.build("h_bg")?.mean(),
                None => h_mean,
            };
            m.h = DistSpec::fit(h_mean, s);
            m.h_bg = (bg_mean != h_mean).then(|| DistSpec::fit(bg_mean, s));
        }
        if let Some(v) = p.lambda_bg {
            m.lambda_bg = v;
        }
        if let Some(v) = p.mu {
            m.mu = v;
        }
        Ok(m)
    }
}

/// One point of a sweep; absent coordinates keep the base model's value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub lambda: Option<f64>,
    pub s_g: Option<f64>,
    pub s_h: Option<f64>,
    pub lambda_bg: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOverrides {
    pub eps_ck_mass: Option<f64>,
    pub eps_dh_tail: Option<f64>,
    pub q_residual_tol: Option<f64>,
    pub d_tail_tol: Option<f64>,
    pub k_init: Option<usize>,
    pub k_cap: Option<usize>,
    pub l_cap: Option<usize>,
    pub q_tol: Option<f64>,
    pub q_iter_cap: Option<usize>,
    pub kendall_tol: Option<f64>,
    pub b_tail: Option<f64>,
    pub b_floor: Option<f64>,
}

impl PolicyOverrides {
    /// Parses `key = value, key = value`.
    pub fn from_env_text(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wrap {
            policy: PolicyOverrides,
        }
        toml::from_str::<Wrap>(&format!("policy = {{ {text} }}"))
            .map(|w| w.policy)
            .map_err(|e| format!("invalid {POLICY_ENV}: {e}"))
    }

    pub fn apply(&self, p: &mut TruncationPolicy) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(eps_ck_mass, eps_dh_tail, q_residual_tol, d_tail_tol, k_init, k_cap, l_cap, q_tol, q_iter_cap, kendall_tol, b_tail, b_floor);
    }
}

/// Axes of an explicit sweep grid; the grid is their Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub lambda: Option<Vec<f64>>,
    pub s_g: Option<Vec<f64>>,
    pub s_h: Option<Vec<f64>>,
    pub lambda_bg: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
}

impl SweepAxes {
    /// Grid points in row-major order over `lambda_bg, mu, s_h, s_g, lambda`.
    pub fn points(&self) -> Result<Vec<Point>, String> {
        let axes = [&self.lambda_bg, &self.mu, &self.s_h, &self.s_g, &self.lambda];
        if axes.iter().all(|a| a.is_none()) {
            return Err("empty sweep grid: give at least one axis in [sweep]".into());
        }
        if axes.iter().any(|a| a.as_ref().is_some_and(|v| v.is_empty())) {
            return Err("empty sweep grid: an axis has no values".into());
        }
        let vals = |a: &Option<Vec<f64>>| a.as_ref().map(|v| v.iter().map(|&x| Some(x)).collect()).unwrap_or(vec![None]);
        let mut out = Vec::new();
        for &lambda_bg in &vals(&self.lambda_bg) {
            for &mu in &vals(&self.mu) {
                for &s_h in &vals(&self.s_h) {
                    for &s_g in &vals(&self.s_g) {
                        for &lambda in &vals(&self.lambda) {
                            out.push(Point { lambda, s_g, s_h, lambda_bg, mu });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: f64,
    pub reps: usize,
    pub seed: u64,
    pub warmup: Option<f64>,
    pub batches: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { horizon: 1e6, reps: 20, seed: 1, warmup: None, batches: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tol: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection { lo: None, hi: None, tol: 5e-4 }
    }
}
