//! Discrete-event simulation of the shared FCFS queue, tracking only the
//! scalar workload and the latest generation and reception epochs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};

use crate::error::{AoiError, Result};
use crate::model::ModelSpec;

/// Run-length and batching settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Defaults to 5% of the horizon.
    pub warmup: Option<f64>,
    pub batches: usize,
    /// Abort when the workload exceeds this many work units.
    pub workload_guard: f64,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        SimConfig { horizon, warmup: None, batches: 20, workload_guard: 1e9 }
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(0.05 * self.horizon)
    }

    fn validate(&self) -> Result<()> {
        let w = self.warmup();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(AoiError::InvalidParameter(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if !(w >= 0.0 && w < self.horizon) {
            return Err(AoiError::InvalidParameter(format!(
                "warmup {w} must be nonnegative and below the horizon {}",
                self.horizon
            )));
        }
        if self.batches < 2 {
            return Err(AoiError::InvalidParameter("need at least 2 batches".into()));
        }
        Ok(())
    }
}

/// Simulated time-average AoI, mean delay and mean peak AoI with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub mean_aoi: f64,
    pub stderr_aoi: f64,
    pub mean_delay: f64,
    pub stderr_delay: f64,
    pub mean_peak: f64,
    pub stderr_peak: f64,
    pub horizon: f64,
    pub n_tagged: u64,
    pub seed: u64,
    /// Number of estimates pooled (1 for a single run).
    pub replications: usize,
    /// Largest `|peak - (delay + G)|` seen over all tagged packets.
    pub peak_identity_error: f64,
    /// `|arrived - served - final workload| / arrived`.
    pub conservation_error: f64,
}

#[derive(Clone, Default)]
struct Batch {
    area: f64,
    delay: f64,
    peak: f64,
    count: u64,
}

struct Window {
    start: f64,
    end: f64,
    width: f64,
    batches: Vec<Batch>,
}

impl Window {
    fn batch_of(&self, t: f64) -> usize {
        (((t - self.start) / self.width) as usize).min(self.batches.len() - 1)
    }

    /// Adds the integral of `t - origin` over `[a, c]`, clipped and split by batch.
    fn add_area(&mut self, a: f64, c: f64, origin: f64) {
        let mut lo = a.max(self.start);
        let hi = c.min(self.end);
        while lo < hi {
            let b = self.batch_of(lo);
            let edge = if b + 1 == self.batches.len() { self.end } else { self.start + (b + 1) as f64 * self.width };
            let seg_end = hi.min(edge);
            let (x, y) = (lo - origin, seg_end - origin);
            self.batches[b].area += 0.5 * (y * y - x * x);
            if seg_end <= lo {
                break;
            }
            lo = seg_end;
        }
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs one replication with the generator seeded from `seed`.
pub fn simulate(model: &ModelSpec<f64>, cfg: &SimConfig, seed: u64) -> Result<SimEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = run(model, cfg, &mut rng, None)?;
    est.seed = seed;
    Ok(est)
}

/// Like [`simulate`], also writing a `t,event,V,A` trace of every event.
pub fn simulate_traced(model: &ModelSpec<f64>, cfg: &SimConfig, seed: u64, out: &mut dyn Write) -> Result<SimEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    writeln!(out, "t,event,V,A").map_err(|e| AoiError::Simulation(e.to_string()))?;
    let mut est = run(model, cfg, &mut rng, Some(out))?;
    est.seed = seed;
    Ok(est)
}

fn run<R: Rng>(model: &ModelSpec<f64>, cfg: &SimConfig, rng: &mut R, mut trace: Option<&mut dyn Write>) -> Result<SimEstimate> {
    model.validate()?;
    cfg.validate()?;
    let mu = model.mu;
    let horizon = cfg.horizon;
    let start = cfg.warmup();
    let mut win = Window {
        start,
        end: horizon,
        width: (horizon - start) / cfg.batches as f64,
        batches: vec![Batch::default(); cfg.batches],
    };
    let bg_gap = if model.lambda_bg > 0.0 { Some(Exp::new(model.lambda_bg).expect("positive rate")) } else { None };

    // Event times are kept relative to the latest tagged generation, which sits
    // at absolute time `offset`, so epochs never grow with the horizon.
    let mut offset = 0.0f64;
    let mut now = 0.0f64;
    let mut work = 0.0f64;
    let mut arrived = 0.0f64;
    let mut served = 0.0f64;
    let mut next_bg = bg_gap.map_or(f64::INFINITY, |e| e.sample(rng));
    let mut g_next = model.g.sample(rng);
    let mut next_tag = g_next;
    let mut last: Option<(f64, f64)> = None;
    let mut n_tagged = 0u64;
    let mut peak_err = 0.0f64;
    let io_err = |e: std::io::Error| AoiError::Simulation(e.to_string());

    loop {
        let t = next_bg.min(next_tag);
        let drained = work.min(mu * (t - now));
        work -= drained;
        served += drained;
        now = t;
        if next_bg < next_tag {
            let h = model.h_bg.sample(rng);
            work += h;
            arrived += h;
            next_bg += bg_gap.expect("background active").sample(rng);
            if let Some(w) = trace.as_deref_mut() {
                let age = last.map_or(f64::NAN, |(a, _)| now - a);
                writeln!(w, "{},bg,{work},{age}", offset + now).map_err(io_err)?;
            }
        } else {
            let alpha = now;
            let g_n = g_next;
            let h = model.h.sample(rng);
            let delay = (work + h) / mu;
            work += h;
            arrived += h;
            let beta = alpha + delay;
            if let Some((pa, pb)) = last {
                if beta < pb - 1e-9 * pb.max(1.0) {
                    return Err(AoiError::Simulation(format!("reception epochs out of order at t = {}", offset + alpha)));
                }
                win.add_area(offset + pb, offset + beta, offset + pa);
                let peak = beta - pa;
                let err = (peak - (delay + g_n)).abs();
                if err > 1e-9 * peak.max(1.0) {
                    return Err(AoiError::Simulation(format!(
                        "peak AoI {peak} differs from delay + G = {} at t = {}",
                        delay + g_n,
                        offset + alpha
                    )));
                }
                peak_err = peak_err.max(err);
                let alpha_abs = offset + alpha;
                if alpha_abs >= start && alpha_abs < horizon {
                    let b = win.batch_of(alpha_abs);
                    let batch = &mut win.batches[b];
                    batch.delay += delay;
                    batch.peak += peak;
                    batch.count += 1;
                    n_tagged += 1;
                }
                if offset + pb >= horizon {
                    break;
                }
            }
            if work > cfg.workload_guard {
                return Err(AoiError::Simulation(format!(
                    "workload {work} exceeded the guard {} at t = {}; the model drifts",
                    cfg.workload_guard,
                    offset + alpha
                )));
            }
            if let Some(w) = trace.as_deref_mut() {
                let age = last.map_or(f64::NAN, |(a, _)| now - a);
                writeln!(w, "{},tagged,{work},{age}", offset + now).map_err(io_err)?;
            }
            offset += alpha;
            next_bg -= alpha;
            now = 0.0;
            last = Some((0.0, delay));
            g_next = model.g.sample(rng);
            next_tag = g_next;
        }
    }
    let conservation_error = (arrived - served - work).abs() / arrived.max(f64::MIN_POSITIVE);
    if conservation_error > 1e-6 {
        return Err(AoiError::Simulation(format!("work conservation off by {conservation_error:e}")));
    }

    let total_area: f64 = win.batches.iter().map(|b| b.area).sum();
    let area_means: Vec<f64> = win.batches.iter().map(|b| b.area / win.width).collect();
    let (_, se_aoi) = mean_se(&area_means);
    let filled: Vec<&Batch> = win.batches.iter().filter(|b| b.count > 0).collect();
    if filled.len() < 2 {
        return Err(AoiError::Simulation("too few tagged packets for batch means; extend the horizon".into()));
    }
    let delays: Vec<f64> = filled.iter().map(|b| b.delay / b.count as f64).collect();
    let peaks: Vec<f64> = filled.iter().map(|b| b.peak / b.count as f64).collect();
    let count: u64 = filled.iter().map(|b| b.count).sum();
    Ok(SimEstimate {
        mean_aoi: total_area / (horizon - start),
        stderr_aoi: se_aoi,
        mean_delay: filled.iter().map(|b| b.delay).sum::<f64>() / count as f64,
        stderr_delay: mean_se(&delays).1,
        mean_peak: filled.iter().map(|b| b.peak).sum::<f64>() / count as f64,
        stderr_peak: mean_se(&peaks).1,
        horizon,
        n_tagged,
        seed: 0,
        replications: 1,
        peak_identity_error: peak_err,
        conservation_error,
    })
}

/// Generator for replication `rep` of a run seeded with `master_seed`:
/// the same key, one independent stream per replication.
pub fn replication_rng(master_seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep as u64);
    rng
}

/// Runs `n_reps` independent replications (in parallel) and pools them; the
/// standard errors come from the spread between replication means.
pub fn replicate(model: &ModelSpec<f64>, cfg: &SimConfig, n_reps: usize, master_seed: u64) -> Result<SimEstimate> {
    use rayon::prelude::*;
    if n_reps < 2 {
        return Err(AoiError::InvalidParameter(format!("need at least 2 replications, got {n_reps}")));
    }
    let runs: Vec<SimEstimate> = (0..n_reps)
        .into_par_iter()
        .map(|rep| run(model, cfg, &mut replication_rng(master_seed, rep), None))
        .collect::<Result<_>>()?;
    let pick = |f: fn(&SimEstimate) -> f64| mean_se(&runs.iter().map(f).collect::<Vec<_>>());
    let (mean_aoi, stderr_aoi) = pick(|r| r.mean_aoi);
    let (mean_delay, stderr_delay) = pick(|r| r.mean_delay);
    let (mean_peak, stderr_peak) = pick(|r| r.mean_peak);
    Ok(SimEstimate {
        mean_aoi,
        stderr_aoi,
        mean_delay,
        stderr_delay,
        mean_peak,
        stderr_peak,
        horizon: cfg.horizon,
        n_tagged: runs.iter().map(|r| r.n_tagged).sum(),
        seed: master_seed,
        replications: n_reps,
        peak_identity_error: runs.iter().map(|r| r.peak_identity_error).fold(0.0, f64::max),
        conservation_error: runs.iter().map(|r| r.conservation_error).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::phtype::PhaseType;

    fn mm1() -> ModelSpec<f64> {
        let h = Distribution::Exponential { rate: 1.0 };
        ModelSpec::new(PhaseType::exponential(0.5).unwrap(), h.clone(), 0.0, h, 1.0).unwrap()
    }

    #[test]
    fn mm1_mean_aoi() {
        let est = simulate(&mm1(), &SimConfig::new(2e6), 3).unwrap();
        assert!((est.mean_aoi - 3.5).abs() < 3.0 * est.stderr_aoi, "{est:?}");
        assert!(est.stderr_aoi > 0.0);
        assert!((est.mean_peak - est.mean_delay - 2.0).abs() < 3.0 * (est.stderr_peak + est.stderr_delay));
    }

    #[test]
    fn sparse_updates_sawtooth() {
        // Deterministic generation every 50 time units, unit work: mean AoI = 25 + 1.
        let g = PhaseType::erlang(400, 8.0).unwrap();
        let h = Distribution::Deterministic { d: 1.0 };
        let model = ModelSpec::new(g, h.clone(), 0.0, h, 1.0).unwrap();
        let est = simulate(&model, &SimConfig::new(2e6), 9).unwrap();
        // Erlang(400) has cv 0.05, adding 50 * 0.05^2 / 2 to the sawtooth mean.
        let expect = 25.0 + 1.0 + 50.0 * 0.0025 / 2.0;
        assert!((est.mean_aoi - expect).abs() < 4.0 * est.stderr_aoi + 1e-3, "{}", est.mean_aoi);
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = SimConfig::new(2e4);
        let a = replicate(&mm1(), &cfg, 4, 42).unwrap();
        let b = replicate(&mm1(), &cfg, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = replicate(&mm1(), &cfg, 4, 43).unwrap();
        assert_ne!(a.mean_aoi, c.mean_aoi);
    }

    #[test]
    fn rejects_bad_windows() {
        let cfg = SimConfig { warmup: Some(10.0), ..SimConfig::new(5.0) };
        assert!(simulate(&mm1(), &cfg, 1).is_err());
        assert!(replicate(&mm1(), &SimConfig::new(100.0), 1, 1).is_err());
    }

    #[test]
    fn trace_has_header_and_rows() {
        let mut buf = Vec::new();
        simulate_traced(&mm1(), &SimConfig::new(200.0), 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,event,V,A\n"));
        assert!(text.lines().count() > 50);
    }
}
