//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero when any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use aoi_cli::eval::{self, PointResult};
use aoi_cli::{presets, ModelConfig};
use aoi_core::workload::{build_map, iterate_q, MapMatrices};
use aoi_core::{
    busy_coeffs, kendall_fixed_point, mean_aoi, q_series, replicate, AoiReport, Distribution, Mat, ModelSpec,
    PhaseType, SimConfig, TruncationPolicy,
};

type Verdict = Result<String, String>;

/// Reports gathered from every analytic run, for the precision gate.
#[derive(Default)]
struct Runs {
    reports: Vec<(String, AoiReport)>,
    peak_identity: f64,
}

impl Runs {
    fn add(&mut self, label: impl Into<String>, r: &AoiReport) {
        self.reports.push((label.into(), r.clone()));
    }

    fn add_points(&mut self, label: &str, points: &[PointResult]) -> Result<(), String> {
        for (i, p) in points.iter().enumerate() {
            let o = p.outcome.as_ref().map_err(|e| format!("{label} point {i}: {e}"))?;
            self.add(format!("{label}[{i}]"), &o.report);
        }
        Ok(())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// s_h, lambda_bg, lambda_opt, lambda_star, E[A] at lambda_opt, E[A] at lambda_star
const TABLE: [(f64, f64, f64, f64, f64, f64); 12] = [
    (0.0, 0.8, 0.108, 0.102, 10.109, 10.137),
    (0.0, 0.85, 0.080, 0.077, 13.571, 13.591),
    (0.0, 0.9, 0.052, 0.051, 20.509, 20.522),
    (0.5, 0.8, 0.101, 0.097, 11.261, 11.282),
    (0.5, 0.85, 0.075, 0.072, 15.138, 15.153),
    (0.5, 0.9, 0.049, 0.048, 22.906, 22.915),
    (1.0, 0.8, 0.088, 0.085, 14.371, 14.381),
    (1.0, 0.85, 0.065, 0.064, 19.391, 19.398),
    (1.0, 0.9, 0.043, 0.042, 29.442, 29.447),
    (1.5, 0.8, 0.075, 0.073, 18.959, 18.964),
    (1.5, 0.85, 0.056, 0.055, 25.697, 25.701),
    (1.5, 0.9, 0.037, 0.037, 39.185, 39.188),
];

fn optimal_rate_table(runs: &mut Runs, policy: &TruncationPolicy) -> Verdict {
    let pairs: Vec<(f64, f64)> = TABLE.iter().map(|r| (r.0, r.1)).collect();
    assert_eq!(pairs, presets::table1(), "preset rows differ from the reference table");
    let rows = eval::table_rows(&ModelConfig::default(), &pairs, policy, 5e-4);
    let mut failures = Vec::new();
    let mut worst_aoi = 0.0f64;
    for (row, want) in rows.iter().zip(TABLE) {
        let tag = format!("(s_h {}, lambda_bg {})", want.0, want.1);
        let o = match &row.outcome {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("{tag}: {e}"));
                continue;
            }
        };
        runs.add(format!("table {tag} opt"), &o.at_opt);
        runs.add(format!("table {tag} star"), &o.at_star);
        let e_opt = rel(o.at_opt.mean_aoi, want.4);
        let e_star = rel(o.at_star.mean_aoi, want.5);
        worst_aoi = worst_aoi.max(e_opt).max(e_star);
        if (row.lambda_star - want.3).abs() > 0.001 {
            failures.push(format!("{tag}: lambda* {:.5} vs {}", row.lambda_star, want.3));
        }
        if (o.lambda_opt - want.2).abs() > 0.002 {
            failures.push(format!("{tag}: lambda_opt {:.5} vs {}", o.lambda_opt, want.2));
        }
        if e_opt > 5e-3 || e_star > 5e-3 {
            failures.push(format!(
                "{tag}: E[A] {:.4}/{:.4} vs {}/{}",
                o.at_opt.mean_aoi, o.at_star.mean_aoi, want.4, want.5
            ));
        }
    }
    if failures.is_empty() {
        Ok(format!("12 rows within tolerance, worst E[A] deviation {:.3}%", 100.0 * worst_aoi))
    } else {
        Err(failures.join("; "))
    }
}

fn precision_gate(runs: &Runs) -> Verdict {
    let mut worst = 0.0f64;
    for (label, r) in &runs.reports {
        let ratio = r.q_residual.abs() / (1e-6 * (r.q_limit + 1.0));
        worst = worst.max(ratio);
        if !(ratio < 1.0) || !r.gate_passed {
            return Err(format!(
                "{label}: residual {:e} against limit {} (gate_passed = {})",
                r.q_residual, r.q_limit, r.gate_passed
            ));
        }
    }
    Ok(format!("{} runs, largest residual at {:.1}% of its tolerance", runs.reports.len(), 100.0 * worst))
}

fn simulation_agreement(runs: &mut Runs, policy: &TruncationPolicy) -> Verdict {
    // lambda_bg, s_g, s_h, lambda
    let grid = [(0.0, 0.3, 0.0, 0.3), (0.5, 1.0, 1.0, 0.2), (0.9, 0.3, 0.0, 0.05), (0.5, 0.3, 1.0, 0.15), (0.9, 1.0, 1.0, 0.04)];
    let cfg = SimConfig::new(1e7);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (i, &(lambda_bg, s_g, s_h, lambda)) in grid.iter().enumerate() {
        let tag = format!("(lambda_bg {lambda_bg}, s_g {s_g}, s_h {s_h}, lambda {lambda})");
        let model = ModelSpec::two_moment(lambda, s_g, 100, s_h, lambda_bg, 1.0).map_err(|e| e.to_string())?;
        let exact = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
        runs.add(format!("sim {tag}"), &exact);
        let est = replicate(&model, &cfg, 20, 1000 + i as u64).map_err(|e| format!("{tag}: {e}"))?;
        runs.peak_identity = runs.peak_identity.max(est.peak_identity_error);
        let z_aoi = (est.mean_aoi - exact.mean_aoi) / est.stderr_aoi;
        let z_delay = (est.mean_delay - exact.mean_delay) / est.stderr_delay;
        worst = worst.max(z_aoi.abs()).max(z_delay.abs());
        if z_aoi.abs() > 3.0 || z_delay.abs() > 3.0 {
            failures.push(format!("{tag}: z_aoi {z_aoi:.2}, z_delay {z_delay:.2}"));
        }
    }
    if failures.is_empty() {
        Ok(format!("5 points, largest |z| {worst:.2}"))
    } else {
        Err(failures.join("; "))
    }
}

fn bound_sandwich(runs: &mut Runs, fig7: &[PointResult]) -> Verdict {
    runs.add_points("fig7", fig7)?;
    for p in fig7 {
        let o = p.outcome.as_ref().expect("checked above");
        let r = &o.report;
        let upper = r.upper_bound.ok_or("upper bound missing for an NBUE law")?;
        let slack = 1e-9 * r.mean_aoi;
        if r.mean_aoi < r.lower_bound - slack || r.mean_aoi > upper + slack {
            let i = p.inputs.expect("inputs present");
            return Err(format!(
                "lambda {} lambda_bg {} s_h {}: {} outside [{}, {}]",
                i.lambda, i.lambda_bg, i.s_h, r.mean_aoi, r.lower_bound, upper
            ));
        }
    }
    Ok(format!("{} points inside their bounds", fig7.len()))
}

fn single_source(runs: &mut Runs, policy: &TruncationPolicy) -> Verdict {
    let mut worst = 0.0f64;
    for rho in [0.3, 0.5, 0.7] {
        let h = Distribution::Exponential { rate: 1.0 };
        let g = PhaseType::exponential(rho).map_err(|e| e.to_string())?;
        let model = ModelSpec::new(g, h.clone(), 0.0, h, 1.0).map_err(|e| e.to_string())?;
        let r = mean_aoi(&model, policy).map_err(|e| e.to_string())?;
        runs.add(format!("single source rho {rho}"), &r);
        let expect = 1.0 + 1.0 / rho + rho * rho / (1.0 - rho);
        let e = rel(r.mean_aoi, expect);
        worst = worst.max(e);
        if e > 1e-6 {
            return Err(format!("rho {rho}: {} vs {expect}", r.mean_aoi));
        }
    }
    Ok(format!("largest relative error {worst:.1e}"))
}

/// Runs the workload iteration independently and checks every iterate.
fn q_iterates_monotone(map: &MapMatrices) -> Result<usize, String> {
    let n = map.exit.len();
    let mut q = map.c.clone();
    for step in 1..=100_000 {
        let mut x = q.clone();
        x.scale(1.0 / map.zeta);
        x.add_diag(1.0);
        let mut next = map.c.clone();
        let mut power = Mat::identity(n);
        let mut w = vec![0.0; n];
        let mut bg = Mat::zeros(n);
        for k in 0..map.h.len().max(map.h_bg.len()) {
            if let Some(&hk) = map.h.get(k) {
                for (wi, v) in w.iter_mut().zip(power.left_mul(&map.gamma)) {
                    *wi += hk * v;
                }
            }
            if let Some(&hk) = map.h_bg.get(k) {
                bg.add_scaled(hk, &power);
            }
            power = power.matmul(&x);
        }
        next.add_outer(1.0, &map.exit, &w);
        next.add_scaled(map.lambda_bg, &bg);
        let mut change = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let d = next[(i, j)] - q[(i, j)];
                if d < -1e-12 * map.zeta {
                    return Err(format!("iterate {step} decreased by {d:e} at ({i}, {j})"));
                }
                change = change.max(d);
                let u = next[(i, j)] / map.zeta + if i == j { 1.0 } else { 0.0 };
                if u < -1e-12 {
                    return Err(format!("iterate {step}: negative uniformized entry {u:e}"));
                }
                row += u;
            }
            if row > 1.0 + 1e-12 {
                return Err(format!("iterate {step}: uniformized row sum {row}"));
            }
        }
        q = next;
        if change < 1e-13 * map.zeta {
            return Ok(step);
        }
    }
    Err("Q iteration did not settle".into())
}

fn property_suites(runs: &Runs, policy: &TruncationPolicy) -> Verdict {
    let models = [
        ModelSpec::two_moment(0.1, 0.3, 100, 0.0, 0.8, 1.0),
        ModelSpec::two_moment(0.1, 1.5, 100, 1.0, 0.5, 1.0),
        ModelSpec::two_moment(0.05, 0.5, 100, 1.5, 0.85, 1.0),
    ];
    let mut iterations = Vec::new();
    for model in models {
        let model = model.map_err(|e| e.to_string())?;
        let q = q_series(&model, policy, 1024).map_err(|e| e.to_string())?;
        if let Some(k) = q.windows(2).position(|w| w[1] > w[0] + 1e-12 * (1.0 + q[0])) {
            return Err(format!("q_k increases at k = {k}: {} -> {}", q[k], q[k + 1]));
        }
        let map = build_map(&model, policy.eps_dh_tail, 1 << 16).map_err(|e| e.to_string())?;
        iterations.push(q_iterates_monotone(&map)?);
        iterate_q(&map, policy.q_tol * map.zeta, policy.q_iter_cap).map_err(|e| e.to_string())?;
    }

    let worst_tail = runs.reports.iter().map(|(_, r)| r.d_tail.abs()).fold(0.0, f64::max);
    if !(worst_tail < 1e-8) {
        return Err(format!("delay masses leave {worst_tail:e} unaccounted"));
    }

    let theta = 1.0 / 0.3;
    let mut busy_deficit = 0.0f64;
    for (h, lambda_bg) in [
        (Distribution::Deterministic { d: 1.0 }, 0.8),
        (Distribution::Exponential { rate: 1.0 }, 0.5),
        (Distribution::from_mean_cv(1.0, 1.5).map_err(|e| e.to_string())?, 0.85),
    ] {
        let bc = busy_coeffs(theta, lambda_bg, &h, 1.0, policy.k_cap, policy.b_tail, policy.b_floor)
            .map_err(|e| e.to_string())?;
        // The deficit must shrink with the series length and vanish at the cap.
        let deficits: Vec<f64> = [1024, 4096, policy.k_cap]
            .iter()
            .map(|&n| 1.0 - bc.b[..=n].iter().sum::<f64>())
            .collect();
        if deficits.windows(2).any(|w| w[1].abs() > w[0].abs()) || deficits[2].abs() > 1e-8 {
            return Err(format!("busy mass deficits {deficits:?} for lambda_bg {lambda_bg}"));
        }
        busy_deficit = busy_deficit.max(deficits[2].abs());
        let zeta = theta + lambda_bg;
        for z in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let series = bc.b.iter().rev().fold(0.0, |acc, &c| acc * z + c);
            let y = kendall_fixed_point(lambda_bg, &h, 1.0, theta * (1.0 - z), 1e-15).map_err(|e| e.to_string())?;
            let expect = (theta * z + lambda_bg * y) / zeta;
            if (series - expect).abs() > 1e-8 {
                return Err(format!("busy generating function at z = {z}: {series} vs {expect}"));
            }
        }
    }

    for mean in [0.5, 1.0, 20.0] {
        for cv in [0.0, 0.05, 0.3, 0.7, 1.0, 1.5, 3.0] {
            let g = PhaseType::from_mean_cv(mean, cv, 100).map_err(|e| e.to_string())?;
            let (m, c) = (g.mean().map_err(|e| e.to_string())?, g.cv().map_err(|e| e.to_string())?);
            let cv_target = if cv == 0.0 { 0.1 } else { cv };
            if rel(m, mean) > 1e-10 || (c - cv_target).abs() > 1e-10 * cv_target.max(1.0) {
                return Err(format!("fit ({mean}, {cv}) gave ({m}, {c})"));
            }
            let h = Distribution::from_mean_cv(mean, cv).map_err(|e| e.to_string())?;
            if rel(h.mean(), mean) > 1e-10 || (h.cv() - cv).abs() > 1e-10 * cv.max(1.0) {
                return Err(format!("work fit ({mean}, {cv}) gave ({}, {})", h.mean(), h.cv()));
            }
        }
    }

    if !(runs.peak_identity < 1e-9) {
        return Err(format!("peak AoI differs from delay + G by {:e}", runs.peak_identity));
    }
    Ok(format!(
        "Q settled in {iterations:?} monotone steps, delay tail {worst_tail:.1e}, busy deficit {busy_deficit:.1e}, peak identity {:.1e}",
        runs.peak_identity
    ))
}

type Series<'a> = Vec<((f64, f64), Vec<&'a PointResult>)>;

/// Groups points by `key`, keeping first-seen order.
fn series(points: &[PointResult], key: impl Fn(&PointResult) -> (f64, f64)) -> Series<'_> {
    let mut out: Vec<((f64, f64), Vec<&PointResult>)> = Vec::new();
    for p in points {
        let k = key(p);
        match out.iter_mut().find(|(kk, _)| *kk == k) {
            Some((_, v)) => v.push(p),
            None => out.push((k, vec![p])),
        }
    }
    out
}

fn aoi_of(p: &PointResult) -> f64 {
    p.outcome.as_ref().expect("evaluated").report.mean_aoi
}

fn figure_shapes(runs: &mut Runs, fig5: &[PointResult], fig7: &[PointResult], fig8: &[PointResult]) -> Verdict {
    runs.add_points("fig5", fig5)?;
    runs.add_points("fig8", fig8)?;
    let inputs = |p: &PointResult| p.inputs.expect("inputs present");

    let mut flatness = 0.0f64;
    for ((lambda_bg, _), pts) in series(fig5, |p| (inputs(p).lambda_bg, 0.0)) {
        if pts.windows(2).any(|w| aoi_of(w[1]) <= aoi_of(w[0])) {
            return Err(format!("E[A] not increasing in s_g for lambda_bg {lambda_bg}"));
        }
        let residual: Vec<f64> = pts
            .iter()
            .filter(|p| inputs(p).s_g <= 1.0 + 1e-12)
            .map(|p| {
                let i = inputs(p);
                aoi_of(p) - (1.0 + i.s_g * i.s_g) / (2.0 * i.lambda)
            })
            .collect();
        let lo = residual.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo) / (residual.iter().sum::<f64>() / residual.len() as f64);
        flatness = flatness.max(spread);
        if spread > 0.05 {
            return Err(format!("residual varies by {:.1}% for lambda_bg {lambda_bg}", 100.0 * spread));
        }
    }

    for ((s_h, lambda_bg), pts) in series(fig7, |p| (inputs(p).s_h, inputs(p).lambda_bg)) {
        let diffs: Vec<f64> = pts.windows(2).map(|w| aoi_of(w[1]) - aoi_of(w[0])).collect();
        let changes = diffs.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        if changes != 1 || diffs[0] >= 0.0 || *diffs.last().expect("nonempty") <= 0.0 {
            return Err(format!("E[A] over lambda is not unimodal for s_h {s_h}, lambda_bg {lambda_bg}"));
        }
    }

    for ((pct, _), pts) in series(fig8, |p| ((inputs(p).lambda_bg / inputs(p).mu * 100.0).round(), 0.0)) {
        let gaps: Vec<f64> = pts
            .iter()
            .map(|p| {
                let r = &p.outcome.as_ref().expect("evaluated").report;
                r.upper_bound.expect("NBUE law") - r.lower_bound
            })
            .collect();
        if gaps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(format!("bound gap does not shrink with mu at background load {pct}%"));
        }
    }
    Ok(format!("monotone, residual spread {:.2}%, unimodal, gaps shrinking", 100.0 * flatness))
}

fn evaluate(preset: &[aoi_cli::Point], policy: &TruncationPolicy) -> Result<Vec<PointResult>, String> {
    let out = eval::evaluate_all(&ModelConfig::default(), preset, policy);
    match out.iter().find_map(|p| p.outcome.as_ref().err()) {
        Some(e) => Err(e.clone()),
        None => Ok(out),
    }
}

fn report(n: usize, name: &str, started: Instant, verdict: &Verdict) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match verdict {
        Ok(msg) => println!("criterion {n}: PASS  {name}: {msg} ({secs:.1} s)"),
        Err(msg) => println!("criterion {n}: FAIL  {name}: {msg} ({secs:.1} s)"),
    }
    verdict.is_ok()
}

fn main() -> ExitCode {
    let policy = TruncationPolicy::default();
    let mut runs = Runs::default();
    let mut verdicts = [None; 8];

    let t = Instant::now();
    let v = optimal_rate_table(&mut runs, &policy);
    verdicts[1] = Some(report(1, "optimal-rate table", t, &v));

    let t = Instant::now();
    let v = simulation_agreement(&mut runs, &policy);
    verdicts[3] = Some(report(3, "simulation agreement", t, &v));

    let t = Instant::now();
    let figs = (|| Ok::<_, String>((evaluate(&presets::fig5(), &policy)?, evaluate(&presets::fig7(), &policy)?, evaluate(&presets::fig8(), &policy)?)))();
    let v = figs.as_ref().map_err(Clone::clone).and_then(|(_, f7, _)| bound_sandwich(&mut runs, f7));
    verdicts[4] = Some(report(4, "bound sandwich", t, &v));

    let t = Instant::now();
    let v = single_source(&mut runs, &policy);
    verdicts[5] = Some(report(5, "single-source closed form", t, &v));

    let t = Instant::now();
    let v = figs.as_ref().map_err(Clone::clone).and_then(|(f5, f7, f8)| figure_shapes(&mut runs, f5, f7, f8));
    verdicts[7] = Some(report(7, "figure shapes", t, &v));

    let t = Instant::now();
    let v = property_suites(&runs, &policy);
    verdicts[6] = Some(report(6, "property suites", t, &v));

    let t = Instant::now();
    let v = precision_gate(&runs);
    verdicts[2] = Some(report(2, "precision gate", t, &v));

    if verdicts.iter().flatten().all(|&ok| ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
