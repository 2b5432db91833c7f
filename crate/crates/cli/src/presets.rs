//! Sweep presets. Every preset fixes all five coordinates of its points, on
//! top of a base model that supplies the remaining settings (`k0`, work
//! means). Grid values are built from integers so they print and re-parse
//! exactly.

use crate::config::Point;

pub const WORK_CVS: [f64; 4] = [0.0, 0.5, 1.0, 1.5];
pub const BACKGROUND_RATES: [f64; 3] = [0.8, 0.85, 0.9];
pub const FIG_CV_G: f64 = 0.3;
/// Generation rate held fixed in the `fig5` and `fig8` presets.
pub const FIXED_LAMBDA: f64 = 0.05;
pub const FIG8_MU: [u32; 7] = [1, 2, 5, 10, 20, 50, 100];
/// `fig7` stops at this fraction of the largest stable tagged rate.
pub const FIG7_LOAD_LIMIT: f64 = 0.6;

/// Mean AoI against `s_G` in `0.1, 0.2, ..., 2.0`, one series per background rate.
pub fn fig5() -> Vec<Point> {
    let mut out = Vec::new();
    for &lambda_bg in &BACKGROUND_RATES {
        for i in 1..=20 {
            out.push(Point {
                lambda: Some(FIXED_LAMBDA),
                s_g: Some(i as f64 / 10.0),
                s_h: Some(0.0),
                lambda_bg: Some(lambda_bg),
                mu: Some(1.0),
            });
        }
    }
    out
}

/// Generation rates `0.005, 0.01, 0.02, ...` up to the load limit, for unit work and `mu = 1`.
pub fn fig7_rates(lambda_bg: f64) -> Vec<f64> {
    let top = FIG7_LOAD_LIMIT * (1.0 - lambda_bg);
    std::iter::once(0.005).chain((1..).map(|i| i as f64 / 100.0).take_while(|&l| l <= top + 1e-12)).collect()
}

/// Mean AoI and bounds against the generation rate, for each work CV and background rate.
pub fn fig7() -> Vec<Point> {
    let mut out = Vec::new();
    for &s_h in &WORK_CVS {
        for &lambda_bg in &BACKGROUND_RATES {
            for lambda in fig7_rates(lambda_bg) {
                out.push(Point {
                    lambda: Some(lambda),
                    s_g: Some(FIG_CV_G),
                    s_h: Some(s_h),
                    lambda_bg: Some(lambda_bg),
                    mu: Some(1.0),
                });
            }
        }
    }
    out
}

/// Bounds as background rate and server speed grow together at fixed background load.
pub fn fig8() -> Vec<Point> {
    let mut out = Vec::new();
    for pct in [80u32, 85, 90] {
        for &mu in &FIG8_MU {
            out.push(Point {
                lambda: Some(FIXED_LAMBDA),
                s_g: Some(FIG_CV_G),
                s_h: Some(0.0),
                lambda_bg: Some((pct * mu) as f64 / 100.0),
                mu: Some(mu as f64),
            });
        }
    }
    out
}

/// `(s_H, lambda_bg)` rows of the optimal-rate table.
pub fn table1() -> Vec<(f64, f64)> {
    WORK_CVS.iter().flat_map(|&s| BACKGROUND_RATES.iter().map(move |&b| (s, b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_exact_values() {
        assert_eq!(fig5().len(), 60);
        assert_eq!(fig8().len(), 21);
        assert_eq!(table1().len(), 12);
        assert_eq!(fig7_rates(0.9), vec![0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06]);
        assert_eq!(fig7_rates(0.8).last(), Some(&0.12));
        for p in fig8() {
            let text = format!("{}", p.lambda_bg.unwrap());
            assert_eq!(text.parse::<f64>().unwrap(), p.lambda_bg.unwrap());
            assert!(text.len() < 6, "{text}");
        }
    }
}
