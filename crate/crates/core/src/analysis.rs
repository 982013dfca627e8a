//! Lyapunov exponents from OTOC series, bound tables and cross-method
//! short-time comparisons.
//!
//! Exponents follow `C ∼ e^{λt}`, i.e. `λ = d(ln C)/dt`. A single saddle
//! trajectory grows as `e^{2ω_b t}`, but the thermal average is weighted by
//! the `e^{-ω_b t}` probability of lingering there, so the classical high-T
//! exponent is `ω_b`.

use alloc::string::String;
use alloc::vec::Vec;

use core::f64::consts::PI;
use libm::{log, sqrt};

use crate::error::{invalid, Error, Result};
use crate::otoc::OtocSeries;
use crate::stats::PrefixSums;

pub const LAMBDA_CONVENTION: &str = "lambda = d(ln C)/dt";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoWindow {
    /// Usable points required at all, and per window.
    pub min_points: usize,
    /// Shortest window in time. A default of one period of the squared
    /// well oscillation, `π/ω_well ≈ 1.1`, keeps a single burst from passing.
    pub min_span: f64,
    /// Local slopes may deviate from the window slope by this fraction.
    pub slope_tolerance: f64,
    pub min_r_squared: f64,
    /// Points count only above `C(0) + noise_sigmas · σ(0)`.
    pub noise_sigmas: f64,
    /// Points whose relative standard error exceeds this are unusable.
    pub max_relative_error: f64,
    /// Half-width in time of the regression giving each local slope.
    pub slope_half_span: f64,
    /// A local slope also counts as flat within this many of its own
    /// statistical errors.
    pub slope_noise_sigmas: f64,
}

impl Default for AutoWindow {
    fn default() -> Self {
        AutoWindow {
            min_points: 20,
            min_span: 1.1,
            slope_tolerance: 0.1,
            min_r_squared: 0.995,
            noise_sigmas: 5.0,
            max_relative_error: 0.5,
            slope_half_span: 0.55,
            slope_noise_sigmas: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowPolicy {
    Auto(AutoWindow),
    Manual { t_start: f64, t_end: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Auto(AutoWindow::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovFit {
    pub lambda: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Standard error of `λ`: regression error combined with the ensemble
    /// error of `ln C` at the window ends.
    pub stderr: f64,
    /// Regression error alone.
    pub fit_stderr: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub convention: &'static str,
}

impl LyapunovFit {
    /// `stderr / λ`.
    pub fn relative_error(&self) -> f64 {
        if self.lambda > 0.0 {
            self.stderr / self.lambda
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitOutcome {
    Exponential(LyapunovFit),
    NoExponentialRegime { reason: String },
}

impl FitOutcome {
    pub fn fit(&self) -> Option<&LyapunovFit> {
        match self {
            FitOutcome::Exponential(f) => Some(f),
            FitOutcome::NoExponentialRegime { .. } => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        self.fit().map(|f| f.lambda)
    }
}

fn none(reason: &str) -> FitOutcome {
    FitOutcome::NoExponentialRegime {
        reason: reason.into(),
    }
}

fn make_fit(series: &OtocSeries, lo: usize, hi: usize, fit: crate::stats::LineFit) -> LyapunovFit {
    let rel = |i: usize| {
        let c = series.values[i];
        if c > 0.0 {
            series.std_errors[i] / c
        } else {
            0.0
        }
    };
    let span = series.times[hi] - series.times[lo];
    let stat = if span > 0.0 {
        sqrt(rel(lo) * rel(lo) + rel(hi) * rel(hi)) / span
    } else {
        0.0
    };
    let fit_stderr = fit.slope_stderr;
    LyapunovFit {
        lambda: fit.slope,
        window: (series.times[lo], series.times[hi]),
        r_squared: fit.r_squared,
        stderr: sqrt(fit_stderr * fit_stderr + stat * stat),
        fit_stderr,
        intercept: fit.intercept,
        n_points: hi - lo + 1,
        convention: LAMBDA_CONVENTION,
    }
}

/// Fits `ln C` over a window chosen by `policy` and reports `λ` as the slope.
pub fn fit_lyapunov(series: &OtocSeries, policy: &WindowPolicy) -> Result<FitOutcome> {
    let n = series.len();
    if series.values.len() != n || series.std_errors.len() != n {
        return Err(Error::TimeGridMismatch);
    }
    match *policy {
        WindowPolicy::Manual { t_start, t_end } => {
            if !(t_start < t_end) {
                return Err(invalid("window", "need t_start < t_end"));
            }
            let idx: Vec<usize> = (0..n)
                .filter(|&i| series.times[i] >= t_start && series.times[i] <= t_end)
                .collect();
            if idx.len() < 3 {
                return Err(Error::SeriesTooShort {
                    usable: idx.len(),
                    required: 3,
                });
            }
            if idx.iter().any(|&i| !(series.values[i] > 0.0)) {
                return Ok(none("non-positive values inside the manual window"));
            }
            let (lo, hi) = (idx[0], idx[idx.len() - 1]);
            let ln: Vec<f64> = series
                .values
                .iter()
                .map(|&c| if c > 0.0 { log(c) } else { 0.0 })
                .collect();
            match PrefixSums::new(&series.times, &ln).fit(lo, hi + 1) {
                Some(fit) => Ok(FitOutcome::Exponential(make_fit(series, lo, hi, fit))),
                None => Ok(none("degenerate manual window")),
            }
        }
        WindowPolicy::Auto(cfg) => auto_fit(series, &cfg),
    }
}

fn auto_fit(series: &OtocSeries, cfg: &AutoWindow) -> Result<FitOutcome> {
    let n = series.len();
    if n < cfg.min_points {
        return Err(Error::SeriesTooShort {
            usable: n,
            required: cfg.min_points,
        });
    }
    let floor = series.values[0] + cfg.noise_sigmas * series.std_errors[0];
    let usable: Vec<bool> = (0..n)
        .map(|i| {
            let c = series.values[i];
            c.is_finite()
                && c > floor
                && c > 0.0
                && series.std_errors[i] <= cfg.max_relative_error * c
        })
        .collect();
    if usable.iter().filter(|u| **u).count() < cfg.min_points {
        return Ok(none(
            "fewer usable points above the noise floor than min_points",
        ));
    }
    let ln: Vec<f64> = series
        .values
        .iter()
        .map(|&c| if c > 0.0 { log(c) } else { 0.0 })
        .collect();
    let sums = PrefixSums::new(&series.times, &ln);
    let spacing = (series.times[n - 1] - series.times[0]) / (n - 1) as f64;
    let h = ((cfg.slope_half_span / spacing).round() as usize).max(1);
    // local slope at i from the regression over [i − h, i + h] inside one usable run
    let mut run_start = vec_usize(n);
    for i in 0..n {
        run_start[i] = if i > 0 && usable[i] && usable[i - 1] {
            run_start[i - 1]
        } else {
            i
        };
    }
    let mut run_end = vec_usize(n);
    for i in (0..n).rev() {
        run_end[i] = if i + 1 < n && usable[i] && usable[i + 1] {
            run_end[i + 1]
        } else {
            i
        };
    }
    let rel = |i: usize| series.std_errors[i] / series.values[i];
    // (slope, statistical error of the slope from the end-point errors)
    let local: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            if !usable[i] {
                return (f64::NAN, 0.0);
            }
            let lo = i.saturating_sub(h).max(run_start[i]);
            let hi = (i + h).min(run_end[i]);
            if hi - lo < 2 {
                return (f64::NAN, 0.0);
            }
            let noise =
                sqrt(rel(lo) * rel(lo) + rel(hi) * rel(hi)) / (series.times[hi] - series.times[lo]);
            (sums.fit(lo, hi + 1).map_or(f64::NAN, |f| f.slope), noise)
        })
        .collect();
    let mut best: Option<(usize, f64, usize, usize)> = None;
    for lo in 0..n {
        if !usable[lo] || !local[lo].0.is_finite() {
            continue;
        }
        let mut hi = lo;
        while hi < run_end[lo] {
            hi += 1;
            if !local[hi].0.is_finite() {
                break;
            }
            let len = hi - lo + 1;
            if len < cfg.min_points || series.times[hi] - series.times[lo] < cfg.min_span - 1e-9 {
                continue;
            }
            if let Some((blen, _, _, _)) = best {
                if len < blen {
                    continue;
                }
            }
            let Some(fit) = sums.fit(lo, hi + 1) else {
                continue;
            };
            if !(fit.slope > 0.0) || fit.r_squared < cfg.min_r_squared {
                continue;
            }
            let tol = cfg.slope_tolerance * fit.slope;
            let flat = local[lo..=hi].iter().all(|&(s, noise)| {
                libm::fabs(s - fit.slope) <= tol.max(cfg.slope_noise_sigmas * noise)
            });
            if !flat {
                continue;
            }
            let better = match best {
                None => true,
                Some((blen, br2, _, _)) => len > blen || (len == blen && fit.r_squared > br2),
            };
            if better {
                best = Some((len, fit.r_squared, lo, hi));
            }
        }
    }
    Ok(match best {
        Some((_, _, lo, hi)) => match sums.fit(lo, hi + 1) {
            Some(fit) => FitOutcome::Exponential(make_fit(series, lo, hi, fit)),
            None => none("degenerate window"),
        },
        None => none("no window with flat local slopes and R² above threshold"),
    })
}

fn vec_usize(n: usize) -> Vec<usize> {
    alloc::vec![0; n]
}

/// `2π k_B T / ħ`.
pub fn chaos_bound(temperature: f64, k_b: f64, hbar: f64) -> f64 {
    2.0 * PI * k_b * temperature / hbar
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub method: String,
    pub temperature: f64,
    pub lambda: f64,
    pub bound: f64,
    pub stderr: f64,
}

/// Fits for one method across the sweep temperatures.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSweep {
    pub method: String,
    pub outcomes: Vec<FitOutcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub temperatures: Vec<f64>,
    pub bound_values: Vec<f64>,
    pub methods: Vec<MethodSweep>,
    pub violations: Vec<Violation>,
    /// Uncertainty multiplier in `λ ≤ bound · (1 + k σ_rel)`.
    pub sigmas: f64,
}

impl BoundReport {
    pub fn new(temperatures: &[f64], k_b: f64, hbar: f64, sigmas: f64) -> Self {
        BoundReport {
            temperatures: temperatures.to_vec(),
            bound_values: temperatures
                .iter()
                .map(|&t| chaos_bound(t, k_b, hbar))
                .collect(),
            methods: Vec::new(),
            violations: Vec::new(),
            sigmas,
        }
    }

    /// Adds one method's fits (one per temperature) and records violations
    /// of `λ ≤ bound · (1 + sigmas · stderr/λ)`.
    pub fn add_method(&mut self, method: &str, outcomes: Vec<FitOutcome>) -> Result<()> {
        if outcomes.len() != self.temperatures.len() {
            return Err(invalid("outcomes", "one fit per temperature required"));
        }
        for ((o, &t), &b) in outcomes
            .iter()
            .zip(&self.temperatures)
            .zip(&self.bound_values)
        {
            if let Some(f) = o.fit() {
                if f.lambda > b * (1.0 + self.sigmas * f.relative_error()) {
                    self.violations.push(Violation {
                        method: method.into(),
                        temperature: t,
                        lambda: f.lambda,
                        bound: b,
                        stderr: f.stderr,
                    });
                }
            }
        }
        self.methods.push(MethodSweep {
            method: method.into(),
            outcomes,
        });
        Ok(())
    }

    pub fn method(&self, name: &str) -> Option<&MethodSweep> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn violations_for(&self, name: &str) -> usize {
        self.violations.iter().filter(|v| v.method == name).count()
    }
}

/// Runs `run` at each temperature, fits each series and adds the method to
/// `report`. Returns the series for output.
pub fn bound_sweep<F>(
    report: &mut BoundReport,
    method: &str,
    policy: &WindowPolicy,
    mut run: F,
) -> Result<Vec<OtocSeries>>
where
    F: FnMut(f64) -> Result<OtocSeries>,
{
    let mut series = Vec::with_capacity(report.temperatures.len());
    let mut outcomes = Vec::with_capacity(report.temperatures.len());
    for &t in &report.temperatures.clone() {
        let s = run(t)?;
        outcomes.push(fit_lyapunov(&s, policy)?);
        series.push(s);
    }
    report.add_method(method, outcomes)?;
    Ok(series)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShortTimeCheck {
    /// Log-log slope of `|C_a − C_b|` against `t`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// 95% interval on the slope.
    pub interval: (f64, f64),
    pub n_points: usize,
    /// Largest `σ(ΔC) / |ΔC|` in the window.
    pub max_noise_ratio: f64,
    /// Noise exceeds the tolerance or the difference is at round-off level.
    pub inconclusive: bool,
}

/// Compares two series on `[t_lo, t_hi]` (excluding `t = 0`). The check is
/// inconclusive when the combined standard error exceeds `noise_tolerance`
/// of `|ΔC|` anywhere in the window, or `|ΔC|` is at round-off level.
pub fn short_time_check(
    a: &OtocSeries,
    b: &OtocSeries,
    t_lo: f64,
    t_hi: f64,
    noise_tolerance: f64,
) -> Result<ShortTimeCheck> {
    if !a.same_grid(b) {
        return Err(Error::TimeGridMismatch);
    }
    if !(0.0 < t_lo && t_lo < t_hi) {
        return Err(invalid("window", "need 0 < t_lo < t_hi"));
    }
    let idx: Vec<usize> = (0..a.len())
        .filter(|&i| a.times[i] >= t_lo && a.times[i] <= t_hi)
        .collect();
    if idx.len() < 3 {
        return Err(Error::SeriesTooShort {
            usable: idx.len(),
            required: 3,
        });
    }
    let mut lt = Vec::with_capacity(idx.len());
    let mut ld = Vec::with_capacity(idx.len());
    let mut max_noise: f64 = 0.0;
    let mut at_roundoff = false;
    for &i in &idx {
        let d = (a.values[i] - b.values[i]).abs();
        let se = sqrt(a.std_errors[i] * a.std_errors[i] + b.std_errors[i] * b.std_errors[i]);
        if d <= 1e-13 * a.values[i].abs().max(1.0) {
            at_roundoff = true;
            max_noise = f64::INFINITY;
            continue;
        }
        max_noise = max_noise.max(se / d);
        lt.push(log(a.times[i]));
        ld.push(log(d));
    }
    if lt.len() < 3 {
        return Ok(ShortTimeCheck {
            slope: f64::NAN,
            slope_stderr: f64::NAN,
            interval: (f64::NAN, f64::NAN),
            n_points: lt.len(),
            max_noise_ratio: max_noise,
            inconclusive: true,
        });
    }
    let fit = crate::stats::line_fit(&lt, &ld).ok_or(Error::SeriesTooShort {
        usable: lt.len(),
        required: 3,
    })?;
    let half = 1.96 * fit.slope_stderr;
    Ok(ShortTimeCheck {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        interval: (fit.slope - half, fit.slope + half),
        n_points: lt.len(),
        max_noise_ratio: max_noise,
        inconclusive: at_roundoff || max_noise > noise_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otoc::{OtocKind, OtocMeta};
    use alloc::vec;
    use proptest::prelude::*;

    fn series(times: Vec<f64>, values: Vec<f64>) -> OtocSeries {
        OtocSeries {
            std_errors: vec![0.0; times.len()],
            times,
            values,
            n_samples: 1,
            kind: OtocKind::QuantumKubo,
            meta: OtocMeta::default(),
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn pure_exponential() {
        let t = grid(200, 0.05);
        let c = t.iter().map(|t| libm::exp(1.3 * t)).collect();
        let f = fit_lyapunov(&series(t, c), &WindowPolicy::default()).unwrap();
        let fit = f.fit().unwrap();
        assert!((fit.lambda - 1.3).abs() < 1e-6);
        assert_eq!(fit.convention, LAMBDA_CONVENTION);
    }

    #[test]
    fn saddle_stability_grows_at_twice_barrier_frequency() {
        // a single trajectory pinned at the saddle; the thermal average grows at ω_b
        let wb = 2.0;
        let t = grid(400, 0.01);
        let c = t.iter().map(|t| libm::cosh(wb * t).powi(2)).collect();
        let f = fit_lyapunov(&series(t, c), &WindowPolicy::default()).unwrap();
        let fit = f.fit().unwrap();
        assert!((fit.lambda - 2.0 * wb).abs() < 0.02 * wb, "{}", fit.lambda);
    }

    #[test]
    fn harmonic_has_no_exponential_regime() {
        let t = grid(500, 0.02);
        let c = t.iter().map(|t| libm::cos(1.7 * t).powi(2)).collect();
        let f = fit_lyapunov(&series(t, c), &WindowPolicy::default()).unwrap();
        assert!(matches!(f, FitOutcome::NoExponentialRegime { .. }));
    }

    #[test]
    fn growth_then_saturation_selects_growth() {
        let t = grid(600, 0.02);
        // logistic: exponential at rate 0.9 then flat
        let c: Vec<f64> = t
            .iter()
            .map(|t| libm::exp(0.9 * t) / (1.0 + 1e-3 * libm::exp(0.9 * t)))
            .collect();
        let s = series(t, c);
        let f = fit_lyapunov(&s, &WindowPolicy::default()).unwrap();
        let fit = f.fit().unwrap();
        assert!((fit.lambda - 0.9).abs() < 0.05, "{}", fit.lambda);
        assert!(fit.window.1 < 9.0);
        let again = fit_lyapunov(&s, &WindowPolicy::default()).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn manual_window() {
        let t = grid(100, 0.1);
        let c = t.iter().map(|t| 3.0 * libm::exp(1.0 * t)).collect();
        let f = fit_lyapunov(
            &series(t, c),
            &WindowPolicy::Manual {
                t_start: 2.0,
                t_end: 5.0,
            },
        )
        .unwrap();
        let fit = f.fit().unwrap();
        assert!((fit.lambda - 1.0).abs() < 1e-10);
        assert!((fit.window.0 - 2.0).abs() < 1e-9 && (fit.window.1 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn bound_report_counts_violations() {
        let temps = [0.2, 0.5];
        let mut r = BoundReport::new(&temps, 1.0, 1.0, 3.0);
        assert!((r.bound_values[1] - PI).abs() < 1e-12);
        let fit = |l: f64| {
            FitOutcome::Exponential(LyapunovFit {
                lambda: l,
                window: (0.0, 1.0),
                r_squared: 1.0,
                stderr: 0.01,
                fit_stderr: 0.01,
                intercept: 0.0,
                n_points: 20,
                convention: LAMBDA_CONVENTION,
            })
        };
        r.add_method("classical", vec![fit(2.0), fit(2.0)]).unwrap();
        r.add_method("quantum", vec![fit(1.0), none("x")]).unwrap();
        assert_eq!(r.violations_for("classical"), 1);
        assert_eq!(r.violations_for("quantum"), 0);
        assert!(r.add_method("bad", vec![]).is_err());
    }

    #[test]
    fn sweep_runs_each_temperature() {
        let mut r = BoundReport::new(&[0.5, 1.0], 1.0, 1.0, 3.0);
        let out = bound_sweep(&mut r, "synthetic", &WindowPolicy::default(), |temp| {
            let t = grid(100, 0.05);
            let c = t.iter().map(|t| libm::exp(temp * t)).collect();
            Ok(series(t, c))
        })
        .unwrap();
        assert_eq!(out.len(), 2);
        let m = r.method("synthetic").unwrap();
        assert!((m.outcomes[1].lambda().unwrap() - 1.0).abs() < 1e-8);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn short_time_power_law() {
        let t = grid(61, 0.005);
        let a = series(t.clone(), t.iter().map(|t| 1.0 + t * t).collect());
        let b = series(
            t.clone(),
            t.iter().map(|t| 1.0 + t * t + 0.3 * t.powi(6)).collect(),
        );
        let chk = short_time_check(&a, &b, 0.05, 0.3, 0.1).unwrap();
        assert!((chk.slope - 6.0).abs() < 1e-8);
        assert!(!chk.inconclusive);
        let same = short_time_check(&a, &a, 0.05, 0.3, 0.1).unwrap();
        assert!(same.inconclusive);
    }

    proptest! {
        #[test]
        fn fit_is_scale_covariant(scale in 1e-3f64..1e3, rate in 0.2f64..2.0) {
            let t = grid(120, 0.05);
            let c: Vec<f64> = t.iter().map(|t| 1.0 + libm::exp(rate * t) - 1.0 + 0.01 * libm::sin(7.0 * t)).collect();
            let s = series(t.clone(), c.clone());
            let scaled = series(t, c.iter().map(|v| v * scale).collect());
            let policy = WindowPolicy::Manual { t_start: 1.0, t_end: 5.0 };
            let a = fit_lyapunov(&s, &policy).unwrap();
            let b = fit_lyapunov(&scaled, &policy).unwrap();
            let (fa, fb) = (a.fit().unwrap(), b.fit().unwrap());
            prop_assert!((fa.lambda - fb.lambda).abs() < 1e-12 * fa.lambda.abs().max(1.0));
            prop_assert!((fb.intercept - fa.intercept - libm::log(scale)).abs() < 1e-9);
        }
    }
}
