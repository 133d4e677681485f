//! Fits of the log law `c₁(t) = p (log(t − t₀) + log A)`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

/// Minimum number of samples for a fit.
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "A")]
    pub a: f64,
    pub t0: f64,
    pub exponent: f64,
    pub window: [f64; 2],
    pub rms_residual: f64,
    #[serde(rename = "A_predicted")]
    pub a_predicted: Option<f64>,
    pub rel_deviation: Option<f64>,
    /// Free slope of `c₁` against `log(t − t₀)` over the window.
    pub slope: f64,
    pub samples: usize,
}

impl FitResult {
    pub fn with_prediction(mut self, a_predicted: f64) -> Self {
        self.a_predicted = Some(a_predicted);
        self.rel_deviation = Some((self.a - a_predicted).abs() / a_predicted);
        self
    }
}

/// Best `log A` and the residual sum of squares for a fixed `t₀`.
fn profile(samples: &[(f64, f64)], p: f64, t0: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let log_a = samples.iter().map(|(t, c)| c / p - (t - t0).ln()).sum::<f64>() / n;
    let ss = samples
        .iter()
        .map(|(t, c)| {
            let r = c - p * ((t - t0).ln() + log_a);
            r * r
        })
        .sum();
    (log_a, ss)
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Least-squares fit of `c₁ = p(log(t − t₀) + log A)` to `(t, c₁)` samples.
///
/// `log A` is eliminated in closed form; `t₀` is located by a coarse scan of
/// `(−10 t_min, t_min)` followed by golden-section refinement.
pub fn fit_log_law(samples: &[(f64, f64)], p: f64) -> Result<FitResult> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::FitFailure(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(p > 0.0) {
        return Err(Error::FitFailure(format!("exponent must be positive, got {p}")));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::FitFailure("times must be strictly increasing".into()));
    }
    if samples.iter().any(|(t, c)| !t.is_finite() || !c.is_finite()) {
        return Err(Error::FitFailure("samples must be finite".into()));
    }
    let c_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let c_max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if c_max - c_min <= 1e-12 * c_max.abs().max(1.0) {
        return Err(Error::FitFailure("c₁ is constant over the samples".into()));
    }
    let t_min = samples[0].0;
    let t_max = samples[samples.len() - 1].0;
    let span = t_max - t_min;
    // The admissible offsets end just before the first sample.
    let hi = t_min - 1e-9 * span.max(t_min.abs());
    let lo = if t_min > 0.0 { -10.0 * t_min } else { t_min - 10.0 * span };
    let objective = |t0: f64| profile(samples, p, t0).1;

    const SCAN: usize = 400;
    let mut best = (0, f64::INFINITY);
    let grid: Vec<f64> = (0..=SCAN)
        .map(|i| {
            // Denser near the singular end, where the optimum usually is.
            let u = i as f64 / SCAN as f64;
            hi - (hi - lo) * u * u
        })
        .collect();
    for (i, &t0) in grid.iter().enumerate() {
        let v = objective(t0);
        if v < best.1 {
            best = (i, v);
        }
    }
    let i = best.0;
    let a = grid[(i + 1).min(SCAN)];
    let b = grid[i.saturating_sub(1)];
    let t0 = golden_section(a.min(b), a.max(b), objective);
    let (log_a, ss) = profile(samples, p, t0);
    let slope = regression_slope(samples, t0);
    Ok(FitResult {
        a: log_a.exp(),
        t0,
        exponent: p,
        window: [t_min, t_max],
        rms_residual: (ss / samples.len() as f64).sqrt(),
        a_predicted: None,
        rel_deviation: None,
        slope,
        samples: samples.len(),
    })
}

/// Ordinary least-squares slope of `c₁` against `log(t − t₀)`.
pub fn regression_slope(samples: &[(f64, f64)], t0: f64) -> f64 {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(t, _)| (t - t0).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(samples).map(|(x, s)| (x - mx) * (s.1 - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCriteria {
    /// Smallest outermost position inside the window.
    pub c1_min: f64,
    /// Energy of the chain and the allowed distance from it.
    pub quantum: f64,
    pub energy_window: f64,
    /// Target exponent and the allowed relative slope deviation.
    pub exponent: f64,
    pub slope_tol: f64,
    /// Smallest admissible `t_max / t_min`.
    pub min_ratio: f64,
}

impl WindowCriteria {
    pub fn new(quantum: f64, exponent: f64) -> Self {
        Self {
            c1_min: 2.0,
            quantum,
            energy_window: 0.5,
            exponent,
            slope_tol: 0.2,
            min_ratio: 3.0,
        }
    }
}

/// `(t, c₁)` pairs of the records that have a tracked object.
pub fn tracked(records: &[DiagnosticsRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| Some((r.t_inferred()?, r.c1()?)))
        .collect()
}

/// Longest contiguous stretch of records where the chain is separated, the
/// energy sits at the chain's quantum and the local slope
/// `d c₁ / d log t` is close to the target exponent.
pub fn select_fit_window(records: &[DiagnosticsRecord], crit: &WindowCriteria) -> Result<[f64; 2]> {
    if records.len() < 30 {
        return Err(Error::NotAsymptotic(format!(
            "need at least 30 records, got {}",
            records.len()
        )));
    }
    let n = records.len();
    let tc: Vec<Option<(f64, f64)>> = records.iter().map(|r| Some((r.t_inferred()?, r.c1()?))).collect();
    let ok: Vec<bool> = (0..n)
        .map(|i| {
            let Some((t, c)) = tc[i] else { return false };
            if c <= crit.c1_min || (records[i].bondi - crit.quantum).abs() > crit.energy_window {
                return false;
            }
            let (Some(Some(prev)), Some(Some(next))) = (i.checked_sub(1).map(|j| tc[j]), tc.get(i + 1)) else {
                return false;
            };
            if !(next.0 > t && t > prev.0) {
                return false;
            }
            let slope = (next.1 - prev.1) / (next.0.ln() - prev.0.ln());
            (slope - crit.exponent).abs() <= crit.slope_tol * crit.exponent
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=n {
        let good = i < n && ok[i];
        match (good, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let len = i - s;
                if best.is_none_or(|(a, b)| len > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (a, b) = best.ok_or_else(|| Error::NotAsymptotic("no record meets the window criteria".into()))?;
    let t_min = tc[a].expect("qualifying").0;
    let t_max = tc[b - 1].expect("qualifying").0;
    if b - a < MIN_FIT_SAMPLES || t_max < crit.min_ratio * t_min {
        return Err(Error::NotAsymptotic(format!(
            "longest qualifying window [{t_min:.3}, {t_max:.3}] spans less than a factor {}",
            crit.min_ratio
        )));
    }
    Ok([t_min, t_max])
}

/// Fits the records whose inferred time lies in `window`.
pub fn fit_records(records: &[DiagnosticsRecord], window: [f64; 2], p: f64) -> Result<FitResult> {
    let samples: Vec<(f64, f64)> = tracked(records)
        .into_iter()
        .filter(|(t, _)| *t >= window[0] && *t <= window[1])
        .collect();
    // Inferred times can jitter at the start of a stretch; keep the
    // increasing subsequence.
    let mut clean: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for s in samples {
        if clean.last().is_none_or(|l| s.0 > l.0) {
            clean.push(s);
        }
    }
    fit_log_law(&clean, p)
}
