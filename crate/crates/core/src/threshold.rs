//! Classification of evolutions and bisection for the critical amplitude.
//!
//! Two facts make classification decisive long before a chain has moved
//! far. The Bondi energy never increases, and every settled endstate has
//! energy `4N`. A run whose energy has dropped below the upper quantum
//! (`8` even, `12` odd) can therefore no longer end as an expanding chain.
//! Conversely, once the energy has flattened out above the upper quantum
//! while a separated pair is present, the excess is kinetic energy of the
//! outgoing objects and the chain escapes.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::evolve::{evolve_field, IntegratorConfig, Termination};
use crate::par::Execution;
use crate::spectral::Grid;
use crate::wavemap::{initial_data_even, initial_data_odd, FieldState, Parity};

/// One-parameter family of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Even,
    Odd,
}

impl Family {
    pub fn parity(self) -> Parity {
        match self {
            Family::Even => Parity::Even,
            Family::Odd => Parity::OddCentered,
        }
    }

    pub fn initial_data(self, b: f64, grid: &Grid) -> Result<FieldState> {
        match self {
            Family::Even => initial_data_even(b, grid),
            Family::Odd => initial_data_odd(b, grid),
        }
    }

    /// Energy of the critical chain.
    pub fn upper_quantum(self) -> f64 {
        match self {
            Family::Even => 8.0,
            Family::Odd => 12.0,
        }
    }

    /// Energy of the subcritical endstate.
    pub fn lower_quantum(self) -> f64 {
        match self {
            Family::Even => 0.0,
            Family::Odd => 4.0,
        }
    }

    /// Number of objects in the critical chain.
    pub fn chain_length(self) -> usize {
        match self {
            Family::Even => 2,
            Family::Odd => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Even => "even",
            Family::Odd => "odd",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "even" => Ok(Family::Even),
            "odd" => Ok(Family::Odd),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Subcritical,
    Supercritical,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Outermost position beyond which a chain counts as escaped.
    pub x_exp: f64,
    /// Half-width of the energy windows around the quanta.
    pub energy_window: f64,
    /// Energy distance from the upper quantum that counts as resolved.
    pub margin: f64,
    /// Earliest time at which the plateau rule may fire.
    pub s_min: f64,
    /// Lag used to measure the plateau.
    pub plateau_lag: f64,
    /// Allowed drop over one lag, relative to the excess above the upper
    /// quantum.
    pub plateau_tol: f64,
    /// Consecutive plateau confirmations required.
    pub plateau_hits: usize,
    /// Smallest outermost position that counts as a separated pair.
    pub c1_min: f64,
    /// When set, a run still undecided at this time is classified by the
    /// sign of its energy relative to the upper quantum.
    pub decide_at: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            x_exp: 12.0,
            energy_window: 0.5,
            margin: 1e-6,
            s_min: 20.0,
            plateau_lag: 10.0,
            plateau_tol: 0.01,
            plateau_hits: 2,
            c1_min: 1.0,
            decide_at: None,
        }
    }
}

/// Streaming classifier fed one diagnostics record at a time.
#[derive(Debug, Clone)]
pub struct Classifier {
    family: Family,
    cfg: ClassifierConfig,
    history: Vec<(f64, f64)>,
    hits: usize,
    verdict: Option<Classification>,
}

impl Classifier {
    pub fn new(family: Family, cfg: ClassifierConfig) -> Self {
        Self {
            family,
            cfg,
            history: Vec::new(),
            hits: 0,
            verdict: None,
        }
    }

    pub fn verdict(&self) -> Classification {
        self.verdict.unwrap_or(Classification::Undecided)
    }

    /// Feeds a record; returns the verdict once one is reached.
    pub fn observe(&mut self, rec: &DiagnosticsRecord) -> Option<Classification> {
        if let Some(v) = self.verdict {
            return Some(v);
        }
        let cfg = self.cfg;
        let upper = self.family.upper_quantum();
        let e = rec.bondi;
        self.history.push((rec.s, e));

        let verdict = if e < upper - cfg.margin {
            // Covers both annihilation signatures (emptied crossings, energy
            // near the kink's): monotone energy cannot climb back.
            Some(Classification::Subcritical)
        } else if rec.c1().is_some_and(|c| c > cfg.x_exp) && e >= upper - cfg.energy_window {
            Some(Classification::Supercritical)
        } else if e > upper + cfg.margin && rec.s >= cfg.s_min && rec.c1().is_some_and(|c| c > cfg.c1_min) {
            match self.energy_at(rec.s - cfg.plateau_lag) {
                Some(prev) if prev - e <= cfg.plateau_tol * (e - upper) => {
                    self.hits += 1;
                    (self.hits >= cfg.plateau_hits).then_some(Classification::Supercritical)
                }
                _ => {
                    self.hits = 0;
                    None
                }
            }
        } else {
            None
        };
        let verdict = verdict.or_else(|| {
            cfg.decide_at.filter(|&s| rec.s >= s).map(|_| {
                if e > upper {
                    Classification::Supercritical
                } else {
                    Classification::Subcritical
                }
            })
        });
        self.verdict = verdict;
        verdict
    }

    /// Energy at the latest recorded time not after `s`.
    fn energy_at(&self, s: f64) -> Option<f64> {
        let idx = self.history.partition_point(|(t, _)| *t <= s + 1e-12);
        (idx > 0).then(|| self.history[idx - 1].1)
    }
}

/// Classifies a completed diagnostics series.
pub fn classify(records: &[DiagnosticsRecord], family: Family, cfg: &ClassifierConfig) -> Classification {
    let mut c = Classifier::new(family, *cfg);
    for r in records {
        if let Some(v) = c.observe(r) {
            return v;
        }
    }
    Classification::Undecided
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub b: f64,
    pub classification: Classification,
    /// Bondi energy at the last sample.
    pub bondi_final: f64,
    pub s_final: f64,
}

/// Evolves one member of a family until it is classified.
pub fn probe_with_records(
    family: Family,
    b: f64,
    grid: &Grid,
    cfg: &IntegratorConfig,
    ccfg: &ClassifierConfig,
) -> Result<(Probe, Vec<DiagnosticsRecord>)> {
    let state0 = family.initial_data(b, grid)?;
    let mut classifier = Classifier::new(family, *ccfg);
    let mut records = Vec::new();
    let mut stop = |st: &FieldState| {
        let rec = diagnose(st, grid);
        let done = classifier.observe(&rec).is_some();
        records.push(rec);
        done
    };
    let traj = evolve_field(&state0, grid, cfg, &mut [&mut stop])?;
    if let Termination::StepFailure { s, reason } = &traj.termination {
        return Err(Error::InvalidArgument(format!(
            "evolution of b = {b} failed at s = {s}: {reason}"
        )));
    }
    let last = records.last().expect("initial sample");
    Ok((
        Probe {
            b,
            classification: classifier.verdict(),
            bondi_final: last.bondi,
            s_final: last.s,
        },
        records,
    ))
}

pub fn probe(
    family: Family,
    b: f64,
    grid: &Grid,
    cfg: &IntegratorConfig,
    ccfg: &ClassifierConfig,
) -> Result<Probe> {
    probe_with_records(family, b, grid, cfg, ccfg).map(|(p, _)| p)
}

/// Probes with one retry at doubled end time if undecided.
pub fn probe_patiently(
    family: Family,
    b: f64,
    grid: &Grid,
    cfg: &IntegratorConfig,
    ccfg: &ClassifierConfig,
) -> Result<Probe> {
    let p = probe(family, b, grid, cfg, ccfg)?;
    if p.classification != Classification::Undecided {
        return Ok(p);
    }
    let longer = IntegratorConfig {
        s_end: 2.0 * cfg.s_end,
        ..*cfg
    };
    probe(family, b, grid, &longer, ccfg)
}

/// Classifies many amplitudes, concurrently when `exec` allows.
pub fn sweep(
    family: Family,
    amplitudes: &[f64],
    grid: &Grid,
    cfg: &IntegratorConfig,
    ccfg: &ClassifierConfig,
    exec: Execution,
) -> Vec<Result<Probe>> {
    exec.map(amplitudes, |&b| probe_patiently(family, b, grid, cfg, ccfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    pub b_star: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub bracket_width: f64,
    pub probe_log: Vec<Probe>,
    /// Pairs of probes whose labels contradict a single threshold.
    pub violations: Vec<(f64, f64)>,
}

/// Probes ordered by amplitude whose labels are inconsistent with one
/// threshold: a supercritical probe below a subcritical one (or the reverse
/// when `super_above` is false).
pub fn monotonicity_violations(log: &[Probe], super_above: bool) -> Vec<(f64, f64)> {
    let mut sorted: Vec<&Probe> = log
        .iter()
        .filter(|p| p.classification != Classification::Undecided)
        .collect();
    sorted.sort_by(|a, b| a.b.total_cmp(&b.b));
    let (low, high) = if super_above {
        (Classification::Subcritical, Classification::Supercritical)
    } else {
        (Classification::Supercritical, Classification::Subcritical)
    };
    let mut out = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        if p.classification != high {
            continue;
        }
        for q in &sorted[i + 1..] {
            if q.classification == low {
                out.push((p.b, q.b));
            }
        }
    }
    out
}

/// Bisection driven by an arbitrary probe.
pub fn bisect_with(
    b_lo: f64,
    b_hi: f64,
    eps_b: f64,
    mut probe: impl FnMut(f64) -> Result<Probe>,
) -> Result<BisectionResult> {
    if !(b_lo < b_hi) || !(eps_b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need b_lo < b_hi and eps_b > 0, got [{b_lo}, {b_hi}], {eps_b}"
        )));
    }
    let mut log = Vec::new();
    let lo = probe(b_lo)?;
    let hi = probe(b_hi)?;
    log.push(lo.clone());
    log.push(hi.clone());
    if lo.classification == Classification::Undecided
        || hi.classification == Classification::Undecided
        || lo.classification == hi.classification
    {
        return Err(Error::InvalidArgument(format!(
            "bracket [{b_lo}, {b_hi}] is not valid: {:?} / {:?}",
            lo.classification, hi.classification
        )));
    }
    let lo_label = lo.classification;
    let (mut a, mut b) = (b_lo, b_hi);
    while b - a > eps_b {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let p = probe(mid)?;
        let label = p.classification;
        log.push(p);
        match label {
            Classification::Undecided => {
                return Err(Error::Bisection(format!(
                    "probe at b = {mid} stayed undecided; log: {}",
                    serde_json::to_string(&log).unwrap_or_default()
                )))
            }
            l if l == lo_label => a = mid,
            _ => b = mid,
        }
    }
    let violations = monotonicity_violations(&log, lo_label == Classification::Subcritical);
    Ok(BisectionResult {
        b_star: 0.5 * (a + b),
        b_lo: a,
        b_hi: b,
        bracket_width: b - a,
        probe_log: log,
        violations,
    })
}

/// Bisection on the amplitude of a family of initial data.
pub fn bisect(
    family: Family,
    b_lo: f64,
    b_hi: f64,
    eps_b: f64,
    cfg: &IntegratorConfig,
    grid: &Grid,
    ccfg: &ClassifierConfig,
) -> Result<BisectionResult> {
    bisect_with(b_lo, b_hi, eps_b, |b| probe_patiently(family, b, grid, cfg, ccfg))
}
