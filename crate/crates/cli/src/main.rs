//! `wormhole`: command-line driver for field evolutions, threshold searches,
//! expansion-law fits and the reduced chain models.
//!
//! Every flag can also be given in a `key = value` file passed with
//! `--config`; keys are the flag names without the leading dashes. Flags on
//! the command line take precedence.

mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use wormhole_core::config::Config;
use wormhole_core::diagnostics::{diagnose_trajectory, final_energy_quantum, DiagnosticsRecord};
use wormhole_core::evolve::{evolve_chain, evolve_field, IntegratorConfig};
use wormhole_core::fit::{fit_records, select_fit_window, WindowCriteria};
use wormhole_core::io;
use wormhole_core::ode_models::{
    a_physical, asymptotic_solution, c1_exponent, effective_energy, exact_solution, series_residual,
    time_of_tau, ChainState, SeriesParams,
};
use wormhole_core::threshold::{
    bisect_with, probe_with_records, Classification, ClassifierConfig, Family, Probe,
};
use wormhole_core::wavemap::FieldState;
use wormhole_core::{Execution, Grid};

#[derive(Parser)]
#[command(name = "wormhole", version, about = "Wave maps on the 2+1 wormhole: evolutions, thresholds and chain models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one member of an initial-data family and record diagnostics.
    Evolve(EvolveArgs),
    /// Bisect on the amplitude for the critical value.
    Bisect(BisectArgs),
    /// Fit the expansion law to a trajectory CSV.
    Fit(FitArgs),
    /// Integrate the collective-coordinate chain equations.
    OdeIntegrate(OdeIntegrateArgs),
    /// Evaluate the asymptotic series of the two-particle chains.
    OdeSeries(OdeSeriesArgs),
    /// Tabulate JSON summaries written by the other commands.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// key = value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Settings> {
        let config = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => Config::default(),
        };
        Ok(Settings(config))
    }
}

/// Flag values with their config-file fallbacks.
struct Settings(Config);

impl Settings {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(wormhole_core::config::resolve(flag, &self.0, key, default)?)
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.0.get(key)?),
        }
    }

    fn list(&self, flag: Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.0.get_list(key)?),
        }
    }

    fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.0.get::<bool>(key)?.unwrap_or(false))
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Chebyshev nodes on [0, 1].
    #[arg(long)]
    n: Option<usize>,
    /// Final hyperboloidal time.
    #[arg(long)]
    send: Option<f64>,
    /// Sampling interval in s.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Step-size cap (none by default).
    #[arg(long)]
    max_step: Option<f64>,
}

impl SolverArgs {
    fn resolve(&self, s: &Settings, default_n: usize) -> Result<(Grid, IntegratorConfig)> {
        let d = IntegratorConfig::default();
        let n = s.get(self.n, "n", default_n)?;
        let cfg = IntegratorConfig {
            rel_tol: s.get(self.rel_tol, "rel_tol", d.rel_tol)?,
            abs_tol: s.get(self.abs_tol, "abs_tol", d.abs_tol)?,
            s_end: s.get(self.send, "send", d.s_end)?,
            sample_interval: s.get(self.dt, "dt", d.sample_interval)?,
            max_step: s.opt(self.max_step, "max_step")?,
        };
        cfg.validate()?;
        Ok((Grid::new(n)?, cfg))
    }
}

const DEFAULT_N: usize = 129;

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Initial-data family: even or odd.
    #[arg(long)]
    family: Option<String>,
    /// Amplitude.
    #[arg(long)]
    b: Option<f64>,
    /// Start from a saved FieldState JSON instead of a family member.
    #[arg(long)]
    state_in: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BisectArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    family: Option<String>,
    /// Lower end of the amplitude bracket.
    #[arg(long)]
    blo: Option<f64>,
    /// Upper end of the amplitude bracket.
    #[arg(long)]
    bhi: Option<f64>,
    /// Target bracket width.
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Energy distance from the upper quantum that counts as decided.
    #[arg(long)]
    margin: Option<f64>,
    /// Time at which undecided probes are settled by the sign of the energy
    /// excess (default: twice --send).
    #[arg(long)]
    decide_at: Option<f64>,
    /// Outermost position at which a chain counts as escaped.
    #[arg(long)]
    x_exp: Option<f64>,
    /// Also write the diagnostics of every probe.
    #[arg(long)]
    save_probes: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trajectory CSV written by `evolve`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Family of the run; sets the exponent, quantum and predicted A.
    #[arg(long)]
    family: Option<String>,
    /// Override the exponent p in c1 = p log(A (t - t0)).
    #[arg(long)]
    exponent: Option<f64>,
    /// Fixed fit window `t_min,t_max` instead of automatic selection.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<f64>>,
    /// FitResult JSON path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OdeIntegrateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Number of objects N in the chain.
    #[arg(long)]
    n_objects: Option<usize>,
    /// Start on the exact zero-energy solution (N = 2 or 3).
    #[arg(long)]
    exact: bool,
    /// Initial positions r_1..r_J.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// Initial velocities.
    #[arg(long, value_delimiter = ',')]
    rdot: Option<Vec<f64>>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// CSV path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct OdeSeriesArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Chain size, 4 or 5.
    #[arg(long)]
    n_objects: Option<usize>,
    /// Free constant of the series.
    #[arg(long)]
    c: Option<f64>,
    /// Highest power of 1/tau kept.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    tau_start: Option<f64>,
    #[arg(long)]
    tau_end: Option<f64>,
    /// Number of output rows.
    #[arg(long)]
    samples: Option<usize>,
    /// Integrate the chain equations from the series at tau_start and emit
    /// the numerical solution instead of the series.
    #[arg(long)]
    integrate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// JSON files written by evolve, bisect and fit.
    inputs: Vec<PathBuf>,
    /// Table path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Bisect(a) => bisection(a),
        Command::Fit(a) => fit(a),
        Command::OdeIntegrate(a) => ode_integrate(a),
        Command::OdeSeries(a) => ode_series(a),
        Command::Report(a) => report::run(a.config.load()?.0, a.inputs, a.out),
    }
}

fn family(s: &Settings, flag: Option<String>) -> Result<Family> {
    Ok(s.get(flag, "family", "even".to_string())?.parse()?)
}

fn write_json_file(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = io::create(path)?;
    io::write_json(value, &mut w)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes to `path`, or to stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn evolve(a: EvolveArgs) -> Result<()> {
    let s = a.config.load()?;
    let (grid, cfg) = a.solver.resolve(&s, DEFAULT_N)?;
    let out = s.get(a.out, "out", PathBuf::from("run"))?;
    let state_in: Option<PathBuf> = s.opt(a.state_in, "state_in")?;
    let (state0, origin) = match state_in {
        Some(p) => {
            let st: FieldState = io::read_json(io::open(&p)?)?;
            (st, json!({ "state_in": p }))
        }
        None => {
            let fam = family(&s, a.family)?;
            let b: f64 = s.opt(a.b, "b")?.context("--b (or `b` in the config) is required")?;
            (fam.initial_data(b, &grid)?, json!({ "family": fam, "b": b }))
        }
    };
    let clock = Instant::now();
    let tr = evolve_field(&state0, &grid, &cfg, &mut [])?;
    let records = diagnose_trajectory(&tr, &grid, Execution::Parallel);
    let elapsed = clock.elapsed().as_secs_f64();

    std::fs::create_dir_all(&out)?;
    let mut w = io::create(&out.join("trajectory.csv"))?;
    io::write_trajectory_csv(&records, &mut w)?;
    let last = tr.last().context("empty trajectory")?;
    write_json_file(&out.join("final_state.json"), last)?;
    io::write_field_csv(last, &grid, io::create(&out.join("final_field.csv"))?)?;
    let settled = final_energy_quantum(&records).ok();
    let fin = records.last().context("no diagnostics")?;
    write_json_file(
        &out.join("manifest.json"),
        &json!({
            "command": "evolve",
            "version": env!("CARGO_PKG_VERSION"),
            "initial": origin,
            "n": grid.n(),
            "integrator": cfg,
            "termination": tr.termination,
            "stats": tr.stats,
            "samples": records.len(),
            "final_s": fin.s,
            "final_energy": fin.bondi,
            "final_c1": fin.c1(),
            "energy_quantum": settled,
            "elapsed_seconds": elapsed,
        }),
    )?;
    eprintln!(
        "evolved to s = {} ({:?}), final energy {:.9}, {} samples in {elapsed:.2}s",
        fin.s,
        tr.termination,
        fin.bondi,
        records.len()
    );
    Ok(())
}

fn bisection(a: BisectArgs) -> Result<()> {
    let s = a.config.load()?;
    let fam = family(&s, a.family)?;
    let (grid, cfg) = a.solver.resolve(&s, DEFAULT_N)?;
    let (def_lo, def_hi) = match fam {
        Family::Even => (3.0, 4.5),
        Family::Odd => (0.0, 1.0),
    };
    let blo = s.get(a.blo, "blo", def_lo)?;
    let bhi = s.get(a.bhi, "bhi", def_hi)?;
    let eps = s.get(a.eps, "eps", 1e-4)?;
    let d = ClassifierConfig::default();
    let ccfg = ClassifierConfig {
        margin: s.get(a.margin, "margin", d.margin)?,
        x_exp: s.get(a.x_exp, "x_exp", d.x_exp)?,
        decide_at: Some(s.get(a.decide_at, "decide_at", 2.0 * cfg.s_end)?),
        ..d
    };
    let save = s.switch(a.save_probes, "save_probes")?;
    let out = s.get(a.out, "out", PathBuf::from("bisect"))?;
    std::fs::create_dir_all(&out)?;

    let clock = Instant::now();
    let mut count = 0usize;
    let mut run_probe = |b: f64| -> wormhole_core::Result<Probe> {
        let (mut p, mut recs) = probe_with_records(fam, b, &grid, &cfg, &ccfg)?;
        if p.classification == Classification::Undecided {
            let longer = IntegratorConfig {
                s_end: 2.0 * cfg.s_end,
                ..cfg
            };
            (p, recs) = probe_with_records(fam, b, &grid, &longer, &ccfg)?;
        }
        eprintln!("probe {count:>3}: b = {b:.15} -> {:?} (s = {}, energy {:.9})", p.classification, p.s_final, p.bondi_final);
        if save {
            let path = out.join(format!("probe_{count:03}.csv"));
            io::write_trajectory_csv(&recs, io::create(&path)?)?;
        }
        count += 1;
        Ok(p)
    };
    let result = bisect_with(blo, bhi, eps, &mut run_probe)?;
    let elapsed = clock.elapsed().as_secs_f64();
    write_json_file(
        &out.join("bisection.json"),
        &json!({
            "command": "bisect",
            "version": env!("CARGO_PKG_VERSION"),
            "family": fam,
            "n": grid.n(),
            "bracket": [blo, bhi],
            "eps": eps,
            "integrator": cfg,
            "classifier": ccfg,
            "b_star": result.b_star,
            "b_lo": result.b_lo,
            "b_hi": result.b_hi,
            "bracket_width": result.bracket_width,
            "violations": result.violations,
            "probe_log": result.probe_log,
            "elapsed_seconds": elapsed,
        }),
    )?;
    println!("b* = {:.15} (bracket width {:.1e})", result.b_star, result.bracket_width);
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let s = a.config.load()?;
    let input: PathBuf = s.opt(a.input, "input")?.context("--input (or `input` in the config) is required")?;
    let fam = family(&s, a.family)?;
    let j = fam.chain_length();
    let p = s.get(a.exponent, "exponent", c1_exponent(j)?)?;
    let rows = io::read_trajectory_csv(io::open(&input)?)?;
    let records: Vec<DiagnosticsRecord> = rows.iter().map(|r| r.to_record()).collect();
    let window = match s.list(a.window, "window")? {
        Some(w) if w.len() == 2 => [w[0], w[1]],
        Some(w) => bail!("window needs two values, got {}", w.len()),
        None => select_fit_window(&records, &WindowCriteria::new(fam.upper_quantum(), p))?,
    };
    let result = fit_records(&records, window, p)?.with_prediction(a_physical(j)?);
    let out: Option<PathBuf> = s.opt(a.out, "out")?;
    let mut w = sink(out.as_deref())?;
    io::write_json(&result, &mut w)?;
    writeln!(w)?;
    Ok(())
}

fn ode_integrate(a: OdeIntegrateArgs) -> Result<()> {
    let s = a.config.load()?;
    let n = s.get(a.n_objects, "n_objects", 2)?;
    let t0 = s.get(a.t0, "t0", 1.0)?;
    let state0 = if s.switch(a.exact, "exact")? {
        exact_solution(n, t0)?
    } else {
        let r = s.list(a.r, "r")?.context("--r is required unless --exact is given")?;
        let rdot = s.list(a.rdot, "rdot")?.unwrap_or_else(|| vec![0.0; r.len()]);
        ChainState::new(n, r, rdot, t0)?
    };
    let cfg = IntegratorConfig {
        rel_tol: s.get(a.rel_tol, "rel_tol", 1e-12)?,
        abs_tol: s.get(a.abs_tol, "abs_tol", 1e-12)?,
        s_end: s.get(a.t_end, "t_end", 100.0)?,
        sample_interval: s.get(a.dt, "dt", 1.0)?,
        max_step: None,
    };
    let tr = evolve_chain(&state0, &cfg)?;
    let out: Option<PathBuf> = s.opt(a.out, "out")?;
    io::write_chain_csv(&tr, sink(out.as_deref())?)?;
    if let Some(path) = s.opt(a.summary, "summary")? {
        let energies: Vec<f64> = tr.states.iter().map(effective_energy).collect::<Result<_, _>>()?;
        let drift = energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max);
        write_json_file(
            &path,
            &json!({
                "command": "ode-integrate",
                "n_objects": n,
                "initial": state0,
                "integrator": cfg,
                "termination": tr.termination,
                "stats": tr.stats,
                "final": tr.last(),
                "energy_drift": drift,
            }),
        )?;
    }
    Ok(())
}

fn ode_series(a: OdeSeriesArgs) -> Result<()> {
    let s = a.config.load()?;
    let n = s.get(a.n_objects, "n_objects", 5)?;
    let mut params = SeriesParams::new(n, s.get(a.c, "c", 0.0)?)?;
    params.order = s.get(a.order, "order", params.order)?;
    let tau0 = s.get(a.tau_start, "tau_start", 8.0)?;
    let tau1 = s.get(a.tau_end, "tau_end", 16.0)?;
    let samples = s.get(a.samples, "samples", 81)?;
    if samples < 2 || !(tau1 > tau0) {
        bail!("need tau_end > tau_start and at least two samples");
    }
    let t0 = time_of_tau(n, tau0)?;
    let t1 = time_of_tau(n, tau1)?;
    let integrate = s.switch(a.integrate, "integrate")?;
    let series_at = |t: f64| asymptotic_solution(&params, t).map(|p| p.state);
    let states: Vec<ChainState> = if integrate {
        let cfg = IntegratorConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            s_end: t1,
            sample_interval: (t1 - t0) / (samples - 1) as f64,
            max_step: None,
        };
        evolve_chain(&series_at(t0)?, &cfg)?.states
    } else {
        (0..samples)
            .map(|i| {
                let tau = tau0 + (tau1 - tau0) * i as f64 / (samples - 1) as f64;
                series_at(time_of_tau(n, tau)?)
            })
            .collect::<Result<_, _>>()?
    };
    let out: Option<PathBuf> = s.opt(a.out, "out")?;
    io::write_chain_rows(&states, 2, sink(out.as_deref())?)?;
    if let Some(path) = s.opt(a.summary, "summary")? {
        let mut deviation: f64 = 0.0;
        for st in &states {
            let reference = series_at(st.t)?;
            for (x, y) in st.r.iter().zip(&reference.r) {
                deviation = deviation.max((x - y).abs() / y);
            }
        }
        let residuals: Vec<Value> = [tau0, tau1]
            .iter()
            .map(|&tau| -> Result<Value> {
                Ok(json!({ "tau": tau, "residual": series_residual(&params, time_of_tau(n, tau)?)? }))
            })
            .collect::<Result<_>>()?;
        write_json_file(
            &path,
            &json!({
                "command": "ode-series",
                "params": params,
                "tau": [tau0, tau1],
                "t": [t0, t1],
                "integrated": integrate,
                "max_relative_deviation_from_series": deviation,
                "residuals": residuals,
            }),
        )?;
    }
    Ok(())
}
