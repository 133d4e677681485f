//! Comparison table over JSON summaries.
//!
//! Inputs are recognised by their fields: fit results carry `A`, bisection
//! manifests `b_star`, evolution manifests `final_energy`.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use wormhole_core::config::Config;
use wormhole_core::io;

pub(crate) enum Row {
    Fit { a: f64, predicted: Option<f64>, exponent: f64, window: [f64; 2] },
    Threshold { family: String, n: u64, b_star: f64, width: f64 },
    Energy { label: String, energy: f64, quantum: Option<u64> },
}

pub(crate) fn classify(v: &Value) -> Option<Row> {
    let f = |k: &str| v.get(k).and_then(Value::as_f64);
    if let Some(a) = f("A") {
        let w = v.get("window")?.as_array()?;
        return Some(Row::Fit {
            a,
            predicted: f("A_predicted"),
            exponent: f("exponent")?,
            window: [w.first()?.as_f64()?, w.get(1)?.as_f64()?],
        });
    }
    if let Some(b_star) = f("b_star") {
        return Some(Row::Threshold {
            family: v.get("family").and_then(Value::as_str).unwrap_or("?").to_string(),
            n: v.get("n").and_then(Value::as_u64).unwrap_or(0),
            b_star,
            width: f("bracket_width").unwrap_or(f64::NAN),
        });
    }
    if let Some(energy) = f("final_energy") {
        let initial = v.get("initial")?;
        let label = match (initial.get("family").and_then(Value::as_str), initial.get("b").and_then(Value::as_f64)) {
            (Some(fam), Some(b)) => format!("{fam} b={b}"),
            _ => "saved state".to_string(),
        };
        let quantum = v.get("energy_quantum").and_then(|q| q.get("n")).and_then(Value::as_u64);
        return Some(Row::Energy { label, energy, quantum });
    }
    None
}

pub(crate) fn render(rows: &[(String, Row)]) -> String {
    let mut out = String::new();
    let fits: Vec<_> = rows.iter().filter(|r| matches!(r.1, Row::Fit { .. })).collect();
    let thresholds: Vec<_> = rows.iter().filter(|r| matches!(r.1, Row::Threshold { .. })).collect();
    let energies: Vec<_> = rows.iter().filter(|r| matches!(r.1, Row::Energy { .. })).collect();
    if !thresholds.is_empty() {
        out.push_str("## Thresholds\n\n| source | family | n | b* | bracket |\n|---|---|---|---|---|\n");
        for (src, row) in thresholds {
            if let Row::Threshold { family, n, b_star, width } = row {
                out.push_str(&format!("| {src} | {family} | {n} | {b_star:.10} | {width:.1e} |\n"));
            }
        }
        out.push('\n');
    }
    if !fits.is_empty() {
        out.push_str("## Expansion law\n\n| source | p | A fit | A predicted | deviation | window |\n|---|---|---|---|---|---|\n");
        for (src, row) in fits {
            if let Row::Fit { a, predicted, exponent, window } = row {
                let (pred, dev) = match predicted {
                    Some(p) => (format!("{p:.5}"), format!("{:.2}%", 100.0 * (a - p).abs() / p)),
                    None => ("-".into(), "-".into()),
                };
                out.push_str(&format!(
                    "| {src} | {exponent:.4} | {a:.5} | {pred} | {dev} | [{:.0}, {:.0}] |\n",
                    window[0], window[1]
                ));
            }
        }
        out.push('\n');
    }
    if !energies.is_empty() {
        out.push_str("## Final energies\n\n| source | run | energy | quantum |\n|---|---|---|---|\n");
        for (src, row) in energies {
            if let Row::Energy { label, energy, quantum } = row {
                let q = quantum.map_or("unsettled".to_string(), |n| format!("{}", 4 * n));
                out.push_str(&format!("| {src} | {label} | {energy:.6} | {q} |\n"));
            }
        }
        out.push('\n');
    }
    out
}

pub(crate) fn run(config: Config, mut inputs: Vec<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    if inputs.is_empty() {
        if let Some(list) = config.raw("inputs") {
            inputs = list.split(',').map(|s| PathBuf::from(s.trim())).collect();
        }
    }
    if inputs.is_empty() {
        bail!("no input files");
    }
    let out = out.or_else(|| config.raw("out").map(PathBuf::from));
    let mut rows = Vec::new();
    for path in &inputs {
        let v: Value = io::read_json(io::open(path)?).with_context(|| format!("reading {}", path.display()))?;
        let row = classify(&v).with_context(|| format!("{}: not a fit, bisection or evolution summary", path.display()))?;
        rows.push((path.display().to_string(), row));
    }
    let text = render(&rows);
    match out {
        Some(p) => {
            let mut w = io::create(&p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
