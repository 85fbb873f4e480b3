use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use tmula::diagnostics::{
    ksd_squared, subsample_rows, summarize_chains, DiagnosticsReport, KsdPoint, ReportMetadata,
};
use tmula::experiments::{ExperimentConfig, ExperimentReport};
use tmula::samplers::load_chain_csv;
use tmula::targets::LogDensity;

use crate::Failure;

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Directory written by `sample` or `run` (needs config.json and chains/).
    #[arg(long)]
    pub chains: PathBuf,
    /// Burn-in in steps for every scheme (default: each scheme's configured burn-in).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Retained states per chain used for KSD; 0 disables KSD.
    #[arg(long, default_value_t = 1000)]
    pub ksd_points: usize,
    /// Output report (default: <chains>/diagnostics.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct ChainFile {
    replicate: usize,
    chain_id: u64,
    path: PathBuf,
}

/// Parses `r{rep}_c{id}.csv`.
fn parse_chain_name(name: &str) -> Option<(usize, u64)> {
    let stem = name.strip_suffix(".csv")?.strip_prefix('r')?;
    let (rep, id) = stem.split_once("_c")?;
    Some((rep.parse().ok()?, id.parse().ok()?))
}

fn chain_files(dir: &Path) -> Result<Vec<ChainFile>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::config(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((replicate, chain_id)) = parse_chain_name(&name) {
            out.push(ChainFile {
                replicate,
                chain_id,
                path: entry.path(),
            });
        }
    }
    out.sort_by_key(|c| (c.replicate, c.chain_id));
    Ok(out)
}

/// Divergence steps recorded in report.json, keyed by (label, replicate, chain id).
fn recorded_divergences(dir: &Path) -> BTreeMap<(String, usize, u64), usize> {
    let mut out = BTreeMap::new();
    let Ok(text) = std::fs::read_to_string(dir.join("report.json")) else {
        return out;
    };
    let Ok(report) = serde_json::from_str::<ExperimentReport>(&text) else {
        return out;
    };
    for run in &report.runs {
        for e in &run.extremes {
            if let Some(k) = e.diverged_at {
                out.insert((run.label.clone(), run.replicate, e.chain_id), k);
            }
        }
    }
    out
}

pub fn run(a: &DiagnoseArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::load(a.chains.join("config.json"))?;
    let target = config.target.build()?;
    let tfs = config.test_functions()?;
    let d = target.dim();
    for tf in &tfs {
        tf.check_dim(d)?;
    }
    let divergences = recorded_divergences(&a.chains);
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    let mut max_steps = 0;
    let mut max_chains = 0;
    let mut any = false;

    for run in &config.schemes {
        let label = run.label();
        let dir = a.chains.join("chains").join(&label);
        if !dir.is_dir() {
            notes.push(format!("{label}: no chain files"));
            continue;
        }
        let files = chain_files(&dir)?;
        if files.is_empty() {
            notes.push(format!("{label}: no chain files"));
            continue;
        }
        any = true;
        let burn_in = a.burn_in.unwrap_or(run.burn_in);
        max_steps = max_steps.max(run.steps);
        max_chains = max_chains.max(files.len());
        if run.thin > 1 {
            notes.push(format!("{label}: statistics use the stored states (thin {})", run.thin));
        }

        let mut loaded = Vec::with_capacity(files.len());
        for f in &files {
            let (steps, states, dim) = load_chain_csv(&f.path)?;
            if dim != d {
                return Err(Failure::config(format!(
                    "{}: {dim} columns, target dimension {d}",
                    f.path.display()
                )));
            }
            let first = steps.iter().position(|&k| k >= burn_in).unwrap_or(steps.len());
            let seed = config.seed.wrapping_add(f.replicate as u64);
            let diverged = divergences.get(&(label.clone(), f.replicate, f.chain_id)).copied();
            loaded.push((f, seed, diverged, first, states));
        }

        let mut ksd = Vec::new();
        if a.ksd_points > 0 {
            for (_, _, diverged, first, states) in &loaded {
                if diverged.is_some() {
                    continue;
                }
                let pts = subsample_rows(states, d, *first, a.ksd_points);
                if pts.is_empty() {
                    continue;
                }
                let k2 = ksd_squared(
                    &pts,
                    d,
                    |y, s| target.grad_log_density_into(y, s),
                    &config.diagnostics.kernel,
                    config.diagnostics.ksd_u_statistic,
                )?;
                ksd.push(KsdPoint {
                    samples: pts.len() / d,
                    ksd: k2.max(0.0).sqrt(),
                });
            }
        }

        for (tf, spec) in tfs.iter().zip(&config.test_functions) {
            let chains: Vec<(u64, u64, Option<usize>, Vec<f64>)> = loaded
                .iter()
                .map(|(f, seed, diverged, first, states)| {
                    let series = states[first * d..].chunks(d).map(|y| tf.eval(y)).collect();
                    (f.chain_id, *seed, *diverged, series)
                })
                .collect();
            let mut entry = summarize_chains(
                &label,
                run.h,
                tf,
                spec.truth,
                &chains,
                config.diagnostics.checkpoints,
            );
            entry.ksd = ksd.clone();
            entries.push(entry);
        }
    }
    if !any {
        return Err(Failure::config(format!(
            "no chain files under {}",
            a.chains.join("chains").display()
        )));
    }

    let report = DiagnosticsReport {
        metadata: ReportMetadata {
            seeds: config.replicate_seeds(),
            steps: max_steps,
            burn_in: a.burn_in.unwrap_or_else(|| config.schemes.iter().map(|r| r.burn_in).max().unwrap_or(0)),
            n_chains: max_chains,
            notes,
        },
        entries,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    let out = a.out.clone().unwrap_or_else(|| a.chains.join("diagnostics.json"));
    std::fs::write(&out, json).map_err(|e| Failure::config(format!("cannot write {}: {e}", out.display())))?;
    for e in &report.entries {
        println!(
            "{} {}: mean {} avar {} diverged {}/{}",
            e.scheme,
            e.phi,
            e.mean.map_or("n/a".into(), |v| format!("{v:.6}")),
            e.avar.map_or("n/a".into(), |v| format!("{v:.4e}")),
            e.diverged_chains,
            e.n_chains
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
