//! Command implementations behind the `fclsim` binary.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::analytics::{analyze_trial, AnalyticsReport};
use crate::config_file::FileConfig;
use crate::parallel::map_trials;
use crate::sim::{self, FclObservation, RunStats, SimConfig, TickRecord};
use crate::single_turn::{render_table, run_scenarios, ScenarioRow};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TickFormat {
    Csv,
    Jsonl,
    Both,
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub trials: usize,
    /// First seed; defaults to the config's seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub force: bool,
    pub format: TickFormat,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialArtifact {
    pub trial: usize,
    pub seed: u64,
    /// Tick files, relative to the output directory.
    pub ticks: Vec<String>,
    pub fcl_observations: Option<String>,
    pub stats: RunStats,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimConfig,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub format: TickFormat,
    pub trials: Vec<TrialArtifact>,
    pub wall_seconds: f64,
}

fn write_ticks(dir: &Path, stem: &str, records: &[TickRecord], format: TickFormat) -> Result<Vec<String>> {
    let mut names = Vec::new();
    if matches!(format, TickFormat::Csv | TickFormat::Both) {
        let name = format!("{stem}.csv");
        let f = File::create(dir.join(&name)).with_context(|| format!("creating {name}"))?;
        sim::write_csv(records, BufWriter::new(f))?;
        names.push(name);
    }
    if matches!(format, TickFormat::Jsonl | TickFormat::Both) {
        let name = format!("{stem}.jsonl");
        let f = File::create(dir.join(&name)).with_context(|| format!("creating {name}"))?;
        sim::write_jsonl(records, BufWriter::new(f))?;
        names.push(name);
    }
    Ok(names)
}

fn write_observations(path: &Path, obs: &[FclObservation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for o in obs {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}

fn read_observations(path: &Path) -> Result<Vec<FclObservation>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

/// Runs `trials` simulations with consecutive seeds and writes one tick file
/// per trial plus a manifest.
pub fn cmd_run(args: &RunArgs) -> Result<RunManifest> {
    let file = FileConfig::load(&args.config, &args.overrides)?;
    let mut cfg = file.sim_config()?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let out = &args.out;
    if out.join(MANIFEST).exists() && !args.force {
        bail!("{} already holds a run; pass --force to overwrite", out.display());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seeds: Vec<u64> = (0..args.trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let started = Instant::now();
    let trials: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
    let results = map_trials(&trials, args.jobs, |&(i, seed)| -> Result<TrialArtifact> {
        let t0 = Instant::now();
        let mut c = cfg.clone();
        c.seed = seed;
        let output = sim::run(&c)?;
        let stem = format!("trial_{i:03}_seed_{seed}");
        let ticks = write_ticks(out, &stem, &output.records, args.format)?;
        let fcl_observations = if c.n_fcl > 0 {
            let name = format!("{stem}_fcl.csv");
            write_observations(&out.join(&name), &output.fcl_observations)?;
            Some(name)
        } else {
            None
        };
        Ok(TrialArtifact {
            trial: i,
            seed,
            ticks,
            fcl_observations,
            stats: output.stats,
            wall_seconds: t0.elapsed().as_secs_f64(),
        })
    });
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config: cfg,
        seeds,
        out_dir: out.display().to_string(),
        format: args.format,
        trials,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let f = File::create(out.join(MANIFEST))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub sd: Option<f64>,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Self { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub report: AnalyticsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub stats: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub horizons: Vec<usize>,
    pub steps_per_bar: u64,
    pub trials: Vec<TrialReport>,
    pub summary: Vec<SummaryRow>,
}

impl AnalyzeReport {
    pub fn summary(&self, metric: &str) -> Option<&MeanSd> {
        self.summary.iter().find(|r| r.metric == metric).map(|r| &r.stats)
    }
}

fn read_ticks(dir: &Path, name: &str) -> Result<Vec<TickRecord>> {
    let path = dir.join(name);
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let records = if name.ends_with(".jsonl") {
        sim::read_jsonl(BufReader::new(f))
    } else {
        sim::read_csv(BufReader::new(f))
    };
    records.with_context(|| format!("reading {}", path.display()))
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        bail!("{} has no {MANIFEST}; nothing to analyze", dir.display());
    }
    let f = File::open(&path)?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

/// Metric names: `beta_h_<T>`, `kurtosis`, `acf_abs_<lag>`, `ret_vol_corr`.
pub fn summarize(trials: &[TrialReport], horizons: &[usize]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut push = |metric: String, values: Vec<f64>| {
        if let Some(stats) = MeanSd::of(&values) {
            rows.push(SummaryRow { metric, stats });
        }
    };
    for &h in horizons {
        let v = trials
            .iter()
            .filter_map(|t| t.report.regressions.iter().find(|r| r.horizon_days == h))
            .map(|r| r.beta_h)
            .collect();
        push(format!("beta_h_{h}"), v);
    }
    let facts: Vec<_> = trials.iter().filter_map(|t| t.report.stylized_facts.as_ref()).collect();
    push("kurtosis".into(), facts.iter().map(|f| f.kurtosis).collect());
    for lag in crate::analytics::ACF_LAGS {
        push(
            format!("acf_abs_{lag}"),
            facts.iter().filter_map(|f| f.acf_abs.get(&lag).copied()).collect(),
        );
    }
    push("ret_vol_corr".into(), facts.iter().map(|f| f.ret_vol_corr).collect());
    rows
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn write_tables(dir: &Path, report: &AnalyzeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("beta_h.csv"))?;
    w.write_record(["trial", "seed", "horizon_days", "beta_h", "beta_se", "intercept", "n_obs"])?;
    for t in &report.trials {
        for r in &t.report.regressions {
            w.write_record([
                t.trial.to_string(),
                t.seed.to_string(),
                r.horizon_days.to_string(),
                format!("{:?}", r.beta_h),
                format!("{:?}", r.beta_se),
                format!("{:?}", r.intercept),
                r.n_obs.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("stylized_facts.csv"))?;
    w.write_record(["trial", "seed", "kurtosis", "acf_abs_1", "acf_abs_5", "acf_abs_10", "ret_vol_corr"])?;
    for t in &report.trials {
        let Some(f) = &t.report.stylized_facts else { continue };
        let acf = |l: usize| fmt_opt(f.acf_abs.get(&l).copied());
        w.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            format!("{:?}", f.kurtosis),
            acf(1),
            acf(5),
            acf(10),
            format!("{:?}", f.ret_vol_corr),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["metric", "mean", "sd", "n"])?;
    for r in &report.summary {
        w.write_record([
            r.metric.clone(),
            format!("{:?}", r.stats.mean),
            fmt_opt(r.stats.sd),
            r.stats.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Analyzes every trial listed in the run manifest and writes `report.json`
/// plus CSV tables next to the tick files.
pub fn cmd_analyze(dir: &Path, horizons: &[usize], steps_per_bar: u64) -> Result<AnalyzeReport> {
    let manifest = load_manifest(dir)?;
    if manifest.trials.is_empty() {
        bail!("manifest lists no trials");
    }
    let cfg = &manifest.config;
    let fcl_agents: Vec<usize> = (0..cfg.n_fcl).collect();
    let mut trials = Vec::new();
    for t in &manifest.trials {
        let name = t
            .ticks
            .iter()
            .find(|n| n.ends_with(".csv"))
            .or_else(|| t.ticks.first())
            .with_context(|| format!("trial {} lists no tick file", t.trial))?;
        let records = read_ticks(dir, name)?;
        let proportions: Vec<f64> = match &t.fcl_observations {
            Some(n) => read_observations(&dir.join(n))?
                .into_iter()
                .filter_map(|o| o.asset_proportion)
                .collect(),
            None => Vec::new(),
        };
        let report = analyze_trial(&records, &cfg.day_structure, steps_per_bar, horizons, &fcl_agents, &proportions);
        trials.push(TrialReport {
            trial: t.trial,
            seed: t.seed,
            report,
        });
    }
    let summary = summarize(&trials, horizons);
    let report = AnalyzeReport {
        horizons: horizons.to_vec(),
        steps_per_bar,
        trials,
        summary,
    };
    let f = File::create(dir.join(REPORT))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    write_tables(dir, &report)?;
    Ok(report)
}

pub struct SingleTurnOutput {
    pub rows: Vec<ScenarioRow>,
    pub table: String,
    pub warning: Option<String>,
}

/// Runs the four scenarios for every configured provider.
pub fn cmd_single_turn(config: &Path, overrides: &[String]) -> Result<SingleTurnOutput> {
    let file = FileConfig::load(config, overrides)?;
    let base = file.scenario_config()?;
    let mut rows = Vec::new();
    for p in file.single_turn_providers() {
        rows.push(run_scenarios(&base, &p)?);
    }
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| r.failure_rate() > 0.5)
        .map(|r| format!("{} ({:.0}% failed)", r.provider, 100.0 * r.failure_rate()))
        .collect();
    let warning = (!failing.is_empty()).then(|| {
        format!(
            "WARNING: more than half of the decisions failed for: {}. Check the endpoint and model settings.",
            failing.join(", ")
        )
    });
    Ok(SingleTurnOutput {
        table: render_table(&rows),
        rows,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.sd, m.n), (2.0, Some(1.0), 3));
        assert_eq!(MeanSd::of(&[5.0]).unwrap().sd, None);
        assert!(MeanSd::of(&[]).is_none());
    }

    #[test]
    fn analyze_empty_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_analyze(dir.path(), &[10], 5).is_err());
    }
}
