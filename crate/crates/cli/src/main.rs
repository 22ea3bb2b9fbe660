use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use swipt_core::analysis::diversity_grid;
use swipt_core::harness::{
    diversity_table, noise_check, parse_count, parse_config_text, run_pep, run_sweep, write_csv_file, write_results, ExperimentSpec,
    ResultRow, DIVERSITY_HEADER, NOISE_CHECK_HEADER,
};
use swipt_core::noise::NoiseEnvironment;
use swipt_core::phy::SchemeVariant;

#[derive(Parser, Debug)]
#[command(name = "swipt-pep", version, about = "PEP curves, sweeps and diversity orders for a two-relay SWIPT link under Class-A noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytical bound and Monte Carlo PEP over an SNR grid.
    Pep(Common),
    /// Relay-placement, power-splitting or spatial-model sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// relay_scenario, theta_equal, theta_complement or model_compare.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// High-SNR slope of the analytical bound.
    Diversity(Common),
    /// Mixture variance and density normalisation of the noise model.
    NoiseCheck {
        #[command(flatten)]
        common: Common,
        /// Samples per environment; sized automatically when omitted.
        #[arg(long)]
        samples: Option<String>,
    },
}

/// Flags shared by all subcommands. Each one overrides the same key in
/// `--config`.
#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    /// HI, MI, NG or AWGN.
    #[arg(long)]
    env: Option<String>,
    /// blind, csi, or a combined tag such as blind-aeh.
    #[arg(long)]
    scheme: Option<String>,
    /// ieh or aeh.
    #[arg(long)]
    eh: Option<String>,
    /// model1 or model2.
    #[arg(long)]
    spatial: Option<String>,
    #[arg(long = "d-sr1", alias = "d_sr1")]
    d_sr1: Option<String>,
    #[arg(long = "d-sr2", alias = "d_sr2")]
    d_sr2: Option<String>,
    #[arg(long)]
    theta1: Option<String>,
    #[arg(long)]
    theta2: Option<String>,
    #[arg(long)]
    eta1: Option<String>,
    #[arg(long)]
    eta2: Option<String>,
    /// Path-loss exponent.
    #[arg(long)]
    lambda: Option<String>,
    /// Source power in watts.
    #[arg(long = "ps", alias = "Ps")]
    ps: Option<String>,
    /// Class-A truncation order.
    #[arg(long = "m", alias = "M")]
    m: Option<String>,
    /// SNR grid in dB, `start:stop:step` or a comma list.
    #[arg(long = "snr", alias = "snr-db", alias = "snr_db")]
    snr_db: Option<String>,
    /// Monte Carlo trials per point, `0` for analytical only.
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// equivalent or composite.
    #[arg(long = "relay-noise", alias = "relay_noise")]
    relay_noise: Option<String>,
}

impl Common {
    /// Configuration file values with command-line overrides applied.
    fn merged(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                parse_config_text(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => BTreeMap::new(),
        };
        let flags: [(&str, Option<String>); 19] = [
            ("env", self.env.clone()),
            ("scheme", self.scheme.clone()),
            ("eh", self.eh.clone()),
            ("spatial", self.spatial.clone()),
            ("d_sr1", self.d_sr1.clone()),
            ("d_sr2", self.d_sr2.clone()),
            ("theta1", self.theta1.clone()),
            ("theta2", self.theta2.clone()),
            ("eta1", self.eta1.clone()),
            ("eta2", self.eta2.clone()),
            ("lambda", self.lambda.clone()),
            ("Ps", self.ps.clone()),
            ("M", self.m.clone()),
            ("snr_db", self.snr_db.clone()),
            ("trials", self.trials.clone()),
            ("seed", self.seed.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("relay_noise", self.relay_noise.clone()),
            ("workers", self.workers.map(|w| w.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        Ok(map)
    }
}

/// Splits off the keys the core spec does not understand.
fn take_workers(map: &mut BTreeMap<String, String>) -> Result<Option<usize>> {
    match map.remove("workers") {
        Some(w) => {
            let n = parse_count(&w)? as usize;
            if n == 0 {
                bail!("workers must be at least 1");
            }
            Ok(Some(n))
        }
        None => Ok(None),
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().context("building worker pool")
}

fn emit_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<()> {
    for r in rows {
        println!("{r}");
    }
    if let Some(path) = out {
        write_results(path, rows)?;
        println!("wrote {} rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn emit_table(header: &[&str], records: &[Vec<String>], out: Option<&Path>) -> Result<()> {
    println!("{}", header.join(","));
    for r in records {
        println!("{}", r.join(","));
    }
    if let Some(path) = out {
        write_csv_file(path, header, records)?;
        println!("wrote {} rows to {}", records.len(), path.display());
    }
    Ok(())
}

fn pep(common: &Common) -> Result<()> {
    let mut map = common.merged()?;
    let workers = take_workers(&mut map)?;
    let spec = ExperimentSpec::from_pairs(&map)?;
    let rows = pool(workers)?.install(|| run_pep(&spec))?;
    emit_rows(&rows, spec.output.as_deref())
}

fn sweep(common: &Common, sweep: Option<&str>) -> Result<()> {
    let mut map = common.merged()?;
    if let Some(s) = sweep {
        map.insert("sweep".into(), s.into());
    }
    if !map.contains_key("sweep") {
        bail!("sweep needs --sweep or a `sweep` key in the config");
    }
    let workers = take_workers(&mut map)?;
    let spec = ExperimentSpec::from_pairs(&map)?;
    let rows = pool(workers)?.install(|| run_sweep(&spec))?;
    emit_rows(&rows, spec.output.as_deref())
}

fn diversity(common: &Common) -> Result<()> {
    let mut map = common.merged()?;
    let workers = take_workers(&mut map)?;
    let variants: Vec<SchemeVariant> = if map.contains_key("scheme") || map.contains_key("eh") {
        vec![ExperimentSpec::from_pairs(&map)?.config.variant]
    } else {
        SchemeVariant::ALL.to_vec()
    };
    let environments: Vec<NoiseEnvironment> = match map.get("env") {
        Some(e) => vec![e.parse()?],
        None => NoiseEnvironment::ALL.to_vec(),
    };
    let explicit_grid = map.contains_key("snr_db");
    let spec = ExperimentSpec::from_pairs(&map)?;
    let grid = if explicit_grid { spec.snr_grid_db.clone() } else { diversity_grid() };
    let table = pool(workers)?.install(|| diversity_table(&spec.config, &variants, &environments, &grid, &spec.analysis))?;
    let records: Vec<Vec<String>> = table.iter().map(|r| r.record()).collect();
    emit_table(&DIVERSITY_HEADER, &records, spec.output.as_deref())
}

fn noise(common: &Common, samples: Option<&str>) -> Result<()> {
    let mut map = common.merged()?;
    let workers = take_workers(&mut map)?;
    let environments: Vec<NoiseEnvironment> = match map.get("env") {
        Some(e) => vec![e.parse()?],
        None => vec![
            NoiseEnvironment::HighlyImpulsive,
            NoiseEnvironment::ModeratelyImpulsive,
            NoiseEnvironment::NearGaussian,
        ],
    };
    let samples = samples.map(parse_count).transpose()?;
    let spec = ExperimentSpec::from_pairs(&map)?;
    let checks = pool(workers)?.install(|| noise_check(&environments, spec.config.truncation, samples, spec.seed))?;
    let records: Vec<Vec<String>> = checks.iter().map(|c| c.record()).collect();
    emit_table(&NOISE_CHECK_HEADER, &records, spec.output.as_deref())?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.relative_error > 0.01 || (c.pdf_integral - 1.0).abs() > 1e-6)
        .map(|c| c.environment.to_string())
        .collect();
    if !failed.is_empty() {
        bail!("noise check failed for {}", failed.join(", "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Pep(c) => pep(c),
        Command::Sweep { common, sweep: s } => sweep(common, s.as_deref()),
        Command::Diversity(c) => diversity(c),
        Command::NoiseCheck { common, samples } => noise(common, samples.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
