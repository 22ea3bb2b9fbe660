//! Experiment orchestration: Monte Carlo and analytical PEP curves, sweeps,
//! configuration parsing and CSV output.
//!
//! Monte Carlo trials are split into chunks of [`CHUNK_TRIALS`]. Chunk `k` of
//! SNR point `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `(i << 32) | k`, and chunk results are reduced in chunk order, so output
//! is independent of how rayon schedules the chunks.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{diversity_order, pep_bound, pep_curve, AnalysisOptions};
use crate::channel::{FadingRealization, Topology};
use crate::error::{Error, Result};
use crate::noise::{sample_complex_gaussian, McaParams, NoiseEnvironment, SpatialModel};
use crate::phy::{
    conditional_pairwise_error, pairwise_error, slot_noise_variances, synthesize_frame, EffectiveGains, RelayNoise, RelayParams,
    SchemeVariant, SystemConfig,
};
use crate::specfun::{quad_finite, quad_semi_infinite, QuadratureSpec};

pub const CHUNK_TRIALS: u64 = 10_000;
pub const MIN_TRIALS: u64 = 1_000;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Relay placements `(d_sr1, d_sr2)` of scenarios 1 to 6.
pub const RELAY_SCENARIOS: [[f64; 2]; 6] = [[0.8, 0.8], [0.5, 0.8], [0.2, 0.8], [0.5, 0.5], [0.5, 0.2], [0.2, 0.2]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    RelayScenarios,
    ThetaEqual,
    ThetaComplement,
    ModelCompare,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "relay_scenario" | "relay_scenarios" | "scenarios" => Ok(Sweep::RelayScenarios),
            "theta_equal" => Ok(Sweep::ThetaEqual),
            "theta_complement" => Ok(Sweep::ThetaComplement),
            "model_compare" => Ok(Sweep::ModelCompare),
            other => Err(Error::Config(format!(
                "unknown sweep `{other}` (expected relay_scenario, theta_equal, theta_complement or model_compare)"
            ))),
        }
    }
}

/// `θ1` values of the PS-ratio sweeps: 0.02, 0.04, ..., 0.98.
pub fn theta_grid() -> Vec<f64> {
    (1..=49).map(|k| k as f64 * 0.02).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub snr_grid_db: Vec<f64>,
    /// Monte Carlo trials per point; zero runs the analytical bound only.
    pub trials: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub sweep: Option<Sweep>,
    pub relay_noise: RelayNoise,
    pub analysis: AnalysisOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            config: SystemConfig::default(),
            snr_grid_db: parse_snr_grid("0:45:5").expect("default grid parses"),
            trials: 0,
            seed: 1,
            output: None,
            sweep: None,
            relay_noise: RelayNoise::Equivalent,
            analysis: AnalysisOptions::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid contains non-finite values".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.trials != 0 && self.trials < MIN_TRIALS {
            return Err(Error::Config(format!("Monte Carlo needs at least {MIN_TRIALS} trials, got {}", self.trials)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub scheme: &'static str,
    pub eh_mode: &'static str,
    pub noise_env: NoiseEnvironment,
    pub spatial_model: SpatialModel,
    pub d_sr1: f64,
    pub d_sr2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub pep_analytical: Option<f64>,
    /// Analytical value exceeds one.
    pub pep_chernoff_flag: bool,
    pub pep_mc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 16] = [
    "snr_db",
    "scheme",
    "eh_mode",
    "noise_env",
    "spatial_model",
    "d_sr1",
    "d_sr2",
    "theta1",
    "theta2",
    "pep_analytical",
    "pep_chernoff_flag",
    "pep_mc",
    "ci_low",
    "ci_high",
    "trials",
    "seed",
];

/// Probabilities below `1e-4` in scientific notation, others in fixed point.
pub fn format_probability(p: f64) -> String {
    if p.abs() < 1e-4 {
        format!("{p:.6e}")
    } else {
        format!("{p:.8}")
    }
}

fn opt_prob(p: Option<f64>) -> String {
    p.map(format_probability).unwrap_or_default()
}

impl ResultRow {
    fn blank(config: &SystemConfig, snr_db: f64, seed: u64) -> Self {
        let d = config.topology.source_relay();
        Self {
            snr_db,
            scheme: config.variant.scheme_tag(),
            eh_mode: config.variant.eh_tag(),
            noise_env: config.environment,
            spatial_model: config.spatial,
            d_sr1: d[0],
            d_sr2: d[1],
            theta1: config.relays[0].theta(),
            theta2: config.relays[1].theta(),
            pep_analytical: None,
            pep_chernoff_flag: false,
            pep_mc: None,
            ci_low: None,
            ci_high: None,
            trials: 0,
            seed,
        }
    }

    pub fn record(&self) -> [String; 16] {
        [
            format!("{}", self.snr_db),
            self.scheme.to_string(),
            self.eh_mode.to_string(),
            self.noise_env.to_string(),
            self.spatial_model.to_string(),
            format!("{}", self.d_sr1),
            format!("{}", self.d_sr2),
            format!("{}", round_grid(self.theta1)),
            format!("{}", round_grid(self.theta2)),
            opt_prob(self.pep_analytical),
            self.pep_chernoff_flag.to_string(),
            opt_prob(self.pep_mc),
            opt_prob(self.ci_low),
            opt_prob(self.ci_high),
            self.trials.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Strips accumulation noise such as `0.30000000000000004` from grid values.
fn round_grid(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

/// Serialises rows with a header to any writer.
pub fn write_rows<W: Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes a complete CSV document. The content is rendered in memory first
/// so a failure never leaves a partial file.
pub fn write_csv_file(path: &Path, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in records {
            w.write_record(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    std::fs::write(path, buf).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let records: Vec<Vec<String>> = rows.iter().map(|r| r.record().to_vec()).collect();
    write_csv_file(path, &CSV_HEADER, &records)
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let high = if errors == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    (low, high)
}

/// Accumulated Monte Carlo results for one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McTally {
    pub errors: u64,
    pub trials: u64,
    /// `Σ P(error | fading, states)` over the simulated frames.
    pub conditional_sum: f64,
    /// `Σ P(1 - P)`; the variance of the error indicator around its
    /// conditional mean.
    pub conditional_var_sum: f64,
}

impl McTally {
    fn merge(mut self, other: McTally) -> Self {
        self.errors += other.errors;
        self.trials += other.trials;
        self.conditional_sum += other.conditional_sum;
        self.conditional_var_sum += other.conditional_var_sum;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSummary {
    pub pep: f64,
    pub ci: (f64, f64),
    pub trials: u64,
    /// Average conditional error probability over the same frames.
    pub semi_analytic: f64,
    /// Standard deviation of `pep - semi_analytic`.
    pub sigma: f64,
}

impl From<McTally> for McSummary {
    fn from(t: McTally) -> Self {
        let n = t.trials as f64;
        Self {
            pep: t.errors as f64 / n,
            ci: wilson_interval(t.errors, t.trials),
            trials: t.trials,
            semi_analytic: t.conditional_sum / n,
            sigma: (t.conditional_var_sum / n).sqrt() / n.sqrt(),
        }
    }
}

fn chunk_rng(seed: u64, point: u32, chunk: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | chunk as u64);
    rng
}

/// Gains per relay-state pair, indexed `r1 * M + r2`.
fn gain_table(config: &SystemConfig, params: &McaParams) -> Vec<EffectiveGains> {
    let beta = params.variance_factors();
    let m = beta.len();
    (0..m * m)
        .map(|k| EffectiveGains::new(config, params.mean_power(), [beta[k / m], beta[k % m]]))
        .collect()
}

fn run_chunk(config: &SystemConfig, params: &McaParams, table: &[EffectiveGains], spec: &ExperimentSpec, point: u32, chunk: u32, trials: u64) -> McTally {
    let mut rng = chunk_rng(spec.seed, point, chunk);
    let pair = spec.analysis.pair;
    let m = params.truncation();
    let mut tally = McTally {
        trials,
        ..McTally::default()
    };
    for _ in 0..trials {
        let states = params.sample_frame_states(config.spatial, &mut rng);
        let gains = &table[states.relays[0] * m + states.relays[1]];
        let beta_d = params.variance_factors()[states.destination];
        let fading = FadingRealization::sample(&mut rng);
        let frame = synthesize_frame(config, gains, &fading, beta_d, pair.sent, spec.relay_noise, &mut rng);
        if pairwise_error(&frame, &pair) {
            tally.errors += 1;
        }
        let var = slot_noise_variances(config, gains, &fading, beta_d, spec.relay_noise);
        let p = conditional_pairwise_error(&frame.channel, &pair, &var);
        tally.conditional_sum += p;
        tally.conditional_var_sum += p * (1.0 - p);
    }
    tally
}

/// Monte Carlo estimate at one SNR point. `point` selects the generator
/// stream family and should be the point's grid index.
pub fn monte_carlo_point(spec: &ExperimentSpec, config: &SystemConfig, snr_db: f64, point: u32) -> Result<McSummary> {
    if spec.trials < MIN_TRIALS {
        return Err(Error::Config(format!("Monte Carlo needs at least {MIN_TRIALS} trials, got {}", spec.trials)));
    }
    let params = config.noise_params(snr_db)?;
    let table = gain_table(config, &params);
    let chunks = spec.trials.div_ceil(CHUNK_TRIALS);
    if chunks > u32::MAX as u64 {
        return Err(Error::Config(format!("too many trials: {}", spec.trials)));
    }
    let tallies: Vec<McTally> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = CHUNK_TRIALS.min(spec.trials - k * CHUNK_TRIALS);
            run_chunk(config, &params, &table, spec, point, k as u32, n)
        })
        .collect();
    let total = tallies.into_iter().fold(McTally::default(), McTally::merge);
    Ok(total.into())
}

fn fill_mc(row: &mut ResultRow, mc: &McSummary) {
    row.pep_mc = Some(mc.pep);
    row.ci_low = Some(mc.ci.0);
    row.ci_high = Some(mc.ci.1);
    row.trials = mc.trials;
}

/// Monte Carlo rows over the spec's SNR grid.
pub fn run_monte_carlo(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.snr_grid_db.len());
    for (i, &snr) in spec.snr_grid_db.iter().enumerate() {
        let mc = monte_carlo_point(spec, &spec.config, snr, i as u32)?;
        let mut row = ResultRow::blank(&spec.config, snr, spec.seed);
        fill_mc(&mut row, &mc);
        rows.push(row);
    }
    Ok(rows)
}

fn analytical_rows(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Vec<ResultRow>> {
    let curve = pep_curve(config, &spec.snr_grid_db, &spec.analysis)?;
    Ok(spec
        .snr_grid_db
        .iter()
        .zip(curve)
        .map(|(&snr, est)| {
            let mut row = ResultRow::blank(config, snr, spec.seed);
            row.pep_analytical = Some(est.value);
            row.pep_chernoff_flag = est.saturated;
            row
        })
        .collect())
}

/// Analytical bound rows over the spec's SNR grid.
pub fn run_analytical(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    analytical_rows(spec, &spec.config)
}

fn run_config(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Vec<ResultRow>> {
    let mut rows = analytical_rows(spec, config)?;
    if spec.trials > 0 {
        for (i, row) in rows.iter_mut().enumerate() {
            let mc = monte_carlo_point(spec, config, row.snr_db, i as u32)?;
            fill_mc(row, &mc);
        }
    }
    Ok(rows)
}

/// Analytical bound plus, when `trials > 0`, Monte Carlo for the spec's
/// configuration.
pub fn run_pep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    run_config(spec, &spec.config)
}

fn with_relays(config: &SystemConfig, theta: [f64; 2]) -> Result<SystemConfig> {
    let relays = [
        RelayParams::new(theta[0], config.relays[0].eta())?,
        RelayParams::new(theta[1], config.relays[1].eta())?,
    ];
    Ok(SystemConfig {
        relays,
        ..config.clone()
    })
}

/// Configurations visited by a sweep, in output order.
pub fn sweep_configs(config: &SystemConfig, sweep: Sweep) -> Result<Vec<SystemConfig>> {
    let lambda = config.topology.path_loss_exponent();
    match sweep {
        Sweep::RelayScenarios => RELAY_SCENARIOS
            .iter()
            .map(|&d| {
                Ok(SystemConfig {
                    topology: Topology::new(d, lambda)?,
                    ..config.clone()
                })
            })
            .collect(),
        Sweep::ThetaEqual => theta_grid().into_iter().map(|t| with_relays(config, [t, t])).collect(),
        Sweep::ThetaComplement => theta_grid().into_iter().map(|t| with_relays(config, [t, 1.0 - t])).collect(),
        Sweep::ModelCompare => Ok([SpatialModel::Dependent, SpatialModel::Independent]
            .into_iter()
            .map(|spatial| SystemConfig {
                spatial,
                ..config.clone()
            })
            .collect()),
    }
}

/// Runs the spec's sweep. Rows are grouped by swept configuration, except
/// for `ModelCompare`, which interleaves Model I and Model II per SNR.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let sweep = spec
        .sweep
        .ok_or_else(|| Error::Config("no sweep selected (relay_scenario, theta_equal, theta_complement or model_compare)".into()))?;
    let configs = sweep_configs(&spec.config, sweep)?;
    let blocks: Vec<Vec<ResultRow>> = configs.iter().map(|c| run_config(spec, c)).collect::<Result<_>>()?;
    if sweep == Sweep::ModelCompare {
        let n = spec.snr_grid_db.len();
        let mut rows = Vec::with_capacity(2 * n);
        for i in 0..n {
            rows.push(blocks[0][i].clone());
            rows.push(blocks[1][i].clone());
        }
        Ok(rows)
    } else {
        Ok(blocks.into_iter().flatten().collect())
    }
}

/// `θ1` minimising the analytical PEP among rows at `snr_db`.
pub fn argmin_theta(rows: &[ResultRow], snr_db: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.snr_db == snr_db)
        .filter_map(|r| r.pep_analytical.map(|p| (r.theta1, p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityRow {
    pub variant: SchemeVariant,
    pub environment: NoiseEnvironment,
    pub spatial: SpatialModel,
    pub snr_low_db: f64,
    pub snr_high_db: f64,
    pub diversity: f64,
}

pub const DIVERSITY_HEADER: [&str; 7] = ["scheme", "eh_mode", "noise_env", "spatial_model", "snr_low_db", "snr_high_db", "diversity"];

impl DiversityRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.variant.scheme_tag().to_string(),
            self.variant.eh_tag().to_string(),
            self.environment.to_string(),
            self.spatial.to_string(),
            format!("{}", self.snr_low_db),
            format!("{}", self.snr_high_db),
            format!("{:.4}", self.diversity),
        ]
    }
}

/// Slope of the analytical bound at the top of `grid` for each pairing of
/// variant and environment.
pub fn diversity_table(base: &SystemConfig, variants: &[SchemeVariant], environments: &[NoiseEnvironment], grid: &[f64], opts: &AnalysisOptions) -> Result<Vec<DiversityRow>> {
    if grid.len() < 2 {
        return Err(Error::Estimation("diversity grid needs at least two points".into()));
    }
    let mut out = Vec::new();
    for &variant in variants {
        for &environment in environments {
            let config = SystemConfig {
                variant,
                environment,
                ..base.clone()
            };
            let curve = pep_curve(&config, grid, opts)?;
            let pts: Vec<(f64, f64)> = grid.iter().zip(&curve).map(|(&s, e)| (s, e.value)).collect();
            out.push(DiversityRow {
                variant,
                environment,
                spatial: config.spatial,
                snr_low_db: grid[grid.len() - 2],
                snr_high_db: grid[grid.len() - 1],
                diversity: diversity_order(&pts)?,
            });
        }
    }
    Ok(out)
}

/// Outcome of the mixture self-test for one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCheck {
    pub environment: NoiseEnvironment,
    pub samples: u64,
    pub analytic_variance: f64,
    pub empirical_variance: f64,
    pub relative_error: f64,
    /// Relative standard error of the empirical variance.
    pub relative_sigma: f64,
    pub pdf_integral: f64,
}

pub const NOISE_CHECK_HEADER: [&str; 7] = [
    "noise_env",
    "samples",
    "analytic_variance",
    "empirical_variance",
    "relative_error",
    "relative_sigma",
    "pdf_integral",
];

impl NoiseCheck {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.environment.to_string(),
            self.samples.to_string(),
            format!("{:.10e}", self.analytic_variance),
            format!("{:.10e}", self.empirical_variance),
            format!("{:.6e}", self.relative_error),
            format!("{:.6e}", self.relative_sigma),
            format!("{:.12}", self.pdf_integral),
        ]
    }
}

/// `Var|n|² / (E|n|²)²` under the mixture; `E|n|⁴ = 2σ⁴` for each
/// circular Gaussian component.
pub fn power_relative_variance(params: &McaParams) -> f64 {
    let a = params.state_probabilities();
    let b = params.variance_factors();
    let m2: f64 = a.iter().zip(b).map(|(a, b)| a * b).sum();
    let m4: f64 = a.iter().zip(b).map(|(a, b)| 2.0 * a * b * b).sum();
    m4 / (m2 * m2) - 1.0
}

/// Sample count that puts a relative error of `tolerance` at `z` standard
/// errors of the empirical variance.
pub fn samples_for_variance_check(params: &McaParams, tolerance: f64, z: f64) -> u64 {
    let n = power_relative_variance(params) * (z / tolerance).powi(2);
    (n.ceil() as u64).max(1_000_000)
}

/// `∫∫ pdf` over the plane in polar coordinates.
pub fn pdf_integral(params: &McaParams) -> Result<f64> {
    let spec = QuadratureSpec::new(1e-11, 1e-300, 4000)?;
    quad_finite(
        |phi| {
            let (s, c) = phi.sin_cos();
            quad_semi_infinite(|r| r * params.pdf(num_complex::Complex64::new(r * c, r * s)), &spec).unwrap_or(f64::NAN)
        },
        0.0,
        2.0 * std::f64::consts::PI,
        &spec,
    )
}

/// Empirical mean power of `samples` mixture draws, chunked like the
/// Monte Carlo engine.
pub fn empirical_mixture_variance(params: &McaParams, samples: u64, seed: u64) -> Result<f64> {
    let chunk = 1_000_000u64;
    let chunks = samples.div_ceil(chunk);
    if chunks > u32::MAX as u64 {
        return Err(Error::Config(format!("too many samples: {samples}")));
    }
    let sums: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = chunk_rng(seed, u32::MAX, k as u32);
            let n = chunk.min(samples - k * chunk);
            let (mut p, mut re, mut im) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let m = params.sample_state(&mut rng);
                let z = sample_complex_gaussian(params.variance_factors()[m] * params.mean_power(), &mut rng);
                p += z.norm_sqr();
                re += z.re;
                im += z.im;
            }
            (p, re, im)
        })
        .collect();
    let (p, re, im) = sums.into_iter().fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = samples as f64;
    Ok(p / n - (re / n).powi(2) - (im / n).powi(2))
}

/// Mixture variance and density-normalisation checks. `samples = None`
/// sizes each environment so that 1% is four standard errors.
pub fn noise_check(environments: &[NoiseEnvironment], truncation: usize, samples: Option<u64>, seed: u64) -> Result<Vec<NoiseCheck>> {
    environments
        .iter()
        .map(|&environment| {
            let params = environment.params(truncation, 1.0)?;
            let n = samples.unwrap_or_else(|| samples_for_variance_check(&params, 0.01, 4.0));
            let analytic = params.mixture_variance();
            let empirical = empirical_mixture_variance(&params, n, seed)?;
            Ok(NoiseCheck {
                environment,
                samples: n,
                analytic_variance: analytic,
                empirical_variance: empirical,
                relative_error: (empirical - analytic).abs() / analytic,
                relative_sigma: (power_relative_variance(&params) / n as f64).sqrt(),
                pdf_integral: pdf_integral(&params)?,
            })
        })
        .collect()
}

/// `start:stop:step` (inclusive) or a comma-separated list, in dB.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number `{t}` in SNR grid `{s}`")))
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("SNR range `{s}` must be start:stop:step")));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("SNR range `{s}` needs step > 0 and stop >= start")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| start + step * k as f64).collect())
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
    }
}

/// Parses counts written as `1000000` or `1e6`.
pub fn parse_count(s: &str) -> Result<u64> {
    let t = s.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = t.parse().map_err(|_| Error::Config(format!("bad count `{t}`")))?;
    if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(Error::Config(format!("count `{t}` is not a non-negative integer")))
    }
}

/// Keys accepted in configuration files and as command-line overrides.
pub const CONFIG_KEYS: [&str; 20] = [
    "env", "scheme", "eh", "spatial", "d_sr1", "d_sr2", "theta1", "theta2", "eta1", "eta2", "lambda", "Ps", "M", "snr_db", "trials",
    "seed", "out", "sweep", "relay_noise", "workers",
];

/// Parses a flat `key = value` document. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':').filter(|(k, _)| !k.contains(' ')))
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let key = k.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1)));
        }
        map.insert(key.to_string(), v.trim().trim_matches('"').to_string());
    }
    Ok(map)
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("`{key}` must be a number, got `{v}`"))))
        .transpose()
}

impl ExperimentSpec {
    /// Builds a spec from configuration keys, starting from the defaults.
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !CONFIG_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let mut spec = ExperimentSpec::default();
        let mut cfg = spec.config.clone();

        if let Some(env) = map.get("env") {
            cfg.environment = env.parse()?;
        }
        if let Some(scheme) = map.get("scheme") {
            cfg.variant = if scheme.contains(['-', '_']) {
                scheme.parse()?
            } else {
                SchemeVariant::parse_parts(scheme, map.get("eh").map(String::as_str).unwrap_or(cfg.variant.eh_tag()))?
            };
        } else if let Some(eh) = map.get("eh") {
            cfg.variant = SchemeVariant::parse_parts(cfg.variant.scheme_tag(), eh)?;
        }
        if let Some(s) = map.get("spatial") {
            cfg.spatial = s.parse()?;
        }

        let d = cfg.topology.source_relay();
        let d_sr = [get_f64(map, "d_sr1")?.unwrap_or(d[0]), get_f64(map, "d_sr2")?.unwrap_or(d[1])];
        let lambda = get_f64(map, "lambda")?.unwrap_or(cfg.topology.path_loss_exponent());
        cfg.topology = Topology::new(d_sr, lambda)?;

        let theta = [
            get_f64(map, "theta1")?.unwrap_or(cfg.relays[0].theta()),
            get_f64(map, "theta2")?.unwrap_or(cfg.relays[1].theta()),
        ];
        let eta = [
            get_f64(map, "eta1")?.unwrap_or(cfg.relays[0].eta()),
            get_f64(map, "eta2")?.unwrap_or(cfg.relays[1].eta()),
        ];
        cfg.relays = [RelayParams::new(theta[0], eta[0])?, RelayParams::new(theta[1], eta[1])?];

        if let Some(ps) = get_f64(map, "Ps")? {
            cfg.source_power = ps;
        }
        if let Some(m) = map.get("M") {
            cfg.truncation = parse_count(m)? as usize;
        }
        spec.config = cfg;

        if let Some(g) = map.get("snr_db") {
            spec.snr_grid_db = parse_snr_grid(g)?;
        }
        if let Some(t) = map.get("trials") {
            spec.trials = parse_count(t)?;
        }
        if let Some(s) = map.get("seed") {
            spec.seed = parse_count(s)?;
        }
        if let Some(o) = map.get("out") {
            spec.output = Some(PathBuf::from(o));
        }
        if let Some(s) = map.get("sweep") {
            spec.sweep = Some(s.parse()?);
        }
        if let Some(r) = map.get("relay_noise") {
            spec.relay_noise = r.parse()?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ResultRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>6} dB  {}-{} {} {}  analytical {}  mc {}",
            self.snr_db,
            self.scheme,
            self.eh_mode,
            self.noise_env,
            self.spatial_model,
            self.pep_analytical.map(format_probability).unwrap_or_else(|| "-".into()),
            self.pep_mc.map(format_probability).unwrap_or_else(|| "-".into()),
        )
    }
}

/// Returns the analytical bound at one SNR for a configuration.
pub fn analytical_point(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<f64> {
    Ok(pep_bound(config, snr_db, opts)?.value)
}
