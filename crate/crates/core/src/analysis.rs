//! Analytical pairwise error probability.
//!
//! Every unconditional bound has the form
//!
//! ```text
//! Σ_m α_m (Δ Ps/(4 β_m N0) + 1)^-1 Π_n F_n(β_m)
//! ```
//!
//! where the direct-link factor comes from averaging the Chernoff exponent
//! over `|h_sd|² ~ Exp(1)` and the relay factor `F_n` averages over
//! `|h_rd,n|²` in closed form and over `|h_sr,n|²` by a one-dimensional
//! integral. Each relay factor is available both as that integral and as a
//! special-function closed form.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{mean_variance_factor, McaParams, SpatialModel};
use crate::phy::{CodewordPair, EffectiveGains, Harvesting, Relaying, SchemeVariant, SystemConfig};
use crate::specfun::{q_unchecked, quad_semi_infinite, scaled_exp_integral_e1_complex, scaled_gamma_upper_zero, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PepMethod {
    ExactConditionalAvg,
    ChernoffClosedForm,
    ChernoffQuadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepEstimate {
    pub value: f64,
    pub method: PepMethod,
    /// Set when a bound exceeds one; the value is kept unclamped.
    pub saturated: bool,
    /// Confidence interval, Monte Carlo only.
    pub ci: Option<(f64, f64)>,
    pub trials: Option<u64>,
}

impl PepEstimate {
    pub fn bound(value: f64, method: PepMethod) -> Self {
        Self {
            value,
            method,
            saturated: value > 1.0,
            ci: None,
            trials: None,
        }
    }
}

/// Which form of the relay factors to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Quadrature,
    ClosedForm,
}

impl Evaluation {
    fn method(self) -> PepMethod {
        match self {
            Evaluation::Quadrature => PepMethod::ChernoffQuadrature,
            Evaluation::ClosedForm => PepMethod::ChernoffClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub pair: CodewordPair,
    pub quadrature: QuadratureSpec,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            pair: CodewordPair::WORST_CASE,
            // Relay factors reach 1e-7 at high SNR, so only the relative
            // tolerance should bind.
            quadrature: QuadratureSpec {
                relative_tolerance: 1e-10,
                absolute_tolerance: 1e-300,
                max_subdivisions: 4000,
            },
        }
    }
}

fn check_distance(d2: f64) -> Result<()> {
    if d2 >= 0.0 && d2.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("conditional_pep", format!("squared distance must be finite and >= 0, got {d2}")))
    }
}

/// `Σ α_m Q(sqrt(d²/(2 β_m N0)))`.
pub fn conditional_pep_exact(d2: f64, params: &McaParams) -> Result<f64> {
    check_distance(d2)?;
    let n0 = params.mean_power();
    Ok(params
        .state_probabilities()
        .iter()
        .zip(params.variance_factors())
        .map(|(a, b)| a * q_unchecked((d2 / (2.0 * b * n0)).sqrt()))
        .sum())
}

/// `Σ α_m exp(-d²/(4 β_m N0))`.
pub fn conditional_pep_chernoff(d2: f64, params: &McaParams) -> Result<f64> {
    check_distance(d2)?;
    let n0 = params.mean_power();
    Ok(params
        .state_probabilities()
        .iter()
        .zip(params.variance_factors())
        .map(|(a, b)| a * (-d2 / (4.0 * b * n0)).exp())
        .sum())
}

/// `∫₀^∞ e^{-t}/(1 + c t²) dt`.
pub fn quadratic_factor_quad(c: f64, spec: &QuadratureSpec) -> Result<f64> {
    quad_semi_infinite(|t| (-t).exp() / (1.0 + c * t * t), spec)
}

/// Closed form of [`quadratic_factor_quad`]: splitting `1/(1 + c t²)` into
/// conjugate linear factors gives `Re[z e^z E1(z)]` with `z = -i/sqrt(c)`.
pub fn quadratic_factor_closed(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::domain("quadratic_factor_closed", format!("c must be > 0, got {c}")));
    }
    let z = Complex64::new(0.0, -1.0 / c.sqrt());
    Ok((z * scaled_exp_integral_e1_complex(z)?).re)
}

/// `∫₀^∞ e^{-t}/(1 + c t) dt`.
pub fn linear_factor_quad(c: f64, spec: &QuadratureSpec) -> Result<f64> {
    quad_semi_infinite(|t| (-t).exp() / (1.0 + c * t), spec)
}

/// `e^{1/c} Γ(0, 1/c)/c`, the closed form of [`linear_factor_quad`].
pub fn linear_factor_closed(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::domain("linear_factor_closed", format!("c must be > 0, got {c}")));
    }
    Ok(scaled_gamma_upper_zero(1.0 / c)? / c)
}

/// `∫₀^∞ (ξt + 1)/(B t² + ξt + 1) e^{-t} dt`.
pub fn csi_quadratic_factor_quad(xi: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    quad_semi_infinite(|t| (xi * t + 1.0) / ((b * t + xi) * t + 1.0) * (-t).exp(), spec)
}

/// Exponential-integral closed form of [`csi_quadratic_factor_quad`].
///
/// With `ψ = sqrt(ξ² - 4B)`, `Λ, Ψ = (ξ ± ψ)/(2B)`,
/// `D1 = 2B - ξ² - ξψ`, `D2 = ξ² - ξψ - 2B`:
///
/// ```text
/// (D1 e^Λ Ei(-Λ) + D2 e^Ψ Ei(-Ψ)) / (2Bψ)
/// ```
///
/// Only real roots are supported; `ξ² <= 4B` is a domain error.
pub fn csi_quadratic_factor_closed(xi: f64, b: f64) -> Result<f64> {
    if !(xi > 0.0 && b > 0.0) {
        return Err(Error::domain("csi_quadratic_factor_closed", format!("need xi, B > 0, got xi={xi}, B={b}")));
    }
    let disc = xi * xi - 4.0 * b;
    if disc <= 0.0 {
        return Err(Error::domain(
            "csi_quadratic_factor_closed",
            format!("complex roots: xi^2 - 4B = {disc:e} <= 0"),
        ));
    }
    let psi = disc.sqrt();
    let lambda = (xi + psi) / (2.0 * b);
    let big_psi = (xi - psi) / (2.0 * b);
    let d1 = 2.0 * b - xi * xi - xi * psi;
    let d2 = xi * xi - xi * psi - 2.0 * b;
    // e^x Ei(-x) = -e^x E1(x)
    let t1 = -d1 * scaled_gamma_upper_zero(lambda)?;
    let t2 = -d2 * scaled_gamma_upper_zero(big_psi)?;
    Ok((t1 + t2) / (2.0 * b * psi))
}

/// `∫₀^∞ (ξt + 1)/(γt + 1) e^{-t} dt`.
pub fn csi_linear_factor_quad(xi: f64, gamma: f64, spec: &QuadratureSpec) -> Result<f64> {
    quad_semi_infinite(|t| (xi * t + 1.0) / (gamma * t + 1.0) * (-t).exp(), spec)
}

/// `I1 + ξ(1 - I1)/γ` with `I1 = e^{1/γ} Γ(0, 1/γ)/γ`.
pub fn csi_linear_factor_closed(xi: f64, gamma: f64) -> Result<f64> {
    let i1 = linear_factor_closed(gamma)?;
    Ok(i1 + xi * (1.0 - i1) / gamma)
}

/// Relay factor `F_n` for noise variance factor `beta`.
fn relay_factor(gains: &EffectiveGains, n: usize, beta: f64, eps: f64, spec: &QuadratureSpec, eval: Evaluation) -> Result<f64> {
    let scale = eps / (4.0 * beta * gains.n0);
    let variant = gains.variant;
    match variant.relaying {
        Relaying::Blind => {
            let c = scale * gains.phi_sq(n, 1.0);
            match (variant.harvesting, eval) {
                (Harvesting::Instantaneous, Evaluation::Quadrature) => quadratic_factor_quad(c, spec),
                (Harvesting::Instantaneous, Evaluation::ClosedForm) => quadratic_factor_closed(c),
                (Harvesting::Average, Evaluation::Quadrature) => linear_factor_quad(c, spec),
                (Harvesting::Average, Evaluation::ClosedForm) => linear_factor_closed(c),
            }
        }
        Relaying::CsiAssisted => {
            let xi = gains.xi[n];
            let b = scale * gains.zeta[n];
            match (variant.harvesting, eval) {
                (Harvesting::Instantaneous, Evaluation::Quadrature) => csi_quadratic_factor_quad(xi, b, spec),
                (Harvesting::Instantaneous, Evaluation::ClosedForm) => csi_quadratic_factor_closed(xi, b),
                (Harvesting::Average, Evaluation::Quadrature) => csi_linear_factor_quad(xi, b + xi, spec),
                (Harvesting::Average, Evaluation::ClosedForm) => csi_linear_factor_closed(xi, b + xi),
            }
        }
    }
}

/// Unconditional bound for one impulse state in which every node sees the
/// variance factor `beta`.
pub fn per_state_bound(config: &SystemConfig, n0: f64, beta: f64, opts: &AnalysisOptions, eval: Evaluation) -> Result<f64> {
    let gains = EffectiveGains::new(config, n0, [beta; 2]);
    let eps = opts.pair.eigenvalues();
    let mut bound = 1.0 / (opts.pair.delta() * config.source_power / (4.0 * beta * n0) + 1.0);
    for n in 0..2 {
        bound *= relay_factor(&gains, n, beta, eps[n], &opts.quadrature, eval)?;
    }
    Ok(bound)
}

fn model_one(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions, eval: Evaluation) -> Result<PepEstimate> {
    let params = config.noise_params(snr_db)?;
    let n0 = params.mean_power();
    let mut total = 0.0;
    for (a, &b) in params.state_probabilities().iter().zip(params.variance_factors()) {
        total += a * per_state_bound(config, n0, b, opts, eval)?;
    }
    Ok(PepEstimate::bound(total, eval.method()))
}

fn require_variant(config: &SystemConfig, expected: SchemeVariant) -> Result<()> {
    if config.variant == expected {
        Ok(())
    } else {
        Err(Error::invalid("scheme", format!("expected {expected}, configuration has {}", config.variant)))
    }
}

/// Blind relaying, instantaneous harvesting; quadrature of the relay factor.
pub fn pep_blind_ieh(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<PepEstimate> {
    require_variant(config, SchemeVariant::BLIND_IEH)?;
    model_one(config, snr_db, opts, Evaluation::Quadrature)
}

/// Blind relaying, average harvesting; incomplete-gamma closed form.
pub fn pep_blind_aeh(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<PepEstimate> {
    require_variant(config, SchemeVariant::BLIND_AEH)?;
    model_one(config, snr_db, opts, Evaluation::ClosedForm)
}

/// CSI-assisted relaying, instantaneous harvesting; quadrature.
pub fn pep_csi_ieh(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<PepEstimate> {
    require_variant(config, SchemeVariant::CSI_IEH)?;
    model_one(config, snr_db, opts, Evaluation::Quadrature)
}

/// CSI-assisted relaying, average harvesting; quadrature.
pub fn pep_csi_aeh(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<PepEstimate> {
    require_variant(config, SchemeVariant::CSI_AEH)?;
    model_one(config, snr_db, opts, Evaluation::Quadrature)
}

/// Independent impulse states: the triple sum over `(m_d, m_r1, m_r2)` with
/// every `β` replaced by the frame-average factor.
pub fn pep_model2(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions, eval: Evaluation) -> Result<PepEstimate> {
    let params = config.noise_params(snr_db)?;
    let n0 = params.mean_power();
    let alpha = params.state_probabilities();
    let beta = params.variance_factors();
    let m = alpha.len();
    let mut total = 0.0;
    for d in 0..m {
        for r1 in 0..m {
            for r2 in 0..m {
                let phi = mean_variance_factor(beta[d], beta[r1], beta[r2]);
                total += alpha[d] * alpha[r1] * alpha[r2] * per_state_bound(config, n0, phi, opts, eval)?;
            }
        }
    }
    Ok(PepEstimate::bound(total, eval.method()))
}

/// Variant- and model-matched bound along the primary evaluation path.
pub fn pep_bound(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions) -> Result<PepEstimate> {
    match config.spatial {
        SpatialModel::Independent => {
            let eval = if config.variant == SchemeVariant::BLIND_AEH {
                Evaluation::ClosedForm
            } else {
                Evaluation::Quadrature
            };
            pep_model2(config, snr_db, opts, eval)
        }
        SpatialModel::Dependent => match config.variant {
            v if v == SchemeVariant::BLIND_IEH => pep_blind_ieh(config, snr_db, opts),
            v if v == SchemeVariant::BLIND_AEH => pep_blind_aeh(config, snr_db, opts),
            v if v == SchemeVariant::CSI_IEH => pep_csi_ieh(config, snr_db, opts),
            _ => pep_csi_aeh(config, snr_db, opts),
        },
    }
}

/// Bound with an explicit choice of relay-factor evaluation.
pub fn pep_with(config: &SystemConfig, snr_db: f64, opts: &AnalysisOptions, eval: Evaluation) -> Result<PepEstimate> {
    match config.spatial {
        SpatialModel::Dependent => model_one(config, snr_db, opts, eval),
        SpatialModel::Independent => pep_model2(config, snr_db, opts, eval),
    }
}

/// Bounds over an SNR grid, evaluated in parallel and returned in grid order.
pub fn pep_curve(config: &SystemConfig, snr_grid_db: &[f64], opts: &AnalysisOptions) -> Result<Vec<PepEstimate>> {
    snr_grid_db
        .par_iter()
        .map(|&s| pep_bound(config, s, opts))
        .collect()
}

/// Negative log–log slope between the two highest-SNR points of a curve
/// given as `(snr_db, pep)` pairs.
pub fn diversity_order(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::Estimation(format!("need at least two points, got {}", curve.len())));
    }
    let (s1, p1) = curve[curve.len() - 2];
    let (s2, p2) = curve[curve.len() - 1];
    if !(s2 > s1) {
        return Err(Error::Estimation(format!("SNR grid is not increasing at the tail ({s1} dB, {s2} dB)")));
    }
    if !(p1 > 0.0 && p2 > 0.0 && p2 < p1) {
        return Err(Error::Estimation(format!("tail is not strictly decreasing ({p1:e} -> {p2:e})")));
    }
    let dlog_snr = (s2 - s1) / 10.0 * std::f64::consts::LN_10;
    Ok(-(p2.ln() - p1.ln()) / dlog_snr)
}

/// Default grid for slope extraction, 50 to 80 dB in 5 dB steps.
pub fn diversity_grid() -> Vec<f64> {
    (0..=6).map(|k| 50.0 + 5.0 * k as f64).collect()
}

/// Diversity order of the analytical bound for `config`.
pub fn diversity_of(config: &SystemConfig, snr_grid_db: &[f64], opts: &AnalysisOptions) -> Result<f64> {
    let curve = pep_curve(config, snr_grid_db, opts)?;
    let pts: Vec<(f64, f64)> = snr_grid_db.iter().zip(&curve).map(|(&s, e)| (s, e.value)).collect();
    diversity_order(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingRealization;
    use crate::noise::NoiseEnvironment;
    use crate::phy::{distance_sq, RelayParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn cfg(variant: SchemeVariant, env: NoiseEnvironment) -> SystemConfig {
        SystemConfig {
            variant,
            environment: env,
            ..SystemConfig::default()
        }
    }

    fn opts() -> AnalysisOptions {
        AnalysisOptions::default()
    }

    #[test]
    fn conditional_exact_examples() {
        let p = McaParams::new(1.0, 0.1, 5, 1.0).unwrap();
        assert!((conditional_pep_exact(0.0, &p).unwrap() - 0.5).abs() < 1e-15);

        let awgn = NoiseEnvironment::AwgnLimit.params(5, 0.5).unwrap();
        let q = q_unchecked((3.0f64 / 1.0).sqrt());
        assert!(rel(conditional_pep_exact(3.0, &awgn).unwrap(), q) < 1e-6);

        // A = 0.1, δ = 0.1, d²/N0 = 10, term by term.
        let mi = McaParams::new(0.1, 0.1, 5, 1.0).unwrap();
        let mut raw = [0.0; 5];
        let mut fact = 1.0;
        for m in 0..5 {
            if m > 0 {
                fact *= m as f64;
            }
            raw[m] = (-0.1f64).exp() * 0.1f64.powi(m as i32) / fact;
        }
        let total: f64 = raw.iter().sum();
        let expected: f64 = (0..5)
            .map(|m| {
                let beta = (m as f64 / 0.1 + 0.1) / 1.1;
                raw[m] / total * q_unchecked((10.0 / (2.0 * beta)).sqrt())
            })
            .sum();
        assert!(rel(conditional_pep_exact(10.0, &mi).unwrap(), expected) < 1e-14);
        assert!(conditional_pep_exact(-1.0, &mi).is_err());
    }

    #[test]
    fn chernoff_examples() {
        let p = McaParams::new(1.0, 0.1, 5, 1.0).unwrap();
        assert!((conditional_pep_chernoff(0.0, &p).unwrap() - 1.0).abs() < 1e-15);
        let awgn = McaParams::new(1.0, 1e9, 1, 2.0).unwrap();
        assert!(rel(conditional_pep_chernoff(6.0, &awgn).unwrap(), (-6.0f64 / 8.0).exp()) < 1e-8);
        assert!(conditional_pep_chernoff(10.0, &p).unwrap() >= conditional_pep_exact(10.0, &p).unwrap());
    }

    #[test]
    fn linear_factor_at_unit_argument() {
        let e_gamma = 0.596_347_362_323_194_07;
        assert!(rel(linear_factor_closed(1.0).unwrap(), e_gamma) < 1e-12);
        assert!(rel(linear_factor_quad(1.0, &opts().quadrature).unwrap(), e_gamma) < 1e-9);
        // I1 of the CSI form is the same kernel.
        assert!(rel(csi_linear_factor_closed(0.0, 1.0).unwrap(), e_gamma) < 1e-12);
        assert!((linear_factor_closed(1e-8).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let spec = opts().quadrature;
        for c in [1e-6, 1e-2, 0.3, 1.0, 7.0, 1e3, 1e6, 1e9] {
            assert!(rel(quadratic_factor_closed(c).unwrap(), quadratic_factor_quad(c, &spec).unwrap()) < 1e-8, "c={c}");
            assert!(rel(linear_factor_closed(c).unwrap(), linear_factor_quad(c, &spec).unwrap()) < 1e-8, "c={c}");
        }
        for (xi, g) in [(0.5, 2.0), (10.0, 11.0), (1e4, 3e6), (1e7, 1e10)] {
            assert!(rel(csi_linear_factor_closed(xi, g).unwrap(), csi_linear_factor_quad(xi, g, &spec).unwrap()) < 1e-8);
        }
        for (xi, b) in [(3.0, 1.0), (10.0, 5.0), (100.0, 2000.0), (1e4, 1e7)] {
            assert!(rel(csi_quadratic_factor_closed(xi, b).unwrap(), csi_quadratic_factor_quad(xi, b, &spec).unwrap()) < 1e-8);
        }
        assert!(csi_quadratic_factor_closed(1.0, 1.0).is_err());
    }

    #[test]
    fn csi_quadratic_reference_values() {
        // High-precision evaluations of the defining integral.
        let spec = opts().quadrature;
        assert!(rel(csi_quadratic_factor_quad(3.0, 1.0, &spec).unwrap(), 0.826_651_917_436_269) < 1e-10);
        assert!(rel(csi_quadratic_factor_quad(1e4, 1e7, &spec).unwrap(), 0.006_422_982_309_798_75) < 1e-10);
    }

    #[test]
    fn negligible_relays_leave_direct_link_bound() {
        let tiny = RelayParams::new(0.5, 1e-14).unwrap();
        for v in SchemeVariant::ALL {
            let c = SystemConfig {
                relays: [tiny; 2],
                ..cfg(v, NoiseEnvironment::NearGaussian)
            };
            let params = c.noise_params(20.0).unwrap();
            let direct: f64 = params
                .state_probabilities()
                .iter()
                .zip(params.variance_factors())
                .map(|(a, b)| a / (8.0 / (4.0 * b * params.mean_power()) + 1.0))
                .sum();
            let p = pep_bound(&c, 20.0, &opts()).unwrap().value;
            assert!(rel(p, direct) < 1e-6, "{v}: {p} vs {direct}");
        }
    }

    #[test]
    fn bounds_decrease_with_snr() {
        let grid: Vec<f64> = (0..=16).map(|k| 5.0 * k as f64).collect();
        for v in SchemeVariant::ALL {
            for env in [NoiseEnvironment::HighlyImpulsive, NoiseEnvironment::NearGaussian] {
                let curve = pep_curve(&cfg(v, env), &grid, &opts()).unwrap();
                for w in curve.windows(2) {
                    assert!(w[1].value < w[0].value, "{v} {env}");
                }
                assert!(curve.iter().all(|e| !e.saturated));
            }
        }
    }

    #[test]
    fn awgn_limit_matches_single_gaussian_term() {
        for v in SchemeVariant::ALL {
            let c5 = cfg(v, NoiseEnvironment::AwgnLimit);
            let c1 = SystemConfig { truncation: 1, ..c5.clone() };
            for snr in [0.0, 20.0, 40.0] {
                let a = pep_bound(&c5, snr, &opts()).unwrap().value;
                let b = pep_bound(&c1, snr, &opts()).unwrap().value;
                assert!(rel(a, b) < 1e-6);
            }
        }
    }

    #[test]
    fn model_two_examples() {
        let o = opts();
        for v in SchemeVariant::ALL {
            let c1 = cfg(v, NoiseEnvironment::AwgnLimit);
            let c2 = SystemConfig {
                spatial: SpatialModel::Independent,
                ..c1.clone()
            };
            let a = pep_bound(&c1, 25.0, &o).unwrap().value;
            let b = pep_bound(&c2, 25.0, &o).unwrap().value;
            assert!(rel(a, b) < 1e-6);
        }

        // A single-state mixture forces all three states equal.
        let one = SystemConfig {
            truncation: 1,
            ..cfg(SchemeVariant::CSI_IEH, NoiseEnvironment::ModeratelyImpulsive)
        };
        let two = SystemConfig {
            spatial: SpatialModel::Independent,
            ..one.clone()
        };
        assert!(rel(pep_bound(&one, 15.0, &o).unwrap().value, pep_bound(&two, 15.0, &o).unwrap().value) < 1e-12);

        let hi1 = cfg(SchemeVariant::BLIND_AEH, NoiseEnvironment::HighlyImpulsive);
        let hi2 = SystemConfig {
            spatial: SpatialModel::Independent,
            ..hi1.clone()
        };
        assert!(pep_bound(&hi2, 30.0, &o).unwrap().value < pep_bound(&hi1, 30.0, &o).unwrap().value);
    }

    #[test]
    fn diversity_of_power_law() {
        let curve: Vec<(f64, f64)> = (0..=6)
            .map(|k| {
                let s = 50.0 + 5.0 * k as f64;
                (s, 3.7 / 10f64.powf(s / 10.0).powi(2))
            })
            .collect();
        assert!((diversity_order(&curve).unwrap() - 2.0).abs() < 1e-9);
        assert!(diversity_order(&[(1.0, 0.1)]).is_err());
        assert!(diversity_order(&[(1.0, 0.1), (2.0, 0.2)]).is_err());
        assert!(diversity_order(&[(2.0, 0.2), (1.0, 0.1)]).is_err());
    }

    #[test]
    fn blind_ieh_near_gaussian_slope() {
        let c = cfg(SchemeVariant::BLIND_IEH, NoiseEnvironment::NearGaussian);
        let d = diversity_of(&c, &[60.0, 70.0], &opts()).unwrap();
        assert!((d - 1.99).abs() < 0.05, "{d}");
    }

    #[test]
    fn average_harvesting_and_csi_instantaneous_agree_asymptotically() {
        let o = opts();
        let a = cfg(SchemeVariant::BLIND_AEH, NoiseEnvironment::NearGaussian);
        let b = cfg(SchemeVariant::CSI_IEH, NoiseEnvironment::NearGaussian);
        for snr in [60.0, 70.0, 80.0] {
            let r = pep_bound(&a, snr, &o).unwrap().value / pep_bound(&b, snr, &o).unwrap().value;
            assert!((0.9..=1.1).contains(&r), "{snr} dB ratio {r}");
        }
    }

    /// Average over `(|h_sr,1|², |h_sr,2|²)` draws of the Chernoff bound
    /// with `|h_sd|²` and `|h_rd,n|²` integrated out exactly; returns the
    /// mean and its standard error.
    fn source_relay_average(c: &SystemConfig, snr: f64, draws: usize, seed: u64) -> (f64, f64) {
        let params = c.noise_params(snr).unwrap();
        let n0 = params.mean_power();
        let k = c.variant.sr_exponent();
        let gains: Vec<EffectiveGains> = params
            .variance_factors()
            .iter()
            .map(|&b| EffectiveGains::new(c, n0, [b, b]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let f = FadingRealization::sample(&mut rng);
            let mut v = 0.0;
            for (m, g) in gains.iter().enumerate() {
                let b = params.variance_factors()[m];
                let mut term = params.state_probabilities()[m] / (8.0 / (4.0 * b * n0) + 1.0);
                for n in 0..2 {
                    let x = f.sr_power(n);
                    term /= 1.0 + 8.0 * g.phi_sq(n, x) * x.powi(k) / (4.0 * b * n0);
                }
                v += term;
            }
            s += v;
            s2 += v * v;
        }
        let n = draws as f64;
        let mean = s / n;
        (mean, ((s2 / n - mean * mean) / n).sqrt())
    }

    /// Average of the exact conditional PEP over full fading draws, with the
    /// standard error of the mean.
    fn exact_average(c: &SystemConfig, snr: f64, draws: usize, seed: u64) -> (f64, f64) {
        let params = c.noise_params(snr).unwrap();
        let n0 = params.mean_power();
        let pair = CodewordPair::WORST_CASE;
        let gains: Vec<EffectiveGains> = params
            .variance_factors()
            .iter()
            .map(|&b| EffectiveGains::new(c, n0, [b, b]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let f = FadingRealization::sample(&mut rng);
            let mut ex = 0.0;
            for (m, g) in gains.iter().enumerate() {
                let d2 = distance_sq(g, c.source_power, &f, &pair);
                let b = params.variance_factors()[m];
                ex += params.state_probabilities()[m] * q_unchecked((d2 / (2.0 * b * n0)).sqrt());
            }
            s += ex;
            s2 += ex * ex;
        }
        let n = draws as f64;
        let mean = s / n;
        (mean, ((s2 / n - mean * mean) / n).sqrt())
    }

    #[test]
    fn bounds_match_source_relay_fading_average() {
        let cases = [
            (SchemeVariant::BLIND_IEH, NoiseEnvironment::NearGaussian, 30.0),
            (SchemeVariant::BLIND_AEH, NoiseEnvironment::ModeratelyImpulsive, 20.0),
            (SchemeVariant::CSI_IEH, NoiseEnvironment::HighlyImpulsive, 25.0),
            (SchemeVariant::CSI_AEH, NoiseEnvironment::NearGaussian, 30.0),
        ];
        for (i, (v, env, snr)) in cases.into_iter().enumerate() {
            let c = cfg(v, env);
            let bound = pep_bound(&c, snr, &opts()).unwrap().value;
            let (mean, se) = source_relay_average(&c, snr, 1_000_000, 100 + i as u64);
            assert!((bound - mean).abs() < 3.0 * se, "{v} {env}: {bound} vs {mean} ± {se}");
        }
    }

    #[test]
    fn bounds_dominate_exact_conditional_average() {
        for (i, v) in SchemeVariant::ALL.into_iter().enumerate() {
            for env in [NoiseEnvironment::HighlyImpulsive, NoiseEnvironment::NearGaussian] {
                for snr in [0.0, 15.0, 30.0] {
                    let c = cfg(v, env);
                    let bound = pep_bound(&c, snr, &opts()).unwrap().value;
                    let (mean, se) = exact_average(&c, snr, 100_000, 7 * i as u64 + snr as u64);
                    assert!(bound >= mean - 3.0 * se, "{v} {env} {snr}: {bound} < {mean}");
                }
            }
        }
    }

    #[test]
    fn variant_guard() {
        let c = cfg(SchemeVariant::CSI_AEH, NoiseEnvironment::NearGaussian);
        assert!(pep_blind_ieh(&c, 10.0, &opts()).is_err());
        assert_eq!(pep_csi_aeh(&c, 10.0, &opts()).unwrap().method, PepMethod::ChernoffQuadrature);
        let b = cfg(SchemeVariant::BLIND_AEH, NoiseEnvironment::NearGaussian);
        assert_eq!(pep_blind_aeh(&b, 10.0, &opts()).unwrap().method, PepMethod::ChernoffClosedForm);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn chernoff_dominates_exact(d2 in 0.0f64..1e3, n0 in 1e-3f64..10.0, env in 0usize..4) {
            let p = NoiseEnvironment::ALL[env].params(5, n0).unwrap();
            proptest::prop_assert!(conditional_pep_chernoff(d2, &p).unwrap() >= conditional_pep_exact(d2, &p).unwrap());
        }

        #[test]
        fn relay_factors_lie_in_unit_interval(logc in -8.0f64..10.0) {
            let c = 10f64.powf(logc);
            let spec = AnalysisOptions::default().quadrature;
            for f in [quadratic_factor_quad(c, &spec).unwrap(), linear_factor_closed(c).unwrap(), csi_linear_factor_closed(c, 2.0 * c).unwrap()] {
                proptest::prop_assert!(f > 0.0 && f <= 1.0);
            }
        }

        #[test]
        fn per_state_bound_decreases_in_snr(snr in 0.0f64..70.0, v in 0usize..4) {
            let c = cfg(SchemeVariant::ALL[v], NoiseEnvironment::ModeratelyImpulsive);
            let a = pep_bound(&c, snr, &opts()).unwrap().value;
            let b = pep_bound(&c, snr + 1.0, &opts()).unwrap().value;
            proptest::prop_assert!(b < a);
        }
    }
}
