//! Two-phase distributed Alamouti transmission with power-splitting relays.
//!
//! Phase 1 (slots 1–2): the source sends `s1`, `s2` to the destination and
//! both relays. Phase 2 (slots 3–4): the relays forward an Alamouti block
//! built from what they received, using harvested power, and the destination
//! divides slots 3–4 by `Ω`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{FadingRealization, PathLoss, Topology};
use crate::error::{Error, Result};
use crate::noise::{sample_complex_gaussian, FrameNoiseStates, McaParams, NoiseEnvironment, SpatialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relaying {
    /// Fixed gain normalising the average received energy.
    Blind,
    /// Gain computed from the instantaneous source–relay channel.
    CsiAssisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Harvesting {
    /// Transmit power follows `|h_sr|²` of the current frame.
    Instantaneous,
    /// Transmit power fixed at its fading average (battery-backed relay).
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeVariant {
    pub relaying: Relaying,
    pub harvesting: Harvesting,
}

impl SchemeVariant {
    pub const BLIND_IEH: Self = Self::new(Relaying::Blind, Harvesting::Instantaneous);
    pub const BLIND_AEH: Self = Self::new(Relaying::Blind, Harvesting::Average);
    pub const CSI_IEH: Self = Self::new(Relaying::CsiAssisted, Harvesting::Instantaneous);
    pub const CSI_AEH: Self = Self::new(Relaying::CsiAssisted, Harvesting::Average);
    pub const ALL: [Self; 4] = [Self::BLIND_IEH, Self::BLIND_AEH, Self::CSI_IEH, Self::CSI_AEH];

    pub const fn new(relaying: Relaying, harvesting: Harvesting) -> Self {
        Self { relaying, harvesting }
    }

    pub fn scheme_tag(self) -> &'static str {
        match self.relaying {
            Relaying::Blind => "blind",
            Relaying::CsiAssisted => "csi",
        }
    }

    pub fn eh_tag(self) -> &'static str {
        match self.harvesting {
            Harvesting::Instantaneous => "ieh",
            Harvesting::Average => "aeh",
        }
    }

    /// Exponent of `|h_sr|²` in the relayed distance terms.
    pub(crate) fn sr_exponent(self) -> i32 {
        match self.harvesting {
            Harvesting::Instantaneous => 2,
            Harvesting::Average => 1,
        }
    }

    pub fn parse_parts(scheme: &str, eh: &str) -> Result<Self> {
        let relaying = match scheme.trim().to_ascii_lowercase().as_str() {
            "blind" => Relaying::Blind,
            "csi" | "csi-assisted" => Relaying::CsiAssisted,
            other => return Err(Error::Config(format!("unknown relaying scheme `{other}` (expected blind or csi)"))),
        };
        let harvesting = match eh.trim().to_ascii_lowercase().as_str() {
            "ieh" => Harvesting::Instantaneous,
            "aeh" => Harvesting::Average,
            other => return Err(Error::Config(format!("unknown harvesting mode `{other}` (expected ieh or aeh)"))),
        };
        Ok(Self::new(relaying, harvesting))
    }
}

impl fmt::Display for SchemeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.scheme_tag(), self.eh_tag())
    }
}

impl FromStr for SchemeVariant {
    type Err = Error;

    /// Accepts `blind-ieh`, `csi_aeh` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(['-', '_']);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(scheme), Some(eh), None) => Self::parse_parts(scheme, eh),
            _ => Err(Error::Config(format!("malformed scheme `{s}` (expected e.g. blind-aeh)"))),
        }
    }
}

/// Power-splitting ratio `θ` and conversion efficiency `η` of one relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayParams {
    theta: f64,
    eta: f64,
}

impl RelayParams {
    pub fn new(theta: f64, eta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid("theta", format!("power-splitting ratio must lie in (0, 1), got {theta}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid("eta", format!("conversion efficiency must lie in (0, 1), got {eta}")));
        }
        Ok(Self { theta, eta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Fraction routed to the information receiver, `1 - θ`.
    pub fn kappa(&self) -> f64 {
        1.0 - self.theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub source_power: f64,
    pub relays: [RelayParams; 2],
    pub topology: Topology,
    pub variant: SchemeVariant,
    pub environment: NoiseEnvironment,
    pub spatial: SpatialModel,
    pub truncation: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let relay = RelayParams { theta: 0.5, eta: 0.3 };
        Self {
            source_power: 1.0,
            relays: [relay; 2],
            topology: Topology::new([0.5, 0.5], 2.7).expect("default topology is valid"),
            variant: SchemeVariant::BLIND_IEH,
            environment: NoiseEnvironment::NearGaussian,
            spatial: SpatialModel::Dependent,
            truncation: 5,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_power > 0.0 && self.source_power.is_finite()) {
            return Err(Error::invalid("Ps", format!("source power must be > 0, got {}", self.source_power)));
        }
        if self.truncation == 0 || self.truncation > 8 {
            return Err(Error::invalid("M", format!("truncation must lie in 1..=8, got {}", self.truncation)));
        }
        Ok(())
    }

    /// `N0 = Ps / 10^(snr_db/10)`.
    pub fn noise_power(&self, snr_db: f64) -> f64 {
        self.source_power / 10f64.powf(snr_db / 10.0)
    }

    pub fn noise_params(&self, snr_db: f64) -> Result<McaParams> {
        self.validate()?;
        self.environment.params(self.truncation, self.noise_power(snr_db))
    }

    pub fn with_variant(&self, variant: SchemeVariant) -> Self {
        Self { variant, ..self.clone() }
    }
}

/// Power available at a relay after phase 1.
pub fn harvested_power(harvesting: Harvesting, relay: &RelayParams, source_power: f64, source_relay_loss: f64, sr_power: f64) -> f64 {
    let average = relay.eta * relay.theta * source_power / source_relay_loss;
    match harvesting {
        Harvesting::Instantaneous => average * sr_power,
        Harvesting::Average => average,
    }
}

/// Squared relay amplification `G²`. `beta_relay` only enters the
/// CSI-assisted gain.
pub fn relay_gain_sq(relaying: Relaying, relay: &RelayParams, source_power: f64, source_relay_loss: f64, n0: f64, sr_power: f64, beta_relay: f64) -> f64 {
    let signal = relay.kappa() * source_power / source_relay_loss;
    match relaying {
        Relaying::Blind => signal + n0,
        Relaying::CsiAssisted => signal * sr_power + beta_relay * n0,
    }
}

/// Per-relay summands of `Ω² - 1`; they double as the weights of relayed
/// noise at the destination.
pub fn omega_weights(config: &SystemConfig, n0: f64, relay_betas: [f64; 2]) -> [f64; 2] {
    let pl = config.topology.path_loss_gains();
    std::array::from_fn(|n| {
        let r = &config.relays[n];
        // E|h_sr|² = 1, so the CSI-assisted E[G²] keeps only the mean signal term.
        let mean_gain_sq = relay_gain_sq(config.variant.relaying, r, config.source_power, pl.source_relay[n], n0, 1.0, relay_betas[n]);
        r.eta * r.theta * config.source_power * (r.kappa() + 1.0)
            / (pl.source_relay[n] * pl.relay_destination[n] * mean_gain_sq)
    })
}

/// Destination normalisation `Ω`.
pub fn omega(config: &SystemConfig, n0: f64, relay_betas: [f64; 2]) -> f64 {
    let w = omega_weights(config, n0, relay_betas);
    (1.0 + w[0] + w[1]).sqrt()
}

/// Gains that turn fading into the effective channel of one frame.
///
/// Both relaying modes share `Φ² = ζ/(ξ·x + 1)`: CSI-assisted uses the
/// instantaneous `x = |h_sr|²` and the relay's `β`, blind fixes `x = 1` and
/// `β = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveGains {
    pub variant: SchemeVariant,
    pub n0: f64,
    pub relay_betas: [f64; 2],
    pub omega_sq: f64,
    pub omega_weights: [f64; 2],
    pub xi: [f64; 2],
    pub zeta: [f64; 2],
    path_loss: PathLoss,
}

impl EffectiveGains {
    pub fn new(config: &SystemConfig, n0: f64, relay_betas: [f64; 2]) -> Self {
        let pl = config.topology.path_loss_gains();
        let weights = omega_weights(config, n0, relay_betas);
        let omega_sq = 1.0 + weights[0] + weights[1];
        let ps = config.source_power;
        let mut xi = [0.0; 2];
        let mut zeta = [0.0; 2];
        for n in 0..2 {
            let r = &config.relays[n];
            let b = match config.variant.relaying {
                Relaying::Blind => 1.0,
                Relaying::CsiAssisted => relay_betas[n],
            };
            let (lsr, lrd) = (pl.source_relay[n], pl.relay_destination[n]);
            xi[n] = r.kappa() * ps / (lsr * b * n0);
            zeta[n] = r.eta * r.theta * r.kappa() * ps * ps / (b * n0 * omega_sq * lsr * lsr * lrd);
        }
        Self {
            variant: config.variant,
            n0,
            relay_betas,
            omega_sq,
            omega_weights: weights,
            xi,
            zeta,
            path_loss: pl,
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega_sq.sqrt()
    }

    /// `Φ_n²`; `sr_power` is ignored for blind relaying.
    pub fn phi_sq(&self, n: usize, sr_power: f64) -> f64 {
        let x = match self.variant.relaying {
            Relaying::Blind => 1.0,
            Relaying::CsiAssisted => sr_power,
        };
        self.zeta[n] / (self.xi[n] * x + 1.0)
    }

    /// Magnitude multiplying `h_sr,n h_rd,n` in slots 3–4 after division
    /// by `Ω`.
    pub fn relay_amplitude(&self, n: usize, sr_power: f64) -> f64 {
        let phi_sq = self.phi_sq(n, sr_power);
        match self.variant.harvesting {
            Harvesting::Instantaneous => (phi_sq * sr_power).sqrt(),
            Harvesting::Average => phi_sq.sqrt(),
        }
    }

    pub fn path_loss(&self) -> PathLoss {
        self.path_loss
    }
}

/// Gains for a frame in the given impulse states.
pub fn frame_gains(config: &SystemConfig, params: &McaParams, states: &FrameNoiseStates) -> Result<EffectiveGains> {
    let betas = [params.variance_factor(states.relays[0])?, params.variance_factor(states.relays[1])?];
    Ok(EffectiveGains::new(config, params.mean_power(), betas))
}

/// BPSK pair `(s1, s2)`.
pub type Codeword = [f64; 2];

/// Candidate codewords; decisions report indices into this table.
pub const CODEBOOK: [Codeword; 4] = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];

/// Space–time code matrix: `s1`, `s2` on the diagonal for phase 1 and the
/// Alamouti block `[[s1, -s2*], [s2, s1*]]` for phase 2.
pub fn code_matrix(s: Codeword) -> [[Complex64; 4]; 4] {
    let z = Complex64::new(0.0, 0.0);
    let c = |v: f64| Complex64::new(v, 0.0);
    let (s1, s2) = (c(s[0]), c(s[1]));
    [
        [s1, z, z, z],
        [z, s2, z, z],
        [z, z, s1, -s2.conj()],
        [z, z, s2, s1.conj()],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodewordPair {
    pub sent: Codeword,
    pub competitor: Codeword,
}

impl CodewordPair {
    /// `(1, 1)` against `(-1, -1)`, the pair with the largest `Δ`.
    pub const WORST_CASE: Self = Self {
        sent: [1.0, 1.0],
        competitor: [-1.0, -1.0],
    };

    pub fn new(sent: Codeword, competitor: Codeword) -> Result<Self> {
        for v in sent.iter().chain(&competitor) {
            if v.abs() != 1.0 {
                return Err(Error::invalid("codeword", format!("BPSK symbols must be ±1, got {v}")));
            }
        }
        if sent == competitor {
            return Err(Error::invalid("codeword", "competing codeword must differ from the sent one"));
        }
        Ok(Self { sent, competitor })
    }

    /// `Δ = |s1 - ŝ1|² + |s2 - ŝ2|²`.
    pub fn delta(&self) -> f64 {
        (self.sent[0] - self.competitor[0]).powi(2) + (self.sent[1] - self.competitor[1]).powi(2)
    }

    /// Eigenvalues of the phase-2 block of `(S - Ŝ)(S - Ŝ)^H`. The Alamouti
    /// difference block is a scaled unitary, so both equal `Δ`.
    pub fn eigenvalues(&self) -> [f64; 2] {
        [self.delta(); 2]
    }
}

/// Row vector of effective gains seen by the destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveChannel {
    /// `sqrt(Ps) h_sd`, used in slots 1 and 2.
    pub direct: Complex64,
    /// Coefficient of relay `n` in slot 3, `a_n h_sr,n h_rd,n`.
    pub slot3: [Complex64; 2],
    /// Coefficient of relay `n` in slot 4, `a_n h_sr,n* h_rd,n`.
    pub slot4: [Complex64; 2],
}

impl EffectiveChannel {
    pub fn new(gains: &EffectiveGains, source_power: f64, fading: &FadingRealization) -> Self {
        let mut slot3 = [Complex64::new(0.0, 0.0); 2];
        let mut slot4 = slot3;
        for n in 0..2 {
            let a = gains.relay_amplitude(n, fading.sr_power(n));
            let (sr, rd) = (fading.source_relay[n], fading.relay_destination[n]);
            slot3[n] = a * sr * rd;
            slot4[n] = a * sr.conj() * rd;
        }
        Self {
            direct: source_power.sqrt() * fading.source_destination,
            slot3,
            slot4,
        }
    }

    /// `h S(s)`.
    pub fn noiseless(&self, s: Codeword) -> [Complex64; 4] {
        let (s1, s2) = (Complex64::new(s[0], 0.0), Complex64::new(s[1], 0.0));
        [
            self.direct * s1,
            self.direct * s2,
            self.slot3[0] * s1 + self.slot3[1] * s2,
            -self.slot4[0] * s2.conj() + self.slot4[1] * s1.conj(),
        ]
    }

    /// `‖h S(s) - h S(ŝ)‖²`, including the relay cross term.
    pub fn euclidean_distance_sq(&self, pair: &CodewordPair) -> f64 {
        let a = self.noiseless(pair.sent);
        let b = self.noiseless(pair.competitor);
        a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum()
    }
}

/// How relayed noise reaches the destination in slots 3–4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelayNoise {
    /// Fresh Gaussian with the fading-averaged variance of the normalised
    /// slot, `N0 (Σ w_n β_r,n + β_d)/(Σ w_n + 1)`; `β N0` when all states agree.
    #[default]
    Equivalent,
    /// Relay receiver noise of phase 1 amplified and forwarded through the
    /// actual fading, plus destination noise, all divided by `Ω`.
    Composite,
}

impl FromStr for RelayNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equivalent" => Ok(RelayNoise::Equivalent),
            "composite" => Ok(RelayNoise::Composite),
            other => Err(Error::Config(format!("unknown relay noise model `{other}` (expected equivalent or composite)"))),
        }
    }
}

/// Amplitude `sqrt(P_r)/(G sqrt(L_rd) Ω)` applied to relay `n`'s receiver
/// noise.
fn relay_noise_scale(config: &SystemConfig, gains: &EffectiveGains, n: usize, sr_power: f64) -> f64 {
    let pl = gains.path_loss();
    let r = &config.relays[n];
    let pr = harvested_power(config.variant.harvesting, r, config.source_power, pl.source_relay[n], sr_power);
    let g2 = relay_gain_sq(config.variant.relaying, r, config.source_power, pl.source_relay[n], gains.n0, sr_power, gains.relay_betas[n]);
    (pr / (g2 * pl.relay_destination[n] * gains.omega_sq)).sqrt()
}

/// Variance of the noise in each of the four slots, conditioned on the
/// fading and the impulse states.
pub fn slot_noise_variances(config: &SystemConfig, gains: &EffectiveGains, fading: &FadingRealization, beta_destination: f64, mode: RelayNoise) -> [f64; 4] {
    let n0 = gains.n0;
    let direct = beta_destination * n0;
    let relayed = match mode {
        RelayNoise::Equivalent => {
            let w = gains.omega_weights;
            n0 * (w[0] * gains.relay_betas[0] + w[1] * gains.relay_betas[1] + beta_destination) / (w[0] + w[1] + 1.0)
        }
        RelayNoise::Composite => {
            let mut v = direct / gains.omega_sq;
            for n in 0..2 {
                let c = relay_noise_scale(config, gains, n, fading.sr_power(n));
                v += c * c * fading.rd_power(n) * gains.relay_betas[n] * (config.relays[n].kappa() + 1.0) * n0;
            }
            v
        }
    };
    [direct, direct, relayed, relayed]
}

/// One received frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub received: [Complex64; 4],
    pub channel: EffectiveChannel,
}

/// Synthesises the destination's four received samples for codeword `s`.
pub fn synthesize_frame<R: Rng + ?Sized>(
    config: &SystemConfig,
    gains: &EffectiveGains,
    fading: &FadingRealization,
    beta_destination: f64,
    s: Codeword,
    mode: RelayNoise,
    rng: &mut R,
) -> Frame {
    let channel = EffectiveChannel::new(gains, config.source_power, fading);
    let mut y = channel.noiseless(s);
    let n0 = gains.n0;
    let vd = beta_destination * n0;
    y[0] += sample_complex_gaussian(vd, rng);
    y[1] += sample_complex_gaussian(vd, rng);
    match mode {
        RelayNoise::Equivalent => {
            let v = slot_noise_variances(config, gains, fading, beta_destination, mode)[2];
            y[2] += sample_complex_gaussian(v, rng);
            y[3] += sample_complex_gaussian(v, rng);
        }
        RelayNoise::Composite => {
            // Receiver noise of relay n in slots 1 and 2.
            let mut nr = [[Complex64::new(0.0, 0.0); 2]; 2];
            let mut scale = [Complex64::new(0.0, 0.0); 2];
            for n in 0..2 {
                let var = gains.relay_betas[n] * (config.relays[n].kappa() + 1.0) * n0;
                nr[n] = [sample_complex_gaussian(var, rng), sample_complex_gaussian(var, rng)];
                scale[n] = relay_noise_scale(config, gains, n, fading.sr_power(n)) * fading.relay_destination[n];
            }
            let inv_omega = 1.0 / gains.omega();
            y[2] += scale[0] * nr[0][0] + scale[1] * nr[1][1] + sample_complex_gaussian(vd, rng) * inv_omega;
            y[3] += -scale[0] * nr[0][1].conj() + scale[1] * nr[1][0].conj() + sample_complex_gaussian(vd, rng) * inv_omega;
        }
    }
    Frame { received: y, channel }
}

/// Distance used by the analytical bounds:
/// `Δ Ps |h_sd|² + Σ ε_n Φ_n² |h_sr,n|^(2k) |h_rd,n|²` with `k = 2` under
/// instantaneous and `k = 1` under average harvesting.
pub fn distance_sq(gains: &EffectiveGains, source_power: f64, fading: &FadingRealization, pair: &CodewordPair) -> f64 {
    let eps = pair.eigenvalues();
    let k = gains.variant.sr_exponent();
    let mut d2 = pair.delta() * source_power * fading.source_destination.norm_sqr();
    for n in 0..2 {
        let x = fading.sr_power(n);
        d2 += eps[n] * gains.phi_sq(n, x) * x.powi(k) * fading.rd_power(n);
    }
    d2
}

fn metric(y: &[Complex64; 4], x: &[Complex64; 4]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// Minimum Euclidean distance decision over `codebook`; ties go to the
/// lowest index.
pub fn mdr_decide(received: &[Complex64; 4], channel: &EffectiveChannel, codebook: &[Codeword]) -> Result<usize> {
    if codebook.is_empty() {
        return Err(Error::invalid("codebook", "candidate codebook is empty"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in codebook.iter().enumerate() {
        let m = metric(received, &channel.noiseless(*c));
        if m < best.1 {
            best = (i, m);
        }
    }
    Ok(best.0)
}

/// Whether the receiver prefers `pair.competitor` over `pair.sent`.
pub fn pairwise_error(frame: &Frame, pair: &CodewordPair) -> bool {
    let to_competitor = metric(&frame.received, &frame.channel.noiseless(pair.competitor));
    let to_sent = metric(&frame.received, &frame.channel.noiseless(pair.sent));
    to_competitor < to_sent
}

/// `P(pairwise error | fading, states)` for independent per-slot Gaussian
/// noise: `Q(‖e‖² / sqrt(2 Σ |e_q|² σ_q²))`.
pub fn conditional_pairwise_error(channel: &EffectiveChannel, pair: &CodewordPair, variances: &[f64; 4]) -> f64 {
    let a = channel.noiseless(pair.sent);
    let b = channel.noiseless(pair.competitor);
    let mut energy = 0.0;
    let mut spread = 0.0;
    for q in 0..4 {
        let e = (a[q] - b[q]).norm_sqr();
        energy += e;
        spread += e * variances[q];
    }
    if energy == 0.0 {
        return 0.5;
    }
    crate::specfun::q_unchecked(energy / (2.0 * spread).sqrt())
}

/// Convenience for the frame's impulse states under a spatial model.
pub fn destination_beta(params: &McaParams, states: &FrameNoiseStates) -> Result<f64> {
    params.variance_factor(states.destination)
}
