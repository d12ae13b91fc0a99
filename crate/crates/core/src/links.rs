//! Heralded link generation in the edge nodes and the backbone.
//!
//! Closed forms cover the leading-order weights and probabilities. The full
//! conditional states, including multi-photon and dark-count contributions,
//! come from explicit circuits evaluated with [`crate::fock`].

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use crate::error::{positive, unit_interval, Error, Result};
use crate::fock::{DensityOp, DetectorOutcome, FockState, C64};

/// Which of the two heralding detectors clicked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    /// Detector pattern on (plus, minus) outputs that records this sign.
    pub fn pattern(self) -> [DetectorOutcome; 2] {
        match self {
            Sign::Plus => [DetectorOutcome::Click, DetectorOutcome::Vacuum],
            Sign::Minus => [DetectorOutcome::Vacuum, DetectorOutcome::Click],
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Settings of the Fock-space circuits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Maximum photon number per mode.
    pub cutoff: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { cutoff: 2 }
    }
}

/// Ion photon emission over one pulse, discretized into time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct IonEmission {
    pub alpha1_sq: f64,
    /// Pulse duration in seconds.
    pub pulse_duration: f64,
    /// Fraction of the photon wavepacket in each bin.
    pub envelope: Vec<f64>,
}

impl IonEmission {
    pub fn constant(alpha1_sq: f64, pulse_duration: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("at least one time bin is required".into()));
        }
        Self::with_envelope(alpha1_sq, pulse_duration, vec![1.0 / bins as f64; bins])
    }

    pub fn with_envelope(alpha1_sq: f64, pulse_duration: f64, envelope: Vec<f64>) -> Result<Self> {
        let ion = Self {
            alpha1_sq,
            pulse_duration,
            envelope,
        };
        ion.validate()?;
        Ok(ion)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("alpha1_sq", self.alpha1_sq)?;
        positive("pulse_duration", self.pulse_duration)?;
        if self.envelope.is_empty() || self.envelope.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("envelope must be nonempty and nonnegative".into()));
        }
        let total: f64 = self.envelope.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("envelope sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn alpha0_sq(&self) -> f64 {
        1.0 - self.alpha1_sq
    }

    pub fn bins(&self) -> usize {
        self.envelope.len()
    }

    fn is_uniform(&self) -> bool {
        let first = self.envelope[0];
        self.envelope.iter().all(|w| *w == first)
    }
}

/// Photon-pair emission of the SPDC source within one time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdcTimeBin {
    pub beta1_sq: f64,
    pub beta2_sq: f64,
    /// Bin (acceptance window) duration in seconds.
    pub bin_duration: f64,
    /// Pair correlation time in seconds.
    pub correlation_time: f64,
    /// Relative pump flux |μ|² in this bin; 1 for a constant drive.
    pub envelope_weight: f64,
    /// Index of the bin within the ion pulse.
    pub bin: usize,
}

impl SpdcTimeBin {
    /// Constant drive; the two-pair term follows from the single-pair one.
    pub fn new(beta1_sq: f64, bin_duration: f64, correlation_time: f64) -> Result<Self> {
        let spdc = Self {
            beta1_sq,
            beta2_sq: uncorrelated_pair_amplitude(beta1_sq)?,
            bin_duration,
            correlation_time,
            envelope_weight: 1.0,
            bin: 0,
        };
        spdc.validate()?;
        Ok(spdc)
    }

    /// Drive modulated so the pair flux follows the ion envelope.
    pub fn flux_matched(
        beta1_sq: f64,
        bin_duration: f64,
        correlation_time: f64,
        ion: &IonEmission,
        bin: usize,
    ) -> Result<Self> {
        let weight = ion
            .envelope
            .get(bin)
            .ok_or_else(|| Error::InvalidParameter(format!("bin {bin} outside the ion pulse")))?;
        let mut spdc = Self::new(beta1_sq, bin_duration, correlation_time)?;
        spdc.envelope_weight = ion.bins() as f64 * weight;
        spdc.bin = bin;
        Ok(spdc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.25).contains(&self.beta1_sq) {
            return Err(Error::Domain(format!("beta1_sq = {} outside [0, 1/4]", self.beta1_sq)));
        }
        positive("bin_duration", self.bin_duration)?;
        positive("correlation_time", self.correlation_time)?;
        if self.bin_duration < 3.0 * self.correlation_time * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(
                "bin duration must be at least three correlation times".into(),
            ));
        }
        if self.beta0_sq() < 0.0 {
            return Err(Error::Domain("pair probabilities exceed 1".into()));
        }
        Ok(())
    }

    pub fn beta0_sq(&self) -> f64 {
        1.0 - self.beta1_sq - self.beta2_sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEfficiencies {
    /// Ion branch, up to detection.
    pub eta: f64,
    /// SPDC branch before frequency conversion.
    pub eta0_prime: f64,
    /// Frequency conversion.
    pub eta_fc: f64,
    /// Memory branch, including release and detection.
    pub eta_m: f64,
    /// Backbone photon branch, including fiber.
    pub eta_bb: f64,
}

impl ChannelEfficiencies {
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            eta0_prime: 1.0,
            eta_fc: 1.0,
            eta_m: 1.0,
            eta_bb: 1.0,
        }
    }

    pub fn eta_prime(&self) -> f64 {
        self.eta0_prime * self.eta_fc
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("eta", self.eta)?;
        unit_interval("eta0_prime", self.eta0_prime)?;
        unit_interval("eta_fc", self.eta_fc)?;
        unit_interval("eta_m", self.eta_m)?;
        unit_interval("eta_bb", self.eta_bb)
    }
}

/// Two-pair probability of a weakly driven source with uncorrelated pairs.
pub fn uncorrelated_pair_amplitude(beta1_sq: f64) -> Result<f64> {
    if !(0.0..=0.25).contains(&beta1_sq) {
        return Err(Error::Domain(format!("beta1_sq = {beta1_sq} outside [0, 1/4]")));
    }
    // conjugate form of 1/2 - b - sqrt(1/4 - b), free of cancellation
    let b = beta1_sq;
    let denom = 0.5 - b + (0.25 - b).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * b * b / denom)
}

/// tan²θ for a click in the bin the SPDC description refers to.
pub fn mixing_tan_sq(ion: &IonEmission, spdc: &SpdcTimeBin, eff: &ChannelEfficiencies) -> Result<f64> {
    if ion.alpha1_sq <= 0.0 {
        return Err(Error::DegenerateInput("alpha1_sq = 0 gives an unbounded mixing angle".into()));
    }
    let ion_weight = *ion
        .envelope
        .get(spdc.bin)
        .ok_or_else(|| Error::InvalidParameter(format!("bin {} outside the ion pulse", spdc.bin)))?;
    let denom = eff.eta * ion_weight * ion.alpha1_sq * spdc.beta0_sq();
    if denom <= 0.0 {
        return Err(Error::DegenerateInput("ion branch carries no weight in this bin".into()));
    }
    Ok(eff.eta_prime() * eff.eta_m * spdc.envelope_weight * ion.alpha0_sq() * spdc.beta1_sq / denom)
}

pub fn mixing_angle(ion: &IonEmission, spdc: &SpdcTimeBin, eff: &ChannelEfficiencies) -> Result<f64> {
    Ok(mixing_tan_sq(ion, spdc, eff)?.sqrt().atan())
}

/// Leading-order vacuum and entangled weights (A0, A1) for a given tan²θ.
pub fn en_leading_weights(tan_sq: f64, eta_m: f64) -> (f64, f64) {
    let d = eta_m + tan_sq;
    ((1.0 - eta_m) * tan_sq / d, eta_m * (1.0 + tan_sq) / d)
}

/// Leading-order edge-node herald probability (both detectors).
pub fn en_success_probability(ion: &IonEmission, spdc: &SpdcTimeBin, eff: &ChannelEfficiencies) -> Result<f64> {
    if spdc.beta1_sq == 0.0 {
        return Ok(eff.eta * ion.alpha1_sq);
    }
    let t = mixing_tan_sq(ion, spdc, eff)?;
    if eff.eta_m <= 0.0 {
        return Err(Error::DegenerateInput("eta_m = 0".into()));
    }
    Ok(eff.eta * ion.alpha1_sq * (1.0 + t / eff.eta_m))
}

/// Normalized two-mode state heralded by a single click, with its weights in the
/// (vacuum, stray excitation, entangled, rest) decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedLink {
    pub a0: f64,
    pub a1_prime: f64,
    pub a1: f64,
    pub a2: f64,
    pub theta: f64,
    pub sign: Sign,
    /// Herald probability summed over both detectors.
    pub probability: f64,
    /// Weight dropped by the photon-number cutoff, relative to the herald.
    pub truncated_weight: f64,
    state: DensityOp,
}

impl HeraldedLink {
    /// Decomposes a normalized state of two modes. The coherence between
    /// |1,0⟩ and |0,1⟩ fixes θ; the part of |1,0⟩⟨1,0| it cannot explain is the
    /// stray excitation A1′ and everything outside the single-excitation
    /// sector other than vacuum is A2.
    pub fn from_state(state: DensityOp, probability: f64, truncated_weight: f64) -> Result<Self> {
        if state.labels().len() != 2 {
            return Err(Error::InvalidParameter("a link state has exactly two modes".into()));
        }
        let state = state.normalized()?;
        let a0 = state.population(&[0, 0])?;
        let p10 = state.population(&[1, 0])?;
        let p01 = state.population(&[0, 1])?;
        let coh = state.element(&[1, 0], &[0, 1])?;
        let c = coh.norm();
        let (theta, a1) = if p01 <= 0.0 {
            (0.0, p10)
        } else if c <= 0.0 {
            (FRAC_PI_2, p01)
        } else {
            ((p01 / c).atan(), p01 + c * c / p01)
        };
        let a1_prime = (p10 + p01 - a1).max(0.0);
        let a2 = (1.0 - a0 - a1 - a1_prime).max(0.0);
        Ok(Self {
            a0,
            a1_prime,
            a1,
            a2,
            theta,
            sign: Sign::of(coh.re),
            probability,
            truncated_weight,
            state,
        })
    }

    pub fn state(&self) -> &DensityOp {
        &self.state
    }

    pub fn modes(&self) -> (&str, &str) {
        let l = self.state.labels();
        (&l[0], &l[1])
    }

    /// The state heralded by the other detector.
    pub fn flipped(&self) -> Result<Self> {
        let second = self.modes().1.to_string();
        let mut out = self.clone();
        out.state = self.state.parity_flipped(&second)?;
        out.sign = self.sign.flipped();
        Ok(out)
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Single-pair vacuum, pair and two-pair amplitudes on (photon, partner) modes.
fn pair_source(photon: &str, partner: &str, p1: f64, cutoff: usize) -> Result<(FockState, f64)> {
    let p2 = uncorrelated_pair_amplitude(p1)?;
    let p0 = 1.0 - p1 - p2;
    let mut terms: Vec<(&[usize], C64)> = vec![(&[0, 0], real(p0.sqrt())), (&[1, 1], real(p1.sqrt()))];
    let mut dropped = 0.0;
    if cutoff >= 2 {
        terms.push((&[2, 2], real(p2.sqrt())));
    } else {
        dropped = p2;
    }
    Ok((FockState::from_terms(&[photon, partner], cutoff, &terms)?, dropped))
}

/// Unnormalized ion–memory state and probability for a click on the plus
/// detector in bin `bin`, with the other bins staying dark.
fn en_bin(
    ion: &IonEmission,
    spdc: &SpdcTimeBin,
    eff: &ChannelEfficiencies,
    dark_click_prob: f64,
    oracle: &OracleConfig,
    bin: usize,
    sign: Sign,
) -> Result<(DensityOp, f64, f64)> {
    let n = ion.bins() as f64;
    let cutoff = oracle.cutoff;
    let eta_prime = eff.eta_prime();
    let share = ion.envelope[bin];
    let a1 = ion.alpha1_sq.sqrt();
    let emitter = FockState::from_terms(
        &["ion", "a", "a_rest"],
        cutoff,
        &[
            (&[0, 0, 0], real(ion.alpha0_sq().sqrt())),
            (&[1, 1, 0], real(a1 * share.sqrt())),
            (&[1, 0, 1], real(a1 * (1.0 - share).max(0.0).sqrt())),
        ],
    )?;
    let (source, mut truncated) = pair_source("b", "mem", spdc.beta1_sq * n * share, cutoff)?;
    let psi = emitter
        .tensor(&source)?
        .with_vacuum(&["a_rest_det"])?
        .apply_beamsplitter("a_rest", "a_rest_det", 1.0 - eff.eta, 0.0)?
        .project(&[("a_rest_det", 0)])?
        .with_vacuum(&["a_loss", "b_loss"])?
        .apply_beamsplitter("a", "a_loss", eff.eta, 0.0)?
        .apply_beamsplitter("b", "b_loss", eta_prime, 0.0)?;
    let mut psi = psi;
    truncated += psi.discard_overflow("a", "b")?;
    let psi = psi.apply_beamsplitter("a", "b", 0.5, 0.0)?;
    let (rho, p) = psi.herald_click(&["a", "b"], &sign.pattern(), dark_click_prob, &["ion", "mem"])?;
    let rho = rho.apply_loss("mem", eff.eta_m)?;

    let mut others = 1.0;
    for (j, w) in ion.envelope.iter().enumerate() {
        if j != bin {
            let q1 = spdc.beta1_sq * n * w;
            let q2 = uncorrelated_pair_amplitude(q1)?;
            let lost = 1.0 - eta_prime;
            others *= 1.0 - q1 - q2 + q1 * lost + q2 * lost * lost;
        }
    }
    Ok((rho.scaled(others), p * others, truncated))
}

/// Ion–memory link heralded by a single click anywhere in the ion pulse, with
/// the pair flux matched to the ion envelope in every bin. The returned state
/// is the one heralded by the plus detector.
pub fn en_heralded_state(
    ion: &IonEmission,
    spdc: &SpdcTimeBin,
    eff: &ChannelEfficiencies,
    dark_click_prob: f64,
    oracle: &OracleConfig,
) -> Result<HeraldedLink> {
    ion.validate()?;
    spdc.validate()?;
    eff.validate()?;
    if spdc.beta1_sq * ion.bins() as f64 * ion.envelope.iter().cloned().fold(0.0, f64::max) > 0.25 {
        return Err(Error::Domain("flux-matched pair probability exceeds 1/4".into()));
    }
    let (rho, p_plus, truncated) = if ion.is_uniform() {
        let (r, p, t) = en_bin(ion, spdc, eff, dark_click_prob, oracle, 0, Sign::Plus)?;
        let k = ion.bins() as f64;
        (r.scaled(k), p * k, t)
    } else {
        let mut acc: Option<(DensityOp, f64, f64)> = None;
        for bin in 0..ion.bins() {
            let (r, p, t) = en_bin(ion, spdc, eff, dark_click_prob, oracle, bin, Sign::Plus)?;
            acc = Some(match acc {
                None => (r, p, t),
                Some((ra, pa, ta)) => (ra.plus(&r)?, pa + p, ta.max(t)),
            });
        }
        acc.expect("at least one bin")
    };
    if p_plus <= 0.0 {
        return Err(Error::ZeroProbability("edge-node herald never fires".into()));
    }
    HeraldedLink::from_state(rho, 2.0 * p_plus, truncated / p_plus.max(f64::MIN_POSITIVE))
}

/// Memory–memory link of one backbone segment: two pair sources whose photons
/// meet on a balanced beamsplitter in the middle. Uses `eff.eta_bb` for the
/// photons and `eff.eta_m` for the stored partners.
pub fn bb_heralded_state(
    left: &SpdcTimeBin,
    right: &SpdcTimeBin,
    eff: &ChannelEfficiencies,
    dark_click_prob: f64,
    oracle: &OracleConfig,
) -> Result<HeraldedLink> {
    left.validate()?;
    right.validate()?;
    eff.validate()?;
    let cutoff = oracle.cutoff;
    let (src_l, tl) = pair_source("b_left", "mem_left", left.beta1_sq, cutoff)?;
    let (src_r, tr) = pair_source("b_right", "mem_right", right.beta1_sq, cutoff)?;
    let mut psi = src_l
        .tensor(&src_r)?
        .with_vacuum(&["b_left_loss", "b_right_loss"])?
        .apply_beamsplitter("b_left", "b_left_loss", eff.eta_bb, 0.0)?
        .apply_beamsplitter("b_right", "b_right_loss", eff.eta_bb, 0.0)?;
    let truncated = tl + tr + psi.discard_overflow("b_left", "b_right")?;
    let psi = psi.apply_beamsplitter("b_left", "b_right", 0.5, 0.0)?;
    let (rho, p_plus) = psi.herald_click(
        &["b_left", "b_right"],
        &Sign::Plus.pattern(),
        dark_click_prob,
        &["mem_left", "mem_right"],
    )?;
    if p_plus <= 0.0 {
        return Err(Error::ZeroProbability("backbone herald never fires".into()));
    }
    let rho = rho.apply_loss("mem_left", eff.eta_m)?.apply_loss("mem_right", eff.eta_m)?;
    HeraldedLink::from_state(rho, 2.0 * p_plus, truncated / p_plus)
}

/// Per-mode backbone herald probability, summed over both detectors.
pub fn bb_success_probability(
    left: &SpdcTimeBin,
    right: &SpdcTimeBin,
    eff: &ChannelEfficiencies,
    dark_click_prob: f64,
    oracle: &OracleConfig,
) -> Result<f64> {
    if eff.eta_bb == 0.0 && dark_click_prob == 0.0 {
        return Ok(0.0);
    }
    Ok(bb_heralded_state(left, right, eff, dark_click_prob, oracle)?.probability)
}

/// Ion–ion state heralded by a single click between two ions whose photons
/// each reach the middle station with efficiency `channel_efficiency`.
/// Returns the normalized state over ("ion_a", "ion_b") for the plus detector
/// and the herald probability summed over both detectors.
pub fn ion_ion_single_click(
    alpha1_sq: f64,
    channel_efficiency: f64,
    dark_click_prob: f64,
    oracle: &OracleConfig,
) -> Result<(DensityOp, f64)> {
    unit_interval("alpha1_sq", alpha1_sq)?;
    unit_interval("channel_efficiency", channel_efficiency)?;
    let cutoff = oracle.cutoff;
    let emitter = |ion: &str, photon: &str| {
        FockState::from_terms(
            &[ion, photon],
            cutoff,
            &[
                (&[0, 0], real((1.0 - alpha1_sq).sqrt())),
                (&[1, 1], real(alpha1_sq.sqrt())),
            ],
        )
    };
    let mut psi = emitter("ion_a", "a")?
        .tensor(&emitter("ion_b", "b")?)?
        .with_vacuum(&["a_loss", "b_loss"])?
        .apply_beamsplitter("a", "a_loss", channel_efficiency, 0.0)?
        .apply_beamsplitter("b", "b_loss", channel_efficiency, 0.0)?;
    psi.discard_overflow("a", "b")?;
    let psi = psi.apply_beamsplitter("a", "b", 0.5, 0.0)?;
    let (rho, p_plus) = psi.herald_click(&["a", "b"], &Sign::Plus.pattern(), dark_click_prob, &["ion_a", "ion_b"])?;
    if p_plus <= 0.0 {
        return Err(Error::ZeroProbability("direct herald never fires".into()));
    }
    Ok((rho.normalized()?, 2.0 * p_plus))
}
