//! Waiting times, scenario parameters and end-to-end durations.

use std::fmt;
use std::str::FromStr;

use crate::error::{positive, unit_interval, Error, Result};
use crate::links::{
    bb_heralded_state, en_heralded_state, ion_ion_single_click, ChannelEfficiencies, IonEmission, OracleConfig,
    SpdcTimeBin,
};
use crate::swaps::{compose_final_state, fidelity, ion_swap, purify, IonIonState, SwapRecord, SwapTopology};

pub const VACUUM_LIGHT_SPEED_KM_S: f64 = 299_792.458;

/// Efficiencies that do not depend on distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEfficiencies {
    pub eta: f64,
    pub eta0_prime: f64,
    pub eta_fc: f64,
    pub eta_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub distance_km: f64,
    pub topology: SwapTopology,
    /// Memory modes per backbone round.
    pub n_bb: u32,
    pub attenuation_db_per_km: f64,
    pub fiber_light_speed_km_s: f64,
    pub ion_pulse_duration_s: f64,
    pub bin_duration_s: f64,
    pub correlation_time_s: f64,
    pub detector_resolution_s: f64,
    pub dark_count_rate_hz: f64,
    pub efficiencies: NodeEfficiencies,
    pub target_fidelity: f64,
    pub en_reset_time_s: f64,
}

impl ScenarioConfig {
    /// Reference parameter set used throughout the comparison of protocols.
    pub fn baseline(distance_km: f64, topology: SwapTopology) -> Self {
        Self {
            distance_km,
            topology,
            n_bb: 1000,
            attenuation_db_per_km: 0.2,
            fiber_light_speed_km_s: VACUUM_LIGHT_SPEED_KM_S * 2.0 / 3.0,
            ion_pulse_duration_s: 10e-6,
            bin_duration_s: 1e-6,
            correlation_time_s: 100e-9,
            detector_resolution_s: 1e-9,
            dark_count_rate_hz: 1e-3,
            efficiencies: NodeEfficiencies {
                eta: 0.9,
                eta0_prime: 0.9,
                eta_fc: 0.9,
                eta_m: 0.8,
            },
            target_fidelity: 0.99,
            en_reset_time_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "distance_km = {} must be nonnegative",
                self.distance_km
            )));
        }
        if self.n_bb == 0 {
            return Err(Error::InvalidParameter("n_bb must be at least 1".into()));
        }
        positive("attenuation_db_per_km", self.attenuation_db_per_km)?;
        positive("fiber_light_speed_km_s", self.fiber_light_speed_km_s)?;
        positive("ion_pulse_duration_s", self.ion_pulse_duration_s)?;
        positive("bin_duration_s", self.bin_duration_s)?;
        positive("correlation_time_s", self.correlation_time_s)?;
        positive("detector_resolution_s", self.detector_resolution_s)?;
        if !(self.dark_count_rate_hz >= 0.0 && self.dark_count_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter("dark_count_rate_hz must be nonnegative".into()));
        }
        if !(self.en_reset_time_s >= 0.0 && self.en_reset_time_s.is_finite()) {
            return Err(Error::InvalidParameter("en_reset_time_s must be nonnegative".into()));
        }
        let e = &self.efficiencies;
        unit_interval("eta", e.eta)?;
        unit_interval("eta0_prime", e.eta0_prime)?;
        unit_interval("eta_fc", e.eta_fc)?;
        unit_interval("eta_m", e.eta_m)?;
        if !(self.target_fidelity > 0.5 && self.target_fidelity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target_fidelity = {} must lie in (0.5, 1]",
                self.target_fidelity
            )));
        }
        let ratio = self.ion_pulse_duration_s / self.bin_duration_s;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::InvalidParameter(format!(
                "ion pulse ({} s) is not a whole number of bins ({} s)",
                self.ion_pulse_duration_s, self.bin_duration_s
            )));
        }
        if self.bin_duration_s < 3.0 * self.correlation_time_s * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(
                "bin_duration_s must be at least three correlation times".into(),
            ));
        }
        if self.detector_resolution_s > self.bin_duration_s {
            return Err(Error::InvalidParameter("detector resolution exceeds the bin duration".into()));
        }
        Ok(())
    }

    pub fn time_bins(&self) -> usize {
        (self.ion_pulse_duration_s / self.bin_duration_s).round() as usize
    }

    /// Length of one fiber segment (edge node or repeater to a heralding station).
    pub fn segment_km(&self) -> f64 {
        self.distance_km / self.topology.n_segments() as f64
    }

    pub fn channel_efficiencies(&self) -> ChannelEfficiencies {
        let e = &self.efficiencies;
        ChannelEfficiencies {
            eta: e.eta,
            eta0_prime: e.eta0_prime,
            eta_fc: e.eta_fc,
            eta_m: e.eta_m,
            eta_bb: e.eta0_prime * fiber_transmission(self.segment_km(), self.attenuation_db_per_km),
        }
    }

    /// Time for a backbone photon to reach its station and the result to return.
    pub fn bb_round_time(&self) -> f64 {
        2.0 * self.segment_km() / self.fiber_light_speed_km_s
    }

    pub fn en_attempt_time(&self) -> f64 {
        self.ion_pulse_duration_s + self.en_reset_time_s
    }

    /// Dark-click probability of one detector within a resolved click window.
    pub fn resolved_dark_click_prob(&self) -> f64 {
        self.dark_count_rate_hz * self.detector_resolution_s
    }

    /// Dark-click probability of one backbone detector within an acceptance window.
    pub fn bb_dark_click_prob(&self) -> f64 {
        self.dark_count_rate_hz * self.bin_duration_s
    }

    /// Dark-click probability of one detector over a full ion pulse.
    pub fn pulse_dark_click_prob(&self) -> f64 {
        self.dark_count_rate_hz * self.ion_pulse_duration_s
    }

    /// Time for the final swap outcome to reach the edge nodes.
    pub fn classical_delay(&self) -> f64 {
        self.distance_km / (2.0 * self.fiber_light_speed_km_s)
    }
}

/// Protocols compared in the distance sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolVariant {
    Direct,
    DirectIonRepeater,
    Hybrid,
    HybridRepeater,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 4] = [
        Self::Direct,
        Self::DirectIonRepeater,
        Self::Hybrid,
        Self::HybridRepeater,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::DirectIonRepeater => "direct-ion-repeater",
            Self::Hybrid => "hybrid",
            Self::HybridRepeater => "hybrid-repeater",
        }
    }

    /// Swap chain of the hybrid variants.
    pub fn topology(self) -> Option<SwapTopology> {
        match self {
            Self::Hybrid => Some(SwapTopology::WithoutRepeater),
            Self::HybridRepeater => Some(SwapTopology::WithRepeater),
            _ => None,
        }
    }

    pub fn is_direct(self) -> bool {
        self.topology().is_none()
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "direct-ion-repeater" | "direct+ion-repeater" => Ok(Self::DirectIonRepeater),
            "hybrid" => Ok(Self::Hybrid),
            "hybrid-repeater" | "hybrid+central-repeater" | "hybrid-central-repeater" => Ok(Self::HybridRepeater),
            other => Err(Error::InvalidParameter(format!("unknown protocol `{other}`"))),
        }
    }
}

pub fn fiber_transmission(l_km: f64, attenuation_db_per_km: f64) -> f64 {
    10f64.powf(-attenuation_db_per_km * l_km / 10.0)
}

pub fn en_expected_wait(p_en: f64, pulse_duration: f64, reset_time: f64) -> f64 {
    (pulse_duration + reset_time) / p_en
}

/// Probability that at least one of `modes` multiplexed modes heralds in a round.
pub fn bb_round_success(p_mode: f64, modes: u32) -> f64 {
    if p_mode >= 1.0 {
        return 1.0;
    }
    -(modes as f64 * (-p_mode).ln_1p()).exp_m1()
}

pub fn bb_expected_wait(p_mode: f64, modes: u32, round_time: f64) -> f64 {
    round_time / bb_round_success(p_mode, modes)
}

/// Process that succeeds with probability `success` at the end of every
/// `period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricClock {
    pub period: f64,
    pub success: f64,
}

impl GeometricClock {
    fn validate(&self) -> Result<()> {
        if !(self.period >= 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParameter(format!("period {} must be nonnegative", self.period)));
        }
        if !(self.success > 0.0 && self.success <= 1.0) {
            return Err(Error::InvalidParameter(format!("success probability {} outside (0, 1]", self.success)));
        }
        Ok(())
    }
}

/// (1 − r^k) / (1 − r) for r = 1 − p.
fn geometric_partial_sum(p: f64, k: f64) -> f64 {
    if p >= 1.0 {
        return if k > 0.0 { 1.0 } else { 0.0 };
    }
    -(k * (-p).ln_1p()).exp_m1() / p
}

/// ∫ over [x0, x1] of r^⌊t/τ⌋, where r = 1 − p.
fn staircase_integral(tau: f64, p: f64, x0: f64, x1: f64) -> f64 {
    let lr = (-p).ln_1p();
    let pow = |k: f64| if p >= 1.0 { if k == 0.0 { 1.0 } else { 0.0 } } else { (k * lr).exp() };
    let k0 = (x0 / tau).floor();
    let k1 = (x1 / tau).floor();
    if k0 == k1 {
        return (x1 - x0) * pow(k0);
    }
    let head = ((k0 + 1.0) * tau - x0) * pow(k0);
    let middle = tau * pow(k0 + 1.0) * geometric_partial_sum(p, k1 - k0 - 1.0);
    let tail = (x1 - k1 * tau) * pow(k1);
    head + middle + tail
}

/// ∫ r_a^⌊t/τ_a⌋ r_b^⌊t/τ_b⌋ dt over [0, ∞) for τ_a < τ_b.
fn two_clock_integral(tau_a: f64, p_a: f64, tau_b: f64, p_b: f64) -> f64 {
    let lra = (-p_a).ln_1p();
    let lrb = (-p_b).ln_1p();
    let decay = lrb + lra * (tau_b / tau_a).floor();
    let needed = if decay < 0.0 { 40.0 / -decay } else { f64::INFINITY };
    if needed > 5e6 {
        // staircases sample their fractional offsets uniformly
        let ca = if p_a >= 1.0 { 1.0 } else { (p_a / (1.0 - p_a)) / -lra };
        let cb = if p_b >= 1.0 { 1.0 } else { (p_b / (1.0 - p_b)) / -lrb };
        return ca * cb / (-lra / tau_a - lrb / tau_b);
    }
    let mut total = 0.0;
    let mut m = 0.0;
    loop {
        let weight = if p_b >= 1.0 {
            if m == 0.0 { 1.0 } else { 0.0 }
        } else {
            (m * lrb).exp()
        };
        let piece = weight * staircase_integral(tau_a, p_a, m * tau_b, (m + 1.0) * tau_b);
        total += piece;
        if piece <= total * 1e-17 || weight == 0.0 {
            break;
        }
        m += 1.0;
    }
    total
}

/// Expected completion time of the slowest of several independent processes,
/// via inclusion–exclusion over subsets with closed-form staircase integrals.
pub fn expected_max(clocks: &[GeometricClock]) -> Result<f64> {
    for c in clocks {
        c.validate()?;
    }
    let active: Vec<GeometricClock> = clocks.iter().copied().filter(|c| c.period > 0.0).collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    if active.len() > 10 {
        return expected_max_by_summation(&active);
    }
    let mut total = 0.0;
    for mask in 1u32..(1 << active.len()) {
        // group the subset by clock period, multiplying failure probabilities
        let mut groups: Vec<(f64, f64)> = Vec::new();
        for (i, c) in active.iter().enumerate() {
            if mask >> i & 1 == 1 {
                let fail_log = (-c.success).ln_1p();
                match groups.iter_mut().find(|(tau, _)| *tau == c.period) {
                    Some(g) => g.1 += fail_log,
                    None => groups.push((c.period, fail_log)),
                }
            }
        }
        let to_p = |log_r: f64| -log_r.exp_m1();
        let term = match groups.as_slice() {
            [(tau, lr)] => tau / to_p(*lr),
            [(ta, la), (tb, lb)] => {
                if ta < tb {
                    two_clock_integral(*ta, to_p(*la), *tb, to_p(*lb))
                } else {
                    two_clock_integral(*tb, to_p(*lb), *ta, to_p(*la))
                }
            }
            _ => {
                let sub: Vec<GeometricClock> = active
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, c)| *c)
                    .collect();
                expected_min_by_summation(&sub)?
            }
        };
        if mask.count_ones() % 2 == 1 {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(total)
}

/// Steps through the merged event times of all clocks, integrating the
/// survival function of the combined completion time.
fn integrate_events(clocks: &[GeometricClock], survival: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut alive: Vec<f64> = vec![1.0; clocks.len()];
    let mut ticks: Vec<f64> = vec![1.0; clocks.len()];
    let mut t = 0.0;
    let mut total = 0.0;
    for _ in 0..50_000_000u64 {
        let s = survival(&alive);
        if s < 1e-13 {
            return Ok(total);
        }
        let next = clocks
            .iter()
            .zip(&ticks)
            .map(|(c, k)| c.period * k)
            .fold(f64::INFINITY, f64::min);
        total += s * (next - t);
        t = next;
        for ((c, k), a) in clocks.iter().zip(ticks.iter_mut()).zip(alive.iter_mut()) {
            if c.period * *k <= next {
                *a *= 1.0 - c.success;
                *k += 1.0;
            }
        }
    }
    Err(Error::InvalidParameter("waiting-time summation did not converge".into()))
}

/// Expected maximum by direct summation over the merged event times; slower
/// than [`expected_max`] but free of cancellations.
pub fn expected_max_by_summation(clocks: &[GeometricClock]) -> Result<f64> {
    for c in clocks {
        c.validate()?;
    }
    let active: Vec<GeometricClock> = clocks.iter().copied().filter(|c| c.period > 0.0).collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    integrate_events(&active, |alive| 1.0 - alive.iter().map(|a| 1.0 - a).product::<f64>())
}

fn expected_min_by_summation(clocks: &[GeometricClock]) -> Result<f64> {
    integrate_events(clocks, |alive| alive.iter().product())
}

/// Emission probabilities of the ion, the edge-node source and the backbone sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionProbabilities {
    pub alpha1_sq: f64,
    pub beta1_sq: f64,
    pub gamma1_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageBreakdown {
    /// Mean wait for one edge-node link on its own.
    pub en_wait: f64,
    /// Mean wait for one backbone link on its own.
    pub bb_wait: f64,
    /// Mean time until all links exist.
    pub parallel_wait: f64,
    pub classical_delay: f64,
    /// Product of all swap success probabilities.
    pub swap_success: f64,
    pub t_sl: f64,
}

/// Duration of one heralded end-to-end link before purification.
pub fn single_link_duration(
    cfg: &ScenarioConfig,
    p_en: f64,
    p_bb: f64,
    p_s1_left: f64,
    p_s1_right: Option<f64>,
    p_s2: f64,
) -> Result<StageBreakdown> {
    for (name, p) in [("P_EN", p_en), ("P_BB", p_bb), ("P_S1", p_s1_left), ("P_S2", p_s2)]
        .into_iter()
        .chain(p_s1_right.map(|p| ("P_S1 right", p)))
    {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::ZeroProbability(format!("{name} = {p} outside (0, 1]")));
        }
    }
    let en = GeometricClock {
        period: cfg.en_attempt_time(),
        success: p_en,
    };
    let round = cfg.bb_round_time();
    let bb = GeometricClock {
        period: round,
        success: bb_round_success(p_bb, cfg.n_bb),
    };
    let mut clocks = vec![en, en];
    clocks.extend(std::iter::repeat_n(bb, cfg.topology.backbone_links()));
    let parallel_wait = expected_max(&clocks)?;
    let swap_success = p_s1_left * p_s1_right.unwrap_or(1.0) * p_s2;
    let classical_delay = cfg.classical_delay();
    Ok(StageBreakdown {
        en_wait: en_expected_wait(p_en, cfg.ion_pulse_duration_s, cfg.en_reset_time_s),
        bb_wait: bb_expected_wait(p_bb, cfg.n_bb, round),
        parallel_wait,
        classical_delay,
        swap_success,
        t_sl: (parallel_wait + classical_delay) / swap_success,
    })
}

/// Mean duration including one purification round on two sequential links.
pub fn total_duration(t_sl: f64, p_p: f64) -> f64 {
    2.0 * t_sl / p_p
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationResult {
    pub probabilities: EmissionProbabilities,
    pub t_sl: f64,
    pub t_total: f64,
    pub stages: StageBreakdown,
    /// Fidelity after purification.
    pub fidelity: f64,
    pub unpurified_fidelity: f64,
    pub p_en: f64,
    pub p_bb: f64,
    pub p_s1_left: f64,
    pub p_s1_right: Option<f64>,
    pub p_s2: f64,
    pub p_p: f64,
    pub state: IonIonState,
}

/// Full evaluation of a hybrid chain for given emission probabilities.
pub fn evaluate_hybrid(
    cfg: &ScenarioConfig,
    probs: &EmissionProbabilities,
    oracle: &OracleConfig,
) -> Result<DurationResult> {
    cfg.validate()?;
    let eff = cfg.channel_efficiencies();
    let ion = IonEmission::constant(probs.alpha1_sq, cfg.ion_pulse_duration_s, cfg.time_bins())?;
    let en_source = SpdcTimeBin::new(probs.beta1_sq, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let en = en_heralded_state(&ion, &en_source, &eff, cfg.resolved_dark_click_prob(), oracle)?;
    let bb_source = SpdcTimeBin::new(probs.gamma1_sq, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let bb = bb_heralded_state(&bb_source, &bb_source, &eff, cfg.bb_dark_click_prob(), oracle)?;
    let backbone = vec![bb.clone(); cfg.topology.backbone_links()];
    let swaps = compose_final_state(
        &en,
        &backbone,
        &en,
        cfg.topology,
        cfg.resolved_dark_click_prob(),
        &SwapRecord::default(),
    )?;
    let (purified, p_p) = purify(&swaps.state, &swaps.state)?;
    let stages = single_link_duration(cfg, en.probability, bb.probability, swaps.p_s1_left, swaps.p_s1_right, swaps.p_s2)?;
    Ok(DurationResult {
        probabilities: *probs,
        t_sl: stages.t_sl,
        t_total: total_duration(stages.t_sl, p_p),
        stages,
        fidelity: fidelity(&purified),
        unpurified_fidelity: fidelity(&swaps.state),
        p_en: en.probability,
        p_bb: bb.probability,
        p_s1_left: swaps.p_s1_left,
        p_s1_right: swaps.p_s1_right,
        p_s2: swaps.p_s2,
        p_p,
        state: purified,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectEvaluation {
    pub alpha1_sq: f64,
    pub duration: f64,
    pub fidelity: f64,
    /// Herald probability of one single-click attempt.
    pub probability: f64,
    pub state: IonIonState,
}

/// Single-click ion–ion generation over the full distance, or over two halves
/// joined by a deterministic swap at a central ion.
pub fn direct_protocol_duration(
    cfg: &ScenarioConfig,
    alpha1_sq: f64,
    ion_repeater: bool,
    oracle: &OracleConfig,
) -> Result<DirectEvaluation> {
    cfg.validate()?;
    let arm = if ion_repeater {
        cfg.distance_km / 2.0
    } else {
        cfg.distance_km
    };
    let e = &cfg.efficiencies;
    let channel = e.eta_fc * e.eta * fiber_transmission(arm, cfg.attenuation_db_per_km);
    let (rho, p) = ion_ion_single_click(alpha1_sq, channel, cfg.pulse_dark_click_prob(), oracle)?;
    let link = IonIonState::from_density(&rho)?;
    let attempt = cfg.en_attempt_time() + 2.0 * arm / cfg.fiber_light_speed_km_s;
    let (duration, state) = if ion_repeater {
        let clock = GeometricClock {
            period: attempt,
            success: p,
        };
        let wait = expected_max(&[clock, clock])?;
        (wait + cfg.classical_delay(), ion_swap(&link, &link)?)
    } else {
        (attempt / p, link)
    };
    Ok(DirectEvaluation {
        alpha1_sq,
        duration,
        fidelity: fidelity(&state),
        probability: p,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiber_examples() {
        assert_eq!(fiber_transmission(0.0, 0.2), 1.0);
        assert!((fiber_transmission(50.0, 0.2) - 0.1).abs() < 1e-15);
        let l_att = 10.0 / (0.2 * std::f64::consts::LN_10);
        assert!((fiber_transmission(l_att, 0.2) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn wait_examples() {
        assert!((en_expected_wait(0.01, 10e-6, 0.0) - 1e-3).abs() < 1e-18);
        assert!((bb_round_success(1e-3, 1000) - (1.0 - 0.999f64.powi(1000))).abs() < 1e-14);
        assert!((bb_round_success(1e-3, 1000) - 0.6323).abs() < 1e-4);
        assert_eq!(bb_expected_wait(1.0, 1, 2e-3), 2e-3);
        let mut cfg = ScenarioConfig::baseline(400.0, SwapTopology::WithRepeater);
        cfg.fiber_light_speed_km_s = 2e5;
        assert!((cfg.bb_round_time() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn two_identical_clocks() {
        for p in [1e-4, 1e-2, 0.5, 1.0] {
            let c = GeometricClock { period: 2.0, success: p };
            let exact = 2.0 * (2.0 / p - 1.0 / (1.0 - (1.0 - p) * (1.0 - p)));
            let got = expected_max(&[c, c]).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-12, "{p}: {got} vs {exact}");
        }
    }

    #[test]
    fn closed_form_matches_summation() {
        let a = GeometricClock { period: 1e-5, success: 3e-3 };
        let b = GeometricClock { period: 7.3e-4, success: 0.4 };
        let c = GeometricClock { period: 2.9e-4, success: 0.2 };
        for set in [vec![a, a, b], vec![a, a, b, b], vec![a, b, c]] {
            let fast = expected_max(&set).unwrap();
            let slow = expected_max_by_summation(&set).unwrap();
            assert!((fast / slow - 1.0).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn unit_probabilities_at_zero_distance() {
        let cfg = ScenarioConfig::baseline(0.0, SwapTopology::WithRepeater);
        let s = single_link_duration(&cfg, 1.0, 1.0, 1.0, Some(1.0), 1.0).unwrap();
        assert!((s.t_sl - cfg.ion_pulse_duration_s).abs() < 1e-18);
        let half = single_link_duration(&cfg, 1.0, 1.0, 1.0, Some(1.0), 0.5).unwrap();
        assert!((half.t_sl - 2.0 * s.t_sl).abs() < 1e-18);
    }

    #[test]
    fn purification_overhead() {
        assert_eq!(total_duration(1.0, 1.0), 2.0);
        assert_eq!(total_duration(1.0, 0.5), 4.0);
        assert!((total_duration(1.0, 0.3048) - 6.5617).abs() < 1e-4);
    }

    #[test]
    fn protocol_names_round_trip() {
        for v in ProtocolVariant::ALL {
            assert_eq!(v.name().parse::<ProtocolVariant>().unwrap(), v);
        }
        assert_eq!("direct+ion-repeater".parse::<ProtocolVariant>().unwrap(), ProtocolVariant::DirectIonRepeater);
        assert!("fast".parse::<ProtocolVariant>().is_err());
    }
}
