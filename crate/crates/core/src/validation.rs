use nalgebra::{DMatrix, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use crate::error::Result;
use crate::links::{
    bb_heralded_state, en_heralded_state, en_leading_weights, en_success_probability, mixing_tan_sq,
    uncorrelated_pair_amplitude, ChannelEfficiencies, HeraldedLink, IonEmission, OracleConfig, Sign,
    SpdcTimeBin,
};
use crate::optimize::{beta_for_tan_sq, semi_analytic_theta};
use crate::swaps::{
    compose_final_state, fidelity, optimal_tan_sq, purify, swap1_probability, swap2_probability, IonIonState,
    SwapRecord, SwapTopology,
};
use crate::timing::{
    bb_expected_wait, evaluate_hybrid, expected_max, single_link_duration, total_duration, EmissionProbabilities,
    GeometricClock, NodeEfficiencies, ScenarioConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when the measured value does not exceed the tolerance.
    AtMost,
    /// Passes when the measured value reaches the tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            bound: Bound::AtMost,
            pass: measured <= tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            bound: Bound::AtLeast,
            pass: measured >= tolerance,
        }
    }

    /// A check whose computation failed outright.
    fn errored(name: impl Into<String>, bound: Bound, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            tolerance,
            bound,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    fn push(&mut self, result: Result<Check>, name: &str, bound: Bound, tolerance: f64) {
        self.checks
            .push(result.unwrap_or_else(|_| Check::errored(name, bound, tolerance)));
    }
}

/// Relative deviations of the oracle from the leading-order closed forms, in
/// the order A0, A1, P_EN, P_S1, P_S2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancies {
    pub a0: f64,
    pub a1: f64,
    pub p_en: f64,
    pub p_s1: f64,
    pub p_s2: f64,
    /// Largest weight the link circuits dropped at the photon-number cutoff,
    /// relative to the heralded probability. Swap truncation is left out: a
    /// truncated swap input carries at least two photons and cannot herald.
    pub truncated: f64,
}

impl Discrepancies {
    pub fn as_array(&self) -> [f64; 5] {
        [self.a0, self.a1, self.p_en, self.p_s1, self.p_s2]
    }
}

pub const DISCREPANCY_NAMES: [&str; 5] = ["a0", "a1", "p_en", "p_s1", "p_s2"];

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Oracle-versus-closed-form deviations with ion and backbone emission
/// probability `eps` and the edge-node pair probability fixed by the
/// semi-analytic mixing angle.
pub fn oracle_discrepancies(cfg: &ScenarioConfig, eps: f64, oracle: &OracleConfig) -> Result<Discrepancies> {
    let eff = cfg.channel_efficiencies();
    let eta_m = eff.eta_m;
    let target = semi_analytic_theta(eta_m, cfg.topology)?.tan().powi(2);
    let beta1_sq = beta_for_tan_sq(cfg, eps, target)?;
    let ion = IonEmission::constant(eps, cfg.ion_pulse_duration_s, cfg.time_bins())?;
    let en_source = SpdcTimeBin::new(beta1_sq, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let bb_source = SpdcTimeBin::new(eps, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let tan_sq = mixing_tan_sq(&ion, &en_source, &eff)?;
    let theta = tan_sq.sqrt().atan();
    let en = en_heralded_state(&ion, &en_source, &eff, cfg.resolved_dark_click_prob(), oracle)?;
    let bb = bb_heralded_state(&bb_source, &bb_source, &eff, cfg.bb_dark_click_prob(), oracle)?;
    let truncated = en.truncated_weight.max(bb.truncated_weight);
    let backbone = vec![bb; cfg.topology.backbone_links()];
    let swaps = compose_final_state(
        &en,
        &backbone,
        &en,
        cfg.topology,
        cfg.resolved_dark_click_prob(),
        &SwapRecord::default(),
    )?;
    let (a0, a1) = en_leading_weights(tan_sq, eta_m);
    Ok(Discrepancies {
        a0: relative(en.a0, a0),
        a1: relative(en.a1, a1),
        p_en: relative(en.probability, en_success_probability(&ion, &en_source, &eff)?),
        p_s1: relative(swaps.p_s1_left, swap1_probability(theta, eta_m)),
        p_s2: relative(swaps.p_s2, swap2_probability(theta, eta_m, cfg.topology)),
        truncated,
    })
}

/// Residual of the uncorrelated-pair condition b + 2q = 2q / (b + 2q).
pub fn pair_condition_residual(beta1_sq: f64, beta2_sq: f64) -> f64 {
    let s = beta1_sq + 2.0 * beta2_sq;
    if s == 0.0 {
        return 0.0;
    }
    (s - 2.0 * beta2_sq / s).abs()
}

/// Two-copy purification computed on the full four-ion density matrix: CNOTs
/// from the first pair onto the second, then both targets measured in |1⟩.
pub fn brute_force_purification(s1: &IonIonState, s2: &IonIonState) -> Option<(Matrix4<f64>, f64)> {
    let (m1, m2) = (s1.to_matrix(), s2.to_matrix());
    // qubit order (a1, b1, a2, b2), a1 most significant
    let mut rho = DMatrix::<f64>::zeros(16, 16);
    for i in 0..16 {
        for j in 0..16 {
            rho[(i, j)] = m1[(i >> 2, j >> 2)] * m2[(i & 3, j & 3)];
        }
    }
    let cnots = |x: usize| {
        let (a1, b1) = ((x >> 3) & 1, (x >> 2) & 1);
        x ^ (a1 << 1) ^ b1
    };
    let mut out = Matrix4::<f64>::zeros();
    for i in 0..16 {
        for j in 0..16 {
            let (ci, cj) = (cnots(i), cnots(j));
            if ci & 3 == 3 && cj & 3 == 3 {
                out[(ci >> 2, cj >> 2)] += rho[(i, j)];
            }
        }
    }
    let p = out.trace();
    (p > 0.0).then(|| (out / p, p))
}

pub fn random_ion_state(rng: &mut impl Rng) -> IonIonState {
    let raw: [f64; 4] = [0; 4].map(|_| rng.random_range(0.0..1.0));
    let total: f64 = raw.iter().sum();
    let d = [[raw[0] / total, raw[1] / total], [raw[2] / total, raw[3] / total]];
    let alpha = rng.random_range(0.0..1.0) * (d[0][1] * d[1][0]).sqrt();
    let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
    IonIonState { d, alpha, sign }
}

/// Mean of the slowest of several geometric processes by direct sampling.
pub fn monte_carlo_expected_max(clocks: &[GeometricClock], trials: usize, rng: &mut impl Rng) -> f64 {
    let dists: Vec<(f64, Geometric)> = clocks
        .iter()
        .map(|c| (c.period, Geometric::new(c.success).expect("success probability in (0, 1]")))
        .collect();
    let mut total = 0.0;
    for _ in 0..trials {
        total += dists
            .iter()
            .map(|(period, g)| (g.sample(rng) + 1) as f64 * period)
            .fold(0.0, f64::max);
    }
    total / trials as f64
}

fn optimal_mixing_check() -> Check {
    let mut worst: f64 = 0.0;
    for eta_m in [0.5, 0.8, 0.9, 1.0] {
        for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
            let closed = eta_m / (eta_m + (1.0 - eta_m) * topo.x()).sqrt();
            worst = worst.max((optimal_tan_sq(eta_m, topo) - closed).abs());
        }
    }
    Check::at_most("optimal_mixing_tan_sq", worst, 1e-6)
}

fn pair_amplitude_checks(report: &mut ValidationReport) {
    let mut residual: f64 = 0.0;
    let mut asymptote: f64 = 0.0;
    for k in 0..=200 {
        let b = 1e-6 * (0.24f64 / 1e-6).powf(k as f64 / 200.0);
        match uncorrelated_pair_amplitude(b) {
            Ok(q) => {
                residual = residual.max(pair_condition_residual(b, q));
                if b <= 1e-2 {
                    asymptote = asymptote.max(relative(2.0 * q, b * b));
                }
            }
            Err(_) => residual = f64::NAN,
        }
    }
    report.checks.push(Check::at_most("pair_condition_residual", residual, 1e-12));
    report.checks.push(Check::at_most("pair_asymptote_relative", asymptote, 0.05));
}

fn oracle_checks(report: &mut ValidationReport, oracle: &OracleConfig) {
    let cfg = ScenarioConfig::baseline(100.0, SwapTopology::WithRepeater);
    let eps = 4e-3;
    let full = oracle_discrepancies(&cfg, eps, oracle);
    let half = oracle_discrepancies(&cfg, eps / 4.0, oracle);
    // A0, A1 and P_EN are second-order checks, the swap probabilities first-order
    let required = [3.5, 3.5, 3.5, 1.8, 1.8];
    for (k, name) in DISCREPANCY_NAMES.iter().enumerate() {
        let check = match (&full, &half) {
            (Ok(f), Ok(h)) => {
                let (f, h) = (f.as_array()[k], h.as_array()[k]);
                let ratio = if h > 0.0 { f / h } else { f64::INFINITY };
                Check::at_least(format!("oracle_halving_ratio_{name}"), ratio, required[k])
            }
            _ => Check::errored(format!("oracle_halving_ratio_{name}"), Bound::AtLeast, required[k]),
        };
        report.checks.push(check);
    }
    let name = "oracle_truncated_weight";
    report.push(full.map(|f| Check::at_most(name, f.truncated, 1e-4)), name, Bound::AtMost, 1e-4);
}

fn purification_check(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (s1, s2) = (random_ion_state(rng), random_ion_state(rng));
        let (Ok((closed, p)), Some((brute, q))) = (purify(&s1, &s2), brute_force_purification(&s1, &s2)) else {
            return Check::errored("purification_brute_force", Bound::AtMost, 1e-10);
        };
        worst = worst.max((p - q).abs());
        worst = worst.max((closed.to_matrix() - brute).abs().max());
    }
    Check::at_most("purification_brute_force", worst, 1e-10)
}

fn timing_checks(report: &mut ValidationReport, rng: &mut ChaCha8Rng) {
    let mut worst: f64 = 0.0;
    for p in [1e-4, 1e-2, 0.5] {
        let clocks = [
            GeometricClock { period: 1e-5, success: p },
            GeometricClock { period: 1e-5, success: p },
            GeometricClock {
                period: 3.3e-5,
                success: (3.0 * p).min(1.0),
            },
        ];
        match expected_max(&clocks) {
            Ok(exact) => {
                let mc = monte_carlo_expected_max(&clocks, 1_000_000, rng);
                worst = worst.max(relative(mc, exact));
            }
            Err(_) => worst = f64::NAN,
        }
    }
    report.checks.push(Check::at_most("expected_max_monte_carlo", worst, 0.01));

    let round = 2e-3;
    let gap = relative(bb_expected_wait(1e-3, 1_000_000, round), round);
    report.checks.push(Check::at_most("bb_wait_many_modes", gap, 1e-6));
}

fn link_sanity(link: &HeraldedLink) -> f64 {
    let rho = link.state();
    let trace_err = (rho.trace() - 1.0).abs();
    let herm = rho.hermiticity_error();
    let neg = (-rho.min_eigenvalue()).max(0.0);
    let weights = (link.a0 + link.a1 + link.a1_prime + link.a2 - 1.0).abs();
    trace_err.max(herm).max(neg).max(weights)
}

fn ion_state_sanity(s: &IonIonState) -> f64 {
    let trace_err = (s.d.iter().flatten().sum::<f64>() - 1.0).abs();
    let neg = s.d.iter().flatten().fold(0.0f64, |acc, v| acc.max(-v));
    let coherence = (s.alpha - (s.d[0][1] * s.d[1][0]).sqrt()).max(0.0);
    trace_err.max(neg).max(coherence)
}

fn state_checks(report: &mut ValidationReport, oracle: &OracleConfig) {
    let mut worst: f64 = 0.0;
    let mut run = || -> Result<()> {
        for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
            for (l, eps) in [(0.0, 1e-2), (100.0, 1e-3), (400.0, 1e-4)] {
                let cfg = ScenarioConfig::baseline(l, topo);
                let eff = cfg.channel_efficiencies();
                let ion = IonEmission::constant(eps, cfg.ion_pulse_duration_s, cfg.time_bins())?;
                let src = SpdcTimeBin::new(eps / 10.0, cfg.bin_duration_s, cfg.correlation_time_s)?;
                let en = en_heralded_state(&ion, &src, &eff, cfg.resolved_dark_click_prob(), oracle)?;
                let bb_src = SpdcTimeBin::new(eps, cfg.bin_duration_s, cfg.correlation_time_s)?;
                let bb = bb_heralded_state(&bb_src, &bb_src, &eff, cfg.bb_dark_click_prob(), oracle)?;
                worst = worst.max(link_sanity(&en)).max(link_sanity(&bb));
                let r = evaluate_hybrid(
                    &cfg,
                    &EmissionProbabilities {
                        alpha1_sq: eps,
                        beta1_sq: eps / 10.0,
                        gamma1_sq: eps,
                    },
                    oracle,
                )?;
                worst = worst.max(ion_state_sanity(&r.state));
            }
        }
        Ok(())
    };
    if run().is_err() {
        worst = f64::NAN;
    }
    report.checks.push(Check::at_most("trace_positivity_normalization", worst, 1e-10));
}

/// Bell-state limit of the swap chain with lossless, noiseless components.
pub fn ideal_chain_deviation(eps: f64, topo: SwapTopology, oracle: &OracleConfig) -> Result<f64> {
    let eff = ChannelEfficiencies::ideal();
    let mut cfg = ScenarioConfig::baseline(0.0, topo);
    cfg.efficiencies = NodeEfficiencies {
        eta: 1.0,
        eta0_prime: 1.0,
        eta_fc: 1.0,
        eta_m: 1.0,
    };
    let beta1_sq = beta_for_tan_sq(&cfg, eps, 1.0)?;
    let ion = IonEmission::constant(eps, cfg.ion_pulse_duration_s, cfg.time_bins())?;
    let en_src = SpdcTimeBin::new(beta1_sq, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let bb_src = SpdcTimeBin::new(eps, cfg.bin_duration_s, cfg.correlation_time_s)?;
    let en = en_heralded_state(&ion, &en_src, &eff, 0.0, oracle)?;
    let bb = bb_heralded_state(&bb_src, &bb_src, &eff, 0.0, oracle)?;
    let out = compose_final_state(&en, &vec![bb; topo.backbone_links()], &en, topo, 0.0, &SwapRecord::default())?;
    let s = out.state;
    Ok((s.d[0][1] - 0.5).abs().max((s.d[1][0] - 0.5).abs()).max((s.alpha - 0.5).abs()))
}

fn monotonicity_checks(report: &mut ValidationReport, oracle: &OracleConfig) {
    // total duration against every success probability
    let cfg = ScenarioConfig::baseline(200.0, SwapTopology::WithRepeater);
    let base = [1e-2, 1e-3, 0.4, 0.4, 0.3, 0.25];
    let total = |v: &[f64; 6]| -> Result<f64> {
        let stages = single_link_duration(&cfg, v[0], v[1], v[2], Some(v[3]), v[4])?;
        Ok(total_duration(stages.t_sl, v[5]))
    };
    let mut violations = 0usize;
    match total(&base) {
        Ok(t0) => {
            for k in 0..6 {
                let mut v = base;
                v[k] *= 1.1;
                match total(&v) {
                    Ok(t) if t < t0 => {}
                    _ => violations += 1,
                }
            }
        }
        Err(_) => violations += 6,
    }
    report
        .checks
        .push(Check::at_most("duration_decreasing_in_probabilities", violations as f64, 0.0));

    let probs = EmissionProbabilities {
        alpha1_sq: 1e-3,
        beta1_sq: 1e-4,
        gamma1_sq: 1e-3,
    };
    let mut violations = 0usize;
    for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
        let mut last = 0.0;
        for l in (0..=8).map(|k| 100.0 * k as f64) {
            match evaluate_hybrid(&ScenarioConfig::baseline(l, topo), &probs, oracle) {
                Ok(r) if r.t_total >= last => last = r.t_total,
                _ => violations += 1,
            }
        }
    }
    report
        .checks
        .push(Check::at_most("duration_nondecreasing_in_distance", violations as f64, 0.0));

    let mut violations = 0usize;
    let mut last = 0.0;
    for eta_m in [0.4, 0.6, 0.8, 0.9, 1.0] {
        let cfg = ScenarioConfig::baseline(0.0, SwapTopology::WithRepeater);
        let eff = ChannelEfficiencies { eta_m, ..cfg.channel_efficiencies() };
        let lowest = (|| -> Result<f64> {
            let ion = IonEmission::constant(1e-3, cfg.ion_pulse_duration_s, cfg.time_bins())?;
            let src = SpdcTimeBin::new(1e-4, cfg.bin_duration_s, cfg.correlation_time_s)?;
            Ok(en_heralded_state(&ion, &src, &eff, 0.0, oracle)?.a0)
        })();
        match lowest {
            // vacuum weight shrinks as the memory improves
            Ok(a0) if last == 0.0 || a0 <= last => last = a0,
            _ => violations += 1,
        }
    }
    report
        .checks
        .push(Check::at_most("vacuum_weight_decreasing_in_eta_m", violations as f64, 0.0));
}

/// Largest relative change of the model outputs when the photon-number
/// cutoff is raised by one, at emission probabilities near 1e-4.
pub fn cutoff_convergence(oracle: &OracleConfig) -> Result<f64> {
    let finer = OracleConfig {
        cutoff: oracle.cutoff + 1,
    };
    let probs = EmissionProbabilities {
        alpha1_sq: 1e-4,
        beta1_sq: 1e-5,
        gamma1_sq: 1e-4,
    };
    let mut worst: f64 = 0.0;
    for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
        let cfg = ScenarioConfig::baseline(100.0, topo);
        let a = evaluate_hybrid(&cfg, &probs, oracle)?;
        let b = evaluate_hybrid(&cfg, &probs, &finer)?;
        for (x, y) in [
            (a.p_en, b.p_en),
            (a.p_bb, b.p_bb),
            (a.p_s1_left, b.p_s1_left),
            (a.p_s2, b.p_s2),
            (a.p_p, b.p_p),
            (1.0 - a.fidelity, 1.0 - b.fidelity),
        ] {
            worst = worst.max(relative(x, y));
        }
    }
    Ok(worst)
}

/// Runs every invariant suite and collects one check per property.
pub fn run_validation(oracle: &OracleConfig, seed: u64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::default();
    report.checks.push(optimal_mixing_check());
    pair_amplitude_checks(&mut report);
    oracle_checks(&mut report, oracle);
    report.checks.push(purification_check(&mut rng));
    for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
        let name = format!("ideal_bell_limit_x{}", topo.x());
        let eps = 1e-8;
        let tol = 1e-9 + 10.0 * eps;
        report.push(
            ideal_chain_deviation(eps, topo, oracle).map(|d| Check::at_most(name.clone(), d, tol)),
            &name,
            Bound::AtMost,
            tol,
        );
    }
    timing_checks(&mut report, &mut rng);
    state_checks(&mut report, oracle);
    monotonicity_checks(&mut report, oracle);
    report.push(
        cutoff_convergence(oracle).map(|d| Check::at_most("cutoff_convergence", d, 1e-3)),
        "cutoff_convergence",
        Bound::AtMost,
        1e-3,
    );
    let fid = fidelity(&IonIonState::bell(Sign::Plus));
    report.checks.push(Check::at_most("bell_fidelity", (fid - 1.0).abs(), 1e-12));
    report
}
