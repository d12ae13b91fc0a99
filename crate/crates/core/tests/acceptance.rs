//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails:
//!
//! ```text
//! cargo test --release --test acceptance -- --nocapture
//! ```

use std::time::{Duration, Instant};

use hybrid_repeater::cli::{run_sweep, Config, SweepRow, SweepSpec, BASELINE_PRESET};
use hybrid_repeater::links::{uncorrelated_pair_amplitude, OracleConfig};
use hybrid_repeater::optimize::{optimize_hybrid, OptimizerSettings};
use hybrid_repeater::swaps::{optimal_tan_sq, purify, IonIonState, SwapTopology};
use hybrid_repeater::timing::{expected_max, GeometricClock, ProtocolVariant, ScenarioConfig};
use hybrid_repeater::validation::{
    ideal_chain_deviation, monte_carlo_expected_max, oracle_discrepancies, random_ion_state, run_validation,
    DISCREPANCY_NAMES,
};
use nalgebra::{DMatrix, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn closed_form_tan_sq(eta_m: f64, x: f64) -> f64 {
    eta_m / (eta_m + (1.0 - eta_m) * x).sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for eta_m in [0.5, 0.8, 0.9, 1.0] {
        for (topo, x) in [(SwapTopology::WithoutRepeater, 1.0), (SwapTopology::WithRepeater, 3.0)] {
            worst = worst.max((optimal_tan_sq(eta_m, topo) - closed_form_tan_sq(eta_m, x)).abs());
        }
    }
    let took = start.elapsed();
    outcome(
        worst < 1e-6 && took < Duration::from_secs(1),
        format!("max |Δtan²θ| = {worst:.2e} (< 1e-6), {:.3} s (< 1 s)", secs(took)),
    )
}

fn criterion_2() -> Outcome {
    let mut residual: f64 = 0.0;
    let mut asymptote: f64 = 0.0;
    for k in 0..=1000 {
        let b = 1e-6 * (0.24f64 / 1e-6).powf(k as f64 / 1000.0);
        let q = uncorrelated_pair_amplitude(b).unwrap();
        // b + 2q = 2q / (b + 2q)
        let s = b + 2.0 * q;
        residual = residual.max((s * s - 2.0 * q).abs() / s);
        if b <= 1e-2 {
            asymptote = asymptote.max((2.0 * q / (b * b) - 1.0).abs());
        }
    }
    outcome(
        residual < 1e-12 && asymptote <= 0.05,
        format!("residual {residual:.2e} (< 1e-12), asymptote deviation {asymptote:.2e} (<= 0.05)"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig::baseline(100.0, SwapTopology::WithRepeater);
    let oracle = OracleConfig::default();
    let eps = 4e-3;
    let (full, half) = match (
        oracle_discrepancies(&cfg, eps, &oracle),
        oracle_discrepancies(&cfg, eps / 4.0, &oracle),
    ) {
        (Ok(f), Ok(h)) => (f.as_array(), h.as_array()),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("oracle failed: {e}")),
    };
    let required = [3.5, 3.5, 3.5, 1.8, 1.8];
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..5 {
        let ratio = full[k] / half[k];
        pass &= ratio >= required[k];
        parts.push(format!("{} {ratio:.2} (>= {})", DISCREPANCY_NAMES[k], required[k]));
    }
    let took = start.elapsed();
    pass &= took < Duration::from_secs(60);
    outcome(pass, format!("reduction on halving: {}, {:.2} s (< 60 s)", parts.join(", "), secs(took)))
}

/// Four-ion density matrix (a1, b1, a2, b2), CNOTs a1→a2 and b1→b2, then the
/// targets projected on |1,1⟩.
fn purify_brute_force(s1: &IonIonState, s2: &IonIonState) -> (Matrix4<f64>, f64) {
    let m1 = DMatrix::from_iterator(4, 4, s1.to_matrix().iter().copied());
    let m2 = DMatrix::from_iterator(4, 4, s2.to_matrix().iter().copied());
    let rho = m1.kronecker(&m2);
    let mut cnot = DMatrix::<f64>::zeros(16, 16);
    for x in 0..16usize {
        let (a1, b1, a2, b2) = ((x >> 3) & 1, (x >> 2) & 1, (x >> 1) & 1, x & 1);
        cnot[((a1 << 3) | (b1 << 2) | ((a2 ^ a1) << 1) | (b2 ^ b1), x)] = 1.0;
    }
    let after = &cnot * rho * cnot.transpose();
    let mut out = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[(i, j)] = after[((i << 2) | 3, (j << 2) | 3)];
        }
    }
    let p = out.trace();
    (out / p, p)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s1 = random_ion_state(&mut rng);
        let s2 = random_ion_state(&mut rng);
        let (got, p) = purify(&s1, &s2).unwrap();
        let (want, q) = purify_brute_force(&s1, &s2);
        worst = worst.max((got.to_matrix() - want).abs().max()).max((p - q).abs());
    }
    outcome(worst < 1e-10, format!("max element error {worst:.2e} over 100 state pairs (< 1e-10)"))
}

fn criterion_5() -> Outcome {
    let oracle = OracleConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for topo in [SwapTopology::WithoutRepeater, SwapTopology::WithRepeater] {
        for eps in [1e-8, 1e-6] {
            match ideal_chain_deviation(eps, topo, &oracle) {
                Ok(dev) => {
                    pass &= dev <= 1e-9 + 10.0 * eps;
                    parts.push(format!("X={} ε={eps:.0e}: {dev:.2e}", topo.x()));
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("X={}: {e}", topo.x()));
                }
            }
        }
    }
    outcome(pass, format!("max |D01−½|,|D10−½|,|α−½| {} (<= 1e-9 + 10ε)", parts.join(", ")))
}

fn first_infeasible(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().find(|r| !r.feasible).map(|r| r.distance_km)
}

fn monotone(rows: &[SweepRow]) -> bool {
    let durations: Vec<f64> = rows.iter().filter_map(|r| r.duration_s).collect();
    durations.windows(2).all(|w| w[1] > w[0])
}

fn criterion_6() -> Outcome {
    let cfg = Config::parse(BASELINE_PRESET).unwrap();
    let mut curves = Vec::new();
    let mut slowest = Duration::ZERO;
    let start = Instant::now();
    for protocol in ProtocolVariant::ALL {
        let spec = SweepSpec::from_config(&cfg, protocol);
        let t = Instant::now();
        let rows = match run_sweep(&spec, None) {
            Ok(rows) => rows,
            Err(e) => return outcome(false, format!("{protocol} sweep failed: {e}")),
        };
        slowest = slowest.max(t.elapsed());
        curves.push((protocol, rows));
    }
    let total = start.elapsed();
    let rows_of = |p: ProtocolVariant| &curves.iter().find(|(q, _)| *q == p).unwrap().1;
    let points = rows_of(ProtocolVariant::HybridRepeater).len();

    let reach = |p: ProtocolVariant| first_infeasible(rows_of(p)).unwrap_or(f64::INFINITY);
    let direct_reach = reach(ProtocolVariant::Direct).max(reach(ProtocolVariant::DirectIonRepeater));
    let hybrid_reach = reach(ProtocolVariant::Hybrid).min(reach(ProtocolVariant::HybridRepeater));
    let a = direct_reach < hybrid_reach;

    let mut min_speedup = f64::INFINITY;
    let hybrid = rows_of(ProtocolVariant::HybridRepeater);
    for direct in [ProtocolVariant::Direct, ProtocolVariant::DirectIonRepeater] {
        for (h, d) in hybrid.iter().zip(rows_of(direct)) {
            if let (Some(th), Some(td)) = (h.duration_s, d.duration_s) {
                min_speedup = min_speedup.min(td / th);
            }
        }
    }
    let b = min_speedup >= 5.0;
    let c = curves.iter().all(|(_, rows)| monotone(rows));
    let fast = slowest < Duration::from_secs(600);

    for (protocol, rows) in &curves {
        let feasible = rows.iter().filter(|r| r.feasible).count();
        println!("    {protocol:<20} feasible at {feasible}/{} points, first infeasible {:?} km", rows.len(), first_infeasible(rows));
    }
    let fmt_reach = |x: f64| if x.is_finite() { format!("{x} km") } else { "never".into() };
    outcome(
        a && b && c && fast && points == 30,
        format!(
            "(a) direct infeasible from {} vs hybrid {}: {}; (b) min speedup {min_speedup:.1}× (>= 5): {}; \
             (c) monotone: {}; slowest {points}-point sweep {:.0} s (< 600 s), all four {:.0} s",
            fmt_reach(direct_reach),
            fmt_reach(hybrid_reach),
            a,
            b,
            c,
            secs(slowest),
            secs(total)
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut cfg = ScenarioConfig::baseline(500.0, SwapTopology::WithRepeater);
    cfg.target_fidelity = 0.9;
    match optimize_hybrid(&cfg, &OracleConfig::default(), &OptimizerSettings::default()) {
        Ok(opt) => {
            let rate = 1.0 / opt.result.t_total;
            outcome(
                rate >= 0.1 && opt.result.fidelity >= 0.9 - 1e-9,
                format!("rate {rate:.3} Hz at F = {:.4} (>= 0.1 Hz)", opt.result.fidelity),
            )
        }
        Err(e) => outcome(false, format!("optimizer failed: {e}")),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for p in [1e-4, 1e-2, 0.5] {
        // two edge-node clocks and two backbone clocks with a longer round
        let en = GeometricClock { period: 1e-5, success: p };
        let bb = GeometricClock {
            period: 7e-5,
            success: (3.0 * p).min(1.0),
        };
        let clocks = [en, en, bb, bb];
        let exact = expected_max(&clocks).unwrap();
        let sampled = monte_carlo_expected_max(&clocks, 1_000_000, &mut rng);
        worst = worst.max((sampled / exact - 1.0).abs());
    }
    outcome(worst < 0.01, format!("max relative deviation {worst:.2e} over 1e6 trials (< 1%)"))
}

fn criterion_9() -> Outcome {
    let report = run_validation(&OracleConfig::default(), 0);
    let failed: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
    outcome(
        failed.is_empty(),
        format!("{} checks, failures: {:?}", report.checks.len(), failed),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("closed-form mixing angle", criterion_1),
        ("uncorrelated pair amplitude", criterion_2),
        ("oracle agreement scaling", criterion_3),
        ("purification algebra", criterion_4),
        ("ideal Bell limit", criterion_5),
        ("protocol comparison sweep", criterion_6),
        ("500 km rate", criterion_7),
        ("parallel waiting time", criterion_8),
        ("invariant suites", criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        if !o.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
