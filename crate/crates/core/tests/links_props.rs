use hybrid_repeater::links::{
    bb_heralded_state, en_heralded_state, en_leading_weights, en_success_probability, mixing_tan_sq,
    uncorrelated_pair_amplitude, ChannelEfficiencies, IonEmission, OracleConfig, Sign, SpdcTimeBin,
};
use hybrid_repeater::Error;
use proptest::prelude::*;

const PULSE: f64 = 10e-6;
const BIN: f64 = 1e-6;
const CORR: f64 = 100e-9;

fn baseline_eff(eta_bb: f64) -> ChannelEfficiencies {
    ChannelEfficiencies {
        eta: 0.9,
        eta0_prime: 0.9,
        eta_fc: 0.9,
        eta_m: 0.8,
        eta_bb,
    }
}

/// Leading-order edge-node herald probability written out from the branch
/// weights: the ion photon with weight η|α₁|², the pair photon with the
/// memory-detection-weighted η′η_m|β₁|²/η_m per bin, summed over the pulse.
fn p_en_by_hand(alpha1_sq: f64, beta1_sq: f64, eff: &ChannelEfficiencies, bins: usize) -> f64 {
    let beta2 = {
        let b = beta1_sq;
        0.5 - b - (0.25 - b).sqrt()
    } / 2.0;
    let beta0 = 1.0 - beta1_sq - beta2;
    let tan_sq = eff.eta0_prime * eff.eta_fc * eff.eta_m * bins as f64 * (1.0 - alpha1_sq) * beta1_sq
        / (eff.eta * alpha1_sq * beta0);
    eff.eta * alpha1_sq * (1.0 + tan_sq / eff.eta_m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn leading_weights_sum_to_one(t in 0.0f64..50.0, eta_m in 0.01f64..=1.0) {
        let (a0, a1) = en_leading_weights(t, eta_m);
        prop_assert!((a0 + a1 - 1.0).abs() < 1e-12);
        prop_assert!(a0 >= 0.0 && a1 >= 0.0);
    }

    #[test]
    fn pair_amplitude_solves_condition(b in 1e-6f64..0.24) {
        let q = uncorrelated_pair_amplitude(b).unwrap();
        let s = b + 2.0 * q;
        prop_assert!((s - 2.0 * q / s).abs() < 1e-12);
        prop_assert!(1.0 - b - q >= 0.0);
    }

    #[test]
    fn flux_matching_fixes_the_angle(
        raw in prop::collection::vec(0.05f64..1.0, 1..12),
        alpha1_sq in 1e-4f64..0.1,
        beta1_sq in 1e-6f64..1e-3,
    ) {
        let total: f64 = raw.iter().sum();
        let envelope: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let ion = IonEmission::with_envelope(alpha1_sq, PULSE, envelope).unwrap();
        let eff = baseline_eff(0.1);
        let first = mixing_tan_sq(&ion, &SpdcTimeBin::flux_matched(beta1_sq, BIN, CORR, &ion, 0).unwrap(), &eff).unwrap();
        for bin in 1..ion.bins() {
            let spdc = SpdcTimeBin::flux_matched(beta1_sq, BIN, CORR, &ion, bin).unwrap();
            let t = mixing_tan_sq(&ion, &spdc, &eff).unwrap();
            prop_assert!((t - first).abs() <= 1e-12 * first.max(1.0));
        }
    }

    #[test]
    fn heralded_link_is_a_state(
        alpha1_sq in 1e-4f64..2e-2,
        beta1_sq in 1e-6f64..1e-3,
        eta_m in 0.3f64..=1.0,
        dark in 0.0f64..1e-3,
    ) {
        let ion = IonEmission::constant(alpha1_sq, PULSE, 10).unwrap();
        let spdc = SpdcTimeBin::new(beta1_sq, BIN, CORR).unwrap();
        let eff = ChannelEfficiencies { eta_m, ..baseline_eff(0.1) };
        let link = en_heralded_state(&ion, &spdc, &eff, dark, &OracleConfig::default()).unwrap();
        let rho = link.state();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
        prop_assert!(rho.hermiticity_error() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-12);
        prop_assert!((link.a0 + link.a1 + link.a1_prime + link.a2 - 1.0).abs() < 1e-9);
        prop_assert!(link.probability > 0.0 && link.probability < 1.0);
    }

    #[test]
    fn backbone_link_is_mirror_symmetric(g in 1e-5f64..1e-2, eta_bb in 1e-3f64..1.0) {
        let src = SpdcTimeBin::new(g, BIN, CORR).unwrap();
        let link = bb_heralded_state(&src, &src, &baseline_eff(eta_bb), 0.0, &OracleConfig::default()).unwrap();
        let rho = link.state();
        let p10 = rho.population(&[1, 0]).unwrap();
        let p01 = rho.population(&[0, 1]).unwrap();
        prop_assert!((p10 - p01).abs() <= 1e-12 * p10.max(1e-300));
        prop_assert_eq!(link.sign, Sign::Plus);
        let other = link.flipped().unwrap();
        prop_assert_eq!(other.sign, Sign::Minus);
        prop_assert!((other.a1 - link.a1).abs() < 1e-14);
    }
}

#[test]
fn tan_sq_of_one() {
    // N|α₀β₁|² = |α₁β₀|² with all efficiencies 1 gives tan²θ = 1
    let n = 10.0;
    let beta1_sq = 1e-4;
    let beta0_sq = 1.0 - beta1_sq - uncorrelated_pair_amplitude(beta1_sq).unwrap();
    let alpha1_sq = n * beta1_sq / (beta0_sq + n * beta1_sq);
    let ion = IonEmission::constant(alpha1_sq, PULSE, 10).unwrap();
    let spdc = SpdcTimeBin::flux_matched(beta1_sq, BIN, CORR, &ion, 3).unwrap();
    let t = mixing_tan_sq(&ion, &spdc, &ChannelEfficiencies::ideal()).unwrap();
    assert!((t - 1.0).abs() < 1e-12, "{t}");
    let mut eff = ChannelEfficiencies::ideal();
    eff.eta0_prime = 0.5;
    let half = mixing_tan_sq(&ion, &spdc, &eff).unwrap();
    eff.eta0_prime = 1.0;
    let full = mixing_tan_sq(&ion, &spdc, &eff).unwrap();
    assert!((full - 2.0 * half).abs() < 1e-14);
}

#[test]
fn zero_ion_emission_is_degenerate() {
    let ion = IonEmission::constant(0.0, PULSE, 10).unwrap();
    let spdc = SpdcTimeBin::new(1e-4, BIN, CORR).unwrap();
    assert!(matches!(
        mixing_tan_sq(&ion, &spdc, &ChannelEfficiencies::ideal()),
        Err(Error::DegenerateInput(_))
    ));
}

#[test]
fn leading_weights_example() {
    let (a0, a1) = en_leading_weights(1.0, 0.8);
    assert!((a0 - 0.2 / 1.8).abs() < 1e-15);
    assert!((a1 - 1.6 / 1.8).abs() < 1e-15);
}

#[test]
fn success_probability_examples() {
    let eff = baseline_eff(0.1);
    let ion = IonEmission::constant(0.01, PULSE, 10).unwrap();
    let none = SpdcTimeBin::new(0.0, BIN, CORR).unwrap();
    assert!((en_success_probability(&ion, &none, &eff).unwrap() - 0.009).abs() < 1e-15);

    for beta1_sq in [1e-5, 1e-4, 5e-4] {
        let spdc = SpdcTimeBin::new(beta1_sq, BIN, CORR).unwrap();
        let got = en_success_probability(&ion, &spdc, &eff).unwrap();
        let want = p_en_by_hand(0.01, beta1_sq, &eff, 10);
        assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn oracle_probability_converges_to_leading_order() {
    let eff = baseline_eff(0.1);
    let oracle = OracleConfig::default();
    let discrepancy = |eps: f64| {
        let ion = IonEmission::constant(eps, PULSE, 10).unwrap();
        let spdc = SpdcTimeBin::new(eps / 20.0, BIN, CORR).unwrap();
        let link = en_heralded_state(&ion, &spdc, &eff, 0.0, &oracle).unwrap();
        (link.probability / p_en_by_hand(eps, eps / 20.0, &eff, 10) - 1.0).abs()
    };
    let (coarse, fine) = (discrepancy(4e-3), discrepancy(1e-3));
    assert!(coarse < 1e-2, "{coarse}");
    assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
}

#[test]
fn ideal_edge_link_has_no_vacuum() {
    let ion = IonEmission::constant(1e-4, PULSE, 10).unwrap();
    let spdc = SpdcTimeBin::new(1e-5, BIN, CORR).unwrap();
    let link = en_heralded_state(&ion, &spdc, &ChannelEfficiencies::ideal(), 0.0, &OracleConfig::default()).unwrap();
    assert!(link.a0 < 1e-3, "{}", link.a0);
    assert!(link.a1 > 0.99);
}
