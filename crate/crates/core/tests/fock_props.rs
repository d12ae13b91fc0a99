use hybrid_repeater::fock::{DetectorOutcome, FockState, C64};
use proptest::prelude::*;

const LABELS: [&str; 3] = ["a", "b", "s"];
const CUTOFF: usize = 2;

/// Random normalized state of three modes whose first two modes never hold
/// more photons together than the cutoff.
fn state_strategy() -> impl Strategy<Value = FockState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 27).prop_filter_map("nonzero state", |raw| {
        let mut occs = Vec::new();
        let mut amps = Vec::new();
        for (i, (re, im)) in raw.into_iter().enumerate() {
            let occ = vec![i / 9, (i / 3) % 3, i % 3];
            if occ[0] + occ[1] <= CUTOFF {
                occs.push(occ);
                amps.push(C64::new(re, im));
            }
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-3 {
            return None;
        }
        let terms: Vec<(&[usize], C64)> = occs.iter().map(|o| o.as_slice()).zip(amps.iter().map(|a| a / norm)).collect();
        FockState::from_terms(&LABELS, CUTOFF, &terms).ok()
    })
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beamsplitter_preserves_norm(psi in state_strategy(), t in 0.0f64..=1.0, phase in -3.2f64..3.2) {
        let out = psi.apply_beamsplitter("a", "b", t, phase).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beamsplitter_is_reversible(psi in state_strategy(), t in 0.0f64..=1.0) {
        // the real balanced-phase splitter is its own inverse
        let back = psi
            .apply_beamsplitter("a", "b", t, 0.0)
            .unwrap()
            .apply_beamsplitter("a", "b", t, 0.0)
            .unwrap();
        prop_assert!(max_diff(back.amplitudes(), psi.amplitudes()) < 1e-12);
    }

    #[test]
    fn loss_preserves_trace_and_positivity(psi in state_strategy(), eta in 0.0f64..=1.0) {
        let rho = psi.apply_loss("s", eta).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.hermiticity_error() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn loss_composes(psi in state_strategy(), e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
        let twice = psi.apply_loss("a", e1).unwrap().apply_loss("a", e2).unwrap();
        let once = psi.apply_loss("a", e1 * e2).unwrap();
        let diff = (twice.matrix() - once.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn loss_scales_mean_photon_number(psi in state_strategy(), eta in 0.0f64..=1.0) {
        let before = psi.mean_photons("b").unwrap();
        let rho = psi.apply_loss("b", eta).unwrap();
        let after: f64 = (0..=CUTOFF)
            .flat_map(|a| (0..=CUTOFF).flat_map(move |b| (0..=CUTOFF).map(move |s| [a, b, s])))
            .map(|occ| occ[1] as f64 * rho.population(&occ).unwrap())
            .sum();
        prop_assert!((after - eta * before).abs() < 1e-12);
    }

    #[test]
    fn herald_outcomes_are_complete(psi in state_strategy()) {
        let mut total = 0.0;
        for x in DetectorOutcome::ALL {
            for y in DetectorOutcome::ALL {
                let (_, p) = psi.herald_click(&["a", "b"], &[x, y], 0.0, &["s"]).unwrap();
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_keeps_trace(psi in state_strategy()) {
        let rho = psi.to_density();
        let reduced = rho.partial_trace(&["a"]).unwrap();
        prop_assert!((reduced.trace() - 1.0).abs() < 1e-12);
        prop_assert!(reduced.min_eigenvalue() > -1e-12);
        let all = rho.partial_trace(&LABELS).unwrap();
        prop_assert_eq!(all.dim(), 1);
        prop_assert!((all.trace() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_photon_splits_evenly() {
    let psi = FockState::from_terms(&["a", "b"], 1, &[(&[1, 0], C64::new(1.0, 0.0))]).unwrap();
    let out = psi.apply_beamsplitter("a", "b", 0.5, 0.0).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((out.amplitude(&[1, 0]).unwrap() - C64::new(h, 0.0)).norm() < 1e-15);
    assert!((out.amplitude(&[0, 1]).unwrap() - C64::new(h, 0.0)).norm() < 1e-15);
}

#[test]
fn hong_ou_mandel_dip() {
    let psi = FockState::from_terms(&["a", "b"], 2, &[(&[1, 1], C64::new(1.0, 0.0))]).unwrap();
    let out = psi.apply_beamsplitter("a", "b", 0.5, 0.0).unwrap();
    assert!(out.amplitude(&[1, 1]).unwrap().norm() < 1e-15);
    assert!((out.amplitude(&[2, 0]).unwrap().norm_sqr() - 0.5).abs() < 1e-14);
    assert!((out.amplitude(&[0, 2]).unwrap().norm_sqr() - 0.5).abs() < 1e-14);
}

#[test]
fn dark_count_on_vacuum() {
    let psi = FockState::vacuum(&["a", "b", "s"], 1).unwrap();
    let p_d = 0.03;
    let (rho, p) = psi
        .herald_click(&["a", "b"], &[DetectorOutcome::Click, DetectorOutcome::Vacuum], p_d, &["s"])
        .unwrap();
    assert!((p - p_d * (1.0 - p_d)).abs() < 1e-15);
    assert!((rho.normalized().unwrap().population(&[0]).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn bell_marginal_is_maximally_mixed() {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let psi = FockState::from_terms(&["a", "b"], 1, &[(&[1, 0], h), (&[0, 1], h)]).unwrap();
    let rho = psi.to_density().partial_trace(&["b"]).unwrap();
    assert!((rho.population(&[0]).unwrap() - 0.5).abs() < 1e-15);
    assert!((rho.population(&[1]).unwrap() - 0.5).abs() < 1e-15);
    assert!(rho.element(&[0], &[1]).unwrap().norm() < 1e-15);
}
