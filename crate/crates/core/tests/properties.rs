use proptest::prelude::*;

use privquad::channel_ni::{log_density_ratio, ni_logratio_bound, sanitize_ni, NiConfig};
use privquad::channel_si::{clamp, randomized_response, response_scale};
use privquad::density::DyadicDensity;
use privquad::haar::{coeffs_from_masses, exact_coeffs, WaveletIndex};
use privquad::rng::seeded;

fn weights(max_res: u32) -> impl Strategy<Value = Vec<f64>> {
    (0..=max_res).prop_flat_map(|r| prop::collection::vec(0.05f64..3.0, 1usize << r))
}

proptest! {
    #[test]
    fn parseval_matches_quadratic_functional(w in weights(6)) {
        let d = DyadicDensity::normalized(w).unwrap();
        let c = exact_coeffs(&d, d.resolution());
        prop_assert!((c.energy() - d.quad_functional()).abs() < 1e-10);
    }

    #[test]
    fn synthesis_inverts_analysis(w in weights(6)) {
        let d = DyadicDensity::normalized(w).unwrap();
        let cells = exact_coeffs(&d, d.resolution()).to_cells();
        for (a, b) in cells.iter().zip(d.cells()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn masses_and_density_give_same_coefficients(w in weights(5)) {
        let d = DyadicDensity::normalized(w).unwrap();
        let masses: Vec<f64> = d.cells().iter().map(|v| v * d.cell_width()).collect();
        let a = coeffs_from_masses(&masses, d.resolution());
        let b = exact_coeffs(&d, d.resolution());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_index_round_trips(level in 0i32..20, frac in 0.0f64..1.0) {
        let pos = ((frac * (1u64 << level) as f64) as usize).min((1usize << level) - 1);
        let idx = WaveletIndex::new(level, pos).unwrap();
        prop_assert_eq!(WaveletIndex::from_flat(idx.flat()), idx);
    }

    #[test]
    fn ni_log_ratio_within_bound(
        alpha in 0.1f64..4.0,
        levels in 1u32..7,
        x in 0.0f64..1.0,
        xp in 0.0f64..1.0,
        y in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let cfg = NiConfig::new(alpha, 2.0, levels).unwrap();
        let z = sanitize_ni(y, &cfg, &mut seeded(seed)).unwrap();
        let lr = log_density_ratio(&z, x, xp, &cfg);
        prop_assert!(lr.abs() <= ni_logratio_bound(&cfg) + 1e-9);
        prop_assert!(ni_logratio_bound(&cfg) <= alpha + 1e-12);
    }

    #[test]
    fn rr_output_is_binary(y in -10.0f64..10.0, tau in 0.5f64..5.0, alpha in 0.1f64..3.0, seed in any::<u64>()) {
        let c = response_scale(tau, alpha);
        let v = randomized_response(clamp(y, tau), tau, alpha, &mut seeded(seed)).unwrap();
        prop_assert!((v.abs() - c).abs() < 1e-9 * c);
    }
}
