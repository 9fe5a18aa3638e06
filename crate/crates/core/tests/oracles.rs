//! Classical beamformers against exhaustive phase-grid search.

use csifb_core::chanmodel::{rayleigh_channel, ChannelSample};
use csifb_core::classicbf::{
    conj_phase_bf, multicell_bf_oracle, sinr, spectral_efficiency, RateParams, ORACLE_DEFAULT_RESTARTS,
};
use csifb_core::models::{loss_s, BeamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Every beam with phases on a `levels`-point grid, N_t = 3.
fn grid(levels: usize) -> impl Iterator<Item = BeamVector> {
    let step = 2.0 * PI / levels as f64;
    (0..levels.pow(3)).map(move |c| {
        let t = [c % levels, (c / levels) % levels, c / (levels * levels)];
        BeamVector::from_phases(&t.map(|i| i as f64 * step))
    })
}

#[test]
fn conj_phase_beats_the_sixteen_level_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let h = rayleigh_channel(3, &mut rng);
        let best = spectral_efficiency(&h, &conj_phase_bf(&h), 10.0);
        let sum_abs: f64 = h.as_slice().iter().map(|z| z.norm()).sum();
        let gain = csifb_core::classicbf::beam_gain(&h, &conj_phase_bf(&h));
        assert!((gain - sum_abs * sum_abs).abs() <= 1e-12 * sum_abs * sum_abs);
        for v in grid(16) {
            assert!(spectral_efficiency(&h, &v, 10.0) <= best + 1e-12);
        }
    }
}

#[test]
fn loss_argmin_is_se_argmax_on_eight_level_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..50 {
        let h = rayleigh_channel(3, &mut rng);
        let beams: Vec<_> = grid(8).collect();
        let by_loss = (0..beams.len())
            .min_by(|&a, &b| loss_s(&h, &beams[a]).unwrap().total_cmp(&loss_s(&h, &beams[b]).unwrap()))
            .unwrap();
        let best_se = beams.iter().map(|v| spectral_efficiency(&h, v, 10.0)).fold(f64::MIN, f64::max);
        assert!((spectral_efficiency(&h, &beams[by_loss], 10.0) - best_se).abs() < 1e-12);
    }
}

#[test]
fn oracle_within_grid_slack_of_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    // a 12-level grid puts every phase within pi/12 of the continuous optimum
    let slack = 1.0 - (PI / 12.0).cos().powi(2);
    for (alpha, snr_db) in [(0.1, 15.0), (0.5, 10.0), (1.0, 20.0)] {
        let p = RateParams::from_snr_db(snr_db, alpha).unwrap();
        for _ in 0..20 {
            let h = rayleigh_channel(3, &mut rng);
            let g = rayleigh_channel(3, &mut rng);
            let oracle = multicell_bf_oracle(&h, &g, p, ORACLE_DEFAULT_RESTARTS).unwrap();
            let grid_best = grid(12).map(|v| sinr(&h, &g, &v, p)).fold(f64::MIN, f64::max);
            assert!(oracle.sinr >= grid_best * (1.0 - slack), "{} vs {grid_best}", oracle.sinr);
            assert!(oracle.sinr >= sinr(&h, &g, &conj_phase_bf(&h), p));
        }
    }
}

#[test]
fn oracle_at_alpha_zero_is_conj_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let p = RateParams::from_snr_db(10.0, 0.0).unwrap();
    for _ in 0..20 {
        let h = rayleigh_channel(16, &mut rng);
        let g = rayleigh_channel(16, &mut rng);
        let o = multicell_bf_oracle(&h, &g, p, 8).unwrap();
        let c = sinr(&h, &g, &conj_phase_bf(&h), p);
        assert!((o.sinr - c).abs() <= 1e-6 * c);
    }
}

#[test]
fn sinr_decreases_with_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let h = rayleigh_channel(8, &mut rng);
    let g = rayleigh_channel(8, &mut rng);
    let v = conj_phase_bf(&h);
    let s: Vec<f64> = (0..=10).map(|a| sinr(&h, &g, &v, RateParams::new(10.0, a as f64 / 10.0).unwrap())).collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]));
    let zero = ChannelSample::zeros(8);
    assert_eq!(sinr(&h, &zero, &v, RateParams::new(10.0, 1.0).unwrap()), sinr(&h, &g, &v, RateParams::new(10.0, 0.0).unwrap()));
}
