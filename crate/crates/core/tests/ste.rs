//! Straight-through quantizer: with the quantizer active, parameter gradients
//! are exactly those of the surrogate in which the quantizer is replaced by the
//! identity plus a frozen offset `Q(z) - z`.

use csifb_core::chanmodel::rayleigh_channel;
use csifb_core::models::loss::{loss_m_batch, loss_s_batch};
use csifb_core::models::{sample_rows, CsiFBnetM, CsiFBnetS, LossVariant};
use csifb_core::nncore::{MlpGrads, QuantMode, Quantizer};
use csifb_core::trainharness::{Batch, Objective, Trainable};
use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits_of(g: &[MlpGrads<f64>]) -> Vec<u64> {
    g.iter().flat_map(|g| g.flatten()).map(f64::to_bits).collect()
}

/// The surrogate's gradient, assembled by hand: the decoder differentiates at
/// the quantized point and its input gradient goes to the encoder untouched.
fn surrogate_grads_s(net: &CsiFBnetS<f64>, h: &Array2<f64>) -> (f64, Vec<MlpGrads<f64>>) {
    let (z, enc_tape) = net.encoder.forward(h.view()).unwrap();
    let offset = &net.quantizer().forward(z.view(), QuantMode::Active) - &z;
    let (theta, dec_tape) = net.decoder.forward((&z + &offset).view()).unwrap();
    let (loss, dtheta) = loss_s_batch(h.view(), theta.view(), LossVariant::Abs2).unwrap();
    let (gd, dz) = net.decoder.backward(&dec_tape, dtheta.view()).unwrap();
    let (ge, _) = net.encoder.backward(&enc_tape, dz.view()).unwrap();
    (loss, vec![ge, gd])
}

fn surrogate_loss_s(net: &CsiFBnetS<f64>, h: &Array2<f64>, offset: &Array2<f64>) -> f64 {
    let z = net.encoder.predict(h.view()).unwrap();
    let theta = net.decoder.predict((&z + offset).view()).unwrap();
    loss_s_batch(h.view(), theta.view(), LossVariant::Abs2).unwrap().0
}

#[test]
fn active_gradient_equals_surrogate_gradient_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for bits in [1, 2, 4, 6] {
        let net = CsiFBnetS::<f64>::new(8, 4, bits, &mut rng).unwrap();
        let hs: Vec<_> = (0..12).map(|_| rayleigh_channel(8, &mut rng)).collect();
        let h = sample_rows(&hs, 8).unwrap();
        let batch = Batch {
            h: h.view(),
            g: None,
            input: None,
        };
        let obj = Objective::BeamS {
            variant: LossVariant::Abs2,
        };
        let (la, ga) = net.loss_and_grads(&batch, &obj, QuantMode::Active).unwrap();
        let (ls, gs) = surrogate_grads_s(&net, &h);
        assert_eq!(la.to_bits(), ls.to_bits());
        assert_eq!(bits_of(&ga), bits_of(&gs));
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut net = CsiFBnetS::<f64>::new(8, 4, 4, &mut rng).unwrap();
    let hs: Vec<_> = (0..12).map(|_| rayleigh_channel(8, &mut rng)).collect();
    let h = sample_rows(&hs, 8).unwrap();
    let z = net.encoder.predict(h.view()).unwrap();
    let offset = &net.quantizer().forward(z.view(), QuantMode::Active) - &z;
    let (_, grads) = surrogate_grads_s(&net, &h);
    let flat: Vec<Vec<f64>> = grads.iter().map(|g| g.flatten()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..120 {
        let k = rng.random_range(0..2);
        let i = rng.random_range(0..flat[k].len());
        let p0 = net.nets()[k].param(i);
        let mut eval = |v: f64| {
            net.nets_mut()[k].set_param(i, v);
            surrogate_loss_s(&net, &h, &offset)
        };
        let fd = (eval(p0 + 1e-5) - eval(p0 - 1e-5)) / 2e-5;
        net.nets_mut()[k].set_param(i, p0);
        worst = worst.max((flat[k][i] - fd).abs() / flat[k][i].abs().max(fd.abs()).max(1e-8));
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn multi_cell_active_gradient_is_straight_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let net = CsiFBnetM::<f64>::new(8, 4, 2, 3, &mut rng).unwrap();
    let hs: Vec<_> = (0..9).map(|_| rayleigh_channel(8, &mut rng)).collect();
    let gs: Vec<_> = (0..9).map(|_| rayleigh_channel(8, &mut rng)).collect();
    let (h, g) = (sample_rows(&hs, 8).unwrap(), sample_rows(&gs, 8).unwrap());
    let batch = Batch {
        h: h.view(),
        g: Some(g.view()),
        input: None,
    };
    let obj = Objective::BeamM { alpha: 0.1, rho: 31.6 };
    let (_, ga) = net.loss_and_grads(&batch, &obj, QuantMode::Active).unwrap();

    let q: Quantizer = net.quantizer();
    let (zh, th) = net.encoder_h.forward(h.view()).unwrap();
    let (zg, tg) = net.encoder_g.forward(g.view()).unwrap();
    let code = concatenate(
        Axis(1),
        &[q.forward(zh.view(), QuantMode::Active).view(), q.forward(zg.view(), QuantMode::Active).view()],
    )
    .unwrap();
    let (theta, td) = net.decoder.forward(code.view()).unwrap();
    let (_, dtheta) = loss_m_batch(h.view(), g.view(), theta.view(), 0.1, 31.6).unwrap();
    let (gd, dcode) = net.decoder.backward(&td, dtheta.view()).unwrap();
    let (gh, _) = net.encoder_h.backward(&th, dcode.slice(s![.., ..4])).unwrap();
    let (gg, _) = net.encoder_g.backward(&tg, dcode.slice(s![.., 4..])).unwrap();
    assert_eq!(bits_of(&ga), bits_of(&[gh, gg, gd]));
}
