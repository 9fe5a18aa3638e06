use crate::error::{invalid, Result};
use crate::nncore::{complexity_report, Activation, Complexity, LayerSpec};

use Activation::{LeakyRelu, Linear, Tanh};

/// `2n -> 2n -> 2n -> elements` with a tanh bottleneck.
pub fn encoder_specs(n_t: usize, elements: usize) -> Vec<LayerSpec> {
    let d = 2 * n_t;
    vec![
        LayerSpec::new(d, d, LeakyRelu),
        LayerSpec::new(d, d, LeakyRelu),
        LayerSpec::new(d, elements, Tanh),
    ]
}

/// `in -> 4n -> 2n -> n` phases (the beam decoder; also the NN beamformer baseline).
pub fn beam_decoder_specs(n_t: usize, in_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(in_dim, 4 * n_t, LeakyRelu),
        LayerSpec::new(4 * n_t, 2 * n_t, LeakyRelu),
        LayerSpec::new(2 * n_t, n_t, Linear),
    ]
}

/// `elements -> 4n -> 2n -> 2n` reconstructed channel.
pub fn ae_decoder_specs(n_t: usize, elements: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(elements, 4 * n_t, LeakyRelu),
        LayerSpec::new(4 * n_t, 2 * n_t, LeakyRelu),
        LayerSpec::new(2 * n_t, 2 * n_t, Linear),
    ]
}

pub fn csifbnet_s_specs(n_t: usize, elements: usize) -> Vec<LayerSpec> {
    let mut s = encoder_specs(n_t, elements);
    s.extend(beam_decoder_specs(n_t, elements));
    s
}

pub fn csifbnet_m_specs(n_t: usize, elements_h: usize, elements_g: usize) -> Vec<LayerSpec> {
    let mut s = encoder_specs(n_t, elements_h);
    s.extend(encoder_specs(n_t, elements_g));
    s.extend(beam_decoder_specs(n_t, elements_h + elements_g));
    s
}

pub fn baseline_ae_specs(n_t: usize, elements: usize) -> Vec<LayerSpec> {
    let mut s = encoder_specs(n_t, elements);
    s.extend(ae_decoder_specs(n_t, elements));
    s
}

/// Multi-cell baseline as accounted for in the published complexity
/// comparison: two feedback autoencoders plus a beamformer shaped exactly like
/// the CsiFBnet-m decoder (codeword-sized input).
pub fn baseline_m_accounting_specs(n_t: usize, elements_h: usize, elements_g: usize) -> Vec<LayerSpec> {
    let mut s = baseline_ae_specs(n_t, elements_h);
    s.extend(baseline_ae_specs(n_t, elements_g));
    s.extend(beam_decoder_specs(n_t, elements_h + elements_g));
    s
}

/// Multi-cell baseline as trained here: two autoencoders plus a beamformer fed
/// the full reconstructed `(h_hat, g_hat)`, i.e. `4 n_t` inputs.
pub fn baseline_m_deployed_specs(n_t: usize, elements_h: usize, elements_g: usize) -> Vec<LayerSpec> {
    let mut s = baseline_ae_specs(n_t, elements_h);
    s.extend(baseline_ae_specs(n_t, elements_g));
    s.extend(beam_decoder_specs(n_t, 4 * n_t));
    s
}

fn check_beta(n_t: usize, beta: u64) -> Result<()> {
    if n_t == 0 || beta == 0 || (2 * n_t as u64) % beta != 0 {
        return Err(invalid(format!("beta = {beta} must divide 2 n_t = {}", 2 * n_t)));
    }
    Ok(())
}

fn exact_div(num: i128, den: i128) -> u64 {
    debug_assert_eq!(num % den, 0);
    (num / den) as u64
}

/// `(18 + 12/b) n^2 + (11 + 2/b) n` weights and `(36 + 24/b) n^2 - (11 + 2/b) n` FLOPs.
pub fn csifbnet_s_closed_form(n_t: usize, beta: u64) -> Result<Complexity> {
    check_beta(n_t, beta)?;
    let (n, b) = (n_t as i128, beta as i128);
    Ok(Complexity {
        params: exact_div((18 * b + 12) * n * n + (11 * b + 2) * n, b),
        flops: exact_div((36 * b + 24) * n * n - (11 * b + 2) * n, b),
    })
}

/// `(26 + 12/bh + 12/bg) n^2 + (15 + 2/bh + 2/bg) n` weights,
/// `(52 + 24/bh + 24/bg) n^2 - (15 + 2/bh + 2/bg) n` FLOPs.
pub fn csifbnet_m_closed_form(n_t: usize, beta_h: u64, beta_g: u64) -> Result<Complexity> {
    check_beta(n_t, beta_h)?;
    check_beta(n_t, beta_g)?;
    let (n, bh, bg) = (n_t as i128, beta_h as i128, beta_g as i128);
    let den = bh * bg;
    let lin = 15 * den + 2 * bg + 2 * bh;
    Ok(Complexity {
        params: exact_div((26 * den + 12 * bg + 12 * bh) * n * n + lin * n, den),
        flops: exact_div((52 * den + 24 * bg + 24 * bh) * n * n - lin * n, den),
    })
}

/// Closed form of [`baseline_m_accounting_specs`]:
/// `(50 + 20/bh + 20/bg) n^2 + (31 + 2/bh + 2/bg) n` weights and
/// `(100 + 40/bh + 40/bg) n^2 - (31 + 2/bh + 2/bg) n` FLOPs.
pub fn baseline_m_closed_form(n_t: usize, beta_h: u64, beta_g: u64) -> Result<Complexity> {
    check_beta(n_t, beta_h)?;
    check_beta(n_t, beta_g)?;
    let (n, bh, bg) = (n_t as i128, beta_h as i128, beta_g as i128);
    let den = bh * bg;
    let lin = 31 * den + 2 * bg + 2 * bh;
    Ok(Complexity {
        params: exact_div((50 * den + 20 * bg + 20 * bh) * n * n + lin * n, den),
        flops: exact_div((100 * den + 40 * bg + 40 * bh) * n * n - lin * n, den),
    })
}

/// Named complexity rows for the CLI report.
pub fn complexity_table(n_t: usize, elements: usize, elements_h: usize, elements_g: usize) -> Vec<(&'static str, Complexity)> {
    vec![
        ("csifbnet-s", complexity_report(&csifbnet_s_specs(n_t, elements))),
        ("baseline-ae", complexity_report(&baseline_ae_specs(n_t, elements))),
        ("csifbnet-m", complexity_report(&csifbnet_m_specs(n_t, elements_h, elements_g))),
        ("baseline-m", complexity_report(&baseline_m_accounting_specs(n_t, elements_h, elements_g))),
        ("baseline-m-deployed", complexity_report(&baseline_m_deployed_specs(n_t, elements_h, elements_g))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_instance_32_4() {
        assert_eq!(csifbnet_s_closed_form(32, 4).unwrap().params, 21_872);
        assert_eq!(complexity_report(&csifbnet_s_specs(32, 16)).params, 21_872);
    }

    #[test]
    fn layer_sums_match_closed_forms() {
        for n in [4usize, 8, 16, 32, 64] {
            for b in [1u64, 2, 4, 8, 16, 32, 64, 128] {
                if (2 * n as u64) % b != 0 {
                    continue;
                }
                let e = 2 * n / b as usize;
                assert_eq!(complexity_report(&csifbnet_s_specs(n, e)), csifbnet_s_closed_form(n, b).unwrap());
                for bg in [2u64, 4, 16] {
                    if (2 * n as u64) % bg != 0 {
                        continue;
                    }
                    let eg = 2 * n / bg as usize;
                    assert_eq!(
                        complexity_report(&csifbnet_m_specs(n, e, eg)),
                        csifbnet_m_closed_form(n, b, bg).unwrap()
                    );
                    assert_eq!(
                        complexity_report(&baseline_m_accounting_specs(n, e, eg)),
                        baseline_m_closed_form(n, b, bg).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn infeasible_beta_rejected() {
        assert!(csifbnet_s_closed_form(32, 5).is_err());
        assert!(csifbnet_s_closed_form(0, 4).is_err());
    }
}
