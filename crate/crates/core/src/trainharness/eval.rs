use ndarray::{concatenate, Array2, Axis};

use super::EVAL_CHUNK;
use crate::chanmodel::ChannelSample;
use crate::classicbf::{conj_phase_bf, multicell_bf_oracle, sinr_and_rate, spectral_efficiency, RateParams};
use crate::error::{check_dim, invalid, Error, Result};
use crate::models::{sample_rows, BaselineAe, BaselineBf, BeamVector, CsiFBnetM, CsiFBnetS};
use crate::nncore::QuantMode;

/// Test-split summary statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Mean single-cell spectral efficiency at linear SNR `rho`.
    MeanSe { rho: f64 },
    /// Mean per-user multi-cell rate.
    MeanRate(RateParams),
}

/// Anything that maps channel observations to beams.
pub trait BeamPolicy {
    /// Beams for a chunk of samples; `g` is present for paired data.
    fn beams(&self, h: &[ChannelSample], g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>>;
}

fn theta_to_beams(theta: &Array2<f32>) -> Vec<BeamVector> {
    theta
        .rows()
        .into_iter()
        .map(|r| {
            let t: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            BeamVector::from_phases(&t)
        })
        .collect()
}

fn need_g<'a>(g: Option<&'a [ChannelSample]>) -> Result<&'a [ChannelSample]> {
    g.ok_or_else(|| invalid("this policy needs paired (h, g) data"))
}

impl BeamPolicy for CsiFBnetS<f32> {
    fn beams(&self, h: &[ChannelSample], _g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        let x = sample_rows(h, self.n_t())?;
        Ok(theta_to_beams(&self.forward_batch(x.view(), QuantMode::Active)?.theta))
    }
}

impl BeamPolicy for CsiFBnetM<f32> {
    fn beams(&self, h: &[ChannelSample], g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        let xh = sample_rows(h, self.n_t())?;
        let xg = sample_rows(need_g(g)?, self.n_t())?;
        Ok(theta_to_beams(&self.forward_batch(xh.view(), xg.view(), QuantMode::Active)?.theta))
    }
}

/// Perfect-CSI conjugate-phase beams (single-cell upper bound).
#[derive(Debug, Clone, Copy, Default)]
pub struct ConjPhase;

impl BeamPolicy for ConjPhase {
    fn beams(&self, h: &[ChannelSample], _g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        Ok(h.iter().map(conj_phase_bf).collect())
    }
}

/// Perfect-CSI multi-cell search (multi-cell upper bound).
#[derive(Debug, Clone, Copy)]
pub struct MultiCellOracle {
    pub params: RateParams,
    pub restarts: usize,
}

impl BeamPolicy for MultiCellOracle {
    fn beams(&self, h: &[ChannelSample], g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        let g = need_g(g)?;
        h.iter()
            .zip(g)
            .map(|(h, g)| Ok(multicell_bf_oracle(h, g, self.params, self.restarts)?.beam))
            .collect()
    }
}

/// Feedback autoencoder followed by conjugate-phase beamforming on the
/// reconstruction.
#[derive(Debug, Clone)]
pub struct AeConjPhase {
    pub ae: BaselineAe<f32>,
}

impl BeamPolicy for AeConjPhase {
    fn beams(&self, h: &[ChannelSample], _g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        let x = sample_rows(h, self.ae.n_t())?;
        let r = self.ae.reconstruct_batch(x.view())?;
        r.rows()
            .into_iter()
            .map(|row| {
                let v: Vec<f64> = row.iter().map(|&z| z as f64).collect();
                Ok(conj_phase_bf(&ChannelSample::from_real_concat(&v)?))
            })
            .collect()
    }
}

/// Feedback autoencoder(s) followed by the NN beamformer on the reconstructions.
#[derive(Debug, Clone)]
pub struct AeBf {
    pub ae_h: BaselineAe<f32>,
    /// Present for the multi-cell pipeline.
    pub ae_g: Option<BaselineAe<f32>>,
    pub bf: BaselineBf<f32>,
}

impl AeBf {
    pub fn new(ae_h: BaselineAe<f32>, ae_g: Option<BaselineAe<f32>>, bf: BaselineBf<f32>) -> Result<Self> {
        let streams = 1 + ae_g.is_some() as usize;
        check_dim(streams, bf.streams())?;
        check_dim(bf.n_t(), ae_h.n_t())?;
        if let Some(a) = &ae_g {
            check_dim(bf.n_t(), a.n_t())?;
        }
        Ok(Self { ae_h, ae_g, bf })
    }

    /// Reconstructed CSI as the beamformer sees it: `h_hat`, or `(h_hat, g_hat)`
    /// concatenated per row.
    pub fn reconstructed_input(&self, xh: &Array2<f32>, xg: Option<&Array2<f32>>) -> Result<Array2<f32>> {
        let rh = self.ae_h.reconstruct_batch(xh.view())?;
        match (&self.ae_g, xg) {
            (None, _) => Ok(rh),
            (Some(ae_g), Some(xg)) => {
                let rg = ae_g.reconstruct_batch(xg.view())?;
                Ok(concatenate(Axis(1), &[rh.view(), rg.view()]).expect("equal row counts"))
            }
            (Some(_), None) => Err(invalid("this policy needs paired (h, g) data")),
        }
    }
}

impl BeamPolicy for AeBf {
    fn beams(&self, h: &[ChannelSample], g: Option<&[ChannelSample]>) -> Result<Vec<BeamVector>> {
        let xh = sample_rows(h, self.bf.n_t())?;
        let xg = match &self.ae_g {
            Some(_) => Some(sample_rows(need_g(g)?, self.bf.n_t())?),
            None => None,
        };
        let x = self.reconstructed_input(&xh, xg.as_ref())?;
        Ok(theta_to_beams(&self.bf.net.predict(x.view())?))
    }
}

/// Mean of `metric` over every sample, accumulated in f64.
pub fn evaluate<P: BeamPolicy + ?Sized>(
    policy: &P,
    h: &[ChannelSample],
    g: Option<&[ChannelSample]>,
    metric: Metric,
) -> Result<f64> {
    if h.is_empty() {
        return Err(invalid("evaluation over an empty split"));
    }
    if let Some(g) = g {
        check_dim(h.len(), g.len())?;
    }
    if let Metric::MeanRate(p) = metric {
        p.validate()?;
        need_g(g)?;
    }
    let mut total = 0.0;
    for (i, hc) in h.chunks(EVAL_CHUNK).enumerate() {
        let gc = g.map(|g| &g[i * EVAL_CHUNK..i * EVAL_CHUNK + hc.len()]);
        let beams = policy.beams(hc, gc)?;
        check_dim(hc.len(), beams.len())?;
        for (k, v) in beams.iter().enumerate() {
            total += match metric {
                Metric::MeanSe { rho } => spectral_efficiency(&hc[k], v, rho),
                Metric::MeanRate(p) => sinr_and_rate(&hc[k], &gc.expect("checked")[k], v, p).1,
            };
        }
    }
    let mean = total / h.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("evaluation metric".into()));
    }
    Ok(mean)
}

/// NMSE in dB of the autoencoder's reconstructions; `-inf` for exact recovery.
pub fn evaluate_nmse(ae: &BaselineAe<f32>, h: &[ChannelSample]) -> Result<f64> {
    if h.is_empty() {
        return Err(invalid("evaluation over an empty split"));
    }
    let mut pairs = Vec::with_capacity(h.len());
    for hc in h.chunks(EVAL_CHUNK) {
        let x = sample_rows(hc, ae.n_t())?;
        let r = ae.reconstruct_batch(x.view())?;
        for (orig, row) in hc.iter().zip(r.rows()) {
            let v: Vec<f64> = row.iter().map(|&z| z as f64).collect();
            pairs.push((orig.clone(), ChannelSample::from_real_concat(&v)?));
        }
    }
    crate::models::nmse_db(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::rayleigh_channel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conj_phase_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h: Vec<_> = (0..2500).map(|_| rayleigh_channel(6, &mut rng)).collect();
        let direct: f64 = h.iter().map(|h| spectral_efficiency(h, &conj_phase_bf(h), 10.0)).sum::<f64>() / h.len() as f64;
        let got = evaluate(&ConjPhase, &h, None, Metric::MeanSe { rho: 10.0 }).unwrap();
        assert!((got - direct).abs() < 1e-9);
        assert!(evaluate(&ConjPhase, &[], None, Metric::MeanSe { rho: 10.0 }).is_err());
        let p = RateParams::new(10.0, 0.1).unwrap();
        assert!(evaluate(&ConjPhase, &h, None, Metric::MeanRate(p)).is_err());
    }
}
