use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::arch::{ae_decoder_specs, beam_decoder_specs, encoder_specs};
use super::csifbnet::{build_mlp, check_specs, encode, encode_backward, sample_row, take_mlp, Encoded};
use super::BeamVector;
use crate::chanmodel::ChannelSample;
use crate::error::{check_dim, invalid, Error, Result};
use crate::nncore::{Checkpoint, Mlp, MlpGrads, ModelTag, QuantMode, Quantizer, Real, Tape};

#[derive(Debug, Clone)]
pub struct AeForward<F> {
    /// Reconstructed channels in real-concat layout.
    pub recon: Array2<F>,
    pub enc: Encoded<F>,
    dec_tape: Tape<F>,
}

/// Feedback autoencoder trained on reconstruction error.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAe<F> {
    n_t: usize,
    quantizer: Quantizer,
    pub encoder: Mlp<F>,
    pub decoder: Mlp<F>,
}

impl<F: Real> BaselineAe<F> {
    pub fn new<R: Rng + ?Sized>(n_t: usize, elements: usize, bits: u32, rng: &mut R) -> Result<Self> {
        if n_t == 0 || elements == 0 {
            return Err(invalid("n_t and the codeword length must be positive"));
        }
        let quantizer = Quantizer::new(bits)?;
        Ok(Self {
            n_t,
            quantizer,
            encoder: build_mlp(&encoder_specs(n_t, elements), rng),
            decoder: build_mlp(&ae_decoder_specs(n_t, elements), rng),
        })
    }

    pub fn from_parts(encoder: Mlp<F>, decoder: Mlp<F>, quantizer: Quantizer) -> Result<Self> {
        let n_t = encoder.in_dim() / 2;
        if n_t == 0 || encoder.in_dim() % 2 != 0 {
            return Err(Error::Format("encoder input must be 2 n_t".into()));
        }
        let e = encoder.out_dim();
        check_specs(&encoder, &encoder_specs(n_t, e), "encoder")?;
        check_specs(&decoder, &ae_decoder_specs(n_t, e), "decoder")?;
        Ok(Self {
            n_t,
            quantizer,
            encoder,
            decoder,
        })
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.encoder = self.encoder.with_leaky_slope(slope);
        self.decoder = self.decoder.with_leaky_slope(slope);
        self
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn elements(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn quantizer(&self) -> Quantizer {
        self.quantizer
    }

    pub fn feedback_bits(&self) -> u64 {
        self.elements() as u64 * self.quantizer.bits() as u64
    }

    pub fn forward_batch(&self, x: ArrayView2<F>, mode: QuantMode) -> Result<AeForward<F>> {
        check_dim(2 * self.n_t, x.ncols())?;
        let enc = encode(&self.encoder, &self.quantizer, x, mode)?;
        let (recon, dec_tape) = self.decoder.forward(enc.code.view())?;
        Ok(AeForward { recon, enc, dec_tape })
    }

    /// Gradients `[encoder, decoder]` given `dL/drecon`.
    pub fn backward_batch(&self, fw: &AeForward<F>, drecon: ArrayView2<F>) -> Result<Vec<MlpGrads<F>>> {
        let (gdec, dcode) = self.decoder.backward(&fw.dec_tape, drecon)?;
        let (genc, _) = encode_backward(&self.encoder, &self.quantizer, &fw.enc, dcode)?;
        Ok(vec![genc, gdec])
    }

    /// Reconstructions with the quantizer active.
    pub fn reconstruct_batch(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.forward_batch(x, QuantMode::Active)?.recon)
    }

    pub fn reconstruct(&self, h: &ChannelSample) -> Result<ChannelSample> {
        check_dim(self.n_t, h.n_t())?;
        let r = self.reconstruct_batch(sample_row::<F>(h).view())?;
        let x: Vec<f64> = r.row(0).iter().map(|v| v.f64()).collect();
        ChannelSample::from_real_concat(&x)
    }

    pub fn nets(&self) -> Vec<&Mlp<F>> {
        vec![&self.encoder, &self.decoder]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        vec![&mut self.encoder, &mut self.decoder]
    }

    pub fn cast<G: Real>(&self) -> BaselineAe<G> {
        BaselineAe {
            n_t: self.n_t,
            quantizer: self.quantizer,
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

impl BaselineAe<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers = self.encoder.layers().to_vec();
        layers.extend_from_slice(self.decoder.layers());
        Checkpoint {
            tag: ModelTag::BaselineAe,
            layers,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, bits: u32) -> Result<Self> {
        if ck.tag != ModelTag::BaselineAe {
            return Err(Error::Format(format!("expected a baseline-ae checkpoint, got {}", ck.tag.name())));
        }
        let mut layers = ck.layers.clone();
        let enc = take_mlp(&mut layers, 3)?;
        let dec = take_mlp(&mut layers, 3)?;
        if !layers.is_empty() {
            return Err(Error::Format("checkpoint has extra layers".into()));
        }
        Self::from_parts(enc, dec, Quantizer::new(bits)?)
    }
}

/// NN beamformer fed channel estimates: `streams = 1` takes `h_hat`,
/// `streams = 2` takes `(h_hat, g_hat)` concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBf<F> {
    n_t: usize,
    streams: usize,
    pub net: Mlp<F>,
}

impl<F: Real> BaselineBf<F> {
    pub fn new<R: Rng + ?Sized>(n_t: usize, streams: usize, rng: &mut R) -> Result<Self> {
        if n_t == 0 || !(1..=2).contains(&streams) {
            return Err(invalid("n_t must be positive and streams 1 or 2"));
        }
        Ok(Self {
            n_t,
            streams,
            net: build_mlp(&beam_decoder_specs(n_t, 2 * n_t * streams), rng),
        })
    }

    pub fn from_net(net: Mlp<F>) -> Result<Self> {
        let n_t = net.out_dim();
        if n_t == 0 || net.in_dim() % (2 * n_t) != 0 {
            return Err(Error::Format("beamformer input must be a multiple of 2 n_t".into()));
        }
        let streams = net.in_dim() / (2 * n_t);
        if !(1..=2).contains(&streams) {
            return Err(Error::Format("beamformer takes one or two channels".into()));
        }
        check_specs(&net, &beam_decoder_specs(n_t, 2 * n_t * streams), "beamformer")?;
        Ok(Self { n_t, streams, net })
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.net = self.net.with_leaky_slope(slope);
        self
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn forward_batch(&self, x: ArrayView2<F>) -> Result<(Array2<F>, Tape<F>)> {
        check_dim(2 * self.n_t * self.streams, x.ncols())?;
        self.net.forward(x)
    }

    pub fn backward_batch(&self, tape: &Tape<F>, dtheta: ArrayView2<F>) -> Result<Vec<MlpGrads<F>>> {
        Ok(vec![self.net.backward(tape, dtheta)?.0])
    }

    pub fn beam(&self, inputs: &[&ChannelSample]) -> Result<BeamVector> {
        check_dim(self.streams, inputs.len())?;
        let mut x = Vec::with_capacity(2 * self.n_t * self.streams);
        for h in inputs {
            check_dim(self.n_t, h.n_t())?;
            x.extend(h.to_real_concat().into_iter().map(F::of));
        }
        let x = Array2::from_shape_vec((1, x.len()), x).expect("one row");
        let theta = self.net.predict(x.view())?;
        let t: Vec<f64> = theta.row(0).iter().map(|v| v.f64()).collect();
        Ok(BeamVector::from_phases(&t))
    }

    pub fn nets(&self) -> Vec<&Mlp<F>> {
        vec![&self.net]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        vec![&mut self.net]
    }

    pub fn cast<G: Real>(&self) -> BaselineBf<G> {
        BaselineBf {
            n_t: self.n_t,
            streams: self.streams,
            net: self.net.cast(),
        }
    }
}

impl BaselineBf<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tag: ModelTag::BaselineBf,
            layers: self.net.layers().to_vec(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.tag != ModelTag::BaselineBf {
            return Err(Error::Format(format!("expected a baseline-bf checkpoint, got {}", ck.tag.name())));
        }
        Self::from_net(Mlp::new(ck.layers.clone())?)
    }
}
