use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::arch::{beam_decoder_specs, encoder_specs};
use super::BeamVector;
use crate::chanmodel::ChannelSample;
use crate::error::{check_dim, invalid, Error, Result};
use crate::nncore::{
    glorot_init, Checkpoint, LayerSpec, Mlp, MlpGrads, ModelTag, QuantMode, Quantizer, Real, Tape,
};

pub(crate) fn build_mlp<F: Real, R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Mlp<F> {
    Mlp::new(specs.iter().map(|&s| glorot_init(s, rng)).collect()).expect("specs chain by construction")
}

pub(crate) fn check_specs<F: Real>(mlp: &Mlp<F>, expected: &[LayerSpec], what: &str) -> Result<()> {
    if mlp.specs() != expected {
        return Err(Error::Format(format!("{what} does not have the expected layer shapes")));
    }
    Ok(())
}

/// Takes `count` layers off the front of `layers` as an MLP.
pub(crate) fn take_mlp(layers: &mut Vec<crate::nncore::Dense<f32>>, count: usize) -> Result<Mlp<f32>> {
    if layers.len() < count {
        return Err(Error::Format("checkpoint has too few layers".into()));
    }
    let rest = layers.split_off(count);
    let head = std::mem::replace(layers, rest);
    Mlp::new(head)
}

/// One sample as a single-row batch in real-concat layout.
pub fn sample_row<F: Real>(h: &ChannelSample) -> Array2<F> {
    let x = h.to_real_concat();
    Array2::from_shape_fn((1, x.len()), |(_, j)| F::of(x[j]))
}

/// Stacks samples into a batch in real-concat layout.
pub fn sample_rows<'a, F: Real>(samples: impl IntoIterator<Item = &'a ChannelSample>, n_t: usize) -> Result<Array2<F>> {
    let mut data = Vec::new();
    let mut rows = 0;
    for h in samples {
        check_dim(n_t, h.n_t())?;
        data.extend(h.to_real_concat().into_iter().map(F::of));
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, 2 * n_t), data).expect("row-major layout"))
}

fn beam_from_row<F: Real>(theta: ArrayView2<F>) -> BeamVector {
    let t: Vec<f64> = theta.row(0).iter().map(|v| v.f64()).collect();
    BeamVector::from_phases(&t)
}

/// Encoder output for a batch: the tanh bottleneck before and after the
/// quantizer, and the codeword indices.
#[derive(Debug, Clone)]
pub struct Encoded<F> {
    pub latent: Array2<F>,
    pub code: Array2<F>,
    pub indices: Array2<u32>,
    tape: Tape<F>,
}

pub(crate) fn encode<F: Real>(enc: &Mlp<F>, q: &Quantizer, x: ArrayView2<F>, mode: QuantMode) -> Result<Encoded<F>> {
    let (latent, tape) = enc.forward(x)?;
    let code = q.forward(latent.view(), mode);
    let indices = q.indices(latent.view());
    Ok(Encoded {
        latent,
        code,
        indices,
        tape,
    })
}

pub(crate) fn encode_backward<F: Real>(
    enc: &Mlp<F>,
    q: &Quantizer,
    e: &Encoded<F>,
    dcode: Array2<F>,
) -> Result<(MlpGrads<F>, Array2<F>)> {
    enc.backward(&e.tape, q.backward(dcode).view())
}

#[derive(Debug, Clone)]
pub struct SForward<F> {
    /// Decoder output phases, one row per sample.
    pub theta: Array2<F>,
    pub enc: Encoded<F>,
    dec_tape: Tape<F>,
}

/// Single-cell network: encoder, B-bit quantizer, phase decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFBnetS<F> {
    n_t: usize,
    quantizer: Quantizer,
    pub encoder: Mlp<F>,
    pub decoder: Mlp<F>,
}

impl<F: Real> CsiFBnetS<F> {
    pub fn new<R: Rng + ?Sized>(n_t: usize, elements: usize, bits: u32, rng: &mut R) -> Result<Self> {
        if n_t == 0 || elements == 0 {
            return Err(invalid("n_t and the codeword length must be positive"));
        }
        let quantizer = Quantizer::new(bits)?;
        let encoder = build_mlp(&encoder_specs(n_t, elements), rng);
        let decoder = build_mlp(&beam_decoder_specs(n_t, elements), rng);
        Ok(Self {
            n_t,
            quantizer,
            encoder,
            decoder,
        })
    }

    pub fn from_parts(encoder: Mlp<F>, decoder: Mlp<F>, quantizer: Quantizer) -> Result<Self> {
        let n_t = encoder.in_dim() / 2;
        if n_t == 0 || encoder.in_dim() % 2 != 0 {
            return Err(Error::Format("encoder input must be 2 n_t".into()));
        }
        let elements = encoder.out_dim();
        check_specs(&encoder, &encoder_specs(n_t, elements), "encoder")?;
        check_specs(&decoder, &beam_decoder_specs(n_t, elements), "decoder")?;
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

    pub fn forward_batch(&self, x: ArrayView2<F>, mode: QuantMode) -> Result<SForward<F>> {
        check_dim(2 * self.n_t, x.ncols())?;
        let enc = encode(&self.encoder, &self.quantizer, x, mode)?;
        let (theta, dec_tape) = self.decoder.forward(enc.code.view())?;
        Ok(SForward { theta, enc, dec_tape })
    }

    /// Gradients `[encoder, decoder]` given `dL/dtheta`.
    pub fn backward_batch(&self, fw: &SForward<F>, dtheta: ArrayView2<F>) -> Result<Vec<MlpGrads<F>>> {
        let (gdec, dcode) = self.decoder.backward(&fw.dec_tape, dtheta)?;
        let (genc, _) = encode_backward(&self.encoder, &self.quantizer, &fw.enc, dcode)?;
        Ok(vec![genc, gdec])
    }

    /// Beam for one channel with the quantizer active, plus its codeword.
    pub fn forward(&self, h: &ChannelSample) -> Result<(BeamVector, Vec<u32>)> {
        check_dim(self.n_t, h.n_t())?;
        let fw = self.forward_batch(sample_row::<F>(h).view(), QuantMode::Active)?;
        Ok((beam_from_row(fw.theta.view()), fw.enc.indices.row(0).to_vec()))
    }

    /// Decoder phases for a batch of codewords (one row of indices each).
    pub fn decode_indices(&self, indices: ArrayView2<u32>) -> Result<Array2<F>> {
        check_dim(self.elements(), indices.ncols())?;
        let q = self.quantizer;
        if indices.iter().any(|&i| i >= q.levels()) {
            return Err(invalid("codeword index out of range"));
        }
        let code = indices.mapv(|i| F::of(q.value(i)));
        self.decoder.predict(code.view())
    }

    pub fn nets(&self) -> Vec<&Mlp<F>> {
        vec![&self.encoder, &self.decoder]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        vec![&mut self.encoder, &mut self.decoder]
    }

    pub fn cast<G: Real>(&self) -> CsiFBnetS<G> {
        CsiFBnetS {
            n_t: self.n_t,
            quantizer: self.quantizer,
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

impl CsiFBnetS<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers = self.encoder.layers().to_vec();
        layers.extend_from_slice(self.decoder.layers());
        Checkpoint {
            tag: ModelTag::CsiFBnetS,
            layers,
        }
    }

    /// Checkpoints do not carry the bit width, so it is passed in.
    pub fn from_checkpoint(ck: &Checkpoint, bits: u32) -> Result<Self> {
        if ck.tag != ModelTag::CsiFBnetS {
            return Err(Error::Format(format!("expected a csifbnet-s checkpoint, got {}", ck.tag.name())));
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

#[derive(Debug, Clone)]
pub struct MForward<F> {
    pub theta: Array2<F>,
    pub enc_h: Encoded<F>,
    pub enc_g: Encoded<F>,
    dec_tape: Tape<F>,
}

/// Multi-cell network: separate encoders for the desired and interfering
/// channels, a shared phase decoder over the concatenated codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFBnetM<F> {
    n_t: usize,
    quantizer: Quantizer,
    pub encoder_h: Mlp<F>,
    pub encoder_g: Mlp<F>,
    pub decoder: Mlp<F>,
}

impl<F: Real> CsiFBnetM<F> {
    pub fn new<R: Rng + ?Sized>(
        n_t: usize,
        elements_h: usize,
        elements_g: usize,
        bits: u32,
        rng: &mut R,
    ) -> Result<Self> {
        if n_t == 0 || elements_h == 0 || elements_g == 0 {
            return Err(invalid("n_t and the codeword lengths must be positive"));
        }
        let quantizer = Quantizer::new(bits)?;
        let encoder_h = build_mlp(&encoder_specs(n_t, elements_h), rng);
        let encoder_g = build_mlp(&encoder_specs(n_t, elements_g), rng);
        let decoder = build_mlp(&beam_decoder_specs(n_t, elements_h + elements_g), rng);
        Ok(Self {
            n_t,
            quantizer,
            encoder_h,
            encoder_g,
            decoder,
        })
    }

    pub fn from_parts(encoder_h: Mlp<F>, encoder_g: Mlp<F>, decoder: Mlp<F>, quantizer: Quantizer) -> Result<Self> {
        let n_t = encoder_h.in_dim() / 2;
        if n_t == 0 || encoder_h.in_dim() % 2 != 0 {
            return Err(Error::Format("encoder input must be 2 n_t".into()));
        }
        let (eh, eg) = (encoder_h.out_dim(), encoder_g.out_dim());
        check_specs(&encoder_h, &encoder_specs(n_t, eh), "desired-channel encoder")?;
        check_specs(&encoder_g, &encoder_specs(n_t, eg), "interfering-channel encoder")?;
        check_specs(&decoder, &beam_decoder_specs(n_t, eh + eg), "decoder")?;
        Ok(Self {
            n_t,
            quantizer,
            encoder_h,
            encoder_g,
            decoder,
        })
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.encoder_h = self.encoder_h.with_leaky_slope(slope);
        self.encoder_g = self.encoder_g.with_leaky_slope(slope);
        self.decoder = self.decoder.with_leaky_slope(slope);
        self
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn elements(&self) -> (usize, usize) {
        (self.encoder_h.out_dim(), self.encoder_g.out_dim())
    }

    pub fn quantizer(&self) -> Quantizer {
        self.quantizer
    }

    pub fn feedback_bits(&self) -> u64 {
        let (eh, eg) = self.elements();
        (eh + eg) as u64 * self.quantizer.bits() as u64
    }

    pub fn forward_batch(&self, xh: ArrayView2<F>, xg: ArrayView2<F>, mode: QuantMode) -> Result<MForward<F>> {
        check_dim(2 * self.n_t, xh.ncols())?;
        check_dim(2 * self.n_t, xg.ncols())?;
        check_dim(xh.nrows(), xg.nrows())?;
        let enc_h = encode(&self.encoder_h, &self.quantizer, xh, mode)?;
        let enc_g = encode(&self.encoder_g, &self.quantizer, xg, mode)?;
        let code = concatenate(Axis(1), &[enc_h.code.view(), enc_g.code.view()]).expect("equal row counts");
        let (theta, dec_tape) = self.decoder.forward(code.view())?;
        Ok(MForward {
            theta,
            enc_h,
            enc_g,
            dec_tape,
        })
    }

    /// Gradients `[encoder_h, encoder_g, decoder]` given `dL/dtheta`.
    pub fn backward_batch(&self, fw: &MForward<F>, dtheta: ArrayView2<F>) -> Result<Vec<MlpGrads<F>>> {
        let (gdec, dcode) = self.decoder.backward(&fw.dec_tape, dtheta)?;
        let eh = self.encoder_h.out_dim();
        let dh = dcode.slice(s![.., ..eh]).to_owned();
        let dg = dcode.slice(s![.., eh..]).to_owned();
        let (gh, _) = encode_backward(&self.encoder_h, &self.quantizer, &fw.enc_h, dh)?;
        let (gg, _) = encode_backward(&self.encoder_g, &self.quantizer, &fw.enc_g, dg)?;
        Ok(vec![gh, gg, gdec])
    }

    /// Beam for one `(h, g)` pair with the quantizer active, plus the
    /// concatenated codeword (desired-channel indices first).
    pub fn forward(&self, h: &ChannelSample, g: &ChannelSample) -> Result<(BeamVector, Vec<u32>)> {
        check_dim(self.n_t, h.n_t())?;
        check_dim(self.n_t, g.n_t())?;
        let fw = self.forward_batch(sample_row::<F>(h).view(), sample_row::<F>(g).view(), QuantMode::Active)?;
        let mut idx = fw.enc_h.indices.row(0).to_vec();
        idx.extend(fw.enc_g.indices.row(0).iter());
        Ok((beam_from_row(fw.theta.view()), idx))
    }

    /// Decoder phases for a batch of concatenated codewords.
    pub fn decode_indices(&self, indices: ArrayView2<u32>) -> Result<Array2<F>> {
        let (eh, eg) = self.elements();
        check_dim(eh + eg, indices.ncols())?;
        let q = self.quantizer;
        if indices.iter().any(|&i| i >= q.levels()) {
            return Err(invalid("codeword index out of range"));
        }
        let code = indices.mapv(|i| F::of(q.value(i)));
        self.decoder.predict(code.view())
    }

    pub fn nets(&self) -> Vec<&Mlp<F>> {
        vec![&self.encoder_h, &self.encoder_g, &self.decoder]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        vec![&mut self.encoder_h, &mut self.encoder_g, &mut self.decoder]
    }

    pub fn cast<G: Real>(&self) -> CsiFBnetM<G> {
        CsiFBnetM {
            n_t: self.n_t,
            quantizer: self.quantizer,
            encoder_h: self.encoder_h.cast(),
            encoder_g: self.encoder_g.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

impl CsiFBnetM<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers = self.encoder_h.layers().to_vec();
        layers.extend_from_slice(self.encoder_g.layers());
        layers.extend_from_slice(self.decoder.layers());
        Checkpoint {
            tag: ModelTag::CsiFBnetM,
            layers,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, bits: u32) -> Result<Self> {
        if ck.tag != ModelTag::CsiFBnetM {
            return Err(Error::Format(format!("expected a csifbnet-m checkpoint, got {}", ck.tag.name())));
        }
        let mut layers = ck.layers.clone();
        let eh = take_mlp(&mut layers, 3)?;
        let eg = take_mlp(&mut layers, 3)?;
        let dec = take_mlp(&mut layers, 3)?;
        if !layers.is_empty() {
            return Err(Error::Format("checkpoint has extra layers".into()));
        }
        Self::from_parts(eh, eg, dec, Quantizer::new(bits)?)
    }
}
