//! Multipath MISO channel generation and the dataset container.
//!
//! A channel is a sum of `n_c * n_s` plane waves leaving a uniform linear array:
//! `h = sum_{c,s} g_{c,s} a(theta_{c,s})`, with i.i.d. circular Gaussian gains of
//! variance `1 / (n_c * n_s)` so that `E ||h||^2 = n_t`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"CSFB";
pub const DATASET_VERSION: u16 = 1;
const FLAG_PAIRED: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8 + 8;

/// Default per-cluster angular half-width (7.5 degrees).
pub const DEFAULT_ANGULAR_SPREAD: f64 = 7.5 * PI / 180.0;

/// ULA response `[1, e^{-j 2 pi r sin(theta)}, ..., e^{-j 2 pi (n_t-1) r sin(theta)}]`
/// where `r = d / lambda`.
pub fn steering_vector(theta: f64, n_t: usize, spacing_ratio: f64) -> Result<Vec<Complex64>> {
    if !theta.is_finite() {
        return Err(invalid(format!("steering angle must be finite, got {theta}")));
    }
    if n_t == 0 {
        return Err(invalid("antenna count must be at least 1"));
    }
    if !(spacing_ratio > 0.0) || !spacing_ratio.is_finite() {
        return Err(invalid(format!("spacing ratio must be positive, got {spacing_ratio}")));
    }
    let step = -2.0 * PI * spacing_ratio * theta.sin();
    Ok((0..n_t)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGenConfig {
    pub n_t: usize,
    pub n_c: usize,
    pub n_s: usize,
    /// Antenna spacing over carrier wavelength.
    pub spacing_ratio: f64,
    /// Sub-path half-width around each cluster center, radians.
    pub angular_spread: f64,
    pub seed: u64,
}

impl Default for ChannelGenConfig {
    fn default() -> Self {
        Self {
            n_t: 32,
            n_c: 3,
            n_s: 20,
            spacing_ratio: 0.5,
            angular_spread: DEFAULT_ANGULAR_SPREAD,
            seed: 0,
        }
    }
}

impl ChannelGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_c == 0 || self.n_s == 0 {
            return Err(invalid(format!(
                "n_t, n_c and n_s must be >= 1 (got {}, {}, {})",
                self.n_t, self.n_c, self.n_s
            )));
        }
        if !(self.spacing_ratio > 0.0) || !self.spacing_ratio.is_finite() {
            return Err(invalid("spacing_ratio must be positive and finite"));
        }
        if !(self.angular_spread >= 0.0) || !self.angular_spread.is_finite() {
            return Err(invalid("angular_spread must be non-negative and finite"));
        }
        Ok(())
    }
}

/// A downlink MISO channel (or interfering channel), one complex gain per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    h: Vec<Complex64>,
}

impl ChannelSample {
    pub fn new(h: Vec<Complex64>) -> Result<Self> {
        if h.is_empty() {
            return Err(invalid("channel must have at least one antenna"));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("channel entry".into()));
        }
        Ok(Self { h })
    }

    pub fn zeros(n_t: usize) -> Self {
        Self {
            h: vec![Complex64::new(0.0, 0.0); n_t],
        }
    }

    pub fn n_t(&self) -> usize {
        self.h.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.h
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Real parts followed by imaginary parts, the NN input layout.
    pub fn to_real_concat(&self) -> Vec<f64> {
        self.h
            .iter()
            .map(|z| z.re)
            .chain(self.h.iter().map(|z| z.im))
            .collect()
    }

    pub fn from_real_concat(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 || x.is_empty() {
            return Err(invalid(format!("real layout needs even non-zero length, got {}", x.len())));
        }
        let n = x.len() / 2;
        Self::new((0..n).map(|k| Complex64::new(x[k], x[n + k])).collect())
    }

    /// Rounds every entry to the nearest f32, the on-disk precision.
    pub fn round_to_f32(&self) -> Self {
        Self {
            h: self
                .h
                .iter()
                .map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
                .collect(),
        }
    }
}

/// Desired channel `h` and the interferer `g` heard from the neighbouring cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub h: ChannelSample,
    pub g: ChannelSample,
}

/// One propagation sub-path.
#[derive(Debug, Clone, Copy)]
pub struct SubPath {
    pub gain: Complex64,
    pub theta: f64,
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Desired = 0,
    Interfering = 1,
    Split = 2,
    Training = 3,
}

/// Per-sample generator: a pure function of `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) ^ index);
    rng
}

pub fn draw_paths<R: Rng + ?Sized>(config: &ChannelGenConfig, rng: &mut R) -> Vec<SubPath> {
    let sigma = (0.5 / (config.n_c * config.n_s) as f64).sqrt();
    let mut paths = Vec::with_capacity(config.n_c * config.n_s);
    for _ in 0..config.n_c {
        let center = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
        for _ in 0..config.n_s {
            let offset = if config.angular_spread > 0.0 {
                rng.random_range(-config.angular_spread..=config.angular_spread)
            } else {
                0.0
            };
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            paths.push(SubPath {
                gain: Complex64::new(sigma * re, sigma * im),
                theta: center + offset,
            });
        }
    }
    paths
}

pub fn channel_from_paths(paths: &[SubPath], n_t: usize, spacing_ratio: f64) -> Result<ChannelSample> {
    let mut h = vec![Complex64::new(0.0, 0.0); n_t];
    for p in paths {
        let a = steering_vector(p.theta, n_t, spacing_ratio)?;
        for (hk, ak) in h.iter_mut().zip(a) {
            *hk += p.gain * ak;
        }
    }
    ChannelSample::new(h)
}

pub fn sample_channel<R: Rng + ?Sized>(config: &ChannelGenConfig, rng: &mut R) -> Result<ChannelSample> {
    config.validate()?;
    let paths = draw_paths(config, rng);
    channel_from_paths(&paths, config.n_t, config.spacing_ratio)
}

/// i.i.d. CN(0, 1) channel. Test utility only; not a primary channel model.
#[doc(hidden)]
pub fn rayleigh_channel<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> ChannelSample {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = (0..n_t)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect();
    ChannelSample { h }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Record indices of each split: a partition of `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// 80/10/10 partition of a seeded shuffle of `0..count`.
    pub fn new(count: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut stream_rng(seed, Stream::Split, 0));
        let n_train = count * 8 / 10;
        let n_val = count / 10;
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Self { train: order, val, test }
    }

    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Tag of every record, in record order.
    pub fn tags(&self, count: usize) -> Vec<Split> {
        let mut tags = vec![Split::Train; count];
        for &i in &self.val {
            tags[i] = Split::Val;
        }
        for &i in &self.test {
            tags[i] = Split::Test;
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_t: usize,
    pub seed: u64,
    /// Generation parameters; `None` when loaded from disk (the file stores only `n_t` and `seed`).
    pub config: Option<ChannelGenConfig>,
    pub h: Vec<ChannelSample>,
    /// Interfering channels, present for paired datasets.
    pub g: Option<Vec<ChannelSample>>,
    pub splits: Splits,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn is_paired(&self) -> bool {
        self.g.is_some()
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        self.splits.get(split)
    }

    pub fn paired(&self, i: usize) -> Option<PairedSample> {
        self.g.as_ref().map(|g| PairedSample {
            h: self.h[i].clone(),
            g: g[i].clone(),
        })
    }

    /// Generates `count` records. Each record draws from its own derived stream,
    /// and values are rounded to f32 so the in-memory and on-disk datasets agree.
    pub fn generate(config: &ChannelGenConfig, count: usize, paired: bool) -> Result<Self> {
        config.validate()?;
        if count < 10 {
            return Err(invalid(format!("dataset needs at least 10 records, got {count}")));
        }
        let draw = |stream: Stream| -> Result<Vec<ChannelSample>> {
            (0..count)
                .map(|i| {
                    let mut rng = stream_rng(config.seed, stream, i as u64);
                    Ok(sample_channel(config, &mut rng)?.round_to_f32())
                })
                .collect()
        };
        let h = draw(Stream::Desired)?;
        let g = if paired { Some(draw(Stream::Interfering)?) } else { None };
        Ok(Self {
            n_t: config.n_t,
            seed: config.seed,
            config: Some(config.clone()),
            h,
            g,
            splits: Splits::new(count, config.seed),
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n_t = u32::try_from(self.n_t).map_err(|_| invalid("n_t does not fit in u32"))?;
        let count = u64::try_from(self.len()).map_err(|_| invalid("count does not fit in u64"))?;
        w.write_all(DATASET_MAGIC)?;
        w.write_u16::<LittleEndian>(DATASET_VERSION)?;
        w.write_u16::<LittleEndian>(if self.is_paired() { FLAG_PAIRED } else { 0 })?;
        w.write_u32::<LittleEndian>(n_t)?;
        w.write_u64::<LittleEndian>(count)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        let mut put = |s: &ChannelSample| -> Result<()> {
            check_dim(self.n_t, s.n_t())?;
            for z in s.as_slice() {
                w.write_f32::<LittleEndian>(z.re as f32)?;
                w.write_f32::<LittleEndian>(z.im as f32)?;
            }
            Ok(())
        };
        for i in 0..self.len() {
            put(&self.h[i])?;
            if let Some(g) = &self.g {
                put(&g[i])?;
            }
        }
        Ok(())
    }

    /// Writes through a temporary file in the destination directory, so a failed
    /// write never leaves a partial dataset behind.
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::write_atomic_with(path, |w| self.write_to(w))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!("bad dataset magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let flags = r.read_u16::<LittleEndian>()?;
        let n_t = r.read_u32::<LittleEndian>()? as usize;
        let count = usize::try_from(r.read_u64::<LittleEndian>()?)
            .map_err(|_| Error::Format("record count overflows usize".into()))?;
        let seed = r.read_u64::<LittleEndian>()?;
        if n_t == 0 {
            return Err(Error::Format("n_t is zero".into()));
        }
        let paired = flags & FLAG_PAIRED != 0;
        let mut get = || -> Result<ChannelSample> {
            let mut h = Vec::with_capacity(n_t);
            for _ in 0..n_t {
                let re = r.read_f32::<LittleEndian>()? as f64;
                let im = r.read_f32::<LittleEndian>()? as f64;
                h.push(Complex64::new(re, im));
            }
            ChannelSample::new(h)
        };
        let mut hs = Vec::with_capacity(count.min(1 << 20));
        let mut gs = Vec::new();
        for _ in 0..count {
            hs.push(get()?);
            if paired {
                gs.push(get()?);
            }
        }
        Ok(Self {
            n_t,
            seed,
            config: None,
            h: hs,
            g: paired.then_some(gs),
            splits: Splits::new(count, seed),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Size of the serialized dataset in bytes, or `None` on overflow.
    pub fn encoded_len(n_t: usize, count: usize, paired: bool) -> Option<usize> {
        let per = n_t.checked_mul(8)?.checked_mul(if paired { 2 } else { 1 })?;
        per.checked_mul(count)?.checked_add(HEADER_LEN)
    }
}

/// Generates a dataset and writes it to `out_path`.
pub fn generate_dataset(
    config: &ChannelGenConfig,
    count: usize,
    paired: bool,
    out_path: &Path,
) -> Result<Dataset> {
    if Dataset::encoded_len(config.n_t, count, paired).is_none() {
        return Err(invalid(format!("record count {count} overflows the dataset format")));
    }
    let ds = Dataset::generate(config, count, paired)?;
    ds.write(out_path)?;
    Ok(ds)
}
