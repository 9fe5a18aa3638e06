//! Codeword lookup tables: the decoder evaluated once on every possible
//! codeword, so the transmitter picks beams without running a network.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView2};

use crate::error::{check_dim, invalid, Error, Result};
use crate::models::{BeamVector, CsiFBnetM, CsiFBnetS};

pub const LUT_MAGIC: &[u8; 4] = b"CSFL";
pub const LUT_VERSION: u16 = 1;
/// Largest exportable codeword, in bits (a table of 2^20 rows).
pub const MAX_LUT_BITS: u32 = 20;

const ROWS_PER_CHUNK: usize = 4096;

/// Phases for every codeword, row `i` holding codeword index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut {
    n_bits: u32,
    n_t: usize,
    phases: Vec<f32>,
}

/// Packs per-element quantizer indices into one codeword index, first
/// element in the most significant position.
pub fn codeword_index(indices: &[u32], bits: u32) -> u64 {
    indices.iter().fold(0u64, |acc, &i| (acc << bits) | i as u64)
}

/// Inverse of [`codeword_index`] for `elements` elements.
pub fn codeword_elements(index: u64, elements: usize, bits: u32) -> Vec<u32> {
    let mask = (1u64 << bits) - 1;
    (0..elements)
        .map(|j| ((index >> (bits as usize * (elements - 1 - j))) & mask) as u32)
        .collect()
}

impl Lut {
    /// Enumerates all `levels^elements` codewords through `decode`.
    pub fn build(
        n_t: usize,
        elements: usize,
        bits: u32,
        decode: impl Fn(ArrayView2<u32>) -> Result<Array2<f32>>,
    ) -> Result<Self> {
        let n_bits = elements as u64 * bits as u64;
        if n_bits > MAX_LUT_BITS as u64 {
            return Err(Error::Infeasible(format!(
                "codeword has {n_bits} bits; lookup tables are capped at {MAX_LUT_BITS}"
            )));
        }
        let n_bits = n_bits as u32;
        let rows = 1usize << n_bits;
        let mut phases = Vec::with_capacity(rows * n_t);
        let mut start = 0;
        while start < rows {
            let end = (start + ROWS_PER_CHUNK).min(rows);
            let mut idx = Array2::<u32>::zeros((end - start, elements));
            for (r, mut row) in idx.rows_mut().into_iter().enumerate() {
                for (dst, v) in row.iter_mut().zip(codeword_elements((start + r) as u64, elements, bits)) {
                    *dst = v;
                }
            }
            let theta = decode(idx.view())?;
            check_dim(n_t, theta.ncols())?;
            phases.extend(theta.iter());
            start = end;
        }
        Ok(Self { n_bits, n_t, phases })
    }

    pub fn from_csifbnet_s(net: &CsiFBnetS<f32>) -> Result<Self> {
        Self::build(net.n_t(), net.elements(), net.quantizer().bits(), |i| net.decode_indices(i))
    }

    /// Codewords are the desired-channel indices followed by the interfering ones.
    pub fn from_csifbnet_m(net: &CsiFBnetM<f32>) -> Result<Self> {
        let (eh, eg) = net.elements();
        Self::build(net.n_t(), eh + eg, net.quantizer().bits(), |i| net.decode_indices(i))
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn rows(&self) -> usize {
        1 << self.n_bits
    }

    pub fn row(&self, index: u64) -> Result<&[f32]> {
        let i = usize::try_from(index).ok().filter(|&i| i < self.rows()).ok_or_else(|| invalid("codeword out of range"))?;
        Ok(&self.phases[i * self.n_t..(i + 1) * self.n_t])
    }

    pub fn beam(&self, index: u64) -> Result<BeamVector> {
        let t: Vec<f64> = self.row(index)?.iter().map(|&p| p as f64).collect();
        Ok(BeamVector::from_phases(&t))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n_t = u32::try_from(self.n_t).map_err(|_| invalid("n_t does not fit in u32"))?;
        w.write_all(LUT_MAGIC)?;
        w.write_u16::<LittleEndian>(LUT_VERSION)?;
        w.write_u16::<LittleEndian>(self.n_bits as u16)?;
        w.write_u32::<LittleEndian>(n_t)?;
        for &p in &self.phases {
            w.write_f32::<LittleEndian>(p)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != LUT_MAGIC {
            return Err(Error::Format(format!("bad lookup-table magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != LUT_VERSION {
            return Err(Error::Format(format!("unsupported lookup-table version {version}")));
        }
        let n_bits = r.read_u16::<LittleEndian>()? as u32;
        if n_bits > MAX_LUT_BITS {
            return Err(Error::Format(format!("lookup table claims {n_bits} bits")));
        }
        let n_t = r.read_u32::<LittleEndian>()? as usize;
        let mut phases = vec![0f32; (1usize << n_bits) * n_t];
        r.read_f32_into::<LittleEndian>(&mut phases)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after lookup table".into()));
        }
        Ok(Self { n_bits, n_t, phases })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::write_atomic_with(path, |w| self.write_to(w))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
