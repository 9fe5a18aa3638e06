//! Little-endian weight file: magic `CSFW`, version u16, model tag u16, layer
//! count u16, then per layer `(in_dim u32, out_dim u32, activation u8)`, then
//! every layer's row-major weights followed by its bias as f32.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::dense::{Activation, Dense};
use crate::error::{invalid, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSFW";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    CsiFBnetS = 0,
    CsiFBnetM = 1,
    BaselineAe = 2,
    BaselineBf = 3,
}

impl ModelTag {
    pub fn from_u16(v: u16) -> Option<Self> {
        match v {
            0 => Some(ModelTag::CsiFBnetS),
            1 => Some(ModelTag::CsiFBnetM),
            2 => Some(ModelTag::BaselineAe),
            3 => Some(ModelTag::BaselineBf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelTag::CsiFBnetS => "csifbnet-s",
            ModelTag::CsiFBnetM => "csifbnet-m",
            ModelTag::BaselineAe => "baseline-ae",
            ModelTag::BaselineBf => "baseline-bf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: ModelTag,
    pub layers: Vec<Dense<f32>>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let count = u16::try_from(self.layers.len()).map_err(|_| invalid("too many layers"))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u16::<LittleEndian>(self.tag as u16)?;
        w.write_u16::<LittleEndian>(count)?;
        for l in &self.layers {
            let dim = |d: usize| u32::try_from(d).map_err(|_| invalid("layer too wide"));
            w.write_u32::<LittleEndian>(dim(l.weight.ncols())?)?;
            w.write_u32::<LittleEndian>(dim(l.weight.nrows())?)?;
            w.write_u8(l.activation.tag())?;
        }
        for l in &self.layers {
            for &v in l.weight.iter().chain(l.bias.iter()) {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let tag_raw = r.read_u16::<LittleEndian>()?;
        let tag = ModelTag::from_u16(tag_raw).ok_or_else(|| Error::Format(format!("unknown model tag {tag_raw}")))?;
        let count = r.read_u16::<LittleEndian>()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let i = r.read_u32::<LittleEndian>()? as usize;
            let o = r.read_u32::<LittleEndian>()? as usize;
            let a = r.read_u8()?;
            let act = Activation::from_tag(a).ok_or_else(|| Error::Format(format!("unknown activation {a}")))?;
            if i == 0 || o == 0 {
                return Err(Error::Format("zero layer dimension".into()));
            }
            shapes.push((i, o, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (i, o, act) in shapes {
            let mut w = vec![0f32; i * o];
            r.read_f32_into::<LittleEndian>(&mut w)?;
            let mut b = vec![0f32; o];
            r.read_f32_into::<LittleEndian>(&mut b)?;
            let weight = Array2::from_shape_vec((o, i), w).map_err(|e| Error::Format(e.to_string()))?;
            layers.push(Dense::new(weight, Array1::from(b), act)?);
        }
        Ok(Self { tag, layers })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::write_atomic_with(path, |w| self.write_to(w))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip_bytes() {
        let ck = Checkpoint {
            tag: ModelTag::BaselineBf,
            layers: vec![
                Dense::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], array![0.5, -0.5, 0.25], Activation::LeakyRelu)
                    .unwrap(),
                Dense::new(array![[-1.0, 0.0, 1.5]], array![9.0], Activation::Linear).unwrap(),
            ],
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CSFW");
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 3);
        assert_eq!(buf.len(), 4 + 2 + 2 + 2 + 2 * 9 + 4 * (6 + 3 + 3 + 1));
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn rejects_bad_magic_and_tag() {
        assert!(Checkpoint::read_from(&b"XXXX\x01\x00\x00\x00\x00\x00"[..]).is_err());
        assert!(Checkpoint::read_from(&b"CSFW\x01\x00\x09\x00\x00\x00"[..]).is_err());
    }
}
