//! Layer parameters and the `PPWT` binary weight container.
//!
//! Layout (little-endian): magic `PPWT`, `u32` version (1), `u32` entry count, then
//! per entry a `u16` name length, the UTF-8 name, a `u8` tensor count, and per
//! tensor a `u8` rank, `u32` dims and the raw `f32` payload. An optional entry
//! named `__mean__` carries one rank-1 tensor of three channel means. The entry
//! count includes the `__mean__` entry when present.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureSpec, LayerKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"PPWT";
pub const WEIGHT_VERSION: u32 = 1;
pub const MEAN_ENTRY: &str = "__mean__";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightSet {
    entries: Vec<(String, LayerParams)>,
    index: HashMap<String, usize>,
    mean: Option<[f32; 3]>,
}

impl WeightSet {
    pub fn new(entries: Vec<(String, LayerParams)>, mean: Option<[f32; 3]>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (name, _)) in entries.iter().enumerate() {
            if name == MEAN_ENTRY || index.insert(name.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate or reserved entry `{name}`")));
            }
        }
        Ok(Self {
            entries,
            index,
            mean,
        })
    }

    /// Seeded He-uniform weights with small uniform biases, for every conv/fc layer.
    pub fn random(arch: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, (name, kshape, bshape)) in arch.parameter_shapes()?.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let fan_in: usize = kshape[1..].iter().product();
            let limit = (6.0 / fan_in as f32).sqrt();
            let kernel = uniform(&mut rng, kshape.iter().product(), limit);
            let bias = uniform(&mut rng, bshape[0], 0.01);
            entries.push((
                name,
                LayerParams {
                    kernel: Tensor::new(kshape, kernel)?,
                    bias: Tensor::new(bshape, bias)?,
                },
            ));
        }
        Self::new(entries, None)
    }

    pub fn get(&self, layer: &str) -> Option<&LayerParams> {
        self.index.get(layer).map(|&i| &self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, LayerParams)] {
        &self.entries
    }

    pub fn mean(&self) -> Option<[f32; 3]> {
        self.mean
    }

    /// Channel means to subtract from input pixels; zeros when none were stored.
    pub fn channel_means(&self) -> [f32; 3] {
        self.mean.unwrap_or([0.0; 3])
    }

    pub fn set_mean(&mut self, mean: Option<[f32; 3]>) {
        self.mean = mean;
    }

    /// Checks that the parameter set binds exactly to `arch`.
    pub fn validate(&self, arch: &ArchitectureSpec) -> Result<()> {
        let expected = arch.parameter_shapes()?;
        for (name, kshape, bshape) in &expected {
            let params = self
                .get(name)
                .ok_or_else(|| Error::validation(name, "missing weights"))?;
            if params.kernel.shape() != kshape.as_slice() {
                return Err(Error::validation(
                    name,
                    format!(
                        "kernel shape {:?} does not match expected {kshape:?}",
                        params.kernel.shape()
                    ),
                ));
            }
            if params.bias.shape() != bshape.as_slice() {
                return Err(Error::validation(
                    name,
                    format!(
                        "bias shape {:?} does not match expected {bshape:?}",
                        params.bias.shape()
                    ),
                ));
            }
        }
        for (name, _) in &self.entries {
            match arch.layers.iter().find(|l| &l.name == name) {
                None => return Err(Error::validation(name, "no such layer in architecture")),
                Some(l) if !matches!(l.kind, LayerKind::Conv { .. } | LayerKind::Fc { .. }) => {
                    return Err(Error::validation(name, "layer takes no parameters"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(WEIGHT_MAGIC)?;
        w.write_u32::<LittleEndian>(WEIGHT_VERSION)?;
        let count = self.entries.len() + usize::from(self.mean.is_some());
        w.write_u32::<LittleEndian>(count as u32)?;
        for (name, params) in &self.entries {
            write_entry(&mut w, name, &[&params.kernel, &params.bias])?;
        }
        if let Some(mean) = self.mean {
            let t = Tensor::from_vec(mean.to_vec())?;
            write_entry(&mut w, MEAN_ENTRY, &[&t])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHT_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected PPWT")));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != WEIGHT_VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        let count = r.read_u32::<LittleEndian>()?;
        let mut entries = Vec::new();
        let mut mean = None;
        for _ in 0..count {
            let (name, tensors) = read_entry(&mut r)?;
            if name == MEAN_ENTRY {
                match tensors.as_slice() {
                    [t] if t.len() == 3 => {
                        mean = Some([t.data()[0], t.data()[1], t.data()[2]]);
                    }
                    _ => return Err(Error::Format("`__mean__` must hold 3 values".into())),
                }
                continue;
            }
            let mut it = tensors.into_iter();
            match (it.next(), it.next(), it.next()) {
                (Some(kernel), Some(bias), None) => {
                    entries.push((name, LayerParams { kernel, bias }))
                }
                _ => {
                    return Err(Error::Format(format!(
                        "entry `{name}` must hold exactly a kernel and a bias"
                    )))
                }
            }
        }
        Self::new(entries, mean)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

/// Reads a weight file and validates it against `arch`.
pub fn load_weights(path: &Path, arch: &ArchitectureSpec) -> Result<WeightSet> {
    let set = WeightSet::read_from(BufReader::new(File::open(path)?))?;
    set.validate(arch)?;
    Ok(set)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, limit: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let unit = (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32);
            (2.0 * unit - 1.0) * limit
        })
        .collect()
}

fn write_entry<W: Write>(w: &mut W, name: &str, tensors: &[&Tensor]) -> Result<()> {
    let bytes = name.as_bytes();
    let len = u16::try_from(bytes.len())
        .map_err(|_| Error::Format(format!("entry name too long: {name}")))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(bytes)?;
    w.write_u8(tensors.len() as u8)?;
    let mut buf = Vec::new();
    for t in tensors {
        w.write_u8(t.rank() as u8)?;
        for &d in t.shape() {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        buf.clear();
        buf.reserve(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_entry<R: Read>(r: &mut R) -> Result<(String, Vec<Tensor>)> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut name = vec![0u8; len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
    let count = r.read_u8()?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rank = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("`{name}`: {e}")))?;
        tensors.push(t);
    }
    Ok((name, tensors))
}
