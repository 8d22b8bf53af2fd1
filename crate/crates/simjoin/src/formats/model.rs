//! Binary model file.
//!
//! Layout, all little-endian: 8-byte magic, u32 version, u32 d, u32 width
//! count followed by the widths, u8 transform (0 raw, 1 log1p), input means
//! and standard deviations (f64, d + 1 each), target mean and standard
//! deviation (f64), then every layer's weights and biases as f32.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use simjoin_core::mlp::network::{Layer, Network};
use simjoin_core::mlp::Standardizer;
use simjoin_core::{CardinalityEstimator, MlpModel, TargetTransform};

use super::vectors::{create_file, open_file};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"SIMJMLP\0";
pub const MODEL_VERSION: u32 = 1;
const MAX_WIDTH: u32 = 1 << 20;

pub fn save_model(path: &Path, model: &MlpModel) -> Result<()> {
    let mut w = create_file(path)?;
    let io = |e| Error::io(path, e);
    let net = model.network();
    w.write_all(MODEL_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(model.dim() as u32).map_err(io)?;
    let widths = net.widths();
    w.write_u32::<LittleEndian>(widths.len() as u32).map_err(io)?;
    for &width in &widths {
        w.write_u32::<LittleEndian>(width as u32).map_err(io)?;
    }
    w.write_u8(match model.transform() {
        TargetTransform::Raw => 0,
        TargetTransform::Log1p => 1,
    })
    .map_err(io)?;
    for s in [model.input_standardizer(), model.target_standardizer()] {
        for &x in s.mean.iter().chain(&s.std) {
            w.write_f64::<LittleEndian>(x).map_err(io)?;
        }
    }
    for &p in net.params() {
        w.write_f32::<LittleEndian>(p).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let mut bytes = Vec::new();
    open_file(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::format(path, format!("corrupt model file: {msg}")))
}

fn decode(bytes: &[u8]) -> std::result::Result<MlpModel, String> {
    let mut r = bytes;
    let short = |what: &str| format!("truncated {what}");
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| short("magic"))?;
    if &magic != MODEL_MAGIC {
        return Err("bad magic bytes".into());
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| short("header"))?;
    if version != MODEL_VERSION {
        return Err(format!("unsupported version {version}, expected {MODEL_VERSION}"));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(|_| short("header"))? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(|_| short("header"))?;
    if !(2..=64).contains(&count) {
        return Err(format!("implausible layer count {count}"));
    }
    let mut widths = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let w = r.read_u32::<LittleEndian>().map_err(|_| short("widths"))?;
        if w == 0 || w > MAX_WIDTH {
            return Err(format!("implausible layer width {w}"));
        }
        widths.push(w as usize);
    }
    if widths[0] != dim + 1 || *widths.last().unwrap() != 1 {
        return Err(format!("widths {widths:?} do not match d = {dim}"));
    }
    let transform = match r.read_u8().map_err(|_| short("header"))? {
        0 => TargetTransform::Raw,
        1 => TargetTransform::Log1p,
        t => return Err(format!("unknown transform tag {t}")),
    };
    let mut stats = |n: usize| -> std::result::Result<Standardizer, String> {
        let mut v = vec![0.0; 2 * n];
        r.read_f64_into::<LittleEndian>(&mut v).map_err(|_| short("standardization stats"))?;
        let std = v.split_off(n);
        Ok(Standardizer { mean: v, std })
    };
    let inputs = stats(dim + 1)?;
    let target = stats(1)?;
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let mut layer = Layer::<f32>::zeros(w[0], w[1]);
        r.read_f32_into::<LittleEndian>(&mut layer.weights).map_err(|_| short("parameters"))?;
        r.read_f32_into::<LittleEndian>(&mut layer.bias).map_err(|_| short("parameters"))?;
        layers.push(layer);
    }
    if !r.is_empty() {
        return Err(format!("{} trailing bytes", r.len()));
    }
    MlpModel::from_parts(dim, Network { layers }, transform, inputs, target).map_err(|e| e.to_string())
}
