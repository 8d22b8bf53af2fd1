//! Cardinality tables (binary and CSV) and prepared training sets.
//!
//! Binary table layout, little-endian: magic `SIMJTAB\0`, u32 version, u64 n,
//! u64 m, n u64 point indices, m f64 grid values, n * m u32 counts.
//!
//! CSV table: header `point,<eps_1>,...,<eps_m>`, then one row per point.
//! Training sets are CSV `point_index,eps,target` with a JSON sidecar for the
//! selection metadata.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use simjoin_core::{CardinalityTable, PreparedTrainingSet, Strategy, TrainingTuple};

use super::vectors::{create_file, open_file};
use crate::error::{Error, Result};

pub const TABLE_MAGIC: &[u8; 8] = b"SIMJTAB\0";
pub const TABLE_VERSION: u32 = 1;

pub fn save_table(path: &Path, t: &CardinalityTable) -> Result<()> {
    let mut w = create_file(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(TABLE_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(TABLE_VERSION).map_err(io)?;
    w.write_u64::<LittleEndian>(t.len() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(t.m() as u64).map_err(io)?;
    for &p in t.points() {
        w.write_u64::<LittleEndian>(p as u64).map_err(io)?;
    }
    for &e in t.eps_grid() {
        w.write_f64::<LittleEndian>(e).map_err(io)?;
    }
    for &c in t.counts() {
        w.write_u32::<LittleEndian>(c).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_table(path: &Path) -> Result<CardinalityTable> {
    let mut bytes = Vec::new();
    open_file(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, format!("corrupt table: {msg}"));
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != TABLE_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
    if version != TABLE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let m = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let expected = n
        .checked_mul(8)
        .and_then(|a| m.checked_mul(8).map(|b| a + b))
        .and_then(|a| n.checked_mul(m).and_then(|c| c.checked_mul(4)).map(|c| a + c));
    if expected != Some(r.len()) {
        return Err(bad("body length does not match header"));
    }
    let mut points = vec![0u64; n];
    r.read_u64_into::<LittleEndian>(&mut points).map_err(|_| bad("truncated points"))?;
    let mut grid = vec![0f64; m];
    r.read_f64_into::<LittleEndian>(&mut grid).map_err(|_| bad("truncated grid"))?;
    let mut counts = vec![0u32; n * m];
    r.read_u32_into::<LittleEndian>(&mut counts).map_err(|_| bad("truncated counts"))?;
    CardinalityTable::from_parts(points.into_iter().map(|p| p as usize).collect(), grid, counts)
        .map_err(|e| bad(&e.to_string()))
}

pub fn save_table_csv(path: &Path, t: &CardinalityTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let header = std::iter::once("point".to_string()).chain(t.eps_grid().iter().map(|e| e.to_string()));
    w.write_record(header).map_err(err)?;
    for (row, p) in t.rows().zip(t.points()) {
        w.write_record(std::iter::once(p.to_string()).chain(row.iter().map(|c| c.to_string()))).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_table_csv(path: &Path) -> Result<CardinalityTable> {
    let mut rd = csv::Reader::from_reader(open_file(path)?);
    let err = |msg: String| Error::format(path, msg);
    let header = rd.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.get(0) != Some("point") {
        return Err(err("first column must be 'point'".into()));
    }
    let grid = header
        .iter()
        .skip(1)
        .map(|h| h.parse::<f64>().map_err(|_| err(format!("bad eps header '{h}'"))))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    let mut counts = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let mut it = rec.iter();
        let p = it.next().and_then(|p| p.parse().ok()).ok_or_else(|| err(format!("row {}: bad point", i + 1)))?;
        points.push(p);
        for c in it {
            counts.push(c.parse::<u32>().map_err(|_| err(format!("row {}: bad count '{c}'", i + 1)))?);
        }
    }
    CardinalityTable::from_parts(points, grid, counts).map_err(|e| err(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetMeta {
    pub strategy: Strategy,
    pub s: usize,
    pub seed: u64,
    pub top_up: usize,
    pub tuples: usize,
}

pub fn training_meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn save_training_set(path: &Path, set: &PreparedTrainingSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    for t in &set.tuples {
        w.serialize(t).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = TrainingSetMeta { strategy: set.strategy, s: set.s, seed: set.seed, top_up: set.top_up, tuples: set.len() };
    super::write_json(&training_meta_path(path), &meta)
}

pub fn load_training_set(path: &Path) -> Result<PreparedTrainingSet> {
    let mut rd = csv::Reader::from_reader(open_file(path)?);
    let tuples = rd
        .deserialize::<TrainingTuple>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let meta: TrainingSetMeta = super::read_json(&training_meta_path(path))?;
    if meta.tuples != tuples.len() {
        return Err(Error::format(path, format!("sidecar lists {} tuples, file has {}", meta.tuples, tuples.len())));
    }
    Ok(PreparedTrainingSet { tuples, strategy: meta.strategy, s: meta.s, seed: meta.seed, top_up: meta.top_up })
}
