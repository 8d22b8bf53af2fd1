//! Vector file formats: `.fvecs`, headerless CSV and raw little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use simjoin_core::{Dataset, Metric};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorFormat {
    /// Per record: i32 dimension, then that many f32.
    Fvecs,
    /// One vector per line, comma separated, no header.
    Csv,
    /// u64 count, u64 dimension, then count * dimension f32.
    RawF32,
}

impl VectorFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "fvecs" => Some(VectorFormat::Fvecs),
            "csv" | "txt" => Some(VectorFormat::Csv),
            "f32" | "bin" | "raw" => Some(VectorFormat::RawF32),
            _ => None,
        }
    }
}

impl FromStr for VectorFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "csv" => Ok(VectorFormat::Csv),
            "raw-f32" | "raw_f32" | "raw" => Ok(VectorFormat::RawF32),
            other => Err(format!("unknown vector format '{other}' (fvecs, csv, raw-f32)")),
        }
    }
}

pub(crate) fn open_file(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn dataset(path: &Path, metric: Metric, dim: usize, data: Vec<f64>) -> Result<Dataset> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    Dataset::from_flat(name, metric, dim, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_fvecs(path: &Path, metric: Metric) -> Result<Dataset> {
    let mut bytes = Vec::new();
    open_file(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let mut cur = bytes.as_slice();
    let mut dim = None;
    let mut data = Vec::new();
    let mut record = 0usize;
    while !cur.is_empty() {
        let d = cur
            .read_i32::<LittleEndian>()
            .map_err(|_| Error::format(path, format!("record {record}: truncated header")))?;
        if d <= 0 {
            return Err(Error::format(path, format!("record {record}: invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(
                    path,
                    format!("record {record}: expected dimension {expected}, found {d}"),
                ))
            }
            _ => {}
        }
        if cur.len() < 4 * d {
            return Err(Error::format(path, format!("record {record}: truncated body")));
        }
        for _ in 0..d {
            data.push(cur.read_f32::<LittleEndian>().expect("length checked") as f64);
        }
        record += 1;
    }
    let dim = dim.ok_or_else(|| Error::format(path, "no records"))?;
    dataset(path, metric, dim, data)
}

pub fn write_fvecs(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = create_file(path)?;
    let io = |e| Error::io(path, e);
    for v in ds.iter() {
        w.write_i32::<LittleEndian>(ds.dim() as i32).map_err(io)?;
        for &x in v {
            w.write_f32::<LittleEndian>(x as f32).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_csv(path: &Path, metric: Metric) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(open_file(path)?);
    let mut dim = None;
    let mut data = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let mut row = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            match field.parse::<f64>() {
                Ok(x) => row.push(x),
                Err(_) if i == 0 => {
                    return Err(Error::format(path, format!("line 1: non-numeric field '{field}' (header rows are not supported)")))
                }
                Err(_) => return Err(Error::format(path, format!("line {}: non-numeric field '{field}'", i + 1))),
            }
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::format(path, format!("line {}: expected {d} fields, found {}", i + 1, row.len())))
            }
            _ => {}
        }
        data.extend(row);
    }
    let dim = dim.ok_or_else(|| Error::format(path, "no records"))?;
    dataset(path, metric, dim, data)
}

pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create_file(path)?);
    for v in ds.iter() {
        w.write_record(v.iter().map(|x| x.to_string())).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw_f32(path: &Path, metric: Metric) -> Result<Dataset> {
    let mut r = open_file(path)?;
    let header = |_| Error::format(path, "truncated header");
    let n = r.read_u64::<LittleEndian>().map_err(header)? as usize;
    let d = r.read_u64::<LittleEndian>().map_err(header)? as usize;
    let len = n.checked_mul(d).ok_or_else(|| Error::format(path, "size overflow"))?;
    let mut buf = vec![0f32; len];
    r.read_f32_into::<LittleEndian>(&mut buf)
        .map_err(|_| Error::format(path, format!("truncated body: expected {n} x {d} floats")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after body"));
    }
    dataset(path, metric, d, buf.into_iter().map(f64::from).collect())
}

pub fn write_raw_f32(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = create_file(path)?;
    let io = |e| Error::io(path, e);
    w.write_u64::<LittleEndian>(ds.len() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(ds.dim() as u64).map_err(io)?;
    for &x in ds.as_flat() {
        w.write_f32::<LittleEndian>(x as f32).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads vectors in `format`, or the format implied by the extension.
pub fn read_vectors(path: &Path, format: Option<VectorFormat>, metric: Metric) -> Result<Dataset> {
    let format = format
        .or_else(|| VectorFormat::from_path(path))
        .ok_or_else(|| Error::Usage(format!("cannot infer vector format of {}", path.display())))?;
    match format {
        VectorFormat::Fvecs => read_fvecs(path, metric),
        VectorFormat::Csv => read_csv(path, metric),
        VectorFormat::RawF32 => read_raw_f32(path, metric),
    }
}

pub fn write_vectors(path: &Path, format: VectorFormat, ds: &Dataset) -> Result<()> {
    match format {
        VectorFormat::Fvecs => write_fvecs(path, ds),
        VectorFormat::Csv => write_csv(path, ds),
        VectorFormat::RawF32 => write_raw_f32(path, ds),
    }
}
