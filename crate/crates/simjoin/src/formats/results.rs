//! Join results, filter descriptors and LSBF filters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simjoin_core::filter::FilterDescriptor;
use simjoin_core::lsbf::{LsbFilter, LsbfParams};
use simjoin_core::JoinResult;

use super::vectors::{create_file, open_file};
use super::{read_json, write_json};
use crate::error::{Error, Result};

/// Everything in a [`JoinResult`] except the pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinSidecar {
    pub pairs: usize,
    pub admitted: Vec<bool>,
    pub counts: Vec<u32>,
    pub filter_time: f64,
    pub search_time: f64,
    pub total_time: f64,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Pairs as CSV `r_index,s_index`, the rest as a JSON sidecar.
pub fn save_join(path: &Path, res: &JoinResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["r_index", "s_index"]).map_err(err)?;
    for &(r, s) in &res.pairs {
        w.write_record([r.to_string(), s.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = JoinSidecar {
        pairs: res.pairs.len(),
        admitted: res.admitted.clone(),
        counts: res.counts.clone(),
        filter_time: res.filter_time,
        search_time: res.search_time,
        total_time: res.total_time,
    };
    write_json(&sidecar_path(path), &side)
}

pub fn load_join(path: &Path) -> Result<JoinResult> {
    let mut rd = csv::Reader::from_reader(open_file(path)?);
    let pairs = rd
        .deserialize::<(u32, u32)>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let side: JoinSidecar = read_json(&sidecar_path(path))?;
    if side.pairs != pairs.len() {
        return Err(Error::format(path, format!("sidecar lists {} pairs, file has {}", side.pairs, pairs.len())));
    }
    Ok(JoinResult {
        pairs,
        admitted: side.admitted,
        counts: side.counts,
        filter_time: side.filter_time,
        search_time: side.search_time,
        total_time: side.total_time,
    })
}

/// A learned filter on disk: the descriptor plus the model it was built on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    pub model: PathBuf,
    pub descriptor: FilterDescriptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsbfFile {
    pub dim: usize,
    pub params: LsbfParams,
    pub words: Vec<u64>,
}

pub fn save_lsbf(path: &Path, f: &LsbFilter) -> Result<()> {
    write_json(path, &LsbfFile { dim: f.dim(), params: *f.params(), words: f.words().to_vec() })
}

pub fn load_lsbf(path: &Path) -> Result<LsbFilter> {
    let file: LsbfFile = read_json(path)?;
    LsbFilter::from_words(file.dim, file.params, file.words).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use simjoin_core::clock::NoClock;
    use simjoin_core::join::naive_join;
    use simjoin_core::synth::synth_gaussian_mixture;
    use simjoin_core::Metric;

    #[test]
    fn join_round_trip() {
        let r = synth_gaussian_mixture(30, 4, 2, 0.3, 1).unwrap();
        let s = synth_gaussian_mixture(10, 4, 2, 0.3, 2).unwrap();
        let res = naive_join(&r, &s, 0.3, Metric::Cosine, &NoClock).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        save_join(&p, &res).unwrap();
        assert_eq!(load_join(&p).unwrap(), res);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("r_index,s_index\n"));
    }

    #[test]
    fn lsbf_round_trip() {
        let r = synth_gaussian_mixture(30, 4, 2, 0.3, 1).unwrap();
        let params = LsbfParams { k: 4, l: 3, w: 0.5, m_bits: 200, seed: 1 };
        let f = simjoin_core::lsbf::lsbf_build(&r, params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        save_lsbf(&p, &f).unwrap();
        let g = load_lsbf(&p).unwrap();
        assert_eq!(g.words(), f.words());
    }
}
