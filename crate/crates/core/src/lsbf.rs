//! Locality-sensitive Bloom filter over a bit array.
//!
//! Each group's `k` p-stable values are mixed into a single bit index, so a
//! point sets one bit per group. A query is positive when any of its `l` bits
//! is set.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::phash::PStableFamily;
use crate::rng::{self, splitmix64, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsbfParams {
    pub k: usize,
    pub l: usize,
    pub w: f64,
    pub m_bits: usize,
    pub seed: u64,
}

impl LsbfParams {
    /// Bit-array length used when none is given: `|R| * k`.
    pub fn default_bits(r_len: usize, k: usize) -> usize {
        (r_len * k).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct LsbFilter {
    params: LsbfParams,
    family: PStableFamily,
    /// `l * k` odd mixing coefficients.
    mix: Vec<u64>,
    words: Vec<u64>,
}

impl LsbFilter {
    /// Filter with all bits clear.
    pub fn empty(dim: usize, params: LsbfParams) -> Result<Self> {
        if params.m_bits == 0 {
            return Err(Error::invalid("m_bits must be at least 1"));
        }
        if params.m_bits < params.k * params.l {
            log::warn!("m_bits {} below k*l = {}", params.m_bits, params.k * params.l);
        }
        let family = PStableFamily::new(dim, params.k, params.l, params.w, params.seed)?;
        let mut rng = rng::seeded(params.seed, Purpose::LsbfMixing);
        let mix = (0..params.k * params.l).map(|_| rng.random::<u64>() | 1).collect();
        Ok(Self { params, family, mix, words: vec![0; params.m_bits.div_ceil(64)] })
    }

    pub fn params(&self) -> &LsbfParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Rebuilds a filter from its parameters and a stored bit array.
    pub fn from_words(dim: usize, params: LsbfParams, words: Vec<u64>) -> Result<Self> {
        let mut f = Self::empty(dim, params)?;
        if words.len() != f.words.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "expected {} words, found {}",
                f.words.len(),
                words.len()
            )));
        }
        f.words = words;
        Ok(f)
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn bit_index(&self, g: usize, key: &[i32]) -> usize {
        let k = self.params.k;
        let mut h = splitmix64(self.params.seed ^ (g as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for (j, &c) in key.iter().enumerate() {
            h = splitmix64(h ^ (c as u32 as u64).wrapping_mul(self.mix[g * k + j]));
        }
        (h % self.params.m_bits as u64) as usize
    }

    fn indices(&self, v: &[f64], key: &mut [i32], out: &mut Vec<usize>) {
        out.clear();
        for g in 0..self.params.l {
            self.family.key_into(g, v, key);
            out.push(self.bit_index(g, key));
        }
    }

    pub fn insert(&mut self, v: &[f64]) -> Result<()> {
        self.check(v)?;
        let mut key = vec![0; self.params.k];
        let mut idx = Vec::with_capacity(self.params.l);
        self.indices(v, &mut key, &mut idx);
        for i in idx {
            self.words[i / 64] |= 1 << (i % 64);
        }
        Ok(())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(())
    }

    /// Positive iff at least one of the query's group bits is set.
    pub fn query(&self, q: &[f64]) -> Result<bool> {
        self.check(q)?;
        let mut key = vec![0; self.params.k];
        let mut idx = Vec::with_capacity(self.params.l);
        self.indices(q, &mut key, &mut idx);
        Ok(idx.iter().any(|&i| self.words[i / 64] >> (i % 64) & 1 == 1))
    }
}

pub fn lsbf_build(r: &Dataset, params: LsbfParams) -> Result<LsbFilter> {
    let mut f = LsbFilter::empty(r.dim(), params)?;
    for v in r.iter() {
        f.insert(v)?;
    }
    Ok(f)
}

pub fn lsbf_query(f: &LsbFilter, q: &[f64]) -> Result<bool> {
    f.query(q)
}
