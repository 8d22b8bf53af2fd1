//! Seeded p-stable hash functions `h(v) = floor((a·v + b) / W)`, with `a`
//! standard normal and `b` uniform on `[0, W)`, organised in `l` groups of
//! `k` functions.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::dot;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq)]
pub struct PStableFamily {
    dim: usize,
    k: usize,
    l: usize,
    w: f64,
    /// `l * k` projection vectors of length `dim`.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PStableFamily {
    pub fn new(dim: usize, k: usize, l: usize, w: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if k == 0 || l == 0 {
            return Err(Error::invalid("k and l must be at least 1"));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(alloc::format!("bucket width {w} must be positive")));
        }
        let mut rng = rng::seeded(seed, Purpose::HashFamily);
        let n = k * l;
        let a = (0..n * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b = (0..n).map(|_| rng.random::<f64>() * w).collect();
        Ok(Self { dim, k, l, w, a, b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    /// Unfloored values `(a·v + b) / W` of group `g`.
    pub fn project_into(&self, g: usize, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for (j, o) in out.iter_mut().enumerate().take(self.k) {
            let f = g * self.k + j;
            let a = &self.a[f * self.dim..(f + 1) * self.dim];
            *o = (dot(a, v) + self.b[f]) / self.w;
        }
    }

    /// The `k`-tuple key of `v` in group `g`.
    pub fn key_into(&self, g: usize, v: &[f64], out: &mut [i32]) {
        let mut proj = [0.0f64; 64];
        if self.k <= proj.len() {
            self.project_into(g, v, &mut proj[..self.k]);
            for (o, p) in out.iter_mut().zip(&proj[..self.k]) {
                *o = floor_i32(*p);
            }
        } else {
            let mut proj = alloc::vec![0.0; self.k];
            self.project_into(g, v, &mut proj);
            for (o, p) in out.iter_mut().zip(&proj) {
                *o = floor_i32(*p);
            }
        }
    }
}

pub(crate) fn floor_i32(x: f64) -> i32 {
    // Saturating cast, fine for any reasonable width.
    math::floor(x) as i32
}
