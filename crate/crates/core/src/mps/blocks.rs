//! Charge-graded bond spaces and block-sparse matrices.
//!
//! Every bond index carries a `U(1)` label, the total `S^z` of the block to its
//! left. A [`BlockMat`] maps the row sector with charge `q` to the column
//! sector with charge `q + shift` and stores only those dense blocks.

use std::collections::BTreeMap;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

/// Sorted list of `(charge, dimension)` sectors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BondSpace {
    sectors: Vec<(i32, usize)>,
}

impl BondSpace {
    pub fn trivial(charge: i32) -> Self {
        BondSpace { sectors: vec![(charge, 1)] }
    }

    pub fn from_sectors(mut sectors: Vec<(i32, usize)>) -> Self {
        sectors.retain(|&(_, d)| d > 0);
        sectors.sort_unstable();
        sectors.dedup_by_key(|s| s.0);
        BondSpace { sectors }
    }

    pub fn sectors(&self) -> &[(i32, usize)] {
        &self.sectors
    }

    pub fn dim(&self, charge: i32) -> usize {
        match self.sectors.binary_search_by_key(&charge, |s| s.0) {
            Ok(i) => self.sectors[i].1,
            Err(_) => 0,
        }
    }

    pub fn total(&self) -> usize {
        self.sectors.iter().map(|s| s.1).sum()
    }

    pub fn charges(&self) -> impl Iterator<Item = i32> + '_ {
        self.sectors.iter().map(|s| s.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMat {
    pub shift: i32,
    pub blocks: BTreeMap<i32, Mat<f64>>,
}

impl BlockMat {
    pub fn new(shift: i32) -> Self {
        BlockMat { shift, blocks: BTreeMap::new() }
    }

    pub fn identity(space: &BondSpace) -> Self {
        let mut out = BlockMat::new(0);
        for &(q, d) in space.sectors() {
            out.blocks.insert(q, Mat::identity(d, d));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &BlockMat) -> BlockMat {
        let mut out = BlockMat::new(self.shift + other.shift);
        for (&q, a) in &self.blocks {
            if let Some(b) = other.blocks.get(&(q + self.shift)) {
                out.blocks.insert(q, a * b);
            }
        }
        out
    }

    /// `out += alpha * self^T * other`.
    pub fn tn_into(&self, other: &BlockMat, alpha: f64, out: &mut BlockMat) {
        out.shift = other.shift - self.shift;
        for (&q, a) in &self.blocks {
            if let Some(b) = other.blocks.get(&q) {
                accumulate(out, q + self.shift, a.transpose(), b.as_ref(), alpha);
            }
        }
    }

    /// `out += alpha * self * other^T`.
    pub fn nt_into(&self, other: &BlockMat, alpha: f64, out: &mut BlockMat) {
        out.shift = self.shift - other.shift;
        for (&q, a) in &self.blocks {
            if let Some(b) = other.blocks.get(&(q + self.shift - other.shift)) {
                accumulate(out, q, a.as_ref(), b.transpose(), alpha);
            }
        }
    }

    /// `out += alpha * self * other`.
    pub fn nn_into(&self, other: &BlockMat, alpha: f64, out: &mut BlockMat) {
        out.shift = self.shift + other.shift;
        for (&q, a) in &self.blocks {
            if let Some(b) = other.blocks.get(&(q + self.shift)) {
                accumulate(out, q, a.as_ref(), b.as_ref(), alpha);
            }
        }
    }

    pub fn transpose(&self) -> BlockMat {
        let mut out = BlockMat::new(-self.shift);
        for (&q, a) in &self.blocks {
            out.blocks.insert(q + self.shift, a.transpose().to_owned());
        }
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &BlockMat) {
        if self.blocks.is_empty() {
            self.shift = other.shift;
        }
        debug_assert_eq!(self.shift, other.shift);
        for (&q, b) in &other.blocks {
            match self.blocks.get_mut(&q) {
                Some(a) => {
                    for j in 0..a.ncols() {
                        for i in 0..a.nrows() {
                            a[(i, j)] += alpha * b[(i, j)];
                        }
                    }
                }
                None => {
                    let mut a = b.clone();
                    if alpha != 1.0 {
                        a *= faer::Scale(alpha);
                    }
                    self.blocks.insert(q, a);
                }
            }
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.values().map(|m| m.squared_norm_l2()).sum()
    }
}

fn accumulate(out: &mut BlockMat, key: i32, a: faer::MatRef<'_, f64>, b: faer::MatRef<'_, f64>, alpha: f64) {
    match out.blocks.get_mut(&key) {
        Some(dst) => matmul(dst.as_mut(), Accum::Add, a, b, alpha, Par::Seq),
        None => {
            let mut dst = Mat::zeros(a.nrows(), b.ncols());
            matmul(dst.as_mut(), Accum::Replace, a, b, alpha, Par::Seq);
            out.blocks.insert(key, dst);
        }
    }
}
