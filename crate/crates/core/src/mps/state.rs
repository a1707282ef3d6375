use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::blocks::{BlockMat, BondSpace};
use crate::basis::SectorBasis;
use crate::error::{Error, Result};
use crate::exact::entropy_from_weights;
use crate::linalg;
use crate::model::ChainSpec;

/// Leading bytes of a checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"O2MPS\0\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Singular values below this fraction of the largest are dropped by gauge moves.
const GAUGE_CUTOFF: f64 = 1e-15;

/// Rank-3 site tensor `A[a, s, b]`, stored as one block-sparse matrix per
/// physical state `s`. The block for `s` shifts the bond charge by `n_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    pub left: BondSpace,
    pub right: BondSpace,
    pub mats: Vec<BlockMat>,
}

impl SiteTensor {
    pub fn physical_dim(&self) -> usize {
        self.mats.len()
    }

    /// Dense `(left, physical, right)` copy, sectors laid out in ascending charge.
    pub fn to_dense(&self) -> (usize, usize, usize, Vec<f64>) {
        let (dl, d, dr) = (self.left.total(), self.mats.len(), self.right.total());
        let lo = offsets(&self.left);
        let ro = offsets(&self.right);
        let mut out = vec![0.0; dl * d * dr];
        for (s, m) in self.mats.iter().enumerate() {
            for (&q, b) in &m.blocks {
                let (r0, c0) = (lo[&q], ro[&(q + m.shift)]);
                for i in 0..b.nrows() {
                    for j in 0..b.ncols() {
                        out[((r0 + i) * d + s) * dr + c0 + j] = b[(i, j)];
                    }
                }
            }
        }
        (dl, d, dr, out)
    }
}

fn offsets(space: &BondSpace) -> BTreeMap<i32, usize> {
    let mut acc = 0;
    space
        .sectors()
        .iter()
        .map(|&(q, d)| {
            let o = (q, acc);
            acc += d;
            o
        })
        .collect()
}

/// Matrix-product state with a single orthogonality center.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    pub spec: ChainSpec,
    pub magnetization: i64,
    pub sites: Vec<SiteTensor>,
    pub center: usize,
    /// Largest per-bond discarded weight of the last sweep that produced this state.
    pub max_truncation_error: f64,
}

pub(crate) fn physical_charges(spec: &ChainSpec) -> Vec<i32> {
    let s = spec.spin.as_i32();
    (-s..=s).collect()
}

impl MpsState {
    /// Product state with the given occupations `n_l`.
    pub fn product(spec: &ChainSpec, occupations: &[i32]) -> Result<Self> {
        if occupations.len() != spec.length {
            return Err(Error::ShapeMismatch(format!(
                "{} occupations for a chain of {} sites",
                occupations.len(),
                spec.length
            )));
        }
        let s = spec.spin.as_i32();
        let charges = physical_charges(spec);
        let mut q = 0;
        let mut sites = Vec::with_capacity(spec.length);
        for &n in occupations {
            if n.abs() > s {
                return Err(Error::InvalidInput(format!("occupation {n} outside -{s}..{s}")));
            }
            let mut mats: Vec<BlockMat> = charges.iter().map(|&c| BlockMat::new(c)).collect();
            mats[(n + s) as usize].blocks.insert(q, Mat::from_fn(1, 1, |_, _| 1.0));
            sites.push(SiteTensor { left: BondSpace::trivial(q), right: BondSpace::trivial(q + n), mats });
            q += n;
        }
        Ok(MpsState { spec: *spec, magnetization: q as i64, sites, center: 0, max_truncation_error: 0.0 })
    }

    /// Product state in sector `m`: the charge is spread evenly along the chain.
    pub fn product_in_sector(spec: &ChainSpec, m: i64) -> Result<Self> {
        let l = spec.length as i64;
        if m.abs() > spec.spin.value() as i64 * l {
            return Err(Error::EmptySector { m, length: spec.length, spin: spec.spin.value() });
        }
        let occ: Vec<i32> = (0..l).map(|i| ((i + 1) * m).div_euclid(l) as i32 - (i * m).div_euclid(l) as i32).collect();
        MpsState::product(spec, &occ)
    }

    pub fn length(&self) -> usize {
        self.sites.len()
    }

    /// Bond dimensions including the two trivial boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut out = vec![self.sites[0].left.total()];
        out.extend(self.sites.iter().map(|s| s.right.total()));
        out
    }

    pub fn largest_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn norm(&self) -> Result<f64> {
        Ok(overlap_signed(self, self)?.max(0.0).sqrt())
    }

    /// Move the orthogonality center without truncation.
    pub fn move_center_to(&mut self, target: usize) -> Result<()> {
        assert!(target < self.length());
        while self.center < target {
            let i = self.center;
            let (site, carry) = split_keep_left(&self.sites[i])?;
            self.sites[i] = site;
            absorb_left(&carry, &mut self.sites[i + 1]);
            self.center += 1;
        }
        while self.center > target {
            let i = self.center;
            let (carry, site) = split_keep_right(&self.sites[i])?;
            self.sites[i] = site;
            absorb_right(&mut self.sites[i - 1], &carry);
            self.center -= 1;
        }
        Ok(())
    }

    /// Normalized Schmidt weights across bond `bond` (between sites `bond-1` and `bond`).
    pub fn schmidt_weights(&self, bond: usize) -> Result<Vec<f64>> {
        let l = self.length();
        if bond == 0 || bond >= l {
            return Err(Error::InvalidInput(format!("bond {bond} is not interior to a chain of {l} sites")));
        }
        let mut work = self.clone();
        work.move_center_to(bond - 1)?;
        let site = &work.sites[bond - 1];
        let mut weights = Vec::new();
        for &(qr, dr) in site.right.sectors() {
            let (m, _) = gather_by_right(site, qr, dr);
            if m.nrows() > 0 {
                weights.extend(linalg::singular_values(&m)?.into_iter().map(|s| s * s));
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        weights.sort_by(|a, b| b.total_cmp(a));
        Ok(weights)
    }

    /// Largest deviation of `sum_s A^T A` (left of center) or `sum_s B B^T`
    /// (right of center) from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, site) in self.sites.iter().enumerate() {
            if i == self.center {
                continue;
            }
            let mut g = BlockMat::new(0);
            for m in &site.mats {
                if i < self.center {
                    m.tn_into(m, 1.0, &mut g);
                } else {
                    m.nt_into(m, 1.0, &mut g);
                }
            }
            let space = if i < self.center { &site.right } else { &site.left };
            for &(q, d) in space.sectors() {
                let id = Mat::<f64>::identity(d, d);
                let dev = match g.blocks.get(&q) {
                    Some(b) => (b - &id).norm_max(),
                    None => 1.0,
                };
                worst = worst.max(dev);
            }
        }
        worst
    }

    /// Coefficient of one product state.
    pub fn amplitude(&self, occupations: &[i32]) -> f64 {
        let s = self.spec.spin.as_i32();
        let mut row = Mat::<f64>::from_fn(1, 1, |_, _| 1.0);
        let mut q = 0;
        for (site, &n) in self.sites.iter().zip(occupations) {
            let m = &site.mats[(n + s) as usize];
            match m.blocks.get(&q) {
                Some(b) if row.ncols() == b.nrows() => row = &row * b,
                _ => return 0.0,
            }
            q += n;
        }
        if q as i64 != self.magnetization {
            return 0.0;
        }
        row[(0, 0)]
    }

    /// Coefficients over the states of an exact-diagonalization sector basis.
    pub fn to_sector_vector(&self, basis: &SectorBasis) -> Vec<f64> {
        basis.iter().map(|occ| self.amplitude(occ)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        MpsState::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Binary checkpoint: magic, version (u32 LE), header length (u64 LE),
    /// JSON header, then every block's entries as f64 LE in header order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut data: Vec<f64> = Vec::new();
        let sites = self
            .sites
            .iter()
            .map(|site| {
                let mut blocks = Vec::new();
                for (s, m) in site.mats.iter().enumerate() {
                    for (&q, b) in &m.blocks {
                        blocks.push((s, q, b.nrows(), b.ncols()));
                        for i in 0..b.nrows() {
                            for j in 0..b.ncols() {
                                data.push(b[(i, j)]);
                            }
                        }
                    }
                }
                SiteHeader { left: site.left.clone(), right: site.right.clone(), blocks }
            })
            .collect();
        let header = CheckpointHeader {
            spec: self.spec,
            magnetization: self.magnetization,
            center: self.center,
            max_truncation_error: self.max_truncation_error,
            sites,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not an MPS checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        let charges = physical_charges(&header.spec);
        if header.sites.len() != header.spec.length || header.center >= header.spec.length {
            return Err(Error::Checkpoint("site count does not match the chain".into()));
        }
        let mut sites = Vec::with_capacity(header.sites.len());
        let mut buf = [0u8; 8];
        for sh in header.sites {
            let mut mats: Vec<BlockMat> = charges.iter().map(|&c| BlockMat::new(c)).collect();
            for (s, q, rows, cols) in sh.blocks {
                if s >= mats.len() || sh.left.dim(q) != rows || sh.right.dim(q + charges[s]) != cols {
                    return Err(Error::Checkpoint(format!("block (s={s}, q={q}) inconsistent with bond spaces")));
                }
                let mut b = Mat::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        r.read_exact(&mut buf)?;
                        b[(i, j)] = f64::from_le_bytes(buf);
                    }
                }
                mats[s].blocks.insert(q, b);
            }
            sites.push(SiteTensor { left: sh.left, right: sh.right, mats });
        }
        Ok(MpsState {
            spec: header.spec,
            magnetization: header.magnetization,
            sites,
            center: header.center,
            max_truncation_error: header.max_truncation_error,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ChainSpec,
    magnetization: i64,
    center: usize,
    max_truncation_error: f64,
    sites: Vec<SiteHeader>,
}

#[derive(Serialize, Deserialize)]
struct SiteHeader {
    left: BondSpace,
    right: BondSpace,
    blocks: Vec<(usize, i32, usize, usize)>,
}

/// Stack `A^s[q_r - n_s]` vertically for one right sector. Returns the matrix
/// and the `(s, left charge, row offset, rows)` parts.
pub(crate) fn gather_by_right(site: &SiteTensor, qr: i32, dr: usize) -> (Mat<f64>, Vec<(usize, i32, usize, usize)>) {
    let mut parts = Vec::new();
    let mut rows = 0;
    for (s, m) in site.mats.iter().enumerate() {
        let ql = qr - m.shift;
        let dl = site.left.dim(ql);
        if dl > 0 {
            parts.push((s, ql, rows, dl));
            rows += dl;
        }
    }
    let mut out = Mat::zeros(rows, dr);
    for &(s, ql, r0, _) in &parts {
        if let Some(b) = site.mats[s].blocks.get(&ql) {
            out.as_mut().submatrix_mut(r0, 0, b.nrows(), dr).copy_from(b);
        }
    }
    (out, parts)
}

/// Stack `A^s[q_l]` horizontally for one left sector. Parts are `(s, col offset, cols)`.
pub(crate) fn gather_by_left(site: &SiteTensor, ql: i32, dl: usize) -> (Mat<f64>, Vec<(usize, usize, usize)>) {
    let mut parts = Vec::new();
    let mut cols = 0;
    for (s, m) in site.mats.iter().enumerate() {
        let dr = site.right.dim(ql + m.shift);
        if dr > 0 {
            parts.push((s, cols, dr));
            cols += dr;
        }
    }
    let mut out = Mat::zeros(dl, cols);
    for &(s, c0, dr) in &parts {
        if let Some(b) = site.mats[s].blocks.get(&ql) {
            out.as_mut().submatrix_mut(0, c0, dl, dr).copy_from(b);
        }
    }
    (out, parts)
}

fn kept_rank(sigma: &[f64]) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().take_while(|&&s| s > GAUGE_CUTOFF * top && s > 0.0).count()
}

/// `A = U (S V^T)`: returns the left-orthonormal `U` and the carry `S V^T`.
fn split_keep_left(site: &SiteTensor) -> Result<(SiteTensor, BlockMat)> {
    let mut mats: Vec<BlockMat> = site.mats.iter().map(|m| BlockMat::new(m.shift)).collect();
    let mut carry = BlockMat::new(0);
    let mut sectors = Vec::new();
    for &(qr, dr) in site.right.sectors() {
        let (m, parts) = gather_by_right(site, qr, dr);
        if m.nrows() == 0 {
            continue;
        }
        let (u, sigma, v) = linalg::thin_svd(m.as_ref())?;
        let k = kept_rank(&sigma);
        if k == 0 {
            continue;
        }
        for &(s, ql, r0, rows) in &parts {
            mats[s].blocks.insert(ql, u.as_ref().submatrix(r0, 0, rows, k).to_owned());
        }
        carry.blocks.insert(qr, Mat::from_fn(k, dr, |i, j| sigma[i] * v[(j, i)]));
        sectors.push((qr, k));
    }
    let right = BondSpace::from_sectors(sectors);
    Ok((SiteTensor { left: site.left.clone(), right: right.clone(), mats }, carry))
}

/// `A = (U S) V^T`: returns the carry `U S` and the right-orthonormal `V^T`.
fn split_keep_right(site: &SiteTensor) -> Result<(BlockMat, SiteTensor)> {
    let mut mats: Vec<BlockMat> = site.mats.iter().map(|m| BlockMat::new(m.shift)).collect();
    let mut carry = BlockMat::new(0);
    let mut sectors = Vec::new();
    for &(ql, dl) in site.left.sectors() {
        let (m, parts) = gather_by_left(site, ql, dl);
        if m.ncols() == 0 {
            continue;
        }
        let (u, sigma, v) = linalg::thin_svd(m.as_ref())?;
        let k = kept_rank(&sigma);
        if k == 0 {
            continue;
        }
        for &(s, c0, cols) in &parts {
            mats[s].blocks.insert(ql, Mat::from_fn(k, cols, |i, j| v[(c0 + j, i)]));
        }
        carry.blocks.insert(ql, Mat::from_fn(dl, k, |i, j| u[(i, j)] * sigma[j]));
        sectors.push((ql, k));
    }
    let left = BondSpace::from_sectors(sectors);
    Ok((carry, SiteTensor { left, right: site.right.clone(), mats }))
}

/// `A^s <- carry * A^s`, where `carry` maps the new left space onto the old one.
fn absorb_left(carry: &BlockMat, site: &mut SiteTensor) {
    for m in site.mats.iter_mut() {
        *m = carry.matmul(m);
    }
    site.left = BondSpace::from_sectors(carry.blocks.iter().map(|(&q, b)| (q, b.nrows())).collect());
}

/// `A^s <- A^s * carry`, where `carry` maps the old right space onto the new one.
fn absorb_right(site: &mut SiteTensor, carry: &BlockMat) {
    for m in site.mats.iter_mut() {
        *m = m.matmul(carry);
    }
    site.right = BondSpace::from_sectors(carry.blocks.iter().map(|(&q, b)| (q, b.ncols())).collect());
}

/// Signed overlap `<a|b>`.
pub fn overlap_signed(a: &MpsState, b: &MpsState) -> Result<f64> {
    if a.length() != b.length() || a.spec.spin != b.spec.spin {
        return Err(Error::ShapeMismatch(format!(
            "overlap of chains (L={}, S={}) and (L={}, S={})",
            a.length(),
            a.spec.spin,
            b.length(),
            b.spec.spin
        )));
    }
    if a.magnetization != b.magnetization {
        return Ok(0.0);
    }
    let mut env = BlockMat::new(0);
    env.blocks.insert(0, Mat::from_fn(1, 1, |_, _| 1.0));
    for (sa, sb) in a.sites.iter().zip(&b.sites) {
        let mut next = BlockMat::new(0);
        for (ma, mb) in sa.mats.iter().zip(&sb.mats) {
            let mut half = BlockMat::new(0);
            ma.tn_into(&env, 1.0, &mut half);
            half.nn_into(mb, 1.0, &mut next);
        }
        next.shift = 0;
        env = next;
    }
    Ok(env.blocks.get(&(a.magnetization as i32)).map(|b| b[(0, 0)]).unwrap_or(0.0))
}

/// `|<a|b>|`; the sign of a variational state is a gauge choice.
pub fn overlap(a: &MpsState, b: &MpsState) -> Result<f64> {
    Ok(overlap_signed(a, b)?.abs())
}

/// Von Neumann entropy across bond `floor(L/2)`, natural log.
pub fn half_chain_entropy(mps: &MpsState) -> Result<f64> {
    let weights = mps.schmidt_weights(mps.length() / 2)?;
    Ok(entropy_from_weights(&weights))
}

pub fn entropy_of_singular_values(sigma: &[f64]) -> f64 {
    let w: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    entropy_from_weights(&w)
}
