//! Fixed-magnetization product bases.

use crate::error::{Error, Result};
use crate::model::SpinTruncation;

/// Product states `(n_1, ..., n_L)` with `sum n_l = m`, in lexicographic order.
///
/// States are enumerated depth first; `completions[k][r]` counts the ways to
/// fill sites `k..L` with total charge `r - offset`, which gives both the
/// sector dimension and an O(L) ranking of any state.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    spin: SpinTruncation,
    length: usize,
    magnetization: i64,
    occupations: Vec<i32>,
    completions: Vec<Vec<u64>>,
    offset: i64,
}

impl SectorBasis {
    pub fn new(spin: SpinTruncation, length: usize, magnetization: i64) -> Result<Self> {
        let s = spin.as_i32() as i64;
        let offset = s * length as i64;
        let width = (2 * offset + 1) as usize;
        let mut completions = vec![vec![0u64; width]; length + 1];
        completions[length][offset as usize] = 1;
        for k in (0..length).rev() {
            for r in 0..width {
                let charge = r as i64 - offset;
                let mut total = 0u64;
                for n in -s..=s {
                    let rest = charge - n;
                    if rest.abs() <= offset {
                        total += completions[k + 1][(rest + offset) as usize];
                    }
                }
                completions[k][r] = total;
            }
        }
        let dim = if magnetization.abs() <= offset {
            completions[0][(magnetization + offset) as usize]
        } else {
            0
        };
        if dim == 0 {
            return Err(Error::EmptySector { m: magnetization, length, spin: spin.value() });
        }
        let mut basis = SectorBasis {
            spin,
            length,
            magnetization,
            occupations: Vec::with_capacity(dim as usize * length),
            completions,
            offset,
        };
        let mut current = vec![0i32; length];
        basis.enumerate(0, magnetization, &mut current);
        debug_assert_eq!(basis.occupations.len(), dim as usize * length);
        Ok(basis)
    }

    /// Sector dimension without building the basis.
    pub fn dimension(spin: SpinTruncation, length: usize, magnetization: i64) -> u64 {
        let s = spin.as_i32() as i64;
        let offset = s * length as i64;
        if magnetization.abs() > offset {
            return 0;
        }
        let width = (2 * offset + 1) as usize;
        let mut row = vec![0u64; width];
        row[offset as usize] = 1;
        for _ in 0..length {
            let mut next = vec![0u64; width];
            for (r, slot) in next.iter_mut().enumerate() {
                let charge = r as i64 - offset;
                for n in -s..=s {
                    let rest = charge - n;
                    if rest.abs() <= offset {
                        *slot += row[(rest + offset) as usize];
                    }
                }
            }
            row = next;
        }
        row[(magnetization + offset) as usize]
    }

    fn remaining(&self, site: usize, charge: i64) -> u64 {
        if charge.abs() > self.offset {
            0
        } else {
            self.completions[site][(charge + self.offset) as usize]
        }
    }

    fn enumerate(&mut self, site: usize, charge: i64, current: &mut [i32]) {
        if site == self.length {
            self.occupations.extend_from_slice(current);
            return;
        }
        let s = self.spin.as_i32();
        for n in -s..=s {
            if self.remaining(site + 1, charge - n as i64) == 0 {
                continue;
            }
            current[site] = n;
            self.enumerate(site + 1, charge - n as i64, current);
        }
    }

    pub fn len(&self) -> usize {
        self.occupations.len() / self.length
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn spin(&self) -> SpinTruncation {
        self.spin
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn magnetization(&self) -> i64 {
        self.magnetization
    }

    pub fn state(&self, index: usize) -> &[i32] {
        &self.occupations[index * self.length..(index + 1) * self.length]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i32]> {
        self.occupations.chunks_exact(self.length)
    }

    /// Position of a product state, or `None` if it is not in this sector.
    pub fn rank(&self, occ: &[i32]) -> Option<usize> {
        if occ.len() != self.length {
            return None;
        }
        let s = self.spin.as_i32();
        let mut charge = self.magnetization;
        let mut index = 0u64;
        for (site, &n) in occ.iter().enumerate() {
            if n.abs() > s {
                return None;
            }
            for lower in -s..n {
                index += self.remaining(site + 1, charge - lower as i64);
            }
            charge -= n as i64;
        }
        (charge == 0).then_some(index as usize)
    }
}
