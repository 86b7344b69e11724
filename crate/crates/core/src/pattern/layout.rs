//! Occupied-cell layouts on the 5x5 board.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIDE: usize = 5;
pub const CELLS: usize = SIDE * SIDE;

/// Set of occupied cells as a 25-bit row-major mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridLayout(u32);

#[inline]
pub fn cell(r: usize, c: usize) -> usize {
    r * SIDE + c
}

/// In-grid 8-neighbors of each cell as bitmasks.
pub fn neighbor_masks() -> &'static [u32; CELLS] {
    static MASKS: std::sync::OnceLock<[u32; CELLS]> = std::sync::OnceLock::new();
    MASKS.get_or_init(|| {
        let mut out = [0u32; CELLS];
        for r in 0..SIDE as i32 {
            for c in 0..SIDE as i32 {
                let mut m = 0;
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if (dr, dc) != (0, 0) && (0..SIDE as i32).contains(&nr) && (0..SIDE as i32).contains(&nc) {
                            m |= 1 << cell(nr as usize, nc as usize);
                        }
                    }
                }
                out[cell(r as usize, c as usize)] = m;
            }
        }
        out
    })
}

impl GridLayout {
    pub fn from_mask(mask: u32) -> Result<Self> {
        if mask >> CELLS != 0 {
            return Err(Error::Domain("layout mask uses more than 25 cells".into()));
        }
        Ok(Self(mask))
    }

    pub fn from_cells(cells: &[(usize, usize)]) -> Result<Self> {
        let mut mask = 0;
        for &(r, c) in cells {
            if r >= SIDE || c >= SIDE {
                return Err(Error::Domain(format!("cell ({r}, {c}) off the board")));
            }
            mask |= 1 << cell(r, c);
        }
        Ok(Self(mask))
    }

    pub fn mask(&self) -> u32 {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.0 >> idx & 1 == 1
    }

    /// Occupied cell indices in row-major order.
    pub fn indices(&self) -> Vec<usize> {
        (0..CELLS).filter(|&i| self.contains(i)).collect()
    }

    pub fn coords(&self) -> Vec<(usize, usize)> {
        self.indices().into_iter().map(|i| (i / SIDE, i % SIDE)).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.0 == 0 {
            return false;
        }
        let nb = neighbor_masks();
        let mut seen = 1u32 << self.0.trailing_zeros();
        loop {
            let mut grow = seen;
            let mut rest = seen;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                grow |= nb[i] & self.0;
            }
            if grow == seen {
                return seen == self.0;
            }
            seen = grow;
        }
    }

    fn transformed(&self, f: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let mut mask = 0;
        for (r, c) in self.coords() {
            let (nr, nc) = f(r, c);
            mask |= 1 << cell(nr, nc);
        }
        Self(mask).normalized()
    }

    /// Translated so the bounding box touches row 0 and column 0.
    pub fn normalized(&self) -> Self {
        let coords = self.coords();
        let r0 = coords.iter().map(|p| p.0).min().unwrap_or(0);
        let c0 = coords.iter().map(|p| p.1).min().unwrap_or(0);
        let mut mask = 0;
        for (r, c) in coords {
            mask |= 1 << cell(r - r0, c - c0);
        }
        Self(mask)
    }

    /// Whether the shape maps onto itself, up to translation, under the
    /// horizontal, vertical, main-diagonal or anti-diagonal reflection.
    pub fn mirror_symmetries(&self) -> [bool; 4] {
        let n = SIDE - 1;
        let base = self.normalized();
        [
            self.transformed(|r, c| (n - r, c)) == base,
            self.transformed(|r, c| (r, n - c)) == base,
            self.transformed(|r, c| (c, r)) == base,
            self.transformed(|r, c| (n - c, n - r)) == base,
        ]
    }

    pub fn is_symmetric(&self) -> bool {
        self.mirror_symmetries().iter().any(|&s| s)
    }
}

/// Sizes where every 8-connected layout is mirror symmetric, so the
/// symmetry filter cannot apply.
pub fn symmetry_waived(l: usize) -> bool {
    matches!(l, 1 | 2 | CELLS)
}

const MAX_ATTEMPTS: usize = 100_000;

/// Grows an 8-connected cluster of `l` cells from a random seed cell by
/// adding uniformly chosen frontier cells, retrying until the result is
/// asymmetric (unless waived for `l`).
pub fn grow_cluster<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Result<GridLayout> {
    if !(1..=CELLS).contains(&l) {
        return Err(Error::Domain(format!("cluster size {l} outside 1..=25")));
    }
    let nb = neighbor_masks();
    for _ in 0..MAX_ATTEMPTS {
        let mut occupied = 1u32 << rng.random_range(0..CELLS);
        let mut frontier = nb[occupied.trailing_zeros() as usize];
        while (occupied.count_ones() as usize) < l {
            let pick = rng.random_range(0..frontier.count_ones());
            let idx = nth_set_bit(frontier, pick);
            occupied |= 1 << idx;
            frontier = (frontier | nb[idx]) & !occupied;
        }
        let layout = GridLayout(occupied);
        if symmetry_waived(l) || !layout.is_symmetric() {
            return Ok(layout);
        }
    }
    Err(Error::Config(format!("no asymmetric layout of size {l} found")))
}

fn nth_set_bit(mut mask: u32, n: u32) -> usize {
    for _ in 0..n {
        mask &= mask - 1;
    }
    mask.trailing_zeros() as usize
}

/// Every connected layout of size `l` on the board, filtered for
/// asymmetry unless waived, in increasing mask order.
pub fn enumerate_layouts(l: usize) -> Vec<GridLayout> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..l).collect();
    if l == 0 || l > CELLS {
        return out;
    }
    loop {
        let mask = combo.iter().fold(0u32, |m, &i| m | 1 << i);
        let layout = GridLayout(mask);
        if layout.is_connected() && (symmetry_waived(l) || !layout.is_symmetric()) {
            out.push(layout);
        }
        // next combination in lexicographic order
        let mut i = l;
        while i > 0 && combo[i - 1] == CELLS - l + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..l {
            combo[j] = combo[j - 1] + 1;
        }
    }
    out.sort();
    out
}
