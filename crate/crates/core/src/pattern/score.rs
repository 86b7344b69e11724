//! Spatial-entropy and color-mix scores of a colored layout.

use std::sync::OnceLock;

use super::layout::{neighbor_masks, GridLayout, CELLS, SIDE};

/// Sum of pairwise Manhattan distances.
pub fn pairwise_manhattan_sum(layout: &GridLayout) -> u32 {
    let coords = layout.coords();
    let mut total = 0;
    for (i, a) in coords.iter().enumerate() {
        for b in &coords[i + 1..] {
            total += (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)) as u32;
        }
    }
    total
}

/// `sum_{a<b} n_a n_b |a - b|`: the one-axis part of the pairwise distance
/// sum for cells distributed over lines with counts `n`.
fn margin_spread(n: &[u32; SIDE]) -> u32 {
    let mut s = 0;
    for a in 0..SIDE {
        for b in a + 1..SIDE {
            s += n[a] * n[b] * (b - a) as u32;
        }
    }
    s
}

fn margins(total: u32) -> Vec<[u32; SIDE]> {
    let mut out = Vec::new();
    let mut cur = [0u32; SIDE];
    fn rec(i: usize, left: u32, cur: &mut [u32; SIDE], out: &mut Vec<[u32; SIDE]>) {
        if i == SIDE - 1 {
            if left as usize <= SIDE {
                cur[i] = left;
                out.push(*cur);
            }
            return;
        }
        for v in 0..=left.min(SIDE as u32) {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// Gale–Ryser: a 0-1 matrix with these row and column sums exists.
fn realizable(rows: &[u32; SIDE], cols: &[u32; SIDE]) -> bool {
    let mut c = *cols;
    c.sort_unstable_by(|a, b| b.cmp(a));
    let mut lhs = 0;
    for k in 1..=SIDE {
        lhs += c[k - 1];
        let rhs: u32 = rows.iter().map(|&r| r.min(k as u32)).sum();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// Largest pairwise Manhattan sum over all (possibly disconnected)
/// placements of `l` cells. The sum splits into a row part and a column
/// part that depend only on the row and column counts, so it suffices to
/// search realizable pairs of count vectors.
pub fn max_pairwise_manhattan_sum(l: usize) -> u32 {
    static TABLE: OnceLock<Vec<u32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=CELLS)
            .map(|l| {
                let mut ms: Vec<([u32; SIDE], u32)> = margins(l as u32)
                    .into_iter()
                    .map(|m| {
                        let s = margin_spread(&m);
                        (m, s)
                    })
                    .collect();
                ms.sort_by(|a, b| b.1.cmp(&a.1));
                let mut best = 0;
                for (rows, rs) in &ms {
                    if rs + ms[0].1 <= best {
                        break;
                    }
                    for (cols, cs) in &ms {
                        if rs + cs <= best {
                            break;
                        }
                        if realizable(rows, cols) {
                            best = rs + cs;
                            break;
                        }
                    }
                }
                best
            })
            .collect()
    })[l]
}

/// Mean over occupied cells of occupied 8-neighbors over in-grid
/// 8-neighbors; zero for a single cell.
pub fn clustering_coefficient(layout: &GridLayout) -> f64 {
    let n = layout.len();
    if n <= 1 {
        return 0.0;
    }
    let nb = neighbor_masks();
    let total: f64 = layout
        .indices()
        .iter()
        .map(|&i| (nb[i] & layout.mask()).count_ones() as f64 / nb[i].count_ones() as f64)
        .sum();
    total / n as f64
}

/// Mean pairwise Manhattan distance over its attainable maximum for the
/// same number of cells.
pub fn normalized_spread(layout: &GridLayout) -> f64 {
    let n = layout.len();
    if n <= 1 {
        return 0.0;
    }
    pairwise_manhattan_sum(layout) as f64 / max_pairwise_manhattan_sum(n) as f64
}

/// `w * D_norm + (1 - w) * (1 - C)`.
pub fn spatial_entropy_weighted(layout: &GridLayout, w: f64) -> f64 {
    w * normalized_spread(layout) + (1.0 - w) * (1.0 - clustering_coefficient(layout))
}

pub const DEFAULT_BLEND: f64 = 0.5;

pub fn spatial_entropy(layout: &GridLayout) -> f64 {
    spatial_entropy_weighted(layout, DEFAULT_BLEND)
}

/// Share of 8-adjacent occupied pairs with different colors; `colors` is
/// the row-major board with `-1` for empty cells.
pub fn color_mix_ratio_cells(colors: &[i8; CELLS]) -> f64 {
    let nb = neighbor_masks();
    let (mut pairs, mut mixed) = (0u32, 0u32);
    for i in 0..CELLS {
        if colors[i] < 0 {
            continue;
        }
        let mut rest = nb[i] & !((1u32 << (i + 1)) - 1);
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if colors[j] >= 0 {
                pairs += 1;
                if colors[j] != colors[i] {
                    mixed += 1;
                }
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        mixed as f64 / pairs as f64
    }
}
