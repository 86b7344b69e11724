//! Standardized colored 5x5 stimulus patterns.
//!
//! For a target `(L, K)` a pool of random connected asymmetric layouts is
//! grown, each is colored several ways with balanced color counts, and the
//! candidate whose spatial-entropy and color-mix percentiles within the pool
//! are jointly closest to the median is returned.

pub mod layout;
pub mod score;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::StimulusParams;
use crate::error::{Error, Result};

pub use layout::{grow_cluster, symmetry_waived, GridLayout, CELLS, SIDE};
pub use score::{color_mix_ratio_cells, spatial_entropy, spatial_entropy_weighted};

/// Fixed ordered palette; color index `i` is `PALETTE[i]`.
pub const PALETTE: [(&str, &str); 8] = [
    ("red", "#e6194b"),
    ("orange", "#f58231"),
    ("yellow", "#ffe119"),
    ("lime", "#bfef45"),
    ("light blue", "#42d4f4"),
    ("purple", "#911eb4"),
    ("pink", "#f032e6"),
    ("white", "#ffffff"),
];

pub const EMPTY: i8 = -1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "K")]
    pub k: u32,
    /// Row-major board; `-1` for empty, otherwise a palette index.
    pub cells: [i8; CELLS],
    pub spatial_entropy: f64,
    pub color_mix_ratio: f64,
    pub percentile_spatial: f64,
    pub percentile_color: f64,
    pub seed: u64,
    pub pool_size: usize,
}

impl PatternSpec {
    pub fn layout(&self) -> GridLayout {
        let mask = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != EMPTY)
            .fold(0u32, |m, (i, _)| m | 1 << i);
        GridLayout::from_mask(mask).expect("25 cells")
    }

    /// Occupied cells per palette index.
    pub fn color_counts(&self) -> [u32; 8] {
        let mut counts = [0; 8];
        for &c in &self.cells {
            if c != EMPTY {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    pub fn joint_distance(&self) -> f64 {
        (self.percentile_spatial - 50.0).abs() + (self.percentile_color - 50.0).abs()
    }
}

pub fn color_mix_ratio(pattern: &PatternSpec) -> f64 {
    color_mix_ratio_cells(&pattern.cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub pool_size: usize,
    pub random_colorings: usize,
    /// Adds one coloring that lays colors along a breadth-first walk, giving
    /// contiguous same-color regions.
    pub contiguous_coloring: bool,
    pub spatial_weight: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            pool_size: 500,
            random_colorings: 20,
            contiguous_coloring: true,
            spatial_weight: score::DEFAULT_BLEND,
        }
    }
}

/// Balanced multiset of colors: counts differ by at most one, lower
/// indices take the remainder.
pub fn balanced_colors(l: usize, k: usize) -> Vec<i8> {
    (0..k)
        .flat_map(|c| std::iter::repeat_n(c as i8, l / k + usize::from(c < l % k)))
        .collect()
}

fn paint(layout: &GridLayout, order: &[usize], colors: &[i8]) -> [i8; CELLS] {
    let mut board = [EMPTY; CELLS];
    for (&i, &c) in order.iter().zip(colors) {
        board[i] = c;
    }
    debug_assert_eq!(order.len(), layout.len());
    board
}

/// Breadth-first order over 8-adjacency from `start`, neighbors in
/// row-major order.
fn bfs_order(layout: &GridLayout, start: usize) -> Vec<usize> {
    let nb = layout::neighbor_masks();
    let mut order = vec![start];
    let mut seen = 1u32 << start;
    let mut head = 0;
    while head < order.len() {
        let mut next = nb[order[head]] & layout.mask() & !seen;
        while next != 0 {
            let j = next.trailing_zeros() as usize;
            next &= next - 1;
            seen |= 1 << j;
            order.push(j);
        }
        head += 1;
    }
    order
}

fn colorings<R: Rng + ?Sized>(
    layout: &GridLayout,
    k: usize,
    cfg: &PatternConfig,
    rng: &mut R,
) -> Vec<[i8; CELLS]> {
    let cells = layout.indices();
    let base = balanced_colors(cells.len(), k);
    let mut out = Vec::with_capacity(cfg.random_colorings + 1);
    for _ in 0..cfg.random_colorings {
        let mut colors = base.clone();
        colors.shuffle(rng);
        out.push(paint(layout, &cells, &colors));
    }
    if cfg.contiguous_coloring {
        let start = cells[rng.random_range(0..cells.len())];
        out.push(paint(layout, &bfs_order(layout, start), &base));
    }
    out
}

/// A scored candidate in a pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub cells: [i8; CELLS],
    pub spatial_entropy: f64,
    pub color_mix_ratio: f64,
}

impl Candidate {
    pub fn new(layout: &GridLayout, cells: [i8; CELLS], spatial_weight: f64) -> Self {
        Self {
            cells,
            spatial_entropy: spatial_entropy_weighted(layout, spatial_weight),
            color_mix_ratio: color_mix_ratio_cells(&cells),
        }
    }
}

/// Midpoint-rank percentile of every value within `values`:
/// `100 * (#less + #equal / 2) / n`.
pub fn midpoint_percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|&v| {
            let less = sorted.partition_point(|&x| x < v);
            let not_greater = sorted.partition_point(|&x| x <= v);
            100.0 * (less as f64 + 0.5 * (not_greater - less) as f64) / n as f64
        })
        .collect()
}

/// Index of the candidate minimizing `|P_S - 50| + |P_C - 50|`, first in
/// pool order on ties, together with both percentile vectors.
pub fn select_from_pool(pool: &[Candidate]) -> (usize, Vec<f64>, Vec<f64>) {
    let ps = midpoint_percentiles(&pool.iter().map(|c| c.spatial_entropy).collect::<Vec<_>>());
    let pc = midpoint_percentiles(&pool.iter().map(|c| c.color_mix_ratio).collect::<Vec<_>>());
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..pool.len() {
        let d = (ps[i] - 50.0).abs() + (pc[i] - 50.0).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, ps, pc)
}

fn rng_for(params: StimulusParams, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((params.l() as u64) << 8) | params.k() as u64);
    rng
}

fn check_params(params: StimulusParams) -> Result<()> {
    if !params.is_feasible() {
        return Err(Error::Domain(format!("{params} violates K <= L")));
    }
    Ok(())
}

/// The sampled candidate pool for `(params, seed)`, in generation order.
pub fn sample_pool(params: StimulusParams, seed: u64, cfg: &PatternConfig) -> Result<Vec<Candidate>> {
    check_params(params)?;
    if cfg.pool_size == 0 || (cfg.random_colorings == 0 && !cfg.contiguous_coloring) {
        return Err(Error::Config("empty candidate pool".into()));
    }
    let (l, k) = (params.l() as usize, params.k() as usize);
    let mut rng = rng_for(params, seed);
    let mut pool = Vec::with_capacity(cfg.pool_size * (cfg.random_colorings + 1));
    for _ in 0..cfg.pool_size {
        let layout = grow_cluster(l, &mut rng)?;
        for cells in colorings(&layout, k, cfg, &mut rng) {
            pool.push(Candidate::new(&layout, cells, cfg.spatial_weight));
        }
    }
    Ok(pool)
}

fn finish(params: StimulusParams, seed: u64, pool_size: usize, pool: &[Candidate]) -> PatternSpec {
    let (i, ps, pc) = select_from_pool(pool);
    PatternSpec {
        l: params.l(),
        k: params.k(),
        cells: pool[i].cells,
        spatial_entropy: pool[i].spatial_entropy,
        color_mix_ratio: pool[i].color_mix_ratio,
        percentile_spatial: ps[i],
        percentile_color: pc[i],
        seed,
        pool_size,
    }
}

/// Deterministic standardized pattern for `params`.
pub fn generate_standard_pattern(params: StimulusParams, seed: u64, pool_size: usize) -> Result<PatternSpec> {
    let cfg = PatternConfig {
        pool_size,
        ..PatternConfig::default()
    };
    generate_with(params, seed, &cfg)
}

pub fn generate_with(params: StimulusParams, seed: u64, cfg: &PatternConfig) -> Result<PatternSpec> {
    let pool = sample_pool(params, seed, cfg)?;
    Ok(finish(params, seed, cfg.pool_size, &pool))
}

/// Every distinct balanced coloring of `layout` with `k` colors, in
/// lexicographic order of the color sequence over row-major cells.
pub fn all_balanced_colorings(layout: &GridLayout, k: usize) -> Vec<[i8; CELLS]> {
    let cells = layout.indices();
    let mut colors = balanced_colors(cells.len(), k);
    colors.sort_unstable();
    let mut out = vec![paint(layout, &cells, &colors)];
    // next lexicographic permutation of a multiset
    loop {
        let n = colors.len();
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| colors[i] < colors[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| colors[j] > colors[i]).expect("exists");
        colors.swap(i, j);
        colors[i + 1..].reverse();
        out.push(paint(layout, &cells, &colors));
    }
    out
}

/// Largest `L` for which the exhaustive pool is offered.
pub const EXHAUSTIVE_MAX_L: u32 = 4;

/// Exhaustive pool: every connected asymmetric placement with every
/// balanced coloring.
pub fn exhaustive_pool(params: StimulusParams, spatial_weight: f64) -> Result<Vec<Candidate>> {
    check_params(params)?;
    if params.l() > EXHAUSTIVE_MAX_L {
        return Err(Error::Config(format!(
            "exhaustive pools are limited to L <= {EXHAUSTIVE_MAX_L}"
        )));
    }
    let mut pool = Vec::new();
    for layout in layout::enumerate_layouts(params.l() as usize) {
        for cells in all_balanced_colorings(&layout, params.k() as usize) {
            pool.push(Candidate::new(&layout, cells, spatial_weight));
        }
    }
    Ok(pool)
}

/// Selection over the exhaustive pool; `seed` is recorded but unused.
pub fn generate_exhaustive(params: StimulusParams, seed: u64) -> Result<PatternSpec> {
    let pool = exhaustive_pool(params, score::DEFAULT_BLEND)?;
    Ok(finish(params, seed, pool.len(), &pool))
}
