use std::collections::BTreeSet;
use std::fmt;

use super::EsrConfig;
use crate::error::{Error, Result};

/// A tiling grid: `cols` tiles across, `rows` tiles down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileRatio {
    pub cols: u32,
    pub rows: u32,
}

impl TileRatio {
    pub const fn new(cols: u32, rows: u32) -> Self {
        Self { cols, rows }
    }

    pub fn tiles(&self) -> u32 {
        self.cols * self.rows
    }
}

impl fmt::Display for TileRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.cols, self.rows)
    }
}

impl From<(u32, u32)> for TileRatio {
    fn from((cols, rows): (u32, u32)) -> Self {
        Self { cols, rows }
    }
}

/// Candidate grids, deduplicated and sorted lexicographically by `(cols, rows)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatioSet {
    ratios: Vec<TileRatio>,
}

impl RatioSet {
    pub fn as_slice(&self) -> &[TileRatio] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TileRatio> {
        self.ratios.iter()
    }
}

/// Every grid whose tile count lies in `[n_min, n_max]`.
pub fn generate_adaptive_ratios(n_min: u32, n_max: u32) -> Result<RatioSet> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::Config(format!(
            "need 1 <= n_min <= n_max, got n_min={n_min} n_max={n_max}"
        )));
    }
    let mut set = BTreeSet::new();
    for n in n_min..=n_max {
        for i in 1..=n {
            for j in 1..=n {
                let tiles = i * j;
                if tiles >= n_min && tiles <= n_max {
                    set.insert(TileRatio::new(i, j));
                }
            }
        }
    }
    Ok(RatioSet {
        ratios: set.into_iter().collect(),
    })
}

/// Picks the grid whose `cols / rows` is closest to `width / height`.
///
/// Differences are compared exactly in integer arithmetic. On an exact tie a
/// later candidate with more tiles replaces the incumbent only while its
/// upscaled area stays within `tie_break_area_factor` times the input area.
pub fn match_ratio(width: usize, height: usize, ratios: &RatioSet, config: &EsrConfig) -> TileRatio {
    assert!(width >= 1 && height >= 1, "match_ratio on an empty frame");
    let mut iter = ratios.iter();
    let mut best = *iter.next().expect("ratio set is empty");
    let (w, h) = (width as u128, height as u128);
    // |w/h - c/r| = |w*r - c*h| / (h*r); h is common so compare |w*r - c*h| / r.
    let numer = |r: &TileRatio| (w * u128::from(r.rows)).abs_diff(u128::from(r.cols) * h);
    let tile_area = (config.tile_size * config.tile_size) as f64;
    let limit = config.tie_break_area_factor * (width * height) as f64;
    for cand in iter {
        let lhs = numer(cand) * u128::from(best.rows);
        let rhs = numer(&best) * u128::from(cand.rows);
        let closer = lhs < rhs;
        let tie_upgrade =
            lhs == rhs && cand.tiles() > best.tiles() && f64::from(cand.tiles()) * tile_area <= limit;
        if closer || tie_upgrade {
            best = *cand;
        }
    }
    best
}
