use std::fmt::Write as _;
use std::path::Path;

use super::ratios::{generate_adaptive_ratios, match_ratio, TileRatio};
use super::resize::resize_frame;
use super::temporal::{hierarchical_temporal_split, MultiLevelEvents};
use super::EsrConfig;
use crate::error::{Error, Result};
use crate::event_model::EventStream;
use crate::frame::RgbFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRole {
    Level1,
    Level2,
    Level3,
    Patch,
}

impl FrameRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameRole::Level1 => "level1",
            FrameRole::Level2 => "level2",
            FrameRole::Level3 => "level3",
            FrameRole::Patch => "patch",
        }
    }
}

/// Temporal frames plus high-resolution tiles of the all-events frame.
/// Every frame is `tile_size x tile_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrBundle {
    pub temporal: MultiLevelEvents,
    pub chosen_ratio: TileRatio,
    pub patches: Vec<RgbFrame>,
    pub provenance: String,
}

impl EsrBundle {
    /// Frames in bundle order: level 1, level 2, level 3, then patches.
    pub fn frames(&self) -> impl Iterator<Item = (FrameRole, &RgbFrame)> {
        let t = &self.temporal;
        t.level1
            .iter()
            .map(|f| (FrameRole::Level1, f))
            .chain(t.level2.iter().map(|f| (FrameRole::Level2, f)))
            .chain(std::iter::once((FrameRole::Level3, &t.level3)))
            .chain(self.patches.iter().map(|f| (FrameRole::Patch, f)))
    }

    pub fn len(&self) -> usize {
        self.temporal.level1.len() + self.temporal.level2.len() + 1 + self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(N1, N2, 1, Np)`.
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (self.temporal.level1.len(), self.temporal.level2.len(), 1, self.patches.len())
    }
}

/// Resizes `frame` to `(cols * tile) x (rows * tile)` and cuts it into
/// `cols * rows` square tiles in row-major order.
pub fn spatial_split(frame: &RgbFrame, ratio: TileRatio, tile_size: usize) -> Vec<RgbFrame> {
    assert!(ratio.cols >= 1 && ratio.rows >= 1, "ratio must be at least 1x1");
    let (cols, rows) = (ratio.cols as usize, ratio.rows as usize);
    let big = resize_frame(frame, cols * tile_size, rows * tile_size);
    let mut tiles = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            tiles.push(big.crop(c * tile_size, r * tile_size, tile_size, tile_size));
        }
    }
    tiles
}

fn choose_ratio(width: usize, height: usize, config: &EsrConfig) -> Result<TileRatio> {
    let set = generate_adaptive_ratios(config.n_min, config.n_max)?;
    Ok(match_ratio(width, height, &set, config))
}

pub fn assemble_esr(stream: &EventStream, config: &EsrConfig) -> Result<EsrBundle> {
    let levels = hierarchical_temporal_split(stream, config)?;
    let geometry = stream.geometry;
    let ratio = choose_ratio(geometry.width.into(), geometry.height.into(), config)?;
    let patches = spatial_split(&levels.level3, ratio, config.tile_size);
    let tile = config.tile_size;
    let temporal = MultiLevelEvents {
        level1: levels.level1.iter().map(|f| resize_frame(f, tile, tile)).collect(),
        level2: levels.level2.iter().map(|f| resize_frame(f, tile, tile)).collect(),
        level3: resize_frame(&levels.level3, tile, tile),
    };
    Ok(EsrBundle {
        temporal,
        chosen_ratio: ratio,
        patches,
        provenance: stream.source_id.clone(),
    })
}

/// The whole image resized to one tile, followed by its adaptive tiles.
pub fn split_image(image: &RgbFrame, config: &EsrConfig) -> Result<Vec<RgbFrame>> {
    config.validate()?;
    let ratio = choose_ratio(image.width(), image.height(), config)?;
    let mut out = vec![resize_frame(image, config.tile_size, config.tile_size)];
    out.extend(spatial_split(image, ratio, config.tile_size));
    Ok(out)
}

/// Writes each frame as `NNN_role.ppm` and a sidecar `bundle.txt` listing
/// order and roles.
pub fn write_bundle(bundle: &EsrBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (n1, n2, n3, np) = bundle.counts();
    let mut sidecar = String::new();
    let _ = writeln!(sidecar, "source {}", bundle.provenance);
    let _ = writeln!(sidecar, "ratio {}", bundle.chosen_ratio);
    let _ = writeln!(sidecar, "counts {n1} {n2} {n3} {np}");
    let mut per_role = [0usize; 4];
    for (index, (role, frame)) in bundle.frames().enumerate() {
        let slot = &mut per_role[role as usize];
        let name = format!("{index:03}_{}.ppm", role.as_str());
        frame.write_ppm(&dir.join(&name))?;
        let _ = writeln!(sidecar, "{index} {} {} {name}", role.as_str(), slot);
        *slot += 1;
    }
    let path = dir.join("bundle.txt");
    std::fs::write(&path, sidecar).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{Event, Polarity, SensorGeometry};
    use crate::frame::{BLUE, RED, WHITE};

    fn small(n_eps: usize, total: usize, tile: usize) -> EsrConfig {
        EsrConfig {
            total_events: total,
            tile_size: tile,
            ..EsrConfig::with_n_epsilon(n_eps)
        }
    }

    #[test]
    fn split_examples() {
        let f = RgbFrame::filled(3, 2, RED);
        let one = spatial_split(&f, TileRatio::new(1, 1), 5);
        assert_eq!(one, vec![resize_frame(&f, 5, 5)]);
        let tiles = spatial_split(&RgbFrame::filled(7, 3, BLUE), TileRatio::new(2, 3), 4);
        assert_eq!(tiles.len(), 6);
        assert!(tiles.iter().all(|t| t.pixels().all(|p| p == BLUE)));
    }

    #[test]
    fn vga_split_regions() {
        let mut f = RgbFrame::filled(640, 480, WHITE);
        for y in 0..480 {
            for x in 0..640 {
                f.set(x, y, [(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        let tiles = spatial_split(&f, TileRatio::new(3, 2), 448);
        assert_eq!(tiles.len(), 6);
        let big = resize_frame(&f, 1344, 896);
        assert_eq!(tiles[0], big.crop(0, 0, 448, 448));
        // row-major: tile 4 is row 1, column 1
        assert_eq!(tiles[4], big.crop(448, 448, 448, 448));
        // reassembly reproduces the resized frame
        let mut joined = RgbFrame::filled(1344, 896, WHITE);
        for (k, t) in tiles.iter().enumerate() {
            let (c, r) = (k % 3, k / 3);
            for y in 0..448 {
                for x in 0..448 {
                    joined.set(c * 448 + x, r * 448 + y, t.get(x, y));
                }
            }
        }
        assert_eq!(joined, big);
    }

    #[test]
    fn bundle_counts_vga() {
        let g = SensorGeometry::new(640, 480).unwrap();
        let s = EventStream::new(g, vec![Event::new(0, 10, 10, Polarity::Positive)], "vga");
        let b = assemble_esr(&s, &small(4, 16, 32)).unwrap();
        assert_eq!(b.chosen_ratio, TileRatio::new(3, 2));
        assert_eq!(b.counts(), (4, 2, 1, 6));
        assert_eq!(b.len(), 13);
        assert_eq!(b.frames().count(), 13);
        assert!(b.frames().all(|(_, f)| f.width() == 32 && f.height() == 32));
        assert_eq!(b.provenance, "vga");
    }

    #[test]
    fn bundle_counts_square() {
        let g = SensorGeometry::new(64, 64).unwrap();
        let b = assemble_esr(&EventStream::empty(g), &small(4, 8, 64)).unwrap();
        assert_eq!(b.counts(), (2, 1, 1, 1));
        // small tiles let the 2x2 grid win the tie
        let b = assemble_esr(&EventStream::empty(g), &small(4, 8, 16)).unwrap();
        assert_eq!(b.counts(), (2, 1, 1, 4));
        assert!(b.frames().all(|(_, f)| f.pixels().all(|p| p == WHITE)));
    }

    #[test]
    fn image_split_counts() {
        let c = small(1, 2, 16);
        assert_eq!(split_image(&RgbFrame::filled(16, 16, RED), &c).unwrap().len(), 2);
        let v = split_image(&RgbFrame::filled(640, 480, RED), &c).unwrap();
        assert_eq!(v.len(), 7);
        assert!(v.iter().all(|f| f.pixels().all(|p| p == RED)));
    }

    #[test]
    fn bundle_written_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let g = SensorGeometry::new(8, 8).unwrap();
        let b = assemble_esr(&EventStream::empty(g), &small(1, 2, 8)).unwrap();
        write_bundle(&b, dir.path()).unwrap();
        let sidecar = std::fs::read_to_string(dir.path().join("bundle.txt")).unwrap();
        assert!(sidecar.contains("counts 2 1 1 1"));
        assert!(sidecar.contains("4 patch 0 004_patch.ppm"));
        let f = RgbFrame::read_ppm(&dir.path().join("000_level1.ppm")).unwrap();
        assert_eq!(f.width(), 8);
    }
}
