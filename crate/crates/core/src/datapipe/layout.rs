use serde::{Deserialize, Serialize};

use super::dataset::DatasetKind;
use crate::optics::OpticalConfig;
use crate::{Error, Grid, Result};

/// Smallest dark margin between the content of neighbouring tiles.
pub const MIN_TILE_SEPARATION_PX: usize = 30;

/// Knobs for [`TileLayout`] construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSpec {
    /// Integer padding factor: the tile is this many times the scaled image.
    pub padding: usize,
    /// Extra dark pixels between neighbouring tiles.
    pub gap_px: usize,
    /// Fixed `(rows, cols)` grid; `None` packs as many tiles as fit.
    pub grid: Option<(usize, usize)>,
    /// Apply the config's horizontal expansion to the tile content.
    pub horizontal_expand: bool,
}

impl Default for LayoutSpec {
    /// Dense DMD mode: superpixels plus 2× padding, no extra gap.
    fn default() -> Self {
        LayoutSpec {
            padding: 2,
            gap_px: 0,
            grid: None,
            horizontal_expand: false,
        }
    }
}

impl LayoutSpec {
    /// Fixed grid with an explicit gap and no padding.
    pub fn gapped(grid: (usize, usize), gap_px: usize) -> Self {
        LayoutSpec {
            padding: 1,
            gap_px,
            grid: Some(grid),
            horizontal_expand: false,
        }
    }

    pub fn layout(&self, kind: DatasetKind, config: &OpticalConfig) -> Result<TileLayout> {
        config.validate()?;
        if self.padding == 0 {
            return Err(Error::InvalidConfig("layout padding must be at least 1".into()));
        }
        let (rows, cols, _) = kind.geometry();
        let sy = config.superpixel;
        let sx = sy
            * if self.horizontal_expand {
                config.horizontal_expand
            } else {
                1
            };
        let content = (rows * sy, cols * sx);
        let tile = (content.0 * self.padding, content.1 * self.padding);
        let frame = (config.dmd_rows, config.dmd_cols);
        if tile.0 > frame.0 || tile.1 > frame.1 {
            return Err(Error::FrameOverflow { needed: tile, frame });
        }
        let fit = |t: usize, f: usize| (f + self.gap_px) / (t + self.gap_px);
        let max_grid = (fit(tile.0, frame.0), fit(tile.1, frame.1));
        let (grid_rows, grid_cols) = match self.grid {
            None => max_grid,
            Some((r, c)) if r == 0 || c == 0 => {
                return Err(Error::InvalidConfig("layout grid must be at least 1x1".into()))
            }
            Some((r, c)) if r > max_grid.0 || c > max_grid.1 => {
                return Err(Error::FrameOverflow {
                    needed: (r * tile.0 + (r - 1) * self.gap_px, c * tile.1 + (c - 1) * self.gap_px),
                    frame,
                })
            }
            Some(g) => g,
        };
        Ok(TileLayout {
            grid_rows,
            grid_cols,
            gap: self.gap_px,
            tile,
            content,
            scale: (sy, sx),
            frame,
        })
    }
}

/// Placement of many images on one DMD frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub gap: usize,
    /// Cell size including padding.
    pub tile: (usize, usize),
    /// Scaled image size, centred inside the cell.
    pub content: (usize, usize),
    /// Mirror replication `(rows, cols)` per image pixel.
    pub scale: (usize, usize),
    pub frame: (usize, usize),
}

impl TileLayout {
    pub fn capacity(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Dark pixels between the content of adjacent cells, per axis.
    pub fn separation(&self) -> (usize, usize) {
        (
            self.gap + self.tile.0 - self.content.0,
            self.gap + self.tile.1 - self.content.1,
        )
    }

    pub fn meets_min_separation(&self) -> bool {
        let (r, c) = self.separation();
        r.min(c) >= MIN_TILE_SEPARATION_PX
    }

    /// Top-left corner of the content of cell `index` (row-major).
    pub fn content_origin(&self, index: usize) -> (usize, usize) {
        let (i, j) = (index / self.grid_cols, index % self.grid_cols);
        (
            i * (self.tile.0 + self.gap) + (self.tile.0 - self.content.0) / 2,
            j * (self.tile.1 + self.gap) + (self.tile.1 - self.content.1) / 2,
        )
    }

    /// Size of the occupied part of the frame.
    pub fn used_extent(&self) -> (usize, usize) {
        (
            self.grid_rows * self.tile.0 + (self.grid_rows - 1) * self.gap,
            self.grid_cols * self.tile.1 + (self.grid_cols - 1) * self.gap,
        )
    }
}

/// Default layout for a dataset on a given bench.
pub fn make_layout(kind: DatasetKind, config: &OpticalConfig) -> Result<TileLayout> {
    LayoutSpec::default().layout(kind, config)
}

/// Places binary images into their cells, scaled by the layout's mirror replication.
pub fn tile(images: &[Grid<u8>], layout: &TileLayout) -> Result<Grid<u8>> {
    if images.len() > layout.capacity() {
        return Err(Error::CapacityExceeded {
            capacity: layout.capacity(),
            requested: images.len(),
        });
    }
    let (sy, sx) = layout.scale;
    let mut frame = Grid::zeros(layout.frame.0, layout.frame.1);
    for (k, img) in images.iter().enumerate() {
        let found = (img.rows() * sy, img.cols() * sx);
        if found != layout.content {
            return Err(Error::DimensionMismatch {
                expected: (layout.content.0 / sy, layout.content.1 / sx),
                found: img.shape(),
            });
        }
        let (r0, c0) = layout.content_origin(k);
        for r in 0..found.0 {
            for c in 0..found.1 {
                frame[(r0 + r, c0 + c)] = img[(r / sy, c / sx)];
            }
        }
    }
    Ok(frame)
}

/// Cuts the first `count` content windows back out of a frame-sized grid.
pub fn untile<T: Clone + Default>(frame: &Grid<T>, layout: &TileLayout, count: usize) -> Result<Vec<Grid<T>>> {
    frame.ensure_shape(layout.frame)?;
    if count > layout.capacity() {
        return Err(Error::CapacityExceeded {
            capacity: layout.capacity(),
            requested: count,
        });
    }
    Ok((0..count)
        .map(|k| {
            let (r0, c0) = layout.content_origin(k);
            frame.window(r0, c0, layout.content.0, layout.content.1)
        })
        .collect())
}
