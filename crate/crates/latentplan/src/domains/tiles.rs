//! Tile assets for the sliding-tile puzzle: nine 14x14 grayscale glyphs.
//! Ships a synthetic digit font so nothing external is needed; digit
//! datasets (IDX) and photographs can be imported instead.

use std::path::Path;

use crate::domains::imageio::{area_resample, equalize_and_stretch, read_idx_images, read_idx_labels};
use crate::error::{Error, Result};
use crate::ndcore::tensor::Tensor;

pub const TILE: usize = 14;

/// 5x7 pixel digit glyphs, one row per scanline, low bit = rightmost.
const FONT_5X7: [[u8; 7]; 9] = [
    // 0
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    // 1
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    // 2
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    // 3
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    // 4
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    // 5
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    // 6
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    // 7
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    // 8
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
];

/// Nine tiles indexed by tile id. Index 0 plays the blank role in puzzle
/// mechanics but is rendered like any other tile.
#[derive(Debug, Clone)]
pub struct TileSet {
    tiles: Vec<Tensor>,
}

impl TileSet {
    /// Synthetic digit glyphs (the default assets).
    pub fn builtin() -> Self {
        let tiles = (0..9)
            .map(|d| {
                let mut img = vec![0.0f32; TILE * TILE];
                for (row, bits) in FONT_5X7[d].iter().enumerate() {
                    for col in 0..5 {
                        if (bits >> (4 - col)) & 1 == 1 {
                            // 2x upscale with 2px borders
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let y = row * 2 + dy;
                                    let x = 2 + col * 2 + dx;
                                    img[y * TILE + x] = 1.0;
                                }
                            }
                        }
                    }
                }
                Tensor::new(vec![TILE, TILE], img)
            })
            .collect();
        TileSet { tiles }
    }

    pub fn from_images(tiles: Vec<Tensor>) -> Result<Self> {
        if tiles.len() != 9 {
            return Err(Error::Length { expected: 9, actual: tiles.len() });
        }
        for t in &tiles {
            if t.shape() != [TILE, TILE] {
                return Err(Error::Shape {
                    expected: format!("[{TILE}, {TILE}]"),
                    actual: t.shape_string(),
                });
            }
        }
        Ok(TileSet { tiles })
    }

    /// One exemplar per digit 0..=8 from an IDX image/label pair, shrunk to
    /// 14x14 by area averaging.
    pub fn from_idx<P: AsRef<Path>>(images: P, labels: P) -> Result<Self> {
        let imgs = read_idx_images(images)?;
        let labs = read_idx_labels(labels)?;
        if imgs.batch() != labs.len() {
            return Err(Error::Length { expected: imgs.batch(), actual: labs.len() });
        }
        let (h, w) = (imgs.shape()[1], imgs.shape()[2]);
        let mut tiles: Vec<Option<Tensor>> = vec![None; 9];
        for (i, lab) in labs.iter().enumerate() {
            let d = *lab as usize;
            if d < 9 && tiles[d].is_none() {
                let img = Tensor::new(vec![h, w], imgs.row(i).to_vec());
                tiles[d] = Some(area_resample(&img, TILE, TILE));
                if tiles.iter().all(|t| t.is_some()) {
                    break;
                }
            }
        }
        let tiles: Option<Vec<Tensor>> = tiles.into_iter().collect();
        match tiles {
            Some(t) => TileSet::from_images(t),
            None => Err(Error::Format("IDX data is missing some digit 0..=8".into())),
        }
    }

    /// Cuts a photograph into nine 14x14 patches after grayscale
    /// normalization. Patch index 0 (top-left) plays the blank role.
    pub fn from_photo(img: &Tensor) -> Result<Self> {
        if img.rank() != 2 {
            return Err(Error::Shape {
                expected: "[H, W] grayscale photo".into(),
                actual: img.shape_string(),
            });
        }
        let side = 3 * TILE;
        let norm = equalize_and_stretch(img);
        let scaled = if norm.shape() == [side, side] {
            norm
        } else {
            area_resample(&norm, side, side)
        };
        let mut tiles = Vec::with_capacity(9);
        for cell in 0..9 {
            let (r, c) = (cell / 3, cell % 3);
            let mut patch = vec![0.0f32; TILE * TILE];
            for y in 0..TILE {
                for x in 0..TILE {
                    patch[y * TILE + x] = scaled.data()[(r * TILE + y) * side + c * TILE + x];
                }
            }
            tiles.push(Tensor::new(vec![TILE, TILE], patch));
        }
        TileSet::from_images(tiles)
    }

    pub fn tile(&self, id: usize) -> &Tensor {
        &self.tiles[id]
    }

    /// Mean absolute error between a 14x14 patch and tile `id`.
    pub fn match_error(&self, patch: &[f32], id: usize) -> f32 {
        let t = self.tiles[id].data();
        let mut acc = 0.0f32;
        for (a, b) in patch.iter().zip(t) {
            acc += (a - b).abs();
        }
        acc / (TILE * TILE) as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tiles_are_distinct() {
        let ts = TileSet::builtin();
        for a in 0..9 {
            for b in (a + 1)..9 {
                let err = ts.match_error(ts.tile(a).data(), b);
                assert!(err > 0.02, "tiles {a} and {b} too similar: {err}");
            }
        }
    }

    #[test]
    fn builtin_tiles_are_unit_range() {
        let ts = TileSet::builtin();
        for d in 0..9 {
            assert!(ts.tile(d).data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn photo_cut_produces_nine_patches() {
        // synthetic "photo": smooth gradient
        let data: Vec<f32> = (0..64 * 64).map(|i| (i % 97) as f32 / 96.0).collect();
        let photo = Tensor::new(vec![64, 64], data);
        let ts = TileSet::from_photo(&photo).unwrap();
        for d in 0..9 {
            assert_eq!(ts.tile(d).shape(), &[TILE, TILE]);
        }
    }
}
