//! Resizing to tile multiples and sliding-window tile extraction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Sliding-window layout over a tile-aligned raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    resized_width: usize,
    resized_height: usize,
    tile_size: usize,
    stride: usize,
    origins: Vec<(usize, usize)>,
}

impl TileGrid {
    pub fn new(resized_width: usize, resized_height: usize, tile_size: usize, stride: usize) -> Result<Self> {
        if tile_size == 0 || resized_width % tile_size != 0 || resized_height % tile_size != 0 {
            return Err(Error::Dimension(format!(
                "{resized_width}x{resized_height} is not a multiple of tile size {tile_size}"
            )));
        }
        if resized_width == 0 || resized_height == 0 {
            return Err(Error::Dimension("empty raster".into()));
        }
        if ![tile_size, tile_size / 2, tile_size / 4].contains(&stride) || stride == 0 {
            return Err(Error::InvalidInput(format!(
                "stride {stride} is not one of tile_size, tile_size/2, tile_size/4"
            )));
        }
        debug_assert_eq!(tile_size % stride, 0);
        let xs = lattice(resized_width, tile_size, stride);
        let ys = lattice(resized_height, tile_size, stride);
        let origins = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect();
        Ok(Self {
            resized_width,
            resized_height,
            tile_size,
            stride,
            origins,
        })
    }

    pub fn resized_width(&self) -> usize {
        self.resized_width
    }

    pub fn resized_height(&self) -> usize {
        self.resized_height
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Tile top-left corners in row-major order.
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    /// Number of tiles, `k`.
    pub fn count(&self) -> usize {
        self.origins.len()
    }

    pub fn tiles_x(&self) -> usize {
        tiles_per_axis(self.resized_width, self.tile_size, self.stride)
    }

    pub fn tiles_y(&self) -> usize {
        tiles_per_axis(self.resized_height, self.tile_size, self.stride)
    }

    /// Stride-sized cells per axis.
    pub fn cells_x(&self) -> usize {
        self.resized_width / self.stride
    }

    pub fn cells_y(&self) -> usize {
        self.resized_height / self.stride
    }
}

fn lattice(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    (0..tiles_per_axis(dim, tile, stride)).map(|i| i * stride).collect()
}

#[inline]
fn tiles_per_axis(dim: usize, tile: usize, stride: usize) -> usize {
    debug_assert_eq!((dim - tile) % stride, 0, "resize invariant broken");
    (dim - tile) / stride + 1
}

/// Output dimensions of [`resize_to_tile_multiple`].
pub fn tile_multiple_dims(width: usize, height: usize, tile_size: usize) -> (usize, usize) {
    (
        width.div_ceil(tile_size) * tile_size,
        height.div_ceil(tile_size) * tile_size,
    )
}

/// Bilinearly resizes each axis up to the nearest multiple of `tile_size`.
pub fn resize_to_tile_multiple(img: &Image, tile_size: usize) -> Result<Image> {
    if tile_size == 0 {
        return Err(Error::InvalidInput("tile_size must be >= 1".into()));
    }
    let (w, h) = tile_multiple_dims(img.width(), img.height(), tile_size);
    img.resize_bilinear(w, h)
}

/// Picks the stride among `{t, t/2, t/4}` whose tile count is closest to
/// `tile_num`. Ties go to the larger stride.
pub fn select_stride(
    resized_w: usize,
    resized_h: usize,
    tile_size: usize,
    tile_num: usize,
    allow_overlap: bool,
) -> usize {
    if !allow_overlap {
        return tile_size;
    }
    let mut best = tile_size;
    let mut best_gap = usize::MAX;
    for stride in [tile_size, tile_size / 2, tile_size / 4] {
        if stride == 0 {
            continue;
        }
        let k = tiles_per_axis(resized_w, tile_size, stride) * tiles_per_axis(resized_h, tile_size, stride);
        let gap = k.abs_diff(tile_num);
        if gap < best_gap {
            best = stride;
            best_gap = gap;
        }
    }
    best
}

/// Copies every tile of `grid` out of `img`, in row-major origin order.
pub fn extract_tiles(img: &Image, grid: &TileGrid) -> Result<Vec<Image>> {
    if img.dims() != (grid.resized_width, grid.resized_height) {
        return Err(Error::Dimension(format!(
            "image is {}x{}, grid expects {}x{}",
            img.width(),
            img.height(),
            grid.resized_width,
            grid.resized_height
        )));
    }
    let t = grid.tile_size;
    grid.origins
        .par_iter()
        .map(|&(x, y)| img.crop(x, y, t, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_examples() {
        let img = Image::filled(500, 300, [9, 9, 9]).unwrap();
        assert_eq!(resize_to_tile_multiple(&img, 224).unwrap().dims(), (672, 448));
        assert_eq!(tile_multiple_dims(1920, 1080, 224), (2016, 1120));
        let img = Image::from_fn(224, 448, |x, y| [x as u8, y as u8, 3]).unwrap();
        assert_eq!(resize_to_tile_multiple(&img, 224).unwrap(), img);
    }

    #[test]
    fn small_images_grow_to_one_tile() {
        let img = Image::filled(10, 7, [1, 2, 3]).unwrap();
        let r = resize_to_tile_multiple(&img, 224).unwrap();
        assert_eq!(r.dims(), (224, 224));
        assert!(r.data().chunks(3).all(|p| p == [1, 2, 3]));
    }

    #[test]
    fn stride_examples() {
        // counts 45 / 153 / 561
        assert_eq!(select_stride(2016, 1120, 224, 24, true), 224);
        // counts 4 / 9 / 25
        assert_eq!(select_stride(448, 448, 224, 24, true), 56);
        assert_eq!(select_stride(448, 448, 224, 24, false), 224);
        assert_eq!(select_stride(2016, 1120, 224, 600, false), 224);
    }

    #[test]
    fn stride_tie_prefers_larger() {
        // 448x448 gives counts 4 / 9 / 25
        assert_eq!(select_stride(448, 448, 224, 6, true), 224);
        assert_eq!(select_stride(448, 448, 224, 7, true), 112);
        // counts 9 and 25 are equidistant from 17
        assert_eq!(select_stride(448, 448, 224, 17, true), 112);
    }

    #[test]
    fn extract_single_and_halves() {
        let img = Image::from_fn(224, 224, |x, y| [(x % 256) as u8, (y % 256) as u8, 1]).unwrap();
        let grid = TileGrid::new(224, 224, 224, 224).unwrap();
        let tiles = extract_tiles(&img, &grid).unwrap();
        assert_eq!(tiles, vec![img]);

        let img = Image::from_fn(448, 224, |x, y| [(x / 2) as u8, (y % 256) as u8, 1]).unwrap();
        let grid = TileGrid::new(448, 224, 224, 224).unwrap();
        let tiles = extract_tiles(&img, &grid).unwrap();
        assert_eq!(tiles.len(), 2);
        assert_eq!(tiles[0], img.crop(0, 0, 224, 224).unwrap());
        assert_eq!(tiles[1], img.crop(224, 0, 224, 224).unwrap());
    }

    #[test]
    fn overlapping_grid_has_nine_tiles() {
        let img = Image::from_fn(448, 448, |x, y| [(x % 251) as u8, (y % 241) as u8, 0]).unwrap();
        let grid = TileGrid::new(448, 448, 224, 112).unwrap();
        assert_eq!((grid.tiles_x(), grid.tiles_y()), (3, 3));
        let tiles = extract_tiles(&img, &grid).unwrap();
        assert_eq!(tiles.len(), 9);
        assert_eq!(tiles[4], img.crop(112, 112, 224, 224).unwrap());
        assert_eq!(grid.origins()[5], (224, 112));
    }

    #[test]
    fn extract_rejects_mismatch() {
        let img = Image::filled(224, 224, [0, 0, 0]).unwrap();
        let grid = TileGrid::new(448, 224, 224, 224).unwrap();
        assert!(matches!(extract_tiles(&img, &grid), Err(Error::Dimension(_))));
    }

    #[test]
    fn grid_rejects_bad_stride() {
        assert!(TileGrid::new(448, 448, 224, 100).is_err());
        assert!(TileGrid::new(450, 448, 224, 224).is_err());
    }

    #[test]
    fn tiles_cover_every_pixel() {
        for stride in [224, 112, 56] {
            let grid = TileGrid::new(672, 448, 224, stride).unwrap();
            let mut cover = vec![0u32; 672 * 448];
            for &(ox, oy) in grid.origins() {
                for y in oy..oy + 224 {
                    for x in ox..ox + 224 {
                        cover[y * 672 + x] += 1;
                    }
                }
            }
            assert!(cover.iter().all(|&c| c >= 1));
            if stride == 224 {
                assert!(cover.iter().all(|&c| c == 1));
            }
        }
    }
}
