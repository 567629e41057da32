//! Owned raster types and image IO.
//!
//! All buffers are row-major with `(row, col)` addressing; `row` runs
//! down the image and `col` runs right, so `(0, 0)` is the top-left
//! pixel. Dimensions are always at least 1x1.

use std::fmt;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// 8-bit RGB image, interleaved `[r, g, b]` per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        RgbImage {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(data.len(), width as usize * height as usize * 3);
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for row in 0..height {
            for col in 0..width {
                img.set_pixel(row, col, f(row, col));
            }
        }
        img
    }

    /// Solid fill, useful for synthetic fixtures.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        RgbImage::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, row: u32, col: u32) -> usize {
        debug_assert!(row < self.height && col < self.width);
        (row as usize * self.width as usize + col as usize) * 3
    }

    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let i = self.index(row, col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: u32, col: u32, rgb: [u8; 3]) {
        let i = self.index(row, col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    /// Copies the `height x width` window whose top-left corner is
    /// `(top, left)`. The window must lie inside the image.
    pub fn crop(&self, top: u32, left: u32, height: u32, width: u32) -> Self {
        assert!(top + height <= self.height && left + width <= self.width);
        RgbImage::from_fn(width, height, |r, c| self.pixel(top + r, left + c))
    }
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

/// 8-bit single-channel image. Higher values are brighter; X-ray
/// background is near white, dense material is dark.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        GrayImage {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(data.len(), width as usize * height as usize);
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut img = GrayImage::new(width, height);
        for row in 0..height {
            for col in 0..width {
                img.set_intensity(row, col, f(row, col));
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn intensity(&self, row: u32, col: u32) -> u8 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set_intensity(&mut self, row: u32, col: u32, value: u8) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

/// Per-pixel boolean mask with the same addressing as the image types.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-unset mask.
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut mask = BinaryMask::new(width, height);
        for row in 0..height {
            for col in 0..width {
                if f(row, col) {
                    mask.set(row, col, true);
                }
            }
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// True when every set bit of `self` is also set in `other`.
    /// Masks of different dimensions are never subsets.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        if self.width != other.width || self.height != other.height {
            return false;
        }
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box of the set bits as `(top, left, height, width)`,
    /// or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut top = u32::MAX;
        let mut left = u32::MAX;
        let mut bottom = 0;
        let mut right = 0;
        let mut any = false;
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(row, col) {
                    any = true;
                    top = top.min(row);
                    left = left.min(col);
                    bottom = bottom.max(row);
                    right = right.max(col);
                }
            }
        }
        any.then(|| (top, left, bottom - top + 1, right - left + 1))
    }

    pub fn crop(&self, top: u32, left: u32, height: u32, width: u32) -> Self {
        assert!(top + height <= self.height && left + width <= self.width);
        BinaryMask::from_fn(width, height, |r, c| self.get(top + r, left + c))
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count_ones()
        )?;
        if self.width <= 64 && self.height <= 64 {
            for row in 0..self.height {
                let line: String = (0..self.width)
                    .map(|col| if self.get(row, col) { '#' } else { '.' })
                    .collect();
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }
}

/// ITU-R 601 luma, rounded half away from zero. The compositor's
/// darkness test uses the same weights so that a pixel's greyscale value
/// is identical whether it is read from `to_grayscale` or computed
/// inline.
pub(crate) fn luma(rgb: [u8; 3]) -> u8 {
    let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    y.round() as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |row, col| luma(img.pixel(row, col)))
}

/// Decodes a PNG or JPEG file into an owned RGB image.
///
/// Grey inputs are replicated across channels; alpha, when present, is
/// dropped. Channel depths over 8 bits and other container formats are
/// rejected rather than silently rescaled.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        Some(other) => {
            return Err(Error::decode(
                path,
                format!("unsupported container format {other:?}; expected PNG or JPEG"),
            ))
        }
        None => return Err(Error::decode(path, "unrecognised image format")),
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::decode(path, other.to_string()),
    })?;
    let (width, height) = (decoded.width(), decoded.height());
    if width == 0 || height == 0 {
        return Err(Error::decode(path, "zero-sized image"));
    }
    let img = match decoded {
        DynamicImage::ImageRgb8(buf) => RgbImage::from_raw(width, height, buf.into_raw()),
        DynamicImage::ImageRgba8(buf) => RgbImage::from_fn(width, height, |r, c| {
            let p = buf.get_pixel(c, r).0;
            [p[0], p[1], p[2]]
        }),
        DynamicImage::ImageLuma8(buf) => RgbImage::from_fn(width, height, |r, c| {
            let v = buf.get_pixel(c, r).0[0];
            [v, v, v]
        }),
        DynamicImage::ImageLumaA8(buf) => RgbImage::from_fn(width, height, |r, c| {
            let v = buf.get_pixel(c, r).0[0];
            [v, v, v]
        }),
        other => {
            return Err(Error::decode(
                path,
                format!("unsupported pixel format {:?}; expected 8-bit", other.color()),
            ))
        }
    };
    Ok(img)
}

/// Encodes the image as PNG. The extension of `path` is not consulted.
pub fn save_image(img: &RgbImage, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec())
        .expect("buffer length matches dimensions by construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::decode(path, other.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_round_trip() {
        let mut img = RgbImage::new(4, 3);
        img.set_pixel(2, 3, [10, 20, 30]);
        assert_eq!(img.pixel(2, 3), [10, 20, 30]);
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
    }

    #[test]
    fn from_fn_addressing_is_row_col() {
        let img = RgbImage::from_fn(3, 2, |row, col| [row as u8, col as u8, 0]);
        // Third pixel of the raw buffer is (row 0, col 2).
        assert_eq!(&img.as_raw()[6..9], &[0, 2, 0]);
        assert_eq!(img.pixel(1, 2), [1, 2, 0]);
    }

    #[test]
    fn luma_matches_rounded_weights() {
        assert_eq!(luma([0, 0, 0]), 0);
        assert_eq!(luma([255, 255, 255]), 255);
        // 0.299*100 = 29.9 rounds to 30.
        assert_eq!(luma([100, 0, 0]), 30);
        // 0.587*100 = 58.7 rounds to 59.
        assert_eq!(luma([0, 100, 0]), 59);
        // 0.114*100 = 11.4 rounds down.
        assert_eq!(luma([0, 0, 100]), 11);
        // 29.9 + 58.7 + 11.4 = 100.0 exactly.
        assert_eq!(luma([100, 100, 100]), 100);
    }

    #[test]
    fn grayscale_preserves_dims() {
        let img = RgbImage::from_fn(5, 4, |r, c| [(r * 40) as u8, (c * 30) as u8, 7]);
        let grey = to_grayscale(&img);
        assert_eq!((grey.width(), grey.height()), (5, 4));
        assert_eq!(grey.intensity(2, 3), luma(img.pixel(2, 3)));
    }

    #[test]
    fn mask_bounding_box() {
        let mut mask = BinaryMask::new(8, 6);
        assert_eq!(mask.bounding_box(), None);
        assert!(mask.is_empty());
        mask.set(1, 2, true);
        mask.set(4, 5, true);
        assert_eq!(mask.bounding_box(), Some((1, 2, 4, 4)));
        assert_eq!(mask.count_ones(), 2);
    }

    #[test]
    fn mask_subset() {
        let small = BinaryMask::from_fn(4, 4, |r, c| r == c);
        let big = BinaryMask::from_fn(4, 4, |r, c| r <= c);
        assert!(small.is_subset_of(&big));
        assert!(!big.is_subset_of(&small));
        let other_dims = BinaryMask::new(4, 5);
        assert!(!other_dims.is_subset_of(&big));
    }

    #[test]
    fn crop_window() {
        let img = RgbImage::from_fn(6, 5, |r, c| [r as u8, c as u8, 0]);
        let sub = img.crop(1, 2, 3, 4);
        assert_eq!((sub.width(), sub.height()), (4, 3));
        assert_eq!(sub.pixel(0, 0), [1, 2, 0]);
        assert_eq!(sub.pixel(2, 3), [3, 5, 0]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = RgbImage::from_fn(7, 5, |r, c| [(r * 31) as u8, (c * 17) as u8, 200]);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_an_image.png");
        std::fs::write(&path, b"plain text").unwrap();
        match load_image(&path) {
            Err(Error::Decode { .. }) => {}
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn load_missing_file_is_io_error() {
        match load_image(Path::new("/nonexistent/x.png")) {
            Err(Error::Io { .. }) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
