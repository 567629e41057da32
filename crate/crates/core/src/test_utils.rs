//! Deterministic fixture generators shared by the test suites.
//!
//! Everything here is seeded: the same arguments always produce the
//! same pixels, so tests that hash or byte-compare outputs stay stable.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::raster::{BinaryMask, RgbImage, save_image};
use crate::threat::ClassLabel;

/// Parses a `#`/`.` picture into a mask. Rows are separated by
/// newlines; all rows must have equal length.
pub fn mask_from_str(s: &str) -> BinaryMask {
    let rows: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let height = rows.len() as u32;
    assert!(height > 0, "mask picture has no rows");
    let width = rows[0].chars().count() as u32;
    assert!(
        rows.iter().all(|r| r.chars().count() as u32 == width),
        "mask picture rows differ in length"
    );
    let mut mask = BinaryMask::new(width, height);
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            match ch {
                '#' => mask.set(r as u32, c as u32, true),
                '.' => {}
                other => panic!("unexpected mask character {other:?}"),
            }
        }
    }
    mask
}

/// Synthetic benign scan: near-white background with one dark elliptic
/// "bag" containing a bright pocket. The pocket sits above the default
/// binarise threshold, so segmentation must fill it; the bag itself is
/// large enough to survive the default erosion chain.
pub fn bag_scan(width: u32, height: u32, seed: u64) -> RgbImage {
    assert!(width >= 32 && height >= 32, "bag fixtures need room for a blob");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = width as f64 * rng.gen_range(0.45..0.55);
    let cy = height as f64 * rng.gen_range(0.45..0.55);
    let rx = width as f64 * rng.gen_range(0.30..0.38);
    let ry = height as f64 * rng.gen_range(0.30..0.38);
    let base = rng.gen_range(110u8..150u8);
    let pocket_cx = cx + rx * 0.3;
    let pocket_cy = cy - ry * 0.2;
    let pocket_r = rx.min(ry) * 0.25;
    RgbImage::from_fn(width, height, |row, col| {
        let dx = (col as f64 - cx) / rx;
        let dy = (row as f64 - cy) / ry;
        if dx * dx + dy * dy <= 1.0 {
            let pdx = col as f64 - pocket_cx;
            let pdy = row as f64 - pocket_cy;
            if (pdx * pdx + pdy * pdy).sqrt() <= pocket_r {
                return [250, 250, 250];
            }
            // Mild deterministic texture, still well below threshold.
            let n = ((row.wrapping_mul(31).wrapping_add(col.wrapping_mul(17))) % 23) as u8;
            [base + n, base + n / 2, base.saturating_add(40)]
        } else {
            [252, 252, 252]
        }
    })
}

/// Synthetic threat scan: plain white background with a dark L-shaped
/// item plus a mid-grey fringe along the inner corner. The fringe is
/// dark enough to count as foreground at extraction but bright enough
/// that a low threat threshold excludes it from blending.
pub fn threat_scan(size: u32, seed: u64) -> RgbImage {
    assert!(size >= 16, "threat fixtures need room for the item");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bar = (size / 5).max(3) + rng.gen_range(0..2);
    let margin = size / 6;
    let body: [u8; 3] = [
        rng.gen_range(20u8..50u8),
        rng.gen_range(20u8..50u8),
        rng.gen_range(100u8..150u8),
    ];
    RgbImage::from_fn(size, size, |row, col| {
        let in_vertical = col >= margin
            && col < margin + bar
            && row >= margin
            && row < size - margin;
        let in_horizontal = row >= size - margin - bar
            && row < size - margin
            && col >= margin
            && col < size - margin;
        if in_vertical || in_horizontal {
            body
        } else if col >= margin + bar
            && col < margin + bar + 2
            && row >= margin
            && row < size - margin
        {
            [180, 180, 180]
        } else {
            [255, 255, 255]
        }
    })
}

/// Writes `count` bag scans into `dir` as zero-padded PNGs and returns
/// their paths in filename order.
pub fn write_benign_corpus(
    dir: &Path,
    count: u32,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut paths = Vec::new();
    for i in 0..count {
        let path = dir.join(format!("bag_{i:03}.png"));
        save_image(&bag_scan(width, height, seed.wrapping_add(i as u64)), &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes a three-class threat library under `dir`, one subdirectory
/// per class with `per_class` scans each.
pub fn write_threat_library(dir: &Path, per_class: u32, seed: u64) -> Result<()> {
    for (ci, class) in ClassLabel::ALL.iter().enumerate() {
        let class_dir = dir.join(class.as_str());
        std::fs::create_dir_all(&class_dir).map_err(|e| crate::Error::io(&class_dir, e))?;
        for k in 0..per_class {
            let size = 40 + (k % 3) * 8;
            let scan_seed = seed
                .wrapping_add(1000 * ci as u64)
                .wrapping_add(k as u64);
            let path = class_dir.join(format!("threat_{k:03}.png"));
            save_image(&threat_scan(size, scan_seed), &path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{SegmentationConfig, segment_bag_region};
    use crate::raster::to_grayscale;

    #[test]
    fn mask_from_str_parses_shape() {
        let mask = mask_from_str(
            "#..\n\
             .#.",
        );
        assert_eq!((mask.width(), mask.height()), (3, 2));
        assert!(mask.get(0, 0) && mask.get(1, 1));
        assert_eq!(mask.count_ones(), 2);
    }

    #[test]
    fn bag_scan_is_deterministic_and_segmentable() {
        assert_eq!(bag_scan(64, 48, 7), bag_scan(64, 48, 7));
        assert_ne!(bag_scan(64, 48, 7), bag_scan(64, 48, 8));
        let region = segment_bag_region(&bag_scan(96, 72, 3), &SegmentationConfig::default())
            .expect("fixture bag must segment");
        assert!(region.count_ones() > 96 * 72 / 10);
    }

    #[test]
    fn threat_scan_has_dark_item_on_white() {
        let scan = threat_scan(40, 5);
        let grey = to_grayscale(&scan);
        assert_eq!(grey.intensity(0, 0), 255);
        let dark = (0..40)
            .flat_map(|r| (0..40).map(move |c| (r, c)))
            .filter(|&(r, c)| grey.intensity(r, c) < 245)
            .count();
        assert!(dark > 40, "item occupies a real area, got {dark} px");
    }
}
