//! Binary morphology and bag-region segmentation.
//!
//! The X-ray convention is bright background, dark content, so the
//! foreground of every mask produced here is "dark enough to be part of
//! the bag". Out-of-bounds pixels count as background: dilation never
//! reaches outside the canvas and erosion clears anything closer to the
//! border than the structuring element radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage, RgbImage, to_grayscale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeShape {
    Square,
    Disc,
}

/// Symmetric structuring element centred on the origin. A square of
/// radius r spans (2r+1)x(2r+1) pixels; a disc keeps the offsets with
/// dr^2 + dc^2 <= r^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuringElement {
    pub shape: SeShape,
    pub radius: u32,
}

impl StructuringElement {
    pub fn square(radius: u32) -> Self {
        assert!(radius >= 1, "structuring element radius must be >= 1");
        StructuringElement {
            shape: SeShape::Square,
            radius,
        }
    }

    pub fn disc(radius: u32) -> Self {
        assert!(radius >= 1, "structuring element radius must be >= 1");
        StructuringElement {
            shape: SeShape::Disc,
            radius,
        }
    }

    fn offsets(&self) -> Vec<(i64, i64)> {
        let r = self.radius as i64;
        let mut out = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                let keep = match self.shape {
                    SeShape::Square => true,
                    SeShape::Disc => dr * dr + dc * dc <= r * r,
                };
                if keep {
                    out.push((dr, dc));
                }
            }
        }
        out
    }
}

/// Foreground = strictly darker than `threshold`. With the default
/// threshold of 245 the near-white scanner background stays out of the
/// mask while even faint organic material stays in.
pub fn binarise(grey: &GrayImage, threshold: u8) -> BinaryMask {
    BinaryMask::from_fn(grey.width(), grey.height(), |row, col| {
        grey.intensity(row, col) < threshold
    })
}

enum Pass {
    Any,
    All,
}

/// One-dimensional sweep used by the separable square-element fast path.
/// `dr/dc` select the axis; out-of-bounds samples read as unset.
fn sweep(mask: &BinaryMask, radius: i64, vertical: bool, pass: Pass) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |row, col| {
        let mut hits = 0i64;
        let mut total = 0i64;
        for d in -radius..=radius {
            total += 1;
            let (r, c) = if vertical {
                (row as i64 + d, col as i64)
            } else {
                (row as i64, col as i64 + d)
            };
            if r >= 0
                && c >= 0
                && (r as u32) < mask.height()
                && (c as u32) < mask.width()
                && mask.get(r as u32, c as u32)
            {
                hits += 1;
            }
        }
        match pass {
            Pass::Any => hits > 0,
            Pass::All => hits == total,
        }
    })
}

fn apply_offsets(mask: &BinaryMask, offsets: &[(i64, i64)], pass: Pass) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |row, col| {
        let mut hits = 0usize;
        for &(dr, dc) in offsets {
            let r = row as i64 + dr;
            let c = col as i64 + dc;
            let set = r >= 0
                && c >= 0
                && (r as u32) < mask.height()
                && (c as u32) < mask.width()
                && mask.get(r as u32, c as u32);
            if set {
                hits += 1;
            }
        }
        match pass {
            Pass::Any => hits > 0,
            Pass::All => hits == offsets.len(),
        }
    })
}

pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    match se.shape {
        SeShape::Square => {
            let h = sweep(mask, se.radius as i64, false, Pass::Any);
            sweep(&h, se.radius as i64, true, Pass::Any)
        }
        SeShape::Disc => apply_offsets(mask, &se.offsets(), Pass::Any),
    }
}

pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    match se.shape {
        SeShape::Square => {
            let h = sweep(mask, se.radius as i64, false, Pass::All);
            sweep(&h, se.radius as i64, true, Pass::All)
        }
        SeShape::Disc => apply_offsets(mask, &se.offsets(), Pass::All),
    }
}

/// Sets every unset pixel that cannot reach the image border through
/// 4-connected background. Set pixels are left untouched.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w as usize * h as usize];
    let idx = |r: u32, c: u32| r as usize * w as usize + c as usize;
    let mut stack: Vec<(u32, u32)> = Vec::new();
    for col in 0..w {
        for row in [0, h - 1] {
            if !mask.get(row, col) && !outside[idx(row, col)] {
                outside[idx(row, col)] = true;
                stack.push((row, col));
            }
        }
    }
    for row in 0..h {
        for col in [0, w - 1] {
            if !mask.get(row, col) && !outside[idx(row, col)] {
                outside[idx(row, col)] = true;
                stack.push((row, col));
            }
        }
    }
    while let Some((row, col)) = stack.pop() {
        let mut visit = |r: u32, c: u32| {
            if !mask.get(r, c) && !outside[idx(r, c)] {
                outside[idx(r, c)] = true;
                stack.push((r, c));
            }
        };
        if row > 0 {
            visit(row - 1, col);
        }
        if row + 1 < h {
            visit(row + 1, col);
        }
        if col > 0 {
            visit(row, col - 1);
        }
        if col + 1 < w {
            visit(row, col + 1);
        }
    }
    BinaryMask::from_fn(w, h, |row, col| mask.get(row, col) || !outside[idx(row, col)])
}

/// Isolates the largest 8-connected foreground component. Size ties go
/// to the component whose first pixel comes earliest in row-major order.
pub fn largest_region(mask: &BinaryMask) -> Result<BinaryMask> {
    let (w, h) = (mask.width(), mask.height());
    let idx = |r: u32, c: u32| r as usize * w as usize + c as usize;
    let mut visited = vec![false; w as usize * h as usize];
    let mut best: Option<(usize, Vec<(u32, u32)>)> = None;
    for row in 0..h {
        for col in 0..w {
            if !mask.get(row, col) || visited[idx(row, col)] {
                continue;
            }
            let mut component = Vec::new();
            let mut stack = vec![(row, col)];
            visited[idx(row, col)] = true;
            while let Some((r, c)) = stack.pop() {
                component.push((r, c));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let nr = r as i64 + dr;
                        let nc = c as i64 + dc;
                        if nr < 0 || nc < 0 || nr as u32 >= h || nc as u32 >= w {
                            continue;
                        }
                        let (nr, nc) = (nr as u32, nc as u32);
                        if mask.get(nr, nc) && !visited[idx(nr, nc)] {
                            visited[idx(nr, nc)] = true;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
            // Components are discovered in row-major order of their first
            // pixel, so strict > keeps the earlier one on ties.
            let replace = match &best {
                None => true,
                Some((size, _)) => component.len() > *size,
            };
            if replace {
                best = Some((component.len(), component));
            }
        }
    }
    let (_, component) = best.ok_or(Error::EmptyMask)?;
    let mut out = BinaryMask::new(w, h);
    for (r, c) in component {
        out.set(r, c, true);
    }
    Ok(out)
}

/// Parameters of the bag segmentation chain. The defaults (threshold
/// 245, 3 dilations and 3 erosions with a radius-2 square) close the
/// gaps between separate items in a typical scan without bridging to
/// neighbouring bags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub binarise_threshold: u8,
    pub se: StructuringElement,
    pub dilate_iterations: u32,
    pub erode_iterations: u32,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            binarise_threshold: 245,
            se: StructuringElement::square(2),
            dilate_iterations: 3,
            erode_iterations: 3,
        }
    }
}

/// Intermediate masks of the segmentation chain, kept around so callers
/// can dump them for debugging.
#[derive(Debug, Clone)]
pub struct SegmentationStages {
    pub binarised: BinaryMask,
    pub dilated: BinaryMask,
    pub filled: BinaryMask,
    pub eroded: BinaryMask,
    /// `None` when erosion removed every pixel.
    pub region: Option<BinaryMask>,
}

pub fn segment_bag_region_stages(img: &RgbImage, cfg: &SegmentationConfig) -> SegmentationStages {
    let grey = to_grayscale(img);
    let binarised = binarise(&grey, cfg.binarise_threshold);
    let mut dilated = binarised.clone();
    for _ in 0..cfg.dilate_iterations {
        dilated = dilate(&dilated, &cfg.se);
    }
    let filled = fill_holes(&dilated);
    let mut eroded = filled.clone();
    for _ in 0..cfg.erode_iterations {
        eroded = erode(&eroded, &cfg.se);
    }
    let region = largest_region(&eroded).ok();
    SegmentationStages {
        binarised,
        dilated,
        filled,
        eroded,
        region,
    }
}

/// Runs binarise, dilate, fill, erode, then keeps the largest connected
/// region: the candidate area for threat insertion. Errors when the
/// scan contains nothing darker than the threshold (an empty tray).
pub fn segment_bag_region(img: &RgbImage, cfg: &SegmentationConfig) -> Result<BinaryMask> {
    segment_bag_region_stages(img, cfg)
        .region
        .ok_or(Error::EmptyMask)
}
