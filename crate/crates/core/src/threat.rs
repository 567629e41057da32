//! Threat signatures: extraction from plain-background scans, the
//! on-disk signature library, and rotation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::binarise;
use crate::raster::{BinaryMask, RgbImage, load_image, to_grayscale};

/// Prohibited-item classes handled by the pipeline. Variant order is
/// lexicographic, which fixes both `Ord` and the category id numbering
/// used in annotation documents.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ClassLabel {
    Firearm,
    FirearmParts,
    Knives,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::Firearm,
        ClassLabel::FirearmParts,
        ClassLabel::Knives,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Firearm => "Firearm",
            ClassLabel::FirearmParts => "FirearmParts",
            ClassLabel::Knives => "Knives",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown class {s:?}; expected one of Firearm, FirearmParts, Knives"
                ))
            })
    }
}

/// Isolated threat item: a tight crop of the scan plus the foreground
/// silhouette, the class, and the rotation applied so far in degrees.
///
/// Invariants held by construction: raster and mask dimensions are
/// equal, the foreground is non-empty, and the crop is tight (every
/// edge row/column of the mask contains a set bit).
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatSignature {
    image: RgbImage,
    foreground: BinaryMask,
    label: ClassLabel,
    theta: f64,
}

impl ThreatSignature {
    pub fn new(
        image: RgbImage,
        foreground: BinaryMask,
        label: ClassLabel,
        theta: f64,
    ) -> Result<Self> {
        if image.width() != foreground.width() || image.height() != foreground.height() {
            return Err(Error::Config(format!(
                "signature raster {}x{} and mask {}x{} differ",
                image.width(),
                image.height(),
                foreground.width(),
                foreground.height()
            )));
        }
        match foreground.bounding_box() {
            None => Err(Error::EmptyMask),
            Some((0, 0, h, w)) if h == image.height() && w == image.width() => {
                Ok(ThreatSignature {
                    image,
                    foreground,
                    label,
                    theta: theta.rem_euclid(360.0),
                })
            }
            Some(_) => Err(Error::Config(
                "signature crop is not tight around its foreground".into(),
            )),
        }
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn foreground(&self) -> &BinaryMask {
        &self.foreground
    }

    pub fn label(&self) -> ClassLabel {
        self.label
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// Thresholds the scan against its near-white background and crops the
/// result tight. The foreground is every pixel strictly darker than
/// `background_threshold`, not just the largest blob, so items with
/// detached parts survive extraction.
pub fn extract_signature(
    scan: &RgbImage,
    label: ClassLabel,
    background_threshold: u8,
) -> Result<ThreatSignature> {
    let mask = binarise(&to_grayscale(scan), background_threshold);
    let (top, left, height, width) = mask.bounding_box().ok_or(Error::EmptySignature {
        threshold: background_threshold,
    })?;
    let image = scan.crop(top, left, height, width);
    let foreground = mask.crop(top, left, height, width);
    ThreatSignature::new(image, foreground, label, 0.0)
}

/// A signature together with the file it came from, so that batch
/// reports can name their inputs.
#[derive(Debug, Clone)]
pub struct LibraryEntry {
    pub file_name: String,
    pub signature: ThreatSignature,
}

/// Loads the on-disk signature library: one subdirectory per class
/// (named after the class), each holding plain-background scans.
/// Files are visited in name order so the library is deterministic.
pub fn load_threat_library(
    dir: &Path,
    background_threshold: u8,
) -> Result<BTreeMap<ClassLabel, Vec<LibraryEntry>>> {
    let mut library = BTreeMap::new();
    let mut class_dirs: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .filter(|entry| entry.path().is_dir())
        .collect();
    class_dirs.sort_by_key(|entry| entry.file_name());
    for entry in class_dirs {
        let name = entry.file_name();
        let label: ClassLabel = name.to_string_lossy().parse().map_err(|_| {
            Error::Config(format!(
                "threat library directory {:?} is not a known class name",
                entry.path()
            ))
        })?;
        let mut files: Vec<_> = std::fs::read_dir(entry.path())
            .map_err(|e| Error::io(entry.path(), e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(entry.path(), e))?
            .into_iter()
            .map(|f| f.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut signatures = Vec::new();
        for file in files {
            let scan = load_image(&file)?;
            let signature = extract_signature(&scan, label, background_threshold)
                .map_err(|e| Error::decode(&file, e.to_string()))?;
            signatures.push(LibraryEntry {
                file_name: file
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                signature,
            });
        }
        library.insert(label, signatures);
    }
    Ok(library)
}

/// Canvas size that contains a w x h raster rotated by `theta_degrees`:
/// width ceil(w|cos| + h|sin|), height ceil(w|sin| + h|cos|). Cosine
/// and sine are snapped to exact 0 and +-1 near the axis-aligned
/// angles so quarter turns get exactly swapped dimensions.
pub fn rotation_canvas_dims(width: u32, height: u32, theta_degrees: f64) -> (u32, u32) {
    let (c, s) = snapped_cos_sin(theta_degrees);
    let w = width as f64;
    let h = height as f64;
    let cw = (w * c.abs() + h * s.abs()).ceil() as u32;
    let ch = (w * s.abs() + h * c.abs()).ceil() as u32;
    (cw.max(1), ch.max(1))
}

const TRIG_SNAP: f64 = 1e-12;
const COORD_SNAP: f64 = 1e-6;

fn snapped_cos_sin(theta_degrees: f64) -> (f64, f64) {
    let rad = theta_degrees.rem_euclid(360.0).to_radians();
    let snap = |v: f64| {
        for target in [-1.0, 0.0, 1.0] {
            if (v - target).abs() < TRIG_SNAP {
                return target;
            }
        }
        v
    };
    (snap(rad.cos()), snap(rad.sin()))
}

fn snap_coord(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < COORD_SNAP {
        r
    } else {
        v
    }
}

/// Rotates the signature about its centre. Positive angles turn the
/// content clockwise on screen (row axis pointing down). The raster is
/// resampled bilinearly onto the expanded canvas with white fill
/// outside the source, the mask with nearest-neighbour, and the result
/// is re-cropped tight around the rotated foreground.
pub fn rotate_signature(sig: &ThreatSignature, theta_degrees: f64) -> ThreatSignature {
    let theta = theta_degrees.rem_euclid(360.0);
    let (c, s) = snapped_cos_sin(theta);
    let (w, h) = (sig.width(), sig.height());
    let (cw, ch) = rotation_canvas_dims(w, h, theta);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let ccx = (cw as f64 - 1.0) / 2.0;
    let ccy = (ch as f64 - 1.0) / 2.0;

    let mut raster = RgbImage::filled(cw, ch, [255, 255, 255]);
    let mut mask = BinaryMask::new(cw, ch);
    for row in 0..ch {
        for col in 0..cw {
            let dx = col as f64 - ccx;
            let dy = row as f64 - ccy;
            // Inverse map: dest -> source is the rotation by -theta.
            let sx = snap_coord(c * dx + s * dy + cx);
            let sy = snap_coord(-s * dx + c * dy + cy);
            // A source point is inside while it still rounds to a real
            // pixel; the outer half-pixel ring replicates the edge.
            let inside = sx > -0.5
                && sy > -0.5
                && sx < w as f64 - 0.5
                && sy < h as f64 - 0.5;
            if !inside {
                continue;
            }
            let bx = sx.clamp(0.0, (w - 1) as f64);
            let by = sy.clamp(0.0, (h - 1) as f64);
            raster.set_pixel(row, col, bilinear(&sig.image, bx, by));
            if sig.foreground.get(sy.round() as u32, sx.round() as u32) {
                mask.set(row, col, true);
            }
        }
    }

    if mask.is_empty() {
        // A signature a pixel or two wide can fall between sample
        // points; forward-map its foreground so it never vanishes.
        for row in 0..h {
            for col in 0..w {
                if !sig.foreground.get(row, col) {
                    continue;
                }
                let dx = col as f64 - cx;
                let dy = row as f64 - cy;
                let fx = (c * dx - s * dy + ccx).round();
                let fy = (s * dx + c * dy + ccy).round();
                let fc = (fx.max(0.0) as u32).min(cw - 1);
                let fr = (fy.max(0.0) as u32).min(ch - 1);
                mask.set(fr, fc, true);
                raster.set_pixel(fr, fc, sig.image.pixel(row, col));
            }
        }
    }

    let (top, left, bh, bw) = mask.bounding_box().expect("rotated foreground is non-empty");
    ThreatSignature {
        image: raster.crop(top, left, bh, bw),
        foreground: mask.crop(top, left, bh, bw),
        label: sig.label,
        theta: (sig.theta + theta).rem_euclid(360.0),
    }
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let w = img.width();
    let h = img.height();
    let c0 = x0 as u32;
    let r0 = y0 as u32;
    let c1 = (c0 + 1).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let p00 = img.pixel(r0, c0);
    let p01 = img.pixel(r0, c1);
    let p10 = img.pixel(r1, c0);
    let p11 = img.pixel(r1, c1);
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let top = p00[ch] as f64 * (1.0 - fx) + p01[ch] as f64 * fx;
        let bottom = p10[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        out[ch] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}
