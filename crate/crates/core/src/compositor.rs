//! Image compositing: the threat threshold, the normalised insertion
//! intensity, and the per-pixel blend that produces the final image.
//!
//! The blend writes only where the insertion matrix M is set AND the
//! source pixel is darker than T*255. T adapts to the brightness of
//! the insertion region: bright (empty-ish) regions accept more of the
//! signature, dark (cluttered) regions accept only its densest pixels,
//! and the white canvas around a rotated signature always fails the
//! test because T never exceeds 0.95.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{SegmentationConfig, segment_bag_region};
use crate::placement::{Placement, RngSeed, insertion_mask, sample_placement};
use crate::raster::{BinaryMask, GrayImage, RgbImage, luma, to_grayscale};
use crate::threat::{ClassLabel, ThreatSignature, rotate_signature};

/// Scalars of the blend: the transparency weight alpha, the normalised
/// insertion intensity g_hat, and the threat threshold T derived from
/// it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    pub alpha: f64,
    pub g_hat: f64,
    pub threat_threshold: f64,
}

/// Axis-aligned box in pixel coordinates; `x` is the column of the
/// left edge, `y` the row of the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Everything needed to reproduce one composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Master seed of the composition, when one drove the whole chain.
    pub seed: Option<u64>,
    /// Total rotation of the inserted signature, degrees.
    pub theta: f64,
    pub placement: Placement,
    pub blend: BlendParams,
}

/// A finished composite: the output raster, the tight box over the
/// pixels the blend actually modified, the class, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRecord {
    pub image: RgbImage,
    pub bbox: BBox,
    pub label: ClassLabel,
    pub provenance: Provenance,
}

/// Normalised mean greyscale intensity of the masked pixels:
/// sum of intensities / (255 * count), in [0, 1].
pub fn mean_insertion_intensity(grey: &GrayImage, m: &BinaryMask) -> Result<f64> {
    assert!(
        grey.width() == m.width() && grey.height() == m.height(),
        "intensity image and mask dimensions differ"
    );
    let mut sum: u64 = 0;
    let mut count: u64 = 0;
    for row in 0..grey.height() {
        for col in 0..grey.width() {
            if m.get(row, col) {
                sum += grey.intensity(row, col) as u64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum as f64 / (255.0 * count as f64))
}

/// T = min(exp(g_hat^5) - 0.5, 0.95), clamped into [0.5, 0.95] by the
/// formula itself: g_hat = 0 gives exactly 0.5 and the min caps the
/// top end.
pub fn threat_threshold(g_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&g_hat) {
        return Err(Error::Domain {
            what: "g_hat",
            lo: 0.0,
            hi: 1.0,
            value: g_hat,
        });
    }
    Ok((g_hat.powi(5).exp() - 0.5).min(0.95))
}

/// One channel of the blend: round((1 - alpha) * target + alpha * source),
/// rounding half away from zero, clamped to [0, 255].
pub fn blend_channel(target: u8, source: u8, alpha: f64) -> u8 {
    let v = (1.0 - alpha) * target as f64 + alpha * source as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// The ignore condition of the blend, on the source pixel's greyscale
/// value: blend only when grey < T*255.
pub fn source_below_threshold(source_grey: u8, threat_threshold: f64) -> bool {
    (source_grey as f64) < threat_threshold * 255.0
}

/// Projects the signature onto the target at the given placement.
///
/// Pixels outside the insertion rectangle are carried over from the
/// target untouched; pixels inside it blend only where the source is
/// darker than T*255. Errors with `DegenerateComposite` when not a
/// single source pixel passes the threshold.
pub fn composite(
    target: &RgbImage,
    sig: &ThreatSignature,
    p: Placement,
    alpha: f64,
) -> Result<CompositeRecord> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain {
            what: "alpha",
            lo: 0.0,
            hi: 1.0,
            value: alpha,
        });
    }
    assert_eq!(
        (p.sig_width, p.sig_height),
        (sig.width(), sig.height()),
        "placement dimensions disagree with the signature"
    );
    let m = insertion_mask(&p, target.width(), target.height());
    let g_hat = mean_insertion_intensity(&to_grayscale(target), &m)?;
    let t = threat_threshold(g_hat)?;
    let cutoff = t * 255.0;

    let mut out = target.clone();
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for r in 0..p.sig_height {
        for c in 0..p.sig_width {
            let src = sig.image().pixel(r, c);
            if luma(src) as f64 >= cutoff {
                continue;
            }
            let row = p.row0 + r;
            let col = p.col0 + c;
            let dst = out.pixel(row, col);
            out.set_pixel(
                row,
                col,
                [
                    blend_channel(dst[0], src[0], alpha),
                    blend_channel(dst[1], src[1], alpha),
                    blend_channel(dst[2], src[2], alpha),
                ],
            );
            bounds = Some(match bounds {
                None => (row, col, row, col),
                Some((top, left, bottom, right)) => {
                    (top.min(row), left.min(col), bottom.max(row), right.max(col))
                }
            });
        }
    }
    let (top, left, bottom, right) = bounds.ok_or(Error::DegenerateComposite)?;
    Ok(CompositeRecord {
        image: out,
        bbox: BBox {
            x: left,
            y: top,
            width: right - left + 1,
            height: bottom - top + 1,
        },
        label: sig.label(),
        provenance: Provenance {
            seed: None,
            theta: sig.theta(),
            placement: p,
            blend: BlendParams {
                alpha,
                g_hat,
                threat_threshold: t,
            },
        },
    })
}

/// Rotation-angle range in degrees; theta is drawn uniformly from
/// [min_degrees, max_degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationRange {
    pub min_degrees: f64,
    pub max_degrees: f64,
}

impl Default for RotationRange {
    fn default() -> Self {
        RotationRange {
            min_degrees: 0.0,
            max_degrees: 360.0,
        }
    }
}

/// Parameters of the full single-composite chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub rotation: RotationRange,
    pub segmentation: SegmentationConfig,
    pub max_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.9,
            rotation: RotationRange::default(),
            segmentation: SegmentationConfig::default(),
            max_attempts: 100,
        }
    }
}

/// Runs the whole chain for one target/signature pair: draw theta,
/// rotate, segment the bag region, sample a placement, composite.
/// Fully deterministic for a fixed seed.
pub fn compose_one(
    target: &RgbImage,
    sig: &ThreatSignature,
    seed: RngSeed,
    cfg: &PipelineConfig,
) -> Result<CompositeRecord> {
    if cfg.rotation.max_degrees < cfg.rotation.min_degrees {
        return Err(Error::Config(format!(
            "rotation range [{}, {}) is inverted",
            cfg.rotation.min_degrees, cfg.rotation.max_degrees
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let theta = if cfg.rotation.max_degrees > cfg.rotation.min_degrees {
        rng.gen_range(cfg.rotation.min_degrees..cfg.rotation.max_degrees)
    } else {
        cfg.rotation.min_degrees
    };
    let rotated = rotate_signature(sig, theta);
    let region = segment_bag_region(target, &cfg.segmentation)?;
    let placement_seed: u64 = rng.gen();
    let p = sample_placement(&region, &rotated, RngSeed(placement_seed), cfg.max_attempts)?;
    let mut record = composite(target, &rotated, p, cfg.alpha)?;
    record.provenance.seed = Some(seed.0);
    Ok(record)
}
