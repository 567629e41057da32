//! Insertion-position sampling and the binary insertion matrix.
//!
//! A placement is valid when every foreground pixel of the signature
//! lands on a set bit of the bag region. The white canvas that rotation
//! exposes around a signature carries no foreground bits, so it may
//! overhang the region edge without invalidating a position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::threat::ThreatSignature;

/// Master seed for any randomised operation. All randomness in the
/// pipeline flows from explicit seeds; nothing reads system entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

/// Top-left corner of the signature rectangle in the target frame,
/// plus the signature dimensions. Source pixel (i', j') for target
/// pixel (i, j) is (i - row0, j - col0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub row0: u32,
    pub col0: u32,
    pub sig_width: u32,
    pub sig_height: u32,
}

fn is_valid(region: &BinaryMask, sig: &ThreatSignature, row0: u32, col0: u32) -> bool {
    let fg = sig.foreground();
    for r in 0..fg.height() {
        for c in 0..fg.width() {
            if fg.get(r, c) && !region.get(row0 + r, col0 + c) {
                return false;
            }
        }
    }
    true
}

/// Draws top-left positions uniformly over all in-bounds candidates
/// and returns the first one whose signature foreground lies entirely
/// inside `region`. Deterministic for a fixed seed.
pub fn sample_placement(
    region: &BinaryMask,
    sig: &ThreatSignature,
    seed: RngSeed,
    max_attempts: u32,
) -> Result<Placement> {
    let (tw, th) = (region.width(), region.height());
    let (sw, sh) = (sig.width(), sig.height());
    if sw > tw || sh > th {
        return Err(Error::SignatureTooLarge {
            sig_width: sw,
            sig_height: sh,
            target_width: tw,
            target_height: th,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    for _ in 0..max_attempts {
        let row0 = rng.gen_range(0..=th - sh);
        let col0 = rng.gen_range(0..=tw - sw);
        if is_valid(region, sig, row0, col0) {
            return Ok(Placement {
                row0,
                col0,
                sig_width: sw,
                sig_height: sh,
            });
        }
    }
    Err(Error::NoValidPlacement {
        attempts: max_attempts,
    })
}

/// Materialises the binary matrix M: target-sized, set exactly on the
/// placement rectangle.
pub fn insertion_mask(p: &Placement, target_width: u32, target_height: u32) -> BinaryMask {
    assert!(
        p.row0 + p.sig_height <= target_height && p.col0 + p.sig_width <= target_width,
        "placement out of bounds for {target_width}x{target_height}"
    );
    BinaryMask::from_fn(target_width, target_height, |row, col| {
        row >= p.row0
            && row < p.row0 + p.sig_height
            && col >= p.col0
            && col < p.col0 + p.sig_width
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RgbImage;
    use crate::test_utils::mask_from_str;
    use crate::threat::{ClassLabel, ThreatSignature};

    fn solid_signature(w: u32, h: u32) -> ThreatSignature {
        ThreatSignature::new(
            RgbImage::filled(w, h, [30, 30, 30]),
            BinaryMask::from_fn(w, h, |_, _| true),
            ClassLabel::Firearm,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn full_region_always_succeeds() {
        let region = BinaryMask::from_fn(9, 7, |_, _| true);
        let sig = solid_signature(1, 1);
        let p = sample_placement(&region, &sig, RngSeed(1), 1).unwrap();
        assert!(p.row0 < 7 && p.col0 < 9);
        assert_eq!((p.sig_width, p.sig_height), (1, 1));
    }

    #[test]
    fn oversized_signature_is_rejected() {
        let region = BinaryMask::from_fn(40, 40, |_, _| true);
        let sig = solid_signature(50, 50);
        assert!(matches!(
            sample_placement(&region, &sig, RngSeed(0), 100),
            Err(Error::SignatureTooLarge { .. })
        ));
    }

    #[test]
    fn impossible_region_exhausts_attempts() {
        let region = BinaryMask::new(30, 30);
        let sig = solid_signature(4, 4);
        assert!(matches!(
            sample_placement(&region, &sig, RngSeed(0), 25),
            Err(Error::NoValidPlacement { attempts: 25 })
        ));
    }

    #[test]
    fn determinism_per_seed() {
        let region = BinaryMask::from_fn(50, 50, |r, c| r > 10 && c > 10);
        let sig = solid_signature(6, 5);
        let a = sample_placement(&region, &sig, RngSeed(42), 100).unwrap();
        let b = sample_placement(&region, &sig, RngSeed(42), 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn placement_always_lands_in_enumerated_valid_set() {
        // Region is a 20x20 pocket at rows 10..30, cols 14..34 of a
        // 64x64 target; an 8x8 solid signature must land with its whole
        // rectangle inside the pocket.
        let region = BinaryMask::from_fn(64, 64, |r, c| {
            (10..30).contains(&r) && (14..34).contains(&c)
        });
        let sig = solid_signature(8, 8);
        let mut valid = std::collections::HashSet::new();
        for row0 in 0..=64 - 8 {
            for col0 in 0..=64 - 8 {
                if is_valid(&region, &sig, row0, col0) {
                    valid.insert((row0, col0));
                }
            }
        }
        assert_eq!(valid.len(), 13 * 13);
        for seed in 0..200u64 {
            let p = sample_placement(&region, &sig, RngSeed(seed), 1000).unwrap();
            assert!(valid.contains(&(p.row0, p.col0)), "seed {seed}: {p:?}");
        }
    }

    #[test]
    fn foreground_only_validity_allows_overhanging_canvas() {
        // Plus-shaped region; a signature whose foreground is the same
        // plus fits exactly, while a solid 3x3 cannot.
        let region = mask_from_str(
            ".....\n\
             ..#..\n\
             .###.\n\
             ..#..\n\
             .....",
        );
        let plus_fg = mask_from_str(
            ".#.\n\
             ###\n\
             .#.",
        );
        let plus_sig = ThreatSignature::new(
            RgbImage::filled(3, 3, [20, 20, 20]),
            plus_fg,
            ClassLabel::Knives,
            0.0,
        )
        .unwrap();
        assert!(is_valid(&region, &plus_sig, 1, 1));
        let solid = solid_signature(3, 3);
        assert!(!is_valid(&region, &solid, 1, 1));
        let p = sample_placement(&region, &plus_sig, RngSeed(3), 500).unwrap();
        assert_eq!((p.row0, p.col0), (1, 1), "only one valid position exists");
    }

    #[test]
    fn insertion_mask_is_exact_rectangle() {
        let p = Placement {
            row0: 1,
            col0: 1,
            sig_width: 3,
            sig_height: 2,
        };
        let m = insertion_mask(&p, 5, 4);
        assert_eq!(m.count_ones(), 6);
        let expect = mask_from_str(
            ".....\n\
             .###.\n\
             .###.\n\
             .....",
        );
        assert_eq!(m, expect);
    }

    #[test]
    fn insertion_mask_popcount_matches_area() {
        for (w, h, row0, col0) in [(4u32, 6u32, 0u32, 0u32), (2, 3, 5, 7), (1, 1, 9, 9)] {
            let p = Placement {
                row0,
                col0,
                sig_width: w,
                sig_height: h,
            };
            let m = insertion_mask(&p, 12, 12);
            assert_eq!(m.count_ones(), (w * h) as usize);
        }
    }

    #[test]
    fn sampling_is_uniform_over_valid_positions() {
        // 6x6 all-ones region, 3x3 solid signature: 16 equally likely
        // top-left positions, every attempt valid. Chi-squared over
        // 10,000 single-draw seeds, df 15, critical value 30.578 at
        // significance 0.01.
        let region = BinaryMask::from_fn(6, 6, |_, _| true);
        let sig = solid_signature(3, 3);
        let mut counts = [[0u32; 4]; 4];
        const RUNS: u32 = 10_000;
        for seed in 0..RUNS as u64 {
            let p = sample_placement(&region, &sig, RngSeed(seed), 1).unwrap();
            counts[p.row0 as usize][p.col0 as usize] += 1;
        }
        let expected = RUNS as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .flatten()
            .map(|&n| {
                let d = n as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 30.578, "chi-squared {chi2:.2} exceeds the 1% critical value");
    }
}
