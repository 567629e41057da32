//! Stratified train/val/test assignment.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::placement::RngSeed;
use crate::threat::ClassLabel;

/// Target proportions. Ratios may be zero (that split stays empty) but
/// must be non-negative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ratios = SplitRatios { train, val, test };
        for (name, v) in [("train", train), ("val", val), ("test", test)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} ratio {v} is not a fraction")));
            }
        }
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(ratios)
    }
}

/// The split manifest plus any classes too small to stratify. A class
/// with fewer images than there are positive-ratio splits cannot give
/// every split a share; it goes entirely to train and is reported here
/// rather than failing the whole run.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub manifest: DatasetManifest,
    pub degenerate_classes: Vec<ClassLabel>,
}

/// Assigns every manifest entry to a split, class by class: shuffle
/// the class's images with the seeded generator, then allocate counts
/// by largest remainder so each split size differs from ratio * n by
/// less than one image. Deterministic for a fixed seed.
pub fn stratified_split(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: RngSeed,
) -> Result<SplitOutcome> {
    SplitRatios::new(ratios.train, ratios.val, ratios.test)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);

    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        by_class.entry(entry.category).or_default().push(i);
    }

    let positive_splits = [ratios.train, ratios.val, ratios.test]
        .iter()
        .filter(|&&r| r > 0.0)
        .count();

    let mut out = manifest.clone();
    out.split_seed = Some(seed.0);
    let mut degenerate = Vec::new();

    for (&class, indices) in &by_class {
        let mut indices = indices.clone();
        indices.shuffle(&mut rng);
        let n = indices.len();
        if n < positive_splits {
            degenerate.push(class);
            for &i in &indices {
                out.entries[i].split = Some(Split::Train);
            }
            continue;
        }
        let quotas = largest_remainder(n, [ratios.train, ratios.val, ratios.test]);
        let mut cursor = indices.into_iter();
        for (split, quota) in [Split::Train, Split::Val, Split::Test].into_iter().zip(quotas) {
            for _ in 0..quota {
                let i = cursor.next().expect("quotas sum to n");
                out.entries[i].split = Some(split);
            }
        }
    }

    Ok(SplitOutcome {
        manifest: out,
        degenerate_classes: degenerate,
    })
}

/// Largest-remainder apportionment of `n` items over three shares.
/// Remainder ties go to the earlier share (train before val before
/// test).
fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..(n - assigned) {
        quotas[order[k % 3]] += 1;
    }
    [quotas[0], quotas[1], quotas[2]]
}
