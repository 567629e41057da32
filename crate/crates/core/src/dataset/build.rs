//! Batch dataset construction.
//!
//! Jobs are the cross product of (class, index) in class-sorted order;
//! job k produces image id k+1. Each job derives its own seed from the
//! master seed, so jobs can run on any number of threads in any order
//! and still produce identical pixels. A failed composition burns one
//! retry and re-derives a fresh seed, which resamples the whole
//! (benign, signature, theta, position) tuple.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compositor::{BBox, compose_one};
use crate::dataset::coco::write_coco;
use crate::dataset::{Annotation, BuildConfig, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::placement::RngSeed;
use crate::raster::{load_image, save_image};
use crate::threat::{ClassLabel, LibraryEntry, load_threat_library};

/// 64-bit finaliser with good avalanche behaviour; the standard
/// splitmix64 mixing function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for (job, attempt), decorrelated from neighbouring jobs and
/// attempts by two mixing rounds.
fn derive_seed(master: u64, job: u64, attempt: u64) -> u64 {
    let a = splitmix64(master ^ (job.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    splitmix64(a ^ (attempt.wrapping_add(1)).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

struct RetryNote {
    job: usize,
    class: ClassLabel,
    attempt: u32,
    benign: String,
    signature: String,
    error: String,
}

struct JobResult {
    image_id: u32,
    file: String,
    width: u32,
    height: u32,
    class: ClassLabel,
    bbox: BBox,
    notes: Vec<RetryNote>,
}

fn list_benign(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| {
                        let e = e.to_ascii_lowercase();
                        e == "png" || e == "jpg" || e == "jpeg"
                    })
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn validate(cfg: &BuildConfig) -> Result<u64> {
    let master = cfg.seed.ok_or_else(|| {
        Error::Config("a master seed is required: set `seed` in the config or pass --seed".into())
    })?;
    if !(0.0..=1.0).contains(&cfg.pipeline.alpha) {
        return Err(Error::Config(format!(
            "alpha {} outside [0, 1]",
            cfg.pipeline.alpha
        )));
    }
    if cfg.pipeline.rotation.max_degrees < cfg.pipeline.rotation.min_degrees {
        return Err(Error::Config(format!(
            "rotation range [{}, {}) is inverted",
            cfg.pipeline.rotation.min_degrees, cfg.pipeline.rotation.max_degrees
        )));
    }
    if cfg.retry_budget == 0 {
        return Err(Error::Config("retry budget must be at least 1".into()));
    }
    if cfg.pipeline.max_attempts == 0 {
        return Err(Error::Config("max placement attempts must be at least 1".into()));
    }
    Ok(master)
}

fn run_job(
    job_index: usize,
    class: ClassLabel,
    master: u64,
    benign: &[PathBuf],
    signatures: &[LibraryEntry],
    cfg: &BuildConfig,
) -> Result<JobResult> {
    let mut notes = Vec::new();
    for attempt in 0..cfg.retry_budget {
        let job_seed = derive_seed(master, job_index as u64, attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
        let benign_idx = rng.gen_range(0..benign.len());
        let sig_idx = rng.gen_range(0..signatures.len());
        let compose_seed: u64 = rng.gen();
        let benign_path = &benign[benign_idx];
        let entry = &signatures[sig_idx];
        let composed = load_image(benign_path).and_then(|target| {
            compose_one(&target, &entry.signature, RngSeed(compose_seed), &cfg.pipeline)
        });
        match composed {
            Ok(record) => {
                let image_id = job_index as u32 + 1;
                let file = format!("images/{image_id:06}_{class}.png");
                save_image(&record.image, &cfg.out_dir.join(&file))?;
                return Ok(JobResult {
                    image_id,
                    file,
                    width: record.image.width(),
                    height: record.image.height(),
                    class,
                    bbox: record.bbox,
                    notes,
                });
            }
            Err(e) => notes.push(RetryNote {
                job: job_index,
                class,
                attempt,
                benign: benign_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                signature: format!("{class}/{}", entry.file_name),
                error: e.to_string(),
            }),
        }
    }
    let last_error = notes.last().map(|n| n.error.clone()).unwrap_or_default();
    Err(Error::ExhaustedRetries {
        job: job_index,
        category: class.to_string(),
        attempts: cfg.retry_budget,
        last_error,
    })
}

fn write_report(path: &Path, requested: u64, produced: usize, notes: &[RetryNote]) -> Result<()> {
    use std::fmt::Write;
    let mut text = String::new();
    writeln!(text, "requested: {requested}").unwrap();
    writeln!(text, "produced: {produced}").unwrap();
    writeln!(text, "retries: {}", notes.len()).unwrap();
    for n in notes {
        writeln!(
            text,
            "job {} ({}) attempt {}: {} [benign {}, signature {}]",
            n.job, n.class, n.attempt, n.error, n.benign, n.signature
        )
        .unwrap();
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Builds the full dataset tree under `cfg.out_dir`:
/// `images/*.png`, `annotations.json`, `manifest.json`, and
/// `build_report.txt`. Returns the manifest. Identical configurations
/// produce bit-identical trees.
pub fn build_dataset(cfg: &BuildConfig) -> Result<DatasetManifest> {
    let master = validate(cfg)?;
    let requested = cfg.total_requested();

    let benign = list_benign(&cfg.benign_dir)?;
    if requested > 0 && benign.is_empty() {
        return Err(Error::Config(format!(
            "no benign images (png/jpeg) in {}",
            cfg.benign_dir.display()
        )));
    }
    let library = load_threat_library(&cfg.threat_dir, cfg.background_threshold)?;
    for (&class, &count) in &cfg.counts {
        if count > 0 && library.get(&class).is_none_or(|v| v.is_empty()) {
            return Err(Error::Config(format!(
                "threat library {} has no {class} signatures",
                cfg.threat_dir.display()
            )));
        }
    }

    std::fs::create_dir_all(cfg.out_dir.join("images"))
        .map_err(|e| Error::io(cfg.out_dir.join("images"), e))?;

    let jobs: Vec<(usize, ClassLabel)> = {
        let mut jobs = Vec::new();
        for (&class, &count) in &cfg.counts {
            for _ in 0..count {
                jobs.push((jobs.len(), class));
            }
        }
        jobs
    };

    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|&(job_index, class)| {
            run_job(job_index, class, master, &benign, &library[&class], cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(results.len());
    let mut annotations = Vec::with_capacity(results.len());
    let mut notes = Vec::new();
    for result in results {
        entries.push(ManifestEntry {
            image_id: result.image_id,
            file: result.file,
            width: result.width,
            height: result.height,
            category: result.class,
            split: None,
        });
        annotations.push(Annotation {
            annotation_id: result.image_id,
            image_id: result.image_id,
            category: result.class,
            bbox: result.bbox,
        });
        notes.extend(result.notes);
    }

    let manifest = DatasetManifest {
        seed: master,
        split_seed: None,
        config: BuildConfig {
            seed: Some(master),
            ..cfg.clone()
        },
        entries,
    };
    manifest.save(&cfg.out_dir.join("manifest.json"))?;
    write_coco(&manifest, &annotations, &cfg.out_dir.join("annotations.json"))?;
    write_report(
        &cfg.out_dir.join("build_report.txt"),
        requested,
        manifest.entries.len(),
        &notes,
    )?;
    Ok(manifest)
}
