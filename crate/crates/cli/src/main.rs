//! `tip`: batch driver for the threat image projection toolkit.
//!
//! Subcommands cover the whole pipeline: `extract` builds a signature
//! library from raw scans, `compose` produces one seeded composite,
//! `build` generates a full dataset from a config file, `split`
//! assigns stratified train/val/test splits, `eval` scores detections
//! against COCO ground truth, and `inspect` prints manifest statistics.
//!
//! Exit codes: 0 success, 1 domain errors (empty bag mask, no valid
//! placement, malformed data files, ...), 2 usage and configuration
//! errors. Diagnostics go to stderr; machine output goes to stdout or
//! to the requested files.

use std::collections::BTreeSet;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tip_core::compositor::{compose_one, BBox, PipelineConfig, Provenance};
use tip_core::dataset::{
    build_dataset, stratified_split, BuildConfig, DatasetManifest, Split, SplitRatios,
};
use tip_core::evaluation::evaluate;
use tip_core::morphology::segment_bag_region_stages;
use tip_core::placement::RngSeed;
use tip_core::raster::{load_image, save_image, BinaryMask, RgbImage};
use tip_core::threat::{extract_signature, load_threat_library, ClassLabel};

#[derive(Parser)]
#[command(name = "tip", version, about = "Threat image projection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract tight-cropped threat signatures from raw scans.
    Extract(ExtractArgs),
    /// Composite one threat signature into one bag scan.
    Compose(ComposeArgs),
    /// Build a full annotated dataset from a config file.
    Build(BuildArgs),
    /// Assign stratified train/val/test splits to a manifest.
    Split(SplitArgs),
    /// Score a detection-results file against COCO ground truth.
    Eval(EvalArgs),
    /// Print per-class and per-split statistics for a manifest.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Directory of raw scans, one subdirectory per class.
    #[arg(long)]
    scans: PathBuf,
    /// Output directory; mirrors the class subdirectories.
    #[arg(long)]
    out: PathBuf,
    /// Background threshold: pixels darker than this are foreground.
    #[arg(long, default_value_t = 245)]
    threshold: u8,
}

#[derive(Args)]
struct ComposeArgs {
    /// Benign bag scan to composite into.
    #[arg(long)]
    bag: PathBuf,
    /// Threat scan or pre-extracted signature image.
    #[arg(long)]
    signature: PathBuf,
    /// Class of the signature (Firearm, FirearmParts, Knives).
    #[arg(long)]
    label: ClassLabel,
    /// Seed driving rotation and placement. Required here or in the
    /// config file; there is no hidden entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional TOML config carrying pipeline parameters and a seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Blend opacity of the target scan, in [0, 1]. Overrides the
    /// config file.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<f64>,
    /// Background threshold for signature extraction. Overrides the
    /// config file.
    #[arg(long)]
    threshold: Option<u8>,
    /// Output composite PNG.
    #[arg(long)]
    out: PathBuf,
    /// Provenance sidecar path; defaults to the output path with a
    /// .json extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Dump each bag-segmentation stage as a 255/0 PNG into this
    /// directory.
    #[arg(long, value_name = "DIR")]
    debug_masks: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    /// TOML build configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config file. Required here or there.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for composition; defaults to the number of
    /// available processors.
    #[arg(long)]
    jobs: Option<NonZeroUsize>,
}

#[derive(Args)]
struct SplitArgs {
    /// Manifest produced by `build`.
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated train,val,test ratios; must sum to 1.
    #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_ratios)]
    ratios: SplitRatios,
    /// Seed for the per-class shuffles.
    #[arg(long)]
    seed: u64,
    /// Where to write the updated manifest; defaults to rewriting the
    /// input in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// COCO ground-truth annotations.
    #[arg(long)]
    gt: PathBuf,
    /// Detection results: a JSON array of {image_id, category_id,
    /// bbox, score}.
    #[arg(long)]
    detections: PathBuf,
    /// IoU threshold for a detection to match a ground-truth box.
    #[arg(long, default_value_t = 0.5, value_parser = parse_iou)]
    iou: f64,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Manifest produced by `build`.
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("alpha must be in [0, 1], got {v}"))
    }
}

fn parse_iou(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("iou must be in (0, 1], got {v}"))
    }
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated ratios, got {:?}",
            s
        ));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad ratio {:?}: {e}", part))?;
    }
    SplitRatios::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

/// Pipeline parameters `compose` accepts from a file. A strict subset
/// of the `build` config, and unknown top-level keys are tolerated, so
/// the same document can drive both commands.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ComposeFileConfig {
    seed: Option<u64>,
    background_threshold: Option<u8>,
    pipeline: PipelineConfig,
}

/// Everything needed to reproduce and locate one composite.
#[derive(Serialize)]
struct Sidecar {
    file: String,
    width: u32,
    height: u32,
    label: ClassLabel,
    bbox: BBox,
    provenance: Provenance,
}

fn cmd_extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let library = load_threat_library(&args.scans, args.threshold)?;
    let mut written = 0usize;
    for (label, entries) in &library {
        let class_dir = args.out.join(label.as_str());
        fs::create_dir_all(&class_dir)
            .with_context(|| format!("creating {}", class_dir.display()))?;
        let mut names = BTreeSet::new();
        for entry in entries {
            let name = Path::new(&entry.file_name).with_extension("png");
            if !names.insert(name.clone()) {
                bail!(
                    "two scans in {} map to the same output name {}",
                    args.scans.join(label.as_str()).display(),
                    name.display()
                );
            }
            save_image(entry.signature.image(), &class_dir.join(&name))?;
            written += 1;
        }
    }
    eprintln!(
        "extracted {written} signatures across {} classes into {}",
        library.len(),
        args.out.display()
    );
    Ok(())
}

fn mask_to_image(mask: &BinaryMask) -> RgbImage {
    RgbImage::from_fn(mask.width(), mask.height(), |row, col| {
        if mask.get(row, col) {
            [255, 255, 255]
        } else {
            [0, 0, 0]
        }
    })
}

fn dump_stages(bag: &RgbImage, cfg: &PipelineConfig, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stages = segment_bag_region_stages(bag, &cfg.segmentation);
    let mut panels = vec![
        ("01_binarised.png", &stages.binarised),
        ("02_dilated.png", &stages.dilated),
        ("03_filled.png", &stages.filled),
        ("04_eroded.png", &stages.eroded),
    ];
    if let Some(region) = &stages.region {
        panels.push(("05_region.png", region));
    }
    for (name, mask) in panels {
        save_image(&mask_to_image(mask), &dir.join(name))?;
    }
    Ok(())
}

fn cmd_compose(args: &ComposeArgs) -> anyhow::Result<()> {
    let file_cfg: ComposeFileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ComposeFileConfig::default(),
    };
    let Some(seed) = args.seed.or(file_cfg.seed) else {
        bail!("a seed is required: pass --seed or set `seed` in the config file");
    };
    let mut pipeline = file_cfg.pipeline;
    if let Some(alpha) = args.alpha {
        pipeline.alpha = alpha;
    }
    let threshold = args
        .threshold
        .or(file_cfg.background_threshold)
        .unwrap_or(245);

    let bag = load_image(&args.bag)?;
    let scan = load_image(&args.signature)?;
    let sig = extract_signature(&scan, args.label, threshold)
        .with_context(|| format!("extracting signature from {}", args.signature.display()))?;
    let record = compose_one(&bag, &sig, RngSeed(seed), &pipeline)
        .with_context(|| format!("composing onto {}", args.bag.display()))?;

    save_image(&record.image, &args.out)?;
    let sidecar_path = args
        .sidecar
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    let sidecar = Sidecar {
        file: args.out.display().to_string(),
        width: record.image.width(),
        height: record.image.height(),
        label: record.label,
        bbox: record.bbox,
        provenance: record.provenance,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&sidecar_path, text)
        .with_context(|| format!("writing {}", sidecar_path.display()))?;
    if let Some(dir) = &args.debug_masks {
        dump_stages(&bag, &pipeline, dir)?;
    }
    eprintln!(
        "wrote {} (bbox x {} y {} w {} h {}) and {}",
        args.out.display(),
        record.bbox.x,
        record.bbox.y,
        record.bbox.width,
        record.bbox.height,
        sidecar_path.display()
    );
    Ok(())
}

fn cmd_build(args: &BuildArgs) -> anyhow::Result<()> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.get())
            .build_global()
            .context("configuring the worker pool")?;
    }
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: BuildConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    let manifest = build_dataset(&cfg)?;
    eprintln!(
        "built {} composites into {}",
        manifest.entries.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let outcome = stratified_split(&manifest, args.ratios, RngSeed(args.seed))?;
    for class in &outcome.degenerate_classes {
        eprintln!(
            "warning: class {class} has fewer images than populated splits; \
             placed entirely in train"
        );
    }
    let out = args.out.as_ref().unwrap_or(&args.manifest);
    outcome.manifest.save(out)?;
    let counts = outcome.manifest.split_counts();
    for (class, per_split) in &counts {
        let n = |s: Split| per_split.get(&s).copied().unwrap_or(0);
        eprintln!(
            "{class}: train {} val {} test {}",
            n(Split::Train),
            n(Split::Val),
            n(Split::Test)
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let report = evaluate(&args.gt, &args.detections, args.iou)?;
    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    println!("images {}", manifest.entries.len());
    println!("seed {}", manifest.seed);
    if let Some(split_seed) = manifest.split_seed {
        println!("split_seed {split_seed}");
    }
    println!();
    println!(
        "{:<14}{:>7}{:>7}{:>7}{:>7}{:>9}",
        "class", "total", "train", "val", "test", "unsplit"
    );
    let class_counts = manifest.class_counts();
    let split_counts = manifest.split_counts();
    let empty = std::collections::BTreeMap::new();
    let mut totals = [0usize; 5];
    for (class, &total) in &class_counts {
        let per_split = split_counts.get(class).unwrap_or(&empty);
        let n = |s: Split| per_split.get(&s).copied().unwrap_or(0);
        let (train, val, test) = (n(Split::Train), n(Split::Val), n(Split::Test));
        let unsplit = total - train - val - test;
        println!(
            "{:<14}{:>7}{:>7}{:>7}{:>7}{:>9}",
            class.as_str(),
            total,
            train,
            val,
            test,
            unsplit
        );
        for (slot, v) in totals.iter_mut().zip([total, train, val, test, unsplit]) {
            *slot += v;
        }
    }
    println!(
        "{:<14}{:>7}{:>7}{:>7}{:>7}{:>9}",
        "total", totals[0], totals[1], totals[2], totals[3], totals[4]
    );
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::Compose(args) => cmd_compose(args),
        Command::Build(args) => cmd_build(args),
        Command::Split(args) => cmd_split(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

/// Maps an error chain onto the documented exit codes: configuration
/// and usage problems exit 2, everything the pipeline itself rejects
/// exits 1.
fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<tip_core::Error>() {
        return match core {
            tip_core::Error::Config(_) => 2,
            _ => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    2
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}
