//! Detection scoring: IoU, per-class average precision, mAP.
//!
//! The AP convention is all-points interpolation: detections are swept
//! in descending score order, each matching greedily against the
//! unmatched ground-truth box of highest overlap, and the area under
//! the precision envelope is integrated over recall. Score ties keep
//! input-file order, so results are deterministic.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::coco::{read_coco, read_detections};
use crate::error::{Error, Result};

/// One scored box of a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// One ground-truth box of a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: u32,
    pub bbox: [f64; 4],
}

/// Intersection over union of two `[x, y, width, height]` boxes;
/// 0 when they are disjoint.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Sorts detections by descending score (stable, so ties keep input
/// order) and greedily matches each against the unmatched ground truth
/// of highest IoU in the same image. Returns the true-positive flag
/// per detection in sweep order.
fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut matched = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if matched[gi] || gt.image_id != det.image_id {
                continue;
            }
            let overlap = iou(det.bbox, gt.bbox);
            // Strict > keeps the earliest ground truth on exact ties.
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, overlap)) if overlap >= iou_threshold => {
                matched[gi] = true;
                flags.push(true);
            }
            _ => flags.push(false),
        }
    }
    flags
}

/// Average precision of one class at the given IoU threshold: the area
/// under the all-points precision envelope. 0 when there are no true
/// positives (including the empty-ground-truth case).
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> f64 {
    if gts.is_empty() || dets.is_empty() {
        return 0.0;
    }
    let flags = match_detections(dets, gts, iou_threshold);
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / gts.len() as f64);
    }
    // Envelope: precision at each point becomes the maximum precision
    // at any equal-or-higher recall.
    let mut envelope = precision.clone();
    for i in (0..n.saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        ap += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
    }
    ap
}

/// Unweighted mean of per-class APs; 0 for an empty set.
pub fn mean_ap<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub ap: f64,
    /// Ground-truth boxes of the class.
    pub gt: usize,
    /// True/false positives over the full detection sweep.
    pub tp: usize,
    pub fp: usize,
}

/// Per-class metrics plus their unweighted mean. Classes are scored
/// only when the ground truth actually annotates them; a category that
/// is declared but never used does not dilute the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub map: f64,
}

impl EvalReport {
    /// Plain text table, APs at the customary two decimals.
    pub fn render_table(&self) -> String {
        let name_width = self
            .per_class
            .keys()
            .map(|n| n.len())
            .max()
            .unwrap_or(0)
            .max("class".len());
        let mut out = String::new();
        writeln!(
            out,
            "{:<name_width$}    {:>5}  {:>5}  {:>5}  {:>5}",
            "class", "AP", "GT", "TP", "FP"
        )
        .unwrap();
        for (name, m) in &self.per_class {
            writeln!(
                out,
                "{:<name_width$}    {:>5.2}  {:>5}  {:>5}  {:>5}",
                name, m.ap, m.gt, m.tp, m.fp
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "mAP {:.2} (IoU {:.2})", self.map, self.iou_threshold).unwrap();
        out
    }
}

/// Scores a detection-results file against COCO ground truth.
pub fn evaluate(gt_path: &Path, det_path: &Path, iou_threshold: f64) -> Result<EvalReport> {
    if !(0.0 < iou_threshold && iou_threshold <= 1.0) {
        return Err(Error::Domain {
            what: "iou_threshold",
            lo: 0.0,
            hi: 1.0,
            value: iou_threshold,
        });
    }
    let doc = read_coco(gt_path)?;
    let dets = read_detections(det_path)?;

    let category_names: HashMap<u32, &str> = doc
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();
    for det in &dets {
        if !category_names.contains_key(&det.category_id) {
            return Err(Error::UnknownCategory {
                category_id: det.category_id,
            });
        }
    }

    let mut gt_by_class: BTreeMap<u32, Vec<GroundTruth>> = BTreeMap::new();
    for ann in &doc.annotations {
        gt_by_class.entry(ann.category_id).or_default().push(GroundTruth {
            image_id: ann.image_id,
            bbox: [
                ann.bbox[0] as f64,
                ann.bbox[1] as f64,
                ann.bbox[2] as f64,
                ann.bbox[3] as f64,
            ],
        });
    }

    let mut per_class = BTreeMap::new();
    let mut aps = Vec::new();
    for (category_id, gts) in &gt_by_class {
        let class_dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.category_id == *category_id)
            .map(|d| Detection {
                image_id: d.image_id,
                bbox: d.bbox,
                score: d.score,
            })
            .collect();
        let ap = average_precision(&class_dets, gts, iou_threshold);
        let tp = match_detections(&class_dets, gts, iou_threshold)
            .iter()
            .filter(|&&f| f)
            .count();
        per_class.insert(
            category_names[category_id].to_string(),
            ClassMetrics {
                ap,
                gt: gts.len(),
                tp,
                fp: class_dets.len() - tp,
            },
        );
        aps.push(ap);
    }

    Ok(EvalReport {
        iou_threshold,
        map: mean_ap(aps),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(image_id: u32, bbox: [f64; 4], score: f64) -> Detection {
        Detection {
            image_id,
            bbox,
            score,
        }
    }

    fn gt(image_id: u32, bbox: [f64; 4]) -> GroundTruth {
        GroundTruth { image_id, bbox }
    }

    #[test]
    fn iou_hand_cases() {
        let a = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(iou(a, a), 1.0);
        assert_eq!(iou(a, [20.0, 20.0, 5.0, 5.0]), 0.0);
        // Half-overlapping equal squares: 50 / 150.
        assert!((iou(a, [5.0, 0.0, 10.0, 10.0]) - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges do not intersect.
        assert_eq!(iou(a, [10.0, 0.0, 10.0, 10.0]), 0.0);
    }

    #[test]
    fn single_perfect_detection() {
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0])];
        let dets = [det(1, [0.0, 0.0, 10.0, 10.0], 0.9)];
        assert_eq!(average_precision(&dets, &gts, 0.5), 1.0);
    }

    #[test]
    fn one_of_two_found_is_half() {
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0]), gt(2, [0.0, 0.0, 10.0, 10.0])];
        let dets = [det(1, [0.0, 0.0, 10.0, 10.0], 0.9)];
        assert_eq!(average_precision(&dets, &gts, 0.5), 0.5);
    }

    #[test]
    fn tp_fp_tp_case_matches_hand_envelope() {
        // Sweep: TP (p=1, r=.5), FP (p=.5, r=.5), TP (p=2/3, r=1).
        // Envelope: 1, 2/3, 2/3. AP = .5*1 + .5*(2/3) = 5/6.
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0]), gt(2, [0.0, 0.0, 10.0, 10.0])];
        let dets = [
            det(1, [0.0, 0.0, 10.0, 10.0], 0.9),
            det(3, [0.0, 0.0, 10.0, 10.0], 0.8),
            det(2, [0.0, 0.0, 10.0, 10.0], 0.7),
        ];
        let ap = average_precision(&dets, &gts, 0.5);
        assert!((ap - 5.0 / 6.0).abs() < 1e-9, "ap = {ap}");
    }

    #[test]
    fn duplicate_detections_match_once() {
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0])];
        let dets = [
            det(1, [0.0, 0.0, 10.0, 10.0], 0.9),
            det(1, [0.0, 0.0, 10.0, 10.0], 0.8),
        ];
        let flags = match_detections(&dets, &gts, 0.5);
        assert_eq!(flags, vec![true, false]);
        assert_eq!(average_precision(&dets, &gts, 0.5), 1.0);
    }

    #[test]
    fn greedy_prefers_highest_overlap() {
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0]), gt(1, [8.0, 0.0, 10.0, 10.0])];
        // This box overlaps both ground truths; it must take the right
        // one (higher IoU), leaving the left for the second detection.
        let dets = [
            det(1, [7.0, 0.0, 10.0, 10.0], 0.9),
            det(1, [0.0, 0.0, 10.0, 10.0], 0.8),
        ];
        let flags = match_detections(&dets, &gts, 0.5);
        assert_eq!(flags, vec![true, true]);
    }

    #[test]
    fn score_ties_keep_input_order() {
        let gts = [gt(1, [0.0, 0.0, 10.0, 10.0])];
        // Same score: the miss is swept first because it comes first
        // in the input, halving the achievable precision at recall 1.
        let dets = [
            det(1, [50.0, 50.0, 10.0, 10.0], 0.5),
            det(1, [0.0, 0.0, 10.0, 10.0], 0.5),
        ];
        assert_eq!(average_precision(&dets, &gts, 0.5), 0.5);
        let reversed = [dets[1].clone(), dets[0].clone()];
        assert_eq!(average_precision(&reversed, &gts, 0.5), 1.0);
    }

    #[test]
    fn ap_invariant_under_monotone_score_transform() {
        let gts = [
            gt(1, [0.0, 0.0, 10.0, 10.0]),
            gt(2, [0.0, 0.0, 10.0, 10.0]),
            gt(3, [0.0, 0.0, 10.0, 10.0]),
        ];
        let dets = [
            det(1, [1.0, 0.0, 10.0, 10.0], 0.9),
            det(9, [0.0, 0.0, 10.0, 10.0], 0.6),
            det(2, [0.0, 1.0, 10.0, 10.0], 0.4),
            det(3, [40.0, 0.0, 10.0, 10.0], 0.2),
        ];
        let transformed: Vec<Detection> = dets
            .iter()
            .map(|d| det(d.image_id, d.bbox, d.score / 2.0 + 0.1))
            .collect();
        assert_eq!(
            average_precision(&dets, &gts, 0.5),
            average_precision(&transformed, &gts, 0.5)
        );
    }

    #[test]
    fn no_ground_truth_means_zero() {
        let dets = [det(1, [0.0, 0.0, 10.0, 10.0], 0.9)];
        assert_eq!(average_precision(&dets, &[], 0.5), 0.0);
        assert_eq!(average_precision(&[], &[], 0.5), 0.0);
    }

    #[test]
    fn mean_ap_reproduces_reported_rows() {
        assert_eq!(format!("{:.2}", mean_ap([0.91, 0.88, 0.85])), "0.88");
        assert_eq!(format!("{:.2}", mean_ap([0.87, 0.84, 0.76])), "0.82");
        assert_eq!(mean_ap([]), 0.0);
    }

    mod end_to_end {
        use super::*;
        use crate::compositor::BBox;
        use crate::dataset::coco::write_coco;
        use crate::dataset::{Annotation, BuildConfig, DatasetManifest, ManifestEntry};
        use crate::threat::ClassLabel;
        use std::path::PathBuf;

        fn fixture_gt(dir: &Path) -> PathBuf {
            let entries = (1..=3)
                .map(|id| ManifestEntry {
                    image_id: id,
                    file: format!("images/{id:06}.png"),
                    width: 100,
                    height: 100,
                    category: ClassLabel::Firearm,
                    split: None,
                })
                .collect();
            let manifest = DatasetManifest {
                seed: 0,
                split_seed: None,
                config: BuildConfig {
                    benign_dir: "b".into(),
                    threat_dir: "t".into(),
                    out_dir: "o".into(),
                    counts: Default::default(),
                    seed: Some(0),
                    retry_budget: 10,
                    background_threshold: 245,
                    pipeline: Default::default(),
                },
                entries,
            };
            let annotations = vec![
                Annotation {
                    annotation_id: 1,
                    image_id: 1,
                    category: ClassLabel::Firearm,
                    bbox: BBox { x: 10, y: 10, width: 20, height: 20 },
                },
                Annotation {
                    annotation_id: 2,
                    image_id: 2,
                    category: ClassLabel::Firearm,
                    bbox: BBox { x: 30, y: 30, width: 20, height: 20 },
                },
                Annotation {
                    annotation_id: 3,
                    image_id: 3,
                    category: ClassLabel::Knives,
                    bbox: BBox { x: 5, y: 5, width: 10, height: 10 },
                },
            ];
            let path = dir.join("gt.json");
            write_coco(&manifest, &annotations, &path).unwrap();
            path
        }

        #[test]
        fn perfect_detections_score_map_one() {
            let dir = tempfile::tempdir().unwrap();
            let gt_path = fixture_gt(dir.path());
            let det_path = dir.path().join("dets.json");
            std::fs::write(
                &det_path,
                r#"[
                  {"image_id": 1, "category_id": 1, "bbox": [10, 10, 20, 20], "score": 0.5},
                  {"image_id": 2, "category_id": 1, "bbox": [30, 30, 20, 20], "score": 0.5},
                  {"image_id": 3, "category_id": 3, "bbox": [5, 5, 10, 10], "score": 0.5}
                ]"#,
            )
            .unwrap();
            let report = evaluate(&gt_path, &det_path, 0.5).unwrap();
            assert_eq!(report.map, 1.0);
            assert_eq!(report.per_class.len(), 2);
            assert_eq!(report.per_class["Firearm"].ap, 1.0);
            assert_eq!(report.per_class["Firearm"].gt, 2);
            assert_eq!(report.per_class["Knives"].tp, 1);
            assert!(report.render_table().contains("mAP 1.00"));
        }

        #[test]
        fn empty_detections_score_zero() {
            let dir = tempfile::tempdir().unwrap();
            let gt_path = fixture_gt(dir.path());
            let det_path = dir.path().join("dets.json");
            std::fs::write(&det_path, "[]").unwrap();
            let report = evaluate(&gt_path, &det_path, 0.5).unwrap();
            assert_eq!(report.map, 0.0);
            assert!(report.per_class.values().all(|m| m.ap == 0.0 && m.fp == 0));
        }

        #[test]
        fn declared_but_unannotated_category_is_not_scored() {
            // FirearmParts is declared in the categories array but has
            // no ground-truth boxes; detections for it are accepted and
            // ignored rather than dragging the mean down.
            let dir = tempfile::tempdir().unwrap();
            let gt_path = fixture_gt(dir.path());
            let det_path = dir.path().join("dets.json");
            std::fs::write(
                &det_path,
                r#"[
                  {"image_id": 1, "category_id": 1, "bbox": [10, 10, 20, 20], "score": 0.9},
                  {"image_id": 2, "category_id": 1, "bbox": [30, 30, 20, 20], "score": 0.9},
                  {"image_id": 3, "category_id": 3, "bbox": [5, 5, 10, 10], "score": 0.9},
                  {"image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "score": 0.9}
                ]"#,
            )
            .unwrap();
            let report = evaluate(&gt_path, &det_path, 0.5).unwrap();
            assert_eq!(report.map, 1.0);
            assert!(!report.per_class.contains_key("FirearmParts"));
        }

        #[test]
        fn unknown_category_is_an_error() {
            let dir = tempfile::tempdir().unwrap();
            let gt_path = fixture_gt(dir.path());
            let det_path = dir.path().join("dets.json");
            std::fs::write(
                &det_path,
                r#"[{"image_id": 1, "category_id": 9, "bbox": [0, 0, 5, 5], "score": 0.9}]"#,
            )
            .unwrap();
            assert!(matches!(
                evaluate(&gt_path, &det_path, 0.5),
                Err(Error::UnknownCategory { category_id: 9 })
            ));
        }

        #[test]
        fn bad_iou_threshold_is_rejected() {
            let dir = tempfile::tempdir().unwrap();
            let gt_path = fixture_gt(dir.path());
            let det_path = dir.path().join("dets.json");
            std::fs::write(&det_path, "[]").unwrap();
            assert!(matches!(
                evaluate(&gt_path, &det_path, 0.0),
                Err(Error::Domain { .. })
            ));
        }
    }
}
