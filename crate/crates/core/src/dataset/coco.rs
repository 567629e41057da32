//! COCO-style detection ground truth and detection results.
//!
//! The ground-truth document is the single interchange format between
//! the dataset builder and the evaluator. Serialisation is canonical:
//! fixed key order (struct order), two-space indentation, integer
//! geometry. Writing a document that was just read reproduces the
//! input byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, DatasetManifest};
use crate::error::{Error, Result};
use crate::threat::ClassLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u32,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u32,
    pub image_id: u32,
    pub category_id: u32,
    /// [x, y, width, height] in integer pixels.
    pub bbox: [u32; 4],
    pub area: u64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoDoc {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Category ids are assigned lexicographically from 1, and every known
/// class is declared even when a dataset happens not to contain it.
pub fn category_id(label: ClassLabel) -> u32 {
    ClassLabel::ALL
        .iter()
        .position(|&c| c == label)
        .expect("every label is in ALL") as u32
        + 1
}

pub fn categories() -> Vec<CocoCategory> {
    ClassLabel::ALL
        .iter()
        .enumerate()
        .map(|(i, &c)| CocoCategory {
            id: i as u32 + 1,
            name: c.as_str().to_string(),
        })
        .collect()
}

/// Assembles the ground-truth document for a manifest and its
/// annotations.
pub fn coco_doc(manifest: &DatasetManifest, annotations: &[Annotation]) -> CocoDoc {
    CocoDoc {
        images: manifest
            .entries
            .iter()
            .map(|e| CocoImage {
                id: e.image_id,
                file_name: e.file.clone(),
                width: e.width,
                height: e.height,
            })
            .collect(),
        annotations: annotations
            .iter()
            .map(|a| CocoAnnotation {
                id: a.annotation_id,
                image_id: a.image_id,
                category_id: category_id(a.category),
                bbox: [a.bbox.x, a.bbox.y, a.bbox.width, a.bbox.height],
                area: a.bbox.width as u64 * a.bbox.height as u64,
                iscrowd: 0,
            })
            .collect(),
        categories: categories(),
    }
}

pub fn write_coco_doc(doc: &CocoDoc, path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(doc).map_err(|e| Error::schema(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_coco(
    manifest: &DatasetManifest,
    annotations: &[Annotation],
    path: &Path,
) -> Result<()> {
    write_coco_doc(&coco_doc(manifest, annotations), path)
}

/// Reads and validates a ground-truth document: unique ids, resolvable
/// references, areas consistent with boxes, boxes inside their images.
pub fn read_coco(path: &Path) -> Result<CocoDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: CocoDoc =
        serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;

    let mut image_dims = std::collections::HashMap::new();
    for img in &doc.images {
        if image_dims.insert(img.id, (img.width, img.height)).is_some() {
            return Err(Error::schema(path, format!("duplicate image id {}", img.id)));
        }
        if img.width == 0 || img.height == 0 {
            return Err(Error::schema(path, format!("image {} has zero extent", img.id)));
        }
    }
    let mut category_ids = std::collections::HashSet::new();
    for cat in &doc.categories {
        if !category_ids.insert(cat.id) {
            return Err(Error::schema(path, format!("duplicate category id {}", cat.id)));
        }
    }
    let mut annotation_ids = std::collections::HashSet::new();
    for ann in &doc.annotations {
        if !annotation_ids.insert(ann.id) {
            return Err(Error::schema(path, format!("duplicate annotation id {}", ann.id)));
        }
        let Some(&(iw, ih)) = image_dims.get(&ann.image_id) else {
            return Err(Error::schema(
                path,
                format!("annotation {} references missing image {}", ann.id, ann.image_id),
            ));
        };
        if !category_ids.contains(&ann.category_id) {
            return Err(Error::schema(
                path,
                format!(
                    "annotation {} references missing category {}",
                    ann.id, ann.category_id
                ),
            ));
        }
        let [x, y, w, h] = ann.bbox;
        if w == 0 || h == 0 {
            return Err(Error::schema(
                path,
                format!("annotation {} has an empty box", ann.id),
            ));
        }
        if x + w > iw || y + h > ih {
            return Err(Error::schema(
                path,
                format!("annotation {} box leaves image {}", ann.id, ann.image_id),
            ));
        }
        if ann.area != w as u64 * h as u64 {
            return Err(Error::schema(
                path,
                format!("annotation {} area disagrees with its box", ann.id),
            ));
        }
    }
    Ok(doc)
}

/// One detection result: scored box in the ground-truth id space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDetection {
    pub image_id: u32,
    pub category_id: u32,
    /// [x, y, width, height]; detectors emit fractional geometry.
    pub bbox: [f64; 4],
    pub score: f64,
}

/// Reads a detection-results array (top-level JSON list).
pub fn read_detections(path: &Path) -> Result<Vec<CocoDetection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dets: Vec<CocoDetection> =
        serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
    for (i, det) in dets.iter().enumerate() {
        if !(0.0..=1.0).contains(&det.score) {
            return Err(Error::schema(
                path,
                format!("detection {} score {} outside [0, 1]", i, det.score),
            ));
        }
        if det.bbox[2] <= 0.0 || det.bbox[3] <= 0.0 {
            return Err(Error::schema(
                path,
                format!("detection {} has non-positive extent", i),
            ));
        }
    }
    Ok(dets)
}
