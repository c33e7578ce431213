use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{BBox, Image};

use super::{generate_scene, scene_rng, DataError, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub file: String,
    pub image: Image,
    pub boxes: Vec<BBox>,
}

/// Images with ground-truth boxes and the class names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    class: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageRecord {
    id: u64,
    file: String,
    width: usize,
    height: usize,
    boxes: Vec<BoxRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    classes: Vec<String>,
    images: Vec<ImageRecord>,
}

pub const INDEX_FILE: &str = "index.json";

/// `count` scenes with ids `first_id..first_id + count`.
pub fn generate_dataset(
    spec: &SceneSpec,
    first_id: u64,
    count: usize,
) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(count);
    for id in first_id..first_id + count as u64 {
        let (image, boxes) = generate_scene(spec, &mut scene_rng(spec.seed, id))?;
        samples.push(Sample {
            id,
            file: format!("images/{id:06}.ppm"),
            image,
            boxes,
        });
    }
    Ok(Dataset {
        classes: spec.class_names(),
        samples,
    })
}

impl Dataset {
    pub fn get(&self, id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), DataError> {
    for s in &data.samples {
        let path = dir.join(&s.file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        s.image
            .write_ppm(BufWriter::new(fs::File::create(&path)?))?;
    }
    let index = Index {
        classes: data.classes.clone(),
        images: data
            .samples
            .iter()
            .map(|s| ImageRecord {
                id: s.id,
                file: s.file.clone(),
                width: s.image.width(),
                height: s.image.height(),
                boxes: s
                    .boxes
                    .iter()
                    .map(|b| BoxRecord {
                        class: b.class_id,
                        cx: b.cx,
                        cy: b.cy,
                        w: b.w,
                        h: b.h,
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(dir.join(INDEX_FILE), json)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(index_path.clone()),
        _ => DataError::Io(e),
    })?;
    let index: Index = serde_json::from_str(&text)
        .map_err(|e| DataError::Json(format!("{}: {e}", index_path.display())))?;
    let mut samples = Vec::with_capacity(index.images.len());
    for rec in index.images {
        let mut boxes = Vec::with_capacity(rec.boxes.len());
        for b in rec.boxes {
            let bbox = BBox::new(b.class, b.cx, b.cy, b.w, b.h);
            if !bbox.is_valid() {
                return Err(DataError::BoxOutOfRange {
                    image_id: rec.id,
                    detail: format!("{bbox:?}"),
                });
            }
            if b.class >= index.classes.len() {
                return Err(DataError::BoxOutOfRange {
                    image_id: rec.id,
                    detail: format!("class {} but only {} classes", b.class, index.classes.len()),
                });
            }
            boxes.push(bbox);
        }
        let path: PathBuf = dir.join(&rec.file);
        let f = fs::File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DataError::MissingFile(path.clone()),
            _ => DataError::Io(e),
        })?;
        let image = Image::read_ppm(BufReader::new(f))?;
        if (image.width(), image.height()) != (rec.width, rec.height) {
            return Err(DataError::DimensionMismatch {
                image_id: rec.id,
                expected: (rec.width, rec.height),
                found: (image.width(), image.height()),
            });
        }
        samples.push(Sample {
            id: rec.id,
            file: rec.file,
            image,
            boxes,
        });
    }
    Ok(Dataset {
        classes: index.classes,
        samples,
    })
}
