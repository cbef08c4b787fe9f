//! Scene descriptions: the structured stand-in for an image. A scene
//! fixes the canvas size and lists object instances with categories,
//! boxes, and free-form string attributes. Gold labels, when present,
//! are a [`LabelSet`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};

pub const NORMAL_LABEL: &str = "normal";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{0}")]
    Geometry(#[from] GeometryError),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("invalid label set: {0}")]
    Labels(#[from] LabelSetError),
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelSetError {
    #[error("label set cannot be empty")]
    Empty,
    #[error("'{}' cannot be combined with anomaly labels", NORMAL_LABEL)]
    NormalMixedWithAnomalies,
    #[error("label cannot be an empty string")]
    EmptyLabel,
}

/// Either exactly `{normal}` or a non-empty set of anomaly category
/// names that excludes `normal`. There is no way to build a mixed or
/// empty set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(BTreeSet<String>);

impl LabelSet {
    pub fn normal() -> Self {
        LabelSet(BTreeSet::from([NORMAL_LABEL.to_string()]))
    }

    /// A non-empty set of anomaly categories.
    pub fn anomalies<I, S>(labels: I) -> Result<Self, LabelSetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(LabelSetError::Empty);
        }
        if set.iter().any(|l| l.is_empty()) {
            return Err(LabelSetError::EmptyLabel);
        }
        if set.contains(NORMAL_LABEL) {
            return Err(LabelSetError::NormalMixedWithAnomalies);
        }
        Ok(LabelSet(set))
    }

    /// General constructor: `{normal}` alone, or anomalies only.
    pub fn from_labels<I, S>(labels: I) -> Result<Self, LabelSetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(LabelSetError::Empty);
        }
        if set.contains(NORMAL_LABEL) {
            if set.len() > 1 {
                return Err(LabelSetError::NormalMixedWithAnomalies);
            }
            return Ok(LabelSet::normal());
        }
        LabelSet::anomalies(set)
    }

    pub fn is_normal(&self) -> bool {
        self.0.contains(NORMAL_LABEL)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }

    /// Sorted labels.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = LabelSetError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::from_labels(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(s: LabelSet) -> Self {
        s.0.into_iter().collect()
    }
}

impl std::fmt::Display for LabelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for l in &self.0 {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub category: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl ObjectInstance {
    pub fn new(id: impl Into<String>, category: impl Into<String>, bbox: BBox) -> Self {
        ObjectInstance {
            id: id.into(),
            category: category.into(),
            bbox,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Name of the scenario whose constraints this scene is meant to be
    /// judged against.
    pub scenario: String,
    /// Opaque handle for the underlying image; also the stable context
    /// string for per-scene randomness downstream.
    pub image_ref: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<ObjectInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<LabelSet>,
}

impl Scene {
    pub fn new(
        scenario: impl Into<String>,
        image_ref: impl Into<String>,
        width: f64,
        height: f64,
        objects: Vec<ObjectInstance>,
        gold_labels: Option<LabelSet>,
    ) -> Result<Self, SceneError> {
        let scene = Scene {
            scenario: scenario.into(),
            image_ref: image_ref.into(),
            width,
            height,
            objects,
            gold_labels,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.scenario.is_empty() {
            return Err(SceneError::Invalid("scenario name is empty".into()));
        }
        if self.image_ref.is_empty() {
            return Err(SceneError::Invalid("image_ref is empty".into()));
        }
        for dim in [self.width, self.height] {
            if !dim.is_finite() || dim <= 0.0 {
                return Err(SceneError::Invalid(format!(
                    "canvas must have positive finite dimensions, got {}x{}",
                    self.width, self.height
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if obj.id.is_empty() {
                return Err(SceneError::Invalid("object with empty id".into()));
            }
            if !seen.insert(obj.id.as_str()) {
                return Err(SceneError::Invalid(format!("duplicate object id '{}'", obj.id)));
            }
            if obj.category.is_empty() {
                return Err(SceneError::Invalid(format!(
                    "object '{}' has an empty category",
                    obj.id
                )));
            }
            if obj.bbox.x2() > self.width || obj.bbox.y2() > self.height {
                return Err(SceneError::Invalid(format!(
                    "object '{}' extends past the {}x{} canvas",
                    obj.id, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn objects_of<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ObjectInstance> {
        self.objects.iter().filter(move |o| o.category == category)
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let scene: Scene = serde_json::from_str(&text).map_err(|source| SceneError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    scene.validate()?;
    Ok(scene)
}

/// Writes through a temp file in the same directory, then renames, so a
/// crash cannot leave a half-written scene behind.
pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    scene.validate()?;
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(scene).expect("scene serialization cannot fail");
    atomic_write(path, json.as_bytes()).map_err(|source| SceneError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    if tmp == *path {
        tmp = dir.join(".write.tmp");
    }
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        if !bytes.ends_with(b"\n") {
            f.write_all(b"\n")?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
