//! JSON file formats for scenes, questions, programs and predictions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Program;
use crate::executor::Answer;
use crate::scene::{Color, Material, ObjectAttributes, Scene, SceneError, SceneObject, Shape, Size, Split};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("scene {image_index}: {source}")]
    Scene { image_index: usize, source: SceneError },
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let io_err = |source| IoError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    writer.write_all(b"\n").map_err(io_err)?;
    writer.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
    pub material: Material,
    #[serde(rename = "3d_coords")]
    pub coords: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_index: usize,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenesInfo {
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenesFile {
    pub info: ScenesInfo,
    pub scenes: Vec<SceneRecord>,
}

impl ScenesFile {
    pub fn from_scenes(split: Split, seed: u64, scenes: &[Scene]) -> ScenesFile {
        let scenes = scenes
            .iter()
            .map(|s| SceneRecord {
                image_index: s.scene_index,
                objects: s
                    .objects()
                    .iter()
                    .map(|o| ObjectRecord {
                        shape: o.attrs.shape,
                        color: o.attrs.color,
                        size: o.attrs.size,
                        material: o.attrs.material,
                        coords: o.position,
                    })
                    .collect(),
            })
            .collect();
        ScenesFile { info: ScenesInfo { split, seed }, scenes }
    }

    /// Rebuilds validated scenes; object ids follow list order.
    pub fn to_scenes(&self) -> Result<Vec<Scene>, IoError> {
        self.scenes
            .iter()
            .map(|record| {
                let objects = record
                    .objects
                    .iter()
                    .enumerate()
                    .map(|(id, o)| SceneObject {
                        id,
                        attrs: ObjectAttributes { size: o.size, color: o.color, material: o.material, shape: o.shape },
                        position: o.coords,
                    })
                    .collect();
                Scene::new(record.image_index, self.info.split, objects)
                    .map_err(|source| IoError::Scene { image_index: record.image_index, source })
            })
            .collect()
    }
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub image_index: usize,
    pub question: String,
    pub program: Program,
    pub answer: Answer,
    #[serde(rename = "template_family")]
    pub family: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsInfo {
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsFile {
    pub info: QuestionsInfo,
    pub questions: Vec<QAInstance>,
}

/// Output of the `parse` command: one entry per question, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRecord {
    pub question_index: usize,
    pub image_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<Program>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Failure>,
}

/// Why a question produced no answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramsFile {
    pub programs: Vec<ProgramRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_index: usize,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub question_index: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub run_id: String,
    pub predictions: Vec<Prediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::sample_scene;

    #[test]
    fn scenes_round_trip_through_json() {
        let scenes: Vec<Scene> = (0..5).map(|i| sample_scene(3, i, 3, 10, Split::Val).unwrap()).collect();
        let file = ScenesFile::from_scenes(Split::Val, 3, &scenes);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"3d_coords\""));
        let back: ScenesFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_scenes().unwrap(), scenes);
    }

    #[test]
    fn corrupt_scene_is_reported() {
        let scenes = vec![sample_scene(3, 0, 3, 3, Split::Test).unwrap()];
        let mut file = ScenesFile::from_scenes(Split::Test, 3, &scenes);
        file.scenes[0].objects[1].coords[0] = file.scenes[0].objects[0].coords[0];
        assert!(matches!(file.to_scenes(), Err(IoError::Scene { image_index: 0, .. })));
    }

    #[test]
    fn files_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/p.json");
        let set = PredictionSet {
            run_id: "r".into(),
            predictions: vec![Prediction { question_index: 0, answer: Answer::from_text("Yes") }],
            diagnostics: vec![],
        };
        write_json(&path, &set).unwrap();
        let back: PredictionSet = read_json(&path).unwrap();
        assert_eq!(back, set);
        assert!(matches!(read_json::<PredictionSet>(&dir.path().join("missing.json")), Err(IoError::Io { .. })));
    }
}
