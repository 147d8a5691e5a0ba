//! On-disk interchange format.
//!
//! An artifact is a directory holding two files:
//!
//! * `manifest.json` with keys, in order, `version` (always 1), `kind`
//!   (`vocab_matrix`, `embedding_set`, `prompt_embedding` or
//!   `checkpoint_series`), `dtype` (always `"f32le"`), `shape` (`[rows, dim]`
//!   or `[steps, rows, dim]`), optional `labels` (one per row), optional
//!   `steps` (required for series) and `data_file`;
//! * the data file: raw little-endian IEEE-754 binary32 values, row-major,
//!   with no header or padding, exactly `4 * product(shape)` bytes.
//!
//! Values are widened to `f64` on read and narrowed to `f32` on write.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{CheckpointSeries, EmbeddingMatrix, MatrixKind, PromptEmbedding};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
pub const FORMAT_VERSION: u64 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    VocabMatrix,
    EmbeddingSet,
    PromptEmbedding,
    CheckpointSeries,
}

impl ArtifactKind {
    fn rank(self) -> usize {
        match self {
            ArtifactKind::CheckpointSeries => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u64,
    pub kind: ArtifactKind,
    pub dtype: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<u64>>,
    pub data_file: String,
}

impl Manifest {
    /// Number of `f32` values the data file must hold.
    pub fn element_count(&self) -> Result<usize> {
        self.shape
            .iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .ok_or_else(|| Error::MalformedManifest(format!("shape {:?} overflows", self.shape)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.dtype != DTYPE {
            return Err(Error::MalformedManifest(format!(
                "dtype must be \"{DTYPE}\", found {:?}",
                self.dtype
            )));
        }
        if self.shape.len() != self.kind.rank() {
            return Err(Error::MalformedManifest(format!(
                "{:?} needs a rank-{} shape, found {:?}",
                self.kind,
                self.kind.rank(),
                self.shape
            )));
        }
        if self.shape.contains(&0) {
            return Err(Error::MalformedManifest(format!(
                "shape entries must be positive, found {:?}",
                self.shape
            )));
        }
        self.element_count()?
            .checked_mul(4)
            .ok_or_else(|| Error::MalformedManifest("data size overflows".into()))?;

        let row_axis = self.shape[self.shape.len() - 2];
        if let Some(labels) = &self.labels {
            if labels.len() != row_axis {
                return Err(Error::MalformedManifest(format!(
                    "{} labels for {row_axis} rows",
                    labels.len()
                )));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
                return Err(Error::MalformedManifest(format!("duplicate label {dup:?}")));
            }
        }
        match (self.kind, &self.steps) {
            (ArtifactKind::CheckpointSeries, None) => {
                return Err(Error::MalformedManifest("checkpoint series needs `steps`".into()))
            }
            (ArtifactKind::CheckpointSeries, Some(steps)) => {
                if steps.len() != self.shape[0] {
                    return Err(Error::MalformedManifest(format!(
                        "{} steps for {} checkpoints",
                        steps.len(),
                        self.shape[0]
                    )));
                }
                if steps.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::MalformedManifest("steps must be strictly increasing".into()));
                }
            }
            (_, Some(_)) => {
                return Err(Error::MalformedManifest(format!(
                    "`steps` is only valid for checkpoint_series, not {:?}",
                    self.kind
                )))
            }
            (_, None) => {}
        }
        let p = Path::new(&self.data_file);
        let plain = !self.data_file.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)));
        if !plain {
            return Err(Error::MalformedManifest(format!(
                "data_file must be a relative path inside the artifact directory, found {:?}",
                self.data_file
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Matrix(EmbeddingMatrix),
    Prompt(PromptEmbedding),
    Series(CheckpointSeries),
}

impl Artifact {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            Artifact::Matrix(m) => match m.kind() {
                MatrixKind::VocabMatrix => ArtifactKind::VocabMatrix,
                MatrixKind::EmbeddingSet => ArtifactKind::EmbeddingSet,
            },
            Artifact::Prompt(_) => ArtifactKind::PromptEmbedding,
            Artifact::Series(_) => ArtifactKind::CheckpointSeries,
        }
    }

    fn manifest(&self) -> Manifest {
        let (shape, labels, steps) = match self {
            Artifact::Matrix(m) => (vec![m.n_rows(), m.dim()], m.labels(), None),
            Artifact::Prompt(p) => (vec![p.len(), p.dim()], p.positions().labels(), None),
            Artifact::Series(s) => {
                let f = &s.frames()[0];
                (vec![s.len(), f.n_rows(), f.dim()], f.labels(), Some(s.steps().to_vec()))
            }
        };
        Manifest {
            version: FORMAT_VERSION,
            kind: self.kind(),
            dtype: DTYPE.to_string(),
            shape,
            labels: labels.map(<[String]>::to_vec),
            steps,
            data_file: DATA_FILE.to_string(),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Artifact::Matrix(m) => Box::new(m.as_flat().iter().copied()),
            Artifact::Prompt(p) => Box::new(p.positions().as_flat().iter().copied()),
            Artifact::Series(s) => Box::new(s.frames().iter().flat_map(|f| f.as_flat().iter().copied())),
        }
    }
}

impl From<EmbeddingMatrix> for Artifact {
    fn from(m: EmbeddingMatrix) -> Self {
        Artifact::Matrix(m)
    }
}

impl From<PromptEmbedding> for Artifact {
    fn from(p: PromptEmbedding) -> Self {
        Artifact::Prompt(p)
    }
}

impl From<CheckpointSeries> for Artifact {
    fn from(s: CheckpointSeries) -> Self {
        Artifact::Series(s)
    }
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_f32le(values: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (i, v) in values.enumerate() {
        let x = v as f32;
        if !x.is_finite() {
            return Err(Error::InvalidVector(format!(
                "value {v} at flat index {i} is not representable as a finite f32"
            )));
        }
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_f32le(bytes: &[u8]) -> Result<Vec<f64>> {
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, b)| {
            let x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if x.is_finite() {
                Ok(f64::from(x))
            } else {
                Err(Error::InvalidVector(format!("non-finite value {x} at flat index {i}")))
            }
        })
        .collect()
}

/// Writes `artifact` into `dir` (created if missing). The data file is
/// written before the manifest, each via temp file and rename.
pub fn write(artifact: &Artifact, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = artifact.manifest();
    let bytes = encode_f32le(artifact.values())?;
    write_atomic(dir.join(&manifest.data_file), &bytes)?;
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    json.push(b'\n');
    write_atomic(dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(format!("{}: {e}", path.display())))?;
    // Reject foreign versions before judging the rest of the layout.
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => return Err(Error::MalformedManifest("missing or non-integer `version`".into())),
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::MalformedManifest(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

fn data_path(dir: &Path, manifest: &Manifest) -> PathBuf {
    dir.join(&manifest.data_file)
}

/// Reads and validates an artifact directory. The data file's byte size is
/// checked against the manifest shape before any value is decoded.
pub fn read(dir: impl AsRef<Path>) -> Result<Artifact> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let path = data_path(dir, &manifest);
    let expected = manifest.element_count()? as u64 * 4;
    let actual = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
    if actual != expected {
        return Err(Error::CorruptData { path, expected, actual });
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::CorruptData {
            path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values = decode_f32le(&bytes)?;
    build(&manifest, values)
}

fn build(manifest: &Manifest, values: Vec<f64>) -> Result<Artifact> {
    let labelled = |m: EmbeddingMatrix| -> Result<EmbeddingMatrix> {
        match &manifest.labels {
            Some(l) => m.with_labels(l.clone()),
            None => Ok(m),
        }
    };
    let s = &manifest.shape;
    Ok(match manifest.kind {
        ArtifactKind::VocabMatrix | ArtifactKind::EmbeddingSet => {
            let kind = if manifest.kind == ArtifactKind::VocabMatrix {
                MatrixKind::VocabMatrix
            } else {
                MatrixKind::EmbeddingSet
            };
            Artifact::Matrix(labelled(EmbeddingMatrix::from_flat(values, s[0], s[1], kind)?)?)
        }
        ArtifactKind::PromptEmbedding => Artifact::Prompt(PromptEmbedding::new(labelled(EmbeddingMatrix::from_flat(
            values,
            s[0],
            s[1],
            MatrixKind::EmbeddingSet,
        )?)?)),
        ArtifactKind::CheckpointSeries => {
            let per = s[1] * s[2];
            let frames = values
                .chunks_exact(per)
                .map(|c| {
                    labelled(EmbeddingMatrix::from_flat(
                        c.to_vec(),
                        s[1],
                        s[2],
                        MatrixKind::EmbeddingSet,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            let steps = manifest.steps.clone().unwrap_or_default();
            Artifact::Series(CheckpointSeries::new(steps, frames)?)
        }
    })
}
