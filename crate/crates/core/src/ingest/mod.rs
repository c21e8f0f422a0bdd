//! Loading sample pools and training corpora.
//!
//! A [`Manifest`] is a JSON file listing item ids in a fixed order. Pixel
//! manifests point at PGM/PPM files (relative to the manifest's directory);
//! embedding manifests point at rows of one embeddings file. Items are
//! always returned in manifest order.

mod embeddings;
mod pnm;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{ItemKind, ItemVector};

pub use embeddings::{
    encode_binary, load_embeddings, parse_binary, parse_csv, write_binary, write_csv,
    EmbeddingFormat, BINARY_MAGIC,
};
pub use pnm::PnmImage;

pub const MANIFEST_VERSION: &str = "birthday-census-manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    pub format: EmbeddingFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub kind: ItemKind,
    pub items: Vec<ManifestItem>,
    #[serde(default)]
    pub source_note: String,
    /// Required for embedding manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingSource>,
}

impl Manifest {
    pub fn pixel(items: impl IntoIterator<Item = (String, PathBuf)>, note: &str) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            kind: ItemKind::Pixel,
            items: items
                .into_iter()
                .map(|(id, path)| ManifestItem {
                    id,
                    path: Some(path),
                    row: None,
                })
                .collect(),
            source_note: note.into(),
            embeddings: None,
        }
    }

    pub fn embedding(
        source: EmbeddingSource,
        items: impl IntoIterator<Item = (String, usize)>,
        note: &str,
    ) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            kind: ItemKind::Embedding,
            items: items
                .into_iter()
                .map(|(id, row)| ManifestItem {
                    id,
                    path: None,
                    row: Some(row),
                })
                .collect(),
            source_note: note.into(),
            embeddings: Some(source),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Ids unique; each entry has the reference its kind needs.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate manifest id {:?}",
                    item.id
                )));
            }
            let ok = match self.kind {
                ItemKind::Pixel => item.path.is_some(),
                ItemKind::Embedding => item.row.is_some(),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "manifest item {:?} lacks the {} its kind requires",
                    item.id,
                    if self.kind == ItemKind::Pixel {
                        "path"
                    } else {
                        "row"
                    }
                )));
            }
        }
        if self.kind == ItemKind::Embedding && self.embeddings.is_none() {
            return Err(Error::InvalidInput(
                "embedding manifest needs an \"embeddings\" source".into(),
            ));
        }
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.id.as_str())
    }
}

/// Loads every image of a pixel manifest; relative paths resolve against
/// `dir`. All images must share width, height and channel count.
pub fn load_images(dir: impl AsRef<Path>, manifest: &Manifest) -> Result<Vec<ItemVector>> {
    let dir = dir.as_ref();
    if manifest.kind != ItemKind::Pixel {
        return Err(Error::InvalidInput("manifest kind is not pixel".into()));
    }
    let loaded: Vec<(PathBuf, PnmImage)> = manifest
        .items
        .par_iter()
        .map(|item| {
            let path = dir.join(item.path.as_ref().expect("validated pixel manifest"));
            PnmImage::read(&path).map(|img| (path, img))
        })
        .collect::<Result<_>>()?;

    let shape = |img: &PnmImage| (img.width, img.height, img.channels);
    if let Some((_, first)) = loaded.first() {
        let expected = shape(first);
        if let Some((path, img)) = loaded.iter().find(|(_, img)| shape(img) != expected) {
            return Err(Error::InvalidInput(format!(
                "{}: {}x{}x{} differs from {}x{}x{} of the first image",
                path.display(),
                img.width,
                img.height,
                img.channels,
                expected.0,
                expected.1,
                expected.2
            )));
        }
    }
    manifest
        .items
        .iter()
        .zip(loaded)
        .map(|(item, (_, img))| ItemVector::pixel(item.id.clone(), img.to_values()))
        .collect()
}

/// A manifest together with its loaded vectors.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
    pub items: Vec<ItemVector>,
}

impl Corpus {
    /// Reads the manifest at `path` and loads whatever it references.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest = Manifest::read(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let items = match manifest.kind {
            ItemKind::Pixel => load_images(&base_dir, &manifest)?,
            ItemKind::Embedding => {
                let src = manifest.embeddings.as_ref().expect("validated");
                let rows = load_embeddings(base_dir.join(&src.path), src.format)?;
                manifest
                    .items
                    .iter()
                    .map(|item| {
                        let row = item.row.expect("validated");
                        let v = rows.get(row).ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "manifest item {:?} refers to row {row}, file has {} rows",
                                item.id,
                                rows.len()
                            ))
                        })?;
                        ItemVector::embedding(item.id.clone(), v.values().to_vec())
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(Self {
            manifest,
            base_dir,
            items,
        })
    }

    /// File backing a pixel item, if any.
    pub fn image_path(&self, id: &str) -> Option<PathBuf> {
        self.manifest
            .items
            .iter()
            .find(|i| i.id == id)
            .and_then(|i| i.path.as_ref())
            .map(|p| self.base_dir.join(p))
    }

    pub fn get(&self, id: &str) -> Option<&ItemVector> {
        self.items.iter().find(|i| i.id() == id)
    }
}
