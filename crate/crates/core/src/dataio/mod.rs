//! Clips, manifests, train/test splits and batching.

mod rvid;
mod split;
mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use rvid::{decode_clip, encode_clip, read_clip, write_clip, RVID_MAGIC, RVID_VERSION};
pub use split::{batch_iter, make_splits, Split};
pub use synth::{synth_generate, synth_generate_with_noise, SynthClass, DEFAULT_NOISE};

use crate::error::{Error, Result};
use crate::tensor::Volume;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    /// Grayscale voxels in `[0, 1]`.
    pub voxels: Volume,
    pub label: usize,
    pub clip_id: String,
    /// Clips sharing a group come from the same source and must stay on one side of a split.
    pub group_id: u32,
}

impl VideoClip {
    pub fn validate(&self) -> Result<()> {
        let v = &self.voxels;
        if v.t == 0 || v.h == 0 || v.w == 0 {
            return Err(Error::Input(format!("clip `{}` has an empty axis {:?}", self.clip_id, v.dims())));
        }
        if let Some(bad) = v.data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Input(format!("clip `{}` has voxel {bad} outside [0, 1]", self.clip_id)));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; turns structured seeds into well-spread ones.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub label: usize,
    pub group: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub clips: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut populated = vec![false; self.classes.len()];
        for c in &self.clips {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Input(format!("duplicate clip id `{}`", c.id)));
            }
            let slot = populated
                .get_mut(c.label)
                .ok_or_else(|| Error::Input(format!("clip `{}` has label {} outside {} classes", c.id, c.label, self.classes.len())))?;
            *slot = true;
        }
        if let Some(empty) = populated.iter().position(|p| !p) {
            return Err(Error::Input(format!("class `{}` has no clips", self.classes[empty])));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.clips.iter().find(|c| c.id == id)
    }
}

/// Anything that can hand out clips by id.
pub trait ClipSource: Sync {
    fn manifest(&self) -> &DatasetManifest;
    fn load(&self, id: &str) -> Result<VideoClip>;
}

/// Clips stored as RVID files next to a `manifest.json`.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl DirectorySource {
    pub const MANIFEST_NAME: &'static str = "manifest.json";

    /// Open a dataset from its directory or directly from its manifest file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() {
            path.join(Self::MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let manifest = DatasetManifest::load(&manifest_path)?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }
}

impl ClipSource for DirectorySource {
    fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn load(&self, id: &str) -> Result<VideoClip> {
        let entry = self
            .manifest
            .entry(id)
            .ok_or_else(|| Error::Input(format!("clip `{id}` not in manifest")))?;
        let mut clip = read_clip(self.root.join(&entry.path))?;
        if clip.label != entry.label || clip.group_id != entry.group {
            return Err(Error::Input(format!(
                "clip `{id}`: file says label {} group {}, manifest says label {} group {}",
                clip.label, clip.group_id, entry.label, entry.group
            )));
        }
        clip.clip_id = entry.id.clone();
        Ok(clip)
    }
}
