//! Per-clip interest-point extraction and the persisted vocabulary.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stconv_core::dataio::{ClipSource, VideoClip};
use stconv_core::model::Example;
use stconv_core::stip::{detect_stips, encode_bow, Codebook, InterestPoint, StipParams};

/// Vocabulary written next to a checkpoint, with the detector settings it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub classes: Vec<String>,
    pub stip: StipParams,
    pub codebook: Codebook,
}

impl CodebookFile {
    pub const NAME: &'static str = "codebook.json";

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(Self::NAME);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::NAME);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(stconv_core::Error::from)
            .with_context(|| format!("parsing {}", path.display()))
    }
}

/// Load every clip in `ids` and detect its interest points, fanning out over the worker pool.
/// Results keep the order of `ids`.
pub fn extract_points(source: &dyn ClipSource, ids: &[String], params: &StipParams) -> Result<Vec<(VideoClip, Vec<InterestPoint>)>> {
    ids.par_iter()
        .map(|id| -> Result<_> {
            let clip = source.load(id).with_context(|| format!("loading clip `{id}`"))?;
            let points = detect_stips(&clip.voxels, params).with_context(|| format!("detecting interest points in `{id}`"))?;
            Ok((clip, points))
        })
        .collect()
}

/// Attach bag-of-words histograms, turning clips into model inputs.
pub(crate) fn to_examples(items: Vec<(VideoClip, Vec<InterestPoint>)>, codebook: &Codebook) -> Result<Vec<Example>> {
    items
        .into_par_iter()
        .map(|(clip, points)| {
            Ok(Example {
                bow: encode_bow(&points, codebook)?,
                voxels: clip.voxels,
                label: clip.label,
            })
        })
        .collect()
}
