use std::path::PathBuf;

use anyhow::{Context, Result};
use stconv_core::dataio::{mix64, synth_generate_with_noise, write_clip, DatasetManifest, DirectorySource, ManifestEntry, SynthClass};

use crate::{RunConfig, UsageError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutcome {
    pub manifest_path: PathBuf,
    pub clips: usize,
}

/// Write `clips_per_class` RVID clips per class under `out/clips/` plus `out/manifest.json`.
///
/// Consecutive clips of a class share a group id in blocks of `group_size`; group ids are
/// unique across classes.
pub fn run_synth(cfg: &RunConfig) -> Result<SynthOutcome> {
    let s = &cfg.synth;
    if s.classes < 2 || s.classes > SynthClass::ALL.len() {
        return Err(UsageError(format!("synth.classes must be in 2..={}, got {}", SynthClass::ALL.len(), s.classes)).into());
    }
    if s.clips_per_class == 0 {
        return Err(UsageError("synth.clips_per_class must be >= 1; empty datasets are rejected".into()).into());
    }
    if s.group_size == 0 {
        return Err(UsageError("synth.group_size must be >= 1".into()).into());
    }
    let clips_dir = cfg.out.join("clips");
    std::fs::create_dir_all(&clips_dir).with_context(|| format!("creating {}", clips_dir.display()))?;

    let groups_per_class = s.clips_per_class.div_ceil(s.group_size);
    let classes = &SynthClass::ALL[..s.classes];
    let mut entries = Vec::with_capacity(s.classes * s.clips_per_class);
    for (label, &class) in classes.iter().enumerate() {
        for i in 0..s.clips_per_class {
            let seed = mix64(cfg.seed).wrapping_add((label * s.clips_per_class + i) as u64);
            // dims and noise come straight from the settings, so a rejection is a usage error
            let mut clip = synth_generate_with_noise(class, s.dims, seed, s.noise).map_err(|e| UsageError(e.to_string()))?;
            let group = label * groups_per_class + i / s.group_size;
            clip.group_id = u32::try_from(group).context("group id overflow")?;
            clip.label = label;
            clip.clip_id = format!("{}_{i:03}", class.name());
            let rel = format!("clips/{}.rvid", clip.clip_id);
            write_clip(cfg.out.join(&rel), &clip)?;
            entries.push(ManifestEntry {
                id: clip.clip_id,
                path: rel,
                label,
                group: clip.group_id,
            });
        }
    }
    let manifest = DatasetManifest {
        classes: classes.iter().map(|c| c.name().to_string()).collect(),
        clips: entries,
    };
    let manifest_path = cfg.out.join(DirectorySource::MANIFEST_NAME);
    manifest.save(&manifest_path)?;
    log::info!("wrote {} clips and {}", manifest.clips.len(), manifest_path.display());
    Ok(SynthOutcome {
        manifest_path,
        clips: manifest.clips.len(),
    })
}
