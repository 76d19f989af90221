use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use stconv_core::dataio::ClipSource;
use stconv_core::stip::InterestPoint;

use crate::features::extract_points;
use crate::RunConfig;

#[derive(Serialize)]
struct PointLine<'a> {
    t: usize,
    y: usize,
    x: usize,
    response: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    descriptor: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct ClipLine<'a> {
    clip: &'a str,
    label: usize,
    points: Vec<PointLine<'a>>,
}

/// Detect interest points in every clip (or only `only`) and write one JSON line per clip
/// to `out/stips.jsonl`. Returns the output path and the total number of points.
pub fn run_stip(cfg: &RunConfig, source: &dyn ClipSource, only: Option<&str>, with_descriptors: bool) -> Result<(PathBuf, usize)> {
    let ids: Vec<String> = match only {
        Some(id) => vec![id.to_string()],
        None => source.manifest().clips.iter().map(|c| c.id.clone()).collect(),
    };
    let items = extract_points(source, &ids, &cfg.stip)?;
    let mut text = String::new();
    let mut total = 0;
    for (clip, points) in &items {
        total += points.len();
        let line = ClipLine {
            clip: &clip.clip_id,
            label: clip.label,
            points: points
                .iter()
                .map(|p: &InterestPoint| PointLine {
                    t: p.t,
                    y: p.y,
                    x: p.x,
                    response: p.response,
                    descriptor: with_descriptors.then_some(p.descriptor.as_slice()),
                })
                .collect(),
        };
        writeln!(text, "{}", serde_json::to_string(&line)?).expect("string write");
    }
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join("stips.jsonl");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("{total} interest points in {} clips -> {}", items.len(), path.display());
    Ok((path, total))
}
