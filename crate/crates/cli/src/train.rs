use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stconv_core::dataio::{make_splits, mix64, ClipSource};
use stconv_core::model::{model_init, save_checkpoint, train_epoch};
use stconv_core::stip::kmeans_fit;
use stconv_core::tensor::Matrix;

use crate::features::{extract_points, to_examples, CodebookFile};
use crate::{RunConfig, UsageError};

/// One line of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: Vec<LogLine>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Interest points found across the training clips.
    pub descriptors: usize,
}

#[derive(Serialize)]
struct SplitFile<'a> {
    split: u8,
    test_fraction: f64,
    train: &'a [String],
    test: &'a [String],
}

/// Fit the vocabulary on the training side of the split, train the hybrid model and write
/// `model.stcv`, `codebook.json`, `split.json` and `train_log.jsonl` into `cfg.out`.
///
/// Only training-side clips are ever loaded.
pub fn run_train(cfg: &RunConfig, source: &dyn ClipSource) -> Result<TrainOutcome> {
    let manifest = source.manifest();
    let split = make_splits(manifest, cfg.data.split, cfg.data.test_fraction).map_err(|e| UsageError(e.to_string()))?;
    if split.train.is_empty() {
        return Err(UsageError("the training side of the split is empty".into()).into());
    }
    cfg.stip.validate().map_err(|e| UsageError(e.to_string()))?;
    let started = Instant::now();

    let items = extract_points(source, &split.train, &cfg.stip)?;
    let dims = items[0].0.voxels.dims();
    let descriptors: Vec<&[f64]> = items.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.descriptor.as_slice())).collect();
    let k = cfg.model.bow_dim;
    if descriptors.len() < k {
        return Err(UsageError(format!(
            "only {} interest points on the training side; model.bow_dim = {k} needs at least that many",
            descriptors.len()
        ))
        .into());
    }
    let width = descriptors[0].len();
    let data = Matrix::from_vec(descriptors.len(), width, descriptors.concat())?;
    let codebook = kmeans_fit(&data, k, mix64(cfg.seed ^ 0xC0DE_B00C), cfg.codebook.max_iters)?;
    log::info!(
        "{} interest points from {} training clips; {k}-word vocabulary in {:.1}s",
        descriptors.len(),
        items.len(),
        started.elapsed().as_secs_f64()
    );
    let n_descriptors = descriptors.len();
    let examples = to_examples(items, &codebook)?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.num_classes = manifest.classes.len();
    model_cfg.input = dims;
    model_cfg.seed = cfg.seed;
    let mut model = model_init(&model_cfg, cfg.seed)?;

    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut log_lines = Vec::with_capacity(model_cfg.epochs);
    let mut log_text = String::new();
    for epoch in 0..model_cfg.epochs {
        let t0 = Instant::now();
        let mean_loss = train_epoch(&mut model, &examples, &model_cfg, epoch as u64)?;
        if !mean_loss.is_finite() {
            return Err(stconv_core::Error::NonFinite { param: "loss".into() }.into());
        }
        let line = LogLine {
            epoch: epoch + 1,
            mean_loss,
            wall_seconds: t0.elapsed().as_secs_f64(),
        };
        log::info!("epoch {:>3}  loss {:.4}  {:.1}s", line.epoch, line.mean_loss, line.wall_seconds);
        writeln!(log_text, "{}", serde_json::to_string(&line)?).expect("string write");
        log_lines.push(line);
    }

    let checkpoint = cfg.out.join("model.stcv");
    save_checkpoint(&checkpoint, &model)?;
    CodebookFile {
        classes: manifest.classes.clone(),
        stip: cfg.stip.clone(),
        codebook,
    }
    .save(&cfg.out)?;
    let split_text = serde_json::to_string_pretty(&SplitFile {
        split: cfg.data.split,
        test_fraction: cfg.data.test_fraction,
        train: &split.train,
        test: &split.test,
    })?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = cfg.out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write("split.json", split_text + "\n")?;
    write("train_log.jsonl", log_text)?;

    Ok(TrainOutcome {
        checkpoint,
        log: log_lines,
        train_ids: split.train,
        test_ids: split.test,
        descriptors: n_descriptors,
    })
}
