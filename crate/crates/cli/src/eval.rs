use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use stconv_core::dataio::{make_splits, ClipSource};
use stconv_core::metrics::{accuracy, class_rows, emit_report, ClassReportRow, ConfusionMatrix, ReportFormat};
use stconv_core::model::{load_checkpoint, predict_batch};
use stconv_core::FormatError;

use crate::features::{extract_points, to_examples, CodebookFile};
use crate::{RunConfig, Side, UsageError};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// The rendered report in the requested format.
    pub report: String,
    pub accuracy: f64,
    pub rows: Vec<ClassReportRow>,
    pub confusion: ConfusionMatrix,
    pub ids: Vec<String>,
}

/// Score the checkpoint in `model_dir` on one side of the split and write `out/report.{json,csv}`.
pub fn run_eval(cfg: &RunConfig, source: &dyn ClipSource, model_dir: &Path) -> Result<EvalOutcome> {
    let model = load_checkpoint(model_dir.join("model.stcv"))?;
    let vocab = CodebookFile::load(model_dir)?;
    let manifest = source.manifest();
    let mc = model.config();
    if mc.num_classes != manifest.classes.len() || vocab.classes != manifest.classes {
        return Err(stconv_core::Error::from(FormatError::Invalid(format!(
            "checkpoint was trained on classes {:?}, dataset has {:?}",
            vocab.classes, manifest.classes
        )))
        .into());
    }
    if vocab.codebook.size() != mc.bow_dim {
        return Err(stconv_core::Error::from(FormatError::Invalid(format!(
            "codebook has {} words, checkpoint expects {}",
            vocab.codebook.size(),
            mc.bow_dim
        )))
        .into());
    }

    let split = make_splits(manifest, cfg.data.split, cfg.data.test_fraction).map_err(|e| UsageError(e.to_string()))?;
    let ids = match cfg.data.side {
        Side::Test => split.test,
        Side::Train => split.train,
    };
    if ids.is_empty() {
        return Err(UsageError(format!("the {:?} side of split {} is empty", cfg.data.side, cfg.data.split)).into());
    }
    let items = extract_points(source, &ids, &vocab.stip)?;
    let examples = to_examples(items, &vocab.codebook)?;
    let chunk = cfg.model.batch_size.max(1);
    let predictions: Vec<usize> = examples
        .par_chunks(chunk)
        .map(|part| predict_batch(&model, part, chunk))
        .collect::<stconv_core::Result<Vec<Vec<usize>>>>()?
        .concat();

    let mut cm = ConfusionMatrix::new(mc.num_classes);
    for (e, &p) in examples.iter().zip(&predictions) {
        cm.accumulate(e.label, p)?;
    }
    let rows = class_rows(&cm, &manifest.classes);
    let report = emit_report(&rows, &cm, cfg.format)?;
    let acc = accuracy(&cm)?;

    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let ext = match cfg.format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    };
    let path = cfg.out.join(format!("report.{ext}"));
    std::fs::write(&path, &report).with_context(|| format!("writing {}", path.display()))?;
    log::info!("{:?} side: accuracy {acc:.4} on {} clips -> {}", cfg.data.side, ids.len(), path.display());
    Ok(EvalOutcome {
        report,
        accuracy: acc,
        rows,
        confusion: cm,
        ids,
    })
}
