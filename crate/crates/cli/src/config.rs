//! Run configuration: built-in defaults, then a flat dotted-key JSON file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stconv_core::metrics::ReportFormat;
use stconv_core::model::HybridConfig;
use stconv_core::stip::StipParams;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (or its `manifest.json`).
    pub dir: PathBuf,
    /// Which of the three group-aware splits to use (1, 2 or 3).
    pub split: u8,
    /// Fraction of each class's clips placed on the test side.
    pub test_fraction: f64,
    /// Side of the split that `eval` scores.
    pub side: Side,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            split: 1,
            test_fraction: 0.2,
            side: Side::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of motion classes, taken in order from the built-in list (at most 5).
    pub classes: usize,
    pub clips_per_class: usize,
    /// Clip extents (T, H, W).
    pub dims: [usize; 3],
    /// Half-width of the uniform background noise.
    pub noise: f64,
    /// Consecutive clips of one class sharing a group id.
    pub group_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            clips_per_class: 40,
            dims: [8, 32, 32],
            noise: stconv_core::dataio::DEFAULT_NOISE,
            group_size: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    /// Lloyd iteration cap for the k-means vocabulary; its size is `model.bow_dim`.
    pub max_iters: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { max_iters: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSize {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    /// Volume extents (T, H, W).
    pub dims: [usize; 3],
    /// Cubic kernel extent; same padding.
    pub k: usize,
}

impl BenchSize {
    /// 1 clip, 16 -> 16 channels, 16x64x64 volume, 3x3x3 kernel.
    pub const REFERENCE: BenchSize = BenchSize {
        batch: 1,
        cin: 16,
        cout: 16,
        dims: [16, 64, 64],
        k: 3,
    };
}

impl std::str::FromStr for BenchSize {
    type Err = UsageError;

    /// `N,CIN,COUT,T,H,W,K`
    fn from_str(s: &str) -> Result<Self, UsageError> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| UsageError(format!("bench size `{s}`: {e}")))?;
        match parts[..] {
            [batch, cin, cout, t, h, w, k] => Ok(Self {
                batch,
                cin,
                cout,
                dims: [t, h, w],
                k,
            }),
            _ => Err(UsageError(format!("bench size `{s}` must be N,CIN,COUT,T,H,W,K"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed runs per measurement; one extra warm-up run is discarded.
    pub repeats: usize,
    pub sizes: Vec<BenchSize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            sizes: vec![BenchSize::REFERENCE],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; also copied into `model.seed`.
    pub seed: u64,
    pub format: ReportFormat,
    /// Output directory.
    pub out: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    /// `model.num_classes` and `model.input` are taken from the dataset at training time.
    pub model: HybridConfig,
    pub stip: StipParams,
    pub codebook: CodebookConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            format: ReportFormat::Json,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: HybridConfig::default(),
            stip: StipParams::default(),
            codebook: CodebookConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the flat dotted keys of a JSON object, e.g. `{"model.lr": 0.01}`.
    pub fn from_flat_json(text: &str) -> Result<Self, UsageError> {
        let file: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| UsageError(format!("config file: {e}")))?;
        let mut tree = serde_json::to_value(Self::default()).expect("defaults serialize");
        for (key, value) in file {
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|obj| obj.get_mut(part))
                    .ok_or_else(|| UsageError(format!("unknown config key `{key}`")))?;
            }
            *node = value;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| UsageError(format!("config file: {e}")))?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        Self::from_flat_json(&text)
    }

    /// Every key accepted by [`RunConfig::from_flat_json`], with its default value.
    pub fn flat_defaults() -> Vec<(String, Value)> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
            match v {
                Value::Object(map) => {
                    for (k, child) in map {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, child, out);
                    }
                }
                leaf => out.push((prefix.to_string(), leaf.clone())),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(Self::default()).expect("defaults serialize"), &mut out);
        out
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }
}
