//! Synthetic motion clips: a bright square on a noisy background, one motion pattern per class.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix64, VideoClip};
use crate::error::{Error, Result};
use crate::tensor::Volume;

pub const BACKGROUND: f64 = 0.2;
pub const FOREGROUND: f64 = 0.9;
pub const DEFAULT_NOISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthClass {
    TranslateRight,
    TranslateDown,
    Rotate,
    Flash,
    StaticNoise,
}

impl SynthClass {
    pub const ALL: [SynthClass; 5] = [
        SynthClass::TranslateRight,
        SynthClass::TranslateDown,
        SynthClass::Rotate,
        SynthClass::Flash,
        SynthClass::StaticNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::TranslateRight => "translate_right",
            SynthClass::TranslateDown => "translate_down",
            SynthClass::Rotate => "rotate",
            SynthClass::Flash => "flash",
            SynthClass::StaticNoise => "static_noise",
        }
    }

    pub fn label(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("listed")
    }
}

impl fmt::Display for SynthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown synthetic class `{s}`")))
    }
}

pub fn synth_generate(class: SynthClass, dims: [usize; 3], seed: u64) -> Result<VideoClip> {
    synth_generate_with_noise(class, dims, seed, DEFAULT_NOISE)
}

/// Render one clip. `noise` is the half-width of the uniform per-voxel background noise.
pub fn synth_generate_with_noise(class: SynthClass, dims: [usize; 3], seed: u64, noise: f64) -> Result<VideoClip> {
    let [t, h, w] = dims;
    if t < 4 || h < 16 || w < 16 {
        return Err(Error::Input(format!(
            "synthetic clips need T >= 4 and H, W >= 16, got {t}x{h}x{w}"
        )));
    }
    if !(0.0..=BACKGROUND).contains(&noise) {
        return Err(Error::Input(format!("noise amplitude {noise} outside [0, {BACKGROUND}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(class.label() as u64 + 1)));
    let min_side = h.min(w);
    let size = min_side / 4 + rng.gen_range(0..=min_side / 8);

    // top-left corner of the square per frame, or None when it is not drawn
    let positions: Vec<Option<(i64, i64)>> = match class {
        SynthClass::TranslateRight => {
            let y0 = rng.gen_range(1..=(h - size - 1)) as i64;
            let x0 = rng.gen_range(0..=w / 4) as i64;
            (0..t).map(|f| Some((y0, x0 + f as i64))).collect()
        }
        SynthClass::TranslateDown => {
            let x0 = rng.gen_range(1..=(w - size - 1)) as i64;
            let y0 = rng.gen_range(0..=h / 4) as i64;
            (0..t).map(|f| Some((y0 + f as i64, x0))).collect()
        }
        SynthClass::Rotate => {
            let radius = min_side as f64 / 4.0 + rng.gen_range(-1.0..1.0);
            let phase = rng.gen_range(0.0..TAU);
            let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
            let half = size as f64 / 2.0;
            (0..t)
                .map(|f| {
                    let angle = phase + TAU * f as f64 / t as f64;
                    let y = cy + radius * angle.sin() - half;
                    let x = cx + radius * angle.cos() - half;
                    Some((y.round() as i64, x.round() as i64))
                })
                .collect()
        }
        SynthClass::Flash => {
            let y0 = rng.gen_range(1..=(h - size - 1)) as i64;
            let x0 = rng.gen_range(1..=(w - size - 1)) as i64;
            (0..t).map(|f| (f == t / 2).then_some((y0, x0))).collect()
        }
        SynthClass::StaticNoise => vec![None; t],
    };

    let size = size as i64;
    let mut data = Vec::with_capacity(t * h * w);
    for pos in &positions {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let inside = pos.is_some_and(|(py, px)| y >= py && y < py + size && x >= px && x < px + size);
                let base = if inside { FOREGROUND } else { BACKGROUND };
                let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                data.push((base + jitter).clamp(0.0, 1.0));
            }
        }
    }
    Ok(VideoClip {
        voxels: Volume::from_vec(t, h, w, data)?,
        label: class.label(),
        clip_id: format!("{}_{seed}", class.name()),
        group_id: 0,
    })
}
