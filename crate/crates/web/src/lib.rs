//! Browser bindings for three small demos: interest points on a synthetic clip, the
//! dense vs factorized FLOP ratio, and per-class metrics from a confusion matrix.
//!
//! Every export returns a JSON string; failures come back as `{"error": "..."}` so the
//! page never has to catch exceptions.

use serde::Serialize;
use serde_json::json;
use stconv_core::dataio::{synth_generate, SynthClass};
use stconv_core::metrics::{accuracy, class_rows, macro_average, ConfusionMatrix};
use stconv_core::nn::{flop_count, ConvDims, ConvKind};
use stconv_core::stip::{detect_stips, StipParams};
use wasm_bindgen::prelude::wasm_bindgen;

const DEMO_DIMS: [usize; 3] = [8, 32, 32];

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(value) => serde_json::to_string(&value).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
struct Point {
    t: usize,
    y: usize,
    x: usize,
    response: f64,
}

#[derive(Serialize)]
struct StipDemo {
    class: String,
    dims: [usize; 3],
    /// Voxel intensities quantized to 0..=255, frame-major.
    frames: Vec<Vec<u8>>,
    points: Vec<Point>,
}

/// Names of the synthetic motion classes, as a JSON array.
#[wasm_bindgen]
pub fn synth_classes() -> String {
    respond(Ok(SynthClass::ALL.iter().map(|c| c.name()).collect::<Vec<_>>()))
}

/// Generate an 8x32x32 clip of `class` and detect its interest points.
#[wasm_bindgen]
pub fn stip_demo(class: &str, seed: u32, sigma: f64, tau: f64, threshold_frac: f64) -> String {
    respond((|| {
        let class: SynthClass = class.parse().map_err(|e: stconv_core::Error| e.to_string())?;
        let params = StipParams {
            sigma,
            tau,
            threshold_frac,
            ..StipParams::default()
        };
        params.validate().map_err(|e| e.to_string())?;
        let clip = synth_generate(class, DEMO_DIMS, u64::from(seed)).map_err(|e| e.to_string())?;
        let v = &clip.voxels;
        let points = detect_stips(v, &params).map_err(|e| e.to_string())?;
        let frame_len = v.h * v.w;
        let frames = v
            .data
            .chunks(frame_len)
            .map(|f| f.iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
            .collect();
        Ok(StipDemo {
            class: class.name().to_string(),
            dims: DEMO_DIMS,
            frames,
            points: points
                .into_iter()
                .map(|p| Point {
                    t: p.t,
                    y: p.y,
                    x: p.x,
                    response: p.response,
                })
                .collect(),
        })
    })())
}

#[derive(Serialize)]
struct FlopReport {
    dense: u64,
    factorized: u64,
    ratio_num: u64,
    ratio_den: u64,
    ratio: f64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Multiply-add FLOPs of a same-padded, stride-1 layer as a dense `kt x kh x kw` kernel and as
/// its `kt x 1 x 1` then `1 x kh x kw` factorization (intermediate width = `cout`).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn flop_ratio(n: u32, cin: u32, cout: u32, t: u32, h: u32, w: u32, kt: u32, kh: u32, kw: u32) -> String {
    respond((|| {
        let k = [kt, kh, kw].map(u64::from);
        let dims = ConvDims::from_input(
            n.into(),
            cin.into(),
            cout.into(),
            cout.into(),
            [t, h, w].map(u64::from),
            k,
            [1; 3],
            k.map(|e| e / 2),
        )
        .map_err(|e| e.to_string())?;
        let dense = flop_count(ConvKind::Dense, &dims).map_err(|e| e.to_string())?;
        let factorized = flop_count(ConvKind::Factorized, &dims).map_err(|e| e.to_string())?;
        if factorized == 0 {
            return Err("layer has no output".to_string());
        }
        let g = gcd(dense, factorized);
        Ok(FlopReport {
            dense,
            factorized,
            ratio_num: dense / g,
            ratio_den: factorized / g,
            ratio: dense as f64 / factorized as f64,
        })
    })())
}

/// Per-class precision/recall/F1, macro averages and accuracy for a confusion matrix given
/// as a JSON array of rows (`counts[true][predicted]`).
#[wasm_bindgen]
pub fn metrics_from_counts(counts_json: &str) -> String {
    respond((|| {
        let counts: Vec<Vec<u64>> = serde_json::from_str(counts_json).map_err(|e| e.to_string())?;
        let cm = ConfusionMatrix::from_counts(&counts).map_err(|e| e.to_string())?;
        let rows = class_rows(&cm, &[]);
        let macro_avg = macro_average(&rows).map_err(|e| e.to_string())?;
        Ok(json!({
            "classes": rows,
            "macro": macro_avg,
            "accuracy": accuracy(&cm).ok(),
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn class_list_matches_generator() {
        assert_eq!(parse(synth_classes()).as_array().unwrap().len(), SynthClass::ALL.len());
    }

    #[test]
    fn stip_demo_returns_frames_and_points() {
        let v = parse(stip_demo("translate_right", 1, 1.5, 1.5, 0.01));
        assert_eq!(v["frames"].as_array().unwrap().len(), 8);
        assert_eq!(v["frames"][0].as_array().unwrap().len(), 32 * 32);
        assert!(!v["points"].as_array().unwrap().is_empty());
        assert!(v["points"].as_array().unwrap().iter().all(|p| p["t"].as_u64().unwrap() < 8));
    }

    #[test]
    fn stip_demo_reports_bad_input() {
        assert!(parse(stip_demo("juggling", 0, 1.5, 1.5, 0.01))["error"].is_string());
        assert!(parse(stip_demo("flash", 0, -1.0, 1.5, 0.01))["error"].is_string());
    }

    #[test]
    fn cubic_kernel_ratio_is_nine_quarters() {
        let v = parse(flop_ratio(1, 16, 16, 16, 64, 64, 3, 3, 3));
        assert_eq!((v["ratio_num"].as_u64(), v["ratio_den"].as_u64()), (Some(9), Some(4)));
        assert_eq!(v["dense"].as_u64(), Some(905_969_664));
    }

    #[test]
    fn metrics_from_two_class_counts() {
        let v = parse(metrics_from_counts("[[95, 5], [0, 100]]"));
        assert_eq!(v["classes"][0]["precision"].as_f64(), Some(1.0));
        assert_eq!(v["classes"][0]["recall"].as_f64(), Some(0.95));
        assert_eq!(v["accuracy"].as_f64(), Some(0.975));
        assert!(parse(metrics_from_counts("[[1, 2], [3]]"))["error"].is_string());
        assert!(parse(metrics_from_counts("not json"))["error"].is_string());
    }
}
