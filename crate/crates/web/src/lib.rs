//! Browser bindings for three pieces of the verification pipeline: Kaiser
//! beat weights, DCT truncation of a beat, and QRS detection on a
//! synthetic ECG strip.

use ecgauth::beatmath::{kaiser_weights, DctMatrix};
use ecgauth::qrs::{detect_beats, segment_beat, RPeak, BEAT_LEN};
use ecgauth::synth::{generate_record, SubjectMorphology};
use wasm_bindgen::prelude::*;

const FS: u32 = 512;

/// Weights for a buffer of `count` beats, best-ranked first.
#[wasm_bindgen]
pub fn beat_weights(count: usize, beta: f64) -> Vec<f64> {
    kaiser_weights(count.max(1), beta.max(0.0))
}

/// A synthetic beat and its reconstruction from the first `m` DCT
/// coefficients.
#[wasm_bindgen]
pub struct Reconstruction {
    original: Vec<f64>,
    reconstructed: Vec<f64>,
    coefficients: Vec<f64>,
}

#[wasm_bindgen]
impl Reconstruction {
    #[wasm_bindgen(getter)]
    pub fn original(&self) -> Vec<f64> {
        self.original.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reconstructed(&self) -> Vec<f64> {
        self.reconstructed.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients.clone()
    }

    /// Root-mean-square difference between the beat and its reconstruction.
    #[wasm_bindgen(getter)]
    pub fn rms_error(&self) -> f64 {
        let sq: f64 = self
            .original
            .iter()
            .zip(&self.reconstructed)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (sq / self.original.len() as f64).sqrt()
    }
}

/// Cuts one beat from a short synthetic strip and keeps `m` of its 256 DCT
/// coefficients.
#[wasm_bindgen]
pub fn dct_reconstruction(m: usize, noise: f64, seed: u32) -> Result<Reconstruction, String> {
    let morph = SubjectMorphology {
        noise: noise.max(0.0),
        seed: seed as u64,
        ..SubjectMorphology::reference()
    };
    let (rec, truth) = generate_record(&morph, 4.0, FS).map_err(|e| e.to_string())?;
    let beat = segment_beat(&rec, RPeak::new(truth[1], FS)).map_err(|e| e.to_string())?;
    let g = DctMatrix::new(BEAT_LEN, m.clamp(1, BEAT_LEN)).map_err(|e| e.to_string())?;
    let coefficients = g.apply(&beat.window).map_err(|e| e.to_string())?;
    let reconstructed = g.inverse(&coefficients).map_err(|e| e.to_string())?;
    Ok(Reconstruction {
        original: beat.window,
        reconstructed,
        coefficients,
    })
}

/// A synthetic ECG strip with its true and detected R peaks.
#[wasm_bindgen]
pub struct Detection {
    samples: Vec<i32>,
    truth: Vec<u32>,
    detected: Vec<u32>,
}

#[wasm_bindgen]
impl Detection {
    #[wasm_bindgen(getter)]
    pub fn fs(&self) -> u32 {
        FS
    }

    #[wasm_bindgen(getter)]
    pub fn samples(&self) -> Vec<i32> {
        self.samples.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<u32> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn detected(&self) -> Vec<u32> {
        self.detected.clone()
    }

    /// True peaks with a detection within `tol_ms`.
    pub fn matched(&self, tol_ms: f64) -> u32 {
        let tol = tol_ms / 1000.0 * FS as f64;
        self.truth
            .iter()
            .filter(|&&t| {
                self.detected
                    .iter()
                    .any(|&d| (d as f64 - t as f64).abs() <= tol)
            })
            .count() as u32
    }
}

/// Renders `seconds` of ECG at `bpm` with white noise `noise` (ADC units)
/// and runs the detector over it.
#[wasm_bindgen]
pub fn synth_and_detect(
    bpm: f64,
    noise: f64,
    seconds: f64,
    seed: u32,
) -> Result<Detection, String> {
    let morph = SubjectMorphology {
        bpm: bpm.clamp(30.0, 200.0),
        hrv: 0.03,
        rr_jitter: 0.01,
        beat_jitter: 0.02,
        noise: noise.max(0.0),
        wander: 40.0,
        seed: seed as u64,
        ..SubjectMorphology::reference()
    };
    let (rec, truth) =
        generate_record(&morph, seconds.clamp(2.0, 120.0), FS).map_err(|e| e.to_string())?;
    let detected = detect_beats(&rec).iter().map(|p| p.index as u32).collect();
    Ok(Detection {
        truth: truth.iter().map(|&t| t as u32).collect(),
        samples: rec.samples,
        detected,
    })
}
