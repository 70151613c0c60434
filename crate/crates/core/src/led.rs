//! Static LED nonlinearity: a fifth-order polynomial from drive voltage to
//! optical power, with the drive clamped to the forward-voltage range.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LED_FILE_VERSION: u32 = 1;

const DEFAULT_LED: &str = include_str!("../data/led_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedFile {
    pub version: u32,
    pub coefficients: [f64; 6],
    pub bias_voltage: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Voltage to optical power transfer `P(v) = c0 + c1 v + ... + c5 v^5`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedModel {
    coefficients: [f64; 6],
    bias_voltage: f64,
    v_min: f64,
    v_max: f64,
}

impl LedModel {
    /// Builds a model and checks it is non-decreasing and non-negative on a
    /// 1 mV grid over the clamp range.
    pub fn new(coefficients: [f64; 6], bias_voltage: f64, v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(Error::InvalidLedModel(format!(
                "clamp range [{v_min}, {v_max}] is empty"
            )));
        }
        if !(v_min..=v_max).contains(&bias_voltage) {
            return Err(Error::InvalidLedModel(format!(
                "bias {bias_voltage} V outside [{v_min}, {v_max}] V"
            )));
        }
        let model = Self {
            coefficients,
            bias_voltage,
            v_min,
            v_max,
        };
        let steps = ((v_max - v_min) / 1e-3).ceil() as usize;
        let mut prev = model.transfer(v_min);
        if prev < 0.0 {
            return Err(Error::InvalidLedModel(format!("negative at {v_min} V")));
        }
        for i in 1..=steps {
            let v = (v_min + i as f64 * 1e-3).min(v_max);
            let p = model.transfer(v);
            if p < prev {
                return Err(Error::InvalidLedModel(format!("decreasing near {v:.3} V")));
            }
            if p < 0.0 {
                return Err(Error::InvalidLedModel(format!("negative at {v:.3} V")));
            }
            prev = p;
        }
        Ok(model)
    }

    /// Linear LED `P = v` with no clamping and zero bias.
    pub fn identity() -> Self {
        Self {
            coefficients: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            bias_voltage: 0.0,
            v_min: f64::NEG_INFINITY,
            v_max: f64::INFINITY,
        }
    }

    /// The shipped 1 W white LED model, biased at 3.2 V.
    pub fn default_white() -> Self {
        let file: LedFile = serde_json::from_str(DEFAULT_LED).expect("bundled LED file parses");
        Self::from_file_contents(file).expect("bundled LED file is valid")
    }

    pub fn from_file_contents(file: LedFile) -> Result<Self> {
        if file.version != LED_FILE_VERSION {
            return Err(Error::InvalidLedModel(format!(
                "unsupported file version {}",
                file.version
            )));
        }
        Self::new(file.coefficients, file.bias_voltage, file.v_min, file.v_max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_contents(serde_json::from_str(&text)?)
    }

    pub fn to_file_contents(&self) -> Result<LedFile> {
        if !(self.v_min.is_finite() && self.v_max.is_finite()) {
            return Err(Error::InvalidLedModel("unclamped model has no file form".into()));
        }
        Ok(LedFile {
            version: LED_FILE_VERSION,
            coefficients: self.coefficients,
            bias_voltage: self.bias_voltage,
            v_min: self.v_min,
            v_max: self.v_max,
        })
    }

    /// Least-squares fifth-order fit to `(volts, watts)` samples.
    ///
    /// The fit runs in `v - v_mid` to keep the Vandermonde system well
    /// conditioned and is then expanded back to powers of `v`.
    pub fn fit(points: &[(f64, f64)], bias_voltage: f64, v_min: f64, v_max: f64) -> Result<Self> {
        if points.len() < 6 {
            return Err(Error::InvalidLedModel(format!(
                "need at least 6 samples to fit, got {}",
                points.len()
            )));
        }
        let mid = 0.5 * (v_min + v_max);
        let a = DMatrix::from_fn(points.len(), 6, |r, c| (points[r].0 - mid).powi(c as i32));
        let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
        let shifted = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvalidLedModel(e.to_string()))?;
        // sum_k s_k (v - mid)^k = sum_j c_j v^j
        let mut coefficients = [0.0; 6];
        for (k, s) in shifted.iter().enumerate() {
            for (j, c) in coefficients.iter_mut().enumerate().take(k + 1) {
                *c += s * binomial(k, j) as f64 * (-mid).powi((k - j) as i32);
            }
        }
        Self::new(coefficients, bias_voltage, v_min, v_max)
    }

    pub fn coefficients(&self) -> &[f64; 6] {
        &self.coefficients
    }

    pub fn bias_voltage(&self) -> f64 {
        self.bias_voltage
    }

    pub fn clamp_range(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    /// Polynomial value, no clamping.
    pub fn transfer(&self, v: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * v + c)
    }

    /// Small-signal slope `dP/dv`.
    pub fn slope(&self, v: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * v + k as f64 * c)
    }

    pub fn clamps(&self, v: f64) -> bool {
        v < self.v_min || v > self.v_max
    }

    pub fn apply_one(&self, v: f64) -> f64 {
        self.transfer(v.clamp(self.v_min, self.v_max)).max(0.0)
    }

    pub fn apply(&self, drive: &[f64]) -> Vec<f64> {
        drive.iter().map(|&v| self.apply_one(v)).collect()
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Parses the bundled digitized transfer curve (`volts,watts` lines).
pub fn parse_transfer_points(text: &str) -> Result<Vec<(f64, f64)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split(',').map(|s| s.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(v)), Some(Ok(p)), None) => Ok((v, p)),
                _ => Err(Error::InvalidLedModel(format!("bad sample line {l:?}"))),
            }
        })
        .collect()
}

pub const DEFAULT_TRANSFER_POINTS: &str = include_str!("../data/led_transfer_points.csv");

/// RMS of the bipolar waveform an asymmetrically clipped signal came from.
///
/// Clipping a zero-mean symmetric signal at zero keeps half its power, so the
/// bipolar RMS is `sqrt(2)` times the clipped RMS.
pub fn bipolar_rms(clipped: &[f64]) -> f64 {
    let ms = clipped.iter().map(|s| s * s).sum::<f64>() / clipped.len() as f64;
    (2.0 * ms).sqrt()
}

/// Maps a unipolar modem waveform onto LED drive voltages around the bias:
/// `bias + depth * signal / reference`, with `reference` the bipolar RMS of
/// the frame.
pub fn drive_mapping(signal: &[f64], model: &LedModel, modulation_depth: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let reference = bipolar_rms(signal);
    let bias = model.bias_voltage();
    if reference == 0.0 || modulation_depth == 0.0 {
        return Ok(vec![bias; signal.len()]);
    }
    let scale = modulation_depth / reference;
    Ok(signal.iter().map(|s| bias + scale * s).collect())
}
