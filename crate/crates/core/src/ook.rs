//! Baseline on-off keying at the same bit rate. The receiver estimates the
//! channel gain as the ratio of mean received to mean transmitted power over
//! a known training pattern.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OokConfig {
    pub bit_rate: f64,
    pub power_high: f64,
    pub power_low: f64,
    pub training_length: usize,
}

impl Default for OokConfig {
    fn default() -> Self {
        Self {
            bit_rate: 25e6,
            power_high: 5.0,
            power_low: 3.0,
            training_length: 1024,
        }
    }
}

impl OokConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bit_rate > 0.0) {
            return Err(Error::InvalidConfig("bit_rate must be > 0".into()));
        }
        if !(self.power_low >= 0.0 && self.power_high > self.power_low) {
            return Err(Error::InvalidConfig("need power_high > power_low >= 0".into()));
        }
        if self.training_length == 0 {
            return Err(Error::InvalidConfig("training_length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn bit_period(&self) -> f64 {
        1.0 / self.bit_rate
    }

    /// Midpoint slicer for a channel of gain `gain`.
    pub fn decide(&self, sample: f64, gain: f64) -> bool {
        sample > 0.5 * gain * (self.power_high + self.power_low)
    }
}

/// One optical power sample per bit.
pub fn transmit_ook(bits: &[bool], cfg: &OokConfig) -> Result<Vec<f64>> {
    if bits.is_empty() {
        return Err(Error::EmptyFrame);
    }
    Ok(bits
        .iter()
        .map(|&b| if b { cfg.power_high } else { cfg.power_low })
        .collect())
}

/// `mean(rx) / mean(tx)` over the training window.
pub fn estimate_gain_ook(tx_train: &[f64], rx_train: &[f64]) -> Result<f64> {
    if tx_train.len() != rx_train.len() {
        return Err(Error::LengthMismatch(tx_train.len(), rx_train.len()));
    }
    let tx: f64 = tx_train.iter().sum();
    if !(tx > 0.0) {
        return Err(Error::ZeroTrainingPower);
    }
    Ok(rx_train.iter().sum::<f64>() / tx)
}
