//! Asymmetrically clipped optical OFDM.
//!
//! Data symbols ride on the odd subcarriers below Nyquist with their
//! conjugates mirrored above it, so the inverse transform is real. Clipping
//! the negative half of that waveform leaves every odd subcarrier at exactly
//! half its value and dumps all distortion onto the even ones.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qam::Constellation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmConfig {
    pub n_subcarriers: usize,
    pub cp_length: usize,
    pub constellation_size: usize,
    /// bits per second
    pub data_rate: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 512,
            cp_length: 16,
            constellation_size: 32,
            data_rate: 25e6,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_subcarriers;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n_subcarriers must be a power of two >= 8, got {n}"
            )));
        }
        if self.cp_length >= n {
            return Err(Error::InvalidConfig(format!(
                "cp_length {} must be < n_subcarriers {n}",
                self.cp_length
            )));
        }
        if ![4, 16, 32, 64].contains(&self.constellation_size) {
            return Err(Error::InvalidConfig(format!(
                "constellation_size must be 4, 16, 32 or 64, got {}",
                self.constellation_size
            )));
        }
        if !(self.data_rate > 0.0) {
            return Err(Error::InvalidConfig("data_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Data-carrying subcarriers per frame, `N / 4`.
    pub fn data_subcarriers(&self) -> usize {
        self.n_subcarriers / 4
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.constellation_size.trailing_zeros() as usize
    }

    pub fn bits_per_frame(&self) -> usize {
        self.data_subcarriers() * self.bits_per_symbol()
    }

    /// Samples per frame including the cyclic prefix.
    pub fn frame_len(&self) -> usize {
        self.n_subcarriers + self.cp_length
    }

    /// Sample period that delivers `data_rate` with `N/4 log2 M` bits per
    /// `N + cp` samples.
    pub fn sample_period(&self) -> f64 {
        self.bits_per_frame() as f64 / (self.data_rate * self.frame_len() as f64)
    }
}

/// One ACO-OFDM frame at each stage of the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrame {
    /// Hermitian-mapped subcarriers `S`, length `N`.
    pub freq_domain: Vec<Complex64>,
    /// Real inverse transform with cyclic prefix, length `N + cp`.
    pub time_domain: Vec<f64>,
    /// `time_domain` with negative samples set to zero.
    pub clipped: Vec<f64>,
}

/// Places `N/4` symbols on odd subcarriers `1, 3, ..., N/2 - 1` and their
/// conjugates on `N - 1, N - 3, ..., N/2 + 1`. Even subcarriers are zero.
pub fn map_subcarriers(symbols: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if symbols.len() != n / 4 || !n.is_multiple_of(4) {
        return Err(Error::WrongSymbolCount {
            expected: n / 4,
            actual: symbols.len(),
        });
    }
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    for (i, &sym) in symbols.iter().enumerate() {
        let k = 2 * i + 1;
        s[k] = sym;
        s[n - k] = sym.conj();
    }
    Ok(s)
}

/// Per-subcarrier channel estimate and its mean magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierEstimate {
    /// Optical channel gain on each data subcarrier (clipping loss removed).
    pub gains: Vec<Complex64>,
    /// `4/N * sum |gains|`, the estimated channel DC gain.
    pub p_bar: f64,
}

/// ACO-OFDM transmitter and receiver with cached transform plans.
#[derive(Clone)]
pub struct AcoOfdm {
    cfg: OfdmConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    constellation: Constellation,
}

impl std::fmt::Debug for AcoOfdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcoOfdm").field("cfg", &self.cfg).finish()
    }
}

impl AcoOfdm {
    pub fn new(cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(cfg.n_subcarriers),
            inverse: planner.plan_fft_inverse(cfg.n_subcarriers),
            constellation: Constellation::new(cfg.constellation_size)?,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Normalized inverse DFT, `x[n] = 1/N sum S[k] e^{+j2pi kn/N}`.
    pub fn inverse_transform(&self, freq: &[Complex64]) -> Vec<Complex64> {
        let mut buf = freq.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.cfg.n_subcarriers as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Unnormalized forward DFT of a real block.
    pub fn forward_transform(&self, block: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = block.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn transmit(&self, symbols: &[Complex64]) -> Result<OfdmFrame> {
        let n = self.cfg.n_subcarriers;
        let freq_domain = map_subcarriers(symbols, n)?;
        let x: Vec<f64> = self.inverse_transform(&freq_domain).iter().map(|c| c.re).collect();
        let mut time_domain = Vec::with_capacity(self.cfg.frame_len());
        time_domain.extend_from_slice(&x[n - self.cfg.cp_length..]);
        time_domain.extend_from_slice(&x);
        let clipped = time_domain.iter().map(|&v| v.max(0.0)).collect();
        Ok(OfdmFrame {
            freq_domain,
            time_domain,
            clipped,
        })
    }

    /// Drops the prefix and returns the raw odd data subcarriers, before
    /// equalization and before undoing the clipping loss.
    pub fn demodulate(&self, rx_samples: &[f64]) -> Result<Vec<Complex64>> {
        if rx_samples.len() != self.cfg.frame_len() {
            return Err(Error::WrongSampleCount {
                expected: self.cfg.frame_len(),
                actual: rx_samples.len(),
            });
        }
        let spectrum = self.forward_transform(&rx_samples[self.cfg.cp_length..]);
        Ok((0..self.cfg.data_subcarriers()).map(|i| spectrum[2 * i + 1]).collect())
    }

    /// Single-tap equalization of each data subcarrier; `eq` holds channel
    /// gains as returned by [`AcoOfdm::estimate_channel`].
    pub fn receive(&self, rx_samples: &[f64], eq: &[Complex64]) -> Result<Vec<Complex64>> {
        let raw = self.demodulate(rx_samples)?;
        if eq.len() != raw.len() {
            return Err(Error::LengthMismatch(eq.len(), raw.len()));
        }
        raw.iter()
            .zip(eq)
            .enumerate()
            .map(|(i, (&y, &h))| {
                if h == Complex64::new(0.0, 0.0) {
                    Err(Error::UnestimatedSubcarrier(2 * i + 1))
                } else {
                    Ok(2.0 * y / h)
                }
            })
            .collect()
    }

    /// Training-based estimate: each subcarrier's gain is the received value
    /// over half the known training symbol, and `p_bar` their mean magnitude.
    pub fn estimate_channel(&self, training: &[Complex64], received: &[Complex64]) -> Result<SubcarrierEstimate> {
        let expected = self.cfg.data_subcarriers();
        if training.len() != expected {
            return Err(Error::WrongSymbolCount {
                expected,
                actual: training.len(),
            });
        }
        if received.len() != expected {
            return Err(Error::WrongSymbolCount {
                expected,
                actual: received.len(),
            });
        }
        let gains = training
            .iter()
            .zip(received)
            .enumerate()
            .map(|(i, (&t, &r))| {
                if t == Complex64::new(0.0, 0.0) {
                    Err(Error::ZeroTrainingSymbol(i))
                } else {
                    Ok(r / (0.5 * t))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let p_bar = 4.0 / self.cfg.n_subcarriers as f64 * gains.iter().map(|g| g.norm()).sum::<f64>();
        Ok(SubcarrierEstimate { gains, p_bar })
    }
}

pub fn transmit(symbols: &[Complex64], cfg: &OfdmConfig) -> Result<OfdmFrame> {
    AcoOfdm::new(cfg)?.transmit(symbols)
}

pub fn receive(rx_samples: &[f64], cfg: &OfdmConfig, eq: &[Complex64]) -> Result<Vec<Complex64>> {
    AcoOfdm::new(cfg)?.receive(rx_samples, eq)
}

pub fn estimate_channel(training: &[Complex64], received: &[Complex64], cfg: &OfdmConfig) -> Result<SubcarrierEstimate> {
    AcoOfdm::new(cfg)?.estimate_channel(training, received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize) -> OfdmConfig {
        OfdmConfig {
            n_subcarriers: n,
            cp_length: (n / 32).max(2),
            ..Default::default()
        }
    }

    fn random_symbols(modem: &AcoOfdm, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let c = modem.constellation();
        (0..modem.config().data_subcarriers())
            .map(|_| c.point(rng.gen_range(0..c.order())))
            .collect()
    }

    #[test]
    fn smallest_mapping() {
        let a = Complex64::new(1.0, 2.0);
        let b = Complex64::new(-3.0, 0.5);
        let z = Complex64::new(0.0, 0.0);
        let s = map_subcarriers(&[a, b], 8).unwrap();
        assert_eq!(s, vec![z, a, z, b, z, b.conj(), z, a.conj()]);
    }

    #[test]
    fn wrong_length_rejected() {
        let a = Complex64::new(1.0, 0.0);
        assert!(matches!(
            map_subcarriers(&[a; 3], 8),
            Err(Error::WrongSymbolCount { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn default_frame_carries_640_bits() {
        let c = OfdmConfig::default();
        assert_eq!(c.data_subcarriers(), 128);
        assert_eq!(c.bits_per_frame(), 640);
        assert_relative_eq!(c.sample_period(), 48.4848e-9, max_relative = 1e-4);
    }

    #[test]
    fn hermitian_mapping_gives_real_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [8, 64, 512] {
            let modem = AcoOfdm::new(&cfg(n)).unwrap();
            let s = map_subcarriers(&random_symbols(&modem, &mut rng), n).unwrap();
            let x = modem.inverse_transform(&s);
            let rms = (x.iter().map(|c| c.re * c.re).sum::<f64>() / n as f64).sqrt();
            let max_im = x.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
            assert!(max_im < 1e-12 * rms, "n = {n}: {max_im} vs rms {rms}");
        }
    }

    #[test]
    fn zero_symbols_give_zero_frame() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let f = modem.transmit(&[Complex64::new(0.0, 0.0); 128]).unwrap();
        assert!(f.clipped.iter().all(|&v| v == 0.0));
        assert_eq!(f.clipped.len(), 528);
    }

    #[test]
    fn cyclic_prefix_copies_tail() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap();
        assert_eq!(f.time_domain[..16], f.time_domain[512..528]);
        assert!(f.clipped.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn clipping_halves_odd_subcarriers() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let f = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap();
            let spec = modem.forward_transform(&f.clipped[16..]);
            for k in (1..512).step_by(2) {
                let want = 0.5 * f.freq_domain[k];
                assert!((spec[k] - want).norm() <= 1e-9 * want.norm());
            }
        }
    }

    #[test]
    fn clipping_distortion_lives_on_even_subcarriers() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap();
        let mut spec = modem.forward_transform(&f.clipped[16..]);
        for (k, s) in spec.iter_mut().enumerate() {
            *s = if k % 2 == 0 { Complex64::new(0.0, 0.0) } else { 2.0 * *s };
        }
        let rebuilt = modem.inverse_transform(&spec);
        for (r, &x) in rebuilt.iter().zip(&f.time_domain[16..]) {
            assert!((r.re - x).abs() < 1e-12);
        }
    }

    #[test]
    fn about_half_the_samples_are_clipped() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut zeros = 0usize;
        let mut total = 0usize;
        for _ in 0..100 {
            let f = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap();
            zeros += f.clipped[16..].iter().filter(|&&v| v == 0.0).count();
            total += 512;
        }
        let frac = zeros as f64 / total as f64;
        assert!((0.4..=0.6).contains(&frac), "{frac}");
    }

    #[test]
    fn loopback_flat_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [8, 64, 512] {
            let modem = AcoOfdm::new(&cfg(n)).unwrap();
            let syms = random_symbols(&modem, &mut rng);
            let f = modem.transmit(&syms).unwrap();
            let unit = vec![Complex64::new(1.0, 0.0); n / 4];
            let out = modem.receive(&f.clipped, &unit).unwrap();
            for (a, b) in out.iter().zip(&syms) {
                assert!((a - b).norm() < 1e-9);
            }
            let half: Vec<f64> = f.clipped.iter().map(|v| 0.5 * v).collect();
            let eq = vec![Complex64::new(0.5, 0.0); n / 4];
            let out = modem.receive(&half, &eq).unwrap();
            for (a, b) in out.iter().zip(&syms) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_tap_is_unestimated() {
        let modem = AcoOfdm::new(&cfg(8)).unwrap();
        let eq = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(
            modem.receive(&[0.0; 10], &eq),
            Err(Error::UnestimatedSubcarrier(3))
        );
    }

    #[test]
    fn p_bar_is_mean_gain_magnitude() {
        let c = cfg(8);
        let training = [Complex64::new(1.0, 1.0), Complex64::new(-1.0, 1.0)];
        let received = [0.5 * 0.2 * training[0], 0.5 * 0.4 * training[1]];
        let est = estimate_channel(&training, &received, &c).unwrap();
        assert_relative_eq!(est.p_bar, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn p_bar_recovers_flat_gain() {
        let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let syms = random_symbols(&modem, &mut rng);
        let f = modem.transmit(&syms).unwrap();
        let g = 3.7e-6;
        let rx: Vec<f64> = f.clipped.iter().map(|v| g * v).collect();
        let est = modem.estimate_channel(&syms, &modem.demodulate(&rx).unwrap()).unwrap();
        assert_relative_eq!(est.p_bar, g, max_relative = 1e-12);
    }

    #[test]
    fn zero_training_symbol_rejected() {
        let c = cfg(8);
        let training = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(
            estimate_channel(&training, &training, &c),
            Err(Error::ZeroTrainingSymbol(1))
        );
    }

    #[test]
    fn invalid_configs() {
        for c in [
            OfdmConfig { n_subcarriers: 4, ..Default::default() },
            OfdmConfig { n_subcarriers: 100, ..Default::default() },
            OfdmConfig { cp_length: 512, ..Default::default() },
            OfdmConfig { constellation_size: 8, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
