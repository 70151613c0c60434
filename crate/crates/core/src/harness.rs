//! End-to-end positioning experiment.
//!
//! For every receiver position on a grid, each LED transmits in its TDM slot
//! through the multipath channel, the receiver estimates that LED's channel
//! gain, and the four gains are turned into a position. ACO-OFDM and OOK
//! share the same channel realizations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoofdm::{AcoOfdm, OfdmConfig, OfdmFrame};
use crate::cache::{scene_hash, CacheKey, IrCache};
use crate::channel::{fine_resolution, ChannelSimulator, ImpulseResponse};
use crate::error::{Error, Result};
use crate::led::{drive_mapping, LedFile, LedModel};
use crate::ledid;
use crate::ook::{estimate_gain_ook, transmit_ook, OokConfig};
use crate::positioning::{
    estimate_distance, horizontal_range, laterate, Anchor, ChannelEstimate, LinkParams, PositionEstimate,
};
use crate::scene::{default_transmitters, ReceiverSpec, SceneConfig, TdmSchedule, TransmitterSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Ofdm,
    Ook,
}

impl Modulation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modulation::Ofdm => "ofdm",
            Modulation::Ook => "ook",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedSettings {
    /// Transfer curve; the bundled white LED when absent.
    #[serde(default)]
    pub model: Option<LedFile>,
    /// Peak drive swing per unit bipolar RMS, volts.
    pub modulation_depth: f64,
}

impl Default for LedSettings {
    fn default() -> Self {
        Self {
            model: None,
            modulation_depth: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub transmitters: Vec<TransmitterSpec>,
    /// Receiver optics and height; its x/y are replaced by each grid point.
    pub receiver: ReceiverSpec,
    pub schedule: TdmSchedule,
    pub ofdm: OfdmConfig,
    pub ook: OokConfig,
    pub led: LedSettings,
    pub led_nonlinearity: bool,
    pub grid_step: f64,
    /// Grid points closer than this to a wall are moved inward by it.
    pub boundary_inset: f64,
    pub max_bounces: usize,
    pub modulations: Vec<Modulation>,
    pub rng_seed: u64,
    /// Training frames per slot whose estimates are averaged.
    pub training_frames: usize,
    /// Standard deviation of additive white Gaussian noise on received
    /// samples (same units as received optical power); 0 disables it.
    pub noise_std: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let transmitters = default_transmitters();
        Self {
            scene: SceneConfig::default(),
            schedule: TdmSchedule::round_robin(&transmitters),
            transmitters,
            receiver: ReceiverSpec::default(),
            ofdm: OfdmConfig::default(),
            ook: OokConfig::default(),
            led: LedSettings::default(),
            led_nonlinearity: true,
            grid_step: 0.1,
            boundary_inset: 0.05,
            max_bounces: 3,
            modulations: vec![Modulation::Ofdm, Modulation::Ook],
            rng_seed: 1,
            training_frames: 1,
            noise_std: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.receiver.validate()?;
        self.ofdm.validate()?;
        self.ook.validate()?;
        if self.transmitters.len() < 3 {
            return Err(Error::InvalidConfig("need at least 3 transmitters".into()));
        }
        for tx in &self.transmitters {
            tx.validate()?;
            if !self.scene.contains_xy(tx.position.x, tx.position.y) {
                return Err(Error::InvalidConfig(format!("transmitter {} is outside the room", tx.id)));
            }
            if !(tx.position.z > self.receiver.position.z && tx.position.z <= self.scene.room_height) {
                return Err(Error::InvalidConfig(format!(
                    "transmitter {} must hang between the receiver plane and the ceiling",
                    tx.id
                )));
            }
        }
        self.schedule.validate(&self.transmitters)?;
        if !(self.grid_step > 0.0) {
            return Err(Error::InvalidConfig("grid_step must be > 0".into()));
        }
        let half = 0.5 * self.scene.room_length.min(self.scene.room_width);
        if !(0.0..half).contains(&self.boundary_inset) {
            return Err(Error::InvalidConfig("boundary_inset must be in [0, half the room)".into()));
        }
        if self.max_bounces > 3 {
            return Err(Error::InvalidConfig("max_bounces must be in 0..=3".into()));
        }
        if !(self.led.modulation_depth >= 0.0) {
            return Err(Error::InvalidConfig("modulation_depth must be >= 0".into()));
        }
        if self.training_frames == 0 {
            return Err(Error::InvalidConfig("training_frames must be >= 1".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        let mut seen = self.modulations.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modulations.len() {
            return Err(Error::InvalidConfig("modulations listed twice".into()));
        }
        if let Some(model) = &self.led.model {
            LedModel::from_file_contents(model.clone())?;
        }
        Ok(())
    }

    /// Grid coordinates along x and y, `0, step, ..., L`.
    pub fn grid_axes(&self) -> (Vec<f64>, Vec<f64>) {
        let axis = |len: f64| {
            let n = (len / self.grid_step + 1e-9).floor() as usize;
            (0..=n).map(|i| i as f64 * self.grid_step).collect::<Vec<_>>()
        };
        (axis(self.scene.room_length), axis(self.scene.room_width))
    }

    /// Moves a point at least `boundary_inset` away from the walls.
    pub fn inset(&self, x: f64, y: f64) -> (f64, f64) {
        let d = self.boundary_inset;
        (
            x.clamp(d, self.scene.room_length - d),
            y.clamp(d, self.scene.room_width - d),
        )
    }

    /// Corner, edge and centre probe positions.
    pub fn probes(&self) -> Probes {
        let (l, w) = (self.scene.room_length, self.scene.room_width);
        Probes {
            corner: self.inset(0.0, 0.0),
            edge: self.inset(0.5 * l, 0.0),
            center: (0.5 * l, 0.5 * w),
        }
    }

    /// Bounding rectangle of the LED layout.
    pub fn led_rectangle(&self) -> (f64, f64, f64, f64) {
        let xs = self.transmitters.iter().map(|t| t.position.x);
        let ys = self.transmitters.iter().map(|t| t.position.y);
        (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probes {
    pub corner: (f64, f64),
    pub edge: (f64, f64),
    pub center: (f64, f64),
}

/// Conditions recorded against a point instead of aborting it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Flag {
    /// The grid point was moved off a wall.
    Inset,
    OutsideFov(u8),
    RangeClamped(u8),
    IdDecodeFailed(u8),
    EstimationFailed(u8),
    LaterationFailed,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::Inset => write!(f, "inset"),
            Flag::OutsideFov(id) => write!(f, "fov:{id}"),
            Flag::RangeClamped(id) => write!(f, "clamp:{id}"),
            Flag::IdDecodeFailed(id) => write!(f, "id:{id}"),
            Flag::EstimationFailed(id) => write!(f, "est:{id}"),
            Flag::LaterationFailed => write!(f, "lat"),
        }
    }
}

pub fn format_flags(flags: &[Flag]) -> String {
    flags.iter().map(Flag::to_string).collect::<Vec<_>>().join(";")
}

/// Outcome of one modulation at one receiver position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub modulation: Modulation,
    pub x_true: f64,
    pub y_true: f64,
    pub x_est: f64,
    pub y_est: f64,
    pub error: f64,
    pub flags: Vec<Flag>,
    pub estimates: Vec<ChannelEstimate>,
    pub position: Option<PositionEstimate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointOutcome {
    pub ofdm: Option<PointRecord>,
    pub ook: Option<PointRecord>,
}

impl PointOutcome {
    pub fn get(&self, m: Modulation) -> Option<&PointRecord> {
        match m {
            Modulation::Ofdm => self.ofdm.as_ref(),
            Modulation::Ook => self.ook.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rms_whole: f64,
    pub rms_rect: f64,
    pub corner_err: f64,
    pub edge_err: f64,
    pub center_err: f64,
    pub max_err: f64,
    pub points: usize,
    pub rect_points: usize,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub modulation: Modulation,
    /// Row-major: y outer, x inner.
    pub records: Vec<PointRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub grid_step: f64,
    pub grid_shape: (usize, usize),
    pub boundary_inset: f64,
    pub probes: Probes,
    pub led_rectangle: (f64, f64, f64, f64),
    pub max_bounces: usize,
    pub led_nonlinearity: bool,
    pub rng_seed: u64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub maps: Vec<ErrorMap>,
    pub metadata: RunMetadata,
}

impl GridResult {
    pub fn map(&self, m: Modulation) -> Option<&ErrorMap> {
        self.maps.iter().find(|e| e.modulation == m)
    }
}

/// A transmitted frame as it leaves the LED.
#[derive(Debug, Clone)]
struct EmittedFrame {
    frame: OfdmFrame,
    optical: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LedSlot {
    tx: TransmitterSpec,
    params: LinkParams,
    ofdm_data: EmittedFrame,
    ook_data: Vec<f64>,
}

/// Immutable per-run state shared by all workers.
pub struct Experiment {
    cfg: ExperimentConfig,
    sim: ChannelSimulator,
    modem: AcoOfdm,
    led: LedModel,
    ofdm_training: EmittedFrame,
    /// Training as emitted, in the units `estimate_channel` divides by.
    ofdm_reference: Vec<Complex64>,
    ook_training: Vec<f64>,
    slots: Vec<LedSlot>,
    cache: Option<IrCache>,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment").field("cfg", &self.cfg).finish()
    }
}

fn seeded(seed: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = rng.gen::<u64>();
    for &v in stream {
        s = s.rotate_left(17) ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    ChaCha8Rng::seed_from_u64(s)
}

const STREAM_TRAINING: u64 = 1;
const STREAM_PAYLOAD: u64 = 2;
const STREAM_NOISE: u64 = 3;

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let ordered: Vec<TransmitterSpec> = cfg
            .schedule
            .order
            .iter()
            .map(|id| cfg.transmitters.iter().find(|t| t.id == *id).cloned().unwrap())
            .collect();
        let sim = ChannelSimulator::new(&cfg.scene, &ordered, cfg.max_bounces)?;
        let modem = AcoOfdm::new(&cfg.ofdm)?;
        let led = if cfg.led_nonlinearity {
            match &cfg.led.model {
                Some(file) => LedModel::from_file_contents(file.clone())?,
                None => LedModel::default_white(),
            }
        } else {
            LedModel::identity()
        };
        let constellation = modem.constellation().clone();

        let mut rng = seeded(cfg.rng_seed, &[STREAM_TRAINING]);
        let training_symbols: Vec<Complex64> = (0..cfg.ofdm.data_subcarriers())
            .map(|_| constellation.point(rng.gen_range(0..constellation.order())))
            .collect();
        let ofdm_training = emit(&modem, &led, cfg.led.modulation_depth, &training_symbols)?;
        let spectrum = modem.forward_transform(&ofdm_training.optical[cfg.ofdm.cp_length..]);
        let ofdm_reference: Vec<Complex64> = (0..cfg.ofdm.data_subcarriers())
            .map(|i| 2.0 * spectrum[2 * i + 1])
            .collect();
        let ook_bits: Vec<bool> = (0..cfg.ook.training_length).map(|_| rng.gen()).collect();
        let ook_training = transmit_ook(&ook_bits, &cfg.ook)?;

        let rx = &cfg.receiver;
        let slots = ordered
            .iter()
            .map(|tx| {
                let mut rng = seeded(cfg.rng_seed, &[STREAM_PAYLOAD, tx.id as u64]);
                let id_bits = ledid::encode(tx.id, tx.position.x, tx.position.y);
                let mut bits = id_bits.clone();
                bits.extend((id_bits.len()..cfg.ofdm.bits_per_frame()).map(|_| rng.gen::<bool>()));
                let symbols = constellation.modulate(&bits)?;
                let ofdm_data = emit(&modem, &led, cfg.led.modulation_depth, &symbols)?;
                let mut ook_bits = id_bits;
                ook_bits.extend((0..cfg.ook.training_length).map(|_| rng.gen::<bool>()));
                Ok(LedSlot {
                    params: LinkParams::from_specs(tx, rx),
                    tx: tx.clone(),
                    ofdm_data,
                    ook_data: transmit_ook(&ook_bits, &cfg.ook)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            sim,
            modem,
            led,
            ofdm_training,
            ofdm_reference,
            ook_training,
            slots,
            cache: None,
        })
    }

    /// Routes impulse responses through `cache`.
    pub fn with_cache(mut self, cache: IrCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn cache(&self) -> Option<&IrCache> {
        self.cache.as_ref()
    }

    pub fn scene_hash(&self) -> String {
        scene_hash(&self.cfg.scene, &self.cfg.transmitters, &self.cfg.receiver)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn led(&self) -> &LedModel {
        &self.led
    }

    /// Per-LED impulse responses at the OFDM sample period and the OOK bit
    /// period, in schedule order.
    pub fn impulse_responses(&self, rx: &ReceiverSpec) -> Result<Vec<(ImpulseResponse, ImpulseResponse)>> {
        let t_ofdm = self.cfg.ofdm.sample_period();
        let t_ook = self.cfg.ook.bit_period();
        let keys: Vec<(CacheKey, CacheKey)> = self
            .slots
            .iter()
            .map(|s| {
                (
                    CacheKey::new(s.tx.id, rx, self.cfg.max_bounces, t_ofdm),
                    CacheKey::new(s.tx.id, rx, self.cfg.max_bounces, t_ook),
                )
            })
            .collect();
        if let Some(cache) = &self.cache {
            let hits: Option<Vec<_>> = keys
                .iter()
                .map(|(a, b)| Some((cache.get(a)?, cache.get(b)?)))
                .collect();
            if let Some(hits) = hits {
                return Ok(hits);
            }
        }
        let resolution = fine_resolution(t_ofdm.min(t_ook))?;
        let irs: Vec<_> = self
            .sim
            .delay_profiles(rx, resolution)?
            .into_iter()
            .map(|p| (p.binned(t_ofdm), p.binned(t_ook)))
            .collect();
        if let Some(cache) = &self.cache {
            for ((ka, kb), (a, b)) in keys.iter().zip(&irs) {
                cache.insert(*ka, a.clone());
                cache.insert(*kb, b.clone());
            }
        }
        Ok(irs)
    }

    /// Runs every enabled modulation at `(x, y)`; `index` selects the noise stream.
    pub fn run_point(&self, x: f64, y: f64, index: u64) -> Result<PointOutcome> {
        let (xe, ye) = self.cfg.inset(x, y);
        let moved = (xe, ye) != (x, y);
        let rx = self.cfg.receiver.at(xe, ye);
        let irs = self.impulse_responses(&rx)?;
        let mut out = PointOutcome::default();
        for &m in &self.cfg.modulations {
            let mut flags = Vec::new();
            if moved {
                flags.push(Flag::Inset);
            }
            let mut estimates = Vec::with_capacity(self.slots.len());
            for (k, (slot, (ir_ofdm, ir_ook))) in self.slots.iter().zip(&irs).enumerate() {
                let mut rng = seeded(self.cfg.rng_seed, &[STREAM_NOISE, index, k as u64, m as u64]);
                let res = match m {
                    Modulation::Ofdm => self.ofdm_slot(slot, ir_ofdm, &mut rng),
                    Modulation::Ook => self.ook_slot(slot, ir_ook, &mut rng),
                };
                match res {
                    Ok((est, decoded)) => {
                        if !decoded {
                            flags.push(Flag::IdDecodeFailed(slot.tx.id));
                        }
                        estimates.push(est);
                    }
                    Err(_) => flags.push(Flag::EstimationFailed(slot.tx.id)),
                }
            }
            let record = self.locate(m, xe, ye, estimates, flags);
            match m {
                Modulation::Ofdm => out.ofdm = Some(record),
                Modulation::Ook => out.ook = Some(record),
            }
        }
        Ok(out)
    }

    fn add_noise(&self, samples: &mut [f64], rng: &mut ChaCha8Rng) {
        if self.cfg.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.cfg.noise_std).expect("validated std");
            samples.iter_mut().for_each(|s| *s += normal.sample(rng));
        }
    }

    /// Decoded ID coordinates, or the slot owner's when the ID is unreadable.
    /// A decode that passes the checksum but lands outside the room is
    /// treated as unreadable.
    fn coords_from_id(&self, slot: &LedSlot, bits: &[bool]) -> ((f64, f64), bool) {
        match ledid::decode(bits) {
            Some((id, x, y)) if id == slot.tx.id && self.cfg.scene.contains_xy(x, y) => ((x, y), true),
            _ => ((slot.tx.position.x, slot.tx.position.y), false),
        }
    }

    fn ofdm_slot(&self, slot: &LedSlot, ir: &ImpulseResponse, rng: &mut ChaCha8Rng) -> Result<(ChannelEstimate, bool)> {
        let frame_len = self.cfg.ofdm.frame_len();
        let k = self.cfg.training_frames;
        let mut stream = Vec::with_capacity(frame_len * (k + 1));
        for _ in 0..k {
            stream.extend_from_slice(&self.ofdm_training.optical);
        }
        stream.extend_from_slice(&slot.ofdm_data.optical);
        let mut rx = ir.convolve(&stream);
        self.add_noise(&mut rx, rng);

        let mut gains = vec![Complex64::new(0.0, 0.0); self.cfg.ofdm.data_subcarriers()];
        let mut p_bar = 0.0;
        for f in 0..k {
            let raw = self.modem.demodulate(&rx[f * frame_len..(f + 1) * frame_len])?;
            let est = self.modem.estimate_channel(&self.ofdm_reference, &raw)?;
            gains.iter_mut().zip(&est.gains).for_each(|(g, e)| *g += e / k as f64);
            p_bar += est.p_bar / k as f64;
        }

        let equalized = self.modem.receive(&rx[k * frame_len..], &gains)?;
        // blind gain control: the data frame's drive scaling is not known
        let energy = equalized.iter().map(|s| s.norm_sqr()).sum::<f64>() / equalized.len() as f64;
        let scale = if energy > 0.0 { energy.sqrt() } else { 1.0 };
        let symbols: Vec<Complex64> = equalized.iter().map(|s| s / scale).collect();
        let bits = self.modem.constellation().demodulate(&symbols);
        let (tx_coords, decoded) = self.coords_from_id(slot, &bits);
        Ok((
            ChannelEstimate {
                tx_id: slot.tx.id,
                tx_coords,
                p_bar,
            },
            decoded,
        ))
    }

    fn ook_slot(&self, slot: &LedSlot, ir: &ImpulseResponse, rng: &mut ChaCha8Rng) -> Result<(ChannelEstimate, bool)> {
        let n = self.ook_training.len();
        let mut stream = self.ook_training.clone();
        stream.extend_from_slice(&slot.ook_data);
        let mut rx = ir.convolve(&stream);
        self.add_noise(&mut rx, rng);
        let gain = estimate_gain_ook(&self.ook_training, &rx[..n])?;
        let bits: Vec<bool> = rx[n..n + ledid::LED_ID_BITS]
            .iter()
            .map(|&s| self.cfg.ook.decide(s, gain))
            .collect();
        let (tx_coords, decoded) = self.coords_from_id(slot, &bits);
        Ok((
            ChannelEstimate {
                tx_id: slot.tx.id,
                tx_coords,
                p_bar: gain,
            },
            decoded,
        ))
    }

    fn locate(&self, m: Modulation, x: f64, y: f64, estimates: Vec<ChannelEstimate>, mut flags: Vec<Flag>) -> PointRecord {
        let mut anchors = Vec::with_capacity(estimates.len());
        for est in &estimates {
            let params = self
                .slots
                .iter()
                .find(|s| s.tx.id == est.tx_id)
                .map(|s| s.params)
                .expect("estimate belongs to a slot");
            match estimate_distance(est, &params) {
                Ok(range) => {
                    if range.outside_fov {
                        flags.push(Flag::OutsideFov(est.tx_id));
                    }
                    let hr = horizontal_range(range.d, params.tx_height, params.rx_height);
                    if hr.clamped {
                        flags.push(Flag::RangeClamped(est.tx_id));
                    }
                    anchors.push(Anchor {
                        id: est.tx_id,
                        x: est.tx_coords.0,
                        y: est.tx_coords.1,
                        r: hr.r,
                    });
                }
                Err(_) => flags.push(Flag::EstimationFailed(est.tx_id)),
            }
        }
        let position = match laterate(&anchors) {
            Ok(p) => Some(p),
            Err(_) => {
                flags.push(Flag::LaterationFailed);
                None
            }
        };
        let (x_est, y_est) = position.as_ref().map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
        flags.sort();
        PointRecord {
            modulation: m,
            x_true: x,
            y_true: y,
            x_est,
            y_est,
            error: (x_est - x).hypot(y_est - y),
            flags,
            estimates,
            position,
        }
    }

    /// Evaluates the whole grid on `workers` threads. Output order and
    /// values do not depend on the worker count.
    pub fn run_grid(&self, workers: usize) -> Result<GridResult> {
        let (xs, ys) = self.cfg.grid_axes();
        let points: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let outcomes: Vec<PointOutcome> = pool.install(|| {
            points
                .par_iter()
                .enumerate()
                .map(|(i, &(x, y))| self.run_point(x, y, i as u64))
                .collect::<Result<Vec<_>>>()
        })?;
        let probes = self.cfg.probes();
        let probe_index = points.len() as u64;
        let probe_outcomes = [probes.corner, probes.edge, probes.center]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| self.run_point(x, y, probe_index + i as u64))
            .collect::<Result<Vec<_>>>()?;
        let rect = self.cfg.led_rectangle();
        let maps = self
            .cfg
            .modulations
            .iter()
            .map(|&m| {
                let records: Vec<PointRecord> = outcomes.iter().filter_map(|o| o.get(m).cloned()).collect();
                let probe_err = |i: usize| probe_outcomes[i].get(m).map_or(f64::NAN, |r| r.error);
                let summary = summarize(&records, rect, [probe_err(0), probe_err(1), probe_err(2)]);
                ErrorMap {
                    modulation: m,
                    records,
                    summary,
                }
            })
            .collect();
        Ok(GridResult {
            maps,
            metadata: RunMetadata {
                grid_step: self.cfg.grid_step,
                grid_shape: (xs.len(), ys.len()),
                boundary_inset: self.cfg.boundary_inset,
                probes,
                led_rectangle: rect,
                max_bounces: self.cfg.max_bounces,
                led_nonlinearity: self.cfg.led_nonlinearity,
                rng_seed: self.cfg.rng_seed,
                noise_std: self.cfg.noise_std,
            },
        })
    }

    /// Writes the training frame and each LED's data frame as JSON.
    pub fn dump_frames(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut write = |name: String, f: &EmittedFrame| -> Result<()> {
            let path = dir.join(name);
            let body = serde_json::json!({
                "freq_domain": f.frame.freq_domain.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                "time_domain": f.frame.time_domain,
                "clipped": f.frame.clipped,
                "optical": f.optical,
            });
            fs::write(&path, serde_json::to_string_pretty(&body).expect("frame serializes"))?;
            written.push(path);
            Ok(())
        };
        write("training.json".into(), &self.ofdm_training)?;
        for s in &self.slots {
            write(format!("led{}_data.json", s.tx.id), &s.ofdm_data)?;
        }
        Ok(written)
    }
}

fn emit(modem: &AcoOfdm, led: &LedModel, depth: f64, symbols: &[Complex64]) -> Result<EmittedFrame> {
    let frame = modem.transmit(symbols)?;
    let drive = drive_mapping(&frame.clipped, led, depth)?;
    Ok(EmittedFrame {
        optical: led.apply(&drive),
        frame,
    })
}

fn rms(errors: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = errors.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        (f64::NAN, 0)
    } else {
        ((sum / n as f64).sqrt(), n)
    }
}

fn summarize(records: &[PointRecord], rect: (f64, f64, f64, f64), probes: [f64; 3]) -> Summary {
    let finite = || records.iter().filter(|r| r.error.is_finite());
    let (rms_whole, points) = rms(finite().map(|r| r.error));
    let (x0, x1, y0, y1) = rect;
    let (rms_rect, rect_points) = rms(
        finite()
            .filter(|r| r.x_true > x0 && r.x_true < x1 && r.y_true > y0 && r.y_true < y1)
            .map(|r| r.error),
    );
    Summary {
        rms_whole,
        rms_rect,
        corner_err: probes[0],
        edge_err: probes[1],
        center_err: probes[2],
        max_err: finite().map(|r| r.error).fold(0.0, f64::max),
        points,
        rect_points,
        failed_points: records.len() - points,
    }
}

/// Builds the experiment and evaluates one receiver position.
pub fn run_point(cfg: &ExperimentConfig, pos: (f64, f64)) -> Result<PointOutcome> {
    if !cfg.scene.contains_xy(pos.0, pos.1) {
        return Err(Error::InvalidConfig(format!("({}, {}) is outside the room", pos.0, pos.1)));
    }
    Experiment::new(cfg)?.run_point(pos.0, pos.1, 0)
}

pub fn run_grid(cfg: &ExperimentConfig, workers: usize) -> Result<GridResult> {
    Experiment::new(cfg)?.run_grid(workers)
}

pub const HISTOGRAM_BIN: f64 = 0.05;
pub const HISTOGRAM_MAX: f64 = 3.0;

/// Counts per 0.05 m bin over [0, 3) m; the last element counts errors >= 3 m.
pub fn histogram(records: &[PointRecord]) -> Vec<usize> {
    let nbins = (HISTOGRAM_MAX / HISTOGRAM_BIN).round() as usize;
    let mut counts = vec![0usize; nbins + 1];
    for r in records.iter().filter(|r| r.error.is_finite()) {
        let i = ((r.error / HISTOGRAM_BIN).floor() as usize).min(nbins);
        counts[i] += 1;
    }
    counts
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    modulation: &'a str,
    #[serde(flatten)]
    summary: &'a Summary,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    version: u32,
    metadata: Option<&'a RunMetadata>,
    rows: Vec<SummaryRow<'a>>,
}

pub const ERRORS_CSV: &str = "errors.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const HISTOGRAM_CSV: &str = "histogram.csv";

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9}")
    } else {
        "nan".into()
    }
}

/// Writes `errors.csv`, `summary.json` and `histogram.csv` under `out_dir`.
pub fn emit_results(maps: &[ErrorMap], metadata: Option<&RunMetadata>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("modulation,x_true,y_true,x_est,y_est,error_m,flags\n");
    for map in maps {
        for r in &map.records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                map.modulation,
                fmt_f(r.x_true),
                fmt_f(r.y_true),
                fmt_f(r.x_est),
                fmt_f(r.y_est),
                fmt_f(r.error),
                format_flags(&r.flags)
            ));
        }
    }
    let mut hist = String::from("modulation,bin_lo_m,bin_hi_m,count\n");
    for map in maps {
        let counts = histogram(&map.records);
        let n = counts.len() - 1;
        for (i, c) in counts.iter().enumerate() {
            let lo = i as f64 * HISTOGRAM_BIN;
            let hi = if i == n { "inf".to_string() } else { format!("{:.2}", lo + HISTOGRAM_BIN) };
            hist.push_str(&format!("{},{:.2},{},{}\n", map.modulation, lo, hi, c));
        }
    }
    let summary = SummaryFile {
        version: 1,
        metadata,
        rows: maps
            .iter()
            .map(|m| SummaryRow {
                modulation: m.modulation.as_str(),
                summary: &m.summary,
            })
            .collect(),
    };
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";

    let paths = [
        (out_dir.join(ERRORS_CSV), csv),
        (out_dir.join(SUMMARY_JSON), summary_text),
        (out_dir.join(HISTOGRAM_CSV), hist),
    ];
    for (p, body) in &paths {
        fs::write(p, body)?;
    }
    Ok(paths.into_iter().map(|(p, _)| p).collect())
}
