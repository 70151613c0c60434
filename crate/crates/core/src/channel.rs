//! Optical channel between a ceiling LED and the photodiode.
//!
//! The direct path uses the generalized Lambertian link budget. Diffuse
//! reflections are integrated deterministically over a mesh of square surface
//! elements: each element collects power from the previous bounce and
//! re-emits `rho` of it as an order-1 Lambertian source. Element illumination
//! does not depend on the receiver, so [`ChannelSimulator`] computes it once
//! per LED and reuses it for every receiver position.
//!
//! Each element keeps its received power together with the power-weighted
//! mean arrival time of that power. Arrivals at the receiver are accumulated
//! on a fine delay grid ([`DelayProfile`]) and then re-binned to the sample
//! period of whichever modem consumes the response ([`ImpulseResponse`]).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{link_geometry, ReceiverSpec, SceneConfig, TransmitterSpec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Accumulation resolution of [`DelayProfile`], seconds.
pub const FINE_BIN: f64 = 0.2e-9;

/// Compound parabolic concentrator gain `n^2 / sin^2(fov)` inside the field
/// of view and zero outside. Angles in radians.
pub fn concentrator_gain(psi: f64, fov: f64, n: f64) -> Result<f64> {
    if !(fov > 0.0) {
        return Err(Error::NonPositiveFov(fov));
    }
    if psi > fov {
        return Ok(0.0);
    }
    let s = fov.sin();
    Ok(n * n / (s * s))
}

/// Lambertian order from the half-power semi-angle (degrees off boresight).
pub fn lambertian_order(half_power_angle: f64) -> Result<f64> {
    if !(half_power_angle > 0.0 && half_power_angle < 90.0) {
        return Err(Error::UndefinedLambertianOrder(half_power_angle));
    }
    Ok(-std::f64::consts::LN_2 / half_power_angle.to_radians().cos().ln())
}

/// Receiver-side factor `A * T_s * g(psi) * cos(psi)`, zero outside the FOV.
fn receiver_factor(rx: &ReceiverSpec, cos_psi: f64) -> f64 {
    if cos_psi <= 0.0 {
        return 0.0;
    }
    let psi = cos_psi.min(1.0).acos();
    // fov is validated > 0, so the gain call cannot fail here
    let g = concentrator_gain(psi, rx.fov_rad(), rx.refractive_index).unwrap_or(0.0);
    rx.area * rx.optical_filter_gain * g * cos_psi
}

/// Direct-path DC gain of a transmitter-receiver link.
pub fn los_dc_gain(tx: &TransmitterSpec, rx: &ReceiverSpec) -> Result<f64> {
    let geo = link_geometry(tx, rx)?;
    let m = tx.lambertian_order;
    Ok((m + 1.0) * geo.cos_phi.powf(m) * receiver_factor(rx, geo.cos_psi)
        / (2.0 * PI * geo.d * geo.d))
}

/// Channel power gains binned in delay.
///
/// Bin `i` covers delays `t0 + i * bin_width`; `t0` is the first arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub bin_width: f64,
    pub t0: f64,
    pub gains: Vec<f64>,
    pub los_gain: f64,
    pub total_gain: f64,
}

impl ImpulseResponse {
    /// A single-tap channel with the given gain.
    pub fn flat(gain: f64, bin_width: f64) -> Self {
        Self {
            bin_width,
            t0: 0.0,
            gains: vec![gain],
            los_gain: gain,
            total_gain: gain,
        }
    }

    /// Discrete transfer function at bin `k` of an `n`-point DFT of the taps.
    pub fn transfer(&self, k: usize, n: usize) -> num_complex::Complex64 {
        self.gains
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let w = -2.0 * PI * (k * i) as f64 / n as f64;
                num_complex::Complex64::from_polar(g, w)
            })
            .sum()
    }

    /// Linear convolution of `signal` with the taps, truncated to `signal.len()`.
    pub fn convolve(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; signal.len()];
        for (i, &g) in self.gains.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (o, &s) in out[i.min(signal.len())..].iter_mut().zip(signal) {
                *o += g * s;
            }
        }
        out
    }
}

/// Collapses an impulse response to its DC gain.
pub fn channel_dc_gain(ir: &ImpulseResponse) -> f64 {
    ir.total_gain
}

/// Received power per fine delay bin, in absolute time from emission.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub resolution: f64,
    pub bins: Vec<f64>,
    pub los_gain: f64,
    pub los_delay: f64,
}

impl DelayProfile {
    fn new(resolution: f64) -> Self {
        Self {
            resolution,
            bins: Vec::new(),
            los_gain: 0.0,
            los_delay: 0.0,
        }
    }

    fn add(&mut self, delay: f64, gain: f64) {
        if gain <= 0.0 {
            return;
        }
        let idx = (delay / self.resolution) as usize;
        if idx >= self.bins.len() {
            self.bins.resize(idx + 1, 0.0);
        }
        self.bins[idx] += gain;
    }

    pub fn total_gain(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Power arriving within `window` seconds of the first arrival.
    pub fn gain_within(&self, window: f64) -> f64 {
        let Some(first) = self.bins.iter().position(|&g| g > 0.0) else {
            return 0.0;
        };
        let last = first + (window / self.resolution).floor() as usize;
        self.bins[first..=last.min(self.bins.len() - 1)].iter().sum()
    }

    /// Re-bins to `bin_width` starting at the first arrival.
    ///
    /// A zero-order-hold transmitter and an integrate-and-dump receiver of
    /// width `bin_width` turn an arrival at fractional tap position `u` into
    /// weights `1 - frac(u)` and `frac(u)` on the two neighbouring taps, so
    /// each fine bin is split that way. The sum of gains is preserved.
    pub fn binned(&self, bin_width: f64) -> ImpulseResponse {
        let Some(first) = self.bins.iter().position(|&g| g > 0.0) else {
            return ImpulseResponse {
                bin_width,
                t0: self.los_delay,
                gains: vec![0.0],
                los_gain: 0.0,
                total_gain: 0.0,
            };
        };
        let t0 = first as f64 * self.resolution;
        let mut gains: Vec<f64> = Vec::new();
        for (i, &g) in self.bins.iter().enumerate().skip(first) {
            if g == 0.0 {
                continue;
            }
            let u = (i - first) as f64 * self.resolution / bin_width;
            let tap = u.floor() as usize;
            let frac = u - tap as f64;
            if gains.len() < tap + 2 {
                gains.resize(tap + 2, 0.0);
            }
            gains[tap] += g * (1.0 - frac);
            gains[tap + 1] += g * frac;
        }
        while gains.len() > 1 && *gains.last().unwrap() == 0.0 {
            gains.pop();
        }
        let total_gain = gains.iter().sum();
        ImpulseResponse {
            bin_width,
            t0,
            gains,
            los_gain: self.los_gain,
            total_gain,
        }
    }
}

/// Room surfaces; elements on the same surface never exchange power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Floor,
    Ceiling,
    WallX0,
    WallX1,
    WallY0,
    WallY1,
}

/// Reflecting elements stored column-wise.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pos: Vec<[f64; 3]>,
    normal: Vec<[f64; 3]>,
    area: Vec<f64>,
    rho: Vec<f64>,
    /// `spans[s]` is the index range of surface `s`, in element order.
    spans: Vec<std::ops::Range<usize>>,
}

impl SurfaceMesh {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        scene.validate()?;
        let pitch = scene.surface_element_size;
        for dim in [scene.room_length, scene.room_width, scene.room_height] {
            if pitch > dim {
                return Err(Error::PitchTooLarge {
                    pitch,
                    dimension: dim,
                });
            }
        }
        let (l, w, h) = (scene.room_length, scene.room_width, scene.room_height);
        let mut mesh = SurfaceMesh {
            pos: Vec::new(),
            normal: Vec::new(),
            area: Vec::new(),
            rho: Vec::new(),
            spans: Vec::new(),
        };
        let surfaces = [
            (Surface::Floor, scene.rho_floor),
            (Surface::Ceiling, scene.rho_ceiling),
            (Surface::WallX0, scene.rho_wall),
            (Surface::WallX1, scene.rho_wall),
            (Surface::WallY0, scene.rho_wall),
            (Surface::WallY1, scene.rho_wall),
        ];
        for (surface, rho) in surfaces {
            // (extent along u, extent along v, point(u, v), inward normal)
            let (eu, ev): (f64, f64) = match surface {
                Surface::Floor | Surface::Ceiling => (l, w),
                Surface::WallX0 | Surface::WallX1 => (w, h),
                Surface::WallY0 | Surface::WallY1 => (l, h),
            };
            let nu = (eu / pitch).round().max(1.0) as usize;
            let nv = (ev / pitch).round().max(1.0) as usize;
            let (du, dv) = (eu / nu as f64, ev / nv as f64);
            let start = mesh.pos.len();
            for iu in 0..nu {
                for iv in 0..nv {
                    let u = (iu as f64 + 0.5) * du;
                    let v = (iv as f64 + 0.5) * dv;
                    let (p, n) = match surface {
                        Surface::Floor => ([u, v, 0.0], [0.0, 0.0, 1.0]),
                        Surface::Ceiling => ([u, v, h], [0.0, 0.0, -1.0]),
                        Surface::WallX0 => ([0.0, u, v], [1.0, 0.0, 0.0]),
                        Surface::WallX1 => ([l, u, v], [-1.0, 0.0, 0.0]),
                        Surface::WallY0 => ([u, 0.0, v], [0.0, 1.0, 0.0]),
                        Surface::WallY1 => ([u, w, v], [0.0, -1.0, 0.0]),
                    };
                    mesh.pos.push(p);
                    mesh.normal.push(n);
                    mesh.area.push(du * dv);
                    mesh.rho.push(rho);
                }
            }
            mesh.spans.push(start..mesh.pos.len());
        }
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }
}

/// Power re-emitted by each element after a given bounce, with its mean delay.
#[derive(Debug, Clone)]
struct Bounce {
    power: Vec<f64>,
    delay: Vec<f64>,
}

#[inline]
fn diffuse_kernel(src: &[f64; 3], src_n: &[f64; 3], dst: &[f64; 3], dst_n: &[f64; 3]) -> Option<(f64, f64)> {
    let v = [dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]];
    let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let cos_emit = src_n[0] * v[0] + src_n[1] * v[1] + src_n[2] * v[2];
    let cos_inc = -(dst_n[0] * v[0] + dst_n[1] * v[1] + dst_n[2] * v[2]);
    if cos_emit <= 0.0 || cos_inc <= 0.0 {
        return None;
    }
    // order-1 Lambertian: (m + 1) / 2pi = 1 / pi; cosines carry 1/d each
    Some((cos_emit * cos_inc / (PI * d2 * d2), d2.sqrt()))
}

/// Multi-bounce channel for a fixed room and LED set.
#[derive(Debug, Clone)]
pub struct ChannelSimulator {
    transmitters: Vec<TransmitterSpec>,
    mesh: SurfaceMesh,
    max_bounces: usize,
    /// `illumination[tx][bounce - 1]`
    illumination: Vec<Vec<Bounce>>,
}

impl ChannelSimulator {
    pub fn new(
        scene: &SceneConfig,
        transmitters: &[TransmitterSpec],
        max_bounces: usize,
    ) -> Result<Self> {
        if max_bounces > 3 {
            return Err(Error::InvalidConfig(format!(
                "max_bounces must be in 0..=3, got {max_bounces}"
            )));
        }
        let mesh = SurfaceMesh::new(scene)?;
        let mut illumination: Vec<Vec<Bounce>> = vec![Vec::new(); transmitters.len()];
        if max_bounces > 0 {
            let first: Vec<Bounce> = transmitters.iter().map(|tx| first_bounce(&mesh, tx)).collect();
            for (ill, b) in illumination.iter_mut().zip(first) {
                ill.push(b);
            }
            for _ in 1..max_bounces {
                let prev: Vec<&Bounce> = illumination.iter().map(|b| b.last().unwrap()).collect();
                let next = next_bounce(&mesh, &prev);
                for (ill, b) in illumination.iter_mut().zip(next) {
                    ill.push(b);
                }
            }
        }
        Ok(Self {
            transmitters: transmitters.to_vec(),
            mesh,
            max_bounces,
            illumination,
        })
    }

    pub fn transmitters(&self) -> &[TransmitterSpec] {
        &self.transmitters
    }

    pub fn max_bounces(&self) -> usize {
        self.max_bounces
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    /// Fine delay profiles of every transmitter at one receiver position.
    pub fn delay_profiles(&self, rx: &ReceiverSpec, resolution: f64) -> Result<Vec<DelayProfile>> {
        let mut profiles = Vec::with_capacity(self.transmitters.len());
        for tx in &self.transmitters {
            let geo = link_geometry(tx, rx)?;
            let mut p = DelayProfile::new(resolution);
            p.los_gain = los_dc_gain(tx, rx)?;
            p.los_delay = geo.d / SPEED_OF_LIGHT;
            p.add(p.los_delay, p.los_gain);
            profiles.push(p);
        }
        if self.max_bounces == 0 {
            return Ok(profiles);
        }
        let r = [rx.position.x, rx.position.y, rx.position.z];
        let cos_fov = rx.fov_rad().cos();
        for e in 0..self.mesh.len() {
            let p = &self.mesh.pos[e];
            let n = &self.mesh.normal[e];
            let v = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
            let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let d = d2.sqrt();
            let cos_emit = (n[0] * v[0] + n[1] * v[1] + n[2] * v[2]) / d;
            // receiver looks along +z
            let cos_psi = -v[2] / d;
            if cos_emit <= 0.0 || cos_psi <= 0.0 || cos_psi < cos_fov {
                continue;
            }
            let k = cos_emit * receiver_factor(rx, cos_psi) / (PI * d2);
            let hop = d / SPEED_OF_LIGHT;
            for (profile, bounces) in profiles.iter_mut().zip(&self.illumination) {
                for b in bounces {
                    let pw = b.power[e];
                    if pw > 0.0 {
                        profile.add(b.delay[e] + hop, pw * k);
                    }
                }
            }
        }
        Ok(profiles)
    }

    pub fn delay_profile(&self, tx_index: usize, rx: &ReceiverSpec, resolution: f64) -> Result<DelayProfile> {
        let mut all = self.delay_profiles(rx, resolution)?;
        if tx_index >= all.len() {
            return Err(Error::InvalidConfig(format!("no transmitter at index {tx_index}")));
        }
        Ok(all.swap_remove(tx_index))
    }

    pub fn impulse_response(&self, tx_index: usize, rx: &ReceiverSpec, bin_width: f64) -> Result<ImpulseResponse> {
        Ok(self
            .delay_profile(tx_index, rx, fine_resolution(bin_width)?)?
            .binned(bin_width))
    }
}

/// Fine accumulation step for a target bin width.
pub fn fine_resolution(bin_width: f64) -> Result<f64> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig(format!("bin_width must be > 0, got {bin_width}")));
    }
    Ok(FINE_BIN.min(bin_width / 4.0))
}

fn first_bounce(mesh: &SurfaceMesh, tx: &TransmitterSpec) -> Bounce {
    let s = [tx.position.x, tx.position.y, tx.position.z];
    let m = tx.lambertian_order;
    let (power, delay) = (0..mesh.len())
        .map(|e| {
            let p = &mesh.pos[e];
            let n = &mesh.normal[e];
            let v = [p[0] - s[0], p[1] - s[1], p[2] - s[2]];
            let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let d = d2.sqrt();
            // LED looks along -z
            let cos_phi = -v[2] / d;
            let cos_inc = -(n[0] * v[0] + n[1] * v[1] + n[2] * v[2]) / d;
            if cos_phi <= 0.0 || cos_inc <= 0.0 {
                return (0.0, 0.0);
            }
            let received = (m + 1.0) / (2.0 * PI * d2) * cos_phi.powf(m) * cos_inc * mesh.area[e];
            (mesh.rho[e] * received, d / SPEED_OF_LIGHT)
        })
        .unzip();
    Bounce { power, delay }
}

fn next_bounce(mesh: &SurfaceMesh, prev: &[&Bounce]) -> Vec<Bounce> {
    let ntx = prev.len();
    let per_element: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.len())
        .into_par_iter()
        .map(|j| {
            let mut received = vec![0.0; ntx];
            let mut weighted_delay = vec![0.0; ntx];
            if mesh.rho[j] == 0.0 {
                return (received, weighted_delay);
            }
            let dst = &mesh.pos[j];
            let dst_n = &mesh.normal[j];
            for span in &mesh.spans {
                if span.contains(&j) {
                    continue;
                }
                for i in span.clone() {
                    let Some((k, d)) = diffuse_kernel(&mesh.pos[i], &mesh.normal[i], dst, dst_n) else {
                        continue;
                    };
                    let hop = d / SPEED_OF_LIGHT;
                    for t in 0..ntx {
                        let pw = prev[t].power[i];
                        if pw > 0.0 {
                            let q = pw * k;
                            received[t] += q;
                            weighted_delay[t] += q * (prev[t].delay[i] + hop);
                        }
                    }
                }
            }
            let area_rho = mesh.area[j] * mesh.rho[j];
            let power: Vec<f64> = received.iter().map(|r| r * area_rho).collect();
            let delay: Vec<f64> = received
                .iter()
                .zip(&weighted_delay)
                .map(|(&r, &w)| if r > 0.0 { w / r } else { 0.0 })
                .collect();
            (power, delay)
        })
        .collect();
    (0..ntx)
        .map(|t| Bounce {
            power: per_element.iter().map(|(p, _)| p[t]).collect(),
            delay: per_element.iter().map(|(_, d)| d[t]).collect(),
        })
        .collect()
}

/// Impulse response of one link including up to `max_bounces` diffuse reflections.
pub fn impulse_response(
    tx: &TransmitterSpec,
    rx: &ReceiverSpec,
    scene: &SceneConfig,
    max_bounces: usize,
    bin_width: f64,
) -> Result<ImpulseResponse> {
    let sim = ChannelSimulator::new(scene, std::slice::from_ref(tx), max_bounces)?;
    sim.impulse_response(0, rx, bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_transmitters, Point3};
    use approx::assert_relative_eq;

    fn coarse_scene() -> SceneConfig {
        SceneConfig {
            surface_element_size: 0.25,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn concentrator_outside_fov_is_zero() {
        let g = concentrator_gain(80f64.to_radians(), 70f64.to_radians(), 1.5).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn unit_concentrator() {
        let g = concentrator_gain(0.0, 90f64.to_radians(), 1.0).unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn concentrator_formula() {
        let g = concentrator_gain(30f64.to_radians(), 70f64.to_radians(), 1.5).unwrap();
        assert_relative_eq!(g, 2.548_067_2, max_relative = 1e-6);
    }

    #[test]
    fn concentrator_rejects_non_positive_fov() {
        assert!(concentrator_gain(0.1, 0.0, 1.5).is_err());
    }

    #[test]
    fn lambertian_order_values() {
        assert_relative_eq!(lambertian_order(60.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(lambertian_order(45.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(lambertian_order(90.0).is_err());
        assert!(lambertian_order(0.0).is_err());
        let mut prev = f64::INFINITY;
        for a in 1..90 {
            let m = lambertian_order(a as f64).unwrap();
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn los_gain_beneath_led() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 3.3);
        let rx = ReceiverSpec::default().at(2.0, 2.0);
        let g = los_dc_gain(&tx, &rx).unwrap();
        // 2 * 1e-4 * 2.5481 / (2 pi * 4.41)
        let expected = 2.0 * 1e-4 * (2.25 / 70f64.to_radians().sin().powi(2)) / (2.0 * PI * 4.41);
        assert_relative_eq!(g, expected, max_relative = 1e-12);
        assert_relative_eq!(g, 1.839e-5, max_relative = 1e-3);
    }

    #[test]
    fn los_gain_outside_fov_is_zero() {
        let tx = TransmitterSpec::new(1, 0.0, 0.0, 3.3);
        let rx = ReceiverSpec::default().at(6.0, 6.0);
        assert_eq!(los_dc_gain(&tx, &rx).unwrap(), 0.0);
    }

    #[test]
    fn los_gain_inverse_square() {
        // same angles, double distance: scale the geometry about the receiver
        let rx = ReceiverSpec {
            position: Point3::new(0.0, 0.0, 0.0),
            ..Default::default()
        };
        let near = TransmitterSpec::new(1, 0.5, 0.3, 1.0);
        let far = TransmitterSpec::new(1, 1.0, 0.6, 2.0);
        let (a, b) = (los_dc_gain(&near, &rx).unwrap(), los_dc_gain(&far, &rx).unwrap());
        assert_relative_eq!(b, a / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_bounces_is_los_only() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 3.3);
        let rx = ReceiverSpec::default().at(2.7, 3.1);
        let ir = impulse_response(&tx, &rx, &coarse_scene(), 0, 48e-9).unwrap();
        assert_eq!(ir.gains.len(), 1);
        assert_eq!(ir.gains[0], los_dc_gain(&tx, &rx).unwrap());
        assert_eq!(channel_dc_gain(&ir), ir.los_gain);
    }

    #[test]
    fn absorbing_room_has_no_reflections() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 3.3);
        let rx = ReceiverSpec::default().at(1.0, 0.5);
        let ir = impulse_response(&tx, &rx, &coarse_scene().absorbing(), 3, 48e-9).unwrap();
        assert_eq!(ir.gains, vec![ir.los_gain]);
        assert_eq!(ir.total_gain, ir.los_gain);
    }

    #[test]
    fn bin_zero_of_transfer_is_dc_gain() {
        let ir = ImpulseResponse {
            bin_width: 1.0,
            t0: 0.0,
            gains: vec![1e-5, 2e-6],
            los_gain: 1e-5,
            total_gain: 1.2e-5,
        };
        assert_relative_eq!(channel_dc_gain(&ir), 1.2e-5);
        let h0 = ir.transfer(0, 64);
        assert_relative_eq!(h0.re, 1.2e-5, max_relative = 1e-12);
        assert!(h0.im.abs() < 1e-20);
    }

    #[test]
    fn reflections_matter_more_in_corner() {
        let scene = coarse_scene();
        let txs = default_transmitters();
        let sim = ChannelSimulator::new(&scene, &txs, 3).unwrap();
        let rx = ReceiverSpec::default();
        let ratio = |x, y| {
            let irs = sim.delay_profiles(&rx.at(x, y), FINE_BIN).unwrap();
            let los: f64 = irs.iter().map(|p| p.los_gain).sum();
            let tot: f64 = irs.iter().map(|p| p.total_gain()).sum();
            (tot - los) / los
        };
        assert!(ratio(0.1, 0.1) > ratio(3.0, 3.0));
    }

    #[test]
    fn impulse_response_invariants() {
        let scene = coarse_scene();
        let tx = TransmitterSpec::new(1, 2.0, 4.0, 3.3);
        let rx = ReceiverSpec::default().at(0.4, 5.2);
        let ir = impulse_response(&tx, &rx, &scene, 3, 48.48e-9).unwrap();
        assert!(ir.gains.iter().all(|&g| g >= 0.0));
        assert_relative_eq!(ir.total_gain, ir.gains.iter().sum::<f64>());
        assert!(ir.los_gain <= ir.total_gain);
        assert!(ir.gains.len() > 1);
    }

    #[test]
    fn binning_preserves_total_and_places_los_on_tap_zero() {
        let mut p = DelayProfile::new(FINE_BIN);
        p.los_gain = 1.0;
        p.add(10e-9, 1.0);
        p.add(30e-9, 0.5);
        p.add(70e-9, 0.25);
        let ir = p.binned(40e-9);
        assert_relative_eq!(ir.total_gain, 1.75, epsilon = 1e-12);
        assert!(ir.gains[0] >= 1.0);
        assert_relative_eq!(ir.t0, 10e-9, epsilon = FINE_BIN);
    }

    #[test]
    fn pitch_larger_than_room_is_rejected() {
        let scene = SceneConfig {
            surface_element_size: 4.0,
            ..Default::default()
        };
        assert!(matches!(SurfaceMesh::new(&scene), Err(Error::PitchTooLarge { .. })));
    }

    #[test]
    fn too_many_bounces_rejected() {
        assert!(ChannelSimulator::new(&coarse_scene(), &default_transmitters(), 4).is_err());
    }
}
