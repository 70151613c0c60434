//! Room, ceiling transmitters, photodiode receiver and the TDM schedule.
//!
//! All lengths are meters, angles in degrees unless a name says otherwise.
//! Transmitters point straight down and the receiver straight up, so the
//! angle of irradiance and the angle of incidence on a direct link coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in room coordinates. The origin is a floor corner, `z` is up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Room geometry, surface reflectivities and the reflector discretization pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub room_length: f64,
    pub room_width: f64,
    pub room_height: f64,
    pub rho_wall: f64,
    pub rho_ceiling: f64,
    pub rho_floor: f64,
    pub surface_element_size: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_length: 6.0,
            room_width: 6.0,
            room_height: 3.5,
            rho_wall: 0.66,
            rho_ceiling: 0.35,
            rho_floor: 0.60,
            surface_element_size: 0.1,
        }
    }
}

impl SceneConfig {
    /// Same room with perfectly absorbing surfaces.
    pub fn absorbing(&self) -> Self {
        Self {
            rho_wall: 0.0,
            rho_ceiling: 0.0,
            rho_floor: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("room_length", self.room_length),
            ("room_width", self.room_width),
            ("room_height", self.room_height),
            ("surface_element_size", self.surface_element_size),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("rho_wall", self.rho_wall),
            ("rho_ceiling", self.rho_ceiling),
            ("rho_floor", self.rho_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (0.0..=self.room_length).contains(&x) && (0.0..=self.room_width).contains(&y)
    }
}

/// A ceiling LED. `id` is the LED ID code carried in its payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSpec {
    pub id: u8,
    pub position: Point3,
    pub lambertian_order: f64,
    pub power_high: f64,
    pub power_low: f64,
    #[serde(default = "down")]
    pub elevation: f64,
    #[serde(default)]
    pub azimuth: f64,
}

fn down() -> f64 {
    -90.0
}

fn up() -> f64 {
    90.0
}

impl TransmitterSpec {
    pub fn new(id: u8, x: f64, y: f64, height: f64) -> Self {
        Self {
            id,
            position: Point3::new(x, y, height),
            lambertian_order: 1.0,
            power_high: 5.0,
            power_low: 3.0,
            elevation: -90.0,
            azimuth: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambertian_order >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "transmitter {}: lambertian_order must be >= 1",
                self.id
            )));
        }
        if !(self.power_low > 0.0 && self.power_high > self.power_low) {
            return Err(Error::InvalidConfig(format!(
                "transmitter {}: need power_high > power_low > 0",
                self.id
            )));
        }
        if self.elevation != -90.0 || self.azimuth != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "transmitter {}: only downward-facing LEDs (elevation -90, azimuth 0) are supported",
                self.id
            )));
        }
        Ok(())
    }
}

/// The four-LED ceiling layout: (2,2), (2,4), (4,2), (4,4) at 3.3 m.
pub fn default_transmitters() -> Vec<TransmitterSpec> {
    [(2.0, 2.0), (2.0, 4.0), (4.0, 2.0), (4.0, 4.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| TransmitterSpec::new(i as u8 + 1, x, y, 3.3))
        .collect()
}

/// Upward-facing photodiode behind an optical filter and a CPC concentrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    pub position: Point3,
    pub area: f64,
    /// Concentrator field of view, degrees.
    pub fov: f64,
    pub refractive_index: f64,
    pub optical_filter_gain: f64,
    #[serde(default = "up")]
    pub elevation: f64,
    #[serde(default)]
    pub azimuth: f64,
}

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self {
            position: Point3::new(3.0, 3.0, 1.2),
            area: 1e-4,
            fov: 70.0,
            refractive_index: 1.5,
            optical_filter_gain: 1.0,
            elevation: 90.0,
            azimuth: 0.0,
        }
    }
}

impl ReceiverSpec {
    pub fn at(&self, x: f64, y: f64) -> Self {
        Self {
            position: Point3::new(x, y, self.position.z),
            ..self.clone()
        }
    }

    pub fn fov_rad(&self) -> f64 {
        self.fov.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(Error::InvalidConfig("receiver area must be > 0".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 90.0) {
            return Err(Error::InvalidConfig(format!(
                "receiver fov must be in (0, 90] deg, got {}",
                self.fov
            )));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(Error::InvalidConfig("refractive_index must be >= 1".into()));
        }
        if !(self.optical_filter_gain > 0.0) {
            return Err(Error::InvalidConfig("optical_filter_gain must be > 0".into()));
        }
        if self.elevation != 90.0 || self.azimuth != 0.0 {
            return Err(Error::InvalidConfig(
                "only upward-facing receivers (elevation 90, azimuth 0) are supported".into(),
            ));
        }
        Ok(())
    }
}

/// Strict time-division schedule: one LED owns the whole band per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdmSchedule {
    pub order: Vec<u8>,
    pub frames_per_slot: usize,
}

impl TdmSchedule {
    pub fn round_robin(transmitters: &[TransmitterSpec]) -> Self {
        Self {
            order: transmitters.iter().map(|t| t.id).collect(),
            frames_per_slot: 2,
        }
    }

    /// Checks that every transmitter owns exactly one slot per round.
    pub fn validate(&self, transmitters: &[TransmitterSpec]) -> Result<()> {
        if self.frames_per_slot == 0 {
            return Err(Error::InvalidConfig("frames_per_slot must be >= 1".into()));
        }
        if self.order.len() != transmitters.len() {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} slots for {} transmitters",
                self.order.len(),
                transmitters.len()
            )));
        }
        for tx in transmitters {
            let n = self.order.iter().filter(|&&id| id == tx.id).count();
            if n != 1 {
                return Err(Error::InvalidConfig(format!(
                    "transmitter {} appears {n} times in the schedule",
                    tx.id
                )));
            }
        }
        Ok(())
    }

    /// Slot index and sample offset of each slot for frames of `frame_len` samples.
    pub fn slots(&self, frame_len: usize) -> impl Iterator<Item = (u8, std::ops::Range<usize>)> + '_ {
        let slot_len = frame_len * self.frames_per_slot;
        self.order
            .iter()
            .enumerate()
            .map(move |(i, &id)| (id, i * slot_len..(i + 1) * slot_len))
    }
}

/// Geometry of a direct transmitter-receiver link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub d: f64,
    pub cos_phi: f64,
    pub cos_psi: f64,
}

pub fn link_geometry(tx: &TransmitterSpec, rx: &ReceiverSpec) -> Result<LinkGeometry> {
    let d = tx.position.distance(&rx.position);
    if d == 0.0 {
        return Err(Error::CoincidentEndpoints);
    }
    let dz = tx.position.z - rx.position.z;
    if dz <= 0.0 {
        return Err(Error::TransmitterBelowReceiver {
            tx_height: tx.position.z,
            rx_height: rx.position.z,
        });
    }
    let cos = (dz / d).clamp(0.0, 1.0);
    Ok(LinkGeometry {
        d,
        cos_phi: cos,
        cos_psi: cos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_room_and_optics() {
        let s = SceneConfig::default();
        assert_eq!((s.room_length, s.room_width, s.room_height), (6.0, 6.0, 3.5));
        assert_eq!((s.rho_wall, s.rho_ceiling, s.rho_floor), (0.66, 0.35, 0.60));
        let txs = default_transmitters();
        assert_eq!(txs.len(), 4);
        assert!(txs.iter().all(|t| t.position.z == 3.3 && t.lambertian_order == 1.0));
        assert!(txs.iter().all(|t| t.power_high == 5.0 && t.power_low == 3.0));
        let rx = ReceiverSpec::default();
        assert_eq!((rx.area, rx.position.z, rx.fov), (1e-4, 1.2, 70.0));
        assert_relative_eq!(txs[0].position.z - rx.position.z, 2.1, epsilon = 1e-12);
    }

    #[test]
    fn directly_beneath() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 3.3);
        let rx = ReceiverSpec::default().at(2.0, 2.0);
        let g = link_geometry(&tx, &rx).unwrap();
        assert_relative_eq!(g.d, 2.1, epsilon = 1e-12);
        assert_eq!(g.cos_psi, 1.0);
        assert_eq!(g.cos_phi, g.cos_psi);
    }

    #[test]
    fn oblique_link() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 3.3);
        let rx = ReceiverSpec::default().at(4.1, 2.0);
        let g = link_geometry(&tx, &rx).unwrap();
        assert_relative_eq!(g.d, 2.969_848_480_983_499_3, epsilon = 1e-9);
        assert_relative_eq!(g.cos_psi, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn coincident_is_an_error() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 1.2);
        let rx = ReceiverSpec::default().at(2.0, 2.0);
        assert_eq!(link_geometry(&tx, &rx), Err(Error::CoincidentEndpoints));
    }

    #[test]
    fn receiver_above_transmitter_rejected() {
        let tx = TransmitterSpec::new(1, 2.0, 2.0, 1.0);
        let rx = ReceiverSpec::default().at(3.0, 2.0);
        assert!(matches!(
            link_geometry(&tx, &rx),
            Err(Error::TransmitterBelowReceiver { .. })
        ));
    }

    #[test]
    fn schedule_requires_each_led_once() {
        let txs = default_transmitters();
        let mut s = TdmSchedule::round_robin(&txs);
        s.validate(&txs).unwrap();
        s.order[3] = 1;
        assert!(s.validate(&txs).is_err());
        let s = TdmSchedule::round_robin(&txs);
        let slots: Vec<_> = s.slots(528).collect();
        for w in slots.windows(2) {
            assert_eq!(w[0].1.end, w[1].1.start);
        }
    }

    #[test]
    fn invalid_reflectivity_rejected() {
        let s = SceneConfig {
            rho_wall: 1.2,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(SceneConfig::default()).unwrap();
        v["colour"] = serde_json::json!(1);
        assert!(serde_json::from_value::<SceneConfig>(v).is_err());
    }
}
