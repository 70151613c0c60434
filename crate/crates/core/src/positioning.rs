//! RSS positioning: channel gain to distance, distance to horizontal range,
//! and a linearized lateration solved by least squares.
//!
//! With transmitter and receiver axes both vertical, the Lambertian gain of
//! a direct link is `(m+1) A T_s g (H-h)^(m+1) / (2 pi d^(m+3))`, which
//! inverts in closed form for `d`. Subtracting the first anchor's circle
//! equation from the others gives a linear system `A X = B` in the unknown
//! `(x, y)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::concentrator_gain;
use crate::error::{Error, Result};
use crate::scene::{ReceiverSpec, TransmitterSpec};

/// Gain estimate for one LED together with the coordinates its ID decodes to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub tx_id: u8,
    pub tx_coords: (f64, f64),
    pub p_bar: f64,
}

/// Link constants the distance inversion needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub lambertian_order: f64,
    pub area: f64,
    pub filter_gain: f64,
    pub refractive_index: f64,
    /// radians
    pub fov: f64,
    pub tx_height: f64,
    pub rx_height: f64,
}

impl LinkParams {
    pub fn from_specs(tx: &TransmitterSpec, rx: &ReceiverSpec) -> Self {
        Self {
            lambertian_order: tx.lambertian_order,
            area: rx.area,
            filter_gain: rx.optical_filter_gain,
            refractive_index: rx.refractive_index,
            fov: rx.fov_rad(),
            tx_height: tx.position.z,
            rx_height: rx.position.z,
        }
    }

    pub fn vertical_separation(&self) -> f64 {
        self.tx_height - self.rx_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEstimate {
    pub d: f64,
    /// The solved distance puts the LED outside the receiver's field of view,
    /// where the gain model the inversion assumes does not hold.
    pub outside_fov: bool,
}

pub fn estimate_distance(est: &ChannelEstimate, params: &LinkParams) -> Result<RangeEstimate> {
    if !(est.p_bar > 0.0) {
        return Err(Error::NonPositiveGain(est.p_bar));
    }
    let dz = params.vertical_separation();
    if !(dz > 0.0) {
        return Err(Error::TransmitterBelowReceiver {
            tx_height: params.tx_height,
            rx_height: params.rx_height,
        });
    }
    let m = params.lambertian_order;
    let g = concentrator_gain(0.0, params.fov, params.refractive_index)?;
    let numerator = (m + 1.0) * params.area * params.filter_gain * g * dz.powf(m + 1.0);
    let d = (numerator / (2.0 * std::f64::consts::PI * est.p_bar)).powf(1.0 / (m + 3.0));
    let cos_psi = (dz / d).min(1.0);
    Ok(RangeEstimate {
        d,
        outside_fov: cos_psi.acos() > params.fov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalRange {
    pub r: f64,
    /// `d` came out shorter than the vertical separation and `r` was set to 0.
    pub clamped: bool,
}

pub fn horizontal_range(d: f64, tx_height: f64, rx_height: f64) -> HorizontalRange {
    let dz = tx_height - rx_height;
    let r2 = d * d - dz * dz;
    if r2 < 0.0 || !(d > 0.0) {
        HorizontalRange { r: 0.0, clamped: true }
    } else {
        HorizontalRange {
            r: r2.sqrt(),
            clamped: false,
        }
    }
}

/// A transmitter at a known ceiling position with its estimated horizontal range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub id: u8,
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub x: f64,
    pub y: f64,
    /// `|A X - B|^2` of the linearized system, m^4.
    pub residual_norm: f64,
    pub used_tx: Vec<u8>,
}

/// Rows `(x_j - x_ref, y_j - y_ref)` and right-hand sides of the linearized
/// lateration system for every anchor other than `reference`.
pub fn lateration_system(anchors: &[Anchor], reference: usize) -> (DMatrix<f64>, DVector<f64>) {
    let a0 = anchors[reference];
    let k0 = a0.x * a0.x + a0.y * a0.y;
    let others: Vec<&Anchor> = anchors
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != reference)
        .map(|(_, a)| a)
        .collect();
    let a = DMatrix::from_fn(others.len(), 2, |r, c| {
        if c == 0 {
            others[r].x - a0.x
        } else {
            others[r].y - a0.y
        }
    });
    let b = DVector::from_iterator(
        others.len(),
        others
            .iter()
            .map(|aj| 0.5 * ((a0.r * a0.r - aj.r * aj.r) + (aj.x * aj.x + aj.y * aj.y) - k0)),
    );
    (a, b)
}

/// Least-squares lateration with the first anchor as reference.
pub fn laterate(anchors: &[Anchor]) -> Result<PositionEstimate> {
    laterate_with_reference(anchors, 0)
}

pub fn laterate_with_reference(anchors: &[Anchor], reference: usize) -> Result<PositionEstimate> {
    if anchors.len() < 3 {
        return Err(Error::TooFewAnchors {
            needed: 3,
            got: anchors.len(),
        });
    }
    if reference >= anchors.len() {
        return Err(Error::InvalidConfig(format!("no anchor at index {reference}")));
    }
    let (a, b) = lateration_system(anchors, reference);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-10 {
        return Err(Error::DegenerateAnchors);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| Error::DegenerateAnchors)?;
    let residual_norm = (&a * &x - &b).norm_squared();
    Ok(PositionEstimate {
        x: x[0],
        y: x[1],
        residual_norm,
        used_tx: anchors.iter().map(|a| a.id).collect(),
    })
}
