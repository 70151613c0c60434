//! Simulator for indoor visible-light positioning with ceiling LEDs.
//!
//! LEDs take turns transmitting ACO-OFDM (or baseline OOK) frames through a
//! multipath Lambertian channel. A photodiode receiver estimates each LED's
//! channel gain from a known training frame, converts the gains to ranges
//! and solves for its floor-plane position by least-squares lateration.
//!
//! Modules follow the signal path: [`scene`] and [`channel`] describe the
//! room and the optical channel, [`led`], [`acoofdm`] and [`ook`] the
//! transmitters and receivers, [`positioning`] the range inversion and
//! lateration, and [`harness`] runs the grid experiment and writes results.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoofdm;
pub mod cache;
pub mod channel;
pub mod error;
pub mod harness;
pub mod led;
pub mod ledid;
pub mod ook;
pub mod positioning;
pub mod qam;
pub mod scene;

pub use error::{Error, Result};
