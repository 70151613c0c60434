//! Unit-energy QAM alphabets: Gray-coded square 4/16/64-QAM and a
//! quasi-Gray cross 32-QAM.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits_per_symbol: usize,
    /// `points[label]`
    points: Vec<Complex64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// First-quadrant layout of cross-32: `(|I|, |Q|)` per 3-bit label. Labels
/// follow a snake through the quadrant so horizontal neighbours and most
/// vertical ones differ in one bit.
const CROSS32_QUADRANT: [(f64, f64); 8] = [
    (1.0, 1.0), // 000
    (3.0, 1.0), // 001
    (5.0, 3.0), // 010
    (5.0, 1.0), // 011
    (3.0, 5.0), // 100
    (1.0, 5.0), // 101
    (3.0, 3.0), // 110
    (1.0, 3.0), // 111
];

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        let points = match order {
            4 | 16 | 64 => {
                let k = order.trailing_zeros() as usize / 2;
                let side = 1usize << k;
                let level = |g: usize| 2.0 * gray_decode(g) as f64 - (side as f64 - 1.0);
                let raw: Vec<Complex64> = (0..order)
                    .map(|label| Complex64::new(level(label >> k), level(label & (side - 1))))
                    .collect();
                normalize(raw)
            }
            32 => {
                let raw: Vec<Complex64> = (0..32)
                    .map(|label| {
                        let (i, q) = CROSS32_QUADRANT[label & 0b111];
                        let si = if label & 0b10000 != 0 { -1.0 } else { 1.0 };
                        let sq = if label & 0b01000 != 0 { -1.0 } else { 1.0 };
                        Complex64::new(si * i, sq * q)
                    })
                    .collect();
                normalize(raw)
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "constellation size must be 4, 16, 32 or 64, got {order}"
                )))
            }
        };
        Ok(Self {
            bits_per_symbol: order.trailing_zeros() as usize,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Nearest-point hard decision.
    pub fn decide(&self, s: Complex64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (label, p) in self.points.iter().enumerate() {
            let d = (s - p).norm_sqr();
            if d < best.1 {
                best = (label, d);
            }
        }
        best.0
    }

    /// Maps bits (MSB first per symbol) to symbols. `bits.len()` must be a
    /// multiple of the bits per symbol.
    pub fn modulate(&self, bits: &[bool]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol;
        if !bits.len().is_multiple_of(k) {
            return Err(Error::InvalidConfig(format!(
                "{} bits is not a multiple of {k}",
                bits.len()
            )));
        }
        Ok(bits
            .chunks(k)
            .map(|c| self.points[c.iter().fold(0, |acc, &b| (acc << 1) | b as usize)])
            .collect())
    }

    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<bool> {
        let k = self.bits_per_symbol;
        symbols
            .iter()
            .flat_map(|&s| {
                let label = self.decide(s);
                (0..k).rev().map(move |b| (label >> b) & 1 == 1)
            })
            .collect()
    }
}

fn normalize(raw: Vec<Complex64>) -> Vec<Complex64> {
    let energy = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / raw.len() as f64;
    let s = energy.sqrt();
    raw.into_iter().map(|p| p / s).collect()
}
