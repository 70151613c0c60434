//! LED ID code carried at the start of every data frame: the LED number and
//! its ceiling coordinates in centimetres, protected by a one-byte checksum.

pub const LED_ID_BITS: usize = 48;

fn checksum(bytes: &[u8]) -> u8 {
    !bytes.iter().fold(0u8, |acc, b| acc.wrapping_add(*b))
}

pub fn encode(id: u8, x: f64, y: f64) -> Vec<bool> {
    let xc = (x * 100.0).round().clamp(0.0, u16::MAX as f64) as u16;
    let yc = (y * 100.0).round().clamp(0.0, u16::MAX as f64) as u16;
    let mut bytes = vec![id];
    bytes.extend_from_slice(&xc.to_be_bytes());
    bytes.extend_from_slice(&yc.to_be_bytes());
    bytes.push(checksum(&bytes));
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

/// Returns `(id, x, y)` or `None` when the checksum does not match.
pub fn decode(bits: &[bool]) -> Option<(u8, f64, f64)> {
    if bits.len() < LED_ID_BITS {
        return None;
    }
    let bytes: Vec<u8> = bits[..LED_ID_BITS]
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect();
    if checksum(&bytes[..5]) != bytes[5] {
        return None;
    }
    let x = u16::from_be_bytes([bytes[1], bytes[2]]) as f64 / 100.0;
    let y = u16::from_be_bytes([bytes[3], bytes[4]]) as f64 / 100.0;
    Some((bytes[0], x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let bits = encode(3, 4.0, 2.0);
        assert_eq!(bits.len(), LED_ID_BITS);
        assert_eq!(decode(&bits), Some((3, 4.0, 2.0)));
    }

    #[test]
    fn corrupted_bit_detected() {
        let mut bits = encode(2, 2.0, 4.0);
        bits[20] = !bits[20];
        assert_eq!(decode(&bits), None);
    }
}
