//! Bit-exact f64 encoding for JSON files: reals are written as hexadecimal
//! strings of their IEEE 754 bit pattern (e.g. `"0x3ff0000000000000"`), so
//! save/load round-trips are lossless. Readers also accept plain JSON
//! numbers for hand-written files.

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexF64(pub f64);

pub fn encode(x: f64) -> String {
    format!("{:#018x}", x.to_bits())
}

pub fn decode(s: &str) -> Option<f64> {
    let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    if hex.is_empty() || hex.len() > 16 {
        return None;
    }
    u64::from_str_radix(hex, 16).ok().map(f64::from_bits)
}

impl From<f64> for HexF64 {
    fn from(x: f64) -> Self {
        Self(x)
    }
}

impl From<HexF64> for f64 {
    fn from(x: HexF64) -> f64 {
        x.0
    }
}

impl Serialize for HexF64 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&encode(self.0))
    }
}

impl<'de> Deserialize<'de> for HexF64 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = HexF64;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a hexadecimal float string like \"0x3ff0000000000000\" or a number")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<HexF64, E> {
                decode(s)
                    .map(HexF64)
                    .ok_or_else(|| E::custom(format!("invalid hex float '{s}'")))
            }

            fn visit_f64<E: de::Error>(self, x: f64) -> Result<HexF64, E> {
                Ok(HexF64(x))
            }

            fn visit_i64<E: de::Error>(self, x: i64) -> Result<HexF64, E> {
                Ok(HexF64(x as f64))
            }

            fn visit_u64<E: de::Error>(self, x: u64) -> Result<HexF64, E> {
                Ok(HexF64(x as f64))
            }
        }
        deserializer.deserialize_any(V)
    }
}

pub fn encode_vec(xs: &[f64]) -> Vec<HexF64> {
    xs.iter().copied().map(HexF64).collect()
}

pub fn decode_vec(xs: &[HexF64]) -> Vec<f64> {
    xs.iter().map(|h| h.0).collect()
}
