//! Canonical JSON rendering shared by persistence and digests.
//!
//! Object keys come out sorted (serde_json's default map is ordered), keyed
//! collections are emitted as arrays ordered by id, and every real is rounded
//! to 9 significant digits. Two documents with equal content therefore
//! serialize to identical bytes.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

/// Significant digits kept for every real in canonical output.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Round `x` to [`SIGNIFICANT_DIGITS`] significant digits.
///
/// The operation is idempotent: `round_sig(round_sig(x)) == round_sig(x)`.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    s.parse().unwrap_or(x)
}

fn canonicalize_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize_value),
        Value::Object(map) => map.values_mut().for_each(canonicalize_value),
        _ => {}
    }
}

/// Convert any serializable value into its canonical JSON tree.
pub fn to_canonical_value<T: Serialize>(value: &T) -> Value {
    let mut v = serde_json::to_value(value).expect("domain types always serialize");
    canonicalize_value(&mut v);
    v
}

/// Canonical pretty-printed bytes with a trailing newline.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = to_canonical_value(value);
    let mut out = serde_json::to_vec_pretty(&v).expect("json values always serialize");
    out.push(b'\n');
    out
}

/// 64-bit content digest, rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub u64);

impl Digest {
    /// Digest of the canonical (compact) rendering of `value`.
    pub fn of<T: Serialize>(value: &T) -> Digest {
        let v = to_canonical_value(value);
        let bytes = serde_json::to_vec(&v).expect("json values always serialize");
        let hash = Sha256::digest(&bytes);
        let mut head = [0u8; 8];
        head.copy_from_slice(&hash[..8]);
        Digest(u64::from_be_bytes(head))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for Digest {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Digest)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for reals that may be `+inf`, encoded as the string `"inf"`.
pub mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", found {t:?}"))),
        }
    }
}

/// Sequence form of [`inf_f64`].
pub mod inf_f64_seq {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(transparent)]
    struct Item(#[serde(with = "super::inf_f64")] f64);

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|x| Item(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Item>::deserialize(d)?.into_iter().map(|i| i.0).collect())
    }
}

/// Serde adapter that renders an id-keyed map as an id-ordered array.
pub mod keyed {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::model::Keyed;

    pub fn serialize<S, T>(map: &BTreeMap<String, T>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize,
    {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<BTreeMap<String, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de> + Keyed,
    {
        let items = Vec::<T>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for item in items {
            let key = item.key().to_string();
            if map.insert(key.clone(), item).is_some() {
                return Err(D::Error::custom(format!("duplicate id {key:?}")));
            }
        }
        Ok(map)
    }
}
