//! Typed scalars, rows and bags (multisets) shared by every tier.
//!
//! Scalars have a total order and a canonical form so they can serve as
//! map keys and as the payload of the bit-exact group-key encoding.
//! Floats are canonicalized (`-0.0` folds to `0.0`, non-finite values are
//! rejected at row admission) and compared via `total_cmp`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Column data types of the schema dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    Int64,
    Float64,
    Text,
    Timestamp,
    Bool,
}

impl DType {
    pub fn keyword(&self) -> &'static str {
        match self {
            DType::Int64 => "INT64",
            DType::Float64 => "FLOAT64",
            DType::Text => "TEXT",
            DType::Timestamp => "TIMESTAMP",
            DType::Bool => "BOOL",
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, DType::Int64 | DType::Float64)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A single typed value. Timestamps are integer seconds since epoch zero.
#[derive(Debug, Clone)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Text(String),
    Timestamp(i64),
    Bool(bool),
}

impl Scalar {
    pub fn dtype(&self) -> DType {
        match self {
            Scalar::Int(_) => DType::Int64,
            Scalar::Float(_) => DType::Float64,
            Scalar::Text(_) => DType::Text,
            Scalar::Timestamp(_) => DType::Timestamp,
            Scalar::Bool(_) => DType::Bool,
        }
    }

    /// Canonical float bits: `-0.0` maps to `0.0` so equal values encode
    /// identically. Callers must have rejected non-finite floats already.
    pub fn canonical(self) -> Scalar {
        match self {
            Scalar::Float(x) if x == 0.0 => Scalar::Float(0.0),
            other => other,
        }
    }

    fn type_rank(&self) -> u8 {
        match self {
            Scalar::Int(_) => 0,
            Scalar::Float(_) => 1,
            Scalar::Text(_) => 2,
            Scalar::Timestamp(_) => 3,
            Scalar::Bool(_) => 4,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(v) => Some(*v as f64),
            Scalar::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scalar {}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        use Scalar::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => canon_f64(*a).total_cmp(&canon_f64(*b)),
            (Text(a), Text(b)) => a.cmp(b),
            (Timestamp(a), Timestamp(b)) => a.cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            _ => self.type_rank().cmp(&other.type_rank()),
        }
    }
}

impl std::hash::Hash for Scalar {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.type_rank().hash(state);
        match self {
            Scalar::Int(v) | Scalar::Timestamp(v) => v.hash(state),
            Scalar::Float(v) => canon_f64(*v).to_bits().hash(state),
            Scalar::Text(v) => v.hash(state),
            Scalar::Bool(v) => v.hash(state),
        }
    }
}

fn canon_f64(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::Text(v) => write!(f, "'{v}'"),
            Scalar::Timestamp(v) => write!(f, "{v}"),
            Scalar::Bool(v) => write!(f, "{}", if *v { "TRUE" } else { "FALSE" }),
        }
    }
}

// Wire form is a single-key map tagging the type: {"i":7}, {"f":295.0},
// {"s":"text"}, {"t":1690000000}, {"b":true}. Integers at or above 2^53
// are emitted as decimal strings so any JSON consumer keeps full precision.
impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        match self {
            Scalar::Int(v) => map.serialize_entry("i", &WireI64(*v))?,
            Scalar::Float(v) => map.serialize_entry("f", v)?,
            Scalar::Text(v) => map.serialize_entry("s", v)?,
            Scalar::Timestamp(v) => map.serialize_entry("t", &WireI64(*v))?,
            Scalar::Bool(v) => map.serialize_entry("b", v)?,
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScalarVisitor;
        impl<'de> Visitor<'de> for ScalarVisitor {
            type Value = Scalar;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a single-entry type-tagged map")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Scalar, A::Error> {
                let key: String = map
                    .next_key()?
                    .ok_or_else(|| de::Error::custom("empty scalar map"))?;
                let scalar = match key.as_str() {
                    "i" => Scalar::Int(map.next_value::<WireI64>()?.0),
                    "f" => Scalar::Float(map.next_value()?),
                    "s" => Scalar::Text(map.next_value()?),
                    "t" => Scalar::Timestamp(map.next_value::<WireI64>()?.0),
                    "b" => Scalar::Bool(map.next_value()?),
                    other => return Err(de::Error::custom(format!("unknown scalar tag {other}"))),
                };
                if map.next_key::<String>()?.is_some() {
                    return Err(de::Error::custom("scalar map must have one entry"));
                }
                Ok(scalar)
            }
        }
        deserializer.deserialize_map(ScalarVisitor)
    }
}

const SAFE_JSON_INT: u64 = 1 << 53;

/// i64 that falls back to a decimal string beyond 2^53.
struct WireI64(i64);

impl Serialize for WireI64 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.unsigned_abs() < SAFE_JSON_INT {
            serializer.serialize_i64(self.0)
        } else {
            serializer.collect_str(&self.0)
        }
    }
}

impl<'de> Deserialize<'de> for WireI64 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = WireI64;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer or a decimal string")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<WireI64, E> {
                Ok(WireI64(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<WireI64, E> {
                i64::try_from(v).map(WireI64).map_err(de::Error::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<WireI64, E> {
                v.parse().map(WireI64).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// serde adapters for `u64` fields that may exceed 2^53 (shares, counts).
pub mod wire_u64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, serializer: S) -> Result<S::Ok, S::Error> {
        if *v < SAFE_JSON_INT {
            serializer.serialize_u64(*v)
        } else {
            serializer.collect_str(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = u64;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an unsigned integer or a decimal string")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(de::Error::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                v.parse().map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// serde adapters for `Vec<u64>` share vectors.
pub mod wire_u64_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    struct Elem(u64);
    impl Serialize for Elem {
        fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
            wire_u64::serialize(&self.0, serializer)
        }
    }

    pub fn serialize<S: Serializer>(v: &[u64], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(v.len()))?;
        for e in v {
            seq.serialize_element(&Elem(*e))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u64>, D::Error> {
        struct Wrap(u64);
        impl<'de> Deserialize<'de> for Wrap {
            fn deserialize<D2: Deserializer<'de>>(d: D2) -> Result<Self, D2::Error> {
                wire_u64::deserialize(d).map(Wrap)
            }
        }
        Ok(Vec::<Wrap>::deserialize(deserializer)?
            .into_iter()
            .map(|w| w.0)
            .collect())
    }
}

/// serde adapters for `Vec<i64>` slot vectors.
pub mod wire_i64_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[i64], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(v.len()))?;
        for e in v {
            seq.serialize_element(&WireI64(*e))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<i64>, D::Error> {
        Ok(Vec::<WireI64>::deserialize(deserializer)?
            .into_iter()
            .map(|w| w.0)
            .collect())
    }
}

/// An ordered list of scalars matching some column list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Row(pub Vec<Scalar>);

impl Row {
    pub fn new(values: Vec<Scalar>) -> Row {
        Row(values.into_iter().map(Scalar::canonical).collect())
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A signed multiset of rows. Entries with weight zero are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    entries: BTreeMap<Row, i64>,
}

impl Bag {
    pub fn new() -> Bag {
        Bag::default()
    }

    /// Adds `weight` copies of `row`, coalescing and dropping zero entries.
    pub fn add(&mut self, row: Row, weight: i64) {
        if weight == 0 {
            return;
        }
        match self.entries.entry(row) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += weight;
                if *e.get() == 0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(weight);
            }
        }
    }

    pub fn multiplicity(&self, row: &Row) -> i64 {
        self.entries.get(row).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Row, i64)> {
        self.entries.iter().map(|(r, w)| (r, *w))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct rows.
    pub fn distinct_len(&self) -> usize {
        self.entries.len()
    }

    /// Total multiplicity (meaningful for non-negative bags).
    pub fn total_weight(&self) -> i64 {
        self.entries.values().sum()
    }

    /// Coalesced bag difference `self ∖⁺ other` as signed weights.
    pub fn diff(&self, other: &Bag) -> Vec<(Row, i64)> {
        let mut out: BTreeMap<&Row, i64> = BTreeMap::new();
        for (row, w) in self.iter() {
            *out.entry(row).or_insert(0) += w;
        }
        for (row, w) in other.iter() {
            *out.entry(row).or_insert(0) -= w;
        }
        out.into_iter()
            .filter(|(_, w)| *w != 0)
            .map(|(r, w)| (r.clone(), w))
            .collect()
    }
}

impl FromIterator<(Row, i64)> for Bag {
    fn from_iter<T: IntoIterator<Item = (Row, i64)>>(iter: T) -> Bag {
        let mut bag = Bag::new();
        for (row, w) in iter {
            bag.add(row, w);
        }
        bag
    }
}
