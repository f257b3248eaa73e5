//! The delta algebra shared by all tiers: window assignment, fixed-point
//! encoding, conversion of view deltas into per-group partial-aggregate
//! contributions, and application of released upserts to central views.
//!
//! All slot arithmetic is over the integers mod 2^64 (two's-complement
//! wrapping on i64), so the share servers can accumulate with single
//! machine additions.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::CentralViewState;
use crate::pds::Delta;
use crate::schema::catalog::{AggSlot, View};
use crate::value::{Row, Scalar};

pub use crate::schema::catalog::WindowSpec;

/// Global fixed-point scale: reals are carried as round-half-even
/// multiples of 2^-20.
pub const FIXED_POINT_BITS: u32 = 20;
pub const FIXED_POINT_SCALE: i64 = 1 << FIXED_POINT_BITS;
/// Contributor bound backing the validator's sum-overflow rule.
pub const MAX_CONTRIBUTIONS: u64 = 1 << 20;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IvmError {
    #[error("value {value} outside declared range [{lo}, {hi}]")]
    OutOfDeclaredRange { value: f64, lo: f64, hi: f64 },
    #[error("fixed-point encoding of {0} overflows 64 bits")]
    FixedPointOverflow(f64),
    #[error("AVG recomposition with zero count for group {0}")]
    ZeroCountAvg(String),
    #[error("malformed group key encoding")]
    BadGroupKey,
}

/// Window index of a timestamp: floor(ts / width), toward negative
/// infinity for negative timestamps.
pub fn assign_window(ts_seconds: i64, spec: &WindowSpec) -> i64 {
    ts_seconds.div_euclid(spec.width_seconds)
}

/// Encodes a real into the fixed-point field element, checking declared
/// bounds when present.
pub fn encode_fixed(x: f64, range: Option<(f64, f64)>) -> Result<i64, IvmError> {
    if let Some((lo, hi)) = range {
        if !(x >= lo && x <= hi) {
            return Err(IvmError::OutOfDeclaredRange { value: x, lo, hi });
        }
    }
    let scaled = (x * FIXED_POINT_SCALE as f64).round_ties_even();
    if !scaled.is_finite() || scaled < i64::MIN as f64 || scaled > i64::MAX as f64 {
        return Err(IvmError::FixedPointOverflow(x));
    }
    Ok(scaled as i64)
}

/// Fixed-point encoding of a numeric scalar; integers are scaled exactly.
pub fn encode_scalar_fixed(v: &Scalar, range: Option<(f64, f64)>) -> Result<i64, IvmError> {
    match v {
        Scalar::Int(i) => {
            if let Some((lo, hi)) = range {
                let x = *i as f64;
                if !(x >= lo && x <= hi) {
                    return Err(IvmError::OutOfDeclaredRange { value: x, lo, hi });
                }
            }
            i.checked_mul(FIXED_POINT_SCALE)
                .ok_or(IvmError::FixedPointOverflow(*i as f64))
        }
        Scalar::Float(x) => encode_fixed(*x, range),
        other => Err(IvmError::FixedPointOverflow(
            other.as_f64().unwrap_or(f64::NAN),
        )),
    }
}

pub fn decode_fixed(v: i64) -> f64 {
    v as f64 / FIXED_POINT_SCALE as f64
}

/// Decodes one reconstructed slot into its scalar value.
pub fn decode_slot(slot: &AggSlot, raw: i64) -> Scalar {
    match slot {
        AggSlot::Count => Scalar::Int(raw),
        AggSlot::Sum { dtype, .. } => match dtype {
            crate::value::DType::Int64 => Scalar::Int(raw / FIXED_POINT_SCALE),
            _ => Scalar::Float(decode_fixed(raw)),
        },
    }
}

/// Ordered scalars of a view's GROUP BY columns, with a bit-exact
/// canonical byte encoding used both as map key and wire form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey(pub Vec<Scalar>);

const TAG_INT: u8 = 0x01;
const TAG_FLOAT: u8 = 0x02;
const TAG_TEXT: u8 = 0x03;
const TAG_TS: u8 = 0x04;
const TAG_BOOL: u8 = 0x05;

impl GroupKey {
    /// Type-tagged, length-prefixed concatenation of the key scalars.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in &self.0 {
            match s {
                Scalar::Int(v) => {
                    out.push(TAG_INT);
                    out.extend_from_slice(&v.to_be_bytes());
                }
                Scalar::Float(v) => {
                    let canon = if *v == 0.0 { 0.0 } else { *v };
                    out.push(TAG_FLOAT);
                    out.extend_from_slice(&canon.to_bits().to_be_bytes());
                }
                Scalar::Text(t) => {
                    out.push(TAG_TEXT);
                    out.extend_from_slice(&(t.len() as u32).to_be_bytes());
                    out.extend_from_slice(t.as_bytes());
                }
                Scalar::Timestamp(v) => {
                    out.push(TAG_TS);
                    out.extend_from_slice(&v.to_be_bytes());
                }
                Scalar::Bool(v) => {
                    out.push(TAG_BOOL);
                    out.push(*v as u8);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<GroupKey, IvmError> {
        let mut scalars = Vec::new();
        let mut i = 0usize;
        let take = |i: &mut usize, n: usize| -> Result<&[u8], IvmError> {
            let end = i.checked_add(n).ok_or(IvmError::BadGroupKey)?;
            if end > bytes.len() {
                return Err(IvmError::BadGroupKey);
            }
            let s = &bytes[*i..end];
            *i = end;
            Ok(s)
        };
        while i < bytes.len() {
            let tag = bytes[i];
            i += 1;
            let s = match tag {
                TAG_INT => Scalar::Int(i64::from_be_bytes(take(&mut i, 8)?.try_into().unwrap())),
                TAG_FLOAT => Scalar::Float(f64::from_bits(u64::from_be_bytes(
                    take(&mut i, 8)?.try_into().unwrap(),
                ))),
                TAG_TEXT => {
                    let len = u32::from_be_bytes(take(&mut i, 4)?.try_into().unwrap()) as usize;
                    let raw = take(&mut i, len)?;
                    Scalar::Text(String::from_utf8(raw.to_vec()).map_err(|_| IvmError::BadGroupKey)?)
                }
                TAG_TS => {
                    Scalar::Timestamp(i64::from_be_bytes(take(&mut i, 8)?.try_into().unwrap()))
                }
                TAG_BOOL => Scalar::Bool(take(&mut i, 1)?[0] != 0),
                _ => return Err(IvmError::BadGroupKey),
            };
            scalars.push(s);
        }
        Ok(GroupKey(scalars))
    }

    pub fn to_b64(&self) -> String {
        B64.encode(self.encode())
    }

    pub fn from_b64(s: &str) -> Result<GroupKey, IvmError> {
        let bytes = B64.decode(s).map_err(|_| IvmError::BadGroupKey)?;
        GroupKey::decode(&bytes)
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", Row(self.0.clone()))
    }
}

/// One user's partial-aggregate update for a (view, window, group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub view: String,
    pub window_id: i64,
    pub group: GroupKey,
    #[serde(with = "crate::value::wire_i64_vec")]
    pub agg_values: Vec<i64>,
    /// True iff this user has not previously contributed to the triple.
    pub first_touch: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContribEntry {
    window_id: i64,
    group: GroupKey,
    #[serde(with = "crate::value::wire_i64_vec")]
    slots: Vec<i64>,
}

/// Per-(user, centralized-view) memory of touched groups and the running
/// contribution, kept client-side so contributor counts mean distinct
/// users.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ContribEntry>", into = "Vec<ContribEntry>")]
pub struct UserContribState {
    map: BTreeMap<(i64, GroupKey), Vec<i64>>,
}

impl UserContribState {
    pub fn has_touched(&self, window_id: i64, group: &GroupKey) -> bool {
        self.map.contains_key(&(window_id, group.clone()))
    }

    pub fn running(&self, window_id: i64, group: &GroupKey) -> Option<&Vec<i64>> {
        self.map.get(&(window_id, group.clone()))
    }
}

impl From<Vec<ContribEntry>> for UserContribState {
    fn from(entries: Vec<ContribEntry>) -> Self {
        UserContribState {
            map: entries
                .into_iter()
                .map(|e| ((e.window_id, e.group), e.slots))
                .collect(),
        }
    }
}

impl From<UserContribState> for Vec<ContribEntry> {
    fn from(state: UserContribState) -> Self {
        state
            .map
            .into_iter()
            .map(|((window_id, group), slots)| ContribEntry {
                window_id,
                group,
                slots,
            })
            .collect()
    }
}

/// Folds a delta against the centralized view it feeds into per-group
/// slot contributions: COUNT slots accumulate weights, SUM slots
/// accumulate weight-scaled fixed-point values. All-zero entries are
/// dropped before they touch the user state.
pub fn delta_to_contributions(
    delta: &Delta,
    view: &View,
    state: &mut UserContribState,
) -> Result<Vec<Contribution>, IvmError> {
    let layout = view
        .layout
        .as_ref()
        .expect("delta_to_contributions requires a centralized view");
    let mut acc: BTreeMap<(i64, GroupKey), Vec<i64>> = BTreeMap::new();
    for entry in &delta.entries {
        if !crate::pds::predicates_hold(&view.predicates, &entry.row) {
            continue;
        }
        let group = GroupKey(
            view.group_by
                .iter()
                .map(|&i| entry.row.0[i].clone())
                .collect(),
        );
        let slots = acc
            .entry((entry.window_id, group))
            .or_insert_with(|| vec![0i64; layout.slots.len()]);
        for (si, slot) in layout.slots.iter().enumerate() {
            match slot {
                AggSlot::Count => {
                    slots[si] = slots[si].wrapping_add(entry.weight);
                }
                AggSlot::Sum {
                    source_col, range, ..
                } => {
                    let enc = encode_scalar_fixed(&entry.row.0[*source_col], *range)?;
                    slots[si] = slots[si].wrapping_add(enc.wrapping_mul(entry.weight));
                }
            }
        }
    }

    let mut out = Vec::new();
    for ((window_id, group), slots) in acc {
        if slots.iter().all(|&s| s == 0) {
            continue;
        }
        let key = (window_id, group.clone());
        let first_touch = !state.map.contains_key(&key);
        let running = state
            .map
            .entry(key)
            .or_insert_with(|| vec![0i64; slots.len()]);
        for (r, s) in running.iter_mut().zip(&slots) {
            *r = r.wrapping_add(*s);
        }
        out.push(Contribution {
            view: view.name.clone(),
            window_id,
            group,
            agg_values: slots,
            first_touch,
        });
    }
    Ok(out)
}

/// A gate-approved aggregate row bound for the central store. `values`
/// are decoded (and possibly noised) slot scalars, in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedGroup {
    pub view: String,
    pub window_id: i64,
    pub group: GroupKey,
    pub values: Vec<Scalar>,
    pub revealed_count: u64,
}

/// Upserts a released group into a central view: AVG recomposes from its
/// SUM and COUNT slots, a group whose count slots all reconstruct to zero
/// is removed (every contributing row was retracted), and windows beyond
/// the retain horizon are evicted.
pub fn apply_upsert(
    state: &mut CentralViewState,
    released: &ReleasedGroup,
    epoch: i64,
) -> Result<(), IvmError> {
    state.upsert(released, epoch)
}
