//! One logical share server: appends rows or adds shares into single
//! accumulator tables, never holding more than its own share of anything.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upload wire message; one is sent to each server per contribution,
/// differing only in `share_index` and the share values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upload {
    pub epoch: i64,
    pub upload_id: String,
    pub view: String,
    pub window_id: i64,
    pub group_key_b64: String,
    pub share_index: u8,
    #[serde(with = "crate::value::wire_u64_vec")]
    pub agg_shares: Vec<u64>,
    #[serde(with = "crate::value::wire_u64")]
    pub count_share: u64,
    pub first_touch_declared: bool,
}

/// Accumulator key: (view, window, canonical group-key bytes).
pub type AccKey = (String, i64, Vec<u8>);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccEntry {
    #[serde(with = "crate::value::wire_u64_vec")]
    pub agg: Vec<u64>,
    #[serde(with = "crate::value::wire_u64")]
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochLog {
    pub applied: BTreeSet<String>,
    pub touched: BTreeSet<AccKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub index: usize,
    pub acc: BTreeMap<AccKey, AccEntry>,
    pub epoch_log: BTreeMap<i64, EpochLog>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServerError {
    #[error("upload for share index {got} delivered to server {expected}")]
    WrongShareIndex { expected: usize, got: usize },
    #[error("share vector length {got} does not match accumulator width {expected}")]
    SlotCountMismatch { expected: usize, got: usize },
    #[error("malformed group key in upload {0}")]
    BadGroupKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    /// Replayed (epoch, upload id): ignored, at-least-once delivery is
    /// tolerated.
    Duplicate,
}

impl ServerState {
    pub fn new(index: usize) -> ServerState {
        ServerState {
            index,
            acc: BTreeMap::new(),
            epoch_log: BTreeMap::new(),
        }
    }

    /// Accumulator keys touched at `epoch` for one (view, window).
    pub fn touched_groups(&self, epoch: i64, view: &str, window_id: i64) -> BTreeSet<Vec<u8>> {
        self.epoch_log
            .get(&epoch)
            .map(|log| {
                log.touched
                    .iter()
                    .filter(|(v, w, _)| v == view && *w == window_id)
                    .map(|(_, _, g)| g.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// (view, window) pairs touched at `epoch`.
    pub fn touched_windows(&self, epoch: i64) -> BTreeSet<(String, i64)> {
        self.epoch_log
            .get(&epoch)
            .map(|log| {
                log.touched
                    .iter()
                    .map(|(v, w, _)| (v.clone(), *w))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Applies an upload by field addition: the accumulator entry is created
/// at zero when absent, aggregate shares are added slot-wise, and the
/// count share accumulates this user's first-touch indicator share.
pub fn server_apply(server: &mut ServerState, upload: &Upload) -> Result<ApplyOutcome, ServerError> {
    if upload.share_index as usize != server.index {
        return Err(ServerError::WrongShareIndex {
            expected: server.index,
            got: upload.share_index as usize,
        });
    }
    let log = server.epoch_log.entry(upload.epoch).or_default();
    if log.applied.contains(&upload.upload_id) {
        log::warn!(
            "server {} ignoring duplicate upload {} at epoch {}",
            server.index,
            upload.upload_id,
            upload.epoch
        );
        return Ok(ApplyOutcome::Duplicate);
    }
    let group = base64::Engine::decode(
        &base64::engine::general_purpose::STANDARD,
        &upload.group_key_b64,
    )
    .map_err(|_| ServerError::BadGroupKey(upload.upload_id.clone()))?;

    let key: AccKey = (upload.view.clone(), upload.window_id, group);
    let entry = server
        .acc
        .entry(key.clone())
        .or_insert_with(|| AccEntry {
            agg: vec![0; upload.agg_shares.len()],
            count: 0,
        });
    if entry.agg.len() != upload.agg_shares.len() {
        return Err(ServerError::SlotCountMismatch {
            expected: entry.agg.len(),
            got: upload.agg_shares.len(),
        });
    }
    for (slot, share) in entry.agg.iter_mut().zip(&upload.agg_shares) {
        *slot = slot.wrapping_add(*share);
    }
    entry.count = entry.count.wrapping_add(upload.count_share);

    let log = server.epoch_log.get_mut(&upload.epoch).expect("created above");
    log.applied.insert(upload.upload_id.clone());
    log.touched.insert(key);
    Ok(ApplyOutcome::Applied)
}
