//! The privacy gate: combines count shares to reveal only per-group
//! contributor counts, and reconstructs aggregate values exclusively for
//! groups meeting the minimum granularity.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::server::ServerState;
use crate::ivm::{decode_slot, GroupKey, ReleasedGroup};
use crate::schema::catalog::{NoiseSpec, View};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub view: String,
    pub window_id: i64,
    pub group: GroupKey,
    pub revealed_count: u64,
    pub released: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GateError {
    #[error("share set incomplete for view {view} window {window_id} at epoch {epoch}")]
    ShareSetIncomplete {
        view: String,
        window_id: i64,
        epoch: i64,
    },
    #[error("malformed group key in server accumulator")]
    BadGroupKey,
}

#[derive(Debug, Clone, Default)]
pub struct GateOutcome {
    pub released: Vec<ReleasedGroup>,
    pub decisions: Vec<GateDecision>,
}

/// Gates one (view, window) after the epoch barrier. For every group the
/// epoch touched, the three cumulative count shares are combined to
/// reveal only the distinct-contributor count; aggregate shares are
/// combined, decoded and (optionally) noised solely for groups at or
/// above `k`. Suppressed groups leave nothing but their count — shares
/// stay put for later epochs. Releases are all-or-nothing per group.
pub fn gate_and_release(
    servers: &[ServerState; 3],
    view: &View,
    window_id: i64,
    epoch: i64,
    k: u64,
    noise: Option<NoiseSpec>,
    rng: &mut impl RngCore,
) -> Result<GateOutcome, GateError> {
    let layout = view
        .layout
        .as_ref()
        .expect("gate runs on centralized views");

    let touched = servers[0].touched_groups(epoch, &view.name, window_id);
    for server in &servers[1..] {
        if server.touched_groups(epoch, &view.name, window_id) != touched {
            return Err(GateError::ShareSetIncomplete {
                view: view.name.clone(),
                window_id,
                epoch,
            });
        }
    }

    let mut outcome = GateOutcome::default();
    for group_bytes in touched {
        let key = (view.name.clone(), window_id, group_bytes.clone());
        let entries = [
            servers[0].acc.get(&key),
            servers[1].acc.get(&key),
            servers[2].acc.get(&key),
        ];
        if entries.iter().any(|e| e.is_none()) {
            return Err(GateError::ShareSetIncomplete {
                view: view.name.clone(),
                window_id,
                epoch,
            });
        }
        let entries = entries.map(|e| e.expect("checked above"));
        let group = GroupKey::decode(&group_bytes).map_err(|_| GateError::BadGroupKey)?;

        let revealed_count =
            super::combine(entries[0].count, entries[1].count, entries[2].count);
        let released = revealed_count >= k;
        outcome.decisions.push(GateDecision {
            view: view.name.clone(),
            window_id,
            group: group.clone(),
            revealed_count,
            released,
        });
        if !released {
            continue;
        }

        let mut values = Vec::with_capacity(layout.slots.len());
        for (si, slot) in layout.slots.iter().enumerate() {
            let raw = super::combine(
                entries[0].agg[si],
                entries[1].agg[si],
                entries[2].agg[si],
            ) as i64;
            values.push(decode_slot(slot, raw));
        }
        if let Some(noise) = noise {
            super::noise::apply_noise(&mut values, &layout.slots, noise.scale, rng);
        }
        outcome.released.push(ReleasedGroup {
            view: view.name.clone(),
            window_id,
            group,
            values,
            revealed_count,
        });
    }
    Ok(outcome)
}
