//! Event-log checkers: the log carries every inter-actor byte, so gate
//! soundness, share distribution and client isolation are verified
//! directly against it.

use std::collections::{BTreeMap, BTreeSet};

use super::wire::{Envelope, Message};
use crate::schema::catalog::{SchemaCatalog, ViewPlacement};

/// No Release may exist for a group whose revealed count is below the
/// view's effective minimum group size, and every Release must follow a
/// positive GateDecision for the same (view, window, group, epoch).
pub fn check_gate_soundness(log: &[Envelope], catalog: &SchemaCatalog) -> Result<(), String> {
    let mut decisions: BTreeMap<(i64, String, i64, String), (u64, bool)> = BTreeMap::new();
    for env in log {
        if let Message::GateDecision {
            view,
            window,
            group_key_b64,
            revealed_count,
            released,
        } = &env.body
        {
            let k = catalog
                .view(view)
                .map(|v| v.effective_min_group())
                .ok_or_else(|| format!("decision for unknown view {view}"))?;
            if *released && *revealed_count < k {
                return Err(format!(
                    "gate released {view}/{window}/{group_key_b64} with count {revealed_count} < {k}"
                ));
            }
            if !*released && *revealed_count >= k {
                return Err(format!(
                    "gate suppressed {view}/{window}/{group_key_b64} with count {revealed_count} >= {k}"
                ));
            }
            decisions.insert(
                (env.epoch, view.clone(), *window, group_key_b64.clone()),
                (*revealed_count, *released),
            );
        }
    }
    for env in log {
        if let Message::Release {
            view,
            window,
            group_key_b64,
            ..
        } = &env.body
        {
            match decisions.get(&(env.epoch, view.clone(), *window, group_key_b64.clone())) {
                Some((_, true)) => {}
                Some((count, false)) => {
                    return Err(format!(
                        "release without positive decision for {view}/{window} (count {count})"
                    ));
                }
                None => {
                    return Err(format!(
                        "release without any gate decision for {view}/{window}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Every logical contribution must be split across exactly three distinct
/// servers with share indices {0, 1, 2}; no share pair may ever target
/// the same server.
pub fn check_share_distribution(log: &[Envelope]) -> Result<(), String> {
    let mut families: BTreeMap<(i64, String, String), Vec<(u8, String)>> = BTreeMap::new();
    for env in log {
        if let Message::Upload(u) = &env.body {
            families
                .entry((env.epoch, env.from.clone(), u.upload_id.clone()))
                .or_default()
                .push((u.share_index, env.to.clone()));
        }
    }
    for ((epoch, from, upload_id), mut shares) in families {
        shares.sort();
        let indices: Vec<u8> = shares.iter().map(|(i, _)| *i).collect();
        if indices != vec![0, 1, 2] {
            return Err(format!(
                "upload {upload_id} from {from} at epoch {epoch} has share indices {indices:?}"
            ));
        }
        let servers: BTreeSet<&String> = shares.iter().map(|(_, to)| to).collect();
        if servers.len() != 3 {
            return Err(format!(
                "upload {upload_id} from {from} at epoch {epoch} targets {} distinct servers",
                servers.len()
            ));
        }
    }
    Ok(())
}

/// Clients may originate only Upload and Ack messages; upload group keys
/// must decode to the view's group-by arity over non-sensitive lineage
/// (sensitive values leave clients only as shares).
pub fn check_client_isolation(
    log: &[Envelope],
    catalog: &SchemaCatalog,
    clients: &[String],
) -> Result<(), String> {
    let client_set: BTreeSet<&String> = clients.iter().collect();
    for env in log {
        if !client_set.contains(&env.from) {
            continue;
        }
        match &env.body {
            Message::Ack { .. } => {}
            Message::Upload(u) => {
                let view = catalog
                    .view(&u.view)
                    .ok_or_else(|| format!("upload for unknown view {}", u.view))?;
                if view.placement != ViewPlacement::Centralized {
                    return Err(format!("upload targets non-centralized view {}", u.view));
                }
                let key = crate::ivm::GroupKey::from_b64(&u.group_key_b64)
                    .map_err(|_| format!("upload {} has malformed group key", u.upload_id))?;
                if key.0.len() != view.group_by.len() {
                    return Err(format!(
                        "upload {} group key arity {} != GROUP BY arity {}",
                        u.upload_id,
                        key.0.len(),
                        view.group_by.len()
                    ));
                }
                for (i, &col) in view.group_by.iter().enumerate() {
                    let meta = &view.source_columns[col];
                    if meta.sensitive {
                        return Err(format!(
                            "upload {} carries plaintext group key over sensitive column {}",
                            u.upload_id, meta.name
                        ));
                    }
                    if key.0[i].dtype() != meta.dtype {
                        return Err(format!(
                            "upload {} group key slot {i} has wrong type",
                            u.upload_id
                        ));
                    }
                }
                let slots = view
                    .layout
                    .as_ref()
                    .map(|l| l.slot_count())
                    .unwrap_or(0);
                if u.agg_shares.len() != slots {
                    return Err(format!(
                        "upload {} carries {} shares, layout has {slots} slots",
                        u.upload_id,
                        u.agg_shares.len()
                    ));
                }
            }
            other => {
                return Err(format!(
                    "client {} originated a {} message",
                    env.from,
                    other.kind()
                ));
            }
        }
    }
    Ok(())
}

/// Cumulative distinct uploaders per (view, window), recomputed from the
/// log: the independent reference for completeness statistics.
pub fn completeness_from_log(log: &[Envelope]) -> BTreeMap<(String, i64), BTreeSet<String>> {
    let mut out: BTreeMap<(String, i64), BTreeSet<String>> = BTreeMap::new();
    for env in log {
        if let Message::Upload(u) = &env.body {
            out.entry((u.view.clone(), u.window_id))
                .or_default()
                .insert(env.from.clone());
        }
    }
    out
}

/// Released (view, window) pairs in log order.
pub fn releases_in_log(log: &[Envelope]) -> Vec<(i64, String, i64, String)> {
    log.iter()
        .filter_map(|env| match &env.body {
            Message::Release {
                view,
                window,
                group_key_b64,
                ..
            } => Some((env.epoch, view.clone(), *window, group_key_b64.clone())),
            _ => None,
        })
        .collect()
}
