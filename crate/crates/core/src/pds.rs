//! Per-user personal data store: decentralized base tables, local view
//! evaluation (joins stay plaintext here), and signed-multiset delta
//! emission at epoch boundaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ivm::{assign_window, WindowSpec};
use crate::schema::catalog::{
    AggFn, Predicate, ResolvedExpr, SchemaCatalog, Table, TablePlacement, View, ViewPlacement,
    ViewSource, WindowMode,
};
use crate::value::{Bag, DType, Row, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PdsError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} is not writable from a personal data store")]
    NotWritable(String),
    #[error("type mismatch for table {table}: {detail}")]
    TypeMismatch { table: String, detail: String },
    #[error("delete of absent row in table {0}")]
    DeleteOfAbsentRow(String),
    #[error("non-monotone epoch for view {view}: last emitted {last}, got {got}")]
    NonMonotoneEpoch { view: String, last: i64, got: i64 },
    #[error("view {0} has no TIMESTAMP column for EVENT_TIME windows")]
    NoEventTimeColumn(String),
    #[error("view {0} is not local to a personal data store")]
    NotLocalView(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOp {
    Insert,
    Delete,
}

/// One coalesced signed-multiset change against a decentralized view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub row: Row,
    pub weight: i64,
    pub window_id: i64,
}

/// Signed multiset of row changes for one view; entries are coalesced per
/// (row, window) and weights are nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub view: String,
    pub entries: Vec<DeltaEntry>,
}

impl Delta {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub epoch: i64,
    pub view: String,
    pub delta: Delta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewSnapshot {
    pub last_epoch: Option<i64>,
    pub rows: Bag,
}

/// A user's personal database: base tables (plus local copies of
/// replicated tables), last materialized view states, and the append-only
/// export log backing the transparency report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PdsDoc", into = "PdsDoc")]
pub struct LocalStore {
    pub user_id: String,
    pub tables: BTreeMap<String, Bag>,
    pub view_snapshots: BTreeMap<String, ViewSnapshot>,
    pub export_log: Vec<ExportRecord>,
}

impl LocalStore {
    pub fn new(user_id: impl Into<String>) -> LocalStore {
        LocalStore {
            user_id: user_id.into(),
            tables: BTreeMap::new(),
            view_snapshots: BTreeMap::new(),
            export_log: Vec::new(),
        }
    }

    /// Replaces the local copy of a replicated table (full-state push).
    pub fn replace_table(&mut self, table: &str, rows: Bag) {
        self.tables.insert(table.to_string(), rows);
    }
}

// Persistence document, format 1: multisets are expanded to row lists.
#[derive(Serialize, Deserialize)]
struct PdsDoc {
    format: u32,
    user_id: String,
    tables: BTreeMap<String, Vec<Row>>,
    snapshots: BTreeMap<String, SnapshotDoc>,
    export_log: Vec<ExportRecord>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    last_epoch: Option<i64>,
    rows: Vec<Row>,
}

fn expand(bag: &Bag) -> Vec<Row> {
    let mut out = Vec::new();
    for (row, w) in bag.iter() {
        for _ in 0..w.max(0) {
            out.push(row.clone());
        }
    }
    out
}

fn collect(rows: Vec<Row>) -> Bag {
    rows.into_iter().map(|r| (r, 1)).collect()
}

impl From<LocalStore> for PdsDoc {
    fn from(s: LocalStore) -> PdsDoc {
        PdsDoc {
            format: 1,
            user_id: s.user_id,
            tables: s.tables.iter().map(|(k, v)| (k.clone(), expand(v))).collect(),
            snapshots: s
                .view_snapshots
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        SnapshotDoc {
                            last_epoch: v.last_epoch,
                            rows: expand(&v.rows),
                        },
                    )
                })
                .collect(),
            export_log: s.export_log,
        }
    }
}

impl TryFrom<PdsDoc> for LocalStore {
    type Error = String;
    fn try_from(doc: PdsDoc) -> Result<LocalStore, String> {
        if doc.format != 1 {
            return Err(format!("unsupported personal store format {}", doc.format));
        }
        Ok(LocalStore {
            user_id: doc.user_id,
            tables: doc
                .tables
                .into_iter()
                .map(|(k, v)| (k, collect(v)))
                .collect(),
            view_snapshots: doc
                .snapshots
                .into_iter()
                .map(|(k, v)| {
                    (
                        k,
                        ViewSnapshot {
                            last_epoch: v.last_epoch,
                            rows: collect(v.rows),
                        },
                    )
                })
                .collect(),
            export_log: doc.export_log,
        })
    }
}

fn check_row(table: &Table, row: &Row) -> Result<(), PdsError> {
    if row.arity() != table.columns.len() {
        return Err(PdsError::TypeMismatch {
            table: table.name.clone(),
            detail: format!(
                "expected {} values, got {}",
                table.columns.len(),
                row.arity()
            ),
        });
    }
    for (v, c) in row.0.iter().zip(&table.columns) {
        if v.dtype() != c.dtype {
            return Err(PdsError::TypeMismatch {
                table: table.name.clone(),
                detail: format!("column {} expects {}, got {}", c.name, c.dtype, v.dtype()),
            });
        }
        if let Scalar::Float(x) = v {
            if !x.is_finite() {
                return Err(PdsError::TypeMismatch {
                    table: table.name.clone(),
                    detail: format!("column {} rejects non-finite value", c.name),
                });
            }
        }
    }
    Ok(())
}

/// Applies a local INSERT or DELETE to a decentralized base table.
/// View snapshots are untouched; deltas are computed at epoch close.
pub fn apply_update(
    store: &mut LocalStore,
    catalog: &SchemaCatalog,
    table: &str,
    op: UpdateOp,
    row: Row,
) -> Result<(), PdsError> {
    let def = catalog
        .table(table)
        .ok_or_else(|| PdsError::UnknownTable(table.to_string()))?;
    if def.placement != TablePlacement::Decentralized {
        return Err(PdsError::NotWritable(table.to_string()));
    }
    check_row(def, &row)?;
    let row = Row::new(row.0);
    let bag = store.tables.entry(table.to_string()).or_default();
    match op {
        UpdateOp::Insert => bag.add(row, 1),
        UpdateOp::Delete => {
            if bag.multiplicity(&row) <= 0 {
                return Err(PdsError::DeleteOfAbsentRow(table.to_string()));
            }
            bag.add(row, -1);
        }
    }
    Ok(())
}

pub fn predicates_hold(predicates: &[Predicate], row: &Row) -> bool {
    predicates
        .iter()
        .all(|p| p.cmp.holds(row.0[p.column].cmp(&p.literal)))
}

/// Evaluates a decentralized view over the store with bag semantics:
/// equi-joins, WHERE filter, then per-group aggregates when grouped.
pub fn eval_view(store: &LocalStore, view: &View) -> Result<Bag, PdsError> {
    if view.placement != ViewPlacement::Decentralized {
        return Err(PdsError::NotLocalView(view.name.clone()));
    }
    let source = build_source(view, store)?;
    Ok(eval_select(view, &source))
}

fn build_source(view: &View, store: &LocalStore) -> Result<Vec<(Row, i64)>, PdsError> {
    let ViewSource::Tables { base, joins } = &view.source else {
        return Err(PdsError::NotLocalView(view.name.clone()));
    };
    let empty = Bag::new();
    let fetch = |name: &str| store.tables.get(name).unwrap_or(&empty);
    let mut rows: Vec<(Row, i64)> = fetch(base).iter().map(|(r, w)| (r.clone(), w)).collect();
    for j in joins {
        let right = fetch(&j.table);
        let mut next = Vec::new();
        for (lrow, lw) in &rows {
            for (rrow, rw) in right.iter() {
                if lrow.0[j.left_col] == rrow.0[j.right_col] {
                    let mut values = lrow.0.clone();
                    for (i, v) in rrow.0.iter().enumerate() {
                        if i != j.right_col {
                            values.push(v.clone());
                        }
                    }
                    next.push((Row(values), lw * rw));
                }
            }
        }
        rows = next;
    }
    Ok(rows)
}

/// Bag-semantics SELECT evaluation over a materialized source.
pub fn eval_select(view: &View, source: &[(Row, i64)]) -> Bag {
    let filtered: Vec<(&Row, i64)> = source
        .iter()
        .filter(|(r, _)| predicates_hold(&view.predicates, r))
        .map(|(r, w)| (r, *w))
        .collect();

    let grouped = !view.group_by.is_empty() || view.has_aggregates();
    if !grouped {
        return filtered
            .into_iter()
            .map(|(row, w)| {
                let values = view
                    .items
                    .iter()
                    .map(|item| match item.expr {
                        ResolvedExpr::Column(idx) => row.0[idx].clone(),
                        ResolvedExpr::Agg { .. } => unreachable!("non-grouped view has no aggs"),
                    })
                    .collect();
                (Row::new(values), w)
            })
            .collect();
    }

    let mut groups: BTreeMap<Vec<Scalar>, Vec<(&Row, i64)>> = BTreeMap::new();
    for (row, w) in filtered {
        let key: Vec<Scalar> = view.group_by.iter().map(|&i| row.0[i].clone()).collect();
        groups.entry(key).or_default().push((row, w));
    }

    let mut out = Bag::new();
    for (key, members) in groups {
        let values: Vec<Scalar> = view
            .items
            .iter()
            .map(|item| match &item.expr {
                ResolvedExpr::Column(idx) => {
                    let key_pos = view
                        .group_by
                        .iter()
                        .position(|g| g == idx)
                        .expect("validated: plain item is grouped");
                    key[key_pos].clone()
                }
                ResolvedExpr::Agg { agg, arg } => eval_agg(*agg, *arg, &members, view),
            })
            .collect();
        out.add(Row::new(values), 1);
    }
    out
}

fn eval_agg(agg: AggFn, arg: Option<usize>, members: &[(&Row, i64)], view: &View) -> Scalar {
    let count: i64 = members.iter().map(|(_, w)| *w).sum();
    match agg {
        AggFn::Count => Scalar::Int(count),
        AggFn::Sum | AggFn::Avg => {
            let idx = arg.expect("validated: SUM/AVG argument");
            match view.source_columns[idx].dtype {
                DType::Int64 => {
                    let sum: i64 = members
                        .iter()
                        .map(|(r, w)| match &r.0[idx] {
                            Scalar::Int(v) => v.wrapping_mul(*w),
                            _ => 0,
                        })
                        .sum();
                    if agg == AggFn::Sum {
                        Scalar::Int(sum)
                    } else {
                        Scalar::Float(sum as f64 / count as f64)
                    }
                }
                _ => {
                    let sum: f64 = members
                        .iter()
                        .map(|(r, w)| r.0[idx].as_f64().unwrap_or(0.0) * *w as f64)
                        .sum();
                    if agg == AggFn::Sum {
                        Scalar::Float(sum)
                    } else {
                        Scalar::Float(sum / count as f64)
                    }
                }
            }
        }
        AggFn::Min | AggFn::Max => {
            let idx = arg.expect("validated: MIN/MAX argument");
            let mut vals: Vec<&Scalar> = members.iter().map(|(r, _)| &r.0[idx]).collect();
            vals.sort();
            let pick = if agg == AggFn::Min {
                vals.first()
            } else {
                vals.last()
            };
            (*pick.expect("groups are nonempty")).clone()
        }
    }
}

/// Closes an epoch for one view: returns the coalesced bag difference
/// against the snapshot with window tags, advances the snapshot, and logs
/// the delta when nonempty. An empty delta is returned but never logged
/// (nothing is transmitted).
pub fn emit_delta(
    store: &mut LocalStore,
    view: &View,
    window: Option<&WindowSpec>,
    epoch: i64,
    arrival_ts: i64,
) -> Result<Delta, PdsError> {
    let snapshot = store.view_snapshots.entry(view.name.clone()).or_default();
    if let Some(last) = snapshot.last_epoch {
        if epoch <= last {
            return Err(PdsError::NonMonotoneEpoch {
                view: view.name.clone(),
                last,
                got: epoch,
            });
        }
    }
    let current = eval_view(store, view)?;
    let snapshot = store.view_snapshots.entry(view.name.clone()).or_default();
    let changes = current.diff(&snapshot.rows);

    let mut entries = Vec::new();
    for (row, weight) in changes {
        let window_id = match window {
            None => 0,
            Some(spec) => match spec.mode {
                WindowMode::ArrivalTime => assign_window(arrival_ts, spec),
                WindowMode::EventTime => {
                    let idx = view
                        .event_ts_col
                        .ok_or_else(|| PdsError::NoEventTimeColumn(view.name.clone()))?;
                    match row.0[idx] {
                        Scalar::Timestamp(ts) => assign_window(ts, spec),
                        _ => return Err(PdsError::NoEventTimeColumn(view.name.clone())),
                    }
                }
            },
        };
        entries.push(DeltaEntry {
            row,
            weight,
            window_id,
        });
    }

    snapshot.rows = current;
    snapshot.last_epoch = Some(epoch);

    let delta = Delta {
        view: view.name.clone(),
        entries,
    };
    if !delta.is_empty() {
        store.export_log.push(ExportRecord {
            epoch,
            view: view.name.clone(),
            delta: delta.clone(),
        });
    }
    Ok(delta)
}

/// Everything this user ever exported, per epoch and view — a pure
/// function of the export log.
pub fn inspect_exports(store: &LocalStore, since_epoch: i64) -> String {
    let mut out = format!(
        "export log for user {} (since epoch {since_epoch})\n",
        store.user_id
    );
    let mut any = false;
    for rec in &store.export_log {
        if rec.epoch < since_epoch {
            continue;
        }
        any = true;
        out.push_str(&format!("epoch {}, view {}:\n", rec.epoch, rec.view));
        for e in &rec.delta.entries {
            out.push_str(&format!(
                "  {}{} x {} [window {}]\n",
                if e.weight >= 0 { "+" } else { "" },
                e.weight,
                e.row,
                e.window_id
            ));
        }
    }
    if !any {
        out.push_str("(no exports)\n");
    }
    out
}
