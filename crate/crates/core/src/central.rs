//! Centralized database tier: released materialized views with
//! completeness statistics, centralized/replicated tables, analyst
//! queries, and full-state replica pushes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ivm::{GroupKey, IvmError, ReleasedGroup};
use crate::pds::{self, UpdateOp};
use crate::schema::catalog::{
    AggFn, AggLayout, ColumnMeta, OutputMap, Predicate, ResolvedExpr, ResolvedItem, SchemaCatalog,
    Table, TablePlacement, View, ViewOptions, ViewPlacement, ViewSource,
};
use crate::schema::{parse_query, ParseError};
use crate::value::{Bag, DType, Row, Scalar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub reporting_users: u64,
    pub registered_users: u64,
}

impl Completeness {
    pub fn ratio(&self) -> f64 {
        if self.registered_users == 0 {
            0.0
        } else {
            self.reporting_users as f64 / self.registered_users as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralViewRow {
    pub group: GroupKey,
    pub window_id: i64,
    /// Final aggregate values (AVG recomposed), one per non-group item.
    pub values: Vec<Scalar>,
    pub released_at_epoch: i64,
}

/// Materialized state of one centralized view. Rows are pure projections
/// of gate releases; the share servers hold the authoritative totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralViewState {
    pub view: String,
    layout: AggLayout,
    retain: Option<u32>,
    pub rows: BTreeMap<(i64, GroupKey), CentralViewRow>,
    pub completeness: BTreeMap<i64, Completeness>,
    pub last_epoch_applied: i64,
    /// High-water mark over released windows; the retain horizon never
    /// moves backwards, even if the newest window's rows are retracted.
    pub max_window_seen: Option<i64>,
}

impl CentralViewState {
    pub fn new(view: &View) -> CentralViewState {
        CentralViewState {
            view: view.name.clone(),
            layout: view.layout.clone().expect("centralized view has a layout"),
            retain: view.options.window.and_then(|w| w.retain),
            rows: BTreeMap::new(),
            completeness: BTreeMap::new(),
            last_epoch_applied: 0,
            max_window_seen: None,
        }
    }

    /// Upsert a released group. A group whose count slots all reconstruct
    /// to zero has had every contributing row retracted and is removed.
    pub(crate) fn upsert(&mut self, released: &ReleasedGroup, epoch: i64) -> Result<(), IvmError> {
        let key = (released.window_id, released.group.clone());
        self.max_window_seen = Some(
            self.max_window_seen
                .map_or(released.window_id, |m| m.max(released.window_id)),
        );
        let counts: Vec<i64> = self
            .layout
            .slots
            .iter()
            .zip(&released.values)
            .filter_map(|(slot, v)| match (slot, v) {
                (crate::schema::catalog::AggSlot::Count, Scalar::Int(n)) => Some(*n),
                _ => None,
            })
            .collect();

        if !counts.is_empty() && counts.iter().all(|&c| c == 0) {
            self.rows.remove(&key);
        } else {
            let mut values = Vec::new();
            for map in &self.layout.items {
                match *map {
                    OutputMap::Group { .. } => continue,
                    OutputMap::Count { slot } | OutputMap::Sum { slot } => {
                        values.push(released.values[slot].clone());
                    }
                    OutputMap::Avg {
                        sum_slot,
                        count_slot,
                    } => {
                        let count = match released.values[count_slot] {
                            Scalar::Int(n) => n,
                            _ => 0,
                        };
                        if count == 0 {
                            return Err(IvmError::ZeroCountAvg(released.group.to_string()));
                        }
                        let sum = released.values[sum_slot].as_f64().unwrap_or(0.0);
                        values.push(Scalar::Float(sum / count as f64));
                    }
                }
            }
            self.rows.insert(
                key,
                CentralViewRow {
                    group: released.group.clone(),
                    window_id: released.window_id,
                    values,
                    released_at_epoch: epoch,
                },
            );
        }
        self.last_epoch_applied = epoch;
        self.enforce_retention();
        Ok(())
    }

    /// Evicts windows older than (max window - retain + 1).
    fn enforce_retention(&mut self) {
        let Some(retain) = self.retain else {
            return;
        };
        let Some(max_w) = self.max_window_seen else {
            return;
        };
        let horizon = max_w - retain as i64 + 1;
        self.rows.retain(|(w, _), _| *w >= horizon);
        self.completeness.retain(|w, _| *w >= horizon);
    }

    pub fn record_completeness(&mut self, window_id: i64, reporting: u64, registered: u64) {
        if let (Some(retain), Some(max_w)) = (self.retain, self.max_window_seen) {
            if window_id < max_w - retain as i64 + 1 {
                return;
            }
        }
        self.completeness.insert(
            window_id,
            Completeness {
                reporting_users: reporting.min(registered),
                registered_users: registered,
            },
        );
    }

    pub fn retained_windows(&self) -> Vec<i64> {
        let mut ws: Vec<i64> = self.rows.keys().map(|(w, _)| *w).collect();
        ws.dedup();
        ws
    }

    /// Materializes visible rows (group columns + aggregate values) with
    /// their window ids.
    pub fn materialize(&self) -> Vec<(i64, Row)> {
        self.rows
            .values()
            .map(|row| {
                let mut values = Vec::new();
                let mut agg_iter = row.values.iter();
                for map in &self.layout.items {
                    match *map {
                        OutputMap::Group { key_idx } => {
                            values.push(row.group.0[key_idx].clone());
                        }
                        _ => values.push(
                            agg_iter
                                .next()
                                .expect("values align with non-group items")
                                .clone(),
                        ),
                    }
                }
                (row.window_id, Row::new(values))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedTableState {
    pub table: String,
    pub rows: Bag,
    pub version: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CentralError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} is not owned by the central store")]
    NotCentralTable(String),
    #[error("unknown centralized view {0}")]
    UnknownView(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("delete of absent row in table {0}")]
    DeleteOfAbsentRow(String),
    #[error(transparent)]
    Upsert(#[from] IvmError),
}

/// All state owned by the central actor.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralStore {
    pub views: BTreeMap<String, CentralViewState>,
    pub tables: BTreeMap<String, Bag>,
    pub replicated: BTreeMap<String, ReplicatedTableState>,
}

impl CentralStore {
    pub fn new(catalog: &SchemaCatalog) -> CentralStore {
        let views = catalog
            .centralized_views()
            .map(|v| (v.name.clone(), CentralViewState::new(v)))
            .collect();
        let tables = catalog
            .tables
            .values()
            .filter(|t| t.placement == TablePlacement::Centralized)
            .map(|t| (t.name.clone(), Bag::new()))
            .collect();
        let replicated = catalog
            .replicated_tables()
            .map(|t| {
                (
                    t.name.clone(),
                    ReplicatedTableState {
                        table: t.name.clone(),
                        rows: Bag::new(),
                        version: 0,
                    },
                )
            })
            .collect();
        CentralStore {
            views,
            tables,
            replicated,
        }
    }

    pub fn ingest_release(&mut self, released: &ReleasedGroup, epoch: i64) -> Result<(), CentralError> {
        let state = self
            .views
            .get_mut(&released.view)
            .ok_or_else(|| CentralError::UnknownView(released.view.clone()))?;
        crate::ivm::apply_upsert(state, released, epoch)?;
        Ok(())
    }

    pub fn record_completeness(
        &mut self,
        view: &str,
        window_id: i64,
        reporting: u64,
        registered: u64,
    ) -> Result<(), CentralError> {
        let state = self
            .views
            .get_mut(view)
            .ok_or_else(|| CentralError::UnknownView(view.to_string()))?;
        state.record_completeness(window_id, reporting, registered);
        Ok(())
    }

    /// INSERT/DELETE on a centralized or replicated table; replicated
    /// tables bump their version on every change.
    pub fn apply_table_update(
        &mut self,
        catalog: &SchemaCatalog,
        table: &str,
        op: UpdateOp,
        row: Row,
    ) -> Result<(), CentralError> {
        let def = catalog
            .table(table)
            .ok_or_else(|| CentralError::UnknownTable(table.to_string()))?;
        check_row(def, &row)?;
        let row = Row::new(row.0);
        let bag = match def.placement {
            TablePlacement::Centralized => self
                .tables
                .get_mut(table)
                .ok_or_else(|| CentralError::UnknownTable(table.to_string()))?,
            TablePlacement::Replicated => {
                let state = self
                    .replicated
                    .get_mut(table)
                    .ok_or_else(|| CentralError::UnknownTable(table.to_string()))?;
                state.version += 1;
                &mut state.rows
            }
            TablePlacement::Decentralized => {
                return Err(CentralError::NotCentralTable(table.to_string()));
            }
        };
        match op {
            UpdateOp::Insert => bag.add(row, 1),
            UpdateOp::Delete => {
                if bag.multiplicity(&row) <= 0 {
                    return Err(CentralError::DeleteOfAbsentRow(table.to_string()));
                }
                bag.add(row, -1);
            }
        }
        Ok(())
    }

    /// Full-state replica push: (version, complete row set).
    pub fn build_replica_push(&self, table: &str) -> Option<(u64, Vec<Row>)> {
        self.replicated.get(table).map(|state| {
            let mut rows = Vec::new();
            for (row, w) in state.rows.iter() {
                for _ in 0..w.max(0) {
                    rows.push(row.clone());
                }
            }
            (state.version, rows)
        })
    }
}

fn check_row(table: &Table, row: &Row) -> Result<(), CentralError> {
    if row.arity() != table.columns.len() {
        return Err(CentralError::TypeMismatch(format!(
            "table {} expects {} values, got {}",
            table.name,
            table.columns.len(),
            row.arity()
        )));
    }
    for (v, c) in row.0.iter().zip(&table.columns) {
        if v.dtype() != c.dtype {
            return Err(CentralError::TypeMismatch(format!(
                "column {} expects {}, got {}",
                c.name,
                c.dtype,
                v.dtype()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Analyst queries
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QueryError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("query references decentralized object {0}")]
    ReferencesDecentralizedObject(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("analyst queries read one central object; joins are not supported")]
    JoinsNotAllowed,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Minimum completeness ratio among windows the query touched; None
    /// when the source has no completeness records (tables).
    pub completeness: Option<f64>,
}

/// Evaluates a restricted SELECT over one centralized view or
/// centralized/replicated table. Every result carries the minimum
/// completeness ratio among the windows it touched.
pub fn query_central(
    store: &CentralStore,
    catalog: &SchemaCatalog,
    sql: &str,
) -> Result<QueryOutput, QueryError> {
    let query = parse_query(sql)?;
    if !query.select.from.joins.is_empty() {
        return Err(QueryError::JoinsNotAllowed);
    }
    let source_name = &query.select.from.base.text;

    // Materialize the source with per-row window tags where they exist.
    let (columns, rows): (Vec<ColumnMeta>, Vec<(Option<i64>, Row, i64)>) =
        if let Some(view) = catalog.view(source_name) {
            if view.placement != ViewPlacement::Centralized {
                return Err(QueryError::ReferencesDecentralizedObject(
                    source_name.clone(),
                ));
            }
            let state = store
                .views
                .get(source_name)
                .ok_or_else(|| QueryError::UnknownObject(source_name.clone()))?;
            (
                view.output.clone(),
                state
                    .materialize()
                    .into_iter()
                    .map(|(w, row)| (Some(w), row, 1))
                    .collect(),
            )
        } else if let Some(table) = catalog.table(source_name) {
            let bag = match table.placement {
                TablePlacement::Centralized => store.tables.get(source_name),
                TablePlacement::Replicated => {
                    store.replicated.get(source_name).map(|s| &s.rows)
                }
                TablePlacement::Decentralized => {
                    return Err(QueryError::ReferencesDecentralizedObject(
                        source_name.clone(),
                    ));
                }
            }
            .ok_or_else(|| QueryError::UnknownObject(source_name.clone()))?;
            let metas = table
                .columns
                .iter()
                .map(|c| ColumnMeta {
                    name: c.name.clone(),
                    dtype: c.dtype,
                    lineage: Default::default(),
                    sensitive: false,
                    min_group_floor: 0,
                    range: c.range,
                })
                .collect();
            (
                metas,
                bag.iter().map(|(r, w)| (None, r.clone(), w)).collect(),
            )
        } else {
            return Err(QueryError::UnknownObject(source_name.clone()));
        };

    let plan = resolve_query(&query.select, source_name, &columns)?;

    // Filter first so the completeness annotation reflects only windows
    // the query actually touched.
    let mut touched_windows = Vec::new();
    let mut source_rows = Vec::new();
    for (window, row, weight) in rows {
        if pds::predicates_hold(&plan.predicates, &row) {
            if let Some(w) = window {
                touched_windows.push(w);
            }
            source_rows.push((row, weight));
        }
    }
    let completeness = if let Some(view_state) = store.views.get(source_name) {
        touched_windows.sort_unstable();
        touched_windows.dedup();
        touched_windows
            .iter()
            .filter_map(|w| view_state.completeness.get(w).map(Completeness::ratio))
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.min(r)))
            })
    } else {
        None
    };

    let filtered_plan = View {
        predicates: Vec::new(), // applied above
        ..plan
    };
    let result = pds::eval_select(&filtered_plan, &source_rows);

    // Expand the bag, then order and limit.
    let mut out: Vec<Row> = Vec::new();
    for (row, w) in result.iter() {
        for _ in 0..w.max(0) {
            out.push(row.clone());
        }
    }
    if !query.order_by.is_empty() {
        let mut keys = Vec::new();
        for (ident, asc) in &query.order_by {
            let idx = filtered_plan
                .output
                .iter()
                .position(|c| c.name == ident.text)
                .ok_or_else(|| QueryError::UnknownColumn(ident.text.clone()))?;
            keys.push((idx, *asc));
        }
        out.sort_by(|a, b| {
            for (idx, asc) in &keys {
                let ord = a.0[*idx].cmp(&b.0[*idx]);
                if ord != std::cmp::Ordering::Equal {
                    return if *asc { ord } else { ord.reverse() };
                }
            }
            std::cmp::Ordering::Equal
        });
    }
    if let Some(limit) = query.limit {
        out.truncate(limit as usize);
    }

    Ok(QueryOutput {
        columns: filtered_plan.output.iter().map(|c| c.name.clone()).collect(),
        rows: out,
        completeness,
    })
}

/// Resolves the query SELECT against the source columns into an
/// executable plan (reusing the view evaluator).
fn resolve_query(
    select: &crate::schema::ast::Select,
    source_name: &str,
    columns: &[ColumnMeta],
) -> Result<View, QueryError> {
    use crate::schema::ast::{AggArg, Expr};

    let col_idx = |name: &str| -> Result<usize, QueryError> {
        columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| QueryError::UnknownColumn(name.to_string()))
    };

    let mut group_by = Vec::new();
    for g in &select.group_by {
        group_by.push(col_idx(&g.text)?);
    }

    let mut predicates = Vec::new();
    for p in &select.predicates {
        let idx = col_idx(&p.column.text)?;
        let literal = coerce_literal(&p.literal, columns[idx].dtype).ok_or_else(|| {
            QueryError::Invalid(format!(
                "literal type does not match column {}",
                p.column.text
            ))
        })?;
        predicates.push(Predicate {
            column: idx,
            cmp: p.cmp,
            literal,
        });
    }

    let grouped = !select.group_by.is_empty()
        || select.items.iter().any(|i| matches!(i.expr, Expr::Agg { .. }));
    let mut items = Vec::new();
    for item in &select.items {
        let (expr, default_name) = match &item.expr {
            Expr::Column(c) => {
                let idx = col_idx(&c.text)?;
                if grouped && !group_by.contains(&idx) {
                    return Err(QueryError::Invalid(format!(
                        "column {} must appear in GROUP BY",
                        c.text
                    )));
                }
                (ResolvedExpr::Column(idx), c.text.clone())
            }
            Expr::Agg { agg, arg, .. } => match arg {
                AggArg::Star => {
                    if *agg != AggFn::Count {
                        return Err(QueryError::Invalid(format!(
                            "{}(*) is not defined",
                            agg.keyword()
                        )));
                    }
                    (
                        ResolvedExpr::Agg {
                            agg: *agg,
                            arg: None,
                        },
                        "count_all".to_string(),
                    )
                }
                AggArg::Column(c) => {
                    let idx = col_idx(&c.text)?;
                    if matches!(agg, AggFn::Sum | AggFn::Avg) && !columns[idx].dtype.is_numeric() {
                        return Err(QueryError::Invalid(format!(
                            "{} requires a numeric column",
                            agg.keyword()
                        )));
                    }
                    (
                        ResolvedExpr::Agg {
                            agg: *agg,
                            arg: Some(idx),
                        },
                        format!("{}_{}", agg.keyword().to_lowercase(), c.text),
                    )
                }
            },
        };
        let name = item
            .alias
            .as_ref()
            .map(|a| a.text.clone())
            .unwrap_or(default_name);
        items.push(ResolvedItem { expr, name });
    }

    let output = items
        .iter()
        .map(|item| match item.expr {
            ResolvedExpr::Column(idx) => ColumnMeta {
                name: item.name.clone(),
                ..columns[idx].clone()
            },
            ResolvedExpr::Agg { agg, arg } => {
                let dtype = match (agg, arg.map(|i| columns[i].dtype)) {
                    (AggFn::Count, _) => DType::Int64,
                    (AggFn::Avg, _) => DType::Float64,
                    (_, Some(d)) => d,
                    (_, None) => DType::Int64,
                };
                ColumnMeta {
                    name: item.name.clone(),
                    dtype,
                    lineage: Default::default(),
                    sensitive: false,
                    min_group_floor: 0,
                    range: None,
                }
            }
        })
        .collect();

    Ok(View {
        name: format!("query:{source_name}"),
        placement: ViewPlacement::Decentralized,
        source: ViewSource::Tables {
            base: source_name.to_string(),
            joins: Vec::new(),
        },
        source_columns: columns.to_vec(),
        predicates,
        group_by,
        items,
        output,
        options: ViewOptions::default(),
        event_ts_col: None,
        layout: None,
    })
}

fn coerce_literal(lit: &crate::schema::ast::Literal, dtype: DType) -> Option<Scalar> {
    use crate::schema::ast::Literal;
    Some(match (lit, dtype) {
        (Literal::Int(v), DType::Int64) => Scalar::Int(*v),
        (Literal::Int(v), DType::Timestamp) => Scalar::Timestamp(*v),
        (Literal::Int(v), DType::Float64) => Scalar::Float(*v as f64),
        (Literal::Float(v), DType::Float64) => Scalar::Float(*v),
        (Literal::Str(s), DType::Text) => Scalar::Text(s.clone()),
        (Literal::Bool(b), DType::Bool) => Scalar::Bool(*b),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivm::{encode_fixed, GroupKey};
    use crate::schema::{parse_ddl, validate};

    const SCHEMA: &str = "\
CREATE REPLICATED TABLE circuits (circuit_id INT64, name TEXT);
CREATE DECENTRALIZED TABLE runs (circuit_id INT64, duration_s FLOAT64 SENSITIVE RANGE(0, 100000), started_at TIMESTAMP);
CREATE DECENTRALIZED VIEW my_runs AS SELECT circuit_id, duration_s, started_at FROM runs;
CREATE CENTRALIZED VIEW circuit_stats WITH (MIN_GROUP_SIZE = 2, WINDOW = EVENT_TIME INTERVAL 7 DAYS RETAIN 1) AS SELECT circuit_id, COUNT(*) AS runs_count, AVG(duration_s) AS avg_duration FROM my_runs GROUP BY circuit_id;
";

    fn catalog() -> SchemaCatalog {
        validate(&parse_ddl(SCHEMA).unwrap()).unwrap()
    }

    fn released(window: i64, circuit: i64, count: i64, sum: f64) -> ReleasedGroup {
        ReleasedGroup {
            view: "circuit_stats".into(),
            window_id: window,
            group: GroupKey(vec![Scalar::Int(circuit)]),
            values: vec![
                Scalar::Int(count),
                Scalar::Float(encode_fixed(sum, None).unwrap() as f64 / (1 << 20) as f64),
                Scalar::Int(count),
            ],
            revealed_count: count.max(0) as u64,
        }
    }

    #[test]
    fn upsert_recomposes_avg_from_sum_and_count() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store
            .ingest_release(&released(2, 7, 120, 35400.0), 1)
            .unwrap();
        let state = &store.views["circuit_stats"];
        let row = state
            .rows
            .get(&(2, GroupKey(vec![Scalar::Int(7)])))
            .unwrap();
        assert_eq!(row.values, vec![Scalar::Int(120), Scalar::Float(295.0)]);
        assert_eq!(row.released_at_epoch, 1);
        assert_eq!(state.last_epoch_applied, 1);
    }

    #[test]
    fn second_release_overwrites_in_place() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store.ingest_release(&released(2, 7, 120, 35400.0), 1).unwrap();
        store.ingest_release(&released(2, 7, 121, 35500.0), 2).unwrap();
        let state = &store.views["circuit_stats"];
        assert_eq!(state.rows.len(), 1);
        let row = state.rows.get(&(2, GroupKey(vec![Scalar::Int(7)]))).unwrap();
        assert_eq!(row.values[0], Scalar::Int(121));
    }

    #[test]
    fn retention_keeps_only_the_newest_windows() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store.ingest_release(&released(2, 7, 5, 100.0), 1).unwrap();
        store.ingest_release(&released(3, 7, 5, 100.0), 2).unwrap();
        let state = &store.views["circuit_stats"];
        assert_eq!(state.retained_windows(), vec![3]); // retain = 1
    }

    #[test]
    fn zero_count_release_removes_the_row() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store.ingest_release(&released(2, 7, 1, 10.0), 1).unwrap();
        assert_eq!(store.views["circuit_stats"].rows.len(), 1);
        // Every contributing row retracted: count slots reconstruct to 0.
        store.ingest_release(&released(2, 7, 0, 0.0), 2).unwrap();
        assert!(store.views["circuit_stats"].rows.is_empty());
    }

    #[test]
    fn inconsistent_zero_count_avg_is_a_logic_error() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        let bogus = ReleasedGroup {
            view: "circuit_stats".into(),
            window_id: 0,
            group: GroupKey(vec![Scalar::Int(7)]),
            // COUNT(*) says 3 rows, the AVG count slot says 0: upstream bug.
            values: vec![Scalar::Int(3), Scalar::Float(1.0), Scalar::Int(0)],
            revealed_count: 3,
        };
        let err = store.ingest_release(&bogus, 1).unwrap_err();
        assert!(matches!(err, CentralError::Upsert(IvmError::ZeroCountAvg(_))));
    }

    #[test]
    fn completeness_ratio_tracks_acked_over_registered() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store.record_completeness("circuit_stats", 2, 8, 10).unwrap();
        let state = &store.views["circuit_stats"];
        assert_eq!(state.completeness[&2].ratio(), 0.8);
        store.record_completeness("circuit_stats", 3, 0, 10).unwrap();
        assert_eq!(store.views["circuit_stats"].completeness[&3].ratio(), 0.0);
        store.record_completeness("circuit_stats", 4, 10, 10).unwrap();
        assert_eq!(store.views["circuit_stats"].completeness[&4].ratio(), 1.0);
    }

    #[test]
    fn query_orders_and_limits_with_completeness_annotation() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        for (i, circuit) in (0..12).enumerate() {
            store
                .ingest_release(&released(2, circuit, 10 + i as i64, 100.0 * (circuit + 1) as f64), 1)
                .unwrap();
        }
        store.record_completeness("circuit_stats", 2, 8, 10).unwrap();
        let out = query_central(
            &store,
            &catalog,
            "SELECT circuit_id, avg_duration FROM circuit_stats ORDER BY avg_duration LIMIT 10",
        )
        .unwrap();
        assert_eq!(out.columns, vec!["circuit_id", "avg_duration"]);
        assert_eq!(out.rows.len(), 10);
        let durations: Vec<f64> = out
            .rows
            .iter()
            .map(|r| r.0[1].as_f64().unwrap())
            .collect();
        let mut sorted = durations.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(durations, sorted);
        assert_eq!(out.completeness, Some(0.8));
    }

    #[test]
    fn queries_cannot_reach_tier_one_objects() {
        let catalog = catalog();
        let store = CentralStore::new(&catalog);
        let err = query_central(&store, &catalog, "SELECT circuit_id FROM runs").unwrap_err();
        assert_eq!(err, QueryError::ReferencesDecentralizedObject("runs".into()));
        let err = query_central(&store, &catalog, "SELECT circuit_id FROM my_runs").unwrap_err();
        assert_eq!(err, QueryError::ReferencesDecentralizedObject("my_runs".into()));
        let err = query_central(&store, &catalog, "SELECT x FROM nowhere").unwrap_err();
        assert_eq!(err, QueryError::UnknownObject("nowhere".into()));
    }

    #[test]
    fn replica_push_is_full_state_with_version() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        assert_eq!(store.build_replica_push("circuits").unwrap(), (0, vec![]));
        for i in 0..3 {
            store
                .apply_table_update(
                    &catalog,
                    "circuits",
                    UpdateOp::Insert,
                    Row::new(vec![Scalar::Int(i), Scalar::Text(format!("c{i}"))]),
                )
                .unwrap();
        }
        let (version, rows) = store.build_replica_push("circuits").unwrap();
        assert_eq!(version, 3);
        assert_eq!(rows.len(), 3);
        // Re-push without changes: same version.
        assert_eq!(store.build_replica_push("circuits").unwrap().0, 3);
    }

    #[test]
    fn replicated_tables_are_queryable() {
        let catalog = catalog();
        let mut store = CentralStore::new(&catalog);
        store
            .apply_table_update(
                &catalog,
                "circuits",
                UpdateOp::Insert,
                Row::new(vec![Scalar::Int(1), Scalar::Text("lake".into())]),
            )
            .unwrap();
        let out = query_central(
            &store,
            &catalog,
            "SELECT name FROM circuits WHERE circuit_id = 1",
        )
        .unwrap();
        assert_eq!(out.rows, vec![Row::new(vec![Scalar::Text("lake".into())])]);
        assert_eq!(out.completeness, None);
    }
}
