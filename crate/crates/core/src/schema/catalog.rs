//! Validated schema catalog: resolved tables, views, lineage and the
//! decomposed aggregate layout used by the aggregation tiers.

use std::collections::{BTreeMap, BTreeSet};

use crate::value::{DType, Scalar};

pub use super::ast::{AggFn, CmpOp, TablePlacement, ViewPlacement, WindowMode};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub dtype: DType,
    pub sensitive: bool,
    pub min_group: Option<u64>,
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub placement: TablePlacement,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn dtypes(&self) -> Vec<DType> {
        self.columns.iter().map(|c| c.dtype).collect()
    }
}

/// Windowing declared on a centralized view. `retain: None` keeps all
/// windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub mode: WindowMode,
    pub width_seconds: i64,
    pub retain: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Laplace scale parameter.
    pub scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewOptions {
    pub min_group_size: Option<u64>,
    pub window: Option<WindowSpec>,
    pub noise: Option<NoiseSpec>,
}

/// A source or output column with its base-table lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub dtype: DType,
    /// Base (table, column) pairs this column derives from.
    pub lineage: BTreeSet<(String, String)>,
    pub sensitive: bool,
    /// Largest per-column MIN_GROUP floor along the lineage (0 = none).
    pub min_group_floor: u64,
    /// Declared value bounds surviving propagation (identity, MIN, MAX).
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewSource {
    /// Decentralized view: a base table plus local equi-joins.
    Tables { base: String, joins: Vec<JoinPlan> },
    /// Centralized view: exactly one decentralized view.
    View(String),
}

impl ViewSource {
    pub fn referenced_names(&self) -> Vec<&str> {
        match self {
            ViewSource::Tables { base, joins } => {
                let mut names = vec![base.as_str()];
                names.extend(joins.iter().map(|j| j.table.as_str()));
                names
            }
            ViewSource::View(v) => vec![v.as_str()],
        }
    }
}

/// One equi-join step. The right key column is dropped from the joined
/// schema (it always equals the left key).
#[derive(Debug, Clone, PartialEq)]
pub struct JoinPlan {
    pub table: String,
    /// Index into the accumulated columns before this join.
    pub left_col: usize,
    /// Index into the joined table's own columns.
    pub right_col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: usize,
    pub cmp: CmpOp,
    pub literal: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedExpr {
    Column(usize),
    /// `arg: None` is COUNT(*).
    Agg { agg: AggFn, arg: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedItem {
    pub expr: ResolvedExpr,
    pub name: String,
}

/// Decomposed aggregate slot accumulated by the share servers. COUNT
/// slots carry row weights; SUM slots carry fixed-point weighted sums.
#[derive(Debug, Clone, PartialEq)]
pub enum AggSlot {
    Count,
    Sum {
        source_col: usize,
        dtype: DType,
        range: Option<(f64, f64)>,
    },
}

/// Mapping from a select item back to slots (AVG recomposes from a SUM
/// and a COUNT slot after reconstruction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMap {
    Group { key_idx: usize },
    Count { slot: usize },
    Sum { slot: usize },
    Avg { sum_slot: usize, count_slot: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggLayout {
    pub slots: Vec<AggSlot>,
    pub items: Vec<OutputMap>,
}

impl AggLayout {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub placement: ViewPlacement,
    pub source: ViewSource,
    /// The column schema the SELECT evaluates over.
    pub source_columns: Vec<ColumnMeta>,
    pub predicates: Vec<Predicate>,
    /// Indices into `source_columns`, in declared GROUP BY order.
    pub group_by: Vec<usize>,
    pub items: Vec<ResolvedItem>,
    pub output: Vec<ColumnMeta>,
    pub options: ViewOptions,
    /// First TIMESTAMP column of the output (event-time binding).
    pub event_ts_col: Option<usize>,
    /// Present on centralized views only.
    pub layout: Option<AggLayout>,
}

impl View {
    pub fn has_aggregates(&self) -> bool {
        self.items
            .iter()
            .any(|i| matches!(i.expr, ResolvedExpr::Agg { .. }))
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output.iter().position(|c| c.name == name)
    }

    /// Union of output-column lineages.
    pub fn lineage(&self) -> BTreeSet<(String, String)> {
        self.output
            .iter()
            .flat_map(|c| c.lineage.iter().cloned())
            .collect()
    }

    pub fn sensitive_lineage(&self) -> bool {
        self.output.iter().any(|c| c.sensitive)
    }

    /// Contributor-count threshold the gate enforces (1 when undeclared).
    pub fn effective_min_group(&self) -> u64 {
        self.options.min_group_size.unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaCatalog {
    pub tables: BTreeMap<String, Table>,
    pub views: BTreeMap<String, View>,
}

impl SchemaCatalog {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn view(&self, name: &str) -> Option<&View> {
        self.views.get(name)
    }

    pub fn decentralized_tables(&self) -> impl Iterator<Item = &Table> {
        self.tables
            .values()
            .filter(|t| t.placement == TablePlacement::Decentralized)
    }

    pub fn replicated_tables(&self) -> impl Iterator<Item = &Table> {
        self.tables
            .values()
            .filter(|t| t.placement == TablePlacement::Replicated)
    }

    pub fn centralized_views(&self) -> impl Iterator<Item = &View> {
        self.views
            .values()
            .filter(|v| v.placement == ViewPlacement::Centralized)
    }

    /// Export streams: (decentralized source view, centralized view).
    pub fn export_streams(&self) -> Vec<(&View, &View)> {
        self.centralized_views()
            .filter_map(|cv| match &cv.source {
                ViewSource::View(src) => self.views.get(src).map(|dv| (dv, cv)),
                _ => None,
            })
            .collect()
    }

    /// Lineage of one view output column, as base (table, column) pairs.
    pub fn lineage_of(&self, view: &str, column: &str) -> Option<&BTreeSet<(String, String)>> {
        let v = self.views.get(view)?;
        let idx = v.output_index(column)?;
        Some(&v.output[idx].lineage)
    }
}
