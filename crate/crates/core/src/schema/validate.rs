//! Catalog construction and the declarative privacy rules.
//!
//! All violations are collected and reported together, and the outcome is
//! independent of statement order: names are resolved in two passes
//! (tables, then decentralized views, then centralized views).

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{self, AggArg, Expr, Literal, Statement, ViewOption};
use super::catalog::*;
use super::lexer::Pos;
use crate::ivm::{FIXED_POINT_BITS, MAX_CONTRIBUTIONS};
use crate::value::{DType, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationCode {
    PrivacyMissingMinGroup,
    PrivacyFloorTooLow,
    PrivacyMinMaxOverSensitive,
    PrivacySensitiveGroupBy,
    PrivacySensitiveInCentralTable,
    PrivacyRangeTooWide,
    MissingRange,
    DanglingReference,
    CycleDetected,
    DuplicateName,
    DuplicateColumn,
    NotGrouped,
    MissingGroupBy,
    InvalidSource,
    InvalidOption,
    InvalidRange,
    TypeMismatch,
    UnsupportedAgg,
    MultipleConsumers,
    NoEventTimeColumn,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        use ViolationCode::*;
        match self {
            PrivacyMissingMinGroup => "PRIVACY_MISSING_MIN_GROUP",
            PrivacyFloorTooLow => "PRIVACY_FLOOR_TOO_LOW",
            PrivacyMinMaxOverSensitive => "PRIVACY_MIN_MAX_OVER_SENSITIVE",
            PrivacySensitiveGroupBy => "PRIVACY_SENSITIVE_GROUP_BY",
            PrivacySensitiveInCentralTable => "PRIVACY_SENSITIVE_IN_CENTRAL_TABLE",
            PrivacyRangeTooWide => "PRIVACY_RANGE_TOO_WIDE",
            MissingRange => "MISSING_RANGE",
            DanglingReference => "DANGLING_REF",
            CycleDetected => "CYCLE",
            DuplicateName => "DUP_NAME",
            DuplicateColumn => "DUP_COLUMN",
            NotGrouped => "NOT_GROUPED",
            MissingGroupBy => "MISSING_GROUP_BY",
            InvalidSource => "INVALID_SOURCE",
            InvalidOption => "INVALID_OPTION",
            InvalidRange => "INVALID_RANGE",
            TypeMismatch => "TYPE_MISMATCH",
            UnsupportedAgg => "UNSUPPORTED_AGG",
            MultipleConsumers => "MULTI_CONSUMER",
            NoEventTimeColumn => "NO_EVENT_TIME_COLUMN",
        }
    }

    /// Codes enforcing the declarative privacy rules proper.
    pub fn is_privacy_rule(&self) -> bool {
        use ViolationCode::*;
        matches!(
            self,
            PrivacyMissingMinGroup
                | PrivacyFloorTooLow
                | PrivacyMinMaxOverSensitive
                | PrivacySensitiveGroupBy
                | PrivacySensitiveInCentralTable
                | PrivacyRangeTooWide
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub code: ViolationCode,
    pub pos: Pos,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, pos: Pos, message: impl Into<String>) -> Violation {
        Violation {
            code,
            pos,
            message: message.into(),
        }
    }

    /// `LINE:COL CODE message` for CLI reporting.
    pub fn report_line(&self) -> String {
        format!("{} {} {}", self.pos, self.code.as_str(), self.message)
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.report_line())
    }
}

/// Validates parsed statements into a catalog, or every violation found.
pub fn validate(statements: &[Statement]) -> Result<SchemaCatalog, Vec<Violation>> {
    let mut v = Validator::default();
    v.run(statements);
    if v.violations.is_empty() {
        Ok(v.catalog)
    } else {
        v.violations
            .sort_by_key(|a| (a.pos.line, a.pos.col, a.code));
        Err(v.violations)
    }
}

#[derive(Default)]
struct Validator {
    catalog: SchemaCatalog,
    violations: Vec<Violation>,
}

impl Validator {
    fn emit(&mut self, code: ViolationCode, pos: Pos, message: impl Into<String>) {
        self.violations.push(Violation::new(code, pos, message));
    }

    fn run(&mut self, statements: &[Statement]) {
        // Shared namespace: a duplicate name flags every definition of it.
        let mut by_name: BTreeMap<&str, Vec<&Statement>> = BTreeMap::new();
        for s in statements {
            by_name.entry(&s.name().text).or_default().push(s);
        }
        for (name, defs) in &by_name {
            if defs.len() > 1 {
                for d in defs {
                    self.emit(
                        ViolationCode::DuplicateName,
                        d.pos(),
                        format!("name {name} is defined {} times", defs.len()),
                    );
                }
            }
        }

        for s in statements {
            if let Statement::CreateTable(t) = s {
                self.check_table(t);
            }
        }
        // Decentralized views resolve against tables only; centralized
        // views resolve against decentralized views. Two passes keep the
        // result independent of declaration order.
        for s in statements {
            if let Statement::CreateView(view) = s {
                if view.placement == ViewPlacement::Decentralized {
                    self.check_view(view, &by_name);
                }
            }
        }
        for s in statements {
            if let Statement::CreateView(view) = s {
                if view.placement == ViewPlacement::Centralized {
                    self.check_view(view, &by_name);
                }
            }
        }

        self.check_single_consumer(statements);
        self.check_acyclic();
    }

    fn check_table(&mut self, t: &ast::CreateTable) {
        let mut seen = BTreeSet::new();
        let mut columns = Vec::new();
        for c in &t.columns {
            if !seen.insert(c.name.text.clone()) {
                self.emit(
                    ViolationCode::DuplicateColumn,
                    c.name.pos,
                    format!("duplicate column {} in table {}", c.name, t.name),
                );
            }
            if c.sensitive && t.placement != TablePlacement::Decentralized {
                self.emit(
                    ViolationCode::PrivacySensitiveInCentralTable,
                    c.name.pos,
                    format!(
                        "{} table {} must not contain SENSITIVE column {}",
                        t.placement.keyword(),
                        t.name,
                        c.name
                    ),
                );
            }
            if let Some(mg) = c.min_group {
                if !c.sensitive {
                    self.emit(
                        ViolationCode::InvalidOption,
                        c.name.pos,
                        format!("MIN_GROUP on non-sensitive column {}", c.name),
                    );
                }
                if mg == 0 {
                    self.emit(
                        ViolationCode::InvalidOption,
                        c.name.pos,
                        format!("MIN_GROUP on column {} must be positive", c.name),
                    );
                }
            }
            if let Some((lo, hi)) = c.range {
                if !c.dtype.is_numeric() {
                    self.emit(
                        ViolationCode::TypeMismatch,
                        c.name.pos,
                        format!("RANGE on non-numeric column {}", c.name),
                    );
                } else if !(lo < hi) {
                    self.emit(
                        ViolationCode::InvalidRange,
                        c.name.pos,
                        format!("RANGE lower bound must be below upper bound on column {}", c.name),
                    );
                }
            }
            columns.push(Column {
                name: c.name.text.clone(),
                dtype: c.dtype,
                sensitive: c.sensitive,
                min_group: c.min_group,
                range: c.range,
            });
        }
        self.catalog.tables.insert(
            t.name.text.clone(),
            Table {
                name: t.name.text.clone(),
                placement: t.placement,
                columns,
            },
        );
    }

    fn check_view(&mut self, view: &ast::CreateView, by_name: &BTreeMap<&str, Vec<&Statement>>) {
        let before = self.violations.len();
        let source = self.resolve_source(view, by_name);
        let Some((source, source_columns)) = source else {
            return;
        };

        let predicates = self.resolve_predicates(view, &source_columns);
        let group_by = self.resolve_group_by(view, &source_columns);
        let items = self.resolve_items(view, &source_columns, &group_by);
        let options = self.resolve_options(view);

        if view.placement == ViewPlacement::Centralized {
            self.check_centralized_rules(view, &source_columns, &group_by, &items, &options);
        }

        if self.violations.len() > before {
            return;
        }

        let output = items
            .iter()
            .map(|item| output_meta(item, &source_columns))
            .collect::<Vec<_>>();
        let event_ts_col = output.iter().position(|c| c.dtype == DType::Timestamp);
        let layout = if view.placement == ViewPlacement::Centralized {
            Some(build_layout(&items, &group_by, &source_columns))
        } else {
            None
        };

        self.catalog.views.insert(
            view.name.text.clone(),
            View {
                name: view.name.text.clone(),
                placement: view.placement,
                source,
                source_columns,
                predicates,
                group_by,
                items,
                output,
                options,
                event_ts_col,
                layout,
            },
        );
    }

    /// Resolves the FROM clause into a source plan plus the column schema
    /// the SELECT sees. Returns None when resolution failed.
    fn resolve_source(
        &mut self,
        view: &ast::CreateView,
        by_name: &BTreeMap<&str, Vec<&Statement>>,
    ) -> Option<(ViewSource, Vec<ColumnMeta>)> {
        let from = &view.select.from;
        match view.placement {
            ViewPlacement::Decentralized => {
                // Base and joins must be decentralized tables; replicated
                // tables may be read as public, local copies.
                let mut columns = self.table_columns(&from.base, view, by_name)?;
                let mut joins = Vec::new();
                for j in &from.joins {
                    let right_cols = self.table_columns(&j.table, view, by_name)?;
                    let Some(left_col) =
                        columns.iter().position(|c| c.name == j.left_col.text)
                    else {
                        self.emit(
                            ViolationCode::DanglingReference,
                            j.left_col.pos,
                            format!("unknown join column {}", j.left_col),
                        );
                        return None;
                    };
                    let Some(right_col) =
                        right_cols.iter().position(|c| c.name == j.right_col.text)
                    else {
                        self.emit(
                            ViolationCode::DanglingReference,
                            j.right_col.pos,
                            format!("unknown join column {} in table {}", j.right_col, j.table),
                        );
                        return None;
                    };
                    if columns[left_col].dtype != right_cols[right_col].dtype {
                        self.emit(
                            ViolationCode::TypeMismatch,
                            j.left_col.pos,
                            format!(
                                "join keys {} and {} have different types",
                                j.left_col, j.right_col
                            ),
                        );
                        return None;
                    }
                    // The right key column always equals the left key, so it
                    // is dropped; any other name collision is an error.
                    for (idx, rc) in right_cols.iter().enumerate() {
                        if idx == right_col {
                            continue;
                        }
                        if columns.iter().any(|c| c.name == rc.name) {
                            self.emit(
                                ViolationCode::DuplicateColumn,
                                j.table.pos,
                                format!("join of {} duplicates column {}", j.table, rc.name),
                            );
                            return None;
                        }
                        columns.push(rc.clone());
                    }
                    joins.push(JoinPlan {
                        table: j.table.text.clone(),
                        left_col,
                        right_col,
                    });
                }
                Some((
                    ViewSource::Tables {
                        base: from.base.text.clone(),
                        joins,
                    },
                    columns,
                ))
            }
            ViewPlacement::Centralized => {
                if !from.joins.is_empty() {
                    self.emit(
                        ViolationCode::InvalidSource,
                        from.joins[0].table.pos,
                        format!(
                            "centralized view {} must reference exactly one decentralized view",
                            view.name
                        ),
                    );
                    return None;
                }
                match self.catalog.views.get(&from.base.text) {
                    Some(src) if src.placement == ViewPlacement::Decentralized => Some((
                        ViewSource::View(from.base.text.clone()),
                        src.output.clone(),
                    )),
                    Some(_) => {
                        self.emit(
                            ViolationCode::InvalidSource,
                            from.base.pos,
                            format!(
                                "centralized view {} must be defined over a decentralized view, \
                                 not {}",
                                view.name, from.base
                            ),
                        );
                        None
                    }
                    None => {
                        if self.catalog.tables.contains_key(&from.base.text) {
                            self.emit(
                                ViolationCode::InvalidSource,
                                from.base.pos,
                                format!(
                                    "centralized view {} must be defined over a decentralized \
                                     view, not table {}",
                                    view.name, from.base
                                ),
                            );
                        } else if !by_name.contains_key(from.base.text.as_str()) {
                            self.emit(
                                ViolationCode::DanglingReference,
                                from.base.pos,
                                format!("unknown view {}", from.base),
                            );
                        }
                        // A named but invalid source was already reported.
                        None
                    }
                }
            }
        }
    }

    fn table_columns(
        &mut self,
        name: &ast::Ident,
        view: &ast::CreateView,
        by_name: &BTreeMap<&str, Vec<&Statement>>,
    ) -> Option<Vec<ColumnMeta>> {
        match self.catalog.tables.get(&name.text) {
            Some(t) if t.placement != TablePlacement::Centralized => Some(
                t.columns
                    .iter()
                    .map(|c| ColumnMeta {
                        name: c.name.clone(),
                        dtype: c.dtype,
                        lineage: BTreeSet::from([(t.name.clone(), c.name.clone())]),
                        sensitive: c.sensitive,
                        min_group_floor: c.min_group.unwrap_or(0),
                        range: c.range,
                    })
                    .collect(),
            ),
            Some(t) => {
                self.emit(
                    ViolationCode::InvalidSource,
                    name.pos,
                    format!(
                        "decentralized view {} cannot read {} table {}",
                        view.name,
                        t.placement.keyword(),
                        name
                    ),
                );
                None
            }
            None => {
                if by_name.contains_key(name.text.as_str()) {
                    // Defined as a view: decentralized views read tables only.
                    self.emit(
                        ViolationCode::InvalidSource,
                        name.pos,
                        format!("decentralized view {} cannot read view {}", view.name, name),
                    );
                } else {
                    self.emit(
                        ViolationCode::DanglingReference,
                        name.pos,
                        format!("unknown table {}", name),
                    );
                }
                None
            }
        }
    }

    fn resolve_predicates(
        &mut self,
        view: &ast::CreateView,
        columns: &[ColumnMeta],
    ) -> Vec<Predicate> {
        let mut out = Vec::new();
        for p in &view.select.predicates {
            let Some(idx) = columns.iter().position(|c| c.name == p.column.text) else {
                self.emit(
                    ViolationCode::DanglingReference,
                    p.column.pos,
                    format!("unknown column {} in WHERE", p.column),
                );
                continue;
            };
            let col = &columns[idx];
            let literal = match (&p.literal, col.dtype) {
                (Literal::Int(v), DType::Int64) => Scalar::Int(*v),
                (Literal::Int(v), DType::Timestamp) => Scalar::Timestamp(*v),
                (Literal::Int(v), DType::Float64) => Scalar::Float(*v as f64),
                (Literal::Float(v), DType::Float64) => Scalar::Float(*v),
                (Literal::Str(s), DType::Text) => Scalar::Text(s.clone()),
                (Literal::Bool(b), DType::Bool) => {
                    if !matches!(p.cmp, CmpOp::Eq | CmpOp::Ne) {
                        self.emit(
                            ViolationCode::TypeMismatch,
                            p.column.pos,
                            format!("BOOL column {} supports only = and <>", p.column),
                        );
                        continue;
                    }
                    Scalar::Bool(*b)
                }
                _ => {
                    self.emit(
                        ViolationCode::TypeMismatch,
                        p.column.pos,
                        format!("literal type does not match column {} ({})", p.column, col.dtype),
                    );
                    continue;
                }
            };
            out.push(Predicate {
                column: idx,
                cmp: p.cmp,
                literal,
            });
        }
        out
    }

    fn resolve_group_by(&mut self, view: &ast::CreateView, columns: &[ColumnMeta]) -> Vec<usize> {
        let mut out = Vec::new();
        for g in &view.select.group_by {
            match columns.iter().position(|c| c.name == g.text) {
                Some(idx) => out.push(idx),
                None => self.emit(
                    ViolationCode::DanglingReference,
                    g.pos,
                    format!("unknown column {} in GROUP BY", g),
                ),
            }
        }
        out
    }

    fn resolve_items(
        &mut self,
        view: &ast::CreateView,
        columns: &[ColumnMeta],
        group_by: &[usize],
    ) -> Vec<ResolvedItem> {
        let grouped = !view.select.group_by.is_empty()
            || view
                .select
                .items
                .iter()
                .any(|i| matches!(i.expr, Expr::Agg { .. }));
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for item in &view.select.items {
            let (expr, default_name, pos) = match &item.expr {
                Expr::Column(c) => {
                    let Some(idx) = columns.iter().position(|col| col.name == c.text) else {
                        self.emit(
                            ViolationCode::DanglingReference,
                            c.pos,
                            format!("unknown column {} in SELECT", c),
                        );
                        continue;
                    };
                    if grouped && !group_by.contains(&idx) {
                        self.emit(
                            ViolationCode::NotGrouped,
                            c.pos,
                            format!("column {} must appear in GROUP BY", c),
                        );
                        continue;
                    }
                    (ResolvedExpr::Column(idx), c.text.clone(), c.pos)
                }
                Expr::Agg { agg, arg, pos } => {
                    let (arg_idx, default_name) = match arg {
                        AggArg::Star => {
                            if *agg != AggFn::Count {
                                self.emit(
                                    ViolationCode::TypeMismatch,
                                    *pos,
                                    format!("{}(*) is not defined", agg.keyword()),
                                );
                                continue;
                            }
                            (None, "count_all".to_string())
                        }
                        AggArg::Column(c) => {
                            let Some(idx) = columns.iter().position(|col| col.name == c.text)
                            else {
                                self.emit(
                                    ViolationCode::DanglingReference,
                                    c.pos,
                                    format!("unknown column {} in {}", c, agg.keyword()),
                                );
                                continue;
                            };
                            if matches!(agg, AggFn::Sum | AggFn::Avg)
                                && !columns[idx].dtype.is_numeric()
                            {
                                self.emit(
                                    ViolationCode::TypeMismatch,
                                    c.pos,
                                    format!(
                                        "{} requires a numeric column, {} is {}",
                                        agg.keyword(),
                                        c,
                                        columns[idx].dtype
                                    ),
                                );
                                continue;
                            }
                            (
                                Some(idx),
                                format!("{}_{}", agg.keyword().to_lowercase(), c.text),
                            )
                        }
                    };
                    (
                        ResolvedExpr::Agg {
                            agg: *agg,
                            arg: arg_idx,
                        },
                        default_name,
                        *pos,
                    )
                }
            };
            let name = item
                .alias
                .as_ref()
                .map(|a| a.text.clone())
                .unwrap_or(default_name);
            if !names.insert(name.clone()) {
                self.emit(
                    ViolationCode::DuplicateColumn,
                    pos,
                    format!("duplicate output column {name} in view {}", view.name),
                );
                continue;
            }
            out.push(ResolvedItem { expr, name });
        }
        out
    }

    fn resolve_options(&mut self, view: &ast::CreateView) -> ViewOptions {
        let mut options = ViewOptions::default();
        if view.placement == ViewPlacement::Decentralized && !view.options.is_empty() {
            self.emit(
                ViolationCode::InvalidOption,
                view.pos,
                format!(
                    "view options apply to centralized views only (view {})",
                    view.name
                ),
            );
            return options;
        }
        for opt in &view.options {
            match opt {
                ViewOption::MinGroupSize(n) => {
                    if options.min_group_size.is_some() {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "MIN_GROUP_SIZE given more than once",
                        );
                    }
                    if *n == 0 {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "MIN_GROUP_SIZE must be positive",
                        );
                    }
                    options.min_group_size = Some(*n);
                }
                ViewOption::Window {
                    mode,
                    width,
                    unit,
                    retain,
                } => {
                    if options.window.is_some() {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "WINDOW given more than once",
                        );
                    }
                    if *width == 0 {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "window width must be positive",
                        );
                        continue;
                    }
                    if retain == &Some(0) {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "RETAIN must be at least 1",
                        );
                        continue;
                    }
                    options.window = Some(WindowSpec {
                        mode: *mode,
                        width_seconds: (*width as i64).saturating_mul(unit.seconds()),
                        retain: retain.map(|r| r.min(u32::MAX as u64) as u32),
                    });
                }
                ViewOption::Noise { scale } => {
                    if options.noise.is_some() {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "NOISE given more than once",
                        );
                    }
                    if !(*scale > 0.0) {
                        self.emit(
                            ViolationCode::InvalidOption,
                            view.pos,
                            "LAPLACE scale must be positive",
                        );
                    }
                    options.noise = Some(NoiseSpec { scale: *scale });
                }
            }
        }
        options
    }

    fn check_centralized_rules(
        &mut self,
        view: &ast::CreateView,
        columns: &[ColumnMeta],
        group_by: &[usize],
        items: &[ResolvedItem],
        options: &ViewOptions,
    ) {
        if view.select.group_by.is_empty() {
            self.emit(
                ViolationCode::MissingGroupBy,
                view.pos,
                format!("centralized view {} requires a GROUP BY", view.name),
            );
        }

        for &g in group_by {
            if columns[g].sensitive {
                self.emit(
                    ViolationCode::PrivacySensitiveGroupBy,
                    view.pos,
                    format!(
                        "centralized view {} groups by {} whose lineage is SENSITIVE \
                         (group keys travel in plain text)",
                        view.name, columns[g].name
                    ),
                );
            }
        }

        let mut sensitive_lineage = false;
        let mut max_floor = 0u64;
        for item in items {
            match item.expr {
                ResolvedExpr::Column(idx) => {
                    sensitive_lineage |= columns[idx].sensitive;
                    max_floor = max_floor.max(columns[idx].min_group_floor);
                }
                ResolvedExpr::Agg { agg, arg } => {
                    let Some(idx) = arg else { continue };
                    let col = &columns[idx];
                    sensitive_lineage |= col.sensitive;
                    max_floor = max_floor.max(col.min_group_floor);
                    match agg {
                        AggFn::Min | AggFn::Max => {
                            if col.sensitive {
                                self.emit(
                                    ViolationCode::PrivacyMinMaxOverSensitive,
                                    view.pos,
                                    format!(
                                        "{} over sensitive lineage of {} reveals an \
                                         individual's value",
                                        agg.keyword(),
                                        col.name
                                    ),
                                );
                            } else {
                                self.emit(
                                    ViolationCode::UnsupportedAgg,
                                    view.pos,
                                    format!(
                                        "{} cannot be maintained by the addition-only \
                                         aggregation tier",
                                        agg.keyword()
                                    ),
                                );
                            }
                        }
                        AggFn::Sum | AggFn::Avg => {
                            if col.sensitive && col.dtype.is_numeric() {
                                match col.range {
                                    None => {
                                        self.emit(
                                            ViolationCode::MissingRange,
                                            view.pos,
                                            format!(
                                                "sensitive column {} used under {} must \
                                                 declare RANGE",
                                                col.name,
                                                agg.keyword()
                                            ),
                                        );
                                    }
                                    Some((lo, hi)) => {
                                        let width = hi - lo;
                                        let bound = (1u128 << 63) as f64;
                                        let scaled = width
                                            * (1u64 << FIXED_POINT_BITS) as f64
                                            * MAX_CONTRIBUTIONS as f64;
                                        if scaled >= bound {
                                            self.emit(
                                                ViolationCode::PrivacyRangeTooWide,
                                                view.pos,
                                                format!(
                                                    "RANGE of {} is too wide for overflow-safe \
                                                     fixed-point sums",
                                                    col.name
                                                ),
                                            );
                                        }
                                    }
                                }
                            }
                        }
                        AggFn::Count => {}
                    }
                }
            }
        }

        if sensitive_lineage {
            match options.min_group_size {
                None => self.emit(
                    ViolationCode::PrivacyMissingMinGroup,
                    view.pos,
                    format!(
                        "centralized view {} over sensitive lineage requires MIN_GROUP_SIZE",
                        view.name
                    ),
                ),
                Some(k) if k < max_floor => self.emit(
                    ViolationCode::PrivacyFloorTooLow,
                    view.pos,
                    format!("view floor {k} < column floor {max_floor}"),
                ),
                Some(_) => {}
            }
        }

        if let Some(w) = &options.window {
            if w.mode == WindowMode::EventTime
                && !columns.iter().any(|c| c.dtype == DType::Timestamp)
            {
                self.emit(
                    ViolationCode::NoEventTimeColumn,
                    view.pos,
                    format!(
                        "EVENT_TIME window on {} requires a TIMESTAMP column in the source view",
                        view.name
                    ),
                );
            }
        }
    }

    /// Each decentralized view may feed at most one centralized view, so
    /// delta window tagging is unambiguous.
    fn check_single_consumer(&mut self, statements: &[Statement]) {
        let mut consumers: BTreeMap<String, Vec<(&str, Pos)>> = BTreeMap::new();
        for s in statements {
            if let Statement::CreateView(v) = s {
                if v.placement == ViewPlacement::Centralized {
                    consumers
                        .entry(v.select.from.base.text.clone())
                        .or_default()
                        .push((&v.name.text, v.pos));
                }
            }
        }
        for (source, views) in consumers {
            if views.len() > 1 {
                for (name, pos) in views {
                    self.emit(
                        ViolationCode::MultipleConsumers,
                        pos,
                        format!(
                            "decentralized view {source} already feeds another centralized view \
                             (here: {name}); declare one decentralized view per export"
                        ),
                    );
                }
            }
        }
    }

    /// The placement rules make reference cycles impossible from source
    /// text; this guards catalogs assembled by other means.
    fn check_acyclic(&mut self) {
        let mut visiting = BTreeSet::new();
        let mut done = BTreeSet::new();
        let names: Vec<String> = self.catalog.views.keys().cloned().collect();
        for name in names {
            if let Some(cycle) = self.visit(&name, &mut visiting, &mut done) {
                self.emit(
                    ViolationCode::CycleDetected,
                    Pos::default(),
                    format!("dependency cycle through {cycle}"),
                );
            }
        }
    }

    fn visit(
        &self,
        name: &str,
        visiting: &mut BTreeSet<String>,
        done: &mut BTreeSet<String>,
    ) -> Option<String> {
        if done.contains(name) {
            return None;
        }
        if !visiting.insert(name.to_string()) {
            return Some(name.to_string());
        }
        if let Some(view) = self.catalog.views.get(name) {
            for dep in view.source.referenced_names() {
                if let Some(c) = self.visit(dep, visiting, done) {
                    return Some(c);
                }
            }
        }
        visiting.remove(name);
        done.insert(name.to_string());
        None
    }
}

fn output_meta(item: &ResolvedItem, columns: &[ColumnMeta]) -> ColumnMeta {
    match item.expr {
        ResolvedExpr::Column(idx) => ColumnMeta {
            name: item.name.clone(),
            ..columns[idx].clone()
        },
        ResolvedExpr::Agg { agg, arg } => {
            let src = arg.map(|i| &columns[i]);
            let dtype = match (agg, src.map(|c| c.dtype)) {
                (AggFn::Count, _) => DType::Int64,
                (AggFn::Avg, _) => DType::Float64,
                (_, Some(d)) => d,
                (_, None) => DType::Int64,
            };
            let range = match agg {
                AggFn::Min | AggFn::Max => src.and_then(|c| c.range),
                _ => None,
            };
            ColumnMeta {
                name: item.name.clone(),
                dtype,
                lineage: src.map(|c| c.lineage.clone()).unwrap_or_default(),
                sensitive: src.map(|c| c.sensitive).unwrap_or(false),
                min_group_floor: src.map(|c| c.min_group_floor).unwrap_or(0),
                range,
            }
        }
    }
}

/// Decomposes the select items of a centralized view into addition-only
/// slots; AVG becomes a SUM slot plus a COUNT slot.
fn build_layout(items: &[ResolvedItem], group_by: &[usize], columns: &[ColumnMeta]) -> AggLayout {
    let mut slots = Vec::new();
    let mut maps = Vec::new();
    for item in items {
        match item.expr {
            ResolvedExpr::Column(idx) => {
                let key_idx = group_by
                    .iter()
                    .position(|&g| g == idx)
                    .expect("grouped column checked during validation");
                maps.push(OutputMap::Group { key_idx });
            }
            ResolvedExpr::Agg { agg, arg } => match agg {
                AggFn::Count => {
                    slots.push(AggSlot::Count);
                    maps.push(OutputMap::Count {
                        slot: slots.len() - 1,
                    });
                }
                AggFn::Sum => {
                    let col = &columns[arg.expect("SUM argument resolved")];
                    slots.push(AggSlot::Sum {
                        source_col: arg.unwrap(),
                        dtype: col.dtype,
                        range: col.range,
                    });
                    maps.push(OutputMap::Sum {
                        slot: slots.len() - 1,
                    });
                }
                AggFn::Avg => {
                    let col = &columns[arg.expect("AVG argument resolved")];
                    slots.push(AggSlot::Sum {
                        source_col: arg.unwrap(),
                        dtype: col.dtype,
                        range: col.range,
                    });
                    let sum_slot = slots.len() - 1;
                    slots.push(AggSlot::Count);
                    maps.push(OutputMap::Avg {
                        sum_slot,
                        count_slot: slots.len() - 1,
                    });
                }
                AggFn::Min | AggFn::Max => {
                    unreachable!("MIN/MAX rejected for centralized views")
                }
            },
        }
    }
    AggLayout {
        slots,
        items: maps,
    }
}
