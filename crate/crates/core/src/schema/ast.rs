//! Parsed (pre-validation) statements, plus the canonical pretty-printer.
//!
//! Equality on AST nodes ignores source positions so that a parse →
//! pretty-print → parse round trip compares equal.

use std::fmt;

use super::lexer::Pos;
use crate::value::DType;

#[derive(Debug, Clone)]
pub struct Ident {
    /// Lowercased identifier text.
    pub text: String,
    pub pos: Pos,
}

impl Ident {
    pub fn new(text: impl Into<String>, pos: Pos) -> Ident {
        Ident {
            text: text.into(),
            pos,
        }
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}
impl Eq for Ident {}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TablePlacement {
    Decentralized,
    Centralized,
    Replicated,
}

impl TablePlacement {
    pub fn keyword(&self) -> &'static str {
        match self {
            TablePlacement::Decentralized => "DECENTRALIZED",
            TablePlacement::Centralized => "CENTRALIZED",
            TablePlacement::Replicated => "REPLICATED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ViewPlacement {
    Decentralized,
    Centralized,
}

impl ViewPlacement {
    pub fn keyword(&self) -> &'static str {
        match self {
            ViewPlacement::Decentralized => "DECENTRALIZED",
            ViewPlacement::Centralized => "CENTRALIZED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateTable(CreateTable),
    CreateView(CreateView),
}

impl Statement {
    pub fn name(&self) -> &Ident {
        match self {
            Statement::CreateTable(t) => &t.name,
            Statement::CreateView(v) => &v.name,
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            Statement::CreateTable(t) => t.pos,
            Statement::CreateView(v) => v.pos,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CreateTable {
    pub pos: Pos,
    pub name: Ident,
    pub placement: TablePlacement,
    pub columns: Vec<ColDef>,
}

impl PartialEq for CreateTable {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.placement == other.placement
            && self.columns == other.columns
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColDef {
    pub name: Ident,
    pub dtype: DType,
    pub sensitive: bool,
    pub min_group: Option<u64>,
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct CreateView {
    pub pos: Pos,
    pub name: Ident,
    pub placement: ViewPlacement,
    pub options: Vec<ViewOption>,
    pub select: Select,
}

impl PartialEq for CreateView {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.placement == other.placement
            && self.options == other.options
            && self.select == other.select
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WindowMode {
    EventTime,
    ArrivalTime,
}

impl WindowMode {
    pub fn keyword(&self) -> &'static str {
        match self {
            WindowMode::EventTime => "EVENT_TIME",
            WindowMode::ArrivalTime => "ARRIVAL_TIME",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
}

impl TimeUnit {
    pub fn seconds(&self) -> i64 {
        match self {
            TimeUnit::Seconds => 1,
            TimeUnit::Minutes => 60,
            TimeUnit::Hours => 3600,
            TimeUnit::Days => 86400,
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            TimeUnit::Seconds => "SECONDS",
            TimeUnit::Minutes => "MINUTES",
            TimeUnit::Hours => "HOURS",
            TimeUnit::Days => "DAYS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewOption {
    MinGroupSize(u64),
    Window {
        mode: WindowMode,
        width: u64,
        unit: TimeUnit,
        retain: Option<u64>,
    },
    Noise {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: FromClause,
    pub predicates: Vec<PredAtom>,
    pub group_by: Vec<Ident>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<Ident>,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Column(Ident),
    Agg { agg: AggFn, arg: AggArg, pos: Pos },
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Column(a), Expr::Column(b)) => a == b,
            (
                Expr::Agg { agg: f1, arg: a1, .. },
                Expr::Agg { agg: f2, arg: a2, .. },
            ) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn keyword(&self) -> &'static str {
        match self {
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggArg {
    Star,
    Column(Ident),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromClause {
    pub base: Ident,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: Ident,
    pub left_col: Ident,
    pub right_col: Ident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "<>",
        }
    }

    pub fn holds(&self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Gt => ord == Greater,
            CmpOp::Le => ord != Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Ne => ord != Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredAtom {
    pub column: Ident,
    pub cmp: CmpOp,
    pub literal: Literal,
}

/// Analyst query: the view SELECT shape plus ORDER BY and LIMIT.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub select: Select,
    pub order_by: Vec<(Ident, bool)>, // (column, ascending)
    pub limit: Option<u64>,
}

fn fmt_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::CreateTable(t) => {
                write!(f, "CREATE {} TABLE {} (", t.placement.keyword(), t.name)?;
                for (i, c) in t.columns.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{} {}", c.name, c.dtype)?;
                    if c.sensitive {
                        write!(f, " SENSITIVE")?;
                        if let Some(mg) = c.min_group {
                            write!(f, " MIN_GROUP {mg}")?;
                        }
                    }
                    if let Some((lo, hi)) = c.range {
                        write!(f, " RANGE(")?;
                        fmt_num(f, lo)?;
                        write!(f, ", ")?;
                        fmt_num(f, hi)?;
                        write!(f, ")")?;
                    }
                }
                write!(f, ");")
            }
            Statement::CreateView(v) => {
                write!(f, "CREATE {} VIEW {}", v.placement.keyword(), v.name)?;
                if !v.options.is_empty() {
                    write!(f, " WITH (")?;
                    for (i, opt) in v.options.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        match opt {
                            ViewOption::MinGroupSize(n) => write!(f, "MIN_GROUP_SIZE = {n}")?,
                            ViewOption::Window {
                                mode,
                                width,
                                unit,
                                retain,
                            } => {
                                write!(
                                    f,
                                    "WINDOW = {} INTERVAL {} {}",
                                    mode.keyword(),
                                    width,
                                    unit.keyword()
                                )?;
                                if let Some(r) = retain {
                                    write!(f, " RETAIN {r}")?;
                                }
                            }
                            ViewOption::Noise { scale } => {
                                write!(f, "NOISE = LAPLACE(")?;
                                fmt_num(f, *scale)?;
                                write!(f, ")")?;
                            }
                        }
                    }
                    write!(f, ")")?;
                }
                write!(f, " AS {};", v.select)
            }
        }
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT ")?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match &item.expr {
                Expr::Column(c) => write!(f, "{c}")?,
                Expr::Agg { agg, arg, .. } => {
                    write!(f, "{}(", agg.keyword())?;
                    match arg {
                        AggArg::Star => write!(f, "*")?,
                        AggArg::Column(c) => write!(f, "{c}")?,
                    }
                    write!(f, ")")?;
                }
            }
            if let Some(alias) = &item.alias {
                write!(f, " AS {alias}")?;
            }
        }
        write!(f, " FROM {}", self.from.base)?;
        for j in &self.from.joins {
            write!(f, " JOIN {} ON {} = {}", j.table, j.left_col, j.right_col)?;
        }
        if !self.predicates.is_empty() {
            write!(f, " WHERE ")?;
            for (i, p) in self.predicates.iter().enumerate() {
                if i > 0 {
                    write!(f, " AND ")?;
                }
                write!(f, "{} {} ", p.column, p.cmp.symbol())?;
                match &p.literal {
                    Literal::Int(v) => write!(f, "{v}")?,
                    Literal::Float(v) => fmt_num(f, *v)?,
                    Literal::Str(s) => write!(f, "'{s}'")?,
                    Literal::Bool(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" })?,
                }
            }
        }
        if !self.group_by.is_empty() {
            write!(f, " GROUP BY ")?;
            for (i, g) in self.group_by.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{g}")?;
            }
        }
        Ok(())
    }
}

/// Renders statements back to canonical DDL text, one per line.
pub fn pretty_print(statements: &[Statement]) -> String {
    let mut out = String::new();
    for s in statements {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}
