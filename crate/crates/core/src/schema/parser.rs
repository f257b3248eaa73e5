//! Hand-written recursive-descent parser for the DDL dialect.

use super::ast::*;
use super::lexer::{tokenize, Pos, Token};
use super::ParseError;
use crate::value::DType;

const RESERVED: &[&str] = &[
    "create", "decentralized", "centralized", "replicated", "table", "view", "with", "as",
    "select", "from", "where", "group", "by", "join", "on", "and", "count", "sum", "avg", "min",
    "max", "sensitive", "min_group", "range", "int64", "float64", "text", "timestamp", "bool",
    "min_group_size", "window", "noise", "laplace", "event_time", "arrival_time", "interval",
    "seconds", "minutes", "hours", "days", "retain", "true", "false", "order", "limit", "asc",
    "desc",
];

struct TokenStream {
    tokens: Vec<(Token, Pos)>,
    idx: usize,
    end: Pos,
}

impl TokenStream {
    fn new(source: &str) -> Result<TokenStream, ParseError> {
        let tokens = tokenize(source)?;
        let end = tokens
            .last()
            .map(|(_, p)| Pos {
                line: p.line,
                col: p.col + 1,
            })
            .unwrap_or(Pos { line: 1, col: 1 });
        Ok(TokenStream {
            tokens,
            idx: 0,
            end,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.tokens
            .get(self.idx)
            .map(|(_, p)| *p)
            .unwrap_or(self.end)
    }

    fn found(&self) -> String {
        self.peek()
            .map(|t| t.describe())
            .unwrap_or_else(|| "end of input".into())
    }

    fn advance(&mut self) -> Option<(Token, Pos)> {
        let t = self.tokens.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.idx >= self.tokens.len()
    }

    fn expect(&mut self, token: Token) -> Result<Pos, ParseError> {
        match self.peek() {
            Some(t) if *t == token => Ok(self.advance().unwrap().1),
            _ => Err(ParseError::syntax(
                self.pos(),
                format!("expected {}", token.describe()),
                self.found(),
            )),
        }
    }

    /// True and consumed when the next token is the given keyword.
    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Token::Word(w)) if w == kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Word(w)) if w == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Pos, ParseError> {
        if self.peek_kw(kw) {
            Ok(self.advance().unwrap().1)
        } else {
            Err(ParseError::syntax(
                self.pos(),
                format!("expected {}", kw.to_uppercase()),
                self.found(),
            ))
        }
    }

    fn expect_ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek() {
            Some(Token::Word(w)) if !RESERVED.contains(&w.as_str()) => {
                let (tok, pos) = self.advance().unwrap();
                match tok {
                    Token::Word(text) => Ok(Ident::new(text, pos)),
                    _ => unreachable!(),
                }
            }
            Some(Token::Word(w)) => Err(ParseError::syntax(
                self.pos(),
                format!("reserved keyword {} used as identifier", w.to_uppercase()),
                self.found(),
            )),
            _ => Err(ParseError::syntax(self.pos(), "expected identifier", self.found())),
        }
    }

    fn expect_uint(&mut self, what: &str) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Token::Int(v)) if *v >= 0 => {
                let v = *v as u64;
                self.advance();
                Ok(v)
            }
            _ => Err(ParseError::syntax(
                self.pos(),
                format!("expected integer {what}"),
                self.found(),
            )),
        }
    }

    /// Signed numeric literal (int or decimal).
    fn expect_number(&mut self) -> Result<f64, ParseError> {
        let neg = if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            true
        } else {
            false
        };
        let v = match self.peek() {
            Some(Token::Int(v)) => *v as f64,
            Some(Token::Num(v)) => *v,
            _ => {
                return Err(ParseError::syntax(self.pos(), "expected number", self.found()));
            }
        };
        self.advance();
        Ok(if neg { -v } else { v })
    }
}

pub fn parse_script(source: &str) -> Result<Vec<Statement>, ParseError> {
    let mut ts = TokenStream::new(source)?;
    let mut statements = Vec::new();
    while !ts.at_end() {
        let stmt = parse_statement(&mut ts)?;
        ts.expect(Token::Semi)?;
        statements.push(stmt);
    }
    Ok(statements)
}

fn parse_statement(ts: &mut TokenStream) -> Result<Statement, ParseError> {
    let start = ts.pos();
    ts.expect_kw("create")?;
    let placement_pos = ts.pos();
    match ts.peek() {
        Some(Token::Word(w)) => match w.as_str() {
            "decentralized" | "centralized" | "replicated" => {}
            "table" | "view" => {
                return Err(ParseError::syntax(
                    placement_pos,
                    "placement keyword required before TABLE or VIEW",
                    ts.found(),
                ));
            }
            other => {
                return Err(ParseError::unknown_keyword(
                    placement_pos,
                    other.to_uppercase(),
                    &["DECENTRALIZED", "CENTRALIZED", "REPLICATED"],
                ));
            }
        },
        _ => {
            return Err(ParseError::syntax(
                placement_pos,
                "expected placement keyword",
                ts.found(),
            ));
        }
    }
    let placement_word = match ts.advance().unwrap().0 {
        Token::Word(w) => w,
        _ => unreachable!(),
    };

    if ts.eat_kw("table") {
        let placement = match placement_word.as_str() {
            "decentralized" => TablePlacement::Decentralized,
            "centralized" => TablePlacement::Centralized,
            _ => TablePlacement::Replicated,
        };
        parse_create_table(ts, start, placement)
    } else if ts.peek_kw("view") {
        let placement = match placement_word.as_str() {
            "decentralized" => ViewPlacement::Decentralized,
            "centralized" => ViewPlacement::Centralized,
            _ => {
                return Err(ParseError::syntax(
                    placement_pos,
                    "views must be DECENTRALIZED or CENTRALIZED",
                    "REPLICATED",
                ));
            }
        };
        ts.advance();
        parse_create_view(ts, start, placement)
    } else {
        Err(ParseError::syntax(ts.pos(), "expected TABLE or VIEW", ts.found()))
    }
}

fn parse_create_table(
    ts: &mut TokenStream,
    pos: Pos,
    placement: TablePlacement,
) -> Result<Statement, ParseError> {
    let name = ts.expect_ident()?;
    ts.expect(Token::LParen)?;
    let mut columns = vec![parse_coldef(ts)?];
    while matches!(ts.peek(), Some(Token::Comma)) {
        ts.advance();
        columns.push(parse_coldef(ts)?);
    }
    ts.expect(Token::RParen)?;
    Ok(Statement::CreateTable(CreateTable {
        pos,
        name,
        placement,
        columns,
    }))
}

fn parse_coldef(ts: &mut TokenStream) -> Result<ColDef, ParseError> {
    let name = ts.expect_ident()?;
    let dtype_pos = ts.pos();
    let dtype = match ts.peek() {
        Some(Token::Word(w)) => match w.as_str() {
            "int64" => DType::Int64,
            "float64" => DType::Float64,
            "text" => DType::Text,
            "timestamp" => DType::Timestamp,
            "bool" => DType::Bool,
            other => {
                return Err(ParseError::unknown_keyword(
                    dtype_pos,
                    other.to_uppercase(),
                    &["INT64", "FLOAT64", "TEXT", "TIMESTAMP", "BOOL"],
                ));
            }
        },
        _ => {
            return Err(ParseError::syntax(dtype_pos, "expected column type", ts.found()));
        }
    };
    ts.advance();

    let mut sensitive = false;
    let mut min_group = None;
    if ts.eat_kw("sensitive") {
        sensitive = true;
        if ts.eat_kw("min_group") {
            min_group = Some(ts.expect_uint("MIN_GROUP value")?);
        }
    }
    let mut range = None;
    if ts.eat_kw("range") {
        ts.expect(Token::LParen)?;
        let lo = ts.expect_number()?;
        ts.expect(Token::Comma)?;
        let hi = ts.expect_number()?;
        ts.expect(Token::RParen)?;
        range = Some((lo, hi));
    }
    Ok(ColDef {
        name,
        dtype,
        sensitive,
        min_group,
        range,
    })
}

fn parse_create_view(
    ts: &mut TokenStream,
    pos: Pos,
    placement: ViewPlacement,
) -> Result<Statement, ParseError> {
    let name = ts.expect_ident()?;
    let mut options = Vec::new();
    if ts.eat_kw("with") {
        ts.expect(Token::LParen)?;
        options.push(parse_option(ts)?);
        while matches!(ts.peek(), Some(Token::Comma)) {
            ts.advance();
            options.push(parse_option(ts)?);
        }
        ts.expect(Token::RParen)?;
    }
    ts.expect_kw("as")?;
    let select = parse_select(ts)?;
    Ok(Statement::CreateView(CreateView {
        pos,
        name,
        placement,
        options,
        select,
    }))
}

fn parse_option(ts: &mut TokenStream) -> Result<ViewOption, ParseError> {
    let opt_pos = ts.pos();
    match ts.peek() {
        Some(Token::Word(w)) => match w.as_str() {
            "min_group_size" => {
                ts.advance();
                ts.expect(Token::Eq)?;
                Ok(ViewOption::MinGroupSize(ts.expect_uint("MIN_GROUP_SIZE value")?))
            }
            "window" => {
                ts.advance();
                ts.expect(Token::Eq)?;
                let mode = if ts.eat_kw("event_time") {
                    WindowMode::EventTime
                } else if ts.eat_kw("arrival_time") {
                    WindowMode::ArrivalTime
                } else {
                    return Err(ParseError::syntax(
                        ts.pos(),
                        "expected EVENT_TIME or ARRIVAL_TIME",
                        ts.found(),
                    ));
                };
                ts.expect_kw("interval")?;
                let width = ts.expect_uint("window width")?;
                let unit = if ts.eat_kw("seconds") {
                    TimeUnit::Seconds
                } else if ts.eat_kw("minutes") {
                    TimeUnit::Minutes
                } else if ts.eat_kw("hours") {
                    TimeUnit::Hours
                } else if ts.eat_kw("days") {
                    TimeUnit::Days
                } else {
                    return Err(ParseError::syntax(
                        ts.pos(),
                        "expected SECONDS, MINUTES, HOURS or DAYS",
                        ts.found(),
                    ));
                };
                let retain = if ts.eat_kw("retain") {
                    Some(ts.expect_uint("RETAIN value")?)
                } else {
                    None
                };
                Ok(ViewOption::Window {
                    mode,
                    width,
                    unit,
                    retain,
                })
            }
            "noise" => {
                ts.advance();
                ts.expect(Token::Eq)?;
                ts.expect_kw("laplace")?;
                ts.expect(Token::LParen)?;
                let scale = ts.expect_number()?;
                ts.expect(Token::RParen)?;
                Ok(ViewOption::Noise { scale })
            }
            other => Err(ParseError::unknown_keyword(
                opt_pos,
                other.to_uppercase(),
                &["MIN_GROUP_SIZE", "WINDOW", "NOISE"],
            )),
        },
        _ => Err(ParseError::syntax(opt_pos, "expected view option", ts.found())),
    }
}

fn parse_select(ts: &mut TokenStream) -> Result<Select, ParseError> {
    ts.expect_kw("select")?;
    let mut items = vec![parse_item(ts)?];
    while matches!(ts.peek(), Some(Token::Comma)) {
        ts.advance();
        items.push(parse_item(ts)?);
    }
    ts.expect_kw("from")?;
    let base = ts.expect_ident()?;
    let mut joins = Vec::new();
    while ts.eat_kw("join") {
        let table = ts.expect_ident()?;
        ts.expect_kw("on")?;
        let left_col = ts.expect_ident()?;
        ts.expect(Token::Eq)?;
        let right_col = ts.expect_ident()?;
        joins.push(Join {
            table,
            left_col,
            right_col,
        });
    }
    let mut predicates = Vec::new();
    if ts.eat_kw("where") {
        predicates.push(parse_pred_atom(ts)?);
        while ts.eat_kw("and") {
            predicates.push(parse_pred_atom(ts)?);
        }
    }
    let mut group_by = Vec::new();
    if ts.eat_kw("group") {
        ts.expect_kw("by")?;
        group_by.push(ts.expect_ident()?);
        while matches!(ts.peek(), Some(Token::Comma)) {
            ts.advance();
            group_by.push(ts.expect_ident()?);
        }
    }
    Ok(Select {
        items,
        from: FromClause { base, joins },
        predicates,
        group_by,
    })
}

fn parse_item(ts: &mut TokenStream) -> Result<SelectItem, ParseError> {
    let pos = ts.pos();
    let agg = match ts.peek() {
        Some(Token::Word(w)) => match w.as_str() {
            "count" => Some(AggFn::Count),
            "sum" => Some(AggFn::Sum),
            "avg" => Some(AggFn::Avg),
            "min" => Some(AggFn::Min),
            "max" => Some(AggFn::Max),
            _ => None,
        },
        _ => None,
    };
    let expr = if let Some(agg) = agg {
        ts.advance();
        ts.expect(Token::LParen)?;
        let arg = if matches!(ts.peek(), Some(Token::Star)) {
            ts.advance();
            AggArg::Star
        } else {
            AggArg::Column(ts.expect_ident()?)
        };
        ts.expect(Token::RParen)?;
        Expr::Agg { agg, arg, pos }
    } else {
        Expr::Column(ts.expect_ident()?)
    };
    let alias = if ts.eat_kw("as") {
        Some(ts.expect_ident()?)
    } else {
        None
    };
    Ok(SelectItem { expr, alias })
}

fn parse_pred_atom(ts: &mut TokenStream) -> Result<PredAtom, ParseError> {
    let column = ts.expect_ident()?;
    let cmp = match ts.peek() {
        Some(Token::Eq) => CmpOp::Eq,
        Some(Token::Lt) => CmpOp::Lt,
        Some(Token::Gt) => CmpOp::Gt,
        Some(Token::Le) => CmpOp::Le,
        Some(Token::Ge) => CmpOp::Ge,
        Some(Token::Ne) => CmpOp::Ne,
        _ => {
            return Err(ParseError::syntax(
                ts.pos(),
                "expected comparison operator",
                ts.found(),
            ));
        }
    };
    ts.advance();
    let literal = match ts.peek() {
        Some(Token::Int(v)) => {
            let v = *v;
            ts.advance();
            Literal::Int(v)
        }
        Some(Token::Num(v)) => {
            let v = *v;
            ts.advance();
            Literal::Float(v)
        }
        Some(Token::Minus) => {
            ts.advance();
            match ts.peek() {
                Some(Token::Int(v)) => {
                    let v = -*v;
                    ts.advance();
                    Literal::Int(v)
                }
                Some(Token::Num(v)) => {
                    let v = -*v;
                    ts.advance();
                    Literal::Float(v)
                }
                _ => {
                    return Err(ParseError::syntax(ts.pos(), "expected number", ts.found()));
                }
            }
        }
        Some(Token::Str(s)) => {
            let s = s.clone();
            ts.advance();
            Literal::Str(s)
        }
        Some(Token::Word(w)) if w == "true" => {
            ts.advance();
            Literal::Bool(true)
        }
        Some(Token::Word(w)) if w == "false" => {
            ts.advance();
            Literal::Bool(false)
        }
        _ => {
            return Err(ParseError::syntax(ts.pos(), "expected literal", ts.found()));
        }
    };
    Ok(PredAtom {
        column,
        cmp,
        literal,
    })
}

pub fn parse_query(source: &str) -> Result<Query, ParseError> {
    let mut ts = TokenStream::new(source)?;
    let select = parse_select(&mut ts)?;
    let mut order_by = Vec::new();
    if ts.eat_kw("order") {
        ts.expect_kw("by")?;
        loop {
            let col = ts.expect_ident()?;
            let asc = if ts.eat_kw("desc") {
                false
            } else {
                ts.eat_kw("asc");
                true
            };
            order_by.push((col, asc));
            if matches!(ts.peek(), Some(Token::Comma)) {
                ts.advance();
            } else {
                break;
            }
        }
    }
    let limit = if ts.eat_kw("limit") {
        Some(ts.expect_uint("LIMIT value")?)
    } else {
        None
    };
    if matches!(ts.peek(), Some(Token::Semi)) {
        ts.advance();
    }
    if !ts.at_end() {
        return Err(ParseError::syntax(
            ts.pos(),
            "unexpected trailing input",
            ts.found(),
        ));
    }
    Ok(Query {
        select,
        order_by,
        limit,
    })
}
