//! The SQL-extension schema language: parsing, validation and the
//! resulting catalog consumed by every other tier.

pub mod ast;
pub mod catalog;
pub mod lexer;
pub mod parser;
pub mod validate;

pub use ast::{pretty_print, Statement};
pub use catalog::SchemaCatalog;
pub use lexer::Pos;
pub use validate::{validate, Violation, ViolationCode};

use thiserror::Error;

/// First-failure parse error with position and expectation info.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{pos} SYNTAX {message}, found {found}")]
    Syntax {
        pos: Pos,
        message: String,
        found: String,
    },
    #[error("{pos} UNKNOWN_KEYWORD {found} (expected one of: {})", expected.join(", "))]
    UnknownKeyword {
        pos: Pos,
        found: String,
        expected: Vec<String>,
    },
}

impl ParseError {
    pub fn syntax(pos: Pos, message: impl Into<String>, found: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            pos,
            message: message.into(),
            found: found.into(),
        }
    }

    pub fn unknown_keyword(pos: Pos, found: impl Into<String>, expected: &[&str]) -> ParseError {
        ParseError::UnknownKeyword {
            pos,
            found: found.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::UnknownKeyword { pos, .. } => *pos,
        }
    }

    /// `LINE:COL CODE message` line for CLI reporting.
    pub fn report_line(&self) -> String {
        match self {
            ParseError::Syntax { pos, message, found } => {
                format!("{pos} SYNTAX {message}, found {found}")
            }
            ParseError::UnknownKeyword { pos, found, expected } => format!(
                "{pos} UNKNOWN_KEYWORD {found} (expected one of: {})",
                expected.join(", ")
            ),
        }
    }
}

/// Parses DDL source into pre-validation statements.
pub fn parse_ddl(source: &str) -> Result<Vec<Statement>, ParseError> {
    parser::parse_script(source)
}

/// Parses an analyst query (view SELECT shape plus ORDER BY / LIMIT).
pub fn parse_query(source: &str) -> Result<ast::Query, ParseError> {
    parser::parse_query(source)
}
