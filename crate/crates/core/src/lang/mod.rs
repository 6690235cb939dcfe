//! Front end for the `.vob` modelling language: parsing, well-formedness,
//! canonical printing and hashing, and constant instantiation.

mod ast;
mod canon;
mod check;
mod instantiate;
mod lexer;
mod parser;

use std::fmt;

pub use ast::*;
pub use canon::{canonical_hash, canonical_print, print_expr, ModelHash};
pub use check::{check_literal, well_formed, Scope, Ty, WfError};
pub use instantiate::{instantiate, InstantiateError};
pub use lexer::{tokenize, Tok, Token};
pub use parser::{is_keyword, parse_expr, parse_literal, parse_machine, Parser};

/// Syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}
