//! Surface syntax: a small Haskell-like language with class, instance and
//! signature declarations, top-level bindings, and a `rule` form for raw CHRs.

mod ast;
mod lexer;
mod parser;

use thiserror::Error;

pub use ast::{Binding, ClassDecl, Decl, FunDep, InstanceDecl, Loc, MethodSig, RawRule, Signature, SurfaceProgram};
pub use lexer::{lex, Tok, Token};
pub use parser::{parse_constraints, parse_goal, parse_program, parse_rule, parse_type, parse_type_scheme, validate_arities};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{loc}: {message}")]
pub struct ParseError {
    pub loc: Loc,
    pub message: String,
}

impl ParseError {
    pub fn new(loc: Loc, message: impl Into<String>) -> Self {
        ParseError { loc, message: message.into() }
    }
}
