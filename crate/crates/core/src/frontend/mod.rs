//! Tokenizer, parser and directive binding for PENCIL source.

pub mod ast;
pub mod lexer;
pub mod parser;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{
    attach_directives, parse_pragma, parse_source, parse_source_with, parse_translation_unit,
    parse_translation_unit_with, ParseOptions, ParsedUnit, PlacedDirective,
};
