//! Concrete `.kmelia` syntax: parser and canonical pretty-printer.

mod lexer;
mod parser;
mod render;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::Component;

pub(crate) use lexer::Tok;
pub(crate) use parser::Parser;
pub use parser::{is_keyword, parse_component_file, parse_expr, KEYWORDS};
pub use render::{render_behavior, render_component, render_components};

/// First syntax error in a source text. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
}

/// A parsed `.kmelia` file.
#[derive(Debug, Clone)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
    pub components: Vec<Component>,
}

impl SourceFile {
    pub fn parse(path: impl Into<PathBuf>, text: String) -> Result<Self, LoadError> {
        let path = path.into();
        match parse_component_file(&text) {
            Ok(components) => Ok(SourceFile {
                path,
                text,
                components,
            }),
            Err(source) => Err(LoadError::Parse { path, source }),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        SourceFile::parse(path, text)
    }
}
