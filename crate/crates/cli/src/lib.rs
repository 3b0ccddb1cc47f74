//! Command-line front end: the instance document format and the verbs.

pub mod document;
pub mod run;

pub use document::Document;
pub use run::{run, Cli, Report};
