//! Regular matching for tree languages of finite and infinite trees under
//! inside-out substitution, with the supporting automata toolkit.

pub mod budget;
pub mod ata;
pub mod error;
pub mod games;
pub mod nta;
pub mod profiles;
pub mod solver;
pub mod subst;
pub mod trees;
pub mod words;

pub use budget::Budget;
pub use error::{Error, Result};
