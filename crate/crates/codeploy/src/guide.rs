//! The user guide. Chapters live in `book/` and build with mdbook; they
//! are included here so their snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/problem.md")]
pub mod problem {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
#[doc = include_str!("../../../book/src/programs.md")]
pub mod programs {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/coupling.md")]
pub mod coupling {}
#[doc = include_str!("../../../book/src/partitioning.md")]
pub mod partitioning {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
