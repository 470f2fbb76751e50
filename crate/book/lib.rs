//! The guide's chapters, compiled so `cargo test` runs every snippet.

#[doc = include_str!("src/intro.md")]
pub mod intro {}
#[doc = include_str!("src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("src/providers.md")]
pub mod providers {}
#[doc = include_str!("src/loop.md")]
pub mod metacognitive_loop {}
#[doc = include_str!("src/traces.md")]
pub mod traces {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
