//! `mdbook test` cannot link against workspace crates, so each chapter of
//! the book is pulled in here as a module and its snippets run under
//! `cargo test --doc`. A failing test names the chapter module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/encoder.md")]
pub mod encoder {}
#[doc = include_str!("../../../book/src/cluster.md")]
pub mod cluster {}
#[doc = include_str!("../../../book/src/instance.md")]
pub mod instance {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
