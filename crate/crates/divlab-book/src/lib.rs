//! Doc-test harness for the guide under `book/`.
//!
//! Each chapter becomes the documentation of an empty module, so its Rust
//! samples run under `cargo test --doc`.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/arith.md")]
pub mod arith {}
#[doc = include_str!("../../../book/src/divgraph.md")]
pub mod divgraph {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/sievekit.md")]
pub mod sievekit {}
#[doc = include_str!("../../../book/src/walkshapes.md")]
pub mod walkshapes {}
#[doc = include_str!("../../../book/src/graphcore.md")]
pub mod graphcore {}
#[doc = include_str!("../../../book/src/correlations.md")]
pub mod correlations {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
