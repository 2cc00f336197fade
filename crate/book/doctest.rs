// Each chapter becomes a module so that `cargo test --doc` runs its code
// blocks and a failure names the chapter it came from.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/maps.md")]
pub mod maps {}
#[doc = include_str!("src/regularity.md")]
pub mod regularity {}
#[doc = include_str!("src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("src/comparison.md")]
pub mod comparison {}
#[doc = include_str!("src/poincare.md")]
pub mod poincare {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
