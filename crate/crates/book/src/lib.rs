//! Compiles the code listings of the guide in `book/` as doctests, one module
//! per chapter, so `cargo test` keeps the book honest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/choice-model.md")]
pub mod choice_model {}
#[doc = include_str!("../../../book/src/linear-programs.md")]
pub mod linear_programs {}
#[doc = include_str!("../../../book/src/fluid.md")]
pub mod fluid {}
#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}
#[doc = include_str!("../../../book/src/resolving.md")]
pub mod resolving {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
