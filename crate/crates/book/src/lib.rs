//! Compiles and runs every code block of the guide as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}

#[doc = include_str!("../../../book/src/algorithms.md")]
pub mod algorithms {}

#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}

#[doc = include_str!("../../../book/src/modes.md")]
pub mod modes {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
