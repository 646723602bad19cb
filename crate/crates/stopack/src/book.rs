//! Doc-test anchors for the user guide in `book/`. Each chapter is included
//! here verbatim so `cargo test` compiles and runs every snippet, keeping
//! the guide honest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}

#[doc = include_str!("../../../book/src/lp.md")]
pub mod lp_oracle {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training_guide {}

#[doc = include_str!("../../../book/src/online.md")]
pub mod online_heuristics {}

#[doc = include_str!("../../../book/src/fairness.md")]
pub mod fairness_guide {}

#[doc = include_str!("../../../book/src/bench.md")]
pub mod benchmarking {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli_reference {}
