//! Stochastic online packing toolkit.
//!
//! The crate models the allocation problem a display-ad publisher faces: a
//! stream of impressions arrives online, each may be assigned to at most one
//! advertiser, and every advertiser holds a contract for a fixed number of
//! impressions. The same machinery covers the general packing form, where
//! agents consume arbitrary amounts of shared resources.
//!
//! Modules:
//!
//! * [`instance`] holds the instance model, generators, and (de)serialization.
//! * [`lp`] is the offline oracle: a deterministic simplex solver plus a
//!   price-decomposition route for large instances, with duality checks.
//! * [`training`] learns resource prices from a sample prefix and allocates
//!   the rest of the stream greedily against those prices.
//! * [`online`] implements the price-based online heuristics with free
//!   disposal (GREEDY, PD_AVG, PD_EXP, HYBRID).
//! * [`fairness`] computes the fair allocation under a sharing policy and the
//!   distance-from-fair metric.
//! * [`bench`] runs seeded experiments and emits CSV/JSON reports.
//!
//! # Example
//!
//! ```
//! use stopack::instance::{DaInstance, Advertiser, Impression, Edge};
//! use stopack::online::{run_online, OnlineRule};
//!
//! let da = DaInstance::from_parts(
//!     vec![Advertiser::new("a", 1), Advertiser::new("b", 1)],
//!     vec![
//!         Impression::new("i1", vec![Edge::new(0, 100.0), Edge::new(1, 4.0)]),
//!         Impression::new("i2", vec![Edge::new(0, 10.0), Edge::new(1, 6.0)]),
//!     ],
//! )
//! .unwrap();
//! let run = run_online(&da, &[0, 1], OnlineRule::Greedy);
//! assert_eq!(run.allocation.total_value, 106.0);
//! ```

pub mod bench;
pub mod fairness;
pub mod instance;
pub mod lp;
pub mod online;
pub mod training;

mod book;
