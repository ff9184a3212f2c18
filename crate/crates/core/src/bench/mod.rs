//! Benchmark harness: simulate captures of a corpus, reconstruct them under
//! a sweep of merge configs, and score the results.

pub mod corpus;
pub mod evaluate;
pub mod manifest;
pub mod run;
pub mod scene;
pub mod selftest;
pub mod spec;

pub use evaluate::{cmd_evaluate, Aggregate, AggregateRule, EvaluationReport};
pub use run::{cmd_reconstruct, cmd_simulate, window_count};
pub use scene::SyntheticScene;
pub use selftest::{cmd_selftest, CheckResult, Fault};
pub use spec::{BenchmarkSpec, BurstSource, NamedConfig, NamedScene};
