pub mod augment;
pub mod concurrency;
pub mod corpus;
pub mod evalreport;
pub mod hashing;
pub mod negmine;
pub mod providers;
pub mod scoring;
pub mod selfcheck;
pub mod synth;
pub mod pipeline;
