pub mod error;
pub mod grid;
pub mod scene;
pub mod synth;
pub mod segnet;
pub mod training;
pub mod metrics;
pub mod config;
pub mod cli;
