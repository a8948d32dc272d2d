//! Core library for spicedeck: SPICE netlist editing, transient simulation
//! (external engine adapter plus a built-in reference buck converter),
//! deterministic waveform reading tools, an LLM tool-calling agent loop,
//! datasheet retrieval, and a benchmark harness for SMPS design tasks.
//!
//! Feature `parallel` (default) backs the benchmark worker pool with rayon;
//! without it every run is sequential with identical results.

pub mod agent;
pub mod benchmark;
pub mod engine;
pub mod measure;
pub mod netlist;
pub mod rag;
