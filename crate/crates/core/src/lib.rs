pub mod cli;
pub mod codegen;
pub mod detection;
pub mod eval;
pub mod geometry;
pub mod layout;
pub mod pipeline;
pub mod relations;
pub mod synth;
