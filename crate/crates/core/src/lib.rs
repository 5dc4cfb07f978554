//! Synthesis of quantized feedback controllers for discrete time linear
//! hybrid systems.
//!
//! The pipeline is: build or parse a [`model::Model`], compute its control
//! abstraction ([`abstraction`], optionally in parallel with [`mapreduce`]),
//! solve the finite control problem ([`synth`]), emit a lookup table or C
//! source ([`codegen`]) and check the closed loop ([`simulator`]).

pub mod abstraction;
pub mod benchmarks;
pub mod codegen;
pub mod mapreduce;
pub mod milp;
pub mod model;
pub mod quantizer;
pub mod rational;
pub mod simulator;
pub mod synth;
pub mod validate;
