//! Predict-before-execute filtering of generated API test requests against a
//! simulated rule-based registry.

pub mod classifier;
pub mod domain;
pub mod features;
pub mod gate;
pub mod generator;
pub mod harness;
pub mod payload;
pub mod registry;
pub mod rules;
pub mod scalar;
pub mod stats;
pub mod workflow;

pub use scalar::Scalar;

pub type Forest = classifier::RandomForest<f64>;
pub type Matrix = features::FeatureMatrix<f64>;
pub type Decision = gate::GateDecision<f64>;
