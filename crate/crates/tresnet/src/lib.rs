//! Forecasting toolkit for VM CPU utilization traces.
//!
//! The pipeline ingests Azure-style utilization traces, analyzes their
//! temporal structure, and trains a three-branch residual convolutional
//! network (T-ResNet) that predicts the next interval's maximum CPU
//! utilization from locality, periodicity, and tendency windows.

pub mod analysis;
pub mod data;
pub mod eval;
pub mod model;
pub mod nn;
pub mod sampler;
pub mod training;
