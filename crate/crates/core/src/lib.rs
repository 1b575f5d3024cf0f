//! Planar EKF-SLAM: motion and range/bearing models, filter, laser-scan
//! perception, sensor log ingest, simulation and evaluation.

pub mod filter;
pub mod ingest;
pub mod models;
pub mod perception;
pub mod simulator;
pub mod evaluation;
pub mod pipeline;
