//! Onboard inspection pipeline for photovoltaic plants surveyed by UAV.
//!
//! The crate covers the full chain from a radiometric thermal frame to a
//! de-duplicated, geo-referenced defect inventory:
//!
//! - [`geodesy`]: WGS84 points, tangent-plane conversion, haversine distance.
//! - [`thermal`]: calibration, normalization, palette rendering, CLAHE.
//! - [`fusion`]: palette-invariance loss, gated fusion, focal/GIoU losses,
//!   toy encoders, gradient checks and the detector interface.
//! - [`reacquisition`]: line-of-sight geometry, Rodrigues rotation and gimbal commands.
//! - [`geoprojection`]: pixel to ground-plane projection through the pose chain.
//! - [`dedup`]: haversine DBSCAN, cluster merging and the Dup-FP metric.
//! - [`telemetry`]: JSON/KML payloads, publish sinks and the bandwidth ledger.
//! - [`simulator`]: deterministic synthetic missions and their metrics.
//! - [`config`]: the pipeline configuration file.

pub mod config;
pub mod dedup;
pub mod fusion;
pub mod geodesy;
pub mod geoprojection;
pub mod reacquisition;
pub mod simulator;
pub mod telemetry;
pub mod thermal;
