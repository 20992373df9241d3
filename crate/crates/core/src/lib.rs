//! Bearing-only localization of a monocular camera trajectory against
//! geotagged panoramas.
//!
//! The pipeline has two estimation phases. Phase 1 ([`pointmap`]) tracks
//! features over a short image stream ([`tracks`]), triangulates 3D
//! landmarks from bearing observations and refines landmarks and camera
//! poses with a sparse Levenberg-Marquardt solver ([`nlls`]). Phase 2
//! ([`register`]) retrieves matching rectilinear panorama views
//! ([`retrieval`]), estimates their 6DOF poses against the fixed landmark
//! map and georeferences the trajectory through the panoramas' GPS tags
//! ([`geo`]).
//!
//! [`simworld`] generates ground-truthed synthetic datasets and brute-force
//! oracles; [`pipeline`] wires the stages together over on-disk datasets
//! ([`dataset`]).

pub mod config;
pub mod dataset;
pub mod geo;
pub mod geometry;
pub mod nlls;
pub mod pipeline;
pub mod pointmap;
pub mod register;
pub mod retrieval;
pub mod simworld;
pub mod tracks;
