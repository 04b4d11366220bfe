//! Command-line front end and HTTP service for the trajectory ranker.

pub mod commands;
pub mod service;
