//! Command-line and HTTP front end for `rmpower-core`: CSV ingestion,
//! versioned JSON reports, SVG power curves and a local JSON API.

pub mod cli;
pub mod csvio;
pub mod http;
pub mod report;
pub mod service;
pub mod svg;
