//! Identification of candidate mineralization zones along a 1-D geochemical
//! transect.
//!
//! Per-element concentrations are smoothed with penalized splines under a
//! Tweedie quasi-likelihood (log link), the curvature of every pairwise
//! log-ratio of the fitted curves is evaluated on a dense grid, and element
//! pairs are ranked by the c-value: the mean squared peak excess of the
//! curvature over its own mean-plus-standard-deviation threshold. High, narrow
//! curvature peaks mark rapid spatial change of a ratio, the signature of a
//! localized anomaly.
//!
//! Modules follow the pipeline:
//!
//! - [`ingest`]: sample tables, transect projection, position normalization,
//!   outlier weights
//! - [`spline`]: cubic B-spline basis and the exact roughness penalty
//! - [`gam`]: penalized IRLS fitting and GCV smoothing selection
//! - [`curvature`]: log-ratio curves, curvature, thresholds, crossing sets
//!   and c-values
//! - [`ranking`]: pair matrices, hitlists, frequency tables, accumulation
//! - [`synth`]: seeded synthetic transects with known anomalies
//! - [`config`], [`report`], [`commands`]: the CLI front end

pub mod commands;
pub mod config;
pub mod curvature;
pub mod gam;
pub mod ingest;
pub mod ranking;
pub mod report;
pub mod spline;
pub mod synth;
