//! Configuration-driven runner for the `decohere` numerics: parameter grids, figure
//! recipes, dense-oracle fixtures, CSV / JSON records and SVG plots.

pub mod cli;
pub mod config;
pub mod fixtures;
pub mod record;
pub mod reproduce;
pub mod runner;
pub mod svg;
