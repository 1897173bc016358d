//! Chart structure parsing, low-level task decomposition and visual attention
//! guidance for static chart images.
//!
//! The pipeline runs in stages: a chart image is characterized into a
//! [`model::ChartSpec`], classical image processing in [`regiondetect`] finds
//! text, marks, axes and ticks, [`semantics`] calibrates axes and attaches
//! meaning to each region, [`decompose`] turns a question into typed subtasks,
//! [`workflow`] keeps those subtasks as an editable DAG and [`guidance`]
//! renders per-step overlays. Every model call goes through [`modelclient`].

pub mod cli;
pub mod decompose;
pub mod doc;
pub mod eval;
pub mod font;
pub mod guidance;
pub mod model;
pub mod modelclient;
pub mod pipeline;
pub mod raster;
pub mod regiondetect;
pub mod schemas;
pub mod semantics;
pub mod service;
pub mod synth;
pub mod workflow;

pub use doc::{Document, ParseError, SchemaVersion};
pub use model::{BBox, ChartSpec, ChartType, Mask, Role, ShapeClass};
