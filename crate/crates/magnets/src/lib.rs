//! IO, file formats, reporting and the reproduction pipeline for the
//! mask-and-aggregate models in `magnets-core`.

pub mod formats;
pub mod pipeline;
pub mod report;
pub mod repro;
