//! Evaluation, timing, plotting and file formats.

pub mod eval;
pub mod io;
pub mod plot;
pub mod timing;
