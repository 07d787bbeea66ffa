//! Decoding of phoneme posterior lattices into edit-annotated transcriptions
//! with weighted finite-state transducers, plus evaluation, scoring and
//! assessment reports.

pub mod fst;
pub mod lattice_io;
pub mod phonology;
pub mod decoder;
pub mod eval;
pub mod scoring;
pub mod report;
pub mod synth;
