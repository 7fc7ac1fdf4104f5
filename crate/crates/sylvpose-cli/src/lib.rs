//! Support library of the `sylvpose` binary: the correspondence file format.

pub mod format;
