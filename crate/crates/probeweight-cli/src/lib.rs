//! IO, file formats, and the experiment harness for the probe-and-allocate
//! engine.
//!
//! The algorithmic core lives in `probeweight-core`; this crate adds
//! everything that touches the outside world: dataset CSVs, the binary curve
//! file, parameter checkpoints, run directories, report emission, and the
//! grid-bench harness behind the `probeweight` binary.

pub mod bench;
pub mod checkpoint;
pub mod clock;
pub mod curve_file;
pub mod dataset_io;
pub mod reports;
pub mod rundir;
