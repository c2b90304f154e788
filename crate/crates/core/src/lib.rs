//! Numerical core for learning Koopman operators from sampled trajectories and
//! certifying that the training data is persistently exciting.
//!
//! The crate is `no_std` and only needs an allocator. File formats, threads and
//! the command line live in the `koopman-pe` companion crate.

#![no_std]

extern crate alloc;

pub mod dictionary;
pub mod doe;
pub mod edmd;
pub mod error;
pub mod eval;
pub mod fft;
pub mod linalg;
pub mod ode_sim;
pub mod par;
pub mod pe_analysis;

pub use dictionary::{Dictionary, DictionarySpec};
pub use doe::{design_pe_ics, evaluate_ic_set, sample_region, DesignConfig, DesignResult, Region};
pub use edmd::{build_snapshots, fit_edmd, FitOptions, KoopmanModel, SnapshotPair};
pub use error::{Error, Result};
pub use eval::{run_basin_experiment, ExperimentConfig, ExperimentOutcome};
pub use ode_sim::{simulate, Repressilator, RepressilatorParams, SimConfig, Trajectory, VectorField};
pub use par::{Parallelism, Sequential};
pub use pe_analysis::{pe_certificate, Estimator, LiftedSignalEnsemble, PeCertificate, PeConfig};
