//! Frequentist model averaging for Gaussian DAG estimation.
//!
//! A linear structural equation model `X = XA + Z`, `Z ~ N(0, σ²I)`, is
//! estimated by fitting a nested sequence of candidate DAGs by least squares
//! and combining them with simplex weights chosen by a penalized quadratic
//! criterion. `A[(k, j)]` is the weight of edge `k -> j`; nodes are 0-based.

pub mod averaging;
pub mod candidates;
pub mod cli;
pub mod error;
pub mod fit;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod synth;
pub mod types;

pub use averaging::{model_average, AveragingConfig, AveragingResult, LambdaRule};
pub use candidates::{build_candidates, Initializer, SearchConfig};
pub use error::{Error, ErrorClass, Result};
pub use types::{Candidate, CandidateSet, CoefMatrix, Dag, DataMatrix, PrecisionMatrix, WeightVector};
