//! Gibbs distributions on integer partitions with parameter function
//! `a_k ~ C·k^{p-1}`: exact partition functions, exact and Poissonized
//! samplers, limiting objects of the stratified fluctuations, and Monte Carlo
//! experiments comparing the two.

pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod oracle;
pub mod partition;
pub mod poisson;
pub mod quad;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod theory;
pub mod tilt;

pub use error::{Error, Result};
pub use gibbs::{log_pmf, partition_function_table, ModelParams, PartitionFunctionTable};
pub use partition::{young_curve, Partition, YoungCurve};
pub use sampler::{boltzmann_sample, recursive_sample, Method, SamplerConfig};
pub use tilt::{scaling_info, solve_tilt, ScalingInfo, TiltSolution};
