//! Adaptive Weights Clustering.
//!
//! A multiscale nonparametric clustering procedure: binary pair weights are
//! recovered by sequential likelihood-ratio tests of "no gap" between local
//! clusters on a growing sequence of radii, and clusters are read off as the
//! connected components of the final weights.
//!
//! ```
//! use awc::{run_awc, AwcConfig, PointMatrix};
//!
//! let mut rows = Vec::new();
//! for i in 0..20 {
//!     rows.push(vec![(i % 5) as f64 * 0.01, (i / 5) as f64 * 0.01]);
//!     rows.push(vec![5.0 + (i % 5) as f64 * 0.01, (i / 5) as f64 * 0.01]);
//! }
//! let points = PointMatrix::from_rows(&rows).unwrap();
//! let config = AwcConfig::default();
//! let result = run_awc(&points, 5.0, &config).unwrap();
//! assert_eq!(result.num_clusters, 2);
//! ```

pub mod awc;
pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod mass;
pub mod metrics;
pub mod neighborhood;
pub mod registry;
pub mod tuning;
pub mod weights;

pub use crate::awc::{run_awc, run_awc_distances, AwcConfig, ClusteringResult, PreparedAwc, RunDiagnostics};
pub use crate::error::{AwcError, Result};
pub use crate::neighborhood::{DistanceMatrix, PointMatrix};
pub use crate::weights::{extract_clusters, Clustering, WeightMatrix};
