//! Network state clustering on the Grassmannian.
//!
//! Multivariate network time series are summarized window by window as
//! observability subspaces of a kernel ARMA model ([`features`]). Those
//! subspaces are points on a Grassmann manifold ([`grassmann`]) and are
//! clustered with geodesic clustering by tangent spaces ([`gct`]). The
//! [`pipeline`] module strings the pieces together for state clustering,
//! per-state community detection and subnetwork-state-sequence tracking;
//! [`synth`] generates labelled test scenarios and [`metrics`] scores results.

pub mod error;
pub mod features;
pub mod gct;
pub mod grassmann;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use features::{Feature, Horizon, TimeSeriesPanel, WindowConfig};
pub use gct::{GctParams, Labeling};
pub use grassmann::{GrassmannPoint, Provenance, Scope, TangentVector};
pub use kernels::KernelSpec;
pub use pipeline::{PipelineConfig, StatePartition};
