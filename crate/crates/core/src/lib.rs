//! Attention-fusion primitives for text-guided diffusion editing.
//!
//! - [`select`]: head-averaged cross-attention maps and percentile token sets
//! - [`ot`]: cost matrices and the entropic Sinkhorn solver
//! - [`caof`]: transport-weighted blending of cross-attention outputs
//! - [`sasf`]: AdaIN with high-frequency detail injection, key/value swap
//! - [`metrics`]: BOM / BOSM composites and texture metrics (LV, GC, HFS)
//! - [`io`]: `.npy` arrays and score CSVs
//! - [`synthetic`]: seeded fixtures that stand in for captured tensors
//!
//! Nothing here depends on an ML framework; tensors come in and go out as
//! plain arrays.

pub mod caof;
pub mod io;
pub mod metrics;
pub mod ot;
pub mod sasf;
pub mod select;
pub mod synthetic;
pub mod types;

pub use caof::{run_caof, BlendConfig, CaofConfig, CaofDiagnostics, CaofError, CaofOutput};
pub use io::{DenseArray, Dtype, ScoreRecord, ScoreTable, TensorIoError};
pub use metrics::{GrayImage, MetricWeights, MetricsError};
pub use ot::{CostMatrix, CostParams, OtError, SinkhornConfig, TransportPlan};
pub use sasf::{DsinConfig, GaussianKernel1D, SasfError};
pub use select::{AttentionStack, IndexSets, Pooling, SelectError, TokenSelector};
pub use types::{FeatureError, FeatureMatrix, Grid};
