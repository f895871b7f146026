//! Gap filling of sparse optical LAI time series from dense SAR VH/VV
//! backscatter-ratio series.
//!
//! The crate bundles the whole chain: multitemporal SAR speckle filtering
//! ([`sar`]), the irregular two-channel series model ([`series`]), a
//! from-scratch (Bi)LSTM regressor with exact backpropagation through time
//! ([`net`], [`train`]), classical regression baselines ([`baselines`]),
//! synthetic phenology data ([`synth`]) and an RMSE benchmark ([`eval`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Dense kernels index several parallel buffers per loop.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod error;
pub mod eval;
pub mod kv;
pub mod net;
pub mod sar;
pub mod series;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use net::{Arch, Dims, NetworkParams};
pub use series::{NormStats, TimeSeriesRecord};
pub use train::{Imputer, TrainConfig};
