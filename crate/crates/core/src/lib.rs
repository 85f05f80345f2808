//! Photon-number classification of transition-edge-sensor voltage traces.
//!
//! The crate covers the whole chain: simulated traces with pulse pile-up,
//! inner-product filtering, PCA factor scores, supervised KNN on overlap-
//! synthesised training data, HDBSCAN clustering, and the benchmarking
//! maths (photon statistics, TVD, detector tomography, fidelities).

pub mod analysis;
pub mod bundle;
pub mod distribution;
pub mod error;
pub mod filter_ip;
pub mod hdbscan;
pub mod knn;
pub mod neighbors;
pub mod par;
pub mod pca;
pub mod rng;
pub mod simulator;
pub mod trace;

pub use distribution::{distribution_from_labels, PhotonDistribution};
pub use error::{Error, Result};
pub use par::Exec;
pub use trace::{segment_stream, AcquisitionMeta, Label, LabeledBatch, TraceBatch, VoltageTrace};
