//! Photon statistics, distances between distributions, detector
//! tomography and the efficiency fit.

pub mod efficiency;
pub mod metrics;
pub mod stats;
pub mod tomography;

pub use efficiency::{fit_efficiency, EfficiencyFit, EfficiencyPoint};
pub use metrics::{class_accuracy, distribution_fidelity, povm_fidelity, tvd, ClassAccuracy, EmptyRowPolicy};
pub use stats::{herald_joint, herald_labels, poisson_dist, tmsv_joint_dist, JointDistribution, TruncatedDistribution};
pub use tomography::{reconstruct_povm, ConfusionMatrix, ProbeRecord, TomographyOptions, TomographyResult};
