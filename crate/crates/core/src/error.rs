use thiserror::Error;

use crate::device::BasisLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// At least one eigenvector could not be matched to a bare state with
    /// overlap of 0.5 or more.
    #[error("ambiguous dressed-state labeling for {}", format_labels(.labels))]
    AmbiguousLabeling { labels: Vec<BasisLabel> },

    #[error("singular configuration: {0}")]
    SingularConfiguration(String),

    #[error("integration failure: max |U^dag U - I| = {deviation:e}")]
    IntegrationFailure { deviation: f64 },

    #[error("phase undefined for state |{label}>: |amplitude| = {magnitude:.3e}")]
    PhaseUndefined { label: &'static str, magnitude: f64 },
}

fn format_labels(labels: &[BasisLabel]) -> String {
    labels
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}
