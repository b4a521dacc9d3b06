//! Per-individual disclosure risk analysis and privacy parameter selection
//! for differentially private queries over tabular data.

pub mod amount;
pub mod api;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod fixtures;
mod fsum;
pub mod mechanism;
pub mod noise;
pub mod odometer;
pub mod preference;
pub mod projection;
pub mod query;
pub mod rdr;
pub mod report;
pub mod schema;
pub mod search;
pub mod sensitivity;
pub mod session;

pub use amount::PrivacyAmount;
pub use dataset::{load_dataset, Cell, Cells, Dataset, DatasetBuilder, DatasetId, Value};
pub use error::{Error, Result};
pub use mechanism::{apply_mechanism, noise_params, Family, Mechanism, MechanismSpec, NoiseParams};
pub use noise::{NoiseSource, NoiseStream, StreamLabel};
pub use odometer::{CompBound, JournalEntry, Odometer, OdometerState};
pub use preference::{evaluate_preference, PreferenceConfig, PrivacyPreference, RowPartition};
pub use projection::{project_query_attributes, ProjectedDataset};
pub use query::{
    evaluate_query, global_sensitivity, CmpOp, Literal, Predicate, Query, QueryKind, QueryOutput,
    QueryTarget,
};
pub use rdr::{
    ex_post_loss, ex_post_loss_with_params, output_dependent_rdr, rdr_profile, EpsilonCandidate,
    RdrProfile,
};
pub use report::{analyze, AnalysisReport, PisSummary, ReportRow};
pub use schema::{Bounds, ColumnKind, ColumnSpec, Schema};
pub use search::{
    find_and_release_epsilon, find_epsilon_from_rdr, svt_above_threshold, Algorithm, AnalystRelease,
    Charge, EpsilonGrid, PreparedQuery, SearchOptions, SearchResult, SearchStatus, SparseVector,
    SvtConfig, SvtOutcome,
};
pub use sensitivity::{per_instance_sensitivity, Norm, PisId, PisTable};
pub use session::{AnswerConfig, Decision, DecisionRecord, Session};
