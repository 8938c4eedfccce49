//! Verification and identification metrics, similarity-matrix construction
//! and the split-based evaluation protocol.

mod aggregate;
mod ident;
mod protocol;
mod report;
mod roc;

pub use aggregate::{aggregate_splits, mean_std, MetricSummary};
pub use ident::{cmc_curve, mate_rank, rank_accuracy, ranked_gallery, tpir_at_fpir};
pub use protocol::{
    apply_setup, build_similarity_matrix, evaluate_split, far_label, read_protocol, score_report, write_protocol,
    Protocol, ProtocolRow, Role, ScoringPipeline, Setup, Split, SplitReport, CMC_RANKS, FAR_TARGETS, FPIR_TARGETS,
};
pub use report::{cmc_csv, roc_csv, summary_csv, write_cmc, write_roc, write_summary};
pub use roc::{listed_pairs, matrix_pairs, roc_curve, tar_at_far, RocPoint, SubjectLabels};
