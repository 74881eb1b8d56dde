//! Validity statistics: experience levels, bootstrap intervals, rank tests
//! and the study report.

pub mod bootstrap;
pub mod level;
pub mod rank;
pub mod report;

pub use bootstrap::{bootstrap_ci, bootstrap_mean_ci};
pub use level::{assign_level, read_profiles_csv, write_profiles_csv, ParticipantProfile, Position};
pub use rank::{
    bonferroni, kruskal_wallis, wilcoxon_rank_sum, wilcoxon_signed_rank, PMethod,
    PairwiseComparison, StatResult,
};
pub use report::{study_report, vas_report, write_report, StudyReport, SummaryRow};
