//! Local-time volume and affect series, account separation, lexical
//! statistics, rank correlation and POS profiles.

mod accounts;
mod kendall;
mod lexical;
mod pos;
mod time;

pub use accounts::{
    ad_signals, classify_account, is_ad_like, separate_accounts, AccountClassification, AccountParams, AccountType,
    AdSignals, DEFAULT_JOB_HASHTAGS,
};
pub use kendall::{kendall_tau, scores_from_ranking, RankCorrelation};
pub use lexical::{lexical_stats, LexicalStats};
pub use pos::{compare_profiles, parse_tagged_line, pos_profile, PosDifference, PosProfile, PENN_TAGS};
pub use time::{
    affect_matrix, affect_matrix_for, local_time, mean_ci95, to_local, volume_series, weekday_name, write_affect_csv,
    write_series_csv, AffectCell, AffectMatrix, Granularity, LocalTimestamp, TimeBucket, Zone, WEEKDAYS, Z_95,
};
