//! Inference, objective metrics, RTF benchmark and parameter reports.

pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod report;
pub mod rtf;

pub use metrics::{compute_metrics, lsd, si_sdr, FileMetrics};
pub use params::{report_params, report_profiles, ParamReport, TARGET_NRT_M, TARGET_RT_M};
pub use pipeline::{ModelIdentity, Pipeline};
pub use report::{eval_corpus, eval_dirs, reference_rows, score_all, Aggregate, MetricsReport, ReferenceRow, RuntimeMeta};
pub use rtf::{bench_rtf, time_single_threaded, RtfResult, REFERENCE_RTF_NRT, REFERENCE_RTF_RT};
