//! SI-SDR scoring, azimuth-difference buckets and report tables.

mod report;
mod sisdr;

pub use report::{report, score, AzimuthBucket, EvalRecord, ReportRow, ReportTable};
pub use sisdr::{si_sdr, SI_SDR_CAP_DB};
