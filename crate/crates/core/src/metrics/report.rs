use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sisdr::si_sdr;
use crate::error::{Error, Result};

/// Azimuth-difference ranges `[0,15) [15,45) [45,90) [90,180]` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AzimuthBucket {
    #[serde(rename = "<15")]
    Under15,
    #[serde(rename = "15-45")]
    From15To45,
    #[serde(rename = "45-90")]
    From45To90,
    #[serde(rename = ">90")]
    Over90,
}

impl AzimuthBucket {
    pub const ALL: [AzimuthBucket; 4] = [
        AzimuthBucket::Under15,
        AzimuthBucket::From15To45,
        AzimuthBucket::From45To90,
        AzimuthBucket::Over90,
    ];

    pub fn from_doas(target_deg: f64, interferer_deg: f64) -> Self {
        Self::from_difference((target_deg - interferer_deg).abs())
    }

    pub fn from_difference(diff_deg: f64) -> Self {
        if diff_deg < 15.0 {
            AzimuthBucket::Under15
        } else if diff_deg < 45.0 {
            AzimuthBucket::From15To45
        } else if diff_deg < 90.0 {
            AzimuthBucket::From45To90
        } else {
            AzimuthBucket::Over90
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AzimuthBucket::Under15 => "<15",
            AzimuthBucket::From15To45 => "15-45",
            AzimuthBucket::From45To90 => "45-90",
            AzimuthBucket::Over90 => ">90",
        }
    }

    /// Integer difference range `[lo, hi]` used when sampling DOAs on a 1° grid.
    pub fn sampling_range(self) -> (u32, u32) {
        match self {
            AzimuthBucket::Under15 => (1, 14),
            AzimuthBucket::From15To45 => (15, 44),
            AzimuthBucket::From45To90 => (45, 89),
            AzimuthBucket::Over90 => (90, 180),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scene_id: String,
    pub method: String,
    pub si_sdr_db: f64,
    pub bucket: AzimuthBucket,
}

/// SI-SDR of `estimate` against `reference` after trimming both to the
/// shorter length, tagged with the DOA bucket.
pub fn score(
    scene_id: &str,
    method: &str,
    estimate: &[f64],
    reference: &[f64],
    target_doa: f64,
    interferer_doa: f64,
) -> Result<EvalRecord> {
    let n = estimate.len().min(reference.len());
    Ok(EvalRecord {
        scene_id: scene_id.to_string(),
        method: method.to_string(),
        si_sdr_db: si_sdr(&estimate[..n], &reference[..n])?,
        bucket: AzimuthBucket::from_doas(target_doa, interferer_doa),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub bucket_counts: [usize; 4],
    pub bucket_means: [Option<f64>; 4],
    pub count: usize,
    /// Mean over all scenes, not the mean of bucket means.
    pub overall_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// Aggregates records per method (sorted by name) and bucket.
pub fn report(records: &[EvalRecord]) -> Result<ReportTable> {
    if records.is_empty() {
        return Err(Error::Config("no evaluation records to report".into()));
    }
    let mut methods: Vec<&str> = records.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let rows = methods
        .into_iter()
        .map(|method| {
            let mut sums = [0.0; 4];
            let mut counts = [0usize; 4];
            let mut total = 0.0;
            let mut n = 0;
            for r in records.iter().filter(|r| r.method == method) {
                sums[r.bucket.index()] += r.si_sdr_db;
                counts[r.bucket.index()] += 1;
                total += r.si_sdr_db;
                n += 1;
            }
            let mut means = [None; 4];
            for b in 0..4 {
                if counts[b] > 0 {
                    means[b] = Some(sums[b] / counts[b] as f64);
                }
            }
            ReportRow {
                method: method.to_string(),
                bucket_counts: counts,
                bucket_means: means,
                count: n,
                overall_mean: total / n as f64,
            }
        })
        .collect();
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,bucket,count,mean_si_sdr_db,pesq,cer_percent`; the last two
    /// columns are left empty for externally computed scores.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,bucket,count,mean_si_sdr_db,pesq,cer_percent\n");
        for row in &self.rows {
            for b in AzimuthBucket::ALL {
                let mean = row.bucket_means[b.index()]
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},,",
                    row.method,
                    b.label(),
                    row.bucket_counts[b.index()],
                    mean
                );
            }
            let _ = writeln!(
                out,
                "{},all,{},{:.6},,",
                row.method, row.count, row.overall_mean
            );
        }
        out
    }
}
