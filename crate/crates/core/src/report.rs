//! Monte-Carlo estimate records and their CSV / JSON forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Backend;

pub const CSV_HEADER: [&str; 11] = [
    "estimator", "v", "n", "epsilon", "p_max", "backend", "reps", "mean", "stderr", "inner_mode", "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    /// Gibbs averages by exhaustive enumeration of replica tuples.
    Exact,
    /// Gibbs averages from sampled replica tuples.
    Sampled,
}

/// Mean and standard error over independent disorder replications.
///
/// `stderr` is the sample standard deviation over `reps` outer draws divided
/// by `sqrt(reps)`; it is exactly zero when every replication agreed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub v: f64,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub p_max: usize,
    pub backend: Backend,
    pub reps: usize,
    pub mean: f64,
    pub stderr: f64,
    pub inner_mode: InnerMode,
    pub seed: u64,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Field values in `CSV_HEADER` order.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.estimator.clone(),
            self.v.to_string(),
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            self.epsilon.map(|e| e.to_string()).unwrap_or_default(),
            self.p_max.to_string(),
            self.backend.name().to_string(),
            self.reps.to_string(),
            self.mean.to_string(),
            self.stderr.to_string(),
            match self.inner_mode {
                InnerMode::Exact => "exact".to_string(),
                InnerMode::Sampled => "sampled".to_string(),
            },
            self.seed.to_string(),
        ]
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() < CSV_HEADER.len() {
            return Err(Error::Format(format!(
                "expected {} columns, found {}",
                CSV_HEADER.len(),
                fields.len()
            )));
        }
        fn num<T: std::str::FromStr>(col: &str, s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Format(format!("column {col}: cannot parse `{s}`")))
        }
        fn opt<T: std::str::FromStr>(col: &str, s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(col, s).map(Some)
            }
        }
        let inner_mode = match fields[9] {
            "exact" => InnerMode::Exact,
            "sampled" => InnerMode::Sampled,
            other => return Err(Error::Format(format!("column inner_mode: `{other}`"))),
        };
        Ok(Self {
            estimator: fields[0].to_string(),
            v: num("v", fields[1])?,
            n: opt("n", fields[2])?,
            epsilon: opt("epsilon", fields[3])?,
            p_max: num("p_max", fields[4])?,
            backend: Backend::parse(fields[5])?,
            reps: num("reps", fields[6])?,
            mean: num("mean", fields[7])?,
            stderr: num("stderr", fields[8])?,
            inner_mode,
            seed: num("seed", fields[10])?,
        })
    }
}

pub fn write_csv<W: Write>(out: W, reports: &[EstimateReport]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for report in reports {
        writer.write_record(report.csv_fields())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<EstimateReport>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().take(CSV_HEADER.len()).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    reader
        .records()
        .map(|record| {
            let record = record?;
            let fields: Vec<&str> = record.iter().collect();
            EstimateReport::from_csv_fields(&fields)
        })
        .collect()
}

/// Unbiased sample variance; exactly zero when all values agree.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// `(mean, stderr)` of replicated values; zero stderr when all values agree.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
