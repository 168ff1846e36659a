//! Cumulative case counts to S/I/R trajectories.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupFractions, Trajectory};

/// Count magnitude below which a negative active count is rounding noise.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub populations: Vec<u64>,
    #[serde(rename = "T_R", default = "default_recovery_days")]
    pub recovery_days: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
}

fn default_recovery_days() -> usize {
    14
}

fn default_smoothing() -> usize {
    15
}

impl PreprocessConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.populations.is_empty() {
            return Err(Error::Config("populations must be nonempty".into()));
        }
        if let Some(i) = self.populations.iter().position(|&p| p == 0) {
            return Err(Error::Config(format!(
                "population of group {} is zero",
                i + 1
            )));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smoothing window must be odd and positive, got {}",
                self.smoothing_window
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeSeries {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    /// `counts[i][k]`: cumulative infections in group `i` up to day `k`.
    pub counts: Vec<Vec<u64>>,
    pub populations: Vec<u64>,
}

/// Real-valued cumulative series, e.g. after smoothing.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedSeries {
    pub dates: Vec<NaiveDate>,
    pub counts: Vec<Vec<f64>>,
    pub populations: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SirCounts {
    pub susceptible: Vec<Vec<f64>>,
    pub infected: Vec<Vec<f64>>,
    pub recovered: Vec<Vec<f64>>,
}

fn parse_count(field: &str, line: usize) -> Result<u64> {
    match field.parse::<i64>() {
        Ok(v) if v < 0 => Err(Error::NegativeCount { line, value: v }),
        Ok(v) => Ok(v as u64),
        Err(_) => Err(Error::MalformedCount {
            line,
            value: field.to_string(),
        }),
    }
}

/// Parses `date,group_1,...,group_m` with ISO dates on consecutive days.
pub fn parse_cumulative_csv<R: Read>(reader: R, populations: &[u64]) -> Result<CumulativeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("date") {
        return Err(Error::MissingColumn("date".into()));
    }
    let columns = header[1..].to_vec();
    if columns.is_empty() {
        return Err(Error::MissingColumn("group_1".into()));
    }
    if populations.len() != columns.len() {
        return Err(Error::Config(format!(
            "{} group columns but {} populations",
            columns.len(),
            populations.len()
        )));
    }
    let m = columns.len();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut counts = vec![Vec::new(); m];
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        if record.len() < header.len() {
            return Err(Error::Parse {
                line,
                message: format!("missing column {}", header[record.len()]),
            });
        }
        if record.len() > header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("malformed date {:?}", &record[0]),
        })?;
        if let Some(&prev) = dates.last() {
            if prev.succ_opt() != Some(date) {
                return Err(Error::DateGap {
                    line,
                    prev: prev.to_string(),
                    next: date.to_string(),
                });
            }
        }
        dates.push(date);
        for (i, series) in counts.iter_mut().enumerate() {
            series.push(parse_count(&record[i + 1], line)?);
        }
    }
    if dates.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(CumulativeSeries {
        dates,
        columns,
        counts,
        populations: populations.to_vec(),
    })
}

pub fn load_cumulative_csv(
    path: impl AsRef<Path>,
    populations: &[u64],
) -> Result<CumulativeSeries> {
    parse_cumulative_csv(std::fs::File::open(path)?, populations)
}

/// Centered moving average; edge days average over the part of the
/// window that exists.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    let half = window / 2;
    Ok((0..series.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(series.len());
            if window == 1 {
                series[k]
            } else {
                series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            }
        })
        .collect())
}

impl CumulativeSeries {
    pub fn smoothed(&self, window: usize) -> Result<SmoothedSeries> {
        let counts = self
            .counts
            .iter()
            .map(|series| {
                let raw: Vec<f64> = series.iter().map(|&c| c as f64).collect();
                moving_average(&raw, window)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SmoothedSeries {
            dates: self.dates.clone(),
            counts,
            populations: self.populations.clone(),
        })
    }
}

/// Splits cumulative counts into S/I/R under a fixed recovery delay of
/// `recovery_days`, treating days before the series start as zero.
pub fn decompose_sir(
    series: &SmoothedSeries,
    recovery_days: usize,
) -> Result<(SirCounts, Trajectory)> {
    let m = series.counts.len();
    let days = series.dates.len();
    if days < recovery_days {
        return Err(Error::DataTooShort {
            len: days,
            needed: recovery_days,
        });
    }
    let mut sir = SirCounts {
        susceptible: vec![vec![0.0; days]; m],
        infected: vec![vec![0.0; days]; m],
        recovered: vec![vec![0.0; days]; m],
    };
    for (i, cumulative) in series.counts.iter().enumerate() {
        let population = series.populations[i];
        for k in 0..days {
            let total = cumulative[k];
            if total > population as f64 {
                return Err(Error::CountExceedsPopulation {
                    group: i,
                    day: k,
                    count: total,
                    population,
                });
            }
            let earlier = if k >= recovery_days {
                cumulative[k - recovery_days]
            } else {
                0.0
            };
            let active = total - earlier;
            if active < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeInfected {
                    group: i,
                    day: k,
                    value: active,
                });
            }
            sir.susceptible[i][k] = population as f64 - total;
            sir.infected[i][k] = active;
            sir.recovered[i][k] = earlier;
        }
    }
    let n: u64 = series.populations.iter().sum();
    let n = n as f64;
    let mut states = Vec::with_capacity(days);
    for k in 0..days {
        let mut state = GroupFractions::zeros(m);
        for i in 0..m {
            state.s[i] = sir.susceptible[i][k] / n;
            state.beta[i] = sir.infected[i][k].max(0.0) / n;
            state.r[i] = sir.recovered[i][k] / n;
        }
        states.push(state);
    }
    let times = (0..days).map(|k| k as f64).collect();
    Ok((sir, Trajectory::new(times, states)?))
}

/// Smoothing followed by decomposition, as configured.
pub fn preprocess(
    series: &CumulativeSeries,
    cfg: &PreprocessConfig,
) -> Result<(SirCounts, Trajectory)> {
    cfg.validate()?;
    if cfg.populations != series.populations {
        return Err(Error::Config("populations differ from the series".into()));
    }
    decompose_sir(&series.smoothed(cfg.smoothing_window)?, cfg.recovery_days)
}
