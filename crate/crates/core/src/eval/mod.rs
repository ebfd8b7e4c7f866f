//! Navigation metrics, the privileged ORCA baseline and the paired
//! comparison protocol.

pub mod baseline;
pub mod runner;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Outcome;
use crate::net::NetError;
use crate::world::MAX_LINEAR_VELOCITY;

pub use baseline::{holonomic_to_unicycle, orca_robot_policy};
pub use runner::{
    default_scenarios, run_comparison, run_episode, EvalConfig, EvalScenario, EpisodeRun, Method, RunOutput,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    Empty,
    #[error("extra time is only defined for episodes that reached the goal (outcome: {0})")]
    NotReached(Outcome),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// One robot's episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub scenario: String,
    pub episode: usize,
    pub seed: u64,
    pub robot: usize,
    pub outcome: Outcome,
    /// Time until this robot's episode ended (s).
    pub episode_time: f64,
    /// Time to drive straight at full speed from the start to the edge of
    /// the goal tolerance disk (s).
    pub straight_time: f64,
    /// Commanded angular velocity at every step.
    pub angular_velocities: Vec<f64>,
    /// Robot positions from the start pose onward. Left out of serialized
    /// records; the trajectory files carry the full scene.
    #[serde(skip)]
    pub trajectory: Vec<[f64; 2]>,
}

pub fn straight_line_time(distance: f64) -> f64 {
    distance / MAX_LINEAR_VELOCITY
}

pub fn success_rate(records: &[MetricRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let reached = records.iter().filter(|r| r.outcome == Outcome::Reached).count();
    Ok(reached as f64 / records.len() as f64)
}

pub fn extra_time(record: &MetricRecord) -> Result<f64, EvalError> {
    if record.outcome != Outcome::Reached {
        return Err(EvalError::NotReached(record.outcome));
    }
    Ok(record.episode_time - record.straight_time)
}

/// Mean absolute step-to-step change of the angular velocity; zero for
/// fewer than two steps.
pub fn avg_angular_change(omegas: &[f64]) -> f64 {
    if omegas.len() < 2 {
        return 0.0;
    }
    omegas.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (omegas.len() - 1) as f64
}

/// Mean and 95% normal-approximation half-width.
fn mean_ci(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, 1.96 * (var / n).sqrt()))
}

/// Aggregates for one method on one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub scenario: String,
    pub episodes: usize,
    /// One per robot per episode.
    pub records: usize,
    pub success_rate: f64,
    pub success_ci95: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Over successful records only; `None` when there were none.
    pub extra_time: Option<f64>,
    pub extra_time_ci95: Option<f64>,
    /// `None` for methods that do not steer through angular commands of
    /// their own (the holonomic baseline).
    pub angular_change: Option<f64>,
    pub angular_change_ci95: Option<f64>,
}

impl ReportRow {
    pub fn from_records(
        method: &str,
        scenario: &str,
        episodes: usize,
        records: &[MetricRecord],
        report_angular: bool,
    ) -> Result<Self, EvalError> {
        let p = success_rate(records)?;
        let n = records.len() as f64;
        let rate = |o: Outcome| records.iter().filter(|r| r.outcome == o).count() as f64 / n;
        let extra: Vec<f64> = records.iter().filter_map(|r| extra_time(r).ok()).collect();
        let angular: Vec<f64> = records.iter().map(|r| avg_angular_change(&r.angular_velocities)).collect();
        let et = mean_ci(&extra);
        let ac = if report_angular { mean_ci(&angular) } else { None };
        Ok(Self {
            method: method.to_string(),
            scenario: scenario.to_string(),
            episodes,
            records: records.len(),
            success_rate: p,
            success_ci95: 1.96 * (p * (1.0 - p) / n).sqrt(),
            collision_rate: rate(Outcome::Collided),
            timeout_rate: rate(Outcome::Timeout),
            extra_time: et.map(|x| x.0),
            extra_time_ci95: et.map(|x| x.1),
            angular_change: ac.map(|x| x.0),
            angular_change_ci95: ac.map(|x| x.1),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed_base: u64,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "method,scenario,episodes,records,success_rate,success_ci95,collision_rate,timeout_rate,extra_time,extra_time_ci95,angular_change,angular_change_ci95";

impl ComparisonReport {
    pub fn row(&self, method: &str, scenario: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.scenario == scenario)
    }

    /// Comma-separated table; missing values are written as `NA`.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
                r.method,
                r.scenario,
                r.episodes,
                r.records,
                r.success_rate,
                r.success_ci95,
                r.collision_rate,
                r.timeout_rate,
                opt(r.extra_time),
                opt(r.extra_time_ci95),
                opt(r.angular_change),
                opt(r.angular_change_ci95)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One JSON object per line.
pub fn records_to_jsonl(records: &[MetricRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(outcome: Outcome, time: f64, straight: f64, omegas: &[f64]) -> MetricRecord {
        MetricRecord {
            method: "m".into(),
            scenario: "s".into(),
            episode: 0,
            seed: 0,
            robot: 0,
            outcome,
            episode_time: time,
            straight_time: straight,
            angular_velocities: omegas.to_vec(),
            trajectory: Vec::new(),
        }
    }

    #[test]
    fn success_counts() {
        let r = |o| rec(o, 1.0, 1.0, &[]);
        assert!(success_rate(&[]).is_err());
        assert_eq!(success_rate(&vec![r(Outcome::Reached); 3]).unwrap(), 1.0);
        assert_eq!(success_rate(&[r(Outcome::Collided), r(Outcome::Timeout)]).unwrap(), 0.0);
        let mixed = [
            r(Outcome::Reached),
            r(Outcome::Reached),
            r(Outcome::Collided),
            r(Outcome::Reached),
        ];
        assert_eq!(success_rate(&mixed).unwrap(), 0.75);
    }

    #[test]
    fn extra_time_examples() {
        let six_m = straight_line_time(6.0);
        assert!((six_m - 10.0).abs() < 1e-12);
        assert!((extra_time(&rec(Outcome::Reached, 14.0, six_m, &[])).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(extra_time(&rec(Outcome::Reached, 2.5, 0.0, &[])).unwrap(), 2.5);
        assert!(matches!(
            extra_time(&rec(Outcome::Collided, 1.0, 1.0, &[])),
            Err(EvalError::NotReached(Outcome::Collided))
        ));
    }

    #[test]
    fn angular_change_examples() {
        assert_eq!(avg_angular_change(&[0.4; 10]), 0.0);
        assert_eq!(avg_angular_change(&[0.7]), 0.0);
        assert!((avg_angular_change(&[0.9, -0.9, 0.9, -0.9, 0.9]) - 1.8).abs() < 1e-12);
        assert!((avg_angular_change(&[0.0, 0.3, 0.3, 0.9]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn report_row_and_csv() {
        let records = [
            rec(Outcome::Reached, 12.0, 10.0, &[0.0, 0.3]),
            rec(Outcome::Reached, 11.0, 10.0, &[0.0, 0.0]),
            rec(Outcome::Collided, 3.0, 10.0, &[0.9, -0.9]),
            rec(Outcome::Timeout, 20.0, 10.0, &[0.0]),
        ];
        let row = ReportRow::from_records("a", "b", 2, &records, true).unwrap();
        assert_eq!(row.success_rate, 0.5);
        assert_eq!(row.collision_rate, 0.25);
        assert!((row.extra_time.unwrap() - 1.5).abs() < 1e-12);
        assert!((row.angular_change.unwrap() - (0.3 + 1.8) / 4.0).abs() < 1e-12);
        let none = ReportRow::from_records("a", "b", 2, &records, false).unwrap();
        assert!(none.angular_change.is_none());
        let csv = ComparisonReport {
            seed_base: 0,
            rows: vec![none],
        }
        .to_csv();
        assert!(csv.lines().nth(1).unwrap().ends_with(",NA,NA"));
    }
}
