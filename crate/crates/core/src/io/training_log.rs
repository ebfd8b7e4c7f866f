//! Tab-separated training log, one row per PPO iteration.

use std::fmt::Write as _;

use crate::error::ParseError;
use crate::ppo::IterationLog;

pub const LOG_HEADER: &str =
    "iteration\tmean_reward\tsuccess_rate\tepisodes\tpolicy_loss\tvalue_loss\tentropy\tapprox_kl\tclip_fraction\trolled_back";

pub fn format_row(r: &IterationLog) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.iteration,
        r.mean_reward,
        r.success_rate,
        r.episodes,
        r.policy_loss,
        r.value_loss,
        r.entropy,
        r.approx_kl,
        r.clip_fraction,
        u8::from(r.rolled_back)
    );
    s
}

pub fn format_log(rows: &[IterationLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format_row(r));
        s.push('\n');
    }
    s
}

pub fn parse_log(text: &str) -> Result<Vec<IterationLog>, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim_end() == LOG_HEADER => {}
        _ => return Err(ParseError::new(1, "missing training log header")),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(ParseError::new(n, format!("expected 10 columns, got {}", f.len())));
        }
        let float = |i: usize, what: &str| -> Result<f64, ParseError> {
            f[i].trim()
                .parse::<f64>()
                .map_err(|_| ParseError::new(n, format!("bad {what} `{}`", f[i])))
        };
        let int = |i: usize, what: &str| -> Result<u64, ParseError> {
            f[i].trim()
                .parse::<u64>()
                .map_err(|_| ParseError::new(n, format!("bad {what} `{}`", f[i])))
        };
        let rolled_back = match f[9].trim() {
            "0" => false,
            "1" => true,
            other => return Err(ParseError::new(n, format!("bad rolled_back `{other}`"))),
        };
        let row = IterationLog {
            iteration: int(0, "iteration")?,
            mean_reward: float(1, "mean_reward")?,
            success_rate: float(2, "success_rate")?,
            episodes: int(3, "episodes")? as usize,
            policy_loss: float(4, "policy_loss")?,
            value_loss: float(5, "value_loss")?,
            entropy: float(6, "entropy")?,
            approx_kl: float(7, "approx_kl")?,
            clip_fraction: float(8, "clip_fraction")?,
            rolled_back,
        };
        if let Some(prev) = rows.last().map(|r: &IterationLog| r.iteration) {
            if row.iteration <= prev {
                return Err(ParseError::new(n, "iterations must increase"));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64) -> IterationLog {
        IterationLog {
            iteration: i,
            mean_reward: -123.456_789 + i as f64 / 3.0,
            success_rate: 0.25,
            episodes: 7,
            policy_loss: -0.012,
            value_loss: 1234.5,
            entropy: 3.3,
            approx_kl: 1e-5,
            clip_fraction: 0.0,
            rolled_back: i == 2,
        }
    }

    #[test]
    fn roundtrip() {
        let rows: Vec<_> = (0..4).map(row).collect();
        let text = format_log(&rows);
        assert_eq!(parse_log(&text).unwrap(), rows);
        assert!(parse_log(LOG_HEADER).unwrap().is_empty());
    }

    #[test]
    fn nan_reward_survives() {
        let mut r = row(0);
        r.mean_reward = f64::NAN;
        let back = parse_log(&format_log(&[r])).unwrap();
        assert!(back[0].mean_reward.is_nan());
    }

    #[test]
    fn errors_point_at_line() {
        let mut text = format_log(&[row(0), row(1)]);
        text.push_str("2\t1\t2\n");
        assert_eq!(parse_log(&text).unwrap_err().line, 4);
        let dup = format_log(&[row(1), row(1)]);
        assert_eq!(parse_log(&dup).unwrap_err().line, 3);
        assert_eq!(parse_log("nope").unwrap_err().line, 1);
    }
}
