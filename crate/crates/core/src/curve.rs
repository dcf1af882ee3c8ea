//! Observed delay of a Δ-bounded message under the square-root clock, as a
//! CSV-ready table.

use std::fmt::Write;

use thiserror::Error;

use crate::time::{
    observed_delay, observed_delay_sqrt_stable, stabilization_real_time, ClockOracle, TimeError,
    STABLE_FORM_THRESHOLD,
};

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub observed_delay: f64,
}

fn delay_at(t: f64, delta: f64) -> Result<f64, TimeError> {
    if t > STABLE_FORM_THRESHOLD {
        observed_delay_sqrt_stable(t, delta)
    } else {
        observed_delay(&ClockOracle::Sqrt, t, delta)
    }
}

/// `samples` evenly spaced rows over `[0, t_max]`, plus the stabilization
/// point when it falls inside the range but off the grid.
pub fn delay_curve(delta: f64, t_max: f64, samples: usize) -> Result<Vec<CurveRow>, CurveError> {
    if samples < 2 {
        return Err(CurveError::TooFewSamples(samples));
    }
    crate::time::RealTime::new(t_max)?;
    let crossing = stabilization_real_time(delta)?.value();
    let mut ts: Vec<f64> = (0..samples)
        .map(|i| t_max * i as f64 / (samples - 1) as f64)
        .collect();
    if crossing <= t_max && !ts.contains(&crossing) {
        let at = ts.partition_point(|t| *t < crossing);
        ts.insert(at, crossing);
    }
    ts.into_iter()
        .map(|t| {
            Ok(CurveRow {
                t,
                observed_delay: delay_at(t, delta)?,
            })
        })
        .collect()
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("t,observed_delay\n");
    for row in rows {
        writeln!(out, "{},{}", row.t, row.observed_delay).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_row_is_one() {
        let rows = delay_curve(9.0, 32.0, 33).unwrap();
        assert_eq!(rows.len(), 33);
        let row = rows.iter().find(|r| r.t == 16.0).unwrap();
        assert!((row.observed_delay - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn off_grid_crossing_is_inserted() {
        // crossing at 0.25 * 49 = 12.25
        let rows = delay_curve(8.0, 20.0, 3).unwrap();
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0.0, 10.0, 12.25, 20.0]);
        assert!((rows[2].observed_delay - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn zero_delta_is_flat() {
        let rows = delay_curve(0.0, 1e9, 11).unwrap();
        assert!(rows.iter().all(|r| r.observed_delay == 0.0));
    }

    #[test]
    fn starts_at_root_delta() {
        assert_eq!(delay_curve(4.0, 10.0, 2).unwrap()[0].observed_delay, 2.0);
    }

    #[test]
    fn csv_layout() {
        let csv = curve_csv(&delay_curve(4.0, 5.0, 2).unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,observed_delay"));
        assert_eq!(lines.next(), Some("0,2"));
        assert_eq!(lines.next(), Some("2.25,1"));
        assert_eq!(
            lines.next(),
            Some(format!("5,{}", 3.0 - 5f64.sqrt()).as_str())
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        assert_eq!(delay_curve(1.0, 1.0, 1), Err(CurveError::TooFewSamples(1)));
        assert!(delay_curve(-1.0, 1.0, 2).is_err());
        assert!(delay_curve(1.0, f64::NAN, 2).is_err());
    }
}
