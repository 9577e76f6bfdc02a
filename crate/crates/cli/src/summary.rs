//! Per-iteration aggregation of repeated trajectories.

use std::io::Write;

use robsub::trajectory::fmt_f64;
use robsub::Trajectory;

use crate::experiment::log10_error;

/// Linearly interpolated quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub iter: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub median_dr2: f64,
}

/// Median and interquartile range of `log10(dist2)` at every iteration, plus
/// the median `log10(dr2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Mean over repetitions of the final `log10(dist2)`.
    pub mean_final: f64,
    pub reps: usize,
}

pub const SUMMARY_HEADER: &str = "iter,median_log10_dist2,q25_log10_dist2,q75_log10_dist2,median_log10_dr2";

impl Summary {
    /// All trajectories must have the same length.
    pub fn from_trajectories(trajs: &[&Trajectory]) -> Self {
        let len = trajs.iter().map(|t| t.len()).min().unwrap_or(0);
        let rows = (0..len)
            .map(|i| {
                let errs = sorted(trajs.iter().map(|t| log10_error(t.records[i].dist2)).collect());
                let dr2 = sorted(trajs.iter().map(|t| log10_error(t.records[i].dr2)).collect());
                SummaryRow {
                    iter: trajs[0].records[i].iter,
                    median: quantile(&errs, 0.5),
                    q25: quantile(&errs, 0.25),
                    q75: quantile(&errs, 0.75),
                    median_dr2: quantile(&dr2, 0.5),
                }
            })
            .collect();
        let mean_final = trajs.iter().map(|t| log10_error(t.final_dist2())).sum::<f64>() / trajs.len() as f64;
        Self {
            rows,
            mean_final,
            reps: trajs.len(),
        }
    }

    pub fn last(&self) -> Option<&SummaryRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SUMMARY_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                fmt_f64(r.median),
                fmt_f64(r.q25),
                fmt_f64(r.q75),
                fmt_f64(r.median_dr2)
            )?;
        }
        Ok(())
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let last = self.last();
        let get = |f: fn(&SummaryRow) -> f64| last.map(f).unwrap_or(f64::NAN);
        vec![
            ("reps".into(), self.reps.to_string()),
            ("final_iter".into(), last.map(|r| r.iter).unwrap_or(0).to_string()),
            ("final_median_log10_dist2".into(), fmt_f64(get(|r| r.median))),
            ("final_q25_log10_dist2".into(), fmt_f64(get(|r| r.q25))),
            ("final_q75_log10_dist2".into(), fmt_f64(get(|r| r.q75))),
            ("final_median_dist2".into(), fmt_f64(10f64.powf(get(|r| r.median)))),
            ("mean_log10_final_dist2".into(), fmt_f64(self.mean_final)),
        ]
    }
}
