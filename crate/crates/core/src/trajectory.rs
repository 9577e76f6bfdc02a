//! Per-iteration optimizer records and their CSV form.

use std::io::Write;

use crate::geometry::SubspaceBasis;

/// One row of a trajectory. Distances are `NaN` when no ground truth is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub iter: usize,
    pub dr2: f64,
    pub dist2: f64,
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_basis: SubspaceBasis,
    /// Record indices at which a restart stage begins (always starts with 0).
    pub stage_boundaries: Vec<usize>,
}

pub const CSV_HEADER: &str = "iter,dr2,dist2,objective,seconds";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectories hold at least the initial record")
    }

    /// Final squared Grassmannian distance to the truth.
    pub fn final_dist2(&self) -> f64 {
        self.last().dist2
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for rec in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                rec.iter,
                fmt_f64(rec.dr2),
                fmt_f64(rec.dist2),
                fmt_f64(rec.objective),
                fmt_f64(rec.seconds)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}
