//! Datasets on the unit sphere, the haystack generator and CSV I/O.
//!
//! Points are stored as the rows of an `N x D` matrix. Optional labels mark
//! each row as inlier or outlier, and an optional ground-truth basis spans the
//! inlier subspace.
//!
//! CSV layout: an optional header line, one point per row with `D` numeric
//! columns, and an optional trailing `label` column holding `in` or `out`.
//! A ground-truth basis is stored separately as `D` rows of `r` numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::SubspaceBasis;
use crate::seeding;
use crate::trajectory::fmt_f64;
use crate::Matrix;

/// Rows with norm at or below this are dropped by sphere normalization.
pub const ZERO_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "in",
            Label::Outlier => "out",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "in" => Some(Label::Inlier),
            "out" => Some(Label::Outlier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Matrix,
    labels: Option<Vec<Label>>,
    truth: Option<SubspaceBasis>,
}

impl LabeledDataset {
    pub fn new(points: Matrix, labels: Option<Vec<Label>>, truth: Option<SubspaceBasis>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != points.nrows() {
                return Err(Error::shape(
                    format!("{} labels", points.nrows()),
                    format!("{} labels", l.len()),
                ));
            }
        }
        if let Some(t) = &truth {
            if t.ambient_dim() != points.ncols() {
                return Err(Error::shape(
                    format!("truth basis with {} rows", points.ncols()),
                    format!("{} rows", t.ambient_dim()),
                ));
            }
        }
        Ok(Self { points, labels, truth })
    }

    pub fn unlabeled(points: Matrix) -> Self {
        Self {
            points,
            labels: None,
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: SubspaceBasis) -> Result<Self> {
        if truth.ambient_dim() != self.dim() {
            return Err(Error::shape(
                format!("truth basis with {} rows", self.dim()),
                format!("{} rows", truth.ambient_dim()),
            ));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn truth(&self) -> Option<&SubspaceBasis> {
        self.truth.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn require_labels(&self) -> Result<&[Label]> {
        self.labels().ok_or(Error::MissingLabels)
    }

    pub fn require_truth(&self) -> Result<&SubspaceBasis> {
        self.truth().ok_or(Error::MissingTruth)
    }

    fn rows_with(&self, wanted: Label) -> Result<Matrix> {
        let labels = self.require_labels()?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == wanted).collect();
        Ok(self.points.select_rows(idx.iter()))
    }

    /// Inlier rows as an `n_in x D` matrix.
    pub fn inliers(&self) -> Result<Matrix> {
        self.rows_with(Label::Inlier)
    }

    /// Outlier rows as an `n_out x D` matrix.
    pub fn outliers(&self) -> Result<Matrix> {
        self.rows_with(Label::Outlier)
    }

    pub fn inlier_count(&self) -> Option<usize> {
        self.labels()
            .map(|l| l.iter().filter(|&&x| x == Label::Inlier).count())
    }

    /// Scales every row to unit norm, dropping rows with norm `<= 1e-12`.
    ///
    /// Returns the normalized dataset and the number of dropped rows. Labels
    /// of the retained rows are kept aligned.
    pub fn normalized(self) -> Result<(Self, usize)> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.points.row(i).norm() > ZERO_ROW_TOL)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dropped = self.len() - keep.len();
        let mut points = self.points.select_rows(keep.iter());
        for mut row in points.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        let labels = self.labels.map(|l| keep.iter().map(|&i| l[i]).collect());
        Ok((
            Self {
                points,
                labels,
                truth: self.truth,
            },
            dropped,
        ))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, row) in self.points.row_iter().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            if let Some(l) = &self.labels {
                fields.push(l[i].as_str().into());
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Reads points (and labels, if present) from a CSV file.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let rows = read_records(input)?;
        let mut iter = rows.into_iter().peekable();

        let mut has_label_col = None;
        if let Some((_, first)) = iter.peek() {
            let is_header = first
                .first()
                .map(|f| f.parse::<f64>().is_err())
                .unwrap_or(false);
            if is_header {
                has_label_col = Some(first.last().map(|s| s.as_str()) == Some("label"));
                iter.next();
            }
        }

        let mut values: Vec<f64> = Vec::new();
        let mut labels: Vec<Label> = Vec::new();
        let mut width: Option<usize> = None;
        let mut n = 0usize;
        for (line, fields) in iter {
            let labelled = *has_label_col.get_or_insert_with(|| {
                fields.last().and_then(|f| Label::parse(f)).is_some()
            });
            let (coords, label) = if labelled {
                let (last, rest) = fields.split_last().ok_or_else(|| Error::Parse {
                    line,
                    message: "empty row".into(),
                })?;
                let label = Label::parse(last).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("label must be `in` or `out`, got `{last}`"),
                })?;
                (rest, Some(label))
            } else {
                (&fields[..], None)
            };
            match width {
                None => {
                    if coords.is_empty() {
                        return Err(Error::Parse {
                            line,
                            message: "row has no coordinates".into(),
                        });
                    }
                    width = Some(coords.len());
                }
                Some(w) if w != coords.len() => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {w} coordinates, found {}", coords.len()),
                    })
                }
                _ => {}
            }
            for f in coords {
                let x = f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric entry `{f}`"),
                })?;
                values.push(x);
            }
            if let Some(l) = label {
                labels.push(l);
            }
            n += 1;
        }
        let width = width.ok_or(Error::EmptyDataset)?;
        let points = Matrix::from_row_slice(n, width, &values);
        let labels = has_label_col.unwrap_or(false).then_some(labels);
        Self::new(points, labels, None)
    }
}

fn read_records<R: std::io::Read>(input: R) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

/// Sphere-normalizes an unlabeled point matrix; returns the dataset and the
/// number of dropped zero rows.
pub fn normalize_to_sphere(raw: &Matrix) -> Result<(LabeledDataset, usize)> {
    LabeledDataset::unlabeled(raw.clone()).normalized()
}

pub fn save_basis_csv(basis: &SubspaceBasis, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in basis.matrix().row_iter() {
        let fields: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_basis_csv(path: impl AsRef<Path>) -> Result<SubspaceBasis> {
    let rows = read_records(File::open(path)?)?;
    let width = rows.first().map(|(_, f)| f.len()).ok_or(Error::EmptyDataset)?;
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, fields) in &rows {
        if fields.len() != width {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        for f in fields {
            values.push(f.parse::<f64>().map_err(|_| Error::Parse {
                line: *line,
                message: format!("non-numeric entry `{f}`"),
            })?);
        }
    }
    SubspaceBasis::new(Matrix::from_row_slice(rows.len(), width, &values))
}

/// Parameters of the haystack model.
#[derive(Debug, Clone, PartialEq)]
pub struct HaystackParams {
    pub rank: usize,
    pub ambient_dim: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub inlier_scale: f64,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl HaystackParams {
    /// Unit scales, `n` points of which `round(inlier_ratio * n)` are inliers.
    pub fn with_ratio(rank: usize, ambient_dim: usize, n: usize, inlier_ratio: f64, seed: u64) -> Self {
        let n_in = ((inlier_ratio * n as f64).round() as usize).min(n);
        Self {
            rank,
            ambient_dim,
            n_in,
            n_out: n - n_in,
            inlier_scale: 1.0,
            outlier_scale: 1.0,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n_in + self.n_out
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.rank >= self.ambient_dim {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= r < D, got r = {}, D = {}",
                self.rank, self.ambient_dim
            )));
        }
        if self.n() == 0 {
            return Err(Error::InvalidDimensions("need at least one point".into()));
        }
        if !(self.inlier_scale > 0.0 && self.outlier_scale > 0.0) {
            return Err(Error::InvalidParameter("scales must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a labeled dataset from the haystack model.
///
/// The truth `V*` is a uniformly random `r`-subspace. Inliers are `V* w` with
/// `w ~ N(0, inlier_scale^2 I_r / r)`, outliers are `N(0, outlier_scale^2 I_D / D)`.
/// Rows are ordered inliers first and then normalized to the sphere.
pub fn gen_haystack(p: &HaystackParams) -> Result<LabeledDataset> {
    p.validate()?;
    let mut rng = seeding::rng(p.seed);
    let (d, r) = (p.ambient_dim, p.rank);
    let truth = SubspaceBasis::random(d, r, &mut rng)?;

    let in_sd = p.inlier_scale / (r as f64).sqrt();
    let coeffs = Matrix::from_fn(p.n_in, r, |_, _| in_sd * rng.sample::<f64, _>(StandardNormal));
    let inliers = coeffs * truth.matrix().transpose();

    let out_sd = p.outlier_scale / (d as f64).sqrt();
    let outliers = Matrix::from_fn(p.n_out, d, |_, _| out_sd * rng.sample::<f64, _>(StandardNormal));

    let mut points = Matrix::zeros(p.n(), d);
    points.rows_mut(0, p.n_in).copy_from(&inliers);
    points.rows_mut(p.n_in, p.n_out).copy_from(&outliers);
    let labels = std::iter::repeat_n(Label::Inlier, p.n_in)
        .chain(std::iter::repeat_n(Label::Outlier, p.n_out))
        .collect();
    let (ds, _) = LabeledDataset::new(points, Some(labels), Some(truth))?.normalized()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sorted_symmetric_eigen;

    #[test]
    fn normalize_single_row() {
        let raw = Matrix::from_row_slice(1, 3, &[3.0, 4.0, 0.0]);
        let (ds, dropped) = normalize_to_sphere(&raw).unwrap();
        assert_eq!(dropped, 0);
        assert!((ds.points()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((ds.points()[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(ds.points()[(0, 2)], 0.0);
    }

    #[test]
    fn normalize_keeps_unit_rows() {
        let s = 0.5_f64.sqrt();
        let raw = Matrix::from_row_slice(2, 2, &[1.0, 0.0, s, s]);
        let (ds, _) = normalize_to_sphere(&raw).unwrap();
        assert!((ds.points() - &raw).amax() <= 1e-15);
    }

    #[test]
    fn normalize_drops_zero_rows() {
        let raw = Matrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 2.0, 0.0]);
        let (ds, dropped) = normalize_to_sphere(&raw).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(ds.len(), 2);
        let all_zero = Matrix::zeros(2, 3);
        assert!(matches!(normalize_to_sphere(&all_zero), Err(Error::EmptyDataset)));
    }

    #[test]
    fn normalize_keeps_labels_aligned() {
        let raw = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let ds = LabeledDataset::new(raw, Some(vec![Label::Inlier, Label::Inlier, Label::Outlier]), None).unwrap();
        let (ds, dropped) = ds.normalized().unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(ds.labels().unwrap(), &[Label::Inlier, Label::Outlier]);
    }

    #[test]
    fn haystack_without_outliers_lies_on_truth() {
        let p = HaystackParams {
            rank: 3,
            ambient_dim: 12,
            n_in: 200,
            n_out: 0,
            inlier_scale: 1.0,
            outlier_scale: 1.0,
            seed: 11,
        };
        let ds = gen_haystack(&p).unwrap();
        let v = ds.truth().unwrap().matrix();
        for row in ds.points().row_iter() {
            let x = row.transpose();
            let resid = &x - v * (v.transpose() * &x);
            assert!(resid.norm() <= 1e-10);
            assert!((x.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn haystack_is_deterministic() {
        let p = HaystackParams::with_ratio(2, 20, 300, 0.5, 42);
        let a = gen_haystack(&p).unwrap();
        let b = gen_haystack(&p).unwrap();
        assert_eq!(a, b);
        let c = gen_haystack(&HaystackParams { seed: 43, ..p }).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn haystack_label_fraction_is_exact() {
        let p = HaystackParams {
            rank: 2,
            ambient_dim: 10,
            n_in: 37,
            n_out: 63,
            inlier_scale: 2.0,
            outlier_scale: 0.5,
            seed: 5,
        };
        let ds = gen_haystack(&p).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.inlier_count(), Some(37));
    }

    #[test]
    fn haystack_rejects_bad_dimensions() {
        assert!(gen_haystack(&HaystackParams::with_ratio(3, 3, 10, 0.5, 0)).is_err());
        assert!(gen_haystack(&HaystackParams::with_ratio(1, 3, 0, 0.5, 0)).is_err());
    }

    #[test]
    fn inlier_second_moment_is_isotropic_on_the_subspace() {
        let p = HaystackParams {
            rank: 2,
            ambient_dim: 10,
            n_in: 10_000,
            n_out: 0,
            inlier_scale: 1.0,
            outlier_scale: 1.0,
            seed: 9,
        };
        let ds = gen_haystack(&p).unwrap();
        let x = ds.points();
        let m = x.transpose() * x / x.nrows() as f64;
        let (vals, _) = sorted_symmetric_eigen(&m);
        for &v in &vals[..2] {
            assert!((v - 0.5).abs() < 0.05, "{vals:?}");
        }
    }

    #[test]
    fn outlier_residual_norm_matches_monte_carlo() {
        // Oracle: mean of ||Q* x|| for x = g/||g||, g ~ N(0, I_D), computed by
        // direct simulation (with Q* the projection onto the last D-r coordinates).
        let (d, r) = (20usize, 2usize);
        let mut rng = seeding::rng(2024);
        let m = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n2: f64 = g.iter().map(|x| x * x).sum();
            let tail: f64 = g[r..].iter().map(|x| x * x).sum();
            let v = (tail / n2).sqrt();
            sum += v;
            sum_sq += v * v;
        }
        let oracle = sum / m as f64;
        let oracle_sd = (sum_sq / m as f64 - oracle * oracle).sqrt();

        let p = HaystackParams::with_ratio(r, d, 2000, 0.5, 77);
        let ds = gen_haystack(&p).unwrap();
        let out = ds.outliers().unwrap();
        let v = ds.truth().unwrap().matrix();
        let resid: Vec<f64> = out
            .row_iter()
            .map(|row| {
                let x = row.transpose();
                (&x - v * (v.transpose() * &x)).norm()
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let se = (oracle_sd * oracle_sd / resid.len() as f64 + oracle_sd * oracle_sd / m as f64).sqrt();
        assert!((mean - oracle).abs() < 3.0 * se, "mean {mean} oracle {oracle} se {se}");
    }

    #[test]
    fn csv_round_trip() {
        let pts = Matrix::from_row_slice(2, 3, &[0.1, -2.5, 1e-17, 3.0, 0.0, -0.333_333_333_333_333_3]);
        let ds = LabeledDataset::new(pts, Some(vec![Label::Inlier, Label::Outlier]), None).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(&buf[..]).unwrap();
        assert!((back.points() - ds.points()).amax() <= 1e-12);
        assert_eq!(back.labels(), ds.labels());

        let plain = LabeledDataset::unlabeled(ds.points().clone());
        let mut buf = Vec::new();
        plain.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.labels(), None);
    }

    #[test]
    fn csv_with_header_and_labels() {
        let text = "a,b,label\n1,2,in\n3,4,out\n";
        let ds = LabeledDataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels().unwrap(), &[Label::Inlier, Label::Outlier]);
        let headless = LabeledDataset::read_csv("1,2,in\n3,4,out\n".as_bytes()).unwrap();
        assert_eq!(headless.labels(), ds.labels());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = LabeledDataset::read_csv("x1,x2\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = LabeledDataset::read_csv("1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = LabeledDataset::read_csv("1,2,in\n3,4,maybe\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn basis_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let mut rng = seeding::rng(3);
        let v = SubspaceBasis::random(6, 2, &mut rng).unwrap();
        save_basis_csv(&v, &path).unwrap();
        let back = load_basis_csv(&path).unwrap();
        assert!((back.matrix() - v.matrix()).amax() <= 1e-15);
    }
}
