//! Discretely observed functional datasets and their CSV representation.
//!
//! File layout (one dataset per file):
//!
//! ```text
//! #x_grid: s_1,...,s_n1
//! #y_grid: r_1,...,r_n2
//! #p: <int>
//! x_t1,...,x_tn1,y_t1,...,y_tn2,z_t1,...,z_tp     (one row per subject t)
//! ```
//!
//! All reals carry 18 significant digits so a save/load round trip is
//! bit-exact.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::SampleGrid;
use crate::textio::{expect_header, fmt_f64, join_f64, parse_f64_row, parse_usize};

/// Curves `X` (n1 x T), `Y` (n2 x T) and scalar covariates `Z` (p x T),
/// column `t` holding subject `t`. `p` may be zero (pure function-on-function
/// data).
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    x_grid: SampleGrid,
    y_grid: SampleGrid,
    x: Array2<f64>,
    y: Array2<f64>,
    z: Array2<f64>,
}

impl FunctionalDataset {
    pub fn new(
        x_grid: SampleGrid,
        y_grid: SampleGrid,
        x: Array2<f64>,
        y: Array2<f64>,
        z: Array2<f64>,
    ) -> Result<Self> {
        let t = x.ncols();
        if t == 0 {
            return Err(Error::Size("a dataset needs at least one subject".into()));
        }
        if y.ncols() != t || z.ncols() != t {
            return Err(Error::Shape(format!(
                "subject counts disagree: X has {t}, Y has {}, Z has {}",
                y.ncols(),
                z.ncols()
            )));
        }
        if x.nrows() != x_grid.len() {
            return Err(Error::Shape(format!(
                "X has {} rows but the x grid has {} points",
                x.nrows(),
                x_grid.len()
            )));
        }
        if y.nrows() != y_grid.len() {
            return Err(Error::Shape(format!(
                "Y has {} rows but the y grid has {} points",
                y.nrows(),
                y_grid.len()
            )));
        }
        Ok(FunctionalDataset {
            x_grid,
            y_grid,
            x,
            y,
            z,
        })
    }

    pub fn x_grid(&self) -> &SampleGrid {
        &self.x_grid
    }

    pub fn y_grid(&self) -> &SampleGrid {
        &self.y_grid
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn n1(&self) -> usize {
        self.x.nrows()
    }

    pub fn n2(&self) -> usize {
        self.y.nrows()
    }

    pub fn subjects(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }

    /// Dataset restricted to the given subject columns, in the given order.
    pub fn subset(&self, subject_idx: &[usize]) -> Result<Self> {
        if subject_idx.is_empty() {
            return Err(Error::Size("subset needs at least one subject".into()));
        }
        for &t in subject_idx {
            if t >= self.subjects() {
                return Err(Error::Index(format!(
                    "subject {t} out of range 0..{}",
                    self.subjects()
                )));
            }
        }
        let pick = |m: &Array2<f64>| {
            let mut out = Array2::zeros((m.nrows(), subject_idx.len()));
            for (dst, &src) in subject_idx.iter().enumerate() {
                out.column_mut(dst).assign(&m.column(src));
            }
            out
        };
        FunctionalDataset::new(
            self.x_grid.clone(),
            self.y_grid.clone(),
            pick(&self.x),
            pick(&self.y),
            pick(&self.z),
        )
    }

    /// Splits subjects into `(first t_train, rest)`.
    pub fn split_at(&self, t_train: usize) -> Result<(Self, Self)> {
        if t_train == 0 || t_train >= self.subjects() {
            return Err(Error::Param(format!(
                "split point {t_train} must lie strictly inside 1..{}",
                self.subjects()
            )));
        }
        let train: Vec<usize> = (0..t_train).collect();
        let test: Vec<usize> = (t_train..self.subjects()).collect();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("#x_grid: ");
        out.push_str(&join_f64(self.x_grid.points().iter().copied()));
        out.push('\n');
        out.push_str("#y_grid: ");
        out.push_str(&join_f64(self.y_grid.points().iter().copied()));
        out.push('\n');
        out.push_str(&format!("#p: {}\n", self.p()));
        for t in 0..self.subjects() {
            let mut fields: Vec<String> = Vec::with_capacity(self.n1() + self.n2() + self.p());
            fields.extend(self.x.column(t).iter().map(|&v| fmt_f64(v)));
            fields.extend(self.y.column(t).iter().map(|&v| fmt_f64(v)));
            fields.extend(self.z.column(t).iter().map(|&v| fmt_f64(v)));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_string(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (l1, x_header) = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let x_points = parse_f64_row(expect_header(x_header, "x_grid", l1 + 1)?, l1 + 1)?;
        let (l2, y_header) = lines
            .next()
            .ok_or(Error::Parse { line: 2, msg: "missing #y_grid header".into() })?;
        let y_points = parse_f64_row(expect_header(y_header, "y_grid", l2 + 1)?, l2 + 1)?;
        let (l3, p_header) = lines
            .next()
            .ok_or(Error::Parse { line: 3, msg: "missing #p header".into() })?;
        let p = parse_usize(expect_header(p_header, "p", l3 + 1)?, l3 + 1)?;

        let x_grid = SampleGrid::new(x_points).map_err(|e| Error::Parse {
            line: l1 + 1,
            msg: format!("invalid x grid: {e}"),
        })?;
        let y_grid = SampleGrid::new(y_points).map_err(|e| Error::Parse {
            line: l2 + 1,
            msg: format!("invalid y grid: {e}"),
        })?;
        let (n1, n2) = (x_grid.len(), y_grid.len());
        let row_len = n1 + n2 + p;

        let mut x_vals: Vec<f64> = Vec::new();
        let mut y_vals: Vec<f64> = Vec::new();
        let mut z_vals: Vec<f64> = Vec::new();
        let mut t = 0usize;
        for (idx, row) in lines {
            if row.trim().is_empty() {
                continue;
            }
            let vals = parse_f64_row(row, idx + 1)?;
            if vals.len() != row_len {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {row_len} fields, got {}", vals.len()),
                });
            }
            x_vals.extend_from_slice(&vals[..n1]);
            y_vals.extend_from_slice(&vals[n1..n1 + n2]);
            z_vals.extend_from_slice(&vals[n1 + n2..]);
            t += 1;
        }
        if t == 0 {
            return Err(Error::Parse {
                line: 4,
                msg: "no data rows".into(),
            });
        }
        // Rows were subject-major; transpose into point-major columns.
        let subject_major = |vals: Vec<f64>, dim: usize| {
            Array2::from_shape_vec((t, dim), vals)
                .expect("row count verified above")
                .reversed_axes()
                .as_standard_layout()
                .to_owned()
        };
        FunctionalDataset::new(
            x_grid,
            y_grid,
            subject_major(x_vals, n1),
            subject_major(y_vals, n2),
            subject_major(z_vals, p),
        )
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_string(&text)
    }
}
