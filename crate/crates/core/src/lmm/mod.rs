//! Random-intercept linear mixed model
//!
//! ```text
//! y = X beta + Z b + e,   b ~ N(0, sigma_b^2 I_q),   e ~ N(0, sigma^2 I_n)
//! ```
//!
//! with `Z` the row-to-group indicator matrix. Writing `theta = sigma_b / sigma`
//! the marginal covariance is `sigma^2 V` with `V = I + theta^2 Z Z'`, which is
//! block diagonal with one `I + theta^2 11'` block per group. Each block has a
//! closed-form inverse and determinant, so for fixed `theta` the estimates of
//! `beta` and `sigma^2` are available in closed form and the fit reduces to a
//! one-dimensional search over `theta` (the profiled deviance).

mod design;
mod deviance;
mod fit;
mod optimize;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub use design::{build_design, BuiltDesign, LmmSpec, Term};
pub use deviance::{profiled_deviance, ProfiledDeviance, CONDITION_LIMIT};
pub use fit::{
    fit_lmm, information_criteria, stars, wald_table, CoefficientRow, LmmFit, THETA_MAX,
};
pub use optimize::{brent_minimize, Minimum};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "ML")]
    Ml,
    #[default]
    #[serde(rename = "REML")]
    Reml,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Method::Ml),
            "reml" => Ok(Method::Reml),
            other => Err(Error::Validation(format!("method must be ml or reml, got {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ml => "ML",
            Method::Reml => "REML",
        })
    }
}

/// Fixed-effects design with a group label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    names: Vec<String>,
    intercept: bool,
    groups: Vec<usize>,
    group_labels: Vec<String>,
}

impl DesignMatrix {
    /// `x` must already contain the intercept column (first, all ones) when
    /// `intercept` is set. Group indices follow the sorted order of labels.
    pub fn new<S: AsRef<str>>(
        x: DMatrix<f64>,
        names: Vec<String>,
        intercept: bool,
        row_groups: &[S],
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if names.len() != p {
            return Err(Error::Shape(format!("{} names for {p} columns", names.len())));
        }
        if row_groups.len() != n {
            return Err(Error::Shape(format!("{} group labels for {n} rows", row_groups.len())));
        }
        if n <= p {
            return Err(Error::InsufficientData(format!("{n} rows for {p} columns")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("design contains non-finite values".into()));
        }
        if intercept && (p == 0 || x.column(0).iter().any(|&v| v != 1.0)) {
            return Err(Error::Validation("intercept column must be all ones".into()));
        }
        let first = usize::from(intercept);
        for (j, name) in names.iter().enumerate().take(p).skip(first) {
            let col = x.column(j);
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::Validation(format!("column {name} is constant")));
            }
        }

        let mut labels: Vec<String> = row_groups.iter().map(|g| g.as_ref().to_string()).collect();
        labels.sort();
        labels.dedup();
        let groups = row_groups
            .iter()
            .map(|g| labels.binary_search_by(|l| l.as_str().cmp(g.as_ref())).unwrap())
            .collect();
        Ok(DesignMatrix {
            x,
            names,
            intercept,
            groups,
            group_labels: labels,
        })
    }

    /// Row-major convenience constructor.
    pub fn from_rows<S: AsRef<str>>(
        rows: &[Vec<f64>],
        names: Vec<String>,
        intercept: bool,
        row_groups: &[S],
    ) -> Result<Self> {
        let p = names.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape(format!("every row needs {p} values")));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        DesignMatrix::new(x, names, intercept, row_groups)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of distinct groups.
    pub fn q(&self) -> usize {
        self.group_labels.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Group index of each row, into [`Self::group_labels`].
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q()];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }

    /// Same design with column `j` multiplied by `factor`.
    pub fn scale_column(&self, j: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.x.column_mut(j).scale_mut(factor);
        out
    }

    /// Columns other than the intercept, with their names.
    pub fn predictors(&self) -> impl Iterator<Item = (&str, DVector<f64>)> + '_ {
        let first = usize::from(self.intercept);
        (first..self.p()).map(move |j| (self.names[j].as_str(), self.x.column(j).into_owned()))
    }
}
