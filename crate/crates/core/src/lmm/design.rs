use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{DesignMatrix, Method};
use crate::error::{Error, Result};
use crate::frame::{Column, Frame, Grouping};

/// One fixed-effect term, optionally natural-log transformed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Term {
    pub column: Column,
    pub log: bool,
}

impl Term {
    pub fn plain(column: Column) -> Self {
        Term { column, log: false }
    }

    pub fn log(column: Column) -> Self {
        Term { column, log: true }
    }

    /// Row label in model tables, e.g. `log(GDP per capita)`.
    pub fn label(&self) -> String {
        if self.log {
            format!("log({})", self.column.label())
        } else {
            self.column.label().to_string()
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log {
            write!(f, "log({})", self.column)
        } else {
            write!(f, "{}", self.column)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmmSpec {
    pub response: Column,
    pub terms: Vec<Term>,
    pub grouping: Grouping,
    pub method: Method,
}

impl LmmSpec {
    pub fn new(response: Column, terms: Vec<Term>, grouping: Grouping, method: Method) -> Result<Self> {
        if terms.iter().any(|t| t.column == response) {
            return Err(Error::Validation(format!("response {response} also appears as a predictor")));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Validation(format!("term {t} listed twice")));
            }
        }
        Ok(LmmSpec {
            response,
            terms,
            grouping,
            method,
        })
    }

    /// The three reference models: diversity only, national attributes only,
    /// and both.
    pub fn model(number: u8, grouping: Grouping, method: Method) -> Result<Self> {
        let diversity = [Term::log(Column::Diversity)];
        let national = [
            Term::plain(Column::Cellular),
            Term::log(Column::Gdp),
            Term::log(Column::Population),
            Term::plain(Column::Unemployment),
        ];
        let terms = match number {
            1 => diversity.to_vec(),
            2 => national.to_vec(),
            3 => diversity.iter().chain(&national).copied().collect(),
            other => return Err(Error::Validation(format!("model must be 1, 2 or 3, got {other}"))),
        };
        LmmSpec::new(Column::Pfi, terms, grouping, method)
    }

    /// Parses `response ~ term + term + ...` where each term is a column
    /// name or `log(column)`.
    pub fn parse_formula(formula: &str, grouping: Grouping, method: Method) -> Result<Self> {
        let (lhs, rhs) = formula
            .split_once('~')
            .ok_or_else(|| Error::Validation(format!("formula {formula:?} has no '~'")))?;
        let response: Column = lhs.parse()?;
        let terms = rhs
            .split('+')
            .map(|raw| {
                let raw = raw.trim();
                match raw.strip_prefix("log(").and_then(|r| r.strip_suffix(')')) {
                    Some(inner) => Ok(Term::log(inner.parse()?)),
                    None => Ok(Term::plain(raw.parse()?)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        LmmSpec::new(response, terms, grouping, method)
    }

    pub fn formula(&self) -> String {
        let rhs: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        format!("{} ~ {}", self.response, rhs.join(" + "))
    }
}

#[derive(Clone, Debug)]
pub struct BuiltDesign {
    pub design: DesignMatrix,
    pub y: Vec<f64>,
    /// Frame rows dropped for a missing response, predictor or group label.
    pub dropped: usize,
    /// Labels for table rows, parallel to the design columns.
    pub labels: Vec<String>,
}

/// Listwise-deletes incomplete rows, applies log transforms and prepends
/// an intercept.
pub fn build_design(frame: &Frame, spec: &LmmSpec) -> Result<BuiltDesign> {
    let p = spec.terms.len() + 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    let mut dropped = 0;

    'rows: for (i, row) in frame.rows.iter().enumerate() {
        let mut values = Vec::with_capacity(p);
        values.push(1.0);
        let mut complete = true;
        for term in &spec.terms {
            match row.value(term.column) {
                Some(v) if term.log => {
                    if v <= 0.0 {
                        return Err(Error::LogDomain {
                            row: i,
                            column: term.column.name().to_string(),
                            value: v,
                        });
                    }
                    values.push(v.ln());
                }
                Some(v) => values.push(v),
                None => complete = false,
            }
        }
        let response = row.value(spec.response);
        let group = row.group(spec.grouping);
        match (complete, response, group) {
            (true, Some(r), Some(g)) => {
                rows.push(values);
                y.push(r);
                groups.push(g);
            }
            _ => {
                dropped += 1;
                continue 'rows;
            }
        }
    }

    if rows.len() < p + 2 {
        return Err(Error::InsufficientData(format!(
            "{} complete rows for {p} fixed effects (need at least {})",
            rows.len(),
            p + 2
        )));
    }
    let names: Vec<String> = std::iter::once("(Intercept)".to_string())
        .chain(spec.terms.iter().map(Term::to_string))
        .collect();
    let labels = std::iter::once("(Intercept)".to_string())
        .chain(spec.terms.iter().map(Term::label))
        .collect();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let design = DesignMatrix::new(x, names, true, &groups)?;
    Ok(BuiltDesign {
        design,
        y,
        dropped,
        labels,
    })
}
