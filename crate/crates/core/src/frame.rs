//! The joined country table that feeds the regression models.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::CountryCode;
use crate::diversity::DateWindow;
use crate::error::{Error, Result};

/// Numeric column of a [`Frame`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Column {
    Pfi,
    Diversity,
    Cellular,
    Gdp,
    Population,
    Unemployment,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::Pfi => "pfi",
            Column::Diversity => "u",
            Column::Cellular => "cellular",
            Column::Gdp => "gdp",
            Column::Population => "pop",
            Column::Unemployment => "unemployment",
        }
    }

    /// Row label used in model tables.
    pub fn label(self) -> &'static str {
        match self {
            Column::Pfi => "press freedom index",
            Column::Diversity => "attention diversity",
            Column::Cellular => "cellular",
            Column::Gdp => "GDP per capita",
            Column::Population => "Population",
            Column::Unemployment => "unemployment",
        }
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "pfi" => Column::Pfi,
            "u" | "diversity" | "attention_diversity" => Column::Diversity,
            "cellular" | "cellular_per_100" => Column::Cellular,
            "gdp" | "gdp_per_capita" => Column::Gdp,
            "pop" | "population" => Column::Population,
            "unemployment" | "unemployment_pct" => Column::Unemployment,
            other => return Err(Error::Validation(format!("unknown column {other:?}"))),
        })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Label that defines the random-intercept groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Grouping {
    Country,
    Region,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" => Ok(Grouping::Country),
            "region" => Ok(Grouping::Region),
            other => Err(Error::Validation(format!(
                "grouping must be country or region, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Country => "country",
            Grouping::Region => "region",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameRow {
    pub country: CountryCode,
    /// Set in panel mode, where each country contributes one row per window.
    pub window: Option<DateWindow>,
    pub region: Option<String>,
    pub u: Option<f64>,
    pub pfi: Option<f64>,
    pub cellular_per_100: Option<f64>,
    pub gdp_per_capita: Option<f64>,
    pub population: Option<f64>,
    pub unemployment_pct: Option<f64>,
}

impl FrameRow {
    pub fn value(&self, column: Column) -> Option<f64> {
        match column {
            Column::Pfi => self.pfi,
            Column::Diversity => self.u,
            Column::Cellular => self.cellular_per_100,
            Column::Gdp => self.gdp_per_capita,
            Column::Population => self.population,
            Column::Unemployment => self.unemployment_pct,
        }
    }

    pub fn group(&self, grouping: Grouping) -> Option<&str> {
        match grouping {
            Grouping::Country => Some(self.country.as_str()),
            Grouping::Region => self.region.as_deref(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Frame {
    pub rows: Vec<FrameRow>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
