//! Regional panel observations: CSV ingestion, validation and descriptive statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, PanelErrors, PanelIssue, Result};
use crate::stats;

pub const PANEL_HEADER: [&str; 5] = ["region", "year", "sales_pc", "price", "gdp_pc"];
pub const DESCRIBE_HEADER: [&str; 8] = ["region", "variable", "n", "mean", "sd", "q1", "q2", "q3"];

/// One `(region, year)` cell of the panel.
///
/// Sales are packs of 20 per adult per year, price is deflated currency per pack and GDP is
/// thousands of deflated currency per adult.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub region: String,
    pub year: i32,
    pub sales_pc: f64,
    pub price: f64,
    pub gdp_pc: f64,
}

impl PanelObservation {
    pub fn covariates(&self) -> [f64; 2] {
        [self.price, self.gdp_pc]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub min_year: i32,
    pub max_year: i32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            min_year: 1900,
            max_year: 2100,
        }
    }
}

/// A validated, rectangular panel. Observations are stored sorted by `(region, year)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: Vec<PanelObservation>,
    regions: Vec<String>,
    years: Vec<i32>,
}

impl PanelDataset {
    /// Validates a set of observations. Positions in error messages are 1-based indices
    /// into `observations`.
    pub fn from_observations(
        observations: Vec<PanelObservation>,
        opts: &ParseOptions,
    ) -> Result<Self> {
        let rows = observations
            .into_iter()
            .enumerate()
            .map(|(i, o)| (i as u64 + 1, o))
            .collect();
        Self::validate(rows, opts, Vec::new())
    }

    fn validate(
        rows: Vec<(u64, PanelObservation)>,
        opts: &ParseOptions,
        mut issues: Vec<PanelIssue>,
    ) -> Result<Self> {
        let mut seen: BTreeMap<(String, i32), u64> = BTreeMap::new();
        let mut kept = Vec::with_capacity(rows.len());
        for (line, obs) in rows {
            let before = issues.len();
            check_bounds(line, &obs, opts, &mut issues);
            match seen.get(&(obs.region.clone(), obs.year)) {
                Some(&first) => issues.push(PanelIssue::Duplicate {
                    region: obs.region.clone(),
                    year: obs.year,
                    lines: (first, line),
                }),
                None => {
                    seen.insert((obs.region.clone(), obs.year), line);
                }
            }
            if issues.len() == before {
                kept.push(obs);
            }
        }
        if seen.is_empty() && issues.is_empty() {
            issues.push(PanelIssue::Empty);
        }

        let regions: BTreeSet<&String> = seen.keys().map(|(r, _)| r).collect();
        let years: BTreeSet<i32> = seen.keys().map(|&(_, y)| y).collect();
        let mut missing = Vec::new();
        for region in &regions {
            for &year in &years {
                if !seen.contains_key(&((*region).clone(), year)) {
                    missing.push(((*region).clone(), year));
                }
            }
        }
        if !missing.is_empty() {
            issues.push(PanelIssue::MissingCells(missing));
        }
        if !issues.is_empty() {
            return Err(PanelErrors(issues).into());
        }

        kept.sort_by(|a, b| a.region.cmp(&b.region).then(a.year.cmp(&b.year)));
        Ok(PanelDataset {
            regions: regions.into_iter().cloned().collect(),
            years: years.into_iter().collect(),
            observations: kept,
        })
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observations of one region, in year order.
    pub fn region_rows<'a>(&'a self, region: &'a str) -> impl Iterator<Item = &'a PanelObservation> {
        self.observations.iter().filter(move |o| o.region == region)
    }
}

fn check_bounds(line: u64, o: &PanelObservation, opts: &ParseOptions, issues: &mut Vec<PanelIssue>) {
    let mut bad = |field, message: String| {
        issues.push(PanelIssue::OutOfBounds {
            line,
            field,
            message,
        })
    };
    if o.region.is_empty() {
        bad("region", "is empty".into());
    }
    if o.year < opts.min_year || o.year > opts.max_year {
        bad(
            "year",
            format!("{} outside [{}, {}]", o.year, opts.min_year, opts.max_year),
        );
    }
    if !o.sales_pc.is_finite() || o.sales_pc < 0.0 {
        bad("sales_pc", format!("must be finite and >= 0, got {}", o.sales_pc));
    }
    if !o.price.is_finite() || o.price <= 0.0 {
        bad("price", format!("must be finite and > 0, got {}", o.price));
    }
    if !o.gdp_pc.is_finite() || o.gdp_pc <= 0.0 {
        bad("gdp_pc", format!("must be finite and > 0, got {}", o.gdp_pc));
    }
}

/// Parses and validates a panel CSV (`region,year,sales_pc,price,gdp_pc`).
///
/// Every problem in the file is reported, not only the first one.
pub fn parse_panel<R: Read>(source: R, opts: &ParseOptions) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source);

    let header = reader.headers()?.clone();
    if header.iter().ne(PANEL_HEADER.iter().copied()) {
        return Err(PanelErrors(vec![PanelIssue::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        }])
        .into());
    }

    let mut issues = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                issues.push(PanelIssue::Malformed {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != PANEL_HEADER.len() {
            issues.push(PanelIssue::Malformed {
                line,
                message: format!("expected {} columns, found {}", PANEL_HEADER.len(), record.len()),
            });
            continue;
        }
        match parse_row(&record) {
            Ok(obs) => rows.push((line, obs)),
            Err(message) => issues.push(PanelIssue::Malformed { line, message }),
        }
    }
    PanelDataset::validate(rows, opts, issues)
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<PanelObservation, String> {
    fn num(record: &csv::StringRecord, idx: usize) -> std::result::Result<f64, String> {
        let raw = &record[idx];
        raw.parse::<f64>()
            .map_err(|_| format!("cannot parse `{}` as a number in column `{}`", raw, PANEL_HEADER[idx]))
    }
    let year = record[1]
        .parse::<i32>()
        .map_err(|_| format!("cannot parse `{}` as an integer year", &record[1]))?;
    Ok(PanelObservation {
        region: record[0].to_string(),
        year,
        sales_pc: num(record, 2)?,
        price: num(record, 3)?,
        gdp_pc: num(record, 4)?,
    })
}

/// Writes the panel in the same CSV format [`parse_panel`] reads.
pub fn write_panel<W: Write>(d: &PanelDataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(PANEL_HEADER)?;
    for o in d.observations() {
        w.write_record([
            o.region.clone(),
            o.year.to_string(),
            o.sales_pc.to_string(),
            o.price.to_string(),
            o.gdp_pc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariableStats {
    pub mean: f64,
    pub sd: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl VariableStats {
    pub fn of(series: &[f64]) -> Self {
        let sorted = stats::sorted(series);
        VariableStats {
            mean: stats::mean(series),
            sd: stats::sample_sd(series),
            q1: stats::quantile_linear_sorted(&sorted, 0.25),
            q2: stats::quantile_linear_sorted(&sorted, 0.5),
            q3: stats::quantile_linear_sorted(&sorted, 0.75),
        }
    }
}

/// Per-region summary in the layout of a classic descriptive-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveStats {
    pub region: String,
    pub n_years: usize,
    pub sales_pc: VariableStats,
    pub price: VariableStats,
    pub gdp_pc: VariableStats,
}

pub fn describe(d: &PanelDataset) -> Vec<DescriptiveStats> {
    d.regions()
        .iter()
        .map(|region| {
            let rows: Vec<&PanelObservation> = d.region_rows(region).collect();
            let col = |f: fn(&PanelObservation) -> f64| rows.iter().map(|o| f(o)).collect::<Vec<_>>();
            DescriptiveStats {
                region: region.clone(),
                n_years: rows.len(),
                sales_pc: VariableStats::of(&col(|o| o.sales_pc)),
                price: VariableStats::of(&col(|o| o.price)),
                gdp_pc: VariableStats::of(&col(|o| o.gdp_pc)),
            }
        })
        .collect()
}

/// Writes descriptive statistics as `region,variable,n,mean,sd,q1,q2,q3`.
pub fn write_describe<W: Write>(rows: &[DescriptiveStats], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(DESCRIBE_HEADER)?;
    for s in rows {
        for (name, v) in [("sales_pc", &s.sales_pc), ("price", &s.price), ("gdp_pc", &s.gdp_pc)] {
            w.write_record([
                s.region.clone(),
                name.to_string(),
                s.n_years.to_string(),
                v.mean.to_string(),
                v.sd.to_string(),
                v.q1.to_string(),
                v.q2.to_string(),
                v.q3.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<describe writer>", e))?;
    Ok(())
}
