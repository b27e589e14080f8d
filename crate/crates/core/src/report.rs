//! Annual aggregation of anomaly records, region classes, fold evaluation and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{
    logo_split, AnomalyClass, AnomalyRecord, FittedFold, MethodConfig, RecordRow, TauPair,
    RECORD_HEADER,
};
use crate::metrics::{interval_metrics, point_metrics};
use crate::panel::{PanelDataset, PanelObservation};
use crate::qr::TauLevel;

pub const ANNUAL_HEADER: [&str; 6] = ["year", "avg_uar", "avg_lar_magnitude", "n_high", "n_low", "n_normal"];
pub const CLASS_SPLIT_HEADER: [&str; 5] = [
    "year",
    "touristic_avg_uar",
    "touristic_n_high",
    "crossborder_avg_uar",
    "crossborder_n_high",
];
pub const METRICS_HEADER: [&str; 4] = ["model", "split", "metric", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    /// Borders a jurisdiction with higher prices.
    CrossborderHigh,
    /// Borders a jurisdiction with lower prices.
    CrossborderLow,
    Touristic,
    Interior,
}

impl FromStr for RegionClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crossborder_high" => Ok(RegionClass::CrossborderHigh),
            "crossborder_low" => Ok(RegionClass::CrossborderLow),
            "touristic" => Ok(RegionClass::Touristic),
            "interior" => Ok(RegionClass::Interior),
            other => Err(Error::invalid(format!(
                "unknown region class `{other}` (expected crossborder_high, crossborder_low, touristic or interior)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionClassification {
    pub classes: BTreeMap<String, RegionClass>,
    pub provenance: Option<PathBuf>,
}

impl RegionClassification {
    /// Reads a `region,class` CSV. A region listed twice is an error.
    pub fn read<R: Read>(source: R, provenance: Option<PathBuf>) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let header = reader.headers()?.clone();
        if header.iter().ne(["region", "class"]) {
            return Err(Error::invalid(format!(
                "classification header must be `region,class`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut classes = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 2 {
                return Err(Error::invalid(format!("line {line}: expected 2 columns")));
            }
            let class: RegionClass = record[1].parse()?;
            if classes.insert(record[0].to_string(), class).is_some() {
                return Err(Error::invalid(format!(
                    "line {line}: region `{}` classified twice",
                    &record[0]
                )));
            }
        }
        Ok(RegionClassification { classes, provenance })
    }

    pub fn class_of(&self, region: &str) -> Result<RegionClass> {
        self.classes
            .get(region)
            .copied()
            .ok_or_else(|| Error::invalid(format!("region `{region}` has no class")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationMode {
    /// Average ratios over the anomalous records of each kind.
    #[default]
    AnomalousOnly,
    /// Average over every record of the year, counting non-anomalous ones as zero.
    AllRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualAggregate {
    pub year: i32,
    pub avg_uar: Option<f64>,
    pub avg_lar_magnitude: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
    pub n_normal: usize,
}

#[derive(Default)]
struct YearAcc {
    uar_sum: f64,
    lar_sum: f64,
    n_high: usize,
    n_low: usize,
    n_normal: usize,
}

impl YearAcc {
    fn add(&mut self, r: &AnomalyRecord) {
        match r.class {
            AnomalyClass::High => {
                self.n_high += 1;
                self.uar_sum += r.uar;
            }
            AnomalyClass::Low => {
                self.n_low += 1;
                self.lar_sum += r.lar.abs();
            }
            AnomalyClass::Normal => self.n_normal += 1,
        }
    }

    fn finish(&self, year: i32, mode: AggregationMode) -> AnnualAggregate {
        let total = self.n_high + self.n_low + self.n_normal;
        let avg = |sum: f64, count: usize| match mode {
            AggregationMode::AnomalousOnly => (count > 0).then(|| sum / count as f64),
            AggregationMode::AllRecords => (count > 0).then(|| sum / total as f64),
        };
        AnnualAggregate {
            year,
            avg_uar: avg(self.uar_sum, self.n_high),
            avg_lar_magnitude: avg(self.lar_sum, self.n_low),
            n_high: self.n_high,
            n_low: self.n_low,
            n_normal: self.n_normal,
        }
    }
}

/// Yearly mean upper ratio of `High` records and mean `|lar|` of `Low` records.
pub fn aggregate_annual(records: &[AnomalyRecord], mode: AggregationMode) -> Result<Vec<AnnualAggregate>> {
    if records.is_empty() {
        return Err(Error::invalid("no anomaly records to aggregate"));
    }
    let mut by_year: BTreeMap<i32, YearAcc> = BTreeMap::new();
    // Sorting first keeps the floating-point sums independent of input order.
    for r in sorted_records(records) {
        by_year.entry(r.year).or_default().add(r);
    }
    Ok(by_year.iter().map(|(&y, acc)| acc.finish(y, mode)).collect())
}

fn sorted_records(records: &[AnomalyRecord]) -> Vec<&AnomalyRecord> {
    let mut v: Vec<&AnomalyRecord> = records.iter().collect();
    v.sort_by(|a, b| a.region.cmp(&b.region).then(a.year.cmp(&b.year)));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplitRow {
    pub year: i32,
    pub touristic_avg_uar: Option<f64>,
    pub touristic_n_high: usize,
    pub crossborder_avg_uar: Option<f64>,
    pub crossborder_n_high: usize,
}

/// Annual upper-ratio series restricted to touristic and to higher-price border regions.
pub fn split_uar_by_class(
    records: &[AnomalyRecord],
    classification: &RegionClassification,
    mode: AggregationMode,
) -> Result<Vec<ClassSplitRow>> {
    if records.is_empty() {
        return Err(Error::invalid("no anomaly records to aggregate"));
    }
    let mut tour: BTreeMap<i32, YearAcc> = BTreeMap::new();
    let mut cross: BTreeMap<i32, YearAcc> = BTreeMap::new();
    let mut years = BTreeSet::new();
    for r in sorted_records(records) {
        years.insert(r.year);
        match classification.class_of(&r.region)? {
            RegionClass::Touristic => tour.entry(r.year).or_default().add(r),
            RegionClass::CrossborderHigh => cross.entry(r.year).or_default().add(r),
            RegionClass::CrossborderLow | RegionClass::Interior => {}
        }
    }
    let empty = YearAcc::default();
    Ok(years
        .into_iter()
        .map(|year| {
            let t = tour.get(&year).unwrap_or(&empty).finish(year, mode);
            let c = cross.get(&year).unwrap_or(&empty).finish(year, mode);
            ClassSplitRow {
                year,
                touristic_avg_uar: t.avg_uar,
                touristic_n_high: t.n_high,
                crossborder_avg_uar: c.avg_uar,
                crossborder_n_high: c.n_high,
            }
        })
        .collect())
}

/// One line of a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub split: String,
    pub metric: String,
    pub value: Option<f64>,
}

fn metric_rows(
    model: &str,
    split: &str,
    named: impl IntoIterator<Item = (&'static str, Option<f64>)>,
) -> Vec<MetricRow> {
    named
        .into_iter()
        .map(|(metric, value)| MetricRow {
            model: model.to_string(),
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        })
        .collect()
}

fn fold_metrics(
    fitted: &FittedFold,
    rows: &[&PanelObservation],
    taus: TauPair,
    model: &str,
    split: &str,
) -> Result<Vec<MetricRow>> {
    let mut y = Vec::with_capacity(rows.len());
    let mut mid = Vec::with_capacity(rows.len());
    let mut lo = Vec::with_capacity(rows.len());
    let mut hi = Vec::with_capacity(rows.len());
    for o in rows {
        let p = fitted.predict(&o.covariates())?;
        y.push(o.sales_pc);
        mid.push(p[1]);
        lo.push(p[0].min(p[2]));
        hi.push(p[0].max(p[2]));
    }
    let pm = point_metrics(&y, &mid)?;
    let im = interval_metrics(&y, &lo, &hi, taus.alpha(), taus)?;
    Ok(metric_rows(model, split, pm.named().into_iter().chain(im.named())))
}

/// Point metrics of the median prediction and interval metrics, for the training and the
/// held-out rows of every leave-one-region-out fold, followed by the mean over folds
/// (`train:mean`, `test:mean`). A mean is undefined if any fold's value is.
pub fn evaluate_logo(d: &PanelDataset, cfg: &MethodConfig, taus: TauPair) -> Result<Vec<MetricRow>> {
    let model = cfg.method().to_string();
    let median = TauLevel::new(0.5)?;
    let levels = [taus.low(), median, taus.high()];
    let folds: Vec<Vec<MetricRow>> = d
        .regions()
        .par_iter()
        .map(|region| {
            let split = logo_split(d, region)?;
            let fitted = FittedFold::fit(&split.train, cfg, &levels)?;
            let mut rows = fold_metrics(&fitted, &split.train, taus, &model, &format!("train:{region}"))?;
            rows.extend(fold_metrics(&fitted, &split.test, taus, &model, &format!("test:{region}"))?);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<MetricRow> = folds.into_iter().flatten().collect();

    let mut means: Vec<MetricRow> = Vec::new();
    for kind in ["train", "test"] {
        let prefix = format!("{kind}:");
        let mut order: Vec<String> = Vec::new();
        let mut acc: BTreeMap<String, (f64, usize, bool)> = BTreeMap::new();
        for row in out.iter().filter(|r| r.split.starts_with(&prefix)) {
            if !acc.contains_key(&row.metric) {
                order.push(row.metric.clone());
            }
            let e = acc.entry(row.metric.clone()).or_insert((0.0, 0, true));
            match row.value {
                Some(v) => {
                    e.0 += v;
                    e.1 += 1;
                }
                None => e.2 = false,
            }
        }
        for metric in order {
            let (sum, count, defined) = acc[&metric];
            means.push(MetricRow {
                model: model.clone(),
                split: format!("{kind}:mean"),
                metric,
                value: (defined && count > 0).then(|| sum / count as f64),
            });
        }
    }
    out.extend(means);
    Ok(out)
}

/// Metric rows for a pooled set of anomaly records (interval metrics only).
pub fn record_interval_metrics(records: &[AnomalyRecord], model: &str) -> Result<Vec<MetricRow>> {
    let Some(first) = records.first() else {
        return Err(Error::invalid("no anomaly records"));
    };
    let taus = first.interval.taus;
    let y: Vec<f64> = records.iter().map(|r| r.observed).collect();
    let lo: Vec<f64> = records.iter().map(|r| r.interval.lower).collect();
    let hi: Vec<f64> = records.iter().map(|r| r.interval.upper).collect();
    let im = interval_metrics(&y, &lo, &hi, taus.alpha(), taus)?;
    Ok(metric_rows(model, "test:pooled", im.named()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!("unknown format `{other}`"))),
        }
    }
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn write_records_csv<W: Write>(records: &[AnomalyRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        let row = RecordRow::from(r);
        w.write_record([
            row.region,
            row.year.to_string(),
            fmt_num(row.observed),
            fmt_num(row.lower),
            fmt_num(row.upper),
            fmt_num(row.tau_low),
            fmt_num(row.tau_high),
            row.class.to_string(),
            fmt_num(row.uar),
            fmt_num(row.lar),
            row.crossing_repaired.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records writer>", e))?;
    Ok(())
}

pub fn write_records_json<W: Write>(records: &[AnomalyRecord], mut sink: W) -> Result<()> {
    let rows: Vec<RecordRow> = records.iter().map(RecordRow::from).collect();
    serde_json::to_writer_pretty(&mut sink, &rows)?;
    sink.write_all(b"\n").map_err(|e| Error::io("<records writer>", e))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(source: R) -> Result<Vec<AnomalyRecord>> {
    let mut reader = csv::Reader::from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(Error::invalid(format!(
            "records header must be `{}`",
            RECORD_HEADER.join(",")
        )));
    }
    reader
        .deserialize::<RecordRow>()
        .map(|row| AnomalyRecord::try_from(row?))
        .collect()
}

pub fn read_records_json<R: Read>(source: R) -> Result<Vec<AnomalyRecord>> {
    let rows: Vec<RecordRow> = serde_json::from_reader(source)?;
    rows.into_iter().map(AnomalyRecord::try_from).collect()
}

pub fn write_annual_csv<W: Write>(rows: &[AnnualAggregate], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(ANNUAL_HEADER)?;
    for a in rows {
        w.write_record([
            a.year.to_string(),
            fmt_opt(a.avg_uar),
            fmt_opt(a.avg_lar_magnitude),
            a.n_high.to_string(),
            a.n_low.to_string(),
            a.n_normal.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<annual writer>", e))?;
    Ok(())
}

pub fn write_class_split_csv<W: Write>(rows: &[ClassSplitRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CLASS_SPLIT_HEADER)?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            fmt_opt(r.touristic_avg_uar),
            r.touristic_n_high.to_string(),
            fmt_opt(r.crossborder_avg_uar),
            r.crossborder_n_high.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<class split writer>", e))?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([r.model.as_str(), r.split.as_str(), r.metric.as_str(), &fmt_opt(r.value)])?;
    }
    w.flush().map_err(|e| Error::io("<metrics writer>", e))?;
    Ok(())
}

/// `{ model: { split: { metric: value } } }`.
pub fn write_metrics_json<W: Write>(rows: &[MetricRow], mut sink: W) -> Result<()> {
    let mut tree: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, Option<f64>>>> = BTreeMap::new();
    for r in rows {
        tree.entry(&r.model)
            .or_default()
            .entry(&r.split)
            .or_default()
            .insert(&r.metric, r.value);
    }
    serde_json::to_writer_pretty(&mut sink, &tree)?;
    sink.write_all(b"\n").map_err(|e| Error::io("<metrics writer>", e))?;
    Ok(())
}

fn write_json<T: Serialize, W: Write>(value: &T, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, value)?;
    sink.write_all(b"\n").map_err(|e| Error::io("<json writer>", e))?;
    Ok(())
}

/// Everything one report run writes.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<AnomalyRecord>,
    pub annual: Vec<AnnualAggregate>,
    pub class_split: Option<Vec<ClassSplitRow>>,
    pub metrics: Vec<MetricRow>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `records`, `annual`, `class_split` (when present) and `metrics` files into
/// `dir` with the extension of `format`. Sections with no rows are skipped. Returns the
/// paths written.
pub fn emit_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = dir.join(format!("{name}.{ext}"));
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if !report.records.is_empty() {
        emit("records", &|w| match format {
            Format::Csv => write_records_csv(&report.records, w),
            Format::Json => write_records_json(&report.records, w),
        })?;
    }
    if !report.annual.is_empty() {
        emit("annual", &|w| match format {
            Format::Csv => write_annual_csv(&report.annual, w),
            Format::Json => write_json(&report.annual, w),
        })?;
    }
    if let Some(split) = &report.class_split {
        emit("class_split", &|w| match format {
            Format::Csv => write_class_split_csv(split, w),
            Format::Json => write_json(split, w),
        })?;
    }
    if !report.metrics.is_empty() {
        emit("metrics", &|w| match format {
            Format::Csv => write_metrics_csv(&report.metrics, w),
            Format::Json => write_metrics_json(&report.metrics, w),
        })?;
    }
    Ok(written)
}
