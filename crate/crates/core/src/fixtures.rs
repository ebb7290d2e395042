//! Published reference tables for the default 11-model, 15-benchmark
//! setting, embedded at compile time.

use serde::Deserialize;

use crate::corpus::{BenchmarkId, EvalConfig, ModelId, ScoreMatrix};
use crate::error::Result;
use crate::rankstats::CorrelationMatrix;

pub const PERFORMANCE_CSV: &str = include_str!("../fixtures/performance.csv");
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../fixtures/default_config.toml");
pub const QUALITY_TABLE_CSV: &str = include_str!("../fixtures/quality_table.csv");
pub const BOOTSTRAP_INTERVALS_CSV: &str = include_str!("../fixtures/bootstrap_intervals.csv");
pub const CAD_MAPPING_CSV: &str = include_str!("../fixtures/cad_mapping.csv");
pub const FAMILY_CAD_CSV: &str = include_str!("../fixtures/family_cad.csv");
pub const DOMAIN_MEANS_CSV: &str = include_str!("../fixtures/domain_means.csv");

/// Correlation matrix files by domain name.
pub const CORRELATIONS_CSV: [(&str, &str); 3] = [
    ("Mathematics", include_str!("../fixtures/correlations_mathematics.csv")),
    (
        "General Reasoning",
        include_str!("../fixtures/correlations_general.csv"),
    ),
    (
        "Knowledge & Understanding",
        include_str!("../fixtures/correlations_knowledge.csv"),
    ),
];

/// Accuracy of the 11 reference models on the 15 benchmarks, as fractions.
pub fn performance() -> Result<ScoreMatrix> {
    ScoreMatrix::read_percent_table(PERFORMANCE_CSV.as_bytes())
}

pub fn default_config() -> Result<EvalConfig> {
    EvalConfig::parse(DEFAULT_CONFIG_TOML)
}

/// One row of the published quality table. `ds_min` and `ds_max` are the
/// score range in percent.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QualityRow {
    pub benchmark: BenchmarkId,
    pub domain: String,
    pub cbrc: f64,
    pub cbrc_sigma: f64,
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub ds_sigma: f64,
    pub cad: f64,
    pub cad_sigma: f64,
    pub bqs: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct IntervalRow {
    pub benchmark: BenchmarkId,
    pub cbrc_mean: f64,
    pub cbrc_lower: f64,
    pub cbrc_upper: f64,
    pub cbrc_sigma: f64,
    pub ds_mean: f64,
    pub ds_lower: f64,
    pub ds_upper: f64,
    pub ds_sigma: f64,
    pub cad_mean: f64,
    pub cad_lower: f64,
    pub cad_upper: f64,
    pub cad_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MappingRow {
    pub raw: f64,
    pub transformed: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Rows in published order (grouped by domain).
pub fn quality_table() -> Result<Vec<QualityRow>> {
    rows(QUALITY_TABLE_CSV)
}

pub fn bootstrap_intervals() -> Result<Vec<IntervalRow>> {
    rows(BOOTSTRAP_INTERVALS_CSV)
}

pub fn cad_mapping() -> Result<Vec<MappingRow>> {
    rows(CAD_MAPPING_CSV)
}

/// Published benchmark correlation matrices in domain order.
pub fn correlations() -> Result<Vec<(String, CorrelationMatrix)>> {
    CORRELATIONS_CSV
        .iter()
        .map(|(d, text)| Ok((d.to_string(), CorrelationMatrix::read_delimited(text.as_bytes())?)))
        .collect()
}

/// The first column of `text` as keys and the remaining columns as values.
fn keyed_table(text: &str) -> Result<(Vec<String>, Vec<(String, Vec<f64>)>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let columns = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>().map_err(|_| crate::error::Error::Parse {
                    line: out.len() + 2,
                    message: format!("`{c}` is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        out.push((rec.get(0).unwrap_or_default().to_owned(), values));
    }
    Ok((columns, out))
}

/// Published per-family CAD: family names and one row per benchmark.
pub fn family_cad() -> Result<(Vec<String>, Vec<(BenchmarkId, Vec<f64>)>)> {
    let (families, rows) = keyed_table(FAMILY_CAD_CSV)?;
    Ok((families, rows.into_iter().map(|(b, v)| (b.into(), v)).collect()))
}

/// Published per-model domain means in percent: domain names and one row
/// per model.
pub fn domain_means() -> Result<(Vec<String>, Vec<(ModelId, Vec<f64>)>)> {
    let (domains, rows) = keyed_table(DOMAIN_MEANS_CSV)?;
    Ok((domains, rows.into_iter().map(|(m, v)| (m.into(), v)).collect()))
}
