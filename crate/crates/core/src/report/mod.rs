//! Benchmark quality score (BQS) aggregation and full quality reports.

mod table;
pub mod tables;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use table::{fmt, fmt_opt, Table};

use crate::alignment::{cad, cad_by_family, count_inversions, instance_tallies, DEFAULT_LAMBDA};
use crate::corpus::{BenchmarkId, EvalConfig, ModelId, OutcomeStore, ScoreMatrix};
use crate::discrim::{discriminability, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::rankstats::{correlation_matrix, pairwise_tau, CorrelationMatrix};
use crate::resample::{bootstrap_cad, bootstrap_cbrc, bootstrap_ds, Axis, IntervalEstimate, ResampleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BqsWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for BqsWeights {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.4,
        }
    }
}

impl BqsWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        if [alpha, beta, gamma].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("weights must be nonnegative, got {w}")));
        }
        Ok(w)
    }
}

impl fmt::Display for BqsWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.alpha, self.beta, self.gamma)
    }
}

impl FromStr for BqsWeights {
    type Err = Error;

    /// Parses `alpha,beta,gamma`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("weights `{s}` are not numbers")))?;
        match parts[..] {
            [a, b, c] => Self::new(a, b, c),
            _ => Err(Error::InvalidParameter(format!("expected three weights, got `{s}`"))),
        }
    }
}

/// CBRC mapped from [-1, 1] to [0, 1].
pub fn normalize_cbrc(cbrc: f64) -> f64 {
    (cbrc + 1.0) / 2.0
}

/// `alpha * (cbrc + 1) / 2 + beta * ds + gamma * cad`. DS is used as is,
/// so the score can exceed 1 when DS does.
pub fn bqs(cbrc: f64, ds: f64, cad: f64, weights: BqsWeights) -> f64 {
    weights.alpha * normalize_cbrc(cbrc) + weights.beta * ds + weights.gamma * cad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCad {
    pub family: String,
    pub raw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RowIntervals {
    pub cbrc: Option<IntervalEstimate>,
    pub ds: Option<IntervalEstimate>,
    pub cad: Option<IntervalEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub benchmark: BenchmarkId,
    pub domain: Option<String>,
    pub cbrc: Option<f64>,
    pub cbrc_normalized: Option<f64>,
    pub ds: Option<f64>,
    /// Lowest and highest model score, in percent.
    pub score_min: Option<f64>,
    pub score_max: Option<f64>,
    pub cad_raw: Option<f64>,
    pub cad: Option<f64>,
    pub bqs: Option<f64>,
    pub families: Vec<FamilyCad>,
    pub intervals: Option<RowIntervals>,
    pub diagnostics: Vec<String>,
}

impl BenchmarkRow {
    fn empty(benchmark: BenchmarkId, domain: Option<String>) -> Self {
        Self {
            benchmark,
            domain,
            cbrc: None,
            cbrc_normalized: None,
            ds: None,
            score_min: None,
            score_max: None,
            cad_raw: None,
            cad: None,
            bqs: None,
            families: Vec::new(),
            intervals: None,
            diagnostics: Vec::new(),
        }
    }

    fn finish(&mut self, weights: BqsWeights) {
        self.cbrc_normalized = self.cbrc.map(normalize_cbrc);
        if let (Some(c), Some(d), Some(a)) = (self.cbrc, self.ds, self.cad) {
            let score = bqs(c, d, a, weights);
            if score > 1.0 {
                self.diagnostics
                    .push(format!("BQS {score:.4} exceeds 1 because DS is {d:.4}"));
            }
            self.bqs = Some(score);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCorrelations {
    pub domain: String,
    pub matrix: CorrelationMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub lambda: f64,
    pub epsilon: f64,
    pub weights: BqsWeights,
    /// Models the metrics were computed over.
    pub models: Vec<ModelId>,
    /// Held-out models present in the data and left out of every metric.
    pub excluded: Vec<ModelId>,
    pub families: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub meta: ReportMeta,
    pub rows: Vec<BenchmarkRow>,
    pub correlations: Vec<DomainCorrelations>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalOptions {
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub lambda: f64,
    pub epsilon: f64,
    pub weights: BqsWeights,
    pub intervals: Option<IntervalOptions>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            weights: BqsWeights::default(),
            intervals: None,
        }
    }
}

const NOTES: [&str; 5] = [
    "correlations use the models both benchmarks have scores for (pairwise deletion)",
    "CAD pools inversions and comparisons over all families; instances without a valid pair add nothing",
    "intervals are 95% percentile bootstrap; models are resampled for CBRC and DS, instances for CAD",
    "stability subsamples are drawn without replacement",
    "DS is not clamped before entering BQS",
];

/// Benchmarks in domain order, then any others in identifier order.
fn benchmark_order(config: &EvalConfig, present: impl Iterator<Item = BenchmarkId>) -> Vec<BenchmarkId> {
    let mut out: Vec<BenchmarkId> = config
        .domains
        .iter()
        .flat_map(|d| d.benchmarks().iter().cloned())
        .collect();
    let listed: BTreeSet<BenchmarkId> = out.iter().cloned().collect();
    let rest: BTreeSet<BenchmarkId> = present.filter(|b| !listed.contains(b)).collect();
    out.extend(rest);
    out
}

fn build_row(
    benchmark: &BenchmarkId,
    matrix: &ScoreMatrix,
    store: Option<&OutcomeStore>,
    config: &EvalConfig,
    models: &[ModelId],
    options: &ReportOptions,
) -> BenchmarkRow {
    let domain = config.domain_of(benchmark);
    let mut row = BenchmarkRow::empty(benchmark.clone(), domain.map(|d| d.name().to_owned()));
    let has_store = store.is_some_and(|s| s.benchmark(benchmark).is_ok());
    if matrix.column(benchmark).is_none() && !has_store {
        row.diagnostics.push("no outcomes for this benchmark".into());
        return row;
    }
    let avail = matrix.available(benchmark, models);
    let scores = matrix.scores_for(benchmark, &avail).unwrap_or_default();
    if scores.is_empty() {
        row.diagnostics.push("no model scores for this benchmark".into());
    } else {
        row.score_min = Some(scores.iter().copied().fold(f64::INFINITY, f64::min) * 100.0);
        row.score_max = Some(scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) * 100.0);
    }
    match discriminability(matrix, benchmark, &avail, options.epsilon) {
        Ok(v) => row.ds = Some(v),
        Err(e) => row.diagnostics.push(format!("DS: {e}")),
    }

    match domain {
        None => row
            .diagnostics
            .push("CBRC: benchmark is not assigned to a domain".into()),
        Some(d) => {
            let mut taus = Vec::new();
            for peer in d.benchmarks().iter().filter(|p| *p != benchmark) {
                match pairwise_tau(matrix, benchmark, peer, models) {
                    Ok(t) => taus.push(t),
                    Err(e) => row.diagnostics.push(format!("CBRC: peer `{peer}` skipped: {e}")),
                }
            }
            if taus.is_empty() {
                row.diagnostics.push("CBRC: no usable peer".into());
            } else {
                row.cbrc = Some(taus.iter().sum::<f64>() / taus.len() as f64);
            }
        }
    }

    match store {
        Some(s) if has_store => {
            match count_inversions(s, benchmark, &config.families).and_then(|t| cad(&t, options.lambda)) {
                Ok(c) => {
                    row.cad_raw = Some(c.raw);
                    row.cad = Some(c.score);
                }
                Err(e) => row.diagnostics.push(format!("CAD: {e}")),
            }
            match cad_by_family(s, benchmark, &config.families, options.lambda) {
                Ok((fams, warnings)) => {
                    row.families = fams
                        .into_iter()
                        .map(|(family, c)| FamilyCad {
                            family,
                            raw: c.raw,
                            score: c.score,
                        })
                        .collect();
                    row.diagnostics
                        .extend(warnings.into_iter().map(|w| format!("CAD: {w}")));
                }
                Err(e) => row.diagnostics.push(format!("CAD: {e}")),
            }
        }
        _ => row.diagnostics.push("CAD: needs per-instance outcomes".into()),
    }

    if let Some(iv) = options.intervals {
        let mut intervals = RowIntervals::default();
        let mut note = |what: &str, r: Result<IntervalEstimate>| match r {
            Ok(v) => Some(v),
            Err(e) => {
                row.diagnostics.push(format!("{what} interval: {e}"));
                None
            }
        };
        let by_models = ResampleConfig::bootstrap(iv.iterations, iv.seed, Axis::Models);
        let by_instances = ResampleConfig::bootstrap(iv.iterations, iv.seed, Axis::Instances);
        if let (Some(d), Ok(cfg)) = (domain, &by_models) {
            intervals.cbrc = note("CBRC", bootstrap_cbrc(matrix, benchmark, d, models, cfg));
        }
        if let Ok(cfg) = &by_models {
            intervals.ds = note("DS", bootstrap_ds(matrix, benchmark, &avail, options.epsilon, cfg));
        }
        if let (Some(s), true, Ok(cfg)) = (store, has_store, &by_instances) {
            let r =
                instance_tallies(s, benchmark, &config.families).and_then(|t| bootstrap_cad(&t, options.lambda, cfg));
            intervals.cad = note("CAD", r);
        }
        row.intervals = Some(intervals);
    }
    row.finish(options.weights);
    row
}

fn check_options(options: &ReportOptions) -> Result<()> {
    BqsWeights::new(options.weights.alpha, options.weights.beta, options.weights.gamma)?;
    if !(options.lambda.is_finite() && options.lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {}",
            options.lambda
        )));
    }
    if !(options.epsilon.is_finite() && options.epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be nonnegative, got {}",
            options.epsilon
        )));
    }
    Ok(())
}

fn build(
    matrix: &ScoreMatrix,
    store: Option<&OutcomeStore>,
    config: &EvalConfig,
    options: &ReportOptions,
) -> Result<QualityReport> {
    check_options(options)?;
    config.ensure_no_heldout_in_families()?;
    let all_models = match store {
        Some(s) => s.models().to_vec(),
        None => matrix.models(),
    };
    let models = config.metric_models(&all_models);
    let excluded: Vec<ModelId> = all_models
        .iter()
        .filter(|m| config.heldout.contains(*m))
        .cloned()
        .collect();
    let present: Vec<BenchmarkId> = match store {
        Some(s) => s.benchmark_ids(),
        None => matrix.benchmarks().cloned().collect(),
    };
    let order = benchmark_order(config, present.into_iter());
    let rows: Vec<BenchmarkRow> = order
        .par_iter()
        .map(|b| build_row(b, matrix, store, config, &models, options))
        .collect();

    let mut notes: Vec<String> = NOTES.iter().map(|s| s.to_string()).collect();
    let mut correlations = Vec::new();
    for d in &config.domains {
        match correlation_matrix(d, matrix, &models) {
            Ok(m) => correlations.push(DomainCorrelations {
                domain: d.name().to_owned(),
                matrix: m,
            }),
            Err(e) => notes.push(format!("correlation matrix for `{}` unavailable: {e}", d.name())),
        }
    }
    Ok(QualityReport {
        meta: ReportMeta {
            lambda: options.lambda,
            epsilon: options.epsilon,
            weights: options.weights,
            models,
            excluded,
            families: config.families.iter().map(|f| f.name().to_owned()).collect(),
            notes,
        },
        rows,
        correlations,
    })
}

/// Full report from per-instance outcomes. Failures of individual metrics
/// are recorded on their row rather than aborting the report.
pub fn quality_report(store: &OutcomeStore, config: &EvalConfig, options: &ReportOptions) -> Result<QualityReport> {
    let matrix = ScoreMatrix::from_store(store);
    build(&matrix, Some(store), config, options)
}

/// Report from aggregate scores only; CAD columns stay empty.
pub fn score_report(matrix: &ScoreMatrix, config: &EvalConfig, options: &ReportOptions) -> Result<QualityReport> {
    build(matrix, None, config, options)
}

/// Component values supplied directly for one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub benchmark: BenchmarkId,
    pub domain: Option<String>,
    pub cbrc: f64,
    pub ds: f64,
    pub cad: f64,
}

impl QualityReport {
    /// Report whose rows carry the given components, in the given order.
    pub fn from_components(components: &[Components], weights: BqsWeights) -> Result<Self> {
        BqsWeights::new(weights.alpha, weights.beta, weights.gamma)?;
        let rows = components
            .iter()
            .map(|c| {
                let mut row = BenchmarkRow::empty(c.benchmark.clone(), c.domain.clone());
                row.cbrc = Some(c.cbrc);
                row.ds = Some(c.ds);
                row.cad = Some(c.cad);
                row.finish(weights);
                row
            })
            .collect();
        Ok(Self {
            meta: ReportMeta {
                lambda: DEFAULT_LAMBDA,
                epsilon: DEFAULT_EPSILON,
                weights,
                models: Vec::new(),
                excluded: Vec::new(),
                families: Vec::new(),
                notes: vec!["components supplied directly".into()],
            },
            rows,
            correlations: Vec::new(),
        })
    }

    pub fn row(&self, benchmark: &BenchmarkId) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| &r.benchmark == benchmark)
    }

    fn has_intervals(&self) -> bool {
        self.rows.iter().any(|r| r.intervals.is_some())
    }

    /// One line per benchmark with every metric column.
    pub fn metrics_table(&self) -> Table {
        let mut headers: Vec<&str> = vec![
            "benchmark",
            "domain",
            "cbrc",
            "cbrc_norm",
            "ds",
            "score_min",
            "score_max",
            "cad_raw",
            "cad",
            "bqs",
        ];
        let with_iv = self.has_intervals();
        if with_iv {
            for m in ["cbrc", "ds", "cad"] {
                headers.extend(match m {
                    "cbrc" => ["cbrc_lower", "cbrc_upper", "cbrc_sigma"],
                    "ds" => ["ds_lower", "ds_upper", "ds_sigma"],
                    _ => ["cad_lower", "cad_upper", "cad_sigma"],
                });
            }
        }
        headers.push("diagnostics");
        let mut t = Table::new(headers);
        for r in &self.rows {
            let mut cells = vec![
                r.benchmark.to_string(),
                r.domain.clone().unwrap_or_default(),
                fmt_opt(r.cbrc, 4),
                fmt_opt(r.cbrc_normalized, 4),
                fmt_opt(r.ds, 4),
                fmt_opt(r.score_min, 1),
                fmt_opt(r.score_max, 1),
                fmt_opt(r.cad_raw, 4),
                fmt_opt(r.cad, 4),
                fmt_opt(r.bqs, 4),
            ];
            if with_iv {
                let iv = r.intervals.clone().unwrap_or_default();
                for e in [iv.cbrc, iv.ds, iv.cad] {
                    cells.push(fmt_opt(e.map(|e| e.lower), 4));
                    cells.push(fmt_opt(e.map(|e| e.upper), 4));
                    cells.push(fmt_opt(e.map(|e| e.std_dev), 4));
                }
            }
            cells.push(r.diagnostics.join("; "));
            t.push(cells);
        }
        t
    }

    pub fn write_delimited<W: Write>(&self, out: W) -> Result<()> {
        self.metrics_table().write_csv(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned tables grouped by domain, in row order.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        let mut groups: Vec<(Option<String>, Vec<&BenchmarkRow>)> = Vec::new();
        for r in &self.rows {
            match groups.iter_mut().find(|g| g.0 == r.domain) {
                Some(g) => g.1.push(r),
                None => groups.push((r.domain.clone(), vec![r])),
            }
        }
        for (i, (domain, rows)) in groups.iter().enumerate() {
            if i > 0 {
                writeln!(out).map_err(io)?;
            }
            let title = domain.clone().unwrap_or_else(|| "(no domain)".into());
            let mut t = Table::new(["Benchmark", "CBRC", "DS", "Range", "CAD", "BQS"]).titled(title);
            for r in rows {
                let range = match (r.score_min, r.score_max) {
                    (Some(a), Some(b)) => format!("{a:.0}-{b:.0}"),
                    _ => String::new(),
                };
                t.push([
                    r.benchmark.to_string(),
                    fmt_opt(r.cbrc, 2),
                    fmt_opt(r.ds, 2),
                    range,
                    fmt_opt(r.cad, 2),
                    fmt_opt(r.bqs, 2),
                ]);
            }
            t.write_text(&mut out)?;
        }
        let diags: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.diagnostics.iter().map(move |d| format!("{}: {d}", r.benchmark)))
            .collect();
        if !diags.is_empty() {
            writeln!(out, "\nDiagnostics").map_err(io)?;
            for d in diags {
                writeln!(out, "  {d}").map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 text")
    }

    /// Per-family transformed CAD, one column per family.
    pub fn family_cad_table(&self) -> Table {
        let mut headers = vec!["benchmark".to_string()];
        headers.extend(self.meta.families.iter().cloned());
        let mut t = Table::new(headers);
        for r in &self.rows {
            let mut cells = vec![r.benchmark.to_string()];
            for f in &self.meta.families {
                cells.push(fmt_opt(r.families.iter().find(|c| &c.family == f).map(|c| c.score), 4));
            }
            t.push(cells);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bqs_examples() {
        let w = BqsWeights::default();
        assert!((bqs(0.52, 0.74, 0.85, w) - 0.79).abs() < 0.005);
        assert!((bqs(0.76, 0.79, 0.61, w) - 0.75).abs() < 0.006);
        assert!((bqs(0.0, 0.0, 0.0, w) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn weights_parse() {
        let w: BqsWeights = "0.5, 0.25,0.25".parse().unwrap();
        assert_eq!((w.alpha, w.beta, w.gamma), (0.5, 0.25, 0.25));
        assert!("0.5,0.5".parse::<BqsWeights>().is_err());
        assert!("-1,1,1".parse::<BqsWeights>().is_err());
        assert_eq!(
            BqsWeights::default().to_string().parse::<BqsWeights>().unwrap(),
            BqsWeights::default()
        );
    }

    #[test]
    fn oversized_ds_is_flagged() {
        let r = QualityReport::from_components(
            &[Components {
                benchmark: "b".into(),
                domain: None,
                cbrc: 1.0,
                ds: 1.2,
                cad: 1.0,
            }],
            BqsWeights::default(),
        )
        .unwrap();
        assert!(r.rows[0].bqs.unwrap() > 1.0);
        assert_eq!(r.rows[0].diagnostics.len(), 1);
    }

    #[test]
    fn json_round_trip_is_fixed_point() {
        let r = QualityReport::from_components(
            &[Components {
                benchmark: "b".into(),
                domain: Some("d".into()),
                cbrc: 0.1 + 0.2,
                ds: 1.0 / 3.0,
                cad: 0.7,
            }],
            BqsWeights::default(),
        )
        .unwrap();
        let a = r.to_json().unwrap();
        let back = QualityReport::from_json(&a).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), a);
    }
}
