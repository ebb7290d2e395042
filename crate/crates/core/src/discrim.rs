//! Benchmark discriminability and per-instance difficulty/discrimination.

use serde::{Deserialize, Serialize};

use crate::corpus::scores::{mean, population_std};
use crate::corpus::{BenchmarkId, InstanceId, ModelId, OutcomeStore, ScoreMatrix};
use crate::error::{Error, Result};

/// Minimum score gap (on the [0, 1] scale) for two models to count as
/// separated.
pub const DEFAULT_EPSILON: f64 = 0.02;

/// Discriminability of a score vector: coefficient of variation (population
/// standard deviation over mean) times the square root of the fraction of
/// model pairs whose scores differ by strictly more than `epsilon`.
pub fn discriminability_of_scores(scores: &[f64], epsilon: f64) -> Result<f64> {
    let m = scores.len();
    if m < 2 {
        return Err(Error::TooFewModels { needed: 2, got: m });
    }
    let avg = mean(scores);
    if avg <= 0.0 {
        return Err(Error::ZeroMean("<scores>".into()));
    }
    let mut separated = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            if (scores[i] - scores[j]).abs() > epsilon {
                separated += 1;
            }
        }
    }
    let total = m * (m - 1) / 2;
    Ok(population_std(scores) / avg * (separated as f64 / total as f64).sqrt())
}

/// Discriminability of `benchmark` over `models`.
pub fn discriminability(
    matrix: &ScoreMatrix,
    benchmark: &BenchmarkId,
    models: &[ModelId],
    epsilon: f64,
) -> Result<f64> {
    let scores = matrix.scores_for(benchmark, models)?;
    discriminability_of_scores(&scores, epsilon).map_err(|e| match e {
        Error::ZeroMean(_) => Error::ZeroMean(benchmark.to_string()),
        other => other,
    })
}

/// How an instance's contribution to discriminability is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contribution {
    /// Point-biserial correlation between the instance's correctness and each
    /// model's score on the remaining instances.
    #[default]
    ItemRest,
    /// Difficulty variance `p (1 - p)`.
    DifficultyVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub instance: InstanceId,
    /// Mean correctness over the models evaluated on this instance.
    pub difficulty: f64,
    /// Item-rest point-biserial correlation, in [-1, 1].
    pub discrimination: f64,
    pub tokens: Option<u32>,
    /// Number of models evaluated on the instance.
    pub evaluated: usize,
    /// True when the correlation was undefined (zero variance) and set to 0.
    pub degenerate: bool,
}

impl InstanceStats {
    pub fn contribution(&self, measure: Contribution) -> f64 {
        match measure {
            Contribution::ItemRest => self.discrimination,
            Contribution::DifficultyVariance => self.difficulty * (1.0 - self.difficulty),
        }
    }
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-instance difficulty and item-rest discrimination over `models`.
///
/// A model's rest score on instance `q` is its accuracy over its other
/// evaluated instances. Models with no other evaluated instance are left
/// out of that instance's correlation.
pub fn instance_stats(store: &OutcomeStore, benchmark: &BenchmarkId, models: &[ModelId]) -> Result<Vec<InstanceStats>> {
    let bench = store.benchmark(benchmark)?;
    let idx = store.model_indices(models);
    if idx.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: idx.len(),
        });
    }
    let totals: Vec<(usize, usize)> = idx
        .iter()
        .map(|&m| {
            bench
                .model_row(m)
                .iter()
                .flatten()
                .fold((0, 0), |(c, s), &ok| (c + usize::from(ok), s + 1))
        })
        .collect();

    let mut out = Vec::with_capacity(bench.instance_count());
    let mut item = Vec::with_capacity(idx.len());
    let mut rest = Vec::with_capacity(idx.len());
    for q in 0..bench.instance_count() {
        item.clear();
        rest.clear();
        let (mut correct, mut evaluated) = (0usize, 0usize);
        for (k, &m) in idx.iter().enumerate() {
            let Some(ok) = bench.outcome(m, q) else { continue };
            evaluated += 1;
            correct += usize::from(ok);
            let (c, s) = totals[k];
            if s > 1 {
                item.push(f64::from(u8::from(ok)));
                rest.push((c - usize::from(ok)) as f64 / (s - 1) as f64);
            }
        }
        let difficulty = if evaluated > 0 {
            correct as f64 / evaluated as f64
        } else {
            0.0
        };
        let r = if item.len() >= 2 { pearson(&item, &rest) } else { None };
        out.push(InstanceStats {
            instance: bench.instances()[q].clone(),
            difficulty,
            discrimination: r.unwrap_or(0.0),
            tokens: bench.tokens(q),
            evaluated,
            degenerate: r.is_none(),
        });
    }
    Ok(out)
}

/// Writes instance statistics as a delimited audit table.
pub fn write_instance_stats<W: std::io::Write>(stats: &[InstanceStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "instance",
        "difficulty",
        "discrimination",
        "tokens",
        "evaluated",
        "degenerate",
    ])?;
    for s in stats {
        w.write_record([
            s.instance.to_string(),
            format!("{:.6}", s.difficulty),
            format!("{:.6}", s.discrimination),
            s.tokens.map(|t| t.to_string()).unwrap_or_default(),
            s.evaluated.to_string(),
            s.degenerate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
