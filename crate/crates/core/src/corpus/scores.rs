use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkId, ModelId, OutcomeStore};
use crate::error::{Error, Result};

/// Aggregate accuracy per (benchmark, model), as fractions in [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    entries: BTreeMap<BenchmarkId, BTreeMap<ModelId, f64>>,
}

impl ScoreMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, benchmark: BenchmarkId, model: ModelId, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                benchmark: benchmark.to_string(),
                model: model.to_string(),
                value: score,
            });
        }
        self.entries.entry(benchmark).or_default().insert(model, score);
        Ok(())
    }

    /// Per-benchmark accuracy from binary outcomes. Models with no record on
    /// a benchmark get no entry for it.
    pub fn from_store(store: &OutcomeStore) -> Self {
        let mut entries = BTreeMap::new();
        for bench in store.benchmarks() {
            let column: BTreeMap<ModelId, f64> = store
                .models()
                .iter()
                .enumerate()
                .filter_map(|(m, id)| bench.accuracy(m).map(|acc| (id.clone(), acc)))
                .collect();
            entries.insert(bench.id().clone(), column);
        }
        Self { entries }
    }

    pub fn get(&self, benchmark: &BenchmarkId, model: &ModelId) -> Option<f64> {
        self.entries.get(benchmark)?.get(model).copied()
    }

    pub fn benchmarks(&self) -> impl Iterator<Item = &BenchmarkId> {
        self.entries.keys()
    }

    pub fn column(&self, benchmark: &BenchmarkId) -> Option<&BTreeMap<ModelId, f64>> {
        self.entries.get(benchmark)
    }

    /// All models appearing anywhere in the matrix, sorted.
    pub fn models(&self) -> Vec<ModelId> {
        let mut out: Vec<ModelId> = self.entries.values().flat_map(|c| c.keys().cloned()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Scores of `models` on `benchmark`, in the order given.
    pub fn scores_for(&self, benchmark: &BenchmarkId, models: &[ModelId]) -> Result<Vec<f64>> {
        let column = self
            .entries
            .get(benchmark)
            .ok_or_else(|| Error::UnknownBenchmark(benchmark.to_string()))?;
        models
            .iter()
            .map(|m| {
                column.get(m).copied().ok_or_else(|| Error::MissingEntry {
                    benchmark: benchmark.to_string(),
                    model: m.to_string(),
                })
            })
            .collect()
    }

    /// Intersection of `models` with the models scored on `benchmark`.
    pub fn available(&self, benchmark: &BenchmarkId, models: &[ModelId]) -> Vec<ModelId> {
        match self.entries.get(benchmark) {
            Some(column) => models.iter().filter(|m| column.contains_key(*m)).cloned().collect(),
            None => Vec::new(),
        }
    }

    pub fn mean(&self, benchmark: &BenchmarkId, models: &[ModelId]) -> Result<f64> {
        let s = self.scores_for(benchmark, models)?;
        Ok(mean(&s))
    }

    /// Population standard deviation of the models' scores.
    pub fn std_dev(&self, benchmark: &BenchmarkId, models: &[ModelId]) -> Result<f64> {
        let s = self.scores_for(benchmark, models)?;
        Ok(population_std(&s))
    }

    /// Reads a delimited percent table: a `benchmark` column followed by one
    /// column per model. Empty cells mean "not evaluated". Values are
    /// divided by 100.
    pub fn read_percent_table<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                message: "percent table needs a benchmark column and at least one model".into(),
            });
        }
        let models: Vec<ModelId> = headers.iter().skip(1).map(ModelId::from).collect();
        let mut matrix = Self::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let bench = BenchmarkId::from(row.get(0).unwrap_or_default());
            for (model, cell) in models.iter().zip(row.iter().skip(1)) {
                if cell.is_empty() {
                    continue;
                }
                let pct: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{cell}` is not a number"),
                })?;
                if !(0.0..=100.0).contains(&pct) {
                    return Err(Error::ScoreOutOfRange {
                        benchmark: bench.to_string(),
                        model: model.to_string(),
                        value: pct,
                    });
                }
                matrix.insert(bench.clone(), model.clone(), pct / 100.0)?;
            }
        }
        Ok(matrix)
    }

    pub fn load_percent_table(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_percent_table(file)
    }

    /// Writes the matrix in the percent-table layout read by
    /// [`ScoreMatrix::read_percent_table`].
    pub fn write_percent_table<W: Write>(&self, out: W) -> Result<()> {
        let models = self.models();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["benchmark".to_string()];
        header.extend(models.iter().map(|m| m.to_string()));
        w.write_record(&header)?;
        for (bench, column) in &self.entries {
            let mut row = vec![bench.to_string()];
            row.extend(models.iter().map(|m| {
                column
                    .get(m)
                    .map(|v| format!("{}", round_to(v * 100.0, 10)))
                    .unwrap_or_default()
            }));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (v * p).round() / p
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::OutcomeRecord;

    #[test]
    fn three_of_four_is_point_seven_five() {
        let store = OutcomeStore::from_records(vec![
            OutcomeRecord::new("m", "b", "1", true),
            OutcomeRecord::new("m", "b", "2", true),
            OutcomeRecord::new("m", "b", "3", false),
            OutcomeRecord::new("m", "b", "4", true),
            OutcomeRecord::new("perfect", "b", "1", true),
            OutcomeRecord::new("perfect", "b", "2", true),
        ])
        .unwrap();
        let sm = ScoreMatrix::from_store(&store);
        assert_eq!(sm.get(&"b".into(), &"m".into()), Some(0.75));
        assert_eq!(sm.get(&"b".into(), &"perfect".into()), Some(1.0));
    }

    #[test]
    fn zero_coverage_is_absent_not_zero() {
        let store = OutcomeStore::from_records(vec![
            OutcomeRecord::new("a", "b1", "1", true),
            OutcomeRecord::new("c", "b2", "1", false),
        ])
        .unwrap();
        let sm = ScoreMatrix::from_store(&store);
        assert_eq!(sm.get(&"b1".into(), &"c".into()), None);
        assert_eq!(sm.get(&"b2".into(), &"c".into()), Some(0.0));
    }

    #[test]
    fn percent_table_is_scaled() {
        let text = "benchmark,A,B\nX,50,12.5\nY,,100\n";
        let sm = ScoreMatrix::read_percent_table(text.as_bytes()).unwrap();
        assert_eq!(sm.get(&"X".into(), &"B".into()), Some(0.125));
        assert_eq!(sm.get(&"Y".into(), &"A".into()), None);
        let mut out = Vec::new();
        sm.write_percent_table(&mut out).unwrap();
        let again = ScoreMatrix::read_percent_table(out.as_slice()).unwrap();
        assert_eq!(sm, again);
    }

    #[test]
    fn percent_out_of_range_rejected() {
        let text = "benchmark,A\nX,101\n";
        assert!(matches!(
            ScoreMatrix::read_percent_table(text.as_bytes()),
            Err(Error::ScoreOutOfRange { .. })
        ));
    }
}
