use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{BenchmarkId, InstanceId, Loaded, ModelId};
use crate::error::{Error, Result};

/// One model's binary outcome on one benchmark instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub model: ModelId,
    pub benchmark: BenchmarkId,
    pub instance: InstanceId,
    #[serde(with = "correct_as_int")]
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u32>,
}

mod correct_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("correct must be 0 or 1, got {other}"))),
        }
    }
}

impl OutcomeRecord {
    pub fn new(
        model: impl Into<ModelId>,
        benchmark: impl Into<BenchmarkId>,
        instance: impl Into<InstanceId>,
        correct: bool,
    ) -> Self {
        Self {
            model: model.into(),
            benchmark: benchmark.into(),
            instance: instance.into(),
            correct,
            tokens: None,
        }
    }

    pub fn with_tokens(mut self, tokens: u32) -> Self {
        self.tokens = Some(tokens);
        self
    }
}

/// Outcomes of every model on one benchmark, stored densely as a
/// model-by-instance grid. `None` marks an instance the model was not
/// evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcomes {
    id: BenchmarkId,
    instances: Vec<InstanceId>,
    tokens: Vec<Option<u32>>,
    grid: Vec<Option<bool>>,
}

impl BenchmarkOutcomes {
    pub fn id(&self) -> &BenchmarkId {
        &self.id
    }

    pub fn instances(&self) -> &[InstanceId] {
        &self.instances
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn instance_index(&self, instance: &InstanceId) -> Option<usize> {
        self.instances.binary_search(instance).ok()
    }

    pub fn tokens(&self, instance: usize) -> Option<u32> {
        self.tokens[instance]
    }

    /// True when every instance carries a token length.
    pub fn has_tokens(&self) -> bool {
        self.tokens.iter().all(Option::is_some)
    }

    pub fn outcome(&self, model: usize, instance: usize) -> Option<bool> {
        self.grid[model * self.instances.len() + instance]
    }

    pub fn model_row(&self, model: usize) -> &[Option<bool>] {
        let n = self.instances.len();
        &self.grid[model * n..(model + 1) * n]
    }

    /// Number of instances the model has a record for.
    pub fn coverage(&self, model: usize) -> usize {
        self.model_row(model).iter().filter(|o| o.is_some()).count()
    }

    /// Mean correctness over the model's evaluated instances.
    pub fn accuracy(&self, model: usize) -> Option<f64> {
        let (correct, seen) = self
            .model_row(model)
            .iter()
            .flatten()
            .fold((0usize, 0usize), |(c, s), &ok| (c + usize::from(ok), s + 1));
        (seen > 0).then(|| correct as f64 / seen as f64)
    }

    /// Mean correctness over a multiset of instance indices. Indices the
    /// model was not evaluated on are skipped.
    pub fn accuracy_on(&self, model: usize, instances: &[usize]) -> Option<f64> {
        let row = self.model_row(model);
        let (correct, seen) = instances
            .iter()
            .filter_map(|&i| row[i])
            .fold((0usize, 0usize), |(c, s), ok| (c + usize::from(ok), s + 1));
        (seen > 0).then(|| correct as f64 / seen as f64)
    }
}

/// Immutable collection of binary outcome records indexed by benchmark,
/// model and instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeStore {
    models: Vec<ModelId>,
    benchmarks: Vec<BenchmarkOutcomes>,
}

type Cell = (bool, Option<u32>, usize);

impl OutcomeStore {
    pub fn from_records(records: impl IntoIterator<Item = OutcomeRecord>) -> Result<Self> {
        let mut builder = Builder::default();
        for (i, record) in records.into_iter().enumerate() {
            builder.push(record, i + 1)?;
        }
        builder.finish()
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn model_index(&self, model: &ModelId) -> Option<usize> {
        self.models.binary_search(model).ok()
    }

    /// Indices of the requested models; models unknown to the store are
    /// skipped.
    pub fn model_indices(&self, models: &[ModelId]) -> Vec<usize> {
        models.iter().filter_map(|m| self.model_index(m)).collect()
    }

    pub fn benchmarks(&self) -> impl Iterator<Item = &BenchmarkOutcomes> {
        self.benchmarks.iter()
    }

    pub fn benchmark_ids(&self) -> Vec<BenchmarkId> {
        self.benchmarks.iter().map(|b| b.id.clone()).collect()
    }

    pub fn benchmark(&self, id: &BenchmarkId) -> Result<&BenchmarkOutcomes> {
        self.benchmarks
            .binary_search_by(|b| b.id.cmp(id))
            .map(|i| &self.benchmarks[i])
            .map_err(|_| Error::UnknownBenchmark(id.to_string()))
    }

    pub fn record_count(&self) -> usize {
        self.benchmarks
            .iter()
            .map(|b| b.grid.iter().filter(|o| o.is_some()).count())
            .sum()
    }

    /// Models with at least one record on the benchmark.
    pub fn models_on(&self, benchmark: &BenchmarkOutcomes) -> Vec<ModelId> {
        (0..self.models.len())
            .filter(|&m| benchmark.coverage(m) > 0)
            .map(|m| self.models[m].clone())
            .collect()
    }

    /// Every record in (benchmark, instance, model) order.
    pub fn records(&self) -> impl Iterator<Item = OutcomeRecord> + '_ {
        self.benchmarks.iter().flat_map(move |b| {
            (0..b.instances.len()).flat_map(move |q| {
                (0..self.models.len()).filter_map(move |m| {
                    b.outcome(m, q).map(|correct| OutcomeRecord {
                        model: self.models[m].clone(),
                        benchmark: b.id.clone(),
                        instance: b.instances[q].clone(),
                        correct,
                        tokens: b.tokens[q],
                    })
                })
            })
        })
    }

    /// Per (benchmark, model) coverage as `(covered, total)` instance counts.
    pub fn coverage_summary(&self) -> Vec<(BenchmarkId, ModelId, usize, usize)> {
        let mut out = Vec::new();
        for b in &self.benchmarks {
            for (m, model) in self.models.iter().enumerate() {
                let covered = b.coverage(m);
                if covered > 0 {
                    out.push((b.id.clone(), model.clone(), covered, b.instances.len()));
                }
            }
        }
        out
    }

    /// Writes the store as line-delimited JSON records.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Default)]
struct Builder {
    cells: BTreeMap<(BenchmarkId, InstanceId, ModelId), Cell>,
}

impl Builder {
    fn push(&mut self, record: OutcomeRecord, line: usize) -> Result<()> {
        let key = (record.benchmark, record.instance, record.model);
        match self.cells.entry(key) {
            Entry::Occupied(e) => {
                let (b, q, m) = e.key();
                Err(Error::DuplicateRecord {
                    line,
                    model: m.to_string(),
                    benchmark: b.to_string(),
                    instance: q.to_string(),
                })
            }
            Entry::Vacant(e) => {
                e.insert((record.correct, record.tokens, line));
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<OutcomeStore> {
        let mut models: Vec<ModelId> = self.cells.keys().map(|(_, _, m)| m.clone()).collect();
        models.sort();
        models.dedup();

        let mut benchmarks: Vec<BenchmarkOutcomes> = Vec::new();
        let mut per_bench: BTreeMap<&BenchmarkId, BTreeMap<&InstanceId, Vec<(&ModelId, &Cell)>>> = BTreeMap::new();
        for ((b, q, m), cell) in &self.cells {
            per_bench.entry(b).or_default().entry(q).or_default().push((m, cell));
        }

        for (bench, instances) in per_bench {
            let n = instances.len();
            let mut grid = vec![None; models.len() * n];
            let mut ids = Vec::with_capacity(n);
            let mut tokens = Vec::with_capacity(n);
            for (q, (instance, cells)) in instances.into_iter().enumerate() {
                let mut tok: Option<u32> = None;
                for (model, &(correct, t, _line)) in cells {
                    let m = models.binary_search(model).expect("model indexed");
                    grid[m * n + q] = Some(correct);
                    match (tok, t) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(Error::TokenConflict {
                                benchmark: bench.to_string(),
                                instance: instance.to_string(),
                                first: a,
                                second: b,
                            })
                        }
                        (None, Some(b)) => tok = Some(b),
                        _ => {}
                    }
                }
                ids.push(instance.clone());
                tokens.push(tok);
            }
            benchmarks.push(BenchmarkOutcomes {
                id: bench.clone(),
                instances: ids,
                tokens,
                grid,
            });
        }

        Ok(OutcomeStore { models, benchmarks })
    }
}

const KNOWN_FIELDS: [&str; 5] = ["model", "benchmark", "instance", "correct", "tokens"];

fn required_str(obj: &Map<String, Value>, key: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(Error::Parse {
            line,
            message: format!("field `{key}` must be a non-empty string, got {other}"),
        }),
        None => Err(Error::Parse {
            line,
            message: format!("missing field `{key}`"),
        }),
    }
}

fn parse_line(text: &str, line: usize, warnings: &mut Vec<String>) -> Result<OutcomeRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(Error::Parse {
            line,
            message: "expected a JSON object".into(),
        });
    };
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            warnings.push(format!("line {line}: ignoring unknown field `{key}`"));
        }
    }
    let model = required_str(&obj, "model", line)?;
    let benchmark = required_str(&obj, "benchmark", line)?;
    let instance = required_str(&obj, "instance", line)?;
    let correct = match obj.get("correct") {
        Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
        Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
        Some(Value::Bool(b)) => *b,
        Some(other) => {
            return Err(Error::InvalidCorrect {
                line,
                value: other.to_string(),
            })
        }
        None => {
            return Err(Error::Parse {
                line,
                message: "missing field `correct`".into(),
            })
        }
    };
    let tokens = match obj.get("tokens") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => match n.as_u64().and_then(|t| u32::try_from(t).ok()) {
            Some(t) => Some(t),
            None => {
                return Err(Error::Parse {
                    line,
                    message: format!("`tokens` must be a nonnegative integer, got {n}"),
                })
            }
        },
        Some(other) => {
            return Err(Error::Parse {
                line,
                message: format!("`tokens` must be a nonnegative integer, got {other}"),
            })
        }
    };
    Ok(OutcomeRecord {
        model: model.into(),
        benchmark: benchmark.into(),
        instance: instance.into(),
        correct,
        tokens,
    })
}

/// Parses line-delimited outcome records. Blank lines are skipped; unknown
/// keys produce warnings.
pub fn read_outcomes<R: BufRead>(reader: R) -> Result<Loaded<OutcomeStore>> {
    let mut builder = Builder::default();
    let mut warnings = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let record = parse_line(&text, line_no, &mut warnings)?;
        builder.push(record, line_no)?;
    }
    Ok(Loaded {
        value: builder.finish()?,
        warnings,
    })
}

pub fn load_outcomes(path: &Path) -> Result<Loaded<OutcomeStore>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_outcomes(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Loaded<OutcomeStore>> {
        read_outcomes(text.as_bytes())
    }

    #[test]
    fn three_lines_three_models() {
        let text = r#"{"model":"a","benchmark":"b","instance":"q1","correct":1}
{"model":"c","benchmark":"b","instance":"q1","correct":0}
{"model":"d","benchmark":"b","instance":"q1","correct":1,"tokens":12}
"#;
        let store = load(text).unwrap().value;
        assert_eq!(store.record_count(), 3);
        assert_eq!(store.benchmarks().count(), 1);
        assert_eq!(store.models().len(), 3);
        let b = store.benchmark(&"b".into()).unwrap();
        assert_eq!(b.tokens(0), Some(12));
    }

    #[test]
    fn correct_two_names_the_line() {
        let text = "{\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"q1\",\"correct\":1}\n\
                    {\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"q2\",\"correct\":2}\n";
        match load(text) {
            Err(Error::InvalidCorrect { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fractional_correct_rejected() {
        let text = r#"{"model":"a","benchmark":"b","instance":"q1","correct":0.5}"#;
        assert!(matches!(load(text), Err(Error::InvalidCorrect { line: 1, .. })));
    }

    #[test]
    fn duplicate_triple_rejected() {
        let text = "{\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"q1\",\"correct\":1}\n\n\
                    {\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"q1\",\"correct\":0}\n";
        assert!(matches!(load(text), Err(Error::DuplicateRecord { line: 3, .. })));
    }

    #[test]
    fn unknown_field_is_a_warning() {
        let text = r#"{"model":"a","benchmark":"b","instance":"q1","correct":1,"judge":"x"}"#;
        let loaded = load(text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("judge"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"q1\",\"correct\":1}\n{oops\n";
        assert!(matches!(load(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn partial_coverage_is_tracked() {
        let store = OutcomeStore::from_records(vec![
            OutcomeRecord::new("a", "b", "q1", true),
            OutcomeRecord::new("a", "b", "q2", false),
            OutcomeRecord::new("c", "b", "q1", true),
        ])
        .unwrap();
        let b = store.benchmark(&"b".into()).unwrap();
        assert_eq!(b.coverage(0), 2);
        assert_eq!(b.coverage(1), 1);
        assert_eq!(b.outcome(1, 1), None);
        assert_eq!(b.accuracy(1), Some(1.0));
    }

    #[test]
    fn conflicting_tokens_rejected() {
        let r = OutcomeStore::from_records(vec![
            OutcomeRecord::new("a", "b", "q1", true).with_tokens(3),
            OutcomeRecord::new("c", "b", "q1", true).with_tokens(4),
        ]);
        assert!(matches!(r, Err(Error::TokenConflict { .. })));
    }
}
