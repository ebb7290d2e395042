//! Synthetic outcome corpora with known structure.
//!
//! Every instance draws a difficulty `d`. Each family draws one threshold
//! `u ~ U(0, 1)` per instance shared by its members, and each held-out model
//! its own; a model of ability `a` is correct when
//! `logistic((a - d) / 0.1) > u`. Sharing `u` within a family makes its
//! outcomes monotone in ability, so without noise or planting no family
//! ever shows an inversion.
//!
//! Planted instances reverse every family: a cut `c` in `1..k` is drawn per
//! family, the `c` strongest members answer wrong and the rest right.
//! Held-out models keep the normal rule. Finally each outcome is flipped
//! independently with probability `noise`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    BenchmarkId, DomainGroup, EvalConfig, FamilyHierarchy, InstanceId, ModelId, OutcomeRecord, OutcomeStore,
};
use crate::error::{Error, Result};
use crate::resample::stream_rng;

/// Width of the logistic link on `ability - difficulty`.
pub const LINK_SCALE: f64 = 0.1;
const TOKEN_RANGE: (u32, u32) = (20, 2000);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub id: ModelId,
    pub ability: f64,
}

impl SynthModel {
    pub fn new(id: impl Into<ModelId>, ability: f64) -> Self {
        Self { id: id.into(), ability }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFamily {
    pub name: String,
    /// Strongest first; abilities strictly decreasing.
    pub members: Vec<SynthModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBenchmark {
    pub name: BenchmarkId,
    pub instances: usize,
    /// Difficulties are uniform on `center ± spread`, clamped to [0, 1].
    pub difficulty_center: f64,
    pub difficulty_spread: f64,
    pub domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub families: Vec<SynthFamily>,
    /// Models outside every family, marked held-out in [`SynthSpec::config`].
    pub heldout: Vec<SynthModel>,
    pub benchmarks: Vec<SynthBenchmark>,
    pub planted_inconsistent_fraction: f64,
    pub noise: f64,
    pub seed: u64,
    pub tokens: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability of a correct answer on a normal instance of difficulty `d`
/// before noise.
pub fn correct_probability(ability: f64, difficulty: f64) -> f64 {
    logistic((ability - difficulty) / LINK_SCALE)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..=1.0).contains(&self.planted_inconsistent_fraction) {
            return bad(format!(
                "planted fraction {} outside [0, 1]",
                self.planted_inconsistent_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1]", self.noise));
        }
        let mut seen = BTreeSet::new();
        for f in &self.families {
            if f.members.len() < 2 {
                return bad(format!("family `{}` needs at least two members", f.name));
            }
            if f.members.windows(2).any(|w| w[0].ability <= w[1].ability) {
                return bad(format!("abilities in family `{}` must strictly decrease", f.name));
            }
        }
        for m in self.models() {
            if !(0.0..=1.0).contains(&m.ability) {
                return bad(format!("ability of `{}` outside [0, 1]", m.id));
            }
            if !seen.insert(&m.id) {
                return bad(format!("model `{}` listed twice", m.id));
            }
        }
        let mut names = BTreeSet::new();
        for b in &self.benchmarks {
            if b.instances == 0 {
                return bad(format!("benchmark `{}` has no instances", b.name));
            }
            if !names.insert(&b.name) {
                return bad(format!("benchmark `{}` listed twice", b.name));
            }
        }
        Ok(())
    }

    /// Family members in family order, then held-out models.
    pub fn models(&self) -> impl Iterator<Item = &SynthModel> {
        self.families.iter().flat_map(|f| &f.members).chain(&self.heldout)
    }

    /// Families, domains (benchmarks grouped by their `domain` in first-seen
    /// order) and held-out models of the corpus.
    pub fn config(&self) -> Result<EvalConfig> {
        let families = self
            .families
            .iter()
            .map(|f| FamilyHierarchy::new(f.name.clone(), f.members.iter().map(|m| m.id.clone()).collect()))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<String> = Vec::new();
        let mut grouped: BTreeMap<String, Vec<BenchmarkId>> = BTreeMap::new();
        for b in &self.benchmarks {
            if let Some(d) = &b.domain {
                if !grouped.contains_key(d) {
                    order.push(d.clone());
                }
                grouped.entry(d.clone()).or_default().push(b.name.clone());
            }
        }
        let domains = order
            .into_iter()
            .map(|d| {
                let benches = grouped.remove(&d).unwrap_or_default();
                DomainGroup::new(d, benches)
            })
            .collect::<Result<Vec<_>>>()?;
        EvalConfig::new(families, domains, self.heldout.iter().map(|m| m.id.clone()).collect())
    }

    /// Eleven family models in four families of 3, 2, 3 and 3, three
    /// held-out models, and fifteen benchmarks in three domains of five.
    pub fn reference_setup(instances: usize, seed: u64) -> Self {
        let fam = |name: &str, abilities: &[f64]| SynthFamily {
            name: name.to_owned(),
            members: abilities
                .iter()
                .enumerate()
                .map(|(i, &a)| SynthModel::new(format!("{name}-{}", i + 1), a))
                .collect(),
        };
        let families = vec![
            fam("alpha", &[0.78, 0.70, 0.52]),
            fam("beta", &[0.62, 0.45]),
            fam("gamma", &[0.74, 0.58, 0.40]),
            fam("delta", &[0.66, 0.49, 0.34]),
        ];
        let heldout = vec![
            SynthModel::new("held-1", 0.60),
            SynthModel::new("held-2", 0.47),
            SynthModel::new("held-3", 0.30),
        ];
        let domains = ["math", "reasoning", "knowledge"];
        let benchmarks = (0..15)
            .map(|i| SynthBenchmark {
                name: BenchmarkId::new(format!("bench-{:02}", i + 1)),
                instances,
                difficulty_center: 0.35 + 0.3 * ((i % 5) as f64 / 4.0),
                difficulty_spread: 0.35,
                domain: Some(domains[i / 5].to_owned()),
            })
            .collect();
        Self {
            families,
            heldout,
            benchmarks,
            planted_inconsistent_fraction: 0.0,
            noise: 0.0,
            seed,
            tokens: true,
        }
    }
}

/// A generated store with the identifiers of its planted instances.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub store: OutcomeStore,
    pub planted: BTreeMap<BenchmarkId, BTreeSet<InstanceId>>,
}

impl SynthCorpus {
    pub fn is_planted(&self, benchmark: &BenchmarkId, instance: &InstanceId) -> bool {
        self.planted.get(benchmark).is_some_and(|s| s.contains(instance))
    }
}

fn generate_benchmark(spec: &SynthSpec, k: usize, out: &mut Vec<OutcomeRecord>) -> BTreeSet<InstanceId> {
    let bench = &spec.benchmarks[k];
    let mut rng = stream_rng(spec.seed, k as u64);
    let n = bench.instances;
    let width = n.saturating_sub(1).to_string().len();
    let planted_count = (spec.planted_inconsistent_fraction * n as f64).round() as usize;
    let planted_idx: BTreeSet<usize> = index::sample(&mut rng, n, planted_count).into_iter().collect();
    let lo = (bench.difficulty_center - bench.difficulty_spread).clamp(0.0, 1.0);
    let hi = (bench.difficulty_center + bench.difficulty_spread).clamp(0.0, 1.0);

    let mut planted = BTreeSet::new();
    for q in 0..n {
        let instance = InstanceId::new(format!("{q:0width$}"));
        let d = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let tokens = spec.tokens.then(|| rng.random_range(TOKEN_RANGE.0..=TOKEN_RANGE.1));
        let is_planted = planted_idx.contains(&q);
        if is_planted {
            planted.insert(instance.clone());
        }

        let mut emit = |model: &SynthModel, correct: bool, rng: &mut rand_chacha::ChaCha8Rng| {
            let flipped = spec.noise > 0.0 && rng.random::<f64>() < spec.noise;
            let mut rec = OutcomeRecord::new(
                model.id.clone(),
                bench.name.clone(),
                instance.clone(),
                correct ^ flipped,
            );
            if let Some(t) = tokens {
                rec = rec.with_tokens(t);
            }
            out.push(rec);
        };
        for fam in &spec.families {
            let u: f64 = rng.random();
            let cut = if is_planted {
                rng.random_range(1..fam.members.len())
            } else {
                0
            };
            for (pos, m) in fam.members.iter().enumerate() {
                let correct = if is_planted {
                    pos >= cut
                } else {
                    correct_probability(m.ability, d) > u
                };
                emit(m, correct, &mut rng);
            }
        }
        for m in &spec.heldout {
            let u: f64 = rng.random();
            emit(m, correct_probability(m.ability, d) > u, &mut rng);
        }
    }
    planted
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut records = Vec::new();
    let mut planted = BTreeMap::new();
    for (k, b) in spec.benchmarks.iter().enumerate() {
        planted.insert(b.name.clone(), generate_benchmark(spec, k, &mut records));
    }
    Ok(SynthCorpus {
        store: OutcomeStore::from_records(records)?,
        planted,
    })
}

/// Expected accuracy of a model on the normal (unplanted) instances of
/// `bench`, including the noise flips.
pub fn expected_accuracy(ability: f64, bench: &SynthBenchmark, noise: f64) -> f64 {
    let lo = (bench.difficulty_center - bench.difficulty_spread).clamp(0.0, 1.0);
    let hi = (bench.difficulty_center + bench.difficulty_spread).clamp(0.0, 1.0);
    let p = if hi > lo {
        let steps = 4000;
        let h = (hi - lo) / steps as f64;
        (0..steps)
            .map(|i| correct_probability(ability, lo + (i as f64 + 0.5) * h))
            .sum::<f64>()
            / steps as f64
    } else {
        correct_probability(ability, lo)
    };
    p * (1.0 - noise) + (1.0 - p) * noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::count_inversions;

    fn two_member(planted: f64, noise: f64) -> SynthSpec {
        SynthSpec {
            families: vec![SynthFamily {
                name: "f".into(),
                members: vec![SynthModel::new("big", 0.9), SynthModel::new("small", 0.5)],
            }],
            heldout: vec![],
            benchmarks: vec![SynthBenchmark {
                name: "b".into(),
                instances: 200,
                difficulty_center: 0.6,
                difficulty_spread: 0.4,
                domain: None,
            }],
            planted_inconsistent_fraction: planted,
            noise,
            seed: 5,
            tokens: false,
        }
    }

    #[test]
    fn clean_corpus_has_no_inversions() {
        let spec = two_member(0.0, 0.0);
        let corpus = generate(&spec).unwrap();
        let cfg = spec.config().unwrap();
        let t = count_inversions(&corpus.store, &"b".into(), &cfg.families).unwrap();
        assert_eq!(t.inversions, 0);
    }

    #[test]
    fn fully_planted_pair_is_always_inverted() {
        let spec = two_member(1.0, 0.0);
        let corpus = generate(&spec).unwrap();
        let cfg = spec.config().unwrap();
        let t = count_inversions(&corpus.store, &"b".into(), &cfg.families).unwrap();
        assert_eq!(t.raw_rate(), Some(1.0));
        assert_eq!(corpus.planted[&BenchmarkId::from("b")].len(), 200);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec::reference_setup(50, 11);
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate(&spec).unwrap().store.write_jsonl(&mut a).unwrap();
        generate(&spec).unwrap().store.write_jsonl(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_decreasing_abilities_rejected() {
        let mut spec = two_member(0.0, 0.0);
        spec.families[0].members[1].ability = 0.9;
        assert!(generate(&spec).is_err());
        let mut spec = two_member(0.0, 1.5);
        spec.noise = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn reference_setup_config_shape() {
        let cfg = SynthSpec::reference_setup(10, 0).config().unwrap();
        let sizes: Vec<usize> = cfg.families.iter().map(|f| f.members().len()).collect();
        assert_eq!(sizes, [3, 2, 3, 3]);
        assert_eq!(cfg.domains.len(), 3);
        assert_eq!(cfg.heldout.len(), 3);
    }
}
