//! Instance selection strategies, their fidelity against the full
//! benchmark, parameter sweeps and held-out validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{instance_tallies, CadScore, DEFAULT_LAMBDA};
use crate::corpus::scores::mean;
use crate::corpus::{
    BenchmarkId, DomainGroup, EvalConfig, FamilyHierarchy, InstanceId, ModelId, OutcomeStore, ScoreMatrix,
};
use crate::discrim::{discriminability_of_scores, instance_stats, Contribution, InstanceStats, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::rankstats::{cbrc, tau_b, Ranking};
use crate::resample::{stability, stream_rng, ResampleConfig};

pub const DEFAULT_CAD_THRESHOLD: f64 = 0.15;
pub const DEFAULT_RATIO: f64 = 0.35;
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.40, 0.15, 0.05, 0.01, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    CadDs,
    CadOnly,
    DsOnly,
    Random,
    HighAccuracy,
    LowAccuracy,
    MediumDifficulty,
    Longest,
    Shortest,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::CadDs,
        Strategy::CadOnly,
        Strategy::DsOnly,
        Strategy::Random,
        Strategy::HighAccuracy,
        Strategy::LowAccuracy,
        Strategy::MediumDifficulty,
        Strategy::Longest,
        Strategy::Shortest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CadDs => "cad_ds",
            Strategy::CadOnly => "cad_only",
            Strategy::DsOnly => "ds_only",
            Strategy::Random => "random",
            Strategy::HighAccuracy => "high_accuracy",
            Strategy::LowAccuracy => "low_accuracy",
            Strategy::MediumDifficulty => "medium_difficulty",
            Strategy::Longest => "longest",
            Strategy::Shortest => "shortest",
        }
    }

    pub fn uses_cad(self) -> bool {
        matches!(self, Strategy::CadDs | Strategy::CadOnly)
    }

    fn needs_tokens(self) -> bool {
        matches!(self, Strategy::Longest | Strategy::Shortest)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub strategy: Strategy,
    pub ratio: f64,
    pub cad_threshold: f64,
    pub lambda: f64,
    pub seed: Option<u64>,
    pub contribution: Contribution,
}

impl SelectionSpec {
    pub fn new(strategy: Strategy, ratio: f64) -> Self {
        Self {
            strategy,
            ratio,
            cad_threshold: DEFAULT_CAD_THRESHOLD,
            lambda: DEFAULT_LAMBDA,
            seed: None,
            contribution: Contribution::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.cad_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        if !(0.0..=1.0).contains(&self.cad_threshold) {
            return Err(Error::InvalidParameter(format!(
                "CAD threshold {} outside [0, 1]",
                self.cad_threshold
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.strategy == Strategy::Random && self.seed.is_none() {
            return Err(Error::InvalidParameter("random selection needs a seed".into()));
        }
        Ok(())
    }
}

/// Per-instance inputs of every strategy for one benchmark, computed once
/// and shared across specs.
#[derive(Debug, Clone)]
pub struct BenchmarkView {
    pub benchmark: BenchmarkId,
    /// Position of the benchmark in the store; mixes into random streams.
    pub ordinal: u64,
    pub models: Vec<ModelId>,
    pub stats: Vec<InstanceStats>,
    /// Pooled `(inversions, comparisons)` per instance.
    pub tallies: Vec<(u64, u64)>,
}

impl BenchmarkView {
    pub fn new(
        store: &OutcomeStore,
        benchmark: &BenchmarkId,
        families: &[FamilyHierarchy],
        models: &[ModelId],
    ) -> Result<Self> {
        let stats = instance_stats(store, benchmark, models)?;
        let t = instance_tallies(store, benchmark, families)?;
        let tallies = (0..t.instance_count()).map(|q| t.instance_totals(q)).collect();
        let ordinal = store.benchmarks().position(|b| b.id() == benchmark).unwrap_or_default() as u64;
        Ok(Self {
            benchmark: benchmark.clone(),
            ordinal,
            models: models.to_vec(),
            stats,
            tallies,
        })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Transformed CAD of instance `q`; `None` when it has no valid pair.
    pub fn instance_cad(&self, q: usize, lambda: f64) -> Option<f64> {
        let (i, c) = self.tallies[q];
        CadScore::from_counts(i, c, lambda).ok().map(|s| s.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub benchmark: BenchmarkId,
    pub spec: SelectionSpec,
    /// Model population the selection and its fidelity are computed over.
    pub models: Vec<ModelId>,
    /// Retained instances in identifier order.
    pub retained: Vec<InstanceId>,
    #[serde(skip)]
    pub retained_index: Vec<usize>,
    pub total: usize,
    /// Instances without any valid family pair, never chosen by CAD
    /// strategies.
    pub unscoreable: usize,
}

impl SelectionResult {
    pub fn fraction(&self) -> f64 {
        self.retained.len() as f64 / self.total as f64
    }
}

fn target_size(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n)
}

/// Sorts `candidates` by `key` descending; the stable sort keeps
/// identifier order among ties because indices follow identifier order.
fn top_by<F: Fn(usize) -> f64>(mut candidates: Vec<usize>, key: F, take: usize) -> Vec<usize> {
    candidates.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    candidates.truncate(take);
    candidates
}

pub fn select_view(view: &BenchmarkView, spec: &SelectionSpec) -> Result<SelectionResult> {
    spec.validate()?;
    let n = view.len();
    if n == 0 {
        return Err(Error::EmptySelection(view.benchmark.to_string()));
    }
    if spec.strategy.needs_tokens() && view.stats.iter().any(|s| s.tokens.is_none()) {
        return Err(Error::MissingTokens(view.benchmark.to_string()));
    }
    let target = target_size(spec.ratio, n);
    let all: Vec<usize> = (0..n).collect();
    let contribution = |q: usize| view.stats[q].contribution(spec.contribution);
    let difficulty = |q: usize| view.stats[q].difficulty;
    let tokens = |q: usize| f64::from(view.stats[q].tokens.unwrap_or_default());
    let survivors = || -> Vec<usize> {
        all.iter()
            .copied()
            .filter(|&q| {
                view.instance_cad(q, spec.lambda)
                    .is_some_and(|s| s > spec.cad_threshold)
            })
            .collect()
    };

    let mut chosen = match spec.strategy {
        Strategy::CadDs => top_by(survivors(), contribution, target),
        Strategy::CadOnly => survivors(),
        Strategy::DsOnly => top_by(all, contribution, target),
        Strategy::Random => {
            let seed = spec.seed.expect("validated");
            let mut rng = stream_rng(seed, view.ordinal);
            index::sample(&mut rng, n, target).into_vec()
        }
        Strategy::HighAccuracy => top_by(all, difficulty, target),
        Strategy::LowAccuracy => top_by(all, |q| -difficulty(q), target),
        Strategy::MediumDifficulty => top_by(all, |q| -(difficulty(q) - 0.5).abs(), target),
        Strategy::Longest => top_by(all, tokens, target),
        Strategy::Shortest => top_by(all, |q| -tokens(q), target),
    };
    if chosen.is_empty() {
        return Err(Error::EmptySelection(view.benchmark.to_string()));
    }
    chosen.sort_unstable();
    let unscoreable = view.tallies.iter().filter(|t| t.1 == 0).count();
    Ok(SelectionResult {
        benchmark: view.benchmark.clone(),
        spec: *spec,
        models: view.models.clone(),
        retained: chosen.iter().map(|&q| view.stats[q].instance.clone()).collect(),
        retained_index: chosen,
        total: n,
        unscoreable,
    })
}

/// Selects instances of `benchmark` under `spec`. Difficulty and
/// discrimination use `models`; CAD uses `families`.
pub fn select(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    spec: &SelectionSpec,
    families: &[FamilyHierarchy],
    models: &[ModelId],
) -> Result<SelectionResult> {
    spec.validate()?;
    let view = BenchmarkView::new(store, benchmark, families, models)?;
    select_view(&view, spec)
}

/// Subsample size used for the stability column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilitySample {
    /// `round(f * |B|)` of the full benchmark, capped at the retained pool.
    /// Full and selective sets are then compared at equal subsample sizes.
    BenchmarkFraction(f64),
    /// `round(f * |pool|)` of the retained pool.
    PoolFraction(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityOptions {
    pub iterations: usize,
    pub seed: u64,
    pub sample: StabilitySample,
    pub epsilon: f64,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        Self {
            iterations: 100,
            seed: 0,
            sample: StabilitySample::BenchmarkFraction(0.15),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub rank_tau: f64,
    pub stability: f64,
    pub ds: f64,
}

/// Full and selective accuracies of `models`, skipping models without
/// records on the retained subset.
fn paired_scores(store: &OutcomeStore, result: &SelectionResult) -> Result<(Vec<f64>, Vec<f64>)> {
    let bench = store.benchmark(&result.benchmark)?;
    let mut full = Vec::new();
    let mut sel = Vec::new();
    for m in store.model_indices(&result.models) {
        if let (Some(f), Some(s)) = (bench.accuracy(m), bench.accuracy_on(m, &result.retained_index)) {
            full.push(f);
            sel.push(s);
        }
    }
    Ok((full, sel))
}

pub fn evaluate_selection(
    result: &SelectionResult,
    store: &OutcomeStore,
    options: &FidelityOptions,
) -> Result<Fidelity> {
    if result.retained_index.is_empty() {
        return Err(Error::EmptySelection(result.benchmark.to_string()));
    }
    let (full, sel) = paired_scores(store, result)?;
    let rank_tau = tau_b(&full, &sel)?;
    let ds = discriminability_of_scores(&sel, options.epsilon).map_err(|e| match e {
        Error::ZeroMean(_) => Error::ZeroMean(result.benchmark.to_string()),
        other => other,
    })?;
    let pool = result.retained_index.len();
    let size = match options.sample {
        StabilitySample::BenchmarkFraction(f) => (f * result.total as f64).round() as usize,
        StabilitySample::PoolFraction(f) => (f * pool as f64).round() as usize,
        StabilitySample::Count(c) => c,
    }
    .clamp(1, pool);
    let cfg = ResampleConfig::subsample(options.iterations, options.seed)?.with_sample_size(size);
    let stab = stability(
        store,
        &result.benchmark,
        Some(&result.retained_index),
        &result.models,
        1.0,
        &cfg,
    )?;
    Ok(Fidelity {
        rank_tau,
        stability: stab.value,
        ds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub retained_fraction: f64,
    pub rank_tau: f64,
    pub stability: f64,
    pub ds: f64,
}

fn views(
    store: &OutcomeStore,
    benchmarks: &[BenchmarkId],
    families: &[FamilyHierarchy],
    models: &[ModelId],
) -> Result<Vec<BenchmarkView>> {
    benchmarks
        .par_iter()
        .map(|b| BenchmarkView::new(store, b, families, models))
        .collect()
}

/// Mean fidelity over `views` for one spec.
fn averaged(
    store: &OutcomeStore,
    views: &[BenchmarkView],
    spec: &SelectionSpec,
    options: &FidelityOptions,
) -> Result<(f64, Fidelity)> {
    let per: Vec<(f64, Fidelity)> = views
        .par_iter()
        .map(|v| {
            let r = select_view(v, spec)?;
            Ok((r.fraction(), evaluate_selection(&r, store, options)?))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let sum = |f: &dyn Fn(&(f64, Fidelity)) -> f64| per.iter().map(f).sum::<f64>() / n;
    Ok((
        sum(&|p| p.0),
        Fidelity {
            rank_tau: sum(&|p| p.1.rank_tau),
            stability: sum(&|p| p.1.stability),
            ds: sum(&|p| p.1.ds),
        },
    ))
}

/// Fidelity at each selection ratio, averaged over `benchmarks`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_ratio(
    store: &OutcomeStore,
    benchmarks: &[BenchmarkId],
    ratios: &[f64],
    base: &SelectionSpec,
    families: &[FamilyHierarchy],
    models: &[ModelId],
    options: &FidelityOptions,
) -> Result<Vec<SweepPoint>> {
    if benchmarks.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one benchmark".into()));
    }
    let views = views(store, benchmarks, families, models)?;
    ratios
        .iter()
        .map(|&ratio| {
            let spec = SelectionSpec { ratio, ..*base };
            let (retained_fraction, f) = averaged(store, &views, &spec, options)?;
            Ok(SweepPoint {
                ratio,
                retained_fraction,
                rank_tau: f.rank_tau,
                stability: f.stability,
                ds: f.ds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub retained_fraction: f64,
    pub rank_tau: f64,
    pub stability: f64,
}

/// CAD-only selection at each threshold, averaged over `benchmarks`.
pub fn sweep_threshold(
    store: &OutcomeStore,
    benchmarks: &[BenchmarkId],
    thresholds: &[f64],
    base: &SelectionSpec,
    families: &[FamilyHierarchy],
    models: &[ModelId],
    options: &FidelityOptions,
) -> Result<Vec<ThresholdPoint>> {
    if benchmarks.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one benchmark".into()));
    }
    let views = views(store, benchmarks, families, models)?;
    thresholds
        .iter()
        .map(|&threshold| {
            let spec = SelectionSpec {
                strategy: Strategy::CadOnly,
                cad_threshold: threshold,
                ..*base
            };
            let (retained_fraction, f) = averaged(store, &views, &spec, options)?;
            Ok(ThresholdPoint {
                threshold,
                retained_fraction,
                rank_tau: f.rank_tau,
                stability: f.stability,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub rank_tau: f64,
    pub stability: f64,
    pub ds: f64,
    /// Standard deviations over seeds; zero for deterministic strategies.
    pub rank_tau_sd: f64,
    pub stability_sd: f64,
    pub ds_sd: f64,
}

/// Fidelity of each strategy at `base.ratio`. The random strategy is run
/// once per seed in `random_seeds` and summarized as mean and deviation.
#[allow(clippy::too_many_arguments)]
pub fn compare_strategies(
    store: &OutcomeStore,
    benchmarks: &[BenchmarkId],
    strategies: &[Strategy],
    base: &SelectionSpec,
    random_seeds: &[u64],
    families: &[FamilyHierarchy],
    models: &[ModelId],
    options: &FidelityOptions,
) -> Result<Vec<StrategyRow>> {
    let views = views(store, benchmarks, families, models)?;
    strategies
        .iter()
        .map(|&strategy| {
            let seeds: Vec<Option<u64>> = if strategy == Strategy::Random {
                if random_seeds.is_empty() {
                    return Err(Error::InvalidParameter("random strategy needs seeds".into()));
                }
                random_seeds.iter().copied().map(Some).collect()
            } else {
                vec![base.seed]
            };
            let runs: Vec<Fidelity> = seeds
                .iter()
                .map(|&seed| {
                    let spec = SelectionSpec {
                        strategy,
                        seed,
                        ..*base
                    };
                    averaged(store, &views, &spec, options).map(|r| r.1)
                })
                .collect::<Result<_>>()?;
            let col = |f: fn(&Fidelity) -> f64| -> (f64, f64) {
                let v: Vec<f64> = runs.iter().map(f).collect();
                let m = mean(&v);
                let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
                (m, sd)
            };
            let (rank_tau, rank_tau_sd) = col(|f| f.rank_tau);
            let (stability, stability_sd) = col(|f| f.stability);
            let (ds, ds_sd) = col(|f| f.ds);
            Ok(StrategyRow {
                strategy,
                rank_tau,
                stability,
                ds,
                rank_tau_sd,
                stability_sd,
                ds_sd,
            })
        })
        .collect()
}

/// The `k` highest-CBRC benchmarks of each domain, in domain order.
pub fn top_cbrc_benchmarks(
    matrix: &ScoreMatrix,
    config: &EvalConfig,
    models: &[ModelId],
    k: usize,
) -> Result<Vec<BenchmarkId>> {
    let mut out = Vec::new();
    for domain in &config.domains {
        let mut scored: Vec<(BenchmarkId, f64)> = domain
            .benchmarks()
            .iter()
            .map(|b| Ok((b.clone(), cbrc(b, domain, matrix, models)?)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.extend(scored.into_iter().take(k).map(|(b, _)| b));
    }
    Ok(out)
}

/// Benchmarks whose CBRC is at least `min_cbrc`.
pub fn drop_low_cbrc(
    matrix: &ScoreMatrix,
    config: &EvalConfig,
    models: &[ModelId],
    min_cbrc: f64,
) -> Result<Vec<BenchmarkId>> {
    let mut out = Vec::new();
    for domain in &config.domains {
        for b in domain.benchmarks() {
            if cbrc(b, domain, matrix, models)? >= min_cbrc {
                out.push(b.clone());
            }
        }
    }
    Ok(out)
}

/// Per-model mean of full and selective accuracies over `selections`.
/// Models missing from any benchmark of the group are left out.
fn group_means(
    store: &OutcomeStore,
    selections: &[&SelectionResult],
    models: &[ModelId],
) -> Result<Vec<(ModelId, f64, f64)>> {
    let mut out = Vec::new();
    'model: for m in models {
        let Some(mi) = store.model_index(m) else { continue };
        let (mut f, mut s) = (0.0, 0.0);
        for sel in selections {
            let bench = store.benchmark(&sel.benchmark)?;
            match (bench.accuracy(mi), bench.accuracy_on(mi, &sel.retained_index)) {
                (Some(a), Some(b)) => {
                    f += a;
                    s += b;
                }
                _ => continue 'model,
            }
        }
        let n = selections.len() as f64;
        out.push((m.clone(), f / n, s / n));
    }
    Ok(out)
}

/// Tau-b between per-model domain means under full and selective scores.
pub fn domain_tau(
    store: &OutcomeStore,
    domain: &DomainGroup,
    selections: &BTreeMap<BenchmarkId, SelectionResult>,
    models: &[ModelId],
) -> Result<f64> {
    let group: Vec<&SelectionResult> = domain.benchmarks().iter().filter_map(|b| selections.get(b)).collect();
    if group.is_empty() {
        return Err(Error::NoPeers(domain.name().to_owned()));
    }
    let means = group_means(store, &group, models)?;
    let full: Vec<f64> = means.iter().map(|m| m.1).collect();
    let sel: Vec<f64> = means.iter().map(|m| m.2).collect();
    tau_b(&full, &sel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain: String,
    pub full: f64,
    pub selective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutRow {
    pub model: ModelId,
    pub full: f64,
    pub selective: f64,
    pub delta: f64,
    pub rank_full: usize,
    pub rank_selective: usize,
    pub domains: Vec<DomainScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub rows: Vec<HeldoutRow>,
    /// Population size the ranks are taken over.
    pub population: usize,
    pub mean_abs_rank_change: f64,
}

/// Ranks held-out models among every model with outcomes on all selected
/// benchmarks, under full and selective scores averaged over benchmarks.
///
/// Fails with [`Error::HeldoutLeak`] if a held-out model appears in a
/// family or in the model population of any selection.
pub fn heldout_validate(
    store: &OutcomeStore,
    config: &EvalConfig,
    selections: &BTreeMap<BenchmarkId, SelectionResult>,
) -> Result<HeldoutReport> {
    config.ensure_no_heldout_in_families()?;
    for sel in selections.values() {
        if let Some(m) = sel.models.iter().find(|m| config.heldout.contains(*m)) {
            return Err(Error::HeldoutLeak(m.to_string()));
        }
    }
    if config.heldout.is_empty() {
        return Err(Error::InvalidParameter("no held-out models configured".into()));
    }
    let all: Vec<&SelectionResult> = selections.values().collect();
    if all.is_empty() {
        return Err(Error::EmptySelection("<held-out validation>".into()));
    }
    let means = group_means(store, &all, store.models())?;
    for h in &config.heldout {
        if !means.iter().any(|m| &m.0 == h) {
            return Err(Error::MissingEntry {
                benchmark: "<selected benchmarks>".into(),
                model: h.to_string(),
            });
        }
    }
    let rank = |pick: fn(&(ModelId, f64, f64)) -> f64| -> Result<BTreeMap<ModelId, usize>> {
        Ok(Ranking::from_scores(means.iter().map(|m| (m.0.clone(), pick(m))))?
            .positions()
            .into_iter()
            .collect())
    };
    let full_rank = rank(|m| m.1)?;
    let sel_rank = rank(|m| m.2)?;

    let mut rows = Vec::new();
    for h in &config.heldout {
        let (_, full, selective) = means.iter().find(|m| &m.0 == h).cloned().expect("checked above");
        let mut domains = Vec::new();
        for d in &config.domains {
            let group: Vec<&SelectionResult> = d.benchmarks().iter().filter_map(|b| selections.get(b)).collect();
            if group.is_empty() {
                continue;
            }
            if let Some((_, f, s)) = group_means(store, &group, std::slice::from_ref(h))?.pop() {
                domains.push(DomainScore {
                    domain: d.name().to_owned(),
                    full: f,
                    selective: s,
                });
            }
        }
        rows.push(HeldoutRow {
            model: h.clone(),
            full,
            selective,
            delta: selective - full,
            rank_full: full_rank[h],
            rank_selective: sel_rank[h],
            domains,
        });
    }
    let mean_abs_rank_change = rows
        .iter()
        .map(|r| r.rank_full.abs_diff(r.rank_selective) as f64)
        .sum::<f64>()
        / rows.len() as f64;
    Ok(HeldoutReport {
        rows,
        population: means.len(),
        mean_abs_rank_change,
    })
}

/// One line-delimited manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub selection: SelectionResult,
    pub fraction: f64,
    pub fidelity: Option<Fidelity>,
}

pub fn write_manifest<W: std::io::Write>(entries: &[ManifestEntry], mut out: W) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::OutcomeRecord;

    fn fam() -> Vec<FamilyHierarchy> {
        vec![FamilyHierarchy::new("f", vec!["L".into(), "M".into(), "S".into()]).unwrap()]
    }

    /// 20 instances; the five `bad*` ones have the whole family inverted.
    fn planted_store() -> OutcomeStore {
        let mut recs = Vec::new();
        let models = ["L", "M", "S", "x"];
        for q in 0..20 {
            let id = if q < 5 {
                format!("bad{q:02}")
            } else {
                format!("ok{q:02}")
            };
            let pattern: [bool; 4] = if q < 5 {
                [false, false, true, true]
            } else {
                let k = q % 4;
                [k >= 1, k >= 2, k >= 3, q % 2 == 0]
            };
            for (m, ok) in models.iter().zip(pattern) {
                let tokens = 10 * (q as u32 + 1);
                recs.push(OutcomeRecord::new(*m, "b", id.clone(), ok).with_tokens(tokens));
            }
        }
        OutcomeStore::from_records(recs).unwrap()
    }

    #[test]
    fn cad_ds_skips_planted_items() {
        let store = planted_store();
        let spec = SelectionSpec::new(Strategy::CadDs, 0.5);
        let r = select(&store, &"b".into(), &spec, &fam(), store.models()).unwrap();
        assert!(r.retained.iter().all(|i| !i.as_str().starts_with("bad")));
    }

    #[test]
    fn identity_selection() {
        let store = planted_store();
        let spec = SelectionSpec::new(Strategy::CadOnly, 1.0).with_threshold(0.0);
        let r = select(&store, &"b".into(), &spec, &fam(), store.models()).unwrap();
        assert_eq!(r.retained.len(), 20);
        let f = evaluate_selection(&r, &store, &FidelityOptions::default()).unwrap();
        assert_eq!(f.rank_tau, 1.0);
    }

    #[test]
    fn random_needs_seed_and_is_reproducible() {
        let store = planted_store();
        let spec = SelectionSpec::new(Strategy::Random, 0.3);
        assert!(select(&store, &"b".into(), &spec, &fam(), store.models()).is_err());
        let spec = spec.with_seed(4);
        let a = select(&store, &"b".into(), &spec, &fam(), store.models()).unwrap();
        let b = select(&store, &"b".into(), &spec, &fam(), store.models()).unwrap();
        assert_eq!(a.retained, b.retained);
        assert_eq!(a.retained.len(), 6);
    }

    #[test]
    fn length_strategies() {
        let store = planted_store();
        let longest = select(
            &store,
            &"b".into(),
            &SelectionSpec::new(Strategy::Longest, 0.1),
            &fam(),
            store.models(),
        )
        .unwrap();
        assert_eq!(longest.retained, ["ok18", "ok19"].map(InstanceId::from));
        let shortest = select(
            &store,
            &"b".into(),
            &SelectionSpec::new(Strategy::Shortest, 0.1),
            &fam(),
            store.models(),
        )
        .unwrap();
        assert_eq!(shortest.retained, ["bad00", "bad01"].map(InstanceId::from));
    }

    #[test]
    fn length_strategy_without_tokens() {
        let store = OutcomeStore::from_records(vec![
            OutcomeRecord::new("L", "b", "1", true),
            OutcomeRecord::new("M", "b", "1", false),
        ])
        .unwrap();
        let r = select(
            &store,
            &"b".into(),
            &SelectionSpec::new(Strategy::Longest, 1.0),
            &fam(),
            store.models(),
        );
        assert!(matches!(r, Err(Error::MissingTokens(_))));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("best".parse::<Strategy>().is_err());
    }

    #[test]
    fn heldout_leak_detected() {
        let store = planted_store();
        let spec = SelectionSpec::new(Strategy::CadDs, 0.5);
        let r = select(&store, &"b".into(), &spec, &fam(), store.models()).unwrap();
        let config = EvalConfig::new(fam(), vec![], ["x".into()].into_iter().collect()).unwrap();
        let sels: BTreeMap<_, _> = [(r.benchmark.clone(), r)].into_iter().collect();
        assert!(matches!(
            heldout_validate(&store, &config, &sels),
            Err(Error::HeldoutLeak(_))
        ));
    }
}
