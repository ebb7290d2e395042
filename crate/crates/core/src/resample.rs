//! Seeded resampling: bootstrap intervals and subsample ranking stability.
//!
//! Iteration `k` always draws from its own ChaCha stream `k` of the master
//! seed, so results do not depend on how iterations are scheduled.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{CadScore, InstanceTallies};
use crate::corpus::scores::population_std;
use crate::corpus::{BenchmarkId, DomainGroup, ModelId, OutcomeStore, ScoreMatrix};
use crate::discrim::discriminability_of_scores;
use crate::error::{Error, Result};
use crate::rankstats::tau_b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Models,
    Instances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub iterations: usize,
    pub seed: u64,
    pub axis: Axis,
    /// Draw size; the population size when `None`.
    pub sample_size: Option<usize>,
    pub replacement: bool,
}

impl ResampleConfig {
    /// Subsampling without replacement over instances.
    pub fn subsample(iterations: usize, seed: u64) -> Result<Self> {
        Self::build(iterations, seed, Axis::Instances, false)
    }

    /// Resampling with replacement along `axis`.
    pub fn bootstrap(iterations: usize, seed: u64, axis: Axis) -> Result<Self> {
        Self::build(iterations, seed, axis, true)
    }

    fn build(iterations: usize, seed: u64, axis: Axis, replacement: bool) -> Result<Self> {
        if iterations < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 iterations, got {iterations}"
            )));
        }
        Ok(Self {
            iterations,
            seed,
            axis,
            sample_size: None,
            replacement,
        })
    }

    pub fn with_sample_size(mut self, size: usize) -> Self {
        self.sample_size = Some(size);
        self
    }

    pub fn with_replacement(mut self, replacement: bool) -> Self {
        self.replacement = replacement;
        self
    }

    fn draw_size(&self, population: usize) -> Result<usize> {
        let size = self.sample_size.unwrap_or(population);
        if size == 0 {
            return Err(Error::InvalidParameter("sample size is 0".into()));
        }
        if !self.replacement && size > population {
            return Err(Error::InvalidParameter(format!(
                "cannot draw {size} of {population} without replacement"
            )));
        }
        Ok(size)
    }
}

/// RNG for iteration `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `size` indices from `0..population`. Without replacement the
/// result is sorted.
pub fn draw_indices<R: Rng>(rng: &mut R, population: usize, size: usize, replacement: bool) -> Vec<usize> {
    if replacement {
        (0..size).map(|_| rng.random_range(0..population)).collect()
    } else {
        let mut v = index::sample(rng, population, size).into_vec();
        v.sort_unstable();
        v
    }
}

/// Index draws of every iteration, in iteration order.
pub fn resample_indices(config: &ResampleConfig, population: usize) -> Result<Vec<Vec<usize>>> {
    let size = config.draw_size(population)?;
    Ok((0..config.iterations)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.seed, k as u64);
            draw_indices(&mut rng, population, size, config.replacement)
        })
        .collect())
}

/// Linear-interpolation percentile of an ascending slice; `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    /// 2.5th percentile.
    pub lower: f64,
    /// 97.5th percentile.
    pub upper: f64,
    pub std_dev: f64,
    pub iterations: usize,
    pub failures: usize,
}

impl IntervalEstimate {
    pub fn from_samples(values: &[f64], failures: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            mean,
            lower: percentile(&sorted, 0.025),
            upper: percentile(&sorted, 0.975),
            std_dev: population_std(values),
            iterations: values.len() + failures,
            failures,
        }
    }
}

/// Percentile bootstrap of `metric` over index resamples of `population`.
/// Failed evaluations are counted; more than half failing is an error.
pub fn bootstrap_ci<F>(population: usize, config: &ResampleConfig, metric: F) -> Result<IntervalEstimate>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if population < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs a population of at least 2, got {population}"
        )));
    }
    let size = config.draw_size(population)?;
    let results: Vec<Option<f64>> = (0..config.iterations)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.seed, k as u64);
            let idx = draw_indices(&mut rng, population, size, config.replacement);
            metric(&idx).ok().filter(|v| v.is_finite())
        })
        .collect();
    let values: Vec<f64> = results.iter().flatten().copied().collect();
    let failures = results.len() - values.len();
    if values.is_empty() || failures * 2 > results.len() {
        return Err(Error::ResampleFailure {
            failed: failures,
            total: results.len(),
        });
    }
    Ok(IntervalEstimate::from_samples(&values, failures))
}

/// DS interval with models resampled (duplicates allowed).
pub fn bootstrap_ds(
    matrix: &ScoreMatrix,
    benchmark: &BenchmarkId,
    models: &[ModelId],
    epsilon: f64,
    config: &ResampleConfig,
) -> Result<IntervalEstimate> {
    let scores = matrix.scores_for(benchmark, models)?;
    bootstrap_ci(scores.len(), config, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        discriminability_of_scores(&s, epsilon)
    })
}

/// CBRC interval with models resampled. Each peer correlation uses the
/// resampled models that both benchmarks have scores for.
pub fn bootstrap_cbrc(
    matrix: &ScoreMatrix,
    benchmark: &BenchmarkId,
    domain: &DomainGroup,
    models: &[ModelId],
    config: &ResampleConfig,
) -> Result<IntervalEstimate> {
    let target: Vec<Option<f64>> = models.iter().map(|m| matrix.get(benchmark, m)).collect();
    let peers: Vec<Vec<Option<f64>>> = domain
        .benchmarks()
        .iter()
        .filter(|b| *b != benchmark)
        .map(|b| models.iter().map(|m| matrix.get(b, m)).collect())
        .collect();
    if peers.is_empty() {
        return Err(Error::NoPeers(benchmark.to_string()));
    }
    bootstrap_ci(models.len(), config, |idx| {
        let mut sum = 0.0;
        for peer in &peers {
            let (xs, ys): (Vec<f64>, Vec<f64>) = idx.iter().filter_map(|&i| Some((target[i]?, peer[i]?))).unzip();
            sum += tau_b(&xs, &ys)?;
        }
        Ok(sum / peers.len() as f64)
    })
}

/// CAD interval with instances resampled; comparisons are re-pooled on
/// every resample.
pub fn bootstrap_cad(tallies: &InstanceTallies, lambda: f64, config: &ResampleConfig) -> Result<IntervalEstimate> {
    bootstrap_ci(tallies.instance_count(), config, |idx| {
        let (inv, comp) = tallies.pooled(idx);
        Ok(CadScore::from_counts(inv, comp, lambda)?.score)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    /// Mean tau-b over all usable subsample pairs.
    pub value: f64,
    pub subsample_size: usize,
    pub pairs: usize,
    /// Pairs skipped because a subsample ranking was fully tied.
    pub degenerate_pairs: usize,
}

/// Ranking stability of `models` on subsamples of `pool` (instance indices
/// of `benchmark`; the whole benchmark when `None`).
///
/// Each subsample has `config.sample_size` instances, or `round(ratio *
/// |pool|)` when unset. Returns the mean tau-b over all pairs of
/// subsample rankings.
pub fn stability(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    pool: Option<&[usize]>,
    models: &[ModelId],
    ratio: f64,
    config: &ResampleConfig,
) -> Result<StabilityResult> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("ratio {ratio} outside (0, 1]")));
    }
    let bench = store.benchmark(benchmark)?;
    let all: Vec<usize>;
    let pool = match pool {
        Some(p) => p,
        None => {
            all = (0..bench.instance_count()).collect();
            &all
        }
    };
    let idx = store.model_indices(models);
    if idx.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: idx.len(),
        });
    }
    let size = config
        .sample_size
        .unwrap_or_else(|| (ratio * pool.len() as f64).round() as usize);
    if size == 0 || pool.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "subsample size is 0 for a pool of {} instances",
            pool.len()
        )));
    }
    let cfg = config.with_sample_size(size);
    let draws = resample_indices(&cfg, pool.len())?;
    let rankings: Vec<Vec<Option<f64>>> = draws
        .par_iter()
        .map(|d| {
            let sample: Vec<usize> = d.iter().map(|&i| pool[i]).collect();
            idx.iter().map(|&m| bench.accuracy_on(m, &sample)).collect()
        })
        .collect();

    let k = rankings.len();
    let per_row: Vec<(f64, usize, usize)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let (mut sum, mut used, mut degenerate) = (0.0, 0usize, 0usize);
            for j in i + 1..k {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rankings[i]
                    .iter()
                    .zip(&rankings[j])
                    .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                    .unzip();
                match tau_b(&xs, &ys) {
                    Ok(t) => {
                        sum += t;
                        used += 1;
                    }
                    Err(_) => degenerate += 1,
                }
            }
            (sum, used, degenerate)
        })
        .collect();
    let (sum, used, degenerate) = per_row
        .iter()
        .fold((0.0, 0, 0), |(s, u, d), &(a, b, c)| (s + a, u + b, d + c));
    if used == 0 {
        return Err(Error::DegenerateRanking);
    }
    Ok(StabilityResult {
        value: sum / used as f64,
        subsample_size: size,
        pairs: used,
        degenerate_pairs: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::OutcomeRecord;

    #[test]
    fn constant_metric_interval() {
        let cfg = ResampleConfig::bootstrap(200, 7, Axis::Models).unwrap();
        let est = bootstrap_ci(10, &cfg, |_| Ok(0.5)).unwrap();
        assert_eq!((est.mean, est.lower, est.upper, est.std_dev), (0.5, 0.5, 0.5, 0.0));
    }

    #[test]
    fn majority_failure_is_an_error() {
        let cfg = ResampleConfig::bootstrap(100, 1, Axis::Models).unwrap();
        let r = bootstrap_ci(10, &cfg, |idx| {
            if idx[0] < 8 {
                Err(Error::DegenerateRanking)
            } else {
                Ok(1.0)
            }
        });
        assert!(matches!(r, Err(Error::ResampleFailure { .. })));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.25), 2.0);
        assert!((percentile(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn streams_are_independent_of_schedule() {
        let cfg = ResampleConfig::bootstrap(50, 99, Axis::Instances).unwrap();
        let a = resample_indices(&cfg, 40).unwrap();
        let b: Vec<Vec<usize>> = (0..50)
            .map(|k| draw_indices(&mut stream_rng(99, k), 40, 40, true))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_iterations_rejected() {
        assert!(ResampleConfig::subsample(1, 0).is_err());
    }

    fn separated_store() -> OutcomeStore {
        let mut recs = Vec::new();
        for q in 0..30 {
            recs.push(OutcomeRecord::new("hi", "b", format!("q{q}"), true));
            recs.push(OutcomeRecord::new("lo", "b", format!("q{q}"), false));
        }
        OutcomeStore::from_records(recs).unwrap()
    }

    #[test]
    fn deterministic_separation_is_perfectly_stable() {
        let store = separated_store();
        let cfg = ResampleConfig::subsample(20, 3).unwrap();
        for r in [0.1, 0.5, 1.0] {
            let s = stability(&store, &"b".into(), None, store.models(), r, &cfg).unwrap();
            assert_eq!(s.value, 1.0);
        }
    }

    #[test]
    fn zero_size_subsample_rejected() {
        let store = separated_store();
        let cfg = ResampleConfig::subsample(5, 3).unwrap();
        assert!(stability(&store, &"b".into(), None, store.models(), 0.01, &cfg).is_err());
    }
}
