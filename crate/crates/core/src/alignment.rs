//! Capability alignment: within-family inversion counting and the CAD score.
//!
//! An inversion on an instance is a pair of family members where the
//! stronger one answers wrong and the weaker one answers right. Every pair
//! with both members evaluated counts as a comparison whatever the outcome.
//! Rates are pooled over families by summing inversions and comparisons.

use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkId, BenchmarkOutcomes, FamilyHierarchy, InstanceId, OutcomeStore};
use crate::error::{Error, Result};
use crate::resample::percentile;

pub const DEFAULT_LAMBDA: f64 = 12.0;

/// Raw inversion rates tabulated by [`cad_mapping_table`].
pub const MAPPING_RAWS: [f64; 12] = [0.00, 0.02, 0.03, 0.05, 0.08, 0.10, 0.12, 0.15, 0.20, 0.25, 0.30, 0.40];

/// Weights of the five λ-selection criteria: median mapping, separation,
/// excellent reward, poor penalty, dynamic range.
pub const DEFAULT_CRITERION_WEIGHTS: [f64; 5] = [0.30, 0.25, 0.20, 0.15, 0.10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTally {
    pub family: String,
    pub inversions: u64,
    pub comparisons: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionTally {
    pub inversions: u64,
    pub comparisons: u64,
    pub families: Vec<FamilyTally>,
}

impl InversionTally {
    pub fn raw_rate(&self) -> Option<f64> {
        (self.comparisons > 0).then(|| self.inversions as f64 / self.comparisons as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CadScore {
    /// Inversions over comparisons, in [0, 1].
    pub raw: f64,
    /// `exp(-lambda * raw)`, in (0, 1].
    pub score: f64,
    pub lambda: f64,
}

pub fn cad_transform(raw: f64, lambda: f64) -> f64 {
    (-lambda * raw).exp()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

impl CadScore {
    pub fn from_counts(inversions: u64, comparisons: u64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if comparisons == 0 {
            return Err(Error::NoComparisons("<tally>".into()));
        }
        let raw = inversions as f64 / comparisons as f64;
        Ok(Self {
            raw,
            score: cad_transform(raw, lambda),
            lambda,
        })
    }
}

/// Store indices of each family's members that have records on the
/// benchmark, strongest first.
fn covered_members(store: &OutcomeStore, bench: &BenchmarkOutcomes, families: &[FamilyHierarchy]) -> Vec<Vec<usize>> {
    families
        .iter()
        .map(|f| {
            f.members()
                .iter()
                .filter_map(|m| store.model_index(m))
                .filter(|&m| bench.coverage(m) > 0)
                .collect()
        })
        .collect()
}

/// Inversions and comparisons of one family on one instance.
fn tally_instance(bench: &BenchmarkOutcomes, members: &[usize], q: usize) -> (u64, u64) {
    let (mut wrong_above, mut covered, mut inversions) = (0u64, 0u64, 0u64);
    for &m in members {
        match bench.outcome(m, q) {
            Some(true) => inversions += wrong_above,
            Some(false) => wrong_above += 1,
            None => continue,
        }
        covered += 1;
    }
    (inversions, covered * covered.saturating_sub(1) / 2)
}

/// Per-instance, per-family `(inversions, comparisons)` counts.
#[derive(Debug, Clone)]
pub struct InstanceTallies {
    pub families: Vec<String>,
    counts: Vec<(u64, u64)>,
    instances: usize,
}

impl InstanceTallies {
    pub fn instance_count(&self) -> usize {
        self.instances
    }

    pub fn get(&self, instance: usize, family: usize) -> (u64, u64) {
        self.counts[instance * self.families.len() + family]
    }

    /// Totals over all families on one instance.
    pub fn instance_totals(&self, instance: usize) -> (u64, u64) {
        let f = self.families.len();
        self.counts[instance * f..(instance + 1) * f]
            .iter()
            .fold((0, 0), |(i, c), &(a, b)| (i + a, c + b))
    }

    /// Pooled totals over a multiset of instance indices.
    pub fn pooled(&self, instances: &[usize]) -> (u64, u64) {
        instances.iter().fold((0, 0), |(i, c), &q| {
            let (a, b) = self.instance_totals(q);
            (i + a, c + b)
        })
    }

    pub fn tally(&self) -> InversionTally {
        let mut families: Vec<FamilyTally> = self
            .families
            .iter()
            .map(|f| FamilyTally {
                family: f.clone(),
                inversions: 0,
                comparisons: 0,
            })
            .collect();
        for q in 0..self.instances {
            for (k, fam) in families.iter_mut().enumerate() {
                let (i, c) = self.get(q, k);
                fam.inversions += i;
                fam.comparisons += c;
            }
        }
        InversionTally {
            inversions: families.iter().map(|f| f.inversions).sum(),
            comparisons: families.iter().map(|f| f.comparisons).sum(),
            families,
        }
    }
}

pub fn instance_tallies(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    families: &[FamilyHierarchy],
) -> Result<InstanceTallies> {
    let bench = store.benchmark(benchmark)?;
    let members = covered_members(store, bench, families);
    let n = bench.instance_count();
    let mut counts = Vec::with_capacity(n * families.len());
    for q in 0..n {
        for m in &members {
            counts.push(tally_instance(bench, m, q));
        }
    }
    Ok(InstanceTallies {
        families: families.iter().map(|f| f.name().to_owned()).collect(),
        counts,
        instances: n,
    })
}

/// Pooled inversion tally of `benchmark` over all families.
pub fn count_inversions(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    families: &[FamilyHierarchy],
) -> Result<InversionTally> {
    let tally = instance_tallies(store, benchmark, families)?.tally();
    if tally.comparisons == 0 {
        return Err(Error::NoComparisons(benchmark.to_string()));
    }
    Ok(tally)
}

pub fn cad(tally: &InversionTally, lambda: f64) -> Result<CadScore> {
    CadScore::from_counts(tally.inversions, tally.comparisons, lambda)
}

/// CAD restricted to each family. Families with fewer than two covered
/// members are omitted and reported in the returned warnings.
pub fn cad_by_family(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    families: &[FamilyHierarchy],
    lambda: f64,
) -> Result<(Vec<(String, CadScore)>, Vec<String>)> {
    check_lambda(lambda)?;
    let tally = instance_tallies(store, benchmark, families)?.tally();
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for fam in tally.families {
        if fam.comparisons == 0 {
            warnings.push(format!(
                "family `{}` has fewer than two members evaluated on `{benchmark}`",
                fam.family
            ));
            continue;
        }
        out.push((
            fam.family,
            CadScore::from_counts(fam.inversions, fam.comparisons, lambda)?,
        ));
    }
    Ok((out, warnings))
}

/// CAD of every instance; `None` marks instances without any valid pair.
pub fn instance_cads(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    families: &[FamilyHierarchy],
    lambda: f64,
) -> Result<Vec<Option<CadScore>>> {
    check_lambda(lambda)?;
    let tallies = instance_tallies(store, benchmark, families)?;
    Ok((0..tallies.instance_count())
        .map(|q| {
            let (i, c) = tallies.instance_totals(q);
            CadScore::from_counts(i, c, lambda).ok()
        })
        .collect())
}

pub fn instance_cad(
    store: &OutcomeStore,
    benchmark: &BenchmarkId,
    instance: &InstanceId,
    families: &[FamilyHierarchy],
    lambda: f64,
) -> Result<CadScore> {
    check_lambda(lambda)?;
    let bench = store.benchmark(benchmark)?;
    let q = bench.instance_index(instance).ok_or_else(|| Error::UnknownInstance {
        benchmark: benchmark.to_string(),
        instance: instance.to_string(),
    })?;
    let members = covered_members(store, bench, families);
    let (inv, comp) = members
        .iter()
        .map(|m| tally_instance(bench, m, q))
        .fold((0, 0), |(i, c), (a, b)| (i + a, c + b));
    if comp == 0 {
        return Err(Error::Unscoreable(instance.to_string()));
    }
    CadScore::from_counts(inv, comp, lambda)
}

pub fn cad_mapping_table(lambda: f64) -> Result<Vec<(f64, f64)>> {
    check_lambda(lambda)?;
    Ok(MAPPING_RAWS
        .iter()
        .map(|&raw| (raw, cad_transform(raw, lambda)))
        .collect())
}

/// One candidate λ scored against the five selection criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub median: f64,
    pub separation: f64,
    pub excellent: f64,
    pub poor: f64,
    pub range: f64,
    pub total: f64,
}

const MEDIAN_BAND: (f64, f64) = (0.15, 0.35);
const EXCELLENT_RAW: f64 = 0.03;
const EXCELLENT_MIN_SCORE: f64 = 0.65;
const POOR_RAW: f64 = 0.25;
const POOR_MAX_SCORE: f64 = 0.10;
/// Representative raw rates of the excellent, good, acceptable, concerning
/// and poor quality levels.
const LEVEL_RAWS: [f64; 5] = [0.015, 0.055, 0.115, 0.20, 0.30];

fn ramp(value: f64, zero_at: f64, one_at: f64) -> f64 {
    ((value - zero_at) / (one_at - zero_at)).clamp(0.0, 1.0)
}

pub fn median_criterion(raws_sorted: &[f64], lambda: f64) -> f64 {
    let t = cad_transform(percentile(raws_sorted, 0.5), lambda);
    let (lo, hi) = MEDIAN_BAND;
    let dist = if t < lo {
        lo - t
    } else if t > hi {
        t - hi
    } else {
        0.0
    };
    1.0 - ramp(dist, 0.0, 0.15)
}

pub fn separation_criterion(lambda: f64) -> f64 {
    let mapped: Vec<f64> = LEVEL_RAWS.iter().map(|&r| cad_transform(r, lambda)).collect();
    let min_gap = mapped.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    ramp(min_gap, 0.0, 0.05)
}

/// 1 when a raw rate at the excellent boundary maps above 0.65.
pub fn excellent_criterion(lambda: f64) -> f64 {
    let s = cad_transform(EXCELLENT_RAW, lambda);
    if s > EXCELLENT_MIN_SCORE {
        1.0
    } else {
        ramp(s, 0.45, EXCELLENT_MIN_SCORE)
    }
}

/// 1 when a raw rate at the poor boundary maps below 0.10.
pub fn poor_criterion(lambda: f64) -> f64 {
    let s = cad_transform(POOR_RAW, lambda);
    if s < POOR_MAX_SCORE {
        1.0
    } else {
        ramp(s, 0.30, POOR_MAX_SCORE)
    }
}

pub fn range_criterion(raws_sorted: &[f64], lambda: f64) -> f64 {
    let lo = percentile(raws_sorted, 0.1);
    let hi = percentile(raws_sorted, 0.9);
    ramp(cad_transform(lo, lambda) - cad_transform(hi, lambda), 0.0, 0.3)
}

/// Scores each candidate λ on the five criteria and their weighted total.
pub fn lambda_analysis(raws: &[f64], candidates: &[f64], weights: [f64; 5]) -> Result<Vec<LambdaRow>> {
    if raws.is_empty() {
        return Err(Error::InvalidParameter("lambda analysis needs raw rates".into()));
    }
    if let Some(r) = raws.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParameter(format!("raw rate {r} outside [0, 1]")));
    }
    let mut sorted = raws.to_vec();
    sorted.sort_by(f64::total_cmp);
    candidates
        .iter()
        .map(|&lambda| {
            check_lambda(lambda)?;
            let c = [
                median_criterion(&sorted, lambda),
                separation_criterion(lambda),
                excellent_criterion(lambda),
                poor_criterion(lambda),
                range_criterion(&sorted, lambda),
            ];
            Ok(LambdaRow {
                lambda,
                median: c[0],
                separation: c[1],
                excellent: c[2],
                poor: c[3],
                range: c[4],
                total: c.iter().zip(weights).map(|(v, w)| v * w).sum(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{OutcomeRecord, OutcomeStore};

    fn family(name: &str, members: &[&str]) -> FamilyHierarchy {
        FamilyHierarchy::new(name, members.iter().map(|m| (*m).into()).collect()).unwrap()
    }

    fn store(rows: &[(&str, &[u8])]) -> OutcomeStore {
        let mut recs = Vec::new();
        for (model, outcomes) in rows {
            for (q, &c) in outcomes.iter().enumerate() {
                if c < 2 {
                    recs.push(OutcomeRecord::new(*model, "b", format!("q{q}"), c == 1));
                }
            }
        }
        OutcomeStore::from_records(recs).unwrap()
    }

    #[test]
    fn single_inversion() {
        let s = store(&[("S", &[0]), ("W", &[1])]);
        let t = count_inversions(&s, &"b".into(), &[family("f", &["S", "W"])]).unwrap();
        assert_eq!((t.inversions, t.comparisons), (1, 1));
    }

    #[test]
    fn monotone_outcomes_have_no_inversions() {
        let s = store(&[("L", &[1, 1, 1, 0]), ("M", &[1, 1, 0, 0]), ("S", &[1, 0, 0, 0])]);
        let t = count_inversions(&s, &"b".into(), &[family("f", &["L", "M", "S"])]).unwrap();
        assert_eq!(t.inversions, 0);
        assert_eq!(t.comparisons, 12);
    }

    #[test]
    fn missing_records_drop_only_that_pair() {
        // value 2 = missing
        let s = store(&[("L", &[0, 2]), ("M", &[1, 1]), ("S", &[1, 0])]);
        let t = count_inversions(&s, &"b".into(), &[family("f", &["L", "M", "S"])]).unwrap();
        assert_eq!(t.comparisons, 3 + 1);
        assert_eq!(t.inversions, 2);
    }

    #[test]
    fn no_usable_family_errors() {
        let s = store(&[("A", &[1]), ("B", &[0])]);
        let r = count_inversions(&s, &"b".into(), &[family("f", &["X", "Y"])]);
        assert!(matches!(r, Err(Error::NoComparisons(_))));
    }

    #[test]
    fn mapping_reference_points() {
        let table = cad_mapping_table(DEFAULT_LAMBDA).unwrap();
        let at = |raw: f64| table.iter().find(|(r, _)| *r == raw).unwrap().1;
        assert_eq!(at(0.0), 1.0);
        assert!((at(0.05) - 0.549).abs() < 5e-4);
        assert!((at(0.10) - 0.301).abs() < 5e-4);
        assert!((at(0.02) - 0.787).abs() < 5e-4);
        assert!((at(0.30) - 0.027).abs() < 5e-4);
        assert!((at(0.40) - 0.008).abs() < 5e-4);
    }

    #[test]
    fn instance_level_scores() {
        // 1 of 10 pairs inverted
        let score = CadScore::from_counts(1, 10, 12.0).unwrap();
        assert!((score.score - (-1.2f64).exp()).abs() < 1e-15);
        assert!((score.score - 0.301).abs() < 5e-4);
        let two = CadScore::from_counts(2, 10, 12.0).unwrap();
        assert!(two.score < 0.15);
        assert_eq!(CadScore::from_counts(0, 10, 12.0).unwrap().score, 1.0);
    }

    #[test]
    fn unscoreable_instance() {
        let s = store(&[("S", &[1, 2]), ("W", &[1, 1])]);
        let fam = [family("f", &["S", "W"])];
        let r = instance_cad(&s, &"b".into(), &"q1".into(), &fam, 12.0);
        assert!(matches!(r, Err(Error::Unscoreable(_))));
        let all = instance_cads(&s, &"b".into(), &fam, 12.0).unwrap();
        assert!(all[0].is_some() && all[1].is_none());
    }

    #[test]
    fn per_family_breakdown_skips_uncovered_family() {
        let s = store(&[("S", &[1, 1]), ("W", &[0, 1]), ("X", &[1, 1])]);
        let fams = [family("f", &["S", "W"]), family("g", &["X", "Y"])];
        let (scores, warnings) = cad_by_family(&s, &"b".into(), &fams, 12.0).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].1.score, 1.0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn lambda_threshold_facts_at_twelve() {
        assert!(cad_transform(0.03, 12.0) > 0.65);
        assert_eq!(excellent_criterion(12.0), 1.0);
        assert!(cad_transform(0.25, 12.0) < 0.10);
        assert_eq!(poor_criterion(12.0), 1.0);
        // exp(-1.5) = 0.223 misses the poor-penalty target
        let six = poor_criterion(6.0);
        assert!(six > 0.0 && six < 1.0);
    }

    #[test]
    fn lambda_analysis_rejects_empty_sample() {
        assert!(lambda_analysis(&[], &[12.0], DEFAULT_CRITERION_WEIGHTS).is_err());
        let rows = lambda_analysis(&[0.01, 0.05, 0.1], &[3.0, 12.0], DEFAULT_CRITERION_WEIGHTS).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.total)));
    }

    #[test]
    fn invalid_lambda() {
        assert!(CadScore::from_counts(0, 1, 0.0).is_err());
        assert!(cad_mapping_table(-1.0).is_err());
    }
}
