//! Kendall rank correlation, cross-benchmark ranking consistency (CBRC) and
//! per-domain correlation matrices.
//!
//! Correlations are tau-b: pairs tied on either side count toward neither
//! concordance nor discordance and the denominator is corrected for ties.
//! When benchmarks cover different model sets, each pair of benchmarks is
//! compared on the models they share.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkId, DomainGroup, ModelId, ScoreMatrix};
use crate::error::{Error, Result};

/// Models ordered by descending score. Equal scores are ties; within a tie
/// the entries are ordered by model name for display only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    entries: Vec<(ModelId, f64)>,
}

impl Ranking {
    pub fn from_scores(scores: impl IntoIterator<Item = (ModelId, f64)>) -> Result<Self> {
        let mut entries: Vec<(ModelId, f64)> = scores.into_iter().collect();
        if let Some((m, s)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("score for `{m}` is not finite: {s}")));
        }
        entries.sort_by(|a, b| cmp_f64(b.1, a.1).then_with(|| a.0.cmp(&b.0)));
        let mut names: Vec<&ModelId> = entries.iter().map(|(m, _)| m).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "model `{}` appears twice in a ranking",
                w[0]
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(ModelId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelId> {
        self.entries.iter().map(|(m, _)| m)
    }

    pub fn score(&self, model: &ModelId) -> Option<f64> {
        self.entries.iter().find(|(m, _)| m == model).map(|(_, s)| *s)
    }

    /// 1-based competition ranks: tied models share the best position.
    pub fn positions(&self) -> Vec<(ModelId, usize)> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut rank = 1;
        for (i, (m, s)) in self.entries.iter().enumerate() {
            if i > 0 && *s != self.entries[i - 1].1 {
                rank = i + 1;
            }
            out.push((m.clone(), rank));
        }
        out
    }

    /// Groups of tied models, best group first.
    pub fn tie_groups(&self) -> Vec<Vec<ModelId>> {
        let mut groups: Vec<Vec<ModelId>> = Vec::new();
        let mut last: Option<f64> = None;
        for (m, s) in &self.entries {
            if last == Some(*s) {
                groups.last_mut().expect("group open").push(m.clone());
            } else {
                groups.push(vec![m.clone()]);
                last = Some(*s);
            }
        }
        groups
    }
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that returns the number of inversions (pairs out of order).
fn sort_counting_swaps(values: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = values.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        sort_counting_swaps(left, sl) + sort_counting_swaps(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if values[j] < values[i] {
            scratch[k] = values[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            scratch[k] = values[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&values[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&values[j..n]);
    values.copy_from_slice(&scratch[..n]);
    swaps
}

/// Kendall's tau-b between two paired score vectors in O(n log n).
///
/// Errors when fewer than two observations are given or when either side is
/// entirely tied (the coefficient is undefined there).
pub fn tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::MismatchedModels);
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewModels { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_f64(x[a], x[b]).then_with(|| cmp_f64(y[a], y[b])));

    let total = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ties_x = tied_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![0.0; n];
    let swaps = sort_counting_swaps(&mut ys, &mut scratch);
    let ties_y = tied_pairs(&ys);

    let untied_x = total - ties_x;
    let untied_y = total - ties_y;
    if untied_x == 0 || untied_y == 0 {
        return Err(Error::DegenerateRanking);
    }
    let numerator = total as i64 - ties_x as i64 - ties_y as i64 + joint as i64 - 2 * swaps as i64;
    let tau = numerator as f64 / (untied_x as f64 * untied_y as f64).sqrt();

    #[cfg(debug_assertions)]
    if n <= 512 {
        let reference = tau_b_pairwise(x, y);
        debug_assert!(
            (tau - reference).abs() < 1e-12,
            "tau-b fast path {tau} disagrees with pairwise count {reference}"
        );
    }

    Ok(tau.clamp(-1.0, 1.0))
}

#[cfg(debug_assertions)]
fn tau_b_pairwise(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = cmp_f64(x[i], x[j]);
            let dy = cmp_f64(y[i], y[j]);
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tx += 1,
                (_, Ordering::Equal) => ty += 1,
                (a, b) if a == b => c += 1,
                _ => d += 1,
            }
        }
    }
    (c - d) as f64 / (((c + d + tx) * (c + d + ty)) as f64).sqrt()
}

/// Tau-b between two rankings over the same model set.
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedModels);
    }
    if a.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: a.len(),
        });
    }
    let lookup: BTreeMap<&ModelId, f64> = b.entries.iter().map(|(m, s)| (m, *s)).collect();
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (m, s) in &a.entries {
        let other = lookup.get(m).ok_or(Error::MismatchedModels)?;
        xs.push(*s);
        ys.push(*other);
    }
    tau_b(&xs, &ys)
}

/// Ranking induced by `benchmark` over `models`.
pub fn ranking_from_scores(matrix: &ScoreMatrix, benchmark: &BenchmarkId, models: &[ModelId]) -> Result<Ranking> {
    let scores = matrix.scores_for(benchmark, models)?;
    Ranking::from_scores(models.iter().cloned().zip(scores))
}

/// Tau-b between two benchmarks on the models both have scores for.
pub fn pairwise_tau(matrix: &ScoreMatrix, a: &BenchmarkId, b: &BenchmarkId, models: &[ModelId]) -> Result<f64> {
    // canonical argument order keeps tau(a, b) and tau(b, a) bit-identical
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let shared: Vec<ModelId> = matrix
        .available(a, models)
        .into_iter()
        .filter(|m| matrix.get(b, m).is_some())
        .collect();
    if shared.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: shared.len(),
        });
    }
    let xs = matrix.scores_for(a, &shared)?;
    let ys = matrix.scores_for(b, &shared)?;
    tau_b(&xs, &ys)
}

/// Mean tau-b of `benchmark` against every other benchmark of its domain.
pub fn cbrc(benchmark: &BenchmarkId, domain: &DomainGroup, matrix: &ScoreMatrix, models: &[ModelId]) -> Result<f64> {
    if !domain.contains(benchmark) {
        return Err(Error::NoPeers(benchmark.to_string()));
    }
    let peers: Vec<&BenchmarkId> = domain.benchmarks().iter().filter(|b| *b != benchmark).collect();
    if peers.is_empty() {
        return Err(Error::NoPeers(benchmark.to_string()));
    }
    let mut sum = 0.0;
    for peer in &peers {
        sum += pairwise_tau(matrix, benchmark, peer, models)?;
    }
    Ok(sum / peers.len() as f64)
}

/// CBRC computed directly on score vectors: `target` against each of
/// `peers`, all indexed by the same models.
pub fn cbrc_on_scores(target: &[f64], peers: &[Vec<f64>]) -> Result<f64> {
    if peers.is_empty() {
        return Err(Error::NoPeers("<scores>".into()));
    }
    let mut sum = 0.0;
    for p in peers {
        sum += tau_b(target, p)?;
    }
    Ok(sum / peers.len() as f64)
}

/// Symmetric benchmark-by-benchmark tau matrix for one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    benchmarks: Vec<BenchmarkId>,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    /// Builds a matrix from its upper triangle, given row by row
    /// (`n(n-1)/2` values, diagonal excluded).
    pub fn from_upper(benchmarks: Vec<BenchmarkId>, upper: &[f64]) -> Result<Self> {
        let n = benchmarks.len();
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::InvalidParameter(format!(
                "expected {} upper-triangle values for {n} benchmarks, got {}",
                n * n.saturating_sub(1) / 2,
                upper.len()
            )));
        }
        if let Some(v) = upper.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("correlation {v} outside [-1, 1]")));
        }
        let mut values = vec![1.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().expect("length checked");
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(Self { benchmarks, values })
    }

    pub fn benchmarks(&self) -> &[BenchmarkId] {
        &self.benchmarks
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.benchmarks.len() + j]
    }

    pub fn index_of(&self, benchmark: &BenchmarkId) -> Option<usize> {
        self.benchmarks.iter().position(|b| b == benchmark)
    }

    /// Mean of row `i` excluding the diagonal; equals the benchmark's CBRC.
    pub fn row_mean(&self, i: usize) -> f64 {
        let n = self.benchmarks.len();
        let sum: f64 = (0..n).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
        sum / (n - 1) as f64
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.benchmarks.len();
        (0..n).all(|i| (0..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Upper triangle plus diagonal; the lower triangle is written as `--`.
    pub fn write_delimited<W: Write>(&self, out: W, decimals: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.benchmarks.iter().map(|b| b.to_string()));
        w.write_record(&header)?;
        let n = self.benchmarks.len();
        for i in 0..n {
            let mut row = vec![self.benchmarks[i].to_string()];
            for j in 0..n {
                row.push(if j < i {
                    "--".to_string()
                } else {
                    format!("{:.*}", decimals, self.get(i, j))
                });
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    /// Reads the layout written by [`CorrelationMatrix::write_delimited`].
    pub fn read_delimited<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let benchmarks: Vec<BenchmarkId> = rdr.headers()?.iter().skip(1).map(BenchmarkId::from).collect();
        let mut upper = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            for (j, cell) in row.iter().skip(1).enumerate() {
                if j > i {
                    upper.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        message: format!("`{cell}` is not a number"),
                    })?);
                }
            }
        }
        Self::from_upper(benchmarks, &upper)
    }
}

/// Pairwise tau-b between all benchmarks of a domain.
pub fn correlation_matrix(domain: &DomainGroup, matrix: &ScoreMatrix, models: &[ModelId]) -> Result<CorrelationMatrix> {
    let bench = domain.benchmarks();
    let n = bench.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| pairwise_tau(matrix, &bench[i], &bench[j], models))
        .collect::<Result<_>>()?;
    CorrelationMatrix::from_upper(bench.to_vec(), &upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(pairs: &[(&str, f64)]) -> Ranking {
        Ranking::from_scores(pairs.iter().map(|(m, s)| (ModelId::from(*m), *s))).unwrap()
    }

    #[test]
    fn identical_rankings_are_one() {
        let a = ranking(&[("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6), ("e", 0.5)]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn reversed_rankings_are_minus_one() {
        let a = ranking(&[("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6), ("e", 0.5)]);
        let b = ranking(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4), ("e", 0.5)]);
        assert_eq!(kendall_tau(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn one_adjacent_swap_of_four() {
        // 6 pairs, 5 concordant, 1 discordant
        let a = ranking(&[("a", 4.0), ("b", 3.0), ("c", 2.0), ("d", 1.0)]);
        let b = ranking(&[("a", 4.0), ("b", 2.0), ("c", 3.0), ("d", 1.0)]);
        let tau = kendall_tau(&a, &b).unwrap();
        assert!((tau - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tied_side_is_degenerate() {
        let a = ranking(&[("a", 0.5), ("b", 0.5), ("c", 0.5)]);
        let b = ranking(&[("a", 0.1), ("b", 0.2), ("c", 0.3)]);
        assert!(matches!(kendall_tau(&a, &b), Err(Error::DegenerateRanking)));
    }

    #[test]
    fn mismatched_and_short_inputs() {
        let a = ranking(&[("a", 0.5), ("b", 0.4)]);
        let b = ranking(&[("a", 0.5), ("c", 0.4)]);
        assert!(matches!(kendall_tau(&a, &b), Err(Error::MismatchedModels)));
        let one = ranking(&[("a", 0.5)]);
        assert!(matches!(kendall_tau(&one, &one), Err(Error::TooFewModels { .. })));
    }

    #[test]
    fn ties_share_a_position() {
        let r = ranking(&[("A", 0.9), ("B", 0.5), ("C", 0.5)]);
        assert_eq!(r.entries()[0].0.as_str(), "A");
        assert_eq!(r.tie_groups().len(), 2);
        let pos = r.positions();
        assert_eq!(pos[1].1, 2);
        assert_eq!(pos[2].1, 2);
    }

    #[test]
    fn duplicate_model_rejected() {
        let r = Ranking::from_scores(vec![(ModelId::from("a"), 0.1), (ModelId::from("a"), 0.2)]);
        assert!(r.is_err());
    }

    #[test]
    fn tau_b_with_ties_matches_known_value() {
        // scipy.stats.kendalltau([1,2,2,3],[1,3,2,2]) = 0.4
        let t = tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_agreement_cbrc_is_one() {
        let mut m = ScoreMatrix::new();
        for (b, shift) in [("x", 0.0), ("y", 0.1), ("z", 0.2)] {
            for (model, s) in [("a", 0.3), ("b", 0.5), ("c", 0.7)] {
                m.insert(b.into(), model.into(), s + shift).unwrap();
            }
        }
        let d = DomainGroup::new("d", vec!["x".into(), "y".into(), "z".into()]).unwrap();
        let models = m.models();
        assert_eq!(cbrc(&"x".into(), &d, &m, &models).unwrap(), 1.0);
        let cm = correlation_matrix(&d, &m, &models).unwrap();
        assert!(cm.is_symmetric());
        assert_eq!(cm.row_mean(0), 1.0);
    }

    #[test]
    fn cbrc_without_peers_errors() {
        let m = ScoreMatrix::new();
        let d = DomainGroup::new("d", vec!["x".into(), "y".into()]).unwrap();
        assert!(matches!(cbrc(&"q".into(), &d, &m, &[]), Err(Error::NoPeers(_))));
    }

    #[test]
    fn delimited_layout_round_trips() {
        let cm = CorrelationMatrix::from_upper(vec!["a".into(), "b".into(), "c".into()], &[0.5, 0.25, -0.75]).unwrap();
        let mut out = Vec::new();
        cm.write_delimited(&mut out, 4).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("b,--,"));
        assert_eq!(CorrelationMatrix::read_delimited(out.as_slice()).unwrap(), cm);
    }
}
