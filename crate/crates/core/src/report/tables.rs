//! Table renderings of the analysis outputs.

use super::table::{fmt, fmt_opt, Table};
use crate::alignment::{CadScore, LambdaRow};
use crate::corpus::{BenchmarkId, OutcomeStore};
use crate::discrim::InstanceStats;
use crate::rankstats::CorrelationMatrix;
use crate::resample::{IntervalEstimate, StabilityResult};
use crate::selector::{Fidelity, HeldoutReport, SelectionResult, StrategyRow, SweepPoint, ThresholdPoint};

pub fn correlation_table(m: &CorrelationMatrix, decimals: usize) -> Table {
    let mut headers = vec![String::new()];
    headers.extend(m.benchmarks().iter().map(|b| b.to_string()));
    let mut t = Table::new(headers);
    let n = m.benchmarks().len();
    for i in 0..n {
        let mut row = vec![m.benchmarks()[i].to_string()];
        row.extend((0..n).map(|j| if j < i { "--".into() } else { fmt(m.get(i, j), decimals) }));
        t.push(row);
    }
    t
}

pub fn mapping_table(rows: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["raw", "transformed"]);
    for (raw, s) in rows {
        t.push([fmt(*raw, 2), fmt(*s, 3)]);
    }
    t
}

pub fn lambda_table(rows: &[LambdaRow]) -> Table {
    let mut t = Table::new(["lambda", "median", "separation", "excellent", "poor", "range", "total"]);
    for r in rows {
        t.push([
            fmt(r.lambda, 2),
            fmt(r.median, 2),
            fmt(r.separation, 2),
            fmt(r.excellent, 2),
            fmt(r.poor, 2),
            fmt(r.range, 2),
            fmt(r.total, 3),
        ]);
    }
    t
}

/// Benchmark-level CAD with per-family columns.
pub fn cad_table(rows: &[(BenchmarkId, Option<CadScore>, Vec<(String, CadScore)>)], families: &[String]) -> Table {
    let mut headers = vec!["benchmark".to_string(), "raw".into(), "cad".into()];
    headers.extend(families.iter().cloned());
    let mut t = Table::new(headers);
    for (b, total, fams) in rows {
        let mut cells = vec![
            b.to_string(),
            fmt_opt(total.map(|c| c.raw), 4),
            fmt_opt(total.map(|c| c.score), 4),
        ];
        for f in families {
            cells.push(fmt_opt(fams.iter().find(|(n, _)| n == f).map(|(_, c)| c.score), 4));
        }
        t.push(cells);
    }
    t
}

pub fn instance_stats_table(stats: &[InstanceStats], cads: &[Option<CadScore>]) -> Table {
    let mut t = Table::new([
        "instance",
        "difficulty",
        "discrimination",
        "cad",
        "tokens",
        "evaluated",
        "degenerate",
    ]);
    for (s, c) in stats.iter().zip(cads) {
        t.push([
            s.instance.to_string(),
            fmt(s.difficulty, 4),
            fmt(s.discrimination, 4),
            fmt_opt(c.map(|c| c.score), 4),
            s.tokens.map(|v| v.to_string()).unwrap_or_default(),
            s.evaluated.to_string(),
            s.degenerate.to_string(),
        ]);
    }
    t
}

pub fn selection_table(rows: &[(SelectionResult, Option<Fidelity>)]) -> Table {
    let mut t = Table::new([
        "benchmark",
        "strategy",
        "retained",
        "total",
        "fraction",
        "rank_tau",
        "stability",
        "ds",
    ]);
    for (s, f) in rows {
        t.push([
            s.benchmark.to_string(),
            s.spec.strategy.to_string(),
            s.retained.len().to_string(),
            s.total.to_string(),
            fmt(s.fraction(), 4),
            fmt_opt(f.map(|f| f.rank_tau), 4),
            fmt_opt(f.map(|f| f.stability), 4),
            fmt_opt(f.map(|f| f.ds), 4),
        ]);
    }
    t
}

pub fn ratio_sweep_table(points: &[SweepPoint]) -> Table {
    let mut t = Table::new(["ratio", "retained", "rank_tau", "stability", "ds"]);
    for p in points {
        t.push([
            fmt(p.ratio, 2),
            fmt(p.retained_fraction, 4),
            fmt(p.rank_tau, 4),
            fmt(p.stability, 4),
            fmt(p.ds, 4),
        ]);
    }
    t
}

pub fn threshold_table(points: &[ThresholdPoint]) -> Table {
    let mut t = Table::new(["threshold", "retained_pct", "rank_tau", "stability"]);
    for p in points {
        t.push([
            fmt(p.threshold, 2),
            fmt(p.retained_fraction * 100.0, 1),
            fmt(p.rank_tau, 4),
            fmt(p.stability, 4),
        ]);
    }
    t
}

pub fn strategy_table(rows: &[StrategyRow]) -> Table {
    let mut t = Table::new([
        "strategy",
        "rank_tau",
        "rank_tau_sd",
        "stability",
        "stability_sd",
        "ds",
        "ds_sd",
    ]);
    for r in rows {
        t.push([
            r.strategy.to_string(),
            fmt(r.rank_tau, 4),
            fmt(r.rank_tau_sd, 4),
            fmt(r.stability, 4),
            fmt(r.stability_sd, 4),
            fmt(r.ds, 4),
            fmt(r.ds_sd, 4),
        ]);
    }
    t
}

pub fn heldout_table(report: &HeldoutReport) -> Table {
    let domains: Vec<String> = report
        .rows
        .first()
        .map(|r| r.domains.iter().map(|d| d.domain.clone()).collect())
        .unwrap_or_default();
    let mut headers = vec!["model".to_string()];
    for d in &domains {
        headers.push(format!("{d} F"));
        headers.push(format!("{d} S"));
    }
    headers.extend(["full", "selective", "delta", "rank"].map(String::from));
    let mut t = Table::new(headers);
    for r in &report.rows {
        let mut cells = vec![r.model.to_string()];
        for d in &domains {
            let s = r.domains.iter().find(|x| &x.domain == d);
            cells.push(fmt_opt(s.map(|s| s.full * 100.0), 1));
            cells.push(fmt_opt(s.map(|s| s.selective * 100.0), 1));
        }
        cells.push(fmt(r.full * 100.0, 1));
        cells.push(fmt(r.selective * 100.0, 1));
        cells.push(fmt(r.delta * 100.0, 1));
        cells.push(format!("{}->{}", r.rank_full, r.rank_selective));
        t.push(cells);
    }
    let mut last = vec![format!("avg |rank change| over {} models", report.population)];
    last.extend(std::iter::repeat_n(String::new(), t.headers.len() - 2));
    last.push(fmt(report.mean_abs_rank_change, 2));
    t.push(last);
    t
}

pub fn interval_table(rows: &[(BenchmarkId, [Option<IntervalEstimate>; 3])]) -> Table {
    let mut t = Table::new([
        "benchmark",
        "cbrc_mean",
        "cbrc_ci",
        "cbrc_sigma",
        "ds_mean",
        "ds_ci",
        "ds_sigma",
        "cad_mean",
        "cad_ci",
        "cad_sigma",
    ]);
    for (b, ests) in rows {
        let mut cells = vec![b.to_string()];
        for e in ests {
            cells.push(fmt_opt(e.map(|e| e.mean), 4));
            cells.push(
                e.map(|e| format!("[{}, {}]", fmt(e.lower, 4), fmt(e.upper, 4)))
                    .unwrap_or_default(),
            );
            cells.push(fmt_opt(e.map(|e| e.std_dev), 4));
        }
        t.push(cells);
    }
    t
}

pub fn stability_table(rows: &[(BenchmarkId, StabilityResult)]) -> Table {
    let mut t = Table::new(["benchmark", "stability", "subsample", "pairs", "degenerate_pairs"]);
    for (b, s) in rows {
        t.push([
            b.to_string(),
            fmt(s.value, 4),
            s.subsample_size.to_string(),
            s.pairs.to_string(),
            s.degenerate_pairs.to_string(),
        ]);
    }
    t
}

/// Instances evaluated per (benchmark, model).
pub fn coverage_table(store: &OutcomeStore) -> Table {
    let mut t = Table::new(["benchmark", "model", "evaluated", "instances"]);
    for (b, m, seen, total) in store.coverage_summary() {
        t.push([b.to_string(), m.to_string(), seen.to_string(), total.to_string()]);
    }
    t
}
