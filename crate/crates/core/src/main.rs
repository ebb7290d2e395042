use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use benchmeta::alignment::{
    cad, cad_by_family, cad_mapping_table, count_inversions, instance_cads, instance_tallies, lambda_analysis,
    DEFAULT_CRITERION_WEIGHTS,
};
use benchmeta::corpus::{load_config, load_outcomes, BenchmarkId, EvalConfig, ModelId, OutcomeStore, ScoreMatrix};
use benchmeta::discrim::instance_stats;
use benchmeta::error::{Error, Result};
use benchmeta::fixtures;
use benchmeta::rankstats::correlation_matrix;
use benchmeta::report::{self, tables, BqsWeights, QualityReport, ReportOptions, Table};
use benchmeta::resample::{bootstrap_cad, bootstrap_cbrc, bootstrap_ds, stability, Axis, ResampleConfig};
use benchmeta::selector::{
    compare_strategies, evaluate_selection, heldout_validate, select_view, sweep_ratio, sweep_threshold,
    write_manifest, BenchmarkView, FidelityOptions, ManifestEntry, SelectionSpec, StabilitySample, Strategy,
    DEFAULT_THRESHOLDS,
};
use benchmeta::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "benchmeta",
    version,
    about = "Benchmark quality metrics and selective evaluation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Per-instance outcomes, one JSON object per line.
    #[arg(long, global = true)]
    outcomes: Option<PathBuf>,
    /// Aggregate percent table (benchmark column plus one column per model).
    #[arg(long, global = true)]
    scores: Option<PathBuf>,
    /// Use the bundled reference score table instead of --scores.
    #[arg(long, global = true)]
    reference: bool,
    /// Families, domains and held-out models (TOML). Defaults to the bundled
    /// reference configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 12.0)]
    lambda: f64,
    #[arg(long, global = true, default_value_t = 0.02)]
    epsilon: f64,
    /// BQS weights as alpha,beta,gamma.
    #[arg(long, global = true, default_value = "0.3,0.3,0.4")]
    weights: String,
    /// Rendering written to standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory receiving a .csv and a .txt file per table.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct SelectArgs {
    #[arg(long, default_value = "cad_ds")]
    strategy: String,
    #[arg(long, default_value_t = 0.35)]
    ratio: f64,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    /// Restrict to these benchmarks (repeatable).
    #[arg(long)]
    benchmark: Vec<String>,
    /// Subsamples for the stability column.
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Stability subsample size as a fraction of the full benchmark.
    #[arg(long, default_value_t = 0.15)]
    stability_fraction: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check an outcomes file and configuration; print coverage.
    Validate,
    /// CBRC, DS, CAD and BQS per benchmark.
    Metrics {
        /// Bootstrap iterations for confidence intervals.
        #[arg(long)]
        intervals: Option<usize>,
    },
    /// Benchmark-by-benchmark rank correlation per domain.
    Correlations,
    /// Benchmark and per-family CAD; per-instance values with --benchmark.
    Cad {
        #[arg(long)]
        benchmark: Option<String>,
    },
    /// Build selective benchmarks.
    Select {
        #[command(flatten)]
        args: SelectArgs,
        /// Compare every strategy at the given ratio.
        #[arg(long)]
        all_strategies: bool,
        /// Seeds for the random strategy when comparing.
        #[arg(long, default_value_t = 20)]
        random_seeds: u64,
    },
    /// Fidelity as a function of the selection ratio.
    SweepRatio {
        #[command(flatten)]
        args: SelectArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        ratios: Vec<f64>,
    },
    /// Retained share and fidelity as a function of the CAD threshold.
    SweepThreshold {
        #[command(flatten)]
        args: SelectArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
        thresholds: Vec<f64>,
    },
    /// Ranking stability of each benchmark under instance subsampling.
    Stability {
        #[arg(long, default_value_t = 0.35)]
        ratio: f64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long)]
        with_replacement: bool,
    },
    /// Bootstrap confidence intervals for CBRC, DS and CAD.
    BootstrapCi {
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    /// Score candidate lambda values on the calibration criteria.
    LambdaAnalysis {
        #[arg(long, value_delimiter = ',', default_values_t = [3.0, 6.0, 9.0, 12.0, 15.0, 20.0])]
        candidates: Vec<f64>,
        /// Raw inversion rates; taken from --outcomes when omitted.
        #[arg(long, value_delimiter = ',')]
        raw: Vec<f64>,
    },
    /// Rank shifts of held-out models under selective evaluation.
    Heldout {
        #[command(flatten)]
        args: SelectArgs,
    },
    /// Full quality report: metrics, per-family CAD, correlations.
    Report {
        #[arg(long)]
        intervals: Option<usize>,
    },
    /// Generate a synthetic outcomes corpus and its configuration.
    Synth {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0.15)]
        planted: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Number of benchmarks to keep (multiple of 5 keeps whole domains).
        #[arg(long, default_value_t = 15)]
        benchmarks: usize,
        /// Outcomes file to write.
        #[arg(long)]
        out: PathBuf,
        /// Configuration file to write.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
}

struct Output {
    tables: Vec<(String, Table)>,
    /// Extra files for --out-dir: name and contents.
    files: Vec<(String, String)>,
    json: Option<String>,
    /// Replaces the table rendering for text output.
    text: Option<String>,
}

impl Output {
    fn new() -> Self {
        Self {
            tables: Vec::new(),
            files: Vec::new(),
            json: None,
            text: None,
        }
    }

    fn table(mut self, name: &str, t: Table) -> Self {
        self.tables.push((name.to_owned(), t));
        self
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn emit(out: Output, format: Format, out_dir: Option<&Path>) -> Result<()> {
    let stdout = io::stdout();
    let mut w = stdout.lock();
    let io_err = |e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    };
    let io_err = &io_err;
    match format {
        Format::Json => {
            let text = match &out.json {
                Some(j) => j.clone(),
                None => {
                    let obj: BTreeMap<&str, Vec<BTreeMap<&str, &str>>> = out
                        .tables
                        .iter()
                        .map(|(name, t)| {
                            let rows = t
                                .rows
                                .iter()
                                .map(|r| {
                                    t.headers
                                        .iter()
                                        .map(String::as_str)
                                        .zip(r.iter().map(String::as_str))
                                        .collect()
                                })
                                .collect();
                            (name.as_str(), rows)
                        })
                        .collect();
                    serde_json::to_string_pretty(&obj)? + "\n"
                }
            };
            w.write_all(text.as_bytes()).map_err(io_err)?;
        }
        Format::Csv => {
            for (i, (name, t)) in out.tables.iter().enumerate() {
                if out.tables.len() > 1 {
                    if i > 0 {
                        writeln!(w).map_err(io_err)?;
                    }
                    writeln!(w, "# {name}").map_err(io_err)?;
                }
                t.write_csv(&mut w)?;
            }
        }
        Format::Text if out.text.is_some() => {
            w.write_all(out.text.as_deref().unwrap_or_default().as_bytes())
                .map_err(io_err)?;
        }
        Format::Text => {
            for (i, (_, t)) in out.tables.iter().enumerate() {
                if i > 0 {
                    writeln!(w).map_err(io_err)?;
                }
                t.write_text(&mut w)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_owned(),
            source: e,
        })?;
        for (name, t) in &out.tables {
            write_file(&dir.join(format!("{name}.csv")), &t.to_csv_string())?;
            write_file(&dir.join(format!("{name}.txt")), &t.to_text_string())?;
        }
        for (name, contents) in &out.files {
            write_file(&dir.join(name), contents)?;
        }
    }
    Ok(())
}

fn config(common: &Common) -> Result<EvalConfig> {
    match &common.config {
        Some(p) => load_config(p),
        None => fixtures::default_config(),
    }
}

fn outcomes(common: &Common) -> Result<OutcomeStore> {
    let path = common
        .outcomes
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("this command needs --outcomes".into()))?;
    let loaded = load_outcomes(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.value)
}

/// Per-instance outcomes when given, else an aggregate score table.
enum Data {
    Outcomes(OutcomeStore),
    Scores(ScoreMatrix),
}

fn data(common: &Common) -> Result<Data> {
    if common.outcomes.is_some() {
        return outcomes(common).map(Data::Outcomes);
    }
    if let Some(p) = &common.scores {
        return ScoreMatrix::load_percent_table(p).map(Data::Scores);
    }
    if common.reference {
        return fixtures::performance().map(Data::Scores);
    }
    Err(Error::InvalidParameter(
        "give --outcomes, --scores or --reference".into(),
    ))
}

fn report_options(common: &Common, intervals: Option<usize>) -> Result<ReportOptions> {
    Ok(ReportOptions {
        lambda: common.lambda,
        epsilon: common.epsilon,
        weights: common.weights.parse::<BqsWeights>()?,
        intervals: intervals.map(|iterations| report::IntervalOptions {
            iterations,
            seed: common.seed,
        }),
    })
}

fn build_report(common: &Common, intervals: Option<usize>) -> Result<QualityReport> {
    let cfg = config(common)?;
    let opts = report_options(common, intervals)?;
    match data(common)? {
        Data::Outcomes(s) => report::quality_report(&s, &cfg, &opts),
        Data::Scores(m) => report::score_report(&m, &cfg, &opts),
    }
}

fn benchmarks(store: &OutcomeStore, names: &[String]) -> Result<Vec<BenchmarkId>> {
    if names.is_empty() {
        return Ok(store.benchmark_ids());
    }
    names
        .iter()
        .map(|n| {
            let id = BenchmarkId::from(n.as_str());
            store.benchmark(&id).map(|_| id)
        })
        .collect()
}

fn spec(common: &Common, a: &SelectArgs) -> Result<SelectionSpec> {
    let strategy: Strategy = a.strategy.parse()?;
    let mut s = SelectionSpec::new(strategy, a.ratio)
        .with_threshold(a.threshold)
        .with_seed(common.seed);
    s.lambda = common.lambda;
    s.validate()?;
    Ok(s)
}

fn fidelity_options(common: &Common, a: &SelectArgs) -> FidelityOptions {
    FidelityOptions {
        iterations: a.iterations,
        seed: common.seed,
        sample: StabilitySample::BenchmarkFraction(a.stability_fraction),
        epsilon: common.epsilon,
    }
}

fn metric_models(store: &OutcomeStore, cfg: &EvalConfig) -> Vec<ModelId> {
    cfg.metric_models(store.models())
}

fn run(cli: Cli) -> Result<Output> {
    let c = &cli.common;
    match &cli.command {
        Command::Validate => {
            let cfg = config(c)?;
            cfg.ensure_no_heldout_in_families()?;
            let store = outcomes(c)?;
            for m in cfg.families.iter().flat_map(|f| f.members()) {
                if store.model_index(m).is_none() {
                    eprintln!("warning: family model `{m}` has no outcomes");
                }
            }
            eprintln!(
                "{} records, {} models, {} benchmarks",
                store.record_count(),
                store.models().len(),
                store.benchmark_ids().len()
            );
            Ok(Output::new().table("coverage", tables::coverage_table(&store)))
        }
        Command::Metrics { intervals } => {
            let r = build_report(c, *intervals)?;
            let mut out = Output::new().table("metrics", r.metrics_table());
            out.json = Some(r.to_json()?);
            Ok(out)
        }
        Command::Correlations => {
            let cfg = config(c)?;
            let (matrix, models) = match data(c)? {
                Data::Outcomes(s) => {
                    let m = metric_models(&s, &cfg);
                    (ScoreMatrix::from_store(&s), m)
                }
                Data::Scores(m) => {
                    let models = cfg.metric_models(&m.models());
                    (m, models)
                }
            };
            let mut out = Output::new();
            for d in &cfg.domains {
                let m = correlation_matrix(d, &matrix, &models)?;
                let name = format!("correlations_{}", slug(d.name()));
                out = out.table(&name, tables::correlation_table(&m, 2).titled(d.name()));
            }
            Ok(out)
        }
        Command::Cad { benchmark } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            if let Some(b) = benchmark {
                let id = BenchmarkId::from(b.as_str());
                let models = metric_models(&store, &cfg);
                let stats = instance_stats(&store, &id, &models)?;
                let cads = instance_cads(&store, &id, &cfg.families, c.lambda)?;
                return Ok(Output::new().table("instances", tables::instance_stats_table(&stats, &cads)));
            }
            let mut rows = Vec::new();
            for b in store.benchmark_ids() {
                let total = count_inversions(&store, &b, &cfg.families).and_then(|t| cad(&t, c.lambda));
                let total = match total {
                    Ok(s) => Some(s),
                    Err(e) => {
                        eprintln!("warning: {b}: {e}");
                        None
                    }
                };
                let (fams, warnings) = cad_by_family(&store, &b, &cfg.families, c.lambda)?;
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                rows.push((b, total, fams));
            }
            let names: Vec<String> = cfg.families.iter().map(|f| f.name().to_owned()).collect();
            Ok(Output::new()
                .table("cad", tables::cad_table(&rows, &names))
                .table("cad_mapping", tables::mapping_table(&cad_mapping_table(c.lambda)?)))
        }
        Command::Select {
            args,
            all_strategies,
            random_seeds,
        } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            let models = metric_models(&store, &cfg);
            let benches = benchmarks(&store, &args.benchmark)?;
            let base = spec(c, args)?;
            let fo = fidelity_options(c, args);
            if *all_strategies {
                let seeds: Vec<u64> = (0..*random_seeds).map(|k| c.seed.wrapping_add(k)).collect();
                let rows = compare_strategies(
                    &store,
                    &benches,
                    &Strategy::ALL,
                    &base,
                    &seeds,
                    &cfg.families,
                    &models,
                    &fo,
                )?;
                return Ok(Output::new().table("strategies", tables::strategy_table(&rows)));
            }
            let mut rows = Vec::new();
            let mut manifest = Vec::new();
            for b in &benches {
                let view = BenchmarkView::new(&store, b, &cfg.families, &models)?;
                let sel = select_view(&view, &base)?;
                let fid = evaluate_selection(&sel, &store, &fo)?;
                manifest.push(ManifestEntry {
                    fraction: sel.fraction(),
                    selection: sel.clone(),
                    fidelity: Some(fid),
                });
                rows.push((sel, Some(fid)));
            }
            let mut buf = Vec::new();
            write_manifest(&manifest, &mut buf)?;
            let text = String::from_utf8(buf).expect("json is utf-8");
            let mut out = Output::new().table("selection", tables::selection_table(&rows));
            out.files.push(("selection.jsonl".into(), text.clone()));
            out.json = Some(text);
            Ok(out)
        }
        Command::SweepRatio { args, ratios } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            let models = metric_models(&store, &cfg);
            let benches = benchmarks(&store, &args.benchmark)?;
            let pts = sweep_ratio(
                &store,
                &benches,
                ratios,
                &spec(c, args)?,
                &cfg.families,
                &models,
                &fidelity_options(c, args),
            )?;
            Ok(Output::new().table("sweep_ratio", tables::ratio_sweep_table(&pts)))
        }
        Command::SweepThreshold { args, thresholds } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            let models = metric_models(&store, &cfg);
            let benches = benchmarks(&store, &args.benchmark)?;
            let pts = sweep_threshold(
                &store,
                &benches,
                thresholds,
                &spec(c, args)?,
                &cfg.families,
                &models,
                &fidelity_options(c, args),
            )?;
            Ok(Output::new().table("sweep_threshold", tables::threshold_table(&pts)))
        }
        Command::Stability {
            ratio,
            iterations,
            with_replacement,
        } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            let models = metric_models(&store, &cfg);
            let rc = ResampleConfig::subsample(*iterations, c.seed)?.with_replacement(*with_replacement);
            let rows = store
                .benchmark_ids()
                .into_iter()
                .map(|b| Ok((b.clone(), stability(&store, &b, None, &models, *ratio, &rc)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Output::new().table("stability", tables::stability_table(&rows)))
        }
        Command::BootstrapCi { iterations } => {
            let cfg = config(c)?;
            let by_models = ResampleConfig::bootstrap(*iterations, c.seed, Axis::Models)?;
            let by_instances = ResampleConfig::bootstrap(*iterations, c.seed, Axis::Instances)?;
            let (matrix, store) = match data(c)? {
                Data::Outcomes(s) => (ScoreMatrix::from_store(&s), Some(s)),
                Data::Scores(m) => (m, None),
            };
            let all = store
                .as_ref()
                .map(|s| s.models().to_vec())
                .unwrap_or_else(|| matrix.models());
            let models = cfg.metric_models(&all);
            let ids = config_order(&cfg, matrix.benchmarks().cloned().collect());
            let mut rows = Vec::new();
            for b in ids {
                let warn = |what: &str, r: Result<_>| r.map_err(|e| eprintln!("warning: {b} {what}: {e}")).ok();
                let cbrc = cfg
                    .domain_of(&b)
                    .and_then(|d| warn("CBRC", bootstrap_cbrc(&matrix, &b, d, &models, &by_models)));
                let avail = matrix.available(&b, &models);
                let ds = warn("DS", bootstrap_ds(&matrix, &b, &avail, c.epsilon, &by_models));
                let cad = store.as_ref().and_then(|s| {
                    warn(
                        "CAD",
                        instance_tallies(s, &b, &cfg.families).and_then(|t| bootstrap_cad(&t, c.lambda, &by_instances)),
                    )
                });
                rows.push((b, [cbrc, ds, cad]));
            }
            Ok(Output::new().table("bootstrap_ci", tables::interval_table(&rows)))
        }
        Command::LambdaAnalysis { candidates, raw } => {
            let raws = if raw.is_empty() {
                let cfg = config(c)?;
                let store = outcomes(c)?;
                store
                    .benchmark_ids()
                    .iter()
                    .filter_map(|b| count_inversions(&store, b, &cfg.families).ok()?.raw_rate())
                    .collect()
            } else {
                raw.clone()
            };
            let rows = lambda_analysis(&raws, candidates, DEFAULT_CRITERION_WEIGHTS)?;
            Ok(Output::new()
                .table("lambda_analysis", tables::lambda_table(&rows))
                .table("cad_mapping", tables::mapping_table(&cad_mapping_table(c.lambda)?)))
        }
        Command::Heldout { args } => {
            let cfg = config(c)?;
            let store = outcomes(c)?;
            let models = metric_models(&store, &cfg);
            let base = spec(c, args)?;
            let mut sels = BTreeMap::new();
            for b in benchmarks(&store, &args.benchmark)? {
                let view = BenchmarkView::new(&store, &b, &cfg.families, &models)?;
                sels.insert(b, select_view(&view, &base)?);
            }
            let rep = heldout_validate(&store, &cfg, &sels)?;
            let mut out = Output::new().table("heldout", tables::heldout_table(&rep));
            out.json = Some(serde_json::to_string_pretty(&rep)? + "\n");
            Ok(out)
        }
        Command::Report { intervals } => {
            let r = build_report(c, *intervals)?;
            let mut out = Output::new().table("metrics", r.metrics_table());
            if !r.meta.families.is_empty() && r.rows.iter().any(|row| !row.families.is_empty()) {
                out = out.table("family_cad", r.family_cad_table());
            }
            for d in &r.correlations {
                let name = format!("correlations_{}", slug(&d.domain));
                out = out.table(&name, tables::correlation_table(&d.matrix, 2).titled(d.domain.clone()));
            }
            let text = r.to_text();
            let json = r.to_json()?;
            out.files.push(("report.txt".into(), text.clone()));
            out.files.push(("report.json".into(), json.clone()));
            out.json = Some(json);
            out.text = Some(text);
            Ok(out)
        }
        Command::Synth {
            instances,
            planted,
            noise,
            benchmarks,
            out,
            config_out,
        } => {
            let mut s = SynthSpec::reference_setup(*instances, c.seed);
            s.planted_inconsistent_fraction = *planted;
            s.noise = *noise;
            s.benchmarks.truncate(*benchmarks);
            if !s.benchmarks.len().is_multiple_of(5) {
                for b in &mut s.benchmarks {
                    b.domain = None;
                }
            }
            let corpus = generate(&s)?;
            corpus.store.save(out)?;
            if let Some(p) = config_out {
                write_file(p, &s.config()?.to_toml_string())?;
            }
            let mut t = Table::new(["benchmark", "instances", "planted"]);
            for (b, set) in &corpus.planted {
                t.push([
                    b.to_string(),
                    corpus.store.benchmark(b)?.instance_count().to_string(),
                    set.len().to_string(),
                ]);
            }
            Ok(Output::new().table("synth", t))
        }
    }
}

/// Benchmarks in configured domain order, unassigned ones last.
fn config_order(cfg: &EvalConfig, mut ids: Vec<BenchmarkId>) -> Vec<BenchmarkId> {
    let pos = |b: &BenchmarkId| {
        cfg.domains
            .iter()
            .flat_map(|d| d.benchmarks())
            .position(|x| x == b)
            .unwrap_or(usize::MAX)
    };
    ids.sort_by_key(|b| pos(b));
    ids
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_owned()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = cli.common.format;
    let out_dir = cli.common.out_dir.clone();
    let result = run(cli).and_then(|out| emit(out, format, out_dir.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
