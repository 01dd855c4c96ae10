use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use goodset::bounds::{self, BinomialIndex};
use goodset::candidates::Sampler;
use goodset::covidpipe::{load_series, weekly_sequence, write_weekly_tables, ObservedSeries};
use goodset::dynsys::{dynamics_for, ModelKind};
use goodset::estimator::{exhaustive_scan, rejection_estimate, write_accepted_csv, TrajectoryFit, WorkerPool, DEFAULT_SCAN_LIMIT};
use goodset::report::{self, fmt_f64};
use serde::Serialize;

mod config;

use config::{BoundQuery, BoundsSection, CurveSpec, DataSource, RunConfig};

#[derive(Parser)]
#[command(name = "goodset", version, about = "Estimate the set of parameters whose simulations fit an observed trajectory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one parameter and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated parameters, overriding the config.
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<f64>>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Evaluate every grid point.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured enumeration limit.
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Rejection estimation of the good-parameter set.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Number of draws, overriding the config.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Sample-size and probability bounds.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        query: BoundFlags,
    },
    /// Weekly SEIR-COVID fits on epidemic counts.
    Covid {
        #[command(flatten)]
        common: Common,
        /// Data file, overriding the configured source.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Ad hoc bound query; every bound computable from the given flags is
/// reported.
#[derive(Args, Clone, Default)]
struct BoundFlags {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    p: Option<u64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    binomial_index: Option<IndexFlag>,
    /// Emit the sample-size curve over `c_from..=c_to` (needs --delta, --g, --p).
    #[arg(long)]
    curve: bool,
    #[arg(long, default_value_t = 0.51)]
    c_from: f64,
    #[arg(long, default_value_t = 0.99)]
    c_to: f64,
    #[arg(long, default_value_t = 0.01)]
    c_step: f64,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum IndexFlag {
    Nearest,
    Ceiling,
    Continuous,
}

impl From<IndexFlag> for BinomialIndex {
    fn from(f: IndexFlag) -> Self {
        match f {
            IndexFlag::Nearest => BinomialIndex::Nearest,
            IndexFlag::Ceiling => BinomialIndex::Ceiling,
            IndexFlag::Continuous => BinomialIndex::Continuous,
        }
    }
}

/// Usage or configuration problems.
const EXIT_USAGE: u8 = 2;
/// Unreadable or invalid input data.
const EXIT_DATA: u8 = 3;
/// A runtime guard refused the work.
const EXIT_GUARD: u8 = 4;

#[derive(Debug)]
struct DataProblem;

impl std::fmt::Display for DataProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("data error")
    }
}

impl std::error::Error for DataProblem {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<DataProblem>().is_some() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<goodset::Error>() {
            if matches!(e, goodset::Error::GuardExceeded { .. }) {
                return EXIT_GUARD;
            }
            if e.is_data_error() {
                return EXIT_DATA;
            }
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { common, params, horizon } => cmd_simulate(&common, params, horizon),
        Command::Scan { common, limit } => cmd_scan(&common, limit),
        Command::Estimate { common, n } => cmd_estimate(&common, n),
        Command::Bounds { common, query } => cmd_bounds(&common, &query),
        Command::Covid { common, data } => cmd_covid(&common, data),
    }
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(common: &Common) -> anyhow::Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("goodset-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn echo_config(dir: &Path, config: &RunConfig) -> anyhow::Result<()> {
    report::write_json(&dir.join("config.json"), config)?;
    Ok(())
}

fn cmd_simulate(common: &Common, params: Option<Vec<f64>>, horizon: Option<usize>) -> anyhow::Result<()> {
    let mut config = load_config(common)?;
    let section = config.simulate.get_or_insert(config::SimulateSection {
        params: Vec::new(),
        horizon: 0,
    });
    if let Some(p) = params {
        section.params = p;
    }
    if let Some(h) = horizon {
        section.horizon = h;
    }
    let section = section.clone();
    let model = config.model()?;
    let mut full = section.params.clone();
    full.extend_from_slice(&config.fixed_params);
    let dynamics = dynamics_for(model.kind, &full, model.population)?;
    let traj = dynamics.simulate(config.initial_state()?, model.start_time, section.horizon)?;

    let mut header = vec!["t".to_string()];
    header.extend(model.kind.labels().iter().map(|s| s.to_string()));
    let rows = traj.days().map(|(t, s)| {
        let mut row = vec![t.to_string()];
        row.extend(s.values().iter().map(|&v| fmt_f64(v)));
        row
    });
    match &common.out {
        Some(_) => {
            let dir = out_dir(common)?;
            echo_config(&dir, &config)?;
            report::write_csv(&dir.join("trajectory.csv"), &header, rows)?;
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(&header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn trajectory_fit(config: &RunConfig) -> anyhow::Result<TrajectoryFit> {
    let model = config.model()?;
    Ok(TrajectoryFit {
        kind: model.kind,
        population: model.population,
        fixed_params: config.fixed_params.clone(),
        initial: config.initial_state()?,
        start_time: model.start_time,
        observed: config.observed()?,
        fitness: config.fitness()?,
        summary: config.summary,
    })
}

fn compartments(kind: ModelKind) -> Vec<String> {
    kind.labels().iter().map(|s| s.to_string()).collect()
}

fn cmd_scan(common: &Common, limit: Option<u64>) -> anyhow::Result<()> {
    let config = load_config(common)?;
    let grid = config.grid()?;
    let sampler = Sampler::new(&grid, &config.distribution)?;
    let evaluator = trajectory_fit(&config)?;
    let pool = WorkerPool::new(common.workers)?;
    let limit = limit.or(config.scan_limit).unwrap_or(DEFAULT_SCAN_LIMIT);
    let scan = exhaustive_scan(&grid, &sampler, &evaluator, limit, &pool)?;
    log::info!("scan: |Z| = {}, p = {}, G = {}", scan.cardinality, scan.p, scan.g);

    let dir = out_dir(common)?;
    echo_config(&dir, &config)?;
    report::write_json(&dir.join("scan.json"), &scan)?;
    write_accepted_csv(
        &dir.join("good.csv"),
        &scan.parameter_names,
        &compartments(evaluator.kind),
        &scan.good,
    )?;
    println!("p = {}\nG = {}", scan.p, scan.g);
    Ok(())
}

fn cmd_estimate(common: &Common, n: Option<u64>) -> anyhow::Result<()> {
    let mut config = load_config(common)?;
    if let Some(n) = n {
        config.estimate = Some(config::EstimateSection { n });
    }
    let n = config.estimate.as_ref().context("config has no `estimate` section and no --n")?.n;
    let grid = config.grid()?;
    let sampler = Sampler::new(&grid, &config.distribution)?;
    let evaluator = trajectory_fit(&config)?;
    let pool = WorkerPool::new(common.workers)?;
    let set = rejection_estimate(&grid, &sampler, n, config.seed, &evaluator, &pool)?;
    log::info!(
        "estimate: {} draws, {} distinct good parameters",
        set.n_sampled,
        set.n_distinct_good
    );

    let dir = out_dir(common)?;
    echo_config(&dir, &config)?;
    set.write_json(&dir.join("goodset.json"))?;
    set.write_csv(&dir.join("goodset.csv"))?;
    println!("distinct good parameters = {}", set.n_distinct_good);
    Ok(())
}

#[derive(Serialize)]
struct BoundValue {
    query: BoundQuery,
    value: f64,
    /// Ceiling of sample-size results.
    #[serde(skip_serializing_if = "Option::is_none")]
    ceiling: Option<f64>,
    /// Second value where a query has two sides.
    #[serde(skip_serializing_if = "Option::is_none")]
    rhs: Option<f64>,
}

fn evaluate_query(q: &BoundQuery, index: BinomialIndex) -> anyhow::Result<BoundValue> {
    let size = |v: f64| (v, Some(v.ceil()), None);
    let (value, ceiling, rhs) = match *q {
        BoundQuery::Theorem1 { n, epsilon, p } => (bounds::theorem1_bound(n, epsilon, p as f64 * std::f64::consts::LN_2)?, None, None),
        BoundQuery::Corollary { epsilon, delta, p } => {
            size(bounds::corollary_sample_size(epsilon, delta, p as f64 * std::f64::consts::LN_2)?)
        }
        BoundQuery::Eq9 { c, delta, g, p } => size(bounds::eq9_sample_size(c, delta, g, p)?),
        BoundQuery::Eq10 { c, delta, g, p } => size(bounds::eq10_sample_size(c, delta, g, p, index)?),
        BoundQuery::Prop2 { c, g, p, n } => (bounds::prop2_probability_bound(c, g, p, n, index)?, None, None),
        BoundQuery::PrefixBound { n, p } => {
            let (lhs, rhs) = bounds::log_binomial_prefix_bound(n, p)?;
            (lhs, None, Some(rhs))
        }
        BoundQuery::MinMeaningfulC { delta, p } => (bounds::min_meaningful_c(delta, p)?, None, None),
    };
    Ok(BoundValue {
        query: q.clone(),
        value,
        ceiling,
        rhs,
    })
}

fn flag_queries(f: &BoundFlags) -> Vec<BoundQuery> {
    let mut out = Vec::new();
    if let (Some(c), Some(delta), Some(g), Some(p)) = (f.c, f.delta, f.g, f.p) {
        out.push(BoundQuery::Eq9 { c, delta, g, p });
        out.push(BoundQuery::Eq10 { c, delta, g, p });
    }
    if let (Some(c), Some(g), Some(p), Some(n)) = (f.c, f.g, f.p, f.n) {
        out.push(BoundQuery::Prop2 { c, g, p, n });
    }
    if let (Some(n), Some(epsilon), Some(p)) = (f.n, f.epsilon, f.p) {
        out.push(BoundQuery::Theorem1 { n, epsilon, p });
    }
    if let (Some(epsilon), Some(delta), Some(p)) = (f.epsilon, f.delta, f.p) {
        out.push(BoundQuery::Corollary { epsilon, delta, p });
    }
    if let (Some(delta), Some(p)) = (f.delta, f.p) {
        out.push(BoundQuery::MinMeaningfulC { delta, p });
    }
    out
}

fn cmd_bounds(common: &Common, flags: &BoundFlags) -> anyhow::Result<()> {
    let mut config = load_config(common)?;
    let section = config.bounds.get_or_insert_with(BoundsSection::default);
    if let Some(i) = flags.binomial_index {
        section.binomial_index = i.into();
    }
    section.queries.extend(flag_queries(flags));
    if flags.curve {
        let (Some(delta), Some(g), Some(p)) = (flags.delta, flags.g, flags.p) else {
            bail!("--curve needs --delta, --g and --p");
        };
        section.curve = Some(CurveSpec {
            delta,
            g,
            p,
            c_from: flags.c_from,
            c_to: flags.c_to,
            c_step: flags.c_step,
        });
    }
    let section = section.clone();
    if section.queries.is_empty() && section.curve.is_none() {
        bail!("no bound queries: give a config with a `bounds` section or flags such as --c --delta --g --p");
    }
    let values = section
        .queries
        .iter()
        .map(|q| evaluate_query(q, section.binomial_index))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let dir = out_dir(common)?;
    echo_config(&dir, &config)?;
    report::write_json(&dir.join("bounds.json"), &values)?;
    for v in &values {
        println!("{}", serde_json::to_string(v)?);
    }
    if let Some(curve) = &section.curve {
        let points = bounds::sample_size_curve(curve.delta, curve.g, curve.p, &curve.c_values()?, section.binomial_index)?;
        let header = ["c", "m_general", "m_improved"].map(String::from).to_vec();
        let rows = points.iter().map(|pt| {
            vec![
                fmt_f64(pt.c),
                fmt_f64(pt.general),
                pt.improved.map(fmt_f64).unwrap_or_default(),
            ]
        });
        report::write_csv(&dir.join("curve.csv"), &header, rows)?;
        println!("curve: {} points written to {}", points.len(), dir.join("curve.csv").display());
    }
    Ok(())
}

fn cmd_covid(common: &Common, data: Option<PathBuf>) -> anyhow::Result<()> {
    let mut config = load_config(common)?;
    let section = config.covid.as_mut().context("config has no `covid` section")?;
    if let Some(path) = data {
        section.data = DataSource::File(path);
    }
    let section = section.clone();
    let series: ObservedSeries = match &section.data {
        DataSource::File(path) => load_series(path)
            .with_context(|| format!("loading {}", path.display()))
            .context(DataProblem)?,
        DataSource::Synthetic(spec) => spec.generate()?.0,
    };
    let grid = config.grid()?;
    let sampler = Sampler::new(&grid, &config.distribution)?;
    let pool = WorkerPool::new(common.workers)?;
    let first = section.first_t0.resolve(&series).context(DataProblem)?;
    let last = section.last_t0.resolve(&series).context(DataProblem)?;
    let outcomes = weekly_sequence(&grid, &sampler, &series, first, last, section.stride, &section.settings, config.seed, &pool)?;

    let dir = out_dir(common)?;
    echo_config(&dir, &config)?;
    if matches!(section.data, DataSource::Synthetic(_)) {
        series.write_csv(&dir.join("data.csv"))?;
    }
    report::write_json(&dir.join("weekly.json"), &outcomes)?;
    let names: Vec<String> = grid.names().into_iter().map(String::from).collect();
    write_weekly_tables(&dir, &outcomes, &names)?;
    for o in &outcomes {
        match (&o.result, &o.error) {
            (Some(r), _) => match &r.percentiles {
                Some(p) => println!(
                    "t0 = {}: r = {:.6}, p_d = {:.6}, {} good, peak median {} [{}, {}]",
                    o.t0, r.r_t0, r.p_d, r.good_set.n_distinct_good, p.median, p.p2_5, p.p97_5
                ),
                None => println!("t0 = {}: r = {:.6}, empty good set", o.t0, r.r_t0),
            },
            (None, Some(e)) => println!("t0 = {}: failed: {e}", o.t0),
            (None, None) => {}
        }
    }
    Ok(())
}
