// Copyright 2026 The routemine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Command-line front end for the routemine library.
//!
//! Each subcommand wraps one pipeline stage on plain files — JSON Lines
//! for packages, routes, and rules; TOML for configuration — so the whole
//! experiment can be scripted step by step or run in one shot with
//! `run-all`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use routemine::domain::{
    read_depots, read_packages, read_routes, write_packages, write_route, write_routes, Depot,
    Package, PackageReader, Route,
};
use routemine::geocell::GeoPoint;
use routemine::harness::{
    apply_order, generate, report_render, run_experiment, ExperimentConfig, MetricsReport, Order,
    ReportRow,
};
use routemine::mining::{mine_levels, RuleStore};
use routemine::tuning::{grid_search, write_scores_csv, TuningGrid};
use routemine::warehouse::{run_stream, PlacementDecision, StreamSinks, WarehouseState};
use routemine::{Error, Result};

#[derive(Parser)]
#[command(
    name = "routemine",
    version,
    about = "Streaming route construction from mined delivery patterns",
    long_about = "Builds delivery routes two ways — a streaming sorter that places each \
                  package as it arrives, guided by association rules mined from historical \
                  routes, and a static batch planner — and compares them."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic package stream from the configured city model
    Gen(GenArgs),
    /// Mine association rules from historical routes
    Mine(MineArgs),
    /// Grid-search the distance-bid parameters by cross-validation
    Tune(TuneArgs),
    /// Sort a package stream into routes with the streaming warehouse
    Sort(SortArgs),
    /// Plan static batched routes over a package stream
    Baseline(BaselineArgs),
    /// Render a comparative report from route files
    Report(ReportArgs),
    /// Run the whole pipeline from one config and write every artifact
    RunAll(RunAllArgs),
}

/// Mirror of [`Order`] for flag parsing.
#[derive(Clone, Copy, ValueEnum)]
enum OrderFlag {
    Shuffle,
    Preserve,
}

impl From<OrderFlag> for Order {
    fn from(flag: OrderFlag) -> Order {
        match flag {
            OrderFlag::Shuffle => Order::Shuffle,
            OrderFlag::Preserve => Order::Preserve,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Where the package stream (JSON Lines) goes
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// How many packages; defaults to the config's train + tune + test
    #[arg(long, value_name = "N", conflicts_with = "split")]
    count: Option<usize>,
    /// Also write the three split files (<out>.train/.tune/.test.jsonl),
    /// with the configured arrival order applied to the test split
    #[arg(long)]
    split: bool,
    /// Override the configured test-stream arrival order
    #[arg(long, value_name = "ORDER")]
    order: Option<OrderFlag>,
}

#[derive(Args)]
struct MineArgs {
    /// Historical routes (JSON Lines) to mine patterns from
    #[arg(long, value_name = "FILE")]
    routes: PathBuf,
    /// The packages those routes delivered, for destination lookup
    #[arg(long, value_name = "FILE")]
    packages: PathBuf,
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Where the rule store (JSON Lines) goes
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    /// Held-out packages (JSON Lines) to cross-validate on
    #[arg(long, value_name = "FILE")]
    packages: PathBuf,
    /// Mined rule store (JSON Lines); empty store when omitted
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// Depots (JSON Lines); the config's city depots when omitted
    #[arg(long, value_name = "FILE")]
    depots: Option<PathBuf>,
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Search grid: a TOML file or the literal `defaults`; the config's
    /// [tuning] section when omitted
    #[arg(long, value_name = "FILE|defaults")]
    grid: Option<String>,
    /// Where the CSV score table goes
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SortArgs {
    /// Package stream (JSON Lines) in arrival order
    #[arg(long, value_name = "FILE")]
    packages: PathBuf,
    /// Mined rule store (JSON Lines); empty store when omitted
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// Depots (JSON Lines); the config's city depots when omitted
    #[arg(long, value_name = "FILE")]
    depots: Option<PathBuf>,
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Where dispatched routes (JSON Lines) go
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Where rejected packages (JSON Lines) go; dropped when omitted
    #[arg(long, value_name = "FILE")]
    rejects: Option<PathBuf>,
    /// Emit one placement-decision JSON line per accepted package here
    #[arg(long, value_name = "FILE")]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Package stream (JSON Lines)
    #[arg(long, value_name = "FILE")]
    packages: PathBuf,
    /// Packages accumulated per planning batch
    #[arg(long, value_name = "N")]
    batch_size: usize,
    /// Depots (JSON Lines); the config's city depots when omitted
    #[arg(long, value_name = "FILE")]
    depots: Option<PathBuf>,
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Where planned routes (JSON Lines) go
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Routes the streaming sorter dispatched (JSON Lines)
    #[arg(long, value_name = "FILE")]
    proposed: Option<PathBuf>,
    /// A static run to compare against, as BATCH=ROUTES_FILE; repeatable
    #[arg(long = "static", value_name = "BATCH=FILE", value_parser = parse_batch_file)]
    statics: Vec<(usize, PathBuf)>,
    /// Write the CSV here and print the text table; CSV to stdout when
    /// omitted
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunAllArgs {
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory every artifact is written into
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Override the configured test-stream arrival order
    #[arg(long, value_name = "ORDER")]
    order: Option<OrderFlag>,
}

fn parse_batch_file(s: &str) -> std::result::Result<(usize, PathBuf), String> {
    let (batch, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected BATCH=FILE, got `{s}`"))?;
    let batch: usize = batch
        .parse()
        .map_err(|e| format!("bad batch size `{batch}`: {e}"))?;
    if batch == 0 {
        return Err("batch size must be positive".into());
    }
    Ok((batch, PathBuf::from(path)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Mine(args) => cmd_mine(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Sort(args) => cmd_sort(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Report(args) => cmd_report(args),
        Command::RunAll(args) => cmd_run_all(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_input() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Loads the experiment config, or falls back to the built-in defaults.
/// A missing or malformed config file is a configuration error, not bad
/// input data.
fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?;
            ExperimentConfig::from_toml(&text)
        }
    }
}

/// Depots from an explicit file, or the config's participating city
/// depots.
fn load_depots(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Vec<Depot>> {
    match path {
        Some(p) => read_depots(p),
        None => Ok(cfg.city.depots[..cfg.depots_used].to_vec()),
    }
}

/// Rule store from a file, or an empty store: sorting without rules falls
/// back to the distance bid and the load-balancing tie-break.
fn load_rules(path: Option<&Path>) -> Result<RuleStore> {
    match path {
        Some(p) => RuleStore::read_jsonl(BufReader::new(File::open(p)?)),
        None => Ok(RuleStore::new()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `pkgs.jsonl` tagged with `train` becomes `pkgs.train.jsonl`.
fn tagged(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(order) = args.order {
        cfg.order = order.into();
    }
    let total = cfg.n_train + cfg.n_tune + cfg.n_test;
    let count = args.count.unwrap_or(total);
    let packages = generate(&cfg.city, count, &cfg.warehouse.vehicle)?;

    let mut out = create(&args.out)?;
    write_packages(&mut out, &packages)?;
    out.flush()?;
    println!("wrote {} packages to {}", packages.len(), args.out.display());

    if args.split {
        let splits = [
            ("train", 0, cfg.n_train),
            ("tune", cfg.n_train, cfg.n_train + cfg.n_tune),
            ("test", cfg.n_train + cfg.n_tune, total),
        ];
        for (tag, start, end) in splits {
            let mut slice = packages[start..end].to_vec();
            if tag == "test" {
                apply_order(cfg.order, cfg.city.seed, &mut slice);
            }
            let path = tagged(&args.out, tag);
            let mut w = create(&path)?;
            write_packages(&mut w, &slice)?;
            w.flush()?;
            println!("wrote {} packages to {}", slice.len(), path.display());
        }
    }
    Ok(())
}

fn cmd_mine(args: MineArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let routes = read_routes(&args.routes)?;
    let packages = read_packages(&args.packages)?;

    let dest_of: HashMap<&str, GeoPoint> =
        packages.iter().map(|p| (p.id.as_str(), p.dest)).collect();
    let mut stops: Vec<Vec<GeoPoint>> = Vec::with_capacity(routes.len());
    for route in &routes {
        let mut pts = Vec::with_capacity(route.package_ids.len());
        for id in &route.package_ids {
            // The two files came from the caller, so a mismatch is bad
            // input, not a broken internal contract.
            pts.push(*dest_of.get(id.as_str()).ok_or_else(|| {
                Error::Input(format!(
                    "route {} names package {id}, absent from {}",
                    route.id,
                    args.packages.display()
                ))
            })?);
        }
        stops.push(pts);
    }

    let store = mine_levels(&stops, &cfg.mining)?;
    let mut out = create(&args.out)?;
    store.write_jsonl(&mut out)?;
    out.flush()?;
    println!(
        "mined {} rules at levels {:?} from {} routes into {}",
        store.len(),
        store.mined_levels(),
        routes.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let packages = read_packages(&args.packages)?;
    let rules = load_rules(args.rules.as_deref())?;
    let depots = load_depots(&cfg, args.depots.as_deref())?;

    let grid = match args.grid.as_deref() {
        None => cfg.tuning.clone(),
        Some("defaults") => TuningGrid::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("grid {path}: {e}")))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("grid parse: {e}")))?
        }
    };

    let outcome = grid_search(&depots, &packages, &rules, &cfg.warehouse, &grid)?;
    let mut out = create(&args.out)?;
    write_scores_csv(&mut out, &outcome.scores)?;
    out.flush()?;
    println!("gamma = {}", outcome.gamma);
    println!("delta = {}", outcome.delta);
    println!(
        "wrote {} scores to {}",
        outcome.scores.len(),
        args.out.display()
    );
    Ok(())
}

/// Streams sorter outputs to files as they happen.
struct FileSinks {
    routes: BufWriter<File>,
    rejects: Option<BufWriter<File>>,
    audit: Option<BufWriter<File>>,
}

impl StreamSinks for FileSinks {
    fn route(&mut self, route: &Route) -> Result<()> {
        write_route(&mut self.routes, route)
    }

    fn reject(&mut self, package: &Package) -> Result<()> {
        if let Some(w) = &mut self.rejects {
            serde_json::to_writer(&mut *w, package)?;
            writeln!(w)?;
        }
        Ok(())
    }

    fn decision(&mut self, decision: &PlacementDecision) -> Result<()> {
        if let Some(w) = &mut self.audit {
            serde_json::to_writer(&mut *w, decision)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn cmd_sort(args: SortArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let rules = load_rules(args.rules.as_deref())?;
    let depots = load_depots(&cfg, args.depots.as_deref())?;

    let reader = PackageReader::new(BufReader::new(File::open(&args.packages)?));
    let mut state = WarehouseState::new(depots, &rules, cfg.warehouse.clone())?;
    let mut sinks = FileSinks {
        routes: create(&args.out)?,
        rejects: args.rejects.as_deref().map(create).transpose()?,
        audit: args.audit.as_deref().map(create).transpose()?,
    };

    let summary = run_stream(&mut state, reader, &mut sinks)?;
    sinks.routes.flush()?;
    if let Some(w) = &mut sinks.rejects {
        w.flush()?;
    }
    if let Some(w) = &mut sinks.audit {
        w.flush()?;
    }
    println!(
        "accepted {} rejected {} skipped {} routes {}",
        summary.accepted, summary.rejected, summary.skipped, summary.routes
    );
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let packages = read_packages(&args.packages)?;
    let depots = load_depots(&cfg, args.depots.as_deref())?;

    let run = routemine::solver::batch_runner(
        &packages,
        args.batch_size,
        &depots,
        &cfg.warehouse.vehicle,
    )?;
    let routes: Vec<Route> = run
        .solutions
        .iter()
        .flat_map(|s| s.routes.iter().cloned())
        .collect();
    let mut out = create(&args.out)?;
    write_routes(&mut out, &routes)?;
    out.flush()?;
    println!(
        "planned {} routes over {} packages, {:.1} km total, {:.2} packages/route",
        run.route_count,
        run.package_count,
        run.total_length_m / 1000.0,
        run.mean_packages_per_route
    );
    Ok(())
}

/// One method row computed from a dispatched-route file.
fn row_from_routes(model: &str, batch: usize, path: &Path) -> Result<ReportRow> {
    let routes = read_routes(path)?;
    if routes.is_empty() {
        return Err(Error::Input(format!("{} holds no routes", path.display())));
    }
    let packages: usize = routes.iter().map(|r| r.package_ids.len()).sum();
    Ok(ReportRow {
        model: model.into(),
        batch,
        distance_m: routes.iter().map(|r| r.length_m).sum(),
        routes: routes.len(),
        packages_per_route: packages as f64 / routes.len() as f64,
    })
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    if let Some(path) = &args.proposed {
        rows.push(row_from_routes("proposed", 1, path)?);
    }
    let mut statics = args.statics.clone();
    statics.sort_by_key(|(batch, _)| *batch);
    for (batch, path) in &statics {
        rows.push(row_from_routes("static", *batch, path)?);
    }

    let report = MetricsReport::from_rows(rows);
    let (csv, text) = report_render(&report);
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            out.write_all(csv.as_bytes())?;
            out.flush()?;
            print!("{text}");
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct TunedParams {
    gamma: f64,
    delta: f64,
}

fn cmd_run_all(args: RunAllArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(order) = args.order {
        cfg.order = order.into();
    }
    fs::create_dir_all(&args.out_dir)?;

    let run = run_experiment(&cfg)?;
    let dir = &args.out_dir;

    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let params = TunedParams {
        gamma: run.gamma,
        delta: run.delta,
    };
    fs::write(
        dir.join("params.toml"),
        toml::to_string(&params).map_err(|e| Error::Config(format!("params render: {e}")))?,
    )?;

    let mut w = create(&dir.join("rules.jsonl"))?;
    run.rules.write_jsonl(&mut w)?;
    w.flush()?;

    let mut w = create(&dir.join("packages.test.jsonl"))?;
    write_packages(&mut w, &run.test_stream)?;
    w.flush()?;

    let mut w = create(&dir.join("routes.proposed.jsonl"))?;
    write_routes(&mut w, &run.proposed_routes)?;
    w.flush()?;

    for baseline in &run.baselines {
        let routes: Vec<Route> = baseline
            .solutions
            .iter()
            .flat_map(|s| s.routes.iter().cloned())
            .collect();
        let mut w = create(&dir.join(format!("routes.static.{}.jsonl", baseline.batch_size)))?;
        write_routes(&mut w, &routes)?;
        w.flush()?;
    }

    let (csv, text) = report_render(&run.report);
    fs::write(dir.join("report.csv"), &csv)?;
    fs::write(dir.join("report.txt"), &text)?;

    print!("{text}");
    println!("\nwrote artifacts to {}", dir.display());
    Ok(())
}
