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

//! Synthetic data generation, experiment orchestration, and the
//! comparative report.
//!
//! Real last-mile delivery records are proprietary, so experiments run on
//! a [`CityModel`]: a seeded mixture of Gaussian demand clusters on the
//! sphere's tangent plane, with log-normal package weights and volumes
//! clipped so every package individually fits an empty vehicle.
//! [`run_experiment`] drives the whole pipeline — generate, build training
//! routes statically, mine rules, tune the distance bid, sort the test
//! stream, sweep the static baseline over batch sizes — and reduces it to
//! a [`MetricsReport`] whose ratio block divides the streaming sorter's
//! metrics by each static baseline's.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::domain::{Depot, Package, Route, VehicleProfile, WarehouseConfig};
use crate::error::{Error, Result};
use crate::geocell::{GeoPoint, EARTH_RADIUS_M};
use crate::mining::{mine_levels, MiningConfig, RuleStore};
use crate::rng::{normal, seeded, shuffle, unit_f64};
use crate::solver::{batch_runner, BatchRun};
use crate::tuning::{grid_search, TuningGrid};
use crate::warehouse::sort_slice;

/// One Gaussian blob of delivery demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: GeoPoint,
    /// Standard deviation of destinations around the center, in meters.
    pub spread_m: f64,
    /// Mixture weight; the weights of all clusters sum to 1.
    pub weight: f64,
}

/// Rectangular latitude/longitude box destinations are clamped into.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lng_min: f64,
    pub lng_max: f64,
}

impl Region {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat())
            && (self.lng_min..=self.lng_max).contains(&p.lng())
    }
}

/// Generative model of a delivery city: where packages go and how big they
/// are. Everything a [`generate`] call produces is a pure function of this
/// model and the requested count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityModel {
    pub seed: u64,
    pub region: Region,
    pub clusters: Vec<ClusterSpec>,
    /// Natural-log mean of package weight in grams.
    pub weight_ln_mu: f64,
    /// Natural-log standard deviation of package weight.
    pub weight_ln_sigma: f64,
    /// Natural-log mean of package volume in milliliters.
    pub volume_ln_mu: f64,
    /// Natural-log standard deviation of package volume.
    pub volume_ln_sigma: f64,
    /// Depot locations; an experiment uses a prefix of this list.
    pub depots: Vec<Depot>,
}

impl Default for CityModel {
    /// A three-cluster city: one dense core and two satellites, with a
    /// depot at each cluster center. Median package: ~0.5 kg, ~2 l.
    fn default() -> CityModel {
        let centers = [(-19.92, -43.94), (-19.85, -43.98), (-19.97, -43.87)];
        let spreads = [4000.0, 2500.0, 2000.0];
        let weights = [0.5, 0.3, 0.2];
        let clusters = centers
            .iter()
            .zip(spreads)
            .zip(weights)
            .map(|((&(lat, lng), spread_m), weight)| ClusterSpec {
                center: GeoPoint::new(lat, lng).expect("static coordinates"),
                spread_m,
                weight,
            })
            .collect();
        let depots = centers
            .iter()
            .enumerate()
            .map(|(i, &(lat, lng))| Depot {
                id: format!("ce{i}"),
                location: GeoPoint::new(lat, lng).expect("static coordinates"),
            })
            .collect();
        CityModel {
            seed: 42,
            region: Region {
                lat_min: -20.15,
                lat_max: -19.65,
                lng_min: -44.2,
                lng_max: -43.65,
            },
            clusters,
            weight_ln_mu: 6.2,
            weight_ln_sigma: 0.6,
            volume_ln_mu: 7.6,
            volume_ln_sigma: 0.7,
            depots,
        }
    }
}

impl CityModel {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Config("city needs at least one cluster".into()));
        }
        let mut weight_sum = 0.0;
        for c in &self.clusters {
            if !c.spread_m.is_finite() || c.spread_m <= 0.0 {
                return Err(Error::Config(format!(
                    "cluster spread {} must be positive",
                    c.spread_m
                )));
            }
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::Config(format!(
                    "cluster weight {} must be non-negative",
                    c.weight
                )));
            }
            weight_sum += c.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "cluster weights sum to {weight_sum}, expected 1"
            )));
        }
        if !(self.region.lat_min < self.region.lat_max
            && self.region.lng_min < self.region.lng_max
            && self.region.lat_min >= -90.0
            && self.region.lat_max <= 90.0
            && self.region.lng_min >= -180.0
            && self.region.lng_max <= 180.0)
        {
            return Err(Error::Config("region box is empty or out of range".into()));
        }
        for (mu, sigma) in [
            (self.weight_ln_mu, self.weight_ln_sigma),
            (self.volume_ln_mu, self.volume_ln_sigma),
        ] {
            if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::Config(
                    "log-normal parameters must be finite with sigma >= 0".into(),
                ));
            }
        }
        for c in &self.clusters {
            if !self.region.contains(c.center) {
                return Err(Error::Config(format!(
                    "cluster center ({}, {}) lies outside the region",
                    c.center.lat(),
                    c.center.lng()
                )));
            }
        }
        Ok(())
    }
}

/// Picks a cluster by mixture weight from one uniform draw.
fn pick_cluster<'a, R: RngCore>(rng: &mut R, clusters: &'a [ClusterSpec]) -> &'a ClusterSpec {
    let r = unit_f64(rng);
    let mut acc = 0.0;
    for c in clusters {
        acc += c.weight;
        if r < acc {
            return c;
        }
    }
    clusters.last().expect("validated non-empty")
}

/// One log-normal draw, rounded to integer units and clipped into
/// `[1, cap]` so the result always fits an empty vehicle.
fn ln_draw<R: RngCore>(rng: &mut R, mu: f64, sigma: f64, cap: u64) -> u64 {
    let value = (mu + sigma * normal(rng)).exp();
    (value.round() as u64).clamp(1, cap)
}

/// Generates a deterministic package stream from the city model: cluster
/// by mixture weight, destination by a tangent-plane Gaussian around the
/// cluster center (clamped into the region box), sizes log-normal and
/// clipped to the vehicle. Ids are `p000000`, `p000001`, … in order.
pub fn generate(city: &CityModel, n: usize, vehicle: &VehicleProfile) -> Result<Vec<Package>> {
    city.validate()?;
    vehicle.validate()?;
    if n == 0 {
        return Err(Error::Config("cannot generate an empty stream".into()));
    }
    let mut rng = seeded(city.seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = pick_cluster(&mut rng, &city.clusters);
        let north_m = normal(&mut rng) * cluster.spread_m;
        let east_m = normal(&mut rng) * cluster.spread_m;
        let lat = (cluster.center.lat() + (north_m / EARTH_RADIUS_M).to_degrees())
            .clamp(city.region.lat_min, city.region.lat_max);
        let east_radius = EARTH_RADIUS_M * cluster.center.lat().to_radians().cos();
        let lng = (cluster.center.lng() + (east_m / east_radius).to_degrees())
            .clamp(city.region.lng_min, city.region.lng_max);
        out.push(Package {
            id: format!("p{i:06}"),
            dest: GeoPoint::new(lat, lng)?,
            weight_g: ln_draw(&mut rng, city.weight_ln_mu, city.weight_ln_sigma, vehicle.max_weight),
            volume_ml: ln_draw(&mut rng, city.volume_ln_mu, city.volume_ln_sigma, vehicle.max_volume),
            depot_hint: None,
        });
    }
    Ok(out)
}

/// Arrival ordering of the test stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// Shuffle the generated stream under a seed derived from the city's.
    #[default]
    Shuffle,
    /// Keep generation order.
    Preserve,
}

/// Applies the configured arrival order to a generated test split, in
/// place. The shuffle is seeded from the city seed so one seed pins the
/// whole pipeline; the xor constant offsets it from the generator's own
/// stream. [`run_experiment`] and external callers preparing the same
/// stream by hand must agree on this, so it lives here.
pub fn apply_order(order: Order, city_seed: u64, packages: &mut [Package]) {
    if order == Order::Shuffle {
        let mut rng = seeded(city_seed ^ 0x9e37_79b9_7f4a_7c15);
        shuffle(&mut rng, packages);
    }
}

/// Static-baseline settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Batch sizes swept for the comparison table.
    pub batch_sizes: Vec<usize>,
    /// Batch size used to build the training routes rules are mined from.
    pub train_batch_size: usize,
}

impl Default for BaselineConfig {
    fn default() -> BaselineConfig {
        BaselineConfig {
            batch_sizes: vec![500, 1000, 2000, 5000, 10000],
            train_batch_size: 2000,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::Config(
                "baseline batch sizes must be a non-empty list of positive counts".into(),
            ));
        }
        if self.train_batch_size == 0 {
            return Err(Error::Config("train_batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one experiment needs, loadable from a single TOML file with
/// sections `[city]`, `[warehouse]`, `[mining]`, `[tuning]`, `[baseline]`
/// plus the top-level split and ordering keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Packages generated for building training routes and mining rules.
    pub n_train: usize,
    /// Packages generated for hyperparameter selection.
    pub n_tune: usize,
    /// Packages generated for the comparison stream.
    pub n_test: usize,
    pub order: Order,
    /// How many of the city's depots participate; a prefix of `city.depots`.
    pub depots_used: usize,
    pub city: CityModel,
    pub warehouse: WarehouseConfig,
    pub mining: MiningConfig,
    pub tuning: TuningGrid,
    pub baseline: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            n_train: 100_000,
            n_tune: 1_500,
            n_test: 10_500,
            order: Order::Shuffle,
            depots_used: 1,
            city: CityModel::default(),
            warehouse: WarehouseConfig::default(),
            mining: MiningConfig::default(),
            tuning: TuningGrid::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_tune == 0 || self.n_test == 0 {
            return Err(Error::Config("all three splits must be non-empty".into()));
        }
        if self.depots_used == 0 || self.depots_used > self.city.depots.len() {
            return Err(Error::Config(format!(
                "depots_used {} must lie in 1..={}",
                self.depots_used,
                self.city.depots.len()
            )));
        }
        self.city.validate()?;
        self.warehouse.validate()?;
        self.mining.validate()?;
        self.tuning.validate()?;
        self.baseline.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config render: {e}")))
    }
}

/// One comparison row: a routing method applied to the test stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    /// `proposed` for the streaming sorter, `static` for the batched
    /// baseline.
    pub model: String,
    /// Batch size for static rows; 1 for the streaming sorter, which
    /// handles packages one at a time.
    pub batch: usize,
    pub distance_m: f64,
    pub routes: usize,
    pub packages_per_route: f64,
}

/// Streaming-sorter-over-static quotients for one batch size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub batch: usize,
    pub distance: f64,
    pub routes: f64,
    pub packages_per_route: f64,
}

/// The comparative table: method rows plus a ratio block derived from
/// those same rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    /// The proposed row first, then static rows by batch size.
    pub rows: Vec<ReportRow>,
    /// One row per static batch size: proposed metric / static metric.
    pub ratios: Vec<RatioRow>,
}

impl MetricsReport {
    /// Builds a report from raw rows, deriving the ratio block from the
    /// rows of this same report. Without a proposed row there is nothing
    /// to divide, so the ratio block is empty.
    pub fn from_rows(rows: Vec<ReportRow>) -> MetricsReport {
        let proposed = rows.iter().find(|r| r.model == "proposed").cloned();
        let ratios = match proposed {
            None => Vec::new(),
            Some(p) => rows
                .iter()
                .filter(|r| r.model != "proposed")
                .map(|s| RatioRow {
                    batch: s.batch,
                    distance: p.distance_m / s.distance_m,
                    routes: p.routes as f64 / s.routes as f64,
                    packages_per_route: p.packages_per_route / s.packages_per_route,
                })
                .collect(),
        };
        MetricsReport { rows, ratios }
    }
}

/// Renders the report as `(csv, text_table)`. The CSV has the fixed
/// header `model,batch,distance_m,routes,packages_per_route`, one line per
/// method row, then the ratio block with `ratio` in the model column. The
/// text table says the same thing for humans.
pub fn report_render(report: &MetricsReport) -> (String, String) {
    let mut csv = String::from("model,batch,distance_m,routes,packages_per_route\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.model, r.batch, r.distance_m, r.routes, r.packages_per_route
        );
    }
    for r in &report.ratios {
        let _ = writeln!(
            csv,
            "ratio,{},{},{},{}",
            r.batch, r.distance, r.routes, r.packages_per_route
        );
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<10} {:>7} {:>14} {:>7} {:>11}",
        "model", "batch", "distance_km", "routes", "pkgs/route"
    );
    for r in &report.rows {
        let _ = writeln!(
            text,
            "{:<10} {:>7} {:>14.1} {:>7} {:>11.2}",
            r.model,
            r.batch,
            r.distance_m / 1000.0,
            r.routes,
            r.packages_per_route
        );
    }
    if !report.ratios.is_empty() {
        let _ = writeln!(text, "\nproposed / static");
        let _ = writeln!(
            text,
            "{:>7} {:>10} {:>7} {:>11}",
            "batch", "distance", "routes", "pkgs/route"
        );
        for r in &report.ratios {
            let _ = writeln!(
                text,
                "{:>7} {:>10.2} {:>7.2} {:>11.2}",
                r.batch, r.distance, r.routes, r.packages_per_route
            );
        }
    }
    (csv, text)
}

/// Everything a finished experiment produced.
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub report: MetricsReport,
    /// Distance-bid parameters the search selected for the test stream.
    pub gamma: f64,
    pub delta: f64,
    /// Rules mined from the training routes.
    pub rules: RuleStore,
    /// Routes the streaming sorter dispatched on the test stream.
    pub proposed_routes: Vec<Route>,
    /// One static run per swept batch size, in sweep order.
    pub baselines: Vec<BatchRun>,
    /// The test stream in the order it was replayed.
    pub test_stream: Vec<Package>,
}

/// Runs the full pipeline on one config: generate the three splits, build
/// training routes with the static planner, mine rules from them, tune
/// the distance bid by cross-validation, sort the test stream with the
/// streaming sorter, and sweep the static baseline over the same stream.
/// Any stage failure aborts with that stage's name attached.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let depots = &cfg.city.depots[..cfg.depots_used];
    let vehicle = &cfg.warehouse.vehicle;

    let total = cfg.n_train + cfg.n_tune + cfg.n_test;
    log::info!("generating {total} packages");
    let all = generate(&cfg.city, total, vehicle).map_err(|e| e.in_stage("generate"))?;
    let train = &all[..cfg.n_train];
    let tune = &all[cfg.n_train..cfg.n_train + cfg.n_tune];
    let test = &all[cfg.n_train + cfg.n_tune..];

    log::info!(
        "building training routes from {} packages in batches of {}",
        cfg.n_train,
        cfg.baseline.train_batch_size
    );
    let training = batch_runner(train, cfg.baseline.train_batch_size, depots, vehicle)
        .map_err(|e| e.in_stage("train-routes"))?;

    log::info!("mining rules from {} training routes", training.route_count);
    let rules = {
        let dest_of: HashMap<&str, GeoPoint> =
            train.iter().map(|p| (p.id.as_str(), p.dest)).collect();
        let mut stops: Vec<Vec<GeoPoint>> = Vec::with_capacity(training.route_count);
        for solution in &training.solutions {
            for route in &solution.routes {
                let mut pts = Vec::with_capacity(route.package_ids.len());
                for id in &route.package_ids {
                    pts.push(*dest_of.get(id.as_str()).ok_or_else(|| {
                        Error::Contract(format!("route {} names unknown package {id}", route.id))
                    })?);
                }
                stops.push(pts);
            }
        }
        mine_levels(&stops, &cfg.mining)
    }
    .map_err(|e| e.in_stage("mine"))?;

    log::info!("tuning the distance bid on {} held-out packages", cfg.n_tune);
    let tuned =
        grid_search(depots, tune, &rules, &cfg.warehouse, &cfg.tuning).map_err(|e| e.in_stage("tune"))?;
    let mut warehouse_cfg = cfg.warehouse.clone();
    warehouse_cfg.gamma = tuned.gamma;
    warehouse_cfg.delta = tuned.delta;

    let mut test_stream = test.to_vec();
    apply_order(cfg.order, cfg.city.seed, &mut test_stream);

    log::info!(
        "sorting the {}-package test stream (gamma {}, delta {})",
        cfg.n_test,
        tuned.gamma,
        tuned.delta
    );
    let sorted =
        sort_slice(depots, &rules, &warehouse_cfg, &test_stream).map_err(|e| e.in_stage("sort"))?;

    let mut baselines = Vec::with_capacity(cfg.baseline.batch_sizes.len());
    for &batch in &cfg.baseline.batch_sizes {
        log::info!("solving the static baseline at batch size {batch}");
        baselines.push(
            batch_runner(&test_stream, batch, depots, vehicle)
                .map_err(|e| e.in_stage("baseline"))?,
        );
    }

    let mut rows = vec![ReportRow {
        model: "proposed".into(),
        batch: 1,
        distance_m: sorted.routes.iter().map(|r| r.length_m).sum(),
        routes: sorted.routes.len(),
        packages_per_route: sorted.summary.accepted as f64 / sorted.routes.len() as f64,
    }];
    for run in &baselines {
        rows.push(ReportRow {
            model: "static".into(),
            batch: run.batch_size,
            distance_m: run.total_length_m,
            routes: run.route_count,
            packages_per_route: run.mean_packages_per_route,
        });
    }

    Ok(ExperimentRun {
        report: MetricsReport::from_rows(rows),
        gamma: tuned.gamma,
        delta: tuned.delta,
        rules,
        proposed_routes: sorted.routes,
        baselines,
        test_stream,
    })
}
