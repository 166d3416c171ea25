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

//! The streaming sorter: a fixed bank of unit loads per depot, an auction
//! that places each arriving package into the highest-bidding load, and a
//! closing rule that turns filled loads into dispatched routes.
//!
//! Each depot operates [`WarehouseConfig::n_unit_loads`] concurrently open
//! unit loads. When a package arrives it is assigned to a depot
//! ([`assign_depot`]), every load of that depot submits a bid
//! ([`crate::betting::compute_bet`]), and the highest feasible bid wins;
//! ties prefer the load with fewer packages, then the lower index, which
//! doubles as the fallback when every bid is zero. A load whose fill ratio
//! reaches the close threshold — or whose age exceeds the optional limit —
//! is dispatched: its stops are ordered into an open route and an empty
//! load takes over the same slot, so the bank size stays constant for the
//! whole stream and per-package work is bounded by it.

use std::io::Read;

use serde::Serialize;

use crate::betting::{compute_bet, Bet};
use crate::domain::{
    CloseReason, Depot, Package, PackageReader, Route, UnitLoad, WarehouseConfig,
};
use crate::error::{Error, Result};
use crate::geocell::{haversine_m, GeoPoint};
use crate::mining::RuleStore;
use crate::solver::tsp_open_path;

/// Picks the depot a package is sorted at: the `depot_hint` when present
/// (it must name a configured depot), otherwise the nearest depot by great
/// circle distance, ties broken by ascending depot id. Returns an index
/// into `depots`.
pub fn assign_depot(p: &Package, depots: &[Depot]) -> Result<usize> {
    if depots.is_empty() {
        return Err(Error::Input("no depots configured".into()));
    }
    if let Some(hint) = &p.depot_hint {
        return depots.iter().position(|d| d.id == *hint).ok_or_else(|| {
            Error::Input(format!("package {}: unknown depot {hint}", p.id))
        });
    }
    let mut best = 0usize;
    let mut best_d = haversine_m(depots[0].location, p.dest);
    for (i, d) in depots.iter().enumerate().skip(1) {
        let dist = haversine_m(d.location, p.dest);
        if dist < best_d || (dist == best_d && d.id < depots[best].id) {
            best = i;
            best_d = dist;
        }
    }
    Ok(best)
}

/// True when any capacity dimension — package count, volume, or weight —
/// has reached the configured close fraction. Compared exactly in
/// integers, so 20 of 25 packages reaches a threshold of 8/10 with no
/// floating-point slack. An empty load never closes.
pub fn should_close(load: &UnitLoad, cfg: &WarehouseConfig) -> bool {
    let vehicle = &cfg.vehicle;
    let fraction = &cfg.close_fraction;
    fraction.reached_by(load.count() as u64, u64::from(vehicle.max_packages))
        || fraction.reached_by(load.used_volume(), vehicle.max_volume)
        || fraction.reached_by(load.used_weight(), vehicle.max_weight)
}

/// The audited outcome of one placement auction.
#[derive(Clone, Debug, Serialize)]
pub struct PlacementDecision {
    pub package_id: String,
    pub depot_id: String,
    /// Index of the winning unit load within its depot's bank.
    pub unit_load: usize,
    /// Value of the winning bet.
    pub winning_bet: f64,
    /// Every bet of the auction, by load index.
    pub bets: Vec<Bet>,
}

/// Work counters for one placement: the auction computes one bet per unit
/// load, and inside each bet one distance evaluation per package already in
/// that load.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PlaceStats {
    /// Bets computed; always the bank size of the chosen depot.
    pub bets_computed: u64,
    /// Haversine evaluations across all bets.
    pub distance_evals: u64,
    /// Largest load size observed while betting.
    pub max_load_packages: u64,
}

impl PlaceStats {
    /// Folds another placement's counters into a running total: work adds
    /// up, the largest observed load is kept.
    pub fn absorb(&mut self, other: PlaceStats) {
        self.bets_computed += other.bets_computed;
        self.distance_evals += other.distance_evals;
        self.max_load_packages = self.max_load_packages.max(other.max_load_packages);
    }
}

/// Live sorter state: one bank of unit loads per depot, plus the counters
/// that make replays reproducible.
pub struct WarehouseState<'r> {
    depots: Vec<Depot>,
    /// `loads[d][i]` is unit load `i` of depot `d`. Every bank holds
    /// exactly `n_unit_loads` entries at all times; closing swaps a fresh
    /// empty load into the same slot.
    loads: Vec<Vec<UnitLoad>>,
    rules: &'r RuleStore,
    cfg: WarehouseConfig,
    next_route: u64,
    /// Accepted packages so far; doubles as the stream clock that load
    /// ages are measured against.
    arrivals: u64,
    routed: u64,
}

impl<'r> WarehouseState<'r> {
    pub fn new(
        depots: Vec<Depot>,
        rules: &'r RuleStore,
        cfg: WarehouseConfig,
    ) -> Result<WarehouseState<'r>> {
        cfg.validate()?;
        if depots.is_empty() {
            return Err(Error::Input("no depots configured".into()));
        }
        for (i, d) in depots.iter().enumerate() {
            if depots[..i].iter().any(|other| other.id == d.id) {
                return Err(Error::Input(format!("duplicate depot id {}", d.id)));
            }
        }
        let loads = depots
            .iter()
            .map(|_| {
                (0..cfg.n_unit_loads)
                    .map(|i| UnitLoad::new(i, &cfg.levels))
                    .collect()
            })
            .collect();
        Ok(WarehouseState {
            depots,
            loads,
            rules,
            cfg,
            next_route: 0,
            arrivals: 0,
            routed: 0,
        })
    }

    pub fn depots(&self) -> &[Depot] {
        &self.depots
    }

    pub fn config(&self) -> &WarehouseConfig {
        &self.cfg
    }

    /// The bank of unit loads at one depot.
    pub fn loads(&self, depot: usize) -> &[UnitLoad] {
        &self.loads[depot]
    }

    /// Packages accepted so far.
    pub fn accepted(&self) -> u64 {
        self.arrivals
    }

    /// Packages already dispatched on routes.
    pub fn routed(&self) -> u64 {
        self.routed
    }

    /// Packages sitting in open unit loads.
    pub fn in_flight(&self) -> u64 {
        self.arrivals - self.routed
    }

    /// Runs the placement auction for one package: every unit load of the
    /// package's depot bets, the highest feasible bet wins, and ties go to
    /// the load with fewer packages, then the lower index. The tie rule is
    /// also the fallback when all bets are zero. Returns the full decision
    /// for auditing plus the work counters. A package no load can take —
    /// possible only when it exceeds an empty vehicle — is rejected with
    /// [`Error::Infeasible`] and the state is left untouched.
    pub fn place(&mut self, p: &Package) -> Result<(PlacementDecision, PlaceStats)> {
        let depot = assign_depot(p, &self.depots)?;
        self.place_at(depot, p)
    }

    fn place_at(&mut self, depot: usize, p: &Package) -> Result<(PlacementDecision, PlaceStats)> {
        let loads = &self.loads[depot];
        let mut stats = PlaceStats {
            bets_computed: loads.len() as u64,
            ..PlaceStats::default()
        };
        let mut bets = Vec::with_capacity(loads.len());
        for load in loads {
            stats.distance_evals += load.count() as u64;
            stats.max_load_packages = stats.max_load_packages.max(load.count() as u64);
            bets.push(compute_bet(load, p, self.rules, &self.cfg)?);
        }
        let mut winner: Option<usize> = None;
        for (i, bet) in bets.iter().enumerate() {
            if !bet.feasible {
                continue;
            }
            let better = match winner {
                None => true,
                Some(w) => {
                    bet.value > bets[w].value
                        || (bet.value == bets[w].value && loads[i].count() < loads[w].count())
                }
            };
            if better {
                winner = Some(i);
            }
        }
        let Some(w) = winner else {
            return Err(Error::Infeasible {
                package_id: p.id.clone(),
            });
        };
        self.arrivals += 1;
        let load = &mut self.loads[depot][w];
        if load.is_empty() {
            // A first fill restarts the load's age clock.
            load.reset(self.arrivals);
        }
        load.try_add(p.clone(), &self.cfg.levels, &self.cfg.vehicle)?;
        Ok((
            PlacementDecision {
                package_id: p.id.clone(),
                depot_id: self.depots[depot].id.clone(),
                unit_load: w,
                winning_bet: bets[w].value,
                bets,
            },
            stats,
        ))
    }

    /// Places one package, then applies the closing rule to the load that
    /// received it: the load closes when it reaches the fill threshold or,
    /// when an age limit is configured, once it has been filling for that
    /// many accepted packages. Only the receiving load is checked, so one
    /// arrival dispatches at most one route.
    pub fn step(&mut self, p: &Package) -> Result<(PlacementDecision, PlaceStats, Option<Route>)> {
        let depot = assign_depot(p, &self.depots)?;
        let (decision, stats) = self.place_at(depot, p)?;
        let load = &self.loads[depot][decision.unit_load];
        let aged = self
            .cfg
            .max_age_packages
            .is_some_and(|age| self.arrivals - load.opened_at() >= age);
        let route = if should_close(load, &self.cfg) || aged {
            Some(self.close_unit_load(depot, decision.unit_load, CloseReason::Capacity)?)
        } else {
            None
        };
        Ok((decision, stats, route))
    }

    /// Dispatches one unit load: orders its stops into an open route
    /// starting at the depot, and swaps a fresh empty load into the same
    /// slot. Closing an empty load is a contract violation.
    pub fn close_unit_load(
        &mut self,
        depot: usize,
        index: usize,
        reason: CloseReason,
    ) -> Result<Route> {
        let d = self
            .depots
            .get(depot)
            .ok_or_else(|| Error::Contract(format!("no depot at index {depot}")))?;
        let load = self.loads[depot]
            .get(index)
            .ok_or_else(|| Error::Contract(format!("no unit load {index} at depot {}", d.id)))?;
        if load.is_empty() {
            return Err(Error::Contract(format!(
                "closing empty unit load {index} at depot {}",
                d.id
            )));
        }
        let stops: Vec<GeoPoint> = load.packages().iter().map(|p| p.dest).collect();
        let (order, length_m) = tsp_open_path(d.location, &stops);
        let packages = self.loads[depot][index].reset(self.arrivals);
        self.routed += packages.len() as u64;
        self.next_route += 1;
        Ok(Route {
            id: format!("r{:06}", self.next_route),
            depot_id: d.id.clone(),
            package_ids: order.into_iter().map(|i| packages[i].id.clone()).collect(),
            length_m,
            close_reason: reason,
        })
    }

    /// Dispatches every non-empty unit load, depots in configured order and
    /// loads by ascending index. The stream is over; partially filled loads
    /// go out as-is.
    pub fn flush(&mut self) -> Result<Vec<Route>> {
        let mut routes = Vec::new();
        for depot in 0..self.depots.len() {
            for index in 0..self.loads[depot].len() {
                if !self.loads[depot][index].is_empty() {
                    routes.push(self.close_unit_load(depot, index, CloseReason::Flush)?);
                }
            }
        }
        Ok(routes)
    }
}

/// Where [`run_stream`] delivers its outputs. Route delivery is mandatory;
/// rejected packages and per-placement audit records are dropped unless
/// overridden.
pub trait StreamSinks {
    fn route(&mut self, route: &Route) -> Result<()>;

    fn reject(&mut self, package: &Package) -> Result<()> {
        let _ = package;
        Ok(())
    }

    fn decision(&mut self, decision: &PlacementDecision) -> Result<()> {
        let _ = decision;
        Ok(())
    }
}

/// Tallies for one full stream run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    /// Packages placed into a unit load.
    pub accepted: u64,
    /// Packages no empty vehicle could carry, delivered to the reject sink.
    pub rejected: u64,
    /// Malformed lines and packages naming unknown depots.
    pub skipped: u64,
    /// Routes dispatched, flush included.
    pub routes: u64,
    /// Auction work, summed over accepted packages.
    pub stats: PlaceStats,
}

/// Drives a whole package stream through the sorter: reads one package per
/// line, places each in arrival order, dispatches routes as loads close,
/// and flushes the remainder at end of input.
///
/// Bad data never aborts the run: malformed lines and unknown depot hints
/// are skipped with a logged warning, and packages that cannot fit an
/// empty vehicle go to the reject sink. I/O errors and sink failures do
/// abort.
pub fn run_stream<R: Read, S: StreamSinks>(
    state: &mut WarehouseState<'_>,
    packages: PackageReader<R>,
    sinks: &mut S,
) -> Result<StreamSummary> {
    let mut summary = StreamSummary::default();
    for item in packages {
        let p = match item {
            Ok(p) => p,
            Err(e) if e.is_input() => {
                log::warn!("skipping: {e}");
                summary.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match state.step(&p) {
            Ok((decision, stats, route)) => {
                summary.accepted += 1;
                summary.stats.absorb(stats);
                sinks.decision(&decision)?;
                if let Some(route) = route {
                    summary.routes += 1;
                    sinks.route(&route)?;
                }
            }
            Err(Error::Infeasible { ref package_id }) => {
                log::warn!("rejecting package {package_id}: no unit load can take it");
                summary.rejected += 1;
                sinks.reject(&p)?;
            }
            Err(e) if e.is_input() => {
                log::warn!("skipping package {}: {e}", p.id);
                summary.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    for route in state.flush()? {
        summary.routes += 1;
        sinks.route(&route)?;
    }
    Ok(summary)
}

/// One in-memory sorting run's outputs.
#[derive(Clone, Debug)]
pub struct SortRun {
    /// Dispatched routes in emission order, flush included.
    pub routes: Vec<Route>,
    /// Ids of packages no unit load could take.
    pub rejected: Vec<String>,
    pub summary: StreamSummary,
}

/// Sorts an in-memory batch of packages and returns everything at once:
/// the [`run_stream`] equivalent for callers that already hold the data,
/// such as parameter sweeps. Unlike `run_stream`, which skips bad stream
/// lines, a package naming an unknown depot is an error here — in-memory
/// callers produced the data themselves.
pub fn sort_slice(
    depots: &[Depot],
    rules: &RuleStore,
    cfg: &WarehouseConfig,
    packages: &[Package],
) -> Result<SortRun> {
    let mut state = WarehouseState::new(depots.to_vec(), rules, cfg.clone())?;
    let mut run = SortRun {
        routes: Vec::new(),
        rejected: Vec::new(),
        summary: StreamSummary::default(),
    };
    for p in packages {
        match state.step(p) {
            Ok((_, stats, route)) => {
                run.summary.accepted += 1;
                run.summary.stats.absorb(stats);
                if let Some(route) = route {
                    run.summary.routes += 1;
                    run.routes.push(route);
                }
            }
            Err(Error::Infeasible { package_id }) => {
                run.summary.rejected += 1;
                run.rejected.push(package_id);
            }
            Err(e) => return Err(e),
        }
    }
    for route in state.flush()? {
        run.summary.routes += 1;
        run.routes.push(route);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;
    use crate::domain::{write_packages, write_route, Depot};
    use crate::geocell::GeoPoint;
    use crate::rng::{range_f64, seeded};
    use crate::solver::nearest_neighbor_path;

    const DEPOT: (f64, f64) = (-19.92, -43.94);

    fn pt(lat: f64, lng: f64) -> GeoPoint {
        GeoPoint::new(lat, lng).unwrap()
    }

    fn pkg(id: &str, dest: GeoPoint, hint: Option<&str>) -> Package {
        Package {
            id: id.into(),
            dest,
            weight_g: 500,
            volume_ml: 2000,
            depot_hint: hint.map(String::from),
        }
    }

    fn sized(id: &str, dest: GeoPoint, weight_g: u64, volume_ml: u64) -> Package {
        Package {
            id: id.into(),
            dest,
            weight_g,
            volume_ml,
            depot_hint: None,
        }
    }

    fn depot(id: &str, lat: f64, lng: f64) -> Depot {
        Depot {
            id: id.into(),
            location: pt(lat, lng),
        }
    }

    fn small_cfg(n_unit_loads: usize, rho: f64) -> WarehouseConfig {
        WarehouseConfig {
            n_unit_loads,
            rho,
            ..WarehouseConfig::default()
        }
    }

    fn scatter(seed: u64, n: usize) -> Vec<Package> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|i| {
                let lat = range_f64(&mut rng, DEPOT.0 - 0.04, DEPOT.0 + 0.04);
                let lng = range_f64(&mut rng, DEPOT.1 - 0.04, DEPOT.1 + 0.04);
                pkg(&format!("p{i:03}"), pt(lat, lng), None)
            })
            .collect()
    }

    /// Collects everything the stream emits.
    #[derive(Default)]
    struct Collect {
        routes: Vec<Route>,
        rejects: Vec<Package>,
        decisions: Vec<PlacementDecision>,
    }

    impl StreamSinks for Collect {
        fn route(&mut self, route: &Route) -> Result<()> {
            self.routes.push(route.clone());
            Ok(())
        }

        fn reject(&mut self, package: &Package) -> Result<()> {
            self.rejects.push(package.clone());
            Ok(())
        }

        fn decision(&mut self, decision: &PlacementDecision) -> Result<()> {
            self.decisions.push(decision.clone());
            Ok(())
        }
    }

    /// Serializes routes and audit records, for byte-level comparisons.
    #[derive(Default)]
    struct Bytes {
        routes: Vec<u8>,
        audit: Vec<u8>,
    }

    impl StreamSinks for Bytes {
        fn route(&mut self, route: &Route) -> Result<()> {
            write_route(&mut self.routes, route)
        }

        fn decision(&mut self, decision: &PlacementDecision) -> Result<()> {
            serde_json::to_writer(&mut self.audit, decision)?;
            self.audit.push(b'\n');
            Ok(())
        }
    }

    #[test]
    fn nearest_depot_wins_without_a_hint() {
        let depots = [depot("ce0", -19.92, -43.94), depot("ce1", -19.85, -43.98)];
        let near_first = pkg("p1", pt(-19.93, -43.95), None);
        let near_second = pkg("p2", pt(-19.86, -43.97), None);
        assert_eq!(assign_depot(&near_first, &depots).unwrap(), 0);
        assert_eq!(assign_depot(&near_second, &depots).unwrap(), 1);
    }

    #[test]
    fn distance_ties_break_by_ascending_id() {
        // Two depots at the same point: distances are bitwise equal.
        let depots = [depot("ceb", -19.9, -43.9), depot("cea", -19.9, -43.9)];
        let p = pkg("p1", pt(-19.95, -43.93), None);
        assert_eq!(assign_depot(&p, &depots).unwrap(), 1, "cea sorts before ceb");
    }

    #[test]
    fn hint_overrides_distance() {
        let depots = [depot("ce0", -19.92, -43.94), depot("ce1", -19.85, -43.98)];
        let p = pkg("p1", pt(-19.93, -43.95), Some("ce1"));
        assert_eq!(assign_depot(&p, &depots).unwrap(), 1);
    }

    #[test]
    fn unknown_hint_is_an_input_error() {
        let depots = [depot("ce0", -19.92, -43.94)];
        let p = pkg("p1", pt(-19.93, -43.95), Some("ce9"));
        let err = assign_depot(&p, &depots).unwrap_err();
        assert!(err.is_input(), "got {err}");
        assert!(err.to_string().contains("ce9"));
    }

    #[test]
    fn empty_depot_list_is_an_input_error() {
        let p = pkg("p1", pt(-19.93, -43.95), None);
        assert!(assign_depot(&p, &[]).unwrap_err().is_input());
    }

    #[test]
    fn empty_bank_places_into_the_first_load() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, WarehouseConfig::default()).unwrap();
        let p = pkg("p1", pt(-19.93, -43.95), None);
        let (decision, stats) = state.place(&p).unwrap();
        assert_eq!(decision.unit_load, 0);
        assert_eq!(decision.winning_bet, 0.0);
        assert_eq!(decision.bets.len(), 28);
        assert!(decision.bets.iter().all(|b| b.feasible && b.value == 0.0));
        assert_eq!(stats.bets_computed, 28);
        assert_eq!(stats.distance_evals, 0, "empty loads hold nothing to measure");
        assert_eq!(state.loads(0)[0].count(), 1);
        assert_eq!(state.accepted(), 1);
        assert_eq!(state.in_flight(), 1);
    }

    #[test]
    fn distance_bid_pulls_neighbors_into_the_same_load() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        // Bids come from proximity alone.
        let mut state = WarehouseState::new(depots, &rules, small_cfg(4, 0.0)).unwrap();
        let here = pt(-19.931, -43.952);
        state.place(&pkg("p1", here, None)).unwrap();
        let (decision, _) = state.place(&pkg("p2", here, None)).unwrap();
        assert_eq!(decision.unit_load, 0, "the load holding a neighbor wins");
        // Zero distance to the nearest stop sits far below the logistic
        // midpoint, so the bid is nearly saturated.
        assert!(decision.winning_bet > 0.99, "got {}", decision.winning_bet);
    }

    #[test]
    fn zero_bets_fall_back_to_the_emptiest_lowest_load() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        // Rule bids only, and destinations two tenths of a degree apart so
        // no pair shares a footprint cell at any tracked level: every bet
        // stays exactly zero and only the tie rule decides.
        let mut state = WarehouseState::new(depots, &rules, small_cfg(3, 1.0)).unwrap();
        let dests = [
            pt(-19.92, -43.94),
            pt(-19.92, -43.74),
            pt(-19.72, -43.94),
            pt(-19.72, -43.74),
        ];
        let mut winners = Vec::new();
        for (i, dest) in dests.iter().enumerate() {
            let (decision, _) = state.place(&pkg(&format!("p{i}"), *dest, None)).unwrap();
            assert_eq!(decision.winning_bet, 0.0, "package {i}");
            winners.push(decision.unit_load);
        }
        assert_eq!(winners, [0, 1, 2, 0], "fewest packages first, then lowest index");
    }

    #[test]
    fn package_too_big_for_any_load_is_rejected() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, WarehouseConfig::default()).unwrap();
        // 30 kg against a 20 kg vehicle: no unit load can ever take it.
        let brick = sized("p1", pt(-19.93, -43.95), 30_000, 2_000);
        match state.place(&brick).unwrap_err() {
            Error::Infeasible { package_id } => assert_eq!(package_id, "p1"),
            other => panic!("expected a rejection, got {other}"),
        }
        assert_eq!(state.accepted(), 0);
        assert!(state.loads(0).iter().all(UnitLoad::is_empty));
    }

    #[test]
    fn auction_work_is_bounded_by_the_bank_size() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(5, 0.5)).unwrap();
        for p in scatter(0x5a75, 12) {
            let before: Vec<usize> = state.loads(0).iter().map(UnitLoad::count).collect();
            let (_, stats, _) = state.step(&p).unwrap();
            assert_eq!(stats.bets_computed, 5, "exactly one bet per unit load");
            assert_eq!(stats.distance_evals, before.iter().sum::<usize>() as u64);
            assert_eq!(stats.max_load_packages, *before.iter().max().unwrap() as u64);
        }
    }

    #[test]
    fn close_threshold_is_an_exact_rational_test() {
        let cfg = WarehouseConfig::default(); // closes at 8/10 of any dimension
        let mut load = UnitLoad::new(0, &cfg.levels);
        for i in 0..19 {
            let p = pkg(&format!("p{i}"), pt(-19.93, -43.95), None);
            load.try_add(p, &cfg.levels, &cfg.vehicle).unwrap();
        }
        // 19 of 25 packages, with weight and volume well below 80%.
        assert!(!should_close(&load, &cfg));
        let p = pkg("p19", pt(-19.93, -43.95), None);
        load.try_add(p, &cfg.levels, &cfg.vehicle).unwrap();
        // Exactly 20 of 25 = 8/10: the comparison is exact, not float-fuzzy.
        assert!(should_close(&load, &cfg));
    }

    #[test]
    fn any_capacity_dimension_can_close_a_load() {
        let cfg = WarehouseConfig::default();
        let mut by_volume = UnitLoad::new(0, &cfg.levels);
        for i in 0..5 {
            // 5 x 17.6 l = 88 l, exactly 80% of the 110 l vehicle.
            let p = sized(&format!("v{i}"), pt(-19.93, -43.95), 500, 17_600);
            by_volume.try_add(p, &cfg.levels, &cfg.vehicle).unwrap();
        }
        assert!(should_close(&by_volume, &cfg));

        let mut by_weight = UnitLoad::new(0, &cfg.levels);
        for i in 0..4 {
            // 4 x 4 kg = 16 kg, exactly 80% of the 20 kg vehicle.
            let p = sized(&format!("w{i}"), pt(-19.93, -43.95), 4_000, 2_000);
            by_weight.try_add(p, &cfg.levels, &cfg.vehicle).unwrap();
        }
        assert!(should_close(&by_weight, &cfg));

        let empty = UnitLoad::new(0, &cfg.levels);
        assert!(!should_close(&empty, &cfg), "empty loads never close");
    }

    #[test]
    fn closing_orders_stops_and_installs_a_fresh_load() {
        let rules = RuleStore::new();
        let home = depot("ce0", DEPOT.0, DEPOT.1);
        let mut state =
            WarehouseState::new(vec![home.clone()], &rules, small_cfg(2, 1.0)).unwrap();
        let dest = pt(-19.95, -43.97);
        state.place(&pkg("p1", dest, None)).unwrap();

        let route = state.close_unit_load(0, 0, CloseReason::Capacity).unwrap();
        assert_eq!(route.id, "r000001");
        assert_eq!(route.depot_id, "ce0");
        assert_eq!(route.package_ids, ["p1"]);
        assert_eq!(
            route.length_m,
            haversine_m(home.location, dest),
            "a single stop is one depot leg"
        );
        assert_eq!(route.close_reason, CloseReason::Capacity);

        let slot = &state.loads(0)[0];
        assert!(slot.is_empty());
        assert_eq!(slot.index(), 0, "the replacement takes the same slot");
        assert_eq!(slot.opened_at(), state.accepted());
        for level in state.config().levels.iter() {
            assert!(slot.footprint(level).is_empty(), "footprint must be wiped");
        }
        assert_eq!(state.routed(), 1);
        assert_eq!(state.in_flight(), 0);

        state.place(&pkg("p2", dest, None)).unwrap();
        let second = state.close_unit_load(0, 0, CloseReason::Capacity).unwrap();
        assert_eq!(second.id, "r000002", "route ids keep counting across closes");
    }

    #[test]
    fn closing_an_empty_load_is_a_contract_error() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(2, 0.5)).unwrap();
        for (depot, index) in [(0, 0), (0, 9), (3, 0)] {
            let err = state
                .close_unit_load(depot, index, CloseReason::Flush)
                .unwrap_err();
            assert!(
                matches!(err, Error::Contract(_)),
                "({depot}, {index}) gave {err}"
            );
        }
    }

    #[test]
    fn closed_route_is_no_longer_than_a_greedy_sweep() {
        let rules = RuleStore::new();
        let home = depot("ce0", DEPOT.0, DEPOT.1);
        let mut state =
            WarehouseState::new(vec![home.clone()], &rules, small_cfg(1, 1.0)).unwrap();
        let packages = scatter(0x70a2, 20);
        for p in &packages {
            state.place(p).unwrap();
        }
        let route = state.close_unit_load(0, 0, CloseReason::Capacity).unwrap();

        let stops: Vec<GeoPoint> = packages.iter().map(|p| p.dest).collect();
        let (_, greedy) = nearest_neighbor_path(home.location, &stops);
        assert!(
            route.length_m <= greedy + 1e-9,
            "{} > {greedy}",
            route.length_m
        );
        let mut got: Vec<&str> = route.package_ids.iter().map(String::as_str).collect();
        got.sort_unstable();
        let mut want: Vec<&str> = packages.iter().map(|p| p.id.as_str()).collect();
        want.sort_unstable();
        assert_eq!(got, want, "the route visits exactly the load's packages");
    }

    #[test]
    fn flush_dispatches_only_filled_loads() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(3, 1.0)).unwrap();
        for p in scatter(0xf1a5, 5) {
            state.place(&p).unwrap();
        }
        // The round-robin fallback spreads five packages as 2 + 2 + 1.
        let routes = state.flush().unwrap();
        assert_eq!(routes.len(), 3);
        assert!(routes.iter().all(|r| r.close_reason == CloseReason::Flush));
        let total: usize = routes.iter().map(|r| r.package_ids.len()).sum();
        assert_eq!(total, 5, "flush conserves in-flight packages");
        assert_eq!(state.in_flight(), 0);
        assert!(state.flush().unwrap().is_empty(), "a drained bank flushes to nothing");
    }

    #[test]
    fn flush_walks_depots_in_order() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1), depot("ce1", -19.85, -43.98)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(2, 1.0)).unwrap();
        state.place(&pkg("a", pt(-19.86, -43.97), None)).unwrap(); // nearest ce1
        state.place(&pkg("b", pt(-19.93, -43.95), None)).unwrap(); // nearest ce0
        state.place(&pkg("c", pt(-19.86, -43.99), None)).unwrap(); // ce1, load 1
        let routes = state.flush().unwrap();
        let depot_ids: Vec<&str> = routes.iter().map(|r| r.depot_id.as_str()).collect();
        assert_eq!(depot_ids, ["ce0", "ce1", "ce1"]);
        assert_eq!(routes[1].package_ids, ["a"]);
        assert_eq!(routes[2].package_ids, ["c"]);
    }

    #[test]
    fn stream_closes_loads_at_the_fill_threshold() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(1, 0.5)).unwrap();
        let packages = scatter(0xc105e, 45);
        let mut input = Vec::new();
        write_packages(&mut input, &packages).unwrap();

        let mut sinks = Collect::default();
        let summary =
            run_stream(&mut state, PackageReader::new(Cursor::new(input)), &mut sinks).unwrap();

        assert_eq!(summary.accepted, 45);
        assert_eq!(summary.routes, 3);
        let sizes: Vec<usize> = sinks.routes.iter().map(|r| r.package_ids.len()).collect();
        assert_eq!(sizes, [20, 20, 5], "the 8/10 count threshold fires at 20 of 25");
        let reasons: Vec<CloseReason> = sinks.routes.iter().map(|r| r.close_reason).collect();
        assert_eq!(
            reasons,
            [CloseReason::Capacity, CloseReason::Capacity, CloseReason::Flush]
        );
        let mut seen: Vec<&str> = sinks
            .routes
            .iter()
            .flat_map(|r| r.package_ids.iter().map(String::as_str))
            .collect();
        seen.sort_unstable();
        let mut want: Vec<&str> = packages.iter().map(|p| p.id.as_str()).collect();
        want.sort_unstable();
        assert_eq!(seen, want, "every accepted package rides exactly one route");
    }

    #[test]
    fn malformed_lines_are_skipped_and_the_rest_processed() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(2, 0.5)).unwrap();
        let packages = scatter(0xbad1, 2);
        let mut input = Vec::new();
        write_packages(&mut input, &packages[..1]).unwrap();
        input.extend_from_slice(b"{this is not json}\n");
        write_packages(&mut input, &packages[1..]).unwrap();

        let mut sinks = Collect::default();
        let summary =
            run_stream(&mut state, PackageReader::new(Cursor::new(input)), &mut sinks).unwrap();
        assert_eq!(summary.accepted, 2);
        assert_eq!(summary.skipped, 1);
        assert_eq!(summary.rejected, 0);
        let total: usize = sinks.routes.iter().map(|r| r.package_ids.len()).sum();
        assert_eq!(total, 2, "both valid packages still flow through");
    }

    #[test]
    fn rejects_and_unknown_hints_reach_their_outcomes() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let mut state = WarehouseState::new(depots, &rules, small_cfg(2, 0.5)).unwrap();
        let ok = pkg("p1", pt(-19.93, -43.95), None);
        let brick = sized("p2", pt(-19.93, -43.95), 30_000, 2_000);
        let lost = pkg("p3", pt(-19.93, -43.95), Some("nowhere"));
        let mut input = Vec::new();
        write_packages(&mut input, &[ok, brick, lost]).unwrap();

        let mut sinks = Collect::default();
        let summary =
            run_stream(&mut state, PackageReader::new(Cursor::new(input)), &mut sinks).unwrap();
        assert_eq!(
            (summary.accepted, summary.rejected, summary.skipped),
            (1, 1, 1)
        );
        assert_eq!(sinks.rejects.len(), 1);
        assert_eq!(sinks.rejects[0].id, "p2");
        assert_eq!(sinks.decisions.len(), 1, "only accepted packages are audited");
        assert_eq!(sinks.decisions[0].package_id, "p1");
        assert_eq!(sinks.routes.len(), 1, "the accepted package flushes out");
    }

    #[test]
    fn stream_replay_is_byte_identical() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let packages = scatter(0xd00d, 40);
        let mut input = Vec::new();
        write_packages(&mut input, &packages).unwrap();

        let mut outs = Vec::new();
        for _ in 0..2 {
            let mut state =
                WarehouseState::new(depots.clone(), &rules, small_cfg(4, 0.5)).unwrap();
            let mut sinks = Bytes::default();
            run_stream(
                &mut state,
                PackageReader::new(Cursor::new(input.clone())),
                &mut sinks,
            )
            .unwrap();
            outs.push((sinks.routes, sinks.audit));
        }
        assert!(!outs[0].0.is_empty());
        assert_eq!(outs[0].0, outs[1].0, "route files replay byte for byte");
        assert_eq!(outs[0].1, outs[1].1, "audit files replay byte for byte");
    }

    #[test]
    fn an_idle_load_closes_at_its_age_limit() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let cfg = WarehouseConfig {
            n_unit_loads: 1,
            rho: 1.0,
            max_age_packages: Some(3),
            ..WarehouseConfig::default()
        };
        let mut state = WarehouseState::new(depots, &rules, cfg).unwrap();
        let mut closed = Vec::new();
        for (i, p) in scatter(0xa9ed, 6).iter().enumerate() {
            let (_, _, route) = state.step(p).unwrap();
            if let Some(route) = route {
                closed.push((i, route));
            }
        }
        // The load starts filling at the first arrival; three arrivals
        // later it goes out even though it is far below the fill threshold.
        assert_eq!(closed.len(), 1);
        let (i, route) = &closed[0];
        assert_eq!(*i, 3, "closed on the fourth package");
        assert_eq!(route.package_ids.len(), 4);
        assert_eq!(route.close_reason, CloseReason::Capacity);
        assert_eq!(state.in_flight(), 2, "the newest packages wait in the fresh load");
    }

    #[test]
    fn slice_and_stream_sorting_agree() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", DEPOT.0, DEPOT.1)];
        let cfg = small_cfg(3, 0.5);
        let packages = scatter(0x51ce, 50);

        let run = sort_slice(&depots, &rules, &cfg, &packages).unwrap();

        let mut input = Vec::new();
        write_packages(&mut input, &packages).unwrap();
        let mut state = WarehouseState::new(depots.clone(), &rules, cfg).unwrap();
        let mut sinks = Collect::default();
        let summary =
            run_stream(&mut state, PackageReader::new(Cursor::new(input)), &mut sinks).unwrap();

        assert_eq!(run.summary, summary);
        assert_eq!(run.routes, sinks.routes);
        assert!(run.rejected.is_empty());
    }

    #[test]
    fn duplicate_depot_ids_are_rejected() {
        let rules = RuleStore::new();
        let depots = vec![depot("ce0", -19.92, -43.94), depot("ce0", -19.85, -43.98)];
        let err = WarehouseState::new(depots, &rules, WarehouseConfig::default())
            .err()
            .expect("duplicate ids must fail");
        assert!(err.is_input(), "got {err}");
        assert!(err.to_string().contains("ce0"));
    }
}
