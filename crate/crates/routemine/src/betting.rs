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

//! Unit-load bids.
//!
//! When a package arrives, every unit load computes a bid in [0, 1] saying
//! how well the package continues what the load already carries. The bid
//! blends two signals:
//!
//! * a mined-rule component: at each cell level, the confidence that loads
//!   covering the load's current cells also cover the package's cell,
//!   averaged across levels;
//! * a distance component: a falling logistic curve over the distance from
//!   the package's destination to the nearest destination in the load.
//!
//! An empty load has neither signal and bids exactly 0, so it only wins when
//! no non-empty load is feasible.

use serde::{Deserialize, Serialize};

use crate::domain::{fits, Package, UnitLoad, WarehouseConfig};
use crate::error::Result;
use crate::geocell::{cell_at, haversine_m, CellId, LevelSet};
use crate::mining::RuleStore;

/// How a load's cell footprint is matched against mined rule antecedents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchingMode {
    /// Look up one exact key: the most recent distinct footprint cells, at
    /// most `max_antecedent` of them, sorted. Constant-time per level.
    #[serde(rename = "exact")]
    Exact,
    /// Scan all rules predicting the package's cell and take the best
    /// confidence among those whose antecedent the footprint covers.
    /// Finds more matches, costs a scan per level.
    #[serde(rename = "best-subset")]
    BestSubset,
}

/// Bid curve parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetParams {
    /// Weight of the mined-rule component; 1 - rho goes to distance.
    pub rho: f64,
    /// Logistic steepness per meter.
    pub gamma: f64,
    /// Distance in meters where the distance bid crosses 0.5.
    pub delta: f64,
}

impl BetParams {
    pub fn from_config(cfg: &WarehouseConfig) -> BetParams {
        BetParams {
            rho: cfg.rho,
            gamma: cfg.gamma,
            delta: cfg.delta,
        }
    }
}

/// One unit load's bid for one package.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bet {
    /// rho * data_mining + (1 - rho) * distance, in [0, 1].
    pub value: f64,
    /// False when the package does not fit this load.
    pub feasible: bool,
    /// Mined-rule component, in [0, 1].
    pub data_mining: f64,
    /// Distance component, in [0, 1].
    pub distance: f64,
}

/// Distance from the package's destination to the nearest destination
/// already in the load. `None` for an empty load.
pub fn d_min(load: &UnitLoad, p: &Package) -> Option<f64> {
    load.packages()
        .iter()
        .map(|q| haversine_m(q.dest, p.dest))
        .min_by(|a, b| a.partial_cmp(b).expect("haversine is finite"))
}

/// Logistic distance bid: 1 / (1 + e^(gamma * (d - delta))).
///
/// At d = delta the bid is exactly 0.5; it falls towards 0 as the package
/// moves away and rises towards 1 as it approaches. gamma = 0 degenerates
/// to a flat 0.5. An empty load (`None`) bids 0: no contents, no proximity.
pub fn bet_distance(d_min: Option<f64>, params: &BetParams) -> f64 {
    match d_min {
        // exp saturates to +inf for huge arguments, which correctly gives
        // 0.0 rather than NaN.
        Some(d) => 1.0 / (1.0 + (params.gamma * (d - params.delta)).exp()),
        None => 0.0,
    }
}

/// Mined-rule bid: the mean over tracked levels of the per-level match.
///
/// At each level, if the package's cell is already in the load's footprint
/// the level contributes 1.0 (the strongest possible evidence: the load
/// already goes there, no rule needed). Otherwise the footprint is matched
/// against the store per `mode`; a missing rule contributes 0.0.
pub fn bet_data_mining(
    load: &UnitLoad,
    p: &Package,
    store: &RuleStore,
    levels: &LevelSet,
    mode: MatchingMode,
    max_antecedent: usize,
) -> Result<f64> {
    if load.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for level in levels.iter() {
        let package_cell = cell_at(p.dest, level)?;
        let cells = load.footprint(level);
        sum += if cells.contains(&package_cell) {
            1.0
        } else {
            match mode {
                MatchingMode::Exact => {
                    let start = cells.len().saturating_sub(max_antecedent);
                    let mut key: Vec<CellId> = cells[start..].to_vec();
                    key.sort_unstable();
                    store.confidence_of(level, &key, package_cell)
                }
                MatchingMode::BestSubset => store
                    .rules_for_consequent(level, package_cell)
                    .iter()
                    .filter(|r| r.antecedent.iter().all(|a| cells.contains(a)))
                    .map(|r| r.confidence)
                    .fold(0.0, f64::max),
            }
        };
    }
    Ok(sum / levels.len() as f64)
}

/// Full bid for one load and one package.
pub fn compute_bet(
    load: &UnitLoad,
    p: &Package,
    store: &RuleStore,
    cfg: &WarehouseConfig,
) -> Result<Bet> {
    let params = BetParams::from_config(cfg);
    let feasible = fits(load, p, &cfg.vehicle);
    let data_mining =
        bet_data_mining(load, p, store, &cfg.levels, cfg.matching, cfg.max_antecedent)?;
    let distance = bet_distance(d_min(load, p), &params);
    Ok(Bet {
        value: cfg.rho * data_mining + (1.0 - cfg.rho) * distance,
        feasible,
        data_mining,
        distance,
    })
}
