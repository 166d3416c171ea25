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

//! Cross-validated grid search for the distance bid's shape parameters,
//! `gamma` (logistic steepness) and `delta` (logistic midpoint).
//!
//! The package stream is split into `k` contiguous folds — contiguous, not
//! shuffled, because arrival order is part of the problem being scored.
//! Every (gamma, delta) combination runs the streaming sorter over each
//! fold and is scored by the mean, across folds, of the total open-route
//! distance it produced (route count is carried as a secondary column and
//! can be selected as the objective instead). The least-cost combination
//! wins; ties prefer the smaller delta, then the smaller gamma.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Depot, Package, WarehouseConfig};
use crate::error::{Error, Result};
use crate::mining::RuleStore;
use crate::warehouse::sort_slice;

/// What a grid point is scored by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneObjective {
    /// Mean, across folds, of the total route distance. The default.
    #[default]
    TotalDistance,
    /// Mean, across folds, of the number of routes dispatched.
    RouteCount,
}

/// The hyperparameter grid and fold count for one search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningGrid {
    /// Candidate logistic steepness values, per meter.
    pub gamma_values: Vec<f64>,
    /// Candidate logistic midpoints, in meters.
    pub delta_values: Vec<f64>,
    /// Fold count; the stream is cut into this many contiguous segments.
    pub k: usize,
    pub objective: TuneObjective,
}

impl Default for TuningGrid {
    /// Eleven evenly spaced values per axis: gamma from 0 to 10/2000 and
    /// delta from 0 to 5000 m, in tenths. An 11 x 11 = 121-point grid
    /// centered on the default sorter configuration.
    fn default() -> TuningGrid {
        TuningGrid {
            gamma_values: (0..=10).map(|i| (10.0 / 2000.0) * (i as f64 / 10.0)).collect(),
            delta_values: (0..=10).map(|i| 5000.0 * (i as f64 / 10.0)).collect(),
            k: 5,
            objective: TuneObjective::TotalDistance,
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_values.is_empty() || self.delta_values.is_empty() {
            return Err(Error::Config("tuning grid axes must be non-empty".into()));
        }
        for &g in &self.gamma_values {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::Config(format!(
                    "gamma candidate {g} must be finite and non-negative"
                )));
            }
        }
        for &d in &self.delta_values {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Config(format!(
                    "delta candidate {d} must be finite and non-negative"
                )));
            }
        }
        if self.k < 2 {
            return Err(Error::Config(format!(
                "fold count {} must be at least 2",
                self.k
            )));
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TuneScore {
    pub gamma: f64,
    pub delta: f64,
    /// Mean, across folds, of the total route distance in meters.
    pub mean_distance_m: f64,
    /// Mean, across folds, of the routes dispatched.
    pub mean_routes: f64,
}

/// A finished search: the winning combination plus every score behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub gamma: f64,
    pub delta: f64,
    /// All evaluated grid points, gamma-major ascending.
    pub scores: Vec<TuneScore>,
}

/// Contiguous, equal-as-possible fold boundaries covering `0..n`.
fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|i| (i * n / k, (i + 1) * n / k)).collect()
}

/// Sorted ascending with exact duplicates removed, so each grid point is
/// evaluated once and the score table has one row per distinct pair.
fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_unstable_by(f64::total_cmp);
    out.dedup();
    out
}

/// True when `a` beats `b`: strictly better objective, with ties broken by
/// smaller delta, then smaller gamma.
fn beats(a: &TuneScore, b: &TuneScore, objective: TuneObjective) -> bool {
    let (sa, sb) = match objective {
        TuneObjective::TotalDistance => (a.mean_distance_m, b.mean_distance_m),
        TuneObjective::RouteCount => (a.mean_routes, b.mean_routes),
    };
    sa < sb
        || (sa == sb && (a.delta < b.delta || (a.delta == b.delta && a.gamma < b.gamma)))
}

/// Evaluates every grid combination by k-fold cross-validation over the
/// package stream and returns the best (gamma, delta) with the full score
/// table. Grid points are independent and evaluated in parallel; the table
/// order and the winner are deterministic regardless of scheduling.
pub fn grid_search(
    depots: &[Depot],
    packages: &[Package],
    store: &RuleStore,
    cfg: &WarehouseConfig,
    grid: &TuningGrid,
) -> Result<TuneOutcome> {
    grid.validate()?;
    cfg.validate()?;
    if packages.len() < grid.k {
        return Err(Error::Input(format!(
            "{} packages cannot fill {} folds",
            packages.len(),
            grid.k
        )));
    }
    let gammas = distinct_sorted(&grid.gamma_values);
    let deltas = distinct_sorted(&grid.delta_values);
    let folds = fold_bounds(packages.len(), grid.k);
    let combos: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| deltas.iter().map(move |&d| (g, d)))
        .collect();

    let scores = combos
        .par_iter()
        .map(|&(gamma, delta)| {
            let mut tuned = cfg.clone();
            tuned.gamma = gamma;
            tuned.delta = delta;
            let mut distance_sum = 0.0;
            let mut route_sum = 0usize;
            for &(lo, hi) in &folds {
                let run = sort_slice(depots, store, &tuned, &packages[lo..hi])?;
                distance_sum += run.routes.iter().map(|r| r.length_m).sum::<f64>();
                route_sum += run.routes.len();
            }
            let k = folds.len() as f64;
            Ok(TuneScore {
                gamma,
                delta,
                mean_distance_m: distance_sum / k,
                mean_routes: route_sum as f64 / k,
            })
        })
        .collect::<Result<Vec<TuneScore>>>()?;

    let mut best = 0usize;
    for i in 1..scores.len() {
        if beats(&scores[i], &scores[best], grid.objective) {
            best = i;
        }
    }
    Ok(TuneOutcome {
        gamma: scores[best].gamma,
        delta: scores[best].delta,
        scores,
    })
}

/// Writes the score table as CSV with a fixed column order.
pub fn write_scores_csv<W: Write>(mut w: W, scores: &[TuneScore]) -> Result<()> {
    writeln!(w, "gamma,delta,mean_distance_m,mean_routes")?;
    for s in scores {
        writeln!(
            w,
            "{},{},{},{}",
            s.gamma, s.delta, s.mean_distance_m, s.mean_routes
        )?;
    }
    Ok(())
}
