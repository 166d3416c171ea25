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

//! Route construction.
//!
//! Two entry points share one local-search core. [`tsp_open_path`] orders a
//! single vehicle's stops as an open path from the depot, and is what turns
//! a closed unit load into a dispatchable route. [`solve_static`] plans a
//! whole batch at once: a savings merge under the three capacity caps, an
//! inter-route polish that relocates and swaps packages between nearby
//! routes (merging alone cannot repair a bad partition once routes hit the
//! count cap), then per-route improvement. [`batch_runner`] replays a
//! package stream through `solve_static` in consecutive batches, which is
//! the store-then-plan baseline the streaming sorter is measured against.
//!
//! All routes here are open paths: vehicles end at their last delivery and
//! do not return to the depot, so every move evaluation excludes a return
//! leg.

use rayon::prelude::*;

use crate::domain::{CloseReason, Depot, Package, Route, VehicleProfile};
use crate::error::{Error, Result};
use crate::geocell::{haversine_m, GeoPoint};
use crate::warehouse::assign_depot;

/// Improving moves smaller than this many meters are noise, not progress;
/// accepting them could cycle on floating-point dust.
const MIN_GAIN_M: f64 = 1e-9;

/// Neighbor-list width for savings candidate generation. Only the K
/// nearest partners of each package produce merge candidates, which keeps
/// candidate counts linear in the batch size.
const SAVINGS_NEIGHBORS: usize = 30;

/// One batch for the static planner.
#[derive(Clone, Debug)]
pub struct StaticInstance {
    pub depot: Depot,
    pub packages: Vec<Package>,
    pub vehicle: VehicleProfile,
}

/// A fleet plan: every package of the instance on exactly one route.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub routes: Vec<Route>,
    pub total_length_m: f64,
    pub route_count: usize,
    pub mean_packages_per_route: f64,
}

impl Solution {
    /// Builds a solution from finished routes, computing the aggregates.
    pub fn from_routes(routes: Vec<Route>) -> Solution {
        let total_length_m = routes.iter().map(|r| r.length_m).sum();
        let packages: usize = routes.iter().map(|r| r.package_ids.len()).sum();
        let route_count = routes.len();
        let mean_packages_per_route = if route_count == 0 {
            0.0
        } else {
            packages as f64 / route_count as f64
        };
        Solution {
            routes,
            total_length_m,
            route_count,
            mean_packages_per_route,
        }
    }

    pub fn package_count(&self) -> usize {
        self.routes.iter().map(|r| r.package_ids.len()).sum()
    }
}

/// A batched replay of a package stream: one solution per batch plus
/// stream-level aggregates.
#[derive(Clone, Debug)]
pub struct BatchRun {
    pub batch_size: usize,
    pub solutions: Vec<Solution>,
    pub total_length_m: f64,
    pub route_count: usize,
    pub package_count: usize,
    pub mean_packages_per_route: f64,
}

/// Distances for one instance: depot legs plus a full pairwise matrix.
/// Quadratic memory, so this is for vehicle-sized stop lists, not whole
/// batches; the savings planner never materializes it for a full batch.
struct Dist {
    n: usize,
    d0: Vec<f64>,
    dd: Vec<f64>,
}

impl Dist {
    fn build(depot: GeoPoint, pts: &[GeoPoint]) -> Dist {
        let n = pts.len();
        let d0 = pts.iter().map(|&p| haversine_m(depot, p)).collect();
        let mut dd = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = haversine_m(pts[i], pts[j]);
                dd[i * n + j] = d;
                dd[j * n + i] = d;
            }
        }
        Dist { n, d0, dd }
    }

    #[inline]
    fn between(&self, i: usize, j: usize) -> f64 {
        self.dd[i * self.n + j]
    }
}

fn path_len(d: &Dist, order: &[usize]) -> f64 {
    if order.is_empty() {
        return 0.0;
    }
    let mut len = d.d0[order[0]];
    for w in order.windows(2) {
        len += d.between(w[0], w[1]);
    }
    len
}

/// Greedy construction: start at the depot, repeatedly visit the nearest
/// unvisited stop. Ties go to the lowest index.
fn nn_order(d: &Dist) -> Vec<usize> {
    let n = d.n;
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur: Option<usize> = None;
    for _ in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if visited[j] {
                continue;
            }
            let dj = match cur {
                None => d.d0[j],
                Some(i) => d.between(i, j),
            };
            if best.map_or(true, |(bd, _)| dj < bd) {
                best = Some((dj, j));
            }
        }
        let (_, j) = best.expect("unvisited stop remains");
        visited[j] = true;
        order.push(j);
        cur = Some(j);
    }
    order
}

/// Which reconnection a 2-opt move uses once two edges are removed and the
/// visit order splits into prefix A, middle B, and tail C.
#[derive(Clone, Copy)]
enum Reconnect {
    /// A rev(B) C — the classic segment reversal.
    ReverseMid,
    /// A C B — the tail jumps ahead of the middle.
    TailFirst,
    /// A C rev(B) — tail ahead, middle reversed.
    TailFirstRevMid,
    /// A rev(C) B — tail reversed and ahead of the middle.
    RevTailFirst,
}

/// 2-opt for open paths: each move removes two edges, splitting the visit
/// order into prefix A, middle B = order[i..=j], and tail C, then
/// reconnects the pieces in the cheapest valid way. A closed tour admits
/// only the segment reversal, but a path's free end allows three more
/// reconnections (the tail can move ahead of the middle, with either piece
/// reversed), and all of them exchange exactly two edges. When the segment
/// ends at the last stop there is no outgoing edge (no return leg), so
/// reversing a suffix only pays for the new entry edge; reversing a prefix
/// re-costs the depot leg, which matters because open paths have a
/// direction. Applies the best improving move per sweep until none is
/// left; segment interiors keep their length, so every candidate is scored
/// from the two changed edges alone.
fn two_opt(d: &Dist, order: &mut Vec<usize>) {
    let n = order.len();
    if n < 2 {
        return;
    }
    loop {
        let mut best_delta = -MIN_GAIN_M;
        let mut best: Option<(usize, usize, Reconnect)> = None;
        for i in 0..n {
            let b_start = order[i];
            let d_prev = |x: usize| {
                if i == 0 {
                    d.d0[x]
                } else {
                    d.between(order[i - 1], x)
                }
            };
            let d_prev_b_start = d_prev(b_start);
            let mut consider = |delta: f64, j: usize, how: Reconnect| {
                if delta < best_delta {
                    best_delta = delta;
                    best = Some((i, j, how));
                }
            };
            for j in i..n {
                let b_end = order[j];
                if j + 1 < n {
                    let c_start = order[j + 1];
                    let c_end = order[n - 1];
                    let removed = d_prev_b_start + d.between(b_end, c_start);
                    if j > i {
                        let added = d_prev(b_end) + d.between(b_start, c_start);
                        consider(added - removed, j, Reconnect::ReverseMid);
                        let added = d_prev(c_start) + d.between(c_end, b_end);
                        consider(added - removed, j, Reconnect::TailFirstRevMid);
                    }
                    let added = d_prev(c_start) + d.between(c_end, b_start);
                    consider(added - removed, j, Reconnect::TailFirst);
                    if j + 2 < n {
                        let added = d_prev(c_end) + d.between(c_start, b_start);
                        consider(added - removed, j, Reconnect::RevTailFirst);
                    }
                } else if j > i {
                    // Empty tail: only the suffix reversal is left, and it
                    // exchanges the single entry edge.
                    consider(d_prev(b_end) - d_prev_b_start, j, Reconnect::ReverseMid);
                }
            }
        }
        match best {
            Some((i, j, Reconnect::ReverseMid)) => order[i..=j].reverse(),
            Some((i, j, how)) => {
                let mid: Vec<usize> = order[i..=j].to_vec();
                let tail: Vec<usize> = order[j + 1..].to_vec();
                order.truncate(i);
                match how {
                    Reconnect::TailFirst => {
                        order.extend(tail);
                        order.extend(mid);
                    }
                    Reconnect::TailFirstRevMid => {
                        order.extend(tail);
                        order.extend(mid.into_iter().rev());
                    }
                    Reconnect::RevTailFirst => {
                        order.extend(tail.into_iter().rev());
                        order.extend(mid);
                    }
                    Reconnect::ReverseMid => unreachable!(),
                }
            }
            None => break,
        }
    }
}

/// Orders one vehicle's stops as an open path from the depot: greedy
/// nearest-neighbor construction, then 2-opt until no improving move.
/// Returns indices into `points` in visit order plus the path length in
/// meters. Empty input yields an empty path of length zero.
pub fn tsp_open_path(depot: GeoPoint, points: &[GeoPoint]) -> (Vec<usize>, f64) {
    if points.is_empty() {
        return (Vec::new(), 0.0);
    }
    let d = Dist::build(depot, points);
    let mut order = nn_order(&d);
    two_opt(&d, &mut order);
    let len = path_len(&d, &order);
    (order, len)
}

/// The greedy construction alone, exposed so callers can check how much
/// the local search improves on it.
pub fn nearest_neighbor_path(depot: GeoPoint, points: &[GeoPoint]) -> (Vec<usize>, f64) {
    if points.is_empty() {
        return (Vec::new(), 0.0);
    }
    let d = Dist::build(depot, points);
    let order = nn_order(&d);
    let len = path_len(&d, &order);
    (order, len)
}

/// An open route being grown by the savings merge. The head stays adjacent
/// to the depot; the tail is the free end.
struct Growing {
    seq: std::collections::VecDeque<u32>,
    weight: u64,
    volume: u64,
}

/// A route during the polish phase: package indices in visit order,
/// running capacity totals, and the current open-path length.
struct Planned {
    seq: Vec<u32>,
    weight: u64,
    volume: u64,
    len: f64,
}

/// Modified routes at or below this many stops are re-ordered exactly
/// during polish moves. Insertion into a fixed order underestimates tiny
/// routes (it cannot reverse the remainder), which hides improving moves.
const EXACT_REORDER_LIMIT: usize = 5;

/// Exhaustively best open-path order of a few stops. Ties keep the first
/// permutation found, so the result is deterministic.
fn best_open_order(depot: GeoPoint, pts: &[GeoPoint], members: &[u32]) -> (Vec<u32>, f64) {
    debug_assert!(members.len() <= EXACT_REORDER_LIMIT);
    let mut work = members.to_vec();
    let mut best_seq = work.clone();
    let mut best_len = f64::INFINITY;
    permute_u32(&mut work, 0, &mut |perm| {
        let len = seq_len(depot, pts, perm);
        if len < best_len {
            best_len = len;
            best_seq = perm.to_vec();
        }
    });
    (best_seq, best_len)
}

fn permute_u32(items: &mut [u32], k: usize, visit: &mut dyn FnMut(&[u32])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_u32(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// The route that results from adding package `p`, with its new length.
/// Small results are ordered exactly; larger ones take the cheapest
/// insertion position in the current order.
fn add_one(
    depot: GeoPoint,
    pts: &[GeoPoint],
    seq: &[u32],
    len: f64,
    p: u32,
) -> (Vec<u32>, f64) {
    if seq.len() + 1 <= EXACT_REORDER_LIMIT {
        let mut members = seq.to_vec();
        members.push(p);
        best_open_order(depot, pts, &members)
    } else {
        let (pos, cost) = best_insertion(depot, pts, seq, p);
        (inserted(seq, pos, p), len + cost)
    }
}

/// The route that results from dropping `seq[pos]`, with its new length.
fn drop_one(
    depot: GeoPoint,
    pts: &[GeoPoint],
    seq: &[u32],
    len: f64,
    pos: usize,
) -> (Vec<u32>, f64) {
    if seq.len() == 1 {
        return (Vec::new(), 0.0);
    }
    if seq.len() - 1 <= EXACT_REORDER_LIMIT {
        best_open_order(depot, pts, &without(seq, pos))
    } else {
        let gain = removal_gain(depot, pts, seq, pos);
        (without(seq, pos), len - gain)
    }
}

/// Open-path length of a package index sequence.
fn seq_len(depot: GeoPoint, pts: &[GeoPoint], seq: &[u32]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let mut len = haversine_m(depot, pts[seq[0] as usize]);
    for w in seq.windows(2) {
        len += haversine_m(pts[w[0] as usize], pts[w[1] as usize]);
    }
    len
}

/// Length saved by dropping `seq[pos]` from an open path.
fn removal_gain(depot: GeoPoint, pts: &[GeoPoint], seq: &[u32], pos: usize) -> f64 {
    let here = pts[seq[pos] as usize];
    let prev = if pos == 0 {
        depot
    } else {
        pts[seq[pos - 1] as usize]
    };
    if pos + 1 < seq.len() {
        let next = pts[seq[pos + 1] as usize];
        haversine_m(prev, here) + haversine_m(here, next) - haversine_m(prev, next)
    } else {
        haversine_m(prev, here)
    }
}

/// Cheapest position to splice package `p` into an open path. Returns
/// (position, added length); ties go to the earliest position.
fn best_insertion(depot: GeoPoint, pts: &[GeoPoint], seq: &[u32], p: u32) -> (usize, f64) {
    let here = pts[p as usize];
    let mut best = (0usize, f64::INFINITY);
    for pos in 0..=seq.len() {
        let prev = if pos == 0 {
            depot
        } else {
            pts[seq[pos - 1] as usize]
        };
        let cost = if pos < seq.len() {
            let next = pts[seq[pos] as usize];
            haversine_m(prev, here) + haversine_m(here, next) - haversine_m(prev, next)
        } else {
            haversine_m(prev, here)
        };
        if cost < best.1 {
            best = (pos, cost);
        }
    }
    best
}

/// Runs 2-opt over every live route's current visit order and refreshes
/// the stored lengths.
fn improve_each_route(depot: GeoPoint, pts: &[GeoPoint], routes: &mut [Option<Planned>]) {
    for route in routes.iter_mut().flatten() {
        if route.seq.len() < 2 {
            route.len = seq_len(depot, pts, &route.seq);
            continue;
        }
        let stop_pts: Vec<GeoPoint> = route.seq.iter().map(|&p| pts[p as usize]).collect();
        let d = Dist::build(depot, &stop_pts);
        let mut order: Vec<usize> = (0..stop_pts.len()).collect();
        two_opt(&d, &mut order);
        let reordered: Vec<u32> = order.iter().map(|&k| route.seq[k]).collect();
        route.len = path_len(&d, &order);
        route.seq = reordered;
    }
}

fn without(seq: &[u32], pos: usize) -> Vec<u32> {
    let mut out = seq.to_vec();
    out.remove(pos);
    out
}

fn inserted(seq: &[u32], pos: usize, p: u32) -> Vec<u32> {
    let mut out = seq.to_vec();
    out.insert(pos, p);
    out
}

/// Where a polish move sends the package.
enum Target {
    Existing(usize),
    Fresh,
}

/// A candidate polish move for one package: the rebuilt source and target
/// routes with their new lengths.
struct PolishMove {
    target: Target,
    a_new: (Vec<u32>, f64),
    b_new: (Vec<u32>, f64),
    swapped: Option<u32>,
}

/// Inter-route improvement: for each package in index order, take the best
/// strictly improving move and apply it immediately. Moves are ejecting
/// the package onto a fresh route (consolidation is not always a win for
/// open routes, and merged routes at the count cap can only be repaired by
/// splitting), relocating it into a neighbor's route, or exchanging it
/// with a neighbor package. Repeats until a full pass applies nothing.
/// Every accepted move shortens the plan by more than [`MIN_GAIN_M`], so
/// the loop terminates; the pass cap is defensive.
fn polish_routes(
    depot: GeoPoint,
    pts: &[GeoPoint],
    instance: &StaticInstance,
    neighbors: &[Vec<u32>],
    routes: &mut Vec<Option<Planned>>,
    slot_of: &mut [usize],
) {
    const MAX_PASSES: usize = 12;
    let veh = &instance.vehicle;
    let weight = |p: u32| instance.packages[p as usize].weight_g;
    let volume = |p: u32| instance.packages[p as usize].volume_ml;
    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for p in 0..pts.len() as u32 {
            let a_slot = slot_of[p as usize];
            let a = routes[a_slot].as_ref().expect("live slot");
            let pos_p = a.seq.iter().position(|&x| x == p).expect("package on route");
            let a_without_p = drop_one(depot, pts, &a.seq, a.len, pos_p);

            let mut best_delta = -MIN_GAIN_M;
            let mut best: Option<PolishMove> = None;

            if a.seq.len() > 1 {
                let fresh_len = haversine_m(depot, pts[p as usize]);
                let delta = a_without_p.1 + fresh_len - a.len;
                if delta < best_delta {
                    best_delta = delta;
                    best = Some(PolishMove {
                        target: Target::Fresh,
                        a_new: a_without_p.clone(),
                        b_new: (vec![p], fresh_len),
                        swapped: None,
                    });
                }
            }

            let mut targets: Vec<usize> = neighbors[p as usize]
                .iter()
                .map(|&q| slot_of[q as usize])
                .filter(|&s| s != a_slot)
                .collect();
            targets.sort_unstable();
            targets.dedup();
            for &t in &targets {
                let b = routes[t].as_ref().expect("live slot");
                if b.seq.len() + 1 > veh.max_packages as usize
                    || b.weight + weight(p) > veh.max_weight
                    || b.volume + volume(p) > veh.max_volume
                {
                    continue;
                }
                let b_with_p = add_one(depot, pts, &b.seq, b.len, p);
                let delta = a_without_p.1 + b_with_p.1 - a.len - b.len;
                if delta < best_delta {
                    best_delta = delta;
                    best = Some(PolishMove {
                        target: Target::Existing(t),
                        a_new: a_without_p.clone(),
                        b_new: b_with_p,
                        swapped: None,
                    });
                }
            }

            for &q in &neighbors[p as usize] {
                let b_slot = slot_of[q as usize];
                if b_slot == a_slot {
                    continue;
                }
                let b = routes[b_slot].as_ref().expect("live slot");
                if a.weight - weight(p) + weight(q) > veh.max_weight
                    || a.volume - volume(p) + volume(q) > veh.max_volume
                    || b.weight - weight(q) + weight(p) > veh.max_weight
                    || b.volume - volume(q) + volume(p) > veh.max_volume
                {
                    continue;
                }
                let pos_q = b.seq.iter().position(|&x| x == q).expect("package on route");
                let b_without_q = drop_one(depot, pts, &b.seq, b.len, pos_q);
                let a_new = add_one(depot, pts, &a_without_p.0, a_without_p.1, q);
                let b_new = add_one(depot, pts, &b_without_q.0, b_without_q.1, p);
                let delta = a_new.1 + b_new.1 - a.len - b.len;
                if delta < best_delta {
                    best_delta = delta;
                    best = Some(PolishMove {
                        target: Target::Existing(b_slot),
                        a_new,
                        b_new,
                        swapped: Some(q),
                    });
                }
            }

            if let Some(mv) = best {
                let (a_seq, a_len) = mv.a_new;
                let (b_seq, b_len) = mv.b_new;
                {
                    let a_mut = routes[a_slot].as_mut().expect("live slot");
                    a_mut.seq = a_seq;
                    a_mut.len = a_len;
                    a_mut.weight -= weight(p);
                    a_mut.volume -= volume(p);
                    if let Some(q) = mv.swapped {
                        a_mut.weight += weight(q);
                        a_mut.volume += volume(q);
                        slot_of[q as usize] = a_slot;
                    }
                    if a_mut.seq.is_empty() {
                        routes[a_slot] = None;
                    }
                }
                let to = match mv.target {
                    Target::Existing(t) => {
                        let b_mut = routes[t].as_mut().expect("live slot");
                        b_mut.seq = b_seq;
                        b_mut.len = b_len;
                        b_mut.weight += weight(p);
                        b_mut.volume += volume(p);
                        if let Some(q) = mv.swapped {
                            b_mut.weight -= weight(q);
                            b_mut.volume -= volume(q);
                        }
                        t
                    }
                    Target::Fresh => {
                        routes.push(Some(Planned {
                            seq: b_seq,
                            weight: weight(p),
                            volume: volume(p),
                            len: b_len,
                        }));
                        routes.len() - 1
                    }
                };
                slot_of[p as usize] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Plans one batch from one depot: each package starts as its own route,
/// routes merge end-to-start in descending order of the savings value
/// saving(i, j) = d(depot, i) + d(depot, j) - d(i, j)
/// subject to the three capacity caps, an inter-route polish relocates and
/// swaps packages between nearby routes, and each final route gets a 2-opt
/// pass. Deterministic given input order: every tie falls back to index
/// order.
pub fn solve_static(instance: &StaticInstance) -> Result<Solution> {
    instance.vehicle.validate()?;
    let veh = &instance.vehicle;
    for p in &instance.packages {
        if p.weight_g > veh.max_weight || p.volume_ml > veh.max_volume {
            return Err(Error::Infeasible {
                package_id: p.id.clone(),
            });
        }
    }
    let n = instance.packages.len();
    if n == 0 {
        return Ok(Solution::from_routes(Vec::new()));
    }
    let depot_loc = instance.depot.location;
    let pts: Vec<GeoPoint> = instance.packages.iter().map(|p| p.dest).collect();
    let d0: Vec<f64> = pts.iter().map(|&p| haversine_m(depot_loc, p)).collect();

    // Candidate merges: each package pairs with its K nearest peers. The
    // pair distance is recomputed per row rather than stored in a full
    // matrix, which caps memory at O(n * K). The same neighbor lists drive
    // the polish phase afterwards.
    let k = SAVINGS_NEIGHBORS.min(n - 1);
    let mut cands: Vec<(f64, u32, u32, f64)> = Vec::with_capacity(n * k);
    let mut neighbors: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut row: Vec<(f64, u32)> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        for (j, &pj) in pts.iter().enumerate() {
            if j != i {
                row.push((haversine_m(pts[i], pj), j as u32));
            }
        }
        if row.len() > k {
            row.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite"));
            row.truncate(k);
        }
        row.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        neighbors.push(row.iter().map(|&(_, j)| j).collect());
        for &(dij, j) in row.iter() {
            let (a, b) = if (i as u32) < j {
                (i as u32, j)
            } else {
                (j, i as u32)
            };
            let saving = d0[a as usize] + d0[b as usize] - dij;
            cands.push((saving, a, b, dij));
        }
    }
    cands.sort_unstable_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .expect("finite")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    cands.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);

    let mut slots: Vec<Option<Growing>> = instance
        .packages
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Some(Growing {
                seq: std::collections::VecDeque::from([i as u32]),
                weight: p.weight_g,
                volume: p.volume_ml,
            })
        })
        .collect();
    let mut slot_of: Vec<usize> = (0..n).collect();

    for &(saving, i, j, _) in &cands {
        // The list is sorted descending; non-positive savings never help.
        if saving <= 0.0 {
            break;
        }
        let (i, j) = (i as usize, j as usize);
        let (si, sj) = (slot_of[i], slot_of[j]);
        if si == sj {
            continue;
        }
        let (ri, rj) = (
            slots[si].as_ref().expect("live slot"),
            slots[sj].as_ref().expect("live slot"),
        );
        if ri.seq.len() + rj.seq.len() > veh.max_packages as usize
            || ri.weight + rj.weight > veh.max_weight
            || ri.volume + rj.volume > veh.max_volume
        {
            continue;
        }
        // End-to-start only: the joined node pair must be one route's tail
        // and the other route's head. Joining drops the second route's
        // depot leg, so when both orientations are open (two singletons),
        // drop the longer leg.
        let fwd = *ri.seq.back().unwrap() == i as u32 && *rj.seq.front().unwrap() == j as u32;
        let rev = *rj.seq.back().unwrap() == j as u32 && *ri.seq.front().unwrap() == i as u32;
        let (first, second) = match (fwd, rev) {
            (true, true) if d0[i] > d0[j] => (sj, si),
            (true, true) => (si, sj),
            (true, false) => (si, sj),
            (false, true) => (sj, si),
            (false, false) => continue,
        };
        // Relabel the smaller side so total relabeling stays O(n log n).
        let (fst, sec) = (
            slots[first].take().expect("live slot"),
            slots[second].take().expect("live slot"),
        );
        if fst.seq.len() >= sec.seq.len() {
            let mut dst = fst;
            for &p in &sec.seq {
                dst.seq.push_back(p);
                slot_of[p as usize] = first;
            }
            dst.weight += sec.weight;
            dst.volume += sec.volume;
            slots[first] = Some(dst);
        } else {
            let mut dst = sec;
            for &p in fst.seq.iter().rev() {
                dst.seq.push_front(p);
                slot_of[p as usize] = second;
            }
            dst.weight += fst.weight;
            dst.volume += fst.volume;
            slots[second] = Some(dst);
        }
    }

    let mut planned: Vec<Option<Planned>> = slots
        .into_iter()
        .map(|s| {
            s.map(|g| {
                let seq: Vec<u32> = g.seq.into_iter().collect();
                let len = seq_len(depot_loc, &pts, &seq);
                Planned {
                    seq,
                    weight: g.weight,
                    volume: g.volume,
                    len,
                }
            })
        })
        .collect();
    improve_each_route(depot_loc, &pts, &mut planned);
    polish_routes(depot_loc, &pts, instance, &neighbors, &mut planned, &mut slot_of);
    improve_each_route(depot_loc, &pts, &mut planned);

    let mut routes = Vec::new();
    for route in planned.into_iter().flatten() {
        let length_m = route.len;
        routes.push(Route {
            id: format!("r{:04}", routes.len() + 1),
            depot_id: instance.depot.id.clone(),
            package_ids: route
                .seq
                .iter()
                .map(|&s| instance.packages[s as usize].id.clone())
                .collect(),
            length_m,
            close_reason: CloseReason::Capacity,
        });
    }
    Ok(Solution::from_routes(routes))
}

/// Replays a package stream as a batched static planner: consecutive
/// batches of `batch_size`, each split by depot assignment and solved
/// independently. Route ids are `b{batch}r{seq}`, numbered within each
/// batch, so results do not depend on batch execution order.
pub fn batch_runner(
    packages: &[Package],
    batch_size: usize,
    depots: &[Depot],
    vehicle: &VehicleProfile,
) -> Result<BatchRun> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if depots.is_empty() {
        return Err(Error::Config("at least one depot is required".into()));
    }
    vehicle.validate()?;
    let chunks: Vec<&[Package]> = packages.chunks(batch_size).collect();
    let solutions = chunks
        .par_iter()
        .enumerate()
        .map(|(bi, chunk)| solve_batch(bi, chunk, depots, vehicle))
        .collect::<Result<Vec<Solution>>>()?;
    let total_length_m = solutions.iter().map(|s| s.total_length_m).sum();
    let route_count: usize = solutions.iter().map(|s| s.route_count).sum();
    let package_count: usize = solutions.iter().map(|s| s.package_count()).sum();
    let mean_packages_per_route = if route_count == 0 {
        0.0
    } else {
        package_count as f64 / route_count as f64
    };
    Ok(BatchRun {
        batch_size,
        solutions,
        total_length_m,
        route_count,
        package_count,
        mean_packages_per_route,
    })
}

fn solve_batch(
    bi: usize,
    chunk: &[Package],
    depots: &[Depot],
    vehicle: &VehicleProfile,
) -> Result<Solution> {
    let mut groups: Vec<Vec<Package>> = vec![Vec::new(); depots.len()];
    for p in chunk {
        groups[assign_depot(p, depots)?].push(p.clone());
    }
    let mut routes = Vec::new();
    for (di, group) in groups.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let sol = solve_static(&StaticInstance {
            depot: depots[di].clone(),
            packages: group,
            vehicle: *vehicle,
        })?;
        routes.extend(sol.routes);
    }
    for (k, r) in routes.iter_mut().enumerate() {
        r.id = format!("b{:04}r{:04}", bi + 1, k + 1);
    }
    Ok(Solution::from_routes(routes))
}
