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

//! Streaming last-mile route construction.
//!
//! This crate builds delivery routes while parcels are still arriving at the
//! depot, instead of waiting for a full batch and solving a static routing
//! problem. The stream sorter assigns each arriving package to one of a fixed
//! set of unit loads through an auction: every unit load bids for the package
//! with a score blending (a) association rules mined from historical routes,
//! expressed over hierarchical geodetic cells, and (b) proximity of the
//! package's destination to the load's current contents. Full unit loads
//! close into routes ordered by an open-path heuristic.
//!
//! A static batch solver (savings construction plus 2-opt) provides the
//! baseline that the streaming approach is measured against, and the harness
//! module generates synthetic cities and runs the whole comparison.
//!
//! Module map:
//!
//! * [`geocell`]: hierarchical spherical cells and geodesic distance
//! * [`domain`]: packages, vehicles, depots, unit loads, routes
//! * [`mining`]: frequent destination patterns and association rules
//! * [`betting`]: unit-load bid computation
//! * [`warehouse`]: the streaming sorter itself
//! * [`solver`]: static open-route construction for baselines
//! * [`tuning`]: cross-validated search over bid parameters
//! * [`harness`]: synthetic city generation and end-to-end experiments

pub mod betting;
pub mod domain;
pub mod error;
pub mod geocell;
pub mod harness;
pub mod mining;
pub mod rng;
pub mod solver;
pub mod tuning;
pub mod warehouse;

pub use error::{Error, Result};
