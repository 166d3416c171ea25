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

//! Core entities: packages, vehicles, depots, unit loads, and routes.
//!
//! Capacities are integers (grams, milliliters, counts) so that feasibility
//! checks are exact; there is no accumulated floating-point drift across a
//! long stream of insertions. The closing threshold is an exact rational for
//! the same reason: whether 20 of 25 packages reaches 80% must not depend on
//! how 0.8 rounds in binary.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocell::{cell_at, CellId, GeoPoint, LevelSet};

/// Exact rational in (0, 1], used for fill thresholds.
///
/// Constructed from an `f64` by parsing its shortest decimal representation,
/// so a config value written as `0.8` means exactly 8/10 rather than the
/// nearest binary double. Threshold checks like "count / capacity reached
/// the fraction" then compare integer cross-products and cannot be thrown
/// off by products such as 0.07 * 100 landing a hair above the integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Ratio> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::Config(format!(
                "ratio {num}/{den} must lie in (0, 1]"
            )));
        }
        let g = gcd(num, den);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    /// Parses the shortest decimal form of `f`, e.g. 0.8 becomes 8/10.
    pub fn from_f64(f: f64) -> Result<Ratio> {
        if !f.is_finite() || f <= 0.0 || f > 1.0 {
            return Err(Error::Config(format!("ratio {f} must lie in (0, 1]")));
        }
        let text = format!("{f}");
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text.as_str(), ""),
        };
        if frac_part.len() > 18 {
            return Err(Error::Config(format!("ratio {f} has no short decimal form")));
        }
        let den = 10u64.pow(frac_part.len() as u32);
        let int: u64 = int_part
            .parse()
            .map_err(|_| Error::Config(format!("ratio {f} is not a plain decimal")))?;
        let frac: u64 = if frac_part.is_empty() {
            0
        } else {
            frac_part
                .parse()
                .map_err(|_| Error::Config(format!("ratio {f} is not a plain decimal")))?
        };
        Ratio::new(int * den + frac, den)
    }

    /// True when num/den >= self, compared exactly.
    pub fn reached_by(&self, num: u64, den: u64) -> bool {
        debug_assert!(den > 0);
        (num as u128) * (self.den as u128) >= (self.num as u128) * (den as u128)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl TryFrom<f64> for Ratio {
    type Error = Error;

    fn try_from(f: f64) -> Result<Ratio> {
        Ratio::from_f64(f)
    }
}

impl From<Ratio> for f64 {
    fn from(r: Ratio) -> f64 {
        r.as_f64()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Vehicle capacity in integer units: milliliters, grams, package count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleProfile {
    pub max_volume: u64,
    pub max_weight: u64,
    pub max_packages: u32,
}

impl VehicleProfile {
    pub fn validate(&self) -> Result<()> {
        if self.max_volume == 0 || self.max_weight == 0 || self.max_packages == 0 {
            return Err(Error::Config(
                "vehicle capacities must all be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for VehicleProfile {
    /// Motorcycle courier: 110 liter top case, 20 kg, 25 packages.
    fn default() -> VehicleProfile {
        VehicleProfile {
            max_volume: 110_000,
            max_weight: 20_000,
            max_packages: 25,
        }
    }
}

/// One parcel to deliver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PackageRecord", into = "PackageRecord")]
pub struct Package {
    pub id: String,
    pub dest: GeoPoint,
    pub weight_g: u64,
    pub volume_ml: u64,
    /// Depot this package is pre-assigned to, if the upstream system chose.
    pub depot_hint: Option<String>,
}

/// Wire form: one JSON object per line.
#[derive(Serialize, Deserialize)]
struct PackageRecord {
    id: String,
    lat: f64,
    lng: f64,
    weight_g: u64,
    volume_ml: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depot_id: Option<String>,
}

impl TryFrom<PackageRecord> for Package {
    type Error = Error;

    fn try_from(r: PackageRecord) -> Result<Package> {
        if r.id.is_empty() {
            return Err(Error::Input("package id must not be empty".into()));
        }
        if r.weight_g == 0 || r.volume_ml == 0 {
            return Err(Error::Input(format!(
                "package {}: weight and volume must be positive",
                r.id
            )));
        }
        Ok(Package {
            id: r.id,
            dest: GeoPoint::new(r.lat, r.lng)?,
            weight_g: r.weight_g,
            volume_ml: r.volume_ml,
            depot_hint: r.depot_id,
        })
    }
}

impl From<Package> for PackageRecord {
    fn from(p: Package) -> PackageRecord {
        PackageRecord {
            id: p.id,
            lat: p.dest.lat(),
            lng: p.dest.lng(),
            weight_g: p.weight_g,
            volume_ml: p.volume_ml,
            depot_id: p.depot_hint,
        }
    }
}

/// A dispatch center packages are sorted at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DepotRecord", into = "DepotRecord")]
pub struct Depot {
    pub id: String,
    pub location: GeoPoint,
}

#[derive(Serialize, Deserialize)]
struct DepotRecord {
    id: String,
    lat: f64,
    lng: f64,
}

impl TryFrom<DepotRecord> for Depot {
    type Error = Error;

    fn try_from(r: DepotRecord) -> Result<Depot> {
        if r.id.is_empty() {
            return Err(Error::Input("depot id must not be empty".into()));
        }
        Ok(Depot {
            id: r.id,
            location: GeoPoint::new(r.lat, r.lng)?,
        })
    }
}

impl From<Depot> for DepotRecord {
    fn from(d: Depot) -> DepotRecord {
        DepotRecord {
            id: d.id,
            lat: d.location.lat(),
            lng: d.location.lng(),
        }
    }
}

/// True when the load can accept the package under the vehicle's limits.
pub fn fits(load: &UnitLoad, p: &Package, vehicle: &VehicleProfile) -> bool {
    load.packages.len() < vehicle.max_packages as usize
        && load.used_volume + p.volume_ml <= vehicle.max_volume
        && load.used_weight + p.weight_g <= vehicle.max_weight
}

/// An open container being filled by the sorter; becomes one route on close.
///
/// Alongside the raw contents the load tracks its destination footprint: at
/// each tracked cell level, the distinct cells its packages fall in, kept in
/// recency order (an existing cell moves to the back when hit again). Bid
/// computation reads this instead of rescanning packages.
#[derive(Clone, Debug)]
pub struct UnitLoad {
    index: usize,
    packages: Vec<Package>,
    used_volume: u64,
    used_weight: u64,
    footprint: Vec<(u8, Vec<CellId>)>,
    /// Stream position at which this load started filling, for age limits.
    opened_at: u64,
}

impl UnitLoad {
    pub fn new(index: usize, levels: &LevelSet) -> UnitLoad {
        UnitLoad {
            index,
            packages: Vec::new(),
            used_volume: 0,
            used_weight: 0,
            footprint: levels.iter().map(|l| (l, Vec::new())).collect(),
            opened_at: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn packages(&self) -> &[Package] {
        &self.packages
    }

    pub fn count(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn used_volume(&self) -> u64 {
        self.used_volume
    }

    pub fn used_weight(&self) -> u64 {
        self.used_weight
    }

    pub fn opened_at(&self) -> u64 {
        self.opened_at
    }

    /// Distinct cells of the load's packages at `level`, oldest first.
    /// Empty when the level is not tracked or the load is empty.
    pub fn footprint(&self, level: u8) -> &[CellId] {
        self.footprint
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, cells)| cells.as_slice())
            .unwrap_or(&[])
    }

    /// Adds a package, updating totals and footprints. The caller must have
    /// checked `fits`; violating it is a contract error.
    pub fn try_add(
        &mut self,
        p: Package,
        levels: &LevelSet,
        vehicle: &VehicleProfile,
    ) -> Result<()> {
        if !fits(self, &p, vehicle) {
            return Err(Error::Contract(format!(
                "package {} added to unit load {} beyond capacity",
                p.id, self.index
            )));
        }
        debug_assert_eq!(self.footprint.len(), levels.len());
        for (level, cells) in &mut self.footprint {
            let cell = cell_at(p.dest, *level)?;
            if let Some(pos) = cells.iter().position(|c| *c == cell) {
                cells.remove(pos);
            }
            cells.push(cell);
        }
        self.used_volume += p.volume_ml;
        self.used_weight += p.weight_g;
        self.packages.push(p);
        Ok(())
    }

    /// Empties the load for reuse, returning its packages. `opened_at`
    /// restarts at the given stream position.
    pub fn reset(&mut self, opened_at: u64) -> Vec<Package> {
        self.used_volume = 0;
        self.used_weight = 0;
        for (_, cells) in &mut self.footprint {
            cells.clear();
        }
        self.opened_at = opened_at;
        std::mem::take(&mut self.packages)
    }
}

/// Why a route left the warehouse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloseReason {
    /// The unit load reached the configured fill threshold.
    Capacity,
    /// End of stream; remaining non-empty loads are dispatched as-is.
    Flush,
}

/// A finished delivery route: an ordered visit list starting at a depot.
/// Routes are open paths; the vehicle does not return to the depot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    #[serde(rename = "route_id")]
    pub id: String,
    pub depot_id: String,
    pub package_ids: Vec<String>,
    pub length_m: f64,
    pub close_reason: CloseReason,
}

/// Sorter configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarehouseConfig {
    /// Unit loads operating concurrently per depot.
    pub n_unit_loads: usize,
    /// A load closes when any capacity dimension reaches this fraction.
    pub close_fraction: Ratio,
    pub vehicle: VehicleProfile,
    /// Cell levels used for footprints, rule lookups, and bids.
    pub levels: LevelSet,
    /// Weight of the rule-based bid component; 1 - rho goes to distance.
    pub rho: f64,
    /// Steepness of the distance bid's logistic curve, per meter.
    pub gamma: f64,
    /// Distance in meters at which the distance bid crosses 0.5.
    pub delta: f64,
    /// How load footprints are matched against mined rules.
    pub matching: crate::betting::MatchingMode,
    /// Longest rule antecedent considered when matching.
    pub max_antecedent: usize,
    /// Close a load this many stream steps after it started filling, even if
    /// below the fill threshold. Checked on the load that just received a
    /// package. Off by default.
    pub max_age_packages: Option<u64>,
}

impl Default for WarehouseConfig {
    fn default() -> WarehouseConfig {
        WarehouseConfig {
            n_unit_loads: 28,
            close_fraction: Ratio::new(8, 10).expect("static ratio"),
            vehicle: VehicleProfile::default(),
            levels: LevelSet::default(),
            rho: 0.5,
            gamma: 0.0025,
            delta: 2500.0,
            matching: crate::betting::MatchingMode::Exact,
            max_antecedent: 6,
            max_age_packages: None,
        }
    }
}

impl WarehouseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_unit_loads == 0 {
            return Err(Error::Config("n_unit_loads must be positive".into()));
        }
        self.vehicle.validate()?;
        if !(0.0..=1.0).contains(&self.rho) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho {} must lie in [0, 1]", self.rho)));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!(
                "gamma {} must be finite and non-negative",
                self.gamma
            )));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!(
                "delta {} must be finite and non-negative",
                self.delta
            )));
        }
        if self.max_antecedent == 0 {
            return Err(Error::Config("max_antecedent must be positive".into()));
        }
        if self.max_age_packages == Some(0) {
            return Err(Error::Config("max_age_packages must be positive".into()));
        }
        Ok(())
    }
}

// --- JSONL input and output ---
//
// All stream files are JSON Lines: one object per line, UTF-8, no padding.
// Writers emit fields in struct order with serde_json's shortest-roundtrip
// float form, so rewriting a parsed file reproduces it byte for byte.

/// Streaming package reader. Yields one result per non-empty line so the
/// caller decides whether a malformed line aborts or is skipped.
pub struct PackageReader<R: Read> {
    lines: std::io::Lines<BufReader<R>>,
    line_no: usize,
}

impl<R: Read> PackageReader<R> {
    pub fn new(r: R) -> PackageReader<R> {
        PackageReader {
            lines: BufReader::new(r).lines(),
            line_no: 0,
        }
    }
}

impl<R: Read> Iterator for PackageReader<R> {
    type Item = Result<Package>;

    fn next(&mut self) -> Option<Result<Package>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<Package>(&line).map_err(|e| {
                Error::Input(format!("package line {}: {e}", self.line_no))
            });
            return Some(parsed);
        }
    }
}

/// Reads a whole package file, failing on the first malformed line.
pub fn read_packages(path: &Path) -> Result<Vec<Package>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    PackageReader::new(file).collect()
}

pub fn write_packages<W: Write>(mut w: W, packages: &[Package]) -> Result<()> {
    for p in packages {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_routes(path: &Path) -> Result<Vec<Route>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut routes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        routes.push(
            serde_json::from_str::<Route>(&line)
                .map_err(|e| Error::Input(format!("route line {}: {e}", i + 1)))?,
        );
    }
    Ok(routes)
}

pub fn write_routes<W: Write>(mut w: W, routes: &[Route]) -> Result<()> {
    for r in routes {
        write_route(&mut w, r)?;
    }
    Ok(())
}

pub fn write_route<W: Write>(mut w: W, route: &Route) -> Result<()> {
    serde_json::to_writer(&mut w, route)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_depots(path: &Path) -> Result<Vec<Depot>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut depots = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        depots.push(
            serde_json::from_str::<Depot>(&line)
                .map_err(|e| Error::Input(format!("depot line {}: {e}", i + 1)))?,
        );
    }
    if depots.is_empty() {
        return Err(Error::Input(format!(
            "{} contains no depots",
            path.display()
        )));
    }
    Ok(depots)
}

pub fn write_depots<W: Write>(mut w: W, depots: &[Depot]) -> Result<()> {
    for d in depots {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkg(id: &str, lat: f64, lng: f64, weight_g: u64, volume_ml: u64) -> Package {
        Package {
            id: id.into(),
            dest: GeoPoint::new(lat, lng).unwrap(),
            weight_g,
            volume_ml,
            depot_hint: None,
        }
    }

    #[test]
    fn ratio_from_decimal_is_exact() {
        let r = Ratio::from_f64(0.8).unwrap();
        assert_eq!(r, Ratio::new(4, 5).unwrap());
        // The float product can land just above the exact threshold, at
        // which point a naive `count >= fraction * capacity` misjudges a
        // count that reaches the fraction exactly. The rational compare
        // cannot.
        assert!(7.0 < 0.07 * 100.0);
        assert!(Ratio::from_f64(0.07).unwrap().reached_by(7, 100));
        assert!(r.reached_by(20, 25));
        assert!(!r.reached_by(19, 25));
        assert!(r.reached_by(4, 5));
        assert!(r.reached_by(88_000, 110_000));
        assert!(!r.reached_by(87_999, 110_000));

        assert_eq!(Ratio::from_f64(1.0).unwrap(), Ratio::new(1, 1).unwrap());
        assert_eq!(Ratio::from_f64(0.75).unwrap(), Ratio::new(3, 4).unwrap());
        assert!(Ratio::from_f64(0.0).is_err());
        assert!(Ratio::from_f64(-0.5).is_err());
        assert!(Ratio::from_f64(1.5).is_err());
        assert!(Ratio::from_f64(f64::NAN).is_err());
        assert!(Ratio::new(0, 5).is_err());
        assert!(Ratio::new(6, 5).is_err());
        assert!(Ratio::new(5, 0).is_err());
    }

    #[test]
    fn ratio_handles_long_decimals() {
        // A float without a short decimal form still parses exactly from
        // its shortest representation.
        let f = 1.0 / 3.0;
        let r = Ratio::from_f64(f).unwrap();
        assert!((r.as_f64() - f).abs() < 1e-15);
        assert!(r.reached_by(1, 3));
    }

    #[test]
    fn fits_checks_every_dimension() {
        let vehicle = VehicleProfile::default();
        let levels = LevelSet::default();
        let mut load = UnitLoad::new(0, &levels);

        // Count limit.
        for i in 0..25 {
            let p = pkg(&format!("p{i}"), -19.9, -43.9, 10, 10);
            assert!(fits(&load, &p, &vehicle));
            load.try_add(p, &levels, &vehicle).unwrap();
        }
        assert_eq!(load.count(), 25);
        assert!(!fits(&load, &pkg("extra", -19.9, -43.9, 10, 10), &vehicle));

        // Volume limit, exactly at the cap is feasible.
        let mut load = UnitLoad::new(1, &levels);
        load.try_add(pkg("a", -19.9, -43.9, 10, 109_000), &levels, &vehicle)
            .unwrap();
        assert!(fits(&load, &pkg("b", -19.9, -43.9, 10, 1_000), &vehicle));
        assert!(!fits(&load, &pkg("c", -19.9, -43.9, 10, 1_001), &vehicle));

        // Weight limit.
        let mut load = UnitLoad::new(2, &levels);
        load.try_add(pkg("a", -19.9, -43.9, 19_500, 10), &levels, &vehicle)
            .unwrap();
        assert!(fits(&load, &pkg("b", -19.9, -43.9, 500, 10), &vehicle));
        assert!(!fits(&load, &pkg("c", -19.9, -43.9, 501, 10), &vehicle));

        // Adding beyond capacity is a contract violation.
        let err = load
            .try_add(pkg("c", -19.9, -43.9, 501, 10), &levels, &vehicle)
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn unit_load_tracks_totals_and_footprint() {
        let vehicle = VehicleProfile::default();
        let levels = LevelSet::new(vec![11, 15]).unwrap();
        let mut load = UnitLoad::new(0, &levels);
        assert!(load.is_empty());
        assert!(load.footprint(11).is_empty());

        // Two points straddling the center of one level 11 cell (km-scale)
        // share it, but sit ~900 m apart, beyond any level 15 cell.
        let center = cell_at(GeoPoint::new(-19.92, -43.94).unwrap(), 11)
            .unwrap()
            .center();
        let a = pkg("a", center.lat() - 0.004, center.lng(), 300, 2_000);
        let b = pkg("b", center.lat() + 0.004, center.lng(), 400, 3_000);
        load.try_add(a.clone(), &levels, &vehicle).unwrap();
        load.try_add(b.clone(), &levels, &vehicle).unwrap();

        assert_eq!(load.used_weight(), 700);
        assert_eq!(load.used_volume(), 5_000);
        assert_eq!(load.count(), 2);

        let c11 = cell_at(a.dest, 11).unwrap();
        assert_eq!(cell_at(b.dest, 11).unwrap(), c11);
        assert_eq!(load.footprint(11), &[c11]);
        assert_eq!(load.footprint(15).len(), 2);
        // Untracked level reads as empty.
        assert!(load.footprint(13).is_empty());

        // Re-adding a destination moves its cell to the back (most recent).
        let a15 = cell_at(a.dest, 15).unwrap();
        let b15 = cell_at(b.dest, 15).unwrap();
        assert_ne!(a15, b15);
        assert_eq!(load.footprint(15), &[a15, b15]);
        load.try_add(
            pkg("a2", a.dest.lat(), a.dest.lng(), 100, 500),
            &levels,
            &vehicle,
        )
        .unwrap();
        assert_eq!(load.footprint(15), &[b15, a15]);
        assert_eq!(load.footprint(11), &[c11]);

        let drained = load.reset(42);
        assert_eq!(drained.len(), 3);
        assert!(load.is_empty());
        assert_eq!(load.used_volume(), 0);
        assert!(load.footprint(15).is_empty());
        assert_eq!(load.opened_at(), 42);
    }

    #[test]
    fn package_jsonl_roundtrip() {
        let with_hint = pkg("p000001", -19.917, -43.934, 742, 3100);
        let mut with_hint = with_hint;
        with_hint.depot_hint = Some("ce1".into());
        let without_hint = pkg("p000002", -19.85, -43.99, 120, 900);

        let mut buf = Vec::new();
        write_packages(&mut buf, &[with_hint.clone(), without_hint.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            r#"{"id":"p000001","lat":-19.917,"lng":-43.934,"weight_g":742,"volume_ml":3100,"depot_id":"ce1"}"#
        );
        assert_eq!(
            lines.next().unwrap(),
            r#"{"id":"p000002","lat":-19.85,"lng":-43.99,"weight_g":120,"volume_ml":900}"#
        );

        let read: Vec<Package> = PackageReader::new(buf.as_slice())
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(read, vec![with_hint, without_hint]);

        // Rewriting parsed packages reproduces the bytes.
        let mut buf2 = Vec::new();
        write_packages(&mut buf2, &read).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn package_parsing_rejects_bad_records() {
        let cases = [
            r#"{"id":"","lat":0,"lng":0,"weight_g":1,"volume_ml":1}"#,
            r#"{"id":"x","lat":91,"lng":0,"weight_g":1,"volume_ml":1}"#,
            r#"{"id":"x","lat":0,"lng":0,"weight_g":0,"volume_ml":1}"#,
            r#"{"id":"x","lat":0,"lng":0,"weight_g":1,"volume_ml":0}"#,
            r#"{"id":"x","lat":0,"lng":0,"weight_g":1}"#,
            r#"not json"#,
        ];
        for line in cases {
            let got: Vec<_> = PackageReader::new(line.as_bytes()).collect();
            assert_eq!(got.len(), 1, "line {line:?}");
            assert!(got[0].is_err(), "line {line:?} should be rejected");
        }
        // Blank lines are skipped, not errors.
        let got: Vec<_> = PackageReader::new(b"\n\n".as_slice()).collect();
        assert!(got.is_empty());
    }

    #[test]
    fn route_jsonl_roundtrip() {
        let route = Route {
            id: "r000001".into(),
            depot_id: "ce0".into(),
            package_ids: vec!["p1".into(), "p2".into()],
            length_m: 15433.25,
            close_reason: CloseReason::Capacity,
        };
        let line = serde_json::to_string(&route).unwrap();
        assert_eq!(
            line,
            r#"{"route_id":"r000001","depot_id":"ce0","package_ids":["p1","p2"],"length_m":15433.25,"close_reason":"capacity"}"#
        );
        let back: Route = serde_json::from_str(&line).unwrap();
        assert_eq!(back, route);
        assert_eq!(serde_json::to_string(&back).unwrap(), line);

        let flush = Route {
            close_reason: CloseReason::Flush,
            ..route
        };
        assert!(serde_json::to_string(&flush)
            .unwrap()
            .contains(r#""close_reason":"flush""#));
    }

    #[test]
    fn depot_jsonl_roundtrip() {
        let depots = vec![
            Depot {
                id: "ce0".into(),
                location: GeoPoint::new(-19.92, -43.94).unwrap(),
            },
            Depot {
                id: "ce1".into(),
                location: GeoPoint::new(-19.85, -43.98).unwrap(),
            },
        ];
        let mut buf = Vec::new();
        write_depots(&mut buf, &depots).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"id\":\"ce0\",\"lat\":-19.92,\"lng\":-43.94}\n{\"id\":\"ce1\",\"lat\":-19.85,\"lng\":-43.98}\n"
        );
    }

    #[test]
    fn warehouse_config_defaults_and_validation() {
        let cfg = WarehouseConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_unit_loads, 28);
        assert_eq!(cfg.close_fraction, Ratio::new(4, 5).unwrap());
        assert_eq!(cfg.vehicle.max_packages, 25);
        assert_eq!(cfg.levels.levels(), &[11, 12, 13, 14, 15]);
        assert_eq!(cfg.rho, 0.5);

        let mut bad = WarehouseConfig::default();
        bad.rho = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = WarehouseConfig::default();
        bad.n_unit_loads = 0;
        assert!(bad.validate().is_err());
        let mut bad = WarehouseConfig::default();
        bad.gamma = f64::NAN;
        assert!(bad.validate().is_err());

        // TOML section with partial keys takes defaults for the rest.
        let parsed: WarehouseConfig =
            toml::from_str("n_unit_loads = 14\nclose_fraction = 0.75\n").unwrap();
        assert_eq!(parsed.n_unit_loads, 14);
        assert_eq!(parsed.close_fraction, Ratio::new(3, 4).unwrap());
        assert_eq!(parsed.vehicle, VehicleProfile::default());
    }
}
