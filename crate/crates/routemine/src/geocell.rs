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

//! Hierarchical geodetic cells and geodesic distance.
//!
//! The unit sphere is projected onto the six faces of a cube. Each face is
//! divided into a quadtree of up to 30 levels, and the cells of one face are
//! numbered along a Hilbert curve so that cells that are close in token order
//! are close on the ground. A cell is packed into a single `u64`: three face
//! bits, two bits per level of curve position, and a trailing marker bit that
//! makes the level recoverable from the bit pattern alone.
//!
//! Between the cube and the quadtree grid sits a quadratic reparametrization
//! of the face coordinates. A plain gnomonic projection stretches cells near
//! face corners to several times the area of cells near face centers; the
//! quadratic map flattens most of that variation, which keeps the area of
//! same-level cells nearly uniform across the globe. Destination frequencies
//! binned by cell are only comparable because of this.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Mean Earth radius in meters (IUGG mean radius R1).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Deepest cell level. Leaf cells are about 0.7 cm across.
pub const MAX_LEVEL: u8 = 30;

const FACES: u64 = 6;
const POS_BITS: u32 = 2 * MAX_LEVEL as u32 + 1;

// Hilbert curve sub-cell traversal tables. The orientation of the curve
// within a cell is two bits: bit 0 swaps the i and j axes, bit 1 inverts
// their directions. `POS_TO_IJ[o][p]` gives the sub-cell (as i*2+j) visited
// at position `p` when the cell has orientation `o`; `IJ_TO_POS` is the
// inverse permutation, and `POS_TO_ORIENTATION[p]` is XORed into the
// orientation when descending into position `p`.
const POS_TO_IJ: [[u64; 4]; 4] = [
    [0, 1, 3, 2],
    [0, 2, 3, 1],
    [3, 2, 0, 1],
    [3, 1, 0, 2],
];
const IJ_TO_POS: [[u64; 4]; 4] = [
    [0, 1, 3, 2],
    [0, 3, 1, 2],
    [2, 3, 1, 0],
    [2, 1, 3, 0],
];
const POS_TO_ORIENTATION: [u8; 4] = [1, 0, 0, 3];
const SWAP_MASK: u8 = 1;

/// A point on the Earth's surface in degrees.
///
/// Latitude is validated to [-90, 90]; longitude is normalized into
/// [-180, 180), so 180 and -180 are the same point with one representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lng: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<GeoPoint> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Input(format!("latitude {lat} out of [-90, 90]")));
        }
        if !lng.is_finite() {
            return Err(Error::Input(format!("longitude {lng} is not finite")));
        }
        let mut lng = lng % 360.0;
        if lng >= 180.0 {
            lng -= 360.0;
        } else if lng < -180.0 {
            lng += 360.0;
        }
        // -0.0 would give two representations of the same point.
        if lng == 0.0 {
            lng = 0.0;
        }
        Ok(GeoPoint { lat, lng })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lng(&self) -> f64 {
        self.lng
    }

    /// Unit vector in Earth-centered coordinates.
    fn to_xyz(self) -> [f64; 3] {
        let phi = self.lat.to_radians();
        let lambda = self.lng.to_radians();
        [
            phi.cos() * lambda.cos(),
            phi.cos() * lambda.sin(),
            phi.sin(),
        ]
    }

    fn from_xyz(p: [f64; 3]) -> GeoPoint {
        let lat = p[2].atan2((p[0] * p[0] + p[1] * p[1]).sqrt()).to_degrees();
        let lng = p[1].atan2(p[0]).to_degrees();
        GeoPoint::new(lat.clamp(-90.0, 90.0), lng).expect("xyz conversion in range")
    }
}

#[derive(Serialize, Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lng: f64,
}

impl Serialize for GeoPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawGeoPoint {
            lat: self.lat,
            lng: self.lng,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<GeoPoint, D::Error> {
        let raw = RawGeoPoint::deserialize(d)?;
        GeoPoint::new(raw.lat, raw.lng).map_err(D::Error::custom)
    }
}

/// Great-circle distance in meters on the mean-radius sphere.
///
/// The haversine form is numerically stable for nearby points, which is the
/// common case for packages within one city.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lng - a.lng).to_radians();
    let h = (dphi / 2.0).sin().powi(2)
        + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Identifier of one cell in the hierarchy.
///
/// Packed layout, most significant bit first: 3 face bits, 2 bits of Hilbert
/// curve position per level, one marker bit set to 1, then zeros. The marker
/// is the lowest set bit, so the level is `30 - trailing_zeros / 2` and the
/// parent is plain bit arithmetic. Token order (numeric order of the `u64`)
/// follows the Hilbert curve within each face.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(u64);

impl CellId {
    /// Rebuilds a cell from its raw value, rejecting invalid bit patterns.
    pub fn from_raw(raw: u64) -> Result<CellId> {
        if raw >> POS_BITS >= FACES || raw == 0 {
            return Err(Error::Input(format!("invalid cell token {raw:#018x}")));
        }
        let tz = raw.trailing_zeros();
        if tz > 60 || tz % 2 != 0 {
            return Err(Error::Input(format!("invalid cell token {raw:#018x}")));
        }
        Ok(CellId(raw))
    }

    pub fn raw(&self) -> u64 {
        self.0
    }

    /// Lowercase, zero-padded hex form. Lexicographic order of tokens equals
    /// numeric order of cell ids, so sorted token lists are canonical.
    pub fn token(&self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_token(tok: &str) -> Result<CellId> {
        if tok.is_empty() || tok.len() > 16 {
            return Err(Error::Input(format!("invalid cell token {tok:?}")));
        }
        let raw = u64::from_str_radix(tok, 16)
            .map_err(|_| Error::Input(format!("invalid cell token {tok:?}")))?;
        CellId::from_raw(raw)
    }

    pub fn face(&self) -> u8 {
        (self.0 >> POS_BITS) as u8
    }

    pub fn level(&self) -> u8 {
        MAX_LEVEL - (self.0.trailing_zeros() / 2) as u8
    }

    /// Containing cell one level up. Constant time: the last position pair
    /// is cleared and the marker bit moves up two places.
    pub fn parent(&self) -> Result<CellId> {
        if self.level() == 0 {
            return Err(Error::Contract("face cells have no parent".into()));
        }
        let lsb = self.0 & self.0.wrapping_neg();
        let nlsb = lsb << 2;
        Ok(CellId((self.0 & nlsb.wrapping_neg()) | nlsb))
    }

    /// Ancestor at the given level, which must not exceed the cell's own.
    pub fn parent_at(&self, level: u8) -> Result<CellId> {
        if level > self.level() {
            return Err(Error::Contract(format!(
                "level {level} is below cell level {}",
                self.level()
            )));
        }
        let lsb = 1u64 << (2 * (MAX_LEVEL - level) as u32);
        Ok(CellId((self.0 & lsb.wrapping_neg()) | lsb))
    }

    /// Grid coordinates: face, (i, j) at this cell's level, and the Hilbert
    /// orientation left after descending to it.
    fn decompose(&self) -> (u8, u32, u32, u8) {
        let face = self.face();
        let level = self.level() as u32;
        let path = if level == 0 {
            0
        } else {
            (self.0 >> (POS_BITS - 2 * level)) & ((1u64 << (2 * level)) - 1)
        };
        let mut orientation = face as u8 & SWAP_MASK;
        let mut i = 0u32;
        let mut j = 0u32;
        for step in 0..level {
            let pos = (path >> (2 * (level - 1 - step))) & 3;
            let ij = POS_TO_IJ[orientation as usize][pos as usize];
            i = (i << 1) | (ij >> 1) as u32;
            j = (j << 1) | (ij & 1) as u32;
            orientation ^= POS_TO_ORIENTATION[pos as usize];
        }
        (face, i, j, orientation)
    }

    /// Cell bounds in face (s, t) coordinates: (s_lo, t_lo, size).
    fn st_bounds(&self) -> (f64, f64, f64) {
        let (_, i, j, _) = self.decompose();
        let size = 1.0 / (1u64 << self.level()) as f64;
        (i as f64 * size, j as f64 * size, size)
    }

    /// Point at the center of the cell region.
    pub fn center(&self) -> GeoPoint {
        let (s_lo, t_lo, size) = self.st_bounds();
        let u = st_to_uv(s_lo + size / 2.0);
        let v = st_to_uv(t_lo + size / 2.0);
        GeoPoint::from_xyz(face_uv_to_xyz(self.face(), u, v))
    }

    /// True when the point projects into this cell's face region.
    pub fn contains(&self, p: GeoPoint) -> bool {
        let (face, u, v) = xyz_to_face_uv(p.to_xyz());
        if face != self.face() {
            return false;
        }
        let s = uv_to_st(u);
        let t = uv_to_st(v);
        let (s_lo, t_lo, size) = self.st_bounds();
        s >= s_lo && s <= s_lo + size && t >= t_lo && t <= t_lo + size
    }

    /// The four children one level down, in Hilbert curve order.
    pub fn children(&self) -> Result<[CellId; 4]> {
        if self.level() >= MAX_LEVEL {
            return Err(Error::Contract("leaf cells have no children".into()));
        }
        let lsb = self.0 & self.0.wrapping_neg();
        let child_lsb = lsb >> 2;
        let base = self.0 - lsb + child_lsb;
        Ok([
            CellId(base),
            CellId(base + 2 * child_lsb),
            CellId(base + 4 * child_lsb),
            CellId(base + 6 * child_lsb),
        ])
    }

    /// Exact spherical area of the cell region in square meters.
    ///
    /// Cell edges are straight lines in face (u, v) coordinates, and straight
    /// lines through a gnomonic projection are great-circle arcs, so the
    /// region is a spherical quadrilateral. Its solid angle is the sum of two
    /// spherical triangles, each computed with the van Oosterom-Strackee
    /// formula, which is stable for the tiny angles of deep levels.
    pub fn area_m2(&self) -> f64 {
        let (s_lo, t_lo, size) = self.st_bounds();
        let corner = |s: f64, t: f64| {
            let p = face_uv_to_xyz(self.face(), st_to_uv(s), st_to_uv(t));
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [p[0] / norm, p[1] / norm, p[2] / norm]
        };
        let a = corner(s_lo, t_lo);
        let b = corner(s_lo + size, t_lo);
        let c = corner(s_lo + size, t_lo + size);
        let d = corner(s_lo, t_lo + size);
        (triangle_solid_angle(a, b, c) + triangle_solid_angle(a, c, d))
            * EARTH_RADIUS_M
            * EARTH_RADIUS_M
    }
}

impl std::fmt::Debug for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CellId({})", self.token())
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.token())
    }
}

impl std::str::FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<CellId> {
        CellId::from_token(s)
    }
}

impl Serialize for CellId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.token())
    }
}

impl<'de> Deserialize<'de> for CellId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<CellId, D::Error> {
        let tok = String::deserialize(d)?;
        CellId::from_token(&tok).map_err(D::Error::custom)
    }
}

/// Cell containing the point at the given level.
pub fn cell_at(p: GeoPoint, level: u8) -> Result<CellId> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!(
            "cell level {level} exceeds maximum {MAX_LEVEL}"
        )));
    }
    let (face, u, v) = xyz_to_face_uv(p.to_xyz());
    let i = st_to_grid(uv_to_st(u));
    let j = st_to_grid(uv_to_st(v));
    let mut orientation = face & SWAP_MASK;
    let mut path = 0u64;
    for step in 0..level as u32 {
        let bit = MAX_LEVEL as u32 - 1 - step;
        let ij = (((i >> bit) & 1) << 1 | ((j >> bit) & 1)) as u64;
        let pos = IJ_TO_POS[orientation as usize][ij as usize];
        path = (path << 2) | pos;
        orientation ^= POS_TO_ORIENTATION[pos as usize];
    }
    let shift = POS_BITS - 2 * level as u32;
    let raw = ((face as u64) << POS_BITS) | (path << shift) | (1u64 << (shift - 1));
    Ok(CellId(raw))
}

/// Grid coordinate of an st value at leaf resolution, clamped to the face.
fn st_to_grid(s: f64) -> u32 {
    let scaled = (s * (1u64 << MAX_LEVEL) as f64).floor();
    scaled.clamp(0.0, ((1u64 << MAX_LEVEL) - 1) as f64) as u32
}

/// Quadratic reparametrization of face coordinates, st in [0,1] to uv in
/// [-1,1]. Compared to the linear map 2s-1 it expands cells near the face
/// center and shrinks them near the edges, evening out ground-level cell
/// areas to within about a factor of 2 instead of 5.
fn st_to_uv(s: f64) -> f64 {
    if s >= 0.5 {
        (1.0 / 3.0) * (4.0 * s * s - 1.0)
    } else {
        (1.0 / 3.0) * (1.0 - 4.0 * (1.0 - s) * (1.0 - s))
    }
}

fn uv_to_st(u: f64) -> f64 {
    if u >= 0.0 {
        0.5 * (1.0 + 3.0 * u).sqrt()
    } else {
        1.0 - 0.5 * (1.0 - 3.0 * u).sqrt()
    }
}

/// Cube face containing the direction `p`, with gnomonic face coordinates.
/// Faces 0..2 are the +x, +y, +z half-axes and 3..5 their negatives.
fn xyz_to_face_uv(p: [f64; 3]) -> (u8, f64, f64) {
    let abs = [p[0].abs(), p[1].abs(), p[2].abs()];
    let axis = if abs[0] > abs[1] {
        if abs[0] > abs[2] {
            0
        } else {
            2
        }
    } else if abs[1] > abs[2] {
        1
    } else {
        2
    };
    let face = if p[axis] < 0.0 { axis + 3 } else { axis } as u8;
    let (u, v) = match face {
        0 => (p[1] / p[0], p[2] / p[0]),
        1 => (-p[0] / p[1], p[2] / p[1]),
        2 => (-p[0] / p[2], -p[1] / p[2]),
        3 => (p[2] / p[0], p[1] / p[0]),
        4 => (p[2] / p[1], -p[0] / p[1]),
        _ => (-p[1] / p[2], -p[0] / p[2]),
    };
    (face, u, v)
}

/// Direction vector (not normalized) for face coordinates (u, v).
fn face_uv_to_xyz(face: u8, u: f64, v: f64) -> [f64; 3] {
    match face {
        0 => [1.0, u, v],
        1 => [-u, 1.0, v],
        2 => [-u, -v, 1.0],
        3 => [-1.0, -v, -u],
        4 => [v, -1.0, -u],
        _ => [v, u, -1.0],
    }
}

/// Solid angle of the spherical triangle with unit-vector corners.
fn triangle_solid_angle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let cross = [
        b[1] * c[2] - b[2] * c[1],
        b[2] * c[0] - b[0] * c[2],
        b[0] * c[1] - b[1] * c[0],
    ];
    let numer = a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2];
    let denom = 1.0
        + (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
        + (b[0] * c[0] + b[1] * c[1] + b[2] * c[2])
        + (c[0] * a[0] + c[1] * a[1] + c[2] * a[2]);
    2.0 * numer.atan2(denom).abs()
}

/// Strictly increasing set of cell levels, e.g. the resolutions at which
/// destination footprints are tracked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LevelSet(Vec<u8>);

impl LevelSet {
    pub fn new(levels: Vec<u8>) -> Result<LevelSet> {
        if levels.is_empty() {
            return Err(Error::Config("level set must not be empty".into()));
        }
        for w in levels.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(format!(
                    "levels must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&max) = levels.last() {
            if max > MAX_LEVEL {
                return Err(Error::Config(format!(
                    "level {max} exceeds maximum {MAX_LEVEL}"
                )));
            }
        }
        Ok(LevelSet(levels))
    }

    pub fn levels(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LevelSet {
    /// Levels 11 through 15: cells from roughly 20 km2 down to 0.08 km2,
    /// the range useful for within-city delivery patterns.
    fn default() -> LevelSet {
        LevelSet(vec![11, 12, 13, 14, 15])
    }
}

impl TryFrom<Vec<u8>> for LevelSet {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<LevelSet> {
        LevelSet::new(v)
    }
}

impl From<LevelSet> for Vec<u8> {
    fn from(ls: LevelSet) -> Vec<u8> {
        ls.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::{RngCore, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn unit_f64(rng: &mut impl RngCore) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform point on the sphere via uniform z and longitude.
    fn random_point(rng: &mut impl RngCore) -> GeoPoint {
        let z = 2.0 * unit_f64(rng) - 1.0;
        let lat = z.asin().to_degrees();
        let lng = 360.0 * unit_f64(rng) - 180.0;
        GeoPoint::new(lat, lng).unwrap()
    }

    #[test]
    fn longitude_normalization() {
        assert_eq!(GeoPoint::new(0.0, 180.0).unwrap().lng(), -180.0);
        assert_eq!(GeoPoint::new(0.0, -180.0).unwrap().lng(), -180.0);
        assert_eq!(GeoPoint::new(0.0, 540.0).unwrap().lng(), -180.0);
        assert_eq!(GeoPoint::new(0.0, -540.0).unwrap().lng(), -180.0);
        assert_eq!(GeoPoint::new(0.0, 360.0).unwrap().lng(), 0.0);
        assert_eq!(GeoPoint::new(0.0, -43.94).unwrap().lng(), -43.94);
        assert!(GeoPoint::new(90.5, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn haversine_reference_distances() {
        let origin = GeoPoint::new(0.0, 0.0).unwrap();
        let same = haversine_m(origin, origin);
        assert_eq!(same, 0.0);

        // One degree of longitude on the equator is R * pi / 180.
        let one_deg = haversine_m(origin, GeoPoint::new(0.0, 1.0).unwrap());
        assert!((one_deg - 111_195.0).abs() < 1.0, "got {one_deg}");

        // Antipodal points are half the circumference apart.
        let anti = haversine_m(origin, GeoPoint::new(0.0, 180.0).unwrap());
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);

        // Symmetry on arbitrary pairs.
        let mut r = rng(7);
        for _ in 0..100 {
            let a = random_point(&mut r);
            let b = random_point(&mut r);
            assert_eq!(haversine_m(a, b), haversine_m(b, a));
        }
    }

    #[test]
    fn haversine_triangle_inequality() {
        let mut r = rng(11);
        for _ in 0..1000 {
            let a = random_point(&mut r);
            let b = random_point(&mut r);
            let c = random_point(&mut r);
            let direct = haversine_m(a, c);
            let via = haversine_m(a, b) + haversine_m(b, c);
            assert!(
                direct <= via * (1.0 + 1e-12) + 1e-6,
                "triangle inequality violated: {direct} > {via}"
            );
        }
    }

    #[test]
    fn st_uv_roundtrip_and_fixed_points() {
        assert_eq!(st_to_uv(0.5), 0.0);
        assert_eq!(st_to_uv(1.0), 1.0);
        assert_eq!(st_to_uv(0.0), -1.0);
        assert_eq!(uv_to_st(0.0), 0.5);
        assert_eq!(uv_to_st(1.0), 1.0);
        assert_eq!(uv_to_st(-1.0), 0.0);
        let mut r = rng(3);
        for _ in 0..1000 {
            let s = unit_f64(&mut r);
            let back = uv_to_st(st_to_uv(s));
            assert!((back - s).abs() < 1e-14, "st {s} roundtripped to {back}");
        }
    }

    #[test]
    fn face_projection_roundtrip() {
        let mut r = rng(5);
        for _ in 0..1000 {
            let p = random_point(&mut r).to_xyz();
            let (face, u, v) = xyz_to_face_uv(p);
            assert!(face < 6);
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&u));
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            let q = face_uv_to_xyz(face, u, v);
            let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            for k in 0..3 {
                assert!((q[k] / norm - p[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cell_tokens_roundtrip() {
        let mut r = rng(13);
        for _ in 0..500 {
            let p = random_point(&mut r);
            let level = (r.next_u64() % 31) as u8;
            let cell = cell_at(p, level).unwrap();
            assert_eq!(cell.level(), level);
            let tok = cell.token();
            assert_eq!(tok.len(), 16);
            assert_eq!(tok, tok.to_lowercase());
            assert_eq!(CellId::from_token(&tok).unwrap(), cell);
        }
        assert!(CellId::from_token("").is_err());
        assert!(CellId::from_token("zz").is_err());
        assert!(CellId::from_token("ffffffffffffffff1").is_err());
        // Face 7 does not exist.
        assert!(CellId::from_raw(0xf000_0000_0000_0000).is_err());
        // Odd number of trailing zeros is not a valid marker position.
        assert!(CellId::from_raw(0b10).is_err());
        assert!(CellId::from_raw(0).is_err());
    }

    #[test]
    fn cell_at_rejects_deep_levels() {
        let p = GeoPoint::new(10.0, 20.0).unwrap();
        assert!(cell_at(p, 31).is_err());
        assert!(cell_at(p, 30).is_ok());
    }

    #[test]
    fn point_is_inside_its_own_cell() {
        let mut r = rng(17);
        for _ in 0..1000 {
            let p = random_point(&mut r);
            let level = (r.next_u64() % 31) as u8;
            let cell = cell_at(p, level).unwrap();
            assert!(cell.contains(p), "cell {cell} lost point {p:?}");
        }
    }

    #[test]
    fn parent_matches_reencoding_at_coarser_level() {
        let mut r = rng(19);
        for _ in 0..500 {
            let p = random_point(&mut r);
            let mut cell = cell_at(p, 30).unwrap();
            for level in (0..30).rev() {
                let parent = cell.parent().unwrap();
                assert_eq!(parent, cell_at(p, level).unwrap());
                assert_eq!(parent.level(), level);
                assert_eq!(cell.parent_at(level).unwrap(), parent);
                cell = parent;
            }
            assert!(cell.parent().is_err());
        }
    }

    #[test]
    fn parent_region_contains_child_centers() {
        let mut r = rng(23);
        for _ in 0..1000 {
            let p = random_point(&mut r);
            let level = 1 + (r.next_u64() % 30) as u8;
            let cell = cell_at(p, level).unwrap();
            let parent = cell.parent().unwrap();
            assert!(parent.contains(cell.center()));
        }
    }

    #[test]
    fn children_partition_parent() {
        let mut r = rng(29);
        for _ in 0..200 {
            let p = random_point(&mut r);
            let level = (r.next_u64() % 29) as u8;
            let cell = cell_at(p, level).unwrap();
            let children = cell.children().unwrap();
            // Each child's parent is the cell, and exactly one child holds
            // the original point's deeper cell.
            let deeper = cell_at(p, level + 1).unwrap();
            assert!(children.contains(&deeper));
            for ch in children {
                assert_eq!(ch.parent().unwrap(), cell);
            }
            // Hilbert order: children are consecutive in token order.
            for w in children.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn face_areas_tile_the_sphere() {
        let sphere = 4.0 * std::f64::consts::PI * EARTH_RADIUS_M * EARTH_RADIUS_M;
        let mut total = 0.0;
        for face in 0..6u64 {
            let raw = (face << POS_BITS) | (1u64 << (POS_BITS - 1));
            let cell = CellId::from_raw(raw).unwrap();
            let area = cell.area_m2();
            assert!((area - sphere / 6.0).abs() / (sphere / 6.0) < 1e-12);
            total += area;
        }
        assert!((total - sphere).abs() / sphere < 1e-12);
    }

    #[test]
    fn child_areas_sum_to_parent_area() {
        // Cell edges are great-circle arcs shared between siblings, so the
        // four children tile the parent region exactly. The solid-angle
        // formula carries a flat ~1e-17 sr rounding floor, so the relative
        // tolerance must widen as cells shrink; past level 15 the check
        // stops being informative.
        let mut r = rng(31);
        for _ in 0..200 {
            let p = random_point(&mut r);
            let level = (r.next_u64() % 15) as u8;
            let tol = if level <= 10 { 1e-9 } else { 1e-6 };
            let cell = cell_at(p, level).unwrap();
            let parent_area = cell.area_m2();
            let child_sum: f64 = cell
                .children()
                .unwrap()
                .iter()
                .map(|c| c.area_m2())
                .sum();
            assert!(
                (child_sum - parent_area).abs() / parent_area < tol,
                "level {level}: children tile {child_sum}, parent {parent_area}"
            );
        }
    }

    #[test]
    fn cell_center_is_inside_cell() {
        let mut r = rng(37);
        for _ in 0..500 {
            let p = random_point(&mut r);
            let level = (r.next_u64() % 31) as u8;
            let cell = cell_at(p, level).unwrap();
            let center = cell.center();
            assert!(cell.contains(center));
            assert_eq!(cell_at(center, level).unwrap(), cell);
        }
    }

    #[test]
    fn nearby_points_share_coarse_cells() {
        // Two points ~100 m apart agree at level 11 (cells ~4.5 km across)
        // unless they straddle a boundary; a point and itself always agree.
        let a = GeoPoint::new(-19.9200, -43.9400).unwrap();
        let b = GeoPoint::new(-19.9201, -43.9401).unwrap();
        let ca = cell_at(a, 11).unwrap();
        let cb = cell_at(b, 11).unwrap();
        assert_eq!(ca, cb);
        // A point 100 km away never shares a level 11 cell.
        let far = GeoPoint::new(-19.0, -43.0).unwrap();
        assert_ne!(ca, cell_at(far, 11).unwrap());
    }

    #[test]
    fn level_set_validation() {
        assert!(LevelSet::new(vec![]).is_err());
        assert!(LevelSet::new(vec![11, 11]).is_err());
        assert!(LevelSet::new(vec![12, 11]).is_err());
        assert!(LevelSet::new(vec![11, 31]).is_err());
        let ls = LevelSet::new(vec![11, 12, 13, 14, 15]).unwrap();
        assert_eq!(ls.levels(), &[11, 12, 13, 14, 15]);
        assert_eq!(LevelSet::default(), ls);
    }

    #[test]
    fn mean_cell_area_follows_the_quadtree_law() {
        // Among all cells of one level, the mean area is the sphere divided
        // by the cell count 6 * 4^level. Sampled cells (area-weighted) come
        // in a bit above that mean; the quadratic projection keeps the bias
        // small. The tight global checks live in the acceptance suite; this
        // is a quick sanity pass at one level.
        let mut r = rng(41);
        let level = 13u8;
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = random_point(&mut r);
            sum += cell_at(p, level).unwrap().area_m2();
        }
        let mean = sum / n as f64;
        let expected = 4.0 * std::f64::consts::PI * EARTH_RADIUS_M * EARTH_RADIUS_M
            / (6.0 * 4f64.powi(level as i32));
        let ratio = mean / expected;
        assert!(
            (0.95..1.10).contains(&ratio),
            "sampled mean {mean} vs law {expected} (ratio {ratio})"
        );
    }
}
