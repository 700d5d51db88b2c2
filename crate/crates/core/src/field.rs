//! Geomagnetic field model: element derivation, a tilted-dipole base field,
//! multimodal anomaly patches, and bilinear replay of sampled field grids.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the local projection, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Horizontal intensity below `DEGENERATE_REL * F` is treated as zero.
const DEGENERATE_REL: f64 = 1e-12;

/// Local azimuthal equirectangular projection about a reference point.
///
/// `x` points to geographic north and `y` to geographic east, both in
/// meters. The east scale is fixed at the reference latitude, so the
/// mapping is affine and round-trips exactly up to floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub lat0_deg: f64,
    pub lon0_deg: f64,
}

impl LocalProjection {
    pub fn new(lat0_deg: f64, lon0_deg: f64) -> Result<Self> {
        check_latlon(lat0_deg, lon0_deg)?;
        if lat0_deg.abs() >= 89.0 {
            return Err(Error::InvalidInput(format!(
                "projection origin latitude {lat0_deg} too close to a pole"
            )));
        }
        Ok(Self { lat0_deg, lon0_deg })
    }

    fn east_scale(&self) -> f64 {
        EARTH_RADIUS_M * self.lat0_deg.to_radians().cos()
    }

    /// Project geographic coordinates to local (north, east) meters.
    pub fn forward(&self, lat_deg: f64, lon_deg: f64) -> (f64, f64) {
        let dlon = crate::angle::wrap_deg(lon_deg - self.lon0_deg);
        (
            EARTH_RADIUS_M * (lat_deg - self.lat0_deg).to_radians(),
            self.east_scale() * dlon.to_radians(),
        )
    }

    /// Inverse of [`forward`](Self::forward).
    pub fn inverse(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let lat = self.lat0_deg + (x_m / EARTH_RADIUS_M).to_degrees();
        let lon = crate::angle::wrap_deg(self.lon0_deg + (y_m / self.east_scale()).to_degrees());
        (lat, lon)
    }

    /// Build a position from geographic coordinates.
    pub fn position(&self, lat_deg: f64, lon_deg: f64) -> Result<GeoPosition> {
        check_latlon(lat_deg, lon_deg)?;
        let (x_m, y_m) = self.forward(lat_deg, lon_deg);
        Ok(GeoPosition {
            lat_deg,
            lon_deg,
            x_m,
            y_m,
        })
    }

    /// Build a position from projected coordinates.
    pub fn position_xy(&self, x_m: f64, y_m: f64) -> Result<GeoPosition> {
        let (lat_deg, lon_deg) = self.inverse(x_m, y_m);
        check_latlon(lat_deg, lon_deg)?;
        Ok(GeoPosition {
            lat_deg,
            lon_deg,
            x_m,
            y_m,
        })
    }
}

fn check_latlon(lat: f64, lon: f64) -> Result<()> {
    if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
        return Err(Error::InvalidInput(format!("latitude {lat} outside [-90, 90]")));
    }
    if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
        return Err(Error::InvalidInput(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}

/// A location carried in both geographic and projected coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// Projected north coordinate, meters.
    pub x_m: f64,
    /// Projected east coordinate, meters.
    pub y_m: f64,
}

impl GeoPosition {
    /// Planar distance in the shared projection frame, meters.
    pub fn distance_m(&self, other: &GeoPosition) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

/// The seven geomagnetic elements at one location.
///
/// Inclination is `None` when the total intensity is zero; declination is
/// `None` whenever the horizontal intensity vanishes (magnetic poles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticVector {
    pub bx_nt: f64,
    pub by_nt: f64,
    pub bz_nt: f64,
    pub f_nt: f64,
    pub h_nt: f64,
    pub incl_deg: Option<f64>,
    pub decl_deg: Option<f64>,
}

impl MagneticVector {
    /// Declination, or an error at a magnetic pole.
    pub fn declination(&self) -> Result<f64> {
        self.decl_deg
            .ok_or_else(|| Error::Degenerate("declination undefined where H = 0".into()))
    }

    pub fn inclination(&self) -> Result<f64> {
        self.incl_deg
            .ok_or_else(|| Error::Degenerate("inclination undefined where F = 0".into()))
    }

    /// The navigation state vector `(B_X, B_Y, B_Z, D, I)`.
    pub fn state_vector(&self) -> Result<[f64; 5]> {
        Ok([
            self.bx_nt,
            self.by_nt,
            self.bz_nt,
            self.declination()?,
            self.inclination()?,
        ])
    }
}

impl fmt::Display for MagneticVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        write!(
            f,
            "X={:.2} Y={:.2} Z={:.2} F={:.2} H={:.2} I={} D={} (nT, deg)",
            self.bx_nt,
            self.by_nt,
            self.bz_nt,
            self.f_nt,
            self.h_nt,
            opt(self.incl_deg),
            opt(self.decl_deg)
        )
    }
}

/// Derive F, H, I and D from the three field components.
pub fn derive_elements(bx: f64, by: f64, bz: f64) -> Result<MagneticVector> {
    if !(bx.is_finite() && by.is_finite() && bz.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite field components ({bx}, {by}, {bz})"
        )));
    }
    let h = bx.hypot(by);
    let f = h.hypot(bz);
    let incl = (f > 0.0).then(|| bz.atan2(h).to_degrees());
    let decl = (f > 0.0 && h > DEGENERATE_REL * f).then(|| by.atan2(bx).to_degrees());
    Ok(MagneticVector {
        bx_nt: bx,
        by_nt: by,
        bz_nt: bz,
        f_nt: f,
        h_nt: h,
        incl_deg: incl,
        decl_deg: decl,
    })
}

/// Centered tilted dipole.
///
/// The moment is expressed as the equatorial field strength at the reference
/// radius; the field is evaluated on the reference sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipoleParams {
    pub equatorial_field_nt: f64,
    /// Angle between the dipole axis and the rotation axis.
    pub tilt_deg: f64,
    /// Longitude of the northern geomagnetic pole.
    pub pole_lon_deg: f64,
    pub reference_radius_m: f64,
}

impl Default for DipoleParams {
    fn default() -> Self {
        Self {
            equatorial_field_nt: 30_000.0,
            tilt_deg: 11.0,
            pole_lon_deg: -72.7,
            reference_radius_m: 6_371_200.0,
        }
    }
}

impl DipoleParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.equatorial_field_nt,
            self.tilt_deg,
            self.pole_lon_deg,
            self.reference_radius_m,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.equatorial_field_nt <= 0.0 || self.reference_radius_m <= 0.0 {
            return Err(Error::InvalidInput(format!("invalid dipole parameters {self:?}")));
        }
        Ok(())
    }

    /// Geographic latitude/longitude of the northern geomagnetic pole.
    pub fn north_pole(&self) -> (f64, f64) {
        (90.0 - self.tilt_deg, self.pole_lon_deg)
    }
}

fn unit_vector(lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let (la, lo) = (lat_deg.to_radians(), lon_deg.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Dipole field components (north, east, down) in nanotesla.
fn dipole_components(p: &GeoPosition, params: &DipoleParams) -> [f64; 3] {
    // Pole axis from its colatitude, so an untilted dipole has m = (0, 0, 1) exactly.
    let (tilt, plon) = (params.tilt_deg.to_radians(), params.pole_lon_deg.to_radians());
    let m = [tilt.sin() * plon.cos(), tilt.sin() * plon.sin(), tilt.cos()];
    let r = unit_vector(p.lat_deg, p.lon_deg);
    // B = B0 (m - 3 (m.r) r): horizontal part points to the geomagnetic
    // north pole, vertical part is downward in the northern hemisphere.
    let mr = dot3(&m, &r);
    let b0 = params.equatorial_field_nt;
    let b = [
        b0 * (m[0] - 3.0 * mr * r[0]),
        b0 * (m[1] - 3.0 * mr * r[1]),
        b0 * (m[2] - 3.0 * mr * r[2]),
    ];
    let (la, lo) = (p.lat_deg.to_radians(), p.lon_deg.to_radians());
    let north = [-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos()];
    let east = [-lo.sin(), lo.cos(), 0.0];
    [dot3(&b, &north), dot3(&b, &east), -dot3(&b, &r)]
}

/// Tilted-dipole field at `p`.
pub fn dipole_field(p: &GeoPosition, params: &DipoleParams) -> Result<MagneticVector> {
    params.validate()?;
    let [x, y, z] = dipole_components(p, params);
    derive_elements(x, y, z)
}

/// Dimensionless multimodal anomaly surface on the canonical `[-3, 3]^2` domain.
pub fn peaks_anomaly(u: f64, v: f64) -> f64 {
    3.0 * (1.0 - u).powi(2) * (-u * u - (v + 1.0).powi(2)).exp()
        - 10.0 * (u / 5.0 - u.powi(3) - v.powi(5)) * (-u * u - v * v).exp()
        - (1.0 / 3.0) * (-(u + 1.0).powi(2) - v * v).exp()
}

/// Fraction of each box axis over which patch contributions taper to zero.
pub const PATCH_TAPER_FRACTION: f64 = 0.05;

/// Rectangular region carrying a scaled copy of the multimodal anomaly.
///
/// Latitude maps onto the first (north) coordinate of the anomaly surface and
/// longitude onto the second (east) one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPatch {
    pub lat_range_deg: [f64; 2],
    pub lon_range_deg: [f64; 2],
    /// Multipliers for the north, east and down components, nT.
    pub scale: [f64; 3],
}

impl AnomalyPatch {
    pub fn validate(&self) -> Result<()> {
        let [la0, la1] = self.lat_range_deg;
        let [lo0, lo1] = self.lon_range_deg;
        let ok = [la0, la1, lo0, lo1].iter().all(|v| v.is_finite())
            && la1 > la0
            && lo1 > lo0
            && self.scale.iter().all(|s| s.is_finite());
        if !ok {
            return Err(Error::InvalidInput(format!("invalid anomaly patch {self:?}")));
        }
        Ok(())
    }

    /// Map a location onto the canonical domain: `(u, v, taper weight)`.
    /// Returns `None` outside the box.
    pub fn local_coords(&self, lat_deg: f64, lon_deg: f64) -> Option<(f64, f64, f64)> {
        let [la0, la1] = self.lat_range_deg;
        let [lo0, lo1] = self.lon_range_deg;
        let tu = (lat_deg - la0) / (la1 - la0);
        let tv = (lon_deg - lo0) / (lo1 - lo0);
        if !(0.0..=1.0).contains(&tu) || !(0.0..=1.0).contains(&tv) {
            return None;
        }
        Some((-3.0 + 6.0 * tu, -3.0 + 6.0 * tv, edge_taper(tu) * edge_taper(tv)))
    }

    /// Additive `(B_X, B_Y, B_Z)` contribution at a location, nT.
    pub fn contribution(&self, lat_deg: f64, lon_deg: f64) -> [f64; 3] {
        match self.local_coords(lat_deg, lon_deg) {
            None => [0.0; 3],
            Some((u, v, w)) => {
                let a = peaks_anomaly(u, v) * w;
                [self.scale[0] * a, self.scale[1] * a, self.scale[2] * a]
            }
        }
    }
}

/// Raised-cosine ramp over the outer taper fraction of `[0, 1]`.
fn edge_taper(t: f64) -> f64 {
    let d = t.min(1.0 - t);
    if d >= PATCH_TAPER_FRACTION {
        1.0
    } else if d <= 0.0 {
        0.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * d / PATCH_TAPER_FRACTION).cos()
    }
}

/// Rectangular lattice of field samples, latitude varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub lat0_deg: f64,
    pub lon0_deg: f64,
    pub dlat_deg: f64,
    pub dlon_deg: f64,
    pub nlat: usize,
    pub nlon: usize,
    samples: Vec<MagneticVector>,
}

impl FieldGrid {
    /// Build a grid from `(bx, by, bz)` triples in row-major order.
    pub fn new(
        lat0_deg: f64,
        lon0_deg: f64,
        dlat_deg: f64,
        dlon_deg: f64,
        nlat: usize,
        nlon: usize,
        components: &[[f64; 3]],
    ) -> Result<Self> {
        if nlat < 2 || nlon < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2x2 nodes, got {nlat}x{nlon}"
            )));
        }
        if !(dlat_deg > 0.0 && dlon_deg > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid spacing must be positive, got ({dlat_deg}, {dlon_deg})"
            )));
        }
        check_latlon(lat0_deg, lon0_deg)?;
        check_latlon(
            lat0_deg + dlat_deg * (nlat - 1) as f64,
            lon0_deg + dlon_deg * (nlon - 1) as f64,
        )?;
        if components.len() != nlat * nlon {
            return Err(Error::InvalidInput(format!(
                "grid expects {} samples, got {}",
                nlat * nlon,
                components.len()
            )));
        }
        let samples = components
            .iter()
            .map(|&[x, y, z]| derive_elements(x, y, z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lat0_deg,
            lon0_deg,
            dlat_deg,
            dlon_deg,
            nlat,
            nlon,
            samples,
        })
    }

    pub fn sample(&self, row: usize, col: usize) -> &MagneticVector {
        &self.samples[row * self.nlon + col]
    }

    pub fn lat_max(&self) -> f64 {
        self.lat0_deg + self.dlat_deg * (self.nlat - 1) as f64
    }

    pub fn lon_max(&self) -> f64 {
        self.lon0_deg + self.dlon_deg * (self.nlon - 1) as f64
    }

    /// Bilinearly interpolated components at a location.
    pub fn components_at(&self, lat_deg: f64, lon_deg: f64) -> Result<[f64; 3]> {
        let fi = snap((lat_deg - self.lat0_deg) / self.dlat_deg);
        let fj = snap((lon_deg - self.lon0_deg) / self.dlon_deg);
        let max_i = (self.nlat - 1) as f64;
        let max_j = (self.nlon - 1) as f64;
        if !(0.0..=max_i).contains(&fi) {
            return Err(Error::OutOfDomain(format!(
                "latitude {lat_deg} outside grid [{}, {}]",
                self.lat0_deg,
                self.lat_max()
            )));
        }
        if !(0.0..=max_j).contains(&fj) {
            return Err(Error::OutOfDomain(format!(
                "longitude {lon_deg} outside grid [{}, {}]",
                self.lon0_deg,
                self.lon_max()
            )));
        }
        let i0 = (fi.floor() as usize).min(self.nlat - 2);
        let j0 = (fj.floor() as usize).min(self.nlon - 2);
        let t = fi - i0 as f64;
        let s = fj - j0 as f64;
        let comp = |m: &MagneticVector| [m.bx_nt, m.by_nt, m.bz_nt];
        let a = comp(self.sample(i0, j0));
        let b = comp(self.sample(i0, j0 + 1));
        let c = comp(self.sample(i0 + 1, j0));
        let d = comp(self.sample(i0 + 1, j0 + 1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let low = (1.0 - s) * a[k] + s * b[k];
            let high = (1.0 - s) * c[k] + s * d[k];
            out[k] = (1.0 - t) * low + t * high;
        }
        Ok(out)
    }

    /// Parse a `MAGGRID v1` text file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse `MAGGRID v1` text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty grid file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "MAGGRID" || fields[1] != "v1" {
            return Err(perr(
                hline,
                "expected header `MAGGRID v1 <nlat> <nlon> <lat0> <lon0> <dlat> <dlon>`".into(),
            ));
        }
        let int = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| perr(hline, format!("bad {what} `{s}`")))
        };
        let num = |s: &str, what: &str| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(perr(hline, format!("bad {what} `{s}`"))),
        };
        let nlat = int(fields[2], "nlat")?;
        let nlon = int(fields[3], "nlon")?;
        let lat0 = num(fields[4], "lat0")?;
        let lon0 = num(fields[5], "lon0")?;
        let dlat = num(fields[6], "dlat")?;
        let dlon = num(fields[7], "dlon")?;

        let mut comps = Vec::with_capacity(nlat * nlon);
        for (line, body) in lines {
            let idx = comps.len();
            if idx >= nlat * nlon {
                return Err(perr(line, format!("more than {} sample rows", nlat * nlon)));
            }
            let (row, col) = (idx / nlon.max(1), idx % nlon.max(1));
            let vals: Vec<&str> = body.split_whitespace().collect();
            if vals.len() != 3 {
                return Err(perr(
                    line,
                    format!("sample (row {row}, col {col}) needs 3 values, got {}", vals.len()),
                ));
            }
            let mut c = [0.0; 3];
            for (k, s) in vals.iter().enumerate() {
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => c[k] = v,
                    _ => {
                        return Err(perr(
                            line,
                            format!("non-finite value `{s}` at row {row}, col {col}"),
                        ))
                    }
                }
            }
            comps.push(c);
        }
        if comps.len() != nlat * nlon {
            return Err(perr(
                text.lines().count().max(1),
                format!("expected {} sample rows, found {}", nlat * nlon, comps.len()),
            ));
        }
        Self::new(lat0, lon0, dlat, dlon, nlat, nlon, &comps).map_err(|e| perr(hline, e.to_string()))
    }

    /// Serialize to `MAGGRID v1` text.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "MAGGRID v1 {} {} {} {} {} {}\n",
            self.nlat, self.nlon, self.lat0_deg, self.lon0_deg, self.dlat_deg, self.dlon_deg
        );
        for m in &self.samples {
            s.push_str(&format!("{} {} {}\n", m.bx_nt, m.by_nt, m.bz_nt));
        }
        s
    }
}

/// Pull near-integer grid coordinates onto the node so node queries are exact.
fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() < 1e-9 {
        r
    } else {
        f
    }
}

/// Load a field-grid file.
pub fn load_grid(path: &Path) -> Result<FieldGrid> {
    FieldGrid::load(path)
}

/// Smooth background field.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseField {
    Dipole(DipoleParams),
    Grid(FieldGrid),
}

/// Anything that can be sampled for the geomagnetic field at a position.
pub trait FieldSource: Sync {
    fn field_at(&self, p: &GeoPosition) -> Result<MagneticVector>;
}

/// Base field plus additive anomaly patches. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub base: BaseField,
    pub patches: Vec<AnomalyPatch>,
}

impl World {
    pub fn dipole(params: DipoleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            base: BaseField::Dipole(params),
            patches: Vec::new(),
        })
    }

    pub fn with_patches(mut self, patches: Vec<AnomalyPatch>) -> Result<Self> {
        for p in &patches {
            p.validate()?;
        }
        self.patches = patches;
        Ok(self)
    }

    /// Base components before anomalies.
    pub fn base_components(&self, p: &GeoPosition) -> Result<[f64; 3]> {
        match &self.base {
            BaseField::Dipole(params) => Ok(dipole_components(p, params)),
            BaseField::Grid(grid) => grid.components_at(p.lat_deg, p.lon_deg),
        }
    }

    /// Sum of all anomaly patch contributions.
    pub fn anomaly_components(&self, p: &GeoPosition) -> [f64; 3] {
        let mut out = [0.0; 3];
        for patch in &self.patches {
            let c = patch.contribution(p.lat_deg, p.lon_deg);
            for k in 0..3 {
                out[k] += c[k];
            }
        }
        out
    }
}

impl FieldSource for World {
    fn field_at(&self, p: &GeoPosition) -> Result<MagneticVector> {
        let base = self.base_components(p)?;
        if self.patches.is_empty() {
            return derive_elements(base[0], base[1], base[2]);
        }
        let a = self.anomaly_components(p);
        derive_elements(base[0] + a[0], base[1] + a[1], base[2] + a[2])
    }
}

/// Field at a position for the given world.
pub fn field_at(p: &GeoPosition, world: &World) -> Result<MagneticVector> {
    world.field_at(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn derive_axis_aligned() {
        let m = derive_elements(1000.0, 0.0, 0.0).unwrap();
        assert_eq!((m.f_nt, m.h_nt), (1000.0, 1000.0));
        assert_eq!(m.incl_deg, Some(0.0));
        assert_eq!(m.decl_deg, Some(0.0));
    }

    #[test]
    fn derive_pure_vertical() {
        let m = derive_elements(0.0, 0.0, 500.0).unwrap();
        assert_eq!((m.f_nt, m.h_nt), (500.0, 0.0));
        assert_eq!(m.incl_deg, Some(90.0));
        assert_eq!(m.decl_deg, None);
        assert!(m.declination().is_err());
    }

    #[test]
    fn derive_zero_field() {
        let m = derive_elements(0.0, 0.0, 0.0).unwrap();
        assert_eq!(m.incl_deg, None);
        assert_eq!(m.decl_deg, None);
    }

    #[test]
    fn derive_345() {
        let m = derive_elements(300.0, 400.0, 0.0).unwrap();
        assert!(rel(m.f_nt, 500.0) < 1e-15);
        assert!(rel(m.h_nt, 500.0) < 1e-15);
        assert_eq!(m.incl_deg, Some(0.0));
        assert!((m.decl_deg.unwrap() - 53.130_102_354_155_98).abs() < 1e-10);
    }

    #[test]
    fn derive_rejects_nan() {
        assert!(derive_elements(f64::NAN, 0.0, 1.0).is_err());
    }

    fn untilted() -> DipoleParams {
        DipoleParams {
            tilt_deg: 0.0,
            ..DipoleParams::default()
        }
    }

    #[test]
    fn dipole_equator_and_pole() {
        let proj = LocalProjection::new(0.0, 0.0).unwrap();
        let eq = dipole_field(&proj.position(0.0, 37.0).unwrap(), &untilted()).unwrap();
        assert_eq!(eq.incl_deg.unwrap().abs(), 0.0);
        let pole = dipole_field(&proj.position(90.0, 0.0).unwrap(), &untilted()).unwrap();
        assert!((pole.incl_deg.unwrap() - 90.0).abs() < 1e-9);
        assert!(pole.h_nt < 1e-9);
        assert_eq!(pole.decl_deg, None);
        let south = dipole_field(&proj.position(-90.0, 0.0).unwrap(), &untilted()).unwrap();
        assert!((south.incl_deg.unwrap() + 90.0).abs() < 1e-9);
        assert!(rel(pole.f_nt, 2.0 * eq.f_nt) < 1e-12);
    }

    #[test]
    fn dipole_points_north_in_northern_hemisphere() {
        let proj = LocalProjection::new(22.6, 132.9).unwrap();
        let m = dipole_field(&proj.position(22.6, 132.9).unwrap(), &DipoleParams::default()).unwrap();
        assert!(m.bx_nt > 0.0);
        assert!(m.bz_nt > 0.0);
        assert!(m.decl_deg.unwrap().abs() < 15.0);
    }

    #[test]
    fn dipole_rejects_bad_params() {
        let proj = LocalProjection::new(0.0, 0.0).unwrap();
        let p = proj.position(10.0, 10.0).unwrap();
        let bad = DipoleParams {
            equatorial_field_nt: 0.0,
            ..DipoleParams::default()
        };
        assert!(dipole_field(&p, &bad).is_err());
    }

    #[test]
    fn peaks_center_value() {
        let expect = 8.0 / 3.0 * (-1.0f64).exp();
        assert!((peaks_anomaly(0.0, 0.0) - expect).abs() < 1e-15);
        assert!((peaks_anomaly(0.0, 0.0) - 0.98101).abs() < 1e-5);
    }

    #[test]
    fn peaks_decays_far_out() {
        for (u, v) in [(6.0, 6.0), (-6.0, 6.0), (6.0, -6.0), (-6.0, -6.0), (7.5, -9.0)] {
            assert!(peaks_anomaly(u, v).abs() < 1e-10, "({u},{v})");
        }
    }

    #[test]
    fn taper_vanishes_on_edges() {
        assert_eq!(edge_taper(0.0), 0.0);
        assert_eq!(edge_taper(1.0), 0.0);
        assert_eq!(edge_taper(0.5), 1.0);
        assert!((edge_taper(0.025) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn patch_outside_is_zero() {
        let patch = AnomalyPatch {
            lat_range_deg: [20.0, 23.0],
            lon_range_deg: [133.0, 136.0],
            scale: [600.0, 400.0, 200.0],
        };
        assert_eq!(patch.contribution(19.0, 134.0), [0.0; 3]);
        assert_eq!(patch.contribution(21.5, 136.5), [0.0; 3]);
        let c = patch.contribution(21.5, 134.5);
        let p = peaks_anomaly(0.0, 0.0);
        assert!((c[0] - 600.0 * p).abs() < 1e-9);
        assert!((c[1] - 400.0 * p).abs() < 1e-9);
        assert!((c[2] - 200.0 * p).abs() < 1e-9);
    }

    #[test]
    fn degenerate_patch_rejected() {
        let patch = AnomalyPatch {
            lat_range_deg: [20.0, 20.0],
            lon_range_deg: [133.0, 136.0],
            scale: [1.0; 3],
        };
        assert!(patch.validate().is_err());
    }

    #[test]
    fn projection_round_trip() {
        let proj = LocalProjection::new(22.6, 132.9).unwrap();
        let p = proj.position(20.8, 136.0).unwrap();
        let q = proj.position_xy(p.x_m, p.y_m).unwrap();
        assert!((q.lat_deg - 20.8).abs() < 1e-10);
        assert!((q.lon_deg - 136.0).abs() < 1e-10);
        let back = proj.forward(q.lat_deg, q.lon_deg);
        assert!((back.0 - p.x_m).abs() < 1e-6 && (back.1 - p.y_m).abs() < 1e-6);
    }

    #[test]
    fn grid_out_of_domain_names_coordinate() {
        let g = FieldGrid::new(0.0, 0.0, 1.0, 1.0, 2, 2, &[[1.0, 0.0, 0.0]; 4]).unwrap();
        let err = g.components_at(0.5, 1.5).unwrap_err().to_string();
        assert!(err.contains("longitude 1.5"), "{err}");
        let err = g.components_at(-0.5, 0.5).unwrap_err().to_string();
        assert!(err.contains("latitude -0.5"), "{err}");
    }
}
