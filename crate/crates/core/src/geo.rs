//! WGS-84 geodetic to local East-North tangent-plane conversion.
//!
//! Panorama geotags and camera outputs stay within about a kilometer of the
//! reference point, so a flat tangent plane with the spherical equatorial
//! radius is accurate to well below the method's meter-scale errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS-84 equatorial radius, meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    BadLatitude(f64),
    #[error("point more than 0.5 deg from the tangent reference (d_lat={0}, d_lon={1})")]
    OutOfTangentRange(f64, f64),
}

/// Geodetic position; longitude is wrapped into (-180, 180] on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeoError::BadLatitude(lat_deg));
        }
        let mut lon = lon_deg.rem_euclid(360.0);
        if lon > 180.0 {
            lon -= 360.0;
        }
        Ok(Self {
            lat_deg,
            lon_deg: lon,
        })
    }
}

/// East/north offset of `p` from `ref_point` in meters on the local tangent
/// plane.
pub fn gps_to_enu(ref_point: &GeoPoint, p: &GeoPoint) -> Result<(f64, f64), GeoError> {
    let d_lat = p.lat_deg - ref_point.lat_deg;
    let d_lon = wrap_deg(p.lon_deg - ref_point.lon_deg);
    if d_lat.abs() >= 0.5 || d_lon.abs() >= 0.5 {
        return Err(GeoError::OutOfTangentRange(d_lat, d_lon));
    }
    let north = d_lat.to_radians() * EARTH_RADIUS_M;
    let east = d_lon.to_radians() * EARTH_RADIUS_M * ref_point.lat_deg.to_radians().cos();
    Ok((east, north))
}

/// Exact algebraic inverse of [`gps_to_enu`].
pub fn enu_to_gps(ref_point: &GeoPoint, east: f64, north: f64) -> GeoPoint {
    let lat = ref_point.lat_deg + (north / EARTH_RADIUS_M).to_degrees();
    let lon = ref_point.lon_deg
        + (east / (EARTH_RADIUS_M * ref_point.lat_deg.to_radians().cos())).to_degrees();
    GeoPoint::new(lat, lon).expect("small offsets stay in range")
}

/// Great-circle distance on the sphere, used as an independent check of the
/// tangent-plane math.
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let d_lat = lat2 - lat1;
    let d_lon = (b.lon_deg - a.lon_deg).to_radians();
    let h = (d_lat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

fn wrap_deg(d: f64) -> f64 {
    let mut w = d.rem_euclid(360.0);
    if w > 180.0 {
        w -= 360.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_maps_to_origin() {
        let r = GeoPoint::new(48.0, 7.8).unwrap();
        assert_eq!(gps_to_enu(&r, &r).unwrap(), (0.0, 0.0));
        let back = enu_to_gps(&r, 0.0, 0.0);
        assert_eq!(back, r);
    }

    #[test]
    fn one_millidegree_north() {
        let r = GeoPoint::new(48.0, 7.8).unwrap();
        let p = GeoPoint::new(48.001, 7.8).unwrap();
        let (e, n) = gps_to_enu(&r, &p).unwrap();
        assert_relative_eq!(n, 111.319, epsilon = 1e-2);
        assert_relative_eq!(e, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn longitude_scaling_with_latitude() {
        // The same east offset produces twice the longitude delta at 60 deg
        // latitude as at the equator: cos(0)/cos(60) = 2.
        let eq = enu_to_gps(&GeoPoint::new(0.0, 0.0).unwrap(), 100.0, 0.0);
        let hi = enu_to_gps(&GeoPoint::new(60.0, 0.0).unwrap(), 100.0, 0.0);
        assert_relative_eq!(hi.lon_deg / eq.lon_deg, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn out_of_tangent_range_rejected() {
        let r = GeoPoint::new(48.0, 7.8).unwrap();
        let p = GeoPoint::new(48.6, 7.8).unwrap();
        assert!(matches!(
            gps_to_enu(&r, &p),
            Err(GeoError::OutOfTangentRange(_, _))
        ));
    }

    #[test]
    fn longitude_wraps_on_construction() {
        let p = GeoPoint::new(10.0, 200.0).unwrap();
        assert_relative_eq!(p.lon_deg, -160.0);
        let p = GeoPoint::new(10.0, -180.0).unwrap();
        assert_relative_eq!(p.lon_deg, 180.0);
    }

    #[test]
    fn forward_inverse_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = GeoPoint::new(48.0125518, 7.8322567).unwrap();
        for _ in 0..1000 {
            let east = rng.gen_range(-1000.0..1000.0);
            let north = rng.gen_range(-1000.0..1000.0);
            let gps = enu_to_gps(&r, east, north);
            let (e2, n2) = gps_to_enu(&r, &gps).unwrap();
            assert_relative_eq!(e2, east, epsilon = 1e-6);
            assert_relative_eq!(n2, north, epsilon = 1e-6);
            // Degree-level round trip below 1e-9 deg.
            let gps2 = enu_to_gps(&r, e2, n2);
            assert!((gps2.lat_deg - gps.lat_deg).abs() < 1e-9);
            assert!((gps2.lon_deg - gps.lon_deg).abs() < 1e-9);
        }
    }

    #[test]
    fn enu_distance_matches_haversine_under_a_kilometer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = GeoPoint::new(48.0, 7.8).unwrap();
        for _ in 0..200 {
            let east = rng.gen_range(-700.0..700.0);
            let north = rng.gen_range(-700.0..700.0);
            let gps = enu_to_gps(&r, east, north);
            let enu_dist = (east * east + north * north).sqrt();
            let hav = haversine_m(&r, &gps);
            if enu_dist > 1.0 {
                assert!(
                    (enu_dist - hav).abs() / enu_dist < 1e-3,
                    "enu {enu_dist} vs haversine {hav}"
                );
            }
        }
    }
}
