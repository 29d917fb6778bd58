//! Spherical distance helpers.

/// Mean Earth radius (IUGG), kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
pub const KM_PER_MILE: f64 = 1.609344;
pub const KM_PER_FOOT: f64 = 0.0003048;

/// Great-circle distance in kilometres between two (lat, lon) points in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection about a reference latitude, in kilometres.
/// Accurate to well under a percent over city-scale extents.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    lat0: f64,
    lon0: f64,
    kx: f64,
    ky: f64,
}

impl LocalProjection {
    pub fn new(lat0: f64, lon0: f64) -> Self {
        let ky = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        LocalProjection {
            lat0,
            lon0,
            kx: ky * lat0.to_radians().cos(),
            ky,
        }
    }

    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        ((lon - self.lon0) * self.kx, (lat - self.lat0) * self.ky)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_meridian() {
        let d = haversine_km(0.0, 0.0, 90.0, 0.0);
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert_eq!(haversine_km(41.9, -87.6, 41.9, -87.6), 0.0);
    }

    #[test]
    fn projection_matches_haversine_locally() {
        let p = LocalProjection::new(41.88, -87.63);
        let (x, y) = p.project(41.89, -87.62);
        let planar = (x * x + y * y).sqrt();
        let sphere = haversine_km(41.88, -87.63, 41.89, -87.62);
        assert!((planar - sphere).abs() / sphere < 1e-3);
    }
}
