//! Reference ellipsoid constants and local gravity/earth-rate helpers.
//!
//! WGS-84 by default. Gravity uses the simple altitude correction
//! `g0 * (1 - 2h/a)`; deflection and anomaly modelling are out of scope.

use nalgebra::Vector3;

#[derive(Debug, Clone, PartialEq)]
pub struct Earth {
    /// Equatorial (semi-major) radius, m.
    pub equatorial_radius: f64,
    /// Flattening of the ellipsoid.
    pub flattening: f64,
    /// Earth rotation rate, rad/s.
    pub rate: f64,
    /// Surface gravity magnitude, m/s^2.
    pub gravity0: f64,
}

impl Default for Earth {
    fn default() -> Self {
        Earth {
            equatorial_radius: 6_378_137.0,
            flattening: 1.0 / 298.257_223_563,
            rate: 7.292_115_146_7e-5,
            gravity0: 9.806_65,
        }
    }
}

impl Earth {
    /// Meridian and transverse radii of curvature at geodetic latitude (rad).
    pub fn radii(&self, lat: f64) -> (f64, f64) {
        let e2 = self.flattening * (2.0 - self.flattening);
        let s2 = lat.sin() * lat.sin();
        let w = (1.0 - e2 * s2).sqrt();
        let rn = self.equatorial_radius / w;
        let rm = self.equatorial_radius * (1.0 - e2) / (w * w * w);
        (rm, rn)
    }

    /// Gravity magnitude at altitude h (m).
    pub fn gravity(&self, h: f64) -> f64 {
        self.gravity0 * (1.0 - 2.0 * h / self.equatorial_radius)
    }

    /// Earth rotation rate in the ENU navigation frame at latitude (rad).
    pub fn rate_n(&self, lat: f64) -> Vector3<f64> {
        Vector3::new(0.0, self.rate * lat.cos(), self.rate * lat.sin())
    }
}
