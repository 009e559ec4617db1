use crate::error::{Error, Result};
use crate::spinor::Vec3;

/// Right-handed orthonormal frame whose third vector is a chosen axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub axis: Vec3,
}

impl Frame {
    pub fn with_axis(axis: &Vec3) -> Frame {
        let a = axis.normalize();
        // pick the coordinate direction least aligned with the axis
        let helper = if a.x.abs() <= a.y.abs() && a.x.abs() <= a.z.abs() {
            Vec3::x()
        } else if a.y.abs() <= a.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let e1 = (helper - a * a.dot(&helper)).normalize();
        let e2 = a.cross(&e1);
        Frame { e1, e2, axis: a }
    }

    /// Unit vector with polar cosine `u` about the axis and azimuth from `(cos_phi, sin_phi)`.
    #[inline]
    pub fn direction(&self, u: f64, cos_phi: f64, sin_phi: f64) -> Vec3 {
        let s = (1.0 - u * u).max(0.0).sqrt();
        self.axis * u + self.e1 * (s * cos_phi) + self.e2 * (s * sin_phi)
    }

    /// `(r, u, phi)` of `x` in this frame.
    pub fn spherical_coords(&self, x: &Vec3) -> (f64, f64, f64) {
        let r = x.norm();
        if r == 0.0 {
            return (0.0, 1.0, 0.0);
        }
        let u = (x.dot(&self.axis) / r).clamp(-1.0, 1.0);
        let phi = x.dot(&self.e2).atan2(x.dot(&self.e1));
        (r, u, phi)
    }
}

/// Circular cone of directions about `axis`; `half_angle = pi` is the full sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeSpec {
    pub axis: Vec3,
    pub half_angle: f64,
}

impl ConeSpec {
    pub fn new(axis: Vec3, half_angle: f64) -> Result<ConeSpec> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("cone axis must be a non-zero vector".into()));
        }
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "cone half-angle must lie in (0, pi], got {half_angle}"
            )));
        }
        Ok(ConeSpec {
            axis: axis / n,
            half_angle,
        })
    }

    pub fn full_sphere() -> ConeSpec {
        ConeSpec {
            axis: Vec3::x(),
            half_angle: std::f64::consts::PI,
        }
    }

    pub fn cos_half_angle(&self) -> f64 {
        if self.half_angle >= std::f64::consts::PI {
            -1.0
        } else {
            self.half_angle.cos()
        }
    }

    pub fn solid_angle(&self) -> f64 {
        2.0 * std::f64::consts::PI * (1.0 - self.cos_half_angle())
    }

    pub fn is_full_sphere(&self) -> bool {
        self.half_angle >= std::f64::consts::PI
    }

    /// Whether the direction of `k` lies in the cone; `k = 0` never does.
    #[inline]
    pub fn contains(&self, k: &Vec3) -> bool {
        let n = k.norm();
        if n == 0.0 {
            return false;
        }
        self.is_full_sphere() || k.dot(&self.axis) >= n * self.cos_half_angle()
    }

    /// The cone covering the complementary directions.
    pub fn complement(&self) -> Option<ConeSpec> {
        if self.is_full_sphere() {
            None
        } else {
            Some(ConeSpec {
                axis: -self.axis,
                half_angle: std::f64::consts::PI - self.half_angle,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal() {
        for a in [Vec3::x(), Vec3::new(0.3, -2.0, 0.5), -Vec3::z()] {
            let f = Frame::with_axis(&a);
            assert!((f.e1.dot(&f.e2)).abs() < 1e-15);
            assert!((f.e1.dot(&f.axis)).abs() < 1e-15);
            assert!((f.e1.cross(&f.e2) - f.axis).norm() < 1e-15);
            let x = Vec3::new(1.0, 2.0, -0.4);
            let (r, u, phi) = f.spherical_coords(&x);
            assert!((f.direction(u, phi.cos(), phi.sin()) * r - x).norm() < 1e-14);
        }
    }

    #[test]
    fn cone_rejects_bad_angles() {
        assert!(ConeSpec::new(Vec3::x(), -1.0).is_err());
        assert!(ConeSpec::new(Vec3::x(), 4.0).is_err());
        assert!(ConeSpec::new(Vec3::zeros(), 1.0).is_err());
    }

    #[test]
    fn cone_membership() {
        let c = ConeSpec::new(Vec3::x(), 0.3).unwrap();
        assert!(c.contains(&Vec3::new(1.0, 0.2, 0.0)));
        assert!(!c.contains(&Vec3::new(1.0, 0.4, 0.0)));
        assert!(!c.contains(&Vec3::zeros()));
        assert!(ConeSpec::full_sphere().contains(&-Vec3::x()));
    }
}
