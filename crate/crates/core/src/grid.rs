//! Momentum-space quadrature grids.
//!
//! Node coordinates of the structured layouts are generated on demand, so a
//! multi-million node spherical grid costs only its 1-D rules in memory.

use crate::error::{Error, Result};
use crate::geometry::{ConeSpec, Frame};
use crate::quadrature::{composite_gauss_legendre, uniform_breaks, Rule};
use crate::spinor::Vec3;

/// Radial panels of the far-field grid are sized so that `omega * width / 2`
/// stays below this for the largest oscillation frequency `omega`.
pub const PANEL_PHASE_LIMIT: f64 = 16.0;
pub const RADIAL_ORDER: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct SphericalLayout {
    pub frame: Frame,
    pub radial: Rule,
    pub radial_breaks: Vec<f64>,
    pub radial_order: usize,
    /// Rule in `u = cos(theta)` about `frame.axis`.
    pub polar: Rule,
    pub polar_breaks: Vec<f64>,
    pub polar_order: usize,
    pub n_phi: usize,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
}

impl SphericalLayout {
    pub fn new(
        axis: &Vec3,
        radial_breaks: Vec<f64>,
        radial_order: usize,
        polar_breaks: Vec<f64>,
        polar_order: usize,
        n_phi: usize,
    ) -> Result<SphericalLayout> {
        if radial_breaks.len() < 2 || radial_breaks[0] < 0.0 || !is_increasing(&radial_breaks) {
            return Err(Error::InvalidArgument("radial breaks must increase from >= 0".into()));
        }
        if polar_breaks.len() < 2
            || polar_breaks[0] != -1.0
            || *polar_breaks.last().unwrap() != 1.0
            || !is_increasing(&polar_breaks)
        {
            return Err(Error::InvalidArgument("polar breaks must increase from -1 to 1".into()));
        }
        if n_phi == 0 || radial_order == 0 || polar_order == 0 {
            return Err(Error::InvalidArgument("empty spherical rule".into()));
        }
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        Ok(SphericalLayout {
            frame: Frame::with_axis(axis),
            radial: composite_gauss_legendre(&radial_breaks, radial_order),
            radial_breaks,
            radial_order,
            polar: composite_gauss_legendre(&polar_breaks, polar_order),
            polar_breaks,
            polar_order,
            n_phi,
            cos_phi: (0..n_phi).map(|p| (dphi * p as f64).cos()).collect(),
            sin_phi: (0..n_phi).map(|p| (dphi * p as f64).sin()).collect(),
        })
    }

    pub fn n_radial(&self) -> usize {
        self.radial.len()
    }

    pub fn n_angular(&self) -> usize {
        self.polar.len() * self.n_phi
    }

    pub fn k_max(&self) -> f64 {
        *self.radial_breaks.last().unwrap()
    }

    pub fn phi(&self, p: usize) -> f64 {
        2.0 * std::f64::consts::PI * p as f64 / self.n_phi as f64
    }

    /// Direction of angular node `a = iu * n_phi + ip`.
    #[inline]
    pub fn direction(&self, a: usize) -> Vec3 {
        let iu = a / self.n_phi;
        let ip = a % self.n_phi;
        self.frame
            .direction(self.polar.nodes[iu], self.cos_phi[ip], self.sin_phi[ip])
    }

    /// Solid-angle weight of angular node `a`.
    #[inline]
    pub fn angular_weight(&self, a: usize) -> f64 {
        self.polar.weights[a / self.n_phi] * 2.0 * std::f64::consts::PI / self.n_phi as f64
    }

    /// Largest half-width over the radial panels.
    pub fn max_radial_half_width(&self) -> f64 {
        self.radial_breaks
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(0.0, f64::max)
    }
}

fn is_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridLayout {
    /// `n^3` trapezoid nodes on the box `center +- half_width`.
    Cartesian {
        center: Vec3,
        half_width: f64,
        n: usize,
    },
    Spherical(Box<SphericalLayout>),
    /// Arbitrary node list (loaded from disk or built by hand).
    Explicit { nodes: Vec<Vec3>, weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumGrid {
    pub layout: GridLayout,
}

impl MomentumGrid {
    pub fn cartesian(center: Vec3, half_width: f64, n: usize) -> Result<MomentumGrid> {
        if !(half_width > 0.0) || n < 2 {
            return Err(Error::InvalidArgument(
                "cartesian grid needs half_width > 0 and n >= 2".into(),
            ));
        }
        Ok(MomentumGrid {
            layout: GridLayout::Cartesian {
                center,
                half_width,
                n,
            },
        })
    }

    /// The 48^3 box centred on `k0` with half-width `6 sigma`.
    pub fn default_cartesian(k0: Vec3, sigma: f64) -> Result<MomentumGrid> {
        Self::cartesian(k0, 6.0 * sigma, 48)
    }

    pub fn spherical(layout: SphericalLayout) -> MomentumGrid {
        MomentumGrid {
            layout: GridLayout::Spherical(Box::new(layout)),
        }
    }

    pub fn explicit(nodes: Vec<Vec3>, weights: Vec<f64>) -> Result<MomentumGrid> {
        if nodes.len() != weights.len() {
            return Err(Error::InvalidArgument("node/weight length mismatch".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(MomentumGrid {
            layout: GridLayout::Explicit { nodes, weights },
        })
    }

    /// Spherical-product grid for far-field evaluation.
    ///
    /// The polar axis is the cone axis with a panel break at the cone
    /// boundary, every polar panel carries `lmax + 1` nodes and the azimuth
    /// `2 lmax + 1`, so the spherical-harmonic transform up to `lmax` is exact
    /// per shell. Radial panels resolve oscillations up to `omega_max`.
    pub fn far_field(cone: &ConeSpec, k_max: f64, omega_max: f64, lmax: usize) -> Result<MomentumGrid> {
        if !(k_max > 0.0) || !(omega_max >= 0.0) {
            return Err(Error::InvalidArgument("far-field grid needs k_max > 0".into()));
        }
        let width = (2.0 * PANEL_PHASE_LIMIT / omega_max.max(1e-12)).min(0.25);
        let radial_breaks = uniform_breaks(0.0, k_max, width);
        let c = cone.cos_half_angle();
        let polar_breaks = if c > -1.0 && c < 1.0 {
            vec![-1.0, c, 1.0]
        } else {
            vec![-1.0, 1.0]
        };
        let layout = SphericalLayout::new(
            &cone.axis,
            radial_breaks,
            RADIAL_ORDER,
            polar_breaks,
            lmax + 1,
            2 * lmax + 1,
        )?;
        Ok(Self::spherical(layout))
    }

    /// Spherical-product grid for probability integrals only: no phase
    /// resolution, angular rule as in [`MomentumGrid::far_field`].
    pub fn momentum_side(cone: &ConeSpec, k_max: f64, lmax: usize) -> Result<MomentumGrid> {
        if !(k_max > 0.0) {
            return Err(Error::InvalidArgument("momentum grid needs k_max > 0".into()));
        }
        let c = cone.cos_half_angle();
        let polar_breaks = if c > -1.0 && c < 1.0 {
            vec![-1.0, c, 1.0]
        } else {
            vec![-1.0, 1.0]
        };
        let layout = SphericalLayout::new(
            &cone.axis,
            uniform_breaks(0.0, k_max, 0.5),
            12,
            polar_breaks,
            lmax + 1,
            2 * lmax + 1,
        )?;
        Ok(Self::spherical(layout))
    }

    pub fn len(&self) -> usize {
        match &self.layout {
            GridLayout::Cartesian { n, .. } => n * n * n,
            GridLayout::Spherical(s) => s.n_radial() * s.n_angular(),
            GridLayout::Explicit { nodes, .. } => nodes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian node spacing.
    pub fn spacing(&self) -> Option<f64> {
        match &self.layout {
            GridLayout::Cartesian { half_width, n, .. } => Some(2.0 * half_width / (*n - 1) as f64),
            _ => None,
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> Vec3 {
        match &self.layout {
            GridLayout::Cartesian {
                center,
                half_width,
                n,
            } => {
                let h = 2.0 * half_width / (*n - 1) as f64;
                let (a, b, c) = (i / (n * n), (i / n) % n, i % n);
                center + Vec3::new(
                    -half_width + h * a as f64,
                    -half_width + h * b as f64,
                    -half_width + h * c as f64,
                )
            }
            GridLayout::Spherical(s) => {
                let na = s.n_angular();
                s.direction(i % na) * s.radial.nodes[i / na]
            }
            GridLayout::Explicit { nodes, .. } => nodes[i],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match &self.layout {
            GridLayout::Cartesian { half_width, n, .. } => {
                let h = 2.0 * half_width / (*n - 1) as f64;
                let edge = |j: usize| if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                let (a, b, c) = (i / (n * n), (i / n) % n, i % n);
                h * h * h * edge(a) * edge(b) * edge(c)
            }
            GridLayout::Spherical(s) => {
                let na = s.n_angular();
                let ir = i / na;
                let r = s.radial.nodes[ir];
                s.radial.weights[ir] * r * r * s.angular_weight(i % na)
            }
            GridLayout::Explicit { weights, .. } => weights[i],
        }
    }

    /// Exact volume of the region the rule integrates over, when defined.
    pub fn enclosed_volume(&self) -> Option<f64> {
        match &self.layout {
            GridLayout::Cartesian { half_width, .. } => Some((2.0 * half_width).powi(3)),
            GridLayout::Spherical(s) => Some(4.0 / 3.0 * std::f64::consts::PI * s.k_max().powi(3)),
            GridLayout::Explicit { .. } => None,
        }
    }

    /// Largest distance between neighbouring nodes, the scale that sets the
    /// aliasing limit `|x| * spacing <= pi`.
    pub fn max_spacing(&self) -> f64 {
        match &self.layout {
            GridLayout::Cartesian { .. } => self.spacing().unwrap(),
            GridLayout::Spherical(s) => {
                let kmax = s.k_max();
                let dr = s.radial.max_gap().max(s.radial.nodes[0]);
                let thetas: Vec<f64> = s.polar.nodes.iter().rev().map(|u| u.acos()).collect();
                let mut dth = thetas[0].max(std::f64::consts::PI - thetas[thetas.len() - 1]);
                for w in thetas.windows(2) {
                    dth = dth.max(w[1] - w[0]);
                }
                let dphi = 2.0 * std::f64::consts::PI / s.n_phi as f64;
                dr.max(kmax * dth).max(kmax * dphi)
            }
            GridLayout::Explicit { .. } => f64::INFINITY,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        crate::par::sum_indexed(self.len(), |i| self.weight(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cartesian_weights_sum_to_box_volume() {
        let g = MomentumGrid::default_cartesian(Vec3::new(2.0, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(g.len(), 48 * 48 * 48);
        assert_relative_eq!(g.weight_sum(), 216.0, max_relative = 1e-12);
        assert_relative_eq!(g.node(0).x, -1.0, epsilon = 1e-15);
        assert_relative_eq!(g.node(g.len() - 1).x, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn spherical_weights_sum_to_ball_volume() {
        let cone = ConeSpec::new(Vec3::new(0.0, 1.0, 1.0), 0.4).unwrap();
        let g = MomentumGrid::far_field(&cone, 3.0, 40.0, 6).unwrap();
        let vol = g.enclosed_volume().unwrap();
        assert_relative_eq!(g.weight_sum(), vol, max_relative = 1e-12);
        let s = match &g.layout {
            GridLayout::Spherical(s) => s,
            _ => unreachable!(),
        };
        assert_eq!(s.polar_breaks.len(), 3);
        assert!(g.max_spacing() > 0.0);
    }
}
