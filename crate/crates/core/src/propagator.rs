//! Free time evolution by direct quadrature over the momentum grid, the
//! 4-flux, and continuity / space-like decay diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::amplitude::MomentumAmplitude;
use crate::error::{Error, Result};
use crate::grid::GridLayout;
use crate::par;
use crate::spinor::{flux, FluxVector, Spinor4, Vec3};

/// `(2 pi)^{-3/2}`
pub const FOURIER_NORM: f64 = 0.063_493_635_934_240_97;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpacetimePoint {
    pub x: Vec3,
    pub t: f64,
}

impl SpacetimePoint {
    pub fn new(x: Vec3, t: f64) -> Self {
        SpacetimePoint { x, t }
    }

    /// Outside the light cone of the origin.
    pub fn is_spacelike(&self) -> bool {
        self.t.abs() < self.x.norm()
    }
}

/// A Dirac wavefunction that can be sampled at spacetime points.
pub trait WaveField: Sync {
    fn mass(&self) -> f64;

    fn psi(&self, x: &Vec3, t: f64) -> Result<Spinor4>;

    /// `psi(x, t)` for many times at one position. Implementations override
    /// this when the spatial part can be shared.
    fn psi_series(&self, x: &Vec3, times: &[f64]) -> Result<Vec<Spinor4>> {
        times.iter().map(|&t| self.psi(x, t)).collect()
    }
}

/// Direct node sum `(2 pi)^{-3/2} sum_i w_i e^{i(k_i.x - E_i t)} psi_hat(k_i)`.
pub struct DirectSum {
    k: Vec<Vec3>,
    energy: Vec<f64>,
    coef: Vec<Spinor4>,
    m: f64,
    guard: Guard,
}

enum Guard {
    /// per-axis spacing of a cartesian grid
    Axis(f64),
    /// isotropic spacing bound
    Radius(f64),
    None,
}

impl DirectSum {
    pub fn new(amp: &MomentumAmplitude) -> DirectSum {
        let n = amp.len();
        let m = amp.m;
        let data: Vec<(Vec3, f64, Spinor4)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let k = amp.grid.node(i);
                let e = (k.norm_squared() + m * m).sqrt();
                (k, e, amp.synthesize(i) * (FOURIER_NORM * amp.grid.weight(i)))
            })
            .collect();
        let guard = match &amp.grid.layout {
            GridLayout::Cartesian { .. } => Guard::Axis(amp.grid.spacing().unwrap()),
            GridLayout::Spherical(_) => Guard::Radius(amp.grid.max_spacing()),
            GridLayout::Explicit { .. } => Guard::None,
        };
        let mut k = Vec::with_capacity(n);
        let mut energy = Vec::with_capacity(n);
        let mut coef = Vec::with_capacity(n);
        for (a, b, c) in data {
            k.push(a);
            energy.push(b);
            coef.push(c);
        }
        DirectSum {
            k,
            energy,
            coef,
            m,
            guard,
        }
    }

    pub fn check_aliasing(&self, x: &Vec3) -> Result<()> {
        let (dist, phase) = match self.guard {
            Guard::Axis(h) => {
                let d = x.x.abs().max(x.y.abs()).max(x.z.abs());
                (d, d * h)
            }
            Guard::Radius(h) => (x.norm(), x.norm() * h),
            Guard::None => return Ok(()),
        };
        if phase > std::f64::consts::PI {
            Err(Error::Aliasing {
                distance: dist,
                phase_per_cell: phase,
            })
        } else {
            Ok(())
        }
    }

    /// Sum without the aliasing guard.
    pub fn psi_unchecked(&self, x: &Vec3, t: f64) -> Spinor4 {
        par::sum_indexed_spinor(self.k.len(), |i| {
            let phase = self.k[i].dot(x) - self.energy[i] * t;
            self.coef[i] * Complex64::cis(phase)
        })
    }
}

impl WaveField for DirectSum {
    fn mass(&self) -> f64 {
        self.m
    }

    fn psi(&self, x: &Vec3, t: f64) -> Result<Spinor4> {
        self.check_aliasing(x)?;
        Ok(self.psi_unchecked(x, t))
    }
}

pub fn evaluate_wave(amp: &MomentumAmplitude, point: &SpacetimePoint) -> Result<Spinor4> {
    DirectSum::new(amp).psi(&point.x, point.t)
}

pub fn flux_at(amp: &MomentumAmplitude, point: &SpacetimePoint) -> Result<FluxVector> {
    evaluate_wave(amp, point).map(|p| flux(&p))
}

/// Evaluates a batch of points in parallel; output order follows input.
pub fn evaluate_batch(field: &dyn WaveField, points: &[SpacetimePoint]) -> Result<Vec<Spinor4>> {
    points.par_iter().map(|p| field.psi(&p.x, p.t)).collect()
}

/// Central-difference residuals of the continuity equation with both
/// relative signs between the time and divergence terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityResidual {
    pub dt_j0: f64,
    pub div_j: f64,
    /// `|d_t j0 + div j|`
    pub plus: f64,
    /// `|d_t j0 - div j|`
    pub minus: f64,
}

pub fn continuity_residual(field: &dyn WaveField, point: &SpacetimePoint, h: f64) -> Result<ContinuityResidual> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let x = point.x;
    let t = point.t;
    let fp = flux(&field.psi(&x, t + h)?);
    let fm = flux(&field.psi(&x, t - h)?);
    let dt_j0 = (fp.j0 - fm.j0) / (2.0 * h);
    let mut div = 0.0;
    for l in 0..3 {
        let mut e = Vec3::zeros();
        e[l] = h;
        let jp = flux(&field.psi(&(x + e), t)?);
        let jm = flux(&field.psi(&(x - e), t)?);
        div += (jp.j[l] - jm.j[l]) / (2.0 * h);
    }
    Ok(ContinuityResidual {
        dt_j0,
        div_j: div,
        plus: (dt_j0 + div).abs(),
        minus: (dt_j0 - div).abs(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpacelikeReport {
    pub eta: f64,
    pub direction: Vec3,
    /// `(x, x^2 ||psi(x e, eta x)||)`
    pub rows: Vec<(f64, f64)>,
    pub sup: f64,
    /// every value at or below the first one
    pub bounded: bool,
}

pub fn spacelike_decay_check(
    field: &dyn WaveField,
    eta: f64,
    direction: &Vec3,
    x_list: &[f64],
) -> Result<SpacelikeReport> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta must lie in [0, 1], got {eta}")));
    }
    if x_list.is_empty() || x_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("x_list must be non-empty and increasing".into()));
    }
    let e = direction.normalize();
    let rows: Vec<(f64, f64)> = x_list
        .par_iter()
        .map(|&x| field.psi(&(e * x), eta * x).map(|p| (x, x * x * p.norm())))
        .collect::<Result<_>>()?;
    let sup = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let first = rows[0].1;
    let bounded = rows.iter().all(|r| r.1 <= first * (1.0 + 1e-9) + 1e-300);
    Ok(SpacelikeReport {
        eta,
        direction: e,
        rows,
        sup,
        bounded,
    })
}

/// Riemann sum of `j0` over the cube `[-half_width, half_width)^3` with `n`
/// points per axis (periodic layout, no end-point duplication).
pub fn box_norm(field: &dyn WaveField, half_width: f64, n: usize, t: f64) -> Result<f64> {
    let h = 2.0 * half_width / n as f64;
    let vals: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|i| {
            let (a, b, c) = (i / (n * n), (i / n) % n, i % n);
            let x = Vec3::new(
                -half_width + h * a as f64,
                -half_width + h * b as f64,
                -half_width + h * c as f64,
            );
            field.psi(&x, t).map(|p| p.norm_sqr())
        })
        .collect::<Result<_>>()?;
    Ok(crate::quadrature::compensated_sum(vals) * h * h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::gaussian_packet;
    use crate::grid::MomentumGrid;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn origin_at_time_zero_is_weighted_sum() {
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let grid = MomentumGrid::cartesian(k0, 3.0, 12).unwrap();
        let amp = gaussian_packet(grid, k0, 0.5, 1.0, (one(), Complex64::new(0.0, 0.5))).unwrap();
        let got = evaluate_wave(&amp, &SpacetimePoint::new(Vec3::zeros(), 0.0)).unwrap();
        let mut want = Spinor4::ZERO;
        for i in 0..amp.len() {
            want += amp.synthesize(i) * amp.grid.weight(i);
        }
        assert!((got - want * FOURIER_NORM).norm() < 1e-14);
    }

    #[test]
    fn single_node_evolves_by_phase() {
        let k = Vec3::new(0.3, -0.2, 1.0);
        let grid = MomentumGrid::explicit(vec![k], vec![0.7]).unwrap();
        let mut amp = MomentumAmplitude::zeros(grid, 1.0).unwrap();
        amp.f1[0] = Complex64::new(0.4, 0.1);
        amp.f2[0] = Complex64::new(-0.2, 0.9);
        let x = Vec3::new(1.0, 2.0, 3.0);
        let p0 = evaluate_wave(&amp, &SpacetimePoint::new(x, 0.0)).unwrap();
        let t = 17.3;
        let e = (k.norm_squared() + 1.0).sqrt();
        let pt = evaluate_wave(&amp, &SpacetimePoint::new(x, t)).unwrap();
        assert!((pt - p0 * Complex64::cis(-e * t)).norm() < 1e-14);
        // plane wave: constant density, zero continuity residual
        let r = continuity_residual(&DirectSum::new(&amp), &SpacetimePoint::new(x, t), 1e-3).unwrap();
        assert!(r.plus < 1e-10 && r.dt_j0.abs() < 1e-10);
    }

    #[test]
    fn aliasing_guard_fires() {
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let grid = MomentumGrid::default_cartesian(k0, 0.5).unwrap();
        let amp = gaussian_packet(grid, k0, 0.5, 1.0, (one(), Complex64::new(0.0, 0.0))).unwrap();
        let err = evaluate_wave(&amp, &SpacetimePoint::new(Vec3::new(30.0, 0.0, 0.0), 10.0));
        assert!(matches!(err, Err(Error::Aliasing { .. })));
        assert!(evaluate_wave(&amp, &SpacetimePoint::new(Vec3::new(20.0, 0.0, 0.0), 10.0)).is_ok());
    }

    #[test]
    fn zero_amplitude_gives_zero_flux() {
        let grid = MomentumGrid::cartesian(Vec3::zeros(), 1.0, 6).unwrap();
        let amp = MomentumAmplitude::zeros(grid, 1.0).unwrap();
        let f = flux_at(&amp, &SpacetimePoint::new(Vec3::new(0.1, 0.0, 0.0), 1.0)).unwrap();
        assert_eq!(f, FluxVector::ZERO);
        let ds = DirectSum::new(&amp);
        let r = continuity_residual(&ds, &SpacetimePoint::new(Vec3::zeros(), 0.0), 1e-3).unwrap();
        assert_eq!(r.plus, 0.0);
        let s = spacelike_decay_check(&ds, 1.0, &Vec3::x(), &[1.0, 2.0]).unwrap();
        assert_eq!(s.sup, 0.0);
    }
}
