//! Far-field evaluation of free waves on spherical-product momentum grids.
//!
//! On every radial shell the spinor amplitude is expanded in spherical
//! harmonics up to `lmax`; the angular integral of the plane wave against the
//! expansion is then exact,
//!
//! `int dOmega e^{i k.x} Y_lm(k_hat) = 4 pi i^l j_l(k |x|) Y_lm(x_hat)`,
//!
//! so only the radial integral is discretised. This avoids the periodic
//! images that limit a cartesian node sum to `|x| < pi / dk`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::amplitude::MomentumAmplitude;
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::grid::{GridLayout, SphericalLayout, PANEL_PHASE_LIMIT};
use crate::propagator::{WaveField, FOURIER_NORM};
use crate::quadrature::{barycentric_coefficients, barycentric_weights, gauss_legendre};
use crate::special::{normalized_legendre, spherical_bessel_array, spherical_harmonics, tri_index};
use crate::spinor::{Spinor4, Vec3};

/// Panels may be evaluated a little beyond the phase they were sized for.
pub const PHASE_GUARD: f64 = 1.25 * PANEL_PHASE_LIMIT;

pub struct ShellExpansion {
    m: f64,
    lmax: usize,
    frame: Frame,
    radii: Vec<f64>,
    energies: Vec<f64>,
    /// `(2 pi)^{-3/2} w_r r^2`
    radial_factor: Vec<f64>,
    radial_breaks: Vec<f64>,
    radial_order: usize,
    ref_nodes: Vec<f64>,
    ref_bary: Vec<f64>,
    /// active `(l, m)` pairs and their index in the full `(lmax+1)^2` table
    pairs: Vec<(usize, usize)>,
    /// `4 pi i^l F_lm(r)` per radial node, `pairs.len()` entries per node
    coef: Vec<Spinor4>,
    max_half_width: f64,
    v_max: f64,
}

impl ShellExpansion {
    pub fn new(amp: &MomentumAmplitude, lmax: usize) -> Result<ShellExpansion> {
        let s: &SphericalLayout = match &amp.grid.layout {
            GridLayout::Spherical(s) => s,
            _ => return Err(Error::LayoutUnsupported { expected: "spherical-product" }),
        };
        if s.polar_order < lmax + 1 || s.n_phi < 2 * lmax + 1 {
            return Err(Error::InvalidArgument(format!(
                "angular rule (polar order {}, n_phi {}) cannot resolve lmax = {lmax}",
                s.polar_order, s.n_phi
            )));
        }
        let n_u = s.polar.len();
        let n_phi = s.n_phi;
        let na = s.n_angular();
        let nlm = (lmax + 1) * (lmax + 1);
        let two_l1 = 2 * lmax + 1;

        let legendre: Vec<Vec<f64>> = s
            .polar
            .nodes
            .iter()
            .map(|&u| {
                let mut p = Vec::new();
                normalized_legendre(lmax, u, &mut p);
                p
            })
            .collect();
        // e^{-i m phi_p} * dphi, m = -lmax..=lmax
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let phase: Vec<Complex64> = (0..two_l1)
            .flat_map(|mi| {
                let mm = mi as f64 - lmax as f64;
                (0..n_phi).map(move |p| Complex64::from_polar(dphi, -mm * s.phi(p)))
            })
            .collect();
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        let four_pi = 4.0 * std::f64::consts::PI;

        let full: Vec<Vec<Spinor4>> = (0..s.n_radial())
            .into_par_iter()
            .map(|ir| {
                let base = ir * na;
                let vals: Vec<Spinor4> = (0..na).map(|a| amp.synthesize(base + a)).collect();
                let mut g = vec![Spinor4::ZERO; n_u * two_l1];
                for iu in 0..n_u {
                    let row = &vals[iu * n_phi..(iu + 1) * n_phi];
                    for mi in 0..two_l1 {
                        let ph = &phase[mi * n_phi..(mi + 1) * n_phi];
                        let mut acc = Spinor4::ZERO;
                        for (v, e) in row.iter().zip(ph) {
                            acc += *v * *e;
                        }
                        g[iu * two_l1 + mi] = acc;
                    }
                }
                let mut out = vec![Spinor4::ZERO; nlm];
                for l in 0..=lmax {
                    for mi in (lmax - l)..=(lmax + l) {
                        let mm = mi as i64 - lmax as i64;
                        let ma = mm.unsigned_abs() as usize;
                        let sign = if mm < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
                        let mut acc = Spinor4::ZERO;
                        for iu in 0..n_u {
                            let w = s.polar.weights[iu] * legendre[iu][tri_index(l, ma)] * sign;
                            acc += g[iu * two_l1 + mi] * w;
                        }
                        let idx = l * l + (mm + l as i64) as usize;
                        out[idx] = acc * (i_pow[l % 4] * four_pi);
                    }
                }
                out
            })
            .collect();

        let mut peak = vec![0.0f64; nlm];
        for shell in &full {
            for (p, c) in peak.iter_mut().zip(shell) {
                *p = p.max(c.norm());
            }
        }
        let global = peak.iter().cloned().fold(0.0, f64::max);
        let mut pairs = Vec::new();
        for l in 0..=lmax {
            for j in 0..(2 * l + 1) {
                let idx = l * l + j;
                if peak[idx] > 1e-15 * global {
                    pairs.push((l, idx));
                }
            }
        }
        let mut coef = Vec::with_capacity(full.len() * pairs.len());
        for shell in &full {
            for &(_, idx) in &pairs {
                coef.push(shell[idx]);
            }
        }

        let m = amp.m;
        let radii = s.radial.nodes.clone();
        let energies: Vec<f64> = radii.iter().map(|r| (r * r + m * m).sqrt()).collect();
        let radial_factor = radii
            .iter()
            .zip(&s.radial.weights)
            .map(|(r, w)| FOURIER_NORM * w * r * r)
            .collect();
        let k_max = s.k_max();
        let ref_nodes = gauss_legendre(s.radial_order).nodes;
        let ref_bary = barycentric_weights(&ref_nodes);
        Ok(ShellExpansion {
            m,
            lmax,
            frame: s.frame,
            radii,
            energies,
            radial_factor,
            radial_breaks: s.radial_breaks.clone(),
            radial_order: s.radial_order,
            ref_nodes,
            ref_bary,
            pairs,
            coef,
            max_half_width: s.max_radial_half_width(),
            v_max: k_max / (k_max * k_max + m * m).sqrt(),
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn radial_factors(&self) -> &[f64] {
        &self.radial_factor
    }

    pub fn n_radial(&self) -> usize {
        self.radii.len()
    }

    pub fn active_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn k_max(&self) -> f64 {
        *self.radial_breaks.last().unwrap()
    }

    /// Largest `|x| + v_max |t|` the radial rule resolves.
    pub fn max_frequency(&self) -> f64 {
        PHASE_GUARD / self.max_half_width
    }

    /// Fails when the radial integrand at `(|x| + extra, t)` oscillates too
    /// fast for the panels.
    pub fn check_resolution(&self, dist: f64, t: f64) -> Result<()> {
        let omega = dist + self.v_max * t.abs();
        let phase = omega * self.max_half_width;
        if phase > PHASE_GUARD {
            Err(Error::Resolution {
                what: "radial panel phase",
                measured: phase,
                limit: PHASE_GUARD,
            })
        } else {
            Ok(())
        }
    }

    fn harmonics_at(&self, x: &Vec3) -> (f64, Vec<Complex64>) {
        let (rho, u, phi) = self.frame.spherical_coords(x);
        let y = spherical_harmonics(self.lmax, u, phi);
        (rho, self.pairs.iter().map(|&(_, idx)| y[idx]).collect())
    }

    fn combine(&self, rho: f64, y: &[Complex64], k: f64, coef: &[Spinor4], jl: &mut Vec<f64>) -> Spinor4 {
        spherical_bessel_array(self.lmax, k * rho, jl);
        let mut acc = Spinor4::ZERO;
        for ((&(l, _), yp), c) in self.pairs.iter().zip(y).zip(coef) {
            acc += *c * (*yp * jl[l]);
        }
        acc
    }

    /// Shell integrals `B_r(x) = int dOmega_k e^{i k.x} psi_hat(k)` at every radial node.
    pub fn shell_values(&self, x: &Vec3) -> Vec<Spinor4> {
        let (rho, y) = self.harmonics_at(x);
        let np = self.pairs.len();
        let mut jl = Vec::with_capacity(self.lmax + 1);
        self.radii
            .iter()
            .enumerate()
            .map(|(ir, &r)| self.combine(rho, &y, r, &self.coef[ir * np..(ir + 1) * np], &mut jl))
            .collect()
    }

    /// Expansion coefficients at an arbitrary radius by Lagrange
    /// interpolation within the containing panel.
    pub fn coefficients_at(&self, r: f64) -> Result<Vec<Spinor4>> {
        let k_max = self.k_max();
        if !(0.0..=k_max).contains(&r) {
            return Err(Error::InvalidArgument(format!("radius {r} outside [0, {k_max}]")));
        }
        let panel = match self.radial_breaks.windows(2).position(|w| r <= w[1]) {
            Some(p) => p,
            None => self.radial_breaks.len() - 2,
        };
        let (a, b) = (self.radial_breaks[panel], self.radial_breaks[panel + 1]);
        let xi = (2.0 * r - a - b) / (b - a);
        let c = barycentric_coefficients(&self.ref_nodes, &self.ref_bary, xi);
        let np = self.pairs.len();
        let mut out = vec![Spinor4::ZERO; np];
        for (j, cj) in c.iter().enumerate() {
            let ir = panel * self.radial_order + j;
            for (o, v) in out.iter_mut().zip(&self.coef[ir * np..(ir + 1) * np]) {
                *o += *v * *cj;
            }
        }
        Ok(out)
    }

    /// `B_r(x)` at an arbitrary radius `r`.
    pub fn shell_value_at_radius(&self, x: &Vec3, r: f64) -> Result<Spinor4> {
        let c = self.coefficients_at(r)?;
        let (rho, y) = self.harmonics_at(x);
        let mut jl = Vec::new();
        Ok(self.combine(rho, &y, r, &c, &mut jl))
    }

    /// `B_r(x)` for many positions at one radius, from precomputed coefficients.
    pub fn shell_values_for_points(&self, points: &[Vec3], r: f64) -> Result<Vec<Spinor4>> {
        let c = self.coefficients_at(r)?;
        Ok(points
            .par_iter()
            .map(|x| {
                let (rho, y) = self.harmonics_at(x);
                let mut jl = Vec::new();
                self.combine(rho, &y, r, &c, &mut jl)
            })
            .collect())
    }

    /// The band-limited interpolant of `psi_hat` at an arbitrary momentum.
    pub fn psi_hat_at(&self, k: &Vec3) -> Result<Spinor4> {
        let (r, u, phi) = self.frame.spherical_coords(k);
        let c = self.coefficients_at(r)?;
        let y = spherical_harmonics(self.lmax, u, phi);
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        let mut acc = Spinor4::ZERO;
        for (&(l, idx), cp) in self.pairs.iter().zip(&c) {
            acc += *cp * (y[idx] * i_pow[l % 4]);
        }
        Ok(acc * (1.0 / (4.0 * std::f64::consts::PI)))
    }

    /// `sum_r c_r e^{-i E_r t} B_r` for every time. Arithmetic runs of
    /// times are advanced by a phase recurrence.
    pub fn time_sum(&self, shell: &[Spinor4], times: &[f64]) -> Vec<Spinor4> {
        let mut out = Vec::with_capacity(times.len());
        for (start, len) in arithmetic_runs(times) {
            if len < MIN_RUN {
                for &t in &times[start..start + len] {
                    let mut acc = Spinor4::ZERO;
                    for ((b, e), c) in shell.iter().zip(&self.energies).zip(&self.radial_factor) {
                        acc += *b * Complex64::from_polar(*c, -e * t);
                    }
                    out.push(acc);
                }
                continue;
            }
            let t0 = times[start];
            let dt = (times[start + len - 1] - t0) / (len - 1) as f64;
            let mut acc = vec![Spinor4::ZERO; len];
            for ((b, e), c) in shell.iter().zip(&self.energies).zip(&self.radial_factor) {
                let rot = Complex64::cis(-e * dt);
                let mut ph = Complex64::from_polar(*c, -e * t0);
                for (j, a) in acc.iter_mut().enumerate() {
                    if j % RESYNC == 0 && j > 0 {
                        ph = Complex64::from_polar(*c, -e * (t0 + j as f64 * dt));
                    }
                    *a += *b * ph;
                    ph *= rot;
                }
            }
            out.extend(acc);
        }
        out
    }
}

const MIN_RUN: usize = 8;
/// recurrence steps between exact phase evaluations
const RESYNC: usize = 256;

/// Maximal runs `(start, len)` of equally spaced times.
fn arithmetic_runs(times: &[f64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < times.len() {
        let mut j = i + 1;
        if j < times.len() {
            let d = times[j] - times[i];
            let tol = 1e-12 * (times[i].abs() + times[j].abs() + d.abs());
            while j + 1 < times.len() && ((times[j + 1] - times[j]) - d).abs() <= tol.max(1e-12 * times[j + 1].abs()) {
                j += 1;
            }
            j += 1;
        }
        runs.push((i, j - i));
        i = j;
    }
    runs
}

impl WaveField for ShellExpansion {
    fn mass(&self) -> f64 {
        self.m
    }

    fn psi(&self, x: &Vec3, t: f64) -> Result<Spinor4> {
        Ok(self.psi_series(x, &[t])?.remove(0))
    }

    fn psi_series(&self, x: &Vec3, times: &[f64]) -> Result<Vec<Spinor4>> {
        let t_max = times.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        self.check_resolution(x.norm(), t_max)?;
        let shell = self.shell_values(x);
        Ok(self.time_sum(&shell, times))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::gaussian_packet;
    use crate::geometry::ConeSpec;
    use crate::grid::MomentumGrid;
    use crate::propagator::DirectSum;

    fn packet(cone: &ConeSpec, omega: f64, lmax: usize) -> MomentumAmplitude {
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let grid = MomentumGrid::far_field(cone, 5.0, omega, lmax).unwrap();
        gaussian_packet(grid, k0, 0.5, 1.0, (Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8))).unwrap()
    }

    #[test]
    fn matches_direct_sum_near_origin() {
        let cone = ConeSpec::new(Vec3::x(), 0.3).unwrap();
        let amp = packet(&cone, 20.0, 24);
        let shell = ShellExpansion::new(&amp, 24).unwrap();
        let direct = DirectSum::new(&amp);
        for (x, t) in [
            (Vec3::new(0.5, -0.3, 0.2), 0.0),
            (Vec3::new(2.0, 1.0, -1.0), 1.5),
            (Vec3::zeros(), 0.7),
        ] {
            let a = shell.psi(&x, t).unwrap();
            let b = direct.psi_unchecked(&x, t);
            assert!((a - b).norm() < 1e-10 * b.norm().max(1e-3), "x={x:?}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn interpolated_amplitude_matches_packet() {
        let cone = ConeSpec::new(Vec3::new(0.0, 1.0, 0.0), 0.5).unwrap();
        let amp = packet(&cone, 30.0, 26);
        let shell = ShellExpansion::new(&amp, 26).unwrap();
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let gauss = |k: &Vec3| (-(k - k0).norm_squared()).exp();
        // normalisation constant recovered from any node
        let i0 = amp.len() / 2 + 7;
        let scale = amp.f1[i0].re / (0.6 * gauss(&amp.grid.node(i0)));
        for k in [k0, Vec3::new(1.3, 0.4, -0.2), Vec3::new(2.5, -0.5, 0.6)] {
            let got = shell.psi_hat_at(&k).unwrap();
            let g = gauss(&k) * scale;
            let want = crate::spinor::positive_spinors(&k, 1.0)
                .combine(Complex64::new(0.6 * g, 0.0), Complex64::new(0.0, 0.8 * g));
            assert!((got - want).norm() < 1e-9, "k={k:?}: {got:?} vs {want:?}");
        }
    }

    #[test]
    fn recurrence_matches_direct_phases() {
        let amp = packet(&ConeSpec::full_sphere(), 40.0, 4);
        let shell = ShellExpansion::new(&amp, 4).unwrap();
        let x = Vec3::new(3.0, 1.0, 0.5);
        let b = shell.shell_values(&x);
        let mut times: Vec<f64> = (0..700).map(|j| 0.05 * j as f64).collect();
        times.extend([1.0, 2.5, 7.25]);
        times.extend((0..20).map(|j| 10.0 + 0.3 * j as f64));
        let fast = shell.time_sum(&b, &times);
        let scale: f64 = b.iter().zip(shell.radial_factors()).map(|(v, c)| v.norm() * c).sum();
        for (t, f) in times.iter().zip(&fast) {
            let mut acc = Spinor4::ZERO;
            for ((bv, e), c) in b.iter().zip(shell.energies()).zip(shell.radial_factors()) {
                acc += *bv * Complex64::from_polar(*c, -e * t);
            }
            assert!((acc - *f).norm() < 1e-14 * scale, "t={t}");
        }
    }

    #[test]
    fn resolution_guard() {
        let amp = packet(&ConeSpec::full_sphere(), 20.0, 4);
        let shell = ShellExpansion::new(&amp, 4).unwrap();
        assert!(shell.psi(&Vec3::new(10.0, 0.0, 0.0), 5.0).is_ok());
        assert!(matches!(
            shell.psi(&Vec3::new(300.0, 0.0, 0.0), 5.0),
            Err(Error::Resolution { .. })
        ));
    }
}
