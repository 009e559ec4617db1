//! Stationary-phase asymptotics for `g(k) = sqrt(k^2+m^2) + a|k| - y.k`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{MomentumGrid, SphericalLayout};
use crate::quadrature::{uniform_breaks, SpinorSum};
use crate::spinor::{Spinor4, Vec3};

/// Panel phase bound for the brute-force grids; with 32-point panels the
/// phase advance between neighbouring nodes stays near `0.38 pi`.
const BRUTE_PANEL_PHASE: f64 = 12.0;
const BRUTE_ORDER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseParams {
    pub a: f64,
    pub y: Vec3,
    pub m: f64,
    pub mu: f64,
}

impl PhaseParams {
    pub fn new(a: f64, y: Vec3, m: f64, mu: f64) -> Result<Self> {
        if !(a >= 0.0) || !(m > 0.0) || !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "phase parameters need a >= 0, m > 0, mu > 0 (got a={a}, m={m}, mu={mu})"
            )));
        }
        Ok(PhaseParams { a, y, m, mu })
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        PhaseParams { mu, ..*self }
    }

    #[inline]
    pub fn g(&self, k: &Vec3) -> f64 {
        (k.norm_squared() + self.m * self.m).sqrt() + self.a * k.norm() - self.y.dot(k)
    }

    pub fn grad_g(&self, k: &Vec3) -> Vec3 {
        let n = k.norm();
        let e = (n * n + self.m * self.m).sqrt();
        let radial = if n > 0.0 { k / n * self.a } else { Vec3::zeros() };
        k / e + radial - self.y
    }
}

pub fn k_stationary(p: &PhaseParams) -> Option<Vec3> {
    let yn = p.y.norm();
    let d = yn - p.a;
    if !(0.0..1.0).contains(&d) {
        return None;
    }
    if d == 0.0 {
        return Some(Vec3::zeros());
    }
    let mag = p.m * d / (1.0 - d * d).sqrt();
    Some(p.y / yn * mag)
}

/// `(-2 pi i)^{3/2} e^{-i mu g(k_s)} (k_s^2+m^2)^{5/4} / m`, principal branch:
/// `(-2 pi i)^{3/2} = (2 pi)^{3/2} e^{-3 i pi / 4}`.
pub fn c1(p: &PhaseParams, k_stat: &Vec3) -> Complex64 {
    let pre = Complex64::from_polar(
        (2.0 * std::f64::consts::PI).powf(1.5),
        -0.75 * std::f64::consts::PI,
    );
    let e2 = k_stat.norm_squared() + p.m * p.m;
    pre * Complex64::cis(-p.mu * p.g(k_stat)) * (e2.powf(1.25) / p.m)
}

/// `C1 mu^{-3/2} chi(k_stat)`; only defined for `a = 0`.
pub fn leading_term<F: Fn(&Vec3) -> Spinor4>(p: &PhaseParams, chi: F) -> Result<Spinor4> {
    if p.a != 0.0 {
        return Err(Error::UnsupportedA(p.a));
    }
    let ks = k_stationary(p).ok_or(Error::NoStationaryPoint)?;
    Ok(chi(&ks) * (c1(p, &ks) * p.mu.powf(-1.5)))
}

/// Spherical-product grid about `y_hat` that resolves `e^{-i mu g}` up to
/// `k_cut`; `refine` multiplies the panel counts. Optional extra radial
/// break points keep cut-off kinks on panel boundaries.
pub fn brute_force_grid(p: &PhaseParams, k_cut: f64, extra_breaks: &[f64], n_phi: usize, refine: usize) -> Result<MomentumGrid> {
    let yn = p.y.norm();
    let axis = if yn > 0.0 { p.y / yn } else { Vec3::x() };
    let refine = refine.max(1) as f64;
    let omega_r = p.mu * (1.0 + p.a + yn);
    let mut breaks = Vec::new();
    let mut edges: Vec<f64> = extra_breaks.iter().cloned().filter(|b| *b > 0.0 && *b < k_cut).collect();
    edges.push(0.0);
    edges.push(k_cut);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    for w in edges.windows(2) {
        let seg = uniform_breaks(w[0], w[1], 2.0 * BRUTE_PANEL_PHASE / omega_r / refine);
        if breaks.is_empty() {
            breaks.extend(seg);
        } else {
            breaks.extend(seg.into_iter().skip(1));
        }
    }
    let omega_u = p.mu * yn * k_cut;
    let polar = if omega_u > 0.0 {
        uniform_breaks(-1.0, 1.0, (2.0 * BRUTE_PANEL_PHASE / omega_u / refine).min(2.0))
    } else {
        vec![-1.0, 1.0]
    };
    let layout = SphericalLayout::new(&axis, breaks, BRUTE_ORDER, polar, BRUTE_ORDER, n_phi)?;
    Ok(MomentumGrid::spherical(layout))
}

/// Weighted node sum of `e^{-i mu g} chi`, the ground-truth oracle.
///
/// Fails when the phase advances by more than `pi/2` between neighbouring
/// nodes along any coordinate line of a spherical grid.
pub fn oscillatory_bruteforce<F>(p: &PhaseParams, grid: &MomentumGrid, chi: F) -> Result<Spinor4>
where
    F: Fn(&Vec3) -> Spinor4 + Sync,
{
    if let crate::grid::GridLayout::Spherical(s) = &grid.layout {
        let adv = max_phase_advance(p, s);
        if adv >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Resolution {
                what: "phase advance between neighbouring nodes",
                measured: adv,
                limit: std::f64::consts::FRAC_PI_2,
            });
        }
    }
    Ok(crate::par::sum_indexed_spinor(grid.len(), |i| {
        let k = grid.node(i);
        let c = chi(&k);
        if c == Spinor4::ZERO {
            return Spinor4::ZERO;
        }
        c * Complex64::from_polar(grid.weight(i), -p.mu * p.g(&k))
    }))
}

fn max_phase_advance(p: &PhaseParams, s: &SphericalLayout) -> f64 {
    let na = s.n_angular();
    let nphi = s.n_phi;
    let nu = s.polar.len();
    let shell_phase = |ir: usize| -> Vec<f64> {
        let r = s.radial.nodes[ir];
        (0..na).map(|a| p.mu * p.g(&(s.direction(a) * r))).collect()
    };
    (0..s.n_radial())
        .into_par_iter()
        .map(|ir| {
            let cur = shell_phase(ir);
            let mut adv: f64 = 0.0;
            for iu in 0..nu {
                for ip in 0..nphi {
                    let a = iu * nphi + ip;
                    if iu + 1 < nu {
                        adv = adv.max((cur[a + nphi] - cur[a]).abs());
                    }
                    if nphi > 1 {
                        let b = iu * nphi + (ip + 1) % nphi;
                        adv = adv.max((cur[b] - cur[a]).abs());
                    }
                }
            }
            if ir + 1 < s.n_radial() {
                let next = shell_phase(ir + 1);
                for (c, n) in cur.iter().zip(&next) {
                    adv = adv.max((n - c).abs());
                }
            }
            adv
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatPhaseResult {
    pub mu: f64,
    pub k_stat: Option<Vec3>,
    pub leading: Spinor4,
    pub brute: Spinor4,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<StatPhaseResult>,
    pub slope: f64,
    /// change of the brute-force value at the largest `mu` when the panel
    /// counts are doubled
    pub refinement_change: f64,
}

impl ScalingReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_statphase_csv(&self.rows, w)
    }
}

pub fn write_statphase_csv<W: Write>(rows: &[StatPhaseResult], mut w: W) -> Result<()> {
    writeln!(w, "mu,err_norm,leading_norm,brute_norm")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.mu, r.err, r.leading.norm(), r.brute.norm())?;
    }
    Ok(())
}

/// Brute force vs leading term over `mu_list`, with the log-log slope of
/// the error. Without a stationary point the leading term is zero and the
/// slope is that of the integral itself.
pub fn error_scaling<F>(
    base: &PhaseParams,
    mu_list: &[f64],
    chi: F,
    k_cut: f64,
    extra_breaks: &[f64],
    n_phi: usize,
) -> Result<ScalingReport>
where
    F: Fn(&Vec3) -> Spinor4 + Sync,
{
    if mu_list.len() < 2 || mu_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("mu_list must be increasing with >= 2 entries".into()));
    }
    if base.a != 0.0 {
        return Err(Error::UnsupportedA(base.a));
    }
    let mut rows = Vec::new();
    let mut refinement_change = 0.0;
    for (idx, &mu) in mu_list.iter().enumerate() {
        let p = base.with_mu(mu);
        let grid = brute_force_grid(&p, k_cut, extra_breaks, n_phi, 1)?;
        let brute = oscillatory_bruteforce(&p, &grid, &chi)?;
        if idx + 1 == mu_list.len() {
            let fine = brute_force_grid(&p, k_cut, extra_breaks, n_phi, 2)?;
            refinement_change = (oscillatory_bruteforce(&p, &fine, &chi)? - brute).norm();
        }
        let k_stat = k_stationary(&p);
        let leading = match k_stat {
            Some(_) => leading_term(&p, &chi)?,
            None => Spinor4::ZERO,
        };
        rows.push(StatPhaseResult {
            mu,
            k_stat,
            leading,
            brute,
            err: (brute - leading).norm(),
        });
    }
    let mus: Vec<f64> = rows.iter().map(|r| r.mu).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.err).collect();
    Ok(ScalingReport {
        slope: loglog_slope(&mus, &errs)?,
        rows,
        refinement_change,
    })
}

/// `e^{-i lambda m^2} (i lambda)^{-3/2} psi_hat(k) sqrt(k^2/m^2 + 1)`.
pub fn cones_asymptotic(psi_hat_k: &Spinor4, k: &Vec3, m: f64, lambda: f64) -> Spinor4 {
    let ph = Complex64::from_polar(lambda.powf(-1.5), -lambda * m * m - 0.75 * std::f64::consts::PI);
    *psi_hat_k * (ph * (k.norm_squared() / (m * m) + 1.0).sqrt())
}

/// Far-field limit of `lambda^3 j(lambda k, lambda E_k)`.
pub fn flux_asymptotic(psi_hat_k: &Spinor4, k: &Vec3, m: f64) -> Vec3 {
    let e = (k.norm_squared() + m * m).sqrt();
    k * (psi_hat_k.norm_sqr() * e / (m * m))
}

/// Gaussian `exp(-k^2/2) v` with a C^2 smooth-step cut-off on `[r1, r2]`.
pub fn gaussian_chi(v: Spinor4, r1: f64, r2: f64) -> impl Fn(&Vec3) -> Spinor4 + Sync + Copy {
    move |k: &Vec3| {
        let r = k.norm();
        let c = if r <= r1 {
            1.0
        } else if r >= r2 {
            0.0
        } else {
            let t = (r - r1) / (r2 - r1);
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        };
        v * ((-0.5 * r * r).exp() * c)
    }
}

/// Compact C^2 bump `(1 - k^2/r_c^2)^3 v`.
pub fn bump_chi(v: Spinor4, rc: f64) -> impl Fn(&Vec3) -> Spinor4 + Sync + Copy {
    move |k: &Vec3| {
        let q = 1.0 - k.norm_squared() / (rc * rc);
        if q <= 0.0 {
            Spinor4::ZERO
        } else {
            v * (q * q * q)
        }
    }
}

/// Plain (uncompensated) node-order sum, an independent check of the oracle's reduction.
pub fn naive_sum<F: Fn(&Vec3) -> Spinor4>(p: &PhaseParams, grid: &MomentumGrid, chi: F) -> Spinor4 {
    let mut s = SpinorSum::default();
    for i in (0..grid.len()).rev() {
        let k = grid.node(i);
        s.add(&(chi(&k) * Complex64::from_polar(grid.weight(i), -p.mu * p.g(&k))));
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spinor() -> Spinor4 {
        Spinor4::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(0.2, 0.0),
            Complex64::new(0.0, 0.0),
        )
    }

    #[test]
    fn stationary_point_closed_form() {
        let p = PhaseParams::new(0.0, Vec3::new(0.0, 1.0 / 2f64.sqrt(), 0.0), 1.0, 1.0).unwrap();
        let k = k_stationary(&p).unwrap();
        assert!((k.norm() - 1.0).abs() < 1e-14);
        assert!(p.grad_g(&k).norm() < 1e-12);

        let q = PhaseParams::new(0.4, Vec3::new(0.0, 0.0, 0.4), 1.0, 1.0).unwrap();
        assert_eq!(k_stationary(&q), Some(Vec3::zeros()));
        let r = PhaseParams::new(0.0, Vec3::new(1.5, 0.0, 0.0), 1.0, 1.0).unwrap();
        assert_eq!(k_stationary(&r), None);
        let s = PhaseParams::new(0.5, Vec3::new(0.2, 0.0, 0.0), 1.0, 1.0).unwrap();
        assert_eq!(k_stationary(&s), None);
    }

    #[test]
    fn leading_term_errors_and_scaling() {
        let chi = |_: &Vec3| spinor();
        let p = PhaseParams::new(0.0, Vec3::new(0.6, 0.0, 0.0), 1.0, 50.0).unwrap();
        let a = leading_term(&p, chi).unwrap();
        let b = leading_term(&p.with_mu(100.0), chi).unwrap();
        assert!((b.norm() / a.norm() - 2f64.powf(-1.5)).abs() < 1e-14);
        let zero = leading_term(&p, |_: &Vec3| Spinor4::ZERO).unwrap();
        assert_eq!(zero, Spinor4::ZERO);
        assert!(matches!(
            leading_term(&PhaseParams { a: 0.1, ..p }, chi),
            Err(Error::UnsupportedA(_))
        ));
        assert!(matches!(
            leading_term(&PhaseParams { y: Vec3::new(2.0, 0.0, 0.0), ..p }, chi),
            Err(Error::NoStationaryPoint)
        ));
    }

    #[test]
    fn single_node_oracle() {
        let k = Vec3::new(0.3, 0.1, 0.0);
        let g = MomentumGrid::explicit(vec![k], vec![0.25]).unwrap();
        let p = PhaseParams::new(0.2, Vec3::new(0.1, 0.0, 0.3), 1.0, 7.0).unwrap();
        let got = oscillatory_bruteforce(&p, &g, |_| spinor()).unwrap();
        let want = spinor() * Complex64::from_polar(0.25, -7.0 * p.g(&k));
        assert!((got - want).norm() < 1e-15);
        let zero = oscillatory_bruteforce(&p, &g, |_| Spinor4::ZERO).unwrap();
        assert_eq!(zero, Spinor4::ZERO);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = PhaseParams::new(0.0, Vec3::new(0.6, 0.0, 0.0), 1.0, 200.0).unwrap();
        let coarse = brute_force_grid(&p.with_mu(10.0), 8.0, &[], 2, 1).unwrap();
        assert!(matches!(
            oscillatory_bruteforce(&p, &coarse, gaussian_chi(spinor(), 6.0, 8.0)),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn gaussian_at_origin_matches_leading_term() {
        let p = PhaseParams::new(0.0, Vec3::zeros(), 1.0, 50.0).unwrap();
        let chi = gaussian_chi(spinor(), 6.0, 8.0);
        let grid = brute_force_grid(&p, 8.0, &[6.0], 1, 1).unwrap();
        let brute = oscillatory_bruteforce(&p, &grid, chi).unwrap();
        let lead = leading_term(&p, chi).unwrap();
        // relative correction is O(1/mu)
        assert!((brute - lead).norm() < 0.1 * lead.norm());
        let fine = brute_force_grid(&p, 8.0, &[6.0], 1, 2).unwrap();
        assert!((oscillatory_bruteforce(&p, &fine, chi).unwrap() - brute).norm() < 1e-8);
        assert!((naive_sum(&p, &grid, chi) - brute).norm() < 1e-12);
    }

    #[test]
    fn cones_form_of_leading_term() {
        let psi_hat = spinor();
        let m = 1.3;
        let k = Vec3::new(2.0, -0.4, 0.7);
        let e = (k.norm_squared() + m * m).sqrt();
        for lambda in [25.0, 100.0, 400.0] {
            let p = PhaseParams::new(0.0, k / e, m, lambda * e).unwrap();
            let norm = crate::propagator::FOURIER_NORM;
            let lead = leading_term(&p, |_| psi_hat * norm).unwrap();
            let cone = cones_asymptotic(&psi_hat, &k, m, lambda);
            assert!((lead - cone).norm() < 1e-12 * cone.norm());
            // the stationary phase equals lambda m^2
            let ks = k_stationary(&p).unwrap();
            assert!((p.mu * p.g(&ks) - lambda * m * m).abs() < 1e-9);
            let undo = cone * (Complex64::new(0.0, lambda).powf(1.5) * Complex64::cis(lambda * m * m));
            assert!((undo - psi_hat * (e / m)).norm() < 1e-10);
        }
        let f = flux_asymptotic(&psi_hat, &k, m);
        assert!((f.normalize() - k.normalize()).norm() < 1e-15);
        assert_eq!(flux_asymptotic(&Spinor4::ZERO, &k, m), Vec3::zeros());
    }
}
