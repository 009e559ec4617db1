//! Spherical detector cones and time-integrated flux through them.

use std::io::Write;

use rayon::prelude::*;

use crate::amplitude::MomentumAmplitude;
use crate::error::{Error, Result};
use crate::geometry::{ConeSpec, Frame};
use crate::grid::GridLayout;
use crate::propagator::WaveField;
use crate::quadrature::{composite_gauss_legendre, gauss_legendre, simpson, uniform_breaks, NeumaierSum, Rule};
use crate::spinor::{energy, flux, FluxVector, Vec3};

pub const FAS_CSV_HEADER: &str =
    "R,crossing_direct,crossing_substituted,abs_flux,spacelike_part,momentum_side,signed_disc,abs_disc,tail_bound";

/// Flux at `t_max` above this fraction of the peak means the packet has not
/// finished crossing.
pub const TRANSIT_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceQuadrature {
    pub radius: f64,
    pub cone: ConeSpec,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        crate::quadrature::compensated_sum(self.weights.iter().cloned())
    }
}

/// Gauss-Legendre in `cos theta` on `[cos theta_0, 1]` times a uniform
/// azimuth rule, about the cone axis.
pub fn sphere_quadrature(radius: f64, cone: &ConeSpec, n_theta: usize, n_phi: usize) -> Result<SurfaceQuadrature> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("detector radius must be positive, got {radius}")));
    }
    if n_theta < 4 || n_phi < 4 {
        return Err(Error::InvalidArgument("sphere quadrature needs n_theta, n_phi >= 4".into()));
    }
    let frame = Frame::with_axis(&cone.axis);
    let polar = gauss_legendre(n_theta).mapped(cone.cos_half_angle(), 1.0);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut points = Vec::with_capacity(n_theta * n_phi);
    let mut normals = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (u, wu) in polar.nodes.iter().zip(&polar.weights) {
        for p in 0..n_phi {
            let phi = (p as f64 + 0.5) * dphi;
            let n = frame.direction(*u, phi.cos(), phi.sin());
            points.push(n * radius);
            normals.push(n);
            weights.push(radius * radius * wu * dphi);
        }
    }
    Ok(SurfaceQuadrature {
        radius,
        cone: *cone,
        points,
        normals,
        weights,
    })
}

/// Surface integrals accumulated under one time rule.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxIntegrals {
    /// `int dt sum_surface w j.n`
    pub crossing: f64,
    /// `int dt sum_surface w |j|`
    pub abs_flux: f64,
    /// `j0`-weighted mean angle between `j` and the normal, radians
    pub mean_angle: f64,
    /// `sum_surface w j.n` at every node of the rule
    pub series: Vec<f64>,
}

impl FluxIntegrals {
    /// True when the surface flux at the last node of the rule is not
    /// negligible against its peak.
    pub fn transit_incomplete(&self) -> bool {
        let peak = self.series.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        match self.series.last() {
            Some(last) => peak > 0.0 && last.abs() > TRANSIT_THRESHOLD * peak,
            None => false,
        }
    }
}

/// Evaluates the field once per surface point for the union of all rule
/// nodes and integrates the flux under each rule. Time weights may carry
/// any Jacobian.
pub fn surface_flux_integrals(field: &dyn WaveField, surface: &SurfaceQuadrature, rules: &[&Rule]) -> Result<Vec<FluxIntegrals>> {
    let times: Vec<f64> = rules.iter().flat_map(|r| r.nodes.iter().cloned()).collect();
    let nt = times.len();
    // per point: flux normal component, |j| and angle * j0 at each time
    let per_point: Vec<Vec<[f64; 4]>> = surface
        .points
        .par_iter()
        .zip(&surface.normals)
        .map(|(x, n)| {
            let psi = field.psi_series(x, &times)?;
            Ok(psi
                .iter()
                .map(|p| {
                    let f = flux(p);
                    let jn = f.j.dot(n);
                    let ja = f.j.norm();
                    let ang = if ja > 0.0 { (jn / ja).clamp(-1.0, 1.0).acos() } else { 0.0 };
                    [jn, ja, ang * f.j0, f.j0]
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(rules.len());
    let mut offset = 0;
    for rule in rules {
        let mut series = vec![0.0; rule.len()];
        let (mut cross, mut abs, mut ang, mut j0) =
            (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
        for (it, (&wt, s)) in rule.weights.iter().zip(series.iter_mut()).enumerate() {
            let mut at_t = NeumaierSum::default();
            for (vals, ws) in per_point.iter().zip(&surface.weights) {
                let v = vals[offset + it];
                at_t.add(ws * v[0]);
                abs.add(wt * ws * v[1]);
                ang.add(wt * ws * v[2]);
                j0.add(wt * ws * v[3]);
            }
            *s = at_t.value();
            cross.add(wt * *s);
        }
        offset += rule.len();
        let j0v = j0.value();
        out.push(FluxIntegrals {
            crossing: cross.value(),
            abs_flux: abs.value(),
            mean_angle: if j0v > 0.0 { ang.value() / j0v } else { 0.0 },
            series,
        });
    }
    debug_assert_eq!(offset, nt);
    Ok(out)
}

/// Default time truncation `t_max = R E(k_min) / k_min`.
pub fn default_t_max(radius: f64, k_min: f64, m: f64) -> f64 {
    radius * energy(k_min * k_min, m) / k_min
}

/// `k_min = max(|k0| - 5 sigma, 0.2 m)`.
pub fn default_k_min(k0_norm: f64, sigma: f64, m: f64) -> f64 {
    (k0_norm - 5.0 * sigma).max(0.2 * m)
}

/// Default number of Simpson intervals, `max(400, 8 R m)` rounded up to even.
pub fn default_n_t(radius: f64, m: f64) -> usize {
    let n = (8.0 * radius * m).ceil().max(400.0) as usize;
    n + n % 2
}

pub fn direct_time_rule(t_max: f64, n_t: usize) -> Result<Rule> {
    if !(t_max > 0.0) || n_t < 2 {
        return Err(Error::InvalidArgument("time rule needs t_max > 0 and n_t >= 2".into()));
    }
    Ok(simpson(0.0, t_max, n_t))
}

/// Time nodes of the substituted integral. `momentum` covers `t in
/// [t(k_max), t(k_min)]` through `t = R E_k / k` with weights
/// `w_k R m^2 / (E_k k^2)`; `sliver` covers `[R, t(k_max)]` and `spacelike`
/// covers `[0, R]`, both directly in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutedRules {
    pub spacelike: Rule,
    pub sliver: Rule,
    pub momentum: Rule,
}

const SUBST_ORDER: usize = 16;
const SUBST_PANEL: f64 = 0.1;

pub fn substituted_rules(radius: f64, m: f64, k_min: f64, k_max: f64) -> Result<SubstitutedRules> {
    if !(k_min > 0.0 && k_max > k_min) {
        return Err(Error::InvalidArgument(format!("need 0 < k_min < k_max (got {k_min}, {k_max})")));
    }
    let kr = composite_gauss_legendre(&uniform_breaks(k_min, k_max, SUBST_PANEL), SUBST_ORDER);
    let mut nodes = Vec::with_capacity(kr.len());
    let mut weights = Vec::with_capacity(kr.len());
    for (k, w) in kr.nodes.iter().zip(&kr.weights) {
        let e = energy(k * k, m);
        nodes.push(radius * e / k);
        weights.push(w * radius * m * m / (e * k * k));
    }
    let t_kmax = default_t_max(radius, k_max, m);
    let n_sliver = ((t_kmax - radius) / (0.5 * radius)).ceil().max(1.0) as usize;
    let sliver = composite_gauss_legendre(&uniform_breaks(radius, t_kmax, (t_kmax - radius) / n_sliver as f64), SUBST_ORDER);
    let spacelike = composite_gauss_legendre(&uniform_breaks(0.0, radius, 5.0), SUBST_ORDER);
    Ok(SubstitutedRules {
        spacelike,
        sliver,
        momentum: Rule { nodes, weights },
    })
}

/// Largest momentum represented by the amplitude's grid.
pub fn grid_k_max(amp: &MomentumAmplitude) -> f64 {
    match &amp.grid.layout {
        GridLayout::Spherical(s) => s.k_max(),
        _ => amp.max_momentum(),
    }
}

pub fn crossing_direct(field: &dyn WaveField, surface: &SurfaceQuadrature, t_max: f64, n_t: usize) -> Result<f64> {
    let rule = direct_time_rule(t_max, n_t)?;
    let r = surface_flux_integrals(field, surface, &[&rule])?;
    if r[0].transit_incomplete() {
        log::warn!("flux at t_max = {t_max} exceeds {TRANSIT_THRESHOLD} of its peak; transit truncated");
    }
    Ok(r[0].crossing)
}

pub fn abs_flux_integral(field: &dyn WaveField, surface: &SurfaceQuadrature, t_max: f64, n_t: usize) -> Result<f64> {
    let rule = direct_time_rule(t_max, n_t)?;
    Ok(surface_flux_integrals(field, surface, &[&rule])?[0].abs_flux)
}

pub fn crossing_substituted(field: &dyn WaveField, surface: &SurfaceQuadrature, k_min: f64, k_max: f64) -> Result<f64> {
    let r = substituted_rules(surface.radius, field.mass(), k_min, k_max)?;
    let v = surface_flux_integrals(field, surface, &[&r.spacelike, &r.sliver, &r.momentum])?;
    Ok(v[0].crossing + v[1].crossing + v[2].crossing)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FasOptions {
    pub n_theta: usize,
    pub n_phi: usize,
    pub k_min: f64,
    /// Simpson intervals; `None` uses [`default_n_t`]
    pub n_t: Option<usize>,
}

impl FasOptions {
    pub fn for_cone(cone: &ConeSpec, k_min: f64) -> FasOptions {
        let (n_theta, n_phi) = if cone.is_full_sphere() { (32, 32) } else { (12, 16) };
        FasOptions {
            n_theta,
            n_phi,
            k_min,
            n_t: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FasRow {
    pub radius: f64,
    pub crossing_direct: f64,
    pub crossing_substituted: f64,
    pub abs_flux: f64,
    pub spacelike_part: f64,
    pub momentum_side: f64,
    pub signed_disc: f64,
    pub abs_disc: f64,
    pub tail_bound: f64,
    pub mean_angle: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub transit_incomplete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FASReport {
    pub cone: ConeSpec,
    pub rows: Vec<FasRow>,
    pub surface_points: usize,
    pub momentum_nodes: usize,
    pub k_min: f64,
}

impl FASReport {
    /// abs_disc never grows along the sweep (relative slack `rel`).
    pub fn abs_disc_non_increasing(&self, rel: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].abs_disc <= w[0].abs_disc * (1.0 + rel) + 1e-15)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FAS_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.radius,
                r.crossing_direct,
                r.crossing_substituted,
                r.abs_flux,
                r.spacelike_part,
                r.momentum_side,
                r.signed_disc,
                r.abs_disc,
                r.tail_bound
            )?;
        }
        Ok(())
    }
}

/// One detector radius: direct and substituted crossings, `|j|` integral
/// and the space-like part, all from a single set of field evaluations.
pub fn fas_row(
    field: &dyn WaveField,
    amp: &MomentumAmplitude,
    cone: &ConeSpec,
    radius: f64,
    opts: &FasOptions,
) -> Result<FasRow> {
    let m = field.mass();
    let surface = sphere_quadrature(radius, cone, opts.n_theta, opts.n_phi)?;
    let t_max = default_t_max(radius, opts.k_min, m);
    let n_t = opts.n_t.unwrap_or_else(|| default_n_t(radius, m));
    let direct = direct_time_rule(t_max, n_t)?;
    let sub = substituted_rules(radius, m, opts.k_min, grid_k_max(amp))?;
    let v = surface_flux_integrals(field, &surface, &[&direct, &sub.spacelike, &sub.sliver, &sub.momentum])?;
    let transit_incomplete = v[0].transit_incomplete();
    if transit_incomplete {
        log::warn!("R = {radius}: flux at t_max = {t_max:.1} exceeds {TRANSIT_THRESHOLD} of its peak");
    }
    let ms = amp.momentum_side(cone);
    let crossing_direct = v[0].crossing;
    Ok(FasRow {
        radius,
        crossing_direct,
        crossing_substituted: v[1].crossing + v[2].crossing + v[3].crossing,
        abs_flux: v[0].abs_flux,
        spacelike_part: v[1].crossing,
        momentum_side: ms,
        signed_disc: (crossing_direct - ms).abs(),
        abs_disc: (v[0].abs_flux - ms).abs(),
        tail_bound: amp.low_momentum_tail(cone, opts.k_min),
        mean_angle: v[0].mean_angle,
        t_max,
        n_t,
        transit_incomplete,
    })
}

pub fn fas_sweep(
    field: &dyn WaveField,
    amp: &MomentumAmplitude,
    cone: &ConeSpec,
    r_list: &[f64],
    opts: &FasOptions,
) -> Result<FASReport> {
    if r_list.is_empty() || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("R_list must be non-empty and increasing".into()));
    }
    let rows = r_list
        .iter()
        .map(|&r| fas_row(field, amp, cone, r, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FASReport {
        cone: *cone,
        rows,
        surface_points: opts.n_theta * opts.n_phi,
        momentum_nodes: amp.len(),
        k_min: opts.k_min,
    })
}

/// Minkowski product with signature `(+,-,-,-)`.
pub fn minkowski(j: &FluxVector, n0: f64, n: &Vec3) -> f64 {
    j.j0 * n0 - j.j.dot(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariantRow {
    pub lambda: f64,
    /// surface integral of `<j, n>` over the radial surface parametrised by momentum
    pub lhs: f64,
    /// the same integral computed as a time-integrated crossing at `R = lambda`
    pub crossing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariantReport {
    pub momentum_side: f64,
    pub covariant_momentum_side: f64,
    pub rows: Vec<CovariantRow>,
}

impl CovariantReport {
    pub fn rhs_difference(&self) -> f64 {
        (self.momentum_side - self.covariant_momentum_side).abs()
    }

    pub fn max_lhs_relative_difference(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.lhs - r.crossing).abs() / r.crossing.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Covariant form with `eta(x) = 1/x`: the surface `x = lambda` in spacetime
/// with 4-normal `(0, -x_hat)`, its time-like part parametrised by momentum
/// through `t = lambda E_k / k`.
pub fn covariant_check(
    field: &dyn WaveField,
    amp: &MomentumAmplitude,
    cone: &ConeSpec,
    lambda_list: &[f64],
    opts: &FasOptions,
) -> Result<CovariantReport> {
    let m = field.mass();
    let k_max = grid_k_max(amp);
    let mut rows = Vec::with_capacity(lambda_list.len());
    for &lambda in lambda_list {
        let surface = sphere_quadrature(lambda, cone, opts.n_theta, opts.n_phi)?;
        let sub = substituted_rules(lambda, m, opts.k_min, k_max)?;
        let all = Rule::concat(&[sub.spacelike.clone(), sub.sliver.clone(), sub.momentum.clone()]);
        // 4-vector route: evaluate, contract with the Minkowski normal
        let per_point: Vec<f64> = surface
            .points
            .par_iter()
            .zip(&surface.normals)
            .zip(&surface.weights)
            .map(|((x, n), w)| {
                let psi = field.psi_series(x, &all.nodes)?;
                let mut s = NeumaierSum::default();
                for (p, wt) in psi.iter().zip(&all.weights) {
                    s.add(wt * minkowski(&flux(p), 0.0, &(-n)));
                }
                Ok(w * s.value())
            })
            .collect::<Result<_>>()?;
        let lhs = crate::quadrature::compensated_sum(per_point);
        let crossing = crossing_substituted(field, &surface, opts.k_min, k_max)?;
        rows.push(CovariantRow { lambda, lhs, crossing });
    }
    Ok(CovariantReport {
        momentum_side: amp.momentum_side(cone),
        covariant_momentum_side: amp.covariant_momentum_side(cone),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::DirectSum;
    use crate::grid::MomentumGrid;
    use num_complex::Complex64;

    #[test]
    fn surface_weights_sum_to_cap_area() {
        let r = 7.0;
        for theta in [0.3, std::f64::consts::FRAC_PI_2, std::f64::consts::PI] {
            let cone = ConeSpec::new(Vec3::new(1.0, 2.0, -0.5), theta).unwrap();
            let q = sphere_quadrature(r, &cone, 8, 9).unwrap();
            let want = 2.0 * std::f64::consts::PI * r * r * (1.0 - theta.cos());
            assert!((q.area() - want).abs() < 1e-10 * want);
            assert!(q.points.iter().all(|p| (p.norm() - r).abs() < 1e-12 * r));
            assert!(q.points.iter().all(|p| cone.contains(p)));
        }
        assert!(sphere_quadrature(1.0, &ConeSpec::full_sphere(), 3, 8).is_err());
    }

    #[test]
    fn substituted_rules_cover_the_same_interval() {
        let r = substituted_rules(30.0, 1.0, 0.2, 5.0).unwrap();
        let t_max = default_t_max(30.0, 0.2, 1.0);
        let len = r.spacelike.weights.iter().sum::<f64>() + r.sliver.weights.iter().sum::<f64>() + r.momentum.weights.iter().sum::<f64>();
        assert!((len - t_max).abs() < 1e-10 * t_max);
        // t^2 integrates exactly under both parametrisations
        let f = |t: f64| t * t;
        let sub = r.spacelike.integrate(f) + r.sliver.integrate(f) + r.momentum.integrate(f);
        assert!((sub - t_max.powi(3) / 3.0).abs() < 1e-9 * t_max.powi(3));
    }

    #[test]
    fn zero_state_gives_zero_crossings() {
        let grid = MomentumGrid::cartesian(Vec3::zeros(), 2.0, 6).unwrap();
        let amp = MomentumAmplitude::zeros(grid, 1.0).unwrap();
        let field = DirectSum::new(&amp);
        let cone = ConeSpec::new(Vec3::x(), 0.3).unwrap();
        let q = sphere_quadrature(1.0, &cone, 4, 4).unwrap();
        assert_eq!(crossing_direct(&field, &q, 5.0, 10).unwrap(), 0.0);
        assert_eq!(abs_flux_integral(&field, &q, 5.0, 10).unwrap(), 0.0);
        assert_eq!(crossing_substituted(&field, &q, 0.5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn plane_wave_crossing_is_flux_times_area_times_time() {
        // one node: |psi|^2 and j constant in space and time
        let k = Vec3::new(0.7, 0.0, 0.0);
        let grid = MomentumGrid::explicit(vec![k], vec![1.0]).unwrap();
        let amp = MomentumAmplitude::from_fn(grid, 1.0, |_| (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))).unwrap();
        let field = DirectSum::new(&amp);
        let cone = ConeSpec::new(Vec3::x(), 0.4).unwrap();
        let q = sphere_quadrature(2.0, &cone, 10, 12).unwrap();
        let j = flux(&field.psi(&Vec3::zeros(), 0.0).unwrap());
        let mut area_dot = 0.0;
        for (n, w) in q.normals.iter().zip(&q.weights) {
            area_dot += w * j.j.dot(n);
        }
        let got = crossing_direct(&field, &q, 3.0, 10).unwrap();
        assert!((got - 3.0 * area_dot).abs() < 1e-12 * got.abs());
        assert!(abs_flux_integral(&field, &q, 3.0, 10).unwrap() >= got);
    }

    #[test]
    fn minkowski_normal_reduces_to_radial_flux() {
        let j = FluxVector {
            j0: 2.0,
            j: Vec3::new(0.3, -0.2, 0.5),
        };
        let n = Vec3::new(0.0, 0.6, 0.8);
        assert!((minkowski(&j, 0.0, &(-n)) - j.j.dot(&n)).abs() < 1e-15);
    }
}
