//! Lippmann-Schwinger generalized eigenfunctions for static potentials.
//!
//! With `H0 = -i alpha.grad + beta m` the outgoing kernel is
//! `G_k = (E_k + H0) g_k`, `g_k(x) = -e^{ik|x|} / (4 pi |x|)`, which solves
//! `(E_k - H0) G_k = delta`. Eigenfunctions of `H0 + A` satisfy
//! `phi_tilde = phi + int G_k(x - x') A(x') phi_tilde(x') d^3x'`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft3::Fft3;
use crate::spinor::{apply_alpha, apply_alpha_dot, apply_beta, dirac_matrices, energy, positive_spinors, Mat4, Spinor4, Vec3};

type ScalarFn = Arc<dyn Fn(&Vec3) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;

/// Relative size below which the potential is treated as zero when
/// collecting its support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

#[derive(Clone)]
enum Profile {
    Zero,
    Gaussian { width: f64 },
    Custom { scalar: ScalarFn, vector: Option<VectorFn> },
}

/// `A(x) = g (A0(x) + A_vec(x).alpha)`.
#[derive(Clone)]
pub struct Potential {
    coupling: f64,
    profile: Profile,
    support_radius: f64,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Potential({})", self.label())
    }
}

impl Potential {
    pub fn zero() -> Potential {
        Potential {
            coupling: 0.0,
            profile: Profile::Zero,
            support_radius: 0.0,
        }
    }

    /// `g exp(-|x|^2 / width^2)`
    pub fn gaussian(coupling: f64, width: f64) -> Result<Potential> {
        if !(width > 0.0) || !coupling.is_finite() {
            return Err(Error::InvalidArgument(format!("gaussian potential needs width > 0 (got {width})")));
        }
        Ok(Potential {
            coupling,
            profile: Profile::Gaussian { width },
            support_radius: width * (1.0 / SUPPORT_THRESHOLD).ln().sqrt(),
        })
    }

    /// Arbitrary profile; `support_radius` bounds the region where
    /// `|A| > SUPPORT_THRESHOLD * |g| sup|A0|`.
    pub fn custom<F>(coupling: f64, scalar: F, vector: Option<VectorFn>, support_radius: f64) -> Potential
    where
        F: Fn(&Vec3) -> f64 + Send + Sync + 'static,
    {
        Potential {
            coupling,
            profile: Profile::Custom {
                scalar: Arc::new(scalar),
                vector,
            },
            support_radius,
        }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn with_coupling(&self, coupling: f64) -> Potential {
        Potential {
            coupling,
            ..self.clone()
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_zero(&self) -> bool {
        self.coupling == 0.0 || matches!(self.profile, Profile::Zero)
    }

    pub fn has_vector_part(&self) -> bool {
        matches!(self.profile, Profile::Custom { vector: Some(_), .. })
    }

    pub fn label(&self) -> String {
        match &self.profile {
            Profile::Zero => "zero".into(),
            Profile::Gaussian { width } => format!("gaussian g={} width={}", self.coupling, width),
            Profile::Custom { .. } => format!("custom g={}", self.coupling),
        }
    }

    pub fn scalar(&self, x: &Vec3) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::Gaussian { width } => self.coupling * (-x.norm_squared() / (width * width)).exp(),
            Profile::Custom { scalar, .. } => self.coupling * scalar(x),
        }
    }

    pub fn vector(&self, x: &Vec3) -> Option<Vec3> {
        match &self.profile {
            Profile::Custom { vector: Some(v), .. } => Some(v(x) * self.coupling),
            _ => None,
        }
    }

    /// `A(x) psi`
    pub fn apply(&self, x: &Vec3, psi: &Spinor4) -> Spinor4 {
        let mut out = *psi * self.scalar(x);
        if let Some(v) = self.vector(x) {
            out += apply_alpha_dot(&v, psi);
        }
        out
    }

    /// Fraction of the L1 mass outside `[-L, L]^3`, when known in closed form.
    pub fn outside_fraction(&self, half_width: f64) -> Option<f64> {
        match &self.profile {
            Profile::Zero => Some(0.0),
            Profile::Gaussian { width } => {
                let inside = erf(half_width / width);
                Some(1.0 - inside * inside * inside)
            }
            Profile::Custom { .. } => None,
        }
    }

    /// `sup |A(x)| <x>^6` over `|x| >= r0`, sampled along the coordinate
    /// axes and diagonals out to `r0 + 50`.
    pub fn decay_constant(&self, r0: f64) -> f64 {
        let dirs = [
            Vec3::x(),
            Vec3::y(),
            Vec3::z(),
            -Vec3::x(),
            Vec3::new(1.0, 1.0, 1.0).normalize(),
            Vec3::new(-1.0, 1.0, -1.0).normalize(),
        ];
        let mut sup: f64 = 0.0;
        for d in dirs {
            for i in 0..=2000 {
                let r = r0 + 50.0 * i as f64 / 2000.0;
                let x = d * r;
                let mut a = self.scalar(&x).abs();
                if let Some(v) = self.vector(&x) {
                    a += v.norm();
                }
                sup = sup.max(a * (1.0 + r * r).powi(3));
            }
        }
        sup
    }
}

fn erf(x: f64) -> f64 {
    1.0 - crate::amplitude::erfc(x)
}

/// Cube `[-L, L]^3` with `n` nodes per axis, spacing `2L/(n-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    pub half_width: f64,
    pub n: usize,
}

impl Default for SpatialGrid {
    fn default() -> Self {
        SpatialGrid { half_width: 8.0, n: 32 }
    }
}

impl SpatialGrid {
    pub fn new(half_width: f64, n: usize) -> Result<SpatialGrid> {
        if !(half_width > 0.0) || n < 4 {
            return Err(Error::InvalidArgument(format!("spatial grid needs L > 0, n >= 4 (got {half_width}, {n})")));
        }
        Ok(SpatialGrid { half_width, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Cell volume `h^3`, the weight of every node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        [i / (self.n * self.n), (i / self.n) % self.n, i % self.n]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.n + c[1]) * self.n + c[2]
    }

    pub fn node(&self, i: usize) -> Vec3 {
        let h = self.spacing();
        let c = self.coords(i);
        Vec3::new(
            -self.half_width + h * c[0] as f64,
            -self.half_width + h * c[1] as f64,
            -self.half_width + h * c[2] as f64,
        )
    }

    /// Momentum spacing `2 pi / (n h)` of the discrete Fourier lattice.
    pub fn lattice_spacing(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.spacing())
    }

    /// Nodes at least `layers` cells from every face.
    pub fn interior(&self, layers: usize) -> Vec<usize> {
        let lo = layers;
        let hi = self.n.saturating_sub(layers);
        (0..self.len())
            .filter(|&i| self.coords(i).iter().all(|&c| c >= lo && c < hi))
            .collect()
    }
}

/// Scalar factors of the kernel, `G = S (E + beta m) + sum_l V_l alpha_l`.
#[inline]
pub fn kernel_parts(k: f64, x: &Vec3) -> (Complex64, [Complex64; 3]) {
    let r = x.norm();
    let ph = Complex64::cis(k * r) * (-1.0 / (4.0 * PI));
    let s = ph / r;
    let radial = ph * Complex64::new(k / r, 1.0 / (r * r));
    let xh = x / r;
    (s, [radial * xh.x, radial * xh.y, radial * xh.z])
}

/// `G q` from precomputed parts.
#[inline]
pub fn apply_kernel_parts(s: Complex64, v: &[Complex64; 3], e: f64, m: f64, q: &Spinor4) -> Spinor4 {
    let mut out = (*q * e + apply_beta(q) * m) * s;
    for (l, vl) in v.iter().enumerate() {
        out += apply_alpha(l, q) * *vl;
    }
    out
}

/// Outgoing Dirac Green kernel `G_k(x)` as a 4x4 matrix.
pub fn green_kernel(k: f64, x: &Vec3, m: f64) -> Result<Mat4> {
    if x.norm() == 0.0 {
        return Err(Error::SingularOrigin);
    }
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("kernel needs k >= 0, got {k}")));
    }
    let d = dirac_matrices();
    let e = energy(k * k, m);
    let (s, v) = kernel_parts(k, x);
    let mut g = Mat4::identity() * (s * e) + d.beta * (s * m);
    for l in 0..3 {
        g += d.alpha[l] * v[l];
    }
    Ok(g)
}

/// Independent construction `(E_k + H0) g_k` with `grad g_k` from the chain
/// rule, used to check [`green_kernel`].
pub fn green_kernel_from_helmholtz(k: f64, x: &Vec3, m: f64) -> Result<Mat4> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::SingularOrigin);
    }
    let d = dirac_matrices();
    let e = energy(k * k, m);
    let g = -Complex64::cis(k * r) / (4.0 * PI * r);
    let mut out = Mat4::identity() * (g * e) + d.beta * (g * m);
    let minus_i = Complex64::new(0.0, -1.0);
    for l in 0..3 {
        let dg = g * Complex64::new(-1.0 / r, k) * (x[l] / r);
        out += d.alpha[l] * (minus_i * dg);
    }
    Ok(out)
}

/// Largest entry of `(E_k - H0) G_k(x)` with central differences of step `h`.
pub fn kernel_fd_residual(k: f64, x: &Vec3, m: f64, h: f64) -> Result<f64> {
    let d = dirac_matrices();
    let e = energy(k * k, m);
    let g0 = green_kernel(k, x, m)?;
    let mut res = g0 * Complex64::from(e) - d.beta * g0 * Complex64::from(m);
    let i = Complex64::new(0.0, 1.0);
    for l in 0..3 {
        let mut dx = Vec3::zeros();
        dx[l] = h;
        let gp = green_kernel(k, &(x + dx), m)?;
        let gm = green_kernel(k, &(x - dx), m)?;
        let deriv = (gp - gm) * Complex64::from(1.0 / (2.0 * h));
        res += d.alpha[l] * deriv * i;
    }
    Ok(res.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `int_0^a r e^{ikr} dr` by its power series (|ka| is O(1) here).
fn self_cell_integral(k: f64, a: f64) -> Complex64 {
    let ika = Complex64::new(0.0, k * a);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..200 {
        let t = term / (n as f64 + 2.0);
        sum += t;
        if t.norm() < 1e-18 * sum.norm() {
            break;
        }
        term = term * ika / (n as f64 + 1.0);
    }
    sum * a * a
}

/// The discrete operator `(T f)(x) = sum_x' h^3 G_k(x - x') A(x') f(x')`
/// evaluated by zero-padded FFT convolution. The singular self-cell uses
/// the integral of the scalar kernel over a ball of the cell's volume; the
/// odd `alpha` part integrates to zero there.
pub struct LseOperator {
    grid: SpatialGrid,
    k: f64,
    m: f64,
    e: f64,
    fft: Fft3,
    /// transforms of `h^3 S` and `h^3 V_l`
    kernel_hat: [Vec<Complex64>; 4],
    potential: Potential,
    nodes: Vec<Vec3>,
}

impl LseOperator {
    pub fn new(potential: &Potential, grid: SpatialGrid, k: f64, m: f64) -> Result<LseOperator> {
        if !(k >= 0.0) || !(m > 0.0) {
            return Err(Error::InvalidArgument(format!("LSE operator needs k >= 0, m > 0 (got {k}, {m})")));
        }
        if let Some(out) = potential.outside_fraction(grid.half_width) {
            if out > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "potential mass outside the box is {out:.2e} of its L1 norm (limit 1e-8)"
                )));
            }
        }
        let n = grid.n;
        let np = 2 * n;
        let h = grid.spacing();
        let h3 = grid.cell_volume();
        let fft = Fft3::new(np);
        let a = (3.0 * h3 / (4.0 * PI)).cbrt();
        let self_s = -self_cell_integral(k, a);
        let mut kernel: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); np * np * np]);
        let shift = |j: usize| if j < n { j as f64 } else { j as f64 - np as f64 };
        let samples: Vec<(Complex64, [Complex64; 3])> = (0..np * np * np)
            .into_par_iter()
            .map(|idx| {
                let (a1, b1, c1) = (idx / (np * np), (idx / np) % np, idx % np);
                if a1 == n || b1 == n || c1 == n {
                    // displacement n*h never occurs between box nodes
                    return (Complex64::new(0.0, 0.0), [Complex64::new(0.0, 0.0); 3]);
                }
                let d = Vec3::new(shift(a1) * h, shift(b1) * h, shift(c1) * h);
                if idx == 0 {
                    return (self_s, [Complex64::new(0.0, 0.0); 3]);
                }
                let (s, v) = kernel_parts(k, &d);
                (s * h3, [v[0] * h3, v[1] * h3, v[2] * h3])
            })
            .collect();
        for (idx, (s, v)) in samples.into_iter().enumerate() {
            kernel[0][idx] = s;
            kernel[1][idx] = v[0];
            kernel[2][idx] = v[1];
            kernel[3][idx] = v[2];
        }
        kernel.par_iter_mut().for_each(|arr| fft.forward(arr));
        Ok(LseOperator {
            grid,
            k,
            m,
            e: energy(k * k, m),
            fft,
            kernel_hat: kernel,
            potential: potential.clone(),
            nodes: (0..grid.len()).map(|i| grid.node(i)).collect(),
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// `T f`
    pub fn apply(&self, f: &[Spinor4]) -> Vec<Spinor4> {
        let n = self.grid.n;
        let np = 2 * n;
        assert_eq!(f.len(), self.grid.len());
        let mut comp: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); np * np * np]);
        for (i, (v, x)) in f.iter().zip(&self.nodes).enumerate() {
            let c = self.grid.coords(i);
            let p = (c[0] * np + c[1]) * np + c[2];
            let av = self.potential.apply(x, v);
            for (arr, z) in comp.iter_mut().zip(av.0) {
                arr[p] = z;
            }
        }
        comp.par_iter_mut().for_each(|arr| self.fft.forward(arr));
        let (e, m) = (self.e, self.m);
        for q in 0..np * np * np {
            let fq = Spinor4([comp[0][q], comp[1][q], comp[2][q], comp[3][q]]);
            let v = [self.kernel_hat[1][q], self.kernel_hat[2][q], self.kernel_hat[3][q]];
            let r = apply_kernel_parts(self.kernel_hat[0][q], &v, e, m, &fq);
            for (arr, z) in comp.iter_mut().zip(r.0) {
                arr[q] = z;
            }
        }
        comp.par_iter_mut().for_each(|arr| self.fft.inverse(arr));
        let scale = 1.0 / (np * np * np) as f64;
        (0..self.grid.len())
            .map(|i| {
                let c = self.grid.coords(i);
                let p = (c[0] * np + c[1]) * np + c[2];
                Spinor4([comp[0][p], comp[1][p], comp[2][p], comp[3][p]]) * scale
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    /// sup-node change per iteration
    pub deltas: Vec<f64>,
    pub converged: bool,
}

impl ConvergenceRecord {
    pub fn last_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(0.0)
    }

    pub fn monotone(&self) -> bool {
        self.deltas.windows(2).all(|w| w[1] <= w[0])
    }
}

fn sup_norm(v: &[Spinor4]) -> f64 {
    v.iter().map(|s| s.norm()).fold(0.0, f64::max)
}

/// Fixed-point iteration `zeta <- T(phi + zeta)` from `zeta = 0`, stopping
/// once the sup-node change drops below `tol * sup|phi|`. Hitting
/// `max_iter` is reported in the record, not as an error.
pub fn born_iterate(op: &LseOperator, phi: &[Spinor4], tol: f64, max_iter: usize) -> Result<(Vec<Spinor4>, ConvergenceRecord)> {
    let scale = sup_norm(phi).max(f64::MIN_POSITIVE);
    let mut zeta = vec![Spinor4::ZERO; phi.len()];
    let mut rec = ConvergenceRecord {
        iterations: 0,
        deltas: Vec::new(),
        converged: false,
    };
    let mut rising = 0;
    while rec.iterations < max_iter {
        let src: Vec<Spinor4> = phi.iter().zip(&zeta).map(|(a, b)| *a + *b).collect();
        let next = op.apply(&src);
        let delta = next.iter().zip(&zeta).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        zeta = next;
        rec.iterations += 1;
        if let Some(&prev) = rec.deltas.last() {
            let ratio = delta / prev;
            if ratio >= 1.0 {
                rising += 1;
                if rising >= 3 {
                    return Err(Error::NoContraction {
                        iteration: rec.iterations,
                        ratio,
                    });
                }
            } else {
                rising = 0;
            }
        }
        rec.deltas.push(delta);
        if !delta.is_finite() {
            return Err(Error::NoContraction {
                iteration: rec.iterations,
                ratio: f64::INFINITY,
            });
        }
        if delta <= tol * scale {
            rec.converged = true;
            break;
        }
    }
    Ok((zeta, rec))
}

/// Plane wave `e^{i k.x} s^s_k` on the grid.
pub fn plane_wave(grid: &SpatialGrid, k: &Vec3, s: usize, m: f64) -> Vec<Spinor4> {
    let sp = *positive_spinors(k, m).get(s);
    (0..grid.len()).map(|i| sp * Complex64::cis(k.dot(&grid.node(i)))).collect()
}

/// A generalized eigenfunction `phi_tilde = phi + zeta` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenfunctionField {
    pub k: Vec3,
    pub s: usize,
    pub m: f64,
    pub grid: SpatialGrid,
    pub zeta: Vec<Spinor4>,
    pub record: ConvergenceRecord,
}

impl EigenfunctionField {
    pub fn energy(&self) -> f64 {
        energy(self.k.norm_squared(), self.m)
    }

    pub fn spinor(&self) -> Spinor4 {
        *positive_spinors(&self.k, self.m).get(self.s)
    }

    pub fn phi(&self, i: usize) -> Spinor4 {
        self.spinor() * Complex64::cis(self.k.dot(&self.grid.node(i)))
    }

    pub fn phi_tilde(&self, i: usize) -> Spinor4 {
        self.phi(i) + self.zeta[i]
    }

    pub fn phi_tilde_all(&self) -> Vec<Spinor4> {
        let sp = self.spinor();
        (0..self.grid.len())
            .map(|i| sp * Complex64::cis(self.k.dot(&self.grid.node(i))) + self.zeta[i])
            .collect()
    }
}

fn check_spin(s: usize) -> Result<()> {
    if s == 1 || s == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("spin channel must be 1 or 2, got {s}")))
    }
}

/// Solves for `zeta_k^s`; fails when `tol` is not reached in `max_iter`.
pub fn born_solve(
    potential: &Potential,
    k: &Vec3,
    s: usize,
    grid: SpatialGrid,
    m: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EigenfunctionField> {
    let op = LseOperator::new(potential, grid, k.norm(), m)?;
    solve_with(&op, k, s, tol, max_iter, true)
}

/// Same as [`born_solve`] with a prepared operator; `strict = false`
/// returns unconverged fields.
pub fn solve_with(op: &LseOperator, k: &Vec3, s: usize, tol: f64, max_iter: usize, strict: bool) -> Result<EigenfunctionField> {
    check_spin(s)?;
    if (op.k() - k.norm()).abs() > 1e-12 * k.norm().max(1.0) {
        return Err(Error::InvalidArgument("operator built for a different |k|".into()));
    }
    let grid = *op.grid();
    let m = op.m;
    let phi = plane_wave(&grid, k, s, m);
    let (zeta, record) = born_iterate(op, &phi, tol, max_iter)?;
    if strict && !record.converged {
        return Err(Error::TolNotReached {
            iterations: record.iterations,
            delta: record.last_delta(),
            tol,
        });
    }
    Ok(EigenfunctionField {
        k: *k,
        s,
        m,
        grid,
        zeta,
        record,
    })
}

/// Max over nodes at least 3 cells inside of
/// `||(-i alpha.grad + A + beta m - E) phi_tilde||` with central differences.
pub fn eigen_residual(field: &EigenfunctionField, potential: &Potential) -> f64 {
    let vals = field.phi_tilde_all();
    dirac_residual(&field.grid, &vals, potential, field.m, field.energy())
}

/// The same residual for the bare plane wave with no potential: the
/// discretisation floor of the difference stencil.
pub fn free_residual_floor(grid: &SpatialGrid, k: &Vec3, s: usize, m: f64) -> f64 {
    let vals = plane_wave(grid, k, s, m);
    dirac_residual(grid, &vals, &Potential::zero(), m, energy(k.norm_squared(), m))
}

fn dirac_residual(grid: &SpatialGrid, vals: &[Spinor4], potential: &Potential, m: f64, e: f64) -> f64 {
    let h = grid.spacing();
    let minus_i = Complex64::new(0.0, -1.0);
    grid.interior(3)
        .par_iter()
        .map(|&i| {
            let c = grid.coords(i);
            let x = grid.node(i);
            let mut out = potential.apply(&x, &vals[i]) + apply_beta(&vals[i]) * m - vals[i] * e;
            for l in 0..3 {
                let mut cp = c;
                let mut cm = c;
                cp[l] += 1;
                cm[l] -= 1;
                let d = (vals[grid.index(cp)] - vals[grid.index(cm)]) * (1.0 / (2.0 * h));
                out += apply_alpha(l, &d) * minus_i;
            }
            out.norm()
        })
        .reduce(|| 0.0, f64::max)
}

/// `max |x| ||zeta||` in radial bins of width `L/8` out to `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayCertificate {
    /// `(r_lo, r_hi, max |x| ||zeta||)`
    pub bins: Vec<(f64, f64, f64)>,
    /// over bins centred in `[L/4, 3L/4]`
    pub mid_max: f64,
    /// over bins centred beyond `3L/4`
    pub outer_max: f64,
    /// bin holding the overall maximum lies in the inner half of the box
    pub sup_in_inner_half: bool,
}

impl DecayCertificate {
    /// `outer <= 1.1 mid`
    pub fn passes(&self) -> bool {
        self.outer_max <= 1.1 * self.mid_max
    }
}

pub fn zeta_decay_certificate(field: &EigenfunctionField) -> DecayCertificate {
    let l = field.grid.half_width;
    let nb = 8;
    let w = l / nb as f64;
    let mut maxima = vec![0.0f64; nb];
    for (i, z) in field.zeta.iter().enumerate() {
        let r = field.grid.node(i).norm();
        if r < l {
            let b = ((r / w) as usize).min(nb - 1);
            maxima[b] = maxima[b].max(r * z.norm());
        }
    }
    let bins: Vec<(f64, f64, f64)> = maxima.iter().enumerate().map(|(b, m)| (b as f64 * w, (b + 1) as f64 * w, *m)).collect();
    let centre = |b: &(f64, f64, f64)| 0.5 * (b.0 + b.1);
    let mid_max = bins.iter().filter(|b| centre(b) >= 0.25 * l && centre(b) <= 0.75 * l).map(|b| b.2).fold(0.0, f64::max);
    let outer_max = bins.iter().filter(|b| centre(b) > 0.75 * l).map(|b| b.2).fold(0.0, f64::max);
    let top = bins.iter().cloned().fold((0.0, 0.0, -1.0), |a, b| if b.2 > a.2 { b } else { a });
    DecayCertificate {
        sup_in_inner_half: top.1 <= 0.5 * l + 1e-12,
        bins,
        mid_max,
        outer_max,
    }
}

/// Sampled difference quotients `||phi_tilde(x + d) - phi_tilde(x)|| / |d|`.
#[derive(Clone, Debug, PartialEq)]
pub struct HolderReport {
    /// `(|d|, max quotient)` for `d = j h e_l`, `j = 1..=4`
    pub rows: Vec<(f64, f64)>,
    pub max_quotient: f64,
    /// Lipschitz constant `|k|` of the unit plane wave
    pub free_lipschitz: f64,
}

impl HolderReport {
    /// Quotients are finite and stay within twice the larger of the
    /// largest-offset quotient and the free Lipschitz constant.
    pub fn bounded(&self) -> bool {
        let largest = self.rows.last().map(|r| r.1).unwrap_or(0.0);
        let cap = 2.0 * largest.max(self.free_lipschitz) + 1e-300;
        self.max_quotient.is_finite() && self.rows.iter().all(|r| r.1 <= cap)
    }
}

pub fn holder_check(field: &EigenfunctionField, samples: usize, seed: u64) -> HolderReport {
    let g = field.grid;
    let n = g.n;
    let h = g.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<([usize; 3], usize)> = (0..samples)
        .map(|_| {
            let c = [rng.random_range(0..n - 4), rng.random_range(0..n - 4), rng.random_range(0..n - 4)];
            (c, rng.random_range(0..3))
        })
        .collect();
    let rows: Vec<(f64, f64)> = (1..=4)
        .map(|j| {
            let q = base
                .iter()
                .map(|(c, l)| {
                    let mut d = *c;
                    d[*l] += j;
                    (field.phi_tilde(g.index(d)) - field.phi_tilde(g.index(*c))).norm() / (j as f64 * h)
                })
                .fold(0.0, f64::max);
            (j as f64 * h, q)
        })
        .collect();
    HolderReport {
        max_quotient: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        rows,
        free_lipschitz: field.k.norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> SpatialGrid {
        SpatialGrid::new(6.0, 16).unwrap()
    }

    #[test]
    fn kernel_is_singular_at_origin() {
        assert!(matches!(green_kernel(1.0, &Vec3::zeros(), 1.0), Err(Error::SingularOrigin)));
    }

    #[test]
    fn kernel_matches_helmholtz_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let k = rng.random_range(0.0..3.0);
            let a = green_kernel(k, &x, 1.0).unwrap();
            let b = green_kernel_from_helmholtz(k, &x, 1.0).unwrap();
            assert!((a - b).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn kernel_parity() {
        let x = Vec3::new(0.7, -1.1, 0.4);
        let (s1, v1) = kernel_parts(1.3, &x);
        let (s2, v2) = kernel_parts(1.3, &(-x));
        assert!((s1 - s2).norm() < 1e-15);
        for l in 0..3 {
            assert!((v1[l] + v2[l]).norm() < 1e-15);
        }
    }

    #[test]
    fn finite_difference_residual_is_second_order() {
        let x = Vec3::new(2.0, 1.5, -1.0);
        let r1 = kernel_fd_residual(1.0, &x, 1.0, 0.02).unwrap();
        let r2 = kernel_fd_residual(1.0, &x, 1.0, 0.01).unwrap();
        let ratio = r1 / r2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn self_cell_series_matches_closed_form() {
        let (k, a) = (1.7, 0.4);
        let ik = Complex64::new(0.0, k);
        let closed = Complex64::cis(k * a) * (a / ik + 1.0 / (k * k)) - 1.0 / (k * k);
        assert!((self_cell_integral(k, a) - closed).norm() < 1e-14);
        assert!((self_cell_integral(0.0, a).re - a * a / 2.0).abs() < 1e-16);
    }

    #[test]
    fn zero_potential_converges_immediately() {
        let f = born_solve(&Potential::zero(), &Vec3::new(1.0, 0.0, 0.0), 1, small_grid(), 1.0, 1e-12, 10).unwrap();
        assert_eq!(f.record.iterations, 1);
        assert!(f.zeta.iter().all(|z| *z == Spinor4::ZERO));
        let cert = zeta_decay_certificate(&f);
        assert!(cert.bins.iter().all(|b| b.2 == 0.0));
    }

    #[test]
    fn operator_matches_direct_sum() {
        let grid = SpatialGrid::new(3.0, 8).unwrap();
        let pot = Potential::gaussian(0.3, 1.0).unwrap();
        let op = LseOperator::new(&Potential::gaussian(0.3, 1.0).unwrap(), grid, 1.2, 1.0);
        // box too small for the mass criterion
        assert!(op.is_err());
        let grid = SpatialGrid::new(6.0, 10).unwrap();
        let op = LseOperator::new(&pot, grid, 1.2, 1.0).unwrap();
        let f: Vec<Spinor4> = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                Spinor4([
                    Complex64::new(x.x.sin(), 0.1),
                    Complex64::new(0.0, x.y),
                    Complex64::new(0.3, 0.0),
                    Complex64::new(x.z, -x.x),
                ])
            })
            .collect();
        let fast = op.apply(&f);
        let h3 = grid.cell_volume();
        let e = energy(1.44, 1.0);
        let a = (3.0 * h3 / (4.0 * PI)).cbrt();
        for i in [0, 37, 555, grid.len() - 1] {
            let xi = grid.node(i);
            let mut acc = Spinor4::ZERO;
            for j in 0..grid.len() {
                let xj = grid.node(j);
                let q = pot.apply(&xj, &f[j]);
                if i == j {
                    acc += (q * e + apply_beta(&q)) * (-self_cell_integral(1.2, a));
                } else {
                    acc += Spinor4::apply(&green_kernel(1.2, &(xi - xj), 1.0).unwrap(), &q) * h3;
                }
            }
            assert!((acc - fast[i]).norm() < 1e-12 * acc.norm().max(1e-6), "node {i}");
        }
    }

    #[test]
    fn strong_coupling_does_not_contract() {
        let pot = Potential::gaussian(10.0, 1.0).unwrap();
        let r = born_solve(&pot, &Vec3::new(1.0, 0.0, 0.0), 1, small_grid(), 1.0, 1e-12, 50);
        assert!(matches!(r, Err(Error::NoContraction { .. })), "{r:?}");
    }

    #[test]
    fn weak_coupling_fixed_point() {
        let pot = Potential::gaussian(0.05, 1.0).unwrap();
        let grid = small_grid();
        let k = Vec3::new(1.0, 0.0, 0.0);
        let op = LseOperator::new(&pot, grid, 1.0, 1.0).unwrap();
        let f = solve_with(&op, &k, 2, 1e-12, 60, true).unwrap();
        assert!(f.record.monotone());
        // re-applying the operator reproduces zeta
        let again = op.apply(&f.phi_tilde_all());
        let d = again.iter().zip(&f.zeta).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-11);
        let floor = free_residual_floor(&grid, &k, 2, 1.0);
        assert!(eigen_residual(&f, &pot) < 10.0 * floor);
        assert!(holder_check(&f, 200, 1).bounded());
    }
}
