//! Far-field evaluation of scattering states in a static potential.
//!
//! The state `psi = sum_s int (2 pi)^{-3/2} e^{-iEt} phi_tilde_k^s psi_hat_s d^3k`
//! splits into the free wave and
//!
//! `sum_r c_r e^{-i E_r t} sum_x' h^3 G_{k_r}(x - x') A(x') (W_r + Z_r)(x')`,
//!
//! where `W_r = int dOmega e^{ik.x} psi_hat` is the shell value of the free
//! expansion and `Z_r` its angular superposition of corrections. Because
//! `G_k` depends on `|k|` only, `Z_r` solves one Lippmann-Schwinger equation
//! per shell with source `W_r`; it is solved at Chebyshev radii and
//! interpolated in between. The scattered wave needs `W + Z` only where the
//! potential is non-negligible, so no extrapolation of `zeta` is involved.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::amplitude::MomentumAmplitude;

use crate::error::{Error, Result};
use crate::lse::{apply_kernel_parts, kernel_parts, born_iterate, ConvergenceRecord, LseOperator, Potential, SpatialGrid};
use crate::propagator::WaveField;
use crate::quadrature::{barycentric_coefficients, chebyshev_points};
use crate::shell::ShellExpansion;
use crate::spinor::{apply_alpha_dot, apply_beta, energy, positive_spinors, Spinor4, Vec3};

pub struct ScatterTable {
    potential: Potential,
    grid: SpatialGrid,
    m: f64,
    support_idx: Vec<usize>,
    support: Vec<Vec3>,
    radii: Vec<f64>,
    bary: Vec<f64>,
    /// `Z_r` on the support, per Chebyshev radius
    z: Vec<Vec<Spinor4>>,
    pub records: Vec<ConvergenceRecord>,
}

impl ScatterTable {
    pub fn new(
        shell: &ShellExpansion,
        potential: &Potential,
        grid: SpatialGrid,
        n_radii: usize,
        tol: f64,
        max_iter: usize,
    ) -> Result<ScatterTable> {
        if n_radii < 2 {
            return Err(Error::InvalidArgument("need at least two interpolation radii".into()));
        }
        let m = shell.mass();
        let cut = potential.support_radius();
        let support_idx: Vec<usize> = if potential.is_zero() {
            Vec::new()
        } else {
            (0..grid.len()).filter(|&i| grid.node(i).norm() <= cut).collect()
        };
        let support: Vec<Vec3> = support_idx.iter().map(|&i| grid.node(i)).collect();
        let radii = chebyshev_points(0.0, shell.k_max(), n_radii);
        let bary: Vec<f64> = (0..n_radii)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n_radii - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut z = Vec::with_capacity(n_radii);
        let mut records = Vec::with_capacity(n_radii);
        for &r in &radii {
            if support.is_empty() {
                z.push(Vec::new());
                records.push(ConvergenceRecord {
                    iterations: 0,
                    deltas: Vec::new(),
                    converged: true,
                });
                continue;
            }
            let w = shell.shell_values_for_points(&support, r)?;
            let mut source = vec![Spinor4::ZERO; grid.len()];
            for (&i, v) in support_idx.iter().zip(&w) {
                source[i] = *v;
            }
            let op = LseOperator::new(potential, grid, r, m)?;
            let (zeta, rec) = born_iterate(&op, &source, tol, max_iter)?;
            if !rec.converged {
                return Err(Error::TolNotReached {
                    iterations: rec.iterations,
                    delta: rec.last_delta(),
                    tol,
                });
            }
            z.push(support_idx.iter().map(|&i| zeta[i]).collect());
            records.push(rec);
        }
        Ok(ScatterTable {
            potential: potential.clone(),
            grid,
            m,
            support_idx,
            support,
            radii,
            bary,
            z,
            records,
        })
    }

    pub fn support(&self) -> &[Vec3] {
        &self.support
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_idx
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// `Z_r` on the support at any `r` in `[0, k_max]`.
    pub fn zeta_at(&self, r: f64) -> Vec<Spinor4> {
        let c = barycentric_coefficients(&self.radii, &self.bary, r);
        let mut out = vec![Spinor4::ZERO; self.support.len()];
        for (cj, zj) in c.iter().zip(&self.z) {
            for (o, v) in out.iter_mut().zip(zj) {
                *o += *v * *cj;
            }
        }
        out
    }
}

/// A scattering state with outgoing amplitude given by a shell expansion.
pub struct PotentialState<'a> {
    free: &'a ShellExpansion,
    support: Vec<Vec3>,
    /// `h^3 A(x') (W + Z)(x')`, support-major within each radial node
    q: Vec<Spinor4>,
    reach: f64,
    m: f64,
}

impl<'a> PotentialState<'a> {
    pub fn new(free: &'a ShellExpansion, table: &ScatterTable) -> Result<PotentialState<'a>> {
        if (free.mass() - table.m).abs() > 0.0 {
            return Err(Error::InvalidArgument("shell expansion and scatter table disagree on the mass".into()));
        }
        if free.k_max() > table.radii.last().copied().unwrap_or(0.0) * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("scatter table does not cover the shell radii".into()));
        }
        let h3 = table.grid.cell_volume();
        let ns = table.support.len();
        let q: Vec<Spinor4> = if ns == 0 {
            Vec::new()
        } else {
            free.radii()
                .par_iter()
                .map(|&r| {
                    let w = free.shell_values_for_points(&table.support, r)?;
                    let z = table.zeta_at(r);
                    Ok(w.iter()
                        .zip(&z)
                        .zip(&table.support)
                        .map(|((a, b), x)| table.potential.apply(x, &(*a + *b)) * h3)
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect()
        };
        let reach = table.support.iter().map(|x| x.norm()).fold(0.0, f64::max);
        Ok(PotentialState {
            free,
            support: table.support.clone(),
            q,
            reach,
            m: free.mass(),
        })
    }

    /// Scattered contribution per radial node of the free expansion.
    pub fn scattered_shell_values(&self, x: &Vec3) -> Vec<Spinor4> {
        let ns = self.support.len();
        let nr = self.free.n_radial();
        if ns == 0 {
            return vec![Spinor4::ZERO; nr];
        }
        let geo: Vec<Vec3> = self.support.iter().map(|xp| x - xp).collect();
        self.free
            .radii()
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let e = energy(k * k, self.m);
                let row = &self.q[i * ns..(i + 1) * ns];
                let mut acc = Spinor4::ZERO;
                for (d, q) in geo.iter().zip(row) {
                    if d.norm_squared() == 0.0 {
                        continue;
                    }
                    let (s, v) = kernel_parts(k, d);
                    acc += apply_kernel_parts(s, &v, e, self.m, q);
                }
                acc
            })
            .collect()
    }

    pub fn free_part(&self) -> &ShellExpansion {
        self.free
    }
}

/// Late-time momentum amplitude of the state built from `amp`.
///
/// Each scattered shell radiates `-e^{ik|x|} P_k(x_hat) / (4 pi |x|)` with
/// `P_k = (E + beta m + alpha.k) sum_x' e^{-ik.x'} q_k(x')`; matching the
/// outgoing half of the free shell integral gives
/// `psi_hat_out(k) = psi_hat(k) - i |k| P_k / (8 pi^2)`.
pub fn outgoing_amplitude(amp: &MomentumAmplitude, shell: &ShellExpansion, table: &ScatterTable) -> Result<MomentumAmplitude> {
    let mut out = amp.clone();
    if table.support.is_empty() {
        return Ok(out);
    }
    let m = amp.m;
    let h3 = table.grid.cell_volume();
    let mut by_radius: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for i in 0..amp.len() {
        by_radius.entry(amp.grid.node(i).norm().to_bits()).or_default().push(i);
    }
    let k_top = shell.k_max().min(*table.radii.last().unwrap());
    let groups: Vec<(f64, Vec<usize>)> = by_radius.into_iter().map(|(b, v)| (f64::from_bits(b), v)).collect();
    let updates: Vec<Vec<(usize, Complex64, Complex64)>> = groups
        .par_iter()
        .map(|(r, nodes)| {
            if *r > k_top {
                return Ok(Vec::new());
            }
            let w = shell.shell_values_for_points(&table.support, *r)?;
            let z = table.zeta_at(*r);
            let q: Vec<Spinor4> = w
                .iter()
                .zip(&z)
                .zip(&table.support)
                .map(|((a, b), x)| table.potential.apply(x, &(*a + *b)) * h3)
                .collect();
            let e = energy(r * r, m);
            let pre = Complex64::new(0.0, -r / (8.0 * PI * PI));
            let n = table.grid.n;
            let (x0, h) = (-table.grid.half_width, table.grid.spacing());
            let coords: Vec<[usize; 3]> = table.support_idx.iter().map(|&i| table.grid.coords(i)).collect();
            let mut ph = vec![[Complex64::new(0.0, 0.0); 3]; n];
            Ok(nodes
                .iter()
                .map(|&i| {
                    let k = amp.grid.node(i);
                    // e^{-i k_d (x0 + h c)} by recurrence along each axis
                    for d in 0..3 {
                        let step = Complex64::cis(-k[d] * h);
                        let mut v = Complex64::cis(-k[d] * x0);
                        for (c, row) in ph.iter_mut().enumerate() {
                            if c % 16 == 0 {
                                v = Complex64::cis(-k[d] * (x0 + h * c as f64));
                            }
                            row[d] = v;
                            v *= step;
                        }
                    }
                    let mut sum = Spinor4::ZERO;
                    for (qj, c) in q.iter().zip(&coords) {
                        sum += *qj * (ph[c[0]][0] * ph[c[1]][1] * ph[c[2]][2]);
                    }
                    let p = sum * e + apply_beta(&sum) * m + apply_alpha_dot(&k, &sum);
                    let b = positive_spinors(&k, m);
                    let d1 = b.s1.inner(&p) * pre;
                    let d2 = b.s2.inner(&p) * pre;
                    (i, d1, d2)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    for (i, d1, d2) in updates.into_iter().flatten() {
        out.f1[i] += d1;
        out.f2[i] += d2;
    }
    Ok(out)
}

impl WaveField for PotentialState<'_> {
    fn mass(&self) -> f64 {
        self.m
    }

    fn psi(&self, x: &Vec3, t: f64) -> Result<Spinor4> {
        Ok(self.psi_series(x, &[t])?.remove(0))
    }

    fn psi_series(&self, x: &Vec3, times: &[f64]) -> Result<Vec<Spinor4>> {
        let t_max = times.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        self.free.check_resolution(x.norm() + self.reach, t_max)?;
        let mut shell = self.free.shell_values(x);
        for (a, b) in shell.iter_mut().zip(self.scattered_shell_values(x)) {
            *a += b;
        }
        Ok(self.free.time_sum(&shell, times))
    }
}
