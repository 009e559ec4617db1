//! Banks of generalized eigenfunctions and the transform pair they define.
//!
//! File layout (all little-endian), one file per `(k, s)`:
//!
//! ```text
//! 0   8  magic "DFLEIG01"
//! 8  24  k1, k2, k3        f64
//! 32  8  s                 u64 (1 or 2)
//! 40  8  m                 f64
//! 48  8  L (half width)    f64
//! 56  8  n (nodes/axis)    u64
//! 64  8  iterations        u64
//! 72  8  last delta        f64
//! 80  8  converged         u64 (0 or 1)
//! 88     n^3 nodes, node-major, each Re/Im of zeta components 1..4 (8 x f64)
//! ```
//!
//! `manifest.txt` lists the bank: `key = value` header lines followed by one
//! `file k1 k2 k3 s` line per field.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::amplitude::MomentumAmplitude;
use crate::error::{Error, Result};
use crate::grid::{GridLayout, MomentumGrid};
use crate::lse::{kernel_parts, apply_kernel_parts, solve_with, ConvergenceRecord, EigenfunctionField, LseOperator, Potential, SpatialGrid};
use crate::propagator::{WaveField, FOURIER_NORM};
use crate::spinor::{energy, positive_spinors, Spinor4, Vec3};

pub const EIGEN_MAGIC: &[u8; 8] = b"DFLEIG01";
pub const MANIFEST: &str = "manifest.txt";

pub struct EigenBank {
    pub grid: SpatialGrid,
    pub m: f64,
    pub potential: Potential,
    /// ordered by momentum, then spin
    pub fields: Vec<EigenfunctionField>,
}

/// Momenta `2 pi n / (N h)` on the grid's discrete Fourier lattice.
pub fn lattice_momenta(grid: &SpatialGrid, indices: &[[i32; 3]]) -> Vec<Vec3> {
    let dk = grid.lattice_spacing();
    indices
        .iter()
        .map(|n| Vec3::new(n[0] as f64, n[1] as f64, n[2] as f64) * dk)
        .collect()
}

/// Twelve lattice momenta around `(2, 0, 0)` for the default grid.
pub fn default_bank_momenta(grid: &SpatialGrid) -> Vec<Vec3> {
    let mut idx = Vec::new();
    for a in 4..=7 {
        for b in [-1, 0, 1] {
            idx.push([a, b, 0]);
        }
    }
    lattice_momenta(grid, &idx)
}

impl EigenBank {
    /// Solves both spin channels at every momentum; one operator per `|k|`.
    pub fn build(potential: &Potential, momenta: &[Vec3], grid: SpatialGrid, m: f64, tol: f64, max_iter: usize) -> Result<EigenBank> {
        if momenta.is_empty() {
            return Err(Error::InvalidArgument("eigen-bank needs at least one momentum".into()));
        }
        let fields: Vec<Vec<EigenfunctionField>> = momenta
            .par_iter()
            .map(|k| {
                let op = LseOperator::new(potential, grid, k.norm(), m)?;
                Ok(vec![solve_with(&op, k, 1, tol, max_iter, true)?, solve_with(&op, k, 2, tol, max_iter, true)?])
            })
            .collect::<Result<_>>()?;
        Ok(EigenBank {
            grid,
            m,
            potential: potential.clone(),
            fields: fields.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn momenta(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::new();
        for f in &self.fields {
            if out.last() != Some(&f.k) {
                out.push(f.k);
            }
        }
        out
    }

    /// Weight of one lattice momentum, `(2 pi / (N h))^3`.
    pub fn momentum_weight(&self) -> f64 {
        self.grid.lattice_spacing().powi(3)
    }

    /// Explicit momentum grid carrying the bank's amplitudes.
    pub fn amplitude_grid(&self) -> Result<MomentumGrid> {
        let k = self.momenta();
        let w = vec![self.momentum_weight(); k.len()];
        MomentumGrid::explicit(k, w)
    }

    /// Field for the `k`-th bank momentum and spin channel `s`.
    pub fn field(&self, k: usize, s: usize) -> &EigenfunctionField {
        &self.fields[2 * k + (s - 1)]
    }

    fn check_amplitude(&self, amp: &MomentumAmplitude) -> Result<()> {
        let momenta = self.momenta();
        match &amp.grid.layout {
            GridLayout::Explicit { nodes, .. } if nodes.len() == momenta.len() => {
                for (a, b) in nodes.iter().zip(&momenta) {
                    if (a - b).norm() > 1e-12 * b.norm().max(1.0) {
                        return Err(Error::BankMismatch(format!("momentum {a:?} is not bank momentum {b:?}")));
                    }
                }
                if (amp.m - self.m).abs() > 1e-14 * self.m {
                    return Err(Error::BankMismatch(format!("mass {} vs bank mass {}", amp.m, self.m)));
                }
                Ok(())
            }
            _ => Err(Error::BankMismatch(format!(
                "amplitude grid has {} nodes, bank has {} momenta",
                amp.len(),
                momenta.len()
            ))),
        }
    }

    fn check_state(&self, state: &[Spinor4]) -> Result<()> {
        if state.len() != self.grid.len() {
            return Err(Error::BankMismatch(format!(
                "state has {} nodes, bank grid has {}",
                state.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// `psi_hat_s(k) = sum_x h^3 (2 pi)^{-3/2} <phi_tilde_k^s(x), psi(x)>`.
    pub fn generalized_projection(&self, state: &[Spinor4]) -> Result<MomentumAmplitude> {
        self.check_state(state)?;
        let p = self.projections(state);
        let grid = self.amplitude_grid()?;
        let nk = grid.len();
        let mut amp = MomentumAmplitude::zeros(grid, self.m)?;
        for i in 0..nk {
            amp.f1[i] = p[2 * i];
            amp.f2[i] = p[2 * i + 1];
        }
        Ok(amp)
    }

    fn projections(&self, state: &[Spinor4]) -> Vec<Complex64> {
        let h3 = self.grid.cell_volume();
        self.fields
            .par_iter()
            .map(|f| {
                let phi = f.phi_tilde_all();
                let mut acc = crate::quadrature::ComplexSum::default();
                for (a, b) in phi.iter().zip(state) {
                    acc.add(a.inner(b));
                }
                acc.value() * (h3 * FOURIER_NORM)
            })
            .collect()
    }

    /// Channel amplitudes whose synthesis is the best approximation of
    /// `state` in the span of the bank: the projections corrected by the
    /// Gram matrix of the finite basis. With no potential the Gram matrix
    /// is the identity and this equals [`EigenBank::generalized_projection`].
    pub fn generalized_fourier(&self, state: &[Spinor4]) -> Result<MomentumAmplitude> {
        self.check_state(state)?;
        let p = DVector::from_vec(self.projections(state));
        let nf = self.fields.len();
        let h3 = self.grid.cell_volume();
        let scale = FOURIER_NORM * FOURIER_NORM * self.momentum_weight() * h3;
        let phis: Vec<Vec<Spinor4>> = self.fields.par_iter().map(|f| f.phi_tilde_all()).collect();
        let entries: Vec<Complex64> = (0..nf * nf)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / nf, ij % nf);
                let mut acc = crate::quadrature::ComplexSum::default();
                for (a, b) in phis[i].iter().zip(&phis[j]) {
                    acc.add(a.inner(b));
                }
                acc.value() * scale
            })
            .collect();
        let gram = DMatrix::from_row_slice(nf, nf, &entries);
        let a = gram
            .lu()
            .solve(&p)
            .ok_or_else(|| Error::BankMismatch("bank Gram matrix is singular".into()))?;
        let grid = self.amplitude_grid()?;
        let mut amp = MomentumAmplitude::zeros(grid, self.m)?;
        for i in 0..amp.len() {
            amp.f1[i] = a[2 * i];
            amp.f2[i] = a[2 * i + 1];
        }
        Ok(amp)
    }

    /// `psi(x, t) = sum_{k,s} w (2 pi)^{-3/2} e^{-i E_k t} phi_tilde_k^s(x) psi_hat_s(k)` on the grid.
    pub fn synthesize_state(&self, amp: &MomentumAmplitude, t: f64) -> Result<Vec<Spinor4>> {
        self.check_amplitude(amp)?;
        let w = self.momentum_weight() * FOURIER_NORM;
        let coef: Vec<Complex64> = (0..self.fields.len())
            .map(|j| {
                let f = &self.fields[j];
                let c = if j % 2 == 0 { amp.f1[j / 2] } else { amp.f2[j / 2] };
                c * Complex64::from_polar(w, -f.energy() * t)
            })
            .collect();
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = Spinor4::ZERO;
                for (f, c) in self.fields.iter().zip(&coef) {
                    acc += f.phi_tilde(i) * *c;
                }
                acc
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str("# dfl eigen-bank\n");
        manifest.push_str(&format!("m = {}\n", self.m));
        manifest.push_str(&format!("half_width = {}\n", self.grid.half_width));
        manifest.push_str(&format!("n = {}\n", self.grid.n));
        manifest.push_str(&format!("potential = {}\n", self.potential.label()));
        manifest.push_str(&format!("fields = {}\n", self.fields.len()));
        for (i, f) in self.fields.iter().enumerate() {
            let name = format!("eig_{i:04}.bin");
            write_field(f, BufWriter::new(fs::File::create(dir.join(&name))?))?;
            manifest.push_str(&format!("{name} {:e} {:e} {:e} {}\n", f.k.x, f.k.y, f.k.z, f.s));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    /// Loads a bank saved by [`EigenBank::save`]; `potential` must carry the
    /// label recorded in the manifest.
    pub fn load(dir: &Path, potential: &Potential) -> Result<EigenBank> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let mut header = std::collections::HashMap::new();
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                entries.push(line.to_string());
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("manifest lacks '{k}'")));
        let parse_f = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad '{k}' in manifest"))) };
        let m = parse_f("m")?;
        let grid = SpatialGrid::new(parse_f("half_width")?, get("n")?.parse().map_err(|_| Error::Format("bad 'n'".into()))?)?;
        if get("potential")? != &potential.label() {
            return Err(Error::BankMismatch(format!(
                "bank solved for '{}', requested '{}'",
                get("potential")?,
                potential.label()
            )));
        }
        let count: usize = get("fields")?.parse().map_err(|_| Error::Format("bad 'fields'".into()))?;
        if entries.len() != count {
            return Err(Error::Format(format!("manifest lists {} files, header says {count}", entries.len())));
        }
        let mut fields = Vec::with_capacity(count);
        for e in entries {
            let name = e.split_whitespace().next().unwrap_or_default();
            let f = read_field(BufReader::new(fs::File::open(dir.join(name))?))?;
            if f.grid != grid || (f.m - m).abs() > 0.0 {
                return Err(Error::BankMismatch(format!("{name} was solved on a different grid or mass")));
            }
            fields.push(f);
        }
        Ok(EigenBank {
            grid,
            m,
            potential: potential.clone(),
            fields,
        })
    }
}

pub fn write_field<W: Write>(f: &EigenfunctionField, mut w: W) -> Result<()> {
    w.write_all(EIGEN_MAGIC)?;
    for v in [f.k.x, f.k.y, f.k.z] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(f.s as u64).to_le_bytes())?;
    w.write_all(&f.m.to_le_bytes())?;
    w.write_all(&f.grid.half_width.to_le_bytes())?;
    w.write_all(&(f.grid.n as u64).to_le_bytes())?;
    w.write_all(&(f.record.iterations as u64).to_le_bytes())?;
    w.write_all(&f.record.last_delta().to_le_bytes())?;
    w.write_all(&(f.record.converged as u64).to_le_bytes())?;
    for z in &f.zeta {
        for c in z.0 {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_field<R: Read>(mut r: R) -> Result<EigenfunctionField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != EIGEN_MAGIC {
        return Err(Error::Format("not an eigenfunction file".into()));
    }
    let k = Vec3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let s = read_u64(&mut r)? as usize;
    let m = read_f64(&mut r)?;
    let half_width = read_f64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let iterations = read_u64(&mut r)? as usize;
    let last_delta = read_f64(&mut r)?;
    let converged = read_u64(&mut r)? != 0;
    if !(s == 1 || s == 2) || n < 4 || n > 4096 {
        return Err(Error::Format(format!("implausible header (s = {s}, n = {n})")));
    }
    let grid = SpatialGrid::new(half_width, n)?;
    let mut buf = vec![0u8; grid.len() * 64];
    r.read_exact(&mut buf)?;
    let zeta = buf
        .chunks_exact(64)
        .map(|c| {
            let v: Vec<f64> = c.chunks_exact(8).map(|x| f64::from_le_bytes(x.try_into().unwrap())).collect();
            Spinor4([
                Complex64::new(v[0], v[1]),
                Complex64::new(v[2], v[3]),
                Complex64::new(v[4], v[5]),
                Complex64::new(v[6], v[7]),
            ])
        })
        .collect();
    Ok(EigenfunctionField {
        k,
        s,
        m,
        grid,
        zeta,
        record: ConvergenceRecord {
            iterations,
            deltas: vec![last_delta],
            converged,
        },
    })
}

/// Point evaluator for a state synthesised from a bank. On grid nodes the
/// stored eigenfunctions are used; elsewhere `zeta` comes from its source
/// integral `sum_x' h^3 G_k(x - x') A(x') phi_tilde(x')`, which is accurate
/// at least a cell away from the potential's support.
pub struct BankState<'a> {
    bank: &'a EigenBank,
    /// `w (2 pi)^{-3/2} psi_hat` per field
    coef: Vec<Complex64>,
    /// support nodes and `h^3 A phi_tilde` there, per field
    support: Vec<Vec3>,
    sources: Vec<Vec<Spinor4>>,
}

impl<'a> BankState<'a> {
    pub fn new(bank: &'a EigenBank, amp: &MomentumAmplitude) -> Result<BankState<'a>> {
        bank.check_amplitude(amp)?;
        let w = bank.momentum_weight() * FOURIER_NORM;
        let coef = (0..bank.fields.len())
            .map(|j| w * if j % 2 == 0 { amp.f1[j / 2] } else { amp.f2[j / 2] })
            .collect();
        let g = bank.grid;
        let pot = &bank.potential;
        let cut = pot.support_radius();
        let idx: Vec<usize> = if pot.is_zero() {
            Vec::new()
        } else {
            (0..g.len()).filter(|&i| g.node(i).norm() <= cut).collect()
        };
        let h3 = g.cell_volume();
        let support: Vec<Vec3> = idx.iter().map(|&i| g.node(i)).collect();
        let sources = bank
            .fields
            .iter()
            .map(|f| idx.iter().zip(&support).map(|(&i, x)| pot.apply(x, &f.phi_tilde(i)) * h3).collect())
            .collect();
        Ok(BankState {
            bank,
            coef,
            support,
            sources,
        })
    }

    fn node_index(&self, x: &Vec3) -> Option<usize> {
        let g = self.bank.grid;
        let h = g.spacing();
        let mut c = [0usize; 3];
        for l in 0..3 {
            let u = (x[l] + g.half_width) / h;
            let r = u.round();
            if (u - r).abs() > 1e-9 || r < 0.0 || r >= g.n as f64 {
                return None;
            }
            c[l] = r as usize;
        }
        Some(g.index(c))
    }
}

impl WaveField for BankState<'_> {
    fn mass(&self) -> f64 {
        self.bank.m
    }

    fn psi(&self, x: &Vec3, t: f64) -> Result<Spinor4> {
        let node = self.node_index(x);
        let mut acc = Spinor4::ZERO;
        for ((f, c), src) in self.bank.fields.iter().zip(&self.coef).zip(&self.sources) {
            let e = f.energy();
            let val = match node {
                Some(i) => f.phi_tilde(i),
                None => {
                    let k = f.k.norm();
                    let mut z = Spinor4::ZERO;
                    for (xp, q) in self.support.iter().zip(src) {
                        let d = x - xp;
                        if d.norm() == 0.0 {
                            continue;
                        }
                        let (s, v) = kernel_parts(k, &d);
                        z += apply_kernel_parts(s, &v, e, f.m, q);
                    }
                    *positive_spinors(&f.k, f.m).get(f.s) * Complex64::cis(f.k.dot(x)) + z
                }
            };
            acc += val * (*c * Complex64::cis(-energy(f.k.norm_squared(), f.m) * t));
        }
        Ok(acc)
    }
}
