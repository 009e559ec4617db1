//! Outgoing-state amplitudes on momentum grids.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ConeSpec;
use crate::grid::{GridLayout, MomentumGrid};
use crate::par;
use crate::spinor::{positive_spinors, Spinor4, Vec3};

pub const CSV_HEADER: &str = "k1,k2,k3,w,re_f1,im_f1,re_f2,im_f2";
const BINARY_MAGIC: &[u8; 8] = b"DFLAMP01";

/// Spin-channel amplitudes `f_s(k)` of `psi_hat(k) = f1 s1_k + f2 s2_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumAmplitude {
    pub grid: MomentumGrid,
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
    pub m: f64,
}

fn check_mass(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("mass must be positive, got {m}")))
    }
}

impl MomentumAmplitude {
    pub fn zeros(grid: MomentumGrid, m: f64) -> Result<Self> {
        check_mass(m)?;
        let n = grid.len();
        Ok(MomentumAmplitude {
            grid,
            f1: vec![Complex64::new(0.0, 0.0); n],
            f2: vec![Complex64::new(0.0, 0.0); n],
            m,
        })
    }

    pub fn from_fn<F>(grid: MomentumGrid, m: f64, f: F) -> Result<Self>
    where
        F: Fn(&Vec3) -> (Complex64, Complex64) + Sync,
    {
        check_mass(m)?;
        let vals: Vec<(Complex64, Complex64)> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.node(i)))
            .collect();
        let (f1, f2) = vals.into_iter().unzip();
        Ok(MomentumAmplitude { grid, f1, f2, m })
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    /// `psi_hat(k)` at node `i`.
    #[inline]
    pub fn synthesize(&self, i: usize) -> Spinor4 {
        let b = positive_spinors(&self.grid.node(i), self.m);
        b.combine(self.f1[i], self.f2[i])
    }

    #[inline]
    pub fn channel_density(&self, i: usize) -> f64 {
        self.f1[i].norm_sqr() + self.f2[i].norm_sqr()
    }

    pub fn probability(&self) -> f64 {
        par::sum_indexed(self.len(), |i| self.grid.weight(i) * self.channel_density(i))
    }

    /// Rescales to unit probability and returns the previous value.
    pub fn normalize(&mut self) -> Result<f64> {
        let p = self.probability();
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cannot normalise an amplitude with probability {p}"
            )));
        }
        let s = 1.0 / p.sqrt();
        self.f1.iter_mut().for_each(|c| *c *= s);
        self.f2.iter_mut().for_each(|c| *c *= s);
        Ok(p)
    }

    pub fn mean_momentum(&self) -> Vec3 {
        let v = par::sum_indexed_vec(self.len(), 3, |i, acc| {
            let w = self.grid.weight(i) * self.channel_density(i);
            let k = self.grid.node(i);
            acc[0] += w * k.x;
            acc[1] += w * k.y;
            acc[2] += w * k.z;
        });
        Vec3::new(v[0], v[1], v[2])
    }

    /// `int_cone int_0^inf <psi_hat, psi_hat> k^2 dk dOmega` on the grid.
    pub fn momentum_side(&self, cone: &ConeSpec) -> f64 {
        par::sum_indexed(self.len(), |i| {
            let k = self.grid.node(i);
            if cone.contains(&k) {
                self.grid.weight(i) * self.synthesize(i).norm_sqr()
            } else {
                0.0
            }
        })
    }

    /// Same probability on the mass hyperboloid: amplitude `(k^2+m^2)^{1/4} psi_hat`
    /// against the invariant measure `d^3k / sqrt(k^2+m^2)`.
    pub fn covariant_momentum_side(&self, cone: &ConeSpec) -> f64 {
        let m2 = self.m * self.m;
        par::sum_indexed(self.len(), |i| {
            let k = self.grid.node(i);
            if cone.contains(&k) {
                let e = (k.norm_squared() + m2).sqrt();
                let li = self.synthesize(i) * e.sqrt();
                self.grid.weight(i) / e * li.norm_sqr()
            } else {
                0.0
            }
        })
    }

    /// Probability in the cone carried by momenta below `k_min`.
    pub fn low_momentum_tail(&self, cone: &ConeSpec, k_min: f64) -> f64 {
        par::sum_indexed(self.len(), |i| {
            let k = self.grid.node(i);
            if k.norm() < k_min && cone.contains(&k) {
                self.grid.weight(i) * self.channel_density(i)
            } else {
                0.0
            }
        })
    }

    pub fn is_zero(&self) -> bool {
        self.f1.iter().chain(&self.f2).all(|c| c.norm_sqr() == 0.0)
    }

    pub fn max_momentum(&self) -> f64 {
        (0..self.len())
            .map(|i| self.grid.node(i).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BufWriter::new(w);
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            let k = self.grid.node(i);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                k.x,
                k.y,
                k.z,
                self.grid.weight(i),
                self.f1[i].re,
                self.f1[i].im,
                self.f2[i].re,
                self.f2[i].im
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the table written by [`write_csv`]; the grid comes back as an
    /// explicit node list.
    pub fn read_csv<R: Read>(r: R, m: f64) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty amplitude table".into()))??;
        if header.trim() != CSV_HEADER {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let (mut nodes, mut weights, mut f1, mut f2) = (vec![], vec![], vec![], vec![]);
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", ln + 2)))?;
            if v.len() != 8 {
                return Err(Error::Format(format!("line {}: expected 8 columns", ln + 2)));
            }
            nodes.push(Vec3::new(v[0], v[1], v[2]));
            weights.push(v[3]);
            f1.push(Complex64::new(v[4], v[5]));
            f2.push(Complex64::new(v[6], v[7]));
        }
        check_mass(m)?;
        Ok(MomentumAmplitude {
            grid: MomentumGrid::explicit(nodes, weights)?,
            f1,
            f2,
            m,
        })
    }

    pub fn load_csv(path: &Path, m: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, m)
    }

    /// Binary layout: magic `DFLAMP01`, `u64` node count, `f64` mass, then per
    /// node eight `f64` in the CSV column order. All little-endian.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BufWriter::new(w);
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&self.m.to_le_bytes())?;
        for i in 0..self.len() {
            let k = self.grid.node(i);
            for v in [
                k.x,
                k.y,
                k.z,
                self.grid.weight(i),
                self.f1[i].re,
                self.f1[i].im,
                self.f2[i].re,
                self.f2[i].im,
            ] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("bad amplitude magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let m = f64::from_le_bytes(b8);
        let (mut nodes, mut weights, mut f1, mut f2) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        let mut row = [0.0f64; 8];
        for _ in 0..n {
            for v in row.iter_mut() {
                r.read_exact(&mut b8)?;
                *v = f64::from_le_bytes(b8);
            }
            nodes.push(Vec3::new(row[0], row[1], row[2]));
            weights.push(row[3]);
            f1.push(Complex64::new(row[4], row[5]));
            f2.push(Complex64::new(row[6], row[7]));
        }
        check_mass(m)?;
        Ok(MomentumAmplitude {
            grid: MomentumGrid::explicit(nodes, weights)?,
            f1,
            f2,
            m,
        })
    }
}

/// Normalised Gaussian packet `f_s = c_s N exp(-|k-k0|^2 / (4 sigma^2))`.
pub fn gaussian_packet(
    grid: MomentumGrid,
    k0: Vec3,
    sigma: f64,
    m: f64,
    spin_mix: (Complex64, Complex64),
) -> Result<MomentumAmplitude> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if spin_mix.0.norm_sqr() + spin_mix.1.norm_sqr() == 0.0 {
        return Err(Error::InvalidArgument("spin mix must be non-zero".into()));
    }
    check_support(&grid, &k0, 6.0 * sigma, sigma)?;
    let inv = 1.0 / (4.0 * sigma * sigma);
    let mut amp = MomentumAmplitude::from_fn(grid, m, |k| {
        let g = (-(k - k0).norm_squared() * inv).exp();
        (spin_mix.0 * g, spin_mix.1 * g)
    })?;
    amp.normalize()?;
    Ok(amp)
}

/// Probability of the normalised packet outside the slab `|k_i - k0_i| <= d`
/// along one axis.
pub fn gaussian_slab_tail(d: f64, sigma: f64) -> f64 {
    erfc(d / (sigma * std::f64::consts::SQRT_2))
}

fn check_support(grid: &MomentumGrid, k0: &Vec3, reach: f64, sigma: f64) -> Result<()> {
    match &grid.layout {
        GridLayout::Cartesian {
            center,
            half_width,
            ..
        } => {
            for axis in 0..3 {
                let d = half_width - (k0[axis] - center[axis]).abs();
                if d < reach * (1.0 - 1e-12) {
                    return Err(Error::GridTooSmall {
                        axis,
                        mass_bound: gaussian_slab_tail(d.max(0.0), sigma),
                    });
                }
            }
            Ok(())
        }
        GridLayout::Spherical(s) => {
            let d = s.k_max() - k0.norm();
            if d < reach * (1.0 - 1e-12) {
                return Err(Error::GridTooSmall {
                    axis: 0,
                    mass_bound: gaussian_slab_tail(d.max(0.0), sigma),
                });
            }
            Ok(())
        }
        GridLayout::Explicit { .. } => Ok(()),
    }
}

/// Complementary error function (Chebyshev fit, relative error < 1.2e-7).
pub(crate) fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Maxima of `|d^j f| <k>^n` for `j = 0, 1, 2` and `n = 0..=4`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGReport {
    pub maxima: [[f64; 5]; 3],
    /// Set when the maximum sits in the outer two node layers: the weighted
    /// quantity is still growing at the box edge.
    pub flagged: [[bool; 5]; 3],
}

impl ClassGReport {
    pub fn any_flagged(&self) -> bool {
        self.flagged.iter().flatten().any(|&f| f)
    }

    pub fn all_finite(&self) -> bool {
        self.maxima.iter().flatten().all(|v| v.is_finite())
    }
}

pub fn class_g_report(amp: &MomentumAmplitude) -> Result<ClassGReport> {
    let (n, h) = match &amp.grid.layout {
        GridLayout::Cartesian { n, .. } => (*n, amp.grid.spacing().unwrap()),
        _ => return Err(Error::LayoutUnsupported { expected: "cartesian" }),
    };
    if n < 5 {
        return Err(Error::InvalidArgument("class-G report needs n >= 5".into()));
    }
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let chans = [&amp.f1, &amp.f2];
    let mut maxima = [[0.0f64; 5]; 3];
    let mut at_edge = [[false; 5]; 3];
    let edge = |a: usize| a < 3 || a + 3 >= n;
    for a in 1..n - 1 {
        for b in 1..n - 1 {
            for c in 1..n - 1 {
                let i = idx(a, b, c);
                let k = amp.grid.node(i);
                let bracket = (1.0 + k.norm_squared()).sqrt();
                let mut d = [0.0f64; 3];
                let step = [n * n, n, 1];
                for f in chans {
                    d[0] += f[i].norm_sqr();
                    for (p, sp) in step.iter().enumerate() {
                        let g = (f[i + sp] - f[i - sp]) / (2.0 * h);
                        d[1] += g.norm_sqr();
                        for (q, sq) in step.iter().enumerate() {
                            let hh = if p == q {
                                (f[i + sp] - f[i] * 2.0 + f[i - sp]) / (h * h)
                            } else {
                                (f[i + sp + sq] - f[i + sp - sq] - f[i - sp + sq] + f[i - sp - sq])
                                    / (4.0 * h * h)
                            };
                            d[2] += hh.norm_sqr();
                        }
                    }
                }
                let on_edge = edge(a) || edge(b) || edge(c);
                for j in 0..3 {
                    let dj = d[j].sqrt();
                    let mut w = 1.0;
                    for nn in 0..5 {
                        let v = dj * w;
                        if v > maxima[j][nn] {
                            maxima[j][nn] = v;
                            at_edge[j][nn] = on_edge;
                        }
                        w *= bracket;
                    }
                }
            }
        }
    }
    Ok(ClassGReport {
        maxima,
        flagged: at_edge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn zero() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    fn default_packet() -> MomentumAmplitude {
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let grid = MomentumGrid::default_cartesian(k0, 0.5).unwrap();
        gaussian_packet(grid, k0, 0.5, 1.0, (one(), zero())).unwrap()
    }

    #[test]
    fn packet_is_normalised_and_centred() {
        let a = default_packet();
        assert_relative_eq!(a.probability(), 1.0, epsilon = 1e-12);
        assert!(a.f2.iter().all(|c| *c == zero()));
        let mean = a.mean_momentum();
        assert!((mean - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn packet_rejects_small_box() {
        let k0 = Vec3::new(2.0, 0.0, 0.0);
        let grid = MomentumGrid::cartesian(Vec3::new(2.0, 0.5, 0.0), 3.0, 20).unwrap();
        match gaussian_packet(grid, k0, 0.5, 1.0, (one(), zero())) {
            Err(Error::GridTooSmall { axis, mass_bound }) => {
                assert_eq!(axis, 1);
                assert!(mass_bound > 1e-8);
            }
            other => panic!("expected grid-too-small, got {other:?}"),
        }
    }

    #[test]
    fn six_sigma_tail_is_below_threshold() {
        // both faces of all three slabs
        assert!(3.0 * gaussian_slab_tail(3.0, 0.5) < 1e-8);
        assert_relative_eq!(erfc(1.0), 0.157_299_207_050_285_13, max_relative = 2e-7);
    }

    #[test]
    fn rest_frame_synthesis() {
        let grid = MomentumGrid::explicit(vec![Vec3::zeros()], vec![1.0]).unwrap();
        let mut a = MomentumAmplitude::zeros(grid, 1.0).unwrap();
        assert_eq!(a.synthesize(0), Spinor4::ZERO);
        a.f1[0] = one();
        assert_eq!(a.synthesize(0), Spinor4::from_real([1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn synthesized_norm_equals_channel_density() {
        let a = default_packet();
        for i in (0..a.len()).step_by(997) {
            assert_relative_eq!(
                a.synthesize(i).norm_sqr(),
                a.channel_density(i),
                max_relative = 1e-13,
                epsilon = 1e-300
            );
        }
    }

    #[test]
    fn momentum_side_full_and_isotropic() {
        let a = default_packet();
        assert_relative_eq!(a.momentum_side(&ConeSpec::full_sphere()), 1.0, epsilon = 1e-12);

        let th = 0.7;
        let cone = ConeSpec::new(Vec3::new(0.0, 0.0, 1.0), th).unwrap();
        let grid = MomentumGrid::far_field(&cone, 4.0, 10.0, 4).unwrap();
        let mut iso = MomentumAmplitude::from_fn(grid, 1.0, |k| {
            (Complex64::new((-k.norm_squared()).exp(), 0.0), zero())
        })
        .unwrap();
        iso.normalize().unwrap();
        assert_relative_eq!(iso.momentum_side(&cone), (1.0 - th.cos()) / 2.0, epsilon = 1e-12);
        let z = MomentumAmplitude::zeros(iso.grid.clone(), 1.0).unwrap();
        assert_eq!(z.momentum_side(&cone), 0.0);
    }

    #[test]
    fn class_g_flags_slow_tails() {
        let a = default_packet();
        let r = class_g_report(&a).unwrap();
        assert!(r.all_finite());
        assert!(!r.any_flagged());

        let tail = |hw: f64| {
            let g = MomentumGrid::cartesian(Vec3::zeros(), hw, 21).unwrap();
            let a = MomentumAmplitude::from_fn(g, 1.0, |k| {
                (Complex64::new(1.0 / (1.0 + k.norm_squared()).sqrt(), 0.0), zero())
            })
            .unwrap();
            class_g_report(&a).unwrap()
        };
        let small = tail(10.0);
        let large = tail(20.0);
        assert!(small.flagged[0][4]);
        assert!(large.maxima[0][4] > 3.0 * small.maxima[0][4]);
        assert!(!small.flagged[0][0]);

        let far = MomentumGrid::far_field(&ConeSpec::full_sphere(), 2.0, 1.0, 2).unwrap();
        let s = MomentumAmplitude::zeros(far, 1.0).unwrap();
        assert!(matches!(class_g_report(&s), Err(Error::LayoutUnsupported { .. })));

        let zero_amp = MomentumAmplitude::zeros(a.grid.clone(), 1.0).unwrap();
        assert_eq!(class_g_report(&zero_amp).unwrap().maxima, [[0.0; 5]; 3]);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let g = MomentumGrid::cartesian(Vec3::new(1.0, 0.0, 0.0), 1.5, 5).unwrap();
        let a = MomentumAmplitude::from_fn(g, 1.3, |k| {
            (Complex64::new(k.x, -k.y), Complex64::new(0.25 * k.z, 1.0 / 3.0))
        })
        .unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = MomentumAmplitude::read_csv(&buf[..], 1.3).unwrap();
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.f2, b.f2);
        for i in 0..a.len() {
            assert_eq!(a.grid.node(i), b.grid.node(i));
            assert_eq!(a.grid.weight(i), b.grid.weight(i));
        }
        let mut bin = Vec::new();
        a.write_binary(&mut bin).unwrap();
        assert_eq!(&bin[..8], b"DFLAMP01");
        assert_eq!(bin.len(), 8 + 8 + 8 + a.len() * 64);
        let c = MomentumAmplitude::read_binary(&bin[..]).unwrap();
        assert_eq!(c.m, 1.3);
        assert_eq!(c.f1, a.f1);
        assert!(MomentumAmplitude::read_csv("a,b\n".as_bytes(), 1.0).is_err());
    }
}
