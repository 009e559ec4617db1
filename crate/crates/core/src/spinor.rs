//! Dirac matrix algebra and positive-energy spinors.
//!
//! The representation puts `sigma_1` on the diagonal (`diag(1, -1)`),
//! `sigma_2 = [[0, 1], [1, 0]]` and `sigma_3 = [[0, -i], [i, 0]]`. This is a
//! relabelling of the textbook Pauli ordering; the positive-energy spinors
//! below are eigenvectors of `alpha . k + beta m` only in this ordering.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix4, Vector3};
use num_complex::Complex64;

pub type Vec3 = Vector3<f64>;
pub type Mat4 = Matrix4<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Four-component complex spinor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Spinor4(pub [Complex64; 4]);

impl Spinor4 {
    pub const ZERO: Spinor4 = Spinor4([ZERO; 4]);

    pub fn new(c1: Complex64, c2: Complex64, c3: Complex64, c4: Complex64) -> Self {
        Spinor4([c1, c2, c3, c4])
    }

    pub fn from_real(c: [f64; 4]) -> Self {
        Spinor4(c.map(|x| Complex64::new(x, 0.0)))
    }

    /// Spin-space inner product, antilinear in the first argument.
    #[inline]
    pub fn inner(&self, other: &Spinor4) -> Complex64 {
        let a = &self.0;
        let b = &other.0;
        a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2] + a[3].conj() * b[3]
    }

    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    #[inline]
    pub fn scale(&self, s: Complex64) -> Spinor4 {
        Spinor4(self.0.map(|c| c * s))
    }

    pub fn apply(m: &Mat4, v: &Spinor4) -> Spinor4 {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            for c in 0..4 {
                *o += m[(r, c)] * v.0[c];
            }
        }
        Spinor4(out)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Index<usize> for Spinor4 {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Spinor4 {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl Add for Spinor4 {
    type Output = Spinor4;
    #[inline]
    fn add(self, rhs: Spinor4) -> Spinor4 {
        Spinor4([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
            self.0[3] + rhs.0[3],
        ])
    }
}

impl AddAssign for Spinor4 {
    #[inline]
    fn add_assign(&mut self, rhs: Spinor4) {
        for i in 0..4 {
            self.0[i] += rhs.0[i];
        }
    }
}

impl Sub for Spinor4 {
    type Output = Spinor4;
    #[inline]
    fn sub(self, rhs: Spinor4) -> Spinor4 {
        Spinor4([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
            self.0[3] - rhs.0[3],
        ])
    }
}

impl SubAssign for Spinor4 {
    #[inline]
    fn sub_assign(&mut self, rhs: Spinor4) {
        for i in 0..4 {
            self.0[i] -= rhs.0[i];
        }
    }
}

impl Neg for Spinor4 {
    type Output = Spinor4;
    fn neg(self) -> Spinor4 {
        Spinor4(self.0.map(|c| -c))
    }
}

impl Mul<Complex64> for Spinor4 {
    type Output = Spinor4;
    #[inline]
    fn mul(self, s: Complex64) -> Spinor4 {
        self.scale(s)
    }
}

impl Mul<f64> for Spinor4 {
    type Output = Spinor4;
    #[inline]
    fn mul(self, s: f64) -> Spinor4 {
        Spinor4(self.0.map(|c| c * s))
    }
}

/// The four Dirac matrices `alpha_1..3` and `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracMatrixSet {
    pub alpha: [Mat4; 3],
    pub beta: Mat4,
}

impl DiracMatrixSet {
    /// `alpha . k + beta m`, the free Dirac Hamiltonian at momentum `k`.
    pub fn hamiltonian(&self, k: &Vec3, m: f64) -> Mat4 {
        self.alpha[0] * Complex64::from(k.x)
            + self.alpha[1] * Complex64::from(k.y)
            + self.alpha[2] * Complex64::from(k.z)
            + self.beta * Complex64::from(m)
    }
}

pub fn pauli() -> [[[Complex64; 2]; 2]; 3] {
    [
        [[ONE, ZERO], [ZERO, -ONE]],
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, -I], [I, ZERO]],
    ]
}

pub fn dirac_matrices() -> DiracMatrixSet {
    let sigma = pauli();
    let alpha = std::array::from_fn(|l| {
        let mut a = Mat4::zeros();
        for r in 0..2 {
            for c in 0..2 {
                a[(r, c + 2)] = sigma[l][r][c];
                a[(r + 2, c)] = sigma[l][r][c];
            }
        }
        a
    });
    let beta = Mat4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, -ONE, -ONE));
    DiracMatrixSet { alpha, beta }
}

/// Applies `alpha_l` without forming the matrix.
#[inline]
pub fn apply_alpha(l: usize, psi: &Spinor4) -> Spinor4 {
    let [u1, u2, d1, d2] = psi.0;
    match l {
        0 => Spinor4([d1, -d2, u1, -u2]),
        1 => Spinor4([d2, d1, u2, u1]),
        2 => Spinor4([-I * d2, I * d1, -I * u2, I * u1]),
        _ => panic!("alpha index {l} out of range"),
    }
}

#[inline]
pub fn apply_beta(psi: &Spinor4) -> Spinor4 {
    let [u1, u2, d1, d2] = psi.0;
    Spinor4([u1, u2, -d1, -d2])
}

/// `sum_l alpha_l v_l` applied to `psi`, for a real 3-vector `v`.
#[inline]
pub fn apply_alpha_dot(v: &Vec3, psi: &Spinor4) -> Spinor4 {
    let [u1, u2, d1, d2] = psi.0;
    // sigma . v = [[v1, v2 - i v3], [v2 + i v3, -v1]]
    let vm = Complex64::new(v.y, -v.z);
    let vp = Complex64::new(v.y, v.z);
    Spinor4([
        d1 * v.x + vm * d2,
        vp * d1 - d2 * v.x,
        u1 * v.x + vm * u2,
        vp * u1 - u2 * v.x,
    ])
}

/// Probability 4-flux `(j0, j)` of a spinor value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FluxVector {
    pub j0: f64,
    pub j: Vec3,
}

impl FluxVector {
    pub const ZERO: FluxVector = FluxVector {
        j0: 0.0,
        j: Vec3::new(0.0, 0.0, 0.0),
    };
}

/// `j0 = <psi, psi>`, `j_l = <psi, alpha_l psi>`.
#[inline]
pub fn flux(psi: &Spinor4) -> FluxVector {
    let [u1, u2, d1, d2] = psi.0;
    // <u, sigma_l d> + <d, sigma_l u> = 2 Re <u, sigma_l d>
    let j1 = 2.0 * (u1.conj() * d1 - u2.conj() * d2).re;
    let j2 = 2.0 * (u1.conj() * d2 + u2.conj() * d1).re;
    let j3 = 2.0 * (u1.conj() * (-I * d2) + u2.conj() * (I * d1)).re;
    FluxVector {
        j0: psi.norm_sqr(),
        j: Vec3::new(j1, j2, j3),
    }
}

#[inline]
pub fn energy(k_sq: f64, m: f64) -> f64 {
    (k_sq + m * m).sqrt()
}

/// Normalised positive-energy eigenspinors at a momentum.
#[derive(Clone, Copy, Debug)]
pub struct SpinorBasisPair {
    pub s1: Spinor4,
    pub s2: Spinor4,
    pub k: Vec3,
    pub m: f64,
    pub energy: f64,
    /// `E_k + m`
    pub energy_hat: f64,
}

pub fn positive_spinors(k: &Vec3, m: f64) -> SpinorBasisPair {
    debug_assert!(m > 0.0, "positive_spinors requires m > 0");
    let e = energy(k.norm_squared(), m);
    let e_hat = e + m;
    let norm = 1.0 / (2.0 * e * e_hat).sqrt();
    let kp = Complex64::new(k.y, k.z);
    let km = Complex64::new(k.y, -k.z);
    let k1 = Complex64::from(k.x);
    let eh = Complex64::from(e_hat);
    SpinorBasisPair {
        s1: Spinor4([eh, ZERO, k1, kp]) * norm,
        s2: Spinor4([ZERO, eh, km, -k1]) * norm,
        k: *k,
        m,
        energy: e,
        energy_hat: e_hat,
    }
}

impl SpinorBasisPair {
    /// `f1 s1 + f2 s2`
    #[inline]
    pub fn combine(&self, f1: Complex64, f2: Complex64) -> Spinor4 {
        self.s1 * f1 + self.s2 * f2
    }

    pub fn get(&self, s: usize) -> &Spinor4 {
        match s {
            1 => &self.s1,
            2 => &self.s2,
            _ => panic!("spin channel must be 1 or 2, got {s}"),
        }
    }
}
