//! Spherical Bessel functions and orthonormal spherical harmonics.

use num_complex::Complex64;

/// `j_0(x) ..= j_lmax(x)`.
///
/// Upward recurrence is used when `x > lmax` (stable there); otherwise a
/// Miller downward recurrence normalised by `sum (2l+1) j_l^2 = 1`.
pub fn spherical_bessel_array(lmax: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(lmax + 1, 0.0);
    let ax = x.abs();
    if ax < 1e-6 {
        // leading series terms: x^l / (2l+1)!! * (1 - x^2 / (2(2l+3)))
        let mut t = 1.0;
        for (l, o) in out.iter_mut().enumerate() {
            if l > 0 {
                t *= x / (2 * l + 1) as f64;
            }
            *o = t * (1.0 - x * x / (2.0 * (2 * l + 3) as f64));
        }
        return;
    }
    if ax > lmax as f64 {
        let (s, c) = x.sin_cos();
        out[0] = s / x;
        if lmax >= 1 {
            out[1] = s / (x * x) - c / x;
        }
        for l in 1..lmax {
            out[l + 1] = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
        }
        return;
    }
    let start = lmax + 20 + (ax.sqrt() * 4.0) as usize + ax as usize;
    let mut jp1 = 0.0;
    let mut j = 1e-30;
    let mut norm = 0.0;
    for l in (0..=start).rev() {
        if l <= lmax {
            out[l] = j;
        }
        norm += (2 * l + 1) as f64 * j * j;
        let jm1 = (2 * l + 1) as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if jp1.abs() > 1e100 {
            // rescale to stay in range
            let s = 1e-100;
            jp1 *= s;
            j *= s;
            norm *= s * s;
            for o in out.iter_mut() {
                *o *= s;
            }
        }
    }
    let scale = 1.0 / norm.sqrt();
    // fix the overall sign against j_0
    let sign = if (x.sin() / x) * out[0] < 0.0 { -1.0 } else { 1.0 };
    for o in out.iter_mut() {
        *o *= scale * sign;
    }
}

pub fn spherical_bessel(l: usize, x: f64) -> f64 {
    let mut v = Vec::new();
    spherical_bessel_array(l, x, &mut v);
    v[l]
}

/// Index of `(l, m)`, `0 <= m <= l`, in a packed triangular table.
#[inline]
pub fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Orthonormal associated Legendre values `Pbar_l^m(u)` for `0 <= m <= l <= lmax`,
/// such that `Y_lm(theta, phi) = Pbar_l^m(cos theta) e^{i m phi}` is orthonormal
/// on the unit sphere (Condon-Shortley phase included).
pub fn normalized_legendre(lmax: usize, u: f64, out: &mut Vec<f64>) {
    let n = tri_index(lmax, lmax) + 1;
    out.clear();
    out.resize(n, 0.0);
    let s = (1.0 - u * u).max(0.0).sqrt();
    let mut pmm = (1.0 / (4.0 * std::f64::consts::PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[tri_index(m, m)] = pmm;
        if m == lmax {
            break;
        }
        let mut p_lm2 = pmm;
        let mut p_lm1 = (2.0 * m as f64 + 3.0).sqrt() * u * pmm;
        out[tri_index(m + 1, m)] = p_lm1;
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p = a * (u * p_lm1 - b * p_lm2);
            out[tri_index(l, m)] = p;
            p_lm2 = p_lm1;
            p_lm1 = p;
        }
    }
}

/// `Y_lm` for all `|m| <= l <= lmax` at polar cosine `u` and azimuth `phi`,
/// laid out as `l*l + (m + l)`.
pub fn spherical_harmonics(lmax: usize, u: f64, phi: f64) -> Vec<Complex64> {
    let mut p = Vec::new();
    normalized_legendre(lmax, u, &mut p);
    let mut y = vec![Complex64::new(0.0, 0.0); (lmax + 1) * (lmax + 1)];
    for l in 0..=lmax {
        for m in 0..=l {
            let v = Complex64::from_polar(p[tri_index(l, m)], m as f64 * phi);
            y[l * l + l + m] = v;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                y[l * l + l - m] = v.conj() * sign;
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from scipy.special.spherical_jn
    const JL_REF: &[(usize, f64, f64)] = &[
        (0, 0.5, 0.958851077208406),
        (1, 0.5, 0.1625370306360667),
        (5, 0.5, 2.97746687545745e-06),
        (0, 10.0, -0.05440211108893698),
        (3, 10.0, -0.03949584498447033),
        (10, 10.0, 0.06460515449256397),
        (20, 10.0, 2.308371961319455e-06),
        (26, 3.0, 1.482664523005864e-23),
        (4, 300.0, -0.0033333081432855194),
        (26, 300.0, 0.0013683849579157188),
        (26, 26.5, 0.036521856039445307),
    ];

    #[test]
    fn spherical_bessel_matches_reference() {
        for &(l, x, want) in JL_REF {
            let mut v = Vec::new();
            spherical_bessel_array(26, x, &mut v);
            let got = v[l];
            assert!(
                (got - want).abs() <= 1e-11 * want.abs(),
                "j_{l}({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn small_argument_branches_agree() {
        // recurrence branch just above the series cut-off vs the leading series term
        let x = 1.001e-6;
        let mut v = Vec::new();
        spherical_bessel_array(6, x, &mut v);
        let mut dfact = 1.0;
        for (l, got) in v.iter().enumerate() {
            if l > 0 {
                dfact *= (2 * l + 1) as f64;
            }
            let want = x.powi(l as i32) / dfact;
            assert!((got - want).abs() <= 1e-10 * want, "l={l} {got} {want}");
        }
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let lmax = 6;
        let ru = crate::quadrature::gauss_legendre(lmax + 1);
        let nphi = 2 * lmax + 1;
        let n = (lmax + 1) * (lmax + 1);
        let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
        for (u, wu) in ru.nodes.iter().zip(&ru.weights) {
            for p in 0..nphi {
                let phi = 2.0 * std::f64::consts::PI * p as f64 / nphi as f64;
                let y = spherical_harmonics(lmax, *u, phi);
                let w = wu * 2.0 * std::f64::consts::PI / nphi as f64;
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += y[a].conj() * y[b] * w;
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn addition_theorem() {
        // sum_m Y_lm(a)^* Y_lm(b) = (2l+1)/(4 pi) P_l(a.b)
        let lmax = 8;
        let (ua, pa) = (0.3f64, 1.1f64);
        let (ub, pb) = (-0.7f64, 2.5f64);
        let ya = spherical_harmonics(lmax, ua, pa);
        let yb = spherical_harmonics(lmax, ub, pb);
        let dot = ua * ub + (1.0 - ua * ua).sqrt() * (1.0 - ub * ub).sqrt() * (pa - pb).cos();
        let mut p0 = 1.0;
        let mut p1 = dot;
        for l in 0..=lmax {
            let pl = match l {
                0 => 1.0,
                1 => dot,
                _ => {
                    let p2 = ((2 * l - 1) as f64 * dot * p1 - (l - 1) as f64 * p0) / l as f64;
                    p0 = p1;
                    p1 = p2;
                    p2
                }
            };
            let s: Complex64 = (0..(2 * l + 1)).map(|i| ya[l * l + i].conj() * yb[l * l + i]).sum();
            let want = (2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * pl;
            assert!((s - want).norm() < 1e-13, "l={l}");
        }
    }
}
