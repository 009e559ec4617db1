//! One-dimensional quadrature rules, compensated summation and
//! barycentric interpolation.

use num_complex::Complex64;

use crate::spinor::Spinor4;

/// Nodes and weights of a 1-D rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut s = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(*x));
        }
        s.value()
    }

    /// Affine map of a rule on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn concat(rules: &[Rule]) -> Rule {
        let mut out = Rule {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for r in rules {
            out.nodes.extend_from_slice(&r.nodes);
            out.weights.extend_from_slice(&r.weights);
        }
        out
    }

    /// Largest gap between consecutive nodes (nodes assumed sorted).
    pub fn max_gap(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Gauss-Legendre rule on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre with `order` nodes on every panel between
/// consecutive `breaks`.
pub fn composite_gauss_legendre(breaks: &[f64], order: usize) -> Rule {
    let base = gauss_legendre(order);
    let panels: Vec<Rule> = breaks.windows(2).map(|w| base.mapped(w[0], w[1])).collect();
    Rule::concat(&panels)
}

/// Uniform panel breaks on `[a, b]` with panel width at most `max_width`.
pub fn uniform_breaks(a: f64, b: f64, max_width: f64) -> Vec<f64> {
    let n = (((b - a) / max_width).ceil() as usize).max(1);
    (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect()
}

/// Composite Simpson rule with `intervals` (even, rounded up) sub-intervals.
pub fn simpson(a: f64, b: f64, intervals: usize) -> Rule {
    let n = intervals.max(2);
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let nodes = (0..=n).map(|i| if i == n { b } else { a + h * i as f64 }).collect();
    let weights = (0..=n)
        .map(|i| {
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    Rule { nodes, weights }
}

pub fn trapezoid(a: f64, b: f64, n_nodes: usize) -> Rule {
    assert!(n_nodes >= 2);
    let h = (b - a) / (n_nodes - 1) as f64;
    let nodes = (0..n_nodes).map(|i| a + h * i as f64).collect();
    let weights = (0..n_nodes)
        .map(|i| if i == 0 || i == n_nodes - 1 { 0.5 * h } else { h })
        .collect();
    Rule { nodes, weights }
}

/// Chebyshev points of the second kind on `[a, b]`, ascending.
pub fn chebyshev_points(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|j| {
            let x = -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * x
        })
        .collect()
}

/// Barycentric weights for polynomial interpolation on arbitrary nodes.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let scale = (nodes[n - 1] - nodes[0]).abs().max(f64::MIN_POSITIVE) / 4.0;
    (0..n)
        .map(|j| {
            let mut p = 1.0;
            for k in 0..n {
                if k != j {
                    p *= (nodes[j] - nodes[k]) / scale;
                }
            }
            1.0 / p
        })
        .collect()
}

/// Coefficients `c_j` with `p(x) = sum_j c_j y_j` for the interpolant
/// through `(nodes, y)`.
pub fn barycentric_coefficients(nodes: &[f64], bw: &[f64], x: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&xn| xn == x) {
        let mut c = vec![0.0; nodes.len()];
        c[j] = 1.0;
        return c;
    }
    let terms: Vec<f64> = nodes.iter().zip(bw).map(|(xn, w)| w / (x - xn)).collect();
    let denom: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / denom).collect()
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SpinorSum {
    parts: [ComplexSum; 4],
}

impl SpinorSum {
    #[inline]
    pub fn add(&mut self, s: &Spinor4) {
        for (p, c) in self.parts.iter_mut().zip(s.0.iter()) {
            p.add(*c);
        }
    }

    pub fn value(&self) -> Spinor4 {
        Spinor4(std::array::from_fn(|i| self.parts[i].value()))
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = NeumaierSum::default();
    for x in it {
        s.add(x);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33, 64] {
            let r = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = r.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn gauss_legendre_known_nodes() {
        let r = gauss_legendre(3);
        assert_relative_eq!(r.nodes[2], (0.6f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.weights[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn composite_rule_handles_oscillation() {
        let w = 200.0;
        let r = composite_gauss_legendre(&uniform_breaks(0.0, 3.0, 16.0 / w), 24);
        let got = r.integrate(|x| (w * x).cos());
        assert!((got - (3.0 * w).sin() / w).abs() < 1e-13);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let r = simpson(-1.0, 2.0, 6);
        assert_relative_eq!(r.integrate(|x| x * x * x - x), 3.75 - 1.5, epsilon = 1e-13);
    }

    #[test]
    fn barycentric_reproduces_polynomial() {
        let nodes = chebyshev_points(0.0, 5.0, 9);
        let bw = barycentric_weights(&nodes);
        let f = |x: f64| 1.0 - 2.0 * x + 0.3 * x.powi(5);
        let y: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        for x in [0.1, 1.7, 4.99] {
            let c = barycentric_coefficients(&nodes, &bw, x);
            let p: f64 = c.iter().zip(&y).map(|(c, y)| c * y).sum();
            assert_relative_eq!(p, f(x), epsilon = 1e-11, max_relative = 1e-12);
        }
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let s = compensated_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }
}
