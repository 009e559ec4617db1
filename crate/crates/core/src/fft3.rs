//! In-place 3-D FFT on cubic arrays, row-major `(i * n + j) * n + l`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(n: usize) -> Fft3 {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalised inverse; divide by `n^3` to undo [`Fft3::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "array is not n^3");
        // contiguous last axis
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for stride in [n, n * n] {
            for base in 0..n * n {
                let (hi, lo) = if stride == n { (base / n, base % n) } else { (0, base) };
                let start = if stride == n { hi * n * n + lo } else { lo };
                for (q, v) in line.iter_mut().enumerate() {
                    *v = data[start + q * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (q, v) in line.iter().enumerate() {
                    data[start + q * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft_and_round_trips() {
        let n = 4;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut f = data.clone();
        let fft = Fft3::new(n);
        fft.forward(&mut f);
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        for (kidx, got) in f.iter().enumerate() {
            let (a, b, c) = (kidx / (n * n), (kidx / n) % n, kidx % n);
            let mut want = Complex64::new(0.0, 0.0);
            for (xidx, v) in data.iter().enumerate() {
                let (x, y, z) = (xidx / (n * n), (xidx / n) % n, xidx % n);
                want += v * Complex64::cis(-tau * (a * x + b * y + c * z) as f64);
            }
            assert!((got - want).norm() < 1e-12);
        }
        fft.inverse(&mut f);
        for (a, b) in f.iter().zip(&data) {
            assert!((a / (n * n * n) as f64 - b).norm() < 1e-14);
        }
    }
}
