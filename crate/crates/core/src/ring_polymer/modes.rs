//! Orthogonal Fourier transform to free ring-polymer normal modes.
//!
//! Mode 0 is `√N` times the centroid; modes `2j − 1` and `2j` are the sine
//! and cosine combinations of order `j`, `√(2/N) Σ_i {sin, cos}(2π i j / N) q_i`;
//! for even `N` the last mode is the alternating one, `Σ_i (−1)^i q_i / √N`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, sin, sqrt};

#[derive(Clone, Debug)]
pub struct NormalModes {
    n: usize,
    /// Row `k` holds the coefficients of mode `k` over the beads.
    matrix: Vec<f64>,
    order: Vec<usize>,
}

impl NormalModes {
    pub fn new(n: usize) -> Self {
        let mut matrix = vec![0.0; n * n];
        let mut order = vec![0; n];
        let nf = n as f64;
        for i in 0..n {
            matrix[i] = 1.0 / sqrt(nf);
        }
        let pairs = (n - 1) / 2;
        for j in 1..=pairs {
            for i in 0..n {
                let a = 2.0 * PI * (i * j) as f64 / nf;
                matrix[(2 * j - 1) * n + i] = sqrt(2.0 / nf) * sin(a);
                matrix[(2 * j) * n + i] = sqrt(2.0 / nf) * cos(a);
            }
            order[2 * j - 1] = j;
            order[2 * j] = j;
        }
        if n % 2 == 0 && n > 1 {
            for i in 0..n {
                matrix[(n - 1) * n + i] = if i % 2 == 0 { 1.0 } else { -1.0 } / sqrt(nf);
            }
            order[n - 1] = n / 2;
        }
        NormalModes { n, matrix, order }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fourier order `j` of mode `k`, so its free frequency is
    /// `(2/β_Nħ) sin(jπ/N)`.
    pub fn order(&self, k: usize) -> usize {
        self.order[k]
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.n..(k + 1) * self.n]
    }

    /// Transforms coordinate `c` (0 for `x`, 1 for `y`) of flat bead data
    /// into modes.
    pub fn forward(&self, beads: &[f64], c: usize, modes: &mut [f64]) {
        for (k, out) in modes.iter_mut().enumerate().take(self.n) {
            let row = self.coefficients(k);
            *out = row
                .iter()
                .enumerate()
                .map(|(i, a)| a * beads[2 * i + c])
                .sum();
        }
    }

    /// Inverse of [`forward`](Self::forward), writing coordinate `c`.
    pub fn backward(&self, modes: &[f64], c: usize, beads: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for (k, m) in modes.iter().enumerate().take(self.n) {
                s += self.matrix[k * self.n + i] * m;
            }
            beads[2 * i + c] = s;
        }
    }
}
