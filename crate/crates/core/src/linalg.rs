//! Dense symmetric eigensolver.
//!
//! Householder reduction to tridiagonal form, Sturm-sequence bisection for
//! the requested lowest eigenvalues, inverse iteration on the tridiagonal
//! matrix (Gram–Schmidt within clusters of close eigenvalues) and a final
//! back-transformation through the stored reflectors. Cost is dominated by
//! the `4n³/3` reduction; only the `k` wanted vectors are ever formed.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

/// Eigenpairs in ascending order. `vectors` holds one eigenvector per row.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub dim: usize,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }
}

/// Symmetric tridiagonal matrix: `diag[i]`, and `off[i]` coupling `i` and `i + 1`.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

struct Reduction {
    tri: Tridiagonal,
    /// Row `k` (from column `k + 1` on) stores the reflector vector `v_k`.
    reflectors: Vec<f64>,
    tau: Vec<f64>,
    n: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reduces the full row-major symmetric matrix `a` (consumed) to tridiagonal form.
fn tridiagonalize(mut a: Vec<f64>, n: usize) -> Reduction {
    assert_eq!(a.len(), n * n, "matrix must be n×n");
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut tau = vec![0.0; n.saturating_sub(1)];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(1) {
        diag[k] = a[k * n + k];
        let m = n - k - 1;
        let row = k * n + k + 1;
        let alpha = a[row];
        let xnorm2: f64 = a[row + 1..row + m].iter().map(|v| v * v).sum();
        if xnorm2 == 0.0 {
            off[k] = alpha;
            tau[k] = 0.0;
            a[row] = 1.0;
            continue;
        }
        let norm = sqrt(alpha * alpha + xnorm2);
        let beta = if alpha >= 0.0 { -norm } else { norm };
        let t = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        for v in &mut a[row + 1..row + m] {
            *v *= scale;
        }
        a[row] = 1.0;
        off[k] = beta;
        tau[k] = t;

        let v: Vec<f64> = a[row..row + m].to_vec();
        // p = τ A22 v
        for (i, pi) in p[..m].iter_mut().enumerate() {
            let r = (k + 1 + i) * n + k + 1;
            *pi = t * dot(&a[r..r + m], &v);
        }
        // w = p − (τ/2)(pᵀv) v ; A22 −= v wᵀ + w vᵀ
        let c = 0.5 * t * dot(&p[..m], &v);
        for (pi, vi) in p[..m].iter_mut().zip(&v) {
            *pi -= c * vi;
        }
        for i in 0..m {
            let r = (k + 1 + i) * n + k + 1;
            let (vi, wi) = (v[i], p[i]);
            for ((aij, vj), wj) in a[r..r + m].iter_mut().zip(&v).zip(&p[..m]) {
                *aij -= vi * wj + wi * vj;
            }
        }
    }
    if n > 0 {
        diag[n - 1] = a[(n - 1) * n + n - 1];
    }
    Reduction {
        tri: Tridiagonal { diag, off },
        reflectors: a,
        tau,
        n,
    }
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.dim();
        let tiny = libm::sqrt(f64::MIN_POSITIVE);
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..n {
            if i > 0 {
                let e = self.off[i - 1];
                q = self.diag[i] - x - e * e / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k` lowest eigenvalues by bisection.
    pub fn lowest_values(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = self.gershgorin();
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let (lo, hi) = (lo - 1e-10 * span, hi + 1e-10 * span);
        let mut out = Vec::with_capacity(k);
        let mut left = lo;
        for j in 0..k.min(self.dim()) {
            // smallest x with count_below(x) > j
            let (mut a, mut b) = (left, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if self.count_below(mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let value = 0.5 * (a + b);
            let value = out.last().map_or(value, |&last: &f64| value.max(last));
            out.push(value);
            left = a;
        }
        out
    }

    /// Solves `(T − λ I) y = x` in place by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, lambda: f64, x: &mut [f64], pivot_floor: f64) {
        let n = self.dim();
        if n == 1 {
            let d = self.diag[0] - lambda;
            x[0] /= if d.abs() < pivot_floor {
                pivot_floor
            } else {
                d
            };
            return;
        }
        // rows carry (diag, super1, super2) after elimination
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];

        let mut cur_d = self.diag[0] - lambda;
        let mut cur_s1 = self.off[0];
        let mut cur_s2 = 0.0;
        for i in 0..n - 1 {
            let sub = self.off[i];
            let nd = self.diag[i + 1] - lambda;
            let ns1 = if i + 1 < n - 1 { self.off[i + 1] } else { 0.0 };
            if sub.abs() > cur_d.abs() {
                // pivot: swap row i with row i + 1
                swapped[i] = true;
                u0[i] = sub;
                u1[i] = nd;
                u2[i] = ns1;
                let m = cur_d / sub;
                mult[i] = m;
                cur_d = cur_s1 - m * nd;
                cur_s1 = cur_s2 - m * ns1;
                cur_s2 = 0.0;
            } else {
                let piv = if cur_d.abs() < pivot_floor {
                    pivot_floor
                } else {
                    cur_d
                };
                u0[i] = piv;
                u1[i] = cur_s1;
                u2[i] = cur_s2;
                let m = sub / piv;
                mult[i] = m;
                cur_d = nd - m * cur_s1;
                cur_s1 = ns1;
                cur_s2 = 0.0;
            }
        }
        u0[n - 1] = if cur_d.abs() < pivot_floor {
            pivot_floor
        } else {
            cur_d
        };

        for i in 0..n - 1 {
            if swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * x[i + 2];
            }
            x[i] = s / u0[i];
        }
    }

    /// Eigenvectors for the given (ascending) eigenvalues by inverse iteration.
    pub fn vectors_for(&self, values: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let norm = self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max)
            + 2.0 * self.off.iter().map(|e| e.abs()).fold(0.0, f64::max);
        let norm = norm.max(f64::MIN_POSITIVE);
        let eps = f64::EPSILON;
        let cluster_gap = 1e-3 * norm;
        let pivot_floor = eps * norm;

        let mut out = vec![0.0; values.len() * n];
        let mut cluster_start = 0;
        let mut prev_shift = f64::NEG_INFINITY;
        let mut seed: u64 = 0x9E37_79B9_7F4A_7C15;
        for (j, &lam) in values.iter().enumerate() {
            if j > 0 && lam - values[j - 1] > cluster_gap {
                cluster_start = j;
            }
            let mut shift = lam;
            if j > cluster_start && shift - prev_shift < 10.0 * eps * norm {
                shift = prev_shift + 10.0 * eps * norm;
            }
            prev_shift = shift;

            let mut x: Vec<f64> = (0..n)
                .map(|_| {
                    seed ^= seed << 13;
                    seed ^= seed >> 7;
                    seed ^= seed << 17;
                    (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            for _ in 0..6 {
                let xn = sqrt(dot(&x, &x));
                for v in &mut x {
                    *v /= xn;
                }
                self.shifted_solve(shift, &mut x, pivot_floor);
                for c in cluster_start..j {
                    let prev = &out[c * n..(c + 1) * n];
                    let proj = dot(&x, prev);
                    for (v, p) in x.iter_mut().zip(prev) {
                        *v -= proj * p;
                    }
                }
            }
            let xn = sqrt(dot(&x, &x));
            for (o, v) in out[j * n..(j + 1) * n].iter_mut().zip(&x) {
                *o = v / xn;
            }
        }
        out
    }
}

impl Reduction {
    /// Applies `Q = H_0 H_1 ⋯ H_{n−2}` to each row vector in `vecs`.
    fn back_transform(&self, vecs: &mut [f64]) {
        let n = self.n;
        let count = vecs.len() / n.max(1);
        for k in (0..n.saturating_sub(1)).rev() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            let row = k * n + k + 1;
            let v = &self.reflectors[row..row + n - k - 1];
            for j in 0..count {
                let x = &mut vecs[j * n + k + 1..(j + 1) * n];
                let s = t * dot(v, x);
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi -= s * vi;
                }
            }
        }
    }
}

/// A symmetric matrix after tridiagonal reduction. Any number of the
/// lowest eigenpairs can be drawn from it without repeating the `O(n³)` step.
pub struct Reduced(Reduction);

impl Reduced {
    /// Reduces the full row-major symmetric `n×n` matrix `a`.
    pub fn new(a: Vec<f64>, n: usize) -> Self {
        Reduced(tridiagonalize(a, n))
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        if self.0.n == 0 {
            return 0;
        }
        self.0.tri.count_below(x)
    }

    pub fn lowest(&self, k: usize) -> EigenPairs {
        let n = self.0.n;
        let k = k.min(n);
        if k == 0 {
            return EigenPairs {
                values: Vec::new(),
                vectors: Vec::new(),
                dim: n,
            };
        }
        let values = self.0.tri.lowest_values(k);
        let mut vectors = self.0.tri.vectors_for(&values);
        self.0.back_transform(&mut vectors);
        EigenPairs {
            values,
            vectors,
            dim: n,
        }
    }
}

/// Lowest `k` eigenpairs of the full row-major symmetric `n×n` matrix `a`.
pub fn eigh_lowest(a: Vec<f64>, n: usize, k: usize) -> EigenPairs {
    if n == 0 {
        return EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
            dim: 0,
        };
    }
    Reduced::new(a, n).lowest(k)
}

/// All eigenpairs of a symmetric matrix.
pub fn eigh(a: Vec<f64>, n: usize) -> EigenPairs {
    eigh_lowest(a, n, n)
}

/// `‖A v − λ v‖₂` for a dense row-major matrix.
pub fn residual(a: &[f64], n: usize, value: f64, v: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..n {
        let av = dot(&a[i * n..(i + 1) * n], v);
        let d = av - value * v[i];
        r2 += d * d;
    }
    sqrt(r2)
}
