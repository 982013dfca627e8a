//! Small statistics helpers: running moments and least squares.

use libm::sqrt;

/// Welford accumulator for mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Combines two accumulators (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            sqrt(self.variance() / self.n as f64)
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Ordinary least-squares line `y = intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

/// Running sums for O(1) least squares over any contiguous range.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    sx: alloc::vec::Vec<f64>,
    sy: alloc::vec::Vec<f64>,
    sxx: alloc::vec::Vec<f64>,
    sxy: alloc::vec::Vec<f64>,
    syy: alloc::vec::Vec<f64>,
}

impl PrefixSums {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len().min(y.len());
        let mut s = PrefixSums {
            sx: alloc::vec![0.0; n + 1],
            sy: alloc::vec![0.0; n + 1],
            sxx: alloc::vec![0.0; n + 1],
            sxy: alloc::vec![0.0; n + 1],
            syy: alloc::vec![0.0; n + 1],
        };
        for i in 0..n {
            s.sx[i + 1] = s.sx[i] + x[i];
            s.sy[i + 1] = s.sy[i] + y[i];
            s.sxx[i + 1] = s.sxx[i] + x[i] * x[i];
            s.sxy[i + 1] = s.sxy[i] + x[i] * y[i];
            s.syy[i + 1] = s.syy[i] + y[i] * y[i];
        }
        s
    }

    /// Fit over indices `lo..hi`.
    pub fn fit(&self, lo: usize, hi: usize) -> Option<LineFit> {
        let n = hi.checked_sub(lo)?;
        if n < 3 {
            return None;
        }
        let nf = n as f64;
        let sx = self.sx[hi] - self.sx[lo];
        let sy = self.sy[hi] - self.sy[lo];
        let sxx = (self.sxx[hi] - self.sxx[lo]) - sx * sx / nf;
        let sxy = (self.sxy[hi] - self.sxy[lo]) - sx * sy / nf;
        let syy = (self.syy[hi] - self.syy[lo]) - sy * sy / nf;
        if sxx <= 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let intercept = (sy - slope * sx) / nf;
        let sse = (syy - slope * sxy).max(0.0);
        let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
        let slope_stderr = sqrt(sse / (nf - 2.0) / sxx);
        Some(LineFit {
            slope,
            intercept,
            r_squared,
            slope_stderr,
            n,
        })
    }
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    PrefixSums::new(x, y).fit(0, x.len().min(y.len()))
}
