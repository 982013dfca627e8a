//! Ring-polymer instanton: the index-1 saddle of `U_N` below the crossover
//! temperature, its Hessian spectrum, the centroid curvature frequency `η`
//! and the chain of inequalities that caps `η` at `2πk_BT/ħ`.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
use libm::{cos, sin, sqrt};

use crate::error::{invalid, Error, Result};
use crate::linalg::eigh;
use crate::potential::{Model, Position2, PotentialParams};
use crate::ring_polymer::RingPolymer;

/// How the saddle search is started.
#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy {
    /// Converge just below `T_c` from the collapsed saddle displaced by
    /// `delta · cos(2πi/N)` along the unstable direction, then walk down in
    /// temperature reusing each geometry.
    Continuation {
        delta: f64,
        start_fraction: f64,
        step_fraction: f64,
    },
    /// Same displacement, applied directly at the target temperature.
    Displaced { delta: f64 },
    /// Flat bead coordinates `[x₀, y₀, x₁, y₁, …]`.
    Geometry(Vec<f64>),
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Continuation {
            delta: 0.1,
            start_fraction: 0.99,
            step_fraction: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstantonConfig {
    pub init: InitStrategy,
    /// Target `‖∇U_N‖`.
    pub tol: f64,
    pub max_iterations: usize,
    pub trust_radius: f64,
    /// Eigenvalues with `|λ| < zero_mode_threshold · max|λ|` count as zero.
    pub zero_mode_threshold: f64,
}

impl Default for InstantonConfig {
    fn default() -> Self {
        InstantonConfig {
            init: InitStrategy::default(),
            tol: 1e-10,
            max_iterations: 500,
            trust_radius: 0.3,
            zero_mode_threshold: 1e-4,
        }
    }
}

impl InstantonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.trust_radius > 0.0) || !(self.zero_mode_threshold > 0.0) {
            return Err(invalid(
                "instanton",
                "tol, trust_radius and zero_mode_threshold must be positive",
            ));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        if let InitStrategy::Continuation {
            start_fraction,
            step_fraction,
            ..
        } = self.init
        {
            if !(0.0 < start_fraction && start_fraction < 1.0 && step_fraction > 0.0) {
                return Err(invalid(
                    "init",
                    "need 0 < start_fraction < 1 and step_fraction > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Classification of a Hessian spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianIndex {
    pub n_negative: usize,
    pub n_zero: usize,
    /// `|λ|` of the eigenvalue closest to zero.
    pub zero_mode_residual: f64,
    pub lowest: Vec<f64>,
    /// More than one eigenvalue fell inside the zero band.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstantonResult {
    /// `[x₀, y₀, x₁, y₁, …]`.
    pub geometry: Vec<f64>,
    pub action_value: f64,
    /// Ascending eigenvalues of the mass-weighted `2N × 2N` Hessian.
    pub hessian_spectrum: Vec<f64>,
    pub eta: f64,
    pub n_negative: usize,
    pub zero_mode_residual: f64,
    pub temperature: f64,
    pub n_beads: usize,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// At or above `T_c`: the beads sit on the classical saddle.
    pub collapsed: bool,
    pub index: HessianIndex,
}

impl InstantonResult {
    pub fn beads(&self) -> Vec<Position2> {
        self.geometry
            .chunks_exact(2)
            .map(|b| Position2::new(b[0], b[1]))
            .collect()
    }

    pub fn radius_of_gyration(&self) -> f64 {
        crate::ring_polymer::radius_of_gyration(&self.geometry)
    }
}

/// Sorted eigenvalues split into negative, zero-band and positive parts.
pub fn hessian_index(spectrum: &[f64], zero_mode_threshold: f64) -> HessianIndex {
    let scale = spectrum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let band = zero_mode_threshold * scale;
    let n_negative = spectrum.iter().filter(|v| **v < -band).count();
    let n_zero = spectrum.iter().filter(|v| v.abs() <= band).count();
    let zero_mode_residual = spectrum.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    HessianIndex {
        n_negative,
        n_zero,
        zero_mode_residual,
        lowest: spectrum.iter().take(4).copied().collect(),
        ambiguous: n_zero > 1,
    }
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

/// Unstable direction and `ω_b` of a saddle of `V`.
fn saddle_frequency<M: Model>(model: &M, saddle: Position2) -> Result<(f64, [f64; 2])> {
    let h = model.hessian(saddle);
    let (a, b, c) = (h[0][0], h[0][1], h[1][1]);
    let mid = 0.5 * (a + c);
    let rad = sqrt(0.25 * (a - c) * (a - c) + b * b);
    let low = mid - rad;
    if !(low < 0.0) || mid + rad <= 0.0 {
        return Err(invalid("saddle", "not an index-1 saddle of V"));
    }
    let dir = if b.abs() > 1e-300 {
        let v = [b, low - a];
        let n = norm(&v);
        [v[0] / n, v[1] / n]
    } else if a < c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    Ok((sqrt(-low / model.mass()), dir))
}

/// `η² = −(1/mN) Σ ∂²V/∂x²` over the beads.
fn eta_from_beads<M: Model>(model: &M, q: &[f64]) -> f64 {
    let n = q.len() / 2;
    let s: f64 = q
        .chunks_exact(2)
        .map(|b| model.hessian(Position2::new(b[0], b[1]))[0][0])
        .sum();
    let e2 = -s / (model.mass() * n as f64);
    if e2 >= 0.0 {
        sqrt(e2)
    } else {
        -sqrt(-e2)
    }
}

/// Eigenvector-following Newton search for an index-1 stationary point.
/// Each step walks uphill along the lowest Hessian mode and downhill along
/// the rest, clipped to the trust radius.
fn saddle_search<M: Model>(
    rp: &RingPolymer<M>,
    mut q: Vec<f64>,
    cfg: &InstantonConfig,
) -> Result<(Vec<f64>, f64, usize)> {
    let d = q.len();
    let mut grad: Vec<f64> = rp.rp_force(&q).iter().map(|f| -f).collect();
    let mut gnorm = norm(&grad);
    let mut it = 0;
    while gnorm >= cfg.tol {
        if it == cfg.max_iterations || !gnorm.is_finite() {
            return Err(Error::InstantonNonConvergence {
                iterations: it,
                grad_norm: gnorm,
            });
        }
        let eig = eigh(rp.rp_hessian(&q), d);
        let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-10 * scale;
        let mut step = vec![0.0; d];
        for (j, &lam) in eig.values.iter().enumerate() {
            let v = eig.vector(j);
            let c: f64 = v.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let b = if j == 0 {
                -lam.abs().max(floor)
            } else {
                lam.abs().max(floor)
            };
            for (s, vi) in step.iter_mut().zip(v) {
                *s -= c / b * vi;
            }
        }
        let len = norm(&step);
        if len > cfg.trust_radius {
            step.iter_mut().for_each(|s| *s *= cfg.trust_radius / len);
        }
        q.iter_mut().zip(&step).for_each(|(x, s)| *x += s);
        grad = rp.rp_force(&q).iter().map(|f| -f).collect();
        gnorm = norm(&grad);
        it += 1;
    }
    Ok((q, gnorm, it))
}

fn displaced<M: Model>(model: &M, saddle: Position2, n: usize, delta: f64) -> Result<Vec<f64>> {
    let (_, dir) = saddle_frequency(model, saddle)?;
    let mut q = vec![0.0; 2 * n];
    for i in 0..n {
        let a = delta * cos(2.0 * PI * i as f64 / n as f64);
        q[2 * i] = saddle.x + a * dir[0];
        q[2 * i + 1] = saddle.y + a * dir[1];
    }
    Ok(q)
}

fn finish<M: Model>(
    rp: &RingPolymer<M>,
    q: Vec<f64>,
    temperature: f64,
    gradient_norm: f64,
    iterations: usize,
    collapsed: bool,
    cfg: &InstantonConfig,
) -> InstantonResult {
    let d = q.len();
    let m = rp.model.mass();
    let mut spectrum = eigh(rp.rp_hessian(&q), d).values;
    spectrum.iter_mut().for_each(|v| *v /= m);
    let index = hessian_index(&spectrum, cfg.zero_mode_threshold);
    InstantonResult {
        action_value: rp.u_n(&q),
        eta: eta_from_beads(&rp.model, &q),
        n_negative: index.n_negative,
        zero_mode_residual: index.zero_mode_residual,
        hessian_spectrum: spectrum,
        temperature,
        n_beads: rp.n_beads(),
        gradient_norm,
        iterations,
        collapsed,
        index,
        geometry: q,
    }
}

/// Instanton of `model` around the barrier saddle `saddle` of `V`.
pub fn find_instanton_at<M: Model>(
    model: &M,
    saddle: Position2,
    temperature: f64,
    n_beads: usize,
    cfg: &InstantonConfig,
) -> Result<InstantonResult> {
    cfg.validate()?;
    if n_beads < 32 || n_beads % 2 != 0 {
        return Err(invalid(
            "n_beads",
            "instanton searches need an even N >= 32",
        ));
    }
    let (omega_b, _) = saddle_frequency(model, saddle)?;
    let t_c = model.hbar() * omega_b / (2.0 * PI * model.k_b());
    let rp = RingPolymer::new(model, n_beads, temperature)?;
    if temperature >= t_c {
        let q: Vec<f64> = (0..n_beads).flat_map(|_| [saddle.x, saddle.y]).collect();
        let g = norm(&rp.rp_force(&q));
        return Ok(finish(&rp, q, temperature, g, 0, true, cfg));
    }
    let (q0, ladder) = match &cfg.init {
        InitStrategy::Continuation {
            delta,
            start_fraction,
            step_fraction,
        } => {
            let mut ts = Vec::new();
            let mut t = (start_fraction * t_c).max(temperature);
            while t > temperature {
                ts.push(t);
                t -= step_fraction * t_c;
            }
            ts.push(temperature);
            (displaced(model, saddle, n_beads, *delta)?, ts)
        }
        InitStrategy::Displaced { delta } => (
            displaced(model, saddle, n_beads, *delta)?,
            vec![temperature],
        ),
        InitStrategy::Geometry(g) => {
            if g.len() != 2 * n_beads {
                return Err(invalid("init", "geometry length must be 2N"));
            }
            (g.clone(), vec![temperature])
        }
    };
    let mut q = q0;
    let mut last = (0.0, 0);
    for &t in &ladder {
        let step_rp = RingPolymer::new(model, n_beads, t)?;
        let (qn, g, it) = saddle_search(&step_rp, q, cfg)?;
        q = qn;
        last = (g, last.1 + it);
    }
    let res = finish(&rp, q, temperature, last.0, last.1, false, cfg);
    if res.n_negative != 1 {
        return Err(Error::WrongSaddleIndex {
            n_negative: res.n_negative,
        });
    }
    Ok(res)
}

/// Instanton of the double well around its barrier saddle at the origin.
pub fn find_instanton(
    params: &PotentialParams,
    temperature: f64,
    n_beads: usize,
    cfg: &InstantonConfig,
) -> Result<InstantonResult> {
    find_instanton_at(params, Position2::new(0.0, 0.0), temperature, n_beads, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    /// `η` from the explicit bead sum.
    pub eta: f64,
    /// `η` from the centroid projection of the full Hessian.
    pub eta_projected: f64,
    /// `2πk_BT/ħ`.
    pub bound: f64,
    /// Lowest free ring-polymer frequency `ω₁,N`, the finite-`N` cap on `η`.
    pub finite_n_bound: f64,
    /// `∂²U/∂X₁² + ∂²U/∂X₁̄²` projected from the Hessian.
    pub orthogonal_mode_sum: f64,
    /// The same from `(2/N) Σ ∂²V/∂x² + 2mω₁,N²`.
    pub orthogonal_mode_sum_closed: f64,
    pub satisfied: bool,
    pub finite_n_satisfied: bool,
}

/// Evaluates the chain `orthogonal-mode curvature ≥ 0 ⇒ η ≤ ω₁,N < 2πk_BT/ħ`
/// at a converged geometry. A negative curvature or a violated bound is an
/// error: either the search or the theory failed.
pub fn bound_check<M: Model>(result: &InstantonResult, model: &M) -> Result<BoundReport> {
    let n = result.n_beads;
    let q = &result.geometry;
    let rp = RingPolymer::new(model, n, result.temperature)?;
    let m = model.mass();
    let h = rp.rp_hessian(q);
    let d = 2 * n;
    let project = |v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            if v[i] == 0.0 {
                continue;
            }
            s += v[i]
                * h[i * d..(i + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
        s
    };
    let mut centroid = vec![0.0; d];
    let mut s1 = vec![0.0; d];
    let mut c1 = vec![0.0; d];
    let norm1 = sqrt(2.0 / n as f64);
    for i in 0..n {
        let th = 2.0 * PI * i as f64 / n as f64;
        centroid[2 * i] = 1.0 / sqrt(n as f64);
        s1[2 * i] = norm1 * sin(th);
        c1[2 * i] = norm1 * cos(th);
    }
    let h00 = project(&centroid);
    let eta_projected = if h00 <= 0.0 {
        sqrt(-h00 / m)
    } else {
        -sqrt(h00 / m)
    };
    let w1 = rp.free_frequency(1);
    let vxx: f64 = q
        .chunks_exact(2)
        .map(|b| model.hessian(Position2::new(b[0], b[1]))[0][0])
        .sum();
    let report = BoundReport {
        eta: result.eta,
        eta_projected,
        bound: 2.0 * PI * model.k_b() * result.temperature / model.hbar(),
        finite_n_bound: w1,
        orthogonal_mode_sum: project(&s1) + project(&c1),
        orthogonal_mode_sum_closed: 2.0 * vxx / n as f64 + 2.0 * m * w1 * w1,
        satisfied: false,
        finite_n_satisfied: false,
    };
    let slack = 1e-9;
    let report = BoundReport {
        satisfied: report.eta <= report.bound * (1.0 + slack),
        finite_n_satisfied: report.eta <= report.finite_n_bound * (1.0 + slack),
        ..report
    };
    if result.collapsed {
        // above T_c the bound is ω_b ≤ 2πk_BT/ħ by definition of T_c
        if !report.satisfied {
            return Err(Error::BoundViolation {
                eta: report.eta,
                bound: report.bound,
            });
        }
        return Ok(report);
    }
    if report.orthogonal_mode_sum < -1e-8 {
        return Err(Error::NegativeOrthogonalCurvature {
            sum: report.orthogonal_mode_sum,
        });
    }
    if !report.satisfied {
        return Err(Error::BoundViolation {
            eta: report.eta,
            bound: report.bound,
        });
    }
    Ok(report)
}
