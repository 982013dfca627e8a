//! Production trajectories: centroid stability recording and surface-of-
//! section crossings. Shared by the classical (one-bead) and ring-polymer
//! paths so both run identical arithmetic.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, log};

use crate::error::{invalid, Error, Result};
use crate::integrator::{Dynamics, Tangent, Yoshida4};
use crate::ring_polymer::{centroid, radius_of_gyration};

/// Time grid of a production run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Propagation {
    /// Integration step; a negative value propagates backwards.
    pub dt: f64,
    pub t_max: f64,
    /// Integration steps between recorded samples.
    pub stride: usize,
}

impl Propagation {
    pub fn new(dt: f64, t_max: f64, stride: usize) -> Result<Self> {
        let p = Propagation { dt, t_max, stride };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt != 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be finite and nonzero"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid("t_max", "must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of recorded samples including `t = 0`.
    pub fn n_out(&self) -> usize {
        crate::otoc::output_times(self.t_max, self.dt, self.stride).len()
    }

    pub fn times(&self) -> Vec<f64> {
        crate::otoc::output_times(self.t_max, self.dt, self.stride)
    }

    pub fn steps(&self) -> usize {
        (self.n_out() - 1) * self.stride
    }
}

/// What one production trajectory produced.
#[derive(Clone, Debug, Default)]
pub struct StabilityRecord {
    /// `ħ² |∂X_t/∂X_0|²` at every output time.
    pub values: Vec<f64>,
    /// Largest `|H(t) − H(0)|` seen at output times.
    pub max_energy_drift: f64,
    /// Largest radius of gyration at output times.
    pub max_rg: f64,
}

/// Tangent seeded as a unit displacement of the centroid `x`: every bead's
/// `x` moves by one, nothing else.
pub fn centroid_x_tangent(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dq = vec![0.0; dim];
    for v in dq.iter_mut().step_by(2) {
        *v = 1.0;
    }
    (dq, vec![0.0; dim])
}

pub fn centroid_x_stability(dq: &[f64]) -> f64 {
    let n = dq.len() / 2;
    let s: f64 = dq.iter().step_by(2).sum();
    s / n as f64
}

/// Propagates `(q, p)` with its centroid tangent and records the squared
/// stability element. `index` only labels a divergence error.
pub fn record_stability<D: Dynamics + ?Sized>(
    sys: &D,
    q: &mut [f64],
    p: &mut [f64],
    prop: &Propagation,
    hbar: f64,
    index: usize,
) -> Result<StabilityRecord> {
    let dim = sys.dim();
    let mut yo = Yoshida4::new(dim);
    let (mut dq, mut dp) = centroid_x_tangent(dim);
    let n_out = prop.n_out();
    let h0 = sys.energy(q, p);
    let mut rec = StabilityRecord {
        values: Vec::with_capacity(n_out),
        max_energy_drift: 0.0,
        max_rg: radius_of_gyration(q),
    };
    let j = centroid_x_stability(&dq);
    rec.values.push(hbar * hbar * j * j);
    for k in 1..n_out {
        for _ in 0..prop.stride {
            yo.step_tangent(
                sys,
                q,
                p,
                &mut Tangent {
                    dq: &mut dq,
                    dp: &mut dp,
                },
                prop.dt,
            );
        }
        let j = centroid_x_stability(&dq);
        let v = hbar * hbar * j * j;
        if !v.is_finite() || !q[0].is_finite() {
            return Err(Error::Diverged {
                index,
                time: k as f64 * prop.stride as f64 * fabs(prop.dt),
            });
        }
        rec.values.push(v);
        rec.max_energy_drift = rec.max_energy_drift.max(fabs(sys.energy(q, p) - h0));
        rec.max_rg = rec.max_rg.max(radius_of_gyration(q));
    }
    Ok(rec)
}

/// A centroid crossing of `Y = 0` with `Ẏ > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub time: f64,
    pub x: f64,
    pub px: f64,
}

/// Crossings along one trajectory plus the diagnostics used to classify it.
#[derive(Clone, Debug, Default)]
pub struct SectionTrace {
    pub crossings: Vec<Crossing>,
    /// `ln max_t |∂X_t/∂X_0|` over the run (tangent renormalised as needed).
    pub log_stretch: f64,
    pub max_rg: f64,
    pub max_energy_drift: f64,
}

/// Centroid momentum `(1/N) Σ p`.
fn centroid_p(p: &[f64]) -> (f64, f64) {
    let c = centroid(p);
    (c.x, c.y)
}

/// Propagates for `prop.t_max` and records `Y: − → +` crossings. Each crossing
/// is located by linear interpolation between the bracketing steps, then one
/// Newton correction on `Y(τ) = 0` using `Ẏ = P_Y / m`, re-propagating from
/// the earlier step both times.
pub fn trace_section<D: Dynamics + ?Sized>(
    sys: &D,
    q: &mut [f64],
    p: &mut [f64],
    prop: &Propagation,
    index: usize,
) -> Result<SectionTrace> {
    let dim = sys.dim();
    let m = sys.mass();
    let mut yo = Yoshida4::new(dim);
    let mut aux = Yoshida4::new(dim);
    let (mut dq, mut dp) = centroid_x_tangent(dim);
    let mut log_scale = 0.0;
    let mut trace = SectionTrace {
        max_rg: radius_of_gyration(q),
        ..Default::default()
    };
    let h0 = sys.energy(q, p);
    let steps = prop.steps();
    let dt = prop.dt;
    let mut q_prev = q.to_vec();
    let mut p_prev = p.to_vec();
    let mut q_try = q.to_vec();
    let mut p_try = p.to_vec();
    let mut y_prev = centroid(q).y;
    for step in 1..=steps {
        q_prev.copy_from_slice(q);
        p_prev.copy_from_slice(p);
        yo.step_tangent(
            sys,
            q,
            p,
            &mut Tangent {
                dq: &mut dq,
                dp: &mut dp,
            },
            dt,
        );
        let y = centroid(q).y;
        if !y.is_finite() {
            return Err(Error::Diverged {
                index,
                time: step as f64 * fabs(dt),
            });
        }
        if y_prev < 0.0 && y >= 0.0 {
            let mut tau = dt * (-y_prev) / (y - y_prev);
            let mut replay = |tau: f64, q_try: &mut [f64], p_try: &mut [f64]| {
                q_try.copy_from_slice(&q_prev);
                p_try.copy_from_slice(&p_prev);
                aux.step(sys, q_try, p_try, tau);
            };
            replay(tau, &mut q_try, &mut p_try);
            let vy = centroid_p(&p_try).1 / m;
            if vy != 0.0 {
                tau -= centroid(&q_try).y / vy;
                replay(tau, &mut q_try, &mut p_try);
            }
            trace.crossings.push(Crossing {
                time: (step - 1) as f64 * fabs(dt) + fabs(tau),
                x: centroid(&q_try).x,
                px: centroid_p(&p_try).0,
            });
        }
        y_prev = y;
        let j = fabs(centroid_x_stability(&dq));
        if j > 0.0 {
            trace.log_stretch = trace.log_stretch.max(log_scale + log(j));
        }
        if j > 1e100 {
            for v in dq.iter_mut().chain(dp.iter_mut()) {
                *v *= 1e-100;
            }
            log_scale += 100.0 * core::f64::consts::LN_10;
        }
        if step % prop.stride == 0 {
            trace.max_rg = trace.max_rg.max(radius_of_gyration(q));
            trace.max_energy_drift = trace.max_energy_drift.max(fabs(sys.energy(q, p) - h0));
        }
    }
    Ok(trace)
}

/// One section point tagged with its trajectory's diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionPoint {
    pub trajectory: usize,
    pub time: f64,
    pub x: f64,
    pub px: f64,
    /// Largest radius of gyration along the whole trajectory.
    pub max_rg: f64,
    /// Finite-time stretching rate `ln max|∂X_t/∂X_0| / t_max`.
    pub stretch_rate: f64,
}

/// Points collected from an ensemble of shell trajectories.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Section {
    pub points: Vec<SectionPoint>,
    pub n_traj: usize,
    pub t_max: f64,
    /// Per-trajectory largest radius of gyration.
    pub trajectory_max_rg: Vec<f64>,
    /// Per-trajectory stretching rate.
    pub trajectory_stretch: Vec<f64>,
    /// Number of crossings per trajectory.
    pub trajectory_crossings: Vec<usize>,
    /// Largest `|H(t) − E| / |E|` over all trajectories.
    pub max_rel_energy_drift: f64,
    /// Set when no trajectory crossed the section.
    pub no_crossings: bool,
}

impl Section {
    /// Trajectories whose stretching rate exceeds `threshold` are called
    /// chaotic; regular (island) motion only stretches polynomially.
    pub fn is_chaotic(&self, trajectory: usize, threshold: f64) -> bool {
        self.trajectory_stretch[trajectory] > threshold
    }
}
