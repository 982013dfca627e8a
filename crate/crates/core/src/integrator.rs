//! Fourth-order symplectic propagation of a trajectory and its tangent.
//!
//! The scheme is the Yoshida triple-jump composition of the position-Verlet
//! kernel (drift, kick, drift), merged so one step costs three force
//! evaluations. Tangent vectors receive the linearised kicks `δp -= τ H δq`
//! with the Hessian taken at the same positions as the force, so the tangent
//! is the exact derivative of the discrete map.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cbrt, cos, sin};

/// A Hamiltonian `p²/2m + U(q)` on a flat coordinate vector, all
/// coordinates sharing one mass.
pub trait Dynamics: Sync {
    /// Number of coordinates.
    fn dim(&self) -> usize;

    fn mass(&self) -> f64;

    fn potential(&self, q: &[f64]) -> f64;

    /// Writes `-∇U(q)` into `force`.
    fn force(&self, q: &[f64], force: &mut [f64]);

    /// Writes `∇²U(q) · v` into `out`.
    fn hessian_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]);

    /// Force and Hessian-vector product together; implementations may share
    /// work between the two.
    fn force_and_hessian_vec(&self, q: &[f64], v: &[f64], force: &mut [f64], out: &mut [f64]) {
        self.force(q, force);
        self.hessian_vec(q, v, out);
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        p.iter().map(|x| x * x).sum::<f64>() / (2.0 * self.mass())
    }

    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        self.kinetic(p) + self.potential(q)
    }
}

/// Drift and kick weights of the triple-jump composition.
#[derive(Clone, Copy, Debug)]
pub struct Coefficients {
    pub drift: [f64; 4],
    pub kick: [f64; 3],
}

impl Coefficients {
    pub fn yoshida4() -> Self {
        let cr = cbrt(2.0);
        let w1 = 1.0 / (2.0 - cr);
        let w0 = -cr / (2.0 - cr);
        Coefficients {
            drift: [0.5 * w1, 0.5 * (w0 + w1), 0.5 * (w0 + w1), 0.5 * w1],
            kick: [w1, w0, w1],
        }
    }
}

/// Propagator with its own scratch buffers.
#[derive(Clone, Debug)]
pub struct Yoshida4 {
    coeffs: Coefficients,
    force: Vec<f64>,
    hv: Vec<f64>,
}

/// Mutable view of a phase point and an optional tangent vector.
pub struct Tangent<'a> {
    pub dq: &'a mut [f64],
    pub dp: &'a mut [f64],
}

impl Yoshida4 {
    pub fn new(dim: usize) -> Self {
        Yoshida4 {
            coeffs: Coefficients::yoshida4(),
            force: vec![0.0; dim],
            hv: vec![0.0; dim],
        }
    }

    /// Advances `(q, p)` by `dt` (which may be negative).
    pub fn step<D: Dynamics + ?Sized>(&mut self, sys: &D, q: &mut [f64], p: &mut [f64], dt: f64) {
        let inv_m = 1.0 / sys.mass();
        let c = self.coeffs;
        for stage in 0..3 {
            drift(q, p, c.drift[stage] * dt * inv_m);
            sys.force(q, &mut self.force);
            let h = c.kick[stage] * dt;
            for (pi, fi) in p.iter_mut().zip(&self.force) {
                *pi += h * fi;
            }
        }
        drift(q, p, c.drift[3] * dt * inv_m);
    }

    /// Advances `(q, p)` and the tangent `(dq, dp)` together.
    pub fn step_tangent<D: Dynamics + ?Sized>(
        &mut self,
        sys: &D,
        q: &mut [f64],
        p: &mut [f64],
        t: &mut Tangent<'_>,
        dt: f64,
    ) {
        let inv_m = 1.0 / sys.mass();
        let c = self.coeffs;
        for stage in 0..3 {
            let a = c.drift[stage] * dt * inv_m;
            drift(q, p, a);
            drift(t.dq, t.dp, a);
            sys.force_and_hessian_vec(q, t.dq, &mut self.force, &mut self.hv);
            let h = c.kick[stage] * dt;
            for (pi, fi) in p.iter_mut().zip(&self.force) {
                *pi += h * fi;
            }
            for (dpi, hvi) in t.dp.iter_mut().zip(&self.hv) {
                *dpi -= h * hvi;
            }
        }
        let a = c.drift[3] * dt * inv_m;
        drift(q, p, a);
        drift(t.dq, t.dp, a);
    }
}

fn drift(q: &mut [f64], p: &[f64], a: f64) {
    for (qi, pi) in q.iter_mut().zip(p) {
        *qi += a * pi;
    }
}

/// One-step transfer matrix of the scheme on `ẍ = -ω² x` with `z = ω dt`,
/// acting on `(x, v/ω)`.
pub fn harmonic_transfer(z: f64) -> [[f64; 2]; 2] {
    let c = Coefficients::yoshida4();
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let apply = |m: &mut [[f64; 2]; 2], t: [[f64; 2]; 2]| {
        let r = [
            [
                t[0][0] * m[0][0] + t[0][1] * m[1][0],
                t[0][0] * m[0][1] + t[0][1] * m[1][1],
            ],
            [
                t[1][0] * m[0][0] + t[1][1] * m[1][0],
                t[1][0] * m[0][1] + t[1][1] * m[1][1],
            ],
        ];
        *m = r;
    };
    for stage in 0..3 {
        apply(&mut m, [[1.0, c.drift[stage] * z], [0.0, 1.0]]);
        apply(&mut m, [[1.0, 0.0], [-c.kick[stage] * z, 1.0]]);
    }
    apply(&mut m, [[1.0, c.drift[3] * z], [0.0, 1.0]]);
    m
}

/// Largest `ω dt` for which the scheme is linearly stable on a harmonic
/// mode (`|tr M| ≤ 2`), found by scanning from zero and bisecting the first
/// exit.
pub fn stability_limit() -> f64 {
    let stable = |z: f64| {
        let m = harmonic_transfer(z);
        (m[0][0] + m[1][1]).abs() <= 2.0
    };
    let mut lo = 0.0;
    let mut hi = 0.01;
    while stable(hi) {
        lo = hi;
        hi += 0.01;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Exact harmonic flow over `z = ω t`, same variables as [`harmonic_transfer`].
pub fn harmonic_exact(z: f64) -> [[f64; 2]; 2] {
    [[cos(z), sin(z)], [-sin(z), cos(z)]]
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Osc {
        omega: f64,
        mass: f64,
    }

    impl Dynamics for Osc {
        fn dim(&self) -> usize {
            1
        }
        fn mass(&self) -> f64 {
            self.mass
        }
        fn potential(&self, q: &[f64]) -> f64 {
            0.5 * self.mass * self.omega * self.omega * q[0] * q[0]
        }
        fn force(&self, q: &[f64], f: &mut [f64]) {
            f[0] = -self.mass * self.omega * self.omega * q[0];
        }
        fn hessian_vec(&self, _q: &[f64], v: &[f64], out: &mut [f64]) {
            out[0] = self.mass * self.omega * self.omega * v[0];
        }
    }

    #[test]
    fn coefficients_are_consistent() {
        let c = Coefficients::yoshida4();
        assert!((c.drift.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((c.kick.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_tangent_is_cosine_to_fourth_order() {
        let sys = Osc {
            omega: 1.7,
            mass: 0.5,
        };
        let t_end = 3.0;
        let err = |n: usize| {
            let dt = t_end / n as f64;
            let mut yo = Yoshida4::new(1);
            let (mut q, mut p) = ([0.4], [0.2]);
            let (mut dq, mut dp) = ([1.0], [0.0]);
            for _ in 0..n {
                yo.step_tangent(
                    &sys,
                    &mut q,
                    &mut p,
                    &mut Tangent {
                        dq: &mut dq,
                        dp: &mut dp,
                    },
                    dt,
                );
            }
            (dq[0] - (sys.omega * t_end).cos()).abs()
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e1 < 1e-6);
        let ratio = e1 / e2;
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn stability_limit_matches_transfer_trace() {
        let z = stability_limit();
        assert!(z > 1.0 && z < 2.0, "{z}");
        let m = harmonic_transfer(0.999 * z);
        assert!((m[0][0] + m[1][1]).abs() <= 2.0);
        let m = harmonic_transfer(1.001 * z);
        assert!((m[0][0] + m[1][1]).abs() > 2.0);
        let d = harmonic_transfer(0.01);
        let e = harmonic_exact(0.01);
        assert!((d[0][1] - e[0][1]).abs() < 1e-11);
    }
}
