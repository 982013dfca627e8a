//! Ring-polymer molecular dynamics.
//!
//! `N` beads of the physical mass `m` joined by springs of stiffness
//! `m / (β_N ħ)²`, `β_N = β / N`:
//!
//! ```text
//! U_N(q) = Σ_i V(q_i) + m / (2 (β_N ħ)²) Σ_i |q_i − q_{i−1}|²,   q_0 ≡ q_N
//! ```
//!
//! Coordinates are stored flat, `q[2i] = x_i`, `q[2i + 1] = y_i`. A one-bead
//! polymer has no springs and is exactly the classical particle; the
//! classical module runs on this type with `N = 1`.

mod modes;
pub(crate) mod run;
mod sampler;
mod shell;

pub use modes::NormalModes;
pub use run::two_component_split;
pub use run::{
    centroid_poincare, gyration_histogram, rpmd_micro_otoc, rpmd_otoc, CentroidSection,
    GyrationHistogram, Modality, RpmdConfig,
};
pub use sampler::{sample_thermal_rp, EnergyEstimates, PileConfig};
pub use shell::{sample_shell_rp, ShellConfig};

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{ceil, sqrt};

use crate::error::{invalid, Result};
use crate::integrator::Dynamics;
use crate::potential::{Model, Position2, PotentialParams};

/// Positions and momenta of an `N`-bead ring polymer.
#[derive(Clone, Debug, PartialEq)]
pub struct RingPolymerState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub n_beads: usize,
    /// Imaginary-time step `β_N = β / N`.
    pub beta_n: f64,
}

impl RingPolymerState {
    pub fn collapsed(at: Position2, n_beads: usize, beta_n: f64) -> Self {
        let mut q = vec![0.0; 2 * n_beads];
        for b in q.chunks_exact_mut(2) {
            b[0] = at.x;
            b[1] = at.y;
        }
        RingPolymerState {
            q,
            p: vec![0.0; 2 * n_beads],
            n_beads,
            beta_n,
        }
    }

    pub fn bead(&self, i: usize) -> Position2 {
        Position2::new(self.q[2 * i], self.q[2 * i + 1])
    }

    pub fn centroid(&self) -> Position2 {
        centroid(&self.q)
    }

    /// `(1/N) Σ p_i`, so that `P = m Ẋ`.
    pub fn centroid_momentum(&self) -> [f64; 2] {
        let c = centroid(&self.p);
        [c.x, c.y]
    }

    pub fn radius_of_gyration(&self) -> f64 {
        radius_of_gyration(&self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// Mirror image `x → −x` of every bead.
    pub fn mirrored(&self) -> Self {
        let mut s = self.clone();
        for (i, v) in s.q.iter_mut().enumerate() {
            if i % 2 == 0 {
                *v = -*v;
            }
        }
        for (i, v) in s.p.iter_mut().enumerate() {
            if i % 2 == 0 {
                *v = -*v;
            }
        }
        s
    }
}

pub fn centroid(q: &[f64]) -> Position2 {
    let n = (q.len() / 2) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for b in q.chunks_exact(2) {
        sx += b[0];
        sy += b[1];
    }
    Position2::new(sx / n, sy / n)
}

pub fn radius_of_gyration(q: &[f64]) -> f64 {
    let c = centroid(q);
    let n = (q.len() / 2) as f64;
    let s: f64 = q
        .chunks_exact(2)
        .map(|b| (b[0] - c.x) * (b[0] - c.x) + (b[1] - c.y) * (b[1] - c.y))
        .sum();
    sqrt(s / n)
}

/// The ring polymer as a [`Dynamics`] system.
#[derive(Clone, Debug)]
pub struct RingPolymer<M> {
    pub model: M,
    n_beads: usize,
    beta: f64,
    spring: f64,
}

impl<M: Model> RingPolymer<M> {
    pub fn new(model: M, n_beads: usize, temperature: f64) -> Result<Self> {
        if n_beads == 0 {
            return Err(invalid("n_beads", "must be at least 1"));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(invalid("temperature", "must be positive"));
        }
        let beta = model.beta(temperature);
        let beta_n_hbar = beta * model.hbar() / n_beads as f64;
        let spring = if n_beads == 1 {
            0.0
        } else {
            model.mass() / (beta_n_hbar * beta_n_hbar)
        };
        Ok(RingPolymer {
            model,
            n_beads,
            beta,
            spring,
        })
    }

    /// A single bead, i.e. the classical particle. Temperature only enters
    /// through sampling, so `β` is left undefined.
    pub fn classical(model: M) -> Self {
        RingPolymer {
            model,
            n_beads: 1,
            beta: f64::NAN,
            spring: 0.0,
        }
    }

    pub fn n_beads(&self) -> usize {
        self.n_beads
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_n(&self) -> f64 {
        self.beta / self.n_beads as f64
    }

    /// Spring constant `m / (β_N ħ)²` (zero for one bead).
    pub fn spring(&self) -> f64 {
        self.spring
    }

    /// Free ring-polymer frequency `ω_k = (2 / β_N ħ) sin(kπ/N)`.
    pub fn free_frequency(&self, k: usize) -> f64 {
        if self.n_beads == 1 {
            return 0.0;
        }
        2.0 * sqrt(self.spring / self.model.mass()) * libm::sin(k as f64 * PI / self.n_beads as f64)
    }

    pub fn spring_energy(&self, q: &[f64]) -> f64 {
        if self.n_beads == 1 {
            return 0.0;
        }
        let n = self.n_beads;
        let mut s = 0.0;
        for i in 0..n {
            let j = (i + n - 1) % n;
            let dx = q[2 * i] - q[2 * j];
            let dy = q[2 * i + 1] - q[2 * j + 1];
            s += dx * dx + dy * dy;
        }
        0.5 * self.spring * s
    }

    pub fn bead_potential_sum(&self, q: &[f64]) -> f64 {
        q.chunks_exact(2)
            .map(|b| self.model.energy(Position2::new(b[0], b[1])))
            .sum()
    }

    /// `U_N`.
    pub fn u_n(&self, q: &[f64]) -> f64 {
        self.bead_potential_sum(q) + self.spring_energy(q)
    }

    /// `−∇U_N` as a fresh vector.
    pub fn rp_force(&self, q: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; q.len()];
        self.force(q, &mut f);
        f
    }

    /// Dense `2N × 2N` Hessian of `U_N`, row major.
    pub fn rp_hessian(&self, q: &[f64]) -> Vec<f64> {
        let d = 2 * self.n_beads;
        let mut h = vec![0.0; d * d];
        for (i, b) in q.chunks_exact(2).enumerate() {
            let hb = self.model.hessian(Position2::new(b[0], b[1]));
            for a in 0..2 {
                for c in 0..2 {
                    h[(2 * i + a) * d + 2 * i + c] += hb[a][c];
                }
            }
        }
        if self.n_beads > 1 {
            let n = self.n_beads;
            for i in 0..n {
                let j = (i + 1) % n;
                for a in 0..2 {
                    let (u, v) = (2 * i + a, 2 * j + a);
                    h[u * d + u] += self.spring;
                    h[v * d + v] += self.spring;
                    h[u * d + v] -= self.spring;
                    h[v * d + u] -= self.spring;
                }
            }
        }
        h
    }

    fn add_spring_term(&self, v: &[f64], out: &mut [f64], sign: f64) {
        let n = self.n_beads;
        let k = sign * self.spring;
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            for a in 0..2 {
                out[2 * i + a] += k * (2.0 * v[2 * i + a] - v[2 * prev + a] - v[2 * next + a]);
            }
        }
    }
}

impl<M: Model> Dynamics for RingPolymer<M> {
    fn dim(&self) -> usize {
        2 * self.n_beads
    }

    fn mass(&self) -> f64 {
        self.model.mass()
    }

    fn potential(&self, q: &[f64]) -> f64 {
        self.u_n(q)
    }

    fn force(&self, q: &[f64], force: &mut [f64]) {
        for (b, f) in q.chunks_exact(2).zip(force.chunks_exact_mut(2)) {
            let g = self.model.gradient(Position2::new(b[0], b[1]));
            f[0] = -g[0];
            f[1] = -g[1];
        }
        if self.n_beads > 1 {
            self.add_spring_term(q, force, -1.0);
        }
    }

    fn hessian_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        for ((b, vb), o) in q
            .chunks_exact(2)
            .zip(v.chunks_exact(2))
            .zip(out.chunks_exact_mut(2))
        {
            let h = self.model.hessian(Position2::new(b[0], b[1]));
            o[0] = h[0][0] * vb[0] + h[0][1] * vb[1];
            o[1] = h[1][0] * vb[0] + h[1][1] * vb[1];
        }
        if self.n_beads > 1 {
            self.add_spring_term(v, out, 1.0);
        }
    }

    fn force_and_hessian_vec(&self, q: &[f64], v: &[f64], force: &mut [f64], out: &mut [f64]) {
        for (((b, vb), f), o) in q
            .chunks_exact(2)
            .zip(v.chunks_exact(2))
            .zip(force.chunks_exact_mut(2))
            .zip(out.chunks_exact_mut(2))
        {
            let (g, h) = self.model.gradient_hessian(Position2::new(b[0], b[1]));
            f[0] = -g[0];
            f[1] = -g[1];
            o[0] = h[0][0] * vb[0] + h[0][1] * vb[1];
            o[1] = h[1][0] * vb[0] + h[1][1] * vb[1];
        }
        if self.n_beads > 1 {
            self.add_spring_term(q, force, -1.0);
            self.add_spring_term(v, out, 1.0);
        }
    }
}

/// Frequency that may be real or imaginary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Frequency {
    Real(f64),
    Imaginary(f64),
}

impl Frequency {
    pub fn magnitude(self) -> f64 {
        match self {
            Frequency::Real(w) | Frequency::Imaginary(w) => w,
        }
    }

    pub fn is_real(self) -> bool {
        matches!(self, Frequency::Real(_))
    }
}

/// Barrier-top frequency of the first Matsubara mode,
/// `√(4π²/(βħ)² − ω_b²)`, written as `ω_b √((T/T_c)² − 1)` so it vanishes
/// exactly at `T_c`.
pub fn matsubara_freq1(params: &PotentialParams, temperature: f64) -> Frequency {
    let r = temperature / params.crossover_temperature();
    let s = r * r - 1.0;
    if s >= 0.0 {
        Frequency::Real(params.omega_b * sqrt(s))
    } else {
        Frequency::Imaginary(params.omega_b * sqrt(-s))
    }
}

/// Default bead count `max(16, ⌈8 βħ ω_ref / π⌉)` with `ω_ref` the larger of
/// the barrier and Morse frequencies.
pub fn default_bead_count(params: &PotentialParams, temperature: f64) -> usize {
    let w = params.omega_b.max(params.morse_frequency());
    let bh = params.hbar / (params.k_b * temperature);
    (ceil(8.0 * bh * w / PI) as usize).max(16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use crate::potential::{Free, Harmonic};
    use proptest::prelude::*;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn collapsed_action_values() {
        let p = PotentialParams::default();
        let rp = RingPolymer::new(p, 24, 0.8 * p.crossover_temperature()).unwrap();
        let saddle = RingPolymerState::collapsed(Position2::new(0.0, 0.0), 24, rp.beta_n());
        assert!((rp.u_n(&saddle.q) - 24.0 * 3.125).abs() < 1e-11);
        let well = RingPolymerState::collapsed(Position2::new(2.5, 0.0), 24, rp.beta_n());
        assert_eq!(rp.u_n(&well.q), 0.0);
        assert!(rp.rp_force(&saddle.q).iter().all(|f| f.abs() < 1e-12));
        assert_eq!(saddle.radius_of_gyration(), 0.0);
    }

    #[test]
    fn two_bead_spring_energy_by_hand() {
        let m = Free { mass: 0.5 };
        let t = 0.4;
        let rp = RingPolymer::new(m, 2, t).unwrap();
        let d = 0.3;
        let q = [d, 0.0, -d, 0.0];
        // both links of the two-bead ring have length 2δ
        let k = 0.5 / ((1.0 / t / 2.0) * (1.0 / t / 2.0));
        let hand = 0.5 * k * ((2.0 * d) * (2.0 * d) + (2.0 * d) * (2.0 * d));
        assert!((rp.u_n(&q) - hand).abs() < 1e-13);
    }

    #[test]
    fn free_polymer_hessian_spectrum() {
        let n = 8;
        let rp = RingPolymer::new(Free { mass: 0.5 }, n, 0.3).unwrap();
        let q = pseudo(2 * n, 3);
        let e = eigh(rp.rp_hessian(&q), 2 * n);
        let mut expect: Vec<f64> = (0..n)
            .flat_map(|k| [0.5 * rp.free_frequency(k).powi(2); 2])
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in e.values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9 * expect[2 * n - 1], "{a} vs {b}");
        }
    }

    #[test]
    fn matsubara_crossover() {
        let p = PotentialParams::default();
        let tc = p.crossover_temperature();
        assert_eq!(matsubara_freq1(&p, tc), Frequency::Real(0.0));
        let w = matsubara_freq1(&p, 2.0 * tc);
        assert!(w.is_real() && (w.magnitude() - 3f64.sqrt() * 2.0).abs() < 1e-12);
        // direct closed form √(4π²T² − ω_b²) at T = 0.5 T_c
        let t = 0.5 * tc;
        let direct = (2.0f64 * 2.0 - 4.0 * PI * PI * t * t).sqrt();
        let w = matsubara_freq1(&p, t);
        assert!(!w.is_real() && (w.magnitude() - direct).abs() < 1e-12);
        assert!((w.magnitude() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bead_rule() {
        let p = PotentialParams::default();
        let tc = p.crossover_temperature();
        assert_eq!(default_bead_count(&p, 3.0 * tc), 16);
        let n = default_bead_count(&p, 0.7 * tc);
        let expect = (8.0 / (0.7 * tc) * p.morse_frequency() / PI).ceil() as usize;
        assert_eq!(n, expect);
    }

    #[test]
    fn one_bead_is_the_particle() {
        let p = PotentialParams::default();
        let rp = RingPolymer::classical(p);
        let q = [0.4, 0.9];
        let mut f = [0.0; 2];
        rp.force(&q, &mut f);
        let g = p.gradient(Position2::new(0.4, 0.9));
        assert_eq!(f, [-g[0], -g[1]]);
    }

    proptest! {
        #[test]
        fn force_and_hessian_match_finite_differences(seed in 0u64..10_000, n in 1usize..7) {
            let p = PotentialParams::default();
            let rp = RingPolymer::new(p, n, 0.25).unwrap();
            let q: Vec<f64> = pseudo(2 * n, seed).iter().enumerate()
                .map(|(i, v)| if i % 2 == 0 { 3.0 * v } else { *v }).collect();
            let h = 1e-4;
            let f = rp.rp_force(&q);
            let hess = rp.rp_hessian(&q);
            let d = 2 * n;
            for a in 0..d {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[a] += h;
                qm[a] -= h;
                let fd = -(rp.u_n(&qp) - rp.u_n(&qm)) / (2.0 * h);
                let scale = f[a].abs().max(1.0);
                prop_assert!((fd - f[a]).abs() < 1e-6 * scale, "force {a}: {fd} vs {}", f[a]);
                let (fp, fm) = (rp.rp_force(&qp), rp.rp_force(&qm));
                for b in 0..d {
                    let fdh = -(fp[b] - fm[b]) / (2.0 * h);
                    let hv = hess[b * d + a];
                    prop_assert!((fdh - hv).abs() < 1e-6 * hv.abs().max(1.0));
                }
            }
            // matrix-free product against the dense matrix
            let v = pseudo(d, seed + 1);
            let mut hv = vec![0.0; d];
            let mut ff = vec![0.0; d];
            rp.force_and_hessian_vec(&q, &v, &mut ff, &mut hv);
            for b in 0..d {
                let dense: f64 = (0..d).map(|a| hess[b * d + a] * v[a]).sum();
                prop_assert!((dense - hv[b]).abs() < 1e-10 * dense.abs().max(1.0));
                prop_assert!((ff[b] - f[b]).abs() < 1e-12 * f[b].abs().max(1.0));
            }
        }
    }

    #[test]
    fn harmonic_springs_decouple() {
        let h = Harmonic::isotropic(1.0, 1.0);
        let rp = RingPolymer::new(h, 4, 0.5).unwrap();
        let q = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        // collapsed polymer feels only the external force
        let f = rp.rp_force(&q);
        assert!(f
            .chunks_exact(2)
            .all(|b| (b[0] + 1.0).abs() < 1e-14 && b[1] == 0.0));
    }
}
