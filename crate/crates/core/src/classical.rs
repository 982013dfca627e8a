//! Classical trajectories, their stability matrix, and classical OTOCs.
//!
//! The classical particle is the one-bead ring polymer, so everything here
//! runs through [`RingPolymer::classical`] and the shared trajectory engine.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, sin, sqrt};

use crate::ensemble::Executor;
use crate::error::{invalid, Error, Result};
use crate::integrator::{Tangent, Yoshida4};
use crate::otoc::{OtocKind, OtocSeries};
use crate::potential::{Model, Position2};
use crate::ring_polymer::run::{micro_engine, section_engine, thermal_engine};
use crate::ring_polymer::{PileConfig, RingPolymer, ShellConfig};
use crate::rng::{normal, uniform, StreamRng};
use crate::trajectory::{Propagation, Section};

/// Phase-space point of the particle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhasePoint {
    pub q: Position2,
    pub p: [f64; 2],
}

/// Linearised displacement carried along a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TangentState {
    pub dq: [f64; 2],
    pub dp: [f64; 2],
}

impl TangentState {
    /// `δx = 1`, everything else zero; `dq[0]` then tracks `∂x_t/∂x_0`.
    pub fn unit_x() -> Self {
        TangentState {
            dq: [1.0, 0.0],
            dp: [0.0, 0.0],
        }
    }
}

impl PhasePoint {
    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.iter().all(|v| v.is_finite())
    }

    pub fn energy<M: Model>(&self, model: &M) -> f64 {
        (self.p[0] * self.p[0] + self.p[1] * self.p[1]) / (2.0 * model.mass())
            + model.energy(self.q)
    }
}

/// One fourth-order symplectic step of a phase point and its tangent.
pub fn step_symplectic4<M: Model>(
    model: &M,
    state: PhasePoint,
    tangent: TangentState,
    dt: f64,
) -> (PhasePoint, TangentState) {
    let sys = RingPolymer::classical(model);
    let mut yo = Yoshida4::new(2);
    let mut q = [state.q.x, state.q.y];
    let mut p = state.p;
    let mut t = tangent;
    yo.step_tangent(
        &sys,
        &mut q,
        &mut p,
        &mut Tangent {
            dq: &mut t.dq,
            dp: &mut t.dp,
        },
        dt,
    );
    (
        PhasePoint {
            q: Position2::new(q[0], q[1]),
            p,
        },
        t,
    )
}

/// Rectangle that confines sampled configurations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        SamplingBox {
            x_min: -6.0,
            x_max: 6.0,
            y_min: -3.0,
            y_max: 8.0,
        }
    }
}

impl SamplingBox {
    pub fn contains(&self, q: Position2) -> bool {
        q.x >= self.x_min && q.x <= self.x_max && q.y >= self.y_min && q.y <= self.y_max
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(invalid("box", "empty sampling box"));
        }
        Ok(())
    }

    /// Largest Boltzmann factor on the boundary relative to `e^{−β V_min}`,
    /// scanned on `n` points per edge.
    pub fn boundary_weight<M: Model>(&self, model: &M, temperature: f64, n: usize) -> f64 {
        self.edge_weights(model, temperature, n)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Largest Boltzmann weight relative to the minimum on each edge, ordered
    /// `[y_min, y_max, x_min, x_max]`.
    pub fn edge_weights<M: Model>(&self, model: &M, temperature: f64, n: usize) -> [f64; 4] {
        let beta = model.beta(temperature);
        let vmin = model.minimum_energy();
        let mut lowest = [f64::INFINITY; 4];
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let x = self.x_min + s * (self.x_max - self.x_min);
            let y = self.y_min + s * (self.y_max - self.y_min);
            let edges = [
                Position2::new(x, self.y_min),
                Position2::new(x, self.y_max),
                Position2::new(self.x_min, y),
                Position2::new(self.x_max, y),
            ];
            for (low, q) in lowest.iter_mut().zip(edges) {
                *low = low.min(model.energy(q));
            }
        }
        lowest.map(|v| exp(-beta * (v - vmin)))
    }
}

/// Metropolis random walk for classical Boltzmann positions.
#[derive(Clone, Debug, PartialEq)]
pub struct MetropolisConfig {
    pub burn_in: usize,
    /// Walk steps between harvested samples.
    pub gap: usize,
    /// Samples harvested per chain (one chain per ensemble block).
    pub chain_samples: usize,
    pub initial_step: f64,
    /// Acceptance band targeted during burn-in and enforced afterwards.
    pub acceptance_band: [f64; 2],
    /// Add an exact `x → −x` move for mirror-symmetric models.
    pub parity_flip: bool,
    pub bounds: SamplingBox,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        MetropolisConfig {
            burn_in: 10_000,
            gap: 100,
            chain_samples: 64,
            initial_step: 0.3,
            acceptance_band: [0.3, 0.5],
            parity_flip: true,
            bounds: SamplingBox::default(),
        }
    }
}

impl MetropolisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 || self.chain_samples == 0 {
            return Err(invalid("sampler", "gap and chain_samples must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(invalid("initial_step", "must be positive"));
        }
        let [lo, hi] = self.acceptance_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid("acceptance_band", "need 0 < lo < hi < 1"));
        }
        self.bounds.validate()
    }
}

/// A running Metropolis chain.
pub struct MetropolisChain<'a, M> {
    model: &'a M,
    beta: f64,
    cfg: &'a MetropolisConfig,
    pos: Position2,
    energy: f64,
    step: f64,
    accepted: usize,
    proposed: usize,
}

impl<'a, M: Model> MetropolisChain<'a, M> {
    /// Starts at the model's reference point and burns in, adapting the step
    /// towards the middle of the acceptance band.
    pub fn new(
        model: &'a M,
        temperature: f64,
        cfg: &'a MetropolisConfig,
        rng: &mut StreamRng,
    ) -> Self {
        let pos = model.reference_point();
        let mut chain = MetropolisChain {
            model,
            beta: model.beta(temperature),
            cfg,
            pos,
            energy: model.energy(pos),
            step: cfg.initial_step,
            accepted: 0,
            proposed: 0,
        };
        let target = 0.5 * (cfg.acceptance_band[0] + cfg.acceptance_band[1]);
        let span = (cfg.bounds.x_max - cfg.bounds.x_min).max(cfg.bounds.y_max - cfg.bounds.y_min);
        let mut done = 0;
        let mut batches = 0usize;
        while done < cfg.burn_in {
            let batch = 100.min(cfg.burn_in - done);
            let before = chain.accepted;
            for _ in 0..batch {
                chain.walk(rng);
            }
            let rate = (chain.accepted - before) as f64 / batch as f64;
            // Robbins–Monro gain so the step settles
            let gain = 4.0 / sqrt(1.0 + batches as f64);
            chain.step = (chain.step * exp(gain * (rate - target))).clamp(1e-4, span);
            batches += 1;
            done += batch;
        }
        chain.accepted = 0;
        chain.proposed = 0;
        chain
    }

    fn walk(&mut self, rng: &mut StreamRng) {
        let trial = Position2::new(
            self.pos.x + self.step * normal(rng),
            self.pos.y + self.step * normal(rng),
        );
        let u = uniform(rng);
        self.proposed += 1;
        if !self.cfg.bounds.contains(trial) {
            return;
        }
        let e = self.model.energy(trial);
        if u < exp(-self.beta * (e - self.energy)) {
            self.pos = trial;
            self.energy = e;
            self.accepted += 1;
        }
    }

    /// Advances `gap` steps, applies the mirror move and returns the position.
    pub fn next_position(&mut self, rng: &mut StreamRng) -> Position2 {
        for _ in 0..self.cfg.gap {
            self.walk(rng);
        }
        if self.cfg.parity_flip && self.model.x_symmetric() && uniform(rng) < 0.5 {
            self.pos.x = -self.pos.x;
        }
        self.pos
    }

    /// Acceptance rate since burn-in.
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            return 0.5 * (self.cfg.acceptance_band[0] + self.cfg.acceptance_band[1]);
        }
        self.accepted as f64 / self.proposed as f64
    }

    pub fn check_acceptance(&self) -> Result<()> {
        let rate = self.acceptance();
        let [lo, hi] = self.cfg.acceptance_band;
        if rate < lo || rate > hi {
            return Err(Error::SamplerAcceptance { rate, lo, hi });
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }
}

/// Exact Gaussian momenta at inverse temperature `beta`.
pub fn gaussian_momenta(rng: &mut StreamRng, mass: f64, beta: f64, out: &mut [f64]) {
    let s = sqrt(mass / beta);
    for v in out {
        *v = s * normal(rng);
    }
}

/// Uniform position in `{V ≤ E}` within the box, then a uniformly oriented
/// momentum of magnitude `√(2m(E − V))`.
pub fn sample_shell_point<M: Model>(
    model: &M,
    energy: f64,
    bounds: &SamplingBox,
    max_attempts: usize,
    rng: &mut StreamRng,
) -> Result<PhasePoint> {
    for _ in 0..max_attempts {
        let q = Position2::new(
            bounds.x_min + (bounds.x_max - bounds.x_min) * uniform(rng),
            bounds.y_min + (bounds.y_max - bounds.y_min) * uniform(rng),
        );
        let v = model.energy(q);
        if v <= energy {
            let pm = sqrt(2.0 * model.mass() * (energy - v));
            let theta = 2.0 * PI * uniform(rng);
            return Ok(PhasePoint {
                q,
                p: [pm * cos(theta), pm * sin(theta)],
            });
        }
    }
    Err(Error::ShellUnreachable {
        energy,
        attempts: max_attempts,
    })
}

/// Shell sampling settings for the classical microcanonical runs.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroConfig {
    pub bounds: SamplingBox,
    /// Trajectories per ensemble block.
    pub block_size: usize,
    pub max_attempts: usize,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig {
            bounds: SamplingBox::default(),
            block_size: 64,
            max_attempts: 1_000_000,
        }
    }
}

pub(crate) fn check_energy<M: Model>(model: &M, energy: f64) -> Result<()> {
    let minimum = model.minimum_energy();
    if !(energy > minimum) || !energy.is_finite() {
        return Err(Error::InvalidEnergy { energy, minimum });
    }
    Ok(())
}

/// `(ħ²/Z) ∫ e^{−βH} |∂x_t/∂x_0|²` by Monte Carlo over Boltzmann initial
/// conditions.
pub fn classical_thermal_otoc<M: Model, E: Executor>(
    model: &M,
    temperature: f64,
    prop: &Propagation,
    n_traj: usize,
    sampler: &MetropolisConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    let sys = RingPolymer::classical(model);
    let cfg = PileConfig {
        metropolis: sampler.clone(),
        ..PileConfig::default()
    };
    let mut series = thermal_engine(&sys, temperature, prop, n_traj, &cfg, seed, exec)?;
    series.kind = OtocKind::ClassicalThermal;
    series.meta.n_beads = None;
    Ok(series)
}

/// Average of `ħ² |∂x_t/∂x_0|²` over the `H = E` shell.
pub fn classical_micro_otoc<M: Model, E: Executor>(
    model: &M,
    energy: f64,
    prop: &Propagation,
    n_traj: usize,
    cfg: &MicroConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    check_energy(model, energy)?;
    let sys = RingPolymer::classical(model);
    let shell = ShellConfig {
        classical: cfg.clone(),
        ..ShellConfig::default()
    };
    let mut series = micro_engine(&sys, energy, prop, n_traj, &shell, seed, exec)?;
    series.kind = OtocKind::ClassicalMicro;
    series.meta.n_beads = None;
    Ok(series)
}

/// Poincaré section at `y = 0` with `ẏ > 0` on the `H = E` shell.
pub fn poincare_section<M: Model, E: Executor>(
    model: &M,
    energy: f64,
    n_traj: usize,
    prop: &Propagation,
    cfg: &MicroConfig,
    seed: u64,
    exec: &E,
) -> Result<Section> {
    check_energy(model, energy)?;
    let sys = RingPolymer::classical(model);
    let shell = ShellConfig {
        classical: cfg.clone(),
        ..ShellConfig::default()
    };
    section_engine(&sys, energy, n_traj, prop, &shell, seed, exec)
}

/// Collects `n` Boltzmann phase points from consecutive chains, for
/// diagnostics and tests.
pub fn sample_thermal<M: Model>(
    model: &M,
    temperature: f64,
    n: usize,
    cfg: &MetropolisConfig,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    let beta = model.beta(temperature);
    let mut out = Vec::with_capacity(n);
    let mut block = 0u64;
    while out.len() < n {
        let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Thermal, block);
        let mut chain = MetropolisChain::new(model, temperature, cfg, &mut rng);
        for _ in 0..cfg.chain_samples.min(n - out.len()) {
            let q = chain.next_position(&mut rng);
            let mut p = [0.0; 2];
            gaussian_momenta(&mut rng, model.mass(), beta, &mut p);
            out.push(PhasePoint { q, p });
        }
        chain.check_acceptance()?;
        block += 1;
    }
    Ok(out)
}
