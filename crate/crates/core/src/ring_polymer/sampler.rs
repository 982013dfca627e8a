//! Path-integral Langevin (PILE-L) sampling of `e^{−β_N H_N}`.
//!
//! BAOAB splitting: external-force half kicks in Cartesian beads, exact
//! free-ring-polymer rotation and the Ornstein–Uhlenbeck step in normal
//! modes. Internal modes get critical friction `2ω_k`; the centroid gets a
//! configurable friction. Harvested configurations receive fresh Gaussian
//! momenta, so the thermostat trajectory never leaks into production runs.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, exp, sin, sqrt};

use super::{NormalModes, RingPolymer, RingPolymerState};
use crate::classical::{gaussian_momenta, MetropolisChain, MetropolisConfig};
use crate::error::{invalid, Error, Result};
use crate::integrator::Dynamics;
use crate::potential::{Model, Position2};
use crate::rng::{normal, stream, uniform, Purpose, StreamRng};
use crate::stats::Moments;

#[derive(Clone, Debug, PartialEq)]
pub struct PileConfig {
    pub dt: f64,
    /// Thermostatted time before the first harvested sample.
    pub burn_in_time: f64,
    /// Thermostatted time between harvested samples.
    pub gap_time: f64,
    /// Centroid friction; `None` selects `1 / (10 βħ)`.
    pub centroid_friction: Option<f64>,
    /// Samples harvested per chain.
    pub chain_samples: usize,
    pub parity_flip: bool,
    /// Used instead of Langevin when `N = 1`.
    pub metropolis: MetropolisConfig,
}

impl Default for PileConfig {
    fn default() -> Self {
        PileConfig {
            dt: 0.01,
            burn_in_time: 100.0,
            gap_time: 20.0,
            centroid_friction: None,
            chain_samples: 16,
            parity_flip: true,
            metropolis: MetropolisConfig::default(),
        }
    }
}

impl PileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.gap_time > 0.0) || !(self.burn_in_time >= 0.0) {
            return Err(invalid(
                "thermostat",
                "dt and gap_time must be positive, burn_in_time non-negative",
            ));
        }
        if self.chain_samples == 0 {
            return Err(invalid("chain_samples", "must be positive"));
        }
        if let Some(g) = self.centroid_friction {
            if !(g > 0.0) {
                return Err(invalid("centroid_friction", "must be positive"));
            }
        }
        self.metropolis.validate()
    }

    pub fn centroid_friction_at(&self, beta_hbar: f64) -> f64 {
        self.centroid_friction.unwrap_or(1.0 / (10.0 * beta_hbar))
    }
}

/// A thermostatted chain producing ring-polymer samples; for `N = 1` it is
/// the classical Metropolis chain.
pub enum RpChain<'a, M: Model> {
    Single {
        chain: MetropolisChain<'a, M>,
        beta: f64,
        mass: f64,
    },
    Langevin(Box<PileChain<'a, M>>),
}

impl<'a, M: Model> RpChain<'a, M> {
    pub fn new(
        rp: &'a RingPolymer<M>,
        temperature: f64,
        cfg: &'a PileConfig,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if rp.n_beads() == 1 {
            let chain = MetropolisChain::new(&rp.model, temperature, &cfg.metropolis, rng);
            return Ok(RpChain::Single {
                chain,
                beta: rp.model.beta(temperature),
                mass: rp.mass(),
            });
        }
        Ok(RpChain::Langevin(Box::new(PileChain::new(rp, cfg, rng)?)))
    }

    /// Next configuration with fresh momenta at `β_N`, written into `q`, `p`.
    pub fn next(&mut self, rng: &mut StreamRng, q: &mut [f64], p: &mut [f64]) -> Result<()> {
        match self {
            RpChain::Single { chain, beta, mass } => {
                let pos = chain.next_position(rng);
                q[0] = pos.x;
                q[1] = pos.y;
                gaussian_momenta(rng, *mass, *beta, p);
                Ok(())
            }
            RpChain::Langevin(c) => c.next(rng, q, p),
        }
    }

    pub fn finish(&self) -> Result<()> {
        match self {
            RpChain::Single { chain, .. } => chain.check_acceptance(),
            RpChain::Langevin(_) => Ok(()),
        }
    }
}

/// PILE-L chain for `N ≥ 2`.
pub struct PileChain<'a, M: Model> {
    rp: &'a RingPolymer<M>,
    cfg: &'a PileConfig,
    modes: NormalModes,
    q: Vec<f64>,
    p: Vec<f64>,
    force: Vec<f64>,
    mq: Vec<f64>,
    mp: Vec<f64>,
    /// Per mode: free frequency, OU decay, OU noise amplitude.
    omega: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    steps: usize,
}

impl<'a, M: Model> PileChain<'a, M> {
    pub fn new(rp: &'a RingPolymer<M>, cfg: &'a PileConfig, rng: &mut StreamRng) -> Result<Self> {
        let n = rp.n_beads();
        let modes = NormalModes::new(n);
        let m = rp.mass();
        let beta_n = rp.beta_n();
        let beta_hbar = rp.beta() * rp.model.hbar();
        let mut omega = vec![0.0; n];
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for k in 0..n {
            let w = rp.free_frequency(modes.order(k));
            let gamma = if k == 0 {
                cfg.centroid_friction_at(beta_hbar)
            } else {
                2.0 * w
            };
            omega[k] = w;
            c1[k] = exp(-gamma * cfg.dt);
            c2[k] = sqrt((1.0 - c1[k] * c1[k]) * m / beta_n);
        }
        let start = RingPolymerState::collapsed(rp.model.reference_point(), n, beta_n);
        let mut chain = PileChain {
            rp,
            cfg,
            modes,
            q: start.q,
            p: vec![0.0; 2 * n],
            force: vec![0.0; 2 * n],
            mq: vec![0.0; n],
            mp: vec![0.0; n],
            omega,
            c1,
            c2,
            steps: 0,
        };
        gaussian_momenta(rng, m, beta_n, &mut chain.p);
        chain.external_force();
        let burn = libm::ceil(cfg.burn_in_time / cfg.dt) as usize;
        chain.run(burn, rng)?;
        Ok(chain)
    }

    fn external_force(&mut self) {
        for (b, f) in self.q.chunks_exact(2).zip(self.force.chunks_exact_mut(2)) {
            let g = self.rp.model.gradient(Position2::new(b[0], b[1]));
            f[0] = -g[0];
            f[1] = -g[1];
        }
    }

    fn kick(&mut self, h: f64) {
        for (pi, fi) in self.p.iter_mut().zip(&self.force) {
            *pi += h * fi;
        }
    }

    /// Free ring-polymer flow in normal modes for `h`, optionally with the
    /// Ornstein–Uhlenbeck step in the middle.
    fn modes_step(&mut self, rng: &mut StreamRng) {
        let m = self.rp.mass();
        let h = 0.5 * self.cfg.dt;
        for c in 0..2 {
            self.modes.forward(&self.q, c, &mut self.mq);
            self.modes.forward(&self.p, c, &mut self.mp);
            for k in 0..self.mq.len() {
                rotate(&mut self.mq[k], &mut self.mp[k], self.omega[k], m, h);
                self.mp[k] = self.c1[k] * self.mp[k] + self.c2[k] * normal(rng);
                rotate(&mut self.mq[k], &mut self.mp[k], self.omega[k], m, h);
            }
            self.modes.backward(&self.mq, c, &mut self.q);
            self.modes.backward(&self.mp, c, &mut self.p);
        }
    }

    fn run(&mut self, steps: usize, rng: &mut StreamRng) -> Result<()> {
        let h = 0.5 * self.cfg.dt;
        let n = self.rp.n_beads() as f64;
        for _ in 0..steps {
            self.kick(h);
            self.modes_step(rng);
            self.external_force();
            self.kick(h);
            self.steps += 1;
        }
        let u = self.rp.u_n(&self.q);
        let ok = self.q.iter().chain(&self.p).all(|v| v.is_finite());
        if !ok || u > 1e6 * n {
            return Err(Error::ThermostatBlowUp {
                step: self.steps,
                energy: u,
                config: format!("dt = {}, N = {}", self.cfg.dt, self.rp.n_beads()),
            });
        }
        Ok(())
    }

    pub fn next(&mut self, rng: &mut StreamRng, q: &mut [f64], p: &mut [f64]) -> Result<()> {
        let gap = libm::ceil(self.cfg.gap_time / self.cfg.dt) as usize;
        self.run(gap, rng)?;
        q.copy_from_slice(&self.q);
        if self.cfg.parity_flip && self.rp.model.x_symmetric() && uniform(rng) < 0.5 {
            for v in q.iter_mut().step_by(2) {
                *v = -*v;
            }
        }
        gaussian_momenta(rng, self.rp.mass(), self.rp.beta_n(), p);
        Ok(())
    }
}

fn rotate(q: &mut f64, p: &mut f64, w: f64, m: f64, h: f64) {
    if w == 0.0 {
        *q += h * *p / m;
        return;
    }
    let (s, c) = (sin(w * h), cos(w * h));
    let q0 = *q;
    let p0 = *p;
    *q = c * q0 + s * p0 / (m * w);
    *p = -m * w * s * q0 + c * p0;
}

/// Draws `n_samples` thermal ring-polymer states, chain after chain; chain
/// `b` uses the thermal stream `b` of `seed`.
pub fn sample_thermal_rp<M: Model>(
    rp: &RingPolymer<M>,
    temperature: f64,
    n_samples: usize,
    cfg: &PileConfig,
    seed: u64,
) -> Result<Vec<RingPolymerState>> {
    cfg.validate()?;
    let n = rp.n_beads();
    let per_chain = if n == 1 {
        cfg.metropolis.chain_samples
    } else {
        cfg.chain_samples
    };
    let mut out = Vec::with_capacity(n_samples);
    let mut block = 0u64;
    while out.len() < n_samples {
        let mut rng = stream(seed, Purpose::Thermal, block);
        let mut chain = RpChain::new(rp, temperature, cfg, &mut rng)?;
        for _ in 0..per_chain.min(n_samples - out.len()) {
            let mut s = RingPolymerState {
                q: vec![0.0; 2 * n],
                p: vec![0.0; 2 * n],
                n_beads: n,
                beta_n: rp.beta_n(),
            };
            chain.next(&mut rng, &mut s.q, &mut s.p)?;
            out.push(s);
        }
        chain.finish()?;
        block += 1;
    }
    Ok(out)
}

/// Primitive and centroid-virial total-energy estimators.
#[derive(Clone, Copy, Debug, Default)]
pub struct EnergyEstimates {
    pub primitive: Moments,
    pub virial: Moments,
}

impl EnergyEstimates {
    pub fn push<M: Model>(&mut self, rp: &RingPolymer<M>, q: &[f64]) {
        let n = rp.n_beads() as f64;
        let beta = rp.beta();
        let v_mean = rp.bead_potential_sum(q) / n;
        let c = super::centroid(q);
        let mut vir = 0.0;
        for b in q.chunks_exact(2) {
            let g = rp.model.gradient(Position2::new(b[0], b[1]));
            vir += (b[0] - c.x) * g[0] + (b[1] - c.y) * g[1];
        }
        let d = 2.0;
        self.primitive
            .push(d * n / (2.0 * beta) - rp.spring_energy(q) / n + v_mean);
        self.virial
            .push(d / (2.0 * beta) + vir / (2.0 * n) + v_mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Free, Harmonic, PotentialParams};

    fn quick() -> PileConfig {
        PileConfig {
            dt: 0.05,
            burn_in_time: 20.0,
            gap_time: 2.0,
            centroid_friction: Some(1.0),
            chain_samples: 50,
            ..PileConfig::default()
        }
    }

    #[test]
    fn free_polymer_gyration_matches_mode_sum() {
        let n = 8;
        let t = 0.5;
        let rp = RingPolymer::new(Free { mass: 0.5 }, n, t).unwrap();
        let states = sample_thermal_rp(&rp, t, 2000, &quick(), 1).unwrap();
        let rg2: Moments = states
            .iter()
            .map(|s| s.radius_of_gyration().powi(2))
            .collect();
        let bn = rp.beta_n();
        let exact: f64 = (1..n)
            .map(|k| 2.0 / (bn * 0.5 * rp.free_frequency(k).powi(2)))
            .sum::<f64>()
            / n as f64;
        assert!(
            (rg2.mean() - exact).abs() < 4.0 * rg2.std_error() + 0.01 * exact,
            "{} vs {exact}",
            rg2.mean()
        );
    }

    #[test]
    fn harmonic_position_variance_and_estimators() {
        let (m, w, t, n) = (1.0, 1.0, 0.25, 16);
        let h = Harmonic::isotropic(m, w);
        let rp = RingPolymer::new(h, n, t).unwrap();
        let states = sample_thermal_rp(&rp, t, 3000, &quick(), 2).unwrap();
        let x2: Moments = states
            .iter()
            .map(|s| s.q.iter().step_by(2).map(|x| x * x).sum::<f64>() / n as f64)
            .collect();
        let bn = rp.beta_n();
        let finite_n: f64 = (0..n)
            .map(|k| 1.0 / (bn * m * (w * w + rp.free_frequency(k).powi(2))))
            .sum::<f64>()
            / n as f64;
        let quantum = 1.0 / (2.0 * m * w) / (0.5 * w / t).tanh();
        assert!((finite_n - quantum).abs() / quantum < 0.01);
        assert!(
            (x2.mean() - finite_n).abs() < 4.0 * x2.std_error() + 0.01 * finite_n,
            "{} vs {finite_n}",
            x2.mean()
        );
        let mut est = EnergyEstimates::default();
        for s in &states {
            est.push(&rp, &s.q);
        }
        // two oscillators: E = ħω coth(βħω/2)
        let e_exact = w / (0.5 * w / t).tanh();
        assert!(
            (est.virial.mean() - e_exact).abs() < 4.0 * est.virial.std_error() + 0.01 * e_exact
        );
        assert!((est.primitive.mean() - est.virial.mean()).abs() < 4.0 * est.primitive.std_error());
        // momenta at N·T
        let p2: Moments = states
            .iter()
            .flat_map(|s| s.p.clone())
            .map(|p| p * p)
            .collect();
        assert!((p2.mean() - m * n as f64 * t).abs() < 4.0 * p2.std_error());
    }

    #[test]
    fn one_bead_delegates_to_metropolis() {
        let p = PotentialParams::default();
        let rp = RingPolymer::new(p, 1, 0.4).unwrap();
        let cfg = PileConfig::default();
        let a = sample_thermal_rp(&rp, 0.4, 10, &cfg, 9).unwrap();
        let b = crate::classical::sample_thermal(&p, 0.4, 10, &cfg.metropolis, 9).unwrap();
        for (s, c) in a.iter().zip(&b) {
            assert_eq!(s.q, [c.q.x, c.q.y]);
            assert_eq!(s.p, c.p);
        }
    }
}
