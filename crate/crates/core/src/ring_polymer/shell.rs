//! Sampling the `H_N = E` shell of the ring-polymer phase space.
//!
//! Integrating the momenta out of `δ(H_N − E)` leaves the configurational
//! density `(E − U_N)^{N−1}` on `U_N < E`; momenta are then uniform on the
//! `2N`-sphere of radius `√(2m(E − U_N))`. Configurations come from a
//! Metropolis walk in normal-mode coordinates with proposal widths scaled
//! like the free-polymer fluctuations. For one bead the density is flat and
//! the classical box-rejection sampler is used instead.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use super::{NormalModes, RingPolymer, RingPolymerState};
use crate::classical::{sample_shell_point, MicroConfig};
use crate::error::{invalid, Error, Result};
use crate::integrator::Dynamics;
use crate::potential::Model;
use crate::rng::{normal, stream, uniform, Purpose, StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub struct ShellConfig {
    pub burn_in: usize,
    pub gap: usize,
    pub chain_samples: usize,
    /// Band the walk is tuned into during burn-in and checked against after.
    pub acceptance_band: [f64; 2],
    pub parity_flip: bool,
    /// Used when `N = 1`.
    pub classical: MicroConfig,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig {
            burn_in: 20_000,
            gap: 200,
            chain_samples: 16,
            acceptance_band: [0.2, 0.6],
            parity_flip: true,
            classical: MicroConfig::default(),
        }
    }
}

impl ShellConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 || self.chain_samples == 0 || self.classical.block_size == 0 {
            return Err(invalid(
                "shell",
                "gap, chain_samples and block_size must be positive",
            ));
        }
        let [lo, hi] = self.acceptance_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid("acceptance_band", "need 0 < lo < hi < 1"));
        }
        self.classical.bounds.validate()
    }

    pub fn per_chain(&self, n_beads: usize) -> usize {
        if n_beads == 1 {
            self.classical.block_size
        } else {
            self.chain_samples
        }
    }
}

/// Chain over shell configurations.
pub enum ShellChain<'a, M: Model> {
    Single {
        rp: &'a RingPolymer<M>,
        cfg: &'a ShellConfig,
        energy: f64,
    },
    Ring(ShellWalk<'a, M>),
}

impl<'a, M: Model> ShellChain<'a, M> {
    pub fn new(
        rp: &'a RingPolymer<M>,
        energy: f64,
        cfg: &'a ShellConfig,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if rp.n_beads() == 1 {
            return Ok(ShellChain::Single { rp, cfg, energy });
        }
        Ok(ShellChain::Ring(ShellWalk::new(rp, energy, cfg, rng)?))
    }

    pub fn next(&mut self, rng: &mut StreamRng, q: &mut [f64], p: &mut [f64]) -> Result<()> {
        match self {
            ShellChain::Single { rp, cfg, energy } => {
                let pt = sample_shell_point(
                    &rp.model,
                    *energy,
                    &cfg.classical.bounds,
                    cfg.classical.max_attempts,
                    rng,
                )?;
                q[0] = pt.q.x;
                q[1] = pt.q.y;
                p.copy_from_slice(&pt.p);
                Ok(())
            }
            ShellChain::Ring(w) => w.next(rng, q, p),
        }
    }

    pub fn finish(&self) -> Result<()> {
        match self {
            ShellChain::Single { .. } => Ok(()),
            ShellChain::Ring(w) => w.check_acceptance(),
        }
    }
}

pub struct ShellWalk<'a, M: Model> {
    rp: &'a RingPolymer<M>,
    cfg: &'a ShellConfig,
    energy: f64,
    modes: NormalModes,
    /// Proposal width per mode before the global scale.
    width: Vec<f64>,
    scale: f64,
    q: Vec<f64>,
    trial: Vec<f64>,
    dmode: Vec<f64>,
    dbead: Vec<f64>,
    log_weight: f64,
    accepted: usize,
    proposed: usize,
}

impl<'a, M: Model> ShellWalk<'a, M> {
    pub fn new(
        rp: &'a RingPolymer<M>,
        energy: f64,
        cfg: &'a ShellConfig,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let n = rp.n_beads();
        let m = rp.mass();
        let start = RingPolymerState::collapsed(rp.model.reference_point(), n, rp.beta_n());
        if rp.u_n(&start.q) >= energy {
            return Err(Error::ShellUnreachable {
                energy,
                attempts: 0,
            });
        }
        let modes = NormalModes::new(n);
        // per-degree-of-freedom energy scale on the shell
        let theta = (energy - rp.model.minimum_energy() * n as f64) / n as f64;
        let width = (0..n)
            .map(|k| {
                let w = rp.free_frequency(modes.order(k));
                sqrt(theta / (m * (w * w + 1.0)))
            })
            .collect();
        let mut walk = ShellWalk {
            rp,
            cfg,
            energy,
            modes,
            width,
            scale: 0.5,
            q: start.q,
            trial: vec![0.0; 2 * n],
            dmode: vec![0.0; n],
            dbead: vec![0.0; 2 * n],
            log_weight: 0.0,
            accepted: 0,
            proposed: 0,
        };
        walk.log_weight = walk.log_density(&walk.q.clone());
        let target = 0.5 * (cfg.acceptance_band[0] + cfg.acceptance_band[1]);
        let mut done = 0;
        let mut batches = 0usize;
        while done < cfg.burn_in {
            let batch = 100.min(cfg.burn_in - done);
            let before = walk.accepted;
            for _ in 0..batch {
                walk.walk(rng);
            }
            let rate = (walk.accepted - before) as f64 / batch as f64;
            // Robbins–Monro gain so the step settles
            let gain = 4.0 / sqrt(1.0 + batches as f64);
            walk.scale = (walk.scale * exp(gain * (rate - target))).clamp(1e-4, 10.0);
            batches += 1;
            done += batch;
        }
        walk.accepted = 0;
        walk.proposed = 0;
        Ok(walk)
    }

    fn log_density(&self, q: &[f64]) -> f64 {
        let k = self.energy - self.rp.u_n(q);
        if k <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.rp.n_beads() as f64 - 1.0) * log(k)
    }

    fn walk(&mut self, rng: &mut StreamRng) {
        for c in 0..2 {
            for k in 0..self.dmode.len() {
                self.dmode[k] = self.scale * self.width[k] * normal(rng);
            }
            self.modes.backward(&self.dmode, c, &mut self.dbead);
        }
        for (t, (q, d)) in self.trial.iter_mut().zip(self.q.iter().zip(&self.dbead)) {
            *t = q + d;
        }
        let u = uniform(rng);
        self.proposed += 1;
        let lw = self.log_density(&self.trial);
        if lw > f64::NEG_INFINITY && log(u) < lw - self.log_weight {
            core::mem::swap(&mut self.q, &mut self.trial);
            self.log_weight = lw;
            self.accepted += 1;
        }
    }

    pub fn next(&mut self, rng: &mut StreamRng, q: &mut [f64], p: &mut [f64]) -> Result<()> {
        for _ in 0..self.cfg.gap {
            self.walk(rng);
        }
        q.copy_from_slice(&self.q);
        if self.cfg.parity_flip && self.rp.model.x_symmetric() && uniform(rng) < 0.5 {
            for v in q.iter_mut().step_by(2) {
                *v = -*v;
            }
        }
        let kinetic = self.energy - self.rp.u_n(q);
        let mut norm = 0.0;
        for v in p.iter_mut() {
            *v = normal(rng);
            norm += *v * *v;
        }
        let s = sqrt(2.0 * self.rp.mass() * kinetic / norm);
        for v in p.iter_mut() {
            *v *= s;
        }
        Ok(())
    }

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
}

/// Draws `n_samples` shell states chain after chain (shell stream `b` for
/// chain `b`).
pub fn sample_shell_rp<M: Model>(
    rp: &RingPolymer<M>,
    energy: f64,
    n_samples: usize,
    cfg: &ShellConfig,
    seed: u64,
) -> Result<Vec<RingPolymerState>> {
    cfg.validate()?;
    crate::classical::check_energy(&rp.model, energy / rp.n_beads() as f64)?;
    let n = rp.n_beads();
    let mut out = Vec::with_capacity(n_samples);
    let mut block = 0u64;
    while out.len() < n_samples {
        let mut rng = stream(seed, Purpose::Shell, block);
        let mut chain = ShellChain::new(rp, energy, cfg, &mut rng)?;
        for _ in 0..cfg.per_chain(n).min(n_samples - out.len()) {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Harmonic, PotentialParams};
    use crate::stats::Moments;

    #[test]
    fn states_lie_on_shell_with_harmonic_equipartition() {
        let h = Harmonic {
            mass: 1.0,
            omega_x: 1.0,
            omega_y: 1.7,
            hbar: 1.0,
        };
        let rp = RingPolymer::new(h, 6, 0.5).unwrap();
        let e = 6.0 * 2.0;
        let cfg = ShellConfig {
            burn_in: 5000,
            gap: 50,
            chain_samples: 100,
            ..ShellConfig::default()
        };
        let states = sample_shell_rp(&rp, e, 2000, &cfg, 4).unwrap();
        let mut u = Moments::default();
        for s in &states {
            let total = rp.energy(&s.q, &s.p);
            assert!((total - e).abs() < 1e-10 * e);
            u.push(rp.u_n(&s.q));
        }
        // all 4N phase-space coordinates are quadratic, so U_N takes half on average
        assert!(
            (u.mean() - 0.5 * e).abs() < 5.0 * u.std_error() + 0.01 * e,
            "{}",
            u.mean()
        );
    }

    #[test]
    fn one_bead_uses_box_rejection() {
        let p = PotentialParams::default();
        let rp = RingPolymer::classical(p);
        let states = sample_shell_rp(&rp, 2.0, 50, &ShellConfig::default(), 3).unwrap();
        for s in &states {
            assert!((rp.energy(&s.q, &s.p) - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_below_floor_is_rejected() {
        let p = PotentialParams::default();
        let rp = RingPolymer::new(p, 4, 0.3).unwrap();
        assert!(sample_shell_rp(
            &rp,
            4.0 * p.minimum_energy() - 1.0,
            5,
            &ShellConfig::default(),
            0
        )
        .is_err());
    }
}
