//! Ensemble drivers for RPMD OTOCs, centroid sections and gyration
//! statistics. The classical module reuses these with one bead.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use super::sampler::RpChain;
use super::shell::ShellChain;
use super::{PileConfig, RingPolymer, ShellConfig};
use crate::ensemble::{block_sizes, Executor, FnEnsemble};
use crate::error::{invalid, Result};
use crate::otoc::{OtocKind, OtocMeta, OtocSeries};
use crate::potential::Model;
use crate::rng::{stream, Purpose};
use crate::stats::Moments;
use crate::trajectory::{record_stability, trace_section, Propagation, Section, SectionPoint};

/// Sampling settings for RPMD runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RpmdConfig {
    pub thermostat: PileConfig,
    pub shell: ShellConfig,
}

struct BlockResult {
    moments: Vec<Moments>,
    drift: f64,
}

/// Per-time means and standard errors. With ten or more blocks the error is
/// the larger of the naive one and the spread of block means, which absorbs
/// correlation between samples from one chain.
fn reduce(blocks: &[BlockResult], n_out: usize) -> (Vec<Moments>, Vec<f64>, f64) {
    let mut total = vec![Moments::default(); n_out];
    let mut block_means = vec![Moments::default(); n_out];
    let mut drift: f64 = 0.0;
    for b in blocks {
        for (t, m) in total.iter_mut().zip(&b.moments) {
            t.merge(m);
        }
        for (bm, m) in block_means.iter_mut().zip(&b.moments) {
            bm.push(m.mean());
        }
        drift = drift.max(b.drift);
    }
    let se = total
        .iter()
        .zip(&block_means)
        .map(|(t, bm)| {
            if blocks.len() >= 10 {
                t.std_error().max(bm.std_error())
            } else {
                t.std_error()
            }
        })
        .collect();
    (total, se, drift)
}

fn assemble(
    prop: &Propagation,
    blocks: &[BlockResult],
    kind: OtocKind,
    mut meta: OtocMeta,
) -> OtocSeries {
    let (moments, se, drift) = reduce(blocks, prop.n_out());
    meta.max_energy_drift = Some(drift);
    let mut s = OtocSeries::from_moments(prop.times(), &moments, kind, meta);
    s.std_errors = se;
    s
}

fn check_common(prop: &Propagation, n_traj: usize) -> Result<()> {
    prop.validate()?;
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be at least 1"));
    }
    Ok(())
}

/// Thermal OTOC ensemble: chain `b` seeds thermal stream `b`.
pub(crate) fn thermal_engine<M: Model, E: Executor>(
    sys: &RingPolymer<M>,
    temperature: f64,
    prop: &Propagation,
    n_traj: usize,
    cfg: &PileConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    check_common(prop, n_traj)?;
    cfg.validate()?;
    if !(temperature > 0.0) {
        return Err(invalid("temperature", "must be positive"));
    }
    let n = sys.n_beads();
    let per = if n == 1 {
        cfg.metropolis.chain_samples
    } else {
        cfg.chain_samples
    };
    let sizes = block_sizes(n_traj, per);
    let hbar = sys.model.hbar();
    let work = FnEnsemble::new(sizes.len(), |b| {
        let mut rng = stream(seed, Purpose::Thermal, b as u64);
        let mut chain = RpChain::new(sys, temperature, cfg, &mut rng)?;
        let mut moments = vec![Moments::default(); prop.n_out()];
        let mut drift: f64 = 0.0;
        let (mut q, mut p) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        for j in 0..sizes[b] {
            chain.next(&mut rng, &mut q, &mut p)?;
            let rec = record_stability(sys, &mut q, &mut p, prop, hbar, b * per + j)?;
            for (m, v) in moments.iter_mut().zip(&rec.values) {
                m.push(*v);
            }
            drift = drift.max(rec.max_energy_drift);
        }
        chain.finish()?;
        Ok(BlockResult { moments, drift })
    });
    let blocks = exec.run_all(&work)?;
    let meta = OtocMeta {
        temperature: Some(temperature),
        n_beads: Some(n),
        seed: Some(seed),
        dt: Some(prop.dt),
        ..OtocMeta::default()
    };
    Ok(assemble(prop, &blocks, OtocKind::RpmdThermal, meta))
}

/// Shell OTOC ensemble at total `H_N = energy`: chain `b` seeds shell
/// stream `b`. The reported drift is relative to `|energy|`.
pub(crate) fn micro_engine<M: Model, E: Executor>(
    sys: &RingPolymer<M>,
    energy: f64,
    prop: &Propagation,
    n_traj: usize,
    cfg: &ShellConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    check_common(prop, n_traj)?;
    cfg.validate()?;
    let n = sys.n_beads();
    let per = cfg.per_chain(n);
    let sizes = block_sizes(n_traj, per);
    let hbar = sys.model.hbar();
    let work = FnEnsemble::new(sizes.len(), |b| {
        let mut rng = stream(seed, Purpose::Shell, b as u64);
        let mut chain = ShellChain::new(sys, energy, cfg, &mut rng)?;
        let mut moments = vec![Moments::default(); prop.n_out()];
        let mut drift: f64 = 0.0;
        let (mut q, mut p) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        for j in 0..sizes[b] {
            chain.next(&mut rng, &mut q, &mut p)?;
            let rec = record_stability(sys, &mut q, &mut p, prop, hbar, b * per + j)?;
            for (m, v) in moments.iter_mut().zip(&rec.values) {
                m.push(*v);
            }
            drift = drift.max(rec.max_energy_drift / fabs(energy).max(f64::MIN_POSITIVE));
        }
        chain.finish()?;
        Ok(BlockResult { moments, drift })
    });
    let blocks = exec.run_all(&work)?;
    let meta = OtocMeta {
        energy: Some(energy),
        n_beads: Some(n),
        seed: Some(seed),
        dt: Some(prop.dt),
        ..OtocMeta::default()
    };
    Ok(assemble(prop, &blocks, OtocKind::RpmdMicro, meta))
}

/// Centroid section ensemble on the shell.
pub(crate) fn section_engine<M: Model, E: Executor>(
    sys: &RingPolymer<M>,
    energy: f64,
    n_traj: usize,
    prop: &Propagation,
    cfg: &ShellConfig,
    seed: u64,
    exec: &E,
) -> Result<Section> {
    check_common(prop, n_traj)?;
    cfg.validate()?;
    let n = sys.n_beads();
    let per = cfg.per_chain(n);
    let sizes = block_sizes(n_traj, per);
    let t_max = prop.steps() as f64 * fabs(prop.dt);
    let work = FnEnsemble::new(sizes.len(), |b| {
        let mut rng = stream(seed, Purpose::Shell, b as u64);
        let mut chain = ShellChain::new(sys, energy, cfg, &mut rng)?;
        let (mut q, mut p) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        let mut traces = Vec::with_capacity(sizes[b]);
        for j in 0..sizes[b] {
            chain.next(&mut rng, &mut q, &mut p)?;
            traces.push(trace_section(sys, &mut q, &mut p, prop, b * per + j)?);
        }
        chain.finish()?;
        Ok(traces)
    });
    let blocks = exec.run_all(&work)?;
    let mut section = Section {
        n_traj,
        t_max,
        ..Section::default()
    };
    let scale = fabs(energy).max(f64::MIN_POSITIVE);
    for (id, tr) in blocks.into_iter().flatten().enumerate() {
        let rate = tr.log_stretch / t_max;
        for c in &tr.crossings {
            section.points.push(SectionPoint {
                trajectory: id,
                time: c.time,
                x: c.x,
                px: c.px,
                max_rg: tr.max_rg,
                stretch_rate: rate,
            });
        }
        section.trajectory_max_rg.push(tr.max_rg);
        section.trajectory_stretch.push(rate);
        section.trajectory_crossings.push(tr.crossings.len());
        section.max_rel_energy_drift = section
            .max_rel_energy_drift
            .max(tr.max_energy_drift / scale);
    }
    section.no_crossings = section.points.is_empty();
    Ok(section)
}

/// RPMD OTOC `ħ² ⟨|∂X_t/∂X_0|²⟩` over `e^{−β_N H_N}`; one bead gives the
/// classical OTOC bit for bit.
pub fn rpmd_otoc<M: Model, E: Executor>(
    model: &M,
    temperature: f64,
    n_beads: usize,
    prop: &Propagation,
    n_traj: usize,
    cfg: &PileConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    let sys = RingPolymer::new(model, n_beads, temperature)?;
    thermal_engine(&sys, temperature, prop, n_traj, cfg, seed, exec)
}

/// RPMD OTOC averaged over the `H_N = N · energy_per_bead` shell, springs
/// set by `temperature` (use `V_b` per bead for the barrier-top shell).
#[allow(clippy::too_many_arguments)]
pub fn rpmd_micro_otoc<M: Model, E: Executor>(
    model: &M,
    temperature: f64,
    n_beads: usize,
    energy_per_bead: f64,
    prop: &Propagation,
    n_traj: usize,
    cfg: &ShellConfig,
    seed: u64,
    exec: &E,
) -> Result<OtocSeries> {
    crate::classical::check_energy(model, energy_per_bead)?;
    let sys = RingPolymer::new(model, n_beads, temperature)?;
    let mut s = micro_engine(
        &sys,
        n_beads as f64 * energy_per_bead,
        prop,
        n_traj,
        cfg,
        seed,
        exec,
    )?;
    s.meta.temperature = Some(temperature);
    Ok(s)
}

/// Centroid `(X, P_X)` at `Y = 0`, `Ẏ > 0` crossings on the
/// `H_N = N · energy_per_bead` shell, each point tagged with its
/// trajectory's largest radius of gyration.
#[allow(clippy::too_many_arguments)]
pub fn centroid_poincare<M: Model, E: Executor>(
    model: &M,
    temperature: f64,
    n_beads: usize,
    energy_per_bead: f64,
    n_traj: usize,
    prop: &Propagation,
    cfg: &ShellConfig,
    seed: u64,
    exec: &E,
) -> Result<CentroidSection> {
    crate::classical::check_energy(model, energy_per_bead)?;
    let sys = RingPolymer::new(model, n_beads, temperature)?;
    let section = section_engine(
        &sys,
        n_beads as f64 * energy_per_bead,
        n_traj,
        prop,
        cfg,
        seed,
        exec,
    )?;
    Ok(CentroidSection {
        temperature,
        n_beads,
        section,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSection {
    pub temperature: f64,
    pub n_beads: usize,
    pub section: Section,
}

/// Result of the two-component split of a one-dimensional sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Modality {
    pub means: [f64; 2],
    pub spreads: [f64; 2],
    pub weights: [f64; 2],
    /// `|μ₁ − μ₂| / √((σ₁² + σ₂²)/2)`.
    pub separation: f64,
    pub bimodal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GyrationHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub modality: Modality,
}

/// Histogram of per-trajectory largest `r_g` with `bins` equal bins over
/// `range` (default: zero to the largest value), plus a modality test.
pub fn gyration_histogram(
    max_rg: &[f64],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<GyrationHistogram> {
    if bins == 0 {
        return Err(invalid("bins", "must be positive"));
    }
    let hi_data = max_rg.iter().copied().fold(0.0, f64::max);
    let (lo, mut hi) = range.unwrap_or((0.0, hi_data));
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in max_rg {
        if v >= lo && v <= hi {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    Ok(GyrationHistogram {
        edges,
        counts,
        modality: two_component_split(max_rg),
    })
}

/// Two-component Gaussian mixture fitted by EM from the best two-means split.
/// The sample is called bimodal when the fitted components are separated
/// by more than twice their pooled spread and each holds at least 5% of the
/// weight.
pub fn two_component_split(values: &[f64]) -> Modality {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let degenerate = Modality {
        means: [v.first().copied().unwrap_or(0.0); 2],
        spreads: [0.0; 2],
        weights: [1.0, 0.0],
        separation: 0.0,
        bimodal: false,
    };
    if n < 4 || v[n - 1] - v[0] <= 1e-12 * fabs(v[n - 1]).max(1e-300) {
        return degenerate;
    }
    let prefix: Vec<f64> = core::iter::once(0.0)
        .chain(v.iter().scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        }))
        .collect();
    let prefix2: Vec<f64> = core::iter::once(0.0)
        .chain(v.iter().scan(0.0, |s, x| {
            *s += x * x;
            Some(*s)
        }))
        .collect();
    let ss = |a: usize, b: usize| {
        let k = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        (prefix2[b] - prefix2[a]) - s * s / k
    };
    let mut best = (f64::INFINITY, 1);
    for cut in 1..n {
        let w = ss(0, cut) + ss(cut, n);
        if w < best.0 {
            best = (w, cut);
        }
    }
    let cut = best.1;
    let mean = |a: usize, b: usize| (prefix[b] - prefix[a]) / (b - a) as f64;
    let floor = 1e-6 * (v[n - 1] - v[0]);
    let var = |a: usize, b: usize| (ss(a, b) / (b - a) as f64).max(floor * floor);
    let mut mu = [mean(0, cut), mean(cut, n)];
    let mut s2 = [var(0, cut), var(cut, n)];
    let mut w = [cut as f64 / n as f64, (n - cut) as f64 / n as f64];
    let gauss = |x: f64, m: f64, s2: f64| libm::exp(-0.5 * (x - m) * (x - m) / s2) / sqrt(s2);
    for _ in 0..200 {
        let mut acc = [[0.0f64; 3]; 2];
        for &x in &v {
            let a = w[0] * gauss(x, mu[0], s2[0]);
            let b = w[1] * gauss(x, mu[1], s2[1]);
            let tot = a + b;
            if tot <= 0.0 {
                continue;
            }
            for (k, r) in [a / tot, b / tot].into_iter().enumerate() {
                acc[k][0] += r;
                acc[k][1] += r * x;
                acc[k][2] += r * x * x;
            }
        }
        let mut moved = 0.0f64;
        for k in 0..2 {
            if acc[k][0] < 1e-9 {
                continue;
            }
            let m = acc[k][1] / acc[k][0];
            let s = (acc[k][2] / acc[k][0] - m * m).max(floor * floor);
            moved = moved.max(fabs(m - mu[k]));
            mu[k] = m;
            s2[k] = s;
            w[k] = acc[k][0] / n as f64;
        }
        if moved < 1e-12 * (v[n - 1] - v[0]) {
            break;
        }
    }
    let separation = fabs(mu[1] - mu[0]) / sqrt(0.5 * (s2[0] + s2[1]));
    let (lo, hi) = if mu[0] <= mu[1] { (0, 1) } else { (1, 0) };
    Modality {
        means: [mu[lo], mu[hi]],
        spreads: [sqrt(s2[lo]), sqrt(s2[hi])],
        weights: [w[lo], w[hi]],
        separation,
        bimodal: separation > 2.0 && w[0].min(w[1]) >= 0.05,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_thermal_otoc, MetropolisConfig};
    use crate::ensemble::Serial;
    use crate::potential::{Harmonic, PotentialParams};

    fn quick() -> PileConfig {
        PileConfig {
            dt: 0.05,
            burn_in_time: 5.0,
            gap_time: 1.0,
            centroid_friction: Some(1.0),
            chain_samples: 8,
            ..PileConfig::default()
        }
    }

    #[test]
    fn one_bead_rpmd_is_the_classical_otoc() {
        let p = PotentialParams::default();
        let prop = Propagation::new(0.01, 2.0, 10).unwrap();
        let cfg = PileConfig {
            metropolis: MetropolisConfig {
                chain_samples: 16,
                ..MetropolisConfig::default()
            },
            ..PileConfig::default()
        };
        let a = rpmd_otoc(&p, 0.3, 1, &prop, 40, &cfg, 11, &Serial).unwrap();
        let b = classical_thermal_otoc(&p, 0.3, &prop, 40, &cfg.metropolis, 11, &Serial).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.std_errors, b.std_errors);
    }

    #[test]
    fn harmonic_centroid_tangent_is_exact() {
        let h = Harmonic {
            mass: 1.0,
            omega_x: 1.3,
            omega_y: 0.7,
            hbar: 1.0,
        };
        let prop = Propagation::new(0.02, 6.0, 5).unwrap();
        let s = rpmd_otoc(&h, 0.5, 8, &prop, 16, &quick(), 2, &Serial).unwrap();
        for (t, c) in s.times.iter().zip(&s.values) {
            let exact = (1.3 * t).cos().powi(2);
            assert!((c - exact).abs() < 1e-6, "t={t}: {c} vs {exact}");
        }
        assert_eq!(s.meta.n_beads, Some(8));
    }

    #[test]
    fn micro_rpmd_conserves_ring_energy() {
        let p = PotentialParams::default();
        let prop = Propagation::new(0.005, 3.0, 20).unwrap();
        let cfg = ShellConfig {
            burn_in: 2000,
            gap: 50,
            chain_samples: 4,
            ..ShellConfig::default()
        };
        let s =
            rpmd_micro_otoc(&p, 0.25, 8, p.barrier_height(), &prop, 8, &cfg, 5, &Serial).unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-12);
        assert!(s.meta.max_energy_drift.unwrap() < 1e-6);
        assert_eq!(s.meta.energy, Some(8.0 * p.barrier_height()));
    }

    #[test]
    fn centroid_section_records_gyration() {
        let p = PotentialParams::default();
        let prop = Propagation::new(0.005, 10.0, 1).unwrap();
        let cfg = ShellConfig {
            burn_in: 2000,
            gap: 50,
            chain_samples: 4,
            ..ShellConfig::default()
        };
        let cs =
            centroid_poincare(&p, 0.25, 8, p.barrier_height(), 8, &prop, &cfg, 6, &Serial).unwrap();
        assert_eq!(cs.section.trajectory_max_rg.len(), 8);
        assert!(cs.section.trajectory_max_rg.iter().all(|r| *r > 0.0));
        for pt in &cs.section.points {
            assert!(pt.max_rg <= cs.section.trajectory_max_rg[pt.trajectory] + 1e-12);
        }
    }

    #[test]
    fn collapsed_polymers_fill_one_bin() {
        let h = gyration_histogram(&[0.0; 50], 10, None).unwrap();
        assert_eq!(h.counts[0], 50);
        assert_eq!(h.counts.iter().sum::<usize>(), 50);
        assert!(!h.modality.bimodal);
    }

    #[test]
    fn mixture_split_separates_two_clusters() {
        let mut rng = stream(3, Purpose::Thermal, 0);
        let single: Vec<f64> = (0..2000)
            .map(|_| 1.0 + 0.1 * crate::rng::normal(&mut rng))
            .collect();
        assert!(!two_component_split(&single).bimodal);
        let mixed: Vec<f64> = (0..2000)
            .map(|i| if i % 4 == 0 { 2.0 } else { 0.5 } + 0.1 * crate::rng::normal(&mut rng))
            .collect();
        let m = two_component_split(&mixed);
        assert!(m.bimodal);
        assert!((m.means[0] - 0.5).abs() < 0.02 && (m.means[1] - 2.0).abs() < 0.03);
        assert!((m.weights[1] - 0.25).abs() < 0.03);
    }
}
