//! Exact quantum reference on a sine-DVR grid.
//!
//! The kinetic energy is represented in the particle-in-a-box sine basis of
//! each axis and transformed to the grid, which gives spectral accuracy for
//! smooth states and exact box levels for `V = 0`. With an x-symmetric
//! potential on a mirror-symmetric grid the Hamiltonian splits into even and
//! odd blocks, each diagonalised densely.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
use libm::{cos, exp, expm1, log, sin, sqrt};

use crate::classical::SamplingBox;
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh_lowest, Reduced};
use crate::otoc::{OtocKind, OtocMeta, OtocSeries};
use crate::potential::{Model, Position2, PotentialParams};

/// Interior points of `[x_min, x_max] × [y_min, y_max]`; the wavefunction
/// vanishes on the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_min: -6.5,
            x_max: 6.5,
            n_x: 63,
            y_min: -3.5,
            y_max: 9.0,
            n_y: 61,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_x < 16 || self.n_y < 16 {
            return Err(invalid("grid", "n_x and n_y must be at least 16"));
        }
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(invalid("grid", "need x_min < x_max and y_min < y_max"));
        }
        if ![self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(invalid("grid", "extents must be finite"));
        }
        Ok(())
    }

    /// Whether the grid extends over the classical sampling box.
    pub fn covers(&self, bounds: &SamplingBox) -> bool {
        self.x_min <= bounds.x_min
            && self.x_max >= bounds.x_max
            && self.y_min <= bounds.y_min
            && self.y_max >= bounds.y_max
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x + 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.n_y + 1) as f64
    }

    pub fn x_points(&self) -> Vec<f64> {
        (1..=self.n_x)
            .map(|i| self.x_min + i as f64 * self.dx())
            .collect()
    }

    pub fn y_points(&self) -> Vec<f64> {
        (1..=self.n_y)
            .map(|j| self.y_min + j as f64 * self.dy())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn x_mirror_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * (self.x_max - self.x_min)
    }

    /// Same box with roughly `factor` times the point density per axis.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            n_x: (self.n_x + 1) * factor - 1,
            n_y: (self.n_y + 1) * factor - 1,
            ..*self
        }
    }
}

/// Dense `n × n` kinetic matrix and first-derivative matrix of the sine DVR
/// on an interval of length `length`.
fn sine_dvr(n: usize, length: f64, mass: f64, hbar: f64) -> (Vec<f64>, Vec<f64>) {
    let np1 = (n + 1) as f64;
    let norm = sqrt(2.0 / np1);
    let u: Vec<f64> = (0..n * n)
        .map(|ik| {
            let (i, k) = (ik / n + 1, ik % n + 1);
            norm * sin(PI * (i * k) as f64 / np1)
        })
        .collect();
    let kin: Vec<f64> = (1..=n)
        .map(|k| {
            let w = PI * k as f64 / length;
            hbar * hbar * w * w / (2.0 * mass)
        })
        .collect();
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..n).map(|k| u[i * n + k] * kin[k] * u[j * n + k]).sum();
            t[i * n + j] = s;
            t[j * n + i] = s;
        }
    }
    // ⟨φ_k|∂|φ_k'⟩ = 4kk' / (L(k² − k'²)) for k + k' odd
    let mut dk = vec![0.0; n * n];
    for k in 1..=n {
        for kp in 1..=n {
            if (k + kp) % 2 == 1 {
                let (a, b) = (k as f64, kp as f64);
                dk[(k - 1) * n + kp - 1] = 4.0 * a * b / (length * (a * a - b * b));
            }
        }
    }
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for kp in 0..n {
            tmp[i * n + kp] = (0..n).map(|k| u[i * n + k] * dk[k * n + kp]).sum();
        }
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (0..n).map(|kp| tmp[i * n + kp] * u[j * n + kp]).sum();
        }
    }
    (t, d)
}

/// x-parity of a block of states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    /// No mirror symmetry was used.
    Mixed,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::Mixed => "mixed",
        }
    }
}

/// Grid Hamiltonian `T_x ⊗ 1 + 1 ⊗ T_y + V`; full-grid index `i·n_y + j`.
#[derive(Clone, Debug)]
pub struct GridHamiltonian {
    pub grid: GridSpec,
    pub mass: f64,
    pub hbar: f64,
    tx: Vec<f64>,
    ty: Vec<f64>,
    /// `∂/∂x` on the x grid.
    dx_op: Vec<f64>,
    potential: Vec<f64>,
    x_symmetric: bool,
}

pub fn build_hamiltonian<M: Model>(model: &M, grid: &GridSpec) -> Result<GridHamiltonian> {
    grid.validate()?;
    let (m, hbar) = (model.mass(), model.hbar());
    let (tx, dx_op) = sine_dvr(grid.n_x, grid.x_max - grid.x_min, m, hbar);
    let (ty, _) = sine_dvr(grid.n_y, grid.y_max - grid.y_min, m, hbar);
    let ys = grid.y_points();
    let potential: Vec<f64> = grid
        .x_points()
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| model.energy(Position2::new(x, y))))
        .collect();
    if potential.iter().any(|v| !v.is_finite()) {
        return Err(invalid("grid", "potential is not finite on the grid"));
    }
    Ok(GridHamiltonian {
        grid: *grid,
        mass: m,
        hbar,
        tx,
        ty,
        dx_op,
        potential,
        x_symmetric: model.x_symmetric() && grid.x_mirror_symmetric(),
    })
}

impl GridHamiltonian {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Largest kinetic energy the coarser axis resolves, `ħ²π²/(2m h²)`.
    pub fn nyquist_energy(&self) -> f64 {
        let h = self.grid.dx().max(self.grid.dy());
        self.hbar * self.hbar * PI * PI / (2.0 * self.mass * h * h)
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// `out = H ψ` on the full grid.
    pub fn apply(&self, psi: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.n_x, self.grid.n_y);
        for i in 0..nx {
            for j in 0..ny {
                let mut s = self.potential[i * ny + j] * psi[i * ny + j];
                s += (0..nx)
                    .map(|k| self.tx[i * nx + k] * psi[k * ny + j])
                    .sum::<f64>();
                s += self.ty[j * ny..(j + 1) * ny]
                    .iter()
                    .zip(&psi[i * ny..(i + 1) * ny])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                out[i * ny + j] = s;
            }
        }
    }

    /// `out = ∂ψ/∂x` on the full grid.
    pub fn apply_dx(&self, psi: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.n_x, self.grid.n_y);
        for i in 0..nx {
            for j in 0..ny {
                out[i * ny + j] = (0..nx)
                    .map(|k| self.dx_op[i * nx + k] * psi[k * ny + j])
                    .sum();
            }
        }
    }

    fn blocks(&self) -> Vec<Block> {
        let nx = self.grid.n_x;
        if !self.x_symmetric {
            let cols = (0..nx).map(|i| vec![(i, 1.0)]).collect();
            return vec![Block {
                parity: Parity::Mixed,
                cols,
            }];
        }
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let half = nx / 2;
        let mut even: Vec<Vec<(usize, f64)>> =
            (0..half).map(|i| vec![(i, r), (nx - 1 - i, r)]).collect();
        if nx % 2 == 1 {
            even.push(vec![(half, 1.0)]);
        }
        let odd = (0..half).map(|i| vec![(i, r), (nx - 1 - i, -r)]).collect();
        vec![
            Block {
                parity: Parity::Even,
                cols: even,
            },
            Block {
                parity: Parity::Odd,
                cols: odd,
            },
        ]
    }

    fn block_matrix(&self, b: &Block) -> Vec<f64> {
        let (nx, ny) = (self.grid.n_x, self.grid.n_y);
        let na = b.cols.len();
        let d = na * ny;
        let mut h = vec![0.0; d * d];
        for (a, ca) in b.cols.iter().enumerate() {
            for (a2, ca2) in b.cols.iter().enumerate() {
                let t: f64 = ca
                    .iter()
                    .flat_map(|&(i, u)| ca2.iter().map(move |&(k, w)| (i, u, k, w)))
                    .map(|(i, u, k, w)| u * w * self.tx[i * nx + k])
                    .sum();
                if t == 0.0 {
                    continue;
                }
                for j in 0..ny {
                    h[(a * ny + j) * d + a2 * ny + j] += t;
                }
            }
            let (i0, _) = ca[0];
            for j in 0..ny {
                let row = (a * ny + j) * d + a * ny;
                for j2 in 0..ny {
                    h[row + j2] += self.ty[j * ny + j2];
                }
                h[row + j] += self.potential[i0 * ny + j];
            }
        }
        h
    }
}

struct Block {
    parity: Parity,
    /// Each block basis function as `(x index, coefficient)` pairs.
    cols: Vec<Vec<(usize, f64)>>,
}

/// The Hamiltonian after block-wise tridiagonal reduction; spectra for any
/// cutoff are cheap from here.
pub struct Diagonalized {
    hamiltonian: GridHamiltonian,
    blocks: Vec<(Block, Reduced)>,
}

/// Which states to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateSelection {
    Count(usize),
    EnergyCut(f64),
}

pub fn diagonalize(h: GridHamiltonian) -> Diagonalized {
    let blocks = h
        .blocks()
        .into_iter()
        .map(|b| {
            let m = h.block_matrix(&b);
            let d = b.cols.len() * h.grid.n_y;
            (b, Reduced::new(m, d))
        })
        .collect();
    Diagonalized {
        hamiltonian: h,
        blocks,
    }
}

impl Diagonalized {
    pub fn hamiltonian(&self) -> &GridHamiltonian {
        &self.hamiltonian
    }

    pub fn count_below(&self, energy: f64) -> usize {
        self.blocks.iter().map(|(_, r)| r.count_below(energy)).sum()
    }

    /// Eigenstates for `selection`, each checked to `‖Hψ − Eψ‖ < 1e-8`.
    pub fn spectrum(&self, selection: StateSelection) -> Result<EigenSpectrum> {
        let h = &self.hamiltonian;
        let ny = h.grid.n_y;
        let (per_block, e_cut): (Vec<usize>, f64) = match selection {
            StateSelection::EnergyCut(e) => {
                let nyq = h.nyquist_energy();
                if nyq < e {
                    return Err(Error::GridTooCoarse {
                        nyquist: nyq,
                        e_cut: e,
                    });
                }
                (
                    self.blocks.iter().map(|(_, r)| r.count_below(e)).collect(),
                    e,
                )
            }
            StateSelection::Count(n) => (
                self.blocks.iter().map(|(_, r)| n.min(r.dim())).collect(),
                f64::NAN,
            ),
        };
        let mut found: Vec<(f64, Parity, Vec<f64>)> = Vec::new();
        for ((block, red), &k) in self.blocks.iter().zip(&per_block) {
            let pairs = red.lowest(k);
            for s in 0..pairs.len() {
                let v = pairs.vector(s);
                let mut psi = vec![0.0; h.dim()];
                for (a, col) in block.cols.iter().enumerate() {
                    for &(i, c) in col {
                        for j in 0..ny {
                            psi[i * ny + j] += c * v[a * ny + j];
                        }
                    }
                }
                found.push((pairs.values[s], block.parity, psi));
            }
        }
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if let StateSelection::Count(n) = selection {
            found.truncate(n);
        }
        let e_cut = if e_cut.is_nan() {
            found.last().map_or(f64::NEG_INFINITY, |s| s.0)
        } else {
            e_cut
        };
        let mut hpsi = vec![0.0; h.dim()];
        for (idx, (e, _, psi)) in found.iter().enumerate() {
            h.apply(psi, &mut hpsi);
            let r = sqrt(
                hpsi.iter()
                    .zip(psi)
                    .map(|(a, b)| (a - e * b) * (a - e * b))
                    .sum(),
            );
            if !(r < 1e-8) {
                return Err(Error::EigenNonConvergence {
                    state: idx,
                    residual: r,
                });
            }
        }
        Ok(EigenSpectrum::assemble(h, found, e_cut))
    }
}

/// Eigenstates and the `x̂`, `p̂_x` matrices in their basis.
#[derive(Clone, Debug)]
pub struct EigenSpectrum {
    pub grid: GridSpec,
    pub mass: f64,
    pub hbar: f64,
    pub energies: Vec<f64>,
    pub parities: Vec<Parity>,
    /// Row `n` holds state `n` on the full grid, normalised as a vector.
    pub states: Vec<f64>,
    /// `⟨n|x̂|m⟩`, row major.
    pub x_elems: Vec<f64>,
    /// `⟨n|p̂_x|m⟩ = i · p_imag[n][m]`; real antisymmetric.
    pub p_imag: Vec<f64>,
    pub n_states: usize,
    pub e_cut: f64,
}

impl EigenSpectrum {
    fn assemble(h: &GridHamiltonian, found: Vec<(f64, Parity, Vec<f64>)>, e_cut: f64) -> Self {
        let k = found.len();
        let d = h.dim();
        let ny = h.grid.n_y;
        let xs = h.grid.x_points();
        let mut states = Vec::with_capacity(k * d);
        let mut energies = Vec::with_capacity(k);
        let mut parities = Vec::with_capacity(k);
        for (e, p, psi) in found {
            energies.push(e);
            parities.push(p);
            states.extend_from_slice(&psi);
        }
        let mut xpsi = vec![0.0; k * d];
        let mut dpsi = vec![0.0; k * d];
        for n in 0..k {
            let s = &states[n * d..(n + 1) * d];
            for (idx, v) in s.iter().enumerate() {
                xpsi[n * d + idx] = xs[idx / ny] * v;
            }
            h.apply_dx(s, &mut dpsi[n * d..(n + 1) * d]);
        }
        let mut x_elems = vec![0.0; k * k];
        let mut p_imag = vec![0.0; k * k];
        for n in 0..k {
            let sn = &states[n * d..(n + 1) * d];
            for m in 0..k {
                if m >= n {
                    let xv: f64 = sn
                        .iter()
                        .zip(&xpsi[m * d..(m + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum();
                    x_elems[n * k + m] = xv;
                    x_elems[m * k + n] = xv;
                }
                // p = −iħ ∂ₓ
                p_imag[n * k + m] = -h.hbar
                    * sn.iter()
                        .zip(&dpsi[m * d..(m + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
        // enforce exact antisymmetry of the projected derivative
        for n in 0..k {
            for m in 0..n {
                let a = 0.5 * (p_imag[n * k + m] - p_imag[m * k + n]);
                p_imag[n * k + m] = a;
                p_imag[m * k + n] = -a;
            }
            p_imag[n * k + n] = 0.0;
        }
        EigenSpectrum {
            grid: h.grid,
            mass: h.mass,
            hbar: h.hbar,
            energies,
            parities,
            states,
            x_elems,
            p_imag,
            n_states: k,
            e_cut,
        }
    }

    pub fn state(&self, n: usize) -> &[f64] {
        let d = self.grid.len();
        &self.states[n * d..(n + 1) * d]
    }

    pub fn x(&self, n: usize, m: usize) -> f64 {
        self.x_elems[n * self.n_states + m]
    }

    pub fn p_imag(&self, n: usize, m: usize) -> f64 {
        self.p_imag[n * self.n_states + m]
    }

    /// `Im⟨n|p̂_x|m⟩` from the commutator `[Ĥ, x̂] = −iħ p̂_x / m`.
    pub fn p_from_commutator(&self, n: usize, m: usize) -> f64 {
        self.mass * (self.energies[n] - self.energies[m]) * self.x(n, m) / self.hbar
    }

    /// Largest `|⟨n|m⟩ − δ_nm|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.n_states {
            for m in 0..=n {
                let s: f64 = self
                    .state(n)
                    .iter()
                    .zip(self.state(m))
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if n == m { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Diagonalises on `grid` and keeps the states selected.
pub fn solve_spectrum<M: Model>(
    model: &M,
    grid: &GridSpec,
    selection: StateSelection,
) -> Result<EigenSpectrum> {
    diagonalize(build_hamiltonian(model, grid)?).spectrum(selection)
}

/// Spectrum good for the Kubo OTOC at every temperature in `temperatures`:
/// starts from `e_start` plus the intermediate margin and raises the cutoff
/// until each thermal window is complete.
pub fn thermal_spectrum(
    diag: &Diagonalized,
    temperatures: &[f64],
    k_b: f64,
    e_start: f64,
    cfg: &KuboConfig,
) -> Result<EigenSpectrum> {
    let mut e_cut = e_start + cfg.intermediate_margin;
    for _ in 0..20 {
        let spec = diag.spectrum(StateSelection::EnergyCut(e_cut))?;
        let mut raise: Option<f64> = None;
        for &t in temperatures {
            match ThermalWindow::new(&spec, t, k_b, cfg) {
                Ok(_) => {}
                Err(Error::TailTruncation { required, .. }) => {
                    raise = Some(raise.map_or(required, |r| r.max(required)))
                }
                Err(e) => return Err(e),
            }
        }
        match raise {
            None => return Ok(spec),
            Some(r) => e_cut = r.max(e_cut) + 0.5,
        }
    }
    Err(invalid("e_cut", "thermal cutoff did not settle"))
}

/// Default thermal cutoff `V_b + 10 k_B T`.
pub fn default_e_cut(params: &PotentialParams, temperature: f64) -> f64 {
    params.barrier_height() + 10.0 * params.k_b * temperature
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KuboConfig {
    /// Largest allowed Boltzmann weight of the first state left out of the
    /// thermal sum.
    pub tail_tolerance: f64,
    /// Retained states must reach this far above the thermal cutoff; they
    /// serve as intermediate states in `[x̂(t), p̂_x]`.
    pub intermediate_margin: f64,
}

impl Default for KuboConfig {
    fn default() -> Self {
        KuboConfig {
            tail_tolerance: 1e-6,
            intermediate_margin: 35.0,
        }
    }
}

/// The states carrying thermal weight at one temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalWindow {
    pub beta: f64,
    pub n_thermal: usize,
    /// Energy of the first state left out.
    pub e_thermal: f64,
    /// `e^{−β(E − E₀)}` of the thermal states and their sum.
    pub boltzmann: Vec<f64>,
    pub partition: f64,
}

impl ThermalWindow {
    pub fn new(spec: &EigenSpectrum, temperature: f64, k_b: f64, cfg: &KuboConfig) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(invalid("temperature", "must be positive"));
        }
        if spec.n_states == 0 {
            return Err(invalid("spectrum", "no states"));
        }
        let beta = 1.0 / (k_b * temperature);
        let e0 = spec.energies[0];
        let all: Vec<f64> = spec
            .energies
            .iter()
            .map(|e| exp(-beta * (e - e0)))
            .collect();
        let z_all: f64 = all.iter().sum();
        let required = e0 + log(z_all / cfg.tail_tolerance) / beta;
        let cut = spec.energies.iter().position(|&e| e > required);
        let Some(n_thermal) = cut else {
            return Err(Error::TailTruncation {
                tail: all[all.len() - 1] / z_all,
                e_cut: spec.e_cut,
                required: required + cfg.intermediate_margin,
            });
        };
        let e_thermal = spec.energies[n_thermal];
        if spec.energies[spec.n_states - 1] < required + cfg.intermediate_margin
            && spec.e_cut < required + cfg.intermediate_margin
        {
            return Err(Error::TailTruncation {
                tail: all[n_thermal] / z_all,
                e_cut: spec.e_cut,
                required: required + cfg.intermediate_margin,
            });
        }
        let boltzmann = all[..n_thermal].to_vec();
        let partition = boltzmann.iter().sum();
        Ok(ThermalWindow {
            beta,
            n_thermal,
            e_thermal,
            boltzmann,
            partition,
        })
    }

    pub fn weight(&self, spec: &EigenSpectrum, n: usize, m: usize) -> f64 {
        let e0 = spec.energies[0];
        kubo_weight(
            self.beta,
            spec.energies[n] - e0,
            spec.energies[m] - e0,
            self.partition,
        )
    }
}

/// Kubo weight `(e^{−βE_n} − e^{−βE_m}) / (βZ(E_m − E_n))`, `e^{−βE_n}/Z`
/// when the energies coincide. Symmetric in `n, m`.
pub fn kubo_weight(beta: f64, e_n: f64, e_m: f64, partition: f64) -> f64 {
    let (lo, hi) = if e_n <= e_m { (e_n, e_m) } else { (e_m, e_n) };
    let gap = beta * (hi - lo);
    let base = exp(-beta * lo) / partition;
    if gap < 1e-300 {
        base
    } else {
        base * (-expm1(-gap)) / gap
    }
}

/// `b_nm(t) = ⟨n|[x̂(t), p̂_x]|m⟩ / i` for thermal `n, m`, with all retained
/// states as intermediates; row major, real and imaginary parts.
fn commutator_elements(spec: &EigenSpectrum, n_th: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let k = spec.n_states;
    let hb = spec.hbar;
    // f_k = e^{−iE_k t/ħ}
    let (fr, fi): (Vec<f64>, Vec<f64>) = spec
        .energies
        .iter()
        .map(|e| (cos(e * t / hb), -sin(e * t / hb)))
        .unzip();
    // S = X F P on thermal rows and columns
    let mut sr = vec![0.0; n_th * n_th];
    let mut si = vec![0.0; n_th * n_th];
    let mut ar = vec![0.0; k];
    let mut ai = vec![0.0; k];
    for n in 0..n_th {
        for q in 0..k {
            let x = spec.x_elems[n * k + q];
            ar[q] = x * fr[q];
            ai[q] = x * fi[q];
        }
        for m in 0..n_th {
            let (mut re, mut im) = (0.0, 0.0);
            for q in 0..k {
                let p = spec.p_imag[q * k + m];
                re += ar[q] * p;
                im += ai[q] * p;
            }
            sr[n * n_th + m] = re;
            si[n * n_th + m] = im;
        }
    }
    // b_nm / i = f̄_n S_nm + f_m S̄_mn
    let mut br = vec![0.0; n_th * n_th];
    let mut bi = vec![0.0; n_th * n_th];
    for n in 0..n_th {
        for m in 0..n_th {
            let (s1r, s1i) = (sr[n * n_th + m], si[n * n_th + m]);
            let (s2r, s2i) = (sr[m * n_th + n], -si[m * n_th + n]);
            let (a_r, a_i) = (fr[n] * s1r + fi[n] * s1i, fr[n] * s1i - fi[n] * s1r);
            let (b_r, b_i) = (fr[m] * s2r - fi[m] * s2i, fr[m] * s2i + fi[m] * s2r);
            br[n * n_th + m] = a_r + b_r;
            bi[n * n_th + m] = a_i + b_i;
        }
    }
    (br, bi)
}

/// One `(n, m)` term of the Kubo sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScramblingElement {
    pub n: usize,
    pub m: usize,
    pub weight: f64,
    pub b_sq: f64,
    pub contribution: f64,
}

fn kubo_at(spec: &EigenSpectrum, win: &ThermalWindow, weights: &[f64], t: f64) -> f64 {
    let n_th = win.n_thermal;
    let (br, bi) = commutator_elements(spec, n_th, t);
    let mut c = 0.0;
    for idx in 0..n_th * n_th {
        c += weights[idx] * (br[idx] * br[idx] + bi[idx] * bi[idx]);
    }
    c
}

fn weight_table(spec: &EigenSpectrum, win: &ThermalWindow) -> Vec<f64> {
    let n_th = win.n_thermal;
    (0..n_th * n_th)
        .map(|idx| win.weight(spec, idx / n_th, idx % n_th))
        .collect()
}

/// Kubo-regularised OTOC `Σ_{nm} w_nm |b_nm(t)|²` at each of `times`
/// (negative times allowed), with exact phases.
pub fn kubo_otoc(
    spec: &EigenSpectrum,
    temperature: f64,
    k_b: f64,
    times: &[f64],
    cfg: &KuboConfig,
) -> Result<OtocSeries> {
    let win = ThermalWindow::new(spec, temperature, k_b, cfg)?;
    let weights = weight_table(spec, &win);
    let values = times
        .iter()
        .map(|&t| kubo_at(spec, &win, &weights, t))
        .collect();
    Ok(OtocSeries {
        times: times.to_vec(),
        values,
        std_errors: vec![0.0; times.len()],
        n_samples: win.n_thermal,
        kind: OtocKind::QuantumKubo,
        meta: OtocMeta {
            temperature: Some(temperature),
            ..OtocMeta::default()
        },
    })
}

/// Every thermal `(n, m)` contribution at time `t`, largest first.
pub fn scrambling_elements(
    spec: &EigenSpectrum,
    temperature: f64,
    k_b: f64,
    t: f64,
    cfg: &KuboConfig,
) -> Result<Vec<ScramblingElement>> {
    let win = ThermalWindow::new(spec, temperature, k_b, cfg)?;
    let n_th = win.n_thermal;
    let (br, bi) = commutator_elements(spec, n_th, t);
    let mut out: Vec<ScramblingElement> = (0..n_th * n_th)
        .map(|idx| {
            let (n, m) = (idx / n_th, idx % n_th);
            let weight = win.weight(spec, n, m);
            let b_sq = br[idx] * br[idx] + bi[idx] * bi[idx];
            ScramblingElement {
                n,
                m,
                weight,
                b_sq,
                contribution: weight * b_sq,
            }
        })
        .collect();
    out.sort_by(|a, b| b.contribution.partial_cmp(&a.contribution).unwrap());
    Ok(out)
}

/// Normalised ground state of the y motion along the slice `x = x_slice`.
pub fn y_ground_profile<M: Model>(model: &M, grid: &GridSpec, x_slice: f64) -> Result<Vec<f64>> {
    grid.validate()?;
    let ny = grid.n_y;
    let (mut h, _) = sine_dvr(ny, grid.y_max - grid.y_min, model.mass(), model.hbar());
    for (j, y) in grid.y_points().into_iter().enumerate() {
        h[j * ny + j] += model.energy(Position2::new(x_slice, y));
    }
    let pairs = eigh_lowest(h, ny, 1);
    let mut v = pairs.vector(0).to_vec();
    // fix the sign so the profile is positive
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HusimiMap {
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
    /// `Q(x0[a], p0[b])` at `a · p0.len() + b`, scaled to unit maximum.
    pub values: Vec<f64>,
    /// Maximum before scaling.
    pub peak: f64,
}

/// `|⟨g_{x₀,p₀} ⊗ χ_y|ψ_n⟩|²` with a Gaussian coherent state of width
/// `sigma_x` in x and the profile `chi_y` in y.
pub fn husimi_section(
    spec: &EigenSpectrum,
    state: usize,
    x0: &[f64],
    p0: &[f64],
    sigma_x: f64,
    chi_y: &[f64],
) -> Result<HusimiMap> {
    if state >= spec.n_states {
        return Err(invalid("state", "beyond the retained spectrum"));
    }
    if !(sigma_x > 0.0) {
        return Err(invalid("sigma_x", "must be positive"));
    }
    let (nx, ny) = (spec.grid.n_x, spec.grid.n_y);
    if chi_y.len() != ny {
        return Err(invalid("chi_y", "length must equal n_y"));
    }
    let psi = spec.state(state);
    let phi: Vec<f64> = (0..nx)
        .map(|i| {
            psi[i * ny..(i + 1) * ny]
                .iter()
                .zip(chi_y)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let xs = spec.grid.x_points();
    let pref = sqrt(spec.grid.dx()) / sqrt(sqrt(2.0 * PI * sigma_x * sigma_x));
    let mut values = Vec::with_capacity(x0.len() * p0.len());
    for &xc in x0 {
        let env: Vec<f64> = xs
            .iter()
            .zip(&phi)
            .map(|(x, f)| f * exp(-(x - xc) * (x - xc) / (4.0 * sigma_x * sigma_x)))
            .collect();
        for &pc in p0 {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, e) in xs.iter().zip(&env) {
                let ph = pc * x / spec.hbar;
                re += e * cos(ph);
                im += e * sin(ph);
            }
            values.push(pref * pref * (re * re + im * im));
        }
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(HusimiMap {
        x0: x0.to_vec(),
        p0: p0.to_vec(),
        values,
        peak,
    })
}

/// Coherent-state width `√(ħ / (2 m ω_well))`.
pub fn default_husimi_width(params: &PotentialParams) -> f64 {
    sqrt(params.hbar / (2.0 * params.mass * params.well_frequency()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Free, Harmonic};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn harmonic() -> Harmonic {
        Harmonic {
            mass: 1.0,
            omega_x: 1.0,
            omega_y: 1.0,
            hbar: 1.0,
        }
    }

    fn harmonic_grid() -> GridSpec {
        GridSpec {
            x_min: -7.0,
            x_max: 7.0,
            n_x: 41,
            y_min: -7.0,
            y_max: 7.0,
            n_y: 41,
        }
    }

    /// Small box around the wells, enough for the states below the barrier.
    fn well_grid() -> GridSpec {
        GridSpec {
            x_min: -5.0,
            x_max: 5.0,
            n_x: 39,
            y_min: -3.0,
            y_max: 6.5,
            n_y: 37,
        }
    }

    fn well_spectrum() -> &'static EigenSpectrum {
        static S: OnceLock<EigenSpectrum> = OnceLock::new();
        S.get_or_init(|| {
            let d =
                diagonalize(build_hamiltonian(&PotentialParams::default(), &well_grid()).unwrap());
            thermal_spectrum(&d, &[0.25], 1.0, 5.0, &KuboConfig::default()).unwrap()
        })
    }

    fn production_spectrum() -> &'static EigenSpectrum {
        static S: OnceLock<EigenSpectrum> = OnceLock::new();
        S.get_or_init(|| {
            let d = diagonalize(
                build_hamiltonian(&PotentialParams::default(), &GridSpec::default()).unwrap(),
            );
            thermal_spectrum(&d, &[0.25], 1.0, 5.0, &KuboConfig::default()).unwrap()
        })
    }

    #[test]
    fn harmonic_levels() {
        let s = solve_spectrum(&harmonic(), &harmonic_grid(), StateSelection::Count(15)).unwrap();
        let mut exact: Vec<f64> = (0..6)
            .flat_map(|n| core::iter::repeat((n + 1) as f64).take(n + 1))
            .collect();
        exact.truncate(15);
        for (e, x) in s.energies.iter().zip(&exact) {
            assert!((e - x).abs() < 1e-6, "{e} vs {x}");
        }
        assert!(s.orthonormality_error() < 1e-10);
    }

    #[test]
    fn box_levels_are_exact() {
        let g = GridSpec {
            x_min: 0.0,
            x_max: 3.0,
            n_x: 20,
            y_min: -1.0,
            y_max: 1.0,
            n_y: 18,
        };
        let s = solve_spectrum(&Free { mass: 0.5 }, &g, StateSelection::Count(3)).unwrap();
        let level = |a: f64, b: f64| PI * PI / (2.0 * 0.5) * (a * a / 9.0 + b * b / 4.0);
        let mut exact: Vec<f64> = (1..4)
            .flat_map(|a| (1..4).map(move |b| level(a as f64, b as f64)))
            .collect();
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in s.energies.iter().zip(&exact) {
            assert!((e - x).abs() < 1e-10, "{e} vs {x}");
        }
    }

    #[test]
    fn hamiltonian_commutes_with_mirror() {
        let h = build_hamiltonian(&PotentialParams::default(), &well_grid()).unwrap();
        let (nx, ny) = (h.grid.n_x, h.grid.n_y);
        let psi: Vec<f64> = (0..h.dim())
            .map(|i| libm::sin(0.37 * i as f64) + 0.1 * (i % 7) as f64)
            .collect();
        let mirror = |v: &[f64]| -> Vec<f64> {
            (0..nx * ny)
                .map(|k| v[(nx - 1 - k / ny) * ny + k % ny])
                .collect()
        };
        let mut a = vec![0.0; h.dim()];
        let mut b = vec![0.0; h.dim()];
        h.apply(&mirror(&psi), &mut a);
        h.apply(&psi, &mut b);
        let mb = mirror(&b);
        for (x, y) in a.iter().zip(&mb) {
            assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn ground_state_is_even_and_nodeless() {
        let s = well_spectrum();
        assert_eq!(s.parities[0], Parity::Even);
        let g = s.state(0);
        let sign = g
            .iter()
            .copied()
            .fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a })
            .signum();
        assert!(g.iter().all(|v| v * sign > -1e-12));
    }

    #[test]
    fn tunnelling_doublets_below_barrier() {
        let p = PotentialParams::default();
        let s = well_spectrum();
        assert!(s.energies[1] < p.barrier_height());
        assert_ne!(s.parities[0], s.parities[1]);
        let split = s.energies[1] - s.energies[0];
        assert!(split < 0.05 * p.well_frequency(), "{split}");
        assert!(s.energies[2] - s.energies[1] > 10.0 * split);
    }

    #[test]
    fn matrix_elements_are_consistent() {
        let s = well_spectrum();
        let k = s.n_states;
        for n in 0..k {
            for m in 0..k {
                assert_eq!(s.x(n, m), s.x(m, n));
                assert_eq!(s.p_imag(n, m), -s.p_imag(m, n));
                if s.parities[n] == s.parities[m] {
                    assert!(s.x(n, m).abs() < 1e-10);
                }
            }
        }
        // commutator route against the grid derivative on the low states
        for n in 0..12 {
            for m in 0..12 {
                if s.x(n, m).abs() > 1e-3 {
                    let rel =
                        (s.p_imag(n, m) - s.p_from_commutator(n, m)).abs() / s.p_imag(n, m).abs();
                    assert!(rel < 1e-5, "{n} {m} {rel}");
                }
            }
        }
    }

    #[test]
    fn grid_doubling_leaves_low_levels() {
        let p = PotentialParams::default();
        let coarse = well_spectrum();
        let fine = solve_spectrum(&p, &well_grid().refined(2), StateSelection::Count(4)).unwrap();
        for (a, b) in coarse.energies.iter().zip(&fine.energies) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn harmonic_kubo_otoc_is_cos_squared() {
        let h = Harmonic {
            mass: 1.0,
            omega_x: 1.0,
            omega_y: 1.4,
            hbar: 1.0,
        };
        let diag = diagonalize(build_hamiltonian(&h, &harmonic_grid()).unwrap());
        let cfg = KuboConfig {
            tail_tolerance: 1e-8,
            intermediate_margin: 6.0,
        };
        let spec = thermal_spectrum(&diag, &[0.5], 1.0, 2.0, &cfg).unwrap();
        let times: Vec<f64> = (0..30).map(|i| 0.25 * i as f64).collect();
        let c = kubo_otoc(&spec, 0.5, 1.0, &times, &cfg).unwrap();
        for (t, v) in times.iter().zip(&c.values) {
            assert!((v - libm::cos(*t).powi(2)).abs() < 1e-7, "t={t}: {v}");
        }
    }

    #[test]
    fn kubo_sum_rule_evenness_and_decomposition() {
        let s = production_spectrum();
        let cfg = KuboConfig::default();
        let t = 0.25;
        let times = [0.0, 0.5, -0.5, 1.3, -1.3];
        let c = kubo_otoc(s, t, 1.0, &times, &cfg).unwrap();
        assert!((c.values[0] - 1.0).abs() < 1e-10, "{}", c.values[0]);
        assert!((c.values[1] - c.values[2]).abs() < 1e-10);
        assert!((c.values[3] - c.values[4]).abs() < 1e-10);
        let el = scrambling_elements(s, t, 1.0, 1.3, &cfg).unwrap();
        let total: f64 = el.iter().map(|e| e.contribution).sum();
        assert!((total - c.values[3]).abs() < 1e-10);
        assert!(el
            .windows(2)
            .all(|w| w[0].contribution >= w[1].contribution));
        let at0 = scrambling_elements(s, t, 1.0, 0.0, &cfg).unwrap();
        for e in &at0 {
            if e.n != e.m {
                assert!(e.b_sq < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_spectrum_is_refused() {
        let s = solve_spectrum(
            &PotentialParams::default(),
            &well_grid(),
            StateSelection::Count(4),
        )
        .unwrap();
        match kubo_otoc(&s, 2.0, 1.0, &[0.0], &KuboConfig::default()) {
            Err(Error::TailTruncation { required, .. }) => assert!(required > s.e_cut),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let g = GridSpec {
            n_x: 16,
            n_y: 16,
            ..GridSpec::default()
        };
        let d = diagonalize(build_hamiltonian(&PotentialParams::default(), &g).unwrap());
        assert!(matches!(
            d.spectrum(StateSelection::EnergyCut(1e3)),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn husimi_of_harmonic_ground_state() {
        let h = harmonic();
        let g = harmonic_grid();
        let s = solve_spectrum(&h, &g, StateSelection::Count(1)).unwrap();
        let chi = y_ground_profile(&h, &g, 0.0).unwrap();
        let sigma = 0.5;
        let xs: Vec<f64> = (-8..=8).map(|i| 0.25 * i as f64).collect();
        let map = husimi_section(&s, 0, &xs, &xs, sigma, &chi).unwrap();
        // ground width s0² = ħ/(2mω) = 1/2
        let (s2, w2) = (sigma * sigma, 0.5);
        for (a, x0) in xs.iter().enumerate() {
            for (b, p0) in xs.iter().enumerate() {
                let exact =
                    libm::exp(-x0 * x0 / (2.0 * (s2 + w2)) - 2.0 * p0 * p0 * s2 * w2 / (s2 + w2));
                let v = map.values[a * xs.len() + b];
                assert!(v >= 0.0);
                assert!((v - exact).abs() < 1e-8, "{x0} {p0}: {v} vs {exact}");
            }
        }
        // both unit-normalised Gaussians of equal width overlap completely at the origin
        let same = husimi_section(&s, 0, &[0.0], &[0.0], libm::sqrt(w2), &chi).unwrap();
        assert!((same.peak - 1.0).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn kubo_weights_are_bounded_and_symmetric(beta in 0.1f64..10.0, a in 0.0f64..5.0, b in 0.0f64..5.0, z in 1.0f64..10.0) {
            let w = kubo_weight(beta, a, b, z);
            prop_assert_eq!(w, kubo_weight(beta, b, a, z));
            prop_assert!(w >= 0.0);
            prop_assert!(beta * w * z <= beta * libm::exp(-beta * a.min(b)) * (1.0 + 1e-12));
        }
    }
}
