//! Run configuration: TOML sections, `--set` overrides, temperature literals
//! and pre-flight validation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use otoc_core::analysis::{AutoWindow, WindowPolicy};
use otoc_core::classical::{MetropolisConfig, MicroConfig, SamplingBox};
use otoc_core::instanton::{InitStrategy, InstantonConfig};
use otoc_core::integrator::stability_limit;
use otoc_core::quantum::{GridSpec, KuboConfig};
use otoc_core::ring_polymer::{default_bead_count, PileConfig, ShellConfig};
use otoc_core::trajectory::Propagation;
use otoc_core::{Model, PotentialParams};

use crate::error::CliError;

/// A temperature written either as an absolute value or as a multiple of
/// the crossover temperature (`"0.95Tc"`, `"Tc"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemperatureSpec {
    Absolute(f64),
    Text(String),
}

impl TemperatureSpec {
    pub fn tc(factor: f64) -> Self {
        TemperatureSpec::Text(format!("{factor}Tc"))
    }

    /// Absolute temperature given the crossover temperature `t_c`.
    pub fn resolve(&self, t_c: f64) -> Result<f64, String> {
        let value = match self {
            TemperatureSpec::Absolute(t) => *t,
            TemperatureSpec::Text(s) => parse_temperature(s, t_c)?,
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("temperature {self} must be positive"));
        }
        Ok(value)
    }
}

impl fmt::Display for TemperatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemperatureSpec::Absolute(t) => write!(f, "{t}"),
            TemperatureSpec::Text(s) => f.write_str(s),
        }
    }
}

fn parse_temperature(text: &str, t_c: f64) -> Result<f64, String> {
    let s = text.trim();
    for suffix in ["T_c", "Tc"] {
        if let Some(head) = s.strip_suffix(suffix) {
            let head = head.trim().trim_end_matches('*').trim();
            let factor = if head.is_empty() {
                1.0
            } else {
                head.parse::<f64>()
                    .map_err(|_| format!("cannot read temperature `{text}`"))?
            };
            return Ok(factor * t_c);
        }
    }
    s.parse::<f64>()
        .map_err(|_| format!("cannot read temperature `{text}` (use a number or e.g. `0.95Tc`)"))
}

/// Pipelines a run can describe; `sweep` reuses the first three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Classical,
    Rpmd,
    Quantum,
    Instanton,
    Poincare,
    MicroOtoc,
    Husimi,
    Sweep,
}

impl Method {
    pub fn needs_grid(self) -> bool {
        matches!(self, Method::Quantum | Method::Husimi)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::Rpmd => "rpmd",
            Method::Quantum => "quantum",
            Method::Instanton => "instanton",
            Method::Poincare => "poincare",
            Method::MicroOtoc => "micro-otoc",
            Method::Husimi => "husimi",
            Method::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub temperature: TemperatureSpec,
    /// Sweep grid.
    pub temperatures: Vec<TemperatureSpec>,
    pub n_traj: usize,
    /// Bead count; absent means `max(16, ⌈8βħω/π⌉)` per temperature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_beads: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub output_dir: String,
}

pub const SWEEP_FACTORS: [f64; 8] = [0.7, 0.8, 0.95, 1.0, 1.2, 1.5, 2.0, 3.0];

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            method: None,
            temperature: TemperatureSpec::tc(1.0),
            temperatures: SWEEP_FACTORS
                .iter()
                .map(|&f| TemperatureSpec::tc(f))
                .collect(),
            n_traj: 4000,
            n_beads: None,
            seed: 1,
            workers: None,
            output_dir: "otoc-out".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub mass: f64,
    pub g: f64,
    pub omega_b: f64,
    /// Morse depth in units of `V_b`; ignored when `depth` is given.
    pub depth_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    pub alpha: f64,
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        let p = PotentialParams::default();
        PotentialSection {
            mass: p.mass,
            g: p.g,
            omega_b: p.omega_b,
            depth_factor: 3.0,
            depth: None,
            alpha: p.alpha,
            hbar: p.hbar,
            k_b: p.k_b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub dt: f64,
    pub t_max: f64,
    /// Integration steps between recorded samples.
    pub stride: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            dt: 0.01,
            t_max: 10.0,
            stride: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// `[x_min, x_max, y_min, y_max]` confining sampled configurations.
    pub bounds: [f64; 4],
    pub parity_flip: bool,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let b = SamplingBox::default();
        SamplingSection {
            bounds: [b.x_min, b.x_max, b.y_min, b.y_max],
            parity_flip: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermostatSection {
    pub dt: f64,
    pub burn_in_time: f64,
    pub gap_time: f64,
    pub chain_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centroid_friction: Option<f64>,
}

impl Default for ThermostatSection {
    fn default() -> Self {
        let p = PileConfig::default();
        ThermostatSection {
            dt: p.dt,
            burn_in_time: p.burn_in_time,
            gap_time: p.gap_time,
            chain_samples: p.chain_samples,
            centroid_friction: p.centroid_friction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetropolisSection {
    pub burn_in: usize,
    pub gap: usize,
    pub chain_samples: usize,
    pub initial_step: f64,
}

impl Default for MetropolisSection {
    fn default() -> Self {
        let m = MetropolisConfig::default();
        MetropolisSection {
            burn_in: m.burn_in,
            gap: m.gap,
            chain_samples: m.chain_samples,
            initial_step: m.initial_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShellSection {
    /// Shell energy per bead; absent means `V_b`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_per_bead: Option<f64>,
    pub burn_in: usize,
    pub gap: usize,
    pub chain_samples: usize,
    /// Trajectories per block of the one-bead shell sampler.
    pub block_size: usize,
}

impl Default for ShellSection {
    fn default() -> Self {
        let s = ShellConfig::default();
        ShellSection {
            energy_per_bead: None,
            burn_in: s.burn_in,
            gap: s.gap,
            chain_samples: s.chain_samples,
            block_size: s.classical.block_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectionSection {
    pub n_traj: usize,
    pub t_max: f64,
    /// Trajectories stretching faster than this are labelled chaotic.
    pub chaos_threshold: f64,
    pub bins: usize,
    /// Largest `r_g` kept by the gyration filter; absent means the midpoint
    /// of the two fitted clusters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rg_threshold: Option<f64>,
}

impl Default for SectionSection {
    fn default() -> Self {
        SectionSection {
            n_traj: 200,
            t_max: 200.0,
            chaos_threshold: 0.1,
            bins: 40,
            rg_threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection {
            x_min: g.x_min,
            x_max: g.x_max,
            n_x: g.n_x,
            y_min: g.y_min,
            y_max: g.y_max,
            n_y: g.n_y,
        }
    }
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            x_min: self.x_min,
            x_max: self.x_max,
            n_x: self.n_x,
            y_min: self.y_min,
            y_max: self.y_max,
            n_y: self.n_y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantumSection {
    /// Starting spectral cutoff; absent means `V_b + 10 k_B T_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_cut: Option<f64>,
    pub tail_tolerance: f64,
    pub intermediate_margin: f64,
    /// Time of the scrambling-element table; absent means `t_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scrambling_time: Option<f64>,
}

impl Default for QuantumSection {
    fn default() -> Self {
        let k = KuboConfig::default();
        QuantumSection {
            e_cut: None,
            tail_tolerance: k.tail_tolerance,
            intermediate_margin: k.intermediate_margin,
            scrambling_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstantonSection {
    pub temperatures: Vec<TemperatureSpec>,
    pub n_beads: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub trust_radius: f64,
    pub zero_mode_threshold: f64,
    pub delta: f64,
    pub start_fraction: f64,
    pub step_fraction: f64,
}

impl Default for InstantonSection {
    fn default() -> Self {
        let c = InstantonConfig::default();
        let (delta, start_fraction, step_fraction) = match c.init {
            InitStrategy::Continuation {
                delta,
                start_fraction,
                step_fraction,
            } => (delta, start_fraction, step_fraction),
            _ => (0.1, 0.99, 0.02),
        };
        InstantonSection {
            temperatures: [0.95, 0.9, 0.8]
                .iter()
                .map(|&f| TemperatureSpec::tc(f))
                .collect(),
            n_beads: 64,
            tol: c.tol,
            max_iterations: c.max_iterations,
            trust_radius: c.trust_radius,
            zero_mode_threshold: c.zero_mode_threshold,
            delta,
            start_fraction,
            step_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HusimiSection {
    pub state: usize,
    /// `[min, max, points]` of the `x` axis of the map.
    pub x_range: (f64, f64, usize),
    pub p_range: (f64, f64, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    /// Where the `y` ground profile is taken; absent means the well position.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_slice: Option<f64>,
}

impl Default for HusimiSection {
    fn default() -> Self {
        HusimiSection {
            state: 0,
            x_range: (-5.0, 5.0, 81),
            p_range: (-4.0, 4.0, 65),
            sigma_x: None,
            x_slice: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Manual window; both ends must be set to override the automatic one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub min_points: usize,
    pub min_span: f64,
    pub slope_tolerance: f64,
    pub min_r_squared: f64,
    pub noise_sigmas: f64,
    pub max_relative_error: f64,
    pub slope_half_span: f64,
    pub slope_noise_sigmas: f64,
    /// `k` in `λ ≤ bound · (1 + k σ_rel)`.
    pub bound_sigmas: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let a = AutoWindow::default();
        AnalysisSection {
            t_start: None,
            t_end: None,
            min_points: a.min_points,
            min_span: a.min_span,
            slope_tolerance: a.slope_tolerance,
            min_r_squared: a.min_r_squared,
            noise_sigmas: a.noise_sigmas,
            max_relative_error: a.max_relative_error,
            slope_half_span: a.slope_half_span,
            slope_noise_sigmas: a.slope_noise_sigmas,
            bound_sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            x_min: -6.0,
            x_max: 6.0,
            n_x: 121,
            y_min: -2.0,
            y_max: 8.0,
            n_y: 101,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub potential: PotentialSection,
    pub dynamics: DynamicsSection,
    pub sampling: SamplingSection,
    pub thermostat: ThermostatSection,
    pub metropolis: MetropolisSection,
    pub shell: ShellSection,
    pub section: SectionSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    pub quantum: QuantumSection,
    pub instanton: InstantonSection,
    pub husimi: HusimiSection,
    pub analysis: AnalysisSection,
    pub scan: ScanSection,
}

/// Outcome of [`RunConfig::validate`] when nothing is fatal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `key=value`
    /// overrides and deserialises with unknown keys rejected.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Validation(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table =
            toml::from_str::<toml::Table>(text).map_err(|e| CliError::Validation(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        // round trip through text so errors carry the offending line
        let text = toml::to_string(&table).map_err(|e| CliError::Validation(e.to_string()))?;
        toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn params(&self) -> PotentialParams {
        let p = &self.potential;
        let mut params =
            PotentialParams::with_depth_factor(p.mass, p.g, p.omega_b, p.depth_factor, p.alpha);
        if let Some(d) = p.depth {
            params.depth = d;
        }
        params.hbar = p.hbar;
        params.k_b = p.k_b;
        params
    }

    pub fn temperature(&self) -> Result<f64, CliError> {
        let tc = self.params().crossover_temperature();
        self.run
            .temperature
            .resolve(tc)
            .map_err(|e| CliError::Validation(format!("run.temperature: {e}")))
    }

    pub fn temperatures(&self) -> Result<Vec<f64>, CliError> {
        resolve_all(
            &self.run.temperatures,
            self.params().crossover_temperature(),
            "run.temperatures",
        )
    }

    pub fn instanton_temperatures(&self) -> Result<Vec<f64>, CliError> {
        resolve_all(
            &self.instanton.temperatures,
            self.params().crossover_temperature(),
            "instanton.temperatures",
        )
    }

    pub fn n_beads_at(&self, temperature: f64) -> usize {
        self.run
            .n_beads
            .unwrap_or_else(|| default_bead_count(&self.params(), temperature))
    }

    pub fn propagation(&self) -> Propagation {
        Propagation {
            dt: self.dynamics.dt,
            t_max: self.dynamics.t_max,
            stride: self.dynamics.stride,
        }
    }

    pub fn section_propagation(&self) -> Propagation {
        Propagation {
            dt: self.dynamics.dt,
            t_max: self.section.t_max,
            stride: self.dynamics.stride,
        }
    }

    pub fn sampling_box(&self) -> SamplingBox {
        let [x_min, x_max, y_min, y_max] = self.sampling.bounds;
        SamplingBox {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn metropolis_config(&self) -> MetropolisConfig {
        let m = &self.metropolis;
        MetropolisConfig {
            burn_in: m.burn_in,
            gap: m.gap,
            chain_samples: m.chain_samples,
            initial_step: m.initial_step,
            parity_flip: self.sampling.parity_flip,
            bounds: self.sampling_box(),
            ..MetropolisConfig::default()
        }
    }

    pub fn pile_config(&self) -> PileConfig {
        let t = &self.thermostat;
        PileConfig {
            dt: t.dt,
            burn_in_time: t.burn_in_time,
            gap_time: t.gap_time,
            centroid_friction: t.centroid_friction,
            chain_samples: t.chain_samples,
            parity_flip: self.sampling.parity_flip,
            metropolis: self.metropolis_config(),
        }
    }

    pub fn micro_config(&self) -> MicroConfig {
        MicroConfig {
            bounds: self.sampling_box(),
            block_size: self.shell.block_size,
            ..MicroConfig::default()
        }
    }

    pub fn shell_config(&self) -> ShellConfig {
        let s = &self.shell;
        ShellConfig {
            burn_in: s.burn_in,
            gap: s.gap,
            chain_samples: s.chain_samples,
            parity_flip: self.sampling.parity_flip,
            classical: self.micro_config(),
            ..ShellConfig::default()
        }
    }

    pub fn shell_energy_per_bead(&self) -> f64 {
        self.shell
            .energy_per_bead
            .unwrap_or_else(|| self.params().barrier_height())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        self.grid
            .as_ref()
            .map(GridSection::spec)
            .ok_or_else(|| CliError::Validation("quantum runs need a [grid] section".into()))
    }

    pub fn kubo_config(&self) -> KuboConfig {
        KuboConfig {
            tail_tolerance: self.quantum.tail_tolerance,
            intermediate_margin: self.quantum.intermediate_margin,
        }
    }

    pub fn instanton_config(&self) -> InstantonConfig {
        let i = &self.instanton;
        InstantonConfig {
            init: InitStrategy::Continuation {
                delta: i.delta,
                start_fraction: i.start_fraction,
                step_fraction: i.step_fraction,
            },
            tol: i.tol,
            max_iterations: i.max_iterations,
            trust_radius: i.trust_radius,
            zero_mode_threshold: i.zero_mode_threshold,
        }
    }

    pub fn window_policy(&self) -> WindowPolicy {
        let a = &self.analysis;
        match (a.t_start, a.t_end) {
            (Some(t_start), Some(t_end)) => WindowPolicy::Manual { t_start, t_end },
            _ => WindowPolicy::Auto(AutoWindow {
                min_points: a.min_points,
                min_span: a.min_span,
                slope_tolerance: a.slope_tolerance,
                min_r_squared: a.min_r_squared,
                noise_sigmas: a.noise_sigmas,
                max_relative_error: a.max_relative_error,
                slope_half_span: a.slope_half_span,
                slope_noise_sigmas: a.slope_noise_sigmas,
            }),
        }
    }

    /// Schema and physics checks for `method` (or the configured one)
    /// without running anything. Fatal problems are collected into one
    /// validation error.
    pub fn validate(&self, method: Option<Method>) -> Result<ValidationReport, CliError> {
        let method = method.or(self.run.method);
        let mut errors: Vec<String> = Vec::new();
        let mut report = ValidationReport::default();
        let params = self.params();
        if let Err(e) = params.validate() {
            errors.push(format!("potential: {e}"));
        }
        let tc = params.crossover_temperature();
        let mut temps = Vec::new();
        match self.run.temperature.resolve(tc) {
            Ok(t) => temps.push(t),
            Err(e) => errors.push(format!("run.temperature: {e}")),
        }
        let sweep = matches!(method, Some(Method::Sweep) | None);
        for t in &self.run.temperatures {
            match t.resolve(tc) {
                Ok(v) if sweep => temps.push(v),
                Ok(_) => {}
                Err(e) => errors.push(format!("run.temperatures: {e}")),
            }
        }
        if self.run.temperatures.is_empty() {
            errors.push("run.temperatures: must not be empty".into());
        }
        for t in &self.instanton.temperatures {
            if let Err(e) = t.resolve(tc) {
                errors.push(format!("instanton.temperatures: {e}"));
            }
        }
        let d = &self.dynamics;
        need(
            &mut errors,
            d.dt.is_finite() && d.dt > 0.0,
            "dynamics.dt: must be positive",
        );
        need(
            &mut errors,
            d.t_max.is_finite() && d.t_max > 0.0,
            "dynamics.t_max: must be positive",
        );
        need(
            &mut errors,
            d.stride >= 1,
            "dynamics.stride: must be at least 1",
        );
        need(
            &mut errors,
            self.run.n_traj >= 1,
            "run.n_traj: must be at least 1",
        );
        need(
            &mut errors,
            self.run.n_beads.is_none_or(|n| n >= 1),
            "run.n_beads: must be at least 1",
        );
        need(
            &mut errors,
            self.section.n_traj >= 1,
            "section.n_traj: must be at least 1",
        );
        need(
            &mut errors,
            self.section.t_max > 0.0,
            "section.t_max: must be positive",
        );
        need(
            &mut errors,
            self.section.bins >= 1,
            "section.bins: must be at least 1",
        );
        need(
            &mut errors,
            self.analysis.min_points >= 3,
            "analysis.min_points: must be at least 3",
        );
        need(
            &mut errors,
            self.analysis.slope_tolerance > 0.0 && self.analysis.min_r_squared <= 1.0,
            "analysis: slope_tolerance must be positive and min_r_squared at most 1",
        );
        need(
            &mut errors,
            self.analysis.min_span >= 0.0 && self.analysis.slope_half_span > 0.0 && self.analysis.max_relative_error > 0.0,
            "analysis: min_span must be non-negative, slope_half_span and max_relative_error positive",
        );
        if let (Some(a), Some(b)) = (self.analysis.t_start, self.analysis.t_end) {
            need(&mut errors, a < b, "analysis: t_start must be below t_end");
        }
        need(
            &mut errors,
            self.instanton.n_beads >= 32 && self.instanton.n_beads % 2 == 0,
            "instanton.n_beads: must be even and at least 32",
        );
        need(
            &mut errors,
            self.quantum.tail_tolerance > 0.0 && self.quantum.tail_tolerance < 1.0,
            "quantum.tail_tolerance: must lie in (0, 1)",
        );
        need(
            &mut errors,
            self.quantum.intermediate_margin >= 0.0,
            "quantum.intermediate_margin: must be non-negative",
        );
        need(
            &mut errors,
            self.husimi.x_range.2 >= 2 && self.husimi.p_range.2 >= 2,
            "husimi: ranges need at least 2 points",
        );
        need(
            &mut errors,
            self.scan.n_x >= 2 && self.scan.n_y >= 2,
            "scan: need at least 2 points per axis",
        );
        if let Err(e) = self.pile_config().validate() {
            errors.push(format!("thermostat/metropolis: {e}"));
        }
        if let Err(e) = self.shell_config().validate() {
            errors.push(format!("shell: {e}"));
        }
        if let Some(e) = self.shell.energy_per_bead {
            need(
                &mut errors,
                e > params.minimum_energy(),
                "shell.energy_per_bead: must lie above the potential minimum",
            );
        }
        if self.potential.depth.is_some()
            && self.potential.depth_factor != PotentialSection::default().depth_factor
        {
            report
                .warnings
                .push("potential.depth overrides potential.depth_factor".into());
        }

        if errors.is_empty() && !temps.is_empty() {
            self.physics_checks(method, &params, &temps, &mut errors, &mut report);
        }
        if errors.is_empty() {
            Ok(report)
        } else {
            Err(CliError::Validation(errors.join("; ")))
        }
    }

    fn physics_checks(
        &self,
        method: Option<Method>,
        params: &PotentialParams,
        temps: &[f64],
        errors: &mut Vec<String>,
        report: &mut ValidationReport,
    ) {
        let limit = stability_limit();
        let t_min = temps.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = temps.iter().copied().fold(0.0, f64::max);
        let w_phys = params
            .omega_b
            .max(params.morse_frequency())
            .max(params.well_frequency());
        let uses_beads = !matches!(
            method,
            Some(
                Method::Classical
                    | Method::Poincare
                    | Method::Quantum
                    | Method::Husimi
                    | Method::Instanton
            )
        );
        let w_max = if uses_beads {
            let n = self.n_beads_at(t_min);
            let beta_n_hbar = params.hbar / (params.k_b * t_min * n as f64);
            let w_free = if n > 1 { 2.0 / beta_n_hbar } else { 0.0 };
            (w_free * w_free + w_phys * w_phys).sqrt()
        } else {
            w_phys
        };
        for (name, dt) in [
            ("dynamics.dt", self.dynamics.dt),
            ("thermostat.dt", self.thermostat.dt),
        ] {
            let z = dt * w_max;
            if z > limit {
                report.warnings.push(format!(
                    "{name} = {dt}: dt·ω_max = {z:.3} exceeds the linear stability limit {limit:.3} of the integrator; trajectories will diverge"
                ));
            } else if z > 0.5 * limit {
                report.warnings.push(format!(
                    "{name} = {dt}: dt·ω_max = {z:.3} is within a factor 2 of the stability limit {limit:.3}; energy conservation will suffer"
                ));
            }
        }
        report.notes.push(format!(
            "ω_max = {w_max:.4}, stability limit dt < {:.4}",
            limit / w_max
        ));

        let model = *params;
        // V tends to the dissociation plateau for large y at every x, so no
        // finite box gets below its weight; the ensemble is truncated there
        let [bottom, top, left, right] = self.sampling_box().edge_weights(&model, t_max, 200);
        let plateau =
            (-model.beta(t_max) * (model.dissociation_energy() - model.minimum_energy())).exp();
        let classical_tail = bottom.max(left).max(right);
        if classical_tail > plateau.max(1e-8) {
            report.warnings.push(format!(
                "sampling.bounds: Boltzmann weight {classical_tail:.2e} on the box edge at T = {t_max:.4}; widen the box"
            ));
        }
        report.notes.push(format!(
            "sampling.bounds: y_max edge truncates the dissociative continuum, weight {top:.2e} (plateau {plateau:.2e}) at T = {t_max:.4}"
        ));

        let quantum = matches!(method, Some(m) if m.needs_grid()) || self.grid.is_some();
        if !quantum {
            return;
        }
        let Some(grid) = self.grid.as_ref().map(GridSection::spec) else {
            errors.push("grid: quantum runs need a [grid] section".into());
            return;
        };
        if let Err(e) = grid.validate() {
            errors.push(format!("grid: {e}"));
            return;
        }
        let h = grid.dx().max(grid.dy());
        let nyquist =
            params.hbar * params.hbar * std::f64::consts::PI.powi(2) / (2.0 * params.mass * h * h);
        let e_cut = self
            .quantum
            .e_cut
            .unwrap_or_else(|| otoc_core::quantum::default_e_cut(params, t_max));
        let needed = e_cut + self.quantum.intermediate_margin;
        if nyquist < needed {
            errors.push(format!(
                "grid: kinetic Nyquist energy {nyquist:.2} below the spectral cutoff {needed:.2}; refine the grid"
            ));
        }
        let gb = SamplingBox {
            x_min: grid.x_min,
            x_max: grid.x_max,
            y_min: grid.y_min,
            y_max: grid.y_max,
        };
        let tail = gb.boundary_weight(&model, t_max, 200);
        if tail > self.quantum.tail_tolerance {
            report.warnings.push(format!(
                "grid: Boltzmann weight {tail:.2e} on the box edge at T = {t_max:.4} exceeds the tail tolerance {:.1e}",
                self.quantum.tail_tolerance
            ));
        }
        report.notes.push(format!(
            "grid: {} points, Nyquist energy {nyquist:.1}, cutoff {needed:.1}",
            grid.len()
        ));
    }
}

fn need(errors: &mut Vec<String>, ok: bool, msg: &str) {
    if !ok {
        errors.push(msg.to_string());
    }
}

fn resolve_all(specs: &[TemperatureSpec], tc: f64, field: &str) -> Result<Vec<f64>, CliError> {
    specs
        .iter()
        .map(|t| {
            t.resolve(tc)
                .map_err(|e| CliError::Validation(format!("{field}: {e}")))
        })
        .collect()
}

/// Applies one `key=value` override; a bare key addresses `[run]`. The
/// value is read as a TOML literal, falling back to a string.
pub fn apply_override(table: &mut toml::Table, text: &str) -> Result<(), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{text}` is not key=value")))?;
    let key = key.trim();
    let (section, field) = key.split_once('.').unwrap_or(("run", key));
    if section.is_empty() || field.is_empty() || field.contains('.') {
        return Err(CliError::Validation(format!(
            "override key `{key}` must be `field` or `section.field`"
        )));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(CliError::Validation(format!(
            "`{section}` is not a section"
        )));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}
