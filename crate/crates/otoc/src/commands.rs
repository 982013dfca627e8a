//! One function per subcommand. Each computes with otoc-core, writes its
//! tables into a [`RunDir`] and notes headline numbers for `summary.txt`.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use otoc_core::analysis::{chaos_bound, fit_lyapunov, BoundReport, FitOutcome};
use otoc_core::classical::{classical_micro_otoc, classical_thermal_otoc, poincare_section};
use otoc_core::instanton::{bound_check, find_instanton};
use otoc_core::quantum::{
    build_hamiltonian, default_e_cut, default_husimi_width, diagonalize, husimi_section, kubo_otoc,
    scrambling_elements, solve_spectrum, thermal_spectrum, y_ground_profile, EigenSpectrum,
    StateSelection,
};
use otoc_core::ring_polymer::{
    centroid_poincare, gyration_histogram, matsubara_freq1, rpmd_micro_otoc, rpmd_otoc, RingPolymer,
};
use otoc_core::trajectory::Section;
use otoc_core::{Model, OtocKind, OtocMeta, OtocSeries, Position2, PotentialParams};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CoreResultExt};
use crate::exec::Parallel;
use crate::output::{num, sha256_hex, Derived, RunDir, RunManifest, TemperatureEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    PotentialScan,
    ClassicalOtoc,
    RpmdOtoc,
    QuantumOtoc,
    MicroOtoc,
    Poincare,
    CentroidPoincare,
    Instanton,
    Husimi,
    Gyration,
    /// Lyapunov sweep over `run.temperatures` with one OTOC method.
    Sweep(SweepMethod),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    Classical,
    Rpmd,
    Quantum,
}

impl SweepMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMethod::Classical => "classical",
            SweepMethod::Rpmd => "rpmd",
            SweepMethod::Quantum => "quantum",
        }
    }

    pub fn from_method(m: Option<Method>) -> Result<Self, CliError> {
        match m {
            None | Some(Method::Rpmd) | Some(Method::Sweep) => Ok(SweepMethod::Rpmd),
            Some(Method::Classical) => Ok(SweepMethod::Classical),
            Some(Method::Quantum) => Ok(SweepMethod::Quantum),
            Some(other) => Err(CliError::Validation(format!(
                "sweep cannot use method `{}`",
                other.as_str()
            ))),
        }
    }
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PotentialScan => "potential-scan",
            Command::ClassicalOtoc => "classical-otoc",
            Command::RpmdOtoc => "rpmd-otoc",
            Command::QuantumOtoc => "quantum-otoc",
            Command::MicroOtoc => "micro-otoc",
            Command::Poincare => "poincare",
            Command::CentroidPoincare => "centroid-poincare",
            Command::Instanton => "instanton",
            Command::Husimi => "husimi",
            Command::Gyration => "gyration",
            Command::Sweep(_) => "sweep",
        }
    }

    /// The method whose checks `validate` applies.
    pub fn method(self) -> Option<Method> {
        Some(match self {
            Command::PotentialScan => return None,
            Command::ClassicalOtoc => Method::Classical,
            Command::RpmdOtoc | Command::CentroidPoincare | Command::Gyration => Method::Rpmd,
            Command::QuantumOtoc | Command::Sweep(SweepMethod::Quantum) => Method::Quantum,
            Command::MicroOtoc => Method::MicroOtoc,
            Command::Poincare => Method::Poincare,
            Command::Instanton => Method::Instanton,
            Command::Husimi => Method::Husimi,
            Command::Sweep(SweepMethod::Classical) => Method::Classical,
            Command::Sweep(SweepMethod::Rpmd) => Method::Sweep,
        })
    }
}

/// Options that are not part of the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Reuse completed sweep temperatures from an earlier run in the same
    /// directory with the same configuration.
    pub resume: bool,
}

/// Validates, runs `cmd`, and writes every output plus the manifest.
pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let report = cfg.validate(cmd.method())?;
    let workers = crate::exec::resolve_workers(opts.workers, cfg.run.workers)?;
    let exec = Parallel::new(workers)?;
    let root = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir));
    let mut out = RunDir::create(root)?;
    let started = unix_now();
    out.note(format!("otoc {} {}", env!("CARGO_PKG_VERSION"), cmd.name()));
    for w in &report.warnings {
        eprintln!("warning: {w}");
        out.note(format!("warning: {w}"));
    }
    let mut ctx = Context {
        cfg,
        params: cfg.params(),
        exec: &exec,
        out: &mut out,
        resume: opts.resume,
    };
    let used = match cmd {
        Command::PotentialScan => ctx.potential_scan()?,
        Command::ClassicalOtoc => ctx.thermal_otoc(SweepMethod::Classical)?,
        Command::RpmdOtoc => ctx.thermal_otoc(SweepMethod::Rpmd)?,
        Command::QuantumOtoc => ctx.thermal_otoc(SweepMethod::Quantum)?,
        Command::MicroOtoc => ctx.micro_otoc()?,
        Command::Poincare => ctx.poincare()?,
        Command::CentroidPoincare => ctx.centroid_poincare(false)?,
        Command::Gyration => ctx.centroid_poincare(true)?,
        Command::Instanton => ctx.instanton()?,
        Command::Husimi => ctx.husimi()?,
        Command::Sweep(m) => ctx.sweep(m)?,
    };
    let manifest = RunManifest {
        tool: "otoc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        started_unix: started,
        finished_unix: unix_now(),
        workers: exec.workers(),
        config: cfg.clone(),
        config_toml: cfg.to_toml(),
        derived: derived(&cfg.params(), &used),
        outputs: Vec::new(),
    };
    out.finish(manifest)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Derived constants plus one ω_k table per `(T, N)` a run used.
pub fn derived(params: &PotentialParams, used: &[(f64, usize)]) -> Derived {
    let tc = params.crossover_temperature();
    let temperatures = used
        .iter()
        .map(|&(t, n)| {
            let omega_k = match RingPolymer::new(*params, n, t) {
                Ok(rp) => (0..n).map(|k| rp.free_frequency(k)).collect(),
                Err(_) => Vec::new(),
            };
            let w1 = matsubara_freq1(params, t);
            TemperatureEntry {
                temperature: t,
                t_over_tc: t / tc,
                n_beads: n,
                bound: chaos_bound(t, params.k_b, params.hbar),
                matsubara_freq1: w1.magnitude(),
                matsubara_real: w1.is_real(),
                omega_k,
            }
        })
        .collect();
    Derived {
        barrier_height: params.barrier_height(),
        crossover_temperature: tc,
        well_frequency: params.well_frequency(),
        morse_frequency: params.morse_frequency(),
        dissociation_energy: params.dissociation_energy(),
        temperatures,
    }
}

pub const OTOC_HEADER: [&str; 3] = ["time", "value", "std_error"];
pub const FIT_HEADER: [&str; 13] = [
    "method",
    "temperature",
    "t_over_tc",
    "bound",
    "regime",
    "lambda",
    "stderr",
    "fit_stderr",
    "t_start",
    "t_end",
    "r_squared",
    "n_points",
    "violation",
];
pub const SECTION_HEADER: [&str; 7] = [
    "trajectory",
    "time",
    "x",
    "px",
    "max_rg",
    "stretch_rate",
    "chaotic",
];
pub const TRAJECTORY_HEADER: [&str; 5] = [
    "trajectory",
    "max_rg",
    "stretch_rate",
    "crossings",
    "chaotic",
];

pub fn otoc_rows(s: &OtocSeries) -> Vec<Vec<String>> {
    (0..s.len())
        .map(|i| vec![num(s.times[i]), num(s.values[i]), num(s.std_errors[i])])
        .collect()
}

/// Reads back a table written with [`OTOC_HEADER`].
pub fn parse_otoc_csv(
    text: &str,
    kind: OtocKind,
    n_samples: usize,
) -> Result<OtocSeries, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(OTOC_HEADER.join(",").as_str()) {
        return Err(CliError::Validation("OTOC table header mismatch".into()));
    }
    let (mut times, mut values, mut std_errors) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad number `{s}`")))
        };
        if cols.len() != 3 {
            return Err(CliError::Validation(format!("bad OTOC row `{line}`")));
        }
        times.push(parse(cols[0])?);
        values.push(parse(cols[1])?);
        std_errors.push(parse(cols[2])?);
    }
    Ok(OtocSeries {
        times,
        values,
        std_errors,
        n_samples,
        kind,
        meta: OtocMeta::default(),
    })
}

pub fn fit_row(
    method: &str,
    temperature: f64,
    params: &PotentialParams,
    fit: &FitOutcome,
    violation: bool,
) -> Vec<String> {
    let tc = params.crossover_temperature();
    let bound = chaos_bound(temperature, params.k_b, params.hbar);
    let mut row = vec![
        method.to_string(),
        num(temperature),
        num(temperature / tc),
        num(bound),
    ];
    match fit {
        FitOutcome::Exponential(f) => row.extend([
            "exponential".to_string(),
            num(f.lambda),
            num(f.stderr),
            num(f.fit_stderr),
            num(f.window.0),
            num(f.window.1),
            num(f.r_squared),
            f.n_points.to_string(),
        ]),
        FitOutcome::NoExponentialRegime { .. } => {
            row.push("none".into());
            row.extend(std::iter::repeat_n(String::new(), 7));
        }
    }
    row.push(violation.to_string());
    row
}

fn describe_fit(fit: &FitOutcome, bound: f64) -> String {
    match fit {
        FitOutcome::Exponential(f) => format!(
            "lambda = {:.4} ± {:.4} over t ∈ [{:.2}, {:.2}] (R² = {:.4}); bound 2πT = {:.4}; lambda/bound = {:.3}",
            f.lambda,
            f.stderr,
            f.window.0,
            f.window.1,
            f.r_squared,
            bound,
            f.lambda / bound
        ),
        FitOutcome::NoExponentialRegime { reason } => format!("no exponential regime ({reason})"),
    }
}

fn section_rows(section: &Section, threshold: f64, keep: impl Fn(f64) -> bool) -> Vec<Vec<String>> {
    section
        .points
        .iter()
        .filter(|p| keep(p.max_rg))
        .map(|p| {
            vec![
                p.trajectory.to_string(),
                num(p.time),
                num(p.x),
                num(p.px),
                num(p.max_rg),
                num(p.stretch_rate),
                section.is_chaotic(p.trajectory, threshold).to_string(),
            ]
        })
        .collect()
}

fn trajectory_rows(section: &Section, threshold: f64) -> Vec<Vec<String>> {
    (0..section.trajectory_max_rg.len())
        .map(|i| {
            vec![
                i.to_string(),
                num(section.trajectory_max_rg[i]),
                num(section.trajectory_stretch[i]),
                section.trajectory_crossings[i].to_string(),
                section.is_chaotic(i, threshold).to_string(),
            ]
        })
        .collect()
}

/// Everything a pipeline needs.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub params: PotentialParams,
    pub exec: &'a Parallel,
    pub out: &'a mut RunDir,
    pub resume: bool,
}

/// Diagonalised grid Hamiltonian reused across temperatures.
pub struct QuantumSetup {
    pub spectrum: EigenSpectrum,
}

impl QuantumSetup {
    /// Spectrum complete enough for the Kubo OTOC at every temperature.
    pub fn new(cfg: &RunConfig, temperatures: &[f64]) -> Result<Self, CliError> {
        let params = cfg.params();
        let grid = cfg.grid_spec()?;
        let t_max = temperatures.iter().copied().fold(0.0, f64::max);
        let e_start = cfg
            .quantum
            .e_cut
            .unwrap_or_else(|| default_e_cut(&params, t_max));
        let diag = diagonalize(build_hamiltonian(&params, &grid).in_module("quantum")?);
        let spectrum =
            thermal_spectrum(&diag, temperatures, params.k_b, e_start, &cfg.kubo_config())
                .in_module("quantum")?;
        Ok(QuantumSetup { spectrum })
    }

    pub fn otoc(&self, cfg: &RunConfig, temperature: f64) -> Result<OtocSeries, CliError> {
        let times = cfg.propagation().times();
        kubo_otoc(
            &self.spectrum,
            temperature,
            cfg.params().k_b,
            &times,
            &cfg.kubo_config(),
        )
        .in_module("quantum")
    }
}

/// Thermal OTOC of one method at one temperature; `quantum` must be given
/// for the quantum method.
pub fn thermal_series(
    cfg: &RunConfig,
    method: SweepMethod,
    temperature: f64,
    exec: &Parallel,
    quantum: Option<&QuantumSetup>,
) -> Result<OtocSeries, CliError> {
    let params = cfg.params();
    let prop = cfg.propagation();
    match method {
        SweepMethod::Classical => classical_thermal_otoc(
            &params,
            temperature,
            &prop,
            cfg.run.n_traj,
            &cfg.metropolis_config(),
            cfg.run.seed,
            exec,
        )
        .in_module("classical"),
        SweepMethod::Rpmd => rpmd_otoc(
            &params,
            temperature,
            cfg.n_beads_at(temperature),
            &prop,
            cfg.run.n_traj,
            &cfg.pile_config(),
            cfg.run.seed,
            exec,
        )
        .in_module("ring_polymer"),
        SweepMethod::Quantum => match quantum {
            Some(q) => q.otoc(cfg, temperature),
            None => QuantumSetup::new(cfg, &[temperature])?.otoc(cfg, temperature),
        },
    }
}

fn n_beads_for(cfg: &RunConfig, method: SweepMethod, temperature: f64) -> usize {
    match method {
        SweepMethod::Rpmd => cfg.n_beads_at(temperature),
        _ => 1,
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct SweepProgress {
    config_sha256: String,
    method: String,
    entries: Vec<ProgressEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ProgressEntry {
    index: usize,
    temperature: f64,
    file: String,
    sha256: String,
    n_samples: usize,
}

const PROGRESS: &str = "sweep_progress.json";

#[derive(Serialize)]
struct BoundJson<'a> {
    method: &'a str,
    convention: &'static str,
    sigmas: f64,
    crossover_temperature: f64,
    rows: Vec<BoundJsonRow>,
    violations: usize,
}

#[derive(Serialize)]
struct BoundJsonRow {
    temperature: f64,
    t_over_tc: f64,
    bound: f64,
    lambda: Option<f64>,
    stderr: Option<f64>,
    window: Option<(f64, f64)>,
    r_squared: Option<f64>,
    violation: bool,
}

impl Context<'_> {
    fn fit(&self, s: &OtocSeries) -> Result<FitOutcome, CliError> {
        fit_lyapunov(s, &self.cfg.window_policy()).in_module("analysis")
    }

    fn note_series(&mut self, label: &str, s: &OtocSeries, fit: &FitOutcome, temperature: f64) {
        let bound = chaos_bound(temperature, self.params.k_b, self.params.hbar);
        self.out.note(format!(
            "{label}: T = {temperature:.6} ({:.3} T_c), {} samples, C(0) = {}",
            temperature / self.params.crossover_temperature(),
            s.n_samples,
            num(s.values[0])
        ));
        if let Some(d) = s.meta.max_energy_drift {
            self.out
                .note(format!("{label}: largest energy drift {d:.3e}"));
        }
        self.out
            .note(format!("{label}: {}", describe_fit(fit, bound)));
    }

    fn potential_scan(&mut self) -> Result<Vec<(f64, usize)>, CliError> {
        let s = &self.cfg.scan;
        let p = self.params;
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let mut rows = Vec::with_capacity(s.n_x * s.n_y);
        for x in lin(s.x_min, s.x_max, s.n_x) {
            for y in lin(s.y_min, s.y_max, s.n_y) {
                rows.push(vec![num(x), num(y), num(p.energy(Position2::new(x, y)))]);
            }
        }
        self.out
            .csv("potential.csv", "potential", &["x", "y", "energy"], &rows)?;
        let wm = p.well_minimum();
        let points = [
            ("barrier_saddle", Position2::new(0.0, 0.0)),
            ("well_minimum_left", Position2::new(-wm.x, wm.y)),
            ("well_minimum_right", wm),
        ];
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|(label, q)| {
                let h = p.hessian(*q);
                vec![
                    label.to_string(),
                    num(q.x),
                    num(q.y),
                    num(p.energy(*q)),
                    num(h[0][0]),
                    num(h[1][1]),
                    num(h[0][1]),
                ]
            })
            .collect();
        self.out.csv(
            "stationary_points.csv",
            "stationary_points",
            &["label", "x", "y", "energy", "v_xx", "v_yy", "v_xy"],
            &rows,
        )?;
        self.out.note(format!("V_b = {}", num(p.barrier_height())));
        self.out
            .note(format!("T_c = {}", num(p.crossover_temperature())));
        self.out.note(format!(
            "well minimum at ({}, {}) with V = {}",
            num(wm.x),
            num(wm.y),
            num(p.energy(wm))
        ));
        Ok(Vec::new())
    }

    fn thermal_otoc(&mut self, method: SweepMethod) -> Result<Vec<(f64, usize)>, CliError> {
        let t = self.cfg.temperature()?;
        let quantum = match method {
            SweepMethod::Quantum => Some(QuantumSetup::new(self.cfg, &[t])?),
            _ => None,
        };
        let s = thermal_series(self.cfg, method, t, self.exec, quantum.as_ref())?;
        self.out
            .csv("otoc.csv", "otoc", &OTOC_HEADER, &otoc_rows(&s))?;
        let fit = self.fit(&s)?;
        let mut report = BoundReport::new(
            &[t],
            self.params.k_b,
            self.params.hbar,
            self.cfg.analysis.bound_sigmas,
        );
        report
            .add_method(method.as_str(), vec![fit.clone()])
            .in_module("analysis")?;
        let violation = report.violations_for(method.as_str()) > 0;
        self.out.csv(
            "lyapunov.csv",
            "lyapunov",
            &FIT_HEADER,
            &[fit_row(method.as_str(), t, &self.params, &fit, violation)],
        )?;
        self.note_series(method.as_str(), &s, &fit, t);
        if let Some(q) = quantum {
            let spec = &q.spectrum;
            let rows: Vec<Vec<String>> = (0..spec.n_states)
                .map(|n| {
                    vec![
                        n.to_string(),
                        num(spec.energies[n]),
                        spec.parities[n].as_str().to_string(),
                    ]
                })
                .collect();
            self.out.csv(
                "spectrum.csv",
                "spectrum",
                &["index", "energy", "parity"],
                &rows,
            )?;
            let ts = self
                .cfg
                .quantum
                .scrambling_time
                .unwrap_or(self.cfg.dynamics.t_max);
            let elems = scrambling_elements(spec, t, self.params.k_b, ts, &self.cfg.kubo_config())
                .in_module("quantum")?;
            let rows: Vec<Vec<String>> = elems
                .iter()
                .map(|e| {
                    vec![
                        num(ts),
                        e.n.to_string(),
                        e.m.to_string(),
                        num(e.weight),
                        num(e.b_sq),
                        num(e.contribution),
                    ]
                })
                .collect();
            self.out.csv(
                "scrambling.csv",
                "scrambling",
                &["time", "n", "m", "weight", "b_sq", "contribution"],
                &rows,
            )?;
            self.out.note(format!(
                "quantum: {} states below e_cut = {:.3}, |C(0) - 1| = {:.2e}",
                spec.n_states,
                spec.e_cut,
                (s.values[0] - 1.0).abs()
            ));
        }
        Ok(vec![(t, n_beads_for(self.cfg, method, t))])
    }

    fn micro_otoc(&mut self) -> Result<Vec<(f64, usize)>, CliError> {
        let t = self.cfg.temperature()?;
        let n = self.cfg.n_beads_at(t);
        let e = self.cfg.shell_energy_per_bead();
        let prop = self.cfg.propagation();
        let s = if n == 1 {
            classical_micro_otoc(
                &self.params,
                e,
                &prop,
                self.cfg.run.n_traj,
                &self.cfg.micro_config(),
                self.cfg.run.seed,
                self.exec,
            )
            .in_module("classical")?
        } else {
            rpmd_micro_otoc(
                &self.params,
                t,
                n,
                e,
                &prop,
                self.cfg.run.n_traj,
                &self.cfg.shell_config(),
                self.cfg.run.seed,
                self.exec,
            )
            .in_module("ring_polymer")?
        };
        self.out
            .csv("otoc.csv", "otoc", &OTOC_HEADER, &otoc_rows(&s))?;
        let fit = self.fit(&s)?;
        self.out.csv(
            "lyapunov.csv",
            "lyapunov",
            &FIT_HEADER,
            &[fit_row(s.kind.as_str(), t, &self.params, &fit, false)],
        )?;
        self.out
            .note(format!("shell energy per bead {} with {n} beads", num(e)));
        self.note_series(s.kind.as_str(), &s, &fit, t);
        Ok(vec![(t, n)])
    }

    fn poincare(&mut self) -> Result<Vec<(f64, usize)>, CliError> {
        let e = self.cfg.shell_energy_per_bead();
        let sc = &self.cfg.section;
        let section = poincare_section(
            &self.params,
            e,
            sc.n_traj,
            &self.cfg.section_propagation(),
            &self.cfg.micro_config(),
            self.cfg.run.seed,
            self.exec,
        )
        .in_module("classical")?;
        self.write_section(&section, "section.csv", |_| true)?;
        self.out.note(format!(
            "classical section at E = {}: {} points",
            num(e),
            section.points.len()
        ));
        Ok(Vec::new())
    }

    fn write_section(
        &mut self,
        section: &Section,
        name: &str,
        keep: impl Fn(f64) -> bool,
    ) -> Result<(), CliError> {
        let th = self.cfg.section.chaos_threshold;
        self.out.csv(
            name,
            "section",
            &SECTION_HEADER,
            &section_rows(section, th, keep),
        )?;
        if !self
            .out
            .files()
            .iter()
            .any(|f| f.file == "trajectories.csv")
        {
            self.out.csv(
                "trajectories.csv",
                "trajectories",
                &TRAJECTORY_HEADER,
                &trajectory_rows(section, th),
            )?;
            let chaotic = (0..section.trajectory_max_rg.len())
                .filter(|&i| section.is_chaotic(i, th))
                .count();
            self.out.note(format!(
                "{chaotic} of {} trajectories chaotic (stretch rate > {th}); largest relative energy drift {:.2e}",
                section.trajectory_max_rg.len(),
                section.max_rel_energy_drift
            ));
            if section.no_crossings {
                self.out.note("warning: no trajectory crossed the section");
            }
        }
        Ok(())
    }

    fn centroid_poincare(&mut self, gyration: bool) -> Result<Vec<(f64, usize)>, CliError> {
        let t = self.cfg.temperature()?;
        let n = self.cfg.n_beads_at(t);
        let e = self.cfg.shell_energy_per_bead();
        let sc = &self.cfg.section;
        let cs = centroid_poincare(
            &self.params,
            t,
            n,
            e,
            sc.n_traj,
            &self.cfg.section_propagation(),
            &self.cfg.shell_config(),
            self.cfg.run.seed,
            self.exec,
        )
        .in_module("ring_polymer")?;
        let section = &cs.section;
        self.write_section(section, "section.csv", |_| true)?;
        self.out.note(format!(
            "centroid section at H_N = {} x {} (T = {:.3} T_c): {} points",
            n,
            num(e),
            t / self.params.crossover_temperature(),
            section.points.len()
        ));
        if gyration {
            self.gyration(section)?;
        }
        Ok(vec![(t, n)])
    }

    fn gyration(&mut self, section: &Section) -> Result<(), CliError> {
        let sc = &self.cfg.section;
        let hist = gyration_histogram(&section.trajectory_max_rg, sc.bins, None)
            .in_module("ring_polymer")?;
        let rows: Vec<Vec<String>> = hist
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![num(hist.edges[i]), num(hist.edges[i + 1]), c.to_string()])
            .collect();
        self.out.csv(
            "gyration_histogram.csv",
            "gyration_histogram",
            &["bin_lo", "bin_hi", "count"],
            &rows,
        )?;
        let m = hist.modality;
        let threshold = sc.rg_threshold.unwrap_or(if m.bimodal {
            0.5 * (m.means[0] + m.means[1])
        } else {
            f64::INFINITY
        });
        self.write_section(section, "section_filtered.csv", |rg| rg <= threshold)?;
        let kept: Vec<usize> = (0..section.trajectory_max_rg.len())
            .filter(|&i| section.trajectory_max_rg[i] <= threshold)
            .collect();
        let kept_chaotic = kept
            .iter()
            .filter(|&&i| section.is_chaotic(i, sc.chaos_threshold))
            .count();
        let summary = serde_json::json!({
            "means": m.means,
            "spreads": m.spreads,
            "weights": m.weights,
            "separation": m.separation,
            "bimodal": m.bimodal,
            "threshold": if threshold.is_finite() { Some(threshold) } else { None },
            "trajectories": section.trajectory_max_rg.len(),
            "kept_trajectories": kept.len(),
            "kept_chaotic": kept_chaotic,
            "kept_regular_fraction": if kept.is_empty() { None } else { Some(1.0 - kept_chaotic as f64 / kept.len() as f64) },
        });
        self.out.json("gyration.json", "gyration", &summary)?;
        self.out.note(format!(
            "max r_g clusters at {:.3} and {:.3} (separation {:.2}, bimodal {}); filter keeps r_g <= {:.3}: {} trajectories, {} chaotic",
            m.means[0],
            m.means[1],
            m.separation,
            m.bimodal,
            threshold,
            kept.len(),
            kept_chaotic
        ));
        Ok(())
    }

    fn instanton(&mut self) -> Result<Vec<(f64, usize)>, CliError> {
        let temps = self.cfg.instanton_temperatures()?;
        let n = self.cfg.instanton.n_beads;
        let icfg = self.cfg.instanton_config();
        let tc = self.params.crossover_temperature();
        let (mut rows, mut beads, mut spectra) = (Vec::new(), Vec::new(), Vec::new());
        for &t in &temps {
            let r = find_instanton(&self.params, t, n, &icfg).in_module("instanton")?;
            let b = bound_check(&r, &self.params).in_module("instanton")?;
            rows.push(vec![
                num(t),
                num(t / tc),
                n.to_string(),
                num(r.action_value),
                num(b.eta),
                num(b.eta_projected),
                num(b.bound),
                num(b.finite_n_bound),
                num(b.eta / b.bound),
                num(b.orthogonal_mode_sum),
                num(b.orthogonal_mode_sum_closed),
                r.n_negative.to_string(),
                r.index.n_zero.to_string(),
                num(r.zero_mode_residual),
                num(r.gradient_norm),
                r.iterations.to_string(),
                r.collapsed.to_string(),
                num(r.radius_of_gyration()),
            ]);
            for (i, q) in r.beads().iter().enumerate() {
                beads.push(vec![num(t), i.to_string(), num(q.x), num(q.y)]);
            }
            for (k, v) in r.hessian_spectrum.iter().enumerate() {
                spectra.push(vec![num(t), k.to_string(), num(*v)]);
            }
            self.out.note(format!(
                "T = {:.3} T_c: eta = {:.5}, bound = {:.5}, eta/bound = {:.4}, {} negative / {} zero modes, |grad| = {:.1e}",
                t / tc,
                b.eta,
                b.bound,
                b.eta / b.bound,
                r.n_negative,
                r.index.n_zero,
                r.gradient_norm
            ));
        }
        self.out.csv(
            "instanton.csv",
            "instanton",
            &[
                "temperature",
                "t_over_tc",
                "n_beads",
                "action",
                "eta",
                "eta_projected",
                "bound",
                "finite_n_bound",
                "eta_over_bound",
                "orthogonal_mode_sum",
                "orthogonal_mode_sum_closed",
                "n_negative",
                "n_zero",
                "zero_mode_residual",
                "gradient_norm",
                "iterations",
                "collapsed",
                "radius_of_gyration",
            ],
            &rows,
        )?;
        self.out.csv(
            "instanton_beads.csv",
            "instanton_beads",
            &["temperature", "bead", "x", "y"],
            &beads,
        )?;
        self.out.csv(
            "instanton_spectrum.csv",
            "instanton_spectrum",
            &["temperature", "index", "eigenvalue"],
            &spectra,
        )?;
        Ok(temps.iter().map(|&t| (t, n)).collect())
    }

    fn husimi(&mut self) -> Result<Vec<(f64, usize)>, CliError> {
        let h = &self.cfg.husimi;
        let grid = self.cfg.grid_spec()?;
        let spec = solve_spectrum(&self.params, &grid, StateSelection::Count(h.state + 1))
            .in_module("quantum")?;
        let x_slice = h
            .x_slice
            .unwrap_or_else(|| self.params.well_position_sq().sqrt());
        let chi = y_ground_profile(&self.params, &grid, x_slice).in_module("quantum")?;
        let lin = |(a, b, n): (f64, f64, usize)| -> Vec<f64> {
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let sigma = h
            .sigma_x
            .unwrap_or_else(|| default_husimi_width(&self.params));
        let map = husimi_section(
            &spec,
            h.state,
            &lin(h.x_range),
            &lin(h.p_range),
            sigma,
            &chi,
        )
        .in_module("quantum")?;
        let np = map.p0.len();
        let rows: Vec<Vec<String>> = (0..map.values.len())
            .map(|i| vec![num(map.x0[i / np]), num(map.p0[i % np]), num(map.values[i])])
            .collect();
        self.out
            .csv("husimi.csv", "husimi", &["x0", "p0", "value"], &rows)?;
        let (xs, ys) = (grid.x_points(), grid.y_points());
        let psi = spec.state(h.state);
        let rows: Vec<Vec<String>> = (0..psi.len())
            .map(|i| vec![num(xs[i / grid.n_y]), num(ys[i % grid.n_y]), num(psi[i])])
            .collect();
        self.out
            .csv("eigenstate.csv", "eigenstate", &["x", "y", "psi"], &rows)?;
        let rows: Vec<Vec<String>> = (0..spec.n_states)
            .map(|n| {
                vec![
                    n.to_string(),
                    num(spec.energies[n]),
                    spec.parities[n].as_str().to_string(),
                ]
            })
            .collect();
        self.out.csv(
            "spectrum.csv",
            "spectrum",
            &["index", "energy", "parity"],
            &rows,
        )?;
        self.out.note(format!(
            "state {} at E = {:.6} ({}); Husimi width {:.4}, y profile at x = {:.4}",
            h.state,
            spec.energies[h.state],
            spec.parities[h.state].as_str(),
            sigma,
            x_slice
        ));
        Ok(Vec::new())
    }

    fn sweep(&mut self, method: SweepMethod) -> Result<Vec<(f64, usize)>, CliError> {
        let temps = self.cfg.temperatures()?;
        let config_sha = sha256_hex(self.cfg.to_toml().as_bytes());
        let progress_path = self.out.root().join(PROGRESS);
        let mut progress = SweepProgress {
            config_sha256: config_sha.clone(),
            method: method.as_str().into(),
            entries: Vec::new(),
        };
        if self.resume {
            if let Ok(text) = std::fs::read_to_string(&progress_path) {
                if let Ok(old) = serde_json::from_str::<SweepProgress>(&text) {
                    if old.config_sha256 == config_sha && old.method == method.as_str() {
                        progress = old;
                    }
                }
            }
        }
        let quantum = match method {
            SweepMethod::Quantum => Some(QuantumSetup::new(self.cfg, &temps)?),
            _ => None,
        };
        let kind = match method {
            SweepMethod::Classical => OtocKind::ClassicalThermal,
            SweepMethod::Rpmd => OtocKind::RpmdThermal,
            SweepMethod::Quantum => OtocKind::QuantumKubo,
        };
        let tc = self.params.crossover_temperature();
        let mut all = Vec::with_capacity(temps.len());
        for (i, &t) in temps.iter().enumerate() {
            let file = format!("series/otoc_{}_{i:02}.csv", method.as_str());
            let reused = progress
                .entries
                .iter()
                .find(|e| e.index == i && e.temperature == t)
                .and_then(|e| {
                    let bytes = std::fs::read(self.out.root().join(&e.file)).ok()?;
                    (sha256_hex(&bytes) == e.sha256).then(|| {
                        parse_otoc_csv(std::str::from_utf8(&bytes).ok()?, kind, e.n_samples).ok()
                    })?
                });
            let s = match reused {
                Some(s) => {
                    self.out
                        .note(format!("T = {:.3} T_c: reused from an earlier run", t / tc));
                    s
                }
                None => thermal_series(self.cfg, method, t, self.exec, quantum.as_ref())?,
            };
            self.out.csv(&file, "otoc", &OTOC_HEADER, &otoc_rows(&s))?;
            let sha = self
                .out
                .files()
                .iter()
                .find(|f| f.file == file)
                .map(|f| f.sha256.clone())
                .unwrap_or_default();
            progress.entries.retain(|e| e.index != i);
            progress.entries.push(ProgressEntry {
                index: i,
                temperature: t,
                file: file.clone(),
                sha256: sha,
                n_samples: s.n_samples,
            });
            let text = serde_json::to_string_pretty(&progress).expect("serialisable");
            std::fs::write(&progress_path, text).map_err(|e| CliError::io(&progress_path, e))?;
            all.push(s);
        }
        let mut fits = Vec::with_capacity(all.len());
        for s in &all {
            fits.push(self.fit(s)?);
        }
        let mut report = BoundReport::new(
            &temps,
            self.params.k_b,
            self.params.hbar,
            self.cfg.analysis.bound_sigmas,
        );
        report
            .add_method(method.as_str(), fits.clone())
            .in_module("analysis")?;
        let violated = |t: f64| report.violations.iter().any(|v| v.temperature == t);

        let mut long = Vec::new();
        for (s, &t) in all.iter().zip(&temps) {
            for i in 0..s.len() {
                long.push(vec![
                    method.as_str().to_string(),
                    num(t),
                    num(t / tc),
                    num(s.times[i]),
                    num(s.values[i]),
                    num(s.std_errors[i]),
                ]);
            }
        }
        self.out.csv(
            "otoc_sweep.csv",
            "otoc_sweep",
            &[
                "method",
                "temperature",
                "t_over_tc",
                "time",
                "value",
                "std_error",
            ],
            &long,
        )?;
        let rows: Vec<Vec<String>> = fits
            .iter()
            .zip(&temps)
            .map(|(f, &t)| fit_row(method.as_str(), t, &self.params, f, violated(t)))
            .collect();
        self.out
            .csv("lyapunov.csv", "lyapunov", &FIT_HEADER, &rows)?;
        let json = BoundJson {
            method: method.as_str(),
            convention: otoc_core::analysis::LAMBDA_CONVENTION,
            sigmas: report.sigmas,
            crossover_temperature: tc,
            rows: fits
                .iter()
                .zip(&temps)
                .zip(&report.bound_values)
                .map(|((f, &t), &b)| BoundJsonRow {
                    temperature: t,
                    t_over_tc: t / tc,
                    bound: b,
                    lambda: f.lambda(),
                    stderr: f.fit().map(|x| x.stderr),
                    window: f.fit().map(|x| x.window),
                    r_squared: f.fit().map(|x| x.r_squared),
                    violation: violated(t),
                })
                .collect(),
            violations: report.violations.len(),
        };
        self.out.json("bound_report.json", "bound_report", &json)?;
        self.out.note(format!(
            "{} sweep over {} temperatures",
            method.as_str(),
            temps.len()
        ));
        for (f, &t) in fits.iter().zip(&temps) {
            self.out.note(format!(
                "  T = {:.3} T_c: {}",
                t / tc,
                describe_fit(f, chaos_bound(t, self.params.k_b, self.params.hbar))
            ));
        }
        self.out
            .note(format!("bound violations: {}", report.violations.len()));
        Ok(temps
            .iter()
            .map(|&t| (t, n_beads_for(self.cfg, method, t)))
            .collect())
    }
}
