use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Metropolis acceptance {rate:.3} outside [{lo:.2}, {hi:.2}]")]
    SamplerAcceptance { rate: f64, lo: f64, hi: f64 },

    #[error("energy {energy} is not above the potential minimum {minimum}")]
    InvalidEnergy { energy: f64, minimum: f64 },

    #[error("energy shell H = {energy} unreachable after {attempts} attempts")]
    ShellUnreachable { energy: f64, attempts: usize },

    #[error("thermostat blew up after {step} steps (energy {energy:e}); {config}")]
    ThermostatBlowUp {
        step: usize,
        energy: f64,
        config: String,
    },

    #[error("trajectory {index} diverged at t = {time}")]
    Diverged { index: usize, time: f64 },

    #[error("grid too coarse: kinetic Nyquist energy {nyquist:.3} below cutoff {e_cut:.3}")]
    GridTooCoarse { nyquist: f64, e_cut: f64 },

    #[error("eigensolver failed: state {state} residual {residual:e}")]
    EigenNonConvergence { state: usize, residual: f64 },

    #[error(
        "Boltzmann tail {tail:e} above 1e-6 with e_cut = {e_cut:.3}; need e_cut >= {required:.3}"
    )]
    TailTruncation {
        tail: f64,
        e_cut: f64,
        required: f64,
    },

    #[error(
        "instanton search did not converge in {iterations} iterations (|grad| = {grad_norm:e})"
    )]
    InstantonNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("stationary point has {n_negative} negative Hessian eigenvalues, expected 1")]
    WrongSaddleIndex { n_negative: usize },

    #[error("bound violated: eta = {eta} > 2 pi k_B T / hbar = {bound}")]
    BoundViolation { eta: f64, bound: f64 },

    #[error("orthogonal-mode curvature {sum:e} is negative")]
    NegativeOrthogonalCurvature { sum: f64 },

    #[error("series too short: {usable} usable points, need {required}")]
    SeriesTooShort { usable: usize, required: usize },

    #[error("series time grids differ")]
    TimeGridMismatch,
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
