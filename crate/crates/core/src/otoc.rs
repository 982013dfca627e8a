//! Time series of OTOC estimates.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::stats::Moments;

/// Which estimator produced a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OtocKind {
    ClassicalThermal,
    ClassicalMicro,
    RpmdThermal,
    RpmdMicro,
    QuantumKubo,
}

impl OtocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OtocKind::ClassicalThermal => "classical-thermal",
            OtocKind::ClassicalMicro => "classical-micro",
            OtocKind::RpmdThermal => "rpmd-thermal",
            OtocKind::RpmdMicro => "rpmd-micro",
            OtocKind::QuantumKubo => "quantum-kubo",
        }
    }
}

impl core::fmt::Display for OtocKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OtocMeta {
    pub temperature: Option<f64>,
    /// Shell energy of microcanonical runs.
    pub energy: Option<f64>,
    pub n_beads: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    /// Largest energy error seen along the trajectories (relative to the
    /// shell energy for microcanonical runs, absolute otherwise).
    pub max_energy_drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtocSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard error of the ensemble mean (zero for the quantum reference).
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
    pub kind: OtocKind,
    pub meta: OtocMeta,
}

impl OtocSeries {
    pub fn from_moments(
        times: Vec<f64>,
        moments: &[Moments],
        kind: OtocKind,
        meta: OtocMeta,
    ) -> Self {
        OtocSeries {
            times,
            values: moments.iter().map(Moments::mean).collect(),
            std_errors: moments.iter().map(Moments::std_error).collect(),
            n_samples: moments.first().map_or(0, Moments::count),
            kind,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks the structural invariants: equal lengths, times strictly
    /// increasing from zero, values finite and non-negative.
    pub fn check(&self) -> Result<()> {
        let n = self.times.len();
        if self.values.len() != n || self.std_errors.len() != n {
            return Err(Error::TimeGridMismatch);
        }
        if n > 0 && self.times[0] != 0.0 {
            return Err(crate::error::invalid("times", "series must start at t = 0"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::invalid("times", "not strictly increasing"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Diverged {
                index: i,
                time: self.times[i],
            });
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &OtocSeries) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

/// Output times `0, stride·dt, 2·stride·dt, …` up to `t_max`; the number
/// of integration steps is `stride · (len − 1)`.
pub fn output_times(t_max: f64, dt: f64, stride: usize) -> Vec<f64> {
    let h = dt.abs() * stride as f64;
    let n = (t_max / h + 1e-9) as usize;
    (0..=n).map(|i| i as f64 * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_checks() {
        let t = output_times(1.0, 0.002, 10);
        assert_eq!(t.len(), 51);
        assert!((t[50] - 1.0).abs() < 1e-12);
        let s = OtocSeries {
            values: alloc::vec![1.0; t.len()],
            std_errors: alloc::vec![0.0; t.len()],
            times: t,
            n_samples: 1,
            kind: OtocKind::QuantumKubo,
            meta: OtocMeta::default(),
        };
        assert!(s.check().is_ok());
        let mut bad = s.clone();
        bad.values[3] = -1.0;
        assert!(bad.check().is_err());
    }
}
