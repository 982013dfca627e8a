//! The two-dimensional double-well-plus-Morse surface and the [`Model`]
//! abstraction every dynamics module is written against.
//!
//! ```text
//! V(x, y) = g (x² − a)² + D (1 − e^{−αy})² − g x² (x² − 2a)(1 − e^{−αy}),   a = m ω_b² / 4g
//! ```
//!
//! For large `y` the surface flattens to `g a² + D` for every `x`; at `y = 0`
//! it reduces to the quartic double well with barrier `V_b = m² ω_b⁴ / 16g`.

use core::f64::consts::PI;

use libm::{exp, log, sqrt};

use crate::error::{invalid, Result};

/// A point in configuration space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Position2 {
    pub x: f64,
    pub y: f64,
}

impl Position2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub type Gradient2 = [f64; 2];
/// Symmetric 2×2 matrix, row major.
pub type Hessian2 = [[f64; 2]; 2];

/// A particle of mass `m` on a two-dimensional potential surface.
///
/// Anything implementing this can be fed to the classical, ring-polymer,
/// instanton and quantum machinery.
pub trait Model: Sync {
    fn mass(&self) -> f64;

    fn hbar(&self) -> f64 {
        1.0
    }

    fn k_b(&self) -> f64 {
        1.0
    }

    fn energy(&self, q: Position2) -> f64;

    fn gradient(&self, q: Position2) -> Gradient2;

    fn hessian(&self, q: Position2) -> Hessian2;

    fn gradient_hessian(&self, q: Position2) -> (Gradient2, Hessian2) {
        (self.gradient(q), self.hessian(q))
    }

    /// Starting point for sampling chains: a low-lying configuration.
    fn reference_point(&self) -> Position2 {
        Position2::default()
    }

    /// Global minimum of the surface.
    fn minimum_energy(&self) -> f64 {
        0.0
    }

    /// `V(x, y) == V(−x, y)` holds exactly.
    fn x_symmetric(&self) -> bool {
        false
    }

    fn beta(&self, temperature: f64) -> f64 {
        1.0 / (self.k_b() * temperature)
    }
}

/// Parameters of the double-well-plus-Morse surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams {
    pub mass: f64,
    /// Quartic coupling `g`.
    pub g: f64,
    /// Barrier frequency `ω_b`.
    pub omega_b: f64,
    /// Morse depth `D`.
    pub depth: f64,
    /// Morse range `α`.
    pub alpha: f64,
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for PotentialParams {
    /// `m = 0.5, g = 0.08, ω_b = 2, D = 3 V_b, α = 0.382`, natural units.
    fn default() -> Self {
        Self::with_depth_factor(0.5, 0.08, 2.0, 3.0, 0.382)
    }
}

impl PotentialParams {
    /// Builds parameters with `D = depth_factor · V_b`.
    pub fn with_depth_factor(
        mass: f64,
        g: f64,
        omega_b: f64,
        depth_factor: f64,
        alpha: f64,
    ) -> Self {
        let vb = mass * mass * omega_b * omega_b * omega_b * omega_b / (16.0 * g);
        Self {
            mass,
            g,
            omega_b,
            depth: depth_factor * vb,
            alpha,
            hbar: 1.0,
            k_b: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.mass),
            ("g", self.g),
            ("omega_b", self.omega_b),
            ("D", self.depth),
            ("alpha", self.alpha),
            ("hbar", self.hbar),
            ("k_B", self.k_b),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, "must be finite and positive"));
            }
        }
        Ok(())
    }

    /// `a = m ω_b² / 4g`, the squared well position.
    pub fn well_position_sq(&self) -> f64 {
        self.mass * self.omega_b * self.omega_b / (4.0 * self.g)
    }

    /// `V_b = m² ω_b⁴ / 16g`.
    pub fn barrier_height(&self) -> f64 {
        let w2 = self.omega_b * self.omega_b;
        self.mass * self.mass * w2 * w2 / (16.0 * self.g)
    }

    /// `T_c = ħ ω_b / 2π k_B`.
    pub fn crossover_temperature(&self) -> f64 {
        self.hbar * self.omega_b / (2.0 * PI * self.k_b)
    }

    /// Harmonic frequency along `x` at the well minima, `√(8 g a / m)`.
    pub fn well_frequency(&self) -> f64 {
        sqrt(8.0 * self.g * self.well_position_sq() / self.mass)
    }

    /// Harmonic frequency of the Morse oscillator, `√(2 D α² / m)`.
    pub fn morse_frequency(&self) -> f64 {
        sqrt(2.0 * self.depth * self.alpha * self.alpha / self.mass)
    }

    /// Location of the global minimum with `x > 0`.
    ///
    /// `∂V/∂x` vanishes on `x² = a` for every `y`; along that line the
    /// surface is `D e² + V_b e` in `e = 1 − exp(−αy)`, so the minimum sits at
    /// `e = −V_b / 2D`, slightly below `y = 0`. `(±√a, 0)` itself has `V = 0`
    /// but a nonzero `y` force.
    pub fn well_minimum(&self) -> Position2 {
        let e = -self.barrier_height() / (2.0 * self.depth);
        Position2::new(sqrt(self.well_position_sq()), -log(1.0 - e) / self.alpha)
    }

    /// Asymptotic value of the surface as `y → ∞` (independent of `x`).
    pub fn dissociation_energy(&self) -> f64 {
        let a = self.well_position_sq();
        self.g * a * a + self.depth
    }
}

impl Model for PotentialParams {
    fn mass(&self) -> f64 {
        self.mass
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn k_b(&self) -> f64 {
        self.k_b
    }

    fn energy(&self, q: Position2) -> f64 {
        let a = self.well_position_sq();
        let x2 = q.x * q.x;
        let e = 1.0 - exp(-self.alpha * q.y);
        let w = x2 - a;
        self.g * w * w + self.depth * e * e - self.g * x2 * (x2 - 2.0 * a) * e
    }

    fn gradient(&self, q: Position2) -> Gradient2 {
        let a = self.well_position_sq();
        let x2 = q.x * q.x;
        let s = exp(-self.alpha * q.y);
        let e = 1.0 - s;
        let f = x2 * (x2 - 2.0 * a);
        [
            4.0 * self.g * q.x * (x2 - a) * s,
            self.alpha * s * (2.0 * self.depth * e - self.g * f),
        ]
    }

    fn hessian(&self, q: Position2) -> Hessian2 {
        let a = self.well_position_sq();
        let x2 = q.x * q.x;
        let s = exp(-self.alpha * q.y);
        let f = x2 * (x2 - 2.0 * a);
        let xx = self.g * (12.0 * x2 - 4.0 * a) * s;
        let xy = -4.0 * self.g * q.x * (x2 - a) * self.alpha * s;
        let yy = self.alpha * self.alpha * s * (2.0 * self.depth * (2.0 * s - 1.0) + self.g * f);
        [[xx, xy], [xy, yy]]
    }

    fn gradient_hessian(&self, q: Position2) -> (Gradient2, Hessian2) {
        let a = self.well_position_sq();
        let x2 = q.x * q.x;
        let s = exp(-self.alpha * q.y);
        let e = 1.0 - s;
        let f = x2 * (x2 - 2.0 * a);
        let gx = 4.0 * self.g * q.x * (x2 - a) * s;
        let gy = self.alpha * s * (2.0 * self.depth * e - self.g * f);
        let xx = self.g * (12.0 * x2 - 4.0 * a) * s;
        let xy = -self.alpha * gx;
        let yy = self.alpha * self.alpha * s * (2.0 * self.depth * (2.0 * s - 1.0) + self.g * f);
        ([gx, gy], [[xx, xy], [xy, yy]])
    }

    fn reference_point(&self) -> Position2 {
        self.well_minimum()
    }

    fn minimum_energy(&self) -> f64 {
        let vb = self.barrier_height();
        -vb * vb / (4.0 * self.depth)
    }

    fn x_symmetric(&self) -> bool {
        true
    }
}

/// The same surface with the `x`–`y` coupling term removed: a separable
/// quartic double well plus Morse oscillator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uncoupled(pub PotentialParams);

impl Uncoupled {
    /// Energy stored in the `x` degree of freedom, conserved by separability.
    pub fn x_energy(&self, x: f64, px: f64) -> f64 {
        let p = &self.0;
        let w = x * x - p.well_position_sq();
        px * px / (2.0 * p.mass) + p.g * w * w
    }
}

impl Model for Uncoupled {
    fn mass(&self) -> f64 {
        self.0.mass
    }

    fn hbar(&self) -> f64 {
        self.0.hbar
    }

    fn k_b(&self) -> f64 {
        self.0.k_b
    }

    fn energy(&self, q: Position2) -> f64 {
        let p = &self.0;
        let w = q.x * q.x - p.well_position_sq();
        let e = 1.0 - exp(-p.alpha * q.y);
        p.g * w * w + p.depth * e * e
    }

    fn gradient(&self, q: Position2) -> Gradient2 {
        let p = &self.0;
        let s = exp(-p.alpha * q.y);
        [
            4.0 * p.g * q.x * (q.x * q.x - p.well_position_sq()),
            2.0 * p.depth * p.alpha * s * (1.0 - s),
        ]
    }

    fn hessian(&self, q: Position2) -> Hessian2 {
        let p = &self.0;
        let s = exp(-p.alpha * q.y);
        [
            [p.g * (12.0 * q.x * q.x - 4.0 * p.well_position_sq()), 0.0],
            [0.0, 2.0 * p.depth * p.alpha * p.alpha * s * (2.0 * s - 1.0)],
        ]
    }

    fn reference_point(&self) -> Position2 {
        Position2::new(sqrt(self.0.well_position_sq()), 0.0)
    }

    fn x_symmetric(&self) -> bool {
        true
    }
}

/// `V = ½ m (ω_x² x² + ω_y² y²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonic {
    pub mass: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub hbar: f64,
}

impl Harmonic {
    pub fn isotropic(mass: f64, omega: f64) -> Self {
        Self {
            mass,
            omega_x: omega,
            omega_y: omega,
            hbar: 1.0,
        }
    }
}

impl Model for Harmonic {
    fn mass(&self) -> f64 {
        self.mass
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn energy(&self, q: Position2) -> f64 {
        0.5 * self.mass
            * (self.omega_x * self.omega_x * q.x * q.x + self.omega_y * self.omega_y * q.y * q.y)
    }

    fn gradient(&self, q: Position2) -> Gradient2 {
        [
            self.mass * self.omega_x * self.omega_x * q.x,
            self.mass * self.omega_y * self.omega_y * q.y,
        ]
    }

    fn hessian(&self, _q: Position2) -> Hessian2 {
        [
            [self.mass * self.omega_x * self.omega_x, 0.0],
            [0.0, self.mass * self.omega_y * self.omega_y],
        ]
    }

    fn x_symmetric(&self) -> bool {
        true
    }
}

/// `V = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Free {
    pub mass: f64,
}

impl Model for Free {
    fn mass(&self) -> f64 {
        self.mass
    }

    fn energy(&self, _q: Position2) -> f64 {
        0.0
    }

    fn gradient(&self, _q: Position2) -> Gradient2 {
        [0.0; 2]
    }

    fn hessian(&self, _q: Position2) -> Hessian2 {
        [[0.0; 2]; 2]
    }

    fn x_symmetric(&self) -> bool {
        true
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn mass(&self) -> f64 {
        (**self).mass()
    }
    fn hbar(&self) -> f64 {
        (**self).hbar()
    }
    fn k_b(&self) -> f64 {
        (**self).k_b()
    }
    fn energy(&self, q: Position2) -> f64 {
        (**self).energy(q)
    }
    fn gradient(&self, q: Position2) -> Gradient2 {
        (**self).gradient(q)
    }
    fn hessian(&self, q: Position2) -> Hessian2 {
        (**self).hessian(q)
    }
    fn gradient_hessian(&self, q: Position2) -> (Gradient2, Hessian2) {
        (**self).gradient_hessian(q)
    }
    fn reference_point(&self) -> Position2 {
        (**self).reference_point()
    }
    fn minimum_energy(&self) -> f64 {
        (**self).minimum_energy()
    }
    fn x_symmetric(&self) -> bool {
        (**self).x_symmetric()
    }
}
