//! Physical parameters and the shared state types.
//!
//! Time is measured in the ODE's own variable `t`; the drive has period
//! `2π/ω`, so with the default `ω = 2π` one unit of time is one period.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anisotropic all-to-all coupling constants `(J_x, J_y, J_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Couplings {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Couplings {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// All constants of one run. Immutable; sweeps build a fresh value per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drive amplitude Γ.
    pub gamma: f64,
    /// Drive angular frequency ω.
    pub omega: f64,
    /// Collective dissipation strength κ.
    pub kappa: f64,
    pub j: Couplings,
    /// Number of spin-1/2 sites; only used by finite-size quantum runs.
    pub n_spins: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            omega: TAU,
            kappa: 0.0,
            j: Couplings::default(),
            n_spins: 1,
        }
    }
}

impl ModelParams {
    pub fn new(gamma: f64, kappa: f64, j: Couplings) -> Self {
        Self {
            gamma,
            kappa,
            j,
            ..Self::default()
        }
    }

    pub fn with_n_spins(mut self, n: usize) -> Self {
        self.n_spins = n;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Driving period `2π/ω`.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma, self.omega, self.kappa, self.j.x, self.j.y, self.j.z,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.omega <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParams(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.n_spins == 0 {
            return Err(Error::InvalidParams("n_spins must be at least 1".into()));
        }
        Ok(())
    }

    /// Flat key/value view, in the order used by configuration files.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("gamma", self.gamma.to_string()),
            ("omega", self.omega.to_string()),
            ("kappa", self.kappa.to_string()),
            ("jx", self.j.x.to_string()),
            ("jy", self.j.y.to_string()),
            ("jz", self.j.z.to_string()),
            ("n_spins", self.n_spins.to_string()),
        ]
    }

    /// Overwrites fields from flat key/value pairs. Unknown keys are rejected.
    pub fn apply_pairs<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (key, value) in pairs {
            let real = || {
                value.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParams(format!("{key}: cannot parse '{value}' as a number"))
                })
            };
            match key {
                "gamma" => self.gamma = real()?,
                "omega" => self.omega = real()?,
                "kappa" => self.kappa = real()?,
                "jx" => self.j.x = real()?,
                "jy" => self.j.y = real()?,
                "jz" => self.j.z = real()?,
                "n_spins" => {
                    self.n_spins = value.trim().parse().map_err(|_| {
                        Error::InvalidParams(format!(
                            "n_spins: cannot parse '{value}' as a positive integer"
                        ))
                    })?
                }
                other => {
                    return Err(Error::InvalidParams(format!(
                        "unknown parameter key '{other}'"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Classical polarization `m = (m^x, m^y, m^z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MacrospinState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MacrospinState {
    pub const X_POLARIZED: Self = Self::new(1.0, 0.0, 0.0);
    pub const SOUTH_POLE: Self = Self::new(0.0, 0.0, -1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Max-norm distance.
    pub fn max_dist(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    /// Polar angles of the direction of `m`. Undefined (returns θ=0) at the origin.
    pub fn to_angle(&self) -> SphericalAngle {
        let r = self.norm();
        if r == 0.0 {
            return SphericalAngle {
                theta: 0.0,
                phi: 0.0,
            };
        }
        let theta = (self.z / r).clamp(-1.0, 1.0).acos();
        let mut phi = self.y.atan2(self.x);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi -= TAU;
        }
        SphericalAngle { theta, phi }
    }
}

impl fmt::Display for MacrospinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Point on the unit sphere, `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalAngle {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalAngle {
    pub const X_POLARIZED: Self = Self {
        theta: PI / 2.0,
        phi: 0.0,
    };

    /// Builds an angle, wrapping `φ` into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(theta.is_finite() && phi.is_finite()) || !(0.0..=PI).contains(&theta) {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, pi], got {theta}"
            )));
        }
        Ok(Self {
            theta,
            phi: phi.rem_euclid(TAU),
        })
    }

    /// Direction of a (not necessarily normalized) polarization vector.
    pub fn from_vector(m: MacrospinState) -> Self {
        m.to_angle()
    }
}

/// `(θ, φ) ↦ (sinθ cosφ, sinθ sinφ, cosθ)`.
pub fn angle_to_vector(a: SphericalAngle) -> MacrospinState {
    let (st, ct) = a.theta.sin_cos();
    let (sp, cp) = a.phi.sin_cos();
    MacrospinState::new(st * cp, st * sp, ct)
}

/// `n` nearly uniform points on the unit sphere (Fibonacci lattice), as angles.
pub fn fibonacci_sphere(n: usize) -> Vec<SphericalAngle> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let theta = z.clamp(-1.0, 1.0).acos();
            let phi = (golden * i as f64).rem_euclid(TAU);
            SphericalAngle { theta, phi }
        })
        .collect()
}
