//! Fixed-step explicit Runge–Kutta schemes shared by the classical and the
//! quantum propagators.
//!
//! Every stage of the three supported tableaux sits at `t`, `t + h/2` or
//! `t + h`, so stage times are addressed by a half-step index. Together with
//! the requirement that the step divides the drive period this lets the
//! periodic drive be tabulated once per period.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RkOrder {
    /// Explicit midpoint rule.
    Rk2,
    /// Kutta's third-order rule.
    Rk3,
    /// Classical fourth-order rule.
    Rk4,
}

impl RkOrder {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            2 => Ok(Self::Rk2),
            3 => Ok(Self::Rk3),
            4 => Ok(Self::Rk4),
            other => Err(Error::InvalidIntegrator(format!(
                "order must be 2, 3 or 4, got {other}"
            ))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Self::Rk2 => 2,
            Self::Rk3 => 3,
            Self::Rk4 => 4,
        }
    }

    fn tableau(self) -> &'static Tableau {
        match self {
            Self::Rk2 => &MIDPOINT,
            Self::Rk3 => &KUTTA3,
            Self::Rk4 => &CLASSIC4,
        }
    }
}

/// Order and step size; `dt` is in units of the drive period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub order: RkOrder,
    pub dt: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            order: RkOrder::Rk4,
            dt: 1e-3,
        }
    }
}

impl IntegratorSpec {
    pub fn new(order: RkOrder, dt: f64) -> Self {
        Self { order, dt }
    }

    pub fn rk4(dt: f64) -> Self {
        Self::new(RkOrder::Rk4, dt)
    }

    /// Number of steps per drive period; fails unless `dt` divides the period.
    pub fn steps_per_period(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidIntegrator(format!(
                "dt must lie in (0, 1], got {}",
                self.dt
            )));
        }
        let n = (1.0 / self.dt).round();
        if ((n * self.dt) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidIntegrator(format!(
                "dt = {} does not divide the drive period",
                self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn halved(&self) -> Self {
        Self {
            order: self.order,
            dt: self.dt / 2.0,
        }
    }
}

struct Tableau {
    /// Stage times as multiples of `h/2`.
    c_half: &'static [usize],
    a: &'static [&'static [f64]],
    b: &'static [f64],
}

static MIDPOINT: Tableau = Tableau {
    c_half: &[0, 1],
    a: &[&[], &[0.5]],
    b: &[0.0, 1.0],
};

static KUTTA3: Tableau = Tableau {
    c_half: &[0, 1, 2],
    a: &[&[], &[0.5], &[-1.0, 2.0]],
    b: &[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
};

static CLASSIC4: Tableau = Tableau {
    c_half: &[0, 1, 1, 2],
    a: &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]],
    b: &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
};

/// Field element usable as an ODE state component.
pub trait Component:
    Copy + Default + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self>
{
}

impl<T> Component for T where
    T: Copy + Default + Send + Sync + Add<Output = T> + Mul<f64, Output = T>
{
}

/// Reusable stage storage for one propagation.
pub struct RkStepper<T> {
    tableau: &'static Tableau,
    k: Vec<Vec<T>>,
    stage: Vec<T>,
}

impl<T: Component> RkStepper<T> {
    pub fn new(order: RkOrder, dim: usize) -> Self {
        let tableau = order.tableau();
        Self {
            tableau,
            k: vec![vec![T::default(); dim]; tableau.b.len()],
            stage: vec![T::default(); dim],
        }
    }

    /// Advances `y` by one step of size `h` starting at half-step index
    /// `half_index` (i.e. at time `half_index * h / 2`).
    ///
    /// `rhs(half_index, y, dy)` must write the derivative at that stage time.
    pub fn step<F>(&mut self, h: f64, half_index: usize, y: &mut [T], mut rhs: F)
    where
        F: FnMut(usize, &[T], &mut [T]),
    {
        let tab = self.tableau;
        for s in 0..tab.b.len() {
            let (done, rest) = self.k.split_at_mut(s);
            let ks = &mut rest[0];
            if s == 0 {
                rhs(half_index + tab.c_half[0], y, ks);
                continue;
            }
            self.stage.copy_from_slice(y);
            for (j, &aij) in tab.a[s].iter().enumerate() {
                if aij != 0.0 {
                    let w = aij * h;
                    for (st, kj) in self.stage.iter_mut().zip(&done[j]) {
                        *st = *st + *kj * w;
                    }
                }
            }
            rhs(half_index + tab.c_half[s], &self.stage, ks);
        }
        for (s, &bs) in tab.b.iter().enumerate() {
            if bs != 0.0 {
                let w = bs * h;
                for (yi, ki) in y.iter_mut().zip(&self.k[s]) {
                    *yi = *yi + *ki * w;
                }
            }
        }
    }
}

/// Drive factors `sin(ωt)` and `1 − cos(ωt)` at one stage time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub sin: f64,
    pub one_minus_cos: f64,
}

impl DriveSample {
    pub fn at(omega: f64, t: f64) -> Self {
        let (s, c) = (omega * t).sin_cos();
        Self {
            sin: s,
            one_minus_cos: 1.0 - c,
        }
    }
}

/// Drive factors on the half-step grid of one period.
#[derive(Debug, Clone)]
pub struct DriveTable {
    samples: Vec<DriveSample>,
}

impl DriveTable {
    pub fn new(steps_per_period: usize) -> Self {
        let m = 2 * steps_per_period;
        let samples = (0..m)
            .map(|k| {
                let phase = PI * k as f64 / steps_per_period as f64;
                let (s, c) = phase.sin_cos();
                DriveSample {
                    sin: s,
                    one_minus_cos: 1.0 - c,
                }
            })
            .collect();
        Self { samples }
    }

    #[inline]
    pub fn get(&self, half_index: usize) -> DriveSample {
        self.samples[half_index % self.samples.len()]
    }
}
