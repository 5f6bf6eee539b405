use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{classify_periodicity, Periodicity};
use crate::classical::ClassicalFlow;
use crate::error::{Error, Result};
use crate::model::{angle_to_vector, MacrospinState, ModelParams, SphericalAngle};
use crate::rk::IntegratorSpec;

const FEIGENBAUM_DELTA: f64 = 4.669_201_609;

/// A one-parameter family of maps with a period-doubling cascade.
pub trait PeriodDoublingSystem {
    type State: Clone;

    fn initial(&self) -> Self::State;

    /// Applies the map `n` times at control value `c`.
    fn iterate(&self, c: f64, x: &Self::State, n: usize) -> Result<Self::State>;

    /// Scalar read out for periodicity detection.
    fn observable(&self, x: &Self::State) -> f64;

    /// Refines a period-`period` point near `guess`. Returns the point and its
    /// critical multiplier: the smallest real eigenvalue of the linearized
    /// `period`-fold map, or the common real part of a complex pair.
    fn periodic_orbit(
        &self,
        c: f64,
        period: usize,
        guess: &Self::State,
    ) -> Option<(Self::State, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeigenbaumOptions {
    /// Map iterations discarded before each periodicity check.
    pub settle: usize,
    /// Samples handed to the periodicity classifier (at least 100).
    pub samples: usize,
    pub period_tol: f64,
    /// Bisection stops once the bracket around a doubling point is this narrow.
    pub resolution: f64,
}

impl Default for FeigenbaumOptions {
    fn default() -> Self {
        Self {
            settle: 2000,
            samples: 256,
            period_tol: 1e-5,
            resolution: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeigenbaumEstimate {
    pub base_period: usize,
    #[serde(rename = "points")]
    pub bifurcation_points: Vec<f64>,
    /// `(c_n - c_{n-1}) / (c_{n+1} - c_n)`.
    pub ratios: Vec<f64>,
    #[serde(rename = "delta")]
    pub delta_estimate: f64,
}

fn observe<S: PeriodDoublingSystem>(sys: &S, c: f64, x: &S::State, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut x = x.clone();
    for _ in 0..n {
        x = sys.iterate(c, &x, 1)?;
        out.push(sys.observable(&x));
    }
    Ok(out)
}

fn settled_period<S: PeriodDoublingSystem>(
    sys: &S,
    c: f64,
    from: &S::State,
    min_samples: usize,
    opts: &FeigenbaumOptions,
) -> Result<(S::State, Periodicity)> {
    let x = sys.iterate(c, from, opts.settle)?;
    let values = observe(sys, c, &x, opts.samples.max(min_samples))?;
    let class = classify_periodicity(&values, 0.0, opts.period_tol)?.class;
    Ok((x, class))
}

/// Walks up the cascade in `bracket`, locating each doubling point as the
/// control value where the critical multiplier of the current orbit crosses
/// `-1`. The orbit is followed by continuation; after each crossing the
/// doubled orbit is picked up from a settled run inside the next window,
/// whose period the classifier must confirm.
pub fn locate_doublings<S: PeriodDoublingSystem>(
    sys: &S,
    bracket: [f64; 2],
    max_doublings: usize,
    opts: &FeigenbaumOptions,
) -> Result<FeigenbaumEstimate> {
    let [lo, hi] = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || !(opts.resolution > 0.0) {
        return Err(Error::InvalidParams(format!("bad bracket [{lo}, {hi}]")));
    }
    let (x0, class) = settled_period(sys, lo, &sys.initial(), 0, opts)?;
    let Periodicity::Periodic(base_period) = class else {
        return Err(Error::Analysis(format!(
            "no periodic orbit at the bracket start ({class})"
        )));
    };
    let mut points = Vec::new();
    // Deep in the cascade the orbits get long and continuation may give out;
    // that only matters while fewer than three points are known.
    if let Err(e) = climb(
        sys,
        bracket,
        base_period,
        x0,
        max_doublings,
        opts,
        &mut points,
    ) {
        if points.len() < 3 {
            return Err(e);
        }
    }
    if points.len() < 3 {
        return Err(Error::Analysis(format!(
            "found {} doubling point(s) in [{lo}, {hi}], need at least 3",
            points.len()
        )));
    }
    let ratios: Vec<f64> = points
        .windows(3)
        .map(|w| (w[1] - w[0]) / (w[2] - w[1]))
        .collect();
    let delta_estimate = *ratios.last().expect("at least one ratio");
    Ok(FeigenbaumEstimate {
        base_period,
        bifurcation_points: points,
        ratios,
        delta_estimate,
    })
}

fn climb<S: PeriodDoublingSystem>(
    sys: &S,
    [lo, hi]: [f64; 2],
    mut period: usize,
    x0: S::State,
    max_doublings: usize,
    opts: &FeigenbaumOptions,
    points: &mut Vec<f64>,
) -> Result<()> {
    let lost = |c: f64| Error::Analysis(format!("lost the periodic orbit near {c}"));
    let (mut x, mu) = sys
        .periodic_orbit(lo, period, &x0)
        .ok_or_else(|| lost(lo))?;
    if mu <= -1.0 {
        return Err(Error::Analysis(
            "orbit at the bracket start is already unstable".into(),
        ));
    }
    let mut c = lo;
    let mut step = (hi - lo) / 64.0;

    while points.len() < max_doublings {
        let past = loop {
            let cn = c + step;
            if cn > hi {
                break None;
            }
            match sys.periodic_orbit(cn, period, &x) {
                Some((xn, m)) if m > -1.0 => {
                    c = cn;
                    x = xn;
                }
                Some(_) => break Some(cn),
                None => {
                    step /= 2.0;
                    if step < opts.resolution {
                        return Err(lost(c));
                    }
                }
            }
        };
        let Some(mut b) = past else { return Ok(()) };
        let mut a = c;
        while b - a > opts.resolution {
            let mid = 0.5 * (a + b);
            match sys.periodic_orbit(mid, period, &x) {
                Some((xm, m)) if m > -1.0 => {
                    a = mid;
                    x = xm;
                }
                Some(_) => b = mid,
                None => return Err(lost(mid)),
            }
        }
        let point = 0.5 * (a + b);
        let previous = points.last().copied().unwrap_or(lo);
        points.push(point);
        if points.len() == max_doublings {
            break;
        }

        let next_window = (point - previous) / FEIGENBAUM_DELTA;
        let doubled = 2 * period;
        // Aim for the middle of the predicted next window; the prediction is
        // poor for the first point, so widen the offset until the settled
        // orbit shows the doubled period.
        let mut offset = 0.5 * next_window;
        let mut found = None;
        let mut last_class = Periodicity::Marginal;
        let mut out_of_bracket = false;
        for _ in 0..6 {
            let cn = point + offset;
            if cn > hi {
                out_of_bracket = true;
                break;
            }
            let (xs, class) = settled_period(sys, cn, &x, 8 * doubled, opts)?;
            if class == Periodicity::Periodic(doubled) {
                found = Some((cn, xs));
                break;
            }
            last_class = class;
            offset *= 2.0;
        }
        let Some((cn, xs)) = found else {
            if out_of_bracket {
                return Ok(());
            }
            return Err(Error::Analysis(format!(
                "expected period {doubled} after the doubling at {point}, found {last_class}"
            )));
        };
        let (xn, _) = sys
            .periodic_orbit(cn, doubled, &xs)
            .ok_or_else(|| lost(cn))?;
        period = doubled;
        x = xn;
        c = cn;
        step = offset / 16.0;
    }
    Ok(())
}

/// `x ↦ r x (1 - x)` with control `r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticMap;

impl PeriodDoublingSystem for LogisticMap {
    type State = f64;

    fn initial(&self) -> f64 {
        0.5
    }

    fn iterate(&self, r: f64, x: &f64, n: usize) -> Result<f64> {
        let mut x = *x;
        for _ in 0..n {
            x = r * x * (1.0 - x);
        }
        Ok(x)
    }

    fn observable(&self, x: &f64) -> f64 {
        *x
    }

    fn periodic_orbit(&self, r: f64, period: usize, guess: &f64) -> Option<(f64, f64)> {
        let mut x = *guess;
        for _ in 0..60 {
            let mut y = x;
            let mut slope = 1.0;
            for _ in 0..period {
                slope *= r * (1.0 - 2.0 * y);
                y = r * y * (1.0 - y);
            }
            let g = y - x;
            if g.abs() < 1e-14 {
                return (0.0..=1.0).contains(&x).then_some((x, slope));
            }
            let dg = slope - 1.0;
            if dg == 0.0 {
                return None;
            }
            x -= g / dg;
            if !x.is_finite() {
                return None;
            }
        }
        None
    }
}

/// The stroboscopic map of the mean-field flow, with one model constant as
/// the control.
#[derive(Debug, Clone, Copy)]
pub struct MacrospinCascade {
    pub params: ModelParams,
    pub control: super::ControlParam,
    pub spec: IntegratorSpec,
    pub initial: SphericalAngle,
}

fn tangent_basis(x: &Vector3<f64>) -> Matrix3x2<f64> {
    let helper = if x.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = x.cross(&helper).normalize();
    let v = x.cross(&u).normalize();
    Matrix3x2::from_columns(&[u, v])
}

fn critical_multiplier(m: &Matrix2<f64>) -> f64 {
    let half = 0.5 * m.trace();
    let disc = half * half - m.determinant();
    if disc >= 0.0 {
        half - disc.sqrt()
    } else {
        half
    }
}

impl MacrospinCascade {
    fn flow(&self, c: f64) -> Result<ClassicalFlow> {
        ClassicalFlow::new(self.control.apply(&self.params, c), self.spec)
    }
}

impl PeriodDoublingSystem for MacrospinCascade {
    type State = MacrospinState;

    fn initial(&self) -> MacrospinState {
        angle_to_vector(self.initial)
    }

    /// Each period ends with a projection back onto the unit sphere, so the
    /// integrator's slow norm drift cannot smear out long periodic orbits.
    fn iterate(&self, c: f64, x: &MacrospinState, n: usize) -> Result<MacrospinState> {
        let mut flow = self.flow(c)?;
        let mut m = x.to_array();
        for _ in 0..n {
            flow.advance_periods(&mut m, 1, 0.0)?;
            let r = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            m = m.map(|v| v / r);
        }
        Ok(MacrospinState::from_array(m))
    }

    fn observable(&self, x: &MacrospinState) -> f64 {
        x.x
    }

    /// Newton iteration restricted to the tangent plane of the sphere: the
    /// flow conserves `|m|`, so the radial direction is neutral and would make
    /// the full 3x3 system singular.
    fn periodic_orbit(
        &self,
        c: f64,
        period: usize,
        guess: &MacrospinState,
    ) -> Option<(MacrospinState, f64)> {
        let mut flow = self.flow(c).ok()?;
        let mut x = Vector3::from(guess.to_array()).normalize();
        for _ in 0..40 {
            let mut y = [x.x, x.y, x.z];
            let jac = flow.advance_with_jacobian(&mut y, period).ok()?;
            let m = Matrix3::from_fn(|i, j| jac[i][j]);
            let b = tangent_basis(&x);
            // The integrator drifts slightly off the sphere; only the tangential
            // part of the residual is meaningful.
            let r = b.transpose() * (Vector3::from(y) - x);
            let reduced = b.transpose() * m * b;
            if r.amax() < 1e-11 {
                return Some((
                    MacrospinState::new(x.x, x.y, x.z),
                    critical_multiplier(&reduced),
                ));
            }
            let d: Vector2<f64> = (reduced - Matrix2::identity()).lu().solve(&(-r))?;
            x = (x + b * d).normalize();
            if !x.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        None
    }
}

/// Doubling cascade of the stroboscopic macrospin map along `kappa_bracket`
/// at drive amplitude `gamma`, started from `init`.
pub fn feigenbaum_estimate(
    p_base: &ModelParams,
    gamma: f64,
    kappa_bracket: [f64; 2],
    max_doublings: usize,
    init: SphericalAngle,
    spec: IntegratorSpec,
    opts: &FeigenbaumOptions,
) -> Result<FeigenbaumEstimate> {
    let params = p_base.with_gamma(gamma);
    params.validate()?;
    let sys = MacrospinCascade {
        params,
        control: super::ControlParam::Kappa,
        spec,
        initial: init,
    };
    locate_doublings(&sys, kappa_bracket, max_doublings, opts)
}
