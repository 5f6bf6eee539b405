//! Lyapunov spectrum of the mean-field flow by tangent-space propagation
//! with periodic QR re-orthonormalization.

use std::io::Write;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::classical::{jacobian_with_drive, rhs_with_drive};
use crate::error::{Error, Result};
use crate::model::{MacrospinState, ModelParams};
use crate::rk::{DriveTable, IntegratorSpec, RkStepper};
use crate::sweep;

/// Below this magnitude λ_max is reported as marginal.
pub const MARGINAL_MLE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    /// Total integration time, transient included.
    pub t_total: f64,
    /// Leading stretch excluded from the averages.
    pub transient: f64,
    /// Time between re-orthonormalizations; a whole number of steps.
    pub renorm_interval: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            t_total: 2000.0,
            transient: 200.0,
            renorm_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Sorted descending, per unit time.
    pub exponents: [f64; 3],
    pub t_total: f64,
    pub renorm_interval: f64,
    /// Running estimate of λ_max after each renormalization past the transient.
    pub converged_series: Vec<f64>,
}

impl LyapunovResult {
    pub fn max_exponent(&self) -> f64 {
        self.exponents[0]
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    pub fn classification(&self) -> MleClass {
        MleClass::of(self.max_exponent())
    }

    /// True when the running λ_max estimate never rose above `bound`.
    pub fn bounded_above_by(&self, bound: f64) -> bool {
        self.converged_series.iter().all(|&v| v <= bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MleClass {
    Chaotic,
    /// `|λ_max| < MARGINAL_MLE`: the marginal/stable boundary.
    Marginal,
    Stable,
}

impl MleClass {
    pub fn of(mle: f64) -> Self {
        if mle.abs() < MARGINAL_MLE {
            Self::Marginal
        } else if mle > 0.0 {
            Self::Chaotic
        } else {
            Self::Stable
        }
    }
}

/// Positive-diagonal QR of the tangent frame. Returns `Q` and `diag(R)`.
fn qr_positive(frame: &Matrix3<f64>) -> (Matrix3<f64>, [f64; 3]) {
    let qr = frame.qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = [0.0; 3];
    for k in 0..3 {
        let d = r[(k, k)];
        if d < 0.0 {
            q.column_mut(k).neg_mut();
        }
        diag[k] = d.abs();
    }
    (q, diag)
}

pub fn lyapunov_spectrum(
    m0: MacrospinState,
    p: &ModelParams,
    spec: IntegratorSpec,
    opts: LyapunovOptions,
) -> Result<LyapunovResult> {
    p.validate()?;
    if !m0.is_finite() {
        return Err(Error::InvalidParams("initial state must be finite".into()));
    }
    let npp = spec.steps_per_period()?;
    let period = p.period();
    let h = period / npp as f64;
    let renorm_steps = (opts.renorm_interval / h).round() as usize;
    if renorm_steps == 0
        || ((renorm_steps as f64 * h) - opts.renorm_interval).abs()
            > 1e-9 * opts.renorm_interval.max(1.0)
    {
        return Err(Error::InvalidIntegrator(format!(
            "renorm_interval {} is not a whole number of steps of size {h}",
            opts.renorm_interval
        )));
    }
    if !(opts.t_total > opts.transient && opts.transient >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need t_total > transient >= 0, got t_total {} transient {}",
            opts.t_total, opts.transient
        )));
    }
    let total_steps = (opts.t_total / h).round() as usize;
    let transient_steps = (opts.transient / h).round() as usize;

    let table = DriveTable::new(npp);
    let mut stepper = RkStepper::<f64>::new(spec.order, 12);
    // Layout: m (3), then the frame columns v0, v1, v2 (3 each).
    let mut y = [0.0f64; 12];
    y[..3].copy_from_slice(&m0.to_array());
    y[3] = 1.0;
    y[7] = 1.0;
    y[11] = 1.0;

    let mut sums = [0.0f64; 3];
    let mut elapsed_steps = 0usize;
    let mut series = Vec::new();
    let pp = *p;

    let mut n = 0usize;
    while n < total_steps {
        let before = [y[0], y[1], y[2]];
        stepper.step(h, 2 * (n % npp), &mut y, |k, s, ds| {
            let m = [s[0], s[1], s[2]];
            let d = table.get(k);
            let f = rhs_with_drive(&m, d, &pp);
            let jac = jacobian_with_drive(&m, d, &pp);
            ds[..3].copy_from_slice(&f);
            for c in 0..3 {
                let v = &s[3 + 3 * c..6 + 3 * c];
                for r in 0..3 {
                    ds[3 + 3 * c + r] = jac[r][0] * v[0] + jac[r][1] * v[1] + jac[r][2] * v[2];
                }
            }
        });
        n += 1;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                time: n as f64 * h,
                last_valid: MacrospinState::from_array(before),
            });
        }
        if n % renorm_steps == 0 {
            let frame = Matrix3::from_column_slice(&y[3..12]);
            let (q, diag) = qr_positive(&frame);
            y[3..12].copy_from_slice(q.as_slice());
            if n > transient_steps {
                for k in 0..3 {
                    sums[k] += diag[k].ln();
                }
                elapsed_steps += renorm_steps;
                let t = elapsed_steps as f64 * h;
                let running = sums.iter().fold(f64::NEG_INFINITY, |a, &s| a.max(s / t));
                series.push(running);
            }
        }
    }
    if elapsed_steps == 0 {
        return Err(Error::InvalidParams(
            "no renormalization happened after the transient".into(),
        ));
    }
    let t = elapsed_steps as f64 * h;
    let mut exponents = sums.map(|s| s / t);
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovResult {
        exponents,
        t_total: opts.t_total,
        renorm_interval: opts.renorm_interval,
        converged_series: series,
    })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub gamma: f64,
    pub kappa: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlePhaseDiagram {
    pub gamma_axis: Vec<f64>,
    pub kappa_axis: Vec<f64>,
    /// `mle[i][j]` belongs to `(gamma_axis[i], kappa_axis[j])`; NaN marks a failed cell.
    pub mle: Vec<Vec<f64>>,
    pub initial_state: MacrospinState,
    pub failures: Vec<CellFailure>,
}

pub fn mle_phase_diagram(
    gamma_axis: &[f64],
    kappa_axis: &[f64],
    p_base: &ModelParams,
    m0: MacrospinState,
    spec: IntegratorSpec,
    opts: LyapunovOptions,
) -> Result<MlePhaseDiagram> {
    if gamma_axis.is_empty() || kappa_axis.is_empty() {
        return Err(Error::InvalidParams(
            "phase-diagram axes must be non-empty".into(),
        ));
    }
    spec.steps_per_period()?;
    let nk = kappa_axis.len();
    let cells = sweep::par_map_indexed(gamma_axis.len() * nk, |idx| {
        let gamma = gamma_axis[idx / nk];
        let kappa = kappa_axis[idx % nk];
        let p = p_base.with_gamma(gamma).with_kappa(kappa);
        lyapunov_spectrum(m0, &p, spec, opts).map(|r| r.max_exponent())
    });
    let mut mle = vec![vec![f64::NAN; nk]; gamma_axis.len()];
    let mut failures = Vec::new();
    for (idx, cell) in cells.into_iter().enumerate() {
        let (i, j) = (idx / nk, idx % nk);
        match cell {
            Ok(v) => mle[i][j] = v,
            Err(e) => failures.push(CellFailure {
                gamma: gamma_axis[i],
                kappa: kappa_axis[j],
                message: e.to_string(),
            }),
        }
    }
    Ok(MlePhaseDiagram {
        gamma_axis: gamma_axis.to_vec(),
        kappa_axis: kappa_axis.to_vec(),
        mle,
        initial_state: m0,
        failures,
    })
}

impl MlePhaseDiagram {
    /// Long-format CSV: `gamma,kappa,mle`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma,kappa,mle")?;
        for (i, g) in self.gamma_axis.iter().enumerate() {
            for (j, k) in self.kappa_axis.iter().enumerate() {
                writeln!(w, "{g},{k},{}", self.mle[i][j])?;
            }
        }
        Ok(())
    }

    /// Whitespace grid for plotting: first row is `kappa` followed by the
    /// κ axis, each further row is a Γ value followed by its MLE row.
    pub fn write_grid<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "kappa")?;
        for k in &self.kappa_axis {
            write!(w, " {k}")?;
        }
        writeln!(w)?;
        for (g, row) in self.gamma_axis.iter().zip(&self.mle) {
            write!(w, "{g}")?;
            for v in row {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
