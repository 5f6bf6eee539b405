//! Dynamical-regime diagnostics: stroboscopic scans, periodicity
//! classification, basins of attraction, spectra and period-doubling cascades.

mod basin;
mod feigenbaum;
mod fourier;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classical::ClassicalFlow;
use crate::error::{Error, Result};
use crate::lyapunov::MARGINAL_MLE;
use crate::model::{
    angle_to_vector, fibonacci_sphere, MacrospinState, ModelParams, SphericalAngle,
};
use crate::rk::IntegratorSpec;
use crate::sweep::par_map_indexed;

pub use basin::{basin_map, label_state, Attractor, BasinMap, BasinOptions, UNRESOLVED};
pub use feigenbaum::{
    feigenbaum_estimate, locate_doublings, FeigenbaumEstimate, FeigenbaumOptions, LogisticMap,
    MacrospinCascade, PeriodDoublingSystem,
};
pub use fourier::{fourier_spectrum, SpectrumReport, DOMINANCE_RATIO, ISOLATION_RATIO, SILENT};

/// Clustering tolerance on stroboscopic `m^x`.
pub const PERIODICITY_TOL: f64 = 1e-4;
/// Longest stroboscopic period the classifier looks for.
pub const MAX_PERIOD: usize = 256;
/// Number of lattice points used by [`InitialPolicy::global`].
pub const GLOBAL_SAMPLES: usize = 500;
/// Above this MLE a clustered sequence is still called chaotic.
pub const CHAOTIC_MLE: f64 = 0.1;
/// A sequence "clusters" when its best cyclic spread is below this fraction
/// of its full range.
pub const CLUSTER_FRACTION: f64 = 0.25;

/// Which model constant a scan varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlParam {
    Kappa,
    Gamma,
}

impl ControlParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa => "kappa",
            Self::Gamma => "gamma",
        }
    }

    pub fn apply(self, p: &ModelParams, value: f64) -> ModelParams {
        match self {
            Self::Kappa => p.with_kappa(value),
            Self::Gamma => p.with_gamma(value),
        }
    }
}

/// Initial states of a scan: one fixed angle, or a Fibonacci lattice.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPolicy {
    Fixed(SphericalAngle),
    Global(Vec<SphericalAngle>),
}

impl InitialPolicy {
    pub fn global(count: usize) -> Self {
        Self::Global(fibonacci_sphere(count))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fixed(_) => "fixed",
            Self::Global(_) => "global",
        }
    }

    pub fn angles(&self) -> Vec<SphericalAngle> {
        match self {
            Self::Fixed(a) => vec![*a],
            Self::Global(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Periods discarded before sampling.
    pub transient: usize,
    /// Stroboscopic samples kept per initial state.
    pub samples: usize,
    pub spec: IntegratorSpec,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            transient: 200,
            samples: 1000,
            spec: IntegratorSpec::rk4(1e-3),
        }
    }
}

/// One (control value, initial state) run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCell {
    pub control_index: usize,
    pub initial_id: usize,
    pub mx: Vec<f64>,
}

/// A cell that blew up and was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFailure {
    pub control_index: usize,
    pub initial_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationScan {
    pub control: ControlParam,
    pub values: Vec<f64>,
    pub policy: InitialPolicy,
    /// Successful cells, ordered by control index then initial id.
    pub cells: Vec<ScanCell>,
    pub failures: Vec<ScanFailure>,
}

impl BifurcationScan {
    /// Every sample taken at control index `i`, across initial states.
    pub fn samples_at(&self, i: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.control_index == i)
            .flat_map(|c| c.mx.iter().copied())
            .collect()
    }

    pub fn cell(&self, i: usize, initial_id: usize) -> Option<&ScanCell> {
        self.cells
            .iter()
            .find(|c| c.control_index == i && c.initial_id == initial_id)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "control,initial_id,sample_index,mx")?;
        for c in &self.cells {
            let v = self.values[c.control_index];
            for (k, x) in c.mx.iter().enumerate() {
                writeln!(w, "{v},{},{k},{x}", c.initial_id)?;
            }
        }
        Ok(())
    }
}

fn check_axis(axis: &[f64]) -> Result<()> {
    if axis.is_empty() || axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "control axis must be non-empty and finite".into(),
        ));
    }
    let up = axis.windows(2).all(|w| w[1] > w[0]);
    let down = axis.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::InvalidParams(
            "control axis must be strictly monotone".into(),
        ));
    }
    Ok(())
}

/// Stroboscopic `m^x` after a transient, for every control value and initial
/// state. Cells that blow up are recorded in `failures` and skipped.
pub fn stroboscopic_scan(
    control: ControlParam,
    axis: &[f64],
    p_base: &ModelParams,
    policy: InitialPolicy,
    opts: ScanOptions,
) -> Result<BifurcationScan> {
    check_axis(axis)?;
    if opts.samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    opts.spec.steps_per_period()?;
    for &v in axis {
        control.apply(p_base, v).validate()?;
    }
    let angles = policy.angles();
    if angles.is_empty() {
        return Err(Error::InvalidParams("no initial states".into()));
    }
    let per = angles.len();
    let runs = par_map_indexed(axis.len() * per, |idx| {
        let (ci, ii) = (idx / per, idx % per);
        let p = control.apply(p_base, axis[ci]);
        let mut flow = ClassicalFlow::new(p, opts.spec)?;
        let s =
            flow.stroboscopic_samples(angle_to_vector(angles[ii]), opts.transient, opts.samples)?;
        Ok::<_, Error>(s.into_iter().map(|m| m.x).collect::<Vec<_>>())
    });
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (idx, r) in runs.into_iter().enumerate() {
        let (control_index, initial_id) = (idx / per, idx % per);
        match r {
            Ok(mx) => cells.push(ScanCell {
                control_index,
                initial_id,
                mx,
            }),
            Err(e) => failures.push(ScanFailure {
                control_index,
                initial_id,
                reason: e.to_string(),
            }),
        }
    }
    Ok(BifurcationScan {
        control,
        values: axis.to_vec(),
        policy,
        cells,
        failures,
    })
}

/// Sorted representatives of `values` after merging points closer than `tol`.
pub fn distinct_values(values: &[f64], tol: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        match out.last() {
            Some(&last) if x - last < tol => {}
            _ => out.push(x),
        }
    }
    out
}

/// True when every element of `subset` lies within `tol` of some element of `superset`.
pub fn covered_by(subset: &[f64], superset: &[f64], tol: f64) -> bool {
    let mut sup: Vec<f64> = superset.to_vec();
    sup.sort_by(f64::total_cmp);
    subset.iter().all(|&x| {
        let i = sup.partition_point(|&s| s < x);
        let left = i.checked_sub(1).map(|j| x - sup[j]);
        let right = sup.get(i).map(|s| s - x);
        left.into_iter().chain(right).any(|d| d <= tol)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Periodicity {
    Periodic(usize),
    Quasiperiodic,
    Chaotic,
    /// Neither periodic within tolerance nor clearly chaotic.
    Marginal,
}

impl std::fmt::Display for Periodicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Periodic(p) => write!(f, "periodic({p})"),
            Self::Quasiperiodic => f.write_str("quasiperiodic"),
            Self::Chaotic => f.write_str("chaotic"),
            Self::Marginal => f.write_str("marginal"),
        }
    }
}

/// Classification together with the signals it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub class: Periodicity,
    /// Period with the smallest cyclic spread.
    pub best_period: usize,
    /// `max_i |v[i] - v[i - best_period]|`.
    pub spread: f64,
    /// `max(v) - min(v)`.
    pub range: f64,
    pub mle: f64,
}

fn cyclic_spread(v: &[f64], p: usize) -> f64 {
    v[p..]
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Periodic(p) when the sequence repeats with period `p` to within `tol`
/// (smallest such `p` wins). Otherwise the MLE decides: at most
/// [`MARGINAL_MLE`] gives `Marginal`; clustered with a small positive MLE
/// gives `Quasiperiodic`; anything else is `Chaotic`.
pub fn classify_periodicity(values: &[f64], mle: f64, tol: f64) -> Result<PeriodicityReport> {
    if values.len() < 100 {
        return Err(Error::InvalidParams(format!(
            "need at least 100 stroboscopic samples, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidParams(
            "samples must be finite and tol positive".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let max_p = MAX_PERIOD.min(values.len() / 2);
    let spreads: Vec<f64> = (1..=max_p).map(|p| cyclic_spread(values, p)).collect();
    if let Some(i) = spreads.iter().position(|&s| s < tol) {
        return Ok(PeriodicityReport {
            class: Periodicity::Periodic(i + 1),
            best_period: i + 1,
            spread: spreads[i],
            range,
            mle,
        });
    }
    // Multiples of a clustered period cluster too; report the smallest.
    let best = match spreads.iter().position(|&s| s < CLUSTER_FRACTION * range) {
        Some(i) => (i + 1, spreads[i]),
        None => spreads
            .iter()
            .enumerate()
            .fold(
                (1, f64::INFINITY),
                |b, (i, &s)| if s < b.1 { (i + 1, s) } else { b },
            ),
    };
    let clustered = best.1 < CLUSTER_FRACTION * range;
    let class = if !(mle > MARGINAL_MLE) {
        Periodicity::Marginal
    } else if clustered && mle < CHAOTIC_MLE {
        Periodicity::Quasiperiodic
    } else {
        Periodicity::Chaotic
    };
    Ok(PeriodicityReport {
        class,
        best_period: best.0,
        spread: best.1,
        range,
        mle,
    })
}

/// Stroboscopic `m^x` of one trajectory (convenience for single points).
pub fn stroboscopic_mx(
    m0: MacrospinState,
    p: &ModelParams,
    spec: IntegratorSpec,
    transient: usize,
    samples: usize,
) -> Result<Vec<f64>> {
    let mut flow = ClassicalFlow::new(*p, spec)?;
    Ok(flow
        .stroboscopic_samples(m0, transient, samples)?
        .into_iter()
        .map(|m| m.x)
        .collect())
}
