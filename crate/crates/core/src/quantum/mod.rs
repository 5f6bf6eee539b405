//! Finite-N Lindblad evolution restricted to the maximal-spin Dicke sector.
//!
//! Dicke states are indexed by `r = M + N/2 ∈ 0..=N`, the number of spins
//! pointing up. The collective operators act as
//!
//! ```text
//! S^x |r> = f[r] |r-1> + f[r+1] |r+1>
//! S^y |r> = i f[r] |r-1> - i f[r+1] |r+1>
//! S^z |r> = (2r - N)/N |r>
//! ```
//!
//! with `f[r] = sqrt(r (N - r + 1)) / N`.

mod full_space;

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use full_space::{full_space_oracle, full_space_oracle_from, FullSpaceModel, FullSpaceRun};

use crate::classical::{integrate, SamplingPolicy};
use crate::error::{Error, Result};
use crate::model::{angle_to_vector, MacrospinState, ModelParams, SphericalAngle};
use crate::rk::{DriveSample, DriveTable, IntegratorSpec, RkStepper};
use crate::sweep;

/// Trace drift that triggers the single automatic step halving.
pub const TRACE_RETRY: f64 = 1e-8;
/// Trace drift that aborts the evolution.
pub const TRACE_ABORT: f64 = 1e-6;

/// Ladder factors `f[r]` for `r = 0..=N`; `f[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderCoefficients {
    n: usize,
    /// Padded with two trailing zeros so `f[r + 2]` is always addressable.
    f: Vec<f64>,
}

impl LadderCoefficients {
    pub fn n_spins(&self) -> usize {
        self.n
    }

    /// `f[r]`, zero outside `0..=N`.
    #[inline]
    pub fn get(&self, r: usize) -> f64 {
        self.f.get(r).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.f[..=self.n]
    }
}

pub fn ladder_coefficients(n: usize) -> Result<LadderCoefficients> {
    if n == 0 {
        return Err(Error::InvalidParams("n_spins must be at least 1".into()));
    }
    let nf = n as f64;
    let mut f: Vec<f64> = (0..=n)
        .map(|r| ((r * (n - r + 1)) as f64).sqrt() / nf)
        .collect();
    f.extend([0.0, 0.0]);
    Ok(LadderCoefficients { n, f })
}

/// `(N+1)×(N+1)` density matrix in the Dicke basis, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeDensityMatrix {
    n_spins: usize,
    rho: Vec<Complex64>,
}

impl DickeDensityMatrix {
    pub fn zeros(n_spins: usize) -> Self {
        let d = n_spins + 1;
        Self {
            n_spins,
            rho: vec![Complex64::new(0.0, 0.0); d * d],
        }
    }

    /// Wraps row-major entries; fails on a size mismatch.
    pub fn from_entries(n_spins: usize, rho: Vec<Complex64>) -> Result<Self> {
        let d = n_spins + 1;
        if rho.len() != d * d {
            return Err(Error::InvalidParams(format!(
                "expected {} entries for N = {n_spins}, got {}",
                d * d,
                rho.len()
            )));
        }
        Ok(Self { n_spins, rho })
    }

    /// `|ψ><ψ|` for amplitudes over `r = 0..=N`.
    pub fn from_pure(n_spins: usize, psi: &[Complex64]) -> Result<Self> {
        let d = n_spins + 1;
        if psi.len() != d {
            return Err(Error::InvalidParams(format!(
                "expected {d} amplitudes, got {}",
                psi.len()
            )));
        }
        let mut out = Self::zeros(n_spins);
        for r in 0..d {
            for c in 0..d {
                out.rho[r * d + c] = psi[r] * psi[c].conj();
            }
        }
        Ok(out)
    }

    /// Identity over the Dicke sector, normalized.
    pub fn maximally_mixed(n_spins: usize) -> Self {
        let d = n_spins + 1;
        let mut out = Self::zeros(n_spins);
        for r in 0..d {
            out.rho[r * d + r] = Complex64::new(1.0 / d as f64, 0.0);
        }
        out
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.rho[r * self.dim() + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        let d = self.dim();
        self.rho[r * d + c] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|r| self.get(r, r)).sum()
    }

    /// `Tr ρ² = Σ |ρ_rc|²` (exact for Hermitian ρ).
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// `(⟨S^x⟩, ⟨S^y⟩, ⟨S^z⟩)`.
    pub fn polarization(&self) -> MacrospinState {
        let f = ladder_coefficients(self.n_spins).expect("n_spins >= 1");
        let d = self.dim();
        let n = self.n_spins as f64;
        let mut off = Complex64::new(0.0, 0.0);
        let mut z = 0.0;
        for r in 0..d {
            if r + 1 < d {
                off += self.get(r, r + 1) * f.get(r + 1);
            }
            z += (2.0 * r as f64 - n) / n * self.get(r, r).re;
        }
        MacrospinState::new(2.0 * off.re, 2.0 * off.im, z)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |r, c| 0.5 * (self.get(r, c) + self.get(c, r).conj()));
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Split, zero-padded layout used by the propagator: `[Re | Im]`, each
    /// a `(d + 2·PAD)²` plane with `PAD` zero rows and columns on every side.
    fn to_padded(&self) -> Vec<f64> {
        let d = self.dim();
        let plane = padded_stride(d) * padded_stride(d);
        let mut y = vec![0.0; 2 * plane];
        for r in 0..d {
            for c in 0..d {
                let z = self.get(r, c);
                y[padded_index(d, r, c)] = z.re;
                y[plane + padded_index(d, r, c)] = z.im;
            }
        }
        y
    }

    fn from_padded(n_spins: usize, y: &[f64]) -> Self {
        let d = n_spins + 1;
        let plane = y.len() / 2;
        let mut rho = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let i = padded_index(d, r, c);
                rho.push(Complex64::new(y[i], y[plane + i]));
            }
        }
        Self { n_spins, rho }
    }

    /// `|ρ|` on the `(2M/N, 2M'/N)` grid: `two_m_over_n_row,two_m_over_n_col,abs_rho`.
    pub fn write_snapshot_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.n_spins as f64;
        let d = self.dim();
        writeln!(w, "two_m_over_n_row,two_m_over_n_col,abs_rho")?;
        for r in 0..d {
            for c in 0..d {
                let a = (2.0 * r as f64 - n) / n;
                let b = (2.0 * c as f64 - n) / n;
                writeln!(w, "{a},{b},{}", self.get(r, c).norm())?;
            }
        }
        Ok(())
    }
}

const PAD: usize = 2;

#[inline]
fn padded_stride(d: usize) -> usize {
    d + 2 * PAD
}

#[inline]
fn padded_index(d: usize, r: usize, c: usize) -> usize {
    (r + PAD) * padded_stride(d) + c + PAD
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Coherent-state amplitudes over `r = 0..=N` for all spins along `a`.
pub fn coherent_amplitudes(n: usize, a: SphericalAngle) -> Vec<Complex64> {
    let lf = ln_factorials(n);
    let (s, c) = (a.theta / 2.0).sin_cos();
    let pow_ln = |base: f64, e: usize| if e == 0 { 0.0 } else { e as f64 * base.ln() };
    let amps: Vec<Complex64> = (0..=n)
        .map(|r| {
            let down = n - r;
            if (c == 0.0 && r > 0) || (s == 0.0 && down > 0) {
                return Complex64::new(0.0, 0.0);
            }
            let ln_mag = pow_ln(c, r) + pow_ln(s, down) + 0.5 * (lf[n] - lf[r] - lf[down]);
            Complex64::from_polar(ln_mag.exp(), down as f64 * a.phi)
        })
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.into_iter().map(|z| z / norm).collect()
}

/// Pure product state with every spin pointing along `a`.
pub fn initial_product_state(n: usize, a: SphericalAngle) -> Result<DickeDensityMatrix> {
    if n == 0 {
        return Err(Error::InvalidParams("n_spins must be at least 1".into()));
    }
    DickeDensityMatrix::from_pure(n, &coherent_amplitudes(n, a))
}

/// Banded generator `K = -iH - κN diag(f²)` plus the jump weights, so that
/// `dρ/dt = Kρ + ρK† + g gᵀ ∘ shift(ρ)`.
struct Generator {
    d: usize,
    drive_amp: f64,
    f: Vec<f64>,
    /// `g[r] = sqrt(2κN) f[r+1]`.
    g: Vec<f64>,
    /// Real and imaginary parts of `K[r][r+δ]` for `δ = -2..=2`.
    band_re: [Vec<f64>; 5],
    band_im: [Vec<f64>; 5],
}

impl Generator {
    fn new(p: &ModelParams, lad: &LadderCoefficients) -> Self {
        let n = lad.n;
        let d = n + 1;
        let nf = n as f64;
        let f = lad.f.clone();
        let j = p.j;
        let pair = nf * (j.x - j.y);
        let jump = (2.0 * p.kappa * nf).sqrt();
        let mut band_re: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; d]);
        let mut band_im: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; d]);
        for r in 0..d {
            let two_m = 2.0 * r as f64 - nf;
            let hdiag =
                nf * (j.x + j.y) * (f[r] * f[r] + f[r + 1] * f[r + 1]) + j.z * two_m * two_m / nf;
            band_re[2][r] = -p.kappa * nf * f[r] * f[r];
            band_im[2][r] = -hdiag;
            band_im[4][r] = -pair * f[r + 1] * f[r + 2];
            if r >= 2 {
                band_im[0][r] = -pair * f[r - 1] * f[r];
            }
        }
        Self {
            d,
            drive_amp: nf * p.gamma / 2.0,
            g: (0..d).map(|r| jump * f[r + 1]).collect(),
            f,
            band_re,
            band_im,
        }
    }

    fn set_drive(&mut self, drive: DriveSample) {
        let a = self.drive_amp;
        let (s, cp) = (drive.sin, drive.one_minus_cos);
        for r in 0..self.d {
            self.band_re[3][r] = a * cp * self.f[r + 1];
            self.band_im[3][r] = -a * s * self.f[r + 1];
            self.band_re[1][r] = -a * cp * self.f[r];
            self.band_im[1][r] = -a * s * self.f[r];
        }
    }

    /// Hamiltonian for the current drive, row-major (recovered from `K`).
    fn hamiltonian(&self) -> Vec<Complex64> {
        let d = self.d;
        let mut h = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for (b, delta) in (-2isize..=2).enumerate() {
                let c = r as isize + delta;
                if c < 0 || c >= d as isize {
                    continue;
                }
                // K = -iH + real diagonal, so H = i (K - Re K δ_rc).
                let re = if delta == 0 { 0.0 } else { self.band_re[b][r] };
                let k = Complex64::new(re, self.band_im[b][r]);
                h[r * d + c as usize] = Complex64::i() * k;
            }
        }
        h
    }

    /// Writes `dρ/dt` in the padded split layout. With `hermitian` only the
    /// upper triangle is computed and the rest mirrored. Padding entries of
    /// `dy` are never written.
    fn apply(&self, y: &[f64], dy: &mut [f64], hermitian: bool) {
        let d = self.d;
        let s = padded_stride(d);
        let plane = s * s;
        let (yr, yi) = y.split_at(plane);
        let (dr, di) = dy.split_at_mut(plane);
        for r in 0..d {
            let c0 = if hermitian { r } else { 0 };
            let len = d - c0;
            // Rows r-2..=r+2 starting at column c0, and row r shifted by -2..=2.
            let rows_re: [&[f64]; 5] =
                std::array::from_fn(|b| &yr[(r + b) * s + c0 + PAD..][..len]);
            let rows_im: [&[f64]; 5] =
                std::array::from_fn(|b| &yi[(r + b) * s + c0 + PAD..][..len]);
            let shift_re: [&[f64]; 5] =
                std::array::from_fn(|b| &yr[(r + PAD) * s + c0 + b..][..len]);
            let shift_im: [&[f64]; 5] =
                std::array::from_fn(|b| &yi[(r + PAD) * s + c0 + b..][..len]);
            let k_re: [&[f64]; 5] = std::array::from_fn(|b| &self.band_re[b][c0..d]);
            let k_im: [&[f64]; 5] = std::array::from_fn(|b| &self.band_im[b][c0..d]);
            let a_re: [f64; 5] = std::array::from_fn(|b| self.band_re[b][r]);
            let a_im: [f64; 5] = std::array::from_fn(|b| self.band_im[b][r]);
            let jump_re = &yr[(r + PAD + 1) * s + c0 + PAD + 1..][..len];
            let jump_im = &yi[(r + PAD + 1) * s + c0 + PAD + 1..][..len];
            let gc = &self.g[c0..d];
            let gr = self.g[r];
            let out = (r + PAD) * s + c0 + PAD;
            fused_row(
                &mut dr[out..out + len],
                &mut di[out..out + len],
                RowInputs {
                    rows_re,
                    rows_im,
                    shift_re,
                    shift_im,
                    k_re,
                    k_im,
                    a_re,
                    a_im,
                    jump_re,
                    jump_im,
                    gc,
                    gr,
                },
            );
        }
        if hermitian {
            for r in 1..d {
                for c in 0..r {
                    let lower = padded_index(d, r, c);
                    let upper = padded_index(d, c, r);
                    dr[lower] = dr[upper];
                    di[lower] = -di[upper];
                }
            }
        }
    }
}

struct RowInputs<'a> {
    rows_re: [&'a [f64]; 5],
    rows_im: [&'a [f64]; 5],
    shift_re: [&'a [f64]; 5],
    shift_im: [&'a [f64]; 5],
    k_re: [&'a [f64]; 5],
    k_im: [&'a [f64]; 5],
    a_re: [f64; 5],
    a_im: [f64; 5],
    jump_re: &'a [f64],
    jump_im: &'a [f64],
    gc: &'a [f64],
    gr: f64,
}

/// One output row of `Kρ + ρK† + jump`. Kept out of line so the output
/// slices are known not to alias the inputs, which lets the loop vectorize.
#[inline(never)]
fn fused_row(o_re: &mut [f64], o_im: &mut [f64], x: RowInputs<'_>) {
    let len = o_re.len();
    let o_im = &mut o_im[..len];
    let [r0, r1, r2, r3, r4] = x.rows_re.map(|v| &v[..len]);
    let [q0, q1, q2, q3, q4] = x.rows_im.map(|v| &v[..len]);
    let [s0, s1, s2, s3, s4] = x.shift_re.map(|v| &v[..len]);
    let [t0, t1, t2, t3, t4] = x.shift_im.map(|v| &v[..len]);
    let [k0, k1, k2, k3, k4] = x.k_re.map(|v| &v[..len]);
    let [l0, l1, l2, l3, l4] = x.k_im.map(|v| &v[..len]);
    let (jr, ji, gc) = (&x.jump_re[..len], &x.jump_im[..len], &x.gc[..len]);
    let (ar, ai, gr) = (x.a_re, x.a_im, x.gr);
    for i in 0..len {
        let w = gr * gc[i];
        o_re[i] = w * jr[i]
            + (ar[0] * r0[i] - ai[0] * q0[i])
            + (ar[1] * r1[i] - ai[1] * q1[i])
            + (ar[2] * r2[i] - ai[2] * q2[i])
            + (ar[3] * r3[i] - ai[3] * q3[i])
            + (ar[4] * r4[i] - ai[4] * q4[i])
            + (s0[i] * k0[i] + t0[i] * l0[i])
            + (s1[i] * k1[i] + t1[i] * l1[i])
            + (s2[i] * k2[i] + t2[i] * l2[i])
            + (s3[i] * k3[i] + t3[i] * l3[i])
            + (s4[i] * k4[i] + t4[i] * l4[i]);
        o_im[i] = w * ji[i]
            + (ar[0] * q0[i] + ai[0] * r0[i])
            + (ar[1] * q1[i] + ai[1] * r1[i])
            + (ar[2] * q2[i] + ai[2] * r2[i])
            + (ar[3] * q3[i] + ai[3] * r3[i])
            + (ar[4] * q4[i] + ai[4] * r4[i])
            + (t0[i] * k0[i] - s0[i] * l0[i])
            + (t1[i] * k1[i] - s1[i] * l1[i])
            + (t2[i] * k2[i] - s2[i] * l2[i])
            + (t3[i] * k3[i] - s3[i] * l3[i])
            + (t4[i] * k4[i] - s4[i] * l4[i]);
    }
}

/// Dicke-sector Hamiltonian at time `t`, row-major `(N+1)×(N+1)`.
pub fn dicke_hamiltonian(t: f64, p: &ModelParams) -> Result<Vec<Complex64>> {
    let lad = ladder_coefficients(p.n_spins)?;
    let mut gen = Generator::new(p, &lad);
    gen.set_drive(DriveSample::at(p.omega, t));
    Ok(gen.hamiltonian())
}

/// `dρ/dt` of the Dicke-sector Lindblad equation. `p.n_spins` is ignored in
/// favour of `f`.
pub fn lindblad_rhs(
    t: f64,
    rho: &DickeDensityMatrix,
    p: &ModelParams,
    f: &LadderCoefficients,
) -> Result<DickeDensityMatrix> {
    if rho.n_spins != f.n {
        return Err(Error::InvalidParams(format!(
            "density matrix has N = {}, ladder has N = {}",
            rho.n_spins, f.n
        )));
    }
    let mut gen = Generator::new(p, f);
    gen.set_drive(DriveSample::at(p.omega, t));
    let y = rho.to_padded();
    let mut dy = vec![0.0; y.len()];
    gen.apply(&y, &mut dy, false);
    Ok(DickeDensityMatrix::from_padded(rho.n_spins, &dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumObservables {
    pub time: f64,
    pub m: MacrospinState,
    pub purity: f64,
    /// `|Tr ρ - 1|`.
    pub trace_err: f64,
    /// `max |ρ - ρ†|`.
    pub hermiticity_err: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub rho: DickeDensityMatrix,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct QuantumOptions {
    pub record: SamplingPolicy,
    /// Times at which to keep the full density matrix; rounded to the step grid.
    pub snapshot_times: Vec<f64>,
    /// Propagate only the upper triangle and mirror it.
    pub exploit_hermiticity: bool,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        Self {
            record: SamplingPolicy::Dense { every: 100 },
            snapshot_times: Vec::new(),
            exploit_hermiticity: true,
        }
    }
}

impl QuantumOptions {
    pub fn dense(every: usize) -> Self {
        Self {
            record: SamplingPolicy::Dense { every },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub observables: Vec<QuantumObservables>,
    pub snapshots: Vec<Snapshot>,
    /// Step actually used, in periods (halved once on trace drift).
    pub dt: f64,
    pub final_state: DickeDensityMatrix,
}

fn observe(rho: &DickeDensityMatrix, time: f64, check_hermiticity: bool) -> QuantumObservables {
    QuantumObservables {
        time,
        m: rho.polarization(),
        purity: rho.purity(),
        trace_err: (rho.trace() - 1.0).norm(),
        hermiticity_err: if check_hermiticity {
            rho.hermiticity_error()
        } else {
            0.0
        },
    }
}

enum Attempt {
    Done(QuantumRun),
    Drift { time: f64, drift: f64 },
}

fn attempt(
    rho0: &DickeDensityMatrix,
    p: &ModelParams,
    spec: IntegratorSpec,
    t_end: f64,
    opts: &QuantumOptions,
    retry_threshold: f64,
) -> Result<Attempt> {
    let n = rho0.n_spins;
    let lad = ladder_coefficients(n)?;
    let mut gen = Generator::new(p, &lad);
    let npp = spec.steps_per_period()?;
    let h = p.period() / npp as f64;
    let total = (t_end / h - 1e-9).ceil() as usize;
    let table = DriveTable::new(npp);
    let d = n + 1;
    let plane = padded_stride(d) * padded_stride(d);
    let hermitian = opts.exploit_hermiticity;

    let mut snap_steps: Vec<(usize, f64)> = opts
        .snapshot_times
        .iter()
        .map(|&t| ((t / h).round() as usize, t))
        .filter(|(s, _)| *s <= total)
        .collect();
    snap_steps.sort_by_key(|s| s.0);
    let mut snap_iter = snap_steps.into_iter().peekable();

    let mut y = rho0.to_padded();
    let mut stepper = RkStepper::<f64>::new(spec.order, 2 * plane);
    let mut observables = Vec::new();
    let mut snapshots = Vec::new();
    let check_herm = !hermitian;

    let mut take = |step: usize,
                    y: &[f64],
                    observables: &mut Vec<QuantumObservables>,
                    snapshots: &mut Vec<Snapshot>,
                    record: bool| {
        let snap_due = snap_iter.peek().is_some_and(|&(s, _)| s == step);
        if !record && !snap_due {
            return;
        }
        let rho = DickeDensityMatrix::from_padded(n, y);
        let t = step as f64 * h;
        if record {
            observables.push(observe(&rho, t, check_herm));
        }
        while let Some(&(s, _)) = snap_iter.peek() {
            if s != step {
                break;
            }
            snap_iter.next();
            let min_eigenvalue = rho.min_eigenvalue();
            snapshots.push(Snapshot {
                time: t,
                rho: rho.clone(),
                min_eigenvalue,
            });
        }
    };
    take(0, &y, &mut observables, &mut snapshots, true);

    for step in 1..=total {
        stepper.step(h, 2 * ((step - 1) % npp), &mut y, |k, s, ds| {
            gen.set_drive(table.get(k));
            gen.apply(s, ds, hermitian);
        });
        let strobe = step % npp == 0;
        let record = match opts.record {
            SamplingPolicy::Dense { every } => strobe || step % every == 0 || step == total,
            SamplingPolicy::Stroboscopic => strobe,
        };
        if strobe || record || step == total {
            let t = step as f64 * h;
            let tr: f64 = (0..d).map(|r| y[padded_index(d, r, r)]).sum();
            let tr_im: f64 = (0..d).map(|r| y[plane + padded_index(d, r, r)]).sum();
            let drift = ((tr - 1.0).powi(2) + tr_im * tr_im).sqrt();
            if !drift.is_finite() || !y.iter().all(|v| v.is_finite()) {
                return Ok(Attempt::Drift {
                    time: t,
                    drift: f64::INFINITY,
                });
            }
            if drift > retry_threshold {
                return Ok(Attempt::Drift { time: t, drift });
            }
        }
        take(step, &y, &mut observables, &mut snapshots, record);
    }
    Ok(Attempt::Done(QuantumRun {
        observables,
        snapshots,
        dt: spec.dt,
        final_state: DickeDensityMatrix::from_padded(n, &y),
    }))
}

/// RK propagation of the full Dicke-sector density matrix.
///
/// The trace is checked at every period boundary and recorded sample. A
/// drift above [`TRACE_RETRY`] restarts the run once with half the step;
/// after that anything above [`TRACE_ABORT`] or a non-finite entry fails.
pub fn evolve_quantum(
    rho0: &DickeDensityMatrix,
    p: &ModelParams,
    spec: IntegratorSpec,
    t_end: f64,
    opts: &QuantumOptions,
) -> Result<QuantumRun> {
    p.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if let SamplingPolicy::Dense { every: 0 } = opts.record {
        return Err(Error::InvalidParams(
            "dense sampling stride must be positive".into(),
        ));
    }
    if (rho0.trace() - 1.0).norm() > 1e-10 || !rho0.rho.iter().all(|z| z.is_finite()) {
        return Err(Error::InvalidParams(
            "initial density matrix must have unit trace".into(),
        ));
    }
    if opts.exploit_hermiticity && rho0.hermiticity_error() > 1e-10 {
        return Err(Error::InvalidParams(
            "initial density matrix is not Hermitian".into(),
        ));
    }
    match attempt(rho0, p, spec, t_end, opts, TRACE_RETRY)? {
        Attempt::Done(run) => Ok(run),
        Attempt::Drift { .. } => {
            let halved = spec.halved();
            // Halving must keep whole steps per period: 1/dt stays an integer.
            halved.steps_per_period()?;
            let mut opts = opts.clone();
            if let SamplingPolicy::Dense { every } = opts.record {
                opts.record = SamplingPolicy::Dense { every: 2 * every };
            }
            match attempt(rho0, p, halved, t_end, &opts, TRACE_ABORT)? {
                Attempt::Done(run) => Ok(run),
                Attempt::Drift { time, drift } => Err(Error::QuantumDrift {
                    time,
                    reason: format!("trace drift {drift:e} after halving dt to {}", halved.dt),
                }),
            }
        }
    }
}

/// `t,mx,my,mz,purity,trace_err`.
pub fn write_observables_csv<W: Write>(
    obs: &[QuantumObservables],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "t,mx,my,mz,purity,trace_err")?;
    for o in obs {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            o.time, o.m.x, o.m.y, o.m.z, o.purity, o.trace_err
        )?;
    }
    Ok(())
}

/// Sup-norm distance between quantum and mean-field polarization for one N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub n_spins: usize,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
}

impl ErrorSeries {
    /// Error at the recorded time closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.errors[i])
    }
}

/// `n,t,error`, one block per system size.
pub fn write_error_csv<W: Write>(series: &[ErrorSeries], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,t,error")?;
    for s in series {
        for (t, e) in s.times.iter().zip(&s.errors) {
            writeln!(w, "{},{t},{e}", s.n_spins)?;
        }
    }
    Ok(())
}

/// `ε_N(t) = max_μ |m^μ_quantum(t) - m^μ_classical(t)|` for every `N` in
/// `n_list`, sampled every `every` steps. The N values run in parallel.
pub fn quantum_classical_error(
    p: &ModelParams,
    a: SphericalAngle,
    n_list: &[usize],
    spec: IntegratorSpec,
    t_end: f64,
    every: usize,
) -> Result<Vec<ErrorSeries>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams(
            "n_list must be non-empty and increasing".into(),
        ));
    }
    let classical = integrate(
        angle_to_vector(a),
        p,
        spec,
        t_end,
        SamplingPolicy::Dense { every: 1 },
    )?;
    let per_n = sweep::par_map_indexed(n_list.len(), |i| -> Result<ErrorSeries> {
        let n = n_list[i];
        let rho0 = initial_product_state(n, a)?;
        let run = evolve_quantum(
            &rho0,
            &p.with_n_spins(n),
            spec,
            t_end,
            &QuantumOptions::dense(every),
        )?;
        let mut times = Vec::with_capacity(run.observables.len());
        let mut errors = Vec::with_capacity(run.observables.len());
        for o in &run.observables {
            let c = classical
                .state_at(o.time)
                .ok_or_else(|| Error::Analysis(format!("no classical state at t = {}", o.time)))?;
            times.push(o.time);
            errors.push(o.m.max_dist(&c));
        }
        Ok(ErrorSeries {
            n_spins: n,
            times,
            errors,
        })
    });
    per_n.into_iter().collect()
}
