//! Single-particle glide symmetry and the `SU(2) × S_N` sector bookkeeping
//! of `N` spin-1/2 particles.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family members are truncated to this many coefficients `r_n`.
pub const FAMILY_TRUNCATION: usize = 8;

pub type Matrix2 = [[Complex64; 2]; 2];

/// Two-level Hamiltonian `[[0, b(t)], [b*(t), 0]]` with
/// `b(t) = Σ_n (r_n / i) [e^{inωt} - e^{-i(n+1)ωt}]`, optionally broken by a
/// `z_bias · σ^z` term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleParticleModel {
    pub omega: f64,
    pub r: Vec<f64>,
    pub z_bias: f64,
}

impl SingleParticleModel {
    /// The driven two-level system: `r = (Γ/2)`.
    pub fn driven(gamma: f64, omega: f64) -> Self {
        Self {
            omega,
            r: vec![gamma / 2.0],
            z_bias: 0.0,
        }
    }

    pub fn family(omega: f64, r: Vec<f64>) -> Result<Self> {
        if r.len() > FAMILY_TRUNCATION || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "family needs at most {FAMILY_TRUNCATION} finite coefficients"
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParams(format!(
                "omega must be positive, got {omega}"
            )));
        }
        Ok(Self {
            omega,
            r,
            z_bias: 0.0,
        })
    }

    pub fn with_z_bias(mut self, eps: f64) -> Self {
        self.z_bias = eps;
        self
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn b(&self, t: f64) -> Complex64 {
        let i = Complex64::i();
        self.r
            .iter()
            .enumerate()
            .map(|(n, &rn)| {
                let n = n as f64;
                let e1 = Complex64::from_polar(1.0, n * self.omega * t);
                let e2 = Complex64::from_polar(1.0, -(n + 1.0) * self.omega * t);
                (e1 - e2) * rn / i
            })
            .sum()
    }

    /// `z(t) = b(t) e^{iωt/2} = Σ_n 2 r_n sin((n + 1/2) ωt)`, real and
    /// antiperiodic.
    pub fn z(&self, t: f64) -> f64 {
        self.r
            .iter()
            .enumerate()
            .map(|(n, &rn)| 2.0 * rn * ((n as f64 + 0.5) * self.omega * t).sin())
            .sum()
    }

    /// Instantaneous spectral gap.
    pub fn gap(&self, t: f64) -> f64 {
        2.0 * (self.b(t).norm_sqr() + self.z_bias * self.z_bias).sqrt()
    }
}

pub fn sp_hamiltonian(t: f64, model: &SingleParticleModel) -> Matrix2 {
    let b = model.b(t);
    let e = Complex64::new(model.z_bias, 0.0);
    [[e, b], [b.conj(), -e]]
}

/// `G(t) = [[0, e^{-iωt}], [1, 0]]`.
pub fn glide_matrix(t: f64, omega: f64) -> Matrix2 {
    let zero = Complex64::new(0.0, 0.0);
    [
        [zero, Complex64::from_polar(1.0, -omega * t)],
        [Complex64::new(1.0, 0.0), zero],
    ]
}

fn mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Frobenius norm of `[A, B]`.
pub fn commutator_norm(a: &Matrix2, b: &Matrix2) -> f64 {
    let ab = mul(a, b);
    let ba = mul(b, a);
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (ab[i][j] - ba[i][j]).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn glide_commutator_norm(t: f64, model: &SingleParticleModel) -> f64 {
    commutator_norm(&sp_hamiltonian(t, model), &glide_matrix(t, model.omega))
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
pub fn eigenvalues_2x2(h: &Matrix2) -> [f64; 2] {
    let a = h[0][0].re;
    let d = h[1][1].re;
    let mean = 0.5 * (a + d);
    let half = (0.25 * (a - d) * (a - d) + h[0][1].norm_sqr()).sqrt();
    [mean - half, mean + half]
}

const GAPLESS_SAMPLES: usize = 10_000;

/// A time in `[0, T)` where the gap closes, found by bracketing a sign
/// change of `z(t)` on a uniform grid and bisecting it.
pub fn gapless_time(model: &SingleParticleModel) -> Result<f64> {
    let period = model.period();
    let ts: Vec<f64> = (0..=GAPLESS_SAMPLES)
        .map(|k| period * k as f64 / GAPLESS_SAMPLES as f64)
        .collect();
    let mut prev = (ts[0], model.z(ts[0]));
    if prev.1 == 0.0 {
        return Ok(prev.0);
    }
    for &t in &ts[1..] {
        let zt = model.z(t);
        if zt == 0.0 {
            return Ok(t % period);
        }
        if zt.signum() != prev.1.signum() {
            let (mut lo, mut hi) = (prev.0, t);
            let mut zlo = prev.1;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let zm = model.z(mid);
                if zm == 0.0 || hi - lo < 1e-15 * period {
                    return Ok(mid);
                }
                if zm.signum() == zlo.signum() {
                    lo = mid;
                    zlo = zm;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = (t, zt);
    }
    Err(Error::Analysis(
        "z(t) shows no sign change over one period; the model is not in the glide-symmetric family"
            .into(),
    ))
}

/// One `SU(2) × S_N` sector: spin `J`, diagram `(N/2+J, N/2-J)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YoungSector {
    /// `2J`, so half-integer spins stay exact.
    pub two_j: usize,
    pub diagram: (usize, usize),
    pub su2_dim: u128,
    /// Dimension of the `S_N` irrep (number of standard tableaux).
    pub sym_group_dim: u128,
}

impl YoungSector {
    pub fn total_spin(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn subtotal(&self) -> u128 {
        self.su2_dim * self.sym_group_dim
    }
}

/// Number of standard tableaux of the two-row shape `(a, b)`, `a ≥ b`,
/// as `n! / Π hooks`.
pub fn two_row_hook_dimension(a: usize, b: usize) -> Result<u128> {
    if b > a {
        return Err(Error::InvalidParams(format!(
            "rows must be non-increasing, got ({a}, {b})"
        )));
    }
    let n = a + b;
    let overflow = || Error::InvalidParams(format!("hook-length count overflows for N = {n}"));
    let mut num: u128 = 1;
    for k in 2..=n as u128 {
        num = num.checked_mul(k).ok_or_else(overflow)?;
    }
    let mut hooks: u128 = 1;
    for i in 0..a {
        // Arm to the right, plus the cell below when the second row reaches it.
        let h = (a - i) + usize::from(i < b);
        hooks = hooks.checked_mul(h as u128).ok_or_else(overflow)?;
    }
    for i in 0..b {
        hooks = hooks.checked_mul((b - i) as u128).ok_or_else(overflow)?;
    }
    Ok(num / hooks)
}

/// Sectors for `J = N/2, N/2 - 1, …`, largest spin first. Exact up to
/// `N = 34`, where `N!` still fits in `u128`.
pub fn schur_weyl_decomposition(n: usize) -> Result<Vec<YoungSector>> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    (0..=n / 2)
        .map(|b| {
            let a = n - b;
            Ok(YoungSector {
                two_j: a - b,
                diagram: (a, b),
                su2_dim: (a - b + 1) as u128,
                sym_group_dim: two_row_hook_dimension(a, b)?,
            })
        })
        .collect()
}

/// `J,diagram_row1,diagram_row2,su2_dim,f,subtotal`.
pub fn write_decomposition_csv<W: Write>(sectors: &[YoungSector], mut w: W) -> std::io::Result<()> {
    writeln!(w, "J,diagram_row1,diagram_row2,su2_dim,f,subtotal")?;
    for s in sectors {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.total_spin(),
            s.diagram.0,
            s.diagram.1,
            s.su2_dim,
            s.sym_group_dim,
            s.subtotal()
        )?;
    }
    Ok(())
}

/// Largest system for which Dicke states are expanded explicitly.
pub const MAX_EXPANSION_SPINS: usize = 16;

/// `|D_k⟩` over the computational basis: coefficient `1/√C(n,k)` on every
/// string with exactly `k` spins up. Bit `n-1-i` of the index is site `i`,
/// with 0 = up. Entries are sorted by index.
pub fn dicke_state_expansion(n: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    if n == 0 || n > MAX_EXPANSION_SPINS {
        return Err(Error::InvalidParams(format!(
            "Dicke expansion supports 1..={MAX_EXPANSION_SPINS} spins, got {n}"
        )));
    }
    if k > n {
        return Err(Error::InvalidParams(format!("k = {k} exceeds n = {n}")));
    }
    let strings: Vec<usize> = (0..1usize << n)
        .filter(|b| n - b.count_ones() as usize == k)
        .collect();
    let c = 1.0 / (strings.len() as f64).sqrt();
    Ok(strings.into_iter().map(|b| (b, c)).collect())
}

/// Applies a site permutation (`perm[i]` is the new position of site `i`) to
/// a basis index.
pub fn permute_basis_index(n: usize, index: usize, perm: &[usize]) -> usize {
    let mut out = 0;
    for (i, &to) in perm.iter().enumerate().take(n) {
        let bit = (index >> (n - 1 - i)) & 1;
        out |= bit << (n - 1 - to);
    }
    out
}
