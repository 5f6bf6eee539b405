//! Brute-force Lindblad evolution on the full `2^N`-dimensional space, used
//! to validate the Dicke-sector propagator and to measure leakage out of the
//! symmetric sector.
//!
//! Basis index bit `N-1-i` is the state of site `i`: 0 = up, 1 = down.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::SamplingPolicy;
use crate::error::{Error, Result};
use crate::model::{MacrospinState, ModelParams, SphericalAngle};
use crate::rk::{DriveTable, IntegratorSpec, RkStepper};
use crate::symmetry::dicke_state_expansion;

pub const MAX_ORACLE_SPINS: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Row-wise sparse matrix; small enough that no index compression pays off.
#[derive(Debug, Clone)]
struct Sparse {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Sparse {
    fn from_dense(dim: usize, m: &[Complex64]) -> Self {
        let rows = (0..dim)
            .map(|r| {
                (0..dim)
                    .filter_map(|c| {
                        let v = m[r * dim + c];
                        (v.norm() > 1e-300).then_some((c, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    /// `out += w · A X` for dense row-major `X`.
    fn left_mul_add(&self, w: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let dim = self.rows.len();
        for (r, row) in self.rows.iter().enumerate() {
            let o = &mut out[r * dim..(r + 1) * dim];
            for &(k, a) in row {
                let s = w * a;
                for (oi, xi) in o.iter_mut().zip(&x[k * dim..(k + 1) * dim]) {
                    *oi += s * xi;
                }
            }
        }
    }

    /// `out += w · X A` for dense row-major `X`.
    fn right_mul_add(&self, w: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let dim = self.rows.len();
        for r in 0..dim {
            let xr = &x[r * dim..(r + 1) * dim];
            let o = &mut out[r * dim..(r + 1) * dim];
            for (k, row) in self.rows.iter().enumerate() {
                let s = w * xr[k];
                if s == ZERO {
                    continue;
                }
                for &(c, a) in row {
                    o[c] += s * a;
                }
            }
        }
    }

    /// `Tr(ρ A)`.
    fn expectation(&self, rho: &[Complex64]) -> Complex64 {
        let dim = self.rows.len();
        let mut acc = ZERO;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                acc += a * rho[c * dim + r];
            }
        }
        acc
    }
}

fn dense_matmul(dim: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; dim * dim];
    for r in 0..dim {
        for k in 0..dim {
            let ark = a[r * dim + k];
            if ark == ZERO {
                continue;
            }
            for c in 0..dim {
                out[r * dim + c] += ark * b[k * dim + c];
            }
        }
    }
    out
}

fn dagger(dim: usize, a: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            out[c * dim + r] = a[r * dim + c].conj();
        }
    }
    out
}

/// Collective single-site sum `Σ_i op_i` for a 2×2 `op` in the `[up, down]` basis.
fn collective(n: usize, op: [[Complex64; 2]; 2]) -> Vec<Complex64> {
    let dim = 1usize << n;
    let mut out = vec![ZERO; dim * dim];
    for col in 0..dim {
        for site in 0..n {
            let bit = n - 1 - site;
            let s_in = (col >> bit) & 1;
            for s_out in 0..2 {
                let v = op[s_out][s_in];
                if v == ZERO {
                    continue;
                }
                let row = (col & !(1 << bit)) | (s_out << bit);
                out[row * dim + col] += v;
            }
        }
    }
    out
}

/// Operators of the full model for one parameter set.
pub struct FullSpaceModel {
    n: usize,
    dim: usize,
    params: ModelParams,
    /// `N Σ_μ J_μ (S^μ)²`.
    h_int: Sparse,
    /// `Σ_i σ^x_i`, `Σ_i σ^y_i`, `Σ_i σ^z_i`.
    sx: Sparse,
    sy: Sparse,
    sz: Sparse,
    lower: Sparse,
    raise: Sparse,
    /// `σ⁺σ⁻` with the collective ladder operators.
    number: Sparse,
    dicke: Vec<Vec<(usize, f64)>>,
    // Dense copies for projections in tests.
    h_int_dense: Vec<Complex64>,
    sx_dense: Vec<Complex64>,
    sy_dense: Vec<Complex64>,
}

impl FullSpaceModel {
    pub fn new(n: usize, params: &ModelParams) -> Result<Self> {
        if n == 0 || n > MAX_ORACLE_SPINS {
            return Err(Error::InvalidParams(format!(
                "full-space oracle supports 1..={MAX_ORACLE_SPINS} spins, got {n}"
            )));
        }
        params.validate()?;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let dim = 1usize << n;
        let sx = collective(n, [[ZERO, c(1.0, 0.0)], [c(1.0, 0.0), ZERO]]);
        let sy = collective(n, [[ZERO, c(0.0, -1.0)], [c(0.0, 1.0), ZERO]]);
        let sz = collective(n, [[c(1.0, 0.0), ZERO], [ZERO, c(-1.0, 0.0)]]);
        let lower = collective(n, [[ZERO, ZERO], [c(1.0, 0.0), ZERO]]);
        let raise = dagger(dim, &lower);
        let nf = n as f64;
        let j = params.j;
        let mut h_int = vec![ZERO; dim * dim];
        for (op, jm) in [(&sx, j.x), (&sy, j.y), (&sz, j.z)] {
            if jm == 0.0 {
                continue;
            }
            let sq = dense_matmul(dim, op, op);
            for (h, s) in h_int.iter_mut().zip(&sq) {
                *h += s * (jm / nf);
            }
        }
        let number = dense_matmul(dim, &raise, &lower);
        Ok(Self {
            n,
            dim,
            params: *params,
            h_int: Sparse::from_dense(dim, &h_int),
            sx: Sparse::from_dense(dim, &sx),
            sy: Sparse::from_dense(dim, &sy),
            sz: Sparse::from_dense(dim, &sz),
            lower: Sparse::from_dense(dim, &lower),
            raise: Sparse::from_dense(dim, &raise),
            number: Sparse::from_dense(dim, &number),
            dicke: (0..=n)
                .map(|k| dicke_state_expansion(n, k))
                .collect::<Result<_>>()?,
            h_int_dense: h_int,
            sx_dense: sx,
            sy_dense: sy,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Full Hamiltonian at drive factors `(sin ωt, 1 - cos ωt)`, dense.
    pub fn hamiltonian_dense(&self, sin: f64, one_minus_cos: f64) -> Vec<Complex64> {
        let a = self.params.gamma / 2.0;
        self.h_int_dense
            .iter()
            .zip(&self.sx_dense)
            .zip(&self.sy_dense)
            .map(|((h, x), y)| h + x * (a * sin) + y * (a * one_minus_cos))
            .collect()
    }

    /// `<D_k| A |D_l>` for a dense full-space operator.
    pub fn project_to_dicke(&self, a: &[Complex64]) -> Vec<Complex64> {
        let d = self.n + 1;
        let mut out = vec![ZERO; d * d];
        for (k, dk) in self.dicke.iter().enumerate() {
            for (l, dl) in self.dicke.iter().enumerate() {
                let mut acc = ZERO;
                for &(i, ci) in dk {
                    for &(j, cj) in dl {
                        acc += a[i * self.dim + j] * (ci * cj);
                    }
                }
                out[k * d + l] = acc;
            }
        }
        out
    }

    /// Product state with every site along `a`.
    pub fn product_state(&self, a: SphericalAngle) -> Vec<Complex64> {
        let (s, c) = (a.theta / 2.0).sin_cos();
        let down = Complex64::from_polar(s, a.phi);
        (0..self.dim)
            .map(|b| {
                let n_down = (b as u32).count_ones() as i32;
                down.powi(n_down) * c.powi(self.n as i32 - n_down)
            })
            .collect()
    }

    /// Embeds Dicke-sector amplitudes (indexed by the number of up spins).
    pub fn embed_dicke(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        if amps.len() != self.n + 1 {
            return Err(Error::InvalidParams(format!(
                "expected {} Dicke amplitudes, got {}",
                self.n + 1,
                amps.len()
            )));
        }
        let mut psi = vec![ZERO; self.dim];
        for (k, dk) in self.dicke.iter().enumerate() {
            for &(i, ci) in dk {
                psi[i] += amps[k] * ci;
            }
        }
        Ok(psi)
    }

    fn rhs(
        &self,
        sin: f64,
        one_minus_cos: f64,
        rho: &[Complex64],
        out: &mut [Complex64],
        tmp: &mut [Complex64],
    ) {
        let i = Complex64::i();
        let a = self.params.gamma / 2.0;
        let w = self.params.kappa / self.n as f64;
        out.fill(ZERO);
        // -i [H, ρ]
        self.h_int.left_mul_add(-i, rho, out);
        self.h_int.right_mul_add(i, rho, out);
        if a != 0.0 {
            self.sx.left_mul_add(-i * (a * sin), rho, out);
            self.sx.right_mul_add(i * (a * sin), rho, out);
            self.sy.left_mul_add(-i * (a * one_minus_cos), rho, out);
            self.sy.right_mul_add(i * (a * one_minus_cos), rho, out);
        }
        if w != 0.0 {
            // (κ/N)(2 L ρ L† - {L†L, ρ})
            tmp.fill(ZERO);
            self.lower.left_mul_add(Complex64::new(1.0, 0.0), rho, tmp);
            self.raise
                .right_mul_add(Complex64::new(2.0 * w, 0.0), tmp, out);
            self.number.left_mul_add(Complex64::new(-w, 0.0), rho, out);
            self.number.right_mul_add(Complex64::new(-w, 0.0), rho, out);
        }
    }

    fn observe(&self, rho: &[Complex64]) -> (MacrospinState, f64, f64) {
        let nf = self.n as f64;
        let m = MacrospinState::new(
            self.sx.expectation(rho).re / nf,
            self.sy.expectation(rho).re / nf,
            self.sz.expectation(rho).re / nf,
        );
        let mut inside = 0.0;
        for dk in &self.dicke {
            let mut acc = ZERO;
            for &(i, ci) in dk {
                for &(j, cj) in dk {
                    acc += rho[i * self.dim + j] * (ci * cj);
                }
            }
            inside += acc.re;
        }
        let trace: Complex64 = (0..self.dim).map(|r| rho[r * self.dim + r]).sum();
        (m, 1.0 - inside, (trace - 1.0).norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSpaceRun {
    pub times: Vec<f64>,
    pub m: Vec<MacrospinState>,
    /// `1 - Tr(P_Dicke ρ)`.
    pub leak: Vec<f64>,
    pub trace_err: Vec<f64>,
}

/// Full-space evolution from the product state along `a`.
pub fn full_space_oracle(
    n: usize,
    p: &ModelParams,
    a: SphericalAngle,
    spec: IntegratorSpec,
    t_end: f64,
    record: SamplingPolicy,
) -> Result<FullSpaceRun> {
    let model = FullSpaceModel::new(n, p)?;
    let psi = model.product_state(a);
    evolve_full(&model, &psi, spec, t_end, record)
}

/// Full-space evolution from an arbitrary pure state `psi0` of length `2^n`.
pub fn full_space_oracle_from(
    n: usize,
    p: &ModelParams,
    psi0: &[Complex64],
    spec: IntegratorSpec,
    t_end: f64,
    record: SamplingPolicy,
) -> Result<FullSpaceRun> {
    let model = FullSpaceModel::new(n, p)?;
    if psi0.len() != model.dim {
        return Err(Error::InvalidParams(format!(
            "expected {} amplitudes, got {}",
            model.dim,
            psi0.len()
        )));
    }
    evolve_full(&model, psi0, spec, t_end, record)
}

fn evolve_full(
    model: &FullSpaceModel,
    psi0: &[Complex64],
    spec: IntegratorSpec,
    t_end: f64,
    record: SamplingPolicy,
) -> Result<FullSpaceRun> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if let SamplingPolicy::Dense { every: 0 } = record {
        return Err(Error::InvalidParams(
            "dense sampling stride must be positive".into(),
        ));
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidParams(
            "initial state must be a non-zero vector".into(),
        ));
    }
    let dim = model.dim;
    let mut rho = vec![ZERO; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            rho[r * dim + c] = psi0[r] * psi0[c].conj() / (norm * norm);
        }
    }
    let npp = spec.steps_per_period()?;
    let h = model.params.period() / npp as f64;
    let total = (t_end / h - 1e-9).ceil() as usize;
    let table = DriveTable::new(npp);
    let mut stepper = RkStepper::<Complex64>::new(spec.order, dim * dim);
    let mut tmp = vec![ZERO; dim * dim];

    let mut run = FullSpaceRun {
        times: Vec::new(),
        m: Vec::new(),
        leak: Vec::new(),
        trace_err: Vec::new(),
    };
    let push = |t: f64, rho: &[Complex64], run: &mut FullSpaceRun| {
        let (m, leak, tr) = model.observe(rho);
        run.times.push(t);
        run.m.push(m);
        run.leak.push(leak);
        run.trace_err.push(tr);
    };
    push(0.0, &rho, &mut run);
    for step in 1..=total {
        stepper.step(h, 2 * ((step - 1) % npp), &mut rho, |k, s, ds| {
            let dr = table.get(k);
            model.rhs(dr.sin, dr.one_minus_cos, s, ds, &mut tmp);
        });
        let strobe = step % npp == 0;
        let keep = match record {
            SamplingPolicy::Dense { every } => strobe || step % every == 0 || step == total,
            SamplingPolicy::Stroboscopic => strobe,
        };
        if keep {
            if !rho.iter().all(|z| z.is_finite()) {
                return Err(Error::QuantumDrift {
                    time: step as f64 * h,
                    reason: "non-finite density matrix in full-space evolution".into(),
                });
            }
            push(step as f64 * h, &rho, &mut run);
        }
    }
    Ok(run)
}
