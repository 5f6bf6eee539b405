//! Mean-field (infinite-N) equations of motion on the Bloch sphere.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MacrospinState, ModelParams};
use crate::rk::{DriveSample, DriveTable, IntegratorSpec, RkOrder, RkStepper};

/// Right-hand side with the drive factors already evaluated.
#[inline]
pub fn rhs_with_drive(m: &[f64; 3], d: DriveSample, p: &ModelParams) -> [f64; 3] {
    let [x, y, z] = *m;
    let g = p.gamma;
    let k = p.kappa;
    let j = p.j;
    [
        g * d.one_minus_cos * z + 4.0 * (j.y - j.z) * y * z + k * x * z,
        -g * d.sin * z + 4.0 * (j.z - j.x) * z * x + k * y * z,
        g * d.sin * y - g * d.one_minus_cos * x + 4.0 * (j.x - j.y) * x * y - k * (x * x + y * y),
    ]
}

/// `dm/dt` of the mean-field flow at time `t`.
pub fn classical_rhs(t: f64, m: MacrospinState, p: &ModelParams) -> MacrospinState {
    MacrospinState::from_array(rhs_with_drive(
        &m.to_array(),
        DriveSample::at(p.omega, t),
        p,
    ))
}

#[inline]
pub fn jacobian_with_drive(m: &[f64; 3], d: DriveSample, p: &ModelParams) -> [[f64; 3]; 3] {
    let [x, y, z] = *m;
    let g = p.gamma;
    let k = p.kappa;
    let a = 4.0 * (p.j.y - p.j.z);
    let b = 4.0 * (p.j.z - p.j.x);
    let c = 4.0 * (p.j.x - p.j.y);
    [
        [k * z, a * z, g * d.one_minus_cos + a * y + k * x],
        [b * z, k * z, -g * d.sin + b * x + k * y],
        [
            -g * d.one_minus_cos + c * y - 2.0 * k * x,
            g * d.sin + c * x - 2.0 * k * y,
            0.0,
        ],
    ]
}

/// `J[i][j] = ∂(dm_i/dt)/∂m_j`.
pub fn classical_jacobian(t: f64, m: MacrospinState, p: &ModelParams) -> [[f64; 3]; 3] {
    jacobian_with_drive(&m.to_array(), DriveSample::at(p.omega, t), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingPolicy {
    /// Keep every `every`-th step plus every period boundary.
    Dense { every: usize },
    /// Keep only the states at integer multiples of the period.
    Stroboscopic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MacrospinState>,
    /// Indices into `times` that sit on a period boundary.
    pub stroboscopic_indices: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, m: MacrospinState, strobe: bool) {
        if strobe {
            self.stroboscopic_indices.push(self.times.len());
        }
        self.times.push(t);
        self.states.push(m);
    }

    pub fn last(&self) -> Option<MacrospinState> {
        self.states.last().copied()
    }

    /// `(t, m)` pairs at the period boundaries.
    pub fn stroboscopic(&self) -> impl Iterator<Item = (f64, MacrospinState)> + '_ {
        self.stroboscopic_indices
            .iter()
            .map(move |&i| (self.times[i], self.states[i]))
    }

    /// Linear interpolation of the state at time `t` (clamped to the range).
    pub fn state_at(&self, t: f64) -> Option<MacrospinState> {
        if self.times.is_empty() {
            return None;
        }
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            return Some(self.states[0]);
        }
        if i >= self.times.len() {
            return self.last();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        let (a, b) = (self.states[i - 1], self.states[i]);
        Some(MacrospinState::new(
            a.x + w * (b.x - a.x),
            a.y + w * (b.y - a.y),
            a.z + w * (b.z - a.z),
        ))
    }

    /// CSV with columns `t,mx,my,mz,stroboscopic`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mx,my,mz,stroboscopic")?;
        let mut strobe = self.stroboscopic_indices.iter().peekable();
        for (i, (t, m)) in self.times.iter().zip(&self.states).enumerate() {
            let flag = if strobe.peek() == Some(&&i) {
                strobe.next();
                1
            } else {
                0
            };
            writeln!(w, "{t},{},{},{},{flag}", m.x, m.y, m.z)?;
        }
        Ok(())
    }
}

/// Period-by-period propagator used by the sweeps; keeps the drive table
/// and stage buffers alive between calls.
pub struct ClassicalFlow {
    params: ModelParams,
    h: f64,
    steps_per_period: usize,
    table: DriveTable,
    stepper: RkStepper<f64>,
    order: RkOrder,
}

impl ClassicalFlow {
    pub fn new(params: ModelParams, spec: IntegratorSpec) -> Result<Self> {
        params.validate()?;
        let steps_per_period = spec.steps_per_period()?;
        Ok(Self {
            params,
            h: params.period() / steps_per_period as f64,
            steps_per_period,
            table: DriveTable::new(steps_per_period),
            stepper: RkStepper::new(spec.order, 3),
            order: spec.order,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// One step from step index `n` (time `n * h`).
    #[inline]
    pub fn step(&mut self, n: usize, m: &mut [f64; 3]) {
        let p = self.params;
        let table = &self.table;
        self.stepper.step(self.h, 2 * n, &mut m[..], |k, y, dy| {
            let d = rhs_with_drive(&[y[0], y[1], y[2]], table.get(k), &p);
            dy.copy_from_slice(&d);
        });
    }

    /// Advances from a period boundary to the next one.
    pub fn advance_period(&mut self, m: &mut [f64; 3]) {
        for n in 0..self.steps_per_period {
            self.step(n, m);
        }
    }

    /// Advances `periods` whole periods; fails if the state stops being finite.
    /// `t0` only labels the error.
    pub fn advance_periods(&mut self, m: &mut [f64; 3], periods: usize, t0: f64) -> Result<()> {
        for k in 0..periods {
            let before = *m;
            self.advance_period(m);
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::BlowUp {
                    time: t0 + (k + 1) as f64 * self.params.period(),
                    last_valid: MacrospinState::from_array(before),
                });
            }
        }
        Ok(())
    }

    /// Stroboscopic states after discarding `transient` periods: returns the
    /// states at the ends of periods `transient + 1 ..= transient + samples`.
    pub fn stroboscopic_samples(
        &mut self,
        m0: MacrospinState,
        transient: usize,
        samples: usize,
    ) -> Result<Vec<MacrospinState>> {
        let mut m = m0.to_array();
        let period = self.params.period();
        self.advance_periods(&mut m, transient, 0.0)?;
        let mut out = Vec::with_capacity(samples);
        for k in 0..samples {
            self.advance_periods(&mut m, 1, (transient + k) as f64 * period)?;
            out.push(MacrospinState::from_array(m));
        }
        Ok(out)
    }

    /// Advances `periods` whole periods together with the linearized flow and
    /// returns the Jacobian of that period map at the starting state
    /// (row-major, `jac[i][j] = ∂m_i(end)/∂m_j(start)`).
    pub fn advance_with_jacobian(
        &mut self,
        m: &mut [f64; 3],
        periods: usize,
    ) -> Result<[[f64; 3]; 3]> {
        let p = self.params;
        let table = &self.table;
        let mut stepper = RkStepper::<f64>::new(self.order, 12);
        let mut y = [0.0f64; 12];
        y[..3].copy_from_slice(m);
        y[3] = 1.0;
        y[7] = 1.0;
        y[11] = 1.0;
        for k in 0..periods {
            for n in 0..self.steps_per_period {
                stepper.step(self.h, 2 * n, &mut y, |i, s, ds| {
                    let x = [s[0], s[1], s[2]];
                    let d = table.get(i);
                    ds[..3].copy_from_slice(&rhs_with_drive(&x, d, &p));
                    let jac = jacobian_with_drive(&x, d, &p);
                    for c in 0..3 {
                        let v = &s[3 + 3 * c..6 + 3 * c];
                        for r in 0..3 {
                            ds[3 + 3 * c + r] =
                                jac[r][0] * v[0] + jac[r][1] * v[1] + jac[r][2] * v[2];
                        }
                    }
                });
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::BlowUp {
                    time: (k + 1) as f64 * p.period(),
                    last_valid: MacrospinState::from_array(*m),
                });
            }
        }
        m.copy_from_slice(&y[..3]);
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            for r in 0..3 {
                jac[r][c] = y[3 + 3 * c + r];
            }
        }
        Ok(jac)
    }
}

/// Fixed-step integration from `t = 0` to `t_end`.
pub fn integrate(
    m0: MacrospinState,
    p: &ModelParams,
    spec: IntegratorSpec,
    t_end: f64,
    record: SamplingPolicy,
) -> Result<Trajectory> {
    let (traj, err) = integrate_partial(m0, p, spec, t_end, record)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`integrate`] but a blow-up returns the trajectory recorded so far
/// together with the error instead of discarding it. Invalid inputs still
/// fail up front.
pub fn integrate_partial(
    m0: MacrospinState,
    p: &ModelParams,
    spec: IntegratorSpec,
    t_end: f64,
    record: SamplingPolicy,
) -> Result<(Trajectory, Option<Error>)> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !m0.is_finite() {
        return Err(Error::InvalidParams("initial state must be finite".into()));
    }
    if let SamplingPolicy::Dense { every } = record {
        if every == 0 {
            return Err(Error::InvalidParams(
                "dense sampling stride must be positive".into(),
            ));
        }
    }
    let mut flow = ClassicalFlow::new(*p, spec)?;
    let h = flow.step_size();
    let npp = flow.steps_per_period();
    let total = (t_end / h - 1e-9).ceil() as usize;

    let mut traj = Trajectory::default();
    let mut m = m0.to_array();
    traj.push(0.0, m0, true);
    for n in 0..total {
        let before = m;
        flow.step(n % npp, &mut m);
        let step = n + 1;
        let t = step as f64 * h;
        if !m.iter().all(|v| v.is_finite()) {
            return Ok((
                traj,
                Some(Error::BlowUp {
                    time: t,
                    last_valid: MacrospinState::from_array(before),
                }),
            ));
        }
        let strobe = step % npp == 0;
        let keep = match record {
            SamplingPolicy::Dense { every } => strobe || step % every == 0 || step == total,
            SamplingPolicy::Stroboscopic => strobe,
        };
        if keep {
            traj.push(t, MacrospinState::from_array(m), strobe);
        }
    }
    Ok((traj, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Couplings;
    use rand::{Rng, SeedableRng};

    fn p(gamma: f64, kappa: f64, j: (f64, f64, f64)) -> ModelParams {
        ModelParams::new(gamma, kappa, Couplings::new(j.0, j.1, j.2))
    }

    /// Term-by-term evaluation of the mean-field equations, written out
    /// independently of `rhs_with_drive`.
    fn symbolic_rhs(t: f64, m: [f64; 3], q: &ModelParams) -> [f64; 3] {
        let wt = q.omega * t;
        let drive_x = q.gamma * (1.0 - wt.cos()) * m[2];
        let drive_y = -q.gamma * wt.sin() * m[2];
        let drive_z = q.gamma * wt.sin() * m[1] - q.gamma * (1.0 - wt.cos()) * m[0];
        let int_x = 4.0 * (q.j.y - q.j.z) * m[1] * m[2];
        let int_y = 4.0 * (q.j.z - q.j.x) * m[2] * m[0];
        let int_z = 4.0 * (q.j.x - q.j.y) * m[0] * m[1];
        let dis_x = q.kappa * m[0] * m[2];
        let dis_y = q.kappa * m[1] * m[2];
        let dis_z = -q.kappa * (m[0] * m[0] + m[1] * m[1]);
        [
            drive_x + int_x + dis_x,
            drive_y + int_y + dis_y,
            drive_z + int_z + dis_z,
        ]
    }

    #[test]
    fn rhs_examples() {
        let d = classical_rhs(
            0.0,
            MacrospinState::X_POLARIZED,
            &p(5.0, 3.0, (0.0, 1.0, 0.0)),
        );
        assert_eq!(d.to_array(), [0.0, 0.0, -3.0]);

        let d = classical_rhs(
            0.37,
            MacrospinState::new(0.0, 0.0, 1.0),
            &p(0.0, 2.5, (0.3, -1.0, 2.0)),
        );
        assert_eq!(d.to_array(), [0.0, 0.0, 0.0]);

        let q = p(1.0, 0.0, (0.0, 0.0, 0.0));
        let d = classical_rhs(0.25, MacrospinState::new(0.0, 1.0, 0.0), &q);
        let oracle = symbolic_rhs(0.25, [0.0, 1.0, 0.0], &q);
        for i in 0..3 {
            assert!((d.to_array()[i] - oracle[i]).abs() < 1e-15);
        }
        assert!((d.z - 1.0).abs() < 1e-15 && d.x.abs() < 1e-15 && d.y.abs() < 1e-15);
    }

    #[test]
    fn rhs_matches_symbolic_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = p(
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..5.0),
                (
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ),
            );
            let t = rng.gen_range(0.0..3.0);
            let m = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let got = classical_rhs(t, MacrospinState::from_array(m), &q).to_array();
            let want = symbolic_rhs(t, m, &q);
            for i in 0..3 {
                assert!((got[i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for _ in 0..100 {
            let q = p(
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..5.0),
                (
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ),
            );
            let t = rng.gen_range(0.0..2.0);
            let m = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let jac = classical_jacobian(t, MacrospinState::from_array(m), &q);
            for j in 0..3 {
                let mut mp = m;
                let mut mm = m;
                mp[j] += eps;
                mm[j] -= eps;
                let fp = symbolic_rhs(t, mp, &q);
                let fm = symbolic_rhs(t, mm, &q);
                for i in 0..3 {
                    let fd = (fp[i] - fm[i]) / (2.0 * eps);
                    assert!(
                        (jac[i][j] - fd).abs() < 1e-6,
                        "J[{i}][{j}] {} vs {fd}",
                        jac[i][j]
                    );
                }
            }
            let trace = jac[0][0] + jac[1][1] + jac[2][2];
            assert!((trace - 2.0 * q.kappa * m[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_at_north_pole() {
        let jac = classical_jacobian(
            0.3,
            MacrospinState::new(0.0, 0.0, 1.0),
            &p(0.0, 2.0, (0.0, 0.0, 0.0)),
        );
        assert_eq!(jac, [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn undriven_conservative_flow_stays_on_sphere() {
        let q = p(0.0, 0.0, (0.4, 1.0, -0.7));
        let traj = integrate(
            MacrospinState::X_POLARIZED,
            &q,
            IntegratorSpec::rk4(1e-3),
            1000.0,
            SamplingPolicy::Stroboscopic,
        )
        .unwrap();
        assert_eq!(traj.len(), 1001);
        for m in &traj.states {
            assert!((m.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dissipation_drives_to_south_pole() {
        for kappa in [0.5, 2.0, 5.0] {
            let q = p(0.0, kappa, (0.0, 0.0, 0.0));
            let m0 = MacrospinState::new(0.6, 0.0, 0.8);
            let spec = IntegratorSpec::rk4(1e-3);
            let t_end = (20.0 / kappa / 1e-3).ceil() * 1e-3;
            let traj = integrate(m0, &q, spec, t_end, SamplingPolicy::Stroboscopic).unwrap();
            let end = traj.last().unwrap();
            assert!(
                end.max_dist(&MacrospinState::SOUTH_POLE) < 1e-6,
                "kappa {kappa}: {end}"
            );
        }
    }

    #[test]
    fn stroboscopic_indices_land_on_integers() {
        let q = p(3.0, 1.0, (0.0, 1.0, 0.0));
        let traj = integrate(
            MacrospinState::X_POLARIZED,
            &q,
            IntegratorSpec::rk4(0.01),
            5.5,
            SamplingPolicy::Dense { every: 10 },
        )
        .unwrap();
        let strobe: Vec<f64> = traj.stroboscopic().map(|(t, _)| t).collect();
        assert_eq!(strobe.len(), 6);
        for (k, t) in strobe.iter().enumerate() {
            assert!((t - k as f64).abs() < 1e-12);
        }
        assert!((traj.times.last().unwrap() - 5.5).abs() < 1e-12);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = p(1.0, 1.0, (0.0, 1.0, 0.0));
        let m = MacrospinState::X_POLARIZED;
        assert!(integrate(
            m,
            &q,
            IntegratorSpec::rk4(0.3),
            1.0,
            SamplingPolicy::Stroboscopic
        )
        .is_err());
        assert!(integrate(
            m,
            &q,
            IntegratorSpec::rk4(0.01),
            -1.0,
            SamplingPolicy::Stroboscopic
        )
        .is_err());
        let bad = MacrospinState::new(f64::NAN, 0.0, 0.0);
        assert!(integrate(
            bad,
            &q,
            IntegratorSpec::rk4(0.01),
            1.0,
            SamplingPolicy::Stroboscopic
        )
        .is_err());
    }

    #[test]
    fn blow_up_returns_partial_trajectory() {
        // Far off the sphere the quadratic terms explode.
        let q = p(0.0, 50.0, (0.0, 0.0, 0.0));
        let m0 = MacrospinState::new(1e3, 0.0, 1e3);
        let (traj, err) = integrate_partial(
            m0,
            &q,
            IntegratorSpec::rk4(0.1),
            10.0,
            SamplingPolicy::Dense { every: 1 },
        )
        .unwrap();
        match err {
            Some(Error::BlowUp { last_valid, .. }) => assert!(last_valid.is_finite()),
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(!traj.is_empty());
        assert!(traj.states.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn csv_has_header_and_flags() {
        let q = p(0.0, 0.0, (0.0, 0.0, 0.0));
        let traj = integrate(
            MacrospinState::X_POLARIZED,
            &q,
            IntegratorSpec::rk4(0.5),
            2.0,
            SamplingPolicy::Dense { every: 1 },
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,mx,my,mz,stroboscopic");
        assert_eq!(lines[1], "0,1,0,0,1");
        assert_eq!(lines[2], "0.5,1,0,0,0");
        assert_eq!(lines.len(), 6);
    }
}
