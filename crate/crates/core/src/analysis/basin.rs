use std::f64::consts::{PI, TAU};
use std::io::Write;

use crate::classical::ClassicalFlow;
use crate::error::{Error, Result};
use crate::model::{
    angle_to_vector, fibonacci_sphere, MacrospinState, ModelParams, SphericalAngle,
};
use crate::rk::IntegratorSpec;
use crate::sweep::par_map_indexed;

/// Label written for cells that matched no attractor.
pub const UNRESOLVED: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinOptions {
    pub n_theta: usize,
    pub n_phi: usize,
    /// `θ` range covered by the grid nodes (inclusive).
    pub theta_range: [f64; 2],
    /// `φ` range; the full circle `[0, 2π]` is treated as periodic.
    pub phi_range: [f64; 2],
    /// Lattice seeds used to discover the attractors.
    pub seeds: usize,
    pub seed_periods: usize,
    /// Longest attractor period searched for.
    pub max_attractor_period: usize,
    /// Seed orbits must close to this accuracy to count as periodic.
    pub closure_tol: f64,
    /// Max-norm distance at which a cell state matches an attractor point.
    pub match_tol: f64,
    /// Periods before a cell is first compared against the attractors.
    pub min_periods: usize,
    /// Cells still unmatched after this many periods are unresolved.
    pub max_periods: usize,
    /// Largest acceptable unresolved fraction.
    pub max_unresolved: f64,
    pub spec: IntegratorSpec,
}

impl Default for BasinOptions {
    fn default() -> Self {
        Self {
            n_theta: 200,
            n_phi: 400,
            theta_range: [0.0, PI],
            phi_range: [0.0, TAU],
            seeds: 64,
            seed_periods: 1000,
            max_attractor_period: 16,
            closure_tol: 1e-6,
            match_tol: 1e-3,
            min_periods: 10,
            max_periods: 2000,
            max_unresolved: 0.2,
            spec: IntegratorSpec::rk4(1e-3),
        }
    }
}

impl BasinOptions {
    pub fn with_resolution(mut self, n_theta: usize, n_phi: usize) -> Self {
        self.n_theta = n_theta;
        self.n_phi = n_phi;
        self
    }

    fn full_circle(&self) -> bool {
        (self.phi_range[1] - self.phi_range[0] - TAU).abs() < 1e-12
    }

    /// Node coordinates. `θ` nodes include both ends of the range; on the full
    /// circle the `φ` nodes exclude `2π`.
    pub fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        let [t0, t1] = self.theta_range;
        let thetas = (0..self.n_theta)
            .map(|i| t0 + (t1 - t0) * i as f64 / (self.n_theta - 1) as f64)
            .collect();
        let [p0, p1] = self.phi_range;
        let div = if self.full_circle() {
            self.n_phi
        } else {
            self.n_phi - 1
        };
        let phis = (0..self.n_phi)
            .map(|j| p0 + (p1 - p0) * j as f64 / div as f64)
            .collect();
        (thetas, phis)
    }

    pub fn validate(&self) -> Result<()> {
        let full = self.theta_range == [0.0, PI] && self.full_circle();
        if full && (self.n_theta < 50 || self.n_phi < 100) {
            return Err(Error::InvalidParams(format!(
                "basin resolution must be at least 50x100, got {}x{}",
                self.n_theta, self.n_phi
            )));
        }
        if self.n_theta < 2 || self.n_phi < 2 {
            return Err(Error::InvalidParams(
                "basin grid needs at least 2x2 nodes".into(),
            ));
        }
        let [t0, t1] = self.theta_range;
        let [p0, p1] = self.phi_range;
        if !(0.0 <= t0 && t0 < t1 && t1 <= PI) || !(p0 < p1 && p1 - p0 <= TAU + 1e-12) {
            return Err(Error::InvalidParams("basin window out of range".into()));
        }
        if self.seeds == 0 || self.max_attractor_period == 0 || self.min_periods > self.max_periods
        {
            return Err(Error::InvalidParams(
                "basin seeds, periods and attractor period must be positive".into(),
            ));
        }
        if !(self.match_tol > 0.0 && self.closure_tol > 0.0) {
            return Err(Error::InvalidParams(
                "basin tolerances must be positive".into(),
            ));
        }
        self.spec.steps_per_period()?;
        Ok(())
    }
}

/// A periodic orbit of the stroboscopic map, rotated to start at its point
/// with the smallest `m^x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attractor {
    pub orbit: Vec<MacrospinState>,
}

impl Attractor {
    pub fn period(&self) -> usize {
        self.orbit.len()
    }

    fn canonical(mut orbit: Vec<MacrospinState>) -> Self {
        let start = orbit
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.x.total_cmp(&b.1.x))
            .map(|(i, _)| i)
            .unwrap_or(0);
        orbit.rotate_left(start);
        Self { orbit }
    }

    /// Index of the orbit point within `tol` of `m`.
    fn matching_point(&self, m: &MacrospinState, tol: f64) -> Option<usize> {
        self.orbit.iter().position(|q| q.max_dist(m) < tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinMap {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Row-major over `(θ, φ)`; `None` is unresolved.
    pub labels: Vec<Option<usize>>,
    /// Sorted by the `m^x` of their first point.
    pub attractors: Vec<Attractor>,
    /// Whether `φ` wraps around (full circle).
    pub periodic_phi: bool,
}

impl BasinMap {
    pub fn label(&self, i: usize, j: usize) -> Option<usize> {
        self.labels[i * self.phis.len() + j]
    }

    /// Label of the grid node nearest to `a`.
    pub fn label_near(&self, a: SphericalAngle) -> Option<usize> {
        let nearest = |axis: &[f64], x: f64| {
            axis.iter()
                .enumerate()
                .min_by(|p, q| (p.1 - x).abs().total_cmp(&(q.1 - x).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        self.label(nearest(&self.thetas, a.theta), nearest(&self.phis, a.phi))
    }

    pub fn unresolved_fraction(&self) -> f64 {
        self.labels.iter().filter(|l| l.is_none()).count() as f64 / self.labels.len() as f64
    }

    /// Distinct labels present on the grid, ascending.
    pub fn labels_present(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.labels.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nt, np) = (self.thetas.len() as i64, self.phis.len() as i64);
        let wrap = self.periodic_phi;
        (-1i64..=1)
            .flat_map(|di| (-1i64..=1).map(move |dj| (di, dj)))
            .filter(|&d| d != (0, 0))
            .filter_map(move |(di, dj)| {
                let a = i as i64 + di;
                let mut b = j as i64 + dj;
                if wrap {
                    b = b.rem_euclid(np);
                }
                (0..nt).contains(&a).then_some(())?;
                (0..np).contains(&b).then_some((a as usize, b as usize))
            })
    }

    /// True when all eight neighbors carry the same label as the cell.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        let l = self.label(i, j);
        self.neighbors(i, j).all(|(a, b)| self.label(a, b) == l)
    }

    /// Fraction of cells with at least one differently labeled neighbor.
    pub fn boundary_fraction(&self) -> f64 {
        let (nt, np) = (self.thetas.len(), self.phis.len());
        let count = (0..nt)
            .flat_map(|i| (0..np).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.is_interior(i, j))
            .count();
        count as f64 / (nt * np) as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,phi,label")?;
        for (i, t) in self.thetas.iter().enumerate() {
            for (j, p) in self.phis.iter().enumerate() {
                let l = self.label(i, j).map_or(UNRESOLVED, |l| l as i64);
                writeln!(w, "{t},{p},{l}")?;
            }
        }
        Ok(())
    }
}

fn detect_attractors(p: &ModelParams, opts: &BasinOptions) -> Result<Vec<Attractor>> {
    let seeds = fibonacci_sphere(opts.seeds);
    let orbits = par_map_indexed(seeds.len(), |k| -> Result<Option<Vec<MacrospinState>>> {
        let mut flow = ClassicalFlow::new(*p, opts.spec)?;
        let s = flow.stroboscopic_samples(
            angle_to_vector(seeds[k]),
            opts.seed_periods,
            opts.max_attractor_period + 1,
        )?;
        let close =
            (1..=opts.max_attractor_period).find(|&q| s[q].max_dist(&s[0]) < opts.closure_tol);
        Ok(close.map(|q| s[..q].to_vec()))
    });
    let mut found: Vec<Attractor> = Vec::new();
    for orbit in orbits.into_iter().filter_map(|r| r.ok().flatten()) {
        if found
            .iter()
            .all(|a| a.matching_point(&orbit[0], opts.match_tol).is_none())
        {
            found.push(Attractor::canonical(orbit));
        }
    }
    if found.is_empty() {
        return Err(Error::Analysis(
            "no periodic attractor found from the seed lattice".into(),
        ));
    }
    found.sort_by(|a, b| {
        let (p, q) = (a.orbit[0], b.orbit[0]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
    });
    Ok(found)
}

/// Follows `m0` until its stroboscopic state tracks one attractor for a full
/// orbit of that attractor; `None` when nothing matches within `max_periods`.
pub fn label_state(
    flow: &mut ClassicalFlow,
    m0: MacrospinState,
    attractors: &[Attractor],
    opts: &BasinOptions,
) -> Option<usize> {
    let mut m = m0.to_array();
    if flow.advance_periods(&mut m, opts.min_periods, 0.0).is_err() {
        return None;
    }
    // (attractor, expected orbit index, consecutive matches)
    let mut track: Option<(usize, usize, usize)> = None;
    for _ in opts.min_periods..opts.max_periods {
        let s = MacrospinState::from_array(m);
        track = match track {
            Some((a, idx, n)) if attractors[a].orbit[idx].max_dist(&s) < opts.match_tol => {
                Some((a, (idx + 1) % attractors[a].period(), n + 1))
            }
            _ => attractors.iter().enumerate().find_map(|(a, att)| {
                att.matching_point(&s, opts.match_tol)
                    .map(|i| (a, (i + 1) % att.period(), 1))
            }),
        };
        if let Some((a, _, n)) = track {
            if n >= attractors[a].period() {
                return Some(a);
            }
        }
        if flow.advance_periods(&mut m, 1, 0.0).is_err() {
            return None;
        }
    }
    None
}

/// Labels every grid node by the attractor its orbit settles on.
///
/// Attractors are discovered first from long runs started on a Fibonacci
/// lattice. Fails with [`Error::Unresolved`] when more than
/// `opts.max_unresolved` of the cells match nothing.
pub fn basin_map(p: &ModelParams, opts: &BasinOptions) -> Result<BasinMap> {
    opts.validate()?;
    p.validate()?;
    let attractors = detect_attractors(p, opts)?;
    let (thetas, phis) = opts.axes();
    let np = phis.len();
    let labels = par_map_indexed(thetas.len() * np, |idx| {
        let a = SphericalAngle {
            theta: thetas[idx / np],
            phi: phis[idx % np],
        };
        let mut flow = ClassicalFlow::new(*p, opts.spec).ok()?;
        label_state(&mut flow, angle_to_vector(a), &attractors, opts)
    });
    let map = BasinMap {
        thetas,
        phis,
        labels,
        attractors,
        periodic_phi: opts.full_circle(),
    };
    let fraction = map.unresolved_fraction();
    if fraction > opts.max_unresolved {
        return Err(Error::Unresolved { fraction });
    }
    Ok(map)
}
