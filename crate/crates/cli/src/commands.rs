use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use macrospin::analysis::{
    basin_map, feigenbaum_estimate, fourier_spectrum, locate_doublings, stroboscopic_scan,
    BasinOptions, ControlParam, FeigenbaumOptions, InitialPolicy, LogisticMap, ScanOptions,
};
use macrospin::classical::{integrate_partial, SamplingPolicy};
use macrospin::lyapunov::{lyapunov_spectrum, mle_phase_diagram, LyapunovOptions};
use macrospin::quantum::{
    evolve_quantum, initial_product_state, quantum_classical_error, write_error_csv,
    write_observables_csv, QuantumOptions,
};
use macrospin::symmetry::{
    eigenvalues_2x2, glide_commutator_norm, schur_weyl_decomposition, sp_hamiltonian,
    write_decomposition_csv, SingleParticleModel, FAMILY_TRUNCATION,
};

use crate::config::{Axis, Counts, Floats, Init, Range, Resolver};
use crate::error::CliError;

fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Validation(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes the config comment line followed by `body` to the run's output.
fn emit<F>(path: Option<&Path>, config: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let mut w = open(path)?;
    writeln!(w, "{config}")?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Validation(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

pub fn classical(
    r: &mut Resolver,
    init: Option<Init>,
    t_end: Option<f64>,
    every: Option<usize>,
) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let t_end = positive("t_end", r.get("t_end", t_end, 100.0)?)?;
    let every = r.get("every", every, 10)?;
    let config = r.finish()?;
    let record = match every {
        0 => SamplingPolicy::Stroboscopic,
        n => SamplingPolicy::Dense { every: n },
    };
    let (traj, err) = integrate_partial(init.vector(), &r.params, r.spec, t_end, record)?;
    emit(r.output.as_deref(), &config, |w| traj.write_csv(w))?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn snapshot_path(output: &Path, t: f64) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    output.with_file_name(format!("{stem}_rho_t{t}.csv"))
}

pub fn quantum(
    r: &mut Resolver,
    init: Option<Init>,
    t_end: Option<f64>,
    every: Option<usize>,
    snapshots: Option<Floats>,
) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let t_end = positive("t_end", r.get("t_end", t_end, 10.0)?)?;
    let every = r.get("every", every, 100)?;
    let Floats(snapshots) = r.get("snapshots", snapshots, Floats(Vec::new()))?;
    let config = r.finish()?;
    if every == 0 {
        return Err(CliError::Validation("every must be at least 1".into()));
    }
    if !snapshots.is_empty() && r.output.is_none() {
        return Err(CliError::Validation(
            "snapshots are written next to --output; give an output path".into(),
        ));
    }
    if let Some(t) = snapshots.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(CliError::Validation(format!(
            "snapshot time {t} is outside [0, {t_end}]"
        )));
    }
    let rho0 = initial_product_state(r.params.n_spins, init.angle)?;
    let opts = QuantumOptions {
        snapshot_times: snapshots,
        ..QuantumOptions::dense(every)
    };
    eprintln!("evolving N = {} to t = {t_end}", r.params.n_spins);
    let run = evolve_quantum(&rho0, &r.params, r.spec, t_end, &opts)?;
    if run.dt != r.spec.dt {
        eprintln!("trace drift: step halved to {}", run.dt);
    }
    emit(r.output.as_deref(), &config, |w| {
        write_observables_csv(&run.observables, w)
    })?;
    if let Some(out) = r.output.as_deref() {
        for snap in &run.snapshots {
            let path = snapshot_path(out, snap.time);
            emit(Some(&path), &config, |w| snap.rho.write_snapshot_csv(w))?;
            eprintln!("snapshot t = {} -> {}", snap.time, path.display());
        }
    }
    Ok(())
}

pub fn compare(
    r: &mut Resolver,
    init: Option<Init>,
    t_end: Option<f64>,
    every: Option<usize>,
    n_list: Option<Counts>,
) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let t_end = positive("t_end", r.get("t_end", t_end, 10.0)?)?;
    let every = r.get("every", every, 100)?;
    let Counts(n_list) = r.get("n_list", n_list, Counts(vec![10, 20, 40]))?;
    let config = r.finish()?;
    eprintln!("comparing N = {n_list:?} against the mean-field trajectory");
    let series = quantum_classical_error(&r.params, init.angle, &n_list, r.spec, t_end, every)?;
    emit(r.output.as_deref(), &config, |w| {
        write_error_csv(&series, w)
    })
}

pub struct LyapunovFlags {
    pub t_total: Option<f64>,
    pub transient: Option<f64>,
    pub renorm: Option<f64>,
}

impl LyapunovFlags {
    fn resolve(self, r: &mut Resolver) -> Result<LyapunovOptions, CliError> {
        let d = LyapunovOptions::default();
        Ok(LyapunovOptions {
            t_total: r.get("t_total", self.t_total, d.t_total)?,
            transient: r.get("transient", self.transient, d.transient)?,
            renorm_interval: r.get("renorm", self.renorm, d.renorm_interval)?,
        })
    }
}

pub fn mle(r: &mut Resolver, init: Option<Init>, flags: LyapunovFlags) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let opts = flags.resolve(r)?;
    let config = r.finish()?;
    let res = lyapunov_spectrum(init.vector(), &r.params, r.spec, opts)?;
    let [l1, l2, l3] = res.exponents;
    println!("lambda_max {l1:.6}");
    println!("exponents {l1:.6} {l2:.6} {l3:.6}");
    println!("class {:?}", res.classification());
    if let Some(out) = r.output.as_deref() {
        emit(Some(out), &config, |w| {
            writeln!(w, "t,lambda_max")?;
            for (k, v) in res.converged_series.iter().enumerate() {
                let t = opts.transient + (k + 1) as f64 * opts.renorm_interval;
                writeln!(w, "{t},{v}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn mle_map(
    r: &mut Resolver,
    init: Option<Init>,
    gammas: Option<Axis>,
    kappas: Option<Axis>,
    flags: LyapunovFlags,
    format: Option<String>,
) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let gammas = r.get(
        "gammas",
        gammas,
        Axis {
            lo: 0.0,
            hi: 10.0,
            n: 11,
        },
    )?;
    let kappas = r.get(
        "kappas",
        kappas,
        Axis {
            lo: 0.0,
            hi: 6.0,
            n: 7,
        },
    )?;
    let opts = flags.resolve(r)?;
    let format = r.format(format, &["csv", "grid"], "csv")?;
    let config = r.finish()?;
    eprintln!("MLE map: {} x {} cells", gammas.n, kappas.n);
    let map = mle_phase_diagram(
        &gammas.values(),
        &kappas.values(),
        &r.params,
        init.vector(),
        r.spec,
        opts,
    )?;
    for f in &map.failures {
        eprintln!(
            "cell gamma = {} kappa = {} failed: {}",
            f.gamma, f.kappa, f.message
        );
    }
    emit(r.output.as_deref(), &config, |w| match format.as_str() {
        "grid" => map.write_grid(w),
        _ => map.write_csv(w),
    })
}

pub struct ScanFlags {
    pub control: Option<String>,
    pub axis: Option<Axis>,
    pub policy: Option<String>,
    pub init: Option<Init>,
    pub global_count: Option<usize>,
    pub transient: Option<usize>,
    pub samples: Option<usize>,
}

pub fn bifurcation(r: &mut Resolver, f: ScanFlags) -> Result<(), CliError> {
    let control = match r.get("control", f.control, "kappa".to_string())?.as_str() {
        "kappa" => ControlParam::Kappa,
        "gamma" => ControlParam::Gamma,
        other => {
            return Err(CliError::Validation(format!(
                "control '{other}' must be kappa or gamma"
            )))
        }
    };
    let axis = r.get(
        "axis",
        f.axis,
        Axis {
            lo: 0.0,
            hi: 6.0,
            n: 61,
        },
    )?;
    let policy_name = r.get("policy", f.policy, "fixed".to_string())?;
    let init = r.get("init", f.init, Init::x())?;
    let global_count = r.get("global_count", f.global_count, 500)?;
    let d = ScanOptions::default();
    let opts = ScanOptions {
        transient: r.get("transient", f.transient, d.transient)?,
        samples: r.get("samples", f.samples, d.samples)?,
        spec: r.spec,
    };
    let config = r.finish()?;
    let policy = match policy_name.as_str() {
        "fixed" => InitialPolicy::Fixed(init.angle),
        "global" if global_count > 0 => InitialPolicy::global(global_count),
        "global" => {
            return Err(CliError::Validation(
                "global_count must be at least 1".into(),
            ))
        }
        other => {
            return Err(CliError::Validation(format!(
                "policy '{other}' must be fixed or global"
            )))
        }
    };
    eprintln!(
        "scanning {} over {} values ({} policy)",
        control.name(),
        axis.n,
        policy.name()
    );
    let scan = stroboscopic_scan(control, &axis.values(), &r.params, policy, opts)?;
    for fail in &scan.failures {
        eprintln!(
            "cell {} = {}, initial {} failed: {}",
            control.name(),
            scan.values[fail.control_index],
            fail.initial_id,
            fail.reason
        );
    }
    emit(r.output.as_deref(), &config, |w| scan.write_csv(w))
}

pub struct BasinFlags {
    pub n_theta: Option<usize>,
    pub n_phi: Option<usize>,
    pub theta_range: Option<Range>,
    pub phi_range: Option<Range>,
    pub seeds: Option<usize>,
    pub seed_periods: Option<usize>,
}

pub fn basin(r: &mut Resolver, f: BasinFlags) -> Result<(), CliError> {
    let d = BasinOptions::default();
    let opts = BasinOptions {
        n_theta: r.get("n_theta", f.n_theta, d.n_theta)?,
        n_phi: r.get("n_phi", f.n_phi, d.n_phi)?,
        theta_range: r.get("theta_range", f.theta_range, Range(d.theta_range))?.0,
        phi_range: r.get("phi_range", f.phi_range, Range(d.phi_range))?.0,
        seeds: r.get("seeds", f.seeds, d.seeds)?,
        seed_periods: r.get("seed_periods", f.seed_periods, d.seed_periods)?,
        spec: r.spec,
        ..d
    };
    let config = r.finish()?;
    opts.validate()?;
    eprintln!("basin map: {} x {} cells", opts.n_theta, opts.n_phi);
    let map = basin_map(&r.params, &opts)?;
    for (i, a) in map.attractors.iter().enumerate() {
        let m = a.orbit[0];
        eprintln!(
            "attractor {i}: period {}, point ({:.4}, {:.4}, {:.4})",
            a.period(),
            m.x,
            m.y,
            m.z
        );
    }
    eprintln!("unresolved fraction {:.4}", map.unresolved_fraction());
    emit(r.output.as_deref(), &config, |w| map.write_csv(w))
}

pub fn spectrum(
    r: &mut Resolver,
    init: Option<Init>,
    window: Option<Range>,
    samples_per_period: Option<usize>,
) -> Result<(), CliError> {
    let init = r.get("init", init, Init::x())?;
    let Range(window) = r.get("window", window, Range([150.0, 200.0]))?;
    let sps = r.get("samples_per_period", samples_per_period, 1)?;
    let config = r.finish()?;
    let steps = r.spec.steps_per_period()?;
    if sps == 0 || steps % sps != 0 {
        return Err(CliError::Validation(format!(
            "samples_per_period must divide the {steps} steps per period, got {sps}"
        )));
    }
    let record = match sps {
        1 => SamplingPolicy::Stroboscopic,
        n => SamplingPolicy::Dense { every: steps / n },
    };
    let (traj, err) = integrate_partial(init.vector(), &r.params, r.spec, window[1], record)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let mx: Vec<f64> = traj.states.iter().map(|m| m.x).collect();
    let report = fourier_spectrum(&traj.times, &mx, r.params.period(), window, sps)?;
    match (report.dominant_frequency, report.dominant_period) {
        (Some(f), Some(p)) => eprintln!("dominant frequency {f} (period {p})"),
        (Some(f), None) => eprintln!("dominant frequency {f}"),
        _ => eprintln!("no dominant frequency"),
    }
    eprintln!(
        "peak ratio {:.3}, isolation {:.3}",
        report.peak_ratio, report.isolation
    );
    emit(r.output.as_deref(), &config, |w| report.write_csv(w))
}

pub fn feigenbaum(
    r: &mut Resolver,
    init: Option<Init>,
    bracket: Option<Range>,
    max_doublings: Option<usize>,
    resolution: Option<f64>,
    logistic: bool,
) -> Result<(), CliError> {
    let default_bracket = if logistic { [3.4, 3.57] } else { [5.0, 5.2] };
    let logistic = r.get("logistic", logistic.then_some(true), false)?;
    let init = r.get("init", init, Init::x())?;
    let Range(bracket) = r.get("bracket", bracket, Range(default_bracket))?;
    let max_doublings = r.get("max_doublings", max_doublings, 6)?;
    let opts = FeigenbaumOptions {
        resolution: positive(
            "resolution",
            r.get(
                "resolution",
                resolution,
                FeigenbaumOptions::default().resolution,
            )?,
        )?,
        ..FeigenbaumOptions::default()
    };
    let config = r.finish()?;
    eprintln!(
        "locating up to {max_doublings} doublings in [{}, {}]",
        bracket[0], bracket[1]
    );
    let est = if logistic {
        locate_doublings(&LogisticMap, bracket, max_doublings, &opts)?
    } else {
        feigenbaum_estimate(
            &r.params,
            r.params.gamma,
            bracket,
            max_doublings,
            init.angle,
            r.spec,
            &opts,
        )?
    };
    eprintln!(
        "delta {:.4} from {} doublings",
        est.delta_estimate,
        est.bifurcation_points.len()
    );
    let mut json = serde_json::to_value(&est).map_err(|e| CliError::Numerical(e.to_string()))?;
    json["config"] = serde_json::Value::String(config.trim_start_matches("# config: ").to_string());
    let mut w = open(r.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &json).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

const SYMMETRY_TOL: f64 = 1e-12;
const SYMMETRY_SAMPLES: usize = 200;

pub fn symmetry_check(
    r: &mut Resolver,
    members: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let members = r.get("members", members, 50)?;
    let seed = seed.unwrap_or(0);
    r.record("seed", seed);
    let config = r.finish()?;
    let (gamma, omega) = (r.params.gamma, r.params.omega);
    let model = SingleParticleModel::driven(gamma, omega);
    let period = model.period();
    let times: Vec<f64> = (0..SYMMETRY_SAMPLES)
        .map(|k| period * k as f64 / SYMMETRY_SAMPLES as f64)
        .collect();
    let scale = gamma.max(1.0);

    let mut checks: Vec<(String, bool)> = Vec::new();
    let worst = times
        .iter()
        .map(|&t| glide_commutator_norm(t, &model))
        .fold(0.0, f64::max);
    checks.push((
        format!("driven model commutes with the glide (max {worst:.2e})"),
        worst < SYMMETRY_TOL * scale,
    ));

    let worst = times
        .iter()
        .map(|&t| {
            let [lo, hi] = eigenvalues_2x2(&sp_hamiltonian(t, &model));
            let e = (gamma * (omega * t / 2.0).sin()).abs();
            (lo + e).abs().max((hi - e).abs())
        })
        .fold(0.0, f64::max);
    checks.push((
        format!("spectrum is +-Gamma sin(omega t/2) (max dev {worst:.2e})"),
        worst < SYMMETRY_TOL * scale,
    ));

    let worst = (0..4)
        .map(|k| model.gap(k as f64 * period))
        .fold(0.0, f64::max);
    checks.push((
        format!("gap closes at whole periods (max {worst:.2e})"),
        worst < SYMMETRY_TOL * scale,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..members {
        let len = rng.gen_range(1..=FAMILY_TRUNCATION);
        let coeffs: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let member = SingleParticleModel::family(omega, coeffs)?;
        for &t in &times {
            worst = worst.max(glide_commutator_norm(t, &member));
        }
    }
    checks.push((
        format!("{members} random family members commute with the glide (max {worst:.2e})"),
        worst < SYMMETRY_TOL,
    ));

    let eps = 1e-2;
    let biased = model.clone().with_z_bias(eps);
    let broken = times
        .iter()
        .map(|&t| glide_commutator_norm(t, &biased))
        .fold(0.0, f64::max);
    checks.push((
        format!("z bias {eps} breaks the glide (norm {broken:.2e})"),
        broken > eps,
    ));

    let mut sums_ok = true;
    for n in 1..=20usize {
        let total: u128 = schur_weyl_decomposition(n)?
            .iter()
            .map(|s| s.subtotal())
            .sum();
        sums_ok &= total == 1u128 << n;
    }
    checks.push((
        "Schur-Weyl sectors fill 2^N for N = 1..20".to_string(),
        sums_ok,
    ));

    let failed = checks.iter().filter(|(_, ok)| !ok).count();
    let mut w = open(r.output.as_deref())?;
    writeln!(w, "{config}")?;
    for (name, ok) in &checks {
        writeln!(w, "{} {name}", if *ok { "PASS" } else { "FAIL" })?;
    }
    w.flush()?;
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} symmetry check(s) failed"
        )));
    }
    Ok(())
}

pub fn schur_weyl(r: &mut Resolver, n: Option<usize>) -> Result<(), CliError> {
    let n = r.get("n", n, 6)?;
    let config = r.finish()?;
    let sectors = schur_weyl_decomposition(n)?;
    let total: u128 = sectors.iter().map(|s| s.subtotal()).sum();
    eprintln!("total dimension {total} = 2^{n}");
    emit(r.output.as_deref(), &config, |w| {
        write_decomposition_csv(&sectors, w)
    })
}
