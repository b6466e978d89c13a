use std::io::Write;
use std::path::Path;

use opo_core::linearization::{diffusion_at, drift_at, finite_difference_discrepancy, noise_matrix};
use opo_core::model::basis_labels;
use opo_core::sde::{all_entries, low_frequency_entries};
use opo_core::spectra::integrated_spectrum;
use opo_core::{
    ensemble_covariance, fixed_frequency_trace, integrate_trajectory, lyapunov_covariance, standard_operators, sweep,
    threshold_pump, LinearizedModel, Mat12, SystemParams, Vec12, C64, DIM,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{header, significant, CsvSink};
use crate::{CliError, Command, Figure, RunConfig};

const JACOBIAN_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const DIFFUSION_TOL: f64 = 1e-12;
const SPECTRAL_TOL: f64 = 1e-4;
const SPECTRAL_CUTOFF: f64 = 200.0;
const SPECTRAL_INTERVALS: usize = 4000;
const SIGMA_TOL: f64 = 3.0;
const MAX_DISCARD: f64 = 0.05;

pub fn dispatch<W: Write>(cmd: &Command, cfg: &RunConfig, dir: &Path, out: &mut W) -> Result<(), CliError> {
    match cmd {
        Command::Threshold => threshold(cfg, out),
        Command::Figure { id } => figure(cfg, *id, dir, out),
        Command::Sweep => sweep_cmd(cfg, dir, out),
        Command::Validate => validate(cfg, out),
        Command::Matrices => matrices(cfg, dir, out),
        Command::Trajectory { index } => trajectory(cfg, *index, dir, out),
    }
}

pub fn threshold<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let ec = threshold_pump(&cfg.params.with_pump(0.0))?;
    writeln!(out, "epsilon_c = {}", significant(ec, 4))?;
    Ok(())
}

fn working_point(cfg: &RunConfig) -> Result<LinearizedModel, CliError> {
    let lin = LinearizedModel::at_trivial(&cfg.params)?;
    lin.ensure_stable()?;
    Ok(lin)
}

fn mhz(cfg: &RunConfig, omega: f64) -> Option<f64> {
    cfg.mhz_scale.map(|s| omega * s)
}

fn with_mhz(cfg: &RunConfig, mut names: Vec<String>) -> Vec<String> {
    if cfg.mhz_scale.is_some() {
        names.insert(2, "omega_mhz".into());
    }
    names
}

fn push_omega(cfg: &RunConfig, row: &mut Vec<f64>, theta: f64, omega: f64) {
    row.push(theta);
    row.push(omega);
    if let Some(m) = mhz(cfg, omega) {
        row.push(m);
    }
}

pub fn figure<W: Write>(cfg: &RunConfig, id: Figure, dir: &Path, out: &mut W) -> Result<(), CliError> {
    let lin = working_point(cfg)?;
    let thetas = cfg.theta.points();
    let name = format!("{}.csv", id.name());
    let path = match id {
        Figure::Fig2 | Figure::Fig3 => {
            let tr = fixed_frequency_trace(&lin, cfg.fig2_omega, &thetas)?;
            let cols = if id == Figure::Fig2 {
                header(&["theta", "omega", "V_O1", "V_O2", "V_O3", "V_O4", "coherent_O1_O3", "coherent_O2_O4"])
            } else {
                header(&["theta", "omega", "dB_O1", "dB_O2", "dB_O3", "dB_O4"])
            };
            let mut sink = CsvSink::create(dir, &name, cfg, &with_mhz(cfg, cols))?;
            for (k, &theta) in tr.thetas.iter().enumerate() {
                let mut row = Vec::with_capacity(9);
                push_omega(cfg, &mut row, theta, tr.omega);
                if id == Figure::Fig2 {
                    row.extend((0..4).map(|j| tr.values[j][k]));
                    row.push(tr.coherent_levels[0]);
                    row.push(tr.coherent_levels[1]);
                } else {
                    row.extend((0..4).map(|j| tr.decibels[j][k]));
                }
                sink.row(&row)?;
            }
            sink.finish()?
        }
        Figure::Fig5 | Figure::Fig6 => {
            let grid = sweep(&lin, &thetas, &cfg.omega.points())?;
            let (a, b) = if id == Figure::Fig5 { (0, 2) } else { (1, 3) };
            let ops = standard_operators();
            let (na, nb) = (ops[a].label.name(), ops[b].label.name());
            let cols = vec![
                "theta".to_string(),
                "omega".to_string(),
                format!("V_{na}"),
                format!("V_{nb}"),
                format!("V_{na}_crop"),
                format!("V_{nb}_crop"),
            ];
            let mut sink = CsvSink::create(dir, &name, cfg, &with_mhz(cfg, cols))?;
            for (ti, &theta) in grid.thetas.iter().enumerate() {
                for (wi, &omega) in grid.omegas.iter().enumerate() {
                    let (va, vb) = (grid.value(a, ti, wi), grid.value(b, ti, wi));
                    let mut row = Vec::with_capacity(7);
                    push_omega(cfg, &mut row, theta, omega);
                    row.extend([va, vb, va.min(cfg.crop), vb.min(cfg.crop)]);
                    sink.row(&row)?;
                }
            }
            sink.finish()?
        }
        Figure::Fig7 => {
            let tr = fixed_frequency_trace(&lin, cfg.fig7_omega, &thetas)?;
            let level: f64 = tr.coherent_levels.iter().sum();
            let cols = header(&["theta", "omega", "V_sum", "coherent_sum", "dB_sum"]);
            let mut sink = CsvSink::create(dir, &name, cfg, &with_mhz(cfg, cols))?;
            for (k, &theta) in tr.thetas.iter().enumerate() {
                let v: f64 = (0..4).map(|j| tr.values[j][k]).sum();
                let mut row = Vec::with_capacity(6);
                push_omega(cfg, &mut row, theta, tr.omega);
                row.extend([v, level, opo_core::cluster::to_decibels(v, level)]);
                sink.row(&row)?;
            }
            sink.finish()?
        }
    };
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

pub fn sweep_cmd<W: Write>(cfg: &RunConfig, dir: &Path, out: &mut W) -> Result<(), CliError> {
    let lin = working_point(cfg)?;
    let grid = sweep(&lin, &cfg.theta.points(), &cfg.omega.points())?;
    let ops = standard_operators();
    let mut cols = header(&["theta", "omega"]);
    cols.extend(ops.iter().map(|o| format!("V_{}", o.label.name())));
    cols.extend(ops.iter().map(|o| format!("dB_{}", o.label.name())));
    let mut sink = CsvSink::create(dir, "sweep.csv", cfg, &with_mhz(cfg, cols))?;
    for (ti, &theta) in grid.thetas.iter().enumerate() {
        for (wi, &omega) in grid.omegas.iter().enumerate() {
            let mut row = Vec::with_capacity(11);
            push_omega(cfg, &mut row, theta, omega);
            row.extend((0..4).map(|k| grid.value(k, ti, wi)));
            row.extend((0..4).map(|k| opo_core::cluster::to_decibels(grid.value(k, ti, wi), ops[k].coherent_level)));
            sink.row(&row)?;
        }
    }
    let path = sink.finish()?;
    writeln!(out, "wrote {}", path.display())?;
    for (op, m) in ops.iter().zip(&grid.minima) {
        writeln!(
            out,
            "min {}: V = {} ({} dB) at theta = {}, omega = {}",
            op.label.name(),
            m.value,
            opo_core::cluster::to_decibels(m.value, op.coherent_level),
            m.theta,
            m.omega
        )?;
    }
    let level: f64 = ops.iter().map(|o| o.coherent_level).sum();
    let s = grid.sum_minimum;
    writeln!(
        out,
        "min sum: V = {} ({} dB) at theta = {}, omega = {}",
        s.value,
        opo_core::cluster::to_decibels(s.value, level),
        s.theta,
        s.omega
    )?;
    Ok(())
}

fn random_draw(rng: &mut ChaCha8Rng) -> Result<(SystemParams, Vec12), CliError> {
    let gamma = std::array::from_fn(|_| rng.random_range(0.2..3.0));
    let p = SystemParams::new(
        rng.random_range(0.001..1.0),
        rng.random_range(0.001..1.0),
        C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        gamma,
    )?;
    let x = Vec12::from_fn(|_, _| C64::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)));
    Ok((p, x))
}

struct Report<'a, W: Write> {
    out: &'a mut W,
    failures: Vec<String>,
}

impl<W: Write> Report<'_, W> {
    fn check(&mut self, name: &str, ok: bool, detail: String) -> Result<(), CliError> {
        writeln!(self.out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
        if !ok {
            self.failures.push(name.to_string());
        }
        Ok(())
    }

    fn line(&mut self, tag: &str, text: String) -> Result<(), CliError> {
        writeln!(self.out, "{tag} {text}")?;
        Ok(())
    }
}

pub fn validate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let mut report = Report {
        out,
        failures: Vec::new(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sde.seed);
    let mut worst_fd = 0.0f64;
    let mut worst_bbt = 0.0f64;
    for draw in 0..cfg.validate.jacobian_draws {
        let (p, x) = random_draw(&mut rng)?;
        let mut a = drift_at(&p, &x);
        if draw == 0 {
            a[(4, 7)] += C64::from(cfg.validate.corrupt_drift);
        }
        worst_fd = worst_fd.max(finite_difference_discrepancy(&p, &x, &a, FD_STEP));
        let b = noise_matrix(&p, &x);
        let d = diffusion_at(&p, &x);
        worst_bbt = worst_bbt.max((b * b.transpose() - d).camax() / (1.0 + d.camax()));
    }
    let n = cfg.validate.jacobian_draws;
    report.check(
        "jacobian",
        worst_fd < JACOBIAN_TOL,
        format!("max relative error {worst_fd:e} over {n} draws (tol {JACOBIAN_TOL:e})"),
    )?;
    report.check(
        "diffusion",
        worst_bbt < DIFFUSION_TOL,
        format!("max |B*B^T - D| {worst_bbt:e} over {n} draws (tol {DIFFUSION_TOL:e})"),
    )?;

    let ec = cfg
        .critical_pump
        .ok_or_else(|| CliError::Usage("validate needs equal chi and gamma".into()))?;
    let params = cfg.params.with_pump(cfg.validate.fraction * ec);
    let lin = LinearizedModel::at_trivial(&params)?;
    lin.ensure_stable()?;
    let cov = lyapunov_covariance(&lin.drift, &lin.diffusion)?;
    let integrated = integrated_spectrum(&lin, SPECTRAL_CUTOFF, SPECTRAL_INTERVALS)?;
    let rel = (integrated - cov).camax() / cov.camax().max(f64::MIN_POSITIVE);
    report.check(
        "lyapunov",
        rel < SPECTRAL_TOL,
        format!(
            "integrated spectrum vs Lyapunov at {} eps_c, relative error {rel:e} (tol {SPECTRAL_TOL:e})",
            cfg.validate.fraction
        ),
    )?;

    let m = ensemble_covariance(&params, &cfg.sde)?;
    report.line(
        "INFO",
        format!(
            "sde: {} trajectories kept, {} discarded, {} samples each",
            m.n_kept, m.n_discarded, m.samples_per_trajectory
        ),
    )?;
    if m.unreliable() {
        for w in &m.warnings {
            report.line("WARN", format!("statistics unreliable: {w}"))?;
        }
        report.line("SKIP", "sde-covariance: ensemble statistics unreliable".into())?;
    } else {
        let low = m.compare(&cov, &low_frequency_entries());
        report.check(
            "sde-covariance",
            low.max_sigma < SIGMA_TOL,
            format!(
                "signal/idler sector max deviation {:.3} SE at {:?} ({} vs {}) (tol {SIGMA_TOL})",
                low.max_sigma, low.entry, low.measured, low.expected
            ),
        )?;
        let all = m.compare(&cov, &all_entries());
        report.line(
            "INFO",
            format!(
                "all entries max deviation {:.3} SE at {:?} ({} vs {})",
                all.max_sigma, all.entry, all.measured, all.expected
            ),
        )?;
    }
    let frac = m.discard_fraction();
    report.check(
        "discard-rate",
        frac <= MAX_DISCARD,
        format!("{:.2}% of trajectories diverged (limit {}%)", 100.0 * frac, 100.0 * MAX_DISCARD),
    )?;

    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(report.failures.join(", ")))
    }
}

fn write_matrix(cfg: &RunConfig, dir: &Path, name: &str, m: &Mat12) -> Result<std::path::PathBuf, CliError> {
    let labels = basis_labels();
    let mut sink = CsvSink::create(dir, name, cfg, &header(&["row", "col", "re", "im"]))?;
    for r in 0..DIM {
        for c in 0..DIM {
            let z = m[(r, c)];
            sink.text_row(&[labels[r].clone(), labels[c].clone(), z.re.to_string(), z.im.to_string()])?;
        }
    }
    sink.finish()
}

pub fn matrices<W: Write>(cfg: &RunConfig, dir: &Path, out: &mut W) -> Result<(), CliError> {
    let lin = LinearizedModel::at_trivial(&cfg.params)?;
    for (name, m) in [("drift.csv", &lin.drift), ("diffusion.csv", &lin.diffusion)] {
        writeln!(out, "wrote {}", write_matrix(cfg, dir, name, m)?.display())?;
    }
    let mut sink = CsvSink::create(dir, "eigenvalues.csv", cfg, &header(&["index", "re", "im"]))?;
    for (k, e) in lin.eigenvalues.iter().enumerate() {
        sink.row(&[k as f64, e.re, e.im])?;
    }
    writeln!(out, "wrote {}", sink.finish()?.display())?;
    writeln!(out, "min Re eigenvalue = {}", lin.min_real_eigenvalue())?;
    lin.ensure_stable()?;
    let cov = lyapunov_covariance(&lin.drift, &lin.diffusion)?;
    writeln!(out, "wrote {}", write_matrix(cfg, dir, "lyapunov.csv", &cov)?.display())?;
    Ok(())
}

pub fn trajectory<W: Write>(cfg: &RunConfig, index: u64, dir: &Path, out: &mut W) -> Result<(), CliError> {
    let tr = integrate_trajectory(&cfg.params, &cfg.sde, index)?;
    let mut cols = header(&["t"]);
    for l in basis_labels() {
        cols.push(format!("{l}_re"));
        cols.push(format!("{l}_im"));
    }
    let mut sink = CsvSink::create(dir, &format!("trajectory_{index}.csv"), cfg, &cols)?;
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let mut row = Vec::with_capacity(1 + 2 * DIM);
        row.push(*t);
        for z in x.iter() {
            row.push(z.re);
            row.push(z.im);
        }
        sink.row(&row)?;
    }
    writeln!(out, "wrote {}", sink.finish()?.display())?;
    if let Some(t) = tr.diverged_at {
        writeln!(out, "WARN trajectory diverged at t = {t}")?;
    }
    Ok(())
}
