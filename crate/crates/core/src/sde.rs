//! Full nonlinear positive-P integration of the six-mode system.
//!
//! Each trajectory owns an independent ChaCha stream (seed, stream = index),
//! so ensembles are reproducible and independent of how trajectories are
//! scheduled across threads.
//!
//! Stepping is the semi-implicit midpoint scheme: the midpoint
//! `x̃ = xₙ + ½(f(x̃)Δt + B(x̃)ΔW)` is found by four fixed-point iterations and
//! `xₙ₊₁ = 2x̃ − xₙ`. It converges to the Stratonovich solution; the noise
//! coefficients depend only on the noiseless pump modes, so this coincides
//! with the Itô equations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{flow, index, SystemParams, COUPLINGS};
use crate::steady_state::trivial_steady_state;
use crate::{Mat12, Vec12, C64, DIM};

const MIDPOINT_ITERATIONS: usize = 4;
/// Discard fraction above which ensemble statistics are flagged.
pub const MAX_DISCARD_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Time discarded before statistics are accumulated.
    pub transient: f64,
    pub divergence_threshold: f64,
    /// Spacing of recorded samples.
    pub sample_interval: f64,
    /// Multiplies every noise coefficient; 0 gives the deterministic flow.
    pub noise_scale: f64,
    /// Starting point; `None` starts from the trivial steady state.
    pub initial: Option<Vec12>,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 110.0,
            n_traj: 1000,
            seed: 1,
            transient: 10.0,
            divergence_threshold: 1e6,
            sample_interval: 0.1,
            noise_scale: 1.0,
            initial: None,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSdeConfig(msg.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if !(self.transient >= 0.0 && self.transient < self.t_end) {
            return bad("transient must lie in [0, t_end)");
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence threshold must be positive");
        }
        if !(self.sample_interval > 0.0) {
            return bad("sample interval must be positive");
        }
        if !self.noise_scale.is_finite() {
            return bad("noise scale must be finite");
        }
        if let Some(x) = &self.initial {
            if x.iter().any(|z| !z.is_finite()) {
                return bad("initial state must be finite");
            }
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    fn sample_stride(&self) -> usize {
        self.steps(self.sample_interval).max(1)
    }
}

/// `B(x) ΔW` without forming B.
pub fn noise_increment(params: &SystemParams, x: &Vec12, dw: &[f64; DIM]) -> Vec12 {
    let mut out = Vec12::zeros();
    for c in COUPLINGS.iter() {
        let chi = params.chi(c.pump);
        for plus in [false, true] {
            let col = c.noise + 2 * plus as usize;
            let amp = (x[index(c.pump, plus)] * (0.5 * chi)).sqrt();
            let (re, im) = (dw[col], dw[col + 1]);
            out[index(c.signal, plus)] += amp * C64::new(re, im);
            out[index(c.idler, plus)] += amp * C64::new(re, -im);
        }
    }
    out
}

fn step(params: &SystemParams, x: &Vec12, dw: &[f64; DIM], dt: f64, noise_scale: f64) -> Vec12 {
    let mut mid = *x;
    for _ in 0..MIDPOINT_ITERATIONS {
        let drive = flow(params, &mid) * C64::from(dt) + noise_increment(params, &mid, dw) * C64::from(noise_scale);
        mid = x + drive * C64::from(0.5);
    }
    mid * C64::from(2.0) - x
}

fn escaped(x: &Vec12, threshold: f64) -> bool {
    x.iter().any(|z| !z.is_finite() || z.norm() > threshold)
}

/// Integrate trajectory `index`, calling `visit(t, x)` at every sample time
/// (including t = 0). Returns the divergence time, if any.
fn drive(params: &SystemParams, cfg: &SdeConfig, index: u64, mut visit: impl FnMut(usize, f64, &Vec12)) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let sqrt_dt = cfg.dt.sqrt();
    let stride = cfg.sample_stride();
    let n_steps = cfg.steps(cfg.t_end);

    let mut x = cfg.initial.unwrap_or_else(|| trivial_steady_state(params).point());
    visit(0, 0.0, &x);
    let mut dw = [0.0; DIM];
    for n in 1..=n_steps {
        for w in dw.iter_mut() {
            *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        x = step(params, &x, &dw, cfg.dt, cfg.noise_scale);
        let t = n as f64 * cfg.dt;
        if escaped(&x, cfg.divergence_threshold) {
            return Some(t);
        }
        if n % stride == 0 {
            visit(n, t, &x);
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec12>,
    /// Time at which the trajectory escaped, after which it was truncated.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// One stochastic trajectory, sampled every `sample_interval`.
pub fn integrate_trajectory(params: &SystemParams, config: &SdeConfig, seed_offset: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let diverged_at = drive(params, config, seed_offset, |_, t, x| {
        times.push(t);
        states.push(*x);
    });
    Ok(Trajectory {
        times,
        states,
        diverged_at,
    })
}

/// Ensemble statistics of the stationary fluctuations.
///
/// `covariance[(i, j)] = ⟨xᵢxⱼ⟩ − ⟨xᵢ⟩⟨xⱼ⟩` over trajectories and post-transient
/// samples, which in the positive-P representation is the normally ordered
/// covariance. Standard errors treat each trajectory's time average as one
/// independent sample (delta method for the mean subtraction); real and
/// imaginary parts carry separate errors.
#[derive(Clone, Debug)]
pub struct EnsembleMoments {
    pub means: Vec12,
    pub mean_stderr: Vec12,
    pub covariance: Mat12,
    pub stderr: Mat12,
    pub n_kept: usize,
    pub n_discarded: usize,
    pub samples_per_trajectory: usize,
    pub warnings: Vec<String>,
}

impl EnsembleMoments {
    pub fn discard_fraction(&self) -> f64 {
        self.n_discarded as f64 / (self.n_kept + self.n_discarded) as f64
    }

    pub fn unreliable(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// Entrywise deviation from `reference`, in standard errors.
    pub fn compare(&self, reference: &Mat12, entries: &[(usize, usize)]) -> Comparison {
        let z = |diff: f64, se: f64| {
            if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff.abs() / se
            } else {
                f64::INFINITY
            }
        };
        let mut worst = Comparison {
            max_sigma: 0.0,
            entry: (0, 0),
            measured: C64::new(0.0, 0.0),
            expected: C64::new(0.0, 0.0),
        };
        for &(r, c) in entries {
            let d = self.covariance[(r, c)] - reference[(r, c)];
            let se = self.stderr[(r, c)];
            let s = z(d.re, se.re).max(z(d.im, se.im));
            if s > worst.max_sigma || (s.is_nan() && !worst.max_sigma.is_nan()) {
                worst = Comparison {
                    max_sigma: s,
                    entry: (r, c),
                    measured: self.covariance[(r, c)],
                    expected: reference[(r, c)],
                };
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Comparison {
    pub max_sigma: f64,
    pub entry: (usize, usize),
    pub measured: C64,
    pub expected: C64,
}

/// Index pairs of the signal/idler sector (modes 3..6, both α and α⁺).
pub fn low_frequency_entries() -> Vec<(usize, usize)> {
    let idx: Vec<usize> = (index(3, false)..DIM).collect();
    idx.iter().flat_map(|&r| idx.iter().map(move |&c| (r, c))).collect()
}

pub fn all_entries() -> Vec<(usize, usize)> {
    (0..DIM).flat_map(|r| (0..DIM).map(move |c| (r, c))).collect()
}

struct TrajectoryMoments {
    mean: Vec12,
    second: Mat12,
}

fn trajectory_moments(params: &SystemParams, cfg: &SdeConfig, index: u64) -> Option<TrajectoryMoments> {
    let first = cfg.steps(cfg.transient);
    let mut sum = Vec12::zeros();
    let mut second = Mat12::zeros();
    let mut count = 0usize;
    let diverged = drive(params, cfg, index, |n, _, x| {
        if n >= first {
            sum += x;
            second += x * x.transpose();
            count += 1;
        }
    });
    if diverged.is_some() || count == 0 {
        return None;
    }
    let inv = C64::from(1.0 / count as f64);
    Some(TrajectoryMoments {
        mean: sum * inv,
        second: second * inv,
    })
}

/// Run `config.n_traj` trajectories and collect stationary moments.
pub fn ensemble_covariance(params: &SystemParams, config: &SdeConfig) -> Result<EnsembleMoments> {
    config.validate()?;
    let per_traj: Vec<Option<TrajectoryMoments>> = (0..config.n_traj as u64)
        .into_par_iter()
        .map(|k| trajectory_moments(params, config, k))
        .collect();
    let kept: Vec<&TrajectoryMoments> = per_traj.iter().flatten().collect();
    let n_kept = kept.len();
    let n_discarded = config.n_traj - n_kept;
    let samples_per_trajectory = (config.steps(config.t_end) - config.steps(config.transient)) / config.sample_stride() + 1;

    let mut warnings = Vec::new();
    let discard = n_discarded as f64 / config.n_traj as f64;
    if discard > MAX_DISCARD_FRACTION {
        warnings.push(format!(
            "{n_discarded} of {} trajectories diverged ({:.1}%); statistics unreliable",
            config.n_traj,
            100.0 * discard
        ));
    }
    if n_kept < 2 {
        warnings.push(format!(
            "only {n_kept} usable trajectories; standard errors undefined, statistics unreliable"
        ));
    }
    if n_kept == 0 {
        return Ok(EnsembleMoments {
            means: Vec12::from_element(C64::new(f64::NAN, f64::NAN)),
            mean_stderr: Vec12::from_element(C64::new(f64::NAN, f64::NAN)),
            covariance: Mat12::from_element(C64::new(f64::NAN, f64::NAN)),
            stderr: Mat12::from_element(C64::new(f64::NAN, f64::NAN)),
            n_kept,
            n_discarded,
            samples_per_trajectory,
            warnings,
        });
    }

    let n = n_kept as f64;
    let means = kept.iter().fold(Vec12::zeros(), |acc, m| acc + m.mean) / C64::from(n);
    let second = kept.iter().fold(Mat12::zeros(), |acc, m| acc + m.second) / C64::from(n);
    let outer = means * means.transpose();
    let covariance = second - outer;

    let split_se = |devs: &mut dyn Iterator<Item = C64>| -> C64 {
        if n_kept < 2 {
            return C64::new(f64::NAN, f64::NAN);
        }
        let (mut sr, mut si) = (0.0, 0.0);
        for d in devs {
            sr += d.re * d.re;
            si += d.im * d.im;
        }
        let denom = n * (n - 1.0);
        C64::new((sr / denom).sqrt(), (si / denom).sqrt())
    };
    let mean_stderr = Vec12::from_fn(|i, _| split_se(&mut kept.iter().map(|m| m.mean[i] - means[i])));
    // Delta-method influence of each trajectory on M − μμᵀ.
    let stderr = Mat12::from_fn(|r, c| {
        split_se(&mut kept.iter().map(|m| {
            (m.second[(r, c)] - second[(r, c)])
                - (m.mean[r] - means[r]) * means[c]
                - means[r] * (m.mean[c] - means[c])
        }))
    });

    Ok(EnsembleMoments {
        means,
        mean_stderr,
        covariance,
        stderr,
        n_kept,
        n_discarded,
        samples_per_trajectory,
        warnings,
    })
}

/// Trajectory estimate of a normally ordered fluctuation spectrum.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumEstimate {
    pub omega: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Periodogram estimate of `lᵀ S(ω) l` for the fluctuation `y = lᵀ (x − x̄)`,
/// averaged over trajectories: `⟨Y(ω) Y(−ω)⟩ / T` with `Y` the finite Fourier
/// transform over the post-transient window. `x̄` is the ensemble mean.
pub fn periodogram(params: &SystemParams, config: &SdeConfig, l: &Vec12, omegas: &[f64]) -> Result<Vec<SpectrumEstimate>> {
    config.validate()?;
    let moments = ensemble_covariance(params, &SdeConfig { n_traj: config.n_traj.min(64), ..config.clone() })?;
    let offset = (l.transpose() * moments.means)[(0, 0)];
    let first = config.steps(config.transient);
    let h = config.sample_stride() as f64 * config.dt;

    let per_traj: Vec<Option<Vec<f64>>> = (0..config.n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let mut fwd = vec![C64::new(0.0, 0.0); omegas.len()];
            let mut bwd = fwd.clone();
            let mut t0 = None;
            let mut last = 0.0;
            let diverged = drive(params, config, k, |n, t, x| {
                if n < first {
                    return;
                }
                let t0 = *t0.get_or_insert(t);
                last = t;
                let y = (l.transpose() * x)[(0, 0)] - offset;
                for (j, &w) in omegas.iter().enumerate() {
                    let ph = C64::from_polar(h, w * (t - t0));
                    fwd[j] += y * ph;
                    bwd[j] += y * ph.conj();
                }
            });
            if diverged.is_some() {
                return None;
            }
            let span = last - t0.unwrap_or(last) + h;
            Some(fwd.iter().zip(&bwd).map(|(a, b)| (a * b).re / span).collect())
        })
        .collect();
    let kept: Vec<&Vec<f64>> = per_traj.iter().flatten().collect();
    let n = kept.len() as f64;
    Ok(omegas
        .iter()
        .enumerate()
        .map(|(j, &omega)| {
            let mean = kept.iter().map(|v| v[j]).sum::<f64>() / n;
            let var = kept.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n * (n - 1.0));
            SpectrumEstimate {
                omega,
                value: mean,
                stderr: var.sqrt(),
            }
        })
        .collect())
}
