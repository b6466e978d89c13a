//! Line-oriented `key = value` run configuration.
//!
//! `#` starts a comment. Unknown keys are rejected. Every key is optional;
//! omitted keys take the values of the symmetric below-threshold operating
//! point (γ = 1, χ = 0.01, ε = 0.94 ε_c).
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `chi` | sets both `chi1` and `chi2` | 0.01 |
//! | `chi1`, `chi2` | nonlinearities | 0.01 |
//! | `gamma` | one loss rate, or six comma-separated | 1 |
//! | `eps1`, `eps2` | pump amplitudes, real or complex (`58+1.5i`) | from `pump_fraction` |
//! | `pump_fraction` | ε = fraction · ε_c (symmetric regime only) | 0.94 |
//! | `theta_min`, `theta_max`, `theta_count` | phase grid; values accept a `pi` suffix | -0.5pi, 1.5pi, 257 |
//! | `omega_min`, `omega_max`, `omega_count` | frequency grid, units of γ | 0.01, 2, 200 |
//! | `fig2_omega`, `fig7_omega` | trace frequencies | 0.35, 0.23 |
//! | `crop` | display crop for surface data | 8 |
//! | `mhz_scale` | loss rate in MHz, adds an `omega_mhz` column | unset |
//! | `sde_dt`, `sde_t_end`, `sde_transient` | integrator timing | 1e-3, 110, 10 |
//! | `sde_n_traj`, `sde_seed` | ensemble size and seed | 1000, 1 |
//! | `sde_divergence`, `sde_sample_interval` | escape cap, sample spacing | 1e6, 0.1 |
//! | `validate_fraction` | ε / ε_c for the validation run | 0.5 |
//! | `validate_jacobian_draws` | random draws for the Jacobian check | 100 |
//! | `validate_corrupt_drift` | added to one analytic drift entry (fault injection) | 0 |

use std::f64::consts::PI;
use std::str::FromStr;

use opo_core::{threshold_pump, SdeConfig, SystemParams, C64};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        opo_core::cluster::linspace(self.min, self.max, self.count)
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        if self.count == 0 || !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(CliError::Usage(format!(
                "{name} grid must satisfy min <= max with count >= 1 (got {}..{} x {})",
                self.min, self.max, self.count
            )));
        }
        if self.count > 1 && self.max == self.min {
            return Err(CliError::Usage(format!("{name} grid has zero width but {} points", self.count)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    pub fraction: f64,
    pub jacobian_draws: usize,
    pub corrupt_drift: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: SystemParams,
    /// ε_c when the parameters are symmetric.
    pub critical_pump: Option<f64>,
    pub theta: GridSpec,
    pub omega: GridSpec,
    pub fig2_omega: f64,
    pub fig7_omega: f64,
    pub crop: f64,
    pub mhz_scale: Option<f64>,
    pub sde: SdeConfig,
    pub validate: ValidateConfig,
}

fn parse_real(key: &str, v: &str) -> Result<f64, CliError> {
    let bad = || CliError::Usage(format!("{key}: cannot parse '{v}' as a number"));
    let v = v.trim();
    if let Some(head) = v.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*');
        let factor = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().map_err(|_| bad())?,
        };
        return Ok(factor * PI);
    }
    v.parse::<f64>().map_err(|_| bad())
}

fn parse_count(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| CliError::Usage(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_complex(key: &str, v: &str) -> Result<C64, CliError> {
    let v = v.trim();
    if let Ok(x) = v.parse::<f64>() {
        return Ok(C64::new(x, 0.0));
    }
    C64::from_str(v).map_err(|_| CliError::Usage(format!("{key}: cannot parse '{v}' as a complex number")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut chi1 = 0.01;
        let mut chi2 = 0.01;
        let mut gamma = [1.0; 6];
        let mut eps1 = None;
        let mut eps2 = None;
        let mut fraction = None;
        let mut theta = GridSpec {
            min: -PI / 2.0,
            max: 1.5 * PI,
            count: 257,
        };
        let mut omega = GridSpec {
            min: 0.01,
            max: 2.0,
            count: 200,
        };
        let mut fig2_omega = 0.35;
        let mut fig7_omega = 0.23;
        let mut crop = 8.0;
        let mut mhz_scale = None;
        let mut sde = SdeConfig::default();
        let mut validate = ValidateConfig {
            fraction: 0.5,
            jacobian_draws: 100,
            corrupt_drift: 0.0,
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Usage(format!("line {}: expected 'key = value'", lineno + 1)))?;
            match key {
                "chi" => {
                    chi1 = parse_real(key, value)?;
                    chi2 = chi1;
                }
                "chi1" => chi1 = parse_real(key, value)?,
                "chi2" => chi2 = parse_real(key, value)?,
                "gamma" => {
                    let parts: Vec<f64> = value.split(',').map(|p| parse_real(key, p)).collect::<Result<_, _>>()?;
                    gamma = match parts.as_slice() {
                        [g] => [*g; 6],
                        [a, b, c, d, e, f] => [*a, *b, *c, *d, *e, *f],
                        _ => return Err(CliError::Usage("gamma: expected 1 or 6 values".into())),
                    };
                }
                "eps1" => eps1 = Some(parse_complex(key, value)?),
                "eps2" => eps2 = Some(parse_complex(key, value)?),
                "pump_fraction" => fraction = Some(parse_real(key, value)?),
                "theta_min" => theta.min = parse_real(key, value)?,
                "theta_max" => theta.max = parse_real(key, value)?,
                "theta_count" => theta.count = parse_count(key, value)?,
                "omega_min" => omega.min = parse_real(key, value)?,
                "omega_max" => omega.max = parse_real(key, value)?,
                "omega_count" => omega.count = parse_count(key, value)?,
                "fig2_omega" => fig2_omega = parse_real(key, value)?,
                "fig7_omega" => fig7_omega = parse_real(key, value)?,
                "crop" => crop = parse_real(key, value)?,
                "mhz_scale" => mhz_scale = Some(parse_real(key, value)?),
                "sde_dt" => sde.dt = parse_real(key, value)?,
                "sde_t_end" => sde.t_end = parse_real(key, value)?,
                "sde_transient" => sde.transient = parse_real(key, value)?,
                "sde_n_traj" => sde.n_traj = parse_count(key, value)?,
                "sde_seed" => {
                    sde.seed = value
                        .parse()
                        .map_err(|_| CliError::Usage(format!("sde_seed: expected an integer, got '{value}'")))?
                }
                "sde_divergence" => sde.divergence_threshold = parse_real(key, value)?,
                "sde_sample_interval" => sde.sample_interval = parse_real(key, value)?,
                "validate_fraction" => validate.fraction = parse_real(key, value)?,
                "validate_jacobian_draws" => validate.jacobian_draws = parse_count(key, value)?,
                "validate_corrupt_drift" => validate.corrupt_drift = parse_real(key, value)?,
                other => return Err(CliError::Usage(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }

        theta.check("theta")?;
        omega.check("omega")?;
        sde.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(s) = mhz_scale {
            if !(s > 0.0) {
                return Err(CliError::Usage("mhz_scale must be positive".into()));
            }
        }

        let shape = SystemParams::new(chi1, chi2, C64::new(0.0, 0.0), C64::new(0.0, 0.0), gamma)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let critical_pump = if shape.is_symmetric() {
            Some(threshold_pump(&shape)?)
        } else {
            None
        };
        let (eps1, eps2) = match (eps1, eps2, fraction) {
            (Some(_), _, Some(_)) | (_, Some(_), Some(_)) => {
                return Err(CliError::Usage("give either eps1/eps2 or pump_fraction, not both".into()))
            }
            (Some(a), Some(b), None) => (a, b),
            (Some(a), None, None) | (None, Some(a), None) => (a, a),
            (None, None, f) => {
                let ec = critical_pump.ok_or_else(|| {
                    CliError::Usage("pump_fraction needs equal chi and gamma; give eps1/eps2 instead".into())
                })?;
                let e = C64::new(f.unwrap_or(0.94) * ec, 0.0);
                (e, e)
            }
        };
        let params = SystemParams::new(chi1, chi2, eps1, eps2, gamma).map_err(|e| CliError::Usage(e.to_string()))?;

        Ok(Self {
            params,
            critical_pump,
            theta,
            omega,
            fig2_omega,
            fig7_omega,
            crop,
            mhz_scale,
            sde,
            validate,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// One-line description of every parameter, for CSV comment headers.
    pub fn describe(&self) -> String {
        let p = &self.params;
        let g: Vec<String> = p.gamma.iter().map(|g| g.to_string()).collect();
        let mut s = format!(
            "chi1={} chi2={} eps1={} eps2={} gamma={} theta=[{},{};{}] omega=[{},{};{}]",
            p.chi1,
            p.chi2,
            p.eps1,
            p.eps2,
            g.join(","),
            self.theta.min,
            self.theta.max,
            self.theta.count,
            self.omega.min,
            self.omega.max,
            self.omega.count,
        );
        if let Some(ec) = self.critical_pump {
            s.push_str(&format!(" eps_c={ec}"));
        }
        if let Some(m) = self.mhz_scale {
            s.push_str(&format!(" mhz_scale={m}"));
        }
        s.push_str(&format!(
            " sde=[dt={},t_end={},transient={},n_traj={},seed={}]",
            self.sde.dt, self.sde.t_end, self.sde.transient, self.sde.n_traj, self.sde.seed
        ));
        s
    }
}
