//! Physical parameters of the cavity, the three-wave coupling table and the
//! deterministic part of the positive-P flow.

use crate::error::{Error, Result};
use crate::linearization::{build_drift, stability_eigenvalues};
use crate::steady_state::trivial_steady_state;
use crate::{Vec12, C64, NMODES};

/// Position of mode `mode` (1-based, as in the physics labelling) in the
/// doubled phase-space vector. `plus` selects the conjugate-partner field αᵢ⁺.
#[inline]
pub const fn index(mode: usize, plus: bool) -> usize {
    2 * (mode - 1) + plus as usize
}

/// Labels of the ordered basis, e.g. `"a3"` and `"a3+"`.
pub fn basis_labels() -> [String; crate::DIM] {
    std::array::from_fn(|k| {
        let mode = k / 2 + 1;
        if k % 2 == 0 {
            format!("a{mode}")
        } else {
            format!("a{mode}+")
        }
    })
}

/// Pump amplitudes, nonlinearities and per-mode loss rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    pub chi1: f64,
    pub chi2: f64,
    pub eps1: C64,
    pub eps2: C64,
    pub gamma: [f64; NMODES],
}

impl SystemParams {
    pub fn new(chi1: f64, chi2: f64, eps1: C64, eps2: C64, gamma: [f64; NMODES]) -> Result<Self> {
        let p = Self {
            chi1,
            chi2,
            eps1,
            eps2,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal pumps, equal nonlinearities and equal losses on all six modes.
    pub fn symmetric(chi: f64, eps: impl Into<C64>, gamma: f64) -> Result<Self> {
        let eps = eps.into();
        Self::new(chi, chi, eps, eps, [gamma; NMODES])
    }

    fn validate(&self) -> Result<()> {
        if !(self.chi1.is_finite() && self.chi1 > 0.0 && self.chi2.is_finite() && self.chi2 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "nonlinearities must be positive and finite (chi1={}, chi2={})",
                self.chi1, self.chi2
            )));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "loss rates must be positive and finite, got {g}"
            )));
        }
        if !(self.eps1.is_finite() && self.eps2.is_finite()) {
            return Err(Error::InvalidParams("pump amplitudes must be finite".into()));
        }
        Ok(())
    }

    /// Copy with both pumps set to `eps`.
    pub fn with_pump(&self, eps: impl Into<C64>) -> Self {
        let eps = eps.into();
        Self {
            eps1: eps,
            eps2: eps,
            ..*self
        }
    }

    /// Copy with both nonlinearities zeroed. Only used to probe the
    /// decoupled limit; it bypasses the positivity check on purpose.
    pub fn decoupled(&self) -> Self {
        Self {
            chi1: 0.0,
            chi2: 0.0,
            ..*self
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.chi1, self.chi2) && self.gamma.iter().all(|&g| close(g, self.gamma[0]))
    }

    /// The common loss rate when all six are equal.
    pub fn common_gamma(&self) -> Option<f64> {
        let g0 = self.gamma[0];
        self.gamma
            .iter()
            .all(|&g| (g - g0).abs() <= 1e-12 * g0)
            .then_some(g0)
    }

    /// Pump amplitude driving `mode` (1 or 2).
    pub fn pump(&self, mode: usize) -> C64 {
        match mode {
            1 => self.eps1,
            2 => self.eps2,
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Nonlinearity associated with pump mode `mode` (1 or 2).
    pub fn chi(&self, mode: usize) -> f64 {
        match mode {
            1 => self.chi1,
            2 => self.chi2,
            _ => 0.0,
        }
    }

    pub fn loss(&self, mode: usize) -> f64 {
        self.gamma[mode - 1]
    }
}

/// One down-conversion process: pump photon → signal + idler.
///
/// `noise` is the first of the two real noise columns driving the α-sector of
/// this process; the α⁺-sector uses `noise + 2` and `noise + 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coupling {
    pub pump: usize,
    pub signal: usize,
    pub idler: usize,
    pub noise: usize,
}

/// The three processes of the interaction Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CouplingTable([Coupling; 3]);

impl CouplingTable {
    pub const fn standard() -> Self {
        // Noise columns are 0-based: (2,5,6) uses η₁..η₄, (1,4,5) η₅..η₈,
        // (1,3,6) η₉..η₁₂.
        Self([
            Coupling {
                pump: 1,
                signal: 4,
                idler: 5,
                noise: 4,
            },
            Coupling {
                pump: 1,
                signal: 3,
                idler: 6,
                noise: 8,
            },
            Coupling {
                pump: 2,
                signal: 5,
                idler: 6,
                noise: 0,
            },
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Coupling> {
        self.0.iter()
    }

    pub fn entries(&self) -> &[Coupling; 3] {
        &self.0
    }
}

impl Default for CouplingTable {
    fn default() -> Self {
        Self::standard()
    }
}

pub(crate) const COUPLINGS: CouplingTable = CouplingTable::standard();

/// Deterministic right-hand side of the positive-P equations (noise deleted)
/// for both the α and α⁺ sectors.
pub fn flow(params: &SystemParams, x: &Vec12) -> Vec12 {
    let mut f = Vec12::zeros();
    for mode in 1..=NMODES {
        let g = params.loss(mode);
        f[index(mode, false)] = -g * x[index(mode, false)];
        f[index(mode, true)] = -g * x[index(mode, true)];
    }
    for mode in 1..=2 {
        let eps = params.pump(mode);
        f[index(mode, false)] += eps;
        f[index(mode, true)] += eps.conj();
    }
    for c in COUPLINGS.iter() {
        let chi = params.chi(c.pump);
        for plus in [false, true] {
            let p = x[index(c.pump, plus)];
            let s = x[index(c.signal, plus)];
            let i = x[index(c.idler, plus)];
            let s_bar = x[index(c.signal, !plus)];
            let i_bar = x[index(c.idler, !plus)];
            f[index(c.pump, plus)] -= chi * s * i;
            f[index(c.signal, plus)] += chi * p * i_bar;
            f[index(c.idler, plus)] += chi * p * s_bar;
        }
    }
    f
}

/// Max-norm of [`flow`].
pub fn residual(params: &SystemParams, x: &Vec12) -> f64 {
    flow(params, x).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lower bracket width for the threshold bisection, relative to the bracket.
const THRESHOLD_REL_TOL: f64 = 1e-6;

/// Pump amplitude at which the trivial (non-oscillating) steady state loses
/// linear stability, for equal pumps.
///
/// The pump fields of `params` are ignored. Only the symmetric regime (equal
/// nonlinearities, equal losses) is supported.
pub fn threshold_pump(params: &SystemParams) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::UnsupportedRegime(
            "threshold requires chi1 = chi2 and equal loss rates".into(),
        ));
    }
    let gamma = params.gamma[0];
    let upper = 10.0 * gamma * gamma / params.chi1;

    // max Re of the eigenvalues of -A; the trivial branch is unstable when >= 0.
    let growth = |eps: f64| -> Result<f64> {
        let p = params.with_pump(eps);
        let ss = trivial_steady_state(&p);
        let eig = stability_eigenvalues(&build_drift(&p, &ss))?;
        Ok(-eig[0].re)
    };

    let (mut lo, mut hi) = (0.0, upper);
    if growth(lo)? >= 0.0 || growth(hi)? < 0.0 {
        return Err(Error::NoThreshold { upper });
    }
    while hi - lo > THRESHOLD_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if growth(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
