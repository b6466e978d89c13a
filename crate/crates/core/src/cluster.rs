//! The four joint quadrature operators of the square cluster and (θ, ω)
//! sweeps of their output variances.
//!
//! With `c₁ = (√5 − 1)/2` and `c₂ = (√5 + 1)/2`:
//!
//! ```text
//! O₁ = −c₁X₃ + c₁X₄ − X₅ + X₆        O₃ = c₁Y₃ + c₁Y₄ + Y₅ + Y₆
//! O₂ = −c₂X₃ − c₂X₄ + X₅ + X₆        O₄ = c₂Y₃ − c₂Y₄ − Y₅ + Y₆
//! ```
//!
//! The ideal operators carry `e^{−c₂r}` / `e^{−c₁r}` normalizations; variances
//! here are of the unscaled combinations, so the coherent level of each
//! operator is the sum of its squared weights.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearization::LinearizedModel;
use crate::model::index;
use crate::spectra::{spectrum_unchecked, uniform_gamma, variance_from_spectrum, QuadratureBasis};
use crate::Vec12;

/// `(√5 − 1)/2`
pub fn c1() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// `(√5 + 1)/2`
pub fn c2() -> f64 {
    (5f64.sqrt() + 1.0) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorLabel {
    O1,
    O2,
    O3,
    O4,
}

impl OperatorLabel {
    pub const ALL: [OperatorLabel; 4] = [Self::O1, Self::O2, Self::O3, Self::O4];

    pub fn name(self) -> &'static str {
        match self {
            Self::O1 => "O1",
            Self::O2 => "O2",
            Self::O3 => "O3",
            Self::O4 => "O4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    X,
    Y,
}

/// Weighted sum of quadratures over modes 3..6.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOperator {
    pub label: OperatorLabel,
    pub weights: [f64; 4],
    pub quadratures: [Quadrature; 4],
    pub coherent_level: f64,
}

impl JointOperator {
    pub fn new(label: OperatorLabel, weights: [f64; 4], quadratures: [Quadrature; 4]) -> Self {
        Self {
            label,
            weights,
            quadratures,
            coherent_level: weights.iter().map(|w| w * w).sum(),
        }
    }

    /// Coefficients in the 12-dimensional quadrature basis `[X₁, Y₁, …, X₆, Y₆]`.
    pub fn lifted(&self) -> Vec12 {
        let mut c = Vec12::zeros();
        for (k, (w, q)) in self.weights.iter().zip(&self.quadratures).enumerate() {
            c[index(k + 3, *q == Quadrature::Y)] = (*w).into();
        }
        c
    }
}

pub fn standard_operators() -> [JointOperator; 4] {
    use Quadrature::{X, Y};
    let (c1, c2) = (c1(), c2());
    [
        JointOperator::new(OperatorLabel::O1, [-c1, c1, -1.0, 1.0], [X; 4]),
        JointOperator::new(OperatorLabel::O2, [-c2, -c2, 1.0, 1.0], [X; 4]),
        JointOperator::new(OperatorLabel::O3, [c1, c1, 1.0, 1.0], [Y; 4]),
        JointOperator::new(OperatorLabel::O4, [c2, -c2, -1.0, 1.0], [Y; 4]),
    ]
}

/// `10 log₁₀(V / level)`.
pub fn to_decibels(v: f64, level: f64) -> f64 {
    10.0 * (v / level).log10()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub theta: f64,
    pub omega: f64,
    pub value: f64,
}

/// Variances of the four operators on a (θ, ω) grid. Values are stored
/// row-major with θ as the slow index.
#[derive(Clone, Debug)]
pub struct SpectralGrid {
    pub thetas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub values: [Vec<f64>; 4],
    /// Grid minimum of each operator, refined in ω at the best θ.
    pub minima: [Minimum; 4],
    /// Same for `V(O₁) + V(O₂) + V(O₃) + V(O₄)`.
    pub sum_minimum: Minimum,
    /// Unrefined grid minima, as found by the scan.
    pub grid_minima: [Minimum; 4],
    pub grid_sum_minimum: Minimum,
}

impl SpectralGrid {
    pub fn value(&self, op: usize, theta_idx: usize, omega_idx: usize) -> f64 {
        self.values[op][theta_idx * self.omegas.len() + omega_idx]
    }

    pub fn sum(&self, theta_idx: usize, omega_idx: usize) -> f64 {
        (0..4).map(|k| self.value(k, theta_idx, omega_idx)).sum()
    }
}

/// One-phase-sweep slice at fixed ω.
#[derive(Clone, Debug)]
pub struct PhaseTrace {
    pub omega: f64,
    pub thetas: Vec<f64>,
    pub values: [Vec<f64>; 4],
    pub decibels: [Vec<f64>; 4],
    pub coherent_levels: [f64; 4],
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} grid has non-finite points")));
    }
    if g.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid(format!("{name} grid is not sorted")));
    }
    Ok(())
}

/// Variances of all four operators at every θ for one ω.
fn column(lin: &LinearizedModel, gamma: f64, omega: f64, thetas: &[f64], ops: &[JointOperator; 4]) -> Result<[Vec<f64>; 4]> {
    let s = spectrum_unchecked(lin, omega)?;
    let mut out: [Vec<f64>; 4] = Default::default();
    for &th in thetas {
        let basis = QuadratureBasis::new(th);
        for (k, op) in ops.iter().enumerate() {
            out[k].push(variance_from_spectrum(&s, &basis, op, gamma)?);
        }
    }
    Ok(out)
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = c1();
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..60 {
        if (b - a).abs() < 1e-10 * (1.0 + a.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Refine a grid minimum in ω at fixed θ over the neighbouring grid cells.
fn refine(
    lin: &LinearizedModel,
    gamma: f64,
    omegas: &[f64],
    at: Minimum,
    wi: usize,
    objective: impl Fn(&[f64; 4]) -> f64,
) -> Result<Minimum> {
    if omegas.len() < 2 {
        return Ok(at);
    }
    let lo = omegas[wi.saturating_sub(1)];
    let hi = omegas[(wi + 1).min(omegas.len() - 1)];
    let ops = standard_operators();
    let basis = QuadratureBasis::new(at.theta);
    let eval = |w: f64| -> Result<f64> {
        let s = spectrum_unchecked(lin, w)?;
        let mut v = [0.0; 4];
        for (k, op) in ops.iter().enumerate() {
            v[k] = variance_from_spectrum(&s, &basis, op, gamma)?;
        }
        Ok(objective(&v))
    };
    let (omega, value) = golden_section(lo, hi, eval)?;
    Ok(if value < at.value {
        Minimum {
            theta: at.theta,
            omega,
            value,
        }
    } else {
        at
    })
}

/// Evaluate all four operator variances on the Cartesian grid `thetas × omegas`.
///
/// Frequencies are processed in parallel; each grid value depends only on its
/// own (θ, ω), so results match a serial evaluation exactly.
pub fn sweep(lin: &LinearizedModel, thetas: &[f64], omegas: &[f64]) -> Result<SpectralGrid> {
    check_grid("theta", thetas)?;
    check_grid("omega", omegas)?;
    let gamma = uniform_gamma(lin)?;
    if let Err(e) = lin.ensure_stable() {
        return Err(Error::Sweep {
            completed: 0,
            total: omegas.len(),
            source: Box::new(e),
        });
    }
    let ops = standard_operators();

    let columns: Vec<Result<[Vec<f64>; 4]>> = omegas
        .par_iter()
        .map(|&w| column(lin, gamma, w, thetas, &ops))
        .collect();
    let mut cols = Vec::with_capacity(omegas.len());
    for (k, c) in columns.into_iter().enumerate() {
        match c {
            Ok(c) => cols.push(c),
            Err(e) => {
                return Err(Error::Sweep {
                    completed: k,
                    total: omegas.len(),
                    source: Box::new(e),
                })
            }
        }
    }

    let (nt, nw) = (thetas.len(), omegas.len());
    let mut values: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; nt * nw]);
    for (wi, col) in cols.iter().enumerate() {
        for k in 0..4 {
            for ti in 0..nt {
                values[k][ti * nw + wi] = col[k][ti];
            }
        }
    }

    let scan = |f: &dyn Fn(usize) -> f64| -> (Minimum, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for idx in 0..nt * nw {
            let v = f(idx);
            if v < best.0 {
                best = (v, idx);
            }
        }
        let (ti, wi) = (best.1 / nw, best.1 % nw);
        (
            Minimum {
                theta: thetas[ti],
                omega: omegas[wi],
                value: best.0,
            },
            wi,
        )
    };

    let mut grid_minima = [Minimum {
        theta: 0.0,
        omega: 0.0,
        value: 0.0,
    }; 4];
    let mut minima = grid_minima;
    for k in 0..4 {
        let (m, wi) = scan(&|i| values[k][i]);
        grid_minima[k] = m;
        minima[k] = refine(lin, gamma, omegas, m, wi, |v| v[k])?;
    }
    let (gs, wi) = scan(&|i| (0..4).map(|k| values[k][i]).sum());
    let sum_minimum = refine(lin, gamma, omegas, gs, wi, |v| v.iter().sum())?;

    Ok(SpectralGrid {
        thetas: thetas.to_vec(),
        omegas: omegas.to_vec(),
        values,
        minima,
        sum_minimum,
        grid_minima,
        grid_sum_minimum: gs,
    })
}

/// Phase trace at one analysis frequency, with dB values relative to each
/// operator's coherent level.
pub fn fixed_frequency_trace(lin: &LinearizedModel, omega: f64, thetas: &[f64]) -> Result<PhaseTrace> {
    check_grid("theta", thetas)?;
    let gamma = uniform_gamma(lin)?;
    lin.ensure_stable()?;
    let ops = standard_operators();
    let values = column(lin, gamma, omega, thetas, &ops)?;
    let coherent_levels = std::array::from_fn(|k| ops[k].coherent_level);
    let decibels = std::array::from_fn(|k| {
        values[k]
            .iter()
            .map(|&v| to_decibels(v, coherent_levels[k]))
            .collect()
    });
    Ok(PhaseTrace {
        omega,
        thetas: thetas.to_vec(),
        values,
        decibels,
        coherent_levels,
    })
}

/// `n` evenly spaced points on `[lo, hi]` (inclusive).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
