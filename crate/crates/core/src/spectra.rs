//! Intracavity spectral matrix of the Ornstein-Uhlenbeck fluctuations and the
//! output spectra of joint quadrature operators.

use nalgebra::LU;

use crate::cluster::JointOperator;
use crate::error::{Error, Result};
use crate::linearization::LinearizedModel;
use crate::model::index;
use crate::{Mat12, Vec12, C64, DIM, NMODES};

const I: C64 = C64::new(0.0, 1.0);
/// 1-norm condition number above which a spectrum is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Largest tolerated imaginary residue of an output variance.
const IMAG_TOL: f64 = 1e-10;

/// `S(ω) = (A + iω)⁻¹ D (Aᵀ − iω)⁻¹`.
#[derive(Clone, Debug)]
pub struct SpectralMatrix {
    pub omega: f64,
    pub matrix: Mat12,
    /// 1-norm condition number of `A + iω`.
    pub condition: f64,
}

impl SpectralMatrix {
    pub fn ill_conditioned(&self) -> bool {
        !(self.condition < ILL_CONDITIONED)
    }
}

/// Maps the doubled amplitudes `(δαₘ, δαₘ⁺)` of each mode onto the quadrature
/// pair `(δXₘ, δYₘ)` at local-oscillator phase θ. Rows follow the same
/// interleaved ordering as the amplitudes: `[X₁, Y₁, X₂, Y₂, …]`.
#[derive(Clone, Debug)]
pub struct QuadratureBasis {
    pub theta: f64,
    pub transform: Mat12,
}

impl QuadratureBasis {
    pub fn new(theta: f64) -> Self {
        let e = C64::from_polar(1.0, -theta);
        let mut q = Mat12::zeros();
        for m in 1..=NMODES {
            let (a, ap) = (index(m, false), index(m, true));
            q[(a, a)] = e;
            q[(a, ap)] = e.conj();
            q[(ap, a)] = -I * e;
            q[(ap, ap)] = I * e.conj();
        }
        Self { theta, transform: q }
    }

    /// Amplitude-space coefficients `l = Qᵀ c` of a quadrature combination `c`.
    pub fn pull_back(&self, c: &Vec12) -> Vec12 {
        self.transform.transpose() * c
    }
}

fn one_norm(m: &Mat12) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn solve_all(lu: &LU<C64, nalgebra::Const<DIM>, nalgebra::Const<DIM>>, rhs: &Mat12, what: &str) -> Result<Mat12> {
    lu.solve(rhs)
        .filter(|m| m.iter().all(|z| z.is_finite()))
        .ok_or_else(|| Error::Singular(format!("{what} is singular")))
}

/// Spectral matrix without the stability check; callers must have checked.
pub(crate) fn spectrum_unchecked(lin: &LinearizedModel, omega: f64) -> Result<SpectralMatrix> {
    let shift = Mat12::identity() * (I * omega);
    let plus = lin.drift + shift;
    let minus = lin.drift - shift;

    let lu_plus = plus.lu();
    let x = solve_all(&lu_plus, &lin.diffusion, "A + iω")?;
    // S (A - iω)ᵀ = X  ⇔  (A - iω) Sᵀ = Xᵀ
    let st = solve_all(&minus.lu(), &x.transpose(), "A - iω")?;

    let inv = solve_all(&lu_plus, &Mat12::identity(), "A + iω")?;
    let condition = one_norm(&plus) * one_norm(&inv);

    Ok(SpectralMatrix {
        omega,
        matrix: st.transpose(),
        condition,
    })
}

pub fn intracavity_spectrum(lin: &LinearizedModel, omega: f64) -> Result<SpectralMatrix> {
    lin.ensure_stable()?;
    spectrum_unchecked(lin, omega)
}

/// Output variance of `op` from a precomputed intracavity spectrum.
///
/// `V = Σ wₘ² + 2γ lᵀ S l` with `l = Qᵀ c`: the coherent level plus the
/// normally ordered intracavity term carried through the input-output relation.
pub fn variance_from_spectrum(
    spectrum: &SpectralMatrix,
    basis: &QuadratureBasis,
    op: &JointOperator,
    gamma: f64,
) -> Result<f64> {
    let l = basis.pull_back(&op.lifted());
    let normal = (l.transpose() * spectrum.matrix * l)[(0, 0)];
    let v = op.coherent_level + 2.0 * gamma * normal;
    if v.im.abs() > IMAG_TOL * v.re.abs().max(1.0) {
        return Err(Error::NonRealVariance { real: v.re, imag: v.im });
    }
    Ok(v.re)
}

/// Common loss rate; the input-output relation used here needs equal losses.
pub(crate) fn uniform_gamma(lin: &LinearizedModel) -> Result<f64> {
    lin.params.common_gamma().ok_or_else(|| {
        Error::UnsupportedRegime("output spectra require equal loss rates on all modes".into())
    })
}

pub fn output_joint_variance(lin: &LinearizedModel, op: &JointOperator, theta: f64, omega: f64) -> Result<f64> {
    let gamma = uniform_gamma(lin)?;
    let s = intracavity_spectrum(lin, omega)?;
    variance_from_spectrum(&s, &QuadratureBasis::new(theta), op, gamma)
}

/// `∫ S(ω) dω / 2π` over the whole real line.
///
/// The finite part `|ω| ≤ cutoff` is integrated with composite Simpson after
/// the substitution `ω = tan u`; beyond the cutoff `S(ω) ≈ D / ω²`, whose two
/// tails contribute `D / (π cutoff)`.
pub fn integrated_spectrum(lin: &LinearizedModel, cutoff: f64, intervals: usize) -> Result<Mat12> {
    lin.ensure_stable()?;
    if !(cutoff > 0.0) || intervals < 2 {
        return Err(Error::InvalidGrid("cutoff must be positive and intervals >= 2".into()));
    }
    let n = intervals + intervals % 2;
    let u_max = cutoff.atan();
    let h = 2.0 * u_max / n as f64;
    let mut acc = Mat12::zeros();
    for k in 0..=n {
        let u = -u_max + h * k as f64;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let jac = 1.0 / u.cos().powi(2);
        acc += spectrum_unchecked(lin, u.tan())?.matrix * C64::from(w * jac);
    }
    let finite = acc * C64::from(h / 3.0 / (2.0 * std::f64::consts::PI));
    Ok(finite + lin.diffusion * C64::from(1.0 / (std::f64::consts::PI * cutoff)))
}
