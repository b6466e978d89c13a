//! Classical (noise-free) steady states of the positive-P equations.

use crate::error::{Error, Result};
use crate::linearization::flow_jacobian;
use crate::model::{index, residual, SystemParams};
use crate::{Vec12, C64, NMODES};

const MAX_NEWTON_ITERATIONS: usize = 200;
const MIN_STEP: f64 = 1.0 / 1024.0;
/// Low-frequency amplitude above which a solution counts as oscillating.
const BRANCH_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Trivial,
    Nontrivial,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyState {
    pub alpha: [C64; NMODES],
    pub alpha_plus: [C64; NMODES],
    /// Max-norm of the deterministic right-hand side at this point.
    pub residual: f64,
    pub branch: Branch,
}

impl SteadyState {
    fn from_point(params: &SystemParams, x: &Vec12) -> Self {
        let alpha = std::array::from_fn(|m| x[index(m + 1, false)]);
        let alpha_plus = std::array::from_fn(|m| x[index(m + 1, true)]);
        let oscillating = (3..=NMODES).any(|m| {
            x[index(m, false)].norm() > BRANCH_THRESHOLD || x[index(m, true)].norm() > BRANCH_THRESHOLD
        });
        Self {
            alpha,
            alpha_plus,
            residual: residual(params, x),
            branch: if oscillating {
                Branch::Nontrivial
            } else {
                Branch::Trivial
            },
        }
    }

    /// The state as a doubled phase-space vector.
    pub fn point(&self) -> Vec12 {
        Vec12::from_fn(|k, _| {
            let m = k / 2;
            if k % 2 == 0 {
                self.alpha[m]
            } else {
                self.alpha_plus[m]
            }
        })
    }

    /// Largest |αᵢ⁺ − conj(αᵢ)|; zero on the classical manifold.
    pub fn conjugate_defect(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.alpha_plus)
            .map(|(a, ap)| (ap - a.conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// The antilinear symmetry of the equations, `αᵢ ↔ conj(αᵢ⁺)`.
fn mirror(x: &Vec12) -> Vec12 {
    Vec12::from_fn(|k, _| x[k ^ 1].conj())
}

/// Residual tolerance a steady state must meet for these parameters.
pub fn residual_tolerance(params: &SystemParams) -> f64 {
    1e-10 * params.eps1.norm().max(params.eps2.norm()).max(1.0)
}

/// Below-threshold solution: pumps at εᵢ/γᵢ, signal and idler modes empty.
pub fn trivial_steady_state(params: &SystemParams) -> SteadyState {
    let mut x = Vec12::zeros();
    for mode in 1..=2 {
        let a = params.pump(mode) / params.loss(mode);
        x[index(mode, false)] = a;
        x[index(mode, true)] = a.conj();
    }
    SteadyState::from_point(params, &x)
}

/// Damped Newton iteration on the twelve deterministic equations.
///
/// α and α⁺ are treated as independent unknowns; a guess on the classical
/// manifold (α⁺ = conj α) stays on it. Above threshold the branch reached is
/// decided by the guess.
pub fn solve_steady_state(params: &SystemParams, initial_guess: &Vec12) -> Result<SteadyState> {
    if initial_guess.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidParams("initial guess must be finite".into()));
    }
    let tol = residual_tolerance(params);
    let mut x = *initial_guess;
    let classical = x == mirror(&x);
    let mut r = residual(params, &x);

    for iteration in 0..MAX_NEWTON_ITERATIONS {
        if r < tol {
            return Ok(SteadyState::from_point(params, &x));
        }
        let f = crate::model::flow(params, &x);
        let mut step = flow_jacobian(params, &x)
            .lu()
            .solve(&(-f))
            .filter(|s| s.iter().all(|z| z.is_finite()))
            .ok_or(Error::SingularJacobian { iteration })?;
        // On the classical manifold the exact Newton step is mirror-symmetric.
        // Above threshold the Jacobian is singular along the free-phase
        // direction, which amplifies rounding off the manifold; drop it.
        if classical {
            step = (step + mirror(&step)) * C64::from(0.5);
        }

        // Step halving on the residual max-norm. If no shortened step improves
        // the residual the smallest one is taken anyway, which lets the
        // iteration leave shallow plateaus.
        let mut lambda = 1.0;
        loop {
            let trial = x + step * C64::from(lambda);
            let rt = residual(params, &trial);
            if rt < r || lambda <= MIN_STEP {
                x = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if r < tol {
        return Ok(SteadyState::from_point(params, &x));
    }
    Err(Error::Convergence {
        iterations: MAX_NEWTON_ITERATIONS,
        residual: r,
    })
}
