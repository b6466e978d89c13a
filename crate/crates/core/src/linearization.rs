//! Linearized fluctuation dynamics `dδα = −A δα dt + B dW` about a steady
//! state, with diffusion `D = B Bᵀ`.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::model::{index, SystemParams, COUPLINGS};
use crate::steady_state::SteadyState;
use crate::{Mat12, Vec12, C64, DIM, NMODES};

const I: C64 = C64::new(0.0, 1.0);

/// Jacobian of [`crate::model::flow`] at `x`.
pub fn flow_jacobian(params: &SystemParams, x: &Vec12) -> Mat12 {
    let mut j = Mat12::zeros();
    for mode in 1..=NMODES {
        let g = C64::from(-params.loss(mode));
        j[(index(mode, false), index(mode, false))] = g;
        j[(index(mode, true), index(mode, true))] = g;
    }
    for c in COUPLINGS.iter() {
        let chi = params.chi(c.pump);
        for plus in [false, true] {
            let (p, s, i) = (index(c.pump, plus), index(c.signal, plus), index(c.idler, plus));
            let (s_bar, i_bar) = (index(c.signal, !plus), index(c.idler, !plus));

            j[(p, s)] -= chi * x[i];
            j[(p, i)] -= chi * x[s];

            j[(s, p)] += chi * x[i_bar];
            j[(s, i_bar)] += chi * x[p];

            j[(i, p)] += chi * x[s_bar];
            j[(i, s_bar)] += chi * x[p];
        }
    }
    j
}

/// Drift matrix at an arbitrary phase-space point (minus the flow Jacobian).
pub fn drift_at(params: &SystemParams, x: &Vec12) -> Mat12 {
    -flow_jacobian(params, x)
}

pub fn build_drift(params: &SystemParams, ss: &SteadyState) -> Mat12 {
    drift_at(params, &ss.point())
}

/// Largest entrywise gap between `drift` and the central-difference drift of
/// the flow at `x` (step `h` along each real axis), relative to `max |drift|`.
pub fn finite_difference_discrepancy(params: &SystemParams, x: &Vec12, drift: &Mat12, h: f64) -> f64 {
    let scale = drift.camax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for col in 0..DIM {
        let (mut xp, mut xm) = (*x, *x);
        xp[col] += C64::from(h);
        xm[col] -= C64::from(h);
        let fd = (crate::model::flow(params, &xp) - crate::model::flow(params, &xm)) / C64::from(2.0 * h);
        for row in 0..DIM {
            worst = worst.max((drift[(row, col)] + fd[row]).norm() / scale);
        }
    }
    worst
}

/// Noise-coefficient matrix B at `x`; column k carries the real noise ηₖ₊₁.
///
/// Square roots take the principal branch.
pub fn noise_matrix(params: &SystemParams, x: &Vec12) -> Mat12 {
    let mut b = Mat12::zeros();
    for c in COUPLINGS.iter() {
        let chi = params.chi(c.pump);
        for plus in [false, true] {
            let col = c.noise + 2 * plus as usize;
            let amp = (x[index(c.pump, plus)] * (0.5 * chi)).sqrt();
            let (s, i) = (index(c.signal, plus), index(c.idler, plus));
            b[(s, col)] += amp;
            b[(s, col + 1)] += I * amp;
            b[(i, col)] += amp;
            b[(i, col + 1)] -= I * amp;
        }
    }
    b
}

/// Diffusion matrix at `x`, assembled entry by entry.
pub fn diffusion_at(params: &SystemParams, x: &Vec12) -> Mat12 {
    let mut d = Mat12::zeros();
    for c in COUPLINGS.iter() {
        let chi = params.chi(c.pump);
        for plus in [false, true] {
            let v = chi * x[index(c.pump, plus)];
            let (s, i) = (index(c.signal, plus), index(c.idler, plus));
            d[(s, i)] += v;
            d[(i, s)] += v;
        }
    }
    d
}

pub fn build_diffusion(params: &SystemParams, ss: &SteadyState) -> Mat12 {
    diffusion_at(params, &ss.point())
}

/// Eigenvalues of `a`, sorted by ascending real part (ties by imaginary part).
pub fn stability_eigenvalues(a: &Mat12) -> Result<[C64; DIM]> {
    if a.iter().any(|z| !z.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(*a, 1e-14, 10_000)
        .ok_or_else(|| Error::Eigen(format!("Schur iteration did not converge (‖A‖∞ = {:e})", a.camax())))?;
    let (_, t) = schur.unpack();
    let mut eig: [C64; DIM] = std::array::from_fn(|k| t[(k, k)]);
    if eig.iter().any(|z| !z.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(eig)
}

/// Drift, diffusion and spectrum of the linearized dynamics at a steady state.
#[derive(Clone, Debug)]
pub struct LinearizedModel {
    pub params: SystemParams,
    pub steady_state: SteadyState,
    pub drift: Mat12,
    pub diffusion: Mat12,
    pub eigenvalues: [C64; DIM],
}

impl LinearizedModel {
    pub fn new(params: &SystemParams, ss: &SteadyState) -> Result<Self> {
        let drift = build_drift(params, ss);
        let diffusion = build_diffusion(params, ss);
        let eigenvalues = stability_eigenvalues(&drift)?;
        Ok(Self {
            params: *params,
            steady_state: *ss,
            drift,
            diffusion,
            eigenvalues,
        })
    }

    /// Linearization about the trivial below-threshold state.
    pub fn at_trivial(params: &SystemParams) -> Result<Self> {
        Self::new(params, &crate::steady_state::trivial_steady_state(params))
    }

    pub fn min_real_eigenvalue(&self) -> f64 {
        self.eigenvalues[0].re
    }

    /// Ornstein-Uhlenbeck validity: every eigenvalue strictly in the right
    /// half-plane. A marginal zero eigenvalue does not qualify.
    pub fn is_stable(&self) -> bool {
        self.min_real_eigenvalue() > 0.0
    }

    pub fn ensure_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable {
                min_re: self.min_real_eigenvalue(),
            })
        }
    }

    /// Labels of the ordered basis `[a1, a1+, a2, a2+, …]`.
    pub fn ordered_basis() -> [String; DIM] {
        crate::model::basis_labels()
    }
}

/// Stationary covariance C solving `A C + C Aᵀ = D`, via the Kronecker form
/// `(I ⊗ A + A ⊗ I) vec C = vec D`.
pub fn lyapunov_covariance(a: &Mat12, d: &Mat12) -> Result<Mat12> {
    let n = DIM;
    let mut k = DMatrix::<C64>::zeros(n * n, n * n);
    // column-major vec: index(r, c) = r + n c
    for col in 0..n {
        for row in 0..n {
            let eq = row + n * col;
            for m in 0..n {
                // (A C)[row, col] = Σ_m A[row, m] C[m, col]
                k[(eq, m + n * col)] += a[(row, m)];
                // (C Aᵀ)[row, col] = Σ_m C[row, m] A[col, m]
                k[(eq, row + n * m)] += a[(col, m)];
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, d.iter().copied());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator is singular".into()))?;
    Ok(Mat12::from_iterator(sol.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::flow;
    use crate::steady_state::trivial_steady_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_params(eps: f64) -> SystemParams {
        SystemParams::symmetric(0.01, eps, 1.0).unwrap()
    }

    #[test]
    fn decoupled_drift_is_diagonal_loss() {
        let p = SystemParams::new(0.1, 0.1, C64::new(2.0, 1.0), C64::new(1.0, 0.0), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap()
            .decoupled();
        let a = build_drift(&p, &trivial_steady_state(&p));
        for r in 0..DIM {
            for c in 0..DIM {
                let expect = if r == c { (r / 2 + 1) as f64 } else { 0.0 };
                assert_eq!(a[(r, c)], C64::new(expect, 0.0));
            }
        }
        let eig = stability_eigenvalues(&a).unwrap();
        for (k, e) in eig.iter().enumerate() {
            assert!((e - C64::new((k / 2 + 1) as f64, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn trivial_state_entries() {
        let p = reference_params(58.1);
        let ss = trivial_steady_state(&p);
        let a = build_drift(&p, &ss);
        assert!((a[(index(3, false), index(6, true))] - C64::new(-0.01 * 58.1, 0.0)).norm() < 1e-14);
        assert_eq!(a[(index(3, false), index(1, false))], C64::new(0.0, 0.0));
        assert!(a.iter().all(|z| z.im == 0.0));
        let d = build_diffusion(&p, &ss);
        assert!((d[(index(3, false), index(6, false))].re - 0.581).abs() < 1e-14);
        assert!(d.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn representative_entries_off_manifold() {
        let p = SystemParams::new(0.3, 0.5, C64::new(1.0, 0.0), C64::new(1.0, 0.0), [1.0; 6]).unwrap();
        let x = Vec12::from_fn(|k, _| C64::new(k as f64 + 1.0, -(k as f64)));
        let a = drift_at(&p, &x);
        let v = |m, plus| x[index(m, plus)];
        let e = |r: (usize, bool), c: (usize, bool)| a[(index(r.0, r.1), index(c.0, c.1))];
        assert_eq!(e((1, false), (1, false)), C64::new(1.0, 0.0));
        assert!((e((1, false), (4, false)) - 0.3 * v(5, false)).norm() < 1e-14);
        assert!((e((1, false), (5, false)) - 0.3 * v(4, false)).norm() < 1e-14);
        assert!((e((1, false), (3, false)) - 0.3 * v(6, false)).norm() < 1e-14);
        assert!((e((1, false), (6, false)) - 0.3 * v(3, false)).norm() < 1e-14);
        assert!((e((3, false), (1, false)) + 0.3 * v(6, true)).norm() < 1e-14);
        assert!((e((3, false), (6, true)) + 0.3 * v(1, false)).norm() < 1e-14);
    }

    #[test]
    fn unpumped_diffusion_vanishes() {
        let p = reference_params(0.0);
        assert_eq!(build_diffusion(&p, &trivial_steady_state(&p)), Mat12::zeros());
    }

    fn random_draw(rng: &mut ChaCha8Rng) -> (SystemParams, Vec12) {
        let mut g = [0.0; 6];
        for v in g.iter_mut() {
            *v = rng.random_range(0.2..3.0);
        }
        let p = SystemParams::new(
            rng.random_range(0.001..1.0),
            rng.random_range(0.001..1.0),
            C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            g,
        )
        .unwrap();
        let x = Vec12::from_fn(|_, _| C64::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)));
        (p, x)
    }

    #[test]
    fn diffusion_equals_noise_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (p, x) = random_draw(&mut rng);
            let b = noise_matrix(&p, &x);
            // explicit triple loop, not nalgebra's product
            let mut bbt = Mat12::zeros();
            for r in 0..DIM {
                for c in 0..DIM {
                    for k in 0..DIM {
                        bbt[(r, c)] += b[(r, k)] * b[(c, k)];
                    }
                }
            }
            let d = diffusion_at(&p, &x);
            assert!((bbt - d).camax() < 1e-12 * (1.0 + d.camax()));
            assert_eq!(d, d.transpose());
            for k in 0..DIM {
                assert_eq!(d[(k, k)], C64::new(0.0, 0.0));
                // no α/α⁺ cross correlation
                for l in 0..DIM {
                    if k % 2 != l % 2 {
                        assert_eq!(d[(k, l)], C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn drift_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..100 {
            let (p, x) = random_draw(&mut rng);
            let a = drift_at(&p, &x);
            let scale = a.camax();
            for col in 0..DIM {
                let mut xp = x;
                let mut xm = x;
                xp[col] += C64::new(h, 0.0);
                xm[col] -= C64::new(h, 0.0);
                let fd = (flow(&p, &xp) - flow(&p, &xm)) / C64::new(2.0 * h, 0.0);
                for row in 0..DIM {
                    let err = (a[(row, col)] + fd[row]).norm() / scale;
                    assert!(err < 1e-6, "({row},{col}) {err:e}");
                }
            }
        }
    }

    #[test]
    fn discrepancy_detects_corrupted_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, x) = random_draw(&mut rng);
        let mut a = drift_at(&p, &x);
        assert!(finite_difference_discrepancy(&p, &x, &a, 1e-5) < 1e-6);
        a[(4, 7)] += C64::from(1e-3);
        assert!(finite_difference_discrepancy(&p, &x, &a, 1e-5) > 1e-6);
    }

    #[test]
    fn min_real_eigenvalue_decreases_toward_threshold() {
        let p = reference_params(0.0);
        let ec = crate::model::threshold_pump(&p).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let lin = LinearizedModel::at_trivial(&p.with_pump(ec * k as f64 / 20.0)).unwrap();
            let m = lin.min_real_eigenvalue();
            assert!(m < prev || k == 0, "k={k}: {m} !< {prev}");
            prev = m;
        }
        assert!(prev.abs() < 1e-5, "{prev}");
    }

    #[test]
    fn working_point_is_stable_but_close() {
        let p = reference_params(0.0);
        let ec = crate::model::threshold_pump(&p).unwrap();
        let lin = LinearizedModel::at_trivial(&p.with_pump(0.94 * ec)).unwrap();
        // 1 - 0.94 from the exact γ(1 - ε/ε_c) law of the critical supermode
        assert!((lin.min_real_eigenvalue() - 0.06).abs() < 1e-6, "{}", lin.min_real_eigenvalue());
        assert!(lin.is_stable());
        let at_threshold = LinearizedModel::at_trivial(&p.with_pump(ec)).unwrap();
        assert!(at_threshold.min_real_eigenvalue().abs() < 1e-5);
    }

    #[test]
    fn lyapunov_scalar_blocks() {
        // decoupled: C = D / (2γ) entrywise pattern reduces to zero
        let a = Mat12::identity() * C64::from(2.0);
        let mut d = Mat12::zeros();
        d[(4, 10)] = C64::new(0.8, 0.0);
        d[(10, 4)] = C64::new(0.8, 0.0);
        let c = lyapunov_covariance(&a, &d).unwrap();
        assert!((c[(4, 10)] - C64::new(0.2, 0.0)).norm() < 1e-14);
        assert!((a * c + c * a.transpose() - d).camax() < 1e-14);
    }

    #[test]
    fn lyapunov_residual_at_working_point() {
        let p = reference_params(0.5 * 61.8);
        let lin = LinearizedModel::at_trivial(&p).unwrap();
        let c = lyapunov_covariance(&lin.drift, &lin.diffusion).unwrap();
        let r = lin.drift * c + c * lin.drift.transpose() - lin.diffusion;
        assert!(r.camax() < 1e-12);
        assert!((c - c.transpose()).camax() < 1e-12);
    }
}
