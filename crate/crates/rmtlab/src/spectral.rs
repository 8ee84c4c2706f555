//! Symmetric eigendecomposition, matrix functions, sample covariance pairs,
//! the weighted spectral distribution and its Stieltjes transform, and
//! resolvent quadratic forms.
//!
//! The decomposition convention is A = Vᵀ·diag(λ)·V with *rows* of V as
//! eigenvectors; eigenvalues are returned ascending.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sq, outer, Matrix};
use crate::model::{ModelSpec, SampleBatch};
use crate::scalar::{Cplx, Scalar};

/// Iteration cap for the cyclic Jacobi sweep.
const MAX_SWEEPS: usize = 64;

/// Absolute gap below which a real evaluation point counts as a pole.
const POLE_TOL: f64 = 1e-14;

/// Underflow guard for direction vectors.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition<S> {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<S>,
    /// Rows are eigenvectors: A = Vᵀ·diag(λ)·V.
    pub eigenvectors: Matrix<S>,
}

#[derive(Debug, Clone)]
pub struct WeightedESD<S> {
    pub lambdas: Vec<S>,
    /// Projection weights t_j² of the normalized direction onto the eigenbasis.
    pub weights: Vec<S>,
    pub total_mass: S,
}

#[derive(Debug, Clone)]
pub struct CovarianceSet {
    /// Centered sample covariance in whitened coordinates.
    pub s_centered: Matrix<f64>,
    /// Uncentered second-moment matrix (1/n)·Σ (Bx_j)(Bx_j)ᵀ.
    pub s_uncentered: Matrix<f64>,
    /// max |S_centered - (S_uncentered - (Bx̄)(Bx̄)ᵀ)|.
    pub relation_residual: f64,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn eig_sym<S: Scalar>(a: &Matrix<S>) -> Result<SpectralDecomposition<S>> {
    let p = a.nrows();
    assert_eq!(p, a.ncols(), "matrix must be square");
    // Work on the symmetrized copy; callers are contracted to pass
    // matrices with symmetry defect <= 1e-12 relative.
    let mut w = Matrix::from_fn(p, p, |i, j| {
        (a[(i, j)] + a[(j, i)]) / S::from_f64_lit(2.0)
    });
    let mut q = Matrix::<S>::identity(p);

    let off = |m: &Matrix<S>| {
        let mut s = S::zero();
        for i in 0..p {
            for j in (i + 1)..p {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };
    let scale = w.frobenius_norm() + S::one();
    let tol = S::epsilon() * scale;

    let mut sweeps = 0;
    while off(&w) > tol {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_diag: off(&w).to_f64().unwrap_or(f64::NAN),
            });
        }
        sweeps += 1;
        for r in 0..p {
            for c in (r + 1)..p {
                let apq = w[(r, c)];
                if apq.abs() <= tol / S::from_usize_lit(p * p) {
                    continue;
                }
                let app = w[(r, r)];
                let aqq = w[(c, c)];
                let theta = (aqq - app) / (S::from_f64_lit(2.0) * apq);
                // Smaller-angle root of t² + 2θt − 1 = 0.
                let t = {
                    let s = if theta >= S::zero() { S::one() } else { -S::one() };
                    s / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let cos = S::one() / (t * t + S::one()).sqrt();
                let sin = t * cos;
                // W <- Jᵀ W J, Q <- Q J with J the (r,c) Givens rotation.
                for k in 0..p {
                    let wrk = w[(r, k)];
                    let wck = w[(c, k)];
                    w[(r, k)] = cos * wrk - sin * wck;
                    w[(c, k)] = sin * wrk + cos * wck;
                }
                for k in 0..p {
                    let wkr = w[(k, r)];
                    let wkc = w[(k, c)];
                    w[(k, r)] = cos * wkr - sin * wkc;
                    w[(k, c)] = sin * wkr + cos * wkc;
                    let qkr = q[(k, r)];
                    let qkc = q[(k, c)];
                    q[(k, r)] = cos * qkr - sin * qkc;
                    q[(k, c)] = sin * qkr + cos * qkc;
                }
            }
        }
    }

    // A = Q Λ Qᵀ with columns of Q as eigenvectors; the paper convention
    // wants rows, so V = Qᵀ. Sort ascending.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| w[(i, i)].partial_cmp(&w[(j, j)]).unwrap());
    let eigenvalues: Vec<S> = order.iter().map(|&i| w[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(p, p, |i, j| q[(j, order[i])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

impl<S: Scalar> SpectralDecomposition<S> {
    /// Vᵀ·diag(f(λ))·V.
    pub fn apply_matrix_function(&self, f: impl Fn(S) -> S) -> Matrix<S> {
        let p = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(p, p);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let flam = f(lam);
            let row = v.row(k);
            for i in 0..p {
                let a = flam * row[i];
                for j in 0..p {
                    out[(i, j)] += a * row[j];
                }
            }
        }
        out
    }

    /// Reconstruct the original matrix (f = id).
    pub fn reconstruct(&self) -> Matrix<S> {
        self.apply_matrix_function(|x| x)
    }

    pub fn lambda_min(&self) -> S {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> S {
        *self.eigenvalues.last().unwrap()
    }
}

/// Weights t_j² with t = V·v/‖v‖.
pub fn weighted_esd<S: Scalar>(
    d: &SpectralDecomposition<S>,
    v: &[S],
) -> Result<WeightedESD<S>> {
    let nv = norm(v);
    if nv.to_f64().unwrap_or(0.0) <= TINY {
        return Err(Error::ZeroVector);
    }
    let t = d.eigenvectors.matvec(v);
    let weights: Vec<S> = t.iter().map(|&x| (x / nv) * (x / nv)).collect();
    let total_mass = weights.iter().copied().sum();
    Ok(WeightedESD {
        lambdas: d.eigenvalues.clone(),
        weights,
        total_mass,
    })
}

/// Σ_j w_j / (λ_j − z).
pub fn stieltjes<S: Scalar>(esd: &WeightedESD<S>, z: Cplx<S>) -> Result<Cplx<S>> {
    check_pole(&esd.lambdas, z)?;
    let mut acc = Complex::new(S::zero(), S::zero());
    for (&lam, &w) in esd.lambdas.iter().zip(&esd.weights) {
        acc += Complex::new(w, S::zero()) / (Complex::new(lam, S::zero()) - z);
    }
    Ok(acc)
}

fn check_pole<S: Scalar>(lambdas: &[S], z: Cplx<S>) -> Result<()> {
    if z.im == S::zero() {
        let gap = lambdas
            .iter()
            .map(|&l| (l - z.re).abs())
            .fold(S::infinity(), |a, b| a.min(b));
        if gap.to_f64().unwrap_or(f64::INFINITY) <= POLE_TOL {
            return Err(Error::PoleHit {
                gap: gap.to_f64().unwrap_or(0.0),
            });
        }
    }
    Ok(())
}

/// wᵀ(S − zI)⁻¹w through the spectral decomposition: Σ (Vw)_j²/(λ_j − z).
pub fn resolvent_qform_decomp<S: Scalar>(
    d: &SpectralDecomposition<S>,
    w: &[S],
    z: Cplx<S>,
) -> Result<Cplx<S>> {
    check_pole(&d.eigenvalues, z)?;
    let tw = d.eigenvectors.matvec(w);
    let mut acc = Complex::new(S::zero(), S::zero());
    for (&lam, &c) in d.eigenvalues.iter().zip(&tw) {
        acc += Complex::new(c * c, S::zero()) / (Complex::new(lam, S::zero()) - z);
    }
    Ok(acc)
}

/// Decompose-then-sum convenience for one-shot callers.
pub fn resolvent_qform<S: Scalar>(s: &Matrix<S>, w: &[S], z: Cplx<S>) -> Result<Cplx<S>> {
    let d = eig_sym(s)?;
    resolvent_qform_decomp(&d, w, z)
}

/// Both sample covariance matrices in whitened coordinates.
pub fn covariance_set(batch: &SampleBatch, model: &ModelSpec) -> CovarianceSet {
    let n = model.dims.n;
    let p = model.dims.p;
    // Columns of W are Bx_j = z̃_j − μ̃.
    let w = Matrix::from_fn(p, n, |i, j| batch.z_tilde[(i, j)] - model.mu_tilde[i]);
    let s_uncentered = w.gram().scale(1.0 / n as f64);
    let bx = &batch.b_xbar;
    let centered = Matrix::from_fn(p, n, |i, j| w[(i, j)] - bx[i]);
    let s_centered = centered.gram().scale(1.0 / n as f64);
    let relation_residual = s_centered.max_abs_diff(&s_uncentered.sub(&outer(bx, bx)));
    CovarianceSet {
        s_centered,
        s_uncentered,
        relation_residual,
    }
}

/// |q_u/(1 − q_u) − q_c| where q_u and q_c are the resolvent quadratic
/// forms of the uncentered and centered covariance matrices at Bx̄.
pub fn rank_one_identity_residual(
    batch: &SampleBatch,
    model: &ModelSpec,
    z: Complex<f64>,
) -> Result<f64> {
    let cov = covariance_set(batch, model);
    let bx = &batch.b_xbar;
    if norm_sq(bx) == 0.0 {
        return Ok(0.0);
    }
    let qu = resolvent_qform(&cov.s_uncentered, bx, z)?;
    let qc = resolvent_qform(&cov.s_centered, bx, z)?;
    Ok((qu / (Complex::new(1.0, 0.0) - qu) - qc).norm())
}
