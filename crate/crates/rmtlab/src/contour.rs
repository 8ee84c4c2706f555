//! Rectangular contour around the limiting spectrum point 1, composite
//! Gauss–Legendre quadrature on it, the Cauchy-integral functional identity,
//! and the limiting variance/covariance contour integrals.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, SampleBatch};
use crate::scalar::Scalar;
use crate::statistics::{ContourGeometry, ReplicationSpectra, TestFunction};

type C64 = Complex<f64>;

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre<S: Scalar>(n: usize) -> (Vec<S>, Vec<S>) {
    assert!(n >= 1);
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    let half = S::from_f64_lit(0.5);
    for k in 0..(n + 1) / 2 {
        // Chebyshev initial guess
        let guess = (S::PI() * (S::from_usize_lit(k) + S::from_f64_lit(0.75))
            / (S::from_usize_lit(n) + half))
            .cos();
        let mut x = guess;
        let mut dp = S::one();
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let mut p0 = S::one();
            let mut p1 = x;
            for j in 2..=n {
                let jj = S::from_usize_lit(j);
                let p2 = ((S::from_f64_lit(2.0) * jj - S::one()) * x * p1
                    - (jj - S::one()) * p0)
                    / jj;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { S::one() } else { p0 };
            dp = S::from_usize_lit(n) * (x * pn - pm) / (x * x - S::one());
            let dx = pn / dp;
            x = x - dx;
            if dx.abs() <= S::epsilon() * (S::one() + x.abs()) {
                break;
            }
        }
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        let w = S::from_f64_lit(2.0) / ((S::one() - x * x) * dp * dp);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// Closed rectangle [u_l, u_r] × [−v0, v0], traversed counterclockwise,
/// with composite Gauss–Legendre nodes per segment.
#[derive(Debug, Clone)]
pub struct ContourSpec {
    pub u_l: f64,
    pub u_r: f64,
    pub v0: f64,
    pub delta: f64,
    pub vartheta: f64,
    /// (z, weight) pairs: ∮ h(z) dz ≈ Σ w·h(z).
    pub nodes: Vec<(C64, C64)>,
    pub nq_per_segment: usize,
}

pub fn build_contour(delta: f64, v0: f64, nq_per_segment: usize) -> ContourSpec {
    build_contour_with_vartheta(delta, v0, nq_per_segment, 0.5)
}

pub fn build_contour_with_vartheta(
    delta: f64,
    v0: f64,
    nq_per_segment: usize,
    vartheta: f64,
) -> ContourSpec {
    assert!((0.0..1.0).contains(&delta) && delta > 0.0);
    assert!(v0 > 0.0);
    assert!(nq_per_segment >= 8);
    let u_l = 1.0 - delta;
    let u_r = 1.0 + delta;
    let (t, w) = gauss_legendre::<f64>(nq_per_segment);
    let mut nodes = Vec::with_capacity(4 * nq_per_segment);
    // segment helper: z(s) = a + s·(b−a), s ∈ [0,1]; dz = (b−a) ds
    let mut segment = |a: C64, b: C64| {
        let d = b - a;
        for (&tk, &wk) in t.iter().zip(&w) {
            let s = 0.5 * (tk + 1.0);
            nodes.push((a + d * s, d * (0.5 * wk)));
        }
    };
    let bl = C64::new(u_l, -v0);
    let br = C64::new(u_r, -v0);
    let tr = C64::new(u_r, v0);
    let tl = C64::new(u_l, v0);
    segment(bl, br);
    segment(br, tr);
    segment(tr, tl);
    segment(tl, bl);
    ContourSpec {
        u_l,
        u_r,
        v0,
        delta,
        vartheta,
        nodes,
        nq_per_segment,
    }
}

impl ContourSpec {
    pub fn integrate(&self, mut h: impl FnMut(C64) -> C64) -> C64 {
        // fixed node order for deterministic reduction
        self.nodes
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, &(z, w)| acc + w * h(z))
    }

    pub fn try_integrate(&self, mut h: impl FnMut(C64) -> Result<C64>) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for &(z, w) in &self.nodes {
            acc += w * h(z)?;
        }
        Ok(acc)
    }

    pub fn geometry(&self) -> ContourGeometry {
        ContourGeometry {
            u_l: self.u_l,
            u_r: self.u_r,
            v0: self.v0,
        }
    }

    /// Sum of quadrature weights; 0 for any closed contour.
    pub fn weight_sum(&self) -> C64 {
        self.nodes
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, &(_, w)| acc + w)
    }
}

/// Both sides of the functional identity
/// ∫ f dG_n = −(1/2πi)·∮ f(z)·X_n(z) dz.
#[derive(Debug, Clone, Copy)]
pub struct CauchyFunctional {
    /// √p·(Σ t_j² f(λ_j) − f(1)), straight from the weighted ESD.
    pub lhs: f64,
    /// Contour-quadrature evaluation.
    pub rhs: C64,
    pub gap: f64,
}

pub fn cauchy_functional(
    batch: &SampleBatch,
    model: &ModelSpec,
    f: &TestFunction,
    contour: &ContourSpec,
) -> Result<CauchyFunctional> {
    let spectra = ReplicationSpectra::build(batch, model)?;
    cauchy_functional_from_spectra(&spectra, f, contour)
}

pub fn cauchy_functional_from_spectra(
    spectra: &ReplicationSpectra,
    f: &TestFunction,
    contour: &ContourSpec,
) -> Result<CauchyFunctional> {
    let (lmin, lmax) = (
        spectra.centered.lambda_min(),
        spectra.centered.lambda_max(),
    );
    if lmin <= contour.u_l || lmax >= contour.u_r {
        return Err(Error::SpectrumOutsideContour {
            lambda_min: lmin,
            lambda_max: lmax,
            u_l: contour.u_l,
            u_r: contour.u_r,
        });
    }
    let sqrt_p = (spectra.p as f64).sqrt();
    let f1 = f.at_1();
    let weighted: f64 = spectra
        .esd
        .lambdas
        .iter()
        .zip(&spectra.esd.weights)
        .map(|(&lam, &w)| w * f.eval(lam))
        .sum();
    let lhs = sqrt_p * (weighted - f1);
    let integral = contour.try_integrate(|z| Ok(f.eval_complex(z) * spectra.process_xn(z)?))?;
    let rhs = -integral / C64::new(0.0, 2.0 * std::f64::consts::PI);
    let gap = (C64::new(lhs, 0.0) - rhs).norm();
    Ok(CauchyFunctional { lhs, rhs, gap })
}

/// Limiting second moments by contour quadrature:
/// Var X = −(1/4π²)·∮∮ 2f(z1)f(z2)/((z1−1)(z2−1)),
/// Cov(X,Y) = (1/πi)·∮ g′(0)f(z)/(z−1), Var Y = 2g′(0)².
pub fn limit_variance_integrals(
    f: &TestFunction,
    g_prime_at_0: f64,
    contour: &ContourSpec,
) -> (f64, f64, f64) {
    let one = C64::new(1.0, 0.0);
    // the double integral factorizes through this single integral
    let i1 = contour.integrate(|z| f.eval_complex(z) / (z - one));
    let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let var_x = (-(i1 * i1) * (2.0 / four_pi_sq)).re;
    let cov_xy = (i1 * g_prime_at_0 / C64::new(0.0, std::f64::consts::PI)).re;
    let var_y = 2.0 * g_prime_at_0 * g_prime_at_0;
    (var_x, cov_xy, var_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::GFunction;

    #[test]
    fn gauss_legendre_exactness() {
        // degree-9 polynomial integrated exactly by 5 nodes
        let (x, w) = gauss_legendre::<f64>(5);
        let integral: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * (xi.powi(9) + 3.0 * xi.powi(4) - xi + 2.0))
            .sum();
        // ∫_{-1}^{1} = 0 + 6/5 − 0 + 4
        assert!((integral - (6.0 / 5.0 + 4.0)).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn closed_contour_of_dz_vanishes() {
        let c = build_contour(0.5, 1.0, 64);
        assert!(c.weight_sum().norm() <= 1e-13);
    }

    #[test]
    fn residue_theorem_pole_inside() {
        let c = build_contour(0.5, 1.0, 64);
        let one = C64::new(1.0, 0.0);
        let val = c.integrate(|z| one / (z - one));
        let target = C64::new(0.0, 2.0 * std::f64::consts::PI);
        assert!((val - target).norm() <= 1e-10);
    }

    #[test]
    fn residue_theorem_pole_outside() {
        let c = build_contour(0.5, 1.0, 64);
        let val = c.integrate(|z| C64::new(1.0, 0.0) / (z - C64::new(5.0, 0.0)));
        assert!(val.norm() <= 1e-10);
    }

    #[test]
    fn orientation_reversal_negates_integrals() {
        let c = build_contour(0.5, 1.0, 32);
        let mut rev = c.clone();
        rev.nodes = c
            .nodes
            .iter()
            .rev()
            .map(|&(z, w)| (z, -w))
            .collect();
        let one = C64::new(1.0, 0.0);
        let a = c.integrate(|z| (z * z).exp() / (z - one));
        let b = rev.integrate(|z| (z * z).exp() / (z - one));
        assert!((a + b).norm() <= 1e-12);
    }

    #[test]
    fn quadrature_convergence_on_residue() {
        let target = C64::new(0.0, 2.0 * std::f64::consts::PI);
        let one = C64::new(1.0, 0.0);
        let err_at = |nq: usize| {
            let c = build_contour(0.5, 1.0, nq);
            (c.integrate(|z| one / (z - one)) - target).norm()
        };
        let mut prev = err_at(8);
        for nq in [16, 32, 64] {
            let cur = err_at(nq);
            assert!(
                cur <= prev / 10.0 || cur <= 1e-13,
                "nq={nq}: {prev} -> {cur}"
            );
            prev = cur;
        }
    }

    #[test]
    fn limit_variance_integrals_registry() {
        let c = build_contour(0.5, 1.0, 128);
        // f(x) = x, g' = 1 -> (2, 2, 2)
        let f = TestFunction::Poly(vec![0.0, 1.0]);
        let (vx, cxy, vy) = limit_variance_integrals(&f, 1.0, &c);
        assert!((vx - 2.0).abs() <= 1e-8);
        assert!((cxy - 2.0).abs() <= 1e-8);
        assert!((vy - 2.0).abs() <= 1e-8);
        // f(x) = x², g' = 3 -> (2, 6, 18)
        let f = TestFunction::Poly(vec![0.0, 0.0, 1.0]);
        let (vx, cxy, vy) = limit_variance_integrals(&f, 3.0, &c);
        assert!((vx - 2.0).abs() <= 1e-8);
        assert!((cxy - 6.0).abs() <= 1e-8);
        assert!((vy - 18.0).abs() <= 1e-8);
        // f(x) = 2x − 3: f(1) = −1 -> (2, −2, 2)
        let f = TestFunction::Poly(vec![-3.0, 2.0]);
        let (vx, cxy, vy) = limit_variance_integrals(&f, 1.0, &c);
        assert!((vx - 2.0).abs() <= 1e-8);
        assert!((cxy + 2.0).abs() <= 1e-8);
        assert!((vy - 2.0).abs() <= 1e-8);
        // entire non-polynomial f
        let f = TestFunction::ExpAff { a: 1.0, c: -1.0 };
        let f1 = f.at_1();
        let (vx, cxy, _) = limit_variance_integrals(&f, 1.0, &c);
        assert!((vx - 2.0 * f1 * f1).abs() <= 1e-8);
        assert!((cxy - 2.0 * f1).abs() <= 1e-8);
        let _ = GFunction::Identity;
    }

    #[test]
    fn cauchy_functional_scalar_case() {
        use crate::linalg::Matrix;
        use crate::model::{batch_from_entries, build_model, Dimensions, GammaKind, UKind};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        // p=1: 𝕊̃ = s = centered variance of the entries; pick data with s inside (0.5, 1.5)
        let dims = Dimensions::new(1, 1, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = build_model(
            dims,
            GammaKind::IdentityPadded,
            UKind::CoordinateSelection,
            vec![0.0],
            &mut rng,
        )
        .unwrap();
        let batch = batch_from_entries(
            &model,
            Matrix::from_rows(&[vec![0.5, 2.0, 1.0, -0.5]]),
        );
        let spectra = ReplicationSpectra::build(&batch, &model).unwrap();
        let s = spectra.centered.eigenvalues[0];
        assert!(s > 0.5 && s < 1.5, "s = {s}");
        let c = build_contour(0.5, 1.0, 128);
        let f = TestFunction::Poly(vec![0.0, 0.0, 1.0]);
        let out = cauchy_functional(&batch, &model, &f, &c).unwrap();
        // residues at s and at 1 by hand: lhs = s² − 1
        assert!((out.lhs - (s * s - 1.0)).abs() < 1e-12);
        assert!(out.gap <= 1e-8, "gap {}", out.gap);
    }

    #[test]
    fn cauchy_functional_constant_f() {
        use crate::model::{build_model, sample_batch, Dimensions, EntryDistribution, GammaKind, UKind};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let dims = Dimensions::new(4, 8, 16, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let model = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; 8],
            &mut rng,
        )
        .unwrap();
        let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
        let c = build_contour(0.5, 1.0, 64);
        let f = TestFunction::Poly(vec![1.0]);
        let out = cauchy_functional(&batch, &model, &f, &c).unwrap();
        assert!(out.lhs.abs() <= 1e-12);
        assert!(out.rhs.norm() <= 1e-8);
    }

    #[test]
    fn cauchy_functional_detects_escaped_spectrum() {
        use crate::model::{build_model, sample_batch, Dimensions, EntryDistribution, GammaKind, UKind};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let dims = Dimensions::new(8, 16, 32, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; 16],
            &mut rng,
        )
        .unwrap();
        let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
        // tiny contour: at n=20 the spectrum is far from concentrated at 1
        let c = build_contour(0.001, 1.0, 16);
        let f = TestFunction::Poly(vec![0.0, 1.0]);
        assert!(matches!(
            cauchy_functional(&batch, &model, &f, &c),
            Err(Error::SpectrumOutsideContour { .. })
        ));
    }
}
