//! Population model: dimensions in the p/n -> 0 regime, the entry-law
//! registry, the whitening map B = Σ_p^{-1/2}UΓ, and i.i.d. sample batches.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::spectral::eig_sym;

/// Relative positive-definiteness floor for Σ_p.
pub const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    /// Reduced dimension.
    pub p: usize,
    /// Observed dimension, p <= q.
    pub q: usize,
    /// Latent dimension, q <= m.
    pub m: usize,
    /// Sample size, p < n.
    pub n: usize,
    /// p/n.
    pub c_n: f64,
}

impl Dimensions {
    pub fn new(p: usize, q: usize, m: usize, n: usize) -> Result<Self> {
        if p == 0 || !(p <= q && q <= m) || p >= n {
            return Err(Error::RegimeViolation { p, n });
        }
        Ok(Self {
            p,
            q,
            m,
            n,
            c_n: p as f64 / n as f64,
        })
    }
}

/// p = max(1, floor(scale·n^beta)), q = q_factor·p, m = m_factor·q.
pub fn dims_from_regime(n: usize, beta: f64, scale: f64) -> Result<Dimensions> {
    dims_from_regime_with_factors(n, beta, scale, 2, 2)
}

pub fn dims_from_regime_with_factors(
    n: usize,
    beta: f64,
    scale: f64,
    q_factor: usize,
    m_factor: usize,
) -> Result<Dimensions> {
    assert!(n >= 4, "n must be at least 4");
    assert!((0.0..1.0).contains(&beta) && scale > 0.0);
    let p = ((scale * (n as f64).powf(beta)).floor() as usize).max(1);
    if p >= n {
        return Err(Error::RegimeViolation { p, n });
    }
    Dimensions::new(p, q_factor * p, m_factor * q_factor * p, n)
}

/// Entry laws with mean 0, variance 1 and a closed-form fourth moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on [−√3, √3].
    UniformUnitVar,
    /// Exp(1) − 1.
    CenteredExponential,
}

impl EntryDistribution {
    pub fn fourth_moment(self) -> f64 {
        match self {
            Self::Gaussian => 3.0,
            Self::Rademacher => 1.0,
            Self::UniformUnitVar => 9.0 / 5.0,
            Self::CenteredExponential => 9.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => StandardNormal.sample(rng),
            Self::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::UniformUnitVar => {
                let a = 3.0f64.sqrt();
                rng.gen_range(-a..a)
            }
            Self::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform" | "uniform_unit_var" => Ok(Self::UniformUnitVar),
            "exponential" | "centered_exponential" => Ok(Self::CenteredExponential),
            other => Err(Error::Config(format!("unknown entry distribution `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::UniformUnitVar => "uniform_unit_var",
            Self::CenteredExponential => "centered_exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaKind {
    /// Γ = [I_q | 0], q×m.
    IdentityPadded,
    /// i.i.d. standard normal entries, unscaled (whitening removes scale).
    GaussianRandom,
}

impl GammaKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity_padded" => Ok(Self::IdentityPadded),
            "gaussian_random" => Ok(Self::GaussianRandom),
            other => Err(Error::Config(format!("unknown gamma kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::IdentityPadded => "identity_padded",
            Self::GaussianRandom => "gaussian_random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UKind {
    /// First p rows of I_q.
    CoordinateSelection,
    /// Orthonormalized row space of a p×q Gaussian matrix.
    RandomSemiOrthogonal,
}

impl UKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "coordinate_selection" => Ok(Self::CoordinateSelection),
            "random_semi_orthogonal" => Ok(Self::RandomSemiOrthogonal),
            other => Err(Error::Config(format!("unknown u kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CoordinateSelection => "coordinate_selection",
            Self::RandomSemiOrthogonal => "random_semi_orthogonal",
        }
    }
}

/// Immutable population model; safe to share read-only across workers.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dims: Dimensions,
    pub mu: Vec<f64>,
    pub gamma: Matrix<f64>,
    pub u: Matrix<f64>,
    pub sigma_p: Matrix<f64>,
    pub sigma_p_inv_sqrt: Matrix<f64>,
    /// Whitening map B = Σ_p^{-1/2}UΓ with B·Bᵀ = I_p.
    pub b: Matrix<f64>,
    pub mu_tilde: Vec<f64>,
}

pub fn build_model<R: Rng + ?Sized>(
    dims: Dimensions,
    gamma_kind: GammaKind,
    u_kind: UKind,
    mu: Vec<f64>,
    rng: &mut R,
) -> Result<ModelSpec> {
    assert_eq!(mu.len(), dims.q, "mu must have length q");
    let gamma = match gamma_kind {
        GammaKind::IdentityPadded => {
            Matrix::from_fn(dims.q, dims.m, |i, j| if i == j { 1.0 } else { 0.0 })
        }
        GammaKind::GaussianRandom => {
            Matrix::from_fn(dims.q, dims.m, |_, _| StandardNormal.sample(rng))
        }
    };
    let u = match u_kind {
        UKind::CoordinateSelection => {
            Matrix::from_fn(dims.p, dims.q, |i, j| if i == j { 1.0 } else { 0.0 })
        }
        UKind::RandomSemiOrthogonal => {
            let g = Matrix::from_fn(dims.p, dims.q, |_, _| StandardNormal.sample(rng));
            orthonormalize_rows(&g)?
        }
    };

    let ug = u.matmul(&gamma); // p×m
    let sigma_p = ug.gram();
    let d = eig_sym(&sigma_p)?;
    let (min_eig, max_eig) = (d.lambda_min(), d.lambda_max());
    if min_eig <= PD_TOL * max_eig {
        return Err(Error::NotPositiveDefinite { min_eig, max_eig });
    }
    let sigma_p_inv_sqrt = d.apply_matrix_function(|x| 1.0 / x.sqrt());
    let b = sigma_p_inv_sqrt.matmul(&ug);
    let mu_tilde = sigma_p_inv_sqrt.matvec(&u.matvec(&mu));
    Ok(ModelSpec {
        dims,
        mu,
        gamma,
        u,
        sigma_p,
        sigma_p_inv_sqrt,
        b,
        mu_tilde,
    })
}

/// Modified Gram–Schmidt on the rows; two passes for orthogonality at 1e-10.
fn orthonormalize_rows(g: &Matrix<f64>) -> Result<Matrix<f64>> {
    let p = g.nrows();
    let mut rows: Vec<Vec<f64>> = (0..p).map(|i| g.row(i).to_vec()).collect();
    for _pass in 0..2 {
        for i in 0..p {
            for k in 0..i {
                let proj = crate::linalg::dot(&rows[i], &rows[k]);
                let prev = rows[k].clone();
                for (x, y) in rows[i].iter_mut().zip(&prev) {
                    *x -= proj * y;
                }
            }
            let nrm = norm_sq(&rows[i]).sqrt();
            if nrm <= 1e-12 {
                return Err(Error::NotPositiveDefinite {
                    min_eig: 0.0,
                    max_eig: 1.0,
                });
            }
            for x in rows[i].iter_mut() {
                *x /= nrm;
            }
        }
    }
    Ok(Matrix::from_rows(&rows))
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// Raw entries, m×n.
    pub x: Matrix<f64>,
    /// Row means of X.
    pub xbar: Vec<f64>,
    /// B·x̄.
    pub b_xbar: Vec<f64>,
    /// Whitened observations z̃_j = μ̃ + B·x_j, p×n.
    pub z_tilde: Matrix<f64>,
    pub z_tilde_bar: Vec<f64>,
}

pub fn sample_batch<R: Rng + ?Sized>(
    model: &ModelSpec,
    dist: EntryDistribution,
    rng: &mut R,
) -> SampleBatch {
    let (m, n) = (model.dims.m, model.dims.n);
    let mut x = Matrix::zeros(m, n);
    for i in 0..m {
        for v in x.row_mut(i) {
            *v = dist.sample(rng);
        }
    }
    batch_from_entries(model, x)
}

/// Derive all batch fields from a given entry matrix (also the zero-noise
/// test hook).
pub fn batch_from_entries(model: &ModelSpec, x: Matrix<f64>) -> SampleBatch {
    let (p, m, n) = (model.dims.p, model.dims.m, model.dims.n);
    assert_eq!((x.nrows(), x.ncols()), (m, n));
    let inv_n = 1.0 / n as f64;
    let xbar: Vec<f64> = (0..m)
        .map(|i| x.row(i).iter().sum::<f64>() * inv_n)
        .collect();
    let b_xbar = model.b.matvec(&xbar);
    let bx = model.b.matmul(&x); // p×n
    let z_tilde = Matrix::from_fn(p, n, |i, j| model.mu_tilde[i] + bx[(i, j)]);
    let z_tilde_bar: Vec<f64> = (0..p)
        .map(|i| z_tilde.row(i).iter().sum::<f64>() * inv_n)
        .collect();
    SampleBatch {
        x,
        xbar,
        b_xbar,
        z_tilde,
        z_tilde_bar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dims_from_regime_examples() {
        let d = dims_from_regime(4000, 0.4, 1.0).unwrap();
        assert_eq!(d.p, 27);
        assert_eq!(d.c_n, 27.0 / 4000.0);
        assert_eq!((d.q, d.m), (54, 108));

        let d = dims_from_regime(100, 0.01, 1.0).unwrap();
        assert_eq!(d.p, 1);

        assert!(matches!(
            dims_from_regime(4, 0.99, 3.0),
            Err(Error::RegimeViolation { .. })
        ));
    }

    #[test]
    fn identity_model_whitens_to_identity() {
        let dims = Dimensions::new(2, 2, 2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = build_model(
            dims,
            GammaKind::IdentityPadded,
            UKind::CoordinateSelection,
            vec![0.0; 2],
            &mut rng,
        )
        .unwrap();
        assert!(m.sigma_p.max_abs_diff(&Matrix::identity(2)) < 1e-12);
        let bbt = m.b.gram();
        assert!(bbt.max_abs_diff(&Matrix::identity(2)) <= 1e-10);
    }

    #[test]
    fn single_coordinate_selection() {
        let dims = Dimensions::new(1, 2, 2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = build_model(
            dims,
            GammaKind::IdentityPadded,
            UKind::CoordinateSelection,
            vec![0.0; 2],
            &mut rng,
        )
        .unwrap();
        assert!((m.sigma_p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m.b[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(m.b[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn random_model_invariants_seed_7() {
        let dims = Dimensions::new(3, 6, 12, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; 6],
            &mut rng,
        )
        .unwrap();
        let bbt = m.b.gram();
        assert!(bbt.max_abs_diff(&Matrix::identity(3)) <= 1e-10);
        // Σ_p^{-1/2} cross-check by squaring back to Σ_p^{-1}.
        let inv = m.sigma_p_inv_sqrt.matmul(&m.sigma_p_inv_sqrt);
        let should_be_i = inv.matmul(&m.sigma_p);
        assert!(should_be_i.max_abs_diff(&Matrix::identity(3)) <= 1e-9);
        // column-norm facts
        let mut sum = 0.0;
        for j in 0..dims.m {
            let col = m.b.column(j);
            let ns = norm_sq(&col);
            assert!(ns.sqrt() <= 1.0 + 1e-10);
            sum += ns;
        }
        assert!((sum - dims.p as f64).abs() <= 1e-8 * dims.p as f64);
    }

    #[test]
    fn rademacher_support() {
        let dims = Dimensions::new(2, 4, 8, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = build_model(
            dims,
            GammaKind::IdentityPadded,
            UKind::CoordinateSelection,
            vec![0.0; 4],
            &mut rng,
        )
        .unwrap();
        let b = sample_batch(&m, EntryDistribution::Rademacher, &mut rng);
        assert!(b.x.as_slice().iter().all(|&v| v.abs() == 1.0));
    }

    #[test]
    fn zero_noise_hook_gives_mu_tilde() {
        let dims = Dimensions::new(2, 4, 8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![1.0, -2.0, 0.5, 3.0],
            &mut rng,
        )
        .unwrap();
        let batch = batch_from_entries(&m, Matrix::zeros(8, 5));
        for j in 0..5 {
            for i in 0..2 {
                assert!((batch.z_tilde[(i, j)] - m.mu_tilde[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_mean_identity() {
        let dims = Dimensions::new(2, 4, 8, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.3; 4],
            &mut rng,
        )
        .unwrap();
        let batch = sample_batch(&m, EntryDistribution::Gaussian, &mut rng);
        // z̃bar − μ̃ = B·x̄ elementwise
        for i in 0..2 {
            assert!(
                (batch.z_tilde_bar[i] - m.mu_tilde[i] - batch.b_xbar[i]).abs() <= 1e-10
            );
        }
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let dims = Dimensions::new(2, 4, 8, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; 4],
            &mut rng,
        )
        .unwrap();
        let b1 = sample_batch(&m, EntryDistribution::Gaussian, &mut ChaCha8Rng::seed_from_u64(77));
        let b2 = sample_batch(&m, EntryDistribution::Gaussian, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(b1.x, b2.x);
    }

    #[test]
    fn gaussian_law_of_large_numbers() {
        // one long row: mean near 0, variance near 1
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = EntryDistribution::Gaussian.sample(&mut rng);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() <= 0.01);
    }

    #[test]
    fn fourth_moments_match_analytic_values() {
        // Monte Carlo fourth moments vs the registry's closed forms.
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for dist in [
            EntryDistribution::Gaussian,
            EntryDistribution::Rademacher,
            EntryDistribution::UniformUnitVar,
            EntryDistribution::CenteredExponential,
        ] {
            let n = 400_000usize;
            let mut m2 = 0.0;
            let mut m4 = 0.0;
            for _ in 0..n {
                let v = dist.sample(&mut rng);
                m2 += v * v;
                m4 += v * v * v * v;
            }
            m2 /= n as f64;
            m4 /= n as f64;
            assert!((m2 - 1.0).abs() < 0.05, "{dist:?} variance {m2}");
            let rel = (m4 - dist.fourth_moment()).abs() / dist.fourth_moment();
            assert!(rel < 0.15, "{dist:?} fourth moment {m4}");
        }
    }
}
