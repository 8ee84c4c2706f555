//! Entry truncation / centering / rescaling, with analytic centering terms
//! and per-row (or uniform) standard deviations for the four registry laws.
//!
//! Truncation is proof apparatus, not part of the limit theorem; it is off
//! by default in experiments and enabled only to verify that the statistics
//! are unchanged.

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::model::{EntryDistribution, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationMode {
    #[default]
    Off,
    /// Each row standardized by its own truncated standard deviation.
    PerRow,
    /// One scalar σ_n (root-mean of the row variances) for all rows.
    UniformSigma,
}

impl TruncationMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "per_row" => Ok(Self::PerRow),
            "uniform_sigma" => Ok(Self::UniformSigma),
            other => Err(Error::Config(format!("unknown truncation mode `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::PerRow => "per_row",
            Self::UniformSigma => "uniform_sigma",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruncationReport {
    /// Root-mean of the per-row truncated variances; ≤ 1.
    pub sigma_n: f64,
    /// Per-row cutoffs (np)^{1/4}/‖b_i‖; +∞ where ‖b_i‖ = 0.
    pub thresholds: Vec<f64>,
    pub fraction_truncated: f64,
    pub max_abs_after: f64,
}

/// Euclidean norm of each column of B.
pub fn column_norms(b: &Matrix<f64>) -> Vec<f64> {
    (0..b.ncols()).map(|j| norm(&b.column(j))).collect()
}

/// E[X·1{|X|≤t}] for the standardized registry laws.
pub fn truncated_mean(dist: EntryDistribution, t: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    match dist {
        // symmetric laws center themselves
        EntryDistribution::Gaussian
        | EntryDistribution::Rademacher
        | EntryDistribution::UniformUnitVar => 0.0,
        EntryDistribution::CenteredExponential => {
            let l = (1.0 - t).max(0.0);
            let u = 1.0 + t;
            l * (-l).exp() - u * (-u).exp()
        }
    }
}

/// E[X²·1{|X|≤t}].
pub fn truncated_second_moment(dist: EntryDistribution, t: f64) -> f64 {
    if t.is_infinite() {
        return 1.0;
    }
    match dist {
        EntryDistribution::Gaussian => {
            let phi = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let tail = 0.5 * libm::erfc(t / std::f64::consts::SQRT_2);
            1.0 - 2.0 * (t * phi + tail)
        }
        EntryDistribution::Rademacher => {
            if t >= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        EntryDistribution::UniformUnitVar => {
            let a = 3.0f64.sqrt();
            if t >= a {
                1.0
            } else {
                t.powi(3) / (3.0 * a)
            }
        }
        EntryDistribution::CenteredExponential => {
            let l = (1.0 - t).max(0.0);
            let u = 1.0 + t;
            (l * l + 1.0) * (-l).exp() - (u * u + 1.0) * (-u).exp()
        }
    }
}

/// P(|X| > t), used by tail oracles and diagnostics.
pub fn tail_probability(dist: EntryDistribution, t: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    match dist {
        EntryDistribution::Gaussian => libm::erfc(t / std::f64::consts::SQRT_2),
        EntryDistribution::Rademacher => {
            if t >= 1.0 {
                0.0
            } else {
                1.0
            }
        }
        EntryDistribution::UniformUnitVar => {
            let a = 3.0f64.sqrt();
            if t >= a {
                0.0
            } else {
                1.0 - t / a
            }
        }
        EntryDistribution::CenteredExponential => {
            let l = (1.0 - t).max(0.0);
            let u = 1.0 + t;
            1.0 - ((-l).exp() - (-u).exp())
        }
    }
}

/// Clip entries beyond the per-row cutoff (np)^{1/4}/‖b_i‖ to zero, subtract
/// the analytic mean of the clipped law, and standardize.
pub fn truncate_standardize(
    x: &Matrix<f64>,
    model: &ModelSpec,
    dist: EntryDistribution,
    mode: TruncationMode,
) -> Result<(Matrix<f64>, TruncationReport)> {
    let (m, n, p) = (model.dims.m, model.dims.n, model.dims.p);
    assert_eq!((x.nrows(), x.ncols()), (m, n), "entry matrix shape mismatch");
    let col_norms = column_norms(&model.b);
    let cut = ((n * p) as f64).powf(0.25);
    let thresholds: Vec<f64> = col_norms
        .iter()
        .map(|&b| if b > 0.0 { cut / b } else { f64::INFINITY })
        .collect();

    let mut out = x.clone();
    let mut clipped = 0usize;
    let mut row_vars = vec![1.0f64; m];
    for i in 0..m {
        let t = thresholds[i];
        let m1 = truncated_mean(dist, t);
        let var = truncated_second_moment(dist, t) - m1 * m1;
        if var <= 0.0 && col_norms[i] > 0.0 {
            return Err(Error::DegenerateRow { row: i });
        }
        row_vars[i] = var;
        for v in out.row_mut(i) {
            if v.abs() > t {
                *v = 0.0;
                clipped += 1;
            }
            *v -= m1;
        }
    }

    let sigma_n = (row_vars.iter().sum::<f64>() / m as f64).sqrt();
    match mode {
        TruncationMode::Off => {}
        TruncationMode::PerRow => {
            for i in 0..m {
                let s = row_vars[i].sqrt();
                for v in out.row_mut(i) {
                    *v /= s;
                }
            }
        }
        TruncationMode::UniformSigma => {
            for i in 0..m {
                for v in out.row_mut(i) {
                    *v /= sigma_n;
                }
            }
        }
    }

    let report = TruncationReport {
        sigma_n,
        thresholds,
        fraction_truncated: clipped as f64 / (m * n) as f64,
        max_abs_after: out.max_abs(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, sample_batch, Dimensions, GammaKind, UKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coord_model(p: usize, q: usize, m: usize, n: usize) -> ModelSpec {
        let dims = Dimensions::new(p, q, m, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        build_model(
            dims,
            GammaKind::IdentityPadded,
            UKind::CoordinateSelection,
            vec![0.0; q],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn column_norms_examples() {
        assert_eq!(column_norms(&Matrix::identity(2)), vec![1.0, 1.0]);
        assert_eq!(column_norms(&Matrix::zeros(2, 3)), vec![0.0; 3]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.6]]);
        let n = column_norms(&b);
        assert!((n[0] - 1.0).abs() < 1e-15 && (n[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rademacher_is_never_truncated() {
        let model = coord_model(2, 4, 8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = sample_batch(&model, EntryDistribution::Rademacher, &mut rng);
        let (xh, rep) =
            truncate_standardize(&batch.x, &model, EntryDistribution::Rademacher, TruncationMode::PerRow)
                .unwrap();
        assert_eq!(rep.fraction_truncated, 0.0);
        assert!((rep.sigma_n - 1.0).abs() <= 1e-12);
        assert!(xh.max_abs_diff(&batch.x) <= 1e-12);
        assert!(rep.thresholds.iter().all(|&t| t >= 1.0));
    }

    #[test]
    fn zero_norm_row_has_infinite_threshold() {
        // identity_padded + coordinate_selection leaves trailing B columns zero
        let model = coord_model(1, 2, 4, 8);
        let norms = column_norms(&model.b);
        assert!(norms[3] == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
        let (_, rep) =
            truncate_standardize(&batch.x, &model, EntryDistribution::Gaussian, TruncationMode::PerRow)
                .unwrap();
        assert!(rep.thresholds[3].is_infinite());
    }

    #[test]
    fn gaussian_truncation_fraction_matches_tail_oracle() {
        // p=4, n=256, coordinate selection: first p columns of B have norm 1,
        // so their threshold is (np)^{1/4}; remaining rows are untouched in
        // the fraction only through their own (larger) thresholds.
        let model = coord_model(4, 4, 4, 256);
        let t = ((256 * 4) as f64).powf(0.25);
        let expect = tail_probability(EntryDistribution::Gaussian, t);
        let mut clipped = 0usize;
        let mut total = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
            let (_, rep) =
                truncate_standardize(&batch.x, &model, EntryDistribution::Gaussian, TruncationMode::PerRow)
                    .unwrap();
            clipped += (rep.fraction_truncated * (4.0 * 256.0)).round() as usize;
            total += 4 * 256;
        }
        let frac = clipped as f64 / total as f64;
        let se = (expect * (1.0 - expect) / total as f64).sqrt();
        assert!(
            (frac - expect).abs() <= 3.0 * se + 1e-12,
            "frac {frac} expect {expect} se {se}"
        );
    }

    #[test]
    fn idempotent_when_nothing_truncated() {
        let model = coord_model(2, 4, 8, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = sample_batch(&model, EntryDistribution::UniformUnitVar, &mut rng);
        // uniform entries are bounded by √3 < (np)^{1/4} here, so pass 1 truncates nothing
        let (x1, rep1) = truncate_standardize(
            &batch.x,
            &model,
            EntryDistribution::UniformUnitVar,
            TruncationMode::PerRow,
        )
        .unwrap();
        assert_eq!(rep1.fraction_truncated, 0.0);
        let (x2, _) = truncate_standardize(
            &x1,
            &model,
            EntryDistribution::UniformUnitVar,
            TruncationMode::PerRow,
        )
        .unwrap();
        let rel = x2.max_abs_diff(&x1) / (1.0 + x1.max_abs());
        assert!(rel <= 1e-8);
    }

    #[test]
    fn truncated_moment_preservation_gaussian() {
        // large batch: mean within 5 SE of 0, variance within 1% of 1
        let model = coord_model(8, 16, 256, 4096);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
        let (xh, _) =
            truncate_standardize(&batch.x, &model, EntryDistribution::Gaussian, TruncationMode::PerRow)
                .unwrap();
        let total = (256 * 4096) as f64;
        let mean = xh.as_slice().iter().sum::<f64>() / total;
        let var = xh.as_slice().iter().map(|v| v * v).sum::<f64>() / total - mean * mean;
        assert!(mean.abs() <= 5.0 / total.sqrt());
        assert!((var - 1.0).abs() <= 0.01);
    }

    #[test]
    fn clipped_entries_respect_doubled_bound() {
        let model = coord_model(4, 8, 16, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = sample_batch(&model, EntryDistribution::CenteredExponential, &mut rng);
        let (xh, _) = truncate_standardize(
            &batch.x,
            &model,
            EntryDistribution::CenteredExponential,
            TruncationMode::Off,
        )
        .unwrap();
        let norms = column_norms(&model.b);
        let cut = ((64 * 4) as f64).powf(0.25);
        for i in 0..16 {
            if norms[i] == 0.0 {
                continue;
            }
            for &v in xh.row(i) {
                assert!(v.abs() * norms[i] <= 2.0 * cut + 1e-12);
            }
        }
    }

    #[test]
    fn fraction_truncated_decreases_in_n() {
        // heavier-tailed law so the small-n fraction is visibly nonzero
        let frac_at = |n: usize, seed: u64| {
            let model = coord_model(4, 4, 4, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..50 {
                let batch = sample_batch(&model, EntryDistribution::CenteredExponential, &mut rng);
                let (_, rep) = truncate_standardize(
                    &batch.x,
                    &model,
                    EntryDistribution::CenteredExponential,
                    TruncationMode::PerRow,
                )
                .unwrap();
                acc += rep.fraction_truncated;
            }
            acc / 50.0
        };
        let f_small = frac_at(16, 12);
        let f_large = frac_at(1024, 13);
        assert!(f_small >= f_large, "{f_small} < {f_large}");
    }

    #[test]
    fn sigma_bounded_by_one() {
        for dist in [
            EntryDistribution::Gaussian,
            EntryDistribution::UniformUnitVar,
            EntryDistribution::CenteredExponential,
        ] {
            for t in [0.5, 1.0, 2.0, 5.0, f64::INFINITY] {
                let m1 = truncated_mean(dist, t);
                let v = truncated_second_moment(dist, t) - m1 * m1;
                assert!(v <= 1.0 + 1e-12, "{dist:?} t={t} var={v}");
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn exponential_moments_close_forms_vs_quadrature() {
        // midpoint-rule oracle on the density of Exp(1)−1
        let dist = EntryDistribution::CenteredExponential;
        for t in [0.4, 1.0, 2.5] {
            let steps = 4_000_000;
            let lo: f64 = -1.0;
            let hi = t;
            let h = (hi - lo) / steps as f64;
            let (mut q1, mut q2, mut q0) = (0.0, 0.0, 0.0);
            for k in 0..steps {
                let x: f64 = lo + (k as f64 + 0.5) * h;
                if x.abs() > t {
                    continue;
                }
                let dens = (-(x + 1.0)).exp();
                q0 += dens * h;
                q1 += x * dens * h;
                q2 += x * x * dens * h;
            }
            assert!((q0 - (1.0 - tail_probability(dist, t))).abs() < 1e-6);
            assert!((q1 - truncated_mean(dist, t)).abs() < 1e-6);
            assert!((q2 - truncated_second_moment(dist, t)).abs() < 1e-6);
        }
    }
}
