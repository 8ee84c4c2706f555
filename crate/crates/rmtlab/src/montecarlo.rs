//! Replicated experiments: joint CLT verification, process moments on the
//! contour, eigenvalue concentration, resolvent mean deviation, and
//! moment-scaling exponents. Replications are pure functions of
//! (config, rep index); aggregation runs in rep order so reports are
//! bit-identical regardless of thread count.

use std::time::Instant;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::{build_contour_with_vartheta, ContourSpec};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::model::{
    build_model, dims_from_regime_with_factors, sample_batch, batch_from_entries,
    EntryDistribution, GammaKind, ModelSpec, UKind,
};
use crate::statistics::{truncated_process, limit_kernel, ReplicationSpectra, TestFunctionPair};
use crate::truncate::{truncate_standardize, TruncationMode};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type C64 = Complex<f64>;

/// Stateless 64-bit mixer for per-replication seed derivation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derived stream seed for (master, rep, attempt).
pub fn derive_seed(master: u64, rep: u64, attempt: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(rep.wrapping_add(1))) ^ attempt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuMode {
    Zero,
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub beta: f64,
    pub scale: f64,
    pub q_factor: usize,
    pub m_factor: usize,
    pub gamma_kind: GammaKind,
    pub u_kind: UKind,
    pub dist: EntryDistribution,
    pub mu_mode: MuMode,
    pub fg: TestFunctionPair,
    pub reps: usize,
    pub z_points: Vec<C64>,
    pub delta: f64,
    pub v0: f64,
    pub nq: usize,
    pub vartheta: f64,
    pub master_seed: u64,
    pub truncation: TruncationMode,
    pub resample_degenerate: bool,
    /// 0 = use available parallelism.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Config("reps must be at least 2".into()));
        }
        let u_l = 1.0 - self.delta;
        let u_r = 1.0 + self.delta;
        for z in &self.z_points {
            if z.im == 0.0 && z.re >= u_l && z.re <= u_r {
                return Err(Error::Config(format!(
                    "z point {} lies on the real interval [{u_l}, {u_r}]",
                    z.re
                )));
            }
        }
        Ok(())
    }

    pub fn build_model_spec(&self) -> Result<ModelSpec> {
        let dims = dims_from_regime_with_factors(
            self.n,
            self.beta,
            self.scale,
            self.q_factor,
            self.m_factor,
        )?;
        let mu = match self.mu_mode {
            MuMode::Zero => vec![0.0; dims.q],
            MuMode::Constant(c) => vec![c; dims.q],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, u64::MAX, 0));
        build_model(dims, self.gamma_kind, self.u_kind, mu, &mut rng)
    }

    pub fn build_contour_spec(&self) -> ContourSpec {
        build_contour_with_vartheta(self.delta, self.v0, self.nq, self.vartheta)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerRepRecord {
    pub rep: usize,
    pub x_n: f64,
    pub y_n: f64,
    pub norm_sq: f64,
    /// Extreme eigenvalues of the uncentered covariance.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// X̂_n(z) per configured z point, as (re, im).
    pub xz: Vec<(f64, f64)>,
    pub fraction_truncated: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionDiagnostics {
    pub direction: [f64; 2],
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_stat: f64,
    pub ks_p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationSummary {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairMoment {
    pub z1: (f64, f64),
    pub z2: (f64, f64),
    /// E[X̂(z1)·X̂(z2)], no conjugation.
    pub empirical: (f64, f64),
    pub target: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossMoment {
    pub z: (f64, f64),
    /// E[X̂(z)·Y_n].
    pub empirical: (f64, f64),
    pub target: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub per_rep: Vec<PerRepRecord>,
    pub empirical_mean: [f64; 2],
    pub empirical_cov: [[f64; 2]; 2],
    pub gamma1_target: [[f64; 2]; 2],
    pub pair_moments: Vec<PairMoment>,
    pub cross_moments: Vec<CrossMoment>,
    pub normality: Vec<DirectionDiagnostics>,
    pub concentration: ConcentrationSummary,
    pub resample_count: usize,
    pub wall_time_secs: f64,
}

/// Per-rep attempt cap; exceeding it means degenerate draws dominate.
const MAX_ATTEMPTS: usize = 10;

fn one_replication(
    rep: usize,
    model: &ModelSpec,
    config: &ExperimentConfig,
    contour: &ContourSpec,
) -> Result<PerRepRecord> {
    let mut attempt = 0usize;
    loop {
        let seed = derive_seed(config.master_seed, rep as u64, attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = sample_batch(model, config.dist, &mut rng);
        let (batch, fraction_truncated) = match config.truncation {
            TruncationMode::Off => (raw, 0.0),
            mode => {
                let (xh, rep_report) = truncate_standardize(&raw.x, model, config.dist, mode)?;
                (batch_from_entries(model, xh), rep_report.fraction_truncated)
            }
        };
        match ReplicationSpectra::build(&batch, model) {
            Ok(spectra) => {
                let stats = spectra.clt_statistics(&config.fg);
                let geom = contour.geometry();
                let mut xz = Vec::with_capacity(config.z_points.len());
                for &z in &config.z_points {
                    let on_contour = {
                        let eps = 1e-12;
                        let on_v = ((z.re - geom.u_l).abs() <= eps
                            || (z.re - geom.u_r).abs() <= eps)
                            && z.im.abs() <= geom.v0 + eps;
                        let on_h = (z.im.abs() - geom.v0).abs() <= eps
                            && z.re >= geom.u_l - eps
                            && z.re <= geom.u_r + eps;
                        on_v || on_h
                    };
                    let val = if on_contour {
                        truncated_process(
                            &mut |w| spectra.process_xn(w),
                            z,
                            model.dims.n,
                            config.vartheta,
                            geom,
                        )?
                    } else {
                        spectra.process_xn(z)?
                    };
                    xz.push((val.re, val.im));
                }
                return Ok(PerRepRecord {
                    rep,
                    x_n: stats.x_n,
                    y_n: stats.y_n,
                    norm_sq: stats.norm_sq,
                    lambda_min: spectra.uncentered.lambda_min(),
                    lambda_max: spectra.uncentered.lambda_max(),
                    xz,
                    fraction_truncated,
                    attempts: attempt + 1,
                });
            }
            Err(Error::ZeroMeanVector) if config.resample_degenerate => {
                attempt += 1;
                if attempt >= MAX_ATTEMPTS {
                    return Err(Error::TooManyDegenerate {
                        limit: MAX_ATTEMPTS * config.reps,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn run_clt_experiment(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let start = Instant::now();
    let model = config.build_model_spec()?;
    let contour = config.build_contour_spec();

    let run = || -> Result<Vec<PerRepRecord>> {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| one_replication(rep, &model, config, &contour))
            .collect()
    };
    let per_rep = if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };

    let samples: Vec<[f64; 2]> = per_rep.iter().map(|r| [r.x_n, r.y_n]).collect();
    let cov = empirical_covariance(&samples)?;
    let mean = sample_mean(&samples);
    let gamma1_target = crate::statistics::gamma1(config.fg.f_at_1, config.fg.g_prime_at_0)?
        .gamma1;

    let normality = if per_rep.len() >= 50 {
        normality_diagnostics(&samples, &gamma1_target)?
    } else {
        Vec::new()
    };
    let concentration = eigen_concentration_summary(&per_rep);
    let (pair_moments, cross_moments) = process_moments(config, &per_rep);
    let resample_count = per_rep.iter().map(|r| r.attempts - 1).sum();

    Ok(MonteCarloReport {
        per_rep,
        empirical_mean: mean,
        empirical_cov: cov,
        gamma1_target,
        pair_moments,
        cross_moments,
        normality,
        concentration,
        resample_count,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Complex second moments E[X̂(z_i)X̂(z_j)] for all pairs, and mixed
/// moments with Y_n, with their limit-kernel targets attached.
fn process_moments(
    config: &ExperimentConfig,
    per_rep: &[PerRepRecord],
) -> (Vec<PairMoment>, Vec<CrossMoment>) {
    let r = per_rep.len() as f64;
    let g0 = config.fg.g_prime_at_0;
    let mut pairs = Vec::new();
    let mut crosses = Vec::new();
    for (i, &zi) in config.z_points.iter().enumerate() {
        for &zj in config.z_points.iter().skip(i) {
            let mut acc = C64::new(0.0, 0.0);
            let j = config.z_points.iter().position(|&z| z == zj).unwrap();
            for rec in per_rep {
                let a = C64::new(rec.xz[i].0, rec.xz[i].1);
                let b = C64::new(rec.xz[j].0, rec.xz[j].1);
                acc += a * b;
            }
            let emp = acc / r;
            let target = limit_kernel(zi, zj, g0)
                .map(|k| k[0][0])
                .unwrap_or(C64::new(f64::NAN, 0.0));
            pairs.push(PairMoment {
                z1: (zi.re, zi.im),
                z2: (zj.re, zj.im),
                empirical: (emp.re, emp.im),
                target: (target.re, target.im),
            });
        }
        let mut acc = C64::new(0.0, 0.0);
        for rec in per_rep {
            acc += C64::new(rec.xz[i].0, rec.xz[i].1) * rec.y_n;
        }
        let emp = acc / r;
        let target = limit_kernel(zi, zi, g0)
            .map(|k| k[0][1])
            .unwrap_or(C64::new(f64::NAN, 0.0));
        crosses.push(CrossMoment {
            z: (zi.re, zi.im),
            empirical: (emp.re, emp.im),
            target: (target.re, target.im),
        });
    }
    (pairs, crosses)
}

/// Process-moment front end: a CLT run whose deliverable is the per-z
/// kernel comparison.
pub fn run_process_experiment(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    if config.z_points.is_empty() {
        return Err(Error::Config("process experiment needs z points".into()));
    }
    run_clt_experiment(config)
}

fn sample_mean(samples: &[[f64; 2]]) -> [f64; 2] {
    let r = samples.len() as f64;
    let mut m = [0.0; 2];
    for s in samples {
        m[0] += s[0];
        m[1] += s[1];
    }
    [m[0] / r, m[1] / r]
}

/// Unbiased sample covariance (divisor R−1).
pub fn empirical_covariance(samples: &[[f64; 2]]) -> Result<[[f64; 2]; 2]> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let mean = sample_mean(samples);
    let mut cov = [[0.0; 2]; 2];
    for s in samples {
        let d = [s[0] - mean[0], s[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let denom = (samples.len() - 1) as f64;
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    Ok(cov)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// One-sample KS statistic against N(0, sigma²).
pub fn ks_statistic_normal(samples: &[f64], sigma: f64) -> f64 {
    let mut u: Vec<f64> = samples
        .iter()
        .map(|&x| std_normal_cdf(x / sigma))
        .collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - ui;
        let lo = ui - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Cramér–Wold reduction along three fixed directions: skewness, excess
/// kurtosis, KS statistic against the target normal law.
pub fn normality_diagnostics(
    samples: &[[f64; 2]],
    target_cov: &[[f64; 2]; 2],
) -> Result<Vec<DirectionDiagnostics>> {
    if samples.len() < 50 {
        return Err(Error::InsufficientSamples {
            needed: 50,
            got: samples.len(),
        });
    }
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let directions = [[1.0, 0.0], [0.0, 1.0], [inv_sqrt2, inv_sqrt2]];
    let mut out = Vec::with_capacity(3);
    for a in directions {
        let var_target = a[0] * (target_cov[0][0] * a[0] + target_cov[0][1] * a[1])
            + a[1] * (target_cov[1][0] * a[0] + target_cov[1][1] * a[1]);
        if var_target <= 1e-12 {
            return Err(Error::SingularDirection);
        }
        let proj: Vec<f64> = samples.iter().map(|s| a[0] * s[0] + a[1] * s[1]).collect();
        let n = proj.len() as f64;
        let mean = proj.iter().sum::<f64>() / n;
        let m2 = proj.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = proj.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = proj.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let skewness = m3 / m2.powf(1.5);
        let excess_kurtosis = m4 / (m2 * m2) - 3.0;
        let ks_stat = ks_statistic_normal(&proj, var_target.sqrt());
        let ks_p_value = kolmogorov_sf(n.sqrt() * ks_stat);
        out.push(DirectionDiagnostics {
            direction: a,
            skewness,
            excess_kurtosis,
            ks_stat,
            ks_p_value,
        });
    }
    Ok(out)
}

/// Quantiles of max_j |λ_j − 1| across replications.
pub fn eigen_concentration_summary(per_rep: &[PerRepRecord]) -> ConcentrationSummary {
    let mut devs: Vec<f64> = per_rep
        .iter()
        .map(|r| (r.lambda_max - 1.0).abs().max((r.lambda_min - 1.0).abs()))
        .collect();
    if devs.is_empty() {
        return ConcentrationSummary {
            p50: 0.0,
            p95: 0.0,
            p99: 0.0,
            max: 0.0,
        };
    }
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let idx = ((p * devs.len() as f64).ceil() as usize).clamp(1, devs.len()) - 1;
        devs[idx]
    };
    ConcentrationSummary {
        p50: q(0.50),
        p95: q(0.95),
        p99: q(0.99),
        max: *devs.last().unwrap(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventMeanCheck {
    pub empirical_mean: (f64, f64),
    pub target: (f64, f64),
    pub scaled_gap: f64,
}

/// Monte Carlo mean of the uncentered resolvent quadratic form against
/// c_n·m(z), scaled by n/√p.
pub fn resolvent_mean_check(config: &ExperimentConfig, z: C64) -> Result<ResolventMeanCheck> {
    config.validate()?;
    let model = config.build_model_spec()?;
    let qforms: Vec<C64> = (0..config.reps)
        .into_par_iter()
        .map(|rep| -> Result<C64> {
            let seed = derive_seed(config.master_seed, rep as u64, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sample_batch(&model, config.dist, &mut rng);
            let spectra = ReplicationSpectra::build(&batch, &model)?;
            crate::spectral::resolvent_qform_decomp(&spectra.uncentered, &spectra.b_xbar, z)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = qforms.iter().sum::<C64>() / qforms.len() as f64;
    let c_n = model.dims.c_n;
    let target = C64::new(c_n, 0.0) / (C64::new(1.0, 0.0) - z);
    let scaled_gap =
        (model.dims.n as f64 / (model.dims.p as f64).sqrt()) * (mean - target).norm();
    Ok(ResolventMeanCheck {
        empirical_mean: (mean.re, mean.im),
        target: (target.re, target.im),
        scaled_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingQuantity {
    /// (‖Bx̄‖² − c_n)²; theoretical log-log slope β − 2.
    MeanNormDev,
    /// |x₁ᵀBᵀBx̄₁|²; slope β − 1.
    CrossQform,
    /// |x̄₁ᵀBᵀBx̄₁|²; slope 2β − 2.
    MeanQform,
}

impl ScalingQuantity {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_norm_dev" => Ok(Self::MeanNormDev),
            "cross_qform" => Ok(Self::CrossQform),
            "mean_qform" => Ok(Self::MeanQform),
            other => Err(Error::Config(format!("unknown scaling quantity `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MeanNormDev => "mean_norm_dev",
            Self::CrossQform => "cross_qform",
            Self::MeanQform => "mean_qform",
        }
    }

    pub fn theoretical_slope(self, beta: f64) -> f64 {
        match self {
            Self::MeanNormDev => beta - 2.0,
            Self::CrossQform => beta - 1.0,
            Self::MeanQform => 2.0 * beta - 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub r2: f64,
    /// (n, p, empirical second moment) per grid point.
    pub values: Vec<(usize, usize, f64)>,
}

/// Light sampler for the scaling quantities: only x̄ and the first column
/// are needed, so entries are streamed without storing the batch.
fn scaling_sample(
    model: &ModelSpec,
    dist: EntryDistribution,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (model.dims.m, model.dims.n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xbar = vec![0.0; m];
    let mut x1 = vec![0.0; m];
    let inv_n = 1.0 / n as f64;
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..n {
            let v = dist.sample(&mut rng);
            if j == 0 {
                x1[i] = v;
            }
            acc += v;
        }
        xbar[i] = acc * inv_n;
    }
    (xbar, x1)
}

pub fn estimate_scaling_exponent(
    quantity: ScalingQuantity,
    n_grid: &[usize],
    beta: f64,
    reps: usize,
    dist: EntryDistribution,
    master_seed: u64,
) -> Result<ScalingFit> {
    let span = if n_grid.is_empty() {
        0.0
    } else {
        *n_grid.iter().max().unwrap() as f64 / *n_grid.iter().min().unwrap() as f64
    };
    if n_grid.len() < 4 || span < 8.0 {
        return Err(Error::GridTooSmall {
            points: n_grid.len(),
            span,
        });
    }
    let mut values = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let dims = dims_from_regime_with_factors(n, beta, 1.0, 2, 2)?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(master_seed, gi as u64, u64::MAX));
        let model = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; dims.q],
            &mut rng,
        )?;
        let second_moment: f64 = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(master_seed, (gi as u64) << 32 | rep as u64, 1);
                let (xbar, x1) = scaling_sample(&model, dist, seed);
                let b_xbar = model.b.matvec(&xbar);
                match quantity {
                    ScalingQuantity::MeanNormDev => {
                        let d = norm_sq(&b_xbar) - model.dims.c_n;
                        d * d
                    }
                    ScalingQuantity::CrossQform => {
                        let b_x1 = model.b.matvec(&x1);
                        let inv_n = 1.0 / model.dims.n as f64;
                        let b_xbar1: Vec<f64> = b_xbar
                            .iter()
                            .zip(&b_x1)
                            .map(|(&a, &b)| a - b * inv_n)
                            .collect();
                        let q = dot(&b_x1, &b_xbar1);
                        q * q
                    }
                    ScalingQuantity::MeanQform => {
                        let b_x1 = model.b.matvec(&x1);
                        let inv_n = 1.0 / model.dims.n as f64;
                        let b_xbar1: Vec<f64> = b_xbar
                            .iter()
                            .zip(&b_x1)
                            .map(|(&a, &b)| a - b * inv_n)
                            .collect();
                        let q = norm_sq(&b_xbar1);
                        q * q
                    }
                }
            })
            .sum::<f64>()
            / reps as f64;
        values.push((n, dims.p, second_moment));
    }

    // least squares of log(moment) on log(n)
    let xs: Vec<f64> = values.iter().map(|&(n, _, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&(_, _, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(ScalingFit { slope, r2, values })
}
