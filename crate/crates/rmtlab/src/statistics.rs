//! The central statistics (X_n, Y_n), the resolvent process X_n(z) with its
//! truncated variant, and the limiting covariance formulas Γ₁ / Γ₂.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, SampleBatch};
use crate::spectral::{
    covariance_set, eig_sym, resolvent_qform_decomp, weighted_esd, SpectralDecomposition,
    WeightedESD,
};

/// Underflow guard for ‖v̄‖².
const TINY: f64 = 1e-300;

/// Hard error threshold for the centered vs rank-one-update path cross-check.
const PATH_TOL: f64 = 1e-6;

type C64 = Complex<f64>;

/// Entire test functions evaluable at real and complex arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// c0 + c1·x + c2·x² + …
    Poly(Vec<f64>),
    /// exp(a·x) + c
    ExpAff { a: f64, c: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
            Self::ExpAff { a, c } => (a * x).exp() + c,
        }
    }

    pub fn eval_complex(&self, z: C64) -> C64 {
        match self {
            Self::Poly(c) => c
                .iter()
                .rev()
                .fold(C64::new(0.0, 0.0), |acc, &ck| acc * z + ck),
            Self::ExpAff { a, c } => (z * *a).exp() + *c,
        }
    }

    pub fn at_1(&self) -> f64 {
        self.eval(1.0)
    }

    /// `poly:[c0,c1,...]` or `expaff:a,c`
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(body) = s.strip_prefix("poly:") {
            let body = body
                .trim()
                .strip_prefix('[')
                .and_then(|b| b.strip_suffix(']'))
                .ok_or_else(|| Error::Config(format!("bad poly spec `{s}`")))?;
            let coeffs: std::result::Result<Vec<f64>, _> =
                body.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let coeffs = coeffs.map_err(|e| Error::Config(format!("bad poly spec `{s}`: {e}")))?;
            if coeffs.is_empty() {
                return Err(Error::Config("empty poly coefficient list".into()));
            }
            Ok(Self::Poly(coeffs))
        } else if let Some(body) = s.strip_prefix("expaff:") {
            let parts: Vec<&str> = body.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::Config(format!("bad expaff spec `{s}`")));
            }
            let a = parts[0]
                .parse()
                .map_err(|e| Error::Config(format!("bad expaff spec `{s}`: {e}")))?;
            let c = parts[1]
                .parse()
                .map_err(|e| Error::Config(format!("bad expaff spec `{s}`: {e}")))?;
            Ok(Self::ExpAff { a, c })
        } else {
            Err(Error::Config(format!("unknown test function `{s}`")))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Poly(c) => format!("poly:{c:?}"),
            Self::ExpAff { a, c } => format!("expaff:{a},{c}"),
        }
    }
}

/// Smooth g registry; all members have g′(0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GFunction {
    Identity,
    /// x + x²
    Poly2,
    /// exp(x) − 1
    Expm1,
}

impl GFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Poly2 => x + x * x,
            Self::Expm1 => x.exp_m1(),
        }
    }

    pub fn prime_at_0(self) -> f64 {
        1.0
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "poly2" => Ok(Self::Poly2),
            "expm1" => Ok(Self::Expm1),
            other => Err(Error::Config(format!("unknown g function `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Poly2 => "poly2",
            Self::Expm1 => "expm1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestFunctionPair {
    pub f: TestFunction,
    pub g: GFunction,
    pub f_at_1: f64,
    pub g_prime_at_0: f64,
}

impl TestFunctionPair {
    pub fn new(f: TestFunction, g: GFunction) -> Result<Self> {
        let f_at_1 = f.at_1();
        if f_at_1 == 0.0 {
            return Err(Error::InvalidHypothesis { what: "f(1)" });
        }
        let g_prime_at_0 = g.prime_at_0();
        if g_prime_at_0 == 0.0 {
            return Err(Error::InvalidHypothesis { what: "g'(0)" });
        }
        Ok(Self {
            f,
            g,
            f_at_1,
            g_prime_at_0,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CLTStatistics {
    pub x_n: f64,
    pub y_n: f64,
    /// (v̄ᵀ f(𝕊̃) v̄)/‖v̄‖² with v̄ = z̄̃ − μ̃.
    pub ratio: f64,
    pub norm_sq: f64,
}

#[derive(Debug, Clone)]
pub struct LimitCovariance {
    pub gamma1: [[f64; 2]; 2],
    pub description: String,
}

/// Γ₁ = [[2f(1)², 2g′(0)f(1)], [2g′(0)f(1), 2g′(0)²]].
pub fn gamma1(f_at_1: f64, g_prime_at_0: f64) -> Result<LimitCovariance> {
    if f_at_1 == 0.0 {
        return Err(Error::InvalidHypothesis { what: "f(1)" });
    }
    if g_prime_at_0 == 0.0 {
        return Err(Error::InvalidHypothesis { what: "g'(0)" });
    }
    Ok(LimitCovariance {
        gamma1: [
            [2.0 * f_at_1 * f_at_1, 2.0 * g_prime_at_0 * f_at_1],
            [
                2.0 * g_prime_at_0 * f_at_1,
                2.0 * g_prime_at_0 * g_prime_at_0,
            ],
        ],
        description: format!("f(1)={f_at_1}, g'(0)={g_prime_at_0}"),
    })
}

/// Two-point limit kernel:
/// [[2/((1−z1)(1−z2)), 2g′(0)/(1−z1)], [2g′(0)/(1−z2), 2g′(0)²]].
pub fn limit_kernel(z1: C64, z2: C64, g_prime_at_0: f64) -> Result<[[C64; 2]; 2]> {
    let one = C64::new(1.0, 0.0);
    if (one - z1).norm() == 0.0 || (one - z2).norm() == 0.0 {
        return Err(Error::PoleHit { gap: 0.0 });
    }
    let a = one - z1;
    let b = one - z2;
    let g = C64::new(g_prime_at_0, 0.0);
    Ok([
        [C64::new(2.0, 0.0) / (a * b), g * 2.0 / a],
        [g * 2.0 / b, g * g * 2.0],
    ])
}

/// Per-replication spectral state shared by (X_n, Y_n) and X_n(z) across
/// many evaluation points: one eigendecomposition per covariance matrix.
pub struct ReplicationSpectra {
    pub b_xbar: Vec<f64>,
    pub norm_sq: f64,
    pub centered: SpectralDecomposition<f64>,
    pub uncentered: SpectralDecomposition<f64>,
    pub esd: WeightedESD<f64>,
    pub p: usize,
    pub n: usize,
    pub c_n: f64,
}

impl ReplicationSpectra {
    pub fn build(batch: &SampleBatch, model: &ModelSpec) -> Result<Self> {
        let cov = covariance_set(batch, model);
        let norm_sq = crate::linalg::norm_sq(&batch.b_xbar);
        if norm_sq <= TINY {
            return Err(Error::ZeroMeanVector);
        }
        let centered = eig_sym(&cov.s_centered)?;
        let uncentered = eig_sym(&cov.s_uncentered)?;
        let esd = weighted_esd(&centered, &batch.b_xbar)?;
        Ok(Self {
            b_xbar: batch.b_xbar.clone(),
            norm_sq,
            centered,
            uncentered,
            esd,
            p: model.dims.p,
            n: model.dims.n,
            c_n: model.dims.c_n,
        })
    }

    /// Theorem statistics from the precomputed centered spectrum.
    pub fn clt_statistics(&self, fg: &TestFunctionPair) -> CLTStatistics {
        let ratio: f64 = self
            .esd
            .lambdas
            .iter()
            .zip(&self.esd.weights)
            .map(|(&lam, &w)| w * fg.f.eval(lam))
            .sum();
        let sqrt_p = (self.p as f64).sqrt();
        let x_n = sqrt_p * (ratio - fg.f_at_1);
        let y_n =
            (self.n as f64 / sqrt_p) * (fg.g.eval(self.norm_sq) - fg.g.eval(self.c_n));
        CLTStatistics {
            x_n,
            y_n,
            ratio,
            norm_sq: self.norm_sq,
        }
    }

    /// X_n(z) = √p·(q_c/‖Bx̄‖² − 1/(1−z)), cross-checked against the
    /// rank-one-update route through the uncentered covariance.
    pub fn process_xn(&self, z: C64) -> Result<C64> {
        let sqrt_p = (self.p as f64).sqrt();
        let m_z = C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - z);
        let qc = resolvent_qform_decomp(&self.centered, &self.b_xbar, z)?;
        let x_centered = (qc / self.norm_sq - m_z) * sqrt_p;
        let qu = resolvent_qform_decomp(&self.uncentered, &self.b_xbar, z)?;
        let qc_via_unc = qu / (C64::new(1.0, 0.0) - qu);
        let x_unc = (qc_via_unc / self.norm_sq - m_z) * sqrt_p;
        let gap = (x_centered - x_unc).norm();
        if gap > PATH_TOL {
            return Err(Error::PathDisagreement { gap });
        }
        Ok(x_centered)
    }
}

/// One-shot convenience wrappers.
pub fn compute_xy(
    batch: &SampleBatch,
    model: &ModelSpec,
    fg: &TestFunctionPair,
) -> Result<CLTStatistics> {
    Ok(ReplicationSpectra::build(batch, model)?.clt_statistics(fg))
}

pub fn process_xn(batch: &SampleBatch, model: &ModelSpec, z: C64) -> Result<C64> {
    ReplicationSpectra::build(batch, model)?.process_xn(z)
}

/// Rectangle geometry needed to classify points for the truncated process.
#[derive(Debug, Clone, Copy)]
pub struct ContourGeometry {
    pub u_l: f64,
    pub u_r: f64,
    pub v0: f64,
}

/// X̂_n(z): equals X_n(z) away from the real axis; across the thin gaps
/// |Im z| ≤ ρ_n/n on the vertical segments it linearly interpolates between
/// X_n(u ± iρ_n/n), with ρ_n = n^{−ϑ}.
pub fn truncated_process(
    eval: &mut dyn FnMut(C64) -> Result<C64>,
    z: C64,
    n: usize,
    vartheta: f64,
    geom: ContourGeometry,
) -> Result<C64> {
    assert!((0.0..1.0).contains(&vartheta));
    let eps = 1e-12;
    let on_vertical = (z.re - geom.u_l).abs() <= eps || (z.re - geom.u_r).abs() <= eps;
    let on_horizontal =
        (z.im.abs() - geom.v0).abs() <= eps && z.re >= geom.u_l - eps && z.re <= geom.u_r + eps;
    let on_contour = on_horizontal || (on_vertical && z.im.abs() <= geom.v0 + eps);
    if !on_contour {
        return Err(Error::OffContour {
            z_re: z.re,
            z_im: z.im,
        });
    }
    let rho_n = (n as f64).powf(-vartheta);
    let gap = rho_n / n as f64;
    if on_vertical && z.im.abs() <= gap {
        let u = if (z.re - geom.u_l).abs() <= eps {
            geom.u_l
        } else {
            geom.u_r
        };
        let z1 = C64::new(u, gap);
        let z2 = C64::new(u, -gap);
        let nv = n as f64 * z.im;
        let w1 = (nv + rho_n) / (2.0 * rho_n);
        let w2 = (rho_n - nv) / (2.0 * rho_n);
        Ok(eval(z1)? * w1 + eval(z2)? * w2)
    } else {
        eval(z)
    }
}
