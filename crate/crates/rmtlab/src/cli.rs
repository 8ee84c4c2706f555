//! Command-line front end: argument/config resolution, experiment dispatch,
//! and artifact persistence (per_rep.csv, report.json, manifest.json).
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 threshold failure under `--check`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_grid, parse_z_points, ConfigMap};
use crate::contour::{
    build_contour, cauchy_functional_from_spectra, limit_variance_integrals,
};
use crate::error::{Error, Result};
use crate::model::{build_model, sample_batch, EntryDistribution, GammaKind, UKind};
use crate::montecarlo::{
    derive_seed, estimate_scaling_exponent, run_clt_experiment, run_process_experiment,
    ExperimentConfig, MonteCarloReport, MuMode, PerRepRecord, ScalingQuantity,
    eigen_concentration_summary,
};
use crate::statistics::{GFunction, TestFunction, TestFunctionPair};
use crate::truncate::TruncationMode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;
const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "rmtlab",
    version,
    about = "Monte Carlo laboratory for CLTs of random quadratic forms in the p/n -> 0 regime"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replicated joint CLT experiment for (X_n, Y_n).
    Clt(ExperimentArgs),
    /// Cauchy-integral identity and limit-variance-integral checks.
    ContourCheck(ContourArgs),
    /// Log-log scaling exponent of a moment quantity over an n grid.
    Scaling(ScalingArgs),
    /// Eigenvalue concentration quantiles around 1.
    Eigen(EigenArgs),
    /// Process moments of the truncated resolvent field on the contour.
    Process(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// Flat `key = value` config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size n.
    #[arg(long)]
    n: Option<usize>,
    /// Dimension growth exponent: p = floor(scale * n^beta).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    q_factor: Option<usize>,
    #[arg(long)]
    m_factor: Option<usize>,
    /// identity_padded | gaussian_random
    #[arg(long)]
    gamma_kind: Option<String>,
    /// coordinate_selection | random_semi_orthogonal
    #[arg(long)]
    u_kind: Option<String>,
    /// gaussian | rademacher | uniform | exponential
    #[arg(long)]
    dist: Option<String>,
    /// zero | constant:<value>
    #[arg(long)]
    mu_mode: Option<String>,
    /// Test function, e.g. poly:[0,1] or expaff:0.5,0.
    #[arg(long)]
    f: Option<String>,
    /// identity | poly2 | expm1
    #[arg(long)]
    g: Option<String>,
    /// Number of replications R.
    #[arg(long)]
    reps: Option<usize>,
    /// Process evaluation point `re,im`; repeatable.
    #[arg(long = "z", allow_hyphen_values = true)]
    z_points: Vec<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    /// Quadrature nodes per contour segment.
    #[arg(long)]
    nq: Option<usize>,
    /// Gap exponent for the truncated process (rho_n = n^-vartheta).
    #[arg(long)]
    vartheta: Option<f64>,
    /// Master seed; falls back to config file, then RMTLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// off | per_row | uniform_sigma
    #[arg(long)]
    truncation: Option<String>,
    #[arg(long)]
    resample_degenerate: Option<bool>,
    /// Worker thread cap; 0 = available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for per_rep.csv, report.json, manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit 3 if any empirical moment misses its acceptance window.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug, Clone)]
struct ContourArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size for the identity instances.
    #[arg(long)]
    n: Option<usize>,
    /// Fixed dimension p for the identity instances.
    #[arg(long)]
    p: Option<usize>,
    /// Number of random instances for the Cauchy identity.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    nq: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug, Clone)]
struct ScalingArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// mean_norm_dev | cross_qform | mean_qform
    #[arg(long)]
    quantity: Option<String>,
    /// Comma-separated n grid, e.g. 256,512,1024,2048,4096.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug, Clone)]
struct EigenArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Test hook: report on an identity spectrum instead of sampling.
    #[arg(long)]
    identity_hook: bool,
}

/// Entry point used by `main`; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args())
}

/// Testable entry point over explicit arguments.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, bad usage is a config error
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Clt(args) => cmd_clt(&args, false),
        Command::ContourCheck(args) => cmd_contour_check(&args),
        Command::Scaling(args) => cmd_scaling(&args),
        Command::Eigen(args) => cmd_eigen(&args),
        Command::Process(args) => cmd_clt(&args, true),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::GridTooSmall { .. } | Error::RegimeViolation { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

fn seed_fallback() -> u64 {
    std::env::var("RMTLAB_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigMap> {
    match path {
        Some(p) => ConfigMap::from_file(p),
        None => Ok(ConfigMap::new()),
    }
}

fn overlay<T: ToString>(cfg: &mut ConfigMap, key: &str, flag: &Option<T>) {
    if let Some(v) = flag {
        cfg.set(key, v.to_string());
    }
}

fn parse_mu_mode(s: &str) -> Result<MuMode> {
    if s == "zero" {
        return Ok(MuMode::Zero);
    }
    if let Some(v) = s.strip_prefix("constant:") {
        let c: f64 = v
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad mu_mode `{s}`: {e}")))?;
        return Ok(MuMode::Constant(c));
    }
    Err(Error::Config(format!("unknown mu_mode `{s}`")))
}

/// Merges file + flags into the canonical config map for an experiment.
fn experiment_config_map(args: &ExperimentArgs) -> Result<ConfigMap> {
    let mut cfg = load_config(&args.config)?;
    overlay(&mut cfg, "n", &args.n);
    overlay(&mut cfg, "beta", &args.beta);
    overlay(&mut cfg, "scale", &args.scale);
    overlay(&mut cfg, "q_factor", &args.q_factor);
    overlay(&mut cfg, "m_factor", &args.m_factor);
    overlay(&mut cfg, "gamma_kind", &args.gamma_kind);
    overlay(&mut cfg, "u_kind", &args.u_kind);
    overlay(&mut cfg, "dist", &args.dist);
    overlay(&mut cfg, "mu_mode", &args.mu_mode);
    overlay(&mut cfg, "f", &args.f);
    overlay(&mut cfg, "g", &args.g);
    overlay(&mut cfg, "reps", &args.reps);
    if !args.z_points.is_empty() {
        cfg.set("z_points", args.z_points.join(";"));
    }
    overlay(&mut cfg, "delta", &args.delta);
    overlay(&mut cfg, "v0", &args.v0);
    overlay(&mut cfg, "nq", &args.nq);
    overlay(&mut cfg, "vartheta", &args.vartheta);
    overlay(&mut cfg, "seed", &args.seed);
    overlay(&mut cfg, "truncation", &args.truncation);
    overlay(&mut cfg, "resample_degenerate", &args.resample_degenerate);
    overlay(&mut cfg, "threads", &args.threads);
    Ok(cfg)
}

fn resolve_experiment(cfg: &ConfigMap) -> Result<ExperimentConfig> {
    let n: usize = cfg
        .require("n")?
        .parse()
        .map_err(|e| Error::Config(format!("bad n: {e}")))?;
    let fg = TestFunctionPair::new(
        TestFunction::parse(cfg.get("f").unwrap_or("poly:[0,1]"))?,
        GFunction::parse(cfg.get("g").unwrap_or("identity"))?,
    )?;
    Ok(ExperimentConfig {
        n,
        beta: cfg.get_or("beta", 0.4)?,
        scale: cfg.get_or("scale", 1.0)?,
        q_factor: cfg.get_or("q_factor", 2)?,
        m_factor: cfg.get_or("m_factor", 2)?,
        gamma_kind: GammaKind::parse(cfg.get("gamma_kind").unwrap_or("gaussian_random"))?,
        u_kind: UKind::parse(cfg.get("u_kind").unwrap_or("random_semi_orthogonal"))?,
        dist: EntryDistribution::parse(cfg.get("dist").unwrap_or("gaussian"))?,
        mu_mode: parse_mu_mode(cfg.get("mu_mode").unwrap_or("zero"))?,
        fg,
        reps: cfg.get_or("reps", 100)?,
        z_points: match cfg.get("z_points") {
            Some(s) => parse_z_points(s)?,
            None => Vec::new(),
        },
        delta: cfg.get_or("delta", 0.5)?,
        v0: cfg.get_or("v0", 1.0)?,
        nq: cfg.get_or("nq", 64)?,
        vartheta: cfg.get_or("vartheta", 0.5)?,
        master_seed: cfg.get_or("seed", seed_fallback())?,
        truncation: TruncationMode::parse(cfg.get("truncation").unwrap_or("off"))?,
        resample_degenerate: cfg.get_bool_or("resample_degenerate", true)?,
        threads: cfg.get_or("threads", 0)?,
    })
}

fn config_echo_json(cfg: &ConfigMap) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    serde_json::Value::Object(map)
}

/// Writes the run manifest; `end` is None while the run is in flight.
fn write_manifest(
    out: &Path,
    cfg: &ConfigMap,
    master_seed: u64,
    start: &str,
    end: Option<&str>,
    outputs: &[&str],
) -> Result<()> {
    let manifest = json!({
        "tool": "rmtlab",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_echo_json(cfg),
        "master_seed": master_seed,
        "start_timestamp": start,
        "end_timestamp": end,
        "outputs": outputs,
    });
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

/// 17-significant-digit float formatting; round-trips exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_per_rep_csv(path: &Path, per_rep: &[PerRepRecord], n_z: usize) -> Result<()> {
    let mut out = String::from("rep,X_n,Y_n,norm_sq,lambda_min,lambda_max");
    for k in 0..n_z {
        out.push_str(&format!(",Xz_re_{k},Xz_im_{k}"));
    }
    out.push('\n');
    for r in per_rep {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.rep,
            fmt_f64(r.x_n),
            fmt_f64(r.y_n),
            fmt_f64(r.norm_sq),
            fmt_f64(r.lambda_min),
            fmt_f64(r.lambda_max)
        ));
        for &(re, im) in &r.xz {
            out.push_str(&format!(",{},{}", fmt_f64(re), fmt_f64(im)));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug)]
struct Check {
    name: String,
    value: f64,
    lo: f64,
    hi: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi && self.value.is_finite()
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "name": self.name,
            "value": self.value,
            "lo": self.lo,
            "hi": self.hi,
            "pass": self.pass(),
        })
    }
}

/// Moment windows reported for `--check`: ±25% around each Γ₁ / kernel
/// target, plus the KS floor on the Y_n direction.
fn experiment_checks(report: &MonteCarloReport) -> Vec<Check> {
    let mut checks = Vec::new();
    let window = |name: &str, value: f64, target: f64| {
        let (lo, hi) = if target >= 0.0 {
            (0.75 * target, 1.25 * target)
        } else {
            (1.25 * target, 0.75 * target)
        };
        Check {
            name: name.to_string(),
            value,
            lo,
            hi,
        }
    };
    let g = &report.gamma1_target;
    checks.push(window("var_x", report.empirical_cov[0][0], g[0][0]));
    checks.push(window("cov_xy", report.empirical_cov[0][1], g[0][1]));
    checks.push(window("var_y", report.empirical_cov[1][1], g[1][1]));
    for d in &report.normality {
        if d.direction == [0.0, 1.0] {
            checks.push(Check {
                name: "ks_p_value_y".into(),
                value: d.ks_p_value,
                lo: 0.01,
                hi: 1.0,
            });
        }
    }
    for pm in &report.pair_moments {
        checks.push(window(
            &format!(
                "pair_moment_re z1=({},{}) z2=({},{})",
                pm.z1.0, pm.z1.1, pm.z2.0, pm.z2.1
            ),
            pm.empirical.0,
            pm.target.0,
        ));
    }
    for cm in &report.cross_moments {
        checks.push(window(
            &format!("cross_moment_re z=({},{})", cm.z.0, cm.z.1),
            cm.empirical.0,
            cm.target.0,
        ));
    }
    checks
}

fn finish_run(
    out: &Path,
    cfg: &ConfigMap,
    report: &MonteCarloReport,
    config: &ExperimentConfig,
    start: &str,
    check: bool,
) -> Result<i32> {
    let csv_path = out.join("per_rep.csv");
    write_per_rep_csv(&csv_path, &report.per_rep, config.z_points.len())?;

    let checks = experiment_checks(report);
    let report_json = json!({
        "config": config_echo_json(cfg),
        "targets": {
            "gamma1": report.gamma1_target,
            "pair_moments": report.pair_moments.iter().map(|p| json!({
                "z1": p.z1, "z2": p.z2, "target": p.target,
            })).collect::<Vec<_>>(),
            "cross_moments": report.cross_moments.iter().map(|c| json!({
                "z": c.z, "target": c.target,
            })).collect::<Vec<_>>(),
        },
        "empirical": {
            "mean": report.empirical_mean,
            "cov": report.empirical_cov,
            "pair_moments": report.pair_moments,
            "cross_moments": report.cross_moments,
        },
        "diagnostics": {
            "normality": report.normality,
            "concentration": report.concentration,
            "resample_count": report.resample_count,
            "wall_time_secs": report.wall_time_secs,
        },
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
    });
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report_json)? + "\n",
    )?;

    let end = chrono::Utc::now().to_rfc3339();
    write_manifest(
        out,
        cfg,
        config.master_seed,
        start,
        Some(&end),
        &["per_rep.csv", "report.json"],
    )?;

    let mut failed = false;
    for c in &checks {
        let status = if c.pass() { "pass" } else { "FAIL" };
        println!(
            "{status}  {}: {:.6} in [{:.6}, {:.6}]",
            c.name, c.value, c.lo, c.hi
        );
        failed |= !c.pass();
    }
    if check && failed {
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn cmd_clt(args: &ExperimentArgs, require_z: bool) -> Result<i32> {
    let cfg = experiment_config_map(args)?;
    let config = resolve_experiment(&cfg)?;
    if require_z && config.z_points.is_empty() {
        return Err(Error::Config(
            "process experiment needs at least one --z point".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    let start = chrono::Utc::now().to_rfc3339();
    write_manifest(&args.out, &cfg, config.master_seed, &start, None, &[])?;
    let report = if require_z {
        run_process_experiment(&config)?
    } else {
        run_clt_experiment(&config)?
    };
    finish_run(&args.out, &cfg, &report, &config, &start, args.check)
}

fn cmd_eigen(args: &EigenArgs) -> Result<i32> {
    if args.identity_hook {
        let per_rep: Vec<PerRepRecord> = (0..args.experiment.reps.unwrap_or(10))
            .map(|rep| PerRepRecord {
                rep,
                x_n: 0.0,
                y_n: 0.0,
                norm_sq: 1.0,
                lambda_min: 1.0,
                lambda_max: 1.0,
                xz: vec![],
                fraction_truncated: 0.0,
                attempts: 1,
            })
            .collect();
        let s = eigen_concentration_summary(&per_rep);
        println!(
            "concentration quantiles: p50={} p95={} p99={} max={}",
            s.p50, s.p95, s.p99, s.max
        );
        return Ok(EXIT_OK);
    }
    let cfg = experiment_config_map(&args.experiment)?;
    let config = resolve_experiment(&cfg)?;
    std::fs::create_dir_all(&args.experiment.out)?;
    let start = chrono::Utc::now().to_rfc3339();
    write_manifest(&args.experiment.out, &cfg, config.master_seed, &start, None, &[])?;
    let report = run_clt_experiment(&config)?;
    let s = &report.concentration;
    println!(
        "concentration quantiles: p50={:.6} p95={:.6} p99={:.6} max={:.6}",
        s.p50, s.p95, s.p99, s.max
    );
    finish_run(
        &args.experiment.out,
        &cfg,
        &report,
        &config,
        &start,
        args.experiment.check,
    )
}

fn cmd_contour_check(args: &ContourArgs) -> Result<i32> {
    let mut cfg = load_config(&args.config)?;
    overlay(&mut cfg, "n", &args.n);
    overlay(&mut cfg, "p", &args.p);
    overlay(&mut cfg, "instances", &args.instances);
    overlay(&mut cfg, "f", &args.f);
    overlay(&mut cfg, "g", &args.g);
    overlay(&mut cfg, "delta", &args.delta);
    overlay(&mut cfg, "v0", &args.v0);
    overlay(&mut cfg, "nq", &args.nq);
    overlay(&mut cfg, "seed", &args.seed);

    let n: usize = cfg.get_or("n", 500)?;
    let p: usize = cfg.get_or("p", 8)?;
    let instances: usize = cfg.get_or("instances", 50)?;
    let delta: f64 = cfg.get_or("delta", 0.5)?;
    let v0: f64 = cfg.get_or("v0", 1.0)?;
    let nq: usize = cfg.get_or("nq", 256)?;
    let seed: u64 = cfg.get_or("seed", seed_fallback())?;
    let f = TestFunction::parse(cfg.get("f").unwrap_or("poly:[0,0,1]"))?;
    let g = GFunction::parse(cfg.get("g").unwrap_or("identity"))?;
    let contour = build_contour(delta, v0, nq);

    // limit-covariance integrals over the registry plus the requested pair
    let registry: Vec<(TestFunction, GFunction)> = vec![
        (TestFunction::parse("poly:[0,1]")?, GFunction::Identity),
        (TestFunction::parse("poly:[0,0,1]")?, GFunction::Poly2),
        (TestFunction::parse("poly:[1,1,1]")?, GFunction::Expm1),
        (TestFunction::parse("expaff:0.5,0")?, GFunction::Identity),
        (f.clone(), g),
    ];
    let mut worst_integral_gap: f64 = 0.0;
    println!("limit covariance integrals (gap vs closed form):");
    for (fi, gi) in &registry {
        let pair = TestFunctionPair::new(fi.clone(), *gi)?;
        let (var_x, cov_xy, var_y) = limit_variance_integrals(fi, pair.g_prime_at_0, &contour);
        let t_var_x = 2.0 * pair.f_at_1 * pair.f_at_1;
        let t_cov = 2.0 * pair.g_prime_at_0 * pair.f_at_1;
        let t_var_y = 2.0 * pair.g_prime_at_0 * pair.g_prime_at_0;
        let gap = (var_x - t_var_x)
            .abs()
            .max((cov_xy - t_cov).abs())
            .max((var_y - t_var_y).abs());
        worst_integral_gap = worst_integral_gap.max(gap);
        println!("  f={} g={}: gap={:.3e}", pair.f.describe(), pair.g.name(), gap);
    }

    // Cauchy functional identity on random instances
    let dims = crate::model::Dimensions::new(p, 2 * p, 4 * p, n)?;
    let mut worst_cauchy_gap: f64 = 0.0;
    println!("cauchy functional identity over {instances} instances (n={n}, p={}):", dims.p);
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, inst as u64, 0));
        let model = build_model(
            dims,
            GammaKind::GaussianRandom,
            UKind::RandomSemiOrthogonal,
            vec![0.0; dims.q],
            &mut rng,
        )?;
        let batch = sample_batch(&model, EntryDistribution::Gaussian, &mut rng);
        let spectra = crate::statistics::ReplicationSpectra::build(&batch, &model)?;
        let out = cauchy_functional_from_spectra(&spectra, &f, &contour)?;
        worst_cauchy_gap = worst_cauchy_gap.max(out.gap);
    }
    println!("  worst gap: {worst_cauchy_gap:.3e}");

    let checks = [
        Check {
            name: "variance_integral_gap".into(),
            value: worst_integral_gap,
            lo: 0.0,
            hi: 1e-8,
        },
        Check {
            name: "cauchy_identity_gap".into(),
            value: worst_cauchy_gap,
            lo: 0.0,
            hi: 1e-6,
        },
    ];
    std::fs::create_dir_all(&args.out)?;
    let report = json!({
        "config": config_echo_json(&cfg),
        "worst_variance_integral_gap": worst_integral_gap,
        "worst_cauchy_identity_gap": worst_cauchy_gap,
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
    });
    std::fs::write(
        args.out.join("contour_report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let mut failed = false;
    for c in &checks {
        let status = if c.pass() { "pass" } else { "FAIL" };
        println!("{status}  {}: {:.3e} <= {:.1e}", c.name, c.value, c.hi);
        failed |= !c.pass();
    }
    if args.check && failed {
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn cmd_scaling(args: &ScalingArgs) -> Result<i32> {
    let mut cfg = load_config(&args.config)?;
    overlay(&mut cfg, "quantity", &args.quantity);
    overlay(&mut cfg, "n_grid", &args.n_grid);
    overlay(&mut cfg, "beta", &args.beta);
    overlay(&mut cfg, "reps", &args.reps);
    overlay(&mut cfg, "dist", &args.dist);
    overlay(&mut cfg, "seed", &args.seed);

    let quantity = ScalingQuantity::parse(cfg.get("quantity").unwrap_or("mean_norm_dev"))?;
    let n_grid = parse_grid(cfg.get("n_grid").unwrap_or("256,512,1024,2048,4096"))?;
    let beta: f64 = cfg.get_or("beta", 0.5)?;
    let reps: usize = cfg.get_or("reps", 200)?;
    let dist = EntryDistribution::parse(cfg.get("dist").unwrap_or("gaussian"))?;
    let seed: u64 = cfg.get_or("seed", seed_fallback())?;

    let fit = estimate_scaling_exponent(quantity, &n_grid, beta, reps, dist, seed)?;
    let target = quantity.theoretical_slope(beta);
    println!("quantity={} beta={beta}", quantity.name());
    for &(n, p, v) in &fit.values {
        println!("  n={n} p={p} moment={v:.6e}");
    }
    println!(
        "slope={:.4} (theory {:.4}), r2={:.5}",
        fit.slope, target, fit.r2
    );

    let check = Check {
        name: "slope".into(),
        value: fit.slope,
        lo: target - 0.15,
        hi: target + 0.15,
    };
    std::fs::create_dir_all(&args.out)?;
    let report = json!({
        "config": config_echo_json(&cfg),
        "quantity": quantity.name(),
        "theoretical_slope": target,
        "fit": fit,
        "checks": [check.to_json()],
    });
    std::fs::write(
        args.out.join("scaling_report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    if args.check && !check.pass() {
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}
