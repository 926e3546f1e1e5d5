//! Configuration-driven experiment runner.
//!
//! A study is one JSON document. Running it produces machine-readable CSV
//! tables (replicate means, summaries, fitted rates, the error-model sweep)
//! plus a JSON manifest recording the configuration, its hash, every free
//! constant of the model, and wall time. Given the same configuration and
//! seed the CSV outputs are byte-identical regardless of thread count.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bound::{theorem_bound, BoundEval, GrowthSpec};
use crate::error::{Error, Result};
use crate::estimator::{estimate, fit_rate, top_window, RateFit, RqmcConfig, RqmcResult};
use crate::fem::{Mesh, PdeIntegrand, QoiWeight, SolverOptions};
use crate::gauss;
use crate::integrands::{
    optimize_alpha, optimize_beta, BetaLikeIs, Integrand, LognormalProduct, PilotOptions,
    ScaledNormalIs,
};
use crate::lds::{DirectionNumbers, SobolGenerator};
use crate::randomfield::{build_fourier_basis, load_basis, FieldBasis, MaternKernel, ModeScaling};

/// Environment variable naming the default direction-number file.
pub const DIRECTION_FILE_ENV: &str = "RQMC_DIRECTION_FILE";

/// Study kind selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// The lognormal-product integrand with optional importance sampling.
    Lognormal,
    /// The PDE quantity of interest over dimension/variance cases.
    Pde,
    /// Evaluate the error model only; no sampling.
    BoundOnly,
}

/// How the σ vector of a lognormal study is chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Explicit { values: Vec<f64> },
    Ones { dimension: usize },
    /// `σ_j = sqrt(s) ξ_j / sqrt(Σ ξ²)` with ξ_j lognormal(0,1), so that
    /// `Σ σ_j² = s` exactly.
    ScaledLognormal { dimension: usize, seed: u64 },
}

/// Build a σ vector from a recipe.
pub fn sigma_recipe(spec: &SigmaSpec) -> Result<Vec<f64>> {
    match spec {
        SigmaSpec::Explicit { values } => {
            if values.is_empty() || values.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("sigma values must be positive".into()));
            }
            Ok(values.clone())
        }
        SigmaSpec::Ones { dimension } => {
            if *dimension == 0 {
                return Err(Error::Config("dimension must be positive".into()));
            }
            Ok(vec![1.0; *dimension])
        }
        SigmaSpec::ScaledLognormal { dimension, seed } => {
            if *dimension == 0 {
                return Err(Error::Config("dimension must be positive".into()));
            }
            let xi: Vec<f64> = standard_normals(*seed, *dimension)
                .into_iter()
                .map(f64::exp)
                .collect();
            let norm: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = (*dimension as f64).sqrt();
            Ok(xi.iter().map(|x| scale * x / norm).collect())
        }
    }
}

/// Deterministic standard normals from a counter-keyed stream (platform
/// independent, unlike distribution crates whose algorithms may change).
fn standard_normals(seed: u64, count: usize) -> Vec<f64> {
    use rand_core::{RngCore, SeedableRng};
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&0x7369676d615f7263u64.to_le_bytes());
    let mut rng = rand_chacha::ChaCha12Rng::from_seed(key);
    (0..count)
        .map(|_| {
            let u = (rng.next_u64() as f64 + 0.5) / 2f64.powi(64);
            gauss::inv_norm(u, gauss::InverseCdfVariant::Refined).expect("u in (0,1)")
        })
        .collect()
}

/// Importance-sampling selection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IsSpec {
    #[default]
    None,
    ScaledNormal {
        #[serde(default)]
        alpha: Option<Vec<f64>>,
        #[serde(default)]
        pilot_n: Option<u64>,
    },
    BetaLike {
        #[serde(default)]
        beta: Option<Vec<f64>>,
        #[serde(default)]
        pilot_n: Option<u64>,
    },
}

/// Free constants of the error model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta_bar")]
    pub delta_bar: f64,
    #[serde(default = "default_c_eps")]
    pub c_eps: f64,
}

fn default_c() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_delta_bar() -> f64 {
    1e-6
}
fn default_c_eps() -> f64 {
    1.0
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec {
            c: default_c(),
            epsilon: default_epsilon(),
            delta_bar: default_delta_bar(),
            c_eps: default_c_eps(),
        }
    }
}

impl BoundSpec {
    pub fn growth_spec(&self, coeffs: Vec<f64>) -> GrowthSpec {
        GrowthSpec {
            coeffs,
            hyperbolic_c: self.c,
            epsilon: self.epsilon,
            delta_bar: self.delta_bar,
            c_eps: self.c_eps,
        }
    }
}

/// Spectral-basis construction for PDE studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Fourier {
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default = "default_corr_len")]
        correlation_length: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_grid_m")]
        grid_m: usize,
        #[serde(default = "default_scaling")]
        scaling: ModeScaling,
    },
    File {
        path: PathBuf,
    },
}

fn default_nu() -> f64 {
    4.5
}
fn default_corr_len() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    2.0
}
fn default_grid_m() -> usize {
    256
}
fn default_scaling() -> ModeScaling {
    ModeScaling::Eigenvalue
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::Fourier {
            nu: default_nu(),
            correlation_length: default_corr_len(),
            gamma: default_gamma(),
            grid_m: default_grid_m(),
            scaling: default_scaling(),
        }
    }
}

/// One per-mode multiplier case of a PDE study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaCase {
    /// σ_j = scale for all modes.
    Ones {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// σ_j iid uniform on [low, high], times scale.
    Uniform {
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
        seed: u64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    1.0
}
fn default_low() -> f64 {
    1.0
}
fn default_high() -> f64 {
    2.0
}

impl SigmaCase {
    pub fn label(&self) -> String {
        match self {
            SigmaCase::Ones { scale } => format!("ones_x{scale}"),
            SigmaCase::Uniform { low, high, seed, scale } => {
                format!("u{low}-{high}_s{seed}_x{scale}")
            }
        }
    }

    pub fn realize(&self, dimension: usize) -> Result<Vec<f64>> {
        if dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        match self {
            SigmaCase::Ones { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::Config("case scale must be positive".into()));
                }
                Ok(vec![*scale; dimension])
            }
            SigmaCase::Uniform { low, high, seed, scale } => {
                if !(*low > 0.0) || !(high > low) || !(*scale > 0.0) {
                    return Err(Error::Config(format!(
                        "bad uniform case parameters low={low} high={high} scale={scale}"
                    )));
                }
                use rand_core::{RngCore, SeedableRng};
                let mut key = [0u8; 32];
                key[0..8].copy_from_slice(&seed.to_le_bytes());
                key[8..16].copy_from_slice(&0x636173655f756e69u64.to_le_bytes());
                let mut rng = rand_chacha::ChaCha12Rng::from_seed(key);
                Ok((0..dimension)
                    .map(|_| {
                        let u = (rng.next_u64() as f64 + 0.5) / 2f64.powi(64);
                        scale * (low + (high - low) * u)
                    })
                    .collect())
            }
        }
    }
}

/// PDE-study settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    pub dimensions: Vec<usize>,
    pub cases: Vec<SigmaCase>,
    #[serde(default = "default_mesh_n")]
    pub mesh_n: usize,
    #[serde(default = "default_rhs")]
    pub rhs_constant: f64,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
    #[serde(default)]
    pub basis: BasisSpec,
}

fn default_mesh_n() -> usize {
    16
}
fn default_rhs() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-10
}

/// The study document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub seed: u64,
    pub grid: Vec<u64>,
    pub replicates: u32,
    #[serde(default)]
    pub threads: usize,
    /// Fit window as [n_lo, n_hi]; when absent, the largest `fit_points`
    /// grid values are used.
    #[serde(default)]
    pub fit_window: Option<[u64; 2]>,
    #[serde(default = "default_fit_points")]
    pub fit_points: usize,
    #[serde(default)]
    pub direction_file: Option<PathBuf>,
    #[serde(default)]
    pub sigma: Option<SigmaSpec>,
    #[serde(default)]
    pub importance: IsSpec,
    #[serde(default)]
    pub bound: BoundSpec,
    #[serde(default)]
    pub pde: Option<PdeSpec>,
    pub output_dir: PathBuf,
}

fn default_fit_points() -> usize {
    3
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("study config: {e}")))
    }

    pub fn fit_window_or_default(&self) -> (u64, u64) {
        match self.fit_window {
            Some([lo, hi]) => (lo, hi),
            None => top_window(&self.grid, self.fit_points),
        }
    }

    pub fn direction_file_path(&self) -> PathBuf {
        if let Some(p) = &self.direction_file {
            return p.clone();
        }
        if let Ok(p) = std::env::var(DIRECTION_FILE_ENV) {
            return PathBuf::from(p);
        }
        PathBuf::from(crate::lds::BUNDLED_DIRECTION_FILE)
    }
}

/// One fitted rate, tagged with what it measures.
#[derive(Debug, Clone, Serialize)]
pub struct RateRecord {
    pub phase: String,
    pub dimension: usize,
    pub case: String,
    pub gamma: f64,
    pub intercept: f64,
    pub window_lo: u64,
    pub window_hi: u64,
    pub residual_norm: f64,
}

/// One PDE linearity pair: deteriorated rate against the weighted basis
/// norm.
#[derive(Debug, Clone, Serialize)]
pub struct PairRecord {
    pub dimension: usize,
    pub case: String,
    pub coeff_norm: f64,
    pub one_minus_gamma: f64,
}

/// Everything a study run produced.
#[derive(Debug, Default)]
pub struct StudyReport {
    pub rates: Vec<RateRecord>,
    pub pairs: Vec<PairRecord>,
    pub outputs: Vec<PathBuf>,
}

/// Run a study and write its artifacts.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(&config.output_dir)?;
    let mut report = StudyReport::default();
    match config.kind {
        StudyKind::Lognormal => run_lognormal(config, &mut report)?,
        StudyKind::Pde => run_pde(config, &mut report)?,
        StudyKind::BoundOnly => run_bound_only(config, &mut report)?,
    }
    write_manifest(config, &mut report, started.elapsed().as_secs_f64())?;
    Ok(report)
}

fn load_generator(config: &StudyConfig, dimension: usize) -> Result<SobolGenerator> {
    let table = DirectionNumbers::from_path(config.direction_file_path())?;
    SobolGenerator::new(&table, dimension)
}

fn pilot_options(config: &StudyConfig, requested: Option<u64>) -> PilotOptions {
    let max_n = *config.grid.last().expect("validated grid");
    let n = requested.unwrap_or(1 << 12).min(max_n);
    PilotOptions {
        n: n.next_power_of_two().min(max_n),
        seed: config.seed,
    }
}

fn run_lognormal(config: &StudyConfig, report: &mut StudyReport) -> Result<()> {
    let sigma_spec = config
        .sigma
        .as_ref()
        .ok_or_else(|| Error::Config("lognormal study needs a sigma spec".into()))?;
    let sigma = sigma_recipe(sigma_spec)?;
    let s = sigma.len();
    let generator = load_generator(config, s)?;
    let integrand = LognormalProduct::new(sigma.clone())?;
    let rqmc = RqmcConfig {
        grid: config.grid.clone(),
        replicates: config.replicates,
        seed: config.seed,
    };
    rqmc.validate()?;

    let mut phases: Vec<(String, Box<dyn Integrand>)> =
        vec![("plain".to_string(), Box::new(integrand.clone()))];
    match &config.importance {
        IsSpec::None => {}
        IsSpec::ScaledNormal { alpha, pilot_n } => {
            let alpha = match alpha {
                Some(a) => a.clone(),
                None => {
                    optimize_alpha(&integrand, &generator, pilot_options(config, *pilot_n))?.params
                }
            };
            let wrapped = ScaledNormalIs::new(integrand.clone(), alpha)?;
            phases.push(("is".to_string(), Box::new(wrapped)));
        }
        IsSpec::BetaLike { beta, pilot_n } => {
            let beta = match beta {
                Some(b) => b.clone(),
                None => {
                    optimize_beta(&integrand, &generator, pilot_options(config, *pilot_n))?.params
                }
            };
            let wrapped = BetaLikeIs::new(integrand.clone(), beta)?;
            phases.push(("is".to_string(), Box::new(wrapped)));
        }
    }

    let window = config.fit_window_or_default();
    let mut summary_rows = Vec::new();
    let mut replicate_rows = Vec::new();
    for (label, phase) in &phases {
        let result = estimate(phase.as_ref(), &generator, &rqmc, config.threads)?;
        collect_rows(label, s, "single", &result, &mut summary_rows, &mut replicate_rows);
        let fit = fit_rate(&result, window)?;
        report.rates.push(rate_record(label, s, "single", &fit));
    }

    write_csv(
        config.output_dir.join("summary.csv"),
        "phase,dimension,case,n,pooled_mean,rmse",
        &summary_rows,
        &mut report.outputs,
    )?;
    write_csv(
        config.output_dir.join("replicates.csv"),
        "phase,dimension,case,n,replicate,mean",
        &replicate_rows,
        &mut report.outputs,
    )?;
    write_rates(config, report)?;

    // Error-model sweep over the study grid.
    let growth = config.bound.growth_spec(sigma);
    write_bound_csv(
        config.output_dir.join("bound.csv"),
        &growth,
        &config.grid,
        &mut report.outputs,
    )?;
    Ok(())
}

fn run_pde(config: &StudyConfig, report: &mut StudyReport) -> Result<()> {
    let pde = config
        .pde
        .as_ref()
        .ok_or_else(|| Error::Config("pde study needs a pde section".into()))?;
    if pde.dimensions.is_empty() || pde.cases.is_empty() {
        return Err(Error::Config("pde study needs dimensions and cases".into()));
    }
    let max_dim = *pde.dimensions.iter().max().unwrap();
    let basis = build_basis(&pde.basis, max_dim)?;
    let mesh = Mesh::new(pde.mesh_n)?;
    let weight = QoiWeight::default();
    let options = SolverOptions {
        tolerance: pde.solver_tolerance,
        ..SolverOptions::default()
    };
    let window = config.fit_window_or_default();

    let mut summary_rows = Vec::new();
    let mut replicate_rows = Vec::new();
    let mut pair_rows = Vec::new();
    let mut bound_rows = Vec::new();
    for &dim in &pde.dimensions {
        if dim == 0 || dim > basis.mode_count() {
            return Err(Error::Config(format!(
                "dimension {dim} outside 1..={}",
                basis.mode_count()
            )));
        }
        let generator = load_generator(config, dim)?;
        for case in &pde.cases {
            let label = case.label();
            let sigma = case.realize(dim)?;
            let integrand = PdeIntegrand::new(
                basis.as_ref(),
                sigma.clone(),
                mesh,
                |_| pde.rhs_constant,
                |x| weight.eval(x),
                options,
            )?;
            let rqmc = RqmcConfig {
                grid: config.grid.clone(),
                replicates: config.replicates,
                seed: config.seed,
            };
            let coeff_norm = sigma
                .iter()
                .enumerate()
                .map(|(j, &sj)| (sj * basis.sup_norm(j)).powi(2))
                .sum::<f64>()
                .sqrt();

            let plain = estimate(&integrand, &generator, &rqmc, config.threads)?;
            collect_rows("plain", dim, &label, &plain, &mut summary_rows, &mut replicate_rows);
            let fit = fit_rate(&plain, window)?;
            report.rates.push(rate_record("plain", dim, &label, &fit));
            pair_rows.push((dim, label.clone(), coeff_norm, 1.0 - fit.gamma));

            let wrapped: Option<Box<dyn Integrand + '_>> = match &config.importance {
                IsSpec::None => None,
                IsSpec::ScaledNormal { alpha, pilot_n } => {
                    let alpha = match alpha {
                        Some(a) => a.clone(),
                        None => {
                            optimize_alpha(&integrand, &generator, pilot_options(config, *pilot_n))?
                                .params
                        }
                    };
                    Some(Box::new(ScaledNormalIs::new(&integrand, alpha)?))
                }
                IsSpec::BetaLike { beta, pilot_n } => {
                    let beta = match beta {
                        Some(b) => b.clone(),
                        None => {
                            optimize_beta(&integrand, &generator, pilot_options(config, *pilot_n))?
                                .params
                        }
                    };
                    Some(Box::new(BetaLikeIs::new(&integrand, beta)?))
                }
            };
            if let Some(is_integrand) = wrapped {
                let is_result = estimate(is_integrand.as_ref(), &generator, &rqmc, config.threads)?;
                collect_rows("is", dim, &label, &is_result, &mut summary_rows, &mut replicate_rows);
                let is_fit = fit_rate(&is_result, window)?;
                report.rates.push(rate_record("is", dim, &label, &is_fit));
            }
            push_bound_rows(&config.bound, &sigma, basis.as_ref(), &config.grid, dim, &label, &mut bound_rows)?;
        }
    }

    write_csv(
        config.output_dir.join("summary.csv"),
        "phase,dimension,case,n,pooled_mean,rmse",
        &summary_rows,
        &mut report.outputs,
    )?;
    write_csv(
        config.output_dir.join("replicates.csv"),
        "phase,dimension,case,n,replicate,mean",
        &replicate_rows,
        &mut report.outputs,
    )?;
    write_rates(config, report)?;
    let pairs: Vec<String> = pair_rows
        .iter()
        .map(|(d, c, x, y)| format!("{d},{c},{x},{y}"))
        .collect();
    write_csv(
        config.output_dir.join("pairs.csv"),
        "dimension,case,coeff_norm,one_minus_gamma",
        &pairs,
        &mut report.outputs,
    )?;
    for (d, c, x, y) in pair_rows {
        report.pairs.push(PairRecord {
            dimension: d,
            case: c,
            coeff_norm: x,
            one_minus_gamma: y,
        });
    }
    write_csv(
        config.output_dir.join("bound.csv"),
        "dimension,case,n,a_star_max,b_star,b_tilde,c1,c2,bound,rate_exponent",
        &bound_rows,
        &mut report.outputs,
    )?;
    // Basis metadata for the model and for plots.
    let mut basis_rows = Vec::new();
    for j in 0..basis.mode_count() {
        basis_rows.push(format!("{j},{}", basis.sup_norm(j)));
    }
    write_csv(
        config.output_dir.join("basis.csv"),
        "mode,sup_norm",
        &basis_rows,
        &mut report.outputs,
    )?;
    Ok(())
}

fn run_bound_only(config: &StudyConfig, report: &mut StudyReport) -> Result<()> {
    let sigma_spec = config
        .sigma
        .as_ref()
        .ok_or_else(|| Error::Config("bound-only study needs a sigma spec".into()))?;
    let coeffs = sigma_recipe(sigma_spec)?;
    let growth = config.bound.growth_spec(coeffs);
    write_bound_csv(
        config.output_dir.join("bound.csv"),
        &growth,
        &config.grid,
        &mut report.outputs,
    )
}

fn build_basis(spec: &BasisSpec, max_dim: usize) -> Result<Box<dyn FieldBasis>> {
    match spec {
        BasisSpec::Fourier {
            nu,
            correlation_length,
            gamma,
            grid_m,
            scaling,
        } => {
            let kernel = MaternKernel::new(*nu, *correlation_length)?;
            let basis = build_fourier_basis(|h| kernel.eval(h), *gamma, *grid_m, max_dim, *scaling)?;
            Ok(Box::new(basis))
        }
        BasisSpec::File { path } => {
            let basis = load_basis(path)?;
            crate::randomfield::check_domain(&basis, [-1.0, 1.0, -1.0, 1.0])?;
            if basis.mode_count() < max_dim {
                return Err(Error::Config(format!(
                    "basis file holds {} modes, {max_dim} needed",
                    basis.mode_count()
                )));
            }
            Ok(Box::new(basis))
        }
    }
}

fn rate_record(phase: &str, dimension: usize, case: &str, fit: &RateFit) -> RateRecord {
    RateRecord {
        phase: phase.to_string(),
        dimension,
        case: case.to_string(),
        gamma: fit.gamma,
        intercept: fit.intercept,
        window_lo: fit.window.0,
        window_hi: fit.window.1,
        residual_norm: fit.residual_norm,
    }
}

fn collect_rows(
    phase: &str,
    dimension: usize,
    case: &str,
    result: &RqmcResult,
    summary: &mut Vec<String>,
    replicates: &mut Vec<String>,
) {
    for e in &result.entries {
        summary.push(format!(
            "{phase},{dimension},{case},{},{},{}",
            e.n, e.pooled_mean, e.rmse
        ));
        for (r, m) in e.replicate_means.iter().enumerate() {
            replicates.push(format!("{phase},{dimension},{case},{},{r},{m}", e.n));
        }
    }
}

fn push_bound_rows(
    bound: &BoundSpec,
    sigma: &[f64],
    basis: &dyn FieldBasis,
    grid: &[u64],
    dimension: usize,
    case: &str,
    rows: &mut Vec<String>,
) -> Result<()> {
    // The model consumes the per-mode products σ_j b_j.
    let coeffs: Vec<f64> = sigma
        .iter()
        .enumerate()
        .map(|(j, &sj)| sj * basis.sup_norm(j))
        .collect();
    let growth = bound.growth_spec(coeffs);
    for &n in grid {
        let eval = theorem_bound(&growth, n)?;
        rows.push(format!("{dimension},{case},{}", bound_row(&eval)));
    }
    Ok(())
}

fn bound_row(eval: &BoundEval) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        eval.n,
        eval.a_star.last().unwrap(),
        eval.b_star,
        eval.b_tilde,
        eval.c1,
        eval.c2,
        eval.bound_value,
        eval.rate_exponent
    )
}

fn write_bound_csv(
    path: PathBuf,
    growth: &GrowthSpec,
    grid: &[u64],
    outputs: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let eval = theorem_bound(growth, n)?;
        rows.push(bound_row(&eval));
    }
    write_csv(
        path,
        "n,a_star_max,b_star,b_tilde,c1,c2,bound,rate_exponent",
        &rows,
        outputs,
    )
}

fn write_rates(config: &StudyConfig, report: &mut StudyReport) -> Result<()> {
    let rows: Vec<String> = report
        .rates
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.phase,
                r.dimension,
                r.case,
                r.gamma,
                r.intercept,
                r.window_lo,
                r.window_hi,
                r.residual_norm
            )
        })
        .collect();
    write_csv(
        config.output_dir.join("rates.csv"),
        "phase,dimension,case,gamma,intercept,window_lo,window_hi,residual_norm",
        &rows,
        &mut report.outputs,
    )
}

fn write_csv(
    path: PathBuf,
    header: &str,
    rows: &[String],
    outputs: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    f.flush()?;
    outputs.push(path);
    Ok(())
}

/// FNV-1a, 64-bit; stable and dependency-free for manifest hashing.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn write_manifest(config: &StudyConfig, report: &mut StudyReport, wall: f64) -> Result<()> {
    let config_json = serde_json::to_value(config)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    let canonical = serde_json::to_string(&config_json)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    let (gamma_ext, scaling, rhs_constant) = match &config.pde {
        Some(p) => match &p.basis {
            BasisSpec::Fourier { gamma, scaling, .. } => (
                serde_json::json!(gamma),
                serde_json::to_value(scaling).unwrap(),
                serde_json::json!(p.rhs_constant),
            ),
            BasisSpec::File { path } => (
                serde_json::json!(null),
                serde_json::json!(format!("file:{}", path.display())),
                serde_json::json!(p.rhs_constant),
            ),
        },
        None => (
            serde_json::json!(null),
            serde_json::json!(null),
            serde_json::json!(null),
        ),
    };
    let manifest = serde_json::json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "config_hash": format!("{:016x}", fnv1a(canonical.as_bytes())),
        "wall_time_seconds": wall,
        "free_constants": {
            "hyperbolic_c": config.bound.c,
            "c_eps": config.bound.c_eps,
            "epsilon": config.bound.epsilon,
            "delta_bar": config.bound.delta_bar,
            "inverse_cdf_error": crate::bound::EPS_BAR,
            "gamma_extension": gamma_ext,
            "rhs_constant": rhs_constant,
            "mode_scaling": scaling,
        },
        "outputs": report.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "config": config_json,
    });
    let path = config.output_dir.join("manifest.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?,
    )?;
    report.outputs.push(path);
    Ok(())
}

/// Apply `key=value` overrides to a JSON document via dotted paths
/// (`bound.epsilon=0.1`, `grid=[1024,2048]`).
pub fn apply_overrides(document: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{item}' is not of the form path=value"))
        })?;
        let value: serde_json::Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(raw.to_string()),
        };
        let parts: Vec<&str> = path.split('.').collect();
        let (leaf, prefix) = parts.split_last().expect("split_once gives nonempty path");
        let mut cursor = &mut *document;
        for part in prefix {
            cursor = match cursor {
                serde_json::Value::Object(map) => map
                    .entry((*part).to_string())
                    .or_insert_with(|| serde_json::json!({})),
                _ => {
                    return Err(Error::Config(format!(
                        "override path '{path}' crosses a non-object"
                    )))
                }
            };
        }
        match cursor {
            serde_json::Value::Object(map) => {
                map.insert((*leaf).to_string(), value);
            }
            _ => {
                return Err(Error::Config(format!(
                    "override path '{path}' crosses a non-object"
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_recipes() {
        let ones = sigma_recipe(&SigmaSpec::Ones { dimension: 3 }).unwrap();
        assert_eq!(ones, vec![1.0, 1.0, 1.0]);
        let scaled = sigma_recipe(&SigmaSpec::ScaledLognormal { dimension: 6, seed: 4 }).unwrap();
        let sum_sq: f64 = scaled.iter().map(|s| s * s).sum();
        assert!((sum_sq - 6.0).abs() < 1e-12, "sum of squares {sum_sq}");
        let again = sigma_recipe(&SigmaSpec::ScaledLognormal { dimension: 6, seed: 4 }).unwrap();
        assert_eq!(scaled, again);
        let other = sigma_recipe(&SigmaSpec::ScaledLognormal { dimension: 6, seed: 5 }).unwrap();
        assert_ne!(scaled, other);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{
            "kind": "lognormal", "seed": 1, "grid": [1024], "replicates": 5,
            "sigma": {"kind": "ones", "dimension": 1},
            "output_dir": "/tmp/x", "bogus_key": 3
        }"#;
        assert!(StudyConfig::from_json(text).is_err());
    }

    #[test]
    fn overrides_apply_to_leaves() {
        let mut doc = serde_json::json!({
            "seed": 1,
            "bound": {"epsilon": 0.05}
        });
        apply_overrides(
            &mut doc,
            &[
                "seed=9".to_string(),
                "bound.epsilon=0.1".to_string(),
                "grid=[256,512]".to_string(),
                "note=hello".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(doc["seed"], serde_json::json!(9));
        assert_eq!(doc["bound"]["epsilon"], serde_json::json!(0.1));
        assert_eq!(doc["grid"], serde_json::json!([256, 512]));
        assert_eq!(doc["note"], serde_json::json!("hello"));
    }

    #[test]
    fn uniform_case_is_deterministic() {
        let case = SigmaCase::Uniform { low: 1.0, high: 2.0, seed: 3, scale: 2.0 };
        let a = case.realize(8).unwrap();
        let b = case.realize(8).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (2.0..=4.0).contains(&v)));
    }
}
