//! Command-line front door: point generation, estimation sweeps, rate
//! fits, error-model tables, proposal optimization, basis files, and full
//! configuration-driven studies.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rqmc_core::bound::{theorem_bound, GrowthSpec};
use rqmc_core::error::Error;
use rqmc_core::estimator::{estimate, fit_rate, GridEntry, RqmcConfig, RqmcResult};
use rqmc_core::integrands::{
    optimize_alpha, optimize_beta, LognormalProduct, PilotOptions,
};
use rqmc_core::lds::{fresh_scramble, DirectionNumbers, RandomizedPointSet, SobolGenerator};
use rqmc_core::randomfield::{
    build_fourier_basis, load_basis, write_basis, FieldBasis, MaternKernel, ModeScaling,
};
use rqmc_core::study::{apply_overrides, run_study, StudyConfig, DIRECTION_FILE_ENV};

#[derive(Parser)]
#[command(name = "rqmc", version, about = "Randomized quasi-Monte Carlo convergence laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DirsArg {
    /// Direction-number file (Joe-Kuo text layout). Falls back to
    /// $RQMC_DIRECTION_FILE, then the bundled table.
    #[arg(long)]
    dirs: Option<PathBuf>,
}

impl DirsArg {
    fn path(&self) -> PathBuf {
        self.dirs
            .clone()
            .or_else(|| std::env::var(DIRECTION_FILE_ENV).ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(rqmc_core::lds::BUNDLED_DIRECTION_FILE))
    }

    fn generator(&self, dimension: usize) -> Result<SobolGenerator, Error> {
        let table = DirectionNumbers::from_path(self.path())?;
        SobolGenerator::new(&table, dimension)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print points of the (optionally scrambled) Sobol' sequence as CSV.
    Sobol {
        #[command(flatten)]
        dirs: DirsArg,
        #[arg(short = 's', long, default_value_t = 2)]
        dimension: usize,
        #[arg(short = 'n', long, default_value_t = 16)]
        count: u64,
        /// Apply a random linear scramble and digital shift.
        #[arg(long)]
        scrambled: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Output file (stdout when omitted).
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// RQMC estimate of the lognormal-product mean at one sample size.
    Estimate {
        #[command(flatten)]
        dirs: DirsArg,
        /// Comma-separated sigma vector.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(short = 'n', long, default_value_t = 1 << 14)]
        samples: u64,
        #[arg(short = 'R', long, default_value_t = 30)]
        replicates: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// RMSE sweep of the lognormal-product estimator over a sample grid.
    Sweep {
        #[command(flatten)]
        dirs: DirsArg,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        /// Grid as log2 range, e.g. 10:20 for 2^10..2^20.
        #[arg(long, default_value = "10:16")]
        log2_grid: String,
        #[arg(short = 'R', long, default_value_t = 30)]
        replicates: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Summary CSV output (stdout when omitted).
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Fit a log-log convergence rate to a summary CSV (n,...,rmse).
    FitRate {
        /// Summary CSV with columns n,pooled_mean,rmse.
        input: PathBuf,
        #[arg(long)]
        window_lo: u64,
        #[arg(long)]
        window_hi: u64,
    },
    /// Evaluate the nonasymptotic error model over a sample grid.
    Bound {
        /// Comma-separated growth coefficients (sigma or basis sup-norms).
        #[arg(long, value_delimiter = ',', required = true)]
        coeffs: Vec<f64>,
        #[arg(long, default_value = "10:22")]
        log2_grid: String,
        #[arg(long, default_value_t = 1.0)]
        hyperbolic_c: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta_bar: f64,
        #[arg(long, default_value_t = 1.0)]
        c_eps: f64,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Pilot-optimize an importance-sampling proposal for the lognormal
    /// product.
    IsOpt {
        #[command(flatten)]
        dirs: DirsArg,
        /// Proposal family: scaled_normal or beta_like.
        #[arg(long)]
        kind: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 1 << 12)]
        pilot_n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Objective-trace CSV output (stdout when omitted).
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Build, inspect, or validate spectral-basis files.
    Basis {
        #[command(subcommand)]
        action: BasisAction,
    },
    /// Run a configuration-driven study.
    Study {
        /// JSON study configuration.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --set seed=7 --set bound.epsilon=0.1
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
}

#[derive(Subcommand)]
enum BasisAction {
    /// Build a Matérn spectral basis and write it to a basis file.
    Build {
        #[arg(long, default_value_t = 4.5)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        correlation_length: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 256)]
        grid_m: usize,
        #[arg(long, default_value_t = 16)]
        modes: usize,
        /// eigenvalue or sqrt_eigenvalue scaling.
        #[arg(long, default_value = "eigenvalue")]
        scaling: String,
        #[arg(long, default_value_t = 512)]
        file_grid: u32,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
    /// Print per-mode metadata of a basis file.
    Dump { file: PathBuf },
    /// Load a basis file and check its invariants.
    Validate { file: PathBuf },
}

fn parse_log2_grid(text: &str) -> Result<Vec<u64>, Error> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("grid '{text}' is not of the form lo:hi")))?;
    let lo: u32 = lo
        .parse()
        .map_err(|e| Error::Config(format!("bad grid bound: {e}")))?;
    let hi: u32 = hi
        .parse()
        .map_err(|e| Error::Config(format!("bad grid bound: {e}")))?;
    if lo > hi || hi > 32 {
        return Err(Error::Config(format!("bad log2 grid range {lo}:{hi}")));
    }
    Ok((lo..=hi).map(|m| 1u64 << m).collect())
}

fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sobol {
            dirs,
            dimension,
            count,
            scrambled,
            seed,
            replicate,
            out,
        } => {
            let generator = dirs.generator(dimension)?;
            let state = scrambled.then(|| fresh_scramble(seed, replicate, dimension));
            let set = RandomizedPointSet::new(&generator, state.as_ref(), count)?;
            let mut sink = open_sink(&out)?;
            let header: Vec<String> = (0..dimension).map(|j| format!("t{}", j + 1)).collect();
            writeln!(sink, "index,{}", header.join(","))?;
            set.for_each_point(|i, t| {
                let row: Vec<String> = t.iter().map(|v| v.to_string()).collect();
                writeln!(sink, "{i},{}", row.join(","))
            })?;
            sink.flush()?;
            Ok(())
        }
        Command::Estimate {
            dirs,
            sigma,
            samples,
            replicates,
            seed,
            threads,
        } => {
            let generator = dirs.generator(sigma.len())?;
            let integrand = LognormalProduct::new(sigma)?;
            let config = RqmcConfig {
                grid: vec![samples],
                replicates,
                seed,
            };
            let result = estimate(&integrand, &generator, &config, threads)?;
            let e = &result.entries[0];
            println!("n,pooled_mean,rmse,exact_mean");
            println!(
                "{},{},{},{}",
                e.n,
                e.pooled_mean,
                e.rmse,
                rqmc_core::integrands::Integrand::exact_mean(&integrand).unwrap()
            );
            Ok(())
        }
        Command::Sweep {
            dirs,
            sigma,
            log2_grid,
            replicates,
            seed,
            threads,
            out,
        } => {
            let grid = parse_log2_grid(&log2_grid)?;
            let generator = dirs.generator(sigma.len())?;
            let integrand = LognormalProduct::new(sigma)?;
            let config = RqmcConfig {
                grid,
                replicates,
                seed,
            };
            let result = estimate(&integrand, &generator, &config, threads)?;
            let mut sink = open_sink(&out)?;
            writeln!(sink, "n,pooled_mean,rmse")?;
            for e in &result.entries {
                writeln!(sink, "{},{},{}", e.n, e.pooled_mean, e.rmse)?;
            }
            sink.flush()?;
            Ok(())
        }
        Command::FitRate {
            input,
            window_lo,
            window_hi,
        } => {
            let text = std::fs::read_to_string(&input)?;
            let mut entries = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                if idx == 0 || line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() < 3 {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: "expected n,pooled_mean,rmse".into(),
                    });
                }
                let n: u64 = fields[0].parse().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad n: {e}"),
                })?;
                let rmse: f64 = fields[fields.len() - 1].parse().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad rmse: {e}"),
                })?;
                entries.push(GridEntry {
                    n,
                    replicate_means: Vec::new(),
                    pooled_mean: 0.0,
                    rmse,
                });
            }
            let result = RqmcResult {
                entries,
                replicates: 0,
            };
            let fit = fit_rate(&result, (window_lo, window_hi))?;
            println!("gamma,intercept,window_lo,window_hi,residual_norm");
            println!(
                "{},{},{},{},{}",
                fit.gamma, fit.intercept, fit.window.0, fit.window.1, fit.residual_norm
            );
            Ok(())
        }
        Command::Bound {
            coeffs,
            log2_grid,
            hyperbolic_c,
            epsilon,
            delta_bar,
            c_eps,
            out,
        } => {
            let grid = parse_log2_grid(&log2_grid)?;
            let spec = GrowthSpec {
                coeffs,
                hyperbolic_c,
                epsilon,
                delta_bar,
                c_eps,
            };
            spec.validate()?;
            let mut sink = open_sink(&out)?;
            writeln!(sink, "n,a_star_max,b_star,b_tilde,c1,c2,bound,rate_exponent")?;
            for n in grid {
                let eval = theorem_bound(&spec, n)?;
                writeln!(
                    sink,
                    "{},{},{},{},{},{},{},{}",
                    eval.n,
                    eval.a_star.last().unwrap(),
                    eval.b_star,
                    eval.b_tilde,
                    eval.c1,
                    eval.c2,
                    eval.bound_value,
                    eval.rate_exponent
                )?;
            }
            sink.flush()?;
            Ok(())
        }
        Command::IsOpt {
            dirs,
            kind,
            sigma,
            pilot_n,
            seed,
            out,
        } => {
            let generator = dirs.generator(sigma.len())?;
            let integrand = LognormalProduct::new(sigma)?;
            let options = PilotOptions { n: pilot_n, seed };
            let result = match kind.as_str() {
                "scaled_normal" => optimize_alpha(&integrand, &generator, options)?,
                "beta_like" => optimize_beta(&integrand, &generator, options)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown proposal kind '{other}' (expected scaled_normal or beta_like)"
                    )))
                }
            };
            let mut sink = open_sink(&out)?;
            let params: Vec<String> = result.params.iter().map(|p| p.to_string()).collect();
            writeln!(sink, "# params: {}", params.join(","))?;
            writeln!(sink, "# objective: {}", result.objective)?;
            writeln!(sink, "# baseline: {}", result.baseline)?;
            writeln!(sink, "# fallback: {}", result.fallback)?;
            writeln!(sink, "iteration,best_objective")?;
            for (i, v) in result.trace.iter().enumerate() {
                writeln!(sink, "{i},{v}")?;
            }
            sink.flush()?;
            Ok(())
        }
        Command::Basis { action } => run_basis(action),
        Command::Study { config, overrides } => {
            let text = std::fs::read_to_string(&config)?;
            let mut doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("study config: {e}")))?;
            apply_overrides(&mut doc, &overrides)?;
            let parsed: StudyConfig = serde_json::from_value(doc)
                .map_err(|e| Error::Config(format!("study config: {e}")))?;
            let report = run_study(&parsed)?;
            for path in &report.outputs {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn run_basis(action: BasisAction) -> Result<(), Error> {
    match action {
        BasisAction::Build {
            nu,
            correlation_length,
            gamma,
            grid_m,
            modes,
            scaling,
            file_grid,
            out,
        } => {
            let scaling = match scaling.as_str() {
                "eigenvalue" => ModeScaling::Eigenvalue,
                "sqrt_eigenvalue" => ModeScaling::SqrtEigenvalue,
                other => {
                    return Err(Error::Config(format!(
                        "unknown scaling '{other}' (expected eigenvalue or sqrt_eigenvalue)"
                    )))
                }
            };
            let kernel = MaternKernel::new(nu, correlation_length)?;
            let basis = build_fourier_basis(|h| kernel.eval(h), gamma, grid_m, modes, scaling)?;
            write_basis(&out, &basis, file_grid)?;
            println!("wrote {} modes to {}", basis.mode_count(), out.display());
            Ok(())
        }
        BasisAction::Dump { file } => {
            let basis = load_basis(&file)?;
            println!("mode,sup_norm");
            for j in 0..basis.mode_count() {
                println!("{j},{}", basis.sup_norm(j));
            }
            Ok(())
        }
        BasisAction::Validate { file } => {
            let basis = load_basis(&file)?;
            let d = basis.domain();
            println!(
                "ok: {} modes, grid {}, domain [{}, {}] x [{}, {}]",
                basis.mode_count(),
                basis.grid_resolution(),
                d[0],
                d[1],
                d[2],
                d[3]
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
