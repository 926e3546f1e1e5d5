//! RQMC estimation and convergence-rate fitting.
//!
//! One scramble per replicate, a single Gray-code pass per replicate over
//! the largest grid size with snapshots at every smaller grid size, and the
//! replicate-spread RMSE
//! `sqrt(1/(R(R-1)) Σ_r (Î_n^{(r)} - Î_n^R)²)`.
//!
//! Replicates run in parallel; each replicate accumulates sequentially in
//! point order with compensated summation and results reduce in replicate
//! order, so output bytes do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrands::Integrand;
use crate::lds::{fresh_scramble, SobolGenerator};

/// Estimation settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RqmcConfig {
    /// Strictly increasing powers of two.
    pub grid: Vec<u64>,
    pub replicates: u32,
    pub seed: u64,
}

impl RqmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sample-size grid is empty".into()));
        }
        for &n in &self.grid {
            if n == 0 || !n.is_power_of_two() {
                return Err(Error::Config(format!("grid value {n} is not a power of two")));
            }
            if n > 1 << 32 {
                return Err(Error::Config(format!("grid value {n} exceeds 2^32")));
            }
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        Ok(())
    }
}

/// Replicate means and RMSE at one sample size.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GridEntry {
    pub n: u64,
    pub replicate_means: Vec<f64>,
    pub pooled_mean: f64,
    pub rmse: f64,
}

/// Full estimation output over the sample-size grid.
#[derive(Debug, Clone)]
pub struct RqmcResult {
    pub entries: Vec<GridEntry>,
    pub replicates: u32,
}

#[derive(Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Run the RQMC estimator.
///
/// `threads` = 0 uses the global thread pool; any other value pins a local
/// pool of exactly that size. Results are bit-identical either way.
pub fn estimate<I: Integrand + ?Sized>(
    integrand: &I,
    generator: &SobolGenerator,
    config: &RqmcConfig,
    threads: usize,
) -> Result<RqmcResult> {
    config.validate()?;
    if integrand.dimension() != generator.dimension() {
        return Err(Error::Config(format!(
            "integrand dimension {} does not match generator dimension {}",
            integrand.dimension(),
            generator.dimension()
        )));
    }
    let run = || -> Result<Vec<Vec<f64>>> {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| replicate_means(integrand, generator, config, r))
            .collect()
    };
    let per_replicate: Vec<Vec<f64>> = if threads == 0 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(run)?
    };

    let r_count = config.replicates as usize;
    let mut entries = Vec::with_capacity(config.grid.len());
    for (gi, &n) in config.grid.iter().enumerate() {
        let means: Vec<f64> = per_replicate.iter().map(|m| m[gi]).collect();
        let pooled = means.iter().sum::<f64>() / r_count as f64;
        let rmse = if r_count > 1 {
            let ss: f64 = means.iter().map(|m| (m - pooled) * (m - pooled)).sum();
            (ss / ((r_count * (r_count - 1)) as f64)).sqrt()
        } else {
            0.0
        };
        entries.push(GridEntry {
            n,
            replicate_means: means,
            pooled_mean: pooled,
            rmse,
        });
    }
    Ok(RqmcResult {
        entries,
        replicates: config.replicates,
    })
}

fn replicate_means<I: Integrand + ?Sized>(
    integrand: &I,
    generator: &SobolGenerator,
    config: &RqmcConfig,
    replicate: u64,
) -> Result<Vec<f64>> {
    let state = fresh_scramble(config.seed, replicate, generator.dimension());
    let max_n = *config.grid.last().expect("validated nonempty");
    let mut walker = generator.walker();
    let mut buf = vec![0.0f64; generator.dimension()];
    let mut session = integrand.session();
    let mut acc = KahanSum::default();
    let mut means = Vec::with_capacity(config.grid.len());
    let mut next_grid = 0usize;
    for i in 0..max_n {
        walker.current_into(Some(&state), &mut buf);
        let v = session.eval(&buf).map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("{context} (replicate {replicate}, point {i})"),
            },
            Error::Solver { residual, iterations } => Error::NonFinite {
                context: format!(
                    "solver stalled at relative residual {residual:.3e} after {iterations} \
                     iterations (replicate {replicate}, point {i})"
                ),
            },
            other => other,
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!(
                    "integrand value {v} at replicate {replicate}, point {i} of n={max_n}"
                ),
            });
        }
        acc.add(v);
        if i + 1 == config.grid[next_grid] {
            means.push(acc.value() / (i + 1) as f64);
            next_grid += 1;
        }
        if i + 1 < max_n {
            walker.advance().expect("grid bounded by 2^32");
        }
    }
    Ok(means)
}

/// A fitted log-log convergence rate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateFit {
    /// Magnitude of the fitted slope: RMSE ~ n^{-γ}.
    pub gamma: f64,
    /// Intercept of the regression of log2 RMSE on log2 n.
    pub intercept: f64,
    pub window: (u64, u64),
    /// Euclidean norm of the regression residuals.
    pub residual_norm: f64,
}

/// Least squares of log2(rmse) on log2(n) over grid entries inside the
/// window (inclusive).
pub fn fit_rate(result: &RqmcResult, window: (u64, u64)) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = result
        .entries
        .iter()
        .filter(|e| e.n >= window.0 && e.n <= window.1)
        .map(|e| {
            if e.rmse <= 0.0 {
                Err(Error::Domain(format!(
                    "RMSE at n = {} is {}; rate fit is degenerate",
                    e.n, e.rmse
                )))
            } else {
                Ok(((e.n as f64).log2(), e.rmse.log2()))
            }
        })
        .collect::<Result<_>>()?;
    if points.len() < 2 {
        return Err(Error::Config(format!(
            "fit window [{}, {}] covers {} grid points; need at least 2",
            window.0,
            window.1,
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual_norm = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        gamma: -slope,
        intercept,
        window,
        residual_norm,
    })
}

/// The default fit window: the largest `count` grid points.
pub fn top_window(grid: &[u64], count: usize) -> (u64, u64) {
    let lo = grid[grid.len().saturating_sub(count)];
    (lo, *grid.last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::{Constant, LognormalProduct};
    use crate::lds::DirectionNumbers;

    fn generator(s: usize) -> SobolGenerator {
        let table = DirectionNumbers::from_path(crate::lds::BUNDLED_DIRECTION_FILE).unwrap();
        SobolGenerator::new(&table, s).unwrap()
    }

    fn synthetic_result(entries: Vec<(u64, f64)>) -> RqmcResult {
        RqmcResult {
            entries: entries
                .into_iter()
                .map(|(n, rmse)| GridEntry {
                    n,
                    replicate_means: vec![],
                    pooled_mean: 0.0,
                    rmse,
                })
                .collect(),
            replicates: 30,
        }
    }

    #[test]
    fn constant_integrand_zero_rmse() {
        let c = Constant { dimension: 2, value: 3.25 };
        let gen = generator(2);
        let config = RqmcConfig {
            grid: vec![16, 64],
            replicates: 8,
            seed: 1,
        };
        let res = estimate(&c, &gen, &config, 1).unwrap();
        for e in &res.entries {
            assert!(e.replicate_means.iter().all(|&m| m == 3.25));
            assert_eq!(e.rmse, 0.0);
        }
    }

    #[test]
    fn lognormal_mean_within_error_bars() {
        let g = LognormalProduct::new(vec![1.0]).unwrap();
        let gen = generator(1);
        let config = RqmcConfig {
            grid: vec![1 << 16],
            replicates: 30,
            seed: 7,
        };
        let res = estimate(&g, &gen, &config, 0).unwrap();
        let e = &res.entries[0];
        let truth = 0.5f64.exp();
        assert!(
            (e.pooled_mean - truth).abs() <= 4.0 * e.rmse,
            "pooled {} truth {truth} rmse {}",
            e.pooled_mean,
            e.rmse
        );
        assert!((e.pooled_mean - truth).abs() < 0.01);
    }

    #[test]
    fn pooled_mean_is_replicate_average_and_rmse_formula_matches() {
        let g = LognormalProduct::new(vec![0.8, 1.1]).unwrap();
        let gen = generator(2);
        let config = RqmcConfig {
            grid: vec![256, 1024],
            replicates: 12,
            seed: 3,
        };
        let res = estimate(&g, &gen, &config, 2).unwrap();
        for e in &res.entries {
            let pooled: f64 = e.replicate_means.iter().sum::<f64>() / 12.0;
            assert!((pooled - e.pooled_mean).abs() < 1e-15 * pooled.abs());
            // Independent two-pass recomputation.
            let ss: f64 = e
                .replicate_means
                .iter()
                .map(|m| (m - pooled) * (m - pooled))
                .sum();
            let rmse = (ss / (12.0 * 11.0)).sqrt();
            assert!((rmse - e.rmse).abs() <= 1e-15 * rmse.max(1e-300));
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let g = LognormalProduct::new(vec![1.0, 0.5, 2.0]).unwrap();
        let gen = generator(3);
        let config = RqmcConfig {
            grid: vec![128, 512],
            replicates: 6,
            seed: 99,
        };
        let a = estimate(&g, &gen, &config, 1).unwrap();
        let b = estimate(&g, &gen, &config, 2).unwrap();
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            assert_eq!(ea.pooled_mean.to_bits(), eb.pooled_mean.to_bits());
            assert_eq!(ea.rmse.to_bits(), eb.rmse.to_bits());
            for (x, y) in ea.replicate_means.iter().zip(&eb.replicate_means) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn doubling_replicates_shrinks_rmse_like_root_two() {
        // Mild sigma keeps the replicate means close to Gaussian, so the
        // sampling-theory 1/sqrt(2) shows through the chi-square noise.
        let g = LognormalProduct::new(vec![0.3]).unwrap();
        let gen = generator(1);
        let mut ratios = Vec::new();
        for rep in 0..20u64 {
            let base = RqmcConfig {
                grid: vec![1024],
                replicates: 10,
                seed: 1000 + rep,
            };
            let doubled = RqmcConfig {
                grid: vec![1024],
                replicates: 20,
                seed: 1000 + rep,
            };
            let a = estimate(&g, &gen, &base, 2).unwrap();
            let b = estimate(&g, &gen, &doubled, 2).unwrap();
            ratios.push(b.entries[0].rmse / a.entries[0].rmse);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (0.55..=0.9).contains(&mean),
            "mean rmse ratio {mean} outside [0.55, 0.9]"
        );
    }

    #[test]
    fn exact_power_law_recovered() {
        let grid = [1u64 << 10, 1 << 12, 1 << 14, 1 << 16];
        let res = synthetic_result(grid.iter().map(|&n| (n, 1.0 / n as f64)).collect());
        let fit = fit_rate(&res, (grid[0], grid[3])).unwrap();
        assert!((fit.gamma - 1.0).abs() < 1e-12);
        assert!(fit.residual_norm < 1e-12);
    }

    #[test]
    fn scaled_square_root_law_recovered() {
        let grid = [1u64 << 8, 1 << 10, 1 << 12];
        let res =
            synthetic_result(grid.iter().map(|&n| (n, 3.0 / (n as f64).sqrt())).collect());
        let fit = fit_rate(&res, (grid[0], grid[2])).unwrap();
        assert!((fit.gamma - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit_rejected() {
        let res = synthetic_result(vec![(256, 0.0), (512, 1e-3)]);
        assert!(fit_rate(&res, (256, 512)).is_err());
        let res2 = synthetic_result(vec![(256, 1e-2), (512, 1e-3)]);
        assert!(fit_rate(&res2, (512, 512)).is_err());
    }

    #[test]
    fn config_validation() {
        let bad_grid = RqmcConfig { grid: vec![100], replicates: 2, seed: 0 };
        assert!(bad_grid.validate().is_err());
        let not_increasing = RqmcConfig { grid: vec![256, 256], replicates: 2, seed: 0 };
        assert!(not_increasing.validate().is_err());
        let ok = RqmcConfig { grid: vec![256, 512], replicates: 2, seed: 0 };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn snapshots_match_single_runs() {
        // A sweep over [2^8, 2^10] must give the same means as two separate
        // estimates, because the scramble depends only on the replicate.
        let g = LognormalProduct::new(vec![1.0]).unwrap();
        let gen = generator(1);
        let sweep = estimate(
            &g,
            &gen,
            &RqmcConfig { grid: vec![256, 1024], replicates: 4, seed: 5 },
            1,
        )
        .unwrap();
        for (gi, &n) in [256u64, 1024].iter().enumerate() {
            let single = estimate(
                &g,
                &gen,
                &RqmcConfig { grid: vec![n], replicates: 4, seed: 5 },
                1,
            )
            .unwrap();
            for (a, b) in sweep.entries[gi]
                .replicate_means
                .iter()
                .zip(&single.entries[0].replicate_means)
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
