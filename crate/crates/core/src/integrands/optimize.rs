//! Pilot-sample proposal-parameter optimization.
//!
//! Both optimizers minimize an empirical second-moment objective over a
//! small QMC pilot sample with derivative-free Nelder–Mead in an
//! unconstrained reparameterization. The objectives are cheap (the
//! integrand values are precomputed once), low-dimensional, and nonsmooth
//! at the constraint boundary, which is exactly the regime where a simplex
//! search is adequate.

use super::{GaussIntegrand, Integrand};
use crate::error::{Error, Result};
use crate::gauss;
use crate::lds::{fresh_scramble, RandomizedPointSet, SobolGenerator};

/// Replicate index reserved for pilot sampling so study replicates
/// (0, 1, 2, ...) never share a randomization with the pilot.
const PILOT_REPLICATE: u64 = u64::MAX;

/// Pilot-run settings.
#[derive(Debug, Clone, Copy)]
pub struct PilotOptions {
    /// Pilot sample size; a power of two no larger than the study size.
    pub n: u64,
    pub seed: u64,
}

impl Default for PilotOptions {
    fn default() -> Self {
        PilotOptions { n: 1 << 12, seed: 0 }
    }
}

/// Outcome of a pilot optimization.
#[derive(Debug, Clone)]
pub struct PilotResult {
    /// Optimized proposal parameters (α or β).
    pub params: Vec<f64>,
    /// Objective value at `params`.
    pub objective: f64,
    /// Objective at the identity proposal (α = 1 or β = 1).
    pub baseline: f64,
    /// Best objective after each simplex iteration, for diagnostics.
    pub trace: Vec<f64>,
    /// True when optimization failed and the identity parameters were
    /// returned instead.
    pub fallback: bool,
}

fn check_pilot(options: &PilotOptions) -> Result<()> {
    if options.n == 0 || !options.n.is_power_of_two() {
        return Err(Error::Config(format!(
            "pilot size {} must be a positive power of two",
            options.n
        )));
    }
    Ok(())
}

/// Optimize the scaled-normal proposal scales `α >= 1`.
///
/// Objective: `(∏ α_j) (1/n) Σ_i ν²(y_i) ρ(y_i)/ρ(y_i/α)` with `y_i` the
/// inverse-normal images of a dedicated pilot point set.
pub fn optimize_alpha(
    inner: &impl GaussIntegrand,
    generator: &SobolGenerator,
    options: PilotOptions,
) -> Result<PilotResult> {
    check_pilot(&options)?;
    let s = inner.dimension();
    if generator.dimension() != s {
        return Err(Error::Config(format!(
            "generator dimension {} does not match integrand dimension {s}",
            generator.dimension()
        )));
    }
    // Precompute ν²(y_i) and y_i² once; the α-dependence is a pure
    // reweighting exp(-½ Σ_j y_ij² (1 - 1/α_j²)).
    let state = fresh_scramble(options.seed, PILOT_REPLICATE, s);
    let set = RandomizedPointSet::new(generator, Some(&state), options.n)?;
    let mut nu_sq = Vec::with_capacity(options.n as usize);
    let mut y_sq = Vec::with_capacity(options.n as usize * s);
    let mut session = inner.gauss_session();
    let mut y = vec![0.0; s];
    set.for_each_point(|_, t| {
        for (yj, &tj) in y.iter_mut().zip(t) {
            *yj = gauss::inv_norm_fast(tj);
        }
        let v = session.eval(&y)?;
        nu_sq.push(v * v);
        y_sq.extend(y.iter().map(|&yj| yj * yj));
        Ok::<(), Error>(())
    })?;

    let n_inv = 1.0 / options.n as f64;
    let objective = |alpha: &[f64]| -> f64 {
        let prod: f64 = alpha.iter().product();
        let half_coef: Vec<f64> = alpha.iter().map(|&a| 0.5 * (1.0 - 1.0 / (a * a))).collect();
        let mut acc = 0.0;
        for (i, &q) in nu_sq.iter().enumerate() {
            let row = &y_sq[i * s..(i + 1) * s];
            let log_w: f64 = row.iter().zip(&half_coef).map(|(&ysq, &c)| -ysq * c).sum();
            acc += q * log_w.exp();
        }
        prod * acc * n_inv
    };

    const ETA: f64 = 1e-6;
    let to_alpha = |z: &[f64]| -> Vec<f64> { z.iter().map(|&zj| zj.exp() + 1.0 - ETA).collect() };
    let mut eval_z = |z: &[f64]| objective(&to_alpha(z));

    let baseline = objective(&vec![1.0; s]);
    let start = vec![(0.25f64 + ETA).ln(); s]; // α = 1.25 isotropic
    match simplex_search(&mut eval_z, &start, 0.6, 3) {
        Some((z_best, obj, trace)) => {
            let mut alpha = to_alpha(&z_best);
            for a in &mut alpha {
                *a = a.max(1.0);
            }
            // Re-evaluate at the clamped point and keep whichever of
            // (clamped optimum, identity) is better.
            let obj_clamped = objective(&alpha);
            if obj_clamped.is_finite() && obj_clamped <= baseline {
                Ok(PilotResult {
                    params: alpha,
                    objective: obj_clamped,
                    baseline,
                    trace,
                    fallback: false,
                })
            } else {
                Ok(PilotResult {
                    params: vec![1.0; s],
                    objective: baseline,
                    baseline,
                    trace: vec![obj],
                    fallback: true,
                })
            }
        }
        None => Ok(PilotResult {
            params: vec![1.0; s],
            objective: baseline,
            baseline,
            trace: Vec::new(),
            fallback: true,
        }),
    }
}

/// Optimize the beta-like proposal exponents `β in (0, 1]^s`.
///
/// Objective: `(1/n) Σ_i g²(w_i) / ρ_β(w_i)` with `w_i` the pilot points.
pub fn optimize_beta(
    inner: &impl Integrand,
    generator: &SobolGenerator,
    options: PilotOptions,
) -> Result<PilotResult> {
    check_pilot(&options)?;
    let s = inner.dimension();
    if generator.dimension() != s {
        return Err(Error::Config(format!(
            "generator dimension {} does not match integrand dimension {s}",
            generator.dimension()
        )));
    }
    let state = fresh_scramble(options.seed, PILOT_REPLICATE, s);
    let set = RandomizedPointSet::new(generator, Some(&state), options.n)?;
    let mut g_sq = Vec::with_capacity(options.n as usize);
    let mut log_m = Vec::with_capacity(options.n as usize * s);
    let mut session = inner.session();
    set.for_each_point(|_, w| {
        let v = session.eval(w)?;
        g_sq.push(v * v);
        log_m.extend(w.iter().map(|&wj| wj.min(1.0 - wj).ln()));
        Ok::<(), Error>(())
    })?;

    let n_inv = 1.0 / options.n as f64;
    // 1/ρ_β(w) = ∏ exp(-(log C_j + (β_j - 1) log min(w_j, 1-w_j))).
    let objective = |beta: &[f64]| -> f64 {
        let log_c: f64 = beta
            .iter()
            .map(|&b| b.ln() + (1.0 - b) * 0.5f64.ln())
            .sum();
        let mut acc = 0.0;
        for (i, &q) in g_sq.iter().enumerate() {
            let row = &log_m[i * s..(i + 1) * s];
            let log_density: f64 = log_c
                + row
                    .iter()
                    .zip(beta)
                    .map(|(&lm, &b)| (b - 1.0) * lm)
                    .sum::<f64>();
            acc += q * (-log_density).exp();
        }
        acc * n_inv
    };

    let to_beta = |z: &[f64]| -> Vec<f64> {
        z.iter().map(|&zj| 1.0 / (1.0 + (-zj).exp())).collect()
    };
    let mut eval_z = |z: &[f64]| objective(&to_beta(z));

    let baseline = objective(&vec![1.0; s]);
    let start = vec![(0.8f64 / 0.2f64).ln(); s]; // β = 0.8 isotropic
    match simplex_search(&mut eval_z, &start, 1.0, 3) {
        Some((z_best, _obj, trace)) => {
            let beta = to_beta(&z_best);
            let obj = objective(&beta);
            if obj.is_finite() && obj <= baseline {
                Ok(PilotResult {
                    params: beta,
                    objective: obj,
                    baseline,
                    trace,
                    fallback: false,
                })
            } else {
                Ok(PilotResult {
                    params: vec![1.0; s],
                    objective: baseline,
                    baseline,
                    trace,
                    fallback: true,
                })
            }
        }
        None => Ok(PilotResult {
            params: vec![1.0; s],
            objective: baseline,
            baseline,
            trace: Vec::new(),
            fallback: true,
        }),
    }
}

/// Nelder–Mead with restarts. Returns the best vertex, its value, and the
/// per-iteration best-value trace, or None when no finite objective value
/// was ever seen (even after shrinking the initial simplex).
fn simplex_search(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    initial_step: f64,
    restarts: usize,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let guard = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut best_x = start.to_vec();
    let mut best_v = guard(f(start));
    let mut trace = Vec::new();
    // Shrink the initial simplex toward the start until the objective is
    // finite somewhere.
    let mut step = initial_step;
    if !best_v.is_finite() {
        for _ in 0..8 {
            step *= 0.5;
            let probe: Vec<f64> = best_x.iter().map(|&x| x + step).collect();
            let v = guard(f(&probe));
            if v.is_finite() {
                best_x = probe;
                best_v = v;
                break;
            }
        }
        if !best_v.is_finite() {
            return None;
        }
    }

    let dim = start.len();
    let mut step_r = step;
    for _ in 0..=restarts {
        let (x, v, t) = nelder_mead_once(f, &best_x, step_r, 200 * (dim + 2));
        trace.extend(t);
        if v < best_v {
            best_v = v;
            best_x = x;
        }
        step_r *= 0.25;
    }
    Some((best_x, best_v, trace))
}

fn nelder_mead_once(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, Vec<f64>) {
    let guard = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let dim = start.len();
    let mut verts: Vec<Vec<f64>> = vec![start.to_vec()];
    for j in 0..dim {
        let mut v = start.to_vec();
        v[j] += step;
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| guard(f(v))).collect();
    let mut trace = Vec::new();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..verts.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let (best, worst, second_worst) = (order[0], order[dim], order[dim - 1]);
        trace.push(vals[best]);
        if vals[worst] - vals[best] <= 1e-12 * (1.0 + vals[best].abs()) {
            break;
        }
        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for (i, v) in verts.iter().enumerate() {
            if i != worst {
                for (c, &x) in centroid.iter_mut().zip(v) {
                    *c += x;
                }
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }
        let mix = |a: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(&c, &w)| c + a * (c - w))
                .collect()
        };
        let reflected = mix(1.0);
        let fr = guard(f(&reflected));
        if fr < vals[best] {
            let expanded = mix(2.0);
            let fe = guard(f(&expanded));
            if fe < fr {
                verts[worst] = expanded;
                vals[worst] = fe;
            } else {
                verts[worst] = reflected;
                vals[worst] = fr;
            }
        } else if fr < vals[second_worst] {
            verts[worst] = reflected;
            vals[worst] = fr;
        } else {
            let contracted = mix(-0.5);
            let fc = guard(f(&contracted));
            if fc < vals[worst] {
                verts[worst] = contracted;
                vals[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                let best_v = verts[best].clone();
                for (i, v) in verts.iter_mut().enumerate() {
                    if i != best {
                        for (x, &b) in v.iter_mut().zip(&best_v) {
                            *x = b + 0.5 * (*x - b);
                        }
                        vals[i] = guard(f(v));
                    }
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..verts.len() {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    (verts[best].clone(), vals[best], trace)
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

    #[test]
    fn constant_integrand_keeps_alpha_at_one() {
        // For ν ≡ 1 the relative second moment ∏ α²/sqrt(2α² - 1) is
        // minimized exactly at the clamp boundary α = 1.
        let gen = generator(2);
        let c = Constant { dimension: 2, value: 1.0 };
        let res = optimize_alpha(&c, &gen, PilotOptions { n: 1 << 10, seed: 3 }).unwrap();
        for &a in &res.params {
            assert!((a - 1.0).abs() < 0.05, "alpha {a} drifted from 1");
        }
    }

    #[test]
    fn lognormal_alpha_improves_objective() {
        let g = LognormalProduct::new(vec![1.0]).unwrap();
        let gen = generator(1);
        let res = optimize_alpha(&g, &gen, PilotOptions { n: 1 << 12, seed: 11 }).unwrap();
        assert!(!res.fallback);
        assert!(res.params[0] > 1.0);
        assert!(
            res.objective <= 0.99 * res.baseline,
            "objective {} should improve >= 1% over baseline {}",
            res.objective,
            res.baseline
        );
    }

    #[test]
    fn alpha_optimization_is_deterministic() {
        let g = LognormalProduct::new(vec![1.0, 2.0]).unwrap();
        let gen = generator(2);
        let opts = PilotOptions { n: 1 << 11, seed: 99 };
        let a = optimize_alpha(&g, &gen, opts).unwrap();
        let b = optimize_alpha(&g, &gen, opts).unwrap();
        for (x, y) in a.params.iter().zip(&b.params) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_integrand_keeps_beta_at_one() {
        // The second moment of 1/ρ_β for g ≡ 1 is 1/(β(2-β)), minimized at
        // β = 1.
        let gen = generator(2);
        let c = Constant { dimension: 2, value: 1.0 };
        let res = optimize_beta(&c, &gen, PilotOptions { n: 1 << 10, seed: 5 }).unwrap();
        for &b in &res.params {
            assert!((b - 1.0).abs() < 0.05, "beta {b} drifted from 1");
        }
    }

    #[test]
    fn lognormal_beta_improves_objective() {
        let g = LognormalProduct::new(vec![2.0]).unwrap();
        let gen = generator(1);
        let res = optimize_beta(&g, &gen, PilotOptions { n: 1 << 12, seed: 7 }).unwrap();
        assert!(!res.fallback);
        assert!(res.params[0] < 1.0, "beta {} should move below 1", res.params[0]);
        assert!(res.objective <= 0.99 * res.baseline);
    }

    #[test]
    fn beta_optimization_is_deterministic() {
        let g = LognormalProduct::new(vec![2.0]).unwrap();
        let gen = generator(1);
        let opts = PilotOptions { n: 1 << 11, seed: 42 };
        let a = optimize_beta(&g, &gen, opts).unwrap();
        let b = optimize_beta(&g, &gen, opts).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn pilot_size_must_be_power_of_two() {
        let g = LognormalProduct::new(vec![1.0]).unwrap();
        let gen = generator(1);
        assert!(optimize_alpha(&g, &gen, PilotOptions { n: 1000, seed: 0 }).is_err());
    }
}
