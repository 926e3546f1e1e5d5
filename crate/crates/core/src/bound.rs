//! The nonasymptotic RQMC error model.
//!
//! Everything here is closed-form evaluation: the probability that a uniform
//! point falls below a hyperbolic corner boundary, the Pinelis upper bound on
//! the same tail, boundary-growth exponents obtained from an anchor
//! optimization, the constants of the assembled error bound, and the
//! closed-form integrals of `∏ t_j^{-A_j}` over corner regions.
//!
//! The bound is a loose upper bound by construction. It is reported next to
//! measured rates, never used to gate them.

use crate::error::{Error, Result};

/// Parameters of the growth model for one integrand family.
///
/// `coeffs` holds the per-dimension growth coefficients: the lognormal
/// standard deviations for the product integrand, or the basis sup-norms
/// `b_j` for the PDE quantity of interest.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GrowthSpec {
    pub coeffs: Vec<f64>,
    /// Hyperbolic-set constant C; the set is {t : ∏ min(t_j, 1-t_j) >= C/n}.
    pub hyperbolic_c: f64,
    /// Discrepancy exponent ε in the assumed E[Δ*] <= C_{ε,s} n^{-1+ε}.
    pub epsilon: f64,
    /// Perturbation separating the growth exponents.
    pub delta_bar: f64,
    /// Star-discrepancy constant C_{ε,s}.
    pub c_eps: f64,
}

impl GrowthSpec {
    /// Spec with the default free constants C = 1, ε = 0.05, δ̄ = 1e-6,
    /// C_{ε,s} = 1.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let spec = GrowthSpec {
            coeffs,
            hyperbolic_c: 1.0,
            epsilon: 0.05,
            delta_bar: 1e-6,
            c_eps: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::Config("growth coefficients must be nonempty".into()));
        }
        if self.coeffs.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("growth coefficients must be positive".into()));
        }
        if !(self.hyperbolic_c > 0.0) {
            return Err(Error::Config("hyperbolic constant C must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config("epsilon must lie in (0, 1)".into()));
        }
        if !(self.delta_bar > 0.0) {
            return Err(Error::Config("delta_bar must be positive".into()));
        }
        if !(self.c_eps > 0.0) {
            return Err(Error::Config("C_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.len()
    }

    pub fn sum_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// The evaluated model at one sample size.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundEval {
    pub n: u64,
    /// Perturbed growth exponents, ascending and pairwise distinct.
    pub a_star: Vec<f64>,
    pub b_star: f64,
    pub b_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    pub bound_value: f64,
    /// -1 + ε + max_j A_j*.
    pub rate_exponent: f64,
    /// False when some A_j* >= 1 and the model is outside its validity
    /// range; the constants are NaN in that case.
    pub in_range: bool,
}

impl BoundEval {
    /// The defining identity `bound = C1 n^(-1+maxA*) + C2 n^(-1+ε+maxA*)`,
    /// re-evaluated from the stored fields.
    pub fn reassembled(&self, epsilon: f64) -> f64 {
        let max_a = *self
            .a_star
            .last()
            .expect("a_star nonempty by construction");
        let nf = self.n as f64;
        self.c1 * nf.powf(-1.0 + max_a) + self.c2 * nf.powf(-1.0 + epsilon + max_a)
    }
}

/// Pr(∏_{j=1..s} t_j <= C n^{-r}) for iid uniform coordinates.
///
/// Equals the regularized upper incomplete gamma Q(s, x) at
/// x = r log n - log C, evaluated by the finite Poisson sum for integer
/// shape. Requires x > 0.
pub fn corner_probability(s: u32, n: f64, r: f64, c: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let x = r * n.ln() - c.ln();
    if !(x > 0.0) {
        return Err(Error::Domain(format!(
            "threshold r log n - log C = {x} must be positive"
        )));
    }
    Ok(poisson_tail(s, x))
}

/// Q(s, x) = e^{-x} Σ_{k<s} x^k / k! for integer shape s >= 1.
fn poisson_tail(s: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..s {
        term *= x / f64::from(k);
        sum += term;
    }
    (-x).exp() * sum
}

/// Pinelis upper bound G_s(x)/Γ(s) on the corner probability.
///
/// `G_s(x) = ((x + b_s)^s - x^s) / (s b_s) e^{-x}` with
/// `b_s = Γ(s+1)^{1/(s-1)}`; the exponent makes s = 1 undefined, so the
/// bound requires s >= 2.
pub fn pinelis_bound(s: u32, x: f64) -> Result<f64> {
    if s < 2 {
        return Err(Error::Domain(
            "Pinelis bound needs s >= 2 (b_s undefined at s = 1)".into(),
        ));
    }
    if !(x > 0.0) {
        return Err(Error::Domain("x must be positive".into()));
    }
    let sf = f64::from(s);
    let gamma_s = factorial(s - 1);
    let b_s = factorial(s).powf(1.0 / (sf - 1.0));
    let g = (((x + b_s).powf(sf)) - x.powf(sf)) / (sf * b_s) * (-x).exp();
    Ok(g / gamma_s)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Membership in the hyperbolic set {t : ∏ min(t_j, 1-t_j) >= C/n}.
pub fn in_hyperbolic_set(t: &[f64], n: f64, c: f64) -> bool {
    let prod: f64 = t.iter().map(|&x| x.min(1.0 - x)).product();
    prod >= c / n
}

/// Anchor minimizing the growth bound on the constraint surface ∏ v = δ.
///
/// Solves the Lagrangian conditions exactly:
/// `-log v*_j = σ_j² / Σσ² · log(1/δ)`.
pub fn anchor_optimum(sigma: &[f64], delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain("delta must lie in (0, 1)".into()));
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let sum_sq: f64 = sigma.iter().map(|s| s * s).sum();
    let log_inv_delta = -delta.ln();
    Ok(sigma
        .iter()
        .map(|&s| (-(s * s / sum_sq) * log_inv_delta).exp())
        .collect())
}

/// First-order growth data at an anchor: exponents
/// `A_j = σ_j / sqrt(-2 log v_j)` and amplitude
/// `B = ∏ exp(σ_j sqrt(-log v_j / 2))`.
pub fn local_growth(v_c: &[f64], sigma: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(v_c.len(), sigma.len());
    let a = v_c
        .iter()
        .zip(sigma)
        .map(|(&v, &s)| s / (-2.0 * v.ln()).sqrt())
        .collect();
    let b = v_c
        .iter()
        .zip(sigma)
        .map(|(&v, &s)| (s * (-v.ln() / 2.0).sqrt()).exp())
        .product();
    (a, b)
}

/// Unperturbed growth exponent `A* = sqrt(Σσ² / (2 (log n - log C)))`.
pub fn a_star(coeffs: &[f64], n: f64, c: f64) -> Result<f64> {
    if !(n > c) {
        return Err(Error::Domain(format!("need n > C (n = {n}, C = {c})")));
    }
    let sum_sq: f64 = coeffs.iter().map(|s| s * s).sum();
    Ok((sum_sq / (2.0 * (n.ln() - c.ln()))).sqrt())
}

/// Amplitude at the optimal anchor,
/// `B* = exp(sqrt(Σσ²/2 · (log n - log C)))`.
pub fn b_star(coeffs: &[f64], n: f64, c: f64) -> Result<f64> {
    if !(n > c) {
        return Err(Error::Domain(format!("need n > C (n = {n}, C = {c})")));
    }
    let sum_sq: f64 = coeffs.iter().map(|s| s * s).sum();
    Ok((sum_sq / 2.0 * (n.ln() - c.ln())).sqrt().exp())
}

/// Inverse-CDF approximation error constant carried inside K_1.
pub const EPS_BAR: f64 = 4.5e-4;

/// Evaluate the full error model at sample size `n`.
///
/// The growth exponents are perturbed to pairwise-distinct values
/// `A_j* = (j-1) δ̄ + A*`, ascending in j. When `max A* >= 1` the model is
/// out of range: the flag is cleared and the constants are NaN rather than
/// an error, so sweeps can report the breakdown point.
pub fn theorem_bound(spec: &GrowthSpec, n: u64) -> Result<BoundEval> {
    spec.validate()?;
    let s = spec.dimension();
    let nf = n as f64;
    if spec.hyperbolic_c / nf > 1.0 {
        return Err(Error::Domain(format!(
            "C/n = {} exceeds 1; hyperbolic set is empty",
            spec.hyperbolic_c / nf
        )));
    }
    let base = a_star(&spec.coeffs, nf, spec.hyperbolic_c)?;
    let a: Vec<f64> = (0..s)
        .map(|j| base + j as f64 * spec.delta_bar)
        .collect();
    for w in a.windows(2) {
        assert!(w[1] > w[0], "perturbed exponents must be distinct");
    }
    let max_a = *a.last().expect("nonempty");
    let rate_exponent = -1.0 + spec.epsilon + max_a;
    if max_a >= 1.0 {
        return Ok(BoundEval {
            n,
            a_star: a,
            b_star: f64::NAN,
            b_tilde: f64::NAN,
            c1: f64::NAN,
            c2: f64::NAN,
            bound_value: f64::NAN,
            rate_exponent,
            in_range: false,
        });
    }

    // B* = B(v_c*) K_1 with K_1 = exp(|ε̄| Σσ) sqrt(2π) exp(ε̄²/2) ∏σ.
    let k1 = (EPS_BAR * spec.coeffs.iter().sum::<f64>()).exp()
        * (2.0 * std::f64::consts::PI).sqrt()
        * (EPS_BAR * EPS_BAR / 2.0).exp()
        * spec.coeffs.iter().product::<f64>();
    let b_star_val = b_star(&spec.coeffs, nf, spec.hyperbolic_c)? * k1;

    // B̃ = 2^s B* ∏ (1 + 1/A_j*).
    let b_tilde = (2f64).powi(s as i32)
        * b_star_val
        * a.iter().map(|&aj| 1.0 + 1.0 / aj).product::<f64>();

    // C1 = 2^{s+1} B̃ Σ_j |C^{1-A_j*} / ((A_j*-1) φ'(A_j*))|, term-wise
    // absolute values since φ' alternates sign over the ascending A_j*.
    let c = spec.hyperbolic_c;
    let c1_sum: f64 = (0..s)
        .map(|j| {
            let phi_prime: f64 = (0..s)
                .filter(|&k| k != j)
                .map(|k| a[j] - a[k])
                .product();
            (c.powf(1.0 - a[j]) / ((a[j] - 1.0) * phi_prime)).abs()
        })
        .sum();
    let c1 = (2f64).powi(s as i32 + 1) * b_tilde * c1_sum;

    // C2 = C_{ε,s} B* (5/2)^s Σ_{u≠∅} 1/A*_{m(u)} ∏_{j∈u-} 1/(A*_{m(u)} - A_j*)
    //      · C^{-max A*}.
    // Grouping subsets by their largest element k turns the 2^s - 1 terms
    // into Σ_k (1/A_k*) ∏_{j<k} (1 + 1/(A_k* - A_j*)).
    let subset_sum: f64 = (0..s)
        .map(|k| {
            let prod: f64 = (0..k).map(|j| 1.0 + 1.0 / (a[k] - a[j])).product();
            prod / a[k]
        })
        .sum();
    let c2 = spec.c_eps * b_star_val * (2.5f64).powi(s as i32) * subset_sum * c.powf(-max_a);

    let bound_value = c1 * nf.powf(-1.0 + max_a) + c2 * nf.powf(rate_exponent);
    let eval = BoundEval {
        n,
        a_star: a,
        b_star: b_star_val,
        b_tilde,
        c1,
        c2,
        bound_value,
        rate_exponent,
        in_range: true,
    };
    debug_assert!(
        (eval.reassembled(spec.epsilon) - eval.bound_value).abs()
            <= 1e-12 * eval.bound_value.abs(),
        "bound self-consistency"
    );
    Ok(eval)
}

/// Closed-form integral of `∏ t_j^{-A_j}` over the corner region
/// `{t in [0,1]^s : ∏ t_j < ε}` for pairwise-distinct exponents `A_j < 1`:
/// `Σ_j ε^{1-A_j} / ((1 - A_j) φ'(A_j))` with `φ(x) = ∏ (x - A_j)`.
pub fn corner_integral(a: &[f64], eps: f64) -> Result<f64> {
    validate_exponents(a, eps)?;
    let s = a.len();
    for i in 0..s {
        for j in (i + 1)..s {
            if (a[i] - a[j]).abs() < 1e-9 {
                return Err(Error::Domain(format!(
                    "exponents {} and {} are closer than 1e-9; use the equal-exponent form",
                    a[i], a[j]
                )));
            }
        }
    }
    let mut sum = 0.0;
    for j in 0..s {
        let phi_prime: f64 = (0..s)
            .filter(|&k| k != j)
            .map(|k| a[j] - a[k])
            .product();
        sum += eps.powf(1.0 - a[j]) / ((1.0 - a[j]) * phi_prime);
    }
    Ok(sum)
}

/// Equal-exponent variant of [`corner_integral`]:
/// `Σ_{k=1..s} ε^{1-A} / (1-A)^k · (-log ε)^{s-k} / (s-k)!`.
pub fn corner_integral_equal(a: f64, s: u32, eps: f64) -> Result<f64> {
    validate_exponents(&[a], eps)?;
    if s == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let neg_log_eps = -eps.ln();
    let mut sum = 0.0;
    for k in 1..=s {
        sum += eps.powf(1.0 - a) / (1.0 - a).powi(k as i32) * neg_log_eps.powi((s - k) as i32)
            / factorial(s - k);
    }
    Ok(sum)
}

/// Integral of `∏ t_j^{-A_j}` over the hyperbolic region `{∏ t_j >= ε}`:
/// `1/φ(1) + Σ_j ε^{1-A_j} / ((A_j - 1) φ'(A_j))`.
pub fn hyperbolic_integral(a: &[f64], eps: f64) -> Result<f64> {
    let corner = corner_integral(a, eps)?;
    let phi_one: f64 = a.iter().map(|&aj| 1.0 - aj).product();
    Ok(1.0 / phi_one - corner)
}

fn validate_exponents(a: &[f64], eps: f64) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Domain("exponent vector must be nonempty".into()));
    }
    if a.iter().any(|&aj| !(aj < 1.0)) {
        return Err(Error::Domain("exponents must be < 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain("epsilon must lie in (0, 1]".into()));
    }
    Ok(())
}

/// Both sides of the model's monotonicity identity at fixed anchor `n1`:
/// `lhs = exp(sqrt(𝒞 log n)) n^(-1+sqrt(𝒞/log n))` and
/// `rhs = exp(sqrt(𝒞 log n1)) n^(-1+sqrt(𝒞/log n1))`; `lhs <= rhs` holds
/// for all n > n1.
pub fn example_bound_monotone(cc: f64, n1: f64, n: f64) -> (f64, f64) {
    let lhs = (cc * n.ln()).sqrt().exp() * n.powf(-1.0 + (cc / n.ln()).sqrt());
    let rhs = (cc * n1.ln()).sqrt().exp() * n.powf(-1.0 + (cc / n1.ln()).sqrt());
    (lhs, rhs)
}

/// Importance-sampling proposal family for rate prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsFamily {
    ScaledNormal,
    BetaLike,
}

/// Predicted rate exponent under importance sampling.
///
/// Scaled-normal proposal with scales `α_j >= 1`:
/// `-1 + ε + δ + max(0, 1 - min α_j²)`; beta-like proposal with
/// `β_j in (0, 1]`: `-1 + ε + δ + max(0, 1 - min 1/β_j)`. The clamp encodes
/// that removing the boundary singularity cannot beat `-1 + ε + δ`.
pub fn predicted_is_exponent(family: IsFamily, params: &[f64], eps: f64, delta: f64) -> f64 {
    let reduction = match family {
        IsFamily::ScaledNormal => params.iter().map(|&a| a * a).fold(f64::INFINITY, f64::min),
        IsFamily::BetaLike => params.iter().map(|&b| 1.0 / b).fold(f64::INFINITY, f64::min),
    };
    -1.0 + eps + delta + (1.0 - reduction).max(0.0)
}
