//! Contract mechanics and closed-form quantities.
//!
//! State of the reduced problem is the bonus distribution rate (BDR)
//! `X = ln(A/R)`, where `A` is the reference portfolio and `R` the policy
//! reserve. Everything here is a pure function of immutable inputs:
//!
//! - crediting rate on the reserve: `max(delta * (ln(A/R) - beta), r_g)`;
//! - intrinsic value paid at surrender/insolvency/maturity:
//!   `R + gamma * max(alpha * A - R, 0)`;
//! - normalized gain `h(x) = exp(-x) + gamma * max(alpha - exp(-x), 0)`;
//! - BDR drift under the portfolio numeraire:
//!   `pi(x) = r - r_g + sigma^2/2 - max(delta*(x - beta) - r_g, 0)`;
//! - generator term `H(x) = (L h)(x)` away from the kink at `x_alpha`,
//!   with the fee-adjusted variant `H^{p,q}` when management fees apply.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Contract and market constants. Rates are annualized decimals, time is in
/// years; there are no day-count conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Contract maturity in years (> 0).
    pub maturity_t: f64,
    /// Risk-free rate.
    pub risk_free_r: f64,
    /// Portfolio volatility (> 0).
    pub sigma: f64,
    /// Minimum guaranteed crediting rate, in (0, r).
    pub guaranteed_rg: f64,
    /// Participation rate on the BDR excess over the target buffer (> 0).
    pub delta: f64,
    /// Target buffer ratio (> 0).
    pub beta: f64,
    /// Bonus participation coefficient, in (0, 1).
    pub gamma: f64,
    /// Share of the portfolio backing the policy, in (0, 1); the initial
    /// reserve is `alpha * a0`.
    pub alpha: f64,
    /// Initial portfolio value (> 0).
    pub a0: f64,
    /// Management fee rate charged on the portfolio (>= 0).
    pub fee_p: f64,
    /// Management fee rate charged on the reserve (>= 0).
    pub fee_q: f64,
}

impl Default for PolicyParams {
    /// Baseline parameter set used throughout:
    /// `T=10, r=1.5%, sigma=18%, r_g=1%, delta=0.1, gamma=0.4, beta=3,
    /// alpha=0.1, a0=1000`, no fees.
    fn default() -> Self {
        PolicyParams {
            maturity_t: 10.0,
            risk_free_r: 0.015,
            sigma: 0.18,
            guaranteed_rg: 0.01,
            delta: 0.1,
            beta: 3.0,
            gamma: 0.4,
            alpha: 0.1,
            a0: 1000.0,
            fee_p: 0.0,
            fee_q: 0.0,
        }
    }
}

impl PolicyParams {
    /// Checks every parameter invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, constraint: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    constraint: constraint.to_string(),
                })
            }
        }
        check(
            self.maturity_t > 0.0 && self.maturity_t.is_finite(),
            "maturity_t",
            "must be > 0",
        )?;
        check(self.sigma > 0.0 && self.sigma.is_finite(), "sigma", "must be > 0")?;
        check(
            self.guaranteed_rg > 0.0,
            "guaranteed_rg",
            "must be > 0 (guaranteed rate is strictly positive)",
        )?;
        check(
            self.guaranteed_rg < self.risk_free_r,
            "guaranteed_rg",
            &format!(
                "must be < risk_free_r (got r_g = {} >= r = {})",
                self.guaranteed_rg, self.risk_free_r
            ),
        )?;
        check(self.delta > 0.0, "delta", "must be > 0")?;
        check(self.beta > 0.0, "beta", "must be > 0")?;
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma",
            "must lie in the open interval (0, 1)",
        )?;
        check(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha",
            "must lie in the open interval (0, 1)",
        )?;
        check(self.a0 > 0.0, "a0", "must be > 0")?;
        check(self.fee_p >= 0.0, "fee_p", "must be >= 0")?;
        check(self.fee_q >= 0.0, "fee_q", "must be >= 0")?;
        Ok(())
    }

    /// Bonus activation threshold `x_alpha = ln(1/alpha)`.
    pub fn x_alpha(&self) -> f64 {
        (1.0 / self.alpha).ln()
    }

    /// Level above which the credited rate exceeds the risk-free rate:
    /// `x_bar0 = beta + r/delta`.
    pub fn x_bar0(&self) -> f64 {
        self.beta + self.risk_free_r / self.delta
    }

    /// Level above which the bonus rate exceeds the guarantee:
    /// `x_g = beta + r_g/delta`.
    pub fn x_g(&self) -> f64 {
        self.beta + self.guaranteed_rg / self.delta
    }

    pub fn has_fees(&self) -> bool {
        self.fee_p > 0.0 || self.fee_q > 0.0
    }
}

/// Which structure the fee-adjusted generator `H^{p,q}` takes.
///
/// With `p > 0` the positivity set of `H^{p,q}` is either empty (Case I) or
/// a bounded interval `(hat_x1, hat_x2)` (Case II). With `p = 0` the
/// structure is the same as without fees, up to replacing `x_bar0` by
/// `x_bar_q_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeeCase {
    /// `p = 0`: no bounded positivity island, baseline geometry applies.
    NoFeeBaseline,
    /// `p > 0` and `H^{p,q} <= 0` everywhere.
    CaseI,
    /// `p > 0` and `H^{p,q} > 0` exactly on `(hat_x1, hat_x2)`.
    CaseII,
}

/// All closed-form thresholds, plus the fee-case classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedThresholds {
    /// `ln(1/alpha)`, the bonus activation threshold.
    pub x_alpha: f64,
    /// `beta + r/delta`; the crediting rate exceeds the risk-free rate above it.
    pub x_bar0: f64,
    /// `beta + r_g/delta`; the crediting rate exceeds the guarantee above it.
    pub x_g: f64,
    /// `beta + (r + q)/delta`, the fee-adjusted threshold on the lower branch.
    pub x_bar_q: f64,
    /// `beta + (r + q/(1-gamma))/delta`, the fee-adjusted threshold on the upper branch.
    pub x_bar_q_gamma: f64,
    pub fee_case: FeeCase,
    /// Lower root of `x - x_bar_q_gamma = (p/delta) e^x / (1-gamma)`
    /// (Case II only).
    pub hat_x1: Option<f64>,
    /// Upper root of the same equation (Case II only).
    pub hat_x2: Option<f64>,
}

impl DerivedThresholds {
    /// Upper landmark of the stopping geometry: the level at which the
    /// generator term changes sign on the bonus branch. Equals `x_bar0`
    /// without fees, `x_bar_q_gamma` with `p = 0`, and `hat_x1` in fee
    /// Case II. In fee Case I the generator never turns positive and the
    /// landmark is unbounded.
    pub fn upper_landmark(&self) -> f64 {
        match self.fee_case {
            FeeCase::NoFeeBaseline => {
                if self.x_bar_q_gamma > self.x_bar0 {
                    self.x_bar_q_gamma
                } else {
                    self.x_bar0
                }
            }
            FeeCase::CaseII => self.hat_x1.unwrap_or(f64::INFINITY),
            FeeCase::CaseI => f64::INFINITY,
        }
    }
}

/// Outcome of the fee-case classification, with root diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeCaseReport {
    pub case: FeeCase,
    /// `ln(delta*(1-gamma)/p) - (1 + x_bar_q_gamma)`; Case II iff positive.
    /// Zero for `p = 0` reports (the classification does not apply).
    pub discriminant: f64,
    /// `(hat_x1, hat_x2)` in Case II.
    pub roots: Option<(f64, f64)>,
    /// Largest residual of the defining equation at the reported roots.
    pub root_residuals: f64,
    /// True when the discriminant fell inside `(0, 1e-8]` and the case was
    /// downgraded to Case I because root extraction is meaningless there.
    pub near_degenerate: bool,
}

/// Normalized gain function `h(x) = e^{-x} + gamma * max(alpha - e^{-x}, 0)`
/// for `x >= 0`. Convex, strictly decreasing, 1-Lipschitz, with range
/// `[alpha*gamma, 1]`.
pub fn payoff_h(x: f64, params: &PolicyParams) -> Result<f64> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!(
            "payoff_h requires x >= 0, got {x}"
        )));
    }
    Ok(h_raw(x, params))
}

/// Unchecked gain function for hot loops where `x >= 0` is structural.
#[inline]
pub(crate) fn h_raw(x: f64, params: &PolicyParams) -> f64 {
    let e = (-x).exp();
    e + params.gamma * (params.alpha - e).max(0.0)
}

/// BDR drift under the portfolio numeraire:
/// `pi(x) = r - r_g + sigma^2/2 - max(delta*(x - beta) - r_g, 0)`.
///
/// Constant for `x <= x_g`, affine with slope `-delta` above; globally
/// Lipschitz with constant `delta`. Total function on the reals.
pub fn drift_pi(x: f64, params: &PolicyParams) -> f64 {
    params.risk_free_r - params.guaranteed_rg + 0.5 * params.sigma * params.sigma
        - (params.delta * (x - params.beta) - params.guaranteed_rg).max(0.0)
}

/// Instantaneous crediting rate on the reserve:
/// `max(delta * (ln(a/reserve) - beta), r_g)`.
pub fn crediting_rate(a: f64, reserve: f64, params: &PolicyParams) -> Result<f64> {
    if a <= 0.0 || reserve <= 0.0 {
        return Err(Error::Domain(format!(
            "crediting_rate requires a > 0 and reserve > 0, got a = {a}, reserve = {reserve}"
        )));
    }
    Ok((params.delta * ((a / reserve).ln() - params.beta)).max(params.guaranteed_rg))
}

/// Intrinsic value paid at surrender, insolvency or maturity:
/// `reserve + gamma * max(alpha * a - reserve, 0)`.
pub fn intrinsic_value(a: f64, reserve: f64, params: &PolicyParams) -> Result<f64> {
    if a <= 0.0 || reserve < 0.0 {
        return Err(Error::Domain(format!(
            "intrinsic_value requires a > 0 and reserve >= 0, got a = {a}, reserve = {reserve}"
        )));
    }
    Ok(reserve + params.gamma * (params.alpha * a - reserve).max(0.0))
}

/// Generator term acting on the gain function.
///
/// Without fees this is
/// `H(x) = e^{-x} (sigma^2/2 - pi(x))` for `x <= x_alpha` and
/// `(1-gamma)` times that for `x > x_alpha`; it satisfies
/// `-(r - r_g) <= H <= delta` and is positive exactly for `x > x_bar0`.
/// With fees the two branches become
/// `e^{-x}(sigma^2/2 - q - pi(x)) - p` and
/// `(1-gamma) e^{-x}(sigma^2/2 - q/(1-gamma) - pi(x)) - p`.
///
/// The kink point `x = x_alpha` itself is assigned to the lower branch.
pub fn generator_h(x: f64, params: &PolicyParams) -> Result<f64> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!(
            "generator_h requires x >= 0, got {x}"
        )));
    }
    let half_var = 0.5 * params.sigma * params.sigma;
    let pi = drift_pi(x, params);
    let e = (-x).exp();
    let value = if x <= params.x_alpha() {
        e * (half_var - params.fee_q - pi) - params.fee_p
    } else {
        (1.0 - params.gamma) * e * (half_var - params.fee_q / (1.0 - params.gamma) - pi)
            - params.fee_p
    };
    Ok(value)
}

/// Running fee rate `p + q e^{-x}` deducted while the contract is alive.
pub fn running_cost(x: f64, params: &PolicyParams) -> f64 {
    params.fee_p + params.fee_q * (-x).max(-700.0).exp()
}

/// Populates every threshold field and classifies the fee case.
pub fn derive_thresholds(params: &PolicyParams) -> Result<DerivedThresholds> {
    params.validate()?;
    let report = classify_fee_case(params)?;
    Ok(DerivedThresholds {
        x_alpha: params.x_alpha(),
        x_bar0: params.x_bar0(),
        x_g: params.x_g(),
        x_bar_q: params.beta + (params.risk_free_r + params.fee_q) / params.delta,
        x_bar_q_gamma: x_bar_q_gamma(params),
        fee_case: report.case,
        hat_x1: report.roots.map(|(lo, _)| lo),
        hat_x2: report.roots.map(|(_, hi)| hi),
    })
}

fn x_bar_q_gamma(params: &PolicyParams) -> f64 {
    params.beta + (params.risk_free_r + params.fee_q / (1.0 - params.gamma)) / params.delta
}

/// Discriminants below this are treated as degenerate Case II: the two roots
/// collide and extracting them numerically is meaningless.
const DEGENERATE_DISCRIMINANT: f64 = 1e-8;

/// Residual target for the fee-case root finder.
const ROOT_TOLERANCE: f64 = 1e-10;

/// Classifies the sign structure of the fee-adjusted generator on the bonus
/// branch and, in Case II, extracts the two roots
/// `hat_x1 < hat_x2` of `x - x_bar_q_gamma = (p/delta) e^x / (1-gamma)` by
/// bisection on the two sides of the maximizer `x* = ln(delta*(1-gamma)/p)`.
pub fn classify_fee_case(params: &PolicyParams) -> Result<FeeCaseReport> {
    params.validate()?;
    if params.fee_p == 0.0 {
        return Ok(FeeCaseReport {
            case: FeeCase::NoFeeBaseline,
            discriminant: 0.0,
            roots: None,
            root_residuals: 0.0,
            near_degenerate: false,
        });
    }

    let xqg = x_bar_q_gamma(params);
    let coeff = params.fee_p / (params.delta * (1.0 - params.gamma));
    // gap(x) = x - x_bar_q_gamma - coeff * e^x, concave with maximizer x_star
    let gap = |x: f64| x - xqg - coeff * x.exp();
    let x_star = (1.0 / coeff).ln();
    let discriminant = x_star - 1.0 - xqg;

    if discriminant <= 0.0 {
        return Ok(FeeCaseReport {
            case: FeeCase::CaseI,
            discriminant,
            roots: None,
            root_residuals: 0.0,
            near_degenerate: false,
        });
    }
    if discriminant <= DEGENERATE_DISCRIMINANT {
        log::warn!(
            "fee-case discriminant {discriminant:.3e} is positive but negligible; \
             reporting Case I (degenerate roots)"
        );
        return Ok(FeeCaseReport {
            case: FeeCase::CaseI,
            discriminant,
            roots: None,
            root_residuals: 0.0,
            near_degenerate: true,
        });
    }

    // Lower root: gap < 0 at x_bar_q_gamma, gap > 0 at x_star.
    let hat_x1 = bisect(&gap, xqg, x_star)?;
    // Upper root: expand to the right until the sign flips back.
    let mut hi = x_star + 1.0;
    let mut window = 1.0;
    while gap(hi) > 0.0 {
        window *= 2.0;
        hi = x_star + window;
        if window > 1e6 {
            return Err(Error::Numerical(format!(
                "failed to bracket the upper fee-case root: gap({hi}) = {} still positive",
                gap(hi)
            )));
        }
    }
    let hat_x2 = bisect(&gap, x_star, hi)?;

    let residual = gap(hat_x1).abs().max(gap(hat_x2).abs());
    Ok(FeeCaseReport {
        case: FeeCase::CaseII,
        discriminant,
        roots: Some((hat_x1, hat_x2)),
        root_residuals: residual,
        near_degenerate: false,
    })
}

/// Bisection for a root of `f` on `[lo, hi]`; the endpoints must straddle
/// zero. Chosen over Newton for guaranteed convergence on the concave gap
/// function.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical(format!(
            "bisection bracket failure on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= ROOT_TOLERANCE || (hi - lo) < f64::EPSILON * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn base() -> PolicyParams {
        PolicyParams::default()
    }

    #[test]
    fn thresholds_for_baseline_parameters() {
        let th = derive_thresholds(&base()).unwrap();
        assert_abs_diff_eq!(th.x_alpha, 10f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(th.x_alpha, std::f64::consts::LN_10, epsilon = 1e-12);
        assert_abs_diff_eq!(th.x_bar0, 3.15, epsilon = 1e-12);
        assert_abs_diff_eq!(th.x_g, 3.1, epsilon = 1e-12);
        assert_eq!(th.fee_case, FeeCase::NoFeeBaseline);
        assert!(th.hat_x1.is_none() && th.hat_x2.is_none());
    }

    #[test]
    fn knife_edge_alpha_puts_x_alpha_on_x_bar0() {
        let mut p = base();
        p.alpha = (-p.beta - p.risk_free_r / p.delta).exp();
        let th = derive_thresholds(&p).unwrap();
        assert_abs_diff_eq!(th.x_alpha, th.x_bar0, epsilon = 1e-12);
    }

    #[test]
    fn fee_thresholds_hand_values() {
        let mut p = base();
        p.fee_p = 0.001;
        p.fee_q = 0.002;
        let th = derive_thresholds(&p).unwrap();
        assert_abs_diff_eq!(th.x_bar_q, 3.17, epsilon = 1e-12);
        assert_abs_diff_eq!(th.x_bar_q_gamma, 3.0 + (0.015 + 0.002 / 0.6) / 0.1, epsilon = 1e-12);
        // ln(0.1 * 0.6 / 0.001) - (1 + 3.18333...) < 0 so no positivity island
        let report = classify_fee_case(&p).unwrap();
        assert_eq!(report.case, FeeCase::CaseI);
        assert!(report.discriminant < 0.0);
        assert_abs_diff_eq!(
            report.discriminant,
            60f64.ln() - 1.0 - th.x_bar_q_gamma,
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_parameters_name_the_violation() {
        let mut p = base();
        p.guaranteed_rg = 0.02; // above r = 0.015
        let err = p.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("guaranteed_rg"), "got: {msg}");
        assert!(msg.contains("risk_free_r"), "got: {msg}");

        let mut p = base();
        p.gamma = 1.0;
        assert!(p.validate().is_err());
        let mut p = base();
        p.sigma = 0.0;
        assert!(p.validate().is_err());
        let mut p = base();
        p.alpha = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn payoff_spot_values() {
        let p = base();
        assert_eq!(payoff_h(0.0, &p).unwrap(), 1.0);
        assert_abs_diff_eq!(payoff_h(p.x_alpha(), &p).unwrap(), 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(payoff_h(3.0, &p).unwrap(), 0.069872241, epsilon = 1e-9);
        assert!(payoff_h(-0.1, &p).is_err());
    }

    #[test]
    fn payoff_is_lipschitz_monotone_convex_and_in_range() {
        let p = base();
        let lo = p.alpha * p.gamma;
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.003).collect();
        let h: Vec<f64> = grid.iter().map(|&x| payoff_h(x, &p).unwrap()).collect();
        for i in 0..grid.len() {
            assert!(h[i] >= lo - 1e-15 && h[i] <= 1.0 + 1e-15);
            if i > 0 {
                let dh = h[i - 1] - h[i];
                let dx = grid[i] - grid[i - 1];
                assert!(dh > 0.0, "h must be strictly decreasing at x = {}", grid[i]);
                assert!(dh <= dx + 1e-15, "1-Lipschitz violated at x = {}", grid[i]);
            }
        }
        // midpoint convexity over triples spanning the kink as well
        for i in 0..grid.len() - 2 {
            let (a, b) = (grid[i], grid[i + 2]);
            let mid = payoff_h(0.5 * (a + b), &p).unwrap();
            assert!(mid <= 0.5 * (h[i] + h[i + 2]) + 1e-14);
        }
    }

    #[test]
    fn drift_spot_values_and_kink() {
        let p = base();
        assert_abs_diff_eq!(drift_pi(2.0, &p), 0.0212, epsilon = 1e-15);
        assert_abs_diff_eq!(drift_pi(4.0, &p), -0.0688, epsilon = 1e-15);
        let xg = p.x_g();
        assert_abs_diff_eq!(drift_pi(xg, &p), 0.0212, epsilon = 1e-12);
        assert_abs_diff_eq!(
            drift_pi(xg - 1e-9, &p),
            drift_pi(xg + 1e-9, &p),
            epsilon = 1e-9
        );
    }

    #[test]
    fn drift_is_delta_lipschitz() {
        let p = base();
        let grid: Vec<f64> = (0..=600).map(|i| i as f64 * 0.02).collect();
        for (i, &x) in grid.iter().enumerate() {
            for &y in &grid[i + 1..] {
                let lhs = (drift_pi(x, &p) - drift_pi(y, &p)).abs();
                assert!(lhs <= p.delta * (y - x) + 1e-14, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn crediting_rate_branches() {
        let p = base();
        assert_eq!(crediting_rate(500.0, 500.0, &p).unwrap(), p.guaranteed_rg);
        let at_beta = p.beta.exp();
        assert_eq!(crediting_rate(at_beta, 1.0, &p).unwrap(), p.guaranteed_rg);
        assert_abs_diff_eq!(
            crediting_rate(3.4f64.exp(), 1.0, &p).unwrap(),
            0.04,
            epsilon = 1e-12
        );
        assert!(crediting_rate(0.0, 1.0, &p).is_err());
        assert!(crediting_rate(1.0, 0.0, &p).is_err());
    }

    #[test]
    fn crediting_rate_equals_r_at_x_bar0() {
        let p = base();
        let ratio = p.x_bar0().exp();
        assert_relative_eq!(
            crediting_rate(ratio, 1.0, &p).unwrap(),
            p.risk_free_r,
            epsilon = 1e-12
        );
    }

    #[test]
    fn intrinsic_value_branches() {
        let p = base();
        assert_eq!(intrinsic_value(1000.0, 100.0, &p).unwrap(), 100.0);
        assert_abs_diff_eq!(intrinsic_value(2000.0, 100.0, &p).unwrap(), 140.0, epsilon = 1e-12);
        // insolvency regime: reserve >= alpha * a pays the bare reserve
        assert_eq!(intrinsic_value(900.0, 95.0, &p).unwrap(), 95.0);
        assert!(intrinsic_value(-1.0, 0.0, &p).is_err());
        assert!(intrinsic_value(1.0, -0.5, &p).is_err());
    }

    #[test]
    fn generator_spot_values() {
        let p = base();
        assert_abs_diff_eq!(generator_h(0.0, &p).unwrap(), -0.005, epsilon = 1e-15);
        let x0 = p.x_bar0();
        assert!(generator_h(x0 + 1e-6, &p).unwrap() > 0.0);
        assert!(generator_h(x0 - 1e-6, &p).unwrap() < 0.0);
        // jump at x_alpha scales the branch by (1 - gamma)
        let xa = p.x_alpha();
        let left = generator_h(xa, &p).unwrap();
        let right = generator_h(xa + 1e-12, &p).unwrap();
        assert_relative_eq!(right / left, 1.0 - p.gamma, epsilon = 1e-6);
    }

    #[test]
    fn generator_sign_change_and_bounds_on_grid() {
        let p = base();
        let x0 = p.x_bar0();
        let lower = -(p.risk_free_r - p.guaranteed_rg);
        for i in 0..=6000 {
            let x = i as f64 * 0.005;
            let h = generator_h(x, &p).unwrap();
            if (x - x0).abs() > 1e-9 {
                assert_eq!(h > 0.0, x > x0, "sign mismatch at x = {x}: H = {h}");
            }
            assert!(h >= lower - 1e-15 && h <= p.delta + 1e-15, "bounds at {x}: {h}");
        }
    }

    #[test]
    fn running_cost_values() {
        let mut p = base();
        assert_eq!(running_cost(1.23, &p), 0.0);
        p.fee_p = 0.001;
        p.fee_q = 0.002;
        assert_abs_diff_eq!(running_cost(0.0, &p), 0.003, epsilon = 1e-15);
        assert_abs_diff_eq!(running_cost(2f64.ln(), &p), 0.002, epsilon = 1e-15);
    }

    #[test]
    fn fee_case_classification() {
        let mut p = base();
        let report = classify_fee_case(&p).unwrap();
        assert_eq!(report.case, FeeCase::NoFeeBaseline);

        p.fee_p = 1e-5;
        let report = classify_fee_case(&p).unwrap();
        assert_eq!(report.case, FeeCase::CaseII);
        assert!(report.root_residuals <= 1e-10);
        let (x1, x2) = report.roots.unwrap();
        let x_star = (p.delta * (1.0 - p.gamma) / p.fee_p).ln();
        assert_abs_diff_eq!(x_star, 6000f64.ln(), epsilon = 1e-12);
        assert!(p.x_bar0() < x1 && x1 < x_star && x_star < x2);
        // roots satisfy the defining equation
        let coeff = p.fee_p / (p.delta * (1.0 - p.gamma));
        for x in [x1, x2] {
            assert!((x - p.x_bar0() - coeff * x.exp()).abs() <= 1e-10);
        }

        p.fee_p = 0.05;
        let report = classify_fee_case(&p).unwrap();
        assert_eq!(report.case, FeeCase::CaseI);
        assert!(report.discriminant < 0.0);
    }

    #[test]
    fn degenerate_case_two_downgrades_to_case_one() {
        let mut p = base();
        // pick p so the discriminant is ~5e-9: x_star = 1 + x_bar_q_gamma + 5e-9
        let x_star = 1.0 + p.x_bar0() + 5e-9;
        p.fee_p = p.delta * (1.0 - p.gamma) * (-x_star).exp();
        let report = classify_fee_case(&p).unwrap();
        assert_eq!(report.case, FeeCase::CaseI);
        assert!(report.near_degenerate);
        assert!(report.discriminant > 0.0 && report.discriminant <= 1e-8);
    }

    #[test]
    fn thresholds_are_ordered_with_fees() {
        let mut p = base();
        p.fee_p = 0.002;
        p.fee_q = 0.003;
        let th = derive_thresholds(&p).unwrap();
        assert!(th.x_g < th.x_bar0);
        assert!(th.x_bar_q_gamma >= th.x_bar_q && th.x_bar_q >= th.x_bar0);
    }
}
