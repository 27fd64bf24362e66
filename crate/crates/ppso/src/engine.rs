//! Lattice valuation of the PPSO.
//!
//! Two backward inductions share the same recombining random-walk
//! approximation of the BDR diffusion (step `dx = sigma * sqrt(dt)`, upward
//! probability `clamp(1/2 + sqrt(dt) * pi(x) / (2 sigma), 0, 1)`):
//!
//! - [`price_cone`] builds the cone-shaped tree rooted at `x_alpha` and
//!   returns the headline prices (American, European, early-exercise
//!   premium);
//! - [`solve_grid`] runs the same recursion on a full rectangle
//!   `[0, T] x [0, x_max]` so that every `(t, x)` node is valued, which is
//!   what the boundary extraction needs.
//!
//! Nodes at or below `x = 0` are absorbed at value `h(0) = 1`: the contract
//! has terminated, so no further fees accrue. Management fees enter the
//! recursion as a left-endpoint deduction `(p + q e^{-x}) dt` from the
//! continuation value.

use serde::{Deserialize, Serialize};

use crate::model::{self, PolicyParams};
use crate::{Error, Result};

/// Discretisation of the time-space strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Number of time steps (N >= 1).
    pub n_steps: usize,
    /// Step length `T / n_steps` in years.
    pub dt: f64,
    /// Space step `sigma * sqrt(dt)`.
    pub dx: f64,
    /// Upper truncation of the grid (grid mode only), a multiple of `dx`.
    pub x_max: Option<f64>,
    /// Root of the cone tree; defaults to `x_alpha`.
    pub x0: f64,
}

impl LatticeSpec {
    /// Cone-mode spec rooted at `x_alpha`.
    pub fn cone(params: &PolicyParams, n_steps: usize) -> Result<Self> {
        params.validate()?;
        if n_steps == 0 {
            return Err(Error::Spec("n_steps must be >= 1".into()));
        }
        let dt = params.maturity_t / n_steps as f64;
        Ok(LatticeSpec {
            n_steps,
            dt,
            dx: params.sigma * dt.sqrt(),
            x_max: None,
            x0: params.x_alpha(),
        })
    }

    /// Grid-mode spec with an automatically chosen truncation level.
    pub fn grid_auto(params: &PolicyParams, n_steps: usize) -> Result<Self> {
        let mut spec = Self::cone(params, n_steps)?;
        let target = auto_x_max(params);
        spec.x_max = Some(spec.round_up_to_level(target));
        Ok(spec)
    }

    /// Grid-mode spec with an explicit truncation level, which must not fall
    /// below the minimum required for the stopping geometry to fit.
    pub fn grid(params: &PolicyParams, n_steps: usize, x_max: f64) -> Result<Self> {
        let mut spec = Self::cone(params, n_steps)?;
        let min = required_x_max(params);
        if x_max < min - 1e-12 {
            return Err(Error::Spec(format!(
                "x_max = {x_max} is below the required minimum {min}"
            )));
        }
        spec.x_max = Some(spec.round_up_to_level(x_max));
        Ok(spec)
    }

    fn round_up_to_level(&self, x: f64) -> f64 {
        (x / self.dx).ceil() * self.dx
    }

    /// Number of space levels above zero in grid mode.
    pub fn k_max(&self) -> usize {
        match self.x_max {
            Some(xm) => (xm / self.dx).round() as usize,
            None => 0,
        }
    }
}

/// Minimum admissible grid truncation:
/// `max(x_alpha, x_bar0, x_bar_q_gamma if fees) + 6 sigma sqrt(T)`.
pub fn required_x_max(params: &PolicyParams) -> f64 {
    let mut lead = params.x_alpha().max(params.x_bar0());
    if params.has_fees() {
        let xqg = params.beta
            + (params.risk_free_r + params.fee_q / (1.0 - params.gamma)) / params.delta;
        lead = lead.max(xqg);
    }
    lead + 6.0 * params.sigma * params.maturity_t.sqrt()
}

/// Default truncation level. Starts from [`required_x_max`] and, when the
/// fee classification yields a bounded positivity island (Case II), extends
/// the grid so the all-stopped region above the island fits inside it: from
/// the truncation level, the deterministic flow `x'(t) = -delta (x - x_eff)`
/// must not be able to reach, within the contract horizon, BDR levels where
/// the residual gain `(1-gamma) e^{-x}` still exceeds the fee bill `p T`.
/// A convexity correction `sigma^2/(2 delta)` (the stationary variance of
/// the linearised flow) and a `6 sigma sqrt(T)` margin are added on top.
pub fn auto_x_max(params: &PolicyParams) -> f64 {
    let base = required_x_max(params);
    let report = match model::classify_fee_case(params) {
        Ok(r) => r,
        Err(_) => return base,
    };
    if report.case != model::FeeCase::CaseII {
        return base;
    }
    let sigma2 = params.sigma * params.sigma;
    let x_eff = params.beta + (params.risk_free_r + 0.5 * sigma2) / params.delta;
    let horizon_cost = params.fee_p * params.maturity_t.max(1.0);
    let x_reachable = ((1.0 - params.gamma) / horizon_cost).ln() + sigma2 / (2.0 * params.delta);
    if x_reachable <= x_eff {
        return base;
    }
    let flow_bound = x_eff
        + (x_reachable - x_eff) * (params.delta * params.maturity_t).exp()
        + 6.0 * params.sigma * params.maturity_t.sqrt();
    base.max(flow_bound)
}

/// Probability of an upward move from level `x` over a step of length `dt`,
/// clamped to `[0, 1]`.
pub fn up_probability(x: f64, params: &PolicyParams, dt: f64) -> f64 {
    let p = 0.5 + dt.sqrt() * model::drift_pi(x, params) / (2.0 * params.sigma);
    p.clamp(0.0, 1.0)
}

/// Headline valuation output, in both normalized units (of `a0`) and
/// currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    /// Normalized value of the contract with the surrender option.
    pub v0: f64,
    /// Normalized value without the surrender option.
    pub v0_european: f64,
    /// Early-exercise premium `v0 - v0_european` (normalized).
    pub premium: f64,
    /// `a0 * v0`.
    pub price_v0: f64,
    /// `a0 * v0_european`.
    pub price_v0e: f64,
    /// `a0 * premium`, the surrender option value.
    pub price_vopt: f64,
    pub n_steps: usize,
    pub spec: LatticeSpec,
}

/// Prices the contract on the recombining cone tree rooted at `x_alpha`.
///
/// Layer `n` holds nodes `x0 + (2j - n) dx`, `j = 0..=n`. The terminal layer
/// carries the gain `h`; absorbed nodes (`x <= 0`) are worth exactly 1; an
/// interior node is worth `max(h(x), E[next] - (p + q e^{-x}) dt)` for the
/// American value, and the same without the `max` for the European
/// companion.
pub fn price_cone(params: &PolicyParams, n_steps: usize) -> Result<ValuationResult> {
    let spec = LatticeSpec::cone(params, n_steps)?;
    let n = spec.n_steps;
    let (dt, dx, x0) = (spec.dt, spec.dx, spec.x0);

    let node_x = |layer: usize, j: usize| x0 + (2.0 * j as f64 - layer as f64) * dx;

    let mut american = vec![0.0; n + 1];
    let mut european = vec![0.0; n + 1];
    for j in 0..=n {
        let x = node_x(n, j);
        let v = if x <= 0.0 { 1.0 } else { model::h_raw(x, params) };
        american[j] = v;
        european[j] = v;
    }

    for layer in (0..n).rev() {
        for j in 0..=layer {
            let x = node_x(layer, j);
            if x <= 0.0 {
                american[j] = 1.0;
                european[j] = 1.0;
            } else {
                let p_up = up_probability(x, params, dt);
                let fee = model::running_cost(x, params) * dt;
                let cont_am = p_up * american[j + 1] + (1.0 - p_up) * american[j] - fee;
                let cont_eu = p_up * european[j + 1] + (1.0 - p_up) * european[j] - fee;
                american[j] = model::h_raw(x, params).max(cont_am);
                european[j] = cont_eu;
            }
        }
    }

    let v0 = american[0];
    let v0_european = european[0];
    let premium = v0 - v0_european;
    Ok(ValuationResult {
        v0,
        v0_european,
        premium,
        price_v0: params.a0 * v0,
        price_v0e: params.a0 * v0_european,
        price_vopt: params.a0 * premium,
        n_steps: n,
        spec,
    })
}

/// Full backward induction on the rectangle `[0, N] x [0, k_max]`.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub spec: LatticeSpec,
    pub params: PolicyParams,
    /// Space levels `x_k = k * dx`, `k = 0..=k_max` (level 0 sits at x = 0).
    pub levels: Vec<f64>,
    /// American values `v[n][k]`, `n = 0..=N`.
    pub values: Vec<Vec<f64>>,
    /// European companion values, same recursion without the obstacle.
    pub european: Vec<Vec<f64>>,
    /// True where the node belongs to the discrete stopping set
    /// (continuation minus gain within the tie tolerance).
    pub stopped: Vec<Vec<bool>>,
}

/// Ties between continuation and immediate exercise classify as stopped,
/// matching a first-entry-time optimal rule.
const TIE_EPS: f64 = 1e-12;

/// Values every node of the rectangle. Row `k = 0` (x = 0) is absorbed at
/// value 1 for all times; the top row closes the grid reflectively (the
/// upward move from `k_max` keeps the mass at `k_max`, justified by the
/// strongly negative drift up there and validated by the truncation
/// insensitivity of the root value).
pub fn solve_grid(params: &PolicyParams, spec: &LatticeSpec) -> Result<GridSolution> {
    params.validate()?;
    let x_max = spec
        .x_max
        .ok_or_else(|| Error::Spec("solve_grid requires a grid-mode spec with x_max".into()))?;
    if x_max < required_x_max(params) - 1e-12 {
        return Err(Error::Spec(format!(
            "x_max = {x_max} is below the required minimum {}",
            required_x_max(params)
        )));
    }
    let n = spec.n_steps;
    let k_max = spec.k_max();
    if k_max < 3 {
        return Err(Error::Spec("grid too coarse: fewer than 4 space levels".into()));
    }
    let (dt, dx) = (spec.dt, spec.dx);

    let levels: Vec<f64> = (0..=k_max).map(|k| k as f64 * dx).collect();
    let gain: Vec<f64> = levels.iter().map(|&x| model::h_raw(x, params)).collect();
    let p_up: Vec<f64> = levels
        .iter()
        .map(|&x| up_probability(x, params, dt))
        .collect();
    let fee: Vec<f64> = levels
        .iter()
        .map(|&x| model::running_cost(x, params) * dt)
        .collect();

    let mut values = vec![vec![0.0; k_max + 1]; n + 1];
    let mut european = vec![vec![0.0; k_max + 1]; n + 1];
    let mut stopped = vec![vec![false; k_max + 1]; n + 1];

    values[n].copy_from_slice(&gain);
    european[n].copy_from_slice(&gain);
    stopped[n].iter_mut().for_each(|s| *s = true);

    for layer in (0..n).rev() {
        let (head, tail) = values.split_at_mut(layer + 1);
        let (cur, next) = (&mut head[layer], &tail[0]);
        let (ehead, etail) = european.split_at_mut(layer + 1);
        let (ecur, enext) = (&mut ehead[layer], &etail[0]);
        let stop_row = &mut stopped[layer];

        cur[0] = 1.0;
        ecur[0] = 1.0;
        stop_row[0] = true;
        for k in 1..=k_max {
            let up = if k == k_max { k_max } else { k + 1 };
            let p = p_up[k];
            let cont = p * next[up] + (1.0 - p) * next[k - 1] - fee[k];
            let cont_eu = p * enext[up] + (1.0 - p) * enext[k - 1] - fee[k];
            cur[k] = gain[k].max(cont);
            ecur[k] = cont_eu;
            stop_row[k] = cont - gain[k] <= TIE_EPS;
        }
    }

    Ok(GridSolution {
        spec: *spec,
        params: *params,
        levels,
        values,
        european,
        stopped,
    })
}

impl GridSolution {
    /// Index of the level nearest to `x`.
    pub fn level_nearest(&self, x: f64) -> usize {
        ((x / self.spec.dx).round() as usize).min(self.levels.len() - 1)
    }

    /// Bilinear interpolation of the American value at `(t, x)`; exact at
    /// nodes.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        let horizon = self.params.maturity_t;
        let x_max = *self.levels.last().expect("grid has levels");
        if t < 0.0 || t > horizon + 1e-12 || !t.is_finite() {
            return Err(Error::Domain(format!(
                "value_at: t = {t} outside [0, {horizon}]"
            )));
        }
        if x < 0.0 || x > x_max + 1e-12 || !x.is_finite() {
            return Err(Error::Domain(format!(
                "value_at: x = {x} outside [0, {x_max}]"
            )));
        }
        let nf = (t / self.spec.dt).min(self.spec.n_steps as f64);
        let kf = (x / self.spec.dx).min((self.levels.len() - 1) as f64);
        let (n0, k0) = (nf.floor() as usize, kf.floor() as usize);
        let n1 = (n0 + 1).min(self.spec.n_steps);
        let k1 = (k0 + 1).min(self.levels.len() - 1);
        let (wt, wx) = (nf - n0 as f64, kf - k0 as f64);
        Ok((1.0 - wt) * ((1.0 - wx) * self.values[n0][k0] + wx * self.values[n0][k1])
            + wt * ((1.0 - wx) * self.values[n1][k0] + wx * self.values[n1][k1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn base() -> PolicyParams {
        PolicyParams::default()
    }

    #[test]
    fn up_probability_examples() {
        let p = base();
        // drift vanishes where delta*(x - beta) - r_g = r - r_g + sigma^2/2
        let x_zero_drift = p.beta + (p.risk_free_r + 0.5 * p.sigma * p.sigma) / p.delta;
        assert_abs_diff_eq!(up_probability(x_zero_drift, &p, 0.25), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            up_probability(2.3, &p, 0.01),
            0.5 + 0.1 * 0.0212 / 0.36,
            epsilon = 1e-12
        );
        assert_eq!(up_probability(10.0, &p, 1.0), 0.0);
    }

    #[test]
    fn cone_rejects_zero_steps() {
        assert!(price_cone(&base(), 0).is_err());
    }

    #[test]
    fn cone_collapses_to_intrinsic_value_for_vanishing_maturity() {
        let mut p = base();
        p.maturity_t = 1e-9;
        let res = price_cone(&p, 1).unwrap();
        assert_abs_diff_eq!(res.v0, p.alpha, epsilon = 1e-5);
        assert_abs_diff_eq!(res.price_v0, p.a0 * p.alpha, epsilon = 1e-2);
        assert!(res.premium >= 0.0);
    }

    #[test]
    fn one_step_tree_matches_hand_recursion() {
        let mut p = base();
        p.maturity_t = 0.01;
        let res = price_cone(&p, 1).unwrap();

        // independent single-step evaluation
        let dt: f64 = 0.01;
        let dx = p.sigma * dt.sqrt();
        let xa = (1.0 / p.alpha).ln();
        let h = |x: f64| (-x).exp() + p.gamma * (p.alpha - (-x).exp()).max(0.0);
        let pi = p.risk_free_r - p.guaranteed_rg + 0.5 * p.sigma * p.sigma;
        let p_up = 0.5 + dt.sqrt() * pi / (2.0 * p.sigma);
        let cont = p_up * h(xa + dx) + (1.0 - p_up) * h(xa - dx);
        assert_abs_diff_eq!(res.v0, h(xa).max(cont), epsilon = 1e-15);
        assert_abs_diff_eq!(res.v0_european, cont, epsilon = 1e-15);
    }

    #[test]
    fn cone_value_is_bounded_and_premium_nonnegative() {
        let p = base();
        let res = price_cone(&p, 500).unwrap();
        let h0 = model::payoff_h(p.x_alpha(), &p).unwrap();
        assert!(res.v0 >= h0 && res.v0 <= 1.0);
        assert!(res.v0_european >= 0.0 && res.v0_european <= res.v0);
        assert!(res.premium >= 0.0);
    }

    #[test]
    fn cone_value_monotone_in_fees_gamma_and_guarantee() {
        let p = base();
        let v = price_cone(&p, 400).unwrap().v0;

        let mut fees = p;
        fees.fee_p = 0.001;
        assert!(price_cone(&fees, 400).unwrap().v0 <= v + 1e-14);
        let mut fees = p;
        fees.fee_q = 0.002;
        assert!(price_cone(&fees, 400).unwrap().v0 <= v + 1e-14);

        let mut up_gamma = p;
        up_gamma.gamma = 0.5;
        assert!(price_cone(&up_gamma, 400).unwrap().v0 >= v - 1e-14);

        let mut up_rg = p;
        up_rg.guaranteed_rg = 0.012;
        assert!(price_cone(&up_rg, 400).unwrap().v0 >= v - 1e-14);
    }

    #[test]
    fn grid_spec_validation() {
        let p = base();
        assert!(LatticeSpec::grid(&p, 200, 1.0).is_err());
        let spec = LatticeSpec::grid_auto(&p, 200).unwrap();
        let xm = spec.x_max.unwrap();
        assert!(xm >= required_x_max(&p));
        assert_relative_eq!(xm / spec.dx, spec.k_max() as f64, epsilon = 1e-9);
        // a cone spec cannot drive the grid solver
        let cone = LatticeSpec::cone(&p, 200).unwrap();
        assert!(solve_grid(&p, &cone).is_err());
    }

    #[test]
    fn grid_terminal_and_absorbed_rows() {
        let p = base();
        let spec = LatticeSpec::grid_auto(&p, 160).unwrap();
        let sol = solve_grid(&p, &spec).unwrap();
        let n = spec.n_steps;
        for (k, &x) in sol.levels.iter().enumerate() {
            assert_abs_diff_eq!(sol.values[n][k], model::h_raw(x, &p), epsilon = 1e-15);
        }
        for layer in 0..=n {
            assert_eq!(sol.values[layer][0], 1.0);
            assert!(sol.stopped[layer][0]);
        }
    }

    #[test]
    fn grid_is_monotone_in_time_and_space_and_dominates_gain() {
        let p = base();
        let spec = LatticeSpec::grid_auto(&p, 300).unwrap();
        let sol = solve_grid(&p, &spec).unwrap();
        let kappa = (p.delta * p.maturity_t).exp();
        for n in 0..=spec.n_steps {
            for k in 0..sol.levels.len() {
                let v = sol.values[n][k];
                assert!(v <= 1.0 + 1e-12);
                assert!(v >= model::h_raw(sol.levels[k], &p) - 1e-12);
                assert!(sol.european[n][k] <= v + 1e-12);
                if n < spec.n_steps {
                    assert!(
                        v >= sol.values[n + 1][k] - 1e-12,
                        "time monotonicity at ({n},{k})"
                    );
                }
                if k + 1 < sol.levels.len() {
                    assert!(
                        v >= sol.values[n][k + 1] - 1e-10,
                        "space monotonicity at ({n},{k})"
                    );
                    assert!(
                        (v - sol.values[n][k + 1]).abs() <= kappa * spec.dx + 1e-12,
                        "Lipschitz cell bound at ({n},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn node_nearest_x_alpha_is_never_stopped_early() {
        let p = base();
        let spec = LatticeSpec::grid_auto(&p, 500).unwrap();
        let sol = solve_grid(&p, &spec).unwrap();
        let k = sol.level_nearest(p.x_alpha());
        for n in 0..spec.n_steps {
            assert!(!sol.stopped[n][k], "layer {n} stopped at the x_alpha strip");
        }
    }

    #[test]
    fn truncation_is_insensitive() {
        let p = base();
        let spec = LatticeSpec::grid_auto(&p, 300).unwrap();
        let wide = LatticeSpec::grid(&p, 300, 2.0 * spec.x_max.unwrap()).unwrap();
        let sol = solve_grid(&p, &spec).unwrap();
        let sol_wide = solve_grid(&p, &wide).unwrap();
        let k = sol.level_nearest(p.x_alpha());
        assert!((sol.values[0][k] - sol_wide.values[0][k]).abs() < 1e-4);
    }

    #[test]
    fn value_at_interpolation() {
        let p = base();
        let spec = LatticeSpec::grid_auto(&p, 120).unwrap();
        let sol = solve_grid(&p, &spec).unwrap();
        // node exactness
        let (n, k) = (40, 17);
        assert_abs_diff_eq!(
            sol.value_at(n as f64 * spec.dt, k as f64 * spec.dx).unwrap(),
            sol.values[n][k],
            epsilon = 1e-12
        );
        // terminal layer reproduces the gain up to one cell of Lipschitz error
        let x = 2.789;
        let v = sol.value_at(p.maturity_t, x).unwrap();
        assert!((v - model::h_raw(x, &p)).abs() <= spec.dx);
        // absorbed column
        assert_eq!(sol.value_at(3.21, 0.0).unwrap(), 1.0);
        assert!(sol.value_at(-0.1, 1.0).is_err());
        assert!(sol.value_at(0.1, -1.0).is_err());
        assert!(sol.value_at(0.1, 1e9).is_err());
        assert!(sol.value_at(p.maturity_t * 1.5, 1.0).is_err());
    }
}
