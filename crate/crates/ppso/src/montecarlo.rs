//! Reproducible Monte Carlo cross-checks of the lattice.
//!
//! Paths are driven by a counter-based generator keyed by
//! `(seed, path index, step index, stream)`, so every path is identical no
//! matter how the work is partitioned across threads, and accumulation uses
//! pairwise summation in path order. Estimates are therefore bit-exact for
//! a fixed `(seed, n_paths, steps_per_year)` regardless of parallelism.
//!
//! Three simulations are provided:
//! - the reduced BDR diffusion under the portfolio numeraire
//!   (Euler-Maruyama with optional Brownian-bridge absorption at zero),
//!   used for European pricing and strategy evaluation;
//! - the full `(A, R)` pair under the risk-neutral measure (exact GBM
//!   increments for `A`, exponential integrator for `R`), whose
//!   `a0`-normalized European value must agree with the reduced one (the
//!   dimension-reduction identity);
//! - a coupled two-start free flow feeding the pathwise Lipschitz and
//!   lower-bound inequality checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryCurves, Regime};
use crate::model::{self, PolicyParams};
use crate::{Error, Result};

/// Simulation size, resolution and reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub n_paths: u64,
    pub steps_per_year: u32,
    pub seed: u64,
    /// Absorb between grid times with the Brownian-bridge crossing
    /// probability; plain Euler absorption biases the insolvency time late.
    pub bridge_correction: bool,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            n_paths: 100_000,
            steps_per_year: 250,
            seed: 42,
            bridge_correction: true,
        }
    }
}

impl McSpec {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Domain("n_paths must be >= 1".into()));
        }
        if self.steps_per_year == 0 {
            return Err(Error::Domain("steps_per_year must be >= 1".into()));
        }
        Ok(())
    }

    fn steps_for(&self, horizon: f64) -> u64 {
        ((horizon * self.steps_per_year as f64).round() as u64).max(1)
    }
}

/// Under which measure an estimate was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// Reduced one-dimensional dynamics, values in units of `a0`.
    PReduced,
    /// Full two-dimensional dynamics, values in currency.
    QFull,
}

/// A Monte Carlo mean with its sampling error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub measure: Measure,
    pub units: String,
}

/// Pathwise defects of the two flow inequalities, maximized over paths and
/// steps; both should be non-positive up to the Euler drift-difference
/// error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub n_paths: u64,
    /// max of `|X^x - X^y| - |x - y| e^{delta t}`.
    pub max_lip_violation: f64,
    /// max of `(y - x)(2 - e^{delta t}) - (X^y - X^x)`.
    pub max_lower_violation: f64,
}

/// Terminal state of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRecord {
    /// BDR at the stop (0 when absorbed).
    pub terminal_x: f64,
    /// Stop, absorption or maturity time in years.
    pub stop_time: f64,
    pub absorbed: bool,
    /// Accumulated `(p + q e^{-X}) dt`, left-endpoint quadrature.
    pub fee_integral: f64,
}

mod rng {
    //! Stateless counter-based draws: a splitmix-style avalanche over the
    //! combined `(seed, path, step, stream)` words. No state, no
    //! sequencing: any draw can be computed independently, which is what
    //! makes the partition-independence contract trivial to honor.

    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
    const MIX2: u64 = 0x94D0_49BB_1331_11EB;

    #[inline]
    fn avalanche(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX2);
        z ^ (z >> 31)
    }

    #[inline]
    pub fn draw(seed: u64, path: u64, step: u64, stream: u64) -> u64 {
        let z = seed
            .wrapping_add(path.wrapping_mul(GOLDEN))
            .wrapping_add(step.wrapping_mul(MIX1))
            .wrapping_add(stream.wrapping_mul(MIX2));
        avalanche(avalanche(z))
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform(seed: u64, path: u64, step: u64, stream: u64) -> f64 {
        ((draw(seed, path, step, stream) >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller on streams 0 and 1.
    #[inline]
    pub fn std_normal(seed: u64, path: u64, step: u64) -> f64 {
        let u1 = uniform(seed, path, step, 0);
        let u2 = uniform(seed, path, step, 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Stream index used for the bridge-crossing uniform.
const BRIDGE_STREAM: u64 = 2;

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Evaluates one payoff per path in parallel and reduces in path order.
fn estimate<F>(n_paths: u64, payoff: F) -> (f64, f64)
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let samples: Vec<f64> = (0..n_paths).into_par_iter().map(payoff).collect();
    let mean = pairwise_sum(&samples) / n_paths as f64;
    if n_paths < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = samples.iter().map(|&s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&sq) / (n_paths - 1) as f64;
    (mean, (var / n_paths as f64).sqrt())
}

/// One Euler-Maruyama path of the reduced BDR diffusion, absorbed at zero,
/// with an arbitrary stopping rule evaluated at every grid time (including
/// time zero) before the step is taken.
fn reduced_path<F>(
    params: &PolicyParams,
    x0: f64,
    spec: &McSpec,
    path: u64,
    stop_rule: F,
) -> PathRecord
where
    F: Fn(f64, f64) -> bool,
{
    let horizon = params.maturity_t;
    let n_steps = spec.steps_for(horizon);
    let dt = horizon / n_steps as f64;
    let sq_dt = dt.sqrt();
    let sigma = params.sigma;

    let mut x = x0;
    let mut fees = 0.0;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        if x <= 0.0 {
            return PathRecord {
                terminal_x: 0.0,
                stop_time: t,
                absorbed: true,
                fee_integral: fees,
            };
        }
        if stop_rule(t, x) {
            return PathRecord {
                terminal_x: x,
                stop_time: t,
                absorbed: false,
                fee_integral: fees,
            };
        }
        let z = rng::std_normal(spec.seed, path, step);
        let x_next = x + model::drift_pi(x, params) * dt + sigma * sq_dt * z;
        fees += model::running_cost(x, params) * dt;
        let absorbed = if x_next <= 0.0 {
            true
        } else if spec.bridge_correction {
            let crossing = (-2.0 * x * x_next / (sigma * sigma * dt)).exp();
            rng::uniform(spec.seed, path, step, BRIDGE_STREAM) < crossing
        } else {
            false
        };
        if absorbed {
            return PathRecord {
                terminal_x: 0.0,
                stop_time: (step + 1) as f64 * dt,
                absorbed: true,
                fee_integral: fees,
            };
        }
        x = x_next;
    }
    PathRecord {
        terminal_x: x,
        stop_time: horizon,
        absorbed: false,
        fee_integral: fees,
    }
}

/// Simulates the reduced diffusion from `x0` and returns the terminal
/// record of every path.
pub fn simulate_x(params: &PolicyParams, x0: f64, spec: &McSpec) -> Result<Vec<PathRecord>> {
    params.validate()?;
    spec.validate()?;
    if x0 < 0.0 || !x0.is_finite() {
        return Err(Error::Domain(format!("simulate_x requires x0 >= 0, got {x0}")));
    }
    Ok((0..spec.n_paths)
        .into_par_iter()
        .map(|path| reduced_path(params, x0, spec, path, |_, _| false))
        .collect())
}

fn record_payoff(record: &PathRecord, params: &PolicyParams) -> f64 {
    model::h_raw(record.terminal_x, params) - record.fee_integral
}

/// European value in reduced coordinates: mean of
/// `h(X at absorption or maturity) - fee integral`, paths from `x_alpha`.
pub fn mc_european_reduced(params: &PolicyParams, spec: &McSpec) -> Result<McEstimate> {
    params.validate()?;
    spec.validate()?;
    let x0 = params.x_alpha();
    let (mean, std_error) = estimate(spec.n_paths, |path| {
        record_payoff(&reduced_path(params, x0, spec, path, |_, _| false), params)
    });
    Ok(McEstimate {
        mean,
        std_error,
        n_paths: spec.n_paths,
        seed: spec.seed,
        measure: Measure::PReduced,
        units: "normalized (units of a0)".into(),
    })
}

/// European value in full `(A, R)` coordinates from arbitrary initial
/// values: discounted intrinsic value at insolvency or maturity, minus the
/// discounted fee integral. Currency units.
pub fn mc_european_full_from(
    params: &PolicyParams,
    a_init: f64,
    r_init: f64,
    spec: &McSpec,
) -> Result<McEstimate> {
    params.validate()?;
    spec.validate()?;
    if a_init <= 0.0 || r_init <= 0.0 {
        return Err(Error::Domain(format!(
            "initial portfolio and reserve must be positive, got A = {a_init}, R = {r_init}"
        )));
    }
    let horizon = params.maturity_t;
    let n_steps = spec.steps_for(horizon);
    let dt = horizon / n_steps as f64;
    let sq_dt = dt.sqrt();
    let (r, sigma) = (params.risk_free_r, params.sigma);

    let (mean, std_error) = estimate(spec.n_paths, |path| {
        let mut a = a_init;
        let mut reserve = r_init;
        let mut fees = 0.0;
        for step in 0..n_steps {
            let t = step as f64 * dt;
            let x = (a / reserve).ln();
            if x <= 0.0 {
                return (-r * t).exp() * reserve - fees;
            }
            let z = rng::std_normal(spec.seed, path, step);
            if params.has_fees() {
                fees += (-r * t).exp() * (params.fee_p * a + params.fee_q * reserve) * dt;
            }
            let credit = (params.delta * (x - params.beta)).max(params.guaranteed_rg);
            a *= ((r - 0.5 * sigma * sigma) * dt + sigma * sq_dt * z).exp();
            reserve *= (credit * dt).exp();
            let x_next = (a / reserve).ln();
            let absorbed = if x_next <= 0.0 {
                true
            } else if spec.bridge_correction {
                let crossing = (-2.0 * x * x_next / (sigma * sigma * dt)).exp();
                rng::uniform(spec.seed, path, step, BRIDGE_STREAM) < crossing
            } else {
                false
            };
            if absorbed {
                let t_next = (step + 1) as f64 * dt;
                return (-r * t_next).exp() * reserve - fees;
            }
        }
        let g = reserve + params.gamma * (params.alpha * a - reserve).max(0.0);
        (-r * horizon).exp() * g - fees
    });
    Ok(McEstimate {
        mean,
        std_error,
        n_paths: spec.n_paths,
        seed: spec.seed,
        measure: Measure::QFull,
        units: "currency".into(),
    })
}

/// European value in full coordinates from the contract's initial state
/// `(a0, alpha * a0)`. Its `a0`-normalized mean must agree with
/// [`mc_european_reduced`]; this is the measure-change validation.
pub fn mc_european_full(params: &PolicyParams, spec: &McSpec) -> Result<McEstimate> {
    mc_european_full_from(params, params.a0, params.alpha * params.a0, spec)
}

/// Evaluates the surrender strategy induced by extracted boundary curves:
/// stop at the first grid time with `x <= b1(t)` or, when the island
/// boundaries exist, `b2(t) <= x <= b3(t)`. Normalized units.
pub fn mc_strategy_value(
    params: &PolicyParams,
    curves: &BoundaryCurves,
    spec: &McSpec,
) -> Result<McEstimate> {
    params.validate()?;
    spec.validate()?;
    if curves.regime == Regime::B && curves.b2.is_empty() {
        log::warn!(
            "strategy evaluation in regime B without island boundaries; \
             falling back to the stop-loss rule alone"
        );
    }
    let x0 = params.x_alpha();
    let (mean, std_error) = estimate(spec.n_paths, |path| {
        let record = reduced_path(params, x0, spec, path, |t, x| {
            x <= curves.b1_at(t)
                || curves
                    .island_at(t)
                    .is_some_and(|(lo, hi)| x >= lo && x <= hi)
        });
        record_payoff(&record, params)
    });
    Ok(McEstimate {
        mean,
        std_error,
        n_paths: spec.n_paths,
        seed: spec.seed,
        measure: Measure::PReduced,
        units: "normalized (units of a0)".into(),
    })
}

/// Drives two reduced paths from `x <= y` with identical Gaussian
/// increments (free flow, no absorption) and records the worst defect of
/// the two pathwise inequalities at every grid time.
pub fn coupled_flow_check(
    params: &PolicyParams,
    x: f64,
    y: f64,
    spec: &McSpec,
) -> Result<FlowReport> {
    params.validate()?;
    spec.validate()?;
    if !(0.0 <= x && x <= y) {
        return Err(Error::Domain(format!(
            "coupled_flow_check requires 0 <= x <= y, got x = {x}, y = {y}"
        )));
    }
    let horizon = params.maturity_t;
    let n_steps = spec.steps_for(horizon);
    let dt = horizon / n_steps as f64;
    let sq_dt = dt.sqrt();
    let gap0 = y - x;
    let delta = params.delta;

    let defects: Vec<(f64, f64)> = (0..spec.n_paths)
        .into_par_iter()
        .map(|path| {
            let (mut lo, mut hi) = (x, y);
            let (mut worst_lip, mut worst_lower) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for step in 0..n_steps {
                let z = rng::std_normal(spec.seed, path, step) * params.sigma * sq_dt;
                lo += model::drift_pi(lo, params) * dt + z;
                hi += model::drift_pi(hi, params) * dt + z;
                let s = (step + 1) as f64 * dt;
                let growth = (delta * s).exp();
                worst_lip = worst_lip.max((hi - lo).abs() - gap0 * growth);
                worst_lower = worst_lower.max(gap0 * (2.0 - growth) - (hi - lo));
            }
            (worst_lip, worst_lower)
        })
        .collect();

    let (mut max_lip, mut max_lower) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(a, b) in &defects {
        max_lip = max_lip.max(a);
        max_lower = max_lower.max(b);
    }
    Ok(FlowReport {
        n_paths: spec.n_paths,
        max_lip_violation: max_lip,
        max_lower_violation: max_lower,
    })
}

/// Discretisation slack for the flow inequalities: the Euler
/// drift-difference error bound `C * dt` with
/// `C = delta^2 * (y - x) * e^{delta T}`.
pub fn flow_slack(params: &PolicyParams, x: f64, y: f64, spec: &McSpec) -> f64 {
    let dt = params.maturity_t / spec.steps_for(params.maturity_t) as f64;
    params.delta * params.delta * (y - x) * (params.delta * params.maturity_t).exp() * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extract;
    use crate::engine::{price_cone, solve_grid, LatticeSpec};
    use approx::assert_abs_diff_eq;

    fn base() -> PolicyParams {
        PolicyParams::default()
    }

    fn quick_spec() -> McSpec {
        McSpec {
            n_paths: 20_000,
            steps_per_year: 50,
            seed: 42,
            bridge_correction: true,
        }
    }

    #[test]
    fn estimates_are_bit_identical_across_thread_counts() {
        let p = base();
        let spec = McSpec {
            n_paths: 4_000,
            steps_per_year: 20,
            seed: 7,
            bridge_correction: true,
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mc_european_reduced(&p, &spec).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| mc_european_reduced(&p, &spec).unwrap());
        assert_eq!(single.mean.to_bits(), multi.mean.to_bits());
        assert_eq!(single.std_error.to_bits(), multi.std_error.to_bits());
    }

    #[test]
    fn zero_start_is_absorbed_immediately() {
        let p = base();
        let spec = McSpec {
            n_paths: 100,
            ..quick_spec()
        };
        let records = simulate_x(&p, 0.0, &spec).unwrap();
        for r in &records {
            assert!(r.absorbed);
            assert_eq!(r.stop_time, 0.0);
            assert_eq!(r.fee_integral, 0.0);
            assert_eq!(record_payoff(r, &p), 1.0);
        }
        assert!(simulate_x(&p, -0.5, &spec).is_err());
    }

    #[test]
    fn vanishing_maturity_returns_intrinsic_value() {
        let mut p = base();
        p.maturity_t = 1e-12;
        let est = mc_european_reduced(&p, &quick_spec()).unwrap();
        assert_abs_diff_eq!(est.mean, 0.1, epsilon = 1e-5);
        assert!(est.std_error < 1e-6);
    }

    #[test]
    fn fees_only_subtract_pathwise() {
        let p = base();
        let spec = quick_spec();
        let without = mc_european_reduced(&p, &spec).unwrap();
        let mut fee = p;
        fee.fee_p = 0.001;
        let with = mc_european_reduced(&fee, &spec).unwrap();
        // identical draws, fees only subtract, absorption unchanged
        assert!(with.mean <= without.mean);
        assert!(without.mean - with.mean <= fee.fee_p * p.maturity_t + 1e-12);
    }

    #[test]
    fn payoffs_stay_in_the_admissible_range() {
        let mut p = base();
        p.fee_p = 0.002;
        p.fee_q = 0.001;
        let spec = McSpec {
            n_paths: 5_000,
            ..quick_spec()
        };
        let lo = p.alpha * p.gamma - (p.fee_p + p.fee_q) * p.maturity_t;
        let records = simulate_x(&p, p.x_alpha(), &spec).unwrap();
        for r in &records {
            let pay = record_payoff(r, &p);
            assert!(pay >= lo - 1e-12 && pay <= 1.0 + 1e-12, "payoff {pay}");
        }
    }

    #[test]
    fn reduced_estimate_agrees_with_the_tree() {
        let p = base();
        let spec = quick_spec();
        let est = mc_european_reduced(&p, &spec).unwrap();
        let tree = price_cone(&p, 1000).unwrap();
        let gap = (est.mean - tree.v0_european).abs();
        assert!(
            gap <= 4.0 * est.std_error + 2e-3,
            "gap {gap} vs se {}",
            est.std_error
        );
    }

    #[test]
    fn full_simulation_from_equal_state_pays_the_reserve() {
        let p = base();
        let est = mc_european_full_from(&p, 500.0, 500.0, &quick_spec()).unwrap();
        assert_eq!(est.mean, 500.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn measure_change_identity_holds() {
        let p = base();
        let spec = quick_spec();
        let reduced = mc_european_reduced(&p, &spec).unwrap();
        let full = mc_european_full(&p, &spec).unwrap();
        let combined =
            ((full.std_error / p.a0).powi(2) + reduced.std_error.powi(2)).sqrt();
        let gap = (full.mean / p.a0 - reduced.mean).abs();
        assert!(
            gap <= 4.0 * combined + 2e-3,
            "gap {gap}, combined se {combined}"
        );
    }

    #[test]
    fn never_stopping_strategy_reproduces_the_european_value() {
        let p = base();
        let spec = quick_spec();
        let sol = solve_grid(&p, &LatticeSpec::grid_auto(&p, 200).unwrap()).unwrap();
        let mut curves = extract(&sol).unwrap();
        curves.b1 = vec![(0.0, 0.0), (p.maturity_t, 0.0)];
        curves.b2.clear();
        curves.b3.clear();
        let strategy = mc_strategy_value(&p, &curves, &spec).unwrap();
        let european = mc_european_reduced(&p, &spec).unwrap();
        assert_eq!(strategy.mean.to_bits(), european.mean.to_bits());
    }

    #[test]
    fn always_stopping_strategy_pays_the_gain_at_the_root() {
        let p = base();
        let sol = solve_grid(&p, &LatticeSpec::grid_auto(&p, 200).unwrap()).unwrap();
        let mut curves = extract(&sol).unwrap();
        curves.b1 = vec![(0.0, 20.0), (p.maturity_t, 20.0)];
        curves.b2.clear();
        curves.b3.clear();
        let est = mc_strategy_value(&p, &curves, &quick_spec()).unwrap();
        // the gain at exactly ln(1/alpha) reproduces alpha to one ulp;
        // identical payoffs leave only summation noise in the error bar
        assert_abs_diff_eq!(est.mean, 0.1, epsilon = 1e-15);
        assert!(est.std_error <= 1e-15);
    }

    #[test]
    fn strategy_value_sits_between_european_and_american() {
        let p = base();
        let spec = quick_spec();
        let n = 500;
        let sol = solve_grid(&p, &LatticeSpec::grid_auto(&p, n).unwrap()).unwrap();
        let curves = extract(&sol).unwrap();
        let est = mc_strategy_value(&p, &curves, &spec).unwrap();
        let tree = price_cone(&p, n).unwrap();
        let slack = (p.delta * p.maturity_t).exp() * sol.spec.dx;
        assert!(
            est.mean >= tree.v0_european - 3.0 * est.std_error - 2e-3,
            "strategy {} below European {}",
            est.mean,
            tree.v0_european
        );
        assert!(
            est.mean <= tree.v0 + slack + 3.0 * est.std_error + 2e-3,
            "strategy {} above American {} + slack {}",
            est.mean,
            tree.v0,
            slack
        );
    }

    #[test]
    fn missing_island_falls_back_to_the_stop_loss_rule() {
        let p = base();
        let spec = quick_spec();
        let n = 300;
        let sol = solve_grid(&p, &LatticeSpec::grid_auto(&p, n).unwrap()).unwrap();
        let mut curves = extract(&sol).unwrap();
        curves.b2.clear();
        curves.b3.clear();
        let est = mc_strategy_value(&p, &curves, &spec).unwrap();
        let tree = price_cone(&p, n).unwrap();
        // still a valid (suboptimal) strategy: within the sandwich
        let slack = (p.delta * p.maturity_t).exp() * sol.spec.dx;
        assert!(est.mean >= tree.v0_european - 3.0 * est.std_error - 2e-3);
        assert!(est.mean <= tree.v0 + slack + 3.0 * est.std_error + 2e-3);
    }

    #[test]
    fn coupled_flow_defects_are_nonpositive() {
        let p = base();
        let spec = McSpec {
            n_paths: 2_000,
            steps_per_year: 100,
            seed: 42,
            bridge_correction: true,
        };
        let report = coupled_flow_check(&p, 2.0, 2.5, &spec).unwrap();
        let slack = flow_slack(&p, 2.0, 2.5, &spec);
        assert!(report.max_lip_violation <= slack);
        assert!(report.max_lower_violation <= slack);

        let same = coupled_flow_check(&p, 2.0, 2.0, &spec).unwrap();
        assert!(same.max_lip_violation <= 0.0);
        assert!(same.max_lower_violation <= 0.0);

        assert!(coupled_flow_check(&p, 2.5, 2.0, &spec).is_err());
    }

    #[test]
    fn estimate_serializes_with_provenance() {
        let est = McEstimate {
            mean: 0.1,
            std_error: 0.001,
            n_paths: 10,
            seed: 99,
            measure: Measure::PReduced,
            units: "normalized (units of a0)".into(),
        };
        let json = serde_json::to_string(&est).unwrap();
        for field in ["mean", "std_error", "n_paths", "seed", "measure", "units"] {
            assert!(json.contains(field), "missing {field} in {json}");
        }
    }
}
