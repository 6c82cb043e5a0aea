//! Monte Carlo evaluation of a band policy under the worst-case prior.
//!
//! Projected Euler: each step moves the state with the drift of the active
//! generator, then clamps it to `[x_L, x_U]`; the clamped amounts are the
//! control increments. Costs are discounted at the left end of each step.
//! Path `i` draws from its own ChaCha stream `(seed, i)`, so estimates do
//! not depend on how paths are spread over threads.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{holding_cost, Diffusion, ModelParams};
use crate::solver::BandSolution;

/// Drift used to move the simulated state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `alpha - kappa sigma` below the switch point, `alpha + kappa sigma`
    /// at or above it.
    #[default]
    WorstCase,
    /// Fixed drift shift `shift * sigma` with `|shift| <= kappa`.
    Constant { shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: u64,
    pub dt: f64,
    /// Truncation time `T`.
    pub horizon: f64,
    pub seed: u64,
    pub x0: f64,
    #[serde(default)]
    pub generator: Generator,
    /// Each Brownian increment is the sum of this many normals. Runs whose
    /// `dt / noise_refinement` agree share their noise (common random
    /// numbers across step sizes).
    #[serde(default = "one")]
    pub noise_refinement: u32,
}

fn one() -> u32 {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            horizon: 100.0,
            seed: 0,
            x0: 0.0,
            generator: Generator::WorstCase,
            noise_refinement: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt < 1.0 / params.rho) {
            return bad(format!("dt must lie in (0, 1/rho), got {}", self.dt));
        }
        if !(self.horizon >= 10.0 / params.rho) || !self.horizon.is_finite() {
            return bad(format!(
                "horizon must be at least 10/rho = {}, got {}",
                10.0 / params.rho,
                self.horizon
            ));
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite".into());
        }
        if self.noise_refinement == 0 {
            return bad("noise_refinement must be at least 1".into());
        }
        if let Generator::Constant { shift } = self.generator {
            if !(shift.abs() <= params.kappa) {
                return bad(format!(
                    "constant generator shift {shift} exceeds kappa = {}",
                    params.kappa
                ));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }
}

/// Barriers and switch point of a band policy. Infinite barriers give the
/// uncontrolled process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPolicy {
    pub x_lower: f64,
    pub x_star: f64,
    pub x_upper: f64,
}

impl BandPolicy {
    /// No control; the worst-case switch (if any) stays at `x_star`.
    pub fn uncontrolled(x_star: f64) -> Self {
        Self {
            x_lower: f64::NEG_INFINITY,
            x_star,
            x_upper: f64::INFINITY,
        }
    }

    pub fn of(solution: &BandSolution) -> Self {
        Self {
            x_lower: solution.x_lower,
            x_star: solution.x_star,
            x_upper: solution.x_upper,
        }
    }

    fn is_bounded(&self) -> bool {
        self.x_lower.is_finite() && self.x_upper.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean_cost: f64,
    pub std_error: f64,
    /// Undiscounted cumulative lower control, averaged over paths.
    pub mean_l_total: f64,
    /// Undiscounted cumulative upper control, averaged over paths.
    pub mean_u_total: f64,
    /// Bound on the discounted cost dropped by stopping at the horizon.
    pub truncation_bound: f64,
    pub paths_used: u64,
}

impl SimEstimate {
    /// `(mean_cost - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean_cost - reference) / self.std_error
    }
}

/// One simulated path, sampled at every step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub d_l: Vec<f64>,
    pub d_u: Vec<f64>,
}

impl PathRecord {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,dL,dU")?;
        for i in 0..self.t.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.t[i], self.x[i], self.d_l[i], self.d_u[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathTotals {
    cost: f64,
    l_total: f64,
    u_total: f64,
}

struct Engine {
    params: ModelParams,
    policy: BandPolicy,
    config: SimConfig,
}

impl Engine {
    fn new(params: &ModelParams, policy: BandPolicy, config: &SimConfig) -> Result<Self> {
        config.validate(params)?;
        if !(params.sigma >= 0.0 && params.rho > 0.0) {
            return Err(Error::InvalidConfig(
                "simulation needs sigma >= 0 and rho > 0".into(),
            ));
        }
        if !(policy.x_lower < policy.x_upper) {
            return Err(Error::InvalidConfig(format!(
                "empty band [{}, {}]",
                policy.x_lower, policy.x_upper
            )));
        }
        Ok(Self {
            params: *params,
            policy,
            config: *config,
        })
    }

    fn drift(&self, x: f64) -> f64 {
        let p = &self.params;
        let shift = match self.config.generator {
            Generator::WorstCase => {
                if x < self.policy.x_star {
                    -p.kappa
                } else {
                    p.kappa
                }
            }
            Generator::Constant { shift } => shift,
        };
        match p.diffusion {
            Diffusion::Abm { alpha } => alpha + shift * p.sigma,
            Diffusion::Ou { eta } => -eta * x + shift * p.sigma,
        }
    }

    /// Runs one path, reporting every step to `visit(t, x, dL, dU)`.
    fn run<V: FnMut(f64, f64, f64, f64)>(&self, path: u64, mut visit: V) -> Result<PathTotals> {
        let p = &self.params;
        let c = &self.config;
        let (lo, hi) = (self.policy.x_lower, self.policy.x_upper);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(path);

        let mut totals = PathTotals::default();
        let mut x = c.x0;
        let (mut lump_l, mut lump_u) = (0.0, 0.0);
        if x < lo {
            lump_l = lo - x;
            x = lo;
        } else if x > hi {
            lump_u = x - hi;
            x = hi;
        }
        totals.cost += p.l_cost * lump_l + p.u_cost * lump_u;
        totals.l_total += lump_l;
        totals.u_total += lump_u;
        visit(0.0, x, lump_l, lump_u);

        let dt = c.dt;
        let k = c.noise_refinement;
        let noise_scale = p.sigma * (dt / k as f64).sqrt();
        let step_discount = (-p.rho * dt).exp();
        let mut discount = 1.0;
        for step in 0..c.steps() {
            let mut z = 0.0;
            for _ in 0..k {
                let n: f64 = StandardNormal.sample(&mut rng);
                z += n;
            }
            let moved = x + self.drift(x) * dt + noise_scale * z;
            let d_l = (lo - moved).max(0.0);
            let d_u = (moved - hi).max(0.0);
            totals.cost += discount * (holding_cost(x, p) * dt + p.l_cost * d_l + p.u_cost * d_u);
            x = moved.clamp(lo, hi);
            if !x.is_finite() {
                return Err(Error::NonFinitePath { path, step });
            }
            totals.l_total += d_l;
            totals.u_total += d_u;
            discount *= step_discount;
            visit((step + 1) as f64 * dt, x, d_l, d_u);
        }
        Ok(totals)
    }

    fn estimate(&self, value_bound: f64) -> Result<SimEstimate> {
        let totals: Vec<PathTotals> = (0..self.config.n_paths)
            .into_par_iter()
            .map(|i| self.run(i, |_, _, _, _| {}))
            .collect::<Result<_>>()?;
        let n = totals.len() as f64;
        let mean = totals.iter().map(|t| t.cost).sum::<f64>() / n;
        let var = if totals.len() > 1 {
            totals.iter().map(|t| (t.cost - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(SimEstimate {
            mean_cost: mean,
            std_error: (var / n).sqrt(),
            mean_l_total: totals.iter().map(|t| t.l_total).sum::<f64>() / n,
            mean_u_total: totals.iter().map(|t| t.u_total).sum::<f64>() / n,
            truncation_bound: (-self.params.rho * self.config.horizon).exp() * value_bound,
            paths_used: totals.len() as u64,
        })
    }

    /// Crude bound on the expected cost-to-go at the horizon when the
    /// state is not confined to a band.
    fn unbounded_value_bound(&self) -> f64 {
        let p = &self.params;
        let c_max = p.c_neg.max(p.c_pos);
        let drift = p.alpha().unwrap_or(0.0).abs() + p.kappa * p.sigma;
        let reach = match p.diffusion {
            Diffusion::Abm { .. } => {
                self.config.x0.abs()
                    + drift * self.config.horizon
                    + p.sigma * self.config.horizon.sqrt()
            }
            Diffusion::Ou { eta } => {
                self.config.x0.abs() + drift / eta + p.sigma / (2.0 * eta).sqrt()
            }
        };
        c_max * (reach / p.rho + drift / (p.rho * p.rho) + p.sigma / (2.0 * p.rho.powi(3)).sqrt())
    }
}

/// Estimates the worst-case discounted cost of the band in `solution`
/// starting from `config.x0`.
pub fn simulate_cost(solution: &BandSolution, config: &SimConfig) -> Result<SimEstimate> {
    let policy = BandPolicy::of(solution);
    if !(config.x0 >= policy.x_lower - 10.0 && config.x0 <= policy.x_upper + 10.0) {
        return Err(Error::InvalidConfig(format!(
            "x0 = {} is more than 10 outside the band [{}, {}]",
            config.x0, policy.x_lower, policy.x_upper
        )));
    }
    let engine = Engine::new(solution.params(), policy, config)?;
    engine.estimate(solution.max_in_band())
}

/// Estimates the discounted cost of an arbitrary band policy, including the
/// uncontrolled process (infinite barriers).
pub fn simulate_policy(
    params: &ModelParams,
    policy: BandPolicy,
    config: &SimConfig,
) -> Result<SimEstimate> {
    let engine = Engine::new(params, policy, config)?;
    let bound = if policy.is_bounded() {
        let c_max = params.c_neg.max(params.c_pos);
        let reach = policy.x_lower.abs().max(policy.x_upper.abs());
        let control = params.l_cost.max(params.u_cost);
        // holding at the far barrier forever plus one crossing of the band
        c_max * reach / params.rho
            + control * (policy.x_upper - policy.x_lower)
            + engine.unbounded_value_bound()
    } else {
        engine.unbounded_value_bound()
    };
    engine.estimate(bound)
}

/// The `path_index`-th path of [`simulate_cost`], step by step.
pub fn simulate_path(
    solution: &BandSolution,
    config: &SimConfig,
    path_index: u64,
) -> Result<PathRecord> {
    simulate_policy_path(
        solution.params(),
        BandPolicy::of(solution),
        config,
        path_index,
    )
}

/// The `path_index`-th path of [`simulate_policy`].
pub fn simulate_policy_path(
    params: &ModelParams,
    policy: BandPolicy,
    config: &SimConfig,
    path_index: u64,
) -> Result<PathRecord> {
    let engine = Engine::new(params, policy, config)?;
    let n = config.steps() + 1;
    let mut rec = PathRecord {
        t: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        d_l: Vec::with_capacity(n),
        d_u: Vec::with_capacity(n),
    };
    engine.run(path_index, |t, x, dl, du| {
        rec.t.push(t);
        rec.x.push(x);
        rec.d_l.push(dl);
        rec.d_u.push(du);
    })?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_band, SolverConfig};

    fn quick(x0: f64) -> SimConfig {
        SimConfig {
            n_paths: 200,
            dt: 1e-2,
            horizon: 100.0,
            seed: 7,
            x0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let p = ModelParams::base_case();
        assert!(quick(0.0).validate(&p).is_ok());
        assert!(SimConfig {
            dt: 20.0,
            ..quick(0.0)
        }
        .validate(&p)
        .is_err());
        assert!(SimConfig {
            horizon: 50.0,
            ..quick(0.0)
        }
        .validate(&p)
        .is_err());
        let g = Generator::Constant { shift: 0.7 };
        assert!(SimConfig {
            generator: g,
            ..quick(0.0)
        }
        .validate(&p)
        .is_err());
    }

    #[test]
    fn paths_stay_in_band() {
        let s = solve_band(&ModelParams::base_case(), &SolverConfig::default()).unwrap();
        for i in 0..5 {
            let rec = simulate_path(&s, &quick(0.0), i).unwrap();
            assert!(rec.x.iter().all(|&x| x >= s.x_lower && x <= s.x_upper));
            assert!(rec.d_l.iter().chain(&rec.d_u).all(|&d| d >= 0.0));
            // control only at the barriers
            for k in 0..rec.x.len() {
                if rec.d_l[k] > 0.0 {
                    assert_eq!(rec.x[k], s.x_lower);
                }
                if rec.d_u[k] > 0.0 {
                    assert_eq!(rec.x[k], s.x_upper);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_path() {
        let s = solve_band(&ModelParams::base_case(), &SolverConfig::default()).unwrap();
        let a = simulate_path(&s, &quick(1.0), 3).unwrap();
        let b = simulate_path(&s, &quick(1.0), 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&s, &quick(1.0), 4).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn degenerate_dynamics_stay_put() {
        let p = ModelParams {
            sigma: 0.0,
            ..ModelParams::abm(0.0, 1.0, 0.0)
        };
        let policy = BandPolicy {
            x_lower: -1.0,
            x_star: 0.0,
            x_upper: 1.0,
        };
        let rec = simulate_policy_path(&p, policy, &quick(0.0), 0).unwrap();
        assert!(rec.x.iter().all(|&x| x == 0.0));
        assert!(rec.d_l.iter().chain(&rec.d_u).all(|&d| d == 0.0));
    }

    #[test]
    fn lump_above_band() {
        let s = solve_band(&ModelParams::base_case(), &SolverConfig::default()).unwrap();
        let above = simulate_cost(&s, &quick(s.x_upper + 2.0)).unwrap();
        let at = simulate_cost(&s, &quick(s.x_upper)).unwrap();
        // identical noise after the lump
        assert!((above.mean_cost - at.mean_cost - 4.0).abs() < 1e-9);
        assert!((above.mean_u_total - at.mean_u_total - 2.0).abs() < 1e-9);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let s = solve_band(&ModelParams::base_case(), &SolverConfig::default()).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_cost(&s, &quick(0.0)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn x0_far_outside_rejected() {
        let s = solve_band(&ModelParams::base_case(), &SolverConfig::default()).unwrap();
        assert!(simulate_cost(&s, &quick(s.x_upper + 11.0)).is_err());
    }

    #[test]
    fn csv_header() {
        let rec = PathRecord {
            t: vec![0.0],
            x: vec![1.5],
            d_l: vec![0.0],
            d_u: vec![0.0],
        };
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,x,dL,dU\n0,1.5,0,0\n");
    }
}
