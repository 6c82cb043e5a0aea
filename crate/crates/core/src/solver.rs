//! Free-boundary solver for the control band `(x_L, x*, x_U)`.
//!
//! Inside the inaction region the cost function is
//!
//! ```text
//! J(x) = R₋(x) + A φ̂₋(x) + B φ̌₋(x)    x_L < x < x*
//! J(x) = R₊(x) + C φ̂₊(x) + D φ̌₊(x)    x* ≤ x < x_U
//! ```
//!
//! and it is extended linearly with slopes `-l` and `u` outside. `(A, B)` and
//! `(C, D)` are fixed by `J' = -l, J'' = 0` at `x_L` and `J' = u, J'' = 0` at
//! `x_U`; the barriers and the switch point solve
//! `J'(x*-) = J'(x*+) = 0`, `J''(x*-) = J''(x*+)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    feasibility_check, fundamental_pair, working_interval, Derivs, DriftSign, ModelParams,
    PerpetualCost,
};
use crate::numerics::{bisect, damped_newton, first_crossing, inf_norm, NewtonSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Sup-norm tolerance on the pasting residuals.
    pub newton_tol: f64,
    pub max_iters: usize,
    /// Initial Newton step length, in `(0, 1]`.
    pub damping: f64,
    /// Number of lower-barrier trial points in the bracketing scan.
    pub scan_grid: usize,
    /// Relative step of the finite-difference Jacobian.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_iters: 100,
            damping: 1.0,
            scan_grid: 48,
            fd_step: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return bad(format!(
                "newton_tol must be positive, got {}",
                self.newton_tol
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.scan_grid < 8 {
            return bad(format!(
                "scan_grid must be at least 8, got {}",
                self.scan_grid
            ));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("fd_step must be positive, got {}", self.fd_step));
        }
        Ok(())
    }

    fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.newton_tol,
            max_iters: self.max_iters,
            damping: self.damping,
            fd_step: self.fd_step,
        }
    }
}

/// The model objects a band is pasted from: the perpetual costs under the
/// downward (`R₋`) and upward (`R₊`) worst-case drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct BandProblem {
    params: ModelParams,
    interval: (f64, f64),
    lower: PerpetualCost,
    upper: PerpetualCost,
}

impl BandProblem {
    /// Builds the model objects on the default working interval. Fails on
    /// invalid or infeasible parameters.
    pub fn new(params: &ModelParams) -> Result<Self> {
        Self::on_interval(params, working_interval(params))
    }

    /// Like [`BandProblem::new`] with an explicit interval for scans and
    /// for checking numerically evaluated fundamental solutions.
    pub fn on_interval(params: &ModelParams, interval: (f64, f64)) -> Result<Self> {
        params.validate()?;
        feasibility_check(params).into_result()?;
        let cost = |sign| -> Result<PerpetualCost> {
            PerpetualCost::from_pair(params, fundamental_pair(params, sign, interval)?)
        };
        Ok(Self {
            params: *params,
            interval,
            lower: cost(DriftSign::Minus)?,
            upper: cost(DriftSign::Plus)?,
        })
    }

    /// Smallest doubling of the default interval that holds `[x_lo, x_hi]`.
    fn covering(params: &ModelParams, x_lo: f64, x_hi: f64) -> Result<Self> {
        let (mut lo, mut hi) = working_interval(params);
        while !(lo <= x_lo && x_hi <= hi) && hi.is_finite() {
            lo *= 2.0;
            hi *= 2.0;
        }
        Self::on_interval(params, (lo, hi))
    }

    fn widened(&self) -> Result<Self> {
        Self::on_interval(&self.params, (2.0 * self.interval.0, 2.0 * self.interval.1))
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lower(&self) -> &PerpetualCost {
        &self.lower
    }

    pub fn upper(&self) -> &PerpetualCost {
        &self.upper
    }

    /// `(A, B)` with `J'(x_L) = -l` and `J''(x_L) = 0` on the lower branch.
    pub fn coeffs_lower(&self, x_lower: f64) -> Result<(f64, f64)> {
        pasting_coeffs(&self.lower, x_lower, -self.params.l_cost)
    }

    /// `(C, D)` with `J'(x_U) = u` and `J''(x_U) = 0` on the upper branch.
    pub fn coeffs_upper(&self, x_upper: f64) -> Result<(f64, f64)> {
        pasting_coeffs(&self.upper, x_upper, self.params.u_cost)
    }

    /// `R₋ + A φ̂₋ + B φ̌₋` at `x`.
    pub fn lower_branch(&self, a: f64, b: f64, x: f64) -> Derivs {
        branch(&self.lower, a, b, x)
    }

    /// `R₊ + C φ̂₊ + D φ̌₊` at `x`.
    pub fn upper_branch(&self, c: f64, d: f64, x: f64) -> Derivs {
        branch(&self.upper, c, d, x)
    }

    /// `(A, B)` with `J'(x_L) = -l` and `J'(x*) = 0` on the lower branch.
    pub fn coeffs_lower_between(&self, x_lower: f64, x_star: f64) -> Result<(f64, f64)> {
        slope_coeffs(&self.lower, [x_lower, x_star], [-self.params.l_cost, 0.0])
    }

    /// `(C, D)` with `J'(x*) = 0` and `J'(x_U) = u` on the upper branch.
    pub fn coeffs_upper_between(&self, x_star: f64, x_upper: f64) -> Result<(f64, f64)> {
        slope_coeffs(&self.upper, [x_star, x_upper], [0.0, self.params.u_cost])
    }

    /// `[J''(x_L), J''(x*-) - J''(x*+), J''(x_U)]` with each branch fixed by
    /// the slopes at both ends of its region. Zero exactly at an optimal
    /// band; fixing slopes rather than both conditions at one barrier keeps
    /// the system well conditioned when a fundamental solution grows by many
    /// orders of magnitude across a region.
    pub fn residuals(&self, x_lower: f64, x_star: f64, x_upper: f64) -> Result<[f64; 3]> {
        if !(x_lower < x_star && x_star < x_upper) {
            return Err(Error::Ordering {
                x_lower,
                x_star,
                x_upper,
            });
        }
        let (a, b) = self.coeffs_lower_between(x_lower, x_star)?;
        let (c, d) = self.coeffs_upper_between(x_star, x_upper)?;
        Ok([
            self.lower_branch(a, b, x_lower).d2,
            self.lower_branch(a, b, x_star).d2 - self.upper_branch(c, d, x_star).d2,
            self.upper_branch(c, d, x_upper).d2,
        ])
    }

    fn spread(&self) -> f64 {
        self.params.sigma / (2.0 * self.params.rho).sqrt()
    }
}

fn branch(cost: &PerpetualCost, k_inc: f64, k_dec: f64, x: f64) -> Derivs {
    let pair = cost.pair();
    cost.eval(x)
        .add_scaled(k_inc, pair.increasing(x))
        .add_scaled(k_dec, pair.decreasing(x))
}

fn pasting_coeffs(cost: &PerpetualCost, x: f64, slope: f64) -> Result<(f64, f64)> {
    let r = cost.eval(x);
    let inc = cost.pair().increasing(x);
    let dec = cost.pair().decreasing(x);
    let det = inc.d1 * dec.d2 - dec.d1 * inc.d2;
    let scale = (inc.d1 * dec.d2).abs() + (dec.d1 * inc.d2).abs();
    if !det.is_finite() || det.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::SingularSystem { x, det });
    }
    let r1 = slope - r.d1;
    let r2 = -r.d2;
    let a = (r1 * dec.d2 - dec.d1 * r2) / det;
    let b = (inc.d1 * r2 - r1 * inc.d2) / det;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::SingularSystem { x, det });
    }
    Ok((a, b))
}

/// `(k_inc, k_dec)` with `J'(x[i]) = slope[i]` for `i = 0, 1`.
fn slope_coeffs(cost: &PerpetualCost, x: [f64; 2], slope: [f64; 2]) -> Result<(f64, f64)> {
    let pair = cost.pair();
    let (inc0, dec0) = (pair.increasing(x[0]).d1, pair.decreasing(x[0]).d1);
    let (inc1, dec1) = (pair.increasing(x[1]).d1, pair.decreasing(x[1]).d1);
    let det = inc0 * dec1 - dec0 * inc1;
    let scale = (inc0 * dec1).abs() + (dec0 * inc1).abs();
    if !det.is_finite() || det.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::SingularSystem { x: x[0], det });
    }
    let r0 = slope[0] - cost.eval(x[0]).d1;
    let r1 = slope[1] - cost.eval(x[1]).d1;
    let a = (r0 * dec1 - dec0 * r1) / det;
    let b = (inc0 * r1 - r0 * inc1) / det;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::SingularSystem { x: x[0], det });
    }
    Ok((a, b))
}

/// How a solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Two-barrier system without ambiguity.
    Classical,
    /// Newton on the three-point system from a supplied or classical guess.
    Newton,
    /// Bracketing scan followed by Newton.
    Scan,
}

/// A converged band found during the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x_lower: f64,
    pub x_star: f64,
    pub x_upper: f64,
    pub residual_norm: f64,
    pub cost_at_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    pub iterations: usize,
    #[serde(default)]
    pub warm_started: bool,
    /// Every converged band, the returned one included. More than one entry
    /// means the pasting system has several solutions; the cheapest at 0 is
    /// returned.
    #[serde(default)]
    pub candidates: Vec<Candidate>,
}

/// Optimal band and the coefficients of the cost function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolutionRecord", into = "SolutionRecord")]
pub struct BandSolution {
    pub x_lower: f64,
    pub x_star: f64,
    pub x_upper: f64,
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub coeff_c: f64,
    pub coeff_d: f64,
    pub residuals: [f64; 3],
    pub residual_norm: f64,
    pub diagnostics: SolveDiagnostics,
    problem: BandProblem,
}

/// On-disk form of a [`BandSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub params: ModelParams,
    pub x_lower: f64,
    pub x_star: f64,
    pub x_upper: f64,
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub coeff_c: f64,
    pub coeff_d: f64,
    pub residuals: [f64; 3],
    pub residual_norm: f64,
    pub diagnostics: SolveDiagnostics,
}

impl TryFrom<SolutionRecord> for BandSolution {
    type Error = Error;

    fn try_from(r: SolutionRecord) -> Result<Self> {
        let values = [
            r.x_lower, r.x_star, r.x_upper, r.coeff_a, r.coeff_b, r.coeff_c, r.coeff_d,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "solution contains non-finite values".into(),
            ));
        }
        if !(r.x_lower < r.x_star && r.x_star < r.x_upper) {
            return Err(Error::Ordering {
                x_lower: r.x_lower,
                x_star: r.x_star,
                x_upper: r.x_upper,
            });
        }
        Ok(Self {
            x_lower: r.x_lower,
            x_star: r.x_star,
            x_upper: r.x_upper,
            coeff_a: r.coeff_a,
            coeff_b: r.coeff_b,
            coeff_c: r.coeff_c,
            coeff_d: r.coeff_d,
            residuals: r.residuals,
            residual_norm: r.residual_norm,
            diagnostics: r.diagnostics,
            problem: BandProblem::covering(&r.params, r.x_lower, r.x_upper)?,
        })
    }
}

impl From<BandSolution> for SolutionRecord {
    fn from(s: BandSolution) -> Self {
        Self {
            params: s.problem.params,
            x_lower: s.x_lower,
            x_star: s.x_star,
            x_upper: s.x_upper,
            coeff_a: s.coeff_a,
            coeff_b: s.coeff_b,
            coeff_c: s.coeff_c,
            coeff_d: s.coeff_d,
            residuals: s.residuals,
            residual_norm: s.residual_norm,
            diagnostics: s.diagnostics,
        }
    }
}

impl BandSolution {
    /// Builds a solution from barriers, deriving the coefficients.
    fn assemble(problem: &BandProblem, x: [f64; 3], diagnostics: SolveDiagnostics) -> Result<Self> {
        let [x_lower, x_star, x_upper] = x;
        if !(x_lower < x_star && x_star < x_upper && x_lower < 0.0 && 0.0 < x_upper) {
            return Err(Error::Ordering {
                x_lower,
                x_star,
                x_upper,
            });
        }
        let (lo, hi) = problem.interval;
        let problem = &if lo <= x_lower && x_upper <= hi {
            problem.clone()
        } else {
            BandProblem::covering(&problem.params, x_lower, x_upper)?
        };
        let (coeff_a, coeff_b) = problem.coeffs_lower_between(x_lower, x_star)?;
        let (coeff_c, coeff_d) = problem.coeffs_upper_between(x_star, x_upper)?;
        let residuals = problem.residuals(x_lower, x_star, x_upper)?;
        Ok(Self {
            x_lower,
            x_star,
            x_upper,
            coeff_a,
            coeff_b,
            coeff_c,
            coeff_d,
            residuals,
            residual_norm: inf_norm(&residuals),
            diagnostics,
            problem: problem.clone(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.problem.params
    }

    pub fn problem(&self) -> &BandProblem {
        &self.problem
    }

    pub fn barriers(&self) -> [f64; 3] {
        [self.x_lower, self.x_star, self.x_upper]
    }

    /// Lower-region branch evaluated anywhere (no clamping to its region).
    pub fn lower_branch(&self, x: f64) -> Derivs {
        self.problem.lower_branch(self.coeff_a, self.coeff_b, x)
    }

    /// Upper-region branch evaluated anywhere.
    pub fn upper_branch(&self, x: f64) -> Derivs {
        self.problem.upper_branch(self.coeff_c, self.coeff_d, x)
    }

    /// Cost function and its first two derivatives. `x*` itself belongs to
    /// the upper region.
    pub fn evaluate(&self, x: f64) -> Derivs {
        let p = &self.problem.params;
        if x <= self.x_lower {
            let edge = self.lower_branch(self.x_lower).value;
            Derivs::new(edge + p.l_cost * (self.x_lower - x), -p.l_cost, 0.0)
        } else if x < self.x_star {
            self.lower_branch(x)
        } else if x < self.x_upper {
            self.upper_branch(x)
        } else {
            let edge = self.upper_branch(self.x_upper).value;
            Derivs::new(edge + p.u_cost * (x - self.x_upper), p.u_cost, 0.0)
        }
    }

    /// `(J(x), J'(x))`.
    pub fn evaluate_cost(&self, x: f64) -> (f64, f64) {
        let d = self.evaluate(x);
        (d.value, d.d1)
    }

    /// Largest value of `J` on `[x_L, x_U]`; attained at a barrier by
    /// convexity.
    pub fn max_in_band(&self) -> f64 {
        self.evaluate(self.x_lower)
            .value
            .max(self.evaluate(self.x_upper).value)
    }

    fn candidate(&self) -> Candidate {
        Candidate {
            x_lower: self.x_lower,
            x_star: self.x_star,
            x_upper: self.x_upper,
            residual_norm: self.residual_norm,
            cost_at_zero: self.evaluate(0.0).value,
        }
    }
}

/// Solves the problem without ambiguity (`kappa = 0`) by eliminating the
/// coefficients and running Newton on `(x_L, x_U)`.
pub fn solve_classical(params: &ModelParams, config: &SolverConfig) -> Result<BandSolution> {
    config.validate()?;
    if params.kappa != 0.0 {
        return Err(Error::InvalidParameter {
            name: "kappa",
            value: params.kappa,
            reason: "the classical problem requires kappa = 0",
        });
    }
    widening(BandProblem::new(params)?, |p| classical_solve(p, config))
}

fn classical_solve(problem: &BandProblem, config: &SolverConfig) -> Result<BandSolution> {
    let mirrored = || -> Vec<[f64; 2]> {
        match BandProblem::on_interval(&problem.params.mirrored(), problem.interval) {
            Ok(m) => classical_seeds(&m, config)
                .into_iter()
                .map(|[l, u]| [-u, -l])
                .collect(),
            Err(_) => Vec::new(),
        }
    };
    polish_seeds(
        classical_seeds(problem, config),
        mirrored,
        |seed| classical_newton(problem, config, seed),
        "no lower barrier in the working interval pastes with an upper one",
    )
}

/// Newton from each seed; if none converges, retries with the seeds found
/// on the mirrored problem `x -> -x`, which is driven by the other barrier.
fn polish_seeds<S, M, N>(
    seeds: Vec<S>,
    mirrored: M,
    newton: N,
    none_msg: &str,
) -> Result<BandSolution>
where
    M: FnOnce() -> Vec<S>,
    N: Fn(S) -> Result<BandSolution>,
{
    let mut last_err = None;
    let mut run = |seeds: Vec<S>| {
        let mut found = Vec::new();
        for seed in seeds {
            match newton(seed) {
                Ok(s) => found.push(s),
                Err(e) => last_err = Some(e),
            }
        }
        found
    };
    let mut found = run(seeds);
    if found.is_empty() {
        found = run(mirrored());
    }
    if found.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::NoBracket(none_msg.into())));
    }
    Ok(pick_cheapest(found))
}

fn classical_newton(
    problem: &BandProblem,
    config: &SolverConfig,
    guess: [f64; 2],
) -> Result<BandSolution> {
    let (l, u) = (problem.params.l_cost, problem.params.u_cost);
    let f = |x: &[f64; 2]| -> Result<[f64; 2]> {
        if !(x[0] < x[1]) {
            return Err(Error::Ordering {
                x_lower: x[0],
                x_star: f64::NAN,
                x_upper: x[1],
            });
        }
        let (a, b) = slope_coeffs(&problem.lower, *x, [-l, u])?;
        Ok([
            problem.lower_branch(a, b, x[0]).d2,
            problem.lower_branch(a, b, x[1]).d2,
        ])
    };
    let out = damped_newton(f, guess, &config.newton())?;
    let [x_lower, x_upper] = out.x;
    let (a, b) = slope_coeffs(&problem.lower, out.x, [-l, u])?;
    let slope = |x: f64| Some(problem.lower_branch(a, b, x).d1);
    let x_star = bisect(slope, x_lower, x_upper).ok_or(Error::Ordering {
        x_lower,
        x_star: f64::NAN,
        x_upper,
    })?;
    let diagnostics = SolveDiagnostics {
        method: SolveMethod::Classical,
        iterations: out.iterations,
        warm_started: false,
        candidates: Vec::new(),
    };
    let mut s = BandSolution::assemble(problem, [x_lower, x_star, x_upper], diagnostics)?;
    s.residual_norm = s.residual_norm.max(out.norm);
    Ok(s)
}

/// Brackets for the classical problem: for each trial `x_L` follow the
/// pasted branch past its minimum to the inflection point `z` and look for
/// sign changes of `J'(z) - u`.
fn classical_seeds(problem: &BandProblem, config: &SolverConfig) -> Vec<[f64; 2]> {
    let u = problem.params.u_cost;
    let reduce = |x_lower: f64| -> Option<(f64, f64)> {
        let (a, b) = problem.coeffs_lower(x_lower).ok()?;
        let br = |x: f64| problem.lower_branch(a, b, x);
        let m = march(problem, |x| Some(br(x).d1), x_lower)?;
        let z = march(problem, |x| Some(br(x).d2), m)?;
        Some((br(z).d1 - u, z))
    };
    bracket_lower(problem, config, |x| reduce(x).map(|r| r.0))
        .into_iter()
        .filter_map(|x_lower| reduce(x_lower).map(|(_, z)| [x_lower, z]))
        .collect()
}

/// First sign change of `f` to the right of `start`, within the working
/// interval.
fn march<F: Fn(f64) -> Option<f64>>(problem: &BandProblem, f: F, start: f64) -> Option<f64> {
    let (_, hi) = problem.interval;
    let spread = problem.spread();
    if start >= hi {
        return None;
    }
    first_crossing(f, start, hi, 1e-3 * spread, spread / 8.0)
}

/// Roots of a scalar reduction `g(x_L)` over a geometric grid of negative
/// lower barriers.
fn bracket_lower<G: Fn(f64) -> Option<f64>>(
    problem: &BandProblem,
    config: &SolverConfig,
    g: G,
) -> Vec<f64> {
    let (lo, _) = problem.interval;
    let n = config.scan_grid;
    let grid: Vec<f64> = (0..n)
        .map(|k| lo * 1e-3f64.powf(1.0 - k as f64 / (n - 1) as f64))
        .collect();
    let values: Vec<Option<f64>> = grid.iter().map(|&x| g(x)).collect();
    let mut roots = Vec::new();
    for k in 0..n - 1 {
        let (x0, x1) = (grid[k], grid[k + 1]);
        let pair = match (values[k], values[k + 1]) {
            (Some(a), Some(b)) => Some(((x0, a), (x1, b))),
            // The reduction can be defined on a window narrower than the
            // grid spacing; look for the root just inside its edge.
            (Some(a), None) => domain_edge(&g, x0, x1).map(|e| ((x0, a), e)),
            (None, Some(b)) => domain_edge(&g, x1, x0).map(|e| (e, (x1, b))),
            (None, None) => None,
        };
        let Some(((xa, a), (xb, b))) = pair else {
            continue;
        };
        if a == 0.0 {
            roots.push(xa);
        } else if a.signum() != b.signum() {
            if let Some(r) = bisect(&g, xa.min(xb), xa.max(xb)) {
                roots.push(r);
            }
        }
    }
    roots
}

/// Last point between `inside` (where `g` is defined) and `outside` (where
/// it is not) at which `g` is still defined, with its value.
fn domain_edge<G: Fn(f64) -> Option<f64>>(g: &G, inside: f64, outside: f64) -> Option<(f64, f64)> {
    let (mut a, mut b) = (inside, outside);
    let mut ga = g(a)?;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        match g(mid) {
            Some(v) => {
                a = mid;
                ga = v;
            }
            None => b = mid,
        }
    }
    Some((a, ga))
}

/// Solves the three-point pasting system. `kappa = 0` is delegated to
/// [`solve_classical`]; otherwise Newton starts from the classical band and
/// falls back to a bracketing scan.
pub fn solve_band(params: &ModelParams, config: &SolverConfig) -> Result<BandSolution> {
    config.validate()?;
    if params.kappa == 0.0 {
        return solve_classical(params, config);
    }
    let problem = BandProblem::new(params)?;
    if let Ok(start) = solve_classical(&params.with_kappa(0.0), config) {
        if let Ok(s) = band_newton(&problem, config, start.barriers(), SolveMethod::Newton) {
            return Ok(s);
        }
    }
    widening(problem, |p| scan_solve(p, config))
}

/// Like [`solve_band`] but starts Newton from `guess = [x_L, x*, x_U]`,
/// falling back to a cold solve if that fails.
pub fn solve_band_from(
    params: &ModelParams,
    config: &SolverConfig,
    guess: [f64; 3],
) -> Result<BandSolution> {
    config.validate()?;
    let problem = BandProblem::new(params)?;
    let warm = if params.kappa == 0.0 {
        classical_newton(&problem, config, [guess[0], guess[2]])
    } else {
        band_newton(&problem, config, guess, SolveMethod::Newton)
    };
    match warm {
        Ok(mut s) => {
            s.diagnostics.warm_started = true;
            Ok(s)
        }
        Err(_) => solve_band(params, config),
    }
}

/// Bracketing scan plus Newton on the full three-point system for any
/// `kappa >= 0`, including the classical case.
pub fn solve_general(params: &ModelParams, config: &SolverConfig) -> Result<BandSolution> {
    config.validate()?;
    widening(BandProblem::new(params)?, |p| scan_solve(p, config))
}

/// Doublings of the scan interval tried when no band is found. Only
/// mean-reverting dynamics use them: their default interval is a multiple
/// of the stationary spread, which a nearly infeasible cost can outgrow.
const MAX_WIDENINGS: usize = 2;

fn widening<F>(mut problem: BandProblem, solve: F) -> Result<BandSolution>
where
    F: Fn(&BandProblem) -> Result<BandSolution>,
{
    let mut result = solve(&problem);
    for _ in 0..MAX_WIDENINGS {
        if !matches!(result, Err(Error::NoBracket(_))) || problem.params.alpha().is_some() {
            break;
        }
        problem = problem.widened()?;
        result = solve(&problem);
    }
    result
}

fn band_newton(
    problem: &BandProblem,
    config: &SolverConfig,
    guess: [f64; 3],
    method: SolveMethod,
) -> Result<BandSolution> {
    let out = damped_newton(
        |x: &[f64; 3]| problem.residuals(x[0], x[1], x[2]),
        guess,
        &config.newton(),
    )?;
    let diagnostics = SolveDiagnostics {
        method,
        iterations: out.iterations,
        warm_started: false,
        candidates: Vec::new(),
    };
    let mut s = BandSolution::assemble(problem, out.x, diagnostics)?;
    s.diagnostics.candidates.push(s.candidate());
    Ok(s)
}

/// Nested reduction to one unknown: for a trial `x_L`, `m` is where the
/// lower branch turns upward; `x_U` is the nearest upper barrier whose branch
/// is flat at `m`; the remaining condition is the curvature jump at `m`.
fn band_reduction(problem: &BandProblem, x_lower: f64) -> Option<([f64; 3], f64)> {
    let (a, b) = problem.coeffs_lower(x_lower).ok()?;
    let m = march(problem, |x| Some(problem.lower_branch(a, b, x).d1), x_lower)?;
    let flat_at_m = |x_upper: f64| {
        let (c, d) = problem.coeffs_upper(x_upper).ok()?;
        Some(problem.upper_branch(c, d, m).d1)
    };
    let x_upper = march(problem, flat_at_m, m)?;
    let (c, d) = problem.coeffs_upper(x_upper).ok()?;
    let jump = problem.lower_branch(a, b, m).d2 - problem.upper_branch(c, d, m).d2;
    Some(([x_lower, m, x_upper], jump))
}

fn band_seeds(problem: &BandProblem, config: &SolverConfig) -> Vec<[f64; 3]> {
    bracket_lower(problem, config, |x| band_reduction(problem, x).map(|r| r.1))
        .into_iter()
        .filter_map(|x_lower| band_reduction(problem, x_lower).map(|r| r.0))
        .collect()
}

fn scan_solve(problem: &BandProblem, config: &SolverConfig) -> Result<BandSolution> {
    let mirrored = || -> Vec<[f64; 3]> {
        match BandProblem::on_interval(&problem.params.mirrored(), problem.interval) {
            Ok(m) => band_seeds(&m, config)
                .into_iter()
                .map(|[l, s, u]| [-u, -s, -l])
                .collect(),
            Err(_) => Vec::new(),
        }
    };
    polish_seeds(
        band_seeds(problem, config),
        mirrored,
        |seed| band_newton(problem, config, seed, SolveMethod::Scan),
        "the curvature jump at the switch point never changes sign",
    )
}

/// Drops duplicates and returns the band with the lowest cost at 0,
/// listing every distinct band as a candidate. `found` must be non-empty.
fn pick_cheapest(found: Vec<BandSolution>) -> BandSolution {
    let mut unique: Vec<BandSolution> = Vec::new();
    for s in found {
        let x = s.barriers();
        let dup = unique.iter().any(|t| {
            let y = t.barriers();
            (0..3).all(|i| (x[i] - y[i]).abs() <= 1e-7 * (1.0 + y[i].abs()))
        });
        if !dup {
            unique.push(s);
        }
    }
    let candidates: Vec<Candidate> = unique.iter().map(BandSolution::candidate).collect();
    let mut best = unique
        .into_iter()
        .min_by(|a, b| a.evaluate(0.0).value.total_cmp(&b.evaluate(0.0).value))
        .expect("at least one converged band");
    best.diagnostics.candidates = candidates;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = SolverConfig {
            scan_grid: 4,
            ..cfg()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = SolverConfig {
            damping: 1.5,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lower_coeffs_back_substitute() {
        let p = ModelParams::base_case();
        let prob = BandProblem::new(&p).unwrap();
        let (a, b) = prob.coeffs_lower(-1.0).unwrap();
        let d = prob.lower_branch(a, b, -1.0);
        assert!((d.d1 + p.l_cost).abs() < 1e-10);
        assert!(d.d2.abs() < 1e-10);
        let (c, dd) = prob.coeffs_upper(3.0).unwrap();
        let e = prob.upper_branch(c, dd, 3.0);
        assert!((e.d1 - p.u_cost).abs() < 1e-10);
        assert!(e.d2.abs() < 1e-10);
    }

    #[test]
    fn zero_right_hand_side_gives_zero_coeffs() {
        // choose l so that l = -R'(x_L); R'' is not zero there, so only check
        // the linear structure: coefficients are affine in the slope target
        let p = ModelParams::base_case();
        let prob = BandProblem::new(&p).unwrap();
        let r = prob.lower().eval(-2.0);
        let zero = pasting_coeffs(prob.lower(), -2.0, r.d1);
        let (a, b) = zero.unwrap();
        let pair = prob.lower().pair();
        let (i, d) = (pair.increasing(-2.0), pair.decreasing(-2.0));
        // only the curvature condition is active
        assert!((a * i.d1 + b * d.d1).abs() < 1e-10);
        assert!((a * i.d2 + b * d.d2 + r.d2).abs() < 1e-10);
    }

    #[test]
    fn symmetric_residuals_mirror() {
        let p = ModelParams::abm(0.0, 3.0, 0.5);
        let prob = BandProblem::new(&p).unwrap();
        let r = prob.residuals(-2.5, 0.0, 2.5).unwrap();
        assert!(r[0].abs() > 1e-3, "{r:?}");
        assert!((r[0] - r[2]).abs() < 1e-10, "{r:?}");
        assert!(r[1].abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn residuals_reject_bad_ordering() {
        let prob = BandProblem::new(&ModelParams::base_case()).unwrap();
        assert!(matches!(
            prob.residuals(1.0, 0.0, 2.0),
            Err(Error::Ordering { .. })
        ));
    }

    #[test]
    fn classical_symmetric_band() {
        let p = ModelParams::abm(0.0, 5.4, 0.0);
        let s = solve_classical(&p, &cfg()).unwrap();
        assert!((s.x_upper + s.x_lower).abs() < 1e-8, "{:?}", s.barriers());
        assert!(s.x_star.abs() < 1e-8);
        assert!((s.evaluate(s.x_lower).d1 + 2.0).abs() < 1e-9);
        assert!((s.evaluate(s.x_upper - 1e-12).d1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn classical_base_case_converges() {
        let p = ModelParams::base_case().with_kappa(0.0);
        let s = solve_classical(&p, &cfg()).unwrap();
        assert!(s.residual_norm < 1e-9);
        assert!(s.x_lower < 0.0 && 0.0 < s.x_upper);
        let lo = s.lower_branch(s.x_lower);
        let up = s.upper_branch(s.x_upper);
        assert!((lo.d1 + 4.0).abs() < 1e-9 && lo.d2.abs() < 1e-9);
        assert!((up.d1 - 2.0).abs() < 1e-9 && up.d2.abs() < 1e-9);
    }

    #[test]
    fn band_base_case() {
        let p = ModelParams::base_case();
        let s = solve_band(&p, &cfg()).unwrap();
        assert!(s.residual_norm < 1e-9, "{}", s.residual_norm);
        let c = solve_classical(&p.with_kappa(0.0), &cfg()).unwrap();
        assert!(s.x_upper - s.x_lower < c.x_upper - c.x_lower);
    }

    #[test]
    fn general_matches_classical_at_zero_kappa() {
        let p = ModelParams::abm(0.0, 4.0, 0.0).with_costs(1.0, 1.0, 3.0, 2.0);
        let a = solve_classical(&p, &cfg()).unwrap();
        let b = solve_general(&p, &cfg()).unwrap();
        for (x, y) in a.barriers().iter().zip(b.barriers()) {
            assert!(
                (x - y).abs() < 1e-8,
                "{:?} vs {:?}",
                a.barriers(),
                b.barriers()
            );
        }
    }

    #[test]
    fn cost_extends_linearly() {
        let s = solve_band(&ModelParams::base_case(), &cfg()).unwrap();
        let (jl, _) = s.evaluate_cost(s.x_lower);
        let (v, d) = s.evaluate_cost(s.x_lower - 1.0);
        assert!((v - jl - 4.0).abs() < 1e-12 && d == -4.0);
        let (ju, _) = s.evaluate_cost(s.x_upper);
        let (v, d) = s.evaluate_cost(s.x_upper + 2.0);
        assert!((v - ju - 4.0).abs() < 1e-12 && d == 2.0);
        let left = s.lower_branch(s.x_star).value;
        let right = s.upper_branch(s.x_star).value;
        assert!((left - right).abs() < 1e-9);
    }

    #[test]
    fn warm_start_matches_cold() {
        let p = ModelParams::base_case();
        let cold = solve_band(&p, &cfg()).unwrap();
        let guess = [cold.x_lower - 0.3, cold.x_star + 0.2, cold.x_upper + 0.4];
        let warm = solve_band_from(&p, &cfg(), guess).unwrap();
        assert!(warm.diagnostics.warm_started);
        for (x, y) in cold.barriers().iter().zip(warm.barriers()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn solution_round_trips_through_json() {
        let s = solve_band(&ModelParams::base_case(), &cfg()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: BandSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn infeasible_params_rejected() {
        let p = ModelParams::base_case().with_costs(0.3, 1.0, 4.0, 2.0);
        assert!(matches!(solve_band(&p, &cfg()), Err(Error::Infeasible(_))));
    }
}
