//! Checks a candidate band against the sufficient optimality conditions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{holding_cost, Derivs, Diffusion, DriftSign, ModelParams};
use crate::simulator::{simulate_policy_path, BandPolicy, SimConfig};
use crate::solver::BandSolution;

pub const DEFAULT_GRID_POINTS: usize = 2001;
const SPOT_PATHS: u64 = 16;

/// Absolute tolerances, one per family of checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// HJB residual inside the band.
    pub hjb: f64,
    /// Slopes at the barriers and at the switch point.
    pub pasting: f64,
    /// Curvature at the barriers and its jump at the switch point.
    pub curvature: f64,
    /// Allowed negative curvature (and negative value) inside the band.
    pub convexity: f64,
    /// Discounted expected cost-to-go at the spot-check horizon.
    pub transversality: f64,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            hjb: tol,
            pasting: tol,
            curvature: tol,
            convexity: tol,
            transversality: tol,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::uniform(1e-7)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `θσφ' - 𝓛φ = c` on `(x_L, x_U)`.
    Hjb,
    /// `φ'(x_L+) = -l`, `φ'(x_U-) = u`.
    BarrierSlope,
    /// `φ''(x_L+) = φ''(x_U-) = 0`.
    BarrierCurvature,
    /// Holding below `x_L` never beats controlling.
    LowerCost,
    /// Holding above `x_U` never beats controlling.
    UpperCost,
    /// `e^{-ρT} E φ(X_T) -> 0`.
    Transversality,
    Convexity,
    NonNegativity,
    /// `x_L < x* < x_U` and `x_L < 0 < x_U`.
    Ordering,
    /// Both branches flat with equal value and curvature at `x*`.
    SwitchPoint,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Hjb => "HJB equation",
            Condition::BarrierSlope => "barrier slopes",
            Condition::BarrierCurvature => "barrier curvature",
            Condition::LowerCost => "lower cost inequality",
            Condition::UpperCost => "upper cost inequality",
            Condition::Transversality => "transversality",
            Condition::Convexity => "convexity",
            Condition::NonNegativity => "non-negativity",
            Condition::Ordering => "ordering",
            Condition::SwitchPoint => "switch point pasting",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub passed: bool,
    /// Largest violation measure (0 when fully satisfied).
    pub worst: f64,
    /// Where the worst violation occurs, if it is a point.
    pub at: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub grid_points: usize,
    pub tolerances: Tolerances,
    pub conditions: Vec<ConditionReport>,
}

impl VerificationReport {
    pub fn get(&self, condition: Condition) -> &ConditionReport {
        self.conditions
            .iter()
            .find(|c| c.condition == condition)
            .expect("every condition is reported")
    }

    pub fn failed(&self) -> impl Iterator<Item = &ConditionReport> {
        self.conditions.iter().filter(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "verification {} ({} grid points per region)",
            if self.passed { "PASSED" } else { "FAILED" },
            self.grid_points
        )?;
        for c in &self.conditions {
            write!(
                f,
                "  [{}] {:<26} worst {:.3e} (tol {:.1e})",
                if c.passed { "ok" } else { "FAIL" },
                c.condition.label(),
                c.worst,
                c.tolerance
            )?;
            if let Some(x) = c.at {
                write!(f, " at x = {x:.6}")?;
            }
            if !c.detail.is_empty() {
                write!(f, "; {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Worst-case drift sign for the band: downward below `x*`, upward from
/// `x*` on.
pub fn worst_case_generator(solution: &BandSolution, x: f64) -> DriftSign {
    if x < solution.x_star {
        DriftSign::Minus
    } else {
        DriftSign::Plus
    }
}

/// Drift sign selected by the slope of the cost function: the adversary
/// pushes uphill.
pub fn generator_from_slope(slope: f64) -> DriftSign {
    if slope >= 0.0 {
        DriftSign::Plus
    } else {
        DriftSign::Minus
    }
}

/// `θσφ' - 𝓛φ - c` with `θ = -κ` where `φ' >= 0` and `+κ` otherwise.
pub fn hjb_residual(params: &ModelParams, x: f64, phi: Derivs) -> f64 {
    let theta = if phi.d1 >= 0.0 {
        -params.kappa
    } else {
        params.kappa
    };
    let generator = 0.5 * params.sigma * params.sigma * phi.d2 + params.diffusion.drift(x) * phi.d1
        - params.rho * phi.value;
    theta * params.sigma * phi.d1 - generator - holding_cost(x, params)
}

/// Points strictly inside `(a, b)`: a uniform grid plus points clustered
/// geometrically towards both ends.
fn region_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let width = b - a;
    let mut xs: Vec<f64> = (1..n.saturating_sub(1))
        .map(|i| a + width * i as f64 / (n - 1) as f64)
        .collect();
    for k in 1..=12 {
        let off = width * 10f64.powi(-k);
        xs.push(a + off);
        xs.push(b - off);
    }
    xs.retain(|&x| x > a && x < b);
    xs
}

#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<f64>,
}

impl Worst {
    fn update(&mut self, v: f64, x: f64) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.value || self.at.is_none() && v >= self.value {
            self.value = v;
            self.at = Some(x);
        }
    }
}

fn report(
    condition: Condition,
    worst: f64,
    at: Option<f64>,
    tolerance: f64,
    detail: String,
) -> ConditionReport {
    ConditionReport {
        condition,
        passed: worst <= tolerance,
        worst,
        at,
        tolerance,
        detail,
    }
}

type Branch = fn(&BandSolution, f64) -> Derivs;

/// Evaluates every condition on `grid_points` uniform points per region
/// (plus points clustered near each region's ends).
pub fn verify(
    solution: &BandSolution,
    grid_points: usize,
    tolerances: &Tolerances,
) -> VerificationReport {
    let p = *solution.params();
    let [x_l, x_s, x_u] = solution.barriers();
    let n = grid_points.max(3);
    let mut conditions = Vec::new();

    let ordered = x_l < x_s && x_s < x_u && x_l < 0.0 && 0.0 < x_u;
    let margin = [x_s - x_l, x_u - x_s, -x_l, x_u]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    conditions.push(ConditionReport {
        condition: Condition::Ordering,
        passed: ordered,
        worst: (-margin).max(0.0),
        at: None,
        tolerance: 0.0,
        detail: format!("x_L = {x_l}, x* = {x_s}, x_U = {x_u}"),
    });

    // Interior checks, each region with its own branch.
    let mut hjb = Worst::default();
    let mut convex = Worst::default();
    let mut positive = Worst::default();
    let regions: [(f64, f64, Branch); 2] = [
        (x_l, x_s, BandSolution::lower_branch),
        (x_s, x_u, BandSolution::upper_branch),
    ];
    if ordered {
        for (a, b, branch) in regions {
            for x in region_grid(a, b, n) {
                let d = branch(solution, x);
                hjb.update(hjb_residual(&p, x, d).abs(), x);
                convex.update(-d.d2, x);
                positive.update(-d.value, x);
            }
        }
    }
    let missing = |w: Worst| {
        if ordered {
            (w.value, w.at)
        } else {
            (f64::INFINITY, None)
        }
    };
    let (v, at) = missing(hjb);
    conditions.push(report(Condition::Hjb, v, at, tolerances.hjb, String::new()));

    let lo = solution.lower_branch(x_l);
    let up = solution.upper_branch(x_u);
    let slope_l = (lo.d1 + p.l_cost).abs();
    let slope_u = (up.d1 - p.u_cost).abs();
    let fd = one_sided_slopes(solution);
    let (v, at) = if slope_l >= slope_u {
        (slope_l, x_l)
    } else {
        (slope_u, x_u)
    };
    conditions.push(report(
        Condition::BarrierSlope,
        v,
        Some(at),
        tolerances.pasting,
        format!(
            "φ'(x_L+) = {:.9}, φ'(x_U-) = {:.9}; one-sided differences {:.6}, {:.6}",
            lo.d1, up.d1, fd.0, fd.1
        ),
    ));
    let (v, at) = if lo.d2.abs() >= up.d2.abs() {
        (lo.d2.abs(), x_l)
    } else {
        (up.d2.abs(), x_u)
    };
    conditions.push(report(
        Condition::BarrierCurvature,
        v,
        Some(at),
        tolerances.curvature,
        format!("φ''(x_L+) = {:.3e}, φ''(x_U-) = {:.3e}", lo.d2, up.d2),
    ));

    let rate = p.rho + p.diffusion.eta();
    let rate_label = match p.diffusion {
        Diffusion::Abm { .. } => "ρ",
        Diffusion::Ou { .. } => "(ρ+η)",
    };
    let gap_l = rate * p.l_cost - p.c_neg;
    conditions.push(report(
        Condition::LowerCost,
        gap_l.max(0.0),
        None,
        0.0,
        format!("č = {} vs {rate_label}ℓ = {}", p.c_neg, rate * p.l_cost),
    ));
    let gap_u = rate * p.u_cost - p.c_pos;
    conditions.push(report(
        Condition::UpperCost,
        gap_u.max(0.0),
        None,
        0.0,
        format!("ĉ = {} vs {rate_label}u = {}", p.c_pos, rate * p.u_cost),
    ));

    conditions.push(transversality(solution, ordered, tolerances.transversality));

    let (v, at) = missing(convex);
    conditions.push(report(
        Condition::Convexity,
        v.max(0.0),
        at,
        tolerances.convexity,
        String::new(),
    ));
    let (v, at) = missing(positive);
    conditions.push(report(
        Condition::NonNegativity,
        v.max(0.0),
        at,
        tolerances.convexity,
        String::new(),
    ));

    let left = solution.lower_branch(x_s);
    let right = solution.upper_branch(x_s);
    let parts = [
        left.d1.abs(),
        right.d1.abs(),
        (left.d2 - right.d2).abs(),
        (left.value - right.value).abs(),
    ];
    let tol_switch = tolerances.pasting.max(tolerances.curvature);
    conditions.push(report(
        Condition::SwitchPoint,
        parts.into_iter().fold(0.0, f64::max),
        Some(x_s),
        tol_switch,
        format!(
            "φ'(x*-) = {:.3e}, φ'(x*+) = {:.3e}, φ'' jump {:.3e}, value jump {:.3e}",
            left.d1,
            right.d1,
            left.d2 - right.d2,
            left.value - right.value
        ),
    ));

    VerificationReport {
        passed: conditions.iter().all(|c| c.passed),
        grid_points: n,
        tolerances: *tolerances,
        conditions,
    }
}

/// Slopes at the barriers by one-sided differences into the band, as a
/// cross-check on the analytic branch derivatives.
fn one_sided_slopes(solution: &BandSolution) -> (f64, f64) {
    let [x_l, _, x_u] = solution.barriers();
    let h_l = 1e-6 * (1.0 + x_l.abs());
    let h_u = 1e-6 * (1.0 + x_u.abs());
    let dl = (solution.lower_branch(x_l + h_l).value - solution.lower_branch(x_l).value) / h_l;
    let du = (solution.upper_branch(x_u).value - solution.upper_branch(x_u - h_u).value) / h_u;
    (dl, du)
}

/// The band keeps the state in `[x_L, x_U]`, where `φ` is bounded by its
/// barrier values, so `e^{-ρT} E φ(X_T) <= e^{-ρT} max φ`. The simulated
/// check confirms it for a few paths at `T = 50/ρ`.
fn transversality(solution: &BandSolution, ordered: bool, tol: f64) -> ConditionReport {
    if !ordered {
        return report(
            Condition::Transversality,
            f64::INFINITY,
            None,
            tol,
            "band is not well formed".into(),
        );
    }
    let p = solution.params();
    let horizon = 50.0 / p.rho;
    let bound = (-p.rho * horizon).exp() * solution.max_in_band();
    let config = SimConfig {
        n_paths: SPOT_PATHS,
        dt: (0.05 / p.rho).min(1.0),
        horizon,
        seed: 0,
        x0: 0.0,
        ..SimConfig::default()
    };
    let mut detail = format!("structural bound {bound:.3e}");
    let policy = BandPolicy::of(solution);
    let mut sum = 0.0;
    for path in 0..SPOT_PATHS {
        match simulate_policy_path(p, policy, &config, path) {
            Ok(rec) => sum += solution.evaluate(*rec.x.last().unwrap_or(&0.0)).value,
            Err(e) => {
                detail.push_str(&format!("; simulation failed: {e}"));
                sum = f64::INFINITY;
                break;
            }
        }
    }
    let terminal = (-p.rho * horizon).exp() * sum / SPOT_PATHS as f64;
    detail.push_str(&format!("; simulated e^(-ρT) E φ(X_T) = {terminal:.3e}"));
    report(
        Condition::Transversality,
        bound.max(terminal.abs()),
        None,
        tol,
        detail,
    )
}
