//! Comparative statics: solve the band over a parameter grid.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Diffusion, ModelParams};
use crate::solver::{solve_band, solve_band_from, BandSolution, SolverConfig};

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    Kappa,
    Alpha,
    CPos,
    CNeg,
    LCost,
    UCost,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Kappa => "kappa",
            SweepParam::Alpha => "alpha",
            SweepParam::CPos => "c_pos",
            SweepParam::CNeg => "c_neg",
            SweepParam::LCost => "l_cost",
            SweepParam::UCost => "u_cost",
        }
    }

    pub fn apply(self, params: &ModelParams, value: f64) -> Result<ModelParams> {
        let mut p = *params;
        match self {
            SweepParam::Sigma => p.sigma = value,
            SweepParam::Kappa => p.kappa = value,
            SweepParam::Alpha => match p.diffusion {
                Diffusion::Abm { .. } => p.diffusion = Diffusion::Abm { alpha: value },
                Diffusion::Ou { .. } => {
                    return Err(Error::InvalidConfig(
                        "alpha can only be swept for arithmetic Brownian motion".into(),
                    ))
                }
            },
            SweepParam::CPos => p.c_pos = value,
            SweepParam::CNeg => p.c_neg = value,
            SweepParam::LCost => p.l_cost = value,
            SweepParam::UCost => p.u_cost = value,
        }
        Ok(p)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A variant of the base parameters computed at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub param: SweepParam,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ModelParams,
    pub axis: SweepParam,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub overlays: Vec<Overlay>,
    /// Fixed points at which to report `J`. By default each row uses
    /// `x_L, x_L/2, 0, x_U/2, x_U` of its own band.
    #[serde(default)]
    pub probes: Option<Vec<f64>>,
    /// Start each solve from the previous grid point's band.
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

impl SweepSpec {
    pub fn new(base: ModelParams, axis: SweepParam, grid: Vec<f64>) -> Self {
        Self {
            base,
            axis,
            grid,
            overlays: Vec::new(),
            probes: None,
            warm_start: true,
        }
    }

    pub fn with_overlays(mut self, param: SweepParam, values: &[f64]) -> Self {
        self.overlays = values
            .iter()
            .map(|&value| Overlay { param, value })
            .collect();
        self
    }

    /// `n` evenly spaced points from `lo` to `hi`.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "sweep grid has non-finite values".into(),
            ));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        self.axis.apply(&self.base, self.grid[0])?;
        for o in &self.overlays {
            o.param.apply(&self.base, o.value)?;
        }
        if let Some(p) = &self.probes {
            if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(
                    "probes must be a non-empty list of finite values".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn probe_names(&self) -> Vec<String> {
        match &self.probes {
            None => [
                "J_at_xL",
                "J_at_half_xL",
                "J_at_0",
                "J_at_half_xU",
                "J_at_xU",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            Some(xs) => xs.iter().map(|x| format!("J_at_{x}")).collect(),
        }
    }

    fn variants(&self) -> Vec<Option<Overlay>> {
        if self.overlays.is_empty() {
            vec![None]
        } else {
            self.overlays.iter().copied().map(Some).collect()
        }
    }
}

/// How a row's solve was started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Cold,
    Warm,
    /// Warm start failed; the row was solved from scratch.
    WarmThenCold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub overlay: Option<Overlay>,
    pub params: ModelParams,
    pub x_lower: f64,
    pub x_star: f64,
    pub x_upper: f64,
    /// `J` at the probe points, in the order of [`SweepSpec::probe_names`].
    pub probes: Vec<f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub start: Start,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn width(&self) -> f64 {
        self.x_upper - self.x_lower
    }
}

fn probe_values(spec: &SweepSpec, s: &BandSolution) -> Vec<f64> {
    let xs = match &spec.probes {
        Some(xs) => xs.clone(),
        None => vec![s.x_lower, 0.5 * s.x_lower, 0.0, 0.5 * s.x_upper, s.x_upper],
    };
    xs.into_iter().map(|x| s.evaluate(x).value).collect()
}

fn solve_row(
    spec: &SweepSpec,
    config: &SolverConfig,
    axis_value: f64,
    overlay: Option<Overlay>,
    guess: Option<[f64; 3]>,
) -> (SweepRow, Option<[f64; 3]>) {
    let mut row = SweepRow {
        axis_value,
        overlay,
        params: spec.base,
        x_lower: f64::NAN,
        x_star: f64::NAN,
        x_upper: f64::NAN,
        probes: vec![f64::NAN; spec.probe_names().len()],
        converged: false,
        residual_norm: f64::NAN,
        start: if guess.is_some() {
            Start::Warm
        } else {
            Start::Cold
        },
        error: None,
    };
    let params = spec
        .axis
        .apply(&spec.base, axis_value)
        .and_then(|p| match overlay {
            Some(o) => o.param.apply(&p, o.value),
            None => Ok(p),
        });
    let params = match params {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    row.params = params;
    let result = match guess {
        Some(g) => solve_band_from(&params, config, g),
        None => solve_band(&params, config),
    };
    match result {
        Ok(s) => {
            if guess.is_some() && !s.diagnostics.warm_started {
                row.start = Start::WarmThenCold;
            }
            row.x_lower = s.x_lower;
            row.x_star = s.x_star;
            row.x_upper = s.x_upper;
            row.probes = probe_values(spec, &s);
            row.residual_norm = s.residual_norm;
            row.converged = s.residual_norm <= config.newton_tol;
            (row, Some(s.barriers()))
        }
        Err(e) => {
            if guess.is_some() {
                row.start = Start::WarmThenCold;
            }
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

/// Solves one band per grid point and overlay. Rows come out grid-major,
/// overlays in the order given, regardless of how the work was scheduled.
/// Failed rows are kept with `converged = false` and an error message.
pub fn run_sweep(spec: &SweepSpec, config: &SolverConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    config.validate()?;
    let variants = spec.variants();
    let columns: Vec<Vec<SweepRow>> = if spec.warm_start {
        variants
            .par_iter()
            .map(|&overlay| {
                let mut guess = None;
                spec.grid
                    .iter()
                    .map(|&v| {
                        let (row, next) = solve_row(spec, config, v, overlay, guess);
                        if next.is_some() {
                            guess = next;
                        }
                        row
                    })
                    .collect()
            })
            .collect()
    } else {
        variants
            .par_iter()
            .map(|&overlay| {
                spec.grid
                    .par_iter()
                    .map(|&v| solve_row(spec, config, v, overlay, None).0)
                    .collect()
            })
            .collect()
    };
    let mut rows = Vec::with_capacity(spec.grid.len() * variants.len());
    for i in 0..spec.grid.len() {
        for col in &columns {
            rows.push(col[i].clone());
        }
    }
    Ok(rows)
}

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes rows as CSV with 9 significant digits.
pub fn write_csv<W: Write>(spec: &SweepSpec, rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    let mut header = vec![
        "axis_value",
        "sigma",
        "kappa",
        "alpha_or_eta",
        "c_neg",
        "c_pos",
        "l_cost",
        "u_cost",
        "x_lower",
        "x_star",
        "x_upper",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend(spec.probe_names());
    header.push("converged".into());
    header.push("residual_norm".into());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let p = &r.params;
        let alpha_or_eta = match p.diffusion {
            Diffusion::Abm { alpha } => alpha,
            Diffusion::Ou { eta } => eta,
        };
        let mut fields: Vec<String> = [
            r.axis_value,
            p.sigma,
            p.kappa,
            alpha_or_eta,
            p.c_neg,
            p.c_pos,
            p.l_cost,
            p.u_cost,
            r.x_lower,
            r.x_star,
            r.x_upper,
        ]
        .into_iter()
        .chain(r.probes.iter().copied())
        .map(sci)
        .collect();
        fields.push(r.converged.to_string());
        fields.push(sci(r.residual_norm));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
