//! Problem configuration files (TOML) and the builtin problems.
//!
//! A config either describes a problem fully or names a builtin with
//! `builtin = "exampleE"` and overrides selected sections.

use crate::closed_form::ClosedForm;
use crate::control::{
    ControlProblem, ControlSet, CostFamily, GrowthConstants, Piece, TerminalCost, TerminalMode,
    VelocityFamily,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stratification::{Hyperplane, SnapTolerance, Stratification};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const BUILTIN_NAMES: [&str; 5] = ["exampleA", "exampleB", "exampleE", "exampleF", "ball-eikonal"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snap_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangency_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<String>,
    #[serde(default, rename = "hyperplane", skip_serializing_if = "Option::is_none")]
    pub hyperplanes: Option<Vec<HyperplaneConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalConfig>,
    #[serde(default, rename = "piece", skip_serializing_if = "Vec::is_empty")]
    pub pieces: Vec<PieceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperplaneConfig {
    pub axis: usize,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlsConfig {
    Ball { radius: f64, count: usize },
    Interval { lo: f64, hi: f64, count: usize },
    Finite { points: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub c_f: f64,
    pub c_l: f64,
    pub lambda_l: f64,
    pub lambda_phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalConfig {
    Constant { value: f64 },
    AbsX1,
    LinearX1,
    IndicatorPositiveX1,
    Table { x1: Vec<f64>, values: Vec<f64>, mode: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    /// Sign signature over the hyperplanes, sorted by (axis, offset).
    pub signature: Vec<i8>,
    pub velocity: VelocityConfig,
    pub cost: CostConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityConfig {
    Constant { value: Vec<f64> },
    ScaledBall { scale: f64 },
    Affine { state: Vec<Vec<f64>>, control: Vec<Vec<f64>>, offset: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostConfig {
    Constant { value: f64 },
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: Option<usize>,
    pub timesteps: Option<usize>,
    #[serde(rename = "box")]
    pub bounds: Option<[f64; 2]>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    /// Lipschitz estimate of the interface dynamics for tracking bounds.
    pub lipschitz_g: Option<f64>,
}

impl SolverConfig {
    fn merge(&mut self, o: SolverConfig) {
        self.grid = o.grid.or(self.grid);
        self.timesteps = o.timesteps.or(self.timesteps);
        self.bounds = o.bounds.or(self.bounds);
        self.mode = o.mode.or(self.mode.take());
        self.seed = o.seed.or(self.seed);
        self.lipschitz_g = o.lipschitz_g.or(self.lipschitz_g);
    }
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: ProblemConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        raw.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        builtin_config(name)
    }

    /// Applies this config on top of its builtin base, if any.
    fn resolve(self) -> Result<Self> {
        let Some(base_name) = self.builtin.clone() else {
            return Ok(self);
        };
        let mut base = builtin_config(&base_name)?;
        base.builtin = Some(base_name);
        base.name = self.name.or(base.name);
        base.dim = self.dim.or(base.dim);
        base.horizon = self.horizon.or(base.horizon);
        base.snap_tolerance = self.snap_tolerance.or(base.snap_tolerance);
        base.tangency_eps = self.tangency_eps.or(base.tangency_eps);
        base.closed_form = self.closed_form.or(base.closed_form);
        if self.hyperplanes.is_some() {
            base.hyperplanes = self.hyperplanes;
            base.pieces.clear();
        }
        base.controls = self.controls.or(base.controls);
        base.growth = self.growth.or(base.growth);
        base.terminal = self.terminal.or(base.terminal);
        for p in self.pieces {
            match base.pieces.iter_mut().find(|q| q.signature == p.signature) {
                Some(q) => *q = p,
                None => base.pieces.push(p),
            }
        }
        match (&mut base.solver, self.solver) {
            (Some(b), Some(o)) => b.merge(o),
            (b @ None, o) => *b = o,
            _ => {}
        }
        Ok(base)
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .or_else(|| self.builtin.clone())
            .unwrap_or_else(|| "problem".into())
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_default()
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.closed_form.as_deref().and_then(ClosedForm::from_name)
    }

    pub fn stratification<T: Scalar>(&self) -> Result<Stratification<T>> {
        let dim = self.dim.ok_or_else(|| Error::ConfigParse("missing `dim`".into()))?;
        let planes = self
            .hyperplanes
            .iter()
            .flatten()
            .map(|h| Hyperplane::new(h.axis, T::lit(h.offset)))
            .collect();
        match self.snap_tolerance {
            Some(tol) => Stratification::with_snap(dim, planes, SnapTolerance::Relative(T::lit(tol))),
            None => Stratification::new(dim, planes),
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<ControlProblem<T>> {
        let strat = self.stratification::<T>()?;
        let dim = strat.dim();
        let controls = match self.controls.as_ref().ok_or_else(|| missing("controls"))? {
            ControlsConfig::Ball { radius, count } => ControlSet::ball(dim, T::lit(*radius), *count)?,
            ControlsConfig::Interval { lo, hi, count } => ControlSet::interval(T::lit(*lo), T::lit(*hi), *count)?,
            ControlsConfig::Finite { points } => ControlSet::finite(lit_rows(points))?,
        };
        let g = self.growth.as_ref().ok_or_else(|| missing("growth"))?;
        let growth = GrowthConstants {
            c_f: T::lit(g.c_f),
            c_l: T::lit(g.c_l),
            lambda_l: T::lit(g.lambda_l),
            lambda_phi: T::lit(g.lambda_phi),
        };
        let (terminal, mode) = match self.terminal.as_ref().ok_or_else(|| missing("terminal"))? {
            TerminalConfig::Constant { value } => (TerminalCost::Constant(T::lit(*value)), TerminalMode::Lipschitz),
            TerminalConfig::AbsX1 => (TerminalCost::AbsX1, TerminalMode::Lipschitz),
            TerminalConfig::LinearX1 => (TerminalCost::LinearX1, TerminalMode::Lipschitz),
            TerminalConfig::IndicatorPositiveX1 => (TerminalCost::IndicatorPositiveX1, TerminalMode::Lsc),
            TerminalConfig::Table { x1, values, mode } => {
                if x1.len() != values.len() || x1.is_empty() || x1.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::ConfigParse(
                        "terminal table needs increasing knots and matching values".into(),
                    ));
                }
                let m = match mode.as_deref() {
                    None | Some("lipschitz") => TerminalMode::Lipschitz,
                    Some("lsc") => TerminalMode::Lsc,
                    Some(other) => return Err(Error::ConfigParse(format!("unknown terminal mode `{other}`"))),
                };
                (
                    TerminalCost::Table {
                        x1: x1.iter().map(|&v| T::lit(v)).collect(),
                        values: values.iter().map(|&v| T::lit(v)).collect(),
                    },
                    m,
                )
            }
        };
        let mut pieces: Vec<Option<Piece<T>>> = vec![None; strat.len()];
        for pc in &self.pieces {
            let id = strat.stratum_by_signature(&pc.signature).ok_or_else(|| {
                Error::ConfigParse(format!("piece signature {:?} matches no stratum", pc.signature))
            })?;
            let velocity = match &pc.velocity {
                VelocityConfig::Constant { value } => VelocityFamily::Constant(lit_vec(value)),
                VelocityConfig::ScaledBall { scale } => VelocityFamily::ScaledBall { scale: T::lit(*scale) },
                VelocityConfig::Affine { state, control, offset } => VelocityFamily::Affine {
                    state: lit_rows(state),
                    control: lit_rows(control),
                    offset: lit_vec(offset),
                },
            };
            let cost = match &pc.cost {
                CostConfig::Constant { value } => CostFamily::Constant(T::lit(*value)),
                CostConfig::Polynomial { coeffs } => CostFamily::Polynomial(lit_vec(coeffs)),
            };
            pieces[id] = Some(Piece::new(velocity, cost));
        }
        let horizon = T::lit(self.horizon.ok_or_else(|| missing("horizon"))?);
        let mut p = ControlProblem::new(
            self.display_name(),
            strat,
            controls,
            pieces,
            terminal,
            mode,
            growth,
            horizon,
        )?;
        p.require_all_pieces()?;
        if let Some(eps) = self.tangency_eps {
            p.tangency_eps = T::lit(eps);
        }
        Ok(p)
    }
}

fn missing(section: &str) -> Error {
    Error::ConfigParse(format!("missing `{section}` section"))
}

fn lit_vec<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn lit_rows<T: Scalar>(rows: &[Vec<f64>]) -> Vec<Vec<T>> {
    rows.iter().map(|r| lit_vec(r)).collect()
}

fn piece(signature: &[i8], velocity: VelocityConfig, cost: f64) -> PieceConfig {
    PieceConfig {
        signature: signature.to_vec(),
        velocity,
        cost: CostConfig::Constant { value: cost },
    }
}

fn growth(c_f: f64) -> Option<GrowthConfig> {
    Some(GrowthConfig {
        c_f,
        c_l: 1.0,
        lambda_l: 1.0,
        lambda_phi: 1.0,
    })
}

fn solver(grid: usize, timesteps: usize, lo: f64, hi: f64) -> Option<SolverConfig> {
    Some(SolverConfig {
        grid: Some(grid),
        timesteps: Some(timesteps),
        bounds: Some([lo, hi]),
        mode: Some("auto".into()),
        seed: Some(0),
        lipschitz_g: None,
    })
}

fn builtin_config(name: &str) -> Result<ProblemConfig> {
    use VelocityConfig::*;
    let gamma = Some(vec![HyperplaneConfig { axis: 0, offset: 0.0 }]);
    let base = ProblemConfig {
        builtin: None,
        name: Some(name.to_string()),
        horizon: Some(1.0),
        closed_form: Some(name.to_string()),
        hyperplanes: gamma,
        ..Default::default()
    };
    let cfg = match name {
        // Two half-planes with speeds 1 and 2, linear terminal cost.
        "exampleE" => ProblemConfig {
            dim: Some(2),
            controls: Some(ControlsConfig::Ball { radius: 1.0, count: 32 }),
            growth: growth(2.0),
            terminal: Some(TerminalConfig::LinearX1),
            pieces: vec![
                piece(&[-1], ScaledBall { scale: 1.0 }, 0.0),
                piece(&[0], ScaledBall { scale: 2.0 }, 0.0),
                piece(&[1], ScaledBall { scale: 2.0 }, 0.0),
            ],
            solver: solver(161, 200, -2.0, 2.0),
            ..base
        },
        // Constant fields pointing away from the interface, horizontal
        // controlled motion on it.
        "exampleA" => ProblemConfig {
            dim: Some(2),
            controls: Some(ControlsConfig::Interval { lo: -1.0, hi: 1.0, count: 21 }),
            growth: growth(1.0),
            terminal: Some(TerminalConfig::AbsX1),
            pieces: vec![
                piece(&[-1], Constant { value: vec![-1.0, 0.0] }, 0.0),
                piece(
                    &[0],
                    Affine {
                        state: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                        control: vec![vec![1.0], vec![0.0]],
                        offset: vec![0.0, 0.0],
                    },
                    0.0,
                ),
                piece(&[1], Constant { value: vec![1.0, 0.0] }, 0.0),
            ],
            solver: solver(161, 200, -2.0, 2.0),
            ..base
        },
        // Single forced rightward velocity on the line.
        "exampleB" | "f-equals-one" => ProblemConfig {
            dim: Some(1),
            closed_form: Some("exampleB".into()),
            controls: Some(ControlsConfig::Finite { points: vec![vec![0.0]] }),
            growth: growth(1.0),
            terminal: Some(TerminalConfig::IndicatorPositiveX1),
            pieces: vec![
                piece(&[-1], Constant { value: vec![1.0] }, 0.0),
                piece(&[0], Constant { value: vec![1.0] }, 0.0),
                piece(&[1], Constant { value: vec![1.0] }, 0.0),
            ],
            solver: solver(401, 100, -2.0, 2.0),
            ..base
        },
        // Bounded speed on the line with a discontinuous terminal cost.
        "exampleF" => ProblemConfig {
            dim: Some(1),
            controls: Some(ControlsConfig::Interval { lo: -1.0, hi: 1.0, count: 21 }),
            growth: growth(1.0),
            terminal: Some(TerminalConfig::IndicatorPositiveX1),
            pieces: vec![
                piece(&[-1], ScaledBall { scale: 1.0 }, 0.0),
                piece(&[0], ScaledBall { scale: 1.0 }, 0.0),
                piece(&[1], ScaledBall { scale: 1.0 }, 0.0),
            ],
            solver: solver(401, 100, -2.0, 2.0),
            ..base
        },
        "ball-eikonal" => ProblemConfig {
            dim: Some(2),
            controls: Some(ControlsConfig::Ball { radius: 1.0, count: 32 }),
            growth: growth(1.0),
            terminal: Some(TerminalConfig::AbsX1),
            pieces: vec![
                piece(&[-1], ScaledBall { scale: 1.0 }, 0.0),
                piece(&[0], ScaledBall { scale: 1.0 }, 0.0),
                piece(&[1], ScaledBall { scale: 1.0 }, 0.0),
            ],
            solver: solver(161, 200, -2.0, 2.0),
            ..base
        },
        other => {
            return Err(Error::ConfigParse(format!(
                "unknown builtin `{other}` (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}
