//! Declarative model files (JSON).
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "name": "ex4_1",
//!   "state_space": { "points": [-1, 1], "metric": "discrete" },
//!   "action_space": { "points": [-1, 1], "metric": "discrete" },
//!   "noise": { "idiosyncratic": { "points": [-1, 1], "weights": [0.5, 0.5] } },
//!   "references": { "target": { "on": "state", "weights": [0.5, 0.5] } },
//!   "transition": { "kind": "expr", "expr": "a * x" },
//!   "reward": { "expr": "-w_state(target)", "bound": 0.5 },
//!   "discount": 0.5,
//!   "initial": { "law": { "dirac": 1 }, "info_mode": "trivial" }
//! }
//! ```
//!
//! Points are numbers or strings. Numeric points are their own embedding;
//! string points need an explicit `embed` array for expression transitions
//! and couplings. `metric` is `"discrete"`, `"euclidean"` or
//! `{"matrix": [[...]]}`. The common noise defaults to a single point `0`.
//! A table transition gives `next[x][a][e][e0]` as state indices.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{format_real, DiscreteMeasure, FiniteMetricSpace};

use super::dynamics::{ExprDynamics, Reference, TransitionSource};
use super::expr::ReferenceSpace;
use super::{InfoMode, InitialCondition, MeanFieldModel, ModelSpaces};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Num(f64),
    Text(String),
}

impl Point {
    fn label(&self) -> String {
        match self {
            Point::Num(v) => format_real(*v),
            Point::Text(s) => s.clone(),
        }
    }

    fn value(&self) -> Option<f64> {
        match self {
            Point::Num(v) => Some(*v),
            Point::Text(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Named(String),
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub points: Vec<Point>,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub idiosyncratic: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common: Option<NoiseSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceOn {
    State,
    Action,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub on: ReferenceOn,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TransitionSpec {
    Expr { expr: String },
    Table { next: Vec<Vec<Vec<Vec<usize>>>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub expr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Named(String),
    Dirac { dirac: Point },
    Weights { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub law: LawSpec,
    pub info_mode: InfoMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub state_space: SpaceSpec,
    pub action_space: SpaceSpec,
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub references: BTreeMap<String, ReferenceSpec>,
    pub transition: TransitionSpec,
    pub reward: RewardSpec,
    pub discount: f64,
    pub initial: InitialSpec,
}

fn embedding_of(points: &[Point], explicit: &Option<Vec<f64>>, field: &str) -> Result<Option<Vec<f64>>> {
    if let Some(e) = explicit {
        if e.len() != points.len() {
            return Err(Error::Model(format!("{field}.embed has {} entries for {} points", e.len(), points.len())));
        }
        return Ok(Some(e.clone()));
    }
    Ok(points.iter().map(Point::value).collect())
}

fn build_space(spec: &SpaceSpec, field: &str) -> Result<FiniteMetricSpace> {
    let labels: Vec<String> = spec.points.iter().map(Point::label).collect();
    let embed = embedding_of(&spec.points, &spec.embed, field)?;
    let wrap = |e: Error| Error::Model(format!("{field}: {e}"));
    match &spec.metric {
        MetricSpec::Named(m) if m == "discrete" => FiniteMetricSpace::discrete(labels, embed).map_err(wrap),
        MetricSpec::Named(m) if m == "euclidean" => {
            let values = embed.ok_or_else(|| {
                Error::Model(format!("{field}: the euclidean metric needs numeric points or `embed`"))
            })?;
            let mut s = FiniteMetricSpace::euclidean(&values).map_err(wrap)?;
            if spec.points.iter().any(|p| matches!(p, Point::Text(_))) {
                s = FiniteMetricSpace::from_matrix(
                    labels,
                    (0..values.len()).map(|i| (0..values.len()).map(|j| s.dist(i, j)).collect()).collect(),
                    Some(values),
                )
                .map_err(wrap)?;
            }
            Ok(s)
        }
        MetricSpec::Named(m) => Err(Error::Model(format!(
            "{field}.metric: unknown metric `{m}` (expected \"discrete\", \"euclidean\" or {{\"matrix\": ...}})"
        ))),
        MetricSpec::Matrix { matrix } => FiniteMetricSpace::from_matrix(labels, matrix.clone(), embed).map_err(wrap),
    }
}

fn build_noise(spec: &NoiseSpec, field: &str) -> Result<DiscreteMeasure> {
    if spec.weights.len() != spec.points.len() {
        return Err(Error::Model(format!(
            "{field}: {} weights for {} points",
            spec.weights.len(),
            spec.points.len()
        )));
    }
    let labels = spec.points.iter().map(Point::label).collect();
    let embed = embedding_of(&spec.points, &None, field)?;
    let space = FiniteMetricSpace::discrete(labels, embed).map_err(|e| Error::Model(format!("{field}: {e}")))?;
    DiscreteMeasure::new(Arc::new(space), spec.weights.clone()).map_err(|e| Error::Model(format!("{field}.weights: {e}")))
}

fn find_point(space: &FiniteMetricSpace, p: &Point) -> Option<usize> {
    match p {
        Point::Num(v) => space
            .embedding()
            .and_then(|e| e.iter().position(|w| w == v))
            .or_else(|| space.index_of(&format_real(*v))),
        Point::Text(s) => space.index_of(s),
    }
}

impl ModelConfig {
    /// Parses a model document; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| Error::Model(format!("parse error: {e}")))?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                cfg.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Model(m) => Error::Model(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes") + "\n"
    }

    /// Validates the document and compiles it into a model.
    pub fn build(&self) -> Result<(MeanFieldModel, InitialCondition)> {
        let state = Arc::new(build_space(&self.state_space, "state_space")?);
        let action = Arc::new(build_space(&self.action_space, "action_space")?);
        let idio = build_noise(&self.noise.idiosyncratic, "noise.idiosyncratic")?;
        let common = match &self.noise.common {
            Some(c) => build_noise(c, "noise.common")?,
            None => build_noise(&NoiseSpec { points: vec![Point::Num(0.0)], weights: vec![1.0] }, "noise.common")?,
        };
        let spaces = ModelSpaces::new(state.clone(), action, idio, common);

        let references = self
            .references
            .iter()
            .map(|(name, r)| Reference {
                name: name.clone(),
                space: match r.on {
                    ReferenceOn::State => ReferenceSpace::State,
                    ReferenceOn::Action => ReferenceSpace::Action,
                    ReferenceOn::Joint => ReferenceSpace::Joint,
                },
                weights: r.weights.clone(),
            })
            .collect::<Vec<_>>();
        for r in &references {
            let s = r.weights.iter().sum::<f64>();
            if r.weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Model(format!("references.{}: weights must be nonnegative and sum to 1", r.name)));
            }
        }

        let transition = match &self.transition {
            TransitionSpec::Expr { expr } => TransitionSource::Expr(expr),
            TransitionSpec::Table { next } => TransitionSource::Table(self.flatten_table(next, &spaces)?),
        };
        let dynamics = ExprDynamics::compile(&spaces, transition, &self.reward.expr, references)?;
        let model = MeanFieldModel::new(self.name.clone(), spaces, Arc::new(dynamics), self.discount, self.reward.bound)?;

        let law = match &self.initial.law {
            LawSpec::Named(n) if n == "uniform" => DiscreteMeasure::uniform(state.clone()),
            LawSpec::Named(n) => {
                return Err(Error::Model(format!("initial.law: unknown law `{n}` (expected \"uniform\")")));
            }
            LawSpec::Dirac { dirac } => {
                let i = find_point(&state, dirac)
                    .ok_or_else(|| Error::Model(format!("initial.law.dirac: `{}` is not a state", dirac.label())))?;
                DiscreteMeasure::dirac(state.clone(), i)
            }
            LawSpec::Weights { weights } => DiscreteMeasure::new(state.clone(), weights.clone())
                .map_err(|e| Error::Model(format!("initial.law.weights: {e}")))?,
        };
        Ok((model, InitialCondition { law, info_mode: self.initial.info_mode }))
    }

    fn flatten_table(&self, next: &[Vec<Vec<Vec<usize>>>], spaces: &ModelSpaces) -> Result<Vec<usize>> {
        let dims = [spaces.n_states(), spaces.n_actions(), spaces.n_idio(), spaces.n_common()];
        let bad = || Error::Model(format!("transition.next must have shape {dims:?}"));
        if next.len() != dims[0] {
            return Err(bad());
        }
        let mut flat = Vec::with_capacity(dims.iter().product());
        for by_a in next {
            if by_a.len() != dims[1] {
                return Err(bad());
            }
            for by_e in by_a {
                if by_e.len() != dims[2] {
                    return Err(bad());
                }
                for by_e0 in by_e {
                    if by_e0.len() != dims[3] {
                        return Err(bad());
                    }
                    for &s in by_e0 {
                        if s >= dims[0] {
                            return Err(Error::Model(format!("transition.next: state index {s} out of range")));
                        }
                        flat.push(s);
                    }
                }
            }
        }
        Ok(flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX: &str = r#"{
      "format_version": 1,
      "name": "toy",
      "state_space": { "points": [-1, 1], "metric": "discrete" },
      "action_space": { "points": [-1, 1], "metric": "discrete" },
      "noise": { "idiosyncratic": { "points": [-1, 1], "weights": [0.5, 0.5] } },
      "references": { "target": { "on": "state", "weights": [0.5, 0.5] } },
      "transition": { "kind": "expr", "expr": "a * x" },
      "reward": { "expr": "-w_state(target)", "bound": 0.5 },
      "discount": 0.5,
      "initial": { "law": { "dirac": 1 }, "info_mode": "trivial" }
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ModelConfig::from_json(EX).unwrap();
        let (m, init) = cfg.build().unwrap();
        assert_eq!(m.spaces().n_states(), 2);
        assert_eq!(init.law.weights(), &[0.0, 1.0]);
        assert_eq!(init.info_mode, InfoMode::Trivial);
        assert_eq!(m.reward_bound(), 0.5);
        let back = ModelConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn table_transition_matches_expression() {
        let mut cfg = ModelConfig::from_json(EX).unwrap();
        // a * x on {-1, 1}: index 1 iff a == x.
        let next = (0..2).map(|x| (0..2).map(|a| vec![vec![usize::from(x == a)]; 2]).collect()).collect();
        cfg.transition = TransitionSpec::Table { next };
        let (tab, _) = cfg.build().unwrap();
        let (expr, _) = ModelConfig::from_json(EX).unwrap().build().unwrap();
        let nu = DiscreteMeasure::uniform(expr.product().joint().clone());
        assert_eq!(tab.step_tables(&nu), expr.step_tables(&nu));
    }

    #[test]
    fn diagnostics() {
        let broken = EX.replace("\"discount\": 0.5", "\"discount\": 0.5,");
        let err = ModelConfig::from_json(&broken).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");

        let typo = EX.replace("\"discount\"", "\"discont\"");
        assert!(ModelConfig::from_json(&typo).is_err());

        let bad_expr = EX.replace("a * x", "a * * x");
        let err = ModelConfig::from_json(&bad_expr).unwrap().build().unwrap_err().to_string();
        assert!(err.contains("transition.expr"), "{err}");

        let low_bound = EX.replace("\"bound\": 0.5", "\"bound\": 0.1");
        assert!(ModelConfig::from_json(&low_bound).unwrap().build().is_err());

        let escaping = EX.replace("a * x", "if(x > 0, 1, -1) + 0.0").replace("-w_state(target)", "x / 0");
        assert!(ModelConfig::from_json(&escaping).unwrap().build().is_err());

        let beta = EX.replace("\"discount\": 0.5", "\"discount\": 1.0");
        assert!(ModelConfig::from_json(&beta).unwrap().build().is_err());
    }
}
