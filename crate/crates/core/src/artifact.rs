//! Saved solver output: grid description, values, policy and report.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::lifted::{RandomizedFeedbackPolicy, ValueFunction};
use crate::model::MeanFieldModel;
use crate::solver::{SolveReport, Solution};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverArtifact {
    pub format_version: u32,
    pub tool_version: String,
    pub model_name: String,
    /// SHA-256 of the model file, when it came from one.
    pub model_sha256: Option<String>,
    pub discount: f64,
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    /// Grid resolution `n_η`; nodes are the lattice in lexicographic order.
    pub grid_steps: usize,
    pub values: Vec<f64>,
    /// `policy[node][x]`, a distribution on the actions.
    pub policy: Vec<Vec<Vec<f64>>>,
    pub choice: Vec<usize>,
    pub report: SolveReport,
}

impl SolverArtifact {
    pub fn from_solution(model: &MeanFieldModel, sol: &Solution, model_sha256: Option<String>) -> Self {
        SolverArtifact {
            format_version: ARTIFACT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model_name: model.name().to_string(),
            model_sha256,
            discount: model.discount(),
            state_labels: model.state_space().labels().to_vec(),
            action_labels: model.action_space().labels().to_vec(),
            grid_steps: sol.values.grid.steps(),
            values: sol.values.values.clone(),
            policy: sol.policy.rows.clone(),
            choice: sol.choice.clone(),
            report: sol.report.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: SolverArtifact =
            serde_json::from_str(text).map_err(|e| Error::Artifact(format!("cannot parse solver artifact: {e}")))?;
        if a.format_version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "artifact format {} is not supported (expected {ARTIFACT_VERSION})",
                a.format_version
            )));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the grid after checking that the artifact fits `model`.
    pub fn grid_for(&self, model: &MeanFieldModel) -> Result<Arc<SimplexGrid>> {
        if self.state_labels != model.state_space().labels() || self.action_labels != model.action_space().labels() {
            return Err(Error::Artifact("artifact state/action labels do not match the model".into()));
        }
        if (self.discount - model.discount()).abs() > 0.0 {
            return Err(Error::Artifact(format!(
                "artifact was solved with discount {} but the model has {}",
                self.discount,
                model.discount()
            )));
        }
        let grid = SimplexGrid::build(model.state_space().clone(), self.grid_steps)?;
        if grid.len() != self.values.len() || grid.len() != self.policy.len() {
            return Err(Error::Artifact(format!(
                "artifact has {} values for a grid of {} nodes",
                self.values.len(),
                grid.len()
            )));
        }
        Ok(Arc::new(grid))
    }

    pub fn policy(&self, model: &MeanFieldModel) -> Result<RandomizedFeedbackPolicy> {
        let grid = self.grid_for(model)?;
        RandomizedFeedbackPolicy::new(grid, self.policy.clone(), self.report.policy_suboptimality)
            .map_err(|e| Error::Artifact(format!("artifact policy is invalid: {e}")))
    }

    pub fn value_function(&self, model: &MeanFieldModel) -> Result<ValueFunction> {
        ValueFunction::new(self.grid_for(model)?, self.values.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example, ExampleOptions};
    use crate::solver::{solve, Method, SolverConfig};

    #[test]
    fn round_trip_is_exact() {
        let (m, _) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = solve(&m, &SolverConfig::default(), Method::Value).unwrap();
        let a = SolverArtifact::from_solution(&m, &sol, Some("abc".into()));
        let text = a.to_json().unwrap();
        let b = SolverArtifact::from_json(&text).unwrap();
        assert_eq!(b.values, sol.values.values);
        assert_eq!(b.to_json().unwrap(), text);
        let p = b.policy(&m).unwrap();
        assert_eq!(p.rows, sol.policy.rows);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let (m, _) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = solve(&m, &SolverConfig { n_eta: 4, ..SolverConfig::default() }, Method::Value).unwrap();
        let a = SolverArtifact::from_solution(&m, &sol, None);
        let (other, _) = builtin_example("ex4_4", &ExampleOptions::default()).unwrap();
        assert!(matches!(a.policy(&other), Err(Error::Artifact(_))));
        let m2 = m.with_discount(0.7).unwrap();
        assert!(matches!(a.policy(&m2), Err(Error::Artifact(_))));
        let mut bad = a.clone();
        bad.format_version = 99;
        assert!(SolverArtifact::from_json(&bad.to_json().unwrap()).is_err());
    }
}
