use crate::error::{Error, Result};
use crate::spaces::DiscreteMeasure;
use crate::transport::distance_weights;

use super::expr::{self, Env, Feature, Program, ReferenceSpace, Resolver};
use super::{Dynamics, ModelSpaces, StepTables};

#[derive(Clone, Debug)]
pub struct Reference {
    pub name: String,
    pub space: ReferenceSpace,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum TransitionRule {
    /// Real-valued expression, projected onto the nearest state.
    Expr(Program),
    /// `next[spaces.next_index(x, a, e, e0)]`, independent of `ν`.
    Table(Vec<usize>),
}

/// Dynamics defined by the model-file expression language.
#[derive(Clone, Debug)]
pub struct ExprDynamics {
    transition: TransitionRule,
    reward: Program,
    references: Vec<Reference>,
    state_values: Vec<f64>,
    action_values: Vec<f64>,
    idio_values: Vec<f64>,
    common_values: Vec<f64>,
}

struct SpaceResolver<'a> {
    references: &'a [Reference],
    state_values: &'a [f64],
    action_values: &'a [f64],
}

impl Resolver for SpaceResolver<'_> {
    fn reference(&self, name: &str) -> Option<(ReferenceSpace, usize)> {
        self.references.iter().position(|r| r.name == name).map(|i| (self.references[i].space, i))
    }

    fn state_point(&self, value: f64) -> Option<usize> {
        self.state_values.iter().position(|v| *v == value)
    }

    fn action_point(&self, value: f64) -> Option<usize> {
        self.action_values.iter().position(|v| *v == value)
    }
}

fn project_value(spaces: &ModelSpaces, v: f64) -> usize {
    if v.is_finite() {
        spaces.state.nearest_embedded(v).unwrap_or(usize::MAX)
    } else {
        usize::MAX
    }
}

/// Embedded values, or point indices when a space has no embedding.
fn values_of(space: &crate::spaces::FiniteMetricSpace) -> Vec<f64> {
    match space.embedding() {
        Some(e) => e.to_vec(),
        None => (0..space.len()).map(|i| i as f64).collect(),
    }
}

pub enum TransitionSource<'a> {
    Expr(&'a str),
    Table(Vec<usize>),
}

impl ExprDynamics {
    pub fn compile(
        spaces: &ModelSpaces,
        transition: TransitionSource<'_>,
        reward: &str,
        references: Vec<Reference>,
    ) -> Result<Self> {
        for r in &references {
            let n = match r.space {
                ReferenceSpace::State => spaces.n_states(),
                ReferenceSpace::Action => spaces.n_actions(),
                ReferenceSpace::Joint => spaces.product.joint().len(),
            };
            if r.weights.len() != n {
                return Err(Error::Model(format!("reference `{}` has {} weights, expected {n}", r.name, r.weights.len())));
            }
        }
        let state_values = values_of(&spaces.state);
        let action_values = values_of(&spaces.action);
        let resolver = SpaceResolver { references: &references, state_values: &state_values, action_values: &action_values };
        let transition = match transition {
            TransitionSource::Expr(src) => {
                if spaces.state.embedding().is_none() {
                    return Err(Error::Model("expression transitions need a real embedding of the state space".into()));
                }
                TransitionRule::Expr(expr::compile(src, "transition.expr", &resolver)?)
            }
            TransitionSource::Table(next) => {
                let want = spaces.n_states() * spaces.n_actions() * spaces.n_idio() * spaces.n_common();
                if next.len() != want {
                    return Err(Error::Model(format!("transition table has {} entries, expected {want}", next.len())));
                }
                TransitionRule::Table(next)
            }
        };
        let reward = expr::compile(reward, "reward.expr", &resolver)?;
        if reward.uses_noise {
            return Err(Error::Model("reward.expr: the reward cannot depend on noise".into()));
        }
        Ok(ExprDynamics {
            transition,
            reward,
            references,
            state_values,
            action_values,
            idio_values: values_of(spaces.idio_noise.space()),
            common_values: values_of(spaces.common_noise.space()),
        })
    }

    fn features(&self, spaces: &ModelSpaces, program: &Program, nu: &[f64]) -> Vec<f64> {
        let (nx, na) = (spaces.n_states(), spaces.n_actions());
        let state_marginal = || (0..nx).map(|x| (0..na).map(|a| nu[x * na + a]).sum()).collect::<Vec<f64>>();
        let action_marginal = || (0..na).map(|a| (0..nx).map(|x| nu[x * na + a]).sum()).collect::<Vec<f64>>();
        program
            .features
            .iter()
            .map(|f| match f {
                Feature::MeanX => (0..nx * na).map(|p| nu[p] * self.state_values[p / na]).sum(),
                Feature::MeanA => (0..nx * na).map(|p| nu[p] * self.action_values[p % na]).sum(),
                Feature::MeanXA => (0..nx * na).map(|p| nu[p] * self.state_values[p / na] * self.action_values[p % na]).sum(),
                Feature::MassX(i) => (0..na).map(|a| nu[i * na + a]).sum(),
                Feature::MassA(j) => (0..nx).map(|x| nu[x * na + j]).sum(),
                Feature::WState(r) => distance_weights(&spaces.state, &state_marginal(), &self.references[*r].weights),
                Feature::WAction(r) => distance_weights(&spaces.action, &action_marginal(), &self.references[*r].weights),
                Feature::WJoint(r) => distance_weights(spaces.product.joint(), nu, &self.references[*r].weights),
            })
            .collect()
    }

    fn env<'f>(&self, x: usize, a: usize, e: usize, e0: usize, features: &'f [f64]) -> Env<'f> {
        Env { x: self.state_values[x], a: self.action_values[a], e: self.idio_values[e], e0: self.common_values[e0], features }
    }
}

impl Dynamics for ExprDynamics {
    fn transition(&self, spaces: &ModelSpaces, x: usize, a: usize, nu: &DiscreteMeasure, e: usize, e0: usize) -> usize {
        match &self.transition {
            TransitionRule::Table(next) => next[spaces.next_index(x, a, e, e0)],
            TransitionRule::Expr(p) => {
                let feats = self.features(spaces, p, nu.weights());
                let v = p.eval(&self.env(x, a, e, e0, &feats));
                project_value(spaces, v)
            }
        }
    }

    fn reward(&self, spaces: &ModelSpaces, x: usize, a: usize, nu: &DiscreteMeasure) -> f64 {
        let feats = self.features(spaces, &self.reward, nu.weights());
        self.reward.eval(&self.env(x, a, 0, 0, &feats))
    }

    fn step_tables(&self, spaces: &ModelSpaces, nu: &DiscreteMeasure) -> StepTables {
        let (nx, na, ne, ne0) = (spaces.n_states(), spaces.n_actions(), spaces.n_idio(), spaces.n_common());
        let w = nu.weights();
        let rf = self.features(spaces, &self.reward, w);
        let mut reward = Vec::with_capacity(nx * na);
        for x in 0..nx {
            for a in 0..na {
                reward.push(self.reward.eval(&self.env(x, a, 0, 0, &rf)));
            }
        }
        let next = match &self.transition {
            TransitionRule::Table(next) => next.clone(),
            TransitionRule::Expr(p) => {
                let tf = self.features(spaces, p, w);
                let mut next = Vec::with_capacity(nx * na * ne * ne0);
                for x in 0..nx {
                    for a in 0..na {
                        for e in 0..ne {
                            for e0 in 0..ne0 {
                                let v = p.eval(&self.env(x, a, e, e0, &tf));
                                next.push(project_value(spaces, v));
                            }
                        }
                    }
                }
                next
            }
        };
        StepTables { next, reward }
    }
}
