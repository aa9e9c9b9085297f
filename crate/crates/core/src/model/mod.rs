//! Model declaration: finite state and action spaces, noise laws, the
//! transition `F(x, a, ν, e, e⁰)`, the reward `f(x, a, ν)` and the discount.

pub mod config;
mod dynamics;
pub mod examples;
pub mod expr;
mod lipschitz;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::ModelConfig;
pub use dynamics::{ExprDynamics, Reference, TransitionRule, TransitionSource};
pub use examples::{builtin_example, example_config, ExampleOptions, EXAMPLE_NAMES};
pub use lipschitz::{estimate_lipschitz, holder_constant, holder_exponent, holder_modulus, LipschitzEstimate};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::spaces::{DiscreteMeasure, FiniteMetricSpace, ProductSpace, SpaceRef};

/// Spaces and noise laws shared by every model component.
#[derive(Clone, Debug)]
pub struct ModelSpaces {
    pub state: SpaceRef,
    pub action: SpaceRef,
    pub product: ProductSpace,
    pub idio_noise: DiscreteMeasure,
    pub common_noise: DiscreteMeasure,
}

impl ModelSpaces {
    pub fn new(state: SpaceRef, action: SpaceRef, idio_noise: DiscreteMeasure, common_noise: DiscreteMeasure) -> Self {
        let product = ProductSpace::new(state.clone(), action.clone());
        ModelSpaces { state, action, product, idio_noise, common_noise }
    }

    pub fn n_states(&self) -> usize {
        self.state.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action.len()
    }

    pub fn n_idio(&self) -> usize {
        self.idio_noise.space().len()
    }

    pub fn n_common(&self) -> usize {
        self.common_noise.space().len()
    }

    /// Flat index into [`StepTables::next`].
    #[inline]
    pub fn next_index(&self, x: usize, a: usize, e: usize, e0: usize) -> usize {
        ((x * self.n_actions() + a) * self.n_idio() + e) * self.n_common() + e0
    }
}

/// `F` and `f` frozen at one joint law `ν`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTables {
    /// `next[spaces.next_index(x, a, e, e0)]` = index of `F(x, a, ν, e, e0)`.
    pub next: Vec<usize>,
    /// `reward[x * |A| + a]` = `f(x, a, ν)`.
    pub reward: Vec<f64>,
}

/// Transition and reward of a mean-field model. Implement this directly for
/// dynamics the config language cannot express.
pub trait Dynamics: Send + Sync + fmt::Debug {
    /// Index of the next state; must be a valid state index.
    fn transition(&self, spaces: &ModelSpaces, x: usize, a: usize, nu: &DiscreteMeasure, e: usize, e0: usize) -> usize;

    fn reward(&self, spaces: &ModelSpaces, x: usize, a: usize, nu: &DiscreteMeasure) -> f64;

    /// Tabulates `F(·, ·, ν, ·, ·)` and `f(·, ·, ν)`. Override when the
    /// mean-field statistics are expensive and can be shared across entries.
    fn step_tables(&self, spaces: &ModelSpaces, nu: &DiscreteMeasure) -> StepTables {
        let (nx, na, ne, ne0) = (spaces.n_states(), spaces.n_actions(), spaces.n_idio(), spaces.n_common());
        let mut next = Vec::with_capacity(nx * na * ne * ne0);
        let mut reward = Vec::with_capacity(nx * na);
        for x in 0..nx {
            for a in 0..na {
                reward.push(self.reward(spaces, x, a, nu));
                for e in 0..ne {
                    for e0 in 0..ne0 {
                        next.push(self.transition(spaces, x, a, nu, e, e0));
                    }
                }
            }
        }
        StepTables { next, reward }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoMode {
    /// No independent randomizer in the initial information: only
    /// deterministic feedback is implementable.
    Trivial,
    /// An independent uniform is available, so randomized feedback is allowed.
    Rich,
}

#[derive(Clone, Debug)]
pub struct InitialCondition {
    pub law: DiscreteMeasure,
    pub info_mode: InfoMode,
}

#[derive(Clone, Debug)]
pub struct MeanFieldModel {
    name: String,
    spaces: ModelSpaces,
    dynamics: Arc<dyn Dynamics>,
    discount: f64,
    reward_bound: f64,
}

/// Resolution of the joint-law lattice used for load-time checks.
const CHECK_GRID_STEPS: usize = 2;

impl MeanFieldModel {
    /// Validates the discount, checks that `F` lands in `X` on every entry of
    /// a test lattice of joint laws, and measures `max |f|` on that lattice.
    /// A declared bound must dominate the measured one.
    pub fn new(
        name: impl Into<String>,
        spaces: ModelSpaces,
        dynamics: Arc<dyn Dynamics>,
        discount: f64,
        declared_bound: Option<f64>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Model(format!("discount {discount} must lie in [0, 1)")));
        }
        let joint = spaces.product.joint().clone();
        let lattice = SimplexGrid::enumerate_weights(joint.len(), CHECK_GRID_STEPS, 1_000_000)?;
        let nx = spaces.n_states();
        let mut measured: f64 = 0.0;
        for w in lattice {
            let nu = DiscreteMeasure::new(joint.clone(), w)?;
            let t = dynamics.step_tables(&spaces, &nu);
            if let Some(bad) = t.next.iter().find(|&&s| s >= nx) {
                return Err(Error::Model(format!("transition returned state index {bad} outside X (|X| = {nx})")));
            }
            for r in &t.reward {
                if !r.is_finite() {
                    return Err(Error::Model("reward is not finite".into()));
                }
                measured = measured.max(r.abs());
            }
        }
        let reward_bound = match declared_bound {
            Some(b) if b + 1e-9 < measured => {
                return Err(Error::Model(format!("declared reward bound {b} is below the observed max |f| = {measured}")));
            }
            Some(b) => b,
            None => measured,
        };
        Ok(MeanFieldModel { name: name.into(), spaces, dynamics, discount, reward_bound })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spaces(&self) -> &ModelSpaces {
        &self.spaces
    }

    pub fn state_space(&self) -> &SpaceRef {
        &self.spaces.state
    }

    pub fn action_space(&self) -> &SpaceRef {
        &self.spaces.action
    }

    pub fn product(&self) -> &ProductSpace {
        &self.spaces.product
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same model with another discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Model(format!("discount {discount} must lie in [0, 1)")));
        }
        Ok(MeanFieldModel { discount, ..self.clone() })
    }

    /// `‖f‖∞`.
    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn step_tables(&self, nu: &DiscreteMeasure) -> StepTables {
        self.dynamics.step_tables(&self.spaces, nu)
    }

    pub fn transition(&self, x: usize, a: usize, nu: &DiscreteMeasure, e: usize, e0: usize) -> usize {
        self.dynamics.transition(&self.spaces, x, a, nu, e, e0)
    }

    pub fn reward(&self, x: usize, a: usize, nu: &DiscreteMeasure) -> f64 {
        self.dynamics.reward(&self.spaces, x, a, nu)
    }

    /// Smallest horizon `T` with `β^T ‖f‖∞ / (1 − β) < tol`.
    pub fn horizon_for(&self, tol: f64) -> usize {
        let b = self.discount;
        if b == 0.0 || self.reward_bound == 0.0 {
            return 1;
        }
        let mut t = 1;
        while b.powi(t as i32) * self.reward_bound / (1.0 - b) >= tol {
            t += 1;
        }
        t
    }

    /// `β^T ‖f‖∞ / (1 − β)`.
    pub fn tail_bound(&self, horizon: usize) -> f64 {
        self.discount.powi(horizon as i32) * self.reward_bound / (1.0 - self.discount)
    }
}

/// Nearest grid point to a real value; ties go to the smaller one.
pub fn project_state(value: f64, grid: &FiniteMetricSpace) -> Result<usize> {
    grid.nearest_embedded(value)
        .ok_or_else(|| Error::Contract("state projection needs a real embedding".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_state_examples() {
        let g = FiniteMetricSpace::euclidean(&[2.0, 2.5, 3.0]).unwrap();
        assert_eq!(project_state(2.5, &g).unwrap(), 1);
        assert_eq!(project_state(2.25, &g).unwrap(), 0);
        assert_eq!(project_state(2.3, &g).unwrap(), 1);
        let d = FiniteMetricSpace::discrete(vec!["p".into()], None).unwrap();
        assert!(project_state(0.0, &d).is_err());
    }

    #[test]
    fn horizon_rule() {
        let (m, _) = builtin_example("ex4_1", &ExampleOptions::default()).unwrap();
        let t = m.horizon_for(1e-3);
        assert!(m.tail_bound(t) < 1e-3);
        assert!(m.tail_bound(t - 1) >= 1e-3);
    }
}
