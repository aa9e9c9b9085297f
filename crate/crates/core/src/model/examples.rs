//! Builtin example models. Continuous pieces are replaced by uniform grids;
//! `resolution` is the number of grid points per unit interval.
//!
//! | name  | X                         | F                      | info    | start            |
//! |-------|---------------------------|------------------------|---------|------------------|
//! | ex4_1 | {-1, 1}, discrete         | a·x                    | trivial | δ₁               |
//! | ex4_2 | same as ex4_1 (open-loop evaluation target)        | trivial | δ₁ |
//! | ex4_3 | same as ex4_1             | a·x                    | rich    | δ₁               |
//! | ex4_4 | {-1, 1} ∪ grid[2, 3]      | a·x on {-1,1}, else 1  | rich    | uniform on [2,3] |
//! | ex4_5 | same as ex4_4             |                        | rich    | uniform on [2,3] |
//! | ex4_6 | grid[-1, 1]               | a·x                    | rich    | uniform          |
//! | ex4_7 | same as ex4_6             |                        | trivial | uniform          |
//!
//! The reward is always `-W(state law, target)` with target B(1/2) on
//! {-1, 1} (uniform on the grid for ex4_6/ex4_7).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::config::{
    InitialSpec, LawSpec, MetricSpec, ModelConfig, NoiseSection, NoiseSpec, Point, ReferenceOn, ReferenceSpec,
    RewardSpec, SpaceSpec, TransitionSpec, FORMAT_VERSION,
};
use super::{InfoMode, InitialCondition, MeanFieldModel};

pub const EXAMPLE_NAMES: [&str; 7] = ["ex4_1", "ex4_2", "ex4_3", "ex4_4", "ex4_5", "ex4_6", "ex4_7"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleOptions {
    pub discount: f64,
    /// Grid points per unit interval for the continuous examples.
    pub resolution: usize,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        ExampleOptions { discount: 0.5, resolution: 11 }
    }
}

/// `n` evenly spaced points on `[lo, hi]`, rounded to 10 decimals so labels
/// stay readable.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (v * 1e10).round() / 1e10
        })
        .collect()
}

fn nums(v: &[f64]) -> Vec<Point> {
    v.iter().map(|x| Point::Num(*x)).collect()
}

fn pm_one(metric: &str) -> SpaceSpec {
    SpaceSpec { points: nums(&[-1.0, 1.0]), metric: MetricSpec::Named(metric.into()), embed: None }
}

fn coin() -> NoiseSpec {
    NoiseSpec { points: nums(&[-1.0, 1.0]), weights: vec![0.5, 0.5] }
}

fn target(weights: Vec<f64>) -> BTreeMap<String, ReferenceSpec> {
    BTreeMap::from([("target".to_string(), ReferenceSpec { on: ReferenceOn::State, weights })])
}

/// The model document behind a builtin example.
pub fn example_config(name: &str, opts: &ExampleOptions) -> Result<ModelConfig> {
    let m = opts.resolution;
    if m < 2 {
        return Err(Error::Model("example resolution must be at least 2".into()));
    }
    let flip = |info: InfoMode, description: &str| ModelConfig {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        description: description.to_string(),
        state_space: pm_one("discrete"),
        action_space: pm_one("discrete"),
        noise: NoiseSection { idiosyncratic: coin(), common: None },
        references: target(vec![0.5, 0.5]),
        transition: TransitionSpec::Expr { expr: "a * x".into() },
        reward: RewardSpec { expr: "-w_state(target)".into(), bound: Some(0.5) },
        discount: opts.discount,
        initial: InitialSpec { law: LawSpec::Dirac { dirac: Point::Num(1.0) }, info_mode: info },
    };
    let escape = |description: &str| {
        let tail = grid(2.0, 3.0, m);
        let mut values = vec![-1.0, 1.0];
        values.extend(&tail);
        let mut tw = vec![0.0; values.len()];
        tw[0] = 0.5;
        tw[1] = 0.5;
        let mut init = vec![0.0; values.len()];
        for w in init.iter_mut().skip(2) {
            *w = 1.0 / m as f64;
        }
        ModelConfig {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            description: description.to_string(),
            state_space: SpaceSpec { points: nums(&values), metric: MetricSpec::Named("euclidean".into()), embed: None },
            action_space: pm_one("discrete"),
            noise: NoiseSection { idiosyncratic: coin(), common: None },
            references: target(tw),
            transition: TransitionSpec::Expr { expr: "if(x < 1.5, a * x, 1)".into() },
            reward: RewardSpec { expr: "-w_state(target)".into(), bound: None },
            discount: opts.discount,
            initial: InitialSpec { law: LawSpec::Weights { weights: init }, info_mode: InfoMode::Rich },
        }
    };
    let interval = |info: InfoMode, description: &str| {
        let values = grid(-1.0, 1.0, 2 * m - 1);
        let n = values.len();
        ModelConfig {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            description: description.to_string(),
            state_space: SpaceSpec { points: nums(&values), metric: MetricSpec::Named("euclidean".into()), embed: None },
            action_space: pm_one("discrete"),
            noise: NoiseSection {
                idiosyncratic: NoiseSpec { points: nums(&grid(-1.0, 1.0, m)), weights: vec![1.0 / m as f64; m] },
                common: None,
            },
            references: target(vec![1.0 / n as f64; n]),
            transition: TransitionSpec::Expr { expr: "a * x".into() },
            reward: RewardSpec { expr: "-w_state(target)".into(), bound: None },
            discount: opts.discount,
            initial: InitialSpec { law: LawSpec::Named("uniform".into()), info_mode: info },
        }
    };
    Ok(match name {
        "ex4_1" => flip(InfoMode::Trivial, "Sign flips on {-1, 1}, reward -W(state law, B(1/2)); deterministic start, no randomizer."),
        "ex4_2" => flip(InfoMode::Trivial, "Same model as ex4_1, used for open-loop evaluation under trivial information."),
        "ex4_3" => flip(InfoMode::Rich, "Same model as ex4_1 with an independent uniform randomizer available."),
        "ex4_4" => escape("States {-1, 1} plus a grid on [2, 3] that jumps to 1; atomless-like start on the grid."),
        "ex4_5" => escape("Same model as ex4_4, intended for open-loop/randomized comparison."),
        "ex4_6" => interval(InfoMode::Rich, "Sign flips on a grid of [-1, 1], target uniform; randomizer available."),
        "ex4_7" => interval(InfoMode::Trivial, "Same model as ex4_6 without the independent randomizer."),
        other => return Err(Error::UnknownExample(other.to_string())),
    })
}

pub fn builtin_example(name: &str, opts: &ExampleOptions) -> Result<(MeanFieldModel, InitialCondition)> {
    example_config(name, opts)?.build()
}
