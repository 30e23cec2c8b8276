//! Small reference chains and cost models used across tests, docs, and
//! the regression suite.

use crate::chain::{Chain, Mode};
use crate::costs::{AugmentedChain, CostModel};

/// One killed state: `P = [[0.5]]`, kill probability 0.5.
pub fn single_state_half() -> Chain {
    Chain::validate(vec![vec![0.5]], Mode::Absorbing).unwrap()
}

/// Symmetric 3-cycle: `P(x, x +- 1 mod 3) = 1/2`.
pub fn three_cycle() -> Chain {
    Chain::validate(
        vec![
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ],
        Mode::Ergodic,
    )
    .unwrap()
}

/// Gambler's ruin on `{0..4}`: interior steps +-1 with probability 1/2,
/// boundary states 0 and 4 are killed (full row deficit).
pub fn g5() -> Chain {
    let mut p = vec![vec![0.0; 5]; 5];
    for x in 1..4 {
        p[x][x - 1] = 0.5;
        p[x][x + 1] = 0.5;
    }
    Chain::validate(p, Mode::Absorbing).unwrap()
}

/// Cost `Lambda(t, x) = f(t)` on a Time auxiliary, frozen at the
/// departing value on death, with gradient `g(t)`.
pub fn time_cost_table(
    aug: &AugmentedChain,
    f: impl Fn(usize) -> f64,
    g: impl Fn(usize) -> f64,
) -> CostModel {
    let cem: Vec<f64> = (0..aug.n_aux).map(&f).collect();
    let gcem: Vec<f64> = (0..aug.n_aux).map(&g).collect();
    time_cost_with_cem(aug, f, g, cem, gcem)
}

/// As `time_cost_table` but with explicit cemetery values per departing
/// auxiliary state.
pub fn time_cost_with_cem(
    aug: &AugmentedChain,
    f: impl Fn(usize) -> f64,
    g: impl Fn(usize) -> f64,
    cem: Vec<f64>,
    grad_cem: Vec<f64>,
) -> CostModel {
    let mut lambda = vec![0.0; aug.m()];
    let mut grad = vec![vec![0.0]; aug.m()];
    for i in 0..aug.m() {
        let t = aug.proj_a(i);
        lambda[i] = f(t);
        grad[i][0] = g(t);
    }
    let grad_cem = grad_cem.into_iter().map(|v| vec![v]).collect();
    CostModel::from_tables(lambda, cem).with_gradient(grad, grad_cem)
}

/// `S_t = t`: unit Lagrangian everywhere.  The death step still takes a
/// time unit, so the cemetery value for a path leaving at clock `t` is
/// `t + 1`.
pub fn unit_time_cost(aug: &AugmentedChain) -> CostModel {
    time_cost_with_cem(
        aug,
        |t| t as f64,
        |_| 1.0,
        (0..aug.n_aux).map(|t| (t + 1) as f64).collect(),
        vec![1.0; aug.n_aux],
    )
}

/// `S_t = t^2`: convex time cost (Root-type barrier).
pub fn root_cost(aug: &AugmentedChain) -> CostModel {
    time_cost_table(aug, |t| (t * t) as f64, |t| 2.0 * t as f64)
}

/// `S_t = -t^2 + 2 t_max t`: concave increasing time cost on the
/// horizon (Rost-type reverse barrier).
pub fn rost_cost(aug: &AugmentedChain) -> CostModel {
    let h = (aug.n_aux - 1) as f64;
    time_cost_table(
        aug,
        move |t| {
            let t = t as f64;
            -t * t + 2.0 * h * t
        },
        move |t| -2.0 * t as f64 + 2.0 * h,
    )
}
