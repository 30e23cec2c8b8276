//! Submartingale cost processes through the auxiliary-process
//! decomposition `S_t = Lambda(A_t, X_t)` on a product chain.
//!
//! The auxiliary coordinate `A_t` makes the cost a function of the
//! current product state, so the per-step Lagrangian
//! `l(a,x) = E[Lambda next step] - Lambda(a,x)` telescopes the expected
//! cost of any stopping rule into an occupation-measure sum.  Cemetery
//! cost values are frozen at the auxiliary state the path died from.

use crate::chain::{Chain, Measure};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Margin for strict sign decisions in the twist check.
pub const TWIST_MARGIN: f64 = 1e-9;

/// How the auxiliary coordinate evolves.
#[derive(Debug, Clone)]
pub enum AuxSpec {
    /// `a` counts steps, capped at `t_max`; the horizon row is a forced
    /// kill and the truncated survival mass is reported.
    Time { t_max: usize },
    /// `a` freezes the initial base state.
    InitialState,
    /// User-supplied coupled kernel on product states, validated for
    /// marginal consistency against the base.
    ExplicitKernel {
        aux_coords: Vec<Vec<f64>>,
        kernel: Matrix,
        initial_aux: Vec<usize>,
    },
}

/// Product chain over (auxiliary, base) states.
///
/// Augmented states are indexed `a * base.n + x`.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    pub base: Chain,
    pub n_aux: usize,
    /// Embedded coordinate vector of each auxiliary state (d >= 0).
    pub aux_coords: Vec<Vec<f64>>,
    pub p_aug: Matrix,
    /// Initial auxiliary state for each base state.
    pub initial_aux: Vec<usize>,
    /// Rows whose base transitions were re-routed to the cemetery
    /// (Time horizon cap); exempt from marginal consistency.
    pub forced_kill: Vec<bool>,
    /// Worst-case survival probability past the horizon (Time mode),
    /// 0 otherwise.
    pub truncation: f64,
}

impl AugmentedChain {
    pub fn m(&self) -> usize {
        self.n_aux * self.base.n
    }

    pub fn idx(&self, a: usize, x: usize) -> usize {
        a * self.base.n + x
    }

    pub fn proj_a(&self, i: usize) -> usize {
        i / self.base.n
    }

    pub fn proj_x(&self, i: usize) -> usize {
        i % self.base.n
    }

    /// Auxiliary coordinate dimension d.
    pub fn dim(&self) -> usize {
        self.aux_coords.first().map_or(0, |c| c.len())
    }

    pub fn kill_deficit(&self, i: usize) -> f64 {
        let row = self.row(i);
        (1.0 - row.iter().sum::<f64>()).max(0.0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.p_aug.data[i * m..(i + 1) * m]
    }

    pub fn mode_is_ergodic_base(&self) -> bool {
        self.base.mode == crate::chain::Mode::Ergodic
    }

    /// Initial augmented law induced by a base law.
    pub fn initial_law(&self, mu: &Measure) -> Vec<f64> {
        let mut tilde = vec![0.0; self.m()];
        for (x, &m) in mu.mass.iter().enumerate() {
            if m > 0.0 {
                tilde[self.idx(self.initial_aux[x], x)] += m;
            }
        }
        tilde
    }

    /// Augmented states reachable from the initial states of `mu` over
    /// positive-probability edges.
    pub fn reachable(&self, mu: &Measure) -> Vec<bool> {
        let m = self.m();
        let mut seen = vec![false; m];
        let mut queue: Vec<usize> = Vec::new();
        for (x, &w) in mu.mass.iter().enumerate() {
            if w > 0.0 {
                let i = self.idx(self.initial_aux[x], x);
                if !seen[i] {
                    seen[i] = true;
                    queue.push(i);
                }
            }
        }
        while let Some(i) = queue.pop() {
            for (j, &p) in self.row(i).iter().enumerate() {
                if p > crate::chain::EDGE_TOL && !seen[j] {
                    seen[j] = true;
                    queue.push(j);
                }
            }
        }
        seen
    }

    /// Verify marginal consistency of the product kernel against the
    /// base kernel on rows that were not re-routed to the cemetery.
    pub fn check_marginals(&self) -> Result<()> {
        let n = self.base.n;
        for a in 0..self.n_aux {
            for x in 0..n {
                let i = self.idx(a, x);
                if self.forced_kill[i] {
                    continue;
                }
                for y in 0..n {
                    let total: f64 = (0..self.n_aux)
                        .map(|b| self.p_aug[(i, self.idx(b, y))])
                        .sum();
                    let diff = (total - self.base.kernel[(x, y)]).abs();
                    if diff > 1e-10 {
                        return Err(Error::MarginalMismatch {
                            aux: a,
                            state: x,
                            target: y,
                            diff,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Build the product chain for an auxiliary specification.
pub fn build_augmented(base: &Chain, spec: &AuxSpec) -> Result<AugmentedChain> {
    let n = base.n;
    match spec {
        AuxSpec::Time { t_max } => {
            let t_max = *t_max;
            let n_aux = t_max + 1;
            let m = n_aux * n;
            let mut p = Matrix::zeros(m, m);
            let mut forced = vec![false; m];
            for t in 0..n_aux {
                for x in 0..n {
                    let i = t * n + x;
                    if t == t_max {
                        forced[i] = true;
                        continue;
                    }
                    for y in 0..n {
                        p[(i, (t + 1) * n + y)] = base.kernel[(x, y)];
                    }
                }
            }
            // Worst-case chance of still being alive at the horizon.
            let mut alive = vec![1.0; n];
            for _ in 0..t_max {
                alive = base.kernel.matvec(&alive);
            }
            let truncation = crate::linalg::inf_norm(&alive);
            let aug = AugmentedChain {
                base: base.clone(),
                n_aux,
                aux_coords: (0..n_aux).map(|t| vec![t as f64]).collect(),
                p_aug: p,
                initial_aux: vec![0; n],
                forced_kill: forced,
                truncation,
            };
            aug.check_marginals()?;
            Ok(aug)
        }
        AuxSpec::InitialState => {
            let n_aux = n;
            let m = n_aux * n;
            let mut p = Matrix::zeros(m, m);
            for a in 0..n_aux {
                for x in 0..n {
                    for y in 0..n {
                        p[(a * n + x, a * n + y)] = base.kernel[(x, y)];
                    }
                }
            }
            let aug = AugmentedChain {
                base: base.clone(),
                n_aux,
                aux_coords: (0..n_aux).map(|a| vec![a as f64]).collect(),
                p_aug: p,
                initial_aux: (0..n).collect(),
                forced_kill: vec![false; m],
                truncation: 0.0,
            };
            aug.check_marginals()?;
            Ok(aug)
        }
        AuxSpec::ExplicitKernel {
            aux_coords,
            kernel,
            initial_aux,
        } => {
            let n_aux = aux_coords.len();
            let m = n_aux * n;
            if kernel.rows != m || kernel.cols != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: kernel.rows,
                });
            }
            if initial_aux.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: initial_aux.len(),
                });
            }
            let aug = AugmentedChain {
                base: base.clone(),
                n_aux,
                aux_coords: aux_coords.clone(),
                p_aug: kernel.clone(),
                initial_aux: initial_aux.clone(),
                forced_kill: vec![false; m],
                truncation: 0.0,
            };
            aug.check_marginals()?;
            Ok(aug)
        }
    }
}

/// Cost tables on the augmented chain.
#[derive(Debug, Clone)]
pub struct CostModel {
    /// Lambda(a, x) over augmented states.
    pub lambda: Vec<f64>,
    /// Frozen cemetery values Lambda(a, cemetery), one per auxiliary state.
    pub lambda_cem: Vec<f64>,
    /// Optional gradient in the auxiliary coordinate, d-dimensional.
    pub grad: Option<Vec<Vec<f64>>>,
    pub grad_cem: Option<Vec<Vec<f64>>>,
    /// Declared one-step increment bound D, if any.
    pub d_bound: Option<f64>,
}

impl CostModel {
    pub fn from_tables(lambda: Vec<f64>, lambda_cem: Vec<f64>) -> CostModel {
        CostModel {
            lambda,
            lambda_cem,
            grad: None,
            grad_cem: None,
            d_bound: None,
        }
    }

    pub fn with_gradient(mut self, grad: Vec<Vec<f64>>, grad_cem: Vec<Vec<f64>>) -> CostModel {
        self.grad = Some(grad);
        self.grad_cem = Some(grad_cem);
        self
    }

    pub fn validate(&self, aug: &AugmentedChain) -> Result<()> {
        if self.lambda.len() != aug.m() {
            return Err(Error::DimensionMismatch {
                expected: aug.m(),
                got: self.lambda.len(),
            });
        }
        if self.lambda_cem.len() != aug.n_aux {
            return Err(Error::MissingCemeteryValue {
                aux: self.lambda_cem.len(),
            });
        }
        Ok(())
    }
}

/// Per-step Lagrangian:
/// `l(a,x) = sum P_aug Lambda(a',x') + kill(a,x) Lambda(a,cem) - Lambda(a,x)`.
pub fn lagrangian(aug: &AugmentedChain, cost: &CostModel) -> Result<Vec<f64>> {
    cost.validate(aug)?;
    let m = aug.m();
    let mut l = aug.p_aug.matvec(&cost.lambda);
    for i in 0..m {
        l[i] += aug.kill_deficit(i) * cost.lambda_cem[aug.proj_a(i)] - cost.lambda[i];
    }
    Ok(l)
}

#[derive(Debug, Clone)]
pub struct SubmartingaleReport {
    pub passes: bool,
    /// Worst Lagrangian value over reachable states.
    pub worst_value: f64,
    pub worst_state: Option<(usize, usize)>,
    /// Largest |Lambda| over initial states (must be 0).
    pub initial_residual: f64,
}

/// Assumption check: `S_0 = 0` and `S` a submartingale, i.e. `Lambda = 0`
/// on initial states and `l >= 0` on every reachable augmented state.
pub fn check_submartingale(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
) -> Result<SubmartingaleReport> {
    let l = lagrangian(aug, cost)?;
    let reach = aug.reachable(mu);
    let mut worst = f64::INFINITY;
    let mut worst_state = None;
    for (i, &ok) in reach.iter().enumerate() {
        if ok && l[i] < worst {
            worst = l[i];
            worst_state = Some((aug.proj_a(i), aug.proj_x(i)));
        }
    }
    if worst == f64::INFINITY {
        worst = 0.0;
    }
    let mut init_res: f64 = 0.0;
    for (x, &w) in mu.mass.iter().enumerate() {
        if w > 0.0 {
            init_res = init_res.max(cost.lambda[aug.idx(aug.initial_aux[x], x)].abs());
        }
    }
    Ok(SubmartingaleReport {
        passes: worst >= -1e-12 && init_res <= 1e-12,
        worst_value: worst,
        worst_state,
        initial_residual: init_res,
    })
}

/// Smallest valid one-step increment bound `D* = max reachable l`, and
/// whether the declared bound (if any) covers it.
pub fn check_semi_supermartingale(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
) -> Result<(f64, bool)> {
    let l = lagrangian(aug, cost)?;
    let reach = aug.reachable(mu);
    let d_star = l
        .iter()
        .zip(&reach)
        .filter(|(_, &r)| r)
        .map(|(&v, _)| v)
        .fold(0.0_f64, f64::max);
    let pass = match cost.d_bound {
        Some(d) => d_star <= d + 1e-12,
        None => true,
    };
    Ok((d_star, pass))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistOutcome {
    Holds,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct TwistReport {
    pub outcome: TwistOutcome,
    /// Coordinate axis realizing the monotone drift, when it holds.
    pub axis: usize,
    /// +1.0 for a strictly increasing drift, -1.0 for decreasing.
    pub sign: f64,
    /// A state where strictness failed, for inconclusive outcomes.
    pub witness: Option<(usize, usize)>,
    /// The gradient drift table, one d-vector per augmented state.
    pub drift: Vec<Vec<f64>>,
}

/// Sufficient twist criterion: some coordinate of the gradient drift
/// `delta(a,x) = sum P_aug grad(a',x') + kill grad_cem(a) - grad(a,x)`
/// keeps a strict sign on every reachable state with positive survival
/// probability.  Rows that die with certainty have `delta = 0` under the
/// frozen-cemetery convention and carry no drift information, so they
/// are excluded from the strictness requirement.
pub fn check_twist(aug: &AugmentedChain, cost: &CostModel, mu: &Measure) -> Result<TwistReport> {
    let grad = cost.grad.as_ref().ok_or(Error::NoGradient)?;
    let grad_cem = cost.grad_cem.as_ref().ok_or(Error::NoGradient)?;
    let d = aug.dim();
    let m = aug.m();
    let mut drift = vec![vec![0.0; d]; m];
    for i in 0..m {
        for (j, &p) in aug.row(i).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for k in 0..d {
                drift[i][k] += p * grad[j][k];
            }
        }
        let kill = aug.kill_deficit(i);
        let a = aug.proj_a(i);
        for k in 0..d {
            drift[i][k] += kill * grad_cem[a][k] - grad[i][k];
        }
    }
    let reach = aug.reachable(mu);
    let candidates: Vec<usize> = (0..m)
        .filter(|&i| reach[i] && aug.kill_deficit(i) < 1.0 - 1e-12)
        .collect();
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            let mut witness = None;
            for &i in &candidates {
                if sign * drift[i][axis] < TWIST_MARGIN {
                    witness = Some((aug.proj_a(i), aug.proj_x(i)));
                    break;
                }
            }
            if witness.is_none() && !candidates.is_empty() {
                return Ok(TwistReport {
                    outcome: TwistOutcome::Holds,
                    axis,
                    sign,
                    witness: None,
                    drift,
                });
            }
        }
    }
    // Report the first strictness failure on axis 0, direction +.
    let witness = candidates
        .iter()
        .find(|&&i| d == 0 || drift[i][0] < TWIST_MARGIN)
        .map(|&i| (aug.proj_a(i), aug.proj_x(i)));
    Ok(TwistReport {
        outcome: TwistOutcome::Inconclusive,
        axis: 0,
        sign: 1.0,
        witness,
        drift,
    })
}
