//! Snell envelope on the augmented chain, Doob-Meyer increments, and
//! the two dual normalizations (réduite shift and psi-max).
//!
//! The value function is stored in shifted form `V = H + Lambda`, which
//! makes the dynamic-programming recursion stationary in `(a, x)`:
//!
//! `V = max(psi o proj_x, P_aug V - l)`
//!
//! with the cemetery contributing `psi(cem) = 0` through the row
//! deficit.  The contact set is then simply `{V = psi}`.

use crate::chain::Measure;
use crate::costs::{self, AugmentedChain, CostModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::potential::{self, Potential};

const MAX_SWEEPS: usize = 1_000_000;

/// Shifted Snell value over augmented states.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub v: Vec<f64>,
    pub sweeps: usize,
    /// Final fixed-point residual `||V - max(psi, P V - l)||_inf`.
    pub residual: f64,
}

fn obstacle(aug: &AugmentedChain, psi: &Potential) -> Vec<f64> {
    (0..aug.m()).map(|i| psi.values[aug.proj_x(i)]).collect()
}

/// `P_aug V - l` per augmented state.
pub fn continuation_value(aug: &AugmentedChain, l: &[f64], v: &[f64]) -> Vec<f64> {
    let mut c = aug.p_aug.matvec(v);
    for i in 0..aug.m() {
        c[i] -= l[i];
    }
    c
}

fn fixed_point_residual(aug: &AugmentedChain, o: &[f64], l: &[f64], v: &[f64]) -> f64 {
    let c = continuation_value(aug, l, v);
    (0..aug.m())
        .map(|i| (v[i] - o[i].max(c[i])).abs())
        .fold(0.0, f64::max)
}

/// Unique fixed point of `V = max(psi o proj_x, P_aug V - l)` by value
/// iteration from the obstacle, polished by a policy-evaluation solve on
/// the continuation region.
pub fn snell_envelope(aug: &AugmentedChain, cost: &CostModel, psi: &Potential) -> Result<ValueFunction> {
    let l = costs::lagrangian(aug, cost)?;
    let o = obstacle(aug, psi);
    let m = aug.m();
    let mut v = o.clone();
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    for sweep in 0..MAX_SWEEPS {
        sweeps = sweep + 1;
        let c = continuation_value(aug, &l, &v);
        let mut change: f64 = 0.0;
        for i in 0..m {
            let next = o[i].max(c[i]);
            change = change.max((next - v[i]).abs());
            v[i] = next;
        }
        residual = change;
        if change <= 1e-13 * (1.0 + linalg::inf_norm(&v)) {
            let v = polish(aug, &o, &l, v);
            let residual = fixed_point_residual(aug, &o, &l, &v);
            return Ok(ValueFunction {
                v,
                sweeps,
                residual,
            });
        }
    }
    Err(Error::NonConvergence { sweeps, residual })
}

/// Solve the continuation region exactly: where continuation strictly
/// beats the obstacle, `V = P_aug V - l` is linear.
fn polish(aug: &AugmentedChain, o: &[f64], l: &[f64], v: Vec<f64>) -> Vec<f64> {
    let m = aug.m();
    let scale = 1.0 + linalg::inf_norm(&v);
    let c = continuation_value(aug, l, &v);
    let cont: Vec<usize> = (0..m).filter(|&i| c[i] > o[i] + 1e-9 * scale).collect();
    if cont.is_empty() {
        return v;
    }
    let mut pos = vec![usize::MAX; m];
    for (k, &i) in cont.iter().enumerate() {
        pos[i] = k;
    }
    let k = cont.len();
    let mut a = Matrix::identity(k);
    let mut b = vec![0.0; k];
    for (ri, &i) in cont.iter().enumerate() {
        b[ri] = -l[i];
        for (j, &p) in aug.row(i).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            if pos[j] != usize::MAX {
                a[(ri, pos[j])] -= p;
            } else {
                b[ri] += p * o[j];
            }
        }
    }
    let Ok(sol) = linalg::solve(&a, &b) else {
        return v;
    };
    let mut out = o.to_vec();
    for (ri, &i) in cont.iter().enumerate() {
        out[i] = sol[ri];
    }
    let old = fixed_point_residual(aug, o, l, &v);
    let new = fixed_point_residual(aug, o, l, &out);
    if new <= old {
        out
    } else {
        v
    }
}

/// Doob-Meyer increment `alpha = V - (P_aug V - l) >= 0`: the per-step
/// growth of the predictable increasing part.
pub fn doob_meyer(aug: &AugmentedChain, cost: &CostModel, vf: &ValueFunction) -> Result<Vec<f64>> {
    let l = costs::lagrangian(aug, cost)?;
    let c = continuation_value(aug, &l, &vf.v);
    let alpha: Vec<f64> = (0..aug.m()).map(|i| vf.v[i] - c[i]).collect();
    for (i, &a) in alpha.iter().enumerate() {
        if a < -1e-10 {
            return Err(Error::NegativeIncrement { index: i, value: a });
        }
    }
    Ok(alpha)
}

#[derive(Debug, Clone)]
pub struct NormalizedPsi {
    pub psi_bar: Potential,
    pub psi_re: Potential,
}

/// Réduite normalization `psi_bar = psi - psi_re`: nonpositive, zero on
/// the cemetery, and value-process-equivalent to `psi` up to the shift
/// `psi_re(X_t)` when the cost is a submartingale.
pub fn normalize_psi(
    aug: &AugmentedChain,
    cost: &CostModel,
    psi: &Potential,
    mu: &Measure,
) -> Result<NormalizedPsi> {
    let sub = costs::check_submartingale(aug, cost, mu)?;
    if !sub.passes {
        let (a, x) = sub.worst_state.unwrap_or((0, 0));
        return Err(Error::SubmartingaleViolated {
            index: aug.idx(a, x),
            value: sub.worst_value,
        });
    }
    let psi_re = potential::reduite(&aug.base, psi)?;
    let psi_bar = Potential::new(
        (0..aug.base.n)
            .map(|x| psi.values[x] - psi_re.values[x])
            .collect(),
    );
    Ok(NormalizedPsi { psi_bar, psi_re })
}

/// Largest obstacle with the same value function:
/// `psi_max(y) = min over reachable (a, y) of V(a, y)`, 0 on states that
/// the chain cannot visit from `supp(mu)`.
pub fn psi_max(aug: &AugmentedChain, vf: &ValueFunction, mu: &Measure) -> Potential {
    let reach = aug.reachable(mu);
    let n = aug.base.n;
    let mut out = vec![0.0; n];
    for y in 0..n {
        let mut best = f64::INFINITY;
        for a in 0..aug.n_aux {
            let i = aug.idx(a, y);
            if reach[i] {
                best = best.min(vf.v[i]);
            }
        }
        out[y] = if best == f64::INFINITY { 0.0 } else { best };
    }
    Potential::new(out)
}
