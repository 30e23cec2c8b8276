//! LP-independent dual solver: projected supergradient ascent of the
//! concave functional `U(psi) = int psi dnu - E^mu[V^psi]` over the
//! normalized box `[-K, 0]`, with periodic reduite / largest-obstacle
//! polishing.  The LP dual is the production path; this solver realizes
//! the attainment theorem constructively and cross-checks it.

use crate::chain::Measure;
use crate::costs::{self, AugmentedChain, CostModel};
use crate::error::{Error, Result};
use crate::lp;
use crate::potential::Potential;
use crate::snell::{self, ValueFunction};
use crate::verify;

/// Default termination tolerance on the primal-dual gap.
pub const DUAL_TOL: f64 = 1e-6;
/// Iteration cap of the ascent.
pub const MAX_ITERS: usize = 10_000;
/// Apply normalize / psi_max polish every this many iterations.
const POLISH_EVERY: usize = 25;

#[derive(Debug, Clone)]
pub struct DualOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Box bound; `None` means `choose_k`.
    pub k_box: Option<f64>,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            tol: DUAL_TOL,
            max_iters: MAX_ITERS,
            k_box: None,
        }
    }
}

/// `E^mu[V]` at the initial augmented states.
fn initial_value(aug: &AugmentedChain, vf: &ValueFunction, mu: &Measure) -> f64 {
    let mut e = 0.0;
    for (x, &w) in mu.mass.iter().enumerate() {
        if w > 0.0 {
            e += w * vf.v[aug.idx(aug.initial_aux[x], x)];
        }
    }
    e
}

/// The dual objective `U(psi) = int psi dnu - E^mu[V^psi]`.
pub fn dual_value(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    nu: &Measure,
    psi: &Potential,
) -> Result<f64> {
    let vf = snell::snell_envelope(aug, cost, psi)?;
    Ok(psi.integrate(nu) - initial_value(aug, &vf, mu))
}

/// A supergradient of `U` at `psi`: `g = nu - law(X_{T*})` on base
/// states, where `T*` is the first hitting time of the contact set
/// `{V = psi}` (ties broken by stopping).  The cemetery component is
/// implied by mass balance and never enters the ascent because
/// `psi(cemetery) = 0` is pinned.
pub fn supergradient(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    nu: &Measure,
    psi: &Potential,
) -> Result<(Vec<f64>, ValueFunction)> {
    let vf = snell::snell_envelope(aug, cost, psi)?;
    // Tighter binding tolerance than the certificate checker: the
    // certificate slack only needs to beat the gap tolerance, but here
    // any slack in the mask caps how small the ascent's gap can get.
    let mut contact = verify::contact_set(aug, psi, &vf);
    contact.ctol = (10.0 * vf.residual).max(1e-9);
    contact.mask = contact.slack.iter().map(|&s| s <= contact.ctol).collect();
    let rule = verify::hitting_rule(&contact);
    let push = verify::pushforward(aug, cost, &rule, mu)?;
    let g: Vec<f64> = (0..aug.base.n)
        .map(|x| nu.mass[x] - push.law[x])
        .collect();
    Ok((g, vf))
}

/// Box bound for the normalized dual: the largest cost value any path
/// can accumulate.  When the tables are finite over the reachable set
/// that maximum is exact; otherwise fall back to `D* x max expected
/// lifetime x 10`.
pub fn choose_k(aug: &AugmentedChain, cost: &CostModel, mu: &Measure) -> Result<f64> {
    let reach = aug.reachable(mu);
    let mut k: f64 = 0.0;
    let mut finite = true;
    for i in 0..aug.m() {
        if !reach[i] {
            continue;
        }
        let values = [cost.lambda[i], cost.lambda_cem[aug.proj_a(i)]];
        for v in values {
            if v.is_finite() {
                k = k.max(v.abs());
            } else {
                finite = false;
            }
        }
    }
    if finite {
        return Ok(k);
    }
    let (d_star, _) = costs::check_semi_supermartingale(aug, cost, mu)?;
    let e = aug.base.expected_lifetime()?;
    let max_life = e.iter().fold(0.0_f64, |m, &v| m.max(v));
    Ok(d_star * max_life * 10.0)
}

#[derive(Debug, Clone)]
pub struct DualDiagnostics {
    pub iterations: usize,
    /// `U(psi_k)` per evaluated iterate.
    pub history: Vec<f64>,
    pub best_value: f64,
    pub gap: f64,
    pub k_box: f64,
    /// The best iterate touches the lower box boundary, suggesting the
    /// box is too small.
    pub touches_box: bool,
}

/// Projected supergradient ascent
/// `psi_{k+1} = clamp(psi_k + eta_k g_k, [-K, 0])`, `eta_k = eta_0 /
/// sqrt(k)`, polished every 25 iterations by the reduite normalization
/// followed by the largest obstacle with the same envelope (both
/// non-decreasing in `U`).  Terminates when the gap to the LP primal
/// optimum is at most `tol`.
pub fn solve_dual_iterative(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    nu: &Measure,
    opts: &DualOptions,
) -> Result<(Potential, DualDiagnostics)> {
    let sub = costs::check_submartingale(aug, cost, mu)?;
    if !sub.passes {
        let (a, x) = sub.worst_state.unwrap_or((0, 0));
        return Err(Error::SubmartingaleViolated {
            index: aug.idx(a, x),
            value: sub.worst_value,
        });
    }
    let primal = lp::primal_embedding_lp(aug, cost, mu, nu)?;
    let target = primal.objective;
    let k_box = match opts.k_box {
        Some(k) => k,
        None => choose_k(aug, cost, mu)?,
    };
    let n = aug.base.n;
    let l1: f64 = (0..n).map(|x| (nu.mass[x] - mu.mass[x]).abs()).sum();
    let eta0 = if k_box > 0.0 { k_box / (1.0 + l1) } else { 1.0 };
    let clamp = |psi: &mut Potential| {
        for v in psi.values.iter_mut() {
            *v = v.clamp(-k_box, 0.0);
        }
    };
    let mut psi = Potential::zero(n);
    let mut best_psi = psi.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    // Restart bookkeeping: when the best value stalls across several
    // polish cycles the step scale is too coarse for the remaining
    // gap, so the schedule restarts from the best iterate with a
    // geometrically smaller eta_0 (still the eta_0/sqrt(k) form).
    let mut eta_cur = eta0;
    let mut k_local = 0usize;
    let mut stall_anchor = f64::NEG_INFINITY;
    let mut stall_cycles = 0usize;
    let mut g_norm_sq_best = 1.0;
    const STALL_CYCLES: usize = 4;
    for k in 1..=opts.max_iters {
        iterations = k;
        k_local += 1;
        let (g, vf) = supergradient(aug, cost, mu, nu, &psi)?;
        let value = psi.integrate(nu) - initial_value(aug, &vf, mu);
        history.push(value);
        if value > best_value {
            best_value = value;
            best_psi = psi.clone();
            g_norm_sq_best = g.iter().map(|v| v * v).sum::<f64>().max(1e-30);
        }
        let gap = target - best_value;
        if gap.abs() <= opts.tol {
            break;
        }
        let eta = eta_cur / (k_local as f64).sqrt();
        for x in 0..n {
            psi.values[x] += eta * g[x];
        }
        clamp(&mut psi);
        if k % POLISH_EVERY == 0 {
            // Polish a candidate but only adopt it on strict
            // improvement: the raw subgradient trajectory converges by
            // iterate drift (the distance to an optimizer shrinks even
            // while U dips), and unconditionally collapsing onto the
            // polish fixed point erases that drift.
            let norm = snell::normalize_psi(aug, cost, &psi, mu)?;
            let mut cand = norm.psi_bar;
            clamp(&mut cand);
            let vf = snell::snell_envelope(aug, cost, &cand)?;
            cand = snell::psi_max(aug, &vf, mu);
            clamp(&mut cand);
            let u_cand = dual_value(aug, cost, mu, nu, &cand)?;
            if u_cand > best_value {
                best_value = u_cand;
                best_psi = cand.clone();
                psi = cand;
                history.push(u_cand);
                if (target - best_value).abs() <= opts.tol {
                    break;
                }
            }
            if best_value > stall_anchor + 0.1 * opts.tol {
                stall_anchor = best_value;
                stall_cycles = 0;
            } else {
                stall_cycles += 1;
                if stall_cycles >= STALL_CYCLES {
                    // Progress needs steps of order gap / |g|^2 (the
                    // Polyak scale); restart the schedule there from
                    // the best iterate.
                    psi = best_psi.clone();
                    eta_cur = (eta_cur * 0.3).min(2.0 * gap / g_norm_sq_best);
                    k_local = 0;
                    stall_cycles = 0;
                }
            }
        }
    }
    // One last polish of the best iterate: the largest-obstacle map can
    // land exactly on an optimizer that plain ascent only approaches.
    {
        let norm = snell::normalize_psi(aug, cost, &best_psi, mu)?;
        let mut cand = norm.psi_bar;
        clamp(&mut cand);
        let vf = snell::snell_envelope(aug, cost, &cand)?;
        cand = snell::psi_max(aug, &vf, mu);
        clamp(&mut cand);
        let value = dual_value(aug, cost, mu, nu, &cand)?;
        if value > best_value {
            best_value = value;
            best_psi = cand;
            history.push(value);
        }
    }
    let gap = target - best_value;
    let touches_box = best_psi
        .values
        .iter()
        .any(|&v| v <= -k_box + 1e-9 && k_box > 0.0);
    let diag = DualDiagnostics {
        iterations,
        history,
        best_value,
        gap,
        k_box,
        touches_box,
    };
    if gap.abs() > opts.tol {
        return Err(Error::NoProgress { gap });
    }
    Ok((best_psi, diag))
}
