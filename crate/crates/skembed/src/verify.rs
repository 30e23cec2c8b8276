//! Verification layer: contact sets, barrier hitting rules, exact
//! pushforward of memoryless stopping rules, optimality certificates,
//! the stop-go audit, and the ergodic local-time check.

use crate::chain::{Chain, Measure, Mode};
use crate::costs::{self, AugmentedChain, CostModel, TwistReport};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lp::OccupationSolution;
use crate::potential::Potential;
use crate::snell::{self, ValueFunction};

/// Support threshold for occupation masses.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Memoryless randomized stopping rule: stop with probability `p(a, x)`
/// on each visit.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    pub p: Vec<f64>,
}

impl StoppingRule {
    pub fn new(p: Vec<f64>) -> StoppingRule {
        assert!(p.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        StoppingRule {
            p: p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// True when every probability is 0 or 1 up to `tol`.
    pub fn deterministic(&self, tol: f64) -> bool {
        self.p.iter().all(|&v| v <= tol || v >= 1.0 - tol)
    }
}

/// Augmented states where the value function touches the obstacle.
#[derive(Debug, Clone)]
pub struct ContactSet {
    pub mask: Vec<bool>,
    /// Per-state slack `V - psi`.
    pub slack: Vec<f64>,
    pub ctol: f64,
}

pub fn contact_set(aug: &AugmentedChain, psi: &Potential, vf: &ValueFunction) -> ContactSet {
    let ctol = 1e-7 * (1.0 + linalg::inf_norm(&vf.v));
    let slack: Vec<f64> = (0..aug.m())
        .map(|i| vf.v[i] - psi.values[aug.proj_x(i)])
        .collect();
    let mask = slack.iter().map(|&s| s <= ctol).collect();
    ContactSet { mask, slack, ctol }
}

/// First hitting rule of a contact set: stop exactly on the mask.
pub fn hitting_rule(contact: &ContactSet) -> StoppingRule {
    StoppingRule::new(
        contact
            .mask
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Exact law and moments of a memoryless rule, by solving the
/// arriving-mass recursion `r = mu_tilde + P_aug^T ((1 - p) o r)` as a
/// linear system.
#[derive(Debug, Clone)]
pub struct Pushforward {
    /// Stopped mass per augmented state: the law of `(A_T, X_T)`.
    pub s: Vec<f64>,
    /// Continued mass per augmented state.
    pub u: Vec<f64>,
    /// Stopped law folded onto base states.
    pub law: Vec<f64>,
    pub killed_mass: f64,
    pub expected_time: f64,
    /// `E[S_T]`, cemetery contributions included.
    pub expected_cost: f64,
}

pub fn pushforward(
    aug: &AugmentedChain,
    cost: &CostModel,
    rule: &StoppingRule,
    mu: &Measure,
) -> Result<Pushforward> {
    let m = aug.m();
    assert_eq!(rule.p.len(), m);
    let mu_tilde = aug.initial_law(mu);
    // (I - P_aug^T diag(1 - p)) r = mu_tilde.
    let mut a = Matrix::identity(m);
    for j in 0..m {
        let w = 1.0 - rule.p[j];
        if w == 0.0 {
            continue;
        }
        for (i, &p) in aug.row(j).iter().enumerate() {
            if p != 0.0 {
                a[(i, j)] -= p * w;
            }
        }
    }
    let r = linalg::solve(&a, &mu_tilde)?;
    let s: Vec<f64> = (0..m).map(|i| rule.p[i] * r[i]).collect();
    let u: Vec<f64> = (0..m).map(|i| (1.0 - rule.p[i]) * r[i]).collect();
    let killed_mass: f64 = (0..m).map(|i| u[i] * aug.kill_deficit(i)).sum();
    let total: f64 = s.iter().sum::<f64>() + killed_mass;
    let leak = (total - mu.total()).abs();
    if leak > 1e-9 {
        return Err(Error::MassLeak(leak));
    }
    let mut law = vec![0.0; aug.base.n];
    for i in 0..m {
        law[aug.proj_x(i)] += s[i];
    }
    let expected_time: f64 = u.iter().sum();
    let mut expected_cost: f64 = (0..m).map(|i| s[i] * cost.lambda[i]).sum();
    for i in 0..m {
        expected_cost += u[i] * aug.kill_deficit(i) * cost.lambda_cem[aug.proj_a(i)];
    }
    Ok(Pushforward {
        s,
        u,
        law,
        killed_mass,
        expected_time,
        expected_cost,
    })
}

/// The three certificate conditions of the verification theorem.
#[derive(Debug, Clone)]
pub struct OptimalityReport {
    /// Stopped support lies in the contact set.
    pub stopped_in_contact: bool,
    pub worst_stopped_slack: f64,
    /// `sum u . alpha`: martingality along continuation.
    pub u_dot_alpha: f64,
    pub gap: f64,
    pub pass: bool,
}

pub fn verify_optimality(
    aug: &AugmentedChain,
    cost: &CostModel,
    psi: &Potential,
    vf: &ValueFunction,
    occ: &OccupationSolution,
    mu: &Measure,
    nu: &Measure,
) -> Result<OptimalityReport> {
    let contact = contact_set(aug, psi, vf);
    let mut worst_stopped_slack: f64 = 0.0;
    for i in 0..aug.m() {
        if occ.s[i] > SUPPORT_TOL {
            worst_stopped_slack = worst_stopped_slack.max(contact.slack[i]);
        }
    }
    let stopped_in_contact = worst_stopped_slack <= contact.ctol;
    let alpha = snell::doob_meyer(aug, cost, vf)?;
    let u_dot_alpha: f64 = occ.u.iter().zip(&alpha).map(|(&u, &a)| u * a).sum();
    let mut e_mu_v = 0.0;
    for (x, &w) in mu.mass.iter().enumerate() {
        if w > 0.0 {
            e_mu_v += w * vf.v[aug.idx(aug.initial_aux[x], x)];
        }
    }
    let dual_value = psi.integrate(nu) - e_mu_v;
    let gap = (occ.objective - dual_value).abs();
    let pass = stopped_in_contact && u_dot_alpha.abs() <= 1e-8 && gap <= 1e-8;
    Ok(OptimalityReport {
        stopped_in_contact,
        worst_stopped_slack,
        u_dot_alpha,
        gap,
        pass,
    })
}

/// One-step stop-go audit: at a base state `x`, continuing at `(a1, x)`
/// while stopping at `(a2, x)` is consistent only if the one-step cost
/// increment is no smaller where the rule stops.
#[derive(Debug, Clone)]
pub struct StopGoReport {
    pub violations: Vec<StopGoViolation>,
}

#[derive(Debug, Clone)]
pub struct StopGoViolation {
    pub x: usize,
    pub continue_aux: usize,
    pub stop_aux: usize,
    pub l_continue: f64,
    pub l_stop: f64,
}

pub fn check_stop_go(
    aug: &AugmentedChain,
    cost: &CostModel,
    occ: &OccupationSolution,
) -> Result<StopGoReport> {
    let l = costs::lagrangian(aug, cost)?;
    let slack = 1e-8 * (1.0 + linalg::inf_norm(&l));
    let mut violations = Vec::new();
    for x in 0..aug.base.n {
        for a1 in 0..aug.n_aux {
            let i1 = aug.idx(a1, x);
            if occ.u[i1] <= SUPPORT_TOL {
                continue;
            }
            for a2 in 0..aug.n_aux {
                let i2 = aug.idx(a2, x);
                if occ.s[i2] <= SUPPORT_TOL {
                    continue;
                }
                if l[i2] < l[i1] - slack {
                    violations.push(StopGoViolation {
                        x,
                        continue_aux: a1,
                        stop_aux: a2,
                        l_continue: l[i1],
                        l_stop: l[i2],
                    });
                }
            }
        }
    }
    Ok(StopGoReport { violations })
}

/// Discrete local time: expected continuation visits at `x_bar` before
/// stopping.  Zero certifies the halting point of an ergodic minimal
/// embedding.
pub fn local_time_check(occ: &OccupationSolution, x_bar: usize) -> f64 {
    occ.u[x_bar]
}

/// Barrier structure report under a twist direction.
#[derive(Debug, Clone)]
pub struct BarrierReport {
    pub bang_bang: bool,
    /// Stopped visits all lie beyond the continued visits in the twist
    /// direction, per base state: the rule is a barrier hitting time on
    /// the visited region.
    pub monotone: bool,
    /// The contact hitting rule reproduces nu exactly.
    pub nu_reproduced: bool,
    pub law_error: f64,
    /// And reproduces the optimal cost.
    pub cost_reproduced: bool,
    pub cost_error: f64,
}

pub fn barrier_report(
    aug: &AugmentedChain,
    cost: &CostModel,
    psi: &Potential,
    vf: &ValueFunction,
    occ: &OccupationSolution,
    twist: &TwistReport,
    mu: &Measure,
    nu: &Measure,
) -> Result<BarrierReport> {
    let rule = crate::lp::extract_stopping_rule(occ);
    let mut bang_bang = true;
    for i in 0..aug.m() {
        if occ.u[i] + occ.s[i] > SUPPORT_TOL {
            let p = rule.p[i];
            if p > 1e-9 && p < 1.0 - 1e-9 {
                bang_bang = false;
            }
        }
    }
    let contact = contact_set(aug, psi, vf);
    // Barrier structure on the visited region: at each base state, every
    // continued visit precedes every stopped visit in the twist
    // direction.  (The contact mask itself is not canonical at states no
    // mass reaches — the LP dual is under-determined there — so the
    // check reads the occupation supports.)
    let mut monotone = true;
    for x in 0..aug.base.n {
        let mut last_cont = f64::NEG_INFINITY;
        let mut first_stop = f64::INFINITY;
        for a in 0..aug.n_aux {
            let i = aug.idx(a, x);
            let k = twist.sign * aug.aux_coords[a][twist.axis];
            if occ.u[i] > SUPPORT_TOL {
                last_cont = last_cont.max(k);
            }
            if occ.s[i] > SUPPORT_TOL {
                first_stop = first_stop.min(k);
            }
        }
        if last_cont > first_stop + 1e-12 {
            monotone = false;
        }
    }
    let push = pushforward(aug, cost, &hitting_rule(&contact), mu)?;
    let law_error: f64 = (0..aug.base.n)
        .map(|x| (push.law[x] - nu.mass[x]).abs())
        .sum::<f64>()
        + (push.killed_mass - nu.cemetery_mass).abs();
    let cost_error = (push.expected_cost - occ.objective).abs();
    Ok(BarrierReport {
        bang_bang,
        monotone,
        nu_reproduced: law_error <= 1e-10,
        law_error,
        cost_reproduced: cost_error <= 1e-8,
        cost_error,
    })
}

/// `(1 - beta) P`: geometric killing regularization of an ergodic chain,
/// in absorbing mode.
pub fn regularize(chain: &Chain, beta: f64) -> Result<Chain> {
    assert!(chain.mode == Mode::Ergodic);
    let raw: Vec<Vec<f64>> = (0..chain.n)
        .map(|x| chain.row(x).iter().map(|&v| (1.0 - beta) * v).collect())
        .collect();
    Chain::validate(raw, Mode::Absorbing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{build_augmented, AuxSpec};
    use crate::fixtures::{g5, three_cycle, unit_time_cost};
    use crate::lp;

    fn g5_time_aug(t_max: usize) -> AugmentedChain {
        build_augmented(&g5(), &AuxSpec::Time { t_max }).unwrap()
    }

    fn boundary_rule(aug: &AugmentedChain) -> StoppingRule {
        let p: Vec<f64> = (0..aug.m())
            .map(|i| {
                let x = aug.proj_x(i);
                if x == 0 || x == 4 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        StoppingRule::new(p)
    }

    #[test]
    fn pushforward_boundary_rule() {
        let aug = g5_time_aug(100);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let push = pushforward(&aug, &cost, &boundary_rule(&aug), &mu).unwrap();
        assert!((push.law[0] - 0.5).abs() < 1e-9);
        assert!((push.law[4] - 0.5).abs() < 1e-9);
        assert!((push.expected_time - 4.0).abs() < 1e-9);
        assert!((push.expected_cost - 4.0).abs() < 1e-9);
        assert!(push.killed_mass < 1e-9);
    }

    #[test]
    fn pushforward_stop_immediately() {
        let aug = g5_time_aug(20);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let rule = StoppingRule::new(vec![1.0; aug.m()]);
        let push = pushforward(&aug, &cost, &rule, &mu).unwrap();
        assert_eq!(push.law[2], 1.0);
        assert_eq!(push.expected_time, 0.0);
    }

    #[test]
    fn pushforward_regularized_cycle() {
        // Killed 3-cycle, stop at state 1: E[T] converges to the exact
        // ergodic value 2 as beta -> 0.
        let mut prev_err = f64::INFINITY;
        for beta in [1e-2, 1e-3, 1e-4] {
            let c = regularize(&three_cycle(), beta).unwrap();
            let aug = build_augmented(&c, &AuxSpec::InitialState).unwrap();
            let cost = CostModel::from_tables(vec![0.0; aug.m()], vec![0.0; aug.n_aux]);
            let mu = Measure::dirac(3, 0);
            let p: Vec<f64> = (0..aug.m())
                .map(|i| if aug.proj_x(i) == 1 { 1.0 } else { 0.0 })
                .collect();
            let push = pushforward(&aug, &cost, &StoppingRule::new(p), &mu).unwrap();
            let err = (push.expected_time - 2.0).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-3);
    }

    #[test]
    fn pushforward_inverts_stopping_rule() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.375, 0.0, 0.25, 0.0, 0.375], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let rule = lp::extract_stopping_rule(&occ);
        let push = pushforward(&aug, &cost, &rule, &mu).unwrap();
        // Tolerance matches the LP's own feasibility tolerance: the
        // inversion identity is exact, but the vertex satisfies the
        // balance rows only to FEAS_TOL.
        for i in 0..aug.m() {
            assert!((push.u[i] - occ.u[i]).abs() < 1e-8);
            assert!((push.s[i] - occ.s[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn optimality_certificate_g5() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.5, 0.0, 0.0, 0.0, 0.5], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = lp::dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        let rep =
            verify_optimality(&aug, &cost, &cert.psi, &cert.v_snell, &occ, &mu, &nu).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn perturbed_psi_fails_gap() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.5, 0.0, 0.0, 0.0, 0.5], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = lp::dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        let mut noisy = cert.psi.clone();
        noisy.values[1] += 1e-2;
        let vf = snell::snell_envelope(&aug, &cost, &noisy).unwrap();
        let rep = verify_optimality(&aug, &cost, &noisy, &vf, &occ, &mu, &nu).unwrap();
        assert!(rep.gap > 1e-8);
        assert!(!rep.pass);
    }

    #[test]
    fn early_stopping_rule_fails_certificate() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.5, 0.0, 0.0, 0.0, 0.5], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = lp::dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        // Uniform coin-flip stopping is not supported on the contact set.
        let rule = StoppingRule::new(vec![0.5; aug.m()]);
        let push = pushforward(&aug, &cost, &rule, &mu).unwrap();
        let fake = OccupationSolution {
            u: push.u.clone(),
            s: push.s.clone(),
            killed_mass: push.killed_mass,
            objective: push.expected_cost,
            expected_time: push.expected_time,
            duals_balance: vec![0.0; aug.m()],
            duals_marginal: vec![0.0; 5],
        };
        let rep =
            verify_optimality(&aug, &cost, &cert.psi, &cert.v_snell, &fake, &mu, &nu).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn stop_go_clean_at_optimum() {
        let aug = g5_time_aug(60);
        let cost = crate::fixtures::root_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.0, 0.5, 0.0, 0.5, 0.0], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let rep = check_stop_go(&aug, &cost, &occ).unwrap();
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn stop_go_detects_swapped_rule() {
        // Stop half the mass at (1, 1) and keep continuing at (3, 1):
        // with Lambda = t^2 the one-step increment is cheaper where the
        // rule stops, a stop-go violation.
        let aug = g5_time_aug(60);
        let cost = crate::fixtures::root_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let mut p = vec![0.0; aug.m()];
        for i in 0..aug.m() {
            let x = aug.proj_x(i);
            if x == 0 || x == 4 {
                p[i] = 1.0;
            }
        }
        p[aug.idx(1, 1)] = 0.5;
        let push = pushforward(&aug, &cost, &StoppingRule::new(p), &mu).unwrap();
        let fake = OccupationSolution {
            u: push.u.clone(),
            s: push.s.clone(),
            killed_mass: push.killed_mass,
            objective: push.expected_cost,
            expected_time: push.expected_time,
            duals_balance: vec![],
            duals_marginal: vec![],
        };
        let rep = check_stop_go(&aug, &cost, &fake).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| v.x == 1 && v.stop_aux == 1 && v.continue_aux > 1));
    }

    #[test]
    fn local_time_three_cycle() {
        let c = three_cycle();
        let mu = Measure::dirac(3, 0);
        let nu = Measure::dirac(3, 1);
        let occ = lp::ergodic_filling_lp(&c, &mu, &nu).unwrap();
        assert!(local_time_check(&occ, 1).abs() < 1e-9);
        assert!(local_time_check(&occ, 0) > 1.0);
    }

    #[test]
    fn root_barrier_structure() {
        let aug = g5_time_aug(60);
        let cost = crate::fixtures::root_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.0, 0.5, 0.0, 0.5, 0.0], 0.0).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = lp::dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        let twist = costs::check_twist(&aug, &cost, &mu).unwrap();
        assert_eq!(twist.sign, 1.0);
        let rep = barrier_report(
            &aug, &cost, &cert.psi, &cert.v_snell, &occ, &twist, &mu, &nu,
        )
        .unwrap();
        assert!(rep.bang_bang, "{rep:?}");
        assert!(rep.monotone, "{rep:?}");
        assert!(rep.nu_reproduced, "law error {}", rep.law_error);
        assert!(rep.cost_reproduced, "cost error {}", rep.cost_error);
    }

    #[test]
    fn rost_reverse_barrier() {
        // Concave increasing time cost; the target keeps only the first
        // boundary arrivals and lets the rest die, which is exactly a
        // reverse barrier.
        let aug = g5_time_aug(60);
        let cost = crate::fixtures::rost_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.25, 0.0, 0.0, 0.0, 0.25], 0.5).unwrap();
        let occ = lp::primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = lp::dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        let twist = costs::check_twist(&aug, &cost, &mu).unwrap();
        assert_eq!(twist.sign, -1.0);
        let rep = barrier_report(
            &aug, &cost, &cert.psi, &cert.v_snell, &occ, &twist, &mu, &nu,
        )
        .unwrap();
        assert!(rep.bang_bang, "{rep:?}");
        assert!(rep.monotone, "{rep:?}");
        // The stopped support is the first boundary visit.
        assert!((occ.s[aug.idx(2, 0)] - 0.25).abs() < 1e-8);
        assert!((occ.s[aug.idx(2, 4)] - 0.25).abs() < 1e-8);
    }
}
