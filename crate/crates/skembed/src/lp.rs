//! Occupation-measure linear programs: the primal embedding LP, dual
//! potential extraction with an independently certified gap, and the
//! ergodic filling-scheme LP.
//!
//! Primal variables are expected visit counts: `u(a,x)` continuation
//! mass and `s(a,x)` stopped mass.  Balance says mass arrives either
//! from the initial law or from a continued visit; the marginal rows pin
//! the stopped law to `nu`.  The dual multipliers are exactly the value
//! function (balance, negated) and the potential `psi` (marginals), so
//! one LP solve yields both sides of the duality.

use crate::chain::{Chain, Measure, Mode};
use crate::costs::{self, AugmentedChain, CostModel};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::simplex::{self, LpOutcome, LpProblem, Op, Sense};
use crate::snell::{self, ValueFunction};
use crate::verify::StoppingRule;

/// Acceptance tolerance on the certified duality gap.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OccupationSolution {
    /// Continuation mass per augmented state (expected visits that move on).
    pub u: Vec<f64>,
    /// Stopped mass per augmented state.
    pub s: Vec<f64>,
    /// Mass absorbed by the cemetery: `sum u(a,x) kill(a,x)`.
    pub killed_mass: f64,
    /// Optimal cost `sum u . l`.
    pub objective: f64,
    /// `E[T] = sum u`: each continued visit is one time step.
    pub expected_time: f64,
    /// Multipliers of the balance rows (one per augmented state).
    pub duals_balance: Vec<f64>,
    /// Multipliers of the nu-marginal rows (one per base state).
    pub duals_marginal: Vec<f64>,
}

/// Minimize `sum u . l` over embeddings of `nu` from `mu`.
pub fn primal_embedding_lp(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    nu: &Measure,
) -> Result<OccupationSolution> {
    let l = costs::lagrangian(aug, cost)?;
    let m = aug.m();
    let n = aug.base.n;
    let mu_tilde = aug.initial_law(mu);
    // Columns: u_0..u_{m-1}, s_0..s_{m-1}.
    let mut objective = vec![0.0; 2 * m];
    objective[..m].copy_from_slice(&l);
    let mut lp = LpProblem::new(2 * m, objective, Sense::Minimize);
    // Balance: u_i + s_i - sum_j P_aug(j, i) u_j = mu_tilde_i.
    for i in 0..m {
        let mut row = vec![0.0; 2 * m];
        row[i] += 1.0;
        row[m + i] = 1.0;
        for j in 0..m {
            row[j] -= aug.p_aug[(j, i)];
        }
        lp.constrain(row, Op::Eq, mu_tilde[i]);
    }
    // Marginal: sum_a s(a, x) = nu(x).
    for x in 0..n {
        let mut row = vec![0.0; 2 * m];
        for a in 0..aug.n_aux {
            row[m + aug.idx(a, x)] = 1.0;
        }
        lp.constrain(row, Op::Eq, nu.mass[x]);
    }
    // Crash basis: seat u_i in balance row i.  Those columns form
    // I - P_aug^T, invertible for absorbing dynamics, and the basic
    // solution (the never-stopping occupation, s = 0) is nonnegative, so
    // phase 1 only has to fix the n marginal rows.
    let hint: Vec<Option<usize>> = (0..m)
        .map(Some)
        .chain(std::iter::repeat(None).take(n))
        .collect();
    match simplex::solve_lp_hinted(&lp, &hint)? {
        LpOutcome::Optimal(sol) => {
            let u = sol.x[..m].to_vec();
            let s = sol.x[m..].to_vec();
            let killed_mass: f64 = (0..m).map(|i| u[i] * aug.kill_deficit(i)).sum();
            let expected_time: f64 = u.iter().sum();
            Ok(OccupationSolution {
                u,
                s,
                killed_mass,
                objective: sol.objective,
                expected_time,
                duals_balance: sol.duals[..m].to_vec(),
                duals_marginal: sol.duals[m..].to_vec(),
            })
        }
        LpOutcome::Infeasible(_) => Err(Error::Infeasible),
        LpOutcome::Unbounded { .. } => Err(Error::Unbounded),
    }
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub psi: Potential,
    /// Value function implied by the balance multipliers.
    pub v_lp: Vec<f64>,
    /// Independent Snell re-solve of the extracted psi.
    pub v_snell: ValueFunction,
    /// Dual value `int psi dnu - E^mu[V^psi at the initial states]`.
    pub dual_value: f64,
    pub gap: f64,
}

/// Extract the dual optimizers from a solved primal and certify a zero
/// gap with a Snell solve that does not reuse any LP data.
pub fn dual_from_lp(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    nu: &Measure,
    occ: &OccupationSolution,
) -> Result<DualCertificate> {
    let psi = Potential::new(occ.duals_marginal.clone());
    let v_lp: Vec<f64> = occ.duals_balance.iter().map(|&y| -y).collect();
    let v_snell = snell::snell_envelope(aug, cost, &psi)?;
    let mut e_mu_v = 0.0;
    for (x, &w) in mu.mass.iter().enumerate() {
        if w > 0.0 {
            e_mu_v += w * v_snell.v[aug.idx(aug.initial_aux[x], x)];
        }
    }
    let dual_value = psi.integrate(nu) - e_mu_v;
    let gap = (occ.objective - dual_value).abs();
    if gap > GAP_TOL {
        return Err(Error::GapTooLarge { gap, tol: GAP_TOL });
    }
    Ok(DualCertificate {
        psi,
        v_lp,
        v_snell,
        dual_value,
        gap,
    })
}

/// Ergodic filling scheme: minimize total occupation `sum u` subject to
/// `mu + P^T u - u = nu`, no cemetery.
pub fn ergodic_filling_lp(
    chain: &Chain,
    mu: &Measure,
    nu: &Measure,
) -> Result<OccupationSolution> {
    if chain.mode != Mode::Ergodic {
        return Err(Error::NotErgodic);
    }
    let n = chain.n;
    let mut lp = LpProblem::new(n, vec![1.0; n], Sense::Minimize);
    // (I - P^T) u = mu - nu; the rows sum to zero, so one is redundant
    // and the solver's zero-level artificial handling covers it.
    for r in 0..n {
        let coeffs: Vec<f64> = (0..n)
            .map(|x| if x == r { 1.0 } else { 0.0 } - chain.kernel[(x, r)])
            .collect();
        lp.constrain(coeffs, Op::Eq, mu.mass[r] - nu.mass[r]);
    }
    match simplex::solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => {
            let u = sol.x.clone();
            Ok(OccupationSolution {
                expected_time: u.iter().sum(),
                s: nu.mass.clone(),
                killed_mass: 0.0,
                objective: sol.objective,
                duals_balance: sol.duals,
                duals_marginal: vec![],
                u,
            })
        }
        LpOutcome::Infeasible(_) => Err(Error::Infeasible),
        LpOutcome::Unbounded { .. } => Err(Error::Unbounded),
    }
}

/// Memoryless randomized rule realizing an occupation solution:
/// `p = s / (s + u)` where mass passes through, else stop.
pub fn extract_stopping_rule(occ: &OccupationSolution) -> StoppingRule {
    let p: Vec<f64> = occ
        .u
        .iter()
        .zip(&occ.s)
        .map(|(&u, &s)| {
            let total = u + s;
            if total > 1e-14 {
                (s / total).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect();
    StoppingRule::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{build_augmented, AuxSpec};
    use crate::fixtures::{g5, root_cost, three_cycle, unit_time_cost};
    use crate::potential;

    fn g5_time_aug(t_max: usize) -> AugmentedChain {
        build_augmented(&g5(), &AuxSpec::Time { t_max }).unwrap()
    }

    fn boundary_split() -> Measure {
        Measure::new(vec![0.5, 0.0, 0.0, 0.0, 0.5], 0.0).unwrap()
    }

    #[test]
    fn identical_marginals_stop_at_once() {
        let aug = g5_time_aug(30);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let occ = primal_embedding_lp(&aug, &cost, &mu, &mu).unwrap();
        assert!(occ.objective.abs() < 1e-9);
        assert!(occ.expected_time.abs() < 1e-9);
        assert!((occ.s[aug.idx(0, 2)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn g5_expected_time_objective() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = boundary_split();
        let occ = primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        assert!((occ.objective - 4.0).abs() < 1e-8, "{}", occ.objective);
        assert!((occ.expected_time - 4.0).abs() < 1e-8);
        // Stopped mass sits on the boundary states only.
        let stopped_at_0: f64 = (0..aug.n_aux).map(|t| occ.s[aug.idx(t, 0)]).sum();
        assert!((stopped_at_0 - 0.5).abs() < 1e-8);
        let h = potential::expected_embedding_time(&aug.base, &mu, &nu).unwrap();
        assert!((occ.objective - h).abs() < 1e-8);
    }

    #[test]
    fn g5_dual_certificate() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = boundary_split();
        let occ = primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let cert = dual_from_lp(&aug, &cost, &mu, &nu, &occ).unwrap();
        assert!(cert.gap <= GAP_TOL);
        assert!((cert.dual_value - 4.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_target_errors() {
        let aug = g5_time_aug(30);
        let cost = unit_time_cost(&aug);
        let mu = boundary_split();
        let nu = Measure::dirac(5, 2);
        assert!(matches!(
            primal_embedding_lp(&aug, &cost, &mu, &nu),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn root_instance_objective_one() {
        let aug = g5_time_aug(60);
        let cost = root_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.0, 0.5, 0.0, 0.5, 0.0], 0.0).unwrap();
        let occ = primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        assert!((occ.objective - 1.0).abs() < 1e-8);
        // All stopping happens at t = 1.
        assert!((occ.s[aug.idx(1, 1)] - 0.5).abs() < 1e-8);
        assert!((occ.s[aug.idx(1, 3)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn stopping_rule_g5() {
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = boundary_split();
        let occ = primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let rule = extract_stopping_rule(&occ);
        // Stop exactly on the boundary, continue in the interior.
        for t in 0..40 {
            for x in [0usize, 4] {
                if occ.s[aug.idx(t, x)] > 1e-9 {
                    assert!((rule.p[aug.idx(t, x)] - 1.0).abs() < 1e-9);
                }
            }
            for x in 1..4 {
                if occ.u[aug.idx(t, x)] > 1e-9 {
                    assert!(rule.p[aug.idx(t, x)] < 1e-9);
                }
            }
        }
    }

    #[test]
    fn randomized_split_rule() {
        // nu = 1/4 delta_2 + 3/8 delta_0 + 3/8 delta_4 from delta_2
        // forces a randomized stop at the start state.
        let aug = g5_time_aug(80);
        let cost = unit_time_cost(&aug);
        let mu = Measure::dirac(5, 2);
        let nu = Measure::new(vec![0.375, 0.0, 0.25, 0.0, 0.375], 0.0).unwrap();
        let occ = primal_embedding_lp(&aug, &cost, &mu, &nu).unwrap();
        let total_stopped_2: f64 = (0..aug.n_aux).map(|t| occ.s[aug.idx(t, 2)]).sum();
        assert!((total_stopped_2 - 0.25).abs() < 1e-8);
        let rule = extract_stopping_rule(&occ);
        // Somewhere at x = 2 the rule must genuinely randomize.
        let randomized = (0..aug.n_aux).any(|t| {
            let p = rule.p[aug.idx(t, 2)];
            p > 1e-6 && p < 1.0 - 1e-6 && occ.s[aug.idx(t, 2)] > 1e-9
        });
        assert!(randomized);
    }

    #[test]
    fn ergodic_filling_three_cycle() {
        let c = three_cycle();
        let mu = Measure::dirac(3, 0);
        let nu = Measure::dirac(3, 1);
        let occ = ergodic_filling_lp(&c, &mu, &nu).unwrap();
        assert!((occ.objective - 2.0).abs() < 1e-9);
        // Zero local time at the halting point.
        assert!(occ.u[1].abs() < 1e-9);
        // Oracle from the balance solve: u = (4/3, 0, 2/3).
        assert!((occ.u[0] - 4.0 / 3.0).abs() < 1e-9);
        assert!((occ.u[2] - 2.0 / 3.0).abs() < 1e-9);
        let same = ergodic_filling_lp(&c, &mu, &mu).unwrap();
        assert!(same.objective.abs() < 1e-9);
    }

    #[test]
    fn ergodic_filling_matches_potential_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for trial in 0..20 {
            let n = rng.gen_range(3..=8);
            // Random ergodic chain: strictly positive rows, normalized.
            let mut p = vec![vec![0.0; n]; n];
            for row in p.iter_mut() {
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = rng.gen_range(0.05..1.0);
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            let c = Chain::validate(p, Mode::Ergodic).unwrap();
            let mut mu = vec![0.0; n];
            let mut nu = vec![0.0; n];
            for x in 0..n {
                mu[x] = rng.gen_range(0.0..1.0);
                nu[x] = rng.gen_range(0.0..1.0);
            }
            let ms: f64 = mu.iter().sum();
            let ns: f64 = nu.iter().sum();
            let mu = Measure::new(mu.iter().map(|v| v / ms).collect(), 0.0).unwrap();
            let nu = Measure::new(nu.iter().map(|v| v / ns).collect(), 0.0).unwrap();
            let occ = ergodic_filling_lp(&c, &mu, &nu).unwrap();
            let pot = potential::ergodic_min_time(&c, &mu, &nu).unwrap();
            assert!(
                (occ.objective - pot.value).abs() < 1e-8,
                "trial {trial}: lp {} vs potential {}",
                occ.objective,
                pot.value
            );
        }
    }

    #[test]
    fn expected_time_invariant_across_vertices() {
        // Perturbing the objective moves the LP to different optimal
        // vertices of the feasible set, but E[T] stays 4.
        use rand::{Rng, SeedableRng};
        let aug = g5_time_aug(80);
        let mu = Measure::dirac(5, 2);
        let nu = boundary_split();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            // Random nonnegative Lagrangian-like objective over u keeps
            // the feasible set fixed; every vertex is an embedding.
            let l = costs::lagrangian(&aug, &unit_time_cost(&aug)).unwrap();
            let m = aug.m();
            let mut objective = vec![0.0; 2 * m];
            for i in 0..m {
                objective[i] = l[i] * rng.gen_range(0.1..2.0);
            }
            let mu_tilde = aug.initial_law(&mu);
            let mut lp = LpProblem::new(2 * m, objective, Sense::Minimize);
            for i in 0..m {
                let mut row = vec![0.0; 2 * m];
                row[i] += 1.0;
                row[m + i] = 1.0;
                for j in 0..m {
                    row[j] -= aug.p_aug[(j, i)];
                }
                lp.constrain(row, Op::Eq, mu_tilde[i]);
            }
            for x in 0..5 {
                let mut row = vec![0.0; 2 * m];
                for a in 0..aug.n_aux {
                    row[m + aug.idx(a, x)] = 1.0;
                }
                lp.constrain(row, Op::Eq, nu.mass[x]);
            }
            let hint: Vec<Option<usize>> = (0..m)
                .map(Some)
                .chain(std::iter::repeat(None).take(5))
                .collect();
            match simplex::solve_lp_hinted(&lp, &hint).unwrap() {
                LpOutcome::Optimal(sol) => {
                    let et: f64 = sol.x[..m].iter().sum();
                    assert!((et - 4.0).abs() < 1e-8, "E[T] = {et}");
                }
                other => panic!("expected optimal, got {other:?}"),
            }
        }
    }
}
