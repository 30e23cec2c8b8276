//! Potential theory on the chain: réduite (supermedian envelope),
//! balayage order, the time potential solving `Delta h = 1`, and
//! ergodic potentials `U^sigma_gamma`.

use crate::chain::{Chain, Measure, Mode};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::simplex::{self, LpOutcome, LpProblem, Op, Sense};

/// Value-iteration sweep cap for the réduite.
const MAX_SWEEPS: usize = 1_000_000;

/// Function on base states with the cemetery pinned at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
}

impl Potential {
    pub fn new(values: Vec<f64>) -> Potential {
        Potential { values }
    }

    pub fn zero(n: usize) -> Potential {
        Potential {
            values: vec![0.0; n],
        }
    }

    pub fn integrate(&self, m: &Measure) -> f64 {
        // Cemetery value is 0 by convention, so cemetery mass drops out.
        m.integrate(&self.values, 0.0)
    }
}

/// Least supermedian majorant of `psi`, by monotone value iteration with
/// a final linear polish on the continuation region.
///
/// In ergodic mode every supermedian function is constant, so the
/// réduite of a bounded `psi` is the constant `max(sup psi, 0)`.
pub fn reduite(chain: &Chain, psi: &Potential) -> Result<Potential> {
    let n = chain.n;
    assert_eq!(psi.values.len(), n);
    if chain.mode == Mode::Ergodic {
        let sup = psi.values.iter().fold(0.0_f64, |m, &v| m.max(v));
        return Ok(Potential::new(vec![sup; n]));
    }
    let mut r = psi.values.clone();
    let mut residual = f64::INFINITY;
    for _sweep in 0..MAX_SWEEPS {
        let pr = chain.kernel.matvec(&r);
        let mut change: f64 = 0.0;
        for x in 0..n {
            let next = psi.values[x].max(pr[x]);
            change = change.max((next - r[x]).abs());
            r[x] = next;
        }
        residual = change;
        if change <= 1e-13 * (1.0 + linalg::inf_norm(&r)) {
            return Ok(polish_reduite(chain, psi, r));
        }
    }
    Err(Error::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// Solve the continuation region exactly: where `P r > psi`, the
/// envelope is harmonic, giving a linear system that removes the last
/// few ulps of iteration error.
fn polish_reduite(chain: &Chain, psi: &Potential, r: Vec<f64>) -> Potential {
    let n = chain.n;
    let scale = 1.0 + linalg::inf_norm(&r);
    let cont: Vec<usize> = (0..n)
        .filter(|&x| r[x] > psi.values[x] + 1e-9 * scale)
        .collect();
    if cont.is_empty() {
        return Potential::new(r);
    }
    let k = cont.len();
    let mut a = Matrix::identity(k);
    let mut b = vec![0.0; k];
    for (ri, &x) in cont.iter().enumerate() {
        for (ci, &y) in cont.iter().enumerate() {
            a[(ri, ci)] -= chain.kernel[(x, y)];
        }
        for y in 0..n {
            if !cont.contains(&y) {
                b[ri] += chain.kernel[(x, y)] * psi.values[y];
            }
        }
    }
    match linalg::solve(&a, &b) {
        Ok(sol) => {
            let mut out = psi.values.clone();
            for (ri, &x) in cont.iter().enumerate() {
                out[x] = sol[ri].max(psi.values[x]);
            }
            // Keep the polish only if it did not break the envelope.
            let pr = chain.kernel.matvec(&out);
            let ok = (0..n).all(|x| pr[x] <= out[x] + 1e-10 * scale);
            if ok {
                Potential::new(out)
            } else {
                Potential::new(r)
            }
        }
        Err(_) => Potential::new(r),
    }
}

/// `P phi <= phi` componentwise (cemetery at 0).
pub fn is_supermedian(chain: &Chain, phi: &Potential) -> bool {
    let p = chain.kernel.matvec(&phi.values);
    (0..chain.n).all(|x| p[x] <= phi.values[x] + 1e-12)
}

#[derive(Debug, Clone)]
pub enum Balayage {
    Ordered,
    /// A supermedian `phi` with `int phi dnu - int phi dmu > 0`,
    /// witnessing that no embedding exists.
    NotOrdered { certificate: Potential },
}

/// Decide `mu < nu` in the balayage order by feasibility of the
/// embedding mass-balance system, with a Farkas-derived supermedian
/// certificate on failure.
pub fn check_balayage(chain: &Chain, mu: &Measure, nu: &Measure) -> Result<Balayage> {
    if chain.mode == Mode::Ergodic {
        // Supermedian functions are constant, so the order always holds
        // for probability targets without cemetery mass.
        return Ok(Balayage::Ordered);
    }
    let n = chain.n;
    // Feasibility of (I - P^T) u = mu - nu with u >= 0: substituting the
    // stopped mass s = nu into the occupation balance.
    let mut lp = LpProblem::new(n, vec![0.0; n], Sense::Minimize);
    for r in 0..n {
        let coeffs: Vec<f64> = (0..n)
            .map(|x| if x == r { 1.0 } else { 0.0 } - chain.kernel[(x, r)])
            .collect();
        lp.constrain(coeffs, Op::Eq, mu.mass[r] - nu.mass[r]);
    }
    // Crash basis u_r per row: the columns form I - P^T, invertible in
    // absorbing mode; the hint is accepted exactly when the basic solve
    // is nonnegative, i.e. when the pair is already visibly ordered.
    let hint: Vec<Option<usize>> = (0..n).map(Some).collect();
    match simplex::solve_lp_hinted(&lp, &hint)? {
        LpOutcome::Optimal(_) => Ok(Balayage::Ordered),
        LpOutcome::Infeasible(cert) => {
            if !cert.verify(&lp, 1e-9) {
                return Err(Error::NumericalBreakdown(
                    "Farkas certificate failed re-verification".into(),
                ));
            }
            // y^T columns <= 0 reads (y - P y)(x) <= 0, so phi = -y is
            // supermedian, and y . (mu - nu) > 0 gives the separation.
            let phi = Potential::new(cert.y.iter().map(|&v| -v).collect());
            if !is_supermedian(chain, &phi) {
                return Err(Error::NumericalBreakdown(
                    "balayage certificate is not supermedian".into(),
                ));
            }
            if phi.integrate(nu) - phi.integrate(mu) <= 1e-9 {
                return Err(Error::NumericalBreakdown(
                    "balayage certificate does not separate".into(),
                ));
            }
            Ok(Balayage::NotOrdered { certificate: phi })
        }
        LpOutcome::Unbounded { .. } => Err(Error::Unbounded),
    }
}

/// The potential `h` with `Delta h = 1` and `h(cemetery) = 0`:
/// `h = -expected_lifetime`.
pub fn time_potential(chain: &Chain) -> Result<Potential> {
    let e = chain.expected_lifetime()?;
    Ok(Potential::new(e.iter().map(|&v| -v).collect()))
}

/// `int h dnu - int h dmu`: the expected embedding time, which is the
/// same for every embedding stopping rule.
pub fn expected_embedding_time(chain: &Chain, mu: &Measure, nu: &Measure) -> Result<f64> {
    match check_balayage(chain, mu, nu)? {
        Balayage::Ordered => {}
        Balayage::NotOrdered { .. } => return Err(Error::NotOrdered),
    }
    let h = time_potential(chain)?;
    Ok(h.integrate(nu) - h.integrate(mu))
}

/// Ergodic potential: solves `(Delta U)(x) = 1 - sigma(x)/gamma(x)` with
/// `sum_x U(x) gamma(x) = 0`.
pub fn ergodic_potential(chain: &Chain, sigma: &Measure) -> Result<Potential> {
    if chain.mode != Mode::Ergodic {
        return Err(Error::NotErgodic);
    }
    let gamma = chain.invariant_distribution()?;
    let n = chain.n;
    let rhs: Vec<f64> = (0..n)
        .map(|x| 1.0 - sigma.mass[x] / gamma.mass[x])
        .collect();
    // (P - I) is rank n-1 with left kernel gamma; adding the rank-one
    // term 1 gamma^T pins the gamma-mean of U at 0 and makes the system
    // invertible.
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = chain.kernel[(i, j)] - if i == j { 1.0 } else { 0.0 } + gamma.mass[j];
        }
    }
    let u = linalg::solve(&a, &rhs)?;
    Ok(Potential::new(u))
}

/// Ergodic potential of the time-reversed chain
/// `P_hat(x, y) = gamma(y) P(y, x) / gamma(x)`, returned through the
/// identity `gamma o U_hat = w` where `(I - P^T) w = sigma - gamma`.
///
/// For reversible chains this coincides with `ergodic_potential`.  The
/// reversed version is the one whose difference formula below equals the
/// filling-scheme LP for every ergodic chain: `gamma o (U_hat^mu -
/// U_hat^nu)` is exactly a particular solution of the occupation balance
/// `(I - P^T) u = mu - nu`, and shifting along the invariant direction
/// until some entry vanishes gives the LP minimum.
pub fn ergodic_potential_reversed(chain: &Chain, sigma: &Measure) -> Result<Potential> {
    if chain.mode != Mode::Ergodic {
        return Err(Error::NotErgodic);
    }
    let gamma = chain.invariant_distribution()?;
    let n = chain.n;
    let rhs: Vec<f64> = (0..n).map(|x| sigma.mass[x] - gamma.mass[x]).collect();
    // (I - P^T) w = sigma - gamma, completed by gamma 1^T; summing the
    // rows shows the completion forces sum w = 0, which is exactly the
    // gamma-mean-zero normalization of U_hat = w / gamma.
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] =
                if i == j { 1.0 } else { 0.0 } - chain.kernel[(j, i)] + gamma.mass[i];
        }
    }
    let w = linalg::solve(&a, &rhs)?;
    let u: Vec<f64> = (0..n)
        .map(|x| {
            if gamma.mass[x] <= 0.0 {
                return Err(Error::ZeroGammaState(x));
            }
            Ok(w[x] / gamma.mass[x])
        })
        .collect::<Result<_>>()?;
    Ok(Potential::new(u))
}

/// Minimal expected embedding time in ergodic mode:
/// `max_x (U^nu(x) - U^mu(x))` over the reversed-chain potentials,
/// attained at the halting points.
pub struct ErgodicMinTime {
    pub value: f64,
    /// Smallest-index maximizer.
    pub halting_point: usize,
    /// Every maximizer within tolerance.
    pub maximizers: Vec<usize>,
}

pub fn ergodic_min_time(chain: &Chain, mu: &Measure, nu: &Measure) -> Result<ErgodicMinTime> {
    let u_mu = ergodic_potential_reversed(chain, mu)?;
    let u_nu = ergodic_potential_reversed(chain, nu)?;
    let diff: Vec<f64> = (0..chain.n)
        .map(|x| u_nu.values[x] - u_mu.values[x])
        .collect();
    let value = diff.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let maximizers: Vec<usize> = (0..chain.n)
        .filter(|&x| diff[x] >= value - 1e-9)
        .collect();
    Ok(ErgodicMinTime {
        value,
        halting_point: maximizers[0],
        maximizers,
    })
}
