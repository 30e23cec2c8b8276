//! Finite-state Markov chain core: sub-stochastic kernels with an
//! implicit cemetery state, generator action, expected lifetimes, and
//! invariant laws.
//!
//! The cemetery is never stored as an explicit state.  The kill
//! probability at `x` is the row deficit `1 - sum_y P(x, y)`, and every
//! function on states carries an explicit cemetery value (0 by the
//! normalization used throughout).

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Slack allowed on row sums and probability-mass totals.
pub const MASS_TOL: f64 = 1e-12;
/// Edges with probability above this threshold count for connectivity.
pub const EDGE_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `(I - P)` invertible with nonnegative inverse: finite expected
    /// lifetime from every state.
    Absorbing,
    /// Stochastic rows and irreducible: no cemetery mass.
    Ergodic,
}

/// Validated finite-state chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub n: usize,
    pub kernel: Matrix,
    pub mode: Mode,
    pub labels: Option<Vec<String>>,
}

impl Chain {
    /// Validate a raw kernel against a declared mode.
    pub fn validate(raw: Vec<Vec<f64>>, mode: Mode) -> Result<Chain> {
        Self::validate_labeled(raw, mode, None)
    }

    pub fn validate_labeled(
        raw: Vec<Vec<f64>>,
        mode: Mode,
        labels: Option<Vec<String>>,
    ) -> Result<Chain> {
        let n = raw.len();
        for (i, row) in raw.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if sum > 1.0 + MASS_TOL {
                return Err(Error::RowSumExceedsOne { row: i, sum });
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: l.len(),
                });
            }
        }
        let kernel = Matrix::from_rows(&raw);
        let chain = Chain {
            n,
            kernel,
            mode,
            labels,
        };
        match mode {
            Mode::Absorbing => chain.verify_absorbing()?,
            Mode::Ergodic => chain.verify_ergodic()?,
        }
        Ok(chain)
    }

    /// Kill probability at `x`: the row deficit.
    pub fn kill_deficit(&self, x: usize) -> f64 {
        let row = self.row(x);
        (1.0 - row.iter().sum::<f64>()).max(0.0)
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.kernel.data[x * self.n..(x + 1) * self.n]
    }

    fn verify_absorbing(&self) -> Result<()> {
        // Spectral radius strictly < 1 is equivalent to solvability of
        // (I - P) e = 1 with e >= 1: such an e dominates the partial
        // sums of P^k 1, so the total mass decays however slowly the
        // killing acts.
        let e = self
            .solve_lifetime()
            .map_err(|_| Error::ModeMismatch(
                "declared absorbing but mass does not decay under P".into(),
            ))?;
        if e.iter().any(|&x| x < 1.0 - 1e-9) {
            return Err(Error::ModeMismatch(
                "declared absorbing but mass does not decay under P".into(),
            ));
        }
        // Cross-check the solve: residual of (I - P) e = 1.
        let pe = self.kernel.matvec(&e);
        let scale = 1.0 + linalg::inf_norm(&e);
        for x in 0..self.n {
            if (e[x] - pe[x] - 1.0).abs() > 1e-8 * scale {
                return Err(Error::ModeMismatch(
                    "declared absorbing but mass does not decay under P".into(),
                ));
            }
        }
        Ok(())
    }

    fn verify_ergodic(&self) -> Result<()> {
        for i in 0..self.n {
            let sum: f64 = self.row(i).iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::ModeMismatch(format!(
                    "declared ergodic but row {i} sums to {sum}"
                )));
            }
        }
        let comps = self.strongly_connected_components();
        if comps != 1 {
            return Err(Error::Reducible(comps));
        }
        Ok(())
    }

    /// Number of strongly connected components of the positive-entry graph.
    fn strongly_connected_components(&self) -> usize {
        // Tarjan, iterative.
        let n = self.n;
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut next_index = 0usize;
        let mut comps = 0usize;
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| self.kernel[(x, y)] > EDGE_TOL)
                    .collect()
            })
            .collect();
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut work: Vec<(usize, usize)> = vec![(root, 0)];
            while let Some(&mut (v, ref mut pi)) = work.last_mut() {
                if *pi == 0 {
                    index[v] = next_index;
                    low[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                }
                if *pi < succ[v].len() {
                    let w = succ[v][*pi];
                    *pi += 1;
                    if index[w] == usize::MAX {
                        work.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    if low[v] == index[v] {
                        comps += 1;
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            if w == v {
                                break;
                            }
                        }
                    }
                    work.pop();
                    if let Some(&mut (u, _)) = work.last_mut() {
                        low[u] = low[u].min(low[v]);
                    }
                }
            }
        }
        comps
    }

    fn solve_lifetime(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] -= self.kernel[(i, j)];
            }
        }
        linalg::solve(&a, &vec![1.0; n])
    }

    /// Expected steps to the cemetery from each state: solves `(I - P) e = 1`.
    pub fn expected_lifetime(&self) -> Result<Vec<f64>> {
        if self.mode != Mode::Absorbing {
            return Err(Error::ModeMismatch(
                "expected_lifetime requires absorbing mode".into(),
            ));
        }
        self.solve_lifetime()
    }

    /// Invariant distribution of an ergodic chain: `gamma P = gamma`,
    /// strictly positive, total mass 1.
    pub fn invariant_distribution(&self) -> Result<Measure> {
        if self.mode != Mode::Ergodic {
            return Err(Error::NotErgodic);
        }
        let n = self.n;
        // Solve gamma (P - I) = 0 with sum(gamma) = 1 via the augmented
        // square system (P - I)^T + 1 1^T/n style row replacement: replace
        // the last equation with the normalization.
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                // row i of A is column i of (P - I): sum_j gamma_j (P(j,i)-d_ij)
                a[(i, j)] = self.kernel[(j, i)] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = vec![0.0; n];
        b[n - 1] = 1.0;
        let gamma = linalg::solve(&a, &b)?;
        for (i, &g) in gamma.iter().enumerate() {
            if g <= 0.0 {
                return Err(Error::ZeroGammaState(i));
            }
        }
        Ok(Measure {
            mass: gamma,
            cemetery_mass: 0.0,
        })
    }

    /// Generator action: `(Delta f)(x) = sum_y P(x,y) f(y) + kill(x) f_cem - f(x)`.
    pub fn generator_apply(&self, f: &[f64], f_cemetery: f64) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        let mut out = self.kernel.matvec(f);
        for x in 0..self.n {
            out[x] += self.kill_deficit(x) * f_cemetery - f[x];
        }
        Ok(out)
    }
}

/// Nonnegative mass vector over states plus cemetery mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub mass: Vec<f64>,
    pub cemetery_mass: f64,
}

impl Measure {
    pub fn dirac(n: usize, x: usize) -> Measure {
        let mut mass = vec![0.0; n];
        mass[x] = 1.0;
        Measure {
            mass,
            cemetery_mass: 0.0,
        }
    }

    pub fn new(mass: Vec<f64>, cemetery_mass: f64) -> Result<Measure> {
        if mass.iter().any(|&m| m < -MASS_TOL) || cemetery_mass < -MASS_TOL {
            return Err(Error::InvalidProblem("negative measure mass".into()));
        }
        Ok(Measure {
            mass,
            cemetery_mass,
        })
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.cemetery_mass
    }

    pub fn is_probability(&self) -> bool {
        (self.total() - 1.0).abs() <= 1e-9
    }

    /// Integral of `f` extended by `f_cem` on the cemetery.
    pub fn integrate(&self, f: &[f64], f_cem: f64) -> f64 {
        linalg::dot(&self.mass, f) + self.cemetery_mass * f_cem
    }
}
