//! Seeded Monte Carlo validation: sample paths of the augmented chain,
//! execute a randomized stopping rule, and compare the empirical law of
//! `X_T` and the empirical moments against the exact pushforward and LP
//! values.  Every path draws from its own counter-indexed RNG stream,
//! so results are deterministic per seed and independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::Measure;
use crate::costs::{AugmentedChain, CostModel};
use crate::error::{Error, Result};
use crate::verify::StoppingRule;

/// Fraction of truncated paths above which sampling is rejected.
const TRUNCATION_BUDGET: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Path-length cap; `None` means `50 x max expected lifetime`.
    pub max_steps: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 100_000,
            seed: 42,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimStats {
    pub n_paths: usize,
    /// Empirical law of `X_T` over base states.
    pub law: Vec<f64>,
    pub cemetery_mass: f64,
    pub mean_t: f64,
    pub se_t: f64,
    pub mean_cost: f64,
    pub se_cost: f64,
    pub truncated: usize,
}

/// Sample `n_paths` trajectories under a memoryless rule.  Each path is
/// driven by `ChaCha8(seed)` on stream `path index`; truncated paths
/// (those hitting `max_steps` unstopped) are counted and the run fails
/// if they exceed 0.1% of the total.
pub fn sample_paths(
    aug: &AugmentedChain,
    cost: &CostModel,
    mu: &Measure,
    rule: &StoppingRule,
    config: &SimConfig,
) -> Result<SimStats> {
    assert!(config.n_paths >= 1, "need at least one path");
    let n = aug.base.n;
    let max_steps = match config.max_steps {
        Some(m) => m,
        None => {
            let e = aug.base.expected_lifetime()?;
            let max_life = e.iter().fold(1.0_f64, |m, &v| m.max(v));
            (50.0 * max_life).ceil() as usize
        }
    };
    let total_mass: f64 = mu.mass.iter().sum();
    let mut counts = vec![0u64; n];
    let mut cem_count = 0u64;
    let mut truncated = 0usize;
    let mut sum_t = 0.0;
    let mut sum_t2 = 0.0;
    let mut sum_c = 0.0;
    let mut sum_c2 = 0.0;
    for path in 0..config.n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(path as u64);
        // Initial base state from mu.
        let mut r = rng.gen::<f64>() * total_mass;
        let mut x0 = n - 1;
        for (x, &w) in mu.mass.iter().enumerate() {
            if r < w {
                x0 = x;
                break;
            }
            r -= w;
        }
        let mut i = aug.idx(aug.initial_aux[x0], x0);
        let mut t = 0usize;
        let mut outcome: Option<(Option<usize>, f64)> = None;
        for _ in 0..=max_steps {
            if rng.gen::<f64>() < rule.p[i] {
                outcome = Some((Some(aug.proj_x(i)), cost.lambda[i]));
                break;
            }
            // One transition of the augmented kernel; the row deficit
            // is the kill probability.
            let mut r = rng.gen::<f64>();
            let mut next = None;
            for (j, &pij) in aug.row(i).iter().enumerate() {
                if r < pij {
                    next = Some(j);
                    break;
                }
                r -= pij;
            }
            t += 1;
            match next {
                Some(j) => i = j,
                None => {
                    outcome = Some((None, cost.lambda_cem[aug.proj_a(i)]));
                    break;
                }
            }
            if t > max_steps {
                break;
            }
        }
        match outcome {
            Some((state, c)) => {
                match state {
                    Some(x) => counts[x] += 1,
                    None => cem_count += 1,
                }
                sum_t += t as f64;
                sum_t2 += (t as f64) * (t as f64);
                sum_c += c;
                sum_c2 += c * c;
            }
            None => truncated += 1,
        }
    }
    if (truncated as f64) > TRUNCATION_BUDGET * (config.n_paths as f64) {
        return Err(Error::ExcessTruncation {
            truncated,
            total: config.n_paths,
        });
    }
    let done = (config.n_paths - truncated) as f64;
    let mean_t = sum_t / done;
    let mean_c = sum_c / done;
    let var_t = (sum_t2 / done - mean_t * mean_t).max(0.0);
    let var_c = (sum_c2 / done - mean_c * mean_c).max(0.0);
    Ok(SimStats {
        n_paths: config.n_paths,
        law: counts.iter().map(|&c| c as f64 / done).collect(),
        cemetery_mass: cem_count as f64 / done,
        mean_t,
        se_t: (var_t / done).sqrt(),
        mean_cost: mean_c,
        se_cost: (var_c / done).sqrt(),
        truncated,
    })
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub tv: f64,
    pub tv_bound: f64,
    pub max_z: f64,
    pub cost_z: Option<f64>,
    pub pass: bool,
}

/// Compare an empirical law (and optionally the mean cost) against the
/// exact values: total-variation distance within
/// `max(0.01, 4 sqrt(n_states / n_paths))` and every per-state z-score
/// within 4.
pub fn compare_empirical(
    stats: &SimStats,
    exact: &Measure,
    exact_cost: Option<f64>,
) -> CompareReport {
    let n = exact.mass.len();
    let n_paths = stats.n_paths as f64;
    let mut tv = 0.5 * (stats.cemetery_mass - exact.cemetery_mass).abs();
    let mut max_z: f64 = 0.0;
    for x in 0..=n {
        let (emp, p) = if x < n {
            (stats.law[x], exact.mass[x])
        } else {
            (stats.cemetery_mass, exact.cemetery_mass)
        };
        if x < n {
            tv += 0.5 * (emp - p).abs();
        }
        // Binomial standard error with a one-count variance floor so a
        // state with exact mass 0 still flags spurious empirical hits.
        let se = ((p * (1.0 - p)).max(1.0 / n_paths) / n_paths).sqrt();
        max_z = max_z.max((emp - p).abs() / se);
    }
    let cost_z = exact_cost.map(|c| (stats.mean_cost - c) / stats.se_cost.max(1e-300));
    let tv_bound = (4.0 * ((n + 1) as f64 / n_paths).sqrt()).max(0.01);
    let pass = tv <= tv_bound
        && max_z <= 4.0
        && cost_z.map(|z| z.abs() <= 4.0).unwrap_or(true);
    CompareReport {
        tv,
        tv_bound,
        max_z,
        cost_z,
        pass,
    }
}
