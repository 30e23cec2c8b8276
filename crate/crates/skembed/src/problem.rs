//! Problem-file ingestion: a versioned JSON schema describing a chain,
//! a pair of marginals, a cost in one of the supported auxiliary
//! decompositions, and solver options.  Everything is re-validated on
//! load; schema problems surface as `InvalidProblem` with a field path.

use std::path::Path;

use serde::Deserialize;

use crate::chain::{Chain, Measure, Mode};
use crate::costs::{build_augmented, AugmentedChain, AuxSpec, CostModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Supported problem-file schema version.
pub const SCHEMA_VERSION: u32 = 1;
/// Automatic Time-horizon choice: smallest `t` with survival mass
/// `|P^t 1|_inf` at most this.
pub const HORIZON_TOL: f64 = 1e-9;
/// Cap on the automatic horizon search.
const HORIZON_CAP: usize = 100_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Plain(Vec<f64>),
    WithCemetery {
        mass: Vec<f64>,
        #[serde(default)]
        cemetery: f64,
    },
}

impl MeasureSpec {
    fn build(&self, field: &str, n: usize) -> Result<Measure> {
        let (mass, cem) = match self {
            MeasureSpec::Plain(m) => (m.clone(), 0.0),
            MeasureSpec::WithCemetery { mass, cemetery } => (mass.clone(), *cemetery),
        };
        if mass.len() != n {
            return Err(Error::InvalidProblem(format!(
                "{field}: expected {n} entries, got {}",
                mass.len()
            )));
        }
        Measure::new(mass, cem)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    /// Constant running cost per continuation step, realized as
    /// `Lambda(t) = rate * t` on the Time auxiliary (the kill step also
    /// counts).  State-dependent running costs do not fit the finite
    /// auxiliary decomposition and are rejected.
    Running { rate: f64 },
    /// `Lambda` a function of elapsed time, either `t^power` or an
    /// explicit table indexed by `t` (whose length then fixes the
    /// horizon).  Cemetery values default to the frozen-at-death
    /// convention `Lambda_cem(t) = Lambda(t)`.
    Time {
        #[serde(default)]
        power: Option<f64>,
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        cemetery_values: Option<Vec<f64>>,
        #[serde(default)]
        grad_values: Option<Vec<f64>>,
    },
    /// `Lambda(x0, x) = c(x0, x)` on the frozen-initial-state
    /// auxiliary; `table` is row-major `n x n` indexed `(x0, x)`.
    InitialState {
        table: Vec<Vec<f64>>,
        #[serde(default)]
        cemetery_values: Option<Vec<f64>>,
        #[serde(default)]
        grad_table: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        grad_cemetery: Option<Vec<f64>>,
    },
    /// Fully explicit coupled auxiliary: coordinates, product kernel,
    /// initial map, and cost tables over augmented states.
    ExplicitAug {
        aux_coords: Vec<Vec<f64>>,
        aux_kernel: Vec<Vec<f64>>,
        initial_aux: Vec<usize>,
        lambda: Vec<f64>,
        lambda_cem: Vec<f64>,
        #[serde(default)]
        grad: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        grad_cem: Option<Vec<Vec<f64>>>,
    },
}

fn default_method() -> String {
    "lp".to_string()
}

fn default_tol() -> f64 {
    1e-8
}

fn default_seed() -> u64 {
    42
}

fn default_beta_schedule() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default = "default_beta_schedule")]
    pub beta_schedule: Vec<f64>,
    /// "lp" | "iterative" | "both"
    #[serde(default = "default_method")]
    pub method: String,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: default_tol(),
            seed: default_seed(),
            t_max: None,
            beta_schedule: default_beta_schedule(),
            method: default_method(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema: u32,
    pub mode: Mode,
    #[serde(default)]
    pub states: Option<Vec<String>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub mu: MeasureSpec,
    pub nu: MeasureSpec,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    #[serde(default)]
    pub options: Option<Options>,
}

/// A fully validated problem, ready for the solver pipeline.
#[derive(Debug, Clone)]
pub struct Problem {
    pub chain: Chain,
    pub mu: Measure,
    pub nu: Measure,
    /// Present when a cost was supplied (ergodic problems need none).
    pub aug: Option<AugmentedChain>,
    pub cost: Option<CostModel>,
    pub options: Options,
}

/// Smallest `t` with `|P^t 1|_inf <= tol`: the automatic Time horizon.
pub fn auto_horizon(chain: &Chain, tol: f64) -> Result<usize> {
    let mut survive = vec![1.0; chain.n];
    for t in 0..=HORIZON_CAP {
        let max = survive.iter().fold(0.0_f64, |m, &v| m.max(v));
        if max <= tol {
            return Ok(t);
        }
        survive = chain.kernel.matvec(&survive);
    }
    Err(Error::InvalidProblem(format!(
        "no horizon below {HORIZON_CAP} reaches survival tolerance {tol:e}"
    )))
}

fn build_time_cost(
    aug: &AugmentedChain,
    t_max: usize,
    values: &Option<Vec<f64>>,
    power: Option<f64>,
    cemetery_values: &Option<Vec<f64>>,
    grad_values: &Option<Vec<f64>>,
) -> Result<CostModel> {
    let table: Vec<f64> = match (values, power) {
        (Some(v), None) => v.clone(),
        (None, Some(p)) => (0..=t_max).map(|t| (t as f64).powf(p)).collect(),
        _ => {
            return Err(Error::InvalidProblem(
                "cost: time kind needs exactly one of `values` or `power`".into(),
            ))
        }
    };
    if table.len() != t_max + 1 {
        return Err(Error::InvalidProblem(format!(
            "cost.values: expected {} entries for horizon {t_max}, got {}",
            t_max + 1,
            table.len()
        )));
    }
    let cem = match cemetery_values {
        Some(c) => {
            if c.len() != t_max + 1 {
                return Err(Error::InvalidProblem(
                    "cost.cemetery_values: length must match the horizon".into(),
                ));
            }
            c.clone()
        }
        None => table.clone(),
    };
    let lambda: Vec<f64> = (0..aug.m()).map(|i| table[aug.proj_a(i)]).collect();
    let mut cost = CostModel::from_tables(lambda, cem);
    let grad_t: Option<Vec<f64>> = match (grad_values, power) {
        (Some(g), _) => {
            if g.len() != t_max + 1 {
                return Err(Error::InvalidProblem(
                    "cost.grad_values: length must match the horizon".into(),
                ));
            }
            Some(g.clone())
        }
        (None, Some(p)) => Some((0..=t_max).map(|t| p * (t as f64).powf(p - 1.0).max(0.0)).collect()),
        (None, None) => None,
    };
    if let Some(g) = grad_t {
        let grad: Vec<Vec<f64>> = (0..aug.m()).map(|i| vec![g[aug.proj_a(i)]]).collect();
        let grad_cem: Vec<Vec<f64>> = (0..=t_max).map(|t| vec![g[t]]).collect();
        cost = cost.with_gradient(grad, grad_cem);
    }
    Ok(cost)
}

fn build_cost(
    chain: &Chain,
    spec: &CostSpec,
    opts: &Options,
    mu: &Measure,
) -> Result<(AugmentedChain, CostModel)> {
    match spec {
        CostSpec::Running { rate } => {
            if *rate < 0.0 {
                return Err(Error::InvalidProblem(
                    "cost.rate: running rate must be nonnegative".into(),
                ));
            }
            let t_max = match opts.t_max {
                Some(t) => t,
                None => auto_horizon(chain, HORIZON_TOL)?,
            };
            let aug = build_augmented(chain, &AuxSpec::Time { t_max })?;
            // rate * t accumulated, the kill step charged like any
            // other: Lambda_cem(t) = rate * (t + 1).
            let lambda: Vec<f64> = (0..aug.m())
                .map(|i| rate * aug.proj_a(i) as f64)
                .collect();
            let cem: Vec<f64> = (0..=t_max).map(|t| rate * (t as f64 + 1.0)).collect();
            let cost = CostModel::from_tables(lambda, cem);
            Ok((aug, cost))
        }
        CostSpec::Time {
            power,
            values,
            cemetery_values,
            grad_values,
        } => {
            let t_max = match (opts.t_max, values) {
                (Some(t), _) => t,
                (None, Some(v)) if !v.is_empty() => v.len() - 1,
                (None, _) => auto_horizon(chain, HORIZON_TOL)?,
            };
            let aug = build_augmented(chain, &AuxSpec::Time { t_max })?;
            let cost = build_time_cost(&aug, t_max, values, *power, cemetery_values, grad_values)?;
            Ok((aug, cost))
        }
        CostSpec::InitialState {
            table,
            cemetery_values,
            grad_table,
            grad_cemetery,
        } => {
            let n = chain.n;
            if table.len() != n || table.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidProblem(format!(
                    "cost.table: expected {n}x{n} entries"
                )));
            }
            let aug = build_augmented(chain, &AuxSpec::InitialState)?;
            let lambda: Vec<f64> = (0..aug.m())
                .map(|i| table[aug.proj_a(i)][aug.proj_x(i)])
                .collect();
            let cem = match cemetery_values {
                Some(c) if c.len() == n => c.clone(),
                Some(_) => {
                    return Err(Error::InvalidProblem(
                        "cost.cemetery_values: expected one entry per initial state".into(),
                    ))
                }
                None => vec![0.0; n],
            };
            let mut cost = CostModel::from_tables(lambda, cem);
            if let Some(g) = grad_table {
                if g.len() != n || g.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidProblem(format!(
                        "cost.grad_table: expected {n}x{n} entries"
                    )));
                }
                let grad: Vec<Vec<f64>> = (0..aug.m())
                    .map(|i| vec![g[aug.proj_a(i)][aug.proj_x(i)]])
                    .collect();
                let gc = match grad_cemetery {
                    Some(v) if v.len() == n => v.clone(),
                    Some(_) => {
                        return Err(Error::InvalidProblem(
                            "cost.grad_cemetery: expected one entry per initial state".into(),
                        ))
                    }
                    None => vec![0.0; n],
                };
                cost = cost.with_gradient(grad, gc.into_iter().map(|v| vec![v]).collect());
            }
            let _ = mu;
            Ok((aug, cost))
        }
        CostSpec::ExplicitAug {
            aux_coords,
            aux_kernel,
            initial_aux,
            lambda,
            lambda_cem,
            grad,
            grad_cem,
        } => {
            let n_aux = aux_coords.len();
            let m = n_aux * chain.n;
            if aux_kernel.len() != m || aux_kernel.iter().any(|r| r.len() != m) {
                return Err(Error::InvalidProblem(format!(
                    "cost.aux_kernel: expected {m}x{m} entries"
                )));
            }
            if initial_aux.len() != chain.n {
                return Err(Error::InvalidProblem(
                    "cost.initial_aux: expected one entry per base state".into(),
                ));
            }
            let kernel = Matrix::from_rows(aux_kernel);
            let aug = build_augmented(
                chain,
                &AuxSpec::ExplicitKernel {
                    aux_coords: aux_coords.clone(),
                    kernel,
                    initial_aux: initial_aux.clone(),
                },
            )?;
            if lambda.len() != m || lambda_cem.len() != n_aux {
                return Err(Error::InvalidProblem(
                    "cost.lambda / cost.lambda_cem: length mismatch".into(),
                ));
            }
            let mut cost = CostModel::from_tables(lambda.clone(), lambda_cem.clone());
            if let (Some(g), Some(gc)) = (grad, grad_cem) {
                cost = cost.with_gradient(g.clone(), gc.clone());
            }
            Ok((aug, cost))
        }
    }
}

/// Parse and fully validate a problem from JSON text.
pub fn parse(json: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(json)
        .map_err(|e| Error::InvalidProblem(format!("schema: {e}")))?;
    if file.schema != SCHEMA_VERSION {
        return Err(Error::InvalidProblem(format!(
            "schema: unsupported version {}, expected {SCHEMA_VERSION}",
            file.schema
        )));
    }
    let chain = Chain::validate_labeled(file.p.clone(), file.mode, file.states.clone())?;
    let mu = file.mu.build("mu", chain.n)?;
    let nu = file.nu.build("nu", chain.n)?;
    let options = file.options.clone().unwrap_or_default();
    match options.method.as_str() {
        "lp" | "iterative" | "both" => {}
        other => {
            return Err(Error::InvalidProblem(format!(
                "options.method: unknown method {other:?}"
            )))
        }
    }
    let (aug, cost) = match &file.cost {
        Some(spec) => {
            if matches!(chain.mode, Mode::Ergodic) {
                return Err(Error::InvalidProblem(
                    "cost: ergodic problems take no cost (minimal expected time is implied)"
                        .into(),
                ));
            }
            let (aug, cost) = build_cost(&chain, spec, &options, &mu)?;
            cost.validate(&aug)?;
            (Some(aug), Some(cost))
        }
        None => {
            if matches!(chain.mode, Mode::Absorbing) {
                return Err(Error::InvalidProblem(
                    "cost: absorbing problems need a cost specification".into(),
                ));
            }
            (None, None)
        }
    };
    Ok(Problem {
        chain,
        mu,
        nu,
        aug,
        cost,
        options,
    })
}

/// Load a problem from a JSON file on disk.
pub fn load(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g5_json(cost: &str) -> String {
        format!(
            r#"{{
  "schema": 1,
  "mode": "absorbing",
  "P": [[0,0,0,0,0],[0.5,0,0.5,0,0],[0,0.5,0,0.5,0],[0,0,0.5,0,0.5],[0,0,0,0,0]],
  "mu": [0,0,1,0,0],
  "nu": [0.5,0,0,0,0.5],
  "cost": {cost}
}}"#
        )
    }

    #[test]
    fn loads_unit_time_problem() {
        let p = parse(&g5_json(r#"{"kind": "running", "rate": 1.0}"#)).unwrap();
        let aug = p.aug.unwrap();
        let cost = p.cost.unwrap();
        // ell = 1 on every interior row under the charged-kill running
        // convention.
        let l = crate::costs::lagrangian(&aug, &cost).unwrap();
        for i in 0..aug.m() {
            if !aug.forced_kill[i] {
                assert!((l[i] - 1.0).abs() < 1e-12, "l[{i}] = {}", l[i]);
            }
        }
    }

    #[test]
    fn auto_horizon_matches_survival_decay() {
        let p = parse(&g5_json(r#"{"kind": "running", "rate": 1.0}"#)).unwrap();
        let t = auto_horizon(&p.chain, HORIZON_TOL).unwrap();
        // Interior spectral radius cos(pi/4): need about 60 steps to
        // push survival below 1e-9.
        assert!((55..=70).contains(&t), "{t}");
        let aug = p.aug.unwrap();
        assert_eq!(aug.n_aux, t + 1);
    }

    #[test]
    fn root_cost_from_power() {
        let p = parse(&g5_json(r#"{"kind": "time", "power": 2}"#)).unwrap();
        let aug = p.aug.unwrap();
        let cost = p.cost.unwrap();
        assert_eq!(cost.lambda[aug.idx(3, 1)], 9.0);
        assert_eq!(cost.lambda_cem[4], 16.0);
        let g = cost.grad.as_ref().unwrap();
        assert_eq!(g[aug.idx(3, 1)], vec![6.0]);
    }

    #[test]
    fn explicit_time_table_sets_horizon() {
        let p = parse(&g5_json(
            r#"{"kind": "time", "values": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]}"#,
        ))
        .unwrap();
        assert_eq!(p.aug.unwrap().n_aux, 11);
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let bad = g5_json(r#"{"kind": "running", "rate": 1.0}"#).replace("\"schema\": 1", "\"schema\": 2");
        match parse(&bad) {
            Err(Error::InvalidProblem(msg)) => assert!(msg.contains("version")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_kernel_row() {
        let bad = g5_json(r#"{"kind": "running", "rate": 1.0}"#)
            .replace("[0.5,0,0.5,0,0]", "[0.7,0,0.7,0,0]");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn rejects_unknown_cost_field() {
        let bad = g5_json(r#"{"kind": "running", "rate": 1.0, "extra": true}"#);
        match parse(&bad) {
            Err(Error::InvalidProblem(msg)) => assert!(msg.contains("extra"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nu_cemetery_mass_accepted() {
        let json = g5_json(r#"{"kind": "running", "rate": 1.0}"#).replace(
            r#""nu": [0.5,0,0,0,0.5]"#,
            r#""nu": {"mass": [0.25,0,0,0,0.25], "cemetery": 0.5}"#,
        );
        let p = parse(&json).unwrap();
        assert_eq!(p.nu.cemetery_mass, 0.5);
    }

    #[test]
    fn ergodic_problem_needs_no_cost() {
        let json = r#"{
  "schema": 1,
  "mode": "ergodic",
  "P": [[0,0.5,0.5],[0.5,0,0.5],[0.5,0.5,0]],
  "mu": [1,0,0],
  "nu": [0,1,0]
}"#;
        let p = parse(json).unwrap();
        assert!(p.aug.is_none());
    }

    #[test]
    fn initial_state_cost_table() {
        let cost = r#"{"kind": "initial-state",
            "table": [[0,1,2,3,4],[0,0,1,2,3],[2,1,0,1,2],[3,2,1,0,0],[4,3,2,1,0]]}"#;
        let p = parse(&g5_json(cost)).unwrap();
        let aug = p.aug.unwrap();
        assert_eq!(aug.n_aux, 5);
        assert_eq!(p.cost.unwrap().lambda[aug.idx(2, 4)], 2.0);
    }
}
