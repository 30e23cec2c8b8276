//! Command-line surface: problem ingestion, the check / solve /
//! ergodic / simulate / report pipelines, exit-code policy, and batch
//! orchestration.  Exit codes: 0 success, 1 input error, 2 infeasible
//! (with certificate), 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::chain::Mode;
use crate::costs::{self, TwistOutcome};
use crate::error::{Error, Result};
use crate::potential::{self, Balayage};
use crate::problem::{self, Problem};
use crate::sim::{self, SimConfig};
use crate::verify;
use crate::{dual, lp, report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Map an error to the CLI exit-code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NegativeEntry { .. }
        | Error::RowSumExceedsOne { .. }
        | Error::ModeMismatch(_)
        | Error::Reducible(_)
        | Error::NotErgodic
        | Error::DimensionMismatch { .. }
        | Error::MarginalMismatch { .. }
        | Error::MissingCemeteryValue { .. }
        | Error::NoGradient
        | Error::SubmartingaleViolated { .. }
        | Error::InvalidProblem(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_INPUT,
        Error::NotOrdered | Error::Infeasible => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "skembed",
    about = "Optimal Skorokhod embedding on finite-state Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem files (JSON).  Several files form a batch; SKEMBED_THREADS
    /// caps batch parallelism.
    #[arg(required = true)]
    pub problems: Vec<PathBuf>,
    /// Override the problem's gap tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Override the problem's RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver method: lp | iterative | both.
    #[arg(long)]
    pub method: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a barrier SVG here (solve/report with a Time auxiliary).
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide embeddability and verify the structural cost assumptions.
    Check(CommonArgs),
    /// Solve the optimal embedding: primal LP, dual certificate,
    /// verification, optional iterative dual and barrier extraction.
    Solve(CommonArgs),
    /// Minimal expected embedding time on an ergodic chain.
    Ergodic(CommonArgs),
    /// Monte Carlo validation of the solved stopping rule.
    Simulate(CommonArgs),
    /// Solve and write the full artifact set (JSON, CSV, SVG).
    Report(CommonArgs),
}

fn apply_overrides(p: &mut Problem, args: &CommonArgs) -> Result<()> {
    if let Some(t) = args.tol {
        p.options.tol = t;
    }
    if let Some(s) = args.seed {
        p.options.seed = s;
    }
    if let Some(m) = &args.method {
        match m.as_str() {
            "lp" | "iterative" | "both" => p.options.method = m.clone(),
            other => {
                return Err(Error::InvalidProblem(format!(
                    "--method: unknown method {other:?}"
                )))
            }
        }
    }
    Ok(())
}

/// Embeddability + structural checks.  Exit 0 when ordered, 2 when not.
pub fn cmd_check(p: &Problem) -> Result<(Value, i32)> {
    let mut doc = json!({
        "schema": report::SCHEMA_VERSION,
        "tolerances": report::tolerances(),
    });
    if let (Some(aug), Some(cost)) = (&p.aug, &p.cost) {
        let sub = costs::check_submartingale(aug, cost, &p.mu)?;
        let (d_star, _) = costs::check_semi_supermartingale(aug, cost, &p.mu)?;
        doc["submartingale"] = json!({
            "pass": sub.passes,
            "worst_value": sub.worst_value,
        });
        doc["d_star"] = json!(d_star);
        if cost.grad.is_some() {
            let twist = costs::check_twist(aug, cost, &p.mu)?;
            doc["twist"] = report::twist_json(&twist);
        }
    }
    match potential::check_balayage(&p.chain, &p.mu, &p.nu)? {
        Balayage::Ordered => {
            doc["ordered"] = json!(true);
            Ok((doc, EXIT_OK))
        }
        Balayage::NotOrdered { certificate } => {
            // Re-verify the Farkas certificate independently before
            // reporting it.
            let valid = potential::is_supermedian(&p.chain, &certificate)
                && certificate.integrate(&p.nu) - certificate.integrate(&p.mu) >= 1e-9;
            doc["ordered"] = json!(false);
            doc["certificate"] = json!({
                "phi": certificate.values,
                "margin": certificate.integrate(&p.nu) - certificate.integrate(&p.mu),
                "verified": valid,
            });
            Ok((doc, EXIT_INFEASIBLE))
        }
    }
}

struct Solved {
    doc: Value,
    svg: Option<String>,
    csv: String,
}

fn solve_pipeline(p: &Problem) -> Result<Solved> {
    let aug = p.aug.as_ref().ok_or_else(|| {
        Error::InvalidProblem("solve: absorbing problem with a cost required".into())
    })?;
    let cost = p.cost.as_ref().unwrap();
    let sub = costs::check_submartingale(aug, cost, &p.mu)?;
    if !sub.passes {
        let (a, x) = sub.worst_state.unwrap_or((0, 0));
        return Err(Error::SubmartingaleViolated {
            index: aug.idx(a, x),
            value: sub.worst_value,
        });
    }
    let occ = lp::primal_embedding_lp(aug, cost, &p.mu, &p.nu)?;
    let cert = lp::dual_from_lp(aug, cost, &p.mu, &p.nu, &occ)?;
    let optimality =
        verify::verify_optimality(aug, cost, &cert.psi, &cert.v_snell, &occ, &p.mu, &p.nu)?;
    let stop_go = verify::check_stop_go(aug, cost, &occ)?;
    let iterative = match p.options.method.as_str() {
        "iterative" | "both" => {
            let opts = dual::DualOptions {
                tol: p.options.tol.max(dual::DUAL_TOL),
                ..dual::DualOptions::default()
            };
            Some(dual::solve_dual_iterative(aug, cost, &p.mu, &p.nu, &opts)?)
        }
        _ => None,
    };
    let (twist, barrier) = if cost.grad.is_some() {
        let twist = costs::check_twist(aug, cost, &p.mu)?;
        let barrier = if matches!(twist.outcome, TwistOutcome::Holds) {
            Some(verify::barrier_report(
                aug,
                cost,
                &cert.psi,
                &cert.v_snell,
                &occ,
                &twist,
                &p.mu,
                &p.nu,
            )?)
        } else {
            None
        };
        (Some(twist), barrier)
    } else {
        (None, None)
    };
    let doc = report::solve_report(
        &occ,
        &cert,
        &optimality,
        &stop_go,
        twist.as_ref(),
        barrier.as_ref(),
        iterative.as_ref().map(|(psi, diag)| (psi, diag)),
    );
    let contact = verify::contact_set(aug, &cert.psi, &cert.v_snell);
    let svg = if aug.dim() >= 1 {
        Some(report::barrier_svg(aug, &occ, Some(&contact.mask)))
    } else {
        None
    };
    let csv = report::occupation_csv(aug, &occ);
    Ok(Solved { doc, svg, csv })
}

pub fn cmd_solve(p: &Problem, plot: Option<&Path>) -> Result<(Value, i32)> {
    let solved = solve_pipeline(p)?;
    if let (Some(path), Some(svg)) = (plot, &solved.svg) {
        std::fs::write(path, svg)?;
    }
    Ok((solved.doc, EXIT_OK))
}

pub fn cmd_ergodic(p: &Problem) -> Result<(Value, i32)> {
    if p.chain.mode != Mode::Ergodic {
        return Err(Error::NotErgodic);
    }
    let gamma = p.chain.invariant_distribution()?;
    let u_mu = potential::ergodic_potential(&p.chain, &p.mu)?;
    let u_nu = potential::ergodic_potential(&p.chain, &p.nu)?;
    let min_time = potential::ergodic_min_time(&p.chain, &p.mu, &p.nu)?;
    let filling = lp::ergodic_filling_lp(&p.chain, &p.mu, &p.nu)?;
    let cross = (filling.objective - min_time.value).abs();
    if cross > 1e-8 {
        return Err(Error::NumericalBreakdown(format!(
            "filling LP ({}) and potential formula ({}) disagree by {cross:.3e}",
            filling.objective, min_time.value
        )));
    }
    let local_time = verify::local_time_check(&filling, min_time.halting_point);
    let doc = json!({
        "schema": report::SCHEMA_VERSION,
        "tolerances": report::tolerances(),
        "invariant": gamma.mass,
        "potential_mu": u_mu.values,
        "potential_nu": u_nu.values,
        "value": min_time.value,
        "halting_point": min_time.halting_point,
        "maximizers": min_time.maximizers,
        "filling_objective": filling.objective,
        "occupation": filling.u,
        "local_time_at_halting_point": local_time,
    });
    Ok((doc, EXIT_OK))
}

pub fn cmd_simulate(p: &Problem, out_csv: Option<&Path>) -> Result<(Value, i32)> {
    let aug = p.aug.as_ref().ok_or_else(|| {
        Error::InvalidProblem("simulate: absorbing problem with a cost required".into())
    })?;
    let cost = p.cost.as_ref().unwrap();
    let occ = lp::primal_embedding_lp(aug, cost, &p.mu, &p.nu)?;
    let rule = lp::extract_stopping_rule(&occ);
    let config = SimConfig {
        seed: p.options.seed,
        ..SimConfig::default()
    };
    let stats = sim::sample_paths(aug, cost, &p.mu, &rule, &config)?;
    let compare = sim::compare_empirical(&stats, &p.nu, Some(occ.objective));
    if let Some(path) = out_csv {
        std::fs::write(path, report::empirical_csv(&stats))?;
    }
    let doc = report::simulate_report(&stats, &compare);
    let code = if compare.pass { EXIT_OK } else { EXIT_NUMERICAL };
    Ok((doc, code))
}

pub fn cmd_report(p: &Problem, out_dir: &Path, plot: Option<&Path>) -> Result<(Value, i32)> {
    let solved = solve_pipeline(p)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&solved.doc)?,
    )?;
    std::fs::write(out_dir.join("occupation.csv"), &solved.csv)?;
    if let Some(svg) = &solved.svg {
        let path = plot
            .map(Path::to_path_buf)
            .unwrap_or_else(|| out_dir.join("barrier.svg"));
        std::fs::write(path, svg)?;
    }
    Ok((solved.doc, EXIT_OK))
}

fn run_one(command: &Command, path: &Path) -> (Value, i32) {
    let args = match command {
        Command::Check(a)
        | Command::Solve(a)
        | Command::Ergodic(a)
        | Command::Simulate(a)
        | Command::Report(a) => a,
    };
    let result = problem::load(path).and_then(|mut p| {
        apply_overrides(&mut p, args)?;
        match command {
            Command::Check(_) => cmd_check(&p),
            Command::Solve(_) => cmd_solve(&p, args.plot.as_deref()),
            Command::Ergodic(_) => cmd_ergodic(&p),
            Command::Simulate(_) => cmd_simulate(&p, args.out.as_deref()),
            Command::Report(_) => {
                let dir = args
                    .out
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("skembed-report"));
                cmd_report(&p, &dir, args.plot.as_deref())
            }
        }
    });
    match result {
        Ok((doc, code)) => (doc, code),
        Err(e) => (
            json!({
                "schema": report::SCHEMA_VERSION,
                "error": e.to_string(),
            }),
            exit_code(&e),
        ),
    }
}

fn batch_parallelism() -> usize {
    std::env::var("SKEMBED_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

/// Run the CLI; returns the process exit code (the worst across a
/// batch).
pub fn run(cli: &Cli) -> i32 {
    let args = match &cli.command {
        Command::Check(a)
        | Command::Solve(a)
        | Command::Ergodic(a)
        | Command::Simulate(a)
        | Command::Report(a) => a,
    };
    let paths = &args.problems;
    let threads = batch_parallelism().min(paths.len().max(1));
    let results: Vec<(Value, i32)> = if threads <= 1 || paths.len() <= 1 {
        paths.iter().map(|p| run_one(&cli.command, p)).collect()
    } else {
        let mut results: Vec<Option<(Value, i32)>> = vec![None; paths.len()];
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= paths.len() {
                        break;
                    }
                    let r = run_one(&cli.command, &paths[i]);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        results.into_iter().map(Option::unwrap).collect()
    };
    let mut worst = EXIT_OK;
    for (i, (doc, code)) in results.iter().enumerate() {
        let doc = if paths.len() > 1 {
            &json!({ "problem": paths[i].display().to_string(), "result": doc })
        } else {
            doc
        };
        match &args.out {
            // `report` writes its own artifacts; `--out` elsewhere
            // receives the JSON document.
            Some(path)
                if !matches!(cli.command, Command::Report(_) | Command::Simulate(_))
                    && paths.len() == 1 =>
            {
                if let Err(e) = std::fs::write(path, serde_json::to_string_pretty(doc).unwrap()) {
                    eprintln!("skembed: cannot write {}: {e}", path.display());
                    worst = worst.max(EXIT_INPUT);
                }
            }
            _ => println!("{}", serde_json::to_string_pretty(doc).unwrap()),
        }
        worst = worst.max(*code);
    }
    worst
}
