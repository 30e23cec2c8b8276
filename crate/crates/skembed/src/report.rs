//! Report emission: versioned JSON documents with the tolerances they
//! were produced under, CSV tables of occupation measures and empirical
//! frequencies, and a static SVG rendering of space-time barriers.

use serde_json::{json, Value};

use crate::chain::Measure;
use crate::costs::{AugmentedChain, TwistOutcome, TwistReport};
use crate::dual::DualDiagnostics;
use crate::lp::{self, DualCertificate, OccupationSolution};
use crate::potential::Potential;
use crate::sim::{CompareReport, SimStats};
use crate::verify::{BarrierReport, OptimalityReport, StopGoReport, SUPPORT_TOL};
use crate::{dual, problem, simplex};

/// Report schema version (shared by every emitted JSON document).
pub const SCHEMA_VERSION: u32 = 1;

/// The numerical tolerances a report was produced under; embedded in
/// every document so tolerance-sensitive claims are auditable.
pub fn tolerances() -> Value {
    json!({
        "gap": lp::GAP_TOL,
        "feasibility": simplex::FEAS_TOL,
        "optimality": simplex::OPT_TOL,
        "support": SUPPORT_TOL,
        "dual_iterative": dual::DUAL_TOL,
        "horizon_survival": problem::HORIZON_TOL,
        "twist_margin": crate::costs::TWIST_MARGIN,
    })
}

pub fn measure_json(m: &Measure) -> Value {
    json!({ "mass": m.mass, "cemetery": m.cemetery_mass })
}

pub fn potential_json(p: &Potential) -> Value {
    json!(p.values)
}

pub fn occupation_json(occ: &OccupationSolution) -> Value {
    json!({
        "u": occ.u,
        "s": occ.s,
        "objective": occ.objective,
        "expected_time": occ.expected_time,
        "killed_mass": occ.killed_mass,
    })
}

pub fn twist_json(twist: &TwistReport) -> Value {
    json!({
        "holds": matches!(twist.outcome, TwistOutcome::Holds),
        "axis": twist.axis,
        "sign": twist.sign,
        "witness": twist.witness,
    })
}

pub fn optimality_json(report: &OptimalityReport) -> Value {
    json!({
        "stopped_in_contact": report.stopped_in_contact,
        "worst_stopped_slack": report.worst_stopped_slack,
        "u_dot_alpha": report.u_dot_alpha,
        "gap": report.gap,
        "pass": report.pass,
    })
}

pub fn stop_go_json(report: &StopGoReport) -> Value {
    json!({
        "violations": report
            .violations
            .iter()
            .map(|v| json!({
                "state": v.x,
                "continue_aux": v.continue_aux,
                "stop_aux": v.stop_aux,
                "l_continue": v.l_continue,
                "l_stop": v.l_stop,
            }))
            .collect::<Vec<_>>(),
        "pass": report.violations.is_empty(),
    })
}

pub fn barrier_json(report: &BarrierReport) -> Value {
    json!({
        "bang_bang": report.bang_bang,
        "monotone": report.monotone,
        "nu_reproduced": report.nu_reproduced,
        "law_error": report.law_error,
        "cost_reproduced": report.cost_reproduced,
        "cost_error": report.cost_error,
    })
}

pub fn dual_iterative_json(psi: &Potential, diag: &DualDiagnostics) -> Value {
    json!({
        "psi": psi.values,
        "value": diag.best_value,
        "gap": diag.gap,
        "iterations": diag.iterations,
        "k_box": diag.k_box,
        "touches_box": diag.touches_box,
    })
}

/// Assemble the full solve report.
#[allow(clippy::too_many_arguments)]
pub fn solve_report(
    occ: &OccupationSolution,
    cert: &DualCertificate,
    optimality: &OptimalityReport,
    stop_go: &StopGoReport,
    twist: Option<&TwistReport>,
    barrier: Option<&BarrierReport>,
    iterative: Option<(&Potential, &DualDiagnostics)>,
) -> Value {
    let rule = lp::extract_stopping_rule(occ);
    json!({
        "schema": SCHEMA_VERSION,
        "tolerances": tolerances(),
        "objective": occ.objective,
        "expected_time": occ.expected_time,
        "occupation": occupation_json(occ),
        "stopping_rule": rule.p,
        "psi": potential_json(&cert.psi),
        "dual_value": cert.dual_value,
        "gap": cert.gap,
        "optimality": optimality_json(optimality),
        "stop_go": stop_go_json(stop_go),
        "twist": twist.map(twist_json),
        "barrier": barrier.map(barrier_json),
        "dual_iterative": iterative.map(|(p, d)| dual_iterative_json(p, d)),
    })
}

pub fn simulate_report(stats: &SimStats, compare: &CompareReport) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "tolerances": tolerances(),
        "n_paths": stats.n_paths,
        "law": stats.law,
        "cemetery": stats.cemetery_mass,
        "mean_time": stats.mean_t,
        "se_time": stats.se_t,
        "mean_cost": stats.mean_cost,
        "se_cost": stats.se_cost,
        "truncated": stats.truncated,
        "tv": compare.tv,
        "tv_bound": compare.tv_bound,
        "max_z": compare.max_z,
        "cost_z": compare.cost_z,
        "pass": compare.pass,
    })
}

/// Occupation measure as CSV: one row per augmented state.
pub fn occupation_csv(aug: &AugmentedChain, occ: &OccupationSolution) -> String {
    let rule = lp::extract_stopping_rule(occ);
    let mut out = String::from("aux,state,u,s,p_stop\n");
    for i in 0..aug.m() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            aug.proj_a(i),
            aug.proj_x(i),
            occ.u[i],
            occ.s[i],
            rule.p[i]
        ));
    }
    out
}

/// Empirical per-state frequencies as CSV.
pub fn empirical_csv(stats: &SimStats) -> String {
    let mut out = String::from("state,frequency\n");
    for (x, &f) in stats.law.iter().enumerate() {
        out.push_str(&format!("{x},{f}\n"));
    }
    out.push_str(&format!("cemetery,{}\n", stats.cemetery_mass));
    out
}

const CELL: f64 = 14.0;
const MARGIN: f64 = 40.0;

/// Static SVG of the space-time barrier: auxiliary coordinate on the
/// horizontal axis, base state on the vertical.  Cells are shaded by
/// role: stopped mass dark, continued mass light, unvisited pale; cells
/// the occupation never reaches but whose obstacle binds are outlined.
pub fn barrier_svg(
    aug: &AugmentedChain,
    occ: &OccupationSolution,
    contact: Option<&[bool]>,
) -> String {
    let n_aux = aug.n_aux;
    let n = aug.base.n;
    let w = MARGIN + n_aux as f64 * CELL + 10.0;
    let h = MARGIN + n as f64 * CELL + 10.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"10\">\n"
    );
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\">aux</text>\n",
        MARGIN + n_aux as f64 * CELL / 2.0 - 10.0,
        MARGIN - 22.0
    ));
    for a in 0..n_aux {
        for x in 0..n {
            let i = aug.idx(a, x);
            let fill = if occ.s[i] > SUPPORT_TOL {
                "#1f3a93"
            } else if occ.u[i] > SUPPORT_TOL {
                "#aec6e8"
            } else {
                "#f2f2f2"
            };
            let stroke = match contact {
                Some(mask) if mask[i] => "#d64541",
                _ => "#cccccc",
            };
            svg.push_str(&format!(
                "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{fill}\" stroke=\"{stroke}\"/>\n",
                MARGIN + a as f64 * CELL,
                MARGIN + x as f64 * CELL,
            ));
        }
    }
    for x in 0..n {
        let label = match &aug.base.labels {
            Some(l) => l[x].clone(),
            None => x.to_string(),
        };
        svg.push_str(&format!(
            "  <text x=\"4\" y=\"{:.1}\">{label}</text>\n",
            MARGIN + x as f64 * CELL + CELL - 3.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
