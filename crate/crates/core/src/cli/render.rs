//! Plain-text rendering of a report for `--pretty`.

use std::fmt::Write;

use super::run::{JetReport, PointReport, Report, TaskResult};

fn point(p: &PointReport) -> String {
    format!("{}{:?}", p.chart, p.y)
}

fn jet(j: &JetReport) -> String {
    format!("order {} {:?}", j.order, j.coefficients)
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} status={} violations={}", report.schema, report.status, report.violations);
    for t in &report.tasks {
        match &t.result {
            TaskResult::Validate(v) => {
                let _ = writeln!(out, "\n[{}] validate", t.index);
                let _ = writeln!(
                    out,
                    "  cocycle: {} triples, {} samples, {} violations",
                    v.cocycle.triples,
                    v.cocycle.samples,
                    v.cocycle.violations.len()
                );
                for c in &v.cocycle.violations {
                    let _ = writeln!(out, "    {} {:?} at {:?}: residual {:e}", c.check, c.triple, c.point, c.residual);
                }
                for p in &v.paths {
                    match (&p.hop, &p.reason) {
                        (Some(h), Some(r)) => {
                            let _ = writeln!(out, "  path {}: invalid at hop {h}: {r}", p.name);
                        }
                        _ => {
                            let _ = writeln!(out, "  path {}: ok", p.name);
                        }
                    }
                }
                let _ = writeln!(
                    out,
                    "  laws: seed {} order {}, {} of {} trials checked, {} failures",
                    v.laws.seed,
                    v.laws.order,
                    v.laws.checked,
                    v.laws.trials,
                    v.laws.failures.len()
                );
                for f in &v.laws.failures {
                    let _ = writeln!(out, "    {} after {}: residual {:e}", f.law, f.first, f.residual);
                }
            }
            TaskResult::Holonomy(h) => {
                let _ = writeln!(out, "\n[{}] holonomy (order {})", t.index, h.order);
                for p in &h.paths {
                    let _ = writeln!(out, "  {}: {} -> {}  {}", p.name, point(&p.source), point(&p.target), jet(&p.jet));
                }
            }
            TaskResult::Classify(c) => {
                let _ = writeln!(out, "\n[{}] classify (order {}, tol {:e})", t.index, c.order, c.tol);
                for (i, class) in c.classes.iter().enumerate() {
                    let _ = writeln!(out, "  class {i}: {}", class.members.join(", "));
                    let _ = writeln!(out, "    {} -> {}  {}", point(&class.source), point(&class.target), jet(&class.jet));
                }
                let _ = writeln!(out, "  note: {}", c.caveat);
            }
            TaskResult::Transport(tr) => {
                let _ = writeln!(out, "\n[{}] transport (order {})", t.index, tr.order);
                for p in &tr.paths {
                    let _ = writeln!(out, "  {}: f {:?} -> {:?} at {}", p.name, p.f0, p.fibre_endpoint, point(&p.target));
                    let _ = writeln!(out, "    total {}", jet(&p.total_jet));
                    if let Some(s) = &p.section {
                        let _ = writeln!(out, "    section {}", jet(s));
                    }
                }
            }
            TaskResult::Hierarchy(h) => {
                let _ = writeln!(out, "\n[{}] hierarchy (orders 0..={}, tol {:e})", t.index, h.max_order, h.tol);
                for o in &h.orders {
                    let classes: Vec<String> = o.classes.iter().map(|c| format!("{{{}}}", c.join(", "))).collect();
                    let _ = writeln!(out, "  k={}: {}", o.order, classes.join(" "));
                }
                for r in &h.refinement {
                    let _ = writeln!(out, "  {} -> {}: {:?} refines={}", r.fine_order, r.coarse_order, r.map, r.refines);
                }
                for v in &h.violations {
                    let _ = writeln!(
                        out,
                        "  violation: {:?} equivalent at {} but not at {}",
                        v.pair, v.fine_order, v.coarse_order
                    );
                }
                let _ = writeln!(out, "  note: {}", h.caveat);
            }
        }
    }
    out
}
