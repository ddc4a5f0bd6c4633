//! Task execution and the JSON report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{Mode, Model, NamedPath, SectionEntry, TaskEntry, TaskKind, TaskParams};
use crate::atlas::CocycleCheck;
use crate::bundle::{self, SectionJet};
use crate::hierarchy::{self, Target};
use crate::holonomy::{self, DEFAULT_ORDER};
use crate::jet::{self, compose, jets_equal, JetMap, DEFAULT_TOLERANCE};
use crate::path::{self, ChainPath};
use crate::sampling::Sampler;

pub const SCHEMA: &str = "holoscope/1";

const DEFAULT_SAMPLES: usize = 64;
const DEFAULT_TRIALS: usize = 32;
const CAVEAT: &str =
    "classes are equal transported jets up to the stated order; equality of germs cannot be decided from finitely many coefficients";

/// Flags that override task parameters when given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub order: Option<usize>,
    pub tol: Option<f64>,
    /// Threads used for classification; results do not depend on it.
    pub jobs: usize,
    /// Seed for the randomized checks of the validate task.
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("task {index} ({kind}): {message}")]
pub struct TaskError {
    pub index: usize,
    pub kind: String,
    pub message: String,
}

/// Replaces `-0.0` by `0.0` so that reports do not depend on the sign of zero.
fn clean(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x + 0.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JetReport {
    pub source_dim: usize,
    pub target_dim: usize,
    pub order: usize,
    pub coefficients: Vec<f64>,
}

impl From<&JetMap> for JetReport {
    fn from(j: &JetMap) -> Self {
        Self {
            source_dim: j.source_dim(),
            target_dim: j.target_dim(),
            order: j.order(),
            coefficients: clean(&j.to_flat()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub chart: String,
    pub y: Vec<f64>,
}

impl From<&holonomy::Anchor> for PointReport {
    fn from((chart, y): &holonomy::Anchor) -> Self {
        Self {
            chart: chart.clone(),
            y: clean(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleViolationReport {
    pub triple: [String; 3],
    pub point: Vec<f64>,
    pub residual: f64,
    pub check: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleSection {
    pub triples: usize,
    pub samples: usize,
    pub violations: Vec<CocycleViolationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathValidity {
    pub name: String,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawFailure {
    pub law: &'static str,
    pub first: String,
    pub second: Vec<String>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawSection {
    pub seed: u64,
    pub order: usize,
    pub trials: usize,
    pub checked: usize,
    pub failures: Vec<LawFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub cocycle: CocycleSection,
    pub paths: Vec<PathValidity>,
    pub laws: LawSection,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathHolonomy {
    pub name: String,
    pub source: PointReport,
    pub target: PointReport,
    pub jet: JetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolonomyReport {
    pub order: usize,
    pub paths: Vec<PathHolonomy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub members: Vec<String>,
    pub source: PointReport,
    pub target: PointReport,
    pub jet: JetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub order: usize,
    pub tol: f64,
    pub mode: Mode,
    pub classes: Vec<ClassReport>,
    pub caveat: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathTransport {
    pub name: String,
    pub f0: Vec<f64>,
    pub fibre_endpoint: Vec<f64>,
    pub target: PointReport,
    pub total_jet: JetReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<JetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportReport {
    pub order: usize,
    pub paths: Vec<PathTransport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderClasses {
    pub order: usize,
    pub classes: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub fine_order: usize,
    pub coarse_order: usize,
    pub map: Vec<usize>,
    pub refines: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerViolationReport {
    pub coarse_order: usize,
    pub fine_order: usize,
    pub pair: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyTaskReport {
    pub max_order: usize,
    pub tol: f64,
    pub mode: Mode,
    pub orders: Vec<OrderClasses>,
    pub refinement: Vec<RefinementReport>,
    pub violations: Vec<TowerViolationReport>,
    pub caveat: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskResult {
    Validate(ValidateReport),
    Holonomy(HolonomyReport),
    Classify(ClassifyReport),
    Transport(TransportReport),
    Hierarchy(HierarchyTaskReport),
}

impl TaskResult {
    pub fn violations(&self) -> usize {
        match self {
            TaskResult::Validate(v) => v.violations,
            TaskResult::Hierarchy(h) => h.violations.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub index: usize,
    #[serde(flatten)]
    pub result: TaskResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub status: &'static str,
    pub violations: usize,
    pub tasks: Vec<TaskReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Runs every task in order.
pub fn run_tasks(model: &Model, tasks: &[TaskEntry], options: &RunOptions) -> Result<Report, TaskError> {
    let mut out = Vec::new();
    for (index, task) in tasks.iter().enumerate() {
        let fail = |message: String| TaskError {
            index,
            kind: format!("{:?}", task.kind).to_lowercase(),
            message,
        };
        let result = run_task(model, task.kind, &task.params, options).map_err(fail)?;
        out.push(TaskReport { index, result });
    }
    let violations = out.iter().map(|t| t.result.violations()).sum();
    Ok(Report {
        schema: SCHEMA,
        status: if violations == 0 { "ok" } else { "violations" },
        violations,
        tasks: out,
    })
}

struct Settings {
    order: usize,
    tol: f64,
}

fn settings(params: &TaskParams, options: &RunOptions) -> Result<Settings, String> {
    let order = options.order.or(params.order).unwrap_or(DEFAULT_ORDER);
    let tol = options.tol.or(params.tol).unwrap_or(DEFAULT_TOLERANCE);
    if order > holonomy::MAX_ORDER {
        return Err(format!("order {order} exceeds the maximum {}", holonomy::MAX_ORDER));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(format!("tolerance must be finite and non-negative, got {tol}"));
    }
    Ok(Settings { order, tol })
}

fn selected<'a>(model: &'a Model, params: &TaskParams) -> Result<Vec<&'a NamedPath>, String> {
    match &params.paths {
        None => Ok(model.paths.iter().collect()),
        Some(names) => names
            .iter()
            .map(|n| model.path(n).ok_or_else(|| format!("unknown path `{n}`")))
            .collect(),
    }
}

fn run_task(model: &Model, kind: TaskKind, params: &TaskParams, options: &RunOptions) -> Result<TaskResult, String> {
    let s = settings(params, options)?;
    let paths = selected(model, params)?;
    let chain_paths: Vec<ChainPath> = paths.iter().map(|p| p.path.clone()).collect();
    let names = |members: &[usize]| members.iter().map(|&i| paths[i].name.clone()).collect::<Vec<_>>();
    match kind {
        TaskKind::Validate => Ok(TaskResult::Validate(validate(model, &paths, params, &s, options))),
        TaskKind::Holonomy => {
            let out = paths
                .iter()
                .map(|p| {
                    let h = holonomy::transport_jet(&model.atlas, &p.path, s.order).map_err(|e| format!("path `{}`: {e}", p.name))?;
                    Ok(PathHolonomy {
                        name: p.name.clone(),
                        source: (&h.source).into(),
                        target: (&h.target).into(),
                        jet: h.jet.jet().into(),
                    })
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(TaskResult::Holonomy(HolonomyReport {
                order: s.order,
                paths: out,
            }))
        }
        TaskKind::Classify => {
            let mode = params.mode.unwrap_or(Mode::Base);
            let target = target(model, mode, params)?;
            let partition =
                hierarchy::classify_at(target.as_target(model), &chain_paths, s.order, s.tol, options.jobs).map_err(|e| e.to_string())?;
            let classes = partition
                .iter()
                .map(|members| {
                    let h = holonomy::transport_jet(&model.atlas, &chain_paths[members[0]], s.order).map_err(|e| e.to_string())?;
                    Ok(ClassReport {
                        members: names(members),
                        source: (&h.source).into(),
                        target: (&h.target).into(),
                        jet: h.jet.jet().into(),
                    })
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(TaskResult::Classify(ClassifyReport {
                order: s.order,
                tol: s.tol,
                mode,
                classes,
                caveat: CAVEAT,
            }))
        }
        TaskKind::Transport => {
            let bundle = model.bundle.as_ref().ok_or("transport needs a bundle section")?;
            let f0 = params.f0.clone().unwrap_or_else(|| model.anchors[0].clone());
            let out = paths
                .iter()
                .map(|p| {
                    let ctx = |e: bundle::BundleError| format!("path `{}`: {e}", p.name);
                    let total = bundle::total_transport_jet(bundle, &p.path, s.order, &f0).map_err(ctx)?;
                    let section = match &params.section {
                        None => None,
                        Some(entry) => {
                            Some(transport_section(bundle, &p.path, entry, s.order).map_err(|e| format!("path `{}`: {e}", p.name))?)
                        }
                    };
                    Ok(PathTransport {
                        name: p.name.clone(),
                        f0: clean(&f0),
                        fibre_endpoint: clean(&total.target.f),
                        target: PointReport {
                            chart: total.target.chart.clone(),
                            y: clean(&total.target.y),
                        },
                        total_jet: total.jet.jet().into(),
                        section,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(TaskResult::Transport(TransportReport {
                order: s.order,
                paths: out,
            }))
        }
        TaskKind::Hierarchy => {
            let mode = params.mode.unwrap_or(Mode::Base);
            let target = target(model, mode, params)?;
            let report = hierarchy::hierarchy_report(target.as_target(model), &chain_paths, s.order, s.tol, options.jobs)
                .map_err(|e| e.to_string())?;
            Ok(TaskResult::Hierarchy(HierarchyTaskReport {
                max_order: report.max_order,
                tol: s.tol,
                mode,
                orders: report
                    .classes
                    .iter()
                    .enumerate()
                    .map(|(order, classes)| OrderClasses {
                        order,
                        classes: classes.iter().map(|c| names(c)).collect(),
                    })
                    .collect(),
                refinement: report
                    .refinement
                    .iter()
                    .map(|r| RefinementReport {
                        fine_order: r.fine_order,
                        coarse_order: r.coarse_order,
                        map: r.map.clone(),
                        refines: r.refines,
                    })
                    .collect(),
                violations: report
                    .violations
                    .iter()
                    .map(|v| TowerViolationReport {
                        coarse_order: v.coarse_order,
                        fine_order: v.fine_order,
                        pair: [paths[v.pair.0].name.clone(), paths[v.pair.1].name.clone()],
                    })
                    .collect(),
                caveat: CAVEAT,
            }))
        }
    }
}

enum TargetChoice {
    Base,
    Bundle(Vec<Vec<f64>>),
}

impl TargetChoice {
    fn as_target<'a>(&'a self, model: &'a Model) -> Target<'a> {
        match self {
            TargetChoice::Base => Target::Base(&model.atlas),
            TargetChoice::Bundle(anchors) => Target::Bundle {
                bundle: model.bundle.as_ref().expect("checked"),
                anchors,
            },
        }
    }
}

fn target(model: &Model, mode: Mode, params: &TaskParams) -> Result<TargetChoice, String> {
    match mode {
        Mode::Base => Ok(TargetChoice::Base),
        Mode::Bundle => {
            let bundle = model.bundle.as_ref().ok_or("bundle mode needs a bundle section")?;
            let anchors = params.anchors.clone().unwrap_or_else(|| model.anchors.clone());
            if let Some(a) = anchors.iter().find(|a| a.len() != bundle.fibre_dim()) {
                return Err(format!("anchor {a:?} does not have {} coordinates", bundle.fibre_dim()));
            }
            Ok(TargetChoice::Bundle(anchors))
        }
    }
}

fn transport_section(bundle: &bundle::FoliatedBundle, p: &ChainPath, entry: &SectionEntry, k: usize) -> Result<JetReport, String> {
    let jet = JetMap::from_flat(bundle.codim(), bundle.fibre_dim(), entry.order, &entry.coefficients).map_err(|e| e.to_string())?;
    let s = SectionJet {
        chart: p.base_chart.clone(),
        base_y: p.base_y.clone(),
        jet,
    };
    let out = bundle::transport_section_jet(bundle, p, &s, k).map_err(|e| e.to_string())?;
    Ok((&out.jet).into())
}

fn validate(model: &Model, paths: &[&NamedPath], params: &TaskParams, s: &Settings, options: &RunOptions) -> ValidateReport {
    let samples = params.samples.unwrap_or(DEFAULT_SAMPLES);
    let cocycle = model.atlas.validate_cocycle_with(samples, Sampler::Halton);
    let cocycle = CocycleSection {
        triples: cocycle.triples,
        samples: cocycle.samples,
        violations: cocycle
            .violations
            .into_iter()
            .map(|v| CocycleViolationReport {
                triple: v.triple,
                point: v.point,
                residual: v.residual,
                check: match v.check {
                    CocycleCheck::Value => "value",
                    CocycleCheck::Jet => "jet",
                },
            })
            .collect(),
    };
    let validity: Vec<PathValidity> = paths
        .iter()
        .map(|p| {
            let r = path::validate(&model.atlas, &p.path);
            PathValidity {
                name: p.name.clone(),
                valid: r.valid,
                hop: r.violation.as_ref().map(|v| v.0),
                reason: r.violation.map(|v| v.1),
            }
        })
        .collect();
    let valid: Vec<&NamedPath> = paths.iter().zip(&validity).filter(|(_, v)| v.valid).map(|(p, _)| *p).collect();
    let laws = law_trials(model, &valid, params.trials.unwrap_or(DEFAULT_TRIALS), s, options.seed);
    let violations = cocycle.violations.len() + validity.iter().filter(|v| !v.valid).count() + laws.failures.len();
    ValidateReport {
        cocycle,
        paths: validity,
        laws,
        violations,
    }
}

/// Functoriality and inversion on randomly extended copies of the given paths.
fn law_trials(model: &Model, paths: &[&NamedPath], trials: usize, s: &Settings, seed: u64) -> LawSection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atlas = &model.atlas;
    let mut failures = Vec::new();
    let mut checked = 0;
    if !paths.is_empty() {
        for _ in 0..trials {
            let first = paths[rng.gen_range(0..paths.len())];
            let Ok((chart, y)) = path::endpoint(atlas, &first.path) else {
                continue;
            };
            let hops = rng.gen_range(0..=4);
            let Some(second) = path::random_walk(atlas, &chart, &y, hops, &mut rng) else {
                continue;
            };
            let (Ok(tp), Ok(tq)) = (
                holonomy::transport_jet(atlas, &first.path, s.order),
                holonomy::transport_jet(atlas, &second, s.order),
            ) else {
                continue;
            };
            checked += 1;
            let joined = path::concat(atlas, &second, &first.path)
                .ok()
                .and_then(|pq| holonomy::transport_jet(atlas, &pq, s.order).ok());
            let expected = compose(tq.jet.jet(), tp.jet.jet()).ok();
            let residual = match (joined, expected) {
                (Some(a), Some(b)) if jets_equal(a.jet.jet(), &b, s.tol.max(DEFAULT_TOLERANCE)).unwrap_or(false) => None,
                (Some(a), Some(b)) => Some(a.jet.jet().sub_jet(&b).map_or(f64::INFINITY, |d| d.max_abs_coefficient())),
                _ => Some(f64::INFINITY),
            };
            if let Some(residual) = residual {
                failures.push(LawFailure {
                    law: "functoriality",
                    first: first.name.clone(),
                    second: second.chain.clone(),
                    residual,
                });
            }
            let reversed = path::reverse(atlas, &first.path)
                .ok()
                .and_then(|r| holonomy::transport_jet(atlas, &r, s.order).ok());
            let inverse = jet::invert(&tp.jet).ok();
            let residual = match (reversed, inverse) {
                (Some(a), Some(b)) if jets_equal(a.jet.jet(), b.jet(), s.tol.max(DEFAULT_TOLERANCE)).unwrap_or(false) => None,
                (Some(a), Some(b)) => Some(a.jet.jet().sub_jet(b.jet()).map_or(f64::INFINITY, |d| d.max_abs_coefficient())),
                _ => Some(f64::INFINITY),
            };
            if let Some(residual) = residual {
                failures.push(LawFailure {
                    law: "inversion",
                    first: first.name.clone(),
                    second: Vec::new(),
                    residual,
                });
            }
        }
    }
    LawSection {
        seed,
        order: s.order,
        trials,
        checked,
        failures,
    }
}
