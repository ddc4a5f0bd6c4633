//! Foliated atlases given by transverse transition maps.
//!
//! Only the transverse part `y_{src→dst}` of each change of coordinates is
//! stored; holonomy never sees the leafwise coordinates. A transition may be
//! declared as the implicit inverse of its reverse edge, which is how maps
//! without a closed-form inverse (e.g. `y + y^2`) enter an atlas. Implicit
//! transitions are evaluated by Newton's method and their jets by jet-group
//! inversion, so they are exact to roundoff.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError};
use crate::jet::{self, compose, jets_equal, DiffeoJet, JetError, JetMap, Series};
use crate::sampling::{BoxDomain, Sampler};

/// Max-norm residual allowed between a transition and its registered reverse.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

/// Residual allowed by the sampled cocycle check.
pub const COCYCLE_TOLERANCE: f64 = 1e-8;

/// Samples per edge used when validating reverse transitions at build time.
const BUILD_SAMPLES: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtlasError {
    #[error("duplicate chart `{0}`")]
    DuplicateChart(String),
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("chart `{chart}` has dimensions ({leaf_dim}, {codim}), atlas uses ({expected_leaf}, {expected_codim})")]
    ChartDimension {
        chart: String,
        leaf_dim: usize,
        codim: usize,
        expected_leaf: usize,
        expected_codim: usize,
    },
    #[error("codimension must be at least 1")]
    ZeroCodim,
    #[error("transition {src}→{dst}: {message}")]
    Dimension { src: String, dst: String, message: String },
    #[error("duplicate transition {src}→{dst}")]
    DuplicateTransition { src: String, dst: String },
    #[error("transition {src}→{src} from a chart to itself")]
    SelfTransition { src: String },
    #[error("transition {src}→{dst} has no reverse {dst}→{src}")]
    MissingReverse { src: String, dst: String },
    #[error("transitions {src}→{dst} and {dst}→{src} are both implicit")]
    BothImplicit { src: String, dst: String },
    #[error("transition {src}→{dst} component {component}: {source}")]
    Expression {
        src: String,
        dst: String,
        component: usize,
        source: ExprError,
    },
    #[error("transition {src}→{dst} is not finite at {point:?}")]
    NonFinite { src: String, dst: String, point: Vec<f64> },
    #[error("{dst}→{src} does not invert {src}→{dst}: residual {residual:e} at {point:?}")]
    ReverseMismatch {
        src: String,
        dst: String,
        point: Vec<f64>,
        residual: f64,
    },
    #[error("no transition {src}→{dst}")]
    MissingTransition { src: String, dst: String },
    #[error("point {point:?} lies outside the domain of {src}→{dst}")]
    Domain { src: String, dst: String, point: Vec<f64> },
    #[error("could not invert {src}→{dst} at {point:?}")]
    Solve { src: String, dst: String, point: Vec<f64> },
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Chart {
    pub id: String,
    pub leaf_dim: usize,
    pub codim: usize,
}

impl Chart {
    pub fn new(id: impl Into<String>, leaf_dim: usize, codim: usize) -> Self {
        Self {
            id: id.into(),
            leaf_dim,
            codim,
        }
    }
}

/// Textual description of a transition, as found in configuration files.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpec {
    pub src: String,
    pub dst: String,
    /// `None` declares the transition as the inverse of its reverse edge.
    pub y_map: Option<Vec<String>>,
    pub domain: BoxDomain,
}

impl TransitionSpec {
    pub fn explicit<S: Into<String>>(src: &str, dst: &str, y_map: impl IntoIterator<Item = S>, domain: BoxDomain) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            y_map: Some(y_map.into_iter().map(Into::into).collect()),
            domain,
        }
    }

    pub fn inverse(src: &str, dst: &str, domain: BoxDomain) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            y_map: None,
            domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionMap {
    Explicit(Vec<Expr>),
    ImplicitInverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub src: String,
    pub dst: String,
    pub map: TransitionMap,
    pub domain: BoxDomain,
}

/// Transverse variable names `y1..yq`.
pub fn transverse_variables(q: usize) -> Vec<String> {
    (1..=q).map(|i| format!("y{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    leaf_dim: usize,
    codim: usize,
    charts: Vec<Chart>,
    transitions: BTreeMap<(String, String), Transition>,
}

type Key = (String, String);

fn key(src: &str, dst: &str) -> Key {
    (src.to_owned(), dst.to_owned())
}

/// Validates charts and transitions and assembles an [`Atlas`].
pub fn build_atlas(charts: Vec<Chart>, transitions: Vec<TransitionSpec>) -> Result<Atlas, AtlasError> {
    let first = charts.first().ok_or_else(|| AtlasError::UnknownChart(String::new()))?;
    let (leaf_dim, codim) = (first.leaf_dim, first.codim);
    if codim == 0 {
        return Err(AtlasError::ZeroCodim);
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &charts {
        if !seen.insert(c.id.clone()) {
            return Err(AtlasError::DuplicateChart(c.id.clone()));
        }
        if c.leaf_dim != leaf_dim || c.codim != codim {
            return Err(AtlasError::ChartDimension {
                chart: c.id.clone(),
                leaf_dim: c.leaf_dim,
                codim: c.codim,
                expected_leaf: leaf_dim,
                expected_codim: codim,
            });
        }
    }
    let vars = transverse_variables(codim);
    let mut map = BTreeMap::new();
    for spec in transitions {
        for id in [&spec.src, &spec.dst] {
            if !seen.contains(id) {
                return Err(AtlasError::UnknownChart(id.clone()));
            }
        }
        if spec.src == spec.dst {
            return Err(AtlasError::SelfTransition { src: spec.src });
        }
        let dim_err = |message: String| AtlasError::Dimension {
            src: spec.src.clone(),
            dst: spec.dst.clone(),
            message,
        };
        if spec.domain.dim() != codim || !spec.domain.is_well_formed() {
            return Err(dim_err(format!("domain must be a well-formed box in R^{codim}")));
        }
        let tmap = match &spec.y_map {
            None => TransitionMap::ImplicitInverse,
            Some(texts) => {
                if texts.len() != codim {
                    return Err(dim_err(format!("expected {codim} components, found {}", texts.len())));
                }
                let exprs = texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        expr::parse(t, &vars).map_err(|source| AtlasError::Expression {
                            src: spec.src.clone(),
                            dst: spec.dst.clone(),
                            component: i,
                            source,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                TransitionMap::Explicit(exprs)
            }
        };
        let k = key(&spec.src, &spec.dst);
        if map.contains_key(&k) {
            return Err(AtlasError::DuplicateTransition {
                src: spec.src,
                dst: spec.dst,
            });
        }
        map.insert(
            k,
            Transition {
                src: spec.src,
                dst: spec.dst,
                map: tmap,
                domain: spec.domain,
            },
        );
    }
    for ((src, dst), t) in &map {
        let reverse = map.get(&key(dst, src)).ok_or_else(|| AtlasError::MissingReverse {
            src: src.clone(),
            dst: dst.clone(),
        })?;
        if t.map == TransitionMap::ImplicitInverse && reverse.map == TransitionMap::ImplicitInverse {
            return Err(AtlasError::BothImplicit {
                src: src.clone(),
                dst: dst.clone(),
            });
        }
    }
    let atlas = Atlas {
        leaf_dim,
        codim,
        charts,
        transitions: map,
    };
    atlas.check_transitions()?;
    Ok(atlas)
}

impl Atlas {
    pub fn leaf_dim(&self) -> usize {
        self.leaf_dim
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn has_chart(&self, id: &str) -> bool {
        self.charts.iter().any(|c| c.id == id)
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.values()
    }

    pub fn transition(&self, src: &str, dst: &str) -> Option<&Transition> {
        self.transitions.get(&key(src, dst))
    }

    /// Whether a hop `src → dst` is possible; staying in a chart always is.
    pub fn has_hop(&self, src: &str, dst: &str) -> bool {
        src == dst || self.transition(src, dst).is_some()
    }

    pub fn neighbors<'a>(&'a self, src: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.transitions.values().filter(move |t| t.src == src).map(|t| t.dst.as_str())
    }

    /// Textual form of every transition, in key order.
    pub fn specs(&self) -> Vec<TransitionSpec> {
        self.transitions
            .values()
            .map(|t| TransitionSpec {
                src: t.src.clone(),
                dst: t.dst.clone(),
                y_map: match &t.map {
                    TransitionMap::Explicit(e) => Some(e.iter().map(ToString::to_string).collect()),
                    TransitionMap::ImplicitInverse => None,
                },
                domain: t.domain.clone(),
            })
            .collect()
    }

    fn lookup(&self, src: &str, dst: &str) -> Result<&Transition, AtlasError> {
        self.transition(src, dst).ok_or_else(|| AtlasError::MissingTransition {
            src: src.into(),
            dst: dst.into(),
        })
    }

    fn check_transitions(&self) -> Result<(), AtlasError> {
        for t in self.transitions.values() {
            for v in t.domain.halton(BUILD_SAMPLES) {
                let w = match self.apply_transition(&t.src, &t.dst, &v) {
                    Ok(w) => w,
                    Err(AtlasError::Solve { .. }) | Err(AtlasError::Domain { .. }) if t.map == TransitionMap::ImplicitInverse => {
                        // The sample has no preimage inside the partner's box.
                        continue;
                    }
                    Err(AtlasError::Domain { .. }) => unreachable!("sample inside domain"),
                    Err(_) => {
                        return Err(AtlasError::NonFinite {
                            src: t.src.clone(),
                            dst: t.dst.clone(),
                            point: v,
                        })
                    }
                };
                let reverse = self.lookup(&t.dst, &t.src)?;
                if !reverse.domain.contains(&w) {
                    continue;
                }
                let back = match self.apply_transition(&t.dst, &t.src, &w) {
                    Ok(b) => b,
                    Err(_) if reverse.map == TransitionMap::ImplicitInverse => {
                        return Err(AtlasError::ReverseMismatch {
                            src: t.src.clone(),
                            dst: t.dst.clone(),
                            point: v,
                            residual: f64::INFINITY,
                        })
                    }
                    Err(_) => {
                        return Err(AtlasError::NonFinite {
                            src: reverse.src.clone(),
                            dst: reverse.dst.clone(),
                            point: w,
                        })
                    }
                };
                let residual = max_norm_diff(&back, &v);
                if residual.is_nan() || residual > INVERSE_TOLERANCE {
                    return Err(AtlasError::ReverseMismatch {
                        src: t.src.clone(),
                        dst: t.dst.clone(),
                        point: v,
                        residual,
                    });
                }
            }
        }
        Ok(())
    }

    /// Pointwise `y_{src→dst}(y)`. A hop within one chart is the identity.
    pub fn apply_transition(&self, src: &str, dst: &str, y: &[f64]) -> Result<Vec<f64>, AtlasError> {
        if src == dst {
            if !self.has_chart(src) {
                return Err(AtlasError::UnknownChart(src.into()));
            }
            return Ok(y.to_vec());
        }
        let t = self.lookup(src, dst)?;
        if !t.domain.contains(y) {
            return Err(AtlasError::Domain {
                src: src.into(),
                dst: dst.into(),
                point: y.to_vec(),
            });
        }
        match &t.map {
            TransitionMap::Explicit(exprs) => eval_exprs(exprs, y).map_err(|_| AtlasError::NonFinite {
                src: src.into(),
                dst: dst.into(),
                point: y.to_vec(),
            }),
            TransitionMap::ImplicitInverse => {
                let partner = self.lookup(dst, src)?;
                let TransitionMap::Explicit(exprs) = &partner.map else {
                    unreachable!("both directions implicit is rejected at build");
                };
                let solve_err = || AtlasError::Solve {
                    src: src.into(),
                    dst: dst.into(),
                    point: y.to_vec(),
                };
                let x = newton_solve(
                    |x| {
                        let jet = explicit_jet(exprs, x, 1).map_err(|_| ())?;
                        Ok((jet.constant_term(), jet.linear_part()))
                    },
                    y,
                    y,
                    &partner.domain,
                )
                .ok_or_else(solve_err)?;
                if !partner.domain.contains(&x) {
                    return Err(AtlasError::Domain {
                        src: src.into(),
                        dst: dst.into(),
                        point: y.to_vec(),
                    });
                }
                Ok(x)
            }
        }
    }

    /// The order-`k` jet of `y_{src→dst}` anchored at `base_y`, normalized to
    /// have zero constant term, together with the image `y_{src→dst}(base_y)`.
    pub fn transition_jet(&self, src: &str, dst: &str, base_y: &[f64], k: usize) -> Result<(DiffeoJet, Vec<f64>), AtlasError> {
        if src == dst {
            if !self.has_chart(src) {
                return Err(AtlasError::UnknownChart(src.into()));
            }
            return Ok((jet::identity_jet(self.codim, k), base_y.to_vec()));
        }
        let t = self.lookup(src, dst)?;
        if !t.domain.contains(base_y) {
            return Err(AtlasError::Domain {
                src: src.into(),
                dst: dst.into(),
                point: base_y.to_vec(),
            });
        }
        match &t.map {
            TransitionMap::Explicit(exprs) => {
                let raw = explicit_jet(exprs, base_y, k).map_err(|e| match e {
                    ExprError::Jet(j) => AtlasError::Jet(j),
                    _ => AtlasError::NonFinite {
                        src: src.into(),
                        dst: dst.into(),
                        point: base_y.to_vec(),
                    },
                })?;
                let image = raw.constant_term();
                let normalized = jet::translate_conjugate(&raw, &vec![0.0; self.codim], &image, k)?;
                Ok((DiffeoJet::try_from(normalized)?, image))
            }
            TransitionMap::ImplicitInverse => {
                let image = self.apply_transition(src, dst, base_y)?;
                let (forward, _) = self.transition_jet(dst, src, &image, k)?;
                Ok((jet::invert(&forward)?, image))
            }
        }
    }

    /// Checks `y_{src→dst} = y_{mid→dst} ∘ y_{src→mid}` on every ordered
    /// triple of distinct charts with all three transitions registered.
    pub fn validate_cocycle(&self, samples_per_triangle: usize) -> CocycleReport {
        self.validate_cocycle_with(samples_per_triangle, Sampler::Halton)
    }

    pub fn validate_cocycle_with(&self, samples: usize, sampler: Sampler) -> CocycleReport {
        let mut report = CocycleReport::default();
        for direct in self.transitions.values() {
            let (src, dst) = (&direct.src, &direct.dst);
            for first in self.transitions.values().filter(|t| &t.src == src && &t.dst != dst) {
                let mid = &first.dst;
                let Some(second) = self.transition(mid, dst) else {
                    continue;
                };
                report.triples += 1;
                let Some(common) = direct.domain.intersect(&first.domain) else {
                    continue;
                };
                for v in sampler.points(&common, samples) {
                    let (Ok(m), Ok(direct_value)) = (self.apply_transition(src, mid, &v), self.apply_transition(src, dst, &v)) else {
                        continue;
                    };
                    if !second.domain.contains(&m) {
                        continue;
                    }
                    let Ok(composite) = self.apply_transition(mid, dst, &m) else {
                        continue;
                    };
                    report.samples += 1;
                    let triple = [src.clone(), mid.clone(), dst.clone()];
                    let residual = max_norm_diff(&direct_value, &composite);
                    if residual.is_nan() || residual > COCYCLE_TOLERANCE {
                        report.violations.push(CocycleViolation {
                            triple,
                            point: v,
                            residual,
                            check: CocycleCheck::Value,
                        });
                        continue;
                    }
                    if let Some(residual) = self.jet_residual(src, mid, dst, &v) {
                        report.violations.push(CocycleViolation {
                            triple,
                            point: v,
                            residual,
                            check: CocycleCheck::Jet,
                        });
                    }
                }
            }
        }
        report
    }

    /// Order-2 jet comparison for one cocycle sample; `Some(residual)` on failure.
    fn jet_residual(&self, src: &str, mid: &str, dst: &str, v: &[f64]) -> Option<f64> {
        let jets = (|| {
            let (direct, _) = self.transition_jet(src, dst, v, 2).ok()?;
            let (first, m) = self.transition_jet(src, mid, v, 2).ok()?;
            let (second, _) = self.transition_jet(mid, dst, &m, 2).ok()?;
            let composite = compose(second.jet(), first.jet()).ok()?;
            Some((direct.into_jet(), composite))
        })();
        let (direct, composite) = jets?;
        if jets_equal(&direct, &composite, COCYCLE_TOLERANCE).unwrap_or(false) {
            None
        } else {
            Some(direct.sub_jet(&composite).map_or(f64::INFINITY, |d| d.max_abs_coefficient()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CocycleCheck {
    Value,
    Jet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocycleViolation {
    /// `[src, mid, dst]`.
    pub triple: [String; 3],
    pub point: Vec<f64>,
    pub residual: f64,
    pub check: CocycleCheck,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CocycleReport {
    pub triples: usize,
    pub samples: usize,
    pub violations: Vec<CocycleViolation>,
}

impl CocycleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(crate) fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn eval_exprs(exprs: &[Expr], point: &[f64]) -> Result<Vec<f64>, ExprError> {
    exprs.iter().map(|e| e.eval_point(point)).collect()
}

/// Raw order-`k` jet of explicit component expressions at `point`.
pub(crate) fn explicit_jet(exprs: &[Expr], point: &[f64], k: usize) -> Result<JetMap, ExprError> {
    let dim = point.len();
    let args: Vec<Series> = (0..dim).map(|i| Series::variable(dim, k, i, point[i])).collect();
    let comps = exprs.iter().map(|e| e.eval_series(&args, k)).collect::<Result<Vec<_>, _>>()?;
    Ok(JetMap::new(comps)?)
}

/// Damped Newton iteration for `F(x) = target`, started at `start`.
/// `eval` returns `F(x)` and its Jacobian. Falls back to the box centre when
/// the first start fails.
pub(crate) fn newton_solve(
    eval: impl Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>), ()>,
    target: &[f64],
    start: &[f64],
    domain: &BoxDomain,
) -> Option<Vec<f64>> {
    let scale = target.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    let residual_of = |x: &[f64]| -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let (value, jac) = eval(x).ok()?;
        let r: Vec<f64> = target.iter().zip(&value).map(|(t, v)| t - v).collect();
        Some((r.iter().fold(0.0f64, |m, x| m.max(x.abs())), r, jac))
    };
    for x0 in [start.to_vec(), domain.center()] {
        let mut x = x0;
        let Some(mut state) = residual_of(&x) else {
            continue;
        };
        for _ in 0..100 {
            let (norm, r, jac) = &state;
            if *norm <= 1e-15 * scale {
                break;
            }
            let Some(step) = jac.clone().lu().solve(&DVector::from_column_slice(r)) else {
                break;
            };
            let mut t = 1.0;
            let mut improved = None;
            while t > 1e-6 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                if let Some(next) = residual_of(&trial) {
                    if next.0 < *norm {
                        improved = Some((trial, next));
                        break;
                    }
                }
                t *= 0.5;
            }
            match improved {
                Some((trial, next)) => {
                    x = trial;
                    state = next;
                }
                None => break,
            }
        }
        if state.0 <= 1e-12 * scale {
            return Some(x);
        }
    }
    None
}
