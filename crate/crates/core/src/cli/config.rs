//! The JSON configuration document and its conversion into engine values.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{build_atlas, Atlas, AtlasError, Chart, TransitionSpec};
use crate::bundle::{build_bundle, BundleError, FibreSpec, FoliatedBundle};
use crate::path::ChainPath;
use crate::sampling::BoxDomain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub codim: usize,
    pub leaf_dim: usize,
    pub charts: Vec<ChartEntry>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<BundleEntry>,
    #[serde(default)]
    pub paths: Vec<PathEntry>,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartEntry {
    pub id: String,
}

/// Either component expressions or the string `"inverse"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapEntry {
    Expressions(Vec<String>),
    Implicit(InverseTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverseTag {
    Inverse,
}

impl MapEntry {
    fn expressions(&self) -> Option<Vec<String>> {
        match self {
            MapEntry::Expressions(e) => Some(e.clone()),
            MapEntry::Implicit(_) => None,
        }
    }

    fn from_expressions(e: Option<Vec<String>>) -> Self {
        e.map_or(MapEntry::Implicit(InverseTag::Inverse), MapEntry::Expressions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub src: String,
    pub dst: String,
    pub y_map: MapEntry,
    pub domain: BoxDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreEntry {
    pub src: String,
    pub dst: String,
    pub f_map: MapEntry,
    pub domain: BoxDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEntry {
    pub fibre_dim: usize,
    pub transitions: Vec<FibreEntry>,
    /// Fibre points used for anchoring in bundle-mode classification.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    pub name: String,
    pub base_chart: String,
    pub base_y: Vec<f64>,
    pub chain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Validate,
    Holonomy,
    Classify,
    Transport,
    Hierarchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Bundle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionEntry {
    /// Coefficients in the jet serialization order, one row per multi-index.
    pub coefficients: Vec<f64>,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Path names; all paths when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<String>>,
    /// Cocycle samples per triangle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Randomized functoriality and inversion trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub kind: TaskKind,
    #[serde(default)]
    pub params: TaskParams,
}

impl TaskEntry {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            params: TaskParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
    #[error("atlas: {0}")]
    Atlas(#[from] AtlasError),
    #[error("bundle: {0}")]
    Bundle(#[from] BundleError),
}

/// Converts a serde path such as `transitions[0].y_map` into a JSON pointer.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_document(text: &str) -> Result<ConfigDocument, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })
}

pub fn read_document(path: &std::path::Path) -> Result<ConfigDocument, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_document(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPath {
    pub name: String,
    pub path: ChainPath,
}

/// Everything a run needs, built and validated from a document.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub atlas: Atlas,
    pub bundle: Option<FoliatedBundle>,
    pub anchors: Vec<Vec<f64>>,
    pub paths: Vec<NamedPath>,
}

fn invalid(pointer: String, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        pointer,
        message: message.into(),
    }
}

impl Model {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, ConfigError> {
        let charts: Vec<Chart> = doc
            .charts
            .iter()
            .map(|c| Chart::new(c.id.clone(), doc.leaf_dim, doc.codim))
            .collect();
        if charts.is_empty() {
            return Err(invalid("/charts".into(), "at least one chart is required"));
        }
        let specs = doc
            .transitions
            .iter()
            .map(|t| TransitionSpec {
                src: t.src.clone(),
                dst: t.dst.clone(),
                y_map: t.y_map.expressions(),
                domain: t.domain.clone(),
            })
            .collect();
        let atlas = build_atlas(charts, specs).map_err(|e| locate_atlas_error(doc, e))?;
        let (bundle, anchors) = match &doc.bundle {
            None => (None, Vec::new()),
            Some(b) => {
                let specs = b
                    .transitions
                    .iter()
                    .map(|t| FibreSpec {
                        src: t.src.clone(),
                        dst: t.dst.clone(),
                        f_map: t.f_map.expressions(),
                        domain: t.domain.clone(),
                    })
                    .collect();
                let bundle = build_bundle(atlas.clone(), b.fibre_dim, specs).map_err(|e| locate_bundle_error(doc, e))?;
                for (i, a) in b.anchors.iter().enumerate() {
                    if a.len() != b.fibre_dim {
                        return Err(invalid(
                            format!("/bundle/anchors/{i}"),
                            format!("expected {} coordinates", b.fibre_dim),
                        ));
                    }
                }
                let anchors = if b.anchors.is_empty() {
                    vec![vec![0.0; b.fibre_dim]]
                } else {
                    b.anchors.clone()
                };
                (Some(bundle), anchors)
            }
        };
        let mut names = BTreeSet::new();
        let mut paths = Vec::new();
        for (i, p) in doc.paths.iter().enumerate() {
            if !names.insert(p.name.clone()) {
                return Err(invalid(format!("/paths/{i}/name"), format!("duplicate path name `{}`", p.name)));
            }
            let path = ChainPath {
                base_chart: p.base_chart.clone(),
                base_y: p.base_y.clone(),
                chain: p.chain.clone(),
                duration: p.duration.unwrap_or(if p.chain.len() <= 1 { 0.0 } else { 1.0 }),
                partition: p.partition.clone(),
            };
            if path.base_y.len() != doc.codim {
                return Err(invalid(format!("/paths/{i}/base_y"), format!("expected {} coordinates", doc.codim)));
            }
            if let Some(j) = path.chain.iter().position(|c| !atlas.has_chart(c)) {
                return Err(invalid(
                    format!("/paths/{i}/chain/{j}"),
                    format!("unknown chart `{}`", path.chain[j]),
                ));
            }
            paths.push(NamedPath {
                name: p.name.clone(),
                path,
            });
        }
        Ok(Self {
            atlas,
            bundle,
            anchors,
            paths,
        })
    }

    pub fn path(&self, name: &str) -> Option<&NamedPath> {
        self.paths.iter().find(|p| p.name == name)
    }
}

fn transition_index(doc: &ConfigDocument, src: &str, dst: &str) -> Option<usize> {
    doc.transitions.iter().position(|t| t.src == src && t.dst == dst)
}

fn locate_atlas_error(doc: &ConfigDocument, e: AtlasError) -> ConfigError {
    let at = |src: &str, dst: &str, suffix: &str| transition_index(doc, src, dst).map(|i| format!("/transitions/{i}{suffix}"));
    let pointer = match &e {
        AtlasError::Expression { src, dst, component, .. } => at(src, dst, &format!("/y_map/{component}")),
        AtlasError::Dimension { src, dst, .. }
        | AtlasError::DuplicateTransition { src, dst }
        | AtlasError::MissingReverse { src, dst }
        | AtlasError::BothImplicit { src, dst }
        | AtlasError::ReverseMismatch { src, dst, .. }
        | AtlasError::NonFinite { src, dst, .. } => at(src, dst, ""),
        AtlasError::SelfTransition { src } => at(src, src, ""),
        AtlasError::DuplicateChart(_) | AtlasError::ChartDimension { .. } => Some("/charts".into()),
        AtlasError::ZeroCodim => Some("/codim".into()),
        _ => None,
    };
    match pointer {
        Some(pointer) => invalid(pointer, e.to_string()),
        None => ConfigError::Atlas(e),
    }
}

fn locate_bundle_error(doc: &ConfigDocument, e: BundleError) -> ConfigError {
    let at = |src: &str, dst: &str, suffix: &str| {
        doc.bundle
            .as_ref()
            .and_then(|b| b.transitions.iter().position(|t| t.src == src && t.dst == dst))
            .map(|i| format!("/bundle/transitions/{i}{suffix}"))
    };
    let pointer = match &e {
        BundleError::Expression { src, dst, component, .. } => at(src, dst, &format!("/f_map/{component}")),
        BundleError::Dimension { src, dst, .. }
        | BundleError::Duplicate { src, dst }
        | BundleError::UnknownEdge { src, dst }
        | BundleError::BothImplicit { src, dst }
        | BundleError::ReverseMismatch { src, dst, .. }
        | BundleError::NonFinite { src, dst, .. } => at(src, dst, ""),
        BundleError::MissingFibre { .. } => Some("/bundle/transitions".into()),
        BundleError::ZeroFibre => Some("/bundle/fibre_dim".into()),
        _ => None,
    };
    match pointer {
        Some(pointer) => invalid(pointer, e.to_string()),
        None => ConfigError::Bundle(e),
    }
}

impl ConfigDocument {
    /// Document describing an existing atlas, bundle and path set.
    pub fn describe(atlas: &Atlas, bundle: Option<(&FoliatedBundle, &[Vec<f64>])>, paths: &[NamedPath], tasks: Vec<TaskEntry>) -> Self {
        Self {
            codim: atlas.codim(),
            leaf_dim: atlas.leaf_dim(),
            charts: atlas.charts().iter().map(|c| ChartEntry { id: c.id.clone() }).collect(),
            transitions: atlas
                .specs()
                .into_iter()
                .map(|s| TransitionEntry {
                    src: s.src,
                    dst: s.dst,
                    y_map: MapEntry::from_expressions(s.y_map),
                    domain: s.domain,
                })
                .collect(),
            bundle: bundle.map(|(b, anchors)| BundleEntry {
                fibre_dim: b.fibre_dim(),
                transitions: b
                    .specs()
                    .into_iter()
                    .map(|s| FibreEntry {
                        src: s.src,
                        dst: s.dst,
                        f_map: MapEntry::from_expressions(s.f_map),
                        domain: s.domain,
                    })
                    .collect(),
                anchors: anchors.to_vec(),
            }),
            paths: paths
                .iter()
                .map(|p| PathEntry {
                    name: p.name.clone(),
                    base_chart: p.path.base_chart.clone(),
                    base_y: p.path.base_y.clone(),
                    chain: p.path.chain.clone(),
                    duration: Some(p.path.duration),
                    partition: p.path.partition.clone(),
                })
                .collect(),
            tasks,
        }
    }
}
