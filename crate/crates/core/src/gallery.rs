//! Built-in foliations and bundles with known holonomy.
//!
//! Every instance is described by a configuration document, so exporting it
//! and running the exported file gives the same model. Circle-like leaves
//! are covered by a ring of four charts `A, B, C, D`: the edges `A–B`,
//! `B–C` and `C–D` are identities and the edge `D→A` carries the gluing map.
//! Expected holonomy jets are recorded as data with a note on how they were
//! obtained by hand.

use crate::atlas::transverse_variables;
use crate::bundle::bundle_variables;
use crate::cli::config::{
    BundleEntry, ChartEntry, ConfigDocument, ConfigError, FibreEntry, InverseTag, MapEntry, Mode, Model, PathEntry, TaskEntry, TaskKind,
    TaskParams, TransitionEntry,
};
use crate::expr::{self, Expr, Node};
use crate::jet::{JetError, JetMap, Series};
use crate::sampling::BoxDomain;

pub const RING: [&str; 4] = ["A", "B", "C", "D"];

/// Names accepted by [`builtin`].
pub const NAMES: [&str; 9] = [
    "product",
    "mobius",
    "contracting-annulus",
    "suspension-quadratic",
    "tangency-3",
    "shear-triangle",
    "mobius-line-bundle",
    "frame-contracting-annulus",
    "frame-tangency-3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedKind {
    /// The holonomy jet of the path.
    Holonomy,
    /// The total transport jet anchored at the first bundle anchor.
    Total,
}

/// A hand-computed jet: `terms` lists `(component, exponent, coefficient)`,
/// all other coefficients are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedJet {
    pub path: String,
    pub order: usize,
    pub kind: ExpectedKind,
    pub terms: Vec<(usize, Vec<u32>, f64)>,
    pub provenance: &'static str,
}

impl ExpectedJet {
    pub fn jet(&self, dim: usize) -> Result<JetMap, JetError> {
        let mut comps = vec![Series::zero(dim, self.order); dim];
        for (c, exponent, value) in &self.terms {
            let index = comps[*c].table().index_of(exponent).ok_or(JetError::BadLength {
                expected: dim,
                found: exponent.len(),
            })?;
            comps[*c].coeffs_mut()[index] += value;
        }
        JetMap::new(comps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryInstance {
    pub name: String,
    pub document: ConfigDocument,
    pub model: Model,
    pub expected: Vec<ExpectedJet>,
}

impl GalleryInstance {
    fn from_document(name: &str, document: ConfigDocument, expected: Vec<ExpectedJet>) -> Result<Self, ConfigError> {
        let model = Model::from_document(&document)?;
        Ok(Self {
            name: name.to_owned(),
            document,
            model,
            expected,
        })
    }

    pub fn path(&self, name: &str) -> &crate::path::ChainPath {
        &self
            .model
            .path(name)
            .unwrap_or_else(|| panic!("no path `{name}` in {}", self.name))
            .path
    }
}

pub fn builtin(name: &str) -> Option<GalleryInstance> {
    let instance = match name {
        "product" => product(2),
        "mobius" => mobius(),
        "contracting-annulus" => contracting_annulus(0.5),
        "suspension-quadratic" => suspension_quadratic(),
        "tangency-3" => tangency(3),
        "shear-triangle" => shear_triangle(),
        "mobius-line-bundle" => mobius_line_bundle(),
        "frame-contracting-annulus" => contracting_annulus(0.5).and_then(|b| frame_bundle(&b, "frame-contracting-annulus")),
        "frame-tangency-3" => tangency(3).and_then(|b| frame_bundle(&b, "frame-tangency-3")),
        _ => return None,
    };
    Some(instance.expect("built-in instances are valid"))
}

fn entry(src: &str, dst: &str, y_map: Option<Vec<String>>, domain: BoxDomain) -> TransitionEntry {
    TransitionEntry {
        src: src.into(),
        dst: dst.into(),
        y_map: y_map.map_or(MapEntry::Implicit(InverseTag::Inverse), MapEntry::Expressions),
        domain,
    }
}

fn path_entry(name: &str, y: Vec<f64>, chain: &[&str]) -> PathEntry {
    PathEntry {
        name: name.into(),
        base_chart: chain[0].into(),
        base_y: y,
        chain: chain.iter().map(|c| c.to_string()).collect(),
        duration: Some(if chain.len() == 1 { 0.0 } else { 1.0 }),
        partition: None,
    }
}

/// Chain of `n` turns around the ring, backwards when `n < 0`.
pub fn ring_chain(n: i32) -> Vec<&'static str> {
    let mut chain = vec!["A"];
    for _ in 0..n.unsigned_abs() {
        if n > 0 {
            chain.extend(["B", "C", "D", "A"]);
        } else {
            chain.extend(["D", "C", "B", "A"]);
        }
    }
    chain
}

/// `n` turns around the ring from `y` in chart `A`.
pub fn ring_loop(n: i32, y: Vec<f64>) -> crate::path::ChainPath {
    let chain = ring_chain(n);
    if chain.len() == 1 {
        crate::path::ChainPath::identity("A", y)
    } else {
        crate::path::ChainPath::new(y, &chain)
    }
}

fn default_tasks(order: usize, bundle: bool) -> Vec<TaskEntry> {
    let with = |kind, params| TaskEntry { kind, params };
    let mut tasks = vec![
        TaskEntry::new(TaskKind::Validate),
        with(
            TaskKind::Holonomy,
            TaskParams {
                order: Some(order),
                ..TaskParams::default()
            },
        ),
        with(
            TaskKind::Classify,
            TaskParams {
                order: Some(order),
                ..TaskParams::default()
            },
        ),
        with(
            TaskKind::Hierarchy,
            TaskParams {
                order: Some(order),
                ..TaskParams::default()
            },
        ),
    ];
    if bundle {
        tasks.push(with(
            TaskKind::Transport,
            TaskParams {
                order: Some(order.min(2)),
                ..TaskParams::default()
            },
        ));
        tasks.push(with(
            TaskKind::Hierarchy,
            TaskParams {
                order: Some(order.min(3)),
                mode: Some(Mode::Bundle),
                ..TaskParams::default()
            },
        ));
    }
    tasks
}

/// Standard path set on a ring: identity, one and two turns, one turn
/// backwards, a turn followed by its reverse, and a partial turn.
fn ring_paths(y: f64) -> Vec<PathEntry> {
    vec![
        path_entry("id", vec![y], &ring_chain(0)),
        path_entry("loop", vec![y], &ring_chain(1)),
        path_entry("loop2", vec![y], &ring_chain(2)),
        path_entry("back", vec![y], &ring_chain(-1)),
        path_entry("there-and-back", vec![y], &["A", "B", "C", "D", "A", "D", "C", "B", "A"]),
        path_entry("half", vec![y], &["A", "B", "C"]),
    ]
}

/// Codimension-one ring whose `D→A` edge is `gluing` on `[-r, r]`. The
/// `A→D` edge is `inverse` when given and the implicit inverse on
/// `[-r_inv, r_inv]` otherwise.
pub fn ring_document(gluing: &str, inverse: Option<&str>, r: f64, r_inv: f64) -> ConfigDocument {
    let unit = || BoxDomain::cube(1, 1.0);
    let id = || Some(vec!["y1".to_string()]);
    let mut transitions = Vec::new();
    for (s, t) in [("A", "B"), ("B", "C"), ("C", "D")] {
        transitions.push(entry(s, t, id(), unit()));
        transitions.push(entry(t, s, id(), unit()));
    }
    transitions.push(entry("D", "A", Some(vec![gluing.into()]), BoxDomain::cube(1, r)));
    transitions.push(entry("A", "D", inverse.map(|i| vec![i.into()]), BoxDomain::cube(1, r_inv)));
    ConfigDocument {
        codim: 1,
        leaf_dim: 1,
        charts: RING.iter().map(|c| ChartEntry { id: c.to_string() }).collect(),
        transitions,
        bundle: None,
        paths: ring_paths(0.0),
        tasks: default_tasks(4, false),
    }
}

/// Suspension of `phi` (a map of `y1` fixing 0).
pub fn suspension(name: &str, phi: &str, r: f64, r_inv: f64) -> Result<GalleryInstance, ConfigError> {
    GalleryInstance::from_document(name, ring_document(phi, None, r, r_inv), Vec::new())
}

fn holonomy(path: &str, order: usize, terms: &[(usize, &[u32], f64)], provenance: &'static str) -> ExpectedJet {
    ExpectedJet {
        path: path.into(),
        order,
        kind: ExpectedKind::Holonomy,
        terms: terms.iter().map(|(c, e, v)| (*c, e.to_vec(), *v)).collect(),
        provenance,
    }
}

/// `R^2 × R^2` covered by three charts related by identities.
pub fn product(q: usize) -> Result<GalleryInstance, ConfigError> {
    let vars = transverse_variables(q);
    let ids = ["A", "B", "C"];
    let mut transitions = Vec::new();
    for s in ids {
        for t in ids {
            if s != t {
                transitions.push(entry(s, t, Some(vars.clone()), BoxDomain::cube(q, 1.0)));
            }
        }
    }
    let y = vec![0.1; q];
    let paths = vec![
        path_entry("id", y.clone(), &["A"]),
        path_entry("loop", y.clone(), &["A", "B", "C", "A"]),
        path_entry("direct", y.clone(), &["A", "C"]),
        path_entry("detour", y.clone(), &["A", "B", "C"]),
        path_entry("zigzag", y.clone(), &["A", "B", "A", "C", "B", "C"]),
    ];
    let doc = ConfigDocument {
        codim: q,
        leaf_dim: 2,
        charts: ids.iter().map(|c| ChartEntry { id: c.to_string() }).collect(),
        transitions,
        bundle: None,
        paths,
        tasks: default_tasks(4, false),
    };
    let identity: Vec<(usize, Vec<u32>, f64)> = (0..q)
        .map(|i| {
            let mut e = vec![0; q];
            e[i] = 1;
            (i, e, 1.0)
        })
        .collect();
    let expected = ["id", "loop", "direct", "detour", "zigzag"]
        .iter()
        .map(|p| ExpectedJet {
            path: p.to_string(),
            order: 4,
            kind: ExpectedKind::Holonomy,
            terms: identity.clone(),
            provenance: "every transition is the identity, so every composite is",
        })
        .collect();
    GalleryInstance::from_document("product", doc, expected)
}

pub fn mobius() -> Result<GalleryInstance, ConfigError> {
    let mut doc = ring_document("-y1", Some("-y1"), 1.0, 1.0);
    doc.paths.push(path_entry("loop-off", vec![0.3], &ring_chain(1)));
    let note_flip = "one flip y -> -y per turn, identities elsewhere";
    let expected = vec![
        holonomy("loop", 6, &[(0, &[1], -1.0)], note_flip),
        holonomy("back", 6, &[(0, &[1], -1.0)], note_flip),
        holonomy("loop2", 6, &[(0, &[1], 1.0)], "two flips cancel"),
        holonomy("there-and-back", 6, &[(0, &[1], 1.0)], "a flip followed by its inverse"),
        holonomy("loop-off", 6, &[(0, &[1], -1.0)], "linear map, same jet at every base point"),
    ];
    GalleryInstance::from_document("mobius", doc, expected)
}

/// Ring glued by `y ↦ λy`.
pub fn contracting_annulus(lambda: f64) -> Result<GalleryInstance, ConfigError> {
    let doc = ring_document(&format!("{lambda}*y1"), Some(&format!("{}*y1", 1.0 / lambda)), 1.0, 1.0);
    let expected = vec![
        holonomy("loop", 4, &[(0, &[1], lambda)], "one turn applies y -> λy"),
        holonomy("loop2", 4, &[(0, &[1], lambda * lambda)], "two turns apply y -> λ²y"),
        holonomy("back", 4, &[(0, &[1], 1.0 / lambda)], "a backwards turn applies y -> y/λ"),
        holonomy("half", 4, &[(0, &[1], 1.0)], "identity edges only"),
    ];
    GalleryInstance::from_document("contracting-annulus", doc, expected)
}

fn suspension_quadratic() -> Result<GalleryInstance, ConfigError> {
    let doc = ring_document("y1 + y1^2", None, 0.25, 0.15);
    let expected = vec![
        holonomy("loop", 4, &[(0, &[1], 1.0), (0, &[2], 1.0)], "the gluing map y + y² fixes 0"),
        holonomy(
            "back",
            5,
            &[(0, &[1], 1.0), (0, &[2], -1.0), (0, &[3], 2.0), (0, &[4], -5.0), (0, &[5], 14.0)],
            "reversion of y + y²: (sqrt(1 + 4y) - 1)/2, signed Catalan numbers",
        ),
        holonomy(
            "loop2",
            4,
            &[(0, &[1], 1.0), (0, &[2], 2.0), (0, &[3], 2.0), (0, &[4], 1.0)],
            "(y + y²) + (y + y²)² expanded",
        ),
        holonomy("there-and-back", 5, &[(0, &[1], 1.0)], "a turn followed by its inverse"),
    ];
    let mut doc = doc;
    doc.paths.push(path_entry("loop-off", vec![0.1], &ring_chain(1)));
    GalleryInstance::from_document("suspension-quadratic", doc, expected)
}

/// Ring glued by `y + y^m`, tangent to the identity to order `m - 1`.
pub fn tangency(m: u32) -> Result<GalleryInstance, ConfigError> {
    let doc = ring_document(&format!("y1 + y1^{m}"), None, 0.3, 0.15);
    let mut expected = vec![holonomy("there-and-back", 6, &[(0, &[1], 1.0)], "a turn followed by its inverse")];
    if m == 3 {
        expected.push(holonomy(
            "loop",
            5,
            &[(0, &[1], 1.0), (0, &[3], 1.0)],
            "the gluing map y + y³ fixes 0",
        ));
        expected.push(holonomy(
            "back",
            5,
            &[(0, &[1], 1.0), (0, &[3], -1.0), (0, &[5], 3.0)],
            "reversion of y + y³: x = y - x³ iterated twice",
        ));
    }
    GalleryInstance::from_document(&format!("tangency-{m}"), doc, expected)
}

/// Codimension-two triangle `A, B, C` with shears
/// `A→B = (y1 + y2², y2)` and `B→C = (y1, y2 + y1³)`.
pub fn shear_triangle() -> Result<GalleryInstance, ConfigError> {
    let b = || BoxDomain::cube(2, 0.5);
    let e = |s: &str, t: &str, m: [&str; 2]| entry(s, t, Some(m.iter().map(|x| x.to_string()).collect()), b());
    let transitions = vec![
        e("A", "B", ["y1 + y2^2", "y2"]),
        e("B", "A", ["y1 - y2^2", "y2"]),
        e("B", "C", ["y1", "y2 + y1^3"]),
        e("C", "B", ["y1", "y2 - y1^3"]),
        e("A", "C", ["y1 + y2^2", "y2 + (y1 + y2^2)^3"]),
        e("C", "A", ["y1 - (y2 - y1^3)^2", "y2 - y1^3"]),
    ];
    let o = vec![0.0, 0.0];
    let paths = vec![
        path_entry("id", o.clone(), &["A"]),
        path_entry("ab", o.clone(), &["A", "B"]),
        path_entry("abc", o.clone(), &["A", "B", "C"]),
        path_entry("ac", o.clone(), &["A", "C"]),
        path_entry("loop", o.clone(), &["A", "B", "C", "A"]),
        path_entry("ab-off", vec![0.1, 0.2], &["A", "B"]),
    ];
    let doc = ConfigDocument {
        codim: 2,
        leaf_dim: 1,
        charts: ["A", "B", "C"].iter().map(|c| ChartEntry { id: c.to_string() }).collect(),
        transitions,
        bundle: None,
        paths,
        tasks: default_tasks(4, false),
    };
    let shear_c = "(y1 + y2², y2 + (y1 + y2²)³) truncated at degree 3";
    let expected = vec![
        holonomy(
            "ab",
            3,
            &[(0, &[1, 0], 1.0), (0, &[0, 2], 1.0), (1, &[0, 1], 1.0)],
            "the A→B shear fixes 0",
        ),
        holonomy(
            "abc",
            3,
            &[(0, &[1, 0], 1.0), (0, &[0, 2], 1.0), (1, &[0, 1], 1.0), (1, &[3, 0], 1.0)],
            shear_c,
        ),
        holonomy(
            "ac",
            3,
            &[(0, &[1, 0], 1.0), (0, &[0, 2], 1.0), (1, &[0, 1], 1.0), (1, &[3, 0], 1.0)],
            shear_c,
        ),
        holonomy("loop", 4, &[(0, &[1, 0], 1.0), (1, &[0, 1], 1.0)], "C→A undoes B→C∘A→B exactly"),
        holonomy(
            "ab-off",
            3,
            &[(0, &[1, 0], 1.0), (0, &[0, 1], 0.4), (0, &[0, 2], 1.0), (1, &[0, 1], 1.0)],
            "(y1 + y2²) at y2 = 0.2 + u2 is 0.04 + u1 + 0.4 u2 + u2² after re-centring",
        ),
    ];
    GalleryInstance::from_document("shear-triangle", doc, expected)
}

fn fibre_entry(src: &str, dst: &str, f_map: Option<Vec<String>>, domain: BoxDomain) -> FibreEntry {
    FibreEntry {
        src: src.into(),
        dst: dst.into(),
        f_map: f_map.map_or(MapEntry::Implicit(InverseTag::Inverse), MapEntry::Expressions),
        domain,
    }
}

pub fn mobius_line_bundle() -> Result<GalleryInstance, ConfigError> {
    let mut doc = ring_document("-y1", Some("-y1"), 1.0, 1.0);
    let fibre = || BoxDomain::cube(1, 10.0);
    let mut transitions = Vec::new();
    for t in &doc.transitions {
        let flip = t.src == "D" && t.dst == "A" || t.src == "A" && t.dst == "D";
        let map = if flip { "-f1" } else { "f1" };
        transitions.push(fibre_entry(&t.src, &t.dst, Some(vec![map.into()]), fibre()));
    }
    doc.bundle = Some(BundleEntry {
        fibre_dim: 1,
        transitions,
        anchors: vec![vec![1.0]],
    });
    doc.tasks = default_tasks(4, true);
    let expected = vec![
        holonomy("loop", 6, &[(0, &[1], -1.0)], "one flip y -> -y per turn, identities elsewhere"),
        ExpectedJet {
            path: "loop".into(),
            order: 1,
            kind: ExpectedKind::Total,
            terms: vec![(0, vec![1, 0], -1.0), (1, vec![0, 1], -1.0)],
            provenance: "the D→A edge flips base and fibre together",
        },
        ExpectedJet {
            path: "loop2".into(),
            order: 3,
            kind: ExpectedKind::Total,
            terms: vec![(0, vec![1, 0], 1.0), (1, vec![0, 1], 1.0)],
            provenance: "two flips cancel in base and fibre",
        },
    ];
    GalleryInstance::from_document("mobius-line-bundle", doc, expected)
}

fn add_all(nodes: Vec<Node>) -> Node {
    nodes.into_iter().fold(Node::Const(0.0), Node::sum)
}

/// The transverse frame bundle of a base instance: fibre `R^{q×q}` stored
/// row-major, fibre transitions `F ↦ J(y)·F` with `J` the Jacobian of the
/// base transition. Implicit base edges get implicit fibre edges. The
/// identity frame is the single anchor.
pub fn frame_bundle(base: &GalleryInstance, name: &str) -> Result<GalleryInstance, ConfigError> {
    let mut doc = base.document.clone();
    let q = doc.codim;
    let m = q * q;
    let yvars = transverse_variables(q);
    let vars = bundle_variables(q, m);
    let mut transitions = Vec::new();
    for t in &doc.transitions {
        let f_map = match &t.y_map {
            MapEntry::Implicit(_) => None,
            MapEntry::Expressions(texts) => {
                let exprs = texts
                    .iter()
                    .map(|s| expr::parse(s, &yvars))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ConfigError::Invalid {
                        pointer: "/transitions".into(),
                        message: e.to_string(),
                    })?;
                let mut out = Vec::with_capacity(m);
                for e in &exprs {
                    for j in 0..q {
                        let terms = (0..q)
                            .map(|l| Node::product(e.derivative(l).root().clone(), Node::Var(q + l * q + j)))
                            .collect();
                        out.push(Expr::new(vars.clone(), add_all(terms)).to_string());
                    }
                }
                Some(out)
            }
        };
        transitions.push(fibre_entry(&t.src, &t.dst, f_map, BoxDomain::cube(m, 10.0)));
    }
    let mut identity = vec![0.0; m];
    for i in 0..q {
        identity[i * q + i] = 1.0;
    }
    doc.bundle = Some(BundleEntry {
        fibre_dim: m,
        transitions,
        anchors: vec![identity],
    });
    doc.tasks = default_tasks(4, true);
    GalleryInstance::from_document(name, doc, base.expected.clone())
}
