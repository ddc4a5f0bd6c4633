//! Transport of transverse germs along chain paths, truncated at a jet order.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError};
use crate::jet::{self, close, compose, jets_equal, DiffeoJet, JetError};
use crate::path::{self, ChainPath, PathError};

pub const DEFAULT_ORDER: usize = 4;
pub const MAX_ORDER: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolonomyError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("order {0} exceeds the maximum supported order {MAX_ORDER}")]
    OrderTooHigh(usize),
    #[error("could not build a thread pool: {0}")]
    Pool(String),
}

pub(crate) fn check_order(k: usize) -> Result<(), HolonomyError> {
    if k > MAX_ORDER {
        Err(HolonomyError::OrderTooHigh(k))
    } else {
        Ok(())
    }
}

/// Chart id and transverse coordinate.
pub type Anchor = (String, Vec<f64>);

/// Normalized transported jet from the source transversal to the target one.
#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyJet {
    pub source: Anchor,
    pub target: Anchor,
    pub jet: DiffeoJet,
}

impl HolonomyJet {
    /// Values compared by [`equivalent`] and [`classify`].
    pub fn signature(&self) -> Signature {
        let mut values = self.source.1.clone();
        values.extend_from_slice(&self.target.1);
        values.extend(self.jet.jet().to_flat());
        Signature {
            labels: vec![self.source.0.clone(), self.target.0.clone()],
            values,
        }
    }
}

/// Order-`k` holonomy jet of `p`.
pub fn transport_jet(atlas: &Atlas, p: &ChainPath, k: usize) -> Result<HolonomyJet, HolonomyError> {
    check_order(k)?;
    path::trajectory(atlas, p)?;
    let mut y = p.base_y.clone();
    let mut h = jet::identity_jet(atlas.codim(), k);
    for (src, dst) in p.hops() {
        let (hop, image) = atlas.transition_jet(src, dst, &y, k)?;
        h = DiffeoJet::try_from(compose(hop.jet(), h.jet())?)?;
        y = image;
    }
    Ok(HolonomyJet {
        source: (p.base_chart.clone(), p.base_y.clone()),
        target: (p.final_chart().to_owned(), y),
        jet: h,
    })
}

/// Plaque-matching image of the transverse coordinate `y0` along the chain.
pub fn winkelnkemper_map(atlas: &Atlas, p: &ChainPath, y0: &[f64]) -> Result<Vec<f64>, HolonomyError> {
    let moved = ChainPath {
        base_y: y0.to_vec(),
        ..p.clone()
    };
    Ok(path::endpoint(atlas, &moved)?.1)
}

/// Same endpoints and equal order-`k` jets, up to `tol`.
pub fn equivalent(atlas: &Atlas, p1: &ChainPath, p2: &ChainPath, k: usize, tol: f64) -> Result<bool, HolonomyError> {
    let a = transport_jet(atlas, p1, k)?;
    let b = transport_jet(atlas, p2, k)?;
    let same_ends = a.source.0 == b.source.0
        && a.target.0 == b.target.0
        && points_close(&a.source.1, &b.source.1, tol)
        && points_close(&a.target.1, &b.target.1, tol);
    Ok(same_ends && jets_equal(a.jet.jet(), b.jet.jet(), tol)?)
}

fn points_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}

/// Discrete labels that must match exactly plus real values compared up to a
/// tolerance. Two paths are equivalent iff their signatures are.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl Signature {
    pub fn matches(&self, other: &Self, tol: f64) -> bool {
        self.labels == other.labels && points_close(&self.values, &other.values, tol)
    }

    /// Values rounded to a grid of width `tol`; exact bits when `tol <= 0`.
    pub fn key(&self, tol: f64) -> ClassKey {
        let cells = self
            .values
            .iter()
            .map(|v| {
                if tol > 0.0 {
                    (v / tol).round() as i64
                } else {
                    // Treat -0.0 and 0.0 alike.
                    (v + 0.0).to_bits() as i64
                }
            })
            .collect();
        ClassKey {
            labels: self.labels.clone(),
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    pub labels: Vec<String>,
    pub cells: Vec<i64>,
}

/// Partitions signatures into classes: hash by grid key, then merge groups
/// whose representatives match (values close to a cell boundary may land in
/// neighbouring cells). Classes and members are in ascending index order.
pub fn partition(signatures: &[Signature], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_key: HashMap<ClassKey, usize> = HashMap::new();
    for (i, s) in signatures.iter().enumerate() {
        let g = *by_key.entry(s.key(tol)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut parent: Vec<usize> = (0..groups.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut buckets: BTreeMap<&[String], Vec<usize>> = BTreeMap::new();
    for (g, members) in groups.iter().enumerate() {
        buckets.entry(&signatures[members[0]].labels).or_default().push(g);
    }
    for gs in buckets.values() {
        for (a, &ga) in gs.iter().enumerate() {
            for &gb in &gs[a + 1..] {
                let (ra, rb) = (&signatures[groups[ga][0]], &signatures[groups[gb][0]]);
                if ra.matches(rb, tol) {
                    let (x, y) = (find(&mut parent, ga), find(&mut parent, gb));
                    parent[x.max(y)] = x.min(y);
                }
            }
        }
    }
    let mut merged: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, members) in groups.into_iter().enumerate() {
        let root = find(&mut parent, g);
        merged.entry(root).or_default().extend(members);
    }
    let mut classes: Vec<Vec<usize>> = merged
        .into_values()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

/// Maps `f` over `items` on a pool of `jobs` threads, keeping input order.
/// `jobs == 0` uses the global pool.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>, HolonomyError> {
    if jobs == 1 {
        return Ok(items.iter().map(f).collect());
    }
    if jobs == 0 {
        return Ok(items.par_iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HolonomyError::Pool(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyClass {
    pub members: Vec<usize>,
    /// Holonomy of the first member.
    pub representative: HolonomyJet,
}

pub fn classify(atlas: &Atlas, paths: &[ChainPath], k: usize, tol: f64) -> Result<Vec<HolonomyClass>, HolonomyError> {
    classify_with_jobs(atlas, paths, k, tol, 1)
}

/// [`classify`] with transports evaluated on `jobs` threads; the result does
/// not depend on `jobs`.
pub fn classify_with_jobs(
    atlas: &Atlas,
    paths: &[ChainPath],
    k: usize,
    tol: f64,
    jobs: usize,
) -> Result<Vec<HolonomyClass>, HolonomyError> {
    check_order(k)?;
    let jets = par_map(paths, jobs, |p| transport_jet(atlas, p, k))?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let signatures: Vec<Signature> = jets.iter().map(HolonomyJet::signature).collect();
    Ok(partition(&signatures, tol)
        .into_iter()
        .map(|members| HolonomyClass {
            representative: jets[members[0]].clone(),
            members,
        })
        .collect())
}
