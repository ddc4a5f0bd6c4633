//! Classification of a path set at every jet order `0..=K` and checks that
//! the partitions form a tower: finer orders refine coarser ones.

use crate::bundle::{total_transport_jet, BundleError, FoliatedBundle};
use crate::holonomy::{check_order, par_map, partition, transport_jet, HolonomyError, Signature};
use crate::path::{self, ChainPath};

/// What the paths are classified over.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Base(&'a crate::atlas::Atlas),
    /// Order-0 data also includes the transported fibre points of `anchors`;
    /// order `k ≥ 1` adds the total jets anchored at each of them.
    Bundle {
        bundle: &'a FoliatedBundle,
        anchors: &'a [Vec<f64>],
    },
}

impl Target<'_> {
    pub fn is_bundle(&self) -> bool {
        matches!(self, Target::Bundle { .. })
    }
}

/// Data that decides equivalence of `p` at order `k`.
pub fn signature(target: Target<'_>, p: &ChainPath, k: usize) -> Result<Signature, BundleError> {
    let base = match target {
        Target::Base(atlas) => atlas,
        Target::Bundle { bundle, .. } => bundle.base(),
    };
    let mut sig = if k == 0 {
        let (chart, y) = path::endpoint(base, p)?;
        let mut values = p.base_y.clone();
        values.extend(y);
        Signature {
            labels: vec![p.base_chart.clone(), chart],
            values,
        }
    } else {
        transport_jet(base, p, k)?.signature()
    };
    if let Target::Bundle { bundle, anchors } = target {
        for f0 in anchors {
            let total = total_transport_jet(bundle, p, k, f0)?;
            sig.values.extend_from_slice(&total.target.f);
            if k > 0 {
                sig.values.extend(total.jet.jet().to_flat());
            }
        }
    }
    Ok(sig)
}

/// Partition of the path indices at one order, in ascending order of the
/// smallest member.
pub fn classify_at(target: Target<'_>, paths: &[ChainPath], k: usize, tol: f64, jobs: usize) -> Result<Vec<Vec<usize>>, BundleError> {
    check_order(k)?;
    let sigs = par_map(paths, jobs, |p| signature(target, p, k))
        .map_err(BundleError::from)?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(partition(&sigs, tol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub fine_order: usize,
    pub coarse_order: usize,
    /// Coarse class of each fine class.
    pub map: Vec<usize>,
    pub refines: bool,
}

/// Two paths equivalent at `fine_order` but not at `coarse_order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerViolation {
    pub coarse_order: usize,
    pub fine_order: usize,
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    pub max_order: usize,
    pub bundle_mode: bool,
    /// `classes[k]` is the partition at order `k`.
    pub classes: Vec<Vec<Vec<usize>>>,
    /// `refinement[k]` maps order `k + 1` classes onto order `k` classes.
    pub refinement: Vec<Refinement>,
    pub violations: Vec<TowerViolation>,
}

impl HierarchyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn class_index(classes: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut of = vec![0; n];
    for (c, members) in classes.iter().enumerate() {
        for &i in members {
            of[i] = c;
        }
    }
    of
}

fn refine(
    fine: &[Vec<usize>],
    coarse: &[Vec<usize>],
    n: usize,
    fine_order: usize,
    coarse_order: usize,
) -> (Refinement, Vec<TowerViolation>) {
    let of = class_index(coarse, n);
    let mut violations = Vec::new();
    let map = fine
        .iter()
        .map(|members| {
            let c = of[members[0]];
            if let Some(&j) = members.iter().find(|&&j| of[j] != c) {
                violations.push(TowerViolation {
                    coarse_order,
                    fine_order,
                    pair: (members[0], j),
                });
            }
            c
        })
        .collect::<Vec<_>>();
    let mut hit = vec![false; coarse.len()];
    for &c in &map {
        hit[c] = true;
    }
    let refines = violations.is_empty() && hit.iter().all(|h| *h);
    (
        Refinement {
            fine_order,
            coarse_order,
            map,
            refines,
        },
        violations,
    )
}

pub fn hierarchy_report(
    target: Target<'_>,
    paths: &[ChainPath],
    max_order: usize,
    tol: f64,
    jobs: usize,
) -> Result<HierarchyReport, BundleError> {
    hierarchy_report_with_tolerances(target, paths, &vec![tol; max_order + 1], jobs)
}

/// Like [`hierarchy_report`] but classifies order `k` with `tols[k]`.
/// Mismatched tolerances can break the tower, which makes this a harness for
/// exercising the failure path.
pub fn hierarchy_report_with_tolerances(
    target: Target<'_>,
    paths: &[ChainPath],
    tols: &[f64],
    jobs: usize,
) -> Result<HierarchyReport, BundleError> {
    let max_order = tols.len().checked_sub(1).ok_or(HolonomyError::OrderTooHigh(0))?;
    check_order(max_order)?;
    let classes = tols
        .iter()
        .enumerate()
        .map(|(k, tol)| classify_at(target, paths, k, *tol, jobs))
        .collect::<Result<Vec<_>, _>>()?;
    let mut refinement = Vec::new();
    let mut violations = Vec::new();
    for k in 0..max_order {
        let (r, v) = refine(&classes[k + 1], &classes[k], paths.len(), k + 1, k);
        refinement.push(r);
        violations.extend(v);
    }
    Ok(HierarchyReport {
        max_order,
        bundle_mode: target.is_bundle(),
        classes,
        refinement,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerCheck {
    pub passed: bool,
    pub witness: Option<TowerViolation>,
}

/// Checks that equivalence at order `k` implies equivalence at every `l < k`.
pub fn verify_tower(target: Target<'_>, paths: &[ChainPath], max_order: usize, tol: f64) -> Result<TowerCheck, BundleError> {
    verify_tower_with_tolerances(target, paths, &vec![tol; max_order + 1])
}

pub fn verify_tower_with_tolerances(target: Target<'_>, paths: &[ChainPath], tols: &[f64]) -> Result<TowerCheck, BundleError> {
    let report = hierarchy_report_with_tolerances(target, paths, tols, 1)?;
    let n = paths.len();
    for k in 1..report.classes.len() {
        for l in 0..k {
            let of = class_index(&report.classes[l], n);
            for members in &report.classes[k] {
                if let Some(&j) = members.iter().find(|&&j| of[j] != of[members[0]]) {
                    return Ok(TowerCheck {
                        passed: false,
                        witness: Some(TowerViolation {
                            coarse_order: l,
                            fine_order: k,
                            pair: (members[0], j),
                        }),
                    });
                }
            }
        }
    }
    Ok(TowerCheck {
        passed: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_atlas, Atlas, Chart, TransitionSpec};
    use crate::sampling::BoxDomain;

    fn ring(gluing: &str, r: f64) -> Atlas {
        let d = || BoxDomain::cube(1, 1.0);
        let charts = ["A", "B", "C", "D"].iter().map(|c| Chart::new(*c, 1, 1)).collect();
        let mut specs = Vec::new();
        for (s, t) in [("A", "B"), ("B", "C"), ("C", "D")] {
            specs.push(TransitionSpec::explicit(s, t, ["y1"], d()));
            specs.push(TransitionSpec::explicit(t, s, ["y1"], d()));
        }
        specs.push(TransitionSpec::explicit("D", "A", [gluing], BoxDomain::cube(1, r)));
        specs.push(TransitionSpec::inverse("A", "D", BoxDomain::cube(1, r / 2.0)));
        build_atlas(charts, specs).unwrap()
    }

    fn loops(n: usize) -> Vec<ChainPath> {
        (0..n)
            .map(|i| {
                if i == 0 {
                    return ChainPath::identity("A", vec![0.0]);
                }
                let mut chain = vec!["A"];
                for _ in 0..i {
                    chain.extend(["B", "C", "D", "A"]);
                }
                ChainPath::new(vec![0.0], &chain)
            })
            .collect()
    }

    #[test]
    fn tangency_splits_at_order_three() {
        let atlas = ring("y1 + y1^3", 0.3);
        let report = hierarchy_report(Target::Base(&atlas), &loops(2), 3, 1e-9, 1).unwrap();
        let sizes: Vec<usize> = report.classes.iter().map(Vec::len).collect();
        assert_eq!(sizes, [1, 1, 1, 2]);
        assert!(report.passed());
        assert!(report.refinement.iter().all(|r| r.refines));
        assert_eq!(report.refinement[2].map, [0, 0]);
    }

    #[test]
    fn annulus_singletons_from_order_one() {
        let atlas = ring("y1/2", 1.0);
        let report = hierarchy_report(Target::Base(&atlas), &loops(4), 1, 1e-9, 2).unwrap();
        assert_eq!(report.classes[0].len(), 1);
        assert_eq!(report.classes[1].len(), 4);
        assert!(report.passed());
    }

    #[test]
    fn tower_checks() {
        let atlas = ring("y1 + y1^2", 0.25);
        let paths = loops(3);
        assert!(verify_tower(Target::Base(&atlas), &paths, 4, 1e-9).unwrap().passed);
        assert!(verify_tower(Target::Base(&atlas), &paths[..1], 4, 1e-9).unwrap().passed);

        // Loops from 0.4 on the annulus end at distinct points, so they are
        // separate at order 0; a coarse order-1 grid merges them again.
        let annulus = ring("y1/2", 1.0);
        let paths: Vec<ChainPath> = loops(3).into_iter().map(|p| ChainPath { base_y: vec![0.4], ..p }).collect();
        let atlas = annulus;
        let broken = verify_tower_with_tolerances(Target::Base(&atlas), &paths, &[1e-9, 10.0]).unwrap();
        assert!(!broken.passed);
        let w = broken.witness.unwrap();
        assert_eq!((w.coarse_order, w.fine_order), (0, 1));
        let report = hierarchy_report_with_tolerances(Target::Base(&atlas), &paths, &[1e-9, 10.0], 1).unwrap();
        assert!(!report.passed());
        assert!(!report.refinement[0].refines);
    }
}
