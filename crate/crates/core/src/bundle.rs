//! Foliated bundles given by fibre transitions `L_{src→dst}(y, f)` over an
//! atlas. Transport of fibre points, of section jets and of the total jet in
//! `(y, f)` all reduce to composing the cocycle along the chain.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::atlas::{self, max_norm_diff, newton_solve, Atlas, AtlasError, INVERSE_TOLERANCE};
use crate::expr::{self, Expr, ExprError};
use crate::holonomy::{check_order, HolonomyError};
use crate::jet::{self, compose, substitute, DiffeoJet, JetError, JetMap, Series, ANCHOR_TOLERANCE};
use crate::path::{self, ChainPath, PathError};
use crate::sampling::BoxDomain;

const BUILD_SAMPLES: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Holonomy(#[from] HolonomyError),
    #[error("fibre dimension must be at least 1")]
    ZeroFibre,
    #[error("base transition {src}→{dst} has no fibre transition")]
    MissingFibre { src: String, dst: String },
    #[error("fibre transition {src}→{dst} has no base transition")]
    UnknownEdge { src: String, dst: String },
    #[error("duplicate fibre transition {src}→{dst}")]
    Duplicate { src: String, dst: String },
    #[error("fibre transitions {src}→{dst} and {dst}→{src} are both implicit")]
    BothImplicit { src: String, dst: String },
    #[error("fibre transition {src}→{dst}: {message}")]
    Dimension { src: String, dst: String, message: String },
    #[error("fibre transition {src}→{dst} component {component}: {source}")]
    Expression {
        src: String,
        dst: String,
        component: usize,
        source: ExprError,
    },
    #[error("fibre transition {src}→{dst} is not finite at y={y:?}, f={f:?}")]
    NonFinite {
        src: String,
        dst: String,
        y: Vec<f64>,
        f: Vec<f64>,
    },
    #[error("fibre transition {dst}→{src} does not invert {src}→{dst}: residual {residual:e} at y={y:?}, f={f:?}")]
    ReverseMismatch {
        src: String,
        dst: String,
        y: Vec<f64>,
        f: Vec<f64>,
        residual: f64,
    },
    #[error("fibre point {f:?} lies outside the domain of {src}→{dst}")]
    Domain { src: String, dst: String, f: Vec<f64> },
    #[error("could not invert fibre transition {src}→{dst} at y={y:?}, f={f:?}")]
    Solve {
        src: String,
        dst: String,
        y: Vec<f64>,
        f: Vec<f64>,
    },
    #[error("section is anchored at ({chart}, {y:?}) but the path starts at ({base_chart}, {base_y:?})")]
    Anchor {
        chart: String,
        y: Vec<f64>,
        base_chart: String,
        base_y: Vec<f64>,
    },
    #[error("fibre anchor has length {found}, fibre dimension is {expected}")]
    FibreLength { expected: usize, found: usize },
}

/// Textual fibre transition.
#[derive(Debug, Clone, PartialEq)]
pub struct FibreSpec {
    pub src: String,
    pub dst: String,
    /// `None` declares the map as the inverse of the reverse edge.
    pub f_map: Option<Vec<String>>,
    /// Box in fibre coordinates.
    pub domain: BoxDomain,
}

impl FibreSpec {
    pub fn explicit<S: Into<String>>(src: &str, dst: &str, f_map: impl IntoIterator<Item = S>, domain: BoxDomain) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            f_map: Some(f_map.into_iter().map(Into::into).collect()),
            domain,
        }
    }

    pub fn inverse(src: &str, dst: &str, domain: BoxDomain) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            f_map: None,
            domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FibreTransition {
    /// Expressions in `y1..yq, f1..fm`; `None` for an implicit inverse.
    pub map: Option<Vec<Expr>>,
    pub domain: BoxDomain,
}

/// Variable names `y1..yq, f1..fm`.
pub fn bundle_variables(q: usize, m: usize) -> Vec<String> {
    let mut v = atlas::transverse_variables(q);
    v.extend((1..=m).map(|i| format!("f{i}")));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoliatedBundle {
    base: Atlas,
    fibre_dim: usize,
    fibre: BTreeMap<(String, String), FibreTransition>,
}

pub fn build_bundle(base: Atlas, fibre_dim: usize, specs: Vec<FibreSpec>) -> Result<FoliatedBundle, BundleError> {
    if fibre_dim == 0 {
        return Err(BundleError::ZeroFibre);
    }
    let q = base.codim();
    let vars = bundle_variables(q, fibre_dim);
    let mut fibre = BTreeMap::new();
    for spec in specs {
        if base.transition(&spec.src, &spec.dst).is_none() {
            return Err(BundleError::UnknownEdge {
                src: spec.src,
                dst: spec.dst,
            });
        }
        if spec.domain.dim() != fibre_dim || !spec.domain.is_well_formed() {
            return Err(BundleError::Dimension {
                src: spec.src,
                dst: spec.dst,
                message: format!("domain must be a well-formed box in R^{fibre_dim}"),
            });
        }
        let map = match &spec.f_map {
            None => None,
            Some(texts) => {
                if texts.len() != fibre_dim {
                    return Err(BundleError::Dimension {
                        src: spec.src.clone(),
                        dst: spec.dst.clone(),
                        message: format!("expected {fibre_dim} components, found {}", texts.len()),
                    });
                }
                Some(
                    texts
                        .iter()
                        .enumerate()
                        .map(|(component, t)| {
                            expr::parse(t, &vars).map_err(|source| BundleError::Expression {
                                src: spec.src.clone(),
                                dst: spec.dst.clone(),
                                component,
                                source,
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        let key = (spec.src.clone(), spec.dst.clone());
        if fibre.contains_key(&key) {
            return Err(BundleError::Duplicate {
                src: spec.src,
                dst: spec.dst,
            });
        }
        fibre.insert(key, FibreTransition { map, domain: spec.domain });
    }
    for t in base.transitions() {
        let key = (t.src.clone(), t.dst.clone());
        let Some(ft) = fibre.get(&key) else {
            return Err(BundleError::MissingFibre {
                src: t.src.clone(),
                dst: t.dst.clone(),
            });
        };
        let Some(reverse) = fibre.get(&(t.dst.clone(), t.src.clone())) else {
            return Err(BundleError::MissingFibre {
                src: t.dst.clone(),
                dst: t.src.clone(),
            });
        };
        if ft.map.is_none() && reverse.map.is_none() {
            return Err(BundleError::BothImplicit {
                src: t.src.clone(),
                dst: t.dst.clone(),
            });
        }
    }
    let bundle = FoliatedBundle { base, fibre_dim, fibre };
    bundle.check_reverses()?;
    Ok(bundle)
}

/// Fibre state after each hop of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleAnchor {
    pub chart: String,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
}

/// Normalized jet of the total transport `(y, f) ↦ (y-chain, L-chain)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalJet {
    pub source: BundleAnchor,
    pub target: BundleAnchor,
    /// Jet in `q + m` variables, zero constant term.
    pub jet: DiffeoJet,
}

/// Transverse jet of a distinguished section in a chart trivialization.
/// The jet is in the shifted coordinate `y - base_y`; its constant term is
/// the section's fibre value at `base_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionJet {
    pub chart: String,
    pub base_y: Vec<f64>,
    pub jet: JetMap,
}

impl FoliatedBundle {
    pub fn base(&self) -> &Atlas {
        &self.base
    }

    pub fn fibre_dim(&self) -> usize {
        self.fibre_dim
    }

    pub fn codim(&self) -> usize {
        self.base.codim()
    }

    pub fn fibre_transition(&self, src: &str, dst: &str) -> Option<&FibreTransition> {
        self.fibre.get(&(src.to_owned(), dst.to_owned()))
    }

    pub fn specs(&self) -> Vec<FibreSpec> {
        self.fibre
            .iter()
            .map(|((src, dst), t)| FibreSpec {
                src: src.clone(),
                dst: dst.clone(),
                f_map: t.map.as_ref().map(|es| es.iter().map(ToString::to_string).collect()),
                domain: t.domain.clone(),
            })
            .collect()
    }

    fn lookup(&self, src: &str, dst: &str) -> Result<&FibreTransition, BundleError> {
        self.fibre_transition(src, dst).ok_or_else(|| {
            BundleError::Atlas(AtlasError::MissingTransition {
                src: src.into(),
                dst: dst.into(),
            })
        })
    }

    fn check_reverses(&self) -> Result<(), BundleError> {
        let q = self.codim();
        for t in self.base.transitions() {
            let ft = self.lookup(&t.src, &t.dst)?;
            let product = BoxDomain::new(
                t.domain.lo.iter().chain(&ft.domain.lo).copied().collect(),
                t.domain.hi.iter().chain(&ft.domain.hi).copied().collect(),
            );
            let reverse_base = self.base.transition(&t.dst, &t.src).expect("atlas has reverses");
            let reverse = self.lookup(&t.dst, &t.src)?;
            for point in product.halton(BUILD_SAMPLES) {
                let (y, f) = point.split_at(q);
                let Ok(y2) = self.base.apply_transition(&t.src, &t.dst, y) else {
                    continue;
                };
                let g = match self.apply_fibre(&t.src, &t.dst, y, f) {
                    Ok(g) => g,
                    Err(BundleError::Solve { .. }) | Err(BundleError::Domain { .. }) if ft.map.is_none() => continue,
                    Err(_) => {
                        return Err(BundleError::NonFinite {
                            src: t.src.clone(),
                            dst: t.dst.clone(),
                            y: y.to_vec(),
                            f: f.to_vec(),
                        })
                    }
                };
                if !reverse_base.domain.contains(&y2) || !reverse.domain.contains(&g) {
                    continue;
                }
                let residual = match self.apply_fibre(&t.dst, &t.src, &y2, &g) {
                    Ok(back) => max_norm_diff(&back, f),
                    Err(_) => f64::INFINITY,
                };
                if residual.is_nan() || residual > INVERSE_TOLERANCE {
                    return Err(BundleError::ReverseMismatch {
                        src: t.src.clone(),
                        dst: t.dst.clone(),
                        y: y.to_vec(),
                        f: f.to_vec(),
                        residual,
                    });
                }
            }
        }
        Ok(())
    }

    /// Pointwise `L_{src→dst}(y, f)`; identity within one chart.
    pub fn apply_fibre(&self, src: &str, dst: &str, y: &[f64], f: &[f64]) -> Result<Vec<f64>, BundleError> {
        if f.len() != self.fibre_dim {
            return Err(BundleError::FibreLength {
                expected: self.fibre_dim,
                found: f.len(),
            });
        }
        if src == dst {
            return Ok(f.to_vec());
        }
        let t = self.lookup(src, dst)?;
        if !t.domain.contains(f) {
            return Err(BundleError::Domain {
                src: src.into(),
                dst: dst.into(),
                f: f.to_vec(),
            });
        }
        let y2 = self.base.apply_transition(src, dst, y)?;
        let mut point = y.to_vec();
        point.extend_from_slice(f);
        match &t.map {
            Some(exprs) => exprs
                .iter()
                .map(|e| e.eval_point(&point))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| BundleError::NonFinite {
                    src: src.into(),
                    dst: dst.into(),
                    y: y.to_vec(),
                    f: f.to_vec(),
                }),
            None => {
                let partner = self.lookup(dst, src)?;
                let exprs = partner.map.as_ref().expect("both directions implicit is rejected at build");
                let q = self.codim();
                let g = newton_solve(
                    |g| {
                        let mut at = y2.clone();
                        at.extend_from_slice(g);
                        let jet = atlas::explicit_jet(exprs, &at, 1).map_err(|_| ())?;
                        let jac = jet.linear_part().columns(q, self.fibre_dim).into_owned();
                        Ok((jet.constant_term(), jac))
                    },
                    f,
                    f,
                    &partner.domain,
                )
                .ok_or_else(|| BundleError::Solve {
                    src: src.into(),
                    dst: dst.into(),
                    y: y.to_vec(),
                    f: f.to_vec(),
                })?;
                if !partner.domain.contains(&g) {
                    return Err(BundleError::Domain {
                        src: src.into(),
                        dst: dst.into(),
                        f: f.to_vec(),
                    });
                }
                Ok(g)
            }
        }
    }

    /// Normalized order-`k` jet of `(y, f) ↦ (y_{src→dst}(y), L_{src→dst}(y, f))`
    /// at `(y, f)`, with the image point.
    pub fn hop_total_jet(
        &self,
        src: &str,
        dst: &str,
        y: &[f64],
        f: &[f64],
        k: usize,
    ) -> Result<(DiffeoJet, Vec<f64>, Vec<f64>), BundleError> {
        let (q, m) = (self.codim(), self.fibre_dim);
        let n = q + m;
        if src == dst {
            return Ok((jet::identity_jet(n, k), y.to_vec(), f.to_vec()));
        }
        let t = self.lookup(src, dst)?;
        match &t.map {
            Some(exprs) => {
                let g = self.apply_fibre(src, dst, y, f)?;
                let (base, y2) = self.base.transition_jet(src, dst, y, k)?;
                let vars: Vec<Series> = (0..n).map(|i| Series::variable(n, k, i, 0.0)).collect();
                let base_part = substitute(base.jet(), &vars[..q])?;
                let shifted: Vec<Series> = y.iter().chain(f).enumerate().map(|(i, c)| vars[i].add_constant(*c)).collect();
                let mut comps = base_part.into_components();
                for (e, gi) in exprs.iter().zip(&g) {
                    let s = e.eval_series(&shifted, k).map_err(|err| match err {
                        ExprError::Jet(j) => BundleError::Jet(j),
                        _ => BundleError::NonFinite {
                            src: src.into(),
                            dst: dst.into(),
                            y: y.to_vec(),
                            f: f.to_vec(),
                        },
                    })?;
                    comps.push(s.add_constant(-gi));
                }
                Ok((DiffeoJet::try_from(JetMap::new(comps)?)?, y2, g))
            }
            None => {
                let y2 = self.base.apply_transition(src, dst, y)?;
                let g = self.apply_fibre(src, dst, y, f)?;
                let (forward, _, _) = self.hop_total_jet(dst, src, &y2, &g, k)?;
                Ok((jet::invert(&forward)?, y2, g))
            }
        }
    }

    /// Fibre states along the chain, starting from `f0`.
    pub fn fibre_trajectory(&self, p: &ChainPath, f0: &[f64]) -> Result<Vec<BundleAnchor>, BundleError> {
        let ys = path::trajectory(&self.base, p)?;
        let mut out = vec![BundleAnchor {
            chart: p.base_chart.clone(),
            y: ys[0].clone(),
            f: f0.to_vec(),
        }];
        if f0.len() != self.fibre_dim {
            return Err(BundleError::FibreLength {
                expected: self.fibre_dim,
                found: f0.len(),
            });
        }
        for (i, (src, dst)) in p.hops().enumerate() {
            let f = self.apply_fibre(src, dst, &ys[i], &out[i].f)?;
            out.push(BundleAnchor {
                chart: dst.to_owned(),
                y: ys[i + 1].clone(),
                f,
            });
        }
        Ok(out)
    }
}

/// Endpoint of the horizontal lift of `p` starting at fibre point `f0`.
pub fn transport_point(bundle: &FoliatedBundle, p: &ChainPath, f0: &[f64]) -> Result<Vec<f64>, BundleError> {
    Ok(bundle.fibre_trajectory(p, f0)?.pop().expect("non-empty").f)
}

/// Order-`k` jet of the total transport, anchored at `(base_y, f0)`.
pub fn total_transport_jet(bundle: &FoliatedBundle, p: &ChainPath, k: usize, f0: &[f64]) -> Result<TotalJet, BundleError> {
    check_order(k)?;
    let anchors = bundle.fibre_trajectory(p, f0)?;
    let mut h = jet::identity_jet(bundle.codim() + bundle.fibre_dim(), k);
    for (i, (src, dst)) in p.hops().enumerate() {
        let (hop, _, _) = bundle.hop_total_jet(src, dst, &anchors[i].y, &anchors[i].f, k)?;
        h = DiffeoJet::try_from(compose(hop.jet(), h.jet())?)?;
    }
    let mut anchors = anchors;
    let target = anchors.pop().expect("non-empty");
    Ok(TotalJet {
        source: anchors.into_iter().next().unwrap_or_else(|| target.clone()),
        target,
        jet: h,
    })
}

/// Transports the `k`-jet of a section along `p`.
pub fn transport_section_jet(bundle: &FoliatedBundle, p: &ChainPath, s: &SectionJet, k: usize) -> Result<SectionJet, BundleError> {
    check_order(k)?;
    let anchored = s.chart == p.base_chart && s.base_y.len() == p.base_y.len() && max_norm_diff(&s.base_y, &p.base_y) <= ANCHOR_TOLERANCE;
    if !anchored {
        return Err(BundleError::Anchor {
            chart: s.chart.clone(),
            y: s.base_y.clone(),
            base_chart: p.base_chart.clone(),
            base_y: p.base_y.clone(),
        });
    }
    let (q, m) = (bundle.codim(), bundle.fibre_dim());
    if s.jet.source_dim() != q || s.jet.target_dim() != m {
        return Err(JetError::DimensionMismatch {
            expected: q,
            found: s.jet.source_dim(),
        }
        .into());
    }
    let ys = path::trajectory(bundle.base(), p)?;
    let mut sigma = jet::truncate(&s.jet, k)?;
    for (i, (src, dst)) in p.hops().enumerate() {
        if src == dst {
            continue;
        }
        let y = &ys[i];
        let (base, _) = bundle.base().transition_jet(src, dst, y, k)?;
        let back = jet::invert(&base)?;
        let pulled = compose(&sigma, back.jet())?;
        let f = pulled.constant_term();
        let ft = bundle.lookup(src, dst)?;
        sigma = match &ft.map {
            Some(exprs) => {
                let args: Vec<Series> = back
                    .jet()
                    .components()
                    .iter()
                    .zip(y)
                    .map(|(c, yi)| c.add_constant(*yi))
                    .chain(pulled.components().iter().cloned())
                    .collect();
                let comps = exprs
                    .iter()
                    .map(|e| e.eval_series(&args, k))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| match err {
                        ExprError::Jet(j) => BundleError::Jet(j),
                        _ => BundleError::NonFinite {
                            src: src.into(),
                            dst: dst.into(),
                            y: y.clone(),
                            f: f.clone(),
                        },
                    })?;
                JetMap::new(comps)?
            }
            None => {
                let (total, _, g) = bundle.hop_total_jet(src, dst, y, &f, k)?;
                let fibre_part = total.jet().select(q..q + m)?;
                let centred = pulled.with_constant(&vec![0.0; m]);
                let args: Vec<Series> = back.jet().components().iter().chain(centred.components()).cloned().collect();
                substitute(&fibre_part, &args)?.with_constant(&g)
            }
        };
    }
    Ok(SectionJet {
        chart: p.final_chart().to_owned(),
        base_y: ys.last().expect("non-empty").clone(),
        jet: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_atlas, Chart, TransitionSpec};
    use crate::holonomy::transport_jet;

    /// Four-chart ring with gluing on D→A, fibre gluing `fibre` on D→A.
    fn ring(gluing: &str, inverse: &str, fibre: &str, fibre_inverse: Option<&str>) -> FoliatedBundle {
        let d = || BoxDomain::cube(1, 1.0);
        let charts = ["A", "B", "C", "D"].iter().map(|c| Chart::new(*c, 1, 1)).collect();
        let mut specs = Vec::new();
        let mut fibres = Vec::new();
        for (s, t) in [("A", "B"), ("B", "C"), ("C", "D")] {
            specs.push(TransitionSpec::explicit(s, t, ["y1"], d()));
            specs.push(TransitionSpec::explicit(t, s, ["y1"], d()));
            fibres.push(FibreSpec::explicit(s, t, ["f1"], BoxDomain::cube(1, 10.0)));
            fibres.push(FibreSpec::explicit(t, s, ["f1"], BoxDomain::cube(1, 10.0)));
        }
        specs.push(TransitionSpec::explicit("D", "A", [gluing], d()));
        specs.push(TransitionSpec::explicit("A", "D", [inverse], d()));
        fibres.push(FibreSpec::explicit("D", "A", [fibre], BoxDomain::cube(1, 10.0)));
        fibres.push(match fibre_inverse {
            Some(inv) => FibreSpec::explicit("A", "D", [inv], BoxDomain::cube(1, 10.0)),
            None => FibreSpec::inverse("A", "D", BoxDomain::cube(1, 10.0)),
        });
        build_bundle(build_atlas(charts, specs).unwrap(), 1, fibres).unwrap()
    }

    fn lp(y: f64) -> ChainPath {
        ChainPath::new(vec![y], &["A", "B", "C", "D", "A"])
    }

    #[test]
    fn transport_point_examples() {
        let mobius = ring("-y1", "-y1", "-f1", Some("-f1"));
        assert_eq!(transport_point(&mobius, &lp(0.0), &[0.7]).unwrap(), [-0.7]);
        let twice = ChainPath::new(vec![0.0], &["A", "B", "C", "D", "A", "B", "C", "D", "A"]);
        assert_eq!(transport_point(&mobius, &twice, &[0.7]).unwrap(), [0.7]);
        let trivial = ring("y1", "y1", "f1", Some("f1"));
        assert_eq!(transport_point(&trivial, &lp(0.2), &[0.7]).unwrap(), [0.7]);
        let local = ChainPath::identity("C", vec![0.1]);
        assert_eq!(transport_point(&mobius, &local, &[0.7]).unwrap(), [0.7]);
        assert!(matches!(
            transport_point(&mobius, &lp(0.0), &[20.0]),
            Err(BundleError::Domain { .. })
        ));
    }

    #[test]
    fn build_rejects_bad_reverse() {
        let base = ring("y1", "y1", "f1", Some("f1")).base().clone();
        let mut specs = ring("y1", "y1", "f1", Some("f1")).specs();
        for s in &mut specs {
            if s.src == "A" && s.dst == "D" {
                s.f_map = Some(vec!["2*f1".into()]);
            }
        }
        assert!(matches!(
            build_bundle(base.clone(), 1, specs),
            Err(BundleError::ReverseMismatch { .. })
        ));
        let missing: Vec<_> = ring("y1", "y1", "f1", Some("f1"))
            .specs()
            .into_iter()
            .filter(|s| s.src != "A")
            .collect();
        assert!(matches!(build_bundle(base, 1, missing), Err(BundleError::MissingFibre { .. })));
    }

    #[test]
    fn section_jet_examples() {
        let mobius = ring("-y1", "-y1", "-f1", Some("-f1"));
        let constant = SectionJet {
            chart: "A".into(),
            base_y: vec![0.0],
            jet: JetMap::from_flat(1, 1, 2, &[0.5, 0.0, 0.0]).unwrap(),
        };
        let out = transport_section_jet(&mobius, &lp(0.0), &constant, 2).unwrap();
        assert_eq!(out.jet.to_flat(), [-0.5, 0.0, 0.0]);

        let annulus = ring("y1/2", "2*y1", "f1", Some("f1"));
        let linear = SectionJet {
            chart: "A".into(),
            base_y: vec![0.0],
            jet: JetMap::from_flat(1, 1, 1, &[0.0, 1.0]).unwrap(),
        };
        let out = transport_section_jet(&annulus, &lp(0.0), &linear, 1).unwrap();
        assert_eq!(out.jet.to_flat(), [0.0, 2.0]);

        let k0 = SectionJet {
            chart: "A".into(),
            base_y: vec![0.0],
            jet: JetMap::from_flat(1, 1, 0, &[0.5]).unwrap(),
        };
        let out = transport_section_jet(&mobius, &lp(0.0), &k0, 0).unwrap();
        assert_eq!(out.jet.to_flat(), transport_point(&mobius, &lp(0.0), &[0.5]).unwrap());

        let wrong = SectionJet { chart: "B".into(), ..k0 };
        assert!(matches!(
            transport_section_jet(&mobius, &lp(0.0), &wrong, 0),
            Err(BundleError::Anchor { .. })
        ));
    }

    #[test]
    fn total_jet_examples() {
        let mobius = ring("-y1", "-y1", "-f1", Some("-f1"));
        let t = total_transport_jet(&mobius, &lp(0.0), 1, &[0.3]).unwrap();
        assert_eq!(t.jet.jet().to_flat(), [0.0, 0.0, -1.0, 0.0, 0.0, -1.0]);
        assert_eq!(t.target.f, [-0.3]);

        let trivial = ring("y1", "y1", "f1", Some("f1"));
        let t = total_transport_jet(&trivial, &lp(0.1), 3, &[0.3]).unwrap();
        assert_eq!(t.jet, jet::identity_jet(2, 3));
    }

    #[test]
    fn implicit_fibre_inverse_matches_explicit() {
        let explicit = ring("y1/2", "2*y1", "exp(y1)*f1 + y1", Some("(f1 - 2*y1)*exp(-2*y1)"));
        let implicit = ring("y1/2", "2*y1", "exp(y1)*f1 + y1", None);
        let p = ChainPath::new(vec![0.3], &["A", "D", "C"]);
        let a = total_transport_jet(&explicit, &p, 4, &[0.2]).unwrap();
        let b = total_transport_jet(&implicit, &p, 4, &[0.2]).unwrap();
        assert!(jet::jets_equal(a.jet.jet(), b.jet.jet(), 1e-12).unwrap());
        let s = SectionJet {
            chart: "A".into(),
            base_y: vec![0.3],
            jet: JetMap::from_flat(1, 1, 4, &[0.2, 0.5, -1.0, 0.25, 2.0]).unwrap(),
        };
        let sa = transport_section_jet(&explicit, &p, &s, 4).unwrap();
        let sb = transport_section_jet(&implicit, &p, &s, 4).unwrap();
        assert!(jet::jets_equal(&sa.jet, &sb.jet, 1e-12).unwrap());
    }

    #[test]
    fn total_jet_base_components() {
        let bundle = ring("y1/2", "2*y1", "exp(y1)*f1 + y1", Some("(f1 - 2*y1)*exp(-2*y1)"));
        let p = ChainPath::new(vec![0.3], &["A", "D", "C", "B"]);
        let total = total_transport_jet(&bundle, &p, 3, &[0.1]).unwrap();
        let base = transport_jet(bundle.base(), &p, 3).unwrap();
        let proj = total.jet.jet().select(0..1).unwrap();
        let lifted = substitute(base.jet.jet(), &[Series::variable(2, 3, 0, 0.0)]).unwrap();
        assert!(jet::jets_equal(&proj, &lifted, 1e-12).unwrap());
    }
}
