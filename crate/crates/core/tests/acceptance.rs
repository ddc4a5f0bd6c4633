//! Acceptance checks. Each prints one PASS/FAIL line; the process exits
//! nonzero when any check fails. Run with `cargo test --test acceptance`.
//! `UPDATE_GOLDEN=1` rewrites the golden reports under `tests/golden`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use holoscope::atlas::{build_atlas, Atlas, Chart, TransitionSpec};
use holoscope::bundle::{build_bundle, total_transport_jet, transport_point, transport_section_jet, FibreSpec, SectionJet};
use holoscope::cli::config::{InverseTag, MapEntry, Model};
use holoscope::gallery::{self, ring_loop, GalleryInstance, NAMES};
use holoscope::hierarchy::{classify_at, verify_tower, Target};
use holoscope::holonomy::{transport_jet, winkelnkemper_map};
use holoscope::jet::{compose, identity_jet, invert, jets_equal, substitute, truncate, DiffeoJet, JetMap, Series};
use holoscope::path::{concat, random_walk, reverse};
use holoscope::sampling::BoxDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(ctx: &str) -> impl Fn(E) -> String + '_ {
    move |e| format!("{ctx}: {e}")
}

/// Multiple of 1/8 in [-1, 1].
fn dyadic(r: &mut ChaCha8Rng) -> f64 {
    r.gen_range(-8i32..=8) as f64 / 8.0
}

/// `U·diag(s)·V` with `U`, `V` random orthogonal and `s` in [0.8, 1.25].
fn well_conditioned(r: &mut ChaCha8Rng, q: usize) -> Vec<Vec<f64>> {
    let mut orthogonal = || nalgebra::DMatrix::from_fn(q, q, |_, _| r.gen_range(-1.0..1.0)).qr().q();
    let (u, v) = (orthogonal(), orthogonal());
    let s = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_fn(q, |_, _| r.gen_range(0.8..1.25)));
    let a = u * s * v;
    (0..q).map(|i| (0..q).map(|j| a[(i, j)]).collect()).collect()
}

fn random_linear(r: &mut ChaCha8Rng, q: usize, dyadic_entries: bool) -> Vec<Vec<f64>> {
    if !dyadic_entries {
        return well_conditioned(r, q);
    }
    loop {
        let a: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                (0..q)
                    .map(|j| {
                        let x = dyadic(r) * 0.5;
                        if i == j {
                            1.0 + x
                        } else {
                            x
                        }
                    })
                    .collect()
            })
            .collect();
        let m = nalgebra::DMatrix::from_fn(q, q, |i, j| a[i][j]);
        if m.determinant().abs() > 0.3 {
            return a;
        }
    }
}

/// Random jet with the given linear part; higher coefficients from `coef`.
fn random_diffeo(r: &mut ChaCha8Rng, q: usize, k: usize, linear: &[Vec<f64>], coef: &mut dyn FnMut(&mut ChaCha8Rng) -> f64) -> DiffeoJet {
    let comps = (0..q)
        .map(|i| {
            let mut s = Series::zero(q, k);
            let table = s.table();
            for idx in 0..table.len() {
                let d = table.degree(idx);
                let v = match d {
                    0 => 0.0,
                    1 => {
                        let j = table.exponent(idx).iter().position(|&e| e == 1).unwrap();
                        linear[i][j]
                    }
                    _ => coef(r),
                };
                s.coeffs_mut()[idx] = v;
            }
            s
        })
        .collect();
    DiffeoJet::try_from(JetMap::new(comps).unwrap()).unwrap()
}

fn exact_eq(a: &JetMap, b: &JetMap) -> bool {
    a.to_flat() == b.to_flat()
}

// ---------------------------------------------------------------------------
// Jet group laws

fn jet_group_laws() -> Outcome {
    let mut r = rng(1);
    let tol = 1e-10;
    let mut exact_checks = 0;
    for trial in 0..500 {
        let q = r.gen_range(1..=3);
        let k = r.gen_range(1..=6);
        let mut float = |r: &mut ChaCha8Rng| r.gen_range(-0.5..0.5);
        let jets: Vec<DiffeoJet> = (0..3)
            .map(|_| {
                let a = random_linear(&mut r, q, false);
                random_diffeo(&mut r, q, k, &a, &mut float)
            })
            .collect();
        let (f, g, h) = (jets[0].jet(), jets[1].jet(), jets[2].jet());
        let ctx = format!("trial {trial} (q={q}, k={k})");
        let c = |a: &JetMap, b: &JetMap| compose(a, b).map_err(err(&ctx));
        let left = c(&c(f, g)?, h)?;
        let right = c(f, &c(g, h)?)?;
        ensure(jets_equal(&left, &right, tol).unwrap(), || format!("{ctx}: associativity"))?;
        let id = identity_jet(q, k);
        ensure(
            jets_equal(&c(id.jet(), f)?, f, tol).unwrap() && jets_equal(&c(f, id.jet())?, f, tol).unwrap(),
            || format!("{ctx}: unit"),
        )?;
        let inv = invert(&jets[0]).map_err(err(&ctx))?;
        ensure(
            jets_equal(&c(f, inv.jet())?, id.jet(), tol).unwrap() && jets_equal(&c(inv.jet(), f)?, id.jet(), tol).unwrap(),
            || {
                let e1 = c(f, inv.jet()).unwrap().sub_jet(id.jet()).unwrap().max_abs_coefficient();
                let e2 = c(inv.jet(), f).unwrap().sub_jet(id.jet()).unwrap().max_abs_coefficient();
                format!("{ctx}: inverse ({e1:e}, {e2:e}, max coef {:e})", inv.jet().max_abs_coefficient())
            },
        )?;

        // Truncation is a homomorphism, exactly for polynomial inputs.
        let a = random_linear(&mut r, q, true);
        let b = random_linear(&mut r, q, true);
        let fd = random_diffeo(&mut r, q, k, &a, &mut dyadic);
        let gd = random_diffeo(&mut r, q, k, &b, &mut dyadic);
        let full = c(fd.jet(), gd.jet())?;
        for l in 0..=k {
            let lhs = truncate(&full, l).unwrap();
            let rhs = c(&truncate(fd.jet(), l).unwrap(), &truncate(gd.jet(), l).unwrap())?;
            ensure(exact_eq(&lhs, &rhs), || format!("{ctx}: truncation to order {l} is not exact"))?;
            exact_checks += 1;
        }
    }
    Ok(format!("500 jets, laws to 1e-10, {exact_checks} exact truncation checks"))
}

// ---------------------------------------------------------------------------
// Series reversion against a brute-force oracle

type Poly = BTreeMap<Vec<u32>, f64>;

fn degree(e: &[u32]) -> u32 {
    e.iter().sum()
}

fn poly_mul(a: &Poly, b: &Poly, max: u32) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            if degree(&e) <= max {
                *out.entry(e).or_insert(0.0) += ca * cb;
            }
        }
    }
    out
}

fn poly_add(a: &mut Poly, b: &Poly, scale: f64) {
    for (e, c) in b {
        *a.entry(e.clone()).or_insert(0.0) += scale * c;
    }
}

/// `f ∘ g` for polynomial maps, truncated at degree `max`.
fn poly_compose(f: &[Poly], g: &[Poly], q: usize, max: u32) -> Vec<Poly> {
    let one: Poly = [(vec![0; q], 1.0)].into_iter().collect();
    f.iter()
        .map(|fi| {
            let mut out = Poly::new();
            for (e, c) in fi {
                let mut term = one.clone();
                for (j, &p) in e.iter().enumerate() {
                    for _ in 0..p {
                        term = poly_mul(&term, &g[j], max);
                    }
                }
                poly_add(&mut out, &term, *c);
            }
            out
        })
        .collect()
}

fn homogeneous(p: &Poly, d: u32) -> Poly {
    p.iter().filter(|(e, _)| degree(e) == d).map(|(e, c)| (e.clone(), *c)).collect()
}

/// Degree-by-degree reversion: `g_1 = A⁻¹ y`, `g_d = -A⁻¹ [f(g_{<d})]_d`.
fn oracle_reversion(f: &[Poly], a_inv: &[Vec<f64>], q: usize, k: u32) -> Vec<Poly> {
    let apply = |v: &[Poly]| -> Vec<Poly> {
        (0..q)
            .map(|i| {
                let mut out = Poly::new();
                for j in 0..q {
                    poly_add(&mut out, &v[j], a_inv[i][j]);
                }
                out
            })
            .collect()
    };
    let vars: Vec<Poly> = (0..q)
        .map(|j| {
            let mut e = vec![0; q];
            e[j] = 1;
            [(e, 1.0)].into_iter().collect()
        })
        .collect();
    let mut g = apply(&vars);
    for d in 2..=k {
        let fg = poly_compose(f, &g, q, d);
        let top: Vec<Poly> = fg.iter().map(|p| homogeneous(p, d)).collect();
        let gd = apply(&top);
        for (gi, di) in g.iter_mut().zip(&gd) {
            poly_add(gi, di, -1.0);
        }
    }
    g
}

fn jet_to_polys(j: &JetMap) -> Vec<Poly> {
    j.components()
        .iter()
        .map(|s| {
            let t = s.table();
            (0..t.len())
                .filter(|&i| s.coeffs()[i] != 0.0)
                .map(|i| (t.exponent(i).to_vec(), s.coeffs()[i]))
                .collect()
        })
        .collect()
}

fn polys_to_jet(p: &[Poly], q: usize, k: usize) -> JetMap {
    let comps = p
        .iter()
        .map(|pi| {
            let mut s = Series::zero(q, k);
            let t = s.table();
            for (e, c) in pi {
                if let Some(i) = t.index_of(e) {
                    s.coeffs_mut()[i] += c;
                }
            }
            s
        })
        .collect();
    JetMap::new(comps).unwrap()
}

/// Linear part with an exactly representable inverse: a signed product of
/// integer shears scaled by a power of two. Returns `(A, A⁻¹)`.
fn exact_linear(r: &mut ChaCha8Rng, q: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let scale = [0.5, 1.0, 2.0][r.gen_range(0..3)];
    if q == 1 {
        let a = scale * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        return (vec![vec![a]], vec![vec![1.0 / a]]);
    }
    let s = r.gen_range(-1i32..=1) as f64;
    let t = r.gen_range(-1i32..=1) as f64;
    let (d1, d2) = (if r.gen_bool(0.5) { 1.0 } else { -1.0 }, if r.gen_bool(0.5) { 1.0 } else { -1.0 });
    // [[1, s], [0, 1]] · [[1, 0], [t, 1]] · diag(d1, d2)
    let u = [[(1.0 + s * t) * d1, s * d2], [t * d1, d2]];
    let a: Vec<Vec<f64>> = u.iter().map(|row| row.iter().map(|x| x * scale).collect()).collect();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let a_inv = vec![vec![a[1][1] / det, -a[0][1] / det], vec![-a[1][0] / det, a[0][0] / det]];
    (a, a_inv)
}

fn reversion_oracle() -> Outcome {
    let mut r = rng(2);
    for trial in 0..100 {
        let q = r.gen_range(1..=2);
        let k = r.gen_range(1..=6);
        let (a, a_inv) = exact_linear(&mut r, q);
        let mut quarter = |r: &mut ChaCha8Rng| r.gen_range(-4i32..=4) as f64 / 4.0;
        let f = random_diffeo(&mut r, q, k, &a, &mut quarter);
        let got = invert(&f).map_err(|e| format!("trial {trial}: {e}"))?;
        let want = polys_to_jet(&oracle_reversion(&jet_to_polys(f.jet()), &a_inv, q, k as u32), q, k);
        ensure(exact_eq(got.jet(), &want), || {
            format!("trial {trial} (q={q}, k={k}): {:?} vs oracle {:?}", got.jet(), want)
        })?;
    }
    Ok("100 polynomial jets, coefficient-exact".into())
}

// ---------------------------------------------------------------------------
// Gallery ground truth

fn jet1(coeffs: &[f64]) -> JetMap {
    JetMap::new(vec![Series::from_coeffs(1, coeffs.len() - 1, coeffs.to_vec()).unwrap()]).unwrap()
}

fn gallery_truth() -> Outcome {
    let mob = gallery::mobius().map_err(err("mobius"))?;
    for k in 1..=6 {
        let mut minus = vec![0.0; k + 1];
        minus[1] = -1.0;
        let l = transport_jet(&mob.model.atlas, mob.path("loop"), k).map_err(err("mobius loop"))?;
        ensure(jets_equal(l.jet.jet(), &jet1(&minus), 1e-12).unwrap(), || {
            format!("mobius loop at order {k}: {:?}", l.jet)
        })?;
        let l2 = transport_jet(&mob.model.atlas, mob.path("loop2"), k).map_err(err("mobius loop2"))?;
        ensure(jets_equal(l2.jet.jet(), identity_jet(1, k).jet(), 1e-12).unwrap(), || {
            format!("mobius loop² at order {k}: {:?}", l2.jet)
        })?;
    }
    let ann = gallery::contracting_annulus(0.5).map_err(err("annulus"))?;
    for n in 1..=8 {
        let h = transport_jet(&ann.model.atlas, &ring_loop(n, vec![0.0]), 4).map_err(err("annulus"))?;
        let lin = h.jet.jet().linear_part()[(0, 0)];
        ensure(holoscope::jet::close(lin, 0.5f64.powi(n), 1e-12), || {
            format!("annulus loop^{n}: {lin}")
        })?;
    }
    let mut r = rng(3);
    for trial in 0..20 {
        let mut c = vec![0.0; 7];
        c[1] = r.gen_range(0.5..1.5) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        for ci in c.iter_mut().take(6).skip(2) {
            *ci = r.gen_range(-0.5..0.5);
        }
        let phi: Vec<String> = (1..=5).map(|i| format!("({})*y1^{i}", c[i])).collect();
        let phi = phi.join(" + ");
        let s = gallery::suspension("random", &phi, 0.2, 0.04).map_err(|e| format!("suspension {phi}: {e}"))?;
        let h = transport_jet(&s.model.atlas, s.path("loop"), 6).map_err(|e| format!("suspension {phi}: {e}"))?;
        ensure(jets_equal(h.jet.jet(), &jet1(&c), 1e-10).unwrap(), || {
            format!("trial {trial}: {phi}: {:?}", h.jet)
        })?;
    }
    Ok("mobius k<=6, annulus n<=8, 20 random suspensions".into())
}

// ---------------------------------------------------------------------------
// Winkelnkemper consistency

fn instances() -> Vec<GalleryInstance> {
    NAMES.iter().map(|n| gallery::builtin(n).unwrap()).collect()
}

fn base_instances() -> Vec<GalleryInstance> {
    instances().into_iter().filter(|g| g.model.bundle.is_none()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn winkelnkemper_consistency() -> Outcome {
    let offsets = [0.1, 0.05, 0.025];
    let floor = 1e-13;
    let mut pairs = 0;
    let mut floored = 0;
    let mut worst = f64::INFINITY;
    for g in base_instances() {
        let atlas = &g.model.atlas;
        let q = atlas.codim();
        let dir: Vec<f64> = (0..q).map(|i| if i == 0 { 1.0 } else { -0.5 }).collect();
        for np in &g.model.paths {
            for k in 1..=3 {
                let ctx = format!("{}/{} k={k}", g.name, np.name);
                let h = transport_jet(atlas, &np.path, k).map_err(err(&ctx))?;
                let mut errors = Vec::new();
                for d in offsets {
                    let v: Vec<f64> = dir.iter().map(|x| x * d).collect();
                    let y0: Vec<f64> = np.path.base_y.iter().zip(&v).map(|(a, b)| a + b).collect();
                    let exact = winkelnkemper_map(atlas, &np.path, &y0).map_err(err(&ctx))?;
                    let pred: Vec<f64> = holoscope::jet::evaluate(h.jet.jet(), &v)
                        .unwrap()
                        .iter()
                        .zip(&h.target.1)
                        .map(|(a, b)| a + b)
                        .collect();
                    errors.push(max_diff(&exact, &pred));
                }
                let need = 2f64.powf(k as f64 + 0.5);
                for w in errors.windows(2) {
                    pairs += 1;
                    if w[1] <= floor {
                        floored += 1;
                        continue;
                    }
                    let ratio = w[0] / w[1];
                    worst = worst.min(ratio / need);
                    ensure(ratio >= need, || format!("{ctx}: errors {errors:?}, ratio {ratio:.3} < {need:.3}"))?;
                }
            }
        }
    }
    Ok(format!(
        "{pairs} offset pairs ({floored} at round-off level), worst ratio/required {worst:.3}"
    ))
}

// ---------------------------------------------------------------------------
// Functoriality and inversion

fn functoriality() -> Outcome {
    let bases = base_instances();
    let mut r = rng(5);
    let tol = 1e-9;
    let mut done = 0;
    let mut attempts = 0;
    while done < 200 {
        attempts += 1;
        if attempts > 2000 {
            return Err(format!("only {done} composable pairs found"));
        }
        let g = &bases[r.gen_range(0..bases.len())];
        let atlas = &g.model.atlas;
        let start = &g.model.paths[r.gen_range(0..g.model.paths.len())].path;
        let y: Vec<f64> = start.base_y.iter().map(|v| v + r.gen_range(-0.02..0.02)).collect();
        let hops = r.gen_range(1..=6);
        let Some(p) = random_walk(atlas, &start.base_chart, &y, hops, &mut r) else {
            continue;
        };
        let Ok((chart, end)) = holoscope::path::endpoint(atlas, &p) else {
            continue;
        };
        let hops = r.gen_range(1..=6);
        let Some(q) = random_walk(atlas, &chart, &end, hops, &mut r) else {
            continue;
        };
        let k = r.gen_range(1..=6);
        let ctx = format!("pair {done} on {} (k={k}, {:?} then {:?})", g.name, p.chain, q.chain);
        let tp = transport_jet(atlas, &p, k).map_err(err(&ctx))?;
        let tq = transport_jet(atlas, &q, k).map_err(err(&ctx))?;
        let pq = concat(atlas, &q, &p).map_err(err(&ctx))?;
        let tpq = transport_jet(atlas, &pq, k).map_err(err(&ctx))?;
        let composed = compose(tq.jet.jet(), tp.jet.jet()).unwrap();
        ensure(jets_equal(tpq.jet.jet(), &composed, tol).unwrap(), || format!("{ctx}: concat"))?;
        let rev = reverse(atlas, &p).map_err(err(&ctx))?;
        let trev = transport_jet(atlas, &rev, k).map_err(err(&ctx))?;
        let inv = invert(&tp.jet).unwrap();
        ensure(jets_equal(trev.jet.jet(), inv.jet(), tol).unwrap(), || format!("{ctx}: reverse"))?;
        done += 1;
    }
    Ok("200 random pairs, tol 1e-9".into())
}

// ---------------------------------------------------------------------------
// Hierarchy

fn hierarchy() -> Outcome {
    let tol = 1e-9;
    let mut towers = 0;
    for g in instances() {
        let paths: Vec<_> = g.model.paths.iter().map(|p| p.path.clone()).collect();
        let base = verify_tower(Target::Base(&g.model.atlas), &paths, 6, tol).map_err(err(&g.name))?;
        ensure(base.passed, || format!("{}: base tower {:?}", g.name, base.witness))?;
        towers += 1;
        if let Some(bundle) = &g.model.bundle {
            let target = Target::Bundle {
                bundle,
                anchors: &g.model.anchors,
            };
            let t = verify_tower(target, &paths, 6, tol).map_err(err(&g.name))?;
            ensure(t.passed, || format!("{}: bundle tower {:?}", g.name, t.witness))?;
            towers += 1;
        }
    }
    for m in 2..=5u32 {
        let g = gallery::tangency(m).map_err(err("tangency"))?;
        let paths = vec![g.path("id").clone(), g.path("loop").clone()];
        for k in 0..=6 {
            let classes = classify_at(Target::Base(&g.model.atlas), &paths, k, tol, 1).map_err(err("tangency"))?;
            let want = if k < m as usize { 1 } else { 2 };
            ensure(classes.len() == want, || {
                format!("tangency-{m} at order {k}: {} classes, expected {want}", classes.len())
            })?;
        }
    }
    Ok(format!("{towers} towers to K=6, tangency m=2..5 splits at order m"))
}

// ---------------------------------------------------------------------------
// Bundle transport

/// Source, target, forward map text and explicit reverse text of a ring edge.
type Edge = (&'static str, &'static str, Vec<String>, Option<Vec<String>>);

struct RingBase {
    atlas: Atlas,
    q: usize,
    edges: Vec<Edge>,
}

fn ring_base(r: &mut ChaCha8Rng, variant: usize) -> RingBase {
    let q = if variant == 2 { 2 } else { 1 };
    let vars = holoscope::atlas::transverse_variables(q);
    let (gluing, inverse, radius, inverse_radius): (Vec<String>, Option<Vec<String>>, f64, f64) = match variant {
        0 => {
            let c1 = r.gen_range(0.6..1.4);
            let c2 = r.gen_range(-0.5..0.5);
            (vec![format!("{c1}*y1 + ({c2})*y1^2")], None, 0.3, 0.1)
        }
        1 => {
            let a = r.gen_range(0.5..2.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            (vec![format!("({a})*y1")], Some(vec![format!("({})*y1", 1.0 / a)]), 1.0, 1.0)
        }
        _ => {
            let c = r.gen_range(-1.0..1.0);
            (
                vec![format!("y1 + ({c})*y2^2"), "y2".into()],
                Some(vec![format!("y1 - ({c})*y2^2"), "y2".into()]),
                0.5,
                0.5,
            )
        }
    };
    let mut edges = Vec::new();
    for (s, t) in [("A", "B"), ("B", "C"), ("C", "D")] {
        edges.push((s, t, vars.clone(), Some(vars.clone())));
    }
    edges.push(("D", "A", gluing, inverse));
    let mut specs = Vec::new();
    for (s, t, fwd, back) in &edges {
        let (r1, r2) = if *s == "D" { (radius, inverse_radius) } else { (1.0, 1.0) };
        specs.push(TransitionSpec::explicit(s, t, fwd.clone(), BoxDomain::cube(q, r1)));
        specs.push(match back {
            Some(b) => TransitionSpec::explicit(t, s, b.clone(), BoxDomain::cube(q, r2)),
            None => TransitionSpec::inverse(t, s, BoxDomain::cube(q, r2)),
        });
    }
    let charts = ["A", "B", "C", "D"].iter().map(|c| Chart::new(*c, 1, q)).collect();
    RingBase {
        atlas: build_atlas(charts, specs).expect("ring base builds"),
        q,
        edges,
    }
}

/// Signed product of integer shears and its inverse.
fn unimodular(r: &mut ChaCha8Rng, m: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    if m == 1 {
        let a = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        return (vec![vec![a]], vec![vec![a]]);
    }
    let s = r.gen_range(-1i32..=1) as f64;
    let t = r.gen_range(-1i32..=1) as f64;
    let d = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    let a = vec![vec![(1.0 + s * t) * d, s], vec![t * d, 1.0]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = vec![vec![a[1][1] / det, -a[0][1] / det], vec![-a[1][0] / det, a[0][0] / det]];
    (a, inv)
}

/// Fibre map `f ↦ M f + d + c·exp(b·y)` and, when the base reverse is
/// explicit, its inverse written in the target chart's coordinates.
fn affine_exponential(r: &mut ChaCha8Rng, q: usize, m: usize, base_reverse: Option<&[String]>) -> (Vec<String>, Option<Vec<String>>) {
    let (mat, inv) = unimodular(r, m);
    let d: Vec<f64> = (0..m).map(|_| r.gen_range(-0.5..0.5)).collect();
    let c: Vec<f64> = (0..m).map(|_| r.gen_range(-0.5..0.5)).collect();
    let b: Vec<Vec<f64>> = (0..m).map(|_| (0..q).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let shift = |i: usize, ys: &[String]| {
        let arg: Vec<String> = (0..q).map(|l| format!("({})*({})", b[i][l], ys[l])).collect();
        format!("({}) + ({})*exp({})", d[i], c[i], arg.join(" + "))
    };
    let yvars = holoscope::atlas::transverse_variables(q);
    let forward = (0..m)
        .map(|i| {
            let lin: Vec<String> = (0..m).map(|j| format!("({})*f{}", mat[i][j], j + 1)).collect();
            format!("{} + {}", lin.join(" + "), shift(i, &yvars))
        })
        .collect();
    let backward = base_reverse.map(|rev| {
        (0..m)
            .map(|i| {
                let terms: Vec<String> = (0..m)
                    .map(|j| format!("({})*(f{} - ({}))", inv[i][j], j + 1, shift(j, rev)))
                    .collect();
                terms.join(" + ")
            })
            .collect()
    });
    (forward, backward)
}

fn bundle_transport() -> Outcome {
    let mlb = gallery::mobius_line_bundle().map_err(err("mobius line bundle"))?;
    let b = mlb.model.bundle.as_ref().unwrap();
    for v in [1.0, -0.75, 2.5, 0.0, 9.0, 1e-7] {
        let out = transport_point(b, mlb.path("loop"), &[v]).map_err(err("mobius line bundle"))?;
        ensure(out == vec![-v], || format!("mobius line bundle: {v} -> {out:?}"))?;
    }

    let mut r = rng(7);
    let tol = 1e-9;
    let mut done = 0;
    let mut attempts = 0;
    let mut base_exact = true;
    let mut base_worst: f64 = 0.0;
    while done < 100 {
        attempts += 1;
        if attempts > 1000 {
            return Err(format!("only {done} bundle instances found"));
        }
        let variant = done % 3;
        let base = ring_base(&mut r, variant);
        let (q, m) = (base.q, r.gen_range(1..=2));
        let mut fibres = Vec::new();
        for (s, t, _, back) in &base.edges {
            let (fwd, bwd) = affine_exponential(&mut r, q, m, back.as_deref());
            fibres.push(FibreSpec::explicit(s, t, fwd, BoxDomain::cube(m, 10.0)));
            fibres.push(match bwd {
                Some(text) if r.gen_bool(0.5) => FibreSpec::explicit(t, s, text, BoxDomain::cube(m, 10.0)),
                _ => FibreSpec::inverse(t, s, BoxDomain::cube(m, 10.0)),
            });
        }
        let bundle = build_bundle(base.atlas, m, fibres).map_err(|e| format!("instance {done}: {e}"))?;
        let atlas = bundle.base();
        let y0: Vec<f64> = (0..q).map(|_| r.gen_range(-0.05..0.05)).collect();
        let hops = r.gen_range(1..=8);
        let Some(p) = random_walk(atlas, "A", &y0, hops, &mut r) else {
            continue;
        };
        let k = r.gen_range(1..=4);
        let ctx = format!("instance {done} (variant {variant}, m={m}, k={k}, {:?})", p.chain);
        let comps = (0..m)
            .map(|_| {
                let mut s = Series::zero(q, k);
                for (i, c) in s.coeffs_mut().iter_mut().enumerate() {
                    *c = if i == 0 { r.gen_range(-1.0..1.0) } else { r.gen_range(-0.5..0.5) };
                }
                s
            })
            .collect();
        let s = JetMap::new(comps).unwrap();
        let f0 = s.constant_term();
        let section = SectionJet {
            chart: "A".into(),
            base_y: y0.clone(),
            jet: s.clone(),
        };
        let got = transport_section_jet(&bundle, &p, &section, k).map_err(err(&ctx))?;

        // Oracle: s' = T_f ∘ (H⁻¹, s ∘ H⁻¹ - f0) + f_target.
        let total = total_transport_jet(&bundle, &p, k, &f0).map_err(err(&ctx))?;
        let hol = transport_jet(atlas, &p, k).map_err(err(&ctx))?;
        let h_inv = invert(&hol.jet).map_err(err(&ctx))?;
        let pulled = compose(&s, h_inv.jet()).unwrap().with_constant(&vec![0.0; m]);
        let args: Vec<Series> = h_inv.jet().components().iter().chain(pulled.components()).cloned().collect();
        let fibre_part = total.jet.jet().select(q..q + m).unwrap();
        let want = substitute(&fibre_part, &args).unwrap().with_constant(&total.target.f);
        ensure(jets_equal(&got.jet, &want, tol).unwrap(), || {
            format!("{ctx}: section {:?} vs oracle {:?}", got.jet, want)
        })?;
        ensure(got.chart == hol.target.0 && max_diff(&got.base_y, &hol.target.1) == 0.0, || {
            format!("{ctx}: section anchor")
        })?;

        // Base components equal the base holonomy jet, independent of f.
        let n = q + m;
        let vars: Vec<Series> = (0..q).map(|i| Series::variable(n, k, i, 0.0)).collect();
        let lifted = substitute(hol.jet.jet(), &vars).unwrap();
        let base_part = total.jet.jet().select(0..q).unwrap();
        if !exact_eq(&base_part, &lifted) {
            base_exact = false;
            let diff = base_part.sub_jet(&lifted).unwrap().max_abs_coefficient();
            base_worst = base_worst.max(diff);
        }
        done += 1;
    }
    ensure(base_exact, || {
        format!("base components differ from the base holonomy jet by up to {base_worst:e}")
    })?;
    Ok("mobius b -> -b exact, 100 random sections to 1e-9, base components exact".into())
}

// ---------------------------------------------------------------------------
// Frame bundle correspondence

fn frame_correspondence() -> Outcome {
    let tol = 1e-9;
    for name in ["frame-contracting-annulus", "frame-tangency-3"] {
        let g = gallery::builtin(name).unwrap();
        let bundle = g.model.bundle.as_ref().unwrap();
        let paths: Vec<_> = g.model.paths.iter().map(|p| p.path.clone()).collect();
        for k in 0..=2 {
            let target = Target::Bundle {
                bundle,
                anchors: &g.model.anchors,
            };
            let fine = classify_at(target, &paths, k, tol, 1).map_err(err(name))?;
            let base = classify_at(Target::Base(&g.model.atlas), &paths, k + 1, tol, 1).map_err(err(name))?;
            ensure(fine == base, || {
                format!("{name}: bundle order {k} {fine:?} vs base order {} {base:?}", k + 1)
            })?;
        }
    }
    Ok("contracting-annulus and tangency-3, k = 0..2".into())
}

// ---------------------------------------------------------------------------
// Cocycle mutation sensitivity

fn monomials(q: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; q]];
    for i in 0..q {
        let mut e = vec![0; q];
        e[i] = 1;
        out.push(e);
    }
    for i in 0..q {
        for j in i..q {
            let mut e = vec![0; q];
            e[i] += 1;
            e[j] += 1;
            out.push(e);
        }
    }
    out
}

fn monomial_text(e: &[u32]) -> String {
    let mut s = String::from("0.001");
    for (i, &p) in e.iter().enumerate() {
        if p > 0 {
            s.push_str(&format!("*y{}^{p}", i + 1));
        }
    }
    s
}

fn cocycle_mutations() -> Outcome {
    let samples = 64;
    let mut mutants = 0;
    for g in [gallery::product(2), gallery::shear_triangle()] {
        let g = g.map_err(err("clique"))?;
        let clean = g.model.atlas.validate_cocycle(samples);
        ensure(clean.violations.is_empty(), || {
            format!("{}: unperturbed atlas reports {:?}", g.name, clean.violations.first())
        })?;
        let q = g.document.codim;
        for (ti, t) in g.document.transitions.iter().enumerate() {
            let MapEntry::Expressions(texts) = &t.y_map else { continue };
            let ri = g
                .document
                .transitions
                .iter()
                .position(|u| u.src == t.dst && u.dst == t.src)
                .ok_or_else(|| format!("{}: no reverse for {}→{}", g.name, t.src, t.dst))?;
            for c in 0..q {
                for e in monomials(q) {
                    let mut doc = g.document.clone();
                    let mut mutated = texts.clone();
                    mutated[c] = format!("{} + {}", mutated[c], monomial_text(&e));
                    doc.transitions[ti].y_map = MapEntry::Expressions(mutated);
                    doc.transitions[ri].y_map = MapEntry::Implicit(InverseTag::Inverse);
                    let ctx = format!("{}: {}→{} component {c} + 0.001·y^{e:?}", g.name, t.src, t.dst);
                    let model = Model::from_document(&doc).map_err(err(&ctx))?;
                    let report = model.atlas.validate_cocycle(samples);
                    ensure(!report.violations.is_empty(), || format!("{ctx}: no violation"))?;
                    mutants += 1;
                }
            }
        }
    }
    Ok(format!(
        "{mutants} single-coefficient mutants all detected, unperturbed atlases clean"
    ))
}

// ---------------------------------------------------------------------------
// CLI determinism

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn cli(args: &[&str]) -> holoscope::cli::Outcome {
    holoscope::cli::execute(std::iter::once("holoscope").chain(args.iter().copied()))
}

fn cli_determinism() -> Outcome {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let dir = golden_dir();
    if update {
        std::fs::create_dir_all(&dir).map_err(err("golden dir"))?;
    }
    let scratch = tempfile::tempdir().map_err(err("tempdir"))?;
    let mut runs = 0;
    for name in NAMES {
        let export = cli(&["gallery", "export", name]);
        ensure(export.code == 0, || format!("{name}: export failed: {}", export.stderr))?;
        let config = scratch.path().join(format!("{name}.json"));
        std::fs::write(&config, &export.stdout).map_err(err(name))?;
        let config = config.to_str().unwrap();
        let mut outputs = Vec::new();
        for jobs in ["1", "8"] {
            for _ in 0..2 {
                outputs.push(cli(&["run", config, "--jobs", jobs]));
                outputs.push(cli(&["gallery", "run", name, "--jobs", jobs]));
            }
        }
        let first = outputs[0].clone();
        ensure(first.code == 0, || format!("{name}: exit {} {}", first.code, first.stderr))?;
        for o in &outputs {
            ensure(*o == first, || format!("{name}: outputs differ between runs"))?;
            runs += 1;
        }
        let golden = dir.join(format!("{name}.json"));
        if update {
            std::fs::write(&golden, &first.stdout).map_err(err(name))?;
        }
        let want = std::fs::read_to_string(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
        ensure(want == first.stdout, || format!("{name}: report differs from {}", golden.display()))?;
    }
    Ok(format!("{} instances, {runs} runs byte-identical to golden", NAMES.len()))
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 10] = [
        ("jet group laws", jet_group_laws),
        ("series reversion oracle", reversion_oracle),
        ("gallery ground truth", gallery_truth),
        ("winkelnkemper consistency", winkelnkemper_consistency),
        ("functoriality and inversion", functoriality),
        ("hierarchy tower", hierarchy),
        ("bundle transport", bundle_transport),
        ("frame bundle correspondence", frame_correspondence),
        ("cocycle mutation sensitivity", cocycle_mutations),
        ("cli determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
