//! Truncated multivariate jets.
//!
//! A [`Series`] is a scalar polynomial in `dim` variables truncated above
//! total degree `order`; a [`JetMap`] is a vector of such series sharing
//! dimension and order, i.e. the k-jet of a map `R^q -> R^m`. Coefficients
//! are stored densely in graded-lexicographic order of multi-indices, so the
//! coefficients of degree `<= l` always form a prefix of the table. That
//! prefix property makes truncation a slice and lets one multiplication
//! table serve every lower order.
//!
//! Jets of origin-fixing maps with invertible linear part ([`DiffeoJet`])
//! form a group under truncated composition; [`compose`], [`invert`] and
//! [`identity_jet`] implement it.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use thiserror::Error;

/// Threshold on `|det|` of the linear part below which a jet is singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Default combined absolute/relative tolerance for [`jets_equal`].
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Constant terms at most this large are treated as exact zeros when a jet is
/// used as the inner map of a composition.
pub const ANCHOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("requested order {requested} exceeds available order {available}")]
    OrderTooHigh { requested: usize, available: usize },
    #[error("inner jet has nonzero constant term {value}")]
    NonzeroConstant { value: f64 },
    #[error("linear part is singular (|det| = {det:e})")]
    Singular { det: f64 },
    #[error("division by a series with zero constant term")]
    ZeroDivision,
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("coefficient table has length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("jet must have at least one component")]
    Empty,
}

/// Number of monomials in `dim` variables of total degree `<= order`.
pub fn monomial_count(dim: usize, order: usize) -> usize {
    // C(dim + order, order), computed incrementally to stay exact.
    let mut c: usize = 1;
    for i in 1..=order {
        c = c * (dim + i) / i;
    }
    c
}

/// Exponent vectors in graded-lex order plus the index arithmetic needed by
/// series multiplication and substitution.
#[derive(Debug)]
pub struct MonomialTable {
    dim: usize,
    order: usize,
    exponents: Vec<Vec<u32>>,
    degrees: Vec<usize>,
    /// `products[a][b]` is the index of `x^a * x^b`, for every `b` whose
    /// degree keeps the product within `order`.
    products: Vec<Vec<usize>>,
    /// For every index but 0: `(variable, index of exponent minus e_variable)`.
    predecessors: Vec<(usize, usize)>,
}

impl MonomialTable {
    fn build(dim: usize, order: usize) -> Self {
        let mut exponents = Vec::with_capacity(monomial_count(dim, order));
        let mut degrees = Vec::new();
        for d in 0..=order {
            let mut current = vec![0u32; dim];
            push_compositions(d as u32, 0, &mut current, &mut exponents);
            degrees.resize(exponents.len(), d);
        }
        let lookup: HashMap<&[u32], usize> = exponents.iter().enumerate().map(|(i, e)| (e.as_slice(), i)).collect();
        let mut products = Vec::with_capacity(exponents.len());
        let mut scratch = vec![0u32; dim];
        for (a, ea) in exponents.iter().enumerate() {
            let room = monomial_count(dim, order - degrees[a]);
            let row = exponents[..room]
                .iter()
                .map(|eb| {
                    for v in 0..dim {
                        scratch[v] = ea[v] + eb[v];
                    }
                    lookup[scratch.as_slice()]
                })
                .collect();
            products.push(row);
        }
        let mut predecessors = vec![(0, 0)];
        for e in exponents.iter().skip(1) {
            let var = e.iter().position(|&x| x > 0).expect("nonzero exponent");
            scratch.copy_from_slice(e);
            scratch[var] -= 1;
            predecessors.push((var, lookup[scratch.as_slice()]));
        }
        Self {
            dim,
            order,
            exponents,
            degrees,
            products,
            predecessors,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, index: usize) -> &[u32] {
        &self.exponents[index]
    }

    pub fn degree(&self, index: usize) -> usize {
        self.degrees[index]
    }

    pub fn exponents(&self) -> impl Iterator<Item = &[u32]> {
        self.exponents.iter().map(Vec::as_slice)
    }

    /// Index of an exponent vector, if its degree fits the table.
    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        if exponent.len() != self.dim {
            return None;
        }
        let deg: u32 = exponent.iter().sum();
        if deg as usize > self.order {
            return None;
        }
        // Degree blocks are contiguous; search only the right block.
        let start = if deg == 0 { 0 } else { monomial_count(self.dim, deg as usize - 1) };
        let end = monomial_count(self.dim, deg as usize);
        (start..end).find(|&i| self.exponents[i] == exponent)
    }
}

fn push_compositions(remaining: u32, var: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let dim = current.len();
    if var + 1 == dim {
        current[var] = remaining;
        out.push(current.clone());
        return;
    }
    for first in (0..=remaining).rev() {
        current[var] = first;
        push_compositions(remaining - first, var + 1, current, out);
    }
    current[var] = 0;
}

/// Shared, lazily built monomial table for `(dim, order)`.
pub fn monomial_table(dim: usize, order: usize) -> Arc<MonomialTable> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<MonomialTable>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((dim, order))
        .or_insert_with(|| Arc::new(MonomialTable::build(dim, order)))
        .clone()
}

/// A scalar truncated power series in `dim` variables.
#[derive(Clone, PartialEq)]
pub struct Series {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Series(q={}, k={}, {:?})", self.dim, self.order, self.coeffs)
    }
}

impl Series {
    pub fn zero(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            coeffs: vec![0.0; monomial_count(dim, order)],
        }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Self {
        let mut s = Self::zero(dim, order);
        s.coeffs[0] = value;
        s
    }

    /// The coordinate function `y_var`, optionally shifted by `value`.
    pub fn variable(dim: usize, order: usize, var: usize, value: f64) -> Self {
        let mut s = Self::constant(dim, order, value);
        if order >= 1 {
            s.coeffs[1 + var] = 1.0;
        }
        s
    }

    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self, JetError> {
        let expected = monomial_count(dim, order);
        if coeffs.len() != expected {
            return Err(JetError::BadLength {
                expected,
                found: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(JetError::NonFinite);
        }
        Ok(Self { dim, order, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn table(&self) -> Arc<MonomialTable> {
        monomial_table(self.dim, self.order)
    }

    /// Coefficient of `y^exponent`, zero when the degree exceeds the order.
    pub fn coefficient(&self, exponent: &[u32]) -> f64 {
        self.table().index_of(exponent).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn truncate(&self, order: usize) -> Result<Self, JetError> {
        if order > self.order {
            return Err(JetError::OrderTooHigh {
                requested: order,
                available: self.order,
            });
        }
        Ok(Self {
            dim: self.dim,
            order,
            coeffs: self.coeffs[..monomial_count(self.dim, order)].to_vec(),
        })
    }

    /// Zero-padded copy at a higher order.
    pub fn extend(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(monomial_count(self.dim, order.max(self.order)), 0.0);
        coeffs.truncate(monomial_count(self.dim, order));
        Self {
            dim: self.dim,
            order,
            coeffs,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    /// Polynomial evaluation of the truncation at `point`.
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        let table = self.table();
        let mut powers = vec![1.0; table.len()];
        let mut total = self.coeffs[0];
        for i in 1..table.len() {
            let (var, prev) = table.predecessors[i];
            powers[i] = powers[prev] * point[var];
            total += self.coeffs[i] * powers[i];
        }
        total
    }

    fn zip(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim, other.dim, "series dimension mismatch");
        let order = self.order.min(other.order);
        let n = monomial_count(self.dim, order);
        Self {
            dim: self.dim,
            order,
            coeffs: (0..n).map(|i| op(self.coeffs[i], other.coeffs[i])).collect(),
        }
    }

    /// Truncated product. The result has the smaller of the two orders.
    pub fn mul_series(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "series dimension mismatch");
        let order = self.order.min(other.order);
        let table = monomial_table(self.dim, order);
        let mut out = vec![0.0; table.len()];
        for (a, &x) in self.coeffs[..table.len()].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &c) in table.products[a].iter().enumerate() {
                out[c] += x * other.coeffs[b];
            }
        }
        Self {
            dim: self.dim,
            order,
            coeffs: out,
        }
    }

    pub fn powi(&self, exponent: u32) -> Self {
        let mut result = Self::constant(self.dim, self.order, 1.0);
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_series(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_series(&base);
            }
        }
        result
    }

    /// Splits off the constant term: `self = c + h` with `h(0) = 0`.
    fn split(&self) -> (f64, Self) {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        (self.coeffs[0], h)
    }

    /// `sum_{n=0}^{order} weights(n) h^n` for `h` without constant term.
    fn power_sum(h: &Self, weight: impl Fn(usize) -> f64) -> Self {
        let mut term = Self::constant(h.dim, h.order, 1.0);
        let mut acc = Self::constant(h.dim, h.order, weight(0));
        for n in 1..=h.order {
            term = term.mul_series(h);
            let w = weight(n);
            if w != 0.0 {
                for (a, t) in acc.coeffs.iter_mut().zip(&term.coeffs) {
                    *a += w * t;
                }
            }
        }
        acc
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let (c, h) = self.split();
        if c == 0.0 {
            return Err(JetError::ZeroDivision);
        }
        let ratio = h.scale(-1.0 / c);
        let out = Self::power_sum(&ratio, |_| 1.0).scale(1.0 / c);
        out.finite()
    }

    pub fn div_series(&self, other: &Self) -> Result<Self, JetError> {
        Ok(self.mul_series(&other.recip()?))
    }

    pub fn exp(&self) -> Self {
        let (c, h) = self.split();
        Self::power_sum(&h, |n| 1.0 / factorial(n)).scale(c.exp())
    }

    fn sin_cos_parts(h: &Self) -> (Self, Self) {
        // sin h and cos h for h(0) = 0.
        let sin_h = Self::power_sum(h, |n| if n % 2 == 1 { sign((n - 1) / 2) / factorial(n) } else { 0.0 });
        let cos_h = Self::power_sum(h, |n| if n % 2 == 0 { sign(n / 2) / factorial(n) } else { 0.0 });
        (sin_h, cos_h)
    }

    pub fn sin(&self) -> Self {
        let (c, h) = self.split();
        let (s, co) = Self::sin_cos_parts(&h);
        &co.scale(c.sin()) + &s.scale(c.cos())
    }

    pub fn cos(&self) -> Self {
        let (c, h) = self.split();
        let (s, co) = Self::sin_cos_parts(&h);
        &co.scale(c.cos()) - &s.scale(c.sin())
    }

    pub fn finite(self) -> Result<Self, JetError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(JetError::NonFinite)
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        self.mul_series(rhs)
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

/// The k-jet of a map `R^q -> R^m`: `m` series in `q` variables.
#[derive(Clone, PartialEq)]
pub struct JetMap {
    source_dim: usize,
    order: usize,
    components: Vec<Series>,
}

impl fmt::Debug for JetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetMap")
            .field("q", &self.source_dim)
            .field("m", &self.target_dim())
            .field("k", &self.order)
            .field("coeffs", &self.to_flat())
            .finish()
    }
}

impl JetMap {
    pub fn new(components: Vec<Series>) -> Result<Self, JetError> {
        let first = components.first().ok_or(JetError::Empty)?;
        let (source_dim, order) = (first.dim, first.order);
        for c in &components {
            if c.dim != source_dim {
                return Err(JetError::DimensionMismatch {
                    expected: source_dim,
                    found: c.dim,
                });
            }
            if c.order != order {
                return Err(JetError::OrderMismatch {
                    left: order,
                    right: c.order,
                });
            }
            if !c.is_finite() {
                return Err(JetError::NonFinite);
            }
        }
        Ok(Self {
            source_dim,
            order,
            components,
        })
    }

    pub fn zero(source_dim: usize, target_dim: usize, order: usize) -> Self {
        Self {
            source_dim,
            order,
            components: vec![Series::zero(source_dim, order); target_dim],
        }
    }

    /// Rebuilds a jet from its flat serialization: multi-indices in
    /// graded-lex order, the `m` components of each index consecutive.
    pub fn from_flat(q: usize, m: usize, k: usize, flat: &[f64]) -> Result<Self, JetError> {
        if m == 0 {
            return Err(JetError::Empty);
        }
        let n = monomial_count(q, k);
        if flat.len() != n * m {
            return Err(JetError::BadLength {
                expected: n * m,
                found: flat.len(),
            });
        }
        let components = (0..m)
            .map(|c| Series::from_coeffs(q, k, (0..n).map(|i| flat[i * m + c]).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(components)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let n = monomial_count(self.source_dim, self.order);
        let m = self.target_dim();
        let mut flat = Vec::with_capacity(n * m);
        for i in 0..n {
            for c in &self.components {
                flat.push(c.coeffs[i]);
            }
        }
        flat
    }

    /// Linear jet `y -> matrix * y`.
    pub fn linear(matrix: &DMatrix<f64>, order: usize) -> Self {
        let (m, q) = matrix.shape();
        let components = (0..m)
            .map(|i| {
                let mut s = Series::zero(q, order);
                if order >= 1 {
                    for j in 0..q {
                        s.coeffs[1 + j] = matrix[(i, j)];
                    }
                }
                s
            })
            .collect();
        Self {
            source_dim: q,
            order,
            components,
        }
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self) -> &[Series] {
        &self.components
    }

    pub fn component(&self, index: usize) -> &Series {
        &self.components[index]
    }

    pub fn into_components(self) -> Vec<Series> {
        self.components
    }

    pub fn constant_term(&self) -> Vec<f64> {
        self.components.iter().map(Series::constant_term).collect()
    }

    /// `m x q` matrix of first-order coefficients.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let q = self.source_dim;
        DMatrix::from_fn(self.target_dim(), q, |i, j| {
            if self.order >= 1 {
                self.components[i].coeffs[1 + j]
            } else {
                0.0
            }
        })
    }

    /// Same jet with the constant term replaced by `value`.
    pub fn with_constant(&self, value: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, v) in out.components.iter_mut().zip(value) {
            c.coeffs[0] = *v;
        }
        out
    }

    /// Components `range` as a jet of the same source.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<Self, JetError> {
        Self::new(self.components[range].to_vec())
    }

    /// Stacks the components of `parts` (same source and order).
    pub fn stack(parts: &[&JetMap]) -> Result<Self, JetError> {
        Self::new(parts.iter().flat_map(|p| p.components.iter().cloned()).collect())
    }

    /// `matrix * self`, applied componentwise to the coefficient vectors.
    pub fn left_multiply(&self, matrix: &DMatrix<f64>) -> Result<Self, JetError> {
        if matrix.ncols() != self.target_dim() {
            return Err(JetError::DimensionMismatch {
                expected: self.target_dim(),
                found: matrix.ncols(),
            });
        }
        let n = monomial_count(self.source_dim, self.order);
        let components = (0..matrix.nrows())
            .map(|i| {
                let coeffs = (0..n)
                    .map(|idx| {
                        (0..self.target_dim())
                            .map(|j| matrix[(i, j)] * self.components[j].coeffs[idx])
                            .sum()
                    })
                    .collect();
                Series {
                    dim: self.source_dim,
                    order: self.order,
                    coeffs,
                }
            })
            .collect();
        Ok(Self {
            source_dim: self.source_dim,
            order: self.order,
            components,
        })
    }

    pub fn sub_jet(&self, other: &Self) -> Result<Self, JetError> {
        check_shape(self, other)?;
        Ok(Self {
            source_dim: self.source_dim,
            order: self.order,
            components: self.components.iter().zip(&other.components).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_jet(&self, other: &Self) -> Result<Self, JetError> {
        check_shape(self, other)?;
        Ok(Self {
            source_dim: self.source_dim,
            order: self.order,
            components: self.components.iter().zip(&other.components).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.coeffs.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

fn check_shape(f: &JetMap, g: &JetMap) -> Result<(), JetError> {
    if f.source_dim != g.source_dim {
        return Err(JetError::DimensionMismatch {
            expected: f.source_dim,
            found: g.source_dim,
        });
    }
    if f.target_dim() != g.target_dim() {
        return Err(JetError::DimensionMismatch {
            expected: f.target_dim(),
            found: g.target_dim(),
        });
    }
    if f.order != g.order {
        return Err(JetError::OrderMismatch {
            left: f.order,
            right: g.order,
        });
    }
    Ok(())
}

/// A jet of an origin-fixing local diffeomorphism of `R^q`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffeoJet(JetMap);

impl DiffeoJet {
    pub fn jet(&self) -> &JetMap {
        &self.0
    }

    pub fn into_jet(self) -> JetMap {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.source_dim
    }

    pub fn order(&self) -> usize {
        self.0.order
    }
}

impl TryFrom<JetMap> for DiffeoJet {
    type Error = JetError;

    fn try_from(jet: JetMap) -> Result<Self, JetError> {
        if jet.target_dim() != jet.source_dim {
            return Err(JetError::DimensionMismatch {
                expected: jet.source_dim,
                found: jet.target_dim(),
            });
        }
        if let Some(&c) = jet.constant_term().iter().find(|c| c.abs() > ANCHOR_TOLERANCE) {
            return Err(JetError::NonzeroConstant { value: c });
        }
        if jet.order == 0 {
            // A 0-jet carries no linear part; the group is trivial.
            return Ok(Self(jet.with_constant(&vec![0.0; jet.source_dim])));
        }
        let det = jet.linear_part().determinant();
        if det.is_nan() || det.abs() <= SINGULARITY_THRESHOLD {
            return Err(JetError::Singular { det });
        }
        let dim = jet.source_dim;
        Ok(Self(jet.with_constant(&vec![0.0; dim])))
    }
}

impl From<DiffeoJet> for JetMap {
    fn from(d: DiffeoJet) -> Self {
        d.0
    }
}

impl AsRef<JetMap> for DiffeoJet {
    fn as_ref(&self) -> &JetMap {
        &self.0
    }
}

/// Jet of the identity map of `R^q` at order `k`.
pub fn identity_jet(q: usize, k: usize) -> DiffeoJet {
    DiffeoJet(JetMap::linear(&DMatrix::identity(q, q), k))
}

/// Substitutes the series `args` for the variables of the polynomial `f`.
///
/// The arguments may have nonzero constant terms: `f` is a polynomial, so the
/// substitution is a finite sum and is exact up to the arguments' order.
pub fn substitute(f: &JetMap, args: &[Series]) -> Result<JetMap, JetError> {
    if args.len() != f.source_dim {
        return Err(JetError::DimensionMismatch {
            expected: f.source_dim,
            found: args.len(),
        });
    }
    let first = args.first().ok_or(JetError::Empty)?;
    let (dim, order) = (first.dim, first.order);
    for a in args {
        if a.dim != dim {
            return Err(JetError::DimensionMismatch {
                expected: dim,
                found: a.dim,
            });
        }
        if a.order != order {
            return Err(JetError::OrderMismatch {
                left: order,
                right: a.order,
            });
        }
    }
    let table = monomial_table(f.source_dim, f.order);
    let out_len = monomial_count(dim, order);
    let mut out = vec![vec![0.0; out_len]; f.target_dim()];
    // powers[i] = args^{exponent i}, built from a predecessor with one fewer factor.
    let mut powers: Vec<Series> = Vec::with_capacity(table.len());
    powers.push(Series::constant(dim, order, 1.0));
    for i in 0..table.len() {
        if i > 0 {
            let (var, prev) = table.predecessors[i];
            let p = powers[prev].mul_series(&args[var]);
            powers.push(p);
        }
        let p = &powers[i];
        for (c, comp) in f.components.iter().enumerate() {
            let coeff = comp.coeffs[i];
            if coeff != 0.0 {
                for (o, v) in out[c].iter_mut().zip(&p.coeffs) {
                    *o += coeff * v;
                }
            }
        }
    }
    let components = out.into_iter().map(|coeffs| Series { dim, order, coeffs }).collect();
    JetMap::new(components)
}

/// The k-jet of `f ∘ g` for jets anchored at the origin.
pub fn compose(f: &JetMap, g: &JetMap) -> Result<JetMap, JetError> {
    if g.target_dim() != f.source_dim {
        return Err(JetError::DimensionMismatch {
            expected: f.source_dim,
            found: g.target_dim(),
        });
    }
    if f.order != g.order {
        return Err(JetError::OrderMismatch {
            left: f.order,
            right: g.order,
        });
    }
    if let Some(&c) = g.constant_term().iter().find(|c| c.abs() > ANCHOR_TOLERANCE) {
        return Err(JetError::NonzeroConstant { value: c });
    }
    let inner: Vec<Series> = g.components.iter().map(|c| c.split().1).collect();
    substitute(f, &inner)
}

/// Composition of two diffeomorphism jets, staying in the group.
pub fn compose_diffeo(f: &DiffeoJet, g: &DiffeoJet) -> Result<DiffeoJet, JetError> {
    DiffeoJet::try_from(compose(&f.0, &g.0)?)
}

/// Inverse in the jet group: the unique `g` with `f ∘ g = id` up to order k.
pub fn invert(f: &DiffeoJet) -> Result<DiffeoJet, JetError> {
    let jet = &f.0;
    let (q, k) = (jet.source_dim, jet.order);
    if k == 0 {
        return Ok(identity_jet(q, 0));
    }
    let a = jet.linear_part();
    let det = a.determinant();
    if det.is_nan() || det.abs() <= SINGULARITY_THRESHOLD {
        return Err(JetError::Singular { det });
    }
    let a_inv = a.clone().try_inverse().ok_or(JetError::Singular { det })?;
    let nonlinear = jet.sub_jet(&JetMap::linear(&a, k))?;
    let id = identity_jet(q, k).0;
    // Each pass of g <- A^{-1}(id - N∘g) fixes one more degree of g.
    let mut g = JetMap::linear(&a_inv, k);
    for _ in 2..=k {
        let correction = compose(&nonlinear, &g)?;
        g = id.sub_jet(&correction)?.left_multiply(&a_inv)?;
    }
    if !g.components.iter().all(Series::is_finite) {
        return Err(JetError::NonFinite);
    }
    DiffeoJet::try_from(g)
}

pub fn truncate(f: &JetMap, order: usize) -> Result<JetMap, JetError> {
    let components = f.components.iter().map(|c| c.truncate(order)).collect::<Result<Vec<_>, _>>()?;
    JetMap::new(components)
}

pub fn truncate_diffeo(f: &DiffeoJet, order: usize) -> Result<DiffeoJet, JetError> {
    Ok(DiffeoJet(truncate(&f.0, order)?))
}

pub fn evaluate(f: &JetMap, point: &[f64]) -> Result<Vec<f64>, JetError> {
    if point.len() != f.source_dim {
        return Err(JetError::DimensionMismatch {
            expected: f.source_dim,
            found: point.len(),
        });
    }
    Ok(f.components.iter().map(|c| c.evaluate(point)).collect())
}

/// Combined absolute/relative closeness of two reals.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// Coefficientwise equality within `tol`, scaled by `max(1, |a|, |b|)`.
pub fn jets_equal(f: &JetMap, g: &JetMap, tol: f64) -> Result<bool, JetError> {
    check_shape(f, g)?;
    Ok(f.components
        .iter()
        .zip(&g.components)
        .all(|(a, b)| a.coeffs.iter().zip(&b.coeffs).all(|(x, y)| close(*x, *y, tol))))
}

/// The k-jet at 0 of `v -> f(v + source_shift) - target_shift`.
pub fn translate_conjugate(f: &JetMap, source_shift: &[f64], target_shift: &[f64], k: usize) -> Result<JetMap, JetError> {
    if source_shift.len() != f.source_dim {
        return Err(JetError::DimensionMismatch {
            expected: f.source_dim,
            found: source_shift.len(),
        });
    }
    if target_shift.len() != f.target_dim() {
        return Err(JetError::DimensionMismatch {
            expected: f.target_dim(),
            found: target_shift.len(),
        });
    }
    let q = f.source_dim;
    let args: Vec<Series> = (0..q).map(|i| Series::variable(q, k, i, source_shift[i])).collect();
    let shifted = substitute(f, &args)?;
    let constant: Vec<f64> = shifted.constant_term().iter().zip(target_shift).map(|(c, t)| c - t).collect();
    Ok(shifted.with_constant(&constant))
}
