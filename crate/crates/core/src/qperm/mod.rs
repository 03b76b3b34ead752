//! Quantum permutations of countable index sets.
//!
//! A quantum permutation is a matrix of projections indexed by a set whose
//! rows and columns form partitions of unity (a magic unitary). This module
//! keeps the finitary in-memory form: a finite support block of matrices
//! together with the convention `u_xy = δ_xy · 1` outside the block. The
//! back-and-forth construction of partial quantum permutations lives in
//! [`backforth`].

pub mod backforth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{projection_defect, CMatrix, Tolerance};

/// The underlying index set: either `{0, .., n-1}` or the naturals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSet {
    Finite { size: u64 },
    Naturals,
}

impl IndexSet {
    pub fn finite(size: u64) -> Self {
        IndexSet::Finite { size }
    }

    pub fn contains(&self, id: u64) -> bool {
        match self {
            IndexSet::Finite { size } => id < *size,
            IndexSet::Naturals => true,
        }
    }
}

/// A finitely supported permutation, stored as the map on its moved points.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Perm {
    map: BTreeMap<u64, u64>,
}

impl Perm {
    pub fn identity() -> Self {
        Perm::default()
    }

    /// Builds a permutation from a finitely supported map, checking
    /// bijectivity on the moved set. Fixed points are normalised away.
    pub fn from_map(map: BTreeMap<u64, u64>) -> Result<Self> {
        let keys: BTreeSet<u64> = map.keys().copied().collect();
        let values: BTreeSet<u64> = map.values().copied().collect();
        if keys != values || values.len() != map.len() {
            return Err(Error::Domain("map is not a bijection on its support".into()));
        }
        let map = map.into_iter().filter(|(k, v)| k != v).collect();
        Ok(Perm { map })
    }

    pub fn from_cycles(cycles: &[Vec<u64>]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for cycle in cycles {
            for (i, &a) in cycle.iter().enumerate() {
                let b = cycle[(i + 1) % cycle.len()];
                if map.insert(a, b).is_some() {
                    return Err(Error::Domain(format!("point {a} appears in two cycles")));
                }
            }
        }
        Perm::from_map(map)
    }

    pub fn transposition(a: u64, b: u64) -> Self {
        Perm::from_cycles(&[vec![a, b]]).expect("transposition is a bijection")
    }

    /// Parses cycle notation such as `"(0 1 2)(3 4)"`; whitespace or commas
    /// separate the points. The empty string and `"id"` denote the identity.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text == "id" {
            return Ok(Perm::identity());
        }
        let mut cycles = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let open = rest
                .find('(')
                .ok_or_else(|| Error::Parse(format!("expected '(' in permutation: {text}")))?;
            let close = rest[open..]
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unbalanced ')' in permutation: {text}")))?
                + open;
            let body = &rest[open + 1..close];
            let cycle: Vec<u64> = body
                .split(|ch: char| ch.is_whitespace() || ch == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<u64>()
                        .map_err(|_| Error::Parse(format!("bad point '{s}' in permutation")))
                })
                .collect::<Result<_>>()?;
            if !cycle.is_empty() {
                cycles.push(cycle);
            }
            rest = rest[close + 1..].trim_start();
        }
        Perm::from_cycles(&cycles)
    }

    pub fn apply(&self, x: u64) -> u64 {
        *self.map.get(&x).unwrap_or(&x)
    }

    pub fn inverse(&self) -> Self {
        Perm {
            map: self.map.iter().map(|(&k, &v)| (v, k)).collect(),
        }
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Perm) -> Self {
        let support: BTreeSet<u64> = self.map.keys().chain(other.map.keys()).copied().collect();
        let map = support
            .into_iter()
            .map(|x| (x, self.apply(other.apply(x))))
            .filter(|(k, v)| k != v)
            .collect();
        Perm { map }
    }

    pub fn moved_points(&self) -> BTreeSet<u64> {
        self.map.keys().copied().collect()
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn order(&self) -> u64 {
        let mut acc = self.clone();
        let mut n = 1;
        while !acc.is_identity() {
            acc = self.compose(&acc);
            n += 1;
        }
        n
    }

    /// Orbit of a point.
    pub fn orbit(&self, x: u64) -> Vec<u64> {
        let mut orbit = vec![x];
        let mut cur = self.apply(x);
        while cur != x {
            orbit.push(cur);
            cur = self.apply(cur);
        }
        orbit
    }

    /// All permutations of `{0, .., n-1}`, in a deterministic order.
    pub fn all_of_degree(n: u64) -> Vec<Perm> {
        let mut out = Vec::new();
        let mut items: Vec<u64> = (0..n).collect();
        permute_rec(&mut items, 0, &mut out);
        out
    }
}

fn permute_rec(items: &mut Vec<u64>, k: usize, out: &mut Vec<Perm>) {
    if k == items.len() {
        let map: BTreeMap<u64, u64> = items.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        out.push(Perm::from_map(map).expect("permutation by construction"));
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_rec(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Finite-dimensional finitary quantum permutation: a finite support block of
/// `dim x dim` projections, with `u_xy = δ_xy · 1` off the block.
///
/// Only nonzero entries are stored; [`QuantumPermutation::entry`] materialises
/// the tail convention.
#[derive(Debug, Clone)]
pub struct QuantumPermutation {
    index_set: IndexSet,
    dim: usize,
    support: BTreeSet<u64>,
    entries: BTreeMap<(u64, u64), CMatrix>,
}

/// Outcome of [`QuantumPermutation::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub worst_residual: f64,
    pub failing_constraint: Option<String>,
}

impl ValidationReport {
    fn passing(worst: f64) -> Self {
        ValidationReport {
            ok: true,
            worst_residual: worst,
            failing_constraint: None,
        }
    }
}

impl QuantumPermutation {
    /// The trivial quantum permutation (identity on every point, dimension 1).
    pub fn trivial(index_set: IndexSet) -> Self {
        QuantumPermutation {
            index_set,
            dim: 1,
            support: BTreeSet::new(),
            entries: BTreeMap::new(),
        }
    }

    /// Dimension-one quantum permutation attached to a finitely supported
    /// permutation: `u_xy = 1` iff `x = perm(y)`.
    pub fn from_permutation(index_set: IndexSet, perm: &Perm) -> Result<Self> {
        let support = perm.moved_points();
        if let Some(&max) = support.iter().max() {
            if !index_set.contains(max) {
                return Err(Error::Domain(format!(
                    "permutation moves point {max} outside the index set"
                )));
            }
        }
        let mut entries = BTreeMap::new();
        for &y in &support {
            entries.insert((perm.apply(y), y), CMatrix::identity(1));
        }
        Ok(QuantumPermutation {
            index_set,
            dim: 1,
            support,
            entries,
        })
    }

    /// Builds from explicit parts. The support must contain all entry indices
    /// and entries must be `dim x dim`; magic-unitary axioms are checked by
    /// [`Self::validate`], not here.
    pub fn from_parts(
        index_set: IndexSet,
        dim: usize,
        support: BTreeSet<u64>,
        entries: BTreeMap<(u64, u64), CMatrix>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        for (&(x, y), m) in &entries {
            if !support.contains(&x) || !support.contains(&y) {
                return Err(Error::Domain(format!(
                    "entry ({x},{y}) outside the declared support"
                )));
            }
            if m.rows() != dim || m.cols() != dim {
                return Err(Error::Shape(format!(
                    "entry ({x},{y}) has shape {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(Error::Domain(format!("entry ({x},{y}) has non-finite values")));
            }
        }
        if let Some(&max) = support.iter().max() {
            if !index_set.contains(max) {
                return Err(Error::Domain(format!("support point {max} outside index set")));
            }
        }
        let entries = entries.into_iter().filter(|(_, m)| m.fro_norm() > 0.0).collect();
        Ok(QuantumPermutation {
            index_set,
            dim,
            support,
            entries,
        })
    }

    pub fn index_set(&self) -> IndexSet {
        self.index_set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &BTreeSet<u64> {
        &self.support
    }

    pub fn stored_entries(&self) -> impl Iterator<Item = (&(u64, u64), &CMatrix)> {
        self.entries.iter()
    }

    /// Entry `u_xy`, materialising the identity tail: inside the support
    /// block missing entries are zero, outside it they are `δ_xy · 1`.
    pub fn entry(&self, x: u64, y: u64) -> CMatrix {
        if let Some(m) = self.entries.get(&(x, y)) {
            return m.clone();
        }
        if self.support.contains(&x) && self.support.contains(&y) {
            CMatrix::zeros(self.dim, self.dim)
        } else if x == y {
            CMatrix::identity(self.dim)
        } else {
            CMatrix::zeros(self.dim, self.dim)
        }
    }

    pub fn entry_ref(&self, x: u64, y: u64) -> Option<&CMatrix> {
        self.entries.get(&(x, y))
    }

    /// Checks the magic unitary axioms on the support block and reports the
    /// worst Frobenius defect.
    pub fn validate(&self, tol: &Tolerance) -> ValidationReport {
        let mut worst = 0.0f64;
        let mut fail: Option<(String, f64)> = None;
        let mut note = |name: &str, residual: f64, bound: f64| {
            if residual > worst {
                worst = residual;
            }
            if residual > bound && fail.is_none() {
                fail = Some((name.to_string(), residual));
            }
        };

        for (&(x, y), m) in &self.entries {
            let defect = projection_defect(m);
            note(&format!("entry_projection({x},{y})"), defect, tol.eps_proj);
        }

        let support: Vec<u64> = self.support.iter().copied().collect();
        let id = CMatrix::identity(self.dim);
        for &x in &support {
            let mut row_sum = CMatrix::zeros(self.dim, self.dim);
            let mut col_sum = CMatrix::zeros(self.dim, self.dim);
            for &z in &support {
                if let Some(m) = self.entries.get(&(x, z)) {
                    row_sum = row_sum.add(m);
                }
                if let Some(m) = self.entries.get(&(z, x)) {
                    col_sum = col_sum.add(m);
                }
            }
            note(&format!("row_sum({x})"), row_sum.sub(&id).fro_norm(), tol.eps_proj);
            note(&format!("col_sum({x})"), col_sum.sub(&id).fro_norm(), tol.eps_proj);
        }

        // Pairwise orthogonality follows from the sums, but is cheap insurance
        // for reports: check stored pairs sharing a row or column.
        for (&(x1, y1), m1) in &self.entries {
            for (&(x2, y2), m2) in &self.entries {
                if (x1, y1) >= (x2, y2) {
                    continue;
                }
                if x1 == x2 || y1 == y2 {
                    let r = m1.mul(m2).fro_norm();
                    note(&format!("orthogonality(({x1},{y1}),({x2},{y2}))"), r, tol.eps_proj);
                }
            }
        }

        match fail {
            Some((name, _)) => ValidationReport {
                ok: false,
                worst_residual: worst,
                failing_constraint: Some(name),
            },
            None => ValidationReport::passing(worst),
        }
    }

    fn check_same_index_set(&self, other: &Self) -> Result<()> {
        if self.index_set != other.index_set {
            return Err(Error::Domain(format!(
                "index set mismatch: {:?} vs {:?}",
                self.index_set, other.index_set
            )));
        }
        Ok(())
    }

    /// Tensor product: `(σ ⊤ τ)_xy = Σ_z σ_xz ⊗ τ_zy`, the sum running over
    /// the joint support (finite by the tail convention).
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.check_same_index_set(other)?;
        let support: BTreeSet<u64> = self.support.union(&other.support).copied().collect();
        let dim = self.dim * other.dim;
        let mut entries = BTreeMap::new();
        for &x in &support {
            for &y in &support {
                let mut acc = CMatrix::zeros(dim, dim);
                for &z in &support {
                    let a = self.entry(x, z);
                    if a.fro_norm() == 0.0 {
                        continue;
                    }
                    let b = other.entry(z, y);
                    if b.fro_norm() == 0.0 {
                        continue;
                    }
                    acc = acc.add(&a.kron(&b));
                }
                if acc.fro_norm() > 0.0 {
                    entries.insert((x, y), acc);
                }
            }
        }
        QuantumPermutation::from_parts(self.index_set, dim, support, entries)
    }

    /// Direct sum: entries are block diagonals `σ_xy ⊕ τ_xy`.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        self.check_same_index_set(other)?;
        let support: BTreeSet<u64> = self.support.union(&other.support).copied().collect();
        let dim = self.dim + other.dim;
        let mut entries = BTreeMap::new();
        for &x in &support {
            for &y in &support {
                let block = self.entry(x, y).direct_sum(&other.entry(x, y));
                if block.fro_norm() > 0.0 {
                    entries.insert((x, y), block);
                }
            }
        }
        QuantumPermutation::from_parts(self.index_set, dim, support, entries)
    }

    /// Contragredient: `u'_xy = conj(u_yx)` entrywise, on the conjugate space.
    pub fn contragredient(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&(x, y), m)| ((y, x), m.conj()))
            .collect();
        QuantumPermutation {
            index_set: self.index_set,
            dim: self.dim,
            support: self.support.clone(),
            entries,
        }
    }

    /// Index transpose `u'_xy = u_yx`, the generator-level antipode.
    pub fn antipode_transpose(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&(x, y), m)| ((y, x), m.clone()))
            .collect();
        QuantumPermutation {
            index_set: self.index_set,
            dim: self.dim,
            support: self.support.clone(),
            entries,
        }
    }

    /// The minimal set `F` with `u_xy = δ_xy · 1` off `F x F`.
    pub fn moved_points(&self, tol: &Tolerance) -> BTreeSet<u64> {
        let id = CMatrix::identity(self.dim);
        let mut moved = BTreeSet::new();
        for &x in &self.support {
            let diag_ok = self.entry(x, x).approx_eq(&id, tol.eps_equal);
            let off_ok = self.entries.iter().all(|(&(a, b), m)| {
                a == b || (a != x && b != x) || m.fro_norm() <= tol.eps_equal
            });
            if !(diag_ok && off_ok) {
                moved.insert(x);
            }
        }
        moved
    }

    /// Counit test: a dimension-one quantum permutation corresponds to the
    /// counit iff it is the trivial one.
    pub fn counit_check(&self, tol: &Tolerance) -> Result<bool> {
        if self.dim != 1 {
            return Err(Error::Domain(format!(
                "counit check needs dimension 1, got {}",
                self.dim
            )));
        }
        Ok(self.moved_points(tol).is_empty())
    }

    /// True iff every support entry is (numerically) `0` or the identity,
    /// i.e. the quantum permutation is a lifted classical permutation.
    pub fn is_classical(&self, tol: &Tolerance) -> bool {
        let id = CMatrix::identity(self.dim);
        self.entries
            .values()
            .all(|m| m.is_zero(tol.eps_equal) || m.approx_eq(&id, tol.eps_equal))
    }

    /// Entrywise comparison over the joint support and the tail.
    pub fn approx_eq(&self, other: &Self, eps: f64) -> bool {
        if self.index_set != other.index_set || self.dim != other.dim {
            return false;
        }
        let support: BTreeSet<u64> = self.support.union(&other.support).copied().collect();
        for &x in &support {
            for &y in &support {
                if !self.entry(x, y).approx_eq(&other.entry(x, y), eps) {
                    return false;
                }
            }
        }
        true
    }

    /// All generator matrices over the given support-pair list, used by the
    /// representation-theory engine.
    pub fn generator_list(&self, support: &BTreeSet<u64>) -> Vec<((u64, u64), CMatrix)> {
        let mut out = Vec::new();
        for &x in support {
            for &y in support {
                out.push(((x, y), self.entry(x, y)));
            }
        }
        out
    }
}

// JSON form: {"index_set":..,"dim":d,"support":[..],"entries":{"x,y":CMatrix}}
#[derive(Serialize, Deserialize)]
struct QuantumPermutationRepr {
    index_set: IndexSet,
    dim: usize,
    support: Vec<u64>,
    entries: BTreeMap<String, CMatrix>,
}

impl Serialize for QuantumPermutation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        QuantumPermutationRepr {
            index_set: self.index_set,
            dim: self.dim,
            support: self.support.iter().copied().collect(),
            entries: self
                .entries
                .iter()
                .map(|(&(x, y), m)| (format!("{x},{y}"), m.clone()))
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuantumPermutation {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = QuantumPermutationRepr::deserialize(deserializer)?;
        let mut entries = BTreeMap::new();
        for (key, m) in repr.entries {
            let (x, y) = key
                .split_once(',')
                .ok_or_else(|| serde::de::Error::custom(format!("bad entry key '{key}'")))?;
            let x: u64 = x
                .trim()
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("bad entry key '{key}'")))?;
            let y: u64 = y
                .trim()
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("bad entry key '{key}'")))?;
            entries.insert((x, y), m);
        }
        QuantumPermutation::from_parts(
            repr.index_set,
            repr.dim,
            repr.support.into_iter().collect(),
            entries,
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naturals() -> IndexSet {
        IndexSet::Naturals
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    /// Dimension-2 magic unitary on four points built from two projections:
    /// rows {0,1} use {p, 1-p}, rows {2,3} use {q, 1-q}.
    pub(crate) fn two_block_magic(points: [u64; 4], p: CMatrix, q: CMatrix) -> QuantumPermutation {
        let [a, b, c, d] = points;
        let dim = p.rows();
        let mut entries = BTreeMap::new();
        entries.insert((a, a), p.clone());
        entries.insert((a, b), p.complement());
        entries.insert((b, a), p.complement());
        entries.insert((b, b), p);
        entries.insert((c, c), q.clone());
        entries.insert((c, d), q.complement());
        entries.insert((d, c), q.complement());
        entries.insert((d, d), q);
        QuantumPermutation::from_parts(
            IndexSet::Naturals,
            dim,
            points.iter().copied().collect(),
            entries,
        )
        .unwrap()
    }

    #[test]
    fn perm_parse_and_compose() {
        let p = Perm::parse("(0 1 2)").unwrap();
        assert_eq!(p.apply(0), 1);
        assert_eq!(p.apply(2), 0);
        assert_eq!(p.order(), 3);
        let q = Perm::parse("(0 1)(2 3)").unwrap();
        assert_eq!(q.order(), 2);
        let r = p.compose(&p).compose(&p);
        assert!(r.is_identity());
        assert_eq!(Perm::all_of_degree(4).len(), 24);
    }

    #[test]
    fn from_permutation_classical_cases() {
        let t = tol();
        let id = QuantumPermutation::from_permutation(naturals(), &Perm::identity()).unwrap();
        assert!(id.support().is_empty());
        assert!(id.validate(&t).ok);
        assert!(id.counit_check(&t).unwrap());

        let swap = QuantumPermutation::from_permutation(naturals(), &Perm::transposition(0, 1)).unwrap();
        assert_eq!(swap.support().len(), 2);
        assert!(swap.entry(0, 1).approx_eq(&CMatrix::identity(1), 0.0));
        assert!(swap.entry(1, 0).approx_eq(&CMatrix::identity(1), 0.0));
        assert!(swap.entry(0, 0).is_zero(0.0));
        assert!(swap.validate(&t).ok);
        assert_eq!(swap.validate(&t).worst_residual, 0.0);
        assert!(!swap.counit_check(&t).unwrap());
        assert_eq!(swap.moved_points(&t), [0u64, 1].into_iter().collect());

        let cycle = Perm::parse("(0 1 2)").unwrap();
        let qp = QuantumPermutation::from_permutation(naturals(), &cycle).unwrap();
        for y in 0..3u64 {
            assert!(qp.entry(cycle.apply(y), y).approx_eq(&CMatrix::identity(1), 0.0));
        }
        assert!(!qp.counit_check(&t).unwrap());
    }

    #[test]
    fn validate_flags_broken_row() {
        let t = tol();
        let swap = QuantumPermutation::from_permutation(naturals(), &Perm::transposition(0, 1)).unwrap();
        let mut entries: BTreeMap<(u64, u64), CMatrix> =
            swap.stored_entries().map(|(&k, m)| (k, m.clone())).collect();
        entries.remove(&(0, 1));
        let broken =
            QuantumPermutation::from_parts(naturals(), 1, swap.support().clone(), entries).unwrap();
        let report = broken.validate(&t);
        assert!(!report.ok);
        assert!(report.failing_constraint.unwrap().contains("sum"));
    }

    #[test]
    fn tensor_of_classicals_is_composition_exactly() {
        let sigma = Perm::parse("(0 1 2)").unwrap();
        let tau = Perm::parse("(1 3)").unwrap();
        let a = QuantumPermutation::from_permutation(naturals(), &sigma).unwrap();
        let b = QuantumPermutation::from_permutation(naturals(), &tau).unwrap();
        let product = a.tensor(&b).unwrap();
        let composed =
            QuantumPermutation::from_permutation(naturals(), &sigma.compose(&tau)).unwrap();
        assert!(product.approx_eq(&composed, 0.0));
    }

    #[test]
    fn tensor_unit_law_and_dims() {
        let t = tol();
        let trivial = QuantumPermutation::trivial(naturals());
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        assert!(sigma.validate(&t).ok);
        let lifted = trivial.tensor(&sigma).unwrap();
        assert_eq!(lifted.dim(), sigma.dim());
        assert!(lifted.approx_eq(&sigma, 1e-15));

        let two = QuantumPermutation::from_permutation(naturals(), &Perm::transposition(0, 1))
            .unwrap()
            .direct_sum(&QuantumPermutation::trivial(naturals()))
            .unwrap();
        let three = two
            .direct_sum(&QuantumPermutation::trivial(naturals()))
            .unwrap();
        assert_eq!(two.dim(), 2);
        assert_eq!(three.dim(), 3);
        assert_eq!(two.tensor(&three).unwrap().dim(), 6);
    }

    #[test]
    fn tensor_validates_on_nonclassical_input() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        let square = sigma.tensor(&sigma).unwrap();
        assert_eq!(square.dim(), 4);
        let report = square.validate(&t);
        assert!(report.ok, "residual {}", report.worst_residual);
    }

    #[test]
    fn tensor_is_associative_up_to_reassociation() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        let tau = QuantumPermutation::from_permutation(naturals(), &Perm::parse("(0 2)").unwrap())
            .unwrap();
        let rho = QuantumPermutation::from_permutation(naturals(), &Perm::parse("(1 3)").unwrap())
            .unwrap();
        let left = sigma.tensor(&tau).unwrap().tensor(&rho).unwrap();
        let right = sigma.tensor(&tau.tensor(&rho).unwrap()).unwrap();
        // Hilbert-space reassociation is the identity on matrix entries here.
        assert!(left.approx_eq(&right, t.eps_equal));
    }

    #[test]
    fn direct_sum_dims_add() {
        let a = QuantumPermutation::from_permutation(naturals(), &Perm::transposition(0, 1)).unwrap();
        let b = QuantumPermutation::from_permutation(naturals(), &Perm::parse("(0 1 2)").unwrap())
            .unwrap();
        let s = a.direct_sum(&b).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.validate(&tol()).ok);
    }

    #[test]
    fn contragredient_and_antipode_on_classical() {
        let t = tol();
        let sigma = Perm::parse("(0 1 2)").unwrap();
        let qp = QuantumPermutation::from_permutation(naturals(), &sigma).unwrap();
        let inv = QuantumPermutation::from_permutation(naturals(), &sigma.inverse()).unwrap();
        assert!(qp.contragredient().approx_eq(&inv, 0.0));
        assert!(qp.antipode_transpose().approx_eq(&inv, 0.0));
        assert!(qp.contragredient().contragredient().approx_eq(&qp, 0.0));
        assert!(qp
            .antipode_transpose()
            .antipode_transpose()
            .approx_eq(&qp, 0.0));
        assert!(qp.validate(&t).ok);
    }

    #[test]
    fn antipode_is_conjugate_of_contragredient() {
        let p = CMatrix::from_fn(2, 2, |r, c| {
            // projection with genuinely complex entries
            let v = [num_complex::Complex64::new(0.6f64.sqrt(), 0.0),
                     num_complex::Complex64::new(0.2, (0.4f64 - 0.04).sqrt())];
            v[r] * v[c].conj()
        });
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        assert!(sigma.validate(&tol()).ok);
        let anti = sigma.antipode_transpose();
        let contra = sigma.contragredient();
        for &x in sigma.support() {
            for &y in sigma.support() {
                assert!(anti.entry(x, y).approx_eq(&contra.entry(x, y).conj(), 1e-14));
            }
        }
    }

    #[test]
    fn ev_map_intertwines_dual_tensor_with_trivial() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        let dual = sigma.contragredient();
        let prod = dual.tensor(&sigma).unwrap();
        let d = sigma.dim();
        // ev(ξ̄ ⊗ η) = <ξ, η>: row vector with 1 at positions i*d+i.
        let ev = CMatrix::from_fn(1, d * d, |_, c| {
            if c % d == c / d {
                num_complex::Complex64::new(1.0, 0.0)
            } else {
                num_complex::Complex64::new(0.0, 0.0)
            }
        });
        for &x in prod.support() {
            for &y in prod.support() {
                let lhs = ev.mul(&prod.entry(x, y));
                let rhs = if x == y { ev.clone() } else { CMatrix::zeros(1, d * d) };
                assert!(lhs.approx_eq(&rhs, 1e-12), "ev fails at ({x},{y})");
            }
        }
        assert!(prod.validate(&t).ok);
    }

    #[test]
    fn classical_monoid_map_over_degree_three() {
        // from_permutation is a monoid map: tensor corresponds to composition.
        let perms = Perm::all_of_degree(3);
        for s in &perms {
            for u in &perms {
                let a = QuantumPermutation::from_permutation(naturals(), s).unwrap();
                let b = QuantumPermutation::from_permutation(naturals(), u).unwrap();
                let lhs = a.tensor(&b).unwrap();
                let rhs =
                    QuantumPermutation::from_permutation(naturals(), &s.compose(u)).unwrap();
                assert!(lhs.approx_eq(&rhs, 0.0));
            }
        }
    }

    #[test]
    fn qperm_json_round_trip() {
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block_magic([0, 1, 2, 3], p, q);
        let s = serde_json::to_string(&sigma).unwrap();
        let back: QuantumPermutation = serde_json::from_str(&s).unwrap();
        assert!(back.approx_eq(&sigma, 0.0));
    }
}
