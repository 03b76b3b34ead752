//! Graph families with exact adjacency and distance oracles.
//!
//! Families are built from a small grammar (`complete:n | cycle:n | line |
//! johnson:k=2 | kneser:k=2 | hamming:n | rado | union(spec, copies) |
//! complement(spec) | product:kind(spec, spec)`). Infinite families expose
//! closed-form distance oracles rather than truncated searches, so distance
//! obstruction checks see true infinite-graph distances.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qperm::Perm;

/// Relation of two vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rel {
    Equal,
    Adjacent,
    DistinctNonAdjacent,
}

/// Extended non-negative distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dist {
    Finite(u64),
    Infinite,
}

impl Dist {
    pub fn plus(self, other: Dist) -> Dist {
        match (self, other) {
            (Dist::Finite(a), Dist::Finite(b)) => Dist::Finite(a + b),
            _ => Dist::Infinite,
        }
    }

    pub fn max(self, other: Dist) -> Dist {
        match (self, other) {
            (Dist::Finite(a), Dist::Finite(b)) => Dist::Finite(a.max(b)),
            _ => Dist::Infinite,
        }
    }
}

impl std::fmt::Display for Dist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dist::Finite(d) => write!(f, "{d}"),
            Dist::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    Direct,
    Cartesian,
    Strong,
}

impl ProductKind {
    fn name(self) -> &'static str {
        match self {
            ProductKind::Direct => "direct",
            ProductKind::Cartesian => "cartesian",
            ProductKind::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Kind {
    Complete(u64),
    Cycle(u64),
    Line,
    Johnson,
    Kneser,
    Hamming(u64),
    Rado,
    Union(Box<GraphFamily>, u64),
    Complement(Box<GraphFamily>),
    Product(ProductKind, Box<GraphFamily>, Box<GraphFamily>),
}

/// A graph given by vertex codec, exact adjacency oracle and exact distance
/// oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphFamily {
    kind: Kind,
}

// ---------------------------------------------------------------------------
// Prime sieve for the Rado graph (primes congruent 1 mod 4).
// ---------------------------------------------------------------------------

static RADO_PRIMES: Mutex<Vec<u64>> = Mutex::new(Vec::new());

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// The `i`-th prime congruent 1 mod 4, in increasing order (0-based).
pub fn rado_vertex(i: usize) -> u64 {
    let mut cache = RADO_PRIMES.lock().unwrap();
    while cache.len() <= i {
        let mut candidate = cache.last().map_or(5, |&p| p + 4);
        loop {
            if candidate % 4 == 1 && is_prime(candidate) {
                break;
            }
            candidate += 4;
        }
        cache.push(candidate);
    }
    cache[i]
}

/// Index of a Rado vertex label, if it is one.
fn rado_index(p: u64) -> Option<usize> {
    if p % 4 != 1 || !is_prime(p) {
        return None;
    }
    let mut i = 0;
    loop {
        let q = rado_vertex(i);
        if q == p {
            return Some(i);
        }
        if q > p {
            return None;
        }
        i += 1;
    }
}

fn modpow(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    let m = modulus as u128;
    let mut acc: u128 = 1;
    let mut b = (base % modulus) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    base = acc as u64;
    base
}

fn is_quadratic_residue(a: u64, q: u64) -> bool {
    // Euler criterion; exact for all arguments in range.
    modpow(a % q, (q - 1) / 2, q) == 1
}

/// Adjacency in the Rado graph: `p` is a quadratic residue mod `q`. The
/// result is symmetric by quadratic reciprocity since both primes are 1 mod 4.
pub fn rado_adjacent(p: u64, q: u64) -> Result<bool> {
    if p == q {
        return Err(Error::Domain("rado adjacency needs distinct vertices".into()));
    }
    if rado_index(p).is_none() || rado_index(q).is_none() {
        return Err(Error::Codec(format!("{p} or {q} is not a Rado vertex")));
    }
    Ok(is_quadratic_residue(p, q))
}

/// Smallest Rado vertex adjacent to everything in `a`, non-adjacent to
/// everything in `b`, excluding `exclude`, below `search_bound`.
pub fn rado_witness_excluding(
    a: &BTreeSet<u64>,
    b: &BTreeSet<u64>,
    exclude: &BTreeSet<u64>,
    search_bound: u64,
) -> Result<u64> {
    if !a.is_disjoint(b) {
        return Err(Error::Domain("witness sets must be disjoint".into()));
    }
    for v in a.iter().chain(b.iter()) {
        if rado_index(*v).is_none() {
            return Err(Error::Codec(format!("{v} is not a Rado vertex")));
        }
    }
    let mut i = 0;
    loop {
        let w = rado_vertex(i);
        if w > search_bound {
            return Err(Error::SearchExhausted(format!(
                "no extension witness below {search_bound} for A={a:?}, B={b:?}"
            )));
        }
        i += 1;
        if a.contains(&w) || b.contains(&w) || exclude.contains(&w) {
            continue;
        }
        let ok_a = a.iter().all(|&v| is_quadratic_residue(v, w) && is_quadratic_residue(w, v));
        // reciprocity makes the two directions agree; testing one suffices,
        // but the symmetric test costs nothing and guards the sieve
        let ok_b = b.iter().all(|&v| !is_quadratic_residue(v, w));
        if ok_a && ok_b {
            return Ok(w);
        }
    }
}

/// Extension-property witness per the graph's defining property.
pub fn rado_witness(a: &BTreeSet<u64>, b: &BTreeSet<u64>, search_bound: u64) -> Result<u64> {
    rado_witness_excluding(a, b, &BTreeSet::new(), search_bound)
}

// ---------------------------------------------------------------------------
// Codecs for structured vertex sets.
// ---------------------------------------------------------------------------

/// Zig-zag bijection between the naturals and the integers.
fn id_to_int(id: u64) -> i64 {
    if id % 2 == 1 {
        ((id + 1) / 2) as i64
    } else {
        -((id / 2) as i64)
    }
}

fn int_to_id(z: i64) -> u64 {
    if z > 0 {
        (2 * z - 1) as u64
    } else {
        (-2 * z) as u64
    }
}

/// Colex bijection between the naturals and two-element subsets of ℕ.
fn id_to_pair(id: u64) -> (u64, u64) {
    // largest b with b(b-1)/2 <= id
    let mut b = 1;
    while (b + 1) * b / 2 <= id {
        b += 1;
    }
    let a = id - b * (b - 1) / 2;
    (a, b)
}

fn pair_to_id(a: u64, b: u64) -> u64 {
    b * (b - 1) / 2 + a
}

fn id_to_tuple(mut id: u64, n: u64) -> Vec<u64> {
    let mut digits = Vec::new();
    while id > 0 {
        digits.push(id % n);
        id /= n;
    }
    digits
}

fn tuple_to_id(digits: &[u64], n: u64) -> u64 {
    digits.iter().rev().fold(0, |acc, &d| acc * n + d)
}

fn cantor_pair(x: u64, y: u64) -> u64 {
    (x + y) * (x + y + 1) / 2 + y
}

fn cantor_unpair(id: u64) -> (u64, u64) {
    let w = (((8.0 * id as f64 + 1.0).sqrt() - 1.0) / 2.0).floor() as u64;
    let w = if (w + 1) * (w + 2) / 2 <= id { w + 1 } else { w };
    let t = w * (w + 1) / 2;
    let y = id - t;
    (w - y, y)
}

impl GraphFamily {
    /// Parses the graph spec grammar.
    pub fn parse(spec: &str) -> Result<GraphFamily> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("union(") {
            let body = strip_close(rest, spec)?;
            let (inner, copies) = split_top_level(body)
                .ok_or_else(|| Error::Parse(format!("union needs two arguments: {spec}")))?;
            let copies: u64 = copies
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad copy count in {spec}")))?;
            if copies == 0 {
                return Err(Error::Parse("union needs at least one copy".into()));
            }
            return Ok(GraphFamily {
                kind: Kind::Union(Box::new(GraphFamily::parse(inner)?), copies),
            });
        }
        if let Some(rest) = spec.strip_prefix("complement(") {
            let body = strip_close(rest, spec)?;
            return Ok(GraphFamily {
                kind: Kind::Complement(Box::new(GraphFamily::parse(body)?)),
            });
        }
        if let Some(rest) = spec.strip_prefix("product:") {
            let open = rest
                .find('(')
                .ok_or_else(|| Error::Parse(format!("product needs arguments: {spec}")))?;
            let kind = match &rest[..open] {
                "direct" => ProductKind::Direct,
                "cartesian" => ProductKind::Cartesian,
                "strong" => ProductKind::Strong,
                other => return Err(Error::Parse(format!("unknown product kind '{other}'"))),
            };
            let body = strip_close(&rest[open + 1..], spec)?;
            let (left, right) = split_top_level(body)
                .ok_or_else(|| Error::Parse(format!("product needs two factors: {spec}")))?;
            return Ok(GraphFamily {
                kind: Kind::Product(
                    kind,
                    Box::new(GraphFamily::parse(left)?),
                    Box::new(GraphFamily::parse(right)?),
                ),
            });
        }
        match spec {
            "line" => return Ok(GraphFamily { kind: Kind::Line }),
            "rado" => return Ok(GraphFamily { kind: Kind::Rado }),
            "johnson" | "johnson:k=2" => return Ok(GraphFamily { kind: Kind::Johnson }),
            "kneser" | "kneser:k=2" => return Ok(GraphFamily { kind: Kind::Kneser }),
            _ => {}
        }
        if let Some((name, arg)) = spec.split_once(':') {
            let n: u64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad size in '{spec}'")))?;
            match name {
                "complete" if n >= 1 => return Ok(GraphFamily { kind: Kind::Complete(n) }),
                "cycle" if n >= 3 => return Ok(GraphFamily { kind: Kind::Cycle(n) }),
                "hamming" if n >= 2 => return Ok(GraphFamily { kind: Kind::Hamming(n) }),
                _ => {}
            }
        }
        Err(Error::Parse(format!("unknown graph spec '{spec}'")))
    }

    pub fn complete(n: u64) -> Self {
        GraphFamily { kind: Kind::Complete(n) }
    }

    pub fn cycle(n: u64) -> Self {
        GraphFamily { kind: Kind::Cycle(n) }
    }

    pub fn line() -> Self {
        GraphFamily { kind: Kind::Line }
    }

    pub fn johnson() -> Self {
        GraphFamily { kind: Kind::Johnson }
    }

    pub fn hamming(n: u64) -> Self {
        GraphFamily { kind: Kind::Hamming(n) }
    }

    pub fn rado() -> Self {
        GraphFamily { kind: Kind::Rado }
    }

    pub fn union(inner: GraphFamily, copies: u64) -> Self {
        GraphFamily {
            kind: Kind::Union(Box::new(inner), copies),
        }
    }

    pub fn product(kind: ProductKind, a: GraphFamily, b: GraphFamily) -> Self {
        GraphFamily {
            kind: Kind::Product(kind, Box::new(a), Box::new(b)),
        }
    }

    /// Normalised spec string.
    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Complete(n) => format!("complete:{n}"),
            Kind::Cycle(n) => format!("cycle:{n}"),
            Kind::Line => "line".into(),
            Kind::Johnson => "johnson:k=2".into(),
            Kind::Kneser => "kneser:k=2".into(),
            Kind::Hamming(n) => format!("hamming:{n}"),
            Kind::Rado => "rado".into(),
            Kind::Union(inner, c) => format!("union({}, {c})", inner.name()),
            Kind::Complement(inner) => format!("complement({})", inner.name()),
            Kind::Product(kind, a, b) => {
                format!("product:{}({}, {})", kind.name(), a.name(), b.name())
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vertex_count().is_some()
    }

    pub fn vertex_count(&self) -> Option<u64> {
        match &self.kind {
            Kind::Complete(n) | Kind::Cycle(n) => Some(*n),
            Kind::Line | Kind::Johnson | Kind::Kneser | Kind::Hamming(_) | Kind::Rado => None,
            Kind::Union(inner, c) => inner.vertex_count().map(|n| n * c),
            Kind::Complement(inner) => inner.vertex_count(),
            Kind::Product(_, a, b) => match (a.vertex_count(), b.vertex_count()) {
                (Some(x), Some(y)) => Some(x * y),
                _ => None,
            },
        }
    }

    /// Whether `id` decodes to a vertex.
    pub fn contains(&self, id: u64) -> bool {
        match &self.kind {
            Kind::Complete(n) | Kind::Cycle(n) => id < *n,
            Kind::Line | Kind::Johnson | Kind::Kneser | Kind::Hamming(_) | Kind::Rado => true,
            Kind::Union(inner, c) => match inner.vertex_count() {
                Some(n) => id < n * c,
                None => inner.contains(id / c),
            },
            Kind::Complement(inner) => inner.contains(id),
            Kind::Product(_, a, b) => {
                let (xa, xb) = self.split_product_id(id);
                match (&a.vertex_count(), &b.vertex_count()) {
                    (Some(_), Some(_)) => id < self.vertex_count().unwrap(),
                    _ => a.contains(xa) && b.contains(xb),
                }
            }
        }
    }

    fn split_union_id(&self, id: u64) -> (u64, u64) {
        // (copy, inner id)
        if let Kind::Union(inner, c) = &self.kind {
            match inner.vertex_count() {
                Some(n) => (id / n, id % n),
                None => (id % c, id / c),
            }
        } else {
            unreachable!()
        }
    }

    fn join_union_id(&self, copy: u64, inner_id: u64) -> u64 {
        if let Kind::Union(inner, c) = &self.kind {
            match inner.vertex_count() {
                Some(n) => copy * n + inner_id,
                None => inner_id * c + copy,
            }
        } else {
            unreachable!()
        }
    }

    fn split_product_id(&self, id: u64) -> (u64, u64) {
        if let Kind::Product(_, a, b) = &self.kind {
            match (a.vertex_count(), b.vertex_count()) {
                (Some(_), Some(nb)) => (id / nb, id % nb),
                _ => cantor_unpair(id),
            }
        } else {
            unreachable!()
        }
    }

    pub fn join_product_id(&self, xa: u64, xb: u64) -> u64 {
        if let Kind::Product(_, a, b) = &self.kind {
            match (a.vertex_count(), b.vertex_count()) {
                (Some(_), Some(nb)) => xa * nb + xb,
                _ => cantor_pair(xa, xb),
            }
        } else {
            unreachable!()
        }
    }

    fn check_id(&self, id: u64) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::Codec(format!("invalid vertex id {id} for {}", self.name())))
        }
    }

    /// Human-readable vertex label.
    pub fn label_of(&self, id: u64) -> Result<String> {
        self.check_id(id)?;
        Ok(match &self.kind {
            Kind::Complete(_) | Kind::Cycle(_) => id.to_string(),
            Kind::Line => id_to_int(id).to_string(),
            Kind::Johnson | Kind::Kneser => {
                let (a, b) = id_to_pair(id);
                format!("{{{a},{b}}}")
            }
            Kind::Hamming(n) => {
                let digits = id_to_tuple(id, *n);
                let inner: Vec<String> = digits.iter().map(|d| d.to_string()).collect();
                format!("({})", inner.join(","))
            }
            Kind::Rado => rado_vertex(id as usize).to_string(),
            Kind::Union(inner, _) => {
                let (copy, iid) = self.split_union_id(id);
                format!("{copy}:{}", inner.label_of(iid)?)
            }
            Kind::Complement(inner) => inner.label_of(id)?,
            Kind::Product(_, a, b) => {
                let (xa, xb) = self.split_product_id(id);
                format!("[{}|{}]", a.label_of(xa)?, b.label_of(xb)?)
            }
        })
    }

    /// Decodes a label produced by [`Self::label_of`].
    pub fn id_of(&self, label: &str) -> Result<u64> {
        let bad = || Error::Codec(format!("bad label '{label}' for {}", self.name()));
        let id = match &self.kind {
            Kind::Complete(_) | Kind::Cycle(_) => label.parse().map_err(|_| bad())?,
            Kind::Line => int_to_id(label.parse().map_err(|_| bad())?),
            Kind::Johnson | Kind::Kneser => {
                let body = label
                    .strip_prefix('{')
                    .and_then(|s| s.strip_suffix('}'))
                    .ok_or_else(bad)?;
                let (a, b) = body.split_once(',').ok_or_else(bad)?;
                let mut a: u64 = a.trim().parse().map_err(|_| bad())?;
                let mut b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a == b {
                    return Err(bad());
                }
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                pair_to_id(a, b)
            }
            Kind::Hamming(n) => {
                let body = label
                    .strip_prefix('(')
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(bad)?;
                let digits: Vec<u64> = if body.trim().is_empty() {
                    Vec::new()
                } else {
                    body.split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                };
                if digits.iter().any(|&d| d >= *n) {
                    return Err(bad());
                }
                tuple_to_id(&digits, *n)
            }
            Kind::Rado => {
                let p: u64 = label.parse().map_err(|_| bad())?;
                rado_index(p).ok_or_else(bad)? as u64
            }
            Kind::Union(inner, _) => {
                let (copy, rest) = label.split_once(':').ok_or_else(bad)?;
                let copy: u64 = copy.parse().map_err(|_| bad())?;
                self.join_union_id(copy, inner.id_of(rest)?)
            }
            Kind::Complement(inner) => inner.id_of(label)?,
            Kind::Product(_, a, b) => {
                let body = label
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(bad)?;
                let (la, lb) = split_top_bar(body).ok_or_else(bad)?;
                self.join_product_id(a.id_of(la)?, b.id_of(lb)?)
            }
        };
        self.check_id(id)?;
        Ok(id)
    }

    /// Exact adjacency oracle. Loops are never adjacent.
    pub fn adjacent(&self, x: u64, y: u64) -> Result<bool> {
        self.check_id(x)?;
        self.check_id(y)?;
        if x == y {
            return Ok(false);
        }
        Ok(match &self.kind {
            Kind::Complete(_) => true,
            Kind::Cycle(n) => {
                let d = x.abs_diff(y);
                d == 1 || d == n - 1
            }
            Kind::Line => id_to_int(x).abs_diff(id_to_int(y)) == 1,
            Kind::Johnson => {
                let (a1, b1) = id_to_pair(x);
                let (a2, b2) = id_to_pair(y);
                intersection_size(a1, b1, a2, b2) == 1
            }
            Kind::Kneser => {
                let (a1, b1) = id_to_pair(x);
                let (a2, b2) = id_to_pair(y);
                intersection_size(a1, b1, a2, b2) == 0
            }
            Kind::Hamming(n) => hamming_distance(x, y, *n) == 1,
            Kind::Rado => {
                let p = rado_vertex(x as usize);
                let q = rado_vertex(y as usize);
                is_quadratic_residue(p, q)
            }
            Kind::Union(inner, _) => {
                let (cx, ix) = self.split_union_id(x);
                let (cy, iy) = self.split_union_id(y);
                cx == cy && inner.adjacent(ix, iy)?
            }
            Kind::Complement(inner) => !inner.adjacent(x, y)?,
            Kind::Product(kind, a, b) => {
                let (xa, xb) = self.split_product_id(x);
                let (ya, yb) = self.split_product_id(y);
                let adj_a = a.adjacent(xa, ya)?;
                let adj_b = b.adjacent(xb, yb)?;
                match kind {
                    ProductKind::Direct => adj_a && adj_b,
                    ProductKind::Cartesian => {
                        (adj_a && xb == yb) || (xa == ya && adj_b)
                    }
                    ProductKind::Strong => {
                        (adj_a || xa == ya) && (adj_b || xb == yb)
                    }
                }
            }
        })
    }

    /// Equal, adjacent, or distinct and non-adjacent.
    pub fn rel(&self, x: u64, y: u64) -> Result<Rel> {
        if x == y {
            self.check_id(x)?;
            return Ok(Rel::Equal);
        }
        Ok(if self.adjacent(x, y)? {
            Rel::Adjacent
        } else {
            Rel::DistinctNonAdjacent
        })
    }

    /// Exact distance oracle (closed form per family, BFS on finite graphs
    /// where no closed form exists).
    pub fn distance(&self, x: u64, y: u64) -> Result<Dist> {
        self.check_id(x)?;
        self.check_id(y)?;
        if x == y {
            return Ok(Dist::Finite(0));
        }
        Ok(match &self.kind {
            Kind::Complete(_) => Dist::Finite(1),
            Kind::Cycle(n) => {
                let d = x.abs_diff(y);
                Dist::Finite(d.min(n - d))
            }
            Kind::Line => Dist::Finite(id_to_int(x).abs_diff(id_to_int(y))),
            Kind::Johnson => {
                let (a1, b1) = id_to_pair(x);
                let (a2, b2) = id_to_pair(y);
                Dist::Finite(2 - intersection_size(a1, b1, a2, b2))
            }
            Kind::Kneser => {
                let (a1, b1) = id_to_pair(x);
                let (a2, b2) = id_to_pair(y);
                if intersection_size(a1, b1, a2, b2) == 0 {
                    Dist::Finite(1)
                } else {
                    Dist::Finite(2)
                }
            }
            Kind::Hamming(n) => Dist::Finite(hamming_distance(x, y, *n)),
            Kind::Rado => {
                // the extension property supplies a common neighbour
                if self.adjacent(x, y)? {
                    Dist::Finite(1)
                } else {
                    Dist::Finite(2)
                }
            }
            Kind::Union(inner, _) => {
                let (cx, ix) = self.split_union_id(x);
                let (cy, iy) = self.split_union_id(y);
                if cx == cy {
                    inner.distance(ix, iy)?
                } else {
                    Dist::Infinite
                }
            }
            Kind::Complement(inner) => {
                if inner.is_finite() {
                    self.bfs_distance(x, y)?
                } else if !inner.adjacent(x, y)? {
                    Dist::Finite(1)
                } else {
                    // every two vertices of the infinite base families admit
                    // a common non-neighbour
                    Dist::Finite(2)
                }
            }
            Kind::Product(kind, a, b) => {
                let (xa, xb) = self.split_product_id(x);
                let (ya, yb) = self.split_product_id(y);
                match kind {
                    ProductKind::Cartesian => a.distance(xa, ya)?.plus(b.distance(xb, yb)?),
                    ProductKind::Strong => a.distance(xa, ya)?.max(b.distance(xb, yb)?),
                    ProductKind::Direct => {
                        if self.is_finite() {
                            self.bfs_distance(x, y)?
                        } else {
                            return Err(Error::Domain(
                                "direct-product distance on infinite factors is not supported"
                                    .into(),
                            ));
                        }
                    }
                }
            }
        })
    }

    fn bfs_distance(&self, x: u64, y: u64) -> Result<Dist> {
        let n = self
            .vertex_count()
            .ok_or_else(|| Error::Domain("BFS distance needs a finite graph".into()))?;
        let mut dist: BTreeMap<u64, u64> = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(x, 0);
        queue.push_back(x);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if v == y {
                return Ok(Dist::Finite(d));
            }
            for w in 0..n {
                if !dist.contains_key(&w) && self.adjacent(v, w)? {
                    dist.insert(w, d + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(Dist::Infinite)
    }

    /// Neighbour list for locally finite families; `None` when a vertex has
    /// infinitely many neighbours.
    pub fn neighbors(&self, v: u64) -> Result<Option<Vec<u64>>> {
        self.check_id(v)?;
        Ok(match &self.kind {
            Kind::Complete(n) => Some((0..*n).filter(|&w| w != v).collect()),
            Kind::Cycle(n) => Some(vec![(v + 1) % n, (v + n - 1) % n]),
            Kind::Line => {
                let z = id_to_int(v);
                Some(vec![int_to_id(z - 1), int_to_id(z + 1)])
            }
            Kind::Johnson | Kind::Kneser | Kind::Hamming(_) | Kind::Rado => None,
            Kind::Union(inner, _) => {
                let (copy, iv) = self.split_union_id(v);
                inner.neighbors(iv)?.map(|ns| {
                    ns.into_iter()
                        .map(|w| self.join_union_id(copy, w))
                        .collect()
                })
            }
            Kind::Complement(inner) => match inner.vertex_count() {
                Some(n) => Some(
                    (0..n)
                        .filter(|&w| w != v && !matches!(inner.adjacent(v, w), Ok(true)))
                        .collect(),
                ),
                None => None,
            },
            Kind::Product(kind, a, b) => {
                let (va, vb) = self.split_product_id(v);
                let na = a.neighbors(va)?;
                let nb = b.neighbors(vb)?;
                match (na, nb) {
                    (Some(na), Some(nb)) => {
                        let mut out = BTreeSet::new();
                        match kind {
                            ProductKind::Direct => {
                                for &wa in &na {
                                    for &wb in &nb {
                                        out.insert(self.join_product_id(wa, wb));
                                    }
                                }
                            }
                            ProductKind::Cartesian => {
                                for &wa in &na {
                                    out.insert(self.join_product_id(wa, vb));
                                }
                                for &wb in &nb {
                                    out.insert(self.join_product_id(va, wb));
                                }
                            }
                            ProductKind::Strong => {
                                for &wa in &na {
                                    out.insert(self.join_product_id(wa, vb));
                                    for &wb in &nb {
                                        out.insert(self.join_product_id(wa, wb));
                                    }
                                }
                                for &wb in &nb {
                                    out.insert(self.join_product_id(va, wb));
                                }
                            }
                        }
                        Some(out.into_iter().collect())
                    }
                    _ => None,
                }
            }
        })
    }

    /// Decides whether two support vertices have the same neighbours outside
    /// the support set. For locally finite families this is an exact set
    /// comparison; for the families of infinite degree, distinct vertices
    /// always differ on infinitely many outside neighbours.
    pub fn outside_neighbors_equal(
        &self,
        x: u64,
        y: u64,
        support: &BTreeSet<u64>,
    ) -> Result<bool> {
        if x == y {
            return Ok(true);
        }
        if let (Some(nx), Some(ny)) = (self.neighbors(x)?, self.neighbors(y)?) {
            let ox: BTreeSet<u64> = nx.into_iter().filter(|v| !support.contains(v)).collect();
            let oy: BTreeSet<u64> = ny.into_iter().filter(|v| !support.contains(v)).collect();
            return Ok(ox == oy);
        }
        match &self.kind {
            // distinct vertices of these families differ on infinitely many
            // neighbours, so no finite support can absorb the difference
            Kind::Johnson | Kind::Kneser | Kind::Hamming(_) | Kind::Rado => Ok(false),
            Kind::Complement(inner) => {
                // closed neighbourhoods of the base must agree outside
                match (inner.neighbors(x)?, inner.neighbors(y)?) {
                    (Some(nx), Some(ny)) => {
                        let mut cx: BTreeSet<u64> = nx.into_iter().collect();
                        cx.insert(x);
                        let mut cy: BTreeSet<u64> = ny.into_iter().collect();
                        cy.insert(y);
                        let ox: BTreeSet<u64> =
                            cx.into_iter().filter(|v| !support.contains(v)).collect();
                        let oy: BTreeSet<u64> =
                            cy.into_iter().filter(|v| !support.contains(v)).collect();
                        Ok(ox == oy)
                    }
                    _ => Ok(false),
                }
            }
            Kind::Union(inner, _) => {
                let (cx, ix) = self.split_union_id(x);
                let (cy, iy) = self.split_union_id(y);
                if cx != cy {
                    // different components of an infinite-degree component
                    // graph cannot share outside neighbourhoods
                    return Ok(false);
                }
                let inner_support: BTreeSet<u64> = support
                    .iter()
                    .map(|&s| self.split_union_id(s))
                    .filter(|&(c, _)| c == cx)
                    .map(|(_, i)| i)
                    .collect();
                inner.outside_neighbors_equal(ix, iy, &inner_support)
            }
            _ => Ok(false),
        }
    }

    /// First `count` valid vertex ids in increasing order.
    pub fn vertex_ids(&self, count: usize) -> Vec<u64> {
        (0..).filter(|&id| self.contains(id)).take(count).collect()
    }

    /// Exact automorphism test for finitely supported permutations.
    ///
    /// On finite or locally finite graphs this verifies that the neighbour
    /// set of every moved vertex maps onto the neighbour set of its image.
    pub fn is_automorphism(&self, perm: &Perm) -> Result<bool> {
        let moved = perm.moved_points();
        if moved.is_empty() {
            return Ok(true);
        }
        for &v in &moved {
            self.check_id(v)?;
            match self.neighbors(v)? {
                Some(nv) => {
                    let image: BTreeSet<u64> = nv.iter().map(|&w| perm.apply(w)).collect();
                    let target: BTreeSet<u64> = self
                        .neighbors(perm.apply(v))?
                        .ok_or_else(|| {
                            Error::Domain("automorphism test needs locally finite vertices".into())
                        })?
                        .into_iter()
                        .collect();
                    if image != target {
                        return Ok(false);
                    }
                }
                None => {
                    return Err(Error::Domain(format!(
                        "cannot verify a nontrivial automorphism on {} (infinite degree)",
                        self.name()
                    )))
                }
            }
        }
        Ok(true)
    }

    /// Connectivity (BFS on finite graphs, closed form for infinite families).
    pub fn is_connected(&self) -> Result<bool> {
        if let Some(n) = self.vertex_count() {
            if n == 0 {
                return Ok(true);
            }
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::new();
            seen.insert(0u64);
            queue.push_back(0u64);
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    if !seen.contains(&w) && self.adjacent(v, w)? {
                        seen.insert(w);
                        queue.push_back(w);
                    }
                }
            }
            return Ok(seen.len() as u64 == n);
        }
        match &self.kind {
            Kind::Line | Kind::Johnson | Kind::Kneser | Kind::Hamming(_) | Kind::Rado => Ok(true),
            Kind::Union(inner, c) => Ok(*c == 1 && inner.is_connected()?),
            Kind::Complement(_) => Ok(true),
            Kind::Product(kind, a, b) => match kind {
                ProductKind::Cartesian | ProductKind::Strong => {
                    Ok(a.is_connected()? && b.is_connected()?)
                }
                ProductKind::Direct => Err(Error::Domain(
                    "connectivity of infinite direct products is not supported".into(),
                )),
            },
            // finite kinds are handled by the BFS above
            Kind::Complete(_) | Kind::Cycle(_) => unreachable!(),
        }
    }
}

fn intersection_size(a1: u64, b1: u64, a2: u64, b2: u64) -> u64 {
    [(a1 == a2), (a1 == b2), (b1 == a2), (b1 == b2)]
        .iter()
        .filter(|&&x| x)
        .count() as u64
}

fn hamming_distance(x: u64, y: u64, n: u64) -> u64 {
    let mut a = x;
    let mut b = y;
    let mut d = 0;
    while a > 0 || b > 0 {
        if a % n != b % n {
            d += 1;
        }
        a /= n;
        b /= n;
    }
    d
}

fn strip_close<'a>(rest: &'a str, whole: &str) -> Result<&'a str> {
    rest.trim_end()
        .strip_suffix(')')
        .ok_or_else(|| Error::Parse(format!("missing ')' in '{whole}'")))
}

/// Splits `body` at the top-level comma.
fn split_top_level(body: &str) -> Option<(&str, &str)> {
    let mut depth = 0usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => return Some((&body[..i], &body[i + 1..])),
            _ => {}
        }
    }
    None
}

fn split_top_bar(body: &str) -> Option<(&str, &str)> {
    let mut depth = 0usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '[' | '(' | '{' => depth += 1,
            ']' | ')' | '}' => depth = depth.saturating_sub(1),
            '|' if depth == 0 => return Some((&body[..i], &body[i + 1..])),
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_round_trips() {
        for spec in [
            "complete:4",
            "cycle:5",
            "line",
            "johnson:k=2",
            "kneser:k=2",
            "hamming:4",
            "rado",
            "union(cycle:3, 2)",
            "complement(complete:4)",
            "product:cartesian(complete:4, cycle:5)",
            "product:direct(complete:2, complete:2)",
            "product:strong(complete:2, complete:2)",
        ] {
            let g = GraphFamily::parse(spec).unwrap();
            assert_eq!(GraphFamily::parse(&g.name()).unwrap(), g);
        }
        assert!(GraphFamily::parse("petersen").is_err());
        assert!(GraphFamily::parse("union(cycle:3)").is_err());
    }

    #[test]
    fn johnson_adjacency_and_distance() {
        let g = GraphFamily::johnson();
        let v12 = g.id_of("{1,2}").unwrap();
        let v13 = g.id_of("{1,3}").unwrap();
        let v34 = g.id_of("{3,4}").unwrap();
        assert_eq!(g.rel(v12, v13).unwrap(), Rel::Adjacent);
        assert_eq!(g.distance(v12, v34).unwrap(), Dist::Finite(2));
        assert_eq!(g.distance(v12, v12).unwrap(), Dist::Finite(0));
        assert_eq!(g.label_of(v12).unwrap(), "{1,2}");
    }

    #[test]
    fn kneser_is_johnson_complement() {
        let j = GraphFamily::johnson();
        let k = GraphFamily::parse("kneser:k=2").unwrap();
        for x in 0..15u64 {
            for y in 0..15u64 {
                if x != y {
                    assert_eq!(
                        j.adjacent(x, y).unwrap(),
                        !k.adjacent(x, y).unwrap(),
                        "complementarity at ({x},{y})"
                    );
                }
            }
        }
        let v12 = k.id_of("{1,2}").unwrap();
        let v13 = k.id_of("{1,3}").unwrap();
        assert_eq!(k.rel(v12, v13).unwrap(), Rel::DistinctNonAdjacent);
    }

    #[test]
    fn line_distance_is_absolute_difference() {
        let g = GraphFamily::line();
        let a = g.id_of("-3").unwrap();
        let b = g.id_of("4").unwrap();
        assert_eq!(g.distance(a, b).unwrap(), Dist::Finite(7));
        assert_eq!(g.rel(a, a).unwrap(), Rel::Equal);
        let n = g.neighbors(a).unwrap().unwrap();
        let labels: BTreeSet<String> = n.iter().map(|&v| g.label_of(v).unwrap()).collect();
        assert_eq!(labels, ["-4".to_string(), "-2".to_string()].into());
    }

    #[test]
    fn complete_and_cycle_basics() {
        let k4 = GraphFamily::complete(4);
        assert_eq!(k4.rel(0, 3).unwrap(), Rel::Adjacent);
        assert!(k4.rel(0, 4).is_err());
        let c5 = GraphFamily::cycle(5);
        assert_eq!(c5.distance(0, 2).unwrap(), Dist::Finite(2));
        assert_eq!(c5.distance(0, 4).unwrap(), Dist::Finite(1));
    }

    #[test]
    fn hamming_adjacency_is_distance_one() {
        let g = GraphFamily::hamming(4);
        let a = g.id_of("(1,0,2)").unwrap();
        let b = g.id_of("(1,3,2)").unwrap();
        let c = g.id_of("(0,3,2)").unwrap();
        assert_eq!(g.distance(a, b).unwrap(), Dist::Finite(1));
        assert!(g.adjacent(a, b).unwrap());
        assert_eq!(g.distance(a, c).unwrap(), Dist::Finite(2));
        assert!(!g.adjacent(a, c).unwrap());
        assert_eq!(g.label_of(a).unwrap(), "(1,0,2)");
    }

    #[test]
    fn union_distances_are_infinite_across_components() {
        let g = GraphFamily::parse("union(cycle:3, 2)").unwrap();
        assert_eq!(g.vertex_count(), Some(6));
        assert_eq!(g.distance(0, 1).unwrap(), Dist::Finite(1));
        assert_eq!(g.distance(0, 3).unwrap(), Dist::Infinite);
        assert_eq!(g.rel(0, 3).unwrap(), Rel::DistinctNonAdjacent);
        assert_eq!(g.label_of(4).unwrap(), "1:1");
    }

    #[test]
    fn product_oracles() {
        // K2 □ K2 is the 4-cycle
        let g = GraphFamily::parse("product:cartesian(complete:2, complete:2)").unwrap();
        let mut edge_count = 0;
        for x in 0..4 {
            for y in (x + 1)..4 {
                if g.adjacent(x, y).unwrap() {
                    edge_count += 1;
                }
            }
        }
        assert_eq!(edge_count, 4);
        assert_eq!(g.distance(0, 3).unwrap(), Dist::Finite(2));

        // K2 ⊠ K2 is K4
        let s = GraphFamily::parse("product:strong(complete:2, complete:2)").unwrap();
        for x in 0..4 {
            for y in 0..4 {
                if x != y {
                    assert!(s.adjacent(x, y).unwrap());
                }
            }
        }

        // direct product: adjacent iff both coordinates adjacent
        let d = GraphFamily::parse("product:direct(complete:3, complete:3)").unwrap();
        let (x, y) = (d.join_product_id(0, 0), d.join_product_id(1, 1));
        assert!(d.adjacent(x, y).unwrap());
        let (x2, y2) = (d.join_product_id(0, 0), d.join_product_id(1, 0));
        assert!(!d.adjacent(x2, y2).unwrap());

        // cartesian distance is the sum of coordinate distances
        let inf = GraphFamily::parse("product:cartesian(complete:4, line)").unwrap();
        let v = inf.join_product_id(0, inf_line_id(&inf, -2));
        let w = inf.join_product_id(3, inf_line_id(&inf, 3));
        assert_eq!(inf.distance(v, w).unwrap(), Dist::Finite(6));
    }

    fn inf_line_id(_g: &GraphFamily, z: i64) -> u64 {
        int_to_id(z)
    }

    #[test]
    fn rado_vertices_and_adjacency() {
        assert_eq!(rado_vertex(0), 5);
        assert_eq!(rado_vertex(1), 13);
        assert_eq!(rado_vertex(2), 17);
        assert!(rado_adjacent(13, 17).unwrap());
        assert!(!rado_adjacent(5, 13).unwrap());
        assert!(rado_adjacent(5, 5).is_err());
        assert!(rado_adjacent(7, 13).is_err());
        // symmetry on the first 50 vertices
        for i in 0..50usize {
            for j in (i + 1)..50 {
                let p = rado_vertex(i);
                let q = rado_vertex(j);
                assert_eq!(
                    rado_adjacent(p, q).unwrap(),
                    rado_adjacent(q, p).unwrap(),
                    "reciprocity fails at ({p},{q})"
                );
            }
        }
    }

    #[test]
    fn rado_witness_examples() {
        let w = rado_witness(&[5].into(), &BTreeSet::new(), 1_000_000).unwrap();
        assert_eq!(w, 29);
        let w = rado_witness(&BTreeSet::new(), &[5].into(), 1_000_000).unwrap();
        assert_eq!(w, 13);
        let w = rado_witness(&BTreeSet::new(), &BTreeSet::new(), 1_000_000).unwrap();
        assert_eq!(w, 5);
        assert!(rado_witness(&[5].into(), &[5].into(), 1_000_000).is_err());
    }

    #[test]
    fn rado_graph_family_uses_sieve_labels() {
        let g = GraphFamily::rado();
        assert_eq!(g.label_of(0).unwrap(), "5");
        assert_eq!(g.id_of("13").unwrap(), 1);
        assert!(g.id_of("9").is_err());
        assert_eq!(g.distance(0, 1).unwrap(), Dist::Finite(2));
        assert_eq!(g.distance(1, 2).unwrap(), Dist::Finite(1));
    }

    #[test]
    fn automorphism_tests() {
        let c5 = GraphFamily::cycle(5);
        let rot = Perm::parse("(0 1 2 3 4)").unwrap();
        assert!(c5.is_automorphism(&rot).unwrap());
        let bad = Perm::parse("(0 2)").unwrap();
        assert!(!c5.is_automorphism(&bad).unwrap());

        let path_like = GraphFamily::line();
        let refl = Perm::identity();
        assert!(path_like.is_automorphism(&refl).unwrap());

        let union = GraphFamily::parse("union(cycle:3, 2)").unwrap();
        let rot0 = Perm::parse("(0 1 2)").unwrap();
        let rot1 = Perm::parse("(3 4 5)").unwrap();
        assert!(union.is_automorphism(&rot0).unwrap());
        assert!(union.is_automorphism(&rot1).unwrap());
        let cross = Perm::parse("(0 3)").unwrap();
        // swapping single vertices across copies is not an automorphism
        assert!(!union.is_automorphism(&cross).unwrap());
    }

    #[test]
    fn connectivity() {
        assert!(GraphFamily::complete(3).is_connected().unwrap());
        assert!(!GraphFamily::parse("union(cycle:3, 2)")
            .unwrap()
            .is_connected()
            .unwrap());
        assert!(GraphFamily::line().is_connected().unwrap());
        assert!(GraphFamily::rado().is_connected().unwrap());
    }

    #[test]
    fn outside_neighbourhood_rules() {
        // line: translates share outside neighbours only when the support
        // absorbs the difference
        let line = GraphFamily::line();
        let support: BTreeSet<u64> = [-2i64, -1, 0, 1, 2].iter().map(|&z| int_to_id(z)).collect();
        let a = int_to_id(0);
        let b = int_to_id(1);
        assert!(line.outside_neighbors_equal(a, b, &support).unwrap());
        let tight: BTreeSet<u64> = [0i64, 1].iter().map(|&z| int_to_id(z)).collect();
        assert!(!line.outside_neighbors_equal(a, b, &tight).unwrap());

        // johnson: distinct vertices never agree outside a finite support
        let j = GraphFamily::johnson();
        let sup: BTreeSet<u64> = (0..10).collect();
        assert!(!j.outside_neighbors_equal(0, 1, &sup).unwrap());
        assert!(j.outside_neighbors_equal(3, 3, &sup).unwrap());
    }

    #[test]
    fn modpow_matches_naive() {
        for q in [13u64, 17, 29, 97] {
            for a in 1..q {
                let mut acc = 1u64;
                for _ in 0..(q - 1) / 2 {
                    acc = acc * a % q;
                }
                assert_eq!(modpow(a, (q - 1) / 2, q), acc);
            }
        }
    }
}
