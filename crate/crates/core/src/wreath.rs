//! Free wreath corepresentation calculus over finite classical groups.
//!
//! A wreath corepresentation pairs, on one Hilbert space, a spectral family
//! per point (a representation of the function algebra of a finite group)
//! with a quantum permutation of the point set, each point's family
//! commuting with its own row of the quantum permutation. Tensor products,
//! contragredients and the evaluation/dual-basis morphisms realise the
//! categorical structure concretely.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{projection_defect, CMatrix, Tolerance};
use crate::qperm::{IndexSet, Perm, QuantumPermutation};
use crate::rep;

/// Finite group given by its multiplication table; the unit and inverse
/// table are derived and the axioms are checked exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroupData {
    order: usize,
    table: Vec<Vec<usize>>,
    unit: usize,
    inverse: Vec<usize>,
}

impl FiniteGroupData {
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 || table.iter().any(|row| row.len() != n) {
            return Err(Error::Domain(
                "multiplication table must be square and nonempty".into(),
            ));
        }
        if table.iter().flatten().any(|&v| v >= n) {
            return Err(Error::Domain("table entry out of range".into()));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::Domain(format!(
                            "table is not associative at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        let unit = (0..n)
            .find(|&e| (0..n).all(|a| table[e][a] == a && table[a][e] == a))
            .ok_or_else(|| Error::Domain("table has no unit".into()))?;
        let mut inverse = vec![0usize; n];
        for a in 0..n {
            inverse[a] = (0..n)
                .find(|&b| table[a][b] == unit && table[b][a] == unit)
                .ok_or_else(|| Error::Domain(format!("element {a} has no inverse")))?;
        }
        Ok(FiniteGroupData {
            order: n,
            table,
            unit,
            inverse,
        })
    }

    pub fn cyclic(n: usize) -> Self {
        let table = (0..n)
            .map(|a| (0..n).map(|b| (a + b) % n).collect())
            .collect();
        FiniteGroupData::new(table).expect("cyclic table is a group")
    }

    pub fn trivial() -> Self {
        FiniteGroupData::cyclic(1)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }
}

#[derive(Serialize, Deserialize)]
struct GroupRepr {
    order: usize,
    table: Vec<Vec<usize>>,
}

impl Serialize for FiniteGroupData {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        GroupRepr {
            order: self.order,
            table: self.table.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FiniteGroupData {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = GroupRepr::deserialize(deserializer)?;
        if repr.table.len() != repr.order {
            return Err(serde::de::Error::custom("order does not match table size"));
        }
        FiniteGroupData::new(repr.table).map_err(serde::de::Error::custom)
    }
}

/// X-free wreath corepresentation of a finite group: per-point spectral
/// families plus a quantum permutation on one Hilbert space. Off the stored
/// support the per-point family is the counit (`P_x(γ) = δ_{γ,e} · 1`).
#[derive(Debug, Clone)]
pub struct WreathCorep {
    group: FiniteGroupData,
    dim: usize,
    spectral: BTreeMap<u64, Vec<CMatrix>>,
    qperm: QuantumPermutation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WreathReport {
    pub ok: bool,
    pub worst_residual: f64,
    pub failing_constraint: Option<String>,
}

impl WreathCorep {
    pub fn new(
        group: FiniteGroupData,
        dim: usize,
        spectral: BTreeMap<u64, Vec<CMatrix>>,
        qperm: QuantumPermutation,
    ) -> Result<Self> {
        if qperm.dim() != dim {
            return Err(Error::Shape(format!(
                "quantum permutation dimension {} does not match {dim}",
                qperm.dim()
            )));
        }
        for (x, family) in &spectral {
            if family.len() != group.order() {
                return Err(Error::Shape(format!(
                    "spectral family at {x} has {} members, group order is {}",
                    family.len(),
                    group.order()
                )));
            }
            for m in family {
                if m.rows() != dim || m.cols() != dim {
                    return Err(Error::Shape(format!(
                        "spectral matrix at {x} has wrong shape"
                    )));
                }
            }
        }
        Ok(WreathCorep {
            group,
            dim,
            spectral,
            qperm,
        })
    }

    /// Trivial corepresentation: counit at every point, trivial quantum
    /// permutation.
    pub fn trivial(group: FiniteGroupData, index_set: IndexSet) -> Self {
        WreathCorep {
            group,
            dim: 1,
            spectral: BTreeMap::new(),
            qperm: QuantumPermutation::trivial(index_set),
        }
    }

    /// Classical wreath element: one group element per listed point plus a
    /// finitely supported permutation of the points, on dimension one.
    pub fn classical(
        group: FiniteGroupData,
        index_set: IndexSet,
        points: &BTreeMap<u64, usize>,
        perm: &Perm,
    ) -> Result<Self> {
        for &g in points.values() {
            if g >= group.order() {
                return Err(Error::Domain(format!("group element {g} out of range")));
            }
        }
        let spectral = points
            .iter()
            .map(|(&x, &g)| {
                let family = (0..group.order())
                    .map(|h| {
                        if h == g {
                            CMatrix::identity(1)
                        } else {
                            CMatrix::zeros(1, 1)
                        }
                    })
                    .collect();
                (x, family)
            })
            .collect();
        Ok(WreathCorep {
            group,
            dim: 1,
            spectral,
            qperm: QuantumPermutation::from_permutation(index_set, perm)?,
        })
    }

    pub fn group(&self) -> &FiniteGroupData {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn qperm(&self) -> &QuantumPermutation {
        &self.qperm
    }

    pub fn spectral_points(&self) -> BTreeSet<u64> {
        self.spectral.keys().copied().collect()
    }

    /// Joint support of the spectral families and the quantum permutation.
    pub fn support(&self) -> BTreeSet<u64> {
        self.spectral
            .keys()
            .copied()
            .chain(self.qperm.support().iter().copied())
            .collect()
    }

    /// `P_x(γ)` with the counit tail.
    pub fn spectral_at(&self, x: u64, gamma: usize) -> CMatrix {
        match self.spectral.get(&x) {
            Some(family) => family[gamma].clone(),
            None => {
                if gamma == self.group.unit() {
                    CMatrix::identity(self.dim)
                } else {
                    CMatrix::zeros(self.dim, self.dim)
                }
            }
        }
    }

    /// Checks projections, partitions of unity, the quantum permutation
    /// axioms and the per-point commutation relation.
    pub fn validate(&self, tol: &Tolerance) -> WreathReport {
        let mut worst = 0.0f64;
        let mut fail: Option<String> = None;
        let mut note = |name: String, residual: f64| {
            if residual > worst {
                worst = residual;
            }
            if residual > tol.eps_proj && fail.is_none() {
                fail = Some(name);
            }
        };

        for (&x, family) in &self.spectral {
            let mut sum = CMatrix::zeros(self.dim, self.dim);
            for (gamma, p) in family.iter().enumerate() {
                note(
                    format!("spectral_projection({x},{gamma})"),
                    projection_defect(p),
                );
                sum = sum.add(p);
            }
            note(
                format!("spectral_partition({x})"),
                sum.sub(&CMatrix::identity(self.dim)).fro_norm(),
            );
        }

        let qreport = self.qperm.validate(tol);
        note(
            format!(
                "qperm:{}",
                qreport.failing_constraint.clone().unwrap_or_default()
            ),
            qreport.worst_residual,
        );

        // commutation of each point's family with its own row
        let support = self.support();
        for (&x, family) in &self.spectral {
            for &y in &support {
                let entry = self.qperm.entry(x, y);
                if entry.fro_norm() == 0.0 {
                    continue;
                }
                for (gamma, p) in family.iter().enumerate() {
                    note(
                        format!("commutation({x},{y},{gamma})"),
                        p.commutator(&entry).fro_norm(),
                    );
                }
            }
        }

        WreathReport {
            ok: fail.is_none(),
            worst_residual: worst,
            failing_constraint: fail,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.group != other.group {
            return Err(Error::Domain("group mismatch".into()));
        }
        if self.qperm.index_set() != other.qperm.index_set() {
            return Err(Error::Domain("index set mismatch".into()));
        }
        Ok(())
    }

    /// Tensor product: the per-point family is
    /// `(π ⊤ ρ)_x(γ) = Σ_y Σ_{αβ=γ} (π^X_xy P_x(α)) ⊗ Q_y(β)` and the
    /// quantum permutation part is the tensor of the parts.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let n = self.group.order();
        let dim = self.dim * other.dim;
        let support: BTreeSet<u64> = self.support().union(&other.support()).copied().collect();
        let mut spectral = BTreeMap::new();
        for &x in &support {
            let mut family = vec![CMatrix::zeros(dim, dim); n];
            for &y in &support {
                let pxy = self.qperm.entry(x, y);
                if pxy.fro_norm() == 0.0 {
                    continue;
                }
                for alpha in 0..n {
                    let left = pxy.mul(&self.spectral_at(x, alpha));
                    if left.fro_norm() == 0.0 {
                        continue;
                    }
                    for beta in 0..n {
                        let right = other.spectral_at(y, beta);
                        if right.fro_norm() == 0.0 {
                            continue;
                        }
                        let gamma = self.group.mul(alpha, beta);
                        family[gamma] = family[gamma].add(&left.kron(&right));
                    }
                }
            }
            spectral.insert(x, family);
        }
        WreathCorep::new(
            self.group.clone(),
            dim,
            spectral,
            self.qperm.tensor(&other.qperm)?,
        )
    }

    /// Contragredient: `P̄_x(γ) = conj(Σ_y P_y(γ⁻¹) π^X_yx)` together with
    /// the contragredient quantum permutation.
    pub fn contragredient(&self) -> Self {
        let n = self.group.order();
        let support = self.support();
        let mut spectral = BTreeMap::new();
        for &x in &support {
            let mut family = Vec::with_capacity(n);
            for gamma in 0..n {
                let ginv = self.group.inv(gamma);
                let mut sum = CMatrix::zeros(self.dim, self.dim);
                for &y in &support {
                    let pyx = self.qperm.entry(y, x);
                    if pyx.fro_norm() == 0.0 {
                        continue;
                    }
                    sum = sum.add(&self.spectral_at(y, ginv).mul(&pyx));
                }
                family.push(sum.conj());
            }
            spectral.insert(x, family);
        }
        WreathCorep {
            group: self.group.clone(),
            dim: self.dim,
            spectral,
            qperm: self.qperm.contragredient(),
        }
    }

    /// Restricted/half-liberated predicates. In the tail representation the
    /// per-point family is the counit off a finite set by construction, so
    /// `restricted` always holds and the support size is reported.
    pub fn flags(&self, tol: &Tolerance) -> WreathFlags {
        let support = self.support();
        let mut half_liberated = self.qperm.is_classical(tol);
        if half_liberated {
            let points: Vec<u64> = self.spectral.keys().copied().collect();
            'outer: for (i, &x) in points.iter().enumerate() {
                for &y in points.iter().skip(i + 1) {
                    for a in &self.spectral[&x] {
                        for b in &self.spectral[&y] {
                            if a.commutator(b).fro_norm() > tol.eps_proj {
                                half_liberated = false;
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        WreathFlags {
            restricted: true,
            support_size: support.len(),
            half_liberated,
        }
    }

    /// Entrywise comparison of spectral families and quantum permutations.
    pub fn approx_eq(&self, other: &Self, eps: f64) -> bool {
        if self.group != other.group || self.dim != other.dim {
            return false;
        }
        if !self.qperm.approx_eq(&other.qperm, eps) {
            return false;
        }
        let support: BTreeSet<u64> = self.support().union(&other.support()).copied().collect();
        for &x in &support {
            for gamma in 0..self.group.order() {
                if !self
                    .spectral_at(x, gamma)
                    .approx_eq(&other.spectral_at(x, gamma), eps)
                {
                    return false;
                }
            }
        }
        true
    }

    /// All generator matrices (spectral families over the joint support plus
    /// quantum permutation entries), for intertwiner solves.
    fn generator_list(&self, support: &BTreeSet<u64>) -> Vec<CMatrix> {
        let mut out = Vec::new();
        for &x in support {
            for gamma in 0..self.group.order() {
                out.push(self.spectral_at(x, gamma));
            }
        }
        for &x in support {
            for &y in support {
                out.push(self.qperm.entry(x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WreathFlags {
    pub restricted: bool,
    pub support_size: usize,
    pub half_liberated: bool,
}

/// Unitary equivalence of wreath corepresentations (intertwining both the
/// spectral families and the quantum permutations).
pub fn wreath_equivalent(
    a: &WreathCorep,
    b: &WreathCorep,
    tol: &Tolerance,
) -> Result<Option<CMatrix>> {
    a.check_compatible(b)?;
    let support: BTreeSet<u64> = a.support().union(&b.support()).copied().collect();
    rep::unitary_intertwiner_families(
        &a.generator_list(&support),
        &b.generator_list(&support),
        tol,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvDbReport {
    pub ev_intertwines: f64,
    pub db_intertwines: f64,
    pub zigzag_left: f64,
    pub zigzag_right: f64,
    pub dual_ev_intertwines: f64,
    pub dual_db_intertwines: f64,
    pub dual_zigzag_left: f64,
    pub dual_zigzag_right: f64,
    pub ok: bool,
}

/// Evaluation and dual-basis morphisms with their certification.
///
/// `ev(ē_i ⊗ e_j) = δ_ij` and `db(1) = Σ e_i ⊗ ē_i`. The zig-zag composites
/// are matrix identities and hold exactly; the intertwining residuals are
/// checked numerically against the tensor corepresentations.
pub fn wreath_evdb(pi: &WreathCorep, tol: &Tolerance) -> Result<(CMatrix, CMatrix, EvDbReport)> {
    let d = pi.dim();
    let one = Complex64::new(1.0, 0.0);
    let ev = CMatrix::from_fn(1, d * d, |_, c| {
        if c / d == c % d {
            one
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let db = ev.transpose();

    let dual = pi.contragredient();
    let dual_tensor = dual.tensor(pi)?; // π̄ ⊤ π, source of ev
    let tensor_dual = pi.tensor(&dual)?; // π ⊤ π̄, target of db

    let support = pi.support();
    let n = pi.group().order();
    let unit = pi.group().unit();

    let mut ev_res = 0.0f64;
    let mut db_res = 0.0f64;
    let mut dual_ev_res = 0.0f64;
    let mut dual_db_res = 0.0f64;

    for &x in &support {
        for gamma in 0..n {
            let scalar = Complex64::new(if gamma == unit { 1.0 } else { 0.0 }, 0.0);
            // ev intertwines π̄ ⊤ π with the trivial corepresentation
            let lhs = ev.mul(&dual_tensor.spectral_at(x, gamma));
            ev_res = ev_res.max(lhs.sub(&ev.scale(scalar)).fro_norm());
            // db intertwines the trivial corepresentation with π ⊤ π̄
            let lhs = tensor_dual.spectral_at(x, gamma).mul(&db);
            db_res = db_res.max(lhs.sub(&db.scale(scalar)).fro_norm());
            // dual morphisms: ev for π̄ (on π ⊤ π̄), db for π̄ (into π̄ ⊤ π)
            let lhs = ev.mul(&tensor_dual.spectral_at(x, gamma));
            dual_ev_res = dual_ev_res.max(lhs.sub(&ev.scale(scalar)).fro_norm());
            let lhs = dual_tensor.spectral_at(x, gamma).mul(&db);
            dual_db_res = dual_db_res.max(lhs.sub(&db.scale(scalar)).fro_norm());
        }
        for &y in &support {
            let delta = Complex64::new(if x == y { 1.0 } else { 0.0 }, 0.0);
            let lhs = ev.mul(&dual_tensor.qperm().entry(x, y));
            ev_res = ev_res.max(lhs.sub(&ev.scale(delta)).fro_norm());
            let lhs = tensor_dual.qperm().entry(x, y).mul(&db);
            db_res = db_res.max(lhs.sub(&db.scale(delta)).fro_norm());
            let lhs = ev.mul(&tensor_dual.qperm().entry(x, y));
            dual_ev_res = dual_ev_res.max(lhs.sub(&ev.scale(delta)).fro_norm());
            let lhs = dual_tensor.qperm().entry(x, y).mul(&db);
            dual_db_res = dual_db_res.max(lhs.sub(&db.scale(delta)).fro_norm());
        }
    }

    // zig-zag composites (matrix identities, exact)
    let id_d = CMatrix::identity(d);
    let zig_left = id_d.kron(&ev).mul(&db.kron(&id_d)).sub(&id_d).fro_norm();
    let zig_right = ev.kron(&id_d).mul(&id_d.kron(&db)).sub(&id_d).fro_norm();
    // swapping the roles of π and π̄ gives the same coordinate matrices
    let dual_zig_left = zig_left;
    let dual_zig_right = zig_right;

    let bound = (10.0 * tol.eps_null).max(tol.eps_proj);
    let ok = [
        ev_res,
        db_res,
        dual_ev_res,
        dual_db_res,
        zig_left,
        zig_right,
        dual_zig_left,
        dual_zig_right,
    ]
    .iter()
    .all(|&r| r <= bound);

    Ok((
        ev,
        db,
        EvDbReport {
            ev_intertwines: ev_res,
            db_intertwines: db_res,
            zigzag_left: zig_left,
            zigzag_right: zig_right,
            dual_ev_intertwines: dual_ev_res,
            dual_db_intertwines: dual_db_res,
            dual_zigzag_left: dual_zig_left,
            dual_zigzag_right: dual_zig_right,
            ok,
        },
    ))
}

// JSON form: composes the quantum permutation schema with the spectral map.
#[derive(Serialize, Deserialize)]
struct WreathRepr {
    group: FiniteGroupData,
    dim: usize,
    spectral: BTreeMap<String, BTreeMap<String, CMatrix>>,
    qperm: QuantumPermutation,
}

impl Serialize for WreathCorep {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let spectral = self
            .spectral
            .iter()
            .map(|(x, family)| {
                let inner: BTreeMap<String, CMatrix> = family
                    .iter()
                    .enumerate()
                    .map(|(g, m)| (g.to_string(), m.clone()))
                    .collect();
                (x.to_string(), inner)
            })
            .collect();
        WreathRepr {
            group: self.group.clone(),
            dim: self.dim,
            spectral,
            qperm: self.qperm.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WreathCorep {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = WreathRepr::deserialize(deserializer)?;
        let mut spectral = BTreeMap::new();
        for (x, inner) in repr.spectral {
            let x: u64 = x
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("bad point key '{x}'")))?;
            let mut family = vec![CMatrix::zeros(repr.dim, repr.dim); repr.group.order()];
            for (g, m) in inner {
                let g: usize = g
                    .parse()
                    .map_err(|_| serde::de::Error::custom(format!("bad group key '{g}'")))?;
                if g >= repr.group.order() {
                    return Err(serde::de::Error::custom("group element out of range"));
                }
                family[g] = m;
            }
            spectral.insert(x, family);
        }
        WreathCorep::new(repr.group, repr.dim, spectral, repr.qperm)
            .map_err(serde::de::Error::custom)
    }
}
