//! Intertwiner-space linear algebra.
//!
//! The engine works on *paired matrix families*: lists `(A_i, B_i)` of
//! generators acting on a source and a target space. An intertwiner is an
//! operator `T` with `T A_i = B_i T` for all `i`; the space of intertwiners
//! is the nullspace of one stacked linear system. Quantum permutations feed
//! their support entries into this engine, the Pauli module feeds the nine
//! generator images of an evaluation representation.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, eigh, nullspace_basis, projection_meet, subprojection_defect, CMatrix, Tolerance,
};
use crate::qperm::QuantumPermutation;

/// Orthonormal (Frobenius) basis of an intertwiner space.
#[derive(Debug, Clone)]
pub struct IntertwinerBasis {
    pub source_dim: usize,
    pub target_dim: usize,
    pub basis: Vec<CMatrix>,
}

impl IntertwinerBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

fn vec_to_matrix(v: &CMatrix, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |r, c| v.get(r * cols + c, 0))
}

/// Basis of `{T : T A_i = B_i T}` for paired generator lists.
///
/// Row-major vectorisation turns each constraint into
/// `(I ⊗ A_i^T - B_i ⊗ I) vec(T) = 0`; the stacked system goes through
/// [`nullspace_basis`].
pub fn intertwiner_basis_families(
    source: &[CMatrix],
    target: &[CMatrix],
    tol: &Tolerance,
) -> Result<IntertwinerBasis> {
    if source.len() != target.len() {
        return Err(Error::Shape("generator lists must pair up".into()));
    }
    let ds = source.first().map_or(0, |m| m.rows());
    let dt = target.first().map_or(0, |m| m.rows());
    for m in source {
        if !m.is_square() || m.rows() != ds {
            return Err(Error::Shape(
                "source generators must be square of equal size".into(),
            ));
        }
    }
    for m in target {
        if !m.is_square() || m.rows() != dt {
            return Err(Error::Shape(
                "target generators must be square of equal size".into(),
            ));
        }
    }
    let unknowns = dt * ds;
    let mut blocks: Vec<CMatrix> = Vec::new();
    for (a, b) in source.iter().zip(target) {
        if a.fro_norm() == 0.0 && b.fro_norm() == 0.0 {
            continue;
        }
        // rows indexed by (r, c) of T A - B T, columns by (x, k) of T
        let block = CMatrix::from_fn(unknowns, unknowns, |rc, xk| {
            let (r, c) = (rc / ds, rc % ds);
            let (x, k) = (xk / ds, xk % ds);
            let mut v = Complex64::new(0.0, 0.0);
            if x == r {
                v += a.get(k, c);
            }
            if k == c {
                v -= b.get(r, x);
            }
            v
        });
        blocks.push(block);
    }
    if blocks.is_empty() {
        // No constraints: everything intertwines.
        let basis = (0..unknowns)
            .map(|i| {
                let mut v = CMatrix::zeros(unknowns, 1);
                v.set(i, 0, Complex64::new(1.0, 0.0));
                vec_to_matrix(&v, dt, ds)
            })
            .collect();
        return Ok(IntertwinerBasis {
            source_dim: ds,
            target_dim: dt,
            basis,
        });
    }
    let total_rows: usize = blocks.len() * unknowns;
    let mut stacked = CMatrix::zeros(total_rows, unknowns);
    for (bi, block) in blocks.iter().enumerate() {
        for r in 0..unknowns {
            for c in 0..unknowns {
                stacked.set(bi * unknowns + r, c, block.get(r, c));
            }
        }
    }
    let null = nullspace_basis(&stacked, tol);
    let basis = null.iter().map(|v| vec_to_matrix(v, dt, ds)).collect();
    Ok(IntertwinerBasis {
        source_dim: ds,
        target_dim: dt,
        basis,
    })
}

/// Support entries of two quantum permutations over their joint support,
/// paired position by position.
fn paired_generators(
    sigma: &QuantumPermutation,
    tau: &QuantumPermutation,
) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let support: BTreeSet<u64> = sigma.support().union(tau.support()).copied().collect();
    let mut source = Vec::new();
    let mut target = Vec::new();
    for &x in &support {
        for &y in &support {
            let a = sigma.entry(x, y);
            let b = tau.entry(x, y);
            if a.fro_norm() == 0.0 && b.fro_norm() == 0.0 {
                continue;
            }
            source.push(a);
            target.push(b);
        }
    }
    (source, target)
}

/// Basis of intertwiners `T u^σ_xy = u^τ_xy T` over the joint support.
/// Tail pairs intertwine automatically and are skipped.
pub fn intertwiner_space(
    sigma: &QuantumPermutation,
    tau: &QuantumPermutation,
    tol: &Tolerance,
) -> Result<IntertwinerBasis> {
    if sigma.index_set() != tau.index_set() {
        return Err(Error::Domain("index set mismatch".into()));
    }
    let (source, target) = paired_generators(sigma, tau);
    if source.is_empty() {
        // Both trivial on the support: intertwiners are all linear maps.
        return intertwiner_basis_families(
            &[CMatrix::identity(sigma.dim())],
            &[CMatrix::identity(tau.dim())],
            tol,
        );
    }
    intertwiner_basis_families(&source, &target, tol)
}

pub fn is_irreducible(sigma: &QuantumPermutation, tol: &Tolerance) -> Result<bool> {
    Ok(intertwiner_space(sigma, sigma, tol)?.dim() == 1)
}

/// Tries to produce a unitary intertwiner from a (deterministically seeded)
/// combination of the intertwiner basis, unitarised by the polar
/// decomposition. Returns `None` when no unitary intertwiner exists.
pub fn unitarily_equivalent(
    sigma: &QuantumPermutation,
    tau: &QuantumPermutation,
    tol: &Tolerance,
) -> Result<Option<CMatrix>> {
    if sigma.index_set() != tau.index_set() {
        return Err(Error::Domain("index set mismatch".into()));
    }
    if sigma.dim() != tau.dim() {
        return Ok(None);
    }
    let (source, target) = paired_generators(sigma, tau);
    unitary_intertwiner_families(&source, &target, tol)
}

/// Family-level version of [`unitarily_equivalent`].
pub fn unitary_intertwiner_families(
    source: &[CMatrix],
    target: &[CMatrix],
    tol: &Tolerance,
) -> Result<Option<CMatrix>> {
    let ds = source.first().map_or(0, |m| m.rows());
    let dt = target.first().map_or(0, |m| m.rows());
    if ds != dt {
        return Ok(None);
    }
    if ds == 0 {
        return Ok(Some(CMatrix::zeros(0, 0)));
    }
    // Fast path: the identity already intertwines.
    let id = CMatrix::identity(ds);
    if intertwining_residual(&id, source, target) <= 10.0 * tol.eps_null {
        return Ok(Some(id));
    }
    let basis = intertwiner_basis_families(source, target, tol)?.basis;
    if basis.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x71E0);
    for _ in 0..8 {
        let mut cand = CMatrix::zeros(dt, ds);
        for t in &basis {
            let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            cand = cand.add(&t.scale(coeff));
        }
        if let Some(u) = polar_unitary(&cand) {
            let unit_defect = u.adjoint().mul(&u).sub(&id).fro_norm();
            let res = intertwining_residual(&u, source, target);
            if unit_defect <= 1e-6 && res <= 10.0 * tol.eps_null.max(1e-9) {
                return Ok(Some(u));
            }
        }
    }
    Ok(None)
}

fn intertwining_residual(t: &CMatrix, source: &[CMatrix], target: &[CMatrix]) -> f64 {
    source
        .iter()
        .zip(target)
        .map(|(a, b)| t.mul(a).sub(&b.mul(t)).fro_norm())
        .fold(0.0, f64::max)
}

/// Polar factor `U = M (M^* M)^{-1/2}`; `None` when `M` is numerically singular.
fn polar_unitary(m: &CMatrix) -> Option<CMatrix> {
    let h = m.adjoint().mul(m);
    let (vals, vecs) = eigh(&h);
    let max = vals.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 || vals.iter().any(|&v| v < 1e-12 * max) {
        return None;
    }
    let n = vals.len();
    let inv_sqrt = CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(1.0 / vals[r].sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Some(m.mul(&vecs).mul(&inv_sqrt).mul(&vecs.adjoint()))
}

/// Isometries onto the invariant subspaces of a family of matrices, found by
/// splitting along the spectral projections of a random self-adjoint element
/// of the commutant. Recursion stops at irreducible blocks. Deterministic
/// for a fixed seed.
pub fn invariant_splitting(mats: &[CMatrix], tol: &Tolerance, seed: u64) -> Result<Vec<CMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mats.first().map_or(0, |m| m.rows());
    let root = CMatrix::identity(dim);
    let mut leaves = Vec::new();
    split_recursive(mats, &root, tol, &mut rng, &mut leaves)?;
    Ok(leaves)
}

const EIGENVALUE_GAP: f64 = 1e-6;

fn split_recursive(
    mats: &[CMatrix],
    isometry: &CMatrix,
    tol: &Tolerance,
    rng: &mut ChaCha8Rng,
    leaves: &mut Vec<CMatrix>,
) -> Result<()> {
    let compressed: Vec<CMatrix> = mats
        .iter()
        .map(|m| isometry.adjoint().mul(m).mul(isometry))
        .collect();
    let commutant = intertwiner_basis_families(&compressed, &compressed, tol)?.basis;
    if commutant.len() <= 1 {
        leaves.push(isometry.clone());
        return Ok(());
    }
    let k = isometry.cols();
    for _attempt in 0..16 {
        let mut c = CMatrix::zeros(k, k);
        for t in &commutant {
            let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            c = c.add(&t.scale(coeff));
        }
        let c = c.add(&c.adjoint()).scale(Complex64::new(0.5, 0.0));
        let (vals, vecs) = eigh(&c);
        // cluster eigenvalues by gap
        let mut clusters: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..=vals.len() {
            if i == vals.len() || vals[i] - vals[i - 1] > EIGENVALUE_GAP {
                clusters.push((start, i));
                start = i;
            }
        }
        if clusters.len() <= 1 {
            continue; // essentially scalar sample, retry
        }
        for &(a, b) in &clusters {
            let sub = CMatrix::from_fn(k, b - a, |r, c2| vecs.get(r, a + c2));
            let composed = isometry.mul(&sub);
            split_recursive(mats, &composed, tol, rng, leaves)?;
        }
        return Ok(());
    }
    Err(Error::Consistency(
        "commutant sampling failed to split a reducible family".into(),
    ))
}

/// Decomposition into irreducibles with multiplicities.
///
/// The returned pieces pass [`is_irreducible`]; the direct sum of the pieces
/// (with multiplicity) is unitarily equivalent to the input.
pub fn decompose(
    sigma: &QuantumPermutation,
    tol: &Tolerance,
    seed: u64,
) -> Result<Vec<(QuantumPermutation, usize)>> {
    let support = sigma.support().clone();
    let mats: Vec<CMatrix> = sigma
        .generator_list(&support)
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    let mats = if mats.is_empty() {
        vec![CMatrix::identity(sigma.dim())]
    } else {
        mats
    };
    let leaves = invariant_splitting(&mats, tol, seed)?;
    let mut pieces: Vec<QuantumPermutation> = Vec::new();
    for iso in &leaves {
        let mut entries = std::collections::BTreeMap::new();
        for &x in &support {
            for &y in &support {
                let m = iso.adjoint().mul(&sigma.entry(x, y)).mul(iso);
                if m.fro_norm() > 0.0 {
                    entries.insert((x, y), m);
                }
            }
        }
        pieces.push(QuantumPermutation::from_parts(
            sigma.index_set(),
            iso.cols(),
            support.clone(),
            entries,
        )?);
    }
    // group by unitary equivalence
    let mut grouped: Vec<(QuantumPermutation, usize)> = Vec::new();
    'outer: for piece in pieces {
        for (rep, mult) in grouped.iter_mut() {
            if unitarily_equivalent(rep, &piece, tol)?.is_some() {
                *mult += 1;
                continue 'outer;
            }
        }
        grouped.push((piece, 1));
    }
    Ok(grouped)
}

// ---------------------------------------------------------------------------
// Projection-chain audit for windowed families on the integer line graph.
// ---------------------------------------------------------------------------

/// Windowed projection family `u_{i,j}` for `|i|, |j| <= radius` on the unit
/// distance graph of the integers.
#[derive(Debug, Clone)]
pub struct LineWindow {
    radius: i64,
    dim: usize,
    entries: std::collections::BTreeMap<(i64, i64), CMatrix>,
}

impl LineWindow {
    pub fn new(radius: i64, dim: usize) -> Self {
        LineWindow {
            radius,
            dim,
            entries: std::collections::BTreeMap::new(),
        }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn set(&mut self, i: i64, j: i64, m: CMatrix) {
        assert!(i.abs() <= self.radius && j.abs() <= self.radius);
        assert!(m.rows() == self.dim && m.cols() == self.dim);
        self.entries.insert((i, j), m);
    }

    pub fn entry(&self, i: i64, j: i64) -> CMatrix {
        self.entries
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.dim, self.dim))
    }

    /// Windowed restriction of the classical shift `i -> i + 1`.
    pub fn classical_shift(radius: i64) -> Self {
        let mut w = LineWindow::new(radius, 1);
        for j in -radius..=radius {
            if (j + 1).abs() <= radius {
                w.set(j + 1, j, CMatrix::identity(1));
            }
        }
        w
    }

    /// Windowed restriction of the reflection `i -> -i`.
    pub fn classical_reflection(radius: i64) -> Self {
        let mut w = LineWindow::new(radius, 1);
        for j in -radius..=radius {
            w.set(-j, j, CMatrix::identity(1));
        }
        w
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub step: String,
    pub ok: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineAuditReport {
    pub precondition_ok: bool,
    pub precondition_failure: Option<String>,
    pub steps: Vec<StepReport>,
    pub ok: bool,
}

/// Audits the projection-chain argument showing that a quantum automorphism
/// of the integer line graph has commuting entries, step by step, on a
/// windowed family.
///
/// The magic and adjacency relations (and the distance-vanishing products
/// they imply for genuine quantum automorphisms) are treated as
/// preconditions; each derivable claim of the chain is then checked as an
/// orthogonal decomposition, a subprojection or a meet identity at
/// `eps_proj`. Audited claims cover the base case around the origin and the
/// induction up to `|i| = |j| = n_max`.
pub fn audit_line_steps(win: &LineWindow, n_max: i64, tol: &Tolerance) -> Result<LineAuditReport> {
    if n_max < 1 {
        return Err(Error::Domain("audit radius must be at least 1".into()));
    }
    if win.radius() < n_max + 2 {
        return Err(Error::Domain(format!(
            "window radius {} too small for audit radius {} (need n_max + 2)",
            win.radius(),
            n_max
        )));
    }

    let mut report = LineAuditReport {
        precondition_ok: true,
        precondition_failure: None,
        steps: Vec::new(),
        ok: true,
    };
    let reach = n_max + 1;
    let id = CMatrix::identity(win.dim);

    {
        let mut precondition = |name: String, residual: f64| {
            if residual > tol.eps_proj && report.precondition_ok {
                report.precondition_ok = false;
                report.precondition_failure = Some(format!("{name} (residual {residual:.3e})"));
            }
        };

        for i in -reach..=reach {
            for j in -reach..=reach {
                precondition(
                    format!("projection({i},{j})"),
                    linalg::projection_defect(&win.entry(i, j)),
                );
            }
        }
        for i in -reach..=reach {
            let mut row = CMatrix::zeros(win.dim, win.dim);
            let mut col = CMatrix::zeros(win.dim, win.dim);
            for j in -win.radius..=win.radius {
                row = row.add(&win.entry(i, j));
                col = col.add(&win.entry(j, i));
            }
            precondition(format!("row_sum({i})"), row.sub(&id).fro_norm());
            precondition(format!("col_sum({i})"), col.sub(&id).fro_norm());
        }
        // adjacency relation u_{i,j+1} + u_{i,j-1} = u_{i+1,j} + u_{i-1,j}
        for i in -reach..=reach {
            for j in -reach..=reach {
                let lhs = win.entry(i, j + 1).add(&win.entry(i, j - 1));
                let rhs = win.entry(i + 1, j).add(&win.entry(i - 1, j));
                precondition(format!("adjacency({i},{j})"), lhs.sub(&rhs).fro_norm());
            }
        }
        // distance-vanishing products with u_{0,0}
        for i in -reach..=reach {
            for j in -reach..=reach {
                if i.abs() != j.abs() {
                    let a = win.entry(0, 0).mul(&win.entry(i, j)).fro_norm();
                    let b = win.entry(i, j).mul(&win.entry(0, 0)).fro_norm();
                    precondition(format!("distance_vanishing({i},{j})"), a.max(b));
                }
            }
        }
    }

    if !report.precondition_ok {
        report.ok = false;
        return Ok(report);
    }

    fn push(report: &mut LineAuditReport, eps: f64, step: &str, residual: f64) {
        let ok = residual <= eps;
        if !ok {
            report.ok = false;
        }
        report.steps.push(StepReport {
            step: step.to_string(),
            ok,
            residual,
        });
    }

    let u = |i: i64, j: i64| win.entry(i, j);
    let eps = tol.eps_proj;
    let comp11 = id.sub(&u(1, 1)).sub(&u(1, -1)); // (u_{1,1} + u_{1,-1})^perp

    // d1: u_{1,1} ⊥ u_{1,-1}, so H = u_{1,1} ⊕ u_{1,-1} ⊕ complement
    push(&mut report, eps, "d1", u(1, 1).mul(&u(1, -1)).fro_norm());
    // d2: u_{-1,-1} <= u_{1,1} ⊕ complement
    push(
        &mut report,
        eps,
        "d2",
        subprojection_defect(&u(-1, -1), &u(1, 1).add(&comp11)),
    );
    // d3: u_{-1,-1} <= u_{0,0} + u_{-2,0}
    push(
        &mut report,
        eps,
        "d3",
        subprojection_defect(&u(-1, -1), &u(0, 0).add(&u(-2, 0))),
    );
    // d4: u_{-2,0} <= complement
    push(
        &mut report,
        eps,
        "d4",
        subprojection_defect(&u(-2, 0), &comp11),
    );
    // d5: u_{-1,-1} <= u_{0,0} ⊕ complement
    push(
        &mut report,
        eps,
        "d5",
        subprojection_defect(&u(-1, -1), &u(0, 0).add(&comp11)),
    );
    let m11 = projection_meet(&u(0, 0), &u(1, 1), tol)?;
    let m1m = projection_meet(&u(0, 0), &u(1, -1), tol)?;
    // d6: u_{-1,-1} <= (u00 ∧ u11) ⊕ complement
    push(
        &mut report,
        eps,
        "d6",
        subprojection_defect(&u(-1, -1), &m11.add(&comp11)),
    );
    // d7: u_{-1,1} <= (u00 ∧ u1-1) ⊕ complement
    push(
        &mut report,
        eps,
        "d7",
        subprojection_defect(&u(-1, 1), &m1m.add(&comp11)),
    );
    // d8: u_{-1,1} ⊕ u_{-1,-1} <= (u00∧u11) ⊕ (u00∧u1-1) ⊕ complement
    push(
        &mut report,
        eps,
        "d8",
        subprojection_defect(&u(-1, 1).add(&u(-1, -1)), &m11.add(&m1m).add(&comp11)),
    );
    // d10: u00 <= (u00∧u11) ⊕ (u00∧u1-1)
    push(
        &mut report,
        eps,
        "d10",
        subprojection_defect(&u(0, 0), &m11.add(&m1m)),
    );
    let n11 = projection_meet(&u(2, 0), &u(1, 1), tol)?;
    let n1m = projection_meet(&u(2, 0), &u(1, -1), tol)?;
    // d11: u20 <= (u20∧u11) ⊕ (u20∧u1-1)
    push(
        &mut report,
        eps,
        "d11",
        subprojection_defect(&u(2, 0), &n11.add(&n1m)),
    );
    // equality throughout the chain, and the commutation it forces
    let lhs = m11.add(&m1m).add(&n11).add(&n1m);
    let rhs = u(1, 1).add(&u(1, -1));
    let mut final_res = lhs.sub(&rhs).fro_norm();
    for (i, j) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        final_res = final_res.max(u(0, 0).commutator(&u(i, j)).fro_norm());
    }
    push(&mut report, eps, "final", final_res);

    // induction levels: commutation of u00 with all |i| = |j| = n
    for n in 2..=n_max {
        let mut res = 0.0f64;
        for (i, j) in [(n, n), (n, -n), (-n, n), (-n, -n)] {
            res = res.max(u(0, 0).commutator(&u(i, j)).fro_norm());
        }
        push(&mut report, eps, &format!("ind{n}"), res);
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qperm::{IndexSet, Perm};
    use std::collections::BTreeMap;

    fn naturals() -> IndexSet {
        IndexSet::Naturals
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn classical(text: &str) -> QuantumPermutation {
        QuantumPermutation::from_permutation(naturals(), &Perm::parse(text).unwrap()).unwrap()
    }

    fn two_block(p: CMatrix, q: CMatrix) -> QuantumPermutation {
        let dim = q.rows();
        let mut entries = BTreeMap::new();
        entries.insert((0u64, 0u64), p.clone());
        entries.insert((0, 1), p.complement());
        entries.insert((1, 0), p.complement());
        entries.insert((1, 1), p);
        entries.insert((2, 2), q.clone());
        entries.insert((2, 3), q.complement());
        entries.insert((3, 2), q.complement());
        entries.insert((3, 3), q);
        QuantumPermutation::from_parts(
            naturals(),
            dim,
            [0u64, 1, 2, 3].into_iter().collect(),
            entries,
        )
        .unwrap()
    }

    #[test]
    fn classical_self_intertwiners_are_scalars() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let basis = intertwiner_space(&sigma, &sigma, &t).unwrap();
        assert_eq!(basis.dim(), 1);
        assert!(is_irreducible(&sigma, &t).unwrap());
    }

    #[test]
    fn distinct_classicals_have_no_intertwiners() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let tau = classical("(0 1)");
        assert_eq!(intertwiner_space(&sigma, &tau, &t).unwrap().dim(), 0);
        assert!(unitarily_equivalent(&sigma, &tau, &t).unwrap().is_none());
    }

    #[test]
    fn double_of_irreducible_has_commutant_dimension_four() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let double = sigma.direct_sum(&sigma).unwrap();
        assert_eq!(intertwiner_space(&double, &double, &t).unwrap().dim(), 4);
        assert!(!is_irreducible(&double, &t).unwrap());
    }

    #[test]
    fn adjoint_bijection_between_hom_spaces() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block(p, q);
        let tau = classical("(0 1)").direct_sum(&classical("(2 3)")).unwrap();
        let ab = intertwiner_space(&sigma, &tau, &t).unwrap().dim();
        let ba = intertwiner_space(&tau, &sigma, &t).unwrap().dim();
        assert_eq!(ab, ba);
    }

    #[test]
    fn basis_elements_intertwine_within_tolerance() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block(p, q);
        let basis = intertwiner_space(&sigma, &sigma, &t).unwrap();
        for b in &basis.basis {
            for &x in sigma.support() {
                for &y in sigma.support() {
                    let res = b
                        .mul(&sigma.entry(x, y))
                        .sub(&sigma.entry(x, y).mul(b))
                        .fro_norm();
                    assert!(res <= 10.0 * t.eps_null);
                }
            }
        }
    }

    #[test]
    fn unitary_equivalence_with_self_is_identity() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let u = unitarily_equivalent(&sigma, &sigma, &t).unwrap().unwrap();
        assert!(u.approx_eq(&CMatrix::identity(1), 1e-9));
    }

    #[test]
    fn recovers_unitary_after_conjugation() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block(p, q);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = linalg::random_unitary(2, &mut rng);
        let mut entries = BTreeMap::new();
        for &x in sigma.support() {
            for &y in sigma.support() {
                let m = v.mul(&sigma.entry(x, y)).mul(&v.adjoint());
                if m.fro_norm() > 0.0 {
                    entries.insert((x, y), m);
                }
            }
        }
        let conj =
            QuantumPermutation::from_parts(naturals(), 2, sigma.support().clone(), entries)
                .unwrap();
        let u = unitarily_equivalent(&sigma, &conj, &t)
            .unwrap()
            .expect("equivalent");
        assert!(u.adjoint().mul(&u).approx_eq(&CMatrix::identity(2), 1e-8));
        for &x in sigma.support() {
            for &y in sigma.support() {
                let res = u
                    .mul(&sigma.entry(x, y))
                    .sub(&conj.entry(x, y).mul(&u))
                    .fro_norm();
                assert!(res < 1e-7, "intertwining residual {res}");
            }
        }
    }

    #[test]
    fn decompose_classical_is_itself() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let parts = decompose(&sigma, &t, 0).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].1, 1);
        assert!(parts[0].0.approx_eq(&sigma, 1e-10));
    }

    #[test]
    fn decompose_double_has_multiplicity_two() {
        let t = tol();
        let sigma = classical("(0 1 2)");
        let double = sigma.direct_sum(&sigma).unwrap();
        let parts = decompose(&double, &t, 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].1, 2);
        assert!(is_irreducible(&parts[0].0, &t).unwrap());
    }

    #[test]
    fn multiplicity_squares_sum_to_commutant_dimension() {
        let t = tol();
        let a = classical("(0 1)");
        let b = classical("(0 1 2)");
        let sigma = a.direct_sum(&a).unwrap().direct_sum(&b).unwrap();
        let parts = decompose(&sigma, &t, 2).unwrap();
        let sum: usize = parts.iter().map(|(_, m)| m * m).sum();
        let commutant = intertwiner_space(&sigma, &sigma, &t).unwrap().dim();
        assert_eq!(sum, commutant);
    }

    #[test]
    fn decompose_then_resum_is_equivalent_to_original() {
        let t = tol();
        let p = CMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sigma = two_block(p, q).direct_sum(&classical("(0 1)")).unwrap();
        let parts = decompose(&sigma, &t, 3).unwrap();
        let mut resum: Option<QuantumPermutation> = None;
        for (piece, mult) in &parts {
            for _ in 0..*mult {
                resum = Some(match resum {
                    None => piece.clone(),
                    Some(acc) => acc.direct_sum(piece).unwrap(),
                });
            }
        }
        let resum = resum.unwrap();
        let u = unitarily_equivalent(&sigma, &resum, &t)
            .unwrap()
            .expect("equivalent");
        for &x in sigma.support() {
            for &y in sigma.support() {
                let res = u
                    .mul(&sigma.entry(x, y))
                    .sub(&resum.entry(x, y).mul(&u))
                    .fro_norm();
                assert!(res <= 1e-8);
            }
        }
    }

    #[test]
    fn audit_passes_for_shift_and_reflection() {
        let t = tol();
        for win in [
            LineWindow::classical_shift(8),
            LineWindow::classical_reflection(8),
        ] {
            let report = audit_line_steps(&win, 6, &t).unwrap();
            assert!(report.precondition_ok);
            assert!(
                report.ok,
                "failing step: {:?}",
                report.steps.iter().find(|s| !s.ok)
            );
            assert!(report.steps.iter().all(|s| s.ok));
        }
    }

    #[test]
    fn audit_rejects_relation_violation_at_precondition() {
        let t = tol();
        // classical shift with u_{1,0} and u_{1,2} swapped in row 1: rows and
        // columns remain partitions but the adjacency relation breaks
        let mut win = LineWindow::classical_shift(8);
        win.set(1, 0, CMatrix::zeros(1, 1));
        win.set(1, 2, CMatrix::identity(1));
        win.set(3, 2, CMatrix::zeros(1, 1));
        win.set(3, 0, CMatrix::identity(1));
        let report = audit_line_steps(&win, 6, &t).unwrap();
        assert!(!report.precondition_ok);
        assert!(!report.ok);
        assert!(report.steps.is_empty());
        assert!(report
            .precondition_failure
            .as_deref()
            .unwrap()
            .contains("adjacency")
            || report
                .precondition_failure
                .as_deref()
                .unwrap()
                .contains("distance"));
    }
}
