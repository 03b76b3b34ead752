//! Dense complex matrix kernel with tolerance policy.
//!
//! All other modules express their operator data through [`CMatrix`]; the
//! projection tests, the lattice meet and the nullspace computation here are
//! the only numerical primitives the rest of the crate relies on.

mod eigh;

pub use eigh::eigh;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance policy shared by every numerical check in the crate.
///
/// `eps_proj` bounds projection defects, `eps_null` is the relative
/// singular-value cutoff for nullspaces, `eps_equal` bounds entrywise
/// equality of matrices that are algebraically equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub eps_proj: f64,
    pub eps_null: f64,
    pub eps_equal: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps_proj: 1e-9,
            eps_null: 1e-8,
            eps_equal: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(eps_proj: f64, eps_null: f64, eps_equal: f64) -> Result<Self> {
        let t = Tolerance {
            eps_proj,
            eps_null,
            eps_equal,
        };
        t.validate()?;
        Ok(t)
    }

    /// Uniform scaling of the default policy, used by the `--tol` CLI flag.
    pub fn scaled(eps_proj: f64) -> Result<Self> {
        let d = Tolerance::default();
        let f = eps_proj / d.eps_proj;
        Tolerance::new(eps_proj, d.eps_null * f, d.eps_equal * f)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_equal > 0.0
            && self.eps_equal <= self.eps_null
            && self.eps_null <= self.eps_proj
            && self.eps_proj <= 1e-3;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid tolerance policy: 0 < eps_equal ({}) <= eps_null ({}) <= eps_proj ({}) <= 1e-3 required",
                self.eps_equal, self.eps_null, self.eps_proj
            )))
        }
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl std::fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self.get(r, c);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn scalar(n: usize, z: Complex64) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, z);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, f(r, c));
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nc) {
            return Err(Error::Shape("ragged row lengths".into()));
        }
        let mut m = CMatrix::zeros(nr, nc);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, z) in row.into_iter().enumerate() {
                m.set(r, c, z);
            }
        }
        Ok(m)
    }

    /// Real matrix helper, mostly for tests and fixtures.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        CMatrix::from_fn(nr, nc, |r, c| Complex64::new(rows[r][c], 0.0))
    }

    /// Column vector from a slice.
    pub fn col_vector(v: &[Complex64]) -> Self {
        let mut m = CMatrix::zeros(v.len(), 1);
        for (i, z) in v.iter().enumerate() {
            m.set(i, 0, *z);
        }
        m
    }

    /// Rank-one projection onto the span of a (nonzero) vector.
    pub fn projection_onto(v: &[Complex64]) -> Self {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        CMatrix::from_fn(v.len(), v.len(), |r, c| v[r] * v[c].conj() / n2)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, z: Complex64) {
        self.data[r * self.cols + c] = z;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    let v = out.get(r, c) + a * other.get(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, z: Complex64) -> CMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= z;
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> CMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.conj();
        }
        out
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(
                            r1 * other.rows + r2,
                            c1 * other.cols + c2,
                            a * other.get(r2, c2),
                        );
                    }
                }
            }
        }
        out
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows + other.rows, self.cols + other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c));
            }
        }
        for r in 0..other.rows {
            for c in 0..other.cols {
                out.set(self.rows + r, self.cols + c, other.get(r, c));
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `tr(self^* other)`.
    pub fn fro_inner(&self, other: &CMatrix) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &CMatrix, eps: f64) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.sub(other).fro_norm() <= eps
    }

    pub fn is_zero(&self, eps: f64) -> bool {
        self.fro_norm() <= eps
    }

    /// `I - self` for square matrices.
    pub fn complement(&self) -> CMatrix {
        assert!(self.is_square());
        CMatrix::identity(self.rows).sub(self)
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

// External JSON form: {"rows":n,"cols":m,"data":[[re,im],...]}, row-major.
#[derive(Serialize, Deserialize)]
struct CMatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<(f64, f64)>,
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CMatrixRepr {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| (z.re, z.im)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CMatrixRepr::deserialize(deserializer)?;
        if repr.data.len() != repr.rows * repr.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data length {} does not match {}x{}",
                repr.data.len(),
                repr.rows,
                repr.cols
            )));
        }
        let m = CMatrix {
            rows: repr.rows,
            cols: repr.cols,
            data: repr
                .data
                .into_iter()
                .map(|(re, im)| Complex64::new(re, im))
                .collect(),
        };
        if !m.is_finite() {
            return Err(serde::de::Error::custom("non-finite matrix entry"));
        }
        Ok(m)
    }
}

fn require_projection(m: &CMatrix, tol: &Tolerance, what: &str) -> Result<()> {
    if !is_projection(m, tol)? {
        return Err(Error::Domain(format!("{what} is not a projection")));
    }
    Ok(())
}

/// True iff `m` is an orthogonal projection up to `eps_proj` in Frobenius norm.
pub fn is_projection(m: &CMatrix, tol: &Tolerance) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "projection test needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let idem = m.mul(m).sub(m).fro_norm();
    let herm = m.sub(&m.adjoint()).fro_norm();
    Ok(idem <= tol.eps_proj && herm <= tol.eps_proj)
}

/// Defect of `m` from being a projection (max of the idempotency and
/// self-adjointness residuals); used by validation reports.
pub fn projection_defect(m: &CMatrix) -> f64 {
    let idem = m.mul(m).sub(m).fro_norm();
    let herm = m.sub(&m.adjoint()).fro_norm();
    idem.max(herm)
}

/// True iff `p <= q` as projections, i.e. `q p = p` up to `eps_proj`.
pub fn is_subprojection(p: &CMatrix, q: &CMatrix, tol: &Tolerance) -> Result<bool> {
    require_projection(p, tol, "first argument of subprojection test")?;
    require_projection(q, tol, "second argument of subprojection test")?;
    if p.rows() != q.rows() {
        return Err(Error::Shape("subprojection test needs equal sizes".into()));
    }
    Ok(subprojection_defect(p, q) <= tol.eps_proj)
}

pub fn subprojection_defect(p: &CMatrix, q: &CMatrix) -> f64 {
    q.mul(p).sub(p).fro_norm()
}

/// Orthonormal basis of the range of a projection, from its spectral
/// decomposition (eigenvalues cluster at 0 and 1).
pub fn range_basis(p: &CMatrix) -> Vec<Vec<Complex64>> {
    let (vals, vecs) = eigh(p);
    let mut basis = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        if v >= 0.5 {
            basis.push(vecs.column(i));
        }
    }
    basis
}

/// Modified Gram-Schmidt; vectors with remaining norm below `drop_tol` are
/// discarded.
pub fn orthonormalize(vectors: &[Vec<Complex64>], drop_tol: f64) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &out {
                let inner: Complex64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= inner * bi;
                }
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > drop_tol {
            for z in w.iter_mut() {
                *z /= Complex64::new(norm, 0.0);
            }
            out.push(w);
        }
    }
    out
}

/// Orthogonal projection onto `range(p) ∩ range(q)`.
///
/// Computed from orthonormal range bases: a vector lies in the intersection
/// iff it is `Bp a = Bq b`, i.e. `(a, b)` is in the nullspace of the stacked
/// system `[Bp | -Bq]`.
pub fn projection_meet(p: &CMatrix, q: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    require_projection(p, tol, "first argument of projection meet")?;
    require_projection(q, tol, "second argument of projection meet")?;
    if p.rows() != q.rows() {
        return Err(Error::Shape("projection meet needs equal sizes".into()));
    }
    let n = p.rows();
    let bp = range_basis(p);
    let bq = range_basis(q);
    if bp.is_empty() || bq.is_empty() {
        return Ok(CMatrix::zeros(n, n));
    }
    let (rp, rq) = (bp.len(), bq.len());
    let stacked = CMatrix::from_fn(n, rp + rq, |r, c| {
        if c < rp {
            bp[c][r]
        } else {
            -bq[c - rp][r]
        }
    });
    let null = nullspace_basis(&stacked, tol);
    let members: Vec<Vec<Complex64>> = null
        .iter()
        .map(|ab| {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for (j, b) in bp.iter().enumerate() {
                let coeff = ab.get(j, 0);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += coeff * bi;
                }
            }
            v
        })
        .collect();
    let basis = orthonormalize(&members, 1e-6);
    let mut meet = CMatrix::zeros(n, n);
    for b in &basis {
        meet = meet.add(&CMatrix::projection_onto(b));
    }
    Ok(meet)
}

/// Orthonormal basis of the numerical nullspace of `a`.
///
/// Singular values below `eps_null * sigma_max` are treated as zero. The
/// basis comes from the spectral decomposition of the Gram matrix `a^* a`;
/// each candidate eigenvector is classified by its direct residual `|a v|`,
/// which is far more accurate than the squared eigenvalue near zero.
pub fn nullspace_basis(a: &CMatrix, tol: &Tolerance) -> Vec<CMatrix> {
    let n = a.cols();
    if n == 0 {
        return Vec::new();
    }
    let gram = a.adjoint().mul(a);
    let (vals, vecs) = eigh(&gram);
    let sigma_max = vals.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt();
    let mut out = Vec::new();
    for (i, &lambda) in vals.iter().enumerate() {
        // Cheap pre-filter: only vectors whose Gram eigenvalue is already small
        // can have a small direct residual.
        if lambda > (100.0 * tol.eps_null * sigma_max).powi(2).max(1e-24) {
            continue;
        }
        let v = vecs.column(i);
        let av = a.apply(&v);
        let res = av.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if res <= tol.eps_null * sigma_max {
            out.push(CMatrix::col_vector(&v));
        }
    }
    out
}

/// Column count minus nullspace dimension.
pub fn numerical_rank(a: &CMatrix, tol: &Tolerance) -> usize {
    a.cols() - nullspace_basis(a, tol).len()
}

/// Haar-ish random unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl rand::Rng) -> CMatrix {
    use rand::distributions::Distribution;
    let normal = GaussianPair;
    let cols: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let (re, im) = normal.sample(rng);
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();
    let basis = orthonormalize(&cols, 1e-12);
    assert_eq!(basis.len(), n, "random matrix was singular");
    CMatrix::from_fn(n, n, |r, c| basis[c][r])
}

/// Box-Muller pair of independent standard normals.
struct GaussianPair;

impl rand::distributions::Distribution<(f64, f64)> for GaussianPair {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}
