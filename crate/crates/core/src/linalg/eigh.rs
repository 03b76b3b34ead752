//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Desk-scale dimensions (a few hundred at most) make Jacobi the right tool:
//! deterministic, no external LAPACK, and highly accurate eigenvectors.

use num_complex::Complex64;

use super::CMatrix;

/// Spectral decomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order together with a unitary matrix of
/// eigenvectors (as columns), so that `a ≈ V diag(vals) V^*`. The input is
/// symmetrised first; callers are expected to pass matrices that are
/// Hermitian up to roundoff.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert!(a.is_square(), "eigh needs a square matrix");
    let n = a.rows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }

    // Work on (A + A^*)/2 to remove roundoff-level asymmetry.
    let mut m = a.add(&a.adjoint()).scale(Complex64::new(0.5, 0.0));
    let mut v = CMatrix::identity(n);

    let scale = m.fro_norm().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;
    let max_sweeps = 64;

    for _ in 0..max_sweeps {
        let off = off_diagonal_norm(&m);
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                let abs = apq.norm();
                if abs <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p).re;
                let aqq = m.get(q, q).re;
                // Phase that makes the (p,q) block real symmetric.
                let w = apq.conj() / abs;
                // Classic Jacobi rotation for [[app, abs], [abs, aqq]].
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Combined unitary U = diag(1, w) * R(c, s) restricted to (p, q).
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -s * w;
                let uqq = c * w;
                // A <- U^* A U; first columns (A U), then rows (U^* A).
                for r in 0..n {
                    let arp = m.get(r, p);
                    let arq = m.get(r, q);
                    m.set(r, p, arp * upp + arq * uqp);
                    m.set(r, q, arp * upq + arq * uqq);
                }
                for cidx in 0..n {
                    let apc = m.get(p, cidx);
                    let aqc = m.get(q, cidx);
                    m.set(p, cidx, upp.conj() * apc + uqp.conj() * aqc);
                    m.set(q, cidx, upq.conj() * apc + uqq.conj() * aqc);
                }
                // V <- V U
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, vrp * upp + vrq * uqp);
                    v.set(r, q, vrp * upq + vrq * uqq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vecs = CMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    (vals, vecs)
}

fn off_diagonal_norm(m: &CMatrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                sum += m.get(r, c).norm_sqr();
            }
        }
    }
    sum.sqrt()
}
