//! Dense kernels: Vandermonde/DFT, polynomial roots, least squares and the
//! normalization-constrained update of the joint spectral fit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// `V[n, m] = exp(-j 2 pi n m / rows)`, `rows x cols`.
pub fn vandermonde(rows: usize, cols: usize) -> CMatrix {
    let z = -2.0 * std::f64::consts::PI / rows as f64;
    // reduce n*m mod rows so large products keep full phase accuracy
    CMatrix::from_fn(rows, cols, |n, m| {
        Complex64::from_polar(1.0, z * ((n * m) % rows) as f64)
    })
}

/// Unnormalized forward DFT, `X[m] = sum_n x[n] exp(-j 2 pi m n / N)`.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Horner evaluation, coefficients in descending powers.
pub fn polyval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Monic polynomial with the given roots, descending powers.
pub fn expand(roots: &[Complex64]) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        p.push(Complex64::new(0.0, 0.0));
        for i in (1..p.len()).rev() {
            let prev = p[i - 1];
            p[i] -= r * prev;
        }
    }
    p
}

// Radix-2 diagonal similarity balancing (Parlett-Reinsch).
fn balance(m: &mut CMatrix) {
    let n = m.nrows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(j, i)] *= f;
                    m[(i, j)] /= f;
                }
            }
        }
    }
}

/// Roots of a polynomial (descending powers) as eigenvalues of the balanced
/// companion matrix. Leading coefficients below `1e-14` of the largest are
/// trimmed.
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let big = coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if big == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let start = coeffs.iter().position(|c| c.norm() > 1e-14 * big).unwrap();
    let p = &coeffs[start..];
    let d = p.len() - 1;
    if d == 0 {
        return Ok(vec![]);
    }
    if d == 1 {
        return Ok(vec![-p[1] / p[0]]);
    }
    let mut c = CMatrix::zeros(d, d);
    for j in 0..d {
        c[(0, j)] = -p[j + 1] / p[0];
    }
    for i in 1..d {
        c[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    balance(&mut c);
    let schur = nalgebra::linalg::Schur::new(c);
    let (_, t) = schur.unpack();
    Ok((0..d).map(|i| t[(i, i)]).collect())
}

/// Upper-triangular factor of a Householder QR of the column-major
/// `rows x cols` matrix in `a` (overwritten). Requires `rows >= cols`.
pub fn householder_r(a: &mut [Complex64], rows: usize, cols: usize) -> CMatrix {
    debug_assert!(rows >= cols && a.len() == rows * cols);
    let zero = Complex64::new(0.0, 0.0);
    let mut r = CMatrix::zeros(cols, cols);
    for j in 0..cols {
        let (head, tail) = a.split_at_mut((j + 1) * rows);
        let col = &mut head[j * rows + j..];
        let norm = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            for k in j + 1..cols {
                r[(j, k)] = tail[(k - j - 1) * rows + j];
            }
            continue;
        }
        let phase = if col[0].norm() > 0.0 { col[0] / col[0].norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        col[0] -= alpha;
        let vnorm = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in col.iter_mut() {
            *x /= vnorm;
        }
        r[(j, j)] = alpha;
        for k in j + 1..cols {
            let other = &mut tail[(k - j - 1) * rows + j..(k - j) * rows];
            let dot: Complex64 = col.iter().zip(other.iter()).fold(zero, |acc, (v, x)| acc + v.conj() * x);
            let two = dot * 2.0;
            for (x, v) in other.iter_mut().zip(col.iter()) {
                *x -= two * v;
            }
            r[(j, k)] = other[0];
        }
    }
    r
}

/// Minimum-norm least-squares solution of `A x = b`.
pub fn lstsq(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if a.nrows() != b.len() {
        return Err(Error::LengthMismatch { left: a.nrows(), right: b.len() });
    }
    if a.ncols() == 0 {
        return Ok(CVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    svd.solve(b, tol).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Minimizer of `||A h||^2` subject to `h0^H h = 1`, with the attained value.
///
/// Uses `h ∝ G^{-1} h0`, `G = A^H A`, through the SVD of `A`. Singular values
/// below `1e-12` of the largest count as null directions (exact fits), so a
/// rank-deficient `A` yields the null-space projection of `h0`. Fails with
/// `RestartNeeded` only when `h0` has no component in that null space.
pub fn constrained_minimizer(a: &CMatrix, h0: &CVector) -> Result<(CVector, f64)> {
    let p = h0.len();
    if a.ncols() != p {
        return Err(Error::LengthMismatch { left: a.ncols(), right: p });
    }
    let h0n = h0.norm();
    if h0n == 0.0 {
        return Err(Error::RestartNeeded);
    }
    let padded;
    let a = if a.nrows() < p {
        padded = a.clone().resize_vertically(p, Complex64::new(0.0, 0.0));
        &padded
    } else {
        a
    };
    // R of a tall QR has the same singular values and right vectors
    let reduced;
    let a = if a.nrows() > 2 * p {
        let mut buf = a.as_slice().to_vec();
        reduced = householder_r(&mut buf, a.nrows(), p);
        &reduced
    } else {
        a
    };
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V");
    let s = &svd.singular_values;
    let smax = s.max();
    let floor = 1e-12 * smax;
    let proj = vt * h0;
    let mut null_part = 0.0;
    let mut rank_deficient = false;
    for i in 0..p {
        if s[i] <= floor {
            rank_deficient = true;
            null_part += proj[i].norm_sqr();
        }
    }
    if rank_deficient && smax > 0.0 && null_part < 1e-24 * h0n * h0n {
        return Err(Error::RestartNeeded);
    }
    let mut w = proj;
    for i in 0..p {
        let si = s[i].max(floor);
        w[i] /= if si > 0.0 { Complex64::new(si * si, 0.0) } else { Complex64::new(1.0, 0.0) };
    }
    let x = vt.adjoint() * w;
    let denom = h0.dotc(&x);
    if denom.norm() == 0.0 || !denom.is_finite() {
        return Err(Error::RestartNeeded);
    }
    let h = x / denom;
    let kappa = (a * &h).norm_squared();
    Ok((h, kappa))
}

/// Same minimizer as [`constrained_minimizer`], from the Hermitian normal
/// matrix `G = A^H A` instead of `A`.
pub fn constrained_minimizer_gram(g: &CMatrix, h0: &CVector) -> Result<(CVector, f64)> {
    let p = h0.len();
    if g.nrows() != p || g.ncols() != p {
        return Err(Error::LengthMismatch { left: g.nrows(), right: p });
    }
    if h0.norm() == 0.0 {
        return Err(Error::RestartNeeded);
    }
    let eig = g.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
    let floor = 1e-24 * lmax;
    let u = &eig.eigenvectors;
    let mut w = u.adjoint() * h0;
    for i in 0..p {
        let li = eig.eigenvalues[i].max(floor);
        w[i] /= if li > 0.0 { Complex64::new(li, 0.0) } else { Complex64::new(1.0, 0.0) };
    }
    let x = u * w;
    let denom = h0.dotc(&x);
    if denom.norm() == 0.0 || !denom.is_finite() {
        return Err(Error::RestartNeeded);
    }
    let h = x / denom;
    let kappa = h.dotc(&(g * &h)).re.max(0.0);
    Ok((h, kappa))
}

#[derive(Clone, Debug)]
pub struct ConstrainedUpdate {
    pub h: CVector,
    pub q: CVector,
    /// Multiplier; equals the attained objective `||A h - B q||^2`.
    pub kappa: f64,
}

/// Minimizer of `||A h - B q||^2` subject to `h0^H h = 1`.
///
/// `q` is eliminated through a QR factorization of `B`, leaving the
/// constrained problem in `h` alone on `(I - P_B) A`.
pub fn constrained_lstsq_update(a: &CMatrix, b: &CMatrix, h0: &CVector) -> Result<ConstrainedUpdate> {
    if a.nrows() != b.nrows() {
        return Err(Error::LengthMismatch { left: a.nrows(), right: b.nrows() });
    }
    let proj_a = if b.ncols() == 0 {
        a.clone()
    } else {
        let qr = b.clone().qr();
        let r = qr.r();
        let rmax = r.diagonal().iter().fold(0.0f64, |m, x| m.max(x.norm()));
        if r.diagonal().iter().any(|x| x.norm() <= 1e-13 * rmax) || rmax == 0.0 {
            return Err(Error::RestartNeeded);
        }
        let q = qr.q();
        a - &q * (q.adjoint() * a)
    };
    let (h, kappa) = constrained_minimizer(&proj_a, h0)?;
    let q = if b.ncols() == 0 { CVector::zeros(0) } else { lstsq(b, &(a * &h))? };
    Ok(ConstrainedUpdate { h, q, kappa })
}
