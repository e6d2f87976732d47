//! Small dense linear-algebra helpers (Lyapunov equations, LQR, spectra).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `A^T P + P A = -Q` via the Kronecker form.
pub fn lyapunov_continuous(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(A^T P) = (I kron A^T) vec(P), vec(P A) = (A^T kron I) vec(P)
    let at = a.transpose();
    let m = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("continuous Lyapunov operator".into()))?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok(symmetrize(&p))
}

/// Solve `F^T S F - S = -Q`.
pub fn lyapunov_discrete(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let ft = f.transpose();
    let m = ft.kronecker(&ft) - DMatrix::<f64>::identity(n * n, n * n);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("discrete Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Ratio of extreme eigenvalues of a symmetric positive definite matrix.
pub fn condition_number_spd(p: &DMatrix<f64>) -> f64 {
    let e = symmetrize(p).symmetric_eigenvalues();
    e.max() / e.min()
}

/// Single-input pole placement (Ackermann). Returns `K` with `eig(A - B K)` at `poles`.
pub fn place_single_input(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut ctrb = DMatrix::<f64>::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * &col;
    }
    let inv = ctrb
        .try_inverse()
        .ok_or_else(|| Error::NotStabilizable("controllability matrix is singular".into()))?;
    // Desired characteristic polynomial evaluated at A.
    let mut phi = DMatrix::<f64>::identity(n, n);
    for &p in poles {
        phi = &phi * (a - DMatrix::<f64>::identity(n, n) * p);
    }
    let last = inv.row(n - 1).into_owned();
    let k = last * phi;
    Ok(DMatrix::from_iterator(1, n, k.iter().copied()))
}

/// Continuous-time LQR for `x' = A x + B u`, cost `x^T Q x + u^T R u`.
/// Returns `K` such that `u = -K x` is optimal, together with the Riccati solution.
pub fn lqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("input weight".into()))?;
    // Stabilising seed. Newton-Kleinman then converges monotonically.
    let shift = spectral_abscissa(a).max(0.0) + 1.0;
    let mut k = if spectral_abscissa(a) < -1e-9 {
        DMatrix::<f64>::zeros(b.ncols(), n)
    } else if b.ncols() == 1 {
        let poles: Vec<f64> = (0..n).map(|i| -shift * (1.0 + 0.25 * i as f64)).collect();
        place_single_input(a, &b.column(0).into_owned(), &poles)?
    } else {
        // Shifted Lyapunov seed for multi-input systems.
        let as_ = a + DMatrix::<f64>::identity(n, n) * shift;
        let x = lyapunov_continuous(&(-as_.transpose()), &(b * &r_inv * b.transpose()))?;
        let x_inv = x.try_inverse().ok_or_else(|| Error::NotStabilizable("gramian".into()))?;
        &r_inv * b.transpose() * x_inv
    };
    if spectral_abscissa(&(a - b * &k)) >= 0.0 {
        return Err(Error::NotStabilizable("no stabilising seed".into()));
    }
    let mut p = DMatrix::<f64>::zeros(n, n);
    for _ in 0..100 {
        let acl = a - b * &k;
        let qk = q + k.transpose() * r * &k;
        let p_next = lyapunov_continuous(&acl, &qk)?;
        let k_next = &r_inv * b.transpose() * &p_next;
        let dk = (&k_next - &k).amax();
        p = p_next;
        k = k_next;
        if dk < 1e-13 * (1.0 + k.amax()) {
            break;
        }
    }
    let res = a.transpose() * &p + &p * a - &p * b * &r_inv * b.transpose() * &p + q;
    if res.amax() > 1e-8 * (1.0 + p.amax()) {
        return Err(Error::NotStabilizable(format!("Riccati residual {:.2e}", res.amax())));
    }
    Ok((k, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn continuous_lyapunov_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let q = DMatrix::<f64>::identity(3, 3);
        let p = lyapunov_continuous(&a, &q).unwrap();
        let res = a.transpose() * &p + &p * &a + &q;
        assert!(res.amax() < 1e-12);
        assert!(min_eigenvalue_sym(&p) > 0.0);
    }

    #[test]
    fn discrete_lyapunov_residual() {
        let f = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.7]);
        let q = DMatrix::<f64>::identity(2, 2);
        let s = lyapunov_discrete(&f, &q).unwrap();
        let res = f.transpose() * &s * &f - &s + &q;
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn double_integrator_lqr() {
        // Known closed form: K = [1, sqrt(3)] for Q = I, R = 1.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let (k, _) = lqr(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(k[(0, 1)], 3f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn ackermann_places_poles() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5]);
        let b = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let k = place_single_input(&a, &b, &[-1.0, -2.0, -3.0]).unwrap();
        let bk = DMatrix::from_column_slice(3, 1, b.as_slice()) * &k;
        let mut e: Vec<f64> = (a - bk).complex_eigenvalues().iter().map(|c| c.re).collect();
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_abs_diff_eq!(e[0], -3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(e[2], -1.0, epsilon = 1e-8);
    }
}
