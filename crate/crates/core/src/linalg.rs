//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pinv(m: &CMat) -> CMat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMat::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMat::zeros(cols, rows);
    }
    let tol = rows.max(cols) as f64 * f64::EPSILON * smax;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut out = CMat::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let vi = v_t.row(i).adjoint();
            let ui = u.column(i).adjoint();
            out += (vi * ui).unscale(s);
        }
    }
    out
}

/// `V f(Λ) Vᴴ` for a Hermitian matrix; `f` receives each eigenvalue.
pub fn hermitian_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let eig = m.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = f(lambda);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * v.adjoint()
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect()
}

/// Symmetric PSD square root of a real symmetric matrix; negative eigenvalues are clipped.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
    }
    &scaled * v.transpose()
}

/// Multiplies `m` by `diag(d)` from the right (column scaling).
pub fn scale_columns(m: &CMat, d: &CVec) -> CMat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut state = seed;
        CMat::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            Complex64::new(a, b)
        })
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(1.0).abs() < 1e-15);
        assert_relative_eq!(sinc(0.5), 2.0 / std::f64::consts::PI, epsilon = 1e-15);
    }

    #[test]
    fn pinv_penrose_conditions() {
        let a = sample(3, 5, 7);
        let p = pinv(&a);
        assert!(frobenius(&(&a * &p * &a - &a)) < 1e-12);
        assert!(frobenius(&(&p * &a * &p - &p)) < 1e-12);
        let ap = &a * &p;
        assert!(frobenius(&(ap.adjoint() - &ap)) < 1e-12);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let z = CMat::zeros(2, 3);
        assert_eq!(pinv(&z), CMat::zeros(3, 2));
    }

    #[test]
    fn hermitian_inverse_sqrt() {
        let a = sample(4, 4, 3);
        let h = &a * a.adjoint() + CMat::identity(4, 4);
        let w = hermitian_map(&h, |l| l.powf(-0.5));
        let id = &w * &h * w.adjoint();
        assert!(frobenius(&(id - CMat::identity(4, 4))) < 1e-10);
    }
}
