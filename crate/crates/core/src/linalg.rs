//! Small dense helpers: 2x2 eigen-analysis and finite-difference Jacobians.

use num_complex::Complex64;

pub type Mat2 = [[f64; 2]; 2];

pub fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Eigenvalues from trace and determinant.
///
/// Real pairs use the cancellation-free form: the larger-magnitude root
/// first, the other as `det / lambda1`.
pub fn eigenvalues(m: &Mat2) -> [Complex64; 2] {
    let tr = trace(m);
    let dt = det(m);
    let disc = tr * tr - 4.0 * dt;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let l1 = 0.5 * (tr + if tr >= 0.0 { sq } else { -sq });
        let l2 = if l1 != 0.0 { dt / l1 } else { 0.0 };
        let (a, b) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(0.5 * tr, im), Complex64::new(0.5 * tr, -im)]
    }
}

/// Unit eigenvector for eigenvalue `lambda` of `m`.
pub fn eigenvector(m: &Mat2, lambda: Complex64) -> [Complex64; 2] {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let cand1 = [Complex64::new(b, 0.0), lambda - a];
    let cand2 = [lambda - d, Complex64::new(c, 0.0)];
    let n1 = (cand1[0].norm_sqr() + cand1[1].norm_sqr()).sqrt();
    let n2 = (cand2[0].norm_sqr() + cand2[1].norm_sqr()).sqrt();
    let (vec, n) = if n1 >= n2 { (cand1, n1) } else { (cand2, n2) };
    if n == 0.0 {
        // lambda*I: every direction works; pick the axis closest to the label
        return if (lambda - a).norm() <= (lambda - d).norm() {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
    }
    [vec[0] / n, vec[1] / n]
}

/// Central finite-difference Jacobian with step `h_j = h * max(1, |x_j|)`.
pub fn fd_jacobian<F>(f: F, x: &[f64], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let hj = h * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += hj;
        xm[j] -= hj;
        let fp = f(&xp);
        let fm = f(&xm);
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * hj))
                .collect::<Vec<_>>(),
        );
    }
    (0..n)
        .map(|i| (0..n).map(|j| cols[j][i]).collect())
        .collect()
}

/// Richardson-extrapolated central differences, accurate to roundoff for
/// low-degree polynomial fields.
pub fn richardson_jacobian<F>(f: F, x: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let h = 1e-3;
    let coarse = fd_jacobian(&f, x, h);
    let fine = fd_jacobian(&f, x, h / 2.0);
    let finer = fd_jacobian(&f, x, h / 4.0);
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let r1 = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
            let r2 = (4.0 * finer[i][j] - fine[i][j]) / 3.0;
            out[i][j] = (16.0 * r2 - r1) / 15.0;
        }
    }
    out
}
