//! Symmetric eigendecomposition by cyclic Jacobi rotations, and PSD
//! quadratic forms.

use super::Matrix;
use crate::error::{invalid, Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `eigenvectors`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub lambda0: f64,
}

impl SpectralData {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }
}

/// Symmetric eigendecomposition. The input is symmetrized as `(H + Hᵀ)/2`
/// after checking it is symmetric to `1e-9·max|H|`.
pub fn sym_eig(h: &Matrix) -> Result<SpectralData> {
    if !h.is_square() {
        return invalid(format!("sym_eig needs a square matrix, got {:?}", h.shape()));
    }
    let n = h.rows();
    if n == 0 {
        return invalid("sym_eig of an empty matrix");
    }
    if !h.is_finite() {
        return invalid("sym_eig input has non-finite entries");
    }
    let scale = h.max_abs();
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .fold(0.0_f64, |acc, (i, j)| acc.max((h[(i, j)] - h[(j, i)]).abs()));
    if asym > SYMMETRY_TOL * scale {
        return invalid(format!("matrix is not symmetric (max asymmetry {asym:.3e})"));
    }

    let mut a = h.symmetrized();
    let mut v = Matrix::identity(n);
    let target = OFF_DIAG_TOL * a.frobenius();

    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&a) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
        converged = off(&a) <= target;
    }
    if !converged {
        return Err(Error::NumericFailure {
            what: format!("Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"),
            residual: off(&a),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SpectralData { lambda0: eigenvalues[0], eigenvalues, eigenvectors })
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            let g = a[(r, p)];
            let hh = a[(r, q)];
            let rp = g - s * (hh + g * tau);
            let rq = hh + s * (g - hh * tau);
            a[(r, p)] = rp;
            a[(p, r)] = rp;
            a[(r, q)] = rq;
            a[(q, r)] = rq;
        }
    }
    for r in 0..n {
        let g = v[(r, p)];
        let hh = v[(r, q)];
        v[(r, p)] = g - s * (hh + g * tau);
        v[(r, q)] = hh + s * (g - hh * tau);
    }
}

/// `rᵀ (H + εI)⁻¹ r` with jitter `ε = 1e-10·tr(H)/n`.
///
/// Fails with [`Error::NotPsd`] when `λ_min(H) < −ε`.
pub fn psd_quadform_inv(h: &Matrix, r: &[f64]) -> Result<f64> {
    if !h.is_square() || h.rows() != r.len() {
        return invalid(format!(
            "quadratic form needs a square matrix matching r: {:?} vs {}",
            h.shape(),
            r.len()
        ));
    }
    let n = h.rows();
    let jitter = 1e-10 * h.trace() / n as f64;
    let spectral = sym_eig(h)?;
    if spectral.lambda0 < -jitter.abs() || !(jitter > 0.0) {
        return Err(Error::NotPsd { lambda_min: spectral.lambda0 });
    }

    let mut shifted = h.symmetrized();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    let l = cholesky(&shifted).ok_or(Error::NotPsd { lambda_min: spectral.lambda0 })?;
    // forward substitution L z = r; result is ‖z‖²
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = r[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    Ok(z.iter().map(|x| x * x).sum())
}

fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, matmul_tn, NoCount};

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        gaussian_matrix(n, n, 1.0, seed).unwrap().symmetrized()
    }

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let g = gaussian_matrix(n + 2, n, 1.0, seed).unwrap();
        matmul_tn(&g, &g, &mut NoCount)
    }

    /// Count of eigenvalues below `x` via Sturm-free LDLᵀ inertia (Sylvester).
    fn count_below(h: &Matrix, x: f64) -> usize {
        let n = h.rows();
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] -= x;
        }
        // symmetric Gaussian elimination without pivoting; inertia = signs of pivots
        let mut neg = 0;
        for k in 0..n {
            let mut piv = a[(k, k)];
            if piv == 0.0 {
                piv = 1e-300;
            }
            if piv < 0.0 {
                neg += 1;
            }
            for i in (k + 1)..n {
                let f = a[(i, k)] / piv;
                for j in (k + 1)..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
            }
        }
        neg
    }

    /// Independent oracle: k-th smallest eigenvalue by bisection on inertia.
    fn bisect_eigenvalue(h: &Matrix, k: usize) -> f64 {
        let bound = h.frobenius() + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(h, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn gauss_jordan_inverse(h: &Matrix) -> Matrix {
        let n = h.rows();
        let mut a = h.clone();
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
            for j in 0..n {
                let (x, y) = (a[(c, j)], a[(p, j)]);
                a[(c, j)] = y;
                a[(p, j)] = x;
                let (x, y) = (inv[(c, j)], inv[(p, j)]);
                inv[(c, j)] = y;
                inv[(p, j)] = x;
            }
            let d = a[(c, c)];
            for j in 0..n {
                a[(c, j)] /= d;
                inv[(c, j)] /= d;
            }
            for i in 0..n {
                if i != c {
                    let f = a[(i, c)];
                    for j in 0..n {
                        a[(i, j)] -= f * a[(c, j)];
                        inv[(i, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
        inv
    }

    fn cofactor_det(h: &Matrix) -> f64 {
        let n = h.rows();
        if n == 1 {
            return h[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = Matrix::from_fn(n - 1, n - 1, |r, c| {
                    h[(r + 1, if c < j { c } else { c + 1 })]
                });
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * h[(0, j)] * cofactor_det(&minor)
            })
            .sum()
    }

    fn check_invariants(h: &Matrix, s: &SpectralData) {
        let n = h.rows();
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let q = &s.eigenvectors;
        let qtq = matmul_tn(q, q, &mut NoCount);
        assert!(qtq.sub(&Matrix::identity(n)).unwrap().max_abs() <= 1e-10);
        let recon = Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| q[(i, k)] * s.eigenvalues[k] * q[(j, k)]).sum()
        });
        assert!(recon.sub(h).unwrap().max_abs() <= 1e-8 * h.max_abs().max(1e-300));
    }

    #[test]
    fn identity_and_two_by_two() {
        let s = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
        let h = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = sym_eig(&h).unwrap();
        assert!((s.eigenvalues[0] - 0.5).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 1.5).abs() < 1e-14);
        assert_eq!(s.lambda0, s.eigenvalues[0]);
        check_invariants(&h, &s);
    }

    #[test]
    fn random_matches_bisection_oracle() {
        for seed in 0..4 {
            let h = random_symmetric(8, seed);
            let s = sym_eig(&h).unwrap();
            check_invariants(&h, &s);
            for k in 0..8 {
                let want = bisect_eigenvalue(&h, k);
                assert!((s.eigenvalues[k] - want).abs() < 1e-8, "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn trace_and_determinant_identities() {
        for n in 1..=6 {
            let h = random_symmetric(n, 100 + n as u64);
            let s = sym_eig(&h).unwrap();
            let sum: f64 = s.eigenvalues.iter().sum();
            assert!((sum - h.trace()).abs() <= 1e-9 * h.trace().abs().max(1.0));
            let prod: f64 = s.eigenvalues.iter().product();
            let det = cofactor_det(&h);
            assert!((prod - det).abs() <= 1e-9 * det.abs().max(1.0), "n {n}: {prod} vs {det}");
        }
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::InvalidArgument(_))));
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(sym_eig(&h).is_err());
    }

    #[test]
    fn quadform_simple_cases() {
        let r = [3.0, 4.0];
        let v = psd_quadform_inv(&Matrix::identity(2), &r).unwrap();
        assert!((v - 25.0).abs() < 1e-8);
        let v = psd_quadform_inv(&Matrix::identity(2).scale(2.0), &r).unwrap();
        assert!((v - 12.5).abs() < 1e-8);
    }

    #[test]
    fn quadform_matches_gauss_jordan() {
        for seed in 0..5 {
            let h = random_spd(6, seed);
            let r: Vec<f64> = gaussian_matrix(1, 6, 1.0, 50 + seed).unwrap().into_vec();
            let eps = 1e-10 * h.trace() / 6.0;
            let inv = gauss_jordan_inverse(&h.add(&Matrix::identity(6).scale(eps)).unwrap());
            let want = crate::linalg::dot(&r, &inv.matvec(&r));
            let got = psd_quadform_inv(&h, &r).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn quadform_scaling() {
        let h = random_spd(5, 3);
        let r = vec![0.3, -1.0, 0.2, 0.5, 1.1];
        let base = psd_quadform_inv(&h, &r).unwrap();
        for c in [0.1, 3.0, 250.0] {
            let scaled = psd_quadform_inv(&h.scale(c), &r).unwrap();
            assert!(((scaled * c - base) / base).abs() < 1e-8);
        }
    }

    #[test]
    fn quadform_rejects_indefinite() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        match psd_quadform_inv(&h, &[1.0, 1.0]) {
            Err(Error::NotPsd { lambda_min }) => assert!((lambda_min + 1.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }
}
