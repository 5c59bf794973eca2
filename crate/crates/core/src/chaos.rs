//! First and second Wiener chaos over a finite orthonormal basis.
//!
//! A variable `c0 + I_1(c) + I_2(K)` is evaluated at standard Gaussian
//! coordinates `xi` as `c0 + c.xi + xi'K xi - tr K`, so `I_2(e_i (x) e_i) = xi_i^2 - 1`
//! and `I_2(e_i (x)~ e_j) = xi_i xi_j` for `i != j`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_finite_slice(values: &[f64], context: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: context.into(),
            value: *v,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstChaosVector {
    pub c: DVector<f64>,
}

impl FirstChaosVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        check_finite_slice(&c, "first-chaos coefficients")?;
        Ok(Self { c: DVector::from_vec(c) })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { c: DVector::zeros(dim) }
    }

    /// `W(e_n)`.
    pub fn basis(dim: usize, n: usize) -> Self {
        let mut c = DVector::zeros(dim);
        c[n] = 1.0;
        Self { c }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Symmetric coefficient matrix of a double integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondChaosKernel {
    k: DMatrix<f64>,
}

impl SecondChaosKernel {
    /// Symmetrizes `k`.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::DimensionMismatch {
                expected: k.nrows(),
                got: k.ncols(),
            });
        }
        check_finite_slice(k.as_slice(), "second-chaos kernel")?;
        let s = (&k + k.transpose()) * 0.5;
        Ok(Self { k: s })
    }

    /// Wrap a matrix without symmetrizing it. Only for fault-injection checks.
    pub fn new_unchecked(k: DMatrix<f64>) -> Self {
        Self { k }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { k: DMatrix::zeros(dim, dim) }
    }

    pub fn diag(values: &[f64]) -> Self {
        Self {
            k: DMatrix::from_diagonal(&DVector::from_column_slice(values)),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.k == self.k.transpose()
    }

    pub fn trace(&self) -> f64 {
        self.k.trace()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.k.norm_squared()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { k: &self.k * s }
    }

    /// `xi' K xi - tr K`.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        check_len(self.dim(), xi.len())?;
        let v = DVector::from_column_slice(xi);
        Ok(v.dot(&(&self.k * &v)) - self.trace())
    }

    /// Write the kernel as `i,j,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "value"])?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let v = self.k[(i, j)];
                if v != 0.0 {
                    out.write_record(&[i.to_string(), j.to_string(), format!("{v:e}")])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `c0 + I_1(c) + I_2(K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosVariable {
    pub c0: f64,
    pub first: FirstChaosVector,
    pub second: SecondChaosKernel,
}

impl ChaosVariable {
    pub fn new(c0: f64, first: FirstChaosVector, second: SecondChaosKernel) -> Result<Self> {
        check_len(first.dim(), second.dim())?;
        if !c0.is_finite() {
            return Err(Error::NonFinite {
                context: "chaos constant".into(),
                value: c0,
            });
        }
        Ok(Self { c0, first, second })
    }

    pub fn first_only(c: FirstChaosVector) -> Self {
        let d = c.dim();
        Self {
            c0: 0.0,
            first: c,
            second: SecondChaosKernel::zeros(d),
        }
    }

    pub fn second_only(k: SecondChaosKernel) -> Self {
        let d = k.dim();
        Self {
            c0: 0.0,
            first: FirstChaosVector::zeros(d),
            second: k,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        check_len(self.dim(), xi.len())?;
        let v = DVector::from_column_slice(xi);
        Ok(self.c0 + self.first.c.dot(&v) + self.second.eval(xi)?)
    }

    /// `D F = c + 2 K xi`.
    pub fn malliavin_d(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), xi.len())?;
        let v = DVector::from_column_slice(xi);
        let d = &self.first.c + (self.second.matrix() * &v) * 2.0;
        Ok(d.as_slice().to_vec())
    }

    /// `(-L)^{-1}`: drops `c0`, keeps `c`, halves `K`.
    pub fn inverse_l(&self) -> ChaosVariable {
        Self {
            c0: 0.0,
            first: self.first.clone(),
            second: self.second.scale(0.5),
        }
    }

    /// `D (-L)^{-1} F = c + K xi`.
    pub fn d_inverse_l(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.inverse_l().malliavin_d(xi)
    }

    pub fn expectation(&self) -> f64 {
        self.c0
    }

    /// `|c|^2 + 2 |K|_F^2`.
    pub fn variance(&self) -> f64 {
        self.first.c.norm_squared() + 2.0 * self.second.frobenius_sq()
    }
}

/// Divergence of the linear field `u(xi) = B xi`: `xi' B xi - tr B`.
pub fn divergence_linear(b: &DMatrix<f64>, xi: &[f64]) -> Result<f64> {
    check_len(b.nrows(), b.ncols())?;
    check_len(b.nrows(), xi.len())?;
    let v = DVector::from_column_slice(xi);
    Ok(v.dot(&(b * &v)) - b.trace())
}

/// `E[I_2(K1) I_2(K2)] = 2 <K1, K2>`.
pub fn isometry_inner(k1: &SecondChaosKernel, k2: &SecondChaosKernel) -> Result<f64> {
    check_len(k1.dim(), k2.dim())?;
    Ok(2.0 * k1.matrix().component_mul(k2.matrix()).sum())
}

/// Raw contraction `K1 K2` (not symmetric in general).
pub fn contract1_raw(k1: &SecondChaosKernel, k2: &SecondChaosKernel) -> Result<DMatrix<f64>> {
    check_len(k1.dim(), k2.dim())?;
    Ok(k1.matrix() * k2.matrix())
}

/// Symmetrized contraction `sym(K1 K2)`.
pub fn contract1(k1: &SecondChaosKernel, k2: &SecondChaosKernel) -> Result<SecondChaosKernel> {
    SecondChaosKernel::new(contract1_raw(k1, k2)?)
}

/// Both sides of `<D I_2(K1), D I_2(K2)> = 2 E[..] + 4 I_2(K1 (x)_1 K2)`:
/// `lhs = <2 K1 xi, 2 K2 xi>`, `rhs = 4 tr Q + 4 (xi'Q xi - tr Q)` with `Q = K1 (x)_1 K2`.
pub fn dudv_identity(q: &SecondChaosKernel, k1: &SecondChaosKernel, k2: &SecondChaosKernel, xi: &[f64]) -> Result<(f64, f64)> {
    check_len(k1.dim(), k2.dim())?;
    check_len(k1.dim(), xi.len())?;
    check_len(k1.dim(), q.dim())?;
    let v = DVector::from_column_slice(xi);
    let d1 = (k1.matrix() * &v) * 2.0;
    let d2 = (k2.matrix() * &v) * 2.0;
    let lhs = d1.dot(&d2);
    let rhs = 4.0 * q.trace() + 4.0 * q.eval(xi)?;
    Ok((lhs, rhs))
}

/// [`dudv_identity`] with the symmetrized contraction.
pub fn dudv(k1: &SecondChaosKernel, k2: &SecondChaosKernel, xi: &[f64]) -> Result<(f64, f64)> {
    let q = contract1(k1, k2)?;
    dudv_identity(&q, k1, k2, xi)
}

/// `E[(4 xi'Q xi)^2] = 16 ((tr Q)^2 + 2 |Q|_F^2)` for symmetric `Q`.
pub fn quadratic_form_second_moment(q: &SecondChaosKernel) -> f64 {
    let t = q.trace();
    16.0 * (t * t + 2.0 * q.frobenius_sq())
}

fn check_gamma(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 1 || m > n {
        return Err(Error::InvalidArgument(format!("need N >= 2 and 1 <= m <= N, got N={n}, m={m}")));
    }
    Ok(())
}

/// Kernels of `U_N = I_2(a_N)` and `V_N = I_2(b_N)` and the basis size `2N - m`.
///
/// `a_N` has `1/(N-1)` off the diagonal on indices `0..N`. `b_N` does the same on
/// `{0..m} U {N..2N-m}`, so the two share the first `m` coordinates.
pub fn build_gamma_kernels(n: usize, m: usize) -> Result<(SecondChaosKernel, SecondChaosKernel, usize)> {
    check_gamma(n, m)?;
    let dim = 2 * n - m;
    let w = 1.0 / (n - 1) as f64;
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[(i, j)] = w;
            }
        }
    }
    let g = gamma_g_indices(n, m);
    let mut b = DMatrix::zeros(dim, dim);
    for &i in &g {
        for &j in &g {
            if i != j {
                b[(i, j)] = w;
            }
        }
    }
    Ok((SecondChaosKernel { k: a }, SecondChaosKernel { k: b }, dim))
}

/// Basis slots occupied by `g_1..g_N`.
pub fn gamma_g_indices(n: usize, m: usize) -> Vec<usize> {
    (0..m).chain(n..2 * n - m).collect()
}

/// `E[U_N V_N] = 2 m (m - 1) / (N - 1)^2`.
pub fn exact_cross_moment(n: usize, m: usize) -> Result<f64> {
    check_gamma(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    Ok(2.0 * mf * (mf - 1.0) / ((nf - 1.0) * (nf - 1.0)))
}

/// Closed form `4 m (m-1) [(N-1) + (m-2)(N-2)] / (N-1)^4`, kept for comparison.
/// It overstates [`brute_contraction_norm`] (by 4 at `m = N = 3`).
pub fn contraction_norm_closed_form(n: usize, m: usize) -> Result<f64> {
    check_gamma(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    Ok(4.0 * mf * (mf - 1.0) * ((nf - 1.0) + (mf - 2.0) * (nf - 2.0)) / (nf - 1.0).powi(4))
}

/// `|A B|_F^2` from explicit matrices.
pub fn brute_contraction_norm(n: usize, m: usize) -> Result<f64> {
    let (a, b, _) = build_gamma_kernels(n, m)?;
    Ok(contract1_raw(&a, &b)?.norm_squared())
}

/// Exact second-order quantities of the Gamma pair, by counting.
///
/// Entry `(i, j)` of `A B` is `#{k < m : k != i, k != j} / (N-1)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPairMoments {
    pub n: usize,
    pub m: usize,
    /// `E[U V] = 2 tr(A B)`.
    pub cross_moment: f64,
    /// `|A B|_F^2`.
    pub contraction_norm: f64,
    /// `tr((A B)^2)`.
    pub trace_square: f64,
    /// `|sym(A B)|_F^2`.
    pub sym_norm: f64,
    /// `E[<D U, D V>^2]`.
    pub second_moment_dudv: f64,
}

pub fn gamma_pair_moments(n: usize, m: usize) -> Result<GammaPairMoments> {
    check_gamma(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    let d2 = (nf - 1.0) * (nf - 1.0);
    let d4 = d2 * d2;
    let out = nf - mf;
    let tr = mf * (mf - 1.0) / d2;
    let frob = (mf * (mf - 1.0).powi(2) + mf * (mf - 1.0) * (mf - 2.0).powi(2) + 2.0 * mf * out * (mf - 1.0).powi(2) + out * out * mf * mf) / d4;
    let trace_square = (mf * (mf - 1.0).powi(2) + mf * (mf - 1.0) * (mf - 2.0).powi(2)) / d4;
    let sym_norm = 0.5 * (frob + trace_square);
    Ok(GammaPairMoments {
        n,
        m,
        cross_moment: 2.0 * tr,
        contraction_norm: frob,
        trace_square,
        sym_norm,
        second_moment_dudv: 16.0 * (tr * tr + 2.0 * sym_norm),
    })
}

/// `E[<D U_N, D V_N>^2]`, exact.
pub fn second_moment_dudv(n: usize, m: usize) -> Result<f64> {
    Ok(gamma_pair_moments(n, m)?.second_moment_dudv)
}

/// The Gamma pair evaluated in `O(N)` from the structure `a_N = (J - I)/(N - 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPairSample {
    pub u: f64,
    pub v: f64,
    /// `2(U + 1) - <D(-L)^{-1} U, D U>`.
    pub discrepancy: f64,
    /// `<D(-L)^{-1} U, D V>`.
    pub cross: f64,
}

pub fn gamma_pair_sample(n: usize, m: usize, xi: &[f64]) -> Result<GammaPairSample> {
    check_gamma(n, m)?;
    check_len(2 * n - m, xi.len())?;
    let d = (n - 1) as f64;
    let s_a: f64 = xi[..n].iter().sum();
    let sq_a: f64 = xi[..n].iter().map(|x| x * x).sum();
    let s_g: f64 = xi[..m].iter().sum::<f64>() + xi[n..].iter().sum::<f64>();
    let sq_g: f64 = xi[..m].iter().map(|x| x * x).sum::<f64>() + xi[n..].iter().map(|x| x * x).sum::<f64>();
    let u = (s_a * s_a - sq_a) / d;
    let v = (s_g * s_g - sq_g) / d;
    // |A xi|^2 = ((N - 2) S^2 + sum xi^2) / (N - 1)^2
    let a_sq = ((n as f64 - 2.0) * s_a * s_a + sq_a) / (d * d);
    let discrepancy = 2.0 * (u + 1.0) - 2.0 * a_sq;
    let overlap: f64 = xi[..m].iter().map(|x| (s_a - x) * (s_g - x)).sum();
    let cross = 2.0 * overlap / (d * d);
    Ok(GammaPairSample { u, v, discrepancy, cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{sample_mean, standard_normal_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(dim: usize, rng: &mut ChaCha8Rng) -> SecondChaosKernel {
        let v = standard_normal_vec(rng, dim * dim);
        SecondChaosKernel::new(DMatrix::from_vec(dim, dim, v)).unwrap()
    }

    #[test]
    fn eval_examples() {
        let k = SecondChaosKernel::diag(&[1.0, 0.0, 0.0]);
        let x = ChaosVariable::second_only(k);
        assert_eq!(x.eval(&[2.0, 5.0, 1.0]).unwrap(), 3.0);
        let x = ChaosVariable::first_only(FirstChaosVector::basis(3, 0));
        assert_eq!(x.eval(&[0.7, 5.0, 1.0]).unwrap(), 0.7);
        let (a, _, _) = build_gamma_kernels(3, 3).unwrap();
        assert!((a.eval(&[1.0, 1.0, 1.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!(x.eval(&[1.0]).is_err());
    }

    #[test]
    fn derivative_examples() {
        let x = ChaosVariable::first_only(FirstChaosVector::new(vec![1.0, -2.0]).unwrap());
        assert_eq!(x.malliavin_d(&[3.0, 4.0]).unwrap(), vec![1.0, -2.0]);
        let x = ChaosVariable::second_only(SecondChaosKernel::diag(&[1.0, 0.0]));
        assert_eq!(x.malliavin_d(&[3.0, 4.0]).unwrap(), vec![6.0, 0.0]);
        let (a, _, _) = build_gamma_kernels(3, 3).unwrap();
        let d = ChaosVariable::second_only(a).malliavin_d(&[1.0, 0.0, 0.0]).unwrap();
        assert!((d[0]).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15 && (d[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = ChaosVariable::new(
                0.3,
                FirstChaosVector::new(standard_normal_vec(&mut rng, 4)).unwrap(),
                random_sym(4, &mut rng),
            )
            .unwrap();
            let xi = standard_normal_vec(&mut rng, 4);
            let d = x.malliavin_d(&xi).unwrap();
            for j in 0..4 {
                let mut p = xi.clone();
                let mut q = xi.clone();
                p[j] += 1e-5;
                q[j] -= 1e-5;
                let fd = (x.eval(&p).unwrap() - x.eval(&q).unwrap()) / 2e-5;
                assert!((fd - d[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn inverse_l_examples() {
        let k = SecondChaosKernel::diag(&[2.0, 4.0]);
        let c = FirstChaosVector::new(vec![1.0, 3.0]).unwrap();
        let x = ChaosVariable::new(5.0, c.clone(), k).unwrap();
        let y = x.inverse_l();
        assert_eq!(y.c0, 0.0);
        assert_eq!(y.first, c);
        assert_eq!(y.second, SecondChaosKernel::diag(&[1.0, 2.0]));
    }

    #[test]
    fn key_identity_and_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, _, _) = build_gamma_kernels(3, 3).unwrap();
        for _ in 0..100 {
            let xi = standard_normal_vec(&mut rng, 3);
            let d = divergence_linear(a.matrix(), &xi).unwrap();
            assert!((d - a.eval(&xi).unwrap()).abs() < 1e-12);
        }
        assert_eq!(divergence_linear(&DMatrix::zeros(2, 2), &[1.0, 2.0]).unwrap(), 0.0);
        let xi = [1.0, 2.0, 3.0];
        assert!((divergence_linear(&DMatrix::identity(3, 3), &xi).unwrap() - (14.0 - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn isometry_examples() {
        let e = SecondChaosKernel::diag(&[1.0, 0.0]);
        assert_eq!(isometry_inner(&e, &e).unwrap(), 2.0);
        let (a, b, _) = build_gamma_kernels(10, 5).unwrap();
        assert!((isometry_inner(&a, &b).unwrap() - 40.0 / 81.0).abs() < 1e-12);
        let f = SecondChaosKernel::diag(&[0.0, 1.0]);
        assert_eq!(isometry_inner(&e, &f).unwrap(), 0.0);
    }

    #[test]
    fn contraction_examples() {
        let (a, _, _) = build_gamma_kernels(3, 3).unwrap();
        let raw = contract1_raw(&a, &a).unwrap();
        let expect = (DMatrix::from_element(3, 3, 1.0) + DMatrix::identity(3, 3)) * 0.25;
        assert!((raw - expect).norm() < 1e-15);
        let id = SecondChaosKernel::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(contract1(&a, &id).unwrap(), a);
        assert_eq!(contract1(&a, &SecondChaosKernel::zeros(3)).unwrap(), SecondChaosKernel::zeros(3));
    }

    #[test]
    fn dudv_examples() {
        let e = SecondChaosKernel::diag(&[1.0, 0.0]);
        let (l, r) = dudv(&e, &e, &[1.5, 2.0]).unwrap();
        assert!((l - 9.0).abs() < 1e-15 && (r - 9.0).abs() < 1e-14);
        let (l, r) = dudv(&e, &SecondChaosKernel::zeros(2), &[1.5, 2.0]).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, _) = build_gamma_kernels(3, 3).unwrap();
        for _ in 0..100 {
            let xi = standard_normal_vec(&mut rng, 3);
            let (l, r) = dudv(&a, &b, &xi).unwrap();
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_kernel_shapes() {
        let (a, b, m) = build_gamma_kernels(3, 3).unwrap();
        assert_eq!(m, 3);
        assert_eq!(a, b);
        let (a, b, m) = build_gamma_kernels(2, 1).unwrap();
        assert_eq!(m, 3);
        assert_eq!(a.matrix()[(0, 1)], 1.0);
        assert_eq!(b.matrix()[(0, 2)], 1.0);
        assert_eq!(b.matrix()[(0, 1)], 0.0);
        assert!(build_gamma_kernels(1, 1).is_err());
        assert!(build_gamma_kernels(4, 5).is_err());
        assert!(build_gamma_kernels(4, 0).is_err());
    }

    #[test]
    fn cross_moment_values() {
        assert!((exact_cross_moment(10, 5).unwrap() - 40.0 / 81.0).abs() < 1e-15);
        assert_eq!(exact_cross_moment(7, 1).unwrap(), 0.0);
        assert_eq!(exact_cross_moment(3, 3).unwrap(), 3.0);
    }

    #[test]
    fn contraction_norms_at_three() {
        assert!((contraction_norm_closed_form(3, 3).unwrap() - 4.5).abs() < 1e-15);
        assert!((brute_contraction_norm(3, 3).unwrap() - 9.0 / 8.0).abs() < 1e-15);
        assert!((second_moment_dudv(3, 3).unwrap() - 72.0).abs() < 1e-12);
        assert_eq!(contraction_norm_closed_form(9, 1).unwrap(), 0.0);
        // for m = 1 the h-only by e-only block of A B survives
        assert!((brute_contraction_norm(9, 1).unwrap() - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn counting_formulas_match_matrices() {
        for n in 2..=14 {
            for m in 1..=n {
                let g = gamma_pair_moments(n, m).unwrap();
                let (a, b, _) = build_gamma_kernels(n, m).unwrap();
                let raw = contract1_raw(&a, &b).unwrap();
                let q = contract1(&a, &b).unwrap();
                assert!((g.contraction_norm - raw.norm_squared()).abs() < 1e-13);
                assert!((g.trace_square - (&raw * &raw).trace()).abs() < 1e-13);
                assert!((g.sym_norm - q.frobenius_sq()).abs() < 1e-13);
                assert!((g.second_moment_dudv - quadratic_form_second_moment(&q)).abs() < 1e-11);
                assert!((g.cross_moment - isometry_inner(&a, &b).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn structured_sample_matches_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(5, 2), (8, 8), (9, 1), (12, 4)] {
            let (a, b, dim) = build_gamma_kernels(n, m).unwrap();
            let u = ChaosVariable::second_only(a);
            let v = ChaosVariable::second_only(b);
            for _ in 0..20 {
                let xi = standard_normal_vec(&mut rng, dim);
                let s = gamma_pair_sample(n, m, &xi).unwrap();
                let du = u.malliavin_d(&xi).unwrap();
                let dv = v.malliavin_d(&xi).unwrap();
                let gu = u.d_inverse_l(&xi).unwrap();
                let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
                let uv = u.eval(&xi).unwrap();
                assert!((s.u - uv).abs() < 1e-12);
                assert!((s.v - v.eval(&xi).unwrap()).abs() < 1e-12);
                assert!((s.discrepancy - (2.0 * (uv + 1.0) - dot(&gu, &du))).abs() < 1e-11);
                assert!((s.cross - dot(&gu, &dv)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moments_by_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = ChaosVariable::new(
            0.7,
            FirstChaosVector::new(standard_normal_vec(&mut rng, 3)).unwrap(),
            random_sym(3, &mut rng).scale(0.3),
        )
        .unwrap();
        let mean = sample_mean(100_000, 1, |r| x.eval(&standard_normal_vec(r, 3))).unwrap();
        assert!((mean.mean - 0.7).abs() < 3.0 * mean.std_error());
        let var = mean.variance();
        // variance of the sample variance is small at this n; 3% is generous
        assert!((var / x.variance() - 1.0).abs() < 0.03, "{var} vs {}", x.variance());
    }

    #[test]
    fn csv_export() {
        let (a, _, _) = build_gamma_kernels(3, 2).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,value"));
        assert_eq!(text.lines().count(), 7);
    }
}
