//! Jet groups `G₁(n)`, `G₂(n)` and `G₃(1)`.
//!
//! A [`Jet2`] is the 2-jet at the origin of a local diffeomorphism fixing the
//! origin, stored as its first block `aⁱ_j` and its second block `aⁱ_jk`
//! (symmetric in `j, k`). Composition is the chain rule,
//!
//! ```text
//! (a₁, a₂)(b₁, b₂) = (a₁b₁, a₁b₂ + a₂(b₁, b₁)),
//! ```
//!
//! so `π(a) = a₁` is a homomorphism onto `G₁(n)` with vector-group kernel
//! `{(I, a₂)}`, and `ε(a₁) = (a₁, 0)` splits it.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::Expr;
use crate::tensor::{max_abs_matrix, Matrix, Tensor3};

/// Absolute tolerance for exact group algebra on unit-scale inputs.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("first-jet block is singular (det = {det:e})")]
    Singular { det: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("lambda = {0} is not admissible (must differ from 0 and 1)")]
    BadLambda(f64),
    #[error("no sample of the splitting at lambda*I for lambda = {0}")]
    MissingLambdaSample(f64),
    #[error("the sampled map is not a splitting conjugate to epsilon (residual {residual:e})")]
    NotASplitting { residual: f64 },
    #[error("first jet coefficient must be nonzero")]
    ZeroLeading,
}

fn check_invertible(a1: &Matrix) -> Result<f64, JetError> {
    let n = a1.nrows();
    let det = a1.determinant();
    let scale = max_abs_matrix(a1).max(f64::MIN_POSITIVE).powi(n as i32);
    if !det.is_finite() || det.abs() <= 1e-14 * scale {
        return Err(JetError::Singular { det });
    }
    Ok(det)
}

/// Element of `G₂(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    a1: Matrix,
    a2: Tensor3,
}

impl Jet2 {
    /// Builds an element, averaging `a2` over its lower index pair.
    pub fn new(a1: Matrix, mut a2: Tensor3) -> Result<Self, JetError> {
        let n = a1.nrows();
        if a1.ncols() != n {
            return Err(JetError::Dimension { expected: n, got: a1.ncols() });
        }
        if a2.dim() != n {
            return Err(JetError::Dimension { expected: n, got: a2.dim() });
        }
        check_invertible(&a1)?;
        a2.symmetrize_lower();
        Ok(Jet2 { a1, a2 })
    }

    pub fn identity(n: usize) -> Self {
        Jet2 { a1: Matrix::identity(n, n), a2: Tensor3::zeros(n) }
    }

    /// Kernel element `(I, a2)`.
    pub fn kernel(a2: Tensor3) -> Self {
        let n = a2.dim();
        Jet2::new(Matrix::identity(n, n), a2).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.a1.nrows()
    }

    pub fn a1(&self) -> &Matrix {
        &self.a1
    }

    pub fn a2(&self) -> &Tensor3 {
        &self.a2
    }

    /// Chain-rule product `cⁱ_jk = aⁱ_s bˢ_jk + aⁱ_st bˢ_j bᵗ_k`.
    pub fn compose(&self, b: &Jet2) -> Jet2 {
        let a1 = &self.a1 * &b.a1;
        let a2 = b.a2.left_mul(&self.a1).add(&self.a2.lower_mul(&b.a1));
        Jet2 { a1, a2 }
    }

    /// `(a₁⁻¹, −a₁⁻¹ a₂(a₁⁻¹, a₁⁻¹))`.
    pub fn inverse(&self) -> Result<Jet2, JetError> {
        check_invertible(&self.a1)?;
        let inv = self.a1.clone().try_inverse().ok_or(JetError::Singular { det: 0.0 })?;
        let a2 = self.a2.lower_mul(&inv).left_mul(&inv).scale(-1.0);
        Ok(Jet2 { a1: inv, a2 })
    }

    /// Projection `π : G₂(n) → G₁(n)`.
    pub fn project(&self) -> Matrix {
        self.a1.clone()
    }

    pub fn max_abs_diff(&self, other: &Jet2) -> f64 {
        max_abs_matrix(&(&self.a1 - &other.a1)).max(self.a2.max_abs_diff(&other.a2))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_matrix(&self.a1).max(self.a2.max_abs())
    }
}

/// The splitting `ε(a₁) = (a₁, 0)`.
pub fn split_epsilon(a1: &Matrix) -> Result<Jet2, JetError> {
    Jet2::new(a1.clone(), Tensor3::zeros(a1.nrows()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Riemannian,
    Affine,
}

impl StructureKind {
    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Riemannian => "riemannian",
            StructureKind::Affine => "affine",
        }
    }
}

/// Invariant of the right coset `ε(H)·a`: `F₁ = a₁ᵀa₁` (Riemannian only) and
/// `F₂ = a₁⁻¹a₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetInvariant {
    pub kind: StructureKind,
    pub f1: Option<Matrix>,
    pub f2: Tensor3,
}

impl CosetInvariant {
    pub fn max_abs_diff(&self, other: &CosetInvariant) -> f64 {
        let d1 = match (&self.f1, &other.f1) {
            (Some(a), Some(b)) => max_abs_matrix(&(a - b)),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        d1.max(self.f2.max_abs_diff(&other.f2))
    }
}

pub fn coset_invariant(a: &Jet2, kind: StructureKind) -> CosetInvariant {
    let inv = a.a1.clone().try_inverse().expect("valid Jet2 has invertible first block");
    let f1 = match kind {
        StructureKind::Riemannian => Some(a.a1.transpose() * &a.a1),
        StructureKind::Affine => None,
    };
    CosetInvariant { kind, f1, f2: a.a2.left_mul(&inv) }
}

/// Minimal ring interface so the transport law is shared between numeric
/// values and symbolic component grids.
pub trait Ring: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn zero() -> Self;
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Ring for Expr {
    fn zero() -> Self {
        Expr::zero()
    }
}

/// Transport law of the coset invariant under right multiplication by
/// `b = (b₁, b₂)`:
///
/// ```text
/// F₁(ab)_jk  = F₁(a)_st bˢ_j bᵗ_k
/// F₂(ab)ⁱ_jk = (b₁⁻¹)ⁱ_s (F₂(a)ˢ_tr bᵗ_j bʳ_k + bˢ_jk)
/// ```
///
/// Inputs are flat row-major arrays; `b1_inv` must be the inverse of `b1`.
pub fn transport_components<S: Ring>(
    n: usize,
    f1: Option<&[S]>,
    f2: &[S],
    b1: &[S],
    b1_inv: &[S],
    b2: &[S],
) -> (Option<Vec<S>>, Vec<S>) {
    let m = |a: &[S], i: usize, j: usize| a[i * n + j].clone();
    let t = |a: &[S], i: usize, j: usize, k: usize| a[(i * n + j) * n + k].clone();
    let sum = |it: &mut dyn Iterator<Item = S>| it.fold(S::zero(), |acc, v| acc + v);

    let new_f1 = f1.map(|f1| {
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                out.push(sum(&mut (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).map(|(s, t)| {
                    m(f1, s, t) * m(b1, s, j) * m(b1, t, k)
                })));
            }
        }
        out
    });

    // inner[s][j][k] = F₂ˢ_tr bᵗ_j bʳ_k + bˢ_jk
    let mut inner = Vec::with_capacity(n * n * n);
    for s in 0..n {
        for j in 0..n {
            for k in 0..n {
                let quad = sum(&mut (0..n).flat_map(|t| (0..n).map(move |r| (t, r))).map(|(t, r)| {
                    self::t(f2, n, s, t, r) * m(b1, t, j) * m(b1, r, k)
                }));
                inner.push(quad + t(b2, s, j, k));
            }
        }
    }
    let mut new_f2 = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                new_f2.push(sum(&mut (0..n).map(|s| m(b1_inv, i, s) * inner[(s * n + j) * n + k].clone())));
            }
        }
    }
    (new_f1, new_f2)
}

fn t<S: Clone>(a: &[S], n: usize, i: usize, j: usize, k: usize) -> S {
    a[(i * n + j) * n + k].clone()
}

fn matrix_to_rows(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    (0..n).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

/// Computes `F(ab)` from `F(a)` and `b` alone.
pub fn coset_transport(fa: &CosetInvariant, b: &Jet2) -> CosetInvariant {
    let n = b.dim();
    let inv = b.a1.clone().try_inverse().expect("valid Jet2 has invertible first block");
    let f1_rows = fa.f1.as_ref().map(matrix_to_rows);
    let (f1, f2) = transport_components(
        n,
        f1_rows.as_deref(),
        fa.f2.as_slice(),
        &matrix_to_rows(&b.a1),
        &matrix_to_rows(&inv),
        b.a2.as_slice(),
    );
    CosetInvariant {
        kind: fa.kind,
        f1: f1.map(|v| DMatrix::from_row_slice(n, n, &v)),
        f2: Tensor3::from_vec(n, f2),
    }
}

/// A homomorphic section `σ : G₁(n) → G₂(n)` known only through samples.
#[derive(Debug, Clone)]
pub struct SampledSplitting {
    samples: Vec<(Matrix, Jet2)>,
}

impl SampledSplitting {
    pub fn new(samples: Vec<(Matrix, Jet2)>) -> Self {
        SampledSplitting { samples }
    }

    /// Tabulates `sigma` at `λI` and at each matrix in `points`.
    pub fn tabulate(sigma: impl Fn(&Matrix) -> Jet2, lambda: f64, points: &[Matrix]) -> Self {
        let n = points.first().map(|m| m.nrows()).unwrap_or(1);
        let mut samples = vec![(Matrix::identity(n, n) * lambda, sigma(&(Matrix::identity(n, n) * lambda)))];
        samples.extend(points.iter().map(|b| (b.clone(), sigma(b))));
        SampledSplitting { samples }
    }

    pub fn samples(&self) -> &[(Matrix, Jet2)] {
        &self.samples
    }

    fn at_scalar(&self, lambda: f64) -> Option<&Jet2> {
        self.samples.iter().find_map(|(b, s)| {
            let n = b.nrows();
            let target = Matrix::identity(n, n) * lambda;
            (max_abs_matrix(&(b - target)) <= 1e-14 * lambda.abs().max(1.0)).then_some(s)
        })
    }

    pub fn extend(&mut self, other: &SampledSplitting) {
        self.samples.extend(other.samples.iter().cloned());
    }
}

/// Recovers `k ∈ K₂,₁(n)` with `σ(b) = (I,k) ε(b) (I,−k)` from the value of
/// the splitting at `λI`: `k = φ(λI)/(λ² − λ)`, then checks the conjugation
/// on every sample.
pub fn recover_conjugator(sigma: &SampledSplitting, lambda: f64) -> Result<Tensor3, JetError> {
    if lambda == 0.0 || lambda == 1.0 || !lambda.is_finite() {
        return Err(JetError::BadLambda(lambda));
    }
    let at_lambda = sigma.at_scalar(lambda).ok_or(JetError::MissingLambdaSample(lambda))?;
    let k = at_lambda.a2().scale(1.0 / (lambda * lambda - lambda));
    let left = Jet2::kernel(k.clone());
    let right = Jet2::kernel(k.scale(-1.0));
    let mut residual: f64 = 0.0;
    for (b, value) in sigma.samples() {
        let predicted = left.compose(&split_epsilon(b)?).compose(&right);
        let scale = value.max_abs().max(1.0);
        residual = residual.max(predicted.max_abs_diff(value) / scale);
    }
    if residual > 1e-10 {
        return Err(JetError::NotASplitting { residual });
    }
    Ok(k)
}

/// Element `(a1, a2, a3)` of `G₃(1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3 {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Jet3 {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self, JetError> {
        if a1 == 0.0 || !a1.is_finite() {
            return Err(JetError::ZeroLeading);
        }
        Ok(Jet3 { a1, a2, a3 })
    }

    pub fn identity() -> Self {
        Jet3 { a1: 1.0, a2: 0.0, a3: 0.0 }
    }

    /// `(a₁b₁, a₁b₂ + a₂b₁², a₁b₃ + 3a₂b₁b₂ + a₃b₁³)`.
    pub fn compose(&self, b: &Jet3) -> Jet3 {
        Jet3 {
            a1: self.a1 * b.a1,
            a2: self.a1 * b.a2 + self.a2 * b.a1 * b.a1,
            a3: self.a1 * b.a3 + 3.0 * self.a2 * b.a1 * b.a2 + self.a3 * b.a1.powi(3),
        }
    }

    pub fn max_abs_diff(&self, other: &Jet3) -> f64 {
        (self.a1 - other.a1).abs().max((self.a2 - other.a2).abs()).max((self.a3 - other.a3).abs())
    }
}

/// `ε(a₁, a₂) = (a₁, a₂, (3/2) a₂²/a₁)`, a homomorphism `G₂(1) → G₃(1)`.
pub fn schwarzian_epsilon(a1: f64, a2: f64) -> Result<Jet3, JetError> {
    Jet3::new(a1, a2, 1.5 * a2 * a2 / a1)
}

/// Semidirect decomposition `a = head · kernel` of a 3-jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwarzianSplit {
    pub head: Jet3,
    /// `a₃ − (3/2)a₂²/a₁`.
    pub schwarzian: f64,
    /// `(1, 0, schwarzian/a₁)`, the factor in `K₃,₁(1)`.
    pub kernel: Jet3,
}

pub fn split_schwarzian(a: &Jet3) -> Result<SchwarzianSplit, JetError> {
    let head = schwarzian_epsilon(a.a1, a.a2)?;
    let schwarzian = a.a3 - head.a3;
    let kernel = Jet3 { a1: 1.0, a2: 0.0, a3: schwarzian / a.a1 };
    Ok(SchwarzianSplit { head, schwarzian, kernel })
}
