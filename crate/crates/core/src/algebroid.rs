//! Jet vectors, the Spencer operator and bracket, and the linearized
//! structure equations
//!
//! ```text
//! 0 = Xᵃ∂_a g_ij + g_ai Xᵃ_j + g_aj Xᵃ_i
//! 0 = Xⁱ_jk + gⁱ_ak Xᵃ_j + gⁱ_aj Xᵃ_k − gᵃ_jk Xⁱ_a + Xᵃ∂_a gⁱ_jk
//! ```
//!
//! Block layout: `x1[(i, j)] = Xⁱ_j`, `x2[(i, j, k)] = Xⁱ_jk`,
//! `x3[(i, m, j, k)] = Xⁱ_mjk`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{sum, Expr, ExprError, Tape};
use crate::geom::{GeomError, GeometricObject, PointJet};
use crate::jet::StructureKind;
use crate::tensor::{max_abs_matrix, Matrix, Tensor3, Tensor4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebroidError {
    #[error("fiber has dimension {got}, expected {expected} (degenerate structure?)")]
    RankDeficiency { expected: usize, got: usize },
    #[error("jet is not in the fiber at the point (residual {residual:e})")]
    NotInFiber { residual: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A k-jet of a vector field at one point, `k ≤ 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetVector {
    pub order: usize,
    pub x0: DVector<f64>,
    pub x1: Matrix,
    pub x2: Tensor3,
    pub x3: Tensor4,
}

impl JetVector {
    pub fn zero(n: usize, order: usize) -> Self {
        JetVector {
            order,
            x0: DVector::zeros(n),
            x1: Matrix::zeros(n, n),
            x2: Tensor3::zeros(n),
            x3: Tensor4::zeros(n),
        }
    }

    pub fn order1(x0: DVector<f64>, x1: Matrix) -> Self {
        let n = x0.len();
        JetVector { order: 1, x0, x1, x2: Tensor3::zeros(n), x3: Tensor4::zeros(n) }
    }

    pub fn order2(x0: DVector<f64>, x1: Matrix, x2: Tensor3) -> Self {
        let n = x0.len();
        JetVector { order: 2, x0, x1, x2, x3: Tensor4::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Truncation to a lower order.
    pub fn project(&self, order: usize) -> JetVector {
        let n = self.dim();
        let mut out = self.clone();
        out.order = order.min(self.order);
        if order < 3 {
            out.x3 = Tensor4::zeros(n);
        }
        if order < 2 {
            out.x2 = Tensor3::zeros(n);
        }
        if order < 1 {
            out.x1 = Matrix::zeros(n, n);
        }
        out
    }

    /// `a·self + b·other`, blockwise.
    pub fn combine(&self, a: f64, other: &JetVector, b: f64) -> JetVector {
        let n = self.dim();
        JetVector {
            order: self.order.max(other.order),
            x0: &self.x0 * a + &other.x0 * b,
            x1: &self.x1 * a + &other.x1 * b,
            x2: self.x2.scale(a).add(&other.x2.scale(b)),
            x3: Tensor4::from_fn(n, |i, j, k, l| a * self.x3[(i, j, k, l)] + b * other.x3[(i, j, k, l)]),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x0.amax().max(max_abs_matrix(&self.x1)).max(self.x2.max_abs()).max(self.x3.max_abs())
    }

    pub fn max_abs_diff(&self, other: &JetVector) -> f64 {
        self.combine(1.0, other, -1.0).max_abs()
    }

    /// Coefficients `(X⁰, X¹)` as one vector, `X¹` row-major.
    pub fn order1_coefficients(&self) -> Vec<f64> {
        let n = self.dim();
        let mut v: Vec<f64> = self.x0.iter().copied().collect();
        v.extend((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.x1[(i, j)]));
        v
    }

    fn from_order1_coefficients(n: usize, c: &[f64]) -> JetVector {
        JetVector::order1(DVector::from_column_slice(&c[..n]), DMatrix::from_row_slice(n, n, &c[n..]))
    }
}

/// A k-jet field with symbolic components.
#[derive(Debug, Clone)]
pub struct JetVectorField {
    pub n: usize,
    pub order: usize,
    pub x0: Vec<Expr>,
    pub x1: Vec<Expr>,
    pub x2: Vec<Expr>,
    pub x3: Vec<Expr>,
}

impl JetVectorField {
    /// Builds an order-2 field; `x1` is n², `x2` is n³, row-major.
    pub fn order2(x0: Vec<Expr>, x1: Vec<Expr>, x2: Vec<Expr>) -> Self {
        let n = x0.len();
        assert_eq!(x1.len(), n * n);
        assert_eq!(x2.len(), n * n * n);
        JetVectorField { n, order: 2, x0, x1, x2, x3: vec![] }
    }

    fn all(&self) -> Vec<Expr> {
        [&self.x0[..], &self.x1, &self.x2, &self.x3].concat()
    }

    pub fn eval(&self, p: &[f64]) -> Result<JetVector, ExprError> {
        self.tape().eval(p).map(|v| self.unpack(&v))
    }

    /// One compiled tape for all blocks; evaluate with [`Self::unpack`].
    pub fn tape(&self) -> Tape {
        Tape::compile(&self.all())
    }

    pub fn unpack(&self, v: &[f64]) -> JetVector {
        let n = self.n;
        let (a, rest) = v.split_at(n);
        let (b, rest) = rest.split_at(self.x1.len());
        let (c, d) = rest.split_at(self.x2.len());
        let mut out = JetVector::zero(n, self.order);
        out.x0 = DVector::from_column_slice(a);
        if !b.is_empty() {
            out.x1 = DMatrix::from_row_slice(n, n, b);
        }
        if !c.is_empty() {
            out.x2 = Tensor3::from_vec(n, c.to_vec());
        }
        if !d.is_empty() {
            out.x3 = Tensor4::from_fn(n, |i, m, j, k| d[((i * n + m) * n + j) * n + k]);
        }
        out
    }
}

/// `j_k X`: blocks are the symbolic derivatives, `order ∈ {2, 3}`.
pub fn prolong(x: &[Expr], order: usize) -> JetVectorField {
    let n = x.len();
    let d = |v: &[Expr]| -> Vec<Expr> { v.iter().flat_map(|e| (0..n).map(move |j| e.diff(j))).collect() };
    let x1 = d(x);
    let x2 = d(&x1);
    let x3 = if order >= 3 {
        // x3[i][m][j][k] = ∂_m x2[i][j][k]
        let mut out = Vec::with_capacity(n.pow(4));
        for i in 0..n {
            for m in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out.push(x2[(i * n + j) * n + k].diff(m));
                    }
                }
            }
        }
        out
    } else {
        vec![]
    };
    JetVectorField { n, order: order.max(2), x0: x.to_vec(), x1, x2, x3 }
}

/// Holonomy defect of an order-3 field:
/// `(∂_jXⁱ − Xⁱ_j, ∂_jXⁱ_k − Xⁱ_jk, ∂_mXⁱ_jk − Xⁱ_mjk)` with layouts
/// `[i][j]`, `[i][j][k]`, `[i][m][j][k]`.
#[derive(Debug, Clone)]
pub struct SpencerDefect {
    pub d0: Vec<Expr>,
    pub d1: Vec<Expr>,
    pub d2: Vec<Expr>,
}

pub fn spencer_operator(x: &JetVectorField) -> SpencerDefect {
    assert_eq!(x.order, 3, "the Spencer operator acts on order-3 fields");
    let n = x.n;
    let mut d0 = Vec::with_capacity(n * n);
    let mut d1 = Vec::with_capacity(n.pow(3));
    let mut d2 = Vec::with_capacity(n.pow(4));
    for i in 0..n {
        for j in 0..n {
            d0.push(x.x0[i].diff(j) - x.x1[i * n + j].clone());
            for k in 0..n {
                d1.push(x.x1[i * n + k].diff(j) - x.x2[(i * n + j) * n + k].clone());
            }
        }
        for m in 0..n {
            for j in 0..n {
                for k in 0..n {
                    d2.push(x.x2[(i * n + j) * n + k].diff(m) - x.x3[((i * n + m) * n + j) * n + k].clone());
                }
            }
        }
    }
    SpencerDefect { d0, d1, d2 }
}

/// Spencer bracket of order-2 fields in component form:
///
/// ```text
/// [X,Y]ⁱ    = Xᵃ∂_aYⁱ − Yᵃ∂_aXⁱ
/// [X,Y]ⁱ_j  = Xᵃ_jYⁱ_a − Yᵃ_jXⁱ_a + Xᵃ∂_aYⁱ_j − Yᵃ∂_aXⁱ_j
/// [X,Y]ⁱ_jk = Xᵃ_jkYⁱ_a + Xᵃ_jYⁱ_ka + Xᵃ_kYⁱ_aj − (X ↔ Y)
///             + Xᵃ∂_aYⁱ_jk − Yᵃ∂_aXⁱ_jk
/// ```
///
/// The order-3 lift terms cancel between the algebraic bracket and the
/// Spencer-operator corrections, which is why no lift appears here.
pub fn spencer_bracket(x: &JetVectorField, y: &JetVectorField) -> JetVectorField {
    let n = x.n;
    let i2 = |i: usize, j: usize| i * n + j;
    let i3 = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let lie = |x: &JetVectorField, y: &JetVectorField, e: &dyn Fn(&JetVectorField) -> Expr| -> Expr {
        let ey = e(y);
        let ex = e(x);
        sum((0..n).map(|a| x.x0[a].clone() * ey.diff(a))) - sum((0..n).map(|a| y.x0[a].clone() * ex.diff(a)))
    };
    let x0 = (0..n).map(|i| lie(x, y, &|f| f.x0[i].clone())).collect();
    let mut x1 = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let alg = sum((0..n).map(|a| x.x1[i2(a, j)].clone() * y.x1[i2(i, a)].clone()))
                - sum((0..n).map(|a| y.x1[i2(a, j)].clone() * x.x1[i2(i, a)].clone()));
            x1.push(alg + lie(x, y, &|f| f.x1[i2(i, j)].clone()));
        }
    }
    let mut x2 = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let half = |p: &JetVectorField, q: &JetVectorField| {
                    sum((0..n).map(|a| {
                        p.x2[i3(a, j, k)].clone() * q.x1[i2(i, a)].clone()
                            + p.x1[i2(a, j)].clone() * q.x2[i3(i, k, a)].clone()
                            + p.x1[i2(a, k)].clone() * q.x2[i3(i, a, j)].clone()
                    }))
                };
                x2.push(half(x, y) - half(y, x) + lie(x, y, &|f| f.x2[i3(i, j, k)].clone()));
            }
        }
    }
    JetVectorField::order2(x0, x1, x2)
}

/// Algebraic bracket `{X₃, Y₃}_p` of order-3 jets at a point, truncated to
/// order 2: the bracket of vector fields differentiated twice with jets in
/// place of derivatives.
pub fn algebraic_bracket(x: &JetVector, y: &JetVector) -> JetVector {
    let n = x.dim();
    let half = |p: &JetVector, q: &JetVector| {
        let x0 = DVector::from_fn(n, |i, _| (0..n).map(|a| p.x0[a] * q.x1[(i, a)]).sum());
        let x1 = DMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|a| p.x1[(a, j)] * q.x1[(i, a)] + p.x0[a] * q.x2[(i, j, a)]).sum()
        });
        let x2 = Tensor3::from_fn(n, |i, j, k| {
            (0..n)
                .map(|a| {
                    p.x2[(a, j, k)] * q.x1[(i, a)]
                        + p.x1[(a, j)] * q.x2[(i, k, a)]
                        + p.x1[(a, k)] * q.x2[(i, a, j)]
                        + p.x0[a] * q.x3[(i, a, j, k)]
                })
                .sum()
        });
        JetVector::order2(x0, x1, x2)
    };
    half(x, y).combine(1.0, &half(y, x), -1.0)
}

/// Residuals of the two defining equations at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberResidual {
    pub metric: f64,
    pub connection: f64,
}

impl FiberResidual {
    pub fn max(&self) -> f64 {
        self.metric.max(self.connection)
    }
}

fn metric_equation(pj: &PointJet, x0: &DVector<f64>, x1: &Matrix) -> Matrix {
    let n = pj.n;
    DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|a| x0[a] * pj.dg(a, i, j) + pj.g(a, i) * x1[(a, j)] + pj.g(a, j) * x1[(a, i)]).sum()
    })
}

/// The value of `Xⁱ_jk` forced by the second equation.
fn forced_x2(pj: &PointJet, x0: &DVector<f64>, x1: &Matrix) -> Tensor3 {
    let n = pj.n;
    Tensor3::from_fn(n, |i, j, k| {
        -(0..n)
            .map(|a| {
                pj.gam(i, a, k) * x1[(a, j)] + pj.gam(i, a, j) * x1[(a, k)] - pj.gam(a, j, k) * x1[(i, a)]
                    + x0[a] * pj.dgam(a, i, j, k)
            })
            .sum::<f64>()
    })
}

pub fn membership_at(pj: &PointJet, x: &JetVector) -> FiberResidual {
    let metric = if pj.has_metric() { max_abs_matrix(&metric_equation(pj, &x.x0, &x.x1)) } else { 0.0 };
    let connection = x.x2.max_abs_diff(&forced_x2(pj, &x.x0, &x.x1));
    FiberResidual { metric, connection }
}

/// Residuals of the defining equations for an order-2 jet at `p`; for affine
/// objects the first is 0.
pub fn algebroid_membership(g: &GeometricObject, x: &JetVector, p: &[f64]) -> Result<FiberResidual, AlgebroidError> {
    Ok(membership_at(&g.jet_at(p, 1)?, x))
}

/// Completes an order-1 jet to the order-2 jet determined by the second
/// equation.
pub fn complete_order2(pj: &PointJet, x0: DVector<f64>, x1: Matrix) -> JetVector {
    let x2 = forced_x2(pj, &x0, &x1);
    JetVector::order2(x0, x1, x2)
}

/// Order-3 lift obtained by differentiating the second equation along the
/// jet and symmetrizing over `(m, j, k)`.
pub fn lift_order3(pj: &PointJet, x: &JetVector) -> JetVector {
    assert!(pj.order >= 2, "lift needs second derivatives of the connection");
    let n = pj.n;
    let raw = Tensor4::from_fn(n, |i, m, j, k| {
        -(0..n)
            .map(|a| {
                pj.dgam(m, i, a, k) * x.x1[(a, j)]
                    + pj.gam(i, a, k) * x.x2[(a, m, j)]
                    + pj.dgam(m, i, a, j) * x.x1[(a, k)]
                    + pj.gam(i, a, j) * x.x2[(a, m, k)]
                    - pj.dgam(m, a, j, k) * x.x1[(i, a)]
                    - pj.gam(a, j, k) * x.x2[(i, m, a)]
                    + x.x1[(a, m)] * pj.dgam(a, i, j, k)
                    + x.x0[a] * pj.d2gam(m, a, i, j, k)
            })
            .sum::<f64>()
    });
    let sym = Tensor4::from_fn(n, |i, m, j, k| {
        (raw[(i, m, j, k)] + raw[(i, m, k, j)] + raw[(i, j, m, k)] + raw[(i, j, k, m)] + raw[(i, k, m, j)] + raw[(i, k, j, m)])
            / 6.0
    });
    JetVector { order: 3, x0: x.x0.clone(), x1: x.x1.clone(), x2: x.x2.clone(), x3: sym }
}

/// `{ε ξ, ε η}_p` for fiber elements `ξ, η` at `p`, computed pointwise.
pub fn algebraic_bracket_point(
    xi: &JetVector,
    eta: &JetVector,
    g: &GeometricObject,
    p: &[f64],
) -> Result<JetVector, AlgebroidError> {
    let pj = g.jet_at(p, 2)?;
    for v in [xi, eta] {
        let r = membership_at(&pj, v).max();
        if r > 1e-10 * v.max_abs().max(1.0) {
            return Err(AlgebroidError::NotInFiber { residual: r });
        }
    }
    Ok(algebraic_bracket(&lift_order3(&pj, xi), &lift_order3(&pj, eta)))
}

/// Null space of `a` (rows = equations) by SVD of the zero-padded square
/// system; columns of the result span it.
fn null_space(a: &Matrix, cols: usize) -> Matrix {
    let mut sq = Matrix::zeros(cols.max(a.nrows()), cols);
    sq.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut out = Matrix::zeros(cols, keep.len());
    for (c, &r) in keep.iter().enumerate() {
        out.set_column(c, &v_t.row(r).transpose());
    }
    out
}

/// Orthonormal basis of `span(basis)` that depends only on the subspace:
/// Gram–Schmidt on the projections of the unit vectors, then the first
/// nonzero coefficient of each vector is made positive.
fn canonical_basis(basis: &Matrix) -> Vec<DVector<f64>> {
    let m = basis.nrows();
    let proj = basis * basis.transpose();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for e in 0..m {
        if out.len() == basis.ncols() {
            break;
        }
        let mut v = proj.column(e).into_owned();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            out.push(v);
        }
    }
    out
}

fn metric_system(pj: &PointJet, pin_x0: bool) -> Matrix {
    let n = pj.n;
    let cols = n + n * n;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    if pj.has_metric() {
        for i in 0..n {
            for j in i..n {
                let mut r = vec![0.0; cols];
                for a in 0..n {
                    r[a] += pj.dg(a, i, j);
                    r[n + a * n + j] += pj.g(a, i);
                    r[n + a * n + i] += pj.g(a, j);
                }
                rows.push(r);
            }
        }
    }
    if pin_x0 {
        for a in 0..n {
            let mut r = vec![0.0; cols];
            r[a] = 1.0;
            rows.push(r);
        }
    }
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

pub fn expected_fiber_dim(n: usize, kind: StructureKind) -> usize {
    match kind {
        StructureKind::Riemannian => n * (n + 1) / 2,
        StructureKind::Affine => n + n * n,
    }
}

fn basis_from_system(pj: &PointJet, pin_x0: bool, expected: usize) -> Result<Vec<JetVector>, AlgebroidError> {
    let n = pj.n;
    let cols = n + n * n;
    let sys = metric_system(pj, pin_x0);
    let ns = if sys.nrows() == 0 { Matrix::identity(cols, cols) } else { null_space(&sys, cols) };
    if ns.ncols() != expected {
        return Err(AlgebroidError::RankDeficiency { expected, got: ns.ncols() });
    }
    Ok(canonical_basis(&ns)
        .into_iter()
        .map(|v| {
            let o1 = JetVector::from_order1_coefficients(n, v.as_slice());
            complete_order2(pj, o1.x0, o1.x1)
        })
        .collect())
}

pub fn fiber_basis_at(pj: &PointJet, kind: StructureKind) -> Result<Vec<JetVector>, AlgebroidError> {
    basis_from_system(pj, false, expected_fiber_dim(pj.n, kind))
}

/// Basis of the fiber of the algebroid at `p`.
pub fn fiber_basis(g: &GeometricObject, p: &[f64]) -> Result<Vec<JetVector>, AlgebroidError> {
    fiber_basis_at(&g.jet_at(p, 1)?, g.kind())
}

/// The fiber elements with `X⁰ = 0`.
pub fn stabilizer_fiber(g: &GeometricObject, p: &[f64]) -> Result<Vec<JetVector>, AlgebroidError> {
    let n = g.dim();
    let expected = match g.kind() {
        StructureKind::Riemannian => n * (n - 1) / 2,
        StructureKind::Affine => n * n,
    };
    basis_from_system(&g.jet_at(p, 1)?, true, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::geom::{quadratic_chart, Domain};

    fn exprs(texts: &[&str], n: usize) -> Vec<Expr> {
        texts.iter().map(|t| parse_expr(t, n).unwrap()).collect()
    }

    fn euclid() -> GeometricObject {
        GeometricObject::from_metric(exprs(&["1", "0", "0", "1"], 2), None, Domain::cube(2, 1.0), vec![0.0, 0.0]).unwrap()
    }

    fn sphere() -> GeometricObject {
        let c = "4/(1+x1^2+x2^2)^2";
        GeometricObject::from_metric(exprs(&[c, "0", "0", c], 2), None, Domain::cube(2, 1.0), vec![0.0, 0.0]).unwrap()
    }

    fn field_max(f: &JetVectorField, p: &[f64]) -> f64 {
        f.eval(p).unwrap().max_abs()
    }

    #[test]
    fn prolong_examples() {
        let c = prolong(&exprs(&["1", "0"], 2), 2).eval(&[0.3, 0.4]).unwrap();
        assert_eq!(c.x0.as_slice(), &[1.0, 0.0]);
        assert_eq!(c.x1.amax(), 0.0);

        let r = prolong(&exprs(&["-x2", "x1"], 2), 2).eval(&[0.3, 0.4]).unwrap();
        assert_eq!(r.x1, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(r.x2.max_abs(), 0.0);

        let q = prolong(&exprs(&["x1^2", "0"], 2), 2).eval(&[1.5, 0.0]).unwrap();
        assert_eq!(q.x1[(0, 0)], 3.0);
        assert_eq!(q.x2[(0, 0, 0)], 2.0);
    }

    #[test]
    fn spencer_operator_examples() {
        let x = prolong(&exprs(&["x1^2*x2", "sin(x1)"], 2), 3);
        let d = spencer_operator(&x);
        let p = [0.3, -0.8];
        for e in d.d0.iter().chain(&d.d1).chain(&d.d2) {
            assert_eq!(e.eval(&p).unwrap(), 0.0);
        }
        let mut bent = x.clone();
        bent.x2[0] = bent.x2[0].clone() + 0.25; // X¹_11 += S
        let d = spencer_operator(&bent);
        assert_eq!(d.d1[0].eval(&p).unwrap(), -0.25);
        let zero = prolong(&exprs(&["0", "0"], 2), 3);
        assert!(spencer_operator(&zero).d2.iter().all(|e| e.is_zero()));
    }

    #[test]
    fn bracket_of_prolongations() {
        let e1 = prolong(&exprs(&["1", "0"], 2), 2);
        let e2 = prolong(&exprs(&["0", "1"], 2), 2);
        assert_eq!(field_max(&spencer_bracket(&e1, &e2), &[0.2, 0.1]), 0.0);

        // [(-x2, x1), (1, 0)] = (0, -1)
        let rot = prolong(&exprs(&["-x2", "x1"], 2), 2);
        let b = spencer_bracket(&rot, &e1).eval(&[0.2, 0.7]).unwrap();
        let expect = prolong(&exprs(&["0", "-1"], 2), 2).eval(&[0.2, 0.7]).unwrap();
        assert!(b.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn euclidean_membership() {
        let g = euclid();
        let p = [0.4, -0.1];
        let zero = JetVector::zero(2, 2);
        assert_eq!(algebroid_membership(&g, &zero, &p).unwrap().max(), 0.0);
        let skew = JetVector::order2(
            DVector::from_vec(vec![0.3, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -1.5, 0.0]),
            Tensor3::zeros(2),
        );
        assert_eq!(algebroid_membership(&g, &skew, &p).unwrap().max(), 0.0);
        let id = JetVector::order2(DVector::zeros(2), Matrix::identity(2, 2), Tensor3::zeros(2));
        assert_eq!(algebroid_membership(&g, &id, &p).unwrap().metric, 2.0);
    }

    #[test]
    fn euclidean_fiber_basis() {
        let b = fiber_basis(&euclid(), &[0.0, 0.0]).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].x0.as_slice(), &[1.0, 0.0]);
        assert_eq!(b[1].x0.as_slice(), &[0.0, 1.0]);
        assert!(b[0].x1.amax() < 1e-15 && b[1].x1.amax() < 1e-15);
        let s = 0.5f64.sqrt();
        assert!(b[2].x0.amax() < 1e-15);
        assert!(max_abs_matrix(&(&b[2].x1 - DMatrix::from_row_slice(2, 2, &[0.0, s, -s, 0.0]))) < 1e-15);

        let st = stabilizer_fiber(&euclid(), &[0.0, 0.0]).unwrap();
        assert_eq!(st.len(), 1);
        assert!(st[0].max_abs_diff(&b[2]) < 1e-15);
    }

    #[test]
    fn sphere_fibers() {
        let g = sphere();
        for p in [[0.0, 0.0], [0.3, -0.6], [0.9, 0.9]] {
            let b = fiber_basis(&g, &p).unwrap();
            assert_eq!(b.len(), 3);
            for v in &b {
                assert!(algebroid_membership(&g, v, &p).unwrap().max() < 1e-12);
            }
            assert_eq!(stabilizer_fiber(&g, &p).unwrap().len(), 1);
        }
    }

    #[test]
    fn stabilizer_in_regular_coordinates() {
        let g = sphere();
        let p = [0.4, 0.2];
        let h = g.regular_normalization(&p).unwrap();
        let t = g.transform_chart(&quadratic_chart(&p, &h), Domain::cube(2, 0.1), vec![0.0, 0.0]).unwrap();
        let st = stabilizer_fiber(&t, &[0.0, 0.0]).unwrap();
        assert!(st[0].x2.max_abs() < 1e-10);
        assert!(max_abs_matrix(&(&st[0].x1 + st[0].x1.transpose())) < 1e-10);
    }

    #[test]
    fn algebraic_bracket_examples() {
        let g = euclid();
        let p = [0.0, 0.0];
        let b = fiber_basis(&g, &p).unwrap();
        assert!(algebraic_bracket_point(&b[0], &b[1], &g, &p).unwrap().max_abs() < 1e-15);
        // rotation with generator [[0,1],[-1,0]]/√2 against e₁ gives e₂/√2
        let r = algebraic_bracket_point(&b[2], &b[0], &g, &p).unwrap();
        let s = 0.5f64.sqrt();
        assert!((r.x0[1] - s).abs() < 1e-15 && r.x0[0].abs() < 1e-15);
        assert!(r.x1.amax() < 1e-15);
        let bad = JetVector::order2(DVector::zeros(2), Matrix::identity(2, 2), Tensor3::zeros(2));
        assert!(matches!(algebraic_bracket_point(&bad, &b[0], &g, &p), Err(AlgebroidError::NotInFiber { .. })));
    }

    #[test]
    fn algebraic_bracket_closes_on_sphere() {
        let g = sphere();
        let p = [0.3, -0.4];
        let b = fiber_basis(&g, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let r = algebraic_bracket_point(&b[i], &b[j], &g, &p).unwrap();
                assert!(algebroid_membership(&g, &r, &p).unwrap().max() < 1e-9);
            }
        }
    }

    #[test]
    fn affine_fiber_is_free_in_low_order() {
        let g = GeometricObject::affine(vec![Expr::zero(); 8], Domain::cube(2, 1.0), vec![0.0, 0.0]).unwrap();
        let b = fiber_basis(&g, &[0.1, 0.1]).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(stabilizer_fiber(&g, &[0.1, 0.1]).unwrap().len(), 4);
    }

    #[test]
    fn bracket_is_antisymmetric() {
        let x = prolong(&exprs(&["x1*x2", "x2^2 - x1"], 2), 2);
        let y = prolong(&exprs(&["sin(x2)", "x1^3"], 2), 2);
        let p = [0.3, 0.5];
        let a = spencer_bracket(&x, &y).eval(&p).unwrap();
        let b = spencer_bracket(&y, &x).eval(&p).unwrap();
        assert!(a.combine(1.0, &b, 1.0).max_abs() < 1e-15);
    }
}
