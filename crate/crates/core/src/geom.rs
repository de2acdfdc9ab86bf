//! The second-order geometric object `g = (g_ij, gⁱ_jk)` on a coordinate box.
//!
//! Components are symbolic [`Expr`] grids. Derivatives up to second order are
//! produced symbolically on first use and compiled into [`Tape`]s, one per
//! derivative order, so a point evaluation costs one pass over a flat
//! instruction list.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{sum, Expr, ExprError, Tape};
use crate::jet::{transport_components, Jet2, JetError, StructureKind};
use crate::tensor::{max_abs_matrix, Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("{what} is not symmetric at {point:?}")]
    NotSymmetric { what: &'static str, point: Vec<f64> },
    #[error("metric is not positive-definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("frame is singular at {point:?}")]
    SingularFrame { point: Vec<f64> },
    #[error("chart Jacobian is singular at {point:?}")]
    SingularJacobian { point: Vec<f64> },
    #[error("chart maps {point:?} outside the source domain")]
    ChartLeavesDomain { point: Vec<f64> },
    #[error("a connection is required for affine structures")]
    MissingConnection,
    #[error("evaluation failed at {point:?}: {source}")]
    Eval { point: Vec<f64>, source: ExprError },
    #[error(transparent)]
    Jet(#[from] JetError),
}

fn eval_err(point: &[f64]) -> impl FnOnce(ExprError) -> GeomError + '_ {
    move |source| GeomError::Eval { point: point.to_vec(), source }
}

/// Axis-aligned box `[lo₁, hi₁] × … × [loₙ, hiₙ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeomError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(GeomError::Domain("bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(GeomError::Domain("each interval needs finite lo < hi".into()));
        }
        Ok(Domain { lo, hi })
    }

    /// `[-r, r]ⁿ`.
    pub fn cube(n: usize, r: f64) -> Self {
        Domain::new(vec![-r; n], vec![r; n]).expect("r > 0")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn min_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min)
    }

    /// Regular grid with `k` points per axis, edges included.
    pub fn grid(&self, k: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(k.pow(n as u32));
        let mut idx = vec![0usize; n];
        loop {
            out.push(
                (0..n)
                    .map(|a| {
                        let t = if k == 1 { 0.5 } else { idx[a] as f64 / (k - 1) as f64 };
                        self.lo[a] + t * (self.hi[a] - self.lo[a])
                    })
                    .collect(),
            );
            let mut a = 0;
            while a < n {
                idx[a] += 1;
                if idx[a] < k {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == n {
                return out;
            }
        }
    }

    /// Uniform random points, reproducible from `seed`. `shrink` < 1 keeps
    /// the points away from the boundary.
    pub fn random_points(&self, count: usize, seed: u64, shrink: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                (0..self.dim())
                    .map(|a| {
                        let mid = 0.5 * (self.lo[a] + self.hi[a]);
                        let half = 0.5 * (self.hi[a] - self.lo[a]) * shrink;
                        mid + half * rng.gen_range(-1.0..=1.0)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Determinant by cofactor expansion; fine for n ≤ 4.
pub fn sym_det(m: &[Expr], n: usize) -> Expr {
    match n {
        0 => Expr::one(),
        1 => m[0].clone(),
        2 => m[0].clone() * m[3].clone() - m[1].clone() * m[2].clone(),
        _ => sum((0..n).map(|j| {
            let minor = sym_minor(m, n, 0, j);
            let term = m[j].clone() * sym_det(&minor, n - 1);
            if j % 2 == 0 {
                term
            } else {
                -term
            }
        })),
    }
}

fn sym_minor(m: &[Expr], n: usize, row: usize, col: usize) -> Vec<Expr> {
    let mut out = Vec::with_capacity((n - 1) * (n - 1));
    for i in (0..n).filter(|&i| i != row) {
        for j in (0..n).filter(|&j| j != col) {
            out.push(m[i * n + j].clone());
        }
    }
    out
}

/// Inverse as adjugate over determinant, row-major.
pub fn sym_inverse(m: &[Expr], n: usize) -> Vec<Expr> {
    let det = sym_det(m, n);
    if n == 1 {
        return vec![Expr::one() / det];
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            // (adj m)_ij = cofactor_ji
            let c = sym_det(&sym_minor(m, n, j, i), n - 1);
            let c = if (i + j) % 2 == 0 { c } else { -c };
            out.push(c / det.clone());
        }
    }
    out
}

/// Upper-triangular `U` with `UᵀU = g`, symbolically.
pub fn sym_cholesky_upper(g: &[Expr], n: usize) -> Vec<Expr> {
    let mut u = vec![Expr::zero(); n * n];
    for i in 0..n {
        let diag = g[i * n + i].clone() - sum((0..i).map(|k| u[k * n + i].clone() * u[k * n + i].clone()));
        let d = diag.sqrt();
        u[i * n + i] = d.clone();
        for j in (i + 1)..n {
            let off = g[i * n + j].clone() - sum((0..i).map(|k| u[k * n + i].clone() * u[k * n + j].clone()));
            u[i * n + j] = off / d.clone();
        }
    }
    u
}

/// Levi-Civita symbols `Γⁱ_jk = ½ gⁱˡ(∂_j g_lk + ∂_k g_lj − ∂_l g_jk)`.
pub fn christoffel_exprs(g: &[Expr], n: usize) -> Vec<Expr> {
    let inv = sym_inverse(g, n);
    let dg: Vec<Expr> = (0..n).flat_map(|a| g.iter().map(move |e| e.diff(a))).collect();
    let d = |a: usize, i: usize, j: usize| dg[(a * n + i) * n + j].clone();
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push(
                    0.5 * sum((0..n).map(|l| inv[i * n + l].clone() * (d(j, l, k) + d(k, l, j) - d(l, j, k)))),
                );
            }
        }
    }
    out
}

/// Numeric values of `g` and its derivatives at one point.
///
/// Index layout: `dg(a,i,j) = ∂_a g_ij`, `d2g(a,b,i,j) = ∂_a∂_b g_ij`,
/// `dgam(a,i,j,k) = ∂_a gⁱ_jk`, `d2gam(a,b,i,j,k) = ∂_a∂_b gⁱ_jk`.
#[derive(Debug, Clone)]
pub struct PointJet {
    pub n: usize,
    pub order: usize,
    g: Vec<f64>,
    g_inv: Vec<f64>,
    gam: Vec<f64>,
    dg: Vec<f64>,
    dgam: Vec<f64>,
    d2g: Vec<f64>,
    d2gam: Vec<f64>,
}

impl PointJet {
    #[inline]
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }
    #[inline]
    pub fn g_inv(&self, i: usize, j: usize) -> f64 {
        self.g_inv[i * self.n + j]
    }
    #[inline]
    pub fn gam(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gam[(i * self.n + j) * self.n + k]
    }
    #[inline]
    pub fn dg(&self, a: usize, i: usize, j: usize) -> f64 {
        self.dg[(a * self.n + i) * self.n + j]
    }
    #[inline]
    pub fn dgam(&self, a: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.dgam[((a * n + i) * n + j) * n + k]
    }
    #[inline]
    pub fn d2g(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.d2g[((a * n + b) * n + i) * n + j]
    }
    #[inline]
    pub fn d2gam(&self, a: usize, b: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.d2gam[(((a * n + b) * n + i) * n + j) * n + k]
    }
    pub fn has_metric(&self) -> bool {
        !self.g.is_empty()
    }
    pub fn metric(&self) -> Matrix {
        DMatrix::from_row_slice(self.n, self.n, &self.g)
    }
    pub fn connection(&self) -> Tensor3 {
        Tensor3::from_vec(self.n, self.gam.clone())
    }
}

#[derive(Debug)]
struct Derived {
    dg: Vec<Expr>,
    dgam: Vec<Expr>,
    d2g: Vec<Expr>,
    d2gam: Vec<Expr>,
}

/// `(g_ij, gⁱ_jk)` over a domain, with a base point.
#[derive(Debug)]
pub struct GeometricObject {
    n: usize,
    kind: StructureKind,
    gij: Option<Vec<Expr>>,
    gijk: Vec<Expr>,
    domain: Domain,
    base_point: Vec<f64>,
    derived: OnceLock<Derived>,
    tapes: [OnceLock<Tape>; 3],
}

impl Clone for GeometricObject {
    fn clone(&self) -> Self {
        GeometricObject::raw(self.kind, self.gij.clone(), self.gijk.clone(), self.domain.clone(), self.base_point.clone())
    }
}

const PD_SEED: u64 = 0x5eed_0001;

impl GeometricObject {
    fn raw(kind: StructureKind, gij: Option<Vec<Expr>>, gijk: Vec<Expr>, domain: Domain, base_point: Vec<f64>) -> Self {
        GeometricObject {
            n: domain.dim(),
            kind,
            gij,
            gijk,
            domain,
            base_point,
            derived: OnceLock::new(),
            tapes: Default::default(),
        }
    }

    /// Riemannian object from a metric grid (row-major, n×n) and an optional
    /// torsion-free connection grid (n×n×n). Without a connection the
    /// Levi-Civita symbols are used.
    pub fn from_metric(
        gij: Vec<Expr>,
        connection: Option<Vec<Expr>>,
        domain: Domain,
        base_point: Vec<f64>,
    ) -> Result<Self, GeomError> {
        let n = domain.dim();
        check_len(gij.len(), n * n)?;
        check_base(&domain, &base_point)?;
        let gijk = match connection {
            Some(c) => {
                check_len(c.len(), n * n * n)?;
                c
            }
            None => christoffel_exprs(&gij, n),
        };
        let obj = GeometricObject::raw(StructureKind::Riemannian, Some(gij), gijk, domain, base_point);
        obj.validate()?;
        Ok(obj)
    }

    /// Affine object from a connection grid alone.
    pub fn affine(connection: Vec<Expr>, domain: Domain, base_point: Vec<f64>) -> Result<Self, GeomError> {
        let n = domain.dim();
        check_len(connection.len(), n * n * n)?;
        check_base(&domain, &base_point)?;
        let obj = GeometricObject::raw(StructureKind::Affine, None, connection, domain, base_point);
        obj.validate()?;
        Ok(obj)
    }

    /// `g₁ = s₁ᵀs₁`, `g₂ = s₁⁻¹s₂` for a 2-jet frame section `s = (s₁, s₂)`.
    pub fn from_section(s1: Vec<Expr>, s2: Vec<Expr>, domain: Domain, base_point: Vec<f64>) -> Result<Self, GeomError> {
        let n = domain.dim();
        check_len(s1.len(), n * n)?;
        check_len(s2.len(), n * n * n)?;
        check_base(&domain, &base_point)?;
        let det = sym_det(&s1, n);
        for p in domain.grid(5).iter().chain(domain.random_points(100, PD_SEED, 1.0).iter()) {
            let d = det.eval(p).map_err(eval_err(p))?;
            if d.abs() <= 1e-12 {
                return Err(GeomError::SingularFrame { point: p.clone() });
            }
        }
        let mut g1 = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                g1.push(sum((0..n).map(|a| s1[a * n + i].clone() * s1[a * n + j].clone())));
            }
        }
        let inv = sym_inverse(&s1, n);
        let mut g2 = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    g2.push(sum((0..n).map(|s| inv[i * n + s].clone() * s2[(s * n + j) * n + k].clone())));
                }
            }
        }
        let obj = GeometricObject::raw(StructureKind::Riemannian, Some(g1), g2, domain, base_point);
        obj.validate()?;
        Ok(obj)
    }

    fn validate(&self) -> Result<(), GeomError> {
        let n = self.n;
        let tape0 = self.tape(0);
        let mut buf = Vec::new();
        let mut points = self.domain.grid(5);
        points.extend(self.domain.random_points(100, PD_SEED, 1.0));
        for p in &points {
            tape0.eval_into(p, &mut buf).map_err(eval_err(p))?;
            let (g, gam) = buf.split_at(self.metric_len());
            let scale = g.iter().chain(gam).fold(1.0f64, |m, v| m.max(v.abs()));
            let tol = 1e-12 * scale;
            for i in 0..n {
                for j in 0..n {
                    if !g.is_empty() && (g[i * n + j] - g[j * n + i]).abs() > tol {
                        return Err(GeomError::NotSymmetric { what: "metric", point: p.clone() });
                    }
                    for k in 0..n {
                        if (gam[(i * n + j) * n + k] - gam[(i * n + k) * n + j]).abs() > tol {
                            return Err(GeomError::NotSymmetric { what: "connection", point: p.clone() });
                        }
                    }
                }
            }
            if !g.is_empty() && DMatrix::from_row_slice(n, n, g).cholesky().is_none() {
                return Err(GeomError::NotPositiveDefinite { point: p.clone() });
            }
        }
        Ok(())
    }

    fn metric_len(&self) -> usize {
        if self.gij.is_some() {
            self.n * self.n
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn metric_exprs(&self) -> Option<&[Expr]> {
        self.gij.as_deref()
    }

    pub fn connection_exprs(&self) -> &[Expr] {
        &self.gijk
    }

    /// Same object with a different base point.
    pub fn with_base_point(&self, p: Vec<f64>) -> Result<Self, GeomError> {
        check_base(&self.domain, &p)?;
        let mut c = self.clone();
        c.base_point = p;
        Ok(c)
    }

    fn derived(&self) -> &Derived {
        self.derived.get_or_init(|| {
            let n = self.n;
            let g = self.gij.as_deref().unwrap_or(&[]);
            let d1 = |v: &[Expr]| -> Vec<Expr> { (0..n).flat_map(|a| v.iter().map(move |e| e.diff(a))).collect() };
            let dg = d1(g);
            let dgam = d1(&self.gijk);
            let d2g = d1(&dg);
            let d2gam = d1(&dgam);
            Derived { dg, dgam, d2g, d2gam }
        })
    }

    fn tape(&self, order: usize) -> &Tape {
        self.tapes[order].get_or_init(|| {
            let mut outs: Vec<Expr> = self.gij.clone().unwrap_or_default();
            outs.extend(self.gijk.iter().cloned());
            if order >= 1 {
                let d = self.derived();
                outs.extend(d.dg.iter().cloned());
                outs.extend(d.dgam.iter().cloned());
                if order >= 2 {
                    outs.extend(d.d2g.iter().cloned());
                    outs.extend(d.d2gam.iter().cloned());
                }
            }
            Tape::compile(&outs)
        })
    }

    /// Values and derivatives through `order` (0, 1 or 2) at `p`.
    pub fn jet_at(&self, p: &[f64], order: usize) -> Result<PointJet, GeomError> {
        assert!(order <= 2, "derivative order above 2");
        if p.len() != self.n {
            return Err(GeomError::Dimension { expected: self.n, got: p.len() });
        }
        let vals = self.tape(order).eval(p).map_err(eval_err(p))?;
        let n = self.n;
        let mut rest = vals.as_slice();
        let mut take = |len: usize| {
            let (head, tail) = rest.split_at(len);
            rest = tail;
            head.to_vec()
        };
        let ml = self.metric_len();
        let g = take(ml);
        let gam = take(n * n * n);
        let (dg, dgam) = if order >= 1 { (take(ml * n), take(n.pow(4))) } else { (vec![], vec![]) };
        let (d2g, d2gam) = if order >= 2 { (take(ml * n * n), take(n.pow(5))) } else { (vec![], vec![]) };
        let g_inv = if ml > 0 {
            let m = DMatrix::from_row_slice(n, n, &g);
            let inv = m.try_inverse().ok_or_else(|| GeomError::NotPositiveDefinite { point: p.to_vec() })?;
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect()
        } else {
            vec![]
        };
        Ok(PointJet { n, order, g, g_inv, gam, dg, dgam, d2g, d2gam })
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<Matrix, GeomError> {
        Ok(self.jet_at(p, 0)?.metric())
    }

    pub fn connection_at(&self, p: &[f64]) -> Result<Tensor3, GeomError> {
        Ok(self.jet_at(p, 0)?.connection())
    }

    /// Upper Cholesky factor `β` of the metric at `p` (`βᵀβ = g`); the
    /// identity for affine objects.
    pub fn frame_at(&self, p: &[f64]) -> Result<Matrix, GeomError> {
        if self.kind == StructureKind::Affine {
            return Ok(Matrix::identity(self.n, self.n));
        }
        let g = self.metric_at(p)?;
        let chol = g.cholesky().ok_or_else(|| GeomError::NotPositiveDefinite { point: p.to_vec() })?;
        Ok(chol.l().transpose())
    }

    /// The 2-jet frame `(β, βΓ)` at `p`; its coset invariant is `g(p)`.
    pub fn frame_jet_at(&self, p: &[f64]) -> Result<Jet2, GeomError> {
        let beta = self.frame_at(p)?;
        let gam = self.connection_at(p)?;
        Ok(Jet2::new(beta.clone(), gam.left_mul(&beta))?)
    }

    /// Pulls the object back through a chart `x = x(y)`. `chart[a]` expresses
    /// the old coordinate `xᵃ` in the new coordinates; `domain` and
    /// `base_point` live in the new coordinates.
    pub fn transform_chart(&self, chart: &[Expr], domain: Domain, base_point: Vec<f64>) -> Result<Self, GeomError> {
        let n = self.n;
        check_len(chart.len(), n)?;
        check_len(domain.dim(), n)?;
        check_base(&domain, &base_point)?;

        let jac: Vec<Expr> = (0..n).flat_map(|a| (0..n).map(move |j| (a, j))).map(|(a, j)| chart[a].diff(j)).collect();
        let hess: Vec<Expr> = (0..n)
            .flat_map(|a| (0..n).flat_map(move |j| (0..n).map(move |k| (a, j, k))))
            .map(|(a, j, k)| jac[a * n + j].diff(k))
            .collect();
        let det = sym_det(&jac, n);
        let check = Tape::compile(&[chart.to_vec(), vec![det.clone()]].concat());
        for p in domain.grid(5).iter().chain(domain.random_points(100, PD_SEED, 1.0).iter()) {
            let v = check.eval(p).map_err(eval_err(p))?;
            if v[n].abs() <= 1e-12 {
                return Err(GeomError::SingularJacobian { point: p.clone() });
            }
            if !self.domain.contains(&v[..n]) {
                return Err(GeomError::ChartLeavesDomain { point: p.clone() });
            }
        }
        let inv = sym_inverse(&jac, n);
        let pulled = |v: &[Expr]| -> Vec<Expr> { v.iter().map(|e| e.subst(chart)).collect() };
        let f1 = self.gij.as_deref().map(pulled);
        let f2 = pulled(&self.gijk);
        let (g1, g2) = transport_components(n, f1.as_deref(), &f2, &jac, &inv, &hess);
        let obj = GeometricObject::raw(self.kind, g1, g2, domain, base_point);
        obj.validate()?;
        Ok(obj)
    }

    /// A 2-jet `h` such that the quadratic chart `x = p + h₁y + ½h₂(y,y)`
    /// puts the object in regular form at `p`: `g_ij = δ_ij`, `gⁱ_jk = 0`.
    pub fn regular_normalization(&self, p: &[f64]) -> Result<Jet2, GeomError> {
        let pj = self.jet_at(p, 0)?;
        let n = self.n;
        let h1 = if pj.has_metric() {
            let chol = pj.metric().cholesky().ok_or_else(|| GeomError::NotPositiveDefinite { point: p.to_vec() })?;
            chol.l().transpose().try_inverse().expect("Cholesky factor is invertible")
        } else {
            Matrix::identity(n, n)
        };
        let h2 = pj.connection().lower_mul(&h1).scale(-1.0);
        Ok(Jet2::new(h1, h2)?)
    }
}

/// Components of the quadratic chart `x = p + h₁y + ½h₂(y,y)`.
pub fn quadratic_chart(p: &[f64], h: &Jet2) -> Vec<Expr> {
    let n = h.dim();
    (0..n)
        .map(|a| {
            let lin = sum((0..n).map(|j| h.a1()[(a, j)] * Expr::var(j)));
            let quad = sum((0..n).flat_map(|j| (0..n).map(move |k| (j, k))).map(|(j, k)| {
                (0.5 * h.a2()[(a, j, k)]) * Expr::var(j) * Expr::var(k)
            }));
            p[a] + lin + quad
        })
        .collect()
}

fn check_len(got: usize, expected: usize) -> Result<(), GeomError> {
    if got != expected {
        return Err(GeomError::Dimension { expected, got });
    }
    Ok(())
}

fn check_base(domain: &Domain, p: &[f64]) -> Result<(), GeomError> {
    if !domain.contains(p) {
        return Err(GeomError::OutsideDomain { point: p.to_vec() });
    }
    Ok(())
}

/// A 2-arrow from `source` to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrow2 {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub phi1: Matrix,
    pub phi2: Tensor3,
}

impl Arrow2 {
    pub fn new(source: Vec<f64>, target: Vec<f64>, jet: Jet2) -> Self {
        Arrow2 { source, target, phi1: jet.a1().clone(), phi2: jet.a2().clone() }
    }

    /// `β(y)⁻¹ ∘ β(x)` for the 2-jet frames of `g`; a member arrow.
    pub fn from_frames(g: &GeometricObject, x: &[f64], y: &[f64]) -> Result<Self, GeomError> {
        let bx = g.frame_jet_at(x)?;
        let by = g.frame_jet_at(y)?;
        Ok(Arrow2::new(x.to_vec(), y.to_vec(), by.inverse()?.compose(&bx)))
    }
}

/// Max-norm residuals of the two membership equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipResidual {
    pub metric: f64,
    pub connection: f64,
}

impl MembershipResidual {
    pub fn max(&self) -> f64 {
        self.metric.max(self.connection)
    }
}

/// Residuals of
///
/// ```text
/// g_ij(x) = g_ab(y) φᵃ_i φᵇ_j
/// gᵃ_jk(x) φⁱ_a = gⁱ_bc(y) φᵇ_j φᶜ_k + φⁱ_jk
/// ```
///
/// For affine objects the first residual is reported as 0.
pub fn arrow_membership(g: &GeometricObject, arrow: &Arrow2) -> Result<MembershipResidual, GeomError> {
    let jx = g.jet_at(&arrow.source, 0)?;
    let jy = g.jet_at(&arrow.target, 0)?;
    let phi = &arrow.phi1;
    let metric = if jx.has_metric() {
        let lhs = jx.metric();
        let rhs = phi.transpose() * jy.metric() * phi;
        max_abs_matrix(&(lhs - rhs))
    } else {
        0.0
    };
    let lhs = jx.connection().left_mul(phi);
    let rhs = jy.connection().lower_mul(phi).add(&arrow.phi2);
    Ok(MembershipResidual { metric, connection: lhs.max_abs_diff(&rhs) })
}
