//! Curvature obstructions to complete integrability.
//!
//! Alternation is `[A]_[pq] = A_pq − A_qp` throughout, with no factor ½.
//! Layouts: the fraud Riemann tensor is stored as `R[(i, r, j, k)] = Rⁱ_rj,k`,
//! the algebroid curvature as `𝔑₂[(i, k, r, j)] = 𝔑ⁱ_kr,j` and
//! `𝔑₁[(k, i, j)] = 𝔑_ki,j`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebroid::JetVector;
use crate::expr::{Expr, ExprError, Tape};
use crate::geom::{GeomError, GeometricObject, PointJet};
use crate::jet::StructureKind;
use crate::tensor::{max_abs_matrix, Matrix, Tensor3, Tensor4};

/// Sign relating the fraud Riemann tensor to the constant of the
/// constant-curvature condition; fixed so that the unit sphere gives `c = +1`.
pub const CURVATURE_SIGN: f64 = 1.0;

/// Default tolerance for the constant-curvature fit.
pub const FIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("no sample points")]
    NoSamples,
    #[error("arrow first block is singular")]
    SingularArrow,
    #[error("frame does not match the metric at {point:?} (mismatch {mismatch:e})")]
    FrameMismatch { point: Vec<f64>, mismatch: f64 },
    #[error("curvature is not constant (fit residual {residual:e})")]
    NotConstant { residual: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// `Rⁱ_rj,k = [∂_r gⁱ_jk − gᵇ_rk gⁱ_jb]_[rj]`.
pub fn fraud_riemann_at(pj: &PointJet) -> Tensor4 {
    let n = pj.n;
    let t = |i: usize, r: usize, j: usize, k: usize| {
        pj.dgam(r, i, j, k) - (0..n).map(|b| pj.gam(b, r, k) * pj.gam(i, j, b)).sum::<f64>()
    };
    Tensor4::from_fn(n, |i, r, j, k| t(i, r, j, k) - t(i, j, r, k))
}

pub fn fraud_riemann(g: &GeometricObject, x: &[f64]) -> Result<Tensor4, CurvatureError> {
    Ok(fraud_riemann_at(&g.jet_at(x, 1)?))
}

/// Hatted second component, `𝔑̂ⁱ_kr,j`, for an order-1 jet.
fn hat2(pj: &PointJet, x0: &[f64], x1: &Matrix) -> Tensor4 {
    let n = pj.n;
    Tensor4::from_fn(n, |i, k, r, j| {
        let mut s = 0.0;
        for a in 0..n {
            s += x1[(a, k)] * pj.dgam(r, i, a, j);
            let b = a;
            let mut inner = pj.d2gam(r, b, i, j, k);
            for c in 0..n {
                inner += pj.gam(c, j, k) * pj.dgam(b, i, r, c) - pj.gam(i, c, k) * pj.dgam(b, c, j, r);
            }
            s += x0[b] * inner;
            let mut t_j = pj.dgam(r, i, b, k);
            let mut t_r = pj.dgam(b, i, j, k);
            let mut t_i = pj.dgam(r, b, j, k);
            for c in 0..n {
                t_j -= pj.gam(i, c, k) * pj.gam(c, b, r);
                t_r += -pj.gam(i, c, k) * pj.gam(c, b, j) + pj.gam(c, j, k) * pj.gam(i, b, c);
                t_i += pj.gam(c, j, k) * pj.gam(b, r, c);
            }
            s += x1[(b, j)] * t_j + x1[(b, r)] * t_r - x1[(i, b)] * t_i;
        }
        s
    })
}

/// Hatted first component, `𝔑̂_ki,j`.
fn hat1(pj: &PointJet, x0: &[f64], x1: &Matrix) -> Tensor3 {
    let n = pj.n;
    Tensor3::from_fn(n, |k, i, j| {
        let mut s = 0.0;
        for a in 0..n {
            s += x1[(a, k)] * pj.dg(a, i, j)
                + x0[a] * pj.d2g(k, a, i, j)
                + x1[(a, j)] * pj.dg(k, a, i)
                + x1[(a, i)] * pj.dg(k, a, j);
            for b in 0..n {
                s += -x1[(b, j)] * pj.g(a, i) * pj.gam(a, b, k) - x1[(b, k)] * pj.g(a, i) * pj.gam(a, b, j)
                    + x1[(a, b)] * pj.g(a, i) * pj.gam(b, j, k)
                    - x0[b] * pj.g(a, i) * pj.dgam(b, a, j, k);
            }
        }
        s
    })
}

/// The algebroid curvature at a point as coefficient matrices acting on
/// `(X⁰, X¹)` coefficient vectors (see [`JetVector::order1_coefficients`]).
#[derive(Debug, Clone)]
pub struct AlgebroidCurvature {
    pub n: usize,
    /// Rows index `(i, k, r, j)`.
    pub second: Matrix,
    /// Rows index `(k, i, j)`; empty for affine objects.
    pub first: Matrix,
    hat_second: Matrix,
    hat_first: Matrix,
}

/// Values of 𝔑 on one jet.
#[derive(Debug, Clone)]
pub struct CurvatureValue {
    pub second: Tensor4,
    pub first: Option<Tensor3>,
    /// Largest magnitude among the hatted terms before alternation.
    pub hat_scale: f64,
}

impl CurvatureValue {
    pub fn max_abs(&self) -> f64 {
        self.second.max_abs().max(self.first.as_ref().map_or(0.0, |t| t.max_abs()))
    }

    /// `|𝔑| / max(|𝔑̂|, 1)`.
    pub fn relative(&self) -> f64 {
        self.max_abs() / self.hat_scale.max(1.0)
    }
}

impl AlgebroidCurvature {
    pub fn evaluate(&self, x: &JetVector) -> CurvatureValue {
        let c = DVector::from_vec(x.order1_coefficients());
        let n = self.n;
        let s = &self.second * &c;
        let hs = &self.hat_second * &c;
        let first = (self.first.nrows() > 0).then(|| Tensor3::from_vec(n, (&self.first * &c).as_slice().to_vec()));
        let hf = if self.hat_first.nrows() > 0 { (&self.hat_first * &c).amax() } else { 0.0 };
        CurvatureValue {
            second: Tensor4::from_fn(n, |i, k, r, j| s[((i * n + k) * n + r) * n + j]),
            first,
            hat_scale: hs.amax().max(hf),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_matrix(&self.second).max(max_abs_matrix(&self.first))
    }
}

pub fn algebroid_curvature_at(pj: &PointJet, kind: StructureKind) -> AlgebroidCurvature {
    assert!(pj.order >= 2, "curvature needs second derivatives");
    let n = pj.n;
    let cols = n + n * n;
    let metric = kind == StructureKind::Riemannian && pj.has_metric();
    let mut second = Matrix::zeros(n.pow(4), cols);
    let mut hat_second = Matrix::zeros(n.pow(4), cols);
    let (mut first, mut hat_first) = if metric {
        (Matrix::zeros(n.pow(3), cols), Matrix::zeros(n.pow(3), cols))
    } else {
        (Matrix::zeros(0, cols), Matrix::zeros(0, cols))
    };
    for c in 0..cols {
        let mut coeff = vec![0.0; cols];
        coeff[c] = 1.0;
        let x0 = &coeff[..n];
        let x1 = DMatrix::from_row_slice(n, n, &coeff[n..]);
        let h2 = hat2(pj, x0, &x1);
        for i in 0..n {
            for k in 0..n {
                for r in 0..n {
                    for j in 0..n {
                        let row = ((i * n + k) * n + r) * n + j;
                        second[(row, c)] = h2[(i, k, r, j)] - h2[(i, r, k, j)];
                        hat_second[(row, c)] = h2[(i, k, r, j)];
                    }
                }
            }
        }
        if metric {
            let h1 = hat1(pj, x0, &x1);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let row = (k * n + i) * n + j;
                        first[(row, c)] = h1[(k, i, j)] - h1[(i, k, j)];
                        hat_first[(row, c)] = h1[(k, i, j)];
                    }
                }
            }
        }
    }
    AlgebroidCurvature { n, second, first, hat_second, hat_first }
}

pub fn algebroid_curvature(g: &GeometricObject, x: &[f64]) -> Result<AlgebroidCurvature, CurvatureError> {
    Ok(algebroid_curvature_at(&g.jet_at(x, 2)?, g.kind()))
}

/// Groupoid curvature for source `x`, target `y` and 1-arrow `φ`.
#[derive(Debug, Clone)]
pub struct GroupoidCurvature {
    /// `ℛⁱ_rj,k`.
    pub second: Tensor4,
    /// `ℛⁱ_kj` stored as `[(i, k, j)]`; absent for affine objects.
    pub first: Option<Tensor3>,
}

impl GroupoidCurvature {
    pub fn max_abs(&self) -> f64 {
        self.second.max_abs().max(self.first.as_ref().map_or(0.0, |t| t.max_abs()))
    }
}

pub fn groupoid_curvature(
    g: &GeometricObject,
    x: &[f64],
    y: &[f64],
    phi: &Matrix,
) -> Result<GroupoidCurvature, CurvatureError> {
    let n = g.dim();
    let phib = phi.clone().try_inverse().ok_or(CurvatureError::SingularArrow)?;
    let jx = g.jet_at(x, 1)?;
    let jy = g.jet_at(y, 1)?;
    let rx = fraud_riemann_at(&jx);
    let ry = fraud_riemann_at(&jy);

    // pushforward in two passes per index to keep it O(n^5)
    let mut t = rx.clone();
    t = Tensor4::from_fn(n, |i, a, b, c| (0..n).map(|d| phi[(i, d)] * t[(d, a, b, c)]).sum());
    t = Tensor4::from_fn(n, |i, r, b, c| (0..n).map(|a| t[(i, a, b, c)] * phib[(a, r)]).sum());
    t = Tensor4::from_fn(n, |i, r, j, c| (0..n).map(|b| t[(i, r, b, c)] * phib[(b, j)]).sum());
    t = Tensor4::from_fn(n, |i, r, j, k| (0..n).map(|c| t[(i, r, j, c)] * phib[(c, k)]).sum());
    let second = Tensor4::from_fn(n, |i, r, j, k| t[(i, r, j, k)] - ry[(i, r, j, k)]);

    let first = if g.kind() == StructureKind::Riemannian {
        let hat = Tensor3::from_fn(n, |i, k, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += phib[(b, a)] * jx.dg(k, b, j) * jy.g_inv(a, i);
                    for c in 0..n {
                        s -= phi[(a, k)] * phi[(b, j)] * jy.dg(a, c, b) * jy.g_inv(c, i);
                        for d in 0..n {
                            s += jy.g(a, b) * jy.gam(a, c, d) * phi[(c, k)] * phi[(b, j)] * jy.g_inv(d, i);
                            for e in 0..n {
                                s -= phib[(e, d)] * phi[(a, c)] * phi[(b, j)] * jy.g(a, b) * jx.gam(c, k, e) * jy.g_inv(d, i);
                            }
                        }
                    }
                }
            }
            s
        });
        Some(Tensor3::from_fn(n, |i, k, j| hat[(i, k, j)] - hat[(i, j, k)]))
    } else {
        None
    };
    Ok(GroupoidCurvature { second, first })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceForm {
    Spherical,
    Flat,
    Hyperbolic,
    NonConstant,
}

impl SpaceForm {
    pub fn name(self) -> &'static str {
        match self {
            SpaceForm::Spherical => "spherical",
            SpaceForm::Flat => "flat",
            SpaceForm::Hyperbolic => "hyperbolic",
            SpaceForm::NonConstant => "non_constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceFormVerdict {
    pub c: f64,
    pub residual: f64,
    pub class: SpaceForm,
}

/// Least-squares fit of `Rⁱ_kr,j = c(δⁱ_k g_jr − δⁱ_r g_jk)` over the
/// samples. The residual is the largest misfit relative to `max(1, |R|)`.
pub fn constant_curvature_fit(g: &GeometricObject, samples: &[Vec<f64>]) -> Result<SpaceFormVerdict, CurvatureError> {
    constant_curvature_fit_with(g, samples, FIT_TOL, CURVATURE_SIGN)
}

pub fn constant_curvature_fit_with(
    g: &GeometricObject,
    samples: &[Vec<f64>],
    tol: f64,
    sign: f64,
) -> Result<SpaceFormVerdict, CurvatureError> {
    if samples.is_empty() {
        return Err(CurvatureError::NoSamples);
    }
    let n = g.dim();
    let mut data = Vec::with_capacity(samples.len());
    for p in samples {
        let pj = g.jet_at(p, 1)?;
        data.push((fraud_riemann_at(&pj), pj));
    }
    let scale = data.iter().fold(1.0f64, |m, (r, _)| m.max(r.max_abs()));

    if g.kind() == StructureKind::Affine {
        let residual = data.iter().fold(0.0f64, |m, (r, _)| m.max(r.max_abs())) / scale;
        let class = if residual <= tol { SpaceForm::Flat } else { SpaceForm::NonConstant };
        return Ok(SpaceFormVerdict { c: 0.0, residual, class });
    }

    let model = |pj: &PointJet, i: usize, k: usize, r: usize, j: usize| {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        d(i, k) * pj.g(j, r) - d(i, r) * pj.g(j, k)
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (rt, pj) in &data {
        for_each4(n, |i, k, r, j| {
            let m = model(pj, i, k, r, j);
            num += rt[(i, k, r, j)] * m;
            den += m * m;
        });
    }
    let c = if den > 0.0 { num / den } else { 0.0 };
    let mut misfit: f64 = 0.0;
    for (rt, pj) in &data {
        for_each4(n, |i, k, r, j| {
            misfit = misfit.max((rt[(i, k, r, j)] - c * model(pj, i, k, r, j)).abs());
        });
    }
    let residual = misfit / scale;
    let c = sign * c;
    let class = if residual > tol {
        SpaceForm::NonConstant
    } else if c.abs() <= 10.0 * tol {
        SpaceForm::Flat
    } else if c > 0.0 {
        SpaceForm::Spherical
    } else {
        SpaceForm::Hyperbolic
    };
    Ok(SpaceFormVerdict { c, residual, class })
}

fn for_each4(n: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for i in 0..n {
        for k in 0..n {
            for r in 0..n {
                for j in 0..n {
                    f(i, k, r, j);
                }
            }
        }
    }
}

/// The verdict computed from the metric alone, through its Levi-Civita
/// connection.
pub fn metric_verdict(g: &GeometricObject, samples: &[Vec<f64>]) -> Result<SpaceFormVerdict, CurvatureError> {
    let gij = g.metric_exprs().ok_or(CurvatureError::Geom(GeomError::MissingConnection))?.to_vec();
    let lc = GeometricObject::from_metric(gij, None, g.domain().clone(), g.base_point().to_vec())?;
    constant_curvature_fit(&lc, samples)
}

/// Frame-factored curvature expressions averaged over samples.
#[derive(Debug, Clone)]
pub struct MCConstants {
    /// `cⁱ_rj,k`.
    pub upper: Tensor4,
    /// `c_ik,j` stored as `[(i, k, j)]`.
    pub lower: Tensor3,
    /// Largest deviation of any sample from the mean.
    pub defect: f64,
}

fn mc_at(pj: &PointJet, beta: &Matrix) -> Option<(Tensor4, Tensor3)> {
    let n = pj.n;
    let bi = beta.clone().try_inverse()?;
    let r = fraud_riemann_at(pj);
    let mut t = Tensor4::from_fn(n, |i, a, b, c| (0..n).map(|d| beta[(i, d)] * r[(d, a, b, c)]).sum());
    t = Tensor4::from_fn(n, |i, r_, b, c| (0..n).map(|a| t[(i, a, b, c)] * bi[(a, r_)]).sum());
    t = Tensor4::from_fn(n, |i, r_, j, c| (0..n).map(|b| t[(i, r_, b, c)] * bi[(b, j)]).sum());
    t = Tensor4::from_fn(n, |i, r_, j, k| (0..n).map(|c| t[(i, r_, j, c)] * bi[(c, k)]).sum());
    let upper = Tensor4::from_fn(n, |i, r_, j, k| t[(i, r_, j, k)] - t[(i, j, r_, k)]);

    let lower = if pj.has_metric() {
        let tt = Tensor3::from_fn(n, |a, b, c| pj.dg(a, b, c) + (0..n).map(|d| pj.g(d, a) * pj.gam(d, b, c)).sum::<f64>());
        // w_ikj = β⁻¹ᵃ_i β⁻¹ᵇ_j β⁻¹ᶜ_k T_abc
        let w = Tensor3::from_fn(n, |i, k, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        s += bi[(a, i)] * bi[(b, j)] * bi[(c, k)] * tt[(a, b, c)];
                    }
                }
            }
            s
        });
        Tensor3::from_fn(n, |i, k, j| w[(i, k, j)] - w[(k, i, j)])
    } else {
        Tensor3::zeros(n)
    };
    Some((upper, lower))
}

/// Evaluates the frame-factored expressions with the frame `β` (row-major
/// n×n grid, `βᵀβ = g`) at each sample and reports mean and spread.
pub fn mc_constants(g: &GeometricObject, frame: &[Expr], samples: &[Vec<f64>]) -> Result<MCConstants, CurvatureError> {
    mc_constants_with(g, frame, samples, FIT_TOL)
}

pub fn mc_constants_with(
    g: &GeometricObject,
    frame: &[Expr],
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<MCConstants, CurvatureError> {
    if samples.is_empty() {
        return Err(CurvatureError::NoSamples);
    }
    let verdict = constant_curvature_fit_with(g, samples, tol, CURVATURE_SIGN)?;
    if verdict.residual > tol {
        return Err(CurvatureError::NotConstant { residual: verdict.residual });
    }
    let n = g.dim();
    let tape = Tape::compile(frame);
    let mut values = Vec::with_capacity(samples.len());
    for p in samples {
        let beta = DMatrix::from_row_slice(n, n, &tape.eval(p)?);
        let pj = g.jet_at(p, 1)?;
        if pj.has_metric() {
            let g_num = pj.metric();
            let mismatch = max_abs_matrix(&(beta.transpose() * &beta - &g_num));
            if mismatch > 1e-8 * max_abs_matrix(&g_num).max(1.0) {
                return Err(CurvatureError::FrameMismatch { point: p.clone(), mismatch });
            }
        }
        values.push(mc_at(&pj, &beta).ok_or(CurvatureError::Geom(GeomError::SingularFrame { point: p.clone() }))?);
    }
    let m = values.len() as f64;
    let upper = Tensor4::from_fn(n, |i, r, j, k| values.iter().map(|(u, _)| u[(i, r, j, k)]).sum::<f64>() / m);
    let lower = Tensor3::from_fn(n, |i, k, j| values.iter().map(|(_, l)| l[(i, k, j)]).sum::<f64>() / m);
    let defect = values
        .iter()
        .map(|(u, l)| u.max_abs_diff(&upper).max(l.max_abs_diff(&lower)))
        .fold(0.0, f64::max);
    Ok(MCConstants { upper, lower, defect })
}
