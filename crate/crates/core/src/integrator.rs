//! Transport of Killing jets along paths and the Lie algebra they span.
//!
//! Along a path `p(t)` the order-1 jet `(Xⁱ, Xⁱ_j)` obeys
//!
//! ```text
//! d/dt Xⁱ   = Xⁱ_k ṗᵏ
//! d/dt Xⁱ_j = (−gⁱ_ak Xᵃ_j − gⁱ_aj Xᵃ_k + gᵃ_jk Xⁱ_a − Xᵃ∂_a gⁱ_jk) ṗᵏ
//! ```
//!
//! integrated with fixed-step classical RK4. The metric constraint is not
//! enforced, only monitored: its drift is itself a curvature signal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::algebroid::{algebraic_bracket_point, fiber_basis, stabilizer_fiber, AlgebroidError, JetVector};
use crate::curvature::{constant_curvature_fit_with, CurvatureError, FIT_TOL, CURVATURE_SIGN};
use crate::expr::{Expr, ExprError, Tape};
use crate::geom::{Domain, GeomError, GeometricObject, PointJet};
use crate::tensor::{max_abs_matrix, Matrix};

/// Constraint drift beyond which transport is abandoned.
pub const MAX_DRIFT: f64 = 1e-4;

/// Default RK step on unit-scale domains.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path leaves the domain at {point:?}")]
    LeavesDomain { point: Vec<f64> },
    #[error("initial jet violates the metric constraint (residual {residual:e})")]
    InitNotInFiber { residual: f64 },
    #[error("constraint drift {drift:e} at {point:?}")]
    ConstraintDrift { drift: f64, point: Vec<f64> },
    #[error("curvature is not constant (fit residual {residual:e})")]
    NotConstant { residual: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Algebroid(#[from] AlgebroidError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind {
    /// Straight segments through the listed points.
    Polyline(Vec<Vec<f64>>),
    /// `c + r(cos θ u + sin θ v)` for `θ` from `start` to `start + sweep`.
    Circle { center: Vec<f64>, radius: f64, u: Vec<f64>, v: Vec<f64>, start: f64, sweep: f64 },
}

/// A path in the chart together with its RK step (arc length per step).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub kind: PathKind,
    pub step: f64,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

impl PathSpec {
    pub fn polyline(points: Vec<Vec<f64>>, step: f64) -> Result<Self, IntegratorError> {
        if points.len() < 2 {
            return Err(IntegratorError::InvalidPath("a polyline needs at least two points".into()));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(IntegratorError::InvalidPath("points of different dimension".into()));
        }
        PathSpec { kind: PathKind::Polyline(points), step }.checked()
    }

    /// Circle in the plane of the orthonormalized pair `(u, v)`.
    pub fn circle(center: Vec<f64>, radius: f64, u: &[f64], v: &[f64], start: f64, sweep: f64, step: f64) -> Result<Self, IntegratorError> {
        if !(radius > 0.0) || u.len() != center.len() || v.len() != center.len() {
            return Err(IntegratorError::InvalidPath("bad circle".into()));
        }
        let u = unit(u);
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let v: Vec<f64> = v.iter().zip(&u).map(|(b, a)| b - dot * a).collect();
        if v.iter().map(|x| x * x).sum::<f64>() < 1e-24 {
            return Err(IntegratorError::InvalidPath("circle plane is degenerate".into()));
        }
        let v = unit(&v);
        PathSpec { kind: PathKind::Circle { center, radius, u, v, start, sweep }, step }.checked()
    }

    /// Full circle of radius `r` starting and ending at `p`, with centre
    /// `p + r·u`.
    pub fn loop_through(p: &[f64], radius: f64, u: &[f64], v: &[f64], step: f64) -> Result<Self, IntegratorError> {
        let u = unit(u);
        let center: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + radius * b).collect();
        let back: Vec<f64> = u.iter().map(|x| -x).collect();
        PathSpec::circle(center, radius, &back, v, 0.0, std::f64::consts::TAU, step)
    }

    fn checked(self) -> Result<Self, IntegratorError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(IntegratorError::InvalidPath("step must be positive".into()));
        }
        Ok(self)
    }

    fn segments(&self) -> Vec<Segment<'_>> {
        match &self.kind {
            PathKind::Polyline(pts) => pts.windows(2).map(|w| Segment::Line(&w[0], &w[1])).collect(),
            PathKind::Circle { .. } => vec![Segment::Arc(self)],
        }
    }

    pub fn start(&self) -> Vec<f64> {
        self.segments()[0].at(0.0).0
    }

    pub fn end(&self) -> Vec<f64> {
        self.segments().last().expect("nonempty path").at(1.0).0
    }

    /// Sampled points, `per_segment` per segment, for domain checks.
    pub fn sample(&self, per_segment: usize) -> Vec<Vec<f64>> {
        self.segments()
            .iter()
            .flat_map(|s| (0..=per_segment).map(move |k| s.at(k as f64 / per_segment as f64).0))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.start().len()
    }
}

enum Segment<'a> {
    Line(&'a [f64], &'a [f64]),
    Arc(&'a PathSpec),
}

impl Segment<'_> {
    /// Position and velocity at parameter `t ∈ [0, 1]`.
    fn at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Segment::Line(a, b) => {
                let v: Vec<f64> = b.iter().zip(a.iter()).map(|(y, x)| y - x).collect();
                (a.iter().zip(&v).map(|(x, d)| x + t * d).collect(), v)
            }
            Segment::Arc(path) => {
                let PathKind::Circle { center, radius, u, v, start, sweep } = &path.kind else { unreachable!() };
                let th = start + t * sweep;
                let (s, c) = th.sin_cos();
                let p = (0..center.len()).map(|i| center[i] + radius * (c * u[i] + s * v[i])).collect();
                let vel = (0..center.len()).map(|i| sweep * radius * (-s * u[i] + c * v[i])).collect();
                (p, vel)
            }
        }
    }

    fn length(&self) -> f64 {
        match self {
            Segment::Line(a, b) => a.iter().zip(b.iter()).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt(),
            Segment::Arc(path) => {
                let PathKind::Circle { radius, sweep, .. } = &path.kind else { unreachable!() };
                radius * sweep.abs()
            }
        }
    }
}

/// Right-hand side for a batch of jets stored as consecutive `n + n²` blocks.
fn rhs(pj: &PointJet, vel: &[f64], state: &[f64], out: &mut [f64]) {
    let n = pj.n;
    let w = n + n * n;
    for (x, dx) in state.chunks(w).zip(out.chunks_mut(w)) {
        let (x0, x1) = x.split_at(n);
        let m = |i: usize, j: usize| x1[i * n + j];
        for i in 0..n {
            dx[i] = (0..n).map(|k| m(i, k) * vel[k]).sum();
        }
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    if vel[k] == 0.0 {
                        continue;
                    }
                    let mut p = 0.0;
                    for a in 0..n {
                        p += -pj.gam(i, a, k) * m(a, j) - pj.gam(i, a, j) * m(a, k) + pj.gam(a, j, k) * m(i, a)
                            - x0[a] * pj.dgam(a, i, j, k);
                    }
                    s += p * vel[k];
                }
                dx[n + i * n + j] = s;
            }
        }
    }
}

/// Metric constraint residual `Xᵃ∂_a g_ij + g_ai Xᵃ_j + g_aj Xᵃ_i`, relative to
/// `max(1, |X|)`.
fn drift(pj: &PointJet, state: &[f64]) -> f64 {
    if !pj.has_metric() {
        return 0.0;
    }
    let n = pj.n;
    let w = n + n * n;
    let mut worst: f64 = 0.0;
    for x in state.chunks(w) {
        let (x0, x1) = x.split_at(n);
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in i..n {
                let r: f64 = (0..n)
                    .map(|a| x0[a] * pj.dg(a, i, j) + pj.g(a, i) * x1[a * n + j] + pj.g(a, j) * x1[a * n + i])
                    .sum();
                worst = worst.max(r.abs() / scale);
            }
        }
    }
    worst
}

/// Result of transporting a batch of jets.
#[derive(Debug, Clone)]
pub struct Transport {
    pub end: Vec<JetVector>,
    /// Largest constraint residual seen at any step.
    pub max_drift: f64,
}

fn to_state(jets: &[JetVector]) -> Vec<f64> {
    jets.iter().flat_map(|j| j.order1_coefficients()).collect()
}

fn from_state(n: usize, state: &[f64]) -> Vec<JetVector> {
    state
        .chunks(n + n * n)
        .map(|c| JetVector::order1(DVector::from_column_slice(&c[..n]), DMatrix::from_row_slice(n, n, &c[n..])))
        .collect()
}

/// Transports several initial jets along one path, sharing the evaluation
/// of `g` at the RK nodes.
pub fn integrate_batch(
    g: &GeometricObject,
    init: &[JetVector],
    path: &PathSpec,
    max_drift: f64,
) -> Result<Transport, IntegratorError> {
    let n = g.dim();
    if path.dim() != n {
        return Err(IntegratorError::InvalidPath(format!("path dimension {} for a {n}-dimensional object", path.dim())));
    }
    let domain = g.domain();
    let eval = |p: &[f64]| -> Result<PointJet, IntegratorError> {
        if !domain.contains(p) {
            return Err(IntegratorError::LeavesDomain { point: p.to_vec() });
        }
        Ok(g.jet_at(p, 1)?)
    };
    let mut state = to_state(init);
    let start = eval(&path.start())?;
    let d0 = drift(&start, &state);
    if d0 > 1e-8 {
        return Err(IntegratorError::InitNotInFiber { residual: d0 });
    }
    let mut worst = d0;
    let len = state.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    for seg in path.segments() {
        let steps = (seg.length() / path.step).ceil().max(1.0) as usize;
        let h = 1.0 / steps as f64;
        let (p0, v0) = seg.at(0.0);
        let mut left = (eval(&p0)?, v0);
        for s in 0..steps {
            let t = s as f64 * h;
            let (pm, vm) = seg.at(t + 0.5 * h);
            let (pe, ve) = seg.at(if s + 1 == steps { 1.0 } else { t + h });
            let mid = eval(&pm)?;
            let right = eval(&pe)?;
            rhs(&left.0, &left.1, &state, &mut k1);
            for q in 0..len {
                tmp[q] = state[q] + 0.5 * h * k1[q];
            }
            rhs(&mid, &vm, &tmp, &mut k2);
            for q in 0..len {
                tmp[q] = state[q] + 0.5 * h * k2[q];
            }
            rhs(&mid, &vm, &tmp, &mut k3);
            for q in 0..len {
                tmp[q] = state[q] + h * k3[q];
            }
            rhs(&right, &ve, &tmp, &mut k4);
            for q in 0..len {
                state[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            let d = drift(&right, &state);
            worst = worst.max(d);
            if d > max_drift {
                return Err(IntegratorError::ConstraintDrift { drift: d, point: pe });
            }
            left = (right, ve);
        }
    }
    Ok(Transport { end: from_state(n, &state), max_drift: worst })
}

/// Transports one order-1 jet along `path`.
pub fn integrate_killing(g: &GeometricObject, init: &JetVector, path: &PathSpec) -> Result<Transport, IntegratorError> {
    integrate_batch(g, std::slice::from_ref(init), path, MAX_DRIFT)
}

/// Largest change of any fiber-basis jet at `p` after transport around the
/// loops.
pub fn monodromy_defect(g: &GeometricObject, p: &[f64], loops: &[PathSpec]) -> Result<f64, IntegratorError> {
    let basis: Vec<JetVector> = fiber_basis(g, p)?.iter().map(|b| b.project(1)).collect();
    for l in loops {
        let gap = l.start().iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-12 {
            return Err(IntegratorError::InvalidPath("loop is not based at the point".into()));
        }
    }
    let defects: Vec<Result<f64, IntegratorError>> = loops
        .par_iter()
        .map(|l| {
            let t = integrate_batch(g, &basis, l, MAX_DRIFT)?;
            Ok(t.end.iter().zip(&basis).map(|(e, b)| e.max_abs_diff(b)).fold(0.0, f64::max))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for d in defects {
        worst = worst.max(d?);
    }
    Ok(worst)
}

/// Loops based at `p`: circles in each coordinate plane, opening towards
/// whichever side keeps them inside the domain, plus a square.
pub fn default_loops(domain: &Domain, p: &[f64], step: f64) -> Vec<PathSpec> {
    let n = p.len();
    let r = 0.2 * domain.min_width();
    let axis = |a: usize, s: f64| -> Vec<f64> { (0..n).map(|i| if i == a { s } else { 0.0 }).collect() };
    let inside = |path: &PathSpec| path.sample(64).iter().all(|q| domain.contains(q));
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b || (n == 1) {
                continue;
            }
            for s in [1.0, -1.0] {
                if let Ok(l) = PathSpec::loop_through(p, r, &axis(a, s), &axis(b, 1.0), step) {
                    if inside(&l) {
                        out.push(l);
                        break;
                    }
                }
            }
        }
    }
    if n >= 2 {
        'square: for sa in [1.0, -1.0] {
            for sb in [1.0, -1.0] {
                let side = 1.5 * r;
                let corner = |da: f64, db: f64| -> Vec<f64> {
                    let mut q = p.to_vec();
                    q[0] += da * sa * side;
                    q[1] += db * sb * side;
                    q
                };
                let pts = vec![corner(0.0, 0.0), corner(1.0, 0.0), corner(1.0, 1.0), corner(0.0, 1.0), corner(0.0, 0.0)];
                if let Ok(sq) = PathSpec::polyline(pts, step) {
                    if inside(&sq) {
                        out.push(sq);
                        break 'square;
                    }
                }
            }
        }
    }
    out
}

/// Lie algebra of Killing jets at a base point.
#[derive(Debug, Clone)]
pub struct KillingBasis {
    pub point: Vec<f64>,
    /// Order-2 fiber elements; their order-1 parts are orthonormal.
    pub basis: Vec<JetVector>,
    /// `f[(c, a, b)]` with `[e_a, e_b] = f^c_ab e_c`, stored as
    /// `structure[c][a * dim + b]`.
    pub structure: Vec<Vec<f64>>,
    pub signature: (usize, usize, usize),
    /// Largest component of a bracket outside the span of the basis.
    pub closure_residual: f64,
    pub jacobi_residual: f64,
}

impl KillingBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn f(&self, c: usize, a: usize, b: usize) -> f64 {
        self.structure[c][a * self.dim() + b]
    }

    pub fn killing_form(&self) -> Matrix {
        let d = self.dim();
        DMatrix::from_fn(d, d, |a, b| {
            let mut s = 0.0;
            for c in 0..d {
                for e in 0..d {
                    s += self.f(e, a, c) * self.f(c, b, e);
                }
            }
            s
        })
    }
}

/// `(n₊, n₀, n₋)` of a symmetric matrix; eigenvalues within `1e-8·max|λ|`
/// (or `1e-12`) of zero count as null.
pub fn signature(m: &Matrix) -> (usize, usize, usize) {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let scale = eig.amax();
    let tol = (1e-8 * scale).max(1e-12);
    let pos = eig.iter().filter(|&&l| l > tol).count();
    let neg = eig.iter().filter(|&&l| l < -tol).count();
    (pos, eig.len() - pos - neg, neg)
}

/// Structure constants from pointwise brackets at `p`, after checking that
/// the curvature is constant on the domain.
pub fn killing_algebra(g: &GeometricObject, p: &[f64]) -> Result<KillingBasis, IntegratorError> {
    let samples = g.domain().random_points(20, 0xc0ffee, 0.9);
    let verdict = constant_curvature_fit_with(g, &samples, FIT_TOL, CURVATURE_SIGN)?;
    if verdict.residual > FIT_TOL {
        return Err(IntegratorError::NotConstant { residual: verdict.residual });
    }
    killing_algebra_unchecked(g, p)
}

pub fn killing_algebra_unchecked(g: &GeometricObject, p: &[f64]) -> Result<KillingBasis, IntegratorError> {
    let basis = fiber_basis(g, p)?;
    let d = basis.len();
    let coeffs: Vec<DVector<f64>> = basis.iter().map(|b| DVector::from_vec(b.order1_coefficients())).collect();
    let mut structure = vec![vec![0.0; d * d]; d];
    let mut closure: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let br = algebraic_bracket_point(&basis[a], &basis[b], g, p)?;
            let v = DVector::from_vec(br.order1_coefficients());
            let mut rest = v.clone();
            for c in 0..d {
                let f = coeffs[c].dot(&v);
                structure[c][a * d + b] = f;
                rest -= &coeffs[c] * f;
            }
            closure = closure.max(rest.amax());
        }
    }
    let mut kb = KillingBasis {
        point: p.to_vec(),
        basis,
        structure,
        signature: (0, 0, 0),
        closure_residual: closure,
        jacobi_residual: 0.0,
    };
    kb.jacobi_residual = jacobi_residual(&kb);
    kb.signature = signature(&kb.killing_form());
    Ok(kb)
}

fn jacobi_residual(kb: &KillingBasis) -> f64 {
    let d = kb.dim();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for out in 0..d {
                    let mut s = 0.0;
                    for e in 0..d {
                        s += kb.f(e, a, b) * kb.f(out, e, c) + kb.f(e, b, c) * kb.f(out, e, a) + kb.f(e, c, a) * kb.f(out, e, b);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

/// Brackets of the stabilizer jets, measured outside their own span.
pub fn stabilizer_closure(g: &GeometricObject, p: &[f64]) -> Result<f64, IntegratorError> {
    let st = stabilizer_fiber(g, p)?;
    let coeffs: Vec<DVector<f64>> = st.iter().map(|b| DVector::from_vec(b.order1_coefficients())).collect();
    let mut worst: f64 = 0.0;
    for a in &st {
        for b in &st {
            let v = DVector::from_vec(algebraic_bracket_point(a, b, g, p)?.order1_coefficients());
            // the stabilizer basis is orthonormal, so this is the residual of
            // the orthogonal projection
            let mut rest = v.clone();
            for c in &coeffs {
                rest -= c * c.dot(&v);
            }
            worst = worst.max(rest.amax());
        }
    }
    Ok(worst)
}

/// Flows sample points along `X` for time `t`, pulls the metric back through
/// the finite-difference Jacobian of the flow and returns the largest
/// deviation from the original metric.
pub fn killing_verify(g: &GeometricObject, x: &[Expr], t: f64) -> Result<f64, IntegratorError> {
    let samples = g.domain().random_points(10, 0xf10e, 0.5);
    killing_verify_at(g, x, t, &samples)
}

pub fn killing_verify_at(g: &GeometricObject, x: &[Expr], t: f64, samples: &[Vec<f64>]) -> Result<f64, IntegratorError> {
    let n = g.dim();
    let tape = Tape::compile(x);
    let domain = g.domain();
    let steps = 200usize;
    let flow = |start: &[f64]| -> Result<Vec<f64>, IntegratorError> {
        let dt = t / steps as f64;
        let mut y = start.to_vec();
        let f = |q: &[f64]| -> Result<Vec<f64>, IntegratorError> {
            if !domain.contains(q) {
                return Err(IntegratorError::LeavesDomain { point: q.to_vec() });
            }
            Ok(tape.eval(q)?)
        };
        let shift = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        for _ in 0..steps {
            let k1 = f(&y)?;
            let k2 = f(&shift(&y, &k1, 0.5 * dt))?;
            let k3 = f(&shift(&y, &k2, 0.5 * dt))?;
            let k4 = f(&shift(&y, &k3, dt))?;
            for i in 0..n {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if !domain.contains(&y) {
            return Err(IntegratorError::LeavesDomain { point: y });
        }
        Ok(y)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in samples {
        let end = flow(p)?;
        let mut jac = Matrix::zeros(n, n);
        for j in 0..n {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[j] += h;
            minus[j] -= h;
            let (fp, fm) = (flow(&plus)?, flow(&minus)?);
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let pulled = jac.transpose() * g.metric_at(&end)? * &jac;
        worst = worst.max(max_abs_matrix(&(pulled - g.metric_at(p)?)));
    }
    Ok(worst)
}
