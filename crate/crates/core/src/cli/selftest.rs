//! Built-in property suites run by `jetgeom selftest`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebroid::{fiber_basis, prolong, spencer_bracket, JetVectorField};
use crate::curvature::{algebroid_curvature, constant_curvature_fit_with, groupoid_curvature, SpaceForm, FIT_TOL};
use crate::geom::Arrow2;
use crate::integrator::{default_loops, monodromy_defect};
use crate::jet::{coset_invariant, coset_transport, split_epsilon, StructureKind};
use crate::metrics::{TestMetric, ALL};
use crate::sample;
use crate::tensor::{max_abs_matrix, Matrix};

pub const LAW_TOL: f64 = 1e-10;
pub const BRACKET_TOL: f64 = 1e-9;
pub const FLAT_TOL: f64 = 1e-6;
pub const WITNESS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Flips the sign convention of the curvature fit; a negative control.
    pub corrupt_convention: bool,
    /// Samples per dimension in the group-law suite.
    pub group_samples: usize,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: usize,
    pub failures: Vec<String>,
    pub max_residual: f64,
}

impl SuiteResult {
    fn new(name: &'static str) -> Self {
        SuiteResult { name, checks: 0, failures: Vec::new(), max_residual: 0.0 }
    }

    /// Records `residual ≤ tol`.
    fn small(&mut self, what: impl FnOnce() -> String, residual: f64, tol: f64) {
        self.checks += 1;
        if residual.is_finite() {
            self.max_residual = self.max_residual.max(residual);
        }
        if !(residual <= tol) {
            self.failures.push(format!("{} (residual {residual:e})", what()));
        }
    }

    fn holds(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = Matrix::from_fn(n, n, |_, _| rand::Rng::gen_range(rng, -1.0..=1.0));
    m.qr().q()
}

pub fn group_laws(samples: usize) -> SuiteResult {
    let mut s = SuiteResult::new("group_laws");
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a37);
    for n in 1..=3 {
        let id = crate::jet::Jet2::identity(n);
        for t in 0..samples {
            let (a, b, c) = (sample::jet2(&mut rng, n), sample::jet2(&mut rng, n), sample::jet2(&mut rng, n));
            let scale = 1.0 + a.max_abs() * b.max_abs() * c.max_abs();
            let lhs = a.compose(&b).compose(&c);
            s.small(|| format!("associativity n={n} #{t}"), lhs.max_abs_diff(&a.compose(&b.compose(&c))) / scale, LAW_TOL);
            let inv = a.inverse().expect("sampled jets are invertible");
            s.small(|| format!("left inverse n={n} #{t}"), inv.compose(&a).max_abs_diff(&id), LAW_TOL);
            s.small(|| format!("right inverse n={n} #{t}"), a.compose(&inv).max_abs_diff(&id), LAW_TOL);
            let eps = split_epsilon(a.a1()).expect("invertible");
            s.small(|| format!("projection of splitting n={n} #{t}"), max_abs_matrix(&(eps.project() - a.a1())), LAW_TOL);
            let h = orthogonal(&mut rng, n);
            let moved = split_epsilon(&h).expect("orthogonal").compose(&a);
            let fa = coset_invariant(&a, StructureKind::Riemannian);
            s.small(|| format!("coset invariance n={n} #{t}"), coset_invariant(&moved, StructureKind::Riemannian).max_abs_diff(&fa), LAW_TOL);
            let quotient = a.compose(&moved.inverse().expect("invertible"));
            let q1 = quotient.a1();
            let orth = max_abs_matrix(&(q1.transpose() * q1 - DMatrix::identity(n, n)));
            let in_image = quotient.max_abs_diff(&split_epsilon(q1).expect("invertible"));
            s.small(|| format!("equal invariants share a coset n={n} #{t}"), orth.max(in_image), LAW_TOL);
            let transported = coset_transport(&fa, &b);
            s.small(|| format!("transport law n={n} #{t}"), transported.max_abs_diff(&coset_invariant(&a.compose(&b), StructureKind::Riemannian)) / scale, LAW_TOL);
        }
    }
    s
}

fn field_residual(a: &JetVectorField, b: &JetVectorField, p: &[f64]) -> f64 {
    let (x, y) = (a.eval(p).expect("polynomial"), b.eval(p).expect("polynomial"));
    x.max_abs_diff(&y) / x.max_abs().max(y.max_abs()).max(1.0)
}

fn negate(x: &JetVectorField) -> JetVectorField {
    let neg = |v: &[crate::expr::Expr]| v.iter().map(|e| -e.clone()).collect();
    JetVectorField::order2(neg(&x.x0), neg(&x.x1), neg(&x.x2))
}

fn add(x: &JetVectorField, y: &JetVectorField) -> JetVectorField {
    let add = |a: &[crate::expr::Expr], b: &[crate::expr::Expr]| a.iter().zip(b).map(|(u, v)| u.clone() + v.clone()).collect();
    JetVectorField::order2(add(&x.x0, &y.x0), add(&x.x1, &y.x1), add(&x.x2, &y.x2))
}

pub fn bracket_laws(pairs: usize) -> SuiteResult {
    let mut s = SuiteResult::new("bracket_laws");
    let mut rng = ChaCha8Rng::seed_from_u64(0xb7ac);
    let zero = |n: usize| {
        let z = |k: usize| vec![crate::expr::Expr::zero(); k];
        JetVectorField::order2(z(n), z(n * n), z(n * n * n))
    };
    for t in 0..pairs {
        let n = 1 + t % 3;
        let (xs, ys, zs) = (
            sample::polynomial_field(&mut rng, n, 2),
            sample::polynomial_field(&mut rng, n, 2),
            sample::polynomial_field(&mut rng, n, 2),
        );
        let (x, y, z) = (prolong(&xs, 2), prolong(&ys, 2), prolong(&zs, 2));
        let p = sample::point(&mut rng, n, 1.0);
        let xy = spencer_bracket(&x, &y);
        s.small(|| format!("antisymmetry n={n} #{t}"), field_residual(&xy, &negate(&spencer_bracket(&y, &x)), &p), BRACKET_TOL);
        s.small(|| format!("prolongation morphism n={n} #{t}"), field_residual(&xy, &prolong(&xy.x0, 2), &p), BRACKET_TOL);
        let jac = add(&add(&spencer_bracket(&xy, &z), &spencer_bracket(&spencer_bracket(&y, &z), &x)), &spencer_bracket(&spencer_bracket(&z, &x), &y));
        s.small(|| format!("Jacobi n={n} #{t}"), field_residual(&jac, &zero(n), &p), BRACKET_TOL);
    }
    s
}

/// Predicates that must agree on each reference metric.
#[derive(Debug, Clone)]
pub struct EquivalenceRow {
    pub metric: TestMetric,
    pub class: SpaceForm,
    pub c: f64,
    pub fit_residual: f64,
    /// `|𝔑|` relative to its hatted terms, over fiber bases at the samples.
    pub algebroid_curvature: f64,
    /// `|ℛ|` over frame arrows from the base point.
    pub groupoid_curvature: f64,
    pub monodromy: f64,
}

pub fn equivalence_row(m: TestMetric, n: usize, sign: f64, step: f64) -> Result<EquivalenceRow, String> {
    let g = m.object(n);
    let base = g.base_point().to_vec();
    let samples = g.domain().random_points(8, 0x5e9, 0.9);
    let verdict = constant_curvature_fit_with(&g, &samples, FIT_TOL, sign).map_err(|e| e.to_string())?;
    let mut alg: f64 = 0.0;
    let mut grp: f64 = 0.0;
    for p in &samples {
        let ac = algebroid_curvature(&g, p).map_err(|e| e.to_string())?;
        for b in fiber_basis(&g, p).map_err(|e| e.to_string())? {
            alg = alg.max(ac.evaluate(&b).relative());
        }
        let arrow = Arrow2::from_frames(&g, &base, p).map_err(|e| e.to_string())?;
        grp = grp.max(groupoid_curvature(&g, &base, p, &arrow.phi1).map_err(|e| e.to_string())?.max_abs());
    }
    let loops = default_loops(g.domain(), &base, step);
    let monodromy = match monodromy_defect(&g, &base, &loops) {
        Ok(d) => d,
        Err(crate::integrator::IntegratorError::ConstraintDrift { drift, .. }) => drift,
        Err(e) => return Err(e.to_string()),
    };
    Ok(EquivalenceRow {
        metric: m,
        class: verdict.class,
        c: verdict.c,
        fit_residual: verdict.residual,
        algebroid_curvature: alg,
        groupoid_curvature: grp,
        monodromy,
    })
}

pub fn equivalence(opts: &Options) -> SuiteResult {
    let mut s = SuiteResult::new("equivalence");
    let sign = if opts.corrupt_convention { -crate::curvature::CURVATURE_SIGN } else { crate::curvature::CURVATURE_SIGN };
    for m in ALL {
        let row = match equivalence_row(m, 2, sign, 1e-2) {
            Ok(r) => r,
            Err(e) => {
                s.holds(|| format!("{}: {e}", m.name()), false);
                continue;
            }
        };
        let name = m.name();
        match m.curvature() {
            Some(k) => {
                let expect = if k > 0.0 {
                    SpaceForm::Spherical
                } else if k < 0.0 {
                    SpaceForm::Hyperbolic
                } else {
                    SpaceForm::Flat
                };
                s.holds(|| format!("{name}: classified {} instead of {}", row.class.name(), expect.name()), row.class == expect);
                s.small(|| format!("{name}: curvature constant"), (row.c - k).abs().max(row.fit_residual), FLAT_TOL);
                s.small(|| format!("{name}: algebroid curvature on the fiber"), row.algebroid_curvature, FLAT_TOL);
                s.small(|| format!("{name}: groupoid curvature on frame arrows"), row.groupoid_curvature, FLAT_TOL);
                s.small(|| format!("{name}: monodromy"), row.monodromy, FLAT_TOL);
            }
            None => {
                s.holds(|| format!("{name}: fit residual {:e} below 1e-2", row.fit_residual), row.fit_residual >= 1e-2);
                let witness = row.algebroid_curvature.max(row.groupoid_curvature).max(row.monodromy);
                s.holds(|| format!("{name}: no curvature witness above 1e-3"), witness >= WITNESS_TOL);
                s.holds(|| format!("{name}: classified {}", row.class.name()), row.class == SpaceForm::NonConstant);
            }
        }
    }
    s
}

pub fn run(opts: &Options) -> Vec<SuiteResult> {
    let samples = if opts.group_samples == 0 { 100 } else { opts.group_samples };
    vec![group_laws(samples), bracket_laws(12), equivalence(opts)]
}
