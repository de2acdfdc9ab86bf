//! Acceptance run: one PASS/FAIL line per criterion with the measured
//! residual, the tolerance and the wall time. Exits nonzero if any fails.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jetgeom::algebroid::{algebraic_bracket_point, fiber_basis, membership_at, prolong, spencer_bracket, JetVectorField};
use jetgeom::cli::selftest::equivalence_row;
use jetgeom::curvature::{constant_curvature_fit, mc_constants};
use jetgeom::expr::Expr;
use jetgeom::integrator::{integrate_killing, killing_algebra, killing_verify, PathSpec, DEFAULT_STEP};
use jetgeom::jet::{
    coset_invariant, recover_conjugator, split_epsilon, split_schwarzian, Jet2, Jet3, SampledSplitting, StructureKind,
};
use jetgeom::metrics::{TestMetric, ALL};
use jetgeom::sample;
use jetgeom::tensor::{max_abs_matrix, Matrix, Tensor3};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Worst value seen, with a label for the report.
#[derive(Default)]
struct Worst {
    value: f64,
    label: String,
}

impl Worst {
    fn see(&mut self, v: f64, label: impl FnOnce() -> String) {
        if !(v <= self.value) {
            self.value = v;
            self.label = label();
        }
    }
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0)).qr().q()
}

/// 2-jet at 0 of the composite of the quadratic maps of `a` and `b`,
/// computed by symbolic substitution and differentiation.
fn taylor_compose(a: &Jet2, b: &Jet2) -> (Matrix, Tensor3) {
    let n = a.dim();
    let quad = |j: &Jet2, args: &[Expr]| -> Vec<Expr> {
        (0..n)
            .map(|i| {
                let mut e = Expr::zero();
                for s in 0..n {
                    e = e + Expr::num(j.a1()[(i, s)]) * args[s].clone();
                    for t in 0..n {
                        e = e + Expr::num(0.5 * j.a2()[(i, s, t)]) * args[s].clone() * args[t].clone();
                    }
                }
                e
            })
            .collect()
    };
    let vars: Vec<Expr> = (0..n).map(Expr::var).collect();
    let inner = quad(b, &vars);
    let comp = quad(a, &inner);
    let zero = vec![0.0; n];
    let c1 = Matrix::from_fn(n, n, |i, j| comp[i].diff(j).eval(&zero).unwrap());
    let c2 = Tensor3::from_fn(n, |i, j, k| comp[i].diff(j).diff(k).eval(&zero).unwrap());
    (c1, c2)
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut w = Worst::default();
    for n in 1..=3 {
        let id = Jet2::identity(n);
        for t in 0..1000 {
            let (a, b, c) = (sample::jet2(&mut rng, n), sample::jet2(&mut rng, n), sample::jet2(&mut rng, n));
            w.see(a.compose(&b).compose(&c).max_abs_diff(&a.compose(&b.compose(&c))), || format!("associativity n={n}"));
            let inv = a.inverse().unwrap();
            w.see(inv.compose(&a).max_abs_diff(&id), || format!("left inverse n={n}"));
            w.see(a.compose(&inv).max_abs_diff(&id), || format!("right inverse n={n}"));
            w.see(max_abs_matrix(&(split_epsilon(a.a1()).unwrap().project() - a.a1())), || format!("projection n={n}"));
            // F(ε(h)a) = F(a) for h orthogonal, and F(b) = F(a) forces ab⁻¹ ∈ ε(O(n))
            let h = orthogonal(&mut rng, n);
            let b2 = split_epsilon(&h).unwrap().compose(&a);
            let fa = coset_invariant(&a, StructureKind::Riemannian);
            let fb = coset_invariant(&b2, StructureKind::Riemannian);
            w.see(fa.max_abs_diff(&fb), || format!("invariance n={n}"));
            let q = a.compose(&b2.inverse().unwrap());
            let orth = max_abs_matrix(&(q.a1().transpose() * q.a1() - Matrix::identity(n, n)));
            w.see(orth.max(q.max_abs_diff(&split_epsilon(q.a1()).unwrap())), || format!("converse n={n}"));
            if t < 40 {
                let (c1, c2) = taylor_compose(&a, &b);
                let ab = a.compose(&b);
                w.see(max_abs_matrix(&(ab.a1() - c1)).max(ab.a2().max_abs_diff(&c2)), || format!("Taylor oracle n={n}"));
            }
        }
    }
    verdict(w.value <= 1e-10, format!("max residual {:.2e} ({}) tol 1e-10, 3000 samples", w.value, w.label))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut w = Worst::default();
    for t in 0..100 {
        let n = 1 + t % 3;
        let k0 = Tensor3::from_fn(n, |_, _, _| rng.gen_range(-1.0..=1.0));
        let mut k0s = k0.clone();
        k0s.symmetrize_lower();
        let (left, right) = (Jet2::kernel(k0.clone()), Jet2::kernel(k0.scale(-1.0)));
        let sigma = |b: &Matrix| left.compose(&split_epsilon(b).unwrap()).compose(&right);
        let points: Vec<Matrix> = (0..4).map(|_| sample::jet2(&mut rng, n).a1().clone()).collect();
        for lambda in [2.0, 3.0, -0.5] {
            let table = SampledSplitting::tabulate(sigma, lambda, &points);
            match recover_conjugator(&table, lambda) {
                Ok(k) => w.see(k.max_abs_diff(&k0s), || format!("n={n} lambda={lambda}")),
                Err(e) => w.see(f64::INFINITY, || format!("n={n} lambda={lambda}: {e}")),
            }
        }
    }
    verdict(w.value <= 1e-10, format!("max |k - k0| {:.2e} ({}) tol 1e-10, 100 conjugators x 3 lambdas", w.value, w.label))
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut schw = Worst::default();
    let mut count = 0;
    while count < 50 {
        let [a, b, c, d]: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..=2.0));
        if c.abs() < 0.3 || (b * c - a * d).abs() < 0.1 {
            continue;
        }
        count += 1;
        // jets from the symbolic derivatives of the map itself
        let x = Expr::var(0);
        let f = (Expr::num(a) + Expr::num(b) * x.clone()) / (Expr::num(c) + Expr::num(d) * x);
        let d1 = f.diff(0);
        let d2 = d1.diff(0);
        let d3 = d2.diff(0);
        let v = |e: &Expr| e.eval(&[0.0]).unwrap();
        let jet = Jet3::new(v(&d1), v(&d2), v(&d3)).unwrap();
        let s = split_schwarzian(&jet).unwrap();
        let scale = jet.a3.abs().max(1.0);
        schw.see(s.schwarzian.abs() / scale, || format!("({a:.2}+{b:.2}x)/({c:.2}+{d:.2}x)"));
    }
    let mut comp = Worst::default();
    for _ in 0..50 {
        let r: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..=2.0));
        if r[0].abs() < 0.1 || r[3].abs() < 0.1 {
            continue;
        }
        let (f, g) = (Jet3::new(r[0], r[1], r[2]).unwrap(), Jet3::new(r[3], r[4], r[5]).unwrap());
        let x = Expr::var(0);
        let poly = |j: &Jet3, t: Expr| {
            Expr::num(j.a1) * t.clone() + Expr::num(j.a2 / 2.0) * t.clone().powi(2) + Expr::num(j.a3 / 6.0) * t.powi(3)
        };
        let h = poly(&f, poly(&g, x));
        let oracle = [h.diff(0), h.diff(0).diff(0), h.diff(0).diff(0).diff(0)].map(|e| e.eval(&[0.0]).unwrap());
        let c = f.compose(&g);
        let d = (c.a1 - oracle[0]).abs().max((c.a2 - oracle[1]).abs()).max((c.a3 - oracle[2]).abs());
        comp.see(d / oracle.iter().fold(1.0f64, |m, v| m.max(v.abs())), || "composition".into());
    }
    verdict(
        schw.value <= 1e-12 && comp.value <= 1e-12,
        format!("Mobius Schwarzian {:.2e}, composition vs Taylor oracle {:.2e}, tol 1e-12", schw.value, comp.value),
    )
}

fn criterion_4() -> Verdict {
    let mut bad = Vec::new();
    for m in ALL {
        for n in [2, 3] {
            let g = m.object(n);
            for p in g.domain().random_points(20, 4 + n as u64, 0.95) {
                match fiber_basis(&g, &p) {
                    Ok(b) if b.len() == n * (n + 1) / 2 => {}
                    Ok(b) => bad.push(format!("{} n={n}: dim {}", m.name(), b.len())),
                    Err(e) => bad.push(format!("{} n={n}: {e}", m.name())),
                }
            }
        }
    }
    verdict(bad.is_empty(), if bad.is_empty() { "rank 3 (n=2) and 6 (n=3) at 200 points".to_string() } else { bad.join("; ") })
}

fn lie_bracket(x: &[Expr], y: &[Expr]) -> Vec<Expr> {
    let n = x.len();
    (0..n)
        .map(|i| {
            (0..n).fold(Expr::zero(), |acc, a| acc + x[a].clone() * y[i].diff(a) - y[a].clone() * x[i].diff(a))
        })
        .collect()
}

fn field_diff(a: &JetVectorField, b: &JetVectorField, p: &[f64]) -> f64 {
    let (u, v) = (a.eval(p).unwrap(), b.eval(p).unwrap());
    u.max_abs_diff(&v) / u.max_abs().max(v.max_abs()).max(1.0)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut w = Worst::default();
    let mut prev: Option<Vec<Expr>> = None;
    for t in 0..200 {
        let n = if t % 4 == 3 { 3 } else { 2 };
        let degree = if n == 3 { 2 } else { 3 };
        let x = sample::polynomial_field(&mut rng, n, degree);
        let y = sample::polynomial_field(&mut rng, n, degree);
        let p = sample::point(&mut rng, n, 1.0);
        let (jx, jy) = (prolong(&x, 2), prolong(&y, 2));
        let xy = spencer_bracket(&jx, &jy);
        let neg = spencer_bracket(&jy, &jx);
        let (u, v) = (xy.eval(&p).unwrap(), neg.eval(&p).unwrap());
        w.see(u.combine(1.0, &v, 1.0).max_abs() / u.max_abs().max(1.0), || format!("antisymmetry #{t}"));
        w.see(field_diff(&xy, &prolong(&lie_bracket(&x, &y), 2), &p), || format!("prolongation morphism #{t}"));
        // order-1 part only sees order-1 data
        let trunc = |f: &JetVectorField| JetVectorField::order2(f.x0.clone(), f.x1.clone(), vec![Expr::zero(); n * n * n]);
        let lo = spencer_bracket(&trunc(&jx), &trunc(&jy)).eval(&p).unwrap().project(1);
        w.see(lo.max_abs_diff(&u.project(1)) / u.max_abs().max(1.0), || format!("projection #{t}"));
        if let Some(z) = prev.take().filter(|z| z.len() == n) {
            let jz = prolong(&z, 2);
            let cyc = |a: &JetVectorField, b: &JetVectorField, c: &JetVectorField| spencer_bracket(&spencer_bracket(a, b), c).eval(&p).unwrap();
            let jac = cyc(&jx, &jy, &jz).combine(1.0, &cyc(&jy, &jz, &jx), 1.0).combine(1.0, &cyc(&jz, &jx, &jy), 1.0);
            w.see(jac.max_abs() / cyc(&jx, &jy, &jz).max_abs().max(1.0), || format!("Jacobi #{t}"));
        }
        prev = Some(x);
    }
    let g = TestMetric::Sphere.object(2);
    let mut closure = Worst::default();
    for p in g.domain().random_points(10, 55, 0.9) {
        let basis = fiber_basis(&g, &p).unwrap();
        let pj = g.jet_at(&p, 1).unwrap();
        for a in &basis {
            for b in &basis {
                match algebraic_bracket_point(a, b, &g, &p) {
                    Ok(br) => closure.see(membership_at(&pj, &br).max(), || format!("{p:?}")),
                    Err(e) => closure.see(f64::INFINITY, || e.to_string()),
                }
            }
        }
    }
    verdict(
        w.value <= 1e-9 && closure.value <= 1e-8,
        format!(
            "bracket laws {:.2e} ({}) tol 1e-9 on 200 pairs; sphere closure {:.2e} tol 1e-8",
            w.value, w.label, closure.value
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for m in ALL {
        match equivalence_row(m, 2, jetgeom::curvature::CURVATURE_SIGN, DEFAULT_STEP) {
            Ok(r) => {
                let preds = [r.algebroid_curvature, r.groupoid_curvature, r.fit_residual, r.monodromy];
                let pass = if m.curvature().is_some() {
                    preds.iter().all(|v| *v <= 1e-6)
                } else {
                    preds.iter().any(|v| *v >= 1e-3) && r.fit_residual >= 1e-2
                };
                ok &= pass;
                lines.push(format!(
                    "{}[N {:.1e} R {:.1e} fit {:.1e} mono {:.1e}]",
                    m.name(),
                    r.algebroid_curvature,
                    r.groupoid_curvature,
                    r.fit_residual,
                    r.monodromy
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{}: {e}", m.name()));
            }
        }
    }
    verdict(ok, lines.join(" "))
}

fn criterion_7() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2, 3] {
        let mut cs = Vec::new();
        for m in [TestMetric::Sphere, TestMetric::PoincareDisk, TestMetric::Euclidean, TestMetric::PolarFlat] {
            let g = m.object(n);
            let v = constant_curvature_fit(&g, &g.domain().random_points(20, 7, 0.9)).unwrap();
            let k = m.curvature().unwrap();
            ok &= if k == 0.0 { v.c.abs() <= 1e-8 } else { (v.c.abs() - 1.0).abs() <= 1e-6 && v.c.signum() == k.signum() };
            cs.push(format!("{}={:+.3e}", m.name(), v.c));
        }
        parts.push(format!("n={n}: {}", cs.join(" ")));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_8() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [TestMetric::Euclidean, TestMetric::Sphere, TestMetric::PoincareDisk] {
        let g = m.object(2);
        let samples = g.domain().random_points(6, 8, 0.9);
        match mc_constants(&g, &m.frame(2), &samples) {
            Ok(mc) => {
                ok &= mc.defect <= 1e-6;
                if m == TestMetric::Euclidean {
                    ok &= mc.upper.max_abs() == 0.0 && mc.lower.max_abs() == 0.0 && mc.defect == 0.0;
                }
                parts.push(format!("{} spread {:.1e} |c| {:.3}", m.name(), mc.defect, mc.upper.max_abs()));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}: {e}", m.name()));
            }
        }
    }
    verdict(ok, format!("{} (6 samples, tol 1e-6)", parts.join("; ")))
}

fn criterion_9() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, want) in [(TestMetric::Sphere, "negative definite"), (TestMetric::Euclidean, "degenerate"), (TestMetric::PoincareDisk, "indefinite")] {
        let g = m.object(2);
        match killing_algebra(&g, g.base_point()) {
            Ok(kb) => {
                let (p, z, q) = kb.signature;
                let shape = match (p, z, q) {
                    (0, 0, _) => "negative definite",
                    (_, z, _) if z > 0 => "degenerate",
                    (p, 0, q) if p > 0 && q > 0 => "indefinite",
                    _ => "other",
                };
                ok &= kb.dim() == 3 && shape == want && kb.jacobi_residual <= 1e-8;
                parts.push(format!("{} dim {} ({p},{z},{q}) jacobi {:.1e}", m.name(), kb.dim(), kb.jacobi_residual));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}: {e}", m.name()));
            }
        }
    }
    let fields: [(TestMetric, [&str; 2]); 3] = [
        (TestMetric::Sphere, ["-x2", "x1"]),
        (TestMetric::Sphere, ["1 + x1^2 - x2^2", "2*x1*x2"]),
        (TestMetric::PoincareDisk, ["1 - x1^2 + x2^2", "-2*x1*x2"]),
    ];
    let mut flow = Worst::default();
    for (m, f) in fields {
        let x: Vec<Expr> = f.iter().map(|t| jetgeom::expr::parse_expr(t, 2).unwrap()).collect();
        match killing_verify(&m.object(2), &x, 0.1) {
            Ok(d) => flow.see(d, || m.name().into()),
            Err(e) => flow.see(f64::INFINITY, || e.to_string()),
        }
    }
    ok &= flow.value <= 1e-6;
    verdict(ok, format!("{}; isometry flows {:.1e} tol 1e-6", parts.join("; "), flow.value))
}

fn criterion_10() -> Verdict {
    let g = TestMetric::Euclidean.object(2);
    let g = jetgeom::geom::GeometricObject::from_metric(
        g.metric_exprs().unwrap().to_vec(),
        None,
        jetgeom::geom::Domain::cube(2, 2.0),
        vec![0.0, 0.0],
    )
    .unwrap();
    let rot = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let exact = |q: &[f64]| jetgeom::algebroid::JetVector::order1(DVector::from_row_slice(&[-q[1], q[0]]), rot.clone());
    let init = exact(&[1.0, 0.0]);
    // an open arc: over a full period the quadrature errors cancel
    let err = |steps: usize| {
        let sweep = 2.0;
        let path = PathSpec::circle(vec![0.0, 0.0], 1.0, &[1.0, 0.0], &[0.0, 1.0], 0.0, sweep, sweep / steps as f64).unwrap();
        let end = integrate_killing(&g, &init, &path).unwrap().end.remove(0);
        end.max_abs_diff(&exact(&path.end()))
    };
    let (coarse, fine) = (err(16), err(32));
    let ratio = coarse / fine;
    verdict((12.0..=20.0).contains(&ratio), format!("error {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2} in [12, 20]"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, u64); 10] = [
        ("jet-group laws", criterion_1, 5),
        ("conjugator recovery", criterion_2, 1),
        ("Schwarzian splitting", criterion_3, 1),
        ("algebroid rank", criterion_4, 5),
        ("Spencer calculus", criterion_5, 10),
        ("equivalence suite", criterion_6, 30),
        ("space-form constants", criterion_7, 10),
        ("Maurer-Cartan constancy", criterion_8, 5),
        ("Killing algebra", criterion_9, 20),
        ("integrator convergence", criterion_10, 5),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let timing = if took > Duration::from_secs(*budget) { " (over budget)" } else { "" };
        println!(
            "criterion {:>2} {:<24} {}  {}  [{:.2}s / {}s{}]",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget,
            timing
        );
        if !v.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
