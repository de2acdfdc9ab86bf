//! The five reference metrics used by the self-test, the examples and the
//! test suites, in two and three dimensions.

use crate::expr::{parse_expr, Expr};
use crate::geom::{Domain, GeometricObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMetric {
    Euclidean,
    /// `dr² + r²dθ²` (plus `dz²` in three dimensions).
    PolarFlat,
    /// Stereographic round sphere, curvature +1.
    Sphere,
    /// Poincaré ball, curvature −1.
    PoincareDisk,
    /// `dx² + (1 + x²/2)dy²`, curvature not constant.
    Ellipsoid,
}

pub const ALL: [TestMetric; 5] =
    [TestMetric::Euclidean, TestMetric::PolarFlat, TestMetric::Sphere, TestMetric::PoincareDisk, TestMetric::Ellipsoid];

impl TestMetric {
    pub fn name(self) -> &'static str {
        match self {
            TestMetric::Euclidean => "euclidean",
            TestMetric::PolarFlat => "polar",
            TestMetric::Sphere => "sphere",
            TestMetric::PoincareDisk => "disk",
            TestMetric::Ellipsoid => "ellipsoid",
        }
    }

    /// Expected constant curvature, `None` for the ellipsoid.
    pub fn curvature(self) -> Option<f64> {
        match self {
            TestMetric::Euclidean | TestMetric::PolarFlat => Some(0.0),
            TestMetric::Sphere => Some(1.0),
            TestMetric::PoincareDisk => Some(-1.0),
            TestMetric::Ellipsoid => None,
        }
    }

    /// Metric entries as text, row-major.
    pub fn entries(self, n: usize) -> Vec<String> {
        let r2: String = (1..=n).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join("+");
        let diag = |i: usize| -> String {
            match self {
                TestMetric::Euclidean => "1".into(),
                TestMetric::PolarFlat => if i == 1 { "x1^2".into() } else { "1".into() },
                TestMetric::Sphere => format!("4/(1+{r2})^2"),
                TestMetric::PoincareDisk => format!("4/(1-({r2}))^2"),
                TestMetric::Ellipsoid => if i == 1 { "1+0.5*x1^2".into() } else { "1".into() },
            }
        };
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(if i == j { diag(i) } else { "0".into() });
            }
        }
        out
    }

    pub fn domain(self, n: usize) -> Domain {
        match self {
            TestMetric::PolarFlat => {
                let mut lo = vec![-1.0; n];
                let mut hi = vec![1.0; n];
                lo[0] = 0.5;
                hi[0] = 2.0;
                Domain::new(lo, hi).expect("valid box")
            }
            TestMetric::PoincareDisk => Domain::cube(n, 0.5),
            _ => Domain::cube(n, 1.0),
        }
    }

    pub fn base_point(self, n: usize) -> Vec<f64> {
        let mut p = vec![0.0; n];
        if self == TestMetric::PolarFlat {
            p[0] = 1.0;
        }
        p
    }

    pub fn object(self, n: usize) -> GeometricObject {
        let g: Vec<Expr> = self.entries(n).iter().map(|t| parse_expr(t, n).expect("catalog expression")).collect();
        GeometricObject::from_metric(g, None, self.domain(n), self.base_point(n)).expect("catalog metric is valid")
    }

    /// A conformal or diagonal orthonormal frame `β` with `βᵀβ = g`.
    pub fn frame(self, n: usize) -> Vec<Expr> {
        let g = self.entries(n);
        (0..n * n)
            .map(|q| {
                let text = if q / n == q % n { format!("sqrt({})", g[q]) } else { "0".into() };
                parse_expr(&text, n).expect("catalog expression")
            })
            .collect()
    }

    /// A nontrivial Killing field in two dimensions, as text.
    pub fn isometry(self) -> Option<[&'static str; 2]> {
        match self {
            TestMetric::Euclidean | TestMetric::Sphere | TestMetric::PoincareDisk => Some(["-x2", "x1"]),
            TestMetric::PolarFlat => Some(["0", "1"]),
            TestMetric::Ellipsoid => Some(["0", "1"]),
        }
    }

    /// The metric written in the metric file format.
    pub fn file_text(self, n: usize) -> String {
        let mut s = format!("# {} metric\ndimension = {n}\nkind = riemannian\n", self.name());
        s += &format!("coordinates = {}\n", (1..=n).map(|i| format!("x{i}")).collect::<Vec<_>>().join(", "));
        for (q, e) in self.entries(n).iter().enumerate() {
            let (i, j) = (q / n, q % n);
            if i <= j && e != "0" {
                s += &format!("g[{}][{}] = {e}\n", i + 1, j + 1);
            }
        }
        let d = self.domain(n);
        let boxes: Vec<String> = (0..n).map(|a| format!("[{}, {}]", d.lo()[a], d.hi()[a])).collect();
        s += &format!("domain = {}\n", boxes.join(" x "));
        let p: Vec<String> = self.base_point(n).iter().map(|v| format!("{v}")).collect();
        s += &format!("base_point = ({})\n", p.join(", "));
        s
    }
}
