//! Reader for `.metric` definition files.
//!
//! ```text
//! # round sphere in stereographic coordinates
//! dimension = 2
//! kind = riemannian
//! coordinates = x, y
//! g[1][1] = 4/(1+x^2+y^2)^2
//! g[2][2] = 4/(1+x^2+y^2)^2
//! domain = [-1, 1] x [-1, 1]
//! base_point = (0, 0)
//! ```
//!
//! Indices are 1-based. Symmetric entries may be given once; giving both
//! halves with different expressions is an error. `gamma[i][j][k]` is
//! symmetric in `j, k` and, when present for a Riemannian file, replaces the
//! Levi-Civita connection (missing entries are zero).

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{parse_with_names, Expr};
use crate::geom::{Domain, GeomError, GeometricObject};
use crate::integrator::DEFAULT_STEP;
use crate::jet::StructureKind;

pub const DEFAULT_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based line, 0 when the problem is not tied to one line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, message: message.into() })
}

#[derive(Debug, Clone)]
pub struct MetricFile {
    pub dimension: usize,
    pub kind: StructureKind,
    pub coordinates: Vec<String>,
    /// Row-major n×n, symmetric.
    pub metric: Option<Vec<Expr>>,
    /// `[(i, j, k)]` row-major n×n×n, symmetric in the lower pair.
    pub connection: Option<Vec<Expr>>,
    pub domain: Domain,
    pub base_point: Vec<f64>,
    pub samples: usize,
    pub rk_step: f64,
}

/// Splits `name[1][2]` into `("name", [1, 2])`.
fn indexed_key(key: &str) -> Option<(&str, Vec<&str>)> {
    let open = key.find('[')?;
    let (name, mut rest) = key.split_at(open);
    let mut idx = Vec::new();
    while !rest.is_empty() {
        let body = rest.strip_prefix('[')?;
        let close = body.find(']')?;
        idx.push(body[..close].trim());
        rest = body[close + 1..].trim_start();
    }
    Some((name.trim(), idx))
}

fn parse_reals(text: &str, line: usize, what: &str) -> Result<Vec<f64>, ParseError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().or_else(|_| err(line, format!("{what}: `{}` is not a number", t.trim()))))
        .collect()
}

fn parse_domain(text: &str, line: usize) -> Result<(Vec<f64>, Vec<f64>), ParseError> {
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for part in text.split(['x', '×']) {
        let part = part.trim();
        let inner = part
            .strip_prefix('[')
            .and_then(|p| p.strip_suffix(']'))
            .map_or_else(|| err(line, format!("domain: expected `[lo, hi]`, found `{part}`")), Ok)?;
        let v = parse_reals(inner, line, "domain")?;
        if v.len() != 2 {
            return err(line, "domain: each interval needs exactly two bounds");
        }
        if !(v[0] < v[1]) || !v[0].is_finite() || !v[1].is_finite() {
            return err(line, format!("domain: degenerate interval [{}, {}]", v[0], v[1]));
        }
        lo.push(v[0]);
        hi.push(v[1]);
    }
    Ok((lo, hi))
}

struct Entry {
    line: usize,
    value: String,
}

impl MetricFile {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut plain: BTreeMap<String, Entry> = BTreeMap::new();
        let mut g_lines: Vec<(usize, Vec<String>, String)> = Vec::new();
        let mut gamma_lines: Vec<(usize, Vec<String>, String)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return err(line, format!("expected `key = value`, found `{body}`"));
            };
            let (key, value) = (key.trim(), value.trim().to_string());
            if value.is_empty() {
                return err(line, format!("`{key}` has no value"));
            }
            if let Some((name, idx)) = indexed_key(key) {
                let idx = idx.into_iter().map(String::from).collect();
                match name {
                    "g" => g_lines.push((line, idx, value)),
                    "gamma" => gamma_lines.push((line, idx, value)),
                    _ => return err(line, format!("unknown indexed key `{name}`")),
                }
                continue;
            }
            match key {
                "dimension" | "kind" | "coordinates" | "domain" | "base_point" | "samples" | "rk_step" => {
                    if plain.insert(key.to_string(), Entry { line, value }).is_some() {
                        return err(line, format!("`{key}` given twice"));
                    }
                }
                _ => return err(line, format!("unknown key `{key}`")),
            }
        }

        let required = |k: &str| plain.get(k).map_or_else(|| err(0, format!("missing `{k}`")), Ok);
        let dim = required("dimension")?;
        let n: usize = dim.value.parse().or_else(|_| err(dim.line, "dimension must be a positive integer"))?;
        if n == 0 {
            return err(dim.line, "dimension must be a positive integer");
        }
        let kind = match plain.get("kind") {
            None => StructureKind::Riemannian,
            Some(e) => match e.value.as_str() {
                "riemannian" => StructureKind::Riemannian,
                "affine" => StructureKind::Affine,
                other => return err(e.line, format!("kind must be riemannian or affine, found `{other}`")),
            },
        };
        let coordinates: Vec<String> = match plain.get("coordinates") {
            None => (1..=n).map(|i| format!("x{i}")).collect(),
            Some(e) => {
                let names: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
                if names.len() != n {
                    return err(e.line, format!("{} coordinate names for dimension {n}", names.len()));
                }
                for (a, name) in names.iter().enumerate() {
                    let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !ok {
                        return err(e.line, format!("`{name}` is not a valid coordinate name"));
                    }
                    if names[..a].contains(name) {
                        return err(e.line, format!("coordinate `{name}` repeated"));
                    }
                }
                names
            }
        };

        let index = |line: usize, raw: &str| -> Result<usize, ParseError> {
            match raw.parse::<usize>() {
                Ok(i) if (1..=n).contains(&i) => Ok(i - 1),
                _ => err(line, format!("index `{raw}` outside 1..{n}")),
            }
        };
        let expr = |line: usize, text: &str| -> Result<Expr, ParseError> {
            parse_with_names(text, &coordinates).or_else(|e| err(line, e.to_string()))
        };

        let metric = if g_lines.is_empty() {
            None
        } else {
            let mut cells: Vec<Option<(usize, String, Expr)>> = vec![None; n * n];
            let mut given = std::collections::HashSet::new();
            for (line, idx, text) in &g_lines {
                if idx.len() != 2 {
                    return err(*line, "metric entries take two indices");
                }
                let (i, j) = (index(*line, &idx[0])?, index(*line, &idx[1])?);
                let e = expr(*line, text)?;
                let twice = !given.insert((i, j));
                for (a, b) in if i == j { vec![(i, j)] } else { vec![(i, j), (j, i)] } {
                    if let Some((prev, prev_text, _)) = &cells[a * n + b] {
                        if twice || prev_text.replace(' ', "") != text.replace(' ', "") {
                            return err(*line, format!("g[{}][{}] conflicts with line {prev}", i + 1, j + 1));
                        }
                    }
                    cells[a * n + b] = Some((*line, text.clone(), e.clone()));
                }
            }
            Some(cells.into_iter().map(|c| c.map_or_else(Expr::zero, |c| c.2)).collect())
        };

        let connection = if gamma_lines.is_empty() {
            None
        } else {
            let mut cells: Vec<Option<(usize, String, Expr)>> = vec![None; n * n * n];
            let mut given = std::collections::HashSet::new();
            for (line, idx, text) in &gamma_lines {
                if idx.len() != 3 {
                    return err(*line, "connection entries take three indices");
                }
                let (i, j, k) = (index(*line, &idx[0])?, index(*line, &idx[1])?, index(*line, &idx[2])?);
                let e = expr(*line, text)?;
                let twice = !given.insert((i, j, k));
                for (b, c) in if j == k { vec![(j, k)] } else { vec![(j, k), (k, j)] } {
                    let q = (i * n + b) * n + c;
                    if let Some((prev, prev_text, _)) = &cells[q] {
                        if twice || prev_text.replace(' ', "") != text.replace(' ', "") {
                            return err(*line, format!("gamma[{}][{}][{}] conflicts with line {prev}", i + 1, j + 1, k + 1));
                        }
                    }
                    cells[q] = Some((*line, text.clone(), e.clone()));
                }
            }
            Some(cells.into_iter().map(|c| c.map_or_else(Expr::zero, |c| c.2)).collect())
        };

        match kind {
            StructureKind::Riemannian if metric.is_none() => return err(0, "riemannian files need g[i][j] entries"),
            StructureKind::Affine if connection.is_none() => return err(0, "affine files need gamma[i][j][k] entries"),
            StructureKind::Affine if metric.is_some() => return err(g_lines[0].0, "affine files take no metric"),
            _ => {}
        }

        let dom = required("domain")?;
        let (lo, hi) = parse_domain(&dom.value, dom.line)?;
        if lo.len() != n {
            return err(dom.line, format!("domain has {} intervals for dimension {n}", lo.len()));
        }
        let domain = Domain::new(lo, hi).or_else(|e| err(dom.line, e.to_string()))?;

        let base_point = match plain.get("base_point") {
            None => (0..n).map(|a| 0.5 * (domain.lo()[a] + domain.hi()[a])).collect(),
            Some(e) => {
                let inner = e
                    .value
                    .strip_prefix('(')
                    .and_then(|v| v.strip_suffix(')'))
                    .map_or_else(|| err(e.line, "base_point: expected `(p1, p2, ...)`"), Ok)?;
                let p = parse_reals(inner, e.line, "base_point")?;
                if p.len() != n {
                    return err(e.line, format!("base_point has {} coordinates for dimension {n}", p.len()));
                }
                if !domain.contains(&p) {
                    return err(e.line, "base_point lies outside the domain");
                }
                p
            }
        };

        let samples = match plain.get("samples") {
            None => DEFAULT_SAMPLES,
            Some(e) => match e.value.parse::<usize>() {
                Ok(s) if s > 0 => s,
                _ => return err(e.line, "samples must be a positive integer"),
            },
        };
        let rk_step = match plain.get("rk_step") {
            None => DEFAULT_STEP,
            Some(e) => match e.value.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => h,
                _ => return err(e.line, "rk_step must be a positive real"),
            },
        };

        Ok(MetricFile { dimension: n, kind, coordinates, metric, connection, domain, base_point, samples, rk_step })
    }

    /// Builds and validates the geometric object.
    pub fn object(&self) -> Result<GeometricObject, GeomError> {
        match self.kind {
            StructureKind::Riemannian => GeometricObject::from_metric(
                self.metric.clone().expect("checked at parse time"),
                self.connection.clone(),
                self.domain.clone(),
                self.base_point.clone(),
            ),
            StructureKind::Affine => GeometricObject::affine(
                self.connection.clone().expect("checked at parse time"),
                self.domain.clone(),
                self.base_point.clone(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{TestMetric, ALL};

    #[test]
    fn catalog_round_trip() {
        for m in ALL {
            for n in [2, 3] {
                let f = MetricFile::parse(&m.file_text(n)).unwrap();
                assert_eq!((f.dimension, f.samples, f.rk_step), (n, DEFAULT_SAMPLES, DEFAULT_STEP));
                let g = f.object().unwrap();
                let p = m.domain(n).random_points(1, 9, 0.7).remove(0);
                let diff = g.metric_at(&p).unwrap() - m.object(n).metric_at(&p).unwrap();
                assert!(diff.amax() == 0.0);
            }
        }
    }

    #[test]
    fn custom_names_and_connection() {
        let text = "dimension = 2\nkind = affine  # flat\ncoordinates = r, t\ngamma[2][1][2] = 1/r\ngamma[1][2][2] = -r\n\
                    domain = [0.5, 2] x [-1, 1]\nbase_point = (1, 0)\nsamples = 7\nrk_step = 0.01\n";
        let f = MetricFile::parse(text).unwrap();
        assert_eq!(f.coordinates, vec!["r", "t"]);
        assert_eq!((f.samples, f.rk_step), (7, 0.01));
        let c = f.connection.as_ref().unwrap();
        assert_eq!(c[(1 * 2 + 0) * 2 + 1].eval(&[2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(c[(1 * 2 + 1) * 2 + 0].eval(&[2.0, 0.0]).unwrap(), 0.5);
        assert!(f.object().is_ok());
    }

    #[test]
    fn rejects() {
        let base = "dimension = 2\ndomain = [-1, 1] x [-1, 1]\n";
        let cases = [
            ("g[1][3] = 1\n", 3, "outside 1..2"),
            ("g[1][1] = 1\ng[1][1] = 2\n", 4, "conflicts"),
            ("g[1][2] = x1\ng[2][1] = x2\n", 4, "conflicts"),
            ("g[1][1] = 1 +\n", 3, "syntax"),
            ("g[1][1] = z\n", 3, "unknown identifier"),
            ("g[1][1] = 1\nbase_point = (3, 0)\n", 4, "outside the domain"),
            ("g[1][1] = 1\nfoo = 1\n", 4, "unknown key"),
            ("g[1][1] = 1\ndimension = 2\n", 4, "twice"),
            ("g[1][1] = 1\nrk_step = -1\n", 4, "rk_step"),
        ];
        for (extra, line, needle) in cases {
            let e = MetricFile::parse(&format!("{base}{extra}")).unwrap_err();
            assert_eq!(e.line, line, "{extra}");
            assert!(e.message.contains(needle), "{}", e.message);
        }
        assert!(MetricFile::parse("dimension = 2\ndomain = [1, 1] x [0, 1]\ng[1][1] = 1\n").unwrap_err().message.contains("degenerate"));
        assert!(MetricFile::parse("dimension = 2\ng[1][1] = 1\n").unwrap_err().message.contains("missing `domain`"));
        assert!(MetricFile::parse("dimension = 2\nkind = affine\ndomain = [0, 1] x [0, 1]\n").is_err());
    }

    #[test]
    fn symmetric_entries_once_or_twice() {
        let text = "dimension = 2\ng[1][1] = 2\ng[2][2] = 2\ng[1][2] = 1\ng[2][1] = 1\ndomain = [-1, 1] x [-1, 1]\n";
        let f = MetricFile::parse(text).unwrap();
        assert_eq!(f.base_point, vec![0.0, 0.0]);
        assert!(f.object().is_ok());
        let m = TestMetric::Sphere.file_text(2).replace("g[2][2]", "g[2][1]");
        let g = MetricFile::parse(&m).unwrap();
        assert!(g.object().is_err());
    }
}
