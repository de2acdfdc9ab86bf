//! Line-oriented reports: one `# ` summary line for people, then
//! `key = value` lines for scripts.

use std::fmt::Write as _;

/// Reals carry 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn reals(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| real(*x)).collect::<Vec<_>>().join(", "))
}

pub fn ints(v: &[usize]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub summary: Vec<String>,
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn human(&mut self, line: impl Into<String>) -> &mut Self {
        self.summary.push(line.into());
        self
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn real(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, real(value))
    }

    pub fn int(&mut self, key: &str, value: usize) -> &mut Self {
        self.text(key, value.to_string())
    }

    /// `check.<name> = pass|fail` with its residual and threshold. Passing
    /// means `residual ≤ threshold`, or `≥` when `above` is set.
    pub fn check(&mut self, name: &str, residual: f64, threshold: f64, above: bool) -> bool {
        let pass = if above { residual >= threshold } else { residual <= threshold };
        self.text(&format!("check.{name}"), if pass { "pass" } else { "fail" });
        self.real(&format!("check.{name}.residual"), residual);
        self.real(&format!("check.{name}.threshold"), threshold);
        pass
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for line in &self.summary {
            let _ = writeln!(s, "# {line}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(real(1.0), "1.0000000000000000e0");
        assert_eq!(real(-0.125), "-1.2500000000000000e-1");
        assert_eq!(reals(&[0.0, 2.0]), "[0.0000000000000000e0, 2.0000000000000000e0]");
        assert_eq!(ints(&[0, 0, 3]), "[0, 0, 3]");
        let digits = real(std::f64::consts::PI).split('e').next().unwrap().replace(['.', '-'], "").len();
        assert_eq!(digits, 17);
        assert_eq!(real(std::f64::consts::PI).parse::<f64>().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn checks_and_render() {
        let mut r = Report::default();
        r.human("hello");
        assert!(r.check("small", 1e-9, 1e-6, false));
        assert!(!r.check("big", 1e-9, 1e-3, true));
        let out = r.render();
        assert!(out.starts_with("# hello\n"));
        assert!(out.contains("check.small = pass\n") && out.contains("check.big = fail\n"));
        assert_eq!(r.get("check.big"), Some("fail"));
    }
}
