//! Reproducible random inputs for the self-test and the test suites.

use rand::Rng;

use crate::expr::Expr;
use crate::jet::Jet2;
use crate::tensor::{Matrix, Tensor3};

/// `G₂(n)` element with `a₁ = I + 0.4·U` (U uniform in [−1, 1]), resampled
/// until `|det a₁| ≥ 0.2`, and `a₂` uniform in [−1, 1].
pub fn jet2<R: Rng>(rng: &mut R, n: usize) -> Jet2 {
    loop {
        let a1 = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.4 * rng.gen_range(-1.0..=1.0));
        if a1.determinant().abs() < 0.2 {
            continue;
        }
        let a2 = Tensor3::from_fn(n, |_, _, _| rng.gen_range(-1.0..=1.0));
        return Jet2::new(a1, a2).expect("determinant checked above");
    }
}

/// Exponent vectors of all monomials of total degree ≤ `degree`.
pub fn monomials(n: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|e: Vec<u32>| {
                let used: u32 = e.iter().sum();
                (0..=(degree as u32 - used)).map(move |k| {
                    let mut f = e.clone();
                    f.push(k);
                    f
                })
            })
            .collect();
    }
    out
}

/// Polynomial vector field with coefficients uniform in [−1, 1].
pub fn polynomial_field<R: Rng>(rng: &mut R, n: usize, degree: usize) -> Vec<Expr> {
    let monos = monomials(n, degree);
    (0..n)
        .map(|_| {
            monos.iter().fold(Expr::zero(), |acc, e| {
                let term = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .fold(Expr::num(rng.gen_range(-1.0..=1.0)), |t, (a, &k)| t * Expr::var(a).powi(k as i32));
                acc + term
            })
        })
        .collect()
}

/// Point with coordinates uniform in [−r, r].
pub fn point<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..=r)).collect()
}
