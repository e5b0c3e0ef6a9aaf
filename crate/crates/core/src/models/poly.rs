//! Dense monomial bases for multivariate polynomials.
//!
//! Monomials are ordered by total degree, then lexicographically with higher
//! powers of earlier coordinates first. For `d = 2, order = 2` the order is
//! `1, x1, x2, x1^2, x1 x2, x2^2`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    dim: usize,
    order: usize,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dim: usize, order: usize) -> Self {
        let mut exponents = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u32; dim];
            push_degree(&mut exponents, &mut current, 0, degree as u32);
        }
        Self {
            dim,
            order,
            exponents,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Index of the monomial with the given exponents, if present.
    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == exps)
    }

    pub fn monomials_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = monomial(e, x);
        }
    }

    /// Row `i` holds the partial derivatives of every monomial in `x_i`.
    pub fn monomial_gradients_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..self.dim {
            for (k, e) in self.exponents.iter().enumerate() {
                out[i * n + k] = monomial_partial(e, x, i);
            }
        }
    }

    pub fn eval(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(coeffs)
            .map(|(e, c)| c * monomial(e, x))
            .sum()
    }

    pub fn gradient_into(&self, coeffs: &[f64], x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .exponents
                .iter()
                .zip(coeffs)
                .map(|(e, c)| c * monomial_partial(e, x, i))
                .sum();
        }
    }

    pub fn hessian(&self, coeffs: &[f64], x: &[f64]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.exponents
                .iter()
                .zip(coeffs)
                .map(|(e, c)| c * monomial_second(e, x, i, j))
                .sum()
        })
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        current[pos] = 0;
        return;
    }
    if current.is_empty() {
        return;
    }
    for take in (0..=remaining).rev() {
        current[pos] = take;
        push_degree(out, current, pos + 1, remaining - take);
    }
    current[pos] = 0;
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product()
}

fn monomial_partial(e: &[u32], x: &[f64], i: usize) -> f64 {
    if e[i] == 0 {
        return 0.0;
    }
    let mut out = e[i] as f64;
    for (j, (&p, &v)) in e.iter().zip(x).enumerate() {
        let p = if j == i { p - 1 } else { p };
        out *= v.powi(p as i32);
    }
    out
}

fn monomial_second(e: &[u32], x: &[f64], i: usize, j: usize) -> f64 {
    let mut powers = e.to_vec();
    let mut factor = 1.0;
    for k in [i, j] {
        if powers[k] == 0 {
            return 0.0;
        }
        factor *= powers[k] as f64;
        powers[k] -= 1;
    }
    factor * monomial(&powers, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_two_dims() {
        let b = MonomialBasis::new(2, 2);
        let want: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(b.exponents(), want.as_slice());
    }

    #[test]
    fn basis_size_matches_binomial() {
        // C(d + p, p)
        assert_eq!(MonomialBasis::new(3, 3).len(), 20);
        assert_eq!(MonomialBasis::new(1, 4).len(), 5);
        assert_eq!(MonomialBasis::new(4, 1).len(), 5);
    }

    #[test]
    fn quadratic_derivatives() {
        // f = 3 + x1 x2 + 2 x2^2
        let b = MonomialBasis::new(2, 2);
        let c = [3.0, 0.0, 0.0, 0.0, 1.0, 2.0];
        let x = [0.5, -1.5];
        assert_eq!(b.eval(&c, &x), 3.0 + 0.5 * -1.5 + 2.0 * 2.25);
        let mut g = [0.0; 2];
        b.gradient_into(&c, &x, &mut g);
        assert_eq!(g, [-1.5, 0.5 + 4.0 * -1.5]);
        let h = b.hessian(&c, &x);
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h[(0, 1)], 1.0);
        assert_eq!(h[(1, 0)], 1.0);
        assert_eq!(h[(1, 1)], 4.0);
    }
}
