//! Dense multivariate polynomials in the monomial basis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core_math::{Domain, FunctionHandle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

/// All exponent vectors in `d` variables of total degree `≤ n`, graded order.
pub fn monomial_exponents(d: usize, n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=n {
        let mut cur = vec![0u32; d];
        fill(&mut out, &mut cur, 0, total as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        out.push(vec![]);
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        if terms.iter().any(|(e, _)| e.len() != dim) {
            return Err(Error::invalid("exponent length does not match the dimension"));
        }
        Ok(Self { dim, terms })
    }

    pub fn monomial(exponents: Vec<u32>) -> Self {
        Self { dim: exponents.len(), terms: vec![(exponents, 1.0)] }
    }

    /// Every monomial of degree `≤ n` with a coefficient uniform on `[-1, 1]`.
    pub fn random(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = monomial_exponents(dim, n).into_iter().map(|e| (e, rng.gen_range(-1.0..=1.0))).collect();
        Self { dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().filter(|(_, c)| *c != 0.0).map(|(e, _)| e.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.degree();
        let mut pows = vec![1.0; self.dim * (n + 1)];
        for (i, &xi) in x.iter().take(self.dim).enumerate() {
            for k in 1..=n {
                pows[i * (n + 1) + k] = pows[i * (n + 1) + k - 1] * xi;
            }
        }
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().enumerate().map(|(i, &k)| pows[i * (n + 1) + k as usize]).product::<f64>())
            .sum()
    }

    /// `∂_i` with a 0-based axis.
    pub fn partial(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[i] > 0)
            .map(|(e, c)| {
                let mut e2 = e.clone();
                e2[i] -= 1;
                (e2, c * e[i] as f64)
            })
            .collect();
        Polynomial { dim: self.dim, terms }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial { dim: self.dim, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn to_handle(&self, domain: Domain) -> Result<FunctionHandle> {
        if domain.dim() != self.dim {
            return Err(Error::invalid("polynomial dimension does not match the domain"));
        }
        let p = self.clone();
        Ok(FunctionHandle::new(domain, move |x| p.eval(x)).with_degree(self.degree()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_derivatives() {
        assert_eq!(monomial_exponents(3, 2).len(), 10);
        assert_eq!(monomial_exponents(2, 8).len(), 45);
        let p = Polynomial::new(2, vec![(vec![2, 1], 3.0), (vec![0, 0], 1.0)]).unwrap();
        assert_eq!(p.eval(&[2.0, 0.5]), 7.0);
        assert_eq!(p.partial(0).eval(&[2.0, 0.5]), 6.0);
        assert_eq!(p.partial(1).partial(1).degree(), 0);
        assert_eq!(p.degree(), 3);
        let r = Polynomial::random(3, 4, 7);
        assert_eq!(r, Polynomial::random(3, 4, 7));
        assert!(r.terms().iter().all(|(_, c)| c.abs() <= 1.0));
    }
}
