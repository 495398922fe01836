use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DirectedGraph;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Spectral radius and principal eigenvector of an adjacency matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub rho: f64,
    /// Perron vector, entrywise nonnegative with unit sum. `None` when the
    /// matrix is nilpotent (`rho = 0`).
    pub u1: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// `||A^n||_inf^(1/n)`, an independent estimate of `rho`.
    pub gelfand: f64,
}

impl SpectralSummary {
    /// `||A u1 - rho u1||_inf`, or 0 when `u1` is undefined.
    pub fn residual(&self, g: &DirectedGraph) -> f64 {
        let Some(u) = &self.u1 else { return 0.0 };
        let mut au = vec![0.0; g.n()];
        g.apply(u, &mut au);
        au.iter()
            .zip(u)
            .map(|(a, x)| libm::fabs(a - self.rho * x))
            .fold(0.0, f64::max)
    }

    /// Agent with the largest principal-eigenvector entry, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        let u = self.u1.as_ref()?;
        let mut best = 0;
        for (i, &v) in u.iter().enumerate() {
            if v > u[best] + 1e-12 {
                best = i;
            }
        }
        Some(best)
    }
}

/// Gelfand estimate `||A^k||_inf^(1/k)` with running rescaling to avoid
/// overflow on dense graphs.
pub fn gelfand_estimate(g: &DirectedGraph, k: usize) -> f64 {
    let n = g.n();
    if k == 0 {
        return 1.0;
    }
    let base: Vec<f64> = (0..n * n)
        .map(|idx| if g.a(idx / n, idx % n) { 1.0 } else { 0.0 })
        .collect();
    let mut m = base.clone();
    let mut log_scale = 0.0;
    for _ in 1..k {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let mil = m[i * n + l];
                if mil == 0.0 {
                    continue;
                }
                for j in 0..n {
                    next[i * n + j] += mil * base[l * n + j];
                }
            }
        }
        let max = next.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        for v in next.iter_mut() {
            *v /= max;
        }
        log_scale += libm::log(max);
        m = next;
    }
    let norm = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>())
        .fold(0.0, f64::max);
    if norm == 0.0 {
        return 0.0;
    }
    libm::exp((libm::log(norm) + log_scale) / k as f64)
}

/// Spectral radius and Perron vector of `A`.
///
/// Nilpotency is detected exactly: for a 0/1 matrix, `A^n 1 = 0` iff
/// `A^n = 0`, in which case `rho = 0` and `u1` is undefined. Otherwise power
/// iteration runs on `A + I`, which has the same Perron vector, dominant value
/// `rho + 1`, and no competing eigenvalue of equal modulus, so periodic graphs
/// such as the bidirectional star still converge.
pub fn spectral_summary(g: &DirectedGraph, tol: f64, max_iter: usize) -> Result<SpectralSummary> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange { name: "tol", value: tol });
    }
    let n = g.n();
    let gelfand = gelfand_estimate(g, n);

    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    for k in 0..n {
        g.apply(&x, &mut y);
        core::mem::swap(&mut x, &mut y);
        if x.iter().all(|&v| v == 0.0) {
            return Ok(SpectralSummary {
                rho: 0.0,
                u1: None,
                converged: true,
                iterations: k + 1,
                gelfand: 0.0,
            });
        }
    }

    let mut u = vec![1.0 / n as f64; n];
    let mut au = vec![0.0; n];
    for it in 1..=max_iter {
        g.apply(&u, &mut au);
        // u has unit sum, so the Rayleigh-like ratio is just sum(A u).
        let rho: f64 = au.iter().sum();
        let residual = au
            .iter()
            .zip(&u)
            .map(|(a, x)| libm::fabs(a - rho * x))
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(SpectralSummary {
                rho,
                u1: Some(u),
                converged: true,
                iterations: it,
                gelfand,
            });
        }
        let total = rho + 1.0;
        for (ui, ai) in u.iter_mut().zip(&au) {
            *ui = (*ui + ai) / total;
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        gelfand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_chain, make_complete, make_star, Edge, TopologyConfig};

    fn summary(g: &DirectedGraph) -> SpectralSummary {
        spectral_summary(g, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    #[test]
    fn analytic_radii() {
        assert!((summary(&make_star(5).unwrap()).rho - 2.0).abs() < 1e-6);
        assert!((summary(&make_complete(5).unwrap()).rho - 4.0).abs() < 1e-6);
        let chain = summary(&make_chain(5).unwrap());
        assert_eq!(chain.rho, 0.0);
        assert!(chain.u1.is_none());
    }

    #[test]
    fn star_vector_peaks_at_hub() {
        let s = summary(&make_star(5).unwrap());
        let u = s.u1.as_ref().unwrap();
        assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Perron vector of K_{1,4}: hub sqrt(4) = 2 times each leaf.
        assert!((u[0] / u[1] - 2.0).abs() < 1e-6);
        assert_eq!(s.argmax(), Some(0));
    }

    #[test]
    fn complete_vector_is_uniform() {
        let s = summary(&make_complete(5).unwrap());
        for v in s.u1.as_ref().unwrap() {
            assert!((v - 0.2).abs() < 1e-9);
        }
        assert_eq!(s.argmax(), Some(0));
    }

    #[test]
    fn gelfand_is_consistent() {
        // The infinity-norm Gelfand estimate is an upper bound on rho.
        let star = make_star(5).unwrap();
        let est = gelfand_estimate(&star, 5);
        assert!(est >= 2.0 - 1e-9);
        assert!(est <= star.max_row_sum() + 1e-9);
        assert!((gelfand_estimate(&make_complete(5).unwrap(), 5) - 4.0).abs() < 1e-9);
        assert_eq!(gelfand_estimate(&make_chain(5).unwrap(), 5), 0.0);
    }

    #[test]
    fn residual_bound_holds() {
        let g = TopologyConfig::layered_horizontal(6, 1.0, 3).build().unwrap();
        let s = summary(&g);
        assert!(s.residual(&g) <= DEFAULT_TOL);
        // Bidirectional path on 6 nodes: 2 cos(pi / 7).
        let expected = 2.0 * libm::cos(core::f64::consts::PI / 7.0);
        assert!((s.rho - expected).abs() < 1e-6);
    }

    #[test]
    fn reports_non_convergence() {
        // Two equal cycles in series make the dominant eigenvalue defective,
        // so power iteration only converges like 1/k.
        let edges = [
            Edge::new(0, 1),
            Edge::new(1, 0),
            Edge::new(1, 2),
            Edge::new(2, 3),
            Edge::new(3, 2),
        ];
        let g = DirectedGraph::from_edges(4, edges).unwrap();
        match spectral_summary(&g, 1e-12, 200) {
            Err(Error::NotConverged { iterations, gelfand }) => {
                assert_eq!(iterations, 200);
                assert!(gelfand >= 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(spectral_summary(&make_star(3).unwrap(), 0.0, 10).is_err());
    }
}
