//! Gauss–Hermite rules for expectations over standard normal variables.

/// Nodes and weights with `Σ w_k g(x_k) ≈ E[g(Z)]`, `Z ~ N(0, 1)`; exact for
/// polynomials of degree `< 2n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Orthonormal Hermite values `(p_{n-1}(x), p_n(x))` under the Gaussian measure.
fn orthonormal_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

impl GaussHermite {
    /// Roots of `p_n` by sign-change scanning then bisection; `n ≥ 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss–Hermite rule needs at least one node");
        let bound = (4.0 * n as f64 + 2.0).sqrt() + 1.0;
        let cells = 400 * n;
        let step = 2.0 * bound / cells as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut lo = -bound;
        let mut f_lo = orthonormal_pair(n, lo).1;
        for c in 1..=cells {
            let hi = -bound + c as f64 * step;
            let f_hi = orthonormal_pair(n, hi).1;
            if f_hi == 0.0 {
                nodes.push(hi);
            } else if f_lo * f_hi < 0.0 {
                nodes.push(bisect(n, lo, hi));
            }
            lo = hi;
            f_lo = f_hi;
        }
        assert_eq!(nodes.len(), n, "root scan missed a Hermite root");
        // symmetrize so odd moments vanish to round-off
        for k in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - k] - nodes[k]);
            nodes[k] = -m;
            nodes[n - 1 - k] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let mut weights: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let p = orthonormal_pair(n, x).0;
                1.0 / (n as f64 * p * p)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tensor-product points and weights for `m` independent standard normals.
    /// `m = 0` yields a single empty point of weight one.
    pub fn product(&self, m: usize) -> Vec<(Vec<f64>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for _ in 0..m {
            out = out
                .into_iter()
                .flat_map(|(z, w)| {
                    self.nodes.iter().zip(&self.weights).map(move |(&x, &v)| {
                        let mut z = z.clone();
                        z.push(x);
                        (z, w * v)
                    })
                })
                .collect();
        }
        out
    }
}

fn bisect(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = orthonormal_pair(n, lo).1;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = orthonormal_pair(n, mid).1;
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (1..k).step_by(2).map(f64::from).product()
    }

    #[test]
    fn reproduces_gaussian_moments() {
        for n in [1, 2, 3, 5, 8, 12, 20] {
            let gh = GaussHermite::new(n);
            assert_eq!(gh.len(), n);
            for k in 0..(2 * n as u32) {
                let m: f64 = gh
                    .nodes()
                    .iter()
                    .zip(gh.weights())
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = double_factorial_moment(k);
                // Odd moments cancel terms of size E|Z|^k; measure against that.
                let scale: f64 = gh
                    .nodes()
                    .iter()
                    .zip(gh.weights())
                    .map(|(x, w)| w * x.abs().powi(k as i32))
                    .sum();
                assert!(
                    (m - exact).abs() <= 1e-12 * scale.max(1.0),
                    "n={n} k={k}: {m} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn two_point_rule_is_plus_minus_one() {
        let gh = GaussHermite::new(2);
        assert!((gh.nodes()[0] + 1.0).abs() < 1e-14 && (gh.nodes()[1] - 1.0).abs() < 1e-14);
        assert!((gh.weights()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn product_rule_weights_sum_to_one() {
        let gh = GaussHermite::new(4);
        let p = gh.product(3);
        assert_eq!(p.len(), 64);
        let s: f64 = p.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-14);
        let cov: f64 = p.iter().map(|(z, w)| w * z[0] * z[2]).sum();
        assert!(cov.abs() < 1e-14);
        assert_eq!(gh.product(0), vec![(Vec::new(), 1.0)]);
    }

    #[test]
    fn expectation_of_cosine() {
        // E[cos(sZ)] = exp(−s²/2)
        let gh = GaussHermite::new(16);
        let s = 1.3;
        let m: f64 = gh
            .nodes()
            .iter()
            .zip(gh.weights())
            .map(|(x, w)| w * (s * x).cos())
            .sum();
        assert!((m - (-0.5 * s * s).exp()).abs() < 1e-10);
    }
}
