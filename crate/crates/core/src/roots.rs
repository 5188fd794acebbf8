//! Aberth–Ehrlich simultaneous root finding for polynomials given only as
//! value/derivative oracles.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy)]
pub struct AberthConfig {
    /// Newton-step size (relative to max(1,|z|)) at which a root counts as converged.
    pub residual_tol: f64,
    /// Roots closer than this are merged into one root with multiplicity.
    pub cluster_radius: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AberthConfig {
    fn default() -> Self {
        AberthConfig {
            residual_tol: 1e-12,
            cluster_radius: 1e-9,
            max_iter: 600,
            restarts: 6,
            seed: 0x7e55e7a,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub z: Complex64,
    /// Final Newton step size |p/p'|.
    pub residual: f64,
}

/// All `degree` roots of the monic polynomial whose value and derivative are
/// returned by `eval`. `radius` bounds the moduli of the roots.
pub fn aberth<F>(degree: usize, radius: f64, eval: F, cfg: &AberthConfig) -> Result<Vec<Root>>
where
    F: Fn(Complex64) -> (Complex64, Complex64),
{
    if degree == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (degree as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut best: Option<(f64, Vec<Root>)> = None;
    for attempt in 0..=cfg.restarts {
        let phase: f64 = rng.gen::<f64>() * TAU;
        let mut z: Vec<Complex64> = (0..degree)
            .map(|k| {
                let jitter: f64 = 0.8 + 0.4 * rng.gen::<f64>();
                Complex64::from_polar(radius * jitter * (1.0 + 0.1 * attempt as f64), phase + TAU * k as f64 / degree as f64)
            })
            .collect();
        let mut step = vec![f64::INFINITY; degree];
        let mut done = vec![false; degree];
        for _ in 0..cfg.max_iter {
            let mut all = true;
            for k in 0..degree {
                if done[k] {
                    continue;
                }
                let (p, dp) = eval(z[k]);
                if p == Complex64::new(0.0, 0.0) {
                    step[k] = 0.0;
                    done[k] = true;
                    continue;
                }
                let w = p / dp;
                let mut s = Complex64::new(0.0, 0.0);
                for j in 0..degree {
                    if j != k {
                        let diff = z[k] - z[j];
                        if diff.norm_sqr() > 0.0 {
                            s += diff.inv();
                        }
                    }
                }
                let denom = Complex64::new(1.0, 0.0) - w * s;
                let corr = if denom.norm() > 1e-300 && denom.is_finite() { w / denom } else { w };
                if !corr.is_finite() {
                    all = false;
                    continue;
                }
                z[k] -= corr;
                step[k] = corr.norm();
                if step[k] <= cfg.residual_tol * z[k].norm().max(1.0) {
                    done[k] = true;
                } else {
                    all = false;
                }
            }
            if all {
                break;
            }
        }
        let roots: Vec<Root> = z
            .iter()
            .map(|&zk| {
                let (p, dp) = eval(zk);
                let r = if p.norm() == 0.0 { 0.0 } else { (p / dp).norm() };
                Root { z: zk, residual: if r.is_finite() { r } else { f64::INFINITY } }
            })
            .collect();
        let worst = roots
            .iter()
            .map(|r| r.residual / r.z.norm().max(1.0))
            .fold(0.0f64, f64::max);
        let converged = done.iter().all(|&d| d) || worst <= cfg.residual_tol;
        if converged {
            return Ok(roots);
        }
        if best.as_ref().is_none_or(|(b, _)| worst < *b) {
            best = Some((worst, roots));
        }
    }
    // Multiple roots converge only linearly; accept if every Newton step is
    // at least at the clustering scale.
    let (worst, roots) = best.expect("at least one attempt");
    if worst <= cfg.cluster_radius * 1e-2 {
        return Ok(roots);
    }
    Err(Error::RootFindingFailure { max_residual: worst })
}

/// Groups roots closer than `radius` (transitively); returns centroid and size.
pub fn cluster(points: &[Complex64], radius: f64) -> Vec<(Complex64, usize)> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let nx = p[j];
            p[j] = r;
            j = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= radius {
                let a = find(&mut parent, i);
                let b = find(&mut parent, j);
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Complex64, usize)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if let Some(g) = groups.iter_mut().find(|g| g.0 == r) {
            g.1 += points[i];
            g.2 += 1;
        } else {
            groups.push((r, points[i], 1));
        }
    }
    groups
        .into_iter()
        .map(|(_, s, m)| (s / m as f64, m))
        .collect()
}

/// Roots of a monic polynomial given by ascending coefficients (last = 1).
pub fn monic_roots(coeffs: &[Complex64], cfg: &AberthConfig) -> Result<Vec<Root>> {
    let degree = coeffs.len() - 1;
    let bound = 1.0
        + coeffs[..degree]
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
    let eval = |z: Complex64| {
        let mut p = coeffs[degree];
        let mut dp = Complex64::new(0.0, 0.0);
        for c in coeffs[..degree].iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    let mut roots = aberth(degree, bound.min(1e6) * 0.5 + 0.5, eval, cfg)?;
    // Newton polish for simple roots.
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let (p, dp) = eval(r.z);
            if dp.norm() == 0.0 {
                break;
            }
            let s = p / dp;
            if !s.is_finite() || s.norm() > 1e-6 * r.z.norm().max(1.0) {
                break;
            }
            r.z -= s;
            r.residual = s.norm();
        }
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cubic_roots_of_unity() {
        let roots = monic_roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &AberthConfig::default()).unwrap();
        assert_eq!(roots.len(), 3);
        for k in 0..3 {
            let w = Complex64::from_polar(1.0, TAU * k as f64 / 3.0);
            assert!(roots.iter().any(|r| (r.z - w).norm() < 1e-12));
        }
    }

    #[test]
    fn double_root_clusters() {
        // (z-1)^2 (z+2) = z^3 - 3z + 2
        let roots = monic_roots(&[c(2.0, 0.0), c(-3.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &AberthConfig::default()).unwrap();
        let pts: Vec<_> = roots.iter().map(|r| r.z).collect();
        let mut cl = cluster(&pts, 1e-6);
        cl.sort_by(|a, b| a.0.re.partial_cmp(&b.0.re).unwrap());
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[1].1, 2);
        assert!((cl[1].0 - c(1.0, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cf = [c(0.3, 0.1), c(-1.0, 2.0), c(0.0, 0.0), c(0.5, 0.0), c(1.0, 0.0)];
        let a = monic_roots(&cf, &AberthConfig::default()).unwrap();
        let b = monic_roots(&cf, &AberthConfig::default()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.z, y.z);
        }
    }
}
