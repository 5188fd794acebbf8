//! Green function, Böttcher coordinate, external rays and equipotentials.

use crate::error::{Error, Result};
use crate::lamination::{angle_orbit, RationalAngle};
use crate::polycore::MonicPolynomial;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayConfig {
    /// Potential of the first stored sample.
    pub l0: f64,
    pub l_min: f64,
    /// Newton continuation steps per halving of the potential.
    pub substeps: usize,
    pub max_bisections: usize,
    pub newton_iter: usize,
    /// Keep every continuation point, not only the dyadic levels.
    pub store_all: bool,
    pub landing_window: usize,
    pub landing_ratio: f64,
    pub polish: bool,
}

impl Default for RayConfig {
    fn default() -> Self {
        RayConfig {
            l0: 1.0,
            l_min: 1e-8,
            substeps: 4,
            max_bisections: 8,
            newton_iter: 60,
            store_all: false,
            landing_window: 8,
            landing_ratio: 0.9,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalRay {
    pub angle: RationalAngle,
    /// (potential, point), potentials strictly decreasing.
    pub samples: Vec<(f64, Complex64)>,
    pub landing: Option<Complex64>,
    /// Index of the level at which continuation failed, if it did.
    pub failed_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equipotential {
    pub level: f64,
    pub points: Vec<Complex64>,
}

pub const MAX_GREEN_ITER: usize = 4096;

/// A fibred polynomial dynamical system: fibre `v` is mapped by a monic
/// polynomial of degree `fiber_degree(v)` into fibre `next_fiber(v)`.
/// A single polynomial is the one-fibre case.
pub trait FiberDynamics: Sync {
    fn next_fiber(&self, v: usize) -> usize;
    fn fiber_degree(&self, v: usize) -> usize;
    fn fiber_eval_d(&self, v: usize, z: Complex64) -> (Complex64, Complex64);
    fn fiber_eval(&self, v: usize, z: Complex64) -> Complex64 {
        self.fiber_eval_d(v, z).0
    }
    /// Radius beyond which every fibre map at least doubles the modulus.
    fn escape_bound(&self) -> f64;
}

impl FiberDynamics for MonicPolynomial {
    fn next_fiber(&self, _v: usize) -> usize {
        0
    }
    fn fiber_degree(&self, _v: usize) -> usize {
        self.degree()
    }
    fn fiber_eval_d(&self, _v: usize, z: Complex64) -> (Complex64, Complex64) {
        self.eval_d(z)
    }
    fn fiber_eval(&self, _v: usize, z: Complex64) -> Complex64 {
        self.eval(z)
    }
    fn escape_bound(&self) -> f64 {
        self.escape_radius()
    }
}

/// log φ_v(w) for |w| beyond the escape bound, by the principal-branch product.
fn log_boettcher_far<F: FiberDynamics + ?Sized>(f: &F, v: usize, w: Complex64) -> Complex64 {
    let mut acc = w.ln();
    let mut z = w;
    let mut fib = v;
    let mut scale = 1.0;
    for _ in 0..200 {
        if z.norm() > 1e40 {
            break;
        }
        let d = f.fiber_degree(fib);
        scale /= d as f64;
        let zd = z.powu(d as u32);
        let fz = f.fiber_eval(fib, z);
        let ratio = fz / zd;
        acc += ratio.ln() * scale;
        if (ratio - 1.0).norm() * scale < 1e-20 {
            break;
        }
        z = fz;
        fib = f.next_fiber(fib);
    }
    acc
}

/// Potential above which the inverse Böttcher map is computed directly.
pub fn target_potential<F: FiberDynamics + ?Sized>(f: &F) -> f64 {
    (4.0 * f.escape_bound()).ln().max(1.0)
}

/// φ_v⁻¹(ζ) for |ζ| ≥ e^{target_potential}.
fn inverse_boettcher_far<F: FiberDynamics + ?Sized>(f: &F, v: usize, zeta: Complex64) -> Complex64 {
    let mut w = zeta;
    for _ in 0..200 {
        let phi = log_boettcher_far(f, v, w).exp();
        let nw = w * zeta / phi;
        let done = (nw - w).norm() <= 1e-16 * w.norm();
        w = nw;
        if done {
            break;
        }
    }
    w
}

/// First n with |z_n| beyond the escape bound, with the fibre and scale
/// (product of degrees) reached there.
fn escape_index<F: FiberDynamics + ?Sized>(f: &F, v: usize, z: Complex64, max_iter: usize) -> Option<(usize, usize, f64, Complex64)> {
    let r = f.escape_bound();
    let mut w = z;
    let mut fib = v;
    let mut scale = 1.0;
    for n in 0..=max_iter {
        if w.norm() > r {
            return Some((n, fib, scale, w));
        }
        scale *= f.fiber_degree(fib) as f64;
        w = f.fiber_eval(fib, w);
        fib = f.next_fiber(fib);
        if !w.is_finite() {
            return None;
        }
    }
    None
}

/// G_f(z); zero when the orbit does not escape within the budget.
pub fn green(f: &MonicPolynomial, z: Complex64) -> f64 {
    green_with(f, z, MAX_GREEN_ITER)
}

pub fn green_with(f: &MonicPolynomial, z: Complex64, max_iter: usize) -> f64 {
    fiber_green(f, 0, z, max_iter)
}

/// Fibrewise Green function G(v, z).
pub fn fiber_green<F: FiberDynamics + ?Sized>(f: &F, v: usize, z: Complex64, max_iter: usize) -> f64 {
    match escape_index(f, v, z, max_iter) {
        Some((_, fib, scale, w)) => log_boettcher_far(f, fib, w).re / scale,
        None => 0.0,
    }
}

/// Angle source for continuation: exact rationals or plain reals.
#[derive(Clone, Debug)]
enum Angle<'a> {
    Exact(&'a RationalAngle),
    Real(f64),
}

impl Angle<'_> {
    /// Fractional part of (δ_0·δ_1⋯)·t for the given degree sequence.
    fn frac_times(&self, degrees: &[usize]) -> f64 {
        match self {
            Angle::Exact(t) => {
                if degrees.iter().all(|&d| d == degrees[0]) && !degrees.is_empty() {
                    t.frac_mul_pow_f64(degrees[0] as u64, degrees.len() as u32)
                } else {
                    let mut x = (*t).clone();
                    for &d in degrees {
                        x = x.mul(d as u64);
                    }
                    x.to_f64()
                }
            }
            Angle::Real(x) => {
                let mut y = x.rem_euclid(1.0);
                for &d in degrees {
                    y = (y * d as f64).rem_euclid(1.0);
                }
                y
            }
        }
    }
}

/// Point of potential `l` on the ray of angle `a` in fibre `v`, by Newton
/// on the n-fold fibre iterate from `seed`.
fn solve_level<F: FiberDynamics + ?Sized>(f: &F, v: usize, a: &Angle, l: f64, seed: Complex64, lt: f64, iters: usize) -> Option<Complex64> {
    let mut big = l;
    let mut fib = v;
    let mut degrees = Vec::new();
    while big < lt {
        let d = f.fiber_degree(fib);
        degrees.push(d);
        big *= d as f64;
        fib = f.next_fiber(fib);
    }
    let zeta = Complex64::from_polar(big.exp(), TAU * a.frac_times(&degrees));
    let target = inverse_boettcher_far(f, fib, zeta);
    if degrees.is_empty() {
        return Some(target);
    }
    let mut z = seed;
    let mut prev = f64::INFINITY;
    for _ in 0..iters {
        let mut w = z;
        let mut dw = Complex64::new(1.0, 0.0);
        let mut g = v;
        for _ in 0..degrees.len() {
            let (p, dp) = f.fiber_eval_d(g, w);
            dw *= dp;
            w = p;
            g = f.next_fiber(g);
        }
        let step = (w - target) / dw;
        if !step.is_finite() {
            return None;
        }
        z -= step;
        let s = step.norm();
        let scale = z.norm().max(1e-3);
        // near a critical point rounding stalls Newton above 1e-14
        if s <= 1e-14 * scale || (s <= 1e-11 * scale && s >= 0.5 * prev) {
            return Some(z);
        }
        prev = s;
    }
    None
}

struct Trace {
    points: Vec<(f64, Complex64)>,
    failed_at: Option<usize>,
}

/// Continuation along the ray from the target potential down through `levels`
/// (strictly decreasing). Returns points at the requested levels (or all
/// continuation points when `store_all`).
fn continue_ray<F: FiberDynamics + ?Sized>(f: &F, v: usize, a: &Angle, levels: &[f64], cfg: &RayConfig) -> Trace {
    let lt = target_potential(f);
    let ratio = 0.5f64.powf(1.0 / cfg.substeps.max(1) as f64);
    let mut out = Vec::new();
    let mut cur_l = lt.max(levels[0]);
    let mut cur_z = match solve_level(f, v, a, cur_l, Complex64::new(0.0, 0.0), lt, cfg.newton_iter) {
        Some(z) => z,
        None => return Trace { points: out, failed_at: Some(0) },
    };
    let mut prev_speed: Option<f64> = None;
    if cur_l == levels[0] {
        out.push((cur_l, cur_z));
    }
    for (li, &target_l) in levels.iter().enumerate() {
        if target_l >= cur_l {
            continue;
        }
        let mut sched = Vec::new();
        let mut x = cur_l * ratio;
        while x > target_l * (1.0 + 1e-12) {
            sched.push(x);
            x *= ratio;
        }
        sched.push(target_l);
        for &l in &sched {
            match step_with_bisection(f, v, a, cur_l, cur_z, l, lt, prev_speed, cfg, 0) {
                Some((z, s)) => {
                    prev_speed = Some(s);
                    cur_l = l;
                    cur_z = z;
                    if cfg.store_all && l != target_l {
                        out.push((l, z));
                    }
                }
                None => {
                    return Trace { points: out, failed_at: Some(li) };
                }
            }
        }
        out.push((target_l, cur_z));
    }
    Trace { points: out, failed_at: None }
}

#[allow(clippy::too_many_arguments)]
fn step_with_bisection<F: FiberDynamics + ?Sized>(
    f: &F,
    v: usize,
    a: &Angle,
    from_l: f64,
    from_z: Complex64,
    to_l: f64,
    lt: f64,
    prev_speed: Option<f64>,
    cfg: &RayConfig,
    depth: usize,
) -> Option<(Complex64, f64)> {
    if let Some(z) = solve_level(f, v, a, to_l, from_z, lt, cfg.newton_iter) {
        // distance per unit of log-potential; a sudden jump in this speed
        // signals that Newton landed on a neighbouring ray
        let speed = (z - from_z).norm() / (from_l / to_l).ln();
        let ok = match prev_speed {
            Some(p) => speed <= 4.0 * p + 1e-14,
            None => true,
        };
        if ok {
            return Some((z, speed));
        }
    }
    if depth >= cfg.max_bisections {
        return None;
    }
    let mid = (from_l * to_l).sqrt();
    let (zm, sm) = step_with_bisection(f, v, a, from_l, from_z, mid, lt, prev_speed, cfg, depth + 1)?;
    step_with_bisection(f, v, a, mid, zm, to_l, lt, Some(sm), cfg, depth + 1)
}

/// Ray of rational angle t in fibre v of a fibred system, sampled at
/// l0·2^{-k} down to l_min. No landing point is attached.
pub fn trace_fiber_ray<F: FiberDynamics + ?Sized>(f: &F, v: usize, t: &RationalAngle, cfg: &RayConfig) -> Result<ExternalRay> {
    if !(cfg.l_min > 0.0) || cfg.l_min > cfg.l0 {
        return Err(Error::InvalidInput("need 0 < l_min ≤ l0".into()));
    }
    let levels = dyadic_levels(cfg);
    let tr = continue_ray(f, v, &Angle::Exact(t), &levels, cfg);
    Ok(ExternalRay { angle: t.clone(), samples: tr.points, landing: None, failed_at: tr.failed_at })
}

/// Geometric extrapolation of a ray's dyadic samples, `block` samples apart.
pub fn extrapolate_landing(samples: &[(f64, Complex64)], block: usize, cfg: &RayConfig) -> Option<(Complex64, f64)> {
    let p = block.max(1);
    let dyadic: Vec<Complex64> = samples
        .iter()
        .filter(|(l, _)| (l / cfg.l0).log2().fract().abs() < 1e-9)
        .map(|x| x.1)
        .collect();
    let n = dyadic.len();
    if n < 3 * p + 1 {
        return None;
    }
    let blocks = (n - 1) / p;
    let dist: Vec<f64> = (0..blocks).map(|k| (dyadic[n - 1 - k * p] - dyadic[n - 1 - (k + 1) * p]).norm()).collect();
    // dist[0] is the most recent block
    let window = cfg.landing_window.min(blocks - 1).max(2);
    if blocks < window + 1 {
        return None;
    }
    for k in 0..window {
        if dist[k] > cfg.landing_ratio * dist[k + 1] {
            return None;
        }
    }
    let v1 = dyadic[n - 1] - dyadic[n - 1 - p];
    let v0 = dyadic[n - 1 - p] - dyadic[n - 1 - 2 * p];
    let q = v1 / v0;
    let guess = if q.norm() < 1.0 { dyadic[n - 1] + v1 * q / (1.0 - q) } else { dyadic[n - 1] };
    let r = dist[0] / dist[1];
    Some((guess, dist[0] * r / (1.0 - r)))
}

fn dyadic_levels(cfg: &RayConfig) -> Vec<f64> {
    let mut v = Vec::new();
    let mut l = cfg.l0;
    while l >= cfg.l_min * (1.0 - 1e-12) {
        v.push(l);
        l *= 0.5;
    }
    if v.last().is_none_or(|&x| x > cfg.l_min * (1.0 + 1e-12)) {
        v.push(cfg.l_min);
    }
    v
}

/// External ray of rational angle t sampled at l0·2^{-k} down to l_min.
pub fn trace_ray(f: &MonicPolynomial, t: &RationalAngle, l_min: f64) -> Result<ExternalRay> {
    let cfg = RayConfig { l_min, ..RayConfig::default() };
    trace_ray_with(f, t, &cfg)
}

pub fn trace_ray_with(f: &MonicPolynomial, t: &RationalAngle, cfg: &RayConfig) -> Result<ExternalRay> {
    trace_fiber_ray(f, 0, t, cfg)
}

/// Point of potential `level` on the ray of real angle `theta` (in turns).
pub fn ray_point(f: &MonicPolynomial, theta: f64, level: f64, cfg: &RayConfig) -> Option<Complex64> {
    fiber_ray_point(f, 0, theta, level, cfg)
}

pub fn fiber_ray_point<F: FiberDynamics + ?Sized>(f: &F, v: usize, theta: f64, level: f64, cfg: &RayConfig) -> Option<Complex64> {
    let tr = continue_ray(f, v, &Angle::Real(theta), &[level], cfg);
    if tr.failed_at.is_some() {
        return None;
    }
    tr.points.last().map(|p| p.1)
}

/// Landing point of a rational ray, accepted by the geometric-tail test and
/// polished against the (pre)periodic-point equation.
pub fn land_ray(f: &MonicPolynomial, t: &RationalAngle) -> Result<Complex64> {
    land_ray_with(f, t, &RayConfig::default())
}

pub fn land_ray_with(f: &MonicPolynomial, t: &RationalAngle, cfg: &RayConfig) -> Result<Complex64> {
    let mut c = cfg.clone();
    c.store_all = false;
    let ray = trace_ray_with(f, t, &c)?;
    if let Some(level) = ray.failed_at {
        return Err(Error::NewtonDivergence { level });
    }
    landing_from_samples(f, t, &ray.samples, cfg).ok_or_else(|| Error::LandingUnresolved { angle: t.to_string() })
}

/// Ray together with its landing point.
pub fn traced_and_landed(f: &MonicPolynomial, t: &RationalAngle, cfg: &RayConfig) -> Result<ExternalRay> {
    let mut ray = trace_ray_with(f, t, cfg)?;
    if let Some(level) = ray.failed_at {
        return Err(Error::NewtonDivergence { level });
    }
    ray.landing = Some(landing_from_samples(f, t, &ray.samples, cfg).ok_or_else(|| Error::LandingUnresolved { angle: t.to_string() })?);
    Ok(ray)
}

fn landing_from_samples(f: &MonicPolynomial, t: &RationalAngle, s: &[(f64, Complex64)], cfg: &RayConfig) -> Option<Complex64> {
    let o = angle_orbit(t, f.degree() as u64);
    // Samples are compared one period apart: near a repelling cycle the ray
    // contracts by 1/|multiplier| per period, which can be much slower than
    // any fixed per-sample factor.
    let (guess, tail) = extrapolate_landing(s, o.period, cfg)?;
    if !cfg.polish {
        return Some(guess);
    }
    match polish_landing(f, guess, o.preperiod, o.period) {
        Some(z) if (z - guess).norm() <= (20.0 * tail).max(1e-7) => Some(z),
        _ => Some(guess),
    }
}

/// Newton on f^{m+p}(w) - f^m(w) = 0.
pub fn polish_landing(f: &MonicPolynomial, z0: Complex64, m: usize, p: usize) -> Option<Complex64> {
    let mut z = z0;
    for _ in 0..80 {
        let (a, da) = f.iterate_d(z, m);
        let (b, db) = f.iterate_d(a, p);
        let val = b - a;
        let der = db * da - da;
        if val.norm() == 0.0 {
            return Some(z);
        }
        let step = val / der;
        if !step.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    // slow (multiple-root) convergence still counts if the residual is tiny
    let (a, _) = f.iterate_d(z, m);
    let b = f.iterate(a, p);
    if (b - a).norm() < 1e-12 {
        Some(z)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoettcherConfig {
    pub g_min: f64,
    pub max_iter: usize,
}

impl Default for BoettcherConfig {
    fn default() -> Self {
        BoettcherConfig { g_min: 1e-4, max_iter: MAX_GREEN_ITER }
    }
}

/// φ_f(z) with branch tracking along the orbit.
pub fn boettcher(f: &MonicPolynomial, z: Complex64) -> Result<Complex64> {
    boettcher_with(f, z, &BoettcherConfig::default())
}

pub fn boettcher_with(f: &MonicPolynomial, z: Complex64, bc: &BoettcherConfig) -> Result<Complex64> {
    let (n, _, _, w) = match escape_index(f, 0, z, bc.max_iter) {
        Some(x) => x,
        None => return Err(Error::TooDeep { green: 0.0 }),
    };
    let d = f.degree() as f64;
    let lphi = log_boettcher_far(f, 0, w);
    let g = lphi.re / d.powi(n as i32);
    if g < bc.g_min {
        return Err(Error::TooDeep { green: g });
    }
    if n == 0 {
        return Ok(lphi.exp());
    }
    let mut orbit = Vec::with_capacity(n);
    let mut x = z;
    for _ in 0..n {
        orbit.push(x);
        x = f.eval(x);
    }
    let cfg = RayConfig { substeps: 4, ..RayConfig::default() };
    let mut theta = (lphi.im / TAU).rem_euclid(1.0);
    let mut gk = lphi.re;
    for k in (0..n).rev() {
        gk /= d;
        let zk = orbit[k];
        let mut best = (f64::INFINITY, 0.0);
        for j in 0..f.degree() {
            let cand = (theta + j as f64) / d;
            if let Some(p) = ray_point(f, cand, gk, &cfg) {
                let dist = (p - zk).norm();
                if dist < best.0 {
                    best = (dist, cand);
                }
            }
        }
        if !best.0.is_finite() {
            return Err(Error::TooDeep { green: g });
        }
        theta = best.1;
    }
    Ok(Complex64::from_polar(g.exp(), TAU * theta))
}

/// Closed polyline through φ⁻¹(e^{level + 2πiθ}) at equally spaced θ.
pub fn equipotential(f: &MonicPolynomial, level: f64, n_samples: usize) -> Result<Equipotential> {
    equipotential_with(f, level, n_samples, &RayConfig::default(), BoettcherConfig::default().g_min)
}

pub fn equipotential_with(f: &MonicPolynomial, level: f64, n_samples: usize, cfg: &RayConfig, g_min: f64) -> Result<Equipotential> {
    if !(level > 0.0) {
        return Err(Error::InvalidInput("level must be positive".into()));
    }
    if level < g_min {
        return Err(Error::TooDeep { green: level });
    }
    use rayon::prelude::*;
    let points: Option<Vec<Complex64>> = (0..n_samples)
        .into_par_iter()
        .map(|j| ray_point(f, j as f64 / n_samples as f64, level, cfg))
        .collect();
    let points = points.ok_or(Error::TooDeep { green: level })?;
    Ok(Equipotential { level, points })
}

/// Winding number of a closed polyline around a point.
pub fn winding_number(poly: &[Complex64], z: Complex64) -> i64 {
    let mut total = 0.0;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i] - z;
        let b = poly[(i + 1) % n] - z;
        total += (b / a).arg();
    }
    (total / TAU).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lamination::ra;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn green_examples() {
        let z2 = MonicPolynomial::power(2);
        assert!((green(&z2, c(2.0, 0.0)) - 2f64.ln()).abs() < 1e-14);
        assert_eq!(green(&z2, c(0.5, 0.0)), 0.0);
        let b = fixtures::basilica();
        // high-iterate reference: d^{-n} log|f^n| for large n
        let mut w = c(10.0, 0.0);
        let mut scale = 1.0;
        for _ in 0..6 {
            w = b.eval(w);
            scale *= 2.0;
        }
        let reference = w.norm().ln() / scale;
        assert!((green(&b, c(10.0, 0.0)) - reference).abs() < 1e-12);
        assert!((green(&b, c(10.0, 0.0)) - 10f64.ln()).abs() < 1e-2);
    }

    #[test]
    fn boettcher_examples() {
        let z2 = MonicPolynomial::power(2);
        assert!((boettcher(&z2, c(3.0, 0.0)).unwrap() - c(3.0, 0.0)).norm() < 1e-14);
        for f in [fixtures::basilica(), fixtures::rabbit(), fixtures::airplane()] {
            let z = c(6e5, 8e5);
            let phi = boettcher(&f, z).unwrap();
            assert!((phi - z).norm() / z.norm() < 1e-4);
        }
        let b = fixtures::basilica();
        let p = trace_ray_with(&b, &RationalAngle::zero(), &RayConfig { l_min: 1.0, ..RayConfig::default() })
            .unwrap()
            .samples[0]
            .1;
        let phi = boettcher(&b, p).unwrap();
        assert!((phi - c(1f64.exp(), 0.0)).norm() < 1e-9);
        assert!(matches!(boettcher(&b, c(0.0, 0.0)), Err(Error::TooDeep { .. })));
    }

    #[test]
    fn boettcher_equivariance_near_julia_set() {
        let f = fixtures::rabbit();
        for &z in &[c(0.3, 1.2), c(-1.1, 0.4), c(0.9, -0.7)] {
            if green(&f, z) < 1e-4 {
                continue;
            }
            let a = boettcher(&f, f.eval(z)).unwrap();
            let b = boettcher(&f, z).unwrap().powu(2);
            assert!((a - b).norm() <= 1e-8 * a.norm());
        }
    }

    #[test]
    fn power_map_rays_are_radial() {
        let z2 = MonicPolynomial::power(2);
        let ray = trace_ray(&z2, &ra(1, 3), 1e-6).unwrap();
        for (l, p) in &ray.samples {
            let expect = Complex64::from_polar(l.exp(), TAU / 3.0);
            assert!((p - expect).norm() < 1e-12);
        }
        let end = ray.samples.last().unwrap().1;
        assert!((end - Complex64::from_polar(1.0, TAU / 3.0)).norm() < 2e-6);
    }

    #[test]
    fn basilica_alpha_ray() {
        let f = fixtures::basilica();
        let alpha = c((1.0 - 5f64.sqrt()) / 2.0, 0.0);
        let ray = trace_ray(&f, &ra(1, 3), 1e-8).unwrap();
        assert!((ray.samples.last().unwrap().1 - alpha).norm() < 1e-2);
        let l = land_ray(&f, &ra(2, 3)).unwrap();
        assert!((l - alpha).norm() < 1e-6);
    }

    #[test]
    fn rabbit_alpha_ray() {
        let cr = fixtures::c_rabbit();
        let f = fixtures::rabbit();
        let alpha = fixtures::alpha_fixed_point(cr);
        assert!((2.0 * alpha).norm() > 1.0);
        for t in [ra(1, 7), ra(2, 7), ra(4, 7)] {
            let l = land_ray(&f, &t).unwrap();
            assert!((l - alpha).norm() < 1e-9);
        }
    }

    #[test]
    fn ray_samples_have_their_potential() {
        let f = fixtures::airplane();
        let ray = trace_ray(&f, &ra(3, 7), 1e-6).unwrap();
        for (l, p) in &ray.samples {
            assert!((green(&f, *p) - l).abs() <= 1e-6 * l);
        }
    }

    #[test]
    fn ray_mapping_property() {
        let f = fixtures::rabbit();
        let t = ra(1, 7);
        let a = trace_ray(&f, &t, 1e-5).unwrap();
        let b = trace_ray(&f, &t.mul(2), 1e-5).unwrap();
        // sample at level l maps to the sample at level 2l of the image ray
        for k in 1..a.samples.len() {
            let (l, p) = a.samples[k];
            let img = f.eval(p);
            let (l2, q) = b.samples[k - 1];
            if (l2 - 2.0 * l).abs() > 1e-12 {
                continue;
            }
            assert!((img - q).norm() < 1e-6);
        }
    }

    #[test]
    fn equipotential_examples() {
        let z2 = MonicPolynomial::power(2);
        let e = equipotential(&z2, 1.0, 4).unwrap();
        for p in &e.points {
            assert!((p.norm() - 1f64.exp()).abs() < 1e-12);
        }
        let b = fixtures::basilica();
        let e = equipotential(&b, 1.0, 256).unwrap();
        for p in &e.points {
            assert!((green(&b, *p) - 1.0).abs() < 1e-6);
        }
        let r = fixtures::rabbit();
        let e = equipotential(&r, 0.5, 256).unwrap();
        assert_eq!(winding_number(&e.points, c(0.0, 0.0)), 1);
    }

    #[test]
    fn landing_on_power_map() {
        let z2 = MonicPolynomial::power(2);
        for (p, q) in [(0, 1), (1, 3), (1, 7), (1, 6), (5, 12)] {
            let t = ra(p, q);
            let l = land_ray(&z2, &t).unwrap();
            let expect = Complex64::from_polar(1.0, TAU * t.to_f64());
            assert!((l - expect).norm() < 1e-9, "{} {}", t, (l - expect).norm());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn green_functional_equation(x in -2.5f64..2.5, y in -2.5f64..2.5, which in 0usize..3) {
                let f = [fixtures::basilica(), fixtures::rabbit(), fixtures::airplane()][which].clone();
                let z = c(x, y);
                let g = green(&f, z);
                prop_assume!((1e-3..=10.0).contains(&g));
                let g1 = green(&f, f.eval(z));
                prop_assert!((g1 - 2.0 * g).abs() <= 1e-9 * (2.0 * g).max(1.0));
            }

            #[test]
            fn boettcher_equivariance(x in -2.5f64..2.5, y in -2.5f64..2.5) {
                let f = fixtures::airplane();
                let z = c(x, y);
                prop_assume!(green(&f, z) >= 1e-3);
                let a = boettcher(&f, f.eval(z)).unwrap();
                let b = boettcher(&f, z).unwrap().powu(2);
                prop_assert!((a - b).norm() <= 1e-8 * a.norm());
            }

            #[test]
            fn boettcher_modulus_is_exp_green(x in -2.5f64..2.5, y in -2.5f64..2.5) {
                let f = fixtures::rabbit();
                let z = c(x, y);
                let g = green(&f, z);
                prop_assume!(g >= 1e-3);
                let phi = boettcher(&f, z).unwrap();
                prop_assert!((phi.norm().ln() - g).abs() <= 1e-12 * g.max(1.0));
            }
        }
    }
}
