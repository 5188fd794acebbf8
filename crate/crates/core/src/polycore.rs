//! Monic centered polynomials, their critical orbits, cycles, and dynamical
//! classification.

use crate::error::{Error, Result};
use crate::roots::{aberth, cluster, monic_roots, AberthConfig};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// z^d + a_{d-2} z^{d-2} + ... + a_0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonicPolynomial {
    degree: usize,
    coeffs: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn cmul_err(x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let (p1, e1) = two_prod(x.re, y.re);
    let (p2, e2) = two_prod(-x.im, y.im);
    let (re, e3) = two_sum(p1, p2);
    let (q1, f1) = two_prod(x.re, y.im);
    let (q2, f2) = two_prod(x.im, y.re);
    let (im, f3) = two_sum(q1, q2);
    (Complex64::new(re, im), Complex64::new(e1 + e2 + e3, f1 + f2 + f3))
}

#[inline]
fn cadd_err(x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let (re, e) = two_sum(x.re, y.re);
    let (im, f) = two_sum(x.im, y.im);
    (Complex64::new(re, im), Complex64::new(e, f))
}

impl MonicPolynomial {
    /// Coefficients a_0..a_{d-2}; the degree is `coeffs.len() + 1`.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        let degree = coeffs.len() + 1;
        if degree < 2 {
            return Err(Error::InvalidInput("degree must be at least 2".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(MonicPolynomial { degree, coeffs })
    }

    pub fn with_degree(degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if degree < 2 || coeffs.len() != degree - 1 {
            return Err(Error::InvalidInput(format!(
                "degree {} needs {} coefficients, got {}",
                degree,
                degree.saturating_sub(1),
                coeffs.len()
            )));
        }
        Self::new(coeffs)
    }

    pub fn power(degree: usize) -> Self {
        assert!(degree >= 2);
        MonicPolynomial { degree, coeffs: vec![ZERO; degree - 1] }
    }

    pub fn quadratic(c: Complex64) -> Self {
        MonicPolynomial { degree: 2, coeffs: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Ascending coefficients a_0..a_d including the zero a_{d-1} and the leading 1.
    pub fn full_coefficients(&self) -> Vec<Complex64> {
        let mut v = self.coeffs.clone();
        v.push(ZERO);
        v.push(ONE);
        v
    }

    /// max(2, 2 Σ|a_i|): beyond it |f(z)| ≥ 2|z|.
    pub fn escape_radius(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm()).sum();
        (2.0 * s).max(2.0)
    }

    /// Compensated Horner evaluation of f(z).
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut s = ONE;
        let mut c = ZERO;
        let apply = |a: Complex64, s: &mut Complex64, c: &mut Complex64| {
            let (p, pe) = cmul_err(*s, z);
            let (t, te) = cadd_err(p, a);
            *c = *c * z + pe + te;
            *s = t;
        };
        apply(ZERO, &mut s, &mut c);
        for a in self.coeffs.iter().rev() {
            apply(*a, &mut s, &mut c);
        }
        s + c
    }

    /// (f(z), f'(z)) by plain Horner.
    pub fn eval_d(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = ONE;
        let mut dp = ZERO;
        dp = dp * z + p;
        p *= z;
        for a in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        (p, dp)
    }

    /// f^(k)(z)/k! for k = 0..=order (Taylor coefficients at z).
    pub fn taylor(&self, z: Complex64, order: usize) -> Vec<Complex64> {
        let full = self.full_coefficients();
        let mut b = full.clone();
        let mut out = Vec::with_capacity(order + 1);
        let n = full.len();
        for k in 0..=order.min(n - 1) {
            // synthetic division: value of current polynomial at z, quotient replaces it
            let m = n - k;
            let mut acc = ZERO;
            let mut q = vec![ZERO; m.saturating_sub(1)];
            for i in (0..m).rev() {
                acc = acc * z + b[i];
                if i > 0 {
                    q[i - 1] = acc;
                }
            }
            out.push(acc);
            b = q;
        }
        while out.len() <= order {
            out.push(ZERO);
        }
        out
    }

    pub fn derivative_at(&self, z: Complex64) -> Complex64 {
        self.eval_d(z).1
    }

    /// (f^n(z), (f^n)'(z)).
    pub fn iterate_d(&self, z: Complex64, n: usize) -> (Complex64, Complex64) {
        let mut w = z;
        let mut dw = ONE;
        for _ in 0..n {
            let (p, dp) = self.eval_d(w);
            dw *= dp;
            w = p;
        }
        (w, dw)
    }

    pub fn iterate(&self, z: Complex64, n: usize) -> Complex64 {
        let mut w = z;
        for _ in 0..n {
            w = self.eval(w);
        }
        w
    }
}

impl fmt::Display for MonicPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z^{}", self.degree)?;
        for (i, a) in self.coeffs.iter().enumerate().rev() {
            if a.norm() == 0.0 {
                continue;
            }
            write!(f, " + ({:.12}{:+.12}i)", a.re, a.im)?;
            if i > 0 {
                write!(f, " z^{}", i)?;
            }
        }
        Ok(())
    }
}

/// Largest iterate count accepted by [`evaluate`].
pub const MAX_ITERATES: usize = 1 << 20;

/// f^iterates(z) with compensated evaluation; overflow is an error.
pub fn evaluate(f: &MonicPolynomial, z: Complex64, iterates: usize) -> Result<Complex64> {
    if iterates == 0 || iterates > MAX_ITERATES {
        return Err(Error::InvalidInput(format!("iterates must be in 1..={}", MAX_ITERATES)));
    }
    let mut w = z;
    for k in 1..=iterates {
        w = f.eval(w);
        if !w.is_finite() || w.norm() > 1e300 {
            return Err(Error::Overflow { iterate: k });
        }
    }
    Ok(w)
}

/// Roots of f' with multiplicities (total d-1).
pub fn critical_points(f: &MonicPolynomial) -> Result<Vec<(Complex64, usize)>> {
    critical_points_with(f, &AberthConfig::default())
}

pub fn critical_points_with(f: &MonicPolynomial, cfg: &AberthConfig) -> Result<Vec<(Complex64, usize)>> {
    let d = f.degree();
    if d == 2 {
        return Ok(vec![(ZERO, 1)]);
    }
    // f'/d = z^{d-1} + sum_{i>=1} (i a_i / d) z^{i-1}
    let mut c: Vec<Complex64> = (1..d - 1)
        .map(|i| f.coeffs()[i] * (i as f64 / d as f64))
        .collect();
    c.push(ZERO);
    c.push(ONE);
    let roots = monic_roots(&c, cfg)?;
    let pts: Vec<Complex64> = roots.iter().map(|r| r.z).collect();
    // Multiple roots converge to within ~eps^(1/m); merge at that scale too.
    let scale = pts.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let mut merged = cluster(&pts, cfg.cluster_radius.max(1e-6 * scale));
    for (z, m) in merged.iter_mut() {
        if *m > 1 {
            // refine a multiple root by Newton on the (m-1)-th derivative of f'
            let mut w = *z;
            for _ in 0..20 {
                let t = f.taylor(w, *m + 1);
                // f^{(m)}(w)/m! and f^{(m+1)}(w)/(m+1)!
                let num = t[*m] * (*m as f64);
                let den = t[*m + 1] * ((*m * (*m + 1)) as f64);
                if den.norm() == 0.0 {
                    break;
                }
                let s = num / den;
                if !s.is_finite() {
                    break;
                }
                w -= s;
                if s.norm() < 1e-15 {
                    break;
                }
            }
            *z = w;
        }
    }
    merged.sort_by(|a, b| {
        a.0.re
            .partial_cmp(&b.0.re)
            .unwrap()
            .then(a.0.im.partial_cmp(&b.0.im).unwrap())
    });
    let total: usize = merged.iter().map(|x| x.1).sum();
    debug_assert_eq!(total, d - 1);
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleKind {
    Superattracting,
    Attracting,
    Repelling,
    Indifferent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cycle {
    pub points: Vec<Complex64>,
    pub period: usize,
    pub multiplier: Complex64,
    pub kind: CycleKind,
}

impl Cycle {
    fn from_points(f: &MonicPolynomial, points: Vec<Complex64>) -> Cycle {
        let multiplier = points.iter().fold(ONE, |acc, &z| acc * f.derivative_at(z));
        Cycle { period: points.len(), kind: kind_of(multiplier), multiplier, points }
    }
}

pub const TOL_CYCLE: f64 = 1e-9;
const TOL_MULTIPLIER: f64 = 1e-9;

pub fn kind_of(multiplier: Complex64) -> CycleKind {
    let m = multiplier.norm();
    if m <= 1e-8 {
        CycleKind::Superattracting
    } else if m < 1.0 - TOL_MULTIPLIER {
        CycleKind::Attracting
    } else if m > 1.0 + TOL_MULTIPLIER {
        CycleKind::Repelling
    } else {
        CycleKind::Indifferent
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CycleBudget {
    /// Largest admissible d^period.
    pub max_degree: usize,
    pub aberth: AberthConfig,
}

impl Default for CycleBudget {
    fn default() -> Self {
        CycleBudget { max_degree: 10_000, aberth: AberthConfig::default() }
    }
}

/// All cycles of exact period ≤ `period`.
pub fn find_cycles(f: &MonicPolynomial, period: usize) -> Result<Vec<Cycle>> {
    find_cycles_with(f, period, &CycleBudget::default())
}

pub fn find_cycles_with(f: &MonicPolynomial, period: usize, budget: &CycleBudget) -> Result<Vec<Cycle>> {
    let d = f.degree();
    let mut out = Vec::new();
    for p in 1..=period {
        let deg = d.checked_pow(p as u32).filter(|&n| n <= budget.max_degree).ok_or_else(|| {
            Error::BudgetExceeded(format!("{}^{} roots exceed budget {}", d, p, budget.max_degree))
        })?;
        out.extend(cycles_of_exact_period(f, p, deg, budget)?);
    }
    Ok(out)
}

/// Newton polish of a root of f^p(z) - z.
fn polish_periodic(f: &MonicPolynomial, z0: Complex64, p: usize) -> Complex64 {
    let mut z = z0;
    for _ in 0..8 {
        let (w, dw) = f.iterate_d(z, p);
        let den = dw - ONE;
        if den.norm() < 1e-14 {
            break;
        }
        let s = (w - z) / den;
        if !s.is_finite() || s.norm() > 1e-6 * z.norm().max(1.0) {
            break;
        }
        z -= s;
        if s.norm() < 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn cycles_of_exact_period(f: &MonicPolynomial, p: usize, deg: usize, budget: &CycleBudget) -> Result<Vec<Cycle>> {
    let r = f.escape_radius();
    let mut cfg = budget.aberth;
    cfg.seed ^= (p as u64) << 32;
    let eval = |z: Complex64| {
        let (w, dw) = f.iterate_d(z, p);
        (w - z, dw - ONE)
    };
    let roots = aberth(deg, r * 0.5, eval, &cfg)?;
    let pts: Vec<Complex64> = roots.iter().map(|x| polish_periodic(f, x.z, p)).collect();
    let merged = cluster(&pts, cfg.cluster_radius);
    let exact: Vec<Complex64> = merged
        .into_iter()
        .map(|(z, _)| z)
        .filter(|&z| {
            (1..p).filter(|k| p.is_multiple_of(*k)).all(|k| {
                (f.iterate(z, k) - z).norm() > TOL_CYCLE * z.norm().max(1.0)
            })
        })
        .collect();
    let mut used = vec![false; exact.len()];
    let mut cycles = Vec::new();
    for i in 0..exact.len() {
        if used[i] {
            continue;
        }
        let mut pts = vec![exact[i]];
        used[i] = true;
        let mut w = exact[i];
        for _ in 1..p {
            w = f.eval(w);
            // snap to the nearest computed root to avoid error growth
            let (j, dist) = exact
                .iter()
                .enumerate()
                .map(|(j, z)| (j, (z - w).norm()))
                .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if j != usize::MAX && dist < 1e-6 * w.norm().max(1.0) {
                used[j] = true;
                w = exact[j];
            }
            pts.push(w);
        }
        cycles.push(Cycle::from_points(f, pts));
    }
    Ok(cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CriticalOrbit {
    /// Finite orbit: f^(preperiod+period)(c) = f^preperiod(c).
    Finite { preperiod: usize, period: usize },
    /// Infinite orbit converging to an attracting cycle.
    Attracted { period: usize },
    Escapes { iterate: usize },
    Unresolved,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalOrbitData {
    pub point: Complex64,
    pub multiplicity: usize,
    pub orbit: CriticalOrbit,
    /// Multiplier of the cycle the orbit ends on, when it ends on one.
    pub cycle_multiplier: Option<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitivityEvidence {
    /// Minimal pixel separation of distinct immediate periodic components, per resolution.
    pub separation_pixels: Vec<(usize, f64)>,
    /// Repelling periodic points found on two or more periodic component boundaries.
    pub shared_boundary_points: Vec<Complex64>,
    pub period_checked: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynClass {
    pub is_pcf: bool,
    pub is_hyperbolic: bool,
    /// Heuristic flag; see `primitivity`.
    pub is_primitive_heuristic: bool,
    pub critical_orbit_data: Vec<CriticalOrbitData>,
    pub primitivity: Option<PrimitivityEvidence>,
}

#[derive(Debug, Clone)]
pub struct ClassifyBudget {
    pub max_orbit: usize,
    pub detect_tol: f64,
    pub exact_tol: f64,
    pub resolutions: Vec<usize>,
    pub pixel_iter: usize,
    pub min_separation_pixels: f64,
    pub cycle_budget: CycleBudget,
    pub check_primitivity: bool,
}

impl Default for ClassifyBudget {
    fn default() -> Self {
        ClassifyBudget {
            max_orbit: 4000,
            detect_tol: 1e-9,
            exact_tol: 1e-10,
            resolutions: vec![128, 256, 512],
            pixel_iter: 3000,
            min_separation_pixels: 2.0,
            cycle_budget: CycleBudget::default(),
            check_primitivity: true,
        }
    }
}

fn critical_orbit(f: &MonicPolynomial, c: Complex64, budget: &ClassifyBudget) -> (CriticalOrbit, Option<Vec<Complex64>>) {
    let r = f.escape_radius();
    let mut orbit: Vec<Complex64> = vec![c];
    let mut z = c;
    for n in 1..=budget.max_orbit {
        z = f.eval(z);
        if z.norm() > r {
            return (CriticalOrbit::Escapes { iterate: n }, None);
        }
        let tol = budget.detect_tol * z.norm().max(1.0);
        if let Some(m) = orbit.iter().position(|w| (w - z).norm() <= tol) {
            let p = n - m;
            let w = polish_periodic(f, orbit[m], p);
            let mut cyc = vec![w];
            for _ in 1..p {
                let nx = f.eval(*cyc.last().unwrap());
                cyc.push(nx);
            }
            let lambda = cyc.iter().fold(ONE, |a, &x| a * f.derivative_at(x));
            let exact = budget.exact_tol * w.norm().max(1.0);
            let on_cycle = |x: &Complex64| cyc.iter().any(|y| (x - y).norm() <= exact.max(1e3 * f64::EPSILON));
            if let Some(m0) = orbit.iter().position(on_cycle) {
                return (CriticalOrbit::Finite { preperiod: m0, period: p }, Some(cyc));
            }
            if lambda.norm() < 1.0 {
                return (CriticalOrbit::Attracted { period: p }, Some(cyc));
            }
            return (CriticalOrbit::Unresolved, None);
        }
        orbit.push(z);
    }
    (CriticalOrbit::Unresolved, None)
}

/// Dynamical classification with the primitivity heuristic.
pub fn classify(f: &MonicPolynomial, budget: &ClassifyBudget) -> Result<DynClass> {
    let crits = critical_points(f)?;
    let mut data = Vec::new();
    let mut cycles: Vec<Vec<Complex64>> = Vec::new();
    for &(c, m) in &crits {
        let (orbit, cyc) = critical_orbit(f, c, budget);
        let mut mult = None;
        if let Some(cyc) = cyc {
            let lambda = cyc.iter().fold(ONE, |a, &x| a * f.derivative_at(x));
            mult = Some(lambda);
            if lambda.norm() < 1.0 && !cycles.iter().any(|k| same_cycle(k, &cyc)) {
                cycles.push(cyc);
            }
        }
        data.push(CriticalOrbitData { point: c, multiplicity: m, orbit, cycle_multiplier: mult });
    }
    if data.iter().any(|d| d.orbit == CriticalOrbit::Unresolved) {
        return Err(Error::Inconclusive("critical orbit budget exhausted".into()));
    }
    let is_pcf = data.iter().all(|d| matches!(d.orbit, CriticalOrbit::Finite { .. }));
    let is_hyperbolic = data.iter().all(|d| match d.orbit {
        CriticalOrbit::Finite { .. } | CriticalOrbit::Attracted { .. } => {
            d.cycle_multiplier.is_some_and(|l| l.norm() < 1.0)
        }
        _ => false,
    });
    let mut is_primitive = false;
    let mut evidence = None;
    if is_hyperbolic && budget.check_primitivity {
        let fatou = FatouData::new(f, cycles);
        let ev = primitivity_evidence(&fatou, budget)?;
        is_primitive = ev.shared_boundary_points.is_empty()
            && ev.separation_pixels.iter().all(|&(_, s)| s > budget.min_separation_pixels);
        evidence = Some(ev);
    }
    Ok(DynClass {
        is_pcf,
        is_hyperbolic,
        is_primitive_heuristic: is_primitive,
        critical_orbit_data: data,
        primitivity: evidence,
    })
}

fn same_cycle(a: &[Complex64], b: &[Complex64]) -> bool {
    a.len() == b.len() && b.iter().all(|x| a.iter().any(|y| (x - y).norm() < 1e-7 * y.norm().max(1.0)))
}

/// Attracting cycles of a hyperbolic polynomial, with the basin bookkeeping
/// used to decide which periodic Fatou component a point belongs to.
#[derive(Debug, Clone)]
pub struct FatouData {
    pub f: MonicPolynomial,
    pub cycles: Vec<Vec<Complex64>>,
    capture: Vec<f64>,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Escapes,
    /// Attracted to `cycle`; the point lies in (a preimage of) the component
    /// containing `cycles[cycle][phase]`.
    Basin { cycle: usize, phase: usize },
    Unresolved,
}

impl FatouData {
    pub fn new(f: &MonicPolynomial, cycles: Vec<Vec<Complex64>>) -> Self {
        let all: Vec<Complex64> = cycles.iter().flatten().copied().collect();
        let capture = cycles
            .iter()
            .map(|cyc| {
                let p = cyc.len();
                let sep = all
                    .iter()
                    .flat_map(|a| all.iter().map(move |b| (a - b).norm()))
                    .filter(|&x| x > 0.0)
                    .fold(1.0f64, f64::min);
                let mut r = 0.25 * sep;
                // shrink until f^p maps the capture disk well inside itself
                for _ in 0..60 {
                    let ok = cyc.iter().all(|&w| {
                        (0..16).all(|k| {
                            let z = w + Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / 16.0);
                            (f.iterate(z, p) - w).norm() < 0.5 * r
                        })
                    });
                    if ok {
                        break;
                    }
                    r *= 0.5;
                }
                r
            })
            .collect();
        FatouData { f: f.clone(), cycles, capture, max_iter: 20_000 }
    }

    /// Fatou data of a hyperbolic polynomial from its classification.
    pub fn from_polynomial(f: &MonicPolynomial) -> Result<Self> {
        let crits = critical_points(f)?;
        let budget = ClassifyBudget::default();
        let mut cycles: Vec<Vec<Complex64>> = Vec::new();
        for &(c, _) in &crits {
            if let (_, Some(cyc)) = critical_orbit(f, c, &budget) {
                let lambda = cyc.iter().fold(ONE, |a, &x| a * f.derivative_at(x));
                if lambda.norm() < 1.0 && !cycles.iter().any(|k| same_cycle(k, &cyc)) {
                    cycles.push(cyc);
                }
            }
        }
        Ok(FatouData::new(f, cycles))
    }

    pub fn phase(&self, z0: Complex64) -> Phase {
        let r = self.f.escape_radius();
        let mut z = z0;
        for n in 0..self.max_iter {
            if z.norm() > r {
                return Phase::Escapes;
            }
            for (k, cyc) in self.cycles.iter().enumerate() {
                let p = cyc.len();
                for (i, w) in cyc.iter().enumerate() {
                    if (z - w).norm() < self.capture[k] {
                        return Phase::Basin { cycle: k, phase: (i + p - n % p) % p };
                    }
                }
            }
            z = self.f.eval(z);
        }
        Phase::Unresolved
    }

    /// Whether `z` is in the immediate component containing `cycles[k][j]`,
    /// tested along the straight segment to that center.
    pub fn in_component(&self, z: Complex64, k: usize, j: usize) -> bool {
        let target = Phase::Basin { cycle: k, phase: j };
        let w = self.cycles[k][j];
        let steps = 32;
        (0..=steps).all(|s| {
            let t = s as f64 / steps as f64;
            self.phase(z + (w - z) * t) == target
        })
    }

    /// Heuristic boundary membership of `p` in ∂U where U contains
    /// `cycles[k][j]`: pushes of size ε toward the center at two scales must
    /// land in U.
    pub fn on_component_boundary(&self, p: Complex64, k: usize, j: usize, eps: f64) -> bool {
        let w = self.cycles[k][j];
        let dist = (w - p).norm();
        if dist <= eps {
            return false;
        }
        let dir = (w - p) / dist;
        [eps, 0.1 * eps].iter().all(|&e| self.in_component(p + dir * e, k, j))
    }

    pub fn components(&self) -> Vec<(usize, usize)> {
        self.cycles
            .iter()
            .enumerate()
            .flat_map(|(k, c)| (0..c.len()).map(move |j| (k, j)))
            .collect()
    }

    /// Rough size of K(f): the largest cycle-point modulus plus margin.
    pub fn scale(&self) -> f64 {
        self.cycles.iter().flatten().map(|z| z.norm()).fold(1.0f64, f64::max)
    }
}

fn primitivity_evidence(fatou: &FatouData, budget: &ClassifyBudget) -> Result<PrimitivityEvidence> {
    let f = &fatou.f;
    let comps = fatou.components();
    let mut separation = Vec::new();
    let half = 1.25 * fatou.scale() + 0.5;
    for &n in &budget.resolutions {
        separation.push((n, grid_separation(fatou, n, half, budget.pixel_iter)));
    }
    let pmax = fatou.cycles.iter().map(|c| c.len()).max().unwrap_or(1);
    let mut period = 2 * pmax;
    while period > 1 && f.degree().checked_pow(period as u32).is_none_or(|n| n > budget.cycle_budget.max_degree) {
        period -= 1;
    }
    let cycles = find_cycles_with(f, period, &budget.cycle_budget)?;
    let eps = 1e-4 * half;
    let mut shared = Vec::new();
    for cyc in cycles.iter().filter(|c| c.kind == CycleKind::Repelling) {
        for &p in &cyc.points {
            let hits = comps
                .iter()
                .filter(|&&(k, j)| fatou.on_component_boundary(p, k, j, eps))
                .count();
            if hits >= 2 {
                shared.push(p);
            }
        }
    }
    Ok(PrimitivityEvidence { separation_pixels: separation, shared_boundary_points: shared, period_checked: period })
}

/// Minimal distance in pixels between distinct immediate periodic components.
fn grid_separation(fatou: &FatouData, n: usize, half: f64, pixel_iter: usize) -> f64 {
    let mut local = fatou.clone();
    local.max_iter = pixel_iter;
    let h = 2.0 * half / n as f64;
    let pix = |i: usize, j: usize| Complex64::new(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
    let labels: Vec<Phase> = (0..n * n)
        .into_par_iter()
        .map(|idx| local.phase(pix(idx % n, idx / n)))
        .collect();
    let comps = fatou.components();
    let mut member: Vec<Vec<(usize, usize)>> = Vec::new();
    for &(k, j) in &comps {
        let w = fatou.cycles[k][j];
        let i0 = ((w.re + half) / h).floor();
        let j0 = ((w.im + half) / h).floor();
        let target = Phase::Basin { cycle: k, phase: j };
        let mut seen = vec![false; n * n];
        let mut stack = Vec::new();
        if i0 >= 0.0 && j0 >= 0.0 && (i0 as usize) < n && (j0 as usize) < n {
            let s = (i0 as usize, j0 as usize);
            if labels[s.0 + s.1 * n] == target {
                stack.push(s);
                seen[s.0 + s.1 * n] = true;
            }
        }
        let mut boundary = Vec::new();
        while let Some((x, y)) = stack.pop() {
            let mut edge = false;
            let nb = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
            for (a, b) in nb {
                if a >= n || b >= n {
                    edge = true;
                    continue;
                }
                let id = a + b * n;
                if labels[id] == target {
                    if !seen[id] {
                        seen[id] = true;
                        stack.push((a, b));
                    }
                } else {
                    edge = true;
                }
            }
            if edge {
                boundary.push((x, y));
            }
        }
        member.push(boundary);
    }
    let mut best = f64::INFINITY;
    for a in 0..member.len() {
        for b in (a + 1)..member.len() {
            for &(x1, y1) in &member[a] {
                for &(x2, y2) in &member[b] {
                    let dx = x1 as f64 - x2 as f64;
                    let dy = y1 as f64 - y2 as f64;
                    best = best.min((dx * dx + dy * dy).sqrt());
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn evaluate_examples() {
        let z2 = MonicPolynomial::power(2);
        assert_eq!(evaluate(&z2, c(2.0, 0.0), 3).unwrap(), c(256.0, 0.0));
        let b = MonicPolynomial::quadratic(c(-1.0, 0.0));
        assert!(evaluate(&b, c(0.0, 0.0), 2).unwrap().norm() < 1e-15);
        let rabbit = fixtures::rabbit();
        assert!(evaluate(&rabbit, c(0.0, 0.0), 3).unwrap().norm() < 1e-9);
    }

    #[test]
    fn evaluate_reports_overflow() {
        let z2 = MonicPolynomial::power(2);
        assert!(matches!(evaluate(&z2, c(10.0, 0.0), 20), Err(Error::Overflow { .. })));
    }

    #[test]
    fn critical_point_examples() {
        let cp = critical_points(&MonicPolynomial::power(2)).unwrap();
        assert_eq!(cp, vec![(c(0.0, 0.0), 1)]);
        let cubic = MonicPolynomial::new(vec![c(0.0, 0.0), c(-3.0, 0.0)]).unwrap();
        let cp = critical_points(&cubic).unwrap();
        assert_eq!(cp.len(), 2);
        assert!((cp[0].0 - c(-1.0, 0.0)).norm() < 1e-12 && cp[0].1 == 1);
        assert!((cp[1].0 - c(1.0, 0.0)).norm() < 1e-12 && cp[1].1 == 1);
        let cp = critical_points(&MonicPolynomial::power(3)).unwrap();
        assert_eq!(cp.len(), 1);
        assert_eq!(cp[0].1, 2);
        assert!(cp[0].0.norm() < 1e-9);
    }

    #[test]
    fn taylor_matches_derivative() {
        let f = MonicPolynomial::new(vec![c(0.3, -0.2), c(1.5, 0.5), c(-0.7, 0.1)]).unwrap();
        let z = c(0.4, 0.9);
        let t = f.taylor(z, 2);
        let (v, dv) = f.eval_d(z);
        assert!((t[0] - v).norm() < 1e-13);
        assert!((t[1] - dv).norm() < 1e-13);
    }

    #[test]
    fn cycles_of_power_map() {
        let cyc = find_cycles(&MonicPolynomial::power(2), 1).unwrap();
        assert_eq!(cyc.len(), 2);
        let zero = cyc.iter().find(|k| k.points[0].norm() < 1e-9).unwrap();
        assert_eq!(zero.kind, CycleKind::Superattracting);
        let one = cyc.iter().find(|k| (k.points[0] - c(1.0, 0.0)).norm() < 1e-9).unwrap();
        assert_eq!(one.kind, CycleKind::Repelling);
        assert!((one.multiplier - c(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn cycles_of_basilica() {
        let f = MonicPolynomial::quadratic(c(-1.0, 0.0));
        let cyc = find_cycles(&f, 2).unwrap();
        let s5 = 5f64.sqrt();
        let fixed: Vec<_> = cyc.iter().filter(|k| k.period == 1).collect();
        assert_eq!(fixed.len(), 2);
        for w in [(1.0 + s5) / 2.0, (1.0 - s5) / 2.0] {
            let k = fixed.iter().find(|k| (k.points[0] - c(w, 0.0)).norm() < 1e-10).unwrap();
            assert_eq!(k.kind, CycleKind::Repelling);
        }
        let two: Vec<_> = cyc.iter().filter(|k| k.period == 2).collect();
        assert_eq!(two.len(), 1);
        assert!(two[0].multiplier.norm() < 1e-12);
        assert!(two[0].points.iter().any(|z| z.norm() < 1e-12));
        assert!(two[0].points.iter().any(|z| (z - c(-1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn budget_exceeded() {
        let b = CycleBudget { max_degree: 16, ..Default::default() };
        assert!(matches!(
            find_cycles_with(&MonicPolynomial::power(2), 5, &b),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn classify_examples() {
        let b = ClassifyBudget::default();
        let basilica = classify(&fixtures::basilica(), &b).unwrap();
        assert!(basilica.is_pcf && basilica.is_hyperbolic);
        assert!(!basilica.is_primitive_heuristic);
        let airplane = classify(&fixtures::airplane(), &b).unwrap();
        assert!(airplane.is_pcf && airplane.is_hyperbolic);
        assert!(airplane.is_primitive_heuristic);
        let esc = classify(&MonicPolynomial::quadratic(c(1.0, 0.0)), &b).unwrap();
        assert!(!esc.is_pcf && !esc.is_hyperbolic);
        assert!(matches!(esc.critical_orbit_data[0].orbit, CriticalOrbit::Escapes { .. }));
    }

    #[test]
    fn classify_attracted_and_misiurewicz() {
        let b = ClassifyBudget { check_primitivity: false, ..Default::default() };
        let att = classify(&MonicPolynomial::quadratic(c(-0.2, 0.1)), &b).unwrap();
        assert!(!att.is_pcf && att.is_hyperbolic);
        let mis = classify(&MonicPolynomial::quadratic(c(0.0, 1.0)), &b).unwrap();
        assert!(mis.is_pcf && !mis.is_hyperbolic);
        assert_eq!(mis.critical_orbit_data[0].orbit, CriticalOrbit::Finite { preperiod: 2, period: 2 });
    }
}
