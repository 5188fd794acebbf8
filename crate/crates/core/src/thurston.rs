//! Thurston pull-back iteration on marked postcritically finite portraits.
//!
//! Each step solves for the monic centered polynomial Q whose critical values
//! sit at the current positions of the images of the critical marks, then
//! pulls every mark back through Q. Branches follow the previous positions.

use crate::error::{Error, Result};
use crate::lamination::{angle_orbit, RationalAngle};
use crate::polycore::{classify, ClassifyBudget, CriticalOrbit, MonicPolynomial};
use crate::roots::{monic_roots, AberthConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Finite marked configuration: marks, their images, local degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPortrait {
    pub degree: usize,
    pub ids: Vec<String>,
    pub transition: Vec<usize>,
    pub local_degree: Vec<usize>,
    /// External angle attached to a mark (used for seeding).
    pub angles: Vec<Option<RationalAngle>>,
    /// Default seed positions; empty when none were given.
    pub positions: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct PortraitJson {
    degree: usize,
    ids: Vec<String>,
    transition: BTreeMap<String, String>,
    local_degree: BTreeMap<String, usize>,
    #[serde(default)]
    angles: BTreeMap<String, RationalAngle>,
    #[serde(default)]
    positions: BTreeMap<String, [f64; 2]>,
}

impl Serialize for MarkedPortrait {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let name = |k: usize| self.ids[k].clone();
        PortraitJson {
            degree: self.degree,
            ids: self.ids.clone(),
            transition: (0..self.ids.len()).map(|k| (name(k), name(self.transition[k]))).collect(),
            local_degree: (0..self.ids.len()).map(|k| (name(k), self.local_degree[k])).collect(),
            angles: (0..self.ids.len()).filter_map(|k| self.angles[k].clone().map(|a| (name(k), a))).collect(),
            positions: self.positions.iter().enumerate().map(|(k, z)| (name(k), [z.re, z.im])).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MarkedPortrait {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PortraitJson::deserialize(d)?;
        let index = |s: &str| j.ids.iter().position(|x| x == s).ok_or_else(|| D::Error::custom(format!("unknown mark {s}")));
        let mut transition = Vec::new();
        let mut local_degree = Vec::new();
        for id in &j.ids {
            let t = j.transition.get(id).ok_or_else(|| D::Error::custom(format!("no transition for {id}")))?;
            transition.push(index(t)?);
            local_degree.push(*j.local_degree.get(id).unwrap_or(&1));
        }
        let angles = j.ids.iter().map(|id| j.angles.get(id).cloned()).collect();
        let positions = if j.positions.is_empty() {
            Vec::new()
        } else {
            j.ids
                .iter()
                .map(|id| j.positions.get(id).map(|p| Complex64::new(p[0], p[1])).ok_or_else(|| D::Error::custom(format!("no position for {id}"))))
                .collect::<std::result::Result<_, _>>()?
        };
        MarkedPortrait::new(j.degree, j.ids.clone(), transition, local_degree, angles, positions).map_err(D::Error::custom)
    }
}

impl MarkedPortrait {
    pub fn new(
        degree: usize,
        ids: Vec<String>,
        transition: Vec<usize>,
        local_degree: Vec<usize>,
        angles: Vec<Option<RationalAngle>>,
        positions: Vec<Complex64>,
    ) -> Result<Self> {
        let n = ids.len();
        if degree < 2 {
            return Err(Error::InvalidInput("degree must be at least 2".into()));
        }
        if n == 0 || transition.len() != n || local_degree.len() != n || angles.len() != n {
            return Err(Error::InvalidInput("portrait arrays must all have one entry per mark".into()));
        }
        if !positions.is_empty() && positions.len() != n {
            return Err(Error::InvalidInput("positions must have one entry per mark".into()));
        }
        if transition.iter().any(|&t| t >= n) {
            return Err(Error::InvariantViolation("transition leaves the marked set".into()));
        }
        if local_degree.iter().any(|&m| m == 0 || m > degree) {
            return Err(Error::InvariantViolation("local degrees must lie in 1..=d".into()));
        }
        let rh: usize = local_degree.iter().map(|m| m - 1).sum();
        if rh != degree - 1 {
            return Err(Error::InvariantViolation(format!("Riemann–Hurwitz: Σ(local degree − 1) = {rh}, expected {}", degree - 1)));
        }
        Ok(MarkedPortrait { degree, ids, transition, local_degree, angles, positions })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn critical(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.local_degree[k] > 1).collect()
    }

    /// Unicritical portrait whose critical point is periodic with the orbit
    /// of θ under m_d: mark z_j = f^j(0), with angle d^{j−1}θ attached to z_j.
    pub fn unicritical_periodic(d: usize, theta: &RationalAngle) -> Result<Self> {
        let o = angle_orbit(theta, d as u64);
        if o.preperiod != 0 {
            return Err(Error::InvalidInput(format!("{theta} is not periodic under m_{d}")));
        }
        let p = o.period;
        let ids = (0..p).map(|j| format!("z{j}")).collect();
        let transition = (0..p).map(|j| (j + 1) % p).collect();
        let mut local = vec![1; p];
        local[0] = d;
        let angles = (0..p).map(|j| if j == 0 { None } else { Some(theta.mul_pow(d as u64, (j - 1) as u32)) }).collect();
        Self::new(d, ids, transition, local, angles, Vec::new())
    }

    /// Portrait of a postcritically finite polynomial: critical points and
    /// their forward orbits, at their actual positions.
    pub fn of_polynomial(f: &MonicPolynomial) -> Result<Self> {
        let class = classify(f, &ClassifyBudget { check_primitivity: false, ..ClassifyBudget::default() })?;
        let mut pts: Vec<Complex64> = Vec::new();
        let mut local: Vec<usize> = Vec::new();
        let find = |pts: &[Complex64], z: Complex64| pts.iter().position(|p| (p - z).norm() < 1e-8);
        for c in &class.critical_orbit_data {
            if !matches!(c.orbit, CriticalOrbit::Finite { .. }) {
                return Err(Error::NotPcfFiber(format!("critical point {} has an infinite orbit", c.point)));
            }
            match find(&pts, c.point) {
                Some(k) => local[k] += c.multiplicity,
                None => {
                    pts.push(c.point);
                    local.push(1 + c.multiplicity);
                }
            }
        }
        let mut k = 0;
        while k < pts.len() {
            let w = f.eval(pts[k]);
            if find(&pts, w).is_none() {
                pts.push(w);
                local.push(1);
            }
            k += 1;
            if pts.len() > 4096 {
                return Err(Error::BudgetExceeded("postcritical set too large".into()));
            }
        }
        let transition = pts.iter().map(|&z| find(&pts, f.eval(z)).expect("closed")).collect();
        let ids = (0..pts.len()).map(|j| format!("p{j}")).collect();
        let n = pts.len();
        Self::new(f.degree(), ids, transition, local, vec![None; n], pts)
    }

    /// Seed at radius r along the attached angles; unangled marks start at 0.
    pub fn angle_seed(&self, radius: f64) -> Vec<Complex64> {
        self.angles
            .iter()
            .map(|a| a.as_ref().map_or(ZERO, |t| Complex64::from_polar(radius, TAU * t.to_f64())))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PullbackState {
    pub n: usize,
    pub positions: Vec<Complex64>,
    /// Values the previous Q maps `positions` onto; none for a seed.
    pub images: Option<Vec<Complex64>>,
    pub polynomial: MonicPolynomial,
    pub displacement: f64,
    /// Smallest nearest/second-nearest preimage distance ratio seen in the step.
    pub guard: f64,
}

#[derive(Debug, Clone)]
pub struct ThurstonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub guard_ratio: f64,
    pub max_halvings: usize,
}

impl Default for ThurstonConfig {
    fn default() -> Self {
        ThurstonConfig { tol: 1e-10, max_iter: 2000, guard_ratio: 3.0, max_halvings: 16 }
    }
}

/// Ascending coefficients of the product of two polynomials.
fn pmul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn peval(a: &[Complex64], z: Complex64) -> Complex64 {
    a.iter().rev().fold(ZERO, |acc, c| acc * z + c)
}

/// ∫₀^z of the polynomial, as ascending coefficients.
fn pint(a: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO];
    out.extend(a.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
    out
}

/// d·Π (s − c_k)^{e_k}, optionally with the factor of index `skip` lowered by one.
fn crit_product(d: usize, cs: &[Complex64], es: &[usize], lower: Option<usize>) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(d as f64, 0.0)];
    for (k, (&c, &e)) in cs.iter().zip(es).enumerate() {
        let e = if lower == Some(k) { e - 1 } else { e };
        for _ in 0..e {
            p = pmul(&p, &[-c, Complex64::new(1.0, 0.0)]);
        }
    }
    p
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
fn csolve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= m * v;
            }
            let v = b[col];
            b[row] -= m * v;
        }
    }
    let mut x = vec![ZERO; n];
    for row in (0..n).rev() {
        let s: Complex64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|z| z.is_finite()).then_some(x)
}

/// Monic centered Q of degree d with critical points of multiplicities e_k
/// near `guess` and critical values `values`; returns Q and its critical points.
pub fn solve_critical_values(d: usize, es: &[usize], values: &[Complex64], guess: &[Complex64]) -> Result<(MonicPolynomial, Vec<Complex64>)> {
    let k = es.len();
    let scale = 1.0 + values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residual = |cs: &[Complex64], b: Complex64| -> Vec<Complex64> {
        let q = pint(&crit_product(d, cs, es, None));
        let mut r: Vec<Complex64> = (0..k).map(|j| peval(&q, cs[j]) + b - values[j]).collect();
        r.push(cs.iter().zip(es).map(|(c, &e)| c * e as f64).sum());
        r
    };
    let rnorm = |r: &[Complex64]| r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // center the guess, then fit b to the first value
    let shift: Complex64 = guess.iter().zip(es).map(|(c, &e)| c * e as f64).sum::<Complex64>() / (d - 1) as f64;
    let mut cs: Vec<Complex64> = guess.iter().map(|c| c - shift).collect();
    let mut b = values[0] - peval(&pint(&crit_product(d, &cs, es, None)), cs[0]);
    let mut r = residual(&cs, b);
    for _ in 0..100 {
        if rnorm(&r) <= 1e-14 * scale {
            break;
        }
        let derivs: Vec<Vec<Complex64>> = (0..k)
            .map(|j| {
                let mut p = crit_product(d, &cs, es, Some(j));
                for c in p.iter_mut() {
                    *c *= -(es[j] as f64);
                }
                pint(&p)
            })
            .collect();
        let mut jac = vec![vec![ZERO; k + 1]; k + 1];
        for row in 0..k {
            for (col, dj) in derivs.iter().enumerate() {
                jac[row][col] = peval(dj, cs[row]);
            }
            jac[row][k] = Complex64::new(1.0, 0.0);
        }
        for col in 0..k {
            jac[k][col] = Complex64::new(es[col] as f64, 0.0);
        }
        let step = csolve(jac, r.iter().map(|z| -z).collect()).ok_or_else(|| Error::SolveFailure("singular Jacobian".into()))?;
        let mut t = 1.0;
        let base = rnorm(&r);
        loop {
            let trial: Vec<Complex64> = cs.iter().zip(&step).map(|(c, s)| c + s * t).collect();
            let tb = b + step[k] * t;
            let tr = residual(&trial, tb);
            if rnorm(&tr) < base || t < 1e-6 {
                cs = trial;
                b = tb;
                r = tr;
                break;
            }
            t *= 0.5;
        }
    }
    if rnorm(&r) > 1e-10 * scale {
        return Err(Error::SolveFailure(format!("critical-value solve residual {:.2e}", rnorm(&r))));
    }
    let mut q = pint(&crit_product(d, &cs, es, None));
    q[0] += b;
    let f = MonicPolynomial::new(q[..d - 1].to_vec())?;
    Ok((f, cs))
}

/// Preimage of w under f nearest to `near`, with the distance ratio to the
/// second-nearest preimage.
fn nearest_preimage(f: &MonicPolynomial, w: Complex64, near: Complex64) -> Result<(Complex64, f64)> {
    let mut c = f.full_coefficients();
    c[0] -= w;
    let roots = monic_roots(&c, &AberthConfig::default())?;
    let mut ds: Vec<(f64, Complex64)> = roots.iter().map(|r| ((r.z - near).norm(), r.z)).collect();
    ds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ratio = if ds.len() > 1 { ds[1].0 / ds[0].0.max(1e-300) } else { f64::INFINITY };
    // a few Newton steps on the chosen root
    let mut z = ds[0].1;
    for _ in 0..3 {
        let (v, dv) = f.eval_d(z);
        let s = (v - w) / dv;
        if s.is_finite() && s.norm() < 1e-6 * z.norm().max(1.0) {
            z -= s;
        }
    }
    Ok((z, ratio))
}

impl PullbackState {
    /// Starting state at the given positions.
    pub fn seed(portrait: &MarkedPortrait, positions: &[Complex64]) -> Result<Self> {
        if positions.len() != portrait.len() || positions.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("seed needs one finite position per mark".into()));
        }
        let crit = portrait.critical();
        let es: Vec<usize> = crit.iter().map(|&k| portrait.local_degree[k] - 1).collect();
        let values: Vec<Complex64> = crit.iter().map(|&k| positions[portrait.transition[k]]).collect();
        let guess: Vec<Complex64> = crit.iter().map(|&k| positions[k]).collect();
        let (q, _) = solve_critical_values(portrait.degree, &es, &values, &guess)?;
        Ok(PullbackState { n: 0, positions: positions.to_vec(), images: None, polynomial: q, displacement: f64::INFINITY, guard: f64::INFINITY })
    }
}

pub fn pullback_step(state: &PullbackState, portrait: &MarkedPortrait) -> Result<PullbackState> {
    pullback_step_with(state, portrait, &ThurstonConfig::default())
}

/// One pull-back. With a previous step available, images move from the old
/// values to the new targets in sub-steps (halved on a branch tie), each mark
/// following its nearest preimage; this keeps the branch choice continuous.
pub fn pullback_step_with(state: &PullbackState, portrait: &MarkedPortrait, cfg: &ThurstonConfig) -> Result<PullbackState> {
    let d = portrait.degree;
    let crit = portrait.critical();
    let es: Vec<usize> = crit.iter().map(|&k| portrait.local_degree[k] - 1).collect();
    let target: Vec<Complex64> = portrait.transition.iter().map(|&t| state.positions[t]).collect();
    let from = state.images.clone().unwrap_or_else(|| target.clone());
    let mut tau = 0.0f64;
    let mut h = 1.0f64;
    let mut cur = state.positions.clone();
    let mut crit_pos: Vec<Complex64> = crit.iter().map(|&k| state.positions[k]).collect();
    let mut poly = state.polynomial.clone();
    let mut guard = f64::INFINITY;
    let mut halvings = 0;
    while tau < 1.0 {
        let t1 = (tau + h).min(1.0);
        let w: Vec<Complex64> = from.iter().zip(&target).map(|(a, b)| a + (b - a) * t1).collect();
        let values: Vec<Complex64> = crit.iter().map(|&k| w[k]).collect();
        let attempt = solve_critical_values(d, &es, &values, &crit_pos).and_then(|(q, cps)| {
            let mut next = cur.clone();
            let mut g = f64::INFINITY;
            for k in 0..portrait.len() {
                if let Some(j) = crit.iter().position(|&c| c == k) {
                    next[k] = cps[j];
                    continue;
                }
                let (z, ratio) = nearest_preimage(&q, w[k], cur[k])?;
                next[k] = z;
                g = g.min(ratio);
            }
            Ok((q, cps, next, g))
        });
        let ok = match &attempt {
            Ok((_, _, _, g)) => state.images.is_none() || *g >= cfg.guard_ratio,
            Err(_) => false,
        };
        if ok {
            let (q, cps, next, g) = attempt.expect("checked");
            poly = q;
            crit_pos = cps;
            cur = next;
            guard = guard.min(g);
            tau = t1;
        } else {
            halvings += 1;
            if halvings > cfg.max_halvings {
                return Err(match attempt {
                    Err(e) => e,
                    Ok((_, _, _, g)) => Error::BranchAmbiguity(format!("preimage distance ratio {g:.3} below {}", cfg.guard_ratio)),
                });
            }
            h *= 0.5;
        }
    }
    let scale = 1.0 + target.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let resid = cur.iter().zip(&target).map(|(z, w)| (poly.eval(*z) - w).norm()).fold(0.0, f64::max);
    if resid > 1e-9 * scale {
        return Err(Error::SolveFailure(format!("portrait residual {resid:.2e}")));
    }
    let displacement = cur.iter().zip(&state.positions).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(PullbackState { n: state.n + 1, positions: cur, images: Some(target), polynomial: poly, displacement, guard })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    /// exp of the least-squares slope of log(displacement) over the last steps.
    pub fit_ratio: f64,
    pub fit_steps: usize,
    pub geometric: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThurstonResult {
    pub polynomial: MonicPolynomial,
    pub positions: Vec<Complex64>,
    pub history: Vec<f64>,
    pub certificate: Certificate,
    pub iterations: usize,
    /// Marks stay pairwise distinct and Q maps each onto its image.
    pub realized: bool,
}

/// Geometric-decay fit over the last (up to) 10 positive displacements.
pub fn decay_certificate(history: &[f64]) -> Certificate {
    let tail: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0.0)
        .map(|(i, &h)| (i as f64, h.ln()))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .take(10)
        .collect();
    if tail.len() < 3 {
        let exact = history.last().is_some_and(|&h| h == 0.0) || tail.len() == history.len();
        return Certificate { fit_ratio: 0.0, fit_steps: tail.len(), geometric: exact };
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let ratio = (sxy / sxx).exp();
    Certificate { fit_ratio: ratio, fit_steps: tail.len(), geometric: ratio < 1.0 }
}

/// (preperiod, period) of a mark under the transition map.
pub fn mark_orbit_type(portrait: &MarkedPortrait, id: usize) -> (usize, usize) {
    let mut seen = vec![usize::MAX; portrait.len()];
    let mut k = id;
    let mut n = 0;
    while seen[k] == usize::MAX {
        seen[k] = n;
        k = portrait.transition[k];
        n += 1;
    }
    (seen[k], n - seen[k])
}

/// Whether the critical orbits of f, read off by `classify`, have the
/// portrait's orbit types at the marked critical positions.
fn orbit_types_match(portrait: &MarkedPortrait, positions: &[Complex64], f: &MonicPolynomial) -> Result<bool> {
    // the iteration stops near 1e-10, so orbit closure is judged at 1e-7
    let budget = ClassifyBudget { check_primitivity: false, detect_tol: 1e-7, exact_tol: 1e-7, ..ClassifyBudget::default() };
    let class = classify(f, &budget)?;
    for k in portrait.critical() {
        let Some(c) = class.critical_orbit_data.iter().min_by(|a, b| (a.point - positions[k]).norm().total_cmp(&(b.point - positions[k]).norm())) else {
            return Ok(false);
        };
        let (m, q) = mark_orbit_type(portrait, k);
        if c.orbit != (CriticalOrbit::Finite { preperiod: m, period: q }) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn thurston_iterate(portrait: &MarkedPortrait, seed: &[Complex64], cfg: &ThurstonConfig) -> Result<ThurstonResult> {
    let mut state = PullbackState::seed(portrait, seed)?;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        state = pullback_step_with(&state, portrait, cfg)?;
        history.push(state.displacement);
        // distance of Q (one step behind the positions) to the limit under geometric decay
        let rho = decay_certificate(&history).fit_ratio;
        let est = if history.len() >= 3 && rho < 1.0 { state.displacement / (1.0 - rho) } else { f64::INFINITY };
        if state.displacement == 0.0 || est.max(state.displacement) < cfg.tol {
            let f = &state.polynomial;
            let p = &state.positions;
            let scale = 1.0 + p.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let maps = (0..p.len()).all(|k| (f.eval(p[k]) - p[portrait.transition[k]]).norm() <= 1e-8 * scale);
            let distinct = (0..p.len()).all(|i| ((i + 1)..p.len()).all(|j| (p[i] - p[j]).norm() > 1e-6 * scale));
            let types = orbit_types_match(portrait, p, f).unwrap_or(false);
            return Ok(ThurstonResult {
                polynomial: state.polynomial.clone(),
                positions: state.positions.clone(),
                certificate: decay_certificate(&history),
                iterations: history.len(),
                history,
                realized: maps && distinct && types,
            });
        }
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, last: state.displacement })
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
    fn riemann_hurwitz_is_enforced() {
        let bad = MarkedPortrait::new(3, vec!["a".into(), "b".into()], vec![1, 0], vec![2, 1], vec![None, None], vec![]);
        assert!(matches!(bad, Err(Error::InvariantViolation(_))));
        let bad = MarkedPortrait::new(2, vec!["a".into()], vec![1], vec![2], vec![None], vec![]);
        assert!(bad.is_err());
    }

    #[test]
    fn critical_value_solve_cubic() {
        // z³ − 3z has critical points ±1 with values ∓2
        let (f, cs) = solve_critical_values(3, &[1, 1], &[c(-2.0, 0.0), c(2.0, 0.0)], &[c(0.9, 0.1), c(-1.1, 0.0)]).unwrap();
        assert!((f.coeffs()[0]).norm() < 1e-12);
        assert!((f.coeffs()[1] + 3.0).norm() < 1e-12);
        assert!((cs[0] - 1.0).norm() < 1e-12 && (cs[1] + 1.0).norm() < 1e-12);
    }

    #[test]
    fn basilica_is_a_fixed_point() {
        let b = fixtures::basilica();
        let p = MarkedPortrait::of_polynomial(&b).unwrap();
        assert_eq!(p.len(), 2);
        let s0 = PullbackState::seed(&p, &p.positions).unwrap();
        let s1 = pullback_step(&s0, &p).unwrap();
        assert!(s1.displacement < 1e-12);
        assert!((s1.polynomial.coeffs()[0] + 1.0).norm() < 1e-12);
    }

    /// Independent oracle: Newton on c³ + 2c² + c + 1.
    fn cubic_root(seed: Complex64) -> Complex64 {
        let mut z = seed;
        for _ in 0..60 {
            z -= (((z + 2.0) * z + 1.0) * z + 1.0) / ((3.0 * z + 4.0) * z + 1.0);
        }
        z
    }

    #[test]
    fn rabbit_and_airplane_from_angles() {
        for (theta, oracle) in [(ra(1, 7), cubic_root(c(-0.1, 0.8))), (ra(3, 7), cubic_root(c(-1.7, 0.0)))] {
            let p = MarkedPortrait::unicritical_periodic(2, &theta).unwrap();
            let r = thurston_iterate(&p, &p.angle_seed(1.0), &ThurstonConfig::default()).unwrap();
            assert!((r.polynomial.coeffs()[0] - oracle).norm() < 1e-8, "{theta}: {}", r.polynomial.coeffs()[0]);
            assert!(r.certificate.geometric && r.certificate.fit_ratio < 1.0);
            assert!(r.realized);
            assert!(r.history.windows(2).last().is_none_or(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn basilica_from_angles() {
        let p = MarkedPortrait::unicritical_periodic(2, &ra(1, 3)).unwrap();
        let r = thurston_iterate(&p, &p.angle_seed(1.0), &ThurstonConfig::default()).unwrap();
        assert!((r.polynomial.coeffs()[0] + 1.0).norm() < 1e-10);
    }

    #[test]
    fn cubic_with_two_fixed_critical_points() {
        // marks: two critical points, each fixed
        let p = MarkedPortrait::new(3, vec!["a".into(), "b".into()], vec![0, 1], vec![2, 2], vec![None, None], vec![]).unwrap();
        let r = thurston_iterate(&p, &[c(0.6, 0.1), c(-0.6, 0.0)], &ThurstonConfig::default()).unwrap();
        let f = &r.polynomial;
        for z in &r.positions {
            assert!((f.eval(*z) - z).norm() < 1e-9);
            assert!(f.derivative_at(*z).norm() < 1e-9);
        }
    }

    #[test]
    fn portrait_json_round_trip() {
        let p = MarkedPortrait::unicritical_periodic(2, &ra(1, 7)).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: MarkedPortrait = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn steps_keep_portrait_equations(r in 0.3f64..2.0, turn in -0.05f64..0.05, which in 0usize..3) {
            let theta = [ra(1, 7), ra(3, 7), ra(1, 3)][which].clone();
            let p = MarkedPortrait::unicritical_periodic(2, &theta).unwrap();
            let rot = Complex64::from_polar(1.0, TAU * turn);
            let seed: Vec<Complex64> = p.angle_seed(r).iter().map(|z| z * rot).collect();
            let mut s = PullbackState::seed(&p, &seed).unwrap();
            for _ in 0..6 {
                let next = match pullback_step(&s, &p) {
                    Ok(n) => n,
                    Err(Error::BranchAmbiguity(_)) => break,
                    Err(e) => panic!("{e}"),
                };
                let q = &next.polynomial;
                proptest::prop_assert_eq!(q.coeffs().len(), 1);
                let scale = 1.0 + s.positions.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for k in 0..p.len() {
                    let err = (q.eval(next.positions[k]) - s.positions[p.transition[k]]).norm();
                    proptest::prop_assert!(err <= 1e-9 * scale, "mark {} residual {:e}", k, err);
                }
                proptest::prop_assert!(q.derivative_at(next.positions[0]).norm() < 1e-9);
                s = next;
            }
        }
    }

    #[test]
    fn certificate_fit() {
        let h: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        let c = decay_certificate(&h);
        assert!((c.fit_ratio - 0.5).abs() < 1e-12 && c.geometric);
        let c = decay_certificate(&[1.0, 1.0, 1.0, 1.0]);
        assert!(!c.geometric);
    }
}
