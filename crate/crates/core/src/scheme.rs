//! Reduced mapping schemes, generalized polynomials over them, and the
//! internal angle system marking each critical Fatou component.

use crate::error::{Error, Result};
use crate::lamination::{angles_with_orbit_type, RationalAngle};
use crate::polycore::{classify, critical_points, ClassifyBudget, FatouData, MonicPolynomial, Phase};
use crate::potential::{extrapolate_landing, land_ray_with, trace_fiber_ray, ExternalRay, FiberDynamics, RayConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// T = (|T|, σ, δ) with return times and the critical point naming each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingScheme {
    pub sigma: Vec<usize>,
    pub delta: Vec<usize>,
    pub r: Vec<usize>,
    pub centers: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SchemeJson {
    vertices: Vec<String>,
    sigma: BTreeMap<String, String>,
    delta: BTreeMap<String, usize>,
    r: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    centers: BTreeMap<String, [f64; 2]>,
}

fn vid(i: usize) -> String {
    format!("v{i}")
}

impl Serialize for MappingScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.len();
        let j = SchemeJson {
            vertices: (0..n).map(vid).collect(),
            sigma: (0..n).map(|i| (vid(i), vid(self.sigma[i]))).collect(),
            delta: (0..n).map(|i| (vid(i), self.delta[i])).collect(),
            r: (0..n).map(|i| (vid(i), self.r[i])).collect(),
            centers: (0..n).map(|i| (vid(i), [self.centers[i].re, self.centers[i].im])).collect(),
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MappingScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = SchemeJson::deserialize(d)?;
        let idx: BTreeMap<&str, usize> = j.vertices.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let get = |m: &BTreeMap<String, usize>, v: &str| m.get(v).copied().ok_or_else(|| D::Error::custom(format!("missing entry for {v}")));
        let mut sigma = Vec::new();
        let mut delta = Vec::new();
        let mut r = Vec::new();
        let mut centers = Vec::new();
        for v in &j.vertices {
            let s = j.sigma.get(v).ok_or_else(|| D::Error::custom(format!("sigma missing {v}")))?;
            sigma.push(*idx.get(s.as_str()).ok_or_else(|| D::Error::custom(format!("unknown vertex {s}")))?);
            delta.push(get(&j.delta, v)?);
            r.push(get(&j.r, v)?);
            centers.push(j.centers.get(v).map_or(Complex64::new(0.0, 0.0), |c| Complex64::new(c[0], c[1])));
        }
        let t = MappingScheme { sigma, delta, r, centers };
        t.validate().map_err(|e| D::Error::custom(e.to_string()))?;
        Ok(t)
    }
}

impl MappingScheme {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn single(delta: usize, r: usize) -> Self {
        MappingScheme { sigma: vec![0], delta: vec![delta], r: vec![r], centers: vec![Complex64::new(0.0, 0.0)] }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.delta.len() != n || self.r.len() != n || self.centers.len() != n {
            return Err(Error::InvalidInput("scheme arrays must be non-empty and of equal length".into()));
        }
        if self.sigma.iter().any(|&s| s >= n) {
            return Err(Error::InvalidInput("sigma must map vertices to vertices".into()));
        }
        if self.delta.iter().any(|&d| d < 2) || self.r.iter().any(|&r| r < 1) {
            return Err(Error::InvalidInput("need delta ≥ 2 and r ≥ 1".into()));
        }
        Ok(())
    }

    /// Vertices grouped into σ-cycles; vertices off cycles are not listed.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for v in 0..n {
            // v is periodic iff σ^k(v) = v for some k ≤ n
            let mut w = self.sigma[v];
            let mut periodic = false;
            for _ in 0..n {
                if w == v {
                    periodic = true;
                    break;
                }
                w = self.sigma[w];
            }
            if periodic && !seen[v] {
                let mut cyc = vec![v];
                seen[v] = true;
                let mut w = self.sigma[v];
                while w != v {
                    seen[w] = true;
                    cyc.push(w);
                    w = self.sigma[w];
                }
                out.push(cyc);
            }
        }
        out
    }

    /// Vertices ordered so that σ(v) precedes v for every non-periodic v.
    fn backward_order(&self) -> Vec<usize> {
        let n = self.len();
        let mut placed = vec![false; n];
        let mut order = Vec::new();
        for c in self.cycles() {
            for v in c {
                placed[v] = true;
                order.push(v);
            }
        }
        while order.len() < n {
            for v in 0..n {
                if !placed[v] && placed[self.sigma[v]] {
                    placed[v] = true;
                    order.push(v);
                }
            }
        }
        order
    }
}

/// T(f₀) for a postcritically finite hyperbolic f₀.
pub fn reduced_scheme(f0: &MonicPolynomial) -> Result<MappingScheme> {
    let budget = ClassifyBudget { check_primitivity: false, ..ClassifyBudget::default() };
    let class = classify(f0, &budget)?;
    if !(class.is_pcf && class.is_hyperbolic) {
        return Err(Error::NotHyperbolicPcf(format!("pcf={} hyperbolic={}", class.is_pcf, class.is_hyperbolic)));
    }
    let crits = critical_points(f0)?;
    let n = crits.len();
    let mut sigma = vec![0; n];
    let mut r = vec![0; n];
    let max_steps = class
        .critical_orbit_data
        .iter()
        .map(|c| match c.orbit {
            crate::polycore::CriticalOrbit::Finite { preperiod, period } => preperiod + period,
            _ => 0,
        })
        .sum::<usize>()
        + 1;
    for (i, &(c, _)) in crits.iter().enumerate() {
        let mut z = c;
        let mut found = false;
        for k in 1..=max_steps {
            z = f0.eval(z);
            if let Some(j) = crits.iter().position(|&(w, _)| (w - z).norm() <= 1e-8 * w.norm().max(1.0)) {
                sigma[i] = j;
                r[i] = k;
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NotHyperbolicPcf(format!("critical point {c} never meets a critical point")));
        }
    }
    Ok(MappingScheme {
        sigma,
        delta: crits.iter().map(|&(_, m)| m + 1).collect(),
        r,
        centers: crits.iter().map(|&(c, _)| c).collect(),
    })
}

/// θ_v for every vertex, exact under d^{r(v)}θ_v = θ_{σ(v)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalAngleSystem {
    pub theta: Vec<RationalAngle>,
}

impl InternalAngleSystem {
    pub fn is_compatible(&self, t: &MappingScheme, d: u64) -> bool {
        (0..t.len()).all(|v| self.theta[v].mul_pow(d, t.r[v] as u32) == self.theta[t.sigma[v]])
    }
}

#[derive(Debug, Clone)]
pub struct AngleSearchConfig {
    /// Largest combined return time R (denominator d^R − 1) tried.
    pub max_return: usize,
    pub ray: RayConfig,
    /// Boundary push ε relative to the landing-point/centre distance.
    pub eps_rel: f64,
}

impl Default for AngleSearchConfig {
    fn default() -> Self {
        AngleSearchConfig { max_return: 12, ray: RayConfig::default(), eps_rel: 1e-4 }
    }
}

/// Whether `p` lies on the boundary of the bounded Fatou component containing
/// `center`: ε-pushes toward the centre at two scales must see the centre's
/// phase along the whole segment.
pub fn lands_on_component(fatou: &FatouData, p: Complex64, center: Complex64, eps_rel: f64) -> bool {
    let target = fatou.phase(center);
    if !matches!(target, Phase::Basin { .. }) {
        return false;
    }
    let dist = (center - p).norm();
    if dist == 0.0 {
        return false;
    }
    let dir = (center - p) / dist;
    let eps = eps_rel * dist;
    [eps, 0.1 * eps].iter().all(|&e| {
        let q = p + dir * e;
        (0..=32).all(|s| fatou.phase(q + (center - q) * (s as f64 / 32.0)) == target)
    }) && fatou.phase(p + dir * (-eps)) != target
}

pub fn internal_angle_system(f0: &MonicPolynomial, t: &MappingScheme) -> Result<InternalAngleSystem> {
    internal_angle_system_with(f0, t, &AngleSearchConfig::default())
}

pub fn internal_angle_system_with(f0: &MonicPolynomial, t: &MappingScheme, cfg: &AngleSearchConfig) -> Result<InternalAngleSystem> {
    if f0.coeffs().iter().all(|a| a.norm() == 0.0) {
        return Err(Error::Precondition("f0 = z^d has no internal angle system".into()));
    }
    let d = f0.degree() as u64;
    let fatou = FatouData::from_polynomial(f0)?;
    let n = t.len();
    let mut theta: Vec<Option<RationalAngle>> = vec![None; n];
    let on_boundary = |angle: &RationalAngle, v: usize| -> bool {
        match land_ray_with(f0, angle, &cfg.ray) {
            Ok(p) => lands_on_component(&fatou, p, t.centers[v], cfg.eps_rel),
            Err(_) => false,
        }
    };
    for cyc in t.cycles() {
        let v0 = cyc[0];
        let big_r: usize = cyc.iter().map(|&v| t.r[v]).sum();
        if big_r > cfg.max_return {
            return Err(Error::AngleSearchFailed(format!("return time {big_r} above budget {}", cfg.max_return)));
        }
        // all angles fixed by m_d^R, i.e. exact periods dividing R
        let mut cands: Vec<RationalAngle> = (1..=big_r)
            .filter(|p| big_r.is_multiple_of(*p))
            .flat_map(|p| angles_with_orbit_type(d, 0, p))
            .collect();
        cands.sort();
        let chosen = cands.into_iter().find(|a| on_boundary(a, v0)).ok_or_else(|| Error::AngleSearchFailed(format!("no angle of period dividing {big_r} lands on vertex {v0}")))?;
        let mut a = chosen;
        let mut v = v0;
        loop {
            theta[v] = Some(a.clone());
            a = a.mul_pow(d, t.r[v] as u32);
            v = t.sigma[v];
            if v == v0 {
                break;
            }
        }
    }
    for v in t.backward_order() {
        if theta[v].is_some() {
            continue;
        }
        let img = theta[t.sigma[v]].clone().expect("image vertex handled first");
        let mut cands = vec![img];
        for _ in 0..t.r[v] {
            cands = cands.iter().flat_map(|x| x.preimages(d)).collect();
        }
        cands.sort();
        theta[v] = Some(
            cands
                .into_iter()
                .find(|a| on_boundary(a, v))
                .ok_or_else(|| Error::AngleSearchFailed(format!("no preimage angle lands on vertex {v}")))?,
        );
    }
    let sys = InternalAngleSystem { theta: theta.into_iter().map(|x| x.expect("all vertices assigned")).collect() };
    debug_assert!(sys.is_compatible(t, d));
    Ok(sys)
}

/// A fibrewise monic centred polynomial map over a scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedPolynomial {
    pub scheme: MappingScheme,
    pub fibers: Vec<MonicPolynomial>,
}

impl GeneralizedPolynomial {
    pub fn new(scheme: MappingScheme, fibers: Vec<MonicPolynomial>) -> Result<Self> {
        scheme.validate()?;
        if fibers.len() != scheme.len() || fibers.iter().zip(&scheme.delta).any(|(f, &d)| f.degree() != d) {
            return Err(Error::InvalidInput("fiber degrees must match the scheme".into()));
        }
        Ok(GeneralizedPolynomial { scheme, fibers })
    }

    /// All fibres z^{δ(v)}.
    pub fn power(scheme: &MappingScheme) -> Self {
        let fibers = scheme.delta.iter().map(|&d| MonicPolynomial::power(d)).collect();
        GeneralizedPolynomial { scheme: scheme.clone(), fibers }
    }

    pub fn step(&self, v: usize, z: Complex64) -> (usize, Complex64) {
        (self.scheme.sigma[v], self.fibers[v].eval(z))
    }

    pub fn max_coefficient_distance(&self, other: &GeneralizedPolynomial) -> f64 {
        self.fibers
            .iter()
            .zip(&other.fibers)
            .flat_map(|(a, b)| a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

impl FiberDynamics for GeneralizedPolynomial {
    fn next_fiber(&self, v: usize) -> usize {
        self.scheme.sigma[v]
    }
    fn fiber_degree(&self, v: usize) -> usize {
        self.scheme.delta[v]
    }
    fn fiber_eval_d(&self, v: usize, z: Complex64) -> (Complex64, Complex64) {
        self.fibers[v].eval_d(z)
    }
    fn fiber_eval(&self, v: usize, z: Complex64) -> Complex64 {
        self.fibers[v].eval(z)
    }
    fn escape_bound(&self) -> f64 {
        self.fibers.iter().map(|f| f.escape_radius()).fold(2.0, f64::max)
    }
}

/// Membership in C(T): every fibre critical point has a bounded orbit under
/// the scheme dynamics.
pub fn in_ct(g: &GeneralizedPolynomial, budget: usize) -> Result<bool> {
    let r = g.escape_bound();
    for v in 0..g.scheme.len() {
        for (c, _) in critical_points(&g.fibers[v])? {
            let mut z = c;
            let mut w = v;
            let mut late_max: f64 = 0.0;
            for k in 0..budget {
                if z.norm() > r {
                    return Ok(false);
                }
                if k >= budget - budget / 10 {
                    late_max = late_max.max(z.norm());
                }
                let (nw, nz) = g.step(w, z);
                w = nw;
                z = nz;
            }
            if late_max > 0.9 * r {
                return Err(Error::Inconclusive("fibre critical orbit still near the escape radius".into()));
            }
        }
    }
    Ok(true)
}

/// External ray (v, t) of a generalized polynomial, with its extrapolated
/// landing point when the tail is geometric.
pub fn gp_ray(g: &GeneralizedPolynomial, v: usize, t: &RationalAngle, l_min: f64) -> Result<ExternalRay> {
    let cfg = RayConfig { l_min, ..RayConfig::default() };
    let mut ray = trace_fiber_ray(g, v, t, &cfg)?;
    if let Some(level) = ray.failed_at {
        return Err(Error::NewtonDivergence { level });
    }
    // block length: the joint period of (fibre, angle) under the scheme
    let mut block = 1;
    let (mut w, mut a) = (g.scheme.sigma[v], t.mul(g.scheme.delta[v] as u64));
    while (w != v || &a != t) && block < 64 {
        a = a.mul(g.scheme.delta[w] as u64);
        w = g.scheme.sigma[w];
        block += 1;
    }
    ray.landing = extrapolate_landing(&ray.samples, block, &cfg).map(|(guess, tail)| {
        if block >= 64 {
            return guess;
        }
        // periodic (fibre, angle): polish on the block-fold return map
        let mut z = guess;
        for _ in 0..60 {
            let (mut w, mut dw, mut fib) = (z, Complex64::new(1.0, 0.0), v);
            for _ in 0..block {
                let (p, dp) = g.fibers[fib].eval_d(w);
                dw *= dp;
                w = p;
                fib = g.scheme.sigma[fib];
            }
            let step = (w - z) / (dw - 1.0);
            if !step.is_finite() {
                return guess;
            }
            z -= step;
            if step.norm() < 1e-15 * z.norm().max(1.0) {
                break;
            }
        }
        if (z - guess).norm() <= (20.0 * tail).max(1e-7) {
            z
        } else {
            guess
        }
    });
    Ok(ray)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lamination::ra;
    use crate::potential::fiber_green;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basilica_and_airplane_schemes() {
        let t = reduced_scheme(&fixtures::basilica()).unwrap();
        assert_eq!((t.len(), t.sigma[0], t.delta[0], t.r[0]), (1, 0, 2, 2));
        let t = reduced_scheme(&fixtures::airplane()).unwrap();
        assert_eq!((t.len(), t.sigma[0], t.delta[0], t.r[0]), (1, 0, 2, 3));
        // following r steps from the centre returns to it
        let f = fixtures::airplane();
        assert!((f.iterate(t.centers[0], 3) - t.centers[0]).norm() < 1e-9);
    }

    /// Cubic z³ + a z with critical points ±s (a = −3s²) both fixed:
    /// f(s) = −2s³ = s, so 2s² + 1 = 0.
    #[test]
    fn cubic_with_two_fixed_critical_points() {
        let mut s = c(0.1, 0.8);
        for _ in 0..50 {
            s -= (2.0 * s * s + 1.0) / (4.0 * s);
        }
        let f = MonicPolynomial::new(vec![c(0.0, 0.0), -3.0 * s * s]).unwrap();
        for z in [s, -s] {
            assert!((f.eval(z) - z).norm() < 1e-14);
            assert!(f.derivative_at(z).norm() < 1e-14);
        }
        let t = reduced_scheme(&f).unwrap();
        assert_eq!(t.len(), 2);
        for v in 0..2 {
            assert_eq!((t.sigma[v], t.delta[v], t.r[v]), (v, 2, 1));
        }
    }

    #[test]
    fn non_pcf_rejected() {
        let f = MonicPolynomial::quadratic(c(-0.2, 0.1));
        assert!(matches!(reduced_scheme(&f), Err(Error::NotHyperbolicPcf(_))));
    }

    #[test]
    fn basilica_internal_angle() {
        let f = fixtures::basilica();
        let t = reduced_scheme(&f).unwrap();
        let a = internal_angle_system(&f, &t).unwrap();
        assert_eq!(a.theta, vec![ra(1, 3)]);
        assert!(a.is_compatible(&t, 2));
    }

    #[test]
    fn airplane_internal_angle_lands_on_critical_component() {
        let f = fixtures::airplane();
        let t = reduced_scheme(&f).unwrap();
        let a = internal_angle_system(&f, &t).unwrap();
        assert!(a.is_compatible(&t, 2));
        // the root of the critical component: rays 2/7 and 5/7
        assert_eq!(a.theta, vec![ra(2, 7)]);
    }

    #[test]
    fn power_map_has_no_angle_system() {
        let f = MonicPolynomial::power(2);
        let t = MappingScheme::single(2, 1);
        assert!(matches!(internal_angle_system(&f, &t), Err(Error::Precondition(_))));
    }

    #[test]
    fn ct_membership() {
        let t = MappingScheme::single(2, 3);
        assert!(in_ct(&GeneralizedPolynomial::power(&t), 500).unwrap());
        let g = GeneralizedPolynomial::new(t.clone(), vec![fixtures::basilica()]).unwrap();
        assert!(in_ct(&g, 500).unwrap());
        let g = GeneralizedPolynomial::new(t, vec![MonicPolynomial::quadratic(c(1.0, 0.0))]).unwrap();
        assert!(!in_ct(&g, 500).unwrap());
    }

    #[test]
    fn gp_rays() {
        let t = MappingScheme::single(2, 1);
        let g = GeneralizedPolynomial::power(&t);
        let ray = gp_ray(&g, 0, &ra(1, 5), 1e-6).unwrap();
        for (l, p) in &ray.samples {
            assert!((p - Complex64::from_polar(l.exp(), std::f64::consts::TAU / 5.0)).norm() < 1e-12);
        }
        let g = GeneralizedPolynomial::new(t, vec![fixtures::basilica()]).unwrap();
        let beta = gp_ray(&g, 0, &ra(0, 1), 1e-8).unwrap().landing.unwrap();
        assert!((beta - c((1.0 + 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-8);
        let alpha = gp_ray(&g, 0, &ra(1, 3), 1e-8).unwrap().landing.unwrap();
        assert!((alpha - c((1.0 - 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn two_fibre_scheme_rays_map_across_fibres() {
        let t = MappingScheme { sigma: vec![1, 0], delta: vec![2, 3], r: vec![1, 1], centers: vec![c(0.0, 0.0); 2] };
        let g = GeneralizedPolynomial::new(
            t,
            vec![MonicPolynomial::quadratic(c(-0.5, 0.2)), MonicPolynomial::new(vec![c(0.1, 0.0), c(-0.3, 0.0)]).unwrap()],
        )
        .unwrap();
        let a = ra(1, 5);
        let r0 = gp_ray(&g, 0, &a, 1e-3).unwrap();
        let r1 = gp_ray(&g, 1, &a.mul(2), 1e-3).unwrap();
        for (l, p) in &r0.samples {
            let img = g.fibers[0].eval(*p);
            assert!((fiber_green(&g, 1, img, 4096) - 2.0 * l).abs() < 1e-9 * l.max(1.0));
            if let Some((_, q)) = r1.samples.iter().find(|(l1, _)| (l1 - 2.0 * l).abs() < 1e-12) {
                assert!((img - q).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn power_fibres_have_log_green() {
        let t = MappingScheme::single(3, 2);
        let g = GeneralizedPolynomial::power(&t);
        for z in [c(1.5, 0.3), c(-0.2, 2.0), c(0.5, 0.5)] {
            assert!((fiber_green(&g, 0, z, 4096) - z.norm().ln().max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn scheme_json_round_trip() {
        let t = reduced_scheme(&fixtures::airplane()).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"sigma\":{\"v0\":\"v0\"}"));
        let back: MappingScheme = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
