//! Exact angles in Q/Z, orbits under m_d: t ↦ d t mod 1, rational
//! laminations computed by co-landing, and the lamination inclusion test.

use crate::error::{Error, Result};
use crate::polycore::MonicPolynomial;
use crate::potential::{land_ray_with, RayConfig};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// p/q in [0, 1) with gcd(p, q) = 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RationalAngle {
    num: BigUint,
    den: BigUint,
}

impl RationalAngle {
    pub fn new(num: impl Into<BigUint>, den: impl Into<BigUint>) -> Self {
        let num = num.into();
        let den = den.into();
        assert!(!den.is_zero(), "zero denominator");
        let num = num % &den;
        let g = num.gcd(&den);
        if num.is_zero() {
            return RationalAngle { num, den: BigUint::one() };
        }
        RationalAngle { num: num / &g, den: den / g }
    }

    pub fn zero() -> Self {
        RationalAngle { num: BigUint::zero(), den: BigUint::one() }
    }

    pub fn numer(&self) -> &BigUint {
        &self.num
    }

    pub fn denom(&self) -> &BigUint {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// d·t mod 1.
    pub fn mul(&self, d: u64) -> Self {
        RationalAngle::new(&self.num * BigUint::from(d), self.den.clone())
    }

    /// d^n·t mod 1.
    pub fn mul_pow(&self, d: u64, n: u32) -> Self {
        RationalAngle::new(&self.num * BigUint::from(d).pow(n), self.den.clone())
    }

    /// (t + j)/d, the j-th preimage under m_d.
    pub fn preimage(&self, d: u64, j: u64) -> Self {
        let num = &self.num + BigUint::from(j) * &self.den;
        RationalAngle::new(num, &self.den * BigUint::from(d))
    }

    /// All d preimages under m_d, ascending.
    pub fn preimages(&self, d: u64) -> Vec<Self> {
        (0..d).map(|j| self.preimage(d, j)).collect()
    }

    pub fn to_f64(&self) -> f64 {
        let scaled: BigUint = (&self.num << 64usize) / &self.den;
        scaled.to_u64().unwrap_or(u64::MAX) as f64 / 18_446_744_073_709_551_616.0
    }

    /// Fractional part of d^n·t as f64, computed exactly before rounding.
    pub fn frac_mul_pow_f64(&self, d: u64, n: u32) -> f64 {
        self.mul_pow(d, n).to_f64()
    }

    /// Midpoint of the ccw arc from `a` to `b`.
    pub fn arc_midpoint(a: &Self, b: &Self) -> Self {
        let len = arc_length(a, b);
        let half = RationalAngle::new(len.num.clone(), &len.den * 2u32);
        a.add(&half)
    }

    pub fn add(&self, other: &Self) -> Self {
        let num = &self.num * &other.den + &other.num * &self.den;
        RationalAngle::new(num, &self.den * &other.den)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let num = &self.num * &other.den + &self.den * &other.den - &other.num * &self.den;
        RationalAngle::new(num, &self.den * &other.den)
    }
}

/// Length of the ccw arc from a to b in [0, 1); zero when a = b.
pub fn arc_length(a: &RationalAngle, b: &RationalAngle) -> RationalAngle {
    b.sub(a)
}

/// Whether x lies on the open ccw arc (a, b). For a = b this is the circle minus a.
pub fn in_open_arc(x: &RationalAngle, a: &RationalAngle, b: &RationalAngle) -> bool {
    if x == a || x == b {
        return false;
    }
    if a == b {
        return true;
    }
    x.sub(a) < b.sub(a)
}

/// Whether x lies on the closed ccw arc [a, b].
pub fn in_closed_arc(x: &RationalAngle, a: &RationalAngle, b: &RationalAngle) -> bool {
    x == a || x == b || in_open_arc(x, a, b)
}

impl PartialOrd for RationalAngle {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RationalAngle {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

impl fmt::Display for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Debug for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for RationalAngle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (p, q) = match s.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s, "1"),
        };
        let p = BigUint::from_str(p).map_err(|_| Error::InvalidInput(format!("bad angle '{}'", s)))?;
        let q = BigUint::from_str(q).map_err(|_| Error::InvalidInput(format!("bad angle '{}'", s)))?;
        if q.is_zero() {
            return Err(Error::InvalidInput(format!("zero denominator in '{}'", s)));
        }
        Ok(RationalAngle::new(p, q))
    }
}

impl Serialize for RationalAngle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RationalAngle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn ra(p: u64, q: u64) -> RationalAngle {
    RationalAngle::new(p, q)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleOrbit {
    pub preperiod: usize,
    pub period: usize,
    /// t, d t, ..., up to the last point before the first repeat.
    pub orbit: Vec<RationalAngle>,
}

/// Exact orbit of t under m_d.
pub fn angle_orbit(t: &RationalAngle, d: u64) -> AngleOrbit {
    assert!(d >= 2);
    let mut seen: HashMap<RationalAngle, usize> = HashMap::new();
    let mut orbit = Vec::new();
    let mut x = t.clone();
    loop {
        if let Some(&i) = seen.get(&x) {
            let n = orbit.len();
            return AngleOrbit { preperiod: i, period: n - i, orbit };
        }
        seen.insert(x.clone(), orbit.len());
        orbit.push(x.clone());
        x = x.mul(d);
    }
}

/// Angles of exact preperiod m and exact period p under m_d, ascending.
pub fn angles_with_orbit_type(d: u64, preperiod: usize, period: usize) -> Vec<RationalAngle> {
    let dp = BigUint::from(d).pow(period as u32);
    let den = BigUint::from(d).pow(preperiod as u32) * (&dp - 1u32);
    let n = den.to_u64().expect("denominator budget");
    let mut out: Vec<RationalAngle> = (0..n)
        .map(|k| RationalAngle::new(k, den.clone()))
        .filter(|t| {
            let o = angle_orbit(t, d);
            o.preperiod == preperiod && o.period == period
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Whether two finite angle sets are unlinked on the circle.
pub fn unlinked(a: &[RationalAngle], b: &[RationalAngle]) -> bool {
    if a.len() < 2 || b.len() < 2 {
        return true;
    }
    let mut sa: Vec<_> = a.to_vec();
    sa.sort();
    // b must sit inside a single complementary arc of a
    let arc_of = |x: &RationalAngle| -> Option<usize> {
        if sa.contains(x) {
            return None;
        }
        (0..sa.len()).find(|&i| in_open_arc(x, &sa[i], &sa[(i + 1) % sa.len()]))
    };
    let mut arcs = b.iter().map(arc_of);
    let first = match arcs.next() {
        Some(Some(i)) => i,
        _ => return false,
    };
    arcs.all(|x| x == Some(first))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalLamination {
    pub degree: usize,
    pub period_bound: usize,
    pub preperiod_bound: usize,
    /// Non-trivial classes, each sorted; classes sorted by first angle.
    pub classes: Vec<Vec<RationalAngle>>,
}

#[derive(Debug, Clone)]
pub struct LaminationConfig {
    pub period_bound: usize,
    pub preperiod_bound: usize,
    pub tol_cluster: f64,
    pub ray: RayConfig,
    /// Confirm clusters with a second landing at l_min / 10.
    pub two_scale: bool,
}

impl Default for LaminationConfig {
    fn default() -> Self {
        LaminationConfig {
            period_bound: 4,
            preperiod_bound: 2,
            tol_cluster: 1e-5,
            ray: RayConfig::default(),
            two_scale: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaminationReport {
    pub lamination: RationalLamination,
    /// Angles whose rays did not land; excluded from the classes.
    pub unresolved: Vec<RationalAngle>,
    /// Angle pairs that clustered at one landing scale but not the other.
    pub scale_disagreements: usize,
    pub tol_cluster: f64,
    pub l_min: f64,
}

/// All angles within the period/preperiod bounds, ascending.
pub fn angles_within(d: u64, period_bound: usize, preperiod_bound: usize) -> Vec<RationalAngle> {
    let mut all = Vec::new();
    for m in 0..=preperiod_bound {
        for p in 1..=period_bound {
            all.extend(angles_with_orbit_type(d, m, p));
        }
    }
    all.sort();
    all.dedup();
    all
}

fn partition(points: &[Complex64], tol: f64) -> Vec<usize> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (points[i] - points[j]).norm() <= tol {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    for l in label.iter_mut() {
                        if *l == a {
                            *l = b;
                        }
                    }
                }
            }
        }
    }
    label
}

/// λ(f) restricted to the configured angle set.
pub fn rational_lamination(f: &MonicPolynomial, cfg: &LaminationConfig) -> Result<LaminationReport> {
    let d = f.degree() as u64;
    let angles = angles_within(d, cfg.period_bound, cfg.preperiod_bound);
    let land = |ray: &RayConfig| -> Vec<Option<Complex64>> {
        angles
            .par_iter()
            .map(|t| land_ray_with(f, t, ray).ok())
            .collect()
    };
    let first = land(&cfg.ray);
    let second = if cfg.two_scale {
        let mut r2 = cfg.ray.clone();
        r2.l_min /= 10.0;
        Some(land(&r2))
    } else {
        None
    };
    let mut idx = Vec::new();
    let mut unresolved = Vec::new();
    for (i, t) in angles.iter().enumerate() {
        let ok = first[i].is_some() && second.as_ref().is_none_or(|s| s[i].is_some());
        if ok {
            idx.push(i);
        } else {
            unresolved.push(t.clone());
        }
    }
    let p1: Vec<Complex64> = idx.iter().map(|&i| first[i].unwrap()).collect();
    let l1 = partition(&p1, cfg.tol_cluster);
    let l2 = match &second {
        Some(s) => {
            let p2: Vec<Complex64> = idx.iter().map(|&i| s[i].unwrap()).collect();
            partition(&p2, cfg.tol_cluster)
        }
        None => l1.clone(),
    };
    let mut disagreements = 0;
    let mut groups: HashMap<(usize, usize), Vec<RationalAngle>> = HashMap::new();
    for k in 0..idx.len() {
        for j in 0..k {
            if (l1[k] == l1[j]) != (l2[k] == l2[j]) {
                disagreements += 1;
            }
        }
        groups.entry((l1[k], l2[k])).or_default().push(angles[idx[k]].clone());
    }
    let mut classes: Vec<Vec<RationalAngle>> = groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    classes.sort();
    let lam = RationalLamination {
        degree: f.degree(),
        period_bound: cfg.period_bound,
        preperiod_bound: cfg.preperiod_bound,
        classes,
    };
    lam.check_invariants()?;
    Ok(LaminationReport {
        lamination: lam,
        unresolved,
        scale_disagreements: disagreements,
        tol_cluster: cfg.tol_cluster,
        l_min: cfg.ray.l_min,
    })
}

/// Clusters landing points of the given angles (no bound bookkeeping).
pub fn colanding_classes(points: &[(RationalAngle, Complex64)], tol: f64) -> Vec<(Complex64, Vec<RationalAngle>)> {
    let pts: Vec<Complex64> = points.iter().map(|p| p.1).collect();
    let label = partition(&pts, tol);
    let mut out: Vec<(Complex64, Vec<RationalAngle>)> = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (i, l) in label.iter().enumerate() {
        match seen.get(l) {
            Some(&k) => out[k].1.push(points[i].0.clone()),
            None => {
                seen.insert(*l, out.len());
                out.push((points[i].1, vec![points[i].0.clone()]));
            }
        }
    }
    for o in out.iter_mut() {
        o.1.sort();
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Containment {
    pub holds: bool,
    pub witness: Option<Vec<RationalAngle>>,
    pub period_bound: usize,
    pub preperiod_bound: usize,
}

impl RationalLamination {
    pub fn class_of(&self, t: &RationalAngle) -> Option<&Vec<RationalAngle>> {
        self.classes.iter().find(|c| c.contains(t))
    }

    pub fn contains_class(&self, class: &[RationalAngle]) -> bool {
        self.classes.iter().any(|c| class.iter().all(|t| c.contains(t)))
    }

    /// Restriction to angles within smaller bounds.
    pub fn restrict(&self, period_bound: usize, preperiod_bound: usize) -> RationalLamination {
        let d = self.degree as u64;
        let classes: Vec<Vec<RationalAngle>> = self
            .classes
            .iter()
            .map(|c| {
                c.iter()
                    .filter(|t| {
                        let o = angle_orbit(t, d);
                        o.period <= period_bound && o.preperiod <= preperiod_bound
                    })
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .filter(|c| c.len() >= 2)
            .collect();
        RationalLamination { degree: self.degree, period_bound, preperiod_bound, classes }
    }

    /// Pairwise disjointness, unlinkedness and forward invariance.
    pub fn check_invariants(&self) -> Result<()> {
        let d = self.degree as u64;
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                if a.iter().any(|t| b.contains(t)) {
                    return Err(Error::InvariantViolation(format!("classes {:?} and {:?} overlap", a, b)));
                }
                if !unlinked(a, b) {
                    return Err(Error::InvariantViolation(format!("classes {:?} and {:?} are linked", a, b)));
                }
            }
        }
        for a in &self.classes {
            let mut img: Vec<RationalAngle> = a.iter().map(|t| t.mul(d)).collect();
            img.sort();
            img.dedup();
            if img.len() >= 2 && !self.contains_class(&img) {
                return Err(Error::InvariantViolation(format!("image of {:?} is not in a class", a)));
            }
        }
        Ok(())
    }
}

/// Whether every class of `small` lies inside a class of `big`.
pub fn contains(big: &RationalLamination, small: &RationalLamination) -> Containment {
    for c in &small.classes {
        if !big.contains_class(c) {
            return Containment {
                holds: false,
                witness: Some(c.clone()),
                period_bound: small.period_bound,
                preperiod_bound: small.preperiod_bound,
            };
        }
    }
    Containment { holds: true, witness: None, period_bound: small.period_bound, preperiod_bound: small.preperiod_bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orbit_examples() {
        let o = angle_orbit(&ra(1, 3), 2);
        assert_eq!((o.preperiod, o.period), (0, 2));
        assert_eq!(o.orbit, vec![ra(1, 3), ra(2, 3)]);
        let o = angle_orbit(&ra(1, 7), 2);
        assert_eq!((o.preperiod, o.period), (0, 3));
        assert_eq!(o.orbit, vec![ra(1, 7), ra(2, 7), ra(4, 7)]);
        let o = angle_orbit(&ra(1, 6), 2);
        assert_eq!((o.preperiod, o.period), (1, 2));
        assert_eq!(o.orbit, vec![ra(1, 6), ra(1, 3), ra(2, 3)]);
    }

    #[test]
    fn parse_and_display() {
        let t: RationalAngle = "6/14".parse().unwrap();
        assert_eq!(t, ra(3, 7));
        assert_eq!(t.to_string(), "3/7");
        assert_eq!("0".parse::<RationalAngle>().unwrap(), RationalAngle::zero());
        assert!("1/0".parse::<RationalAngle>().is_err());
        assert!((ra(1, 3).to_f64() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn counts_of_periodic_angles() {
        assert_eq!(angles_with_orbit_type(2, 0, 1), vec![ra(0, 1)]);
        assert_eq!(angles_with_orbit_type(2, 0, 2), vec![ra(1, 3), ra(2, 3)]);
        assert_eq!(angles_with_orbit_type(2, 0, 3).len(), 6);
        assert_eq!(angles_with_orbit_type(2, 0, 4).len(), 12);
        assert_eq!(angles_with_orbit_type(2, 1, 1), vec![ra(1, 2)]);
    }

    #[test]
    fn linking() {
        assert!(unlinked(&[ra(1, 3), ra(2, 3)], &[ra(1, 7), ra(2, 7)]));
        assert!(!unlinked(&[ra(1, 3), ra(2, 3)], &[ra(1, 2), ra(0, 1)]));
        assert!(unlinked(&[ra(1, 7), ra(2, 7), ra(4, 7)], &[ra(9, 14), ra(11, 14)]));
    }

    #[test]
    fn containment_and_witness() {
        let small = RationalLamination { degree: 2, period_bound: 3, preperiod_bound: 0, classes: vec![vec![ra(3, 7), ra(4, 7)]] };
        let big = RationalLamination {
            degree: 2,
            period_bound: 3,
            preperiod_bound: 0,
            classes: vec![vec![ra(1, 3), ra(2, 3)], vec![ra(3, 7), ra(4, 7)]],
        };
        let empty = RationalLamination { degree: 2, period_bound: 3, preperiod_bound: 0, classes: vec![] };
        assert!(contains(&big, &small).holds);
        assert!(contains(&big, &empty).holds);
        let c = contains(&empty, &small);
        assert!(!c.holds);
        assert_eq!(c.witness.unwrap(), vec![ra(3, 7), ra(4, 7)]);
    }

    proptest! {
        #[test]
        fn orbit_is_exact(p in 0u64..500, q in 1u64..500, d in 2u64..5) {
            let t = RationalAngle::new(p, q);
            let o = angle_orbit(&t, d);
            let a = t.mul_pow(d, (o.preperiod + o.period) as u32);
            let b = t.mul_pow(d, o.preperiod as u32);
            prop_assert_eq!(a, b);
            prop_assert!(o.period >= 1);
            prop_assert_eq!(o.orbit.len(), o.preperiod + o.period);
        }

        #[test]
        fn preimages_map_back(p in 0u64..200, q in 1u64..200, d in 2u64..5) {
            let t = RationalAngle::new(p, q);
            for s in t.preimages(d) {
                prop_assert_eq!(s.mul(d), t.clone());
            }
        }

        #[test]
        fn ordering_matches_floats(a in 0u64..1000, b in 0u64..1000, q in 1001u64..2000) {
            let x = RationalAngle::new(a, q);
            let y = RationalAngle::new(b, q);
            prop_assert_eq!(x < y, a < b);
        }

        #[test]
        fn containment_is_reflexive(n in 2usize..5) {
            let classes: Vec<Vec<RationalAngle>> = (1..n as u64).map(|k| vec![ra(k, 97), ra(97 - k, 97)]).collect();
            let l = RationalLamination { degree: 2, period_bound: 4, preperiod_bound: 0, classes };
            prop_assert!(contains(&l, &l).holds);
        }
    }
}
