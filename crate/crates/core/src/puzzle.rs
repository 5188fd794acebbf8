//! Yoccoz puzzles built from admissible sets: exact arc-set combinatorics of
//! pieces, critical nests, buried biaccessible points, first-landing masks,
//! slice ray pairs and grid distortion audits.

use crate::error::{Error, Result};
use crate::lamination::{angle_orbit, angles_with_orbit_type, colanding_classes, RationalAngle};
use crate::polycore::{classify, critical_points, ClassifyBudget, FatouData, MonicPolynomial, Phase};
use crate::potential::{green, land_ray_with, ray_point, trace_ray_with, RayConfig};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

type Q = BigRational;

fn q_of(t: &RationalAngle) -> Q {
    Q::new(BigInt::from(t.numer().clone()), BigInt::from(t.denom().clone()))
}

/// The angle q mod 1.
fn angle_of(q: &Q) -> RationalAngle {
    let den = q.denom().clone();
    let mut num = q.numer() % &den;
    if num.is_negative() {
        num += &den;
    }
    RationalAngle::new(num.to_biguint().expect("non-negative"), den.to_biguint().expect("positive"))
}

fn q_to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Finite union of closed arcs of R/Z with rational endpoints, stored as
/// disjoint closed subintervals of [0, 1] of positive length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcSet {
    iv: Vec<(Q, Q)>,
}

impl ArcSet {
    pub fn empty() -> Self {
        ArcSet { iv: Vec::new() }
    }

    pub fn full() -> Self {
        ArcSet { iv: vec![(Q::zero(), Q::one())] }
    }

    /// Closed counter-clockwise arc from `a` to `b`; `a == b` is the full circle.
    pub fn arc(a: &RationalAngle, b: &RationalAngle) -> Self {
        let (x, y) = (q_of(a), q_of(b));
        if x == y {
            return Self::full();
        }
        if x < y {
            ArcSet { iv: vec![(x, y)] }
        } else {
            Self::normalized(vec![(Q::zero(), y), (x, Q::one())])
        }
    }

    fn normalized(mut v: Vec<(Q, Q)>) -> Self {
        v.retain(|(a, b)| a < b);
        v.sort();
        let mut out: Vec<(Q, Q)> = Vec::new();
        for (a, b) in v {
            if let Some(last) = out.last_mut() {
                if a <= last.1 {
                    if b > last.1 {
                        last.1 = b;
                    }
                    continue;
                }
            }
            out.push((a, b));
        }
        ArcSet { iv: out }
    }

    pub fn is_empty(&self) -> bool {
        self.iv.is_empty()
    }

    pub fn length(&self) -> Q {
        self.iv.iter().fold(Q::zero(), |acc, (a, b)| acc + (b - a))
    }

    pub fn intersect(&self, o: &ArcSet) -> ArcSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.iv.len() && j < o.iv.len() {
            let lo = std::cmp::max(&self.iv[i].0, &o.iv[j].0).clone();
            let hi = std::cmp::min(&self.iv[i].1, &o.iv[j].1).clone();
            if lo < hi {
                out.push((lo, hi));
            }
            if self.iv[i].1 < o.iv[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        ArcSet { iv: out }
    }

    pub fn union(&self, o: &ArcSet) -> ArcSet {
        Self::normalized(self.iv.iter().chain(o.iv.iter()).cloned().collect())
    }

    /// m_d⁻¹ of the set.
    pub fn preimage(&self, d: u64) -> ArcSet {
        let dq = Q::from_integer(BigInt::from(d));
        let mut v = Vec::new();
        for j in 0..d {
            let jq = Q::from_integer(BigInt::from(j));
            for (a, b) in &self.iv {
                v.push(((a + &jq) / &dq, (b + &jq) / &dq));
            }
        }
        Self::normalized(v)
    }

    /// Rotation t ↦ t − by (mod 1).
    pub fn rotate_back(&self, by: &RationalAngle) -> ArcSet {
        let s = q_of(by);
        let one = Q::one();
        let mut v = Vec::new();
        for (a, b) in &self.iv {
            let (x, y) = (a - &s, b - &s);
            if y <= Q::zero() {
                v.push((x + &one, y + &one));
            } else if x >= Q::zero() {
                v.push((x, y));
            } else {
                v.push((x + &one, one.clone()));
                v.push((Q::zero(), y));
            }
        }
        Self::normalized(v)
    }

    /// Maximal arcs as (start, end) angles, counter-clockwise; the full circle
    /// is the single arc (0, 0).
    pub fn arcs(&self) -> Vec<(RationalAngle, RationalAngle)> {
        let n = self.iv.len();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 && self.iv[0].0.is_zero() && self.iv[0].1 == Q::one() {
            return vec![(RationalAngle::zero(), RationalAngle::zero())];
        }
        let wrap = n >= 2 && self.iv[0].0.is_zero() && self.iv[n - 1].1 == Q::one();
        let mut out = Vec::new();
        let range = if wrap { 1..n - 1 } else { 0..n };
        for k in range {
            out.push((angle_of(&self.iv[k].0), angle_of(&self.iv[k].1)));
        }
        if wrap {
            out.push((angle_of(&self.iv[n - 1].0), angle_of(&self.iv[0].1)));
        }
        out
    }

    pub fn has_endpoint(&self, t: &RationalAngle) -> bool {
        self.arcs().iter().any(|(a, b)| a == t || b == t)
    }

    /// Intervals in [0, 1] (for offsets after `rotate_back`).
    pub fn intervals(&self) -> &[(BigRational, BigRational)] {
        &self.iv
    }
}

/// Finite forward-invariant set of repelling (pre)periodic points, each with
/// at least two landing rays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub points: Vec<Complex64>,
    pub ray_classes: Vec<Vec<RationalAngle>>,
    pub forward_map: Vec<usize>,
    /// Multiplier of the cycle each point eventually falls on.
    pub cycle_multipliers: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct AdmissibleConfig {
    pub ray: RayConfig,
    pub colanding_tol: f64,
    pub max_points: usize,
}

impl Default for AdmissibleConfig {
    fn default() -> Self {
        AdmissibleConfig { ray: RayConfig::default(), colanding_tol: 1e-6, max_points: 256 }
    }
}

pub fn make_admissible(f0: &MonicPolynomial, classes: &[Vec<RationalAngle>]) -> Result<AdmissibleSet> {
    make_admissible_with(f0, classes, &AdmissibleConfig::default())
}

pub fn make_admissible_with(f0: &MonicPolynomial, classes: &[Vec<RationalAngle>], cfg: &AdmissibleConfig) -> Result<AdmissibleSet> {
    let d = f0.degree() as u64;
    let mut points: Vec<Complex64> = Vec::new();
    let mut rays: Vec<Vec<RationalAngle>> = Vec::new();
    let add = |cls: &[RationalAngle], points: &mut Vec<Complex64>, rays: &mut Vec<Vec<RationalAngle>>| -> Result<usize> {
        if cls.is_empty() {
            return Err(Error::NotAdmissible("empty angle class".into()));
        }
        let landed: Vec<Complex64> = cls
            .iter()
            .map(|t| land_ray_with(f0, t, &cfg.ray).map_err(|e| Error::NotAdmissible(format!("ray {t} does not land: {e}"))))
            .collect::<Result<_>>()?;
        let p = landed[0];
        if let Some((k, q)) = landed.iter().enumerate().find(|(_, q)| (*q - p).norm() > cfg.colanding_tol) {
            return Err(Error::NotAdmissible(format!(
                "rays {} and {} land at distinct points ({:.3e} apart)",
                cls[0],
                cls[k],
                (q - p).norm()
            )));
        }
        if let Some(i) = points.iter().position(|q| (q - p).norm() <= cfg.colanding_tol) {
            let mut merged = rays[i].clone();
            merged.extend(cls.iter().cloned());
            merged.sort();
            merged.dedup();
            rays[i] = merged;
            return Ok(i);
        }
        if points.len() >= cfg.max_points {
            return Err(Error::BudgetExceeded("admissible set grew past max_points".into()));
        }
        points.push(p);
        let mut c = cls.to_vec();
        c.sort();
        c.dedup();
        rays.push(c);
        Ok(points.len() - 1)
    };
    for c in classes {
        add(c, &mut points, &mut rays)?;
    }
    // forward closure; repeat until the classes stop growing through merges
    let mut forward: Vec<usize>;
    loop {
        let before: Vec<usize> = rays.iter().map(|r| r.len()).collect();
        forward = Vec::new();
        let mut i = 0;
        while i < points.len() {
            let mut img: Vec<RationalAngle> = rays[i].iter().map(|t| t.mul(d)).collect();
            img.sort();
            img.dedup();
            let j = add(&img, &mut points, &mut rays)?;
            forward.push(j);
            i += 1;
        }
        let after: Vec<usize> = rays.iter().map(|r| r.len()).collect();
        if before == after[..before.len()] && before.len() == after.len() {
            break;
        }
    }
    for (i, r) in rays.iter().enumerate() {
        if r.len() < 2 {
            return Err(Error::NotAdmissible(format!("point {} has the single ray {}", points[i], r[0])));
        }
        if (f0.eval(points[i]) - points[forward[i]]).norm() > 1e3 * cfg.colanding_tol {
            return Err(Error::NotAdmissible(format!("f does not map point {i} onto its recorded image")));
        }
    }
    let mut mults = Vec::new();
    for i in 0..points.len() {
        let mut seen = vec![usize::MAX; points.len()];
        let mut k = i;
        let mut step = 0;
        while seen[k] == usize::MAX {
            seen[k] = step;
            k = forward[k];
            step += 1;
        }
        // k is the first repeated index: it lies on the cycle
        let start = k;
        let mut lambda = Complex64::new(1.0, 0.0);
        loop {
            lambda *= f0.derivative_at(points[k]);
            k = forward[k];
            if k == start {
                break;
            }
        }
        if lambda.norm() <= 1.0 + 1e-9 {
            return Err(Error::NotAdmissible(format!("point {} is not repelling (|λ| = {})", points[i], lambda.norm())));
        }
        mults.push(lambda);
    }
    Ok(AdmissibleSet { points, ray_classes: rays, forward_map: forward, cycle_multipliers: mults })
}

/// Depth-0 region id: the sector index at each point of Z.
pub type Region = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzlePiece {
    pub depth: usize,
    pub itinerary: Vec<Region>,
    /// Maximal closed arcs of angles whose rays meet the piece.
    pub boundary_angles: Vec<(RationalAngle, RationalAngle)>,
}

#[derive(Debug, Clone)]
pub struct PuzzleConfig {
    /// Equipotential bounding the depth-0 puzzle.
    pub l0: f64,
    pub ray: RayConfig,
    pub arc_samples_per_turn: usize,
    pub boundary_tol: f64,
    /// Equipotential samples per boundary arc when realizing pieces.
    pub min_arc_samples: usize,
}

impl Default for PuzzleConfig {
    fn default() -> Self {
        PuzzleConfig {
            l0: 1.0,
            ray: RayConfig { store_all: true, ..RayConfig::default() },
            arc_samples_per_turn: 512,
            boundary_tol: 1e-10,
            min_arc_samples: 16,
        }
    }
}

#[derive(Debug, Clone)]
struct RayPoly {
    /// (potential, point) from the top of the computed part downward.
    samples: Vec<(f64, Complex64)>,
    landing: Complex64,
}

impl RayPoly {
    /// The ray below `level`, ending at its landing point.
    fn below(&self, level: f64) -> impl Iterator<Item = Complex64> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.0 <= level * (1.0 + 1e-12))
            .map(|s| s.1)
            .chain(std::iter::once(self.landing))
    }
}

fn newton_preimage(f: &MonicPolynomial, z0: Complex64, w: Complex64) -> Option<Complex64> {
    let mut z = z0;
    for _ in 0..50 {
        let (v, dv) = f.eval_d(z);
        let step = (v - w) / dv;
        if !step.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    ((f.eval(z) - w).norm() <= 1e-12 * w.norm().max(1.0)).then_some(z)
}

/// Preimage of the segment [w0, w1] continued from z (f(z) = w0), halving
/// the segment whenever Newton jumps further than the linearization predicts.
fn lift_segment(f: &MonicPolynomial, z: Complex64, w0: Complex64, w1: Complex64, depth: usize) -> Option<Complex64> {
    let expect = (w1 - w0).norm() / f.derivative_at(z).norm();
    if let Some(zn) = newton_preimage(f, z, w1) {
        if (zn - z).norm() <= 2.0 * expect + 1e-13 * z.norm().max(1.0) {
            return Some(zn);
        }
    }
    if depth >= 40 {
        return None;
    }
    let mid = (w0 + w1) * 0.5;
    let zm = lift_segment(f, z, w0, mid, depth + 1)?;
    lift_segment(f, zm, mid, w1, depth + 1)
}

fn lift_path(f: &MonicPolynomial, z0: Complex64, w: &[Complex64]) -> Option<Vec<Complex64>> {
    let mut z = newton_preimage(f, z0, w[0])?;
    let mut out = Vec::with_capacity(w.len());
    out.push(z);
    for k in 1..w.len() {
        z = lift_segment(f, z, w[k - 1], w[k], 0)?;
        out.push(z);
    }
    Some(out)
}

#[derive(Debug, Clone)]
struct Curve {
    pts: Vec<Complex64>,
    bbox: (f64, f64, f64, f64),
}

impl Curve {
    fn new(pts: Vec<Complex64>) -> Self {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            b.0 = b.0.min(p.re);
            b.1 = b.1.max(p.re);
            b.2 = b.2.min(p.im);
            b.3 = b.3.max(p.im);
        }
        Curve { pts, bbox: b }
    }

    /// Even-odd test for the closed polyline.
    fn contains(&self, z: Complex64) -> bool {
        let b = self.bbox;
        if z.re < b.0 || z.re > b.1 || z.im < b.2 || z.im > b.3 {
            return false;
        }
        let n = self.pts.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, c) = (self.pts[i], self.pts[j]);
            if (a.im > z.im) != (c.im > z.im) && z.re < (c.re - a.re) * (z.im - a.im) / (c.im - a.im) + a.re {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

fn seg_dist(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let t = if ab.norm_sqr() == 0.0 { 0.0 } else { (((p - a) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

type PieceKey = (usize, Vec<(RationalAngle, RationalAngle)>);

/// The Z-puzzle of an admissible set: Γ₀ is made of the rays of Z down to
/// their landing points and the equipotential at l0; Γ_n = f⁻ⁿ(Γ₀).
pub struct Puzzle {
    pub f: MonicPolynomial,
    pub z: AdmissibleSet,
    pub cfg: PuzzleConfig,
    angles: Vec<Vec<RationalAngle>>,
    z_angles: std::collections::HashSet<RationalAngle>,
    sectors: Vec<Vec<Curve>>,
    ray_cache: Mutex<HashMap<RationalAngle, Arc<RayPoly>>>,
    curve_cache: Mutex<HashMap<PieceKey, Arc<Curve>>>,
    n0_cache: OnceLock<Result<usize>>,
}

impl Puzzle {
    pub fn new(f: &MonicPolynomial, z: &AdmissibleSet, cfg: PuzzleConfig) -> Result<Self> {
        if z.points.is_empty() {
            return Err(Error::Precondition("empty admissible set".into()));
        }
        if f.coeffs().iter().all(|a| a.norm() == 0.0) {
            return Err(Error::Precondition("f = z^d has no admissible set".into()));
        }
        let puzzle = Puzzle {
            f: f.clone(),
            z: z.clone(),
            angles: z.ray_classes.clone(),
            z_angles: z.ray_classes.iter().flatten().cloned().collect(),
            sectors: Vec::new(),
            cfg,
            ray_cache: Mutex::new(HashMap::new()),
            curve_cache: Mutex::new(HashMap::new()),
            n0_cache: OnceLock::new(),
        };
        let mut sectors = Vec::new();
        for (i, cls) in puzzle.angles.iter().enumerate() {
            let m = cls.len();
            let mut per = Vec::new();
            for k in 0..m {
                let (a, b) = (&cls[k], &cls[(k + 1) % m]);
                let ra = puzzle.ray(a)?;
                let rb = puzzle.ray(b)?;
                let mut pts = vec![z.points[i]];
                pts.extend(ra.samples.iter().rev().map(|s| s.1));
                let len = q_to_f64(&ArcSet::arc(a, b).length());
                let n_arc = ((len * puzzle.cfg.arc_samples_per_turn as f64).ceil() as usize).max(8);
                let a0 = a.to_f64();
                for s in 1..n_arc {
                    let th = a0 + len * s as f64 / n_arc as f64;
                    let p = ray_point(f, th, puzzle.cfg.l0, &puzzle.cfg.ray)
                        .ok_or_else(|| Error::Inconclusive(format!("equipotential point at angle {th} failed")))?;
                    pts.push(p);
                }
                pts.extend(rb.samples.iter().map(|s| s.1));
                per.push(Curve::new(pts));
            }
            sectors.push(per);
        }
        Ok(Puzzle { sectors, ..puzzle })
    }

    pub fn degree(&self) -> u64 {
        self.f.degree() as u64
    }

    pub fn angle_classes(&self) -> &[Vec<RationalAngle>] {
        &self.angles
    }

    fn cached_ray(&self, t: &RationalAngle) -> Option<Arc<RayPoly>> {
        self.ray_cache.lock().expect("ray cache").get(t).cloned()
    }

    /// Ray of an angle that eventually maps into the Z angles. Z rays are
    /// traced; their preimages are lifted through f along the image ray,
    /// which also carries the landing point along.
    fn ray(&self, t: &RationalAngle) -> Result<Arc<RayPoly>> {
        if let Some(r) = self.cached_ray(t) {
            return Ok(r);
        }
        let d = self.degree();
        let mut chain = vec![t.clone()];
        loop {
            let last = chain.last().expect("non-empty");
            if self.z_angles.contains(last) || self.cached_ray(last).is_some() {
                break;
            }
            if chain.len() > 256 {
                return Err(Error::InvalidInput(format!("angle {t} is not a preimage of a Z angle")));
            }
            let next = last.mul(d);
            chain.push(next);
        }
        let mut parent: Option<Arc<RayPoly>> = None;
        for a in chain.iter().rev() {
            let rp = if let Some(r) = self.cached_ray(a) {
                r
            } else if let Some(par) = &parent {
                let top = par.samples[0].0 / d as f64;
                let z0 = ray_point(&self.f, a.to_f64(), top, &self.cfg.ray)
                    .ok_or_else(|| Error::Inconclusive(format!("ray {a} failed at potential {top:e}")))?;
                let path: Vec<Complex64> = par.samples.iter().map(|s| s.1).chain(std::iter::once(par.landing)).collect();
                let lifted = lift_path(&self.f, z0, &path).ok_or_else(|| Error::Inconclusive(format!("ray {a} could not be lifted")))?;
                let landing = *lifted.last().expect("non-empty");
                let samples = par.samples.iter().zip(&lifted).map(|(s, z)| (s.0 / d as f64, *z)).collect();
                Arc::new(RayPoly { samples, landing })
            } else {
                let cfg = RayConfig { l0: self.cfg.l0, ..self.cfg.ray.clone() };
                let ray = trace_ray_with(&self.f, a, &cfg)?;
                if let Some(level) = ray.failed_at {
                    return Err(Error::NewtonDivergence { level });
                }
                let landing = land_ray_with(&self.f, a, &RayConfig { store_all: false, ..cfg })?;
                Arc::new(RayPoly { samples: ray.samples, landing })
            };
            self.ray_cache.lock().expect("ray cache").insert(a.clone(), rp.clone());
            parent = Some(rp);
        }
        Ok(parent.expect("chain non-empty"))
    }

    /// Landing point of a ray in the backward orbit of the Z angles.
    pub fn landing_point(&self, t: &RationalAngle) -> Result<Complex64> {
        Ok(self.ray(t)?.landing)
    }

    /// Sector index at each Z point, for a point with G(z) < l0.
    fn region_unchecked(&self, z: Complex64) -> Result<Region> {
        let mut out = Vec::with_capacity(self.sectors.len());
        for (i, per) in self.sectors.iter().enumerate() {
            let hits: Vec<usize> = (0..per.len()).filter(|&k| per[k].contains(z)).collect();
            if hits.len() != 1 {
                let dist = self.angles[i]
                    .iter()
                    .filter_map(|t| self.ray(t).ok())
                    .map(|r| {
                        let mut pts: Vec<Complex64> = r.samples.iter().map(|s| s.1).collect();
                        pts.push(r.landing);
                        pts.windows(2).map(|w| seg_dist(z, w[0], w[1])).fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::INFINITY, f64::min);
                return Err(Error::OnBoundary { distance: dist });
            }
            out.push(hits[0]);
        }
        Ok(out)
    }

    pub fn region_of_point(&self, z: Complex64) -> Result<Region> {
        let g = green(&self.f, z);
        if g >= self.cfg.l0 {
            return Err(Error::Precondition(format!("point outside the depth-0 equipotential (G = {g})")));
        }
        if self.cfg.l0 - g < self.cfg.boundary_tol {
            return Err(Error::OnBoundary { distance: self.cfg.l0 - g });
        }
        self.region_unchecked(z)
    }

    /// Region containing the germ of the sector just counter-clockwise of ray t.
    pub fn region_of_angle_plus(&self, t: &RationalAngle) -> Region {
        self.angles
            .iter()
            .map(|cls| match cls.iter().rposition(|a| a <= t) {
                Some(k) => k,
                None => cls.len() - 1,
            })
            .collect()
    }

    pub fn region_arcs(&self, r: &Region) -> ArcSet {
        let mut a = ArcSet::full();
        for (i, &k) in r.iter().enumerate() {
            let cls = &self.angles[i];
            a = a.intersect(&ArcSet::arc(&cls[k], &cls[(k + 1) % cls.len()]));
        }
        a
    }

    /// Depth-n itinerary: depth-0 regions of z, f(z), …, fⁿ(z).
    pub fn itinerary(&self, z: Complex64, n: usize) -> Result<Vec<Region>> {
        let g = green(&self.f, z);
        let cap = self.cfg.l0 / (self.f.degree() as f64).powi(n as i32);
        if g >= cap {
            return Err(Error::Precondition(format!("G(z) = {g:e} is not below l0/d^n = {cap:e}")));
        }
        let mut out = Vec::with_capacity(n + 1);
        let mut w = z;
        for _ in 0..=n {
            out.push(self.region_unchecked(w)?);
            w = self.f.eval(w);
        }
        Ok(out)
    }

    /// Exact arc set of all depth-n pieces with the given itinerary, by
    /// pull-back A_k = A_0(i_k) ∩ m_d⁻¹(A_{k+1}).
    pub fn arcs_of_itinerary(&self, itin: &[Region]) -> ArcSet {
        let d = self.degree();
        let mut a = self.region_arcs(&itin[itin.len() - 1]);
        for r in itin[..itin.len() - 1].iter().rev() {
            a = self.region_arcs(r).intersect(&a.preimage(d));
        }
        a
    }

    /// Splits an itinerary arc set into the arc sets of individual pieces.
    /// Going around a piece, the end ray of one boundary arc and the start ray
    /// of the next land together, and the next start is the first co-landing
    /// angle met clockwise from that end.
    fn split_pieces(&self, a: &ArcSet) -> Result<Vec<ArcSet>> {
        let arcs = a.arcs();
        if arcs.len() <= 1 {
            return Ok(vec![a.clone()]);
        }
        let starts: Vec<Complex64> = arcs.iter().map(|(x, _)| self.landing_point(x)).collect::<Result<_>>()?;
        let ends: Vec<Complex64> = arcs.iter().map(|(_, y)| self.landing_point(y)).collect::<Result<_>>()?;
        let tol = 1e-7;
        let mut used = vec![false; arcs.len()];
        let mut out = Vec::new();
        for i0 in 0..arcs.len() {
            if used[i0] {
                continue;
            }
            let mut set = ArcSet::empty();
            let mut i = i0;
            loop {
                used[i] = true;
                set = set.union(&ArcSet::arc(&arcs[i].0, &arcs[i].1));
                let y = &arcs[i].1;
                let next = (0..arcs.len())
                    .filter(|&k| (starts[k] - ends[i]).norm() <= tol)
                    .min_by(|&p, &q| y.sub(&arcs[p].0).cmp(&y.sub(&arcs[q].0)))
                    .ok_or_else(|| Error::Inconclusive(format!("boundary ray {y} has no co-landing successor")))?;
                if next == i0 {
                    break;
                }
                if used[next] {
                    return Err(Error::InvariantViolation("piece boundary arcs do not close up".into()));
                }
                i = next;
            }
            out.push(set);
        }
        Ok(out)
    }

    /// All depth-n pieces carrying the given itinerary.
    pub fn pieces_of_itinerary(&self, itin: &[Region]) -> Result<Vec<PuzzlePiece>> {
        let union = self.arcs_of_itinerary(itin);
        if union.is_empty() {
            return Err(Error::Inconclusive("itinerary has an empty arc set".into()));
        }
        Ok(self
            .split_pieces(&union)?
            .into_iter()
            .map(|s| PuzzlePiece { depth: itin.len() - 1, itinerary: itin.to_vec(), boundary_angles: s.arcs() })
            .collect())
    }

    /// Closed boundary polygon of a piece: for each boundary arc, its start
    /// ray up from the landing point, the equipotential at l0/dⁿ, and its end
    /// ray back down.
    fn piece_curve(&self, piece: &PuzzlePiece) -> Result<Arc<Curve>> {
        let key = (piece.depth, piece.boundary_angles.clone());
        if let Some(c) = self.curve_cache.lock().expect("curve cache").get(&key) {
            return Ok(c.clone());
        }
        let level = self.cfg.l0 / (self.f.degree() as f64).powi(piece.depth as i32);
        let mut pts = Vec::new();
        for (a, b) in &piece.boundary_angles {
            let full = a == b;
            let len = if full { 1.0 } else { q_to_f64(&ArcSet::arc(a, b).length()) };
            if !full {
                let mut up: Vec<Complex64> = self.ray(a)?.below(level).collect();
                up.reverse();
                pts.extend(up);
            }
            let n_arc = ((len * self.cfg.arc_samples_per_turn as f64).ceil() as usize).max(self.cfg.min_arc_samples);
            let a0 = a.to_f64();
            let arc: Vec<Option<Complex64>> = (0..=n_arc)
                .into_par_iter()
                .map(|s| ray_point(&self.f, a0 + len * s as f64 / n_arc as f64, level, &self.cfg.ray))
                .collect();
            for p in arc {
                pts.push(p.ok_or_else(|| Error::Inconclusive("equipotential sample failed".into()))?);
            }
            if !full {
                pts.extend(self.ray(b)?.below(level));
            }
        }
        let c = Arc::new(Curve::new(pts));
        self.curve_cache.lock().expect("curve cache").insert(key, c.clone());
        Ok(c)
    }

    /// Whether z lies in the piece (z must have the piece's itinerary for the
    /// answer to be meaningful).
    pub fn piece_contains(&self, piece: &PuzzlePiece, z: Complex64) -> Result<bool> {
        Ok(self.piece_curve(piece)?.contains(z))
    }

    /// The piece among same-itinerary candidates that contains z.
    fn select_piece(&self, mut cands: Vec<PuzzlePiece>, z: Complex64) -> Result<PuzzlePiece> {
        if cands.len() == 1 {
            return Ok(cands.pop().expect("one"));
        }
        let mut hit = None;
        for c in cands {
            if self.piece_contains(&c, z)? {
                if hit.is_some() {
                    return Err(Error::Inconclusive("point inside two piece realizations".into()));
                }
                hit = Some(c);
            }
        }
        hit.ok_or(Error::OnBoundary { distance: f64::NAN })
    }

    pub fn piece_of(&self, z: Complex64, depth: usize) -> Result<PuzzlePiece> {
        let itin = self.itinerary(z, depth)?;
        let cands = self.pieces_of_itinerary(&itin)?;
        self.select_piece(cands, z)
    }

    /// Whether z (with its depth-n regions `z_itin`) lies in the piece.
    fn in_piece(&self, piece: &PuzzlePiece, z_itin: &[Region], z: Complex64) -> Result<bool> {
        if z_itin != piece.itinerary.as_slice() {
            return Ok(false);
        }
        if self.pieces_of_itinerary(&piece.itinerary)?.len() == 1 {
            return Ok(true);
        }
        self.piece_contains(piece, z)
    }

    /// Whether z lies in the piece, deciding by itinerary and then by the realized boundary.
    pub fn contains_point(&self, piece: &PuzzlePiece, z: Complex64) -> Result<bool> {
        let itin = self.itinerary(z, piece.depth)?;
        self.in_piece(piece, &itin, z)
    }

    pub fn piece_arcset(&self, p: &PuzzlePiece) -> ArcSet {
        p.boundary_angles.iter().fold(ArcSet::empty(), |acc, (a, b)| acc.union(&ArcSet::arc(a, b)))
    }

    /// Sectors S_j of the puzzle: (Z point, sector index, θ⁻, θ⁺).
    pub fn sectors(&self) -> Vec<(usize, usize, RationalAngle, RationalAngle)> {
        let mut out = Vec::new();
        for (i, cls) in self.angles.iter().enumerate() {
            for k in 0..cls.len() {
                out.push((i, k, cls[k].clone(), cls[(k + 1) % cls.len()].clone()));
            }
        }
        out
    }

    /// The depth-n piece Y_n^j attached to Z point i inside its sector k.
    pub fn piece_at_sector(&self, i: usize, k: usize, n: usize) -> Result<PuzzlePiece> {
        let a = &self.angles[i][k];
        let d = self.degree();
        let itin: Vec<Region> = (0..=n).map(|j| self.region_of_angle_plus(&a.mul_pow(d, j as u32))).collect();
        self.pieces_of_itinerary(&itin)?
            .into_iter()
            .find(|p| p.boundary_angles.iter().any(|(x, _)| x == a))
            .ok_or_else(|| Error::InvariantViolation(format!("no piece starts at the Z ray {a}")))
    }

    /// All depth-n pieces whose closure meets Z.
    pub fn pieces_touching_z(&self, n: usize) -> Result<Vec<PuzzlePiece>> {
        self.sectors().iter().map(|(i, k, _, _)| self.piece_at_sector(*i, *k, n)).collect()
    }

    /// Sampled boundary of the piece.
    pub fn piece_boundary(&self, piece: &PuzzlePiece) -> Result<Vec<Complex64>> {
        Ok(self.piece_curve(piece)?.pts.clone())
    }

    pub fn piece_diameter(&self, piece: &PuzzlePiece) -> Result<f64> {
        Ok(diameter(&self.piece_curve(piece)?.pts))
    }

    /// Postcritical points (forward orbits of the critical points).
    fn postcritical(&self) -> Result<Vec<Complex64>> {
        let mut out: Vec<Complex64> = Vec::new();
        for (c, _) in critical_points(&self.f)? {
            let mut w = self.f.eval(c);
            for _ in 0..256 {
                if out.iter().any(|p| (p - w).norm() < 1e-9) {
                    break;
                }
                out.push(w);
                w = self.f.eval(w);
            }
        }
        Ok(out)
    }

    /// Smallest depth n₀ at which every piece Y_n^j touching Z meets the
    /// Julia set away from Z, i.e. has at least two boundary arcs.
    pub fn n0(&self) -> Result<usize> {
        self.n0_cache.get_or_init(|| self.first_depth(16, false)).clone()
    }

    /// Smallest depth at which additionally every Y_n^j avoids the
    /// postcritical set.
    pub fn postcritical_free_depth(&self) -> Result<usize> {
        self.first_depth(16, true)
    }

    fn first_depth(&self, max_depth: usize, avoid_postcritical: bool) -> Result<usize> {
        let post = if avoid_postcritical { self.postcritical()? } else { Vec::new() };
        'depth: for n in 0..=max_depth {
            let post_itins: Vec<Vec<Region>> = post.iter().map(|&p| self.itinerary(p, n)).collect::<Result<_>>()?;
            for piece in self.pieces_touching_z(n)? {
                if piece.boundary_angles.len() < 2 {
                    continue 'depth;
                }
                for (p, it) in post.iter().zip(&post_itins) {
                    if self.in_piece(&piece, it, *p)? {
                        continue 'depth;
                    }
                }
            }
            return Ok(n);
        }
        Err(Error::BudgetExceeded(format!("no admissible depth up to {max_depth}")))
    }
}

/// Diameter of a point cloud: exact for small clouds, otherwise the width over
/// 256 directions (relative error below 2e-5).
pub fn diameter(pts: &[Complex64]) -> f64 {
    if pts.len() <= 2000 {
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max((pts[i] - pts[j]).norm());
            }
        }
        return best;
    }
    (0..256)
        .map(|k| {
            let u = Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / 256.0);
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let x = p.re * u.re + p.im * u.im;
                (lo.min(x), hi.max(x))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestLevel {
    pub depth: usize,
    pub itinerary: Vec<Region>,
    /// First s ≥ 1 with f^s(c) in Y_n(c), if s ≤ n.
    pub return_time: Option<usize>,
    /// deg(f^s | Y_n(c)) from the critical points inside the pieces along the orbit.
    pub degree: Option<usize>,
    pub diameter: f64,
    /// Return time equals the Fatou period of c and the degree equals deg(f^q|U(c)).
    pub nest_ok: bool,
}

/// Critical puzzle pieces Y_n(c), n = 0..=max_depth, with return data.
pub fn critical_nest(p: &Puzzle, c: Complex64, max_depth: usize) -> Result<Vec<NestLevel>> {
    let f = &p.f;
    let crits = critical_points(f)?;
    let (q, deg_u) = fatou_return(f, c, &crits)?;
    let mut orbit = vec![c];
    for _ in 0..(max_depth + q + 1) {
        let w = f.eval(*orbit.last().expect("non-empty"));
        orbit.push(w);
    }
    let regions: Vec<Region> = orbit.iter().map(|&w| p.region_of_point(w)).collect::<Result<_>>()?;
    let crit_regions: Vec<Vec<Region>> = crits
        .iter()
        .map(|&(cc, _)| {
            let mut w = cc;
            (0..=max_depth)
                .map(|_| {
                    let r = p.region_of_point(w);
                    w = f.eval(w);
                    r
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for n in 0..=max_depth {
        let itin: Vec<Region> = regions[..=n].to_vec();
        let piece = p.select_piece(p.pieces_of_itinerary(&itin)?, c)?;
        // f^q(c) = c, so the first return happens by time q
        let mut s = None;
        for k in 1..=q {
            if p.in_piece(&piece, &regions[k..=k + n], orbit[k])? {
                s = Some(k);
                break;
            }
        }
        let degree = match s {
            Some(s) if s <= n + 1 => {
                let mut deg = 1;
                for k in 0..s {
                    let yk = p.select_piece(p.pieces_of_itinerary(&regions[k..=n])?, orbit[k])?;
                    let mut local = 1;
                    for ((cc, m), cr) in crits.iter().zip(&crit_regions) {
                        if p.in_piece(&yk, &cr[..=n - k], *cc)? {
                            local += m;
                        }
                    }
                    deg *= local;
                }
                Some(deg)
            }
            _ => None,
        };
        let diameter = p.piece_diameter(&piece)?;
        out.push(NestLevel { depth: n, itinerary: itin, return_time: s, degree, diameter, nest_ok: s == Some(q) && degree == Some(deg_u) });
    }
    Ok(out)
}

/// Fatou period q of the critical point c and deg(f^q | U(c)).
fn fatou_return(f: &MonicPolynomial, c: Complex64, crits: &[(Complex64, usize)]) -> Result<(usize, usize)> {
    let mut w = c;
    let mut deg = 1;
    for k in 1..=4096 {
        if let Some((_, m)) = crits.iter().find(|(cc, _)| (cc - w).norm() < 1e-9) {
            deg *= m + 1;
        }
        w = f.eval(w);
        if (w - c).norm() < 1e-9 {
            return Ok((k, deg));
        }
    }
    Err(Error::Precondition("critical point is not periodic".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuriedPoint {
    pub point: Complex64,
    pub angles: Vec<RationalAngle>,
    pub period: usize,
}

#[derive(Debug, Clone)]
pub struct BuriedConfig {
    pub ray: RayConfig,
    pub colanding_tol: f64,
    /// Boundary push relative to the point/centre distance; a second pass
    /// uses 1/100 of it.
    pub eps_rel: f64,
}

impl Default for BuriedConfig {
    fn default() -> Self {
        BuriedConfig { ray: RayConfig::default(), colanding_tol: 1e-6, eps_rel: 1e-3 }
    }
}

fn primitive_pcf_precondition(f0: &MonicPolynomial) -> Result<FatouData> {
    if f0.coeffs().iter().all(|a| a.norm() == 0.0) {
        return Err(Error::Precondition("f0 = z^d".into()));
    }
    let class = classify(f0, &ClassifyBudget::default())?;
    if !(class.is_pcf && class.is_hyperbolic) {
        return Err(Error::Precondition("f0 must be postcritically finite and hyperbolic".into()));
    }
    if !class.is_primitive_heuristic {
        return Err(Error::Precondition("f0 is not primitive (heuristic)".into()));
    }
    FatouData::from_polynomial(f0)
}

/// Whether p is on the boundary of some periodic Fatou component.
fn on_some_periodic_boundary(fatou: &FatouData, p: Complex64, eps_rel: f64) -> bool {
    fatou.components().into_iter().any(|(k, j)| {
        let dist = (fatou.cycles[k][j] - p).norm();
        fatou.on_component_boundary(p, k, j, eps_rel * dist)
    })
}

/// First co-landing periodic class (by period, then smallest angle) whose
/// landing orbit avoids every periodic Fatou component boundary.
pub fn find_buried_biaccessible(f0: &MonicPolynomial, period_budget: usize) -> Result<BuriedPoint> {
    find_buried_biaccessible_with(f0, period_budget, &BuriedConfig::default(), None)
}

pub fn find_buried_biaccessible_with(
    f0: &MonicPolynomial,
    period_budget: usize,
    cfg: &BuriedConfig,
    accept: Option<&(dyn Fn(Complex64) -> bool + Sync)>,
) -> Result<BuriedPoint> {
    let fatou = primitive_pcf_precondition(f0)?;
    let d = f0.degree() as u64;
    for p in 1..=period_budget {
        let angles = angles_with_orbit_type(d, 0, p);
        let landed: Vec<(RationalAngle, Complex64)> = angles
            .par_iter()
            .filter_map(|t| land_ray_with(f0, t, &cfg.ray).ok().map(|z| (t.clone(), z)))
            .collect();
        let mut classes = colanding_classes(&landed, cfg.colanding_tol);
        classes.retain(|c| c.1.len() >= 2);
        classes.sort_by(|a, b| a.1[0].cmp(&b.1[0]));
        for (pt, cls) in classes {
            if let Some(acc) = accept {
                if !acc(pt) {
                    continue;
                }
            }
            let mut w = pt;
            let mut buried = true;
            for _ in 0..p {
                if on_some_periodic_boundary(&fatou, w, cfg.eps_rel) || on_some_periodic_boundary(&fatou, w, cfg.eps_rel * 0.01) {
                    buried = false;
                    break;
                }
                w = f0.eval(w);
            }
            if buried {
                return Ok(BuriedPoint { point: pt, angles: cls, period: p });
            }
        }
    }
    Err(Error::NotFound(format!("no buried biaccessible point of period ≤ {period_budget}")))
}

/// Refinement Z′ ⊇ Z adjoining the orbit of a buried biaccessible periodic
/// point lying in the deepest critical piece Y_N(c0).
pub fn refine_admissible(f0: &MonicPolynomial, z: &AdmissibleSet, c0: Complex64, max_depth: usize, period_budget: usize) -> Result<AdmissibleSet> {
    let puzzle = Puzzle::new(f0, z, PuzzleConfig::default())?;
    let nest = critical_nest(&puzzle, c0, max_depth)?;
    let last = nest.last().expect("depth ≥ 0");
    if last.nest_ok {
        return Err(Error::Precondition("critical nest already has the Fatou return data".into()));
    }
    let target = puzzle.select_piece(puzzle.pieces_of_itinerary(&last.itinerary)?, c0)?;
    let inside = |w: Complex64| {
        puzzle
            .itinerary(w, max_depth)
            .and_then(|it| puzzle.in_piece(&target, &it, w))
            .unwrap_or(false)
    };
    let bp = find_buried_biaccessible_with(f0, period_budget, &BuriedConfig::default(), Some(&inside))
        .map_err(|e| Error::RefinementFailed(format!("search inside Y_N(c0): {e}")))?;
    let mut classes = z.ray_classes.clone();
    classes.push(bp.angles.clone());
    let refined = make_admissible(f0, &classes).map_err(|e| Error::RefinementFailed(e.to_string()))?;
    let p2 = Puzzle::new(f0, &refined, PuzzleConfig::default())?;
    let nest2 = critical_nest(&p2, c0, max_depth)?;
    let l2 = nest2.last().expect("depth ≥ 0");
    let improved = l2.nest_ok
        || match (l2.return_time, last.return_time) {
            (Some(a), Some(b)) if a != b => a > b,
            (Some(_), None) => true,
            (Some(_), Some(_)) => matches!((l2.degree, last.degree), (Some(a), Some(b)) if a < b),
            _ => false,
        };
    if !improved {
        return Err(Error::RefinementFailed("adjoined orbit did not improve the critical nest".into()));
    }
    Ok(refined)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(center: Complex64, half: f64, n: usize) -> Self {
        GridSpec { x_min: center.re - half, x_max: center.re + half, y_min: center.im - half, y_max: center.im + half, nx: n, ny: n }
    }

    /// Centre of pixel (ix, iy); row iy = 0 is the top.
    pub fn pixel(&self, ix: usize, iy: usize) -> Complex64 {
        let x = self.x_min + (ix as f64 + 0.5) * (self.x_max - self.x_min) / self.nx as f64;
        let y = self.y_max - (iy as f64 + 0.5) * (self.y_max - self.y_min) / self.ny as f64;
        Complex64::new(x, y)
    }

    pub fn pixel_area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min) / (self.nx * self.ny) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskMeta {
    pub description: String,
    pub orbit_cap: usize,
    /// Pixels whose membership could not be decided (set to 0).
    pub undecided: usize,
    pub under_approximation: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMask {
    pub grid: GridSpec,
    pub bits: Vec<bool>,
    pub meta: MaskMeta,
}

impl GridMask {
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.bits[iy * self.grid.nx + ix]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    /// Binary PGM (P5), 255 for set pixels.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.grid.nx, self.grid.ny)?;
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        w.write_all(&bytes)
    }
}

/// Pixel mask of L_n = {z : f^k(z) ∈ ⋃_c Y_n(c) for some k ≥ 0}.
pub fn first_landing_mask(p: &Puzzle, n: usize, grid: &GridSpec) -> Result<GridMask> {
    let f = &p.f;
    let d = f.degree() as f64;
    let crits = critical_points(f)?;
    let mut crit_curves: Vec<Arc<Curve>> = Vec::new();
    for &(c, _) in &crits {
        let piece = p.piece_of(c, n)?;
        crit_curves.push(p.piece_curve(&piece)?);
    }
    let mut fatou = FatouData::from_polynomial(f)?;
    let cap = 10_000;
    fatou.max_iter = cap;
    let crit_on_cycle: Vec<bool> = fatou
        .cycles
        .iter()
        .map(|cyc| cyc.iter().any(|w| crits.iter().any(|(c, _)| (c - w).norm() < 1e-9)))
        .collect();
    let level = p.cfg.l0 / d.powi(n as i32);
    let rows: Vec<(Vec<bool>, usize)> = (0..grid.ny)
        .into_par_iter()
        .map(|iy| {
            let mut row = Vec::with_capacity(grid.nx);
            let mut undecided = 0;
            for ix in 0..grid.nx {
                let z = grid.pixel(ix, iy);
                let v = match fatou.phase(z) {
                    Phase::Basin { cycle, .. } => crit_on_cycle[cycle],
                    Phase::Unresolved => {
                        undecided += 1;
                        false
                    }
                    Phase::Escapes => {
                        let g = green(f, z);
                        if g >= level || g <= 0.0 {
                            false
                        } else {
                            // iterates stay below the depth-n level while d^k g < l0/dⁿ
                            let mut hit = false;
                            let mut w = z;
                            let mut gk = g;
                            while gk < level {
                                if crit_curves.iter().any(|cv| cv.contains(w)) {
                                    hit = true;
                                    break;
                                }
                                w = f.eval(w);
                                gk *= d;
                            }
                            hit
                        }
                    }
                };
                row.push(v);
            }
            (row, undecided)
        })
        .collect();
    let undecided = rows.iter().map(|r| r.1).sum();
    Ok(GridMask {
        grid: *grid,
        bits: rows.into_iter().flat_map(|r| r.0).collect(),
        meta: MaskMeta { description: format!("first landing domain L_{n}"), orbit_cap: cap, undecided, under_approximation: undecided > 0 },
    })
}

/// Square grid covering the depth-n puzzle (the equipotential at l0/dⁿ).
pub fn puzzle_grid(p: &Puzzle, n: usize, res: usize) -> Result<GridSpec> {
    let level = p.cfg.l0 / (p.f.degree() as f64).powi(n as i32);
    let pts: Vec<Complex64> = (0..256)
        .map(|k| ray_point(&p.f, k as f64 / 256.0, level, &p.cfg.ray).ok_or_else(|| Error::Inconclusive("equipotential failed".into())))
        .collect::<Result<_>>()?;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in &pts {
        x0 = x0.min(q.re);
        x1 = x1.max(q.re);
        y0 = y0.min(q.im);
        y1 = y1.max(q.im);
    }
    let c = Complex64::new((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let half = 0.51 * (x1 - x0).max(y1 - y0);
    Ok(GridSpec::square(c, half, res))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlicePair {
    pub t_minus: RationalAngle,
    pub t_plus: RationalAngle,
    pub alpha_n: Complex64,
    pub theta_minus: RationalAngle,
    pub theta_plus: RationalAngle,
    pub s_minus: RationalAngle,
    pub s_plus: RationalAngle,
    pub n0: usize,
}

/// Extremal boundary angles t_n^± of the piece attached to the Z point of
/// sector j, and their common landing point.
pub fn slice_pairs(p: &Puzzle, j: usize, n: usize) -> Result<SlicePair> {
    let n0 = p.n0()?;
    if n < n0 {
        return Err(Error::Precondition(format!("slice pairs need n ≥ n0 = {n0}")));
    }
    let sectors = p.sectors();
    let (i, k, th_m, th_p) = sectors.get(j).cloned().ok_or_else(|| Error::InvalidInput(format!("no sector {j}")))?;
    let y0 = p.piece_at_sector(i, k, n0)?;
    let a0 = p.piece_arcset(&y0).rotate_back(&th_m);
    let iv0 = a0.intervals();
    if iv0.len() < 2 || !iv0[0].0.is_zero() {
        return Err(Error::InvariantViolation("sector piece has no boundary gap".into()));
    }
    let (s_m, s_p) = (iv0[0].1.clone(), iv0[1].0.clone());
    let yn = p.piece_at_sector(i, k, n)?;
    let an = p.piece_arcset(&yn).rotate_back(&th_m);
    let mut t_m: Option<Q> = None;
    let mut t_p: Option<Q> = None;
    for (lo, hi) in an.intervals() {
        if *lo < s_m && hi.is_positive() {
            let cand = std::cmp::min(hi, &s_m).clone();
            if t_m.as_ref().is_none_or(|x| cand > *x) {
                t_m = Some(cand);
            }
        }
        if *hi > s_p {
            let cand = std::cmp::max(lo, &s_p).clone();
            if t_p.as_ref().is_none_or(|x| cand < *x) {
                t_p = Some(cand);
            }
        }
    }
    let shift = q_of(&th_m);
    let unrot = |x: Q| angle_of(&(x + &shift));
    let t_minus = unrot(t_m.ok_or_else(|| Error::InvariantViolation("no arc below s⁻".into()))?);
    let t_plus = unrot(t_p.ok_or_else(|| Error::InvariantViolation("no arc above s⁺".into()))?);
    let za = land_ray_with(&p.f, &t_minus, &RayConfig::default())?;
    let zb = land_ray_with(&p.f, &t_plus, &RayConfig::default())?;
    if (za - zb).norm() > 1e-6 {
        return Err(Error::InvariantViolation(format!("t⁻ = {t_minus} and t⁺ = {t_plus} do not co-land ({:.2e})", (za - zb).norm())));
    }
    Ok(SlicePair {
        t_minus,
        t_plus,
        alpha_n: (za + zb) / 2.0,
        theta_minus: th_m,
        theta_plus: th_p,
        s_minus: unrot(s_m),
        s_plus: unrot(s_p),
        n0,
    })
}

/// Counter-clockwise distance from `from` to `t`, as a float in [0, 1).
pub fn ccw_offset(from: &RationalAngle, t: &RationalAngle) -> f64 {
    t.sub(from).to_f64()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentStats {
    pub pixels: usize,
    pub area: f64,
    pub diameter: f64,
    pub diam2_over_area: f64,
    /// area(B ∖ D)/area(B) when a landing mask D is supplied.
    pub landing_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub components: Vec<ComponentStats>,
    pub ignored_small_components: usize,
    pub max_diam2_over_area: f64,
    pub min_landing_fraction: Option<f64>,
    /// Smallest M with diam² ≤ M·area and fraction > 1/M on every component.
    pub empirical_m: f64,
}

/// Per-component shape statistics of a mask (4-connectivity).
pub fn distortion_audit(mask: &GridMask, landing: Option<&GridMask>, min_pixels: usize) -> AuditReport {
    let g = &mask.grid;
    let (nx, ny) = (g.nx, g.ny);
    let h = ((g.x_max - g.x_min) / nx as f64).max((g.y_max - g.y_min) / ny as f64);
    let mut label = vec![usize::MAX; nx * ny];
    let mut comps = Vec::new();
    let mut ignored = 0;
    for start in 0..nx * ny {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len() + ignored;
        let mut stack = vec![start];
        label[start] = id;
        let mut members = Vec::new();
        while let Some(k) = stack.pop() {
            members.push(k);
            let (x, y) = (k % nx, k / nx);
            let mut nb = Vec::with_capacity(4);
            if x > 0 {
                nb.push(k - 1);
            }
            if x + 1 < nx {
                nb.push(k + 1);
            }
            if y > 0 {
                nb.push(k - nx);
            }
            if y + 1 < ny {
                nb.push(k + nx);
            }
            for m in nb {
                if mask.bits[m] && label[m] == usize::MAX {
                    label[m] = id;
                    stack.push(m);
                }
            }
        }
        if members.len() < min_pixels {
            ignored += 1;
            continue;
        }
        let pts: Vec<Complex64> = members.iter().map(|&k| g.pixel(k % nx, k / nx)).collect();
        let area = members.len() as f64 * g.pixel_area();
        let diam = diameter(&pts) + h;
        let landing_fraction = landing.map(|l| members.iter().filter(|&&k| !l.bits[k]).count() as f64 / members.len() as f64);
        comps.push(ComponentStats { pixels: members.len(), area, diameter: diam, diam2_over_area: diam * diam / area, landing_fraction });
    }
    let max_ratio = comps.iter().map(|c| c.diam2_over_area).fold(0.0, f64::max);
    let min_frac = landing.map(|_| comps.iter().filter_map(|c| c.landing_fraction).fold(1.0, f64::min));
    let empirical_m = match min_frac {
        Some(fr) if fr > 0.0 => max_ratio.max(1.0 / fr),
        Some(_) => f64::INFINITY,
        None => max_ratio,
    };
    AuditReport { components: comps, ignored_small_components: ignored, max_diam2_over_area: max_ratio, min_landing_fraction: min_frac, empirical_m }
}

/// Whether (x, y) lies in the notched-square set: squares Ī × [−|I|/2, |I|/2]
/// over the intervals I removed in the first `depth` middle-third steps.
pub fn in_notched_square(x: f64, y: f64, depth: usize) -> bool {
    let (mut lo, mut len) = (0.0, 1.0);
    for _ in 0..depth {
        let third = len / 3.0;
        if x >= lo + third && x <= lo + 2.0 * third {
            return y.abs() <= third / 2.0;
        }
        if x > lo + 2.0 * third {
            lo += 2.0 * third;
        }
        len = third;
        if x < lo || x > lo + len {
            return false;
        }
    }
    false
}

/// Notched-square fixture on S = (0,1) × (−1/2, 1/2), rasterized at pixel centres.
pub fn notched_square(depth: usize, res: usize) -> GridMask {
    let grid = GridSpec { x_min: 0.0, x_max: 1.0, y_min: -0.5, y_max: 0.5, nx: res, ny: res };
    let bits = (0..res * res)
        .map(|k| {
            let z = grid.pixel(k % res, k / res);
            in_notched_square(z.re, z.im, depth)
        })
        .collect();
    GridMask {
        grid,
        bits,
        meta: MaskMeta { description: format!("notched square, Cantor depth {depth}"), orbit_cap: 0, undecided: 0, under_approximation: false },
    }
}

/// Σ_{k=1}^{depth} 2^{k−1} 9^{−k}, the exact area of the truncated fixture.
pub fn notched_square_area(depth: usize) -> f64 {
    (1..=depth).map(|k| 2f64.powi(k as i32 - 1) / 9f64.powi(k as i32)).sum()
}

/// Angle orbit data of a Z class, used in reports.
pub fn class_orbit_type(cls: &[RationalAngle], d: u64) -> (usize, usize) {
    let o = angle_orbit(&cls[0], d);
    (o.preperiod, o.period)
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
    fn arcset_basics() {
        let a = ArcSet::arc(&ra(2, 3), &ra(1, 3));
        assert_eq!(a.arcs(), vec![(ra(2, 3), ra(1, 3))]);
        assert_eq!(a.length(), Q::new(2.into(), 3.into()));
        let b = ArcSet::arc(&ra(1, 4), &ra(3, 4));
        let i = a.intersect(&b);
        assert_eq!(i.arcs(), vec![(ra(1, 4), ra(1, 3)), (ra(2, 3), ra(3, 4))]);
        let pre = ArcSet::arc(&ra(1, 3), &ra(2, 3)).preimage(2);
        assert_eq!(pre.arcs(), vec![(ra(1, 6), ra(1, 3)), (ra(2, 3), ra(5, 6))]);
        assert!(ArcSet::arc(&ra(0, 1), &ra(0, 1)).preimage(3) == ArcSet::full());
    }

    #[test]
    fn admissible_examples() {
        let b = fixtures::basilica();
        let z = make_admissible(&b, &[vec![ra(1, 3), ra(2, 3)]]).unwrap();
        assert_eq!(z.points.len(), 1);
        assert!((z.points[0] - c((1.0 - 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-9);
        assert_eq!(z.forward_map, vec![0]);
        let a = fixtures::airplane();
        assert!(matches!(make_admissible(&a, &[vec![ra(0, 1)]]), Err(Error::NotAdmissible(_))));
        assert!(matches!(make_admissible(&a, &[vec![ra(3, 7), ra(5, 7), ra(6, 7)]]), Err(Error::NotAdmissible(_))));
        let z = make_admissible(&a, &[vec![ra(1, 3), ra(2, 3)]]).unwrap();
        assert_eq!(z.points.len(), 1);
        assert!(z.cycle_multipliers[0].norm() > 1.0);
    }

    #[test]
    fn admissible_closes_forward_orbits() {
        let a = fixtures::airplane();
        // {1/6, 5/6} lands at −α and maps to α
        let z = make_admissible(&a, &[vec![ra(1, 6), ra(5, 6)]]).unwrap();
        assert_eq!(z.points.len(), 2);
        assert_eq!(z.ray_classes[1], vec![ra(1, 3), ra(2, 3)]);
        assert_eq!(z.forward_map, vec![1, 1]);
    }

    fn airplane_puzzle() -> Puzzle {
        let a = fixtures::airplane();
        let z = make_admissible(&a, &[vec![ra(1, 3), ra(2, 3)]]).unwrap();
        Puzzle::new(&a, &z, PuzzleConfig::default()).unwrap()
    }

    #[test]
    fn depth_zero_sectors() {
        let p = airplane_puzzle();
        let r0 = p.region_of_point(c(0.0, 0.0)).unwrap();
        // 0 is in the sector (2/3, 1/3) through angle 0, together with β
        assert_eq!(p.region_arcs(&r0).arcs(), vec![(ra(2, 3), ra(1, 3))]);
        let beta = c((1.0 + (1.0 - 4.0 * fixtures::c_airplane().re).sqrt()) / 2.0, 0.0);
        assert_eq!(p.region_of_point(beta * 0.999).unwrap(), r0);
        let cv = p.region_of_point(fixtures::c_airplane()).unwrap();
        assert_ne!(cv, r0);
        assert_eq!(p.region_arcs(&cv).arcs(), vec![(ra(1, 3), ra(2, 3))]);

        let b = fixtures::basilica();
        let z = make_admissible(&b, &[vec![ra(1, 3), ra(2, 3)]]).unwrap();
        let pb = Puzzle::new(&b, &z, PuzzleConfig::default()).unwrap();
        let r = pb.region_of_point(c(0.0, 0.0)).unwrap();
        assert_eq!(pb.region_arcs(&r).arcs(), vec![(ra(2, 3), ra(1, 3))]);
    }

    #[test]
    fn itinerary_shift_and_nesting() {
        let p = airplane_puzzle();
        let z = c(0.31, 0.05);
        let a = p.piece_of(z, 4).unwrap();
        let b = p.piece_of(p.f.eval(z), 3).unwrap();
        assert_eq!(a.itinerary[1..], b.itinerary[..]);
        let a3 = p.piece_of(z, 3).unwrap();
        let (sa, sa3) = (p.piece_arcset(&a), p.piece_arcset(&a3));
        assert_eq!(sa.intersect(&sa3), sa);
    }

    #[test]
    fn critical_nest_of_airplane() {
        let p = airplane_puzzle();
        let nest = critical_nest(&p, c(0.0, 0.0), 8).unwrap();
        let last = nest.last().unwrap();
        assert_eq!(last.return_time, Some(3));
        assert_eq!(last.degree, Some(2));
        assert!(last.nest_ok);
        assert!(nest[8].diameter <= nest[0].diameter);
    }

    #[test]
    fn basilica_not_primitive_for_buried_search() {
        assert!(matches!(find_buried_biaccessible(&fixtures::basilica(), 4), Err(Error::Precondition(_))));
        assert!(matches!(find_buried_biaccessible(&MonicPolynomial::power(2), 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn airplane_buried_point() {
        let bp = find_buried_biaccessible(&fixtures::airplane(), 6).unwrap();
        assert_eq!(bp.angles, vec![ra(1, 3), ra(2, 3)]);
        assert!((bp.point - fixtures::alpha_fixed_point(fixtures::c_airplane())).norm() < 1e-8);
    }

    #[test]
    fn refine_is_refused_when_nest_is_fine() {
        let a = fixtures::airplane();
        let z = make_admissible(&a, &[vec![ra(1, 3), ra(2, 3)]]).unwrap();
        assert!(matches!(refine_admissible(&a, &z, c(0.0, 0.0), 6, 6), Err(Error::Precondition(_))));
    }

    #[test]
    fn notched_square_area_matches_series() {
        assert!((notched_square_area(60) - 1.0 / 7.0).abs() < 1e-15);
        let m = notched_square(8, 256);
        assert!((m.area_fraction() - notched_square_area(8)).abs() < 5e-3);
        assert!(in_notched_square(0.5, 0.1, 1));
        assert!(!in_notched_square(0.5, 0.2, 1));
        assert!(in_notched_square(1.5 / 9.0, 0.0, 2));
        assert!(!in_notched_square(0.1, 0.0, 1));
    }

    #[test]
    fn disk_audit_ratio() {
        let grid = GridSpec::square(c(0.0, 0.0), 1.0, 400);
        let bits = (0..400 * 400).map(|k| grid.pixel(k % 400, k / 400).norm() < 0.8).collect();
        let m = GridMask { grid, bits, meta: MaskMeta { description: "disk".into(), orbit_cap: 0, undecided: 0, under_approximation: false } };
        let rep = distortion_audit(&m, None, 4);
        assert_eq!(rep.components.len(), 1);
        assert!((rep.components[0].diam2_over_area - 4.0 / std::f64::consts::PI).abs() < 0.02);
    }

    #[test]
    fn pgm_header() {
        let m = notched_square(2, 8);
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(buf.len(), 11 + 64);
    }
    #[test]
    fn sector_pieces_shrink() {
        let p = airplane_puzzle();
        assert_eq!(p.n0().unwrap(), 2);
        assert_eq!(p.postcritical_free_depth().unwrap(), 3);
        let maxd: Vec<f64> = (4..=10)
            .map(|n| p.pieces_touching_z(n).unwrap().iter().map(|q| p.piece_diameter(q).unwrap()).fold(0.0, f64::max))
            .collect();
        for w in maxd.windows(2) {
            assert!(w[1] < w[0], "{maxd:?}");
        }
        assert!(maxd[6] < 0.05);
    }

    #[test]
    fn same_itinerary_pieces_are_separated() {
        // at depth 1 the region of 0 carries the pieces at α and at −α
        let p = airplane_puzzle();
        let itin = vec![p.region_of_angle_plus(&ra(2, 3)), p.region_of_angle_plus(&ra(1, 3))];
        let pieces = p.pieces_of_itinerary(&itin).unwrap();
        assert_eq!(pieces.len(), 1);
        let deeper: Vec<Region> = (0..4).map(|j| p.region_of_angle_plus(&ra(2, 3).mul_pow(2, j))).collect();
        let pieces = p.pieces_of_itinerary(&deeper).unwrap();
        assert_eq!(pieces.len(), 2);
        let alpha = fixtures::alpha_fixed_point(fixtures::c_airplane());
        let at_alpha: Vec<bool> = pieces.iter().map(|q| q.boundary_angles.iter().any(|(x, _)| *x == ra(2, 3))).collect();
        assert_eq!(at_alpha.iter().filter(|&&b| b).count(), 1);
        for q in &pieces {
            let near = q.boundary_angles.iter().any(|(x, _)| (p.landing_point(x).unwrap() - alpha).norm() < 1e-9);
            assert_eq!(near, q.boundary_angles.iter().any(|(x, _)| *x == ra(2, 3)));
        }
    }

    #[test]
    fn slice_pairs_converge_monotonically() {
        let p = airplane_puzzle();
        assert!(matches!(slice_pairs(&p, 0, 1), Err(Error::Precondition(_))));
        for j in 0..2 {
            let pairs: Vec<SlicePair> = (2..=7).map(|n| slice_pairs(&p, j, n).unwrap()).collect();
            for w in pairs.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                assert!(ccw_offset(&a.theta_minus, &b.t_minus) <= ccw_offset(&a.theta_minus, &a.t_minus));
                assert!(ccw_offset(&a.theta_minus, &b.t_plus) >= ccw_offset(&a.theta_minus, &a.t_plus));
            }
            let last = pairs.last().unwrap();
            assert!(ccw_offset(&last.theta_minus, &last.t_minus) < 0.02);
            assert!(ccw_offset(&last.t_plus, &last.theta_plus) < 0.02);
        }
        // sector of 0 at depth 2: the pair {5/6, 1/6} landing at −α
        let s = slice_pairs(&p, 1, 2).unwrap();
        assert_eq!((s.t_minus.clone(), s.t_plus.clone()), (ra(5, 6), ra(1, 6)));
        assert!((s.alpha_n + fixtures::alpha_fixed_point(fixtures::c_airplane())).norm() < 1e-9);
    }

    #[test]
    fn landing_masks_are_nested() {
        let p = airplane_puzzle();
        let g = puzzle_grid(&p, 0, 128).unwrap();
        let m2 = first_landing_mask(&p, 2, &g).unwrap();
        let m3 = first_landing_mask(&p, 3, &g).unwrap();
        assert!(m3.bits.iter().zip(&m2.bits).all(|(a, b)| !*a || *b));
        assert!(m3.area_fraction() > 0.0 && m3.area_fraction() < 1.0);
        // pixels near 0 lie in Y_3(0) itself
        let (ix, iy) = (((0.0 - g.x_min) / (g.x_max - g.x_min) * g.nx as f64) as usize, ((g.y_max - 0.0) / (g.y_max - g.y_min) * g.ny as f64) as usize);
        assert!(m3.get(ix, iy));
        let rep = distortion_audit(&m3, None, 8);
        assert!(rep.empirical_m.is_finite());
    }

    #[test]
    fn power_map_has_no_puzzle() {
        let f = MonicPolynomial::power(2);
        let z = AdmissibleSet { points: vec![c(1.0, 0.0)], ray_classes: vec![vec![ra(0, 1)]], forward_map: vec![0], cycle_multipliers: vec![c(2.0, 0.0)] };
        assert!(matches!(Puzzle::new(&f, &z, PuzzleConfig::default()), Err(Error::Precondition(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn shared() -> &'static Puzzle {
            static P: OnceLock<Puzzle> = OnceLock::new();
            P.get_or_init(airplane_puzzle)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn itinerary_shift(x in -1.9f64..1.9, y in -1.0f64..1.0, n in 1usize..6) {
                let p = shared();
                let z = c(x, y);
                if let (Ok(a), Ok(b)) = (p.itinerary(z, n), p.itinerary(p.f.eval(z), n - 1)) {
                    prop_assert_eq!(&a[1..], &b[..]);
                }
            }

            #[test]
            fn pieces_nest(x in -1.9f64..1.9, y in -1.0f64..1.0, n in 0usize..5) {
                let p = shared();
                let z = c(x, y);
                if let (Ok(a), Ok(b)) = (p.piece_of(z, n), p.piece_of(z, n + 1)) {
                    let (sa, sb) = (p.piece_arcset(&a), p.piece_arcset(&b));
                    prop_assert_eq!(sb.intersect(&sa), sb);
                }
            }
        }
    }
}
