//! Tuning: realizing a generalized polynomial g over the scheme of f₀ as a
//! single polynomial (χ⁻¹), straightening back (χ), and the checks tying the
//! two together. Works on unicritical data with periodic fiber critical orbits.

use crate::error::{Error, Result};
use crate::lamination::{angle_orbit, angles_with_orbit_type, colanding_classes, contains, in_closed_arc, rational_lamination, LaminationConfig, RationalAngle};
use crate::polycore::{classify, ClassifyBudget, CriticalOrbit, MonicPolynomial};
use crate::potential::{green, land_ray_with, RayConfig};
use crate::puzzle::{critical_nest, find_buried_biaccessible, make_admissible, Puzzle, PuzzleConfig, PuzzlePiece};
use crate::scheme::{in_ct, internal_angle_system, reduced_scheme, GeneralizedPolynomial, InternalAngleSystem, MappingScheme};
use crate::thurston::{thurston_iterate, MarkedPortrait, ThurstonConfig};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const COLANDING_TOL: f64 = 1e-6;

/// Rays of period r·k converge slowly near the small Julia set; go deeper than the default.
pub fn tuner_ray() -> RayConfig {
    RayConfig { l_min: 1e-14, ..RayConfig::default() }
}

/// Data of f₀ needed on both sides of the tuning: scheme, internal angles,
/// admissible ray classes and the renormalization depth N₀.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Data {
    pub f0: MonicPolynomial,
    pub scheme: MappingScheme,
    pub angles: InternalAngleSystem,
    /// Co-landing ray classes of the admissible set Z.
    pub z_classes: Vec<Vec<RationalAngle>>,
    pub depth: usize,
    pub blocks: Vec<FiberBlocks>,
}

/// Closed arcs of angles feeding one fiber, in fiber-digit order: the fiber
/// angle with δ-ary digits e₁e₂… corresponds to the angle whose m_d^r-orbit
/// visits blocks e₁, e₂, ….
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberBlocks {
    pub degree: usize,
    pub fiber_degree: usize,
    pub return_time: usize,
    /// θ_v; fiber angle 0 goes to θ_v or to the angle co-landing with it that starts block 0.
    pub anchor: RationalAngle,
    pub blocks: Vec<(RationalAngle, RationalAngle)>,
}

fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

impl FiberBlocks {
    fn big_d(&self) -> u64 {
        (self.degree as u64).pow(self.return_time as u32)
    }

    pub fn block_of(&self, x: &RationalAngle) -> Option<usize> {
        self.blocks.iter().position(|(a, b)| in_closed_arc(x, a, b))
    }

    /// Preimage of y under m_d^r inside block i.
    fn branch(&self, i: usize, y: &RationalAngle) -> Option<RationalAngle> {
        let (a, b) = &self.blocks[i];
        y.preimages(self.big_d()).into_iter().find(|x| in_closed_arc(x, a, b))
    }

    fn branch_f64(&self, i: usize, y: f64) -> f64 {
        let dd = self.big_d() as f64;
        let (a, b) = (self.blocks[i].0.to_f64(), self.blocks[i].1.to_f64());
        let len = (b - a).rem_euclid(1.0);
        (0..self.big_d())
            .map(|j| (y + j as f64) / dd)
            .min_by(|x, z| {
                let dist = |t: f64| {
                    let o = (t - a).rem_euclid(1.0);
                    if o <= len { 0.0 } else { (o - len).min(1.0 - o) }
                };
                dist(*x).total_cmp(&dist(*z))
            })
            .expect("d^r ≥ 2")
    }

    /// Ψ: fiber angle ↦ angle of f₀ (or of any f with λ(f) ⊇ λ(f₀)).
    pub fn substitute(&self, t: &RationalAngle) -> Result<RationalAngle> {
        let delta = self.fiber_degree as u64;
        let o = angle_orbit(t, delta);
        let digit = |s: &RationalAngle| -> usize { ((s.numer() * big(delta)) / s.denom()).to_usize().expect("digit < δ") };
        let digits: Vec<usize> = o.orbit.iter().map(digit).collect();
        let (m, k) = (o.preperiod, o.period);
        let cycle = &digits[m..];
        // periodic part: fixed point of the composed branches, located in
        // floating point and then confirmed exactly as N/(D^k − 1)
        let dd = self.big_d();
        let dk = (dd as f64).powi(k as i32);
        if dk > 2f64.powi(50) {
            return Err(Error::SubstitutionOverflow(format!("denominator {dd}^{k} − 1 beyond budget")));
        }
        let mut y = 0.5;
        let rounds = 2 + (60.0 / dk.log2()).ceil() as usize;
        for _ in 0..rounds {
            for &e in cycle.iter().rev() {
                y = self.branch_f64(e, y);
            }
        }
        let den = dd.pow(k as u32) - 1;
        let num = (y * den as f64).round() as u64 % den.max(1);
        let x = RationalAngle::new(num, den);
        let mut w = x.clone();
        for &e in cycle {
            if self.block_of(&w) != Some(e) || !in_closed_arc(&w, &self.blocks[e].0, &self.blocks[e].1) {
                return Err(Error::InvariantViolation(format!("substituted angle {x} leaves block {e}")));
            }
            w = w.mul(dd);
        }
        if w != x {
            return Err(Error::InvariantViolation(format!("substituted angle {x} is not periodic")));
        }
        let mut x = x;
        for &e in digits[..m].iter().rev() {
            x = self.branch(e, &x).ok_or_else(|| Error::InvariantViolation(format!("no branch into block {e}")))?;
        }
        Ok(x)
    }

    /// Ψ⁻¹: reads the block itinerary of x as δ-ary digits.
    pub fn fiber_angle(&self, x: &RationalAngle) -> Result<RationalAngle> {
        let o = angle_orbit(x, self.big_d());
        let digits: Vec<u64> = o
            .orbit
            .iter()
            .map(|w| self.block_of(w).map(|b| b as u64).ok_or_else(|| Error::Precondition(format!("{x} is not in the fiber's angle set"))))
            .collect::<Result<_>>()?;
        let delta = big(self.fiber_degree as u64);
        let (m, k) = (o.preperiod, o.period);
        let val = |ds: &[u64]| ds.iter().fold(BigUint::zero(), |acc, &e| acc * &delta + big(e));
        let pk = delta.pow(k as u32) - BigUint::one();
        let num = val(&digits[..m]) * &pk + val(&digits[m..]);
        Ok(RationalAngle::new(num, delta.pow(m as u32) * pk))
    }
}

/// Angles with period dividing `r` whose rays co-land with θ.
fn root_angles(f0: &MonicPolynomial, theta: &RationalAngle, r: usize, ray: &RayConfig) -> Result<Vec<RationalAngle>> {
    let d = f0.degree() as u64;
    let target = land_ray_with(f0, theta, ray)?;
    let cands: Vec<RationalAngle> = (1..=r).filter(|p| r.is_multiple_of(*p)).flat_map(|p| angles_with_orbit_type(d, 0, p)).collect();
    let mut out: Vec<RationalAngle> = cands
        .par_iter()
        .filter(|t| land_ray_with(f0, t, ray).map(|z| (z - target).norm() <= COLANDING_TOL).unwrap_or(false))
        .cloned()
        .collect();
    out.sort();
    Ok(out)
}

/// Blocks of a unicritical vertex: the arcs between the root angles R and
/// their rotations R + j/d that join two different rotation classes.
pub fn fiber_blocks(f0: &MonicPolynomial, theta: &RationalAngle, r: usize, ray: &RayConfig) -> Result<FiberBlocks> {
    let d = f0.degree();
    let roots = root_angles(f0, theta, r, ray)?;
    if roots.len() < 2 {
        return Err(Error::InvariantViolation(format!("θ = {theta} lands at a point with a single ray")));
    }
    let mut pts: Vec<(RationalAngle, usize)> = (0..d).flat_map(|j| roots.iter().map(move |a| (a.add(&RationalAngle::new(j as u64, d as u64)), j))).collect();
    pts.sort();
    let n = pts.len();
    let mut blocks: Vec<(RationalAngle, RationalAngle)> = (0..n).filter(|&i| pts[i].1 != pts[(i + 1) % n].1).map(|i| (pts[i].0.clone(), pts[(i + 1) % n].0.clone())).collect();
    if blocks.len() != d {
        return Err(Error::InvariantViolation(format!("expected {d} blocks, found {}", blocks.len())));
    }
    // fiber digit 0 is the first block starting at or after the anchor
    let start = (0..d).min_by(|&i, &j| blocks[i].0.sub(theta).cmp(&blocks[j].0.sub(theta))).expect("d ≥ 2");
    blocks.rotate_left(start);
    Ok(FiberBlocks { degree: d, fiber_degree: d, return_time: r, anchor: theta.clone(), blocks })
}

fn is_unicritical(f: &MonicPolynomial) -> bool {
    f.coeffs().iter().skip(1).all(|a| a.norm() == 0.0)
}

/// Period of the (periodic) critical point of a unicritical polynomial.
fn critical_period(f: &MonicPolynomial) -> Result<usize> {
    let budget = ClassifyBudget { check_primitivity: false, detect_tol: 1e-7, exact_tol: 1e-7, ..ClassifyBudget::default() };
    let class = classify(f, &budget)?;
    match class.critical_orbit_data.first().map(|c| c.orbit) {
        Some(CriticalOrbit::Finite { preperiod: 0, period }) => Ok(period),
        Some(CriticalOrbit::Finite { .. }) => Err(Error::Precondition("strictly preperiodic fiber critical orbits are not supported".into())),
        other => Err(Error::NotPcfFiber(format!("critical orbit {other:?}"))),
    }
}

/// Among co-landing classes of (label, landing) pairs, the start of the
/// shortest arc between consecutive labels of one class.
fn shortest_arc(landed: &[(RationalAngle, Complex64)]) -> Option<RationalAngle> {
    let classes = colanding_classes(landed, COLANDING_TOL);
    let mut best: Option<(RationalAngle, RationalAngle)> = None;
    for (_, cls) in classes.iter().filter(|c| c.1.len() >= 2) {
        for i in 0..cls.len() {
            let len = cls[(i + 1) % cls.len()].sub(&cls[i]);
            if best.as_ref().is_none_or(|b| len < b.0) {
                best = Some((len, cls[i].clone()));
            }
        }
    }
    best.map(|b| b.1)
}

/// Characteristic angle of a unicritical polynomial with periodic critical
/// point of period k: the start of the shortest arc cut out by co-landing
/// period-k rays (0 when k = 1).
pub fn characteristic_angle(g: &MonicPolynomial, k: usize, ray: &RayConfig) -> Result<RationalAngle> {
    if k == 1 {
        return Ok(RationalAngle::zero());
    }
    let cands = angles_with_orbit_type(g.degree() as u64, 0, k);
    let landed: Vec<(RationalAngle, Complex64)> = cands.par_iter().filter_map(|t| land_ray_with(g, t, ray).ok().map(|z| (t.clone(), z))).collect();
    shortest_arc(&landed).ok_or_else(|| Error::NotFound(format!("no co-landing rays of period {k}")))
}

impl F0Data {
    pub fn new(f0: &MonicPolynomial) -> Result<Self> {
        let scheme = reduced_scheme(f0)?;
        if scheme.len() != 1 || scheme.delta[0] != f0.degree() || !is_unicritical(f0) {
            return Err(Error::Precondition("only unicritical f₀ (single-vertex scheme) is supported".into()));
        }
        let angles = internal_angle_system(f0, &scheme)?;
        let z = find_buried_biaccessible(f0, 8)?;
        let ray = tuner_ray();
        let blocks = vec![fiber_blocks(f0, &angles.theta[0], scheme.r[0], &ray)?];
        let admissible = make_admissible(f0, std::slice::from_ref(&z.angles))?;
        let puzzle = Puzzle::new(f0, &admissible, PuzzleConfig::default())?;
        let n0 = puzzle.n0()?;
        let max_depth = n0 + 6;
        let nest = critical_nest(&puzzle, scheme.centers[0], max_depth)?;
        let depth = nest
            .iter()
            .find(|l| l.depth >= n0 && l.return_time == Some(scheme.r[0]) && l.degree == Some(scheme.delta[0]))
            .map(|l| l.depth)
            .ok_or_else(|| Error::NotFound(format!("no renormalization depth up to {max_depth}")))?;
        Ok(F0Data { f0: f0.clone(), scheme, angles, z_classes: admissible.ray_classes, depth, blocks })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningProblem {
    pub f0: F0Data,
    pub g: GeneralizedPolynomial,
}

impl TuningProblem {
    pub fn new(f0: &MonicPolynomial, fibers: Vec<MonicPolynomial>) -> Result<Self> {
        let data = F0Data::new(f0)?;
        let g = GeneralizedPolynomial::new(data.scheme.clone(), fibers)?;
        let p = TuningProblem { f0: data, g };
        p.validate()?;
        Ok(p)
    }

    pub fn with_data(data: &F0Data, fibers: Vec<MonicPolynomial>) -> Result<Self> {
        let g = GeneralizedPolynomial::new(data.scheme.clone(), fibers)?;
        let p = TuningProblem { f0: data.clone(), g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.scheme != self.f0.scheme {
            return Err(Error::InvalidInput("g is not over the scheme of f₀".into()));
        }
        if !in_ct(&self.g, 2000)? {
            return Err(Error::Precondition("g is not in C(T)".into()));
        }
        for f in &self.g.fibers {
            if !is_unicritical(f) {
                return Err(Error::Precondition("fibers must be unicritical".into()));
            }
            critical_period(f)?;
        }
        Ok(())
    }
}

/// Portrait of the tuned map: the fiber's characteristic angle θ_g is
/// carried by Ψ to the mark f^r(0) and the orbit angles follow from it.
pub fn tuning_angles(problem: &TuningProblem) -> Result<MarkedPortrait> {
    let data = &problem.f0;
    let d = data.f0.degree();
    let r = data.scheme.r[0];
    let g = &problem.g.fibers[0];
    let k = critical_period(g)?;
    let theta_g = characteristic_angle(g, k, &tuner_ray())?;
    let x = data.blocks[0].substitute(&theta_g)?;
    let p = r * k;
    let value_angle = x.mul_pow(d as u64, ((p - r + 1) % p) as u32);
    let portrait = MarkedPortrait::unicritical_periodic(d, &value_angle)?;
    if portrait.len() != p {
        return Err(Error::InvariantViolation(format!("tuned angle {value_angle} has period {} instead of {p}", portrait.len())));
    }
    Ok(portrait)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberDomain {
    pub vertex: usize,
    pub critical_point: Complex64,
    pub piece: PuzzlePiece,
    pub return_time: Option<usize>,
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Renormalization {
    pub depth: usize,
    pub fibers: Vec<FiberDomain>,
    /// Return data match the scheme and every fiber critical orbit stays in its domain.
    pub connected: bool,
}

/// Transports Z to f and returns the fiber domains Y_{N₀}(v) of f.
pub fn renormalize(f: &MonicPolynomial, data: &F0Data) -> Result<(Renormalization, Puzzle)> {
    if f.degree() != data.f0.degree() {
        return Err(Error::Precondition("degree differs from f₀".into()));
    }
    let c = data.scheme.centers[0];
    if green(f, c) > 0.0 {
        return Err(Error::Precondition("critical point escapes, so λ(f) ⊉ λ(f₀)".into()));
    }
    let ray = tuner_ray();
    for cls in &data.z_classes {
        let pts: Vec<Complex64> = cls.iter().map(|t| land_ray_with(f, t, &ray)).collect::<Result<_>>().map_err(|e| Error::TransportFailure(e.to_string()))?;
        if pts.iter().any(|p| (p - pts[0]).norm() > COLANDING_TOL) {
            return Err(Error::TransportFailure(format!("class {cls:?} does not co-land for f")));
        }
    }
    let z = make_admissible(f, &data.z_classes).map_err(|e| Error::TransportFailure(e.to_string()))?;
    let puzzle = Puzzle::new(f, &z, PuzzleConfig::default())?;
    let n = data.depth;
    let (r, delta) = (data.scheme.r[0], data.scheme.delta[0]);
    let nest = critical_nest(&puzzle, c, n)?;
    let level = &nest[n];
    let piece = puzzle.piece_of(c, n)?;
    let mut connected = level.return_time == Some(r) && level.degree == Some(delta);
    if connected {
        // the fiber critical orbit, sampled every r steps until it closes
        let mut w = c;
        for _ in 0..64 {
            w = f.iterate(w, r);
            if !puzzle.contains_point(&piece, w).unwrap_or(false) {
                connected = false;
                break;
            }
            if (w - c).norm() < 1e-9 {
                break;
            }
        }
    }
    let fiber = FiberDomain { vertex: 0, critical_point: c, piece, return_time: level.return_time, degree: level.degree };
    Ok((Renormalization { depth: n, fibers: vec![fiber], connected }, puzzle))
}

/// Multipliers at the marked fiber β point: of g′ at its landing point of
/// angle 0, and of f^r at the landing point of Ψ(0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierDiagnostic {
    pub fiber: Complex64,
    pub tuned: Complex64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Straightening {
    pub g: GeneralizedPolynomial,
    /// Characteristic fiber angle read off from the rays of f.
    pub fiber_angles: Vec<RationalAngle>,
    pub multipliers: Vec<MultiplierDiagnostic>,
    pub renormalization: Renormalization,
}

pub fn straighten(f: &MonicPolynomial, data: &F0Data) -> Result<Straightening> {
    let (renorm, _) = renormalize(f, data)?;
    if !renorm.connected {
        return Err(Error::NotPcfFiber("fiber critical orbit leaves the fiber domain".into()));
    }
    let blocks = &data.blocks[0];
    let r = data.scheme.r[0];
    let delta = data.scheme.delta[0];
    let p = critical_period(f)?;
    if p % r != 0 {
        return Err(Error::NotPcfFiber(format!("critical period {p} is not a multiple of r = {r}")));
    }
    let k = p / r;
    let ray = tuner_ray();
    let (fiber, theta) = if k == 1 {
        (MonicPolynomial::power(delta), RationalAngle::zero())
    } else {
        let cands = angles_with_orbit_type(delta as u64, 0, k);
        let landed: Vec<(RationalAngle, Complex64)> = cands
            .par_iter()
            .filter_map(|t| {
                let x = blocks.substitute(t).ok()?;
                land_ray_with(f, &x, &ray).ok().map(|z| (t.clone(), z))
            })
            .collect();
        let theta = shortest_arc(&landed).ok_or_else(|| Error::NotFound(format!("no co-landing fiber rays of period {k}")))?;
        let portrait = MarkedPortrait::unicritical_periodic(delta, &theta)?;
        let res = thurston_iterate(&portrait, &portrait.angle_seed(1.0), &ThurstonConfig::default())?;
        (res.polynomial, theta)
    };
    let multipliers = vec![beta_multipliers(f, &fiber, blocks, r, &RayConfig::default()).unwrap_or(MultiplierDiagnostic { fiber: f64::NAN.into(), tuned: f64::NAN.into() })];
    let g = GeneralizedPolynomial::new(data.scheme.clone(), vec![fiber])?;
    Ok(Straightening { g, fiber_angles: vec![theta], multipliers, renormalization: renorm })
}

fn beta_multipliers(f: &MonicPolynomial, fiber: &MonicPolynomial, blocks: &FiberBlocks, r: usize, ray: &RayConfig) -> Result<MultiplierDiagnostic> {
    let b = land_ray_with(fiber, &RationalAngle::zero(), ray)?;
    let w = land_ray_with(f, &blocks.substitute(&RationalAngle::zero())?, ray)?;
    Ok(MultiplierDiagnostic { fiber: fiber.derivative_at(b), tuned: f.iterate_d(w, r).1 })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub fiber_coefficient_distance: f64,
    pub coefficient_tol: f64,
    pub thurston_iterations: usize,
    pub thurston_fit_ratio: f64,
    pub thurston_last_displacement: f64,
    pub thurston_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub tuned: MonicPolynomial,
    /// External angle of the tuned critical value used to seed the iteration.
    pub tuned_angle: Option<RationalAngle>,
    pub lamination_ok: bool,
    pub period_bound: usize,
    pub lamination_witness: Option<Vec<RationalAngle>>,
    pub renorm_connected: bool,
    pub marking_ok: bool,
    pub straightened: Option<GeneralizedPolynomial>,
    pub multipliers: Vec<MultiplierDiagnostic>,
    pub residuals: Residuals,
    pub notes: Vec<String>,
}

impl TuningReport {
    pub fn all_ok(&self) -> bool {
        self.lamination_ok && self.renorm_connected && self.marking_ok
    }

    pub fn failing_clause(&self) -> Option<&'static str> {
        if !self.lamination_ok {
            Some("(a) lamination inclusion")
        } else if !self.renorm_connected {
            Some("(b) renormalization connectivity")
        } else if !self.marking_ok {
            Some("(c) straightening round trip")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub period_bound: usize,
    pub coefficient_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { period_bound: 6, coefficient_tol: 1e-6 }
    }
}

/// λ(f) ⊇ λ(f₀) over periodic angles up to the bound; the witness is a class of f₀ missing in f.
pub fn lamination_inclusion(f: &MonicPolynomial, f0: &MonicPolynomial, period_bound: usize) -> Result<(bool, Option<Vec<RationalAngle>>)> {
    let cfg = LaminationConfig { period_bound, preperiod_bound: 0, ..LaminationConfig::default() };
    let big = rational_lamination(f, &cfg)?.lamination;
    let small = rational_lamination(f0, &cfg)?.lamination;
    let c = contains(&big, &small);
    Ok((c.holds, c.witness))
}

/// Checks (a) λ(f) ⊇ λ(f₀), (b) renormalization connectivity, (c) the
/// straightening reproduces g with the marking respected. Failures are
/// reported, never raised.
pub fn verify_tuning(f: &MonicPolynomial, problem: &TuningProblem, cfg: &VerifyConfig) -> TuningReport {
    let data = &problem.f0;
    let mut notes = Vec::new();
    let (lamination_ok, lamination_witness) = match lamination_inclusion(f, &data.f0, cfg.period_bound) {
        Ok(x) => x,
        Err(e) => {
            notes.push(format!("lamination: {e}"));
            (false, None)
        }
    };
    let renorm = renormalize(f, data);
    let renorm_connected = match &renorm {
        Ok((r, _)) => r.connected,
        Err(e) => {
            notes.push(format!("renormalize: {e}"));
            false
        }
    };
    let mut residuals = Residuals { coefficient_tol: cfg.coefficient_tol, fiber_coefficient_distance: f64::INFINITY, ..Residuals::default() };
    let mut straightened = None;
    let mut multipliers = Vec::new();
    let mut marking_ok = false;
    match straighten(f, data) {
        Ok(s) => {
            let dist = s.g.max_coefficient_distance(&problem.g);
            residuals.fiber_coefficient_distance = dist;
            let coherent = match (&renorm, marking_coherent(f, data, &renorm)) {
                (Ok(_), Ok(true)) => true,
                (_, Err(e)) => {
                    notes.push(format!("marking: {e}"));
                    false
                }
                _ => false,
            };
            if !coherent {
                notes.push("ray at Ψ(0) does not land at a fixed point of f^r in the fiber domain".into());
            }
            marking_ok = dist <= cfg.coefficient_tol && coherent;
            multipliers = s.multipliers.clone();
            straightened = Some(s.g);
        }
        Err(e) => notes.push(format!("straighten: {e}")),
    }
    notes.push("marking independence is only checked where two anchor angles are available".into());
    TuningReport {
        tuned: f.clone(),
        tuned_angle: None,
        lamination_ok,
        period_bound: cfg.period_bound,
        lamination_witness,
        renorm_connected,
        marking_ok,
        straightened,
        multipliers,
        residuals,
        notes,
    }
}

/// The ray of f at Ψ(0) lands at a repelling fixed point of f^r in the closed fiber domain.
fn marking_coherent(f: &MonicPolynomial, data: &F0Data, renorm: &Result<(Renormalization, Puzzle)>) -> Result<bool> {
    let Ok((rn, puzzle)) = renorm else {
        return Ok(false);
    };
    let r = data.scheme.r[0];
    let x = data.blocks[0].substitute(&RationalAngle::zero())?;
    let w = land_ray_with(f, &x, &tuner_ray())?;
    let (fw, dfw) = f.iterate_d(w, r);
    let fixed = (fw - w).norm() <= 1e-7 * w.norm().max(1.0) && dfw.norm() > 1.0;
    let inside = match puzzle.contains_point(&rn.fibers[0].piece, w) {
        Ok(b) => b,
        Err(Error::OnBoundary { .. }) => true,
        Err(e) => return Err(e),
    };
    Ok(fixed && inside)
}

pub fn tune(problem: &TuningProblem) -> Result<TuningReport> {
    tune_with(problem, &ThurstonConfig::default(), &VerifyConfig::default())
}

pub fn tune_with(problem: &TuningProblem, tcfg: &ThurstonConfig, vcfg: &VerifyConfig) -> Result<TuningReport> {
    let report = tune_unchecked(problem, tcfg, vcfg)?;
    match report.failing_clause() {
        Some(clause) => Err(Error::VerificationFailed(clause.into())),
        None => Ok(report),
    }
}

/// The tuning pipeline returning the report even when a clause fails.
pub fn tune_unchecked(problem: &TuningProblem, tcfg: &ThurstonConfig, vcfg: &VerifyConfig) -> Result<TuningReport> {
    let portrait = tuning_angles(problem)?;
    let res = thurston_iterate(&portrait, &portrait.angle_seed(1.0), tcfg)?;
    let mut report = verify_tuning(&res.polynomial, problem, vcfg);
    report.tuned_angle = portrait.angles.get(1).cloned().flatten();
    report.residuals.thurston_iterations = res.iterations;
    report.residuals.thurston_fit_ratio = res.certificate.fit_ratio;
    report.residuals.thurston_last_displacement = res.history.last().copied().unwrap_or(0.0);
    report.residuals.thurston_tol = tcfg.tol;
    if !res.realized {
        report.notes.push("Thurston output does not realize the portrait's orbit types".into());
    }
    Ok(report)
}

/// Smallest period bound at which the rational laminations of f and g differ.
pub fn first_distinguishing_period(f: &MonicPolynomial, g: &MonicPolynomial, max_period: usize) -> Result<Option<usize>> {
    for p in 1..=max_period {
        let cfg = LaminationConfig { period_bound: p, preperiod_bound: 0, ..LaminationConfig::default() };
        let a = rational_lamination(f, &cfg)?.lamination.classes;
        let b = rational_lamination(g, &cfg)?.lamination.classes;
        if a != b {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lamination::ra;
    use std::sync::OnceLock;

    fn airplane_data() -> &'static F0Data {
        static D: OnceLock<F0Data> = OnceLock::new();
        D.get_or_init(|| F0Data::new(&fixtures::airplane()).unwrap())
    }

    #[test]
    fn airplane_blocks() {
        let d = airplane_data();
        assert_eq!(d.scheme.r[0], 3);
        assert_eq!(d.depth, 3);
        let b = &d.blocks[0];
        let mut arcs = b.blocks.clone();
        arcs.sort();
        assert_eq!(arcs, vec![(ra(3, 14), ra(2, 7)), (ra(5, 7), ra(11, 14))]);
        // fiber angle 0 lands at the root of U(0)
        let x0 = b.substitute(&RationalAngle::zero()).unwrap();
        assert!(x0 == ra(2, 7) || x0 == ra(5, 7));
    }

    #[test]
    fn substitution_matches_block_words() {
        // independent oracle: the binary words 011/100 of the airplane's
        // characteristic angles, substituted digit by digit for 1/3 = .(01)
        let b = &airplane_data().blocks[0];
        let x = b.substitute(&ra(1, 3)).unwrap();
        let classical = ra(0b011100, 63);
        assert_eq!(x.mul_pow(2, 4), classical);
        assert_eq!(b.fiber_angle(&x).unwrap(), ra(1, 3));
        for t in [ra(1, 7), ra(2, 7), ra(3, 7), ra(1, 2), ra(1, 6)] {
            let x = b.substitute(&t).unwrap();
            assert_eq!(b.fiber_angle(&x).unwrap(), t);
        }
    }

    #[test]
    fn other_anchor_gives_same_blocks() {
        let d = airplane_data();
        let b = fiber_blocks(&d.f0, &ra(5, 7), 3, &tuner_ray()).unwrap();
        assert_eq!(b.blocks, d.blocks[0].blocks);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn substitution_inverts(k in 1u32..8, num in 0u64..255, pre in 0u32..3) {
            let den = ((1u64 << k) - 1) << pre;
            let t = RationalAngle::new(num % den, den);
            let b = &airplane_data().blocks[0];
            let x = b.substitute(&t).unwrap();
            proptest::prop_assert!(b.block_of(&x).is_some());
            proptest::prop_assert_eq!(b.fiber_angle(&x).unwrap(), t.clone());
            // Ψ conjugates m_2 on fiber angles to m_2^3 on the blocks
            proptest::prop_assert_eq!(b.substitute(&t.mul(2)).unwrap(), x.mul(8));
        }
    }

    #[test]
    fn characteristic_angles_of_fixtures() {
        let ray = tuner_ray();
        assert_eq!(characteristic_angle(&fixtures::basilica(), 2, &ray).unwrap(), ra(1, 3));
        assert_eq!(characteristic_angle(&fixtures::rabbit(), 3, &ray).unwrap(), ra(1, 7));
        assert_eq!(characteristic_angle(&fixtures::airplane(), 3, &ray).unwrap(), ra(3, 7));
    }

    #[test]
    fn power_fiber_gives_f0_portrait() {
        let d = airplane_data();
        let p = TuningProblem::with_data(d, vec![MonicPolynomial::power(2)]).unwrap();
        let portrait = tuning_angles(&p).unwrap();
        assert_eq!(portrait.len(), 3);
        assert_eq!(portrait.angles[1], Some(ra(3, 7)));
    }

    #[test]
    fn basilica_and_rabbit_portrait_periods() {
        let d = airplane_data();
        let p = TuningProblem::with_data(d, vec![fixtures::basilica()]).unwrap();
        let q = tuning_angles(&p).unwrap();
        assert_eq!(q.len(), 6);
        assert_eq!(q.angles[1], Some(ra(28, 63)));
        let p = TuningProblem::with_data(d, vec![fixtures::rabbit()]).unwrap();
        assert_eq!(tuning_angles(&p).unwrap().len(), 9);
    }

    #[test]
    fn airplane_straightens_to_power() {
        let s = straighten(&fixtures::airplane(), airplane_data()).unwrap();
        assert!(s.g.fibers[0].coeffs()[0].norm() < 1e-12);
        let rn = &s.renormalization;
        assert!(rn.connected);
        assert_eq!((rn.fibers[0].return_time, rn.fibers[0].degree), (Some(3), Some(2)));
    }

    #[test]
    fn escaping_map_is_refused() {
        let f = MonicPolynomial::quadratic(Complex64::new(0.5, 0.0));
        assert!(matches!(renormalize(&f, airplane_data()), Err(Error::Precondition(_))));
    }

    #[test]
    fn wrong_fiber_fails_clause_c() {
        let p = TuningProblem::with_data(airplane_data(), vec![fixtures::basilica()]).unwrap();
        let rep = verify_tuning(&fixtures::airplane(), &p, &VerifyConfig { period_bound: 3, ..VerifyConfig::default() });
        assert!(rep.lamination_ok && rep.renorm_connected);
        assert!(!rep.marking_ok);
        assert_eq!(rep.failing_clause(), Some("(c) straightening round trip"));
    }

    #[test]
    fn basilica_fails_clause_a() {
        let p = TuningProblem::with_data(airplane_data(), vec![MonicPolynomial::power(2)]).unwrap();
        let rep = verify_tuning(&fixtures::basilica(), &p, &VerifyConfig { period_bound: 3, ..VerifyConfig::default() });
        assert!(!rep.lamination_ok);
        assert!(rep.lamination_witness.is_some());
    }
}
