//! `tessera`: command-line front end. Every subcommand prints one JSON report
//! on stdout; exit 0 on success, 1 on a domain failure, 2 on a usage error.

mod input;
mod render;

use clap::{Args, Parser, Subcommand, ValueEnum};
use input::{Parsed, UsageError};
use num_complex::Complex64;
use render::Canvas;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tessera::lamination::{rational_lamination, LaminationConfig};
use tessera::polycore::{classify, critical_points, ClassifyBudget};
use tessera::potential::{land_ray_with, trace_ray_with, RayConfig};
use tessera::puzzle::{
    critical_nest, distortion_audit, find_buried_biaccessible, first_landing_mask, make_admissible, notched_square, notched_square_area,
    puzzle_grid, GridSpec, Puzzle, PuzzleConfig,
};
use tessera::scheme::{internal_angle_system, reduced_scheme};
use tessera::thurston::{thurston_iterate, MarkedPortrait, ThurstonConfig};
use tessera::tuner::{straighten, tune_unchecked, verify_tuning, F0Data, TuningProblem, VerifyConfig};
use tessera::{MonicPolynomial, RationalAngle};

#[derive(Parser)]
#[command(name = "tessera", version, about = "Polynomial dynamics: rays, laminations, puzzles, Thurston iteration, tuning")]
struct Cli {
    /// Recorded in every report; identical arguments give identical reports.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical orbits, hyperbolicity and the primitivity heuristic.
    Classify(ClassifyArgs),
    /// Co-landing classes of periodic and preperiodic rays.
    Lamination(LaminationArgs),
    /// Reduced mapping scheme and internal angles, or validation of a scheme file.
    Scheme(SchemeArgs),
    /// Yoccoz puzzle pieces around an admissible set.
    Puzzle(PuzzleArgs),
    /// Raster of the first landing domain at a given depth.
    LandingMask(MaskArgs),
    /// Shape statistics of a landing mask or of the notched-square fixture.
    Audit(AuditArgs),
    /// Thurston pull-back on a marked portrait.
    Thurston(ThurstonArgs),
    /// Tune f0 by fiber polynomials and verify the result.
    Tune(TuneArgs),
    /// Straighten a renormalizable polynomial over the scheme of f0.
    Straighten(StraightenArgs),
    /// Check that a polynomial is the tuning of f0 by the given fibers.
    Verify(VerifyArgs),
    /// Escape-time picture, optionally with rays or a landing mask.
    Render(RenderArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// Polynomial: inline JSON {"d":..,"a":[..]}, a JSON file, or a fixture name.
    #[arg(long)]
    poly: String,
    #[arg(long)]
    no_primitivity: bool,
    #[arg(long, default_value_t = 4000)]
    max_orbit: usize,
}

#[derive(Args)]
struct LaminationArgs {
    #[arg(long)]
    poly: String,
    #[arg(long, default_value_t = 4)]
    period_bound: usize,
    #[arg(long, default_value_t = 0)]
    preperiod_bound: usize,
    /// Landing points closer than this co-land.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    l_min: f64,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, required_unless_present = "scheme", conflicts_with = "scheme")]
    poly: Option<String>,
    /// Scheme JSON (inline or file) to validate.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args)]
struct ZArgs {
    /// Ray classes of Z, e.g. "1/3,2/3;1/7,2/7,4/7". Default: a buried biaccessible cycle.
    #[arg(long)]
    z: Option<String>,
}

#[derive(Args)]
struct PuzzleArgs {
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    z: ZArgs,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Report the puzzle piece containing this point, "re,im".
    #[arg(long)]
    point: Option<String>,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    z: ZArgs,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 256)]
    res: usize,
    /// .png or .pgm
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, required_unless_present = "notched_depth", conflicts_with = "notched_depth")]
    poly: Option<String>,
    /// Audit the notched-square fixture of this Cantor depth instead.
    #[arg(long)]
    notched_depth: Option<usize>,
    #[command(flatten)]
    z: ZArgs,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 256)]
    res: usize,
    #[arg(long, default_value_t = 8)]
    min_pixels: usize,
    /// Optional mask image.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThurstonArgs {
    /// Periodic angle of the critical value of a unicritical portrait.
    #[arg(long, required_unless_present = "portrait", conflicts_with = "portrait")]
    angle: Option<String>,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Portrait JSON (inline or file).
    #[arg(long)]
    portrait: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Radius of the angle seed.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 6)]
    period_bound: usize,
    #[arg(long, default_value_t = 1e-6)]
    coefficient_tol: f64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    f0: String,
    /// Fiber polynomial, one per scheme vertex.
    #[arg(long, required = true)]
    g: Vec<String>,
    #[command(flatten)]
    check: CheckArgs,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StraightenArgs {
    #[arg(long)]
    f0: String,
    #[arg(long)]
    poly: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    f0: String,
    #[arg(long, required = true)]
    g: Vec<String>,
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    check: CheckArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Julia,
    Rays,
    Mask,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    poly: String,
    #[arg(long, value_enum, default_value_t = What::Julia)]
    what: What,
    /// Comma-separated ray angles for --what rays.
    #[arg(long)]
    angles: Option<String>,
    #[command(flatten)]
    z: ZArgs,
    /// Puzzle depth for --what mask.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 512)]
    res: usize,
    /// View centre "re,im".
    #[arg(long, default_value = "0,0")]
    center: String,
    /// Half-width of the view.
    #[arg(long, default_value_t = 2.0)]
    half: f64,
    /// .png or .pgm
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Domain(tessera::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<tessera::Error> for Failure {
    fn from(e: tessera::Error) -> Self {
        Failure::Domain(e)
    }
}

/// Report pieces shared by every subcommand.
struct Job {
    config: Value,
    ok: bool,
    report_out: Option<PathBuf>,
}

impl Job {
    fn new() -> Self {
        Job { config: Value::Null, ok: true, report_out: None }
    }
}

type Run = Result<Value, Failure>;

fn poly_json(f: &MonicPolynomial) -> Value {
    json!(input::PolyOut::from(f))
}

fn z_classes(z: &ZArgs) -> Parsed<Option<Vec<Vec<RationalAngle>>>> {
    z.z.as_deref().map(input::classes).transpose()
}

fn build_puzzle(f: &MonicPolynomial, z: Option<Vec<Vec<RationalAngle>>>) -> tessera::Result<Puzzle> {
    let classes = match z {
        Some(c) => c,
        None => vec![find_buried_biaccessible(f, 8)?.angles],
    };
    let admissible = make_admissible(f, &classes)?;
    Puzzle::new(f, &admissible, PuzzleConfig::default())
}

fn write_image(canvas: &Canvas, path: &Path) -> tessera::Result<Value> {
    let format = input::image_format(path);
    canvas
        .write(path, format)
        .map_err(|e| tessera::Error::InvalidInput(format!("writing {}: {e}", path.display())))?;
    Ok(json!({"path": path.display().to_string(), "format": format, "width": canvas.grid.nx, "height": canvas.grid.ny}))
}

fn cmd_classify(a: ClassifyArgs, job: &mut Job) -> Run {
    let f = input::polynomial(&a.poly)?;
    let max_orbit = input::nonzero("max-orbit", a.max_orbit)?;
    let budget = ClassifyBudget { max_orbit, check_primitivity: !a.no_primitivity, ..ClassifyBudget::default() };
    job.config = json!({
        "poly": poly_json(&f),
        "max_orbit": budget.max_orbit,
        "detect_tol": budget.detect_tol,
        "exact_tol": budget.exact_tol,
        "resolutions": budget.resolutions,
        "check_primitivity": budget.check_primitivity,
    });
    Ok(json!(classify(&f, &budget)?))
}

fn cmd_lamination(a: LaminationArgs, job: &mut Job) -> Run {
    let f = input::polynomial(&a.poly)?;
    let cfg = LaminationConfig {
        period_bound: input::nonzero("period-bound", a.period_bound)?,
        preperiod_bound: a.preperiod_bound,
        tol_cluster: input::positive("tol", a.tol)?,
        ray: RayConfig { l_min: input::positive("l-min", a.l_min)?, ..RayConfig::default() },
        two_scale: true,
    };
    job.config = json!({
        "poly": poly_json(&f),
        "period_bound": cfg.period_bound,
        "preperiod_bound": cfg.preperiod_bound,
        "tol_cluster": cfg.tol_cluster,
        "l_min": cfg.ray.l_min,
        "two_scale": cfg.two_scale,
    });
    let rep = rational_lamination(&f, &cfg)?;
    Ok(json!({
        "classes": rep.lamination.classes,
        "unresolved": rep.unresolved,
        "scale_disagreements": rep.scale_disagreements,
    }))
}

fn cmd_scheme(a: SchemeArgs, job: &mut Job) -> Run {
    if let Some(s) = a.scheme {
        let t = input::scheme(&s)?;
        job.config = json!({"scheme": t});
        return Ok(json!({"scheme": t, "cycles": t.cycles(), "valid": true}));
    }
    let f = input::polynomial(a.poly.as_deref().unwrap_or_default())?;
    job.config = json!({"poly": poly_json(&f)});
    let t = reduced_scheme(&f)?;
    let angles = internal_angle_system(&f, &t)?;
    Ok(json!({"scheme": t, "cycles": t.cycles(), "internal_angles": angles.theta}))
}

fn cmd_puzzle(a: PuzzleArgs, job: &mut Job) -> Run {
    let f = input::polynomial(&a.poly)?;
    let z = z_classes(&a.z)?;
    let point = a.point.as_deref().map(input::point).transpose()?;
    job.config = json!({"poly": poly_json(&f), "z": z, "depth": a.depth, "point": point.map(|p| [p.re, p.im]), "l0": PuzzleConfig::default().l0});
    let p = build_puzzle(&f, z)?;
    let mut touching = Vec::new();
    for piece in p.pieces_touching_z(a.depth)? {
        let diameter = p.piece_diameter(&piece)?;
        touching.push(json!({"itinerary": piece.itinerary, "boundary_angles": piece.boundary_angles, "diameter": diameter}));
    }
    let mut nests = Vec::new();
    for (c, _) in critical_points(&f)? {
        nests.push(json!({"critical_point": c, "nest": critical_nest(&p, c, a.depth)?}));
    }
    let piece_of_point = match point {
        Some(z) => Some(p.piece_of(z, a.depth)?),
        None => None,
    };
    Ok(json!({
        "z_classes": p.angle_classes(),
        "n0": p.n0()?,
        "pieces_touching_z": touching,
        "critical_nests": nests,
        "piece_of_point": piece_of_point,
    }))
}

fn cmd_landing_mask(a: MaskArgs, job: &mut Job) -> Run {
    let f = input::polynomial(&a.poly)?;
    let z = z_classes(&a.z)?;
    let res = input::nonzero("res", a.res)?;
    let out = input::out_path(&a.out)?;
    job.config = json!({"poly": poly_json(&f), "z": z, "depth": a.depth, "res": res, "out": out.display().to_string()});
    let p = build_puzzle(&f, z)?;
    let grid = puzzle_grid(&p, 0, res)?;
    let mask = first_landing_mask(&p, a.depth, &grid)?;
    let image = write_image(&Canvas::from_mask(&mask), &out)?;
    Ok(json!({"grid": mask.grid, "pixels": mask.count(), "area_fraction": mask.area_fraction(), "meta": mask.meta, "image": image}))
}

fn cmd_audit(a: AuditArgs, job: &mut Job) -> Run {
    let res = input::nonzero("res", a.res)?;
    let out = a.out.as_deref().map(input::out_path).transpose()?;
    if let Some(k) = a.notched_depth {
        job.config = json!({"notched_depth": k, "res": res, "min_pixels": a.min_pixels});
        let mask = notched_square(k, res);
        let exact = notched_square_area(k);
        let image = match &out {
            Some(o) => Some(write_image(&Canvas::from_mask(&mask), o)?),
            None => None,
        };
        return Ok(json!({
            "area_fraction": mask.area_fraction(),
            "exact_area_fraction": exact,
            "error": (mask.area_fraction() - exact).abs(),
            "audit": distortion_audit(&mask, None, a.min_pixels),
            "image": image,
        }));
    }
    let f = input::polynomial(a.poly.as_deref().unwrap_or_default())?;
    let z = z_classes(&a.z)?;
    job.config = json!({"poly": poly_json(&f), "z": z, "depth": a.depth, "res": res, "min_pixels": a.min_pixels});
    let p = build_puzzle(&f, z)?;
    let grid = puzzle_grid(&p, 0, res)?;
    let mask = first_landing_mask(&p, a.depth, &grid)?;
    let deeper = first_landing_mask(&p, a.depth + 1, &grid)?;
    let image = match &out {
        Some(o) => Some(write_image(&Canvas::from_mask(&mask), o)?),
        None => None,
    };
    Ok(json!({
        "area_fraction": mask.area_fraction(),
        "meta": mask.meta,
        "landing_depth": a.depth + 1,
        "audit": distortion_audit(&mask, Some(&deeper), a.min_pixels),
        "image": image,
    }))
}

fn cmd_thurston(a: ThurstonArgs, job: &mut Job) -> Run {
    let portrait = match (&a.angle, &a.portrait) {
        (_, Some(p)) => input::portrait(p)?,
        (Some(t), None) => {
            if a.degree < 2 {
                return Err(Failure::Usage("--degree must be at least 2".into()));
            }
            let t = input::angle(t)?;
            MarkedPortrait::unicritical_periodic(a.degree, &t).map_err(|e| Failure::Usage(e.to_string()))?
        }
        (None, None) => return Err(Failure::Usage("give --angle or --portrait".into())),
    };
    let cfg = ThurstonConfig { tol: input::positive("tol", a.tol)?, max_iter: input::nonzero("max-iter", a.max_iter)?, ..ThurstonConfig::default() };
    let radius = input::positive("radius", a.radius)?;
    job.config = json!({
        "portrait": portrait,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "guard_ratio": cfg.guard_ratio,
        "max_halvings": cfg.max_halvings,
        "radius": radius,
    });
    let seed = if portrait.positions.is_empty() { portrait.angle_seed(radius) } else { portrait.positions.clone() };
    let res = thurston_iterate(&portrait, &seed, &cfg)?;
    job.ok = res.realized;
    Ok(json!({
        "polynomial": poly_json(&res.polynomial),
        "positions": res.positions,
        "iterations": res.iterations,
        "last_displacement": res.history.last(),
        "certificate": res.certificate,
        "realized": res.realized,
    }))
}

fn fibers(gs: &[String]) -> Parsed<Vec<MonicPolynomial>> {
    gs.iter().map(|g| input::polynomial(g)).collect()
}

fn verify_config(c: &CheckArgs) -> Parsed<VerifyConfig> {
    Ok(VerifyConfig { period_bound: input::nonzero("period-bound", c.period_bound)?, coefficient_tol: input::positive("coefficient-tol", c.coefficient_tol)? })
}

fn tuning_json(rep: &tessera::tuner::TuningReport) -> Value {
    json!({
        "tuned": poly_json(&rep.tuned),
        "all_ok": rep.all_ok(),
        "failing_clause": rep.failing_clause(),
        "report": rep,
    })
}

fn cmd_tune(a: TuneArgs, job: &mut Job) -> Run {
    let f0 = input::polynomial(&a.f0)?;
    let g = fibers(&a.g)?;
    let vcfg = verify_config(&a.check)?;
    let tcfg = ThurstonConfig { tol: input::positive("tol", a.tol)?, max_iter: input::nonzero("max-iter", a.max_iter)?, ..ThurstonConfig::default() };
    job.report_out = a.out.as_deref().map(input::out_path).transpose()?;
    job.config = json!({
        "f0": poly_json(&f0),
        "g": g.iter().map(poly_json).collect::<Vec<_>>(),
        "period_bound": vcfg.period_bound,
        "coefficient_tol": vcfg.coefficient_tol,
        "thurston_tol": tcfg.tol,
        "max_iter": tcfg.max_iter,
    });
    let data = F0Data::new(&f0)?;
    let problem = TuningProblem::with_data(&data, g)?;
    let rep = tune_unchecked(&problem, &tcfg, &vcfg)?;
    job.ok = rep.all_ok();
    Ok(tuning_json(&rep))
}

fn cmd_straighten(a: StraightenArgs, job: &mut Job) -> Run {
    let f0 = input::polynomial(&a.f0)?;
    let f = input::polynomial(&a.poly)?;
    job.config = json!({"f0": poly_json(&f0), "poly": poly_json(&f), "l_min": tessera::tuner::tuner_ray().l_min});
    let data = F0Data::new(&f0)?;
    let s = straighten(&f, &data)?;
    Ok(json!({
        "fibers": s.g.fibers.iter().map(poly_json).collect::<Vec<_>>(),
        "scheme": s.g.scheme,
        "fiber_angles": s.fiber_angles,
        "multipliers": s.multipliers,
        "renormalization": s.renormalization,
    }))
}

fn cmd_verify(a: VerifyArgs, job: &mut Job) -> Run {
    let f0 = input::polynomial(&a.f0)?;
    let g = fibers(&a.g)?;
    let f = input::polynomial(&a.poly)?;
    let vcfg = verify_config(&a.check)?;
    job.report_out = a.out.as_deref().map(input::out_path).transpose()?;
    job.config = json!({
        "f0": poly_json(&f0),
        "g": g.iter().map(poly_json).collect::<Vec<_>>(),
        "poly": poly_json(&f),
        "period_bound": vcfg.period_bound,
        "coefficient_tol": vcfg.coefficient_tol,
    });
    let data = F0Data::new(&f0)?;
    let problem = TuningProblem::with_data(&data, g)?;
    let rep = verify_tuning(&f, &problem, &vcfg);
    job.ok = rep.all_ok();
    Ok(tuning_json(&rep))
}

fn cmd_render(a: RenderArgs, job: &mut Job) -> Run {
    let f = input::polynomial(&a.poly)?;
    let res = input::nonzero("res", a.res)?;
    let center = input::point(&a.center)?;
    let half = input::positive("half", a.half)?;
    let out = input::out_path(&a.out)?;
    let angles = match (a.what, a.angles.as_deref()) {
        (What::Rays, Some(s)) => input::angles(s)?,
        (What::Rays, None) => return Err(Failure::Usage("--what rays needs --angles".into())),
        _ => Vec::new(),
    };
    let z = z_classes(&a.z)?;
    let ray = RayConfig { store_all: true, ..RayConfig::default() };
    let what = match a.what {
        What::Julia => "julia",
        What::Rays => "rays",
        What::Mask => "mask",
    };
    job.config = json!({
        "poly": poly_json(&f),
        "what": what,
        "angles": angles,
        "z": z,
        "depth": a.depth,
        "res": res,
        "center": [center.re, center.im],
        "half": half,
        "l_min": ray.l_min,
        "out": out.display().to_string(),
    });
    let mut result = json!({});
    let canvas = match a.what {
        What::Julia => Canvas::escape_time(&f, GridSpec::square(center, half, res)),
        What::Rays => {
            let mut canvas = Canvas::escape_time(&f, GridSpec::square(center, half, res));
            const COLORS: [[u8; 3]; 6] = [[230, 40, 40], [40, 200, 60], [250, 170, 0], [200, 60, 220], [0, 200, 220], [255, 255, 255]];
            let mut rays = Vec::new();
            for (k, t) in angles.iter().enumerate() {
                let r = trace_ray_with(&f, t, &ray)?;
                let landing = land_ray_with(&f, t, &RayConfig::default()).ok();
                let pts: Vec<Complex64> = r.samples.iter().map(|s| s.1).chain(landing).collect();
                canvas.polyline(&pts, COLORS[k % COLORS.len()]);
                if let Some(w) = landing {
                    canvas.dot(w, 2, COLORS[k % COLORS.len()]);
                }
                rays.push(json!({"angle": t, "landing": landing, "samples": r.samples.len(), "failed_at": r.failed_at}));
            }
            result["rays"] = json!(rays);
            canvas
        }
        What::Mask => {
            let p = build_puzzle(&f, z)?;
            let mask = first_landing_mask(&p, a.depth, &GridSpec::square(center, half, res))?;
            result["mask"] = json!({"pixels": mask.count(), "area_fraction": mask.area_fraction(), "meta": mask.meta});
            Canvas::from_mask(&mask)
        }
    };
    result["image"] = write_image(&canvas, &out)?;
    Ok(result)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Classify(_) => "classify",
        Command::Lamination(_) => "lamination",
        Command::Scheme(_) => "scheme",
        Command::Puzzle(_) => "puzzle",
        Command::LandingMask(_) => "landing-mask",
        Command::Audit(_) => "audit",
        Command::Thurston(_) => "thurston",
        Command::Tune(_) => "tune",
        Command::Straighten(_) => "straighten",
        Command::Verify(_) => "verify",
        Command::Render(_) => "render",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let name = command_name(&cli.command);
    let mut job = Job::new();
    let run = match cli.command {
        Command::Classify(a) => cmd_classify(a, &mut job),
        Command::Lamination(a) => cmd_lamination(a, &mut job),
        Command::Scheme(a) => cmd_scheme(a, &mut job),
        Command::Puzzle(a) => cmd_puzzle(a, &mut job),
        Command::LandingMask(a) => cmd_landing_mask(a, &mut job),
        Command::Audit(a) => cmd_audit(a, &mut job),
        Command::Thurston(a) => cmd_thurston(a, &mut job),
        Command::Tune(a) => cmd_tune(a, &mut job),
        Command::Straighten(a) => cmd_straighten(a, &mut job),
        Command::Verify(a) => cmd_verify(a, &mut job),
        Command::Render(a) => cmd_render(a, &mut job),
    };
    let mut report = json!({"command": name, "seed": cli.seed, "config": job.config, "version": env!("CARGO_PKG_VERSION")});
    let code = match run {
        Err(Failure::Usage(msg)) => {
            eprintln!("tessera {name}: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Domain(e)) => {
            report["ok"] = json!(false);
            report["error"] = json!(e.to_string());
            1
        }
        Ok(result) => {
            report["ok"] = json!(job.ok);
            report["result"] = result;
            if job.ok {
                0
            } else {
                1
            }
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &job.report_out {
        if let Err(e) = std::fs::write(path, format!("{text}\n")) {
            eprintln!("tessera {name}: writing {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    println!("{text}");
    ExitCode::from(code)
}
