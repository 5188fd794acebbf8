//! Parsing of command-line inputs: polynomials, schemes, portraits, angles,
//! ray classes and output paths.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use tessera::fixtures;
use tessera::scheme::MappingScheme;
use tessera::thurston::MarkedPortrait;
use tessera::{MonicPolynomial, RationalAngle};

/// A bad command line. Reported with exit code 2 before any artifact is written.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Parsed<T> = Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> Parsed<T> {
    Err(UsageError(msg.into()))
}

/// `{"d": 2, "a": [-1]}`; entries of `a` are reals or `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyJson {
    pub d: usize,
    pub a: Vec<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolyOut {
    pub d: usize,
    pub a: Vec<[f64; 2]>,
}

impl From<&MonicPolynomial> for PolyOut {
    fn from(f: &MonicPolynomial) -> Self {
        PolyOut { d: f.degree(), a: f.coeffs().iter().map(|c| [c.re, c.im]).collect() }
    }
}

fn coefficient(v: &Value) -> Parsed<Complex64> {
    match v {
        Value::Number(n) => n.as_f64().map(|x| Complex64::new(x, 0.0)).ok_or_else(|| UsageError(format!("bad coefficient {v}"))),
        Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
            (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
            _ => usage(format!("bad coefficient {v}")),
        },
        _ => usage(format!("bad coefficient {v}")),
    }
}

fn poly_from_json(text: &str) -> Parsed<MonicPolynomial> {
    let j: PolyJson = serde_json::from_str(text).map_err(|e| UsageError(format!("polynomial JSON: {e}")))?;
    if j.d < 2 {
        return usage("polynomial degree must be at least 2");
    }
    if j.a.len() != j.d - 1 {
        return usage(format!("degree {} needs {} coefficients a_0..a_{}, got {}", j.d, j.d - 1, j.d - 2, j.a.len()));
    }
    let coeffs = j.a.iter().map(coefficient).collect::<Parsed<Vec<_>>>()?;
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return usage("non-finite coefficient");
    }
    MonicPolynomial::with_degree(j.d, coeffs).map_err(|e| UsageError(e.to_string()))
}

fn fixture(name: &str) -> Option<MonicPolynomial> {
    if let Some(f) = fixtures::by_name(name) {
        return Some(f);
    }
    let rest = name.strip_prefix("power").or_else(|| name.strip_prefix('z'))?;
    let d: usize = if rest.is_empty() { 2 } else { rest.parse().ok()? };
    (2..=64).contains(&d).then(|| MonicPolynomial::power(d))
}

/// Inline JSON, a path to a JSON file, or a fixture name.
pub fn polynomial(arg: &str) -> Parsed<MonicPolynomial> {
    let arg = arg.trim();
    if arg.starts_with('{') {
        return poly_from_json(arg);
    }
    if let Some(f) = fixture(arg) {
        return Ok(f);
    }
    if Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg).map_err(|e| UsageError(format!("{arg}: {e}")))?;
        return poly_from_json(&text);
    }
    usage(format!("'{arg}' is neither polynomial JSON, a file, nor a fixture (basilica, rabbit, airplane, power<d>)"))
}

fn json_text(arg: &str) -> Parsed<String> {
    let arg = arg.trim();
    if arg.starts_with('{') {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).map_err(|e| UsageError(format!("{arg}: {e}")))
    }
}

pub fn scheme(arg: &str) -> Parsed<MappingScheme> {
    serde_json::from_str(&json_text(arg)?).map_err(|e| UsageError(format!("scheme JSON: {e}")))
}

pub fn portrait(arg: &str) -> Parsed<MarkedPortrait> {
    serde_json::from_str(&json_text(arg)?).map_err(|e| UsageError(format!("portrait JSON: {e}")))
}

pub fn angle(s: &str) -> Parsed<RationalAngle> {
    s.parse().map_err(|e: tessera::Error| UsageError(e.to_string()))
}

/// Comma-separated angles.
pub fn angles(s: &str) -> Parsed<Vec<RationalAngle>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(angle).collect()
}

/// Classes separated by `;`, angles within a class by `,`.
pub fn classes(s: &str) -> Parsed<Vec<Vec<RationalAngle>>> {
    let cls: Vec<Vec<RationalAngle>> = s.split(';').map(angles).collect::<Parsed<_>>()?;
    if cls.iter().any(|c| c.len() < 2) {
        return usage("every ray class needs at least two angles");
    }
    Ok(cls)
}

pub fn point(s: &str) -> Parsed<Complex64> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| UsageError(format!("bad point '{s}'")));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => usage(format!("bad point '{s}', expected re,im")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Pgm,
}

/// Output path whose directory exists; the format follows the extension.
pub fn out_path(p: &Path) -> Parsed<PathBuf> {
    let dir = match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !dir.is_dir() {
        return usage(format!("output directory {} does not exist", dir.display()));
    }
    if p.is_dir() {
        return usage(format!("output path {} is a directory", p.display()));
    }
    Ok(p.to_path_buf())
}

pub fn image_format(p: &Path) -> ImageFormat {
    match p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "png" => ImageFormat::Png,
        _ => ImageFormat::Pgm,
    }
}

pub fn positive(name: &str, v: f64) -> Parsed<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        usage(format!("--{name} must be positive"))
    }
}

pub fn nonzero(name: &str, v: usize) -> Parsed<usize> {
    if v > 0 {
        Ok(v)
    } else {
        usage(format!("--{name} must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_forms() {
        let f = polynomial(r#"{"d":2,"a":[-1]}"#).unwrap();
        assert_eq!(f.coeffs(), &[Complex64::new(-1.0, 0.0)]);
        let g = polynomial(r#"{"d":3,"a":[[0.5,1],0]}"#).unwrap();
        assert_eq!(g.degree(), 3);
        assert_eq!(g.coeffs()[0], Complex64::new(0.5, 1.0));
        assert_eq!(polynomial("power3").unwrap().degree(), 3);
        assert!(polynomial("airplane").is_ok());
        assert!(polynomial(r#"{"d":3,"a":[1]}"#).is_err());
        assert!(polynomial("nonsense").is_err());
    }

    #[test]
    fn class_lists() {
        let c = classes("1/3,2/3;1/7,2/7,4/7").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1][2].to_string(), "4/7");
        assert!(classes("1/3").is_err());
        assert!(angles("1/0").is_err());
    }
}
