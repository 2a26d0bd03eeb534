//! Configuration resolution and seed derivation.
//!
//! Every option can come from a `key = value` config file whose keys
//! mirror the long flag names; explicit flags override the file, and
//! defaults fill the rest. Whatever won is recorded and written to
//! `config.resolved` so one output directory fully documents one run.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use lisr::geom::Point3;
use lisr::sdf::AnalyticShape;

pub struct Resolver {
    file: HashMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let mut file = HashMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (idx, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("{}:{}: expected 'key = value'", path.display(), idx + 1))?;
                file.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Resolver {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': cannot parse '{raw}': {e}"),
            },
        }
    }

    /// Flag value, else config value, else default.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Flag value, else config value, else `None`.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(PathBuf::from),
        };
        if let Some(v) = &v {
            self.resolved
                .insert(key.to_string(), v.display().to_string());
        }
        Ok(v)
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.optional_path(key, flag)?
            .with_context(|| format!("missing required option --{key}"))
    }

    /// Boolean switch: a set flag wins, else the config value.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = if flag { true } else { self.lookup(key)?.unwrap_or(false) };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Writes `config.resolved` into `out`.
    pub fn write_resolved(&self, out: &Path) -> Result<()> {
        let mut text = String::from("# resolved configuration\n");
        for (k, v) in &self.resolved {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let path = out.join("config.resolved");
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// Deterministic per-stage seed derivation: stages draw independent
/// streams from the single top-level seed, keyed by name so a stage sees
/// the same seed whether it runs standalone or inside `pipeline`.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Parses shape specs like `sphere:0.5`, `box:0.4,0.3,0.5` (half-extents,
/// one value for a cube) and `torus:0.5,0.2`, all centered at the origin
/// of the normalized domain.
pub fn parse_shape(spec: &str) -> Result<AnalyticShape> {
    let (name, params) = spec
        .split_once(':')
        .with_context(|| format!("shape spec '{spec}' must look like 'sphere:0.5'"))?;
    let values: Vec<f64> = params
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number '{p}' in shape spec '{spec}'"))
        })
        .collect::<Result<_>>()?;
    let shape = match (name, values.as_slice()) {
        ("sphere", [r]) => AnalyticShape::Sphere {
            center: Point3::ORIGIN,
            radius: *r,
        },
        ("box", [h]) => AnalyticShape::Box {
            center: Point3::ORIGIN,
            half_extents: Point3::new(*h, *h, *h),
        },
        ("box", [hx, hy, hz]) => AnalyticShape::Box {
            center: Point3::ORIGIN,
            half_extents: Point3::new(*hx, *hy, *hz),
        },
        ("torus", [major, minor]) => AnalyticShape::Torus {
            center: Point3::ORIGIN,
            major_radius: *major,
            minor_radius: *minor,
        },
        _ => bail!(
            "shape spec '{spec}' not recognized (sphere:r | box:h | box:hx,hy,hz | torus:R,r)"
        ),
    };
    shape.validate()?;
    Ok(shape)
}

/// Query strategy spec: `algorithm2` or `uniform:COUNT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuerySpec {
    Algorithm2,
    Uniform { count: usize },
}

impl FromStr for QuerySpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "algorithm2" {
            return Ok(QuerySpec::Algorithm2);
        }
        if let Some(count) = s.strip_prefix("uniform:") {
            let count: usize = count
                .parse()
                .with_context(|| format!("bad uniform query count '{count}'"))?;
            return Ok(QuerySpec::Uniform { count });
        }
        bail!("query spec '{s}' not recognized (algorithm2 | uniform:COUNT)")
    }
}

impl Display for QuerySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuerySpec::Algorithm2 => write!(f, "algorithm2"),
            QuerySpec::Uniform { count } => write!(f, "uniform:{count}"),
        }
    }
}

/// Step-size spec for gradient descent: `auto` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    Auto,
    Fixed(f64),
}

impl FromStr for StepSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(StepSpec::Auto);
        }
        let v: f64 = s
            .parse()
            .with_context(|| format!("step must be 'auto' or a number, got '{s}'"))?;
        Ok(StepSpec::Fixed(v))
    }
}

impl Display for StepSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSpec::Auto => write!(f, "auto"),
            StepSpec::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Solver choice: `closed` or `gd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverSpec {
    Closed,
    Gd,
}

impl FromStr for SolverSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(SolverSpec::Closed),
            "gd" => Ok(SolverSpec::Gd),
            other => bail!("solver '{other}' not recognized (closed | gd)"),
        }
    }
}

impl Display for SolverSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverSpec::Closed => write!(f, "closed"),
            SolverSpec::Gd => write!(f, "gd"),
        }
    }
}

/// Comma-separated perturbation magnitudes.
pub fn parse_etas(spec: &str) -> Result<Vec<f64>> {
    let etas: Vec<f64> = spec
        .split(',')
        .map(|p| {
            let v: f64 = p
                .trim()
                .parse()
                .with_context(|| format!("bad eta '{p}' in '{spec}'"))?;
            if v < 0.0 {
                bail!("eta must be non-negative, got {v}");
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    if etas.is_empty() {
        bail!("eta list is empty");
    }
    Ok(etas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_by_stage_and_seed() {
        assert_ne!(stage_seed(0, "fps"), stage_seed(0, "queries"));
        assert_ne!(stage_seed(0, "fps"), stage_seed(1, "fps"));
        assert_eq!(stage_seed(7, "metrics"), stage_seed(7, "metrics"));
    }

    #[test]
    fn shape_specs_parse() {
        assert!(matches!(
            parse_shape("sphere:0.5").unwrap(),
            AnalyticShape::Sphere { .. }
        ));
        assert!(matches!(
            parse_shape("box:0.4,0.3,0.5").unwrap(),
            AnalyticShape::Box { .. }
        ));
        assert!(matches!(
            parse_shape("torus:0.5,0.2").unwrap(),
            AnalyticShape::Torus { .. }
        ));
        assert!(parse_shape("sphere:-1").is_err());
        assert!(parse_shape("blob:1").is_err());
    }

    #[test]
    fn query_specs_parse() {
        assert_eq!("algorithm2".parse::<QuerySpec>().unwrap(), QuerySpec::Algorithm2);
        assert_eq!(
            "uniform:500".parse::<QuerySpec>().unwrap(),
            QuerySpec::Uniform { count: 500 }
        );
        assert!("uniform".parse::<QuerySpec>().is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# comment\nq = 100\nsafety = 0.25\n").unwrap();
        let mut r = Resolver::new(Some(&cfg)).unwrap();
        assert_eq!(r.value("q", Some(7usize), 1000).unwrap(), 7);
        assert_eq!(r.value("safety", None::<f64>, 0.5).unwrap(), 0.25);
        assert_eq!(r.value("margin", None::<f64>, 0.95).unwrap(), 0.95);
        r.write_resolved(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("config.resolved")).unwrap();
        assert!(text.contains("q = 7"));
        assert!(text.contains("safety = 0.25"));
        assert!(text.contains("margin = 0.95"));
    }
}
