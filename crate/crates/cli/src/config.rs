//! Run settings from a TOML file and command-line flags. Flags win. Every value
//! remembers where it came from so diagnostics can point at it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmdecoh::units::parse_quantity;
use dmdecoh::{Dimension, Quantity};
use toml::Spanned;

/// Keys accepted in the config file; flags use the same names with `-`.
pub const KEYS: &[&str] = &[
    "experiment",
    "catalog",
    "materials",
    "mass",
    "sigma",
    "masses",
    "enhancement",
    "method",
    "samples",
    "seed",
    "rel_tol",
    "zeta",
    "chi_points",
    "lambda_bar",
    "eta",
    "environment",
    "shots",
    "format",
    "output",
    "threads",
    "rho",
    "v0",
    "v_esc",
    "v_earth",
];

/// Keys that do not change the numbers written.
const UNHASHED: &[&str] = &["output", "threads"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
pub struct Raw {
    pub text: String,
    pub origin: String,
}

impl Raw {
    pub fn fail<T>(&self, msg: impl std::fmt::Display) -> CResult<T> {
        Err(ConfigError(format!("{}: {msg}", self.origin)))
    }
}

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<&'static str, Raw>,
    /// Directory that relative file paths in the config resolve against.
    base: Option<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl Settings {
    pub fn load(path: Option<&Path>, flags: &[(&'static str, Option<String>)]) -> CResult<Self> {
        let mut s = Settings::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            s.base = path.parent().map(Path::to_path_buf);
            let table: BTreeMap<Spanned<String>, Spanned<toml::Value>> =
                toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            for (k, v) in table {
                let line = line_of(&text, k.span().start);
                let origin = format!("{}:{line}: {}", path.display(), k.get_ref());
                let Some(&key) = KEYS.iter().find(|&&x| x == k.get_ref()) else {
                    return Err(ConfigError(format!("{origin}: unknown key")));
                };
                let text = match v.get_ref() {
                    toml::Value::String(x) => x.clone(),
                    toml::Value::Integer(i) => i.to_string(),
                    toml::Value::Float(f) => f.to_string(),
                    toml::Value::Boolean(b) => b.to_string(),
                    toml::Value::Array(a) => a
                        .iter()
                        .map(|x| match x {
                            toml::Value::String(s) => Ok(s.clone()),
                            toml::Value::Integer(i) => Ok(i.to_string()),
                            toml::Value::Float(f) => Ok(f.to_string()),
                            _ => Err(ConfigError(format!("{origin}: arrays hold strings or numbers"))),
                        })
                        .collect::<CResult<Vec<_>>>()?
                        .join(","),
                    _ => return Err(ConfigError(format!("{origin}: expected a string, number or array"))),
                };
                s.values.insert(key, Raw { text, origin });
            }
        }
        for (key, v) in flags {
            if let Some(text) = v {
                let flag = format!("--{}", key.replace('_', "-"));
                s.values.insert(key, Raw { text: text.clone(), origin: flag });
            }
        }
        Ok(s)
    }

    pub fn get(&self, key: &str) -> Option<&Raw> {
        self.values.get(key)
    }

    pub fn require(&self, key: &str) -> CResult<&Raw> {
        self.get(key).ok_or_else(|| ConfigError(format!("missing {key} (flag --{} or config key)", key.replace('_', "-"))))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|r| {
            let p = PathBuf::from(&r.text);
            match (&self.base, r.origin.starts_with("--")) {
                (Some(b), false) if p.is_relative() => b.join(p),
                _ => p,
            }
        })
    }

    pub fn quantity(&self, key: &str, dim: Dimension) -> CResult<Option<Quantity>> {
        self.get(key)
            .map(|r| parse_quantity(&r.text, dim).or_else(|e| r.fail(e)))
            .transpose()
    }

    /// A mass given as mass or rest energy, in eV.
    pub fn mass_ev(&self, key: &str) -> CResult<Option<f64>> {
        self.get(key).map(|r| parse_mass(r, &r.text)).transpose()
    }

    pub fn number<T: std::str::FromStr>(&self, key: &str) -> CResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|r| r.text.trim().parse::<T>().or_else(|e| r.fail(e)))
            .transpose()
    }

    /// Large counts may be written as floats, e.g. 1e6.
    pub fn count(&self, key: &str) -> CResult<Option<u64>> {
        self.get(key)
            .map(|r| {
                let x: f64 = r.text.trim().parse().or_else(|e| r.fail(e))?;
                if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 {
                    Ok(x as u64)
                } else {
                    r.fail(format!("{x} is not a count"))
                }
            })
            .transpose()
    }

    pub fn list(&self, key: &str) -> Option<(Vec<String>, &Raw)> {
        self.get(key).map(|r| (r.text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(), r))
    }

    /// `lo:hi:n` log grid of masses in eV.
    pub fn mass_grid(&self, key: &str) -> CResult<Option<Vec<f64>>> {
        self.get(key)
            .map(|r| {
                let (lo, hi, n) = split_grid(r)?;
                let grid = dmdecoh::sensitivity::log_grid(parse_mass(r, lo)?, parse_mass(r, hi)?, n);
                grid.or_else(|e| r.fail(e))
            })
            .transpose()
    }

    /// `lo:hi:n` log grid of lengths, natural units.
    pub fn length_grid(&self, key: &str) -> CResult<Option<Vec<f64>>> {
        self.get(key)
            .map(|r| {
                let (lo, hi, n) = split_grid(r)?;
                let q = |s: &str| parse_quantity(s, Dimension::LENGTH).map(|q| q.natural()).or_else(|e| r.fail(e));
                dmdecoh::sensitivity::log_grid(q(lo)?, q(hi)?, n).or_else(|e| r.fail(e))
            })
            .transpose()
    }

    /// Canonical `key=value` lines of every setting that affects results.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(k))
            .map(|(k, v)| format!("{k}={}\n", v.text.trim()))
            .collect()
    }
}

fn split_grid(r: &Raw) -> CResult<(&str, &str, usize)> {
    let parts: Vec<&str> = r.text.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return r.fail("expected lo:hi:n");
    };
    let n: usize = n.trim().parse().or_else(|e| r.fail(e))?;
    Ok((lo, hi, n))
}

fn parse_mass(r: &Raw, s: &str) -> CResult<f64> {
    let q: Quantity = s.parse().or_else(|e| r.fail(e))?;
    q.natural_mass().or_else(|e| r.fail(e))
}
