//! Flat key-value experiment configs.
//!
//! ```text
//! [grid]
//! kind = log              # log | table
//! omega_min = 0.5
//! omega_max = 20
//! n_modes = 6
//! density_exponent = 2
//!
//! [form_factor]
//! kind = builtin          # builtin | table
//! family = power          # power | flat | zero
//! exponent = -0.25        # v(ω) = coupling · ω^exponent
//! coupling = 0.4
//! uv_split = 1.0
//!
//! [run]
//! t = 0.5, 1, 2
//! n = 100000
//! seed = 1
//! cap = 10
//! out = out
//! ```
//!
//! Every section must be present. Relative file paths are resolved against
//! the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use spinfk::grid::{build_grid, read_mode_table, split_form_factor, FormFactor, GridSpec, ModeGrid};

pub const DEFAULT_CAP: usize = 10;
pub const DEFAULT_N: u64 = 100_000;
pub const DEFAULT_PATHS: u64 = 1000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line, if the problem is tied to one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridConfig {
    Log {
        omega_min: f64,
        omega_max: f64,
        n_modes: usize,
        density_exponent: f64,
    },
    Table {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Power,
    Flat,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormFactorConfig {
    Builtin {
        family: Family,
        exponent: f64,
        coupling: f64,
    },
    Table {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    pub cap: usize,
    pub out: PathBuf,
    /// `0` means one worker per core.
    pub workers: usize,
    pub lambdas: Vec<f64>,
    /// Paths used by the per-path suites and path dumps.
    pub paths: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub form_factor: FormFactorConfig,
    pub uv_split: f64,
    pub run: RunConfig,
    /// Hex SHA-256 of the config file contents.
    pub digest: String,
    pub source: PathBuf,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

type Section = BTreeMap<String, Entry>;

const GRID_KEYS: &[&str] = &["kind", "omega_min", "omega_max", "n_modes", "density_exponent", "file"];
const FF_KEYS: &[&str] = &["kind", "family", "exponent", "coupling", "uv_split", "file"];
const RUN_KEYS: &[&str] = &["t", "n", "seed", "cap", "out", "workers", "lambdas", "paths"];

fn allowed(section: &str) -> &'static [&'static str] {
    match section {
        "grid" => GRID_KEYS,
        "form_factor" => FF_KEYS,
        _ => RUN_KEYS,
    }
}

fn split_sections(text: &str) -> Result<(BTreeMap<String, Section>, usize), ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, format!("malformed section header `{line}`")))?
                .trim()
                .to_string();
            if !["grid", "form_factor", "run"].contains(&name.as_str()) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(err(line_no, format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current
            .as_ref()
            .ok_or_else(|| err(line_no, format!("key `{key}` outside of any section")))?;
        if !allowed(section).contains(&key) {
            return Err(err(line_no, format!("unknown key `{key}` in section [{section}]")));
        }
        let map = sections.get_mut(section).expect("section registered");
        if map.contains_key(key) {
            return Err(err(line_no, format!("duplicate key `{key}` in section [{section}]")));
        }
        map.insert(
            key.to_string(),
            Entry {
                line: line_no,
                value: value.to_string(),
            },
        );
    }
    Ok((sections, last_line))
}

struct Reader<'a> {
    name: &'a str,
    map: &'a Section,
    header_line: usize,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&'a Entry, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError {
            line: Some(self.header_line),
            message: format!("missing key `{key}` in section [{}]", self.name),
        })
    }

    fn parse<T: std::str::FromStr>(&self, e: &Entry, key: &str, what: &str) -> Result<T, ConfigError> {
        e.value
            .parse::<T>()
            .map_err(|_| err(e.line, format!("[{}] {key}: expected {what}, got `{}`", self.name, e.value)))
    }

    fn f64_req(&self, key: &str) -> Result<(f64, usize), ConfigError> {
        let e = self.required(key)?;
        let x: f64 = self.parse(e, key, "a number")?;
        if !x.is_finite() {
            return Err(err(e.line, format!("[{}] {key} must be finite", self.name)));
        }
        Ok((x, e.line))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<(f64, usize), ConfigError> {
        match self.raw(key) {
            Some(_) => self.f64_req(key),
            None => Ok((default, self.header_line)),
        }
    }

    fn int_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<(T, usize), ConfigError> {
        match self.raw(key) {
            Some(e) => Ok((self.parse(e, key, "a non-negative integer")?, e.line)),
            None => Ok((default, self.header_line)),
        }
    }

    fn list(&self, key: &str) -> Result<Option<(Vec<f64>, usize)>, ConfigError> {
        let Some(e) = self.raw(key) else {
            return Ok(None);
        };
        let xs = e
            .value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(e.line, format!("[{}] {key}: cannot parse `{}`", self.name, s.trim())))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Some((xs, e.line)))
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parses a config from text; `base` anchors relative paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let (sections, last_line) = split_sections(text)?;
    let reader = |name: &'static str| -> Result<Reader<'_>, ConfigError> {
        let map = sections.get(name).ok_or_else(|| ConfigError {
            line: Some(last_line.max(1)),
            message: format!("missing section [{name}]"),
        })?;
        let header_line = text
            .lines()
            .position(|l| l.split('#').next().unwrap_or("").trim() == format!("[{name}]"))
            .map_or(1, |i| i + 1);
        Ok(Reader {
            name,
            map,
            header_line,
        })
    };
    let g = reader("grid")?;
    let f = reader("form_factor")?;
    let r = reader("run")?;

    let grid = match g.required("kind")?.value.as_str() {
        "log" => {
            let (omega_min, l_min) = g.f64_req("omega_min")?;
            if omega_min <= 0.0 {
                return Err(err(l_min, format!("[grid] omega_min must satisfy ω > 0, got {omega_min}")));
            }
            let (omega_max, l_max) = g.f64_req("omega_max")?;
            if omega_max < omega_min {
                return Err(err(l_max, format!("[grid] omega_max must be >= omega_min, got {omega_max}")));
            }
            let (n_modes, l_n) = g.int_or::<usize>("n_modes", 0)?;
            if g.raw("n_modes").is_none() {
                return Err(g.required("n_modes").unwrap_err());
            }
            if n_modes == 0 {
                return Err(err(l_n, "[grid] n_modes must be >= 1"));
            }
            if n_modes == 1 && omega_max != omega_min {
                return Err(err(l_n, "[grid] n_modes = 1 needs omega_min == omega_max"));
            }
            if n_modes > 1 && omega_max == omega_min {
                return Err(err(l_max, "[grid] n_modes > 1 needs omega_max > omega_min"));
            }
            let (density_exponent, _) = g.f64_or("density_exponent", 0.0)?;
            GridConfig::Log {
                omega_min,
                omega_max,
                n_modes,
                density_exponent,
            }
        }
        "table" => {
            let e = g.required("file")?;
            let file = resolve(base, &e.value);
            if !file.is_file() {
                return Err(err(e.line, format!("[grid] file `{}` not found", file.display())));
            }
            GridConfig::Table { file }
        }
        other => {
            let line = g.required("kind")?.line;
            return Err(err(line, format!("[grid] kind must be `log` or `table`, got `{other}`")));
        }
    };

    let (uv_split, l_split) = f.f64_or("uv_split", spinfk::grid::DEFAULT_UV_SPLIT)?;
    if uv_split <= 0.0 {
        return Err(err(l_split, format!("[form_factor] uv_split must be > 0, got {uv_split}")));
    }
    let form_factor = match f.required("kind")?.value.as_str() {
        "builtin" => {
            let fam = f.required("family")?;
            let family = match fam.value.as_str() {
                "power" => Family::Power,
                "flat" => Family::Flat,
                "zero" => Family::Zero,
                other => {
                    return Err(err(
                        fam.line,
                        format!("[form_factor] family must be power, flat or zero, got `{other}`"),
                    ))
                }
            };
            let (exponent, _) = f.f64_or("exponent", 0.0)?;
            let (coupling, _) = match family {
                Family::Zero => f.f64_or("coupling", 0.0)?,
                _ => f.f64_req("coupling")?,
            };
            FormFactorConfig::Builtin {
                family,
                exponent,
                coupling,
            }
        }
        "table" => {
            let e = f.required("file")?;
            let file = resolve(base, &e.value);
            if !file.is_file() {
                return Err(err(e.line, format!("[form_factor] file `{}` not found", file.display())));
            }
            FormFactorConfig::Table { file }
        }
        other => {
            let line = f.required("kind")?.line;
            return Err(err(line, format!("[form_factor] kind must be `builtin` or `table`, got `{other}`")));
        }
    };

    let t = match r.list("t")? {
        Some((ts, line)) => {
            if ts.is_empty() || ts.iter().any(|&x| x < 0.0) {
                return Err(err(line, "[run] t values must be >= 0"));
            }
            if ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(err(line, "[run] t values must be strictly increasing"));
            }
            ts
        }
        None => return Err(r.required("t").unwrap_err()),
    };
    let (n, l_n) = r.int_or::<u64>("n", DEFAULT_N)?;
    if n < 2 {
        return Err(err(l_n, format!("[run] n must be >= 2, got {n}")));
    }
    let (seed, _) = r.int_or::<u64>("seed", DEFAULT_SEED)?;
    let (cap, _) = r.int_or::<usize>("cap", DEFAULT_CAP)?;
    let (workers, _) = r.int_or::<usize>("workers", 0)?;
    let (paths, l_p) = r.int_or::<u64>("paths", DEFAULT_PATHS)?;
    if paths == 0 {
        return Err(err(l_p, "[run] paths must be >= 1"));
    }
    let out = match r.raw("out") {
        Some(e) => resolve(base, &e.value),
        None => base.join("out"),
    };
    let lambdas = match r.list("lambdas")? {
        Some((ls, line)) => {
            if ls.iter().any(|&x| x <= 0.0) || ls.windows(2).any(|w| w[1] <= w[0]) {
                return Err(err(line, "[run] lambdas must be positive and strictly increasing"));
            }
            ls
        }
        None => Vec::new(),
    };

    Ok(ExperimentConfig {
        grid,
        form_factor,
        uv_split,
        run: RunConfig {
            t,
            n,
            seed,
            cap,
            out,
            workers,
            lambdas,
            paths,
        },
        digest: hex::encode(Sha256::digest(text.as_bytes())),
        source: base.to_path_buf(),
    })
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let mut cfg = parse_config_str(&text, &base)?;
    cfg.source = path.to_path_buf();
    Ok(cfg)
}

/// The model described by a config.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: ModeGrid,
    /// Form factor as configured (possibly complex).
    pub raw: FormFactor,
    /// Gauge-equivalent real form factor used by the estimators.
    pub v: FormFactor,
    pub gauged: bool,
}

impl ExperimentConfig {
    pub fn build_model(&self) -> Result<Model, ConfigError> {
        let fail = |e: spinfk::Error| ConfigError {
            line: None,
            message: e.to_string(),
        };
        let grid = match &self.grid {
            &GridConfig::Log {
                omega_min,
                omega_max,
                n_modes,
                density_exponent,
            } => build_grid(&GridSpec::LogSpaced {
                omega_min,
                omega_max,
                n: n_modes,
                density_exponent,
            })
            .map_err(fail)?,
            GridConfig::Table { file } => read_mode_table(file).map_err(fail)?.0,
        };
        let values: Vec<Complex64> = match &self.form_factor {
            &FormFactorConfig::Builtin {
                family,
                exponent,
                coupling,
            } => grid
                .omegas()
                .iter()
                .map(|&om| match family {
                    Family::Power => Complex64::new(coupling * om.powf(exponent), 0.0),
                    Family::Flat => Complex64::new(coupling, 0.0),
                    Family::Zero => Complex64::new(0.0, 0.0),
                })
                .collect(),
            FormFactorConfig::Table { file } => {
                let (tg, v) = read_mode_table(file).map_err(fail)?;
                if tg.omegas() != grid.omegas() || tg.weights() != grid.weights() {
                    return Err(ConfigError {
                        line: None,
                        message: format!(
                            "form-factor table {} does not match the grid's omegas and weights",
                            file.display()
                        ),
                    });
                }
                v
            }
        };
        let raw = split_form_factor(&values, &grid, self.uv_split).map_err(fail)?;
        let gauged = !raw.is_real();
        let v = if !gauged {
            raw.clone()
        } else {
            spinfk::grid::gauge_to_real(&raw).0
        };
        Ok(Model {
            grid,
            raw,
            v,
            gauged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[grid]
kind = log
omega_min = 0.5
omega_max = 8
n_modes = 4

[form_factor]
kind = builtin
family = flat
coupling = 0.3

[run]
t = 1
";

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(text, Path::new("/tmp/cfg"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.run.cap, 10);
        assert_eq!(c.run.n, 100_000);
        assert_eq!(c.uv_split, 1.0);
        assert_eq!(c.run.out, PathBuf::from("/tmp/cfg/out"));
        assert_eq!(c.digest.len(), 64);
        let m = c.build_model().unwrap();
        assert_eq!(m.grid.len(), 4);
        assert!(m.v.is_real());
    }

    #[test]
    fn zero_omega_is_rejected_with_line() {
        let e = parse(&MINIMAL.replace("omega_min = 0.5", "omega_min = 0")).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("ω > 0"), "{e}");
    }

    #[test]
    fn unknown_key_names_key_and_section() {
        let e = parse(&MINIMAL.replace("coupling = 0.3", "coupling = 0.3\nstrength = 2")).unwrap_err();
        assert_eq!(e.line, Some(11));
        assert!(e.message.contains("strength") && e.message.contains("[form_factor]"), "{e}");
    }

    #[test]
    fn missing_section_is_reported() {
        let e = parse(&MINIMAL.replace("[run]\nt = 1\n", "")).unwrap_err();
        assert!(e.message.contains("missing section [run]"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn out_of_range_values() {
        for (from, to, needle) in [
            ("n_modes = 4", "n_modes = 0", "n_modes"),
            ("t = 1", "t = -1", "t values"),
            ("t = 1", "t = 1\nn = 1", "n must"),
            ("coupling = 0.3", "coupling = 0.3\nuv_split = 0", "uv_split"),
            ("kind = log", "kind = spline", "kind"),
        ] {
            let e = parse(&MINIMAL.replace(from, to)).unwrap_err();
            assert!(e.message.contains(needle), "{e}");
            assert!(e.line.is_some());
        }
    }

    #[test]
    fn lists_and_comments() {
        let c = parse(&MINIMAL.replace("t = 1", "t = 0.5, 1, 2   # times\nlambdas = 1,2,4\nseed = 99")).unwrap();
        assert_eq!(c.run.t, vec![0.5, 1.0, 2.0]);
        assert_eq!(c.run.lambdas, vec![1.0, 2.0, 4.0]);
        assert_eq!(c.run.seed, 99);
    }
}
