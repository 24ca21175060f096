//! Run configuration: a flat `key = value` file with `#` comments and an
//! optional `[command]` header.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use reszone_core::equilibria::Label;
use reszone_core::flow::{MAX_TOL, MIN_TOL};
use reszone_core::math::FRAC_PI_2;
use reszone_core::ZoneParameters;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { key: String, line: usize, first: usize },

    #[error("line {line}: unknown key `{key}` for command `{command}`")]
    Unknown { key: String, line: usize, command: Command },

    #[error("line {line}: `{key}` = {value} is out of range: need {range}")]
    Range {
        key: String,
        line: usize,
        value: String,
        range: String,
    },

    #[error("line {line}: cannot read `{key}`: {message}")]
    Value { key: String, line: usize, message: String },

    #[error("missing required key `{key}`")]
    Missing { key: String },

    #[error("line {line}: header [{header}] does not match command `{command}`")]
    HeaderMismatch {
        header: String,
        line: usize,
        command: Command,
    },

    #[error("no command given on the command line or in a [command] header")]
    NoCommand,

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Resonances,
    Average,
    Equilibria,
    Bifdiag,
    Portrait,
    Reconnect,
    MapOrbits,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Resonances,
        Command::Average,
        Command::Equilibria,
        Command::Bifdiag,
        Command::Portrait,
        Command::Reconnect,
        Command::MapOrbits,
        Command::Verify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Resonances => "resonances",
            Command::Average => "average",
            Command::Equilibria => "equilibria",
            Command::Bifdiag => "bifdiag",
            Command::Portrait => "portrait",
            Command::Reconnect => "reconnect",
            Command::MapOrbits => "map-orbits",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Command::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonancesParams {
    pub omega: String,
    pub i_min: f64,
    pub i_max: f64,
    pub nu: f64,
    pub p_max: u32,
    pub q_max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageParams {
    pub omega: String,
    pub i_min: f64,
    pub i_max: f64,
    pub nu: f64,
    pub p: u32,
    pub q: u32,
    /// Resonance level; found by scanning when absent.
    pub i0: Option<f64>,
    pub f: String,
    pub g: String,
    pub nodes: usize,
    /// Small parameter for the reduction to the zone model.
    pub epsilon: Option<f64>,
    pub mu2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifdiagParams {
    pub base: ZoneParameters,
    pub mu1: (f64, f64),
    pub mu2: (f64, f64),
    pub resolution: f64,
    pub min_component_pixels: usize,
    pub curve_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortraitParams {
    pub zone: ZoneParameters,
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub n_levels: usize,
    pub resolution: usize,
    pub separatrices: bool,
    pub orbits: Vec<(f64, f64)>,
    pub tau: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconnectParams {
    pub base: ZoneParameters,
    /// All pairs suggested by the saddle set at the first `mu1` when absent.
    pub pair: Option<(Label, Label)>,
    pub mu1: (f64, f64),
    pub n_mu1: usize,
    pub mu2: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKindParam {
    Standard,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOrbitsParams {
    pub map: MapKindParam,
    pub a: f64,
    pub beta: f64,
    pub alpha: f64,
    pub zone: ZoneParameters,
    pub n: usize,
    pub starts: Vec<(f64, f64)>,
    pub random_starts: usize,
    pub u_range: (f64, f64),
    pub fixed_points: bool,
    pub manifolds: bool,
    pub manifold_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyParams {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandParams {
    Resonances(ResonancesParams),
    Average(AverageParams),
    Equilibria(ZoneParameters),
    Bifdiag(BifdiagParams),
    Portrait(PortraitParams),
    Reconnect(ReconnectParams),
    MapOrbits(MapOrbitsParams),
    Verify(VerifyParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub params: CommandParams,
    /// Every key with its effective value (defaults included), sorted by key.
    pub resolved: Vec<(String, String)>,
}

struct Entry {
    value: String,
    line: usize,
}

/// Parsed key-value pairs, consumed key by key while building the params.
struct Table {
    command: Command,
    entries: BTreeMap<String, Entry>,
    resolved: BTreeMap<String, String>,
}

fn is_key(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

type Lexed = (Option<(String, usize)>, BTreeMap<String, Entry>);

fn lex(text: &str) -> Result<Lexed, ConfigError> {
    let mut header = None;
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("unterminated header `{body}`"),
            })?;
            if header.is_some() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "only one [command] header is allowed".into(),
                });
            }
            if !entries.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "the [command] header must precede all keys".into(),
                });
            }
            header = Some((name.trim().to_string(), line));
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !is_key(key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("invalid key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` has no value"),
            });
        }
        if let Some(first) = entries.get(key) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line,
                first: first.line,
            });
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok((header, entries))
}

fn eval_real(s: &str) -> Result<f64, String> {
    let x = meval::eval_str(s).map_err(|e| e.to_string())?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` is not a finite number"))
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let parts: Vec<&str> = p.split(',').map(str::trim).collect();
            match parts.as_slice() {
                [u, v] => Ok((eval_real(u)?, eval_real(v)?)),
                _ => Err(format!("expected `u, v` in `{p}`")),
            }
        })
        .collect()
}

impl Table {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    fn value_err(key: &str, line: usize, message: String) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            line,
            message,
        }
    }

    fn real_opt(&mut self, key: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        let Some(e) = self.take(key) else { return Ok(None) };
        let x = eval_real(&e.value).map_err(|m| Self::value_err(key, e.line, m))?;
        self.record(key, fmt_real(x));
        Ok(Some((x, e.line)))
    }

    fn real(&mut self, key: &str, default: f64) -> Result<(f64, usize), ConfigError> {
        match self.real_opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, fmt_real(default));
                Ok((default, 0))
            }
        }
    }

    fn required_real(&mut self, key: &str) -> Result<(f64, usize), ConfigError> {
        self.real_opt(key)?
            .ok_or_else(|| ConfigError::Missing { key: key.to_string() })
    }

    fn int<T>(&mut self, key: &str, default: T) -> Result<(T, usize), ConfigError>
    where
        T: FromStr + fmt::Display + Copy,
        T::Err: fmt::Display,
    {
        match self.take(key) {
            Some(e) => {
                let x = e
                    .value
                    .parse::<T>()
                    .map_err(|err| Self::value_err(key, e.line, format!("`{}`: {err}", e.value)))?;
                self.record(key, x.to_string());
                Ok((x, e.line))
            }
            None => {
                self.record(key, default.to_string());
                Ok((default, 0))
            }
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let b = match self.take(key) {
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                other => {
                    return Err(Self::value_err(
                        key,
                        e.line,
                        format!("expected true or false, found `{other}`"),
                    ))
                }
            },
            None => default,
        };
        self.record(key, b.to_string());
        Ok(b)
    }

    fn string(&mut self, key: &str, default: Option<&str>) -> Result<(String, usize), ConfigError> {
        let (s, line) = match self.take(key) {
            Some(e) => (e.value, e.line),
            None => match default {
                Some(d) => (d.to_string(), 0),
                None => return Err(ConfigError::Missing { key: key.to_string() }),
            },
        };
        self.record(key, s.clone());
        Ok((s, line))
    }

    fn expression(&mut self, key: &str, vars: &[&str], default: Option<&str>) -> Result<String, ConfigError> {
        let (s, line) = self.string(key, default)?;
        let expr: meval::Expr = s
            .parse()
            .map_err(|e: meval::Error| Self::value_err(key, line, e.to_string()))?;
        expr.bindn(vars)
            .map(drop)
            .map_err(|e| Self::value_err(key, line, format!("{e} (variables: {})", vars.join(", "))))?;
        Ok(s)
    }

    fn pairs(&mut self, key: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
        let Some(e) = self.take(key) else {
            self.record(key, String::new());
            return Ok(Vec::new());
        };
        let pts = parse_pairs(&e.value).map_err(|m| Self::value_err(key, e.line, m))?;
        let shown: Vec<String> = pts
            .iter()
            .map(|(u, v)| format!("{}, {}", fmt_real(*u), fmt_real(*v)))
            .collect();
        self.record(key, shown.join("; "));
        Ok(pts)
    }

    fn window(&mut self, lo_key: &str, hi_key: &str, lo: f64, hi: f64) -> Result<(f64, f64), ConfigError> {
        let (a, _) = self.real(lo_key, lo)?;
        let (b, line) = self.real(hi_key, hi)?;
        if !(a < b) {
            return Err(range(hi_key, line, b, &format!("{hi_key} > {lo_key} = {a}")));
        }
        Ok((a, b))
    }

    fn zone(&mut self, mu_required: bool) -> Result<ZoneParameters, ConfigError> {
        let (a, _) = self.real("a", 2.0)?;
        let (b, b_line) = self.real("b", 1.0)?;
        let (p, p_line) = self.int::<i64>("p", 1)?;
        if p < 1 || p > i64::from(u32::MAX) {
            return Err(range("p", p_line, p, "p ≥ 1"));
        }
        if b == 0.0 {
            return Err(range("b", b_line, b, "b ≠ 0"));
        }
        let (mu1, mu2) = if mu_required {
            (self.required_real("mu1")?.0, self.required_real("mu2")?.0)
        } else {
            (0.0, 0.0)
        };
        let (b3, _) = self.real("b3", 0.0)?;
        ZoneParameters::new(a, b, p as u32, mu1, mu2)
            .map(|z| z.with_b3(b3))
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    fn finish(self) -> Result<BTreeMap<String, String>, ConfigError> {
        if let Some((key, e)) = self.entries.into_iter().next() {
            return Err(ConfigError::Unknown {
                key,
                line: e.line,
                command: self.command,
            });
        }
        Ok(self.resolved)
    }
}

fn range(key: &str, line: usize, value: impl fmt::Display, want: &str) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        line,
        value: value.to_string(),
        range: want.to_string(),
    }
}

fn at_least<T: PartialOrd + fmt::Display + Copy>(key: &str, (x, line): (T, usize), min: T) -> Result<T, ConfigError> {
    if x < min {
        return Err(range(key, line, x, &format!("{key} ≥ {min}")));
    }
    Ok(x)
}

fn positive(key: &str, (x, line): (f64, usize)) -> Result<f64, ConfigError> {
    if !(x > 0.0) {
        return Err(range(key, line, x, &format!("{key} > 0")));
    }
    Ok(x)
}

fn tolerance(t: &mut Table) -> Result<f64, ConfigError> {
    let (tol, line) = t.real("tol", 1e-10)?;
    if !(MIN_TOL..=MAX_TOL).contains(&tol) {
        return Err(range("tol", line, tol, &format!("{MIN_TOL:e} ≤ tol ≤ {MAX_TOL:e}")));
    }
    Ok(tol)
}

fn parse_label_pair(s: &str) -> Option<(Label, Label)> {
    let (a, b) = s.split_once(',')?;
    let pair = (Label::parse(a.trim())?, Label::parse(b.trim())?);
    (pair.0 != pair.1).then_some(pair)
}

fn resonance_profile(t: &mut Table) -> Result<(String, f64, f64, f64), ConfigError> {
    let omega = t.expression("omega", &["I"], None)?;
    let (i_min, i_max) = t.window("i_min", "i_max", 0.0, 1.0)?;
    let nu = positive("nu", t.real("nu", 1.0)?)?;
    Ok((omega, i_min, i_max, nu))
}

fn build(t: &mut Table) -> Result<CommandParams, ConfigError> {
    Ok(match t.command {
        Command::Resonances => {
            let (omega, i_min, i_max, nu) = resonance_profile(t)?;
            CommandParams::Resonances(ResonancesParams {
                omega,
                i_min,
                i_max,
                nu,
                p_max: at_least("p_max", t.int("p_max", 4u32)?, 1)?,
                q_max: at_least("q_max", t.int("q_max", 4u32)?, 1)?,
            })
        }
        Command::Average => {
            let (omega, i_min, i_max, nu) = resonance_profile(t)?;
            let p = at_least("p", t.int("p", 1u32)?, 1)?;
            let q = at_least("q", t.int("q", 1u32)?, 1)?;
            let i0 = match t.real_opt("i0")? {
                Some((x, line)) if !(x > i_min && x < i_max) => {
                    return Err(range("i0", line, x, &format!("{i_min} < i0 < {i_max}")))
                }
                other => other.map(|(x, _)| x),
            };
            let vars = ["I", "theta", "phi"];
            let f = t.expression("f", &vars, None)?;
            let g = t.expression("g", &vars, Some("0"))?;
            let (nodes, line) = t.int("nodes", 2048usize)?;
            if nodes < 64 || nodes % 2 != 0 {
                return Err(range("nodes", line, nodes, "an even number ≥ 64"));
            }
            let epsilon = match t.real_opt("epsilon")? {
                Some(e) => Some(positive("epsilon", e)?),
                None => None,
            };
            CommandParams::Average(AverageParams {
                omega,
                i_min,
                i_max,
                nu,
                p,
                q,
                i0,
                f,
                g,
                nodes,
                epsilon,
                mu2: t.real("mu2", 0.0)?.0,
            })
        }
        Command::Equilibria => CommandParams::Equilibria(t.zone(true)?),
        Command::Bifdiag => {
            let base = t.zone(false)?;
            let mu1 = t.window("mu1_min", "mu1_max", -3.0, 3.0)?;
            let mu2 = t.window("mu2_min", "mu2_max", -3.0, 3.0)?;
            CommandParams::Bifdiag(BifdiagParams {
                base,
                mu1,
                mu2,
                resolution: positive("resolution", t.real("resolution", 160.0)?)?,
                min_component_pixels: t.int("min_component_pixels", 24usize)?.0,
                curve_samples: at_least("curve_samples", t.int("curve_samples", 601usize)?, 2)?,
            })
        }
        Command::Portrait => {
            let zone = t.zone(true)?;
            let u = t.window("u_min", "u_max", -4.0, 4.0)?;
            let v = t.window("v_min", "v_max", -FRAC_PI_2, 3.0 * FRAC_PI_2)?;
            CommandParams::Portrait(PortraitParams {
                zone,
                u,
                v,
                n_levels: at_least("n_levels", t.int("n_levels", 12usize)?, 3)?,
                resolution: at_least("resolution", t.int("resolution", 512usize)?, 4)?,
                separatrices: t.flag("separatrices", true)?,
                orbits: t.pairs("orbits")?,
                tau: positive("tau", t.real("tau", 50.0)?)?,
                tol: tolerance(t)?,
            })
        }
        Command::Reconnect => {
            let base = t.zone(false)?;
            let line = t.line_of("pair");
            let pair = match t.take("pair") {
                Some(e) => {
                    let pair = parse_label_pair(&e.value).ok_or_else(|| {
                        Table::value_err(
                            "pair",
                            line,
                            format!("expected two distinct labels such as `O1+, O2-`, found `{}`", e.value),
                        )
                    })?;
                    t.record("pair", format!("{}, {}", pair.0, pair.1));
                    Some(pair)
                }
                None => {
                    t.record("pair", "auto".into());
                    None
                }
            };
            let mu1 = t.window("mu1_min", "mu1_max", 0.1, 0.5)?;
            let n_mu1 = at_least("n_mu1", t.int("n_mu1", 5usize)?, 2)?;
            let mu2 = t.window("mu2_min", "mu2_max", 0.0, 3.0)?;
            CommandParams::Reconnect(ReconnectParams {
                base,
                pair,
                mu1,
                n_mu1,
                mu2,
            })
        }
        Command::MapOrbits => {
            let (name, line) = t.string("map", Some("standard"))?;
            let map = match name.as_str() {
                "standard" => MapKindParam::Standard,
                "euler" => MapKindParam::Euler,
                other => {
                    return Err(Table::value_err(
                        "map",
                        line,
                        format!("expected `standard` or `euler`, found `{other}`"),
                    ))
                }
            };
            let (a, beta, alpha, zone) = match map {
                MapKindParam::Standard => {
                    let (a, _) = t.real("a", 2.0)?;
                    let beta = positive("beta", t.real("beta", 1.0)?)?;
                    (a, beta, 0.0, ZoneParameters::reference(0.0, 0.0))
                }
                MapKindParam::Euler => {
                    let zone = t.zone(true)?;
                    let alpha = positive("alpha", t.real("alpha", 0.17)?)?;
                    (zone.a, 0.0, alpha, zone)
                }
            };
            let n = at_least("n", t.int("n", 1000usize)?, 1)?;
            let starts = t.pairs("starts")?;
            let random_starts = t.int("random_starts", 0usize)?.0;
            let u_range = t.window("u_min", "u_max", -1.0, 1.0)?;
            if starts.is_empty() && random_starts == 0 {
                return Err(ConfigError::Invalid(
                    "map-orbits needs `starts` or `random_starts` > 0".into(),
                ));
            }
            CommandParams::MapOrbits(MapOrbitsParams {
                map,
                a,
                beta,
                alpha,
                zone,
                n,
                starts,
                random_starts,
                u_range,
                fixed_points: t.flag("fixed_points", true)?,
                manifolds: t.flag("manifolds", false)?,
                manifold_iterations: at_least("manifold_iterations", t.int("manifold_iterations", 40usize)?, 1)?,
            })
        }
        Command::Verify => CommandParams::Verify(VerifyParams {
            samples: at_least("samples", t.int("samples", 100usize)?, 1)?,
        }),
    })
}

/// Parses and validates a configuration. `command` comes from the command
/// line; a `[command]` header, if present, must agree with it.
pub fn parse_config(text: &str, command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let (header, entries) = lex(text)?;
    let command = match (header, command) {
        (Some((name, line)), cli) => {
            let parsed = name.parse::<Command>().map_err(|()| ConfigError::Syntax {
                line,
                message: format!("unknown command [{name}]"),
            })?;
            if let Some(c) = cli.filter(|&c| c != parsed) {
                return Err(ConfigError::HeaderMismatch {
                    header: name,
                    line,
                    command: c,
                });
            }
            parsed
        }
        (None, Some(c)) => c,
        (None, None) => return Err(ConfigError::NoCommand),
    };
    let mut table = Table {
        command,
        entries,
        resolved: BTreeMap::new(),
    };
    let (seed, _) = table.int("seed", 0u64)?;
    let params = build(&mut table)?;
    let resolved = table.finish()?.into_iter().collect();
    Ok(RunConfig {
        command,
        seed,
        params,
        resolved,
    })
}
