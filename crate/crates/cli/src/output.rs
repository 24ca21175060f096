//! File formats: CSV tables and JSON documents with embedded metadata, their
//! readers, and atomic writes.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same value, so every reader recovers the emitted numbers exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const TOOL: &str = "reszone";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool version, command and the fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
}

impl Meta {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: cfg.command.to_string(),
            seed: cfg.seed,
            config: cfg.resolved.iter().filter(|(k, _)| k != "seed").cloned().collect(),
        }
    }

    /// `key = value` lines, used as CSV comments and SVG metadata.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("tool = {}", self.tool),
            format!("version = {}", self.version),
            format!("command = {}", self.command),
            format!("seed = {}", self.seed),
        ];
        out.extend(self.config.iter().map(|(k, v)| format!("config.{k} = {v}")));
        out
    }

    fn from_lines<'a>(lines: impl Iterator<Item = &'a str>) -> anyhow::Result<Self> {
        let mut meta = Meta {
            tool: String::new(),
            version: String::new(),
            command: String::new(),
            seed: 0,
            config: BTreeMap::new(),
        };
        for line in lines {
            let (k, v) = line
                .split_once(" = ")
                .map(|(k, v)| (k, v.to_string()))
                .or_else(|| line.strip_suffix(" =").map(|k| (k, String::new())))
                .with_context(|| format!("malformed metadata line `{line}`"))?;
            match k {
                "tool" => meta.tool = v,
                "version" => meta.version = v,
                "command" => meta.command = v,
                "seed" => meta.seed = v.parse().context("metadata seed")?,
                _ => {
                    let key = k
                        .strip_prefix("config.")
                        .with_context(|| format!("unknown metadata key `{k}`"))?;
                    meta.config.insert(key.to_string(), v);
                }
            }
        }
        if meta.tool != TOOL {
            bail!("not a {TOOL} file (tool = `{}`)", meta.tool);
        }
        Ok(meta)
    }
}

/// A CSV row type with a fixed column order.
pub trait Record: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

macro_rules! record {
    ($(#[$attr:meta])* $name:ident { $($field:ident : $ty:ty),+ $(,)? }) => {
        $(#[$attr])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            $(pub $field: $ty),+
        }

        impl Record for $name {
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),+];
        }
    };
}

record!(EquilibriumRow {
    mu1: f64,
    mu2: f64,
    p: u32,
    a: f64,
    b: f64,
    label: String,
    u: f64,
    v: f64,
    kind: String,
    delta: f64,
    energy: f64,
});

record!(
    /// One sample of a flow orbit (`step_or_tau` is the time) or of a map
    /// orbit (the iterate index).
    OrbitRow {
        step_or_tau: f64,
        u: f64,
        v: f64,
        v_unwrapped: f64,
        energy: f64,
    }
);

record!(
    /// `curve_id` is `<tag>#<branch>`, with the saddle pair in brackets for
    /// reconnection curves: `m3#0`, `m6[O1+,O2-]#1`.
    CurveRow {
        curve_id: String,
        mu1: f64,
        mu2: f64,
    }
);

record!(RegionRow {
    mu1: f64,
    mu2: f64,
    pixels: usize,
    signature: String,
});

record!(ResonanceRow {
    p: u32,
    q: u32,
    i_pq: f64,
    j: u32,
    bj: f64,
    bj1: f64,
});

record!(ResonanceIssueRow {
    p: u32,
    q: u32,
    i: f64,
    error: String,
});

record!(CoefficientRow {
    v: f64,
    a0: f64,
    p0: f64,
    q0: f64,
    a0_tilde: f64,
    p0_tilde: f64,
});

record!(ContourRow {
    level: f64,
    kind: String,
    labels: String,
    polyline: usize,
    closed: bool,
    u: f64,
    v: f64,
});

record!(SeparatrixRow {
    saddle: String,
    manifold: String,
    side: f64,
    end: String,
    u: f64,
    v: f64,
});

record!(FixedPointRow {
    u: f64,
    v: f64,
    winding: i32,
    trace: f64,
    kind: String,
});

record!(ManifoldRow {
    saddle: usize,
    manifold: String,
    branch: usize,
    param: f64,
    u: f64,
    v: f64,
});

record!(CheckRow {
    check: String,
    status: String,
    detail: String,
});

/// Renders `rows` as CSV preceded by `# key = value` metadata lines.
pub fn to_csv<R: Record>(meta: &Meta, rows: &[R]) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    for line in meta.lines() {
        writeln!(buf, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(buf);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    let buf = w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?;
    Ok(String::from_utf8(buf)?)
}

/// Reads a CSV written by [`to_csv`], checking the header.
pub fn read_csv<R: Record>(text: &str) -> anyhow::Result<(Meta, Vec<R>)> {
    let meta = Meta::from_lines(text.lines().map_while(|l| l.strip_prefix("# ")))?;
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != R::HEADER {
        bail!("unexpected CSV header {header:?}, want {:?}", R::HEADER);
    }
    let rows = rd.deserialize().collect::<Result<Vec<R>, _>>()?;
    Ok((meta, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub id: String,
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<[String; 2]>,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDoc {
    pub mu1: f64,
    pub mu2: f64,
    pub pixels: usize,
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub mu1: [f64; 2],
    pub mu2: [f64; 2],
    pub n_mu1: usize,
    pub n_mu2: usize,
    pub min_component_pixels: usize,
}

/// The parameter-plane diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramDoc {
    pub meta: Meta,
    pub grid: GridDoc,
    pub curves: Vec<CurveDoc>,
    pub regions: Vec<RegionDoc>,
    pub fragments: Vec<RegionDoc>,
}

/// Any JSON document carrying a `meta` block.
pub fn to_json<T: Serialize>(doc: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: DeserializeOwned>(text: &str) -> anyhow::Result<T> {
    Ok(serde_json::from_str(text)?)
}

/// An output file held in memory until every artifact of a run is ready.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: String) -> Self {
        Self {
            name: name.into(),
            contents,
        }
    }
}

/// Writes `contents` to a temporary file in the target directory and renames
/// it over `path`, so an existing file is either kept or fully replaced.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            write_atomic(&path, a.contents.as_bytes())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, Command};

    fn meta() -> Meta {
        Meta::new(&parse_config("mu1 = 1\nmu2 = 0\n", Some(Command::Equilibria)).unwrap())
    }

    #[test]
    fn headers_follow_field_order() {
        assert_eq!(
            EquilibriumRow::HEADER,
            ["mu1", "mu2", "p", "a", "b", "label", "u", "v", "kind", "delta", "energy"]
        );
        assert_eq!(OrbitRow::HEADER, ["step_or_tau", "u", "v", "v_unwrapped", "energy"]);
        assert_eq!(CurveRow::HEADER, ["curve_id", "mu1", "mu2"]);
        let row = OrbitRow {
            step_or_tau: 1.0,
            u: 2.0,
            v: 3.0,
            v_unwrapped: 4.0,
            energy: 5.0,
        };
        let csv = to_csv(&meta(), &[row]).unwrap();
        let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, ["step_or_tau,u,v,v_unwrapped,energy", "1.0,2.0,3.0,4.0,5.0"]);
    }

    #[test]
    fn empty_tables_keep_the_header() {
        let csv = to_csv::<CurveRow>(&meta(), &[]).unwrap();
        assert_eq!(csv.lines().last(), Some("curve_id,mu1,mu2"));
        let (m, rows) = read_csv::<CurveRow>(&csv).unwrap();
        assert_eq!(m, meta());
        assert!(rows.is_empty());
    }

    #[test]
    fn floats_round_trip_exactly() {
        let awkward = [
            0.1,
            1.0 / 3.0,
            -2.0f64.sqrt(),
            1e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            -0.0,
        ];
        let rows: Vec<CurveRow> = awkward
            .iter()
            .map(|&x| CurveRow {
                curve_id: "m6[O1+,O2-]#0".into(),
                mu1: x,
                mu2: x.exp(),
            })
            .collect();
        let (_, back) = read_csv::<CurveRow>(&to_csv(&meta(), &rows).unwrap()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.mu1.to_bits(), b.mu1.to_bits());
            assert_eq!(a.mu2.to_bits(), b.mu2.to_bits());
            assert_eq!(a.curve_id, b.curve_id);
        }
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let row = RegionRow {
            mu1: 1.0,
            mu2: 2.0,
            pixels: 3,
            signature: "order=O1+<O2- center_labels=O1-,O2+".into(),
        };
        let (_, back) = read_csv::<RegionRow>(&to_csv(&meta(), std::slice::from_ref(&row)).unwrap()).unwrap();
        assert_eq!(back, [row]);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let csv = to_csv::<CurveRow>(&meta(), &[]).unwrap();
        assert!(read_csv::<OrbitRow>(&csv).is_err());
    }

    #[test]
    fn json_round_trip() {
        let doc = DiagramDoc {
            meta: meta(),
            grid: GridDoc {
                mu1: [-3.0, 3.0],
                mu2: [0.1, 0.7],
                n_mu1: 4,
                n_mu2: 5,
                min_component_pixels: 1,
            },
            curves: vec![CurveDoc {
                id: "m5+#0".into(),
                tag: "m5+".into(),
                pair: None,
                points: vec![[0.1 + 0.2, 1.0 / 7.0]],
            }],
            regions: vec![],
            fragments: vec![],
        };
        let back: DiagramDoc = read_json(&to_json(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
