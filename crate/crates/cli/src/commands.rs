//! Command dispatch. Each command computes all of its artifacts in memory;
//! the caller writes them once everything succeeded.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use reszone_core::averaging::{
    classify_resonance, compute_averaged_coefficients, degeneracy_order, find_resonance_levels, harmonic_reduction,
    verify_hamiltonian_identities, FrequencyProfile, PerturbationSpec, ResonanceClass, ResonanceSpec,
};
use reszone_core::equilibria::{closed_form_equilibria, Equilibrium, Kind, Label};
use reszone_core::flow::{integrate_orbit, trace_separatrices, BranchEnd, Manifold, Sampling, SeparatrixBudget};
use reszone_core::maps::{
    fixed_points, iterate_orbit, rotation_number, trace_manifolds, ManifoldOptions, MapKind, MapSpec,
};
use reszone_core::math::TAU;
use reszone_core::portrait::{sample_phase_portrait_with, LevelKind, Window};
use reszone_core::reconnection::{
    assemble_diagram, default_pairs, reconnection_residual, signature_row, trace_reconnection_curve, GridSpec,
    ParameterPlaneDiagram, ReconnectionCurve,
};
use reszone_core::zone::eval_hamiltonian;
use reszone_core::{PhaseState, ZoneParameters};

use crate::config::{
    AverageParams, BifdiagParams, CommandParams, MapKindParam, MapOrbitsParams, PortraitParams, ReconnectParams,
    ResonancesParams, RunConfig,
};
use crate::output::{
    to_csv, to_json, Artifact, CoefficientRow, ContourRow, CurveDoc, CurveRow, DiagramDoc, EquilibriumRow,
    FixedPointRow, GridDoc, ManifoldRow, Meta, OrbitRow, RegionDoc, RegionRow, ResonanceIssueRow, ResonanceRow,
    SeparatrixRow,
};
use crate::svg::{self, Figure, Glyph, GlyphKind, Path};
use crate::verify;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Options {
    pub svg: bool,
}

/// Artifacts to write plus lines for standard output. `failed` marks runs
/// that completed but found a violated check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    pub failed: bool,
}

pub fn run(cfg: &RunConfig, opts: &Options) -> anyhow::Result<Outcome> {
    let meta = Meta::new(cfg);
    match &cfg.params {
        CommandParams::Resonances(p) => resonances(&meta, p),
        CommandParams::Average(p) => average(&meta, p),
        CommandParams::Equilibria(z) => equilibria(&meta, z),
        CommandParams::Bifdiag(p) => bifdiag(&meta, p, opts),
        CommandParams::Portrait(p) => portrait(&meta, p, opts),
        CommandParams::Reconnect(p) => reconnect(&meta, p),
        CommandParams::MapOrbits(p) => map_orbits(&meta, p, cfg.seed, opts),
        CommandParams::Verify(p) => verify::run(&meta, p.samples, cfg.seed),
    }
}

fn svg_artifact(meta: &Meta, name: &str, mut fig: Figure) -> Artifact {
    fig.metadata = meta.lines();
    Artifact::new(name, svg::render(&fig))
}

fn bind_omega(src: &str) -> anyhow::Result<impl Fn(f64) -> f64> {
    let expr: meval::Expr = src.parse().context("omega")?;
    expr.bind("I").context("omega")
}

fn bind_perturbation(src: &str, name: &str) -> anyhow::Result<impl Fn(f64, f64, f64) -> f64> {
    let expr: meval::Expr = src.parse().with_context(|| name.to_string())?;
    expr.bind3("I", "theta", "phi").with_context(|| name.to_string())
}

fn resonances(meta: &Meta, p: &ResonancesParams) -> anyhow::Result<Outcome> {
    let profile = FrequencyProfile::new(bind_omega(&p.omega)?, p.i_min, p.i_max, p.nu)?;
    let scan = find_resonance_levels(&profile, p.p_max, p.q_max)?;
    let rows: Vec<ResonanceRow> = scan
        .levels
        .iter()
        .map(|r| ResonanceRow {
            p: r.p,
            q: r.q,
            i_pq: r.i_pq,
            j: r.j,
            bj: r.bj,
            bj1: r.bj1,
        })
        .collect();
    let mut out = Outcome {
        artifacts: vec![Artifact::new("resonances.csv", to_csv(meta, &rows)?)],
        summary: vec![format!("{} resonance levels", rows.len())],
        failed: false,
    };
    if !scan.issues.is_empty() {
        let issues: Vec<ResonanceIssueRow> = scan
            .issues
            .iter()
            .map(|i| ResonanceIssueRow {
                p: i.p,
                q: i.q,
                i: i.i,
                error: i.error.to_string(),
            })
            .collect();
        out.summary
            .push(format!("{} roots could not be classified", issues.len()));
        out.artifacts
            .push(Artifact::new("resonance_issues.csv", to_csv(meta, &issues)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceDoc {
    pub p: u32,
    pub q: u32,
    pub i_pq: f64,
    pub j: u32,
    pub bj: f64,
    pub bj1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityDoc {
    pub residual: f64,
    pub b0: f64,
    pub b1: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionDoc {
    pub a: f64,
    pub b: f64,
    pub p: u32,
    pub mu1: f64,
    pub mu2: f64,
    pub harmonic_a: f64,
    pub harmonic_c: f64,
    pub harmonic_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageDoc {
    pub meta: Meta,
    pub resonance: ResonanceDoc,
    pub b0: f64,
    pub b1: f64,
    pub class: String,
    pub roots: Vec<f64>,
    pub hamiltonian_identities: IdentityDoc,
    pub reduction: Option<ReductionDoc>,
    pub reduction_error: Option<String>,
}

fn class_name(c: ResonanceClass) -> &'static str {
    match c {
        ResonanceClass::Passable => "passable",
        ResonanceClass::PartiallyPassable => "partially-passable",
        ResonanceClass::NonPassable => "non-passable",
        ResonanceClass::Ambiguous => "ambiguous",
    }
}

fn average(meta: &Meta, p: &AverageParams) -> anyhow::Result<Outcome> {
    let profile = FrequencyProfile::new(bind_omega(&p.omega)?, p.i_min, p.i_max, p.nu)?;
    let spec = match p.i0 {
        Some(i0) => {
            let d = degeneracy_order(&profile, i0)?;
            let target = f64::from(p.q) * p.nu / f64::from(p.p);
            let miss = ((profile.omega)(i0) - target).abs();
            if miss > 1e-8 * target.abs().max(1.0) {
                bail!("i0 = {i0} is not a resonance level: |omega(i0) - q nu / p| = {miss:e}");
            }
            ResonanceSpec {
                p: p.p,
                q: p.q,
                i_pq: i0,
                j: d.j,
                bj: d.bj,
                bj1: d.bj1,
            }
        }
        None => {
            let scan = find_resonance_levels(&profile, p.p, p.q)?;
            *scan.levels.iter().find(|r| r.p == p.p && r.q == p.q).ok_or_else(|| {
                anyhow!(
                    "no resonance level with p = {}, q = {} in [{}, {}]",
                    p.p,
                    p.q,
                    p.i_min,
                    p.i_max
                )
            })?
        }
    };
    let pert = PerturbationSpec {
        f: bind_perturbation(&p.f, "f")?,
        g: bind_perturbation(&p.g, "g")?,
    };
    let coeffs = compute_averaged_coefficients(&pert, &spec, p.nodes)?;
    let class = classify_resonance(&coeffs);
    let report = verify_hamiltonian_identities(&coeffs);
    let (reduction, reduction_error) = match p.epsilon {
        None => (None, None),
        Some(eps) => match harmonic_reduction(&coeffs, &spec, eps, p.mu2) {
            Ok((z, h)) => (
                Some(ReductionDoc {
                    a: z.a,
                    b: z.b,
                    p: z.p,
                    mu1: z.mu1,
                    mu2: z.mu2,
                    harmonic_a: h.a,
                    harmonic_c: h.c,
                    harmonic_d: h.d,
                }),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    let rows: Vec<CoefficientRow> = (0..coeffs.len())
        .map(|k| CoefficientRow {
            v: coeffs.v_grid[k],
            a0: coeffs.a0[k],
            p0: coeffs.p0[k],
            q0: coeffs.q0[k],
            a0_tilde: coeffs.a0_tilde[k],
            p0_tilde: coeffs.p0_tilde[k],
        })
        .collect();
    let doc = AverageDoc {
        meta: meta.clone(),
        resonance: ResonanceDoc {
            p: spec.p,
            q: spec.q,
            i_pq: spec.i_pq,
            j: spec.j,
            bj: spec.bj,
            bj1: spec.bj1,
        },
        b0: coeffs.b0,
        b1: coeffs.b1,
        class: class_name(class.class).to_string(),
        roots: class.roots.clone(),
        hamiltonian_identities: IdentityDoc {
            residual: report.identity_residual,
            b0: report.b0,
            b1: report.b1,
            tol: report.tol,
            passed: report.passed(),
        },
        reduction,
        reduction_error,
    };
    let mut summary = vec![
        format!(
            "resonance I = {} (p = {}, q = {}, j = {})",
            spec.i_pq, spec.p, spec.q, spec.j
        ),
        format!("class {}, B0 = {:e}, B1 = {:e}", doc.class, coeffs.b0, coeffs.b1),
    ];
    if let Some(r) = &doc.reduction {
        summary.push(format!(
            "zone model a = {}, b = {}, p = {}, mu1 = {}, mu2 = {}",
            r.a, r.b, r.p, r.mu1, r.mu2
        ));
    }
    if let Some(e) = &doc.reduction_error {
        summary.push(format!("no reduction: {e}"));
    }
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("coefficients.csv", to_csv(meta, &rows)?),
            Artifact::new("average.json", to_json(&doc)?),
        ],
        summary,
        failed: false,
    })
}

fn equilibrium_row(z: &ZoneParameters, e: &Equilibrium) -> EquilibriumRow {
    EquilibriumRow {
        mu1: z.mu1,
        mu2: z.mu2,
        p: z.p,
        a: z.a,
        b: z.b,
        label: e.label.to_string(),
        u: e.state.u,
        v: e.state.v,
        kind: e.kind.as_str().to_string(),
        delta: e.delta,
        energy: e.energy,
    }
}

fn equilibria(meta: &Meta, z: &ZoneParameters) -> anyhow::Result<Outcome> {
    let rows: Vec<EquilibriumRow> = closed_form_equilibria(z)
        .iter()
        .map(|e| equilibrium_row(z, e))
        .collect();
    let summary = rows
        .iter()
        .map(|r| format!("{:4} {:10} u = {} v = {}", r.label, r.kind, r.u, r.v))
        .collect();
    Ok(Outcome {
        artifacts: vec![Artifact::new("equilibria.csv", to_csv(meta, &rows)?)],
        summary,
        failed: false,
    })
}

fn reconnection_id(c: &ReconnectionCurve, branch: usize) -> String {
    format!("m6[{},{}]#{branch}", c.pair.0, c.pair.1)
}

/// Curve documents with ids `<tag>#<branch>`, branches numbered per tag.
fn curve_docs(diagram: &ParameterPlaneDiagram) -> Vec<CurveDoc> {
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut docs = Vec::new();
    for c in &diagram.analytic_curves {
        let tag = c.tag.as_str();
        let k = counters.entry(tag).or_default();
        docs.push(CurveDoc {
            id: format!("{tag}#{k}"),
            tag: tag.to_string(),
            pair: None,
            points: c.points.iter().map(|&(a, b)| [a, b]).collect(),
        });
        *k += 1;
    }
    docs.extend(reconnection_docs(&diagram.reconnection_curves));
    docs
}

fn reconnection_docs(curves: &[ReconnectionCurve]) -> Vec<CurveDoc> {
    curves
        .iter()
        .flat_map(|c| {
            c.branches.iter().enumerate().map(move |(k, b)| CurveDoc {
                id: reconnection_id(c, k),
                tag: "m6".to_string(),
                pair: Some([c.pair.0.to_string(), c.pair.1.to_string()]),
                points: b.iter().map(|&(x, y)| [x, y]).collect(),
            })
        })
        .collect()
}

fn curve_rows(docs: &[CurveDoc]) -> Vec<CurveRow> {
    docs.iter()
        .flat_map(|d| {
            d.points.iter().map(move |p| CurveRow {
                curve_id: d.id.clone(),
                mu1: p[0],
                mu2: p[1],
            })
        })
        .collect()
}

fn bifdiag(meta: &Meta, p: &BifdiagParams, opts: &Options) -> anyhow::Result<Outcome> {
    let mut grid = GridSpec::window(p.mu1, p.mu2);
    grid.n_mu1 = ((p.mu1.1 - p.mu1.0) * p.resolution).round().max(2.0) as usize;
    grid.n_mu2 = ((p.mu2.1 - p.mu2.0) * p.resolution).round().max(2.0) as usize;
    grid.min_component_pixels = p.min_component_pixels;
    grid.curve_samples = p.curve_samples;
    grid.validate()?;
    let rows: Vec<_> = (0..grid.n_mu2)
        .into_par_iter()
        .map(|j| signature_row(&p.base, &grid, j))
        .collect();
    let diagram = assemble_diagram(&p.base, &grid, rows)?;
    let curves = curve_docs(&diagram);
    let region_doc = |mu1, mu2, pixels, signature: String| RegionDoc {
        mu1,
        mu2,
        pixels,
        signature,
    };
    let doc = DiagramDoc {
        meta: meta.clone(),
        grid: GridDoc {
            mu1: [grid.mu1.0, grid.mu1.1],
            mu2: [grid.mu2.0, grid.mu2.1],
            n_mu1: grid.n_mu1,
            n_mu2: grid.n_mu2,
            min_component_pixels: grid.min_component_pixels,
        },
        curves: curves.clone(),
        regions: diagram
            .regions
            .iter()
            .map(|r| region_doc(r.mu1, r.mu2, r.pixels, r.signature.to_string()))
            .collect(),
        fragments: diagram
            .fragments
            .iter()
            .map(|f| region_doc(f.mu1, f.mu2, f.pixels, String::new()))
            .collect(),
    };
    let regions: Vec<RegionRow> = doc
        .regions
        .iter()
        .map(|r| RegionRow {
            mu1: r.mu1,
            mu2: r.mu2,
            pixels: r.pixels,
            signature: r.signature.clone(),
        })
        .collect();
    let mut artifacts = vec![
        Artifact::new("diagram.json", to_json(&doc)?),
        Artifact::new("curves.csv", to_csv(meta, &curve_rows(&curves))?),
        Artifact::new("regions.csv", to_csv(meta, &regions)?),
    ];
    if opts.svg {
        artifacts.push(svg_artifact(meta, "diagram.svg", svg::diagram_figure(&diagram)));
    }
    let tags: Vec<&str> = {
        let mut t: Vec<&str> = curves.iter().map(|c| c.tag.as_str()).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    Ok(Outcome {
        artifacts,
        summary: vec![
            format!("grid {} x {}", grid.n_mu1, grid.n_mu2),
            format!(
                "{} regions ({} distinct signatures), {} fragments",
                diagram.regions.len(),
                diagram.distinct_signatures(),
                diagram.fragments.len()
            ),
            format!("curves: {}", tags.join(" ")),
        ],
        failed: false,
    })
}

fn flow_orbit_rows(z: &ZoneParameters, start: (f64, f64), tau: f64, tol: f64) -> anyhow::Result<Vec<OrbitRow>> {
    let trace = integrate_orbit(
        z,
        PhaseState::new(start.0, start.1),
        (0.0, tau),
        tol,
        &Sampling::Uniform(2000),
    )
    .with_context(|| format!("orbit from ({}, {})", start.0, start.1))?;
    Ok(trace
        .points
        .iter()
        .map(|&(t, s)| OrbitRow {
            step_or_tau: t,
            u: s.u,
            v: s.normalized().v,
            v_unwrapped: s.v,
            energy: eval_hamiltonian(z, s),
        })
        .collect())
}

fn manifold_name(m: Manifold) -> &'static str {
    match m {
        Manifold::Stable => "stable",
        Manifold::Unstable => "unstable",
    }
}

fn portrait(meta: &Meta, p: &PortraitParams, opts: &Options) -> anyhow::Result<Outcome> {
    let z = &p.zone;
    let window = Window::new(p.u, p.v)?;
    let portrait = sample_phase_portrait_with(z, window, p.n_levels, p.resolution)?;

    let mut contours = Vec::new();
    for c in &portrait.contours {
        let (kind, labels) = match &c.kind {
            LevelKind::Regular => ("regular", String::new()),
            LevelKind::Separatrix(ls) => (
                "separatrix",
                ls.iter().map(Label::to_string).collect::<Vec<_>>().join(" "),
            ),
            LevelKind::Island(l) => ("island", l.to_string()),
        };
        for (k, line) in c.polylines.iter().enumerate() {
            contours.extend(line.points.iter().map(|s| ContourRow {
                level: c.level,
                kind: kind.to_string(),
                labels: labels.clone(),
                polyline: k,
                closed: line.closed,
                u: s.u,
                v: s.v,
            }));
        }
    }
    let eq_rows: Vec<EquilibriumRow> = portrait.equilibria.iter().map(|e| equilibrium_row(z, e)).collect();

    let mut separatrices = Vec::new();
    let mut fig = svg::portrait_figure(&portrait);
    if p.separatrices {
        let saddles: Vec<Equilibrium> = closed_form_equilibria(z)
            .into_iter()
            .filter(|e| e.kind == Kind::Saddle)
            .collect();
        let traced: Vec<_> = saddles
            .par_iter()
            .map(|s| trace_separatrices(z, s, &saddles, SeparatrixBudget::default()).map(|b| (s.label, b)))
            .collect::<Result<_, _>>()?;
        for (label, branches) in traced {
            for b in &branches {
                let end = match b.end {
                    BranchEnd::Saddle { label, .. } => label.to_string(),
                    BranchEnd::Budget => "budget".to_string(),
                };
                separatrices.extend(b.points.iter().map(|s| SeparatrixRow {
                    saddle: label.to_string(),
                    manifold: manifold_name(b.manifold).to_string(),
                    side: b.side,
                    end: end.clone(),
                    u: s.u,
                    v: s.v,
                }));
                fig.paths.push(Path {
                    tag: manifold_name(b.manifold).to_string(),
                    points: b.points.iter().map(|s| (s.v, s.u)).collect(),
                    closed: false,
                });
            }
        }
    }

    let orbits: Vec<Vec<OrbitRow>> = p
        .orbits
        .par_iter()
        .map(|&start| flow_orbit_rows(z, start, p.tau, p.tol))
        .collect::<anyhow::Result<_>>()?;

    let mut artifacts = vec![
        Artifact::new("contours.csv", to_csv(meta, &contours)?),
        Artifact::new("equilibria.csv", to_csv(meta, &eq_rows)?),
    ];
    if p.separatrices {
        artifacts.push(Artifact::new("separatrices.csv", to_csv(meta, &separatrices)?));
    }
    for (k, rows) in orbits.iter().enumerate() {
        artifacts.push(Artifact::new(format!("orbit_{k:03}.csv"), to_csv(meta, rows)?));
        fig.paths.push(Path {
            tag: "orbit".to_string(),
            points: rows.iter().map(|r| (r.v_unwrapped, r.u)).collect(),
            closed: false,
        });
    }
    if opts.svg {
        artifacts.push(svg_artifact(meta, "portrait.svg", fig));
    }
    let level_error = portrait
        .contours
        .iter()
        .flat_map(|c| {
            c.polylines
                .iter()
                .flat_map(|l| &l.points)
                .map(|q| (eval_hamiltonian(z, *q) - c.level).abs())
        })
        .fold(0.0, f64::max);
    Ok(Outcome {
        artifacts,
        summary: vec![
            format!(
                "{} equilibria in the window, {} contour levels ({} separatrix levels)",
                portrait.equilibria.len(),
                portrait.contours.len(),
                portrait.separatrix_levels()
            ),
            format!(
                "max |H - level| on contours {:e} (bound {:e})",
                level_error, portrait.level_error_bound
            ),
        ],
        failed: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipDoc {
    pub pair: [String; 2],
    pub mu1: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconnectDoc {
    pub meta: Meta,
    pub curves: Vec<CurveDoc>,
    pub end_markers: Vec<[f64; 2]>,
    pub skipped: Vec<SkipDoc>,
    pub max_residual: f64,
}

fn reconnect(meta: &Meta, p: &ReconnectParams) -> anyhow::Result<Outcome> {
    let n = p.n_mu1;
    let mu1_grid: Vec<f64> = (0..n)
        .map(|k| p.mu1.0 + (p.mu1.1 - p.mu1.0) * k as f64 / (n - 1) as f64)
        .collect();
    let pairs = match p.pair {
        Some(pair) => vec![pair],
        None => {
            let probe = p.base.with_mu(mu1_grid[0], 0.5 * (p.mu2.0 + p.mu2.1));
            let pairs = default_pairs(&probe);
            if pairs.is_empty() {
                bail!(
                    "no saddle pairs at mu1 = {}, mu2 = {}; set `pair` explicitly",
                    probe.mu1,
                    probe.mu2
                );
            }
            pairs
        }
    };
    let curves: Vec<ReconnectionCurve> = pairs
        .par_iter()
        .map(|&pair| trace_reconnection_curve(&p.base, &mu1_grid, p.mu2, pair))
        .collect::<Result<_, _>>()?;
    let mut max_residual = 0.0f64;
    for c in &curves {
        for &(mu1, mu2) in c.points() {
            let r = reconnection_residual(&p.base.with_mu(mu1, mu2), c.pair)?;
            max_residual = max_residual.max(r.abs());
        }
    }
    let docs = reconnection_docs(&curves);
    let doc = ReconnectDoc {
        meta: meta.clone(),
        curves: docs.clone(),
        end_markers: curves
            .iter()
            .flat_map(|c| c.end_markers.iter().map(|&(a, b)| [a, b]))
            .collect(),
        skipped: curves
            .iter()
            .flat_map(|c| {
                c.skipped.iter().map(move |(mu1, e)| SkipDoc {
                    pair: [c.pair.0.to_string(), c.pair.1.to_string()],
                    mu1: *mu1,
                    reason: e.to_string(),
                })
            })
            .collect(),
        max_residual,
    };
    let points: usize = curves.iter().map(|c| c.points().count()).sum();
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("reconnection.csv", to_csv(meta, &curve_rows(&docs))?),
            Artifact::new("reconnect.json", to_json(&doc)?),
        ],
        summary: vec![
            format!(
                "{} pairs, {points} curve points, {} slices without root",
                curves.len(),
                doc.skipped.len()
            ),
            format!("max |h1 - h2| on the curves {max_residual:e}"),
        ],
        failed: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitDoc {
    pub start: [f64; 2],
    pub file: Option<String>,
    pub rotation_number: Option<f64>,
    pub rotation_tail: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingDoc {
    pub saddle: [f64; 2],
    pub multipliers: [f64; 2],
    pub splitting: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummaryDoc {
    pub meta: Meta,
    pub orbits: Vec<OrbitDoc>,
    pub manifolds: Vec<SplittingDoc>,
}

fn map_kind_name(k: MapKind) -> &'static str {
    match k {
        MapKind::Saddle => "saddle",
        MapKind::Elliptic => "elliptic",
        MapKind::Parabolic => "parabolic",
    }
}

fn map_orbits(meta: &Meta, p: &MapOrbitsParams, seed: u64, opts: &Options) -> anyhow::Result<Outcome> {
    let spec = match p.map {
        MapKindParam::Standard => MapSpec::StandardNonmonotone { a: p.a, beta: p.beta },
        MapKindParam::Euler => MapSpec::EulerConservative {
            alpha: p.alpha,
            zone: p.zone,
        },
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(f64, f64)> = p
        .starts
        .iter()
        .copied()
        .chain((0..p.random_starts).map(|_| (rng.random_range(p.u_range.0..p.u_range.1), rng.random_range(0.0..TAU))))
        .collect();

    let results: Vec<_> = starts
        .par_iter()
        .map(|&(u, v)| {
            let start = PhaseState::new(u, v);
            let orbit = iterate_orbit(&spec, start, p.n)?;
            let rotation = if p.n >= 1000 {
                Some(rotation_number(&spec, start, p.n)?)
            } else {
                None
            };
            Ok::<_, reszone_core::Error>((orbit, rotation))
        })
        .collect();

    let map_name = |s: MapSpec| match s {
        MapSpec::StandardNonmonotone { .. } => "standard",
        MapSpec::EulerConservative { .. } => "euler",
    };
    let mut fig = Figure::new(
        &format!("{} map orbits", map_name(spec)),
        "v",
        "u",
        (0.0, TAU),
        (p.u_range.0, p.u_range.1),
    );
    let mut artifacts = Vec::new();
    let mut docs = Vec::new();
    let (mut escaped, mut u_lo, mut u_hi) = (0, p.u_range.0, p.u_range.1);
    for (k, (&(u, v), res)) in starts.iter().zip(results).enumerate() {
        match res {
            Ok((orbit, rot)) => {
                let name = format!("orbit_{k:03}.csv");
                let rows: Vec<OrbitRow> = orbit
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, m)| OrbitRow {
                        step_or_tau: i as f64,
                        u: m.u,
                        v: m.v,
                        v_unwrapped: m.v_unwrapped,
                        energy: spec.energy(m.lifted()),
                    })
                    .collect();
                for r in &rows {
                    u_lo = u_lo.min(r.u);
                    u_hi = u_hi.max(r.u);
                }
                fig.scatter
                    .push((format!("orbit{}", k % 8), rows.iter().map(|r| (r.v, r.u)).collect()));
                artifacts.push(Artifact::new(name.clone(), to_csv(meta, &rows)?));
                docs.push(OrbitDoc {
                    start: [u, v],
                    file: Some(name),
                    rotation_number: rot.map(|r| r.lift),
                    rotation_tail: rot.map(|r| r.tail_estimate),
                    error: None,
                });
            }
            Err(e) => {
                escaped += 1;
                docs.push(OrbitDoc {
                    start: [u, v],
                    file: None,
                    rotation_number: None,
                    rotation_tail: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    fig.y_range = (u_lo, u_hi);

    let mut splitting = Vec::new();
    let mut summary = vec![format!("{} orbits, {escaped} stopped early", starts.len())];
    if p.fixed_points {
        let fps = fixed_points(&spec, 0)?;
        let rows: Vec<FixedPointRow> = fps
            .iter()
            .map(|f| FixedPointRow {
                u: f.state.u,
                v: f.state.v,
                winding: f.winding,
                trace: f.trace,
                kind: map_kind_name(f.kind).to_string(),
            })
            .collect();
        for f in &fps {
            let kind = match f.kind {
                MapKind::Saddle => GlyphKind::Saddle,
                MapKind::Elliptic => GlyphKind::Center,
                MapKind::Parabolic => GlyphKind::Marker,
            };
            fig.glyphs.push(Glyph {
                kind,
                at: (f.state.normalized().v, f.state.u),
                label: format!("{} trace={}", map_kind_name(f.kind), f.trace),
            });
        }
        summary.push(format!("{} fixed points", rows.len()));
        artifacts.push(Artifact::new("fixed_points.csv", to_csv(meta, &rows)?));

        if p.manifolds {
            let manifold_opts = ManifoldOptions {
                iterations: p.manifold_iterations,
                ..ManifoldOptions::default()
            };
            let saddles: Vec<_> = fps.iter().filter(|f| f.kind == MapKind::Saddle).collect();
            let traced: Vec<_> = saddles
                .par_iter()
                .map(|f| trace_manifolds(&spec, f.state, &manifold_opts))
                .collect::<Result<_, _>>()?;
            let mut rows = Vec::new();
            for (i, m) in traced.iter().enumerate() {
                for (k, b) in m.unstable.iter().chain(&m.stable).enumerate() {
                    rows.extend(b.points.iter().zip(&b.params).map(|(s, &param)| ManifoldRow {
                        saddle: i,
                        manifold: manifold_name(b.manifold).to_string(),
                        branch: k % 2,
                        param,
                        u: s.u,
                        v: s.v,
                    }));
                    fig.paths.push(Path {
                        tag: manifold_name(b.manifold).to_string(),
                        points: b.points.iter().map(|s| (s.v, s.u)).collect(),
                        closed: false,
                    });
                }
                splitting.push(SplittingDoc {
                    saddle: [m.saddle.u, m.saddle.v],
                    multipliers: [m.multipliers.0, m.multipliers.1],
                    splitting: m.splitting,
                });
                if let Some(d) = m.splitting {
                    summary.push(format!("saddle ({}, {}): splitting {d:e}", m.saddle.u, m.saddle.v));
                }
            }
            artifacts.push(Artifact::new("manifolds.csv", to_csv(meta, &rows)?));
        }
    }
    artifacts.push(Artifact::new(
        "orbits.json",
        to_json(&MapSummaryDoc {
            meta: meta.clone(),
            orbits: docs,
            manifolds: splitting,
        })?,
    ));
    if opts.svg {
        artifacts.push(svg_artifact(meta, "orbits.svg", fig));
    }
    Ok(Outcome {
        artifacts,
        summary,
        failed: false,
    })
}
