//! Global picture in the `(mu1, mu2)` plane: saddle energies, reconnection
//! curves `h1 = h2`, region signatures and the assembled parameter diagram.
//!
//! A region of the parameter plane is identified by its [`RegionSignature`]:
//! the numbers of saddles and centers, whether the off-axis pair exists, the
//! order of the saddle energies and the labels of the centers. Regions are
//! found by flood fill over a grid of signatures; the analytic curves and the
//! traced reconnection curves are returned alongside for plotting.

use alloc::{collections::BTreeSet, vec, vec::Vec};
use core::fmt;

use crate::equilibria::{
    closed_form_equilibria, curve_function, local_bifurcation_curves, off_axis_cosine, CurveBranch, CurveTag,
    Equilibrium, Kind, Label,
};
use crate::error::{Error, Result};
use crate::math::PI;
use crate::zone::{eval_hamiltonian, PhaseState, ZoneParameters};

/// Saddle energies closer than this are reported as equal.
pub const ENERGY_TIE_TOL: f64 = 1e-9;
/// Minimum `|curve function|` for a signature to be well defined.
pub const CURVE_MARGIN: f64 = 1e-6;
/// Target accuracy of traced reconnection points.
pub const RECONNECTION_TOL: f64 = 1e-10;

/// Saddles of the closed-form solution, sorted by `u` (then `v`).
pub fn saddle_energy_levels(params: &ZoneParameters) -> Vec<Equilibrium> {
    let mut saddles: Vec<Equilibrium> = closed_form_equilibria(params)
        .into_iter()
        .filter(Equilibrium::is_saddle)
        .collect();
    saddles.sort_by(|x, y| x.state.u.total_cmp(&y.state.u).then(x.state.v.total_cmp(&y.state.v)));
    saddles
}

fn saddle_energy(saddles: &[Equilibrium], label: Label) -> Result<f64> {
    saddles
        .iter()
        .find(|e| e.label == label)
        .map(|e| e.energy)
        .ok_or(Error::MissingSaddle(label))
}

/// `h1 - h2` for the saddles labelled `pair.0` and `pair.1`.
pub fn reconnection_residual(params: &ZoneParameters, pair: (Label, Label)) -> Result<f64> {
    let saddles = saddle_energy_levels(params);
    Ok(saddle_energy(&saddles, pair.0)? - saddle_energy(&saddles, pair.1)?)
}

/// Saddle pairs whose energy equality is a reconnection candidate: the
/// lowest-u and highest-u on-axis saddles, and every pair once an off-axis
/// saddle is present.
pub fn default_pairs(params: &ZoneParameters) -> Vec<(Label, Label)> {
    let saddles = saddle_energy_levels(params);
    let on_axis: Vec<&Equilibrium> = saddles.iter().filter(|e| !e.label.is_off_axis()).collect();
    let mut pairs = Vec::new();
    if let (Some(lo), Some(hi)) = (on_axis.first(), on_axis.last()) {
        if lo.label != hi.label {
            pairs.push((lo.label, hi.label));
        }
    }
    if saddles.iter().any(|e| e.label.is_off_axis()) {
        for (i, x) in saddles.iter().enumerate() {
            for y in &saddles[i + 1..] {
                let pair = (x.label, y.label);
                // O3 and O4 always share their energy
                let trivial = x.label.is_off_axis() && y.label.is_off_axis();
                if !trivial && !pairs.contains(&pair) && !pairs.contains(&(pair.1, pair.0)) {
                    pairs.push(pair);
                }
            }
        }
    }
    pairs
}

/// A traced reconnection curve, possibly in several branches.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconnectionCurve {
    pub pair: (Label, Label),
    pub branches: Vec<Vec<(f64, f64)>>,
    /// Points where a branch stops before the end of the `mu1` grid, because
    /// a saddle of the pair disappears or the root leaves the bracket.
    pub end_markers: Vec<(f64, f64)>,
    /// Slices without a root, with the reason.
    pub skipped: Vec<(f64, Error)>,
}

impl ReconnectionCurve {
    pub fn points(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.branches.iter().flatten()
    }
}

const SLICE_SCAN: usize = 256;

/// Roots in `mu2` of the residual on one `mu1` slice.
fn slice_roots(
    base: &ZoneParameters,
    mu1: f64,
    bracket: (f64, f64),
    pair: (Label, Label),
) -> core::result::Result<Vec<f64>, Error> {
    let res = |mu2: f64| reconnection_residual(&base.with_mu(mu1, mu2), pair).ok();
    let n = SLICE_SCAN;
    let grid: Vec<f64> = (0..=n)
        .map(|k| bracket.0 + (bracket.1 - bracket.0) * k as f64 / n as f64)
        .collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&m| res(m)).collect();
    let mut roots = Vec::new();
    let mut any_defined = false;
    for k in 0..n {
        let (Some(a), Some(b)) = (vals[k], vals[k + 1]) else {
            continue;
        };
        any_defined = true;
        if a == 0.0 {
            roots.push(grid[k]);
            continue;
        }
        if (a > 0.0) == (b > 0.0) || b == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (grid[k], grid[k + 1]);
        let lo_pos = a > 0.0;
        let mut best = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let Some(r) = res(mid) else { break };
            if r.abs() < RECONNECTION_TOL {
                best = Some(mid);
                break;
            }
            if mid == lo || mid == hi {
                break;
            }
            if (r > 0.0) == lo_pos {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // a sign change without a small residual is a jump, not a root
        if let Some(m) = best {
            roots.push(m);
        }
    }
    if let Some(b) = vals[n] {
        if b == 0.0 {
            roots.push(grid[n]);
        }
    }
    if roots.is_empty() {
        return Err(if any_defined {
            Error::NoSignChange { mu1 }
        } else {
            Error::MissingSaddle(if res(grid[0]).is_none() { pair.0 } else { pair.1 })
        });
    }
    Ok(roots)
}

/// Traces `h1 = h2` over a grid of `mu1` values by bisection in `mu2` on each
/// slice. Roots on consecutive slices are chained into branches when they are
/// within ten grid spacings of each other.
pub fn trace_reconnection_curve(
    base: &ZoneParameters,
    mu1_grid: &[f64],
    mu2_bracket: (f64, f64),
    pair: (Label, Label),
) -> Result<ReconnectionCurve> {
    crate::equilibria::check_window(mu2_bracket.0, mu2_bracket.1, "mu2_bracket")?;
    let d_mu1 = mu1_grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let d_mu2 = (mu2_bracket.1 - mu2_bracket.0) / SLICE_SCAN as f64;
    let link = 10.0 * d_mu1.max(d_mu2);

    let mut finished: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut active: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut end_markers = Vec::new();
    let mut skipped = Vec::new();
    for &mu1 in mu1_grid {
        let roots = match slice_roots(base, mu1, mu2_bracket, pair) {
            Ok(r) => r,
            Err(e) => {
                skipped.push((mu1, e));
                Vec::new()
            }
        };
        let mut next_active = Vec::new();
        let mut used = vec![false; roots.len()];
        for mut branch in active.drain(..) {
            let last = *branch.last().expect("branches are never empty");
            let nearest = roots
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .min_by(|x, y| (x.1 - last.1).abs().total_cmp(&(y.1 - last.1).abs()));
            match nearest {
                Some((i, &m2)) if (m2 - last.1).abs() < link => {
                    used[i] = true;
                    branch.push((mu1, m2));
                    next_active.push(branch);
                }
                _ => {
                    end_markers.push(last);
                    finished.push(branch);
                }
            }
        }
        for (i, &m2) in roots.iter().enumerate() {
            if !used[i] {
                next_active.push(vec![(mu1, m2)]);
            }
        }
        active = next_active;
    }
    finished.extend(active);
    if finished.is_empty() {
        return Err(Error::NoSignChange {
            mu1: mu1_grid.first().copied().unwrap_or(f64::NAN),
        });
    }
    finished.sort_by(|x, y| x[0].0.total_cmp(&y[0].0).then(x[0].1.total_cmp(&y[0].1)));
    Ok(ReconnectionCurve {
        pair,
        branches: finished,
        end_markers,
        skipped,
    })
}

/// One entry of the saddle-energy order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedSaddle {
    pub label: Label,
    pub energy: f64,
    /// Energy equal to the next entry within [`ENERGY_TIE_TOL`].
    pub tied_with_next: bool,
}

/// Computable identity of a parameter-plane region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSignature {
    pub n_saddles: usize,
    pub n_centers: usize,
    pub has_off_axis: bool,
    /// Saddles by increasing energy.
    pub saddle_energy_order: Vec<RankedSaddle>,
    /// Labels of the centers, in label order.
    pub center_labels: Vec<Label>,
}

/// Compact, hashable form of a signature without the energy values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignatureKey {
    pub n_saddles: u8,
    pub n_centers: u8,
    pub has_off_axis: bool,
    order: [u8; 6],
    ties: u8,
    centers: u8,
}

fn label_code(l: Label) -> u8 {
    l as u8 + 1
}

impl RegionSignature {
    pub fn vortex_pair_flag(&self) -> bool {
        self.has_off_axis
    }

    pub fn key(&self) -> SignatureKey {
        let mut order = [0u8; 6];
        let mut ties = 0u8;
        for (i, s) in self.saddle_energy_order.iter().take(6).enumerate() {
            order[i] = label_code(s.label);
            if s.tied_with_next {
                ties |= 1 << i;
            }
        }
        let centers = self.center_labels.iter().fold(0u8, |m, &l| m | (1 << (l as u8)));
        SignatureKey {
            n_saddles: self.n_saddles as u8,
            n_centers: self.n_centers as u8,
            has_off_axis: self.has_off_axis,
            order,
            ties,
            centers,
        }
    }

    /// Groups of saddle labels with equal energy, lowest energy first.
    pub fn energy_groups(&self) -> Vec<Vec<Label>> {
        let mut groups: Vec<Vec<Label>> = Vec::new();
        let mut open = false;
        for s in &self.saddle_energy_order {
            if open {
                groups.last_mut().expect("open group").push(s.label);
            } else {
                groups.push(vec![s.label]);
            }
            open = s.tied_with_next;
        }
        groups
    }

    /// Signature at the point reflected by `(mu1, mu2) -> (-mu1, -mu2)`,
    /// under which `u -> -u`, `v -> v + π` and `H -> -H`.
    pub fn mirrored(&self) -> Self {
        let map = |l: Label| match l {
            Label::O1Plus => Label::O2Minus,
            Label::O1Minus => Label::O2Plus,
            Label::O2Plus => Label::O1Minus,
            Label::O2Minus => Label::O1Plus,
            Label::O3 => Label::O4,
            Label::O4 => Label::O3,
            Label::Refined => Label::Refined,
        };
        let mut order: Vec<RankedSaddle> = Vec::with_capacity(self.saddle_energy_order.len());
        let groups = self.energy_groups();
        for group in groups.iter().rev() {
            let mut g: Vec<Label> = group.iter().map(|&l| map(l)).collect();
            g.sort();
            let n = g.len();
            for (i, l) in g.into_iter().enumerate() {
                let energy = -self
                    .saddle_energy_order
                    .iter()
                    .find(|s| map(s.label) == l)
                    .map_or(0.0, |s| s.energy);
                order.push(RankedSaddle {
                    label: l,
                    energy,
                    tied_with_next: i + 1 < n,
                });
            }
        }
        let mut centers: Vec<Label> = self.center_labels.iter().map(|&l| map(l)).collect();
        centers.sort();
        Self {
            n_saddles: self.n_saddles,
            n_centers: self.n_centers,
            has_off_axis: self.has_off_axis,
            saddle_energy_order: order,
            center_labels: centers,
        }
    }
}

impl fmt::Display for RegionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "saddles={} centers={} off_axis={} order=",
            self.n_saddles, self.n_centers, self.has_off_axis
        )?;
        if self.saddle_energy_order.is_empty() {
            f.write_str("-")?;
        }
        for s in &self.saddle_energy_order {
            write!(f, "{}", s.label)?;
            if core::ptr::eq(s, self.saddle_energy_order.last().expect("nonempty")) {
                break;
            }
            f.write_str(if s.tied_with_next { "=" } else { "<" })?;
        }
        f.write_str(" center_labels=")?;
        if self.center_labels.is_empty() {
            f.write_str("-")?;
        }
        for (i, l) in self.center_labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// The local curve nearest to `(mu1, mu2)` in terms of its defining
/// function, if any is within [`CURVE_MARGIN`].
pub fn on_curve(params: &ZoneParameters) -> Option<CurveTag> {
    CurveTag::LOCAL.into_iter().find(|&tag| {
        let skip = matches!(tag, CurveTag::M5Plus | CurveTag::M5Minus) && params.a == 0.0;
        !skip && curve_function(params, tag, params.mu1, params.mu2).abs() < CURVE_MARGIN
    })
}

/// Signature assembled from the closed-form equilibria.
pub fn region_signature(params: &ZoneParameters) -> Result<RegionSignature> {
    if let Some(tag) = on_curve(params) {
        return Err(Error::OnCurve { curve: tag.as_str() });
    }
    Ok(signature_unchecked(params))
}

fn signature_unchecked(params: &ZoneParameters) -> RegionSignature {
    let eqs = closed_form_equilibria(params);
    let mut saddles: Vec<(Label, f64)> = eqs
        .iter()
        .filter(|e| e.kind == Kind::Saddle)
        .map(|e| (e.label, e.energy))
        .collect();
    saddles.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    // labels inside a tie group are sorted so the order is traversal-free
    let mut order: Vec<RankedSaddle> = Vec::with_capacity(saddles.len());
    let mut i = 0;
    while i < saddles.len() {
        let mut j = i + 1;
        while j < saddles.len() && saddles[j].1 - saddles[j - 1].1 <= ENERGY_TIE_TOL {
            j += 1;
        }
        let mut group: Vec<(Label, f64)> = saddles[i..j].to_vec();
        group.sort_by_key(|s| s.0);
        for (k, (label, energy)) in group.iter().enumerate() {
            order.push(RankedSaddle {
                label: *label,
                energy: *energy,
                tied_with_next: k + 1 < group.len(),
            });
        }
        i = j;
    }
    let mut center_labels: Vec<Label> = eqs.iter().filter(|e| e.kind == Kind::Center).map(|e| e.label).collect();
    center_labels.sort();
    RegionSignature {
        n_saddles: order.len(),
        n_centers: center_labels.len(),
        has_off_axis: eqs.iter().any(|e| e.label.is_off_axis()),
        saddle_energy_order: order,
        center_labels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconnectionType {
    /// Homoclinic loops of saddles on `v = 0` and `v = π` merge.
    MergingLoops,
    /// Separatrices of an off-axis saddle and an on-axis saddle form a
    /// triangle.
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Reconnection: only the saddle-energy order changes.
    Loops(ReconnectionType),
    /// The off-axis pair appears or disappears.
    VortexPairs,
    /// The codimension-two point where a horizontal bifurcation and a
    /// reconnection coincide.
    Codim2A,
    /// A vertical bifurcation.
    Local,
}

/// Pairs of labels whose relative energy order differs between two orders
/// over the same label set. `O4` is folded into `O3`.
pub fn swapped_pairs(before: &RegionSignature, after: &RegionSignature) -> Vec<(Label, Label)> {
    let rank = |sig: &RegionSignature| -> Vec<(Label, usize)> {
        let mut out: Vec<(Label, usize)> = Vec::new();
        for (g, group) in sig.energy_groups().iter().enumerate() {
            for &l in group {
                let l = if l == Label::O4 { Label::O3 } else { l };
                if !out.iter().any(|(x, _)| *x == l) {
                    out.push((l, g));
                }
            }
        }
        out
    };
    let (rb, ra) = (rank(before), rank(after));
    let mut pairs = Vec::new();
    for (i, &(x, gx)) in rb.iter().enumerate() {
        for &(y, gy) in &rb[i + 1..] {
            let Some(&(_, ax)) = ra.iter().find(|(l, _)| *l == x) else {
                continue;
            };
            let Some(&(_, ay)) = ra.iter().find(|(l, _)| *l == y) else {
                continue;
            };
            if gx.cmp(&gy) != ax.cmp(&ay) {
                let pair = if x <= y { (x, y) } else { (y, x) };
                pairs.push(pair);
            }
        }
    }
    pairs.sort();
    pairs.dedup();
    pairs
}

fn is_codim2(params: &ZoneParameters) -> bool {
    let on_m5 = [CurveTag::M5Plus, CurveTag::M5Minus]
        .into_iter()
        .any(|t| curve_function(params, t, params.mu1, params.mu2).abs() < CURVE_MARGIN);
    if !on_m5 || params.a == 0.0 {
        return false;
    }
    // on m5 the off-axis pair sits on an axis; rounding may push its cosine
    // just outside [-1, 1], so its position is taken directly
    let Some(c) = off_axis_cosine(params) else {
        return false;
    };
    let line = if c > 0.0 { 0.0 } else { PI };
    let o3_energy = eval_hamiltonian(params, PhaseState::new(-params.a / params.mu1, line));
    let eqs = closed_form_equilibria(params);
    let on_line: Vec<&Equilibrium> = eqs
        .iter()
        .filter(|e| !e.label.is_off_axis() && crate::math::angle_diff(e.state.v, line).abs() < 1e-9)
        .collect();
    if on_line.is_empty() {
        // the axis pair has merged into O3 and may be lost to rounding
        let merge = if line == 0.0 { CurveTag::M3 } else { CurveTag::M4 };
        return curve_function(params, merge, params.mu1, params.mu2).abs() < CURVE_MARGIN;
    }
    on_line.iter().all(|e| (e.energy - o3_energy).abs() < CURVE_MARGIN)
}

/// Scenario of the transition between two neighbouring regions, given the
/// parameters at the crossing point.
pub fn classify_transition(
    crossing: &ZoneParameters,
    before: &RegionSignature,
    after: &RegionSignature,
) -> Result<Scenario> {
    if is_codim2(crossing) {
        return Ok(Scenario::Codim2A);
    }
    if before.has_off_axis != after.has_off_axis {
        return Ok(Scenario::VortexPairs);
    }
    if before == after {
        return Err(Error::InconsistentTransition);
    }
    let same_sets = {
        let labels =
            |s: &RegionSignature| -> BTreeSet<Label> { s.saddle_energy_order.iter().map(|r| r.label).collect() };
        before.n_saddles == after.n_saddles
            && before.n_centers == after.n_centers
            && labels(before) == labels(after)
            && before.center_labels == after.center_labels
    };
    if same_sets {
        if before.key() == after.key() {
            return Err(Error::InconsistentTransition);
        }
        let pairs = swapped_pairs(before, after);
        let triangle = pairs.iter().any(|(x, y)| x.is_off_axis() || y.is_off_axis());
        return Ok(Scenario::Loops(if triangle {
            ReconnectionType::Triangle
        } else {
            ReconnectionType::MergingLoops
        }));
    }
    let ds = before.n_saddles as i64 - after.n_saddles as i64;
    let dc = before.n_centers as i64 - after.n_centers as i64;
    if ds.abs() == 1 && ds == dc {
        return Ok(Scenario::Local);
    }
    Err(Error::InconsistentTransition)
}

/// Sampling grid of the parameter diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub mu1: (f64, f64),
    pub mu2: (f64, f64),
    pub n_mu1: usize,
    pub n_mu2: usize,
    /// Components with fewer pixels are dropped as fragments.
    pub min_component_pixels: usize,
    /// Number of `mu1` samples for curve polylines.
    pub curve_samples: usize,
}

impl GridSpec {
    pub fn window(mu1: (f64, f64), mu2: (f64, f64)) -> Self {
        let res = 160.0;
        Self {
            mu1,
            mu2,
            n_mu1: libm::round((mu1.1 - mu1.0) * res).max(2.0) as usize,
            n_mu2: libm::round((mu2.1 - mu2.0) * res).max(2.0) as usize,
            min_component_pixels: 24,
            curve_samples: 601,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::equilibria::check_window(self.mu1.0, self.mu1.1, "mu1 window")?;
        crate::equilibria::check_window(self.mu2.0, self.mu2.1, "mu2 window")?;
        if self.n_mu1 < 2 || self.n_mu2 < 2 || self.curve_samples < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: alloc::string::String::from("need at least 2 samples per axis"),
            });
        }
        Ok(())
    }

    /// Cell-center coordinate of column `i`.
    pub fn mu1_at(&self, i: usize) -> f64 {
        self.mu1.0 + (self.mu1.1 - self.mu1.0) * (i as f64 + 0.5) / self.n_mu1 as f64
    }

    /// Cell-center coordinate of row `j`.
    pub fn mu2_at(&self, j: usize) -> f64 {
        self.mu2.0 + (self.mu2.1 - self.mu2.0) * (j as f64 + 0.5) / self.n_mu2 as f64
    }

    pub fn curve_grid(&self) -> Vec<f64> {
        let n = self.curve_samples;
        (0..n)
            .map(|k| self.mu1.0 + (self.mu1.1 - self.mu1.0) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Signatures of one grid row (fixed `mu2`); `None` marks pixels on a curve.
pub fn signature_row(base: &ZoneParameters, grid: &GridSpec, row: usize) -> Vec<Option<RegionSignature>> {
    let mu2 = grid.mu2_at(row);
    (0..grid.n_mu1)
        .map(|i| region_signature(&base.with_mu(grid.mu1_at(i), mu2)).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub mu1: f64,
    pub mu2: f64,
    pub pixels: usize,
    pub signature: RegionSignature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub mu1: f64,
    pub mu2: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPlaneDiagram {
    pub base: ZoneParameters,
    pub grid: GridSpec,
    pub analytic_curves: Vec<CurveBranch>,
    pub reconnection_curves: Vec<ReconnectionCurve>,
    pub regions: Vec<RegionSample>,
    /// Components below the size threshold (slivers along tangent curves).
    pub fragments: Vec<Fragment>,
}

impl ParameterPlaneDiagram {
    pub fn distinct_signatures(&self) -> usize {
        self.regions
            .iter()
            .map(|r| r.signature.key())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Connected components of equal signature (8-connectivity). Returns the
/// component id of every pixel (`u32::MAX` for unlabelled pixels) and the
/// pixel lists.
fn components(keys: &[Option<SignatureKey>], nx: usize, ny: usize) -> (Vec<u32>, Vec<Vec<usize>>) {
    let mut comp = vec![u32::MAX; keys.len()];
    let mut lists: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..keys.len() {
        let Some(key) = keys[start] else { continue };
        if comp[start] != u32::MAX {
            continue;
        }
        let id = lists.len() as u32;
        let mut members = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(k) = stack.pop() {
            members.push(k);
            let (x, y) = ((k % nx) as i64, (k / nx) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (xx, yy) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || xx < 0 || yy < 0 || xx >= nx as i64 || yy >= ny as i64 {
                        continue;
                    }
                    let n = yy as usize * nx + xx as usize;
                    if comp[n] == u32::MAX && keys[n] == Some(key) {
                        comp[n] = id;
                        stack.push(n);
                    }
                }
            }
        }
        members.sort_unstable();
        lists.push(members);
    }
    (comp, lists)
}

/// Assembles the diagram from precomputed signature rows (row `j` at
/// `grid.mu2_at(j)`), so that the rows can be computed in parallel.
pub fn assemble_diagram(
    base: &ZoneParameters,
    grid: &GridSpec,
    rows: Vec<Vec<Option<RegionSignature>>>,
) -> Result<ParameterPlaneDiagram> {
    grid.validate()?;
    let (nx, ny) = (grid.n_mu1, grid.n_mu2);
    if rows.len() != ny || rows.iter().any(|r| r.len() != nx) {
        return Err(Error::InvalidParameter {
            name: "rows",
            reason: alloc::string::String::from("row count or width does not match the grid"),
        });
    }
    let sigs: Vec<Option<RegionSignature>> = rows.into_iter().flatten().collect();
    let keys: Vec<Option<SignatureKey>> = sigs.iter().map(|s| s.as_ref().map(RegionSignature::key)).collect();
    let (_, lists) = components(&keys, nx, ny);

    let mut regions = Vec::new();
    let mut fragments = Vec::new();
    for members in &lists {
        let (cx, cy) = members
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &k| (sx + (k % nx) as f64, sy + (k / nx) as f64));
        let m = members.len() as f64;
        let (cx, cy) = (cx / m, cy / m);
        let rep = *members
            .iter()
            .min_by(|&&a, &&b| {
                let d = |k: usize| {
                    let (x, y) = ((k % nx) as f64 - cx, (k / nx) as f64 - cy);
                    x * x + y * y
                };
                d(a).total_cmp(&d(b)).then(a.cmp(&b))
            })
            .expect("components are nonempty");
        let (mu1, mu2) = (grid.mu1_at(rep % nx), grid.mu2_at(rep / nx));
        if members.len() < grid.min_component_pixels {
            fragments.push(Fragment {
                mu1,
                mu2,
                pixels: members.len(),
            });
            continue;
        }
        regions.push(RegionSample {
            mu1,
            mu2,
            pixels: members.len(),
            signature: sigs[rep].clone().expect("labelled pixel has a signature"),
        });
    }

    // reconnection pairs: neighbouring pixels whose signatures differ only in
    // the saddle-energy order
    let mut pairs: BTreeSet<(Label, Label)> = BTreeSet::new();
    for y in 0..ny {
        for x in 0..nx {
            let k = y * nx + x;
            let Some(s0) = &sigs[k] else { continue };
            for n in [(x + 1 < nx).then(|| k + 1), (y + 1 < ny).then(|| k + nx)]
                .into_iter()
                .flatten()
            {
                let Some(s1) = &sigs[n] else { continue };
                if keys[k] == keys[n] {
                    continue;
                }
                let crossing = base.with_mu(grid.mu1_at(x), grid.mu2_at(y));
                if let Ok(Scenario::Loops(_)) = classify_transition(&crossing, s0, s1) {
                    pairs.extend(swapped_pairs(s0, s1));
                }
            }
        }
    }

    let mu1_grid = grid.curve_grid();
    let mut reconnection_curves = Vec::new();
    for pair in pairs {
        if let Ok(curve) = trace_reconnection_curve(base, &mu1_grid, grid.mu2, pair) {
            reconnection_curves.push(curve);
        }
    }

    let analytic_curves = local_bifurcation_curves(base, &mu1_grid)
        .into_iter()
        .map(|mut c| {
            c.points.retain(|&(_, m2)| m2 >= grid.mu2.0 && m2 <= grid.mu2.1);
            c
        })
        .filter(|c| c.points.len() >= 2)
        .collect();

    regions.sort_by(|a, b| a.mu2.total_cmp(&b.mu2).then(a.mu1.total_cmp(&b.mu1)));
    Ok(ParameterPlaneDiagram {
        base: *base,
        grid: *grid,
        analytic_curves,
        reconnection_curves,
        regions,
        fragments,
    })
}

/// Sequential construction of the whole diagram.
pub fn build_parameter_diagram(base: &ZoneParameters, grid: &GridSpec) -> Result<ParameterPlaneDiagram> {
    grid.validate()?;
    let rows = (0..grid.n_mu2).map(|j| signature_row(base, grid, j)).collect();
    assemble_diagram(base, grid, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saddle_levels_examples() {
        let s = saddle_energy_levels(&ZoneParameters::reference(0.0, 1.0));
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].state.u, s[0].state.v), (-1.0, PI));
        assert!((s[0].energy + 11.0 / 6.0).abs() < 1e-14);
        assert_eq!((s[1].state.u, s[1].state.v), (0.0, 0.0));
        assert!((s[1].energy - 2.0).abs() < 1e-14);

        let s = saddle_energy_levels(&ZoneParameters::reference(1.0, 0.0));
        assert_eq!(s.len(), 1);
        assert!((s[0].energy + 4.0 / 3.0).abs() < 1e-14);

        // at mu1 = mu2 = 0 both axis points are degenerate
        assert!(saddle_energy_levels(&ZoneParameters::reference(0.0, 0.0)).is_empty());
    }

    #[test]
    fn residual_examples() {
        let p = ZoneParameters::reference(0.0, 0.0);
        assert!(matches!(
            reconnection_residual(&p, (Label::O1Plus, Label::O2Minus)),
            Err(Error::MissingSaddle(_))
        ));
        let p = ZoneParameters::reference(0.3, 1.5);
        let pair = (Label::O1Plus, Label::O2Minus);
        let r = reconnection_residual(&p, pair).unwrap();
        let r2 = reconnection_residual(&p.with_mu(0.3 + 1e-8, 1.5 - 1e-8), pair).unwrap();
        assert!(r != 0.0 && r.signum() == r2.signum());
        assert_eq!(default_pairs(&p), vec![(Label::O2Minus, Label::O1Plus)]);
    }

    #[test]
    fn loops_curve_at_zero_mu1() {
        // h(O1+) = 2 and h(O2-) = mu2^3 / 6 - 2 at mu1 = 0
        let base = ZoneParameters::reference(0.0, 0.0);
        let c = trace_reconnection_curve(&base, &[0.0], (2.0, 3.5), (Label::O1Plus, Label::O2Minus)).unwrap();
        let (_, m2) = c.branches[0][0];
        assert!((m2 - crate::math::cbrt(24.0)).abs() < 1e-9, "{m2}");
    }

    #[test]
    fn signature_examples() {
        let s = region_signature(&ZoneParameters::reference(1.0, 0.0)).unwrap();
        assert_eq!((s.n_saddles, s.n_centers, s.has_off_axis), (1, 1, false));
        let s = region_signature(&ZoneParameters::reference(0.0, 1.0)).unwrap();
        assert_eq!((s.n_saddles, s.n_centers, s.has_off_axis), (2, 2, false));
        let s = region_signature(&ZoneParameters::reference(2.0, 2.0)).unwrap();
        assert!(s.has_off_axis);
        assert!(matches!(
            region_signature(&ZoneParameters::reference(1.0, 2.0)),
            Err(Error::OnCurve { curve: "m3" })
        ));
    }

    #[test]
    fn off_axis_pair_is_tied() {
        let s = region_signature(&ZoneParameters::reference(2.0, 2.0)).unwrap();
        let groups = s.energy_groups();
        assert!(groups.iter().any(|g| g == &vec![Label::O3, Label::O4]), "{s}");
    }

    #[test]
    fn mirror_symmetry() {
        for &(m1, m2) in &[(0.45, 2.65), (2.16, 2.745), (0.96, 2.07), (-1.38, 2.0), (0.3, 0.7)] {
            let s = region_signature(&ZoneParameters::reference(m1, m2)).unwrap();
            let t = region_signature(&ZoneParameters::reference(-m1, -m2)).unwrap();
            assert_eq!(s.mirrored().key(), t.key(), "{s} vs {t}");
        }
    }

    #[test]
    fn transitions() {
        let sig = |m1, m2| region_signature(&ZoneParameters::reference(m1, m2)).unwrap();
        // loops: the (O1+, O2-) curve crosses mu1 = 0 at 24^(1/3)
        let c = ZoneParameters::reference(0.0, crate::math::cbrt(24.0));
        assert_eq!(
            classify_transition(&c, &sig(0.0, 2.8), &sig(0.0, 2.95)).unwrap(),
            Scenario::Loops(ReconnectionType::MergingLoops)
        );
        // vortex pairs across m5+ at mu1 = 1
        let c = ZoneParameters::reference(1.0, 2.5);
        assert_eq!(
            classify_transition(&c, &sig(1.0, 2.45), &sig(1.0, 2.55)).unwrap(),
            Scenario::VortexPairs
        );
        // vertical across m3 at mu1 = 1
        let c = ZoneParameters::reference(1.0, 2.0);
        assert_eq!(
            classify_transition(&c, &sig(1.0, 1.95), &sig(1.0, 2.05)).unwrap(),
            Scenario::Local
        );
        // point A: m3 tangent to m5+ at mu2^3 = 16, mu1 = mu2^2 / 4
        let m2 = crate::math::cbrt(16.0);
        let a = ZoneParameters::reference(m2 * m2 / 4.0, m2);
        assert_eq!(
            classify_transition(&a, &sig(1.5, 2.6), &sig(1.5, 2.45)).unwrap(),
            Scenario::Codim2A
        );
        assert!(matches!(
            classify_transition(&c, &sig(1.0, 1.95), &sig(1.0, 1.95)),
            Err(Error::InconsistentTransition)
        ));
    }
}
