//! Stationary harmonic measure of aggregates attached to the floor.
//!
//! Three independent routes compute the same quantity:
//! * [`solve_hitting_field`]: relaxation on a finite box, with the truncation
//!   error measured by re-solving on a box twice as wide;
//! * [`StationaryField`]: exact evaluation on the whole half-plane through the
//!   killed Green's function (used inside the growth engines);
//! * [`mc_hm_estimate`]: reversed-walk visit counting.

mod audit;
pub mod kernel;
mod mc;
mod relax;
mod stationary;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{calibration_suite, column_suite, tip_edge, verify_height_bound, HeightBoundReport, HeightCase};
pub use mc::{mc_hm_estimate, McEstimate};
pub use relax::{relax_potential, RelaxedPotential};
pub use stationary::StationaryField;

use crate::lattice::{neighbors, out_edges, BoxRegion, DirectedEdge, Site};

/// Default residual tolerance of the relaxation solver.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
/// Sweep cap per relaxation solve.
pub const DEFAULT_MAX_SWEEPS: usize = 400_000;

#[derive(Debug, Error)]
pub enum HarmonicError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("relaxation did not converge: residual {residual:.3e} after {iterations} sweeps")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("limit in N not reached within tolerance; sequence {sequence:?}")]
    LimitNotReached { sequence: Vec<(i32, f64)> },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A finite set of sites; every harmonic computation uses `sites ∪ L_0`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSet {
    pub sites: BTreeSet<Site>,
    /// Recorded for file round-trips; the floor is always part of the
    /// effective set.
    pub includes_floor: bool,
}

impl AggregateSet {
    pub fn floor_only() -> Self {
        AggregateSet {
            sites: BTreeSet::new(),
            includes_floor: true,
        }
    }

    pub fn from_sites(sites: impl IntoIterator<Item = Site>) -> Self {
        AggregateSet {
            sites: sites.into_iter().collect(),
            includes_floor: true,
        }
    }

    /// Vertical column `(x1, 1..=h)`.
    pub fn column(x1: i32, h: i32) -> Self {
        Self::from_sites((1..=h).map(|k| Site::new(x1, k)))
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        s.x2 == 0 || self.sites.contains(&s)
    }

    /// Sites strictly above the floor.
    pub fn raised(&self) -> impl Iterator<Item = &Site> {
        self.sites.iter().filter(|s| s.x2 > 0)
    }

    pub fn max_height(&self) -> i32 {
        self.sites.iter().map(|s| s.x2).max().unwrap_or(0)
    }

    /// Every raised site connects to the floor through the set.
    pub fn is_floor_attached(&self) -> bool {
        let mut seen: BTreeSet<Site> = BTreeSet::new();
        let mut queue: VecDeque<Site> = self.raised().filter(|s| s.x2 == 1).copied().collect();
        seen.extend(queue.iter().copied());
        while let Some(s) = queue.pop_front() {
            for n in neighbors(s) {
                if n.x2 > 0 && self.sites.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        self.raised().all(|s| seen.contains(s))
    }

    /// Frontier edges whose tail lies in `domain`: raised sites plus floor
    /// sites of the box, pointing at sites outside the effective set.
    pub fn frontier_edges(&self, domain: &BoxRegion) -> Vec<DirectedEdge> {
        let mut edges = BTreeSet::new();
        for &s in self.raised() {
            if domain.contains(s) {
                edges.extend(out_edges(s).filter(|e| !self.contains(e.to)));
            }
        }
        if domain.y_min == 0 {
            for x1 in domain.x_min..=domain.x_max {
                let up = Site::new(x1, 1);
                if !self.contains(up) {
                    edges.insert(DirectedEdge {
                        from: Site::new(x1, 0),
                        to: up,
                    });
                }
            }
        }
        edges.into_iter().collect()
    }

    pub fn is_frontier_edge(&self, e: &DirectedEdge) -> bool {
        self.contains(e.from) && !self.contains(e.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Relaxation on a finite box.
    ExactSolve,
    /// Killed Green's function on the whole half-plane.
    ExactKernel,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactSolve => "exact-solve",
            Method::ExactKernel => "exact-kernel",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// Edge measure of one aggregate at one `N`.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    pub values: BTreeMap<DirectedEdge, f64>,
    /// Per-edge error estimate (truncation change, or standard error).
    pub errors: BTreeMap<DirectedEdge, f64>,
    pub n: i32,
    pub domain: BoxRegion,
    /// Box the reported values were computed on (the widened one for
    /// relaxation).
    pub solve_domain: BoxRegion,
    pub method: Method,
    pub truncation_error_estimate: f64,
    pub sample_count: Option<u64>,
    /// `|absorbed - columns - frame flux|` of the reported solve.
    pub conservation_defect: f64,
}

impl HarmonicField {
    pub fn edge(&self, e: &DirectedEdge) -> f64 {
        self.values.get(e).copied().unwrap_or(0.0)
    }

    pub fn point(&self, x: Site) -> f64 {
        out_edges(x).map(|e| self.edge(&e)).sum()
    }

    pub fn outer_point(&self, y: Site) -> f64 {
        neighbors(y)
            .filter_map(|x| DirectedEdge::new(x, y))
            .map(|e| self.edge(&e))
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.values().sum()
    }

    /// Emits the harmonic report CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "edge_from_x1",
            "edge_from_x2",
            "edge_to_x1",
            "edge_to_x2",
            "N",
            "value",
            "err_est",
            "method",
        ])?;
        for (e, v) in &self.values {
            let err = self.errors.get(e).copied().unwrap_or(0.0);
            w.write_record([
                e.from.x1.to_string(),
                e.from.x2.to_string(),
                e.to.x1.to_string(),
                e.to.x2.to_string(),
                self.n.to_string(),
                v.to_string(),
                err.to_string(),
                self.method.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Starting height of the `N` schedule: `2 * (max height of B) + 4`.
pub fn default_n(b: &AggregateSet) -> i32 {
    2 * b.max_height() + 4
}

/// Box scaled with `N` around the aggregate and `anchor`:
/// `2N` of margin on each side and a ceiling at `2N`.
pub fn default_domain(b: &AggregateSet, anchor: Site, n: i32) -> BoxRegion {
    let bb = BoxRegion::bounding(b.raised().chain(std::iter::once(&anchor))).expect("anchor present");
    BoxRegion {
        x_min: bb.x_min - 2 * n,
        x_max: bb.x_max + 2 * n,
        y_min: 0,
        y_max: 2 * n,
    }
}

fn check_solve_inputs(b: &AggregateSet, n: i32, domain: &BoxRegion) -> Result<(), HarmonicError> {
    let h = b.max_height();
    if n <= h {
        return Err(HarmonicError::Precondition(format!(
            "N = {n} must exceed the aggregate height {h}"
        )));
    }
    if domain.y_min != 0 || domain.y_max < n {
        return Err(HarmonicError::Precondition(format!(
            "domain {domain} must span the floor up to L_{n}"
        )));
    }
    for &s in b.raised() {
        if s.x1 <= domain.x_min || s.x1 >= domain.x_max || s.x2 >= domain.y_max {
            return Err(HarmonicError::Precondition(format!(
                "aggregate site {s} not strictly inside domain {domain}"
            )));
        }
    }
    Ok(())
}

fn widen(domain: &BoxRegion) -> BoxRegion {
    // Symmetric, so mirror-symmetric inputs keep their symmetry.
    let pad = (domain.width() as i32 + 1) / 2;
    BoxRegion {
        x_min: domain.x_min - pad,
        x_max: domain.x_max + pad,
        ..*domain
    }
}

fn conservation_defect(b: &AggregateSet, pot: &RelaxedPotential, n: i32) -> f64 {
    let absorbed: f64 = b
        .frontier_edges(&pot.domain)
        .iter()
        .map(|e| f64::from(e.to.x2.min(n)) - pot.value(e.to))
        .sum();
    (absorbed - pot.domain.width() as f64 - pot.frame_flux()).abs()
}

/// Finite-`N` edge measure of every frontier edge in `domain`, by relaxation.
///
/// The reported values come from a second solve on a box twice as wide; the
/// change in total mass between the two solves is the truncation estimate.
pub fn solve_hitting_field(
    b: &AggregateSet,
    n: i32,
    domain: &BoxRegion,
    tol: f64,
) -> Result<HarmonicField, HarmonicError> {
    check_solve_inputs(b, n, domain)?;
    let raised: Vec<Site> = b.raised().copied().collect();
    let narrow = relax_potential(&raised, *domain, tol, DEFAULT_MAX_SWEEPS)?;
    let wide_domain = widen(domain);
    let wide = relax_potential(&raised, wide_domain, tol, DEFAULT_MAX_SWEEPS)?;

    let mut values = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let (mut sum_narrow, mut sum_wide) = (0.0, 0.0);
    for e in b.frontier_edges(domain) {
        let base = f64::from(e.to.x2.min(n));
        let vn = base - narrow.value(e.to);
        let vw = base - wide.value(e.to);
        sum_narrow += vn;
        sum_wide += vw;
        values.insert(e, vw);
        errors.insert(e, (vw - vn).abs());
    }
    Ok(HarmonicField {
        values,
        errors,
        n,
        domain: *domain,
        solve_domain: wide_domain,
        method: Method::ExactSolve,
        truncation_error_estimate: (sum_wide - sum_narrow).abs(),
        sample_count: None,
        conservation_defect: conservation_defect(b, &wide, n),
    })
}

/// `H_{B,N}(x)` by relaxation.
pub fn hm_point(b: &AggregateSet, x: Site, n: i32, domain: &BoxRegion, tol: f64) -> Result<f64, HarmonicError> {
    Ok(solve_hitting_field(b, n, domain, tol)?.point(x))
}

/// `Ĥ_{B,N}(y)` by relaxation; `y` must be an outer boundary site.
pub fn hm_outer_point(
    b: &AggregateSet,
    y: Site,
    n: i32,
    domain: &BoxRegion,
    tol: f64,
) -> Result<f64, HarmonicError> {
    if b.contains(y) || !neighbors(y).any(|x| b.contains(x)) {
        return Err(HarmonicError::Precondition(format!(
            "{y} is not on the outer boundary of the aggregate"
        )));
    }
    Ok(solve_hitting_field(b, n, domain, tol)?.outer_point(y))
}

/// Direction of a sequence of values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

impl Trend {
    pub fn of(values: &[f64]) -> Trend {
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.iter().all(|&d| d == 0.0) {
            Trend::Constant
        } else if diffs.iter().all(|&d| d >= 0.0) {
            Trend::Increasing
        } else if diffs.iter().all(|&d| d <= 0.0) {
            Trend::Decreasing
        } else {
            Trend::Mixed
        }
    }

    pub fn is_monotone(&self) -> bool {
        !matches!(self, Trend::Mixed)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeLimit {
    pub value: f64,
    pub n_used: i32,
    pub error_bound: f64,
    pub sequence: Vec<(i32, f64)>,
    pub trend: Trend,
}

/// `H_{B,N}(e)` for `N = n0, 2 n0, ...` (`levels` values), each on the default
/// box for that `N`.
pub fn hm_edge_sequence(
    b: &AggregateSet,
    e: DirectedEdge,
    n0: i32,
    levels: usize,
    solver_tol: f64,
) -> Result<Vec<(i32, f64)>, HarmonicError> {
    if !b.is_frontier_edge(&e) {
        return Err(HarmonicError::Precondition(format!("{e} is not a frontier edge")));
    }
    let mut out = Vec::with_capacity(levels);
    let mut n = n0;
    for _ in 0..levels {
        let dom = default_domain(b, e.from, n);
        let field = solve_hitting_field(b, n, &dom, solver_tol)?;
        out.push((n, field.edge(&e)));
        n *= 2;
    }
    Ok(out)
}

/// Largest `N` tried by [`hm_edge_limit`].
pub const N_CAP: i32 = 1024;

/// Doubles `N` from the default start until successive values differ by less
/// than `tol`.
pub fn hm_edge_limit(b: &AggregateSet, e: DirectedEdge, tol: f64) -> Result<EdgeLimit, HarmonicError> {
    if !b.is_frontier_edge(&e) {
        return Err(HarmonicError::Precondition(format!("{e} is not a frontier edge")));
    }
    let mut sequence: Vec<(i32, f64)> = Vec::new();
    let mut n = default_n(b);
    while n <= N_CAP {
        let dom = default_domain(b, e.from, n);
        let v = solve_hitting_field(b, n, &dom, DEFAULT_SOLVER_TOL)?.edge(&e);
        sequence.push((n, v));
        if let [.., (_, prev), (_, last)] = sequence[..] {
            let inc = (last - prev).abs();
            if inc < tol {
                let values: Vec<f64> = sequence.iter().map(|p| p.1).collect();
                return Ok(EdgeLimit {
                    value: last,
                    n_used: n,
                    error_bound: inc,
                    trend: Trend::of(&values),
                    sequence,
                });
            }
        }
        n *= 2;
    }
    Err(HarmonicError::LimitNotReached { sequence })
}

/// Field of the whole-half-plane solution over the frontier edges in `domain`.
pub fn kernel_field(b: &AggregateSet, n: i32, domain: &BoxRegion) -> Result<HarmonicField, HarmonicError> {
    let h = b.max_height();
    if n <= h {
        return Err(HarmonicError::Precondition(format!(
            "N = {n} must exceed the aggregate height {h}"
        )));
    }
    let field = StationaryField::from_sites(b.raised())?;
    let residual = field.residual();
    let mut values = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for e in b.frontier_edges(domain) {
        let v = (f64::from(e.to.x2.min(n)) - field.potential(e.to)).max(0.0);
        values.insert(e, v);
        errors.insert(e, residual);
    }
    Ok(HarmonicField {
        values,
        errors,
        n,
        domain: *domain,
        solve_domain: *domain,
        method: Method::ExactKernel,
        truncation_error_estimate: 0.0,
        sample_count: None,
        conservation_defect: 0.0,
    })
}
