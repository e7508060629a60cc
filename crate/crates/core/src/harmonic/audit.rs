//! Audit of the `H_B(x) <= C sqrt(x2)` height bound.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{AggregateSet, HarmonicError, StationaryField};
use crate::lattice::{DirectedEdge, Site};

#[derive(Debug, Clone, Serialize)]
pub struct HeightCase {
    pub case: usize,
    pub site: Site,
    pub value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeightBoundReport {
    /// Largest `H_B(x) / sqrt(x2)` over the suite; `0` for an empty report.
    pub c_audit: f64,
    pub per_height: BTreeMap<i32, f64>,
    /// Every per-height maximum is at most `(1 + tol)` times each maximum
    /// below it.
    pub non_increasing: bool,
    pub argmax: Option<HeightCase>,
}

/// Evaluates the limit point measure of every raised site of every suite
/// aggregate with the whole-half-plane solver.
pub fn verify_height_bound(suite: &[AggregateSet], tol: f64) -> Result<HeightBoundReport, HarmonicError> {
    if let Some(i) = suite.iter().position(|b| !b.is_floor_attached()) {
        return Err(HarmonicError::Precondition(format!(
            "suite case {i} is not attached to the floor"
        )));
    }
    let mut per_height: BTreeMap<i32, f64> = BTreeMap::new();
    let mut argmax: Option<HeightCase> = None;
    for (case, b) in suite.iter().enumerate() {
        let field = StationaryField::from_sites(b.raised())?;
        for &x in b.raised() {
            let value = field.point(x);
            let ratio = value / f64::from(x.x2).sqrt();
            let slot = per_height.entry(x.x2).or_insert(0.0);
            *slot = slot.max(ratio);
            if argmax.as_ref().is_none_or(|a| ratio > a.ratio) {
                argmax = Some(HeightCase { case, site: x, value, ratio });
            }
        }
    }
    let mut non_increasing = true;
    let mut floor = f64::INFINITY;
    for &r in per_height.values() {
        if r > (1.0 + tol) * floor {
            non_increasing = false;
        }
        floor = floor.min(r);
    }
    Ok(HeightBoundReport {
        c_audit: argmax.as_ref().map_or(0.0, |a| a.ratio),
        per_height,
        non_increasing,
        argmax,
    })
}

/// Columns of heights `1..=h_max` at the origin.
pub fn column_suite(h_max: i32) -> Vec<AggregateSet> {
    (1..=h_max).map(|h| AggregateSet::column(0, h)).collect()
}

/// Twelve small aggregates for solver cross-checks: the floor, columns of
/// heights 1, 2 and 4, four L-shapes and four two-tree forests.
pub fn calibration_suite() -> Vec<(&'static str, AggregateSet)> {
    let set = |pts: &[(i32, i32)]| AggregateSet::from_sites(pts.iter().map(|&(a, b)| Site::new(a, b)));
    vec![
        ("floor", AggregateSet::floor_only()),
        ("column-1", AggregateSet::column(0, 1)),
        ("column-2", AggregateSet::column(0, 2)),
        ("column-4", AggregateSet::column(0, 4)),
        ("l-short", set(&[(0, 1), (0, 2), (1, 2)])),
        ("l-long", set(&[(0, 1), (0, 2), (1, 2), (2, 2)])),
        ("l-tall", set(&[(0, 1), (0, 2), (0, 3), (-1, 3)])),
        ("l-low", set(&[(0, 1), (1, 1), (1, 2)])),
        ("forest-apart", set(&[(0, 1), (0, 2), (3, 1), (3, 2)])),
        ("forest-uneven", set(&[(0, 1), (0, 2), (0, 3), (2, 1)])),
        ("forest-adjacent", set(&[(0, 1), (1, 1)])),
        ("forest-tee", set(&[(0, 1), (0, 2), (-1, 2), (1, 2), (4, 1), (4, 2)])),
    ]
}

/// Up-edge of the highest raised site (rightmost on ties), or of the origin
/// for the bare floor. Always a frontier edge.
pub fn tip_edge(b: &AggregateSet) -> DirectedEdge {
    let tip = b.raised().max_by_key(|s| (s.x2, s.x1)).copied().unwrap_or(Site::ORIGIN);
    DirectedEdge {
        from: tip,
        to: Site::new(tip.x1, tip.x2 + 1),
    }
}
