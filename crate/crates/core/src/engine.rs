//! DLA growth engines on the half-plane.
//!
//! [`run_thinned`] thins the shared Poisson clocks of [`crate::graphical`] with
//! acceptance probability `H(e) / λ_e`, so runs from different seeds are
//! coupled event by event. [`run_kmc`] is an independent Gillespie
//! simulation of the same chain used to cross-check it in law.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::graphical::{EdgeEvent, EventQueue, EventStream, StreamError};
use crate::harmonic::{AggregateSet, HarmonicError, StationaryField};
use crate::lattice::{neighbors, out_edges, BoxRegion, DirectedEdge, Site};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error("dominating rate violated on {edge} at t = {time}: H/λ = {ratio}")]
    DominatingRateViolated { edge: DirectedEdge, ratio: f64, time: f64 },
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// When the harmonic field absorbs newly attached sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refresh {
    EveryAcceptance,
    /// Attached sites are folded in once `k` events have been tested since
    /// the last refresh. The field is stale in between.
    EveryKEvents(u32),
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    /// Largest accepted boundary residual of the harmonic solve.
    pub harmonic_tol: f64,
    pub refresh: Refresh,
    pub c_dom: f64,
    pub truncation: BoxRegion,
    /// Abort on `H/λ > 1`; otherwise count the event and accept it.
    pub abort_on_violation: bool,
}

impl EngineConfig {
    pub fn new(truncation: BoxRegion) -> Self {
        EngineConfig {
            harmonic_tol: 1e-8,
            refresh: Refresh::EveryAcceptance,
            c_dom: 2.0,
            truncation,
            abort_on_violation: true,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.c_dom.is_nan() || self.c_dom < 1.0 {
            return Err(EngineError::Config(format!("C_dom = {} must be at least 1", self.c_dom)));
        }
        if self.harmonic_tol.is_nan() || self.harmonic_tol <= 0.0 {
            return Err(EngineError::Config("harmonic_tol must be positive".into()));
        }
        if self.refresh == Refresh::EveryKEvents(0) {
            return Err(EngineError::Config("refresh interval must be positive".into()));
        }
        Ok(())
    }
}

/// DLA state `A_t = (V_t, E_t)`: a forest rooted in the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub v: BTreeSet<Site>,
    pub e: BTreeSet<DirectedEdge>,
    pub t: f64,
    pub parent: BTreeMap<Site, Site>,
    pub seed: BTreeSet<Site>,
}

impl Aggregate {
    /// Accepts floor segments and forests whose raised sites reach the floor.
    pub fn from_seed(seed: &BTreeSet<Site>) -> Result<Self, EngineError> {
        if seed.is_empty() {
            return Err(EngineError::InvalidSeed("empty seed".into()));
        }
        if !AggregateSet::from_sites(seed.iter().copied()).is_floor_attached() {
            return Err(EngineError::InvalidSeed("raised seed sites must connect to the floor".into()));
        }
        Ok(Aggregate {
            v: seed.clone(),
            e: BTreeSet::new(),
            t: 0.0,
            parent: BTreeMap::new(),
            seed: seed.clone(),
        })
    }

    /// Seed `[-n, n] x {0}`.
    pub fn floor_segment(n: i32) -> BTreeSet<Site> {
        (-n..=n).map(|x| Site::new(x, 0)).collect()
    }

    fn attach(&mut self, e: DirectedEdge) {
        self.v.insert(e.to);
        self.e.insert(e);
        self.parent.insert(e.to, e.from);
    }

    pub fn max_height(&self) -> i32 {
        self.v.iter().map(|s| s.x2).max().unwrap_or(0)
    }

    pub fn as_set(&self) -> AggregateSet {
        AggregateSet::from_sites(self.v.iter().copied())
    }

    /// Forest invariants: one incoming edge per non-seed site, from an
    /// occupied site, and `|E| = |V| - |V_0|`.
    pub fn check_forest(&self) -> Result<(), String> {
        if self.e.len() + self.seed.len() != self.v.len() {
            return Err(format!(
                "|E| = {} but |V| - |V0| = {}",
                self.e.len(),
                self.v.len() - self.seed.len()
            ));
        }
        let mut incoming: BTreeMap<Site, usize> = BTreeMap::new();
        for e in &self.e {
            if !self.v.contains(&e.from) || !self.v.contains(&e.to) {
                return Err(format!("edge {e} leaves the vertex set"));
            }
            *incoming.entry(e.to).or_default() += 1;
        }
        for s in &self.v {
            let want = usize::from(!self.seed.contains(s));
            if incoming.get(s).copied().unwrap_or(0) != want {
                return Err(format!("site {s} has the wrong number of incoming edges"));
            }
            if want == 1 && self.parent.get(s).is_none_or(|p| !self.e.contains(&DirectedEdge { from: *p, to: *s })) {
                return Err(format!("parent of {s} disagrees with the edges"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// `x ∉ V` or `y ∈ V`.
    Skipped,
    Rejected { prob: f64 },
    Accepted { prob: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub event_time: f64,
    pub edge: DirectedEdge,
    pub accepted: bool,
    pub prob: f64,
    pub recompute_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub events: u64,
    pub skipped: u64,
    pub tested: u64,
    pub accepted: u64,
    /// Events with `H/λ > 1`.
    pub violations: u64,
    pub max_ratio: f64,
    pub recomputes: u64,
    pub max_height: i32,
    pub truncation_hit: bool,
    /// Boundary residual of the final harmonic field.
    pub residual: f64,
    /// Edges whose events were tested against the field.
    pub consulted: BTreeSet<DirectedEdge>,
    pub rows: Vec<DiagRow>,
}

/// Options for optional bookkeeping.
#[derive(Debug, Clone, Copy, Default)]
pub struct Recording {
    pub consulted: bool,
    pub rows: bool,
    pub timing: bool,
}

/// One thinned aggregate with its harmonic field.
pub struct ThinnedState {
    pub aggregate: Aggregate,
    field: StationaryField,
    pending: Vec<Site>,
    since_refresh: u32,
    cfg: EngineConfig,
    recording: Recording,
    pub diag: Diagnostics,
}

impl ThinnedState {
    pub fn new(seed: &BTreeSet<Site>, cfg: EngineConfig, recording: Recording) -> Result<Self, EngineError> {
        cfg.validate()?;
        if let Some(s) = seed.iter().find(|s| !cfg.truncation.contains(**s)) {
            return Err(EngineError::InvalidSeed(format!("{s} outside truncation {}", cfg.truncation)));
        }
        let aggregate = Aggregate::from_seed(seed)?;
        let field = StationaryField::from_sites(aggregate.v.iter())?;
        let max_height = aggregate.max_height();
        Ok(ThinnedState {
            aggregate,
            field,
            pending: Vec::new(),
            since_refresh: 0,
            cfg,
            recording,
            diag: Diagnostics {
                max_height,
                ..Diagnostics::default()
            },
        })
    }

    pub fn field(&self) -> &StationaryField {
        &self.field
    }

    #[inline]
    pub fn occupies(&self, s: Site) -> bool {
        self.aggregate.v.contains(&s)
    }

    fn refresh(&mut self) -> Result<Option<f64>, EngineError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let start = self.recording.timing.then(Instant::now);
        for s in std::mem::take(&mut self.pending) {
            self.field.insert(s)?;
        }
        self.diag.recomputes += 1;
        self.since_refresh = 0;
        Ok(start.map(|t| t.elapsed().as_secs_f64() * 1e3))
    }

    /// Applies the thinning rule to one event.
    pub fn consider(&mut self, ev: &EdgeEvent, rate: f64) -> Result<Decision, EngineError> {
        self.diag.events += 1;
        let e = ev.edge;
        if !self.occupies(e.from) || self.occupies(e.to) {
            self.diag.skipped += 1;
            return Ok(Decision::Skipped);
        }
        let mut recompute_ms = None;
        if let Refresh::EveryKEvents(k) = self.cfg.refresh {
            if self.since_refresh >= k {
                recompute_ms = self.refresh()?;
            }
            self.since_refresh += 1;
        }
        self.diag.tested += 1;
        if self.recording.consulted {
            self.diag.consulted.insert(e);
        }
        let prob = self.field.edge_value(e) / rate;
        self.diag.max_ratio = self.diag.max_ratio.max(prob);
        if prob > 1.0 {
            self.diag.violations += 1;
            if self.cfg.abort_on_violation {
                return Err(EngineError::DominatingRateViolated {
                    edge: e,
                    ratio: prob,
                    time: ev.time,
                });
            }
        }
        let accepted = ev.mark <= prob;
        if accepted {
            self.aggregate.attach(e);
            self.diag.accepted += 1;
            self.diag.max_height = self.diag.max_height.max(e.to.x2);
            self.pending.push(e.to);
            if self.cfg.refresh == Refresh::EveryAcceptance {
                recompute_ms = self.refresh()?;
            }
        }
        if self.recording.rows {
            self.diag.rows.push(DiagRow {
                event_time: ev.time,
                edge: e,
                accepted,
                prob,
                recompute_ms,
            });
        }
        Ok(if accepted {
            Decision::Accepted { prob }
        } else {
            Decision::Rejected { prob }
        })
    }

    fn finish(&mut self, t: f64) -> Result<(), EngineError> {
        self.refresh()?;
        self.aggregate.t = t;
        self.diag.residual = self.field.residual();
        if self.diag.residual > self.cfg.harmonic_tol {
            return Err(HarmonicError::Numerical(format!(
                "harmonic boundary residual {:.3e} above tolerance",
                self.diag.residual
            ))
            .into());
        }
        Ok(())
    }
}

/// Edges worth scheduling out of a newly occupied site: births onto the
/// floor carry no harmonic mass.
#[inline]
pub fn schedulable(e: &DirectedEdge) -> bool {
    e.to.x2 > 0
}

#[derive(Debug, Clone)]
pub struct ThinnedRun {
    pub aggregate: Aggregate,
    pub diagnostics: Diagnostics,
}

/// Thinned DLA on `stream` up to `t_end`.
pub fn run_thinned(
    seed: &BTreeSet<Site>,
    t_end: f64,
    cfg: &EngineConfig,
    stream: &EventStream,
) -> Result<ThinnedRun, EngineError> {
    run_thinned_observed(seed, t_end, cfg, stream, Recording::default(), |_, _, _| {})
}

/// As [`run_thinned`], calling `observe(event, decision, state)` after each
/// delivered event.
pub fn run_thinned_observed(
    seed: &BTreeSet<Site>,
    t_end: f64,
    cfg: &EngineConfig,
    stream: &EventStream,
    recording: Recording,
    mut observe: impl FnMut(&EdgeEvent, Decision, &ThinnedState),
) -> Result<ThinnedRun, EngineError> {
    if !(0.0..=stream.horizon()).contains(&t_end) {
        return Err(EngineError::Config(format!(
            "t_end = {t_end} outside the stream horizon {}",
            stream.horizon()
        )));
    }
    if (stream.c_dom() - cfg.c_dom).abs() > 0.0 {
        return Err(EngineError::Config("stream and engine disagree on C_dom".into()));
    }
    let mut state = ThinnedState::new(seed, *cfg, recording)?;
    let mut queue = EventQueue::new(*stream);
    for &s in seed {
        queue.activate_site(s, 0.0, |e| schedulable(e) && !state.occupies(e.to));
    }
    let mut t = t_end;
    while let Some(ev) = queue.pop(t_end, |e| !state.occupies(e.to)) {
        let d = state.consider(&ev, stream.rate(&ev.edge))?;
        observe(&ev, d, &state);
        if let Decision::Accepted { .. } = d {
            let y = ev.edge.to;
            if !cfg.truncation.contains(y) {
                state.diag.truncation_hit = true;
                t = ev.time;
                break;
            }
            queue.activate_site(y, ev.time, |e| schedulable(e) && !state.occupies(e.to));
        }
    }
    state.finish(t)?;
    Ok(ThinnedRun {
        aggregate: state.aggregate,
        diagnostics: state.diag,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KmcDiagnostics {
    pub steps: u64,
    /// Total rate vanished.
    pub halted_empty: bool,
    pub truncation_hit: bool,
    pub max_height: i32,
    /// Attachment order with times.
    pub attachments: Vec<(f64, DirectedEdge)>,
}

#[derive(Debug, Clone)]
pub struct KmcRun {
    pub aggregate: Aggregate,
    pub diagnostics: KmcDiagnostics,
}

/// Gillespie simulation with rate `H(e)` on every frontier edge.
pub fn run_kmc<R: Rng + ?Sized>(
    seed: &BTreeSet<Site>,
    t_end: f64,
    cfg: &EngineConfig,
    rng: &mut R,
) -> Result<KmcRun, EngineError> {
    cfg.validate()?;
    if let Some(s) = seed.iter().find(|s| !cfg.truncation.contains(**s)) {
        return Err(EngineError::InvalidSeed(format!("{s} outside truncation {}", cfg.truncation)));
    }
    let mut agg = Aggregate::from_seed(seed)?;
    let mut field = StationaryField::from_sites(agg.v.iter())?;
    let mut diag = KmcDiagnostics {
        max_height: agg.max_height(),
        ..KmcDiagnostics::default()
    };
    let mut now = 0.0;
    loop {
        let mut edges: Vec<(DirectedEdge, f64)> = Vec::new();
        let heads: BTreeSet<Site> = agg
            .v
            .iter()
            .flat_map(|&x| neighbors(x))
            .filter(|y| y.x2 > 0 && !agg.v.contains(y))
            .collect();
        for y in heads {
            let psi = field.outer_density(y);
            if psi > 0.0 {
                for x in neighbors(y).filter(|x| agg.v.contains(x)) {
                    edges.push((DirectedEdge { from: x, to: y }, psi));
                }
            }
        }
        let total: f64 = edges.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            diag.halted_empty = true;
            break;
        }
        let u: f64 = rng.random();
        let dt = -(-u).ln_1p() / total;
        if now + dt > t_end {
            now = t_end;
            break;
        }
        now += dt;
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = edges[edges.len() - 1].0;
        for &(e, w) in &edges {
            if pick < w {
                chosen = e;
                break;
            }
            pick -= w;
        }
        agg.attach(chosen);
        field.insert(chosen.to)?;
        diag.steps += 1;
        diag.max_height = diag.max_height.max(chosen.to.x2);
        diag.attachments.push((now, chosen));
        if !cfg.truncation.contains(chosen.to) {
            diag.truncation_hit = true;
            break;
        }
    }
    agg.t = now;
    Ok(KmcRun {
        aggregate: agg,
        diagnostics: diag,
    })
}

/// Frontier edges out of `v` with their exact rates.
pub fn frontier_rates(v: &BTreeSet<Site>, field: &StationaryField) -> BTreeMap<DirectedEdge, f64> {
    v.iter()
        .flat_map(|&x| out_edges(x))
        .filter(|e| schedulable(e) && !v.contains(&e.to))
        .map(|e| (e, field.outer_density(e.to)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::simulate_interface;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn cfg(n: i32) -> EngineConfig {
        EngineConfig::new(BoxRegion::centered_strip(n, 6))
    }

    #[test]
    fn zero_time_returns_seed() {
        let seed = Aggregate::floor_segment(3);
        let s = EventStream::new(1, 1.0, 2.0).unwrap();
        let run = run_thinned(&seed, 0.0, &cfg(3), &s).unwrap();
        assert_eq!(run.aggregate.v, seed);
        assert!(run.aggregate.e.is_empty());
    }

    #[test]
    fn thinned_run_is_deterministic_and_a_forest() {
        let seed = Aggregate::floor_segment(6);
        let s = EventStream::new(17, 1.0, 2.0).unwrap();
        let a = run_thinned(&seed, 1.0, &cfg(6), &s).unwrap();
        let b = run_thinned(&seed, 1.0, &cfg(6), &s).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        a.aggregate.check_forest().unwrap();
        assert_eq!(a.diagnostics.violations, 0);
        assert!(a.diagnostics.accepted > 0);
    }

    #[test]
    fn thinned_stays_inside_interface() {
        let seed = Aggregate::floor_segment(5);
        let c = cfg(5);
        for m in 0..20 {
            let s = EventStream::new(m, 1.0, 2.0).unwrap();
            let dla = run_thinned(&seed, 1.0, &c, &s).unwrap();
            let int = simulate_interface(&seed, 1.0, &c.truncation, &s).unwrap();
            for site in dla.aggregate.parent.keys() {
                assert!(int.state.occupied.contains(site) || int.truncation_hit);
            }
        }
    }

    #[test]
    fn small_dominating_factor_is_reported() {
        // A lone unit column has tip mass ~2.75, beyond C_dom = 1 on its top edge.
        let seed: BTreeSet<Site> = [Site::new(0, 0), Site::new(0, 1)].into();
        let mut c = cfg(2);
        c.c_dom = 1.0;
        let s = EventStream::new(2, 5.0, 1.0).unwrap();
        let err = run_thinned(&seed, 5.0, &c, &s);
        assert!(matches!(err, Err(EngineError::DominatingRateViolated { .. })));
        c.abort_on_violation = false;
        let run = run_thinned(&seed, 5.0, &c, &s).unwrap();
        assert!(run.diagnostics.violations > 0);
    }

    #[test]
    fn stale_refresh_is_flushed_at_the_end() {
        let seed = Aggregate::floor_segment(4);
        let mut c = cfg(4);
        c.refresh = Refresh::EveryKEvents(5);
        let s = EventStream::new(23, 1.0, 2.0).unwrap();
        let run = run_thinned(&seed, 1.0, &c, &s).unwrap();
        run.aggregate.check_forest().unwrap();
    }

    #[test]
    fn kmc_halts_on_empty_frontier_and_grows_otherwise() {
        let seed = Aggregate::floor_segment(2);
        let mut rng = SmallRng::seed_from_u64(3);
        let run = run_kmc(&seed, 1.0, &cfg(2), &mut rng).unwrap();
        run.aggregate.check_forest().unwrap();
        assert!(run.diagnostics.steps > 0);
        let c = cfg(2);
        let bad = run_kmc(&BTreeSet::new(), 1.0, &c, &mut rng);
        assert!(matches!(bad, Err(EngineError::InvalidSeed(_))));
    }

    #[test]
    fn floor_segment_first_rates_are_unit() {
        let seed = Aggregate::floor_segment(2);
        let field = StationaryField::from_sites(seed.iter()).unwrap();
        let rates = frontier_rates(&seed, &field);
        assert_eq!(rates.len(), 5);
        assert!(rates.values().all(|&r| r == 1.0));
    }

    #[test]
    fn rejects_detached_seed() {
        let seed: BTreeSet<Site> = [Site::new(0, 2)].into();
        assert!(matches!(Aggregate::from_seed(&seed), Err(EngineError::InvalidSeed(_))));
    }
}
