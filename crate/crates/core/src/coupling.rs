//! Coupled pair `(A^n, A^{n+1})` on one event stream, with discrepancy
//! tracking and the truncation time Γ.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{schedulable, Aggregate, Decision, EngineConfig, EngineError, Recording, ThinnedState};
use crate::graphical::{EventQueue, EventStream};
use crate::harmonic::StationaryField;
use crate::lattice::{out_edges, BoxRegion, DirectedEdge, Site};
use crate::seeds::mix;

/// `max(2, ceil(ln n))`.
pub fn log_margin(n: i32) -> i32 {
    (f64::from(n).ln().ceil() as i32).max(2)
}

/// `[-n - L, n + L] x [0, L]` with `L = log_margin(n)`.
pub fn coupling_box(n: i32) -> BoxRegion {
    BoxRegion::centered_strip(n, log_margin(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct WindowId(pub usize);

#[derive(Debug, Clone)]
pub struct CoupledState {
    pub a_n: Aggregate,
    pub a_np1: Aggregate,
    pub n: i32,
    pub gamma_hit: bool,
    pub gamma_time: Option<f64>,
    /// Sites that have ever been in `V^n △ V^{n+1}`.
    pub v_d: BTreeSet<Site>,
    /// Edges that have ever been in `E^n △ E^{n+1}`.
    pub e_d: BTreeSet<DirectedEdge>,
    field_n: StationaryField,
    field_np1: StationaryField,
}

#[derive(Debug, Clone, Default)]
pub struct DiscrepancyRecord {
    /// `Δ_i`: times at which `|E_D|` reached `i`.
    pub delta_times: Vec<f64>,
    /// `|E_D|` at time 1, or at Γ when the pair froze earlier.
    pub count_at_1: usize,
    pub window_disagreement: BTreeMap<WindowId, bool>,
    /// `(time, λ^D, |E_D|)`.
    pub lambda_d_trace: Vec<(f64, f64, usize)>,
    /// Edges whose events either engine tested.
    pub events: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CouplingOptions {
    /// Record `λ^D` at t = 0 and after every new edge discrepancy.
    pub trace_lambda: bool,
}

/// Edge-class counts and the total rate of new edge discrepancies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LambdaD {
    pub total: f64,
    /// Edges in classes `E1..E7`, in order.
    pub class_counts: [usize; 7],
    /// Edges outside the seven classes that still carry rate.
    pub other: usize,
}

impl CoupledState {
    /// Rate at which new edge discrepancies appear, from both exact fields.
    pub fn lambda_d(&self) -> LambdaD {
        let (vn, vm) = (&self.a_n.v, &self.a_np1.v);
        let (en, em) = (&self.a_n.e, &self.a_np1.e);
        let edges: BTreeSet<DirectedEdge> = vn
            .union(vm)
            .flat_map(|&x| out_edges(x))
            .filter(schedulable)
            .collect();
        let mut out = LambdaD::default();
        for e in edges {
            let bits = |v: &BTreeSet<Site>, es: &BTreeSet<DirectedEdge>| {
                (v.contains(&e.from), v.contains(&e.to), es.contains(&e))
            };
            let rn = bits(vn, en);
            let rm = bits(vm, em);
            let hn = || self.field_n.edge_value(e);
            let hm = || self.field_np1.edge_value(e);
            let elig_n = rn.0 && !rn.1;
            let elig_m = rm.0 && !rm.1;
            let rate = match (elig_n, elig_m) {
                (true, true) => (hn() - hm()).abs(),
                (true, false) if !rm.2 => hn(),
                (false, true) if !rn.2 => hm(),
                _ => 0.0,
            };
            let class = match (rn, rm) {
                ((true, false, false), (true, false, false)) => Some(0),
                ((true, true, false), (true, false, false)) => Some(1),
                ((true, false, false), (false, false, false)) => Some(2),
                ((true, false, false), (false, true, false)) => Some(3),
                ((true, false, false), (true, true, false)) => Some(4),
                ((false, false, false), (true, false, false)) => Some(5),
                ((false, true, false), (true, false, false)) => Some(6),
                _ => None,
            };
            match class {
                Some(c) => out.class_counts[c] += 1,
                None if rate > 0.0 => out.other += 1,
                None => {}
            }
            out.total += rate;
        }
        out
    }
}

/// Runs the coupled pair from `[-n, n] x {0}` and `[-(n+1), n+1] x {0}` up
/// to `t_end`, freezing both at Γ.
pub fn run_coupled(
    n: i32,
    t_end: f64,
    windows: &[BoxRegion],
    cfg: &EngineConfig,
    stream: &EventStream,
    opts: CouplingOptions,
) -> Result<(CoupledState, DiscrepancyRecord), EngineError> {
    if n < 1 {
        return Err(EngineError::Config(format!("n = {n} must be positive")));
    }
    if cfg.truncation != coupling_box(n) {
        return Err(EngineError::Config(format!(
            "truncation {} differs from the coupling box {}",
            cfg.truncation,
            coupling_box(n)
        )));
    }
    run_coupled_seeds(
        n,
        &Aggregate::floor_segment(n),
        &Aggregate::floor_segment(n + 1),
        t_end,
        windows,
        cfg,
        stream,
        opts,
    )
}

/// Coupled run from arbitrary seeds.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_seeds(
    n: i32,
    seed_n: &BTreeSet<Site>,
    seed_np1: &BTreeSet<Site>,
    t_end: f64,
    windows: &[BoxRegion],
    cfg: &EngineConfig,
    stream: &EventStream,
    opts: CouplingOptions,
) -> Result<(CoupledState, DiscrepancyRecord), EngineError> {
    if !(0.0..=stream.horizon()).contains(&t_end) {
        return Err(EngineError::Config(format!("T = {t_end} outside the stream horizon")));
    }
    let rec = Recording::default();
    let mut a = ThinnedState::new(seed_n, *cfg, rec)?;
    let mut b = ThinnedState::new(seed_np1, *cfg, rec)?;
    let mut queue = EventQueue::new(*stream);
    for &s in seed_n.union(seed_np1) {
        queue.activate_site(s, 0.0, schedulable);
    }

    let symdiff: BTreeSet<Site> = seed_n.symmetric_difference(seed_np1).copied().collect();
    let mut v_d = symdiff.clone();
    let mut e_d: BTreeSet<DirectedEdge> = BTreeSet::new();
    let mut record = DiscrepancyRecord {
        window_disagreement: windows
            .iter()
            .enumerate()
            .map(|(i, w)| (WindowId(i), symdiff.iter().any(|s| w.contains(*s))))
            .collect(),
        ..DiscrepancyRecord::default()
    };

    let snapshot = |a: &ThinnedState, b: &ThinnedState, v_d: &BTreeSet<Site>, e_d: &BTreeSet<DirectedEdge>| {
        CoupledState {
            a_n: a.aggregate.clone(),
            a_np1: b.aggregate.clone(),
            n,
            gamma_hit: false,
            gamma_time: None,
            v_d: v_d.clone(),
            e_d: e_d.clone(),
            field_n: a.field().clone(),
            field_np1: b.field().clone(),
        }
    };
    if opts.trace_lambda {
        record.lambda_d_trace.push((0.0, snapshot(&a, &b, &v_d, &e_d).lambda_d().total, 0));
    }

    let mut gamma_time = None;
    while let Some(ev) = queue.pop(t_end, |e| !(a.occupies(e.to) && b.occupies(e.to))) {
        record.events += 1;
        let rate = stream.rate(&ev.edge);
        let da = a.consider(&ev, rate)?;
        let db = b.consider(&ev, rate)?;
        let acc_a = matches!(da, Decision::Accepted { .. });
        let acc_b = matches!(db, Decision::Accepted { .. });
        if !acc_a && !acc_b {
            continue;
        }
        let y = ev.edge.to;
        queue.activate_site(y, ev.time, |e| schedulable(e) && !(a.occupies(e.to) && b.occupies(e.to)));
        if acc_a != acc_b {
            if e_d.insert(ev.edge) {
                record.delta_times.push(ev.time);
            }
            v_d.insert(y);
            for (i, w) in windows.iter().enumerate() {
                if w.contains(y) {
                    record.window_disagreement.insert(WindowId(i), true);
                }
            }
            if opts.trace_lambda {
                record
                    .lambda_d_trace
                    .push((ev.time, snapshot(&a, &b, &v_d, &e_d).lambda_d().total, e_d.len()));
            }
        }
        if !cfg.truncation.contains(y) {
            gamma_time = Some(ev.time);
            break;
        }
    }
    let t_stop = gamma_time.unwrap_or(t_end);
    a.aggregate.t = t_stop;
    b.aggregate.t = t_stop;
    record.count_at_1 = record.delta_times.iter().filter(|&&t| t <= 1.0).count();
    let mut state = snapshot(&a, &b, &v_d, &e_d);
    state.gamma_hit = gamma_time.is_some();
    state.gamma_time = gamma_time;
    Ok((state, record))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub n: i32,
    pub replicas: u64,
    pub alpha: f64,
    pub threshold: f64,
    /// `|E_D|` at time 1 -> replica count.
    pub histogram: BTreeMap<usize, u64>,
    pub exceed: u64,
    pub exceed_fraction: f64,
    pub gamma_hits: u64,
}

/// Distribution of `|E^{D,n}_1|` over replicas seeded by `mix(master, i)`.
pub fn discrepancy_count_tail(
    n: i32,
    t_end: f64,
    replicas: u64,
    alpha: f64,
    cfg: &EngineConfig,
    master_seed: u64,
) -> Result<TailReport, EngineError> {
    if replicas < 100 {
        return Err(EngineError::Config(format!("need at least 100 replicas, got {replicas}")));
    }
    let runs: Vec<(usize, bool)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let stream = EventStream::new(mix(master_seed, i), t_end, cfg.c_dom)?;
            let (st, rec) = run_coupled(n, t_end, &[], cfg, &stream, CouplingOptions::default())?;
            Ok((rec.count_at_1, st.gamma_hit))
        })
        .collect::<Result<_, EngineError>>()?;
    let threshold = f64::from(n).powf(alpha);
    let mut histogram = BTreeMap::new();
    for &(c, _) in &runs {
        *histogram.entry(c).or_insert(0) += 1;
    }
    let exceed = runs.iter().filter(|r| r.0 as f64 >= threshold).count() as u64;
    Ok(TailReport {
        n,
        replicas,
        alpha,
        threshold,
        histogram,
        exceed,
        exceed_fraction: exceed as f64 / replicas as f64,
        gamma_hits: runs.iter().filter(|r| r.1).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: i32, seed: u64) -> (EngineConfig, EventStream) {
        (EngineConfig::new(coupling_box(n)), EventStream::new(seed, 1.0, 2.0).unwrap())
    }

    #[test]
    fn box_uses_rounded_up_log_with_floor_two() {
        assert_eq!(log_margin(2), 2);
        assert_eq!(log_margin(8), 3);
        assert_eq!(log_margin(32), 4);
        assert_eq!(coupling_box(8), BoxRegion::new(-11, 11, 0, 3).unwrap());
    }

    #[test]
    fn time_zero_state() {
        let (cfg, s) = setup(8, 1);
        let (st, rec) = run_coupled(8, 0.0, &[], &cfg, &s, CouplingOptions { trace_lambda: true }).unwrap();
        assert_eq!(st.v_d, [Site::new(-9, 0), Site::new(9, 0)].into());
        assert!(st.e_d.is_empty());
        assert!(rec.delta_times.is_empty());
        assert!(rec.lambda_d_trace[0].1 > 0.0);
    }

    #[test]
    fn identical_seeds_never_disagree() {
        let (cfg, s) = setup(6, 5);
        let seed = Aggregate::floor_segment(6);
        let (st, rec) = run_coupled_seeds(6, &seed, &seed, 1.0, &[cfg.truncation], &cfg, &s, CouplingOptions::default())
            .unwrap();
        assert_eq!(st.a_n.v, st.a_np1.v);
        assert!(st.v_d.is_empty() && st.e_d.is_empty());
        assert!(!rec.window_disagreement[&WindowId(0)]);
        assert_eq!(st.lambda_d().total, 0.0);
    }

    #[test]
    fn discrepancy_invariants_hold() {
        for m in 0..30 {
            let (cfg, s) = setup(8, m);
            let windows = [BoxRegion::new(-2, 2, 0, 2).unwrap(), BoxRegion::new(-5, 5, 0, 3).unwrap()];
            let (st, rec) = run_coupled(8, 1.0, &windows, &cfg, &s, CouplingOptions::default()).unwrap();
            let heads: BTreeSet<Site> = st.e_d.iter().map(|e| e.to).collect();
            let mut allowed = heads.clone();
            allowed.extend([Site::new(-9, 0), Site::new(9, 0)]);
            assert!(allowed.is_superset(&st.v_d));
            assert!(st.v_d.len() <= st.e_d.len() + 2);
            assert!(rec.delta_times.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(rec.delta_times.len(), st.e_d.len());
            if rec.window_disagreement[&WindowId(0)] {
                assert!(rec.window_disagreement[&WindowId(1)]);
            }
            if let Some(g) = st.gamma_time {
                assert!(st.a_n.v.iter().chain(&st.a_np1.v).any(|s| !cfg.truncation.contains(*s)));
                assert!(rec.delta_times.iter().all(|&t| t <= g));
            }
        }
    }

    #[test]
    fn wrong_truncation_rejected() {
        let (mut cfg, s) = setup(8, 1);
        cfg.truncation = coupling_box(9);
        assert!(matches!(
            run_coupled(8, 1.0, &[], &cfg, &s, CouplingOptions::default()),
            Err(EngineError::Config(_))
        ));
    }

    #[test]
    fn tail_needs_enough_replicas() {
        let cfg = EngineConfig::new(coupling_box(8));
        assert!(discrepancy_count_tail(8, 1.0, 10, 0.5, &cfg, 0).is_err());
    }
}
