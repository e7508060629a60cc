//! Per-edge Poisson clocks with uniform marks, and the interface process.
//!
//! Every directed edge owns a ChaCha8 substream selected by an injective key
//! of `(x1, x2, direction)`. Draw `2j` of that substream is the `j`-th
//! exponential gap, draw `2j + 1` the `j`-th mark, so the events of an edge do
//! not depend on which other edges were ever looked at.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{out_edges, BoxRegion, DirectedEdge, Site};

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("horizon must be finite and non-negative, got {0}")]
    Horizon(f64),
    #[error("dominating factor must be at least 1, got {0}")]
    DominatingFactor(f64),
    #[error("window [{0}, {1}] is not inside [0, horizon]")]
    Window(f64, f64),
    #[error("seed site {0} outside the truncation box")]
    SeedOutside(Site),
}

/// Shared randomness of a run: master seed, horizon and dominating factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventStream {
    master_seed: u64,
    horizon: f64,
    c_dom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub edge: DirectedEdge,
    pub time: f64,
    /// 1-based position in the edge's clock.
    pub index: u64,
    /// Uniform on `(0, 1)`.
    pub mark: f64,
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Injective in `(x1, x2, direction)` for `0 <= x2 < 2^30`.
#[inline]
pub fn edge_key(e: &DirectedEdge) -> u64 {
    debug_assert!(e.from.x2 < 1 << 30);
    (u64::from(e.from.x1 as u32) << 32) | ((e.from.x2 as u64) << 2) | e.direction().index()
}

impl EventStream {
    pub fn new(master_seed: u64, horizon: f64, c_dom: f64) -> Result<Self, StreamError> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(StreamError::Horizon(horizon));
        }
        if !(c_dom >= 1.0 && c_dom.is_finite()) {
            return Err(StreamError::DominatingFactor(c_dom));
        }
        Ok(EventStream {
            master_seed,
            horizon,
            c_dom,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn c_dom(&self) -> f64 {
        self.c_dom
    }

    /// `λ_e = C_dom · max(sqrt(x2), 1)` for `e = x -> y`.
    #[inline]
    pub fn rate(&self, e: &DirectedEdge) -> f64 {
        self.c_dom * f64::from(e.from.x2).sqrt().max(1.0)
    }

    /// Lazy iterator over every event of `e` up to the horizon.
    pub fn clock(&self, e: DirectedEdge) -> EdgeClock {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(edge_key(&e));
        EdgeClock {
            edge: e,
            rng,
            rate: self.rate(&e),
            horizon: self.horizon,
            time: 0.0,
            index: 0,
        }
    }

    /// Events of `e` with time in the closed window.
    pub fn events_on(&self, e: DirectedEdge, from: f64, to: f64) -> Result<Vec<EdgeEvent>, StreamError> {
        if !(0.0 <= from && from <= to && to <= self.horizon) {
            return Err(StreamError::Window(from, to));
        }
        if from == to {
            return Ok(Vec::new());
        }
        Ok(self
            .clock(e)
            .skip_while(|ev| ev.time < from)
            .take_while(|ev| ev.time <= to)
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct EdgeClock {
    edge: DirectedEdge,
    rng: ChaCha8Rng,
    rate: f64,
    horizon: f64,
    time: f64,
    index: u64,
}

impl Iterator for EdgeClock {
    type Item = EdgeEvent;

    fn next(&mut self) -> Option<EdgeEvent> {
        if self.time > self.horizon {
            return None;
        }
        let gap = -(-unit_open(self.rng.next_u64())).ln_1p() / self.rate;
        let mark = unit_open(self.rng.next_u64());
        self.time += gap;
        self.index += 1;
        (self.time <= self.horizon).then_some(EdgeEvent {
            edge: self.edge,
            time: self.time,
            index: self.index,
            mark,
        })
    }
}

struct Pending {
    event: EdgeEvent,
    clock: EdgeClock,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl Ord for Pending {
    // Reversed for a min-heap on (time, edge, index).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .event
            .time
            .total_cmp(&self.event.time)
            .then_with(|| other.event.edge.cmp(&self.event.edge))
            .then_with(|| other.event.index.cmp(&self.event.index))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-ordered merge of the clocks of activated edges.
pub struct EventQueue {
    stream: EventStream,
    heap: BinaryHeap<Pending>,
    active: BTreeSet<DirectedEdge>,
}

impl EventQueue {
    pub fn new(stream: EventStream) -> Self {
        EventQueue {
            stream,
            heap: BinaryHeap::new(),
            active: BTreeSet::new(),
        }
    }

    pub fn stream(&self) -> &EventStream {
        &self.stream
    }

    /// Starts delivering events of `e` strictly after `after`. Repeats are
    /// ignored.
    pub fn activate(&mut self, e: DirectedEdge, after: f64) {
        if !self.active.insert(e) {
            return;
        }
        let mut clock = self.stream.clock(e);
        if let Some(event) = clock.by_ref().find(|ev| ev.time > after) {
            self.heap.push(Pending { event, clock });
        }
    }

    pub fn activate_site(&mut self, s: Site, after: f64, keep: impl Fn(&DirectedEdge) -> bool) {
        for e in out_edges(s).filter(|e| keep(e)) {
            self.activate(e, after);
        }
    }

    /// Next event at or before `until`. Its edge stays scheduled while
    /// `retain(edge)` holds.
    pub fn pop(&mut self, until: f64, retain: impl Fn(&DirectedEdge) -> bool) -> Option<EdgeEvent> {
        if self.heap.peek()?.event.time > until {
            return None;
        }
        let Pending { event, mut clock } = self.heap.pop()?;
        if retain(&event.edge) {
            if let Some(next) = clock.next() {
                self.heap.push(Pending { event: next, clock });
            }
        }
        Some(event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceState {
    pub occupied: BTreeSet<Site>,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct InterfaceRun {
    pub state: InterfaceState,
    /// Occupation time of every site, 0 for the seed.
    pub occupied_at: BTreeMap<Site, f64>,
    pub truncation_hit: bool,
}

impl InterfaceRun {
    /// Largest Euclidean distance from `center` over occupied sites.
    pub fn radius_from(&self, center: Site) -> f64 {
        self.state
            .occupied
            .iter()
            .map(|s| f64::from(s.x1 - center.x1).hypot(f64::from(s.x2 - center.x2)))
            .fold(0.0, f64::max)
    }
}

/// Pure-growth process on `stream`: every event `x -> y` with `x` occupied
/// and `y` empty occupies `y`. Marks are ignored.
///
/// Occupying a site outside `truncation` sets the flag and stops the run at
/// that event time.
pub fn simulate_interface(
    seed_sites: &BTreeSet<Site>,
    t: f64,
    truncation: &BoxRegion,
    stream: &EventStream,
) -> Result<InterfaceRun, StreamError> {
    simulate_interface_logged(seed_sites, t, truncation, stream, |_, _| {})
}

/// As [`simulate_interface`], reporting each delivered event and whether it
/// occupied a site.
pub fn simulate_interface_logged(
    seed_sites: &BTreeSet<Site>,
    t: f64,
    truncation: &BoxRegion,
    stream: &EventStream,
    mut log: impl FnMut(&EdgeEvent, bool),
) -> Result<InterfaceRun, StreamError> {
    if let Some(s) = seed_sites.iter().find(|s| !truncation.contains(**s)) {
        return Err(StreamError::SeedOutside(*s));
    }
    if !(0.0..=stream.horizon()).contains(&t) {
        return Err(StreamError::Window(0.0, t));
    }
    let mut occupied = seed_sites.clone();
    let mut occupied_at: BTreeMap<Site, f64> = seed_sites.iter().map(|&s| (s, 0.0)).collect();
    let mut queue = EventQueue::new(*stream);
    for &s in seed_sites {
        queue.activate_site(s, 0.0, |e| !occupied.contains(&e.to));
    }
    let mut now = t;
    let mut truncation_hit = false;
    while let Some(ev) = queue.pop(t, |e| !occupied.contains(&e.to)) {
        let fresh = !occupied.contains(&ev.edge.to);
        log(&ev, fresh);
        if !fresh {
            continue;
        }
        let y = ev.edge.to;
        occupied.insert(y);
        occupied_at.insert(y, ev.time);
        if !truncation.contains(y) {
            truncation_hit = true;
            now = ev.time;
            break;
        }
        queue.activate_site(y, ev.time, |e| !occupied.contains(&e.to));
    }
    Ok(InterfaceRun {
        state: InterfaceState { occupied, t: now },
        occupied_at,
        truncation_hit,
    })
}

/// Writes an event log as CSV `(time, from_x1, from_x2, to_x1, to_x2, index, mark)`.
pub fn write_event_log<W: Write>(events: &[EdgeEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "from_x1", "from_x2", "to_x1", "to_x2", "index", "mark"])?;
    for ev in events {
        w.write_record([
            ev.time.to_string(),
            ev.edge.from.x1.to_string(),
            ev.edge.from.x2.to_string(),
            ev.edge.to.x1.to_string(),
            ev.edge.to.x2.to_string(),
            ev.index.to_string(),
            ev.mark.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
