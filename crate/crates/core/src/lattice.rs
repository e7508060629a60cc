//! Geometry of the upper half-plane lattice and simple random walks on it.
//!
//! A [`Site`] is a point `(x1, x2)` of `Z x Z_{>=0}`; the floor `L_0` is the
//! line `x2 = 0`. Lines `L_n` are never materialized, only tested by height.

use std::cmp::Ordering;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// A lattice site of the upper half-plane.
///
/// Ordering is canonical `(x2, x1)`: row by row from the floor upwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x1: i32,
    pub x2: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { x1: 0, x2: 0 };

    /// Panics if `x2 < 0`.
    #[inline]
    pub const fn new(x1: i32, x2: i32) -> Self {
        assert!(x2 >= 0, "site below the floor");
        Site { x1, x2 }
    }

    pub fn try_new(x1: i32, x2: i32) -> Option<Self> {
        (x2 >= 0).then_some(Site { x1, x2 })
    }

    #[inline]
    pub fn is_floor(self) -> bool {
        self.x2 == 0
    }

    /// ℓ1 norm.
    #[inline]
    pub fn norm1(self) -> i64 {
        i64::from(self.x1).abs() + i64::from(self.x2)
    }

    /// Euclidean norm.
    #[inline]
    pub fn norm2(self) -> f64 {
        f64::from(self.x1).hypot(f64::from(self.x2))
    }

    #[inline]
    pub fn l1_distance(self, other: Site) -> i64 {
        (i64::from(self.x1) - i64::from(other.x1)).abs()
            + (i64::from(self.x2) - i64::from(other.x2)).abs()
    }

    /// Neighbour in `dir`, or `None` when it would fall below the floor.
    #[inline]
    pub fn step(self, dir: Direction) -> Option<Site> {
        let (dx, dy) = dir.offset();
        Site::try_new(self.x1 + dx, self.x2 + dy)
    }

    pub fn translated(self, dx1: i32) -> Site {
        Site { x1: self.x1 + dx1, x2: self.x2 }
    }

    pub fn mirrored(self) -> Site {
        Site { x1: -self.x1, x2: self.x2 }
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.x2, self.x1).cmp(&(other.x2, other.x1))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

/// The four lattice directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Left, Direction::Up, Direction::Down];

    #[inline]
    pub const fn offset(self) -> (i32, i32) {
        match self {
            Direction::Right => (1, 0),
            Direction::Left => (-1, 0),
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
        }
    }

    #[inline]
    pub const fn index(self) -> u64 {
        match self {
            Direction::Right => 0,
            Direction::Left => 1,
            Direction::Up => 2,
            Direction::Down => 3,
        }
    }

    fn between(from: Site, to: Site) -> Option<Direction> {
        match (to.x1 - from.x1, to.x2 - from.x2) {
            (1, 0) => Some(Direction::Right),
            (-1, 0) => Some(Direction::Left),
            (0, 1) => Some(Direction::Up),
            (0, -1) => Some(Direction::Down),
            _ => None,
        }
    }
}

/// A directed nearest-neighbour edge `from -> to` inside the half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: Site,
    pub to: Site,
}

impl DirectedEdge {
    /// Returns `None` unless the endpoints are lattice neighbours.
    pub fn new(from: Site, to: Site) -> Option<Self> {
        Direction::between(from, to).map(|_| DirectedEdge { from, to })
    }

    pub fn from_dir(from: Site, dir: Direction) -> Option<Self> {
        from.step(dir).map(|to| DirectedEdge { from, to })
    }

    pub fn direction(&self) -> Direction {
        Direction::between(self.from, self.to).expect("edge endpoints are neighbours")
    }

    pub fn reversed(&self) -> DirectedEdge {
        DirectedEdge { from: self.to, to: self.from }
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Lattice neighbours of `s` that lie in the half-plane (3 on the floor, 4 above).
pub fn neighbors(s: Site) -> impl Iterator<Item = Site> {
    Direction::ALL.into_iter().filter_map(move |d| s.step(d))
}

/// Out-edges of `s` that stay in the half-plane.
pub fn out_edges(s: Site) -> impl Iterator<Item = DirectedEdge> {
    Direction::ALL
        .into_iter()
        .filter_map(move |d| DirectedEdge::from_dir(s, d))
}

/// Axis-aligned closed box `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x_min: i32,
    pub x_max: i32,
    pub y_min: i32,
    pub y_max: i32,
}

impl BoxRegion {
    pub fn new(x_min: i32, x_max: i32, y_min: i32, y_max: i32) -> Option<Self> {
        (x_min <= x_max && 0 <= y_min && y_min <= y_max).then_some(BoxRegion {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// A box so large no walk of realistic length leaves it.
    pub const fn unbounded() -> Self {
        BoxRegion {
            x_min: -(1 << 30),
            x_max: 1 << 30,
            y_min: 0,
            y_max: 1 << 30,
        }
    }

    /// `[-n-m, n+m] x [0, m]`.
    pub fn centered_strip(n: i32, margin: i32) -> Self {
        BoxRegion {
            x_min: -n - margin,
            x_max: n + margin,
            y_min: 0,
            y_max: margin,
        }
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        self.x_min <= s.x1 && s.x1 <= self.x_max && self.y_min <= s.x2 && s.x2 <= self.y_max
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.x_min <= other.x_min
            && other.x_max <= self.x_max
            && self.y_min <= other.y_min
            && other.y_max <= self.y_max
    }

    pub fn width(&self) -> i64 {
        i64::from(self.x_max) - i64::from(self.x_min) + 1
    }

    pub fn height(&self) -> i64 {
        i64::from(self.y_max) - i64::from(self.y_min) + 1
    }

    pub fn translated(&self, dx1: i32) -> BoxRegion {
        BoxRegion {
            x_min: self.x_min + dx1,
            x_max: self.x_max + dx1,
            ..*self
        }
    }

    pub fn mirrored(&self) -> BoxRegion {
        BoxRegion {
            x_min: -self.x_max,
            x_max: -self.x_min,
            ..*self
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (self.y_min..=self.y_max)
            .flat_map(move |y| (self.x_min..=self.x_max).map(move |x| Site { x1: x, x2: y }))
    }

    /// Smallest box containing every site, or `None` for an empty input.
    pub fn bounding<'a>(sites: impl IntoIterator<Item = &'a Site>) -> Option<BoxRegion> {
        let mut it = sites.into_iter();
        let first = it.next()?;
        let mut b = BoxRegion {
            x_min: first.x1,
            x_max: first.x1,
            y_min: first.x2,
            y_max: first.x2,
        };
        for s in it {
            b.x_min = b.x_min.min(s.x1);
            b.x_max = b.x_max.max(s.x1);
            b.y_min = b.y_min.min(s.x2);
            b.y_max = b.y_max.max(s.x2);
        }
        Some(b)
    }
}

impl fmt::Display for BoxRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{}]x[{},{}]",
            self.x_min, self.x_max, self.y_min, self.y_max
        )
    }
}

/// Whether the starting site itself may count as a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitTime {
    /// `min{n >= 0 : S_n in A}`
    Inclusive,
    /// `min{n >= 1 : S_n in A}`
    Strict,
}

/// Default per-walk step cap.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy)]
pub struct WalkSpec {
    pub hit_time: HitTime,
    pub step_budget: u64,
}

impl Default for WalkSpec {
    fn default() -> Self {
        WalkSpec {
            hit_time: HitTime::Inclusive,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOutcome {
    pub hit_site: Site,
    /// Equals `hit_site` when the walk was absorbed at time 0.
    pub previous_site: Site,
    pub steps: u64,
    pub visits_counted: u64,
}

/// How a walk ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkEnd {
    Absorbed(WalkOutcome),
    /// Left the domain through `exit_site` (outside the box).
    Lost {
        exit_site: Site,
        steps: u64,
        visits_counted: u64,
    },
    BudgetExhausted {
        position: Site,
        steps: u64,
        visits_counted: u64,
    },
}

impl WalkEnd {
    pub fn absorbed(&self) -> Option<&WalkOutcome> {
        match self {
            WalkEnd::Absorbed(o) => Some(o),
            _ => None,
        }
    }

    pub fn visits_counted(&self) -> u64 {
        match *self {
            WalkEnd::Absorbed(o) => o.visits_counted,
            WalkEnd::Lost { visits_counted, .. } | WalkEnd::BudgetExhausted { visits_counted, .. } => {
                visits_counted
            }
        }
    }
}

/// Two random bits per step, 32 steps per 64-bit draw.
pub struct StepSource<'a, R: RngCore + ?Sized> {
    rng: &'a mut R,
    bits: u64,
    left: u32,
}

impl<'a, R: RngCore + ?Sized> StepSource<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        StepSource { rng, bits: 0, left: 0 }
    }

    #[inline]
    pub fn next_offset(&mut self) -> (i32, i32) {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 32;
        }
        let d = (self.bits & 3) as usize;
        self.bits >>= 2;
        self.left -= 1;
        const OFFSETS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        OFFSETS[d]
    }
}

/// Simple random walk from `start` until it enters `absorbing`, leaves
/// `domain`, or spends its step budget.
///
/// `counting` marks sites whose visits are tallied strictly before absorption
/// (time 0 included). Every absorbing set used with this walk must contain the
/// floor, so a step below `L_0` is a misuse and panics.
pub fn run_walk<R, A, C>(
    start: Site,
    absorbing: A,
    domain: &BoxRegion,
    counting: Option<C>,
    spec: WalkSpec,
    rng: &mut R,
) -> WalkEnd
where
    R: RngCore + ?Sized,
    A: Fn(Site) -> bool,
    C: Fn(Site) -> bool,
{
    debug_assert!(domain.contains(start), "walk must start inside its domain");
    if spec.hit_time == HitTime::Inclusive && absorbing(start) {
        return WalkEnd::Absorbed(WalkOutcome {
            hit_site: start,
            previous_site: start,
            steps: 0,
            visits_counted: 0,
        });
    }
    let mut steps = StepSource::new(rng);
    let mut pos = start;
    let mut n: u64 = 0;
    let mut visits: u64 = 0;
    loop {
        if let Some(c) = &counting {
            if c(pos) {
                visits += 1;
            }
        }
        if n >= spec.step_budget {
            return WalkEnd::BudgetExhausted {
                position: pos,
                steps: n,
                visits_counted: visits,
            };
        }
        let (dx, dy) = steps.next_offset();
        let next_x2 = pos.x2 + dy;
        assert!(
            next_x2 >= 0,
            "walk stepped below the floor from {pos}; absorbing set must contain L_0"
        );
        let next = Site {
            x1: pos.x1 + dx,
            x2: next_x2,
        };
        n += 1;
        if !domain.contains(next) {
            return WalkEnd::Lost {
                exit_site: next,
                steps: n,
                visits_counted: visits,
            };
        }
        if absorbing(next) {
            return WalkEnd::Absorbed(WalkOutcome {
                hit_site: next,
                previous_site: pos,
                steps: n,
                visits_counted: visits,
            });
        }
        pos = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    #[test]
    fn interior_and_floor_neighbors() {
        let got: BTreeSet<Site> = neighbors(Site::new(0, 1)).collect();
        let want: BTreeSet<Site> = [(1, 1), (-1, 1), (0, 2), (0, 0)]
            .into_iter()
            .map(|(a, b)| Site::new(a, b))
            .collect();
        assert_eq!(got, want);

        let got: BTreeSet<Site> = neighbors(Site::ORIGIN).collect();
        let want: BTreeSet<Site> = [(1, 0), (-1, 0), (0, 1)]
            .into_iter()
            .map(|(a, b)| Site::new(a, b))
            .collect();
        assert_eq!(got, want);

        let s = Site::new(5, 3);
        let ns: Vec<Site> = neighbors(s).collect();
        assert_eq!(ns.len(), 4);
        assert!(ns.iter().all(|n| n.l1_distance(s) == 1));
    }

    #[test]
    fn edge_requires_neighbours() {
        assert!(DirectedEdge::new(Site::new(0, 0), Site::new(1, 1)).is_none());
        assert!(DirectedEdge::new(Site::new(0, 0), Site::new(0, 0)).is_none());
        let e = DirectedEdge::new(Site::new(0, 0), Site::new(0, 1)).unwrap();
        assert_eq!(e.direction(), Direction::Up);
        assert!(DirectedEdge::from_dir(Site::ORIGIN, Direction::Down).is_none());
    }

    #[test]
    fn site_order_is_row_major_from_floor() {
        let mut v = vec![Site::new(3, 1), Site::new(-2, 0), Site::new(0, 1), Site::new(5, 0)];
        v.sort();
        assert_eq!(
            v,
            vec![Site::new(-2, 0), Site::new(5, 0), Site::new(0, 1), Site::new(3, 1)]
        );
    }

    #[test]
    fn inclusive_walk_from_absorbing_start_has_zero_steps() {
        let mut rng = SmallRng::seed_from_u64(1);
        let start = Site::new(0, 0);
        let end = run_walk(
            start,
            |s: Site| s.x2 == 0,
            &BoxRegion::unbounded(),
            None::<fn(Site) -> bool>,
            WalkSpec::default(),
            &mut rng,
        );
        let o = end.absorbed().unwrap();
        assert_eq!(o.steps, 0);
        assert_eq!(o.hit_site, start);
    }

    #[test]
    fn strict_walk_from_absorbing_start_takes_a_step() {
        let mut rng = SmallRng::seed_from_u64(2);
        for _ in 0..200 {
            let end = run_walk(
                Site::new(0, 1),
                |s: Site| s.x2 <= 1,
                &BoxRegion::unbounded(),
                None::<fn(Site) -> bool>,
                WalkSpec {
                    hit_time: HitTime::Strict,
                    step_budget: 1_000_000,
                },
                &mut rng,
            );
            if let WalkEnd::Absorbed(o) = end {
                assert!(o.steps >= 1);
                assert_eq!(o.hit_site.l1_distance(o.previous_site), 1);
            }
        }
    }

    #[test]
    fn walk_to_floor_arrives_from_height_one() {
        let mut rng = SmallRng::seed_from_u64(3);
        for _ in 0..500 {
            let end = run_walk(
                Site::new(0, 1),
                |s: Site| s.x2 == 0,
                &BoxRegion::unbounded(),
                None::<fn(Site) -> bool>,
                WalkSpec::default(),
                &mut rng,
            );
            match end {
                WalkEnd::Absorbed(o) => {
                    assert_eq!(o.hit_site.x2, 0);
                    assert_eq!(o.previous_site.x2, 1);
                }
                WalkEnd::BudgetExhausted { .. } => {}
                WalkEnd::Lost { .. } => unreachable!("unbounded domain"),
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut rng = SmallRng::seed_from_u64(4);
        let end = run_walk(
            Site::new(0, 50),
            |s: Site| s.x2 == 0,
            &BoxRegion::unbounded(),
            None::<fn(Site) -> bool>,
            WalkSpec {
                hit_time: HitTime::Inclusive,
                step_budget: 10,
            },
            &mut rng,
        );
        assert!(matches!(end, WalkEnd::BudgetExhausted { steps: 10, .. }));
    }

    #[test]
    fn leaving_domain_is_lost() {
        let mut rng = SmallRng::seed_from_u64(5);
        let dom = BoxRegion::new(-2, 2, 0, 3).unwrap();
        let mut lost = 0;
        for _ in 0..200 {
            match run_walk(
                Site::new(0, 2),
                |s: Site| s.x2 == 0,
                &dom,
                None::<fn(Site) -> bool>,
                WalkSpec::default(),
                &mut rng,
            ) {
                WalkEnd::Lost { exit_site, .. } => {
                    assert!(!dom.contains(exit_site));
                    lost += 1;
                }
                WalkEnd::Absorbed(_) => {}
                WalkEnd::BudgetExhausted { .. } => unreachable!(),
            }
        }
        assert!(lost > 0);
    }

    #[test]
    fn nested_absorbing_sets_are_coupled_monotone() {
        // Per-replica seeds shared across A1 ⊂ A2: paths agree until A2 is hit.
        let a1 = |s: Site| s == Site::new(0, 2);
        let a2 = |s: Site| s == Site::new(0, 2) || s == Site::new(2, 2);
        let mut hits = [0u32; 2];
        for (k, absorbing) in [&a1 as &dyn Fn(Site) -> bool, &a2].into_iter().enumerate() {
            for replica in 0..2000 {
                let mut rng = SmallRng::seed_from_u64(replica);
                let end = run_walk(
                    Site::new(1, 1),
                    |s: Site| s.x2 == 0 || absorbing(s),
                    &BoxRegion::new(-30, 30, 0, 30).unwrap(),
                    None::<fn(Site) -> bool>,
                    WalkSpec::default(),
                    &mut rng,
                );
                if let WalkEnd::Absorbed(o) = end {
                    if o.hit_site.x2 > 0 {
                        hits[k] += 1;
                    }
                }
            }
        }
        assert!(hits[1] >= hits[0], "{hits:?}");
    }
}
