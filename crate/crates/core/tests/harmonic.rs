use proptest::prelude::*;
use sdla::harmonic::{calibration_suite, AggregateSet, StationaryField};
use sdla::lattice::{out_edges, Site};

/// Random floor-attached aggregate: columns with occasional side branches.
fn attached() -> impl Strategy<Value = AggregateSet> {
    prop::collection::vec((-4i32..=4, 1i32..=4, any::<bool>()), 1..4).prop_map(|cols| {
        let mut pts = Vec::new();
        for (x, h, branch) in cols {
            pts.extend((1..=h).map(|y| Site::new(x, y)));
            if branch {
                pts.push(Site::new(x + 1, h));
            }
        }
        AggregateSet::from_sites(pts)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn measure_shrinks_under_growth(b in attached(), extra in (-5i32..=5, 1i32..=5)) {
        let pts: Vec<Site> = b.raised().copied().collect();
        let add = Site::new(extra.0, extra.1);
        let bigger = AggregateSet::from_sites(pts.iter().copied().chain((1..=add.x2).map(|y| Site::new(add.x1, y))));
        let fa = StationaryField::from_sites(b.raised()).unwrap();
        let fb = StationaryField::from_sites(bigger.raised()).unwrap();
        for x in b.raised().chain([Site::ORIGIN].iter()) {
            for e in out_edges(*x) {
                if b.is_frontier_edge(&e) && bigger.is_frontier_edge(&e) {
                    prop_assert!(fb.edge_value(e) <= fa.edge_value(e) + 1e-9, "{:?}", e);
                }
            }
        }
    }

    #[test]
    fn measure_is_translation_and_reflection_invariant(b in attached(), shift in -7i32..=7) {
        let moved = AggregateSet::from_sites(b.raised().map(|s| s.translated(shift)));
        let mirrored = AggregateSet::from_sites(b.raised().map(|s| s.mirrored()));
        let f = StationaryField::from_sites(b.raised()).unwrap();
        let fm = StationaryField::from_sites(moved.raised()).unwrap();
        let fr = StationaryField::from_sites(mirrored.raised()).unwrap();
        for x in b.raised() {
            let v = f.point(*x);
            prop_assert!((fm.point(x.translated(shift)) - v).abs() < 1e-9);
            prop_assert!((fr.point(x.mirrored()) - v).abs() < 1e-9);
        }
    }
}

#[test]
fn calibration_values_are_pinned() {
    // Tip measures of the calibration columns from a finite-box sparse solve
    // of the Dirichlet problem, extrapolated in the box size.
    let suite = calibration_suite();
    let tip = |name: &str| {
        let b = &suite.iter().find(|c| c.0 == name).unwrap().1;
        let x = b.raised().max_by_key(|s| s.x2).copied().unwrap();
        StationaryField::from_sites(b.raised()).unwrap().point(x)
    };
    assert!((tip("column-1") - 2.75194).abs() < 1e-4);
    assert!((tip("column-2") - 3.88045).abs() < 1e-4);
    assert!((tip("column-4") - 5.49502).abs() < 1e-4);
}
