use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sdla::graphical::{simulate_interface, EventStream};
use sdla::lattice::{BoxRegion, Site};

fn sites() -> impl Strategy<Value = BTreeSet<Site>> {
    prop::collection::btree_set((-5i32..=5, 0i32..=3).prop_map(|(a, b)| Site::new(a, b)), 1..5)
}

fn big_box() -> BoxRegion {
    BoxRegion::centered_strip(0, 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interface_is_union_of_singletons(seed in any::<u64>(), v0 in sites()) {
        let st = EventStream::new(seed, 1.0, 1.0).unwrap();
        let whole = simulate_interface(&v0, 1.0, &big_box(), &st).unwrap();
        let mut union: BTreeMap<Site, f64> = BTreeMap::new();
        for &x in &v0 {
            let one = simulate_interface(&[x].into(), 1.0, &big_box(), &st).unwrap();
            for (s, t) in one.occupied_at {
                let slot = union.entry(s).or_insert(t);
                *slot = slot.min(t);
            }
        }
        prop_assert!(!whole.truncation_hit);
        prop_assert_eq!(union, whole.occupied_at);
    }

    #[test]
    fn interface_is_monotone_in_seed(seed in any::<u64>(), v0 in sites(), extra in sites()) {
        let st = EventStream::new(seed, 1.0, 1.0).unwrap();
        let mut v1 = v0.clone();
        v1.extend(extra);
        let small = simulate_interface(&v0, 1.0, &big_box(), &st).unwrap();
        let large = simulate_interface(&v1, 1.0, &big_box(), &st).unwrap();
        prop_assert!(small.state.occupied.is_subset(&large.state.occupied));
        for (s, t) in &small.occupied_at {
            prop_assert!(large.occupied_at[s] <= *t);
        }
    }

    #[test]
    fn interface_grows_in_time(seed in any::<u64>(), v0 in sites()) {
        let st = EventStream::new(seed, 1.0, 1.0).unwrap();
        let early = simulate_interface(&v0, 0.4, &big_box(), &st).unwrap();
        let late = simulate_interface(&v0, 1.0, &big_box(), &st).unwrap();
        prop_assert!(early.state.occupied.is_subset(&late.state.occupied));
        let restricted: BTreeSet<Site> =
            late.occupied_at.iter().filter(|(_, &t)| t <= 0.4).map(|(s, _)| *s).collect();
        prop_assert_eq!(restricted, early.state.occupied);
    }
}
