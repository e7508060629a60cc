use proptest::prelude::*;
use sdla::coupling::{coupling_box, run_coupled, CouplingOptions, WindowId};
use sdla::engine::{run_thinned, Aggregate, EngineConfig};
use sdla::graphical::EventStream;
use sdla::lattice::BoxRegion;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coupled_pair_invariants(seed in any::<u64>(), n in 2i32..10) {
        let cfg = EngineConfig::new(coupling_box(n));
        let st = EventStream::new(seed, 1.0, cfg.c_dom).unwrap();
        let window = BoxRegion::new(-2, 2, 0, 2).unwrap();
        let opts = CouplingOptions { trace_lambda: true };
        let (state, rec) = run_coupled(n, 1.0, &[window], &cfg, &st, opts).unwrap();

        prop_assert_eq!(state.gamma_hit, state.gamma_time.is_some());
        if let Some(g) = state.gamma_time {
            prop_assert!(g <= 1.0);
        }
        // The final symmetric difference is among the recorded discrepancies.
        for s in state.a_n.v.symmetric_difference(&state.a_np1.v) {
            prop_assert!(state.v_d.contains(s));
        }
        for e in state.a_n.e.symmetric_difference(&state.a_np1.e) {
            prop_assert!(state.e_d.contains(e));
        }
        prop_assert_eq!(rec.count_at_1, state.e_d.len());
        prop_assert_eq!(rec.delta_times.len(), state.e_d.len());
        prop_assert!(rec.delta_times.windows(2).all(|w| w[0] <= w[1]));
        let touched = state.v_d.iter().any(|s| window.contains(*s));
        prop_assert_eq!(rec.window_disagreement[&WindowId(0)], touched);
        prop_assert!(rec.lambda_d_trace.iter().all(|&(_, l, _)| l >= 0.0));
        state.a_n.check_forest().unwrap();
        state.a_np1.check_forest().unwrap();
    }
}

#[test]
fn coupled_engines_match_solo_runs_without_gamma() {
    // Before Γ each coupled engine is exactly the solo engine on the same stream.
    for seed in 0..20 {
        let n = 4;
        let cfg = EngineConfig::new(coupling_box(n));
        let st = EventStream::new(seed, 1.0, cfg.c_dom).unwrap();
        let (state, _) = run_coupled(n, 1.0, &[], &cfg, &st, CouplingOptions::default()).unwrap();
        if state.gamma_hit {
            continue;
        }
        let solo_n = run_thinned(&Aggregate::floor_segment(n), 1.0, &cfg, &st).unwrap();
        let solo_np1 = run_thinned(&Aggregate::floor_segment(n + 1), 1.0, &cfg, &st).unwrap();
        assert_eq!(solo_n.aggregate.v, state.a_n.v);
        assert_eq!(solo_np1.aggregate.v, state.a_np1.v);
    }
}
