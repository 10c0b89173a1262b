use hypersel_core::adaptive::{altt_run, AcquisitionPolicy, StoppingRule};
use hypersel_core::binomial;
use hypersel_core::evidence::{
    factor_product, hoeffding_p_value, quantile_p_value, ville_threshold, BettingConfig, BettingStrategy, EProcessState,
    PValue,
};
use hypersel_core::graph::ReliabilityGraph;
use hypersel_core::mht::{benjamini_hochberg, bonferroni, dagger, fixed_sequence_test, PValueMap};
use hypersel_core::pareto::{dominates, pareto_front};
use hypersel_core::reliability::{build_rg, PreferenceMatrix};
use hypersel_core::risk::{split_indices, CandidateSet, SplitConfig};
use proptest::prelude::*;

fn pmap(ps: &[f64]) -> PValueMap {
    ps.iter()
        .enumerate()
        .map(|(i, &p)| (format!("h{i:02}"), PValue::external(p).unwrap()))
        .collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("h{i:02}")).collect()
}

fn p_values(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0..=1.0f64, 0.0..0.02f64], 1..max)
}

fn dag(max: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let k = pairs.len();
        (Just(n), Just(pairs), prop::collection::vec(prop::bool::weighted(0.3), k))
            .prop_map(|(n, pairs, mask)| (n, pairs.into_iter().zip(mask).filter(|(_, b)| *b).map(|(e, _)| e).collect()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hoeffding_is_monotone_in_risk(n in 1usize..5000, alpha in 0.01..0.99f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = hoeffding_p_value(n, alpha, lo).unwrap().value();
        let p_hi = hoeffding_p_value(n, alpha, hi).unwrap().value();
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_lo <= p_hi);
        if hi >= alpha {
            prop_assert_eq!(p_hi, 1.0);
        }
    }

    #[test]
    fn quantile_p_is_monotone_in_exceedances(n in 1usize..3000, q in 0.05..0.99f64, a in 0usize..3000, b in 0usize..3000) {
        let (lo, hi) = (a.min(b).min(n), a.max(b).min(n));
        let p_lo = quantile_p_value(lo, n, q).unwrap().value();
        let p_hi = quantile_p_value(hi, n, q).unwrap().value();
        prop_assert!((0.0..=1.0).contains(&p_lo));
        prop_assert!(p_lo <= p_hi + 1e-15);
        prop_assert!((quantile_p_value(n, n, q).unwrap().value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_cdf_matches_direct_sum(n in 1u64..60, k in 0u64..60, p in 0.001..0.999f64) {
        let k = k.min(n);
        let mut direct = 0.0;
        let mut c = 1.0f64;
        for i in 0..=n {
            if i > 0 {
                c *= (n - i + 1) as f64 / i as f64;
            }
            if i <= k {
                direct += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
            }
        }
        let got = binomial::cdf(k, n, p).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-15, "{got} vs {direct}");
    }

    #[test]
    fn bonferroni_is_inside_bh(ps in p_values(40), delta in 0.01..0.5f64) {
        let p = pmap(&ps);
        let bf = bonferroni(&p, delta).unwrap();
        let bh = benjamini_hochberg(&p, delta).unwrap();
        for id in &bf.selected {
            prop_assert!(bh.contains(id));
        }
        prop_assert!(bf.verify_audit() && bh.verify_audit());
    }

    #[test]
    fn lowering_p_values_only_grows_selections(ps in p_values(30), cuts in prop::collection::vec(0.0..=1.0f64, 30), delta in 0.01..0.5f64) {
        let lowered: Vec<f64> = ps.iter().zip(&cuts).map(|(p, c)| p * c).collect();
        let (a, b) = (pmap(&ps), pmap(&lowered));
        for (x, y) in [
            (bonferroni(&a, delta).unwrap(), bonferroni(&b, delta).unwrap()),
            (benjamini_hochberg(&a, delta).unwrap(), benjamini_hochberg(&b, delta).unwrap()),
        ] {
            for id in &x.selected {
                prop_assert!(y.contains(id));
            }
        }
        let order = |m: &PValueMap| m.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>();
        let fa = fixed_sequence_test(&order(&a), delta).unwrap();
        let fb = fixed_sequence_test(&order(&b), delta).unwrap();
        prop_assert!(fa.len() <= fb.len());
    }

    #[test]
    fn fixed_sequence_selects_a_prefix(ps in p_values(30), delta in 0.01..0.5f64) {
        let ordered: Vec<_> = pmap(&ps).into_iter().collect();
        let r = fixed_sequence_test(&ordered, delta).unwrap();
        let k = r.len();
        let prefix: Vec<String> = ordered[..k].iter().map(|(id, _)| id.clone()).collect();
        prop_assert_eq!(&r.selected, &prefix);
        if k < ordered.len() {
            prop_assert!(ordered[k].1.value() > delta);
        }
        prop_assert!(r.verify_audit());
    }

    #[test]
    fn dagger_on_edgeless_graph_is_bh(ps in p_values(40), delta in 0.01..0.5f64) {
        let p = pmap(&ps);
        let g = ReliabilityGraph::edgeless(ids(ps.len())).unwrap();
        let mut a = dagger(&g, &p, delta).unwrap().selected;
        let mut b = benjamini_hochberg(&p, delta).unwrap().selected;
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dagger_selection_is_ancestor_closed((n, edges) in dag(16), ps in prop::collection::vec(prop_oneof![0.0..=1.0f64, 0.0..0.01f64], 16), delta in 0.01..0.5f64) {
        let g = ReliabilityGraph::new(ids(n), &edges).unwrap();
        let p = pmap(&ps[..n]);
        let r = dagger(&g, &p, delta).unwrap();
        let selected: Vec<bool> = (0..n).map(|v| r.contains(&g.nodes()[v])).collect();
        prop_assert!(g.is_ancestor_closed(&selected));
        for &(u, v) in &edges {
            prop_assert!(!selected[v] || selected[u]);
        }
        prop_assert!(r.verify_audit());
    }

    #[test]
    fn pareto_front_matches_brute_force(pts in prop::collection::vec(prop::collection::vec(prop_oneof![0.0..1.0f64, (0u8..4).prop_map(|x| x as f64 / 4.0)], 3), 1..40)) {
        let front = pareto_front(&pts).unwrap();
        let brute: Vec<usize> = (0..pts.len())
            .filter(|&i| !(0..pts.len()).any(|j| j != i && dominates(&pts[j], &pts[i])))
            .collect();
        prop_assert_eq!(front.members, brute);
    }

    #[test]
    fn reliability_graph_is_acyclic(n in 1usize..14, raw in prop::collection::vec(0.0..=1.0f64, 14 * 14), tau in 0.5001..=1.0f64) {
        let mut values = vec![0.5; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = raw[i * 14 + j];
                values[i * n + j] = v;
                values[j * n + i] = 1.0 - v;
            }
        }
        let post = PreferenceMatrix::new(ids(n), values).unwrap();
        let g = build_rg(&post, tau).unwrap();
        prop_assert_eq!(g.topological_order().len(), n);
        for (u, v) in g.edges() {
            prop_assert!(post.get(u, v) >= tau);
            prop_assert!(!g.reaches(v, u));
        }
    }

    #[test]
    fn split_is_a_deterministic_partition(n in 2usize..500, f in 0.05..0.95f64, seed in any::<u64>()) {
        let cfg = SplitConfig::new(f, seed).unwrap();
        let (a, b) = split_indices(n, &cfg).unwrap();
        prop_assert_eq!(a.len(), (f * n as f64 + 1e-9).floor() as usize);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, &cfg).unwrap(), (a, b));
    }

    #[test]
    fn eprocess_replays_from_its_losses(losses in prop::collection::vec(0.0..=1.0f64, 0..300), alpha in 0.05..0.95f64, mu in 0.0..5.0f64, adaptive in any::<bool>()) {
        let strategy = if adaptive { BettingStrategy::Adaptive } else { BettingStrategy::Constant(mu) };
        let cfg = BettingConfig::new(strategy, 0.5).unwrap();
        let mut st = EProcessState::new(alpha, cfg).unwrap();
        let mut steps = Vec::new();
        for &l in &losses {
            let step = st.observe(l).unwrap();
            prop_assert!(step.bet >= 0.0 && step.bet <= cfg.ceiling(alpha) + 1e-15);
            prop_assert!(step.factor > 0.0);
            steps.push(step);
        }
        let replayed = EProcessState::replay(alpha, cfg, &losses).unwrap();
        prop_assert_eq!(replayed, st);
        let prod = factor_product(&steps);
        prop_assert!((prod - st.wealth()).abs() <= 1e-9 * st.wealth().max(1e-300));
        prop_assert!(st.wealth() > 0.0);
    }

    #[test]
    fn adaptive_never_queries_rejected_candidates(m in 1usize..6, seed in any::<u64>(), budget in 0u64..400, eps in 0.0..=1.0f64) {
        let policy = AcquisitionPolicy::epsilon_greedy(eps).unwrap();
        let out = altt_run(
            |c| if c % 2 == 0 { 0.0 } else { 0.6 },
            CandidateSet::numbered(m),
            0.3,
            0.1,
            BettingConfig::default(),
            &policy,
            StoppingRule::budget(budget),
            seed,
        ).unwrap();
        let s = &out.session;
        prop_assert!(s.consumed() <= budget);
        prop_assert_eq!(s.consumed(), out.query_counts.iter().sum::<u64>());
        let threshold = ville_threshold(0.1, m);
        for (c, losses) in s.trajectories().iter().enumerate() {
            let mut st = EProcessState::new(0.3, BettingConfig::default()).unwrap();
            for (t, &l) in losses.iter().enumerate() {
                st.observe(l).unwrap();
                let crossed = st.wealth() >= threshold;
                // frozen at the crossing: nothing is queried afterwards
                prop_assert_eq!(crossed, t + 1 == losses.len() && s.is_rejected(c));
            }
            if losses.is_empty() {
                prop_assert!(!s.is_rejected(c));
            }
        }
        prop_assert!(s.verify_replay(1e-9));
        prop_assert!(out.selection.verify_audit());
        for id in &out.selection.selected {
            prop_assert!(s.is_rejected(s.candidates().index_of(id).unwrap()));
        }
    }
}

#[test]
fn p_values_are_super_uniform_under_the_boundary_null() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let (n, alpha, trials) = (200usize, 0.3, 20_000);
    for &u in &[0.01, 0.05, 0.1, 0.3] {
        let mut hits_h = 0;
        let mut hits_q = 0;
        for _ in 0..trials {
            let losses: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < alpha { 1.0 } else { 0.0 }).collect();
            let mean = losses.iter().sum::<f64>() / n as f64;
            if hoeffding_p_value(n, alpha, mean).unwrap().value() <= u {
                hits_h += 1;
            }
            // quantile null at level q = 0.7 with exceedance probability exactly 1 - q
            let k = losses.iter().filter(|&&l| l >= 0.5).count();
            if quantile_p_value(k, n, 0.7).unwrap().value() <= u {
                hits_q += 1;
            }
        }
        let slack = 3.0 * (u * (1.0 - u) / trials as f64).sqrt();
        assert!((hits_h as f64 / trials as f64) <= u + slack, "hoeffding at {u}");
        assert!((hits_q as f64 / trials as f64) <= u + slack, "quantile at {u}");
    }
}
