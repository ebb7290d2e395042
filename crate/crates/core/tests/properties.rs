use proptest::prelude::*;

use benchmeta::alignment::{cad_transform, count_inversions, CadScore};
use benchmeta::corpus::{BenchmarkId, FamilyHierarchy, ModelId, OutcomeRecord, OutcomeStore, ScoreMatrix};
use benchmeta::discrim::discriminability_of_scores;
use benchmeta::rankstats::tau_b;
use benchmeta::report::{bqs, BqsWeights};
use benchmeta::resample::{bootstrap_ds, stability, Axis, ResampleConfig};
use benchmeta::selector::{select, SelectionSpec, Strategy as Pick};
use benchmeta::synth::{generate, SynthSpec};

/// Outcome grid: `grid[m][q]`, with `None` for a missing record.
fn grid() -> impl Strategy<Value = Vec<Vec<Option<bool>>>> {
    (3usize..=6, 4usize..=25).prop_flat_map(|(m, n)| {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![8 => any::<bool>().prop_map(Some), 1 => Just(None)], n),
            m,
        )
    })
}

fn store_from(grid: &[Vec<Option<bool>>]) -> OutcomeStore {
    let mut records = Vec::new();
    for (m, row) in grid.iter().enumerate() {
        for (q, c) in row.iter().enumerate() {
            // keep q00 for everyone so no model disappears
            let c = if q == 0 { c.or(Some(false)) } else { *c };
            if let Some(c) = c {
                records.push(OutcomeRecord::new(format!("m{m}"), "b", format!("q{q:02}"), c));
            }
        }
    }
    OutcomeStore::from_records(records).unwrap()
}

fn one_family(n: usize) -> Vec<FamilyHierarchy> {
    vec![FamilyHierarchy::new("f", (0..n).map(|m| ModelId::from(format!("m{m}"))).collect()).unwrap()]
}

fn bench() -> BenchmarkId {
    BenchmarkId::from("b")
}

fn scores(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..20).prop_map(|v| f64::from(v) / 20.0), len)
}

proptest! {
    #[test]
    fn tau_is_bounded_and_symmetric(x in scores(2..=15), y in scores(2..=15)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        match (tau_b(x, y), tau_b(y, x)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((-1.0..=1.0).contains(&a));
                prop_assert!((a - b).abs() < 1e-12);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn tau_ignores_monotone_transforms(x in scores(3..=15), shift in -1.0f64..1.0) {
        let y: Vec<f64> = x.iter().map(|v| (v * 3.0).exp() + shift).collect();
        if let Ok(t) = tau_b(&x, &y) {
            prop_assert!((t - 1.0).abs() < 1e-12);
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        if let Ok(t) = tau_b(&x, &neg) {
            prop_assert!((t + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ds_is_nonnegative_and_order_free(mut s in scores(2..=12), seed in any::<u64>()) {
        if let Ok(d) = discriminability_of_scores(&s, 0.02) {
            prop_assert!(d >= 0.0);
            let k = (seed % s.len() as u64) as usize;
            s.rotate_left(k);
            prop_assert!((discriminability_of_scores(&s, 0.02).unwrap() - d).abs() < 1e-12);
        }
    }

    #[test]
    fn cad_decreases_in_rate_and_lambda(a in 0.0f64..1.0, b in 0.0f64..1.0, l1 in 0.5f64..30.0, l2 in 0.5f64..30.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let t = cad_transform(lo, l1);
        prop_assert!(t > 0.0 && t <= 1.0);
        prop_assert!(cad_transform(hi, l1) <= t);
        if lo > 0.0 {
            let (la, lb) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(cad_transform(lo, lb) <= cad_transform(lo, la));
        }
    }

    #[test]
    fn bqs_increases_in_each_component(c in -1.0f64..0.9, d in 0.0f64..1.0, k in 0.0f64..0.9, dx in 0.01f64..0.1) {
        let w = BqsWeights::default();
        let base = bqs(c, d, k, w);
        prop_assert!(bqs(c + dx, d, k, w) > base);
        prop_assert!(bqs(c, d + dx, k, w) > base);
        prop_assert!(bqs(c, d, k + dx, w) > base);
        prop_assert!(base <= 1.0 + 1e-12);
    }

    #[test]
    fn fixing_an_inversion_never_lowers_cad(g in grid()) {
        let store = store_from(&g);
        let fams = one_family(g.len());
        let Ok(before) = count_inversions(&store, &bench(), &fams) else { return Ok(()) };
        // find a stronger-wrong / weaker-correct slot and make the weaker model
        // wrong; stay with weaker models that have no correct model below
        // them, otherwise the flip creates new inversions further down
        let mut g2 = g.clone();
        'find: for q in 1..g[0].len() {
            for j in 0..g.len() {
                for l in j + 1..g.len() {
                    let clear_below = g[l + 1..].iter().all(|row| row[q] != Some(true));
                    if g[j][q] == Some(false) && g[l][q] == Some(true) && clear_below {
                        g2[l][q] = Some(false);
                        break 'find;
                    }
                }
            }
        }
        let after = count_inversions(&store_from(&g2), &bench(), &fams).unwrap();
        prop_assert_eq!(after.comparisons, before.comparisons);
        let s0 = CadScore::from_counts(before.inversions, before.comparisons, 12.0).unwrap().score;
        let s1 = CadScore::from_counts(after.inversions, after.comparisons, 12.0).unwrap().score;
        prop_assert!(s1 >= s0);
    }

    #[test]
    fn inversions_ignore_instance_order(g in grid(), k in 1usize..10) {
        let fams = one_family(g.len());
        let Ok(a) = count_inversions(&store_from(&g), &bench(), &fams) else { return Ok(()) };
        let mut rotated = g.clone();
        for row in &mut rotated {
            let len = row.len();
            row[1..].rotate_left(k % (len - 1));
        }
        let b = count_inversions(&store_from(&rotated), &bench(), &fams).unwrap();
        prop_assert_eq!((a.inversions, a.comparisons), (b.inversions, b.comparisons));
    }

    #[test]
    fn pooling_weights_by_comparisons(g in grid()) {
        prop_assume!(g.len() >= 4);
        let names: Vec<ModelId> = (0..g.len()).map(|m| ModelId::from(format!("m{m}"))).collect();
        let split = g.len() / 2;
        let fams = vec![
            FamilyHierarchy::new("x", names[..split].to_vec()).unwrap(),
            FamilyHierarchy::new("y", names[split..].to_vec()).unwrap(),
        ];
        let swapped = vec![fams[1].clone(), fams[0].clone()];
        let store = store_from(&g);
        let Ok(t) = count_inversions(&store, &bench(), &fams) else { return Ok(()) };
        let u = count_inversions(&store, &bench(), &swapped).unwrap();
        prop_assert_eq!((t.inversions, t.comparisons), (u.inversions, u.comparisons));
        let inv: u64 = t.families.iter().map(|f| f.inversions).sum();
        let comp: u64 = t.families.iter().map(|f| f.comparisons).sum();
        prop_assert_eq!((inv, comp), (t.inversions, t.comparisons));
    }

    #[test]
    fn selection_has_target_size(g in grid(), ratio in 0.05f64..1.0, seed in any::<u64>()) {
        let store = store_from(&g);
        let fams = one_family(g.len());
        let models = store.models().to_vec();
        let n = store.benchmark(&bench()).unwrap().instance_count();
        for strategy in [Pick::DsOnly, Pick::Random, Pick::HighAccuracy, Pick::MediumDifficulty] {
            let spec = SelectionSpec::new(strategy, ratio).with_seed(seed);
            let a = select(&store, &bench(), &spec, &fams, &models).unwrap();
            let b = select(&store, &bench(), &spec, &fams, &models).unwrap();
            let target = ((ratio * n as f64).round() as usize).clamp(1, n);
            prop_assert_eq!(a.retained.len(), target);
            let mut unique = a.retained.clone();
            unique.sort();
            unique.dedup();
            prop_assert_eq!(unique.len(), target);
            prop_assert_eq!(a.retained, b.retained);
        }
    }

    #[test]
    fn stability_is_a_correlation(g in grid(), ratio in 0.2f64..1.0, seed in any::<u64>()) {
        let store = store_from(&g);
        let models = store.models().to_vec();
        let cfg = ResampleConfig::subsample(10, seed).unwrap();
        if let Ok(s) = stability(&store, &bench(), None, &models, ratio, &cfg) {
            prop_assert!((-1.0..=1.0).contains(&s.value));
            prop_assert!(s.pairs >= 1);
            prop_assert_eq!(s.pairs + s.degenerate_pairs, 10 * 9 / 2);
            let again = stability(&store, &bench(), None, &models, ratio, &cfg).unwrap();
            prop_assert_eq!(s.value, again.value);
        }
    }

    #[test]
    fn bootstrap_interval_is_ordered(s in scores(4..=11), seed in any::<u64>()) {
        prop_assume!(s.iter().any(|&v| v > 0.0));
        let mut m = ScoreMatrix::new();
        let models: Vec<ModelId> = (0..s.len()).map(|i| ModelId::from(format!("m{i}"))).collect();
        for (id, v) in models.iter().zip(&s) {
            m.insert(bench(), id.clone(), *v).unwrap();
        }
        let cfg = ResampleConfig::bootstrap(50, seed, Axis::Models).unwrap();
        if let Ok(e) = bootstrap_ds(&m, &bench(), &models, 0.02, &cfg) {
            prop_assert!(e.lower <= e.upper);
            prop_assert!(e.std_dev >= 0.0);
            let again = bootstrap_ds(&m, &bench(), &models, 0.02, &cfg).unwrap();
            prop_assert_eq!(e, again);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clean_synthetic_corpora_have_no_inversions(seed in any::<u64>(), instances in 20usize..120) {
        let mut spec = SynthSpec::reference_setup(instances, seed);
        spec.benchmarks.truncate(5);
        let corpus = generate(&spec).unwrap();
        let cfg = spec.config().unwrap();
        for b in corpus.store.benchmark_ids() {
            let t = count_inversions(&corpus.store, &b, &cfg.families).unwrap();
            prop_assert_eq!(t.inversions, 0);
        }
    }

    #[test]
    fn synthesis_is_deterministic(seed in any::<u64>()) {
        let mut spec = SynthSpec::reference_setup(50, seed);
        spec.benchmarks.truncate(5);
        spec.planted_inconsistent_fraction = 0.2;
        spec.noise = 0.05;
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate(&spec).unwrap().store.write_jsonl(&mut a).unwrap();
        generate(&spec).unwrap().store.write_jsonl(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}
