use std::collections::HashSet;

use chromatic::coloring::{filter_high_degree, glauber_sample, greedy_color, largest_first_order, VertexOrder};
use chromatic::dataset::{
    chronological_split, example_hash, hash_split, parse_libsvm, write_libsvm, Example, SparseDataset,
};
use chromatic::encoders::chromatic::{ColorColumn, ColorStats, ValueStats};
use chromatic::encoders::{
    chromatic_view, collect_color_stats, sorting_heuristic_compress, submodular_compress, submodular::objective_of,
    CollisionPolicy, Encoder, EncoderKind,
};
use chromatic::fidelity::{collision_count, good_turing};
use chromatic::graph::{
    build_cooccurrence, count_cooccurrences, graph_from_counts, to_adjacency, BuildConfig, CooccurrenceGraph, Edge,
    VertexTable,
};
use chromatic::linear::{log_loss, train_logistic, LinearConfig, LinearModel};
use proptest::prelude::*;

fn dataset(max_n: usize, features: u64, max_nnz: usize) -> impl Strategy<Value = SparseDataset> {
    prop::collection::vec(
        (any::<bool>(), prop::collection::vec(1..=features, 0..=max_nnz)),
        1..=max_n,
    )
    .prop_map(|rows| {
        SparseDataset::from_examples(
            rows.into_iter()
                .map(|(y, fs)| Example::new(u8::from(y), fs))
                .collect(),
        )
    })
}

fn graph(max_v: u64) -> impl Strategy<Value = CooccurrenceGraph> {
    (1..=max_v).prop_flat_map(|nv| {
        prop::collection::vec((0..nv, 0..nv), 0..=(3 * nv as usize)).prop_map(move |pairs| {
            let mut edges: Vec<Edge> = pairs.into_iter().filter_map(|(a, b)| Edge::new(a, b)).collect();
            edges.sort_unstable();
            edges.dedup();
            let vertices: Vec<u64> = (0..nv).collect();
            to_adjacency(&edges, &vertices, 1).unwrap()
        })
    })
}

fn stats() -> impl Strategy<Value = ColorStats> {
    prop::collection::vec(prop::collection::vec((1u64..15, 0u64..=100), 1..=8), 1..=4).prop_map(|cols| {
        let columns: Vec<Vec<ValueStats>> = cols
            .into_iter()
            .enumerate()
            .map(|(c, vals)| {
                vals.into_iter()
                    .enumerate()
                    .map(|(i, (count, pct))| ValueStats {
                        feature: (c * 100 + i) as u64,
                        count,
                        positives: count * pct / 100,
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<u64> = columns.iter().map(|v| v.iter().map(|s| s.count).sum()).collect();
        let pos: Vec<u64> = columns.iter().map(|v| v.iter().map(|s| s.positives).sum()).collect();
        // rows lacking a color are the other colors' rows
        let n = rows.iter().sum::<u64>();
        let positives = pos.iter().sum::<u64>();
        ColorStats {
            columns: columns
                .into_iter()
                .enumerate()
                .map(|(c, values)| ColorColumn {
                    values,
                    rows_with_color: rows[c],
                    absent_rows: n - rows[c],
                    absent_positives: positives - pos[c],
                })
                .collect(),
            n,
            positives,
        }
    })
}

const ORDERS: [VertexOrder; 6] = [
    VertexOrder::FirstSeen,
    VertexOrder::AscendingId,
    VertexOrder::DegreeDescending,
    VertexOrder::LargestFirst,
    VertexOrder::SmallestLast,
    VertexOrder::Saturation,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn libsvm_round_trip(ds in dataset(30, 500, 8)) {
        let mut text = Vec::new();
        write_libsvm(&ds, &mut text).unwrap();
        let back = parse_libsvm(text.as_slice()).unwrap();
        prop_assert_eq!(back.n(), ds.n());
        for (a, b) in back.examples.iter().zip(&ds.examples) {
            prop_assert_eq!(&a.active, &b.active);
            prop_assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn chronological_split_keeps_order(ds in dataset(40, 50, 5), fraction in 0.01f64..0.99) {
        let (train, test) = chronological_split(&ds, fraction).unwrap();
        prop_assert_eq!(train.n() + test.n(), ds.n());
        prop_assert_eq!(train.n(), (ds.n() as f64 * fraction).ceil() as usize);
        let joined: Vec<&Example> = train.examples.iter().chain(&test.examples).collect();
        prop_assert!(joined.iter().zip(&ds.examples).all(|(a, b)| *a == b));
    }

    #[test]
    fn hash_split_partitions(ds in dataset(60, 80, 6)) {
        let (estimate, fit) = hash_split(&ds);
        prop_assert_eq!(estimate.n() + fit.n(), ds.n());
        prop_assert!(estimate.examples.iter().all(|e| example_hash(e) >> 63 == 0));
        prop_assert!(fit.examples.iter().all(|e| example_hash(e) >> 63 == 1));
        // both halves keep dataset order, so a merge by hash bit rebuilds ds
        let (mut i, mut j) = (0, 0);
        for ex in &ds.examples {
            if example_hash(ex) >> 63 == 0 {
                prop_assert_eq!(&estimate.examples[i], ex);
                i += 1;
            } else {
                prop_assert_eq!(&fit.examples[j], ex);
                j += 1;
            }
        }
    }

    #[test]
    fn parallel_build_matches_single_worker(ds in dataset(80, 60, 8), cap in 1usize..64) {
        let reference = count_cooccurrences(&ds, &BuildConfig::with_workers(1)).unwrap();
        for p in [1, 2, 4, 8] {
            let cfg = BuildConfig { workers: p, buffer_capacity: cap, ..BuildConfig::default() };
            prop_assert_eq!(&count_cooccurrences(&ds, &cfg).unwrap(), &reference);
        }
    }

    #[test]
    fn thresholded_graphs_nest(ds in dataset(60, 25, 8)) {
        let counts = count_cooccurrences(&ds, &BuildConfig::default()).unwrap();
        let h = counts.histogram();
        let table = VertexTable::from_dataset(&ds);
        let graphs: Vec<CooccurrenceGraph> =
            (1..=4).map(|k| graph_from_counts(&table, &counts, k, 1).unwrap()).collect();
        for (i, g) in graphs.iter().enumerate() {
            let k = i as u32 + 1;
            prop_assert_eq!(h.edges_at_least(k), g.num_edges() as u64);
            if let Some(next) = graphs.get(i + 1) {
                let edges: HashSet<Edge> = g.feature_edges().into_iter().collect();
                prop_assert!(next.feature_edges().iter().all(|e| edges.contains(e)));
                prop_assert!(next.max_degree() <= g.max_degree());
                prop_assert!(good_turing(&h, k + 1) >= good_turing(&h, k));
            }
        }
    }

    #[test]
    fn greedy_is_proper_and_bounded(g in graph(60)) {
        for order in ORDERS {
            let c = greedy_color(&g, order);
            prop_assert!(c.is_proper_on(&g));
            prop_assert!(c.num_colors() as usize <= g.max_degree() + 1);
        }
    }

    #[test]
    fn glauber_stays_proper(g in graph(25), extra in 0usize..4, seed in any::<u64>()) {
        let m = g.max_degree() + 1 + extra;
        let c = glauber_sample(&g, m, 2_000, seed).unwrap();
        prop_assert!(c.is_proper_on(&g));
        prop_assert!(c.num_colors() as usize <= m);
    }

    #[test]
    fn filtered_prefix_is_minimal(g in graph(60)) {
        let fr = filter_high_degree(&g);
        let lf = largest_first_order(&g);
        let w = fr.held_out.len();
        prop_assert!(w >= 2 * fr.delta_f);
        prop_assert_eq!(&fr.held_out, &lf.feature_order(&g)[..w].to_vec());
        for shorter in 0..w {
            let delta = lf.removal_degree.get(shorter).copied().unwrap_or(0);
            prop_assert!(shorter < 2 * delta);
        }
    }

    #[test]
    fn training_rows_never_collide(ds in dataset(60, 40, 8)) {
        let (g, _) = build_cooccurrence(&ds, &BuildConfig::default()).unwrap();
        for order in ORDERS {
            let c = greedy_color(&g, order);
            prop_assert!(ds.examples.iter().all(|t| collision_count(&c, t).collisions == 0));
        }
    }

    #[test]
    fn encoder_outputs_in_range(
        ds in dataset(80, 60, 6),
        test in dataset(20, 80, 6),
        extra in 0usize..20,
        policy in prop_oneof![Just(CollisionPolicy::DropMorePopular), Just(CollisionPolicy::KeepLowestIndex)],
    ) {
        let (g, _) = build_cooccurrence(&ds, &BuildConfig::default()).unwrap();
        // test rows draw from a wider id range, so they hit unseen values and collisions
        let coloring = greedy_color(&g, VertexOrder::FirstSeen);
        let stats = collect_color_stats(&coloring, &ds, policy);
        let budget = coloring.num_colors() as usize + extra;
        let encoders = vec![
            Encoder::chromatic_submodular(coloring.clone(), &stats, budget.max(1), policy).unwrap(),
            Encoder::chromatic_target(coloring.clone(), &stats, 20.0, policy),
            Encoder::chromatic_truncation(coloring.clone(), &ds, budget.max(1), policy).unwrap(),
            Encoder::truncation(&ds, budget.max(1)).unwrap(),
            Encoder::hashing(budget.max(1), 7).unwrap(),
        ];
        for enc in &encoders {
            if enc.kind != EncoderKind::Clte {
                prop_assert!(enc.output_dim <= budget.max(1));
            }
            for ex in ds.examples.iter().chain(&test.examples) {
                let out = enc.transform(ex);
                prop_assert!(out.features.iter().all(|&(i, _)| (i as usize) < enc.total_dim()));
                prop_assert!(out.features.windows(2).all(|w| w[0].0 < w[1].0));
                if enc.kind == EncoderKind::Clsm {
                    // one column per resolved color: same resolution as the statistics
                    prop_assert_eq!(out.features.len(), chromatic_view(&coloring, ex, policy).values.len());
                }
            }
        }
    }

    #[test]
    fn global_greedy_dominates_sorting(s in stats(), extra in 0usize..10) {
        let budget = s.num_colors() + extra;
        let global = submodular_compress(&s, budget).unwrap();
        let sorting = sorting_heuristic_compress(&s, budget).unwrap();
        prop_assert!(global.objective >= sorting.objective - 1e-12);
        prop_assert!(global.gains.iter().all(|&g| g >= 0.0));
        prop_assert!(global.gains.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(global.output_dim <= budget);
        let splitters: Vec<Vec<u32>> = global.colors.iter().map(|c| c.splitters.clone()).collect();
        prop_assert!((objective_of(&s, &splitters) - global.objective).abs() < 1e-12);
        for split in &global.colors {
            prop_assert!(split.splitters.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(split.splitters.iter().all(|&p| p >= 1 && (p as usize) < split.sorted_values.len()));
        }
    }

    #[test]
    fn training_is_deterministic_and_loss_finite(ds in dataset(60, 30, 5), lr in 0.01f64..5.0) {
        let enc = Encoder::truncation(&ds, 16).unwrap();
        let rows = enc.transform_all(&ds);
        let cfg = LinearConfig { learning_rate: lr, ..LinearConfig::default() };
        let a = train_logistic(&rows, enc.total_dim(), cfg).unwrap();
        let b = train_logistic(&rows, enc.total_dim(), cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let mut extreme = LinearModel::new(enc.total_dim(), cfg);
        extreme.weights.iter_mut().enumerate().for_each(|(i, w)| *w = if i % 2 == 0 { 1e300 } else { -1e300 });
        prop_assert!(log_loss(&extreme, &rows).unwrap().is_finite());
    }
}
