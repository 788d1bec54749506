mod common;

use common::{lines_oracle, percentile_oracle, rel_close, sse_oracle, Gen, Rows};
use guardrail_core::consensus::{PeerCandidateList, PeerProvider, PeerSource};
use guardrail_core::kmeans::{centroids_of, inertia, kmeans_timeseries, KMeansConfig};
use guardrail_core::strategies::{
    cluster_config, cluster_representatives, cluster_representatives_from_fit, percentile_exemplars,
    percentile_markers, random_exemplars, semantic_exemplars,
};
use guardrail_core::{Direction, GuardrailError, Provenance, Result, StrategyKind, StrategySpec};

const UP: Direction = Direction::HigherIsBetter;

fn flat(values: &[f64], steps: usize) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v; steps]).collect()
}

#[test]
fn random_forced_membership() {
    let rows = Rows::new(flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3));
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::Random).with_seed(99);
    let set = random_exemplars(&panel, "i002", &spec).unwrap();
    let mut ids: Vec<&str> = set.item_ids().collect();
    assert_eq!(ids.len(), 5);
    ids.sort();
    assert_eq!(ids, ["i000", "i001", "i003", "i004", "i005"]);
    assert!(set.context.iter().all(|c| !c.is_synthetic));
    assert!(matches!(set.provenance[0], Provenance::RandomDraw { seed: 99, derived_seed: false, .. }));
}

#[test]
fn random_is_deterministic_and_seed_sensitive() {
    let mut g = Gen::new(5);
    let rows = Rows::random(&mut g, 500, 4);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::Random).with_seed(1);
    let a = random_exemplars(&panel, "i000", &spec).unwrap();
    let b = random_exemplars(&panel, "i000", &spec).unwrap();
    assert_eq!(a, b);
    let c = random_exemplars(&panel, "i000", &spec.clone().with_seed(2)).unwrap();
    assert_ne!(a.item_ids().collect::<Vec<_>>(), c.item_ids().collect::<Vec<_>>());

    let unseeded = StrategySpec::new(StrategyKind::Random);
    let d = random_exemplars(&panel, "i000", &unseeded).unwrap();
    assert_eq!(d, random_exemplars(&panel, "i000", &unseeded).unwrap());
    assert!(matches!(d.provenance[0], Provenance::RandomDraw { derived_seed: true, .. }));
}

#[test]
fn random_too_many() {
    let rows = Rows::new(flat(&[1.0, 2.0, 3.0], 2));
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::Random).with_n(3);
    assert_eq!(
        random_exemplars(&panel, "i000", &spec).unwrap_err(),
        GuardrailError::NotEnoughCandidates { requested: 3, available: 2 }
    );
}

/// Membership frequencies over 10,000 seeds against the uniform expectation.
#[test]
fn random_membership_is_uniform() {
    let mut g = Gen::new(17);
    let rows = Rows::random(&mut g, 500, 2);
    let panel = rows.panel(UP);
    let mut counts = vec![0u64; rows.ids.len()];
    for seed in 0..10_000u64 {
        let spec = StrategySpec::new(StrategyKind::Random).with_seed(seed);
        let set = random_exemplars(&panel, "i000", &spec).unwrap();
        for id in set.item_ids() {
            counts[rows.index(id)] += 1;
        }
    }
    assert_eq!(counts[0], 0);
    let cells = &counts[1..];
    let expected = 50_000.0 / cells.len() as f64;
    let chi2: f64 = cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Wilson-Hilferty upper 0.1% point for 498 degrees of freedom.
    let df = (cells.len() - 1) as f64;
    let z = 3.090;
    let a = 2.0 / (9.0 * df);
    let critical = df * (1.0 - a + z * a.sqrt()).powi(3);
    assert!(chi2 < critical, "chi2 {chi2:.1} >= {critical:.1}");
}

#[test]
fn markers_on_constant_dataset() {
    let rows = Rows::new(flat(&[7.5; 6], 4));
    let panel = rows.panel(UP);
    let set = percentile_markers(&panel, "i000", &StrategySpec::new(StrategyKind::PercentileMarkers)).unwrap();
    assert_eq!(set.context.len(), 5);
    for line in &set.context {
        assert!(line.is_synthetic);
        assert!(line.values.iter().all(|&v| v == 7.5));
    }
    let labels: Vec<&str> = set.context.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(labels, ["p5", "p25", "p50", "p75", "p95"]);
}

#[test]
fn markers_median_of_one_to_hundred() {
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let rows = Rows::new(flat(&values, 3));
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::PercentileMarkers).with_percentiles(vec![50.0]);
    let set = percentile_markers(&panel, "i010", &spec).unwrap();
    let oracle = percentile_oracle(&values, 50.0);
    assert_eq!(oracle, 50.5);
    assert_eq!(set.context[0].values, vec![oracle; 3]);
    assert_eq!(set.context[0].percentile_tag, Some(50.0));
}

#[test]
fn markers_need_two_items() {
    let rows = Rows::new(vec![vec![1.0, 2.0]]);
    let panel = rows.panel(UP);
    let err = percentile_markers(&panel, "i000", &StrategySpec::new(StrategyKind::PercentileMarkers)).unwrap_err();
    assert_eq!(err, GuardrailError::TooFewItems { needed: 2, available: 1 });
}

#[test]
fn markers_match_oracle_on_random_panels() {
    let mut g = Gen::new(3);
    for _ in 0..20 {
        let (items, steps) = (2 + g.below(40), 1 + g.below(20));
        let rows = Rows::random(&mut g, items, steps);
        let panel = rows.panel(UP);
        let spec = StrategySpec::new(StrategyKind::PercentileMarkers);
        let set = percentile_markers(&panel, "i000", &spec).unwrap();
        let oracle = lines_oracle(&rows, &spec.percentiles);
        for (line, want) in set.context.iter().zip(&oracle) {
            for (a, b) in line.values.iter().zip(want) {
                assert!(rel_close(*a, *b, 1e-9), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn percentile_exemplars_flat_bands() {
    let steps = 6;
    let mut values = flat(&[5.0, 25.0, 50.0, 75.0, 95.0], steps);
    values.push(vec![40.0; steps]);
    let rows = Rows::with_ids(&["A", "B", "C", "D", "E", "focal"], values);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::PercentileExemplars);
    let set = percentile_exemplars(&panel, "focal", &spec).unwrap();

    let lines = lines_oracle(&rows, &spec.percentiles);
    // Brute force: each line's nearest item.
    let nearest: Vec<&str> = lines
        .iter()
        .map(|line| {
            let best = (0..5)
                .min_by(|&a, &b| sse_oracle(&rows.values[a], line).total_cmp(&sse_oracle(&rows.values[b], line)))
                .unwrap();
            rows.ids[best].as_str()
        })
        .collect();
    assert_eq!(set.item_ids().collect::<Vec<_>>(), nearest);
    assert_eq!(nearest, ["A", "B", "C", "D", "E"]);
    assert_eq!(set.context[1].label, "B (p25)");
    assert_eq!(set.context[1].percentile_tag, Some(25.0));
}

#[test]
fn percentile_exemplars_single_median() {
    let rows = Rows::with_ids(&["x", "y", "z"], vec![vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 1.0], vec![10.0, 4.0, 9.0]]);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::PercentileExemplars).with_percentiles(vec![50.0]);
    let set = percentile_exemplars(&panel, "z", &spec).unwrap();
    let median = &lines_oracle(&rows, &[50.0])[0];
    let errs: Vec<f64> = (0..2).map(|i| sse_oracle(&rows.values[i], median)).collect();
    let want = if errs[0] <= errs[1] { "x" } else { "y" };
    assert_eq!(set.item_ids().collect::<Vec<_>>(), [want]);
}

#[test]
fn percentile_exemplar_duplicates_tie_break_on_id() {
    let rows =
        Rows::with_ids(&["m2", "m1", "lo", "focal"], vec![vec![5.0; 3], vec![5.0; 3], vec![0.0; 3], vec![9.0; 3]]);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::PercentileExemplars).with_percentiles(vec![50.0]);
    let set = percentile_exemplars(&panel, "focal", &spec).unwrap();
    assert_eq!(set.item_ids().collect::<Vec<_>>(), ["m1"]);
}

#[test]
fn percentile_exemplars_too_few_candidates() {
    let rows = Rows::new(flat(&[1.0, 2.0, 3.0], 2));
    let panel = rows.panel(UP);
    let err = percentile_exemplars(&panel, "i000", &StrategySpec::new(StrategyKind::PercentileExemplars)).unwrap_err();
    assert_eq!(err, GuardrailError::NotEnoughCandidates { requested: 5, available: 2 });
}

#[test]
fn kmeans_beats_random_assignments() {
    let mut g = Gen::new(21);
    let rows = Rows::random(&mut g, 20, 8);
    let fit = kmeans_timeseries(&rows.values, KMeansConfig::new(3, 4)).unwrap();
    for _ in 0..1000 {
        let mut assign: Vec<usize> = (0..20).map(|_| g.below(3)).collect();
        // keep every cluster non-empty
        assign[0] = 0;
        assign[1] = 1;
        assign[2] = 2;
        let centroids = centroids_of(&rows.values, &assign, 3);
        assert!(fit.inertia <= inertia(&rows.values, &assign, &centroids) + 1e-9);
    }
}

#[test]
fn cluster_duplicate_groups() {
    let mut values = Vec::new();
    let mut ids = Vec::new();
    for (group, level) in [0.0, 100.0, 200.0, 300.0, 400.0].iter().enumerate() {
        for copy in 0..3 {
            values.push(vec![*level, level + 10.0, level - 5.0]);
            ids.push(format!("g{group}c{copy}"));
        }
    }
    values.push(vec![50.0, 60.0, 45.0]);
    ids.push("focal".into());
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let rows = Rows::with_ids(&id_refs, values);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_seed(8);
    let set = cluster_representatives(&panel, "focal", &spec).unwrap();
    let mut groups: Vec<String> = set.item_ids().map(|id| id[..2].to_string()).collect();
    groups.sort();
    assert_eq!(groups, ["g0", "g1", "g2", "g3", "g4"]);
    // Each chosen copy is the first id of its identical group.
    assert!(set.item_ids().all(|id| id.ends_with("c0")));
    assert_eq!(set, cluster_representatives(&panel, "focal", &spec).unwrap());
}

#[test]
fn cluster_focal_singleton_gets_substitute() {
    let rows = Rows::with_ids(
        &["a1", "a2", "b1", "b2", "focal"],
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0], vec![1000.0, 1000.0]],
    );
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_n(3).with_seed(2);
    let set = cluster_representatives(&panel, "focal", &spec).unwrap();
    assert_eq!(set.context.len(), 3);
    let ids: Vec<&str> = set.item_ids().collect();
    assert!(!ids.contains(&"focal"));
    let mut sorted = ids.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 3);
    let substituted = set
        .provenance
        .iter()
        .filter(|p| matches!(p, Provenance::ClusterRepresentative { substituted: true, .. }))
        .count();
    assert_eq!(substituted, 1);
}

#[test]
fn cluster_surfaces_rising_and_falling_cohorts() {
    let mut g = Gen::new(12);
    let steps = 20;
    let mut values = Vec::new();
    for i in 0..60 {
        let slope = match i % 3 {
            0 => 3.0,
            1 => -2.0,
            _ => 0.1,
        };
        values.push((0..steps).map(|t| slope * t as f64 + g.range(-2.0, 2.0)).collect());
    }
    let rows = Rows::new(values);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_n(3).with_seed(1);
    let set = cluster_representatives(&panel, "i002", &spec).unwrap();
    let ends: Vec<f64> = set.context.iter().map(|c| *c.values.last().unwrap()).collect();
    assert!(ends.iter().any(|&e| e > 40.0), "{ends:?}");
    assert!(ends.iter().any(|&e| e < -25.0), "{ends:?}");
}

struct Fixed(Vec<Vec<&'static str>>);

impl PeerProvider for Fixed {
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> Result<Vec<PeerCandidateList>> {
        Ok((0..samples)
            .map(|i| {
                let list = &self.0[i % self.0.len()];
                PeerCandidateList::new(focal_id, list.iter().map(|s| s.to_string()), PeerSource::Static)
            })
            .collect())
    }
}

#[test]
fn shared_fit_matches_a_fresh_fit() {
    let mut g = Gen::new(31);
    let rows = Rows::random(&mut g, 24, 6);
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_seed(8);
    let config = cluster_config(&panel, "i000", &spec).unwrap();
    let fit = kmeans_timeseries(&rows.values, config).unwrap();
    for focal in ["i000", "i007", "i023"] {
        assert_eq!(cluster_config(&panel, focal, &spec).unwrap(), config);
        let shared = cluster_representatives_from_fit(&panel, focal, &spec, &fit).unwrap();
        assert_eq!(shared, cluster_representatives(&panel, focal, &spec).unwrap());
    }
    let other = kmeans_timeseries(&rows.values, KMeansConfig::new(3, 8)).unwrap();
    assert!(cluster_representatives_from_fit(&panel, "i000", &spec, &other).is_err());
}

fn country_rows() -> Rows {
    let ids = ["GRC", "ITA", "ESP", "PRT", "CYP", "HRV", "DEU", "FRA"];
    Rows::with_ids(&ids, (0..ids.len()).map(|i| vec![i as f64, 2.0 * i as f64]).collect())
}

#[test]
fn semantic_unanimous() {
    let rows = country_rows();
    let panel = rows.panel(Direction::LowerIsBetter);
    let provider = Fixed(vec![vec!["ITA", "ESP", "PRT", "CYP", "HRV"]]);
    let spec = StrategySpec::new(StrategyKind::Semantic);
    let set = semantic_exemplars(&panel, "GRC", &spec, &provider).unwrap();
    assert_eq!(set.item_ids().collect::<Vec<_>>(), ["ITA", "ESP", "PRT", "CYP", "HRV"]);
    for p in &set.provenance {
        if let Provenance::SemanticPeer { votes, .. } = p {
            assert_eq!(*votes, 10);
        }
    }
}

#[test]
fn semantic_threshold_boundary_and_top_up() {
    let rows = country_rows();
    let panel = rows.panel(Direction::LowerIsBetter);
    // ITA in 7 of 10 lists, ESP in 6, FRA in every list.
    let mut lists = Vec::new();
    for i in 0..10 {
        let mut l = vec!["FRA"];
        if i < 7 {
            l.push("ITA");
        }
        if i < 6 {
            l.push("ESP");
        }
        lists.push(l);
    }
    let provider = Fixed(lists);
    let spec = StrategySpec::new(StrategyKind::Semantic).with_n(2);
    let set = semantic_exemplars(&panel, "GRC", &spec, &provider).unwrap();
    assert_eq!(set.item_ids().collect::<Vec<_>>(), ["FRA", "ITA"]);

    let spec = StrategySpec::new(StrategyKind::Semantic).with_n(3);
    let set = semantic_exemplars(&panel, "GRC", &spec, &provider).unwrap();
    assert_eq!(set.item_ids().collect::<Vec<_>>(), ["FRA", "ITA", "ESP"]);
    assert!(set
        .provenance
        .iter()
        .any(|p| matches!(p, Provenance::SemanticShortfall { requested: 3, retained: 2, topped_up: 1 })));
}

#[test]
fn semantic_errors() {
    let rows = country_rows();
    let panel = rows.panel(Direction::LowerIsBetter);
    let provider = Fixed(vec![vec!["Atlantis", "USA"]]);
    let spec = StrategySpec::new(StrategyKind::Semantic);
    assert_eq!(
        semantic_exemplars(&panel, "GRC", &spec, &provider).unwrap_err(),
        GuardrailError::NoConsensusPeers { focal: "GRC".into() }
    );

    struct Broken;
    impl PeerProvider for Broken {
        fn candidate_lists(&self, _: &str, _: usize) -> Result<Vec<PeerCandidateList>> {
            Err(GuardrailError::Provider {
                message: "timeout".into(),
                diagnostics: vec!["attempt 1: timed out".into()],
            })
        }
    }
    match semantic_exemplars(&panel, "GRC", &spec, &Broken).unwrap_err() {
        GuardrailError::Provider { diagnostics, .. } => assert_eq!(diagnostics.len(), 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wrong_kind_and_unknown_focal() {
    let rows = Rows::new(flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2));
    let panel = rows.panel(UP);
    let spec = StrategySpec::new(StrategyKind::Random);
    assert!(matches!(percentile_markers(&panel, "i000", &spec), Err(GuardrailError::WrongStrategy { .. })));
    assert_eq!(random_exemplars(&panel, "nope", &spec).unwrap_err(), GuardrailError::UnknownItem("nope".into()));
}
