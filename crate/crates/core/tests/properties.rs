//! Invariants over generated inputs.

use proptest::collection::vec;
use proptest::prelude::*;

use surveyeval::decompose::{citation_keys, decompose, parse_outline, segment_sentences, OutlineNode};
use surveyeval::embedkit::{cosine, Component, EmbeddingUnit, VectorIndex};
use surveyeval::judgekit::{CacheEntry, JudgeCache};
use surveyeval::metrics::{format_cell, local_score, node_weight, round2, MetricId, MetricScore};
use surveyeval::providers::mock::mock_embed;
use surveyeval::simweight::{fuse_balanced, fuse_human_as_perfect, sigma_from_cosines};

fn nonzero_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-10.0..10.0f64, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn vector_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..32).prop_flat_map(|d| (nonzero_vector(d), nonzero_vector(d)))
}

/// Headings at random levels, each step going at most one level deeper.
fn heading_doc() -> impl Strategy<Value = String> {
    vec((0usize..4, "[A-Za-z][A-Za-z ]{0,12}"), 1..25).prop_map(|steps| {
        let mut level = 0;
        let mut doc = String::new();
        for (i, (choice, title)) in steps.into_iter().enumerate() {
            level = if i == 0 { 1 } else { (choice + 1).min(level + 1) };
            doc.push_str(&format!(
                "{} {}\n\nText about {} [{}].\n\n",
                "#".repeat(level),
                title.trim(),
                title.trim(),
                i + 1
            ));
        }
        doc
    })
}

fn check_tree(n: &OutlineNode, max_seen: &mut usize) {
    *max_seen = (*max_seen).max(n.depth);
    for (i, c) in n.children.iter().enumerate() {
        assert_eq!(c.depth, n.depth + 1);
        assert_eq!(c.ordinal, i + 1);
        assert!(!c.title.is_empty());
        check_tree(c, max_seen);
    }
}

fn units(id: &str, vectors: &[Vec<f64>]) -> Vec<EmbeddingUnit> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| EmbeddingUnit {
            survey_id: id.into(),
            component: Component::Reference,
            index: i + 1,
            text: format!("{id} unit {i}"),
            vector: v.clone(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in vector_pair()) {
        let ab = cosine(&a, &b).unwrap();
        let ba = cosine(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(cosine(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn mock_embedding_is_pure_and_unit_length(text in ".{1,80}", seed in any::<u64>(), dim in 1usize..128) {
        let v = mock_embed(&text, seed, dim);
        prop_assert_eq!(v.len(), dim);
        prop_assert_eq!(&v, &mock_embed(&text, seed, dim));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn nearest_match_agrees_with_exhaustive_scan(
        (gen, human) in (2usize..8).prop_flat_map(|d| (vec(nonzero_vector(d), 1..6), vec(nonzero_vector(d), 1..10)))
    ) {
        let mut index = VectorIndex::new();
        for u in units("h", &human) {
            index.insert(u).unwrap();
        }
        for g in units("g", &gen) {
            let got = index.nearest_human_match(&g, "h").unwrap();
            let stored: Vec<&EmbeddingUnit> = index.survey_units("h", Component::Reference).collect();
            let scores: Vec<f64> = stored.iter().map(|h| cosine(&g.vector, &h.vector).unwrap()).collect();
            let best = scores.iter().copied().fold(f64::MIN, f64::max);
            let first = stored.iter().zip(&scores).find(|(_, s)| **s == best).unwrap().0.index;
            prop_assert_eq!(got.index, first);
            prop_assert_eq!(got.similarity, best);
        }
    }

    #[test]
    fn index_round_trip_is_bit_exact(vectors in (1usize..6).prop_flat_map(|d| vec(nonzero_vector(d), 1..12))) {
        let mut forward = VectorIndex::new();
        let mut backward = VectorIndex::new();
        let all = units("s", &vectors);
        for u in &all {
            forward.insert(u.clone()).unwrap();
        }
        for u in all.iter().rev() {
            backward.insert(u.clone()).unwrap();
        }
        let bytes = forward.to_bytes();
        prop_assert_eq!(&bytes, &backward.to_bytes());
        let loaded = VectorIndex::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&loaded, &forward);
        prop_assert_eq!(loaded.to_bytes(), bytes);
    }

    #[test]
    fn sigma_is_a_bounded_nonincreasing_top_mean(cosines in vec(-1.0..=1.0f64, 1..40), n in 1usize..40) {
        let (sigma, used) = sigma_from_cosines(&cosines, n).unwrap();
        prop_assert_eq!(used, n.min(cosines.len()));
        prop_assert!((0.0..=1.0).contains(&sigma));
        let (wider, _) = sigma_from_cosines(&cosines, n + 1).unwrap();
        prop_assert!(wider <= sigma + 1e-15);
    }

    #[test]
    fn fused_values_lie_between_system_and_anchor(
        id_index in 0usize..MetricId::ALL.len(),
        a in 0.0..=1.0f64,
        b in 0.0..=1.0f64,
        sigma in 0.0..=1.0f64,
    ) {
        let id = MetricId::ALL[id_index];
        let max = id.scale().max();
        let system = MetricScore::new(id, a * max).unwrap();
        let human = MetricScore::new(id, b * max).unwrap();
        let between = |v: f64, x: f64, y: f64| v >= x.min(y) - 1e-9 && v <= x.max(y) + 1e-9;
        let hp = fuse_human_as_perfect(&system, sigma).value.unwrap();
        prop_assert!(between(hp, system.raw, max));
        let bal = fuse_balanced(&system, &human, sigma).unwrap().value.unwrap();
        prop_assert!(between(bal, system.raw, human.raw));
    }

    #[test]
    fn display_cell_shows_rounded_scaled_and_raw(raw in 0.0..=100.0f64) {
        let cell = format_cell(raw, MetricId::Faithfulness.scale());
        let (shown, sub) = cell.split_once("_{").unwrap();
        let shown: f64 = shown.parse().unwrap();
        prop_assert!((shown - round2(raw / 20.0)).abs() < 1e-9);
        let sub: f64 = sub.trim_end_matches('}').parse().unwrap();
        prop_assert!((sub - raw).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn outline_trees_are_well_formed(doc in heading_doc()) {
        let tree = parse_outline(&doc).unwrap();
        prop_assert_eq!(tree.root.depth, 0);
        let mut max_seen = 0;
        check_tree(&tree.root, &mut max_seen);
        prop_assert_eq!(tree.max_depth, max_seen);
        tree.for_each_parent(|_, p| {
            let w = node_weight(p.depth, tree.max_depth).unwrap();
            assert!(w > 0.0 && w <= (tree.max_depth as f64 + 1.0) / tree.max_depth as f64);
        });
        let d = decompose(&doc).unwrap();
        prop_assert!(d.outline_paths.iter().map(|p| p.leaf_titles.len()).sum::<usize>() == tree.leaf_count());
        prop_assert!(surveyeval::decompose::audit(&d).is_empty());
    }

    #[test]
    fn local_scores_are_proportions(verdicts in vec(any::<bool>(), 1..20)) {
        let l = local_score(&verdicts);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(l, verdicts.iter().filter(|&&b| b).count() as f64 / verdicts.len() as f64);
    }

    #[test]
    fn citation_keys_are_deduplicated_in_textual_order(groups in vec(vec(1u32..60, 1..4), 1..5)) {
        let sentence = groups
            .iter()
            .map(|g| format!("claim [{}]", g.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join(" and ");
        let mut expected = Vec::new();
        for k in groups.iter().flatten() {
            if !expected.contains(k) {
                expected.push(*k);
            }
        }
        prop_assert_eq!(citation_keys(&sentence), expected);
    }

    #[test]
    fn segmentation_keeps_every_character(text in "[A-Za-z0-9 .?!,\\[\\]\n]{0,200}") {
        let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let sentences = segment_sentences(&text);
        prop_assert_eq!(squash(&sentences.concat()), squash(&text));
        prop_assert!(sentences.iter().all(|s| !s.trim().is_empty()));
    }

    #[test]
    fn cache_digest_ignores_insertion_order(entries in vec(("[a-f0-9]{8}", ".{0,20}"), 0..12)) {
        let entry = |(d, r): &(String, String), ts| CacheEntry {
            digest: d.clone(),
            model_id: "m".into(),
            template_id: "t".into(),
            response: r.clone(),
            timestamp: ts,
        };
        // First insert wins, so drop duplicate digests to keep both orders comparable.
        let mut unique: Vec<(String, String)> = Vec::new();
        for e in entries {
            if !unique.iter().any(|u| u.0 == e.0) {
                unique.push(e);
            }
        }
        let forward = JudgeCache::in_memory();
        let backward = JudgeCache::in_memory();
        for e in &unique {
            forward.insert(entry(e, 1)).unwrap();
        }
        for e in unique.iter().rev() {
            backward.insert(entry(e, 2)).unwrap();
        }
        prop_assert_eq!(forward.content_digest(), backward.content_digest());
    }
}
