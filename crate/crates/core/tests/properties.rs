use std::collections::BTreeMap;

use assaymol_core::context::{build_prompt, render_table, sample_molecules, AssayContextBlock, AssaySummary};
use assaymol_core::eval::{high_affinity_fraction, improvement_over_baseline, mean, median};
use assaymol_core::generation::{parse_generation, validity_metrics, BOS, EOS};
use assaymol_core::index::{EmbeddingVector, IndexBuilder, RetrievalHit};
use assaymol_core::llm::extract_structured;
use assaymol_core::retrieval::{filter_assays, FilterOutcome, Hyperparameters, QuerySpec};
use assaymol_core::store::{
    ActivityRow, AssayStore, BioAssayRecord, Measure, MeasureKind, Outcome, Relation, StoreBuilder, TargetRef,
};
use assaymol_core::templates::{Template, TemplateId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![
        Just(Outcome::Active),
        Just(Outcome::Inactive),
        Just(Outcome::Unspecified)
    ]
}

fn measure() -> impl Strategy<Value = Option<Measure>> {
    let kind = prop_oneof![Just("IC50"), Just("Ki"), Just("Kd"), Just("Inhibition"), Just("EC50")];
    let relation = prop_oneof![Just(Relation::Less), Just(Relation::Equal), Just(Relation::Greater)];
    let unit = prop_oneof![Just("nM"), Just("uM"), Just("%"), Just("")];
    let value = prop_oneof![prop::num::f64::NORMAL, Just(0.0), 0.0..1e6];
    proptest::option::of(
        (kind, relation, value, unit).prop_map(|(k, relation, value, unit)| Measure {
            kind: MeasureKind::parse(k),
            relation,
            value,
            unit: unit.to_string(),
        }),
    )
}

fn row() -> impl Strategy<Value = ActivityRow> {
    let smiles = prop_oneof![
        Just("CCO"),
        Just("c1ccccc1"),
        Just("CC(=O)Nc1ccc(O)cc1"),
        Just("C1CC"),
        Just("N#N")
    ];
    (smiles, outcome(), measure()).prop_map(|(s, outcome, measure)| ActivityRow {
        smiles: s.to_string(),
        outcome,
        measure,
    })
}

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.()\"/-]{0,40}[A-Za-z0-9.]".prop_map(|s| s)
}

fn record() -> impl Strategy<Value = BioAssayRecord> {
    (
        1u64..1_000_000,
        text(),
        text(),
        proptest::option::of(text()),
        proptest::option::of("[OPQ][0-9][A-Z0-9]{3}[0-9]"),
        prop::collection::vec(row(), 0..12),
    )
        .prop_map(|(aid, title, description, protocol, uniprot, rows)| BioAssayRecord {
            aid,
            title,
            description,
            protocol: protocol.unwrap_or_default(),
            comment: String::new(),
            targets: uniprot
                .map(|u| {
                    vec![TargetRef {
                        uniprot_id: Some(u),
                        ..Default::default()
                    }]
                })
                .unwrap_or_default(),
            rows,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_persist_load_round_trip(records in prop::collection::btree_map(1u64..100_000, record(), 1..6)) {
        let mut b = StoreBuilder::new();
        for (aid, mut r) in records.clone() {
            r.aid = aid;
            b.insert(r).unwrap();
        }
        let store = b.freeze();
        let dir = tempfile::tempdir().unwrap();
        let manifest = store.persist(dir.path()).unwrap();
        prop_assert_eq!(manifest.assays.len(), records.len());
        let loaded = AssayStore::load(dir.path()).unwrap();
        let before: Vec<_> = store.records().cloned().collect();
        let after: Vec<_> = loaded.records().cloned().collect();
        prop_assert_eq!(before, after);
    }
}

/// Sequential restatement of the filter rules.
fn filter_oracle(hits: &[RetrievalHit], store: &AssayStore, excluded: &[String], hp: &Hyperparameters) -> Vec<u64> {
    let mut out = Vec::new();
    for h in hits {
        let Some(r) = store.get(h.aid) else { continue };
        let blocked = r
            .targets
            .iter()
            .any(|t| t.uniprot_id.as_ref().is_some_and(|u| excluded.contains(u)));
        if blocked || r.rows.len() < hp.min_mol_num {
            continue;
        }
        if out.len() < hp.max_assay_num {
            out.push(h.aid);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn filter_matches_sequential_rules(
        records in prop::collection::vec(record(), 1..30),
        order in prop::collection::vec(0usize..40, 0..40),
        excluded_pick in prop::collection::vec(0usize..30, 0..4),
        min_mol_num in 1usize..10,
        max_assay_num in 1usize..12,
    ) {
        let mut b = StoreBuilder::new();
        let mut aids = Vec::new();
        for (i, mut r) in records.into_iter().enumerate() {
            r.aid = i as u64 + 1;
            aids.push(r.aid);
            b.insert(r).unwrap();
        }
        let store = b.freeze();
        let excluded: Vec<String> = excluded_pick
            .iter()
            .filter_map(|&i| store.get(i as u64 + 1))
            .flat_map(|r| r.uniprot_ids().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let hits: Vec<RetrievalHit> = order.iter().map(|&i| RetrievalHit { aid: i as u64 + 1, similarity: 0.5 }).collect();
        let mut q = QuerySpec::new("target");
        q.excluded_uniprot_ids = excluded.iter().cloned().collect();
        let hp = Hyperparameters { min_mol_num, max_assay_num, ..Default::default() };
        let f = filter_assays(&hits, &store, &q, &hp);
        let kept: Vec<u64> = f.records.iter().map(|(r, _)| r.aid).collect();
        prop_assert_eq!(&kept, &filter_oracle(&hits, &store, &excluded, &hp));
        prop_assert_eq!(f.decisions.len(), hits.len());
        prop_assert_eq!(f.decisions.iter().filter(|d| d.outcome == FilterOutcome::Kept).count(), kept.len());
        prop_assert!(kept.len() <= max_assay_num);
    }

    #[test]
    fn sampling_rules_hold(
        actives in 0usize..40,
        others in 0usize..60,
        n_mol in 1usize..12,
        seed in any::<u64>(),
    ) {
        prop_assume!(actives + others > 0);
        let mut rows: Vec<ActivityRow> = (0..actives).map(|i| ActivityRow { smiles: format!("A{i}"), outcome: Outcome::Active, measure: None }).collect();
        rows.extend((0..others).map(|i| ActivityRow {
            smiles: format!("O{i}"),
            outcome: if i % 3 == 0 { Outcome::Unspecified } else { Outcome::Inactive },
            measure: None,
        }));
        let hp = Hyperparameters { n_mol, ..Default::default() };
        let a = sample_molecules(&rows, &hp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = sample_molecules(&rows, &hp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.len() <= 2 * n_mol);
        let got_a = a.iter().filter(|r| r.outcome == Outcome::Active).count();
        let want = if actives == 0 { (0, others.min(2 * n_mol)) } else { (actives.min(n_mol), others.min(n_mol)) };
        prop_assert_eq!((got_a, a.len() - got_a), want);
        prop_assert!(a[..got_a].iter().all(|r| r.outcome == Outcome::Active));
        let mut names: Vec<&str> = a.iter().map(|r| r.smiles.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        prop_assert_eq!(names.len(), a.len());
    }

    #[test]
    fn improvement_identity_on_dyadic_grid(
        score in -128i32..0,
        baseline in prop::collection::vec(-128i32..0, 1..=64),
        pow in 0u32..7,
    ) {
        // Power-of-two baseline sizes keep the mean exactly representable.
        let n = 1usize << pow;
        let b: Vec<f64> = baseline.iter().cycle().take(n).map(|&k| k as f64 / 8.0).collect();
        let s = score as f64 / 8.0;
        let imp = improvement_over_baseline(s, &b).unwrap();
        prop_assert_eq!(imp + s, mean(&b).unwrap());
    }

    #[test]
    fn high_affinity_is_monotone(
        scores in prop::collection::vec(-12.0f64..0.0, 1..50),
        reference in -12.0f64..0.0,
        which in any::<prop::sample::Index>(),
        drop in 0.0f64..5.0,
    ) {
        let before = high_affinity_fraction(&scores, reference).unwrap();
        let mut lowered = scores.clone();
        lowered[which.index(scores.len())] -= drop;
        prop_assert!(high_affinity_fraction(&lowered, reference).unwrap() >= before);
    }

    #[test]
    fn odd_median_is_an_element(values in prop::collection::vec(-20.0f64..20.0, 1..40)) {
        let v = if values.len() % 2 == 0 { &values[1..] } else { &values[..] };
        let m = median(v).unwrap();
        prop_assert!(v.contains(&m));
    }

    #[test]
    fn top_k_is_sorted_prefix(
        vectors in prop::collection::vec(prop::collection::vec(-4i8..4, 3), 1..60),
        query in prop::collection::vec(-4i8..4, 3),
        k in 1usize..80,
    ) {
        prop_assume!(query.iter().any(|&x| x != 0));
        let mut b = IndexBuilder::new(3);
        let mut n = 0;
        for (i, v) in vectors.iter().enumerate() {
            if v.iter().all(|&x| x == 0) { continue; }
            b.add(i as u64 * 7 + 1, &EmbeddingVector::new(v.iter().map(|&x| x as f64).collect()).unwrap()).unwrap();
            n += 1;
        }
        prop_assume!(n > 0);
        let idx = b.build();
        let q = EmbeddingVector::new(query.iter().map(|&x| x as f64).collect()).unwrap();
        let top = idx.top_k(&q, k).unwrap();
        let all = idx.top_k(&q, usize::MAX).unwrap();
        prop_assert_eq!(top.len(), k.min(n));
        prop_assert_eq!(&all[..top.len()], &top[..]);
        for w in all.windows(2) {
            prop_assert!(w[0].similarity > w[1].similarity || (w[0].similarity == w[1].similarity && w[0].aid < w[1].aid));
        }
    }

    #[test]
    fn extraction_recovers_embedded_object(
        map in prop::collection::btree_map("[A-Z][A-Za-z_]{0,10}", "[ -~&&[^\"\\\\]]{0,20}", 1..5),
        before in "[a-z ,.:\n]{0,40}",
        after in "[a-z ,.:\n]{0,40}",
        fenced in any::<bool>(),
    ) {
        let json = serde_json::to_string(&map).unwrap();
        let body = if fenced { format!("```json\n{json}\n```") } else { json };
        let text = format!("{before}{body}{after}");
        let keys: Vec<&str> = map.keys().map(String::as_str).collect();
        let got = extract_structured(&text, &keys).unwrap();
        let want: BTreeMap<String, String> = map
            .iter()
            .map(|(k, v)| (k.clone(), assaymol_core::llm::normalize_bool(v)))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn extraction_is_total(text in "[{}\\[\\]\",:a-zA-Z0-9 \n/]{0,200}") {
        let _ = extract_structured(&text, &["A"]);
    }

    #[test]
    fn prompt_respects_budget(
        sims in prop::collection::vec(0.0f64..1.0, 1..8),
        lines in 1usize..30,
        budget in 4_000usize..20_000,
    ) {
        let blocks: Vec<AssayContextBlock> = sims
            .iter()
            .enumerate()
            .map(|(i, &similarity)| {
                let sampled: Vec<ActivityRow> = (0..lines)
                    .map(|j| ActivityRow { smiles: format!("C{}O", "C".repeat(j % 20)), outcome: Outcome::Inactive, measure: None })
                    .collect();
                AssayContextBlock {
                    summary: AssaySummary { aid: i as u64 + 1, summary: "s".into(), assay_type: "t".into(), observations: "o".into(), counterscreen: false },
                    similarity,
                    table_lines: render_table(&sampled),
                    sampled,
                }
            })
            .collect();
        let t = Template::builtin(TemplateId::Generation);
        if let Ok(p) = build_prompt("query", &blocks, &t, budget) {
            prop_assert!(p.rendered_text.chars().count() <= budget);
            prop_assert_eq!(p.source_blocks.len() + p.dropped_blocks.len(), blocks.len());
            let min_kept = p.source_blocks.iter().map(|a| sims[*a as usize - 1]).fold(f64::INFINITY, f64::min);
            for d in &p.dropped_blocks {
                prop_assert!(sims[*d as usize - 1] <= min_kept);
            }
        }
    }
}

const SOUP: [&str; 16] = [
    BOS, EOS, "\n", "1.", "10)", "7", " ", "CCO", "c1ccccc1", "[BO", "S]", "`", "**", "[", "EOS]", "é",
];

#[test]
fn parse_generation_is_total_on_marker_soups() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..100_000 {
        let len = rng.gen_range(0..40);
        let text: String = (0..len).map(|_| SOUP[rng.gen_range(0..SOUP.len())]).collect();
        let p = parse_generation(&text);
        let markers = text.matches(BOS).count();
        assert!(p.entries.len() + p.failures.len() <= markers, "{text:?}");
        for e in &p.entries {
            assert!(e.ordinal >= 1);
            assert!(!e.smiles.is_empty() && e.smiles == e.smiles.trim());
            assert!(!e.smiles.contains(BOS) && !e.smiles.contains(EOS));
        }
        let m = validity_metrics(p.entries.iter().map(|e| e.smiles.as_str()));
        assert!((0.0..=1.0).contains(&m.validity));
    }
}
