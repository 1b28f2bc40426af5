//! Acceptance suite: one test per criterion, each reported by the harness as a
//! single `ok`/`FAILED` line. Tolerances and budgets are pinned below.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::panic;
use std::time::{Duration, Instant};

use assaymol_chem::{
    canonicalize, diversity, diversity_of_fingerprints, parse_smiles, tanimoto, write_smiles, Fingerprint,
};
use assaymol_core::context::{passes_gate, sample_molecules};
use assaymol_core::eval::{
    aggregate_targets, evaluate_target, high_affinity_fraction, improvement_over_baseline, read_score_file, ScoreTable,
    TargetInput,
};
use assaymol_core::generation::{GenerationBatch, GenerationRun};
use assaymol_core::index::{cosine, EmbeddingVector, IndexBuilder};
use assaymol_core::retrieval::{Hyperparameters, RelevanceGroup};
use assaymol_core::store::{ActivityRow, Outcome};
use assaymol_core::templates::{Template, TemplateId};
use common::{snapshot, Workspace};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RETRIEVAL_RECORDS: usize = 1000;
const RETRIEVAL_QUERIES: usize = 20;
const RETRIEVAL_K: usize = 300;
const RETRIEVAL_BUDGET: Duration = Duration::from_secs(5);
const COSINE_PAIRS: usize = 10_000;
const COSINE_TOLERANCE: f64 = 1e-9;
const SAMPLING_FUZZ_CASES: usize = 1000;
const VALIDITY_TOLERANCE: f64 = 1e-6;
const PERMUTATION_MOLECULES: usize = 50;
const PERMUTATION_SHUFFLES: usize = 100;
const REFERENCE_CORPUS_SIZE: usize = 500;
const REFERENCE_MIN_AGREEMENT: f64 = 0.99;
const FUZZ_STRINGS: usize = 100_000;
const TANIMOTO_PAIRS: usize = 10_000;
const E2E_BUDGET: Duration = Duration::from_secs(60);

const REFERENCE_CORPUS: &str = include_str!("../../chem/tests/fixtures/reference_corpus.tsv");

fn oracle_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    oracle_dot(a, b) / (oracle_dot(a, a).sqrt() * oracle_dot(b, b).sqrt())
}

fn f32_exact(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect()
}

#[test]
fn c1_retrieval_top_k_matches_brute_force_oracle() {
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut vectors: Vec<(u64, Vec<f64>)> = Vec::with_capacity(RETRIEVAL_RECORDS);
    for i in 0..RETRIEVAL_RECORDS {
        let aid = 10_000 + ((i as u64 * 7919) % 100_000);
        // The last 50 records duplicate earlier vectors so ties must break on aid.
        let v = if i >= RETRIEVAL_RECORDS - 50 {
            vectors[i - (RETRIEVAL_RECORDS - 50)].1.clone()
        } else {
            f32_exact(&mut rng, dim)
        };
        vectors.push((aid, v));
    }
    let mut builder = IndexBuilder::new(dim);
    for (aid, v) in &vectors {
        builder.add(*aid, &EmbeddingVector::new(v.clone()).unwrap()).unwrap();
    }
    let index = builder.build();
    let queries: Vec<Vec<f64>> = (0..RETRIEVAL_QUERIES).map(|_| f32_exact(&mut rng, dim)).collect();

    let started = Instant::now();
    let results: Vec<Vec<u64>> = queries
        .iter()
        .map(|q| {
            let hits = index
                .top_k(&EmbeddingVector::new(q.clone()).unwrap(), RETRIEVAL_K)
                .unwrap();
            hits.iter().map(|h| h.aid).collect()
        })
        .collect();
    let elapsed = started.elapsed();

    for (q, got) in queries.iter().zip(&results) {
        let mut scored: Vec<(f64, u64)> = vectors.iter().map(|(aid, v)| (oracle_cosine(q, v), *aid)).collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<u64> = scored.iter().take(RETRIEVAL_K).map(|s| s.1).collect();
        assert_eq!(got, &expected);
    }
    assert!(elapsed < RETRIEVAL_BUDGET, "took {elapsed:?}");
}

#[test]
fn c2_cosine_matches_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..COSINE_PAIRS {
        let dim = rng.gen_range(1..=256);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let got = cosine(
            &EmbeddingVector::new(a.clone()).unwrap(),
            &EmbeddingVector::new(b.clone()).unwrap(),
        )
        .unwrap();
        worst = worst.max((got - oracle_cosine(&a, &b)).abs());
    }
    assert!(worst <= COSINE_TOLERANCE, "max deviation {worst:e}");
}

#[test]
fn c3_relevance_group_boundary_table() {
    let table = [
        (0.0, RelevanceGroup::No),
        (0.1, RelevanceGroup::No),
        (0.10001, RelevanceGroup::Low),
        (0.4, RelevanceGroup::Low),
        (0.40001, RelevanceGroup::Medium),
        (0.69999, RelevanceGroup::Medium),
        (0.7, RelevanceGroup::High),
        (1.0, RelevanceGroup::High),
    ];
    for (x, expected) in table {
        assert_eq!(RelevanceGroup::for_fraction(x), expected, "x = {x}");
    }
}

fn rows(actives: usize, others: usize, rng: &mut ChaCha8Rng) -> Vec<ActivityRow> {
    let mut out = Vec::new();
    for i in 0..actives + others {
        let outcome = if i < actives {
            Outcome::Active
        } else if rng.gen_bool(0.5) {
            Outcome::Inactive
        } else {
            Outcome::Unspecified
        };
        out.push(ActivityRow {
            smiles: format!("C{}", "C".repeat(i % 30)),
            outcome,
            measure: None,
        });
    }
    out.shuffle(rng);
    out
}

fn expected_count(actives: usize, others: usize, n: usize) -> usize {
    if actives == 0 {
        (2 * n).min(others)
    } else {
        actives.min(n) + others.min(n)
    }
}

#[test]
fn c4_sampling_scenarios_and_fuzz() {
    let hp = Hyperparameters {
        n_mol: 8,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (a, o, want) in [(20, 30, 16), (3, 10, 11), (0, 40, 16)] {
        let table = rows(a, o, &mut rng);
        assert!(passes_gate(&table, &hp));
        let picked = sample_molecules(&table, &hp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(picked.len(), want, "{a} actives / {o} others");
        let picked_actives = picked.iter().filter(|r| r.outcome == Outcome::Active).count();
        assert_eq!(picked_actives, a.min(8));
        assert!(
            picked[..picked_actives].iter().all(|r| r.outcome == Outcome::Active),
            "actives come first"
        );
    }

    for case in 0..SAMPLING_FUZZ_CASES {
        let n = rng.gen_range(1..=12);
        let hp = Hyperparameters {
            n_mol: n,
            ..Default::default()
        };
        let (a, o) = (rng.gen_range(0..30), rng.gen_range(0..60));
        if a + o == 0 {
            continue;
        }
        let table = rows(a, o, &mut rng);
        let seed = rng.gen::<u64>();
        let first = sample_molecules(&table, &hp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let second = sample_molecules(&table, &hp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(first, second, "case {case} not seed-deterministic");
        assert!(first.len() <= 2 * n, "case {case}: {} > 2*{n}", first.len());
        assert_eq!(first.len(), expected_count(a, o, n), "case {case}");
    }
}

#[test]
fn c5_validity_metric_on_fixture_batches() {
    let mut run = GenerationRun::new("fixture", 0, "fixture-model", String::new());
    run.push(GenerationBatch::from_reply(
        0,
        include_str!("fixtures/validity_reply_0.txt").to_string(),
    ));
    run.push(GenerationBatch::from_reply(
        1,
        include_str!("fixtures/validity_reply_1.txt").to_string(),
    ));
    // Hand count: 17 distinct strings, `C1CC` has an unclosed ring, `OCC` respells `CCO`.
    assert_eq!(run.unique_generated, 17);
    assert_eq!(run.unique_parsable, 16);
    assert_eq!(run.unique_canonical.len(), 15);
    assert!(
        (run.validity - 16.0 / 17.0).abs() <= VALIDITY_TOLERANCE,
        "{}",
        run.validity
    );
    assert_eq!(format!("{:.4}", run.validity), "0.9412");
}

#[test]
fn c6_smiles_permutation_reference_agreement_and_fuzz() {
    let corpus: Vec<(&str, bool)> = REFERENCE_CORPUS
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once('\t').unwrap();
            (s, v == "1")
        })
        .collect();
    assert_eq!(corpus.len(), REFERENCE_CORPUS_SIZE);
    let agree = corpus.iter().filter(|(s, v)| parse_smiles(s).is_ok() == *v).count();
    let agreement = agree as f64 / corpus.len() as f64;
    assert!(agreement >= REFERENCE_MIN_AGREEMENT, "agreement {agreement}");

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let molecules: Vec<_> = corpus
        .iter()
        .filter(|(_, v)| *v)
        .filter_map(|(s, _)| parse_smiles(s).ok())
        .take(PERMUTATION_MOLECULES)
        .collect();
    assert_eq!(molecules.len(), PERMUTATION_MOLECULES);
    for mol in &molecules {
        let mut forms = BTreeSet::new();
        for _ in 0..PERMUTATION_SHUFFLES {
            let mut rank: Vec<u32> = (0..mol.atom_count() as u32).collect();
            rank.shuffle(&mut rng);
            forms.insert(canonicalize(&write_smiles(mol, &rank)).expect("shuffled rendering reparses"));
        }
        assert_eq!(forms.len(), 1, "{forms:?}");
    }

    let alphabet: Vec<char> = "CNOSPFIBrcnosp()[]=#%@+-123456789Hl.:/\\ ".chars().collect();
    let mut crashes = 0;
    for _ in 0..FUZZ_STRINGS {
        let len = rng.gen_range(0..24);
        let s: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        if panic::catch_unwind(|| {
            let _ = canonicalize(&s);
        })
        .is_err()
        {
            crashes += 1;
        }
    }
    assert_eq!(crashes, 0);
}

#[test]
fn c7_tanimoto_and_diversity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let nbits = 256;
    for _ in 0..TANIMOTO_PAIRS {
        let density = rng.gen_range(0.0..0.5);
        let a: BTreeSet<usize> = (0..nbits).filter(|_| rng.gen_bool(density)).collect();
        let b: BTreeSet<usize> = (0..nbits).filter(|_| rng.gen_bool(density)).collect();
        let union = a.union(&b).count();
        if union == 0 {
            continue;
        }
        let expected = a.intersection(&b).count() as f64 / union as f64;
        let got = tanimoto(
            &Fingerprint::from_bits(nbits, a.iter().copied()),
            &Fingerprint::from_bits(nbits, b.iter().copied()),
        )
        .unwrap();
        assert_eq!(got, expected);
    }

    let same: Vec<_> = (0..4).map(|_| parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap()).collect();
    assert_eq!(diversity(&same).unwrap(), 0.0);
    let disjoint: Vec<Fingerprint> = (0..5)
        .map(|i| Fingerprint::from_bits(nbits, [i * 3, i * 3 + 1]))
        .collect();
    assert_eq!(diversity_of_fingerprints(&disjoint).unwrap(), 1.0);
}

#[test]
fn c8_empty_template_renders_match_goldens() {
    let golden = |name: &str| {
        let p = format!("{}/../core/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{p}: {e}"))
    };
    for id in [
        TemplateId::Summarization,
        TemplateId::Relevance,
        TemplateId::Generation,
        TemplateId::Ablation,
        TemplateId::Optimization,
    ] {
        assert_eq!(
            Template::builtin(id).render_empty().as_bytes(),
            golden(id.file_name()).as_bytes(),
            "{:?}",
            id
        );
    }
}

const SCORES_T1: &str =
    "SMILES,KIND,VALUE\nCCO,vina_dock,-8.0\nc1ccccc1,vina_dock,-6.5\nCCN,vina_dock,-7.0\nCC(=O)O,vina_dock,-9.5\n";
const SCORES_T2: &str = "SMILES,KIND,VALUE\nOCCC,vina_dock,-5.0\nCCCC,vina_dock,-6.0\n";
const SCORES_T3: &str =
    "SMILES,KIND,VALUE\nc1ccncc1,vina_dock,-10.0\nOCCO,vina_dock,-4.0\nC1CCCCC1,vina_dock,-7.0\nCCCN,vina_dock,-7.0\n";
const BASELINE: [f64; 4] = [-6.0, -7.0, -8.0, -7.0];

#[test]
fn c9_metric_plumbing_and_reproducible_offline_run() {
    // Hand-computed per target: (reference, vina_avg, vina_med, high_affinity, improvement_avg).
    let expected = [
        (-7.0, -7.75, -7.5, 0.5, 0.75),
        (-5.0, -5.5, -5.5, 0.5, -1.5),
        (-7.0, -7.0, -7.0, 0.25, 0.0),
    ];
    let mut reports = Vec::new();
    for (i, (file, (reference, avg, med, high, imp))) in
        [SCORES_T1, SCORES_T2, SCORES_T3].iter().zip(expected).enumerate()
    {
        let records = read_score_file(file.as_bytes()).unwrap();
        let table = ScoreTable::from_records(&records);
        let molecules: Vec<String> = records.iter().map(|r| r.canonical_smiles.clone()).collect();
        for r in &records {
            let improvement = improvement_over_baseline(r.value, &BASELINE).unwrap();
            assert_eq!(improvement + r.value, -7.0, "sign identity for {}", r.canonical_smiles);
        }
        let report = evaluate_target(
            &TargetInput {
                target_id: &format!("T{}", i + 1),
                molecules: &molecules,
                validity: 1.0,
                reference_score: Some(reference),
                baseline_scores: Some(&BASELINE),
                relevance_group: None,
            },
            &table,
        )
        .unwrap();
        assert_eq!(report.vina_avg, Some(avg));
        assert_eq!(report.vina_med, Some(med));
        assert_eq!(report.high_affinity, Some(high));
        assert_eq!(report.improvement_avg, Some(imp));
        assert_eq!(report.improvement_avg.unwrap() + report.vina_avg.unwrap(), -7.0);
        reports.push(report);
    }
    // A score equal to the reference does not count as high affinity.
    assert_eq!(high_affinity_fraction(&[-7.0], -7.0).unwrap(), 0.0);
    let agg = aggregate_targets(&reports).unwrap();
    assert_eq!(agg.metrics["vina_avg"].avg, -6.75);
    assert_eq!(agg.metrics["vina_avg"].med, -7.0);
    assert_eq!(agg.metrics["high_affinity"].avg, 1.25 / 3.0);
    assert_eq!(agg.metrics["high_affinity"].med, 0.5);

    let ws = Workspace::new("");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        ws.reset();
        let started = Instant::now();
        ws.run_ok(&["--mock-llm", "pipeline"]);
        let run_dir = ws.run_dir();
        let molecules: Vec<String> = std::fs::read_to_string(run_dir.join("targets/K1/molecules.txt"))
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect();
        ws.write_scores(&molecules);
        ws.run_ok(&["--mock-llm", "evaluate"]);
        let elapsed = started.elapsed();
        assert!(elapsed < E2E_BUDGET, "offline run took {elapsed:?}");
        let batches = std::fs::read_dir(run_dir.join("targets/K1/batches")).unwrap().count();
        assert_eq!(batches, 10, "default run issues ten generation calls");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(run_dir.join("targets/K1/report.json")).unwrap()).unwrap();
        assert_eq!(report["n_docked"].as_u64(), Some(molecules.len() as u64));
        snapshots.push(snapshot(&ws.path().join("out")));
    }
    let names: HashSet<&str> = snapshots[0].iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.iter().any(|n| n.ends_with("molecules.txt")));
    assert_eq!(snapshots[0], snapshots[1], "two offline invocations differ");
}
