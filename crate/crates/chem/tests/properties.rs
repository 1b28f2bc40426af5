use std::collections::BTreeSet;

use assaymol_chem::{
    canonicalize, morgan_fingerprint, parse_smiles, tanimoto, write_smiles, Fingerprint, Molecule, SmilesError,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORPUS: &str = include_str!("fixtures/reference_corpus.tsv");

fn valid_corpus() -> Vec<&'static str> {
    CORPUS
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once('\t'))
        .filter(|(_, v)| *v == "1")
        .map(|(s, _)| s)
        .filter(|s| parse_smiles(s).is_ok())
        .collect()
}

fn random_rendering(mol: &Molecule, rng: &mut ChaCha8Rng) -> String {
    let mut rank: Vec<u32> = (0..mol.atom_count() as u32).collect();
    rank.shuffle(rng);
    write_smiles(mol, &rank)
}

#[test]
fn canonical_round_trip_over_corpus() {
    for s in valid_corpus() {
        let once = canonicalize(s).unwrap();
        let twice = canonicalize(&once).unwrap_or_else(|e| panic!("{s} -> {once} fails to reparse: {e}"));
        assert_eq!(once, twice, "{s}");
    }
}

#[test]
fn canonical_form_ignores_atom_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus = valid_corpus();
    let picked: Vec<&str> = corpus.iter().copied().filter(|s| s.len() >= 15).take(50).collect();
    assert_eq!(picked.len(), 50);
    for s in picked {
        let mol = parse_smiles(s).unwrap();
        let forms: BTreeSet<String> = (0..100)
            .map(|_| {
                let text = random_rendering(&mol, &mut rng);
                canonicalize(&text).unwrap_or_else(|e| panic!("{s}: rendering {text} invalid: {e}"))
            })
            .collect();
        assert_eq!(forms.len(), 1, "{s}: {forms:?}");
        assert_eq!(forms.into_iter().next().unwrap(), mol.canonical_smiles());
    }
}

#[test]
fn twenty_atom_molecule_has_one_canonical_string() {
    let mol = parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)NCCc1ccncc1").unwrap();
    assert_eq!(mol.heavy_atom_count(), 23);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let forms: BTreeSet<String> = (0..100)
        .map(|_| canonicalize(&random_rendering(&mol, &mut rng)).unwrap())
        .collect();
    assert_eq!(forms.len(), 1);
}

#[test]
fn heavy_atoms_exclude_hydrogens() {
    assert_eq!(parse_smiles("[H]OC([H])([H])[H]").unwrap().heavy_atom_count(), 2);
    assert_eq!(parse_smiles("[2H]C").unwrap().heavy_atom_count(), 1);
    assert_eq!(parse_smiles("[H][H]").unwrap().heavy_atom_count(), 0);
    assert_eq!(parse_smiles("C[NH3+]").unwrap().heavy_atom_count(), 2);
}

const SOUP: &[u8] = b"CNOSPFIBrclnosp()[]=#-+:/\\.@%0123456789H*";

#[test]
fn parser_is_total_on_random_strings() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut accepted = 0usize;
    for _ in 0..100_000 {
        let len = rng.gen_range(0..24);
        let text: String = (0..len).map(|_| SOUP[rng.gen_range(0..SOUP.len())] as char).collect();
        match parse_smiles(&text) {
            Ok(m) => {
                accepted += 1;
                let c = m.canonical_smiles();
                assert!(parse_smiles(&c).is_ok(), "{text} -> {c}");
            }
            Err(
                SmilesError::Syntax { .. }
                | SmilesError::UnclosedRing { .. }
                | SmilesError::Valence { .. }
                | SmilesError::UnmatchedParen { .. },
            ) => {}
        }
    }
    assert!(accepted > 0);
}

fn set_oracle(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[test]
fn tanimoto_matches_set_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10_000 {
        let nbits = [8usize, 64, 100, 2048][rng.gen_range(0..4)];
        let density = rng.gen_range(0.0..0.5);
        let mut draw = || -> BTreeSet<usize> { (0..nbits).filter(|_| rng.gen_bool(density)).collect() };
        let (sa, sb) = (draw(), draw());
        let fa = Fingerprint::from_bits(nbits, sa.iter().copied());
        let fb = Fingerprint::from_bits(nbits, sb.iter().copied());
        assert_eq!(tanimoto(&fa, &fb).unwrap(), set_oracle(&sa, &sb));
    }
}

proptest! {
    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,40}") {
        let _ = parse_smiles(&s);
    }

    #[test]
    fn tanimoto_symmetric_and_reflexive(
        a in proptest::collection::btree_set(0usize..256, 0..40),
        b in proptest::collection::btree_set(0usize..256, 0..40),
    ) {
        let fa = Fingerprint::from_bits(256, a.iter().copied());
        let fb = Fingerprint::from_bits(256, b.iter().copied());
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
    }

    #[test]
    fn fingerprint_bits_in_range(idx in 0usize..300, nbits in prop::sample::select(vec![64usize, 1024, 2048])) {
        let corpus = valid_corpus();
        let mol = parse_smiles(corpus[idx % corpus.len()]).unwrap();
        let fp = morgan_fingerprint(&mol, 2, nbits);
        prop_assert!(fp.set_bits().iter().all(|&b| b < nbits));
        prop_assert!(fp.count_ones() <= 3 * mol.atom_count());
    }
}
