//! Acceptance verdicts for hand-picked valence and aromaticity edge cases.

use assaymol_chem::parse_smiles;

const ACCEPTED: &[&str] = &[
    "CN(=O)=O",
    "C=N(=O)C",
    "[O+](C)(C)C",
    "[S+](C)(C)(C)(C)C",
    "[Cl+](C)C",
    "[Cl+](C)(C)C",
    "IC(I)",
    "I(C)(C)C",
    "[SH3]",
    "[SH5]",
    "[CH3]",
    "[CH]",
    "P(C)(C)(C)(C)C",
    "[cH-]1cccc1",
    "[nH+]1ccccc1",
    "c1cc[se]c1",
    "c1cc[te]c1",
    "b1ccccc1",
    "c1ccpcc1",
    "C1=CC=Cc=C1",
    "o1cccc1",
    "O=c1ccocc1",
    "s1cccc1",
    "O=s1cccc1",
    "c1ccccc1:C",
    "C:C",
    "C1:C:C:C:C:C1",
    "[c]1ccccc1",
    "[C+](C)(C)C",
    "[Na]C",
    "[Na](C)C",
    "[Mg](C)(C)C",
    "[H][H]",
    "[H+]",
    "[H]",
    "[2H]",
    "*C",
    "*",
    "[Xe]",
    "[Fe](C)(C)(C)(C)(C)(C)C",
    "c1cccc2c1cccc2",
    "[Br+2]",
];

const REJECTED: &[&str] = &[
    "N(C)(C)(C)(C)C",
    "[NH5]",
    "[N+](C)(C)(C)(C)C",
    "[O+](C)(C)(C)C",
    "[C-](C)(C)(C)C",
    "[B-](C)(C)(C)(C)C",
    "[P+](C)(C)(C)(C)C",
    "[N-](C)(C)C",
    "FC(F)(F)(F)F",
    "ClCl(Cl)",
    "S(C)(C)(C)(C)(C)(C)C",
    "P(C)(C)(C)(C)(C)(C)C",
    "O=S(=O)(=O)=O",
    "c1cc[c-]c1",
    "c1ccc[n+]1",
    "[as]1cccc1",
    "c1Ccccc1",
    "c1=cccc1",
    "c1ccc(=O)cc1",
    "[CH4+]",
    "C(*)(*)(*)(*)*",
    "C1CC1c",
];

#[test]
fn accepted_edge_cases() {
    let bad: Vec<_> = ACCEPTED.iter().filter(|s| parse_smiles(s).is_err()).collect();
    assert!(bad.is_empty(), "wrongly rejected: {bad:?}");
}

#[test]
fn rejected_edge_cases() {
    let bad: Vec<_> = REJECTED.iter().filter(|s| parse_smiles(s).is_ok()).collect();
    assert!(bad.is_empty(), "wrongly accepted: {bad:?}");
}
