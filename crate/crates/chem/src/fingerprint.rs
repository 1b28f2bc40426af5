//! Circular (Morgan-style) fingerprints and set similarity.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::SimilarityError;
use crate::molecule::Molecule;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_NBITS: usize = 2048;

/// Fixed-width bitset of hashed atom environments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    nbits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(nbits: usize) -> Self {
        assert!(nbits > 0, "fingerprint width must be positive");
        Fingerprint {
            nbits,
            words: vec![0; nbits.div_ceil(64)],
        }
    }

    /// Builds a fingerprint from bit indices; every index must be `< nbits`.
    pub fn from_bits(nbits: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::empty(nbits);
        for b in bits {
            assert!(b < nbits, "bit {b} out of range for {nbits}-bit fingerprint");
            fp.words[b / 64] |= 1 << (b % 64);
        }
        fp
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn contains(&self, bit: usize) -> bool {
        bit < self.nbits && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    /// Set bit indices in ascending order.
    pub fn set_bits(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count_ones());
        for (wi, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let t = w.trailing_zeros() as usize;
                out.push(wi * 64 + t);
                w &= w - 1;
            }
        }
        out
    }

    /// Hex dump, byte `k` holding bits `8k..8k+8` with the lowest bit first.
    pub fn to_hex(&self) -> String {
        let nbytes = self.nbits.div_ceil(8);
        let mut s = String::with_capacity(nbytes * 2);
        for k in 0..nbytes {
            let byte = (self.words[k / 8] >> ((k % 8) * 8)) as u8;
            let _ = write!(s, "{byte:02x}");
        }
        s
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn hash_words(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // final avalanche so that folding by modulo uses all input bits
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Identifiers of every atom environment from radius 0 up to `radius`.
pub fn environment_ids(mol: &Molecule, radius: usize) -> BTreeSet<u64> {
    let n = mol.atom_count();
    let mut current: Vec<u64> = (0..n)
        .map(|i| {
            let a = &mol.atoms()[i];
            let heavy_degree = mol.neighbors(i).filter(|&(j, _)| mol.atoms()[j].is_heavy()).count();
            hash_words(&[
                a.atomic_number as u64,
                heavy_degree as u64,
                a.hydrogens as u64,
                a.charge as i64 as u64,
                a.isotope.unwrap_or(0) as u64,
                mol.is_ring_atom(i) as u64,
            ])
        })
        .collect();
    let mut ids: BTreeSet<u64> = current.iter().copied().collect();
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .map(|(j, b)| (mol.bonds()[b].order.code() as u64, current[j]))
                    .collect();
                env.sort_unstable();
                let mut words = Vec::with_capacity(2 + env.len() * 2);
                words.push(r as u64);
                words.push(current[i]);
                for (order, id) in env {
                    words.push(order);
                    words.push(id);
                }
                hash_words(&words)
            })
            .collect();
        ids.extend(next.iter().copied());
        current = next;
    }
    ids
}

/// Circular fingerprint over radii `0..=radius`, folded to `nbits`.
pub fn morgan_fingerprint(mol: &Molecule, radius: usize, nbits: usize) -> Fingerprint {
    let ids = environment_ids(mol, radius);
    Fingerprint::from_bits(nbits, ids.into_iter().map(|id| (id % nbits as u64) as usize))
}

/// |a ∩ b| / |a ∪ b|, defined as 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, SimilarityError> {
    if a.nbits != b.nbits {
        return Err(SimilarityError::SizeMismatch(a.nbits, b.nbits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// One minus the mean Tanimoto similarity over all unordered pairs.
pub fn diversity_of_fingerprints(fps: &[Fingerprint]) -> Result<f64, SimilarityError> {
    if fps.len() < 2 {
        return Err(SimilarityError::TooFew(fps.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..fps.len() {
        for j in i + 1..fps.len() {
            total += tanimoto(&fps[i], &fps[j])?;
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

/// Diversity of molecules using default fingerprint parameters.
pub fn diversity(mols: &[Molecule]) -> Result<f64, SimilarityError> {
    if mols.len() < 2 {
        return Err(SimilarityError::TooFew(mols.len()));
    }
    let fps: Vec<Fingerprint> = mols
        .iter()
        .map(|m| morgan_fingerprint(m, DEFAULT_RADIUS, DEFAULT_NBITS))
        .collect();
    diversity_of_fingerprints(&fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        morgan_fingerprint(&parse_smiles(s).unwrap(), DEFAULT_RADIUS, DEFAULT_NBITS)
    }

    #[test]
    fn identical_molecules_identical_fingerprints() {
        assert_eq!(fp("CCO"), fp("OCC"));
        assert_eq!(fp("c1ccccc1O"), fp("Oc1ccccc1"));
    }

    #[test]
    fn methane_and_ethane_differ() {
        assert_ne!(fp("C"), fp("CC"));
    }

    #[test]
    fn benzene_bit_count_bounded_by_environments() {
        let mol = parse_smiles("c1ccccc1").unwrap();
        let bits = morgan_fingerprint(&mol, 2, 2048).count_ones();
        assert!(bits >= 1);
        assert!(bits <= 3 * mol.atom_count());
    }

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bits(16, [1, 2, 3]);
        let b = Fingerprint::from_bits(16, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_bits(16, [7, 8]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let e = Fingerprint::empty(16);
        assert_eq!(tanimoto(&e, &e).unwrap(), 1.0);
        assert_eq!(
            tanimoto(&a, &Fingerprint::empty(32)),
            Err(SimilarityError::SizeMismatch(16, 32))
        );
    }

    #[test]
    fn diversity_examples() {
        let a = Fingerprint::from_bits(8, [0, 1]);
        let b = Fingerprint::from_bits(8, [1, 2]);
        let c = Fingerprint::from_bits(8, [0, 1]);
        // pairwise similarities: a-b 1/3, a-c 1, b-c 1/3
        let d = diversity_of_fingerprints(&[a.clone(), b, c]).unwrap();
        assert!((d - (1.0 - (1.0 / 3.0 + 1.0 + 1.0 / 3.0) / 3.0)).abs() < 1e-12);

        // {0.5, 0.5, 1.0} -> 1 - 2/3
        let x = Fingerprint::from_bits(8, [0, 1]);
        let y = Fingerprint::from_bits(8, [0, 1, 2, 3]);
        let z = Fingerprint::from_bits(8, [0, 1]);
        let d = diversity_of_fingerprints(&[x, y, z]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-12);

        assert_eq!(diversity_of_fingerprints(&[a]), Err(SimilarityError::TooFew(1)));
    }

    #[test]
    fn diversity_of_identical_and_disjoint_sets() {
        let same: Vec<Molecule> = (0..4).map(|_| parse_smiles("CCO").unwrap()).collect();
        assert_eq!(diversity(&same).unwrap(), 0.0);
        let disjoint = [
            Fingerprint::from_bits(64, [0, 1]),
            Fingerprint::from_bits(64, [2, 3]),
            Fingerprint::from_bits(64, [4]),
        ];
        assert_eq!(diversity_of_fingerprints(&disjoint).unwrap(), 1.0);
    }

    #[test]
    fn hex_layout() {
        let fp = Fingerprint::from_bits(16, [0, 9]);
        assert_eq!(fp.to_hex(), "0102");
        assert_eq!(fp.set_bits(), vec![0, 9]);
    }
}
