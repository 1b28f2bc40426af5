//! Molecule handling for generated-candidate evaluation: SMILES parsing with
//! valence validation, canonical SMILES, circular fingerprints, Tanimoto
//! similarity and set diversity.

mod canon;
pub mod element;
mod error;
mod fingerprint;
mod molecule;
mod parse;
mod rings;
mod valence;

pub use canon::write_smiles;
pub use error::{SimilarityError, SmilesError};
pub use fingerprint::{
    diversity, diversity_of_fingerprints, environment_ids, morgan_fingerprint, tanimoto, Fingerprint, DEFAULT_NBITS,
    DEFAULT_RADIUS,
};
pub use molecule::{Atom, Bond, BondOrder, Molecule};

/// Parses and validates a SMILES string.
///
/// Accepts the organic subset, bracket atoms (isotope, chirality, hydrogen
/// count, charge, atom class), ring closures including `%nn`, branches,
/// bond symbols and disconnected components. Stereo markers are kept as
/// annotations. Validation covers ring-closure pairing, parenthesis
/// balance, per-element valence with charge adjustment, and whether every
/// aromatic system admits a Kekulé structure.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let raw = parse::parse(text)?;
    valence::finalize(raw)
}

/// Parses and returns the canonical form in one step.
pub fn canonicalize(text: &str) -> Result<String, SmilesError> {
    parse_smiles(text).map(|m| m.canonical_smiles())
}
