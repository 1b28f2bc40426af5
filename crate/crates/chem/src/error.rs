use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("SMILES syntax error at position {position}")]
    Syntax { position: usize },
    #[error("ring bond {digit} is never closed")]
    UnclosedRing { digit: u16 },
    /// Covers impossible valences as well as aromatic systems that cannot be kekulized.
    #[error("valence violation at atom {atom}")]
    Valence { atom: usize },
    #[error("unmatched parenthesis at position {position}")]
    UnmatchedParen { position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("fingerprint sizes differ ({0} vs {1} bits)")]
    SizeMismatch(usize, usize),
    #[error("diversity needs at least two molecules, got {0}")]
    TooFew(usize),
}
