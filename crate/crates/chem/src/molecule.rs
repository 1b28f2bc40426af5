use crate::element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to valence; aromatic bonds count as one and the
    /// extra pi electron is tracked separately during kekulization.
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub charge: i8,
    pub isotope: Option<u16>,
    /// Total attached hydrogens (explicit bracket count, implicit, or folded `[H]` atoms).
    pub hydrogens: u8,
    /// Chirality token as written (`@`, `@@`, `@TH1`, ...). Kept as an annotation only.
    pub chirality: Option<String>,
    pub atom_class: Option<u32>,
    pub(crate) bracket: bool,
}

impl Atom {
    pub fn symbol(&self) -> &'static str {
        element::symbol(self.atomic_number)
    }

    pub fn is_heavy(&self) -> bool {
        self.atomic_number > element::HYDROGEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    /// Directional marker (`/` or `\`) as written. Annotation only.
    pub direction: Option<char>,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// A validated molecular graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    pub(crate) atoms: Vec<Atom>,
    pub(crate) bonds: Vec<Bond>,
    /// Bond indices per atom.
    pub(crate) adjacency: Vec<Vec<usize>>,
    pub(crate) ring_bond: Vec<bool>,
}

impl Molecule {
    pub(crate) fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Self {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, b) in bonds.iter().enumerate() {
            adjacency[b.begin].push(i);
            adjacency[b.end].push(i);
        }
        let ring_bond = crate::rings::ring_bonds(atoms.len(), &bonds, &adjacency);
        Molecule {
            atoms,
            bonds,
            adjacency,
            ring_bond,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Atoms other than hydrogen. Implicit and explicit hydrogens never count.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.is_heavy()).count()
    }

    /// `(neighbor, bond index)` pairs of an atom.
    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency[atom]
            .iter()
            .map(move |&b| (self.bonds[b].other(atom), b))
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn is_ring_bond(&self, bond: usize) -> bool {
        self.ring_bond[bond]
    }

    pub fn is_ring_atom(&self, atom: usize) -> bool {
        self.adjacency[atom].iter().any(|&b| self.ring_bond[b])
    }

    /// Canonical SMILES, independent of the atom order the molecule was built from.
    pub fn canonical_smiles(&self) -> String {
        crate::canon::canonical_smiles(self)
    }
}
