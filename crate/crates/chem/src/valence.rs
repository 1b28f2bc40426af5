//! Hydrogen assignment, valence checks and aromatic kekulizability.

use crate::element;
use crate::error::SmilesError;
use crate::molecule::{Atom, Bond, BondOrder, Molecule};
use crate::parse::RawGraph;

/// Search-step cap for the kekulization matcher; beyond it the system is accepted as-is.
const KEKULE_STEP_BUDGET: usize = 200_000;

/// Implicit hydrogens for an unbracketed organic-subset atom, plus whether
/// the atom still needs a pi bond from its aromatic system.
///
/// `pi_mode` is set for aromatic atoms that sit on an aromatic bond and carry
/// no explicit double or triple bond; `bond_sum` counts aromatic bonds as one.
pub(crate) fn organic_hydrogens(atomic_number: u8, pi_mode: bool, bond_sum: u8) -> Option<(u8, bool)> {
    let Some(valences) = element::neutral_valences(atomic_number) else {
        // wildcard
        return Some((0, false));
    };
    let max = *valences.last().expect("non-empty table");
    if pi_mode {
        let default = valences[0];
        if bond_sum < default {
            return Some((default - bond_sum - 1, true));
        }
        return (bond_sum <= max).then_some((0, false));
    }
    valences
        .iter()
        .find(|&&v| v >= bond_sum)
        .map(|&v| (v - bond_sum, false))
}

/// Whether an aromatic atom takes part in kekulization: it must lie on an
/// aromatic bond and must not already own a double or triple bond.
pub(crate) fn in_pi_mode(mol: &Molecule, atom: usize) -> bool {
    mol.atoms[atom].aromatic
        && mol.adjacency[atom]
            .iter()
            .any(|&b| mol.bonds[b].order == BondOrder::Aromatic)
        && mol.adjacency[atom]
            .iter()
            .all(|&b| !matches!(mol.bonds[b].order, BondOrder::Double | BondOrder::Triple))
}

fn bond_sum(mol: &Molecule, atom: usize) -> u16 {
    mol.adjacency[atom]
        .iter()
        .map(|&b| mol.bonds[b].order.valence_contribution() as u16)
        .sum()
}

/// Charge-separates neutral pentavalent nitrogen carrying `=O`
/// (`CN(=O)=O` becomes `C[N+](=O)[O-]`).
fn separate_nitro_charges(mol: &mut Molecule) {
    for n in 0..mol.atoms.len() {
        let atom = &mol.atoms[n];
        if atom.atomic_number != element::NITROGEN || atom.charge != 0 || atom.aromatic {
            continue;
        }
        if bond_sum(mol, n) + atom.hydrogens as u16 != 5 {
            continue;
        }
        let oxo = mol.adjacency[n].iter().copied().find(|&b| {
            let bond = &mol.bonds[b];
            let o = bond.other(n);
            bond.order == BondOrder::Double
                && mol.atoms[o].atomic_number == element::OXYGEN
                && mol.atoms[o].charge == 0
                && mol.adjacency[o].len() == 1
        });
        if let Some(b) = oxo {
            let o = mol.bonds[b].other(n);
            mol.bonds[b].order = BondOrder::Single;
            for (idx, charge) in [(n, 1), (o, -1)] {
                let a = &mut mol.atoms[idx];
                a.charge = charge;
                a.bracket = true;
            }
        }
    }
}

/// Whether a bracket atom needs a pi bond, or `Err` if its explicit valence is impossible.
fn bracket_needs_pi(atom: &Atom, pi_mode: bool, bond_sum: u8) -> Result<bool, ()> {
    let Some(valences) = element::charged_valences(atom.atomic_number, atom.charge) else {
        return Ok(false);
    };
    let max = *valences.last().expect("non-empty table");
    let total = bond_sum as u16 + atom.hydrogens as u16;
    let needy = pi_mode && total < valences[0] as u16;
    if total + needy as u16 > max as u16 {
        return Err(());
    }
    Ok(needy)
}

pub(crate) fn finalize(raw: RawGraph) -> Result<Molecule, SmilesError> {
    let RawGraph { atoms, bonds, implicit } = raw;
    let mut mol = Molecule::new(atoms, bonds);

    // An implied bond between two aromatic atoms is only aromatic inside a ring
    // (biphenyl-style links are single).
    for (i, bond) in mol.bonds.iter_mut().enumerate() {
        if implicit[i] && bond.order == BondOrder::Aromatic && !mol.ring_bond[i] {
            bond.order = BondOrder::Single;
        }
    }
    separate_nitro_charges(&mut mol);

    let n = mol.atoms.len();
    let mut needy = vec![false; n];
    // Indexed: `mol` is reborrowed mutably inside the body.
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        if mol.atoms[i].aromatic && !mol.is_ring_atom(i) {
            return Err(SmilesError::Valence { atom: i });
        }
        let sum = u8::try_from(bond_sum(&mol, i)).map_err(|_| SmilesError::Valence { atom: i })?;
        let pi_mode = in_pi_mode(&mol, i);
        let atom = &mut mol.atoms[i];
        if atom.bracket {
            needy[i] = bracket_needs_pi(atom, pi_mode, sum).map_err(|_| SmilesError::Valence { atom: i })?;
        } else {
            let (h, pi) =
                organic_hydrogens(atom.atomic_number, pi_mode, sum).ok_or(SmilesError::Valence { atom: i })?;
            atom.hydrogens = h;
            needy[i] = pi;
        }
    }

    if let Some(atom) = unmatched_pi_atom(&mol, &needy) {
        return Err(SmilesError::Valence { atom });
    }

    Ok(fold_hydrogens(mol))
}

/// Tries to assign one double bond to every atom that needs a pi bond, using
/// only aromatic bonds between such atoms. Returns the first atom that cannot
/// be satisfied.
fn unmatched_pi_atom(mol: &Molecule, needy: &[bool]) -> Option<usize> {
    let n = mol.atoms.len();
    let graph: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if !needy[i] {
                return Vec::new();
            }
            mol.neighbors(i)
                .filter(|&(j, b)| needy[j] && mol.bonds[b].order == BondOrder::Aromatic)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let mut mate: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    for start in 0..n {
        if !needy[start] || seen[start] {
            continue;
        }
        // collect the connected pi system
        let mut component = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < component.len() {
            for &j in &graph[component[k]] {
                if !seen[j] {
                    seen[j] = true;
                    component.push(j);
                }
            }
            k += 1;
        }
        if component.len() % 2 == 1 {
            return Some(component[0]);
        }
        let mut steps = 0usize;
        if !match_component(&graph, &component, &mut mate, &mut steps) && steps <= KEKULE_STEP_BUDGET {
            return Some(*component.iter().min().expect("non-empty"));
        }
    }
    None
}

fn match_component(
    graph: &[Vec<usize>],
    component: &[usize],
    mate: &mut Vec<Option<usize>>,
    steps: &mut usize,
) -> bool {
    *steps += 1;
    if *steps > KEKULE_STEP_BUDGET {
        return false;
    }
    // most constrained unmatched atom first
    let mut pick: Option<(usize, usize)> = None;
    for &a in component {
        if mate[a].is_some() {
            continue;
        }
        let options = graph[a].iter().filter(|&&j| mate[j].is_none()).count();
        if options == 0 {
            return false;
        }
        if pick.is_none_or(|(_, best)| options < best) {
            pick = Some((a, options));
            if options == 1 {
                break;
            }
        }
    }
    let Some((a, _)) = pick else {
        return true;
    };
    for &j in &graph[a] {
        if mate[j].is_some() {
            continue;
        }
        mate[a] = Some(j);
        mate[j] = Some(a);
        if match_component(graph, component, mate, steps) {
            return true;
        }
        mate[a] = None;
        mate[j] = None;
        if *steps > KEKULE_STEP_BUDGET {
            return false;
        }
    }
    false
}

/// Removes plain `[H]` atoms attached by a single bond and adds them to the
/// neighbour's hydrogen count.
fn fold_hydrogens(mol: Molecule) -> Molecule {
    let foldable = |i: usize| -> Option<usize> {
        let a = &mol.atoms[i];
        if a.atomic_number != element::HYDROGEN
            || a.isotope.is_some()
            || a.charge != 0
            || a.hydrogens != 0
            || mol.adjacency[i].len() != 1
        {
            return None;
        }
        let b = &mol.bonds[mol.adjacency[i][0]];
        let other = b.other(i);
        (b.order == BondOrder::Single && mol.atoms[other].atomic_number != element::HYDROGEN).then_some(other)
    };
    let targets: Vec<Option<usize>> = (0..mol.atoms.len()).map(foldable).collect();
    if targets.iter().all(Option::is_none) {
        return mol;
    }

    let mut atoms = mol.atoms.clone();
    for t in targets.iter().flatten() {
        atoms[*t].hydrogens += 1;
    }
    let mut remap = vec![usize::MAX; atoms.len()];
    let mut kept = Vec::new();
    for (i, atom) in atoms.into_iter().enumerate() {
        if targets[i].is_none() {
            remap[i] = kept.len();
            kept.push(atom);
        }
    }
    let bonds: Vec<Bond> = mol
        .bonds
        .iter()
        .filter(|b| remap[b.begin] != usize::MAX && remap[b.end] != usize::MAX)
        .map(|b| Bond {
            begin: remap[b.begin],
            end: remap[b.end],
            order: b.order,
            direction: b.direction,
        })
        .collect();
    Molecule::new(kept, bonds)
}
