//! Canonical atom ranking and SMILES output.
//!
//! Ranking starts from per-atom invariants and is refined by neighbour
//! classes until stable. Remaining ties are broken by an exhaustive
//! individualization search that keeps the lexicographically smallest
//! output string; subtrees that are images of each other under an
//! automorphism already found are skipped.

use crate::element;
use crate::molecule::{BondOrder, Molecule};
use crate::valence::{in_pi_mode, organic_hydrogens};

/// Upper bound on explored leaves; reached only by very symmetric cages.
const LEAF_BUDGET: usize = 4096;

pub(crate) fn canonical_smiles(mol: &Molecule) -> String {
    if mol.atoms.is_empty() {
        return String::new();
    }
    let initial = initial_labels(mol);
    let mut search = Search {
        mol,
        best: None,
        automorphisms: Vec::new(),
        leaves: 0,
    };
    let mut path = Vec::new();
    search.visit(initial, &mut path);
    search.best.expect("at least one leaf").0
}

/// Writes SMILES visiting atoms in ascending `rank` order (ties by index).
/// Canonical output uses canonical ranks; any other ranking gives a valid
/// but non-canonical rendering of the same molecule.
pub fn write_smiles(mol: &Molecule, rank: &[u32]) -> String {
    write_with_order(mol, rank).0
}

struct Search<'m> {
    mol: &'m Molecule,
    best: Option<(String, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
    leaves: usize,
}

impl Search<'_> {
    fn visit(&mut self, mut labels: Vec<u32>, path: &mut Vec<usize>) {
        refine(self.mol, &mut labels);
        let n = labels.len();
        let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        if classes == n {
            self.leaf(&labels);
            return;
        }

        // first non-singleton cell
        let mut counts = vec![0usize; classes];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let target = counts.iter().position(|&c| c > 1).expect("ties exist") as u32;
        let cell: Vec<usize> = (0..n).filter(|&i| labels[i] == target).collect();

        let mut explored: Vec<usize> = Vec::new();
        for &candidate in &cell {
            if self.leaves >= LEAF_BUDGET && self.best.is_some() {
                break;
            }
            if !explored.is_empty() && self.equivalent_to_explored(candidate, &explored, path) {
                continue;
            }
            let child = individualize(&labels, target, candidate);
            path.push(candidate);
            self.visit(child, path);
            path.pop();
            explored.push(candidate);
        }
    }

    fn leaf(&mut self, labels: &[u32]) {
        self.leaves += 1;
        let (text, order) = write_with_order(self.mol, labels);
        match &self.best {
            None => self.best = Some((text, order)),
            Some((best, best_order)) => {
                if text < *best {
                    self.best = Some((text, order));
                } else if text == *best {
                    // equal strings: mapping visit positions gives an automorphism
                    let mut perm = vec![0usize; order.len()];
                    for (k, &a) in best_order.iter().enumerate() {
                        perm[a] = order[k];
                    }
                    self.automorphisms.push(perm);
                }
            }
        }
    }

    /// Whether `candidate` lies in the orbit of an explored atom under the
    /// automorphisms that fix the current path pointwise.
    fn equivalent_to_explored(&self, candidate: usize, explored: &[usize], path: &[usize]) -> bool {
        let n = self.mol.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for perm in &self.automorphisms {
            if path.iter().any(|&p| perm[p] != p) {
                continue;
            }
            for (i, &j) in perm.iter().enumerate() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, candidate);
        explored.iter().any(|&e| find(&mut parent, e) == root)
    }
}

fn initial_labels(mol: &Molecule) -> Vec<u32> {
    let keys: Vec<_> = (0..mol.atoms.len())
        .map(|i| {
            let a = &mol.atoms[i];
            // Degree first so that output starts at a chain end.
            (
                mol.degree(i),
                a.atomic_number,
                a.isotope.unwrap_or(0),
                a.charge,
                a.aromatic,
                a.hydrogens,
                mol.is_ring_atom(i),
            )
        })
        .collect();
    dense_ranks(&keys)
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<u32> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("present") as u32)
        .collect()
}

fn refine(mol: &Molecule, labels: &mut Vec<u32>) {
    let mut classes = count_classes(labels);
    loop {
        let keys: Vec<(u32, Vec<(u32, u8)>)> = (0..labels.len())
            .map(|i| {
                let mut env: Vec<(u32, u8)> = mol
                    .neighbors(i)
                    .map(|(j, b)| (labels[j], mol.bonds[b].order.code()))
                    .collect();
                env.sort_unstable();
                (labels[i], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = count_classes(&next);
        *labels = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
}

fn count_classes(labels: &[u32]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m as usize + 1)
}

fn individualize(labels: &[u32], target: u32, chosen: usize) -> Vec<u32> {
    let keys: Vec<u64> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| l as u64 * 2 + u64::from(l == target && i != chosen))
        .collect();
    dense_ranks(&keys)
}

fn bond_symbol(mol: &Molecule, bond: usize) -> &'static str {
    let b = &mol.bonds[bond];
    let both_aromatic = mol.atoms[b.begin].aromatic && mol.atoms[b.end].aromatic;
    match b.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic && mol.ring_bond[bond] => "",
        BondOrder::Aromatic => ":",
    }
}

fn atom_symbol(mol: &Molecule, i: usize, out: &mut String) {
    let a = &mol.atoms[i];
    let bond_sum: u16 = mol
        .neighbors(i)
        .map(|(_, b)| mol.bonds[b].order.valence_contribution() as u16)
        .sum();
    let plain_ok = a.charge == 0
        && a.isotope.is_none()
        && if a.atomic_number == element::WILDCARD {
            a.hydrogens == 0
        } else {
            element::is_organic_subset(a.atomic_number)
                && u8::try_from(bond_sum)
                    .ok()
                    .and_then(|s| organic_hydrogens(a.atomic_number, in_pi_mode(mol, i), s))
                    .is_some_and(|(h, _)| h == a.hydrogens)
        };
    let sym = element::symbol(a.atomic_number);
    if plain_ok {
        if a.aromatic {
            out.push_str(&sym.to_ascii_lowercase());
        } else {
            out.push_str(sym);
        }
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        out.push_str(&iso.to_string());
    }
    if a.aromatic {
        out.push_str(&sym.to_ascii_lowercase());
    } else {
        out.push_str(sym);
    }
    match a.hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            out.push('H');
            out.push_str(&h.to_string());
        }
    }
    match a.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            out.push('+');
            out.push_str(&c.to_string());
        }
        c => {
            out.push('-');
            out.push_str(&(-c).to_string());
        }
    }
    out.push(']');
}

struct Layout {
    children: Vec<Vec<(usize, usize)>>,
    opens: Vec<Vec<usize>>,
    closes: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

fn layout(mol: &Molecule, rank: &[u32]) -> Layout {
    let n = mol.atoms.len();
    let key = |i: usize| (rank[i], i);
    let sorted_neighbors: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v: Vec<(usize, usize)> = mol.neighbors(i).collect();
            v.sort_by_key(|&(j, _)| key(j));
            v
        })
        .collect();

    let mut visited = vec![false; n];
    let mut bond_used = vec![false; mol.bonds.len()];
    let mut children = vec![Vec::new(); n];
    let mut opens = vec![Vec::new(); n];
    let mut closes = vec![Vec::new(); n];
    let mut roots = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| key(i));
    for &root in &order {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(top) = stack.len().checked_sub(1) {
            let (atom, pos) = stack[top];
            if pos >= sorted_neighbors[atom].len() {
                stack.pop();
                continue;
            }
            stack[top].1 += 1;
            let (next, bond) = sorted_neighbors[atom][pos];
            if bond_used[bond] {
                continue;
            }
            bond_used[bond] = true;
            if visited[next] {
                opens[next].push(bond);
                closes[atom].push(bond);
            } else {
                visited[next] = true;
                children[atom].push((next, bond));
                stack.push((next, 0));
            }
        }
    }
    Layout {
        children,
        opens,
        closes,
        roots,
    }
}

enum Task {
    Atom(usize, Option<usize>),
    Text(&'static str),
}

fn write_with_order(mol: &Molecule, rank: &[u32]) -> (String, Vec<usize>) {
    let lay = layout(mol, rank);
    let mut out = String::new();
    let mut visit_order = Vec::with_capacity(mol.atoms.len());
    let mut digit_of_bond: Vec<Option<u16>> = vec![None; mol.bonds.len()];
    let mut digit_busy: Vec<bool> = Vec::new();

    for (ci, &root) in lay.roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        let mut tasks = vec![Task::Atom(root, None)];
        while let Some(task) = tasks.pop() {
            let (atom, via) = match task {
                Task::Text(t) => {
                    out.push_str(t);
                    continue;
                }
                Task::Atom(a, via) => (a, via),
            };
            if let Some(b) = via {
                out.push_str(bond_symbol(mol, b));
            }
            atom_symbol(mol, atom, &mut out);
            visit_order.push(atom);

            let mut released = Vec::new();
            for &b in &lay.closes[atom] {
                let d = digit_of_bond[b].expect("opened before closing");
                push_digit(&mut out, d);
                released.push(d);
            }
            for &b in &lay.opens[atom] {
                let d = match digit_busy.iter().position(|busy| !busy) {
                    Some(free) => free,
                    None => {
                        digit_busy.push(false);
                        digit_busy.len() - 1
                    }
                };
                digit_busy[d] = true;
                let d = d as u16 + 1;
                digit_of_bond[b] = Some(d);
                out.push_str(bond_symbol(mol, b));
                push_digit(&mut out, d);
            }
            for d in released {
                digit_busy[d as usize - 1] = false;
            }

            let kids = &lay.children[atom];
            if let Some((&(last, last_bond), rest)) = kids.split_last() {
                tasks.push(Task::Atom(last, Some(last_bond)));
                for &(child, bond) in rest.iter().rev() {
                    tasks.push(Task::Text(")"));
                    tasks.push(Task::Atom(child, Some(bond)));
                    tasks.push(Task::Text("("));
                }
            }
        }
    }
    (out, visit_order)
}

fn push_digit(out: &mut String, d: u16) {
    if d < 10 {
        out.push((b'0' + d as u8) as char);
    } else {
        out.push('%');
        out.push_str(&format!("{d:02}"));
    }
}
