use crate::molecule::Bond;

/// Marks bonds that lie on at least one cycle (i.e. every bond that is not a bridge).
///
/// Iterative lowlink DFS so long chains cannot overflow the stack.
pub(crate) fn ring_bonds(n_atoms: usize, bonds: &[Bond], adjacency: &[Vec<usize>]) -> Vec<bool> {
    let mut in_ring = vec![true; bonds.len()];
    let mut disc = vec![usize::MAX; n_atoms];
    let mut low = vec![0usize; n_atoms];
    let mut timer = 0usize;

    for root in 0..n_atoms {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, bond used to enter it, next adjacency position)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;

        while let Some(top) = stack.len().checked_sub(1) {
            let (atom, parent_bond, pos) = stack[top];
            if pos < adjacency[atom].len() {
                stack[top].2 += 1;
                let bond = adjacency[atom][pos];
                if Some(bond) == parent_bond {
                    continue;
                }
                let next = bonds[bond].other(atom);
                if disc[next] == usize::MAX {
                    disc[next] = timer;
                    low[next] = timer;
                    timer += 1;
                    stack.push((next, Some(bond), 0));
                } else {
                    low[atom] = low[atom].min(disc[next]);
                }
            } else {
                stack.pop();
                if let (Some(bond), Some(&(parent, _, _))) = (parent_bond, stack.last()) {
                    low[parent] = low[parent].min(low[atom]);
                    if low[atom] > disc[parent] {
                        in_ring[bond] = false;
                    }
                }
            }
        }
    }
    in_ring
}
