//! SMILES tokenizer/parser producing an unvalidated graph.

use std::collections::BTreeMap;

use crate::element;
use crate::error::SmilesError;
use crate::molecule::{Atom, Bond, BondOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BondToken {
    order: BondOrder,
    direction: Option<char>,
}

#[derive(Debug, Clone, Copy)]
struct RingOpen {
    atom: usize,
    bond: Option<BondToken>,
}

/// Raw parse output, before hydrogen assignment and valence checks.
pub(crate) struct RawGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Whether each bond's order was implied rather than written.
    pub implicit: Vec<bool>,
}

struct Branch {
    atom: usize,
    position: usize,
    atoms_at_open: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    implicit: Vec<bool>,
    prev: Option<usize>,
    pending: Option<BondToken>,
    branches: Vec<Branch>,
    rings: BTreeMap<u16, RingOpen>,
    // set right after '(' so that "()" and "((" are rejected
    just_opened: bool,
}

pub(crate) fn parse(text: &str) -> Result<RawGraph, SmilesError> {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        implicit: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
        just_opened: false,
    };
    p.run()?;
    Ok(RawGraph {
        atoms: p.atoms,
        bonds: p.bonds,
        implicit: p.implicit,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn syntax(&self) -> SmilesError {
        SmilesError::Syntax { position: self.pos }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        if self.s.is_empty() {
            return Err(SmilesError::Syntax { position: 0 });
        }
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(atom) = self.prev else {
                        return Err(self.syntax());
                    };
                    if self.pending.is_some() || self.just_opened {
                        return Err(self.syntax());
                    }
                    self.branches.push(Branch {
                        atom,
                        position: self.pos,
                        atoms_at_open: self.atoms.len(),
                    });
                    self.just_opened = true;
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() || self.just_opened {
                        return Err(self.syntax());
                    }
                    let Some(branch) = self.branches.pop() else {
                        return Err(SmilesError::UnmatchedParen { position: self.pos });
                    };
                    if self.atoms.len() == branch.atoms_at_open {
                        return Err(self.syntax());
                    }
                    self.prev = Some(branch.atom);
                    self.pos += 1;
                }
                b'.' => {
                    if self.prev.is_none() || self.pending.is_some() || self.just_opened {
                        return Err(self.syntax());
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.syntax());
                    }
                    let (order, direction) = match c {
                        b'-' => (BondOrder::Single, None),
                        b'=' => (BondOrder::Double, None),
                        b'#' => (BondOrder::Triple, None),
                        b':' => (BondOrder::Aromatic, None),
                        b'/' => (BondOrder::Single, Some('/')),
                        _ => (BondOrder::Single, Some('\\')),
                    };
                    self.pending = Some(BondToken { order, direction });
                    self.just_opened = false;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    if self.prev.is_none() || self.just_opened {
                        return Err(self.syntax());
                    }
                    self.ring_closure()?;
                }
                _ => {
                    let start = self.pos;
                    let atom = self.atom()?;
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    match self.prev {
                        Some(prev) => {
                            let token = self.pending.take();
                            self.add_bond(prev, idx, token);
                        }
                        None if self.pending.is_some() => {
                            return Err(SmilesError::Syntax { position: start });
                        }
                        None => {}
                    }
                    self.prev = Some(idx);
                    self.just_opened = false;
                }
            }
        }

        if self.pending.is_some() || self.just_opened {
            return Err(self.syntax());
        }
        if let Some(branch) = self.branches.first() {
            return Err(SmilesError::UnmatchedParen {
                position: branch.position,
            });
        }
        if let Some((&digit, _)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing { digit });
        }
        Ok(())
    }

    fn add_bond(&mut self, a: usize, b: usize, token: Option<BondToken>) {
        let (order, direction, implicit) = match token {
            Some(t) => (t.order, t.direction, false),
            None => {
                let order = if self.atoms[a].aromatic && self.atoms[b].aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                };
                (order, None, true)
            }
        };
        self.bonds.push(Bond {
            begin: a,
            end: b,
            order,
            direction,
        });
        self.implicit.push(implicit);
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let digit = if self.s[self.pos] == b'%' {
            let d = self.s.get(self.pos + 1..self.pos + 3);
            match d {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') as u16) * 10 + (d[1] - b'0') as u16
                }
                _ => return Err(SmilesError::Syntax { position: start }),
            }
        } else {
            self.pos += 1;
            (self.s[start] - b'0') as u16
        };
        let atom = self.prev.expect("checked by caller");
        let token = self.pending.take();
        match self.rings.remove(&digit) {
            Some(open) => {
                if open.atom == atom || self.bonded(open.atom, atom) {
                    return Err(SmilesError::Syntax { position: start });
                }
                let token = match (open.bond, token) {
                    (Some(x), Some(y)) if x.order != y.order => {
                        return Err(SmilesError::Syntax { position: start });
                    }
                    (Some(x), _) => Some(x),
                    (None, y) => y,
                };
                self.add_bond(open.atom, atom, token);
            }
            None => {
                self.rings.insert(digit, RingOpen { atom, bond: token });
            }
        }
        Ok(())
    }

    fn bonded(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|bd| (bd.begin == a && bd.end == b) || (bd.begin == b && bd.end == a))
    }

    fn atom(&mut self) -> Result<Atom, SmilesError> {
        let c = self.peek().ok_or_else(|| self.syntax())?;
        if c == b'[' {
            return self.bracket_atom();
        }
        let next = self.s.get(self.pos + 1).copied();
        let (z, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (element::CHLORINE, false, 2),
            (b'B', Some(b'r')) => (element::BROMINE, false, 2),
            (b'B', _) => (element::BORON, false, 1),
            (b'C', _) => (element::CARBON, false, 1),
            (b'N', _) => (element::NITROGEN, false, 1),
            (b'O', _) => (element::OXYGEN, false, 1),
            (b'P', _) => (element::PHOSPHORUS, false, 1),
            (b'S', _) => (element::SULFUR, false, 1),
            (b'F', _) => (element::FLUORINE, false, 1),
            (b'I', _) => (element::IODINE, false, 1),
            (b'b', _) => (element::BORON, true, 1),
            (b'c', _) => (element::CARBON, true, 1),
            (b'n', _) => (element::NITROGEN, true, 1),
            (b'o', _) => (element::OXYGEN, true, 1),
            (b'p', _) => (element::PHOSPHORUS, true, 1),
            (b's', _) => (element::SULFUR, true, 1),
            (b'*', _) => (element::WILDCARD, false, 1),
            _ => return Err(self.syntax()),
        };
        self.pos += len;
        Ok(Atom {
            atomic_number: z,
            aromatic,
            charge: 0,
            isotope: None,
            hydrogens: 0,
            chirality: None,
            atom_class: None,
            bracket: false,
        })
    }

    fn number(&mut self, max_digits: usize) -> Option<u32> {
        let start = self.pos;
        while self.pos - start < max_digits && self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        self.pos += 1; // '['
        let isotope = self.number(4).map(|v| v as u16);

        let (z, aromatic) = self.bracket_symbol()?;

        let chirality = if self.peek() == Some(b'@') {
            let start = self.pos;
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else {
                let rest = &self.s[self.pos..];
                let (prefix_len, max_digits) =
                    if rest.starts_with(b"TH") || rest.starts_with(b"AL") || rest.starts_with(b"SP") {
                        (2, 1)
                    } else if rest.starts_with(b"TB") || rest.starts_with(b"OH") {
                        (2, 2)
                    } else {
                        (0, 0)
                    };
                if prefix_len > 0 {
                    self.pos += prefix_len;
                    if self.number(max_digits).is_none() {
                        return Err(self.syntax());
                    }
                }
            }
            Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
        } else {
            None
        };

        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = match self.peek() {
                Some(d) if d.is_ascii_digit() => {
                    self.pos += 1;
                    d - b'0'
                }
                _ => 1,
            };
        }

        let mut charge: i8 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let unit: i8 = if sign == b'+' { 1 } else { -1 };
            if let Some(n) = self.number(2) {
                if n > 15 {
                    return Err(self.syntax());
                }
                charge = unit * n as i8;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                    if charge.abs() > 15 {
                        return Err(self.syntax());
                    }
                }
            }
        }

        let atom_class = if self.peek() == Some(b':') {
            self.pos += 1;
            match self.number(8) {
                Some(n) => Some(n),
                None => return Err(self.syntax()),
            }
        } else {
            None
        };

        if self.peek() != Some(b']') {
            return Err(self.syntax());
        }
        self.pos += 1;

        Ok(Atom {
            atomic_number: z,
            aromatic,
            charge,
            isotope,
            hydrogens,
            chirality,
            atom_class,
            bracket: true,
        })
    }

    fn bracket_symbol(&mut self) -> Result<(u8, bool), SmilesError> {
        let c = self.peek().ok_or_else(|| self.syntax())?;
        if c == b'*' {
            self.pos += 1;
            return Ok((element::WILDCARD, false));
        }
        if c.is_ascii_lowercase() {
            for (sym, z) in [("se", 34u8), ("as", 33), ("te", 52)] {
                if self.s[self.pos..].starts_with(sym.as_bytes()) {
                    self.pos += 2;
                    return Ok((z, true));
                }
            }
            let z = match c {
                b'b' => element::BORON,
                b'c' => element::CARBON,
                b'n' => element::NITROGEN,
                b'o' => element::OXYGEN,
                b'p' => element::PHOSPHORUS,
                b's' => element::SULFUR,
                _ => return Err(self.syntax()),
            };
            self.pos += 1;
            return Ok((z, true));
        }
        if c.is_ascii_uppercase() {
            if let Some(&l) = self.s.get(self.pos + 1) {
                if l.is_ascii_lowercase() {
                    let two = [c, l];
                    let sym = std::str::from_utf8(&two).unwrap_or("");
                    if let Some(z) = element::from_symbol(sym) {
                        self.pos += 2;
                        return Ok((z, false));
                    }
                }
            }
            let one = [c];
            let sym = std::str::from_utf8(&one).unwrap_or("");
            if let Some(z) = element::from_symbol(sym) {
                self.pos += 1;
                return Ok((z, false));
            }
        }
        Err(self.syntax())
    }
}
