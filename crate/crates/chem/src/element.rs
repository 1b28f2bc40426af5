//! Periodic table lookups and default valence rules.

const SYMBOLS: [&str; 119] = [
    "*", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

pub const WILDCARD: u8 = 0;
pub const HYDROGEN: u8 = 1;
pub const BORON: u8 = 5;
pub const CARBON: u8 = 6;
pub const NITROGEN: u8 = 7;
pub const OXYGEN: u8 = 8;
pub const FLUORINE: u8 = 9;
pub const PHOSPHORUS: u8 = 15;
pub const SULFUR: u8 = 16;
pub const CHLORINE: u8 = 17;
pub const SELENIUM: u8 = 34;
pub const BROMINE: u8 = 35;
pub const IODINE: u8 = 53;

/// Symbol for an atomic number (`*` for the wildcard).
pub fn symbol(atomic_number: u8) -> &'static str {
    SYMBOLS.get(atomic_number as usize).copied().unwrap_or("*")
}

/// Looks up an element by its exact (case-sensitive) symbol.
pub fn from_symbol(sym: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| *s == sym)
        .filter(|&z| z > 0)
        .map(|z| z as u8)
}

/// Elements that may appear outside brackets.
pub fn is_organic_subset(atomic_number: u8) -> bool {
    matches!(
        atomic_number,
        BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | FLUORINE | CHLORINE | BROMINE | IODINE
    )
}

/// Elements that may be written as aromatic (lowercase) inside brackets.
pub fn can_be_aromatic(atomic_number: u8) -> bool {
    matches!(
        atomic_number,
        BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | SELENIUM | 33 | 52
    )
}

/// Allowed valences of a neutral element, lowest first. `None` means the
/// element is not valence-checked (metals, noble gases, wildcard).
pub fn neutral_valences(atomic_number: u8) -> Option<&'static [u8]> {
    Some(match atomic_number {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3],
        8 => &[2],
        9 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        17 => &[1],
        32 => &[4],
        33 => &[3, 5],
        34 => &[2, 4, 6],
        35 => &[1],
        52 => &[2, 4, 6],
        53 => &[1, 3, 5],
        _ => return None,
    })
}

/// Allowed valences after adjusting for formal charge: a charged atom takes
/// the valence list of its isoelectronic neighbour (N+ behaves like C, O- like F).
pub fn charged_valences(atomic_number: u8, charge: i8) -> Option<&'static [u8]> {
    if charge == 0 {
        return neutral_valences(atomic_number);
    }
    // Only main-group atoms with a checked neutral table get charge adjustment.
    neutral_valences(atomic_number)?;
    if atomic_number == HYDROGEN {
        return None;
    }
    let shifted = atomic_number as i16 - charge as i16;
    if !(1..=118).contains(&shifted) {
        return None;
    }
    let shifted = shifted as u8;
    // Stay within the same period; crossing into a noble gas or metal has no table.
    if period(shifted) != period(atomic_number) {
        return None;
    }
    neutral_valences(shifted)
}

fn period(z: u8) -> u8 {
    match z {
        0..=2 => 1,
        3..=10 => 2,
        11..=18 => 3,
        19..=36 => 4,
        37..=54 => 5,
        55..=86 => 6,
        _ => 7,
    }
}
