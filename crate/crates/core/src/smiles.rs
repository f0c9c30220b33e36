//! SMILES parsing for a pragmatic subset: bare atoms B C N O P S F Cl Br I,
//! aromatic b c n o p s, bracket atoms `[isotope? element @? Hn? charge?]`,
//! bonds `- = # :`, branches, ring closures 1-9 and %nn, and dots.
//!
//! Stereo markers (`/`, `\`, `@`, `@@`) are stripped rather than rejected;
//! the parser counts them per molecule. Bracketed unknown elements and `*`
//! map to the catch-all element `Other`; unbracketed unknown symbols are
//! errors.

use crate::graph::{Atom, Bond, BondOrder, Element, MolecularGraph, Reaction};

#[derive(Debug, thiserror::Error)]
pub enum SmilesError {
    #[error("empty input")]
    EmptyInput,
    #[error("unexpected character '{found}' at position {position}")]
    UnexpectedCharacter { position: usize, found: char },
    #[error("unclosed bracket atom starting at position {position}")]
    UnclosedBracket { position: usize },
    #[error("unmatched ring closure at position {position}")]
    UnmatchedRingClosure { position: usize },
    #[error("unmatched parenthesis at position {position}")]
    UnmatchedParenthesis { position: usize },
    #[error("bond at position {position} has no target atom")]
    DanglingBond { position: usize },
    #[error("valence exceeded on atom {atom}: bond orders sum to {order_sum}")]
    ValenceExceeded { atom: usize, order_sum: f64 },
    #[error("unknown element '{symbol}' outside brackets")]
    UnknownElement { symbol: String },
}

#[derive(Debug, thiserror::Error)]
pub enum ReactionParseError {
    #[error("expected 3 tab-separated columns, found {found}")]
    MalformedRecord { found: usize },
    #[error("{field}: {source}")]
    Field {
        field: String,
        #[source]
        source: SmilesError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    BareAtom,
    BracketAtom,
    BondSymbol,
    OpenBranch,
    CloseBranch,
    RingClosure,
    Dot,
}

/// One lexical unit. `text` is always a contiguous slice of the input and
/// `position` is its byte offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub position: usize,
}

/// Token sequence plus the number of stereo markers that were stripped.
#[derive(Clone, Debug)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub stripped_stereo: usize,
}

pub fn tokenize(input: &str) -> Result<TokenStream, SmilesError> {
    if input.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut stripped = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            'B' | 'C' if i + 1 < bytes.len() && matches!((c, bytes[i + 1] as char), ('B', 'r') | ('C', 'l')) => {
                tokens.push(Token {
                    kind: TokenKind::BareAtom,
                    text: input[i..i + 2].to_string(),
                    position: i,
                });
                i += 2;
            }
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' | 'b' | 'c' | 'n' | 'o' | 'p' | 's' => {
                tokens.push(Token {
                    kind: TokenKind::BareAtom,
                    text: input[i..i + 1].to_string(),
                    position: i,
                });
                i += 1;
            }
            '[' => {
                let close = input[i..]
                    .find(']')
                    .map(|off| i + off)
                    .ok_or(SmilesError::UnclosedBracket { position: i })?;
                // validate the inside now so errors carry a position
                let inner_stripped = validate_bracket(input, i, close)?;
                stripped += inner_stripped;
                tokens.push(Token {
                    kind: TokenKind::BracketAtom,
                    text: input[i..=close].to_string(),
                    position: i,
                });
                i = close + 1;
            }
            '-' | '=' | '#' | ':' => {
                tokens.push(Token {
                    kind: TokenKind::BondSymbol,
                    text: input[i..i + 1].to_string(),
                    position: i,
                });
                i += 1;
            }
            '/' | '\\' => {
                stripped += 1;
                i += 1;
            }
            '(' => {
                tokens.push(Token {
                    kind: TokenKind::OpenBranch,
                    text: "(".to_string(),
                    position: i,
                });
                i += 1;
            }
            ')' => {
                tokens.push(Token {
                    kind: TokenKind::CloseBranch,
                    text: ")".to_string(),
                    position: i,
                });
                i += 1;
            }
            '1'..='9' => {
                tokens.push(Token {
                    kind: TokenKind::RingClosure,
                    text: input[i..i + 1].to_string(),
                    position: i,
                });
                i += 1;
            }
            '%' => {
                if i + 2 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                    && bytes[i + 2].is_ascii_digit()
                {
                    tokens.push(Token {
                        kind: TokenKind::RingClosure,
                        text: input[i..i + 3].to_string(),
                        position: i,
                    });
                    i += 3;
                } else {
                    return Err(SmilesError::UnexpectedCharacter {
                        position: i,
                        found: '%',
                    });
                }
            }
            '.' => {
                tokens.push(Token {
                    kind: TokenKind::Dot,
                    text: ".".to_string(),
                    position: i,
                });
                i += 1;
            }
            other => {
                return Err(SmilesError::UnexpectedCharacter {
                    position: i,
                    found: other,
                });
            }
        }
    }
    Ok(TokenStream {
        tokens,
        stripped_stereo: stripped,
    })
}

/// Checks bracket contents character by character; returns the number of
/// stereo markers inside. `open`/`close` are byte offsets of '[' and ']'.
fn validate_bracket(input: &str, open: usize, close: usize) -> Result<usize, SmilesError> {
    parse_bracket_body(input, open, close).map(|b| b.stereo_markers)
}

struct BracketAtom {
    element: Element,
    aromatic: bool,
    charge: i32,
    explicit_h: u8,
    stereo_markers: usize,
}

fn parse_bracket_body(input: &str, open: usize, close: usize) -> Result<BracketAtom, SmilesError> {
    let bytes = input.as_bytes();
    let mut i = open + 1;
    let unexpected = |i: usize| SmilesError::UnexpectedCharacter {
        position: i,
        found: bytes[i] as char,
    };
    // isotope digits: parsed and discarded
    while i < close && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i >= close {
        return Err(SmilesError::UnexpectedCharacter {
            position: close,
            found: ']',
        });
    }
    // element symbol
    let (element, aromatic);
    let c = bytes[i] as char;
    if c == '*' {
        element = Element::Other;
        aromatic = false;
        i += 1;
    } else if c.is_ascii_uppercase() {
        let mut end = i + 1;
        if end < close && (bytes[end] as char).is_ascii_lowercase() {
            end += 1;
        }
        let sym = &input[i..end];
        element = Element::from_symbol(sym).unwrap_or(Element::Other);
        aromatic = false;
        i = end;
    } else if c.is_ascii_lowercase() {
        if matches!(c, 'b' | 'c' | 'n' | 'o' | 'p' | 's') {
            element = Element::from_symbol(&c.to_ascii_uppercase().to_string()).unwrap();
            i += 1;
        } else {
            // unknown aromatic element, e.g. [se]
            let mut end = i + 1;
            if end < close && (bytes[end] as char).is_ascii_lowercase() {
                end += 1;
            }
            element = Element::Other;
            i = end;
        }
        aromatic = true;
    } else {
        return Err(unexpected(i));
    }
    // modifiers in any order: stereo, H count, charge
    let mut stereo_markers = 0usize;
    let mut explicit_h = 0u8;
    let mut charge = 0i32;
    while i < close {
        match bytes[i] as char {
            '@' => {
                stereo_markers += 1;
                i += 1;
            }
            'H' => {
                let digits_at = i + 1;
                i += 1;
                let mut n = 0u32;
                let mut saw_digit = false;
                while i < close && bytes[i].is_ascii_digit() {
                    n = n.saturating_mul(10).saturating_add((bytes[i] - b'0') as u32);
                    saw_digit = true;
                    i += 1;
                }
                let count = if saw_digit { n } else { 1 };
                // atoms never carry more than 8 hydrogens
                if count > 8 {
                    return Err(SmilesError::UnexpectedCharacter {
                        position: digits_at,
                        found: bytes[digits_at] as char,
                    });
                }
                explicit_h = count as u8;
            }
            sign @ ('+' | '-') => {
                let unit: i32 = if sign == '+' { 1 } else { -1 };
                i += 1;
                let mut magnitude = 1i32;
                if i < close && bytes[i].is_ascii_digit() {
                    magnitude = 0;
                    while i < close && bytes[i].is_ascii_digit() {
                        magnitude = magnitude
                            .saturating_mul(10)
                            .saturating_add((bytes[i] - b'0') as i32);
                        i += 1;
                    }
                } else {
                    while i < close && bytes[i] as char == sign {
                        magnitude = magnitude.saturating_add(1);
                        i += 1;
                    }
                }
                charge = charge.saturating_add(unit.saturating_mul(magnitude));
            }
            _ => return Err(unexpected(i)),
        }
    }
    Ok(BracketAtom {
        element,
        aromatic,
        charge,
        explicit_h,
        stereo_markers,
    })
}

/// Implicit hydrogen count. For bracket atoms the written H count is
/// authoritative (0 when absent). For bare atoms: with S the sum of incident
/// bond orders (aromatic = 1.5), pick the smallest standard valence
/// v >= ceil(S) and return v - ceil(S); if no table valence reaches ceil(S),
/// return 0 — over-valence policing happens in `parse_molecule`, not here.
pub fn implicit_hydrogen_count(
    element: Element,
    _charge: i32,
    bracketed: bool,
    explicit_h: Option<u8>,
    incident_orders: &[BondOrder],
) -> Result<u8, SmilesError> {
    if bracketed {
        return Ok(explicit_h.unwrap_or(0));
    }
    if element == Element::Other {
        return Err(SmilesError::UnknownElement {
            symbol: element.symbol().to_string(),
        });
    }
    let s: f64 = incident_orders.iter().map(|o| o.valence()).sum();
    let need = s.ceil() as u8;
    for &v in element.valences() {
        if v >= need {
            return Ok(v - need);
        }
    }
    Ok(0)
}

struct PendingAtom {
    atom: Atom,
    bracketed: bool,
}

/// Parses one SMILES string into a molecular graph, also reporting how many
/// stereo markers were stripped.
pub fn parse_molecule_with_warnings(
    smiles: &str,
) -> Result<(MolecularGraph, usize), SmilesError> {
    let stream = tokenize(smiles)?;
    if stream.tokens.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut atoms: Vec<PendingAtom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending_bond: Option<(BondOrder, usize)> = None;
    let mut branch_stack: Vec<usize> = Vec::new();
    let mut open_rings: std::collections::HashMap<u32, (usize, Option<BondOrder>, usize)> =
        std::collections::HashMap::new();

    let bond_exists = |bonds: &[Bond], a: usize, b: usize| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        bonds.iter().any(|bd| bd.a == lo && bd.b == hi)
    };

    for token in &stream.tokens {
        match token.kind {
            TokenKind::BareAtom | TokenKind::BracketAtom => {
                let pending = if token.kind == TokenKind::BareAtom {
                    let aromatic = token.text.chars().next().unwrap().is_ascii_lowercase();
                    let sym = if aromatic {
                        token.text.to_ascii_uppercase()
                    } else {
                        token.text.clone()
                    };
                    let element =
                        Element::from_symbol(&sym).ok_or_else(|| SmilesError::UnknownElement {
                            symbol: token.text.clone(),
                        })?;
                    PendingAtom {
                        atom: Atom {
                            element,
                            charge: 0,
                            aromatic,
                            hydrogen_count: 0,
                        },
                        bracketed: false,
                    }
                } else {
                    let body = parse_bracket_body(
                        smiles,
                        token.position,
                        token.position + token.text.len() - 1,
                    )?;
                    PendingAtom {
                        atom: Atom {
                            element: body.element,
                            charge: body.charge,
                            aromatic: body.aromatic,
                            hydrogen_count: body.explicit_h,
                        },
                        bracketed: true,
                    }
                };
                let id = atoms.len();
                atoms.push(pending);
                if let Some(p) = prev {
                    let order = match pending_bond.take() {
                        Some((order, _)) => order,
                        None => default_bond(&atoms[p].atom, &atoms[id].atom),
                    };
                    bonds.push(Bond::new(p, id, order));
                }
                prev = Some(id);
            }
            TokenKind::BondSymbol => {
                if pending_bond.is_some() || prev.is_none() {
                    return Err(SmilesError::DanglingBond {
                        position: token.position,
                    });
                }
                let order = match token.text.as_str() {
                    "-" => BondOrder::Single,
                    "=" => BondOrder::Double,
                    "#" => BondOrder::Triple,
                    ":" => BondOrder::Aromatic,
                    _ => unreachable!("tokenizer only emits - = # :"),
                };
                pending_bond = Some((order, token.position));
            }
            TokenKind::OpenBranch => {
                let Some(p) = prev else {
                    return Err(SmilesError::UnmatchedParenthesis {
                        position: token.position,
                    });
                };
                if pending_bond.is_some() {
                    return Err(SmilesError::DanglingBond {
                        position: token.position,
                    });
                }
                branch_stack.push(p);
            }
            TokenKind::CloseBranch => {
                if pending_bond.is_some() {
                    return Err(SmilesError::DanglingBond {
                        position: token.position,
                    });
                }
                prev = Some(branch_stack.pop().ok_or(SmilesError::UnmatchedParenthesis {
                    position: token.position,
                })?);
            }
            TokenKind::RingClosure => {
                let Some(p) = prev else {
                    return Err(SmilesError::UnmatchedRingClosure {
                        position: token.position,
                    });
                };
                let index: u32 = if token.text.starts_with('%') {
                    token.text[1..].parse().unwrap()
                } else {
                    token.text.parse().unwrap()
                };
                match open_rings.remove(&index) {
                    None => {
                        open_rings.insert(index, (p, pending_bond.take().map(|(o, _)| o), token.position));
                    }
                    Some((partner, partner_bond, _)) => {
                        if partner == p || bond_exists(&bonds, partner, p) {
                            return Err(SmilesError::UnmatchedRingClosure {
                                position: token.position,
                            });
                        }
                        let order = match (partner_bond, pending_bond.take()) {
                            (Some(o), _) => o,
                            (None, Some((o, _))) => o,
                            (None, None) => default_bond(&atoms[partner].atom, &atoms[p].atom),
                        };
                        bonds.push(Bond::new(partner, p, order));
                    }
                }
            }
            TokenKind::Dot => {
                if pending_bond.is_some() {
                    return Err(SmilesError::DanglingBond {
                        position: token.position,
                    });
                }
                prev = None;
            }
        }
    }

    if let Some((_, position)) = pending_bond {
        return Err(SmilesError::DanglingBond { position });
    }
    if !branch_stack.is_empty() {
        return Err(SmilesError::UnmatchedParenthesis {
            position: smiles.len(),
        });
    }
    if let Some((_, (_, _, position))) = open_rings.into_iter().next() {
        return Err(SmilesError::UnmatchedRingClosure { position });
    }

    // fill hydrogen counts and police valence on bare atoms
    let mut graph_atoms = Vec::with_capacity(atoms.len());
    for (i, pending) in atoms.iter().enumerate() {
        let incident: Vec<BondOrder> = bonds
            .iter()
            .filter(|b| b.a == i || b.b == i)
            .map(|b| b.order)
            .collect();
        let mut atom = pending.atom;
        if pending.bracketed {
            // written H count is authoritative
        } else {
            let s: f64 = incident.iter().map(|o| o.valence()).sum();
            let v_max = *atom.element.valences().last().unwrap_or(&0) as f64;
            let has_aromatic = incident.contains(&BondOrder::Aromatic);
            // integral over-valence is an error; aromatic fusion atoms (half
            // orders) clamp to zero hydrogens instead
            if !has_aromatic && s > v_max {
                return Err(SmilesError::ValenceExceeded {
                    atom: i,
                    order_sum: s,
                });
            }
            atom.hydrogen_count =
                implicit_hydrogen_count(atom.element, atom.charge, false, None, &incident)?;
        }
        graph_atoms.push(atom);
    }

    Ok((
        MolecularGraph::from_parts(graph_atoms, bonds),
        stream.stripped_stereo,
    ))
}

pub fn parse_molecule(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    parse_molecule_with_warnings(smiles).map(|(g, _)| g)
}

fn default_bond(a: &Atom, b: &Atom) -> BondOrder {
    if a.aromatic && b.aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    }
}

/// Parses one TSV record `id<TAB>reactants<TAB>product`, with each side
/// holding dot-joined SMILES.
pub fn parse_reaction(line: &str) -> Result<Reaction, ReactionParseError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 3 {
        return Err(ReactionParseError::MalformedRecord { found: cols.len() });
    }
    let reactants = parse_side(cols[1], "reactant")?;
    let products = parse_side(cols[2], "product")?;
    Ok(Reaction {
        id: cols[0].trim().to_string(),
        reactants,
        products,
    })
}

fn parse_side(column: &str, side: &str) -> Result<Vec<MolecularGraph>, ReactionParseError> {
    let column = column.trim();
    if column.is_empty() {
        return Err(ReactionParseError::Field {
            field: format!("{} 1", side),
            source: SmilesError::EmptyInput,
        });
    }
    column
        .split('.')
        .enumerate()
        .map(|(i, part)| {
            parse_molecule(part).map_err(|source| ReactionParseError::Field {
                field: format!("{} {}", side, i + 1),
                source,
            })
        })
        .collect()
}

/// Serializes a graph back to SMILES (not canonical: atom order follows a
/// depth-first walk). Bracket atoms are used whenever the bare form would not
/// reproduce the stored charge or hydrogen count. Ring-closure digits are
/// reused once closed; a graph needing more than 100 simultaneously open
/// rings (far beyond any molecule) panics.
pub fn write_smiles(graph: &MolecularGraph) -> String {
    let n = graph.atom_count();
    let mut visited = vec![false; n];
    let mut pieces: Vec<String> = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut out = String::new();
        // find spanning-tree children and back edges via DFS
        let mut tree_children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut ring_edges: Vec<(usize, usize)> = Vec::new();
        let mut stack = vec![(start, usize::MAX)];
        let mut seen = vec![false; n];
        seen[start] = true;
        while let Some((v, parent)) = stack.pop() {
            let mut neigh = graph.neighbors(v);
            neigh.sort_unstable();
            for u in neigh {
                if u == parent {
                    continue;
                }
                if seen[u] {
                    let key = (u.min(v), u.max(v));
                    if !ring_edges.contains(&key) {
                        ring_edges.push(key);
                    }
                } else {
                    seen[u] = true;
                    tree_children[v].push(u);
                    stack.push((u, v));
                }
            }
        }
        let mut state = WriterState {
            ring_edges,
            open: std::collections::HashMap::new(),
            free: (0..100).rev().collect(),
        };
        emit_atom(graph, start, usize::MAX, &tree_children, &mut state, &mut out);
        for (i, &s) in seen.iter().enumerate() {
            if s {
                visited[i] = true;
            }
        }
        pieces.push(out);
    }
    pieces.join(".")
}

struct WriterState {
    /// Back edges of the current component, normalized (lo, hi).
    ring_edges: Vec<(usize, usize)>,
    /// Ring edges currently open, with their digit.
    open: std::collections::HashMap<(usize, usize), u32>,
    /// Digits available for allocation; 1-9 print bare, the rest as %nn.
    free: Vec<u32>,
}

fn emit_atom(
    graph: &MolecularGraph,
    v: usize,
    parent: usize,
    children: &[Vec<usize>],
    state: &mut WriterState,
    out: &mut String,
) {
    if parent != usize::MAX {
        out.push_str(bond_text(graph, parent, v));
    }
    out.push_str(&atom_text(graph, v));
    // ring closures touching v, lowest partner first for determinism
    let mut touching: Vec<(usize, usize)> = state
        .ring_edges
        .iter()
        .filter(|(a, b)| *a == v || *b == v)
        .copied()
        .collect();
    touching.sort();
    for key in touching {
        let partner = if key.0 == v { key.1 } else { key.0 };
        if let Some(digit) = state.open.remove(&key) {
            push_ring_digit(out, digit);
            state.free.push(digit);
        } else {
            let digit = pick_digit(&mut state.free);
            state.open.insert(key, digit);
            // the opening occurrence carries any explicit bond symbol
            out.push_str(bond_text(graph, v, partner));
            push_ring_digit(out, digit);
        }
    }
    let kids = &children[v];
    for (i, &u) in kids.iter().enumerate() {
        if i + 1 < kids.len() {
            out.push('(');
            emit_atom(graph, u, v, children, state, out);
            out.push(')');
        } else {
            emit_atom(graph, u, v, children, state, out);
        }
    }
}

fn pick_digit(free: &mut Vec<u32>) -> u32 {
    // prefer the single-character digits 1-9, then %10..%99, then %00
    let best = free
        .iter()
        .enumerate()
        .min_by_key(|(_, &d)| if d == 0 { 200 } else { d })
        .map(|(i, _)| i)
        .expect("more than 100 rings open at once");
    free.swap_remove(best)
}

fn push_ring_digit(out: &mut String, digit: u32) {
    if (1..10).contains(&digit) {
        out.push_str(&digit.to_string());
    } else {
        out.push_str(&format!("%{:02}", digit));
    }
}

fn bond_text(graph: &MolecularGraph, a: usize, b: usize) -> &'static str {
    let order = graph.bond_order(a, b).expect("bond exists");
    let both_aromatic = graph.atoms()[a].aromatic && graph.atoms()[b].aromatic;
    match order {
        BondOrder::Single => {
            if both_aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => {
            if both_aromatic {
                ""
            } else {
                ":"
            }
        }
        BondOrder::None => unreachable!("'none' bonds are never stored on graphs"),
    }
}

fn atom_text(graph: &MolecularGraph, v: usize) -> String {
    let atom = &graph.atoms()[v];
    let incident: Vec<BondOrder> = graph
        .bonds()
        .iter()
        .filter(|b| b.a == v || b.b == v)
        .map(|b| b.order)
        .collect();
    let bare_symbol = match (atom.element, atom.aromatic) {
        (Element::Other, _) => None,
        (el, false) => Some(el.symbol().to_string()),
        (el, true) => match el {
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S => {
                Some(el.symbol().to_ascii_lowercase())
            }
            _ => None,
        },
    };
    if let Some(sym) = bare_symbol {
        if atom.charge == 0 {
            if let Ok(h) = implicit_hydrogen_count(atom.element, 0, false, None, &incident) {
                let s: f64 = incident.iter().map(|o| o.valence()).sum();
                let v_max = *atom.element.valences().last().unwrap_or(&0) as f64;
                let integral_ok = incident.contains(&BondOrder::Aromatic) || s <= v_max;
                if integral_ok && h == atom.hydrogen_count {
                    return sym;
                }
            }
        }
        let mut t = format!("[{}", sym);
        push_h_and_charge(&mut t, atom);
        t.push(']');
        t
    } else {
        let mut t = String::from("[*");
        if atom.aromatic {
            // no bare aromatic form; the wildcard loses the flag
        }
        push_h_and_charge(&mut t, atom);
        t.push(']');
        t
    }
}

fn push_h_and_charge(t: &mut String, atom: &Atom) {
    match atom.hydrogen_count {
        0 => {}
        1 => t.push('H'),
        n => t.push_str(&format!("H{}", n)),
    }
    match atom.charge {
        0 => {}
        1 => t.push('+'),
        -1 => t.push('-'),
        c if c > 0 => t.push_str(&format!("+{}", c)),
        c => t.push_str(&format!("-{}", -c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Element;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().tokens.iter().map(|t| t.kind).collect()
    }

    #[test]
    fn tokenize_simple_chain() {
        use TokenKind::*;
        assert_eq!(kinds("CCO"), vec![BareAtom, BareAtom, BareAtom]);
    }

    #[test]
    fn tokenize_branch_and_two_letter_element() {
        use TokenKind::*;
        let stream = tokenize("C(Cl)=O").unwrap();
        let got: Vec<(TokenKind, &str)> = stream
            .tokens
            .iter()
            .map(|t| (t.kind, t.text.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                (BareAtom, "C"),
                (OpenBranch, "("),
                (BareAtom, "Cl"),
                (CloseBranch, ")"),
                (BondSymbol, "="),
                (BareAtom, "O"),
            ]
        );
    }

    #[test]
    fn tokenize_percent_ring_closure() {
        let stream = tokenize("C%12CC%12").unwrap();
        let rings: Vec<&Token> = stream
            .tokens
            .iter()
            .filter(|t| t.kind == TokenKind::RingClosure)
            .collect();
        assert_eq!(rings.len(), 2);
        assert_eq!(rings[0].text, "%12");
        assert_eq!(rings[1].text, "%12");
        let g = parse_molecule("C%12CC%12").unwrap();
        assert_eq!(g.atom_count(), 3);
        assert_eq!(g.bond_count(), 3);
    }

    #[test]
    fn token_positions_increase_and_payloads_rebuild_input() {
        for s in ["CCO", "C(Cl)=O", "c1ccccc1", "[NH4+].[O-]C", "C%12CC%12"] {
            let stream = tokenize(s).unwrap();
            let mut last = None;
            let mut rebuilt = String::new();
            for t in &stream.tokens {
                if let Some(prev) = last {
                    assert!(t.position > prev);
                }
                last = Some(t.position);
                rebuilt.push_str(&t.text);
            }
            assert_eq!(rebuilt, s);
        }
        // stereo bond markers are stripped from the payload stream
        let stream = tokenize("C/C=C/C").unwrap();
        let rebuilt: String = stream.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(rebuilt, "CC=CC");
        assert_eq!(stream.stripped_stereo, 2);
    }

    #[test]
    fn unexpected_character_reports_position() {
        match tokenize("CCqC") {
            Err(SmilesError::UnexpectedCharacter { position, found }) => {
                assert_eq!(position, 2);
                assert_eq!(found, 'q');
            }
            other => panic!("expected UnexpectedCharacter, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn parse_glycerol() {
        let g = parse_molecule("OCC(O)CO").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 5);
        let carbons = g
            .atoms()
            .iter()
            .filter(|a| a.element == Element::C)
            .count();
        let oxygens = g
            .atoms()
            .iter()
            .filter(|a| a.element == Element::O)
            .count();
        assert_eq!((carbons, oxygens), (3, 3));
    }

    #[test]
    fn lone_carbon_is_methane() {
        let g = parse_molecule("C").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bond_count(), 0);
        assert_eq!(g.atoms()[0].hydrogen_count, 4);
    }

    #[test]
    fn benzene_is_aromatic_with_one_hydrogen_each() {
        let g = parse_molecule("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 6);
        for atom in g.atoms() {
            assert!(atom.aromatic);
            assert_eq!(atom.hydrogen_count, 1);
        }
        for bond in g.bonds() {
            assert_eq!(bond.order, BondOrder::Aromatic);
        }
    }

    #[test]
    fn implicit_h_examples() {
        assert_eq!(
            implicit_hydrogen_count(
                Element::C,
                0,
                false,
                None,
                &[BondOrder::Single, BondOrder::Single]
            )
            .unwrap(),
            2
        );
        assert_eq!(
            implicit_hydrogen_count(
                Element::C,
                0,
                false,
                None,
                &[BondOrder::Aromatic, BondOrder::Aromatic]
            )
            .unwrap(),
            1
        );
        assert_eq!(
            implicit_hydrogen_count(
                Element::N,
                0,
                true,
                Some(1),
                &[BondOrder::Aromatic, BondOrder::Aromatic]
            )
            .unwrap(),
            1
        );
        // nitrogen promotes to its higher valence
        assert_eq!(
            implicit_hydrogen_count(
                Element::N,
                0,
                false,
                None,
                &[BondOrder::Double, BondOrder::Double]
            )
            .unwrap(),
            1
        );
        assert!(matches!(
            implicit_hydrogen_count(Element::Other, 0, false, None, &[]),
            Err(SmilesError::UnknownElement { .. })
        ));
    }

    #[test]
    fn implicit_h_monotone_in_order_sum() {
        // Monotone non-increasing for single-valence elements over the whole
        // range, and within each valence plateau for N, P, S (promotion to a
        // higher valence necessarily bumps the count back up: N with three
        // single bonds has 0 H, with four it promotes to valence 5 and has 1).
        for element in [
            Element::B,
            Element::C,
            Element::O,
            Element::F,
            Element::Cl,
            Element::Br,
            Element::I,
        ] {
            let mut prev = u8::MAX;
            for n_bonds in 0..=8 {
                let orders = vec![BondOrder::Single; n_bonds];
                let h = implicit_hydrogen_count(element, 0, false, None, &orders).unwrap();
                if n_bonds > 0 {
                    assert!(h <= prev, "{:?} at {} bonds", element, n_bonds);
                }
                prev = h;
            }
        }
        for element in [Element::N, Element::P, Element::S] {
            let mut plateau_start = 0usize;
            for &v in element.valences() {
                let mut prev = u8::MAX;
                for n_bonds in plateau_start..=(v as usize) {
                    let orders = vec![BondOrder::Single; n_bonds];
                    let h = implicit_hydrogen_count(element, 0, false, None, &orders).unwrap();
                    assert!(h <= prev, "{:?} at {} bonds", element, n_bonds);
                    prev = h;
                }
                plateau_start = v as usize + 1;
            }
        }
        // the promotion step itself, pinned
        let h3 = implicit_hydrogen_count(Element::N, 0, false, None, &[BondOrder::Single; 3]);
        let h4 = implicit_hydrogen_count(Element::N, 0, false, None, &[BondOrder::Single; 4]);
        assert_eq!((h3.unwrap(), h4.unwrap()), (0, 1));
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_molecule("[NH4+]").unwrap();
        let a = &g.atoms()[0];
        assert_eq!(a.element, Element::N);
        assert_eq!(a.charge, 1);
        assert_eq!(a.hydrogen_count, 4);
        assert!(!a.aromatic);

        let g = parse_molecule("[O-2]").unwrap();
        assert_eq!(g.atoms()[0].charge, -2);
        assert_eq!(g.atoms()[0].hydrogen_count, 0);

        let g = parse_molecule("[13CH3]C").unwrap();
        assert_eq!(g.atoms()[0].hydrogen_count, 3);

        // pyrrole nitrogen
        let g = parse_molecule("c1cc[nH]c1").unwrap();
        let n = g.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert!(n.aromatic);
        assert_eq!(n.hydrogen_count, 1);

        // unknown element in brackets becomes Other; wildcard too
        let g = parse_molecule("[Zn]").unwrap();
        assert_eq!(g.atoms()[0].element, Element::Other);
        let g = parse_molecule("[*]C").unwrap();
        assert_eq!(g.atoms()[0].element, Element::Other);
    }

    #[test]
    fn chirality_markers_are_stripped_with_warning() {
        let (g, warnings) = parse_molecule_with_warnings("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(warnings, 2);
        assert_eq!(g.atom_count(), 6);
        let (g2, w2) = parse_molecule_with_warnings("N[CH](C)C(=O)O").unwrap();
        assert_eq!(w2, 0);
        assert_eq!(g.canonical_key(), g2.canonical_key());
    }

    #[test]
    fn dots_make_components() {
        let g = parse_molecule("CC(=O)O.OCC").unwrap();
        assert_eq!(g.atom_count(), 7);
        assert_eq!(g.bond_count(), 5);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse_molecule("C1CC"),
            Err(SmilesError::UnmatchedRingClosure { .. })
        ));
        assert!(matches!(
            parse_molecule("C(C"),
            Err(SmilesError::UnmatchedParenthesis { .. })
        ));
        assert!(matches!(
            parse_molecule("CC)C"),
            Err(SmilesError::UnmatchedParenthesis { .. })
        ));
        assert!(matches!(
            parse_molecule("C="),
            Err(SmilesError::DanglingBond { .. })
        ));
        assert!(matches!(
            parse_molecule("=C"),
            Err(SmilesError::DanglingBond { .. })
        ));
        assert!(matches!(parse_molecule(""), Err(SmilesError::EmptyInput)));
        assert!(matches!(
            parse_molecule("[CH4"),
            Err(SmilesError::UnclosedBracket { .. })
        ));
        // ring closure to self and duplicate pair bonds
        assert!(matches!(
            parse_molecule("C11"),
            Err(SmilesError::UnmatchedRingClosure { .. })
        ));
        assert!(matches!(
            parse_molecule("C1C1"),
            Err(SmilesError::UnmatchedRingClosure { .. })
        ));
    }

    #[test]
    fn valence_exceeded_on_bare_atom() {
        assert!(matches!(
            parse_molecule("C(C)(C)(C)(C)C"),
            Err(SmilesError::ValenceExceeded { .. })
        ));
        // sulfur reaches its 6-valence instead
        let g = parse_molecule("O=S(=O)(O)O").unwrap();
        let s = g.atoms().iter().find(|a| a.element == Element::S).unwrap();
        assert_eq!(s.hydrogen_count, 0);
    }

    #[test]
    fn naphthalene_fusion_carbons_have_zero_hydrogens() {
        let g = parse_molecule("c1ccc2ccccc2c1").unwrap();
        assert_eq!(g.atom_count(), 10);
        assert_eq!(g.bond_count(), 11);
        let h_total: u32 = g.atoms().iter().map(|a| a.hydrogen_count as u32).sum();
        assert_eq!(h_total, 8);
    }

    #[test]
    fn ring_bond_uses_declared_symbol() {
        let g = parse_molecule("C=1CCCCC=1").unwrap();
        assert_eq!(g.bond_order(0, 5), Some(BondOrder::Double));
        let g = parse_molecule("C1CCCCC=1").unwrap();
        assert_eq!(g.bond_order(0, 5), Some(BondOrder::Double));
    }

    #[test]
    fn parse_reaction_records() {
        let r = parse_reaction("0\tCC(=O)O.OCC\tCC(=O)OCC").unwrap();
        assert_eq!(r.id, "0");
        assert_eq!(r.reactants.len(), 2);
        assert_eq!(r.products.len(), 1);

        let identity = parse_reaction("1\tC\tC").unwrap();
        assert_eq!(identity.reactants, identity.products);

        assert!(matches!(
            parse_reaction("0\tCC"),
            Err(ReactionParseError::MalformedRecord { found: 2 })
        ));
        match parse_reaction("0\tCC.C(C\tO") {
            Err(ReactionParseError::Field { field, .. }) => {
                assert_eq!(field, "reactant 2");
            }
            other => panic!("expected Field error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn parsing_is_pure() {
        let a = parse_molecule("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let b = parse_molecule("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_round_trips_structures() {
        for s in [
            "C",
            "CCO",
            "OCC(O)CO",
            "c1ccccc1",
            "CC(=O)OCC",
            "C#N",
            "c1ccc2ccccc2c1",
            "[NH4+].[O-]C",
            "C1CC1CC(C)(C)C",
            "O=S(=O)(O)O",
        ] {
            let g = parse_molecule(s).unwrap();
            let written = write_smiles(&g);
            let g2 = parse_molecule(&written)
                .unwrap_or_else(|e| panic!("re-parse of '{}' (from '{}') failed: {}", written, s, e));
            assert_eq!(
                g.canonical_key(),
                g2.canonical_key(),
                "round trip changed '{}' -> '{}'",
                s,
                written
            );
        }
    }
}
