//! Attributed molecular graphs, atom featurization, and the reaction-center
//! machinery.
//!
//! Hydrogens are not nodes; they live in each atom's `hydrogen_count`
//! attribute. Bond types are kept on the graph but are *not* model inputs —
//! they only feed `reaction_center`, where "no bond" counts as a bond type.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid atom map: {0}")]
    InvalidMap(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
}

/// Heavy-atom element, restricted to the supported alphabet plus a catch-all
/// used for wildcards and exotic bracket atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    Other,
}

impl Element {
    pub fn symbol(&self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::Other => "other",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            "other" => Element::Other,
            _ => return None,
        })
    }

    /// Standard valences, smallest first. `Other` has no table entry.
    pub fn valences(&self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::Other => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
    /// Only used when diffing reactant and product bonds; never stored on a
    /// parsed graph.
    None,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic counts 1.5.
    pub fn valence(&self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
            BondOrder::None => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub charge: i32,
    pub aromatic: bool,
    pub hydrogen_count: u8,
}

/// Undirected bond; endpoints are stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Bond {
        if a <= b {
            Bond { a, b, order }
        } else {
            Bond { a: b, b: a, order }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn new() -> Self {
        MolecularGraph {
            atoms: Vec::new(),
            bonds: Vec::new(),
        }
    }

    pub fn from_parts(atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Self {
        bonds.sort();
        bonds.dedup();
        MolecularGraph { atoms, bonds }
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    /// Adds an undirected bond; panics on self-loops or out-of-range ids,
    /// which indicate construction bugs rather than bad input.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) {
        assert!(a != b, "self-loop bond {}-{}", a, b);
        assert!(a < self.atoms.len() && b < self.atoms.len());
        let bond = Bond::new(a, b, order);
        match self.bonds.binary_search(&bond) {
            Ok(_) => {}
            Err(pos) => self.bonds.insert(pos, bond),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn bond_order(&self, a: usize, b: usize) -> Option<BondOrder> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.bonds
            .iter()
            .find(|bd| bd.a == lo && bd.b == hi)
            .map(|bd| bd.order)
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.bonds {
            if b.a == i {
                out.push(b.b);
            } else if b.b == i {
                out.push(b.a);
            }
        }
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == i || b.b == i).count()
    }

    /// Sum of incident bond-order valences for atom i.
    pub fn incident_order_sum(&self, i: usize) -> f64 {
        self.bonds
            .iter()
            .filter(|b| b.a == i || b.b == i)
            .map(|b| b.order.valence())
            .sum()
    }

    /// Relabels atoms through a bijection on 0..n: atom i of the input
    /// becomes atom permutation[i] of the output.
    pub fn permute_atoms(&self, permutation: &[usize]) -> Result<MolecularGraph, GraphError> {
        let n = self.atoms.len();
        if permutation.len() != n {
            return Err(GraphError::InvalidPermutation(format!(
                "length {} for {} atoms",
                permutation.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &p in permutation {
            if p >= n || seen[p] {
                return Err(GraphError::InvalidPermutation(format!(
                    "not a bijection at {}",
                    p
                )));
            }
            seen[p] = true;
        }
        let mut atoms = vec![
            Atom {
                element: Element::C,
                charge: 0,
                aromatic: false,
                hydrogen_count: 0
            };
            n
        ];
        for (i, &p) in permutation.iter().enumerate() {
            atoms[p] = self.atoms[i];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond::new(permutation[b.a], permutation[b.b], b.order))
            .collect();
        Ok(MolecularGraph::from_parts(atoms, bonds))
    }

    /// Deterministic isomorphism-invariant key: iterated neighborhood color
    /// refinement over (element, charge, aromatic, h-count) labels, then a
    /// sorted serialization of atoms and bonds by final color. Distinct
    /// graphs can in principle collide (the refinement is not a full
    /// canonical form); callers that deduplicate with this key accept that.
    pub fn canonical_key(&self) -> String {
        let n = self.atoms.len();
        let mut colors: Vec<u64> = self
            .atoms
            .iter()
            .map(|a| {
                hash_tuple(&[
                    a.element as u64,
                    (a.charge + 16) as u64,
                    a.aromatic as u64,
                    a.hydrogen_count as u64,
                ])
            })
            .collect();
        for _ in 0..n {
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                let mut neigh: Vec<u64> = self
                    .bonds
                    .iter()
                    .filter_map(|b| {
                        if b.a == i {
                            Some(hash_tuple(&[colors[b.b], b.order as u64]))
                        } else if b.b == i {
                            Some(hash_tuple(&[colors[b.a], b.order as u64]))
                        } else {
                            None
                        }
                    })
                    .collect();
                neigh.sort_unstable();
                let mut items = vec![colors[i]];
                items.extend(neigh);
                next.push(hash_tuple(&items));
            }
            if next == colors {
                break;
            }
            colors = next;
        }
        let mut atom_keys: Vec<String> = (0..n)
            .map(|i| {
                let a = &self.atoms[i];
                format!(
                    "{}:{}:{}:{}:{:016x}",
                    a.element.symbol(),
                    a.charge,
                    a.aromatic as u8,
                    a.hydrogen_count,
                    colors[i]
                )
            })
            .collect();
        atom_keys.sort();
        let mut bond_keys: Vec<String> = self
            .bonds
            .iter()
            .map(|b| {
                let (x, y) = if colors[b.a] <= colors[b.b] {
                    (colors[b.a], colors[b.b])
                } else {
                    (colors[b.b], colors[b.a])
                };
                format!("{:016x}-{:016x}:{:?}", x, y, b.order)
            })
            .collect();
        bond_keys.sort();
        format!("a[{}]b[{}]", atom_keys.join(","), bond_keys.join(","))
    }
}

impl Default for MolecularGraph {
    fn default() -> Self {
        Self::new()
    }
}

fn hash_tuple(items: &[u64]) -> u64 {
    // FNV-1a over the little-endian words; cheap and stable across runs.
    let mut h: u64 = 0xcbf29ce484222325;
    for &it in items {
        for byte in it.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// One reaction record: non-empty reactant and product sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reaction {
    pub id: String,
    pub reactants: Vec<MolecularGraph>,
    pub products: Vec<MolecularGraph>,
}

/// Views a list of molecules as one disconnected graph; returns the merged
/// graph and the per-molecule atom-id offsets.
pub fn merge_graphs(graphs: &[MolecularGraph]) -> (MolecularGraph, Vec<usize>) {
    let mut merged = MolecularGraph::new();
    let mut offsets = Vec::with_capacity(graphs.len());
    for g in graphs {
        let off = merged.atom_count();
        offsets.push(off);
        for a in g.atoms() {
            merged.add_atom(*a);
        }
        for b in g.bonds() {
            merged.add_bond(off + b.a, off + b.b, b.order);
        }
    }
    (merged, offsets)
}

/// Reactant atoms with at least one incident bond whose order differs between
/// the reactant side and the mapped product side ("no bond" is a valid
/// order). Atom ids are global over the merged reactant graph; the map sends
/// them to global ids over the merged product graph. Atoms absent from the
/// map are treated as deleted: they join the center unconditionally and all
/// their bonds become "none" on the product side.
pub fn reaction_center(
    reaction: &Reaction,
    atom_map: &BTreeMap<usize, usize>,
) -> Result<BTreeSet<usize>, GraphError> {
    let (r_merged, _) = merge_graphs(&reaction.reactants);
    let (p_merged, _) = merge_graphs(&reaction.products);

    let mut inverse: HashMap<usize, usize> = HashMap::new();
    for (&r, &p) in atom_map {
        if r >= r_merged.atom_count() {
            return Err(GraphError::InvalidMap(format!(
                "reactant atom {} out of range",
                r
            )));
        }
        if p >= p_merged.atom_count() {
            return Err(GraphError::InvalidMap(format!(
                "product atom {} out of range",
                p
            )));
        }
        if inverse.insert(p, r).is_some() {
            return Err(GraphError::InvalidMap(format!(
                "product atom {} mapped twice",
                p
            )));
        }
    }

    let mut center = BTreeSet::new();
    // Unmapped reactant atoms are deleted: in the center by definition.
    for r in 0..r_merged.atom_count() {
        if !atom_map.contains_key(&r) {
            center.insert(r);
        }
    }
    // Reactant bonds whose order changes (to a different order, or to none).
    for bond in r_merged.bonds() {
        let product_order = match (atom_map.get(&bond.a), atom_map.get(&bond.b)) {
            (Some(&pa), Some(&pb)) => p_merged.bond_order(pa, pb).unwrap_or(BondOrder::None),
            _ => BondOrder::None,
        };
        if product_order != bond.order {
            center.insert(bond.a);
            center.insert(bond.b);
        }
    }
    // Product bonds between images of mapped atoms that have no reactant
    // counterpart (created bonds).
    for bond in p_merged.bonds() {
        if let (Some(&ra), Some(&rb)) = (inverse.get(&bond.a), inverse.get(&bond.b)) {
            let reactant_order = r_merged.bond_order(ra, rb).unwrap_or(BondOrder::None);
            if reactant_order != bond.order {
                center.insert(ra);
                center.insert(rb);
            }
        }
    }
    Ok(center)
}

/// All atoms at shortest-path distance <= k from any seed, over the merged
/// (disconnected) graph formed by `graphs`. Atom ids are global.
pub fn k_hop_neighborhood(
    graphs: &[MolecularGraph],
    seeds: &BTreeSet<usize>,
    k: usize,
) -> BTreeSet<usize> {
    let (merged, _) = merge_graphs(graphs);
    let mut dist: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        dist.insert(s, 0);
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == k {
            continue;
        }
        for u in merged.neighbors(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                e.insert(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist.into_keys().collect()
}

/// Corpus-derived one-hot vocabularies for the four atom properties. Each
/// list carries an implicit trailing "unknown" slot; values never seen in the
/// corpus land there at encoding time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub elements: Vec<Element>,
    pub charges: Vec<i32>,
    pub aromatic: Vec<bool>,
    pub hydrogen_counts: Vec<u8>,
}

impl FeatureVocab {
    pub fn build(corpus: &[MolecularGraph]) -> Result<FeatureVocab, GraphError> {
        if corpus.is_empty() || corpus.iter().all(|g| g.atom_count() == 0) {
            return Err(GraphError::EmptyCorpus);
        }
        let mut elements = BTreeSet::new();
        let mut charges = BTreeSet::new();
        let mut aromatic = BTreeSet::new();
        let mut hydrogen_counts = BTreeSet::new();
        for g in corpus {
            for a in g.atoms() {
                elements.insert(a.element);
                charges.insert(a.charge);
                aromatic.insert(a.aromatic);
                hydrogen_counts.insert(a.hydrogen_count);
            }
        }
        let mut elements: Vec<Element> = elements.into_iter().collect();
        elements.sort_by_key(|e| e.symbol());
        Ok(FeatureVocab {
            elements,
            charges: charges.into_iter().collect(),
            aromatic: aromatic.into_iter().collect(),
            hydrogen_counts: hydrogen_counts.into_iter().collect(),
        })
    }

    /// Total feature dimension: each of the four lists plus its unknown slot.
    pub fn total_dim(&self) -> usize {
        self.elements.len() + self.charges.len() + self.aromatic.len() + self.hydrogen_counts.len() + 4
    }

    /// Concatenated one-hot encoding; exactly four entries are 1.
    pub fn encode_atom(&self, atom: &Atom) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dim()];
        let mut base = 0;
        one_hot(&mut out, base, &self.elements, &atom.element);
        base += self.elements.len() + 1;
        one_hot(&mut out, base, &self.charges, &atom.charge);
        base += self.charges.len() + 1;
        one_hot(&mut out, base, &self.aromatic, &atom.aromatic);
        base += self.aromatic.len() + 1;
        one_hot(&mut out, base, &self.hydrogen_counts, &atom.hydrogen_count);
        out
    }
}

fn one_hot<T: PartialEq>(out: &mut [f64], base: usize, list: &[T], value: &T) {
    match list.iter().position(|v| v == value) {
        Some(i) => out[base + i] = 1.0,
        // unknown slot: last position of this block
        None => out[base + list.len()] = 1.0,
    }
}
