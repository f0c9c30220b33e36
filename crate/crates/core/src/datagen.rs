//! Deterministic synthetic reaction families.
//!
//! Three fixed reaction cores, each with two alkyl attachment points, emit
//! reactions together with their ground-truth atom maps and declared center
//! atoms. Templates are built directly as graph rewrites (never through
//! SMILES text) so the maps are exact by construction. Small byproducts
//! (water, HBr, the oxidant) are consistently omitted, the way reaction
//! datasets are usually written.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{
    k_hop_neighborhood, merge_graphs, Atom, BondOrder, Element, MolecularGraph, Reaction,
};
use crate::smiles::write_smiles;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("alkyl tree size {0} out of range 1..=12")]
    SizeOutOfRange(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateKind {
    /// R1-CH2-COOH + R2-CH2-CH2-OH -> R1-CH2-CO-O-CH2-CH2-R2 (water omitted)
    Esterification,
    /// R1-CH2-CH(OH)-CH2-R2 -> R1-CH2-CO-CH2-R2 (oxidant omitted)
    Oxidation,
    /// R1-CH2-CH2-Br + R2-CH2-CH2-NH2 -> R1-CH2-CH2-NH-CH2-CH2-R2 (HBr omitted)
    Substitution,
}

impl TemplateKind {
    pub fn name(&self) -> &'static str {
        match self {
            TemplateKind::Esterification => "ester",
            TemplateKind::Oxidation => "oxidation",
            TemplateKind::Substitution => "substitution",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateKind> {
        Some(match s {
            "ester" => TemplateKind::Esterification,
            "oxidation" => TemplateKind::Oxidation,
            "substitution" => TemplateKind::Substitution,
            _ => return None,
        })
    }

    pub const ALL: [TemplateKind; 3] = [
        TemplateKind::Esterification,
        TemplateKind::Oxidation,
        TemplateKind::Substitution,
    ];

    /// Extra CH2 spacer needed so every atom whose first-layer representation
    /// can change sits in the fixed core (oxidation's attachment carbons are
    /// adjacent to the carbonyl otherwise).
    fn default_spacer(&self) -> usize {
        match self {
            TemplateKind::Oxidation => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TemplateOptions {
    /// Substituent sizes are drawn uniformly from this inclusive range.
    /// A size of 0 leaves the bare core (allowed only when min == max == 0).
    pub min_substituent: usize,
    pub max_substituent: usize,
    /// CH2 spacers inserted between each attachment carbon and its
    /// substituent; controls the attachment distance from the center.
    pub spacer: usize,
}

impl TemplateOptions {
    pub fn for_template(kind: TemplateKind) -> Self {
        TemplateOptions {
            min_substituent: 1,
            max_substituent: 6,
            spacer: kind.default_spacer(),
        }
    }

    pub fn bare_core() -> Self {
        TemplateOptions {
            min_substituent: 0,
            max_substituent: 0,
            spacer: 0,
        }
    }
}

/// One generated reaction with its ground truth.
#[derive(Clone, Debug)]
pub struct TemplateInstance {
    pub reaction: Reaction,
    /// Global reactant atom id (merged reactant graph) -> global product
    /// atom id (merged product graph). Deleted atoms are absent.
    pub atom_map: BTreeMap<usize, usize>,
    /// Declared reaction center, global reactant ids.
    pub center: BTreeSet<usize>,
    /// Global reactant ids of the interchangeable substituent atoms (the
    /// random trees, excluding any fixed CH2 spacers).
    pub substituent_atoms: BTreeSet<usize>,
}

impl TemplateInstance {
    /// TSV record in the reaction file format.
    pub fn to_tsv_line(&self, id: &str) -> String {
        let reactants: Vec<String> = self.reaction.reactants.iter().map(write_smiles).collect();
        let products: Vec<String> = self.reaction.products.iter().map(write_smiles).collect();
        format!("{}\t{}\t{}", id, reactants.join("."), products.join("."))
    }

    /// Shortest distance from each reactant atom to the declared center.
    pub fn distances_from_center(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        let mut reached = BTreeSet::new();
        let mut k = 0usize;
        let (merged, _) = merge_graphs(&self.reaction.reactants);
        while reached.len() < merged.atom_count() {
            let ball = k_hop_neighborhood(&self.reaction.reactants, &self.center, k);
            for &a in ball.difference(&reached).collect::<Vec<_>>() {
                out.insert(a, k);
            }
            if ball.len() == reached.len() {
                break; // disconnected remainder never reaches the center
            }
            reached = ball;
            k += 1;
        }
        out
    }

    /// New instance with the element of one mapped atom at exactly the given
    /// center distance swapped (consistently on both sides). Hydrogen counts
    /// and bonds stay untouched, so the center and map are unchanged.
    pub fn mutate_element_at_distance(
        &self,
        distance: usize,
        to: Element,
    ) -> Option<TemplateInstance> {
        let distances = self.distances_from_center();
        let (_, r_offsets) = merge_graphs(&self.reaction.reactants);
        let (_, p_offsets) = merge_graphs(&self.reaction.products);
        let reactant_atom_counts: Vec<usize> = self
            .reaction
            .reactants
            .iter()
            .map(|g| g.atom_count())
            .collect();
        let product_atom_counts: Vec<usize> = self
            .reaction
            .products
            .iter()
            .map(|g| g.atom_count())
            .collect();
        let locate = |global: usize, offsets: &[usize], counts: &[usize]| {
            for (m, &off) in offsets.iter().enumerate() {
                if global >= off && global < off + counts[m] {
                    return (m, global - off);
                }
            }
            unreachable!("global id within merged graph");
        };
        for (&atom, &d) in &distances {
            if d != distance {
                continue;
            }
            let Some(&image) = self.atom_map.get(&atom) else {
                continue;
            };
            let (rm, rl) = locate(atom, &r_offsets, &reactant_atom_counts);
            if self.reaction.reactants[rm].atoms()[rl].element == to {
                continue;
            }
            let mut mutated = self.clone();
            let (pm, pl) = locate(image, &p_offsets, &product_atom_counts);
            mutated.reaction.reactants[rm].atom_mut(rl).element = to;
            mutated.reaction.products[pm].atom_mut(pl).element = to;
            return Some(mutated);
        }
        None
    }
}

/// Random tree of carbons with valid hydrogen counts and all degrees <= 4.
pub fn generate_alkyl_tree(size: usize, seed: u64) -> Result<MolecularGraph, DatagenError> {
    alkyl_tree_with_root_cap(size, seed, 4)
}

/// Like `generate_alkyl_tree` but atom 0 keeps a free valence slot so the
/// tree can be bonded onto a core.
fn attachable_tree(size: usize, seed: u64) -> Result<MolecularGraph, DatagenError> {
    alkyl_tree_with_root_cap(size, seed, 3)
}

fn alkyl_tree_with_root_cap(
    size: usize,
    seed: u64,
    root_cap: usize,
) -> Result<MolecularGraph, DatagenError> {
    if size == 0 || size > 12 {
        return Err(DatagenError::SizeOutOfRange(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MolecularGraph::new();
    for _ in 0..size {
        g.add_atom(Atom {
            element: Element::C,
            charge: 0,
            aromatic: false,
            hydrogen_count: 0,
        });
    }
    for i in 1..size {
        let eligible: Vec<usize> = (0..i)
            .filter(|&p| g.degree(p) < if p == 0 { root_cap } else { 4 })
            .collect();
        let parent = eligible[rng.random_range(0..eligible.len())];
        g.add_bond(i, parent, BondOrder::Single);
    }
    for i in 0..size {
        g.atom_mut(i).hydrogen_count = 4 - g.degree(i) as u8;
    }
    Ok(g)
}

/// Molecule under construction; carbons registered as "auto" get their
/// hydrogen count filled from 4 - degree when finished.
struct MolBuilder {
    g: MolecularGraph,
    auto_h: Vec<usize>,
}

impl MolBuilder {
    fn new() -> Self {
        MolBuilder {
            g: MolecularGraph::new(),
            auto_h: Vec::new(),
        }
    }

    fn atom(&mut self, element: Element, hydrogen_count: u8) -> usize {
        self.g.add_atom(Atom {
            element,
            charge: 0,
            aromatic: false,
            hydrogen_count,
        })
    }

    fn carbon_auto(&mut self) -> usize {
        let id = self.atom(Element::C, 0);
        self.auto_h.push(id);
        id
    }

    fn bond(&mut self, a: usize, b: usize, order: BondOrder) {
        self.g.add_bond(a, b, order);
    }

    /// Attaches `spacer` CH2 carbons and then a copy of `tree` (its atom 0 is
    /// the root). Returns the ids of the added atoms in order.
    fn attach_alkyl(&mut self, anchor: usize, spacer: usize, tree: Option<&MolecularGraph>) -> Vec<usize> {
        let mut added = Vec::new();
        let mut tip = anchor;
        for _ in 0..spacer {
            let c = self.carbon_auto();
            self.bond(tip, c, BondOrder::Single);
            added.push(c);
            tip = c;
        }
        if let Some(tree) = tree {
            let base = self.g.atom_count();
            for _ in tree.atoms() {
                let c = self.carbon_auto();
                added.push(c);
            }
            for b in tree.bonds() {
                self.bond(base + b.a, base + b.b, b.order);
            }
            self.bond(tip, base, BondOrder::Single);
        }
        added
    }

    fn finish(mut self) -> MolecularGraph {
        for &i in &self.auto_h {
            let h = 4 - self.g.degree(i) as u8;
            self.g.atom_mut(i).hydrogen_count = h;
        }
        self.g
    }
}

/// Generates `n` instances of the template with default options.
pub fn generate_template_reactions(
    kind: TemplateKind,
    n: usize,
    seed: u64,
) -> Vec<TemplateInstance> {
    generate_template_reactions_with(kind, n, seed, &TemplateOptions::for_template(kind))
}

pub fn generate_template_reactions_with(
    kind: TemplateKind,
    n: usize,
    seed: u64,
    options: &TemplateOptions,
) -> Vec<TemplateInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e3a_1c55_9b42_d8f1);
    (0..n)
        .map(|_| {
            let s1 = pick_size(&mut rng, options);
            let s2 = pick_size(&mut rng, options);
            let t1 = s1.map(|s| attachable_tree(s, rng.random()).expect("size in range"));
            let t2 = s2.map(|s| attachable_tree(s, rng.random()).expect("size in range"));
            instantiate(kind, options.spacer, t1.as_ref(), t2.as_ref())
        })
        .collect()
}

fn pick_size(rng: &mut ChaCha8Rng, options: &TemplateOptions) -> Option<usize> {
    if options.max_substituent == 0 {
        return None;
    }
    Some(rng.random_range(options.min_substituent.max(1)..=options.max_substituent))
}

fn instantiate(
    kind: TemplateKind,
    spacer: usize,
    r1: Option<&MolecularGraph>,
    r2: Option<&MolecularGraph>,
) -> TemplateInstance {
    match kind {
        TemplateKind::Esterification => esterification(spacer, r1, r2),
        TemplateKind::Oxidation => oxidation(spacer, r1, r2),
        TemplateKind::Substitution => substitution(spacer, r1, r2),
    }
}

fn esterification(
    spacer: usize,
    r1: Option<&MolecularGraph>,
    r2: Option<&MolecularGraph>,
) -> TemplateInstance {
    // acid: C_a(attach) - C_b(=O_c)(O_d H)
    let mut acid = MolBuilder::new();
    let c_a = acid.carbon_auto();
    let c_b = acid.atom(Element::C, 0);
    let o_c = acid.atom(Element::O, 0);
    let o_d = acid.atom(Element::O, 1);
    acid.bond(c_a, c_b, BondOrder::Single);
    acid.bond(c_b, o_c, BondOrder::Double);
    acid.bond(c_b, o_d, BondOrder::Single);
    let r1_atoms = acid.attach_alkyl(c_a, spacer, r1);
    let acid = acid.finish();

    // alcohol: C_e(attach) - C_f - O_g H
    let mut alcohol = MolBuilder::new();
    let c_e = alcohol.carbon_auto();
    let c_f = alcohol.carbon_auto();
    let o_g = alcohol.atom(Element::O, 1);
    alcohol.bond(c_e, c_f, BondOrder::Single);
    alcohol.bond(c_f, o_g, BondOrder::Single);
    let r2_atoms = alcohol.attach_alkyl(c_e, spacer, r2);
    let alcohol = alcohol.finish();

    // ester: C_a' - C_b'(=O_c') - O_g' - C_f' - C_e'
    let mut ester = MolBuilder::new();
    let p_a = ester.carbon_auto();
    let p_b = ester.atom(Element::C, 0);
    let p_c = ester.atom(Element::O, 0);
    let p_og = ester.atom(Element::O, 0);
    let p_f = ester.carbon_auto();
    let p_e = ester.carbon_auto();
    ester.bond(p_a, p_b, BondOrder::Single);
    ester.bond(p_b, p_c, BondOrder::Double);
    ester.bond(p_b, p_og, BondOrder::Single);
    ester.bond(p_og, p_f, BondOrder::Single);
    ester.bond(p_f, p_e, BondOrder::Single);
    let p_r1_atoms = ester.attach_alkyl(p_a, spacer, r1);
    let p_r2_atoms = ester.attach_alkyl(p_e, spacer, r2);
    let ester = ester.finish();

    let alcohol_offset = acid.atom_count();
    let mut atom_map = BTreeMap::new();
    atom_map.insert(c_a, p_a);
    atom_map.insert(c_b, p_b);
    atom_map.insert(o_c, p_c);
    // o_d departs as (omitted) water
    atom_map.insert(alcohol_offset + c_e, p_e);
    atom_map.insert(alcohol_offset + c_f, p_f);
    atom_map.insert(alcohol_offset + o_g, p_og);
    for (ra, pa) in r1_atoms.iter().zip(&p_r1_atoms) {
        atom_map.insert(*ra, *pa);
    }
    for (ra, pa) in r2_atoms.iter().zip(&p_r2_atoms) {
        atom_map.insert(alcohol_offset + ra, *pa);
    }
    let center = BTreeSet::from([c_b, o_d, alcohol_offset + o_g]);
    let mut substituent_atoms = BTreeSet::new();
    substituent_atoms.extend(r1_atoms.iter().skip(spacer).copied());
    substituent_atoms.extend(r2_atoms.iter().skip(spacer).map(|&a| alcohol_offset + a));

    TemplateInstance {
        reaction: Reaction {
            id: String::new(),
            reactants: vec![acid, alcohol],
            products: vec![ester],
        },
        atom_map,
        center,
        substituent_atoms,
    }
}

fn oxidation(
    spacer: usize,
    r1: Option<&MolecularGraph>,
    r2: Option<&MolecularGraph>,
) -> TemplateInstance {
    // reactant: C_a - C_b(H)(O_c H) - C_d ; product: same with C_b = O_c
    let build = |carbonyl: bool, r1: Option<&MolecularGraph>, r2: Option<&MolecularGraph>| {
        let mut m = MolBuilder::new();
        let c_a = m.carbon_auto();
        let c_b = m.atom(Element::C, if carbonyl { 0 } else { 1 });
        let o_c = m.atom(Element::O, if carbonyl { 0 } else { 1 });
        let c_d = m.carbon_auto();
        m.bond(c_a, c_b, BondOrder::Single);
        m.bond(
            c_b,
            o_c,
            if carbonyl {
                BondOrder::Double
            } else {
                BondOrder::Single
            },
        );
        m.bond(c_b, c_d, BondOrder::Single);
        let a1 = m.attach_alkyl(c_a, spacer, r1);
        let a2 = m.attach_alkyl(c_d, spacer, r2);
        (m.finish(), c_a, c_b, o_c, c_d, a1, a2)
    };
    let (reactant, c_a, c_b, o_c, c_d, r1_atoms, r2_atoms) = build(false, r1, r2);
    let (product, p_a, p_b, p_c, p_d, p1_atoms, p2_atoms) = build(true, r1, r2);
    let mut atom_map = BTreeMap::new();
    atom_map.insert(c_a, p_a);
    atom_map.insert(c_b, p_b);
    atom_map.insert(o_c, p_c);
    atom_map.insert(c_d, p_d);
    for (ra, pa) in r1_atoms.iter().zip(&p1_atoms) {
        atom_map.insert(*ra, *pa);
    }
    for (ra, pa) in r2_atoms.iter().zip(&p2_atoms) {
        atom_map.insert(*ra, *pa);
    }
    let center = BTreeSet::from([c_b, o_c]);
    let mut substituent_atoms = BTreeSet::new();
    substituent_atoms.extend(r1_atoms.iter().skip(spacer).copied());
    substituent_atoms.extend(r2_atoms.iter().skip(spacer).copied());
    TemplateInstance {
        reaction: Reaction {
            id: String::new(),
            reactants: vec![reactant],
            products: vec![product],
        },
        atom_map,
        center,
        substituent_atoms,
    }
}

fn substitution(
    spacer: usize,
    r1: Option<&MolecularGraph>,
    r2: Option<&MolecularGraph>,
) -> TemplateInstance {
    // R1-C_a-C_b-Br + R2-C_e-C_d-N(H2) -> R1-C_a-C_b-N(H)-C_d-C_e-R2
    let mut halide = MolBuilder::new();
    let c_a = halide.carbon_auto();
    let c_b = halide.carbon_auto();
    let br = halide.atom(Element::Br, 0);
    halide.bond(c_a, c_b, BondOrder::Single);
    halide.bond(c_b, br, BondOrder::Single);
    let r1_atoms = halide.attach_alkyl(c_a, spacer, r1);
    let halide = halide.finish();

    let mut amine = MolBuilder::new();
    let c_e = amine.carbon_auto();
    let c_d = amine.carbon_auto();
    let nit = amine.atom(Element::N, 2);
    amine.bond(c_e, c_d, BondOrder::Single);
    amine.bond(c_d, nit, BondOrder::Single);
    let r2_atoms = amine.attach_alkyl(c_e, spacer, r2);
    let amine = amine.finish();

    let mut product = MolBuilder::new();
    let p_a = product.carbon_auto();
    let p_b = product.carbon_auto();
    let p_n = product.atom(Element::N, 1);
    let p_d = product.carbon_auto();
    let p_e = product.carbon_auto();
    product.bond(p_a, p_b, BondOrder::Single);
    product.bond(p_b, p_n, BondOrder::Single);
    product.bond(p_n, p_d, BondOrder::Single);
    product.bond(p_d, p_e, BondOrder::Single);
    let p_r1_atoms = product.attach_alkyl(p_a, spacer, r1);
    let p_r2_atoms = product.attach_alkyl(p_e, spacer, r2);
    let product = product.finish();

    let amine_offset = halide.atom_count();
    let mut atom_map = BTreeMap::new();
    atom_map.insert(c_a, p_a);
    atom_map.insert(c_b, p_b);
    // bromide departs as (omitted) HBr
    atom_map.insert(amine_offset + c_e, p_e);
    atom_map.insert(amine_offset + c_d, p_d);
    atom_map.insert(amine_offset + nit, p_n);
    for (ra, pa) in r1_atoms.iter().zip(&p_r1_atoms) {
        atom_map.insert(*ra, *pa);
    }
    for (ra, pa) in r2_atoms.iter().zip(&p_r2_atoms) {
        atom_map.insert(amine_offset + ra, *pa);
    }
    let center = BTreeSet::from([c_b, br, amine_offset + nit]);
    let mut substituent_atoms = BTreeSet::new();
    substituent_atoms.extend(r1_atoms.iter().skip(spacer).copied());
    substituent_atoms.extend(r2_atoms.iter().skip(spacer).map(|&a| amine_offset + a));
    TemplateInstance {
        reaction: Reaction {
            id: String::new(),
            reactants: vec![halide, amine],
            products: vec![product],
        },
        atom_map,
        center,
        substituent_atoms,
    }
}

/// Mixed corpus over all three templates with products deduplicated by the
/// canonical graph key, so ranking pools built from it have no collisions.
/// Reaction ids are assigned sequentially.
pub fn generate_mixed_corpus(n: usize, seed: u64) -> Vec<TemplateInstance> {
    let mut out: Vec<TemplateInstance> = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    let mut round = 0u64;
    while out.len() < n && round < 200 {
        for kind in TemplateKind::ALL {
            if out.len() >= n {
                break;
            }
            let batch = generate_template_reactions(kind, 4, seed ^ (round << 8) ^ kind as u64);
            for mut inst in batch {
                if out.len() >= n {
                    break;
                }
                let key = inst
                    .reaction
                    .products
                    .iter()
                    .map(|p| p.canonical_key())
                    .collect::<Vec<_>>()
                    .join("|");
                if seen.insert(key) {
                    inst.reaction.id = out.len().to_string();
                    out.push(inst);
                }
            }
        }
        round += 1;
    }
    out
}
