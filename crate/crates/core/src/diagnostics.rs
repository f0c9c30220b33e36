//! Runtime invariant suites behind the `check` command: gradient correctness
//! against finite differences, permutation invariance, locality of the
//! reactant-product residual (so substituent swaps far from the reaction
//! center leave it untouched), and composability of trained embeddings.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{generate_alkyl_tree, generate_template_reactions, TemplateKind};
use crate::encoder::{
    encode_molecule, encode_side, encode_side_on_tape, EncoderConfig, EncoderWeights, GnnKind,
    Readout,
};
use crate::graph::{Atom, BondOrder, Element, FeatureVocab, MolecularGraph, Reaction};
use crate::numeric::{AdamState, Matrix, Tape};
use crate::train::{batch_loss, batch_loss_on_tape, TrainError};

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckReport {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Every suite, in a fixed order. Seeds are offsets from `seed` so the whole
/// run is reproducible.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>, TrainError> {
    let mut reports = Vec::new();
    for kind in GnnKind::ALL {
        reports.push(gradient_check(kind, seed)?);
    }
    for kind in GnnKind::ALL {
        reports.push(permutation_check(kind, 100, seed ^ 0x51)?);
    }
    reports.push(residual_locality_check(&[seed, seed + 1, seed + 2])?);
    reports.push(composability_check(seed ^ 0xa5)?);
    Ok(reports)
}

/// Random attributed graph: a tree over C/N/O with random bond orders and
/// small hydrogen counts. Not chemically valid; the encoders do not care.
pub fn random_molecule(rng: &mut ChaCha8Rng, max_atoms: usize) -> MolecularGraph {
    let elements = [Element::C, Element::N, Element::O];
    let orders = [BondOrder::Single, BondOrder::Double, BondOrder::Aromatic];
    let n = rng.random_range(1..=max_atoms);
    let mut g = MolecularGraph::new();
    for _ in 0..n {
        g.add_atom(Atom {
            element: elements[rng.random_range(0..elements.len())],
            charge: 0,
            aromatic: rng.random_range(0..4) == 0,
            hydrogen_count: rng.random_range(0..3),
        });
    }
    for i in 1..n {
        let j = rng.random_range(0..i);
        g.add_bond(i, j, orders[rng.random_range(0..orders.len())]);
    }
    // occasionally close a ring
    if n >= 4 && rng.random_range(0..2) == 0 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && g.bond_order(a, b).is_none() {
            g.add_bond(a, b, BondOrder::Single);
        }
    }
    g
}

fn random_reactions(rng: &mut ChaCha8Rng, n_graphs: usize, max_atoms: usize) -> Vec<Reaction> {
    let graphs: Vec<MolecularGraph> = (0..n_graphs)
        .map(|_| random_molecule(rng, max_atoms))
        .collect();
    // pair graphs into reactions: two reactants, one product, cycling
    let mut reactions = Vec::new();
    let mut i = 0;
    while i + 2 < graphs.len() {
        reactions.push(Reaction {
            id: reactions.len().to_string(),
            reactants: vec![graphs[i].clone(), graphs[i + 1].clone()],
            products: vec![graphs[i + 2].clone()],
        });
        i += 3;
    }
    if reactions.len() < 2 {
        reactions.push(Reaction {
            id: "pad".into(),
            reactants: vec![graphs[0].clone()],
            products: vec![graphs[n_graphs - 1].clone()],
        });
    }
    reactions
}

/// Analytic batch-loss gradients vs central finite differences (h = 1e-5)
/// over every parameter, on small random graphs at dim 8.
pub fn gradient_check(kind: GnnKind, seed: u64) -> Result<CheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(kind as u64));
    let reactions = random_reactions(&mut rng, 5, 6);
    let corpus: Vec<MolecularGraph> = reactions
        .iter()
        .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
        .collect();
    let vocab = FeatureVocab::build(&corpus)?;
    let config = EncoderConfig {
        gnn_kind: kind,
        dims: vec![8, 8],
        gat_heads: 2,
        tag_filter: 2,
        readout: Readout::Sum,
    };
    let margin = 1.0;
    let weights = EncoderWeights::init(&config, vocab.total_dim(), seed ^ 0xdead)?;

    let mut tape = Tape::new();
    let bound = weights.bind(&mut tape);
    let loss = batch_loss_on_tape(&mut tape, &reactions, &vocab, &config, margin, &bound)?;
    let vars: BTreeMap<String, _> = bound.vars.clone();
    let grads = tape.backward(loss)?;

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    for (name, var) in &vars {
        let analytic = grads.get(*var);
        for i in 0..weights.params[name].data().len() {
            let mut wp = weights.clone();
            wp.params.get_mut(name).unwrap().data_mut()[i] += h;
            let mut wm = weights.clone();
            wm.params.get_mut(name).unwrap().data_mut()[i] -= h;
            let lp = batch_loss(&reactions, &vocab, &config, margin, &wp)?;
            let lm = batch_loss(&reactions, &vocab, &config, margin, &wm)?;
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{}[{}]: analytic {:.3e} vs fd {:.3e}", name, i, a, fd);
            }
        }
    }
    let passed = max_rel < 1e-5;
    Ok(CheckReport::new(
        &format!("gradient/{}", kind.name()),
        passed,
        format!("max relative error {:.3e} ({})", max_rel, worst),
    ))
}

/// Embeddings must not move under atom relabeling (1e-9 relative).
pub fn permutation_check(kind: GnnKind, cases: usize, seed: u64) -> Result<CheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(kind as u64) ^ 0x7177);
    let mut max_rel = 0.0f64;
    for case in 0..cases {
        let g = random_molecule(&mut rng, 10);
        let n = g.atom_count();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let permuted = g.permute_atoms(&perm)?;
        let vocab = FeatureVocab::build(std::slice::from_ref(&g))?;
        let config = EncoderConfig::desk(kind, 16);
        let weights = EncoderWeights::init(&config, vocab.total_dim(), seed + case as u64)?;
        let e1 = encode_molecule(&g, &vocab, &config, &weights)?;
        let e2 = encode_molecule(&permuted, &vocab, &config, &weights)?;
        let norm = e1.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for (a, b) in e1.iter().zip(&e2) {
            max_rel = max_rel.max((a - b).abs() / norm);
        }
    }
    let passed = max_rel <= 1e-9;
    Ok(CheckReport::new(
        &format!("permutation/{}", kind.name()),
        passed,
        format!("{} cases, max relative difference {:.3e}", cases, max_rel),
    ))
}

/// With sum readout and K = 2, the reactant-minus-product embedding residual
/// of a template reaction must not depend on substituents attached at
/// distance >= 2 from the center (checked across 10 substituent draws),
/// while an element mutation at distance 1 must move it.
pub fn residual_locality_check(seeds: &[u64]) -> Result<CheckReport, TrainError> {
    let mut worst_spread = 0.0f64;
    let mut weakest_mutation = f64::INFINITY;
    for &seed in seeds {
        let instances = generate_template_reactions(TemplateKind::Esterification, 10, seed);
        let corpus: Vec<MolecularGraph> = instances
            .iter()
            .flat_map(|t| {
                t.reaction
                    .reactants
                    .iter()
                    .chain(t.reaction.products.iter())
                    .cloned()
            })
            .collect();
        let vocab = FeatureVocab::build(&corpus)?;
        let config = EncoderConfig {
            gnn_kind: GnnKind::Gcn,
            dims: vec![64, 64],
            gat_heads: 1,
            tag_filter: 2,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, vocab.total_dim(), seed ^ 0x9bd1)?;

        let residual_of = |r: &Reaction| -> Result<Vec<f64>, TrainError> {
            let hr = encode_side(&r.reactants, &vocab, &config, &weights)?;
            let hp = encode_side(&r.products, &vocab, &config, &weights)?;
            Ok(hr.iter().zip(&hp).map(|(a, b)| a - b).collect())
        };

        let reference = residual_of(&instances[0].reaction)?;
        for inst in &instances[1..] {
            let residual = residual_of(&inst.reaction)?;
            for (a, b) in reference.iter().zip(&residual) {
                worst_spread = worst_spread.max((a - b).abs());
            }
        }

        let mutated = instances[0]
            .mutate_element_at_distance(1, Element::S)
            .expect("esterification core has atoms at distance 1");
        let mutated_residual = residual_of(&mutated.reaction)?;
        let change = reference
            .iter()
            .zip(&mutated_residual)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        weakest_mutation = weakest_mutation.min(change);
    }
    let passed = worst_spread <= 1e-8 && weakest_mutation > 1e-6;
    Ok(CheckReport::new(
        "residual-locality/gcn",
        passed,
        format!(
            "residual spread across substituents {:.3e} (<= 1e-8), weakest distance-1 mutation response {:.3e} (> 1e-6)",
            worst_spread, weakest_mutation
        ),
    ))
}

/// Trains two chained reactions A -> B and B -> C to near-zero positive
/// residual by direct residual descent, then verifies the embedding-level
/// transitivity bound ||sum(A) - sum(C)|| <= res(A,B) + res(B,C) + 1e-9.
pub fn composability_check(seed: u64) -> Result<CheckReport, TrainError> {
    let instance = &generate_template_reactions(TemplateKind::Esterification, 1, seed)[0];
    let side_a = instance.reaction.reactants.clone();
    let side_b = instance.reaction.products.clone();
    let side_c = vec![
        generate_alkyl_tree(6, seed ^ 0x11).expect("size in range"),
        generate_alkyl_tree(3, seed ^ 0x12).expect("size in range"),
    ];
    let corpus: Vec<MolecularGraph> = side_a
        .iter()
        .chain(side_b.iter())
        .chain(side_c.iter())
        .cloned()
        .collect();
    let vocab = FeatureVocab::build(&corpus)?;
    let config = EncoderConfig::desk(GnnKind::Gcn, 16);
    let mut weights = EncoderWeights::init(&config, vocab.total_dim(), seed)?;
    let mut adam = AdamState::new(1e-2);

    let mut positive = f64::INFINITY;
    for step in 0..6000 {
        if step > 0 && step % 1000 == 0 {
            adam.learning_rate *= 0.3;
        }
        let mut tape = Tape::new();
        let bound = weights.bind(&mut tape);
        let a = encode_side_on_tape(&mut tape, &side_a, &vocab, &config, &bound)?;
        let b1 = encode_side_on_tape(&mut tape, &side_b, &vocab, &config, &bound)?;
        let b2 = encode_side_on_tape(&mut tape, &side_b, &vocab, &config, &bound)?;
        let c = encode_side_on_tape(&mut tape, &side_c, &vocab, &config, &bound)?;
        let d1 = tape.sub(a, b1)?;
        let d2 = tape.sub(b2, c)?;
        let n1 = tape.norm2(d1);
        let n2 = tape.norm2(d2);
        positive = tape.value(n1).get(0, 0) + tape.value(n2).get(0, 0);
        if positive < 1e-3 {
            break;
        }
        // descend on the squared residuals: smooth at the optimum, so Adam
        // settles instead of orbiting it
        let sq1 = tape.matmul(n1, n1)?;
        let sq2 = tape.matmul(n2, n2)?;
        let loss = tape.add(sq1, sq2)?;
        let vars = bound.vars.clone();
        let grads = tape.backward(loss)?;
        let named: BTreeMap<String, Matrix> = vars
            .iter()
            .map(|(name, &var)| (name.clone(), grads.get(var).clone()))
            .collect();
        adam.step(&mut weights.params, &named)?;
    }

    let ea = encode_side(&side_a, &vocab, &config, &weights)?;
    let eb = encode_side(&side_b, &vocab, &config, &weights)?;
    let ec = encode_side(&side_c, &vocab, &config, &weights)?;
    let res_ab = crate::numeric::l2_distance(&ea, &eb);
    let res_bc = crate::numeric::l2_distance(&eb, &ec);
    let res_ac = crate::numeric::l2_distance(&ea, &ec);
    let trained = positive < 1e-3;
    let transitive = res_ac <= res_ab + res_bc + 1e-9;
    Ok(CheckReport::new(
        "composability",
        trained && transitive,
        format!(
            "positive residual sum {:.3e} (< 1e-3), ||A-C|| = {:.3e} <= {:.3e} + {:.3e} + 1e-9",
            positive, res_ac, res_ab, res_bc
        ),
    ))
}
