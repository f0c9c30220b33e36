//! Property tests over randomly generated graphs, token streams, and
//! segment layouts.

use proptest::prelude::*;

use molr::graph::{Atom, Bond, BondOrder, Element, FeatureVocab, MolecularGraph};
use molr::numeric::{Matrix, Tape};
use molr::smiles::{parse_molecule, tokenize, write_smiles, TokenKind};

fn element_strategy() -> impl Strategy<Value = Element> {
    prop::sample::select(vec![
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ])
}

fn atom_strategy() -> impl Strategy<Value = Atom> {
    (element_strategy(), -2i32..=2, any::<bool>(), 0u8..=4).prop_map(
        |(element, charge, aromatic_wish, hydrogen_count)| {
            // the SMILES subset has no aromatic spelling for halogens
            let aromatic = aromatic_wish
                && matches!(
                    element,
                    Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
                );
            Atom {
                element,
                charge,
                aromatic,
                hydrogen_count,
            }
        },
    )
}

fn bond_order_strategy() -> impl Strategy<Value = BondOrder> {
    prop::sample::select(vec![
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ])
}

prop_compose! {
    fn graph_strategy(max_atoms: usize)(n in 1..=max_atoms)(
        atoms in prop::collection::vec(atom_strategy(), n),
        parents in prop::collection::vec((0usize..usize::MAX, bond_order_strategy()), n.saturating_sub(1)),
        extra in prop::collection::vec((0usize..usize::MAX, 0usize..usize::MAX, bond_order_strategy()), 0..=2),
        n in Just(n),
    ) -> MolecularGraph {
        let mut bonds = Vec::new();
        for (i, (p, order)) in parents.iter().enumerate() {
            let child = i + 1;
            bonds.push(Bond::new(child, p % child, *order));
        }
        for (a, b, order) in &extra {
            let (a, b) = (a % n, b % n);
            if a != b && !bonds.iter().any(|bd| (bd.a, bd.b) == (a.min(b), a.max(b))) {
                bonds.push(Bond::new(a, b, *order));
            }
        }
        MolecularGraph::from_parts(atoms, bonds)
    }
}

proptest! {
    // Writing any supported graph and reparsing it preserves the atom count,
    // gives one node per atom token, and lands on the same canonical key.
    #[test]
    fn written_smiles_parse_back(graph in graph_strategy(10)) {
        let text = write_smiles(&graph);
        let reparsed = parse_molecule(&text)
            .unwrap_or_else(|e| panic!("'{}' failed to parse: {}", text, e));
        let atom_tokens = tokenize(&text)
            .unwrap()
            .tokens
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::BareAtom | TokenKind::BracketAtom))
            .count();
        prop_assert_eq!(reparsed.atom_count(), atom_tokens);
        prop_assert_eq!(reparsed.atom_count(), graph.atom_count());
        prop_assert_eq!(reparsed.bond_count(), graph.bond_count());
        prop_assert_eq!(reparsed.canonical_key(), graph.canonical_key());
        // parsing is pure
        prop_assert_eq!(parse_molecule(&text).unwrap(), reparsed);
    }

    // Exactly four one-hot blocks fire for any atom under any vocab.
    #[test]
    fn encode_atom_has_four_ones(
        corpus in prop::collection::vec(graph_strategy(6), 1..4),
        atom in atom_strategy(),
    ) {
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let x = vocab.encode_atom(&atom);
        prop_assert_eq!(x.len(), vocab.total_dim());
        prop_assert_eq!(x.iter().filter(|&&v| v == 1.0).count(), 4);
        prop_assert_eq!(x.iter().filter(|&&v| v == 0.0).count(), x.len() - 4);
    }

    // Permuting rows together with their segment ids changes nothing in the
    // outputs of the segment reductions.
    #[test]
    fn segment_ops_are_permutation_equivariant(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let segments: Vec<usize> = (0..n).map(|i| (i.wrapping_mul(7).wrapping_add(seed as usize)) % 3.min(n)).collect();
        let n_segments = 3.min(n);
        // make every segment non-empty for segment_max
        let mut segments = segments;
        for s in 0..n_segments {
            segments[s % n] = s;
        }
        let perm: Vec<usize> = {
            // deterministic permutation derived from the seed
            let mut p: Vec<usize> = (0..n).collect();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                p.swap(i, (state as usize) % (i + 1));
            }
            p
        };
        let base = Matrix::from_rows(&rows).unwrap();
        let permuted_rows: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let permuted_segments: Vec<usize> = perm.iter().map(|&i| segments[i]).collect();
        let permuted = Matrix::from_rows(&permuted_rows).unwrap();

        let mut tape = Tape::new();
        let a = tape.input(base);
        let b = tape.input(permuted);
        let sum_a = tape.segment_sum(a, &segments, n_segments).unwrap();
        let sum_b = tape.segment_sum(b, &permuted_segments, n_segments).unwrap();
        let max_a = tape.segment_max(a, &segments, n_segments).unwrap();
        let max_b = tape.segment_max(b, &permuted_segments, n_segments).unwrap();
        for s in 0..n_segments {
            for c in 0..3 {
                prop_assert!((tape.value(sum_a).get(s, c) - tape.value(sum_b).get(s, c)).abs() < 1e-9);
                prop_assert_eq!(tape.value(max_a).get(s, c), tape.value(max_b).get(s, c));
            }
        }
        // one segment over everything is the column sum
        let ones = tape.segment_sum(a, &vec![0; n], 1).unwrap();
        for c in 0..3 {
            let direct: f64 = rows.iter().map(|r| r[c]).sum();
            prop_assert!((tape.value(ones).get(0, c) - direct).abs() < 1e-9);
        }
    }

    // Exact GED is symmetric and zero on identical graphs.
    #[test]
    fn ged_symmetric_and_reflexive(
        a in graph_strategy(4),
        b in graph_strategy(4),
    ) {
        let ab = molr::ged::ged_exact(&a, &b, 8).unwrap();
        let ba = molr::ged::ged_exact(&b, &a, 8).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(molr::ged::ged_exact(&a, &a, 8).unwrap(), 0);
        prop_assert_eq!(molr::ged::ged_exact(&b, &b, 8).unwrap(), 0);
    }
}
