#![no_main]

use libfuzzer_sys::fuzz_target;

use molr::graph::Element;
use molr::smiles::{parse_molecule, tokenize, write_smiles, TokenKind};

fuzz_target!(|data: &[u8]| {
    let Ok(input) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(graph) = parse_molecule(input) else {
        return;
    };
    // one node per atom token
    let atom_tokens = tokenize(input)
        .expect("parse implies tokenize")
        .tokens
        .iter()
        .filter(|t| matches!(t.kind, TokenKind::BareAtom | TokenKind::BracketAtom))
        .count();
    assert_eq!(graph.atom_count(), atom_tokens);
    // structural invariants
    let n = graph.atom_count();
    let mut seen = std::collections::HashSet::new();
    for bond in graph.bonds() {
        assert!(bond.a < n && bond.b < n, "bond endpoints must exist");
        assert_ne!(bond.a, bond.b, "no self-loops");
        assert!(seen.insert((bond.a, bond.b)), "at most one bond per pair");
    }
    for atom in graph.atoms() {
        assert!(atom.hydrogen_count <= 8);
    }
    // parsing is pure
    assert_eq!(parse_molecule(input).unwrap(), graph);

    // writer round trip, on the writer's supported domain: aromatic
    // wildcard atoms have no SMILES spelling in this subset, and the digit
    // pool caps simultaneously open rings
    let has_aromatic_other = graph
        .atoms()
        .iter()
        .any(|a| a.element == Element::Other && a.aromatic);
    let components = {
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for u in graph.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    };
    let back_edges = graph.bond_count() + components - n;
    if !has_aromatic_other && back_edges <= 60 {
        let written = write_smiles(&graph);
        let reparsed = parse_molecule(&written)
            .unwrap_or_else(|e| panic!("re-parse of '{}' failed: {}", written, e));
        assert_eq!(reparsed.atom_count(), graph.atom_count());
        assert_eq!(reparsed.bond_count(), graph.bond_count());
        assert_eq!(reparsed.canonical_key(), graph.canonical_key());
    }
});
