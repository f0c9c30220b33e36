//! Replays the checked-in fuzz corpus seeds through the same invariants the
//! fuzz targets assert, so `cargo test` keeps the seeds and the target logic
//! honest without a libFuzzer run.

use std::path::PathBuf;

use molr::smiles::{parse_molecule, parse_reaction, tokenize, write_smiles, TokenKind};
use molr::train::{decode_weights, Manifest};

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target)
}

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = corpus_dir(target);
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{}: {}", dir.display(), e)) {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            ));
        }
    }
    assert!(!out.is_empty(), "no seeds for {}", target);
    out.sort();
    out
}

#[test]
fn tokenize_seeds_uphold_token_invariants() {
    for (name, bytes) in seeds("tokenize") {
        let input = String::from_utf8(bytes).expect("seeds are ascii");
        let stream = tokenize(&input).unwrap_or_else(|e| panic!("{}: {}", name, e));
        let mut last: Option<usize> = None;
        for token in &stream.tokens {
            if let Some(prev) = last {
                assert!(token.position > prev);
            }
            last = Some(token.position);
            assert_eq!(
                &input[token.position..token.position + token.text.len()],
                token.text
            );
        }
        let rebuilt: String = stream.tokens.iter().map(|t| t.text.as_str()).collect();
        let normalized: String = input.chars().filter(|c| !matches!(c, '/' | '\\')).collect();
        assert_eq!(rebuilt, normalized, "{}", name);
    }
}

#[test]
fn parse_molecule_seeds_round_trip() {
    for (name, bytes) in seeds("parse_molecule") {
        let input = String::from_utf8(bytes).expect("seeds are ascii");
        let graph = parse_molecule(&input).unwrap_or_else(|e| panic!("{}: {}", name, e));
        let atom_tokens = tokenize(&input)
            .unwrap()
            .tokens
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::BareAtom | TokenKind::BracketAtom))
            .count();
        assert_eq!(graph.atom_count(), atom_tokens, "{}", name);
        for bond in graph.bonds() {
            assert!(bond.a < graph.atom_count() && bond.b < graph.atom_count());
            assert_ne!(bond.a, bond.b);
        }
        let written = write_smiles(&graph);
        let reparsed =
            parse_molecule(&written).unwrap_or_else(|e| panic!("{} -> '{}': {}", name, written, e));
        assert_eq!(reparsed.canonical_key(), graph.canonical_key(), "{}", name);
    }
}

#[test]
fn parse_reaction_seeds_have_both_sides() {
    for (name, bytes) in seeds("parse_reaction") {
        let line = String::from_utf8(bytes).expect("seeds are ascii");
        let reaction = parse_reaction(&line).unwrap_or_else(|e| panic!("{}: {}", name, e));
        assert!(!reaction.reactants.is_empty(), "{}", name);
        assert!(!reaction.products.is_empty(), "{}", name);
    }
}

#[test]
fn checkpoint_seeds_decode_or_error_cleanly() {
    let mut decoded_ok = 0;
    for (name, data) in seeds("checkpoint_decode") {
        assert!(data.len() >= 2, "{}", name);
        let manifest_len = u16::from_le_bytes([data[0], data[1]]) as usize;
        let rest = &data[2..];
        assert!(manifest_len <= rest.len(), "{}", name);
        let (manifest_bytes, blob) = rest.split_at(manifest_len);
        let manifest =
            Manifest::from_json(std::str::from_utf8(manifest_bytes).expect("seeds are utf8"))
                .unwrap_or_else(|e| panic!("{}: {}", name, e));
        if decode_weights(&manifest, blob).is_ok() {
            decoded_ok += 1;
        }
    }
    assert!(decoded_ok >= 1, "at least one seed must decode fully");
}
