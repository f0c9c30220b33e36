#![no_main]

use libfuzzer_sys::fuzz_target;

use molr::smiles::parse_reaction;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(reaction) = parse_reaction(line) {
        assert!(!reaction.reactants.is_empty());
        assert!(!reaction.products.is_empty());
        for graph in reaction.reactants.iter().chain(reaction.products.iter()) {
            assert!(graph.atom_count() > 0, "sides hold parsed molecules");
        }
    }
});
