#![no_main]

use libfuzzer_sys::fuzz_target;

use molr::smiles::tokenize;

fuzz_target!(|data: &[u8]| {
    let Ok(input) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(stream) = tokenize(input) {
        // positions strictly increase and every payload is the slice of the
        // input at its recorded position
        let mut last: Option<usize> = None;
        for token in &stream.tokens {
            if let Some(prev) = last {
                assert!(token.position > prev, "positions must strictly increase");
            }
            last = Some(token.position);
            assert_eq!(
                &input[token.position..token.position + token.text.len()],
                token.text,
                "payload must be a contiguous slice of the input"
            );
        }
        // concatenated payloads rebuild the input minus stripped stereo bonds
        let rebuilt: String = stream.tokens.iter().map(|t| t.text.as_str()).collect();
        let normalized: String = input.chars().filter(|c| !matches!(c, '/' | '\\')).collect();
        assert_eq!(rebuilt, normalized);
    }
});
